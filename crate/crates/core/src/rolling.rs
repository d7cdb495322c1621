//! Fix-and-slide simulation of one operating day: solve a window, freeze its
//! first hour, carry the state forward and repeat.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::pipeline::DayForecaster;
use crate::lac_models::{build_variant, solve_window, LacInstance, LacModel, LacOptions, ModelVariant};
use crate::milp::{MilpSolution, SolveOptions};
use crate::psh_model::soc_step;
use crate::system::{MarketDay, PriceScenarioSet, PshMode, System};

/// Source of post-window price information at a forecast origin.
pub trait ScenarioSource: Sync {
    /// `count` trajectories for hours `origin + 1 ..= T`.
    fn scenarios(&self, origin: usize, count: usize) -> Result<PriceScenarioSet<f64>>;
    /// The single point-forecast trajectory.
    fn point(&self, origin: usize) -> Result<PriceScenarioSet<f64>>;
}

impl ScenarioSource for DayForecaster<'_> {
    fn scenarios(&self, origin: usize, count: usize) -> Result<PriceScenarioSet<f64>> {
        DayForecaster::scenarios(self, origin, count)
    }

    fn point(&self, origin: usize) -> Result<PriceScenarioSet<f64>> {
        self.point_set(origin)
    }
}

/// Precomputed sets keyed by origin, e.g. read from scenario files. An
/// origin without its own set falls back to the latest earlier one,
/// restricted to the requested hours.
#[derive(Debug, Clone, Default)]
pub struct FixedScenarios {
    pub sets: Vec<PriceScenarioSet<f64>>,
    pub points: Vec<PriceScenarioSet<f64>>,
}

fn latest(sets: &[PriceScenarioSet<f64>], origin: usize, what: &str) -> Result<PriceScenarioSet<f64>> {
    sets.iter()
        .filter(|s| s.forecast_origin <= origin && s.last_hour > origin)
        .max_by_key(|s| s.forecast_origin)
        .map(|s| s.restrict_from(origin + 1))
        .ok_or_else(|| Error::config(format!("no {what} available at forecast origin {origin}")))
}

impl ScenarioSource for FixedScenarios {
    fn scenarios(&self, origin: usize, count: usize) -> Result<PriceScenarioSet<f64>> {
        let set = latest(&self.sets, origin, "price scenarios")?;
        if set.len() < count {
            return Err(Error::config(format!(
                "scenario file at origin {} holds {} trajectories, {count} requested",
                set.forecast_origin,
                set.len()
            )));
        }
        Ok(set.truncate(count))
    }

    fn point(&self, origin: usize) -> Result<PriceScenarioSet<f64>> {
        latest(&self.points, origin, "point forecast")
    }
}

/// Uses the sets drawn at origin 0 for every window.
pub struct ReuseFirst<'a, S: ScenarioSource + ?Sized> {
    inner: &'a S,
    count: usize,
    sets: std::sync::OnceLock<Result<(PriceScenarioSet<f64>, PriceScenarioSet<f64>)>>,
}

impl<'a, S: ScenarioSource + ?Sized> ReuseFirst<'a, S> {
    pub fn new(inner: &'a S, count: usize) -> Self {
        ReuseFirst {
            inner,
            count,
            sets: std::sync::OnceLock::new(),
        }
    }

    fn first(&self) -> Result<&(PriceScenarioSet<f64>, PriceScenarioSet<f64>)> {
        self.sets
            .get_or_init(|| Ok((self.inner.scenarios(0, self.count)?, self.inner.point(0)?)))
            .as_ref()
            .map_err(|e| Error::config(e.to_string()))
    }
}

impl<S: ScenarioSource + ?Sized> ScenarioSource for ReuseFirst<'_, S> {
    fn scenarios(&self, origin: usize, count: usize) -> Result<PriceScenarioSet<f64>> {
        Ok(self.first()?.0.restrict_from(origin + 1).truncate(count))
    }

    fn point(&self, origin: usize) -> Result<PriceScenarioSet<f64>> {
        Ok(self.first()?.1.restrict_from(origin + 1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RollingConfig {
    /// Window length `L`; `None` takes the system grid's value.
    pub window: Option<usize>,
    pub scenarios: usize,
    pub voll: f64,
    pub end_soc: crate::psh_model::EndSoc,
    pub tie_break: f64,
    pub solver: SolveOptions,
}

impl Default for RollingConfig {
    fn default() -> Self {
        let o = LacOptions::<f64>::default();
        RollingConfig {
            window: None,
            scenarios: 10,
            voll: o.voll,
            end_soc: o.end_soc,
            tie_break: o.tie_break,
            solver: SolveOptions::default(),
        }
    }
}

impl RollingConfig {
    fn lac_options(&self) -> LacOptions<f64> {
        LacOptions {
            voll: self.voll,
            end_soc: self.end_soc,
            tie_break: self.tie_break,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    pub id: String,
    pub committed: bool,
    pub output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PshState {
    pub id: String,
    pub mode: PshMode,
    pub gen: f64,
    pub pump: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocState {
    pub id: String,
    /// Storage at the start of the hour.
    pub start: f64,
    /// Storage at the end of the hour.
    pub end: f64,
}

/// Decisions of one hour as frozen by the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenHour {
    pub hour: usize,
    /// Window whose solve fixed this hour, counted from 1.
    pub window: usize,
    pub thermal: Vec<ThermalState>,
    pub psh: Vec<PshState>,
    pub soc: Vec<SocState>,
    pub shortfall: f64,
    pub surplus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub window: usize,
    pub t1: usize,
    pub te: usize,
    pub status: String,
    pub objective: f64,
    pub walltime_s: f64,
    pub rows: usize,
    pub cols: usize,
    pub nonzeros: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationLedger {
    pub variant: ModelVariant,
    pub day: String,
    pub hours: Vec<FrozenHour>,
    pub windows: Vec<WindowRecord>,
}

impl SimulationLedger {
    /// Net PSH injection of unit `g` per hour.
    pub fn psh_net(&self, g: usize) -> Vec<f64> {
        self.hours.iter().map(|h| h.psh[g].gen - h.psh[g].pump).collect()
    }

    /// `(gen, pump)` of every unit per hour, `[unit][hour - 1]`.
    pub fn psh_dispatch(&self) -> Vec<Vec<(f64, f64)>> {
        let units = self.hours.first().map_or(0, |h| h.psh.len());
        (0..units)
            .map(|g| self.hours.iter().map(|h| (h.psh[g].gen, h.psh[g].pump)).collect())
            .collect()
    }

    /// Thermal commitments `[unit][hour - 1]`.
    pub fn commitments(&self) -> Vec<Vec<bool>> {
        let units = self.hours.first().map_or(0, |h| h.thermal.len());
        (0..units)
            .map(|g| self.hours.iter().map(|h| h.thermal[g].committed).collect())
            .collect()
    }

    /// One JSON object per frozen hour. Timing is left out so that equal
    /// inputs give equal bytes.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for h in &self.hours {
            let line = serde_json::json!({
                "variant": self.variant,
                "day": self.day,
                "record": h,
            });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        Ok(String::from_utf8(buf).expect("json is utf-8"))
    }

    /// Reads a ledger written by [`SimulationLedger::write_jsonl`]. Window
    /// records are not part of that format and come back empty.
    pub fn read_jsonl<R: std::io::BufRead>(input: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Line {
            variant: ModelVariant,
            day: String,
            record: FrozenHour,
        }
        let mut ledger: Option<SimulationLedger> = None;
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            let l = ledger.get_or_insert_with(|| SimulationLedger {
                variant: rec.variant,
                day: rec.day.clone(),
                hours: Vec::new(),
                windows: Vec::new(),
            });
            if l.variant != rec.variant || l.day != rec.day {
                return Err(Error::Parse {
                    line: n + 1,
                    message: "ledger mixes variants or days".into(),
                });
            }
            l.hours.push(rec.record);
        }
        ledger.ok_or_else(|| Error::Parse {
            line: 0,
            message: "empty ledger".into(),
        })
    }

    pub fn write_metrics_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["window", "t1", "status", "objective", "walltime_s", "rows", "cols", "nonzeros"])
            .map_err(csv_err)?;
        for r in &self.windows {
            w.write_record([
                r.window.to_string(),
                r.t1.to_string(),
                r.status.clone(),
                format!("{:.6}", r.objective),
                format!("{:.6}", r.walltime_s),
                r.rows.to_string(),
                r.cols.to_string(),
                r.nonzeros.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Largest gap between frozen storage and the storage implied by the
    /// frozen dispatch, plus any break in the hour sequence.
    pub fn continuity_error(&self, system: &System<f64>) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (k, h) in self.hours.iter().enumerate() {
            if h.hour != k + 1 {
                return Err(Error::Domain(format!("ledger hour {} found at position {}", h.hour, k + 1)));
            }
            let flows: Vec<(usize, f64, f64)> = h.psh.iter().enumerate().map(|(g, p)| (g, p.gen, p.pump)).collect();
            for (r, s) in h.soc.iter().enumerate() {
                worst = worst.max((soc_step(system, r, s.start, &flows) - s.end).abs());
                if k > 0 {
                    worst = worst.max((self.hours[k - 1].soc[r].end - s.start).abs());
                }
            }
        }
        Ok(worst)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Information a window is allowed to see: actual net load of its own
/// hours. Prices after the window come only from a scenario source.
pub fn reveal_policy(day: &MarketDay<f64>, t1: usize, te: usize) -> Result<&[f64]> {
    if t1 < 1 || te < t1 || te > day.net_load.len() {
        return Err(Error::config(format!(
            "window [{t1}, {te}] lies outside the {}-hour day",
            day.net_load.len()
        )));
    }
    Ok(&day.net_load[t1 - 1..te])
}

/// Rounds solver noise and clips dispatch into the box of the chosen mode.
fn tidy(v: f64, lo: f64, hi: f64) -> f64 {
    let v = (v * 1e6).round() / 1e6;
    v.clamp(lo, hi)
}

fn freeze_hour(
    system: &System<f64>,
    lm: &LacModel<f64>,
    sol: &MilpSolution,
    hour: usize,
    window: usize,
    soc: &mut [f64],
) -> FrozenHour {
    let k = hour - lm.t1;
    let thermal = system
        .thermal
        .iter()
        .zip(&lm.thermal)
        .map(|(u, hv)| ThermalState {
            id: u.id.clone(),
            committed: sol.value(hv[k].u) > 0.5,
            output: tidy(sol.value(hv[k].p), 0.0, u.p_max),
        })
        .collect();
    let psh: Vec<PshState> = system
        .psh
        .iter()
        .enumerate()
        .map(|(g, u)| {
            let hv = &lm.psh.window[g][k];
            let mode = PshMode::ALL
                .into_iter()
                .max_by(|a, b| sol.value(hv.mode(*a)).total_cmp(&sol.value(hv.mode(*b))))
                .unwrap();
            let (gen, pump) = match mode {
                PshMode::Gen => (tidy(sol.value(hv.q_gen), u.gen_min, u.gen_max), 0.0),
                PshMode::Pump => (0.0, tidy(sol.value(hv.q_pump), u.pump_min, u.pump_max)),
                PshMode::Offline => (0.0, 0.0),
            };
            PshState {
                id: u.id.clone(),
                mode,
                gen,
                pump,
            }
        })
        .collect();
    let flows: Vec<(usize, f64, f64)> = psh.iter().enumerate().map(|(g, p)| (g, p.gen, p.pump)).collect();
    let soc_states = system
        .reservoirs
        .iter()
        .enumerate()
        .map(|(r, res)| {
            let start = soc[r];
            let end = soc_step(system, r, start, &flows);
            // Keep the carried state inside the column bounds of the next window.
            soc[r] = end.clamp(res.e_min, res.e_max);
            SocState {
                id: res.id.clone(),
                start,
                end,
            }
        })
        .collect();
    FrozenHour {
        hour,
        window,
        thermal,
        psh,
        soc: soc_states,
        shortfall: tidy(sol.value(lm.shortfall[k]), 0.0, f64::INFINITY),
        surplus: tidy(sol.value(lm.surplus[k]), 0.0, f64::INFINITY),
    }
}

/// Runs one variant over the day. `system` must carry day-ahead schedules
/// and commitments. Forecast-driven variants need `source`.
pub fn run_day(
    system: &System<f64>,
    day: &MarketDay<f64>,
    variant: ModelVariant,
    source: Option<&dyn ScenarioSource>,
    config: &RollingConfig,
) -> Result<SimulationLedger> {
    run_day_observed(system, day, variant, source, config, &mut |_, _, _| {})
}

/// [`run_day`] that hands every solved window model to `observe` before
/// its first hour is frozen, with the price set it was built on.
pub fn run_day_observed(
    system: &System<f64>,
    day: &MarketDay<f64>,
    variant: ModelVariant,
    source: Option<&dyn ScenarioSource>,
    config: &RollingConfig,
    observe: &mut dyn FnMut(&LacModel<f64>, Option<&PriceScenarioSet<f64>>, &MilpSolution),
) -> Result<SimulationLedger> {
    let horizon_end = system.hours();
    let window = config.window.unwrap_or(system.grid.window_length);
    if window == 0 || window > horizon_end {
        return Err(Error::config(format!("window length {window} must lie in 1..={horizon_end}")));
    }
    if day.net_load.len() != horizon_end {
        return Err(Error::config(format!(
            "day {} has {} load values for a {horizon_end}-hour system",
            day.label,
            day.net_load.len()
        )));
    }
    let options = config.lac_options();
    let mut soc: Vec<f64> = system.reservoirs.iter().map(|r| r.e_initial).collect();
    let mut previous: Vec<PshMode> = system.psh.iter().map(|u| u.initial_mode).collect();
    let mut ledger = SimulationLedger {
        variant,
        day: day.label.clone(),
        hours: Vec::with_capacity(horizon_end),
        windows: Vec::new(),
    };
    let starts: Vec<usize> = if variant == ModelVariant::Perfect {
        vec![1]
    } else {
        (1..=horizon_end + 1 - window).collect()
    };
    for (w, &t1) in starts.iter().enumerate() {
        let te = if variant == ModelVariant::Perfect { horizon_end } else { t1 + window - 1 };
        let origin = t1 - 1;
        let set = if variant.uses_forecast() && te < horizon_end {
            let src = source.ok_or_else(|| Error::config(format!("{variant} simulation needs price scenarios")))?;
            Some(match variant {
                ModelVariant::Deterministic => src.point(origin)?,
                _ => src.scenarios(origin, config.scenarios)?,
            })
        } else {
            None
        };
        let inst = LacInstance {
            system,
            t1,
            te,
            net_load: reveal_policy(day, t1, te)?,
            initial_soc: soc.clone(),
            previous_mode: previous.clone(),
            scenarios: set.as_ref(),
            options: options.clone(),
        };
        let started = Instant::now();
        let lm = build_variant(variant, &inst, Some(&day.net_load))?;
        let sol = solve_window(&lm, &config.solver)
            .map_err(|e| Error::Infeasible(format!("day {}, window {} (hours {t1}..{te}): {e}", day.label, w + 1)))?;
        let walltime = started.elapsed().as_secs_f64();
        observe(&lm, set.as_ref(), &sol);
        let stats = lm.model.stats();
        ledger.windows.push(WindowRecord {
            window: w + 1,
            t1,
            te,
            status: sol.status.label().to_string(),
            objective: sol.objective,
            walltime_s: walltime,
            rows: stats.rows,
            cols: stats.cols,
            nonzeros: stats.nonzeros,
        });
        let last = if te == horizon_end { te } else { t1 };
        for hour in t1..=last {
            let frozen = freeze_hour(system, &lm, &sol, hour, w + 1, &mut soc);
            previous = frozen.psh.iter().map(|p| p.mode).collect();
            ledger.hours.push(frozen);
        }
    }
    Ok(ledger)
}

/// Runs several variants of the same day on worker threads. Results keep
/// the order of `variants`.
pub fn run_variants(
    system: &System<f64>,
    day: &MarketDay<f64>,
    variants: &[ModelVariant],
    source: Option<&dyn ScenarioSource>,
    config: &RollingConfig,
) -> Vec<Result<SimulationLedger>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = variants
            .iter()
            .map(|&v| scope.spawn(move || run_day(system, day, v, source, config)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Solver("simulation worker panicked".into()))))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lac_models::{build_da_reference, DaOptions};
    use crate::synth::{generate, SynthConfig};

    fn setup() -> (System<f64>, MarketDay<f64>) {
        let inst = generate(&SynthConfig {
            hours: 8,
            window: 3,
            thermal_units: 3,
            psh_units: 1,
            history_days: 1,
            ..SynthConfig::default()
        })
        .unwrap();
        let da = build_da_reference(&inst.system, &inst.day.da_load, &inst.day.da_lmp, &DaOptions::default(), &SolveOptions::default())
            .unwrap();
        (da.system, inst.day)
    }

    #[test]
    fn reveal_slices_window() {
        let (_, day) = setup();
        assert_eq!(reveal_policy(&day, 2, 4).unwrap(), &day.net_load[1..4]);
        assert!(reveal_policy(&day, 7, 9).is_err());
    }

    #[test]
    fn current_practice_freezes_da_schedule() {
        let (sys, day) = setup();
        let ledger = run_day(&sys, &day, ModelVariant::CurrentPractice, None, &RollingConfig::default()).unwrap();
        assert_eq!(ledger.windows.len(), 8 - 3 + 1);
        assert_eq!(ledger.hours.len(), 8);
        let u = &sys.psh[0];
        for h in &ledger.hours {
            assert_eq!(h.psh[0].gen, u.da_gen[h.hour - 1]);
            assert_eq!(h.psh[0].pump, u.da_pump[h.hour - 1]);
        }
        assert!(ledger.continuity_error(&sys).unwrap() < 1e-6);
    }

    #[test]
    fn jsonl_round_trip() {
        let (sys, day) = setup();
        let ledger = run_day(&sys, &day, ModelVariant::CurrentPractice, None, &RollingConfig::default()).unwrap();
        let text = ledger.to_jsonl().unwrap();
        let back = SimulationLedger::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back.hours, ledger.hours);
        assert_eq!(back.to_jsonl().unwrap(), text);
    }

    #[test]
    fn full_window_is_one_solve() {
        let (sys, day) = setup();
        let cfg = RollingConfig {
            window: Some(8),
            ..RollingConfig::default()
        };
        let ledger = run_day(&sys, &day, ModelVariant::Stochastic, None, &cfg).unwrap();
        assert_eq!(ledger.windows.len(), 1);
        let perfect = run_day(&sys, &day, ModelVariant::Perfect, None, &cfg).unwrap();
        assert!((ledger.windows[0].objective - perfect.windows[0].objective).abs() < 1e-6);
    }

    #[test]
    fn forecast_variant_without_source_fails() {
        let (sys, day) = setup();
        let err = run_day(&sys, &day, ModelVariant::Robust, None, &RollingConfig::default()).unwrap_err();
        assert!(err.to_string().contains("scenarios"), "{err}");
    }
}
