//! Evaluation of simulated days: realized prices and cost, PSH profit
//! against the day-ahead position, variant comparison and model scaling.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lac_models::{add_power_balance, add_thermal_block, Commitment, ModelVariant};
use crate::milp::{fix_and_resolve_lp, MilpModel, ModelStats, SolveOptions, VarKind};
use crate::rolling::SimulationLedger;
use crate::system::{MarketDay, PshMode, System};

/// Outcome of re-solving the day on actual load with frozen decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub variant: ModelVariant,
    /// Balance duals per hour, $/MWh.
    pub lmp: Vec<f64>,
    /// Production cost, commitment cost, PSH mode entry cost and slack
    /// penalties.
    pub objective: f64,
    /// `[unit][hour - 1]`.
    pub thermal_output: Vec<Vec<f64>>,
    pub shortfall: Vec<f64>,
    pub surplus: Vec<f64>,
}

/// PSH mode entry costs implied by the frozen mode sequence.
pub fn psh_entry_cost(ledger: &SimulationLedger, system: &System<f64>) -> f64 {
    let mut total = 0.0;
    for (g, unit) in system.psh.iter().enumerate() {
        let mut prev = unit.initial_mode;
        for h in &ledger.hours {
            let m = h.psh[g].mode;
            if m != prev && m != PshMode::Offline {
                total += unit.entry_cost(m);
            }
            prev = m;
        }
    }
    total
}

/// Fixes every commitment to the ledger, holds PSH injections at their
/// frozen values and solves the full-day dispatch LP on actual load. The
/// balance duals are the realized prices.
pub fn realized_lmp(
    ledger: &SimulationLedger,
    system: &System<f64>,
    day: &MarketDay<f64>,
    voll: f64,
    options: &SolveOptions,
) -> Result<Realization> {
    let horizon_end = system.hours();
    if ledger.hours.len() != horizon_end {
        return Err(Error::Precondition(format!(
            "ledger of {} covers {} of {horizon_end} hours",
            ledger.variant,
            ledger.hours.len()
        )));
    }
    let commitments = ledger.commitments();
    let mut model = MilpModel::new();
    let thermal = add_thermal_block(&mut model, system, 1, horizon_end, Commitment::Given(&commitments))?;
    let injection: Vec<f64> = ledger
        .hours
        .iter()
        .map(|h| h.psh.iter().map(|p| p.gen - p.pump).sum())
        .collect();
    let (short, surplus) = add_power_balance(&mut model, 1, horizon_end, &day.net_load, &thermal, None, Some(&injection), voll);
    model.add_offset(psh_entry_cost(ledger, system));
    let fixed: Vec<_> = model
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.kind == VarKind::Binary)
        .map(|(j, c)| (crate::milp::Var(j), c.lower.unwrap_or(0.0)))
        .collect();
    let sol = fix_and_resolve_lp(&model, &fixed, options)?;
    if !sol.has_solution() {
        let hour = ledger
            .hours
            .iter()
            .find(|h| h.shortfall > 0.0 || h.surplus > 0.0)
            .map_or(1, |h| h.hour);
        return Err(Error::Infeasible(format!(
            "realization of {} on actual load is {} (first suspect hour {hour})",
            ledger.variant,
            sol.status.label()
        )));
    }
    let prices = sol.balance_prices(&model);
    if prices.len() != horizon_end {
        let missing = (1..=horizon_end).find(|t| prices.iter().all(|p| p.0 != *t)).unwrap_or(0);
        return Err(Error::Solver(format!("no balance price for hour {missing}")));
    }
    Ok(Realization {
        variant: ledger.variant,
        lmp: prices.into_iter().map(|p| p.1).collect(),
        objective: sol.objective,
        thermal_output: thermal
            .iter()
            .map(|hours| hours.iter().map(|h| sol.value(h.p)).collect())
            .collect(),
        shortfall: short.iter().map(|v| sol.value(*v)).collect(),
        surplus: surplus.iter().map(|v| sol.value(*v)).collect(),
    })
}

/// Real-time profit per PSH unit of the deviation from the day-ahead
/// position, `Σ_t LMP_t·[(gen − pump) − (gen_DA − pump_DA)]`.
pub fn lac_profit(ledger: &SimulationLedger, system: &System<f64>, lmp: &[f64]) -> Vec<f64> {
    system
        .psh
        .iter()
        .enumerate()
        .map(|(g, u)| {
            ledger
                .hours
                .iter()
                .map(|h| {
                    let t = h.hour;
                    let p = &h.psh[g];
                    let dev = (p.gen - u.da_gen[t - 1]) - (p.pump - u.da_pump[t - 1]);
                    if dev == 0.0 {
                        0.0
                    } else {
                        lmp[t - 1] * dev
                    }
                })
                .sum()
        })
        .collect()
}

/// Day-ahead profit per PSH unit, the day-ahead schedule settled at
/// day-ahead prices of its node.
pub fn da_profit(system: &System<f64>, day: &MarketDay<f64>) -> Result<Vec<f64>> {
    system
        .psh
        .iter()
        .map(|u| {
            let prices = day
                .da_lmp
                .get(&u.node_id)
                .ok_or_else(|| Error::config(format!("no day-ahead prices for node {}", u.node_id)))?;
            Ok((1..=system.hours()).map(|t| prices[t - 1] * u.da_net(t)).sum())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRow {
    pub variant: ModelVariant,
    pub objective: f64,
    /// Change against current practice in percent; negative is a reduction.
    pub delta_pct: f64,
}

/// Realized objectives against current practice.
pub fn objective_delta_table(objectives: &[(ModelVariant, f64)]) -> Result<Vec<ObjectiveRow>> {
    let base = objectives
        .iter()
        .find(|(v, _)| *v == ModelVariant::CurrentPractice)
        .map(|(_, o)| *o)
        .ok_or_else(|| Error::Precondition("objective comparison needs a current-practice run".into()))?;
    Ok(objectives
        .iter()
        .map(|&(variant, objective)| ObjectiveRow {
            variant,
            objective,
            delta_pct: if variant == ModelVariant::CurrentPractice || objective == base {
                0.0
            } else {
                100.0 * (objective - base) / base.abs()
            },
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitRow {
    pub variant: ModelVariant,
    pub unit: String,
    pub lac_profit: f64,
    pub da_profit: f64,
    /// LAC profit as a percentage of day-ahead profit; zero when the
    /// day-ahead profit is zero.
    pub pct_of_da: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub scenarios: usize,
    pub rows: usize,
    pub cols: usize,
    pub nonzeros: usize,
    pub walltime_s: f64,
    pub rows_growth_pct: f64,
    pub cols_growth_pct: f64,
    pub nonzeros_growth_pct: f64,
}

/// Growth of first-window model size against the `S = 0` entry, which must
/// be present.
pub fn scaling_report(points: &[(usize, ModelStats, f64)]) -> Result<Vec<ScalingRow>> {
    let base = points
        .iter()
        .find(|p| p.0 == 0)
        .map(|p| p.1)
        .ok_or_else(|| Error::Precondition("scaling report needs an S = 0 baseline".into()))?;
    let growth = |v: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * (v as f64 - b as f64) / b as f64 };
    let mut rows: Vec<ScalingRow> = points
        .iter()
        .map(|(s, st, time)| ScalingRow {
            scenarios: *s,
            rows: st.rows,
            cols: st.cols,
            nonzeros: st.nonzeros,
            walltime_s: *time,
            rows_growth_pct: growth(st.rows, base.rows),
            cols_growth_pct: growth(st.cols, base.cols),
            nonzeros_growth_pct: growth(st.nonzeros, base.nonzeros),
        })
        .collect();
    rows.sort_by_key(|r| r.scenarios);
    Ok(rows)
}

/// Least-squares line `y = a + b x` and its coefficient of determination.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let b = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let a = my - b * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (a, b, r2)
}

/// Everything reported for one simulated day.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub day: String,
    pub objectives: Vec<ObjectiveRow>,
    pub profits: Vec<ProfitRow>,
    pub scaling: Vec<ScalingRow>,
    pub realizations: Vec<Realization>,
}

/// Realizes every ledger and assembles the comparison tables.
pub fn evaluate_day(
    ledgers: &[SimulationLedger],
    system: &System<f64>,
    day: &MarketDay<f64>,
    voll: f64,
    options: &SolveOptions,
) -> Result<EvaluationReport> {
    let da = da_profit(system, day)?;
    let mut report = EvaluationReport {
        day: day.label.clone(),
        ..EvaluationReport::default()
    };
    let mut objectives = Vec::new();
    for ledger in ledgers {
        let real = realized_lmp(ledger, system, day, voll, options)?;
        let profit = lac_profit(ledger, system, &real.lmp);
        for (g, u) in system.psh.iter().enumerate() {
            report.profits.push(ProfitRow {
                variant: ledger.variant,
                unit: u.id.clone(),
                lac_profit: profit[g],
                da_profit: da[g],
                pct_of_da: if da[g] == 0.0 { 0.0 } else { 100.0 * profit[g] / da[g].abs() },
            });
        }
        objectives.push((ledger.variant, real.objective));
        report.realizations.push(real);
    }
    report.objectives = objective_delta_table(&objectives)?;
    Ok(report)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn write_csv<W: Write>(out: W, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn f2(v: f64) -> String {
    format!("{v:.2}")
}

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

impl EvaluationReport {
    pub fn write_objectives_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(
            out,
            &["day", "variant", "objective", "delta_pct"],
            self.objectives
                .iter()
                .map(|r| vec![self.day.clone(), r.variant.to_string(), f2(r.objective), f4(r.delta_pct)])
                .collect(),
        )
    }

    pub fn write_profits_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(
            out,
            &["day", "variant", "unit", "lac_profit", "da_profit", "pct_of_da"],
            self.profits
                .iter()
                .map(|r| {
                    vec![
                        self.day.clone(),
                        r.variant.to_string(),
                        r.unit.clone(),
                        f2(r.lac_profit),
                        f2(r.da_profit),
                        f4(r.pct_of_da),
                    ]
                })
                .collect(),
        )
    }

    pub fn write_scaling_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(
            out,
            &[
                "scenarios",
                "rows",
                "cols",
                "nonzeros",
                "walltime_s",
                "rows_growth_pct",
                "cols_growth_pct",
                "nonzeros_growth_pct",
            ],
            self.scaling
                .iter()
                .map(|r| {
                    vec![
                        r.scenarios.to_string(),
                        r.rows.to_string(),
                        r.cols.to_string(),
                        r.nonzeros.to_string(),
                        f4(r.walltime_s),
                        f2(r.rows_growth_pct),
                        f2(r.cols_growth_pct),
                        f2(r.nonzeros_growth_pct),
                    ]
                })
                .collect(),
        )
    }

    /// Aligned plain-text tables.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "day {}", self.day);
        let _ = writeln!(s, "\n{:<18} {:>16} {:>12}", "variant", "objective", "delta %");
        for r in &self.objectives {
            let _ = writeln!(s, "{:<18} {:>16.2} {:>12.4}", r.variant.name(), r.objective, r.delta_pct);
        }
        if !self.profits.is_empty() {
            let _ = writeln!(s, "\n{:<18} {:<10} {:>14} {:>14} {:>10}", "variant", "unit", "LAC profit", "DA profit", "% of DA");
            for r in &self.profits {
                let _ = writeln!(
                    s,
                    "{:<18} {:<10} {:>14.2} {:>14.2} {:>10.4}",
                    r.variant.name(),
                    r.unit,
                    r.lac_profit,
                    r.da_profit,
                    r.pct_of_da
                );
            }
        }
        if !self.scaling.is_empty() {
            let _ = writeln!(
                s,
                "\n{:>5} {:>9} {:>9} {:>10} {:>10} {:>9} {:>9} {:>9}",
                "S", "rows", "cols", "nonzeros", "time s", "rows %", "cols %", "nz %"
            );
            for r in &self.scaling {
                let _ = writeln!(
                    s,
                    "{:>5} {:>9} {:>9} {:>10} {:>10.3} {:>9.2} {:>9.2} {:>9.2}",
                    r.scenarios,
                    r.rows,
                    r.cols,
                    r.nonzeros,
                    r.walltime_s,
                    r.rows_growth_pct,
                    r.cols_growth_pct,
                    r.nonzeros_growth_pct
                );
            }
        }
        s
    }
}

/// Hourly day-ahead prices per node and realized prices per variant.
pub fn write_fig_lmp<W: Write>(out: W, day: &MarketDay<f64>, realizations: &[Realization]) -> Result<()> {
    let mut header = vec!["hour".to_string()];
    header.extend(day.da_lmp.keys().map(|n| format!("da_{n}")));
    header.extend(realizations.iter().map(|r| format!("rt_{}", r.variant)));
    let hours = day.net_load.len();
    let rows = (1..=hours)
        .map(|t| {
            let mut row = vec![t.to_string()];
            row.extend(day.da_lmp.values().map(|v| f4(v[t - 1])));
            row.extend(realizations.iter().map(|r| f4(r.lmp[t - 1])));
            row
        })
        .collect();
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(out, &header_ref, rows)
}

/// Long-format PSH dispatch and storage of every ledger plus the day-ahead
/// schedule.
pub fn write_fig_dispatch<W: Write>(out: W, system: &System<f64>, ledgers: &[SimulationLedger]) -> Result<()> {
    let mut rows = Vec::new();
    for (g, u) in system.psh.iter().enumerate() {
        let r = system.reservoir_index(&u.reservoir_id).unwrap_or(0);
        let mut e = system.reservoirs.get(r).map_or(0.0, |res| res.e_initial);
        for t in 1..=system.hours() {
            e = crate::psh_model::soc_step(system, r, e, &[(g, u.da_gen[t - 1], u.da_pump[t - 1])]);
            rows.push(vec![
                "day_ahead".to_string(),
                u.id.clone(),
                t.to_string(),
                u.da_mode(t).short().to_string(),
                f4(u.da_gen[t - 1]),
                f4(u.da_pump[t - 1]),
                f4(e),
            ]);
        }
        for l in ledgers {
            for h in &l.hours {
                let p = &h.psh[g];
                rows.push(vec![
                    l.variant.to_string(),
                    u.id.clone(),
                    h.hour.to_string(),
                    p.mode.short().to_string(),
                    f4(p.gen),
                    f4(p.pump),
                    f4(h.soc[r].end),
                ]);
            }
        }
    }
    write_csv(out, &["series", "unit", "hour", "mode", "gen", "pump", "soc_end"], rows)
}
