//! Seeded synthetic instances: a merit-order thermal fleet, pumped-storage
//! plants, a two-peak load day and a price history for forecast training.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::PriceHistory;
use crate::system::{
    CostSegment, InitialStatus, MarketDay, PshMode, PshUnit, Reservoir, System, ThermalUnit, TimeGrid,
};

/// Coefficients of the real-time price process
/// `y_t = φ y_{t-1} + θ ε_{t-1} + β x_t + ε_t` with `x` the day-ahead price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceProcess {
    pub phi: f64,
    pub theta: f64,
    pub beta: f64,
    pub sigma: f64,
}

impl Default for PriceProcess {
    fn default() -> Self {
        PriceProcess {
            phi: 0.6,
            theta: 0.2,
            beta: 0.4,
            sigma: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub hours: usize,
    pub window: usize,
    pub thermal_units: usize,
    pub psh_units: usize,
    pub peak_load: f64,
    /// 0 gives identical day-ahead and real-time load; 1 moves both peaks
    /// by two hours and adds load noise.
    pub divergence: f64,
    pub history_days: usize,
    pub prices: PriceProcess,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            hours: 24,
            window: 4,
            thermal_units: 6,
            psh_units: 2,
            peak_load: 1000.0,
            divergence: 0.5,
            history_days: 70,
            prices: PriceProcess::default(),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthInstance {
    pub system: System<f64>,
    pub day: MarketDay<f64>,
    pub history: PriceHistory,
}

fn bump(h: f64, centre: f64, width: f64) -> f64 {
    (-0.5 * ((h - centre) / width).powi(2)).exp()
}

/// Load shape with morning and evening peaks, scaled so that the evening
/// peak reaches `peak`.
pub fn load_shape(hours: usize, peak: f64, shift: f64) -> Vec<f64> {
    let scale = 24.0 / hours as f64;
    (1..=hours)
        .map(|t| {
            let h = t as f64 * scale;
            peak * (0.58 + 0.22 * bump(h, 8.0 + shift, 2.5) + 0.42 * bump(h, 19.0 - shift, 3.0))
        })
        .collect()
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

fn thermal_fleet(n: usize, peak: f64, first_load: f64) -> Vec<ThermalUnit<f64>> {
    let total = 1.3 * peak;
    // Larger cheap units at the bottom of the stack.
    let weights: Vec<f64> = (0..n).map(|k| (n - k) as f64 + 1.0).collect();
    let wsum: f64 = weights.iter().sum();
    let mut committed_cap = 0.0;
    (0..n)
        .map(|k| {
            let p_max = (total * weights[k] / wsum).round();
            let w1 = (p_max * 0.6).round();
            let base = 14.0 + 11.0 * k as f64;
            let committed = committed_cap < first_load * 1.05;
            if committed {
                committed_cap += p_max;
            }
            let min_up = (4usize).saturating_sub(k / 2).max(1);
            ThermalUnit {
                id: format!("g{}", k + 1),
                cost_curve: vec![
                    CostSegment { width_mw: w1, price: base },
                    CostSegment {
                        width_mw: p_max - w1,
                        price: base + 4.0,
                    },
                ],
                no_load_cost: round1(p_max * 0.8),
                startup_cost: round1(p_max * (6.0 + 2.0 * k as f64)),
                p_min: (p_max * 0.3).round(),
                p_max,
                min_up,
                min_down: min_up,
                initial_status: InitialStatus {
                    committed,
                    hours_in_state: 24,
                },
                da_commitment: Vec::new(),
            }
        })
        .collect()
}

/// Price of the marginal block when `load` is served in merit order.
pub fn merit_price(fleet: &[ThermalUnit<f64>], load: f64) -> f64 {
    let mut blocks: Vec<(f64, f64)> = fleet
        .iter()
        .flat_map(|u| u.cost_curve.iter().map(|s| (s.price, s.width_mw)))
        .collect();
    blocks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut served = 0.0;
    for (price, width) in &blocks {
        served += width;
        if served >= load {
            return *price;
        }
    }
    blocks.last().map_or(0.0, |b| b.0 * 1.5)
}

fn psh_fleet(n: usize, peak: f64, hours: usize) -> (Vec<PshUnit<f64>>, Vec<Reservoir<f64>>) {
    let mut units = Vec::new();
    let mut reservoirs = Vec::new();
    for k in 0..n {
        let cap = (peak * (0.09 - 0.02 * k as f64)).round().max(10.0);
        let id = format!("psh{}", k + 1);
        let res = format!("res{}", k + 1);
        let e_max = (cap * 0.9 * 8.0).round();
        let e_initial = (e_max * 0.4).round();
        units.push(PshUnit {
            id: id.clone(),
            reservoir_id: res.clone(),
            gen_min: (cap * 0.2).round(),
            gen_max: cap,
            pump_min: (cap * 0.5).round(),
            pump_max: cap,
            eta_gen: 0.9,
            eta_pump: 0.9,
            startup_cost_gen: round1(cap * 0.5),
            startup_cost_pump: round1(cap * 0.5),
            node_id: format!("node{}", k + 1),
            initial_mode: PshMode::Offline,
            da_gen: vec![0.0; hours],
            da_pump: vec![0.0; hours],
        });
        reservoirs.push(Reservoir {
            id: res,
            e_min: (e_max * 0.05).round(),
            e_max,
            e_initial,
            e_final_target: e_initial,
            member_units: vec![id],
        });
    }
    (units, reservoirs)
}

/// Simulates the real-time price process over a day-ahead series,
/// continuing from `(y, ε)` state.
fn rt_prices(proc_: &PriceProcess, da: &[f64], state: &mut (f64, f64), rng: &mut ChaCha8Rng) -> Vec<f64> {
    let noise = Normal::new(0.0, proc_.sigma).expect("positive sigma");
    da.iter()
        .map(|x| {
            let e = noise.sample(rng);
            let y = proc_.phi * state.0 + proc_.theta * state.1 + proc_.beta * x + e;
            *state = (y, e);
            y
        })
        .collect()
}

/// Generates a complete synthetic instance. Identical configurations give
/// identical instances.
pub fn generate(config: &SynthConfig) -> Result<SynthInstance> {
    if config.hours == 0 || config.window == 0 || config.window > config.hours {
        return Err(Error::config("synthetic day needs 1 <= window <= hours"));
    }
    if config.thermal_units == 0 || config.peak_load <= 0.0 {
        return Err(Error::config("synthetic system needs thermal units and a positive peak load"));
    }
    if !(0.0..=1.0).contains(&config.divergence) {
        return Err(Error::config("divergence must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let hours = config.hours;
    let da_shape = load_shape(hours, config.peak_load, 0.0);
    let da_load: Vec<f64> = da_shape.iter().map(|v| round1(*v)).collect();
    let d = config.divergence;
    let net_load: Vec<f64> = if d == 0.0 {
        da_load.clone()
    } else {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let shifted = load_shape(hours, config.peak_load, sign * 2.0 * d);
        let noise = Normal::new(0.0, 0.02 * d).expect("positive sd");
        da_load
            .iter()
            .zip(&shifted)
            .map(|(a, b)| round1(((1.0 - d) * a + d * b) * (1.0 + noise.sample(&mut rng))))
            .collect()
    };

    let thermal = thermal_fleet(config.thermal_units, config.peak_load, da_load[0]);
    let (psh, reservoirs) = psh_fleet(config.psh_units, config.peak_load, hours);
    let system = System {
        grid: TimeGrid::hourly(hours, config.window),
        thermal,
        psh,
        reservoirs,
    };

    let day_factor = Normal::new(1.0, 0.06).expect("positive sd");
    let hour_noise = Normal::new(0.0, 0.015).expect("positive sd");
    let mut history = PriceHistory::default();
    let mut da_day = BTreeMap::new();
    let mut rt_day = BTreeMap::new();
    for (k, unit) in system.psh.iter().enumerate() {
        let offset = k as f64;
        let mut state = (0.0, 0.0);
        let mut da_hist = Vec::with_capacity(config.history_days * hours);
        for _ in 0..config.history_days {
            let a: f64 = day_factor.sample(&mut rng);
            for v in &da_shape {
                let l = v * a * (1.0 + hour_noise.sample(&mut rng));
                da_hist.push(merit_price(&system.thermal, l) + offset);
            }
        }
        let rt_hist = rt_prices(&config.prices, &da_hist, &mut state, &mut rng);
        let da: Vec<f64> = da_load.iter().map(|l| merit_price(&system.thermal, *l) + offset).collect();
        let rt = rt_prices(&config.prices, &da, &mut state, &mut rng);
        history.da.insert(unit.node_id.clone(), da_hist);
        history.rt.insert(unit.node_id.clone(), rt_hist);
        da_day.insert(unit.node_id.clone(), da);
        rt_day.insert(unit.node_id.clone(), rt);
    }
    let day = MarketDay {
        label: format!("synthetic-{}", config.seed),
        net_load,
        da_load,
        da_lmp: da_day,
        rt_lmp_actual: rt_day,
    };
    Ok(SynthInstance { system, day, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::validate_system;

    #[test]
    fn zero_divergence_copies_da_load() {
        let inst = generate(&SynthConfig {
            divergence: 0.0,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_eq!(inst.day.net_load, inst.day.da_load);
    }

    #[test]
    fn instance_is_valid() {
        let inst = generate(&SynthConfig::default()).unwrap();
        assert!(validate_system(&inst.system).is_empty(), "{:?}", validate_system(&inst.system));
        assert!(inst.day.violations(24).is_empty());
        assert_eq!(inst.history.len(), 70 * 24);
        assert_eq!(inst.system.psh.len(), 2);
    }

    #[test]
    fn load_has_two_peaks() {
        let l = load_shape(24, 1000.0, 0.0);
        let is_peak = |t: usize| l[t] > l[t - 1] && l[t] > l[t + 1];
        let peaks: Vec<usize> = (1..23).filter(|&t| is_peak(t)).collect();
        assert_eq!(peaks.len(), 2, "{l:?}");
        assert!((l.iter().cloned().fold(0.0, f64::max) - 1000.0).abs() < 20.0);
    }

    #[test]
    fn merit_price_steps() {
        let fleet = thermal_fleet(2, 100.0, 0.0);
        let cheapest = fleet[0].cost_curve[0].price;
        assert_eq!(merit_price(&fleet, 1.0), cheapest);
        assert!(merit_price(&fleet, 120.0) > cheapest);
    }
}
