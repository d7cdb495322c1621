//! The look-ahead commitment models: thermal fleet and power balance around
//! the PSH block, with five ways of valuing the hours after the window.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::{
    solve, ColTag, Label, MilpModel, MilpSolution, ModelStats, RowTag, Sense, SolveOptions, SolveStatus, Var,
};
use crate::psh_model::{add_psh_block, soc_step, BlockSpec, EndSoc, PshBlock};
use crate::scalar::Scalar;
use crate::system::{PriceScenarioSet, PshMode, System};

/// Default value of lost load, $/MWh.
pub const DEFAULT_VOLL: f64 = 3500.0;
/// Default time-preference perturbation on post-window prices, $/MWh per hour.
pub const DEFAULT_TIE_BREAK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    CurrentPractice,
    Perfect,
    Deterministic,
    Stochastic,
    Robust,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 5] = [
        ModelVariant::CurrentPractice,
        ModelVariant::Perfect,
        ModelVariant::Deterministic,
        ModelVariant::Stochastic,
        ModelVariant::Robust,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::CurrentPractice => "current_practice",
            ModelVariant::Perfect => "perfect",
            ModelVariant::Deterministic => "deterministic",
            ModelVariant::Stochastic => "stochastic",
            ModelVariant::Robust => "robust",
        }
    }

    /// Whether the variant consumes price forecasts.
    pub fn uses_forecast(self) -> bool {
        matches!(self, ModelVariant::Deterministic | ModelVariant::Stochastic | ModelVariant::Robust)
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.name().replace('_', "") == key)
            .ok_or_else(|| Error::config(format!("unknown model variant '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LacOptions<T> {
    pub voll: T,
    pub end_soc: EndSoc,
    /// Added to post-window prices per hour after the forecast origin, so
    /// that ties favour early pumping and late generation.
    pub tie_break: T,
}

impl<T: Scalar> Default for LacOptions<T> {
    fn default() -> Self {
        LacOptions {
            voll: T::from_f64(DEFAULT_VOLL).unwrap(),
            end_soc: EndSoc::Fix,
            tie_break: T::from_f64(DEFAULT_TIE_BREAK).unwrap(),
        }
    }
}

/// Input of one look-ahead window.
#[derive(Debug, Clone)]
pub struct LacInstance<'a, T> {
    /// System with day-ahead schedules filled in.
    pub system: &'a System<T>,
    pub t1: usize,
    pub te: usize,
    /// Net load of hours `t1 ..= te`.
    pub net_load: &'a [T],
    /// Storage at the start of `t1`, per reservoir.
    pub initial_soc: Vec<T>,
    /// Mode in hour `t1 - 1`, per PSH unit.
    pub previous_mode: Vec<PshMode>,
    /// Price trajectories covering at least `te + 1 ..= T`.
    pub scenarios: Option<&'a PriceScenarioSet<T>>,
    pub options: LacOptions<T>,
}

impl<'a, T: Scalar> LacInstance<'a, T> {
    /// Instance of the first window with the system's own initial state.
    pub fn first_window(system: &'a System<T>, t1: usize, te: usize, net_load: &'a [T]) -> Self {
        LacInstance {
            system,
            t1,
            te,
            net_load,
            initial_soc: system.reservoirs.iter().map(|r| r.e_initial.clone()).collect(),
            previous_mode: system.psh.iter().map(|u| u.initial_mode).collect(),
            scenarios: None,
            options: LacOptions::default(),
        }
    }
}

/// Columns of one thermal unit in one hour.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalHourVars {
    pub u: Var,
    pub p: Var,
    pub segments: Vec<Var>,
    pub startup: Option<Var>,
}

/// How thermal commitments enter a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Commitment<'a> {
    /// Fixed to the day-ahead schedule; startup costs become constants.
    DayAhead,
    /// Fixed to the given schedule (`[unit][hour - 1]`).
    Given(&'a [Vec<bool>]),
    /// Free, with startup, minimum up and minimum down constraints.
    Free,
}

/// Thermal columns and rows for hours `t1 ..= te`. Returns `[unit][t - t1]`.
pub fn add_thermal_block<T: Scalar>(
    model: &mut MilpModel<T>,
    system: &System<T>,
    t1: usize,
    te: usize,
    commitment: Commitment<'_>,
) -> Result<Vec<Vec<ThermalHourVars>>> {
    let one = T::one;
    let mut out = Vec::with_capacity(system.thermal.len());
    for (g, unit) in system.thermal.iter().enumerate() {
        let schedule: Option<&[bool]> = match commitment {
            Commitment::DayAhead => {
                if unit.da_commitment.len() < te {
                    return Err(Error::config(format!("thermal unit {} has no day-ahead commitment", unit.id)));
                }
                Some(&unit.da_commitment)
            }
            Commitment::Given(s) => Some(&s[g]),
            Commitment::Free => None,
        };
        let mut hours: Vec<ThermalHourVars> = Vec::with_capacity(te + 1 - t1);
        for t in t1..=te {
            let at = |tag: ColTag| Label::new(tag, unit.id.clone()).hour(t);
            let rat = |tag: RowTag| Label::new(tag, unit.id.clone()).hour(t);
            let u = model.add_binary(at(ColTag::ThermalCommit), unit.no_load_cost.clone());
            if let Some(s) = schedule {
                model.fix(u, if s[t - 1] { one() } else { T::zero() });
                let before = if t == 1 { unit.initial_status.committed } else { s[t - 2] };
                if s[t - 1] && !before {
                    model.add_offset(unit.startup_cost.clone());
                }
            }
            let p = model.add_continuous(at(ColTag::ThermalOutput), Some(T::zero()), Some(unit.p_max.clone()), T::zero());
            let segments: Vec<Var> = unit
                .cost_curve
                .iter()
                .enumerate()
                .map(|(k, seg)| {
                    model.add_continuous(
                        at(ColTag::ThermalSegment).index(k),
                        Some(T::zero()),
                        Some(seg.width_mw.clone()),
                        seg.price.clone(),
                    )
                })
                .collect();
            let mut sum = vec![(p, one())];
            sum.extend(segments.iter().map(|v| (*v, -one())));
            model.add_row(rat(RowTag::OutputSum), sum, Sense::Eq, T::zero());
            for (k, (v, seg)) in segments.iter().zip(&unit.cost_curve).enumerate() {
                model.add_row(
                    rat(RowTag::SegmentCapacity).index(k),
                    vec![(*v, one()), (u, -seg.width_mw.clone())],
                    Sense::Le,
                    T::zero(),
                );
            }
            model.add_row(rat(RowTag::OutputMin), vec![(p, one()), (u, -unit.p_min.clone())], Sense::Ge, T::zero());
            let startup = if schedule.is_none() {
                let y = model.add_continuous(at(ColTag::ThermalStartup), Some(T::zero()), Some(one()), unit.startup_cost.clone());
                // y_t ≥ u_t − u_{t−1}
                let mut terms = vec![(y, one()), (u, -one())];
                let mut rhs = T::zero();
                match hours.last() {
                    Some(prev) => terms.push((prev.u, one())),
                    None if t == 1 && unit.initial_status.committed => rhs = -one(),
                    None => {}
                }
                model.add_row(rat(RowTag::StartupLink), terms, Sense::Ge, rhs);
                Some(y)
            } else {
                None
            };
            hours.push(ThermalHourVars { u, p, segments, startup });
        }
        if schedule.is_none() {
            add_min_up_down(model, unit, t1, &hours);
        }
        out.push(hours);
    }
    Ok(out)
}

fn add_min_up_down<T: Scalar>(
    model: &mut MilpModel<T>,
    unit: &crate::system::ThermalUnit<T>,
    t1: usize,
    hours: &[ThermalHourVars],
) {
    let one = T::one;
    let init = unit.initial_status;
    let hold = if init.committed {
        unit.min_up.saturating_sub(init.hours_in_state)
    } else {
        unit.min_down.saturating_sub(init.hours_in_state)
    };
    for (k, hv) in hours.iter().enumerate() {
        let t = t1 + k;
        if t1 == 1 && t <= hold {
            model.fix(hv.u, if init.committed { one() } else { T::zero() });
        }
        let rat = |tag: RowTag| Label::new(tag, unit.id.clone()).hour(t);
        if unit.min_up > 1 {
            let from = k.saturating_sub(unit.min_up - 1);
            let mut terms: Vec<(Var, T)> = hours[from..=k].iter().map(|h| (h.startup.unwrap(), one())).collect();
            terms.push((hv.u, -one()));
            model.add_row(rat(RowTag::MinUp), terms, Sense::Le, T::zero());
        }
        if unit.min_down > 1 {
            let from = k.saturating_sub(unit.min_down - 1);
            let mut terms: Vec<(Var, T)> = hours[from..=k].iter().map(|h| (h.startup.unwrap(), one())).collect();
            let mut rhs = one();
            if k >= unit.min_down {
                terms.push((hours[k - unit.min_down].u, one()));
            } else if init.committed {
                rhs = T::zero();
            }
            model.add_row(rat(RowTag::MinDown), terms, Sense::Le, rhs);
        }
    }
}

/// Balance rows `Σ p + Σ q_gen − Σ q_pump + short − surplus = D_t − fixed_t`
/// with both slacks priced at `voll`.
pub fn add_power_balance<T: Scalar>(
    model: &mut MilpModel<T>,
    t1: usize,
    te: usize,
    load: &[T],
    thermal: &[Vec<ThermalHourVars>],
    psh: Option<&PshBlock>,
    fixed_injection: Option<&[T]>,
    voll: T,
) -> (Vec<Var>, Vec<Var>) {
    let one = T::one;
    let mut short = Vec::new();
    let mut surplus = Vec::new();
    for t in t1..=te {
        let k = t - t1;
        let sh = model.add_continuous(Label::new(ColTag::Shortfall, "system").hour(t), Some(T::zero()), None, voll.clone());
        let su = model.add_continuous(Label::new(ColTag::Surplus, "system").hour(t), Some(T::zero()), None, voll.clone());
        let mut terms: Vec<(Var, T)> = thermal.iter().map(|h| (h[k].p, one())).collect();
        if let Some(b) = psh {
            for unit in &b.window {
                terms.push((unit[k].q_gen, one()));
                terms.push((unit[k].q_pump, -one()));
            }
        }
        terms.push((sh, one()));
        terms.push((su, -one()));
        let mut rhs = load[k].clone();
        if let Some(f) = fixed_injection {
            rhs = rhs - f[k].clone();
        }
        model.add_row(Label::new(RowTag::PowerBalance, "system").hour(t), terms, Sense::Eq, rhs);
        short.push(sh);
        surplus.push(su);
    }
    (short, surplus)
}

/// An assembled window model with handles to its columns.
#[derive(Debug, Clone)]
pub struct LacModel<T> {
    pub variant: ModelVariant,
    pub model: MilpModel<T>,
    pub t1: usize,
    pub te: usize,
    /// `[unit][t - t1]`.
    pub thermal: Vec<Vec<ThermalHourVars>>,
    pub psh: PshBlock,
    pub shortfall: Vec<Var>,
    pub surplus: Vec<Var>,
    /// Worst-case loss column per reservoir (robust only).
    pub risk: Vec<Var>,
}

/// How the hours after the window are valued.
enum PostValue {
    None,
    Expected,
    WorstCase,
}

fn check_load<T>(inst: &LacInstance<'_, T>) -> Result<()> {
    let need = inst.te + 1 - inst.t1;
    if inst.net_load.len() != need {
        return Err(Error::config(format!(
            "window [{}, {}] needs {need} load values, got {}",
            inst.t1,
            inst.te,
            inst.net_load.len()
        )));
    }
    Ok(())
}

fn scenario_node_index<T: Scalar>(system: &System<T>, set: &PriceScenarioSet<T>) -> Result<Vec<usize>> {
    system
        .psh
        .iter()
        .map(|u| {
            set.node_index(&u.node_id)
                .ok_or_else(|| Error::config(format!("scenario set has no prices for node {}", u.node_id)))
        })
        .collect()
}

fn require_da<T: Scalar>(system: &System<T>) -> Result<()> {
    for u in &system.psh {
        if u.da_gen.len() < system.hours() || u.da_pump.len() < system.hours() {
            return Err(Error::config(format!("PSH unit {} has no day-ahead schedule", u.id)));
        }
    }
    Ok(())
}

fn build<T: Scalar>(inst: &LacInstance<'_, T>, variant: ModelVariant, value: PostValue) -> Result<LacModel<T>> {
    check_load(inst)?;
    let system = inst.system;
    let horizon_end = system.hours();
    let (t1, te) = (inst.t1, inst.te);
    let scenario_set = match value {
        PostValue::None => None,
        _ if te == horizon_end => None,
        _ => {
            let set = inst
                .scenarios
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::config(format!("{variant} model needs price scenarios")))?;
            if set.first_hour > te + 1 || set.last_hour < horizon_end {
                return Err(Error::config(format!(
                    "scenarios cover hours {}..={}, the window needs {}..={horizon_end}",
                    set.first_hour,
                    set.last_hour,
                    te + 1
                )));
            }
            Some(set)
        }
    };
    let mut model = MilpModel::new();
    let thermal = add_thermal_block(&mut model, system, t1, te, Commitment::DayAhead)?;
    let spec = BlockSpec {
        t1,
        te,
        scenarios: scenario_set.map_or(0, |s| s.len()),
        initial_soc: &inst.initial_soc,
        previous_mode: &inst.previous_mode,
        end_soc: inst.options.end_soc,
    };
    let psh = add_psh_block(&mut model, system, &spec)?;
    let (shortfall, surplus) =
        add_power_balance(&mut model, t1, te, inst.net_load, &thermal, Some(&psh), None, inst.options.voll.clone());

    // Mode entry costs inside the window.
    for (g, unit) in system.psh.iter().enumerate() {
        for hv in &psh.window[g] {
            for to in [PshMode::Gen, PshMode::Pump] {
                let c = unit.entry_cost(to);
                if !c.is_zero() {
                    for v in hv.entries(to).collect::<Vec<_>>() {
                        model.add_cost(v, c.clone());
                    }
                }
            }
        }
    }

    let mut risk = Vec::new();
    if let Some(set) = scenario_set {
        let nodes = scenario_node_index(system, set)?;
        let t0 = t1 - 1;
        match value {
            PostValue::Expected => {
                for (g, unit) in system.psh.iter().enumerate() {
                    for s in 0..set.len() {
                        let w = set.weights[s].clone();
                        for hv in &psh.post[g][s] {
                            let t = hv.hour;
                            let price = set.price(s, nodes[g], t) + inst.options.tie_break.clone() * T::from_usize(t - t0).unwrap();
                            model.add_cost(hv.q_gen, -(w.clone() * price.clone()));
                            model.add_cost(hv.q_pump, w.clone() * price);
                            for to in [PshMode::Gen, PshMode::Pump] {
                                let c = unit.entry_cost(to);
                                if !c.is_zero() {
                                    for v in hv.entries(to).collect::<Vec<_>>() {
                                        model.add_cost(v, w.clone() * c.clone());
                                    }
                                }
                            }
                        }
                    }
                }
            }
            PostValue::WorstCase => {
                require_da(system)?;
                for (r, res) in system.reservoirs.iter().enumerate() {
                    let w_r = model.add_continuous(Label::new(ColTag::Risk, res.id.clone()), None, None, T::one());
                    risk.push(w_r);
                    let members = system.members_of(r);
                    for s in 0..set.len() {
                        // W_r + Σ LMP (q_gen − q_pump) − Σ c·v ≥ Σ LMP (Q_gen^DA − Q_pump^DA)
                        let mut terms = vec![(w_r, T::one())];
                        let mut rhs = T::zero();
                        for &g in &members {
                            let unit = &system.psh[g];
                            for hv in &psh.post[g][s] {
                                let t = hv.hour;
                                let price = set.price(s, nodes[g], t);
                                terms.push((hv.q_gen, price.clone()));
                                terms.push((hv.q_pump, -price.clone()));
                                rhs = rhs + price * unit.da_net(t);
                                for to in [PshMode::Gen, PshMode::Pump] {
                                    let c = unit.entry_cost(to);
                                    if !c.is_zero() {
                                        terms.extend(hv.entries(to).map(|v| (v, -c.clone())));
                                    }
                                }
                            }
                        }
                        model.add_row(
                            Label::new(RowTag::RiskLimit, res.id.clone()).scenario(Some(s + 1)),
                            terms,
                            Sense::Ge,
                            rhs,
                        );
                    }
                }
            }
            PostValue::None => {}
        }
    }
    Ok(LacModel {
        variant,
        model,
        t1,
        te,
        thermal,
        psh,
        shortfall,
        surplus,
        risk,
    })
}

/// Expected-value model: in-window cost minus probability-weighted
/// post-window PSH revenue.
pub fn build_stochastic<T: Scalar>(inst: &LacInstance<'_, T>) -> Result<LacModel<T>> {
    build(inst, ModelVariant::Stochastic, PostValue::Expected)
}

/// Single-trajectory version of the stochastic model.
pub fn build_deterministic<T: Scalar>(inst: &LacInstance<'_, T>) -> Result<LacModel<T>> {
    if let Some(set) = inst.scenarios {
        if set.len() != 1 {
            return Err(Error::config(format!(
                "deterministic model needs exactly one price trajectory, got {}",
                set.len()
            )));
        }
    }
    build(inst, ModelVariant::Deterministic, PostValue::Expected)
}

/// Worst-case model: in-window cost plus one loss column per reservoir
/// bounding the post-window revenue shortfall against the day-ahead
/// schedule in every scenario.
pub fn build_robust<T: Scalar>(inst: &LacInstance<'_, T>) -> Result<LacModel<T>> {
    require_da(inst.system)?;
    build(inst, ModelVariant::Robust, PostValue::WorstCase)
}

/// Full-information model over `t1 ..= T` with actual load.
pub fn build_perfect<T: Scalar>(
    system: &System<T>,
    actual_load: &[T],
    t1: usize,
    initial_soc: Vec<T>,
    previous_mode: Vec<PshMode>,
    options: LacOptions<T>,
) -> Result<LacModel<T>> {
    let horizon_end = system.hours();
    if actual_load.len() < horizon_end {
        return Err(Error::config(format!(
            "perfect model needs actual load for all {horizon_end} hours"
        )));
    }
    let inst = LacInstance {
        system,
        t1,
        te: horizon_end,
        net_load: &actual_load[t1 - 1..horizon_end],
        initial_soc,
        previous_mode,
        scenarios: None,
        options,
    };
    build(&inst, ModelVariant::Perfect, PostValue::None)
}

/// Window model with the PSH units held at their day-ahead schedule.
pub fn build_current_practice<T: Scalar>(inst: &LacInstance<'_, T>) -> Result<LacModel<T>> {
    require_da(inst.system)?;
    let mut lm = build(inst, ModelVariant::CurrentPractice, PostValue::None)?;
    let schedule: Vec<Vec<(PshMode, T, T)>> = inst
        .system
        .psh
        .iter()
        .map(|u| (1..=inst.system.hours()).map(|t| (u.da_mode(t), u.da_gen[t - 1].clone(), u.da_pump[t - 1].clone())).collect())
        .collect();
    fix_psh_schedule(&mut lm, inst.system, &schedule)?;
    Ok(lm)
}

/// Fixes modes and dispatch of every in-window unit-hour to `schedule`
/// (`[unit][hour - 1]`), checking the dispatch boxes.
pub fn fix_psh_schedule<T: Scalar>(lm: &mut LacModel<T>, system: &System<T>, schedule: &[Vec<(PshMode, T, T)>]) -> Result<()> {
    for (g, unit) in system.psh.iter().enumerate() {
        for hv in &lm.psh.window[g] {
            let t = hv.hour;
            let (mode, gen, pump) = schedule[g][t - 1].clone();
            let in_box = |v: &T, lo: &T, hi: &T| v >= lo && v <= hi;
            let ok = match mode {
                PshMode::Gen => in_box(&gen, &unit.gen_min, &unit.gen_max) && pump.is_zero(),
                PshMode::Pump => in_box(&pump, &unit.pump_min, &unit.pump_max) && gen.is_zero(),
                PshMode::Offline => gen.is_zero() && pump.is_zero(),
            };
            if !ok {
                return Err(Error::config(format!(
                    "day-ahead schedule of PSH unit {} at hour {t} ({mode}, gen {gen}, pump {pump}) violates its dispatch limits",
                    unit.id
                )));
            }
            for m in PshMode::ALL {
                lm.model.fix(hv.mode(m), if m == mode { T::one() } else { T::zero() });
            }
            lm.model.fix(hv.q_gen, gen);
            lm.model.fix(hv.q_pump, pump);
        }
    }
    Ok(())
}

/// Builds the requested variant for a rolling window. The perfect variant
/// takes the full-day actual load from `full_day_load`.
pub fn build_variant<T: Scalar>(
    variant: ModelVariant,
    inst: &LacInstance<'_, T>,
    full_day_load: Option<&[T]>,
) -> Result<LacModel<T>> {
    match variant {
        ModelVariant::CurrentPractice => build_current_practice(inst),
        ModelVariant::Deterministic => build_deterministic(inst),
        ModelVariant::Stochastic => build_stochastic(inst),
        ModelVariant::Robust => build_robust(inst),
        ModelVariant::Perfect => {
            let load = full_day_load.ok_or_else(|| Error::config("perfect model needs full-day actual load"))?;
            build_perfect(
                inst.system,
                load,
                inst.t1,
                inst.initial_soc.clone(),
                inst.previous_mode.clone(),
                inst.options.clone(),
            )
        }
    }
}

/// Day-ahead positions derived from day-ahead data.
#[derive(Debug, Clone)]
pub struct DaReference {
    /// Input system with PSH schedules, thermal commitments and day-end
    /// storage targets filled in.
    pub system: System<f64>,
    /// Storage after the last hour per reservoir.
    pub soc_end: Vec<f64>,
    /// PSH revenue at day-ahead prices.
    pub psh_revenue: f64,
    /// Objective of the thermal commitment run.
    pub uc_cost: f64,
}

/// Rounds to 1e-6 and clips into `[lo, hi]`, matching the rounding of
/// frozen rolling decisions.
fn clean(v: f64, lo: f64, hi: f64) -> f64 {
    ((v * 1e6).round() / 1e6).clamp(lo, hi)
}

/// Settings of the day-ahead reference run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DaOptions {
    pub voll: f64,
    /// Committed thermal capacity must cover this share above the net load
    /// left to thermal units.
    pub reserve_margin: f64,
}

impl Default for DaOptions {
    fn default() -> Self {
        DaOptions {
            voll: DEFAULT_VOLL,
            reserve_margin: 0.1,
        }
    }
}

/// Day-ahead positions: the PSH units first self-schedule against the
/// day-ahead prices (reaching each reservoir's day-end target), then the
/// thermal fleet is committed against day-ahead load plus net pumping.
pub fn build_da_reference(
    system: &System<f64>,
    da_load: &[f64],
    da_prices: &BTreeMap<String, Vec<f64>>,
    da_options: &DaOptions,
    options: &SolveOptions,
) -> Result<DaReference> {
    let horizon_end = system.hours();
    if da_load.len() != horizon_end {
        return Err(Error::config(format!("day-ahead load must cover {horizon_end} hours")));
    }
    let mut out = system.clone();
    let mut psh_revenue = 0.0;
    let mut net = vec![0.0; horizon_end];
    if !system.psh.is_empty() {
        let mut model = MilpModel::new();
        let initial: Vec<f64> = system.reservoirs.iter().map(|r| r.e_initial).collect();
        let previous: Vec<PshMode> = system.psh.iter().map(|u| u.initial_mode).collect();
        let spec = BlockSpec {
            t1: 1,
            te: horizon_end,
            scenarios: 0,
            initial_soc: &initial,
            previous_mode: &previous,
            end_soc: EndSoc::Fix,
        };
        let block = add_psh_block(&mut model, system, &spec)?;
        for (g, unit) in system.psh.iter().enumerate() {
            let prices = da_prices
                .get(&unit.node_id)
                .filter(|p| p.len() >= horizon_end)
                .ok_or_else(|| Error::config(format!("no day-ahead prices for node {}", unit.node_id)))?;
            for hv in &block.window[g] {
                let price = prices[hv.hour - 1];
                model.add_cost(hv.q_gen, -price);
                model.add_cost(hv.q_pump, price);
                for to in [PshMode::Gen, PshMode::Pump] {
                    let c = unit.entry_cost(to);
                    if c != 0.0 {
                        for v in hv.entries(to).collect::<Vec<_>>() {
                            model.add_cost(v, c);
                        }
                    }
                }
            }
        }
        let sol = solve(&model, options)?;
        if !sol.has_solution() {
            return Err(Error::Infeasible(format!(
                "day-ahead PSH schedule ({}): check reservoir targets of {}",
                sol.status.label(),
                system.reservoirs.iter().map(|r| r.id.as_str()).collect::<Vec<_>>().join(", ")
            )));
        }
        for (g, unit) in system.psh.iter().enumerate() {
            let mut gen = vec![0.0; horizon_end];
            let mut pump = vec![0.0; horizon_end];
            for hv in &block.window[g] {
                let t = hv.hour;
                let on = |m: PshMode| sol.value(hv.mode(m)) > 0.5;
                if on(PshMode::Gen) {
                    gen[t - 1] = clean(sol.value(hv.q_gen), unit.gen_min, unit.gen_max);
                }
                if on(PshMode::Pump) {
                    pump[t - 1] = clean(sol.value(hv.q_pump), unit.pump_min, unit.pump_max);
                }
                net[t - 1] += gen[t - 1] - pump[t - 1];
                psh_revenue += da_prices[&unit.node_id][t - 1] * (gen[t - 1] - pump[t - 1]);
            }
            out.psh[g].da_gen = gen;
            out.psh[g].da_pump = pump;
        }
    }
    let mut soc_end = Vec::with_capacity(system.reservoirs.len());
    for r in 0..system.reservoirs.len() {
        let mut e = system.reservoirs[r].e_initial;
        for t in 1..=horizon_end {
            let flows: Vec<(usize, f64, f64)> =
                (0..out.psh.len()).map(|g| (g, out.psh[g].da_gen[t - 1], out.psh[g].da_pump[t - 1])).collect();
            e = soc_step(&out, r, e, &flows);
        }
        out.reservoirs[r].e_final_target = e;
        soc_end.push(e);
    }

    let mut model = MilpModel::new();
    let thermal = add_thermal_block(&mut model, system, 1, horizon_end, Commitment::Free)?;
    add_power_balance(&mut model, 1, horizon_end, da_load, &thermal, None, Some(&net), da_options.voll);
    if da_options.reserve_margin > 0.0 {
        for t in 1..=horizon_end {
            let terms: Vec<(Var, f64)> = thermal.iter().zip(&system.thermal).map(|(h, u)| (h[t - 1].u, u.p_max)).collect();
            let need = (1.0 + da_options.reserve_margin) * (da_load[t - 1] - net[t - 1]);
            let cap: f64 = system.thermal.iter().map(|u| u.p_max).sum();
            model.add_row(Label::new(RowTag::Reserve, "system").hour(t), terms, Sense::Ge, need.min(cap));
        }
    }
    let sol = solve(&model, options)?;
    if !sol.has_solution() {
        return Err(Error::Infeasible(format!("day-ahead commitment ({})", sol.status.label())));
    }
    for (g, hours) in thermal.iter().enumerate() {
        out.thermal[g].da_commitment = hours.iter().map(|h| sol.value(h.u) > 0.5).collect();
    }
    Ok(DaReference {
        system: out,
        soc_end,
        psh_revenue,
        uc_cost: sol.objective,
    })
}

/// Solve outcome plus the window it belongs to.
pub fn solve_window(lm: &LacModel<f64>, options: &SolveOptions) -> Result<MilpSolution> {
    let sol = solve(&lm.model, options)?;
    match sol.status {
        SolveStatus::Infeasible | SolveStatus::Unbounded => Err(Error::Infeasible(format!(
            "{} window [{}, {}] is {}; storage rows involved: {}",
            lm.variant,
            lm.t1,
            lm.te,
            sol.status.label(),
            lm.model
                .rows
                .iter()
                .filter(|r| matches!(r.label.tag, RowTag::SocFinal | RowTag::SocInitial))
                .map(|r| r.name.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        ))),
        _ if !sol.has_solution() => Err(Error::Solver(format!(
            "{} window [{}, {}] found no solution ({})",
            lm.variant,
            lm.t1,
            lm.te,
            sol.status.label()
        ))),
        _ => Ok(sol),
    }
}

/// Predicted size of a window model from the builder formulas.
///
/// Assumes every post-window price is nonzero; zero coefficients are not
/// stored and would lower the nonzero count.
pub fn predict_size<T: Scalar>(system: &System<T>, t1: usize, te: usize, scenarios: usize, variant: ModelVariant) -> ModelStats {
    let horizon_end = system.hours();
    let nz = |v: &T| usize::from(!v.is_zero());
    let window = te + 1 - t1;
    let (s, post_hours) = match variant {
        ModelVariant::CurrentPractice => (0, 0),
        ModelVariant::Perfect => (0, 0),
        _ if te == horizon_end => (0, 0),
        _ => (scenarios, horizon_end - te),
    };
    let perfect_window = if variant == ModelVariant::Perfect { horizon_end + 1 - t1 } else { window };
    let window = perfect_window;
    let te = t1 + window - 1;
    let mut rows = 0;
    let mut cols = 0;
    let mut nonzeros = 0;
    let mut binaries = 0;

    for g in &system.thermal {
        let k = g.cost_curve.len();
        cols += window * (2 + k);
        binaries += window;
        rows += window * (2 + k);
        let seg_nz: usize = g.cost_curve.iter().map(|c| 1 + nz(&c.width_mw)).sum();
        nonzeros += window * ((1 + k) + seg_nz + 1 + nz(&g.p_min));
    }
    // balance
    rows += window;
    cols += 2 * window;
    nonzeros += window * (system.thermal.len() + 2 * system.psh.len() + 2);

    let unit_hours = window + s * post_hours;
    for u in &system.psh {
        cols += 11 * unit_hours;
        binaries += 9 * unit_hours;
        rows += 9 * unit_hours;
        let box_nz = 4 + nz(&u.gen_min) + nz(&u.gen_max) + nz(&u.pump_min) + nz(&u.pump_max);
        let per_hour = 3 + 6 + box_nz;
        // Flow rows carry the previous mode column except at t1.
        nonzeros += unit_hours * (per_hour + 3 * 6) - 3;
    }
    for r in 0..system.reservoirs.len() {
        let m = system.members_of(r).len();
        let step_nz = 2 + 2 * m;
        let det = if te == horizon_end { window + 1 } else { window };
        cols += det;
        rows += 1 + (det - 1);
        nonzeros += 1 + (det - 1) * step_nz;
        if te == horizon_end {
            rows += 1;
            nonzeros += 1;
        }
        if s > 0 {
            cols += s * (post_hours + 1);
            rows += s * (1 + post_hours + 1);
            nonzeros += s * ((1 + post_hours) * step_nz + 1);
        }
        if variant == ModelVariant::Robust && s > 0 {
            let per_hour: usize = system
                .members_of(r)
                .iter()
                .map(|&g| {
                    let u = &system.psh[g];
                    2 + 2 * nz(&u.startup_cost_gen) + 2 * nz(&u.startup_cost_pump)
                })
                .sum();
            cols += 1;
            rows += s;
            nonzeros += s * (1 + per_hour * post_hours);
        }
    }
    ModelStats {
        rows,
        cols,
        nonzeros,
        binaries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    #[test]
    fn variant_names_parse() {
        assert_eq!("CurrentPractice".parse::<ModelVariant>().unwrap(), ModelVariant::CurrentPractice);
        assert_eq!("current_practice".parse::<ModelVariant>().unwrap(), ModelVariant::CurrentPractice);
        assert_eq!("Robust".parse::<ModelVariant>().unwrap(), ModelVariant::Robust);
        assert!("hybrid".parse::<ModelVariant>().is_err());
    }

    fn reference() -> (DaReference, crate::system::MarketDay<f64>) {
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
        (da, inst.day)
    }

    fn flat_set(system: &System<f64>, origin: usize, count: usize) -> PriceScenarioSet<f64> {
        let nodes = system.psh_nodes();
        let hours = system.hours() - origin;
        PriceScenarioSet {
            forecast_origin: origin,
            first_hour: origin + 1,
            last_hour: system.hours(),
            prices: (0..count)
                .map(|s| nodes.iter().map(|_| (0..hours).map(|k| 20.0 + (s * 7 + k * 3) as f64).collect()).collect())
                .collect(),
            nodes,
            weights: vec![1.0 / count as f64; count],
        }
    }

    #[test]
    fn predicted_size_matches_built_models() {
        let (da, day) = reference();
        let sys = &da.system;
        for s in [1, 2, 3] {
            let set = flat_set(sys, 1, s);
            let mut inst = LacInstance::first_window(sys, 2, 4, &day.net_load[1..4]);
            inst.scenarios = Some(&set);
            for v in ModelVariant::ALL {
                if v == ModelVariant::Deterministic && s != 1 {
                    continue;
                }
                let lm = build_variant(v, &inst, Some(&day.net_load)).unwrap();
                assert_eq!(lm.model.stats(), predict_size(sys, 2, 4, s, v), "{v} S={s}");
            }
        }
    }

    #[test]
    fn single_scenario_stochastic_equals_deterministic() {
        let (da, day) = reference();
        let set = flat_set(&da.system, 0, 1);
        let mut inst = LacInstance::first_window(&da.system, 1, 3, &day.net_load[..3]);
        inst.scenarios = Some(&set);
        let a = build_stochastic(&inst).unwrap();
        let b = build_deterministic(&inst).unwrap();
        assert_eq!(a.model.canonical(), b.model.canonical());
    }

    #[test]
    fn deterministic_rejects_many_scenarios() {
        let (da, day) = reference();
        let set = flat_set(&da.system, 0, 2);
        let mut inst = LacInstance::first_window(&da.system, 1, 3, &day.net_load[..3]);
        inst.scenarios = Some(&set);
        assert!(build_deterministic(&inst).is_err());
        inst.scenarios = None;
        assert!(build_stochastic(&inst).is_err());
    }

    #[test]
    fn current_practice_follows_da() {
        let (da, day) = reference();
        let inst = LacInstance::first_window(&da.system, 1, 3, &day.net_load[..3]);
        let lm = build_current_practice(&inst).unwrap();
        let sol = solve_window(&lm, &SolveOptions::default()).unwrap();
        let u = &da.system.psh[0];
        for hv in &lm.psh.window[0] {
            assert!((sol.value(hv.q_gen) - u.da_gen[hv.hour - 1]).abs() < 1e-9);
            assert!((sol.value(hv.q_pump) - u.da_pump[hv.hour - 1]).abs() < 1e-9);
        }
    }

    #[test]
    fn da_schedule_outside_box_names_hour() {
        let (mut da, day) = reference();
        da.system.psh[0].da_pump[1] = 1.0;
        da.system.psh[0].da_gen[1] = 0.0;
        let inst = LacInstance::first_window(&da.system, 1, 3, &day.net_load[..3]);
        let err = build_current_practice(&inst).unwrap_err().to_string();
        assert!(err.contains("hour 2"), "{err}");
    }

    #[test]
    fn da_reference_reaches_recomputed_end() {
        let (da, _) = reference();
        let r = &da.system.reservoirs[0];
        let mut e = r.e_initial;
        let u = &da.system.psh[0];
        for t in 1..=da.system.hours() {
            e = soc_step(&da.system, 0, e, &[(0, u.da_gen[t - 1], u.da_pump[t - 1])]);
        }
        assert!((e - r.e_final_target).abs() < 1e-9);
        assert_eq!(da.soc_end, vec![r.e_final_target]);
        assert!(da.system.thermal.iter().all(|g| g.da_commitment.len() == 8));
    }
}
