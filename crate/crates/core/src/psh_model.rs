//! Constraint blocks of three-mode pumped-storage units and their shared
//! reservoirs: mode commitment, transitions, dispatch boxes and storage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::{ColTag, Label, MilpModel, RowId, RowTag, Sense, Var};
use crate::scalar::Scalar;
use crate::system::{PshMode, PshUnit, System};

/// Columns of one unit in one hour (and scenario, after the window).
#[derive(Debug, Clone, PartialEq)]
pub struct PshHourVars {
    pub unit: usize,
    pub hour: usize,
    pub scenario: Option<usize>,
    /// Indexed by [`PshMode::index`].
    pub mode: [Var; 3],
    /// `transition[from][to]`; the diagonal is empty.
    pub transition: [[Option<Var>; 3]; 3],
    pub q_gen: Var,
    pub q_pump: Var,
}

impl PshHourVars {
    pub fn mode(&self, m: PshMode) -> Var {
        self.mode[m.index()]
    }

    pub fn transition(&self, from: PshMode, to: PshMode) -> Option<Var> {
        self.transition[from.index()][to.index()]
    }

    /// Every transition column into `to`.
    pub fn entries(&self, to: PshMode) -> impl Iterator<Item = Var> + '_ {
        PshMode::ALL.into_iter().filter_map(move |from| self.transition(from, to))
    }
}

/// Mode of a unit in the hour before the first modelled hour.
#[derive(Debug, Clone, Copy)]
pub enum PreviousMode<'a> {
    Fixed(PshMode),
    Vars(&'a PshHourVars),
}

/// Creates the mode, transition and dispatch columns of one unit-hour.
/// Dispatch columns are bounded by `[0, max]`; their costs are left to the
/// caller.
pub fn add_hour_vars<T: Scalar>(
    model: &mut MilpModel<T>,
    unit: &PshUnit<T>,
    unit_index: usize,
    hour: usize,
    scenario: Option<usize>,
) -> PshHourVars {
    let at = |tag: ColTag| Label::new(tag, unit.id.clone()).hour(hour).scenario(scenario);
    let mode = PshMode::ALL.map(|m| model.add_binary(at(ColTag::Mode(m)), T::zero()));
    let mut transition = [[None; 3]; 3];
    for from in PshMode::ALL {
        for to in PshMode::ALL {
            if from != to {
                transition[from.index()][to.index()] =
                    Some(model.add_binary(at(ColTag::Transition(from, to)), T::zero()));
            }
        }
    }
    let q_gen = model.add_continuous(at(ColTag::GenDispatch), Some(T::zero()), Some(unit.gen_max.clone()), T::zero());
    let q_pump = model.add_continuous(at(ColTag::PumpDispatch), Some(T::zero()), Some(unit.pump_max.clone()), T::zero());
    PshHourVars {
        unit: unit_index,
        hour,
        scenario,
        mode,
        transition,
        q_gen,
        q_pump,
    }
}

/// Mutual exclusivity, transition flow balance (one row per mode) and at
/// most one transition, for one unit-hour.
pub fn add_mode_logic<T: Scalar>(
    model: &mut MilpModel<T>,
    unit: &PshUnit<T>,
    hv: &PshHourVars,
    previous: PreviousMode<'_>,
) -> Vec<RowId> {
    let at = |tag: RowTag| Label::new(tag, unit.id.clone()).hour(hv.hour).scenario(hv.scenario);
    let one = T::one;
    let mut rows = Vec::with_capacity(5);
    rows.push(model.add_row(
        at(RowTag::ModeExclusive),
        PshMode::ALL.iter().map(|m| (hv.mode(*m), one())).collect(),
        Sense::Eq,
        one(),
    ));
    for m in PshMode::ALL {
        // u^m_t - u^m_{t-1} - Σ_n v^{n,m}_t + Σ_n v^{m,n}_t = 0
        let mut terms = vec![(hv.mode(m), one())];
        let mut rhs = T::zero();
        match previous {
            PreviousMode::Fixed(p) => {
                if p == m {
                    rhs = one();
                }
            }
            PreviousMode::Vars(prev) => terms.push((prev.mode(m), -one())),
        }
        for n in PshMode::ALL {
            if n != m {
                terms.push((hv.transition(n, m).unwrap(), -one()));
                terms.push((hv.transition(m, n).unwrap(), one()));
            }
        }
        rows.push(model.add_row(at(RowTag::ModeFlow).index(m.index()), terms, Sense::Eq, rhs));
    }
    let all: Vec<(Var, T)> = hv.transition.iter().flatten().flatten().map(|v| (*v, one())).collect();
    rows.push(model.add_row(at(RowTag::SingleTransition), all, Sense::Le, one()));
    rows
}

/// `u·min ≤ q ≤ u·max` for generating and pumping.
pub fn add_dispatch_boxes<T: Scalar>(model: &mut MilpModel<T>, unit: &PshUnit<T>, hv: &PshHourVars) -> Vec<RowId> {
    let at = |tag: RowTag| Label::new(tag, unit.id.clone()).hour(hv.hour).scenario(hv.scenario);
    let one = T::one();
    let g = hv.mode(PshMode::Gen);
    let p = hv.mode(PshMode::Pump);
    vec![
        model.add_row(at(RowTag::GenLower), vec![(hv.q_gen, one.clone()), (g, -unit.gen_min.clone())], Sense::Ge, T::zero()),
        model.add_row(at(RowTag::GenUpper), vec![(hv.q_gen, one.clone()), (g, -unit.gen_max.clone())], Sense::Le, T::zero()),
        model.add_row(at(RowTag::PumpLower), vec![(hv.q_pump, one.clone()), (p, -unit.pump_min.clone())], Sense::Ge, T::zero()),
        model.add_row(at(RowTag::PumpUpper), vec![(hv.q_pump, one), (p, -unit.pump_max.clone())], Sense::Le, T::zero()),
    ]
}

/// Treatment of the day-end storage target.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndSoc {
    /// Storage after the last hour equals the target.
    #[default]
    Fix,
    /// Storage after the last hour is at least the target.
    Relax,
}

/// Storage columns of one reservoir. Entries are `(hour, column)` where the
/// column is the storage at the start of that hour.
#[derive(Debug, Clone, PartialEq)]
pub struct SocVars {
    pub reservoir: usize,
    /// Hours `t1 ..= te`, plus `T + 1` when the window reaches the day end.
    pub window: Vec<(usize, Var)>,
    /// Per scenario, hours `te + 1 ..= T + 1`.
    pub post: Vec<Vec<(usize, Var)>>,
}

/// All PSH columns of a model covering `t1 ..= T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PshBlock {
    pub t1: usize,
    pub te: usize,
    pub horizon_end: usize,
    /// `window[unit][t - t1]`.
    pub window: Vec<Vec<PshHourVars>>,
    /// `post[unit][s][t - te - 1]`.
    pub post: Vec<Vec<Vec<PshHourVars>>>,
    pub soc: Vec<SocVars>,
}

impl PshBlock {
    pub fn scenario_count(&self) -> usize {
        self.post.first().map_or(0, Vec::len)
    }

    /// Columns of `unit` at `hour`; `scenario` is ignored inside the window.
    pub fn at(&self, unit: usize, hour: usize, scenario: usize) -> &PshHourVars {
        if hour <= self.te {
            &self.window[unit][hour - self.t1]
        } else {
            &self.post[unit][scenario][hour - self.te - 1]
        }
    }
}

/// Shape of the PSH block.
#[derive(Debug, Clone)]
pub struct BlockSpec<'a, T> {
    pub t1: usize,
    pub te: usize,
    /// Post-window scenarios; ignored when `te` is the day end. Zero before
    /// the day end leaves the hours after the window unmodelled.
    pub scenarios: usize,
    /// Storage at the start of `t1`, per reservoir.
    pub initial_soc: &'a [T],
    /// Mode in hour `t1 - 1`, per unit.
    pub previous_mode: &'a [PshMode],
    pub end_soc: EndSoc,
}

/// Adds the complete PSH block: columns, mode logic and boxes for every
/// unit-hour, and storage dynamics for every reservoir.
pub fn add_psh_block<T: Scalar>(model: &mut MilpModel<T>, system: &System<T>, spec: &BlockSpec<'_, T>) -> Result<PshBlock> {
    let horizon_end = system.hours();
    let BlockSpec { t1, te, .. } = *spec;
    if !(1 <= t1 && t1 <= te && te <= horizon_end) {
        return Err(Error::config(format!("window [{t1}, {te}] does not fit a {horizon_end}-hour day")));
    }
    if spec.previous_mode.len() != system.psh.len() || spec.initial_soc.len() != system.reservoirs.len() {
        return Err(Error::config("initial mode and storage must be given for every unit and reservoir"));
    }
    let scenarios = if te == horizon_end { 0 } else { spec.scenarios };
    let mut window = Vec::with_capacity(system.psh.len());
    let mut post = Vec::with_capacity(system.psh.len());
    for (g, unit) in system.psh.iter().enumerate() {
        let mut hours: Vec<PshHourVars> = Vec::new();
        for t in t1..=te {
            let hv = add_hour_vars(model, unit, g, t, None);
            let prev = match hours.last() {
                Some(p) => PreviousMode::Vars(p),
                None => PreviousMode::Fixed(spec.previous_mode[g]),
            };
            add_mode_logic(model, unit, &hv, prev);
            add_dispatch_boxes(model, unit, &hv);
            hours.push(hv);
        }
        let mut by_scenario = Vec::with_capacity(scenarios);
        for s in 0..scenarios {
            let mut seq: Vec<PshHourVars> = Vec::new();
            for t in te + 1..=horizon_end {
                let hv = add_hour_vars(model, unit, g, t, Some(s + 1));
                let prev = seq.last().unwrap_or_else(|| hours.last().unwrap());
                add_mode_logic(model, unit, &hv, PreviousMode::Vars(prev));
                add_dispatch_boxes(model, unit, &hv);
                seq.push(hv);
            }
            by_scenario.push(seq);
        }
        window.push(hours);
        post.push(by_scenario);
    }
    let mut block = PshBlock {
        t1,
        te,
        horizon_end,
        window,
        post,
        soc: Vec::new(),
    };
    for r in 0..system.reservoirs.len() {
        let soc = add_soc_dynamics(model, system, r, &block, spec.initial_soc[r].clone(), spec.end_soc)?;
        block.soc.push(soc);
    }
    Ok(block)
}

/// `Σ_g (η_pump·dT) q_pump − (dT/η_gen) q_gen` terms of reservoir `r` at
/// `hour`, negated for the right-hand side of a storage update row.
fn flow_terms<T: Scalar>(system: &System<T>, members: &[usize], block: &PshBlock, hour: usize, scenario: usize) -> Vec<(Var, T)> {
    let dt = system.grid.interval_hours.clone();
    let mut terms = Vec::new();
    for &g in members {
        let u = &system.psh[g];
        let hv = block.at(g, hour, scenario);
        terms.push((hv.q_pump, -(u.eta_pump.clone() * dt.clone())));
        terms.push((hv.q_gen, dt.clone() / u.eta_gen.clone()));
    }
    terms
}

/// Storage columns and rows of reservoir `r`: in-window updates, one
/// crossing row per scenario, per-scenario updates after the window, the
/// start condition and the day-end target. Storage limits are column
/// bounds.
pub fn add_soc_dynamics<T: Scalar>(
    model: &mut MilpModel<T>,
    system: &System<T>,
    r: usize,
    block: &PshBlock,
    initial: T,
    end_soc: EndSoc,
) -> Result<SocVars> {
    let res = &system.reservoirs[r];
    let members = system.members_of(r);
    let (t1, te, horizon_end) = (block.t1, block.te, block.horizon_end);
    let one = T::one;
    let soc_col = |m: &mut MilpModel<T>, hour: usize, s: Option<usize>| {
        m.add_continuous(
            Label::new(ColTag::Soc, res.id.clone()).hour(hour).scenario(s),
            Some(res.e_min.clone()),
            Some(res.e_max.clone()),
            T::zero(),
        )
    };
    let row = |tag: RowTag, hour: usize, s: Option<usize>| Label::new(tag, res.id.clone()).hour(hour).scenario(s);

    let last_det = if te == horizon_end { horizon_end + 1 } else { te };
    let window: Vec<(usize, Var)> = (t1..=last_det).map(|t| (t, soc_col(model, t, None))).collect();
    model.add_row(row(RowTag::SocInitial, t1, None), vec![(window[0].1, one())], Sense::Eq, initial);
    for k in 0..window.len() - 1 {
        let (t, e) = window[k];
        let mut terms = vec![(window[k + 1].1, one()), (e, -one())];
        terms.extend(flow_terms(system, &members, block, t, 0));
        model.add_row(row(RowTag::SocWithinWindow, t, None), terms, Sense::Eq, T::zero());
    }
    let end_sense = match end_soc {
        EndSoc::Fix => Sense::Eq,
        EndSoc::Relax => Sense::Ge,
    };
    let scenarios = block.scenario_count();
    let mut post = Vec::with_capacity(scenarios);
    if te == horizon_end {
        let (_, e_end) = *window.last().unwrap();
        model.add_row(
            row(RowTag::SocFinal, horizon_end + 1, None),
            vec![(e_end, one())],
            end_sense,
            res.e_final_target.clone(),
        );
    } else {
        let e_te = window.last().unwrap().1;
        for s in 0..scenarios {
            let tag = Some(s + 1);
            let seq: Vec<(usize, Var)> = (te + 1..=horizon_end + 1).map(|t| (t, soc_col(model, t, tag))).collect();
            let mut terms = vec![(seq[0].1, one()), (e_te, -one())];
            terms.extend(flow_terms(system, &members, block, te, s));
            model.add_row(row(RowTag::SocCrossing, te, tag), terms, Sense::Eq, T::zero());
            for k in 0..seq.len() - 1 {
                let (t, e) = seq[k];
                let mut terms = vec![(seq[k + 1].1, one()), (e, -one())];
                terms.extend(flow_terms(system, &members, block, t, s));
                model.add_row(row(RowTag::SocPostWindow, t, tag), terms, Sense::Eq, T::zero());
            }
            model.add_row(
                row(RowTag::SocFinal, horizon_end + 1, tag),
                vec![(seq.last().unwrap().1, one())],
                end_sense,
                res.e_final_target.clone(),
            );
            post.push(seq);
        }
    }
    Ok(SocVars {
        reservoir: r,
        window,
        post,
    })
}

/// Storage after one hour of operation.
pub fn soc_step<T: Scalar>(system: &System<T>, r: usize, soc: T, dispatch: &[(usize, T, T)]) -> T {
    let dt = system.grid.interval_hours.clone();
    let mut e = soc;
    for (g, gen, pump) in dispatch {
        let u = &system.psh[*g];
        if u.reservoir_id == system.reservoirs[r].id {
            e = e + u.eta_pump.clone() * pump.clone() * dt.clone() - gen.clone() * dt.clone() / u.eta_gen.clone();
        }
    }
    e
}
