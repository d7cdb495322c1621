//! Solver-independent mixed-integer linear programs with labelled rows and
//! columns.

mod lp_format;
mod solve;

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::scalar::Scalar;
use crate::system::PshMode;

pub use lp_format::write_lp;
pub use solve::{
    backend_from_env, fix_and_resolve_lp, solve, HighsBackend, MilpBackend, MilpSolution, SolveOptions, SolveStatus,
    BACKEND_ENV,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

/// What a constraint row expresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RowTag {
    /// Supply equals net load plus pumping.
    PowerBalance,
    /// Storage update between two hours inside the window.
    SocWithinWindow,
    /// Storage update from the last window hour into a scenario.
    SocCrossing,
    /// Storage update between two hours of one scenario after the window.
    SocPostWindow,
    /// Storage at the window start equals the carried state.
    SocInitial,
    /// Storage after the last hour meets the day-end target.
    SocFinal,
    /// Worst-case bound on the revenue loss of a reservoir.
    RiskLimit,
    ModeExclusive,
    ModeFlow,
    SingleTransition,
    GenLower,
    GenUpper,
    PumpLower,
    PumpUpper,
    SegmentCapacity,
    OutputSum,
    OutputMin,
    StartupLink,
    MinUp,
    MinDown,
    Reserve,
}

/// What a column represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ColTag {
    ThermalOutput,
    ThermalSegment,
    ThermalCommit,
    ThermalStartup,
    Mode(PshMode),
    Transition(PshMode, PshMode),
    GenDispatch,
    PumpDispatch,
    Soc,
    Risk,
    Shortfall,
    Surplus,
}

impl RowTag {
    pub fn short(self) -> &'static str {
        match self {
            RowTag::PowerBalance => "balance",
            RowTag::SocWithinWindow => "soc_in",
            RowTag::SocCrossing => "soc_cross",
            RowTag::SocPostWindow => "soc_post",
            RowTag::SocInitial => "soc_init",
            RowTag::SocFinal => "soc_end",
            RowTag::RiskLimit => "risk",
            RowTag::ModeExclusive => "mode_one",
            RowTag::ModeFlow => "mode_flow",
            RowTag::SingleTransition => "one_switch",
            RowTag::GenLower => "gen_lo",
            RowTag::GenUpper => "gen_hi",
            RowTag::PumpLower => "pump_lo",
            RowTag::PumpUpper => "pump_hi",
            RowTag::SegmentCapacity => "seg_cap",
            RowTag::OutputSum => "p_sum",
            RowTag::OutputMin => "p_min",
            RowTag::StartupLink => "start",
            RowTag::MinUp => "min_up",
            RowTag::MinDown => "min_down",
            RowTag::Reserve => "reserve",
        }
    }
}

impl ColTag {
    pub fn short(self) -> String {
        match self {
            ColTag::ThermalOutput => "p".into(),
            ColTag::ThermalSegment => "seg".into(),
            ColTag::ThermalCommit => "u".into(),
            ColTag::ThermalStartup => "y".into(),
            ColTag::Mode(m) => format!("u_{}", m.short()),
            ColTag::Transition(a, b) => format!("v_{}_{}", a.short(), b.short()),
            ColTag::GenDispatch => "q_gen".into(),
            ColTag::PumpDispatch => "q_pump".into(),
            ColTag::Soc => "e".into(),
            ColTag::Risk => "w".into(),
            ColTag::Shortfall => "short".into(),
            ColTag::Surplus => "surplus".into(),
        }
    }
}

/// Position of a row or column in the problem's index sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Label<Tag> {
    pub tag: Tag,
    /// Unit, reservoir or system id.
    pub entity: String,
    pub hour: Option<usize>,
    pub scenario: Option<usize>,
    /// Extra index such as a cost segment or a mode.
    pub index: Option<usize>,
}

pub type RowLabel = Label<RowTag>;
pub type ColLabel = Label<ColTag>;

impl<Tag> Label<Tag> {
    pub fn new(tag: Tag, entity: impl Into<String>) -> Self {
        Label {
            tag,
            entity: entity.into(),
            hour: None,
            scenario: None,
            index: None,
        }
    }

    pub fn hour(mut self, t: usize) -> Self {
        self.hour = Some(t);
        self
    }

    pub fn scenario(mut self, s: Option<usize>) -> Self {
        self.scenario = s;
        self
    }

    pub fn index(mut self, i: usize) -> Self {
        self.index = Some(i);
        self
    }

    fn suffix(&self) -> String {
        let mut parts = vec![self.entity.clone()];
        if let Some(t) = self.hour {
            parts.push(format!("t{t}"));
        }
        if let Some(s) = self.scenario {
            parts.push(format!("s{s}"));
        }
        if let Some(i) = self.index {
            parts.push(format!("k{i}"));
        }
        parts.join(",")
    }
}

impl RowLabel {
    pub fn name(&self) -> String {
        format!("{}({})", self.tag.short(), self.suffix())
    }
}

impl ColLabel {
    pub fn name(&self) -> String {
        format!("{}({})", self.tag.short(), self.suffix())
    }
}

/// Column handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Var(pub usize);

/// Row handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Column<T> {
    pub name: String,
    pub label: ColLabel,
    pub kind: VarKind,
    /// `None` is unbounded.
    pub lower: Option<T>,
    pub upper: Option<T>,
    pub cost: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constraint<T> {
    pub name: String,
    pub label: RowLabel,
    /// Sorted by column, one entry per column, no zeros.
    pub coefs: Vec<(Var, T)>,
    pub sense: Sense,
    pub rhs: T,
}

/// Minimisation problem `min cᵀx + offset` subject to labelled rows.
#[derive(Debug, Clone)]
pub struct MilpModel<T> {
    pub columns: Vec<Column<T>>,
    pub rows: Vec<Constraint<T>>,
    pub objective_offset: T,
    col_names: HashMap<String, Var>,
    row_names: HashMap<String, RowId>,
}

/// Size of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModelStats {
    pub rows: usize,
    pub cols: usize,
    pub nonzeros: usize,
    pub binaries: usize,
}

/// Order-independent form used to compare two models.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalModel<T> {
    pub columns: Vec<(String, VarKind, Option<T>, Option<T>, T)>,
    pub rows: Vec<(String, Sense, T, Vec<(String, T)>)>,
    pub objective_offset: T,
}

impl<T: Scalar> Default for MilpModel<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> MilpModel<T> {
    pub fn new() -> Self {
        MilpModel {
            columns: Vec::new(),
            rows: Vec::new(),
            objective_offset: T::zero(),
            col_names: HashMap::new(),
            row_names: HashMap::new(),
        }
    }

    /// Adds a column. Binary columns are clipped to `[0, 1]`.
    ///
    /// # Panics
    /// On a duplicate name, which is a builder bug.
    pub fn add_column(&mut self, label: ColLabel, kind: VarKind, lower: Option<T>, upper: Option<T>, cost: T) -> Var {
        let (lower, upper) = match kind {
            VarKind::Continuous => (lower, upper),
            VarKind::Binary => (
                Some(T::max_of(lower.unwrap_or_else(T::zero), T::zero())),
                Some(T::min_of(upper.unwrap_or_else(T::one), T::one())),
            ),
        };
        let name = label.name();
        let v = Var(self.columns.len());
        let dup = self.col_names.insert(name.clone(), v);
        assert!(dup.is_none(), "duplicate column {name}");
        self.columns.push(Column {
            name,
            label,
            kind,
            lower,
            upper,
            cost,
        });
        v
    }

    pub fn add_binary(&mut self, label: ColLabel, cost: T) -> Var {
        self.add_column(label, VarKind::Binary, None, None, cost)
    }

    pub fn add_continuous(&mut self, label: ColLabel, lower: Option<T>, upper: Option<T>, cost: T) -> Var {
        self.add_column(label, VarKind::Continuous, lower, upper, cost)
    }

    /// Adds a row; repeated columns are summed and zero terms dropped.
    ///
    /// # Panics
    /// On a duplicate name or a term referencing a missing column.
    pub fn add_row(&mut self, label: RowLabel, terms: Vec<(Var, T)>, sense: Sense, rhs: T) -> RowId {
        let mut merged: Vec<(Var, T)> = Vec::with_capacity(terms.len());
        let mut sorted = terms;
        sorted.sort_by_key(|(v, _)| *v);
        for (v, a) in sorted {
            assert!(v.0 < self.columns.len(), "row term references missing column {}", v.0);
            match merged.last_mut() {
                Some((last, acc)) if *last == v => *acc = acc.clone() + a,
                _ => merged.push((v, a)),
            }
        }
        merged.retain(|(_, a)| !a.is_zero());
        let name = label.name();
        let id = RowId(self.rows.len());
        let dup = self.row_names.insert(name.clone(), id);
        assert!(dup.is_none(), "duplicate row {name}");
        self.rows.push(Constraint {
            name,
            label,
            coefs: merged,
            sense,
            rhs,
        });
        id
    }

    pub fn add_cost(&mut self, v: Var, c: T) {
        let col = &mut self.columns[v.0];
        col.cost = col.cost.clone() + c;
    }

    pub fn add_offset(&mut self, c: T) {
        self.objective_offset = self.objective_offset.clone() + c;
    }

    pub fn set_bounds(&mut self, v: Var, lower: Option<T>, upper: Option<T>) {
        let col = &mut self.columns[v.0];
        col.lower = lower;
        col.upper = upper;
    }

    pub fn fix(&mut self, v: Var, value: T) {
        self.set_bounds(v, Some(value.clone()), Some(value));
    }

    pub fn column(&self, v: Var) -> &Column<T> {
        &self.columns[v.0]
    }

    pub fn var(&self, name: &str) -> Option<Var> {
        self.col_names.get(name).copied()
    }

    pub fn var_of(&self, label: &ColLabel) -> Option<Var> {
        self.var(&label.name())
    }

    pub fn row(&self, name: &str) -> Option<&Constraint<T>> {
        self.row_names.get(name).map(|r| &self.rows[r.0])
    }

    pub fn rows_tagged(&self, tag: RowTag) -> impl Iterator<Item = (RowId, &Constraint<T>)> {
        self.rows
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.label.tag == tag)
            .map(|(i, r)| (RowId(i), r))
    }

    pub fn stats(&self) -> ModelStats {
        ModelStats {
            rows: self.rows.len(),
            cols: self.columns.len(),
            nonzeros: self.rows.iter().map(|r| r.coefs.len()).sum(),
            binaries: self.columns.iter().filter(|c| c.kind == VarKind::Binary).count(),
        }
    }

    /// Structural problems: binary bounds outside `[0, 1]` or crossed bounds.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in &self.columns {
            if c.kind == VarKind::Binary {
                let ok = |b: &Option<T>| b.as_ref().is_some_and(|v| *v >= T::zero() && *v <= T::one());
                if !ok(&c.lower) || !ok(&c.upper) {
                    out.push(format!("binary {} has bounds outside [0, 1]", c.name));
                }
            }
            if let (Some(l), Some(u)) = (&c.lower, &c.upper) {
                if l > u {
                    out.push(format!("column {} has lower bound above upper bound", c.name));
                }
            }
        }
        out
    }

    /// Columns and rows sorted by name, coefficients keyed by column name.
    pub fn canonical(&self) -> CanonicalModel<T> {
        let mut columns: Vec<_> = self
            .columns
            .iter()
            .map(|c| (c.name.clone(), c.kind, c.lower.clone(), c.upper.clone(), c.cost.clone()))
            .collect();
        columns.sort_by(|a, b| a.0.cmp(&b.0));
        let mut rows: Vec<_> = self
            .rows
            .iter()
            .map(|r| {
                let mut coefs: Vec<(String, T)> = r
                    .coefs
                    .iter()
                    .map(|(v, a)| (self.columns[v.0].name.clone(), a.clone()))
                    .collect();
                coefs.sort_by(|a, b| a.0.cmp(&b.0));
                (r.name.clone(), r.sense, r.rhs.clone(), coefs)
            })
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        CanonicalModel {
            columns,
            rows,
            objective_offset: self.objective_offset.clone(),
        }
    }

    /// `Σ a_j x_j` of a row at the given column values.
    pub fn activity(&self, row: RowId, values: &[T]) -> T {
        self.rows[row.0]
            .coefs
            .iter()
            .fold(T::zero(), |acc, (v, a)| acc + a.clone() * values[v.0].clone())
    }

    /// `cᵀx + offset`.
    pub fn objective_at(&self, values: &[T]) -> T {
        self.columns
            .iter()
            .zip(values)
            .fold(self.objective_offset.clone(), |acc, (c, x)| acc + c.cost.clone() * x.clone())
    }

    /// Largest bound or row violation at the given column values.
    pub fn max_violation(&self, values: &[T]) -> T {
        let mut worst = T::zero();
        for (c, x) in self.columns.iter().zip(values) {
            if let Some(l) = &c.lower {
                worst = T::max_of(worst, l.clone() - x.clone());
            }
            if let Some(u) = &c.upper {
                worst = T::max_of(worst, x.clone() - u.clone());
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            let a = self.activity(RowId(i), values);
            let gap = match r.sense {
                Sense::Le => a - r.rhs.clone(),
                Sense::Ge => r.rhs.clone() - a,
                Sense::Eq => (a - r.rhs.clone()).abs(),
            };
            worst = T::max_of(worst, gap);
        }
        worst
    }

    /// Converts every number with `f`, keeping the structure.
    pub fn map_scalar<U: Scalar>(&self, f: impl Fn(&T) -> U + Copy) -> MilpModel<U> {
        MilpModel {
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    label: c.label.clone(),
                    kind: c.kind,
                    lower: c.lower.as_ref().map(f),
                    upper: c.upper.as_ref().map(f),
                    cost: f(&c.cost),
                })
                .collect(),
            rows: self
                .rows
                .iter()
                .map(|r| Constraint {
                    name: r.name.clone(),
                    label: r.label.clone(),
                    coefs: r.coefs.iter().map(|(v, a)| (*v, f(a))).collect(),
                    sense: r.sense,
                    rhs: f(&r.rhs),
                })
                .collect(),
            objective_offset: f(&self.objective_offset),
            col_names: self.col_names.clone(),
            row_names: self.row_names.clone(),
        }
    }
}
