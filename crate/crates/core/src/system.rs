//! Domain types shared across the pipeline: time grid, thermal and
//! pumped-storage units, reservoirs, market data and price scenarios.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Hour indexing of one operating day and the look-ahead window length.
///
/// Hours are 1-based. A window starting at `start_index` covers
/// `start_index ..= window_end()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid<T> {
    pub start_index: usize,
    pub horizon_end: usize,
    pub window_length: usize,
    pub interval_hours: T,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn hourly(horizon_end: usize, window_length: usize) -> Self {
        TimeGrid {
            start_index: 1,
            horizon_end,
            window_length,
            interval_hours: T::one(),
        }
    }

    /// Last hour of the window that starts at `t1`, clipped to the day end.
    pub fn window_end(&self, t1: usize) -> usize {
        (t1 + self.window_length - 1).min(self.horizon_end)
    }

    /// Number of fix-and-slide windows in the day.
    pub fn window_count(&self) -> usize {
        self.horizon_end + 1 - self.start_index + 1 - self.window_length
    }

    /// Start hours of every window, in order.
    pub fn window_starts(&self) -> impl Iterator<Item = usize> {
        let first = self.start_index;
        first..first + self.window_count()
    }
}

/// One block of a convex piecewise-linear energy cost curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSegment<T> {
    pub width_mw: T,
    pub price: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialStatus {
    pub committed: bool,
    pub hours_in_state: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalUnit<T> {
    pub id: String,
    /// Blocks covering `[0, p_max]`; block prices must be non-decreasing.
    pub cost_curve: Vec<CostSegment<T>>,
    pub no_load_cost: T,
    pub startup_cost: T,
    pub p_min: T,
    pub p_max: T,
    pub min_up: usize,
    pub min_down: usize,
    pub initial_status: InitialStatus,
    /// Day-ahead commitment per hour; empty until a day-ahead run fills it.
    #[serde(default)]
    pub da_commitment: Vec<bool>,
}

impl<T: Scalar> ThermalUnit<T> {
    /// Startup count implied by the day-ahead commitment over hours `1..=t`.
    pub fn da_startup_at(&self, hour: usize) -> bool {
        let now = self.da_commitment[hour - 1];
        let before = if hour == 1 {
            self.initial_status.committed
        } else {
            self.da_commitment[hour - 2]
        };
        now && !before
    }

    /// Cost of producing `p` MW for one hour while committed.
    pub fn energy_cost(&self, p: T) -> T {
        let mut left = p;
        let mut cost = T::zero();
        for seg in &self.cost_curve {
            if left <= T::zero() {
                break;
            }
            let take = T::min_of(left.clone(), seg.width_mw.clone());
            cost = cost + take.clone() * seg.price.clone();
            left = left - take;
        }
        cost
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reservoir<T> {
    pub id: String,
    pub e_min: T,
    pub e_max: T,
    pub e_initial: T,
    pub e_final_target: T,
    pub member_units: Vec<String>,
}

/// Operating mode of a pumped-storage unit in one hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PshMode {
    Offline,
    Gen,
    Pump,
}

impl PshMode {
    pub const ALL: [PshMode; 3] = [PshMode::Offline, PshMode::Gen, PshMode::Pump];

    pub fn index(self) -> usize {
        match self {
            PshMode::Offline => 0,
            PshMode::Gen => 1,
            PshMode::Pump => 2,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            PshMode::Offline => "off",
            PshMode::Gen => "gen",
            PshMode::Pump => "pump",
        }
    }
}

impl fmt::Display for PshMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PshUnit<T> {
    pub id: String,
    pub reservoir_id: String,
    pub gen_min: T,
    pub gen_max: T,
    pub pump_min: T,
    pub pump_max: T,
    pub eta_gen: T,
    pub eta_pump: T,
    #[serde(default)]
    pub startup_cost_gen: T,
    #[serde(default)]
    pub startup_cost_pump: T,
    pub node_id: String,
    /// Mode in the hour before the day starts.
    #[serde(default = "offline")]
    pub initial_mode: PshMode,
    #[serde(default)]
    pub da_gen: Vec<T>,
    #[serde(default)]
    pub da_pump: Vec<T>,
}

fn offline() -> PshMode {
    PshMode::Offline
}

impl<T: Scalar> PshUnit<T> {
    /// Mode implied by the day-ahead schedule at `hour`.
    pub fn da_mode(&self, hour: usize) -> PshMode {
        if self.da_gen[hour - 1] > T::zero() {
            PshMode::Gen
        } else if self.da_pump[hour - 1] > T::zero() {
            PshMode::Pump
        } else {
            PshMode::Offline
        }
    }

    /// Day-ahead net injection (generation minus pumping) at `hour`.
    pub fn da_net(&self, hour: usize) -> T {
        self.da_gen[hour - 1].clone() - self.da_pump[hour - 1].clone()
    }

    pub fn has_da_schedule(&self) -> bool {
        !self.da_gen.is_empty() && !self.da_pump.is_empty()
    }

    /// Transition cost charged when the unit enters `to` from another mode.
    pub fn entry_cost(&self, to: PshMode) -> T {
        match to {
            PshMode::Gen => self.startup_cost_gen.clone(),
            PshMode::Pump => self.startup_cost_pump.clone(),
            PshMode::Offline => T::zero(),
        }
    }
}

/// Complete static description of the simulated system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct System<T> {
    pub grid: TimeGrid<T>,
    #[serde(default)]
    pub thermal: Vec<ThermalUnit<T>>,
    #[serde(default)]
    pub psh: Vec<PshUnit<T>>,
    #[serde(default)]
    pub reservoirs: Vec<Reservoir<T>>,
}

impl<T: Scalar> System<T> {
    pub fn hours(&self) -> usize {
        self.grid.horizon_end
    }

    pub fn reservoir_index(&self, id: &str) -> Option<usize> {
        self.reservoirs.iter().position(|r| r.id == id)
    }

    pub fn psh_index(&self, id: &str) -> Option<usize> {
        self.psh.iter().position(|u| u.id == id)
    }

    /// Indices into `self.psh` of the units drawing on reservoir `r`.
    pub fn members_of(&self, r: usize) -> Vec<usize> {
        let id = &self.reservoirs[r].id;
        self.psh
            .iter()
            .enumerate()
            .filter(|(_, u)| &u.reservoir_id == id)
            .map(|(i, _)| i)
            .collect()
    }

    /// Distinct price nodes of the PSH units, in unit order.
    pub fn psh_nodes(&self) -> Vec<String> {
        let mut nodes: Vec<String> = Vec::new();
        for u in &self.psh {
            if !nodes.contains(&u.node_id) {
                nodes.push(u.node_id.clone());
            }
        }
        nodes
    }

    /// Converts every numeric field with `f`.
    pub fn map_scalar<U: Scalar>(&self, f: impl Fn(&T) -> U + Copy) -> System<U> {
        System {
            grid: TimeGrid {
                start_index: self.grid.start_index,
                horizon_end: self.grid.horizon_end,
                window_length: self.grid.window_length,
                interval_hours: f(&self.grid.interval_hours),
            },
            thermal: self
                .thermal
                .iter()
                .map(|g| ThermalUnit {
                    id: g.id.clone(),
                    cost_curve: g
                        .cost_curve
                        .iter()
                        .map(|s| CostSegment {
                            width_mw: f(&s.width_mw),
                            price: f(&s.price),
                        })
                        .collect(),
                    no_load_cost: f(&g.no_load_cost),
                    startup_cost: f(&g.startup_cost),
                    p_min: f(&g.p_min),
                    p_max: f(&g.p_max),
                    min_up: g.min_up,
                    min_down: g.min_down,
                    initial_status: g.initial_status,
                    da_commitment: g.da_commitment.clone(),
                })
                .collect(),
            psh: self
                .psh
                .iter()
                .map(|u| PshUnit {
                    id: u.id.clone(),
                    reservoir_id: u.reservoir_id.clone(),
                    gen_min: f(&u.gen_min),
                    gen_max: f(&u.gen_max),
                    pump_min: f(&u.pump_min),
                    pump_max: f(&u.pump_max),
                    eta_gen: f(&u.eta_gen),
                    eta_pump: f(&u.eta_pump),
                    startup_cost_gen: f(&u.startup_cost_gen),
                    startup_cost_pump: f(&u.startup_cost_pump),
                    node_id: u.node_id.clone(),
                    initial_mode: u.initial_mode,
                    da_gen: u.da_gen.iter().map(f).collect(),
                    da_pump: u.da_pump.iter().map(f).collect(),
                })
                .collect(),
            reservoirs: self
                .reservoirs
                .iter()
                .map(|r| Reservoir {
                    id: r.id.clone(),
                    e_min: f(&r.e_min),
                    e_max: f(&r.e_max),
                    e_initial: f(&r.e_initial),
                    e_final_target: f(&r.e_final_target),
                    member_units: r.member_units.clone(),
                })
                .collect(),
        }
    }
}

/// Market data of one simulated operating day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketDay<T> {
    pub label: String,
    /// Actual real-time net load per hour.
    pub net_load: Vec<T>,
    /// Day-ahead net load forecast per hour.
    pub da_load: Vec<T>,
    /// Day-ahead LMP per PSH node.
    pub da_lmp: BTreeMap<String, Vec<T>>,
    /// After-the-fact real-time LMP per PSH node.
    pub rt_lmp_actual: BTreeMap<String, Vec<T>>,
}

/// Weighted price trajectories for the PSH nodes.
///
/// `prices[s][n][k]` is the price of scenario `s` at node `nodes[n]` in hour
/// `first_hour + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceScenarioSet<T> {
    pub forecast_origin: usize,
    pub first_hour: usize,
    pub last_hour: usize,
    pub nodes: Vec<String>,
    pub prices: Vec<Vec<Vec<T>>>,
    pub weights: Vec<T>,
}

impl<T: Scalar> PriceScenarioSet<T> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node_index(&self, node: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == node)
    }

    pub fn price(&self, scenario: usize, node: usize, hour: usize) -> T {
        self.prices[scenario][node][hour - self.first_hour].clone()
    }

    /// Keeps hours `from ..= last_hour`.
    pub fn restrict_from(&self, from: usize) -> PriceScenarioSet<T> {
        let skip = from.saturating_sub(self.first_hour);
        PriceScenarioSet {
            forecast_origin: self.forecast_origin,
            first_hour: from.max(self.first_hour),
            last_hour: self.last_hour,
            nodes: self.nodes.clone(),
            prices: self
                .prices
                .iter()
                .map(|by_node| by_node.iter().map(|row| row.iter().skip(skip).cloned().collect()).collect())
                .collect(),
            weights: self.weights.clone(),
        }
    }

    /// Keeps only the first `count` scenarios and renormalises their weights.
    pub fn truncate(&self, count: usize) -> PriceScenarioSet<T> {
        let count = count.min(self.len());
        let weights: Vec<T> = self.weights[..count].to_vec();
        let total = weights.iter().cloned().fold(T::zero(), |a, b| a + b);
        PriceScenarioSet {
            forecast_origin: self.forecast_origin,
            first_hour: self.first_hour,
            last_hour: self.last_hour,
            nodes: self.nodes.clone(),
            prices: self.prices[..count].to_vec(),
            weights: weights.into_iter().map(|w| w / total.clone()).collect(),
        }
    }

    /// A single-trajectory set with weight one.
    pub fn single(
        forecast_origin: usize,
        first_hour: usize,
        last_hour: usize,
        nodes: Vec<String>,
        trajectory: Vec<Vec<T>>,
    ) -> Self {
        PriceScenarioSet {
            forecast_origin,
            first_hour,
            last_hour,
            nodes,
            prices: vec![trajectory],
            weights: vec![T::one()],
        }
    }
}

/// A broken invariant found by validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub entity: String,
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(entity: impl Into<String>, field: impl Into<String>, rule: impl Into<String>) -> Self {
        Violation {
            entity: entity.into(),
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}: {}", self.entity, self.field, self.rule)
    }
}

/// Checks every invariant of the system description. Violations are data:
/// the function never fails and never panics.
pub fn validate_system<T: Scalar>(system: &System<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    let zero = T::zero();
    let one = T::one();
    let hours = system.grid.horizon_end;

    let g = &system.grid;
    if g.window_length < 1 || g.start_index < 1 || g.start_index > hours || g.window_length > hours + 1 - g.start_index {
        out.push(Violation::new("grid", "window_length", "1 <= L <= T - start_index + 1"));
    }
    if g.interval_hours <= zero {
        out.push(Violation::new("grid", "interval_hours", "dT > 0"));
    }

    for u in &system.thermal {
        if u.p_min < zero || u.p_min > u.p_max {
            out.push(Violation::new(&u.id, "p_min", "0 <= p_min <= p_max"));
        }
        if u.cost_curve.windows(2).any(|w| w[1].price < w[0].price) {
            out.push(Violation::new(&u.id, "cost_curve", "segment prices non-decreasing"));
        }
        if u.cost_curve.iter().any(|s| s.width_mw < zero) {
            out.push(Violation::new(&u.id, "cost_curve", "segment widths non-negative"));
        }
        let width = u.cost_curve.iter().fold(zero.clone(), |a, s| a + s.width_mw.clone());
        if width != u.p_max {
            out.push(Violation::new(&u.id, "cost_curve", "segment widths sum to p_max"));
        }
        if !u.da_commitment.is_empty() && u.da_commitment.len() != hours {
            out.push(Violation::new(&u.id, "da_commitment", "one entry per hour"));
        }
    }

    for r in &system.reservoirs {
        if r.e_min > r.e_max {
            out.push(Violation::new(&r.id, "e_min", "e_min <= e_max"));
        }
        if r.e_initial < r.e_min || r.e_initial > r.e_max {
            out.push(Violation::new(&r.id, "e_initial", "e_min <= e_initial <= e_max"));
        }
        if r.e_final_target < r.e_min || r.e_final_target > r.e_max {
            out.push(Violation::new(&r.id, "e_final_target", "e_min <= e_final_target <= e_max"));
        }
        if r.member_units.is_empty() {
            out.push(Violation::new(&r.id, "member_units", "non-empty"));
        }
        for m in &r.member_units {
            match system.psh.iter().find(|u| &u.id == m) {
                None => out.push(Violation::new(&r.id, "member_units", format!("unknown unit {m}"))),
                Some(u) if u.reservoir_id != r.id => {
                    out.push(Violation::new(&r.id, "member_units", format!("{m} belongs to {}", u.reservoir_id)))
                }
                _ => {}
            }
        }
    }

    for u in &system.psh {
        if system.reservoir_index(&u.reservoir_id).is_none() {
            out.push(Violation::new(&u.id, "reservoir_id", "references an existing reservoir"));
        }
        if u.gen_min < zero || u.gen_min > u.gen_max {
            out.push(Violation::new(&u.id, "gen_min", "0 <= gen_min <= gen_max"));
        }
        if u.pump_min < zero || u.pump_min > u.pump_max {
            out.push(Violation::new(&u.id, "pump_min", "0 <= pump_min <= pump_max"));
        }
        if u.eta_gen <= zero || u.eta_gen > one {
            out.push(Violation::new(&u.id, "eta_gen", "0 < eta_gen <= 1"));
        }
        if u.eta_pump <= zero || u.eta_pump > one {
            out.push(Violation::new(&u.id, "eta_pump", "0 < eta_pump <= 1"));
        }
        if u.da_gen.len() != u.da_pump.len() || (!u.da_gen.is_empty() && u.da_gen.len() != hours) {
            out.push(Violation::new(&u.id, "da_gen", "one entry per hour"));
        }
        for (h, (gq, pq)) in u.da_gen.iter().zip(&u.da_pump).enumerate() {
            if *gq > zero && *pq > zero {
                out.push(Violation::new(&u.id, "da_gen", format!("hour {}: not both generating and pumping", h + 1)));
            }
        }
    }
    out
}

impl<T: Scalar> MarketDay<T> {
    /// Checks that every series has one value per hour.
    pub fn violations(&self, hours: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.net_load.len() != hours {
            out.push(Violation::new(&self.label, "net_load", format!("exactly {hours} entries")));
        }
        if self.da_load.len() != hours {
            out.push(Violation::new(&self.label, "da_load", format!("exactly {hours} entries")));
        }
        for (field, map) in [("da_lmp", &self.da_lmp), ("rt_lmp_actual", &self.rt_lmp_actual)] {
            for (node, series) in map {
                if series.len() != hours {
                    out.push(Violation::new(node, field, format!("exactly {hours} entries")));
                }
            }
        }
        out
    }
}

impl<T: Scalar> PriceScenarioSet<T> {
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let entity = format!("scenarios@{}", self.forecast_origin);
        let total = self.weights.iter().cloned().fold(T::zero(), |a, b| a + b);
        let tol = T::from_f64(1e-9).unwrap_or_else(T::zero);
        if (total - T::one()).abs() > tol {
            out.push(Violation::new(&entity, "weights", "weights sum ≠ 1"));
        }
        if self.weights.iter().any(|w| *w <= T::zero()) {
            out.push(Violation::new(&entity, "weights", "all weights > 0"));
        }
        if self.prices.len() != self.weights.len() {
            out.push(Violation::new(&entity, "prices", "one trajectory per weight"));
        }
        let span = (self.last_hour + 1).saturating_sub(self.first_hour);
        let ragged = self
            .prices
            .iter()
            .any(|s| s.len() != self.nodes.len() || s.iter().any(|row| row.len() != span));
        if ragged {
            out.push(Violation::new(&entity, "prices", "identical hour range for every trajectory"));
        }
        out
    }
}
