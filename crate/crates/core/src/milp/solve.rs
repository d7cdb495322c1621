use std::time::Instant;

use highs::{HighsModelStatus, HighsSolutionStatus, RowProblem, Sense as HSense};
use serde::Serialize;

use super::{MilpModel, RowTag, Sense, Var, VarKind};
use crate::error::{Error, Result};

/// Environment variable naming the MILP backend.
pub const BACKEND_ENV: &str = "SOLVER_BACKEND";

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Relative MIP gap.
    pub gap_tol: f64,
    pub time_limit_s: f64,
    pub seed: u64,
    pub threads: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            gap_tol: 1e-3,
            time_limit_s: 60.0,
            seed: 0,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Feasible { gap: f64 },
    Infeasible,
    Unbounded,
    TimeLimit { gap: f64 },
}

impl SolveStatus {
    pub fn label(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible { .. } => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::TimeLimit { .. } => "time_limit",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MilpSolution {
    pub status: SolveStatus,
    /// Column values; empty when no solution was found.
    pub values: Vec<f64>,
    /// Objective including the model's constant offset.
    pub objective: f64,
    pub gap: f64,
    pub walltime_s: f64,
    /// Row duals as `∂objective/∂rhs`; only for linear re-solves.
    pub duals: Option<Vec<f64>>,
}

impl MilpSolution {
    pub fn has_solution(&self) -> bool {
        !self.values.is_empty()
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }

    /// Values of every binary column, as needed by [`fix_and_resolve_lp`].
    pub fn binary_values(&self, model: &MilpModel<f64>) -> Vec<(Var, f64)> {
        model
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == VarKind::Binary)
            .map(|(j, _)| (Var(j), self.values[j].round()))
            .collect()
    }

    /// `(hour, dual)` of every power-balance row, in hour order.
    pub fn balance_prices(&self, model: &MilpModel<f64>) -> Vec<(usize, f64)> {
        let Some(duals) = &self.duals else {
            return Vec::new();
        };
        let mut out: Vec<(usize, f64)> = model
            .rows_tagged(RowTag::PowerBalance)
            .map(|(id, r)| (r.label.hour.unwrap_or(0), duals[id.0]))
            .collect();
        out.sort_by_key(|p| p.0);
        out
    }
}

/// A MILP solver adapter.
pub trait MilpBackend: Send + Sync {
    fn name(&self) -> &'static str;

    /// Solves the model; with `relax` every binary is treated as continuous
    /// and row duals are returned.
    fn solve(&self, model: &MilpModel<f64>, options: &SolveOptions, relax: bool) -> Result<MilpSolution>;
}

/// Backend chosen by [`BACKEND_ENV`]; unset means HiGHS.
pub fn backend_from_env() -> Result<Box<dyn MilpBackend>> {
    match std::env::var(BACKEND_ENV).ok().as_deref().map(str::to_ascii_lowercase).as_deref() {
        None | Some("") | Some("highs") => Ok(Box::new(HighsBackend)),
        Some(other) => Err(Error::Config(format!(
            "unknown {BACKEND_ENV} '{other}' (available: highs)"
        ))),
    }
}

/// Solves with the backend selected by the environment.
pub fn solve(model: &MilpModel<f64>, options: &SolveOptions) -> Result<MilpSolution> {
    backend_from_env()?.solve(model, options, false)
}

/// Fixes every binary to the given value and solves the remaining LP,
/// returning row duals.
pub fn fix_and_resolve_lp(model: &MilpModel<f64>, binary_values: &[(Var, f64)], options: &SolveOptions) -> Result<MilpSolution> {
    let mut fixed = model.clone();
    let mut seen = vec![false; model.columns.len()];
    for (v, x) in binary_values {
        if model.columns[v.0].kind != VarKind::Binary {
            return Err(Error::Precondition(format!("{} is not binary", model.columns[v.0].name)));
        }
        fixed.fix(*v, x.round());
        seen[v.0] = true;
    }
    if let Some(c) = model
        .columns
        .iter()
        .zip(&seen)
        .find(|(c, s)| c.kind == VarKind::Binary && !**s)
    {
        return Err(Error::Precondition(format!("no value given for binary {}", c.0.name)));
    }
    backend_from_env()?.solve(&fixed, options, true)
}

/// HiGHS through its C API.
#[derive(Debug, Clone, Copy, Default)]
pub struct HighsBackend;

impl HighsBackend {
    fn run(model: &MilpModel<f64>, options: &SolveOptions, relax: bool, presolve: bool) -> Result<(HighsModelStatus, MilpSolution)> {
        let start = Instant::now();
        let mut pb = RowProblem::default();
        let cols: Vec<_> = model
            .columns
            .iter()
            .map(|c| {
                let lo = c.lower.unwrap_or(f64::NEG_INFINITY);
                let hi = c.upper.unwrap_or(f64::INFINITY);
                if c.kind == VarKind::Binary && !relax {
                    pb.add_integer_column(c.cost, lo..=hi)
                } else {
                    pb.add_column(c.cost, lo..=hi)
                }
            })
            .collect();
        for r in &model.rows {
            let terms: Vec<_> = r.coefs.iter().map(|(v, a)| (cols[v.0], *a)).collect();
            match r.sense {
                Sense::Le => pb.add_row(..=r.rhs, terms),
                Sense::Ge => pb.add_row(r.rhs.., terms),
                Sense::Eq => pb.add_row(r.rhs..=r.rhs, terms),
            }
        }
        let mut m = pb
            .try_optimise(HSense::Minimise)
            .map_err(|e| Error::Solver(format!("HiGHS rejected the model: {e:?}")))?;
        m.make_quiet();
        m.set_option("threads", options.threads.max(1) as i32);
        m.set_option("mip_rel_gap", options.gap_tol);
        m.set_option("time_limit", options.time_limit_s);
        m.set_option("random_seed", (options.seed % i32::MAX as u64) as i32);
        if !presolve {
            m.set_option("presolve", "off");
        }
        let solved = m
            .try_solve()
            .map_err(|e| Error::Solver(format!("HiGHS failed: {e:?}")))?;
        let status = solved.status();
        let has_primal = solved.primal_solution_status() == HighsSolutionStatus::Feasible;
        let is_mip = !relax && model.columns.iter().any(|c| c.kind == VarKind::Binary);
        let gap = if is_mip { solved.mip_gap() } else { 0.0 };
        let sol = solved.get_solution();
        let out_status = match status {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => SolveStatus::Infeasible,
            HighsModelStatus::Unbounded => SolveStatus::Unbounded,
            HighsModelStatus::ReachedTimeLimit => SolveStatus::TimeLimit { gap },
            _ if has_primal => SolveStatus::Feasible { gap },
            other => return Err(Error::Solver(format!("HiGHS ended with status {other:?}"))),
        };
        let keep = has_primal && !matches!(out_status, SolveStatus::Infeasible | SolveStatus::Unbounded);
        let values = if keep { sol.columns().to_vec() } else { Vec::new() };
        let objective = if keep {
            solved.objective_value() + model.objective_offset
        } else {
            f64::NAN
        };
        let duals = (relax && keep).then(|| sol.dual_rows().to_vec());
        Ok((
            status,
            MilpSolution {
                status: out_status,
                values,
                objective,
                gap,
                walltime_s: start.elapsed().as_secs_f64(),
                duals,
            },
        ))
    }
}

impl MilpBackend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve(&self, model: &MilpModel<f64>, options: &SolveOptions, relax: bool) -> Result<MilpSolution> {
        if model.columns.is_empty() {
            let feasible = model.max_violation(&[]) <= 1e-9;
            return Ok(MilpSolution {
                status: if feasible { SolveStatus::Optimal } else { SolveStatus::Infeasible },
                values: Vec::new(),
                objective: if feasible { model.objective_offset } else { f64::NAN },
                gap: 0.0,
                walltime_s: 0.0,
                duals: relax.then(|| vec![0.0; model.rows.len()]),
            });
        }
        let (raw, sol) = Self::run(model, options, relax, true)?;
        if raw == HighsModelStatus::UnboundedOrInfeasible {
            // Presolve cannot tell the two apart; the plain algorithm can.
            return Ok(Self::run(model, options, relax, false)?.1);
        }
        Ok(sol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{ColTag, Label};

    fn col(name: &str) -> Label<ColTag> {
        Label::new(ColTag::Soc, name)
    }

    #[test]
    fn one_variable_lp() {
        let mut m = MilpModel::new();
        let x = m.add_continuous(col("x"), None, None, 1.0);
        m.add_row(Label::new(RowTag::SocInitial, "x"), vec![(x, 1.0)], Sense::Ge, 3.0);
        let s = solve(&m, &SolveOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.value(x) - 3.0).abs() < 1e-9);
        assert!((s.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn binary_knapsack() {
        let mut m = MilpModel::new();
        let x = m.add_binary(col("x"), -1.0);
        let y = m.add_binary(col("y"), -1.0);
        m.add_row(Label::new(RowTag::SocFinal, "k"), vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.0);
        let s = solve(&m, &SolveOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective + 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_polytope_is_infeasible() {
        let mut m = MilpModel::new();
        let x = m.add_continuous(col("x"), None, None, 0.0);
        m.add_row(Label::new(RowTag::SocInitial, "a"), vec![(x, 1.0)], Sense::Ge, 2.0);
        m.add_row(Label::new(RowTag::SocFinal, "b"), vec![(x, 1.0)], Sense::Le, 1.0);
        let s = solve(&m, &SolveOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(!s.has_solution());
    }

    #[test]
    fn duals_are_objective_sensitivities() {
        // min 25 p s.t. p = 40 (as a ≥ and an = row).
        for sense in [Sense::Eq, Sense::Ge] {
            let mut m = MilpModel::new();
            let p = m.add_continuous(col("p"), Some(0.0), Some(100.0), 25.0);
            m.add_row(Label::new(RowTag::PowerBalance, "sys").hour(1), vec![(p, 1.0)], sense, 40.0);
            let s = fix_and_resolve_lp(&m, &[], &SolveOptions::default()).unwrap();
            assert_eq!(s.balance_prices(&m), vec![(1, 25.0)]);
        }
    }

    #[test]
    fn missing_binary_value_is_rejected() {
        let mut m = MilpModel::new();
        m.add_binary(col("b"), 1.0);
        assert!(fix_and_resolve_lp(&m, &[], &SolveOptions::default()).is_err());
    }

    #[test]
    fn offset_is_reported() {
        let mut m = MilpModel::new();
        let x = m.add_continuous(col("x"), Some(1.0), Some(2.0), 1.0);
        m.add_offset(10.0);
        let s = solve(&m, &SolveOptions::default()).unwrap();
        assert!((s.objective - 11.0).abs() < 1e-9);
        assert!((s.value(x) - 1.0).abs() < 1e-9);
    }
}
