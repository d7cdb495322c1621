use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use psh_lac::forecast::pipeline::ForecastConfig;
use psh_lac::lac_models::DaOptions;
use psh_lac::milp::SolveOptions;
use psh_lac::psh_model::EndSoc;
use psh_lac::rolling::RollingConfig;
use psh_lac::ModelVariant;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub system: Option<PathBuf>,
    pub load: Option<PathBuf>,
    pub da_lmp: Option<PathBuf>,
    pub rt_lmp: Option<PathBuf>,
    pub history: Option<PathBuf>,
    /// Directory written by `forecast`.
    pub scenarios: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    /// Window length `L`; the system file's value when absent.
    pub window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Single variant; `variants` wins when both are given.
    pub variant: Option<ModelVariant>,
    #[serde(rename = "S")]
    pub scenarios: usize,
    pub end_soc: EndSoc,
    pub voll: f64,
    pub gap_tol: f64,
    pub tie_break: f64,
    /// Draw scenarios once at hour 0 and reuse them all day.
    pub reuse_first_scenarios: bool,
    /// Reserve share of the day-ahead thermal commitment.
    pub reserve_margin: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let r = RollingConfig::default();
        ModelConfig {
            variant: None,
            scenarios: r.scenarios,
            end_soc: r.end_soc,
            voll: r.voll,
            gap_tol: r.solver.gap_tol,
            tie_break: r.tie_break,
            reuse_first_scenarios: false,
            reserve_margin: DaOptions::default().reserve_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub name: String,
    pub paths: Paths,
    pub grid: GridConfig,
    pub variants: Vec<ModelVariant>,
    pub model: ModelConfig,
    pub forecast: ForecastConfig,
    pub solver: SolveOptions,
    /// Scenario counts of the first-window size and timing table; empty
    /// skips it.
    pub scaling_scenarios: Vec<usize>,
    /// Seeds the forecast scenarios and the solver.
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "run".into(),
            paths: Paths::default(),
            grid: GridConfig::default(),
            variants: Vec::new(),
            model: ModelConfig::default(),
            forecast: ForecastConfig::default(),
            solver: SolveOptions::default(),
            scaling_scenarios: Vec::new(),
            seed: 7,
            out: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    /// Reads a config and resolves its relative paths against the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(v) = p {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        };
        fix(&mut cfg.paths.system);
        fix(&mut cfg.paths.load);
        fix(&mut cfg.paths.da_lmp);
        fix(&mut cfg.paths.rt_lmp);
        fix(&mut cfg.paths.history);
        fix(&mut cfg.paths.scenarios);
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    /// Requested variants, falling back to `model.variant` and then to all
    /// five.
    pub fn variant_list(&self) -> Vec<ModelVariant> {
        if !self.variants.is_empty() {
            self.variants.clone()
        } else if let Some(v) = self.model.variant {
            vec![v]
        } else {
            ModelVariant::ALL.to_vec()
        }
    }

    pub fn solver_options(&self) -> SolveOptions {
        SolveOptions {
            gap_tol: self.model.gap_tol,
            seed: self.seed,
            ..self.solver.clone()
        }
    }

    pub fn forecast_config(&self) -> ForecastConfig {
        ForecastConfig {
            seed: self.seed,
            scenarios: self.model.scenarios.max(1),
            ..self.forecast.clone()
        }
    }

    pub fn day_ahead(&self) -> DaOptions {
        DaOptions {
            voll: self.model.voll,
            reserve_margin: self.model.reserve_margin,
        }
    }

    pub fn rolling(&self) -> RollingConfig {
        RollingConfig {
            window: self.grid.window,
            scenarios: self.model.scenarios,
            voll: self.model.voll,
            end_soc: self.model.end_soc,
            tie_break: self.model.tie_break,
            solver: self.solver_options(),
        }
    }

    pub fn require(path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        match path {
            Some(p) if p.exists() => Ok(p.clone()),
            Some(p) => bail!("{what} file {} does not exist", p.display()),
            None => bail!("config has no paths.{what} entry"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_block_uses_capital_s() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"model": {"variant": "robust", "S": 20, "end_soc": "relax", "voll": 1000, "gap_tol": 0.01}}"#)
                .unwrap();
        assert_eq!(cfg.model.scenarios, 20);
        assert_eq!(cfg.model.end_soc, EndSoc::Relax);
        assert_eq!(cfg.variant_list(), vec![ModelVariant::Robust]);
        assert_eq!(cfg.solver_options().gap_tol, 0.01);
    }
}
