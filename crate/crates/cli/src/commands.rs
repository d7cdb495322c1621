use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use psh_lac::accounting::{evaluate_day, scaling_report, write_fig_dispatch, write_fig_lmp, EvaluationReport};
use psh_lac::forecast::pipeline::{envelope_coverage, ks_critical_1pct, ks_statistic_uniform, ForecastPipeline};
use psh_lac::io::{self as pio, HourlySeries, PriceHistory, LOAD_DA, LOAD_RT};
use psh_lac::lac_models::{build_da_reference, build_variant, LacInstance, ModelVariant};
use psh_lac::milp::solve;
use psh_lac::rolling::{run_variants, FixedScenarios, ReuseFirst, ScenarioSource, SimulationLedger};
use psh_lac::synth::{generate, SynthConfig};
use psh_lac::system::{validate_system, MarketDay, PriceScenarioSet, System};
use serde::Serialize;

use crate::config::RunConfig;
use crate::Common;

#[derive(Args, Debug, Clone)]
pub struct Sizes {
    #[arg(long, default_value_t = 24)]
    pub hours: usize,
    #[arg(long, default_value_t = 6)]
    pub thermal_units: usize,
    #[arg(long, default_value_t = 2)]
    pub psh_units: usize,
    #[arg(long, default_value_t = 1000.0)]
    pub peak_load: f64,
    /// 0 copies day-ahead load into real time; 1 moves the peaks by two hours.
    #[arg(long, default_value_t = 0.5)]
    pub divergence: f64,
    #[arg(long, default_value_t = 70)]
    pub history_days: usize,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if !common.variant.is_empty() {
        cfg.variants = common
            .variant
            .iter()
            .map(|v| v.trim().parse::<ModelVariant>())
            .collect::<psh_lac::Result<_>>()?;
    }
    if let Some(s) = common.scenarios {
        cfg.model.scenarios = s;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(w) = common.window {
        cfg.grid.window = Some(w);
    }
    Ok(cfg)
}

/// Creates `<out>/<name>-<UTC timestamp>` and stores the effective config.
fn run_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let mut dir = cfg.out.join(format!("{}-{stamp}", cfg.name));
    let mut k = 1;
    while dir.exists() {
        dir = cfg.out.join(format!("{}-{stamp}-{k}", cfg.name));
        k += 1;
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn read_inputs(cfg: &RunConfig) -> Result<(System<f64>, MarketDay<f64>)> {
    let sys_path = RunConfig::require(&cfg.paths.system, "system")?;
    let system = pio::read_system(&sys_path).with_context(|| format!("reading {}", sys_path.display()))?;
    let problems = validate_system(&system);
    if !problems.is_empty() {
        let list: Vec<String> = problems.iter().map(ToString::to_string).collect();
        bail!("system {} is invalid: {}", sys_path.display(), list.join("; "));
    }
    let series = |what: &str, p: &Option<PathBuf>| -> Result<HourlySeries> {
        let path = RunConfig::require(p, what)?;
        pio::read_series(&path).with_context(|| format!("reading {}", path.display()))
    };
    let load = series("load", &cfg.paths.load)?;
    let da = series("da_lmp", &cfg.paths.da_lmp)?;
    let rt = series("rt_lmp", &cfg.paths.rt_lmp)?;
    let day = pio::market_day_from_series(&cfg.name, &load, &da, &rt)?;
    let problems = day.violations(system.hours());
    if !problems.is_empty() {
        let list: Vec<String> = problems.iter().map(ToString::to_string).collect();
        bail!("market data do not match the {}-hour system: {}", system.hours(), list.join("; "));
    }
    Ok((system, day))
}

fn read_history(cfg: &RunConfig) -> Result<PriceHistory> {
    let path = RunConfig::require(&cfg.paths.history, "history")?;
    pio::read_history(&path).with_context(|| format!("reading {}", path.display()))
}

#[derive(Serialize)]
struct Calibration {
    pit_count: usize,
    ks_statistic: f64,
    ks_critical_1pct: f64,
    ks_pass: bool,
    envelope: [f64; 2],
    inside: usize,
    total: usize,
    coverage: f64,
}

fn prices_file(dir: &Path, origin: usize) -> PathBuf {
    dir.join(format!("origin_{origin:02}_prices.csv"))
}

fn weights_file(dir: &Path, origin: usize) -> PathBuf {
    dir.join(format!("origin_{origin:02}_weights.csv"))
}

const POINT_FILE: &str = "point_forecast.csv";

pub fn forecast(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let (system, day) = read_inputs(&cfg)?;
    let history = read_history(&cfg)?;
    let fcfg = cfg.forecast_config();
    let pipeline = ForecastPipeline::train(&history, &fcfg)?;
    let nodes = system.psh_nodes();
    let fc = pipeline.for_day(&day, &nodes)?;
    let dir = run_dir(&cfg)?;
    let sdir = dir.join("scenarios");
    fs::create_dir_all(&sdir)?;
    let hours = system.hours();
    let count = cfg.model.scenarios.max(1);
    let mut point_rows = csv::Writer::from_writer(create(&sdir.join(POINT_FILE))?);
    point_rows.write_record(["origin", "node", "hour", "price"])?;
    let mut pit = Vec::new();
    let (mut inside, mut total) = (0, 0);
    for origin in 0..hours {
        let set = fc.scenarios(origin, count)?;
        pio::write_scenarios(create(&prices_file(&sdir, origin))?, create(&weights_file(&sdir, origin))?, &set)?;
        let point = fc.point(origin)?;
        for (n, series) in nodes.iter().zip(&point) {
            for (k, p) in series.iter().enumerate() {
                point_rows.write_record([origin.to_string(), n.clone(), (origin + 1 + k).to_string(), format!("{p}")])?;
            }
        }
        pit.extend(fc.actual_pit(origin)?);
        if count > 1 {
            let (i, t) = envelope_coverage(&set, &day.rt_lmp_actual, 0.05, 0.95);
            inside += i;
            total += t;
        }
    }
    point_rows.flush()?;
    let ks = ks_statistic_uniform(&pit);
    let crit = ks_critical_1pct(pit.len());
    let cal = Calibration {
        pit_count: pit.len(),
        ks_statistic: ks,
        ks_critical_1pct: crit,
        ks_pass: ks <= crit,
        envelope: [0.05, 0.95],
        inside,
        total,
        coverage: if total == 0 { 0.0 } else { inside as f64 / total as f64 },
    };
    fs::write(dir.join("calibration.json"), serde_json::to_string_pretty(&cal)?)?;
    fs::write(dir.join("models.json"), serde_json::to_string_pretty(&pipeline.nodes)?)?;
    println!("scenarios written to {}", sdir.display());
    println!(
        "PIT KS {:.4} (1% critical {:.4}, {}); 5-95% envelope coverage {:.1}% of {} actual prices",
        ks,
        crit,
        if cal.ks_pass { "pass" } else { "fail" },
        100.0 * cal.coverage,
        total
    );
    Ok(())
}

fn read_point_file(path: &Path, nodes: &[String], hours: usize) -> Result<Vec<PriceScenarioSet<f64>>> {
    let mut rdr = csv::Reader::from_reader(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ));
    let mut by_origin: BTreeMap<usize, BTreeMap<String, BTreeMap<usize, f64>>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| -> Result<&str> { rec.get(k).ok_or_else(|| anyhow!("{}: line {} is short", path.display(), i + 2)) };
        let origin: usize = parse(0)?.parse().with_context(|| format!("{}: line {}", path.display(), i + 2))?;
        let hour: usize = parse(2)?.parse().with_context(|| format!("{}: line {}", path.display(), i + 2))?;
        let price: f64 = parse(3)?.parse().with_context(|| format!("{}: line {}", path.display(), i + 2))?;
        by_origin.entry(origin).or_default().entry(parse(1)?.to_string()).or_default().insert(hour, price);
    }
    by_origin
        .into_iter()
        .map(|(origin, m)| {
            let traj = nodes
                .iter()
                .map(|n| {
                    let h = m.get(n).ok_or_else(|| anyhow!("point forecast at origin {origin} lacks node {n}"))?;
                    (origin + 1..=hours)
                        .map(|t| h.get(&t).copied().ok_or_else(|| anyhow!("point forecast at origin {origin} lacks hour {t}")))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PriceScenarioSet::single(origin, origin + 1, hours, nodes.to_vec(), traj))
        })
        .collect()
}

/// Loads scenario files written by `forecast`.
fn read_scenario_dir(dir: &Path, system: &System<f64>) -> Result<FixedScenarios> {
    if !dir.is_dir() {
        bail!(
            "scenario directory {} not found; run `psh-lac forecast` and point paths.scenarios at its scenarios/ folder",
            dir.display()
        );
    }
    let hours = system.hours();
    let mut out = FixedScenarios::default();
    for origin in 0..hours {
        let (p, w) = (prices_file(dir, origin), weights_file(dir, origin));
        if !p.exists() {
            continue;
        }
        let set = pio::parse_scenarios(
            BufReader::new(File::open(&p)?),
            BufReader::new(File::open(&w).with_context(|| format!("opening {}", w.display()))?),
            origin,
            hours,
        )
        .with_context(|| format!("reading {}", p.display()))?;
        out.sets.push(set);
    }
    if out.sets.is_empty() {
        bail!(
            "no scenario files (origin_XX_prices.csv) in {}; run `psh-lac forecast` first",
            dir.display()
        );
    }
    let point = dir.join(POINT_FILE);
    if point.exists() {
        out.points = read_point_file(&point, &system.psh_nodes(), hours)?;
    }
    Ok(out)
}

fn write_day_reports(
    dir: &Path,
    report: &EvaluationReport,
    system: &System<f64>,
    day: &MarketDay<f64>,
    ledgers: &[SimulationLedger],
) -> Result<()> {
    report.write_objectives_csv(create(&dir.join("objectives.csv"))?)?;
    report.write_profits_csv(create(&dir.join("profits.csv"))?)?;
    if !report.scaling.is_empty() {
        report.write_scaling_csv(create(&dir.join("scaling.csv"))?)?;
    }
    write_fig_lmp(create(&dir.join("fig_lmp.csv"))?, day, &report.realizations)?;
    write_fig_dispatch(create(&dir.join("fig_dispatch.csv"))?, system, ledgers)?;
    let text = report.to_text();
    fs::write(dir.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn first_window_scaling(
    cfg: &RunConfig,
    system: &System<f64>,
    day: &MarketDay<f64>,
    source: &dyn ScenarioSource,
) -> Result<Vec<psh_lac::accounting::ScalingRow>> {
    let window = cfg.grid.window.unwrap_or(system.grid.window_length);
    let te = window.min(system.hours());
    let mut points = Vec::new();
    let mut counts = vec![0];
    counts.extend(cfg.scaling_scenarios.iter().copied().filter(|s| *s > 0));
    for s in counts {
        let set = if s > 0 { Some(source.scenarios(0, s)?) } else { None };
        let mut inst = LacInstance::first_window(system, 1, te, &day.net_load[..te]);
        inst.scenarios = set.as_ref();
        inst.options = psh_lac::lac_models::LacOptions {
            voll: cfg.model.voll,
            end_soc: cfg.model.end_soc,
            tie_break: cfg.model.tie_break,
        };
        let variant = if s == 0 { ModelVariant::CurrentPractice } else { ModelVariant::Stochastic };
        let lm = build_variant(variant, &inst, None)?;
        let started = Instant::now();
        solve(&lm.model, &cfg.solver_options())?;
        points.push((s, lm.model.stats(), started.elapsed().as_secs_f64()));
    }
    Ok(scaling_report(&points)?)
}

pub fn simulate(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let variants = cfg.variant_list();
    let (system, day) = read_inputs(&cfg)?;
    let solver = cfg.solver_options();
    let da = build_da_reference(&system, &day.da_load, &day.da_lmp, &cfg.day_ahead(), &solver)
        .context("building the day-ahead reference")?;
    let needs_forecast = variants.iter().any(|v| v.uses_forecast()) || !cfg.scaling_scenarios.is_empty();

    let fixed;
    let pipeline;
    let forecaster;
    let mut base: Option<&dyn ScenarioSource> = None;
    if needs_forecast {
        if let Some(dir) = &cfg.paths.scenarios {
            fixed = read_scenario_dir(dir, &system)?;
            base = Some(&fixed);
        } else if cfg.paths.history.is_some() {
            pipeline = ForecastPipeline::train(&read_history(&cfg)?, &cfg.forecast_config())?;
            forecaster = pipeline.for_day(&day, &system.psh_nodes())?;
            base = Some(&forecaster);
        } else {
            let names: Vec<String> = variants.iter().filter(|v| v.uses_forecast()).map(|v| v.to_string()).collect();
            bail!(
                "variants {} need price scenarios: set paths.scenarios to the output of `psh-lac forecast` or paths.history to train in place",
                names.join(", ")
            );
        }
    }
    let reuse;
    let source: Option<&dyn ScenarioSource> = match base {
        Some(b) if cfg.model.reuse_first_scenarios => {
            reuse = ReuseFirst::new(b, cfg.model.scenarios.max(1));
            Some(&reuse)
        }
        other => other,
    };

    let dir = run_dir(&cfg)?;
    fs::write(dir.join("system_da.json"), pio::system_to_json(&da.system)?)?;
    let rolling = cfg.rolling();
    let results = run_variants(&da.system, &day, &variants, source, &rolling);
    let mut ledgers = Vec::new();
    for (v, r) in variants.iter().zip(results) {
        let ledger = r.with_context(|| format!("simulating {v}"))?;
        ledger.write_jsonl(create(&dir.join(format!("ledger_{v}.jsonl")))?)?;
        ledger.write_metrics_csv(create(&dir.join(format!("metrics_{v}.csv")))?)?;
        ledgers.push(ledger);
    }
    let mut report = if variants.contains(&ModelVariant::CurrentPractice) {
        evaluate_day(&ledgers, &da.system, &day, cfg.model.voll, &solver)?
    } else {
        // Without the baseline only the realized totals are reported.
        let mut with_base = ledgers.clone();
        with_base.push(psh_lac::rolling::run_day(&da.system, &day, ModelVariant::CurrentPractice, None, &rolling)?);
        let mut r = evaluate_day(&with_base, &da.system, &day, cfg.model.voll, &solver)?;
        let keep = |v: &ModelVariant| variants.contains(v);
        r.objectives.retain(|o| keep(&o.variant));
        r.profits.retain(|o| keep(&o.variant));
        r.realizations.retain(|o| keep(&o.variant));
        r
    };
    if let (Some(src), false) = (source, cfg.scaling_scenarios.is_empty()) {
        report.scaling = first_window_scaling(&cfg, &da.system, &day, src)?;
    }
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    write_day_reports(&dir, &report, &da.system, &day, &ledgers)?;
    println!("outputs written to {}", dir.display());
    Ok(())
}

pub fn report(common: &Common, run: &Path) -> Result<()> {
    let cfg_path = run.join("config.json");
    let mut cfg = RunConfig::load(&cfg_path)?;
    if common.seed.is_some() || common.window.is_some() {
        bail!("report replays a finished run; --seed and --window have no effect here");
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    let (_, day) = read_inputs(&cfg)?;
    let system = pio::read_system(&run.join("system_da.json")).context("reading system_da.json of the run")?;
    let mut ledgers = Vec::new();
    for v in ModelVariant::ALL {
        let p = run.join(format!("ledger_{v}.jsonl"));
        if p.exists() {
            ledgers.push(SimulationLedger::read_jsonl(BufReader::new(File::open(&p)?)).with_context(|| format!("reading {}", p.display()))?);
        }
    }
    if ledgers.is_empty() {
        bail!("no ledger_*.jsonl files in {}", run.display());
    }
    if !ledgers.iter().any(|l| l.variant == ModelVariant::CurrentPractice) {
        bail!("run {} has no current-practice ledger to compare against", run.display());
    }
    let mut report = evaluate_day(&ledgers, &system, &day, cfg.model.voll, &cfg.solver_options())?;
    let scaling_path = run.join("report.json");
    if scaling_path.exists() {
        let old: EvaluationReport = serde_json::from_str(&fs::read_to_string(&scaling_path)?)?;
        report.scaling = old.scaling;
    }
    let dir = common.out.clone().unwrap_or_else(|| run.to_path_buf());
    fs::create_dir_all(&dir)?;
    write_day_reports(&dir, &report, &system, &day, &ledgers)
}

fn series_of(entries: &[(&str, &Vec<f64>)]) -> HourlySeries {
    entries.iter().map(|(k, v)| (k.to_string(), (*v).clone())).collect()
}

pub fn gen_instance(common: &Common, sizes: &Sizes) -> Result<()> {
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("instance"));
    let seed = common.seed.unwrap_or(1);
    let synth = SynthConfig {
        hours: sizes.hours,
        window: common.window.unwrap_or(4).min(sizes.hours),
        thermal_units: sizes.thermal_units,
        psh_units: sizes.psh_units,
        peak_load: sizes.peak_load,
        divergence: sizes.divergence,
        history_days: sizes.history_days,
        seed,
        ..SynthConfig::default()
    };
    let inst = generate(&synth)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("system.json"), pio::system_to_json(&inst.system)?)?;
    pio::write_series(
        create(&out.join("load.csv"))?,
        &series_of(&[(LOAD_RT, &inst.day.net_load), (LOAD_DA, &inst.day.da_load)]),
    )?;
    pio::write_series(create(&out.join("da_lmp.csv"))?, &inst.day.da_lmp)?;
    pio::write_series(create(&out.join("rt_lmp.csv"))?, &inst.day.rt_lmp_actual)?;
    pio::write_history(create(&out.join("history.csv"))?, &inst.history)?;
    let mut cfg = RunConfig {
        name: inst.day.label.clone(),
        seed,
        ..RunConfig::default()
    };
    cfg.paths.system = Some("system.json".into());
    cfg.paths.load = Some("load.csv".into());
    cfg.paths.da_lmp = Some("da_lmp.csv".into());
    cfg.paths.rt_lmp = Some("rt_lmp.csv".into());
    cfg.paths.history = Some("history.csv".into());
    if let Some(s) = common.scenarios {
        cfg.model.scenarios = s;
    }
    cfg.out = "runs".into();
    fs::write(out.join("synth.json"), serde_json::to_string_pretty(&synth)?)?;
    fs::write(out.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
    println!("instance written to {}", out.display());
    Ok(())
}
