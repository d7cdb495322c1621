use psh_lac::accounting::evaluate_day;
use psh_lac::forecast::pipeline::{ForecastConfig, ForecastPipeline};
use psh_lac::lac_models::{build_da_reference, DaOptions};
use psh_lac::milp::SolveOptions;
use psh_lac::rolling::{run_day, run_variants, FixedScenarios, ReuseFirst, RollingConfig, ScenarioSource};
use psh_lac::synth::{generate, SynthConfig, SynthInstance};
use psh_lac::system::{PshMode, System};
use psh_lac::ModelVariant;

fn small() -> (SynthInstance, System<f64>) {
    let inst = generate(&SynthConfig {
        hours: 12,
        window: 3,
        thermal_units: 3,
        psh_units: 2,
        seed: 5,
        history_days: 120,
        ..SynthConfig::default()
    })
    .unwrap();
    let da = build_da_reference(&inst.system, &inst.day.da_load, &inst.day.da_lmp, &DaOptions::default(), &SolveOptions::default())
        .unwrap();
    (inst, da.system)
}

fn config() -> RollingConfig {
    RollingConfig {
        scenarios: 4,
        ..RollingConfig::default()
    }
}

#[test]
fn every_variant_keeps_storage_consistent() {
    let (inst, system) = small();
    let pipeline = ForecastPipeline::train(&inst.history, &ForecastConfig::default()).unwrap();
    let fc = pipeline.for_day(&inst.day, &system.psh_nodes()).unwrap();
    let ledgers: Vec<_> = run_variants(&system, &inst.day, &ModelVariant::ALL, Some(&fc), &config())
        .into_iter()
        .map(Result::unwrap)
        .collect();
    for (v, l) in ModelVariant::ALL.iter().zip(&ledgers) {
        assert_eq!(l.variant, *v);
        assert_eq!(l.hours.len(), 12);
        assert!(l.continuity_error(&system).unwrap() < 1e-6, "{v}");
        for h in &l.hours {
            for (r, s) in h.soc.iter().enumerate() {
                let res = &system.reservoirs[r];
                assert!(s.end >= res.e_min - 1e-6 && s.end <= res.e_max + 1e-6, "{v} hour {}", h.hour);
            }
            for (g, p) in h.psh.iter().enumerate() {
                let u = &system.psh[g];
                match p.mode {
                    PshMode::Gen => assert!(p.gen >= u.gen_min - 1e-6 && p.pump == 0.0),
                    PshMode::Pump => assert!(p.pump >= u.pump_min - 1e-6 && p.gen == 0.0),
                    PshMode::Offline => assert!(p.gen == 0.0 && p.pump == 0.0),
                }
            }
        }
    }
    let last = ledgers[0].hours.last().unwrap();
    for (r, s) in last.soc.iter().enumerate() {
        assert!((s.end - system.reservoirs[r].e_final_target).abs() < 1e-4);
    }
    let report = evaluate_day(&ledgers, &system, &inst.day, config().voll, &SolveOptions::default()).unwrap();
    assert_eq!(report.objectives.len(), 5);
    assert!(report.profits.iter().filter(|p| p.variant == ModelVariant::CurrentPractice).all(|p| p.lac_profit == 0.0));
}

#[test]
fn scenario_files_reproduce_the_forecaster() {
    let (inst, system) = small();
    let pipeline = ForecastPipeline::train(&inst.history, &ForecastConfig::default()).unwrap();
    let fc = pipeline.for_day(&inst.day, &system.psh_nodes()).unwrap();
    let fixed = FixedScenarios {
        sets: (0..12).map(|o| fc.scenarios(o, 4).unwrap()).collect(),
        points: (0..12).map(|o| fc.point_set(o).unwrap()).collect(),
    };
    for v in [ModelVariant::Stochastic, ModelVariant::Deterministic] {
        let a = run_day(&system, &inst.day, v, Some(&fc), &config()).unwrap();
        let b = run_day(&system, &inst.day, v, Some(&fixed), &config()).unwrap();
        assert_eq!(a.to_jsonl().unwrap(), b.to_jsonl().unwrap(), "{v}");
    }
}

#[test]
fn reused_scenarios_follow_the_first_draw() {
    let (inst, system) = small();
    let pipeline = ForecastPipeline::train(&inst.history, &ForecastConfig::default()).unwrap();
    let fc = pipeline.for_day(&inst.day, &system.psh_nodes()).unwrap();
    let reuse = ReuseFirst::new(&fc, 4);
    let first = fc.scenarios(0, 4).unwrap();
    let later = reuse.scenarios(5, 4).unwrap();
    assert_eq!(later.first_hour, 6);
    assert_eq!(later.price(2, 0, 9), first.price(2, 0, 9));
    let ledger = run_day(&system, &inst.day, ModelVariant::Robust, Some(&reuse), &config()).unwrap();
    assert_eq!(ledger.hours.len(), 12);
}

#[test]
fn longer_window_cannot_exceed_the_day() {
    let (inst, system) = small();
    let cfg = RollingConfig {
        window: Some(13),
        ..config()
    };
    let err = run_day(&system, &inst.day, ModelVariant::CurrentPractice, None, &cfg).unwrap_err();
    assert!(err.to_string().contains("window length 13"), "{err}");
}
