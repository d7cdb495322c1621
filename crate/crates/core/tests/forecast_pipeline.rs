use psh_lac::forecast::pipeline::{ForecastConfig, ForecastPipeline};
use psh_lac::synth::{generate, SynthConfig};

fn setup(seed: u64) -> (psh_lac::synth::SynthInstance, ForecastPipeline) {
    let inst = generate(&SynthConfig {
        seed: 2,
        ..SynthConfig::default()
    })
    .unwrap();
    let p = ForecastPipeline::train(
        &inst.history,
        &ForecastConfig {
            seed,
            ..ForecastConfig::default()
        },
    )
    .unwrap();
    (inst, p)
}

#[test]
fn same_seed_same_scenarios() {
    let (inst, a) = setup(9);
    let (_, b) = setup(9);
    let (_, c) = setup(10);
    let nodes = inst.system.psh_nodes();
    let fa = a.for_day(&inst.day, &nodes).unwrap();
    let fb = b.for_day(&inst.day, &nodes).unwrap();
    let fc = c.for_day(&inst.day, &nodes).unwrap();
    assert_eq!(fa.scenarios(4, 8).unwrap(), fb.scenarios(4, 8).unwrap());
    assert_ne!(fa.scenarios(4, 8).unwrap(), fc.scenarios(4, 8).unwrap());
}

#[test]
fn scenario_sets_cover_the_rest_of_the_day() {
    let (inst, p) = setup(1);
    let nodes = inst.system.psh_nodes();
    let f = p.for_day(&inst.day, &nodes).unwrap();
    for origin in [0, 7, 23] {
        let set = f.scenarios(origin, 5).unwrap();
        assert_eq!((set.first_hour, set.last_hour), (origin + 1, 24));
        assert_eq!(set.nodes, nodes);
        assert_eq!(set.len(), 5);
        assert!((set.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(set.prices.iter().flatten().flatten().all(|v| v.is_finite()));
    }
}

#[test]
fn single_scenario_matches_point_forecast_shape() {
    let (inst, p) = setup(1);
    let f = p.for_day(&inst.day, &inst.system.psh_nodes()).unwrap();
    let point = f.point_set(3).unwrap();
    let one = f.scenarios(3, 1).unwrap();
    assert_eq!(point.len(), 1);
    assert_eq!((one.first_hour, one.last_hour), (point.first_hour, point.last_hour));
    assert_eq!(point.weights, vec![1.0]);
}

#[test]
fn point_forecast_ignores_prices_after_the_origin() {
    let (inst, p) = setup(1);
    let nodes = inst.system.psh_nodes();
    let mut changed = inst.day.clone();
    for series in changed.rt_lmp_actual.values_mut() {
        for v in &mut series[10..] {
            *v += 100.0;
        }
    }
    let a = p.for_day(&inst.day, &nodes).unwrap();
    let b = p.for_day(&changed, &nodes).unwrap();
    assert_eq!(a.point(10).unwrap(), b.point(10).unwrap());
    assert_eq!(a.scenarios(10, 6).unwrap(), b.scenarios(10, 6).unwrap());
    assert_ne!(a.point(11).unwrap(), b.point(11).unwrap());
}
