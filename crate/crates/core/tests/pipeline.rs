use nalgebra::DVector;
use proptest::prelude::*;
use saddle_switch::dynamics::DriftKind;
use saddle_switch::experiments::{
    failure_probability, quench, run_experiment, sweep, transition_time, Experiment, StopPredicate,
    SweepPoint, TrialOutcome,
};
use saddle_switch::integrator::{DynamicsConfig, RngStream, Simulator};
use saddle_switch::landscape::{make_double_well, make_mixture, MixtureParams, Potential};

#[test]
fn isd_on_double_well_reaches_the_saddle_ball() {
    let dw = make_double_well();
    let cfg = DynamicsConfig::new(DriftKind::Isd, 0.01);
    let pred = StopPredicate::ball(&[0.0, 0.0], 0.1);
    let report = failure_probability(&cfg, &dw, &[0.8, 0.1], &pred, 50.0, 8, 42, 1).unwrap();
    assert_eq!(report.summary.n_trials, 8);
    assert_eq!(report.failure_rate(), 0.0);
    assert!(report.mean().unwrap() > 0.0);
    for t in &report.trials {
        assert!(matches!(t.outcome, TrialOutcome::Hit { .. }));
    }
}

#[test]
fn langevin_from_a_minimum_stays_put_without_noise() {
    let dw = make_double_well();
    let cfg = DynamicsConfig::new(DriftKind::Langevin, 0.0);
    let report = transition_time(&cfg, &dw, &[1.0, 0.0], &[-1.0, 0.0], 0.1, 5.0, 3, 0, 1).unwrap();
    assert!(report.trials.iter().all(|t| matches!(t.outcome, TrialOutcome::Timeout { .. })));
    assert_eq!(report.failure_rate(), 1.0);
    assert!(report.mean().is_none());
}

#[test]
fn sweep_points_use_disjoint_streams() {
    let dw = make_double_well();
    let exp = Experiment {
        x0: vec![0.8, 0.1],
        predicate: StopPredicate::ball(&[0.0, 0.0], 0.1),
        t_max: 50.0,
        n_trials: 4,
    };
    let points: Vec<_> = [0.01, 0.02]
        .iter()
        .map(|&eps| SweepPoint {
            label: format!("epsilon={eps}"),
            config: DynamicsConfig::new(DriftKind::Isd, eps),
        })
        .collect();
    let reports = sweep(&points, &dw, &exp, 7, 1).unwrap();
    assert_eq!(reports.len(), 2);
    let streams: Vec<u64> = reports.iter().flat_map(|r| r.trials.iter().map(|t| t.stream)).collect();
    assert_eq!(streams, (0..8).collect::<Vec<_>>());

    let alone = run_experiment("p1", &points[1].config, &dw, &exp, 7, 4, 1).unwrap();
    assert_eq!(alone.trials_csv(), reports[1].trials_csv());
}

#[test]
fn summary_json_round_trips_the_config() {
    let dw = make_double_well();
    let cfg = DynamicsConfig::switched(DriftKind::Isd, 0.03, 0.7);
    let pred = StopPredicate::EnergyBelow { threshold: -0.9 };
    let report = failure_probability(&cfg, &dw, &[0.2, 0.3], &pred, 20.0, 5, 3, 1).unwrap();
    let json: serde_json::Value = serde_json::from_str(&report.summary_json()).unwrap();
    let back: DynamicsConfig = serde_json::from_value(json["config"].clone()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(json["n_trials"].as_u64(), Some(5));
}

#[test]
fn quench_of_a_simulated_endpoint_finds_a_mixture_minimum() {
    let m = make_mixture(MixtureParams::default()).unwrap();
    let cfg = DynamicsConfig::new(DriftKind::Langevin, 0.1);
    let mut sim = Simulator::new(&cfg, &m, &DVector::from_column_slice(&[0.5, 0.5]), None, RngStream::new(1, 0)).unwrap();
    sim.run(2.0, 1, |_, _| std::ops::ControlFlow::Continue(())).unwrap();
    let q = quench(&m, &sim.state().x, 1e-3, 1e-8, 200_000).unwrap();
    assert!(q.converged);
    let h = m.hessian(&q.x).unwrap();
    let eig = h.symmetric_eigen();
    assert!(eig.eigenvalues.iter().all(|&l| l > 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn trial_csv_is_independent_of_worker_count(seed in 0u64..1000, workers in 2usize..4) {
        let dw = make_double_well();
        let cfg = DynamicsConfig::new(DriftKind::Isd, 0.05).with_dt(1e-2);
        let exp = Experiment {
            x0: vec![0.7, 0.2],
            predicate: StopPredicate::ball(&[0.0, 0.0], 0.2),
            t_max: 5.0,
            n_trials: 6,
        };
        let a = run_experiment("a", &cfg, &dw, &exp, seed, 0, 1).unwrap();
        let b = run_experiment("a", &cfg, &dw, &exp, seed, 0, workers).unwrap();
        prop_assert_eq!(a.trials_csv(), b.trials_csv());
    }
}
