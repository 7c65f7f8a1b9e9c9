use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viscofit::cluster::{cluster, ClusterConfig};
use viscofit::experiments::{
    run_exact_recovery, run_noise_sweep, write_report, RecoverySpec, SweepSpec, Variant,
};
use viscofit::optimize::{multistart_fit, FitConfig, Regularizer};
use viscofit::synth::simulate_dataset;
use viscofit::{LoadingProgram, MaterialModel};

fn recovery_spec() -> RecoverySpec {
    RecoverySpec::default()
}

#[test]
fn exact_data_recovers_the_reference_material() {
    let report = run_exact_recovery(&recovery_spec()).unwrap();
    assert_eq!(report.stat("recovery", "n", "value"), Some(3.0));
    let err = report
        .stat("recovery", "parameters", "max_abs_error")
        .unwrap();
    assert!(err < 1e-3, "max abs error {err}");
}

#[test]
fn element_count_is_recovered_for_a_two_element_material() {
    let truth = MaterialModel::from_pairs(5.0, &[(3.0, 0.5), (2.0, 20.0)]).unwrap();
    let p = LoadingProgram::new(1.0, 20.0, 100.0).unwrap();
    let d = simulate_dataset(&truth, &p, 500).unwrap();
    let cfg = FitConfig {
        max_elements: 4,
        starts: 20,
        ..FitConfig::default()
    };
    let fit = multistart_fit(&d, &cfg).unwrap();
    let rep = cluster(&fit, &d, &ClusterConfig::default(), &cfg).unwrap();
    assert_eq!(rep.element_count, 2, "{:?}", rep.model);
    for (a, b) in rep.model.parameters().iter().zip(truth.parameters()) {
        assert!((a - b).abs() < 1e-3, "{:?}", rep.model);
    }
}

#[test]
fn count_matches_occupied_decades_on_well_fitted_exact_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let p = LoadingProgram::new(1.0, 20.0, 100.0).unwrap();
    let cfg = FitConfig {
        max_elements: 4,
        starts: 16,
        ..FitConfig::default()
    };
    let mut checked = 0;
    for _ in 0..4 {
        // two or three elements, each in its own decade with a decade gap
        let n = rng.random_range(2..=3);
        let decades: Vec<i32> = match n {
            2 => vec![rng.random_range(-1..=0), 2],
            _ => vec![-1, 1, 3],
        };
        let pairs: Vec<(f64, f64)> = decades
            .iter()
            .map(|&k| {
                (
                    rng.random_range(1.0..8.0),
                    10f64.powf(k as f64 + rng.random_range(0.2..0.8)),
                )
            })
            .collect();
        let truth = MaterialModel::from_pairs(rng.random_range(1.0..10.0), &pairs).unwrap();
        let d = simulate_dataset(&truth, &p, 500).unwrap();
        let fit = multistart_fit(&d, &cfg).unwrap();
        if fit.residual > 1e-8 {
            continue;
        }
        checked += 1;
        let rep = cluster(&fit, &d, &ClusterConfig::default(), &cfg).unwrap();
        assert_eq!(
            rep.element_count, n,
            "truth {truth:?} clustered {:?}",
            rep.model
        );
    }
    assert!(
        checked >= 2,
        "only {checked} fits reached the residual threshold"
    );
}

/// A noise-free single-replica sweep is the exact-recovery experiment.
#[test]
fn zero_noise_sweep_equals_exact_recovery() {
    let rec = recovery_spec();
    let sweep = SweepSpec {
        replicas: 1,
        noise_level: 0.0,
        program: rec.program,
        intervals: rec.intervals,
        truth: rec.truth.clone(),
        variants: vec![Variant {
            name: "plain".into(),
            fit: rec.fit.clone(),
            cluster: rec.cluster,
        }],
        ..SweepSpec::default()
    };
    let a = run_exact_recovery(&rec).unwrap();
    let b = run_noise_sweep(&sweep).unwrap();
    let params = a.table("parameters").unwrap();
    let clustered: Vec<f64> =
        params.numbers_where("stiffness", |r| r[0].as_str() == Some("clustered"));
    let taus: Vec<f64> =
        params.numbers_where("relaxation_time", |r| r[0].as_str() == Some("clustered"));
    let rows = b.table("replicas").unwrap();
    assert_eq!(rows.numbers("mu"), [clustered[0]]);
    for j in 1..=3 {
        assert_eq!(rows.numbers(&format!("mu_{j}")), [clustered[j]]);
        assert_eq!(rows.numbers(&format!("tau_{j}")), [taus[j]]);
    }
}

#[test]
fn sweeps_are_reproducible() {
    let spec = SweepSpec {
        replicas: 3,
        intervals: 200,
        variants: vec![Variant {
            fit: FitConfig {
                max_elements: 3,
                starts: 6,
                ..FitConfig::default()
            },
            ..Variant::new("none", Regularizer::none())
        }],
        ..SweepSpec::default()
    };
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let a = run_noise_sweep(&spec).unwrap();
    let b = run_noise_sweep(&spec).unwrap();
    assert_eq!(a, b);
    let fa = write_report(&a, d1.path()).unwrap();
    let fb = write_report(&b, d2.path()).unwrap();
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(
            std::fs::read(x).unwrap(),
            std::fs::read(y).unwrap(),
            "{x:?}"
        );
    }
    // a different seed changes the data
    let other = run_noise_sweep(&SweepSpec {
        base_seed: 7,
        ..spec
    })
    .unwrap();
    assert_ne!(other.table("replicas"), a.table("replicas"));
}
