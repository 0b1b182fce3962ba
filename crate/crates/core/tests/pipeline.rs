use quddpm_core::analysis::{kl_to_target, mmd_to_haar_analytic, mmd_to_haar_sampled, KL_BINS};
use quddpm_core::config::RunConfig;
use quddpm_core::duddpm::{generate, Variant};
use quddpm_core::experiment::{generation_kl_trace, prepare_run, run_training};
use quddpm_core::random::{ghz_ensemble, haar_ensemble, near_zero_ensemble, RandomSource};

fn small() -> RunConfig {
    RunConfig {
        n_data: 1,
        n_ancilla: 1,
        cycles: 3,
        epochs: 60,
        n_layers: 3,
        lr: 0.05,
        ensemble_size: 24,
        generated_size: 8,
        generation_size: 40,
        ..RunConfig::default()
    }
}

#[test]
fn training_reproduces_exactly() {
    let cfg = small();
    for variant in [Variant::Original, Variant::Improved] {
        let prepared = prepare_run(&cfg, variant).unwrap();
        let a = run_training(&cfg, &prepared, None).unwrap();
        let b = run_training(&cfg, &prepared, None).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records.len(), cfg.cycles * cfg.epochs);
        assert_eq!(generation_kl_trace(&cfg, &a).unwrap(), generation_kl_trace(&cfg, &b).unwrap());
    }
}

#[test]
fn generated_states_are_normalized() {
    let cfg = small();
    let prepared = prepare_run(&cfg, Variant::Original).unwrap();
    let outcome = run_training(&cfg, &prepared, None).unwrap();
    let ens = generate(&outcome.model, 30, &RandomSource::new(3)).unwrap();
    assert_eq!(ens.len(), 30);
    for s in ens.states() {
        assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
    }
    assert!(kl_to_target(&ens, KL_BINS).unwrap() >= 0.0);
}

#[test]
fn analytic_and_sampled_haar_distance_agree() {
    let src = RandomSource::new(12);
    let ensembles = [
        ghz_ensemble(2, 60, &src.child(0)).unwrap(),
        near_zero_ensemble(2, 60, 0.3, &src.child(1)).unwrap(),
        haar_ensemble(2, 60, &src.child(2)).unwrap(),
    ];
    for ens in &ensembles {
        let a = mmd_to_haar_analytic(ens).unwrap();
        let s = mmd_to_haar_sampled(ens, 4000, &src.child(3)).unwrap();
        assert!((a.value - s.value).abs() <= 4.0 * s.stderr, "{} vs {}", a.value, s.value);
    }
}
