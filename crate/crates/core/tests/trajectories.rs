use proptest::prelude::*;
use qglauber_core::config::zero_magnetization_ensemble;
use qglauber_core::exact::{initial_density_matrix, run_mcs, Mode, Schedule};
use qglauber_core::observables::{
    coherence, domain_wall_expectation, equilibrium_probability, purity,
};
use qglauber_core::traj::{
    estimate_diagonal_observable, estimate_mixture_moments, estimate_purity_pairwise, run_ensemble,
    trajectory_step_at, DiagonalObservable, EnsembleConfig, StepScratch, TrajectoryState,
    DEFAULT_MEMORY_BUDGET, DEFAULT_PRUNE_EPSILON,
};
use qglauber_core::{ChainGeometry, LocalChannel, SpinConfig, Variant};

fn config(n: usize, n_traj: usize, seed: u64, times: &[f64]) -> EnsembleConfig {
    let n_mcs = times.iter().copied().fold(0.0, f64::max).ceil() as u64;
    EnsembleConfig {
        n_traj,
        seed,
        n_mcs,
        schedule: Schedule::from_mcs(n, n_mcs, times).unwrap(),
        prune_epsilon: DEFAULT_PRUNE_EPSILON,
    }
}

#[test]
fn initial_ensemble_reproduces_the_uniform_diagonal() {
    let n = 8;
    let g = ChainGeometry::periodic(n).unwrap();
    let snaps = run_ensemble(
        &config(n, 4000, 3, &[0.0]),
        &LocalChannel::from_variant(Variant::S0),
        &g,
    )
    .unwrap();
    let states = &snaps[0].states;
    let configs = zero_magnetization_ensemble(&g).unwrap();
    let p = 1.0 / configs.len() as f64;
    let se = (p * (1.0 - p) / states.len() as f64).sqrt();
    for c in configs {
        let freq = states
            .iter()
            .filter(|s| s.amplitude(c.bits()) != 0.0)
            .count() as f64
            / states.len() as f64;
        assert!((freq - p).abs() <= 3.5 * se, "{c}: {freq} vs {p}");
    }
    assert!(states.iter().all(|s| s.support() == 1));
}

#[test]
fn classical_trajectories_track_the_classical_baseline() {
    let n = 10;
    let g = ChainGeometry::periodic(n).unwrap();
    let times = [1.0, 2.0, 5.0];
    let snaps = run_ensemble(&config(n, 4000, 5, &times), &LocalChannel::classical(), &g).unwrap();
    let exact = run_mcs(
        initial_density_matrix(&g).unwrap(),
        &LocalChannel::classical(),
        Mode::ClassicalBaseline,
        5,
        &Schedule::from_mcs(n, 5, &times).unwrap(),
    )
    .unwrap();
    for (snap, (t, rho)) in snaps.iter().zip(&exact) {
        assert!(snap.states.iter().all(|s| s.support() == 1));
        let est =
            estimate_diagonal_observable(&snap.states, DiagonalObservable::EquilibriumProbability)
                .unwrap();
        let want = equilibrium_probability(rho);
        assert!(
            (est.mean - want).abs() <= 3.0 * est.stderr,
            "t={t}: {} ± {} vs {want}",
            est.mean,
            est.stderr
        );
    }
}

#[test]
fn quantum_trajectories_track_exact_mode_at_small_n() {
    let n = 6;
    let g = ChainGeometry::periodic(n).unwrap();
    let times = [1.0, 3.0];
    for v in [Variant::S0, Variant::H0] {
        let ch = LocalChannel::from_variant(v);
        let snaps = run_ensemble(&config(n, 20000, 9, &times), &ch, &g).unwrap();
        let exact = run_mcs(
            initial_density_matrix(&g).unwrap(),
            &ch,
            Mode::Quantum,
            3,
            &Schedule::from_mcs(n, 3, &times).unwrap(),
        )
        .unwrap();
        for (snap, (t, rho)) in snaps.iter().zip(&exact) {
            let peq = estimate_diagonal_observable(
                &snap.states,
                DiagonalObservable::EquilibriumProbability,
            )
            .unwrap();
            let want = equilibrium_probability(rho);
            assert!(
                (peq.mean - want).abs() <= 3.0 * peq.stderr,
                "{v} t={t}: P_eq {} vs {want}",
                peq.mean
            );
            let m = estimate_mixture_moments(&snap.states, DEFAULT_MEMORY_BUDGET).unwrap();
            let p = purity(rho);
            assert!(
                (m.purity - p).abs() / p < 0.02,
                "{v} t={t}: purity {} vs {p}",
                m.purity
            );
            let dw = estimate_diagonal_observable(&snap.states, DiagonalObservable::DomainWalls)
                .unwrap();
            let want = domain_wall_expectation(rho, &g);
            assert!(
                (dw.mean - want).abs() <= 3.0 * dw.stderr,
                "{v} t={t}: walls {} vs {want}",
                dw.mean
            );
        }
    }
}

#[test]
fn coherence_bias_shrinks_with_ensemble_size() {
    let n = 6;
    let g = ChainGeometry::periodic(n).unwrap();
    let ch = LocalChannel::from_variant(Variant::S0);
    let exact = run_mcs(
        initial_density_matrix(&g).unwrap(),
        &ch,
        Mode::Quantum,
        1,
        &Schedule::every_mcs(n, 1),
    )
    .unwrap();
    let want = coherence(&exact[1].1);
    let err = |m: usize| {
        let snaps = run_ensemble(&config(n, m, 21, &[1.0]), &ch, &g).unwrap();
        (estimate_mixture_moments(&snaps[0].states, DEFAULT_MEMORY_BUDGET)
            .unwrap()
            .coherence
            - want)
            .abs()
    };
    let small = err(500);
    let large = err(50000);
    assert!(large < small / 3.0, "{small} -> {large}");
}

#[test]
fn ensembles_are_reproducible() {
    let n = 8;
    let g = ChainGeometry::periodic(n).unwrap();
    let ch = LocalChannel::from_variant(Variant::H2);
    let a = run_ensemble(&config(n, 300, 77, &[1.0, 4.0]), &ch, &g).unwrap();
    let b = run_ensemble(&config(n, 300, 77, &[1.0, 4.0]), &ch, &g).unwrap();
    let c = run_ensemble(&config(n, 300, 78, &[1.0, 4.0]), &ch, &g).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

fn zero_magnetization_bits(n: usize) -> impl Strategy<Value = u32> {
    let configs: Vec<u32> = zero_magnetization_ensemble(&ChainGeometry::periodic(n).unwrap())
        .unwrap()
        .into_iter()
        .map(SpinConfig::bits)
        .collect();
    proptest::sample::select(configs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trajectory_steps_preserve_the_norm(
        start in zero_magnetization_bits(8),
        variant in proptest::sample::select(Variant::ALL.to_vec()),
        moves in proptest::collection::vec((0usize..8, 0.0f64..1.0), 1..40),
    ) {
        let ch = LocalChannel::from_variant(variant);
        let mut psi = TrajectoryState::basis(SpinConfig::new(start, 8));
        let mut scratch = StepScratch::default();
        for (site, u) in moves {
            let out = trajectory_step_at(&mut psi, &ch, site, u, 0.0, &mut scratch).unwrap();
            prop_assert!(out.probability > 0.0 && out.probability <= 1.0 + 1e-12);
            prop_assert!((psi.norm_squared() - 1.0).abs() < 1e-12);
            prop_assert!(psi.amplitudes().windows(2).all(|w| w[0].0 < w[1].0));
        }
    }

    #[test]
    fn mixture_purity_is_bounded(
        seed in 0u64..1000,
        m in 2usize..60,
        variant in proptest::sample::select(Variant::ALL.to_vec()),
    ) {
        let n = 6;
        let g = ChainGeometry::periodic(n).unwrap();
        let snaps = run_ensemble(&config(n, m, seed, &[2.0]), &LocalChannel::from_variant(variant), &g).unwrap();
        let states = &snaps[0].states;
        let mo = estimate_mixture_moments(states, DEFAULT_MEMORY_BUDGET).unwrap();
        prop_assert!(mo.purity >= 1.0 / m as f64 - 1e-12);
        prop_assert!(mo.purity <= 1.0 + 1e-12);
        prop_assert!(mo.coherence >= 0.0);
        let pairwise = estimate_purity_pairwise(states).unwrap();
        prop_assert!((pairwise - mo.purity).abs() < 1e-12);
    }
}
