use super::*;
use crate::hamiltonian::build_effective_hamiltonian;
use crate::model::{discretize_disorder, Basis, BinSet, ModelSpec};
use approx::assert_abs_diff_eq;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn jc_spec() -> ModelSpec {
    ModelSpec { s1: 0.0, v12: 0.0, kappa: 0.0, omega_c: 0.1, ..ModelSpec::reference() }
}

#[test]
fn oversized_couplings_are_refused() {
    let bins = BinSet::single(0.1);
    let psi = |h: &EffectiveHamiltonian| InitialState::Photonic.vector(h).unwrap();
    let spec = ModelSpec { coupling: 1e12, ..ModelSpec::reference() };
    let h = build_effective_hamiltonian(&spec, &bins, 4).unwrap();
    let r = propagate(&h, &psi(&h), &PropagationOptions::new(10.0));
    assert!(matches!(r, Err(Error::StepBudget { .. })), "{r:?}");
    let spec = ModelSpec { coupling: 1e300, ..ModelSpec::reference() };
    let h = build_effective_hamiltonian(&spec, &bins, 4).unwrap();
    let r = propagate(&h, &psi(&h), &PropagationOptions::new(10.0));
    assert!(matches!(r, Err(Error::NonFinite { .. })), "{r:?}");
}

#[test]
fn option_validation() {
    assert_eq!(PropagationOptions::new(10.0).steps().unwrap(), 10);
    assert_eq!(PropagationOptions::new(0.0).steps().unwrap(), 0);
    assert!(PropagationOptions::new(10.0).with_dt_record(3.0).steps().is_err());
    assert!(PropagationOptions::new(-1.0).steps().is_err());
    assert!(PropagationOptions::new(10.0).with_tolerance(1e-13).steps().is_err());
    assert!(PropagationOptions::new(10.0).with_tolerance(1e-5).steps().is_err());
    assert!(PropagationOptions::new(10.0).with_dt_record(0.0).steps().is_err());
}

#[test]
fn zero_duration_keeps_initial_state() {
    let h = build_effective_hamiltonian(&ModelSpec::reference(), &BinSet::single(0.1), 6).unwrap();
    let psi0 = InitialState::Photonic.vector(&h).unwrap();
    let traj = propagate(&h, &psi0, &PropagationOptions::new(0.0)).unwrap();
    assert_eq!(traj.times, vec![0.0]);
    assert_eq!(traj.autocorrelation, vec![c(1.0, 0.0)]);
    assert_eq!(traj.snapshots[0].state, psi0);
}

#[test]
fn wrong_length_rejected() {
    let h = build_effective_hamiltonian(&ModelSpec::reference(), &BinSet::single(0.1), 6).unwrap();
    let err = propagate(&h, &[c(1.0, 0.0)], &PropagationOptions::new(1.0)).unwrap_err();
    assert_eq!(err, Error::DimensionMismatch { expected: h.dim(), found: 1 });
}

#[test]
fn unnormalized_custom_state_rejected() {
    let h = build_effective_hamiltonian(&ModelSpec::reference(), &BinSet::single(0.1), 6).unwrap();
    let s = InitialState::Custom { photon: c(1.0, 0.0), bins: vec![c(1.0, 0.0)] };
    assert!(matches!(s.vector(&h), Err(Error::NotNormalized(_))));
    let s = InitialState::Custom { photon: c(1.0, 0.0), bins: vec![] };
    assert!(matches!(s.vector(&h), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn polariton_states_are_normalized() {
    let spec = ModelSpec { sigma: 0.02, ..ModelSpec::reference() };
    let bins = discretize_disorder(&spec, 5).unwrap();
    let h = build_effective_hamiltonian(&spec, &bins, 4).unwrap();
    let up = InitialState::UpperPolariton.vector(&h).unwrap();
    let lp = InitialState::LowerPolariton.vector(&h).unwrap();
    assert_abs_diff_eq!(inner(&up, &lp).norm(), 0.0, epsilon = 1e-15);
}

#[test]
fn stationary_state_picks_up_phase() {
    // With G = 0 the Franck-Condon state of a flat surface is an eigenstate.
    let spec = ModelSpec { coupling: 0.0, s1: 0.0, v12: 0.0, ..ModelSpec::reference() };
    let h = build_effective_hamiltonian(&spec, &BinSet::single(0.1), 8).unwrap();
    let psi0 = InitialState::Bright.vector(&h).unwrap();
    let traj = propagate(&h, &psi0, &PropagationOptions::new(500.0)).unwrap();
    for (t, a) in traj.times.iter().zip(&traj.autocorrelation) {
        assert_abs_diff_eq!((a - Complex64::from_polar(1.0, -0.1 * t)).norm(), 0.0, epsilon = 1e-9);
    }
}

#[test]
fn empty_cavity_decays() {
    let spec = ModelSpec { coupling: 0.0, ..ModelSpec::reference() };
    let h = build_effective_hamiltonian(&spec, &BinSet::single(0.1), 8).unwrap();
    let psi0 = InitialState::Photonic.vector(&h).unwrap();
    let traj = propagate(&h, &psi0, &PropagationOptions::new(300.0)).unwrap();
    assert!(traj.photonic_start);
    for ((t, a), n) in traj.times.iter().zip(&traj.autocorrelation).zip(&traj.norms) {
        let exact = (c(-0.003, -0.11) * t).exp();
        assert_abs_diff_eq!((a - exact).norm(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(*n, (-0.006 * t).exp(), epsilon = 1e-9);
    }
}

#[test]
fn jaynes_cummings_oscillation() {
    let h = build_effective_hamiltonian(&jc_spec(), &BinSet::single(0.1), 10).unwrap();
    let psi0 = InitialState::Photonic.vector(&h).unwrap();
    let traj = propagate(&h, &psi0, &PropagationOptions::new(1240.0)).unwrap();
    for snap in &traj.snapshots {
        let p = snap.state[0].norm_sqr();
        assert_abs_diff_eq!(p, (0.03 * snap.time).cos().powi(2), epsilon = 1e-9);
    }
    assert!(traj.error_estimate <= 1e-9);
}

#[test]
fn snapshot_stride() {
    let h = build_effective_hamiltonian(&ModelSpec::reference(), &BinSet::single(0.1), 6).unwrap();
    let psi0 = InitialState::Photonic.vector(&h).unwrap();
    let opts = PropagationOptions::new(10.0).with_snapshot_stride(Some(4));
    let traj = propagate(&h, &psi0, &opts).unwrap();
    let idx: Vec<usize> = traj.snapshots.iter().map(|s| s.index).collect();
    assert_eq!(idx, vec![0, 4, 8]);
    assert!(traj.final_snapshot().is_none());
    assert_eq!(traj.snapshot_near(5.0).unwrap().index, 4);
}

#[test]
fn observer_sees_every_point() {
    let h = build_effective_hamiltonian(&ModelSpec::reference(), &BinSet::single(0.1), 6).unwrap();
    let psi0 = InitialState::Photonic.vector(&h).unwrap();
    let opts = PropagationOptions::new(20.0).with_snapshot_stride(None);
    let mut seen = Vec::new();
    let traj = propagate_observed(&h, &psi0, &opts, |k, t, psi| seen.push((k, t, norm_sqr(psi)))).unwrap();
    assert_eq!(seen.len(), 21);
    for (k, t, n) in seen {
        assert_eq!(t, traj.times[k]);
        assert_eq!(n, traj.norms[k]);
    }
}

#[test]
fn equations_of_motion_match_matrix_engine() {
    let spec = ModelSpec { sigma: 0.02, ..ModelSpec::reference() };
    let bins = discretize_disorder(&spec, 3).unwrap();
    let n_vib = 12;
    let h = build_effective_hamiltonian(&spec, &bins, n_vib).unwrap();
    let opts = PropagationOptions::new(400.0).with_tolerance(1e-10);
    for state in [InitialState::Photonic, InitialState::Bright, InitialState::LowerPolariton] {
        let psi0 = state.vector(&h).unwrap();
        let a = propagate(&h, &psi0, &opts).unwrap();
        let b = propagate_eom(&spec, &bins, n_vib, &psi0, &opts).unwrap();
        assert_eq!(a.times.len(), b.times.len());
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            let diff: f64 = sa.state.iter().zip(&sb.state).map(|(x, y)| (x - y).norm_sqr()).sum();
            assert!(diff.sqrt() < 1e-8, "t = {}: {}", sa.time, diff.sqrt());
        }
        assert_eq!(a.photonic_start, b.photonic_start);
    }
}

#[test]
fn equations_of_motion_uncoupled_phases() {
    let spec = ModelSpec { coupling: 0.0, ..ModelSpec::reference() };
    let bins = BinSet::single(0.1);
    let h = build_effective_hamiltonian(&spec, &bins, 8).unwrap();
    let psi0 = InitialState::Photonic.vector(&h).unwrap();
    let traj = propagate_eom(&spec, &bins, 8, &psi0, &PropagationOptions::new(200.0)).unwrap();
    for ((t, a), n) in traj.times.iter().zip(&traj.autocorrelation).zip(&traj.norms) {
        assert_abs_diff_eq!((a - (c(-0.003, -0.11) * t).exp()).norm(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(*n, (-0.006 * t).exp(), epsilon = 1e-9);
    }
}

#[test]
fn equations_of_motion_validate_inputs() {
    let spec = ModelSpec::reference();
    let bins = BinSet::single(0.1);
    let opts = PropagationOptions::new(1.0);
    let psi = vec![c(1.0, 0.0); 3];
    assert!(propagate_eom(&spec, &bins, 1, &psi, &opts).is_err());
    assert!(matches!(propagate_eom(&spec, &bins, 4, &psi, &opts), Err(Error::DimensionMismatch { .. })));
}

fn small_system() -> impl Strategy<Value = (ModelSpec, usize, usize)> {
    (
        1usize..=3,
        2usize..=6,
        0.0f64..0.04,
        0.0f64..0.01,
        0.0f64..0.005,
        -2.0f64..0.0,
        0.0f64..0.03,
    )
        .prop_map(|(n_bins, n_vib, coupling, kappa, v12, s1, sigma)| {
            let spec = ModelSpec { coupling, kappa, v12, s1, s2: 2.0 * s1, sigma, ..ModelSpec::reference() };
            (spec, if sigma == 0.0 { 1 } else { n_bins }, n_vib)
        })
}

fn random_state(dim: usize, seed: &[f64]) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..dim).map(|k| c(seed[k % seed.len()] + k as f64 * 0.01, seed[(k + 1) % seed.len()])).collect();
    let n = norm_sqr(&v).sqrt();
    v.into_iter().map(|z| z / n).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linearity((spec, n_bins, n_vib) in small_system(), a in -1.0f64..1.0, seed in prop::collection::vec(-1.0f64..1.0, 3..6)) {
        let bins = discretize_disorder(&spec, n_bins).unwrap();
        let h = build_effective_hamiltonian(&spec, &bins, n_vib).unwrap();
        let x = InitialState::Photonic.vector(&h).unwrap();
        let y = random_state(h.dim(), &seed);
        let z: Vec<Complex64> = x.iter().zip(&y).map(|(p, q)| p + c(a, 0.5) * q).collect();
        let opts = PropagationOptions::new(50.0).with_tolerance(1e-11);
        let fx = propagate(&h, &x, &opts).unwrap();
        let fy = propagate(&h, &y, &opts).unwrap();
        let fz = propagate(&h, &z, &opts).unwrap();
        let (sx, sy, sz) = (fx.final_snapshot().unwrap(), fy.final_snapshot().unwrap(), fz.final_snapshot().unwrap());
        for k in 0..h.dim() {
            prop_assert!((sz.state[k] - sx.state[k] - c(a, 0.5) * sy.state[k]).norm() < 1e-9);
        }
    }

    #[test]
    fn norm_never_grows((spec, n_bins, n_vib) in small_system()) {
        let bins = discretize_disorder(&spec, n_bins).unwrap();
        let h = build_effective_hamiltonian(&spec, &bins, n_vib).unwrap();
        let psi0 = InitialState::UpperPolariton.vector(&h).unwrap();
        let traj = propagate(&h, &psi0, &PropagationOptions::new(100.0)).unwrap();
        for w in traj.norms.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        if spec.kappa == 0.0 {
            prop_assert!((traj.norms.last().unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn lossless_evolution_is_reversible((spec, n_bins, n_vib) in small_system()) {
        let spec = ModelSpec { kappa: 0.0, ..spec };
        let bins = discretize_disorder(&spec, n_bins).unwrap();
        let h = build_effective_hamiltonian(&spec, &bins, n_vib).unwrap();
        let psi0 = InitialState::Bright.vector(&h).unwrap();
        let opts = PropagationOptions::new(60.0).with_tolerance(1e-11);
        let fwd = propagate(&h, &psi0, &opts).unwrap();
        // Backward evolution of psi(T) equals forward evolution of its
        // conjugate under the real symmetric Hamiltonian, conjugated back.
        let conj: Vec<Complex64> = fwd.final_snapshot().unwrap().state.iter().map(|z| z.conj()).collect();
        let back = propagate(&h, &conj, &opts).unwrap();
        for (x, y) in back.final_snapshot().unwrap().state.iter().zip(&psi0) {
            prop_assert!((x.conj() - y).norm() < 1e-9);
        }
    }

    #[test]
    fn norm_law((spec, n_bins, n_vib) in small_system(), seed in prop::collection::vec(-1.0f64..1.0, 3..6)) {
        let bins = discretize_disorder(&spec, n_bins).unwrap();
        let h = build_effective_hamiltonian(&spec, &bins, n_vib).unwrap();
        let psi0 = random_state(h.dim(), &seed);
        let opts = PropagationOptions::new(60.0).with_dt_record(0.1).with_tolerance(1e-11);
        let traj = propagate(&h, &psi0, &opts).unwrap();
        let p = h.photon_index();
        for k in 1..traj.norms.len() - 1 {
            let rate = (traj.norms[k + 1] - traj.norms[k - 1]) / (2.0 * opts.dt_record);
            let law = -spec.kappa * traj.snapshots[k].state[p].norm_sqr();
            prop_assert!((rate - law).abs() < 1e-6, "t = {}: {} vs {}", traj.times[k], rate, law);
        }
    }

    #[test]
    fn engines_agree((spec, n_bins, n_vib) in small_system(), seed in prop::collection::vec(-1.0f64..1.0, 3..6)) {
        let bins = discretize_disorder(&spec, n_bins).unwrap();
        let h = build_effective_hamiltonian(&spec, &bins, n_vib).unwrap();
        let psi0 = random_state(h.dim(), &seed);
        let tolerance = 1e-9;
        let opts = PropagationOptions::new(80.0).with_tolerance(tolerance);
        let a = propagate(&h, &psi0, &opts).unwrap();
        let b = propagate_eom(&spec, &bins, n_vib, &psi0, &opts).unwrap();
        for ((sa, sb), (ca, cb)) in a.snapshots.iter().zip(&b.snapshots).zip(a.autocorrelation.iter().zip(&b.autocorrelation)) {
            prop_assert!((ca - cb).norm() < 10.0 * tolerance);
            for (x, y) in sa.state.iter().zip(&sb.state) {
                prop_assert!((x.norm_sqr() - y.norm_sqr()).abs() < 10.0 * tolerance);
            }
        }
    }

    #[test]
    fn basis_sizes((spec, n_bins, n_vib) in small_system()) {
        let bins = discretize_disorder(&spec, n_bins).unwrap();
        let h = build_effective_hamiltonian(&spec, &bins, n_vib).unwrap();
        prop_assert_eq!(h.dim(), Basis::new(n_bins, n_vib).dim());
    }
}
