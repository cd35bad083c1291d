//! Vibrational operators and assembly of the effective polariton Hamiltonians.
//!
//! All vibrational operators are written in the undisplaced Fock basis of the
//! ground surface. The displaced number operator is expanded analytically,
//!
//! ```text
//! D(s) b^+ b D(s)^+ = b^+ b - s (b + b^+) + s^2,
//! ```
//!
//! so every excited-state block is tridiagonal and no matrix exponential of
//! the displacement is ever formed.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Basis, BasisState, BinSet, ModelSpec};
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Default cap on the Hilbert space dimension accepted by the builders.
pub const DEFAULT_MAX_DIMENSION: usize = 4_000_000;

/// Default vibrational truncation for the reference parameters.
pub const DEFAULT_N_VIB: usize = 60;

/// A real symmetric tridiagonal vibrational operator.
#[derive(Debug, Clone, PartialEq)]
pub struct VibOperator {
    diag: Vec<f64>,
    /// `off[n]` couples levels `n` and `n + 1`.
    off: Vec<f64>,
}

impl VibOperator {
    pub fn n_vib(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off_diag(&self) -> &[f64] {
        &self.off
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.n_vib();
        DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                self.diag[r]
            } else if r + 1 == c {
                self.off[r]
            } else if c + 1 == r {
                self.off[c]
            } else {
                0.0
            }
        })
    }

    /// `<psi|O|psi>` for a vector of vibrational amplitudes.
    pub fn expectation(&self, psi: &[Complex64]) -> f64 {
        let n = self.n_vib();
        let mut acc = 0.0;
        for k in 0..n {
            acc += self.diag[k] * psi[k].norm_sqr();
            if k + 1 < n {
                acc += 2.0 * self.off[k] * (psi[k].conj() * psi[k + 1]).re;
            }
        }
        acc
    }
}

/// `N(s) = b^+ b - s (b + b^+) + s^2` truncated to `n_vib` levels.
pub fn displaced_number_operator(s: f64, n_vib: usize) -> VibOperator {
    let diag = (0..n_vib).map(|n| n as f64 + s * s).collect();
    let off = (0..n_vib.saturating_sub(1))
        .map(|n| -s * ((n + 1) as f64).sqrt())
        .collect();
    VibOperator { diag, off }
}

/// Franck-Condon overlap `<0|D(s)|l>` between the ground-surface vibrational
/// ground state and level `l` of a surface displaced by `s`.
pub fn fc_overlap(s: f64, l: usize) -> f64 {
    let mut value = (-0.5 * s * s).exp();
    for k in 1..=l {
        value *= -s / (k as f64).sqrt();
    }
    value
}

/// Which electronic sector a basis state belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sector {
    Photon,
    E1(usize),
    E2(usize),
}

/// A sparse non-Hermitian Hamiltonian in the first excitation manifold,
/// together with the sector label of every basis state.
///
/// Loss enters only as `-i kappa / 2` on the photon-sector diagonal.
#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    matrix: CsrMatrix,
    sectors: Vec<Sector>,
    kappa: f64,
    basis: Option<Basis>,
    fc_index: usize,
    weights: Vec<f64>,
    bin_fc: Vec<Vec<(usize, f64)>>,
}

impl EffectiveHamiltonian {
    /// `bin_fc[i]` lists the excited `e1` states of bin `i` at the
    /// Franck-Condon point with their amplitude inside the bin's symmetric
    /// (bright) combination.
    pub(crate) fn from_parts(
        matrix: CsrMatrix,
        sectors: Vec<Sector>,
        kappa: f64,
        basis: Option<Basis>,
        fc_index: usize,
        weights: Vec<f64>,
        bin_fc: Vec<Vec<(usize, f64)>>,
    ) -> Self {
        debug_assert_eq!(matrix.dim(), sectors.len());
        debug_assert_eq!(weights.len(), bin_fc.len());
        EffectiveHamiltonian { matrix, sectors, kappa, basis, fc_index, weights, bin_fc }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    pub fn n_bins(&self) -> usize {
        self.weights.len()
    }

    /// Bin weights `P_i`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Franck-Condon `e1` states of `bin` with their in-bin amplitudes.
    pub fn bin_fc_states(&self, bin: usize) -> &[(usize, f64)] {
        &self.bin_fc[bin]
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// The single-coordinate basis, when this Hamiltonian has one.
    pub fn basis(&self) -> Option<&Basis> {
        self.basis.as_ref()
    }

    /// Flat index of the photon state with every molecule in its
    /// Franck-Condon state.
    pub fn photon_index(&self) -> usize {
        self.fc_index
    }

    /// `H + (i kappa / 2) sum_photon |k><k|`, which must be Hermitian.
    pub fn hermitian_part(&self) -> DMatrix<Complex64> {
        let mut dense = self.matrix.to_dense();
        for (k, sector) in self.sectors.iter().enumerate() {
            if *sector == Sector::Photon {
                dense[(k, k)] += Complex64::new(0.0, 0.5 * self.kappa);
            }
        }
        dense
    }

    /// Largest `|H_jk - conj(H_kj)|` with the loss term removed, relative to
    /// the largest matrix element.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (r, c, v) in self.matrix.triplets() {
            let mut v = v;
            if r == c && self.sectors[r] == Sector::Photon {
                v += Complex64::new(0.0, 0.5 * self.kappa);
            }
            let mut t = self.matrix.get(c, r).conj();
            if r == c && self.sectors[r] == Sector::Photon {
                t -= Complex64::new(0.0, 0.5 * self.kappa);
            }
            worst = worst.max((v - t).norm());
        }
        worst / self.matrix.max_abs().max(f64::MIN_POSITIVE)
    }

    /// Real symmetric matrix of the Hermitian part; all couplings are real.
    pub fn hermitian_part_real(&self) -> DMatrix<f64> {
        self.hermitian_part().map(|z| z.re)
    }
}

/// Checks sizes and returns the dimension, or a cap error.
fn check_dimension(dim: usize, cap: usize) -> Result<()> {
    if dim > cap {
        return Err(Error::DimensionTooLarge { dim, cap });
    }
    Ok(())
}

fn check_n_vib(n_vib: usize) -> Result<()> {
    if n_vib < 2 {
        return Err(Error::InvalidParameter {
            name: "n_vib",
            reason: format!("must be >= 2, got {n_vib}"),
        });
    }
    Ok(())
}

/// Assembles the single-coordinate effective Hamiltonian over the basis
/// `{photon, e1(i, n), e2(i, n)}`.
pub fn build_effective_hamiltonian(
    spec: &ModelSpec,
    bins: &BinSet,
    n_vib: usize,
) -> Result<EffectiveHamiltonian> {
    build_effective_hamiltonian_capped(spec, bins, n_vib, DEFAULT_MAX_DIMENSION)
}

pub fn build_effective_hamiltonian_capped(
    spec: &ModelSpec,
    bins: &BinSet,
    n_vib: usize,
    max_dimension: usize,
) -> Result<EffectiveHamiltonian> {
    spec.validate()?;
    bins.validate()?;
    check_n_vib(n_vib)?;
    let basis = Basis::new(bins.len(), n_vib);
    let dim = basis.dim();
    check_dimension(dim, max_dimension)?;

    let n1 = displaced_number_operator(spec.s1, n_vib);
    let n2 = displaced_number_operator(spec.s2, n_vib);
    let mut b = TripletBuilder::new(dim);
    b.push(0, 0, Complex64::new(spec.omega_c, -0.5 * spec.kappa));

    for (i, bin) in bins.bins().iter().enumerate() {
        let blocks = [
            (basis.e1_range(i).start, &n1, bin.omega0),
            (basis.e2_range(i).start, &n2, bin.omega0 + spec.delta2),
        ];
        for (start, op, offset) in blocks {
            for n in 0..n_vib {
                b.push_real(start + n, start + n, offset + spec.omega_nu * op.diag()[n]);
                if n + 1 < n_vib {
                    b.push_hermitian_pair(start + n, start + n + 1, spec.omega_nu * op.off_diag()[n]);
                }
            }
        }
        let fc = basis.index(BasisState::E1 { bin: i, vib: 0 });
        b.push_hermitian_pair(0, fc, spec.coupling * bin.weight.sqrt());
        for n in 0..n_vib {
            b.push_hermitian_pair(
                basis.index(BasisState::E1 { bin: i, vib: n }),
                basis.index(BasisState::E2 { bin: i, vib: n }),
                spec.v12,
            );
        }
    }

    let sectors = (0..dim)
        .map(|k| match basis.state(k).expect("index within dimension") {
            BasisState::Photon => Sector::Photon,
            BasisState::E1 { bin, .. } => Sector::E1(bin),
            BasisState::E2 { bin, .. } => Sector::E2(bin),
        })
        .collect();
    let bin_fc = (0..bins.len())
        .map(|i| vec![(basis.index(BasisState::E1 { bin: i, vib: 0 }), 1.0)])
        .collect();
    Ok(EffectiveHamiltonian::from_parts(
        b.build(),
        sectors,
        spec.kappa,
        Some(basis),
        0,
        bins.weights().collect(),
        bin_fc,
    ))
}

/// Assembles the multi-coordinate Hamiltonian where every bin keeps its own
/// vibrational coordinate (at most two bins).
///
/// States are `e_{1/2},i (x) |n_1> (x) |n_2>`; the coordinate of the excited
/// bin moves on its displaced surface while the other carries the undisplaced
/// ground-surface oscillator. The photon state is restricted to the
/// Franck-Condon point `|0, 0>`, which is the only photon state reachable
/// through the per-bin projector `|phi_0,i><phi_0,i|`.
pub fn build_multibin_hamiltonian(
    spec: &ModelSpec,
    bins: &BinSet,
    n_vib: usize,
) -> Result<EffectiveHamiltonian> {
    spec.validate()?;
    bins.validate()?;
    check_n_vib(n_vib)?;
    let n_bins = bins.len();
    if n_bins > 2 {
        return Err(Error::TooManyBins(n_bins));
    }
    let block = n_vib.pow(n_bins as u32);
    let dim = 1 + 2 * n_bins * block;
    check_dimension(dim, DEFAULT_MAX_DIMENSION)?;

    // Vibrational multi-index -> per-coordinate levels, coordinate 0 slowest.
    let levels = |v: usize| -> Vec<usize> {
        let mut out = vec![0; n_bins];
        let mut rest = v;
        for k in (0..n_bins).rev() {
            out[k] = rest % n_vib;
            rest /= n_vib;
        }
        out
    };
    let flat = |levels: &[usize]| levels.iter().fold(0, |acc, &l| acc * n_vib + l);
    let e1_start = |bin: usize| 1 + bin * block;
    let e2_start = |bin: usize| 1 + (n_bins + bin) * block;

    let n1 = displaced_number_operator(spec.s1, n_vib);
    let n2 = displaced_number_operator(spec.s2, n_vib);
    let mut b = TripletBuilder::new(dim);
    b.push(0, 0, Complex64::new(spec.omega_c, -0.5 * spec.kappa));

    for (i, bin) in bins.bins().iter().enumerate() {
        let surfaces = [
            (e1_start(i), &n1, bin.omega0),
            (e2_start(i), &n2, bin.omega0 + spec.delta2),
        ];
        for (start, op, offset) in surfaces {
            for v in 0..block {
                let lv = levels(v);
                let spectators: f64 = (0..n_bins).filter(|&k| k != i).map(|k| lv[k] as f64).sum();
                let energy = offset + spec.omega_nu * (op.diag()[lv[i]] + spectators);
                b.push_real(start + v, start + v, energy);
                if lv[i] + 1 < n_vib {
                    let mut up = lv.clone();
                    up[i] += 1;
                    b.push_hermitian_pair(
                        start + v,
                        start + flat(&up),
                        spec.omega_nu * op.off_diag()[lv[i]],
                    );
                }
            }
        }
        b.push_hermitian_pair(0, e1_start(i), spec.coupling * bin.weight.sqrt());
        for v in 0..block {
            b.push_hermitian_pair(e1_start(i) + v, e2_start(i) + v, spec.v12);
        }
    }

    let mut sectors = vec![Sector::Photon; dim];
    for i in 0..n_bins {
        for v in 0..block {
            sectors[e1_start(i) + v] = Sector::E1(i);
            sectors[e2_start(i) + v] = Sector::E2(i);
        }
    }
    let basis = (n_bins == 1).then(|| Basis::new(1, n_vib));
    let bin_fc = (0..n_bins).map(|i| vec![(e1_start(i), 1.0)]).collect();
    Ok(EffectiveHamiltonian::from_parts(
        b.build(),
        sectors,
        spec.kappa,
        basis,
        0,
        bins.weights().collect(),
        bin_fc,
    ))
}

/// Expected stored-entry count of the single-coordinate Hamiltonian when all
/// couplings and displacements are non-zero.
pub fn expected_nnz(n_bins: usize, n_vib: usize) -> usize {
    1 + 2 * n_bins * (3 * n_vib - 2) + 2 * n_bins + 2 * n_bins * n_vib
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::discretize_disorder;
    use approx::assert_abs_diff_eq;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;

    fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
        let mut e: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn undisplaced_number_operator() {
        let op = displaced_number_operator(0.0, 5);
        assert_eq!(op.dense(), DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0., 1., 2., 3., 4.])));
    }

    #[test]
    fn displaced_ground_occupation() {
        for s in [-4.0, -1.0, 0.3, 2.5] {
            assert_eq!(displaced_number_operator(s, 8).dense()[(0, 0)], s * s);
        }
    }

    #[test]
    fn displaced_spectrum_is_integer() {
        let e = sorted_eigenvalues(displaced_number_operator(-1.0, 30).dense());
        for (k, value) in e.iter().take(5).enumerate() {
            assert_abs_diff_eq!(*value, k as f64, epsilon = 1e-8);
        }
    }

    #[test]
    fn fc_overlap_values() {
        assert_eq!(fc_overlap(0.0, 0), 1.0);
        assert_eq!(fc_overlap(0.0, 3), 0.0);
        assert_abs_diff_eq!(fc_overlap(1.0, 0), 0.60653, epsilon = 1e-5);
        let total: f64 = (0..=40).map(|l| fc_overlap(-1.0, l).powi(2)).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        for l in 0..8 {
            let closed = (-0.5 * 1.69f64).exp() * 1.3f64.powi(l as i32) / factorial(l).sqrt();
            assert_abs_diff_eq!(fc_overlap(-1.3, l), closed, epsilon = 1e-14);
        }
    }

    #[test]
    fn fc_overlap_matches_eigenvectors() {
        // The eigenvector of N(s) for level l, projected on |0>, is <0|D(s)|l>
        // up to a global sign.
        let s = -1.0;
        let eig = SymmetricEigen::new(displaced_number_operator(s, 40).dense());
        let mut order: Vec<usize> = (0..40).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        for (l, &k) in order.iter().take(6).enumerate() {
            assert_abs_diff_eq!(eig.eigenvectors[(0, k)].abs(), fc_overlap(s, l).abs(), epsilon = 1e-10);
        }
    }

    #[test]
    fn decoupled_limit() {
        let spec = ModelSpec { coupling: 0.0, kappa: 0.0, v12: 0.0, ..ModelSpec::reference() };
        let h = build_effective_hamiltonian(&spec, &BinSet::single(spec.omega0), 6).unwrap();
        assert_eq!(h.matrix().get(0, 0), Complex64::new(spec.omega_c, 0.0));
        assert_eq!(h.matrix().row(0).count(), 1);
        assert_eq!(h.hermiticity_defect(), 0.0);
    }

    #[test]
    fn jaynes_cummings_doublet() {
        let spec = ModelSpec {
            s1: 0.0,
            v12: 0.0,
            kappa: 0.0,
            omega_c: 0.10,
            ..ModelSpec::reference()
        };
        let h = build_effective_hamiltonian(&spec, &BinSet::single(spec.omega0), 4).unwrap();
        let m = h.hermitian_part_real();
        let sub = DMatrix::from_row_slice(2, 2, &[m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]);
        let e = sorted_eigenvalues(sub);
        assert_abs_diff_eq!(e[0], 0.10 - 0.03, epsilon = 1e-15);
        assert_abs_diff_eq!(e[1], 0.10 + 0.03, epsilon = 1e-15);
    }

    #[test]
    fn reference_structure() {
        let spec = ModelSpec::reference();
        let h = build_effective_hamiltonian(&spec, &BinSet::single(spec.omega0), 60).unwrap();
        assert!(h.hermiticity_defect() < 1e-12);
        assert_eq!(h.matrix().nnz(), expected_nnz(1, 60));
        let row: Vec<_> = h.matrix().row(0).filter(|&(c, _)| c != 0).collect();
        assert_eq!(row.len(), 1);
        assert_eq!(row[0].0, 1);
        assert_abs_diff_eq!(row[0].1.re, 0.03);
        assert_eq!(h.matrix().get(0, 0), Complex64::new(0.11, -0.003));
    }

    #[test]
    fn multibin_single_bin_coincides() {
        let spec = ModelSpec { sigma: 0.01, ..ModelSpec::reference() };
        let bins = discretize_disorder(&spec, 1).unwrap();
        let a = build_effective_hamiltonian(&spec, &bins, 12).unwrap();
        let b = build_multibin_hamiltonian(&spec, &bins, 12).unwrap();
        assert_eq!(a.matrix(), b.matrix());
    }

    #[test]
    fn multibin_spectators_decouple_without_cavity() {
        let spec = ModelSpec { coupling: 0.0, sigma: 0.01, ..ModelSpec::reference() };
        let bins = discretize_disorder(&spec, 2).unwrap();
        let n_vib = 5;
        let h = build_multibin_hamiltonian(&spec, &bins, n_vib).unwrap();
        assert!(h.hermiticity_defect() < 1e-12);
        // Each excited bin block is N(s) on its own coordinate plus an
        // undisplaced oscillator on the spectator: no entry changes the
        // spectator level.
        let block = n_vib * n_vib;
        for (r, c, _) in h.matrix().triplets() {
            if r == 0 || c == 0 {
                assert_eq!((r, c), (0, 0));
                continue;
            }
            let (bin_r, v_r) = (((r - 1) / block) % 2, (r - 1) % block);
            let (bin_c, v_c) = (((c - 1) / block) % 2, (c - 1) % block);
            assert_eq!(bin_r, bin_c);
            let spectator = |v: usize| if bin_r == 0 { v % n_vib } else { v / n_vib };
            assert_eq!(spectator(v_r), spectator(v_c));
        }
        let e = sorted_eigenvalues(h.hermitian_part_real());
        let e1 = sorted_eigenvalues(build_effective_hamiltonian(&spec, &bins, n_vib).unwrap().hermitian_part_real());
        // Lowest levels have the spectator in its ground state.
        assert_abs_diff_eq!(e[0], e1[0], epsilon = 1e-12);
    }

    #[test]
    fn too_many_bins_rejected() {
        let spec = ModelSpec { sigma: 0.01, ..ModelSpec::reference() };
        let bins = discretize_disorder(&spec, 3).unwrap();
        assert_eq!(build_multibin_hamiltonian(&spec, &bins, 4).unwrap_err(), Error::TooManyBins(3));
    }

    #[test]
    fn dimension_cap() {
        let spec = ModelSpec::reference();
        let err = build_effective_hamiltonian_capped(&spec, &BinSet::single(0.1), 60, 100).unwrap_err();
        assert_eq!(err, Error::DimensionTooLarge { dim: 121, cap: 100 });
        assert!(build_effective_hamiltonian(&spec, &BinSet::single(0.1), 1).is_err());
    }

    #[test]
    fn common_shift_translates_spectrum() {
        let spec = ModelSpec { sigma: 0.01, ..ModelSpec::reference() };
        let bins = discretize_disorder(&spec, 2).unwrap();
        let delta = 0.0123;
        let shifted_spec = ModelSpec { omega_c: spec.omega_c + delta, ..spec };
        let a = sorted_eigenvalues(build_effective_hamiltonian(&spec, &bins, 10).unwrap().hermitian_part_real());
        let b = sorted_eigenvalues(
            build_effective_hamiltonian(&shifted_spec, &bins.shifted(delta), 10).unwrap().hermitian_part_real(),
        );
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(y - x, delta, epsilon = 1e-12);
        }
    }

    #[test]
    fn production_truncation_is_converged() {
        let spec = ModelSpec { sigma: 0.02, ..ModelSpec::reference() };
        let bins = discretize_disorder(&spec, 2).unwrap();
        let low = |n_vib| {
            let e = sorted_eigenvalues(build_effective_hamiltonian(&spec, &bins, n_vib).unwrap().hermitian_part_real());
            e[..10].to_vec()
        };
        let (a, b) = (low(DEFAULT_N_VIB), low(DEFAULT_N_VIB + 10));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }

    proptest! {
        #[test]
        fn random_models_are_hermitian_and_local(
            sigma in 1e-3f64..0.04,
            n_bins in 1usize..5,
            n_vib in 2usize..12,
            s1 in -2.0f64..2.0,
            s2 in -4.0f64..4.0,
            kappa in 0.0f64..0.02,
        ) {
            let spec = ModelSpec { sigma, s1, s2, kappa, ..ModelSpec::reference() };
            let bins = discretize_disorder(&spec, n_bins).unwrap();
            let h = build_effective_hamiltonian(&spec, &bins, n_vib).unwrap();
            prop_assert!(h.hermiticity_defect() < 1e-12);
            let basis = Basis::new(n_bins, n_vib);
            for (c, _) in h.matrix().row(0).filter(|&(c, _)| c != 0) {
                let is_fc = matches!(basis.state(c), Some(BasisState::E1 { vib: 0, .. }));
                prop_assert!(is_fc);
            }
            if s1 != 0.0 && s2 != 0.0 {
                prop_assert_eq!(h.matrix().nnz(), expected_nnz(n_bins, n_vib));
            }
        }
    }
}
