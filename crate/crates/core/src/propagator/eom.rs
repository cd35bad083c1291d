//! Direct integration of the renormalized amplitude equations.
//!
//! Amplitudes are expanded in the vibrational eigenstates `|phi_l>` of each
//! excited surface, so the excited-state energies are diagonal,
//! `omega_0,i + omega_nu eps_l`, and light couples through the Franck-Condon
//! sums `sum_l <phi_0|phi_l> A_i,l`:
//!
//! ```text
//! i dA0/dt   = omega_c A0 + G sum_i sqrt(P_i) sum_l f_l a_i,l
//! i da_i,l/dt = (omega_0,i + omega_nu eps1_l) a_i,l + G sqrt(P_i) f_l A0
//!              + v12 sum_m O_lm b_i,m
//! i db_i,m/dt = (omega_0,i + delta2 + omega_nu eps2_m) b_i,m + v12 sum_l O_lm a_i,l
//! ```
//!
//! The eigenstates are those of the truncated surface operators, so this path
//! spans exactly the same space as the sparse matrix and the two can be
//! compared to integrator accuracy. Time stepping is an adaptive
//! Dormand-Prince 5(4) scheme, independent of the Taylor propagator.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::{norm_sqr, PropagationOptions, Recorder, Trajectory};
use crate::error::{Error, Result};
use crate::hamiltonian::{displaced_number_operator, fc_overlap};
use crate::model::{Basis, BinSet, ModelSpec};

/// Orthonormal eigenbasis of one truncated surface, sorted by energy.
struct Surface {
    levels: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl Surface {
    fn new(s: f64, n_vib: usize) -> Self {
        let eig = SymmetricEigen::new(displaced_number_operator(s, n_vib).dense());
        let mut order: Vec<usize> = (0..n_vib).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        let mut vectors = DMatrix::zeros(n_vib, n_vib);
        for (l, &k) in order.iter().enumerate() {
            let mut column = eig.eigenvectors.column(k).into_owned();
            // Fix the sign to match the closed-form overlap <0|D(s)|l>.
            let reference = fc_overlap(s, l);
            if column[0] * reference < 0.0 || (reference == 0.0 && column[0] < 0.0) {
                column = -column;
            }
            vectors.set_column(l, &column);
        }
        Surface { levels: order.iter().map(|&k| eig.eigenvalues[k]).collect(), vectors }
    }
}

struct AmplitudeEquations {
    n_bins: usize,
    n_vib: usize,
    shift: f64,
    photon: Complex64,
    couplings: Vec<f64>,
    e1: Vec<Vec<f64>>,
    e2: Vec<Vec<f64>>,
    fc: Vec<f64>,
    overlap: DMatrix<f64>,
    v12: f64,
}

impl AmplitudeEquations {
    fn offset_e1(&self, bin: usize) -> usize {
        1 + 2 * bin * self.n_vib
    }

    fn offset_e2(&self, bin: usize) -> usize {
        1 + (2 * bin + 1) * self.n_vib
    }

    /// `dy = -i (H - shift) y`.
    fn rhs(&self, y: &[Complex64], dy: &mut [Complex64]) {
        let minus_i = Complex64::new(0.0, -1.0);
        let n = self.n_vib;
        let a0 = y[0];
        let mut photon = (self.photon - self.shift) * a0;
        for i in 0..self.n_bins {
            let (o1, o2) = (self.offset_e1(i), self.offset_e2(i));
            let a = &y[o1..o1 + n];
            let b = &y[o2..o2 + n];
            let g = self.couplings[i];
            let fc_sum: Complex64 = self.fc.iter().zip(a).map(|(f, x)| f * x).sum();
            photon += g * fc_sum;
            for l in 0..n {
                let mut acc = (self.e1[i][l] - self.shift) * a[l] + g * self.fc[l] * a0;
                let mut mix = Complex64::new(0.0, 0.0);
                for m in 0..n {
                    mix += self.overlap[(l, m)] * b[m];
                }
                acc += self.v12 * mix;
                dy[o1 + l] = minus_i * acc;
            }
            for m in 0..n {
                let mut mix = Complex64::new(0.0, 0.0);
                for l in 0..n {
                    mix += self.overlap[(l, m)] * a[l];
                }
                dy[o2 + m] = minus_i * ((self.e2[i][m] - self.shift) * b[m] + self.v12 * mix);
            }
        }
        dy[0] = minus_i * photon;
    }
}

/// Basis change between the flat Fock layout of [`Basis`] and the
/// per-bin eigenbasis layout used by the equations of motion.
struct Transform<'a> {
    basis: Basis,
    u1: &'a DMatrix<f64>,
    u2: &'a DMatrix<f64>,
}

impl Transform<'_> {
    fn to_eigen(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let n = self.basis.n_vib;
        let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
        out[0] = psi[0];
        for i in 0..self.basis.n_bins {
            for (range, u, offset) in [
                (self.basis.e1_range(i), self.u1, 1 + 2 * i * n),
                (self.basis.e2_range(i), self.u2, 1 + (2 * i + 1) * n),
            ] {
                let src = &psi[range];
                for l in 0..n {
                    out[offset + l] = (0..n).map(|k| u[(k, l)] * src[k]).sum();
                }
            }
        }
        out
    }

    fn to_fock(&self, y: &[Complex64]) -> Vec<Complex64> {
        let n = self.basis.n_vib;
        let mut out = vec![Complex64::new(0.0, 0.0); y.len()];
        out[0] = y[0];
        for i in 0..self.basis.n_bins {
            for (range, u, offset) in [
                (self.basis.e1_range(i), self.u1, 1 + 2 * i * n),
                (self.basis.e2_range(i), self.u2, 1 + (2 * i + 1) * n),
            ] {
                let src = &y[offset..offset + n];
                for (k, slot) in range.enumerate() {
                    out[slot] = (0..n).map(|l| u[(k, l)] * src[l]).sum();
                }
            }
        }
        out
    }
}

// Dormand-Prince 5(4) tableau; the system is autonomous so the nodes are
// not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct DormandPrince {
    stages: Vec<Vec<Complex64>>,
    scratch: Vec<Complex64>,
}

impl DormandPrince {
    fn new(dim: usize) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        DormandPrince { stages: vec![vec![zero; dim]; 7], scratch: vec![zero; dim] }
    }

    /// Attempts a step of size `h`; returns the 5th-order solution in
    /// `out` and the embedded error norm.
    fn step(&mut self, eq: &AmplitudeEquations, y: &[Complex64], h: f64, out: &mut [Complex64]) -> f64 {
        eq.rhs(y, &mut self.stages[0]);
        for s in 1..7 {
            for k in 0..y.len() {
                let mut acc = y[k];
                for (j, a) in A[s][..s].iter().enumerate() {
                    if *a != 0.0 {
                        acc += h * a * self.stages[j][k];
                    }
                }
                self.scratch[k] = acc;
            }
            eq.rhs(&self.scratch, &mut self.stages[s]);
        }
        let mut err = 0.0;
        for k in 0..y.len() {
            let mut high = Complex64::new(0.0, 0.0);
            let mut low = Complex64::new(0.0, 0.0);
            for s in 0..7 {
                high += B5[s] * self.stages[s][k];
                low += B4[s] * self.stages[s][k];
            }
            out[k] = y[k] + h * high;
            err += (h * (high - low)).norm_sqr();
        }
        err.sqrt()
    }
}

/// Propagates with the amplitude equations; `psi0` is given in the flat
/// layout of [`Basis`] and snapshots are returned in that layout too.
pub fn propagate_eom(
    spec: &ModelSpec,
    bins: &BinSet,
    n_vib: usize,
    psi0: &[Complex64],
    opts: &PropagationOptions,
) -> Result<Trajectory> {
    spec.validate()?;
    bins.validate()?;
    if n_vib < 2 {
        return Err(Error::InvalidParameter { name: "n_vib", reason: format!("must be >= 2, got {n_vib}") });
    }
    let steps = opts.steps()?;
    let basis = Basis::new(bins.len(), n_vib);
    if psi0.len() != basis.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), found: psi0.len() });
    }

    let s1 = Surface::new(spec.s1, n_vib);
    let s2 = Surface::new(spec.s2, n_vib);
    let fc: Vec<f64> = (0..n_vib).map(|l| s1.vectors[(0, l)]).collect();
    let overlap = s1.vectors.transpose() * &s2.vectors;
    let e1: Vec<Vec<f64>> = bins
        .bins()
        .iter()
        .map(|b| s1.levels.iter().map(|e| b.omega0 + spec.omega_nu * e).collect())
        .collect();
    let e2: Vec<Vec<f64>> = bins
        .bins()
        .iter()
        .map(|b| s2.levels.iter().map(|e| b.omega0 + spec.delta2 + spec.omega_nu * e).collect())
        .collect();
    let all = e1.iter().chain(&e2).flatten().copied().chain([spec.omega_c]);
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e), hi.max(e)));
    let shift = 0.5 * (lo + hi);
    let eq = AmplitudeEquations {
        n_bins: bins.len(),
        n_vib,
        shift,
        photon: Complex64::new(spec.omega_c, -0.5 * spec.kappa),
        couplings: bins.weights().map(|w| spec.coupling * w.sqrt()).collect(),
        e1,
        e2,
        fc,
        overlap,
        v12: spec.v12,
    };
    let transform = Transform { basis, u1: &s1.vectors, u2: &s2.vectors };

    let photonic = (psi0[0].norm_sqr() - 1.0).abs() < 1e-12;
    let mut recorder = Recorder::new(psi0, opts, photonic);
    recorder.record(0, 0.0, psi0);
    if steps == 0 {
        return Ok(recorder.finish(0.0));
    }

    let t_final = steps as f64 * opts.dt_record;
    // Per-unit-time error budget; the embedded estimate overstates the
    // error of the propagated 5th-order solution.
    let rate = 0.1 * opts.tolerance / t_final;
    let mut y = transform.to_eigen(psi0);
    let mut trial = y.clone();
    let mut dp = DormandPrince::new(y.len());
    let mut t = 0.0;
    let mut h = 0.1 * opts.dt_record.min(1.0);
    let mut estimate = 0.0;
    let mut rejected = 0usize;

    for k in 1..=steps {
        let target = k as f64 * opts.dt_record;
        while t < target - 1e-12 * target.max(1.0) {
            let step = h.min(target - t);
            let err = dp.step(&eq, &y, step, &mut trial);
            if !err.is_finite() {
                return Err(Error::NonFinite { step: k, time: t });
            }
            let allowed = rate * step;
            if err <= allowed {
                t += step;
                std::mem::swap(&mut y, &mut trial);
                estimate += err;
            } else {
                rejected += 1;
                if rejected > 1_000_000 {
                    return Err(Error::ToleranceNotMet { estimate: err, tolerance: opts.tolerance });
                }
            }
            let factor = if err == 0.0 { 5.0 } else { 0.9 * (allowed / err).powf(0.2) };
            // Do not let a short step that lands on a grid point shrink h.
            let proposal = step * factor.clamp(0.2, 5.0);
            h = if step < h && err <= allowed { h.max(proposal) } else { proposal };
        }
        t = target;
        let phase = Complex64::from_polar(1.0, -shift * t);
        let psi: Vec<Complex64> = transform.to_fock(&y).into_iter().map(|z| z * phase).collect();
        if !norm_sqr(&psi).is_finite() {
            return Err(Error::NonFinite { step: k, time: t });
        }
        recorder.record(k, t, &psi);
    }
    if estimate > opts.tolerance {
        return Err(Error::ToleranceNotMet { estimate, tolerance: opts.tolerance });
    }
    Ok(recorder.finish(estimate))
}
