//! Time evolution `psi(t) = exp(-i H t) psi(0)` under a sparse,
//! time-independent, non-Hermitian Hamiltonian.
//!
//! The integrator is a truncated Taylor series of the shifted operator
//! `H - mu`, applied on substeps short enough that the series converges
//! rapidly. The truncation degree comes from a rigorous tail bound on
//! `||H - mu||_2`, and because the loss term only damps the state the
//! local bounds add up to a global one. That global bound is the error
//! estimate checked against the requested tolerance.

mod eom;

pub use eom::propagate_eom;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hamiltonian::{EffectiveHamiltonian, Sector};

/// Default recording interval, au of time.
pub const DEFAULT_DT_RECORD: f64 = 1.0;
/// Default accuracy contract in the state 2-norm.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

const MIN_TOLERANCE: f64 = 1e-12;
const MAX_TOLERANCE: f64 = 1e-6;
/// Largest `h ||H - mu||` used on one substep.
const STEP_RADIUS: f64 = 2.0;
const MAX_TAYLOR_DEGREE: usize = 80;
/// Most substeps one propagation may take.
const MAX_SUBSTEPS: f64 = 1e9;

/// Initial wavepackets. All molecules start at the Franck-Condon point.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// One photon in the cavity.
    Photonic,
    /// The bright exciton `sum_i sqrt(P_i) |e1,i>`.
    Bright,
    /// `(|1> + bright) / sqrt 2`.
    UpperPolariton,
    /// `(|1> - bright) / sqrt 2`.
    LowerPolariton,
    /// Arbitrary amplitudes on the photon and on each bin's Franck-Condon
    /// `e1` state.
    Custom { photon: Complex64, bins: Vec<Complex64> },
}

impl InitialState {
    /// Builds the state vector for `h`. Custom amplitudes must already be
    /// normalized.
    pub fn vector(&self, h: &EffectiveHamiltonian) -> Result<Vec<Complex64>> {
        let zero = Complex64::new(0.0, 0.0);
        let mut psi = vec![zero; h.dim()];
        let one = Complex64::new(1.0, 0.0);
        let bright = |psi: &mut Vec<Complex64>, scale: Complex64| {
            for (i, weight) in h.weights().iter().enumerate() {
                for &(k, a) in h.bin_fc_states(i) {
                    psi[k] += scale * weight.sqrt() * a;
                }
            }
        };
        let half = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            InitialState::Photonic => psi[h.photon_index()] = one,
            InitialState::Bright => bright(&mut psi, one),
            InitialState::UpperPolariton => {
                psi[h.photon_index()] = Complex64::new(half, 0.0);
                bright(&mut psi, Complex64::new(half, 0.0));
            }
            InitialState::LowerPolariton => {
                psi[h.photon_index()] = Complex64::new(half, 0.0);
                bright(&mut psi, Complex64::new(-half, 0.0));
            }
            InitialState::Custom { photon, bins } => {
                if bins.len() != h.n_bins() {
                    return Err(Error::DimensionMismatch { expected: h.n_bins(), found: bins.len() });
                }
                psi[h.photon_index()] = *photon;
                for (i, c) in bins.iter().enumerate() {
                    for &(k, a) in h.bin_fc_states(i) {
                        psi[k] += c * a;
                    }
                }
            }
        }
        let norm = norm_sqr(&psi);
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized(norm));
        }
        Ok(psi)
    }
}

/// Grid and accuracy settings of a propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationOptions {
    pub dt_record: f64,
    pub t_final: f64,
    pub tolerance: f64,
    /// Keep a full state every `stride` grid points; `None` keeps none.
    pub snapshot_stride: Option<usize>,
}

impl PropagationOptions {
    pub fn new(t_final: f64) -> Self {
        PropagationOptions {
            dt_record: DEFAULT_DT_RECORD,
            t_final,
            tolerance: DEFAULT_TOLERANCE,
            snapshot_stride: Some(1),
        }
    }

    pub fn with_dt_record(self, dt_record: f64) -> Self {
        PropagationOptions { dt_record, ..self }
    }

    pub fn with_tolerance(self, tolerance: f64) -> Self {
        PropagationOptions { tolerance, ..self }
    }

    pub fn with_snapshot_stride(self, stride: Option<usize>) -> Self {
        PropagationOptions { snapshot_stride: stride, ..self }
    }

    /// Validates the options and returns the number of recording steps.
    pub fn steps(&self) -> Result<usize> {
        if !(self.tolerance >= MIN_TOLERANCE && self.tolerance <= MAX_TOLERANCE) {
            return Err(Error::InvalidParameter {
                name: "tolerance",
                reason: format!("must lie in [1e-12, 1e-6], got {:e}", self.tolerance),
            });
        }
        if !(self.dt_record > 0.0) || !self.dt_record.is_finite() {
            return Err(Error::InvalidGrid(format!("dt_record = {}", self.dt_record)));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidGrid(format!("t_final = {}", self.t_final)));
        }
        let ratio = self.t_final / self.dt_record;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "dt_record = {} does not divide t_final = {}",
                self.dt_record, self.t_final
            )));
        }
        if let Some(0) = self.snapshot_stride {
            return Err(Error::InvalidGrid("snapshot stride must be >= 1".into()));
        }
        Ok(steps as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Grid index `k` of `t_k = k dt_record`.
    pub index: usize,
    pub time: f64,
    pub state: Vec<Complex64>,
}

/// Recorded quantities of one propagation on the uniform grid
/// `t_k = k dt_record`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt_record: f64,
    pub times: Vec<f64>,
    /// `C(t_k) = <psi(0)|psi(t_k)>`.
    pub autocorrelation: Vec<Complex64>,
    /// `<psi(t_k)|psi(t_k)>`.
    pub norms: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    /// Whether `psi(0)` was the photonic state of the Hamiltonian.
    pub photonic_start: bool,
    /// Global error bound reported by the integrator.
    pub error_estimate: f64,
}

impl Trajectory {
    pub fn t_final(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one sample")
    }

    pub fn final_snapshot(&self) -> Option<&Snapshot> {
        self.snapshots.last().filter(|s| s.index + 1 == self.times.len())
    }

    /// Snapshot closest to `time`.
    pub fn snapshot_near(&self, time: f64) -> Option<&Snapshot> {
        self.snapshots.iter().min_by(|a, b| {
            (a.time - time).abs().partial_cmp(&(b.time - time).abs()).unwrap()
        })
    }
}

pub(crate) fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub(crate) fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn is_photonic(h: &EffectiveHamiltonian, psi0: &[Complex64]) -> bool {
    (psi0[h.photon_index()].norm_sqr() - 1.0).abs() < 1e-12
        && h.sectors()[h.photon_index()] == Sector::Photon
}

/// Builds trajectories point by point; shared by both integrators.
pub(crate) struct Recorder<'a> {
    psi0: &'a [Complex64],
    stride: Option<usize>,
    traj: Trajectory,
}

impl<'a> Recorder<'a> {
    pub(crate) fn new(psi0: &'a [Complex64], opts: &PropagationOptions, photonic: bool) -> Self {
        Recorder {
            psi0,
            stride: opts.snapshot_stride,
            traj: Trajectory {
                dt_record: opts.dt_record,
                times: Vec::new(),
                autocorrelation: Vec::new(),
                norms: Vec::new(),
                snapshots: Vec::new(),
                photonic_start: photonic,
                error_estimate: 0.0,
            },
        }
    }

    pub(crate) fn record(&mut self, index: usize, time: f64, psi: &[Complex64]) {
        self.traj.times.push(time);
        self.traj.autocorrelation.push(inner(self.psi0, psi));
        self.traj.norms.push(norm_sqr(psi));
        if let Some(stride) = self.stride {
            if index.is_multiple_of(stride) {
                self.traj.snapshots.push(Snapshot { index, time, state: psi.to_vec() });
            }
        }
    }

    pub(crate) fn finish(mut self, error_estimate: f64) -> Trajectory {
        self.traj.error_estimate = error_estimate;
        self.traj
    }
}

/// Shift and 2-norm bound used by the Taylor integrator.
fn shifted_norm_bound(h: &EffectiveHamiltonian) -> (f64, f64) {
    let m = h.matrix();
    let (lo, hi) = (0..m.dim())
        .map(|k| m.get(k, k).re)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    let shift = if lo.is_finite() { 0.5 * (lo + hi) } else { 0.0 };
    let mut row = vec![0.0; m.dim()];
    let mut col = vec![0.0; m.dim()];
    for (r, c, v) in m.triplets() {
        let v = if r == c { v - shift } else { v };
        row[r] += v.norm();
        col[c] += v.norm();
    }
    let norm_inf = row.iter().copied().fold(0.0, f64::max);
    let norm_one = col.iter().copied().fold(0.0, f64::max);
    (shift, (norm_inf * norm_one).sqrt())
}

/// Smallest degree `k` with `sum_{j > k} x^j / j! <= eps`, and that tail.
fn taylor_degree(x: f64, eps: f64) -> Option<(usize, f64)> {
    // Tail of the exponential series, summed until negligible.
    let tail_after = |k: usize| -> f64 {
        let mut term = 1.0;
        for j in 1..=k + 1 {
            term *= x / j as f64;
        }
        let mut tail: f64 = 0.0;
        let mut j = k + 1;
        while term > 1e-30 * tail.max(1e-300) && j < k + 200 {
            tail += term;
            j += 1;
            term *= x / j as f64;
        }
        tail
    };
    (1..=MAX_TAYLOR_DEGREE).map(|k| (k, tail_after(k))).find(|&(_, t)| t <= eps)
}

/// Propagates `psi0` and records `C(t)`, norms and snapshots on the grid.
pub fn propagate(
    h: &EffectiveHamiltonian,
    psi0: &[Complex64],
    opts: &PropagationOptions,
) -> Result<Trajectory> {
    propagate_observed(h, psi0, opts, |_, _, _| {})
}

/// Like [`propagate`], additionally calling `observer(k, t_k, psi(t_k))` at
/// every grid point. Lets callers reduce large runs on the fly instead of
/// keeping snapshots.
pub fn propagate_observed<F>(
    h: &EffectiveHamiltonian,
    psi0: &[Complex64],
    opts: &PropagationOptions,
    mut observer: F,
) -> Result<Trajectory>
where
    F: FnMut(usize, f64, &[Complex64]),
{
    let steps = opts.steps()?;
    if psi0.len() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), found: psi0.len() });
    }
    let mut recorder = Recorder::new(psi0, opts, is_photonic(h, psi0));
    recorder.record(0, 0.0, psi0);
    observer(0, 0.0, psi0);
    if steps == 0 {
        return Ok(recorder.finish(0.0));
    }

    let (shift, norm) = shifted_norm_bound(h);
    if !norm.is_finite() || !shift.is_finite() {
        return Err(Error::NonFinite { step: 0, time: 0.0 });
    }
    let per_step = (opts.dt_record * norm / STEP_RADIUS).ceil().max(1.0);
    if per_step * steps as f64 > MAX_SUBSTEPS {
        return Err(Error::StepBudget { substeps: per_step * steps as f64, budget: MAX_SUBSTEPS });
    }
    let substeps = per_step as usize;
    let dt = opts.dt_record / substeps as f64;
    let total_substeps = (steps * substeps) as f64;
    let local_eps = opts.tolerance / total_substeps;
    let (degree, tail) = taylor_degree(dt * norm, local_eps).ok_or(Error::ToleranceNotMet {
        estimate: f64::INFINITY,
        tolerance: opts.tolerance,
    })?;
    let phase = Complex64::from_polar(1.0, -shift * dt);
    let minus_i_dt = Complex64::new(0.0, -dt);

    let zero = Complex64::new(0.0, 0.0);
    let mut psi = psi0.to_vec();
    let mut term = vec![zero; h.dim()];
    let mut next = vec![zero; h.dim()];
    let mut estimate = 0.0;
    let scale = norm_sqr(psi0).sqrt();

    for k in 1..=steps {
        for _ in 0..substeps {
            // psi <- exp(-i (H - shift) dt) psi
            term.copy_from_slice(&psi);
            for j in 1..=degree {
                h.matrix().mul_vec_into(&term, &mut next);
                let scale = minus_i_dt / j as f64;
                for (t, n) in term.iter_mut().zip(&next) {
                    *t = (n - shift * *t) * scale;
                }
                for (p, t) in psi.iter_mut().zip(&term) {
                    *p += t;
                }
            }
            for p in psi.iter_mut() {
                *p *= phase;
            }
            estimate += tail * scale;
        }
        let time = k as f64 * opts.dt_record;
        if psi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { step: k, time });
        }
        recorder.record(k, time, &psi);
        observer(k, time, &psi);
    }
    if estimate > opts.tolerance * scale {
        return Err(Error::ToleranceNotMet { estimate, tolerance: opts.tolerance });
    }
    Ok(recorder.finish(estimate))
}

#[cfg(test)]
mod tests;
