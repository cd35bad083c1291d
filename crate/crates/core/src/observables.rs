//! Optical and chemical observables computed from trajectories.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hamiltonian::{displaced_number_operator, EffectiveHamiltonian, Sector};
use crate::model::ModelSpec;
use crate::propagator::Trajectory;

/// Spacing of the default frequency grid, au.
pub const DEFAULT_OMEGA_STEP: f64 = 1e-4;

/// Linear absorption on a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub omega: Vec<f64>,
    pub absorption: Vec<f64>,
}

/// Uniform grid covering both polariton branches:
/// `[omega0 - 3 sigma - 3 G, omega0 + omega_nu + 3 sigma + 3 G]`.
pub fn default_omega_grid(spec: &ModelSpec) -> Vec<f64> {
    let pad = 3.0 * spec.sigma + 3.0 * spec.coupling;
    omega_grid(spec.omega0 - pad, spec.omega0 + spec.omega_nu + pad, DEFAULT_OMEGA_STEP)
}

/// Points `lo, lo + step, ...` up to and including `hi` (within rounding).
pub fn omega_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| lo + k as f64 * step).collect()
}

/// `A(w) = kappa Re C(w) - kappa^2 |C(w)|^2 / 2` with
/// `C(w) = int_0^T dt e^{i w t} <psi(0)|psi(t)>` by the trapezoidal rule on
/// the recorded grid. No window is applied.
pub fn absorption(traj: &Trajectory, kappa: f64, omega: &[f64]) -> Result<Spectrum> {
    if !traj.photonic_start {
        return Err(Error::NotPhotonic);
    }
    if omega.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("frequency grid must increase".into()));
    }
    let values = omega
        .iter()
        .map(|&w| {
            let c = fourier_trapezoid(traj, w);
            kappa * c.re - 0.5 * kappa * kappa * c.norm_sqr()
        })
        .collect();
    Ok(Spectrum { omega: omega.to_vec(), absorption: values })
}

/// Half-sided Fourier transform of the autocorrelation at `omega`.
pub fn fourier_trapezoid(traj: &Trajectory, omega: f64) -> Complex64 {
    let n = traj.autocorrelation.len();
    if n < 2 {
        return Complex64::new(0.0, 0.0);
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, (c, t)) in traj.autocorrelation.iter().zip(&traj.times).enumerate() {
        let weight = if k == 0 || k + 1 == n { 0.5 } else { 1.0 };
        acc += weight * c * Complex64::from_polar(1.0, omega * t);
    }
    acc * traj.dt_record
}

/// Indices of strict local maxima.
pub fn local_maxima(spectrum: &Spectrum) -> Vec<usize> {
    let a = &spectrum.absorption;
    (1..a.len().saturating_sub(1)).filter(|&k| a[k] > a[k - 1] && a[k] > a[k + 1]).collect()
}

/// The polariton peaks: the strongest local maximum below `center` and the
/// strongest above it. Ties go to the peak farther from `center`.
fn main_peaks(spectrum: &Spectrum, center: f64) -> Result<(usize, usize)> {
    let maxima = local_maxima(spectrum);
    let a = &spectrum.absorption;
    let w = &spectrum.omega;
    let strongest = |below: bool| {
        maxima
            .iter()
            .copied()
            .filter(|&k| (w[k] < center) == below && w[k] != center)
            .reduce(|best, k| {
                let wider = (w[k] - center).abs() > (w[best] - center).abs();
                if a[k] > a[best] || (a[k] == a[best] && wider) {
                    k
                } else {
                    best
                }
            })
    };
    match (strongest(true), strongest(false)) {
        (Some(lo), Some(hi)) => Ok((lo, hi)),
        _ => Err(Error::NoSplitting(maxima.len())),
    }
}

/// Distance between the polariton peaks on either side of `center`,
/// normally the cavity frequency.
pub fn rabi_splitting(spectrum: &Spectrum, center: f64) -> Result<f64> {
    let (lo, hi) = main_peaks(spectrum, center)?;
    Ok(spectrum.omega[hi] - spectrum.omega[lo])
}

/// Largest local maximum other than the two polariton peaks, or 0 when the
/// spectrum has no further maxima.
pub fn vibronic_side_peak(spectrum: &Spectrum, center: f64) -> Result<f64> {
    let (lo, hi) = main_peaks(spectrum, center)?;
    Ok(local_maxima(spectrum)
        .into_iter()
        .filter(|&k| k != lo && k != hi)
        .map(|k| spectrum.absorption[k])
        .fold(0.0, f64::max))
}

/// Electronic-sector populations of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorPopulations {
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub photon: f64,
}

impl SectorPopulations {
    pub fn from_state(h: &EffectiveHamiltonian, psi: &[Complex64]) -> Self {
        let mut out = SectorPopulations {
            e1: vec![0.0; h.n_bins()],
            e2: vec![0.0; h.n_bins()],
            photon: 0.0,
        };
        for (z, sector) in psi.iter().zip(h.sectors()) {
            let p = z.norm_sqr();
            match *sector {
                Sector::Photon => out.photon += p,
                Sector::E1(i) => out.e1[i] += p,
                Sector::E2(i) => out.e2[i] += p,
            }
        }
        out
    }

    pub fn total_e1(&self) -> f64 {
        self.e1.iter().sum()
    }

    pub fn total_e2(&self) -> f64 {
        self.e2.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.photon + self.total_e1() + self.total_e2()
    }
}

/// Population time series. Populations are not divided by the norm, so
/// cavity leakage competes with the reaction; [`Self::normalized`] divides
/// by `<psi|psi>`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopulationRecord {
    pub times: Vec<f64>,
    pub samples: Vec<SectorPopulations>,
    /// `<psi(t)|psi(t)>` as recorded by the propagator.
    pub norms: Vec<f64>,
}

impl PopulationRecord {
    pub fn push(&mut self, time: f64, populations: SectorPopulations, norm: f64) {
        self.times.push(time);
        self.samples.push(populations);
        self.norms.push(norm);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Cavity leakage `Gamma(t) = 1 - <psi(t)|psi(t)>`.
    pub fn leakage(&self, k: usize) -> f64 {
        1.0 - self.norms[k]
    }

    pub fn normalized(&self, k: usize) -> SectorPopulations {
        let n = self.norms[k];
        let s = &self.samples[k];
        SectorPopulations {
            e1: s.e1.iter().map(|p| p / n).collect(),
            e2: s.e2.iter().map(|p| p / n).collect(),
            photon: s.photon / n,
        }
    }

    pub fn last(&self) -> Option<&SectorPopulations> {
        self.samples.last()
    }
}

/// Per-bin and total populations at every snapshot of `traj`.
pub fn populations(traj: &Trajectory, h: &EffectiveHamiltonian) -> Result<PopulationRecord> {
    if traj.snapshots.is_empty() {
        return Err(Error::MissingSnapshots);
    }
    let mut record = PopulationRecord::default();
    for snap in &traj.snapshots {
        if snap.state.len() != h.dim() {
            return Err(Error::DimensionMismatch { expected: h.dim(), found: snap.state.len() });
        }
        record.push(snap.time, SectorPopulations::from_state(h, &snap.state), traj.norms[snap.index]);
    }
    Ok(record)
}

/// Vibrational energy of the `e1` wavepacket of `bin`, measured from the
/// `e1` surface minimum and conditioned on the bin population:
/// `omega_nu <psi_e1,i|N(s1)|psi_e1,i> / P_e1,i`.
pub fn vibrational_energy_per_bin(
    spec: &ModelSpec,
    h: &EffectiveHamiltonian,
    psi: &[Complex64],
    bin: usize,
) -> Result<f64> {
    let basis = h.basis().ok_or_else(|| {
        Error::Mismatch("vibrational energies need a single-coordinate Hamiltonian".into())
    })?;
    if bin >= basis.n_bins {
        return Err(Error::InvalidParameter { name: "bin", reason: format!("{bin} out of range") });
    }
    let packet = &psi[basis.e1_range(bin)];
    let population: f64 = packet.iter().map(|z| z.norm_sqr()).sum();
    if population <= 1e-14 {
        return Err(Error::ZeroPopulation { bin });
    }
    let op = displaced_number_operator(spec.s1, basis.n_vib);
    Ok(spec.omega_nu * op.expectation(packet) / population)
}

/// Final-time product populations.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionYield {
    pub per_bin: Vec<f64>,
    pub total: f64,
    pub per_bin_normalized: Vec<f64>,
    pub total_normalized: f64,
    /// `P_e2,i / (P_e1,i + P_e2,i)`, the reactivity of each bin.
    pub reactivity: Vec<f64>,
    pub leakage: f64,
}

pub fn reaction_yield(record: &PopulationRecord) -> Result<ReactionYield> {
    let k = record.len().checked_sub(1).ok_or(Error::MissingSnapshots)?;
    let last = &record.samples[k];
    let normalized = record.normalized(k);
    let reactivity = last
        .e1
        .iter()
        .zip(&last.e2)
        .map(|(a, b)| if a + b > 0.0 { b / (a + b) } else { 0.0 })
        .collect();
    Ok(ReactionYield {
        per_bin: last.e2.clone(),
        total: last.total_e2(),
        per_bin_normalized: normalized.e2.clone(),
        total_normalized: normalized.total_e2(),
        reactivity,
        leakage: record.leakage(k),
    })
}
