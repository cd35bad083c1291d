//! Physical parameters, disorder discretization and basis bookkeeping.
//!
//! Everything here is in atomic units. Femtoseconds only enter through
//! [`time_convert`].

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Atomic units of time per femtosecond.
pub const AU_PER_FS: f64 = 41.341373335;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeUnit {
    Fs,
    Au,
}

impl FromStr for TimeUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fs" => Ok(TimeUnit::Fs),
            "au" => Ok(TimeUnit::Au),
            other => Err(Error::UnknownUnit(other.to_string())),
        }
    }
}

impl fmt::Display for TimeUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimeUnit::Fs => "fs",
            TimeUnit::Au => "au",
        })
    }
}

/// Converts a non-negative time to atomic units.
pub fn time_convert(value: f64, unit: TimeUnit) -> Result<f64> {
    if !(value >= 0.0) || !value.is_finite() {
        return Err(Error::InvalidParameter {
            name: "time",
            reason: format!("must be finite and non-negative, got {value}"),
        });
    }
    Ok(match unit {
        TimeUnit::Fs => value * AU_PER_FS,
        TimeUnit::Au => value,
    })
}

/// Parameters of the cavity, the molecular surfaces and the exciton disorder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    /// Mean exciton frequency.
    pub omega0: f64,
    /// Vibrational frequency, shared by all surfaces.
    pub omega_nu: f64,
    /// Huang-Rhys displacement of the reactant surface `e1`.
    pub s1: f64,
    /// Huang-Rhys displacement of the product surface `e2`.
    pub s2: f64,
    /// Diabatic coupling between `e1` and `e2`.
    pub v12: f64,
    /// Rigid offset of the `e2` surface relative to `e1`.
    pub delta2: f64,
    pub omega_c: f64,
    /// Cavity decay rate.
    pub kappa: f64,
    /// Collective light-matter coupling `g * sqrt(N)`.
    pub coupling: f64,
    /// Standard deviation of the Gaussian exciton-frequency distribution.
    pub sigma: f64,
}

impl ModelSpec {
    /// Parameters of the broadband-excitation study: resonant with the
    /// 0 -> 1 vibronic transition, no disorder, collective coupling 0.03 au.
    pub fn reference() -> Self {
        ModelSpec {
            omega0: 0.10,
            omega_nu: 0.01,
            s1: -1.0,
            s2: -4.0,
            v12: 0.0025,
            delta2: 0.0,
            omega_c: 0.11,
            kappa: 0.006,
            coupling: 0.03,
            sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("omega0", self.omega0),
            ("omega_nu", self.omega_nu),
            ("s1", self.s1),
            ("s2", self.s2),
            ("v12", self.v12),
            ("delta2", self.delta2),
            ("omega_c", self.omega_c),
            ("kappa", self.kappa),
            ("coupling", self.coupling),
            ("sigma", self.sigma),
        ];
        for (name, value) in finite {
            if !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite, got {value}"),
                });
            }
        }
        let positive = [
            ("omega0", self.omega0),
            ("omega_nu", self.omega_nu),
            ("omega_c", self.omega_c),
        ];
        for (name, value) in positive {
            if value <= 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be > 0, got {value}"),
                });
            }
        }
        let non_negative = [
            ("kappa", self.kappa),
            ("coupling", self.coupling),
            ("sigma", self.sigma),
            ("v12", self.v12),
        ];
        for (name, value) in non_negative {
            if value < 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be >= 0, got {value}"),
                });
            }
        }
        Ok(())
    }
}

/// One disorder bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    /// Fraction of molecules in the bin.
    pub weight: f64,
    /// Exciton frequency assigned to the bin.
    pub omega0: f64,
    pub edge_lo: f64,
    pub edge_hi: f64,
}

/// A discretized exciton-frequency distribution, ordered by frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSet {
    bins: Vec<Bin>,
}

impl BinSet {
    /// A single bin at `omega0` carrying all the weight.
    pub fn single(omega0: f64) -> Self {
        BinSet {
            bins: vec![Bin {
                weight: 1.0,
                omega0,
                edge_lo: omega0,
                edge_hi: omega0,
            }],
        }
    }

    /// Builds a bin set from explicit weights and frequencies, e.g. for a
    /// non-Gaussian distribution. Weights are renormalized to unit sum and
    /// edges are placed halfway between neighbouring frequencies.
    pub fn from_custom(weights: &[f64], frequencies: &[f64]) -> Result<Self> {
        if weights.is_empty() || weights.len() != frequencies.len() {
            return Err(Error::InvalidBins(format!(
                "{} weights vs {} frequencies",
                weights.len(),
                frequencies.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidBins("weights must be positive".into()));
        }
        if frequencies.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidBins("frequencies must be positive".into()));
        }
        if frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidBins(
                "frequencies must be strictly increasing".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if frequencies.len() == 1 {
            return Ok(BinSet::single(frequencies[0]));
        }
        let n = frequencies.len();
        let bins = (0..n)
            .map(|i| {
                let lo = if i == 0 {
                    frequencies[0] - 0.5 * (frequencies[1] - frequencies[0])
                } else {
                    0.5 * (frequencies[i - 1] + frequencies[i])
                };
                let hi = if i == n - 1 {
                    frequencies[n - 1] + 0.5 * (frequencies[n - 1] - frequencies[n - 2])
                } else {
                    0.5 * (frequencies[i] + frequencies[i + 1])
                };
                Bin {
                    weight: weights[i] / total,
                    omega0: frequencies[i],
                    edge_lo: lo,
                    edge_hi: hi,
                }
            })
            .collect();
        Ok(BinSet { bins })
    }

    /// Builds a bin set from already-validated bins. Used by the oracle to
    /// describe the occupation of a finite ensemble.
    pub(crate) fn from_bins(bins: Vec<Bin>) -> Self {
        BinSet { bins }
    }

    pub fn bins(&self) -> &[Bin] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.bins.iter().map(|b| b.weight)
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        self.bins.iter().map(|b| b.omega0)
    }

    /// Returns a copy with every bin frequency shifted by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        BinSet {
            bins: self
                .bins
                .iter()
                .map(|b| Bin {
                    omega0: b.omega0 + delta,
                    edge_lo: b.edge_lo + delta,
                    edge_hi: b.edge_hi + delta,
                    ..*b
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins.is_empty() {
            return Err(Error::InvalidBins("no bins".into()));
        }
        let total: f64 = self.weights().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidBins(format!("weights sum to {total}")));
        }
        if self.bins.iter().any(|b| !(b.weight > 0.0) || !b.omega0.is_finite()) {
            return Err(Error::InvalidBins(
                "weights must be positive and frequencies finite".into(),
            ));
        }
        if self.bins.windows(2).any(|w| w[1].omega0 <= w[0].omega0) {
            return Err(Error::InvalidBins("frequencies must increase".into()));
        }
        Ok(())
    }
}

/// Discretizes the Gaussian exciton distribution of `spec` into `n_bins`
/// equal-width bins over `omega0 +/- 3 sigma`.
///
/// Bin weights are the Gaussian mass inside each bin, renormalized so that
/// they sum to one after truncation of the tails. Each bin frequency is the
/// conditional mean of the distribution inside the bin.
pub fn discretize_disorder(spec: &ModelSpec, n_bins: usize) -> Result<BinSet> {
    if n_bins == 0 {
        return Err(Error::InvalidParameter {
            name: "n_bins",
            reason: "must be >= 1".into(),
        });
    }
    if !(spec.sigma >= 0.0) || !spec.sigma.is_finite() {
        return Err(Error::InvalidParameter {
            name: "sigma",
            reason: format!("must be finite and >= 0, got {}", spec.sigma),
        });
    }
    if spec.sigma == 0.0 {
        if n_bins > 1 {
            return Err(Error::DegenerateDisorder { n_bins });
        }
        return Ok(BinSet::single(spec.omega0));
    }

    // Work with the standard normal on [-3, 3]; map back at the end.
    let density = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    let width = 6.0 / n_bins as f64;
    let raw: Vec<(f64, f64, f64, f64)> = (0..n_bins)
        .map(|i| {
            let lo = -3.0 + i as f64 * width;
            let hi = if i + 1 == n_bins { 3.0 } else { -3.0 + (i + 1) as f64 * width };
            let mass = quadrature::integrate(density, lo, hi, 1e-12);
            let moment = quadrature::integrate(|x| x * density(x), lo, hi, 1e-12);
            (mass, moment / mass, lo, hi)
        })
        .collect();
    let total: f64 = raw.iter().map(|r| r.0).sum();
    let bins = raw
        .into_iter()
        .map(|(mass, mean, lo, hi)| Bin {
            weight: mass / total,
            omega0: spec.omega0 + spec.sigma * mean,
            edge_lo: spec.omega0 + spec.sigma * lo,
            edge_hi: spec.omega0 + spec.sigma * hi,
        })
        .collect();
    Ok(BinSet { bins })
}

/// Number of bins needed to resolve dynamics up to `t_final`: the bin width
/// must not exceed the spectral resolution `2 pi / t_final`.
pub fn bin_count_rule(sigma: f64, t_final: f64) -> usize {
    let n = (6.0 * sigma * t_final / (2.0 * PI)).ceil();
    if n.is_finite() && n >= 1.0 {
        n as usize
    } else {
        1
    }
}

/// Total Gaussian mass kept by the 3-sigma truncation, `erf(3 / sqrt 2)`.
pub fn truncated_mass() -> f64 {
    let density = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    quadrature::integrate(density, -3.0, 3.0, 1e-14)
}

/// A basis state of the effective single-coordinate Hilbert space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisState {
    /// One photon, molecules in the Franck-Condon state.
    Photon,
    E1 { bin: usize, vib: usize },
    E2 { bin: usize, vib: usize },
}

/// Flat indexing of the effective Hilbert space: photon first, then all
/// `e1` states and all `e2` states, each bin-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Basis {
    pub n_bins: usize,
    pub n_vib: usize,
}

impl Basis {
    pub fn new(n_bins: usize, n_vib: usize) -> Self {
        Basis { n_bins, n_vib }
    }

    pub fn dim(&self) -> usize {
        1 + 2 * self.n_bins * self.n_vib
    }

    pub fn index(&self, state: BasisState) -> usize {
        let block = self.n_bins * self.n_vib;
        match state {
            BasisState::Photon => 0,
            BasisState::E1 { bin, vib } => 1 + bin * self.n_vib + vib,
            BasisState::E2 { bin, vib } => 1 + block + bin * self.n_vib + vib,
        }
    }

    pub fn state(&self, flat: usize) -> Option<BasisState> {
        if flat == 0 {
            return Some(BasisState::Photon);
        }
        if flat >= self.dim() {
            return None;
        }
        let k = flat - 1;
        let block = self.n_bins * self.n_vib;
        let (k, e2) = if k < block { (k, false) } else { (k - block, true) };
        let (bin, vib) = (k / self.n_vib, k % self.n_vib);
        Some(if e2 {
            BasisState::E2 { bin, vib }
        } else {
            BasisState::E1 { bin, vib }
        })
    }

    /// Flat range of the `e1` vibrational levels of `bin`.
    pub fn e1_range(&self, bin: usize) -> std::ops::Range<usize> {
        let start = self.index(BasisState::E1 { bin, vib: 0 });
        start..start + self.n_vib
    }

    pub fn e2_range(&self, bin: usize) -> std::ops::Range<usize> {
        let start = self.index(BasisState::E2 { bin, vib: 0 });
        start..start + self.n_vib
    }
}

mod quadrature {
    use std::sync::OnceLock;

    const ORDER: usize = 10;

    /// Gauss-Legendre nodes and weights on [-1, 1] via Newton iteration on
    /// the Legendre recurrence.
    fn rule() -> &'static [(f64, f64)] {
        static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
        RULE.get_or_init(|| {
            let n = ORDER;
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
                let mut dp = 0.0;
                for _ in 0..100 {
                    let (mut p0, mut p1) = (1.0, x);
                    for k in 2..=n {
                        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                    let dx = p1 / dp;
                    x -= dx;
                    if dx.abs() < 1e-16 {
                        break;
                    }
                }
                out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
            }
            out
        })
    }

    fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        half * rule().iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>()
    }

    /// Adaptive Gauss-Legendre quadrature by interval bisection.
    pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
        let whole = panel(&f, a, b);
        refine(&f, a, b, whole, rel_tol, 0)
    }

    fn refine<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (left, right) = (panel(f, a, m), panel(f, m, b));
        let split = left + right;
        if depth >= 40 || (split - whole).abs() <= tol * split.abs().max(f64::MIN_POSITIVE) {
            return split;
        }
        refine(f, a, m, left, tol, depth + 1) + refine(f, m, b, right, tol, depth + 1)
    }
}
