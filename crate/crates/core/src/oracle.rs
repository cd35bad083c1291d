//! Explicit finite-N ensembles used to validate the large-N mapping.
//!
//! Every molecule keeps its own vibrational coordinate, ground-state
//! molecules included, and the cavity couples to each molecule with the
//! single-molecule strength `g = G / sqrt(N)` and no Franck-Condon projector.
//! The resulting Hamiltonian is propagated by the same integrator as the
//! effective model, so any difference comes from the Hamiltonian alone.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hamiltonian::{build_effective_hamiltonian, displaced_number_operator, EffectiveHamiltonian, Sector};
use crate::model::{Bin, BinSet, ModelSpec};
use crate::observables::{populations, PopulationRecord};
use crate::propagator::{propagate, InitialState, PropagationOptions, Trajectory};
use crate::sparse::TripletBuilder;

pub const MAX_MOLECULES: usize = 4;
/// Default dimension cap, enough for four molecules with six levels each.
pub const DEFAULT_ORACLE_CAP: usize = 12_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Molecule {
    pub bin: usize,
    pub omega0: f64,
}

/// A finite ensemble whose molecules sit at the frequencies of a bin set.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitEnsemble {
    pub spec: ModelSpec,
    pub bins: BinSet,
    pub molecules: Vec<Molecule>,
    pub n_vib: usize,
    pub max_dimension: usize,
}

impl ExplicitEnsemble {
    /// Distributes `n_molecules` over `bins` by largest remainder of
    /// `N P_i`, ties going to the lower bin. Molecules are ordered by bin.
    pub fn from_bins(spec: &ModelSpec, bins: &BinSet, n_molecules: usize, n_vib: usize) -> Result<Self> {
        bins.validate()?;
        if n_molecules == 0 {
            return Err(Error::InvalidParameter { name: "n_molecules", reason: "must be positive".into() });
        }
        let quotas: Vec<f64> = bins.weights().map(|w| w * n_molecules as f64).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        // Remainders are compared at 1e-12 so that rounding noise in the
        // weights cannot break a tie.
        let remainder = |i: usize| ((quotas[i] - quotas[i].floor()) * 1e12).round() as i64;
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by_key(|&i| (-remainder(i), i));
        let missing = n_molecules - counts.iter().sum::<usize>();
        for &i in order.iter().take(missing) {
            counts[i] += 1;
        }
        let assignment: Vec<usize> = counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c)).collect();
        Self::with_assignment(spec, bins, &assignment, n_vib)
    }

    /// Places molecule `j` in bin `assignment[j]`.
    pub fn with_assignment(spec: &ModelSpec, bins: &BinSet, assignment: &[usize], n_vib: usize) -> Result<Self> {
        spec.validate()?;
        bins.validate()?;
        if assignment.is_empty() || assignment.len() > MAX_MOLECULES {
            return Err(Error::InvalidParameter {
                name: "n_molecules",
                reason: format!("must lie in 1..={MAX_MOLECULES}, got {}", assignment.len()),
            });
        }
        if n_vib < 2 {
            return Err(Error::InvalidParameter { name: "n_vib", reason: format!("must be >= 2, got {n_vib}") });
        }
        let molecules = assignment
            .iter()
            .map(|&bin| {
                let b = bins.bins().get(bin).ok_or_else(|| Error::InvalidBins(format!("no bin {bin}")))?;
                Ok(Molecule { bin, omega0: b.omega0 })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ExplicitEnsemble { spec: *spec, bins: bins.clone(), molecules, n_vib, max_dimension: DEFAULT_ORACLE_CAP })
    }

    pub fn with_max_dimension(self, max_dimension: usize) -> Self {
        ExplicitEnsemble { max_dimension, ..self }
    }

    pub fn n_molecules(&self) -> usize {
        self.molecules.len()
    }

    pub fn single_coupling(&self) -> f64 {
        self.spec.coupling / (self.n_molecules() as f64).sqrt()
    }

    /// `(1 + 2N) n_vib^N`.
    pub fn dim(&self) -> usize {
        (1 + 2 * self.n_molecules()) * self.n_vib.pow(self.n_molecules() as u32)
    }

    /// Number of molecules in each bin.
    pub fn occupation(&self) -> Vec<usize> {
        let mut counts = vec![0; self.bins.len()];
        for m in &self.molecules {
            counts[m.bin] += 1;
        }
        counts
    }

    /// The effective-model bins describing this ensemble: occupied bins only,
    /// weighted by `N_i / N`, with the index of each in [`Self::bins`].
    pub fn reference_bins(&self) -> (BinSet, Vec<usize>) {
        let n = self.n_molecules() as f64;
        let (bins, map) = self
            .occupation()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (Bin { weight: c as f64 / n, ..self.bins.bins()[i] }, i))
            .unzip();
        (BinSet::from_bins(bins), map)
    }
}

/// Assembles the first-excitation-manifold Hamiltonian of `ensemble`.
///
/// Layout: the photon block, then `e1` of each molecule, then `e2` of each
/// molecule; each block spans all `n_vib^N` vibrational configurations with
/// molecule 0 slowest. Sector labels carry the bin of the excited molecule.
pub fn build_explicit_hamiltonian(ensemble: &ExplicitEnsemble) -> Result<EffectiveHamiltonian> {
    let dim = ensemble.dim();
    if dim > ensemble.max_dimension {
        return Err(Error::DimensionTooLarge { dim, cap: ensemble.max_dimension });
    }
    let spec = &ensemble.spec;
    let (n, n_vib) = (ensemble.n_molecules(), ensemble.n_vib);
    let block = n_vib.pow(n as u32);
    let stride = |j: usize| n_vib.pow((n - 1 - j) as u32);
    let level = |v: usize, j: usize| (v / stride(j)) % n_vib;
    let quanta = |v: usize| (0..n).map(|j| level(v, j)).sum::<usize>() as f64;
    let e1_start = |j: usize| (1 + j) * block;
    let e2_start = |j: usize| (1 + n + j) * block;

    let n1 = displaced_number_operator(spec.s1, n_vib);
    let n2 = displaced_number_operator(spec.s2, n_vib);
    let g = ensemble.single_coupling();
    let mut b = TripletBuilder::new(dim);
    for v in 0..block {
        b.push(v, v, Complex64::new(spec.omega_c + spec.omega_nu * quanta(v), -0.5 * spec.kappa));
    }
    for (j, m) in ensemble.molecules.iter().enumerate() {
        let surfaces = [(e1_start(j), &n1, m.omega0), (e2_start(j), &n2, m.omega0 + spec.delta2)];
        for (start, op, offset) in surfaces {
            for v in 0..block {
                let l = level(v, j);
                let spectators = quanta(v) - l as f64;
                b.push_real(start + v, start + v, offset + spec.omega_nu * (op.diag()[l] + spectators));
                if l + 1 < n_vib {
                    b.push_hermitian_pair(start + v, start + v + stride(j), spec.omega_nu * op.off_diag()[l]);
                }
            }
        }
        for v in 0..block {
            b.push_hermitian_pair(v, e1_start(j) + v, g);
            b.push_hermitian_pair(e1_start(j) + v, e2_start(j) + v, spec.v12);
        }
    }

    let mut sectors = vec![Sector::Photon; dim];
    for (j, m) in ensemble.molecules.iter().enumerate() {
        sectors[e1_start(j)..e1_start(j) + block].fill(Sector::E1(m.bin));
        sectors[e2_start(j)..e2_start(j) + block].fill(Sector::E2(m.bin));
    }
    let occupation = ensemble.occupation();
    let mut bin_fc = vec![Vec::new(); ensemble.bins.len()];
    for (j, m) in ensemble.molecules.iter().enumerate() {
        bin_fc[m.bin].push((e1_start(j), 1.0 / (occupation[m.bin] as f64).sqrt()));
    }
    let weights = occupation.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(EffectiveHamiltonian::from_parts(b.build(), sectors, spec.kappa, None, 0, weights, bin_fc))
}

/// Absolute deviation of one observable between two runs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Deviation {
    pub max_over_time: f64,
    pub final_time: f64,
}

impl Deviation {
    fn push(&mut self, x: f64) {
        self.max_over_time = self.max_over_time.max(x);
        self.final_time = x;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    /// Ensemble size, when one side is an explicit ensemble.
    pub n_molecules: Option<usize>,
    pub photon: Deviation,
    pub e1: Vec<Deviation>,
    pub e2: Vec<Deviation>,
    pub total_e1: Deviation,
    pub total_e2: Deviation,
    pub autocorrelation: Deviation,
}

impl DeviationReport {
    /// Largest population deviation of any kind over the whole run.
    pub fn max_population(&self) -> f64 {
        self.e1
            .iter()
            .chain(&self.e2)
            .chain([&self.photon, &self.total_e1, &self.total_e2])
            .map(|d| d.max_over_time)
            .fold(0.0, f64::max)
    }
}

/// One propagated run: trajectory and populations.
struct Run {
    traj: Trajectory,
    record: PopulationRecord,
}

fn run(h: &EffectiveHamiltonian, initial: &InitialState, opts: &PropagationOptions) -> Result<Run> {
    let opts = opts.with_snapshot_stride(Some(1));
    let traj = propagate(h, &initial.vector(h)?, &opts)?;
    let record = populations(&traj, h)?;
    Ok(Run { traj, record })
}

/// Compares two runs; bin `k` of `b` corresponds to bin `map_b[k]` of `a`.
fn compare(a: &Run, b: &Run, map_b: &[usize]) -> Result<DeviationReport> {
    if a.traj.times.len() != b.traj.times.len()
        || a.traj.times.iter().zip(&b.traj.times).any(|(x, y)| (x - y).abs() > 1e-9 * x.abs().max(1.0))
    {
        return Err(Error::Mismatch("time grids differ".into()));
    }
    let n_bins = a.record.samples[0].e1.len();
    let mut e1 = vec![Deviation::default(); n_bins];
    let mut e2 = vec![Deviation::default(); n_bins];
    let (mut photon, mut total_e1, mut total_e2) = Default::default();
    for (sa, sb) in a.record.samples.iter().zip(&b.record.samples) {
        for (k, &i) in map_b.iter().enumerate() {
            e1[i].push((sa.e1[i] - sb.e1[k]).abs());
            e2[i].push((sa.e2[i] - sb.e2[k]).abs());
        }
        for i in (0..n_bins).filter(|i| !map_b.contains(i)) {
            e1[i].push(sa.e1[i]);
            e2[i].push(sa.e2[i]);
        }
        Deviation::push(&mut photon, (sa.photon - sb.photon).abs());
        Deviation::push(&mut total_e1, (sa.total_e1() - sb.total_e1()).abs());
        Deviation::push(&mut total_e2, (sa.total_e2() - sb.total_e2()).abs());
    }
    let mut autocorrelation = Deviation::default();
    for (x, y) in a.traj.autocorrelation.iter().zip(&b.traj.autocorrelation) {
        autocorrelation.push((x - y).norm());
    }
    Ok(DeviationReport { n_molecules: None, photon, e1, e2, total_e1, total_e2, autocorrelation })
}

/// Propagates `initial` under two Hamiltonians with the same bin structure
/// and reports their deviations.
pub fn compare_engines(
    a: &EffectiveHamiltonian,
    b: &EffectiveHamiltonian,
    initial: &InitialState,
    opts: &PropagationOptions,
) -> Result<DeviationReport> {
    if a.n_bins() != b.n_bins() {
        return Err(Error::Mismatch(format!("{} bins vs {} bins", a.n_bins(), b.n_bins())));
    }
    let map: Vec<usize> = (0..a.n_bins()).collect();
    compare(&run(a, initial, opts)?, &run(b, initial, opts)?, &map)
}

/// Runs `ensemble` explicitly and through the effective model built from its
/// occupied bins, and reports the deviations per bin of the ensemble.
pub fn compare_to_cute(
    ensemble: &ExplicitEnsemble,
    initial: &InitialState,
    opts: &PropagationOptions,
) -> Result<DeviationReport> {
    let explicit = build_explicit_hamiltonian(ensemble)?;
    let (ref_bins, map) = ensemble.reference_bins();
    let reference = build_effective_hamiltonian(&ensemble.spec, &ref_bins, ensemble.n_vib)?;
    let ref_initial = match initial {
        InitialState::Custom { photon, bins } => {
            if bins.len() != ensemble.bins.len() {
                return Err(Error::DimensionMismatch { expected: ensemble.bins.len(), found: bins.len() });
            }
            if bins.iter().enumerate().any(|(i, c)| !map.contains(&i) && c.norm() > 0.0) {
                return Err(Error::Mismatch("amplitude on an empty bin".into()));
            }
            InitialState::Custom { photon: *photon, bins: map.iter().map(|&i| bins[i]).collect() }
        }
        other => other.clone(),
    };
    let mut report = compare(&run(&explicit, initial, opts)?, &run(&reference, &ref_initial, opts)?, &map)?;
    report.n_molecules = Some(ensemble.n_molecules());
    Ok(report)
}
