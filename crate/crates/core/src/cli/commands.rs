use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::hamiltonian::{build_effective_hamiltonian, build_multibin_hamiltonian};
use crate::model::{BinSet, ModelSpec};
use crate::observables::{
    absorption, default_omega_grid, omega_grid, rabi_splitting, vibrational_energy_per_bin, vibronic_side_peak,
    PopulationRecord, SectorPopulations, Spectrum,
};
use crate::oracle::{compare_engines, compare_to_cute, DeviationReport, ExplicitEnsemble};
use crate::propagator::{propagate_observed, Trajectory};

use super::config::{InitialSelector, Point, RunConfig};
use super::output::{create_dir, header, num, write_csv, write_text};
use super::CliError;

/// `P_e1` below which the product/reactant ratio is not compared.
const RATIO_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Dynamics,
    Sweep,
    Converge,
    Oracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Dynamics => "dynamics",
            Command::Sweep => "sweep",
            Command::Converge => "converge",
            Command::Oracle => "oracle",
        }
    }
}

pub fn execute(command: Command, cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    match command {
        Command::Spectrum => run_spectrum(cfg, out),
        Command::Dynamics => run_dynamics(cfg, out),
        Command::Sweep => run_sweep(cfg, out),
        Command::Converge => run_converge(cfg, out),
        Command::Oracle => run_oracle(cfg, out),
    }
}

/// Writes the resolved configuration; running it again reproduces the run.
fn write_manifest(cfg: &RunConfig, command: Command, out: &Path) -> Result<(), CliError> {
    create_dir(out)?;
    let text = format!(
        "# dcute {}\n# command = {}\n\n{}",
        env!("CARGO_PKG_VERSION"),
        command.name(),
        cfg.to_text()
    );
    write_text(&out.join("manifest.conf"), &text)
}

fn point_dir(out: &Path, points: &[Point], point: &Point) -> PathBuf {
    if points.len() == 1 {
        out.to_path_buf()
    } else {
        out.join(format!("point_{:03}", point.index))
    }
}

fn point_columns(p: &Point, n_bins: usize) -> Vec<String> {
    vec![
        p.index.to_string(),
        num(p.model.sigma),
        num(p.model.coupling),
        num(p.model.kappa),
        num(p.model.delta2),
        p.initial.name().to_string(),
        n_bins.to_string(),
    ]
}

const POINT_HEADER: &[&str] = &["point", "sigma", "coupling", "kappa", "delta2", "initial_state", "n_bins"];

/// Everything one propagation produces.
struct PointRun {
    bins: BinSet,
    traj: Trajectory,
    record: PopulationRecord,
    /// Per snapshot time: `(time, per-bin (P_e1, E_vib))`.
    vib: Vec<(f64, Vec<(f64, f64)>)>,
}

fn simulate(cfg: &RunConfig, model: &ModelSpec, initial: InitialSelector, bins: BinSet) -> Result<PointRun, CliError> {
    let h = build_effective_hamiltonian(model, &bins, cfg.n_vib)?;
    let psi0 = cfg.initial_state(initial).vector(&h)?;
    let opts = cfg.options().with_snapshot_stride(None);
    let snapshot_steps: Vec<(usize, f64)> = cfg
        .snapshot_times
        .iter()
        .map(|&t| ((t / cfg.dt_record).round() as usize, t))
        .collect();
    let mut record = PopulationRecord::default();
    let mut vib = Vec::new();
    let traj = propagate_observed(&h, &psi0, &opts, |k, t, psi| {
        let pops = SectorPopulations::from_state(&h, psi);
        let norm = pops.norm();
        record.push(t, pops, norm);
        for &(step, requested) in &snapshot_steps {
            if step == k {
                let per_bin = (0..bins.len())
                    .map(|i| {
                        let p = record.samples[k].e1[i];
                        let e = vibrational_energy_per_bin(model, &h, psi, i).unwrap_or(f64::NAN);
                        (p, e)
                    })
                    .collect();
                vib.push((requested, per_bin));
            }
        }
    })?;
    if let Some(&(step, t)) = snapshot_steps.iter().find(|(s, _)| *s >= traj.times.len()) {
        return Err(CliError::Config(format!("snapshot time {t} au (step {step}) lies beyond t_final")));
    }
    Ok(PointRun { bins, traj, record, vib })
}

fn spectrum_for(cfg: &RunConfig, model: &ModelSpec, traj: &Trajectory) -> Result<Spectrum, CliError> {
    let grid = match cfg.omega_grid {
        Some((lo, hi, step)) => omega_grid(lo, hi, step),
        None => default_omega_grid(model),
    };
    Ok(absorption(traj, model.kappa, &grid)?)
}

fn require_photonic(cfg: &RunConfig, what: &str) -> Result<(), CliError> {
    if cfg.initial_states.iter().any(|s| *s != InitialSelector::Photonic) {
        return Err(CliError::Config(format!("{what} needs initial_state = photonic")));
    }
    Ok(())
}

fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<(), CliError> {
    write_csv(
        &dir.join("autocorr.csv"),
        &header(&["t_au", "ReC", "ImC"]),
        traj.times.iter().zip(&traj.autocorrelation).map(|(t, c)| vec![num(*t), num(c.re), num(c.im)]),
    )?;
    write_csv(
        &dir.join("norms.csv"),
        &header(&["t_au", "norm"]),
        traj.times.iter().zip(&traj.norms).map(|(t, n)| vec![num(*t), num(*n)]),
    )
}

/// Absorption spectra for every grid point.
pub fn run_spectrum(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    require_photonic(cfg, "spectrum")?;
    write_manifest(cfg, Command::Spectrum, out)?;
    let points = cfg.points();
    let rows = points
        .par_iter()
        .map(|p| {
            let bins = cfg.bins(&p.model)?;
            let n_bins = bins.len();
            let run = simulate(cfg, &p.model, p.initial, bins)?;
            let spectrum = spectrum_for(cfg, &p.model, &run.traj)?;
            let dir = point_dir(out, &points, p);
            create_dir(&dir)?;
            write_csv(
                &dir.join("spectrum.csv"),
                &header(&["omega_au", "A"]),
                spectrum.omega.iter().zip(&spectrum.absorption).map(|(w, a)| vec![num(*w), num(*a)]),
            )?;
            write_trajectory(&dir, &run.traj)?;
            let mut row = point_columns(p, n_bins);
            row.push(num(rabi_splitting(&spectrum, p.model.omega_c).unwrap_or(f64::NAN)));
            row.push(num(vibronic_side_peak(&spectrum, p.model.omega_c).unwrap_or(f64::NAN)));
            Ok(row)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut head = header(POINT_HEADER);
    head.extend(header(&["rabi_splitting", "side_peak"]));
    write_csv(&out.join("summary.csv"), &head, rows)
}

fn population_header(n_bins: usize) -> Vec<String> {
    let mut h = header(&[
        "t_au", "photon", "P_e1", "P_e2", "gamma", "photon_norm", "P_e1_norm", "P_e2_norm",
    ]);
    for i in 0..n_bins {
        h.extend([format!("P_e1_{i}"), format!("P_e2_{i}"), format!("P_e1_{i}_norm"), format!("P_e2_{i}_norm")]);
    }
    h
}

fn population_rows(record: &PopulationRecord) -> impl Iterator<Item = Vec<String>> + '_ {
    (0..record.len()).map(move |k| {
        let s = &record.samples[k];
        let n = record.normalized(k);
        let mut row = vec![
            num(record.times[k]),
            num(s.photon),
            num(s.total_e1()),
            num(s.total_e2()),
            num(record.leakage(k)),
            num(n.photon),
            num(n.total_e1()),
            num(n.total_e2()),
        ];
        for i in 0..s.e1.len() {
            row.extend([num(s.e1[i]), num(s.e2[i]), num(n.e1[i]), num(n.e2[i])]);
        }
        row
    })
}

/// Population dynamics, final per-bin yields and vibrational energies.
pub fn run_dynamics(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    write_manifest(cfg, Command::Dynamics, out)?;
    let points = cfg.points();
    let rows = points
        .par_iter()
        .map(|p| {
            let bins = cfg.bins(&p.model)?;
            let run = simulate(cfg, &p.model, p.initial, bins)?;
            let dir = point_dir(out, &points, p);
            create_dir(&dir)?;
            write_csv(&dir.join("populations.csv"), &population_header(run.bins.len()), population_rows(&run.record))?;
            write_trajectory(&dir, &run.traj)?;
            let last = run.record.last().expect("at least one sample");
            write_csv(
                &dir.join("bins.csv"),
                &header(&["bin", "weight", "omega0", "P_e1", "P_e2", "reactivity"]),
                run.bins.bins().iter().enumerate().map(|(i, b)| {
                    let (e1, e2) = (last.e1[i], last.e2[i]);
                    let reactivity = if e1 + e2 > 0.0 { e2 / (e1 + e2) } else { 0.0 };
                    vec![i.to_string(), num(b.weight), num(b.omega0), num(e1), num(e2), num(reactivity)]
                }),
            )?;
            if !run.vib.is_empty() {
                let rows = run.vib.iter().flat_map(|(t, per_bin)| {
                    per_bin.iter().zip(run.bins.bins()).enumerate().map(move |(i, ((p, e), b))| {
                        vec![num(*t), i.to_string(), num(b.omega0), num(*p), num(*e)]
                    })
                });
                write_csv(&dir.join("vib_energy.csv"), &header(&["t_au", "bin", "omega0", "P_e1", "E_vib"]), rows)?;
            }
            let k = run.record.len() - 1;
            let mut row = point_columns(p, run.bins.len());
            row.extend([
                num(last.total_e1()),
                num(last.total_e2()),
                num(run.record.normalized(k).total_e2()),
                num(run.record.leakage(k)),
            ]);
            Ok(row)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut head = header(POINT_HEADER);
    head.extend(header(&["P_e1", "P_e2", "P_e2_norm", "gamma"]));
    write_csv(&out.join("summary.csv"), &head, rows)
}

/// Final-time yields over the sweep grid, one row per point. Failed points
/// keep their row with an error status.
pub fn run_sweep(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    write_manifest(cfg, Command::Sweep, out)?;
    let mut results: Vec<(Point, usize, Result<[f64; 4], CliError>)> = cfg
        .points()
        .into_par_iter()
        .map(|p| {
            let n_bins = cfg.bin_count(&p.model);
            let result = cfg.bins(&p.model).map_err(CliError::from).and_then(|bins| {
                let run = simulate(cfg, &p.model, p.initial, bins)?;
                let k = run.record.len() - 1;
                let last = &run.record.samples[k];
                Ok([
                    last.total_e2(),
                    run.record.normalized(k).total_e2(),
                    run.record.leakage(k),
                    last.total_e1(),
                ])
            });
            (p, n_bins, result)
        })
        .collect();
    let key = |p: &Point| [p.model.sigma, p.model.coupling, p.model.kappa, p.model.delta2];
    results.sort_by(|(a, _, _), (b, _, _)| {
        key(a)
            .iter()
            .zip(key(b).iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
            .then(a.initial.cmp(&b.initial))
    });
    let failures = results.iter().filter(|r| r.2.is_err()).count();
    let rows = results.iter().map(|(p, n_bins, r)| {
        let mut row = point_columns(p, *n_bins)[1..].to_vec();
        match r {
            Ok(v) => {
                row.extend([num(v[0]), num(v[1]), num(v[2]), num(v[3])]);
                row.push("ok".into());
            }
            Err(e) => {
                row.extend(std::iter::repeat_n(num(f64::NAN), 4));
                row.push(e.to_string());
            }
        }
        row
    });
    let mut head = header(&POINT_HEADER[1..]);
    head.extend(header(&["P_e2", "P_e2_norm", "gamma", "P_e1", "status"]));
    write_csv(&out.join("sweep.csv"), &head, rows)?;
    if failures > 0 {
        return Err(CliError::Numerical(format!("{failures} sweep point(s) failed; see sweep.csv")));
    }
    Ok(())
}

/// Bin counts compared by the convergence study.
pub fn convergence_levels(rule: usize) -> Vec<usize> {
    let mut levels = vec![(rule / 4).max(1), (rule / 2).max(1), rule, 2 * rule];
    levels.dedup();
    levels
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn ratio_series(record: &PopulationRecord) -> Vec<f64> {
    record
        .samples
        .iter()
        .map(|s| if s.total_e1() > RATIO_FLOOR { s.total_e2() / s.total_e1() } else { f64::NAN })
        .collect()
}

/// Repeats the run at a quarter, half, one and two times the bin rule and
/// reports the changes between successive refinements.
pub fn run_converge(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let model = cfg.model;
    if model.sigma == 0.0 {
        return Err(CliError::Config("convergence in n_bins needs sigma > 0".into()));
    }
    if cfg.custom_bins.is_some() {
        return Err(CliError::Config("convergence in n_bins needs Gaussian disorder, not [bins]".into()));
    }
    let initial = cfg.initial_states[0];
    write_manifest(cfg, Command::Converge, out)?;
    let levels = convergence_levels(cfg.bin_count(&model));
    let runs = levels
        .par_iter()
        .map(|&n| {
            let run = simulate(cfg, &model, initial, cfg.bins_for(&model, n)?)?;
            let spectrum = if initial == InitialSelector::Photonic {
                Some(spectrum_for(cfg, &model, &run.traj)?)
            } else {
                None
            };
            Ok((run, spectrum))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let final_ratio = |r: &PointRun| {
        let s = r.record.last().expect("samples");
        s.total_e2() / s.total_e1()
    };
    write_csv(
        &out.join("converge_runs.csv"),
        &header(&["n_bins", "P_e1", "P_e2", "ratio", "gamma"]),
        levels.iter().zip(&runs).map(|(n, (r, _))| {
            let s = r.record.last().expect("samples");
            vec![n.to_string(), num(s.total_e1()), num(s.total_e2()), num(final_ratio(r)), num(r.record.leakage(r.record.len() - 1))]
        }),
    )?;
    let rows = (1..runs.len()).map(|k| {
        let ((coarse, sc), (fine, sf)) = (&runs[k - 1], &runs[k]);
        let d_a = match (sc, sf) {
            (Some(a), Some(b)) => max_abs_diff(&a.absorption, &b.absorption),
            _ => f64::NAN,
        };
        let gamma = |r: &PointRun| r.record.norms.iter().map(|n| 1.0 - n).collect::<Vec<_>>();
        let (rc, rf) = (ratio_series(&coarse.record), ratio_series(&fine.record));
        let d_ratio = rc.iter().zip(&rf).filter(|(x, y)| x.is_finite() && y.is_finite()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let rel_final = (final_ratio(fine) - final_ratio(coarse)).abs() / final_ratio(fine).abs();
        vec![
            levels[k - 1].to_string(),
            levels[k].to_string(),
            num(d_a),
            num(max_abs_diff(&gamma(coarse), &gamma(fine))),
            num(d_ratio),
            num(rel_final),
        ]
    });
    write_csv(
        &out.join("converge.csv"),
        &header(&["n_bins_coarse", "n_bins_fine", "max_dA", "max_dgamma", "max_dratio", "final_ratio_rel_change"]),
        rows.collect::<Vec<_>>(),
    )
}

fn deviation_row(label: String, dim: usize, r: &DeviationReport) -> Vec<String> {
    let mut row = vec![
        label,
        dim.to_string(),
        num(r.photon.max_over_time),
        num(r.photon.final_time),
        num(r.total_e1.max_over_time),
        num(r.total_e1.final_time),
        num(r.total_e2.max_over_time),
        num(r.total_e2.final_time),
        num(r.autocorrelation.max_over_time),
        num(r.autocorrelation.final_time),
    ];
    for (a, b) in r.e1.iter().zip(&r.e2) {
        row.extend([num(a.max_over_time), num(b.max_over_time)]);
    }
    row
}

fn deviation_header(first: &str, n_bins: usize) -> Vec<String> {
    let mut h = header(&[
        first, "dim", "photon_max", "photon_final", "P_e1_max", "P_e1_final", "P_e2_max", "P_e2_final", "C_max",
        "C_final",
    ]);
    for i in 0..n_bins {
        h.extend([format!("P_e1_{i}_max"), format!("P_e2_{i}_max")]);
    }
    h
}

/// Explicit finite-N ensembles against the effective model, and for at most
/// two bins the multi-coordinate against the single-coordinate engine.
pub fn run_oracle(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let model = cfg.model;
    let bins = cfg.bins(&model)?;
    let initial = cfg.initial_state(cfg.initial_states[0]);
    let opts = cfg.options();
    let n_vib = cfg.oracle.n_vib;
    if cfg.oracle.n_molecules.is_empty() {
        return Err(CliError::Config("[oracle] n_molecules is empty".into()));
    }
    let ensembles = cfg
        .oracle
        .n_molecules
        .iter()
        .map(|&n| Ok(ExplicitEnsemble::from_bins(&model, &bins, n, n_vib)?))
        .collect::<Result<Vec<_>, CliError>>()?;
    write_manifest(cfg, Command::Oracle, out)?;
    let reports = ensembles
        .par_iter()
        .map(|e| Ok((e.dim(), compare_to_cute(e, &initial, &opts)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    write_csv(
        &out.join("oracle.csv"),
        &deviation_header("n_molecules", bins.len()),
        cfg.oracle.n_molecules.iter().zip(&reports).map(|(n, (dim, r))| deviation_row(n.to_string(), *dim, r)),
    )?;
    if bins.len() <= 2 {
        let a = build_multibin_hamiltonian(&model, &bins, n_vib)?;
        let b = build_effective_hamiltonian(&model, &bins, n_vib)?;
        let r = compare_engines(&a, &b, &initial, &opts)?;
        write_csv(
            &out.join("engines.csv"),
            &deviation_header("comparison", bins.len()),
            [deviation_row("multi_vs_single".into(), a.dim(), &r)],
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels() {
        assert_eq!(convergence_levels(32), vec![8, 16, 32, 64]);
        assert_eq!(convergence_levels(2), vec![1, 2, 4]);
        assert_eq!(convergence_levels(1), vec![1, 2]);
    }

    #[test]
    fn photonic_only_spectra() {
        let cfg = RunConfig::parse("[run]\ninitial_state = bright\n").unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(run_spectrum(&cfg, dir.path()).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn flat_spectrum_without_coupling() {
        let cfg = RunConfig::parse("[model]\ncoupling = 0\n[run]\nn_vib = 6\nt_final = 200 fs\n").unwrap();
        let dir = tempfile::tempdir().unwrap();
        run_spectrum(&cfg, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
        let worst = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap().abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn zero_sigma_cannot_converge() {
        let cfg = RunConfig::parse("[run]\nn_vib = 4\n").unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(run_converge(&cfg, dir.path()).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn no_product_without_diabatic_coupling() {
        let cfg = RunConfig::parse("[model]\nv12 = 0\nsigma = 0.01\n[run]\nn_vib = 8\nn_bins = 3\nt_final = 5 fs\n").unwrap();
        let dir = tempfile::tempdir().unwrap();
        run_dynamics(&cfg, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("populations.csv")).unwrap();
        for line in text.lines().skip(1) {
            assert_eq!(line.split(',').nth(3).unwrap().parse::<f64>().unwrap(), 0.0);
        }
    }

    #[test]
    fn single_point_sweep_matches_dynamics() {
        let text = "[model]\nsigma = 0.01\n[run]\nn_vib = 8\nt_final = 5 fs\n";
        let cfg = RunConfig::parse(text).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_dynamics(&cfg, a.path()).unwrap();
        run_sweep(&cfg, b.path()).unwrap();
        let summary = std::fs::read_to_string(a.path().join("summary.csv")).unwrap();
        let sweep = std::fs::read_to_string(b.path().join("sweep.csv")).unwrap();
        let s: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
        let w: Vec<&str> = sweep.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(s[8], w[6]); // P_e2
        assert_eq!(s[10], w[8]); // gamma
    }
}
