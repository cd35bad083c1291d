//! Browser bindings: disorder bins, absorption spectra and population
//! dynamics on the reference molecule, sized to run interactively.

use wasm_bindgen::prelude::*;

use dcute::model::AU_PER_FS;
use dcute::observables::{absorption, default_omega_grid, SectorPopulations};
use dcute::propagator::propagate_observed;
use dcute::{
    bin_count_rule, build_effective_hamiltonian, discretize_disorder, BinSet, InitialState, ModelSpec,
    PropagationOptions,
};

/// Upper limit on bins so one call stays under a second in the browser.
pub const MAX_BINS: usize = 24;

fn model(sigma: f64, coupling: f64) -> ModelSpec {
    ModelSpec { sigma, coupling, ..ModelSpec::reference() }
}

fn bins_for(spec: &ModelSpec, t_final: f64) -> dcute::Result<BinSet> {
    if spec.sigma == 0.0 {
        return Ok(BinSet::single(spec.omega0));
    }
    discretize_disorder(spec, bin_count_rule(spec.sigma, t_final).min(MAX_BINS))
}

fn options(t_final_fs: f64) -> dcute::Result<PropagationOptions> {
    let t_final = t_final_fs * AU_PER_FS;
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(dcute::Error::InvalidGrid(format!("t_final = {t_final_fs} fs")));
    }
    let steps = t_final.round().max(1.0);
    Ok(PropagationOptions::new(t_final).with_dt_record(t_final / steps).with_snapshot_stride(None))
}

fn initial(name: &str) -> dcute::Result<InitialState> {
    match name {
        "photonic" => Ok(InitialState::Photonic),
        "bright" => Ok(InitialState::Bright),
        "upper" => Ok(InitialState::UpperPolariton),
        "lower" => Ok(InitialState::LowerPolariton),
        other => Err(dcute::Error::InvalidParameter { name: "initial", reason: format!("unknown state `{other}`") }),
    }
}

/// `[omega_1, weight_1, omega_2, weight_2, ...]` for `n_bins` bins.
pub fn bins_table(sigma: f64, n_bins: usize) -> dcute::Result<Vec<f64>> {
    let spec = model(sigma, 0.0);
    let bins = if sigma == 0.0 { BinSet::single(spec.omega0) } else { discretize_disorder(&spec, n_bins)? };
    Ok(bins.frequencies().zip(bins.weights()).flat_map(|(w, p)| [w, p]).collect())
}

/// `[omega_1, A_1, omega_2, A_2, ...]` from a photonic start.
pub fn spectrum_table(sigma: f64, coupling: f64, n_vib: usize, t_final_fs: f64) -> dcute::Result<Vec<f64>> {
    let spec = model(sigma, coupling);
    let opts = options(t_final_fs)?;
    let h = build_effective_hamiltonian(&spec, &bins_for(&spec, opts.t_final)?, n_vib)?;
    let psi0 = InitialState::Photonic.vector(&h)?;
    let traj = propagate_observed(&h, &psi0, &opts, |_, _, _| {})?;
    let spectrum = absorption(&traj, spec.kappa, &default_omega_grid(&spec))?;
    Ok(spectrum.omega.iter().zip(&spectrum.absorption).flat_map(|(w, a)| [*w, *a]).collect())
}

/// `[t_fs, photon, P_e1, P_e2, ...]` on a 1 au grid.
pub fn dynamics_table(
    sigma: f64,
    coupling: f64,
    initial_state: &str,
    n_vib: usize,
    t_final_fs: f64,
) -> dcute::Result<Vec<f64>> {
    let spec = model(sigma, coupling);
    let opts = options(t_final_fs)?;
    let h = build_effective_hamiltonian(&spec, &bins_for(&spec, opts.t_final)?, n_vib)?;
    let psi0 = initial(initial_state)?.vector(&h)?;
    let mut rows = Vec::new();
    propagate_observed(&h, &psi0, &opts, |_, t, psi| {
        let p = SectorPopulations::from_state(&h, psi);
        rows.extend([t / AU_PER_FS, p.photon, p.total_e1(), p.total_e2()]);
    })?;
    Ok(rows)
}

fn js(e: dcute::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = disorderBins)]
pub fn disorder_bins(sigma: f64, n_bins: usize) -> Result<Vec<f64>, JsError> {
    bins_table(sigma, n_bins).map_err(js)
}

#[wasm_bindgen(js_name = absorptionSpectrum)]
pub fn absorption_spectrum(sigma: f64, coupling: f64, n_vib: usize, t_final_fs: f64) -> Result<Vec<f64>, JsError> {
    spectrum_table(sigma, coupling, n_vib, t_final_fs).map_err(js)
}

#[wasm_bindgen(js_name = populationDynamics)]
pub fn population_dynamics(
    sigma: f64,
    coupling: f64,
    initial_state: &str,
    n_vib: usize,
    t_final_fs: f64,
) -> Result<Vec<f64>, JsError> {
    dynamics_table(sigma, coupling, initial_state, n_vib, t_final_fs).map_err(js)
}
