//! Ultrafast quantum dynamics of disordered molecular polaritons.
//!
//! A Gaussian-disordered ensemble collectively coupled to one lossy cavity
//! mode is coarse-grained into frequency bins. In the large-N limit each bin
//! acts as an extra pair of electronic states on a single effective molecule,
//! so the Hilbert space grows linearly with the number of bins:
//!
//! * [`model`]: parameters, disorder bins, basis indexing
//! * [`hamiltonian`]: sparse effective Hamiltonians
//! * [`propagator`]: accuracy-controlled time evolution
//! * [`observables`]: absorption, populations, yields, vibrational energies
//! * [`oracle`]: explicit finite-N reference ensembles
//!
//! ```
//! use dcute::observables::{absorption, default_omega_grid};
//! use dcute::{build_effective_hamiltonian, discretize_disorder, propagate, InitialState, ModelSpec, PropagationOptions};
//!
//! # fn main() -> dcute::Result<()> {
//! let spec = ModelSpec { sigma: 0.02, ..ModelSpec::reference() };
//! let bins = discretize_disorder(&spec, 8)?;
//! let h = build_effective_hamiltonian(&spec, &bins, 10)?;
//! let psi0 = InitialState::Photonic.vector(&h)?;
//! let opts = PropagationOptions::new(400.0).with_snapshot_stride(None);
//! let traj = propagate(&h, &psi0, &opts)?;
//! let spectrum = absorption(&traj, spec.kappa, &default_omega_grid(&spec))?;
//! assert_eq!(spectrum.omega.len(), spectrum.absorption.len());
//! # Ok(())
//! # }
//! ```

pub mod error;
pub mod hamiltonian;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod propagator;
pub mod sparse;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};
pub use hamiltonian::{build_effective_hamiltonian, build_multibin_hamiltonian, EffectiveHamiltonian, Sector};
pub use model::{bin_count_rule, discretize_disorder, time_convert, Basis, BasisState, BinSet, ModelSpec, TimeUnit};
pub use propagator::{propagate, propagate_eom, InitialState, PropagationOptions, Trajectory};
