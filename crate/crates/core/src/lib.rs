//! Exact statevector simulation of dynamical decoupling on small qubit
//! registers: deterministic (bang-bang) cycles, Pauli-frame randomization
//! and random frames embedded between deterministic cycles.
//!
//! The building blocks, bottom up:
//!
//! - [`pauli`]: Pauli strings in binary symplectic form.
//! - [`linalg`]: dense Hermitian/unitary operators, spectral exponential and logarithm.
//! - [`model`]: coupling lattice, perturbation Hamiltonian, initial state, energy uncertainty.
//! - [`schemes`]: orthogonal-array decoupling cycles and frame sequences.
//! - [`engine`]: stepwise and Monte Carlo evolution, cycle propagators.
//! - [`analysis`]: closed-form decay laws, lower bounds and fits.
//!
//! ```
//! use ddsim::{oa_cycle_9q, local_pauli_terms, find_undecoupled_term};
//!
//! let cycle = oa_cycle_9q(1.0).unwrap();
//! assert_eq!(cycle.len(), 32);
//! assert_eq!(local_pauli_terms(9, 2).len(), 351);
//! assert!(find_undecoupled_term(&cycle, 2).unwrap().is_none());
//! ```

extern crate blas_src;

pub mod analysis;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod model;
pub mod pauli;
pub mod schemes;

pub use analysis::{
    det_bound, det_decay_approx, embedded_bound, embedded_rate, fit_decay_rate, fit_loglog_slope,
    free_decay_approx, parec_bound, parec_rate, pauli_twirl_rate, residual_norm_bound, BoundInputs,
    BoundsTable, Fit,
};
pub use engine::{
    cycle_propagator, evolve, evolve_embedded_fast, monte_carlo, propagate, residual_hamiltonian,
    FidelityTrace, PropagatorCache,
};
pub use error::{Error, Result};
pub use linalg::{DenseOperator, OperatorKind, Spectrum};
pub use model::{
    build_hamiltonian, energy_uncertainty, initial_coherent_state, sample_params, CouplingGraph,
    DeltaMode, PauliSumHamiltonian, PerturbationParams, StateVector,
};
pub use pauli::{Pauli, PauliString};
pub use schemes::{
    construct_oa, find_undecoupled_term, local_pauli_terms, oa_cycle_9q, verify_decoupling,
    verify_orthogonal_array, DecouplingCycle, OaVerdict, SchemeKind, SchemeSpec, SymbolArray,
};
