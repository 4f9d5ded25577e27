//! Pure-dephasing engine for molecular spin systems coupled to a nuclear
//! spin bath.
//!
//! The crate is organised bottom-up:
//!
//! - [`spinops`]: dense complex kernels (spin matrices, embedding,
//!   Hermitian eigendecomposition, propagators).
//! - [`model`]: spin sites, interaction tensors, and assembly of the
//!   system / bath / system-bath Hamiltonian pieces.
//! - [`effective`]: conditional bath Hamiltonians obtained from a
//!   Schrieffer-Wolff treatment of the system-bath coupling.
//! - [`cce`]: pulse sequences, cluster enumeration, the cluster correlation
//!   expansion and an exact small-bath oracle.
//! - [`metrics`]: the Δ parameter and related diagnostics.
//! - [`bench`]: scenarios, bath generation, configuration and result files.
//!
//! Units are fixed crate-wide: energies are angular frequencies in rad/µs,
//! times in µs, lengths in Å and fields in T. See [`units`].

pub mod bench;
pub mod cce;
pub mod effective;
pub mod error;
pub mod geom;
pub mod metrics;
pub mod model;
pub mod spinops;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Dense complex matrix type used throughout the crate.
pub type CMat = faer::Mat<C64>;
