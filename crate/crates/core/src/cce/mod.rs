//! Decoherence engine: pulse sequences, cluster enumeration, per-cluster
//! coherence factors, the cluster correlation expansion and an exact
//! small-bath oracle.

pub mod cluster;
pub mod exact;
pub mod expansion;
pub mod hamiltonian;
pub mod kernel;
pub mod pulses;
pub mod state;
pub mod trace;

pub use cluster::{check_closure, enumerate_clusters, enumerate_clusters_at, neighbour_pairs, Cluster};
pub use exact::{exact_coherence, full_bath_hamiltonian, EXACT_DIM_LIMIT};
pub use expansion::{cce_coherence, cce_coherence_pairs, CceOptions, DIVISION_GUARD};
pub use hamiltonian::{cluster_hamiltonians, PreparedConditional};
pub use kernel::{cluster_coherence, EchoKernel};
pub use pulses::{uniform_grid, PulseSequence, Schedule};
pub use state::BathState;
pub use trace::{CoherenceTrace, TraceMeta};
