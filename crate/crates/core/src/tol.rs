//! Named numerical tolerances used across the crate.

/// Relative merge tolerance for degenerate eigenvalues, scaled by the operator sup-norm.
pub const EIG_MERGE_REL: f64 = 1e-9;
/// Relative threshold below which an eigenvalue of a PSD operator counts as zero.
pub const SUPPORT_REL: f64 = 1e-12;
/// Absolute Hermiticity tolerance, scaled by the operator sup-norm.
pub const HERMITIAN_REL: f64 = 1e-10;
/// Trace tolerance for density matrices.
pub const TRACE_TOL: f64 = 1e-10;
/// Negative eigenvalue tolerance for density matrices.
pub const PSD_TOL: f64 = 1e-10;
/// Closure residual above which a span is rejected as a *-algebra.
pub const ALGEBRA_CLOSURE: f64 = 1e-9;
/// Support leakage of a state outside the support of the reference state.
pub const SUPPORT_LEAKAGE: f64 = 1e-10;
/// Relative merge tolerance for Bohr frequencies, scaled by the Hamiltonian norm.
pub const FREQ_MERGE_REL: f64 = 1e-9;
/// Detailed balance residual tolerance for classical rates.
pub const DETAILED_BALANCE: f64 = 1e-10;
/// Relative KMS tolerance for rate profiles.
pub const RATE_KMS_REL: f64 = 1e-10;
/// Eigenvalue tolerance separating the kernel of a generator from its gap.
pub const GENERATOR_KERNEL: f64 = 1e-8;
/// Positive eigenvalue of a symmetrized generator above which it is declared unstable.
pub const GENERATOR_INSTABILITY: f64 = 1e-8;
/// Commutation tolerance for lattice potentials.
pub const POTENTIAL_COMMUTE: f64 = 1e-12;
/// Tolerance for margins reported by certificates.
pub const CERTIFICATE_MARGIN: f64 = -1e-7;
/// Target gap between the certified bounds of the max-information SDP.
pub const SDP_GAP: f64 = 1e-6;
/// Iteration budget for the max-information SDP.
pub const SDP_BUDGET: usize = 10_000;
/// Tail mass bound for the rotated-Petz quadrature.
pub const QUAD_TAIL: f64 = 1e-10;
/// Convergence threshold between successive node doublings.
pub const QUAD_DOUBLING: f64 = 1e-9;
/// Certified error target for the rotated-Petz integral.
pub const QUAD_ERROR: f64 = 1e-8;
/// Relative disagreement above which a two-sided bracket is flagged as wide.
pub const BRACKET_WIDE: f64 = 0.1;
/// Largest Hilbert-space dimension for which superoperators are stored densely.
pub const DENSE_SUPEROP_MAX_DIM: usize = 32;
