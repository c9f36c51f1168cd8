//! Capacity of the 2x2 Gaussian channel under a peak-power constraint.
//!
//! The unit-ball peak constraint with an arbitrary real 2x2 channel matrix
//! reduces to an identity channel whose input lives inside an ellipse with
//! radii given by the singular values of the matrix. For a small enough
//! ellipse the capacity-achieving input is supported on the boundary and is
//! discrete, so capacity can be computed to quadrature accuracy and the
//! result certified against the optimality conditions.
//!
//! The crate provides:
//! - [`channel`]: closed-form 2x2 reduction to an [`channel::EllipseConstraint`],
//! - [`quadrature`]: Gauss-Hermite rules against the standard normal weight,
//! - [`input`]: symmetric boundary distributions and their expansion,
//! - [`output_stats`]: output densities, posterior statistics, information
//!   density and its boundary derivatives,
//! - [`kkt`]: optimality verification and the tilted one-dimensional route,
//! - [`solver`]: the capacity solver plus antipodal-pair and uniform-circle
//!   oracles,
//! - [`curves`]: the regime-boundary curves,
//! - [`mc`]: a reproducible Monte Carlo cross-check of mutual information.

pub mod channel;
pub mod curves;
pub mod error;
pub mod input;
pub mod kkt;
pub mod mc;
pub mod output_stats;
pub mod quadrature;
pub mod solver;

pub use channel::{ChannelMatrix, EllipseConstraint};
pub use error::{Error, Result};
pub use input::{ExpandedAtom, HalfAxisAtom, SymmetricBoundaryDistribution};
pub use kkt::{kkt_report, KktReport, TiltedDistribution};
pub use output_stats::OutputDensityModel;
pub use quadrature::QuadratureRule;
pub use solver::{solve_capacity, CapacityResult, RegimeLabel, SolverOptions};
