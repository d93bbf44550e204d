//! Null-control synthesis and numerical verification for the radial one-phase
//! Stefan problem with a semilinear heat equation.
//!
//! Fields live on the reference interval `[0, 1]` (the moving domain
//! `[0, R(t)]` rescaled) in the reduced variable `z~ = r z`. The main entry
//! points are [`pde::solve_forward_linear`], [`pde::solve_adjoint`],
//! [`control::minimize_j`], [`stefan::fixed_point_iterate`],
//! [`weights::compute_i`] and [`observability::estimate_observability`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod domain;
pub mod error;
pub mod io;
pub mod linalg;
pub mod observability;
pub mod pde;
pub mod stefan;
pub mod weights;

pub use control::{minimize_j, HumConfig, HumOutcome, HumSummary, HumVariant};
pub use domain::{BoundaryPath, FieldRole, InitialData, PhysicalSetup, ReferenceGrid, SpaceTimeField};
pub use error::{Error, Result};
pub use pde::{LinearSystem, SchemeConfig};
pub use stefan::{FixedPointConfig, Nonlinearity, StefanSign};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
