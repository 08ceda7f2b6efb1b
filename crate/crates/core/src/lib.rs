//! Computable local models for vector fields on manifolds with boundary.
//!
//! The crate covers the polynomial normal forms `u^s + x_{s-2} u^{s-2} + ... + x_0`
//! and their product ("versal") generalisation, the Morse stratification of the
//! boundary they induce, tangency divisors of trajectories with their
//! multiplicity functionals, the confluent-Vandermonde rank criteria for
//! traversal genericity, and finite catalogs of admissible tangency patterns.
//!
//! Modules:
//!
//! * [`polyparam`]: univariate polynomials, square-free decomposition, real
//!   roots with multiplicities.
//! * [`models`]: Morin and product models, membership and stratum queries.
//! * [`jets`]: multivariate Taylor jets, the Lie-derivative chain, rank
//!   equality and field reconstruction.
//! * [`divisors`]: trajectory divisors and the `m`, `m'`, `mu` functionals.
//! * [`genericity`]: confluent Vandermonde matrices, subspace general position,
//!   versality checks.
//! * [`patterns`]: enumeration and realization of tangency patterns.
//! * [`bounds`]: the root-localization constant and its Monte Carlo check.
//! * [`sweep`]: seeded neighbourhood sampling of model trajectories.

pub mod bounds;
pub mod divisors;
pub mod error;
pub mod genericity;
pub mod jets;
pub mod linalg;
pub mod models;
pub mod patterns;
pub mod polyparam;
pub mod rng;
pub mod sweep;

pub use divisors::{
    multiplicities, omega_of, trajectory_divisor, MuRounding, MultiplicityReport, OmegaPattern,
};
pub use error::{Error, Result};
pub use genericity::{ConfluentSystem, SubspaceConfig};
pub use jets::{Jet, MultiPoly, SmoothHandle};
pub use models::{Membership, ModelKind, ModelSpec, ProductFactor, Sign, StratumLabel, Variant};
pub use polyparam::{Divisor, DivisorEntry, ParamPoly};
