//! Finite element solver for a second-order elliptic interface problem on
//! two independently meshed subdomains, coupled by a stabilized Lagrange
//! multiplier on the interface.
//!
//! The primal variable is approximated by P1 elements on structured
//! triangulations of the two halves of the unit square; the multiplier
//! lives on the second subdomain's interface trace. Penalty terms built
//! from the averaged discrete flux make the pairing stable without an
//! inf-sup condition on the trace spaces, and the convergence-study
//! driver reproduces the expected orders (2 for the primal L2 error, about
//! 1 for the multiplier).

pub mod analysis;
pub mod checks;
pub mod coupling;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod sparse;
pub mod system;

pub use error::{Error, Result};
