//! Two viscous, proliferating tissues in contact on a structured grid.
//!
//! The crate covers the full chain from constitutive laws to certificates:
//!
//! * [`grid`]: MAC-staggered fields and discrete operators,
//! * [`constitutive`]: congestion and repulsion pressures, growth laws,
//! * [`brinkman`]: the velocity law `-beta Δv + v = -∇p`,
//! * [`dynamics`]: time stepping of the enforced-segregation (ESVM) and
//!   plain viscous (VM) models,
//! * [`stationary`]: the stationary incompressible-limit system and its
//!   transmission conditions,
//! * [`freeboundary`]: sharp-interface evolution of the limit models,
//! * [`diagnostics`]: segregation, complementarity and curl certificates,
//! * [`harness`]: configuration, presets, output files and the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod brinkman;
pub mod constitutive;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod field_io;
pub mod freeboundary;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod stationary;

pub use error::{Error, Result};

/// Guide chapters, compiled as doc-tests so the examples stay current.
#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/grid.md")]
    pub mod grid {}
    #[doc = include_str!("../../../book/src/velocity.md")]
    pub mod velocity {}
    #[doc = include_str!("../../../book/src/models.md")]
    pub mod models {}
    #[doc = include_str!("../../../book/src/stationary.md")]
    pub mod stationary {}
    #[doc = include_str!("../../../book/src/free-boundary.md")]
    pub mod free_boundary {}
    #[doc = include_str!("../../../book/src/harness.md")]
    pub mod harness {}
}
