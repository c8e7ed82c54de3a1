//! Differentially private interior-point finding over huge ordered domains,
//! and the proper threshold learner built on top of it.
//!
//! The domain is an integer range `0 ..= 2^b - 1` with `b` up to 128; it is
//! viewed as the leaves of an implicit complete binary tree that is never
//! materialized. Two solvers are provided: the recursive domain-shrinking
//! solver in [`treelog`] and its decomposed variant in [`heavy`], which
//! replaces the recursion's randomized paths with deterministic ones plus a
//! sparse-vector stopping rule. The [`audit`] module benchmarks both and
//! estimates empirical privacy lower bounds on tiny domains.

pub mod audit;
pub mod domain;
pub mod error;
pub mod heavy;
pub mod learner;
pub mod mech;
pub mod oracle;
pub mod treelog;

pub use domain::{
    extend_to_power_of_two, log_star, Database, NodeId, OrderedDomain, Path, PrivacyBudget,
};
pub use error::{Error, Result};
pub use mech::RandomSource;
