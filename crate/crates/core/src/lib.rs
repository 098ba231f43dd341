//! Multi-objective regression test selection with QAOA.
//!
//! The pipeline: build a three-objective QUBO per test suite, split large
//! suites into simulator-sized clusters, optimize each cluster with an exact
//! statevector QAOA, assemble Pareto fronts from the selections and compare
//! against classical baselines with nonparametric statistics.

pub mod decompose;
pub mod error;
pub mod par;
pub mod pareto;
pub mod qaoa;
pub mod qubo;
pub mod runner;
pub mod seeds;
pub mod selectors;
pub mod stats;
pub mod suite;

pub use error::{Error, Result};
pub use par::Backend;
pub use suite::{ObjectiveVector, Selection, TestSuite};
