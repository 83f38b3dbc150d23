//! Riemannian domain data: metric tensors, level-set boundaries and their constants.

pub mod boundary;
pub mod levelset;
pub mod metric;
pub mod potential;
pub mod sampling;

pub use boundary::{estimate_k0, ChordMap, DomainBoundary, K0Estimate, DEFAULT_DELTA0};
pub use levelset::LevelSet;
pub use metric::{Christoffel, DerivativeMode, MetricFamily, MetricField, MetricJet, Profile};
pub use potential::Potential;
