//! Tensor structures on finite-dimensional vector spaces and bundles.
//!
//! Linear normal forms and compatible triples at the bottom, chart-level
//! calculus (Nijenhuis tensor, Levi-Civita curvature) in the middle, and
//! towers of finite-dimensional levels with their coherence checks on top.
//! Every check returns a [`report::Report`] of named residuals.

pub mod bundle;
pub mod calculus;
pub mod compat;
pub mod docs;
pub mod limits;
pub mod linstruct;
pub mod loopspace;
pub mod numkernel;
pub mod poly;
pub mod report;
pub mod sample;
pub mod tensor;
