//! Semantic labeling of triangle-mesh facets.
//!
//! Every facet gets one class by minimizing an MRF energy that combines
//! classifier evidence projected from calibrated images, a Potts smoothness
//! term, a normal-discontinuity term and a local prior on normal
//! orientation learned from a coarse first labeling.

pub mod camera;
pub mod config;
pub mod energy;
pub mod eval;
pub mod mesh;
pub mod par;
pub mod pipeline;
pub mod prior;
pub mod solver;
pub mod synth;
