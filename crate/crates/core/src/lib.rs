//! Estimation of eLoran timing differences from meteorological factors.

pub mod adam;
pub mod agrnn;
pub mod baselines;
pub mod dataset;
pub mod features;
pub mod gridmap;
pub mod ingest;
pub mod lasso;
pub mod model;
pub mod stats;
pub mod synth;
pub mod types;
