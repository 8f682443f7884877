//! Three-pilot joint beam and channel tracking for uniform planar arrays.

pub mod array_model;
pub mod cli;
pub mod config;
pub mod error;
pub mod fisher_crlb;
pub mod nelder_mead;
pub mod offset_search;
pub mod sim_harness;
pub mod tracker;

pub use array_model::{
    ArrayGeometry, AoA, ChannelParams, DirectionParams, PilotConfig, ProbeSet,
};
pub use error::{Error, Result};
pub use fisher_crlb::{crlb, fisher_matrix, CrlbValue, FisherMatrix};
pub use offset_search::{search_offsets, OffsetTriple, SearchObjective, REFERENCE_OFFSETS};
pub use tracker::{Codebook, StepSchedule, TrackerState};
pub use sim_harness::{run_dynamic, run_static, DynamicScenario, MseCurve, StaticScenario};
