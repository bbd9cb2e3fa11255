//! Simulation, feature extraction and batched time-series causal discovery
//! for human-robot spatial interaction.
//!
//! The modules layer bottom-up:
//!
//! * [`timeseries`]: fixed-rate batches and their CSV form
//! * [`causalgraph`]: lagged graphs, SHD and graph documents
//! * [`hrsim`] / [`features`]: scenario simulator and the `(v, d_g, r)` variables
//! * [`citest`]: ParCorr, GPDC, KSG mutual information and transfer entropy
//! * [`discovery`]: PCMCI and F-PCMCI
//! * [`pipeline`]: concurrent collection and discovery over a batch pool
//! * [`sweeps`]: SHD / runtime against sampling rate and time horizon

pub mod causalgraph;
pub mod citest;
pub mod discovery;
pub mod error;
pub mod features;
pub mod hrsim;
pub mod pipeline;
pub mod sweeps;
pub mod timeseries;

pub use causalgraph::{expected_hrsi_graph, shd, CausalGraph, LaggedEdge};
pub use discovery::{run_discovery, DiscoveryConfig, Method};
pub use error::{Error, Result};
pub use timeseries::TimeSeriesBatch;
