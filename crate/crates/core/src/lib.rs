//! Adaptive guaranteed-performance consensus for high-order multiagent
//! systems over switching undirected topologies.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: graphs, Laplacians, spectra and dwell-time switching schedules.
//! - [`riccati`]: Riccati/LMI gain synthesis with positive-definite certificates.
//! - [`protocol`]: the adaptive protocol (control inputs, edge-weight adaptation,
//!   switch resets) and the coupled vector field.
//! - [`simulator`]: fixed-step RK4 integration aligned to switch instants.
//! - [`performance`]: cost functional, guaranteed-cost bound, disagreement and
//!   Lyapunov diagnostics, Lipschitz verification.
//! - [`scenario`], [`export`], [`reproduce`]: file formats and the CLI back end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod export;
pub mod graph;
pub mod linalg;
pub mod performance;
pub mod protocol;
pub mod reproduce;
pub mod riccati;
pub mod scenario;
pub mod simulator;

pub use error::{Error, Result};
pub use graph::{Graph, SwitchingSchedule, SwitchingSet, WeightState};
pub use performance::{CostReport, TraceAnalysis};
pub use protocol::{NonlinearityHook, SystemState};
pub use riccati::{GainSet, LmiMargin, Mode, PerformanceSpec, PlantModel};
pub use scenario::Scenario;
pub use simulator::{IntegratorConfig, Trace};
