//! Simulator and analytical model for LTE random access under massive
//! synchronous M2M activation, comparing the standard RACH procedure, a
//! dynamic over-allocation of access opportunities, and q-ary tree-splitting
//! collision resolution driven by Msg4b feedback.
//!
//! `run_scenario` plays out one activation burst event by event and returns a
//! [`sim::RunTrace`]; [`metrics::aggregate`] and [`metrics::pool`] reduce
//! traces to the reported quantities; [`analytics::TreeModel`] computes the
//! closed-form counterparts for the splitting process.

pub mod analytics;
pub mod config;
pub mod error;
pub mod groups;
pub mod metrics;
pub mod msg4b;
pub mod schemes;
pub mod sim;

pub use analytics::TreeModel;
pub use config::{
    parse_config_str, validate_config, FrameLayout, ParseError, Scheme, SchemeConfig,
    SystemConfig, Timing, ValidatedConfig,
};
pub use error::{AnalyticsError, CodecError, ConfigError, InvalidConfig, MetricsError, SimError};
pub use groups::{derive_groups, ContentionGroup, DeviceId, PreambleSet};
pub use metrics::{aggregate, pool, FieldStats, PooledMetrics, RunMetrics};
pub use msg4b::{decode_msg4b, encode_msg4b, Msg4b};
pub use sim::script::PreambleScript;
pub use sim::{
    config_fingerprint, run_scenario, run_scenario_with, DeviceOutcome, RunTrace, DEFAULT_HORIZON,
};
