use thiserror::Error;

/// A single reason a configuration is rejected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    /// A quantity that must divide another evenly does not.
    #[error("DivisibilityError: {0}")]
    DivisibilityError(String),
    /// The frame geometry cannot host the requested opportunities.
    #[error("LayoutError: {0}")]
    LayoutError(String),
    /// A parameter lies outside its admissible range.
    #[error("RangeError: {0}")]
    RangeError(String),
}

/// Validation failure carrying every violation found, not just the first.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid configuration: {}", join_violations(.violations))]
pub struct InvalidConfig {
    pub violations: Vec<ConfigError>,
}

fn join_violations(violations: &[ConfigError]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Feedback-message encoding failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CodecError {
    /// A field value does not fit in its allotted bit width.
    #[error("OverflowError: {field} value {value} exceeds maximum {max}")]
    OverflowError {
        field: &'static str,
        value: u16,
        max: u16,
    },
}

/// Analytical model failure.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    /// Model parameters outside the domain where the expressions hold.
    #[error("DomainError: {0}")]
    DomainError(String),
}

/// Simulation failure.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    /// A random choice was requested from an empty candidate set.
    #[error("EmptySetError: {0}")]
    EmptySetError(String),
    /// The event loop exceeded its subframe horizon with devices still active.
    #[error("NonTermination: {active} devices still active at subframe {horizon}")]
    NonTermination { horizon: u64, active: usize },
    /// A device received a stimulus its current phase cannot accept.
    #[error("IllegalTransition: device {device} in phase {phase} received {stimulus}")]
    IllegalTransition {
        device: u32,
        phase: &'static str,
        stimulus: &'static str,
    },
    /// A scripted preamble choice contradicts the pool actually offered.
    #[error("ScriptViolation: {0}")]
    ScriptViolation(String),
}

/// Metrics aggregation failure.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    /// A trace with no devices has no meaningful statistics.
    #[error("EmptyTrace: run trace contains no devices")]
    EmptyTrace,
    /// Pooling needs at least two runs for a sample variance.
    #[error("InsufficientRuns: got {got}, need at least 2")]
    InsufficientRuns { got: usize },
    /// Pooled runs were produced under different configurations.
    #[error("ConfigMismatch: run {index} has fingerprint {got:#018x}, expected {expected:#018x}")]
    ConfigMismatch {
        index: usize,
        got: u64,
        expected: u64,
    },
}
