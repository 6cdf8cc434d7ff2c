use crate::config::SystemConfig;
use crate::error::MetricsError;
use crate::sim::RunTrace;

/// The reported quantities of one run, plus the resource-usage fractions.
///
/// The busy period runs from the first activation through the last
/// resolution or outage, inclusive; both capacity denominators are
/// bandwidth_rbs times its length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub fingerprint: u64,
    /// Fraction of devices that exhausted their MSG1 budget.
    pub outage_fraction: f64,
    /// Mean MSG1 transmissions over all devices, outage devices included.
    pub mean_tx: f64,
    /// Mean activation-to-resolution delay over resolved devices only;
    /// 0 when nothing resolved.
    pub mean_delay_ms: f64,
    /// TRAO subframes the eNodeB scheduled.
    pub trao_count: u64,
    pub dl_rb_used: u64,
    pub ul_rb_used: u64,
    pub dl_fraction: f64,
    pub ul_fraction: f64,
}

impl RunMetrics {
    fn zero(fingerprint: u64) -> Self {
        RunMetrics {
            fingerprint,
            outage_fraction: 0.0,
            mean_tx: 0.0,
            mean_delay_ms: 0.0,
            trao_count: 0,
            dl_rb_used: 0,
            ul_rb_used: 0,
            dl_fraction: 0.0,
            ul_fraction: 0.0,
        }
    }
}

/// Reduces one trace to its metrics. An empty trace is all zeros.
pub fn aggregate(trace: &RunTrace, sys: &SystemConfig) -> RunMetrics {
    let n = trace.devices.len();
    if n == 0 {
        return RunMetrics::zero(trace.fingerprint);
    }
    let outages = trace
        .devices
        .iter()
        .filter(|d| d.outage_subframe.is_some())
        .count();
    let tx_total: u64 = trace.devices.iter().map(|d| d.tx_count as u64).sum();

    let mut delay_total: u64 = 0;
    let mut resolved = 0u64;
    for dev in &trace.devices {
        if let Some(sf) = dev.resolution_subframe {
            delay_total += (sf - dev.activation_subframe) * sys.subframe_ms;
            resolved += 1;
        }
    }
    let mean_delay_ms = if resolved > 0 {
        delay_total as f64 / resolved as f64
    } else {
        0.0
    };

    // Messages sharing a subframe are bundled into one unit: the ceiling is
    // taken once per subframe, not per message.
    let dl_rb_used: u64 = trace
        .dl_bits
        .values()
        .map(|&bits| bits.div_ceil(sys.rb_bits as u64))
        .sum();
    let opportunities = (trace.raos_used.len() + trace.traos_scheduled.len()) as u64;
    let ul_rb_used =
        opportunities * sys.rao_rbs as u64 + trace.msg3_grants * sys.msg3_rbs as u64;

    let first = trace
        .devices
        .iter()
        .map(|d| d.activation_subframe)
        .min()
        .expect("nonempty");
    let last = trace
        .devices
        .iter()
        .filter_map(|d| d.resolution_subframe.or(d.outage_subframe))
        .max();
    let busy_subframes = match last {
        Some(last) => last - first + 1,
        None => 0,
    };
    let available = busy_subframes * sys.bandwidth_rbs as u64;
    let fraction = |used: u64| {
        if available == 0 {
            0.0
        } else {
            used as f64 / available as f64
        }
    };

    RunMetrics {
        fingerprint: trace.fingerprint,
        outage_fraction: outages as f64 / n as f64,
        mean_tx: tx_total as f64 / n as f64,
        mean_delay_ms,
        trao_count: trace.traos_scheduled.len() as u64,
        dl_rb_used,
        ul_rb_used,
        dl_fraction: fraction(dl_rb_used),
        ul_fraction: fraction(ul_rb_used),
    }
}

/// Mean, sample standard deviation and 95% normal-approximation CI
/// half-width of one pooled field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldStats {
    pub mean: f64,
    pub std_dev: f64,
    pub ci_half_width: f64,
}

impl FieldStats {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std_dev = var.sqrt();
        FieldStats {
            mean,
            std_dev,
            ci_half_width: 1.96 * std_dev / n.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledMetrics {
    pub fingerprint: u64,
    pub runs: usize,
    pub outage: FieldStats,
    pub tx: FieldStats,
    pub delay_ms: FieldStats,
    pub traos: FieldStats,
    pub dl_fraction: FieldStats,
    pub ul_fraction: FieldStats,
}

/// Pools per-run metrics from repeated runs of one scenario.
pub fn pool(metrics: &[RunMetrics]) -> Result<PooledMetrics, MetricsError> {
    if metrics.len() < 2 {
        return Err(MetricsError::InsufficientRuns { got: metrics.len() });
    }
    let expected = metrics[0].fingerprint;
    for (index, m) in metrics.iter().enumerate() {
        if m.fingerprint != expected {
            return Err(MetricsError::ConfigMismatch {
                index,
                got: m.fingerprint,
                expected,
            });
        }
    }
    let field = |f: fn(&RunMetrics) -> f64| {
        FieldStats::from_values(&metrics.iter().map(f).collect::<Vec<_>>())
    };
    Ok(PooledMetrics {
        fingerprint: expected,
        runs: metrics.len(),
        outage: field(|m| m.outage_fraction),
        tx: field(|m| m.mean_tx),
        delay_ms: field(|m| m.mean_delay_ms),
        traos: field(|m| m.trao_count as f64),
        dl_fraction: field(|m| m.dl_fraction),
        ul_fraction: field(|m| m.ul_fraction),
    })
}
