use thiserror::Error;

use crate::error::{ConfigError, InvalidConfig};

/// Access scheme under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Standard RACH: fixed RAO cadence, collisions resolved by timeout and backoff.
    Baseline,
    /// Best-case dynamic allocation: every subframe is a RAO, no activation delay.
    Dynamic,
    /// Tree-splitting collision resolution with Msg4b feedback and TRAOs.
    TreeSplit,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Baseline => "baseline",
            Scheme::Dynamic => "dynamic",
            Scheme::TreeSplit => "tree",
        }
    }
}

/// Radio and protocol parameters common to every scheme.
///
/// Durations are in milliseconds and are converted to subframes via
/// `subframe_ms` when the timing pipeline is derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemConfig {
    /// Contention preambles available per RAO (N_P).
    pub n_preambles: u16,
    /// MSG1 budget per device (M); exceeding it is an outage.
    pub max_transmissions: u32,
    /// RAR window (t_RAR): how long a device waits for MSG2 after processing.
    pub msg2_window_ms: u64,
    pub msg4_timer_ms: u64,
    /// Contention resolution timer (t_CRT), counted from the last MSG1.
    pub contention_timer_ms: u64,
    /// Backoff upper bound (B); restart delays are uniform over [0, B].
    pub backoff_ms: u64,
    /// One-way eNodeB/UE processing time applied between handshake steps.
    pub processing_ms: u64,
    /// Per-message loss probability (p_e), applied independently per link.
    pub p_error: f64,
    pub subframe_ms: u64,
    pub subframes_per_frame: u64,
    /// Uplink/downlink resource blocks per subframe.
    pub bandwidth_rbs: u32,
    /// Downlink bits one RB carries per subframe (QPSK, no overhead deduction).
    pub rb_bits: u32,
    pub msg2_bits: u32,
    pub msg4_bits: u32,
    pub msg4b_bits: u32,
    /// RBs consumed by each RAO or TRAO.
    pub rao_rbs: u32,
    /// RBs granted per MSG3.
    pub msg3_rbs: u32,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n_preambles: 54,
            max_transmissions: 10,
            msg2_window_ms: 5,
            msg4_timer_ms: 24,
            contention_timer_ms: 48,
            backoff_ms: 20,
            processing_ms: 3,
            p_error: 0.01,
            subframe_ms: 1,
            subframes_per_frame: 10,
            bandwidth_rbs: 100,
            rb_bits: 336,
            msg2_bits: 56,
            msg4_bits: 20,
            msg4b_bits: 25,
            rao_rbs: 6,
            msg3_rbs: 1,
        }
    }
}

/// Scheme selection plus the per-scheme layout knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// Regular RAOs per frame, placed evenly.
    pub raos_per_frame: u64,
    /// Preambles per contention frame (q); tree scheme only.
    pub split_factor: Option<u16>,
    /// Subframes per frame eligible to host TRAOs; tree scheme only.
    pub trao_subframes_per_frame: Option<u64>,
}

pub const DEFAULT_TRAO_SUBFRAMES: u64 = 8;

impl SchemeConfig {
    pub fn baseline() -> Self {
        SchemeConfig {
            scheme: Scheme::Baseline,
            raos_per_frame: 2,
            split_factor: None,
            trao_subframes_per_frame: None,
        }
    }

    pub fn dynamic() -> Self {
        SchemeConfig {
            scheme: Scheme::Dynamic,
            raos_per_frame: 10,
            split_factor: None,
            trao_subframes_per_frame: None,
        }
    }

    pub fn tree_split(q: u16) -> Self {
        SchemeConfig {
            scheme: Scheme::TreeSplit,
            raos_per_frame: 2,
            split_factor: Some(q),
            trao_subframes_per_frame: None,
        }
    }

    /// TRAO-eligible subframe count actually in effect.
    pub fn effective_trao_subframes(&self) -> u64 {
        match self.scheme {
            Scheme::TreeSplit => self
                .trao_subframes_per_frame
                .unwrap_or(DEFAULT_TRAO_SUBFRAMES),
            _ => 0,
        }
    }
}

/// Positions of RAOs and TRAO-eligible subframes within a frame.
///
/// RAOs are spread evenly: with spacing s = subframes_per_frame / raos_per_frame,
/// they sit at offsets i*s + 1 (the +1 skips subframe 0, matching the customary
/// grid when s > 1; with s = 1 every subframe is a RAO and the shift is moot).
/// TRAO-eligible offsets are the first k non-RAO offsets in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLayout {
    pub subframes_per_frame: u64,
    pub rao_offsets: Vec<u64>,
    pub trao_offsets: Vec<u64>,
}

impl FrameLayout {
    fn build(sys: &SystemConfig, scheme: &SchemeConfig) -> Self {
        let spf = sys.subframes_per_frame;
        let spacing = spf / scheme.raos_per_frame;
        let shift = if spacing > 1 { 1 } else { 0 };
        let rao_offsets: Vec<u64> = (0..scheme.raos_per_frame)
            .map(|i| i * spacing + shift)
            .collect();
        let trao_offsets: Vec<u64> = (0..spf)
            .filter(|o| rao_offsets.binary_search(o).is_err())
            .take(scheme.effective_trao_subframes() as usize)
            .collect();
        FrameLayout {
            subframes_per_frame: spf,
            rao_offsets,
            trao_offsets,
        }
    }

    pub fn is_rao(&self, subframe: u64) -> bool {
        self.rao_offsets
            .binary_search(&(subframe % self.subframes_per_frame))
            .is_ok()
    }

    pub fn is_trao_eligible(&self, subframe: u64) -> bool {
        self.trao_offsets
            .binary_search(&(subframe % self.subframes_per_frame))
            .is_ok()
    }

    /// Earliest RAO subframe at or after `from`.
    pub fn next_rao(&self, from: u64) -> u64 {
        next_at_offsets(&self.rao_offsets, self.subframes_per_frame, from)
            .expect("rao_offsets is never empty for a validated config")
    }

    /// Earliest TRAO-eligible subframe at or after `from`; None outside the tree scheme.
    pub fn next_trao(&self, from: u64) -> Option<u64> {
        next_at_offsets(&self.trao_offsets, self.subframes_per_frame, from)
    }
}

fn next_at_offsets(offsets: &[u64], spf: u64, from: u64) -> Option<u64> {
    if offsets.is_empty() {
        return None;
    }
    let frame = from / spf;
    let within = from % spf;
    match offsets.iter().find(|&&o| o >= within) {
        Some(&o) => Some(frame * spf + o),
        None => Some((frame + 1) * spf + offsets[0]),
    }
}

/// Handshake offsets in subframes, all relative to the MSG1 subframe t.
///
/// MSG2 arrives after eNodeB processing; the grant points one subframe past
/// the UE's own processing, so MSG3 goes out at t + 2*proc + 1; feedback
/// (MSG4 or Msg4b) follows one more processing delay later. With the default
/// 3 ms processing this is the 0 / 3 / 7 / 10 pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timing {
    pub msg2_offset: u64,
    pub msg2_deadline_offset: u64,
    pub msg3_offset: u64,
    pub feedback_offset: u64,
    /// Give-up deadline (t_CRT) after an unresolved MSG3 exchange.
    pub contention_timeout: u64,
    /// Inclusive upper bound of the backoff draw, in subframes.
    pub backoff_max: u64,
}

impl Timing {
    pub fn derive(sys: &SystemConfig) -> Self {
        let to_sf = |ms: u64| ms / sys.subframe_ms;
        let proc = to_sf(sys.processing_ms);
        Timing {
            msg2_offset: proc,
            msg2_deadline_offset: proc + to_sf(sys.msg2_window_ms),
            msg3_offset: 2 * proc + 1,
            feedback_offset: 3 * proc + 1,
            contention_timeout: to_sf(sys.contention_timer_ms),
            backoff_max: to_sf(sys.backoff_ms),
        }
    }
}

/// Configuration that has passed validation, with derived layout and timing.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    pub sys: SystemConfig,
    pub scheme: SchemeConfig,
    pub layout: FrameLayout,
    pub timing: Timing,
}

impl ValidatedConfig {
    /// Number of preamble groups G; 0 outside the tree scheme.
    pub fn n_groups(&self) -> u16 {
        match self.scheme.split_factor {
            Some(q) if self.scheme.scheme == Scheme::TreeSplit => self.sys.n_preambles / q,
            _ => 0,
        }
    }
}

/// Checks every invariant and reports all violations at once.
pub fn validate_config(
    sys: SystemConfig,
    scheme: SchemeConfig,
) -> Result<ValidatedConfig, InvalidConfig> {
    let mut violations = Vec::new();
    let mut range = |msg: String| violations.push(ConfigError::RangeError(msg));

    if sys.n_preambles < 1 || sys.n_preambles > 64 {
        range(format!("n_preambles {} outside [1, 64]", sys.n_preambles));
    }
    if sys.max_transmissions < 1 {
        range("max_transmissions must be at least 1".into());
    }
    for (name, value) in [
        ("msg2_window_ms", sys.msg2_window_ms),
        ("msg4_timer_ms", sys.msg4_timer_ms),
        ("contention_timer_ms", sys.contention_timer_ms),
        ("backoff_ms", sys.backoff_ms),
        ("processing_ms", sys.processing_ms),
        ("subframe_ms", sys.subframe_ms),
    ] {
        if value == 0 {
            range(format!("{name} must be positive"));
        }
    }
    if !(0.0..=1.0).contains(&sys.p_error) {
        range(format!("p_error {} outside [0, 1]", sys.p_error));
    }
    if sys.subframes_per_frame < 1 {
        range("subframes_per_frame must be at least 1".into());
    }
    for (name, value) in [
        ("bandwidth_rbs", sys.bandwidth_rbs),
        ("rb_bits", sys.rb_bits),
        ("msg2_bits", sys.msg2_bits),
        ("msg4_bits", sys.msg4_bits),
        ("rao_rbs", sys.rao_rbs),
        ("msg3_rbs", sys.msg3_rbs),
    ] {
        if value == 0 {
            range(format!("{name} must be positive"));
        }
    }
    if sys.msg4b_bits != crate::msg4b::MSG4B_TOTAL_BITS {
        range(format!(
            "msg4b_bits {} does not match the field widths ({})",
            sys.msg4b_bits,
            crate::msg4b::MSG4B_TOTAL_BITS
        ));
    }
    if sys.bandwidth_rbs < sys.rao_rbs + sys.msg3_rbs {
        range(format!(
            "bandwidth_rbs {} cannot host an opportunity ({} RBs) plus one MSG3 grant",
            sys.bandwidth_rbs, sys.rao_rbs
        ));
    }

    if scheme.raos_per_frame < 1 {
        range("raos_per_frame must be at least 1".into());
    } else {
        if scheme.raos_per_frame > sys.subframes_per_frame {
            violations.push(ConfigError::LayoutError(format!(
                "{} RAOs per frame exceed {} subframes (at most one RAO per subframe)",
                scheme.raos_per_frame, sys.subframes_per_frame
            )));
        }
        if sys.subframes_per_frame >= 1 && !sys.subframes_per_frame.is_multiple_of(scheme.raos_per_frame) {
            violations.push(ConfigError::DivisibilityError(format!(
                "raos_per_frame {} does not divide subframes_per_frame {} for even placement",
                scheme.raos_per_frame, sys.subframes_per_frame
            )));
        }
    }

    match scheme.scheme {
        Scheme::TreeSplit => {
            match scheme.split_factor {
                None => violations.push(ConfigError::RangeError(
                    "tree scheme requires split_factor".into(),
                )),
                Some(q) if q < 2 => violations.push(ConfigError::RangeError(format!(
                    "split_factor {q} must be at least 2"
                ))),
                Some(q) => {
                    if !sys.n_preambles.is_multiple_of(q) {
                        violations.push(ConfigError::DivisibilityError(format!(
                            "split_factor {} does not divide n_preambles {}",
                            q, sys.n_preambles
                        )));
                    }
                }
            }
            let traos = scheme.effective_trao_subframes();
            if traos < 1 {
                violations.push(ConfigError::RangeError(
                    "trao_subframes_per_frame must be at least 1 for the tree scheme".into(),
                ));
            } else if scheme.raos_per_frame + traos > sys.subframes_per_frame {
                violations.push(ConfigError::LayoutError(format!(
                    "{} RAOs plus {} TRAO subframes exceed the {}-subframe frame",
                    scheme.raos_per_frame, traos, sys.subframes_per_frame
                )));
            }
        }
        Scheme::Baseline | Scheme::Dynamic => {
            if scheme.split_factor.is_some() {
                violations.push(ConfigError::RangeError(
                    "split_factor is only meaningful for the tree scheme".into(),
                ));
            }
            if scheme.trao_subframes_per_frame.is_some() {
                violations.push(ConfigError::RangeError(
                    "trao_subframes_per_frame is only meaningful for the tree scheme".into(),
                ));
            }
        }
    }

    if !violations.is_empty() {
        return Err(InvalidConfig { violations });
    }
    let layout = FrameLayout::build(&sys, &scheme);
    let timing = Timing::derive(&sys);
    Ok(ValidatedConfig {
        sys,
        scheme,
        layout,
        timing,
    })
}

/// Error from the key-value configuration text format.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("config line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

/// Parses the flat `key = value` format. `#` starts a comment; keys are the
/// config field names. Unknown or repeated keys fail fast. Fields not present
/// keep their defaults; `raos_per_frame` defaults per scheme.
pub fn parse_config_str(text: &str) -> Result<(SystemConfig, SchemeConfig), ParseError> {
    let mut seen: Vec<(String, String, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ParseError {
            line: line_no,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(ParseError {
                line: line_no,
                message: format!("unknown key `{key}`"),
            });
        }
        if let Some((_, _, first)) = seen.iter().find(|(k, _, _)| *k == key) {
            return Err(ParseError {
                line: line_no,
                message: format!("key `{key}` already set on line {first}"),
            });
        }
        seen.push((key, value, line_no));
    }

    let lookup = |key: &str| seen.iter().find(|(k, _, _)| k == key).cloned();
    let mut scheme_cfg = match lookup("scheme") {
        None => SchemeConfig::baseline(),
        Some((_, value, line)) => match value.as_str() {
            "baseline" => SchemeConfig::baseline(),
            "dynamic" => SchemeConfig::dynamic(),
            "tree" => SchemeConfig {
                split_factor: None,
                ..SchemeConfig::tree_split(2)
            },
            other => {
                return Err(ParseError {
                    line,
                    message: format!("unknown scheme `{other}` (baseline, dynamic, tree)"),
                })
            }
        },
    };

    let mut sys = SystemConfig::default();
    for (key, value, line) in &seen {
        let parse_err = |detail: String| ParseError {
            line: *line,
            message: format!("key `{key}`: {detail}"),
        };
        macro_rules! num {
            ($ty:ty) => {
                value
                    .parse::<$ty>()
                    .map_err(|e| parse_err(format!("`{value}` is not valid ({e})")))?
            };
        }
        match key.as_str() {
            "scheme" => {}
            "n_preambles" => sys.n_preambles = num!(u16),
            "max_transmissions" => sys.max_transmissions = num!(u32),
            "msg2_window_ms" => sys.msg2_window_ms = num!(u64),
            "msg4_timer_ms" => sys.msg4_timer_ms = num!(u64),
            "contention_timer_ms" => sys.contention_timer_ms = num!(u64),
            "backoff_ms" => sys.backoff_ms = num!(u64),
            "processing_ms" => sys.processing_ms = num!(u64),
            "p_error" => sys.p_error = num!(f64),
            "subframe_ms" => sys.subframe_ms = num!(u64),
            "subframes_per_frame" => sys.subframes_per_frame = num!(u64),
            "bandwidth_rbs" => sys.bandwidth_rbs = num!(u32),
            "rb_bits" => sys.rb_bits = num!(u32),
            "msg2_bits" => sys.msg2_bits = num!(u32),
            "msg4_bits" => sys.msg4_bits = num!(u32),
            "msg4b_bits" => sys.msg4b_bits = num!(u32),
            "rao_rbs" => sys.rao_rbs = num!(u32),
            "msg3_rbs" => sys.msg3_rbs = num!(u32),
            "raos_per_frame" => scheme_cfg.raos_per_frame = num!(u64),
            "split_factor" => scheme_cfg.split_factor = Some(num!(u16)),
            "trao_subframes_per_frame" => {
                scheme_cfg.trao_subframes_per_frame = Some(num!(u64))
            }
            _ => unreachable!("key filtered against KNOWN_KEYS"),
        }
    }

    Ok((sys, scheme_cfg))
}

const KNOWN_KEYS: &[&str] = &[
    "scheme",
    "n_preambles",
    "max_transmissions",
    "msg2_window_ms",
    "msg4_timer_ms",
    "contention_timer_ms",
    "backoff_ms",
    "processing_ms",
    "p_error",
    "subframe_ms",
    "subframes_per_frame",
    "bandwidth_rbs",
    "rb_bits",
    "msg2_bits",
    "msg4_bits",
    "msg4b_bits",
    "rao_rbs",
    "msg3_rbs",
    "raos_per_frame",
    "split_factor",
    "trao_subframes_per_frame",
];
