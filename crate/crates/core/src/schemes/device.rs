use crate::config::ValidatedConfig;
use crate::error::SimError;
use crate::groups::{DeviceId, PreambleSet};
use crate::sim::rng::RngStream;
use crate::sim::script::PreambleScript;

/// What one Msg4b told this device: where to retry and with which preambles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeAssignment {
    pub trao_subframe: u64,
    pub group_index: u16,
    pub preambles: PreambleSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Phase {
    /// Waiting for the next contention opportunity.
    Idle,
    /// MSG1 sent, RAR window open.
    AwaitingMsg2,
    /// MSG2 received, MSG3 sent or pending, waiting for resolution feedback.
    AwaitingMsg4,
    /// Restart drawn; dormant until the backoff expires.
    BackedOff,
    /// Holding a Msg4b assignment for a future TRAO.
    InTree(TreeAssignment),
    Resolved,
    Outage,
}

impl Phase {
    fn name(&self) -> &'static str {
        match self {
            Phase::Idle => "Idle",
            Phase::AwaitingMsg2 => "AwaitingMsg2",
            Phase::AwaitingMsg4 => "AwaitingMsg4",
            Phase::BackedOff => "BackedOff",
            Phase::InTree(_) => "InTree",
            Phase::Resolved => "Resolved",
            Phase::Outage => "Outage",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerKind {
    /// RAR window ran out with no MSG2.
    Msg2Window,
    /// t_CRT ran out with no MSG4/Msg4b.
    ContentionResolution,
    /// Backoff delay elapsed.
    Backoff,
}

/// Everything the event loop can deliver to a device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stimulus {
    /// A contention opportunity this device may transmit in; `pool` is the
    /// full preamble space at a RAO or the assigned group at a TRAO.
    RaoAvailable { subframe: u64, pool: PreambleSet },
    Msg2 { subframe: u64 },
    /// Resolution; by convention carries the MSG3 reception subframe.
    Msg4 { subframe: u64 },
    Msg4b {
        subframe: u64,
        assignment: TreeAssignment,
    },
    Timer { kind: TimerKind, subframe: u64 },
}

impl Stimulus {
    fn name(&self) -> &'static str {
        match self {
            Stimulus::RaoAvailable { .. } => "RaoAvailable",
            Stimulus::Msg2 { .. } => "Msg2",
            Stimulus::Msg4 { .. } => "Msg4",
            Stimulus::Msg4b { .. } => "Msg4b",
            Stimulus::Timer {
                kind: TimerKind::Msg2Window,
                ..
            } => "Timer(Msg2Window)",
            Stimulus::Timer {
                kind: TimerKind::ContentionResolution,
                ..
            } => "Timer(ContentionResolution)",
            Stimulus::Timer {
                kind: TimerKind::Backoff,
                ..
            } => "Timer(Backoff)",
        }
    }
}

/// Side effects of one transition, for the event loop to act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepOutput {
    /// MSG1 goes out this subframe with this preamble.
    pub msg1_preamble: Option<u16>,
    /// Device re-enters contention at the first RAO at or after this subframe.
    pub backoff_until: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState {
    pub id: DeviceId,
    pub phase: Phase,
    pub tx_count: u32,
    pub activation_subframe: u64,
    pub last_msg1_subframe: Option<u64>,
    pub resolution_subframe: Option<u64>,
    pub outage_subframe: Option<u64>,
    pub chosen_preamble: Option<u16>,
}

impl DeviceState {
    pub fn new(id: DeviceId, activation_subframe: u64) -> Self {
        DeviceState {
            id,
            phase: Phase::Idle,
            tx_count: 0,
            activation_subframe,
            last_msg1_subframe: None,
            resolution_subframe: None,
            outage_subframe: None,
            chosen_preamble: None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.phase, Phase::Resolved | Phase::Outage)
    }

    fn illegal(&self, stimulus: &Stimulus) -> SimError {
        SimError::IllegalTransition {
            device: self.id,
            phase: self.phase.name(),
            stimulus: stimulus.name(),
        }
    }

    /// Applies one stimulus. The loss channel lives in the event loop; by the
    /// time a stimulus arrives here it has already survived its loss draw.
    pub fn step(
        &mut self,
        stimulus: Stimulus,
        cfg: &ValidatedConfig,
        rng: &mut RngStream,
        script: Option<&PreambleScript>,
    ) -> Result<StepOutput, SimError> {
        match stimulus {
            Stimulus::RaoAvailable { subframe, pool } => {
                match &self.phase {
                    Phase::Idle => {}
                    Phase::InTree(assignment) => {
                        // The engine must only wake an in-tree device at its
                        // own TRAO with its own group.
                        if assignment.trao_subframe != subframe || assignment.preambles != pool {
                            return Err(self.illegal(&stimulus));
                        }
                    }
                    _ => return Err(self.illegal(&stimulus)),
                }
                debug_assert!(self.tx_count < cfg.sys.max_transmissions);
                let attempt = self.tx_count + 1;
                let preamble = match script.and_then(|s| s.choose(self.id, attempt, &pool)) {
                    Some(choice) => choice?,
                    None => rng.preamble_from(&pool)?,
                };
                self.tx_count = attempt;
                self.last_msg1_subframe = Some(subframe);
                self.chosen_preamble = Some(preamble);
                self.phase = Phase::AwaitingMsg2;
                Ok(StepOutput {
                    msg1_preamble: Some(preamble),
                    backoff_until: None,
                })
            }
            Stimulus::Msg2 { .. } => {
                if self.phase != Phase::AwaitingMsg2 {
                    return Err(self.illegal(&stimulus));
                }
                self.phase = Phase::AwaitingMsg4;
                Ok(StepOutput::default())
            }
            Stimulus::Msg4 { subframe } => {
                if self.phase != Phase::AwaitingMsg4 {
                    return Err(self.illegal(&stimulus));
                }
                self.phase = Phase::Resolved;
                self.resolution_subframe = Some(subframe);
                Ok(StepOutput::default())
            }
            Stimulus::Msg4b {
                subframe,
                assignment,
            } => {
                if self.phase != Phase::AwaitingMsg4 {
                    return Err(self.illegal(&stimulus));
                }
                if self.tx_count >= cfg.sys.max_transmissions {
                    self.phase = Phase::Outage;
                    self.outage_subframe = Some(subframe);
                } else {
                    self.phase = Phase::InTree(assignment);
                }
                Ok(StepOutput::default())
            }
            Stimulus::Timer { kind, subframe } => match (kind, &self.phase) {
                (TimerKind::Msg2Window, Phase::AwaitingMsg2)
                | (TimerKind::ContentionResolution, Phase::AwaitingMsg4) => {
                    Ok(self.restart_or_outage(subframe, cfg, rng))
                }
                (TimerKind::Backoff, Phase::BackedOff) => {
                    self.phase = Phase::Idle;
                    Ok(StepOutput::default())
                }
                _ => Err(self.illegal(&stimulus)),
            },
        }
    }

    fn restart_or_outage(
        &mut self,
        subframe: u64,
        cfg: &ValidatedConfig,
        rng: &mut RngStream,
    ) -> StepOutput {
        if self.tx_count >= cfg.sys.max_transmissions {
            self.phase = Phase::Outage;
            self.outage_subframe = Some(subframe);
            return StepOutput::default();
        }
        self.phase = Phase::BackedOff;
        StepOutput {
            msg1_preamble: None,
            backoff_until: Some(subframe + rng.backoff(cfg.timing.backoff_max)),
        }
    }
}
