pub mod queue;
pub mod rng;
pub mod script;

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};
use std::mem;

use crate::config::ValidatedConfig;
use crate::error::SimError;
use crate::groups::{DeviceId, PreambleSet};
use crate::schemes::device::{DeviceState, Phase, StepOutput, Stimulus, TimerKind};
use crate::schemes::enodeb::{EnodebState, SlotVerdict};
use queue::EventQueue;
use rng::RngStream;
use script::PreambleScript;

/// Subframe bound past which a run is declared non-terminating.
pub const DEFAULT_HORIZON: u64 = 10_000_000;

/// One device's final tally after its run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceOutcome {
    pub tx_count: u32,
    pub activation_subframe: u64,
    /// Subframe of the MSG3 the eNodeB received without collision, if any.
    pub resolution_subframe: Option<u64>,
    /// Subframe the device gave up in, if it exhausted its MSG1 budget.
    pub outage_subframe: Option<u64>,
}

/// Everything one simulation run produced, enough to derive every metric.
/// Identical configurations and seeds yield identical traces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunTrace {
    /// Hash of the generating configuration plus device count, used to keep
    /// runs from different setups out of the same pool.
    pub fingerprint: u64,
    pub devices: Vec<DeviceOutcome>,
    /// Downlink control bits per subframe (MSG2, MSG4 and Msg4b), bundled
    /// into RBs per subframe only at metrics time.
    pub dl_bits: BTreeMap<u64, u64>,
    /// RAO subframes in which at least one MSG1 was transmitted.
    pub raos_used: BTreeSet<u64>,
    /// TRAO subframes the eNodeB scheduled, whether or not anyone showed up.
    pub traos_scheduled: BTreeSet<u64>,
    /// MSG2 grants issued (each reserves one MSG3 allocation).
    pub msg3_grants: u64,
}

/// Stable digest of (system, scheme, device count) for pooling checks.
pub fn config_fingerprint(cfg: &ValidatedConfig, n_devices: u32) -> u64 {
    let mut h = DefaultHasher::new();
    let sys = &cfg.sys;
    sys.n_preambles.hash(&mut h);
    sys.max_transmissions.hash(&mut h);
    sys.msg2_window_ms.hash(&mut h);
    sys.msg4_timer_ms.hash(&mut h);
    sys.contention_timer_ms.hash(&mut h);
    sys.backoff_ms.hash(&mut h);
    sys.processing_ms.hash(&mut h);
    sys.p_error.to_bits().hash(&mut h);
    sys.subframe_ms.hash(&mut h);
    sys.subframes_per_frame.hash(&mut h);
    sys.bandwidth_rbs.hash(&mut h);
    sys.rb_bits.hash(&mut h);
    sys.msg2_bits.hash(&mut h);
    sys.msg4_bits.hash(&mut h);
    sys.msg4b_bits.hash(&mut h);
    sys.rao_rbs.hash(&mut h);
    sys.msg3_rbs.hash(&mut h);
    cfg.scheme.scheme.hash(&mut h);
    cfg.scheme.raos_per_frame.hash(&mut h);
    cfg.scheme.split_factor.hash(&mut h);
    cfg.scheme.trao_subframes_per_frame.hash(&mut h);
    n_devices.hash(&mut h);
    h.finish()
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Event {
    DeviceActivation(DeviceId),
    /// Perpetual: each occurrence schedules the next while devices are active.
    RaoOccurs,
    TraoOccurs(u64),
    Msg2Deadline(DeviceId),
    /// MSG3 reception for one grant, at the granted subframe.
    Msg3Tx(usize),
    /// t_CRT expiry, anchored to the MSG1 subframe that armed it so that a
    /// device which moved on (new attempt, tree assignment) ignores it.
    Msg4Deadline(DeviceId, u64),
    BackoffExpires(DeviceId),
}

struct Engine<'a> {
    cfg: &'a ValidatedConfig,
    script: Option<&'a PreambleScript>,
    horizon: u64,
    queue: EventQueue<Event>,
    rng: RngStream,
    devices: Vec<DeviceState>,
    /// Idle devices waiting for the next RAO, woken in ID order.
    ready: BTreeSet<DeviceId>,
    enodeb: EnodebState,
    active: usize,
    dl_bits: BTreeMap<u64, u64>,
    raos_used: BTreeSet<u64>,
    traos_scheduled: BTreeSet<u64>,
    msg3_grants: u64,
}

impl<'a> Engine<'a> {
    fn new(
        cfg: &'a ValidatedConfig,
        n_devices: u32,
        seed: u64,
        horizon: u64,
        script: Option<&'a PreambleScript>,
    ) -> Self {
        let mut queue = EventQueue::new();
        for device in 0..n_devices {
            queue.push(0, Event::DeviceActivation(device));
        }
        queue.push(cfg.layout.next_rao(0), Event::RaoOccurs);
        Engine {
            cfg,
            script,
            horizon,
            queue,
            rng: RngStream::new(seed),
            devices: (0..n_devices).map(|d| DeviceState::new(d, 0)).collect(),
            ready: BTreeSet::new(),
            enodeb: EnodebState::new(cfg),
            active: n_devices as usize,
            dl_bits: BTreeMap::new(),
            raos_used: BTreeSet::new(),
            traos_scheduled: BTreeSet::new(),
            msg3_grants: 0,
        }
    }

    fn run(mut self) -> Result<RunTrace, SimError> {
        while self.active > 0 {
            let (subframe, event) = self
                .queue
                .pop()
                .expect("the RAO chain keeps the queue nonempty while devices are active");
            if subframe > self.horizon {
                return Err(SimError::NonTermination {
                    horizon: self.horizon,
                    active: self.active,
                });
            }
            self.handle(subframe, event)?;
        }
        Ok(self.into_trace())
    }

    fn handle(&mut self, subframe: u64, event: Event) -> Result<(), SimError> {
        match event {
            Event::DeviceActivation(device) => {
                self.ready.insert(device);
            }
            Event::RaoOccurs => self.handle_rao(subframe)?,
            Event::TraoOccurs(trao_subframe) => {
                debug_assert_eq!(trao_subframe, subframe);
                self.handle_trao(subframe)?;
            }
            Event::Msg2Deadline(device) => {
                // Only armed for devices whose MSG2 never arrived, so the
                // device is still in the RAR window by construction.
                self.deliver(
                    device,
                    Stimulus::Timer {
                        kind: TimerKind::Msg2Window,
                        subframe,
                    },
                )?;
            }
            Event::Msg4Deadline(device, anchor) => {
                let dev = &self.devices[device as usize];
                if dev.phase == Phase::AwaitingMsg4 && dev.last_msg1_subframe == Some(anchor) {
                    self.deliver(
                        device,
                        Stimulus::Timer {
                            kind: TimerKind::ContentionResolution,
                            subframe,
                        },
                    )?;
                }
            }
            Event::Msg3Tx(grant_id) => self.handle_msg3(subframe, grant_id)?,
            Event::BackoffExpires(device) => {
                self.deliver(
                    device,
                    Stimulus::Timer {
                        kind: TimerKind::Backoff,
                        subframe,
                    },
                )?;
                self.ready.insert(device);
            }
        }
        Ok(())
    }

    /// Steps one device and applies the side effects the loop owns.
    fn deliver(&mut self, device: DeviceId, stimulus: Stimulus) -> Result<StepOutput, SimError> {
        let Engine {
            cfg,
            script,
            queue,
            rng,
            devices,
            active,
            ..
        } = self;
        let dev = &mut devices[device as usize];
        debug_assert!(!dev.is_terminal());
        let out = dev.step(stimulus, cfg, rng, *script)?;
        if dev.is_terminal() {
            *active -= 1;
        }
        if let Some(until) = out.backoff_until {
            queue.push(until, Event::BackoffExpires(device));
        }
        Ok(out)
    }

    fn handle_rao(&mut self, subframe: u64) -> Result<(), SimError> {
        let pool = PreambleSet::all(self.cfg.sys.n_preambles);
        let ready = mem::take(&mut self.ready);
        let mut by_preamble: BTreeMap<u16, Vec<DeviceId>> = BTreeMap::new();
        for device in ready {
            let out = self.deliver(device, Stimulus::RaoAvailable { subframe, pool })?;
            let preamble = out
                .msg1_preamble
                .expect("a contention transmission always picks a preamble");
            by_preamble.entry(preamble).or_default().push(device);
        }
        if !by_preamble.is_empty() {
            self.raos_used.insert(subframe);
        }
        self.resolve_slots(subframe, by_preamble)?;
        let next = self.cfg.layout.next_rao(subframe + 1);
        self.queue.push(next, Event::RaoOccurs);
        Ok(())
    }

    fn handle_trao(&mut self, subframe: u64) -> Result<(), SimError> {
        let mut by_preamble: BTreeMap<u16, Vec<DeviceId>> = BTreeMap::new();
        for group in self.enodeb.take_trao(subframe) {
            // Members are exactly the devices that acknowledged this Msg4b,
            // so they are all still in the tree and pointed here.
            for device in group.members {
                let out = self.deliver(
                    device,
                    Stimulus::RaoAvailable {
                        subframe,
                        pool: group.preambles,
                    },
                )?;
                let preamble = out
                    .msg1_preamble
                    .expect("a contention transmission always picks a preamble");
                by_preamble.entry(preamble).or_default().push(device);
            }
        }
        self.resolve_slots(subframe, by_preamble)
    }

    /// Runs the MSG1 detection and MSG2 grant stage for every activated
    /// preamble of one opportunity, ascending by preamble ID.
    fn resolve_slots(
        &mut self,
        subframe: u64,
        by_preamble: BTreeMap<u16, Vec<DeviceId>>,
    ) -> Result<(), SimError> {
        let timing = self.cfg.timing;
        let p_error = self.cfg.sys.p_error;
        for (preamble, senders) in by_preamble {
            // The eNodeB detects activation energy, not senders: one MSG1
            // surviving the uplink is enough, and overlaps are invisible.
            let mut detected = false;
            for _ in &senders {
                if !self.rng.lost(p_error) {
                    detected = true;
                }
            }
            if !detected {
                for &device in &senders {
                    self.queue.push(
                        subframe + timing.msg2_deadline_offset,
                        Event::Msg2Deadline(device),
                    );
                }
                continue;
            }
            self.add_dl(subframe + timing.msg2_offset, self.cfg.sys.msg2_bits);
            let mut receivers = Vec::new();
            for &device in &senders {
                if self.rng.lost(p_error) {
                    self.queue.push(
                        subframe + timing.msg2_deadline_offset,
                        Event::Msg2Deadline(device),
                    );
                } else {
                    receivers.push(device);
                }
            }
            // The grant is issued on detection alone; the reserved MSG3
            // allocation is spent even if every addressee missed MSG2.
            let has_receivers = !receivers.is_empty();
            let grant_id = self.enodeb.alloc_grant(
                &self.cfg.layout,
                subframe,
                preamble,
                subframe + timing.msg3_offset,
                receivers.clone(),
            );
            self.msg3_grants += 1;
            let msg3_subframe = self.enodeb.grant(grant_id).msg3_subframe;
            for &device in &receivers {
                self.deliver(
                    device,
                    Stimulus::Msg2 {
                        subframe: subframe + timing.msg2_offset,
                    },
                )?;
                self.queue.push(
                    subframe + timing.contention_timeout,
                    Event::Msg4Deadline(device, subframe),
                );
            }
            if has_receivers {
                self.queue.push(msg3_subframe, Event::Msg3Tx(grant_id));
            }
        }
        Ok(())
    }

    fn handle_msg3(&mut self, subframe: u64, grant_id: usize) -> Result<(), SimError> {
        let grant = self.enodeb.grant(grant_id).clone();
        // A participant that already gave up (its t_CRT beat a spilled MSG3
        // grant) neither transmits nor listens for the slot's feedback.
        let live: Vec<DeviceId> = grant
            .participants
            .iter()
            .copied()
            .filter(|&d| {
                let dev = &self.devices[d as usize];
                dev.phase == Phase::AwaitingMsg4
                    && dev.last_msg1_subframe == Some(grant.opportunity_subframe)
            })
            .collect();
        let p_error = self.cfg.sys.p_error;
        let mut delivered = Vec::new();
        for &device in &live {
            if !self.rng.lost(p_error) {
                delivered.push(device);
            }
        }
        let proc = self.cfg.timing.feedback_offset - self.cfg.timing.msg3_offset;
        match self.enodeb.on_msg3(grant_id, &delivered) {
            SlotVerdict::NoReception => {}
            SlotVerdict::Resolved { winner } => {
                self.deliver(winner, Stimulus::Msg4 { subframe })?;
                self.add_dl(subframe + proc, self.cfg.sys.msg4_bits);
            }
            SlotVerdict::Collision => {
                // Tree scheme: the eNodeB queued this slot; assignment happens
                // now so the Msg4b can point at a concrete TRAO. The Msg4b is
                // addressed to the slot, so every live participant (including
                // those whose MSG3 was lost) draws its own reception.
                let feedback_subframe = subframe + proc;
                let assignments = self.enodeb.assign_pending(feedback_subframe, &self.cfg.layout);
                for (_, assignment) in assignments {
                    self.add_dl(feedback_subframe, self.cfg.sys.msg4b_bits);
                    for &device in &live {
                        if self.rng.lost(p_error) {
                            continue;
                        }
                        self.deliver(
                            device,
                            Stimulus::Msg4b {
                                subframe: feedback_subframe,
                                assignment,
                            },
                        )?;
                        if matches!(self.devices[device as usize].phase, Phase::InTree(_)) {
                            self.enodeb.register_member(&assignment, device);
                        }
                    }
                }
                for opened in self.enodeb.take_opened() {
                    self.traos_scheduled.insert(opened);
                    self.queue.push(opened, Event::TraoOccurs(opened));
                }
            }
        }
        Ok(())
    }

    fn add_dl(&mut self, subframe: u64, bits: u32) {
        *self.dl_bits.entry(subframe).or_insert(0) += bits as u64;
    }

    fn into_trace(self) -> RunTrace {
        RunTrace {
            fingerprint: config_fingerprint(self.cfg, self.devices.len() as u32),
            devices: self
                .devices
                .into_iter()
                .map(|d| DeviceOutcome {
                    tx_count: d.tx_count,
                    activation_subframe: d.activation_subframe,
                    resolution_subframe: d.resolution_subframe,
                    outage_subframe: d.outage_subframe,
                })
                .collect(),
            dl_bits: self.dl_bits,
            raos_used: self.raos_used,
            traos_scheduled: self.traos_scheduled,
            msg3_grants: self.msg3_grants,
        }
    }
}

/// Simulates `n_devices` synchronous activations under the given
/// configuration until every device is resolved or in outage.
pub fn run_scenario(
    cfg: &ValidatedConfig,
    n_devices: u32,
    seed: u64,
) -> Result<RunTrace, SimError> {
    run_scenario_with(cfg, n_devices, seed, DEFAULT_HORIZON, None)
}

/// `run_scenario` with an explicit horizon and optional preamble script.
pub fn run_scenario_with(
    cfg: &ValidatedConfig,
    n_devices: u32,
    seed: u64,
    horizon: u64,
    script: Option<&PreambleScript>,
) -> Result<RunTrace, SimError> {
    Engine::new(cfg, n_devices, seed, horizon, script).run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{validate_config, SchemeConfig, SystemConfig};

    fn lossless() -> SystemConfig {
        SystemConfig {
            p_error: 0.0,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn lone_baseline_device_resolves_at_the_first_opportunity() {
        let cfg = validate_config(lossless(), SchemeConfig::baseline()).unwrap();
        let trace = run_scenario(&cfg, 1, 42).unwrap();
        let dev = &trace.devices[0];
        assert_eq!(dev.tx_count, 1);
        // RAO at subframe 1, MSG3 seven subframes later.
        assert_eq!(dev.resolution_subframe, Some(8));
        assert_eq!(dev.outage_subframe, None);
        assert_eq!(trace.raos_used.iter().copied().collect::<Vec<_>>(), vec![1]);
        assert!(trace.traos_scheduled.is_empty());
        assert_eq!(trace.msg3_grants, 1);
        // MSG2 three subframes after MSG1, MSG4 three after MSG3.
        let dl: Vec<(u64, u64)> = trace.dl_bits.into_iter().collect();
        assert_eq!(dl, vec![(4, 56), (11, 20)]);
    }

    #[test]
    fn dynamic_scheme_starts_one_subframe_earlier() {
        let cfg = validate_config(lossless(), SchemeConfig::dynamic()).unwrap();
        let trace = run_scenario(&cfg, 1, 42).unwrap();
        assert_eq!(trace.devices[0].resolution_subframe, Some(7));
    }

    #[test]
    fn scripted_pair_splits_once_and_resolves_at_the_trao() {
        let cfg = validate_config(lossless(), SchemeConfig::tree_split(2)).unwrap();
        let mut script = PreambleScript::new();
        script.set_absolute(0, 1, 0).set_absolute(0, 2, 0);
        script.set_absolute(1, 1, 0).set_absolute(1, 2, 1);
        let trace = run_scenario_with(&cfg, 2, 1, DEFAULT_HORIZON, Some(&script)).unwrap();
        for dev in &trace.devices {
            assert_eq!(dev.tx_count, 2);
            // Collision feedback at 11 books the TRAO at 12; the retry's
            // MSG3 lands at 19.
            assert_eq!(dev.resolution_subframe, Some(19));
        }
        assert_eq!(
            trace.traos_scheduled.iter().copied().collect::<Vec<_>>(),
            vec![12]
        );
        assert_eq!(trace.msg3_grants, 3);
        let dl: Vec<(u64, u64)> = trace.dl_bits.into_iter().collect();
        assert_eq!(dl, vec![(4, 56), (11, 25), (15, 112), (22, 40)]);
    }

    #[test]
    fn persistent_colliders_walk_the_tree_to_outage() {
        let cfg = validate_config(lossless(), SchemeConfig::tree_split(2)).unwrap();
        let mut script = PreambleScript::new();
        for device in 0..2 {
            for attempt in 1..=10 {
                script.set_nth(device, attempt, 0);
            }
        }
        let trace = run_scenario_with(&cfg, 2, 1, DEFAULT_HORIZON, Some(&script)).unwrap();
        for dev in &trace.devices {
            assert_eq!(dev.tx_count, 10);
            assert_eq!(dev.resolution_subframe, None);
            // Each feedback books the next eligible subframe, normally 11
            // later but 12 when the target lands on an RAO (56, 101): the
            // attempts run 1, 12, ..., 90, 102, and the tenth Msg4b at
            // 102 + 10 exhausts the budget. Along the way every stale
            // t_CRT deadline must fire without effect.
            assert_eq!(dev.outage_subframe, Some(112));
        }
        // Nine TRAOs were retried in plus a final ghost: the eNodeB cannot
        // know the last collision's devices were out of budget.
        assert_eq!(trace.traos_scheduled.len(), 10);
        assert_eq!(trace.msg3_grants, 10);
    }

    #[test]
    fn total_loss_ends_in_outage_after_the_budget() {
        let sys = SystemConfig {
            p_error: 1.0,
            ..SystemConfig::default()
        };
        let cfg = validate_config(sys, SchemeConfig::tree_split(2)).unwrap();
        let trace = run_scenario(&cfg, 1, 9).unwrap();
        let dev = &trace.devices[0];
        assert_eq!(dev.tx_count, 10);
        assert_eq!(dev.resolution_subframe, None);
        assert!(dev.outage_subframe.is_some());
        // Nothing was ever detected: no grants, no downlink.
        assert_eq!(trace.msg3_grants, 0);
        assert!(trace.dl_bits.is_empty());
        assert!(trace.traos_scheduled.is_empty());
        assert_eq!(trace.raos_used.len(), 10);
    }

    #[test]
    fn no_devices_is_an_empty_trace() {
        let cfg = validate_config(lossless(), SchemeConfig::baseline()).unwrap();
        let trace = run_scenario(&cfg, 0, 0).unwrap();
        assert!(trace.devices.is_empty());
        assert!(trace.dl_bits.is_empty());
        assert_eq!(trace.msg3_grants, 0);
    }

    #[test]
    fn horizon_overrun_reports_non_termination() {
        let cfg = validate_config(lossless(), SchemeConfig::baseline()).unwrap();
        let err = run_scenario_with(&cfg, 1, 0, 3, None).unwrap_err();
        assert_eq!(
            err,
            SimError::NonTermination {
                horizon: 3,
                active: 1
            }
        );
    }

    #[test]
    fn traces_reproduce_per_seed() {
        let cfg = validate_config(SystemConfig::default(), SchemeConfig::tree_split(2)).unwrap();
        let a = run_scenario(&cfg, 50, 7).unwrap();
        let b = run_scenario(&cfg, 50, 7).unwrap();
        assert_eq!(a, b);
        let c = run_scenario(&cfg, 50, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn every_device_ends_resolved_or_in_outage() {
        let sys = SystemConfig {
            p_error: 0.05,
            ..SystemConfig::default()
        };
        let cfg = validate_config(sys, SchemeConfig::tree_split(6)).unwrap();
        let trace = run_scenario(&cfg, 40, 3).unwrap();
        for dev in &trace.devices {
            assert!(dev.resolution_subframe.is_some() ^ dev.outage_subframe.is_some());
            assert!((1..=10).contains(&dev.tx_count));
            if let Some(sf) = dev.resolution_subframe {
                assert!(sf >= 8, "resolution before the first possible MSG3");
            }
        }
    }

    #[test]
    fn fingerprints_separate_configurations() {
        let a = validate_config(SystemConfig::default(), SchemeConfig::tree_split(2)).unwrap();
        let b = validate_config(SystemConfig::default(), SchemeConfig::tree_split(6)).unwrap();
        assert_ne!(config_fingerprint(&a, 10), config_fingerprint(&b, 10));
        assert_ne!(config_fingerprint(&a, 10), config_fingerprint(&a, 11));
        assert_eq!(config_fingerprint(&a, 10), config_fingerprint(&a, 10));
    }
}
