use std::collections::{BTreeMap, VecDeque};
use std::mem;

use crate::config::{FrameLayout, Scheme, ValidatedConfig};
use crate::groups::{ContentionGroup, DeviceId, PreambleSet};
use crate::schemes::device::TreeAssignment;

/// One MSG2 grant: every device that activated `preamble` in the opportunity
/// is pointed at the same MSG3 RB, which is why their MSGs3 can collide.
/// `participants` (the devices that actually received MSG2) is simulator-side
/// bookkeeping; the eNodeB itself only knows the preamble was activated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrantRecord {
    pub opportunity_subframe: u64,
    pub preamble: u16,
    pub msg3_subframe: u64,
    pub participants: Vec<DeviceId>,
}

/// What the eNodeB concluded from one MSG3 RB.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotVerdict {
    /// Nothing decodable arrived; the senders (if any) will time out.
    NoReception,
    /// Exactly one MSG3 came through: contention resolved for its sender.
    Resolved { winner: DeviceId },
    /// Two or more MSGs3 clashed in the RB.
    Collision,
}

/// A collided slot waiting for its TRAO assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingCollision {
    pub msg3_subframe: u64,
    pub preamble: u16,
}

#[derive(Debug)]
pub struct EnodebState {
    scheme: Scheme,
    split_factor: u16,
    n_groups: u16,
    bandwidth_rbs: u32,
    rao_rbs: u32,
    msg3_rbs: u32,
    grants: Vec<GrantRecord>,
    /// MSG3 RBs already promised per subframe.
    msg3_used: BTreeMap<u64, u32>,
    pending_groups: VecDeque<PendingCollision>,
    /// subframe -> group index -> contention group awaiting that TRAO.
    trao_schedule: BTreeMap<u64, BTreeMap<u16, ContentionGroup>>,
    /// Next (TRAO subframe, group index) to hand out. Feedback times are
    /// nondecreasing, so assignment never has to look behind this.
    cursor: Option<(u64, u16)>,
    newly_opened: Vec<u64>,
    /// Sticky: flips on the first MSG3 collision (the overload trigger).
    pub overload_mode: bool,
}

impl EnodebState {
    pub fn new(cfg: &ValidatedConfig) -> Self {
        EnodebState {
            scheme: cfg.scheme.scheme,
            split_factor: cfg.scheme.split_factor.unwrap_or(0),
            n_groups: cfg.n_groups(),
            bandwidth_rbs: cfg.sys.bandwidth_rbs,
            rao_rbs: cfg.sys.rao_rbs,
            msg3_rbs: cfg.sys.msg3_rbs,
            grants: Vec::new(),
            msg3_used: BTreeMap::new(),
            pending_groups: VecDeque::new(),
            trao_schedule: BTreeMap::new(),
            cursor: None,
            newly_opened: Vec::new(),
            overload_mode: false,
        }
    }

    pub fn grant(&self, id: usize) -> &GrantRecord {
        &self.grants[id]
    }

    /// RBs left for MSG3 grants in a subframe that may also host an
    /// opportunity. TRAO-eligible subframes are reserved whether or not a
    /// TRAO ends up scheduled there, trading a little capacity for never
    /// having to move a promised grant.
    fn msg3_capacity(&self, layout: &FrameLayout, subframe: u64) -> u32 {
        if layout.is_rao(subframe) || layout.is_trao_eligible(subframe) {
            self.bandwidth_rbs - self.rao_rbs
        } else {
            self.bandwidth_rbs
        }
    }

    /// Issues the MSG2 grant for one detected preamble, reserving an MSG3 RB
    /// in the earliest subframe with room (spilling forward when full).
    pub fn alloc_grant(
        &mut self,
        layout: &FrameLayout,
        opportunity_subframe: u64,
        preamble: u16,
        earliest_msg3: u64,
        participants: Vec<DeviceId>,
    ) -> usize {
        let mut subframe = earliest_msg3;
        loop {
            let used = self.msg3_used.get(&subframe).copied().unwrap_or(0);
            if used + self.msg3_rbs <= self.msg3_capacity(layout, subframe) {
                *self.msg3_used.entry(subframe).or_insert(0) += self.msg3_rbs;
                break;
            }
            subframe += 1;
        }
        self.grants.push(GrantRecord {
            opportunity_subframe,
            preamble,
            msg3_subframe: subframe,
            participants,
        });
        self.grants.len() - 1
    }

    /// Judges one MSG3 RB from the set of MSGs3 that survived the uplink.
    /// Collisions under the tree scheme are queued for TRAO assignment.
    pub fn on_msg3(&mut self, grant_id: usize, delivered: &[DeviceId]) -> SlotVerdict {
        match delivered {
            [] => SlotVerdict::NoReception,
            [winner] => SlotVerdict::Resolved { winner: *winner },
            _ => {
                if self.scheme == Scheme::TreeSplit {
                    self.overload_mode = true;
                    let grant = &self.grants[grant_id];
                    self.pending_groups.push_back(PendingCollision {
                        msg3_subframe: grant.msg3_subframe,
                        preamble: grant.preamble,
                    });
                }
                SlotVerdict::Collision
            }
        }
    }

    /// Drains pending collisions FIFO into (TRAO, group index) slots: each
    /// assignment takes the next free index in the earliest TRAO subframe
    /// at or after `now + 1`, opening further TRAOs as indexes run out.
    pub fn assign_pending(
        &mut self,
        now: u64,
        layout: &FrameLayout,
    ) -> Vec<(PendingCollision, TreeAssignment)> {
        let mut assignments = Vec::new();
        while let Some(pending) = self.pending_groups.pop_front() {
            let (trao_subframe, group_index) = self.take_slot(now + 1, layout);
            let preambles = PreambleSet::group(group_index, self.split_factor);
            self.trao_schedule.entry(trao_subframe).or_default().insert(
                group_index,
                ContentionGroup {
                    group_index,
                    preambles,
                    trao_subframe,
                    members: Vec::new(),
                },
            );
            assignments.push((
                pending,
                TreeAssignment {
                    trao_subframe,
                    group_index,
                    preambles,
                },
            ));
        }
        assignments
    }

    fn take_slot(&mut self, earliest: u64, layout: &FrameLayout) -> (u64, u16) {
        let stale = match self.cursor {
            None => true,
            Some((subframe, _)) => subframe < earliest,
        };
        if stale {
            let subframe = layout
                .next_trao(earliest)
                .expect("tree scheme always has TRAO-eligible subframes");
            self.cursor = Some((subframe, 0));
        }
        let (subframe, index) = self.cursor.expect("cursor was just ensured");
        if index == 0 {
            self.newly_opened.push(subframe);
        }
        self.cursor = if index + 1 == self.n_groups {
            let next = layout
                .next_trao(subframe + 1)
                .expect("tree scheme always has TRAO-eligible subframes");
            Some((next, 0))
        } else {
            Some((subframe, index + 1))
        };
        (subframe, index)
    }

    /// Records that a device accepted its Msg4b and will show up at its TRAO.
    pub fn register_member(&mut self, assignment: &TreeAssignment, device: DeviceId) {
        let group = self
            .trao_schedule
            .get_mut(&assignment.trao_subframe)
            .and_then(|groups| groups.get_mut(&assignment.group_index))
            .expect("assignment was just scheduled");
        group.members.push(device);
    }

    /// TRAO subframes opened since the last call, in opening order.
    pub fn take_opened(&mut self) -> Vec<u64> {
        mem::take(&mut self.newly_opened)
    }

    /// Removes and returns the contention groups scheduled for a TRAO,
    /// ascending by group index.
    pub fn take_trao(&mut self, subframe: u64) -> Vec<ContentionGroup> {
        self.trao_schedule
            .remove(&subframe)
            .map(|groups| groups.into_values().collect())
            .unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{validate_config, SchemeConfig, SystemConfig};

    // 11-subframe frames with one RAO and one TRAO-eligible offset put the
    // first two assignable TRAOs at subframes 11 and 22.
    fn sparse_cfg() -> ValidatedConfig {
        let sys = SystemConfig {
            n_preambles: 4,
            subframes_per_frame: 11,
            ..SystemConfig::default()
        };
        let scheme = SchemeConfig {
            raos_per_frame: 1,
            trao_subframes_per_frame: Some(1),
            ..SchemeConfig::tree_split(2)
        };
        validate_config(sys, scheme).unwrap()
    }

    #[test]
    fn three_collisions_pack_two_traos_fifo() {
        let cfg = sparse_cfg();
        let mut enb = EnodebState::new(&cfg);
        assert_eq!(cfg.layout.trao_offsets, vec![0]);
        for preamble in [0u16, 2, 3] {
            let id = enb.alloc_grant(&cfg.layout, 1, preamble, 8, vec![preamble as u32 * 2]);
            let slot_devices = [preamble as u32 * 2, preamble as u32 * 2 + 1];
            assert_eq!(enb.on_msg3(id, &slot_devices), SlotVerdict::Collision);
        }
        let assignments = enb.assign_pending(10, &cfg.layout);
        let slots: Vec<(u64, u16)> = assignments
            .iter()
            .map(|(_, a)| (a.trao_subframe, a.group_index))
            .collect();
        assert_eq!(slots, vec![(11, 0), (11, 1), (22, 0)]);
        assert_eq!(enb.take_opened(), vec![11, 22]);
        // First TRAO full, second holding the leftover group.
        assert_eq!(enb.take_trao(11).len(), 2);
        assert_eq!(enb.take_trao(22).len(), 1);
        assert!(enb.take_trao(33).is_empty());
        assert!(enb.overload_mode);
    }

    #[test]
    fn later_batches_pick_up_remaining_free_indexes() {
        let cfg = sparse_cfg();
        let mut enb = EnodebState::new(&cfg);
        let id = enb.alloc_grant(&cfg.layout, 1, 0, 8, vec![1, 2]);
        enb.on_msg3(id, &[1, 2]);
        let first = enb.assign_pending(10, &cfg.layout);
        assert_eq!(first[0].1.trao_subframe, 11);
        assert_eq!(first[0].1.group_index, 0);

        // Second batch, still in time for TRAO 11: takes its free index 1.
        let id = enb.alloc_grant(&cfg.layout, 1, 1, 9, vec![3, 4]);
        enb.on_msg3(id, &[3, 4]);
        let second = enb.assign_pending(10, &cfg.layout);
        assert_eq!(second[0].1.trao_subframe, 11);
        assert_eq!(second[0].1.group_index, 1);

        // Third batch arrives too late for 11 and opens 22.
        let id = enb.alloc_grant(&cfg.layout, 12, 2, 19, vec![5, 6]);
        enb.on_msg3(id, &[5, 6]);
        let third = enb.assign_pending(21, &cfg.layout);
        assert_eq!(third[0].1.trao_subframe, 22);
        assert_eq!(third[0].1.group_index, 0);
        assert_eq!(enb.take_opened(), vec![11, 22]);
    }

    #[test]
    fn group_preambles_follow_the_index() {
        let cfg = sparse_cfg();
        let mut enb = EnodebState::new(&cfg);
        let id = enb.alloc_grant(&cfg.layout, 1, 3, 8, vec![7, 8]);
        enb.on_msg3(id, &[7, 8]);
        let id = enb.alloc_grant(&cfg.layout, 1, 0, 8, vec![9, 10]);
        enb.on_msg3(id, &[9, 10]);
        let assignments = enb.assign_pending(10, &cfg.layout);
        assert_eq!(assignments[0].0.preamble, 3);
        assert_eq!(assignments[0].1.preambles, PreambleSet { start: 0, len: 2 });
        assert_eq!(assignments[1].1.preambles, PreambleSet { start: 2, len: 2 });
    }

    #[test]
    fn msg3_verdicts_follow_delivery_count() {
        let cfg = sparse_cfg();
        let mut enb = EnodebState::new(&cfg);
        let id = enb.alloc_grant(&cfg.layout, 1, 2, 8, vec![4, 5]);
        assert_eq!(enb.on_msg3(id, &[]), SlotVerdict::NoReception);
        assert!(!enb.overload_mode);
        // One of two MSGs3 lost: the survivor is a clean resolution.
        assert_eq!(enb.on_msg3(id, &[5]), SlotVerdict::Resolved { winner: 5 });
        assert!(!enb.overload_mode);
        assert_eq!(enb.on_msg3(id, &[4, 5]), SlotVerdict::Collision);
        assert!(enb.overload_mode);
    }

    #[test]
    fn baseline_collisions_are_not_queued() {
        let sys = SystemConfig::default();
        let cfg = validate_config(sys, SchemeConfig::baseline()).unwrap();
        let mut enb = EnodebState::new(&cfg);
        let id = enb.alloc_grant(&cfg.layout, 1, 0, 8, vec![1, 2]);
        assert_eq!(enb.on_msg3(id, &[1, 2]), SlotVerdict::Collision);
        assert!(!enb.overload_mode);
        assert!(enb.assign_pending(10, &cfg.layout).is_empty());
    }

    #[test]
    fn msg3_grants_spill_when_a_subframe_fills() {
        // 7 RBs total, 6 per opportunity: under the tree layout every
        // subframe hosts an opportunity, leaving one MSG3 RB per subframe.
        let sys = SystemConfig {
            bandwidth_rbs: 7,
            n_preambles: 4,
            ..SystemConfig::default()
        };
        let cfg = validate_config(sys, SchemeConfig::tree_split(2)).unwrap();
        let mut enb = EnodebState::new(&cfg);
        let subframes: Vec<u64> = (0..3)
            .map(|p| {
                let id = enb.alloc_grant(&cfg.layout, 1, p, 8, vec![p as u32]);
                enb.grant(id).msg3_subframe
            })
            .collect();
        assert_eq!(subframes, vec![8, 9, 10]);
    }
}
