//! SSB slot bookkeeping for numerology 3 (120 kHz SCS, up to 64 SSBs per
//! burst set, one burst set per radio frame).

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::allocator::SsbAllocation;
use crate::antenna::BeamId;
use crate::scenario::MAX_SSB_NUMEROLOGY_3;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("{total} SSBs cannot visit {beams} directions once each")]
    TooFewSsbs { total: u32, beams: usize },
    #[error("infeasible allocation: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepPhase {
    Wide,
    Narrow,
    Feedback,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPlan {
    pub phase: SweepPhase,
    slots: Vec<BeamId>,
}

impl SweepPlan {
    pub fn from_slots(phase: SweepPhase, slots: Vec<BeamId>) -> Self {
        SweepPlan { phase, slots }
    }

    /// Beam transmitted in each SSB slot, in time order.
    pub fn slots(&self) -> &[BeamId] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Run-length view `(beam, consecutive SSBs)` of the slot sequence.
    pub fn entries(&self) -> Vec<(BeamId, u32)> {
        let mut out: Vec<(BeamId, u32)> = Vec::new();
        for &b in &self.slots {
            match out.last_mut() {
                Some((last, n)) if *last == b => *n += 1,
                _ => out.push((b, 1)),
            }
        }
        out
    }

    pub fn counts_per_beam(&self) -> BTreeMap<BeamId, u32> {
        let mut m = BTreeMap::new();
        for &b in &self.slots {
            *m.entry(b).or_insert(0) += 1;
        }
        m
    }
}

/// One SSB per direction in consecutive slots, cycling until `total_ssbs` are used.
pub fn round_robin_plan(phase: SweepPhase, beams: &[BeamId], total_ssbs: u32) -> Result<SweepPlan, PlanError> {
    if beams.is_empty() || (total_ssbs as usize) < beams.len() {
        return Err(PlanError::TooFewSsbs { total: total_ssbs, beams: beams.len() });
    }
    let slots = (0..total_ssbs as usize).map(|s| beams[s % beams.len()]).collect();
    Ok(SweepPlan { phase, slots })
}

/// Narrow sweep for an allocation: directions in descending SSB count (ties by
/// ascending index), each direction's SSBs in one contiguous block.
pub fn allocation_plan(alloc: &SsbAllocation, n_ssb_total: u32) -> Result<SweepPlan, PlanError> {
    alloc
        .check_feasible(n_ssb_total)
        .map_err(|e| PlanError::Infeasible(e.to_string()))?;
    let mut order: Vec<usize> = (0..alloc.counts.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(alloc.counts[i]), i));
    let slots = order
        .into_iter()
        .flat_map(|i| std::iter::repeat_n(BeamId::narrow(i), alloc.counts[i] as usize))
        .collect();
    Ok(SweepPlan { phase: SweepPhase::Narrow, slots })
}

/// Receive window after a narrow sweep: the BS listens once in each narrow direction.
pub fn feedback_plan(narrow: &[BeamId]) -> SweepPlan {
    SweepPlan { phase: SweepPhase::Feedback, slots: narrow.to_vec() }
}

/// Position within the periodic burst-set structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FrameClock {
    pub frame_index: u64,
    pub slot_in_frame: u32,
    pub burst_period_frames: u32,
    n_ssb_total: u32,
}

impl FrameClock {
    pub fn new(n_ssb_total: u32) -> Self {
        assert!(n_ssb_total <= MAX_SSB_NUMEROLOGY_3, "numerology 3 allows at most 64 SSBs");
        FrameClock { frame_index: 0, slot_in_frame: 0, burst_period_frames: 1, n_ssb_total }
    }

    /// Global SSB slot index of the current position.
    pub fn global_slot(&self) -> u64 {
        self.frame_index / self.burst_period_frames as u64 * self.n_ssb_total as u64 + self.slot_in_frame as u64
    }

    /// Consumes one SSB slot.
    pub fn tick(&mut self) {
        assert!(self.slot_in_frame < self.n_ssb_total, "burst set overrun");
        self.slot_in_frame += 1;
    }

    pub fn slots_used(&self) -> u32 {
        self.slot_in_frame
    }

    pub fn next_frame(&mut self) {
        self.frame_index += self.burst_period_frames as u64;
        self.slot_in_frame = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wide4() -> Vec<BeamId> {
        (0..4).map(BeamId::wide).collect()
    }
    fn narrow16() -> Vec<BeamId> {
        (0..16).map(BeamId::narrow).collect()
    }
    fn alloc(counts: Vec<u32>) -> SsbAllocation {
        SsbAllocation { counts, objective: 0.0 }
    }

    #[test]
    fn wide_half_budget() {
        let p = round_robin_plan(SweepPhase::Wide, &wide4(), 32).unwrap();
        assert_eq!(p.len(), 32);
        assert_eq!(&p.slots()[..5], &[BeamId::wide(0), BeamId::wide(1), BeamId::wide(2), BeamId::wide(3), BeamId::wide(0)]);
        assert!(p.counts_per_beam().values().all(|&c| c == 8));
    }

    #[test]
    fn narrow_half_budget() {
        let p = round_robin_plan(SweepPhase::Narrow, &narrow16(), 32).unwrap();
        assert_eq!(p.counts_per_beam().len(), 16);
        assert!(p.counts_per_beam().values().all(|&c| c == 2));
    }

    #[test]
    fn single_pass_and_too_few() {
        let p = round_robin_plan(SweepPhase::Wide, &wide4(), 4).unwrap();
        assert_eq!(p.slots(), wide4().as_slice());
        assert_eq!(
            round_robin_plan(SweepPhase::Wide, &wide4(), 3),
            Err(PlanError::TooFewSsbs { total: 3, beams: 4 })
        );
    }

    #[test]
    fn allocation_blocks_descending() {
        let p = allocation_plan(&alloc(vec![4, 1, 1]), 64).unwrap();
        let n = BeamId::narrow;
        assert_eq!(p.slots(), &[n(0), n(0), n(0), n(0), n(1), n(2)]);

        let mut counts = vec![1; 8];
        counts[3] = 2;
        counts[7] = 5;
        counts[1] = 2;
        let p = allocation_plan(&alloc(counts), 64).unwrap();
        let order: Vec<usize> = p.entries().iter().map(|(b, _)| b.index).collect();
        assert_eq!(&order[..3], &[7, 1, 3]);
        assert_eq!(p.entries()[0], (n(7), 5));
    }

    #[test]
    fn uniform_allocation_in_index_order() {
        let p = allocation_plan(&alloc(vec![4; 16]), 64).unwrap();
        let order: Vec<usize> = p.entries().iter().map(|(b, _)| b.index).collect();
        assert_eq!(order, (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn infeasible_allocation_rejected() {
        let mut c = vec![4; 16];
        c[0] = 5;
        assert!(matches!(allocation_plan(&alloc(c), 64), Err(PlanError::Infeasible(_))));
        assert!(matches!(allocation_plan(&alloc(vec![0, 3]), 64), Err(PlanError::Infeasible(_))));
    }

    #[test]
    fn clock_counts_slots() {
        let mut c = FrameClock::new(64);
        for _ in 0..64 {
            c.tick();
        }
        assert_eq!(c.slots_used(), 64);
        c.next_frame();
        assert_eq!(c.global_slot(), 64);
    }

    #[test]
    #[should_panic(expected = "overrun")]
    fn clock_overrun_panics() {
        let mut c = FrameClock::new(2);
        for _ in 0..3 {
            c.tick();
        }
    }

    proptest! {
        #[test]
        fn round_robin_is_balanced(n in 1usize..=16, extra in 0u32..=48) {
            let beams: Vec<BeamId> = (0..n).map(BeamId::narrow).collect();
            let total = n as u32 + extra;
            let p = round_robin_plan(SweepPhase::Narrow, &beams, total).unwrap();
            let counts = p.counts_per_beam();
            prop_assert_eq!(p.len() as u32, total);
            let max = *counts.values().max().unwrap();
            let min = *counts.values().min().unwrap();
            prop_assert!(max - min <= 1);
            prop_assert_eq!(min, total / n as u32);
        }

        #[test]
        fn allocation_plan_accounts_every_ssb(counts in proptest::collection::vec(1u32..=8, 1..=8)) {
            let a = alloc(counts.clone());
            let p = allocation_plan(&a, 64).unwrap();
            prop_assert_eq!(p.len() as u32, counts.iter().sum::<u32>());
            let entries = p.entries();
            prop_assert_eq!(entries.len(), counts.len());
            for w in entries.windows(2) {
                prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0.index < w[1].0.index));
            }
            for (b, n) in entries {
                prop_assert_eq!(n, counts[b.index]);
            }
        }
    }
}
