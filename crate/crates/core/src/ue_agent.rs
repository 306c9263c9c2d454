//! UE side of cell search: receive-beam sweeping, best receive beam
//! selection, narrow-beam measurement, threshold test and feedback.
//!
//! While sweeping, a UE keeps its receive beam until the BS repeats a beam
//! it has already heard on that receive beam, i.e. one full BS pass per
//! receive beam. Under round-robin sweeps this is the classic nested
//! search; inside the contiguous blocks of an allocation sweep it becomes
//! per-slot cycling.

use serde::Serialize;

use crate::antenna::{BeamId, BeamKind};
use crate::bs_agent::FeedbackMessage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum UePhase {
    Sweeping,
    Locked,
    Detected,
}

/// Which decision procedure the UE follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UeMode {
    /// Locks its receive beam after a full rotation with any recorded sample,
    /// then measures narrow beams on that receive beam.
    TwoStage,
    /// Locks only when told at the end of a wide stage (two-stage BS search).
    Iterative,
    /// Never locks; picks the best (BS beam, receive beam) pair jointly.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotInfo {
    pub bs_beam: BeamId,
    pub rx_beam: usize,
    pub global_slot: u64,
}

#[derive(Debug, Clone)]
pub struct UeState {
    pub ue_id: usize,
    pub mode: UeMode,
    pub phase: UePhase,
    pub d_ue: Option<usize>,
    pub best_bs_narrow: Option<(usize, f64)>,
    /// Best narrow-beam SNR heard on the locked receive beam.
    pub measurements: Vec<Option<f64>>,
    /// Best SNR per (BS beam, receive beam) while not locked; wide beams first.
    pairs: Vec<Option<f64>>,
    pub rx_beam_cursor: usize,
    pub rx_beam_offset: usize,
    /// Sector reported after a successful iterative wide stage.
    pub sector: Option<usize>,
    seen_wide: u64,
    seen_narrow: u64,
    n_wide: usize,
    n_rx: usize,
}

impl UeState {
    pub fn new(ue_id: usize, mode: UeMode, n_wide: usize, n_narrow: usize, n_rx: usize, rx_beam_offset: usize) -> Self {
        UeState {
            ue_id,
            mode,
            phase: UePhase::Sweeping,
            d_ue: None,
            best_bs_narrow: None,
            measurements: vec![None; n_narrow],
            pairs: vec![None; (n_wide + n_narrow) * n_rx],
            rx_beam_cursor: 0,
            rx_beam_offset: rx_beam_offset % n_rx,
            sector: None,
            seen_wide: 0,
            seen_narrow: 0,
            n_wide,
            n_rx,
        }
    }

    pub fn is_detected(&self) -> bool {
        self.phase == UePhase::Detected
    }

    /// True once a receive beam has been fixed (or, for joint search, any pair was heard).
    pub fn has_receive_beam(&self) -> bool {
        match self.mode {
            UeMode::Joint => self.d_ue.is_some() || self.best_pair(BeamKind::BsNarrow).is_some(),
            _ => self.d_ue.is_some(),
        }
    }

    fn pair_index(&self, bs: BeamId, rx: usize) -> usize {
        let row = match bs.kind {
            BeamKind::BsWide => bs.index,
            _ => self.n_wide + bs.index,
        };
        row * self.n_rx + rx
    }

    pub fn pair_snr(&self, bs: BeamId, rx: usize) -> Option<f64> {
        self.pairs[self.pair_index(bs, rx)]
    }

    /// Best recorded pair among BS beams of `kind`; ties go to the lowest BS beam, then receive beam.
    pub fn best_pair(&self, kind: BeamKind) -> Option<(BeamId, usize, f64)> {
        let rows = match kind {
            BeamKind::BsWide => 0..self.n_wide,
            _ => self.n_wide..self.pairs.len() / self.n_rx,
        };
        let mut best: Option<(BeamId, usize, f64)> = None;
        for row in rows {
            for rx in 0..self.n_rx {
                if let Some(s) = self.pairs[row * self.n_rx + rx] {
                    if best.is_none_or(|b| s > b.2) {
                        let id = if row < self.n_wide { BeamId::wide(row) } else { BeamId::narrow(row - self.n_wide) };
                        best = Some((id, rx, s));
                    }
                }
            }
        }
        best
    }

    pub fn rx_beam(&self) -> usize {
        self.d_ue.unwrap_or((self.rx_beam_offset + self.rx_beam_cursor) % self.n_rx)
    }

    fn seen(&mut self, bs: BeamId) -> &mut u64 {
        match bs.kind {
            BeamKind::BsWide => &mut self.seen_wide,
            _ => &mut self.seen_narrow,
        }
    }

    /// Receive beam for the next SSB. Advances the sweep when `bs_beam` was
    /// already heard on the current receive beam, and completes a lock
    /// decision at the end of each full rotation.
    pub fn next_rx_beam(&mut self, bs_beam: BeamId) -> usize {
        if self.phase != UePhase::Sweeping {
            return self.rx_beam();
        }
        let bit = 1u64 << bs_beam.index;
        if *self.seen(bs_beam) & bit != 0 {
            self.seen_wide = 0;
            self.seen_narrow = 0;
            self.rx_beam_cursor += 1;
            if self.rx_beam_cursor % self.n_rx == 0 && self.mode == UeMode::TwoStage {
                self.try_lock();
            }
        }
        *self.seen(bs_beam) |= bit;
        self.rx_beam()
    }

    fn try_lock(&mut self) {
        let wide = self.best_pair(BeamKind::BsWide);
        let narrow = self.best_pair(BeamKind::BsNarrow);
        let best = match (wide, narrow) {
            (Some(w), Some(n)) => Some(if n.2 > w.2 { n } else { w }),
            (w, n) => w.or(n),
        };
        if let Some((_, rx, _)) = best {
            self.lock(rx);
        }
    }

    fn lock(&mut self, rx: usize) {
        self.d_ue = Some(rx);
        self.phase = UePhase::Locked;
        // narrow SSBs already heard on this receive beam count as measurements
        for (k, m) in self.measurements.iter_mut().enumerate() {
            let s = self.pairs[(self.n_wide + k) * self.n_rx + rx];
            if s > *m {
                *m = s;
            }
        }
    }

    /// Drops the receive-beam lock so the next wide sweep can pick a new one.
    /// Everything heard so far stays on record for the next lock decision.
    pub fn restart_search(&mut self) {
        if self.phase != UePhase::Locked {
            return;
        }
        if let Some(rx) = self.d_ue.take() {
            for k in 0..self.measurements.len() {
                let i = (self.n_wide + k) * self.n_rx + rx;
                if self.measurements[k] > self.pairs[i] {
                    self.pairs[i] = self.measurements[k];
                }
            }
        }
        self.rx_beam_cursor = 0;
        self.measurements.iter_mut().for_each(|m| *m = None);
        self.phase = UePhase::Sweeping;
        self.seen_wide = 0;
        self.seen_narrow = 0;
    }

    /// Iterative search: fix the receive beam and sector from the best wide pair.
    pub fn end_wide_stage(&mut self) -> Option<usize> {
        if self.phase == UePhase::Sweeping {
            if let Some((bs, rx, _)) = self.best_pair(BeamKind::BsWide) {
                self.sector = Some(bs.index);
                self.lock(rx);
            }
        }
        self.sector
    }

    /// Records one received SSB.
    pub fn on_ssb(&mut self, slot: SlotInfo, snr_db: f64, floor_db: f64) {
        match self.phase {
            UePhase::Detected => {}
            UePhase::Sweeping => {
                if snr_db >= floor_db {
                    let i = self.pair_index(slot.bs_beam, slot.rx_beam);
                    if self.pairs[i].is_none_or(|s| snr_db > s) {
                        self.pairs[i] = Some(snr_db);
                    }
                }
            }
            UePhase::Locked => {
                if slot.bs_beam.kind == BeamKind::BsNarrow && snr_db >= floor_db {
                    let m = &mut self.measurements[slot.bs_beam.index];
                    if m.is_none_or(|s| snr_db > s) {
                        *m = Some(snr_db);
                    }
                }
            }
        }
    }

    /// Feedback this UE would send now, without changing its state.
    pub fn candidate(&self, snr_th_db: f64) -> Option<FeedbackMessage> {
        let (d_bs, d_ue, snr) = match (self.mode, self.phase) {
            (_, UePhase::Detected) => return None,
            (UeMode::Joint, _) => {
                let (bs, rx, s) = self.best_pair(BeamKind::BsNarrow)?;
                (bs.index, rx, s)
            }
            (_, UePhase::Locked) => {
                let mut best: Option<(usize, f64)> = None;
                for (k, m) in self.measurements.iter().enumerate() {
                    if let Some(s) = *m {
                        if best.is_none_or(|b| s > b.1) {
                            best = Some((k, s));
                        }
                    }
                }
                let (k, s) = best?;
                (k, self.d_ue?, s)
            }
            _ => return None,
        };
        (snr >= snr_th_db).then_some(FeedbackMessage { ue_id: self.ue_id, d_bs, d_ue, snr_db: snr })
    }

    pub fn mark_detected(&mut self, msg: &FeedbackMessage) {
        self.d_ue = Some(msg.d_ue);
        self.best_bs_narrow = Some((msg.d_bs, msg.snr_db));
        self.phase = UePhase::Detected;
    }

    /// Threshold test at the feedback window; on success the UE is detected.
    pub fn decide(&mut self, snr_th_db: f64) -> Option<FeedbackMessage> {
        let msg = self.candidate(snr_th_db)?;
        self.mark_detected(&msg);
        Some(msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ue(mode: UeMode) -> UeState {
        UeState::new(7, mode, 4, 16, 4, 0)
    }

    fn feed(ue: &mut UeState, bs: BeamId, snr: impl Fn(usize) -> f64) {
        let rx = ue.next_rx_beam(bs);
        ue.on_ssb(SlotInfo { bs_beam: bs, rx_beam: rx, global_slot: 0 }, snr(rx), 0.0);
    }

    #[test]
    fn locks_on_only_recorded_beam() {
        let mut u = ue(UeMode::TwoStage);
        // one wide beam repeated: each repeat moves to the next receive beam
        for _ in 0..4 {
            feed(&mut u, BeamId::wide(0), |rx| if rx == 2 { 5.0 } else { -10.0 });
        }
        assert_eq!(u.phase, UePhase::Sweeping);
        // the next repeat completes the rotation
        let rx = u.next_rx_beam(BeamId::wide(0));
        assert_eq!(u.phase, UePhase::Locked);
        assert_eq!(u.d_ue, Some(2));
        assert_eq!(rx, 2);
    }

    #[test]
    fn stays_sweeping_without_samples() {
        let mut u = ue(UeMode::TwoStage);
        for _ in 0..9 {
            feed(&mut u, BeamId::wide(1), |_| -3.0);
        }
        assert_eq!(u.phase, UePhase::Sweeping);
        assert_eq!(u.d_ue, None);
        assert_eq!(u.rx_beam_cursor, 8);
    }

    #[test]
    fn dwell_is_one_bs_pass() {
        let mut u = ue(UeMode::TwoStage);
        let mut rxs = Vec::new();
        for s in 0..32 {
            rxs.push(u.next_rx_beam(BeamId::wide(s % 4)));
        }
        let expect: Vec<usize> = (0..32).map(|s| (s / 4) % 4).collect();
        assert_eq!(rxs, expect);
    }

    #[test]
    fn locked_keeps_max_per_narrow_beam() {
        let mut u = ue(UeMode::TwoStage);
        u.lock(1);
        for (b, s) in [(5, 3.0), (6, 9.0), (5, 1.0), (6, 4.0)] {
            feed(&mut u, BeamId::narrow(b), |_| s);
        }
        assert_eq!(u.measurements[5], Some(3.0));
        assert_eq!(u.measurements[6], Some(9.0));
        // wide beams are ignored once locked
        feed(&mut u, BeamId::wide(0), |_| 30.0);
        assert!(u.measurements.iter().all(|m| m.is_none_or(|s| s < 10.0)));
    }

    #[test]
    fn restart_relocks_on_better_beam() {
        let mut u = ue(UeMode::TwoStage);
        u.lock(1);
        feed(&mut u, BeamId::narrow(3), |_| 2.0);
        u.restart_search();
        assert_eq!(u.phase, UePhase::Sweeping);
        assert_eq!(u.pair_snr(BeamId::narrow(3), 1), Some(2.0));
        for _ in 0..4 {
            feed(&mut u, BeamId::wide(2), |rx| if rx == 3 { 6.0 } else { -10.0 });
        }
        u.next_rx_beam(BeamId::wide(2));
        assert_eq!(u.d_ue, Some(3));
        assert_eq!(u.measurements[3], None);

        // a restart with nothing better keeps the old beam and its measurements
        u.restart_search();
        for _ in 0..4 {
            feed(&mut u, BeamId::wide(2), |_| -10.0);
        }
        u.next_rx_beam(BeamId::wide(2));
        assert_eq!(u.d_ue, Some(3));
    }

    #[test]
    fn decide_examples() {
        let mut u = ue(UeMode::TwoStage);
        u.lock(0);
        u.measurements[5] = Some(3.0);
        u.measurements[6] = Some(9.0);
        let m = u.decide(0.0).unwrap();
        assert_eq!((m.ue_id, m.d_bs, m.snr_db), (7, 6, 9.0));
        assert_eq!(u.phase, UePhase::Detected);
        assert!(u.decide(0.0).is_none());

        let mut u = ue(UeMode::TwoStage);
        u.lock(0);
        u.measurements[5] = Some(-3.0);
        assert!(u.decide(0.0).is_none());
        assert_eq!(u.phase, UePhase::Locked);

        let mut u = ue(UeMode::TwoStage);
        u.lock(0);
        assert!(u.decide(0.0).is_none());
    }

    #[test]
    fn ties_go_to_lowest_beam() {
        let mut u = ue(UeMode::TwoStage);
        u.lock(3);
        u.measurements[9] = Some(4.0);
        u.measurements[2] = Some(4.0);
        assert_eq!(u.decide(0.0).unwrap().d_bs, 2);
    }

    #[test]
    fn joint_mode_picks_best_pair() {
        let mut u = ue(UeMode::Joint);
        for b in 0..16 {
            feed(&mut u, BeamId::narrow(b), |rx| if b == 4 && rx == 0 { 6.0 } else { -20.0 });
        }
        assert_eq!(u.phase, UePhase::Sweeping);
        let m = u.decide(0.0).unwrap();
        assert_eq!((m.d_bs, m.d_ue), (4, 0));
        assert_eq!(u.d_ue, Some(0));
    }

    #[test]
    fn iterative_wide_stage_fixes_sector() {
        let mut u = ue(UeMode::Iterative);
        for s in 0..32 {
            feed(&mut u, BeamId::wide(s % 4), |rx| if s % 4 == 2 && rx == 1 { 2.0 } else { -5.0 });
        }
        assert_eq!(u.phase, UePhase::Sweeping);
        assert_eq!(u.end_wide_stage(), Some(2));
        assert_eq!(u.d_ue, Some(1));

        let mut none = ue(UeMode::Iterative);
        assert_eq!(none.end_wide_stage(), None);
        assert_eq!(none.phase, UePhase::Sweeping);
    }

    #[test]
    fn narrow_samples_carry_over_into_lock() {
        let mut u = ue(UeMode::TwoStage);
        for s in 0..80 {
            feed(&mut u, BeamId::narrow(s % 16), |rx| if rx == 3 && s % 16 == 12 { 7.0 } else { -9.0 });
        }
        assert_eq!(u.d_ue, Some(3));
        assert_eq!(u.measurements[12], Some(7.0));
    }

    proptest! {
        #[test]
        fn argmax_is_shift_invariant(snrs in proptest::collection::vec(-10.0f64..20.0, 16), shift in -5.0f64..5.0) {
            let mut a = ue(UeMode::TwoStage);
            let mut b = ue(UeMode::TwoStage);
            a.lock(1);
            b.lock(1);
            for (k, s) in snrs.iter().enumerate() {
                a.on_ssb(SlotInfo { bs_beam: BeamId::narrow(k), rx_beam: 1, global_slot: 0 }, *s, -100.0);
                b.on_ssb(SlotInfo { bs_beam: BeamId::narrow(k), rx_beam: 1, global_slot: 0 }, s + shift, -100.0);
            }
            let ma = a.decide(-100.0).unwrap();
            let mb = b.decide(-100.0).unwrap();
            prop_assert_eq!(ma.d_bs, mb.d_bs);
            prop_assert_eq!(ma.d_ue, mb.d_ue);
        }

        #[test]
        fn detected_is_absorbing(snrs in proptest::collection::vec(-10.0f64..20.0, 1..40)) {
            let mut u = ue(UeMode::TwoStage);
            u.lock(0);
            u.measurements[0] = Some(50.0);
            u.decide(0.0).unwrap();
            for (i, s) in snrs.iter().enumerate() {
                feed(&mut u, BeamId::narrow(i % 16), |_| *s);
                prop_assert_eq!(u.phase, UePhase::Detected);
                prop_assert!(u.decide(-100.0).is_none());
            }
        }
    }
}
