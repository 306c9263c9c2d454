//! BS side of cell search: feedback counting per narrow direction, the
//! cumulative detection ratio, the restart/optimize gate, and installing a
//! new allocation.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::allocator::{AllocError, SsbAllocation};
use crate::frame_timing::{allocation_plan, PlanError, SweepPlan};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Error, PartialEq)]
pub enum BsError {
    #[error("detection ratio needs at least two completed sweep cycles, have {0}")]
    TooEarly(usize),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeedbackMessage {
    pub ue_id: usize,
    /// Best BS narrow beam seen by the UE.
    pub d_bs: usize,
    /// Receive beam the UE used for it.
    pub d_ue: usize,
    pub snr_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GateDecision {
    RestartWide,
    ProceedOptimize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BsState {
    /// Detected UEs per narrow direction, cumulative over the trial.
    pub n_ue_per_dir: Vec<u32>,
    /// SSBs sent per narrow direction in the latest narrow sweep.
    pub n_ssb_per_dir: Vec<u32>,
    /// Cumulative detected count after each completed cycle.
    pub n_ue_total_history: Vec<usize>,
    pub current_allocation: Option<SsbAllocation>,
    pub detected_ues: BTreeSet<usize>,
}

impl BsState {
    pub fn new(d_bs_nb: usize) -> Self {
        BsState {
            n_ue_per_dir: vec![0; d_bs_nb],
            n_ssb_per_dir: vec![0; d_bs_nb],
            n_ue_total_history: Vec::new(),
            current_allocation: None,
            detected_ues: BTreeSet::new(),
        }
    }

    /// Completed sweep cycles.
    pub fn cycle_index(&self) -> usize {
        self.n_ue_total_history.len()
    }

    pub fn n_ue_total(&self) -> usize {
        self.detected_ues.len()
    }

    /// Counts newly detected UEs and closes the current cycle.
    pub fn collect_feedback(&mut self, messages: &[FeedbackMessage]) {
        for m in messages {
            if self.detected_ues.insert(m.ue_id) {
                self.n_ue_per_dir[m.d_bs] += 1;
            }
        }
        self.n_ue_total_history.push(self.detected_ues.len());
    }

    /// `ρ_k = n_total,k / n_total,k-1`; infinite when the previous total was
    /// zero and there are new detections, 1 when both are zero.
    pub fn detection_ratio(&self) -> Result<f64, BsError> {
        let h = &self.n_ue_total_history;
        if h.len() < 2 {
            return Err(BsError::TooEarly(h.len()));
        }
        let (prev, cur) = (h[h.len() - 2], h[h.len() - 1]);
        Ok(match (prev, cur) {
            (0, 0) => 1.0,
            (0, _) => f64::INFINITY,
            _ => cur as f64 / prev as f64,
        })
    }

    pub fn gate(&self, cfg: &ScenarioConfig) -> GateDecision {
        if self.cycle_index() < 2 {
            return GateDecision::ProceedOptimize;
        }
        let rho = self.detection_ratio().expect("two cycles completed");
        gate_on_ratio(rho, cfg.rho_th, cfg.invert_gate)
    }

    /// Records the SSB counts of a round-robin narrow sweep.
    pub fn set_round_robin_counts(&mut self, counts: Vec<u32>) {
        self.n_ssb_per_dir = counts;
        self.current_allocation = None;
    }

    pub fn apply_allocation(&mut self, alloc: SsbAllocation, n_ssb_total: u32) -> Result<SweepPlan, BsError> {
        alloc.check_feasible(n_ssb_total)?;
        let plan = allocation_plan(&alloc, n_ssb_total)?;
        self.n_ssb_per_dir = alloc.counts.clone();
        self.current_allocation = Some(alloc);
        Ok(plan)
    }
}

/// Restart on stagnation (`ρ ≤ ρ_th`), optimize on improvement; `invert` swaps the routes.
pub fn gate_on_ratio(rho: f64, rho_th: f64, invert: bool) -> GateDecision {
    let restart = rho <= rho_th;
    if restart != invert {
        GateDecision::RestartWide
    } else {
        GateDecision::ProceedOptimize
    }
}
