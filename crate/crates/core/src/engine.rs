//! Slot-level trial execution and Monte Carlo batches.
//!
//! A trial is a sequence of sweep cycles (one radio frame each). Every SSB
//! slot draws an independent Rayleigh fade for each UE still searching.
//! Trials own two ChaCha streams derived from `(seed, trial_id)`: one for the
//! deployment and one for the channel, so a batch is a pure function of its
//! inputs regardless of how trials are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::antenna::{build_beambook, BeamBook, BeamId};
use crate::baselines::{exhaustive_plan, iterative_narrow_stage, iterative_wide_stage};
use crate::bs_agent::{BsState, FeedbackMessage, GateDecision};
use crate::allocator::{compute_weights, optimize_allocation};
use crate::channel::{db_to_lin, lin_to_db, LinkTable};
use crate::frame_timing::{round_robin_plan, FrameClock, SweepPhase, SweepPlan};
use crate::scenario::{deploy_ues, deploy_ues_ring, ScenarioConfig, Strategy, UePlacement};
use crate::ue_agent::{SlotInfo, UeMode, UeState};
use crate::Error;

/// Where the UEs of each trial are placed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Deployment {
    /// Uniform over the cell annulus.
    Random,
    /// Every UE at this BS distance.
    Ring(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleKind {
    /// Wide sweep followed by a round-robin narrow sweep (first cycle or restart).
    WideNarrow,
    /// Narrow sweep with an installed allocation.
    Allocated,
    Exhaustive,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UeOutcome {
    pub ue_id: usize,
    pub detected: bool,
    /// The UE had fixed a receive beam (or heard any usable pair) by the end of the trial.
    pub locked: bool,
    pub cycle_of_detection: Option<usize>,
    pub slot_of_detection: Option<u64>,
    pub distance_m: f64,
    pub d_bs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub kind: CycleKind,
    pub n_ue_total: usize,
    /// SSB slots consumed by the cycle's sweeps.
    pub ssb_slots: u32,
    /// SSBs per narrow direction in this cycle's narrow sweep.
    pub allocation: Vec<u32>,
    /// Detection ratio; `None` in the first cycle, infinite after a zero total.
    pub rho: Option<f64>,
    pub gate: Option<GateDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub trial_id: u64,
    pub rng_seed: u64,
    pub per_ue: Vec<UeOutcome>,
    pub per_cycle: Vec<CycleRecord>,
}

impl TrialReport {
    pub fn n_detected(&self) -> usize {
        self.per_ue.iter().filter(|u| u.detected).count()
    }

    /// Cumulative detected count after cycle `k` (1-based), carrying the last
    /// value forward past an early stop.
    pub fn total_after_cycle(&self, k: usize) -> usize {
        self.per_cycle
            .iter()
            .take_while(|c| c.cycle <= k)
            .last()
            .map_or(0, |c| c.n_ue_total)
    }

    /// Line-delimited JSON events for `--trace`.
    pub fn trace_lines(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.per_cycle.len() + self.per_ue.len());
        for c in &self.per_cycle {
            let rho = match c.rho {
                None => serde_json::Value::Null,
                Some(r) if r.is_infinite() => "inf".into(),
                Some(r) => r.into(),
            };
            out.push(
                serde_json::json!({
                    "event": "cycle", "trial": self.trial_id, "cycle": c.cycle, "kind": c.kind,
                    "n_ue_total": c.n_ue_total, "ssb_slots": c.ssb_slots,
                    "allocation": c.allocation, "rho": rho, "gate": c.gate,
                })
                .to_string(),
            );
        }
        for u in &self.per_ue {
            out.push(
                serde_json::json!({
                    "event": "ue", "trial": self.trial_id, "ue": u.ue_id, "detected": u.detected,
                    "locked": u.locked, "cycle": u.cycle_of_detection, "slot": u.slot_of_detection,
                    "distance_m": u.distance_m, "d_bs": u.d_bs,
                })
                .to_string(),
            );
        }
        out
    }
}

/// Independent stream `purpose` (0 deployment, 1 channel) of trial `trial_id`.
pub fn trial_rng(seed: u64, trial_id: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_id * 2 + purpose);
    rng
}

struct Listener {
    ue: UeState,
    link: LinkTable,
    outcome: UeOutcome,
}

struct Trial<'a> {
    cfg: &'a ScenarioConfig,
    rng: ChaCha8Rng,
    clock: FrameClock,
    listeners: Vec<Listener>,
    floor_db: f64,
    floor_lin: f64,
}

impl Trial<'_> {
    fn all_detected(&self) -> bool {
        !self.listeners.is_empty() && self.listeners.iter().all(|l| l.ue.is_detected())
    }

    fn sweep(&mut self, plan: &SweepPlan) {
        for &bs in plan.slots() {
            let global_slot = self.clock.global_slot();
            self.clock.tick();
            for l in self.listeners.iter_mut().filter(|l| !l.ue.is_detected()) {
                let rx = l.ue.next_rx_beam(bs);
                let fade: f64 = Exp1.sample(&mut self.rng);
                let snr = l.link.mean_lin(bs, rx) * fade;
                if snr >= self.floor_lin {
                    l.ue.on_ssb(SlotInfo { bs_beam: bs, rx_beam: rx, global_slot }, lin_to_db(snr), self.floor_db);
                }
            }
        }
    }

    /// Threshold test at every searching UE, then delivery of its feedback to the BS.
    fn feedback_window(&mut self, cycle: usize) -> Vec<FeedbackMessage> {
        let th = self.cfg.snr_th_db;
        let th_lin = db_to_lin(th);
        let slot = self.clock.global_slot();
        let mut msgs = Vec::new();
        for l in self.listeners.iter_mut().filter(|l| !l.ue.is_detected()) {
            let Some(msg) = l.ue.candidate(th) else { continue };
            if !self.cfg.ideal_feedback {
                let up = db_to_lin(l.link.uplink_mean_db(BeamId::narrow(msg.d_bs), msg.d_ue));
                let fade: f64 = Exp1.sample(&mut self.rng);
                if up * fade < th_lin {
                    continue;
                }
            }
            l.ue.mark_detected(&msg);
            l.outcome.detected = true;
            l.outcome.cycle_of_detection = Some(cycle);
            l.outcome.slot_of_detection = Some(slot);
            l.outcome.d_bs = Some(msg.d_bs);
            msgs.push(msg);
        }
        msgs
    }
}

fn rr_counts(plan: &SweepPlan, d_bs_nb: usize) -> Vec<u32> {
    let mut counts = vec![0; d_bs_nb];
    for (b, n) in plan.counts_per_beam() {
        counts[b.index] = n;
    }
    counts
}

/// Runs one trial of the configured strategy over a static deployment.
pub fn run_trial(
    cfg: &ScenarioConfig,
    book: &BeamBook,
    placements: &[UePlacement],
    seed: u64,
    trial_id: u64,
) -> Result<TrialReport, Error> {
    let mut rng = trial_rng(seed, trial_id, 1);
    let mode = match cfg.strategy {
        Strategy::Proposed => UeMode::TwoStage,
        Strategy::Exhaustive => UeMode::Joint,
        Strategy::Iterative => UeMode::Iterative,
    };
    let shadow = if cfg.shadowing_std_db > 0.0 {
        Some(Normal::new(0.0, cfg.shadowing_std_db).expect("validated std"))
    } else {
        None
    };
    let mut listeners = Vec::with_capacity(placements.len());
    for p in placements {
        let shadowing_db = shadow.map_or(0.0, |n| n.sample(&mut rng));
        let offset = rng.random_range(0..cfg.d_ue);
        listeners.push(Listener {
            ue: UeState::new(p.ue_id, mode, cfg.d_bs_wb, cfg.d_bs_nb, cfg.d_ue, offset),
            link: LinkTable::new(cfg, book, p, shadowing_db)?,
            outcome: UeOutcome {
                ue_id: p.ue_id,
                detected: false,
                locked: false,
                cycle_of_detection: None,
                slot_of_detection: None,
                distance_m: p.radius_m,
                d_bs: None,
            },
        });
    }
    let floor_db = cfg.detection_floor_db();
    let mut trial = Trial {
        cfg,
        rng,
        clock: FrameClock::new(cfg.n_ssb_total),
        listeners,
        floor_db,
        floor_lin: db_to_lin(floor_db),
    };
    let mut bs = BsState::new(cfg.d_bs_nb);
    let mut per_cycle = Vec::new();
    let mut next_plan: Option<SweepPlan> = None;
    let wide_ids = book.wide_ids();
    let narrow_ids = book.narrow_ids();
    let mut sectors = std::collections::BTreeSet::new();

    for cycle in 1..=cfg.max_sweep_cycles {
        if trial.all_detected() {
            break;
        }
        let kind = match cfg.strategy {
            Strategy::Proposed => match next_plan.take() {
                None => {
                    for l in trial.listeners.iter_mut() {
                        l.ue.restart_search();
                    }
                    let wide = round_robin_plan(SweepPhase::Wide, &wide_ids, cfg.half_budget())?;
                    let narrow = round_robin_plan(SweepPhase::Narrow, &narrow_ids, cfg.half_budget())?;
                    trial.sweep(&wide);
                    trial.sweep(&narrow);
                    bs.set_round_robin_counts(rr_counts(&narrow, cfg.d_bs_nb));
                    CycleKind::WideNarrow
                }
                Some(plan) => {
                    let counts = &bs.n_ssb_per_dir;
                    assert!(
                        counts.iter().sum::<u32>() <= cfg.n_ssb_total,
                        "allocation exceeds the burst-set budget: {counts:?}"
                    );
                    assert!(counts.iter().all(|&c| c >= 1), "narrow direction without an SSB: {counts:?}");
                    assert_eq!(plan.len() as u32, counts.iter().sum::<u32>(), "plan/allocation mismatch");
                    trial.sweep(&plan);
                    CycleKind::Allocated
                }
            },
            Strategy::Exhaustive => {
                let plan = exhaustive_plan(cfg, book)?;
                trial.sweep(&plan);
                bs.set_round_robin_counts(rr_counts(&plan, cfg.d_bs_nb));
                CycleKind::Exhaustive
            }
            Strategy::Iterative => {
                trial.sweep(&iterative_wide_stage(cfg, book)?);
                sectors.clear();
                for l in trial.listeners.iter_mut().filter(|l| !l.ue.is_detected()) {
                    if let Some(s) = l.ue.end_wide_stage() {
                        sectors.insert(s);
                    }
                }
                let narrow = iterative_narrow_stage(cfg, book, &sectors)?;
                trial.sweep(&narrow);
                bs.set_round_robin_counts(rr_counts(&narrow, cfg.d_bs_nb));
                CycleKind::Iterative
            }
        };
        let ssb_slots = trial.clock.slots_used();
        let allocation = bs.n_ssb_per_dir.clone();
        let msgs = trial.feedback_window(cycle);
        bs.collect_feedback(&msgs);
        let rho = (cycle >= 2).then(|| bs.detection_ratio().expect("two cycles"));

        let mut gate = None;
        if cfg.strategy == Strategy::Proposed {
            let g = bs.gate(cfg);
            gate = Some(g);
            if g == GateDecision::ProceedOptimize {
                let w = compute_weights(&bs.n_ue_per_dir, &bs.n_ssb_per_dir)?;
                let alloc = optimize_allocation(&w, cfg.n_ssb_total, cfg.allocation_policy)?;
                next_plan = Some(bs.apply_allocation(alloc, cfg.n_ssb_total)?);
            }
        }
        per_cycle.push(CycleRecord { cycle, kind, n_ue_total: bs.n_ue_total(), ssb_slots, allocation, rho, gate });
        trial.clock.next_frame();
    }

    let per_ue = trial
        .listeners
        .into_iter()
        .map(|l| UeOutcome { locked: l.outcome.detected || l.ue.has_receive_beam(), ..l.outcome })
        .collect();
    Ok(TrialReport { trial_id, rng_seed: seed, per_ue, per_cycle })
}

/// Deploys UEs for `trial_id` from its deployment stream.
pub fn deploy_trial(cfg: &ScenarioConfig, deployment: Deployment, seed: u64, trial_id: u64) -> Result<Vec<UePlacement>, Error> {
    let mut rng = trial_rng(seed, trial_id, 0);
    Ok(match deployment {
        Deployment::Random => deploy_ues(cfg, &mut rng),
        Deployment::Ring(d) => deploy_ues_ring(cfg, d, &mut rng)?,
    })
}

/// Runs `trials` independent trials on `parallelism` worker threads.
pub fn run_batch(
    cfg: &ScenarioConfig,
    deployment: Deployment,
    trials: usize,
    seed: u64,
    parallelism: usize,
) -> Result<Vec<TrialReport>, Error> {
    cfg.validate()?;
    let book = build_beambook(cfg)?;
    let run = |t: u64| -> Result<TrialReport, Error> {
        let placements = deploy_trial(cfg, deployment, seed, t)?;
        run_trial(cfg, &book, &placements, seed, t)
    };
    if parallelism <= 1 {
        return (0..trials as u64).map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Runtime(e.to_string()))?;
    pool.install(|| (0..trials as u64).into_par_iter().map(run).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::antenna::wrap_deg;
    use crate::scenario::AllocationPolicy;

    fn aligned_ue(radius_m: f64) -> UePlacement {
        UePlacement { ue_id: 0, radius_m, azimuth_deg: 11.25, antenna_orientation_deg: wrap_deg(11.25 + 180.0 - 45.0) }
    }

    #[test]
    fn near_aligned_ue_detected_in_first_cycle() {
        for strategy in [Strategy::Proposed, Strategy::Exhaustive, Strategy::Iterative] {
            let cfg = ScenarioConfig { n_ues: 1, strategy, ..Default::default() };
            let book = build_beambook(&cfg).unwrap();
            for seed in 0..20 {
                let r = run_trial(&cfg, &book, &[aligned_ue(10.0)], seed, 0).unwrap();
                assert_eq!(r.per_ue[0].cycle_of_detection, Some(1), "{strategy} seed {seed}");
                assert_eq!(r.per_cycle.len(), 1);
            }
        }
    }

    #[test]
    fn empty_deployment_runs_all_cycles() {
        let cfg = ScenarioConfig { n_ues: 0, ..Default::default() };
        let book = build_beambook(&cfg).unwrap();
        let r = run_trial(&cfg, &book, &[], 1, 0).unwrap();
        assert!(r.per_ue.is_empty());
        assert_eq!(r.per_cycle.len(), cfg.max_sweep_cycles);
        assert!(r.per_cycle.iter().all(|c| c.n_ue_total == 0));
    }

    #[test]
    fn trials_are_reproducible() {
        let cfg = ScenarioConfig::default();
        let a = run_batch(&cfg, Deployment::Random, 3, 42, 1).unwrap();
        let b = run_batch(&cfg, Deployment::Random, 3, 42, 1).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = run_batch(&cfg, Deployment::Random, 3, 43, 1).unwrap();
        assert_ne!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let cfg = ScenarioConfig { n_ues: 10, ..Default::default() };
        let a = run_batch(&cfg, Deployment::Ring(120.0), 12, 5, 1).unwrap();
        let b = run_batch(&cfg, Deployment::Ring(120.0), 12, 5, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(run_batch(&cfg, Deployment::Random, 1, 5, 1).unwrap().len(), 1);
    }

    #[test]
    fn slot_accounting_matches_plans() {
        for policy in [AllocationPolicy::OptimizedExact, AllocationPolicy::Constant(2)] {
            let cfg = ScenarioConfig { snr_th_db: 5.0, allocation_policy: policy, ..Default::default() };
            for r in run_batch(&cfg, Deployment::Random, 20, 9, 1).unwrap() {
                for c in &r.per_cycle {
                    let expected = match c.kind {
                        CycleKind::WideNarrow => 64,
                        CycleKind::Allocated => c.allocation.iter().sum::<u32>(),
                        _ => unreachable!(),
                    };
                    assert_eq!(c.ssb_slots, expected);
                    assert!(c.allocation.iter().all(|&n| n >= 1));
                    if let (CycleKind::Allocated, AllocationPolicy::Constant(k)) = (c.kind, policy) {
                        assert!(c.allocation.iter().all(|&n| n == k));
                    }
                }
            }
        }
    }

    #[test]
    fn detections_are_monotone_and_consistent() {
        for strategy in [Strategy::Proposed, Strategy::Exhaustive, Strategy::Iterative] {
            let cfg = ScenarioConfig { strategy, ..Default::default() };
            for r in run_batch(&cfg, Deployment::Random, 10, 3, 1).unwrap() {
                let totals: Vec<usize> = r.per_cycle.iter().map(|c| c.n_ue_total).collect();
                assert!(totals.windows(2).all(|w| w[0] <= w[1]));
                assert_eq!(*totals.last().unwrap(), r.n_detected());
                for u in &r.per_ue {
                    assert_eq!(u.detected, u.cycle_of_detection.is_some());
                    if let Some(k) = u.cycle_of_detection {
                        assert!(k <= cfg.max_sweep_cycles);
                        assert!(u.locked);
                    }
                }
            }
        }
    }

    #[test]
    fn first_cycle_is_wide_then_narrow() {
        let cfg = ScenarioConfig::default();
        let r = &run_batch(&cfg, Deployment::Random, 1, 1, 1).unwrap()[0];
        let c1 = &r.per_cycle[0];
        assert_eq!(c1.kind, CycleKind::WideNarrow);
        assert_eq!(c1.allocation, vec![2; 16]);
        assert_eq!(c1.rho, None);
        assert_eq!(c1.gate, Some(GateDecision::ProceedOptimize));
    }

    #[test]
    fn lossy_feedback_never_beats_ideal() {
        let ideal = ScenarioConfig { n_ues: 20, ..Default::default() };
        let lossy = ScenarioConfig { ideal_feedback: false, ..ideal.clone() };
        let count = |cfg: &ScenarioConfig| -> usize {
            run_batch(cfg, Deployment::Ring(150.0), 30, 4, 1).unwrap().iter().map(|r| r.n_detected()).sum()
        };
        assert!(count(&lossy) <= count(&ideal) + 20);
    }

    #[test]
    fn trace_lines_are_json() {
        let cfg = ScenarioConfig { n_ues: 3, ..Default::default() };
        let r = &run_batch(&cfg, Deployment::Ring(140.0), 1, 2, 1).unwrap()[0];
        let lines = r.trace_lines();
        assert_eq!(lines.len(), r.per_cycle.len() + 3);
        for l in lines {
            let v: serde_json::Value = serde_json::from_str(&l).unwrap();
            assert!(v["event"].is_string());
        }
    }
}
