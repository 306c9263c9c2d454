//! Comparison procedures: exhaustive narrow-beam search and two-stage
//! (wide, then narrow within the chosen sector) iterative search, both
//! budgeted to `n_ssb_total` SSBs per sweep cycle.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::antenna::{BeamBook, BeamId};
use crate::frame_timing::{round_robin_plan, PlanError, SweepPhase, SweepPlan};
use crate::scenario::{AllocationPolicy, ConfigError, ScenarioConfig, Strategy};

/// Strategy as selected on the command line; `constant:c` runs the proposed
/// procedure with a fixed per-direction allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    Proposed,
    Exhaustive,
    Iterative,
    Constant(u32),
}

impl StrategyKind {
    /// Writes this choice into a config (strategy and, for `constant`, the policy).
    pub fn apply(self, cfg: &mut ScenarioConfig) {
        match self {
            StrategyKind::Proposed => cfg.strategy = Strategy::Proposed,
            StrategyKind::Exhaustive => cfg.strategy = Strategy::Exhaustive,
            StrategyKind::Iterative => cfg.strategy = Strategy::Iterative,
            StrategyKind::Constant(c) => {
                cfg.strategy = Strategy::Proposed;
                cfg.allocation_policy = AllocationPolicy::Constant(c);
            }
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyKind::Proposed => f.write_str("proposed"),
            StrategyKind::Exhaustive => f.write_str("exhaustive"),
            StrategyKind::Iterative => f.write_str("iterative"),
            StrategyKind::Constant(c) => write!(f, "constant:{c}"),
        }
    }
}

impl FromStr for StrategyKind {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.starts_with("constant") {
            return match s.parse::<AllocationPolicy>()? {
                AllocationPolicy::Constant(c) => Ok(StrategyKind::Constant(c)),
                _ => unreachable!("constant prefix parses to a constant policy"),
            };
        }
        Ok(match s.parse::<Strategy>()? {
            Strategy::Proposed => StrategyKind::Proposed,
            Strategy::Exhaustive => StrategyKind::Exhaustive,
            Strategy::Iterative => StrategyKind::Iterative,
        })
    }
}

/// One exhaustive cycle: every narrow direction round-robin over the whole burst set.
pub fn exhaustive_plan(cfg: &ScenarioConfig, book: &BeamBook) -> Result<SweepPlan, PlanError> {
    round_robin_plan(SweepPhase::Narrow, &book.narrow_ids(), cfg.n_ssb_total)
}

/// Iterative stage 1: the wide beams round-robin over half the burst set.
pub fn iterative_wide_stage(cfg: &ScenarioConfig, book: &BeamBook) -> Result<SweepPlan, PlanError> {
    round_robin_plan(SweepPhase::Wide, &book.wide_ids(), cfg.half_budget())
}

/// Iterative stage 2: narrow beams inside the chosen sectors, round-robin
/// over the other half. Empty when no sector was chosen.
pub fn iterative_narrow_stage(
    cfg: &ScenarioConfig,
    book: &BeamBook,
    sectors: &BTreeSet<usize>,
) -> Result<SweepPlan, PlanError> {
    let beams: Vec<BeamId> = sectors
        .iter()
        .flat_map(|&s| book.narrow_in_sector(s))
        .map(BeamId::narrow)
        .collect();
    if beams.is_empty() {
        return Ok(SweepPlan::from_slots(SweepPhase::Narrow, Vec::new()));
    }
    round_robin_plan(SweepPhase::Narrow, &beams, cfg.half_budget())
}

/// Both iterative stages for a known set of chosen sectors.
pub fn iterative_plan(
    cfg: &ScenarioConfig,
    book: &BeamBook,
    sectors: &BTreeSet<usize>,
) -> Result<(SweepPlan, SweepPlan), PlanError> {
    Ok((iterative_wide_stage(cfg, book)?, iterative_narrow_stage(cfg, book, sectors)?))
}
