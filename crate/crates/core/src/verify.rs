//! Self-check suites run by `beamsweep verify`: the allocator against
//! exhaustive enumeration, fading statistics against the closed form, and
//! sweep-plan slot accounting.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::allocator::{brute_force_allocation, optimize_allocation, AllocError, SsbAllocation, WeightVector};
use crate::antenna::BeamId;
use crate::channel::{detection_probability, draw_fading, lin_to_db};
use crate::frame_timing::{allocation_plan, round_robin_plan, SweepPhase};
use crate::scenario::{AllocationPolicy, ConfigError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Allocator,
    Rayleigh,
    Plans,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Allocator, Suite::Rayleigh, Suite::Plans];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Allocator => "allocator",
            Suite::Rayleigh => "rayleigh",
            Suite::Plans => "plans",
        })
    }
}

impl FromStr for Suite {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.to_string() == s)
            .ok_or_else(|| ConfigError::Parse(format!("unknown suite '{s}' (allocator, rayleigh, plans)")))
    }
}

/// Allocator under test; lets a faulty implementation be checked against the oracle.
pub type AllocatorFn = fn(&WeightVector, u32, AllocationPolicy) -> Result<SsbAllocation, AllocError>;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {} checks, {} failures", self.suite, self.checks, self.failures.len())?;
        for msg in self.failures.iter().take(5) {
            write!(f, "\n  {msg}")?;
        }
        Ok(())
    }
}

struct Checker {
    suite: Suite,
    checks: usize,
    failures: Vec<String>,
}

impl Checker {
    fn new(suite: Suite) -> Self {
        Checker { suite, checks: 0, failures: Vec::new() }
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(msg());
        }
    }

    fn finish(self) -> SuiteReport {
        SuiteReport { suite: self.suite, checks: self.checks, failures: self.failures }
    }
}

/// Random weight vector with some exact ties and zeros mixed in.
pub fn random_weights(rng: &mut impl Rng, d: usize) -> WeightVector {
    let raw = (0..d)
        .map(|_| match rng.random_range(0..6) {
            0 => 0.0,
            1 => 0.5,
            _ => rng.random_range(0.0..4.0),
        })
        .collect();
    WeightVector::from_raw(raw)
}

pub fn allocator_suite(allocator: AllocatorFn, instances: usize, seed: u64) -> SuiteReport {
    let mut c = Checker::new(Suite::Allocator);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..instances {
        let d = rng.random_range(1..=6);
        let total = rng.random_range(d as u32..=14);
        let w = random_weights(&mut rng, d);
        let sum: f64 = w.normalized.iter().sum();
        c.check((sum - 1.0).abs() <= 1e-12, || format!("weights {:?} sum to {sum}", w.raw));
        let oracle = brute_force_allocation(&w, total).expect("small instance");
        match allocator(&w, total, AllocationPolicy::OptimizedExact) {
            Ok(a) => {
                c.check(a.check_feasible(total).is_ok(), || format!("infeasible {:?} for total {total}", a.counts));
                c.check(a.objective == oracle.objective, || {
                    format!("w={:?} total={total}: objective {} vs oracle {}", w.normalized, a.objective, oracle.objective)
                });
                let scaled = WeightVector::from_raw(w.raw.iter().map(|r| r * 3.5).collect());
                if let Ok(b) = allocator(&scaled, total, AllocationPolicy::OptimizedExact) {
                    c.check(b.counts == a.counts, || format!("scaling changed {:?} to {:?}", a.counts, b.counts));
                }
            }
            Err(e) => c.check(false, || format!("w={:?} total={total}: {e}", w.normalized)),
        }
        match allocator(&w, total, AllocationPolicy::OptimizedProportional) {
            Ok(a) => c.check(a.check_feasible(total).is_ok() && a.total() == total, || {
                format!("proportional {:?} does not use exactly {total}", a.counts)
            }),
            Err(e) => c.check(false, || format!("proportional failed: {e}")),
        }
    }
    for d in [1usize, 4, 16] {
        match allocator(&WeightVector::from_raw(vec![0.0; d]), 64, AllocationPolicy::OptimizedExact) {
            Ok(a) => {
                let (lo, hi) = (a.counts.iter().min().copied(), a.counts.iter().max().copied());
                c.check(a.total() == 64 && hi.zip(lo).is_some_and(|(h, l)| h - l <= 1), || {
                    format!("zero weights, d={d}: {:?} is not uniform", a.counts)
                });
            }
            Err(e) => c.check(false, || format!("zero weights, d={d}: {e}")),
        }
    }
    c.finish()
}

/// Empirical per-SSB detection rate against `exp(-γth/γ̄)` at several mean SNRs.
pub fn rayleigh_suite(draws: usize, seed: u64) -> SuiteReport {
    let mut c = Checker::new(Suite::Rayleigh);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (mean_db, th_db) in [(0.0, 0.0), (5.0, 0.0), (-3.0, 0.0), (10.0, 5.0), (2.0, 5.0), (20.0, 10.0)] {
        let mut hits = 0usize;
        let mut power = 0.0;
        for _ in 0..draws {
            let f = draw_fading(&mut rng);
            power += f.linear();
            if mean_db + f.power_gain_db >= th_db {
                hits += 1;
            }
        }
        let empirical = hits as f64 / draws as f64;
        let expected = detection_probability(mean_db, th_db);
        c.check((empirical - expected).abs() <= 0.02, || {
            format!("mean {mean_db} dB, threshold {th_db} dB: {empirical:.4} vs {expected:.4}")
        });
        let mean = power / draws as f64;
        c.check((mean - 1.0).abs() <= 0.02, || format!("mean fading power {mean:.4} ({:.3} dB)", lin_to_db(mean)));
    }
    c.finish()
}

pub fn plans_suite(seed: u64) -> SuiteReport {
    let mut c = Checker::new(Suite::Plans);
    let wide: Vec<BeamId> = (0..4).map(BeamId::wide).collect();
    let narrow: Vec<BeamId> = (0..16).map(BeamId::narrow).collect();
    let w = round_robin_plan(SweepPhase::Wide, &wide, 32).expect("feasible");
    c.check(w.len() == 32 && w.counts_per_beam().values().all(|&n| n == 8), || "wide plan is not 8 per beam".into());
    let n = round_robin_plan(SweepPhase::Narrow, &narrow, 32).expect("feasible");
    c.check(n.len() == 32 && n.counts_per_beam().values().all(|&k| k == 2), || "narrow plan is not 2 per beam".into());
    c.check(n.slots()[..16] == narrow[..], || "narrow plan does not visit beams in index order".into());
    c.check(round_robin_plan(SweepPhase::Narrow, &narrow, 8).is_err(), || "8 slots accepted for 16 beams".into());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..200 {
        let d = rng.random_range(1..=16usize);
        let total = rng.random_range(d as u32..=64);
        let mut counts = vec![1u32; d];
        for _ in 0..rng.random_range(0..=total - d as u32) {
            counts[rng.random_range(0..d)] += 1;
        }
        let alloc = SsbAllocation { counts: counts.clone(), objective: 0.0 };
        let Ok(plan) = allocation_plan(&alloc, total) else {
            c.check(false, || format!("feasible allocation {counts:?} rejected"));
            continue;
        };
        let entries = plan.entries();
        c.check(plan.len() as u32 == alloc.total(), || format!("{counts:?}: plan length {}", plan.len()));
        c.check(entries.len() == d, || format!("{counts:?}: directions are not contiguous blocks"));
        c.check(entries.iter().all(|(b, k)| counts[b.index] == *k), || format!("{counts:?}: block sizes differ"));
        c.check(
            entries.windows(2).all(|p| p[0].1 > p[1].1 || (p[0].1 == p[1].1 && p[0].0.index < p[1].0.index)),
            || format!("{counts:?}: blocks not in descending count order"),
        );
    }
    c.finish()
}

/// Runs the selected suites (all when `only` is `None`).
pub fn run_suites(only: Option<Suite>, allocator: AllocatorFn) -> Vec<SuiteReport> {
    Suite::ALL
        .into_iter()
        .filter(|s| only.is_none_or(|o| o == *s))
        .map(|s| match s {
            Suite::Allocator => allocator_suite(allocator, 300, 11),
            Suite::Rayleigh => rayleigh_suite(100_000, 12),
            Suite::Plans => plans_suite(13),
        })
        .collect()
}

/// Exact allocator with one SSB of the surplus left unassigned; used to show
/// that the allocator suite catches faults.
pub fn off_by_one_allocator(w: &WeightVector, n_ssb_total: u32, policy: AllocationPolicy) -> Result<SsbAllocation, AllocError> {
    let budget = if n_ssb_total as usize > w.len() { n_ssb_total - 1 } else { n_ssb_total };
    optimize_allocation(w, budget, policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_real_code() {
        for r in run_suites(None, optimize_allocation) {
            assert!(r.passed(), "{r}");
            assert!(r.checks > 0);
        }
    }

    #[test]
    fn off_by_one_is_caught() {
        let r = run_suites(Some(Suite::Allocator), off_by_one_allocator);
        assert_eq!(r.len(), 1);
        assert!(!r[0].passed());
        assert!(r[0].to_string().starts_with("FAIL allocator"));
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.to_string().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }
}
