//! Learned per-direction weights and the integer SSB allocation.
//!
//! Weights are detected UEs per transmitted SSB in each narrow direction,
//! L1-normalized. The allocation maximizes the predicted number of new
//! detections `w · n` subject to `Σ n_i ≤ n_total` and `n_i ≥ 1`.

use serde::Serialize;
use thiserror::Error;

use crate::scenario::AllocationPolicy;

#[derive(Debug, Error, PartialEq)]
pub enum AllocError {
    #[error("direction {0} has zero transmitted SSBs")]
    ZeroSsbs(usize),
    #[error("dimension mismatch: {0} weights vs {1} counts")]
    Dimension(usize, usize),
    #[error("{directions} directions need at least one SSB each but only {total} are available")]
    Infeasible { directions: usize, total: u32 },
    #[error("allocation sums to {sum} SSBs, budget is {total}")]
    OverBudget { sum: u32, total: u32 },
    #[error("direction {0} is allocated zero SSBs")]
    EmptyDirection(usize),
    #[error("instance too large for enumeration ({directions} directions, {total} SSBs)")]
    TooLarge { directions: usize, total: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl WeightVector {
    pub fn uniform(d: usize) -> Self {
        WeightVector { raw: vec![0.0; d], normalized: vec![1.0 / d as f64; d] }
    }

    /// Builds the normalized vector from arbitrary non-negative raw weights.
    pub fn from_raw(raw: Vec<f64>) -> Self {
        let norm: f64 = raw.iter().sum();
        let normalized = if norm > 0.0 {
            raw.iter().map(|r| r / norm).collect()
        } else {
            vec![1.0 / raw.len() as f64; raw.len()]
        };
        WeightVector { raw, normalized }
    }

    pub fn len(&self) -> usize {
        self.normalized.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normalized.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SsbAllocation {
    pub counts: Vec<u32>,
    pub objective: f64,
}

impl SsbAllocation {
    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    /// Budget and positivity constraints of the allocation problem.
    pub fn check_feasible(&self, n_ssb_total: u32) -> Result<(), AllocError> {
        if let Some(i) = self.counts.iter().position(|&c| c == 0) {
            return Err(AllocError::EmptyDirection(i));
        }
        let sum = self.total();
        if sum > n_ssb_total {
            return Err(AllocError::OverBudget { sum, total: n_ssb_total });
        }
        Ok(())
    }
}

/// `raw_i = n_UE,i / n_SSB,i`, normalized by the L1 norm; uniform when nothing was detected.
pub fn compute_weights(n_ue_per_dir: &[u32], n_ssb_per_dir: &[u32]) -> Result<WeightVector, AllocError> {
    if n_ue_per_dir.len() != n_ssb_per_dir.len() {
        return Err(AllocError::Dimension(n_ue_per_dir.len(), n_ssb_per_dir.len()));
    }
    if let Some(i) = n_ssb_per_dir.iter().position(|&s| s == 0) {
        return Err(AllocError::ZeroSsbs(i));
    }
    let raw = n_ue_per_dir
        .iter()
        .zip(n_ssb_per_dir)
        .map(|(&u, &s)| u as f64 / s as f64)
        .collect();
    Ok(WeightVector::from_raw(raw))
}

/// `w · n`, summed over distinct weight values in ascending order so that
/// allocations differing only in how SSBs are split among equal weights
/// evaluate to the same float.
fn objective(w: &[f64], counts: &[u32]) -> f64 {
    let mut by_weight: Vec<(f64, u64)> = w.iter().zip(counts).map(|(&w, &n)| (w, n as u64)).collect();
    by_weight.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut i = 0;
    while i < by_weight.len() {
        let (wi, mut n) = by_weight[i];
        i += 1;
        while i < by_weight.len() && by_weight[i].0 == wi {
            n += by_weight[i].1;
            i += 1;
        }
        total += wi * n as f64;
    }
    total
}

/// Predicted detections in the next sweep, `w · nᵀ`.
pub fn predict_detections(w: &WeightVector, counts: &[u32]) -> Result<f64, AllocError> {
    if w.len() != counts.len() {
        return Err(AllocError::Dimension(w.len(), counts.len()));
    }
    Ok(objective(&w.normalized, counts))
}

fn surplus(d: usize, n_ssb_total: u32) -> Result<u32, AllocError> {
    if d == 0 || d as u64 > n_ssb_total as u64 {
        return Err(AllocError::Infeasible { directions: d, total: n_ssb_total });
    }
    Ok(n_ssb_total - d as u32)
}

fn exact(w: &[f64], n_ssb_total: u32) -> Result<Vec<u32>, AllocError> {
    let extra = surplus(w.len(), n_ssb_total)?;
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = max.abs() * 1e-12;
    let tied: Vec<usize> = (0..w.len()).filter(|&i| w[i] >= max - tol).collect();
    let mut counts = vec![1u32; w.len()];
    let t = tied.len() as u32;
    for (k, &i) in tied.iter().enumerate() {
        counts[i] += extra / t + u32::from((k as u32) < extra % t);
    }
    Ok(counts)
}

fn proportional(w: &[f64], n_ssb_total: u32) -> Result<Vec<u32>, AllocError> {
    let extra = surplus(w.len(), n_ssb_total)?;
    let quotas: Vec<f64> = w.iter().map(|wi| wi * extra as f64).collect();
    let mut counts: Vec<u32> = quotas.iter().map(|q| 1 + q.floor() as u32).collect();
    let given: u32 = counts.iter().map(|c| c - 1).sum();
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(extra.saturating_sub(given) as usize) {
        counts[i] += 1;
    }
    Ok(counts)
}

pub fn optimize_allocation(
    w: &WeightVector,
    n_ssb_total: u32,
    policy: AllocationPolicy,
) -> Result<SsbAllocation, AllocError> {
    let counts = match policy {
        AllocationPolicy::OptimizedExact => exact(&w.normalized, n_ssb_total)?,
        AllocationPolicy::OptimizedProportional => proportional(&w.normalized, n_ssb_total)?,
        AllocationPolicy::Constant(c) => {
            let d = w.len();
            if c == 0 || (c as u64) * (d as u64) > n_ssb_total as u64 {
                return Err(AllocError::Infeasible { directions: d, total: n_ssb_total });
            }
            vec![c; d]
        }
    };
    let objective = objective(&w.normalized, &counts);
    Ok(SsbAllocation { counts, objective })
}

/// Exhaustive search over every feasible integer vector; a verification
/// oracle for small instances (at most 6 directions and 14 SSBs).
pub fn brute_force_allocation(w: &WeightVector, n_ssb_total: u32) -> Result<SsbAllocation, AllocError> {
    let d = w.len();
    if d > 6 || n_ssb_total > 14 {
        return Err(AllocError::TooLarge { directions: d, total: n_ssb_total });
    }
    surplus(d, n_ssb_total)?;

    fn walk(i: usize, left: u32, cur: &mut Vec<u32>, w: &[f64], best: &mut Option<SsbAllocation>) {
        if i == w.len() {
            let obj = objective(w, cur);
            if best.as_ref().is_none_or(|b| obj > b.objective) {
                *best = Some(SsbAllocation { counts: cur.clone(), objective: obj });
            }
            return;
        }
        let reserve = (w.len() - i - 1) as u32;
        for n in 1..=left - reserve {
            cur.push(n);
            walk(i + 1, left - n, cur, w, best);
            cur.pop();
        }
    }

    let mut best = None;
    walk(0, n_ssb_total, &mut Vec::with_capacity(d), &w.normalized, &mut best);
    Ok(best.expect("feasible instance has at least the all-ones vector"))
}
