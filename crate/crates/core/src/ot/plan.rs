use crate::costs::CostEvaluator;
use crate::error::{Error, Result};

/// A sparse coupling between `src_size` source atoms and `dst_size` destination atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub entries: Vec<(usize, usize, f64)>,
    pub primal_cost: f64,
    pub src_size: usize,
    pub dst_size: usize,
}

impl TransportPlan {
    /// Builds a plan from raw entries, dropping non-positive masses and computing the cost.
    pub fn from_entries(
        entries: Vec<(usize, usize, f64)>,
        src_size: usize,
        dst_size: usize,
        cost: &(impl CostEvaluator + ?Sized),
    ) -> Result<Self> {
        let entries: Vec<_> = entries.into_iter().filter(|e| e.2 > 0.0).collect();
        for &(i, j, m) in &entries {
            if i >= src_size || j >= dst_size {
                return Err(Error::InvalidParameter(format!("plan entry ({i}, {j}) out of range")));
            }
            if !m.is_finite() {
                return Err(Error::NonFinite { idx: i, value: m });
            }
        }
        let mut plan = Self { entries, primal_cost: 0.0, src_size, dst_size };
        plan.primal_cost = transport_cost(&plan, cost);
        Ok(plan)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.src_size];
        for &(i, _, m) in &self.entries {
            r[i] += m;
        }
        r
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dst_size];
        for &(_, j, m) in &self.entries {
            c[j] += m;
        }
        c
    }

    /// Largest absolute deviation of the plan's marginals from `a` and `b`.
    pub fn marginal_error(&self, a: &[f64], b: &[f64]) -> f64 {
        let dev = |s: Vec<f64>, w: &[f64]| s.iter().zip(w).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        dev(self.row_sums(), a).max(dev(self.col_sums(), b))
    }
}

/// Recomputes `Σ mass · cost(i, j)` over the plan entries.
pub fn transport_cost(plan: &TransportPlan, cost: &(impl CostEvaluator + ?Sized)) -> f64 {
    plan.entries.iter().map(|&(i, j, m)| m * cost.cost(i, j)).sum()
}

/// Kantorovich potentials with `f_i + g_j ≤ c_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub dual_value: f64,
}

impl DualSolution {
    pub fn new(f: Vec<f64>, g: Vec<f64>, a: &[f64], b: &[f64]) -> Self {
        let dual_value = dot(a, &f) + dot(b, &g);
        Self { f, g, dual_value }
    }

    /// Largest violation `max(f_i + g_j − c_ij, 0)`.
    pub fn max_violation(&self, cost: &(impl CostEvaluator + ?Sized)) -> f64 {
        let mut worst = 0.0f64;
        let mut col = vec![0.0; self.f.len()];
        for (j, gj) in self.g.iter().enumerate() {
            cost.column(j, &mut col);
            for (fi, c) in self.f.iter().zip(&col) {
                worst = worst.max(fi + gj - c);
            }
        }
        worst
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
