//! The transport dependency `τ(γ) = T_c(γ, μ⊗ν)`, its constructive upper bounds, and the
//! marginal transport dependency `τ^Y`.

use std::collections::HashMap;

use crate::costs::{marginal_cost_matrix, pow, CostSpec, MarginalCost, ProductCost};
use crate::error::{Error, Result};
use crate::measures::{canonical_bits, diameter, DiscreteMeasure, JointDiscreteMeasure, DEFAULT_ATOM_BUDGET};
use crate::ot::{exact_cost, solve_exact, solve_sinkhorn_scaled, SinkhornOptions, TransportPlan};

/// Largest `src · dst` size solved exactly under [`SolverChoice::Auto`].
pub const EXACT_LIMIT: usize = 4_000_000;

/// Values below zero by at most this much are treated as roundoff.
const NEGATIVE_DRIFT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverChoice {
    #[default]
    Auto,
    Exact,
    Sinkhorn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverUsed {
    Exact,
    Sinkhorn,
}

impl SolverUsed {
    pub fn name(self) -> &'static str {
        match self {
            SolverUsed::Exact => "exact",
            SolverUsed::Sinkhorn => "sinkhorn",
        }
    }
}

impl std::str::FromStr for SolverChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SolverChoice::Auto),
            "exact" => Ok(SolverChoice::Exact),
            "sinkhorn" => Ok(SolverChoice::Sinkhorn),
            other => Err(Error::InvalidParameter(format!("unknown solver '{other}'"))),
        }
    }
}

/// How atoms are grouped by their x-coordinate when computing `τ^Y`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum XGrouping {
    /// Bitwise equality of coordinates (with `-0.0 == 0.0`).
    #[default]
    Exact,
    /// Atoms within this sup-norm distance of a group's first atom join that group.
    Tolerance(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdepOptions {
    pub solver: SolverChoice,
    pub sinkhorn: SinkhornOptions,
    /// Compute the three constructive upper bounds.
    pub bounds: bool,
    /// Keep the optimal plan in the result.
    pub keep_plan: bool,
    pub exact_limit: usize,
    pub atom_budget: usize,
    pub grouping: XGrouping,
    /// Merge marginal atoms at identical coordinates before forming μ⊗ν. The value is the
    /// same; the problem shrinks when γ repeats coordinates.
    pub merge_marginals: bool,
}

impl Default for TdepOptions {
    fn default() -> Self {
        Self {
            solver: SolverChoice::Auto,
            sinkhorn: SinkhornOptions::default(),
            bounds: true,
            keep_plan: false,
            exact_limit: EXACT_LIMIT,
            atom_budget: DEFAULT_ATOM_BUDGET,
            grouping: XGrouping::Exact,
            merge_marginals: false,
        }
    }
}

impl TdepOptions {
    pub fn with_solver(solver: SolverChoice) -> Self {
        Self { solver, ..Self::default() }
    }

    /// Value only: no bounds, no plan.
    pub fn value_only(solver: SolverChoice) -> Self {
        Self { solver, bounds: false, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdepResult {
    pub value: f64,
    pub plan: Option<TransportPlan>,
    pub bound_pi1: Option<f64>,
    pub bound_pi2: Option<f64>,
    pub bound_pi3: Option<f64>,
    /// `diam_{c_X} μ`; zero when the X-marginal cost is unavailable (infinite α).
    pub diam_x: f64,
    pub diam_y: f64,
    pub solver: SolverUsed,
}

impl TdepResult {
    /// Smallest populated bound.
    pub fn min_bound(&self) -> Option<f64> {
        [self.bound_pi1, self.bound_pi2, self.bound_pi3].into_iter().flatten().reduce(f64::min)
    }
}

pub fn tdep(gamma: &JointDiscreteMeasure, spec: &CostSpec, solver: SolverChoice) -> Result<TdepResult> {
    tdep_with(gamma, spec, &TdepOptions::with_solver(solver))
}

pub fn tdep_with(gamma: &JointDiscreteMeasure, spec: &CostSpec, opts: &TdepOptions) -> Result<TdepResult> {
    spec.validate()?;
    let c_y = spec.marginal_y();
    let (_, nu) = gamma.marginals();
    let diam_y = diameter(&nu, &c_y);

    if spec.is_infinite_alpha() {
        // α = ∞ is the marginal transport dependency, computed exactly per x-group.
        let value = marginal_tdep_grouped(gamma, &c_y, opts.grouping)?;
        return Ok(TdepResult {
            value,
            plan: None,
            bound_pi1: opts.bounds.then_some(diam_y),
            bound_pi2: None,
            bound_pi3: opts.bounds.then_some(value),
            diam_x: 0.0,
            diam_y,
            solver: SolverUsed::Exact,
        });
    }

    let c_x = spec.marginal_x()?;
    let (mu, nu) = gamma.marginals();
    let diam_x = diameter(&mu, &c_x);
    let (mu, nu) = if opts.merge_marginals { (mu.coalesce(), nu.coalesce()) } else { (mu, nu) };
    let n = gamma.len();
    let dst_len = mu.len().saturating_mul(nu.len());
    if dst_len > opts.atom_budget {
        return Err(Error::Capacity { requested: dst_len, budget: opts.atom_budget });
    }

    let cost = ProductCost::new(spec, gamma, &mu, &nu)?;
    let w = gamma.weights();
    let b: Vec<f64> = mu.weights().iter().flat_map(|&wk| nu.weights().iter().map(move |&wl| wk * wl)).collect();
    let solver = match opts.solver {
        SolverChoice::Exact => SolverUsed::Exact,
        SolverChoice::Sinkhorn => SolverUsed::Sinkhorn,
        SolverChoice::Auto if n.saturating_mul(dst_len) <= opts.exact_limit => SolverUsed::Exact,
        SolverChoice::Auto => SolverUsed::Sinkhorn,
    };
    let (mut value, plan) = match (solver, opts.keep_plan) {
        (SolverUsed::Exact, false) => (exact_cost(w, &b, &cost)?, None),
        (SolverUsed::Exact, true) => {
            let (plan, _) = solve_exact(w, &b, &cost)?;
            (plan.primal_cost, Some(plan))
        }
        (SolverUsed::Sinkhorn, keep) => {
            let sol = solve_sinkhorn_scaled(w, &b, &cost, &opts.sinkhorn)?;
            (sol.plan.primal_cost, keep.then_some(sol.plan))
        }
    };

    let (bound_pi1, bound_pi2, bound_pi3) = if opts.bounds {
        (
            Some(bound_pi1(gamma, &c_y)),
            Some(bound_pi2(gamma, &c_x, &c_y)),
            Some(marginal_tdep_grouped(gamma, &c_y, opts.grouping)?),
        )
    } else {
        (None, None, None)
    };

    if value < 0.0 {
        if value < -NEGATIVE_DRIFT {
            return Err(Error::Numerical(format!("negative transport dependency {value}")));
        }
        value = 0.0;
    }
    let mut result = TdepResult { value, plan, bound_pi1, bound_pi2, bound_pi3, diam_x, diam_y, solver };
    // Each bound is the cost of a feasible coupling, so an approximate value above one
    // of them can be improved to it.
    if solver == SolverUsed::Sinkhorn {
        if let Some(bound) = result.min_bound() {
            result.value = result.value.min(bound);
        }
    }
    Ok(result)
}

/// `diam_{c_Y} ν`, the cost of the plan that never moves mass within X.
pub fn bound_pi1(gamma: &JointDiscreteMeasure, c_y: &MarginalCost) -> f64 {
    diameter(&gamma.marginals().1, c_y)
}

/// `(γ⊗γ) min(c_X, c_Y)`.
pub fn bound_pi2(gamma: &JointDiscreteMeasure, c_x: &MarginalCost, c_y: &MarginalCost) -> f64 {
    let n = gamma.len();
    let w = gamma.weights();
    let mut total = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in (i + 1)..n {
            let cx = c_x.eval(gamma.x(i), gamma.x(j));
            let cy = c_y.eval(gamma.y(i), gamma.y(j));
            row += w[j] * cx.min(cy);
        }
        total += w[i] * row;
    }
    2.0 * total
}

/// `τ^Y(γ)` with exact grouping of x-coordinates; also the third upper bound.
pub fn bound_pi3(gamma: &JointDiscreteMeasure, c_y: &MarginalCost) -> Result<f64> {
    marginal_tdep_grouped(gamma, c_y, XGrouping::Exact)
}

/// The marginal transport dependency `Σ_G W_G · T_{c_Y}(γ(·|x_G), ν)`.
pub fn marginal_tdep(gamma: &JointDiscreteMeasure, c_y: &MarginalCost) -> Result<f64> {
    marginal_tdep_grouped(gamma, c_y, XGrouping::Exact)
}

pub fn marginal_tdep_grouped(gamma: &JointDiscreteMeasure, c_y: &MarginalCost, grouping: XGrouping) -> Result<f64> {
    let (_, nu) = gamma.marginals();
    let w = gamma.weights();
    let mut total = 0.0;
    for group in group_by_x(gamma, grouping) {
        let mass: f64 = group.iter().map(|&i| w[i]).sum();
        if mass <= 0.0 {
            continue;
        }
        if group.len() == 1 {
            let y = gamma.y(group[0]);
            total += mass * nu.points().zip(nu.weights()).map(|(yl, wl)| wl * c_y.eval(y, yl)).sum::<f64>();
        } else {
            total += mass * conditional_cost(gamma, &group, &nu, c_y)?;
        }
    }
    Ok(total.max(0.0))
}

fn conditional_measure(gamma: &JointDiscreteMeasure, group: &[usize]) -> Result<DiscreteMeasure> {
    let w = gamma.weights();
    let mass: f64 = group.iter().map(|&i| w[i]).sum();
    let coords = group.iter().flat_map(|&i| gamma.y(i).iter().copied()).collect();
    let weights = group.iter().map(|&i| w[i] / mass).collect();
    DiscreteMeasure::from_flat(gamma.y_dim(), coords, weights)
}

fn conditional_cost(gamma: &JointDiscreteMeasure, group: &[usize], nu: &DiscreteMeasure, c_y: &MarginalCost) -> Result<f64> {
    let cond = conditional_measure(gamma, group)?;
    let cost = marginal_cost_matrix(c_y, &cond, nu);
    exact_cost(cond.weights(), nu.weights(), &cost)
}

/// Partitions atom indices by x-coordinate, groups ordered by first occurrence.
pub fn group_by_x(gamma: &JointDiscreteMeasure, grouping: XGrouping) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    match grouping {
        XGrouping::Exact => {
            let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
            for i in 0..gamma.len() {
                let key: Vec<u64> = gamma.x(i).iter().map(|v| canonical_bits(*v)).collect();
                let slot = *index.entry(key).or_insert_with(|| {
                    groups.push(Vec::new());
                    groups.len() - 1
                });
                groups[slot].push(i);
            }
        }
        XGrouping::Tolerance(tol) => {
            for i in 0..gamma.len() {
                let x = gamma.x(i);
                let near = groups.iter().position(|g| {
                    gamma.x(g[0]).iter().zip(x).all(|(a, b)| (a - b).abs() <= tol)
                });
                match near {
                    Some(k) => groups[k].push(i),
                    None => groups.push(vec![i]),
                }
            }
        }
    }
    groups
}

/// π₁: atom `i` sends `w_i w_l` to product atom `(i, l)`.
pub fn plan_pi1(gamma: &JointDiscreteMeasure, spec: &CostSpec) -> Result<TransportPlan> {
    let n = gamma.len();
    let w = gamma.weights();
    let entries = (0..n).flat_map(|i| (0..n).map(move |l| (i, i * n + l, w[i] * w[l]))).collect();
    TransportPlan::from_entries(entries, n, n * n, &ProductCost::for_joint(spec, gamma)?)
}

/// π₂: pairs with `c_X ≥ c_Y` (ties included) move vertically to `(x_i, y_j)`, the others
/// move horizontally to `(x_j, y_i)`.
pub fn plan_pi2(gamma: &JointDiscreteMeasure, spec: &CostSpec) -> Result<TransportPlan> {
    let n = gamma.len();
    let w = gamma.weights();
    let (c_x, c_y) = (spec.marginal_x()?, spec.marginal_y());
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let vertical = c_x.eval(gamma.x(i), gamma.x(j)) >= c_y.eval(gamma.y(i), gamma.y(j));
            let dst = if vertical { i * n + j } else { j * n + i };
            entries.push((i, dst, w[i] * w[j]));
        }
    }
    TransportPlan::from_entries(entries, n, n * n, &ProductCost::for_joint(spec, gamma)?)
}

/// π₃: within each x-group, the optimal conditional plans `P_G` to ν, spread over the
/// group's product atoms: atom `i ∈ G` sends `P_G(i, l) · w_k` to `(k, l)` for `k ∈ G`.
pub fn plan_pi3(gamma: &JointDiscreteMeasure, spec: &CostSpec) -> Result<TransportPlan> {
    let n = gamma.len();
    let w = gamma.weights();
    let (_, nu) = gamma.marginals();
    let c_y = spec.marginal_y();
    let mut entries = Vec::new();
    for group in group_by_x(gamma, XGrouping::Exact) {
        let cond = conditional_measure(gamma, &group)?;
        let cost = marginal_cost_matrix(&c_y, &cond, &nu);
        let (p_g, _) = solve_exact(cond.weights(), nu.weights(), &cost)?;
        for &(gi, l, mass) in &p_g.entries {
            let i = group[gi];
            for &k in &group {
                entries.push((i, k * n + l, mass * w[k]));
            }
        }
    }
    TransportPlan::from_entries(entries, n, n * n, &ProductCost::for_joint(spec, gamma)?)
}

/// Default growth `α_n = n^{1/(2p)}` for estimating `τ^Y` from samples.
pub fn default_alpha_schedule(n: usize, p: f64) -> f64 {
    pow(n as f64, 1.0 / (2.0 * p))
}

/// `τ` under the additive cost with `α = alpha_of_n(n)`; a consistent estimator of `τ^Y`
/// when `α_n → ∞` slowly enough.
pub fn tdep_alpha_schedule(
    gamma: &JointDiscreteMeasure,
    spec: &CostSpec,
    alpha_of_n: impl Fn(usize) -> f64,
    solver: SolverChoice,
) -> Result<f64> {
    let alpha = alpha_of_n(gamma.len());
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("schedule produced alpha {alpha}")));
    }
    let mut scheduled = CostSpec::additive(alpha, spec.p).with_metrics(spec.metric_x, spec.metric_y);
    if let crate::costs::CostFamily::Additive { beta_x, .. } = spec.family {
        scheduled = scheduled.with_beta_x(beta_x);
    }
    Ok(tdep_with(gamma, &scheduled, &TdepOptions::value_only(solver))?.value)
}
