//! Random instances and property checks shared by the property suites and the acceptance run.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use tdep::coefficients::{rho_alpha, rho_star};
use tdep::costs::{cost_matrix, marginal_cost_matrix, pow, CostSpec, MarginalCost, Metric};
use tdep::measures::{convolve, mixture, product, push_forward, AffineMap, DiscreteMeasure, JointDiscreteMeasure};
use tdep::ot::{exact_cost, solve_exact};
use tdep::tdep::{tdep, tdep_with, SolverChoice, TdepOptions};

pub type Check = Result<(), TestCaseError>;

/// Slack for comparisons between exact solves.
pub const TOL: f64 = 1e-7;

fn coordinate() -> BoxedStrategy<f64> {
    // Half-integer grid values produce ties and shared x-groups; the rest are generic.
    prop_oneof![(-4i32..=4).prop_map(|k| k as f64 * 0.5), -2.0f64..2.0].boxed()
}

fn normalized(w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Joint measures with `n` atoms in ℝ^r × ℝ^q and random positive weights.
pub fn joint(r: usize, q: usize, n: std::ops::RangeInclusive<usize>) -> BoxedStrategy<JointDiscreteMeasure> {
    n.prop_flat_map(move |n| {
        (
            prop::collection::vec(coordinate(), n * r),
            prop::collection::vec(coordinate(), n * q),
            prop::collection::vec(0.1f64..1.0, n),
        )
    })
    .prop_map(move |(x, y, w)| JointDiscreteMeasure::from_flat(r, q, x, y, normalized(w)).unwrap())
    .boxed()
}

pub fn measure(d: usize, n: std::ops::RangeInclusive<usize>) -> BoxedStrategy<DiscreteMeasure> {
    n.prop_flat_map(move |n| (prop::collection::vec(coordinate(), n * d), prop::collection::vec(0.1f64..1.0, n)))
        .prop_map(move |(c, w)| DiscreteMeasure::from_flat(d, c, normalized(w)).unwrap())
        .boxed()
}

/// One- or two-atom kernels near the origin.
fn kernel(d: usize) -> BoxedStrategy<DiscreteMeasure> {
    (1usize..=2)
        .prop_flat_map(move |n| (prop::collection::vec(-1.0f64..1.0, n * d), prop::collection::vec(0.1f64..1.0, n)))
        .prop_map(move |(c, w)| DiscreteMeasure::from_flat(d, c, normalized(w)).unwrap())
        .boxed()
}

fn additive_spec() -> BoxedStrategy<CostSpec> {
    (0.2f64..5.0, prop_oneof![Just(0.5), Just(1.0), Just(2.0), 0.5f64..3.0], prop_oneof![Just(1.0), 0.5f64..2.0])
        .prop_map(|(alpha, p, beta)| CostSpec::additive(alpha, p).with_beta_x(beta))
        .boxed()
}

fn tau(gamma: &JointDiscreteMeasure, spec: &CostSpec) -> Result<f64, TestCaseError> {
    tdep_with(gamma, spec, &TdepOptions::value_only(SolverChoice::Exact))
        .map(|r| r.value)
        .map_err(|e| TestCaseError::fail(e.to_string()))
}

fn ot(a: &DiscreteMeasure, b: &DiscreteMeasure, cost: &MarginalCost) -> Result<f64, TestCaseError> {
    exact_cost(a.weights(), b.weights(), &marginal_cost_matrix(cost, a, b)).map_err(|e| TestCaseError::fail(e.to_string()))
}

fn has_spread(m: &DiscreteMeasure) -> bool {
    m.points().any(|p| p != m.point(0))
}

// ---- bound sandwich ----

#[derive(Debug, Clone)]
pub struct SandwichCase {
    pub gamma: JointDiscreteMeasure,
    pub spec: CostSpec,
}

pub fn sandwich_case() -> BoxedStrategy<SandwichCase> {
    (joint(1, 1, 1..=6), additive_spec()).prop_map(|(gamma, spec)| SandwichCase { gamma, spec }).boxed()
}

/// `τ ≤ π₃ ≤ π₁` and `τ ≤ π₂ ≤ min(diam_{c_X} μ, diam_{c_Y} ν)`.
pub fn check_sandwich(c: &SandwichCase) -> Check {
    let r = tdep(&c.gamma, &c.spec, SolverChoice::Exact).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let (p1, p2, p3) = (r.bound_pi1.unwrap(), r.bound_pi2.unwrap(), r.bound_pi3.unwrap());
    prop_assert!(r.value <= p3 + TOL, "tau {} above pi3 {p3}", r.value);
    prop_assert!(p3 <= p1 + TOL, "pi3 {p3} above pi1 {p1}");
    prop_assert!(r.value <= p2 + TOL, "tau {} above pi2 {p2}", r.value);
    prop_assert!(p2 <= r.diam_x.min(r.diam_y) + TOL, "pi2 {p2} above the smaller diameter");
    prop_assert!((p1 - r.diam_y).abs() <= 1e-9);
    Ok(())
}

// ---- convexity with a shared first marginal ----

#[derive(Debug, Clone)]
pub struct ConvexityCase {
    pub g0: JointDiscreteMeasure,
    pub g1: JointDiscreteMeasure,
    pub t: f64,
    pub spec: CostSpec,
}

pub fn convexity_case() -> BoxedStrategy<ConvexityCase> {
    (1usize..=4)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(coordinate(), n),
                prop::collection::vec(coordinate(), n),
                prop::collection::vec(coordinate(), n),
                prop::collection::vec(0.1f64..1.0, n),
                0.0f64..=1.0,
                additive_spec(),
            )
        })
        .prop_map(|(x, y0, y1, w, t, spec)| {
            let w = normalized(w);
            let g0 = JointDiscreteMeasure::from_flat(1, 1, x.clone(), y0, w.clone()).unwrap();
            let g1 = JointDiscreteMeasure::from_flat(1, 1, x, y1, w).unwrap();
            ConvexityCase { g0, g1, t, spec }
        })
        .boxed()
}

pub fn check_convexity(c: &ConvexityCase) -> Check {
    let mixed = mixture(&c.g0, &c.g1, c.t).unwrap().coalesce();
    let lhs = tau(&mixed, &c.spec)?;
    let rhs = (1.0 - c.t) * tau(&c.g0, &c.spec)? + c.t * tau(&c.g1, &c.spec)?;
    prop_assert!(lhs <= rhs + TOL, "tau(mixture) {lhs} above the chord {rhs}");
    Ok(())
}

// ---- contamination with an independent part under a metric cost ----

#[derive(Debug, Clone)]
pub struct ContaminationCase {
    pub gamma: JointDiscreteMeasure,
    pub alpha: f64,
}

pub fn contamination_case() -> BoxedStrategy<ContaminationCase> {
    (joint(1, 1, 1..=4), 0.2f64..5.0).prop_map(|(gamma, alpha)| ContaminationCase { gamma, alpha }).boxed()
}

/// `τ((1 − t)γ + t μ⊗ν) = (1 − t) τ(γ)` for `t ∈ {1/4, 1/2, 3/4}` when `p = 1`.
pub fn check_contamination(c: &ContaminationCase) -> Check {
    let spec = CostSpec::additive(c.alpha, 1.0);
    let base = tau(&c.gamma, &spec)?;
    let (mu, nu) = c.gamma.marginals();
    let independent = product(&mu, &nu).unwrap();
    for t in [0.25, 0.5, 0.75] {
        let contaminated = mixture(&c.gamma, &independent, t).unwrap().coalesce();
        let value = tau(&contaminated, &spec)?;
        prop_assert!((value - (1.0 - t) * base).abs() <= TOL, "t={t}: {value} vs {}", (1.0 - t) * base);
    }
    Ok(())
}

// ---- invariance under isometries of each factor ----

#[derive(Debug, Clone)]
pub struct IsometryCase {
    pub gamma: JointDiscreteMeasure,
    pub spec: CostSpec,
    pub angle: f64,
    pub reflect_x: bool,
    pub reflect_y: bool,
    pub shift: (f64, f64, f64),
}

pub fn isometry_case() -> BoxedStrategy<IsometryCase> {
    (
        joint(2, 1, 1..=5),
        additive_spec(),
        0.0f64..std::f64::consts::TAU,
        any::<bool>(),
        any::<bool>(),
        (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
    )
        .prop_map(|(gamma, spec, angle, reflect_x, reflect_y, shift)| IsometryCase {
            gamma,
            spec,
            angle,
            reflect_x,
            reflect_y,
            shift,
        })
        .boxed()
}

pub fn check_isometry(c: &IsometryCase) -> Check {
    let (s, co) = c.angle.sin_cos();
    let flip = if c.reflect_x { -1.0 } else { 1.0 };
    let fx = AffineMap::new(vec![co, -s * flip, s, co * flip], vec![c.shift.0, c.shift.1]).unwrap();
    let fy = AffineMap::new(vec![if c.reflect_y { -1.0 } else { 1.0 }], vec![c.shift.2]).unwrap();
    let moved = push_forward(&c.gamma, &fx, &fy).unwrap();
    let (a, b) = (tau(&c.gamma, &c.spec)?, tau(&moved, &c.spec)?);
    prop_assert!((a - b).abs() <= TOL, "{a} vs {b}");
    Ok(())
}

// ---- convolution with a product kernel ----

#[derive(Debug, Clone)]
pub struct ConvolutionCase {
    pub gamma: JointDiscreteMeasure,
    pub kx: DiscreteMeasure,
    pub ky: DiscreteMeasure,
    pub p: f64,
}

pub fn convolution_case() -> BoxedStrategy<ConvolutionCase> {
    (joint(1, 1, 1..=4), kernel(1), kernel(1), prop_oneof![Just(1.0), Just(2.0), 1.0f64..3.0])
        .prop_map(|(gamma, kx, ky, p)| ConvolutionCase { gamma, kx, ky, p })
        .boxed()
}

/// For `c = d^p`: `τ(γ * κ) ≤ τ(γ)` and `τ^{1/p}(γ) − τ^{1/p}(γ * κ) ≤ 2 (κh)^{1/p}`.
pub fn check_convolution(c: &ConvolutionCase) -> Check {
    let spec = CostSpec::raw(Metric::Euclidean, c.p);
    let blurred = convolve(&c.gamma, &c.kx, &c.ky).unwrap().coalesce();
    let (before, after) = (tau(&c.gamma, &spec)?, tau(&blurred, &spec)?);
    prop_assert!(after <= before + TOL, "convolution raised tau from {before} to {after}");
    let mut kh = 0.0;
    for (a, &u) in c.kx.points().zip(c.kx.weights()) {
        for (b, &v) in c.ky.points().zip(c.ky.weights()) {
            kh += u * v * spec.eval(&[0.0], &[0.0], a, b).unwrap();
        }
    }
    let inv = 1.0 / c.p;
    let gap = pow(before, inv) - pow(after, inv);
    prop_assert!(gap <= 2.0 * pow(kh, inv) + TOL, "gap {gap} above 2 (κh)^(1/p) = {}", 2.0 * pow(kh, inv));
    Ok(())
}

// ---- stability under perturbation of γ ----

#[derive(Debug, Clone)]
pub struct StabilityCase {
    pub g0: JointDiscreteMeasure,
    pub g1: JointDiscreteMeasure,
    pub alpha: f64,
    pub p: f64,
}

pub fn stability_case() -> BoxedStrategy<StabilityCase> {
    (joint(1, 1, 1..=5), joint(1, 1, 1..=5), 0.2f64..5.0, prop_oneof![Just(1.0), Just(2.0), 1.0f64..3.0])
        .prop_map(|(g0, g1, alpha, p)| StabilityCase { g0, g1, alpha, p })
        .boxed()
}

/// `|τ^{1/p}(γ) − τ^{1/p}(γ′)| ≤ 3 T_c(γ, γ′)^{1/p}`.
pub fn check_stability(c: &StabilityCase) -> Check {
    let spec = CostSpec::additive(c.alpha, c.p);
    let inv = 1.0 / c.p;
    let (a, b) = (pow(tau(&c.g0, &spec)?, inv), pow(tau(&c.g1, &spec)?, inv));
    let between = exact_cost(c.g0.weights(), c.g1.weights(), &cost_matrix(&spec, &c.g0, &c.g1).unwrap()).unwrap();
    prop_assert!((a - b).abs() <= 3.0 * pow(between, inv) + TOL, "{a} vs {b}, T = {between}");
    Ok(())
}

// ---- monotonicity of ρ_α in α ----

#[derive(Debug, Clone)]
pub struct AlphaCase {
    pub gamma: JointDiscreteMeasure,
    pub alphas: (f64, f64),
    pub p: f64,
}

pub fn alpha_case() -> BoxedStrategy<AlphaCase> {
    (joint(1, 1, 2..=6), 0.05f64..10.0, 0.05f64..10.0, prop_oneof![Just(0.5), Just(1.0), Just(2.0), 0.5f64..3.0])
        .prop_map(|(gamma, a, b, p)| AlphaCase { gamma, alphas: (a.min(b), a.max(b)), p })
        .boxed()
}

pub fn check_alpha_monotone(c: &AlphaCase) -> Check {
    prop_assume!(has_spread(&c.gamma.marginals().1));
    let lo = rho_alpha(&c.gamma, c.alphas.0, c.p, SolverChoice::Exact).unwrap();
    let hi = rho_alpha(&c.gamma, c.alphas.1, c.p, SolverChoice::Exact).unwrap();
    prop_assert!(lo <= hi + TOL, "rho at {} is {lo}, at {} is {hi}", c.alphas.0, c.alphas.1);
    Ok(())
}

// ---- ρ_* under swapping X and Y ----

#[derive(Debug, Clone)]
pub struct SwapCase {
    pub gamma: JointDiscreteMeasure,
    pub p: f64,
}

pub fn swap_case() -> BoxedStrategy<SwapCase> {
    (joint(1, 2, 2..=5), prop_oneof![Just(1.0), Just(2.0), 0.5f64..3.0]).prop_map(|(gamma, p)| SwapCase { gamma, p }).boxed()
}

pub fn check_swap_symmetry(c: &SwapCase) -> Check {
    let (mu, nu) = c.gamma.marginals();
    prop_assume!(has_spread(&mu) && has_spread(&nu));
    let a = rho_star(&c.gamma, c.p, SolverChoice::Exact).unwrap();
    let b = rho_star(&c.gamma.swap(), c.p, SolverChoice::Exact).unwrap();
    prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    Ok(())
}

// ---- uniformly close costs ----

#[derive(Debug, Clone)]
pub struct PerturbationCase {
    pub gamma: JointDiscreteMeasure,
    pub alphas: (f64, f64),
    pub p: f64,
}

pub fn perturbation_case() -> BoxedStrategy<PerturbationCase> {
    (joint(1, 1, 1..=5), 0.2f64..5.0, 0.5f64..2.0, prop_oneof![Just(1.0), Just(2.0), 0.5f64..3.0])
        .prop_map(|(gamma, alpha, ratio, p)| PerturbationCase { gamma, alphas: (alpha, alpha * ratio), p })
        .boxed()
}

/// With `a = sup |c/c′ − 1|` over the atoms involved, `|T_c − T_{c′}| ≤ a(1 + a) T_{c′}`.
pub fn check_uniform_perturbation(c: &PerturbationCase) -> Check {
    let (s1, s2) = (CostSpec::additive(c.alphas.0, c.p), CostSpec::additive(c.alphas.1, c.p));
    let (mu, nu) = c.gamma.marginals();
    let independent = product(&mu, &nu).unwrap();
    let (m1, m2) = (cost_matrix(&s1, &c.gamma, &independent).unwrap(), cost_matrix(&s2, &c.gamma, &independent).unwrap());
    let mut a = 0.0f64;
    for (&v1, &v2) in m1.data().iter().zip(m2.data()) {
        if v2 > 0.0 {
            a = a.max((v1 / v2 - 1.0).abs());
        } else {
            prop_assert!(v1 == 0.0);
        }
    }
    let (t1, t2) = (tau(&c.gamma, &s1)?, tau(&c.gamma, &s2)?);
    prop_assert!((t1 - t2).abs() <= a * (1.0 + a) * t2 + TOL, "{t1} vs {t2}, a = {a}");
    Ok(())
}

// ---- solver certificates and metric structure of T ----

#[derive(Debug, Clone)]
pub struct PairCase {
    pub a: DiscreteMeasure,
    pub b: DiscreteMeasure,
    pub p: f64,
}

pub fn pair_case() -> BoxedStrategy<PairCase> {
    (measure(2, 1..=8), measure(2, 1..=8), prop_oneof![Just(0.5), Just(1.0), Just(2.0), 0.5f64..3.0])
        .prop_map(|(a, b, p)| PairCase { a, b, p })
        .boxed()
}

/// `0 ≤ primal − dual ≤ 1e-7 (1 + |primal|)`, a feasible dual, exact marginals.
pub fn check_duality(c: &PairCase) -> Check {
    let cost = marginal_cost_matrix(&MarginalCost::metric_power(Metric::Euclidean, c.p), &c.a, &c.b);
    let (plan, dual) = solve_exact(c.a.weights(), c.b.weights(), &cost).unwrap();
    let gap = plan.primal_cost - dual.dual_value;
    prop_assert!(gap >= -1e-12 && gap <= 1e-7 * (1.0 + plan.primal_cost.abs()), "gap {gap}");
    prop_assert!(dual.max_violation(&cost) <= 1e-7);
    prop_assert!(plan.marginal_error(c.a.weights(), c.b.weights()) <= 1e-9);
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TripleCase {
    pub m: [DiscreteMeasure; 3],
    pub p: f64,
    pub metric: Metric,
}

pub fn triple_case() -> BoxedStrategy<TripleCase> {
    (
        measure(2, 1..=6),
        measure(2, 1..=6),
        measure(2, 1..=6),
        prop_oneof![Just(1.0), Just(2.0), 1.0f64..4.0],
        prop_oneof![Just(Metric::Euclidean), Just(Metric::L1), Just(Metric::LInf)],
    )
        .prop_map(|(a, b, r, p, metric)| TripleCase { m: [a, b, r], p, metric })
        .boxed()
}

/// `|T^{1/p}(μ, ρ) − T^{1/p}(ν, ρ)| ≤ T^{1/p}(μ, ν)` for `c = d^p`, `p ≥ 1`.
pub fn check_triangle(c: &TripleCase) -> Check {
    let cost = MarginalCost::metric_power(c.metric, c.p);
    let [mu, nu, rho] = &c.m;
    let root = |v: f64| pow(v, 1.0 / c.p);
    let (mr, nr, mn) = (root(ot(mu, rho, &cost)?), root(ot(nu, rho, &cost)?), root(ot(mu, nu, &cost)?));
    prop_assert!((mr - nr).abs() <= mn + TOL, "|{mr} - {nr}| above {mn}");
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ContractionCase {
    pub a: DiscreteMeasure,
    pub b: DiscreteMeasure,
    pub kernel: DiscreteMeasure,
    pub p: f64,
}

pub fn contraction_case() -> BoxedStrategy<ContractionCase> {
    (measure(2, 1..=5), measure(2, 1..=5), kernel(2), prop_oneof![Just(0.5), Just(1.0), Just(2.0), 0.5f64..3.0])
        .prop_map(|(a, b, kernel, p)| ContractionCase { a, b, kernel, p })
        .boxed()
}

fn blur(m: &DiscreteMeasure, k: &DiscreteMeasure) -> DiscreteMeasure {
    let (mut coords, mut weights) = (Vec::new(), Vec::new());
    for (p, &w) in m.points().zip(m.weights()) {
        for (s, &u) in k.points().zip(k.weights()) {
            coords.extend(p.iter().zip(s).map(|(a, b)| a + b));
            weights.push(w * u);
        }
    }
    DiscreteMeasure::from_flat(m.dim(), coords, weights).unwrap()
}

/// `T(μ * κ, ν * κ) ≤ T(μ, ν)` and `T(μ, μ * κ) ≤ κh` for the translation invariant `d^p`.
pub fn check_contraction(c: &ContractionCase) -> Check {
    let cost = MarginalCost::metric_power(Metric::Euclidean, c.p);
    let (ab, ak) = (blur(&c.a, &c.kernel), blur(&c.b, &c.kernel));
    let (plain, blurred) = (ot(&c.a, &c.b, &cost)?, ot(&ab, &ak, &cost)?);
    prop_assert!(blurred <= plain + 1e-9, "{blurred} above {plain}");
    let origin = vec![0.0; c.kernel.dim()];
    let kh: f64 = c.kernel.points().zip(c.kernel.weights()).map(|(s, &u)| u * cost.eval(&origin, s)).sum();
    let moved = ot(&c.a, &ab, &cost)?;
    prop_assert!(moved <= kh + 1e-9, "{moved} above κh = {kh}");
    Ok(())
}
