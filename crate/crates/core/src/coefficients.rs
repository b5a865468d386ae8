//! Normalized dependency coefficients built on the transport dependency, plus the classical
//! Pearson, Spearman and distance correlations.

use crate::costs::{pow, CostSpec, MarginalCost, Metric};
use crate::error::{Error, Result};
use crate::measures::{diameter, DiscreteMeasure, JointDiscreteMeasure};
use crate::tdep::{marginal_tdep, tdep_with, SolverChoice, SolverUsed, TdepOptions};

/// Ratios above 1 by at most this much are clamped; anything larger is an error.
const RATIO_DRIFT: f64 = 1e-7;
/// Negative squared distance covariances down to this value are roundoff.
const DCOV_DRIFT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoefficientKind {
    RhoAlpha,
    RhoInf,
    RhoStar,
    RhoContracting,
    Pearson,
    Spearman,
    Dcor,
}

impl CoefficientKind {
    pub fn name(self) -> &'static str {
        match self {
            CoefficientKind::RhoAlpha => "rho_alpha",
            CoefficientKind::RhoInf => "rho_inf",
            CoefficientKind::RhoStar => "rho_star",
            CoefficientKind::RhoContracting => "rho_contracting",
            CoefficientKind::Pearson => "pearson",
            CoefficientKind::Spearman => "spearman",
            CoefficientKind::Dcor => "dcor",
        }
    }

    /// Signed coefficients; permutation tests use their absolute value.
    pub fn is_signed(self) -> bool {
        matches!(self, CoefficientKind::Pearson | CoefficientKind::Spearman)
    }
}

impl std::str::FromStr for CoefficientKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rho_alpha" => CoefficientKind::RhoAlpha,
            "rho_inf" => CoefficientKind::RhoInf,
            "rho_star" => CoefficientKind::RhoStar,
            "rho_contracting" => CoefficientKind::RhoContracting,
            "pearson" => CoefficientKind::Pearson,
            "spearman" => CoefficientKind::Spearman,
            "dcor" => CoefficientKind::Dcor,
            other => return Err(Error::InvalidParameter(format!("unknown coefficient '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRequest {
    pub kind: CoefficientKind,
    /// Required for `RhoAlpha` only.
    pub alpha: Option<f64>,
    pub p: f64,
    pub metric_x: Metric,
    pub metric_y: Metric,
    pub solver: SolverChoice,
}

impl CoefficientRequest {
    pub fn new(kind: CoefficientKind) -> Self {
        Self { kind, alpha: None, p: 1.0, metric_x: Metric::Euclidean, metric_y: Metric::Euclidean, solver: SolverChoice::Auto }
    }

    pub fn rho_alpha(alpha: f64, p: f64) -> Self {
        Self { alpha: Some(alpha), p, ..Self::new(CoefficientKind::RhoAlpha) }
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn with_solver(mut self, solver: SolverChoice) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_metrics(mut self, metric_x: Metric, metric_y: Metric) -> Self {
        self.metric_x = metric_x;
        self.metric_y = metric_y;
        self
    }
}

/// A coefficient value with the transport quantities it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientValue {
    pub kind: CoefficientKind,
    pub value: f64,
    /// Transport dependency under the coefficient's cost (`c_*` for `RhoStar`).
    pub tau: Option<f64>,
    pub diam_x: Option<f64>,
    pub diam_y: Option<f64>,
    /// The α actually used (α_* for `RhoStar`, 1 for `RhoContracting`).
    pub alpha: Option<f64>,
    pub solver: Option<SolverUsed>,
}

impl CoefficientValue {
    fn classical(kind: CoefficientKind, value: f64) -> Self {
        Self { kind, value, tau: None, diam_x: None, diam_y: None, alpha: None, solver: None }
    }
}

pub fn evaluate(gamma: &JointDiscreteMeasure, req: &CoefficientRequest) -> Result<CoefficientValue> {
    let p = req.p;
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::InvalidParameter(format!("p must be positive and finite, got {p}")));
    }
    let kind = req.kind;
    match kind {
        CoefficientKind::Pearson => return Ok(CoefficientValue::classical(kind, pearson(gamma)?)),
        CoefficientKind::Spearman => return Ok(CoefficientValue::classical(kind, spearman(gamma)?)),
        CoefficientKind::Dcor => return Ok(CoefficientValue::classical(kind, dcor(gamma)?)),
        _ => {}
    }

    let (mu, nu) = gamma.marginals();
    let diam_y = diameter(&nu, &MarginalCost::metric_power(req.metric_y, p));
    let diam_x = diameter(&mu, &MarginalCost::metric_power(req.metric_x, p));
    if diam_y <= 0.0 {
        return Err(Error::DegenerateMarginal("Y-marginal has zero diameter"));
    }
    let additive = |alpha: f64| CostSpec::additive(alpha, p).with_metrics(req.metric_x, req.metric_y);
    let solve = |spec: CostSpec| tdep_with(gamma, &spec, &TdepOptions::value_only(req.solver));

    let (tau, denom, alpha, solver) = match kind {
        CoefficientKind::RhoAlpha => {
            let alpha = req.alpha.ok_or_else(|| Error::InvalidParameter("rho_alpha requires alpha".into()))?;
            if !(alpha.is_finite() && alpha > 0.0) {
                return Err(Error::InvalidParameter(format!("alpha must be positive and finite, got {alpha}")));
            }
            let r = solve(additive(alpha))?;
            (r.value, diam_y, Some(alpha), Some(r.solver))
        }
        CoefficientKind::RhoInf => {
            let tau = marginal_tdep(gamma, &MarginalCost::metric_power(req.metric_y, p))?;
            (tau, diam_y, None, Some(SolverUsed::Exact))
        }
        CoefficientKind::RhoStar => {
            if diam_x <= 0.0 {
                return Err(Error::DegenerateMarginal("X-marginal has zero diameter"));
            }
            let (sx, sy) = (pow(diam_x, 1.0 / p), pow(diam_y, 1.0 / p));
            let spec = CostSpec::normalized(sx, sy, p).with_metrics(req.metric_x, req.metric_y);
            let r = solve(spec)?;
            // c_* is already normalized, so τ_{c_*} is the ratio itself.
            (r.value, 1.0, Some(sy / sx), Some(r.solver))
        }
        CoefficientKind::RhoContracting => {
            let denom = diam_x.min(diam_y);
            if denom <= 0.0 {
                return Err(Error::DegenerateMarginal("a marginal has zero diameter"));
            }
            let r = solve(additive(1.0))?;
            (r.value, denom, Some(1.0), Some(r.solver))
        }
        _ => unreachable!("classical coefficients handled above"),
    };
    let value = pow(normalized_ratio(tau, denom)?, 1.0 / p);
    Ok(CoefficientValue {
        kind,
        value,
        tau: Some(tau),
        diam_x: Some(diam_x),
        diam_y: Some(diam_y),
        alpha,
        solver,
    })
}

fn normalized_ratio(tau: f64, denom: f64) -> Result<f64> {
    let ratio = tau / denom;
    if !ratio.is_finite() {
        return Err(Error::Numerical(format!("coefficient ratio {tau}/{denom} is not finite")));
    }
    if ratio > 1.0 + RATIO_DRIFT {
        return Err(Error::Numerical(format!("coefficient ratio {ratio} exceeds 1")));
    }
    Ok(ratio.clamp(0.0, 1.0))
}

/// `ρ_α = (τ_{(α d_X + d_Y)^p} / diam_{d_Y^p} ν)^{1/p}`.
pub fn rho_alpha(gamma: &JointDiscreteMeasure, alpha: f64, p: f64, solver: SolverChoice) -> Result<f64> {
    Ok(evaluate(gamma, &CoefficientRequest::rho_alpha(alpha, p).with_solver(solver))?.value)
}

/// `ρ_∞ = (τ^Y_{d_Y^p} / diam_{d_Y^p} ν)^{1/p}`.
pub fn rho_inf(gamma: &JointDiscreteMeasure, p: f64) -> Result<f64> {
    Ok(evaluate(gamma, &CoefficientRequest::new(CoefficientKind::RhoInf).with_p(p))?.value)
}

/// `ρ_* = τ_{c_*}^{1/p}` with both factors normalized by their p-diameters.
pub fn rho_star(gamma: &JointDiscreteMeasure, p: f64, solver: SolverChoice) -> Result<f64> {
    Ok(evaluate(gamma, &CoefficientRequest::new(CoefficientKind::RhoStar).with_p(p).with_solver(solver))?.value)
}

/// `(τ_{(d_X + d_Y)^p} / min(diam_{d_X^p} μ, diam_{d_Y^p} ν))^{1/p}`.
pub fn rho_contracting(gamma: &JointDiscreteMeasure, p: f64, solver: SolverChoice) -> Result<f64> {
    Ok(evaluate(gamma, &CoefficientRequest::new(CoefficientKind::RhoContracting).with_p(p).with_solver(solver))?
        .value)
}

fn require_scalar(gamma: &JointDiscreteMeasure, what: &str) -> Result<()> {
    if gamma.x_dim() != 1 || gamma.y_dim() != 1 {
        return Err(Error::InvalidParameter(format!("{what} needs one-dimensional x and y")));
    }
    if gamma.len() < 2 {
        return Err(Error::InvalidParameter(format!("{what} needs at least two samples")));
    }
    Ok(())
}

fn weighted_pearson(x: &[f64], y: &[f64], w: &[f64]) -> Result<f64> {
    let mx: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
    let my: f64 = y.iter().zip(w).map(|(a, b)| a * b).sum();
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for ((a, b), wi) in x.iter().zip(y).zip(w) {
        let (da, db) = (a - mx, b - my);
        sxy += wi * da * db;
        sxx += wi * da * da;
        syy += wi * db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::DegenerateMarginal("constant marginal has no correlation"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn pearson(gamma: &JointDiscreteMeasure) -> Result<f64> {
    require_scalar(gamma, "pearson")?;
    weighted_pearson(gamma.x_coords(), gamma.y_coords(), gamma.weights())
}

/// Mid-ranks in units of probability mass: `F(v−) + w(v)/2`, so ties share their average rank.
fn mid_ranks(values: &[f64], w: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut below = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        let tied: f64 = order[start..=end].iter().map(|&i| w[i]).sum();
        for &i in &order[start..=end] {
            ranks[i] = below + tied / 2.0;
        }
        below += tied;
        start = end + 1;
    }
    ranks
}

pub fn spearman(gamma: &JointDiscreteMeasure) -> Result<f64> {
    require_scalar(gamma, "spearman")?;
    let w = gamma.weights();
    weighted_pearson(&mid_ranks(gamma.x_coords(), w), &mid_ranks(gamma.y_coords(), w), w)
}

/// Plug-in `dcov²` of two samples under Euclidean distances.
fn dcov2_measures(a: &DiscreteMeasure, b: &DiscreteMeasure, w: &[f64]) -> f64 {
    let n = w.len();
    let mut joint = 0.0;
    let mut row_a = vec![0.0; n];
    let mut row_b = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let da = Metric::Euclidean.dist(a.point(i), a.point(j));
            let db = Metric::Euclidean.dist(b.point(i), b.point(j));
            joint += w[i] * w[j] * da * db;
            row_a[i] += w[j] * da;
            row_b[i] += w[j] * db;
        }
    }
    let mean_a: f64 = row_a.iter().zip(w).map(|(r, wi)| r * wi).sum();
    let mean_b: f64 = row_b.iter().zip(w).map(|(r, wi)| r * wi).sum();
    let cross: f64 = (0..n).map(|i| w[i] * row_a[i] * row_b[i]).sum();
    joint + mean_a * mean_b - 2.0 * cross
}

fn clamp_dcov2(v: f64) -> Result<f64> {
    if v < -DCOV_DRIFT {
        return Err(Error::Numerical(format!("negative squared distance covariance {v}")));
    }
    Ok(v.max(0.0))
}

/// V-statistic `dcov²(ξ, ζ)` of the empirical measure.
pub fn dcov2(gamma: &JointDiscreteMeasure) -> Result<f64> {
    let (mu, nu) = gamma.marginals();
    clamp_dcov2(dcov2_measures(&mu, &nu, gamma.weights()))
}

/// `dcor = dcov / √(dcov(ξ,ξ) dcov(ζ,ζ))` with plug-in distance covariances.
pub fn dcor(gamma: &JointDiscreteMeasure) -> Result<f64> {
    if gamma.len() < 2 {
        return Err(Error::InvalidParameter("dcor needs at least two samples".into()));
    }
    let (mu, nu) = gamma.marginals();
    let w = gamma.weights();
    let xy = clamp_dcov2(dcov2_measures(&mu, &nu, w))?;
    let xx = clamp_dcov2(dcov2_measures(&mu, &mu, w))?;
    let yy = clamp_dcov2(dcov2_measures(&nu, &nu, w))?;
    if xx <= 0.0 || yy <= 0.0 {
        return Err(Error::DegenerateMarginal("constant marginal has zero distance variance"));
    }
    Ok((xy / (xx * yy).sqrt()).sqrt().min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::product;

    fn diag3() -> JointDiscreteMeasure {
        JointDiscreteMeasure::from_pairs(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]).unwrap()
    }

    fn explicit_product() -> JointDiscreteMeasure {
        let mu = DiscreteMeasure::uniform_1d(&[0.0, 0.3, 1.0, 1.7]).unwrap();
        let nu = DiscreteMeasure::uniform_1d(&[-1.0, 0.5, 2.0]).unwrap();
        product(&mu, &nu).unwrap()
    }

    #[test]
    fn classical_hand_values() {
        assert!((pearson(&diag3()).unwrap() - 1.0).abs() < 1e-15);
        let dec = JointDiscreteMeasure::from_pairs(&[(1.0, 3.0), (2.0, 2.0), (3.0, 1.0)]).unwrap();
        assert!((spearman(&dec).unwrap() + 1.0).abs() < 1e-15);
        assert!((dcor(&diag3()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_uses_average_ranks_for_ties() {
        // x ranks: 1.5, 1.5, 3, 4; y ranks: 1, 2, 3, 4.
        let g = JointDiscreteMeasure::from_pairs(&[(0.0, 0.0), (0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]).unwrap();
        let rx = [1.5, 1.5, 3.0, 4.0];
        let ry = [1.0, 2.0, 3.0, 4.0];
        let m = 2.5;
        let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - m) * (b - m)).sum();
        let sxx: f64 = rx.iter().map(|a| (a - m) * (a - m)).sum();
        let syy: f64 = ry.iter().map(|b| (b - m) * (b - m)).sum();
        assert!((spearman(&g).unwrap() - sxy / (sxx * syy).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dcov_matches_double_centering() {
        let g = JointDiscreteMeasure::from_pairs(&[(0.0, 1.0), (0.5, -0.3), (2.0, 0.7), (1.1, 1.9), (-0.4, 0.0)])
            .unwrap();
        let n = g.len();
        let center = |d: &dyn Fn(usize, usize) -> f64| {
            let m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| d(i, j)).collect()).collect();
            let row: Vec<f64> = m.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
            let all = row.iter().sum::<f64>() / n as f64;
            (0..n).map(|i| (0..n).map(|j| m[i][j] - row[i] - row[j] + all).collect::<Vec<_>>()).collect::<Vec<_>>()
        };
        let a = center(&|i, j| (g.x(i)[0] - g.x(j)[0]).abs());
        let b = center(&|i, j| (g.y(i)[0] - g.y(j)[0]).abs());
        let v: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| a[i][j] * b[i][j]).sum::<f64>()
            / (n * n) as f64;
        assert!((dcov2(&g).unwrap() - v).abs() < 1e-12);
    }

    #[test]
    fn product_gives_zero_transport_coefficients() {
        let g = explicit_product();
        for kind in [CoefficientKind::RhoInf, CoefficientKind::RhoStar, CoefficientKind::RhoContracting] {
            let v = evaluate(&g, &CoefficientRequest::new(kind).with_solver(SolverChoice::Exact)).unwrap().value;
            assert!(v < 1e-6, "{kind:?} {v}");
        }
        assert!(rho_alpha(&g, 2.0, 1.0, SolverChoice::Exact).unwrap() < 1e-6);
        assert!(dcor(&g).unwrap() < 1e-6);
    }

    #[test]
    fn diagonal_is_maximal() {
        let g = diag3();
        assert!((rho_star(&g, 1.0, SolverChoice::Exact).unwrap() - 1.0).abs() < 1e-7);
        assert!((rho_alpha(&g, 1.0, 1.0, SolverChoice::Exact).unwrap() - 1.0).abs() < 1e-7);
        assert!((rho_contracting(&g, 1.0, SolverChoice::Exact).unwrap() - 1.0).abs() < 1e-7);
        assert_eq!(rho_inf(&g, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn rho_inf_hand_value() {
        // ν = Unif{0,1,1}: T(Unif{0,1}, ν) = 1/6, T(δ₁, ν) = 1/3, diam ν = 4/9.
        let g = JointDiscreteMeasure::from_pairs(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]).unwrap();
        let expected = ((2.0 / 3.0) * (1.0 / 6.0) + (1.0 / 3.0) * (1.0 / 3.0)) / (4.0 / 9.0);
        assert!((rho_inf(&g, 1.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn steep_graph_is_below_one_for_small_alpha() {
        let g = JointDiscreteMeasure::from_pairs(&[(0.0, 0.0), (1.0 / 3.0, 1.0), (2.0 / 3.0, 0.0), (1.0, 1.0)]).unwrap();
        assert!((rho_alpha(&g, 3.0, 1.0, SolverChoice::Exact).unwrap() - 1.0).abs() < 1e-7);
        assert!(rho_alpha(&g, 1.0, 1.0, SolverChoice::Exact).unwrap() < 1.0 - 1e-3);
    }

    #[test]
    fn degenerate_marginals_are_errors() {
        let flat_y = JointDiscreteMeasure::from_pairs(&[(0.0, 1.0), (1.0, 1.0)]).unwrap();
        assert!(matches!(rho_alpha(&flat_y, 1.0, 1.0, SolverChoice::Exact), Err(Error::DegenerateMarginal(_))));
        let flat_x = JointDiscreteMeasure::from_pairs(&[(0.0, 0.0), (0.0, 1.0)]).unwrap();
        assert!(matches!(rho_star(&flat_x, 1.0, SolverChoice::Exact), Err(Error::DegenerateMarginal(_))));
        assert!(dcor(&flat_x).is_err());
        let req = CoefficientRequest::new(CoefficientKind::RhoAlpha);
        assert!(matches!(evaluate(&diag3(), &req), Err(Error::InvalidParameter(_))));
    }
}
