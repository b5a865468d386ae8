//! Cost functions on X×Y, their marginal costs, and evaluators consumed by the solvers.

use crate::error::{Error, Result};
use crate::measures::{diameter, DiscreteMeasure, JointDiscreteMeasure};

/// Largest dense cost matrix [`cost_matrix`] will allocate (entries).
pub const DEFAULT_MATRIX_BUDGET: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    L1,
    LInf,
}

impl Metric {
    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        if a.len() == 1 {
            return (a[0] - b[0]).abs();
        }
        let diffs = a.iter().zip(b).map(|(u, v)| (u - v).abs());
        match self {
            Metric::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            Metric::L1 => diffs.sum(),
            Metric::LInf => diffs.fold(0.0, f64::max),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::L1 => "l1",
            Metric::LInf => "linf",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            "l1" | "manhattan" => Ok(Metric::L1),
            "linf" | "max" | "chebyshev" => Ok(Metric::LInf),
            other => Err(Error::InvalidParameter(format!("unknown metric '{other}'"))),
        }
    }
}

/// `t^p` for `t ≥ 0`, exactly 0 at `t = 0`.
#[inline]
pub fn pow(t: f64, p: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if p == 1.0 {
        t
    } else if p == 2.0 {
        t * t
    } else if p == 0.5 {
        t.sqrt()
    } else {
        t.powf(p)
    }
}

/// Weight of the X-distance in the additive family; `Infinite` is a marker only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    Finite(f64),
    Infinite,
}

impl Alpha {
    pub fn finite(self) -> Result<f64> {
        match self {
            Alpha::Finite(a) => Ok(a),
            Alpha::Infinite => Err(Error::InfiniteAlpha),
        }
    }
}

impl std::str::FromStr for Alpha {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if matches!(s.to_ascii_lowercase().as_str(), "inf" | "infinity" | "∞") {
            return Ok(Alpha::Infinite);
        }
        s.parse::<f64>()
            .ok()
            .filter(|a| a.is_finite() && *a > 0.0)
            .map(Alpha::Finite)
            .ok_or_else(|| Error::InvalidParameter(format!("alpha must be a positive real or 'inf', got '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostFamily {
    /// `(α d_X^β + d_Y)^p`.
    Additive { alpha: Alpha, beta_x: f64 },
    /// `d^p` for the chosen metric on the concatenated space ℝ^{r+q}.
    RawPower,
    /// `min(c_X, c_Y)` with the marginal costs of the additive family.
    MinMarginal { alpha: Alpha, beta_x: f64 },
    /// `(d_X / scale_x + d_Y / scale_y)^p`.
    NormalizedIsometric { scale_x: f64, scale_y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSpec {
    pub family: CostFamily,
    pub p: f64,
    pub metric_x: Metric,
    pub metric_y: Metric,
}

/// A cost on a single factor: `factor · d^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalCost {
    pub metric: Metric,
    pub factor: f64,
    pub exponent: f64,
}

impl MarginalCost {
    pub fn metric_power(metric: Metric, p: f64) -> Self {
        Self { metric, factor: 1.0, exponent: p }
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.factor * pow(self.metric.dist(a, b), self.exponent)
    }
}

impl CostSpec {
    pub fn additive(alpha: f64, p: f64) -> Self {
        Self::with_family(CostFamily::Additive { alpha: Alpha::Finite(alpha), beta_x: 1.0 }, p)
    }

    pub fn raw(metric: Metric, p: f64) -> Self {
        Self { family: CostFamily::RawPower, p, metric_x: metric, metric_y: metric }
    }

    pub fn min_marginal(alpha: f64, p: f64) -> Self {
        Self::with_family(CostFamily::MinMarginal { alpha: Alpha::Finite(alpha), beta_x: 1.0 }, p)
    }

    pub fn normalized(scale_x: f64, scale_y: f64, p: f64) -> Self {
        Self::with_family(CostFamily::NormalizedIsometric { scale_x, scale_y }, p)
    }

    pub fn with_family(family: CostFamily, p: f64) -> Self {
        Self { family, p, metric_x: Metric::Euclidean, metric_y: Metric::Euclidean }
    }

    pub fn with_metrics(mut self, metric_x: Metric, metric_y: Metric) -> Self {
        self.metric_x = metric_x;
        self.metric_y = metric_y;
        self
    }

    pub fn with_beta_x(mut self, beta: f64) -> Self {
        match &mut self.family {
            CostFamily::Additive { beta_x, .. } | CostFamily::MinMarginal { beta_x, .. } => *beta_x = beta,
            _ => {}
        }
        self
    }

    pub fn alpha(&self) -> Option<Alpha> {
        match self.family {
            CostFamily::Additive { alpha, .. } | CostFamily::MinMarginal { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    pub fn is_infinite_alpha(&self) -> bool {
        self.alpha() == Some(Alpha::Infinite)
    }

    /// Checks parameters; an infinite α is accepted here and rejected at evaluation.
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{what} must be positive and finite, got {v}")))
            }
        };
        positive(self.p, "p")?;
        match self.family {
            CostFamily::Additive { alpha, beta_x } | CostFamily::MinMarginal { alpha, beta_x } => {
                if let Alpha::Finite(a) = alpha {
                    positive(a, "alpha")?;
                }
                positive(beta_x, "beta_x")
            }
            CostFamily::RawPower => {
                if self.metric_x != self.metric_y {
                    return Err(Error::InvalidParameter(
                        "raw_power cost uses one metric on the concatenated space".into(),
                    ));
                }
                Ok(())
            }
            CostFamily::NormalizedIsometric { scale_x, scale_y } => {
                positive(scale_x, "scale_x")?;
                positive(scale_y, "scale_y")
            }
        }
    }

    /// Cost on X implied by the bound condition `c_X(x₁,x₂) ≥ c(x₁,y,x₂,y)`.
    pub fn marginal_x(&self) -> Result<MarginalCost> {
        let p = self.p;
        Ok(match self.family {
            CostFamily::Additive { alpha, beta_x } | CostFamily::MinMarginal { alpha, beta_x } => MarginalCost {
                metric: self.metric_x,
                factor: pow(alpha.finite()?, p),
                exponent: beta_x * p,
            },
            CostFamily::RawPower => MarginalCost::metric_power(self.metric_x, p),
            CostFamily::NormalizedIsometric { scale_x, .. } => MarginalCost {
                metric: self.metric_x,
                factor: pow(1.0 / scale_x, p),
                exponent: p,
            },
        })
    }

    /// Cost on Y implied by `c_Y(y₁,y₂) ≥ c(x,y₁,x,y₂)`.
    pub fn marginal_y(&self) -> MarginalCost {
        match self.family {
            CostFamily::NormalizedIsometric { scale_y, .. } => MarginalCost {
                metric: self.metric_y,
                factor: pow(1.0 / scale_y, self.p),
                exponent: self.p,
            },
            _ => MarginalCost::metric_power(self.metric_y, self.p),
        }
    }

    /// `c(x₁,y₁,x₂,y₂)`.
    pub fn eval(&self, x1: &[f64], y1: &[f64], x2: &[f64], y2: &[f64]) -> Result<f64> {
        Ok(self.kernel()?.eval(x1, y1, x2, y2))
    }

    pub(crate) fn kernel(&self) -> Result<Kernel> {
        self.validate()?;
        let p = self.p;
        Ok(match self.family {
            CostFamily::Additive { alpha, beta_x } => Kernel {
                a: Part { metric: self.metric_x, factor: alpha.finite()?, exponent: beta_x },
                b: Part { metric: self.metric_y, factor: 1.0, exponent: 1.0 },
                op: Combine::Sum,
                outer: p,
            },
            CostFamily::MinMarginal { alpha, beta_x } => Kernel {
                a: Part { metric: self.metric_x, factor: pow(alpha.finite()?, p), exponent: beta_x * p },
                b: Part { metric: self.metric_y, factor: 1.0, exponent: p },
                op: Combine::Min,
                outer: 1.0,
            },
            CostFamily::NormalizedIsometric { scale_x, scale_y } => Kernel {
                a: Part { metric: self.metric_x, factor: 1.0 / scale_x, exponent: 1.0 },
                b: Part { metric: self.metric_y, factor: 1.0 / scale_y, exponent: 1.0 },
                op: Combine::Sum,
                outer: p,
            },
            CostFamily::RawPower => match self.metric_x {
                Metric::Euclidean => Kernel {
                    a: Part { metric: Metric::Euclidean, factor: 1.0, exponent: 2.0 },
                    b: Part { metric: Metric::Euclidean, factor: 1.0, exponent: 2.0 },
                    op: Combine::Sum,
                    outer: p / 2.0,
                },
                m => Kernel {
                    a: Part { metric: m, factor: 1.0, exponent: 1.0 },
                    b: Part { metric: m, factor: 1.0, exponent: 1.0 },
                    op: if m == Metric::L1 { Combine::Sum } else { Combine::Max },
                    outer: p,
                },
            },
        })
    }
}

/// One factor's contribution `factor · d^exponent` before combination.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Part {
    metric: Metric,
    factor: f64,
    exponent: f64,
}

impl Part {
    #[inline]
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.factor * pow(self.metric.dist(a, b), self.exponent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Combine {
    Sum,
    Max,
    Min,
}

impl Combine {
    #[inline]
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Combine::Sum => a + b,
            Combine::Max => a.max(b),
            Combine::Min => a.min(b),
        }
    }
}

/// Every supported cost has the separable form `outer(op(A(x₁,x₂), B(y₁,y₂)))`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Kernel {
    a: Part,
    b: Part,
    op: Combine,
    outer: f64,
}

impl Kernel {
    #[inline]
    fn eval(&self, x1: &[f64], y1: &[f64], x2: &[f64], y2: &[f64]) -> f64 {
        self.combine(self.a.eval(x1, x2), self.b.eval(y1, y2))
    }

    #[inline]
    fn combine(&self, a: f64, b: f64) -> f64 {
        pow(self.op.apply(a, b), self.outer)
    }
}

/// Source-by-destination cost access for the solvers.
pub trait CostEvaluator: Sync {
    fn src_len(&self) -> usize;
    fn dst_len(&self) -> usize;
    fn cost(&self, i: usize, j: usize) -> f64;

    /// Writes `cost(i, j)` for every source `i` into `out`.
    fn column(&self, j: usize, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.cost(i, j);
        }
    }

    /// The two factor tables when every cost is their sum over a product grid.
    fn split(&self) -> Option<SplitCost<'_>> {
        None
    }

    /// Row-major dense copy (`i * dst_len + j`).
    fn to_dense(&self) -> Vec<f64> {
        let (n, m) = (self.src_len(), self.dst_len());
        let mut data = vec![0.0; n * m];
        let mut col = vec![0.0; n];
        for j in 0..m {
            self.column(j, &mut col);
            for i in 0..n {
                data[i * m + j] = col[i];
            }
        }
        data
    }
}

/// Cost `x_part[k·n_src + i] + y_part[l·n_src + i]` from source `i` to destination
/// `j = k·n_y + l`.
#[derive(Debug, Clone, Copy)]
pub struct SplitCost<'a> {
    pub n_src: usize,
    pub n_x: usize,
    pub n_y: usize,
    pub x_part: &'a [f64],
    pub y_part: &'a [f64],
    /// Present when the x-part is a squared distance between 1-D coordinates.
    pub x_line: Option<Line<'a>>,
    pub y_line: Option<Line<'a>>,
}

/// `part[k · n_src + i] = factor · (src[i] − atoms[k])²`.
#[derive(Debug, Clone, Copy)]
pub struct Line<'a> {
    pub src: &'a [f64],
    pub atoms: &'a [f64],
    pub factor: f64,
}

/// A materialized row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCost {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseCost {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch(data.len(), rows * cols));
        }
        if let Some(idx) = data.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { idx, value: data[idx] });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

impl CostEvaluator for DenseCost {
    fn src_len(&self) -> usize {
        self.rows
    }

    fn dst_len(&self) -> usize {
        self.cols
    }

    #[inline]
    fn cost(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn to_dense(&self) -> Vec<f64> {
        self.data.clone()
    }
}

/// Lazily evaluated cost from joint atoms to product atoms `(x_k, y_l)`, `j = k·n_y + l`.
///
/// Stores only the two factor tables, so a γ-versus-product problem with n atoms needs
/// O(n²) memory instead of O(n³).
#[derive(Debug, Clone)]
pub struct ProductCost {
    n_src: usize,
    n_x: usize,
    n_y: usize,
    /// `a[k * n_src + i]` = X-part between source i and product x-atom k.
    a: Vec<f64>,
    b: Vec<f64>,
    op: Combine,
    outer: f64,
    x_line: Option<LineCoords>,
    y_line: Option<LineCoords>,
}

/// 1-D coordinates of a squared-distance part, `part[k · n_src + i] = factor · (src_i − atom_k)²`.
#[derive(Debug, Clone)]
struct LineCoords {
    src: Vec<f64>,
    atoms: Vec<f64>,
    factor: f64,
}

impl LineCoords {
    fn detect(part: &Part, src: impl Iterator<Item = f64>, atoms: &DiscreteMeasure) -> Option<Self> {
        (atoms.dim() == 1 && part.exponent == 2.0 && part.factor > 0.0).then(|| Self {
            src: src.collect(),
            atoms: (0..atoms.len()).map(|k| atoms.point(k)[0]).collect(),
            factor: part.factor,
        })
    }

    fn view(&self) -> Line<'_> {
        Line { src: &self.src, atoms: &self.atoms, factor: self.factor }
    }
}

impl ProductCost {
    pub fn new(spec: &CostSpec, src: &JointDiscreteMeasure, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Self> {
        if mu.dim() != src.x_dim() {
            return Err(Error::DimensionMismatch { expected: src.x_dim(), got: mu.dim() });
        }
        if nu.dim() != src.y_dim() {
            return Err(Error::DimensionMismatch { expected: src.y_dim(), got: nu.dim() });
        }
        let kernel = spec.kernel()?;
        let n_src = src.len();
        let mut a = Vec::with_capacity(mu.len() * n_src);
        for k in 0..mu.len() {
            a.extend((0..n_src).map(|i| kernel.a.eval(src.x(i), mu.point(k))));
        }
        let mut b = Vec::with_capacity(nu.len() * n_src);
        for l in 0..nu.len() {
            b.extend((0..n_src).map(|i| kernel.b.eval(src.y(i), nu.point(l))));
        }
        let x_line = LineCoords::detect(&kernel.a, (0..n_src).map(|i| src.x(i)[0]), mu);
        let y_line = LineCoords::detect(&kernel.b, (0..n_src).map(|i| src.y(i)[0]), nu);
        Ok(Self { n_src, n_x: mu.len(), n_y: nu.len(), a, b, op: kernel.op, outer: kernel.outer, x_line, y_line })
    }

    /// The cost between γ and the product of its own marginals.
    pub fn for_joint(spec: &CostSpec, gamma: &JointDiscreteMeasure) -> Result<Self> {
        let (mu, nu) = gamma.marginals();
        Self::new(spec, gamma, &mu, &nu)
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    /// Costs of `(k, l)` for every source, given the two factor rows.
    #[inline]
    pub(crate) fn column_parts(&self, k: usize, l: usize) -> (&[f64], &[f64]) {
        let n = self.n_src;
        (&self.a[k * n..(k + 1) * n], &self.b[l * n..(l + 1) * n])
    }
}

impl CostEvaluator for ProductCost {
    fn src_len(&self) -> usize {
        self.n_src
    }

    fn dst_len(&self) -> usize {
        self.n_x * self.n_y
    }

    #[inline]
    fn cost(&self, i: usize, j: usize) -> f64 {
        let (k, l) = (j / self.n_y, j % self.n_y);
        let v = self.op.apply(self.a[k * self.n_src + i], self.b[l * self.n_src + i]);
        pow(v, self.outer)
    }

    fn split(&self) -> Option<SplitCost<'_>> {
        (self.op == Combine::Sum && self.outer == 1.0).then_some(SplitCost {
            n_src: self.n_src,
            n_x: self.n_x,
            n_y: self.n_y,
            x_part: &self.a,
            y_part: &self.b,
            x_line: self.x_line.as_ref().map(LineCoords::view),
            y_line: self.y_line.as_ref().map(LineCoords::view),
        })
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        let (ra, rb) = self.column_parts(j / self.n_y, j % self.n_y);
        let outer = self.outer;
        match (self.op, outer) {
            (Combine::Sum, o) if o == 1.0 => {
                for ((o, a), b) in out.iter_mut().zip(ra).zip(rb) {
                    *o = a + b;
                }
            }
            (Combine::Sum, o) if o == 2.0 => {
                for ((o, a), b) in out.iter_mut().zip(ra).zip(rb) {
                    let s = a + b;
                    *o = s * s;
                }
            }
            (op, _) => {
                for ((o, a), b) in out.iter_mut().zip(ra).zip(rb) {
                    *o = pow(op.apply(*a, *b), outer);
                }
            }
        }
    }
}

/// Dense cost matrix between the atoms of two joint measures.
pub fn cost_matrix(spec: &CostSpec, src: &JointDiscreteMeasure, dst: &JointDiscreteMeasure) -> Result<DenseCost> {
    cost_matrix_with_budget(spec, src, dst, DEFAULT_MATRIX_BUDGET)
}

pub fn cost_matrix_with_budget(
    spec: &CostSpec,
    src: &JointDiscreteMeasure,
    dst: &JointDiscreteMeasure,
    budget: usize,
) -> Result<DenseCost> {
    if src.x_dim() != dst.x_dim() {
        return Err(Error::DimensionMismatch { expected: src.x_dim(), got: dst.x_dim() });
    }
    if src.y_dim() != dst.y_dim() {
        return Err(Error::DimensionMismatch { expected: src.y_dim(), got: dst.y_dim() });
    }
    let requested = src.len().saturating_mul(dst.len());
    if requested > budget {
        return Err(Error::Capacity { requested, budget });
    }
    let kernel = spec.kernel()?;
    Ok(DenseCost::from_fn(src.len(), dst.len(), |i, j| {
        kernel.eval(src.x(i), src.y(i), dst.x(j), dst.y(j))
    }))
}

/// Dense cost matrix between two measures on one space under a single-factor cost.
pub fn marginal_cost_matrix(cost: &MarginalCost, src: &DiscreteMeasure, dst: &DiscreteMeasure) -> DenseCost {
    DenseCost::from_fn(src.len(), dst.len(), |i, j| cost.eval(src.point(i), dst.point(j)))
}

/// `α_* = (diam_{d_Y^p} ν / diam_{d_X^p} μ)^{1/p}`; returns 0 when ν is a point mass.
pub fn isometric_alpha(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64, metric_x: Metric, metric_y: Metric) -> Result<f64> {
    let dx = diameter(mu, &MarginalCost::metric_power(metric_x, p));
    let dy = diameter(nu, &MarginalCost::metric_power(metric_y, p));
    if dx <= 0.0 {
        return Err(Error::DegenerateMarginal("X-marginal has zero diameter"));
    }
    Ok(pow(dy / dx, 1.0 / p))
}
