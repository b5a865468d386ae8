//! Entropic optimal transport with a geometric η schedule, computed in the log domain.
//!
//! Destination potentials are always eliminated exactly: given source potentials `f`,
//! each column potential is the log-sum-exp over sources, which makes the entropic plan
//! column-feasible. The source potentials then maximize the concave semi-dual
//! `F(f) = Σ a_i f_i + Σ b_j g_j(f)`, whose gradient is the row-marginal defect. The
//! Sinkhorn row update is one ascent step on `F`; when the source count allows a dense
//! factorization, damped Newton steps are taken instead, with the Hessian assembled from
//! the plan entries above a floor. Kernel entries more than `truncation · η` below a
//! column's largest are skipped.
//!
//! That Hessian keeps a bounded number of entries per column, so it is poor while η is
//! large and the kernel is dense. When the cost is an x-part plus a y-part, those stages
//! run L-BFGS on the semi-dual instead, with the gradient evaluated through matrix
//! products of the factored kernel.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::factored::Factored;
use super::plan::TransportPlan;
use super::sweep::LineSweep;
use crate::costs::CostEvaluator;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornOptions {
    pub eta_start: f64,
    pub eta_end: f64,
    /// Ratio between consecutive η values.
    pub eta_ratio: f64,
    /// Most potential updates per stage.
    pub max_iter_per_stage: usize,
    /// Total-variation marginal violation that ends the final stage.
    pub tol: f64,
    /// Violation that ends intermediate stages.
    pub stage_tol: f64,
    /// Plan entries at or below this mass are dropped before rounding.
    pub prune: f64,
    /// Kernel entries below `exp(-truncation)` of a column's largest are skipped. At most 700.
    pub truncation: f64,
    /// Largest source count for which Newton steps are taken. Above it, and when set to 0,
    /// every update is a plain Sinkhorn row update.
    pub newton_max_src: usize,
    /// Pair updates allowed per pass when assembling the Hessian; each column keeps only
    /// its largest entries accordingly.
    pub hessian_budget: usize,
    /// Run L-BFGS on stages whose kernel is too dense for the truncated Hessian, when the
    /// cost splits into an x-part plus a y-part.
    pub quasi_newton: bool,
    /// When the cost has a squared 1-D part, find each column's kernel entries through an
    /// upper envelope of lines instead of scanning every source.
    pub line_sweep: bool,
    /// Final violation above which the solve is reported as not converged. Between `tol`
    /// and this value the plan is still rounded onto the exact marginals and returned.
    pub fail_tol: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            eta_start: 1e-1,
            eta_end: 1e-3,
            eta_ratio: 0.5,
            max_iter_per_stage: 500,
            tol: 1e-7,
            stage_tol: 1e-3,
            prune: 1e-15,
            truncation: 36.0,
            newton_max_src: 2000,
            hessian_budget: 50_000_000,
            quasi_newton: true,
            line_sweep: true,
            fail_tol: 1e-3,
        }
    }
}

impl SinkhornOptions {
    /// Options that only ever take plain Sinkhorn row updates.
    pub fn plain() -> Self {
        Self { newton_max_src: 0, quasi_newton: false, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.eta_start > 0.0
            && self.eta_end > 0.0
            && self.eta_end <= self.eta_start
            && self.eta_ratio > 0.0
            && self.eta_ratio < 1.0
            && self.max_iter_per_stage > 0
            && self.tol > 0.0
            && self.stage_tol >= self.tol
            && self.prune >= 0.0
            && self.truncation > 0.0
            && self.truncation <= EXP_FLOOR
            && self.fail_tol >= self.tol;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid sinkhorn options {self:?}")))
        }
    }

    /// The geometric schedule from `eta_start` down to exactly `eta_end`.
    pub fn schedule(&self) -> Vec<f64> {
        let mut etas = Vec::new();
        let mut eta = self.eta_start;
        while eta > self.eta_end * (1.0 + 1e-12) {
            etas.push(eta);
            eta *= self.eta_ratio;
        }
        etas.push(self.eta_end);
        etas
    }
}

/// Diagnostics for one η stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub eta: f64,
    pub iterations: usize,
    /// How many of the iterations were Newton steps.
    pub newton_steps: usize,
    /// Whether the stage ran L-BFGS on the factored kernel.
    pub quasi_newton: bool,
    /// Total-variation violation of the row marginal at the end of the stage.
    pub violation: f64,
    /// Cost of the column-feasible entropic plan at the end of the stage.
    pub primal_cost: f64,
}

#[derive(Debug, Clone)]
pub struct SinkhornSolution {
    pub plan: TransportPlan,
    pub stages: Vec<StageReport>,
    /// Violation of the unrounded plan before pruning and repair.
    pub violation: f64,
}

/// Entropic transport with η-scaling, pruning and rounding onto the exact marginals.
pub fn solve_sinkhorn_scaled(
    a: &[f64],
    b: &[f64],
    cost: &(impl CostEvaluator + ?Sized),
    opts: &SinkhornOptions,
) -> Result<SinkhornSolution> {
    opts.validate()?;
    let (n, m) = (a.len(), b.len());
    if n != cost.src_len() || m != cost.dst_len() {
        return Err(Error::LengthMismatch(n * m, cost.src_len() * cost.dst_len()));
    }
    if n == 0 || m == 0 {
        return Err(Error::Empty);
    }
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if (sa - sb).abs() > 1e-9 || a.iter().chain(b).any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::Infeasible { src: sa, dst: sb });
    }

    // Zero-mass atoms carry no potential; solve on the supported atoms only.
    let src_keep: Vec<usize> = (0..n).filter(|&i| a[i] > 0.0).collect();
    let dst_keep: Vec<usize> = (0..m).filter(|&j| b[j] > 0.0).collect();
    let a_s: Vec<f64> = src_keep.iter().map(|&i| a[i]).collect();
    let b_s: Vec<f64> = dst_keep.iter().map(|&j| b[j]).collect();
    let sub = Restricted { inner: cost, src: &src_keep, dst: &dst_keep, full_src: n };

    let factored = match cost.split() {
        Some(split) if opts.quasi_newton => Some(Factored::new(split, &src_keep, &dst_keep, &b_s)),
        _ => None,
    };
    let sweep = match cost.split() {
        Some(split) if opts.line_sweep => LineSweep::new(&split, &src_keep, &dst_keep),
        _ => None,
    };
    let mut solver = Solver::new(&a_s, &b_s, &sub, opts, factored, sweep);
    let stages = solver.run()?;
    let (entries, violation) = solver.extract();
    let entries = entries
        .into_iter()
        .map(|(i, j, mass)| (src_keep[i], dst_keep[j], mass))
        .collect();
    let entries = round_to_marginals(entries, a, b);
    let plan = TransportPlan::from_entries(entries, n, m, cost)?;
    Ok(SinkhornSolution { plan, stages, violation })
}

/// View of a cost evaluator on a subset of sources and destinations.
struct Restricted<'a, C: ?Sized> {
    inner: &'a C,
    src: &'a [usize],
    dst: &'a [usize],
    full_src: usize,
}

impl<C: CostEvaluator + ?Sized> Restricted<'_, C> {
    fn column(&self, j: usize, scratch: &mut Vec<f64>, out: &mut [f64]) {
        if self.src.len() == self.full_src {
            self.inner.column(self.dst[j], out);
        } else {
            scratch.resize(self.full_src, 0.0);
            self.inner.column(self.dst[j], scratch);
            for (o, &i) in out.iter_mut().zip(self.src) {
                *o = scratch[i];
            }
        }
    }
}

/// Most negative exponent handed to [`exp_nonpositive`].
const EXP_FLOOR: f64 = 700.0;
/// Hessian entries carry at least this share of their column's mass.
const HESSIAN_FLOOR: f64 = 1e-3;
/// Step halvings tried before a Newton direction is abandoned for a Sinkhorn update.
const MAX_HALVINGS: usize = 8;
const ARMIJO: f64 = 1e-4;
const LANES: usize = 8;
/// Correction pairs kept by L-BFGS.
const LBFGS_MEMORY: usize = 20;
/// Share of column mass the truncated Hessian must hold for Newton steps to be used when
/// L-BFGS is available.
const HESSIAN_COVERAGE: f64 = 0.999;
/// Columns sampled to judge how dense the truncated kernel is.
const DENSITY_SAMPLE: usize = 64;

/// `exp(t)` for `t ∈ [-700, 0]`: Cody–Waite reduction by ln 2 and a degree-13 Taylor
/// polynomial (relative error near one ulp). Branch-free so that loops over it vectorize.
#[inline(always)]
fn exp_nonpositive(t: f64) -> f64 {
    const SHIFT: f64 = 6755399441055744.0; // 1.5 · 2^52: adding it rounds to an integer
    const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
    let t = if t > -EXP_FLOOR { t } else { -EXP_FLOOR };
    let z = t * std::f64::consts::LOG2_E + SHIFT;
    let k = z - SHIFT;
    let r = (t - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 6227020800.0;
    p = p * r + 1.0 / 479001600.0;
    p = p * r + 1.0 / 39916800.0;
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    let biased = z.to_bits().wrapping_sub(SHIFT.to_bits()).wrapping_add(1023);
    p * f64::from_bits(biased << 52)
}

#[inline(always)]
fn exp_in_place_generic(t: &mut [f64]) {
    for v in t.iter_mut() {
        *v = exp_nonpositive(*v);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn exp_in_place_avx2(t: &mut [f64]) {
    exp_in_place_generic(t)
}

/// Replaces every `t` by `exp(t)`. Wider vectors are used when the CPU has them; there is
/// no fused arithmetic in either path, so both give identical results.
pub(super) fn exp_in_place(t: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the required CPU feature was detected at runtime.
        unsafe { exp_in_place_avx2(t) };
        return;
    }
    exp_in_place_generic(t)
}

/// `max_i (f_i - c_i)`.
#[inline]
pub(super) fn max_gain(f: &[f64], c: &[f64]) -> f64 {
    let mut acc = [f64::NEG_INFINITY; LANES];
    let (fc, cc) = (f.chunks_exact(LANES), c.chunks_exact(LANES));
    let (fr, cr) = (fc.remainder(), cc.remainder());
    for (fl, cl) in fc.zip(cc) {
        for l in 0..LANES {
            let s = fl[l] - cl[l];
            acc[l] = if s > acc[l] { s } else { acc[l] };
        }
    }
    for (x, y) in fr.iter().zip(cr) {
        let s = x - y;
        acc[0] = if s > acc[0] { s } else { acc[0] };
    }
    acc.iter().fold(f64::NEG_INFINITY, |m, &v| if v > m { v } else { m })
}

/// One column of the truncated kernel in compressed form.
struct KernelColumn {
    idx: Vec<u32>,
    cost: Vec<f64>,
    /// `a_i exp((f_i - c_i - top) / η)` for the entries in `idx`.
    weight: Vec<f64>,
}

impl KernelColumn {
    fn with_capacity(n: usize) -> Self {
        Self { idx: vec![0; n], cost: vec![0.0; n], weight: vec![0.0; n] }
    }

    /// Fills the entries within `cut · η` of the largest gain and returns `(top, Σ weight)`.
    fn fill(&mut self, f: &[f64], c: &[f64], a: &[f64], eta: f64, cut: f64) -> (f64, f64) {
        let n = f.len();
        self.idx.resize(n, 0);
        self.cost.resize(n, 0.0);
        self.weight.resize(n, 0.0);
        let top = max_gain(f, c);
        let lo = top - cut * eta;
        let mut len = 0;
        let split = n - n % LANES;
        for s in (0..split).step_by(LANES) {
            let mut hits = 0;
            for l in 0..LANES {
                hits += (f[s + l] - c[s + l] >= lo) as usize;
            }
            if hits == 0 {
                continue;
            }
            for i in s..s + LANES {
                // Branch-free compaction: always write, advance only on a hit.
                self.idx[len] = i as u32;
                len += (f[i] - c[i] >= lo) as usize;
            }
        }
        for i in split..n {
            self.idx[len] = i as u32;
            len += (f[i] - c[i] >= lo) as usize;
        }
        self.idx.truncate(len);
        self.cost.truncate(len);
        self.weight.truncate(len);
        let inv_eta = 1.0 / eta;
        for ((w, cst), &i) in self.weight.iter_mut().zip(self.cost.iter_mut()).zip(&self.idx) {
            let i = i as usize;
            *cst = c[i];
            *w = (f[i] - c[i] - top) * inv_eta;
        }
        exp_in_place(&mut self.weight);
        let mut total = 0.0;
        for (w, &i) in self.weight.iter_mut().zip(&self.idx) {
            *w *= a[i as usize];
            total += *w;
        }
        (top, total)
    }

    /// As [`Self::fill`], over the listed sources only.
    fn fill_from(&mut self, f: &[f64], cand: &[u32], cost: &[f64], a: &[f64], eta: f64, cut: f64) -> (f64, f64) {
        let top = cand.iter().zip(cost).fold(f64::NEG_INFINITY, |m, (&i, &c)| m.max(f[i as usize] - c));
        let lo = top - cut * eta;
        self.idx.clear();
        self.cost.clear();
        for (&i, &c) in cand.iter().zip(cost) {
            if f[i as usize] - c >= lo {
                self.idx.push(i);
                self.cost.push(c);
            }
        }
        let inv_eta = 1.0 / eta;
        self.weight.clear();
        self.weight.extend(self.idx.iter().zip(&self.cost).map(|(&i, &c)| (f[i as usize] - c - top) * inv_eta));
        exp_in_place(&mut self.weight);
        let mut total = 0.0;
        for (w, &i) in self.weight.iter_mut().zip(&self.idx) {
            *w *= a[i as usize];
            total += *w;
        }
        (top, total)
    }
}

pub(super) struct PassStats {
    /// Semi-dual objective `Σ a_i f_i + Σ b_j g_j`.
    pub(super) dual: f64,
    /// Rounding slack for comparing two values of `dual`.
    pub(super) dual_scale: f64,
    pub(super) primal: f64,
}

/// Scratch space for one sweep over the columns.
struct Buffers {
    rows: Vec<f64>,
    /// Upper triangle (row-major, `i ≤ k`) of `Σ_j b_j W_ij W_kj`, `W` the column-normalized
    /// kernel restricted to its largest entries.
    hess: Vec<f64>,
    col: Vec<f64>,
    scratch: Vec<f64>,
    kernel: KernelColumn,
    kept: Vec<(usize, f64)>,
}

struct Solver<'a, C: ?Sized> {
    a: &'a [f64],
    b: &'a [f64],
    cost: &'a Restricted<'a, C>,
    opts: &'a SinkhornOptions,
    f: Vec<f64>,
    newton: bool,
    /// Most Hessian entries kept per column, so that a pass stays within the pair budget.
    kept_per_column: usize,
    /// Last accepted Newton step length; the next line search starts at twice this.
    step: f64,
    factored: Option<Factored>,
    sweep: Option<LineSweep>,
    buf: Buffers,
}

impl<'a, C: CostEvaluator + ?Sized> Solver<'a, C> {
    fn new(
        a: &'a [f64],
        b: &'a [f64],
        cost: &'a Restricted<'a, C>,
        opts: &'a SinkhornOptions,
        factored: Option<Factored>,
        sweep: Option<LineSweep>,
    ) -> Self {
        let n = a.len();
        let newton = n >= 2 && n <= opts.newton_max_src;
        let kept_per_column = ((2.0 * opts.hessian_budget as f64 / b.len() as f64).sqrt() as usize).clamp(2, n.max(2));
        Self {
            a,
            b,
            cost,
            opts,
            f: vec![0.0; n],
            newton,
            kept_per_column,
            step: 1.0,
            factored,
            sweep,
            buf: Buffers {
                rows: vec![0.0; n],
                hess: if newton { vec![0.0; n * n] } else { Vec::new() },
                col: vec![0.0; n],
                scratch: Vec::new(),
                kernel: KernelColumn::with_capacity(n),
                kept: Vec::with_capacity(n),
            },
        }
    }

    /// One sweep at potentials `f`: row sums into `buf.rows`, the Hessian accumulator when
    /// `hessian` is set, and plan entries above the prune threshold into `entries`.
    fn pass(
        &mut self,
        f: &[f64],
        eta: f64,
        hessian: bool,
        mut entries: Option<&mut Vec<(usize, usize, f64)>>,
    ) -> PassStats {
        let Self { a, b, cost, opts, kept_per_column, sweep, buf, .. } = self;
        buf.rows.iter_mut().for_each(|r| *r = 0.0);
        if hessian {
            buf.hess.iter_mut().for_each(|h| *h = 0.0);
        }
        let hessian_cap = hessian.then_some(*kept_per_column);
        let mut stats = PassStats { dual: 0.0, dual_scale: 0.0, primal: 0.0 };
        match sweep {
            Some(sweep) => sweep.sweep(f, opts.truncation * eta, |j, cand, costs| {
                let (top, total) = buf.kernel.fill_from(f, cand, costs, a, eta, opts.truncation);
                absorb(buf, j, b[j], top, total, eta, hessian_cap, opts.prune, entries.as_deref_mut(), &mut stats);
            }),
            None => {
                for (j, &bj) in b.iter().enumerate() {
                    cost.column(j, &mut buf.scratch, &mut buf.col);
                    let (top, total) = buf.kernel.fill(f, &buf.col, a, eta, opts.truncation);
                    absorb(buf, j, bj, top, total, eta, hessian_cap, opts.prune, entries.as_deref_mut(), &mut stats);
                }
            }
        }
        for (&ai, &fi) in a.iter().zip(f) {
            stats.dual += ai * fi;
            stats.dual_scale += ai * fi.abs();
        }
        stats
    }

    fn violation(&self) -> f64 {
        0.5 * self.buf.rows.iter().zip(self.a).map(|(r, a)| (r - a).abs()).sum::<f64>()
    }

    /// Solves `(diag(r) - H) δ = η (a - r)` with a small ridge for the constant direction.
    fn newton_direction(&self, eta: f64) -> Option<Vec<f64>> {
        let n = self.a.len();
        let (rows, hess) = (&self.buf.rows, &self.buf.hess);
        if rows.iter().any(|&r| !(r > 0.0)) {
            return None;
        }
        let rmax = rows.iter().fold(0.0f64, |m, &r| m.max(r));
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for k in i..n {
                let v = -hess[i * n + k];
                m[(i, k)] = v;
                m[(k, i)] = v;
            }
            m[(i, i)] += rows[i];
        }
        let rhs = DVector::from_iterator(n, (0..n).map(|i| eta * (self.a[i] - rows[i])));
        let mut ridge = 1e-10 * rmax;
        for _ in 0..4 {
            let mut shifted = m.clone();
            for i in 0..n {
                shifted[(i, i)] += ridge;
            }
            if let Some(chol) = shifted.cholesky() {
                let d = chol.solve(&rhs);
                if d.iter().all(|v| v.is_finite()) {
                    return Some(d.as_slice().to_vec());
                }
            }
            ridge *= 100.0;
        }
        None
    }

    fn run(&mut self) -> Result<Vec<StageReport>> {
        let schedule = self.opts.schedule();
        let last = schedule.len() - 1;
        let mut reports = Vec::with_capacity(schedule.len());
        for (s, &eta) in schedule.iter().enumerate() {
            let tol = if s == last { self.opts.tol } else { self.opts.stage_tol };
            let mut report = StageReport {
                eta,
                iterations: 0,
                newton_steps: 0,
                quasi_newton: false,
                violation: f64::INFINITY,
                primal_cost: f64::NAN,
            };
            if self.factored.is_some() && self.kernel_is_dense(eta) {
                report.quasi_newton = true;
                let fac = self.factored.as_mut().expect("checked above");
                let cap = self.opts.max_iter_per_stage;
                quasi_newton_stage(fac, self.a, &mut self.f, &mut self.buf.rows, eta, tol, cap, &mut report)?;
            } else {
                self.sparse_stage(eta, tol, &mut report)?;
            }
            reports.push(report);
            if s == last && reports[s].violation > self.opts.fail_tol {
                return Err(Error::NotConverged { eta, violation: reports[s].violation });
            }
        }
        Ok(reports)
    }

    /// Whether the truncated Hessian would miss more than `1 - HESSIAN_COVERAGE` of the
    /// mass of sampled columns.
    fn kernel_is_dense(&mut self, eta: f64) -> bool {
        if !self.newton {
            return true;
        }
        let m = self.b.len();
        let stride = (m / DENSITY_SAMPLE).max(1);
        let k = self.kept_per_column;
        let (mut covered, mut columns) = (0.0, 0);
        for j in (0..m).step_by(stride) {
            self.cost.column(j, &mut self.buf.scratch, &mut self.buf.col);
            let (_, total) = self.buf.kernel.fill(&self.f, &self.buf.col, self.a, eta, self.opts.truncation);
            let w = &mut self.buf.kernel.weight;
            if w.len() > k {
                w.select_nth_unstable_by(k - 1, |x, y| y.total_cmp(x));
            }
            covered += w.iter().take(k).sum::<f64>() / total;
            columns += 1;
        }
        covered < HESSIAN_COVERAGE * columns as f64
    }

    /// Newton steps on the truncated kernel, with Sinkhorn row updates as the fallback.
    fn sparse_stage(&mut self, eta: f64, tol: f64, report: &mut StageReport) -> Result<()> {
        let f = std::mem::take(&mut self.f);
        let mut stats = self.pass(&f, eta, self.newton, None);
        self.f = f;
        loop {
            if !stats.dual.is_finite() {
                return Err(diverged(eta));
            }
            report.violation = self.violation();
            report.primal_cost = stats.primal;
            if report.violation <= tol || report.iterations == self.opts.max_iter_per_stage {
                return Ok(());
            }
            report.iterations += 1;
            if let Some(next) = self.newton_step(eta, &stats) {
                stats = next;
                report.newton_steps += 1;
                continue;
            }
            sinkhorn_row_update(&mut self.f, &self.buf.rows, self.a, eta, self.opts.truncation);
            let f = std::mem::take(&mut self.f);
            stats = self.pass(&f, eta, self.newton, None);
            self.f = f;
        }
    }

    /// A damped Newton step on the semi-dual. On success the buffers hold the accepted
    /// point's sweep; on failure they are restored.
    fn newton_step(&mut self, eta: f64, stats: &PassStats) -> Option<PassStats> {
        if !self.newton {
            return None;
        }
        let delta = self.newton_direction(eta)?;
        let slope: f64 = delta.iter().zip(self.a).zip(&self.buf.rows).map(|((d, a), r)| d * (a - r)).sum();
        if !(slope > 0.0) {
            return None;
        }
        let saved = self.buf.rows.clone();
        let mut t = (2.0 * self.step).min(1.0);
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = self.f.iter().zip(&delta).map(|(f, d)| f + t * d).collect();
            let next = self.pass(&trial, eta, true, None);
            let slack = 64.0 * f64::EPSILON * (stats.dual_scale + next.dual_scale);
            if next.dual.is_finite() && next.dual >= stats.dual + ARMIJO * t * slope - slack {
                self.f = trial;
                self.step = t;
                return Some(next);
            }
            t *= 0.5;
        }
        self.buf.rows = saved;
        None
    }

    /// The entropic plan at the final potentials (column update applied), pruned.
    fn extract(&mut self) -> (Vec<(usize, usize, f64)>, f64) {
        let mut entries = Vec::new();
        let f = std::mem::take(&mut self.f);
        self.pass(&f, self.opts.eta_end, false, Some(&mut entries));
        self.f = f;
        (entries, self.violation())
    }
}


/// Adds the column held in `buf.kernel` to the row sums, the objective and, when asked,
/// the Hessian (keeping at most `hessian` entries) and the plan entries.
#[allow(clippy::too_many_arguments)]
fn absorb(
    buf: &mut Buffers,
    j: usize,
    bj: f64,
    top: f64,
    total: f64,
    eta: f64,
    hessian: Option<usize>,
    prune: f64,
    entries: Option<&mut Vec<(usize, usize, f64)>>,
    stats: &mut PassStats,
) {
    let n = buf.rows.len();
    let kc = &buf.kernel;
    let g = -top - eta * total.ln();
    stats.dual += bj * g;
    stats.dual_scale += bj * g.abs();
    let scale = bj / total;
    let mut cost_sum = 0.0;
    for ((&i, &w), &c) in kc.idx.iter().zip(&kc.weight).zip(&kc.cost) {
        buf.rows[i as usize] += scale * w;
        cost_sum += w * c;
    }
    stats.primal += scale * cost_sum;

    if let Some(cap) = hessian {
        buf.kept.clear();
        let min_w = HESSIAN_FLOOR * total;
        buf.kept.extend(kc.idx.iter().zip(&kc.weight).filter(|(_, &w)| w >= min_w).map(|(&i, &w)| (i as usize, w / total)));
        if buf.kept.len() > cap {
            buf.kept.select_nth_unstable_by(cap - 1, |x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
            buf.kept.truncate(cap);
        }
        for (x, &(i, wi)) in buf.kept.iter().enumerate() {
            let bw = bj * wi;
            for &(k, wk) in &buf.kept[x..] {
                let (lo, hi) = if i <= k { (i, k) } else { (k, i) };
                buf.hess[lo * n + hi] += bw * wk;
            }
        }
    }
    if let Some(out) = entries {
        for (&i, &w) in kc.idx.iter().zip(&kc.weight) {
            let p = w * scale;
            if p > prune {
                out.push((i as usize, j, p));
            }
        }
    }
}

fn diverged(eta: f64) -> Error {
    Error::Numerical(format!("sinkhorn potentials diverged at eta={eta}"))
}

/// `f_i -= η ln(r_i / a_i)`; an empty row means every kernel entry underflowed.
fn sinkhorn_row_update(f: &mut [f64], rows: &[f64], a: &[f64], eta: f64, truncation: f64) {
    for ((fi, &r), &ai) in f.iter_mut().zip(rows).zip(a) {
        *fi -= eta * if r > 0.0 { (r / ai).ln() } else { -truncation };
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// L-BFGS ascent on the semi-dual with the gradient from the factored kernel. The initial
/// inverse Hessian is `γ diag(1/a)`, which makes the first step a linearized Sinkhorn update.
#[allow(clippy::too_many_arguments)]
fn quasi_newton_stage(
    fac: &mut Factored,
    a: &[f64],
    f: &mut [f64],
    rows: &mut [f64],
    eta: f64,
    tol: f64,
    cap: usize,
    report: &mut StageReport,
) -> Result<()> {
    let n = a.len();
    let violation = |rows: &[f64]| 0.5 * rows.iter().zip(a).map(|(r, a)| (r - a).abs()).sum::<f64>();
    let mut stats = fac.evaluate(f, a, eta, rows, false);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(LBFGS_MEMORY);
    let (mut trial, mut trial_rows) = (vec![0.0; n], vec![0.0; n]);
    loop {
        if !stats.dual.is_finite() {
            return Err(diverged(eta));
        }
        report.violation = violation(rows);
        if report.violation <= tol || report.iterations == cap {
            break;
        }
        report.iterations += 1;

        let grad: Vec<f64> = a.iter().zip(rows.iter()).map(|(a, r)| a - r).collect();
        let mut d = grad.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let alpha = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= alpha * yi);
            alphas.push(alpha);
        }
        let gamma = match history.back() {
            Some((s, y, _)) => dot(s, y) / y.iter().zip(a).map(|(yi, ai)| yi * yi / ai).sum::<f64>(),
            None => eta,
        };
        d.iter_mut().zip(a).for_each(|(di, ai)| *di *= gamma / ai);
        for ((s, y, rho), alpha) in history.iter().zip(alphas.iter().rev()) {
            let beta = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (alpha - beta) * si);
        }

        let slope = dot(&grad, &d);
        let mut accepted = false;
        if slope > 0.0 {
            let mut t = 1.0;
            for _ in 0..=MAX_HALVINGS {
                trial.iter_mut().zip(f.iter()).zip(&d).for_each(|((x, fi), di)| *x = fi + t * di);
                let next = fac.evaluate(&trial, a, eta, &mut trial_rows, false);
                let slack = 64.0 * f64::EPSILON * (stats.dual_scale + next.dual_scale);
                if next.dual.is_finite() && next.dual >= stats.dual + ARMIJO * t * slope - slack {
                    let s: Vec<f64> = d.iter().map(|di| t * di).collect();
                    let y: Vec<f64> = trial_rows.iter().zip(rows.iter()).map(|(rn, r)| rn - r).collect();
                    let sy = dot(&s, &y);
                    if sy > 0.0 {
                        if history.len() == LBFGS_MEMORY {
                            history.pop_front();
                        }
                        history.push_back((s, y, 1.0 / sy));
                    }
                    f.copy_from_slice(&trial);
                    rows.copy_from_slice(&trial_rows);
                    stats = next;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
        }
        if !accepted {
            history.clear();
            sinkhorn_row_update(f, rows, a, eta, EXP_FLOOR);
            stats = fac.evaluate(f, a, eta, rows, false);
        }
    }
    report.primal_cost = fac.evaluate(f, a, eta, rows, true).primal;
    Ok(())
}

/// Scales rows and columns down onto `a` and `b`, then fills the remaining deficits with a
/// northwest-corner coupling, so the result has exactly the requested marginals.
fn round_to_marginals(mut entries: Vec<(usize, usize, f64)>, a: &[f64], b: &[f64]) -> Vec<(usize, usize, f64)> {
    let mut rows = vec![0.0; a.len()];
    for &(i, _, p) in &entries {
        rows[i] += p;
    }
    let row_scale: Vec<f64> = rows.iter().zip(a).map(|(&r, &ai)| if r > ai { ai / r } else { 1.0 }).collect();
    let mut cols = vec![0.0; b.len()];
    for e in entries.iter_mut() {
        e.2 *= row_scale[e.0];
        cols[e.1] += e.2;
    }
    let col_scale: Vec<f64> = cols.iter().zip(b).map(|(&c, &bj)| if c > bj { bj / c } else { 1.0 }).collect();
    rows.iter_mut().for_each(|r| *r = 0.0);
    cols.iter_mut().for_each(|c| *c = 0.0);
    for e in entries.iter_mut() {
        e.2 *= col_scale[e.1];
        rows[e.0] += e.2;
        cols[e.1] += e.2;
    }
    let mut dr: Vec<f64> = a.iter().zip(&rows).map(|(ai, r)| (ai - r).max(0.0)).collect();
    let mut dc: Vec<f64> = b.iter().zip(&cols).map(|(bj, c)| (bj - c).max(0.0)).collect();

    let mut filled: Vec<(usize, usize, f64)> = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < dr.len() && j < dc.len() {
        let t = dr[i].min(dc[j]);
        if t > 0.0 {
            filled.push((i, j, t));
        }
        dr[i] -= t;
        dc[j] -= t;
        if dr[i] <= dc[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    if filled.is_empty() {
        return entries;
    }
    // Merge fills into existing entries where the pair is already present.
    let mut by_pair: std::collections::HashMap<(usize, usize), usize> =
        filled.iter().enumerate().map(|(k, &(i, j, _))| ((i, j), k)).collect();
    for e in entries.iter_mut() {
        if let Some(k) = by_pair.remove(&(e.0, e.1)) {
            e.2 += filled[k].2;
            filled[k].2 = 0.0;
        }
    }
    entries.extend(filled.into_iter().filter(|e| e.2 > 0.0));
    entries
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::DenseCost;
    use crate::ot::{exact_cost, transport_cost};

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn schedule_is_geometric_and_ends_exactly() {
        let s = SinkhornOptions::default().schedule();
        assert_eq!(s.first(), Some(&0.1));
        assert_eq!(s.last(), Some(&1e-3));
        for w in s.windows(2).take(s.len() - 2) {
            assert!((w[1] / w[0] - 0.5).abs() < 1e-12);
        }
        assert!(s.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rounding_restores_marginals() {
        let entries = vec![(0, 0, 0.3), (0, 1, 0.25), (1, 1, 0.2)];
        let a = [0.5, 0.5];
        let b = [0.4, 0.6];
        let out = round_to_marginals(entries, &a, &b);
        let mut rows = [0.0; 2];
        let mut cols = [0.0; 2];
        for &(i, j, p) in &out {
            assert!(p > 0.0);
            rows[i] += p;
            cols[j] += p;
        }
        for k in 0..2 {
            assert!((rows[k] - a[k]).abs() < 1e-15);
            assert!((cols[k] - b[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn close_to_exact_on_small_random_problems() {
        let mut seed = 7u64;
        for _ in 0..10 {
            let (n, m) = (6, 9);
            let xs: Vec<f64> = (0..n).map(|_| lcg(&mut seed)).collect();
            let ys: Vec<f64> = (0..m).map(|_| lcg(&mut seed)).collect();
            let cost = DenseCost::from_fn(n, m, |i, j| (xs[i] - ys[j]).abs());
            let a = vec![1.0 / n as f64; n];
            let b = vec![1.0 / m as f64; m];
            let sol = solve_sinkhorn_scaled(&a, &b, &cost, &SinkhornOptions::default()).unwrap();
            let exact = exact_cost(&a, &b, &cost).unwrap();
            assert!(sol.plan.marginal_error(&a, &b) < 1e-12);
            assert!((sol.plan.primal_cost - transport_cost(&sol.plan, &cost)).abs() < 1e-12);
            assert!((sol.plan.primal_cost - exact).abs() <= 1e-2 * exact, "{} vs {exact}", sol.plan.primal_cost);
        }
    }

    #[test]
    fn self_transport_is_nearly_free() {
        let pts: Vec<f64> = (0..8).map(|k| k as f64 / 7.0).collect();
        let cost = DenseCost::from_fn(8, 8, |i, j| (pts[i] - pts[j]).abs());
        let w = vec![0.125; 8];
        let sol = solve_sinkhorn_scaled(&w, &w, &cost, &SinkhornOptions::default()).unwrap();
        assert!(sol.plan.primal_cost <= 1e-3);
    }

    #[test]
    fn zero_weight_atoms_are_handled() {
        let cost = DenseCost::from_fn(3, 2, |i, j| (i as f64 - j as f64).abs());
        let a = [0.5, 0.0, 0.5];
        let b = [0.5, 0.5];
        let sol = solve_sinkhorn_scaled(&a, &b, &cost, &SinkhornOptions::default()).unwrap();
        assert!(sol.plan.entries.iter().all(|e| e.0 != 1));
        assert!(sol.plan.marginal_error(&a, &b) < 1e-12);
    }

    #[test]
    fn primal_cost_does_not_increase_across_stages() {
        let mut seed = 99u64;
        let (n, m) = (10, 30);
        let xs: Vec<f64> = (0..n).map(|_| lcg(&mut seed)).collect();
        let ys: Vec<f64> = (0..m).map(|_| lcg(&mut seed)).collect();
        let cost = DenseCost::from_fn(n, m, |i, j| (xs[i] - ys[j]).powi(2));
        let sol = solve_sinkhorn_scaled(&vec![0.1; n], &vec![1.0 / 30.0; m], &cost, &SinkhornOptions::default()).unwrap();
        for w in sol.stages.windows(2) {
            assert!(w[1].primal_cost <= w[0].primal_cost + 1e-9, "{:?}", sol.stages);
        }
    }

    #[test]
    fn exp_kernel_matches_std() {
        let mut seed = 3u64;
        let mut t: Vec<f64> = (0..20_000).map(|_| -700.0 * lcg(&mut seed)).collect();
        t.extend([0.0, -1e-300, -0.5, -700.0, -1.0e-8]);
        let want: Vec<f64> = t.iter().map(|v| v.exp()).collect();
        exp_in_place(&mut t);
        for (got, want) in t.iter().zip(&want) {
            assert!(((got - want) / want).abs() < 1e-15, "{got} vs {want}");
        }
    }

    #[test]
    fn every_update_rule_reaches_the_same_plan() {
        use crate::costs::{CostSpec, Metric, ProductCost};
        use crate::measures::JointDiscreteMeasure;
        let mut seed = 21u64;
        let pairs: Vec<(f64, f64)> = (0..24).map(|_| (lcg(&mut seed), lcg(&mut seed) * 2.0)).collect();
        let g = JointDiscreteMeasure::from_pairs(&pairs).unwrap();
        let cost = ProductCost::for_joint(&CostSpec::raw(Metric::Euclidean, 2.0), &g).unwrap();
        let (n, m) = (cost.src_len(), cost.dst_len());
        let dense = DenseCost::from_fn(n, m, |i, j| cost.cost(i, j));
        let a = vec![1.0 / n as f64; n];
        let b = vec![1.0 / m as f64; m];
        let reference = solve_sinkhorn_scaled(&a, &b, &dense, &SinkhornOptions::default()).unwrap().plan.primal_cost;
        // Stopping at violation `tol` leaves each plan within `tol · max c` of the limit.
        let c_max = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| cost.cost(i, j)).fold(0.0, f64::max);
        let variants = [
            SinkhornOptions::default(),
            SinkhornOptions { line_sweep: false, ..SinkhornOptions::default() },
            SinkhornOptions { newton_max_src: 0, ..SinkhornOptions::default() },
            SinkhornOptions { hessian_budget: 2000, ..SinkhornOptions::default() },
        ];
        for opts in &variants {
            let sol = solve_sinkhorn_scaled(&a, &b, &cost, opts).unwrap();
            assert!(sol.violation <= opts.tol);
            let diff = (sol.plan.primal_cost - reference).abs();
            assert!(diff <= 2.0 * opts.tol * c_max, "{opts:?}: {} vs {reference}", sol.plan.primal_cost);
        }
        let exact = exact_cost(&a, &b, &dense).unwrap();
        assert!((reference - exact).abs() <= 1e-2 * exact);
    }
}
