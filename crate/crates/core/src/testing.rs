//! Permutation tests of independence and Monte-Carlo power estimates.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::coefficients::{evaluate, CoefficientRequest};
use crate::error::{Error, Result};
use crate::measures::JointDiscreteMeasure;
use crate::rng::{dataset_stream, permutation_stream, Rng};
use crate::synth::{sample_noisy, Geometry, Noise};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationOptions {
    pub m: usize,
    pub k: usize,
    /// Redraw a permutation that happens to be the identity.
    pub exclude_identity: bool,
}

impl PermutationOptions {
    pub fn new(m: usize, k: usize) -> Self {
        Self { m, k, exclude_identity: false }
    }

    pub fn nominal_level(&self) -> f64 {
        (self.k + 1) as f64 / (self.m + 1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k > self.m {
            return Err(Error::InvalidParameter(format!("need m >= 1 and 0 <= k <= m, got m={}, k={}", self.m, self.k)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub statistic: f64,
    pub perm_statistics: Vec<f64>,
    /// Number of permuted statistics strictly above the observed one.
    pub exceed_count: usize,
    pub k: usize,
    pub m: usize,
    pub reject: bool,
    pub nominal_level: f64,
    pub seed: u64,
}

fn statistic(gamma: &JointDiscreteMeasure, req: &CoefficientRequest) -> Result<f64> {
    let v = evaluate(gamma, req)?.value;
    Ok(if req.kind.is_signed() { v.abs() } else { v })
}

/// Permutation test drawing permutations from `rng`; `seed` is only recorded.
pub fn permutation_test_with_rng(
    gamma: &JointDiscreteMeasure,
    req: &CoefficientRequest,
    opts: PermutationOptions,
    rng: &mut Rng,
    seed: u64,
) -> Result<TestReport> {
    opts.validate()?;
    let observed = statistic(gamma, req)?;
    let n = gamma.len();
    let identity: Vec<usize> = (0..n).collect();
    let mut perm = identity.clone();
    let mut perm_statistics = Vec::with_capacity(opts.m);
    for _ in 0..opts.m {
        loop {
            perm.copy_from_slice(&identity);
            perm.shuffle(rng);
            if !(opts.exclude_identity && n > 1 && perm == identity) {
                break;
            }
        }
        perm_statistics.push(statistic(&gamma.permute_y(&perm)?, req)?);
    }
    let exceed_count = perm_statistics.iter().filter(|&&s| s > observed).count();
    Ok(TestReport {
        statistic: observed,
        perm_statistics,
        exceed_count,
        k: opts.k,
        m: opts.m,
        reject: exceed_count <= opts.k,
        nominal_level: opts.nominal_level(),
        seed,
    })
}

/// Level-`(k+1)/(m+1)` test: reject when at most `k` of `m` random re-pairings of the
/// y-column score strictly higher than the observed data.
pub fn permutation_test(
    gamma: &JointDiscreteMeasure,
    req: &CoefficientRequest,
    m: usize,
    k: usize,
    seed: u64,
) -> Result<TestReport> {
    permutation_test_with_rng(gamma, req, PermutationOptions::new(m, k), &mut permutation_stream(seed, 0), seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    pub power: f64,
    pub rejections: usize,
    pub runs: usize,
}

/// Rejection rate over `runs` datasets from `generator`. Run `r` draws its data from
/// stream `2r` and its permutations from stream `2r + 1`, so the estimate does not depend
/// on the thread count.
pub fn power_estimate_with<G>(
    generator: G,
    req: &CoefficientRequest,
    opts: PermutationOptions,
    runs: usize,
    seed: u64,
) -> Result<PowerEstimate>
where
    G: Fn(&mut Rng) -> Result<JointDiscreteMeasure> + Sync,
{
    opts.validate()?;
    if runs == 0 {
        return Err(Error::InvalidParameter("runs must be at least 1".into()));
    }
    let outcomes: Vec<bool> = (0..runs as u64)
        .into_par_iter()
        .map(|run| {
            let data = generator(&mut dataset_stream(seed, run))?;
            let report = permutation_test_with_rng(&data, req, opts, &mut permutation_stream(seed, run), seed)?;
            Ok(report.reject)
        })
        .collect::<Result<_>>()?;
    let rejections = outcomes.iter().filter(|&&r| r).count();
    Ok(PowerEstimate { power: rejections as f64 / runs as f64, rejections, runs })
}

/// Power of the test on `n` samples of a noisy geometry.
#[allow(clippy::too_many_arguments)]
pub fn power_estimate(
    geometry: &Geometry,
    noise: Noise,
    req: &CoefficientRequest,
    runs: usize,
    n: usize,
    m: usize,
    k: usize,
    seed: u64,
) -> Result<PowerEstimate> {
    geometry.validate()?;
    noise.validate()?;
    power_estimate_with(|rng| sample_noisy(geometry, noise, n, rng), req, PermutationOptions::new(m, k), runs, seed)
}
