//! Synthetic joint distributions and noise models.
//!
//! Parametrizations of the curves without a canonical formula:
//! - `Sine { slope }`: `y = (1 + sin(2s(x − 1/2)))/2`, maximal slope `s`.
//! - `Circle`: center (1/2, 1/2), radius 1/2, uniform in arc length.
//! - `Cross`: the two diagonals `y = x` and `y = 1 − x` of the unit square, each with
//!   probability 1/2.
//! - `Spiral`: Archimedean spiral `r = θ/(8π)` for `θ ∈ [0, 4π]` (two turns) around
//!   (1/2, 1/2), uniform in arc length.
//! - `Pretzel`: the figure-eight `(1/2 + 0.45 sin t, 1/2 + 0.45 sin 2t)` with `t` uniform on
//!   `[0, 2π)`, two loops crossing at the center.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::measures::JointDiscreteMeasure;
use crate::rng::{dataset_stream, Rng as StreamRng};

const SPIRAL_TURNS_ANGLE: f64 = 4.0 * std::f64::consts::PI;
const SPIRAL_RADIUS: f64 = 0.5;
const PRETZEL_AMPLITUDE: f64 = 0.45;

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Identity,
    /// Piecewise-linear `f_n` with `segments` pieces of alternating slope `±segments`.
    Zigzag { segments: usize },
    /// `y = Σ c_i x^i` on `[0, 1]`.
    Polynomial { coefficients: Vec<f64> },
    Sine { slope: f64 },
    Circle,
    Cross,
    Spiral,
    Pretzel,
    /// Uniform on the unit sphere in ℝ^{r+q}.
    Sphere { r: usize, q: usize },
    /// Independent `Unif[0,1]^r ⊗ Unif[0,1]^q`.
    UniformNoise { r: usize, q: usize },
    /// `x ~ Unif[0,1]^r`, `y` the first `q` coordinates of `x`.
    LinearHighdim { r: usize, q: usize },
}

/// Default polynomial `1 − (1 − x)³`, maximal slope 3.
pub const DEFAULT_POLYNOMIAL: [f64; 4] = [0.0, 3.0, -3.0, 1.0];

impl Geometry {
    pub fn name(&self) -> &'static str {
        match self {
            Geometry::Identity => "identity",
            Geometry::Zigzag { .. } => "zigzag",
            Geometry::Polynomial { .. } => "polynomial",
            Geometry::Sine { .. } => "sine",
            Geometry::Circle => "circle",
            Geometry::Cross => "cross",
            Geometry::Spiral => "spiral",
            Geometry::Pretzel => "pretzel",
            Geometry::Sphere { .. } => "sphere",
            Geometry::UniformNoise { .. } => "uniform_noise",
            Geometry::LinearHighdim { .. } => "linear_highdim",
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match *self {
            Geometry::Sphere { r, q } | Geometry::UniformNoise { r, q } | Geometry::LinearHighdim { r, q } => (r, q),
            _ => (1, 1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            Geometry::Zigzag { segments } if *segments == 0 => bad("zigzag needs at least one segment".into()),
            Geometry::Polynomial { coefficients } if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) => {
                bad("polynomial needs finite coefficients".into())
            }
            Geometry::Sine { slope } if !(slope.is_finite() && *slope > 0.0) => bad(format!("sine slope must be positive, got {slope}")),
            Geometry::Sphere { r, q } | Geometry::UniformNoise { r, q } if *r == 0 || *q == 0 => {
                bad("dimensions must be at least one".into())
            }
            Geometry::LinearHighdim { r, q } if *q == 0 || q > r => {
                bad(format!("linear_highdim needs 1 <= q <= r, got r={r}, q={q}"))
            }
            _ => Ok(()),
        }
    }

    /// The function whose graph carries the distribution, for functional geometries.
    pub fn function(&self, x: f64) -> Option<f64> {
        match self {
            Geometry::Identity => Some(x),
            Geometry::Zigzag { segments } => Some(zigzag(*segments, x)),
            Geometry::Polynomial { coefficients } => Some(coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)),
            Geometry::Sine { slope } => Some(0.5 * (1.0 + (2.0 * slope * (x - 0.5)).sin())),
            _ => None,
        }
    }

    fn draw(&self, rng: &mut impl Rng, x: &mut Vec<f64>, y: &mut Vec<f64>) {
        use std::f64::consts::PI;
        match self {
            Geometry::Identity | Geometry::Zigzag { .. } | Geometry::Polynomial { .. } | Geometry::Sine { .. } => {
                let u: f64 = rng.random();
                x.push(u);
                y.push(self.function(u).expect("functional geometry"));
            }
            Geometry::Circle => {
                let t = 2.0 * PI * rng.random::<f64>();
                x.push(0.5 + 0.5 * t.cos());
                y.push(0.5 + 0.5 * t.sin());
            }
            Geometry::Cross => {
                let u: f64 = rng.random();
                x.push(u);
                y.push(if rng.random::<bool>() { u } else { 1.0 - u });
            }
            Geometry::Spiral => {
                let theta = spiral_angle(rng.random::<f64>() * spiral_arc_length(SPIRAL_TURNS_ANGLE));
                let rad = SPIRAL_RADIUS * theta / SPIRAL_TURNS_ANGLE;
                x.push(0.5 + rad * theta.cos());
                y.push(0.5 + rad * theta.sin());
            }
            Geometry::Pretzel => {
                let t = 2.0 * PI * rng.random::<f64>();
                x.push(0.5 + PRETZEL_AMPLITUDE * t.sin());
                y.push(0.5 + PRETZEL_AMPLITUDE * (2.0 * t).sin());
            }
            Geometry::Sphere { r, q } => {
                let z: Vec<f64> = loop {
                    let z: Vec<f64> = (0..r + q).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 1e-12 {
                        break z.into_iter().map(|v| v / norm).collect();
                    }
                };
                x.extend_from_slice(&z[..*r]);
                y.extend_from_slice(&z[*r..]);
            }
            Geometry::UniformNoise { r, q } => {
                x.extend((0..*r).map(|_| rng.random::<f64>()));
                y.extend((0..*q).map(|_| rng.random::<f64>()));
            }
            Geometry::LinearHighdim { r, q } => {
                let start = x.len();
                x.extend((0..*r).map(|_| rng.random::<f64>()));
                y.extend_from_slice(&x[start..start + q]);
            }
        }
    }
}

/// `f_n(x)`: on `[k/n, (k+1)/n]` rises from 0 to 1 for even `k` and falls for odd `k`.
pub fn zigzag(segments: usize, x: f64) -> f64 {
    let n = segments as f64;
    let k = ((n * x).floor() as usize).min(segments - 1);
    let t = n * x - k as f64;
    if k % 2 == 0 { t } else { 1.0 - t }
}

/// Arc length of `r = aθ` from 0 to `theta`, `a = R/Θ`.
fn spiral_arc_length(theta: f64) -> f64 {
    let a = SPIRAL_RADIUS / SPIRAL_TURNS_ANGLE;
    0.5 * a * (theta * (1.0 + theta * theta).sqrt() + theta.asinh())
}

fn spiral_angle(length: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, SPIRAL_TURNS_ANGLE);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if spiral_arc_length(mid) < length {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Noise applied on top of a geometry.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Noise {
    #[default]
    None,
    /// Each sample is replaced by an independent pair with probability ε.
    Contamination(f64),
    /// Every coordinate is perturbed by `N(0, σ²)`.
    Gaussian(f64),
}

impl Noise {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Noise::Contamination(eps) if !(0.0..=1.0).contains(&eps) => {
                Err(Error::InvalidParameter(format!("epsilon must lie in [0, 1], got {eps}")))
            }
            Noise::Gaussian(sigma) if !(sigma.is_finite() && sigma >= 0.0) => {
                Err(Error::InvalidParameter(format!("sigma must be nonnegative, got {sigma}")))
            }
            _ => Ok(()),
        }
    }
}

fn raw_sample(geometry: &Geometry, n: usize, rng: &mut impl Rng) -> Result<(Vec<f64>, Vec<f64>)> {
    geometry.validate()?;
    if n == 0 {
        return Err(Error::Empty);
    }
    let (r, q) = geometry.dims();
    let (mut x, mut y) = (Vec::with_capacity(n * r), Vec::with_capacity(n * q));
    for _ in 0..n {
        geometry.draw(rng, &mut x, &mut y);
    }
    Ok((x, y))
}

fn assemble(geometry: &Geometry, x: Vec<f64>, y: Vec<f64>) -> Result<JointDiscreteMeasure> {
    let (r, q) = geometry.dims();
    let n = x.len() / r;
    JointDiscreteMeasure::from_flat(r, q, x, y, vec![1.0 / n as f64; n])
}

/// `n` iid draws from the geometry, then the noise model. The base sample is drawn first,
/// so zero noise reproduces the noiseless sample bit for bit.
pub fn sample_noisy(geometry: &Geometry, noise: Noise, n: usize, rng: &mut impl Rng) -> Result<JointDiscreteMeasure> {
    noise.validate()?;
    let (mut x, mut y) = raw_sample(geometry, n, rng)?;
    let (r, q) = geometry.dims();
    match noise {
        Noise::None => {}
        Noise::Contamination(eps) => {
            let (mut xa, mut ya) = (Vec::with_capacity(r), Vec::with_capacity(q));
            for i in 0..n {
                if rng.random::<f64>() < eps {
                    // x from one fresh draw, y from another: a draw from μ⊗ν.
                    xa.clear();
                    ya.clear();
                    geometry.draw(rng, &mut xa, &mut ya);
                    x[i * r..(i + 1) * r].copy_from_slice(&xa);
                    xa.clear();
                    ya.clear();
                    geometry.draw(rng, &mut xa, &mut ya);
                    y[i * q..(i + 1) * q].copy_from_slice(&ya);
                }
            }
        }
        Noise::Gaussian(sigma) => {
            if sigma > 0.0 {
                for v in x.iter_mut().chain(y.iter_mut()) {
                    *v += sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }
    assemble(geometry, x, y)
}

fn seeded(seed: u64) -> StreamRng {
    dataset_stream(seed, 0)
}

pub fn sample_geometry(geometry: &Geometry, n: usize, seed: u64) -> Result<JointDiscreteMeasure> {
    sample_noisy(geometry, Noise::None, n, &mut seeded(seed))
}

/// `(1 − ε)γ + ε(μ⊗ν)`.
pub fn convex_contaminate(geometry: &Geometry, epsilon: f64, n: usize, seed: u64) -> Result<JointDiscreteMeasure> {
    sample_noisy(geometry, Noise::Contamination(epsilon), n, &mut seeded(seed))
}

/// `γ * N(0, σ² Id)`.
pub fn gaussian_noise(geometry: &Geometry, sigma: f64, n: usize, seed: u64) -> Result<JointDiscreteMeasure> {
    sample_noisy(geometry, Noise::Gaussian(sigma), n, &mut seeded(seed))
}
