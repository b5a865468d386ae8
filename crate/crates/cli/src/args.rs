use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tdep::coefficients::{CoefficientKind, CoefficientRequest};
use tdep::costs::{Alpha, CostFamily, CostSpec, Metric};
use tdep::measures::JointDiscreteMeasure;
use tdep::rng::dataset_stream;
use tdep::synth::{sample_noisy, Geometry, Noise, DEFAULT_POLYNOMIAL};
use tdep::tdep::SolverChoice;

use crate::error::{Error, Result};
use crate::io::read_samples;

#[derive(Debug, Parser)]
#[command(name = "tdep", version, about = "Transport dependency and transport correlations of sampled data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transport dependency of a sample with its three upper bounds (JSON).
    Compute {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        cost: CostArgs,
        #[arg(long, default_value = "auto")]
        solver: SolverChoice,
        /// Merge coinciding atoms of the marginals before building their product.
        #[arg(long)]
        merge_marginals: bool,
    },
    /// A dependence coefficient of a sample (JSON).
    Corr {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        coeff: CoeffArgs,
    },
    /// Permutation test of independence (JSON).
    Test {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        coeff: CoeffArgs,
        #[command(flatten)]
        perm: PermArgs,
    },
    /// Test power over a grid of contamination levels (CSV: epsilon,power).
    Power {
        #[command(flatten)]
        geometry: GeometryArgs,
        #[arg(long, default_value_t = 50)]
        n: usize,
        /// Datasets per grid point.
        #[arg(long, default_value_t = 100)]
        runs: usize,
        /// Contamination levels, `start:stop:step` or a comma separated list.
        #[arg(long, default_value = "0:1:0.1")]
        epsilon_grid: String,
        #[command(flatten)]
        coeff: CoeffArgs,
        #[command(flatten)]
        perm: PermArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form Gaussian dependency measures along a correlation grid
    /// (CSV: rho2,tdep,marginal_tdep,dcov2,mi).
    Gauss {
        /// Correlations, `start:stop:step` or a comma separated list.
        #[arg(long, default_value = "0:1:0.01")]
        rho_grid: String,
        #[arg(long, default_value_t = 1.0)]
        sigma1: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a synthetic geometry (CSV in the sample format).
    Synth {
        #[command(flatten)]
        generator: GeneratorArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeometryName {
    Identity,
    Zigzag,
    Polynomial,
    Sine,
    Circle,
    Cross,
    Spiral,
    Pretzel,
    Sphere,
    UniformNoise,
    LinearHighdim,
}

#[derive(Debug, Clone, Args)]
pub struct GeometryArgs {
    #[arg(long, value_enum, default_value = "identity")]
    pub geometry: GeometryName,
    /// Zigzag segment count.
    #[arg(long, default_value_t = 3)]
    pub segments: usize,
    /// Sine frequency.
    #[arg(long, default_value_t = 4.0)]
    pub slope: f64,
    /// Polynomial coefficients from the constant term up, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub coefficients: Option<Vec<f64>>,
    /// Dimensions of x and y for sphere, uniform_noise and linear_highdim.
    #[arg(long, default_value_t = 2)]
    pub r: usize,
    #[arg(long, default_value_t = 2)]
    pub q: usize,
}

impl GeometryArgs {
    pub fn geometry(&self) -> Geometry {
        let (r, q) = (self.r, self.q);
        match self.geometry {
            GeometryName::Identity => Geometry::Identity,
            GeometryName::Zigzag => Geometry::Zigzag { segments: self.segments },
            GeometryName::Polynomial => Geometry::Polynomial {
                coefficients: self.coefficients.clone().unwrap_or_else(|| DEFAULT_POLYNOMIAL.to_vec()),
            },
            GeometryName::Sine => Geometry::Sine { slope: self.slope },
            GeometryName::Circle => Geometry::Circle,
            GeometryName::Cross => Geometry::Cross,
            GeometryName::Spiral => Geometry::Spiral,
            GeometryName::Pretzel => Geometry::Pretzel,
            GeometryName::Sphere => Geometry::Sphere { r, q },
            GeometryName::UniformNoise => Geometry::UniformNoise { r, q },
            GeometryName::LinearHighdim => Geometry::LinearHighdim { r, q },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GeneratorArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Convex contamination level.
    #[arg(long, conflicts_with = "sigma")]
    pub epsilon: Option<f64>,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl GeneratorArgs {
    pub fn noise(&self) -> Noise {
        match (self.epsilon, self.sigma) {
            (Some(eps), _) => Noise::Contamination(eps),
            (None, Some(sigma)) => Noise::Gaussian(sigma),
            (None, None) => Noise::None,
        }
    }

    pub fn sample(&self) -> Result<JointDiscreteMeasure> {
        let seed = require_seed(self.seed)?;
        Ok(sample_noisy(&self.geometry.geometry(), self.noise(), self.n, &mut dataset_stream(seed, 0))?)
    }
}

/// Data from a sample file, or from a generator when `--in` is absent.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long = "in", value_name = "FILE", conflicts_with_all = ["geometry", "epsilon", "sigma"])]
    pub input: Option<PathBuf>,
    #[arg(long, requires = "input")]
    pub x_dim: Option<usize>,
    #[arg(long, requires = "input")]
    pub y_dim: Option<usize>,
    #[command(flatten)]
    pub generator: GeneratorArgs,
}

impl DataArgs {
    pub fn load(&self) -> Result<JointDiscreteMeasure> {
        match &self.input {
            Some(path) => read_samples(path, self.x_dim, self.y_dim),
            None => self.generator.sample(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CostName {
    /// `(α d_X^β + d_Y)^p`.
    Additive,
    /// `d^p` on the concatenated space, with the metric of `--metric-x`.
    Raw,
    /// `min(α^p d_X^{βp}, d_Y^p)`.
    Min,
}

#[derive(Debug, Clone, Args)]
pub struct CostArgs {
    #[arg(long, value_enum, default_value = "additive")]
    pub cost: CostName,
    /// Positive real or `inf`.
    #[arg(long, default_value = "1")]
    pub alpha: Alpha,
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta_x: f64,
    #[arg(long, default_value = "euclidean")]
    pub metric_x: Metric,
    #[arg(long, default_value = "euclidean")]
    pub metric_y: Metric,
}

impl CostArgs {
    pub fn spec(&self) -> CostSpec {
        let family = match self.cost {
            CostName::Additive => CostFamily::Additive { alpha: self.alpha, beta_x: self.beta_x },
            CostName::Min => CostFamily::MinMarginal { alpha: self.alpha, beta_x: self.beta_x },
            CostName::Raw => return CostSpec::raw(self.metric_x, self.p),
        };
        CostSpec::with_family(family, self.p).with_metrics(self.metric_x, self.metric_y)
    }
}

#[derive(Debug, Clone, Args)]
pub struct CoeffArgs {
    #[arg(long, default_value = "rho_star")]
    pub coeff: CoefficientKind,
    /// For rho_alpha: a positive real, or `inf` for rho_inf.
    #[arg(long)]
    pub alpha: Option<Alpha>,
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    #[arg(long, default_value = "euclidean")]
    pub metric_x: Metric,
    #[arg(long, default_value = "euclidean")]
    pub metric_y: Metric,
    #[arg(long, default_value = "auto")]
    pub solver: SolverChoice,
}

impl CoeffArgs {
    pub fn request(&self) -> Result<CoefficientRequest> {
        let mut req = CoefficientRequest::new(self.coeff)
            .with_p(self.p)
            .with_solver(self.solver)
            .with_metrics(self.metric_x, self.metric_y);
        match (self.coeff, self.alpha) {
            (CoefficientKind::RhoAlpha, Some(Alpha::Infinite)) => req.kind = CoefficientKind::RhoInf,
            (CoefficientKind::RhoAlpha, Some(Alpha::Finite(a))) => req.alpha = Some(a),
            (CoefficientKind::RhoAlpha, None) => return Err(Error::Usage("rho_alpha requires --alpha".into())),
            (_, Some(_)) => return Err(Error::Usage(format!("--alpha does not apply to {}", self.coeff.name()))),
            (_, None) => {}
        }
        Ok(req)
    }
}

#[derive(Debug, Clone, Copy, Args)]
pub struct PermArgs {
    /// Number of random permutations.
    #[arg(long, default_value_t = 29)]
    pub m: usize,
    /// Reject when at most k permuted statistics exceed the observed one.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
}

pub fn require_seed(seed: Option<u64>) -> Result<u64> {
    seed.ok_or_else(|| Error::Usage("this command is randomized; pass --seed".into()))
}

/// `start:stop:step` (inclusive of `stop` up to rounding) or `v1,v2,...`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Usage(format!("invalid grid '{text}': expected start:stop:step or a comma separated list"));
    let number = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (number(start)?, number(stop)?, number(step)?);
            if !(step > 0.0) || stop < start {
                return Err(bad());
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            let mut grid: Vec<f64> = (0..=count).map(|i| start + i as f64 * step).collect();
            // Land exactly on `stop` when the step divides the range.
            if let Some(last) = grid.last_mut() {
                if (*last - stop).abs() <= 1e-9 * step {
                    *last = stop;
                }
            }
            Ok(grid)
        }
        [_] => text.split(',').map(number).collect(),
        _ => Err(bad()),
    }
}
