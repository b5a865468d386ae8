//! Transport dependency of discrete joint distributions.
//!
//! `τ_c(γ)` is the optimal transport cost between a joint measure `γ` on `ℝ^r × ℝ^q` and
//! the product of its marginals. The crate computes it exactly (network simplex) or
//! approximately (entropic transport with η-scaling), together with three cheap upper
//! bounds, the normalized transport correlations built from it, closed forms for
//! Gaussian laws, permutation tests and synthetic data generators.
//!
//! ```
//! use tdep::costs::{CostSpec, Metric};
//! use tdep::measures::JointDiscreteMeasure;
//! use tdep::tdep::{tdep, SolverChoice};
//!
//! let gamma = JointDiscreteMeasure::from_pairs(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)])?;
//! let r = tdep(&gamma, &CostSpec::raw(Metric::Euclidean, 1.0), SolverChoice::Exact)?;
//! assert!((r.value - 2.0 * (2.0 + 2f64.sqrt()) / 9.0).abs() < 1e-12);
//! # Ok::<(), tdep::Error>(())
//! ```

pub mod coefficients;
pub mod costs;
pub mod error;
pub mod measures;
pub mod oracles;
pub mod ot;
pub mod rng;
pub mod synth;
pub mod tdep;
pub mod testing;

pub use error::{Error, ErrorKind, Result};
