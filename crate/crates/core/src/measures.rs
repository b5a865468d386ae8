//! Discrete probability measures on ℝ^d and joint measures on ℝ^r × ℝ^q.
//!
//! Atoms are stored flat (row-major) and are never merged implicitly; two atoms at the
//! same coordinates simply split their mass. [`DiscreteMeasure::coalesce`] merges them
//! when that is wanted.

use crate::costs::MarginalCost;
use crate::error::{Error, Result};

/// Default cap on the number of atoms produced by [`product`] and [`convolve`].
pub const DEFAULT_ATOM_BUDGET: usize = 1_000_000;

/// Weight sums within this distance of one are renormalized silently.
const RENORMALIZE_TOL: f64 = 1e-9;

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(idx) => Err(Error::NonFinite { idx, value: values[idx] }),
        None => Ok(()),
    }
}

fn normalize_weights(mut weights: Vec<f64>) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::Empty);
    }
    for (idx, &w) in weights.iter().enumerate() {
        if !w.is_finite() {
            return Err(Error::NonFinite { idx, value: w });
        }
        if w < 0.0 {
            return Err(Error::InvalidWeights(format!("negative weight {w} at index {idx}")));
        }
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > RENORMALIZE_TOL {
        return Err(Error::InvalidWeights(format!("weights sum to {sum}, expected 1")));
    }
    if sum != 1.0 {
        weights.iter_mut().for_each(|w| *w /= sum);
    }
    Ok(weights)
}

fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// A finitely supported probability measure on ℝ^d.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure from row-major coordinates (`weights.len() * dim` values).
    pub fn from_flat(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if coords.len() != weights.len() * dim {
            return Err(Error::LengthMismatch(coords.len(), weights.len() * dim));
        }
        check_finite(&coords)?;
        let weights = normalize_weights(weights)?;
        Ok(Self { dim, coords, weights })
    }

    pub fn new(points: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let dim = points.first().ok_or(Error::Empty)?.len();
        if points.len() != weights.len() {
            return Err(Error::LengthMismatch(points.len(), weights.len()));
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords, weights)
    }

    /// Uniform weights over the given points.
    pub fn uniform(points: &[Vec<f64>]) -> Result<Self> {
        Self::new(points, uniform_weights(points.len()))
    }

    /// Uniform measure on scalar atoms.
    pub fn uniform_1d(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty);
        }
        Self::from_flat(1, values.to_vec(), uniform_weights(values.len()))
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::from_flat(point.len(), point.to_vec(), vec![1.0])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Merges atoms with bitwise identical coordinates, keeping first-occurrence order.
    pub fn coalesce(&self) -> Self {
        let mut index = std::collections::HashMap::new();
        let mut coords = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (p, &w) in self.points().zip(&self.weights) {
            let key: Vec<u64> = p.iter().map(|v| canonical_bits(*v)).collect();
            match index.get(&key) {
                Some(&slot) => weights[slot] += w,
                None => {
                    index.insert(key, weights.len());
                    coords.extend_from_slice(p);
                    weights.push(w);
                }
            }
        }
        Self { dim: self.dim, coords, weights }
    }
}

/// Bit pattern of a float with `-0.0` folded onto `0.0`, used as an exact grouping key.
pub(crate) fn canonical_bits(v: f64) -> u64 {
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

/// A finitely supported probability measure on ℝ^r × ℝ^q.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDiscreteMeasure {
    x_dim: usize,
    y_dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    weights: Vec<f64>,
}

impl JointDiscreteMeasure {
    pub fn from_flat(
        x_dim: usize,
        y_dim: usize,
        x: Vec<f64>,
        y: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if x_dim == 0 || y_dim == 0 {
            return Err(Error::InvalidParameter("dimensions must be at least 1".into()));
        }
        let n = weights.len();
        if x.len() != n * x_dim {
            return Err(Error::LengthMismatch(x.len(), n * x_dim));
        }
        if y.len() != n * y_dim {
            return Err(Error::LengthMismatch(y.len(), n * y_dim));
        }
        check_finite(&x)?;
        check_finite(&y)?;
        let weights = normalize_weights(weights)?;
        Ok(Self { x_dim, y_dim, x, y, weights })
    }

    /// Empirical measure of the given samples: uniform weights, input order preserved.
    pub fn from_samples(rows: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let (x0, y0) = rows.first().ok_or(Error::Empty)?;
        let (r, q) = (x0.len(), y0.len());
        let mut x = Vec::with_capacity(rows.len() * r);
        let mut y = Vec::with_capacity(rows.len() * q);
        for (xi, yi) in rows {
            if xi.len() != r {
                return Err(Error::DimensionMismatch { expected: r, got: xi.len() });
            }
            if yi.len() != q {
                return Err(Error::DimensionMismatch { expected: q, got: yi.len() });
            }
            x.extend_from_slice(xi);
            y.extend_from_slice(yi);
        }
        Self::from_flat(r, q, x, y, uniform_weights(rows.len()))
    }

    /// Empirical measure of scalar pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Empty);
        }
        let x = pairs.iter().map(|p| p.0).collect();
        let y = pairs.iter().map(|p| p.1).collect();
        Self::from_flat(1, 1, x, y, uniform_weights(pairs.len()))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    pub fn y_dim(&self) -> usize {
        self.y_dim
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.x_dim..(i + 1) * self.x_dim]
    }

    pub fn y(&self, i: usize) -> &[f64] {
        &self.y[i * self.y_dim..(i + 1) * self.y_dim]
    }

    pub fn x_coords(&self) -> &[f64] {
        &self.x
    }

    pub fn y_coords(&self) -> &[f64] {
        &self.y
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The X- and Y-marginals, atom by atom (no merging of repeated coordinates).
    pub fn marginals(&self) -> (DiscreteMeasure, DiscreteMeasure) {
        let mu = DiscreteMeasure { dim: self.x_dim, coords: self.x.clone(), weights: self.weights.clone() };
        let nu = DiscreteMeasure { dim: self.y_dim, coords: self.y.clone(), weights: self.weights.clone() };
        (mu, nu)
    }

    /// Views each atom as a point of ℝ^{r+q}.
    pub fn concatenated(&self) -> DiscreteMeasure {
        let d = self.x_dim + self.y_dim;
        let mut coords = Vec::with_capacity(self.len() * d);
        for i in 0..self.len() {
            coords.extend_from_slice(self.x(i));
            coords.extend_from_slice(self.y(i));
        }
        DiscreteMeasure { dim: d, coords, weights: self.weights.clone() }
    }

    /// Exchanges the roles of X and Y.
    pub fn swap(&self) -> Self {
        Self {
            x_dim: self.y_dim,
            y_dim: self.x_dim,
            x: self.y.clone(),
            y: self.x.clone(),
            weights: self.weights.clone(),
        }
    }

    /// Re-pairs atoms as `(x_i, y_{perm[i]})` with the weight of atom `i`.
    pub fn permute_y(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::LengthMismatch(perm.len(), self.len()));
        }
        let mut y = Vec::with_capacity(self.y.len());
        for &j in perm {
            if j >= self.len() {
                return Err(Error::InvalidParameter(format!("permutation index {j} out of range")));
            }
            y.extend_from_slice(self.y(j));
        }
        Ok(Self { y, ..self.clone() })
    }

    /// Merges atoms whose (x, y) coordinates coincide bitwise.
    pub fn coalesce(&self) -> Self {
        let merged = self.concatenated().coalesce();
        let d = self.x_dim + self.y_dim;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for p in merged.coords.chunks_exact(d) {
            x.extend_from_slice(&p[..self.x_dim]);
            y.extend_from_slice(&p[self.x_dim..]);
        }
        Self { x_dim: self.x_dim, y_dim: self.y_dim, x, y, weights: merged.weights }
    }
}

/// The product μ⊗ν with atoms ordered lexicographically by `(i, j)`.
pub fn product(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<JointDiscreteMeasure> {
    product_with_budget(mu, nu, DEFAULT_ATOM_BUDGET)
}

pub fn product_with_budget(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    budget: usize,
) -> Result<JointDiscreteMeasure> {
    let requested = mu.len().saturating_mul(nu.len());
    if requested > budget {
        return Err(Error::Capacity { requested, budget });
    }
    let mut x = Vec::with_capacity(requested * mu.dim);
    let mut y = Vec::with_capacity(requested * nu.dim);
    let mut weights = Vec::with_capacity(requested);
    for (p, &w) in mu.points().zip(&mu.weights) {
        for (q, &v) in nu.points().zip(&nu.weights) {
            x.extend_from_slice(p);
            y.extend_from_slice(q);
            weights.push(w * v);
        }
    }
    JointDiscreteMeasure::from_flat(mu.dim, nu.dim, x, y, weights)
}

/// The convex combination `(1 - t) γ0 + t γ1`, atoms of `γ0` first.
pub fn mixture(
    g0: &JointDiscreteMeasure,
    g1: &JointDiscreteMeasure,
    t: f64,
) -> Result<JointDiscreteMeasure> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("mixture parameter {t} outside [0, 1]")));
    }
    if g0.x_dim != g1.x_dim {
        return Err(Error::DimensionMismatch { expected: g0.x_dim, got: g1.x_dim });
    }
    if g0.y_dim != g1.y_dim {
        return Err(Error::DimensionMismatch { expected: g0.y_dim, got: g1.y_dim });
    }
    if t == 0.0 {
        return Ok(g0.clone());
    }
    if t == 1.0 {
        return Ok(g1.clone());
    }
    let mut x = g0.x.clone();
    x.extend_from_slice(&g1.x);
    let mut y = g0.y.clone();
    y.extend_from_slice(&g1.y);
    let weights = g0
        .weights
        .iter()
        .map(|w| (1.0 - t) * w)
        .chain(g1.weights.iter().map(|w| t * w))
        .collect();
    JointDiscreteMeasure::from_flat(g0.x_dim, g0.y_dim, x, y, weights)
}

/// Discrete convolution `γ * (κX ⊗ κY)`; atom `(i, j, k)` sits at `(x_i + a_j, y_i + b_k)`.
pub fn convolve(
    gamma: &JointDiscreteMeasure,
    kx: &DiscreteMeasure,
    ky: &DiscreteMeasure,
) -> Result<JointDiscreteMeasure> {
    convolve_with_budget(gamma, kx, ky, DEFAULT_ATOM_BUDGET)
}

pub fn convolve_with_budget(
    gamma: &JointDiscreteMeasure,
    kx: &DiscreteMeasure,
    ky: &DiscreteMeasure,
    budget: usize,
) -> Result<JointDiscreteMeasure> {
    if kx.dim != gamma.x_dim {
        return Err(Error::DimensionMismatch { expected: gamma.x_dim, got: kx.dim });
    }
    if ky.dim != gamma.y_dim {
        return Err(Error::DimensionMismatch { expected: gamma.y_dim, got: ky.dim });
    }
    let requested = gamma.len().saturating_mul(kx.len()).saturating_mul(ky.len());
    if requested > budget {
        return Err(Error::Capacity { requested, budget });
    }
    let mut x = Vec::with_capacity(requested * gamma.x_dim);
    let mut y = Vec::with_capacity(requested * gamma.y_dim);
    let mut weights = Vec::with_capacity(requested);
    for i in 0..gamma.len() {
        for (a, &u) in kx.points().zip(&kx.weights) {
            for (b, &v) in ky.points().zip(&ky.weights) {
                x.extend(gamma.x(i).iter().zip(a).map(|(p, s)| p + s));
                y.extend(gamma.y(i).iter().zip(b).map(|(p, s)| p + s));
                weights.push(gamma.weights[i] * u * v);
            }
        }
    }
    JointDiscreteMeasure::from_flat(gamma.x_dim, gamma.y_dim, x, y, weights)
}

/// An affine map `z ↦ A z + b` on ℝ^d.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    dim: usize,
    matrix: Vec<f64>,
    shift: Vec<f64>,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        Self { dim, matrix, shift: vec![0.0; dim] }
    }

    pub fn translation(shift: Vec<f64>) -> Self {
        let dim = shift.len();
        Self { shift, ..Self::identity(dim) }
    }

    /// `A` is given row-major with `shift.len()` rows and columns.
    pub fn new(matrix: Vec<f64>, shift: Vec<f64>) -> Result<Self> {
        let dim = shift.len();
        if matrix.len() != dim * dim {
            return Err(Error::LengthMismatch(matrix.len(), dim * dim));
        }
        check_finite(&matrix)?;
        check_finite(&shift)?;
        Ok(Self { dim, matrix, shift })
    }

    /// Scaling by `factor` followed by no shift.
    pub fn scaling(dim: usize, factor: f64) -> Self {
        let mut map = Self::identity(dim);
        map.matrix.iter_mut().for_each(|v| *v *= factor);
        map
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, z: &[f64], out: &mut Vec<f64>) {
        for r in 0..self.dim {
            let row = &self.matrix[r * self.dim..(r + 1) * self.dim];
            out.push(row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + self.shift[r]);
        }
    }
}

/// Pushes γ forward through `(fX, fY)`; weights are unchanged.
pub fn push_forward(
    gamma: &JointDiscreteMeasure,
    fx: &AffineMap,
    fy: &AffineMap,
) -> Result<JointDiscreteMeasure> {
    if fx.dim != gamma.x_dim {
        return Err(Error::DimensionMismatch { expected: gamma.x_dim, got: fx.dim });
    }
    if fy.dim != gamma.y_dim {
        return Err(Error::DimensionMismatch { expected: gamma.y_dim, got: fy.dim });
    }
    let mut x = Vec::with_capacity(gamma.x.len());
    let mut y = Vec::with_capacity(gamma.y.len());
    for i in 0..gamma.len() {
        fx.apply(gamma.x(i), &mut x);
        fy.apply(gamma.y(i), &mut y);
    }
    JointDiscreteMeasure::from_flat(gamma.x_dim, gamma.y_dim, x, y, gamma.weights.clone())
}

/// The c-diameter `Σ_ij w_i w_j c(p_i, p_j)`.
pub fn diameter(mu: &DiscreteMeasure, cost: &MarginalCost) -> f64 {
    let n = mu.len();
    let mut total = 0.0;
    for i in 0..n {
        let pi = mu.point(i);
        let mut row = 0.0;
        for j in (i + 1)..n {
            row += mu.weights[j] * cost.eval(pi, mu.point(j));
        }
        total += mu.weights[i] * row;
    }
    // Symmetric cost, zero diagonal.
    2.0 * total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::Metric;

    fn abs_cost() -> MarginalCost {
        MarginalCost::metric_power(Metric::Euclidean, 1.0)
    }

    #[test]
    fn empirical_measure_of_figure_four_instance() {
        let g = JointDiscreteMeasure::from_pairs(&[(1.0, 6.0), (2.0, 1.0), (4.0, 2.0), (4.0, 5.0)]).unwrap();
        assert_eq!(g.len(), 4);
        assert!(g.weights().iter().all(|&w| w == 0.25));
        assert_eq!(g.y(3), &[5.0]);
    }

    #[test]
    fn from_samples_keeps_duplicates_and_single_rows() {
        let one = JointDiscreteMeasure::from_samples(&[(vec![0.0], vec![0.0])]).unwrap();
        assert_eq!(one.weights(), &[1.0]);
        let dup = JointDiscreteMeasure::from_samples(&[(vec![0.0], vec![0.0]), (vec![0.0], vec![0.0])]).unwrap();
        assert_eq!(dup.weights(), &[0.5, 0.5]);
        assert_eq!(dup.coalesce().weights(), &[1.0]);
    }

    #[test]
    fn from_samples_rejects_bad_input() {
        assert_eq!(JointDiscreteMeasure::from_samples(&[]), Err(Error::Empty));
        let rows = vec![(vec![0.0], vec![0.0]), (vec![0.0, 1.0], vec![0.0])];
        assert!(matches!(
            JointDiscreteMeasure::from_samples(&rows),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn weights_are_validated_and_renormalized() {
        let m = DiscreteMeasure::from_flat(1, vec![0.0, 1.0], vec![0.5, 0.5 + 1e-11]).unwrap();
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(DiscreteMeasure::from_flat(1, vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(DiscreteMeasure::from_flat(1, vec![0.0, 1.0], vec![1.5, -0.5]).is_err());
        assert!(matches!(
            DiscreteMeasure::from_flat(1, vec![f64::NAN], vec![1.0]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn marginals_retain_repeated_atoms() {
        let g = JointDiscreteMeasure::from_pairs(&[(0.0, 5.0), (0.0, 7.0)]).unwrap();
        let (mu, nu) = g.marginals();
        assert_eq!(mu.coords(), &[0.0, 0.0]);
        assert_eq!(mu.weights(), &[0.5, 0.5]);
        assert_eq!(nu.coords(), &[5.0, 7.0]);

        let diag = JointDiscreteMeasure::from_pairs(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]).unwrap();
        let (mu, nu) = diag.marginals();
        assert_eq!(mu, nu);
        assert_eq!(mu.coords(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn product_orders_atoms_lexicographically() {
        let mu = DiscreteMeasure::uniform_1d(&[1.0, 2.0]).unwrap();
        let nu = DiscreteMeasure::uniform_1d(&[3.0]).unwrap();
        let p = product(&mu, &nu).unwrap();
        assert_eq!(p.x_coords(), &[1.0, 2.0]);
        assert_eq!(p.y_coords(), &[3.0, 3.0]);
        assert_eq!(p.weights(), &[0.5, 0.5]);

        let m3 = DiscreteMeasure::uniform_1d(&[1.0, 2.0, 3.0]).unwrap();
        let p = product(&m3, &m3).unwrap();
        assert_eq!(p.len(), 9);
        assert_eq!((p.x(5)[0], p.y(5)[0]), (2.0, 3.0));
        assert!(p.weights().iter().all(|w| (w - 1.0 / 9.0).abs() < 1e-16));

        let d = product(&DiscreteMeasure::dirac(&[1.0]).unwrap(), &DiscreteMeasure::dirac(&[2.0]).unwrap()).unwrap();
        assert_eq!((d.x(0)[0], d.y(0)[0], d.weights()[0]), (1.0, 2.0, 1.0));
    }

    #[test]
    fn product_respects_budget() {
        let m = DiscreteMeasure::uniform_1d(&[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(
            product_with_budget(&m, &m, 8),
            Err(Error::Capacity { requested: 9, budget: 8 })
        );
    }

    #[test]
    fn mixture_endpoints_and_midpoint() {
        let g0 = JointDiscreteMeasure::from_pairs(&[(0.0, 0.0)]).unwrap();
        let g1 = JointDiscreteMeasure::from_pairs(&[(1.0, 1.0)]).unwrap();
        assert_eq!(mixture(&g0, &g1, 0.0).unwrap(), g0);
        assert_eq!(mixture(&g0, &g1, 1.0).unwrap(), g1);
        let half = mixture(&g0, &g1, 0.5).unwrap();
        assert_eq!(half.weights(), &[0.5, 0.5]);
        assert!(mixture(&g0, &g1, 1.5).is_err());
    }

    #[test]
    fn convolution_with_point_masses() {
        let g = JointDiscreteMeasure::from_pairs(&[(0.3, 0.1), (0.7, 0.9)]).unwrap();
        let zero = DiscreteMeasure::dirac(&[0.0]).unwrap();
        assert_eq!(convolve(&g, &zero, &zero).unwrap(), g);

        let origin = JointDiscreteMeasure::from_pairs(&[(0.0, 0.0)]).unwrap();
        let shifted = convolve(&origin, &DiscreteMeasure::dirac(&[1.0]).unwrap(), &DiscreteMeasure::dirac(&[2.0]).unwrap()).unwrap();
        assert_eq!((shifted.x(0)[0], shifted.y(0)[0]), (1.0, 2.0));
    }

    #[test]
    fn convolution_enumerates_cross_sums() {
        let h = 0.25;
        let g = JointDiscreteMeasure::from_pairs(&[(0.0, 0.0), (1.0, 1.0)]).unwrap();
        let kx = DiscreteMeasure::uniform_1d(&[-h, h]).unwrap();
        let ky = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let c = convolve(&g, &kx, &ky).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c.x_coords(), &[-h, h, 1.0 - h, 1.0 + h]);
        assert_eq!(c.y_coords(), &[0.0, 0.0, 1.0, 1.0]);
        assert!(c.weights().iter().all(|&w| w == 0.25));
    }

    #[test]
    fn push_forward_translation_and_rotation() {
        let g = JointDiscreteMeasure::from_samples(&[
            (vec![0.0, 0.0], vec![1.0]),
            (vec![1.0, 0.0], vec![2.0]),
            (vec![0.0, 2.0], vec![3.0]),
        ])
        .unwrap();
        let same = push_forward(&g, &AffineMap::identity(2), &AffineMap::identity(1)).unwrap();
        assert_eq!(same, g);

        let shifted = push_forward(&g, &AffineMap::translation(vec![1.0, -1.0]), &AffineMap::identity(1)).unwrap();
        assert_eq!(shifted.x(2), &[1.0, 1.0]);

        let (s, c) = 0.3f64.sin_cos();
        let rot = AffineMap::new(vec![c, -s, s, c], vec![0.0, 0.0]).unwrap();
        let rotated = push_forward(&g, &rot, &AffineMap::identity(1)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let before = Metric::Euclidean.dist(g.x(i), g.x(j));
                let after = Metric::Euclidean.dist(rotated.x(i), rotated.x(j));
                assert!((before - after).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diameters_by_double_sum() {
        assert_eq!(diameter(&DiscreteMeasure::dirac(&[3.0]).unwrap(), &abs_cost()), 0.0);
        let m3 = DiscreteMeasure::uniform_1d(&[1.0, 2.0, 3.0]).unwrap();
        assert!((diameter(&m3, &abs_cost()) - 8.0 / 9.0).abs() < 1e-15);
        let m2 = DiscreteMeasure::uniform_1d(&[0.0, 1.0]).unwrap();
        let sq = MarginalCost::metric_power(Metric::Euclidean, 2.0);
        assert!((diameter(&m2, &sq) - 0.5).abs() < 1e-15);
    }
}
