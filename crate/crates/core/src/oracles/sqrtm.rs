//! Principal square root of a real matrix with nonnegative real spectrum (not necessarily
//! symmetric).

use nalgebra::{DMatrix, Dyn, Schur};

use crate::error::{Error, Result};

/// Required relative Frobenius residual `‖S² − M‖ / ‖M‖`.
pub const RESIDUAL_TOL: f64 = 1e-9;

const DB_MAX_ITER: usize = 100;
/// Determinant scaling is switched off once steps become this small.
const DB_SCALING_OFF: f64 = 1e-2;
const DB_STEP_TOL: f64 = 1e-15;

pub fn relative_residual(s: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    let norm = m.norm();
    let err = (s * s - m).norm();
    if norm == 0.0 { err } else { err / norm }
}

/// Square root accurate to [`RESIDUAL_TOL`]: scaled Denman–Beavers first, real Schur
/// method when the iteration breaks down (singular input) or misses the residual.
pub fn sqrtm(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
    }
    if let Some(idx) = m.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { idx, value: m[idx] });
    }
    if m.norm() == 0.0 {
        return Ok(m.clone());
    }
    if let Some(s) = denman_beavers(m) {
        if relative_residual(&s, m) <= RESIDUAL_TOL {
            return Ok(s);
        }
    }
    let s = schur_sqrt(m)?;
    let res = relative_residual(&s, m);
    if res <= RESIDUAL_TOL {
        Ok(s)
    } else {
        Err(Error::Numerical(format!("matrix square root residual {res:e} above {RESIDUAL_TOL:e}")))
    }
}

fn log_abs_det(a: &DMatrix<f64>) -> Option<f64> {
    let lu = a.clone().lu();
    let u = lu.u();
    let mut acc = 0.0;
    for i in 0..u.nrows() {
        let d = u[(i, i)].abs();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(acc)
}

/// Determinant-scaled Denman–Beavers iteration; `None` if an iterate is singular or the
/// iteration does not settle.
pub fn denman_beavers(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let mut y = m.clone();
    let mut z = DMatrix::<f64>::identity(n, n);
    let mut scaling = true;
    for _ in 0..DB_MAX_ITER {
        let y_inv = y.clone().try_inverse()?;
        let z_inv = z.clone().try_inverse()?;
        let mu = if scaling {
            (-(log_abs_det(&y)? + log_abs_det(&z)?) / (2.0 * n as f64)).exp()
        } else {
            1.0
        };
        let y_next = (&y * mu + z_inv / mu) * 0.5;
        let z_next = (&z * mu + y_inv / mu) * 0.5;
        if !y_next.iter().all(|v| v.is_finite()) {
            return None;
        }
        let step = (&y_next - &y).norm() / y_next.norm();
        y = y_next;
        z = z_next;
        if step < DB_SCALING_OFF {
            scaling = false;
        }
        if step <= DB_STEP_TOL {
            return Some(y);
        }
    }
    Some(y)
}

/// Principal root of a 2×2 block with no eigenvalue on the negative real axis:
/// `(A + √det(A) I) / √(tr A + 2√det A)`.
fn sqrt_2x2(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    if det < 0.0 {
        return Err(Error::Numerical("2x2 Schur block has a negative eigenvalue".into()));
    }
    let s = det.sqrt();
    let t2 = a[(0, 0)] + a[(1, 1)] + 2.0 * s;
    if t2 <= 0.0 {
        return Err(Error::Numerical("2x2 Schur block has no real principal root".into()));
    }
    let mut r = a.clone();
    r[(0, 0)] += s;
    r[(1, 1)] += s;
    Ok(r / t2.sqrt())
}

/// Solves `A X + X B = C` for blocks of order at most two via the Kronecker system.
fn sylvester(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, q) = (a.nrows(), b.nrows());
    let mut k = DMatrix::<f64>::zeros(p * q, p * q);
    for col in 0..q {
        for row in 0..p {
            let r = col * p + row;
            for i in 0..p {
                k[(r, col * p + i)] += a[(row, i)];
            }
            for j in 0..q {
                k[(r, j * p + row)] += b[(j, col)];
            }
        }
    }
    let rhs = DMatrix::from_column_slice(p * q, 1, c.as_slice());
    match k.lu().solve(&rhs) {
        Some(x) if x.iter().all(|v| v.is_finite()) => DMatrix::from_column_slice(p, q, x.as_slice()),
        // Both diagonal roots vanish: the coupling term is zero for diagonalizable input.
        _ => DMatrix::zeros(p, q),
    }
}

/// Real Schur method: `M = Q T Qᵀ`, blockwise root of the quasi-triangular `T`.
pub fn schur_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let schur = Schur::<f64, Dyn>::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("real Schur decomposition did not converge".into()))?;
    let (q, t) = schur.unpack();
    let scale = t.amax().max(f64::MIN_POSITIVE);

    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > f64::EPSILON * scale {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }

    let mut r = DMatrix::<f64>::zeros(n, n);
    for &(s, len) in &blocks {
        let root = if len == 1 {
            let v = t[(s, s)];
            if v < -1e-12 * scale {
                return Err(Error::Numerical(format!("negative eigenvalue {v} has no real root")));
            }
            DMatrix::from_element(1, 1, v.max(0.0).sqrt())
        } else {
            sqrt_2x2(&t.view((s, s), (2, 2)).into_owned())?
        };
        r.view_mut((s, s), (len, len)).copy_from(&root);
    }
    for jb in 1..blocks.len() {
        let (sj, lj) = blocks[jb];
        for ib in (0..jb).rev() {
            let (si, li) = blocks[ib];
            let mut c = t.view((si, sj), (li, lj)).into_owned();
            for &(sk, lk) in &blocks[ib + 1..jb] {
                c -= r.view((si, sk), (li, lk)) * r.view((sk, sj), (lk, lj));
            }
            let a = r.view((si, si), (li, li)).into_owned();
            let b = r.view((sj, sj), (lj, lj)).into_owned();
            r.view_mut((si, sj), (li, lj)).copy_from(&sylvester(&a, &b, &c));
        }
    }
    Ok(&q * r * q.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn similar_to_psd(seed: u64, n: usize, zero_eigs: usize) -> DMatrix<f64> {
        // A B with A, B symmetric positive semidefinite has a nonnegative real spectrum.
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let g1 = DMatrix::from_fn(n, n, |_, _| next());
        let g2 = DMatrix::from_fn(n, n - zero_eigs, |_, _| next());
        let a = &g1 * g1.transpose() + DMatrix::identity(n, n) * 0.1;
        let b = &g2 * g2.transpose();
        a * b
    }

    #[test]
    fn both_methods_hit_the_residual() {
        for seed in 0..20 {
            let m = similar_to_psd(seed, 4, 0);
            let db = denman_beavers(&m).unwrap();
            assert!(relative_residual(&db, &m) <= RESIDUAL_TOL, "db seed {seed}");
            let sc = schur_sqrt(&m).unwrap();
            assert!(relative_residual(&sc, &m) <= RESIDUAL_TOL, "schur seed {seed}");
            assert!((db.trace() - sc.trace()).abs() < 1e-9 * db.trace().abs().max(1.0));
        }
    }

    #[test]
    fn singular_input_uses_schur() {
        for seed in 0..10 {
            let m = similar_to_psd(100 + seed, 4, 1);
            let s = sqrtm(&m).unwrap();
            assert!(relative_residual(&s, &m) <= RESIDUAL_TOL);
        }
    }

    #[test]
    fn rotation_block_is_handled() {
        // Complex pair 1 ± i plus a real eigenvalue 4.
        let m = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.3, 1.0, 1.0, 0.2, 0.0, 0.0, 4.0]);
        let s = schur_sqrt(&m).unwrap();
        assert!(relative_residual(&s, &m) <= RESIDUAL_TOL);
    }

    #[test]
    fn known_roots() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 9.0, 0.0]));
        let s = sqrtm(&d).unwrap();
        assert!((s.clone() - DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 3.0, 0.0]))).norm() < 1e-12);
        assert_eq!(sqrtm(&DMatrix::zeros(2, 2)).unwrap(), DMatrix::zeros(2, 2));
        assert!(sqrtm(&DMatrix::from_row_slice(1, 1, &[-1.0])).is_err());
    }
}
