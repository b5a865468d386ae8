//! Semi-dual evaluation for costs that split into an x-part plus a y-part.
//!
//! With `c(i, (k, l)) = A_ik + B_il` the Gibbs kernel factorizes, so the column sums over a
//! block of y-atoms are one matrix product of an x-factor and a y-factor, and the row sums
//! are a second one. Both factors are shifted by their own maxima. A block only groups
//! y-atoms whose y-part rows differ by at most `BLOCK_SPREAD · η`, which keeps the largest
//! term of every column sum above `exp(-BLOCK_SPREAD)`.

use super::sinkhorn::{exp_in_place, max_gain, PassStats};
use crate::costs::SplitCost;

/// Widest spread of y-part rows inside one block, in units of η.
const BLOCK_SPREAD: f64 = 600.0;

pub(super) struct Factored {
    n: usize,
    n_x: usize,
    n_y: usize,
    /// `x_part[k * n + i]`, restricted to the solver's sources.
    x_part: Vec<f64>,
    /// `y_part[l * n + i]`.
    y_part: Vec<f64>,
    /// Destination weights on the full grid, `k * n_y + l`; zero where not in the problem.
    b: Vec<f64>,
    /// y-atoms ordered so that neighbours have similar y-part rows.
    order: Vec<usize>,
    /// Ranges into `order`, valid for `blocks_eta`.
    blocks: Vec<(usize, usize)>,
    blocks_eta: f64,
    h: Vec<f64>,
    alpha: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    s: Vec<f64>,
    u: Vec<f64>,
    scratch: Vec<f64>,
}

impl Factored {
    /// `src` and `dst` are the solver's sources and destinations in the split cost's indexing,
    /// `b` the destination weights in the solver's order.
    pub(super) fn new(split: SplitCost<'_>, src: &[usize], dst: &[usize], b: &[f64]) -> Self {
        let n = src.len();
        let (n_x, n_y) = (split.n_x, split.n_y);
        let gather = |table: &[f64], atoms: usize| -> Vec<f64> {
            let mut out = Vec::with_capacity(atoms * n);
            for row in table.chunks_exact(split.n_src).take(atoms) {
                out.extend(src.iter().map(|&i| row[i]));
            }
            out
        };
        let x_part = gather(split.x_part, n_x);
        let y_part = gather(split.y_part, n_y);
        let mut grid = vec![0.0; n_x * n_y];
        for (&j, &bj) in dst.iter().zip(b) {
            grid[j] = bj;
        }
        // Sorting by the distance from the most remote source puts 1-D atoms in order.
        let remote = (0..n)
            .max_by(|&i, &k| {
                let si: f64 = (0..n_y).map(|l| y_part[l * n + i]).sum();
                let sk: f64 = (0..n_y).map(|l| y_part[l * n + k]).sum();
                si.total_cmp(&sk).then(k.cmp(&i))
            })
            .unwrap_or(0);
        let mut order: Vec<usize> = (0..n_y).collect();
        order.sort_by(|&l, &m| y_part[l * n + remote].total_cmp(&y_part[m * n + remote]).then(l.cmp(&m)));
        Self {
            n,
            n_x,
            n_y,
            x_part,
            y_part,
            b: grid,
            order,
            blocks: Vec::new(),
            blocks_eta: f64::NAN,
            h: vec![0.0; n],
            alpha: vec![0.0; n_x],
            p: vec![0.0; n_x * n],
            q: Vec::new(),
            s: Vec::new(),
            u: Vec::new(),
            scratch: Vec::new(),
        }
    }

    fn y_row(&self, l: usize) -> &[f64] {
        &self.y_part[l * self.n..(l + 1) * self.n]
    }

    fn build_blocks(&mut self, eta: f64) {
        let limit = BLOCK_SPREAD * eta;
        let n = self.n;
        let mut blocks = Vec::new();
        let (mut lo, mut hi) = (vec![0.0f64; n], vec![0.0f64; n]);
        let mut start = 0;
        for pos in 0..self.order.len() {
            let row = self.y_row(self.order[pos]);
            if pos > start {
                let spread = (0..n).map(|i| hi[i].max(row[i]) - lo[i].min(row[i])).fold(0.0, f64::max);
                if spread <= limit {
                    for i in 0..n {
                        lo[i] = lo[i].min(row[i]);
                        hi[i] = hi[i].max(row[i]);
                    }
                    continue;
                }
                blocks.push((start, pos));
                start = pos;
            }
            lo.copy_from_slice(row);
            hi.copy_from_slice(row);
        }
        if start < self.order.len() {
            blocks.push((start, self.order.len()));
        }
        self.blocks = blocks;
        self.blocks_eta = eta;
    }

    /// Writes the row sums of the column-normalized entropic plan at `f` into `rows` and
    /// returns the semi-dual value. The primal cost is only computed when asked for.
    pub(super) fn evaluate(&mut self, f: &[f64], a: &[f64], eta: f64, rows: &mut [f64], primal: bool) -> PassStats {
        if self.blocks_eta != eta {
            self.build_blocks(eta);
        }
        let (n, n_x) = (self.n, self.n_x);
        let inv_eta = 1.0 / eta;
        rows.iter_mut().for_each(|r| *r = 0.0);
        let mut stats = PassStats { dual: 0.0, dual_scale: 0.0, primal: if primal { 0.0 } else { f64::NAN } };
        for (&ai, &fi) in a.iter().zip(f) {
            stats.dual += ai * fi;
            stats.dual_scale += ai * fi.abs();
        }
        for bi in 0..self.blocks.len() {
            let (start, end) = self.blocks[bi];
            let len = end - start;

            // h_i: the best y-side gain of source i within the block.
            let first = self.order[start];
            for i in 0..n {
                self.h[i] = f[i] - self.y_part[first * n + i];
            }
            for pos in start + 1..end {
                let l = self.order[pos];
                for i in 0..n {
                    let v = f[i] - self.y_part[l * n + i];
                    self.h[i] = if v > self.h[i] { v } else { self.h[i] };
                }
            }
            self.q.resize(len * n, 0.0);
            for (r, pos) in (start..end).enumerate() {
                let l = self.order[pos];
                let (qr, yr) = (&mut self.q[r * n..(r + 1) * n], &self.y_part[l * n..(l + 1) * n]);
                for i in 0..n {
                    qr[i] = (f[i] - yr[i] - self.h[i]) * inv_eta;
                }
            }
            exp_in_place(&mut self.q);
            for k in 0..n_x {
                let xr = &self.x_part[k * n..(k + 1) * n];
                let top = max_gain(&self.h, xr);
                self.alpha[k] = top;
                let pr = &mut self.p[k * n..(k + 1) * n];
                for i in 0..n {
                    pr[i] = (self.h[i] - xr[i] - top) * inv_eta;
                }
            }
            exp_in_place(&mut self.p);
            for pr in self.p.chunks_exact_mut(n) {
                for (p, &ai) in pr.iter_mut().zip(a) {
                    *p *= ai;
                }
            }

            // Column sums S = P Qᵀ, then T = b / S in place.
            self.s.resize(n_x * len, 0.0);
            gemm(n_x, n, len, &self.p, (n, 1), &self.q, (1, n), &mut self.s, (len, 1));
            for k in 0..n_x {
                for (r, pos) in (start..end).enumerate() {
                    let bj = self.b[k * self.n_y + self.order[pos]];
                    let s = &mut self.s[k * len + r];
                    if bj > 0.0 {
                        let g = -self.alpha[k] - eta * s.ln();
                        stats.dual += bj * g;
                        stats.dual_scale += bj * g.abs();
                        *s = bj / *s;
                    } else {
                        *s = 0.0;
                    }
                }
            }

            // Plan entries are P_ki Q_li T_kl, so rows are Σ_l Q_li U_il with U = Pᵀ T.
            self.u.resize(n * len, 0.0);
            gemm(n, n_x, len, &self.p, (1, n), &self.s, (len, 1), &mut self.u, (len, 1));
            for (r, pos) in (start..end).enumerate() {
                let qr = &self.q[r * n..(r + 1) * n];
                for i in 0..n {
                    rows[i] += qr[i] * self.u[i * len + r];
                }
                if primal {
                    let yr = &self.y_part[self.order[pos] * n..][..n];
                    stats.primal += (0..n).map(|i| qr[i] * self.u[i * len + r] * yr[i]).sum::<f64>();
                }
            }
            if primal {
                // x-side share through (P ∘ A)ᵀ T.
                self.scratch.resize(n_x * n, 0.0);
                for ((w, p), x) in self.scratch.iter_mut().zip(&self.p).zip(&self.x_part) {
                    *w = p * x;
                }
                gemm(n, n_x, len, &self.scratch, (1, n), &self.s, (len, 1), &mut self.u, (len, 1));
                for r in 0..len {
                    let qr = &self.q[r * n..(r + 1) * n];
                    stats.primal += (0..n).map(|i| qr[i] * self.u[i * len + r]).sum::<f64>();
                }
            }
        }
        stats
    }
}

/// `C = A B` for an `m × k` times `k × n` product with (row, column) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    let reach = |rows: usize, cols: usize, rs: usize, cs: usize| {
        if rows == 0 || cols == 0 { 0 } else { (rows - 1) * rs + (cols - 1) * cs + 1 }
    };
    assert!(a.len() >= reach(m, k, rsa, csa) && b.len() >= reach(k, n, rsb, csb) && c.len() >= reach(m, n, rsc, csc));
    // SAFETY: the assertion keeps every strided access inside the three slices, and `c`
    // does not alias the inputs.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_with_strides() {
        let a: Vec<f64> = (0..6).map(|v| v as f64).collect(); // 2×3 row-major
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5 - 1.0).collect(); // 3×4 row-major
        let mut c = vec![0.0; 8];
        gemm(2, 3, 4, &a, (3, 1), &b, (4, 1), &mut c, (4, 1));
        for i in 0..2 {
            for j in 0..4 {
                let want: f64 = (0..3).map(|t| a[i * 3 + t] * b[t * 4 + j]).sum();
                assert!((c[i * 4 + j] - want).abs() < 1e-12);
            }
        }
        // Same product reading `a` transposed from a column-major copy.
        let at: Vec<f64> = (0..3).flat_map(|t| (0..2).map(move |i| (i * 3 + t) as f64)).collect();
        let mut c2 = vec![0.0; 8];
        gemm(2, 3, 4, &at, (1, 2), &b, (4, 1), &mut c2, (4, 1));
        assert_eq!(c, c2);
    }
}
