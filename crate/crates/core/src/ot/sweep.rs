//! Candidate enumeration for costs with a squared 1-D part.
//!
//! With `c(i, (t, r)) = κ (x_i − ξ_t)² + B_ir`, fix the other-axis atom `r`. The gain
//! `f_i − c` equals `L_i(ξ_t) − κ ξ_t²` for the line `L_i(X) = 2κ x_i X + f_i − B_ir − κ x_i²`,
//! so the best gain of every column in the row is read off the upper envelope of the
//! lines, and source `i` is within `reach` of it exactly on an interval of `X`. Each row
//! then costs `O(n log n)` plus the number of surviving entries, instead of a full scan.

use crate::costs::SplitCost;

pub(super) struct LineSweep {
    n: usize,
    n_y: usize,
    line_is_x: bool,
    /// Solver sources sorted by their line coordinate.
    by_coord: Vec<u32>,
    /// `2κ x_i` and `κ x_i²` in `by_coord` order.
    slope: Vec<f64>,
    curv: Vec<f64>,
    /// Line atoms sorted by coordinate.
    atom_order: Vec<u32>,
    atom_coord: Vec<f64>,
    /// `line_table[t * n + i]`, `other_table[r * n + i]` over the solver's sources.
    line_table: Vec<f64>,
    other_table: Vec<f64>,
    /// Grid index `k · n_y + l` to solver column, `u32::MAX` where absent.
    local: Vec<u32>,
    /// Magnitude of the line terms, for the rounding margin.
    scale: f64,
    intercept: Vec<f64>,
    hull: Vec<u32>,
    breaks: Vec<f64>,
    ranges: Vec<(u32, u32)>,
    starts: Vec<u32>,
    cand: Vec<u32>,
    cand_cost: Vec<f64>,
}

impl LineSweep {
    /// `src`/`dst` map solver indices to the split cost's sources and grid destinations.
    pub(super) fn new(split: &SplitCost<'_>, src: &[usize], dst: &[usize]) -> Option<Self> {
        let n = src.len();
        let (line, line_is_x) = match (split.x_line, split.y_line) {
            (Some(line), _) => (line, true),
            (None, Some(line)) => (line, false),
            (None, None) => return None,
        };
        if n == 0 || n > u32::MAX as usize || split.n_x * split.n_y > u32::MAX as usize {
            return None;
        }
        let (line_part, other_part, n_line, n_other) = if line_is_x {
            (split.x_part, split.y_part, split.n_x, split.n_y)
        } else {
            (split.y_part, split.x_part, split.n_y, split.n_x)
        };
        let gather = |table: &[f64], atoms: usize| -> Vec<f64> {
            let mut out = Vec::with_capacity(atoms * n);
            for row in table.chunks_exact(split.n_src).take(atoms) {
                out.extend(src.iter().map(|&i| row[i]));
            }
            out
        };
        let coord: Vec<f64> = src.iter().map(|&i| line.src[i]).collect();
        let mut by_coord: Vec<u32> = (0..n as u32).collect();
        by_coord.sort_by(|&i, &k| coord[i as usize].total_cmp(&coord[k as usize]).then(i.cmp(&k)));
        let slope: Vec<f64> = by_coord.iter().map(|&i| 2.0 * line.factor * coord[i as usize]).collect();
        let curv: Vec<f64> = by_coord.iter().map(|&i| line.factor * coord[i as usize] * coord[i as usize]).collect();
        let mut atom_order: Vec<u32> = (0..n_line as u32).collect();
        atom_order.sort_by(|&s, &t| line.atoms[s as usize].total_cmp(&line.atoms[t as usize]).then(s.cmp(&t)));
        let atom_coord: Vec<f64> = atom_order.iter().map(|&t| line.atoms[t as usize]).collect();
        let mut local = vec![u32::MAX; split.n_x * split.n_y];
        for (j, &g) in dst.iter().enumerate() {
            local[g] = j as u32;
        }
        let reach_x = coord.iter().chain(&atom_coord).fold(0.0f64, |m, v| m.max(v.abs()));
        Some(Self {
            n,
            n_y: split.n_y,
            line_is_x,
            by_coord,
            slope,
            curv,
            atom_order,
            atom_coord,
            line_table: gather(line_part, n_line),
            other_table: gather(other_part, n_other),
            local,
            scale: 4.0 * line.factor * reach_x * reach_x,
            intercept: vec![0.0; n],
            hull: Vec::with_capacity(n),
            breaks: Vec::with_capacity(n),
            ranges: vec![(0, 0); n],
            starts: vec![0; n_line + 1],
            cand: Vec::new(),
            cand_cost: Vec::new(),
        })
    }

    /// Calls `visit(column, sources, costs)` for every solver column with the sources whose
    /// gain `f_i − c` is within `reach` of the column's best (possibly a few more).
    pub(super) fn sweep(&mut self, f: &[f64], reach: f64, mut visit: impl FnMut(usize, &[u32], &[f64])) {
        let n = self.n;
        let n_line = self.atom_coord.len();
        let n_other = self.other_table.len() / n;
        for r in 0..n_other {
            let base = r * n;
            let mut magnitude = self.scale;
            for (p, &i) in self.by_coord.iter().enumerate() {
                let h = f[i as usize] - self.other_table[base + i as usize];
                magnitude = magnitude.max(h.abs());
                self.intercept[p] = h - self.curv[p];
            }
            self.build_hull();
            let delta = reach + 1e-9 * (1.0 + magnitude);

            // Survivor interval of every line, as a range of sorted atoms.
            self.starts.iter_mut().for_each(|s| *s = 0);
            for p in 0..n {
                let range = match self.interval(p, delta) {
                    Some((lo, hi)) => {
                        let a = self.atom_coord.partition_point(|&v| v < lo) as u32;
                        let b = self.atom_coord.partition_point(|&v| v <= hi) as u32;
                        (a, b.max(a))
                    }
                    None => (0, 0),
                };
                self.ranges[p] = range;
                if range.0 < range.1 {
                    self.starts[range.0 as usize] = self.starts[range.0 as usize].wrapping_add(1);
                    self.starts[range.1 as usize] = self.starts[range.1 as usize].wrapping_sub(1);
                }
            }
            // Difference array to counts, then counts to list offsets.
            let mut running = 0u32;
            let mut offset = 0u32;
            for q in 0..n_line {
                running = running.wrapping_add(self.starts[q]);
                self.starts[q] = offset;
                offset += running;
            }
            self.starts[n_line] = offset;
            self.cand.resize(offset as usize, 0);
            self.cand_cost.resize(offset as usize, 0.0);
            let mut cursor: Vec<u32> = self.starts[..n_line].to_vec();
            for p in 0..n {
                let (a, b) = self.ranges[p];
                for q in a..b {
                    let slot = &mut cursor[q as usize];
                    self.cand[*slot as usize] = self.by_coord[p];
                    *slot += 1;
                }
            }

            for q in 0..n_line {
                let t = self.atom_order[q] as usize;
                let grid = if self.line_is_x { t * self.n_y + r } else { r * self.n_y + t };
                let j = self.local[grid];
                if j == u32::MAX {
                    continue;
                }
                let (a, b) = (self.starts[q] as usize, self.starts[q + 1] as usize);
                for s in a..b {
                    let i = self.cand[s] as usize;
                    self.cand_cost[s] = self.line_table[t * n + i] + self.other_table[base + i];
                }
                visit(j as usize, &self.cand[a..b], &self.cand_cost[a..b]);
            }
        }
    }

    /// Upper envelope of the lines, which arrive sorted by slope.
    fn build_hull(&mut self) {
        let (s, t) = (&self.slope, &self.intercept);
        self.hull.clear();
        for p in 0..self.by_coord.len() {
            if let Some(&last) = self.hull.last() {
                let last = last as usize;
                if s[last] == s[p] {
                    if t[p] <= t[last] {
                        continue;
                    }
                    self.hull.pop();
                }
            }
            while self.hull.len() >= 2 {
                let (l1, l2) = (self.hull[self.hull.len() - 2] as usize, self.hull[self.hull.len() - 1] as usize);
                // l2 is never strictly on top once p is added.
                if (t[p] - t[l1]) * (s[l2] - s[l1]) >= (t[l2] - t[l1]) * (s[p] - s[l1]) {
                    self.hull.pop();
                } else {
                    break;
                }
            }
            self.hull.push(p as u32);
        }
        self.breaks.clear();
        for w in self.hull.windows(2) {
            let (a, b) = (w[0] as usize, w[1] as usize);
            self.breaks.push((t[a] - t[b]) / (s[b] - s[a]));
        }
    }

    /// The `X` range on which line `p` is within `delta` of the envelope.
    fn interval(&self, p: usize, delta: f64) -> Option<(f64, f64)> {
        let (s, t) = (&self.slope, &self.intercept);
        let (sp, tp) = (s[p], t[p]);
        let last = self.hull.len() - 1;
        // Hull line with the largest slope not above sp; the gap is smallest at its right end.
        let jstar = self.hull.partition_point(|&h| s[h as usize] <= sp).saturating_sub(1);
        let gap = |j: usize, x: f64| {
            let h = self.hull[j] as usize;
            (s[h] - sp) * x + (t[h] - tp)
        };
        let crossing = |j: usize| {
            let h = self.hull[j] as usize;
            (delta - (t[h] - tp)) / (s[h] - sp)
        };
        let min_gap = if jstar < last { gap(jstar, self.breaks[jstar]) } else { t[self.hull[jstar] as usize] - tp };
        if !(min_gap <= delta) {
            return None;
        }
        let mut hi = f64::INFINITY;
        let mut j = jstar + 1;
        while j <= last {
            if j < last && gap(j, self.breaks[j]) <= delta {
                j += 1;
                continue;
            }
            if s[self.hull[j] as usize] > sp {
                hi = crossing(j);
            }
            break;
        }
        let mut lo = f64::NEG_INFINITY;
        let mut j = jstar;
        loop {
            if j > 0 && gap(j, self.breaks[j - 1]) <= delta {
                j -= 1;
                continue;
            }
            if s[self.hull[j] as usize] < sp {
                lo = crossing(j);
            }
            break;
        }
        Some((lo, hi))
    }
}
