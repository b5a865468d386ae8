//! Primal network simplex on the complete bipartite graph, with spanning-tree bookkeeping
//! via parent/thread/successor lists and block-search pricing.

use super::plan::{DualSolution, TransportPlan};
use crate::costs::CostEvaluator;
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;

/// Tolerance on the total mass mismatch between source and destination.
const MASS_TOL: f64 = 1e-9;

/// Outcome of an exact solve.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub plan: TransportPlan,
    pub dual: DualSolution,
    pub pivots: usize,
}

/// Solves the discrete transport problem exactly, returning a plan and a dual certificate.
pub fn solve_exact(
    a: &[f64],
    b: &[f64],
    cost: &(impl CostEvaluator + ?Sized),
) -> Result<(TransportPlan, DualSolution)> {
    let sol = solve_exact_detailed(a, b, cost)?;
    Ok((sol.plan, sol.dual))
}

/// Optimal cost only; skips building the dual certificate.
pub fn exact_cost(a: &[f64], b: &[f64], cost: &(impl CostEvaluator + ?Sized)) -> Result<f64> {
    let costs = prepare(a, b, cost)?;
    let ns = Simplex::solved(a, b, costs)?;
    Ok(ns.primal())
}

pub fn solve_exact_detailed(
    a: &[f64],
    b: &[f64],
    cost: &(impl CostEvaluator + ?Sized),
) -> Result<ExactSolution> {
    let (n, m) = (a.len(), b.len());
    let costs = prepare(a, b, cost)?;
    let ns = Simplex::solved(a, b, costs)?;

    let mut entries = Vec::new();
    for e in 0..ns.arcs {
        let f = ns.flow[e];
        if f > 0.0 {
            entries.push((e / m, e % m, f));
        }
    }
    let primal_cost = ns.primal();
    let plan = TransportPlan { entries, primal_cost, src_size: n, dst_size: m };

    // Reduced cost c + π_s − π_t ≥ 0 gives the potentials f = −π_s, g = π_t.
    let mut f: Vec<f64> = ns.pi[..n].iter().map(|p| -p).collect();
    let mut g: Vec<f64> = ns.pi[n..n + m].to_vec();
    let shift = f.iter().cloned().fold(f64::INFINITY, f64::min);
    f.iter_mut().for_each(|v| *v -= shift);
    g.iter_mut().for_each(|v| *v += shift);
    // Pricing stops at a small negative reduced-cost tolerance; absorb the slack into g.
    for (j, gj) in g.iter_mut().enumerate() {
        let slack = (0..n).map(|i| ns.cost[i * m + j] - f[i]).fold(f64::INFINITY, f64::min);
        if slack < *gj {
            *gj = slack;
        }
    }
    let dual = DualSolution::new(f, g, a, b);
    Ok(ExactSolution { plan, dual, pivots: ns.pivots })
}

fn prepare(a: &[f64], b: &[f64], cost: &(impl CostEvaluator + ?Sized)) -> Result<Vec<f64>> {
    let (n, m) = (a.len(), b.len());
    if n != cost.src_len() || m != cost.dst_len() {
        return Err(Error::LengthMismatch(n * m, cost.src_len() * cost.dst_len()));
    }
    if n == 0 || m == 0 {
        return Err(Error::Empty);
    }
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if (sa - sb).abs() > MASS_TOL || a.iter().chain(b).any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::Infeasible { src: sa, dst: sb });
    }
    let budget = (u32::MAX / 2) as usize;
    if n.saturating_mul(m) > budget {
        return Err(Error::Capacity { requested: n.saturating_mul(m), budget });
    }
    let costs = cost.to_dense();
    if let Some(idx) = costs.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFinite { idx, value: costs[idx] });
    }
    Ok(costs)
}

struct Simplex {
    n: usize,
    m: usize,
    arcs: usize,
    /// Costs of the `n·m` real arcs followed by one artificial arc per node.
    cost: Vec<f64>,
    flow: Vec<f64>,
    state: Vec<i8>,
    /// Endpoints of the artificial arcs; real arc `i·m + j` joins `i` to `n + j`.
    art_src: Vec<usize>,
    art_tgt: Vec<usize>,

    pi: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pred_dir: Vec<i8>,
    dirty_revs: Vec<usize>,

    block_size: usize,
    next_arc: usize,
    eps: f64,
    pivots: usize,

    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
}

impl Simplex {
    fn solved(a: &[f64], b: &[f64], costs: Vec<f64>) -> Result<Self> {
        let mut ns = Simplex::new(a, b, costs);
        ns.run();
        let artificial = ns.artificial_flow();
        if artificial > MASS_TOL {
            return Err(Error::Numerical(format!(
                "network simplex left {artificial} mass on artificial arcs"
            )));
        }
        Ok(ns)
    }

    fn new(a: &[f64], b: &[f64], mut cost: Vec<f64>) -> Self {
        let (n, m) = (a.len(), b.len());
        let arcs = n * m;
        let nodes = n + m;
        let root = nodes;
        let max_cost = cost.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
        let big = (max_cost + 1.0) * nodes as f64;

        cost.resize(arcs + nodes, 0.0);
        let mut flow = vec![0.0; arcs + nodes];
        let mut state = vec![STATE_LOWER; arcs + nodes];
        let mut art_src = vec![0; nodes];
        let mut art_tgt = vec![0; nodes];
        let mut pi = vec![0.0; nodes + 1];
        let mut parent = vec![NONE; nodes + 1];
        let mut pred = vec![NONE; nodes + 1];
        let mut thread = vec![0; nodes + 1];
        let mut rev_thread = vec![0; nodes + 1];
        let mut succ_num = vec![1; nodes + 1];
        let mut last_succ = vec![0; nodes + 1];
        let mut pred_dir = vec![0; nodes + 1];

        thread[root] = 0;
        rev_thread[0] = root;
        succ_num[root] = nodes + 1;
        last_succ[root] = root - 1;
        for u in 0..nodes {
            let e = arcs + u;
            parent[u] = root;
            pred[u] = e;
            thread[u] = u + 1;
            rev_thread[u + 1] = u;
            last_succ[u] = u;
            state[e] = STATE_TREE;
            if u < n {
                pred_dir[u] = DIR_UP;
                art_src[u] = u;
                art_tgt[u] = root;
                flow[e] = a[u];
            } else {
                pred_dir[u] = DIR_DOWN;
                pi[u] = big;
                art_src[u] = root;
                art_tgt[u] = u;
                flow[e] = b[u - n];
                cost[e] = big;
            }
        }

        Simplex {
            n,
            m,
            arcs,
            cost,
            flow,
            state,
            art_src,
            art_tgt,
            pi,
            parent,
            pred,
            thread,
            rev_thread,
            succ_num,
            last_succ,
            pred_dir,
            dirty_revs: Vec::new(),
            block_size: ((4.0 * (arcs as f64).sqrt()).ceil() as usize).max(10),
            next_arc: 0,
            eps: 1e-12 * (max_cost + 1.0),
            pivots: 0,
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0.0,
        }
    }

    #[inline]
    fn source(&self, e: usize) -> usize {
        if e < self.arcs {
            e / self.m
        } else {
            self.art_src[e - self.arcs]
        }
    }

    #[inline]
    fn target(&self, e: usize) -> usize {
        if e < self.arcs {
            self.n + e % self.m
        } else {
            self.art_tgt[e - self.arcs]
        }
    }

    fn primal(&self) -> f64 {
        self.flow[..self.arcs].iter().zip(&self.cost).map(|(f, c)| f * c).sum()
    }

    fn artificial_flow(&self) -> f64 {
        self.flow[self.arcs..].iter().map(|f| f.abs()).sum()
    }

    fn run(&mut self) {
        while self.find_entering_arc() {
            self.find_join_node();
            self.find_leaving_arc();
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
            self.pivots += 1;
        }
    }

    /// Block search: scan blocks of arcs cyclically and take the most negative reduced
    /// cost of the first block that contains one.
    fn find_entering_arc(&mut self) -> bool {
        let (n, m, arcs) = (self.n, self.m, self.arcs);
        let mut best = -self.eps;
        let mut found = NONE;
        let mut cnt = self.block_size;
        let mut e = self.next_arc;
        let mut remaining = arcs;
        let pi_tgt = &self.pi[n..n + m];
        while remaining > 0 {
            // Scan a run of arcs that share one source row.
            let i = e / m;
            let j0 = e - i * m;
            let len = (m - j0).min(cnt).min(remaining);
            let pi_i = self.pi[i];
            let costs = &self.cost[e..e + len];
            let states = &self.state[e..e + len];
            let pis = &pi_tgt[j0..j0 + len];
            let (run_min, at) = segment_min(costs, states, pis, pi_i);
            if run_min < best {
                best = run_min;
                found = e + at;
            }
            e += len;
            if e == arcs {
                e = 0;
            }
            remaining -= len;
            cnt -= len;
            if cnt == 0 {
                if found != NONE {
                    break;
                }
                cnt = self.block_size;
            }
        }
        if found == NONE {
            return false;
        }
        self.in_arc = found;
        self.next_arc = e;
        true
    }

    fn find_join_node(&mut self) {
        let mut u = self.source(self.in_arc);
        let mut v = self.target(self.in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    /// Strongly feasible leaving-arc rule: first blocking arc on the first side, last on
    /// the second.
    fn find_leaving_arc(&mut self) {
        let (first, second) = if self.state[self.in_arc] == STATE_LOWER {
            (self.source(self.in_arc), self.target(self.in_arc))
        } else {
            (self.target(self.in_arc), self.source(self.in_arc))
        };
        let mut delta = f64::INFINITY;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == DIR_UP {
                let d = self.flow[self.pred[u]];
                if d < delta {
                    delta = d;
                    self.u_out = u;
                    result = 1;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            if self.pred_dir[u] == DIR_DOWN {
                let d = self.flow[self.pred[u]];
                if d <= delta {
                    delta = d;
                    self.u_out = u;
                    result = 2;
                }
            }
            u = self.parent[u];
        }
        debug_assert!(result != 0, "unbounded cycle in a bounded transport problem");
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        self.delta = delta;
    }

    fn change_flow(&mut self) {
        let in_arc = self.in_arc;
        if self.delta > 0.0 {
            let val = self.state[in_arc] as f64 * self.delta;
            self.flow[in_arc] += val;
            let mut u = self.source(in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
            let mut u = self.target(in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
        }
        self.state[in_arc] = STATE_TREE;
        let out = self.pred[self.u_out];
        self.flow[out] = 0.0;
        self.state[out] = STATE_LOWER;
    }

    fn update_tree_structure(&mut self) {
        let (u_in, v_in, u_out, join, in_arc) = (self.u_in, self.v_in, self.u_out, self.join, self.in_arc);
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source(in_arc) { DIR_UP } else { DIR_DOWN };

            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            // Re-hang the stem nodes between u_in and u_out.
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source(in_arc) { DIR_UP } else { DIR_DOWN };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let u_in = self.u_in;
        let sigma = self.pi[self.v_in] - self.pi[u_in] - self.pred_dir[u_in] as f64 * self.cost[self.in_arc];
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }
}

/// Minimum reduced cost over a run and its offset; independent lanes let the loop vectorize.
#[inline]
fn segment_min(costs: &[f64], states: &[i8], pis: &[f64], pi_i: f64) -> (f64, usize) {
    const LANES: usize = 8;
    let mut acc = [f64::INFINITY; LANES];
    let mut idx = [0usize; LANES];
    let mut base = 0;
    for ((cs, ss), ps) in costs
        .chunks_exact(LANES)
        .zip(states.chunks_exact(LANES))
        .zip(pis.chunks_exact(LANES))
    {
        for k in 0..LANES {
            let r = ss[k] as f64 * (cs[k] + pi_i - ps[k]);
            let better = r < acc[k];
            acc[k] = if better { r } else { acc[k] };
            idx[k] = if better { base + k } else { idx[k] };
        }
        base += LANES;
    }
    let (mut best, mut at) = (f64::INFINITY, 0);
    for k in 0..LANES {
        if acc[k] < best || (acc[k] == best && idx[k] < at) {
            best = acc[k];
            at = idx[k];
        }
    }
    for k in base..costs.len() {
        let r = states[k] as f64 * (costs[k] + pi_i - pis[k]);
        if r < best {
            best = r;
            at = k;
        }
    }
    (best, at)
}
