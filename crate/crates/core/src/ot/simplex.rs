//! Primal network simplex for the uncapacitated transportation problem.
//!
//! Nodes `0..n` are sources, `n..n+m` are sinks and `n+m` is an artificial
//! root. Arc `e < n·m` joins source `e / m` to sink `e % m`; arc `n·m + u` is
//! the artificial arc between node `u` and the root. The spanning tree is
//! kept in thread/parent form with subtree sizes, and the leaving-arc rule
//! keeps the tree strongly feasible so degenerate pivots cannot cycle.
//!
//! Arcs are uncapacitated, so a non-tree arc always sits at zero flow and the
//! flow of a tree arc can be stored on the child node it hangs from.

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;
const UP: i8 = 1;
const DOWN: i8 = -1;

pub(crate) struct Solution {
    /// `(source, sink, flow)` for every tree arc carrying positive flow.
    pub flows: Vec<(usize, usize, f64)>,
    /// Node potentials `π` with reduced cost `c_e + π_s − π_t ≥ 0`.
    pub potentials: Vec<f64>,
    /// Largest flow left on an artificial arc.
    pub artificial_flow: f64,
    pub pivots: usize,
}

pub(crate) struct TransportSimplex<'a> {
    n: usize,
    m: usize,
    cost: &'a [f64],
    art_cost: Vec<f64>,
    in_tree: Vec<bool>,

    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<i8>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    /// Flow on `pred[u]`.
    flow: Vec<f64>,
    pi: Vec<f64>,

    block_size: usize,
    next_arc: usize,
    tolerance: f64,
    dirty_revs: Vec<usize>,
}

impl<'a> TransportSimplex<'a> {
    /// `supply` has `n` nonnegative source masses followed by `m` sink
    /// masses given as nonpositive numbers.
    pub fn new(n: usize, m: usize, cost: &'a [f64], supply: &[f64]) -> Self {
        debug_assert_eq!(cost.len(), n * m);
        debug_assert_eq!(supply.len(), n + m);
        let node_num = n + m;
        let root = node_num;
        let arc_num = n * m;

        let max_cost = cost.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
        let art = (max_cost + 1.0) * node_num as f64;

        let mut s = Self {
            n,
            m,
            cost,
            art_cost: vec![0.0; node_num],
            in_tree: vec![false; arc_num],
            parent: vec![NONE; node_num + 1],
            pred: vec![NONE; node_num + 1],
            pred_dir: vec![UP; node_num + 1],
            thread: vec![0; node_num + 1],
            rev_thread: vec![0; node_num + 1],
            succ_num: vec![1; node_num + 1],
            last_succ: vec![0; node_num + 1],
            flow: vec![0.0; node_num + 1],
            pi: vec![0.0; node_num + 1],
            block_size: ((arc_num as f64).sqrt().ceil() as usize).max(10),
            next_arc: 0,
            tolerance: 1e-12 * max_cost.max(f64::MIN_POSITIVE),
            dirty_revs: Vec::new(),
        };

        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = node_num + 1;
        s.last_succ[root] = root - 1;
        for u in 0..node_num {
            s.parent[u] = root;
            s.pred[u] = arc_num + u;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.succ_num[u] = 1;
            s.last_succ[u] = u;
            if supply[u] >= 0.0 {
                s.pred_dir[u] = UP;
                s.pi[u] = 0.0;
                s.art_cost[u] = 0.0;
                s.flow[u] = supply[u];
            } else {
                s.pred_dir[u] = DOWN;
                s.pi[u] = art;
                s.art_cost[u] = art;
                s.flow[u] = -supply[u];
            }
        }
        s
    }

    #[inline]
    fn arc_num(&self) -> usize {
        self.n * self.m
    }

    #[inline]
    fn source(&self, e: usize) -> usize {
        e / self.m
    }

    #[inline]
    fn target(&self, e: usize) -> usize {
        self.n + e % self.m
    }

    #[inline]
    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.arc_num() {
            self.cost[e]
        } else {
            self.art_cost[e - self.arc_num()]
        }
    }

    /// Block search pricing over the real arcs.
    fn find_entering(&mut self) -> Option<usize> {
        let arc_num = self.arc_num();
        let (n, m) = (self.n, self.m);
        let mut min = -self.tolerance;
        let mut best = NONE;
        let mut cnt = self.block_size;
        let start = self.next_arc;
        let mut e = start;
        let mut i = e / m;
        let mut j = e % m;
        for _ in 0..arc_num {
            if !self.in_tree[e] {
                let c = self.cost[e] + self.pi[i] - self.pi[n + j];
                if c < min {
                    min = c;
                    best = e;
                }
            }
            e += 1;
            j += 1;
            if j == m {
                j = 0;
                i += 1;
            }
            if e == arc_num {
                e = 0;
                i = 0;
                j = 0;
            }
            cnt -= 1;
            if cnt == 0 {
                if best != NONE {
                    self.next_arc = e;
                    return Some(best);
                }
                cnt = self.block_size;
            }
        }
        if best != NONE {
            self.next_arc = e;
            return Some(best);
        }
        None
    }

    fn find_join(&self, in_arc: usize) -> usize {
        let mut u = self.source(in_arc);
        let mut v = self.target(in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        u
    }

    /// Returns `(u_in, v_in, u_out, delta)`.
    fn find_leaving(&self, in_arc: usize, join: usize) -> Result<(usize, usize, usize, f64)> {
        let first = self.source(in_arc);
        let second = self.target(in_arc);
        let mut delta = f64::INFINITY;
        let mut u_out = NONE;
        let mut result = 0;

        let mut u = first;
        while u != join {
            let d = if self.pred_dir[u] == UP {
                self.flow[u]
            } else {
                f64::INFINITY
            };
            if d < delta {
                delta = d;
                u_out = u;
                result = 1;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != join {
            let d = if self.pred_dir[u] == DOWN {
                self.flow[u]
            } else {
                f64::INFINITY
            };
            if d <= delta {
                delta = d;
                u_out = u;
                result = 2;
            }
            u = self.parent[u];
        }
        if result == 0 || !delta.is_finite() {
            return Err(Error::Invalid(
                "transport problem is unbounded (negative cycle)".into(),
            ));
        }
        let (u_in, v_in) = if result == 1 {
            (first, second)
        } else {
            (second, first)
        };
        Ok((u_in, v_in, u_out, delta))
    }

    fn change_flow(&mut self, in_arc: usize, join: usize, delta: f64) {
        if delta > 0.0 {
            let mut u = self.source(in_arc);
            while u != join {
                self.flow[u] -= f64::from(self.pred_dir[u]) * delta;
                u = self.parent[u];
            }
            let mut u = self.target(in_arc);
            while u != join {
                self.flow[u] += f64::from(self.pred_dir[u]) * delta;
                u = self.parent[u];
            }
        }
    }

    fn update_tree(
        &mut self,
        in_arc: usize,
        join: usize,
        u_in: usize,
        v_in: usize,
        u_out: usize,
        delta: f64,
    ) {
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];
        let in_dir = if u_in == self.source(in_arc) { UP } else { DOWN };

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = in_dir;
            self.flow[u_in] = delta;

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

            // Shift pred arcs (and their flows) one step down the stem.
            let mut tmp_sc: isize = 0;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            let mut p = self.parent[u];
            while u != u_in {
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                self.flow[u] = self.flow[p];
                tmp_sc += self.succ_num[u] as isize - self.succ_num[p] as isize;
                self.succ_num[u] = tmp_sc as usize;
                self.last_succ[p] = tmp_ls;
                u = p;
                p = self.parent[u];
            }
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = in_dir;
            self.flow[u_in] = delta;
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

    fn update_potential(&mut self, in_arc: usize, u_in: usize, v_in: usize) {
        let sigma =
            self.pi[v_in] - self.pi[u_in] - f64::from(self.pred_dir[u_in]) * self.arc_cost(in_arc);
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    pub fn solve(mut self) -> Result<Solution> {
        let arc_num = self.arc_num();
        let mut pivots = 0usize;
        while let Some(in_arc) = self.find_entering() {
            let join = self.find_join(in_arc);
            let (u_in, v_in, u_out, delta) = self.find_leaving(in_arc, join)?;
            self.change_flow(in_arc, join, delta);
            let leaving = self.pred[u_out];
            if leaving < arc_num {
                self.in_tree[leaving] = false;
            }
            self.in_tree[in_arc] = true;
            self.update_tree(in_arc, join, u_in, v_in, u_out, delta);
            self.update_potential(in_arc, u_in, v_in);
            pivots += 1;
        }

        let node_num = self.n + self.m;
        let mut flows = Vec::with_capacity(node_num);
        let mut artificial_flow: f64 = 0.0;
        for u in 0..node_num {
            let e = self.pred[u];
            if e < arc_num {
                if self.flow[u] > 0.0 {
                    flows.push((self.source(e), e % self.m, self.flow[u]));
                }
            } else {
                artificial_flow = artificial_flow.max(self.flow[u].abs());
            }
        }
        flows.sort_unstable_by_key(|&(i, j, _)| (i, j));
        Ok(Solution {
            flows,
            potentials: self.pi[..node_num].to_vec(),
            artificial_flow,
            pivots,
        })
    }
}
