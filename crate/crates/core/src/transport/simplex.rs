//! Exact transport by primal network simplex on the complete bipartite graph.
//!
//! The spanning-tree bookkeeping (thread / reverse-thread lists, successor
//! counts, strongly feasible leaving-arc rule, block-search pricing) follows
//! the classical LEMON design, specialised to uncapacitated transport arcs.

use nalgebra::DMatrix;

use super::{check_marginals, Coupling};
use crate::error::{invalid, Error, Result};

/// Largest `n * m` accepted by [`exact_ot`].
pub const MAX_EXACT_CELLS: usize = 1_000_000;

const STATE_UPPER: i8 = -1;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;

struct Network<'c> {
    n: usize,
    m: usize,
    cost: &'c DMatrix<f64>,
    node_num: usize,
    arc_num: usize,
    // artificial arcs, indexed by node
    art_source: Vec<usize>,
    art_target: Vec<usize>,
    art_cost: Vec<f64>,
    flow: Vec<f64>,
    state: Vec<i8>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pred_dir: Vec<i8>,
    pi: Vec<f64>,
    dirty_revs: Vec<usize>,
    // pivot state
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
    next_arc: usize,
    block_size: usize,
    eps: f64,
}

const NONE: usize = usize::MAX;

impl<'c> Network<'c> {
    fn new(a: &[f64], b: &[f64], cost: &'c DMatrix<f64>) -> Self {
        let (n, m) = cost.shape();
        let node_num = n + m;
        let arc_num = n * m;
        let root = node_num;
        let max_cost = cost.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
        let art = (max_cost + 1.0) * node_num as f64;
        let supply: Vec<f64> = a.iter().copied().chain(b.iter().map(|v| -v)).collect();
        let sum_supply: f64 = supply.iter().sum();

        let mut net = Self {
            n,
            m,
            cost,
            node_num,
            arc_num,
            art_source: vec![0; node_num],
            art_target: vec![0; node_num],
            art_cost: vec![0.0; node_num],
            flow: vec![0.0; arc_num + node_num],
            state: vec![STATE_LOWER; arc_num + node_num],
            parent: vec![NONE; node_num + 1],
            pred: vec![NONE; node_num + 1],
            thread: vec![0; node_num + 1],
            rev_thread: vec![0; node_num + 1],
            succ_num: vec![0; node_num + 1],
            last_succ: vec![0; node_num + 1],
            pred_dir: vec![0; node_num + 1],
            pi: vec![0.0; node_num + 1],
            dirty_revs: Vec::new(),
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0.0,
            next_arc: 0,
            block_size: ((arc_num as f64).sqrt().ceil() as usize).max(10),
            eps: 1e-14 * (max_cost + 1.0),
        };

        net.thread[root] = 0;
        net.rev_thread[0] = root;
        net.succ_num[root] = node_num + 1;
        net.last_succ[root] = root - 1;
        net.pi[root] = 0.0;
        let _ = sum_supply;

        for u in 0..node_num {
            let e = arc_num + u;
            net.parent[u] = root;
            net.pred[u] = e;
            net.thread[u] = u + 1;
            net.rev_thread[u + 1] = u;
            net.succ_num[u] = 1;
            net.last_succ[u] = u;
            net.state[e] = STATE_TREE;
            if supply[u] >= 0.0 {
                net.pred_dir[u] = DIR_UP;
                net.pi[u] = 0.0;
                net.art_source[u] = u;
                net.art_target[u] = root;
                net.flow[e] = supply[u];
                net.art_cost[u] = 0.0;
            } else {
                net.pred_dir[u] = DIR_DOWN;
                net.pi[u] = art;
                net.art_source[u] = root;
                net.art_target[u] = u;
                net.flow[e] = -supply[u];
                net.art_cost[u] = art;
            }
        }
        net
    }

    #[inline]
    fn source(&self, e: usize) -> usize {
        if e < self.arc_num {
            e / self.m
        } else {
            self.art_source[e - self.arc_num]
        }
    }

    #[inline]
    fn target(&self, e: usize) -> usize {
        if e < self.arc_num {
            self.n + e % self.m
        } else {
            self.art_target[e - self.arc_num]
        }
    }

    #[inline]
    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.arc_num {
            self.cost[(e / self.m, e % self.m)]
        } else {
            self.art_cost[e - self.arc_num]
        }
    }

    #[inline]
    fn reduced(&self, e: usize) -> f64 {
        let i = e / self.m;
        let j = self.n + e % self.m;
        self.state[e] as f64 * (self.cost[(i, j - self.n)] + self.pi[i] - self.pi[j])
    }

    /// Block-search pricing over the real arcs.
    fn find_entering_arc(&mut self) -> bool {
        let mut min = -self.eps;
        let mut found = false;
        let mut cnt = self.block_size;
        let total = self.arc_num;
        let mut e = self.next_arc;
        for _ in 0..total {
            let c = self.reduced(e);
            if c < min {
                min = c;
                self.in_arc = e;
                found = true;
            }
            e += 1;
            if e == total {
                e = 0;
            }
            cnt -= 1;
            if cnt == 0 {
                if found {
                    self.next_arc = e;
                    return true;
                }
                cnt = self.block_size;
            }
        }
        if found {
            self.next_arc = e;
        }
        found
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

    fn find_leaving_arc(&mut self) -> bool {
        let (first, second) = if self.state[self.in_arc] == STATE_LOWER {
            (self.source(self.in_arc), self.target(self.in_arc))
        } else {
            (self.target(self.in_arc), self.source(self.in_arc))
        };
        self.delta = f64::INFINITY;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            let e = self.pred[u];
            let d = if self.pred_dir[u] == DIR_UP {
                self.flow[e]
            } else {
                f64::INFINITY
            };
            if d < self.delta {
                self.delta = d;
                self.u_out = u;
                result = 1;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            let e = self.pred[u];
            let d = if self.pred_dir[u] == DIR_DOWN {
                self.flow[e]
            } else {
                f64::INFINITY
            };
            if d <= self.delta {
                self.delta = d;
                self.u_out = u;
                result = 2;
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        result != 0
    }

    fn change_flow(&mut self) {
        let delta = self.delta;
        if delta > 0.0 {
            let val = self.state[self.in_arc] as f64 * delta;
            self.flow[self.in_arc] += val;
            let mut u = self.source(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
            let mut u = self.target(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        let out = self.pred[self.u_out];
        self.state[out] = if self.flow[out] == 0.0 {
            STATE_LOWER
        } else {
            STATE_UPPER
        };
    }

    fn update_tree_structure(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let join = self.join;
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.source(self.in_arc) {
                DIR_UP
            } else {
                DIR_DOWN
            };
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
            let mut p = self.parent[u];
            while u != u_in {
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
                p = self.parent[u];
            }
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.source(self.in_arc) {
                DIR_UP
            } else {
                DIR_DOWN
            };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in {
            join
        } else {
            NONE
        };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }
        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && u != NONE && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && u != NONE && self.last_succ[u] == old_last_succ {
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
        let sigma = self.pi[self.v_in]
            - self.pi[self.u_in]
            - self.pred_dir[self.u_in] as f64 * self.arc_cost(self.in_arc);
        let end = self.thread[self.last_succ[self.u_in]];
        let mut u = self.u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    fn run(&mut self) -> Result<()> {
        // generous cap; strongly feasible trees terminate, this guards float drift
        let max_pivots = 50 * (self.arc_num + self.node_num) + 10_000;
        let mut pivots = 0usize;
        while self.find_entering_arc() {
            self.find_join_node();
            if !self.find_leaving_arc() || !self.delta.is_finite() {
                return Err(Error::Solver("network simplex: unbounded pivot".into()));
            }
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
            pivots += 1;
            if pivots > max_pivots {
                return Err(Error::Solver("network simplex: pivot limit reached".into()));
            }
        }
        let _ = STATE_UPPER;
        Ok(())
    }
}

/// Vertex-optimal coupling of the transport LP `min <P, C>` over `U(a, b)`.
pub fn exact_ot(a: &[f64], b: &[f64], cost: &DMatrix<f64>) -> Result<Coupling> {
    let (n, m) = cost.shape();
    if a.len() != n || b.len() != m {
        return Err(invalid(format!(
            "cost is {n}x{m} but marginals have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if n * m > MAX_EXACT_CELLS {
        return Err(invalid(format!(
            "exact transport limited to n*m <= {MAX_EXACT_CELLS}, got {}",
            n * m
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(invalid("cost matrix contains non-finite entries"));
    }
    check_marginals(a, b)?;
    let mut net = Network::new(a, b, cost);
    net.run()?;
    let matrix = DMatrix::from_fn(n, m, |i, j| net.flow[i * m + j].max(0.0));
    Ok(Coupling {
        matrix,
        a: a.to_vec(),
        b: b.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{cost_matrix, nw_corner};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for k in 0..=p.len() {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn single_cell() {
        let c = DMatrix::from_element(1, 1, 3.0);
        let p = exact_ot(&[1.0], &[1.0], &c).unwrap();
        assert_eq!(p.matrix[(0, 0)], 1.0);
    }

    #[test]
    fn sorted_line_gives_monotone_coupling() {
        let xs: Vec<Vec<f64>> = [0.0, 1.0, 2.5, 4.0].iter().map(|&v| vec![v]).collect();
        let ys: Vec<Vec<f64>> = [-1.0, 0.5, 3.0, 7.0].iter().map(|&v| vec![v]).collect();
        let u = [0.25; 4];
        let c = cost_matrix(&xs, &ys).unwrap();
        let p = exact_ot(&u, &u, &c).unwrap();
        let nw = nw_corner(&u, &u).unwrap();
        assert!((p.matrix.clone() - nw.matrix).abs().max() < 1e-15);
    }

    #[test]
    fn matches_permutation_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let perms = permutations(5);
        assert_eq!(perms.len(), 120);
        for _ in 0..20 {
            let xs: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.random(), rng.random()]).collect();
            let ys: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.random(), rng.random()]).collect();
            let c = cost_matrix(&xs, &ys).unwrap();
            let best = perms
                .iter()
                .map(|p| (0..5).map(|i| c[(i, p[i])]).sum::<f64>() / 5.0)
                .fold(f64::INFINITY, f64::min);
            let plan = exact_ot(&[0.2; 5], &[0.2; 5], &c).unwrap();
            assert!((plan.cost(&c) - best).abs() <= 1e-9 * best.max(1.0));
            assert!(plan.marginal_violation() < 1e-12);
        }
    }

    #[test]
    fn marginals_hold_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let n = rng.random_range(1..40);
            let m = rng.random_range(1..40);
            let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
            let ys: Vec<Vec<f64>> = (0..m).map(|_| vec![rng.random(), rng.random()]).collect();
            let mut a: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let mut b: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let sa: f64 = a.iter().sum();
            let sb: f64 = b.iter().sum();
            a.iter_mut().for_each(|v| *v /= sa);
            b.iter_mut().for_each(|v| *v /= sb);
            let c = cost_matrix(&xs, &ys).unwrap();
            let p = exact_ot(&a, &b, &c).unwrap();
            assert!(p.marginal_violation() < 1e-8);
            assert!(p.nnz(0.0) <= n + m - 1);
        }
    }

    #[test]
    fn rejects_unbalanced() {
        let c = DMatrix::from_element(1, 1, 0.0);
        assert!(matches!(
            exact_ot(&[1.0], &[0.5], &c),
            Err(Error::Infeasible(_))
        ));
    }
}
