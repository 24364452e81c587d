//! Dinic max-flow / min-cut on real capacities.

use std::collections::VecDeque;

/// Capacitated directed graph. Edges are stored in residual pairs
/// `(2k, 2k + 1)`.
#[derive(Debug, Clone, Default)]
pub struct FlowGraph {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
    residual: Vec<f64>,
}

/// Result of [`FlowGraph::min_cut`].
#[derive(Debug, Clone, PartialEq)]
pub struct MinCut {
    /// Capacity of the returned cut (sum over original edges from the
    /// source side to the sink side).
    pub value: f64,
    /// `true` for nodes reachable from the source in the final residual graph.
    pub source_side: Vec<bool>,
}

impl FlowGraph {
    pub fn new(nodes: usize) -> Self {
        FlowGraph {
            adj: vec![Vec::new(); nodes],
            ..Default::default()
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    /// Adds `u -> v` with capacity `forward` and `v -> u` with `backward`.
    pub fn add_edge(&mut self, u: usize, v: usize, forward: f64, backward: f64) {
        assert!(
            forward >= 0.0 && backward >= 0.0 && forward.is_finite() && backward.is_finite(),
            "capacities must be finite and non-negative"
        );
        let e = self.to.len();
        self.to.extend([v, u]);
        self.cap.extend([forward, backward]);
        self.residual.extend([forward, backward]);
        self.adj[u].push(e);
        self.adj[v].push(e + 1);
    }

    fn levels(&self, s: usize, eps: f64) -> Vec<i64> {
        let mut level = vec![-1i64; self.adj.len()];
        let mut q = VecDeque::new();
        level[s] = 0;
        q.push_back(s);
        while let Some(u) = q.pop_front() {
            for &e in &self.adj[u] {
                let v = self.to[e];
                if level[v] < 0 && self.residual[e] > eps {
                    level[v] = level[u] + 1;
                    q.push_back(v);
                }
            }
        }
        level
    }

    /// Computes a minimum `s`-`t` cut. Deterministic for a given insertion
    /// order.
    pub fn min_cut(&mut self, s: usize, t: usize) -> MinCut {
        assert!(s != t && s < self.adj.len() && t < self.adj.len());
        let max_cap = self.cap.iter().copied().fold(0.0, f64::max);
        let eps = 1e-12 * max_cap.max(1.0);
        let n = self.adj.len();
        let mut path: Vec<usize> = Vec::new();

        loop {
            let mut level = self.levels(s, eps);
            if level[t] < 0 {
                break;
            }
            let mut it = vec![0usize; n];
            path.clear();
            let mut u = s;
            loop {
                if u == t {
                    let push = path
                        .iter()
                        .map(|&e| self.residual[e])
                        .fold(f64::INFINITY, f64::min);
                    let mut cut_at = None;
                    for (k, &e) in path.iter().enumerate() {
                        self.residual[e] -= push;
                        self.residual[e ^ 1] += push;
                        if cut_at.is_none() && self.residual[e] <= eps {
                            cut_at = Some(k);
                        }
                    }
                    // resume from the tail of the first saturated edge
                    let k = cut_at.unwrap_or(0);
                    path.truncate(k);
                    u = path.last().map_or(s, |&e| self.to[e]);
                    continue;
                }
                let mut advanced = false;
                while it[u] < self.adj[u].len() {
                    let e = self.adj[u][it[u]];
                    let v = self.to[e];
                    if self.residual[e] > eps && level[v] == level[u] + 1 {
                        path.push(e);
                        u = v;
                        advanced = true;
                        break;
                    }
                    it[u] += 1;
                }
                if advanced {
                    continue;
                }
                // dead end: retreat
                level[u] = -1;
                match path.pop() {
                    None => break,
                    Some(e) => {
                        u = self.to[e ^ 1];
                        it[u] += 1;
                    }
                }
            }
        }

        let level = self.levels(s, eps);
        let source_side: Vec<bool> = level.iter().map(|&l| l >= 0).collect();
        let mut value = 0.0;
        for u in 0..n {
            if !source_side[u] {
                continue;
            }
            for &e in &self.adj[u] {
                if !source_side[self.to[e]] {
                    value += self.cap[e];
                }
            }
        }
        MinCut { value, source_side }
    }

    /// Net flow currently leaving `s`.
    pub fn flow_out(&self, s: usize) -> f64 {
        self.adj[s]
            .iter()
            .map(|&e| self.cap[e] - self.residual[e])
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge() {
        let mut g = FlowGraph::new(2);
        g.add_edge(0, 1, 5.0, 0.0);
        let cut = g.min_cut(0, 1);
        assert_eq!(cut.value, 5.0);
        assert_eq!(cut.source_side, vec![true, false]);
    }

    #[test]
    fn diamond() {
        // s=0, a=1, b=2, t=3
        let mut g = FlowGraph::new(4);
        g.add_edge(0, 1, 3.0, 0.0);
        g.add_edge(0, 2, 2.0, 0.0);
        g.add_edge(1, 3, 2.0, 0.0);
        g.add_edge(2, 3, 3.0, 0.0);
        g.add_edge(1, 2, 1.0, 1.0);
        let cut = g.min_cut(0, 3);
        // the four s/t partitions cost 5, 5, 7, 5
        assert_eq!(cut.value, 5.0);
        assert!((g.flow_out(0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn disconnected_sink() {
        let mut g = FlowGraph::new(3);
        g.add_edge(0, 1, 4.0, 0.0);
        let cut = g.min_cut(0, 2);
        assert_eq!(cut.value, 0.0);
        assert_eq!(cut.source_side, vec![true, true, false]);
    }

    #[test]
    fn long_chain_does_not_recurse() {
        let n = 200_000;
        let mut g = FlowGraph::new(n);
        for i in 0..n - 1 {
            g.add_edge(i, i + 1, 1.0 + (i % 7) as f64, 0.0);
        }
        assert_eq!(g.min_cut(0, n - 1).value, 1.0);
    }
}
