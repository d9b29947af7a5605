//! Dinic's max-flow over real capacities, `O(V²E)`.

use crate::{Error, Result};

/// Residual capacities at or below this are treated as saturated.
pub const SATURATION_EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
struct Arc {
    to: usize,
    cap: f64,
}

/// Directed network with a distinguished source and sink. Arcs are stored in
/// pairs: arc `k` and its residual twin `k ^ 1`.
#[derive(Clone, Debug)]
pub struct FlowNetwork {
    source: usize,
    sink: usize,
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

impl FlowNetwork {
    pub fn new(nodes: usize, source: usize, sink: usize) -> Self {
        assert!(source < nodes && sink < nodes && source != sink);
        Self { source, sink, arcs: Vec::new(), adj: vec![Vec::new(); nodes] }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn add_arc(&mut self, from: usize, to: usize, cap: f64) -> Result<()> {
        if !(cap.is_finite() && cap >= 0.0) {
            return Err(Error::InvalidConfig(format!("arc capacity must be finite and >= 0, got {cap}")));
        }
        if to == self.source || from == self.sink {
            return Err(Error::InvalidConfig("arcs may not enter the source or leave the sink".into()));
        }
        if from >= self.adj.len() || to >= self.adj.len() {
            return Err(Error::DimensionMismatch { expected: self.adj.len(), found: from.max(to) + 1 });
        }
        self.adj[from].push(self.arcs.len());
        self.arcs.push(Arc { to, cap });
        self.adj[to].push(self.arcs.len());
        self.arcs.push(Arc { to: from, cap: 0.0 });
        Ok(())
    }

    /// Pushes a maximum flow and returns its value. Capacities become residual.
    pub fn max_flow(&mut self) -> f64 {
        let n = self.adj.len();
        let mut total = 0.0;
        let mut level = vec![usize::MAX; n];
        let mut next = vec![0usize; n];
        while self.build_levels(&mut level) {
            next.iter_mut().for_each(|p| *p = 0);
            loop {
                let pushed = self.augment(self.source, f64::INFINITY, &level, &mut next);
                if pushed <= SATURATION_EPS {
                    break;
                }
                total += pushed;
            }
        }
        total
    }

    fn build_levels(&self, level: &mut [usize]) -> bool {
        level.iter_mut().for_each(|l| *l = usize::MAX);
        let mut queue = std::collections::VecDeque::new();
        level[self.source] = 0;
        queue.push_back(self.source);
        while let Some(u) = queue.pop_front() {
            for &a in &self.adj[u] {
                let arc = &self.arcs[a];
                if arc.cap > SATURATION_EPS && level[arc.to] == usize::MAX {
                    level[arc.to] = level[u] + 1;
                    queue.push_back(arc.to);
                }
            }
        }
        level[self.sink] != usize::MAX
    }

    fn augment(&mut self, u: usize, limit: f64, level: &[usize], next: &mut [usize]) -> f64 {
        if u == self.sink {
            return limit;
        }
        while next[u] < self.adj[u].len() {
            let a = self.adj[u][next[u]];
            let (to, cap) = (self.arcs[a].to, self.arcs[a].cap);
            if cap > SATURATION_EPS && level[to] == level[u] + 1 {
                let pushed = self.augment(to, limit.min(cap), level, next);
                if pushed > SATURATION_EPS {
                    self.arcs[a].cap -= pushed;
                    self.arcs[a ^ 1].cap += pushed;
                    return pushed;
                }
            }
            next[u] += 1;
        }
        0.0
    }

    /// Nodes reachable from the source in the residual network. After
    /// [`max_flow`](Self::max_flow) this is the smallest source side over all
    /// minimum cuts.
    pub fn source_side(&self) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        let mut stack = vec![self.source];
        seen[self.source] = true;
        while let Some(u) = stack.pop() {
            for &a in &self.adj[u] {
                let arc = &self.arcs[a];
                if arc.cap > SATURATION_EPS && !seen[arc.to] {
                    seen[arc.to] = true;
                    stack.push(arc.to);
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_network() {
        // CLRS figure 26.1, max flow 23
        let mut g = FlowNetwork::new(6, 0, 5);
        for &(u, v, c) in &[
            (0, 1, 16.0),
            (0, 2, 13.0),
            (2, 1, 4.0),
            (1, 3, 12.0),
            (3, 2, 9.0),
            (2, 4, 14.0),
            (4, 3, 7.0),
            (3, 5, 20.0),
            (4, 5, 4.0),
        ] {
            g.add_arc(u, v, c).unwrap();
        }
        assert!((g.max_flow() - 23.0).abs() < 1e-12);
        let side = g.source_side();
        assert!(side[0] && !side[5]);
    }

    #[test]
    fn rejects_invalid_arcs() {
        let mut g = FlowNetwork::new(3, 0, 2);
        assert!(g.add_arc(1, 0, 1.0).is_err());
        assert!(g.add_arc(2, 1, 1.0).is_err());
        assert!(g.add_arc(0, 1, -1.0).is_err());
        assert!(g.add_arc(0, 1, f64::NAN).is_err());
    }

    #[test]
    fn disconnected_sink_has_zero_flow() {
        let mut g = FlowNetwork::new(4, 0, 3);
        g.add_arc(0, 1, 2.5).unwrap();
        assert_eq!(g.max_flow(), 0.0);
        assert_eq!(g.source_side(), vec![true, true, false, false]);
    }
}
