//! Min-cost max-flow by successive shortest augmenting paths with Johnson
//! potentials, over real-valued edge costs.
//!
//! Sized for the small dense bipartite assignment graphs the offline solver
//! builds (at most a few thousand edges); exactness matters, performance does
//! not. All input costs are nonnegative, so the potential bootstrap is a
//! plain Dijkstra pass; reduced costs that dip a hair below zero from float
//! rounding are clamped.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    residual: i64,
    cost: f64,
}

#[derive(Debug, Clone)]
pub struct MinCostFlow {
    adjacency: Vec<Vec<usize>>,
    edges: Vec<Edge>,
}

struct HeapItem {
    dist: f64,
    node: usize,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    // Reversed so the BinaryHeap pops the smallest distance; node index
    // breaks ties deterministically.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl MinCostFlow {
    pub fn new(nodes: usize) -> Self {
        MinCostFlow {
            adjacency: vec![Vec::new(); nodes],
            edges: Vec::new(),
        }
    }

    /// Adds a directed edge with unit-step capacity semantics and returns its
    /// id (the reverse edge is id+1). Costs must be finite and nonnegative.
    pub fn add_edge(&mut self, from: usize, to: usize, capacity: i64, cost: f64) -> usize {
        debug_assert!(cost.is_finite() && cost >= 0.0);
        let id = self.edges.len();
        self.adjacency[from].push(id);
        self.edges.push(Edge {
            to,
            residual: capacity,
            cost,
        });
        self.adjacency[to].push(id + 1);
        self.edges.push(Edge {
            to: from,
            residual: 0,
            cost: -cost,
        });
        id
    }

    /// Flow pushed through edge `id` so far.
    pub fn flow_on(&self, id: usize) -> i64 {
        self.edges[id ^ 1].residual
    }

    /// Pushes up to `limit` units from `source` to `sink`, augmenting along a
    /// shortest residual path each round. Returns (flow, cost).
    pub fn run(&mut self, source: usize, sink: usize, limit: i64) -> (i64, f64) {
        let n = self.adjacency.len();
        let mut potential = vec![0.0f64; n];
        let mut total_flow = 0i64;
        let mut total_cost = 0.0f64;

        while total_flow < limit {
            let mut dist = vec![f64::INFINITY; n];
            let mut parent_edge = vec![usize::MAX; n];
            let mut done = vec![false; n];
            dist[source] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push(HeapItem {
                dist: 0.0,
                node: source,
            });
            while let Some(HeapItem { node, .. }) = heap.pop() {
                if done[node] {
                    continue;
                }
                done[node] = true;
                for &eid in &self.adjacency[node] {
                    let e = &self.edges[eid];
                    if e.residual <= 0 || done[e.to] {
                        continue;
                    }
                    let reduced = (e.cost + potential[node] - potential[e.to]).max(0.0);
                    let candidate = dist[node] + reduced;
                    if candidate < dist[e.to] {
                        dist[e.to] = candidate;
                        parent_edge[e.to] = eid;
                        heap.push(HeapItem {
                            dist: candidate,
                            node: e.to,
                        });
                    }
                }
            }
            if !dist[sink].is_finite() {
                break;
            }
            for v in 0..n {
                if dist[v].is_finite() {
                    potential[v] += dist[v];
                }
            }
            // Bottleneck along the path.
            let mut push = limit - total_flow;
            let mut v = sink;
            while v != source {
                let eid = parent_edge[v];
                push = push.min(self.edges[eid].residual);
                v = self.edges[eid ^ 1].to;
            }
            let mut v = sink;
            while v != source {
                let eid = parent_edge[v];
                self.edges[eid].residual -= push;
                self.edges[eid ^ 1].residual += push;
                total_cost += self.edges[eid].cost * push as f64;
                v = self.edges[eid ^ 1].to;
            }
            total_flow += push;
        }
        (total_flow, total_cost)
    }
}
