//! Metric spaces that instances live on, with axiom validation and
//! query-ready distance structures.
//!
//! A [`MetricSpace`] is plain data (it serializes inside instance files);
//! [`Distances`] is the prepared view used by hot loops. Tree distances use
//! precomputed root paths plus binary-lifting LCA, so queries are O(log n)
//! after O(n log n) setup.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::Error;
use crate::Result;

/// Relative tolerance for the metric axiom checks. Generators produce exact
/// dyadic-like values, so anything larger than this is a real bug.
pub const AXIOM_REL_TOL: f64 = 1e-9;

/// Default cap on the number of points [`MetricSpace::all_pairs`] will expand.
pub const ALL_PAIRS_CAP: usize = 20_000;

/// Index into a metric space's point set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointRef(pub usize);

impl fmt::Display for PointRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// One directed edge of a rooted weighted tree. Direction is construction
/// convenience only; distances treat the tree as undirected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeEdge {
    pub parent: usize,
    pub child: usize,
    pub length: f64,
}

/// A finite metric space in one of four representations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricSpace {
    /// Explicit distance matrix.
    ExplicitMatrix { dist: Vec<Vec<f64>> },
    /// Rooted tree with positive edge lengths; shortest-path metric.
    WeightedTree { nodes: usize, edges: Vec<TreeEdge> },
    /// Points on the real line; metric |a - b|.
    Line { coords: Vec<f64> },
    /// Points in R^dim under the 2-norm.
    Euclidean { dim: usize, coords: Vec<Vec<f64>> },
}

/// One violated metric axiom with its witness.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "axiom", rename_all = "snake_case")]
pub enum MetricViolation {
    MatrixNotSquare { row: usize, len: usize, n: usize },
    NonFinite { a: usize, b: usize, value: f64 },
    Negative { a: usize, b: usize, value: f64 },
    NonzeroDiagonal { a: usize, value: f64 },
    Asymmetry { a: usize, b: usize, forward: f64, backward: f64 },
    TriangleInequality { a: usize, b: usize, c: usize, direct: f64, via: f64 },
    EdgeLengthNotPositive { parent: usize, child: usize, length: f64 },
    EdgeEndpointOutOfRange { parent: usize, child: usize, nodes: usize },
    NotATree { reason: String },
    NonFiniteCoordinate { point: usize },
    DimensionMismatch { point: usize, len: usize, dim: usize },
}

impl fmt::Display for MetricViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use MetricViolation::*;
        match self {
            MatrixNotSquare { row, len, n } => {
                write!(f, "row {row} has length {len}, expected {n}")
            }
            NonFinite { a, b, value } => write!(f, "dist[{a}][{b}] = {value} is not finite"),
            Negative { a, b, value } => write!(f, "dist[{a}][{b}] = {value} is negative"),
            NonzeroDiagonal { a, value } => write!(f, "dist[{a}][{a}] = {value}, expected 0"),
            Asymmetry {
                a,
                b,
                forward,
                backward,
            } => write!(f, "asymmetry at ({a},{b}): {forward} vs {backward}"),
            TriangleInequality {
                a,
                b,
                c,
                direct,
                via,
            } => write!(
                f,
                "triangle inequality at ({a},{c}) via {b}: {direct} > {via}"
            ),
            EdgeLengthNotPositive {
                parent,
                child,
                length,
            } => write!(f, "edge {parent}->{child} has non-positive length {length}"),
            EdgeEndpointOutOfRange {
                parent,
                child,
                nodes,
            } => write!(f, "edge {parent}->{child} out of range for {nodes} nodes"),
            NotATree { reason } => write!(f, "not a tree: {reason}"),
            NonFiniteCoordinate { point } => write!(f, "point {point} has a non-finite coordinate"),
            DimensionMismatch { point, len, dim } => {
                write!(f, "point {point} has {len} coordinates, expected {dim}")
            }
        }
    }
}

/// Result of [`MetricSpace::validate`]: ok iff no violations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<MetricViolation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            write!(f, "ok")
        } else {
            for v in &self.violations {
                writeln!(f, "{v}")?;
            }
            Ok(())
        }
    }
}

impl MetricSpace {
    /// Number of points in the space.
    pub fn n_points(&self) -> usize {
        match self {
            MetricSpace::ExplicitMatrix { dist } => dist.len(),
            MetricSpace::WeightedTree { nodes, .. } => *nodes,
            MetricSpace::Line { coords } => coords.len(),
            MetricSpace::Euclidean { coords, .. } => coords.len(),
        }
    }

    fn check_point(&self, p: PointRef) -> Result<()> {
        let n = self.n_points();
        if p.0 >= n {
            return Err(Error::InvalidPoint {
                id: p.0,
                n_points: n,
            });
        }
        Ok(())
    }

    /// One-shot distance query. Builds the tree index on every call for
    /// `WeightedTree`; hot loops should go through [`Distances`] instead.
    pub fn distance(&self, a: PointRef, b: PointRef) -> Result<f64> {
        self.check_point(a)?;
        self.check_point(b)?;
        Ok(Distances::new(self)?.between(a, b))
    }

    /// Checks every axiom of the representation and reports each violation
    /// with its witnessing tuple. Never errors: violations are the result.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        match self {
            MetricSpace::ExplicitMatrix { dist } => {
                let n = dist.len();
                for (i, row) in dist.iter().enumerate() {
                    if row.len() != n {
                        violations.push(MetricViolation::MatrixNotSquare {
                            row: i,
                            len: row.len(),
                            n,
                        });
                    }
                }
                if !violations.is_empty() {
                    return ValidationReport { violations };
                }
                let scale = dist
                    .iter()
                    .flatten()
                    .fold(0.0f64, |acc, &d| acc.max(d.abs()));
                for a in 0..n {
                    for b in 0..n {
                        let d = dist[a][b];
                        if !d.is_finite() {
                            violations.push(MetricViolation::NonFinite { a, b, value: d });
                        } else if d < 0.0 {
                            violations.push(MetricViolation::Negative { a, b, value: d });
                        }
                    }
                }
                if !violations.is_empty() {
                    return ValidationReport { violations };
                }
                for a in 0..n {
                    if dist[a][a].abs() > AXIOM_REL_TOL * scale {
                        violations.push(MetricViolation::NonzeroDiagonal {
                            a,
                            value: dist[a][a],
                        });
                    }
                }
                for a in 0..n {
                    for b in (a + 1)..n {
                        let (fwd, bwd) = (dist[a][b], dist[b][a]);
                        if (fwd - bwd).abs() > AXIOM_REL_TOL * fwd.abs().max(bwd.abs()) {
                            violations.push(MetricViolation::Asymmetry {
                                a,
                                b,
                                forward: fwd,
                                backward: bwd,
                            });
                        }
                    }
                }
                for a in 0..n {
                    for b in 0..n {
                        for c in 0..n {
                            let via = dist[a][b] + dist[b][c];
                            if dist[a][c] > via * (1.0 + AXIOM_REL_TOL) {
                                violations.push(MetricViolation::TriangleInequality {
                                    a,
                                    b,
                                    c,
                                    direct: dist[a][c],
                                    via,
                                });
                            }
                        }
                    }
                }
            }
            MetricSpace::WeightedTree { nodes, edges } => {
                validate_tree(*nodes, edges, &mut violations);
            }
            MetricSpace::Line { coords } => {
                for (i, x) in coords.iter().enumerate() {
                    if !x.is_finite() {
                        violations.push(MetricViolation::NonFiniteCoordinate { point: i });
                    }
                }
            }
            MetricSpace::Euclidean { dim, coords } => {
                for (i, v) in coords.iter().enumerate() {
                    if v.len() != *dim {
                        violations.push(MetricViolation::DimensionMismatch {
                            point: i,
                            len: v.len(),
                            dim: *dim,
                        });
                    }
                    if v.iter().any(|x| !x.is_finite()) {
                        violations.push(MetricViolation::NonFiniteCoordinate { point: i });
                    }
                }
            }
        }
        ValidationReport { violations }
    }

    /// Expands the space to an explicit matrix equal pointwise to
    /// [`MetricSpace::distance`]. Refuses spaces above `ALL_PAIRS_CAP` points.
    pub fn all_pairs(&self) -> Result<MetricSpace> {
        self.all_pairs_capped(ALL_PAIRS_CAP)
    }

    pub fn all_pairs_capped(&self, cap: usize) -> Result<MetricSpace> {
        let n = self.n_points();
        if n > cap {
            return Err(Error::SizeCap {
                what: "all_pairs points",
                got: n,
                cap,
            });
        }
        let dists = Distances::new(self)?;
        let dist = (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| dists.between(PointRef(a), PointRef(b)))
                    .collect()
            })
            .collect();
        Ok(MetricSpace::ExplicitMatrix { dist })
    }
}

fn validate_tree(nodes: usize, edges: &[TreeEdge], violations: &mut Vec<MetricViolation>) {
    for e in edges {
        if e.parent >= nodes || e.child >= nodes {
            violations.push(MetricViolation::EdgeEndpointOutOfRange {
                parent: e.parent,
                child: e.child,
                nodes,
            });
        }
        if !(e.length > 0.0) || !e.length.is_finite() {
            violations.push(MetricViolation::EdgeLengthNotPositive {
                parent: e.parent,
                child: e.child,
                length: e.length,
            });
        }
    }
    if !violations.is_empty() {
        return;
    }
    if nodes == 0 {
        violations.push(MetricViolation::NotATree {
            reason: "empty node set".into(),
        });
        return;
    }
    if edges.len() != nodes - 1 {
        violations.push(MetricViolation::NotATree {
            reason: format!("{} edges for {} nodes", edges.len(), nodes),
        });
        return;
    }
    let mut parent = vec![usize::MAX; nodes];
    for e in edges {
        if e.parent == e.child {
            violations.push(MetricViolation::NotATree {
                reason: format!("self loop at node {}", e.child),
            });
            return;
        }
        if parent[e.child] != usize::MAX {
            violations.push(MetricViolation::NotATree {
                reason: format!("node {} has two parents", e.child),
            });
            return;
        }
        parent[e.child] = e.parent;
    }
    let roots: Vec<usize> = (0..nodes).filter(|&v| parent[v] == usize::MAX).collect();
    if roots.len() != 1 {
        violations.push(MetricViolation::NotATree {
            reason: format!("{} root nodes", roots.len()),
        });
        return;
    }
    // Connectivity: walk parent chains iteratively, detecting cycles by count.
    for start in 0..nodes {
        let mut v = start;
        let mut steps = 0usize;
        while parent[v] != usize::MAX {
            v = parent[v];
            steps += 1;
            if steps > nodes {
                violations.push(MetricViolation::NotATree {
                    reason: "cycle in parent chain".into(),
                });
                return;
            }
        }
        if v != roots[0] {
            violations.push(MetricViolation::NotATree {
                reason: format!("node {start} not connected to the root"),
            });
            return;
        }
    }
}

/// Parent pointers and depths for tree distance queries.
///
/// Distances sum the edge lengths along the unique a-b path, walking both
/// endpoints up to their meeting point. Root-path prefix sums would give
/// O(1) queries but cancel catastrophically on the lower-bound instances,
/// where edges shrink geometrically below the ulp of the accumulated depth;
/// the walk keeps every edge exact and the trees in play are small.
#[derive(Debug, Clone)]
struct TreeIndex {
    parent: Vec<usize>,
    edge_to_parent: Vec<f64>,
    depth: Vec<usize>,
}

impl TreeIndex {
    fn build(nodes: usize, edges: &[TreeEdge]) -> Result<Self> {
        let mut violations = Vec::new();
        validate_tree(nodes, edges, &mut violations);
        if let Some(v) = violations.first() {
            return Err(Error::Validation(v.to_string()));
        }
        let mut parent = vec![usize::MAX; nodes];
        let mut edge_to_parent = vec![0.0f64; nodes];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); nodes];
        for e in edges {
            parent[e.child] = e.parent;
            edge_to_parent[e.child] = e.length;
            children[e.parent].push(e.child);
        }
        let root = (0..nodes).find(|&v| parent[v] == usize::MAX).unwrap();

        let mut depth = vec![0usize; nodes];
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for &c in &children[v] {
                depth[c] = depth[v] + 1;
                stack.push(c);
            }
        }
        Ok(TreeIndex {
            parent,
            edge_to_parent,
            depth,
        })
    }

    fn distance(&self, a: usize, b: usize) -> f64 {
        // Canonical argument order makes the query bit-symmetric.
        let (mut a, mut b) = if a <= b { (a, b) } else { (b, a) };
        // Ascending from the deeper node accumulates the geometrically
        // smallest edges first, which keeps the sum faithful.
        let mut total = 0.0f64;
        while self.depth[a] > self.depth[b] {
            total += self.edge_to_parent[a];
            a = self.parent[a];
        }
        while self.depth[b] > self.depth[a] {
            total += self.edge_to_parent[b];
            b = self.parent[b];
        }
        while a != b {
            total += self.edge_to_parent[a];
            total += self.edge_to_parent[b];
            a = self.parent[a];
            b = self.parent[b];
        }
        total
    }
}

/// Query-ready distance view over a [`MetricSpace`]. Build once per run.
#[derive(Debug, Clone)]
pub struct Distances<'a> {
    inner: DistancesInner<'a>,
    n: usize,
}

#[derive(Debug, Clone)]
enum DistancesInner<'a> {
    Matrix(&'a [Vec<f64>]),
    Tree(TreeIndex),
    Line(&'a [f64]),
    Euclidean(&'a [Vec<f64>]),
}

impl<'a> Distances<'a> {
    /// Prepares the space for queries. Fails if a weighted tree's structure
    /// is invalid (the other kinds defer to [`MetricSpace::validate`]).
    pub fn new(space: &'a MetricSpace) -> Result<Self> {
        let n = space.n_points();
        let inner = match space {
            MetricSpace::ExplicitMatrix { dist } => {
                for (i, row) in dist.iter().enumerate() {
                    if row.len() != n {
                        return Err(Error::Validation(format!(
                            "matrix row {i} has length {}, expected {n}",
                            row.len()
                        )));
                    }
                }
                DistancesInner::Matrix(dist)
            }
            MetricSpace::WeightedTree { nodes, edges } => {
                DistancesInner::Tree(TreeIndex::build(*nodes, edges)?)
            }
            MetricSpace::Line { coords } => DistancesInner::Line(coords),
            MetricSpace::Euclidean { dim, coords } => {
                for (i, v) in coords.iter().enumerate() {
                    if v.len() != *dim {
                        return Err(Error::Validation(format!(
                            "point {i} has {} coordinates, expected {dim}",
                            v.len()
                        )));
                    }
                }
                DistancesInner::Euclidean(coords)
            }
        };
        Ok(Distances { inner, n })
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    /// Distance between two points. Panics on out-of-range ids; callers
    /// validate ids once at instance level.
    pub fn between(&self, a: PointRef, b: PointRef) -> f64 {
        match &self.inner {
            DistancesInner::Matrix(dist) => dist[a.0][b.0],
            DistancesInner::Tree(index) => index.distance(a.0, b.0),
            DistancesInner::Line(coords) => (coords[a.0] - coords[b.0]).abs(),
            DistancesInner::Euclidean(coords) => {
                let (u, v) = (&coords[a.0], &coords[b.0]);
                u.iter()
                    .zip(v.iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }
}
