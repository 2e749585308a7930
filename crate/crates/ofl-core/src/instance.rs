//! Request-stream instances: the data model, adversarial lower-bound
//! generators, random workloads, secretarial shuffling and the JSON file
//! format.
//!
//! Generators are pure functions of `(params, seed)`; instances are immutable
//! and safe to share across experiment workers.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::Error;
use crate::metric::{MetricSpace, PointRef, TreeEdge};
use crate::rng::rng_from_seed;
use crate::Result;

/// One demand request: a location in the instance's space and a positive
/// weight multiplying its distance cost. Weights need not be integers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub location: PointRef,
    pub weight: f64,
}

impl Request {
    pub fn unit(location: PointRef) -> Self {
        Request {
            location,
            weight: 1.0,
        }
    }
}

/// Monomial congestion function g(k) = k^p with exponent p > 1.
///
/// p > 1 forces g(2) > 2, convexity, g(0) = 0 and the multiplicativity
/// g(ab) = g(a)g(b) that the congestion analysis relies on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CongestionFn {
    pub p: f64,
}

impl CongestionFn {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::Validation(format!(
                "congestion exponent must be a finite real > 1, got {p}"
            )));
        }
        Ok(CongestionFn { p })
    }

    /// g(k) = k^p. Integral exponents use exact integer powers so that
    /// marginals like 1, 3, 5, ... come out exact for p = 2.
    pub fn eval(&self, k: usize) -> f64 {
        let x = k as f64;
        if self.p.fract() == 0.0 && self.p.abs() < 64.0 {
            x.powi(self.p as i32)
        } else {
            x.powf(self.p)
        }
    }

    /// Marginal cost of the (k+1)-th request at a facility with k requests.
    pub fn marginal(&self, k: usize) -> f64 {
        self.eval(k + 1) - self.eval(k)
    }

    /// g^{-1}(y) = y^{1/p}.
    pub fn inverse(&self, y: f64) -> f64 {
        y.powf(1.0 / self.p)
    }
}

/// Provenance and analytic side information carried by generated instances.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InstanceMetadata {
    /// Generator name, e.g. "weighted_lb_tree".
    pub generator: String,
    /// Generator parameters, key-sorted for deterministic serialization.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, serde_json::Value>,
    /// Known analytic upper bound on the offline optimum, when the
    /// construction provides one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opt_upper_bound: Option<f64>,
    /// Arrival-order permutation applied by a secretarial shuffle:
    /// `permutation[i]` is the original stream index of the request now
    /// arriving at step i.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<Vec<usize>>,
}

/// An ordered request stream over a metric space, with the facility opening
/// cost and an optional congestion function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub space: MetricSpace,
    pub requests: Vec<Request>,
    pub f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub congestion: Option<CongestionFn>,
    #[serde(default)]
    pub metadata: InstanceMetadata,
}

impl Instance {
    /// Number of requests n.
    pub fn n_requests(&self) -> usize {
        self.requests.len()
    }

    pub fn has_congestion(&self) -> bool {
        self.congestion.is_some()
    }

    /// Checks every instance invariant: valid request locations, positive
    /// finite weights and facility cost, congestion exponent > 1, and no
    /// weighted+congestion combination (the two cost models are never mixed).
    pub fn validate(&self) -> Result<()> {
        if !(self.f > 0.0) || !self.f.is_finite() {
            return Err(Error::Validation(format!(
                "facility cost must be a positive finite real, got {}",
                self.f
            )));
        }
        let n_points = self.space.n_points();
        for (i, r) in self.requests.iter().enumerate() {
            if r.location.0 >= n_points {
                return Err(Error::Validation(format!(
                    "request {i} references point {} but the space has {n_points} points",
                    r.location.0
                )));
            }
            if !(r.weight > 0.0) || !r.weight.is_finite() {
                return Err(Error::Validation(format!(
                    "request {i} has non-positive weight {}",
                    r.weight
                )));
            }
        }
        if let Some(g) = &self.congestion {
            CongestionFn::new(g.p)?;
            if let Some((i, r)) = self
                .requests
                .iter()
                .enumerate()
                .find(|(_, r)| r.weight != 1.0)
            {
                return Err(Error::Validation(format!(
                    "congestion instances require unit weights; request {i} has weight {}",
                    r.weight
                )));
            }
        }
        if let Some(perm) = &self.metadata.permutation {
            let n = self.requests.len();
            let mut seen = vec![false; n];
            let valid = perm.len() == n
                && perm.iter().all(|&i| {
                    i < n && !std::mem::replace(&mut seen[i], true)
                });
            if !valid {
                return Err(Error::Validation(
                    "metadata.permutation is not a permutation of the request indices".into(),
                ));
            }
        }
        let report = self.space.validate();
        if !report.is_ok() {
            return Err(Error::Validation(format!("metric space invalid: {report}")));
        }
        Ok(())
    }

    /// Attaches a congestion function, enforcing the unit-weight invariant.
    pub fn with_congestion(mut self, p: f64) -> Result<Self> {
        self.congestion = Some(CongestionFn::new(p)?);
        self.validate()?;
        Ok(self)
    }

    /// Serializes to the instance file format (pretty JSON). All reals use
    /// the shortest decimal representation that round-trips the exact double.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("instance serializes");
        out.push('\n');
        out
    }

    /// Parses and validates an instance document.
    pub fn from_json(text: &str) -> Result<Self> {
        let inst: Instance = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }
}

/// Smallest double `e` with `w * e >= f`, preferring exact equality when it
/// is representable.
///
/// The lower-bound constructions need the product of a request's weight and
/// its distance-to-parent to be at least the facility cost, so that the
/// online acceptance probability is pinned to 1 without floating-point
/// slack. For dyadic level counts the product is exactly `f`.
fn edge_for_exact_product(f: f64, w: f64) -> Result<f64> {
    let e = f / w;
    if !e.is_finite() || e < f64::MIN_POSITIVE {
        return Err(Error::Range(format!(
            "edge length {f}/{w} leaves the double range"
        )));
    }
    let mut e = e;
    while w * e < f {
        e = f64::from_bits(e.to_bits() + 1);
    }
    let down = f64::from_bits(e.to_bits() - 1);
    if w * down == f {
        e = down;
    }
    Ok(e)
}

fn param_f64(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v)
        .map(serde_json::Value::Number)
        .unwrap_or(serde_json::Value::Null)
}

/// Adversarial lower-bound instance for the weighted variant: a root-to-leaf
/// path of `n` levels where the request at level i has weight n^i and the
/// edge from level i to i+1 has length f/n^{i+1}. Requests arrive in
/// root-first order; `leaf_seed` picks which abstract path of the underlying
/// binary tree is materialized (recorded in metadata, metrically irrelevant).
///
/// Every level-i request's weight times its distance to the parent is the
/// facility cost, so an online algorithm pays at least f per level while one
/// facility at the leaf costs at most 3f (recorded as `opt_upper_bound`).
pub fn gen_weighted_lb_tree(n: usize, f: f64, leaf_seed: u64) -> Result<Instance> {
    if n < 2 {
        return Err(Error::Config(format!("need n >= 2 levels, got {n}")));
    }
    if !(f > 0.0) || !f.is_finite() {
        return Err(Error::Config(format!(
            "facility cost must be positive, got {f}"
        )));
    }
    let base = n as f64;
    let mut weights = Vec::with_capacity(n);
    let mut edges = Vec::with_capacity(n - 1);
    let mut w = 1.0f64;
    weights.push(w);
    for level in 1..n {
        w *= base; // n^level
        if !w.is_finite() {
            return Err(Error::Range(format!(
                "weight {n}^{level} leaves the double range"
            )));
        }
        weights.push(w);
        edges.push(TreeEdge {
            parent: level - 1,
            child: level,
            length: edge_for_exact_product(f, w)?,
        });
    }

    let mut path_rng = rng_from_seed(leaf_seed);
    let path: String = (0..n - 1)
        .map(|_| if path_rng.gen::<bool>() { 'R' } else { 'L' })
        .collect();

    let space = MetricSpace::WeightedTree { nodes: n, edges };
    let requests = weights
        .iter()
        .enumerate()
        .map(|(level, &weight)| Request {
            location: PointRef(level),
            weight,
        })
        .collect();

    let mut params = BTreeMap::new();
    params.insert("n".into(), serde_json::json!(n));
    params.insert("f".into(), param_f64(f));
    params.insert("leaf_seed".into(), serde_json::json!(leaf_seed));
    params.insert("path".into(), serde_json::json!(path));

    let inst = Instance {
        space,
        requests,
        f,
        congestion: None,
        metadata: InstanceMetadata {
            generator: "weighted_lb_tree".into(),
            params,
            opt_upper_bound: Some(3.0 * f),
            permutation: None,
        },
    };
    inst.validate()?;
    Ok(inst)
}

/// Adversarial lower-bound instance for the congestion variant: a path with
/// nodes at levels 0..=h, h^i unit requests at level i for i < h (emitted
/// level by level, root first), and edge length f/h^{i+1} between levels i
/// and i+1. The level-h node carries no request; it is the spot an offline
/// solution would pick. Total n = 1 + h + ... + h^{h-1}. The caller attaches
/// the congestion function.
pub fn gen_congestion_lb_tree(h: usize, f: f64) -> Result<Instance> {
    if h < 2 {
        return Err(Error::Config(format!("need h >= 2 levels, got {h}")));
    }
    if !(f > 0.0) || !f.is_finite() {
        return Err(Error::Config(format!(
            "facility cost must be positive, got {f}"
        )));
    }
    let mut counts = Vec::with_capacity(h);
    let mut total: usize = 0;
    let mut c: usize = 1;
    for level in 0..h {
        counts.push(c);
        total = total
            .checked_add(c)
            .ok_or_else(|| Error::Range(format!("request count overflows at level {level}")))?;
        if level + 1 < h {
            c = c.checked_mul(h).ok_or_else(|| {
                Error::Range(format!("h^{} overflows the count range", level + 1))
            })?;
        }
    }

    let mut edges = Vec::with_capacity(h);
    let mut pow = 1.0f64;
    for level in 0..h {
        pow *= h as f64; // h^{level+1}
        if !pow.is_finite() {
            return Err(Error::Range(format!(
                "edge denominator h^{} leaves the double range",
                level + 1
            )));
        }
        edges.push(TreeEdge {
            parent: level,
            child: level + 1,
            length: edge_for_exact_product(f, pow)?,
        });
    }

    let space = MetricSpace::WeightedTree {
        nodes: h + 1,
        edges,
    };
    let mut requests = Vec::with_capacity(total);
    for (level, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            requests.push(Request::unit(PointRef(level)));
        }
    }

    let mut params = BTreeMap::new();
    params.insert("h".into(), serde_json::json!(h));
    params.insert("f".into(), param_f64(f));
    params.insert("levels".into(), serde_json::json!(counts));

    let inst = Instance {
        space,
        requests,
        f,
        congestion: None,
        metadata: InstanceMetadata {
            generator: "congestion_lb_tree".into(),
            params,
            opt_upper_bound: None,
            permutation: None,
        },
    };
    inst.validate()?;
    Ok(inst)
}

/// Unit-weight requests on a line with every pairwise distance at least `d`:
/// consecutive gaps are d times a jitter drawn uniformly from [1, 1.5]
/// (or exactly d with `jitter` off). Arrival order is a uniformly random
/// permutation drawn from the seed.
pub fn gen_separated_line(n: usize, d: f64, f: f64, seed: u64, jitter: bool) -> Result<Instance> {
    if n == 0 {
        return Err(Error::Config("need at least one request".into()));
    }
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Config(format!(
            "separation must be positive, got {d}"
        )));
    }
    if !(f > 0.0) || !f.is_finite() {
        return Err(Error::Config(format!(
            "facility cost must be positive, got {f}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut coords = Vec::with_capacity(n);
    let mut x = 0.0f64;
    coords.push(x);
    for _ in 1..n {
        let u = if jitter {
            rng.gen_range(1.0..=1.5)
        } else {
            1.0
        };
        x += d * u;
        coords.push(x);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let space = MetricSpace::Line { coords };
    let requests = order.iter().map(|&i| Request::unit(PointRef(i))).collect();

    let mut params = BTreeMap::new();
    params.insert("n".into(), serde_json::json!(n));
    params.insert("d".into(), param_f64(d));
    params.insert("f".into(), param_f64(f));
    params.insert("f_over_d".into(), param_f64(f / d));
    params.insert("jitter".into(), serde_json::json!(jitter));
    params.insert("seed".into(), serde_json::json!(seed));

    let inst = Instance {
        space,
        requests,
        f,
        congestion: None,
        metadata: InstanceMetadata {
            generator: "separated_line".into(),
            params,
            opt_upper_bound: None,
            permutation: None,
        },
    };
    inst.validate()?;
    Ok(inst)
}

/// Benign clustered workload in the plane: `clusters` centers uniform in
/// [0, box]^2, each request at a uniformly chosen center plus a uniform
/// offset in [-spread, spread]^2, arrival order random.
pub fn gen_random_clustered(
    n: usize,
    clusters: usize,
    spread: f64,
    box_size: f64,
    f: f64,
    seed: u64,
) -> Result<Instance> {
    if n == 0 {
        return Err(Error::Config("need at least one request".into()));
    }
    if clusters == 0 || clusters > n {
        return Err(Error::Config(format!(
            "need 1 <= clusters <= n, got clusters={clusters} n={n}"
        )));
    }
    if !(f > 0.0) || !f.is_finite() {
        return Err(Error::Config(format!(
            "facility cost must be positive, got {f}"
        )));
    }
    if spread < 0.0 || box_size < 0.0 || !spread.is_finite() || !box_size.is_finite() {
        return Err(Error::Config(
            "spread and box must be nonnegative finite reals".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let centers: Vec<[f64; 2]> = (0..clusters)
        .map(|_| [rng.gen_range(0.0..=box_size), rng.gen_range(0.0..=box_size)])
        .collect();
    let coords: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let c = centers[rng.gen_range(0..clusters)];
            vec![
                c[0] + rng.gen_range(-spread..=spread),
                c[1] + rng.gen_range(-spread..=spread),
            ]
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let space = MetricSpace::Euclidean { dim: 2, coords };
    let requests = order.iter().map(|&i| Request::unit(PointRef(i))).collect();

    let mut params = BTreeMap::new();
    params.insert("n".into(), serde_json::json!(n));
    params.insert("clusters".into(), serde_json::json!(clusters));
    params.insert("spread".into(), param_f64(spread));
    params.insert("box".into(), param_f64(box_size));
    params.insert("f".into(), param_f64(f));
    params.insert("seed".into(), serde_json::json!(seed));

    let inst = Instance {
        space,
        requests,
        f,
        congestion: None,
        metadata: InstanceMetadata {
            generator: "random_clustered".into(),
            params,
            opt_upper_bound: None,
            permutation: None,
        },
    };
    inst.validate()?;
    Ok(inst)
}

/// Replaces the arrival order with a uniformly random permutation
/// (Fisher-Yates from the seed). Metadata records the permutation:
/// position i of the new stream holds the request that originally arrived
/// at `permutation[i]` (composed with any earlier recorded shuffle).
pub fn secretarial_shuffle(inst: &Instance, seed: u64) -> Instance {
    let n = inst.requests.len();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let requests = perm.iter().map(|&i| inst.requests[i]).collect();
    let permutation = match &inst.metadata.permutation {
        Some(prev) => perm.iter().map(|&i| prev[i]).collect(),
        None => perm.clone(),
    };
    Instance {
        space: inst.space.clone(),
        requests,
        f: inst.f,
        congestion: inst.congestion,
        metadata: InstanceMetadata {
            permutation: Some(permutation),
            ..inst.metadata.clone()
        },
    }
}
