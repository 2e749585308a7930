//! The online algorithms RFL, WRFL and MRFL plus trivial baselines, as
//! explicit step functions over a facility state, with a three-way cost
//! ledger and a replayable per-request event trace.
//!
//! Conventions shared by every randomized step:
//!
//! - when no facility is open yet the acceptance probability is 1, so the
//!   first request always opens (any other convention leaves it unassignable);
//! - exactly one uniform double is drawn per request and compared against
//!   the acceptance probability, so algorithms that share a seed share coin
//!   outcomes event for event;
//! - ties among equidistant open facilities go to the lowest creation index.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::str::FromStr;

use crate::error::Error;
use crate::instance::{CongestionFn, Instance, Request};
use crate::metric::{Distances, MetricSpace, PointRef};
use crate::rng::{rng_from_seed, RunRng};
use crate::stats::mean_stderr;
use crate::Result;

/// Which algorithm to run over a request stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "alg", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    /// Randomized facility location: open at the request with probability
    /// min(1, d/f).
    Rfl,
    /// Weighted randomized facility location: open with probability
    /// min(1, d*w/f).
    Wrfl,
    /// RFL plus a load cap: a facility reaching `k_star` assignments is
    /// closed and replaced in place. `None` derives k* from the instance's
    /// facility cost and congestion function.
    Mrfl {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k_star: Option<usize>,
    },
    /// Opens a facility on every request.
    OpenEverywhere,
    /// Opens exactly one facility, at the first request.
    NearestOnly,
}

impl AlgorithmSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmSpec::Rfl => "rfl",
            AlgorithmSpec::Wrfl => "wrfl",
            AlgorithmSpec::Mrfl { .. } => "mrfl",
            AlgorithmSpec::OpenEverywhere => "open_everywhere",
            AlgorithmSpec::NearestOnly => "nearest_only",
        }
    }
}

impl FromStr for AlgorithmSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "rfl" => Ok(AlgorithmSpec::Rfl),
            "wrfl" => Ok(AlgorithmSpec::Wrfl),
            "mrfl" => Ok(AlgorithmSpec::Mrfl { k_star: None }),
            "open_everywhere" => Ok(AlgorithmSpec::OpenEverywhere),
            "nearest_only" => Ok(AlgorithmSpec::NearestOnly),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// One facility owned by an online run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FacilityRecord {
    pub location: PointRef,
    /// Closed facilities (MRFL step 5) receive no further assignments.
    pub open: bool,
    /// Requests currently assigned.
    pub load: usize,
}

/// All facilities a run has opened, in creation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FacilityState {
    pub facilities: Vec<FacilityRecord>,
}

impl FacilityState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Nearest open facility by creation-order scan; ties keep the earliest.
    pub fn nearest_open(&self, dist: &Distances, x: PointRef) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, fac) in self.facilities.iter().enumerate() {
            if !fac.open {
                continue;
            }
            let d = dist.between(fac.location, x);
            match best {
                Some((_, bd)) if d >= bd => {}
                _ => best = Some((i, d)),
            }
        }
        best
    }

    fn open_at(&mut self, location: PointRef) -> usize {
        self.facilities.push(FacilityRecord {
            location,
            open: true,
            load: 0,
        });
        self.facilities.len() - 1
    }

    pub fn max_load(&self) -> usize {
        self.facilities.iter().map(|f| f.load).max().unwrap_or(0)
    }
}

/// Three-way cost decomposition. The total is always the sum of the parts;
/// each part accumulates the per-event marginals in stream order, so a trace
/// replay reproduces it bit for bit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub facility_open_cost: f64,
    pub distance_cost: f64,
    pub congestion_cost: f64,
}

impl CostLedger {
    pub fn total(&self) -> f64 {
        self.facility_open_cost + self.distance_cost + self.congestion_cost
    }
}

/// A facility opened by the algorithm's own randomized rule (step-2 opens,
/// in the MRFL cost split).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenEvent {
    pub facility: usize,
    pub location: PointRef,
}

/// MRFL close-and-replace: the assigned facility hit the load cap, was
/// closed, and a fresh facility opened at the same location (step-5 opens).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplaceEvent {
    pub closed: usize,
    pub opened: usize,
    pub location: PointRef,
    pub open_cost: f64,
}

/// Everything one request did to the run state, marginal costs included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Stream index of the request.
    pub request: usize,
    /// Distance to the nearest open facility before this request acted;
    /// absent when no facility was open.
    pub nearest_distance: Option<f64>,
    /// Acceptance probability p_i.
    pub accept_prob: f64,
    /// The uniform draw compared against p_i; absent for deterministic
    /// baselines, which toss no coin.
    pub coin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opened: Option<OpenEvent>,
    /// Creation index of the facility this request was assigned to.
    pub assigned: usize,
    pub assigned_location: PointRef,
    pub open_cost: f64,
    pub distance_cost: f64,
    pub congestion_cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replaced: Option<ReplaceEvent>,
}

/// Ordered event log of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub events: Vec<TraceEvent>,
}

impl RunTrace {
    /// Rebuilds the ledger from stored marginals, in stream order. Equals the
    /// live ledger exactly (same additions in the same order).
    pub fn replay_ledger(&self) -> CostLedger {
        let mut ledger = CostLedger::default();
        for ev in &self.events {
            ledger.facility_open_cost += ev.open_cost;
            ledger.distance_cost += ev.distance_cost;
            ledger.congestion_cost += ev.congestion_cost;
            if let Some(rep) = &ev.replaced {
                ledger.facility_open_cost += rep.open_cost;
            }
        }
        ledger
    }

    pub fn step2_open_count(&self) -> usize {
        self.events.iter().filter(|e| e.opened.is_some()).count()
    }

    pub fn step5_open_count(&self) -> usize {
        self.events.iter().filter(|e| e.replaced.is_some()).count()
    }

    /// Distance cost plus step-2 facility costs.
    pub fn c1(&self) -> f64 {
        self.events
            .iter()
            .map(|e| e.distance_cost + e.open_cost)
            .sum()
    }

    /// Congestion cost plus step-5 facility costs.
    pub fn c2(&self) -> f64 {
        self.events
            .iter()
            .map(|e| {
                e.congestion_cost + e.replaced.as_ref().map_or(0.0, |r| r.open_cost)
            })
            .sum()
    }

    /// Final load of every facility the run created, in creation order.
    pub fn facility_loads(&self) -> Vec<usize> {
        let mut loads: Vec<usize> = Vec::new();
        for ev in &self.events {
            if ev.opened.is_some() {
                loads.push(0);
            }
            loads[ev.assigned] += 1;
            if ev.replaced.is_some() {
                loads.push(0);
            }
        }
        loads
    }

    /// Line-delimited JSON export, one event per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for ev in &self.events {
            out.push_str(&serde_json::to_string(ev).expect("trace event serializes"));
            out.push('\n');
        }
        out
    }
}

/// Load cap certified for the offline optimum: k* = 2 g^{-1}(f / (g(2)-2)),
/// floored to an integer threshold and clamped to at least 1. Values within
/// 1e-9 of an integer round to it first, so powf jitter cannot push an exact
/// threshold down a step.
pub fn k_star(f: f64, g: &CongestionFn) -> usize {
    let y = 2.0 * g.inverse(f / (g.eval(2) - 2.0));
    let k = if (y - y.round()).abs() < 1e-9 {
        y.round()
    } else {
        y.floor()
    };
    (k as usize).max(1)
}

/// Shared core of the randomized algorithms: with probability
/// min(1, d * weight / f) open at the request (probability 1 when nothing is
/// open), otherwise assign to the nearest open facility. Congestion marginals
/// accrue at the assigned facility when `g` is present.
#[allow(clippy::too_many_arguments)]
fn randomized_step(
    state: &mut FacilityState,
    ledger: &mut CostLedger,
    dist: &Distances,
    request_index: usize,
    req: &Request,
    weight: f64,
    f: f64,
    g: Option<&CongestionFn>,
    rng: &mut RunRng,
) -> TraceEvent {
    let nearest = state.nearest_open(dist, req.location);
    let accept_prob = match nearest {
        None => 1.0,
        Some((_, d)) => (d * weight / f).min(1.0),
    };
    let coin = rng.gen::<f64>();

    let (assigned, opened, open_cost, distance_cost) = if coin < accept_prob {
        let idx = state.open_at(req.location);
        ledger.facility_open_cost += f;
        (
            idx,
            Some(OpenEvent {
                facility: idx,
                location: req.location,
            }),
            f,
            0.0,
        )
    } else {
        // accept_prob < 1 here, so a nearest open facility exists.
        let (idx, d) = nearest.expect("no open facility implies accept_prob = 1");
        let cost = d * weight;
        ledger.distance_cost += cost;
        (idx, None, 0.0, cost)
    };

    let congestion_cost = match g {
        Some(g) => {
            let marginal = g.marginal(state.facilities[assigned].load);
            ledger.congestion_cost += marginal;
            marginal
        }
        None => 0.0,
    };
    state.facilities[assigned].load += 1;

    TraceEvent {
        request: request_index,
        nearest_distance: nearest.map(|(_, d)| d),
        accept_prob,
        coin: Some(coin),
        opened,
        assigned,
        assigned_location: state.facilities[assigned].location,
        open_cost,
        distance_cost,
        congestion_cost,
        replaced: None,
    }
}

/// One WRFL step: acceptance probability min(1, d(x, nearest) * w / f).
#[allow(clippy::too_many_arguments)]
pub fn wrfl_step(
    state: &mut FacilityState,
    ledger: &mut CostLedger,
    dist: &Distances,
    request_index: usize,
    req: &Request,
    f: f64,
    rng: &mut RunRng,
) -> TraceEvent {
    randomized_step(
        state,
        ledger,
        dist,
        request_index,
        req,
        req.weight,
        f,
        None,
        rng,
    )
}

/// One RFL step: WRFL with weight fixed to 1.
pub fn rfl_step(
    state: &mut FacilityState,
    ledger: &mut CostLedger,
    dist: &Distances,
    request_index: usize,
    req: &Request,
    f: f64,
    rng: &mut RunRng,
) -> TraceEvent {
    randomized_step(state, ledger, dist, request_index, req, 1.0, f, None, rng)
}

/// One MRFL step: the RFL action over currently open facilities plus the
/// congestion marginal, then close-and-replace if the assigned facility's
/// load reached `k_star`. The replacement facility is live immediately.
#[allow(clippy::too_many_arguments)]
pub fn mrfl_step(
    state: &mut FacilityState,
    ledger: &mut CostLedger,
    dist: &Distances,
    request_index: usize,
    req: &Request,
    f: f64,
    g: &CongestionFn,
    k_star: usize,
    rng: &mut RunRng,
) -> TraceEvent {
    let mut ev = randomized_step(
        state,
        ledger,
        dist,
        request_index,
        req,
        1.0,
        f,
        Some(g),
        rng,
    );
    let assigned = ev.assigned;
    debug_assert!(state.facilities[assigned].load <= k_star);
    if state.facilities[assigned].load >= k_star {
        state.facilities[assigned].open = false;
        let location = state.facilities[assigned].location;
        let replacement = state.open_at(location);
        ledger.facility_open_cost += f;
        ev.replaced = Some(ReplaceEvent {
            closed: assigned,
            opened: replacement,
            location,
            open_cost: f,
        });
    }
    ev
}

#[allow(clippy::too_many_arguments)]
fn baseline_step(
    state: &mut FacilityState,
    ledger: &mut CostLedger,
    dist: &Distances,
    request_index: usize,
    req: &Request,
    f: f64,
    g: Option<&CongestionFn>,
    always_open: bool,
) -> TraceEvent {
    let nearest = state.nearest_open(dist, req.location);
    let open_now = always_open || nearest.is_none();
    let (assigned, opened, open_cost, distance_cost) = if open_now {
        let idx = state.open_at(req.location);
        ledger.facility_open_cost += f;
        (
            idx,
            Some(OpenEvent {
                facility: idx,
                location: req.location,
            }),
            f,
            0.0,
        )
    } else {
        let (idx, d) = nearest.unwrap();
        let cost = d * req.weight;
        ledger.distance_cost += cost;
        (idx, None, 0.0, cost)
    };
    let congestion_cost = match g {
        Some(g) => {
            let marginal = g.marginal(state.facilities[assigned].load);
            ledger.congestion_cost += marginal;
            marginal
        }
        None => 0.0,
    };
    state.facilities[assigned].load += 1;
    TraceEvent {
        request: request_index,
        nearest_distance: nearest.map(|(_, d)| d),
        accept_prob: if open_now { 1.0 } else { 0.0 },
        coin: None,
        opened,
        assigned,
        assigned_location: state.facilities[assigned].location,
        open_cost,
        distance_cost,
        congestion_cost,
        replaced: None,
    }
}

fn check_compat(alg: &AlgorithmSpec, inst: &Instance) -> Result<()> {
    match alg {
        AlgorithmSpec::Rfl => {
            if inst.has_congestion() {
                return Err(Error::Config(
                    "rfl runs on congestion-free instances; use mrfl".into(),
                ));
            }
            if inst.requests.iter().any(|r| r.weight != 1.0) {
                return Err(Error::Config(
                    "rfl requires unit weights; use wrfl for weighted requests".into(),
                ));
            }
        }
        AlgorithmSpec::Wrfl => {
            if inst.has_congestion() {
                return Err(Error::Config(
                    "wrfl runs on congestion-free instances; use mrfl".into(),
                ));
            }
        }
        AlgorithmSpec::Mrfl { k_star } => {
            if !inst.has_congestion() {
                return Err(Error::Config(
                    "mrfl requires an instance with a congestion function".into(),
                ));
            }
            if *k_star == Some(0) {
                return Err(Error::Config("mrfl load cap must be at least 1".into()));
            }
        }
        AlgorithmSpec::OpenEverywhere | AlgorithmSpec::NearestOnly => {}
    }
    Ok(())
}

/// Drives the chosen algorithm over the full request stream. Deterministic
/// given `(alg, inst, seed)`.
pub fn run_online(
    alg: &AlgorithmSpec,
    inst: &Instance,
    seed: u64,
) -> Result<(CostLedger, RunTrace)> {
    inst.validate()?;
    check_compat(alg, inst)?;
    let dist = Distances::new(&inst.space)?;
    let mut rng = rng_from_seed(seed);
    let mut state = FacilityState::new();
    let mut ledger = CostLedger::default();
    let mut events = Vec::with_capacity(inst.requests.len());
    let f = inst.f;

    match alg {
        AlgorithmSpec::Rfl => {
            for (i, req) in inst.requests.iter().enumerate() {
                events.push(rfl_step(&mut state, &mut ledger, &dist, i, req, f, &mut rng));
            }
        }
        AlgorithmSpec::Wrfl => {
            for (i, req) in inst.requests.iter().enumerate() {
                events.push(wrfl_step(
                    &mut state,
                    &mut ledger,
                    &dist,
                    i,
                    req,
                    f,
                    &mut rng,
                ));
            }
        }
        AlgorithmSpec::Mrfl { k_star: cap } => {
            let g = inst.congestion.as_ref().unwrap();
            let cap = cap.unwrap_or_else(|| k_star(f, g));
            for (i, req) in inst.requests.iter().enumerate() {
                events.push(mrfl_step(
                    &mut state,
                    &mut ledger,
                    &dist,
                    i,
                    req,
                    f,
                    g,
                    cap,
                    &mut rng,
                ));
            }
        }
        AlgorithmSpec::OpenEverywhere => {
            for (i, req) in inst.requests.iter().enumerate() {
                events.push(baseline_step(
                    &mut state,
                    &mut ledger,
                    &dist,
                    i,
                    req,
                    f,
                    inst.congestion.as_ref(),
                    true,
                ));
            }
        }
        AlgorithmSpec::NearestOnly => {
            for (i, req) in inst.requests.iter().enumerate() {
                events.push(baseline_step(
                    &mut state,
                    &mut ledger,
                    &dist,
                    i,
                    req,
                    f,
                    inst.congestion.as_ref(),
                    false,
                ));
            }
        }
    }

    Ok((ledger, RunTrace { events }))
}

/// Counts analysis phases for one offline cluster: the counter starts at the
/// first facility opened on a cluster request, and increments each time a
/// facility opens on a cluster request strictly closer to `c_star` than the
/// facility that started the current phase.
pub fn count_phases(
    trace: &RunTrace,
    cluster: &[usize],
    c_star: PointRef,
    space: &MetricSpace,
) -> Result<usize> {
    if c_star.0 >= space.n_points() {
        return Err(Error::InvalidPoint {
            id: c_star.0,
            n_points: space.n_points(),
        });
    }
    let members: HashSet<usize> = cluster.iter().copied().collect();
    let dist = Distances::new(space)?;
    let mut phases = 0usize;
    let mut phase_distance: Option<f64> = None;
    for ev in &trace.events {
        if !members.contains(&ev.request) {
            continue;
        }
        if let Some(open) = &ev.opened {
            let d = dist.between(open.location, c_star);
            match phase_distance {
                None => {
                    phases = 1;
                    phase_distance = Some(d);
                }
                Some(current) if d < current => {
                    phases += 1;
                    phase_distance = Some(d);
                }
                _ => {}
            }
        }
    }
    Ok(phases)
}

/// Inputs for the pre-open cost measurement: a tracked subsequence of
/// requests, facilities already open before it starts, and facilities that
/// appear between its requests (as other clusters would cause).
#[derive(Debug, Clone)]
pub struct PreOpenConfig {
    pub space: MetricSpace,
    pub subsequence: Vec<Request>,
    pub pre_opened: Vec<PointRef>,
    /// (position, location): the facility appears just before the request at
    /// this subsequence position is processed.
    pub injected: Vec<(usize, PointRef)>,
}

/// Monte Carlo estimate of the cost WRFL pays on a subsequence strictly
/// before it opens its first facility on one of the subsequence's requests.
/// Returns (mean, standard error).
pub fn property1_mc(cfg: &PreOpenConfig, f: f64, trials: usize, seed: u64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let dist = Distances::new(&cfg.space)?;
    let n_points = cfg.space.n_points();
    for p in cfg
        .pre_opened
        .iter()
        .chain(cfg.injected.iter().map(|(_, p)| p))
    {
        if p.0 >= n_points {
            return Err(Error::InvalidPoint {
                id: p.0,
                n_points,
            });
        }
    }
    let mut costs = Vec::with_capacity(trials);
    for trial in 0..trials {
        let mut rng = rng_from_seed(crate::rng::derive_seed(seed, trial as u64));
        let mut state = FacilityState::new();
        for &loc in &cfg.pre_opened {
            state.open_at(loc);
        }
        let mut cost = 0.0f64;
        for (i, req) in cfg.subsequence.iter().enumerate() {
            for &(pos, loc) in &cfg.injected {
                if pos == i {
                    state.open_at(loc);
                }
            }
            let nearest = state.nearest_open(&dist, req.location);
            let p = match nearest {
                None => 1.0,
                Some((_, d)) => (d * req.weight / f).min(1.0),
            };
            if rng.gen::<f64>() < p {
                break; // first facility on the subsequence; the pre-open window ends
            }
            let (idx, d) = nearest.expect("no open facility implies p = 1");
            cost += d * req.weight;
            state.facilities[idx].load += 1;
        }
        costs.push(cost);
    }
    Ok(mean_stderr(&costs))
}

/// Monte Carlo estimate of the expected cost WRFL pays for a single request
/// at distance `d` from its nearest facility: f with probability
/// min(1, d*w/f), the weighted distance otherwise. Returns (mean, stderr);
/// the expectation is at most 2*d*w.
pub fn property2_mc(d: f64, w: f64, f: f64, trials: usize, seed: u64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let p = (d * w / f).min(1.0);
    let mut rng = rng_from_seed(seed);
    let mut costs = Vec::with_capacity(trials);
    for _ in 0..trials {
        let coin = rng.gen::<f64>();
        costs.push(if coin < p { f } else { d * w });
    }
    Ok(mean_stderr(&costs))
}
