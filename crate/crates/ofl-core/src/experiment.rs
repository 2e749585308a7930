//! Seeded experiment runner: composes generators, algorithms, offline optima
//! and the Selection Process into reproducible experiments and emits
//! machine-readable CSV/JSON result tables.
//!
//! A run is deterministic given (config, master seed): every trial owns a
//! seed derived from (seed, grid point, algorithm, trial), rows are merged in
//! grid-then-algorithm-then-trial order regardless of worker scheduling, and
//! only the runtime-seconds column varies between repeat runs.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::Error;
use crate::instance::{
    gen_congestion_lb_tree, gen_random_clustered, gen_separated_line, gen_weighted_lb_tree,
    secretarial_shuffle, Instance, Request,
};
use crate::metric::{MetricSpace, PointRef};
use crate::offline::{
    max_load, opt_best_single_site, opt_exact, opt_line_dp, opt_lower_bound, Exactness,
    MAX_CANDIDATE_SITES, MAX_CONGESTION_REQUESTS,
};
use crate::online::{
    count_phases, k_star, property1_mc, property2_mc, run_online, AlgorithmSpec, PreOpenConfig,
};
use crate::rng::{derive_seed_path, rng_from_seed, RNG_IDENTITY};
use crate::selection::{
    expected_selections_exact, expected_selections_mc, gen_block_counterexample, SelectionInput,
    EXACT_ENUMERATION_CAP,
};
use crate::stats::{mean_stderr, quantile};
use crate::Result;

/// Instance generator plus parameters, as one grid point of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum GeneratorParams {
    WeightedLbTree {
        n: usize,
        f: f64,
        #[serde(default)]
        leaf_seed: u64,
    },
    CongestionLbTree {
        h: usize,
        f: f64,
        p: f64,
    },
    SeparatedLine {
        n: usize,
        d: f64,
        f: f64,
        #[serde(default = "default_true")]
        jitter: bool,
    },
    RandomClustered {
        n: usize,
        clusters: usize,
        spread: f64,
        #[serde(rename = "box")]
        box_size: f64,
        f: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        congestion_p: Option<f64>,
    },
}

fn default_true() -> bool {
    true
}

impl GeneratorParams {
    pub fn has_congestion(&self) -> bool {
        matches!(self, GeneratorParams::CongestionLbTree { .. })
            || matches!(
                self,
                GeneratorParams::RandomClustered {
                    congestion_p: Some(_),
                    ..
                }
            )
    }

    /// Materializes the instance. `seed` feeds the randomized generators;
    /// the adversarial constructions are functions of their parameters alone.
    pub fn build(&self, seed: u64) -> Result<Instance> {
        match *self {
            GeneratorParams::WeightedLbTree { n, f, leaf_seed } => {
                gen_weighted_lb_tree(n, f, leaf_seed)
            }
            GeneratorParams::CongestionLbTree { h, f, p } => {
                gen_congestion_lb_tree(h, f)?.with_congestion(p)
            }
            GeneratorParams::SeparatedLine { n, d, f, jitter } => {
                gen_separated_line(n, d, f, seed, jitter)
            }
            GeneratorParams::RandomClustered {
                n,
                clusters,
                spread,
                box_size,
                f,
                congestion_p,
            } => {
                let inst = gen_random_clustered(n, clusters, spread, box_size, f, seed)?;
                match congestion_p {
                    Some(p) => inst.with_congestion(p),
                    None => Ok(inst),
                }
            }
        }
    }

    fn label(&self) -> String {
        serde_json::to_string(self).expect("generator params serialize")
    }
}

/// How the ratio denominator is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptMethod {
    /// Exact when within the enumeration caps, then the line DP where it
    /// applies, then a certified bound.
    #[default]
    Auto,
    Exact,
    LineDp,
    LowerBound,
    BestSingleSite,
}

/// One selection-process input family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "input", rename_all = "snake_case")]
pub enum SelectionParams {
    AllOnes { n: usize },
    Block { n: usize },
    RandomMonotone { n: usize, input_seed: u64 },
}

impl SelectionParams {
    pub fn build(&self) -> Result<SelectionInput> {
        match *self {
            SelectionParams::AllOnes { n } => SelectionInput::all_ones(n),
            SelectionParams::Block { n } => gen_block_counterexample(n),
            SelectionParams::RandomMonotone { n, input_seed } => {
                Ok(random_monotone_input(n, input_seed))
            }
        }
    }

    fn label(&self) -> String {
        serde_json::to_string(self).expect("selection params serialize")
    }
}

/// Random column-monotone acceptance matrix: each column is a descending
/// sort of uniform draws.
pub fn random_monotone_input(n: usize, seed: u64) -> SelectionInput {
    let mut rng = rng_from_seed(seed);
    let mut columns: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut column: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            column.sort_by(|a, b| b.total_cmp(a));
            column
        })
        .collect();
    let p: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| std::mem::take(&mut columns[j][i])).collect())
        .collect();
    SelectionInput::new(p).expect("uniform draws form a valid matrix")
}

/// One Monte Carlo property check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "property", rename_all = "snake_case")]
pub enum PropertyParams {
    /// Cost paid before the first facility opens on a randomized
    /// subsequence; bounded by f.
    PreOpenCost { config_seed: u64, m: usize, f: f64 },
    /// Expected cost of one request at distance d with weight w; bounded by
    /// 2 d w.
    PerRequestCost { d: f64, w: f64, f: f64 },
}

impl PropertyParams {
    fn label(&self) -> String {
        serde_json::to_string(self).expect("property params serialize")
    }
}

/// Randomized setting for the pre-open cost property: a line space holding a
/// pre-opened facility, `m` weighted requests, and a facility injected
/// midway to exercise the interleaved-openings clause.
pub fn random_pre_open_config(m: usize, f: f64, seed: u64) -> PreOpenConfig {
    let mut rng = rng_from_seed(seed);
    let mut coords = vec![0.0f64];
    let mut requests = Vec::with_capacity(m);
    for i in 0..m {
        coords.push(rng.gen_range(-3.0 * f..3.0 * f));
        requests.push(Request {
            location: PointRef(i + 1),
            weight: rng.gen_range(0.1..4.0),
        });
    }
    coords.push(rng.gen_range(-3.0 * f..3.0 * f));
    let injected_location = PointRef(coords.len() - 1);
    let injected = if m > 1 {
        vec![(m / 2, injected_location)]
    } else {
        Vec::new()
    };
    PreOpenConfig {
        space: MetricSpace::Line { coords },
        subsequence: requests,
        pre_opened: vec![PointRef(0)],
        injected,
    }
}

/// Random congestion micro-instance for offline verification sweeps:
/// up to `max_n` unit requests at uniform positions in a square whose side
/// scales with f, so single- and multi-facility optima both occur.
pub fn gen_congestion_micro(
    max_n: usize,
    f_min: f64,
    f_max: f64,
    exponents: &[f64],
    seed: u64,
) -> Result<Instance> {
    let mut rng = rng_from_seed(seed);
    let n = rng.gen_range(1..=max_n);
    let f = rng.gen_range(f_min..=f_max);
    let p = exponents[rng.gen_range(0..exponents.len())];
    let span = f * rng.gen_range(0.05..2.0);
    let coords: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.gen_range(0.0..=span), rng.gen_range(0.0..=span)])
        .collect();
    let inst = Instance {
        space: MetricSpace::Euclidean { dim: 2, coords },
        requests: (0..n).map(|i| Request::unit(PointRef(i))).collect(),
        f,
        congestion: None,
        metadata: Default::default(),
    };
    inst.with_congestion(p)
}

/// What to run: the experiment kind with its own payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Online cost / offline denominator across a generator grid.
    RatioSweep {
        grid: Vec<GeneratorParams>,
        algorithms: Vec<AlgorithmSpec>,
        #[serde(default)]
        secretarial: bool,
        #[serde(default)]
        opt: OptMethod,
    },
    /// WRFL phase counts for the deepest-node cluster of lower-bound trees,
    /// under secretarial arrival.
    PhaseCount { grid: Vec<GeneratorParams> },
    /// Expected selections for selection-process input families.
    SelectionStudy { grid: Vec<SelectionParams> },
    /// Monte Carlo checks of the per-subsequence and per-request cost bounds.
    PropertyCheck { checks: Vec<PropertyParams> },
    /// Exact offline optima of random congestion micro-instances, reporting
    /// max facility load against k*.
    OptVerify {
        cases: usize,
        max_n: usize,
        f_min: f64,
        f_max: f64,
        exponents: Vec<f64>,
    },
}

/// A full experiment: kind payload plus trials, master seed and output path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub kind: ExperimentKind,
    pub trials: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        match &self.kind {
            ExperimentKind::RatioSweep {
                grid, algorithms, ..
            } => {
                if grid.is_empty() || algorithms.is_empty() {
                    return Err(Error::Config(
                        "ratio_sweep needs a nonempty grid and algorithm list".into(),
                    ));
                }
                for gen in grid {
                    for alg in algorithms {
                        let congestion = gen.has_congestion();
                        let valid = match alg {
                            AlgorithmSpec::Mrfl { .. } => congestion,
                            AlgorithmSpec::Rfl | AlgorithmSpec::Wrfl => !congestion,
                            _ => true,
                        };
                        if !valid {
                            return Err(Error::Config(format!(
                                "algorithm {} cannot run on generator {}",
                                alg.name(),
                                gen.label()
                            )));
                        }
                    }
                }
            }
            ExperimentKind::PhaseCount { grid } => {
                if grid.is_empty() {
                    return Err(Error::Config("phase_count needs a nonempty grid".into()));
                }
                if grid
                    .iter()
                    .any(|g| !matches!(g, GeneratorParams::WeightedLbTree { .. }))
                {
                    return Err(Error::Config(
                        "phase_count runs on weighted_lb_tree grid points".into(),
                    ));
                }
            }
            ExperimentKind::SelectionStudy { grid } => {
                if grid.is_empty() {
                    return Err(Error::Config(
                        "selection_study needs a nonempty grid".into(),
                    ));
                }
                for point in grid {
                    point.build()?;
                }
            }
            ExperimentKind::PropertyCheck { checks } => {
                if checks.is_empty() {
                    return Err(Error::Config(
                        "property_check needs at least one check".into(),
                    ));
                }
                for check in checks {
                    match *check {
                        PropertyParams::PreOpenCost { m, f, .. } => {
                            if m == 0 || !(f > 0.0) {
                                return Err(Error::Config(
                                    "pre_open_cost needs m >= 1 and f > 0".into(),
                                ));
                            }
                        }
                        PropertyParams::PerRequestCost { d, w, f } => {
                            if d < 0.0 || !(w > 0.0) || !(f > 0.0) {
                                return Err(Error::Config(
                                    "per_request_cost needs d >= 0, w > 0, f > 0".into(),
                                ));
                            }
                        }
                    }
                }
            }
            ExperimentKind::OptVerify {
                cases,
                max_n,
                f_min,
                f_max,
                exponents,
            } => {
                if *cases == 0 || *max_n == 0 {
                    return Err(Error::Config("opt_verify needs cases >= 1, max_n >= 1".into()));
                }
                if *max_n > MAX_CANDIDATE_SITES {
                    return Err(Error::SizeCap {
                        what: "opt_verify max_n",
                        got: *max_n,
                        cap: MAX_CANDIDATE_SITES,
                    });
                }
                if !(f_min > &0.0) || f_max < f_min {
                    return Err(Error::Config("opt_verify needs 0 < f_min <= f_max".into()));
                }
                if exponents.is_empty() || exponents.iter().any(|p| !(*p > 1.0)) {
                    return Err(Error::Config(
                        "opt_verify exponents must be > 1 and nonempty".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Content hash of the canonicalized (key-sorted, compact) document.
    pub fn content_hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

/// One aggregate row of the result table. Fields not applicable to the
/// experiment kind stay empty; `runtime_seconds` is informational and
/// excluded from determinism guarantees.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub kind: String,
    pub grid: String,
    pub algorithm: Option<String>,
    pub trials: usize,
    pub opt_value: Option<f64>,
    pub opt_exactness: Option<String>,
    pub ratio_mean: Option<f64>,
    pub ratio_stderr: Option<f64>,
    pub ratio_min: Option<f64>,
    pub ratio_max: Option<f64>,
    pub ratio_q95: Option<f64>,
    pub mean_total: Option<f64>,
    pub mean_open: Option<f64>,
    pub mean_distance: Option<f64>,
    pub mean_congestion: Option<f64>,
    pub mean_phases: Option<f64>,
    pub max_load: Option<usize>,
    pub k_star: Option<usize>,
    pub step5_opens_max: Option<usize>,
    pub selection_mean: Option<f64>,
    pub selection_stderr: Option<f64>,
    pub selection_exact: Option<f64>,
    pub property_mean: Option<f64>,
    pub property_stderr: Option<f64>,
    pub property_bound: Option<f64>,
    pub error: Option<String>,
    pub runtime_seconds: f64,
}

impl ResultRow {
    fn empty(kind: &str, grid: String, trials: usize) -> Self {
        ResultRow {
            kind: kind.to_string(),
            grid,
            algorithm: None,
            trials,
            opt_value: None,
            opt_exactness: None,
            ratio_mean: None,
            ratio_stderr: None,
            ratio_min: None,
            ratio_max: None,
            ratio_q95: None,
            mean_total: None,
            mean_open: None,
            mean_distance: None,
            mean_congestion: None,
            mean_phases: None,
            max_load: None,
            k_star: None,
            step5_opens_max: None,
            selection_mean: None,
            selection_stderr: None,
            selection_exact: None,
            property_mean: None,
            property_stderr: None,
            property_bound: None,
            error: None,
            runtime_seconds: 0.0,
        }
    }
}

/// Run provenance recorded next to the rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultMetadata {
    pub version: String,
    pub config_hash: String,
    pub rng: String,
    pub seed: u64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub metadata: ResultMetadata,
    pub rows: Vec<ResultRow>,
}

fn resolve_opt(inst: &Instance, method: OptMethod) -> Result<(f64, Exactness)> {
    let within_exact_caps = inst.space.n_points() <= MAX_CANDIDATE_SITES
        && (!inst.has_congestion() || inst.n_requests() <= MAX_CONGESTION_REQUESTS);
    let line_dp_applies = matches!(inst.space, MetricSpace::Line { .. })
        && !inst.has_congestion()
        && inst.requests.iter().all(|r| r.weight == 1.0);
    match method {
        OptMethod::Exact => opt_exact(inst, None).map(|s| (s.cost(), s.exactness)),
        OptMethod::LineDp => opt_line_dp(inst).map(|s| (s.cost(), s.exactness)),
        OptMethod::LowerBound => Ok((opt_lower_bound(inst), Exactness::LowerBound)),
        OptMethod::BestSingleSite => opt_best_single_site(inst).map(|s| (s.cost(), s.exactness)),
        OptMethod::Auto => {
            if within_exact_caps {
                opt_exact(inst, None).map(|s| (s.cost(), s.exactness))
            } else if line_dp_applies {
                opt_line_dp(inst).map(|s| (s.cost(), s.exactness))
            } else if inst.has_congestion() {
                Ok((opt_lower_bound(inst), Exactness::LowerBound))
            } else {
                opt_best_single_site(inst).map(|s| (s.cost(), s.exactness))
            }
        }
    }
}

struct TrialOutcome {
    total: f64,
    open: f64,
    distance: f64,
    congestion: f64,
    max_load: usize,
    step5: usize,
    phases: Option<usize>,
}

/// Worker-count override: explicit argument, then the OFL_WORKERS
/// environment variable, then one thread per core.
pub fn resolve_workers(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| {
            std::env::var("OFL_WORKERS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .filter(|&w| w > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Executes every grid point of the experiment. Partial failures (such as an
/// optimum cap exceeded at one grid point) land in that row's `error` column
/// and the run continues.
pub fn run_experiment(
    config: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<ExperimentResult> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_workers(workers))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let rows = pool.install(|| run_rows(config))?;
    Ok(ExperimentResult {
        metadata: ResultMetadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.content_hash(),
            rng: RNG_IDENTITY.to_string(),
            seed: config.seed,
            trials: config.trials,
        },
        rows,
    })
}

fn run_rows(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let trials = config.trials;
    let seed = config.seed;
    match &config.kind {
        ExperimentKind::RatioSweep {
            grid,
            algorithms,
            secretarial,
            opt,
        } => {
            let mut rows = Vec::new();
            for (gi, gen) in grid.iter().enumerate() {
                let started = Instant::now();
                let inst = match gen.build(derive_seed_path(seed, &[gi as u64, 0])) {
                    Ok(inst) => inst,
                    Err(e) => {
                        let mut row = ResultRow::empty("ratio_sweep", gen.label(), trials);
                        row.error = Some(e.to_string());
                        row.runtime_seconds = started.elapsed().as_secs_f64();
                        rows.push(row);
                        continue;
                    }
                };
                let denominator = resolve_opt(&inst, *opt);
                for (ai, alg) in algorithms.iter().enumerate() {
                    let started = Instant::now();
                    let mut row = ResultRow::empty("ratio_sweep", gen.label(), trials);
                    row.algorithm = Some(alg.name().to_string());
                    match &denominator {
                        Ok((value, exactness)) => {
                            row.opt_value = Some(*value);
                            row.opt_exactness = Some(exactness.to_string());
                            match ratio_trials(&inst, alg, *secretarial, trials, seed, gi, ai, false)
                            {
                                Ok(outcomes) => fill_ratio_row(&mut row, &outcomes, &inst),
                                Err(e) => row.error = Some(e.to_string()),
                            }
                        }
                        Err(e) => row.error = Some(e.to_string()),
                    }
                    row.runtime_seconds = started.elapsed().as_secs_f64();
                    rows.push(row);
                }
            }
            Ok(rows)
        }
        ExperimentKind::PhaseCount { grid } => {
            let mut rows = Vec::new();
            for (gi, gen) in grid.iter().enumerate() {
                let started = Instant::now();
                let mut row = ResultRow::empty("phase_count", gen.label(), trials);
                row.algorithm = Some("wrfl".to_string());
                let outcome = (|| -> Result<()> {
                    let inst = gen.build(derive_seed_path(seed, &[gi as u64, 0]))?;
                    let single = opt_best_single_site(&inst)?;
                    row.opt_value = Some(single.cost());
                    row.opt_exactness = Some(single.exactness.to_string());
                    let outcomes =
                        ratio_trials(&inst, &AlgorithmSpec::Wrfl, true, trials, seed, gi, 0, true)?;
                    fill_ratio_row(&mut row, &outcomes, &inst);
                    Ok(())
                })();
                if let Err(e) = outcome {
                    row.error = Some(e.to_string());
                }
                row.runtime_seconds = started.elapsed().as_secs_f64();
                rows.push(row);
            }
            Ok(rows)
        }
        ExperimentKind::SelectionStudy { grid } => {
            let mut rows = Vec::new();
            for (gi, point) in grid.iter().enumerate() {
                let started = Instant::now();
                let mut row = ResultRow::empty("selection_study", point.label(), trials);
                let outcome = (|| -> Result<()> {
                    let input = point.build()?;
                    let (mean, stderr) = expected_selections_mc(
                        &input,
                        trials,
                        derive_seed_path(seed, &[gi as u64, 1]),
                    )?;
                    row.selection_mean = Some(mean);
                    row.selection_stderr = Some(stderr);
                    if input.n <= EXACT_ENUMERATION_CAP {
                        row.selection_exact = Some(expected_selections_exact(&input)?);
                    }
                    Ok(())
                })();
                if let Err(e) = outcome {
                    row.error = Some(e.to_string());
                }
                row.runtime_seconds = started.elapsed().as_secs_f64();
                rows.push(row);
            }
            Ok(rows)
        }
        ExperimentKind::PropertyCheck { checks } => {
            let mut rows = Vec::new();
            for (ci, check) in checks.iter().enumerate() {
                let started = Instant::now();
                let mut row = ResultRow::empty("property_check", check.label(), trials);
                let outcome = (|| -> Result<()> {
                    let trial_seed = derive_seed_path(seed, &[ci as u64, 1]);
                    match *check {
                        PropertyParams::PreOpenCost { config_seed, m, f } => {
                            let cfg = random_pre_open_config(m, f, config_seed);
                            let (mean, stderr) = property1_mc(&cfg, f, trials, trial_seed)?;
                            row.property_mean = Some(mean);
                            row.property_stderr = Some(stderr);
                            row.property_bound = Some(f);
                        }
                        PropertyParams::PerRequestCost { d, w, f } => {
                            let (mean, stderr) = property2_mc(d, w, f, trials, trial_seed)?;
                            row.property_mean = Some(mean);
                            row.property_stderr = Some(stderr);
                            row.property_bound = Some(2.0 * d * w);
                        }
                    }
                    Ok(())
                })();
                if let Err(e) = outcome {
                    row.error = Some(e.to_string());
                }
                row.runtime_seconds = started.elapsed().as_secs_f64();
                rows.push(row);
            }
            Ok(rows)
        }
        ExperimentKind::OptVerify {
            cases,
            max_n,
            f_min,
            f_max,
            exponents,
        } => {
            let mut rows = Vec::new();
            for case in 0..*cases {
                let started = Instant::now();
                let case_seed = derive_seed_path(seed, &[case as u64, 0]);
                let mut row = ResultRow::empty(
                    "opt_verify",
                    format!("{{\"case\":{case},\"seed\":{case_seed}}}"),
                    1,
                );
                let outcome = (|| -> Result<()> {
                    let inst = gen_congestion_micro(*max_n, *f_min, *f_max, exponents, case_seed)?;
                    let sol = opt_exact(&inst, None)?;
                    row.opt_value = Some(sol.cost());
                    row.opt_exactness = Some(sol.exactness.to_string());
                    row.max_load = Some(max_load(&sol));
                    row.k_star = Some(k_star(inst.f, inst.congestion.as_ref().unwrap()));
                    Ok(())
                })();
                if let Err(e) = outcome {
                    row.error = Some(e.to_string());
                }
                row.runtime_seconds = started.elapsed().as_secs_f64();
                rows.push(row);
            }
            Ok(rows)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn ratio_trials(
    inst: &Instance,
    alg: &AlgorithmSpec,
    secretarial: bool,
    trials: usize,
    seed: u64,
    grid_index: usize,
    alg_index: usize,
    phases: bool,
) -> Result<Vec<TrialOutcome>> {
    use rayon::prelude::*;
    let cluster: Vec<usize> = (0..inst.n_requests()).collect();
    let deepest = PointRef(inst.space.n_points().saturating_sub(1));
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let path = [grid_index as u64, alg_index as u64, t as u64];
            let run_seed = derive_seed_path(seed, &[path[0], path[1], path[2], 2]);
            let shuffled;
            let run_inst = if secretarial {
                shuffled = secretarial_shuffle(
                    inst,
                    derive_seed_path(seed, &[path[0], path[1], path[2], 1]),
                );
                &shuffled
            } else {
                inst
            };
            let (ledger, trace) = run_online(alg, run_inst, run_seed)?;
            let phase_count = if phases {
                Some(count_phases(&trace, &cluster, deepest, &run_inst.space)?)
            } else {
                None
            };
            Ok(TrialOutcome {
                total: ledger.total(),
                open: ledger.facility_open_cost,
                distance: ledger.distance_cost,
                congestion: ledger.congestion_cost,
                max_load: trace.facility_loads().into_iter().max().unwrap_or(0),
                step5: trace.step5_open_count(),
                phases: phase_count,
            })
        })
        .collect()
}

fn fill_ratio_row(row: &mut ResultRow, outcomes: &[TrialOutcome], inst: &Instance) {
    let opt_value = row.opt_value.expect("denominator resolved");
    let ratios: Vec<f64> = outcomes.iter().map(|o| o.total / opt_value).collect();
    let (ratio_mean, ratio_stderr) = mean_stderr(&ratios);
    row.ratio_mean = Some(ratio_mean);
    row.ratio_stderr = Some(ratio_stderr);
    row.ratio_min = Some(ratios.iter().copied().fold(f64::INFINITY, f64::min));
    row.ratio_max = Some(ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    row.ratio_q95 = Some(quantile(&ratios, 0.95));
    let mean_of = |sel: fn(&TrialOutcome) -> f64| {
        let values: Vec<f64> = outcomes.iter().map(sel).collect();
        mean_stderr(&values).0
    };
    row.mean_total = Some(mean_of(|o| o.total));
    row.mean_open = Some(mean_of(|o| o.open));
    row.mean_distance = Some(mean_of(|o| o.distance));
    row.mean_congestion = Some(mean_of(|o| o.congestion));
    row.max_load = outcomes.iter().map(|o| o.max_load).max();
    row.step5_opens_max = outcomes.iter().map(|o| o.step5).max();
    if outcomes.iter().any(|o| o.phases.is_some()) {
        let phase_values: Vec<f64> = outcomes
            .iter()
            .filter_map(|o| o.phases.map(|p| p as f64))
            .collect();
        row.mean_phases = Some(mean_stderr(&phase_values).0);
    }
    if let Some(g) = &inst.congestion {
        row.k_star = Some(k_star(inst.f, g));
    }
}

/// Formats a real with 12 significant digits for the CSV table.
fn fmt_real(x: f64) -> String {
    if x == 0.0 {
        return "0.0".to_string();
    }
    format!("{x:.11e}")
}

fn csv_opt_real(x: Option<f64>) -> String {
    x.map(fmt_real).unwrap_or_default()
}

fn csv_opt_usize(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `results.csv` and `results.json` under `dir` (created if needed).
/// Returns the two paths. Repeat runs with the same config and seed produce
/// identical files except for the runtime-seconds column.
pub fn write_results(result: &ExperimentResult, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join("results.csv");
    let json_path = dir.join("results.json");

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record([
            "kind",
            "grid",
            "algorithm",
            "trials",
            "opt_value",
            "opt_exactness",
            "ratio_mean",
            "ratio_stderr",
            "ratio_min",
            "ratio_max",
            "ratio_q95",
            "mean_total",
            "mean_open",
            "mean_distance",
            "mean_congestion",
            "mean_phases",
            "max_load",
            "k_star",
            "step5_opens_max",
            "selection_mean",
            "selection_stderr",
            "selection_exact",
            "property_mean",
            "property_stderr",
            "property_bound",
            "error",
            "runtime_seconds",
        ])
        .map_err(|e| Error::Config(format!("csv: {e}")))?;
    for row in &result.rows {
        writer
            .write_record([
                row.kind.clone(),
                row.grid.clone(),
                row.algorithm.clone().unwrap_or_default(),
                row.trials.to_string(),
                csv_opt_real(row.opt_value),
                row.opt_exactness.clone().unwrap_or_default(),
                csv_opt_real(row.ratio_mean),
                csv_opt_real(row.ratio_stderr),
                csv_opt_real(row.ratio_min),
                csv_opt_real(row.ratio_max),
                csv_opt_real(row.ratio_q95),
                csv_opt_real(row.mean_total),
                csv_opt_real(row.mean_open),
                csv_opt_real(row.mean_distance),
                csv_opt_real(row.mean_congestion),
                csv_opt_real(row.mean_phases),
                csv_opt_usize(row.max_load),
                csv_opt_usize(row.k_star),
                csv_opt_usize(row.step5_opens_max),
                csv_opt_real(row.selection_mean),
                csv_opt_real(row.selection_stderr),
                csv_opt_real(row.selection_exact),
                csv_opt_real(row.property_mean),
                csv_opt_real(row.property_stderr),
                csv_opt_real(row.property_bound),
                row.error.clone().unwrap_or_default(),
                format!("{:.6}", row.runtime_seconds),
            ])
            .map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    // Metadata travels as comment lines ahead of the header.
    let meta = &result.metadata;
    let header = format!(
        "# version={} config_hash={} rng={} seed={} trials={}\n",
        meta.version, meta.config_hash, meta.rng, meta.seed, meta.trials
    );
    let body = writer
        .into_inner()
        .map_err(|e| Error::Config(format!("csv: {e}")))?;
    let mut csv_bytes = header.into_bytes();
    csv_bytes.extend_from_slice(&body);
    std::fs::write(&csv_path, csv_bytes)?;

    let mut json = serde_json::to_string_pretty(result).expect("result serializes");
    json.push('\n');
    std::fs::write(&json_path, json)?;
    Ok((csv_path, json_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_ratio_config() -> ExperimentConfig {
        ExperimentConfig {
            kind: ExperimentKind::RatioSweep {
                grid: vec![
                    GeneratorParams::WeightedLbTree {
                        n: 4,
                        f: 16.0,
                        leaf_seed: 0,
                    },
                    GeneratorParams::WeightedLbTree {
                        n: 8,
                        f: 16.0,
                        leaf_seed: 0,
                    },
                ],
                algorithms: vec![AlgorithmSpec::Wrfl, AlgorithmSpec::OpenEverywhere],
                secretarial: true,
                opt: OptMethod::Auto,
            },
            trials: 16,
            seed: 42,
            output: None,
        }
    }

    #[test]
    fn ratio_sweep_produces_tagged_rows() {
        let result = run_experiment(&tiny_ratio_config(), Some(2)).unwrap();
        assert_eq!(result.rows.len(), 4);
        for row in &result.rows {
            assert!(row.error.is_none(), "{:?}", row.error);
            assert_eq!(row.opt_exactness.as_deref(), Some("exact"));
            assert!(row.ratio_mean.unwrap() >= 1.0 - 1e-12);
        }
        assert_eq!(result.metadata.rng, "chacha8");
        assert_eq!(result.metadata.config_hash.len(), 64);
    }

    #[test]
    fn runs_are_deterministic_modulo_runtime() {
        let config = tiny_ratio_config();
        let mut a = run_experiment(&config, Some(1)).unwrap();
        let mut b = run_experiment(&config, Some(4)).unwrap();
        for row in a.rows.iter_mut().chain(b.rows.iter_mut()) {
            row.runtime_seconds = 0.0;
        }
        assert_eq!(a, b);
    }

    #[test]
    fn csv_bodies_are_byte_identical_for_fixed_seed() {
        let mut config = tiny_ratio_config();
        config.trials = 1;
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let result_a = run_experiment(&config, Some(3)).unwrap();
        let result_b = run_experiment(&config, Some(1)).unwrap();
        let (csv_a, _) = write_results(&result_a, dir_a.path()).unwrap();
        let (csv_b, _) = write_results(&result_b, dir_b.path()).unwrap();
        let strip = |path: &std::path::Path| -> Vec<String> {
            std::fs::read_to_string(path)
                .unwrap()
                .lines()
                .map(|line| {
                    // Drop the trailing runtime-seconds column.
                    match line.rfind(',') {
                        Some(pos) => line[..pos].to_string(),
                        None => line.to_string(),
                    }
                })
                .collect()
        };
        assert_eq!(strip(&csv_a), strip(&csv_b));
    }

    #[test]
    fn config_round_trips_and_validates() {
        let text = r#"{
            "kind": "ratio_sweep",
            "grid": [{"generator": "separated_line", "n": 10, "d": 1.0, "f": 16.0}],
            "algorithms": [{"alg": "rfl"}],
            "secretarial": false,
            "opt": "line_dp",
            "trials": 3,
            "seed": 9
        }"#;
        let config = ExperimentConfig::from_json(text).unwrap();
        let round = ExperimentConfig::from_json(&serde_json::to_string(&config).unwrap()).unwrap();
        assert_eq!(config, round);
        let result = run_experiment(&config, Some(1)).unwrap();
        assert_eq!(result.rows.len(), 1);
        assert!(result.rows[0].error.is_none());
        assert_eq!(result.rows[0].opt_exactness.as_deref(), Some("exact"));
    }

    #[test]
    fn invalid_pairings_are_rejected_before_any_work() {
        let config = ExperimentConfig {
            kind: ExperimentKind::RatioSweep {
                grid: vec![GeneratorParams::WeightedLbTree {
                    n: 4,
                    f: 1.0,
                    leaf_seed: 0,
                }],
                algorithms: vec![AlgorithmSpec::Mrfl { k_star: None }],
                secretarial: false,
                opt: OptMethod::Auto,
            },
            trials: 1,
            seed: 0,
            output: None,
        };
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn partial_failures_are_recorded_per_row() {
        // Second grid point exceeds the exact enumeration cap; its row
        // carries the error while the first row succeeds.
        let config = ExperimentConfig {
            kind: ExperimentKind::RatioSweep {
                grid: vec![
                    GeneratorParams::SeparatedLine {
                        n: 6,
                        d: 1.0,
                        f: 4.0,
                        jitter: false,
                    },
                    GeneratorParams::SeparatedLine {
                        n: 40,
                        d: 1.0,
                        f: 4.0,
                        jitter: false,
                    },
                ],
                algorithms: vec![AlgorithmSpec::Rfl],
                secretarial: false,
                opt: OptMethod::Exact,
            },
            trials: 2,
            seed: 1,
            output: None,
        };
        let result = run_experiment(&config, Some(1)).unwrap();
        assert!(result.rows[0].error.is_none());
        assert!(result.rows[1].error.as_deref().unwrap().contains("cap"));
    }

    #[test]
    fn selection_study_reports_exact_for_small_n() {
        let config = ExperimentConfig {
            kind: ExperimentKind::SelectionStudy {
                grid: vec![
                    SelectionParams::AllOnes { n: 5 },
                    SelectionParams::Block { n: 16 },
                ],
            },
            trials: 2000,
            seed: 4,
            output: None,
        };
        let result = run_experiment(&config, Some(2)).unwrap();
        let all_ones = &result.rows[0];
        assert!(all_ones.selection_exact.is_some());
        let exact = all_ones.selection_exact.unwrap();
        let mean = all_ones.selection_mean.unwrap();
        let stderr = all_ones.selection_stderr.unwrap();
        assert!((mean - exact).abs() <= 4.0 * stderr.max(1e-3));
        assert!(result.rows[1].selection_exact.is_none());
    }

    #[test]
    fn opt_verify_rows_carry_load_and_cap() {
        let config = ExperimentConfig {
            kind: ExperimentKind::OptVerify {
                cases: 9,
                max_n: 6,
                f_min: 1.0,
                f_max: 30.0,
                exponents: vec![2.0, 3.0],
            },
            trials: 1,
            seed: 6,
            output: None,
        };
        let result = run_experiment(&config, Some(2)).unwrap();
        assert_eq!(result.rows.len(), 9);
        for row in &result.rows {
            assert!(row.error.is_none(), "{:?}", row.error);
            assert!(row.max_load.is_some());
            assert!(row.k_star.is_some());
            assert!(row.max_load.unwrap() <= row.k_star.unwrap() + 1);
        }
    }

    #[test]
    fn property_check_rows_respect_bounds() {
        let config = ExperimentConfig {
            kind: ExperimentKind::PropertyCheck {
                checks: vec![
                    PropertyParams::PreOpenCost {
                        config_seed: 3,
                        m: 5,
                        f: 2.0,
                    },
                    PropertyParams::PerRequestCost {
                        d: 1.0,
                        w: 1.0,
                        f: 4.0,
                    },
                ],
            },
            trials: 20_000,
            seed: 8,
            output: None,
        };
        let result = run_experiment(&config, Some(2)).unwrap();
        for row in &result.rows {
            let mean = row.property_mean.unwrap();
            let stderr = row.property_stderr.unwrap();
            let bound = row.property_bound.unwrap();
            assert!(mean <= bound + 3.0 * stderr, "{mean} vs {bound}");
        }
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(fmt_real(5.187377517639621), "5.18737751764e0");
        assert_eq!(fmt_real(0.0), "0.0");
        assert_eq!(fmt_real(-12.25), "-1.22500000000e1");
    }
}
