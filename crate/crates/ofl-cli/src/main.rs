//! `ofl`: generate instances, run online algorithms, compute offline optima,
//! study the selection process, and drive seeded experiments.
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 internal error.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use ofl_core::experiment::{run_experiment, write_results, ExperimentConfig};
use ofl_core::instance::{
    gen_congestion_lb_tree, gen_random_clustered, gen_separated_line, gen_weighted_lb_tree,
    secretarial_shuffle, Instance,
};
use ofl_core::offline::{opt_best_single_site, opt_exact, opt_line_dp, opt_lower_bound};
use ofl_core::online::run_online;
use ofl_core::selection::{
    expected_selections_exact, expected_selections_mc, EXACT_ENUMERATION_CAP,
};
use ofl_core::AlgorithmSpec;

#[derive(Parser)]
#[command(name = "ofl", version, about = "Online facility location simulation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance and write it to a JSON file.
    Generate(GenerateArgs),
    /// Run an online algorithm over an instance file.
    Simulate(SimulateArgs),
    /// Compute an offline optimum or bound for an instance file.
    Opt(OptArgs),
    /// Selection-process studies over standard input families.
    Selection(SelectionArgs),
    /// Run an experiment config and write CSV/JSON result tables.
    Experiment(ExperimentArgs),
    /// Validate an instance file and report violations.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[command(subcommand)]
    generator: GeneratorCommand,
}

#[derive(Subcommand)]
enum GeneratorCommand {
    /// Weighted lower-bound path: weight n^i at level i, edge f/n^{i+1}.
    WeightedLbTree {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        f: f64,
        #[arg(long, default_value_t = 0)]
        leaf_seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Shuffle the arrival order with this seed after generating.
        #[arg(long)]
        shuffle_seed: Option<u64>,
    },
    /// Congestion lower-bound path: h^i unit requests at level i.
    CongestionLbTree {
        #[arg(long)]
        h: usize,
        #[arg(long)]
        f: f64,
        /// Congestion exponent p for g(k) = k^p.
        #[arg(long)]
        p: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Unit requests on a line, pairwise at least d apart.
    SeparatedLine {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: f64,
        #[arg(long)]
        f: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        no_jitter: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Clustered planar workload.
    RandomClustered {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        clusters: usize,
        #[arg(long)]
        spread: f64,
        #[arg(long = "box")]
        box_size: f64,
        #[arg(long)]
        f: f64,
        #[arg(long)]
        seed: u64,
        /// Attach congestion g(k) = k^p.
        #[arg(long)]
        congestion_p: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// rfl | wrfl | mrfl | open-everywhere | nearest-only
    #[arg(long)]
    alg: String,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Override MRFL's load cap (derived from the instance by default).
    #[arg(long)]
    k_star: Option<usize>,
    /// Write the per-request event trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Shuffle the arrival order with this seed before running.
    #[arg(long)]
    shuffle_seed: Option<u64>,
}

#[derive(Args)]
struct OptArgs {
    #[arg(long)]
    instance: PathBuf,
    /// auto | exact | line-dp | lower-bound | best-single-site
    #[arg(long, default_value = "auto")]
    method: String,
}

#[derive(Args)]
struct SelectionArgs {
    /// all-ones | block | random-monotone
    #[arg(long)]
    input: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    input_seed: u64,
    #[arg(long)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    /// Also report the exact expectation (n <= 7).
    #[arg(long)]
    exact: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output` field.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (also settable via OFL_WORKERS).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    instance: PathBuf,
}

enum CliError {
    Validation(String),
    Internal(String),
}

impl From<ofl_core::Error> for CliError {
    fn from(e: ofl_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_instance(path: &PathBuf) -> Result<Instance, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    Ok(Instance::from_json(&text)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(args) => generate(args),
        Command::Simulate(args) => simulate(args),
        Command::Opt(args) => opt(args),
        Command::Selection(args) => selection(args),
        Command::Experiment(args) => experiment(args),
        Command::Validate(args) => validate(args),
    }
}

fn generate(args: GenerateArgs) -> Result<(), CliError> {
    let (inst, out) = match args.generator {
        GeneratorCommand::WeightedLbTree {
            n,
            f,
            leaf_seed,
            out,
            shuffle_seed,
        } => {
            let mut inst = gen_weighted_lb_tree(n, f, leaf_seed)?;
            if let Some(seed) = shuffle_seed {
                inst = secretarial_shuffle(&inst, seed);
            }
            (inst, out)
        }
        GeneratorCommand::CongestionLbTree { h, f, p, out } => {
            (gen_congestion_lb_tree(h, f)?.with_congestion(p)?, out)
        }
        GeneratorCommand::SeparatedLine {
            n,
            d,
            f,
            seed,
            no_jitter,
            out,
        } => (gen_separated_line(n, d, f, seed, !no_jitter)?, out),
        GeneratorCommand::RandomClustered {
            n,
            clusters,
            spread,
            box_size,
            f,
            seed,
            congestion_p,
            out,
        } => {
            let mut inst = gen_random_clustered(n, clusters, spread, box_size, f, seed)?;
            if let Some(p) = congestion_p {
                inst = inst.with_congestion(p)?;
            }
            (inst, out)
        }
    };
    std::fs::write(&out, inst.to_json())?;
    println!("{}", out.display());
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let alg = match AlgorithmSpec::from_str(&args.alg)? {
        AlgorithmSpec::Mrfl { .. } => AlgorithmSpec::Mrfl {
            k_star: args.k_star,
        },
        other => other,
    };
    let mut inst = load_instance(&args.instance)?;
    if let Some(seed) = args.shuffle_seed {
        inst = secretarial_shuffle(&inst, seed);
    }
    let (ledger, trace) = run_online(&alg, &inst, args.seed)?;
    if let Some(path) = &args.trace {
        std::fs::write(path, trace.to_jsonl())?;
    }
    let summary = serde_json::json!({
        "algorithm": alg.name(),
        "seed": args.seed,
        "requests": inst.n_requests(),
        "ledger": ledger,
        "total": ledger.total(),
        "facilities_opened": trace.step2_open_count() + trace.step5_open_count(),
        "step2_opens": trace.step2_open_count(),
        "step5_opens": trace.step5_open_count(),
        "max_load": trace.facility_loads().into_iter().max().unwrap_or(0),
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary"));
    Ok(())
}

fn opt(args: OptArgs) -> Result<(), CliError> {
    let inst = load_instance(&args.instance)?;
    let method = args.method.replace('-', "_");
    let output = match method.as_str() {
        "exact" => solution_json(&opt_exact(&inst, None)?),
        "line_dp" => solution_json(&opt_line_dp(&inst)?),
        "best_single_site" => solution_json(&opt_best_single_site(&inst)?),
        "lower_bound" => serde_json::json!({
            "cost": opt_lower_bound(&inst),
            "exactness": "lower_bound",
        }),
        "auto" => {
            let sol = opt_exact(&inst, None)
                .or_else(|_| opt_line_dp(&inst))
                .or_else(|_| opt_best_single_site(&inst))?;
            solution_json(&sol)
        }
        other => {
            return Err(CliError::Validation(format!(
                "unknown opt method '{other}'"
            )))
        }
    };
    println!("{}", serde_json::to_string_pretty(&output).expect("solution"));
    Ok(())
}

fn solution_json(sol: &ofl_core::OfflineSolution) -> serde_json::Value {
    serde_json::json!({
        "cost": sol.cost(),
        "exactness": sol.exactness.to_string(),
        "facilities": sol.facilities,
        "assignment": sol.assignment,
        "ledger": sol.ledger,
    })
}

fn selection(args: SelectionArgs) -> Result<(), CliError> {
    use ofl_core::experiment::SelectionParams;
    let params = match args.input.replace('-', "_").as_str() {
        "all_ones" => SelectionParams::AllOnes { n: args.n },
        "block" => SelectionParams::Block { n: args.n },
        "random_monotone" => SelectionParams::RandomMonotone {
            n: args.n,
            input_seed: args.input_seed,
        },
        other => {
            return Err(CliError::Validation(format!(
                "unknown selection input '{other}'"
            )))
        }
    };
    let input = params.build()?;
    let (mean, stderr) = expected_selections_mc(&input, args.trials, args.seed)?;
    let mut output = serde_json::json!({
        "input": params,
        "trials": args.trials,
        "seed": args.seed,
        "mean_selections": mean,
        "stderr": stderr,
        "monotone": input.monotone,
    });
    if args.exact {
        if args.n > EXACT_ENUMERATION_CAP {
            return Err(CliError::Validation(format!(
                "exact enumeration capped at n <= {EXACT_ENUMERATION_CAP}"
            )));
        }
        output["exact"] = serde_json::json!(expected_selections_exact(&input)?);
    }
    println!("{}", serde_json::to_string_pretty(&output).expect("selection"));
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", args.config.display())))?;
    let config = ExperimentConfig::from_json(&text)?;
    let result = run_experiment(&config, args.workers)?;
    let out_dir = args
        .out
        .or_else(|| config.output.as_ref().map(PathBuf::from))
        .ok_or_else(|| {
            CliError::Validation("no output directory (use --out or the config's `output`)".into())
        })?;
    let (csv_path, json_path) = write_results(&result, &out_dir)?;
    println!("{}", csv_path.display());
    println!("{}", json_path.display());
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.instance)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", args.instance.display())))?;
    match Instance::from_json(&text) {
        Ok(inst) => {
            println!(
                "ok: {} requests on {} points{}",
                inst.n_requests(),
                inst.space.n_points(),
                if inst.has_congestion() {
                    " (congestion)"
                } else {
                    ""
                }
            );
            Ok(())
        }
        Err(e) => Err(CliError::Validation(e.to_string())),
    }
}
