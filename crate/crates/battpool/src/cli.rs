use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use battpool_core::battery::{exact_stationary, simulate_chain, simulate_trace};
use battpool_core::chain::{drift, product_chain, validate, UserModel};
use battpool_core::fit::{fit_dtmc, Binning, FitOptions, DEFAULT_BINS};
use battpool_core::ldp::decay_rate_bound;
use battpool_core::sizing::{min_battery_chain, min_battery_trace, ChainLolp};
use battpool_core::study::DEFAULT_EPSILONS;
use battpool_core::trace::{constant_demand, mj_to_mwh, net_generation, TraceSeries};
use battpool_core::{DEFAULT_SOLVER_CAP, DEFAULT_STATE_CAP};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::config::{Format, StudyConfig};
use crate::error::{CliError, Result};
use crate::io::{self, TraceOptions};
use crate::report::{StudyReport, SCHEMA, VERSION};
use crate::study::{run_study, write_report};

/// Default output directory when neither a flag nor a config sets one.
pub const OUT_DIR_ENV: &str = "BATTPOOL_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "battpool",
    version,
    about = "Shared-battery LOLP, decay-rate and sizing studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct TraceArgs {
    /// Declared sampling interval of trace CSVs.
    #[arg(long, default_value_t = battpool_core::trace::DEFAULT_CADENCE_SECS)]
    cadence_seconds: u32,
    /// Fill missing samples with the previous value.
    #[arg(long)]
    forward_fill: bool,
}

impl McArgs {
    fn burn_in(&self) -> u64 {
        self.burn_in.unwrap_or(self.steps / 10)
    }
}

impl TraceArgs {
    fn options(&self) -> TraceOptions {
        TraceOptions {
            cadence_secs: self.cadence_seconds,
            forward_fill: self.forward_fill,
        }
    }
}

#[derive(Debug, Args)]
struct DemandArgs {
    /// Constant demand as a fraction of mean generation.
    #[arg(long, default_value_t = battpool_core::trace::DEFAULT_DEMAND_FRACTION, conflicts_with = "net")]
    demand_fraction: f64,
    /// The trace already is net generation.
    #[arg(long)]
    net: bool,
}

#[derive(Debug, Args)]
struct McArgs {
    #[arg(long, default_value_t = 10_000_000)]
    steps: u64,
    /// Steps discarded before counting; defaults to a tenth of `--steps`.
    #[arg(long)]
    burn_in: Option<u64>,
    /// Required when the CI environment variable is set.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SizeMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a chain spec against the model assumptions.
    Validate {
        #[arg(long)]
        chain: PathBuf,
    },
    /// Fit a Markov user model to a power trace.
    Fit {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BINS, conflicts_with_all = ["edges", "distinct"])]
        bins: usize,
        /// Explicit bin edges in MJ per step.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        edges: Vec<f64>,
        /// One state per distinct sample value.
        #[arg(long)]
        distinct: bool,
        /// MJ per integer reward unit; defaults to the demand per step.
        #[arg(long)]
        granularity: Option<f64>,
        /// Additive smoothing on transition counts.
        #[arg(long, default_value_t = 0.0)]
        smoothing: f64,
        #[command(flatten)]
        demand: DemandArgs,
        #[command(flatten)]
        trace_args: TraceArgs,
        /// Chain-spec output; a `.meta.json` sidecar is written next to it.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Decay rate of one chain, or of the product of several.
    Decay {
        #[arg(long, num_args = 1.., required = true)]
        chain: Vec<PathBuf>,
        /// Targets for the `log(1/ε)/λ` battery estimates.
        #[arg(long, num_args = 1.., default_values_t = DEFAULT_EPSILONS)]
        eps: Vec<f64>,
    },
    /// Exact stationary LOLP for an integer capacity.
    LolpExact {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        capacity: u64,
        #[arg(long, default_value_t = DEFAULT_SOLVER_CAP)]
        solver_cap: usize,
    },
    /// Monte Carlo LOLP with batch-means confidence interval.
    LolpMc {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        capacity: u64,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Drive a battery with a trace and write the occupancy path.
    Simulate {
        #[arg(long)]
        trace: PathBuf,
        /// Capacity in MJ.
        #[arg(long)]
        capacity: f64,
        /// Initial occupancy in MJ.
        #[arg(long, default_value_t = 0.0)]
        initial: f64,
        #[command(flatten)]
        demand: DemandArgs,
        #[command(flatten)]
        trace_args: TraceArgs,
        /// Occupancy CSV; standard output when absent.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Smallest battery meeting a LOLP target.
    Size {
        #[arg(long, required_unless_present = "trace", conflicts_with = "trace")]
        chain: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_enum, default_value_t = SizeMethod::Exact)]
        method: SizeMethod,
        #[command(flatten)]
        mc: McArgs,
        /// Battery grid spacing for traces, in MJ; defaults to the demand per step.
        #[arg(long)]
        resolution: Option<f64>,
        #[command(flatten)]
        demand: DemandArgs,
        #[command(flatten)]
        trace_args: TraceArgs,
    },
    /// Worst-case battery requirement against the number of locations.
    Study {
        /// JSON study configuration; flags override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, num_args = 1..)]
        traces: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        chains: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        eps: Vec<f64>,
        #[arg(long, conflicts_with = "net")]
        demand_fraction: Option<f64>,
        /// Traces already are net generation.
        #[arg(long)]
        net: bool,
        #[arg(long)]
        delta_b: Option<f64>,
        #[arg(long)]
        subset_cap: Option<u64>,
        /// Required with chain inputs when the CI environment variable is set.
        #[arg(long)]
        seed: Option<u64>,
        /// Samples drawn per chain.
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, value_enum, num_args = 1..)]
        format: Vec<Format>,
        #[arg(long)]
        cadence_seconds: Option<u32>,
        #[arg(long)]
        forward_fill: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Describe or re-emit study outputs.
    Report {
        /// Print the output column documentation.
        #[arg(long, required_unless_present = "input")]
        schema: bool,
        /// A study JSON to re-emit.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

pub fn ci_mode() -> bool {
    std::env::var("CI").is_ok_and(|v| !matches!(v.trim(), "" | "0" | "false"))
}

fn require_seed(seed: Option<u64>) -> Result<u64> {
    match seed {
        Some(s) => Ok(s),
        None if ci_mode() => Err(CliError::Usage(
            "--seed is required for Monte Carlo runs when CI is set".into(),
        )),
        None => {
            log::warn!("no --seed given; using 0");
            Ok(0)
        }
    }
}

fn out_dir(flag: Option<PathBuf>, config: Option<PathBuf>) -> PathBuf {
    flag.or(config)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn print_json(value: &Value) {
    let mut out = std::io::stdout().lock();
    let _ = serde_json::to_writer_pretty(&mut out, value);
    let _ = writeln!(out);
}

fn load_model(path: &Path) -> Result<UserModel> {
    Ok(UserModel::from_raw(io::read_chain(path)?)?)
}

/// Energy-per-step net generation and the per-step demand that produced it.
fn load_net(
    path: &Path,
    demand: &DemandArgs,
    trace_args: &TraceArgs,
) -> Result<(TraceSeries, Option<f64>)> {
    let energy = io::load_trace(path, trace_args.options())?.to_energy();
    if demand.net {
        return Ok((energy, None));
    }
    let d = constant_demand(&energy, demand.demand_fraction)?;
    Ok((net_generation(&energy, demand.demand_fraction)?, Some(d)))
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Validate { chain } => {
            let raw = io::read_chain(&chain)?;
            let report = validate(&raw)?;
            print_json(&json!({
                "version": VERSION,
                "chain": chain,
                "accepted": report.accepted(),
                "checks": report.outcomes,
            }));
            report.into_result()?;
            Ok(())
        }
        Command::Fit {
            trace,
            bins,
            edges,
            distinct,
            granularity,
            smoothing,
            demand,
            trace_args,
            output,
            out_dir: dir,
        } => {
            let (net, demand_per_step) = load_net(&trace, &demand, &trace_args)?;
            let granularity = match (granularity, demand_per_step) {
                (Some(g), _) => g,
                (None, Some(d)) => d,
                (None, None) => {
                    return Err(CliError::Usage(
                        "--net fits need an explicit --granularity".into(),
                    ))
                }
            };
            let binning = if distinct {
                Binning::Distinct
            } else if !edges.is_empty() {
                Binning::Edges(edges)
            } else {
                Binning::Quantile(bins)
            };
            let report = fit_dtmc(
                &net,
                &FitOptions {
                    binning,
                    granularity,
                    smoothing,
                },
            )?;
            let output = output.unwrap_or_else(|| {
                let stem = trace
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                out_dir(dir, None).join(format!("{stem}.chain.json"))
            });
            if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            }
            io::write_atomic(&output, io::chain_json(&report.chain).as_bytes())?;
            let sidecar = output.with_extension("meta.json");
            let meta = json!({
                "version": VERSION,
                "source": trace,
                "demand_fraction": (!demand.net).then_some(demand.demand_fraction),
                "self_loops_ok": report.self_loops_ok(),
                "deficit_ok": report.deficit_ok(),
                "smoothed": report.smoothed(),
                "report": report,
            });
            let mut text = serde_json::to_string_pretty(&meta).expect("serialisable");
            text.push('\n');
            io::write_atomic(&sidecar, text.as_bytes())?;
            println!("{}", output.display());
            Ok(())
        }
        Command::Decay { chain, eps } => {
            let users = chain
                .iter()
                .map(|p| load_model(p))
                .collect::<Result<Vec<_>>>()?;
            let bound = decay_rate_bound(&users)?;
            let joint = if users.len() == 1 {
                users[0].clone()
            } else {
                product_chain(&users, DEFAULT_STATE_CAP)?.into_model()
            };
            let estimates: serde_json::Map<String, Value> = eps
                .iter()
                .map(|&e| (e.to_string(), json!(bound.joint.battery_estimate(e))))
                .collect();
            print_json(&json!({
                "version": VERSION,
                "chains": chain,
                "drift": drift(&joint),
                "lambda": bound.joint.lambda,
                "bracket": bound.joint.bracket,
                "iterations": bound.joint.iterations,
                "residual": bound.joint.residual,
                "per_user_lambdas": bound.per_user.iter().map(|d| d.lambda).collect::<Vec<_>>(),
                "min_user_lambda": bound.min_user_lambda,
                "bound_satisfied": bound.bound_satisfied,
                "battery_estimates": estimates,
            }));
            Ok(())
        }
        Command::LolpExact {
            chain,
            capacity,
            solver_cap,
        } => {
            let model = load_model(&chain)?;
            let dist = exact_stationary(&model, capacity, solver_cap)?;
            print_json(&json!({
                "version": VERSION,
                "chain": chain,
                "capacity": capacity,
                "lolp": dist.lolp,
                "empty_prob": dist.empty_prob,
                "full_prob": dist.full_prob,
                "support": dist.support,
                "residual": dist.residual,
                "empty_bound": dist.empty_bound(&model),
                "occupancy": dist.occupancy(),
            }));
            Ok(())
        }
        Command::LolpMc {
            chain,
            capacity,
            mc,
        } => {
            let seed = require_seed(mc.seed)?;
            let model = load_model(&chain)?;
            let stats = simulate_chain(&model, capacity, mc.steps, mc.burn_in(), seed)?;
            print_json(&json!({
                "version": VERSION,
                "chain": chain,
                "capacity": capacity,
                "stats": stats,
            }));
            Ok(())
        }
        Command::Simulate {
            trace,
            capacity,
            initial,
            demand,
            trace_args,
            output,
        } => {
            let (net, _) = load_net(&trace, &demand, &trace_args)?;
            let run = simulate_trace(&net, capacity, initial)?;
            let csv = io::occupancy_csv(&run.occupancy, &run.losses);
            match output {
                Some(path) => {
                    io::write_atomic(&path, csv.as_bytes())?;
                    print_json(&json!({
                        "version": VERSION,
                        "trace": trace,
                        "capacity_mj": capacity,
                        "lolp": run.lolp,
                        "loss_events": run.loss_events,
                        "output": path,
                    }));
                }
                None => {
                    let mut out = std::io::stdout().lock();
                    out.write_all(csv.as_bytes())
                        .map_err(|e| CliError::io("<stdout>", e))?;
                }
            }
            Ok(())
        }
        Command::Size {
            chain,
            trace,
            eps,
            method,
            mc,
            resolution,
            demand,
            trace_args,
        } => {
            let value = if let Some(chain) = chain {
                let model = load_model(&chain)?;
                let how = match method {
                    SizeMethod::Exact => ChainLolp::exact(),
                    SizeMethod::MonteCarlo => ChainLolp::MonteCarlo {
                        steps: mc.steps,
                        burn_in: mc.burn_in(),
                        seed: require_seed(mc.seed)?,
                        cap: DEFAULT_SOLVER_CAP,
                    },
                };
                let r = min_battery_chain(&model, eps, how)?;
                json!({ "version": VERSION, "chain": chain, "result": r })
            } else {
                let trace = trace.expect("clap enforces chain or trace");
                let (net, demand_per_step) = load_net(&trace, &demand, &trace_args)?;
                let resolution = resolution.or(demand_per_step).ok_or_else(|| {
                    CliError::Usage("--net traces need an explicit --resolution".into())
                })?;
                let r = min_battery_trace(&net, eps, resolution)?;
                json!({
                    "version": VERSION,
                    "trace": trace,
                    "b_star_mwh": mj_to_mwh(r.b_star),
                    "result": r,
                })
            };
            print_json(&value);
            Ok(())
        }
        Command::Study {
            config,
            traces,
            chains,
            eps,
            demand_fraction,
            net,
            delta_b,
            subset_cap,
            seed,
            steps,
            format,
            cadence_seconds,
            forward_fill,
            out_dir: dir,
        } => {
            let mut cfg = match &config {
                Some(p) => StudyConfig::load(p)?,
                None => StudyConfig::default(),
            };
            if !traces.is_empty() {
                cfg.traces = traces;
            }
            if !chains.is_empty() {
                cfg.chains = chains;
            }
            if !eps.is_empty() {
                cfg.epsilons = eps;
            }
            if net {
                cfg.demand_fraction = None;
            } else if demand_fraction.is_some() {
                cfg.demand_fraction = demand_fraction;
            }
            cfg.delta_b = delta_b.or(cfg.delta_b);
            cfg.subset_cap = subset_cap.unwrap_or(cfg.subset_cap);
            cfg.seed = seed.or(cfg.seed);
            cfg.steps = steps.unwrap_or(cfg.steps);
            if !format.is_empty() {
                cfg.formats = format;
            }
            cfg.cadence_seconds = cadence_seconds.unwrap_or(cfg.cadence_seconds);
            cfg.forward_fill |= forward_fill;
            if !cfg.chains.is_empty() {
                cfg.seed = Some(require_seed(cfg.seed)?);
            }
            let dir = out_dir(dir, cfg.out_dir.clone());
            let report = run_study(&cfg)?;
            for path in write_report(&report, &dir, &cfg.formats)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Report {
            schema,
            input,
            format,
            output,
        } => {
            if schema {
                print!("{SCHEMA}");
                return Ok(());
            }
            let input = input.expect("clap enforces --schema or --input");
            let text = fs::read_to_string(&input).map_err(|e| CliError::io(&input, e))?;
            let report: StudyReport = serde_json::from_str(&text).map_err(|e| CliError::Parse {
                path: input.clone(),
                line: e.line() as u64,
                message: format!("column {}: {e}", e.column()),
            })?;
            let body = match format {
                Format::Csv => report.to_csv(),
                Format::Json => report.to_json(),
            };
            match output {
                Some(path) => io::write_atomic(&path, body.as_bytes())?,
                None => print!("{body}"),
            }
            Ok(())
        }
    }
}
