use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use hhlo::harness::report::{self, config_from_metadata};
use hhlo::harness::{
    run_batch, run_batch_with_threads, sweep, with_threads, BatchReport, ExperimentConfig, MechanismSpec,
    SigmaSchedule, SweepVariant, DEFAULT_F, DEFAULT_TAU0,
};
use hhlo::theory::{tau_max_tsv, theory_tsv, TheoryRow};
use hhlo::Portfolio;

const BUILD: &str = env!("HHLO_BUILD");

#[derive(Parser)]
#[command(name = "hhlo", version, about = "Selection hyper-heuristics on LeadingOnes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of trials and write the runtime row, per-trial results and metadata.
    Run(RunArgs),
    /// Mean runtime / n^2 for several mechanisms over several problem sizes.
    Sweep(SweepArgs),
    /// Run a batch recording tau/n per fitness percent, with the tau_max envelope.
    TraceTau(RunArgs),
    /// Run a batch recording operator usage per fitness bucket.
    Usage(RunArgs),
    /// Best-possible expected runtimes, or the tau_max envelope.
    Theory(TheoryArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// simple-random, permutation, greedy, random-gradient, grg or arg
    #[arg(long)]
    mech: Option<String>,
    /// Use the portfolio {RLS_1, ..., RLS_k}
    #[arg(long, conflicts_with = "portfolio")]
    k: Option<usize>,
    /// Explicit neighbourhood sizes, e.g. 1,3
    #[arg(long)]
    portfolio: Option<String>,
    /// Problem size; accepts 1e5 style values
    #[arg(long, value_parser = parse_size)]
    n: Option<usize>,
    /// ARG sigma schedule name, const:<v> or a number
    #[arg(long)]
    sigma: Option<String>,
    /// GRG learning period: a number, <c>nlnn or inf
    #[arg(long)]
    tau: Option<String>,
    /// ARG update factor
    #[arg(long = "F")]
    factor: Option<f64>,
    /// ARG initial learning period
    #[arg(long)]
    tau0: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    buckets: Option<usize>,
    /// Evaluation cap per trial, default 20 n^2
    #[arg(long, value_parser = parse_count)]
    budget: Option<u64>,
    /// fast-forward or stepwise
    #[arg(long)]
    engine: Option<String>,
    /// Rebuild the experiment from a run.meta file instead of flags
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, env = "HHLO_OUT", default_value = "results")]
    out: PathBuf,
    /// Worker threads; all cores by default
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Column label in runtime.tsv and name prefix of the output directory
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    trace_tau: bool,
    #[arg(long)]
    trace_usage: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Comma-separated problem sizes
    #[arg(long, value_delimiter = ',', value_parser = parse_size, required = true)]
    ns: Vec<usize>,
    /// <mech>[:<sigma or tau>], repeatable; label=<mech>[:...] sets the column name
    #[arg(long = "variant", required = true)]
    variants: Vec<String>,
    #[arg(long, default_value_t = hhlo::harness::DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = hhlo::harness::DEFAULT_SEED)]
    seed: u64,
    #[arg(long = "F", default_value_t = DEFAULT_F)]
    factor: f64,
    #[arg(long, default_value_t = DEFAULT_TAU0)]
    tau0: f64,
    #[arg(long, default_value = "fast-forward")]
    engine: String,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct TheoryArgs {
    /// Comma-separated portfolio sizes
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,5")]
    k: Vec<usize>,
    /// Comma-separated problem sizes
    #[arg(long, value_delimiter = ',', value_parser = parse_size, default_value = "1000000")]
    n: Vec<usize>,
    /// Emit tau_max/n per fitness percent for this sigma schedule instead
    #[arg(long)]
    tau_max: Option<String>,
    /// Write to this file instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<hhlo::Error> for Failure {
    fn from(e: hhlo::Error) -> Self {
        match e {
            hhlo::Error::Io { .. } => Failure::Runtime(e.into()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn parse_size(s: &str) -> Result<usize, String> {
    parse_count(s).and_then(|v| usize::try_from(v).map_err(|e| e.to_string()))
}

fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 1.8e19 => Ok(v as u64),
        _ => Err(format!("expected a non-negative integer, got {s:?}")),
    }
}

fn flag<T: std::str::FromStr<Err = hhlo::Error>>(name: &str, value: &str) -> Result<T, Failure> {
    value.parse().map_err(|e: hhlo::Error| usage(format!("--{name}: {e}")))
}

fn portfolio(k: Option<usize>, list: Option<&str>) -> Result<Portfolio, Failure> {
    let p = match (k, list) {
        (_, Some(list)) => {
            let sizes = list
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| usage(format!("--portfolio: expected comma-separated sizes, got {list:?}")))?;
            Portfolio::new(&sizes)
        }
        (k, None) => Portfolio::initial_segment(k.unwrap_or(2)),
    };
    p.map_err(|e| usage(format!("--k/--portfolio: {e}")))
}

fn mechanism(
    name: &str,
    sigma: Option<&str>,
    tau: Option<&str>,
    factor: Option<f64>,
    tau0: Option<f64>,
) -> Result<MechanismSpec, Failure> {
    let base: MechanismSpec = flag("mech", name)?;
    let is_arg = matches!(base, MechanismSpec::Arg { .. });
    let is_grg = matches!(base, MechanismSpec::Grg { .. });
    if tau.is_some() && !is_grg {
        return Err(usage(format!("--tau only applies to grg, not {}", base.name())));
    }
    if !is_arg {
        for (given, name) in [
            (sigma.is_some(), "sigma"),
            (factor.is_some(), "F"),
            (tau0.is_some(), "tau0"),
        ] {
            if given {
                return Err(usage(format!("--{name} only applies to arg, not {}", base.name())));
            }
        }
    }
    Ok(match base {
        MechanismSpec::Grg { tau: default } => MechanismSpec::Grg {
            tau: tau.map_or(Ok(default), |t| flag("tau", t))?,
        },
        MechanismSpec::Arg { sigma: default, .. } => MechanismSpec::Arg {
            sigma: sigma.map_or(Ok(default), |s| flag("sigma", s))?,
            factor: factor.unwrap_or(DEFAULT_F),
            tau0: tau0.unwrap_or(DEFAULT_TAU0),
        },
        other => other,
    })
}

fn experiment(args: &ExperimentArgs, default_mech: &str) -> Result<ExperimentConfig, Failure> {
    if let Some(path) = &args.config {
        let given = [
            args.mech.is_some(),
            args.k.is_some(),
            args.portfolio.is_some(),
            args.n.is_some(),
            args.sigma.is_some(),
            args.tau.is_some(),
            args.factor.is_some(),
            args.tau0.is_some(),
            args.trials.is_some(),
            args.seed.is_some(),
            args.buckets.is_some(),
            args.budget.is_some(),
            args.engine.is_some(),
        ];
        if given.into_iter().any(|g| g) {
            return Err(usage("--config cannot be combined with experiment flags"));
        }
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return config_from_metadata(&text).map_err(|e| usage(format!("--config {}: {e}", path.display())));
    }
    let n = args
        .n
        .ok_or_else(|| usage("--n is required unless --config is given"))?;
    let portfolio = portfolio(args.k, args.portfolio.as_deref())?;
    let mech = mechanism(
        args.mech.as_deref().unwrap_or(default_mech),
        args.sigma.as_deref(),
        args.tau.as_deref(),
        args.factor,
        args.tau0,
    )?;
    portfolio
        .check_fits(n)
        .map_err(|e| usage(format!("--k/--portfolio: {e}")))?;
    let mut config = ExperimentConfig::new(n, portfolio, mech);
    if let Some(v) = args.trials {
        config.trials = v;
    }
    if let Some(v) = args.seed {
        config.master_seed = v;
    }
    if let Some(v) = args.buckets {
        config.buckets = v;
    }
    config.eval_budget = args.budget;
    if let Some(e) = &args.engine {
        config.engine = flag("engine", e)?;
    }
    Ok(config)
}

fn execute(config: &ExperimentConfig, threads: Option<usize>) -> Result<BatchReport, Failure> {
    config.resolve()?;
    Ok(match threads {
        Some(t) => run_batch_with_threads(config, t)?,
        None => run_batch(config)?,
    })
}

#[derive(Clone, Copy)]
enum Trace {
    None,
    Tau,
    Usage,
}

fn run(args: &RunArgs, trace: Trace) -> Result<(), Failure> {
    let mut config = experiment(&args.experiment, "arg")?;
    config.tau_trace |= args.trace_tau || matches!(trace, Trace::Tau);
    config.usage_trace |= args.trace_usage || matches!(trace, Trace::Usage);
    if matches!(trace, Trace::Tau) && !matches!(config.mechanism, MechanismSpec::Arg { .. } | MechanismSpec::Grg { .. })
    {
        return Err(usage(format!(
            "trace-tau needs arg or grg, not {}",
            config.mechanism.name()
        )));
    }
    let report = execute(&config, args.output.threads)?;
    let label = args
        .label
        .clone()
        .unwrap_or_else(|| config.mechanism.name().to_string());
    let dir = args
        .output
        .out
        .join(format!("{label}-k{}-n{}", config.portfolio.max_size(), config.n));
    for path in report::write_batch(&dir, &report, &label, BUILD)? {
        println!("{}", path.display());
    }
    let s = &report.summary;
    eprintln!(
        "{label}: n={} mean/n^2={:.6} (se {:.6}), {}/{} reached the optimum",
        s.n,
        s.mean_over_n2,
        s.std_error() / (s.n as f64 * s.n as f64),
        s.reached,
        s.trials
    );
    Ok(())
}

fn variant(spec: &str, args: &SweepArgs, portfolio: &Portfolio) -> Result<SweepVariant, Failure> {
    let (label, body) = match spec.split_once('=') {
        Some((label, body)) => (label.to_string(), body),
        None => (spec.to_string(), spec),
    };
    let (name, param) = match body.split_once(':') {
        Some((name, param)) => (name, Some(param)),
        None => (body, None),
    };
    let base: MechanismSpec = flag("variant", name)?;
    let mech = match base {
        MechanismSpec::Grg { .. } => mechanism(name, None, param, None, None)?,
        MechanismSpec::Arg { .. } => mechanism(name, param, None, Some(args.factor), Some(args.tau0))?,
        other if param.is_none() => other,
        other => return Err(usage(format!("--variant {spec}: {} takes no parameter", other.name()))),
    };
    let mut config = ExperimentConfig::new(1, portfolio.clone(), mech);
    config.trials = args.trials;
    config.master_seed = args.seed;
    config.engine = flag("engine", &args.engine)?;
    Ok(SweepVariant { label, config })
}

fn sweep_cmd(args: &SweepArgs) -> Result<(), Failure> {
    let portfolio = Portfolio::initial_segment(args.k).map_err(|e| usage(format!("--k: {e}")))?;
    let variants = args
        .variants
        .iter()
        .map(|v| variant(v, args, &portfolio))
        .collect::<Result<Vec<_>, _>>()?;
    for v in &variants {
        for &n in &args.ns {
            let mut c = v.config.clone();
            c.n = n;
            c.resolve()
                .map_err(|e| usage(format!("--variant {} at n={n}: {e}", v.label)))?;
        }
    }
    let table = match args.output.threads {
        Some(t) => with_threads(t, || sweep(&variants, &args.ns))??,
        None => sweep(&variants, &args.ns)?,
    };
    let path = args.output.out.join(format!("sweep-k{}.tsv", args.k));
    report::write_sweep(&path, &table)?;
    let meta_path = args.output.out.join(format!("sweep-k{}.meta", args.k));
    write_file(&meta_path, &sweep_metadata(args, &variants))?;
    println!("{}\n{}", path.display(), meta_path.display());
    Ok(())
}

fn sweep_metadata(args: &SweepArgs, variants: &[SweepVariant]) -> String {
    let ns: Vec<String> = args.ns.iter().map(ToString::to_string).collect();
    let mut out = format!(
        "portfolio={}\nns={}\ntrials={}\nmaster_seed={}\nengine={}\n",
        variants[0].config.portfolio,
        ns.join(","),
        args.trials,
        args.seed,
        args.engine
    );
    for v in variants {
        let _ = writeln!(out, "variant.{}.mechanism={}", v.label, v.config.mechanism.name());
        match v.config.mechanism {
            MechanismSpec::Grg { tau } => {
                let _ = writeln!(out, "variant.{}.tau={tau}", v.label);
            }
            MechanismSpec::Arg { sigma, factor, tau0 } => {
                let _ = writeln!(out, "variant.{}.sigma_schedule={sigma}", v.label);
                if let Some(c) = sigma.cstar() {
                    let _ = writeln!(out, "variant.{}.cstar={c}", v.label);
                }
                let _ = writeln!(out, "variant.{}.F={factor}\nvariant.{}.tau0={tau0}", v.label, v.label);
            }
            _ => {}
        }
    }
    let _ = writeln!(out, "build={BUILD}");
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn theory(args: &TheoryArgs) -> Result<(), Failure> {
    let text = match &args.tau_max {
        Some(schedule) => {
            let ([n], [k]) = (args.n.as_slice(), args.k.as_slice()) else {
                return Err(usage("--tau-max needs exactly one --n and one --k"));
            };
            let schedule: SigmaSchedule = flag("tau-max", schedule)?;
            let sigma = schedule.resolve(*n).map_err(|e| usage(format!("--tau-max: {e}")))?;
            let portfolio = Portfolio::initial_segment(*k).map_err(|e| usage(format!("--k: {e}")))?;
            tau_max_tsv(*n, &portfolio, sigma.sigma).map_err(|e| usage(format!("--n/--k: {e}")))?
        }
        None => {
            let mut rows = Vec::new();
            for &n in &args.n {
                for &k in &args.k {
                    rows.push(TheoryRow::compute(n, k).map_err(|e| usage(format!("--n {n} --k {k}: {e}")))?);
                }
            }
            theory_tsv(&rows)
        }
    };
    match &args.out {
        Some(path) => {
            write_file(path, &text)?;
            println!("{}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(2));
        }
    };
    let result = match &cli.command {
        Command::Run(args) => run(args, Trace::None),
        Command::TraceTau(args) => run(args, Trace::Tau),
        Command::Usage(args) => run(args, Trace::Usage),
        Command::Sweep(args) => sweep_cmd(args),
        Command::Theory(args) => theory(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
