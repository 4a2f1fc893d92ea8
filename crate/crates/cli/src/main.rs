//! `jante` — run, measure and verify the barycentric Bak-Sneppen process.
//!
//! Exit status: 0 on success, 1 when a verification check fails, 2 on usage
//! errors. Every invocation prints its effective seed; re-running with that
//! seed reproduces persisted outputs byte for byte (wall-clock timing goes
//! to stderr).

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jante_core::discrete::construct_absorbing_path;
use jante_core::experiments::{
    execute, spec_hash, ExperimentError, ExperimentSpec, InitSpec, OutputFormat, OutputSpec,
    RunReport, TopologySpec,
};
use jante_core::process::{
    max_nonconformity, step, Configuration, DiscreteDist, DistributionSpec, StepAction,
    StopRule, UpdateMode,
};
use jante_core::{stream_rng, Topology};

#[derive(Parser)]
#[command(name = "jante", version, about = "Barycentric Bak-Sneppen simulation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and emit its step log.
    Simulate(SimulateArgs),
    /// Histogram of absorbing values over many frozen runs.
    AbsorbHist(AbsorbHistArgs),
    /// Estimate the exponential decay rate of the embedded potential.
    Rate(RateArgs),
    /// Run the full property-verification suite.
    Verify(VerifyArgs),
    /// Print the explicit floor-midpoint absorbing path of a configuration.
    Path(PathArgs),
    /// Run the two no-convergence demonstrations.
    Counterexample(CounterexampleArgs),
}

#[derive(Args)]
struct TopologyArgs {
    /// Cycle graph with N nodes.
    #[arg(long, value_name = "N", conflicts_with = "graph_file")]
    cycle: Option<usize>,
    /// Edge-list file: first line "N E", then E lines "u v" (1-based).
    #[arg(long, value_name = "PATH")]
    graph_file: Option<String>,
}

impl TopologyArgs {
    fn to_spec(&self) -> Result<TopologySpec, String> {
        match (self.cycle, &self.graph_file) {
            (Some(n), None) => Ok(TopologySpec::Cycle { n }),
            (None, Some(path)) => Ok(TopologySpec::GraphFile { path: path.clone() }),
            _ => Err("exactly one of --cycle or --graph-file is required".into()),
        }
    }
}

#[derive(Args)]
struct DistArgs {
    /// Finite support: "M=<int>" for uniform on {1..M}, optionally
    /// ",probs=p1:...:pM".
    #[arg(long, value_name = "SPEC", conflicts_with = "uniform")]
    discrete: Option<String>,
    /// ζ uniform on [0, 1].
    #[arg(long)]
    uniform: bool,
}

impl DistArgs {
    fn to_spec(&self) -> Result<DistributionSpec, String> {
        match (&self.discrete, self.uniform) {
            (Some(s), false) => parse_discrete(s),
            (None, true) => Ok(DistributionSpec::Uniform01),
            _ => Err("exactly one of --discrete or --uniform is required".into()),
        }
    }
}

fn parse_discrete(s: &str) -> Result<DistributionSpec, String> {
    let mut m: Option<usize> = None;
    let mut probs: Option<Vec<f64>> = None;
    for part in s.split(',') {
        let (key, value) =
            part.split_once('=').ok_or_else(|| format!("bad --discrete component {part:?}"))?;
        match key {
            "M" => {
                m = Some(
                    value.parse().map_err(|_| format!("bad M in --discrete: {value:?}"))?,
                );
            }
            "probs" => {
                let parsed: Result<Vec<f64>, _> =
                    value.split(':').map(str::parse::<f64>).collect();
                probs = Some(parsed.map_err(|_| format!("bad probs in --discrete: {value:?}"))?);
            }
            _ => return Err(format!("unknown --discrete key {key:?}")),
        }
    }
    let m = m.ok_or("--discrete needs M=<int>")?;
    if m == 0 {
        return Err("M must be at least 1".into());
    }
    let spec = match probs {
        None => DistributionSpec::discrete_uniform(m),
        Some(p) => DistributionSpec::discrete((1..=m as i64).collect(), p),
    };
    spec.map_err(|e| e.to_string())
}

fn parse_steps(s: &str) -> Result<StopRule, String> {
    if s == "until-absorbed" {
        return Ok(StopRule::UntilAbsorbed);
    }
    if let Some(eps) = s.strip_prefix("d-below=") {
        let eps: f64 = eps.parse().map_err(|_| format!("bad epsilon {eps:?}"))?;
        if !eps.is_finite() || eps <= 0.0 {
            return Err("d-below epsilon must be positive".into());
        }
        return Ok(StopRule::DBelow(eps));
    }
    let n: u64 = s
        .parse()
        .map_err(|_| format!("--steps must be <int>, until-absorbed or d-below=<eps>, got {s:?}"))?;
    Ok(StopRule::MaxSteps(n))
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    match s {
        "csv" => Ok(OutputFormat::Csv),
        "jsonl" => Ok(OutputFormat::Jsonl),
        _ => Err(format!("--format must be csv or jsonl, got {s:?}")),
    }
}

fn parse_mode(s: &str) -> Result<UpdateMode, String> {
    match s {
        "raw" => Ok(UpdateMode::Raw),
        "frozen" => Ok(UpdateMode::Frozen),
        _ => Err(format!("--mode must be raw or frozen, got {s:?}")),
    }
}

fn parse_init(s: &str) -> Result<InitSpec, String> {
    if s == "iid" {
        Ok(InitSpec::Iid)
    } else {
        Ok(InitSpec::File { path: s.to_string() })
    }
}

#[derive(Args)]
struct OutArgs {
    /// Output file; stdout summary only when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<String>,
    /// Output format.
    #[arg(long, value_name = "FMT", default_value = "csv", value_parser = parse_format)]
    format: OutputFormat,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    topology: TopologyArgs,
    #[command(flatten)]
    dist: DistArgs,
    /// Stop rule: <int> steps, until-absorbed, or d-below=<eps>.
    #[arg(long, value_name = "RULE", value_parser = parse_steps)]
    steps: StopRule,
    /// Update mode.
    #[arg(long, value_name = "MODE", default_value = "frozen", value_parser = parse_mode)]
    mode: UpdateMode,
    /// Initial configuration: "iid" or a file with one fitness per line.
    #[arg(long, value_name = "PATH|iid", default_value = "iid", value_parser = parse_init)]
    init: InitSpec,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct AbsorbHistArgs {
    #[command(flatten)]
    topology: TopologyArgs,
    #[command(flatten)]
    dist: DistArgs,
    #[arg(long, value_name = "COUNT", default_value_t = 1000)]
    runs: u64,
    /// Per-run step cap guarding against non-absorbing inputs.
    #[arg(long, value_name = "COUNT", default_value_t = 100_000_000)]
    max_steps: u64,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct RateArgs {
    /// Cycle size (N ≥ 5).
    #[arg(long, value_name = "N")]
    cycle: usize,
    #[arg(long, value_name = "COUNT", default_value_t = 200)]
    runs: u64,
    /// Embedded transitions per run.
    #[arg(long, value_name = "COUNT", default_value_t = 1000)]
    steps: u64,
    /// Fraction of early embedded points dropped before the regression.
    #[arg(long, value_name = "FRAC", default_value_t = 0.1)]
    burn_in: f64,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Size of the largest verification sweeps.
    #[arg(long, value_name = "COUNT", default_value_t = 1_000_000)]
    samples: u64,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Report file (JSON document); stdout summary either way.
    #[arg(long, value_name = "PATH")]
    out: Option<String>,
}

#[derive(Args)]
struct PathArgs {
    /// Configuration file: one integer fitness per line, 1-based node order.
    #[arg(long, value_name = "PATH")]
    init: String,
    /// Support bound: values must lie in {1..M}; "M=<int>".
    #[arg(long, value_name = "SPEC")]
    discrete: String,
    /// Optional CSV export of the path.
    #[arg(long, value_name = "PATH")]
    out: Option<String>,
}

#[derive(Args)]
struct CounterexampleArgs {
    /// Which demonstration to run.
    #[arg(long, value_name = "WHICH", default_value = "both")]
    demo: String,
    #[arg(long, value_name = "COUNT", default_value_t = 10_000)]
    steps: u64,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

/// Errors mapped to exit code 2 (usage / input problems).
fn is_usage_error(err: &ExperimentError) -> bool {
    matches!(
        err,
        ExperimentError::Topology(_)
            | ExperimentError::Process(_)
            | ExperimentError::InvalidSpec(_)
            | ExperimentError::EqualSpacingRequired
            | ExperimentError::RateRequiresN5(_)
            | ExperimentError::Io { .. }
    )
}

fn effective_seed(seed: Option<u64>) -> u64 {
    let seed = seed.unwrap_or_else(rand::random::<u64>);
    println!("seed: {seed}");
    seed
}

fn run_experiment(spec: ExperimentSpec) -> Result<RunReport, ExitCode> {
    eprintln!("spec hash: {}", spec_hash(&spec));
    let started = std::time::Instant::now();
    match execute(&spec) {
        Ok(report) => {
            eprintln!("wall time: {:?}", started.elapsed());
            Ok(report)
        }
        Err(err) => {
            eprintln!("error: {err}");
            Err(if is_usage_error(&err) { ExitCode::from(2) } else { ExitCode::from(1) })
        }
    }
}

fn persist_and_print(report: &RunReport, out: &Option<String>, format: OutputFormat) -> ExitCode {
    print!("{}", report.summary());
    if let Some(path) = out {
        if let Err(err) = report.persist(path, format) {
            eprintln!("error: {err}");
            return ExitCode::from(2);
        }
        println!("wrote {path}");
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_simulate(args: SimulateArgs) -> ExitCode {
    let (topology, dist) = match (args.topology.to_spec(), args.dist.to_spec()) {
        (Ok(t), Ok(d)) => (t, d),
        (Err(e), _) | (_, Err(e)) => return usage_error(&e),
    };
    let seed = effective_seed(args.seed);
    let spec = ExperimentSpec::SingleRun {
        topology,
        distribution: dist,
        mode: args.mode,
        stop: args.steps,
        init: args.init,
        seed,
        output: output_spec(&args.out),
    };
    match run_experiment(spec) {
        Ok(report) => persist_and_print(&report, &args.out.out, args.out.format),
        Err(code) => code,
    }
}

fn cmd_absorb_hist(args: AbsorbHistArgs) -> ExitCode {
    let (topology, dist) = match (args.topology.to_spec(), args.dist.to_spec()) {
        (Ok(t), Ok(d)) => (t, d),
        (Err(e), _) | (_, Err(e)) => return usage_error(&e),
    };
    let seed = effective_seed(args.seed);
    let spec = ExperimentSpec::AbsorbHist {
        topology,
        distribution: dist,
        runs: args.runs,
        seed,
        max_steps: args.max_steps,
        output: output_spec(&args.out),
    };
    match run_experiment(spec) {
        Ok(report) => persist_and_print(&report, &args.out.out, args.out.format),
        Err(code) => code,
    }
}

fn cmd_rate(args: RateArgs) -> ExitCode {
    if args.cycle < 5 {
        return usage_error(&format!(
            "rate estimation needs --cycle of at least 5, got {}",
            args.cycle
        ));
    }
    let seed = effective_seed(args.seed);
    let spec = ExperimentSpec::RateEstimate {
        cycle_n: args.cycle,
        runs: args.runs,
        embedded_steps: args.steps,
        burn_in: args.burn_in,
        xi_floor: jante_core::experiments::default_xi_floor(),
        seed,
        output: output_spec(&args.out),
    };
    match run_experiment(spec) {
        Ok(report) => persist_and_print(&report, &args.out.out, args.out.format),
        Err(code) => code,
    }
}

fn cmd_verify(args: VerifyArgs) -> ExitCode {
    let seed = effective_seed(args.seed);
    let spec = ExperimentSpec::VerifySuite {
        samples: args.samples,
        seed,
        output: args
            .out
            .clone()
            .map(|path| OutputSpec { path, format: OutputFormat::Jsonl }),
    };
    match run_experiment(spec) {
        Ok(report) => persist_and_print(&report, &args.out, OutputFormat::Jsonl),
        Err(code) => code,
    }
}

fn cmd_path(args: PathArgs) -> ExitCode {
    let m = match parse_discrete(&args.discrete) {
        Ok(DistributionSpec::Discrete { support, .. }) => *support.last().expect("non-empty"),
        Ok(DistributionSpec::Uniform01) | Err(_) => {
            return usage_error("path needs --discrete M=<int>")
        }
    };
    let text = match std::fs::read_to_string(&args.init) {
        Ok(t) => t,
        Err(e) => return usage_error(&format!("{}: {e}", args.init)),
    };
    let cfg = match Configuration::<i64>::from_text(&text) {
        Ok(c) => c,
        Err(e) => return usage_error(&e.to_string()),
    };
    if cfg.values().iter().any(|&v| v < 1 || v > m) {
        return usage_error(&format!("configuration values must lie in 1..={m}"));
    }
    let n = cfg.len();
    let topo = match Topology::cycle(n) {
        Ok(t) => t,
        Err(e) => return usage_error(&e.to_string()),
    };
    let path = match construct_absorbing_path(&cfg, &topo) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let bound = (m * m) as u64 * n as u64 * (n as u64 - 2).max(1);
    print!("{}", path.to_csv());
    println!("T = {} (bound M^2*N*(N-2) = {bound})", path.len());
    if let Some(out) = &args.out {
        if let Err(e) = std::fs::write(out, path.to_csv()) {
            eprintln!("error: {out}: {e}");
            return ExitCode::from(2);
        }
        println!("wrote {out}");
    }
    if path.len() <= bound {
        ExitCode::SUCCESS
    } else {
        eprintln!("error: path exceeds the absorption bound; this is a bug");
        ExitCode::from(1)
    }
}

fn cmd_counterexample(args: CounterexampleArgs) -> ExitCode {
    let seed = effective_seed(args.seed);
    let mut ok = true;
    if args.demo == "stable-family" || args.demo == "both" {
        ok &= demo_stable_family(args.steps, seed);
    } else if args.demo != "figure-graph" {
        return usage_error(&format!(
            "--demo must be stable-family, figure-graph or both, got {:?}",
            args.demo
        ));
    }
    if args.demo == "figure-graph" || args.demo == "both" {
        ok &= demo_figure_graph(args.steps, seed);
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn demo_stable_family(steps: u64, seed: u64) -> bool {
    println!("# stable family on the 8-cycle, support {{0,1,5,6}}, start [0,1,0,5,6,5,6,1]");
    println!("t,node,old_value,new_value,d_before,d_after");
    let topo = Topology::cycle(8).expect("cycle");
    let spec = DistributionSpec::discrete_uniform_support(vec![0, 1, 5, 6]).expect("support");
    let dist = DiscreteDist::from_spec(&spec).expect("discrete");
    let mut rng = stream_rng(seed, 0);
    let mut cfg = jante_core::discrete::stable_family_member(0, 6).expect("member");
    let mut ok = true;
    for t in 0..steps {
        let rec = step(&mut cfg, &topo, &dist, &mut rng, UpdateMode::Raw, t);
        if let StepAction::Replaced { node, old, new, d_after } = rec.action {
            if t < 20 || t + 5 >= steps {
                println!("{t},{},{old},{new},{},{d_after}", node + 1, rec.d_before);
            } else if t == 20 {
                println!("# ... ({} middle steps elided)", steps.saturating_sub(25));
            }
        }
        ok &= jante_core::discrete::in_stable_family(&cfg) && !cfg.is_constant();
    }
    println!(
        "stable family held for {steps} steps, never absorbed: {}",
        if ok { "OK" } else { "VIOLATED" }
    );
    ok
}

fn demo_figure_graph(steps: u64, seed: u64) -> bool {
    println!("# two-ear 6-vertex graph, support {{0,1}}, start (0,1,0,1,0,1)");
    println!("t,node,old_value,new_value,d_before,d_after");
    let topo = Topology::counterexample_graph();
    let spec = DistributionSpec::discrete_uniform_support(vec![0, 1]).expect("support");
    let dist = DiscreteDist::from_spec(&spec).expect("discrete");
    let mut rng = stream_rng(seed, 1);
    let mut cfg = Configuration::new(vec![0i64, 1, 0, 1, 0, 1]);
    let mut ok = true;
    for t in 0..steps {
        let rec = step(&mut cfg, &topo, &dist, &mut rng, UpdateMode::Raw, t);
        if let StepAction::Replaced { node, old, new, d_after } = rec.action {
            ok &= node == 1 || node == 2;
            if t < 20 || t + 5 >= steps {
                println!("{t},{},{old},{new},{},{d_after}", node + 1, rec.d_before);
            } else if t == 20 {
                println!("# ... ({} middle steps elided)", steps.saturating_sub(25));
            }
        }
        ok &= !cfg.is_constant();
        let (_, argmax) = max_nonconformity(&cfg, &topo);
        ok &= argmax.iter().all(|&v| v == 1 || v == 2);
    }
    println!(
        "only the interior nodes were ever replaced, no absorption: {}",
        if ok { "OK" } else { "VIOLATED" }
    );
    ok
}

fn output_spec(out: &OutArgs) -> Option<OutputSpec> {
    out.out.clone().map(|path| OutputSpec { path, format: out.format })
}

fn usage_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::AbsorbHist(args) => cmd_absorb_hist(args),
        Command::Rate(args) => cmd_rate(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Path(args) => cmd_path(args),
        Command::Counterexample(args) => cmd_counterexample(args),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_spec_parsing() {
        assert_eq!(parse_discrete("M=4").unwrap(), DistributionSpec::discrete_uniform(4).unwrap());
        let with_probs = parse_discrete("M=3,probs=0.2:0.3:0.5").unwrap();
        assert_eq!(
            with_probs,
            DistributionSpec::discrete(vec![1, 2, 3], vec![0.2, 0.3, 0.5]).unwrap()
        );
        assert!(parse_discrete("M=0").is_err());
        assert!(parse_discrete("probs=1.0").is_err());
        assert!(parse_discrete("M=2,probs=0.9:0.2").is_err());
    }

    #[test]
    fn steps_parsing() {
        assert_eq!(parse_steps("500").unwrap(), StopRule::MaxSteps(500));
        assert_eq!(parse_steps("until-absorbed").unwrap(), StopRule::UntilAbsorbed);
        assert_eq!(parse_steps("d-below=0.01").unwrap(), StopRule::DBelow(0.01));
        assert!(parse_steps("d-below=-1").is_err());
        assert!(parse_steps("sometimes").is_err());
    }

    #[test]
    fn cli_shape_parses() {
        let cli = Cli::try_parse_from([
            "jante",
            "simulate",
            "--cycle",
            "8",
            "--discrete",
            "M=4",
            "--steps",
            "until-absorbed",
            "--seed",
            "7",
        ])
        .unwrap();
        let Command::Simulate(args) = cli.command else { panic!() };
        assert_eq!(args.seed, Some(7));
        assert_eq!(args.steps, StopRule::UntilAbsorbed);

        assert!(Cli::try_parse_from(["jante", "simulate", "--cycle", "8"]).is_err());
        assert!(Cli::try_parse_from([
            "jante", "simulate", "--cycle", "8", "--graph-file", "x", "--uniform", "--steps", "5"
        ])
        .is_err());
    }
}
