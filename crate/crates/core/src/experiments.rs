//! Declarative seeded Monte-Carlo experiments with deterministic
//! persistence.
//!
//! An [`ExperimentSpec`] fully describes a job: kind, topology, replacement
//! law, run count, stop rule and seed. Runs fan out by run index, each run
//! owning the RNG stream derived from `seed ⊕ run_index`, and rows are merged
//! in index order — so executing in parallel or serially yields identical
//! reports, and identical spec + seed yields byte-identical persisted files.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::continuous::{
    self, check_limit_shape, check_metric_bounds, lyapunov_h, lyapunov_h_expanded,
    random_unit_configuration, run_embedded, sample_feasible_window, ContinuousError,
    EmbeddedChain, LocalWindow, StepBoundsAccumulator, DECREASE_PROB_BOUND, DRIFT_TOL,
};
use crate::discrete::{
    construct_absorbing_path, in_stable_family, lyapunov_f, stable_family_member, DiscreteError,
};
use crate::par::map_indexed;
use crate::process::{
    iid_configuration, max_nonconformity, replay, run, step, stream_rng, Configuration,
    DiscreteDist, DistributionSpec, ProcessError, StepAction, StopRule, Trajectory, UpdateMode,
    Uniform01,
};
use crate::stats;
use crate::topology::{Topology, TopologyError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Discrete(#[from] DiscreteError),
    #[error(transparent)]
    Continuous(#[from] ContinuousError),
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("absorption experiments need an equally spaced discrete support")]
    EqualSpacingRequired,
    #[error("run {run} exceeded the absorption cap of {cap} steps")]
    AbsorptionTimeout { run: u64, cap: u64 },
    #[error("run {run} produced only {points} usable points for the rate regression")]
    InsufficientData { run: u64, points: usize },
    #[error("rate estimation needs a cycle of at least 5 nodes, got {0}")]
    RateRequiresN5(usize),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn read_file(path: &str) -> Result<String, ExperimentError> {
    std::fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.into(), source })
}

fn write_file(path: &str, contents: &str) -> Result<(), ExperimentError> {
    std::fs::write(path, contents).map_err(|source| ExperimentError::Io { path: path.into(), source })
}

// ---------------------------------------------------------------------------
// Spec
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologySpec {
    Cycle { n: usize },
    GraphFile { path: String },
    CounterexampleGraph,
}

impl TopologySpec {
    pub fn build(&self) -> Result<Topology, ExperimentError> {
        match self {
            Self::Cycle { n } => Ok(Topology::cycle(*n)?),
            Self::GraphFile { path } => Ok(Topology::from_edge_list_text(&read_file(path)?)?),
            Self::CounterexampleGraph => Ok(Topology::counterexample_graph()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    #[default]
    Iid,
    File {
        path: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub path: String,
    pub format: OutputFormat,
}

fn default_burn_in() -> f64 {
    0.1
}

/// Truncation floor for ξ along embedded runs. Spreads below ≈ 1e−16 are
/// float-granularity noise and ξ scales as the squared spread, so the floor
/// sits two decades above that square.
pub fn default_xi_floor() -> f64 {
    1e-26
}

fn default_absorb_cap() -> u64 {
    100_000_000
}

/// A fully specified experiment. The JSON form mirrors this structure with a
/// `kind` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentSpec {
    /// Frozen-mode absorption sweep: i.i.d. ζ initial conditions, run until
    /// constant, histogram the absorbing values.
    AbsorbHist {
        topology: TopologySpec,
        distribution: DistributionSpec,
        runs: u64,
        seed: u64,
        #[serde(default = "default_absorb_cap")]
        max_steps: u64,
        #[serde(default)]
        output: Option<OutputSpec>,
    },
    /// Per-run exponential decay rate of ξ along the embedded chain.
    RateEstimate {
        cycle_n: usize,
        runs: u64,
        embedded_steps: u64,
        #[serde(default = "default_burn_in")]
        burn_in: f64,
        #[serde(default = "default_xi_floor")]
        xi_floor: f64,
        seed: u64,
        #[serde(default)]
        output: Option<OutputSpec>,
    },
    /// The full property-verification suite.
    VerifySuite {
        samples: u64,
        seed: u64,
        #[serde(default)]
        output: Option<OutputSpec>,
    },
    /// One trajectory with explicit stop rule and initial condition.
    SingleRun {
        topology: TopologySpec,
        distribution: DistributionSpec,
        mode: UpdateMode,
        stop: StopRule,
        #[serde(default)]
        init: InitSpec,
        seed: u64,
        #[serde(default)]
        output: Option<OutputSpec>,
    },
}

impl ExperimentSpec {
    pub fn seed(&self) -> u64 {
        match self {
            Self::AbsorbHist { seed, .. }
            | Self::RateEstimate { seed, .. }
            | Self::VerifySuite { seed, .. }
            | Self::SingleRun { seed, .. } => *seed,
        }
    }

    fn clear_output(&mut self) {
        match self {
            Self::AbsorbHist { output, .. }
            | Self::RateEstimate { output, .. }
            | Self::VerifySuite { output, .. }
            | Self::SingleRun { output, .. } => *output = None,
        }
    }

    pub fn output(&self) -> Option<&OutputSpec> {
        match self {
            Self::AbsorbHist { output, .. }
            | Self::RateEstimate { output, .. }
            | Self::VerifySuite { output, .. }
            | Self::SingleRun { output, .. } => output.as_ref(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text)
            .map_err(|e| ExperimentError::InvalidSpec(format!("bad spec JSON: {e}")))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stable hex digest of the canonical spec JSON, stamped into every
/// persisted file. The output destination is not part of the digest: it
/// identifies the data-determining parameters, so the same experiment
/// written to two paths carries the same hash.
pub fn spec_hash(spec: &ExperimentSpec) -> String {
    let mut canonical = spec.clone();
    canonical.clear_output();
    format!("{:016x}", fnv1a64(canonical.to_json().as_bytes()))
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub spec_hash: String,
    pub seed: u64,
    /// Wall-clock duration; never persisted (outputs must be byte-stable).
    #[serde(skip)]
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AbsorbRow {
    pub run_index: u64,
    pub absorb_value: i64,
    pub absorb_time: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsorbHistReport {
    pub provenance: Provenance,
    pub rows: Vec<AbsorbRow>,
    /// (support value, count), over the full support in order.
    pub histogram: Vec<(i64, u64)>,
    pub time_mean: f64,
    pub time_median: f64,
    pub time_max: u64,
}

impl AbsorbHistReport {
    pub fn recompute_histogram(&self, support: &[i64]) -> Vec<(i64, u64)> {
        histogram_of(support, &self.rows)
    }
}

fn histogram_of(support: &[i64], rows: &[AbsorbRow]) -> Vec<(i64, u64)> {
    support
        .iter()
        .map(|&v| (v, rows.iter().filter(|r| r.absorb_value == v).count() as u64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRow {
    pub run_index: u64,
    pub rho_hat: f64,
    pub n_embedded: u64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub provenance: Provenance,
    pub cycle_n: usize,
    pub rows: Vec<RateRow>,
    pub rho_median: f64,
    pub rho_mean: f64,
    pub rho_q10: f64,
    pub rho_q90: f64,
    /// True when every run's ln ξ regression slope was strictly negative.
    pub all_slopes_negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: u64,
    /// 1-based.
    pub node: usize,
    pub old_value: String,
    pub new_value: String,
    pub d_before: f64,
    pub d_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleRunReport {
    pub provenance: Provenance,
    pub rows: Vec<TrajectoryRow>,
    pub absorbed: bool,
    pub final_d: f64,
    pub final_values: Vec<String>,
    /// 1-based nodes of degree 1; convergence can fail around them.
    pub degree_one_nodes: Vec<usize>,
}

/// One named verification check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub samples: u64,
    /// Worst observed violation statistic; at most the check's tolerance
    /// when passing. Checks counting hard violations report the count.
    pub max_violation: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<serde_json::Value>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub provenance: Provenance,
    pub samples: u64,
    pub checks: Vec<CheckReport>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone)]
pub enum RunReport {
    AbsorbHist(AbsorbHistReport),
    Rate(RateReport),
    Verify(VerifyReport),
    Single(SingleRunReport),
}

impl RunReport {
    pub fn passed(&self) -> bool {
        match self {
            Self::Verify(v) => v.passed,
            _ => true,
        }
    }

    pub fn provenance(&self) -> &Provenance {
        match self {
            Self::AbsorbHist(r) => &r.provenance,
            Self::Rate(r) => &r.provenance,
            Self::Verify(r) => &r.provenance,
            Self::Single(r) => &r.provenance,
        }
    }

    /// Human-oriented one-screen summary for the CLI.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        match self {
            Self::AbsorbHist(r) => {
                let _ = writeln!(out, "runs: {}", r.rows.len());
                let _ = writeln!(
                    out,
                    "absorption time: mean {:.2}, median {}, max {}",
                    r.time_mean, r.time_median, r.time_max
                );
                let _ = writeln!(out, "histogram (value: count):");
                for (v, c) in &r.histogram {
                    let _ = writeln!(out, "  {v}: {c}");
                }
            }
            Self::Rate(r) => {
                let _ = writeln!(out, "cycle n: {}, runs: {}", r.cycle_n, r.rows.len());
                let _ = writeln!(
                    out,
                    "rho_hat: median {:.6}, mean {:.6}, q10 {:.6}, q90 {:.6}",
                    r.rho_median, r.rho_mean, r.rho_q10, r.rho_q90
                );
                let _ = writeln!(out, "all slopes negative: {}", r.all_slopes_negative);
            }
            Self::Verify(r) => {
                for c in &r.checks {
                    let _ = writeln!(
                        out,
                        "{} {} (samples {}, max violation {:.3e})",
                        if c.passed { "PASS" } else { "FAIL" },
                        c.name,
                        c.samples,
                        c.max_violation
                    );
                }
                let _ = writeln!(out, "overall: {}", if r.passed { "PASS" } else { "FAIL" });
            }
            Self::Single(r) => {
                let _ = writeln!(out, "steps: {}", r.rows.len());
                let _ = writeln!(out, "absorbed: {}, final d: {}", r.absorbed, r.final_d);
                if !r.degree_one_nodes.is_empty() {
                    let _ = writeln!(
                        out,
                        "note: degree-1 nodes {:?}; convergence is not guaranteed there",
                        r.degree_one_nodes
                    );
                }
            }
        }
        out
    }

    /// Write the report to `path`. Row-oriented reports honour the format;
    /// the verification report is always a JSON document.
    pub fn persist(&self, path: &str, format: OutputFormat) -> Result<(), ExperimentError> {
        let contents = self.render(format);
        write_file(path, &contents)
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match self {
            Self::Verify(r) => r.to_json(),
            Self::AbsorbHist(r) => render_rows(
                &r.provenance,
                format,
                "run_index,absorb_value,absorb_time",
                &r.rows,
                |row| format!("{},{},{}", row.run_index, row.absorb_value, row.absorb_time),
            ),
            Self::Rate(r) => render_rows(
                &r.provenance,
                format,
                "run_index,rho_hat,n_embedded,r_squared",
                &r.rows,
                |row| {
                    format!("{},{},{},{}", row.run_index, row.rho_hat, row.n_embedded, row.r_squared)
                },
            ),
            Self::Single(r) => render_rows(
                &r.provenance,
                format,
                "t,node,old_value,new_value,d_before,d_after",
                &r.rows,
                |row| {
                    format!(
                        "{},{},{},{},{},{}",
                        row.t, row.node, row.old_value, row.new_value, row.d_before, row.d_after
                    )
                },
            ),
        }
    }
}

fn render_rows<R: Serialize>(
    prov: &Provenance,
    format: OutputFormat,
    csv_header: &str,
    rows: &[R],
    to_csv: impl Fn(&R) -> String,
) -> String {
    let mut out = String::new();
    match format {
        OutputFormat::Csv => {
            let _ = writeln!(out, "# spec_hash={} seed={}", prov.spec_hash, prov.seed);
            let _ = writeln!(out, "{csv_header}");
            for row in rows {
                let _ = writeln!(out, "{}", to_csv(row));
            }
        }
        OutputFormat::Jsonl => {
            let meta = json!({"spec_hash": prov.spec_hash, "seed": prov.seed});
            let _ = writeln!(out, "{meta}");
            for row in rows {
                let _ = writeln!(out, "{}", serde_json::to_string(row).expect("row serializes"));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

/// Execute with the parallel worker pool when the `parallel` feature is
/// enabled.
pub fn execute(spec: &ExperimentSpec) -> Result<RunReport, ExperimentError> {
    execute_inner(spec, false)
}

/// Always execute runs sequentially; produces a report identical to
/// [`execute`].
pub fn execute_serial(spec: &ExperimentSpec) -> Result<RunReport, ExperimentError> {
    execute_inner(spec, true)
}

fn execute_inner(spec: &ExperimentSpec, serial: bool) -> Result<RunReport, ExperimentError> {
    let started = Instant::now();
    let hash = spec_hash(spec);
    let mut report = match spec {
        ExperimentSpec::AbsorbHist { topology, distribution, runs, seed, max_steps, .. } => {
            RunReport::AbsorbHist(run_absorb_hist(
                topology,
                distribution,
                *runs,
                *seed,
                *max_steps,
                serial,
            )?)
        }
        ExperimentSpec::RateEstimate {
            cycle_n,
            runs,
            embedded_steps,
            burn_in,
            xi_floor,
            seed,
            ..
        } => RunReport::Rate(run_rate_estimate(
            *cycle_n,
            *runs,
            *embedded_steps,
            *burn_in,
            *xi_floor,
            *seed,
            serial,
        )?),
        ExperimentSpec::VerifySuite { samples, seed, .. } => {
            RunReport::Verify(run_verify_suite(*samples, *seed, serial))
        }
        ExperimentSpec::SingleRun { topology, distribution, mode, stop, init, seed, .. } => {
            RunReport::Single(run_single(topology, distribution, *mode, *stop, init, *seed)?)
        }
    };
    let wall_ms = started.elapsed().as_millis() as u64;
    let prov = Provenance { spec_hash: hash, seed: spec.seed(), wall_ms };
    match &mut report {
        RunReport::AbsorbHist(r) => r.provenance = prov,
        RunReport::Rate(r) => r.provenance = prov,
        RunReport::Verify(r) => r.provenance = prov,
        RunReport::Single(r) => r.provenance = prov,
    }
    Ok(report)
}

fn placeholder_provenance() -> Provenance {
    Provenance { spec_hash: String::new(), seed: 0, wall_ms: 0 }
}

fn run_absorb_hist(
    topology: &TopologySpec,
    distribution: &DistributionSpec,
    runs: u64,
    seed: u64,
    max_steps: u64,
    serial: bool,
) -> Result<AbsorbHistReport, ExperimentError> {
    if runs == 0 {
        return Err(ExperimentError::InvalidSpec("runs must be at least 1".into()));
    }
    if distribution.is_continuous() {
        return Err(ExperimentError::InvalidSpec(
            "absorb_hist requires a discrete distribution".into(),
        ));
    }
    if !distribution.is_equally_spaced() {
        return Err(ExperimentError::EqualSpacingRequired);
    }
    let topo = topology.build()?;
    let dist = DiscreteDist::from_spec(distribution)?;
    let results = map_indexed(runs, serial, |i| -> Result<AbsorbRow, ExperimentError> {
        let mut rng = stream_rng(seed, i);
        let mut cfg = iid_configuration(&dist, topo.node_count(), &mut rng);
        let mut t = 0u64;
        while crate::process::step_fast(&mut cfg, &topo, &dist, &mut rng).is_some() {
            t += 1;
            if t > max_steps {
                return Err(ExperimentError::AbsorptionTimeout { run: i, cap: max_steps });
            }
        }
        Ok(AbsorbRow { run_index: i, absorb_value: cfg.get(0), absorb_time: t })
    });
    let rows: Vec<AbsorbRow> = results.into_iter().collect::<Result<_, _>>()?;
    let times: Vec<f64> = rows.iter().map(|r| r.absorb_time as f64).collect();
    let support = dist.support();
    Ok(AbsorbHistReport {
        provenance: placeholder_provenance(),
        histogram: histogram_of(support, &rows),
        time_mean: stats::mean(&times).unwrap_or(0.0),
        time_median: stats::median(&times).unwrap_or(0.0),
        time_max: rows.iter().map(|r| r.absorb_time).max().unwrap_or(0),
        rows,
    })
}

fn run_rate_estimate(
    cycle_n: usize,
    runs: u64,
    embedded_steps: u64,
    burn_in: f64,
    xi_floor: f64,
    seed: u64,
    serial: bool,
) -> Result<RateReport, ExperimentError> {
    if cycle_n < 5 {
        return Err(ExperimentError::RateRequiresN5(cycle_n));
    }
    if runs == 0 {
        return Err(ExperimentError::InvalidSpec("runs must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&burn_in) {
        return Err(ExperimentError::InvalidSpec("burn_in must lie in [0, 1)".into()));
    }
    let topo = Topology::cycle(cycle_n)?;
    let results = map_indexed(runs, serial, |i| -> Result<RateRow, ExperimentError> {
        let mut rng = stream_rng(seed, i);
        let init = random_unit_configuration(cycle_n, &mut rng);
        let er = run_embedded(&topo, init, embedded_steps, xi_floor, &mut rng)?;
        // ξ = 0 marks float-level collapse; regression uses the decay before it
        let ln_xi: Vec<f64> =
            er.xi.iter().take_while(|&&x| x > 0.0).map(|&x| x.ln()).collect();
        let burn = (ln_xi.len() as f64 * burn_in).floor() as usize;
        let xs: Vec<f64> = (burn..ln_xi.len()).map(|s| s as f64).collect();
        let ys = &ln_xi[burn..];
        if xs.len() < 10 {
            return Err(ExperimentError::InsufficientData { run: i, points: xs.len() });
        }
        let fit = stats::linear_fit(&xs, ys)
            .ok_or(ExperimentError::InsufficientData { run: i, points: xs.len() })?;
        Ok(RateRow {
            run_index: i,
            rho_hat: -fit.slope,
            n_embedded: (er.xi.len() - 1) as u64,
            r_squared: fit.r_squared,
        })
    });
    let rows: Vec<RateRow> = results.into_iter().collect::<Result<_, _>>()?;
    let rhos: Vec<f64> = rows.iter().map(|r| r.rho_hat).collect();
    Ok(RateReport {
        provenance: placeholder_provenance(),
        cycle_n,
        rho_median: stats::median(&rhos).unwrap_or(f64::NAN),
        rho_mean: stats::mean(&rhos).unwrap_or(f64::NAN),
        rho_q10: stats::quantile(&rhos, 0.1).unwrap_or(f64::NAN),
        rho_q90: stats::quantile(&rhos, 0.9).unwrap_or(f64::NAN),
        all_slopes_negative: rows.iter().all(|r| r.rho_hat > 0.0),
        rows,
    })
}

fn run_single(
    topology: &TopologySpec,
    distribution: &DistributionSpec,
    mode: UpdateMode,
    stop: StopRule,
    init: &InitSpec,
    seed: u64,
) -> Result<SingleRunReport, ExperimentError> {
    let topo = topology.build()?;
    match distribution {
        DistributionSpec::Uniform01 => {
            let mut rng = stream_rng(seed, 0);
            let initial = match init {
                InitSpec::Iid => iid_configuration(&Uniform01, topo.node_count(), &mut rng),
                InitSpec::File { path } => {
                    let cfg = Configuration::<f64>::from_text(&read_file(path)?)?;
                    validate_init(&cfg, &topo, |v| (0.0..=1.0).contains(&v))?;
                    cfg
                }
            };
            let tr =
                run(initial, &topo, &Uniform01, distribution, &mut rng, mode, stop, seed)?;
            debug_assert!(replay(&tr, &topo).is_ok());
            Ok(single_report(&tr, &topo))
        }
        DistributionSpec::Discrete { .. } => {
            let dist = DiscreteDist::from_spec(distribution)?;
            let mut rng = stream_rng(seed, 0);
            let initial = match init {
                InitSpec::Iid => iid_configuration(&dist, topo.node_count(), &mut rng),
                InitSpec::File { path } => {
                    let cfg = Configuration::<i64>::from_text(&read_file(path)?)?;
                    validate_init(&cfg, &topo, |v| dist.support().binary_search(&v).is_ok())?;
                    cfg
                }
            };
            let tr = run(initial, &topo, &dist, distribution, &mut rng, mode, stop, seed)?;
            debug_assert!(replay(&tr, &topo).is_ok());
            Ok(single_report(&tr, &topo))
        }
    }
}

fn validate_init<V: crate::process::Fitness>(
    cfg: &Configuration<V>,
    topo: &Topology,
    in_support: impl Fn(V) -> bool,
) -> Result<(), ExperimentError> {
    if cfg.len() != topo.node_count() {
        return Err(ExperimentError::Process(ProcessError::LengthMismatch {
            got: cfg.len(),
            want: topo.node_count(),
        }));
    }
    for v in cfg.values() {
        if !in_support(*v) {
            return Err(ExperimentError::Process(ProcessError::ValueOutsideSupport(format!(
                "{v}"
            ))));
        }
    }
    Ok(())
}

fn single_report<V: crate::process::Fitness>(
    tr: &Trajectory<V>,
    topo: &Topology,
) -> SingleRunReport {
    let rows = tr
        .records
        .iter()
        .filter_map(|rec| match &rec.action {
            StepAction::Absorbed => None,
            StepAction::Replaced { node, old, new, d_after } => Some(TrajectoryRow {
                t: rec.t,
                node: node + 1,
                old_value: format!("{old}"),
                new_value: format!("{new}"),
                d_before: rec.d_before,
                d_after: *d_after,
            }),
        })
        .collect();
    SingleRunReport {
        provenance: placeholder_provenance(),
        rows,
        absorbed: tr.absorbed,
        final_d: max_nonconformity(&tr.final_config, topo).0,
        final_values: tr.final_config.values().iter().map(|v| format!("{v}")).collect(),
        degree_one_nodes: topo.degree_one_nodes().iter().map(|v| v + 1).collect(),
    }
}

// ---------------------------------------------------------------------------
// Verification suite
// ---------------------------------------------------------------------------

const BATCHES: u64 = 64;

/// Stream index for a suite check batch; check ids keep the fan-out streams
/// of different checks disjoint.
fn check_stream(seed: u64, check_id: u64, batch: u64) -> rand_chacha::ChaCha8Rng {
    stream_rng(seed, (check_id << 32) | batch)
}

fn batch_sizes(total: u64) -> Vec<u64> {
    let base = total / BATCHES;
    let rem = total % BATCHES;
    (0..BATCHES).map(|b| base + u64::from(b < rem)).filter(|&s| s > 0).collect()
}

/// Run every certifier at sizes scaled from `samples` (the size of the
/// largest sweeps).
pub fn run_verify_suite(samples: u64, seed: u64, serial: bool) -> VerifyReport {
    let samples = samples.max(1_000);
    let checks = vec![
        check_potential_zero_iff_deviation_zero(),
        check_floor_midpoint_descent(samples, seed, serial),
        check_absorbing_paths(samples, seed, serial),
        check_stable_family(seed),
        check_degree_counterexample(seed),
        check_argmax_uniqueness(samples.min(1_000_000), seed, serial),
        check_h_two_forms((samples / 10).max(10_000), seed, serial),
        check_metric_bounds_sweep(samples, seed, serial),
        check_drift_nonpositive(samples, seed, serial),
        check_drift_mc_agreement(samples, seed, serial),
        check_decrease_window_sweep((samples / 10).max(10_000), seed, serial),
        check_rejection_region_sweep((samples / 10).max(10_000), seed, serial),
        check_embed_consistency(seed),
        check_embedded_step_bounds((samples / 10).clamp(10_000, 100_000), seed, serial),
        check_decrease_probability(samples.min(100_000), seed, serial),
        check_xi_conditional_drift(seed),
        check_limit_shape_and_decay(seed),
    ];
    let passed = checks.iter().all(|c| c.passed);
    VerifyReport { provenance: placeholder_provenance(), samples, checks, passed }
}

fn check_potential_zero_iff_deviation_zero() -> CheckReport {
    // exhaustive over every configuration with M ≤ 3, N ≤ 6
    let mut count = 0u64;
    let mut violations = 0u64;
    let mut witness = None;
    for m in 1..=3i64 {
        for n in 3..=6usize {
            let topo = Topology::cycle(n).expect("n >= 3");
            let total = (m as u64).pow(n as u32);
            for code in 0..total {
                let mut c = code;
                let values: Vec<i64> = (0..n)
                    .map(|_| {
                        let v = (c % m as u64) as i64 + 1;
                        c /= m as u64;
                        v
                    })
                    .collect();
                let cfg = Configuration::new(values.clone());
                let f = lyapunov_f(&cfg, &topo).expect("cycle");
                let (d, _) = max_nonconformity(&cfg, &topo);
                count += 1;
                if (f == 0) != (d == 0.0) {
                    violations += 1;
                    witness.get_or_insert_with(|| json!({"values": values, "f": f, "d": d}));
                }
            }
        }
    }
    CheckReport {
        name: "potential_zero_iff_deviation_zero".into(),
        samples: count,
        max_violation: violations as f64,
        passed: violations == 0,
        witness,
        detail: "f(x) = 0 exactly when d(x) = 0, exhaustively for M ≤ 3, N ≤ 6".into(),
    }
}

fn check_floor_midpoint_descent(samples: u64, seed: u64, serial: bool) -> CheckReport {
    let sizes = batch_sizes(samples);
    let batches = map_indexed(sizes.len() as u64, serial, |b| {
        let mut rng = check_stream(seed, 2, b);
        let mut violations = 0u64;
        let mut witness = None;
        for _ in 0..sizes[b as usize] {
            let n = rng.random_range(3..=12usize);
            let m = rng.random_range(1..=10i64);
            let topo = Topology::cycle(n).expect("n >= 3");
            let values: Vec<i64> = (0..n).map(|_| rng.random_range(1..=m)).collect();
            let cfg = Configuration::new(values.clone());
            let i = rng.random_range(0..n);
            let descent = crate::discrete::check_f_decrease(&cfg, &topo, i).expect("cycle");
            if !descent.holds_weak() || !descent.holds_strict() {
                violations += 1;
                witness.get_or_insert_with(|| json!({"values": values, "node": i}));
            }
        }
        (violations, witness)
    });
    let violations: u64 = batches.iter().map(|(v, _)| v).sum();
    let witness = batches.into_iter().find_map(|(_, w)| w);
    CheckReport {
        name: "floor_midpoint_f_descent".into(),
        samples,
        max_violation: violations as f64,
        passed: violations == 0,
        witness,
        detail: "floor-midpoint replacement never raises f and drops it by ≥ 1 when 2d_i ≥ 2"
            .into(),
    }
}

fn check_absorbing_paths(samples: u64, seed: u64, serial: bool) -> CheckReport {
    let (n, m) = (8usize, 5i64);
    let bound = (m * m) as u64 * n as u64 * (n as u64 - 2);
    let paths = (samples / 100).clamp(1_000, 10_000);
    let sizes = batch_sizes(paths);
    let batches = map_indexed(sizes.len() as u64, serial, |b| {
        let topo = Topology::cycle(n).expect("n >= 3");
        let mut rng = check_stream(seed, 3, b);
        let mut max_len = 0u64;
        let mut violations = 0u64;
        let mut witness = None;
        for _ in 0..sizes[b as usize] {
            let values: Vec<i64> = (0..n).map(|_| rng.random_range(1..=m)).collect();
            let cfg = Configuration::new(values.clone());
            let path = construct_absorbing_path(&cfg, &topo).expect("cycle");
            max_len = max_len.max(path.len());
            if path.len() > bound || !path.window_descent_holds(n) {
                violations += 1;
                witness.get_or_insert_with(|| json!({"values": values, "len": path.len()}));
            }
        }
        (max_len, violations, witness)
    });
    let max_len = batches.iter().map(|(l, _, _)| *l).max().unwrap_or(0);
    let violations: u64 = batches.iter().map(|(_, v, _)| v).sum();
    let witness = batches.into_iter().find_map(|(_, _, w)| w);
    CheckReport {
        name: "absorbing_path_bound".into(),
        samples: paths,
        max_violation: violations as f64,
        passed: violations == 0,
        witness,
        detail: format!(
            "greedy paths at (N, M) = ({n}, {m}) terminate within {bound} steps \
             (observed max {max_len}) and f drops every N−2 steps"
        ),
    }
}

fn check_stable_family(seed: u64) -> CheckReport {
    let topo = Topology::cycle(8).expect("8 >= 3");
    let spec = DistributionSpec::discrete_uniform_support(vec![0, 1, 5, 6]).expect("valid");
    let dist = DiscreteDist::from_spec(&spec).expect("discrete");
    let mut violations = 0u64;
    let mut witness = None;
    let mut steps_total = 0u64;
    let members: Vec<(i64, i64)> =
        [0i64, 1, 5, 6].iter().flat_map(|&x| [0i64, 1, 5, 6].map(|y| (x, y))).collect();
    for (k, &(x, y)) in members.iter().enumerate() {
        let mut rng = check_stream(seed, 4, k as u64);
        let mut cfg = stable_family_member(x, y).expect("family member");
        for t in 0..625u64 {
            let rec = step(&mut cfg, &topo, &dist, &mut rng, UpdateMode::Raw, t);
            steps_total += 1;
            let (d, argmax) = max_nonconformity(&cfg, &topo);
            let ok = in_stable_family(&cfg)
                && !cfg.is_constant()
                && (d == 2.0 || d == 3.0)
                && argmax.iter().all(|&i| i == 2 || i == 6)
                && matches!(rec.action, StepAction::Replaced { .. });
            if !ok {
                violations += 1;
                witness.get_or_insert_with(|| json!({"start": [x, y], "values": cfg.values()}));
            }
        }
    }
    CheckReport {
        name: "stable_family_invariance".into(),
        samples: steps_total,
        max_violation: violations as f64,
        passed: violations == 0,
        witness,
        detail: "[0,1,x,5,6,5,y,1] over support {0,1,5,6} is closed, never absorbs, \
                 and its worst node stays at position 3 or 7 with d ∈ {2, 3}"
            .into(),
    }
}

fn check_degree_counterexample(seed: u64) -> CheckReport {
    let topo = Topology::counterexample_graph();
    let spec = DistributionSpec::discrete_uniform_support(vec![0, 1]).expect("valid");
    let dist = DiscreteDist::from_spec(&spec).expect("discrete");
    let mut violations = 0u64;
    let mut witness = None;
    let mut steps_total = 0u64;
    for (k, (x, y)) in [(0i64, 0i64), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
        let mut rng = check_stream(seed, 5, k as u64);
        let mut cfg = Configuration::new(vec![0, x, y, 1, 0, 1]);
        for t in 0..2_500u64 {
            let rec = step(&mut cfg, &topo, &dist, &mut rng, UpdateMode::Raw, t);
            steps_total += 1;
            let replaced = rec.replaced_node();
            let ok = matches!(replaced, Some(1) | Some(2)) && !cfg.is_constant();
            if !ok {
                violations += 1;
                witness.get_or_insert_with(
                    || json!({"start": [x, y], "replaced": replaced, "values": cfg.values()}),
                );
            }
        }
    }
    CheckReport {
        name: "degree_counterexample".into(),
        samples: steps_total,
        max_violation: violations as f64,
        passed: violations == 0,
        witness,
        detail: "on the 6-vertex two-ear graph with ζ uniform on {0,1}, only the two \
                 interior nodes are ever replaced and the chain never absorbs"
            .into(),
    }
}

fn check_argmax_uniqueness(samples: u64, seed: u64, serial: bool) -> CheckReport {
    let sizes = batch_sizes(samples);
    let ties: u64 = map_indexed(sizes.len() as u64, serial, |b| {
        let mut rng = check_stream(seed, 6, b);
        let mut ties = 0u64;
        for _ in 0..sizes[b as usize] {
            let n = rng.random_range(5..=12usize);
            let topo = Topology::cycle(n).expect("n >= 3");
            let cfg = random_unit_configuration(n, &mut rng);
            if max_nonconformity(&cfg, &topo).1.len() != 1 {
                ties += 1;
            }
        }
        ties
    })
    .into_iter()
    .sum();
    CheckReport {
        name: "argmax_uniqueness".into(),
        samples,
        max_violation: ties as f64,
        passed: ties == 0,
        witness: None,
        detail: "random continuous configurations never tie in their worst node".into(),
    }
}

fn check_h_two_forms(samples: u64, seed: u64, serial: bool) -> CheckReport {
    let sizes = batch_sizes(samples);
    let max_gap = map_indexed(sizes.len() as u64, serial, |b| {
        let mut rng = check_stream(seed, 7, b);
        let mut max_gap = 0.0f64;
        for _ in 0..sizes[b as usize] {
            let n = rng.random_range(5..=12usize);
            let topo = Topology::cycle(n).expect("n >= 3");
            let cfg = random_unit_configuration(n, &mut rng);
            let h1 = lyapunov_h(&cfg, &topo).expect("cycle");
            let h2 = lyapunov_h_expanded(&cfg, &topo).expect("cycle");
            max_gap = max_gap.max((h1 - h2).abs());
        }
        max_gap
    })
    .into_iter()
    .fold(0.0f64, f64::max);
    CheckReport {
        name: "h_two_forms".into(),
        samples,
        max_violation: max_gap,
        passed: max_gap <= DRIFT_TOL,
        witness: None,
        detail: "the difference form and the expanded quadratic form of h agree".into(),
    }
}

fn check_metric_bounds_sweep(samples: u64, seed: u64, serial: bool) -> CheckReport {
    let sizes = batch_sizes(samples);
    let batches = map_indexed(sizes.len() as u64, serial, |b| {
        let mut rng = check_stream(seed, 8, b);
        let mut violations = 0u64;
        let mut witness = None;
        for _ in 0..sizes[b as usize] {
            let n = rng.random_range(5..=12usize);
            let topo = Topology::cycle(n).expect("n >= 3");
            let cfg = random_unit_configuration(n, &mut rng);
            let mb = check_metric_bounds(&cfg, &topo).expect("cycle");
            if !mb.holds() {
                violations += 1;
                witness.get_or_insert_with(|| json!({"values": cfg.values(), "bounds": mb}));
            }
        }
        (violations, witness)
    });
    let violations: u64 = batches.iter().map(|(v, _)| v).sum();
    let witness = batches.into_iter().find_map(|(_, w)| w);
    CheckReport {
        name: "metric_bounds".into(),
        samples,
        max_violation: violations as f64,
        passed: violations == 0,
        witness,
        detail: "d ≤ max|Δ| ≤ N·d and 2d² ≤ h ≤ 6N³d² on random configurations, N ∈ 5..=12"
            .into(),
    }
}

fn check_drift_nonpositive(samples: u64, seed: u64, serial: bool) -> CheckReport {
    let sizes = batch_sizes(samples);
    let certs = map_indexed(sizes.len() as u64, serial, |b| {
        let mut rng = check_stream(seed, 9, b);
        continuous::verify_drift_nonpositive(sizes[b as usize], &mut rng)
    });
    let mut max_drift = f64::NEG_INFINITY;
    let mut worst = None;
    let mut max_form_gap = 0.0f64;
    let mut max_refl_gap = 0.0f64;
    let mut total = 0u64;
    let mut boundary = 0u64;
    for c in &certs {
        if c.max_drift > max_drift {
            max_drift = c.max_drift;
            worst = c.worst_window;
        }
        max_form_gap = max_form_gap.max(c.max_form_gap);
        max_refl_gap = max_refl_gap.max(c.max_reflection_gap);
        total += c.samples;
        boundary += c.boundary_samples;
    }
    let passed = max_drift <= DRIFT_TOL && max_form_gap <= DRIFT_TOL && max_refl_gap <= DRIFT_TOL;
    CheckReport {
        name: "drift_nonpositive".into(),
        samples: total + boundary,
        max_violation: max_drift.max(max_form_gap).max(max_refl_gap),
        passed,
        witness: worst.map(|w| json!({"window": w})),
        detail: format!(
            "conditional drift of ξ is never positive on {total} feasible windows plus \
             {boundary} boundary-pinned ones; closed forms and the reflection agree"
        ),
    }
}

fn check_drift_mc_agreement(samples: u64, seed: u64, serial: bool) -> CheckReport {
    let windows = (samples / 1_000).clamp(10, 1_000);
    let draws = 100_000u64;
    let sizes = batch_sizes(windows);
    let reports = map_indexed(sizes.len() as u64, serial, |b| {
        let mut rng = check_stream(seed, 10, b);
        continuous::drift_mc_agreement(sizes[b as usize], draws, 4.0, &mut rng)
    });
    let max_abs_z = reports.iter().map(|r| r.max_abs_z).fold(0.0f64, f64::max);
    let passed = reports.iter().all(|r| r.passed);
    CheckReport {
        name: "drift_mc_agreement".into(),
        samples: windows,
        max_violation: max_abs_z,
        passed,
        witness: None,
        detail: format!(
            "closed-form drift matches the Monte-Carlo integral within 4 standard errors \
             on {windows} windows of {draws} draws each"
        ),
    }
}

fn check_decrease_window_sweep(samples: u64, seed: u64, serial: bool) -> CheckReport {
    let sizes = batch_sizes(samples);
    let batches = map_indexed(sizes.len() as u64, serial, |b| {
        let mut rng = check_stream(seed, 11, b);
        let mut worst_margin = f64::NEG_INFINITY;
        let mut witness = None;
        for _ in 0..sizes[b as usize] {
            let w = sample_feasible_window(&mut rng);
            let delta = w.delta();
            let lo = (w.mu() - delta / 6.0).max(0.0);
            let hi = (w.mu() + delta / 6.0).min(1.0);
            let u = lo + rng.random::<f64>() * (hi - lo);
            let dh = continuous::check_decrease_window(&w, u).expect("inside window");
            let margin = dh + (5.0 / 6.0) * delta * delta;
            if margin > worst_margin {
                worst_margin = margin;
                if margin > DRIFT_TOL {
                    witness = Some(json!({"window": w.values(), "u": u, "dh": dh}));
                }
            }
        }
        (worst_margin, witness)
    });
    let worst = batches.iter().map(|(m, _)| *m).fold(f64::NEG_INFINITY, f64::max);
    let witness = batches.into_iter().find_map(|(_, w)| w);
    CheckReport {
        name: "decrease_window".into(),
        samples,
        max_violation: worst,
        passed: worst <= DRIFT_TOL,
        witness,
        detail: "draws within δ/6 of the neighbour midpoint drop h by at least (5/6)δ²".into(),
    }
}

fn check_rejection_region_sweep(samples: u64, seed: u64, serial: bool) -> CheckReport {
    let sizes = batch_sizes(samples);
    let batches = map_indexed(sizes.len() as u64, serial, |b| {
        let mut rng = check_stream(seed, 12, b);
        let mut violations = 0u64;
        let mut checked = 0u64;
        let mut witness = None;
        while checked < sizes[b as usize] {
            let w = sample_feasible_window(&mut rng);
            let lo = w.mu() - 3.0 * w.delta();
            let hi = w.values()[2];
            // measure of [0,1] \ [lo, hi]
            if lo.max(0.0) + (1.0 - hi) < 1e-3 {
                continue;
            }
            let u = rng.random::<f64>();
            if u >= lo && u <= hi {
                continue;
            }
            checked += 1;
            if !continuous::check_rejection_region(&w, u) {
                violations += 1;
                witness.get_or_insert_with(|| json!({"window": w.values(), "u": u}));
            }
        }
        (violations, witness)
    });
    let violations: u64 = batches.iter().map(|(v, _)| v).sum();
    let witness = batches.into_iter().find_map(|(_, w)| w);
    CheckReport {
        name: "rejection_region".into(),
        samples,
        max_violation: violations as f64,
        passed: violations == 0,
        witness,
        detail: "draws outside [μ−3δ, x₃] leave the centre worse and still strictly worst"
            .into(),
    }
}

fn check_embed_consistency(seed: u64) -> CheckReport {
    // dual route: embedded times from the defining comparison must coincide
    // with draws landing in the advance interval of the previous embedded
    // state
    let mut mismatches = 0u64;
    let mut excursion_breaks = 0u64;
    let mut embedded_total = 0u64;
    let runs = 10u64;
    for r in 0..runs {
        let topo = Topology::cycle(if r % 2 == 0 { 6 } else { 8 }).expect("cycle");
        let n = topo.node_count();
        let mut rng = check_stream(seed, 13, r);
        let init = iid_configuration(&Uniform01, n, &mut rng);
        let tr = run(
            init,
            &topo,
            &Uniform01,
            &DistributionSpec::Uniform01,
            &mut rng,
            UpdateMode::Raw,
            StopRule::MaxSteps(3_000),
            seed,
        )
        .expect("raw run");
        let e = continuous::embed(&tr, &topo).expect("continuous cycle");
        embedded_total += e.len() as u64;
        let mut k = 0usize;
        let mut predicted = vec![0u64];
        for (t, rec) in tr.records.iter().enumerate() {
            let StepAction::Replaced { node, new, .. } = rec.action else { break };
            if (t as u64) > e.times[k] && node != e.argmax[k] {
                excursion_breaks += 1;
            }
            let w = LocalWindow::around(&e.states[k], &topo, e.argmax[k]).expect("cycle");
            let advanced = w.interval_unchecked().contains(w.from_oriented(new));
            if advanced && k + 1 < e.times.len() {
                predicted.push(t as u64 + 1);
                k += 1;
            }
        }
        if predicted != e.times {
            mismatches += 1;
        }
    }
    CheckReport {
        name: "embed_acceptance_consistency".into(),
        samples: embedded_total,
        max_violation: (mismatches + excursion_breaks) as f64,
        passed: mismatches == 0 && excursion_breaks == 0,
        witness: None,
        detail: format!(
            "embedded times of {runs} raw runs coincide with advance-interval hits and \
             the replaced node is pinned between embedded times"
        ),
    }
}

/// Embedded-step budget shared by the step-bound checks: run whole embedded
/// runs (to the ξ floor) until the transition budget is reached.
fn accumulate_embedded(
    n: usize,
    transitions: u64,
    seed: u64,
    check_id: u64,
    mut on_step: impl FnMut(&continuous::EmbeddedStep),
) -> u64 {
    let topo = Topology::cycle(n).expect("n >= 5");
    let mut total = 0u64;
    let mut run_idx = 0u64;
    while total < transitions {
        let mut rng = check_stream(seed, check_id, run_idx);
        let init = random_unit_configuration(n, &mut rng);
        let mut chain = EmbeddedChain::new(&topo, init).expect("cycle");
        while chain.xi() >= default_xi_floor() && total < transitions {
            match chain.step(&mut rng) {
                Some(s) => {
                    total += 1;
                    on_step(&s);
                }
                None => break,
            }
        }
        run_idx += 1;
    }
    total
}

fn check_embedded_step_bounds(transitions: u64, seed: u64, _serial: bool) -> CheckReport {
    let mut accs = Vec::new();
    for (i, n) in [5usize, 8, 12].into_iter().enumerate() {
        let mut acc = StepBoundsAccumulator::new(n);
        accumulate_embedded(n, transitions / 3, seed, 14 + i as u64, |s| acc.push_step(s));
        accs.push((n, acc));
    }
    let violations: u64 =
        accs.iter().map(|(_, a)| a.sup_norm_violations + a.ratio_violations).sum();
    let total: u64 = accs.iter().map(|(_, a)| a.transitions).sum();
    let max_ratio = accs.iter().map(|(_, a)| a.max_ratio).fold(0.0f64, f64::max);
    CheckReport {
        name: "embedded_step_bounds".into(),
        samples: total,
        max_violation: violations as f64,
        passed: violations == 0,
        witness: None,
        detail: format!(
            "per-step sup-norm ≤ 4δ and ξ growth ≤ 121 on N ∈ {{5, 8, 12}} \
             (worst ξ ratio {max_ratio:.3})"
        ),
    }
}

fn check_decrease_probability(transitions: u64, seed: u64, _serial: bool) -> CheckReport {
    let mut acc = StepBoundsAccumulator::new(5);
    accumulate_embedded(5, transitions, seed, 17, |s| acc.push_step(s));
    let lcb = acc.decrease_lcb99();
    CheckReport {
        name: "decrease_probability".into(),
        samples: acc.transitions,
        max_violation: (DECREASE_PROB_BOUND - lcb).max(0.0),
        passed: lcb >= DECREASE_PROB_BOUND,
        witness: None,
        detail: format!(
            "P(ξ(s+1) ≤ ρ ξ(s)) at N = 5: frequency {:.4}, 99% LCB {:.4} ≥ 1/48",
            acc.decrease_frequency(),
            lcb
        ),
    }
}

fn check_xi_conditional_drift(seed: u64) -> CheckReport {
    let mut xi = Vec::new();
    let mut dxi = Vec::new();
    accumulate_embedded(5, 20_000, seed, 18, |s| {
        xi.push(s.h_before);
        dxi.push(s.h_after - s.h_before);
    });
    let fit = stats::linear_fit(&xi, &dxi).expect("enough points");
    let slope_ok = fit.slope <= stats::Z_99 * fit.se_slope;
    let intercept_ok = fit.intercept <= stats::Z_99 * fit.se_intercept;
    CheckReport {
        name: "xi_conditional_drift".into(),
        samples: xi.len() as u64,
        max_violation: (fit.slope - stats::Z_99 * fit.se_slope)
            .max(fit.intercept - stats::Z_99 * fit.se_intercept)
            .max(0.0),
        passed: slope_ok && intercept_ok,
        witness: None,
        detail: format!(
            "regression of ξ(s+1) − ξ(s) on ξ(s): slope {:.4} ± {:.4}, intercept {:.2e} ± {:.2e}, \
             neither significantly positive",
            fit.slope, fit.se_slope, fit.intercept, fit.se_intercept
        ),
    }
}

fn check_limit_shape_and_decay(seed: u64) -> CheckReport {
    let mut violations = 0u64;
    let mut runs = 0u64;
    let mut witness = None;
    for (k, n) in [5usize, 6, 8, 10].into_iter().enumerate() {
        let topo = Topology::cycle(n).expect("cycle");
        for r in 0..3u64 {
            runs += 1;
            let mut rng = check_stream(seed, 19, (k as u64) << 8 | r);
            let init = random_unit_configuration(n, &mut rng);
            let er = run_embedded(&topo, init, 1_000_000, 1e-24, &mut rng).expect("cycle");
            let shape = check_limit_shape(&er.final_config, &topo).expect("cycle");
            let ln_xi: Vec<f64> = er.xi.iter().map(|&x| x.ln()).collect();
            let xs: Vec<f64> = (0..ln_xi.len()).map(|s| s as f64).collect();
            let slope = stats::linear_fit(&xs, &ln_xi).map(|f| f.slope).unwrap_or(0.0);
            if !shape.holds || shape.spread_non_argmax > 1e-6 || slope >= 0.0 {
                violations += 1;
                witness.get_or_insert_with(|| json!({"n": n, "run": r, "slope": slope}));
            }
        }
    }
    CheckReport {
        name: "limit_shape_and_decay".into(),
        samples: runs,
        max_violation: violations as f64,
        passed: violations == 0,
        witness,
        detail: "long embedded runs end with all non-worst values collapsed (spread ≤ 10√h \
                 and ≤ 1e−6) and ln ξ decaying at a strictly negative slope"
            .into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn absorb_spec(n: usize, m: usize, runs: u64, seed: u64) -> ExperimentSpec {
        ExperimentSpec::AbsorbHist {
            topology: TopologySpec::Cycle { n },
            distribution: DistributionSpec::discrete_uniform(m).unwrap(),
            runs,
            seed,
            max_steps: default_absorb_cap(),
            output: None,
        }
    }

    #[test]
    fn absorb_hist_runs_and_conserves_mass() {
        let spec = absorb_spec(6, 4, 200, 11);
        let RunReport::AbsorbHist(rep) = execute(&spec).unwrap() else { panic!() };
        assert_eq!(rep.rows.len(), 200);
        let mass: u64 = rep.histogram.iter().map(|(_, c)| c).sum();
        assert_eq!(mass, 200);
        // aggregates recomputable from rows
        let support: Vec<i64> = (1..=4).collect();
        assert_eq!(rep.recompute_histogram(&support), rep.histogram);
    }

    #[test]
    fn absorb_hist_single_value_support() {
        let spec = ExperimentSpec::AbsorbHist {
            topology: TopologySpec::Cycle { n: 5 },
            distribution: DistributionSpec::discrete_uniform(1).unwrap(),
            runs: 20,
            seed: 1,
            max_steps: 10,
            output: None,
        };
        let RunReport::AbsorbHist(rep) = execute(&spec).unwrap() else { panic!() };
        assert!(rep.rows.iter().all(|r| r.absorb_value == 1 && r.absorb_time == 0));
    }

    #[test]
    fn absorb_hist_rejects_bad_specs() {
        let continuous = ExperimentSpec::AbsorbHist {
            topology: TopologySpec::Cycle { n: 6 },
            distribution: DistributionSpec::Uniform01,
            runs: 5,
            seed: 0,
            max_steps: 100,
            output: None,
        };
        assert!(matches!(execute(&continuous), Err(ExperimentError::InvalidSpec(_))));

        let unequal = ExperimentSpec::AbsorbHist {
            topology: TopologySpec::Cycle { n: 8 },
            distribution: DistributionSpec::discrete_uniform_support(vec![0, 1, 5, 6]).unwrap(),
            runs: 5,
            seed: 0,
            max_steps: 100,
            output: None,
        };
        assert!(matches!(execute(&unequal), Err(ExperimentError::EqualSpacingRequired)));
    }

    #[test]
    fn parallel_and_serial_reports_match() {
        let spec = absorb_spec(8, 5, 300, 21);
        let RunReport::AbsorbHist(par) = execute(&spec).unwrap() else { panic!() };
        let RunReport::AbsorbHist(ser) = execute_serial(&spec).unwrap() else { panic!() };
        assert_eq!(par.rows, ser.rows);
        assert_eq!(par.histogram, ser.histogram);

        let spec = ExperimentSpec::RateEstimate {
            cycle_n: 5,
            runs: 40,
            embedded_steps: 3_000,
            burn_in: 0.1,
            xi_floor: default_xi_floor(),
            seed: 33,
            output: None,
        };
        let RunReport::Rate(par) = execute(&spec).unwrap() else { panic!() };
        let RunReport::Rate(ser) = execute_serial(&spec).unwrap() else { panic!() };
        assert_eq!(par.rows, ser.rows);
    }

    #[test]
    fn rate_estimate_shape() {
        let spec = ExperimentSpec::RateEstimate {
            cycle_n: 5,
            runs: 30,
            embedded_steps: 3_000,
            burn_in: 0.1,
            xi_floor: default_xi_floor(),
            seed: 5,
            output: None,
        };
        let RunReport::Rate(rep) = execute(&spec).unwrap() else { panic!() };
        assert_eq!(rep.rows.len(), 30);
        assert!(rep.all_slopes_negative);
        assert!(rep.rho_median > 0.0);
        for row in &rep.rows {
            assert!(row.n_embedded >= 10);
            assert!(row.r_squared > 0.5, "noisy fit: {row:?}");
        }
    }

    #[test]
    fn rate_estimate_guards() {
        let spec = ExperimentSpec::RateEstimate {
            cycle_n: 4,
            runs: 5,
            embedded_steps: 100,
            burn_in: 0.1,
            xi_floor: default_xi_floor(),
            seed: 5,
            output: None,
        };
        assert!(matches!(execute(&spec), Err(ExperimentError::RateRequiresN5(4))));

        let spec = ExperimentSpec::RateEstimate {
            cycle_n: 5,
            runs: 2,
            embedded_steps: 5,
            burn_in: 0.1,
            xi_floor: default_xi_floor(),
            seed: 5,
            output: None,
        };
        assert!(matches!(execute(&spec), Err(ExperimentError::InsufficientData { .. })));
    }

    #[test]
    fn single_run_discrete_until_absorbed() {
        let spec = ExperimentSpec::SingleRun {
            topology: TopologySpec::Cycle { n: 6 },
            distribution: DistributionSpec::discrete_uniform(4).unwrap(),
            mode: UpdateMode::Frozen,
            stop: StopRule::UntilAbsorbed,
            init: InitSpec::Iid,
            seed: 7,
            output: None,
        };
        let RunReport::Single(rep) = execute(&spec).unwrap() else { panic!() };
        assert!(rep.absorbed);
        assert_eq!(rep.final_d, 0.0);
        assert!(rep.final_values.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn spec_json_round_trip_and_hash_stability() {
        let spec = absorb_spec(20, 20, 1000, 99);
        let json = spec.to_json();
        let back = ExperimentSpec::from_json(&json).unwrap();
        assert_eq!(back, spec);
        assert_eq!(spec_hash(&spec), spec_hash(&back));
        // different seed, different hash
        let other = absorb_spec(20, 20, 1000, 100);
        assert_ne!(spec_hash(&spec), spec_hash(&other));
    }

    #[test]
    fn rendered_outputs_are_deterministic() {
        let spec = absorb_spec(6, 4, 50, 3);
        let a = execute(&spec).unwrap().render(OutputFormat::Csv);
        let b = execute(&spec).unwrap().render(OutputFormat::Csv);
        assert_eq!(a, b);
        let a = execute(&spec).unwrap().render(OutputFormat::Jsonl);
        let b = execute_serial(&spec).unwrap().render(OutputFormat::Jsonl);
        assert_eq!(a, b);
        assert!(a.starts_with("{\"seed\""), "meta line: {}", a.lines().next().unwrap());
    }

    #[test]
    fn csv_format_contract() {
        let spec = absorb_spec(6, 4, 3, 3);
        let csv = execute(&spec).unwrap().render(OutputFormat::Csv);
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("# spec_hash=") && header.contains(" seed=3"));
        assert_eq!(lines.next().unwrap(), "run_index,absorb_value,absorb_time");
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn verify_suite_small_budget_passes() {
        let report = run_verify_suite(2_000, 424_242, false);
        for check in &report.checks {
            assert!(check.passed, "{} failed: {}", check.name, check.detail);
        }
        assert!(report.passed);
    }

    #[test]
    fn verify_suite_serial_matches_parallel() {
        let par = run_verify_suite(2_000, 7, false);
        let ser = run_verify_suite(2_000, 7, true);
        assert_eq!(par.passed, ser.passed);
        for (a, b) in par.checks.iter().zip(&ser.checks) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.samples, b.samples);
            assert_eq!(a.max_violation, b.max_violation, "check {}", a.name);
        }
    }
}
