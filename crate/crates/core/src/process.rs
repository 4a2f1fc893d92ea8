//! The chain: compute local non-conformity, select the worst node with
//! uniform tie-breaking, replace its fitness by a fresh ζ-draw, iterate.
//!
//! The engine is generic over the fitness value type. Integer fitnesses use
//! exact scaled arithmetic for every comparison (a node's deviation is kept
//! as the integer `degree · d_v`, and deviations at nodes of different degree
//! are compared by cross-multiplication), so half-integer deviations never
//! suffer round-off. Continuous fitnesses compare with exact float equality;
//! ties then have probability zero but are still broken uniformly if a
//! hand-crafted configuration produces one.

use std::cmp::Ordering;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{Topology, TopologyDescriptor};

#[derive(Debug, Error, PartialEq)]
pub enum ProcessError {
    #[error("configuration has {got} values but the graph has {want} nodes")]
    LengthMismatch { got: usize, want: usize },
    #[error("discrete support must be non-empty, strictly increasing and within ±10^6")]
    BadSupport,
    #[error("probabilities must match the support length, be positive and sum to 1")]
    BadProbabilities,
    #[error("stop rule `until_absorbed` is invalid for a continuous distribution")]
    InvalidStopRule,
    #[error("value {0} is outside the distribution support")]
    ValueOutsideSupport(String),
    #[error("replay mismatch at step {0}")]
    ReplayMismatch(u64),
    #[error("bad configuration file: {0}")]
    BadConfigFile(String),
}

/// Derive the RNG stream for one unit of work (a run, a sweep batch) from
/// the experiment seed. Reproducibility is promised within this
/// implementation only, not across implementations.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index)
}

/// Fitness value: the per-node state component. Implemented for `i64`
/// (finite supports, exact arithmetic) and `f64` (uniform on [0,1]).
pub trait Fitness:
    Copy + PartialEq + PartialOrd + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Scaled deviation `degree · d_v`; exact for integers.
    type Scaled: Copy + PartialEq + fmt::Debug + Send + Sync;

    /// Whether the natural replacement law is continuous (absorption then has
    /// probability zero).
    const CONTINUOUS: bool;

    fn scaled_deviation(value: Self, neighbour_sum: Self, degree: usize) -> Self::Scaled;
    fn scaled_is_zero(s: Self::Scaled) -> bool;
    /// Compare `a / da` against `b / db` without dividing.
    fn cmp_scaled(a: Self::Scaled, da: usize, b: Self::Scaled, db: usize) -> Ordering;
    fn scaled_to_f64(s: Self::Scaled, degree: usize) -> f64;
    fn sum_values(values: &[Self], indices: &[usize]) -> Self;
    fn as_f64(self) -> f64;
}

impl Fitness for i64 {
    type Scaled = i128;
    const CONTINUOUS: bool = false;

    fn scaled_deviation(value: Self, neighbour_sum: Self, degree: usize) -> i128 {
        (value as i128 * degree as i128 - neighbour_sum as i128).abs()
    }

    fn scaled_is_zero(s: i128) -> bool {
        s == 0
    }

    fn cmp_scaled(a: i128, da: usize, b: i128, db: usize) -> Ordering {
        (a * db as i128).cmp(&(b * da as i128))
    }

    fn scaled_to_f64(s: i128, degree: usize) -> f64 {
        s as f64 / degree as f64
    }

    fn sum_values(values: &[Self], indices: &[usize]) -> Self {
        indices.iter().map(|&i| values[i]).sum()
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Fitness for f64 {
    type Scaled = f64;
    const CONTINUOUS: bool = true;

    fn scaled_deviation(value: Self, neighbour_sum: Self, degree: usize) -> f64 {
        (value * degree as f64 - neighbour_sum).abs()
    }

    fn scaled_is_zero(s: f64) -> bool {
        s == 0.0
    }

    fn cmp_scaled(a: f64, da: usize, b: f64, db: usize) -> Ordering {
        (a * db as f64)
            .partial_cmp(&(b * da as f64))
            .expect("fitness values must be finite")
    }

    fn scaled_to_f64(s: f64, degree: usize) -> f64 {
        s / degree as f64
    }

    fn sum_values(values: &[Self], indices: &[usize]) -> Self {
        indices.iter().map(|&i| values[i]).sum()
    }

    fn as_f64(self) -> f64 {
        self
    }
}

/// The chain state: one fitness per node, aligned to a topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration<V: Fitness> {
    values: Vec<V>,
}

impl<V: Fitness> Configuration<V> {
    pub fn new(values: Vec<V>) -> Self {
        Self { values }
    }

    pub fn for_topology(values: Vec<V>, topo: &Topology) -> Result<Self, ProcessError> {
        if values.len() != topo.node_count() {
            return Err(ProcessError::LengthMismatch {
                got: values.len(),
                want: topo.node_count(),
            });
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }

    pub fn get(&self, v: usize) -> V {
        self.values[v]
    }

    pub fn set(&mut self, v: usize, value: V) {
        self.values[v] = value;
    }

    /// A constant configuration is the absorbing shape: `d(x) = 0` on any
    /// connected graph.
    pub fn is_constant(&self) -> bool {
        self.values.windows(2).all(|w| w[0] == w[1])
    }

    /// Parse the configuration file format: one fitness per line in 1-based
    /// node order.
    pub fn from_text(text: &str) -> Result<Self, ProcessError>
    where
        V: std::str::FromStr,
    {
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v = line.parse::<V>().map_err(|_| {
                ProcessError::BadConfigFile(format!("line {}: bad value {line:?}", lineno + 1))
            })?;
            values.push(v);
        }
        if values.is_empty() {
            return Err(ProcessError::BadConfigFile("no values".into()));
        }
        Ok(Self { values })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.values {
            out.push_str(&format!("{v}\n"));
        }
        out
    }
}

/// Replacement law description. The discrete variant carries an explicit
/// integer support so the equal-spacing counterexamples (support {0,1,5,6})
/// are expressible; operations that rely on equal spacing check for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionSpec {
    Discrete { support: Vec<i64>, probs: Vec<f64> },
    Uniform01,
}

const SUPPORT_BOUND: i64 = 1_000_000;
const PROB_SUM_TOL: f64 = 1e-12;

impl DistributionSpec {
    /// ζ uniform on {1, …, m}.
    pub fn discrete_uniform(m: usize) -> Result<Self, ProcessError> {
        Self::discrete((1..=m as i64).collect(), vec![1.0 / m as f64; m])
    }

    /// ζ uniform on an explicit integer support.
    pub fn discrete_uniform_support(support: Vec<i64>) -> Result<Self, ProcessError> {
        let p = vec![1.0 / support.len() as f64; support.len()];
        Self::discrete(support, p)
    }

    pub fn discrete(support: Vec<i64>, probs: Vec<f64>) -> Result<Self, ProcessError> {
        if support.is_empty()
            || support.windows(2).any(|w| w[0] >= w[1])
            || support.iter().any(|v| v.abs() > SUPPORT_BOUND)
        {
            return Err(ProcessError::BadSupport);
        }
        if probs.len() != support.len() || probs.iter().any(|&p| p <= 0.0 || !p.is_finite()) {
            return Err(ProcessError::BadProbabilities);
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(ProcessError::BadProbabilities);
        }
        Ok(Self::Discrete { support, probs })
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, Self::Uniform01)
    }

    /// True if the support is an arithmetic progression (the assumption
    /// behind guaranteed absorption).
    pub fn is_equally_spaced(&self) -> bool {
        match self {
            Self::Uniform01 => true,
            Self::Discrete { support, .. } => {
                support.len() <= 2
                    || support
                        .windows(2)
                        .map(|w| w[1] - w[0])
                        .all(|step| step == support[1] - support[0])
            }
        }
    }

    pub fn support(&self) -> Option<&[i64]> {
        match self {
            Self::Discrete { support, .. } => Some(support),
            Self::Uniform01 => None,
        }
    }
}

/// Sampler for a replacement law producing fitnesses of type `V`.
pub trait ReplacementDist<V: Fitness>: Send + Sync {
    fn draw(&self, rng: &mut ChaCha8Rng) -> V;
    /// Whether `value` lies in the support (used to validate initial
    /// configurations).
    fn contains(&self, value: V) -> bool;
}

/// Inverse-CDF sampler over a finite integer support; consumes exactly one
/// uniform draw per sample.
#[derive(Debug, Clone)]
pub struct DiscreteDist {
    support: Vec<i64>,
    cumulative: Vec<f64>,
}

impl DiscreteDist {
    pub fn from_spec(spec: &DistributionSpec) -> Result<Self, ProcessError> {
        match spec {
            DistributionSpec::Discrete { support, probs } => {
                let mut cumulative = Vec::with_capacity(probs.len());
                let mut acc = 0.0;
                for p in probs {
                    acc += p;
                    cumulative.push(acc);
                }
                *cumulative.last_mut().expect("non-empty") = 1.0;
                Ok(Self { support: support.clone(), cumulative })
            }
            DistributionSpec::Uniform01 => Err(ProcessError::BadSupport),
        }
    }

    pub fn support(&self) -> &[i64] {
        &self.support
    }
}

impl ReplacementDist<i64> for DiscreteDist {
    fn draw(&self, rng: &mut ChaCha8Rng) -> i64 {
        let u: f64 = rng.random();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.support[idx.min(self.support.len() - 1)]
    }

    fn contains(&self, value: i64) -> bool {
        self.support.binary_search(&value).is_ok()
    }
}

/// ζ ~ U[0,1].
#[derive(Debug, Clone, Copy, Default)]
pub struct Uniform01;

impl ReplacementDist<f64> for Uniform01 {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        rng.random()
    }

    fn contains(&self, value: f64) -> bool {
        (0.0..=1.0).contains(&value)
    }
}

/// Draw an i.i.d. initial configuration from the replacement law.
pub fn iid_configuration<V: Fitness, D: ReplacementDist<V>>(
    dist: &D,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Configuration<V> {
    Configuration::new((0..n).map(|_| dist.draw(rng)).collect())
}

/// `d_v(x) = |x_v − (Σ_{u∼v} x_u) / N_v|`, the local non-conformity.
pub fn nonconformity<V: Fitness>(cfg: &Configuration<V>, topo: &Topology, v: usize) -> f64 {
    let nb = topo.adj(v);
    let sum = V::sum_values(cfg.values(), nb);
    let scaled = V::scaled_deviation(cfg.get(v), sum, nb.len());
    V::scaled_to_f64(scaled, nb.len())
}

fn scaled_at<V: Fitness>(cfg: &Configuration<V>, topo: &Topology, v: usize) -> (V::Scaled, usize) {
    let nb = topo.adj(v);
    let sum = V::sum_values(cfg.values(), nb);
    (V::scaled_deviation(cfg.get(v), sum, nb.len()), nb.len())
}

/// `d(x) = max_v d_v(x)` with its exact argmax set.
pub fn max_nonconformity<V: Fitness>(
    cfg: &Configuration<V>,
    topo: &Topology,
) -> (f64, Vec<usize>) {
    let n = topo.node_count();
    debug_assert_eq!(cfg.len(), n);
    let (mut best, mut best_deg) = scaled_at(cfg, topo, 0);
    let mut argmax = vec![0usize];
    for v in 1..n {
        let (s, deg) = scaled_at(cfg, topo, v);
        match V::cmp_scaled(s, deg, best, best_deg) {
            Ordering::Greater => {
                best = s;
                best_deg = deg;
                argmax.clear();
                argmax.push(v);
            }
            Ordering::Equal => argmax.push(v),
            Ordering::Less => {}
        }
    }
    (V::scaled_to_f64(best, best_deg), argmax)
}

/// Uniformly random element of the argmax set, drawn from the supplied
/// generator. A singleton set consumes no randomness.
pub fn select_worst<V: Fitness>(
    cfg: &Configuration<V>,
    topo: &Topology,
    rng: &mut ChaCha8Rng,
) -> usize {
    let scan = scan_worst(cfg, topo);
    resolve_worst(cfg, topo, &scan, rng)
}

/// Allocation-free summary of one argmax pass; hot loops use it instead of
/// materializing the argmax set.
pub(crate) struct WorstScan<V: Fitness> {
    pub best: V::Scaled,
    pub degree: usize,
    /// Lowest argmax index.
    pub first: usize,
    pub ties: usize,
}

impl<V: Fitness> WorstScan<V> {
    pub fn d(&self) -> f64 {
        V::scaled_to_f64(self.best, self.degree)
    }

    pub fn is_zero(&self) -> bool {
        V::scaled_is_zero(self.best)
    }
}

pub(crate) fn scan_worst<V: Fitness>(cfg: &Configuration<V>, topo: &Topology) -> WorstScan<V> {
    let n = topo.node_count();
    debug_assert_eq!(cfg.len(), n);
    let (mut best, mut degree) = scaled_at(cfg, topo, 0);
    let mut first = 0usize;
    let mut ties = 1usize;
    for v in 1..n {
        let (s, deg) = scaled_at(cfg, topo, v);
        match V::cmp_scaled(s, deg, best, degree) {
            Ordering::Greater => {
                best = s;
                degree = deg;
                first = v;
                ties = 1;
            }
            Ordering::Equal => ties += 1,
            Ordering::Less => {}
        }
    }
    WorstScan { best, degree, first, ties }
}

/// Resolve a scan to one node, consuming exactly the randomness
/// [`pick_uniform`] would: none for a unique argmax, one index draw for a
/// tie.
pub(crate) fn resolve_worst<V: Fitness>(
    cfg: &Configuration<V>,
    topo: &Topology,
    scan: &WorstScan<V>,
    rng: &mut ChaCha8Rng,
) -> usize {
    if scan.ties == 1 {
        return scan.first;
    }
    let pick = rng.random_range(0..scan.ties);
    let mut seen = 0usize;
    for v in scan.first..topo.node_count() {
        let (s, deg) = scaled_at(cfg, topo, v);
        if V::cmp_scaled(s, deg, scan.best, scan.degree) == Ordering::Equal {
            if seen == pick {
                return v;
            }
            seen += 1;
        }
    }
    unreachable!("tie count mismatch")
}

/// Record-free step for bulk frozen runs: `None` once the configuration is
/// constant (no randomness consumed), otherwise replaces one worst node.
/// Stream-compatible with driving [`step`] behind an `is_constant` guard.
pub(crate) fn step_fast<V: Fitness, D: ReplacementDist<V>>(
    cfg: &mut Configuration<V>,
    topo: &Topology,
    dist: &D,
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    let scan = scan_worst(cfg, topo);
    if scan.is_zero() {
        return None;
    }
    let node = resolve_worst(cfg, topo, &scan, rng);
    cfg.set(node, dist.draw(rng));
    Some(node)
}

pub(crate) fn pick_uniform(argmax: &[usize], rng: &mut ChaCha8Rng) -> usize {
    if argmax.len() == 1 {
        argmax[0]
    } else {
        argmax[rng.random_range(0..argmax.len())]
    }
}

/// Raw: always replace. Frozen: the chain stops moving once `d = 0` (the
/// absorbing modification of the finite-support analysis).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    Raw,
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StepAction<V: Fitness> {
    /// Frozen mode observed `d = 0`; the configuration is unchanged.
    Absorbed,
    Replaced { node: usize, old: V, new: V, d_after: f64 },
}

/// One transition `X(t) → X(t+1)` with its selection diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord<V: Fitness> {
    pub t: u64,
    pub d_before: f64,
    pub argmax_before: Vec<usize>,
    pub action: StepAction<V>,
}

impl<V: Fitness> StepRecord<V> {
    pub fn replaced_node(&self) -> Option<usize> {
        match &self.action {
            StepAction::Absorbed => None,
            StepAction::Replaced { node, .. } => Some(*node),
        }
    }
}

/// Advance the chain by one step in place, returning the record.
pub fn step<V: Fitness, D: ReplacementDist<V>>(
    cfg: &mut Configuration<V>,
    topo: &Topology,
    dist: &D,
    rng: &mut ChaCha8Rng,
    mode: UpdateMode,
    t: u64,
) -> StepRecord<V> {
    let (d_before, argmax_before) = max_nonconformity(cfg, topo);
    if mode == UpdateMode::Frozen && argmax_before.len() == cfg.len() && d_before == 0.0 {
        return StepRecord { t, d_before, argmax_before, action: StepAction::Absorbed };
    }
    let node = pick_uniform(&argmax_before, rng);
    let old = cfg.get(node);
    let new = dist.draw(rng);
    cfg.set(node, new);
    let d_after = d_after_local(cfg, topo, node);
    StepRecord {
        t,
        d_before,
        argmax_before,
        action: StepAction::Replaced { node, old, new, d_after },
    }
}

// d(X(t+1)) recomputed in full; only the replaced node's neighbourhood
// changed but a full pass keeps this obviously correct.
fn d_after_local<V: Fitness>(cfg: &Configuration<V>, topo: &Topology, _node: usize) -> f64 {
    max_nonconformity(cfg, topo).0
}

/// When to stop iterating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    MaxSteps(u64),
    UntilAbsorbed,
    DBelow(f64),
}

/// A finished run: replaying `records` from `initial` reproduces `final`
/// exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<V: Fitness> {
    pub initial: Configuration<V>,
    pub records: Vec<StepRecord<V>>,
    pub final_config: Configuration<V>,
    pub seed: u64,
    pub distribution: DistributionSpec,
    pub topology: TopologyDescriptor,
    /// Set when the run ended on a constant configuration.
    pub absorbed: bool,
}

/// Iterate `step` until the stop rule fires.
#[allow(clippy::too_many_arguments)]
pub fn run<V: Fitness, D: ReplacementDist<V>>(
    initial: Configuration<V>,
    topo: &Topology,
    dist: &D,
    spec: &DistributionSpec,
    rng: &mut ChaCha8Rng,
    mode: UpdateMode,
    stop: StopRule,
    seed: u64,
) -> Result<Trajectory<V>, ProcessError> {
    if V::CONTINUOUS && stop == StopRule::UntilAbsorbed {
        return Err(ProcessError::InvalidStopRule);
    }
    let mut cfg = initial.clone();
    let mut records = Vec::new();
    let mut t = 0u64;
    let absorbed = loop {
        match stop {
            StopRule::MaxSteps(max) if t >= max => break cfg.is_constant(),
            StopRule::UntilAbsorbed if cfg.is_constant() => break true,
            StopRule::DBelow(eps) if max_nonconformity(&cfg, topo).0 < eps => {
                break cfg.is_constant()
            }
            _ => {}
        }
        let record = step(&mut cfg, topo, dist, rng, mode, t);
        let was_absorbed = matches!(record.action, StepAction::Absorbed);
        records.push(record);
        if was_absorbed {
            break true;
        }
        t += 1;
    };
    Ok(Trajectory {
        initial,
        records,
        final_config: cfg,
        seed,
        distribution: spec.clone(),
        topology: topo.into(),
        absorbed,
    })
}

/// Re-apply the records to the initial configuration and check the final
/// state matches bit for bit.
pub fn replay<V: Fitness>(
    tr: &Trajectory<V>,
    _topo: &Topology,
) -> Result<Configuration<V>, ProcessError> {
    let mut cfg = tr.initial.clone();
    for rec in &tr.records {
        match &rec.action {
            StepAction::Absorbed => {
                if !cfg.is_constant() {
                    return Err(ProcessError::ReplayMismatch(rec.t));
                }
            }
            StepAction::Replaced { node, old, new, .. } => {
                if !rec.argmax_before.contains(node) || cfg.get(*node) != *old {
                    return Err(ProcessError::ReplayMismatch(rec.t));
                }
                cfg.set(*node, *new);
            }
        }
    }
    if cfg != tr.final_config {
        return Err(ProcessError::ReplayMismatch(tr.records.len() as u64));
    }
    Ok(cfg)
}
