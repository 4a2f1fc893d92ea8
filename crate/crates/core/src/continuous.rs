//! Machinery for ζ ~ U[0,1] on cycles of N ≥ 5 nodes.
//!
//! Central objects:
//! - the potential `h(x) = 2 Σ (x_i − x_{i+1})² + Σ (x_i − x_{i+2})²`;
//! - the embedded chain, observed exactly when the worst node moves or its
//!   deviation strictly drops. A raw replacement draw advances the embedded
//!   chain iff it lands in an interval `[a, b]` computable from the five
//!   values around the worst node; conditioned on landing there the draw is
//!   again uniform, so the embedded chain can also be simulated directly,
//!   which is the only way to reach depths where the raw chain would reject
//!   almost every draw;
//! - the closed-form conditional drift of `ξ(s) = h(X̃(s))` over `[a, b]`,
//!   with a Monte-Carlo quadrature oracle, plus numerical certifiers for the
//!   supporting inequalities (deviation/potential equivalence, 4δ step
//!   bound, 121-factor jump bound, the δ/6 forced-decrease window and the
//!   3δ rejection region).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::process::{
    max_nonconformity, resolve_worst, scan_worst, Configuration, StepAction, Trajectory,
};
use crate::stats;
use crate::topology::Topology;

/// Numerical tolerance for identities and sign certificates that hold
/// exactly in real arithmetic.
pub const DRIFT_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ContinuousError {
    #[error("operation requires a cycle topology")]
    CycleRequired,
    #[error("cycle must have at least 5 nodes, got {0}")]
    TooSmall(usize),
    #[error("configuration has {got} values but the graph has {want} nodes")]
    LengthMismatch { got: usize, want: usize },
    #[error("window is degenerate: the centre equals its neighbour midpoint")]
    DegenerateWindow,
    #[error("window violates the worst-node precondition")]
    InfeasibleWindow,
    #[error("Monte-Carlo integration needs a non-degenerate interval")]
    DegenerateInterval,
    #[error("replacement value {0} outside the forced-decrease window")]
    OutsideWindow(f64),
    #[error("trajectory was not produced by the continuous process on a cycle")]
    NotContinuous,
}

fn require_cycle5(cfg: &Configuration<f64>, topo: &Topology) -> Result<(), ContinuousError> {
    if !topo.is_cycle() {
        return Err(ContinuousError::CycleRequired);
    }
    if topo.node_count() < 5 {
        return Err(ContinuousError::TooSmall(topo.node_count()));
    }
    if cfg.len() != topo.node_count() {
        return Err(ContinuousError::LengthMismatch { got: cfg.len(), want: topo.node_count() });
    }
    Ok(())
}

/// `h(x) = 2 Σ (x_i − x_{i+1})² + Σ (x_i − x_{i+2})²`, cyclic, N ≥ 5.
pub fn lyapunov_h(cfg: &Configuration<f64>, topo: &Topology) -> Result<f64, ContinuousError> {
    require_cycle5(cfg, topo)?;
    Ok(h_of(cfg.values()))
}

pub(crate) fn h_of(x: &[f64]) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n {
        let d1 = x[i] - x[(i + 1) % n];
        let d2 = x[i] - x[(i + 2) % n];
        acc += 2.0 * d1 * d1 + d2 * d2;
    }
    acc
}

/// The expanded quadratic form `2 Σ (3x_i² − 2 x_i x_{i+1} − x_i x_{i+2})`;
/// agrees with [`lyapunov_h`] up to rounding and serves as its cross-check.
pub fn lyapunov_h_expanded(
    cfg: &Configuration<f64>,
    topo: &Topology,
) -> Result<f64, ContinuousError> {
    require_cycle5(cfg, topo)?;
    let x = cfg.values();
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += 3.0 * x[i] * x[i] - 2.0 * x[i] * x[(i + 1) % n] - x[i] * x[(i + 2) % n];
    }
    Ok(2.0 * acc)
}

/// Five fitnesses centred on a worst node, reduced to the orientation
/// `x₃ ≥ (x₂ + x₄)/2` by the reflection `x ↦ 1 − x` when necessary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalWindow {
    values: [f64; 5],
    reflected: bool,
}

impl LocalWindow {
    /// Orient a raw window, reflecting it if its centre sits below the
    /// neighbour midpoint.
    pub fn oriented(raw: [f64; 5]) -> Self {
        let mu = (raw[1] + raw[3]) / 2.0;
        if raw[2] >= mu {
            Self { values: raw, reflected: false }
        } else {
            Self { values: raw.map(|v| 1.0 - v), reflected: true }
        }
    }

    /// Extract the window `(x_{v−2}, …, x_{v+2})` around node `v` of a cycle
    /// with N ≥ 5 and orient it.
    pub fn around(
        cfg: &Configuration<f64>,
        topo: &Topology,
        v: usize,
    ) -> Result<Self, ContinuousError> {
        require_cycle5(cfg, topo)?;
        let n = topo.node_count();
        let raw = [
            cfg.get((v + n - 2) % n),
            cfg.get((v + n - 1) % n),
            cfg.get(v),
            cfg.get((v + 1) % n),
            cfg.get((v + 2) % n),
        ];
        Ok(Self::oriented(raw))
    }

    /// Oriented values `(x₁, …, x₅)`.
    pub fn values(&self) -> [f64; 5] {
        self.values
    }

    pub fn reflected(&self) -> bool {
        self.reflected
    }

    /// Neighbour midpoint `μ = (x₂ + x₄)/2`.
    pub fn mu(&self) -> f64 {
        (self.values[1] + self.values[3]) / 2.0
    }

    /// Centre deviation `δ = x₃ − μ = d₃`; non-negative after orientation.
    pub fn delta(&self) -> f64 {
        self.values[2] - self.mu()
    }

    /// Map a value from oriented coordinates back to the raw frame.
    pub fn from_oriented(&self, u: f64) -> f64 {
        if self.reflected {
            1.0 - u
        } else {
            u
        }
    }

    /// The five escape thresholds. A draw `u < min Q` leaves the centre both
    /// worse and still worst; a draw above enters the advance interval.
    pub fn q_values(&self) -> [f64; 5] {
        let [x1, x2, x3, x4, x5] = self.values;
        [
            x2 + x4 - x3,
            x1 - x2 + x4,
            (-x1 + 3.0 * x2 + x4) / 3.0,
            x2 - x4 + x5,
            (x2 + 3.0 * x4 - x5) / 3.0,
        ]
    }

    /// The worst-node precondition in its defining form:
    /// `x₃ − μ > max(|x₂ − (x₁+x₃)/2|, |x₄ − (x₃+x₅)/2|)`.
    pub fn is_feasible(&self) -> bool {
        let [x1, x2, x3, x4, x5] = self.values;
        let lhs = x3 - (x2 + x4) / 2.0;
        let d2 = (x2 - (x1 + x3) / 2.0).abs();
        let d4 = (x4 - (x3 + x5) / 2.0).abs();
        lhs > d2.max(d4)
    }

    /// Advance interval for a feasible window.
    pub fn acceptance_interval(&self) -> Result<AcceptanceInterval, ContinuousError> {
        if self.delta() <= 0.0 {
            return Err(ContinuousError::DegenerateWindow);
        }
        if !self.is_feasible() {
            return Err(ContinuousError::InfeasibleWindow);
        }
        Ok(self.interval_unchecked())
    }

    /// Interval without the feasibility check; used by the embedded sampler
    /// where the centre is the exact global argmax.
    pub(crate) fn interval_unchecked(&self) -> AcceptanceInterval {
        let q = self.q_values();
        let b = self.values[2];
        let min_q = q.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        let a = min_q.max(0.0).min(b);
        AcceptanceInterval { a, b, q }
    }
}

/// Replacement values `u ∈ [a, b]` advance the embedded chain: the centre's
/// deviation shrinks or another node overtakes it. Everything outside is
/// rejected (the centre only got worse and stays worst).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AcceptanceInterval {
    pub a: f64,
    pub b: f64,
    pub q: [f64; 5],
}

impl AcceptanceInterval {
    pub fn contains(&self, u: f64) -> bool {
        self.a <= u && u <= self.b
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }
}

/// Exact change of `h` when the window centre is replaced by `u` (oriented
/// coordinates): `−2 (x₃ − u)(3u + A)` with `A = 3x₃ − x₁ − 2x₂ − 2x₄ − x₅`.
pub fn h_change(w: &LocalWindow, u: f64) -> f64 {
    let [x1, x2, x3, x4, x5] = w.values();
    let a_coef = 3.0 * x3 - x1 - 2.0 * x2 - 2.0 * x4 - x5;
    -2.0 * (x3 - u) * (3.0 * u + a_coef)
}

/// Conditional drift `E[ξ(s+1) − ξ(s)]` of the embedded potential, in the
/// reduced closed form `(x₃ − a)(x₁ + 2x₂ − 4x₃ + 2x₄ + x₅ − 2a)`.
pub fn drift_closed_form(w: &LocalWindow) -> Result<f64, ContinuousError> {
    let ai = w.acceptance_interval()?;
    let [x1, x2, x3, x4, x5] = w.values();
    Ok((x3 - ai.a) * (x1 + 2.0 * x2 - 4.0 * x3 + 2.0 * x4 + x5 - 2.0 * ai.a))
}

/// The unreduced drift `2(a² + b² + ab) + (2x₃ − a − b)(x₁ + 2x₂ + 2x₄ + x₅)
/// − 6x₃²`; must match the reduced form up to rounding once `b = x₃`.
pub fn drift_full_form(w: &LocalWindow) -> Result<f64, ContinuousError> {
    let ai = w.acceptance_interval()?;
    let (a, b) = (ai.a, ai.b);
    let [x1, x2, x3, x4, x5] = w.values();
    Ok(2.0 * (a * a + b * b + a * b) + (2.0 * x3 - a - b) * (x1 + 2.0 * x2 + 2.0 * x4 + x5)
        - 6.0 * x3 * x3)
}

/// Monte-Carlo quadrature of the drift integrand over `u ~ U[a, b]`:
/// the independent oracle for [`drift_closed_form`]. Returns the estimate
/// and its standard error.
pub fn drift_monte_carlo(
    w: &LocalWindow,
    samples: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64), ContinuousError> {
    let ai = w.acceptance_interval()?;
    if ai.width() <= 0.0 {
        return Err(ContinuousError::DegenerateInterval);
    }
    let [x1, x2, x3, x4, x5] = w.values();
    let base = 2.0 * (x2 - x3) * (x2 - x3)
        + 2.0 * (x3 - x4) * (x3 - x4)
        + (x1 - x3) * (x1 - x3)
        + (x3 - x5) * (x3 - x5);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let u = ai.a + rng.random::<f64>() * ai.width();
        let g = 2.0 * (x2 - u) * (x2 - u)
            + 2.0 * (u - x4) * (u - x4)
            + (x1 - u) * (x1 - u)
            + (u - x5) * (u - x5)
            - base;
        sum += g;
        sum_sq += g * g;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

/// Rejection-sample a feasible window from the uniform cube.
pub fn sample_feasible_window(rng: &mut ChaCha8Rng) -> LocalWindow {
    loop {
        let raw = [(); 5].map(|_| rng.random::<f64>());
        let w = LocalWindow { values: raw, reflected: false };
        if w.is_feasible() {
            return w;
        }
    }
}

const BOUNDARY_JITTER: f64 = 1e-9 / 3.0;

/// A feasible window with one escape threshold pinned to zero within 1e−9,
/// probing the boundary faces of the drift certificate. `None` when the
/// pinned coordinate leaves the cube or breaks feasibility.
pub fn sample_boundary_window(rng: &mut ChaCha8Rng) -> Option<LocalWindow> {
    let base = sample_feasible_window(rng);
    let [x1, x2, x3, x4, x5] = base.values();
    let jitter = (rng.random::<f64>() * 2.0 - 1.0) * BOUNDARY_JITTER;
    let mut v = [x1, x2, x3, x4, x5];
    match rng.random_range(0..5u32) {
        0 => v[2] = x2 + x4 + jitter,         // Q0 = x2 + x4 − x3
        1 => v[0] = x2 - x4 + jitter,         // Q1 = x1 − x2 + x4
        2 => v[0] = 3.0 * x2 + x4 + jitter,   // Q2 = (−x1 + 3x2 + x4)/3
        3 => v[4] = x4 - x2 + jitter,         // Q3 = x2 − x4 + x5
        _ => v[4] = x2 + 3.0 * x4 + jitter,   // Q4 = (x2 + 3x4 − x5)/3
    }
    if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return None;
    }
    let w = LocalWindow { values: v, reflected: false };
    w.is_feasible().then_some(w)
}

/// Uniform random configuration on `[0,1]^n`.
pub fn random_unit_configuration(n: usize, rng: &mut ChaCha8Rng) -> Configuration<f64> {
    Configuration::new((0..n).map(|_| rng.random::<f64>()).collect())
}

/// Result of a drift-sign sweep: the conditional drift must never exceed
/// `DRIFT_TOL`, the two closed forms must agree, and the reflection
/// `x ↦ 1 − x` must leave the drift invariant.
#[derive(Debug, Clone, Serialize)]
pub struct DriftCertificate {
    pub samples: u64,
    pub boundary_samples: u64,
    pub max_drift: f64,
    pub max_form_gap: f64,
    pub max_reflection_gap: f64,
    pub worst_window: Option<[f64; 5]>,
    pub passed: bool,
}

pub fn verify_drift_nonpositive(samples: u64, rng: &mut ChaCha8Rng) -> DriftCertificate {
    drift_sweep_impl(samples, rng, |w| drift_closed_form(w).expect("feasible window"))
}

fn drift_sweep_impl(
    samples: u64,
    rng: &mut ChaCha8Rng,
    drift_fn: impl Fn(&LocalWindow) -> f64,
) -> DriftCertificate {
    let boundary_target = samples / 20;
    let mut max_drift = f64::NEG_INFINITY;
    let mut max_form_gap: f64 = 0.0;
    let mut max_reflection_gap: f64 = 0.0;
    let mut worst_window = None;
    let mut boundary_samples = 0u64;
    let eval = |w: &LocalWindow,
                    max_drift: &mut f64,
                    worst: &mut Option<[f64; 5]>,
                    form_gap: &mut f64,
                    refl_gap: &mut f64| {
        let drift = drift_fn(w);
        if drift > *max_drift {
            *max_drift = drift;
            *worst = Some(w.values());
        }
        let full = drift_full_form(w).expect("feasible window");
        *form_gap = form_gap.max((full - drift_closed_form(w).expect("feasible")).abs());
        let reflected = LocalWindow::oriented(w.values().map(|v| 1.0 - v));
        let drift_reflected = drift_fn(&reflected);
        *refl_gap = refl_gap.max((drift - drift_reflected).abs());
    };
    for _ in 0..samples {
        let w = sample_feasible_window(rng);
        eval(&w, &mut max_drift, &mut worst_window, &mut max_form_gap, &mut max_reflection_gap);
    }
    let mut attempts = 0u64;
    while boundary_samples < boundary_target && attempts < boundary_target * 20 {
        attempts += 1;
        if let Some(w) = sample_boundary_window(rng) {
            boundary_samples += 1;
            eval(&w, &mut max_drift, &mut worst_window, &mut max_form_gap, &mut max_reflection_gap);
        }
    }
    let passed = max_drift <= DRIFT_TOL
        && max_form_gap <= DRIFT_TOL
        && max_reflection_gap <= DRIFT_TOL;
    DriftCertificate {
        samples,
        boundary_samples,
        max_drift,
        max_form_gap,
        max_reflection_gap,
        worst_window,
        passed,
    }
}

/// Agreement between the closed-form drift and its Monte-Carlo oracle,
/// measured in standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct McAgreement {
    pub windows: u64,
    pub draws_per_window: u64,
    pub max_abs_z: f64,
    pub passed: bool,
}

pub fn drift_mc_agreement(
    windows: u64,
    draws_per_window: u64,
    z_tol: f64,
    rng: &mut ChaCha8Rng,
) -> McAgreement {
    let mut max_abs_z: f64 = 0.0;
    let mut passed = true;
    for _ in 0..windows {
        let w = sample_feasible_window(rng);
        let closed = drift_closed_form(&w).expect("feasible window");
        let (mc, se) = drift_monte_carlo(&w, draws_per_window, rng).expect("feasible window");
        if se == 0.0 {
            passed &= (closed - mc).abs() <= DRIFT_TOL;
            continue;
        }
        let z = ((closed - mc) / se).abs();
        max_abs_z = max_abs_z.max(z);
        passed &= z <= z_tol;
    }
    McAgreement { windows, draws_per_window, max_abs_z, passed }
}

/// The four metric-equivalence inequalities for one configuration:
/// `d ≤ max|Δ_i| ≤ N·d` and `2d² ≤ h ≤ 6N³d²`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MetricBounds {
    pub d: f64,
    pub max_abs_delta: f64,
    pub h: f64,
    pub n: usize,
}

impl MetricBounds {
    pub fn holds(&self) -> bool {
        let n = self.n as f64;
        self.d <= self.max_abs_delta
            && self.max_abs_delta <= n * self.d
            && 2.0 * self.d * self.d <= self.h + DRIFT_TOL
            && self.h <= 6.0 * n * n * n * self.d * self.d + DRIFT_TOL
    }
}

pub fn check_metric_bounds(
    cfg: &Configuration<f64>,
    topo: &Topology,
) -> Result<MetricBounds, ContinuousError> {
    require_cycle5(cfg, topo)?;
    let x = cfg.values();
    let n = x.len();
    let max_abs_delta = (0..n)
        .map(|i| (x[i] - x[(i + n - 1) % n]).abs())
        .fold(0.0f64, f64::max);
    let (d, _) = max_nonconformity(cfg, topo);
    Ok(MetricBounds { d, max_abs_delta, h: h_of(x), n })
}

/// Exact `h`-change for a forced draw inside the δ/6 decrease window
/// (oriented coordinates). The window precondition is `d₃ ≥ max(d₂, d₄)`;
/// the change is guaranteed `≤ −(5/6)δ²`.
pub fn check_decrease_window(w: &LocalWindow, u: f64) -> Result<f64, ContinuousError> {
    let [x1, x2, x3, x4, x5] = w.values();
    let d2 = (x2 - (x1 + x3) / 2.0).abs();
    let d4 = (x4 - (x3 + x5) / 2.0).abs();
    let delta = w.delta();
    if delta < d2.max(d4) {
        return Err(ContinuousError::InfeasibleWindow);
    }
    let mu = w.mu();
    if !(mu - delta / 6.0..=mu + delta / 6.0).contains(&u) || !(0.0..=1.0).contains(&u) {
        return Err(ContinuousError::OutsideWindow(u));
    }
    Ok(h_change(w, u))
}

/// Decision of the 3δ rejection test: after replacing the centre of a
/// worst-node window by `u` (oriented), did its deviation grow while staying
/// strictly the largest in the window?
pub fn check_rejection_region(w: &LocalWindow, u: f64) -> bool {
    let [x1, x2, _x3, x4, x5] = w.values();
    let delta = w.delta();
    let d3_new = (u - w.mu()).abs();
    let d2_new = (x2 - (x1 + u) / 2.0).abs();
    let d4_new = (x4 - (u + x5) / 2.0).abs();
    d3_new > delta && d3_new > d2_new && d3_new > d4_new
}

/// One transition of the embedded chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmbeddedStep {
    pub s: u64,
    pub node: usize,
    pub old_value: f64,
    pub new_value: f64,
    /// `d(X̃(s))` before the move.
    pub d_before: f64,
    pub h_before: f64,
    pub h_after: f64,
}

/// Direct simulator of the embedded chain: every draw is conditioned on the
/// advance interval of the current worst node, so each call to [`step`]
/// performs exactly one embedded transition regardless of how many raw
/// rejections it stands for.
///
/// [`step`]: EmbeddedChain::step
pub struct EmbeddedChain<'a> {
    topo: &'a Topology,
    cfg: Configuration<f64>,
    h: f64,
    s: u64,
}

impl<'a> EmbeddedChain<'a> {
    pub fn new(topo: &'a Topology, cfg: Configuration<f64>) -> Result<Self, ContinuousError> {
        require_cycle5(&cfg, topo)?;
        let h = h_of(cfg.values());
        Ok(Self { topo, cfg, h, s: 0 })
    }

    pub fn configuration(&self) -> &Configuration<f64> {
        &self.cfg
    }

    /// `ξ(s) = h(X̃(s))` of the current state.
    pub fn xi(&self) -> f64 {
        self.h
    }

    pub fn s(&self) -> u64 {
        self.s
    }

    /// Perform one embedded transition; `None` once the state is degenerate
    /// (`d = 0`, possible only at float granularity).
    pub fn step(&mut self, rng: &mut ChaCha8Rng) -> Option<EmbeddedStep> {
        let scan = scan_worst(&self.cfg, self.topo);
        if scan.is_zero() {
            return None;
        }
        let d = scan.d();
        let node = resolve_worst(&self.cfg, self.topo, &scan, rng);
        let w = LocalWindow::around(&self.cfg, self.topo, node).expect("validated at new()");
        let ai = w.interval_unchecked();
        if ai.width() <= 0.0 {
            return None;
        }
        let u_oriented = ai.a + rng.random::<f64>() * ai.width();
        let u = w.from_oriented(u_oriented);
        let old_value = self.cfg.get(node);
        let h_before = self.h;
        self.cfg.set(node, u);
        let h_after = h_of(self.cfg.values());
        self.h = h_after;
        self.s += 1;
        Some(EmbeddedStep {
            s: self.s,
            node,
            old_value,
            new_value: u,
            d_before: d,
            h_before,
            h_after,
        })
    }
}

/// Potential trace of one embedded run.
#[derive(Debug, Clone, Serialize)]
pub struct EmbeddedRun {
    /// `ξ(0), ξ(1), …` up to the floor or the step budget.
    pub xi: Vec<f64>,
    pub final_config: Configuration<f64>,
    pub final_d: f64,
    /// True when the run stopped because ξ fell under the floor.
    pub truncated: bool,
}

/// Run the embedded chain until `max_steps` transitions or until
/// `ξ < xi_floor`, whichever comes first. Spreads below roughly 1e−16 are
/// float-granularity noise, so floors must stay well above its square.
pub fn run_embedded(
    topo: &Topology,
    init: Configuration<f64>,
    max_steps: u64,
    xi_floor: f64,
    rng: &mut ChaCha8Rng,
) -> Result<EmbeddedRun, ContinuousError> {
    let mut chain = EmbeddedChain::new(topo, init)?;
    let mut xi = Vec::with_capacity(max_steps.min(1 << 20) as usize + 1);
    xi.push(chain.xi());
    let mut truncated = false;
    while chain.s() < max_steps {
        if chain.xi() < xi_floor {
            truncated = true;
            break;
        }
        match chain.step(rng) {
            Some(step) => xi.push(step.h_after),
            None => {
                truncated = true;
                break;
            }
        }
    }
    let final_d = max_nonconformity(chain.configuration(), topo).0;
    Ok(EmbeddedRun { xi, final_config: chain.cfg, final_d, truncated })
}

/// The embedded skeleton extracted from a raw trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedTrajectory {
    /// Raw times `ν_0 = 0 < ν_1 < …`.
    pub times: Vec<u64>,
    /// `X̃(s) = X(ν_s)`.
    pub states: Vec<Configuration<f64>>,
    pub h: Vec<f64>,
    pub d: Vec<f64>,
    /// Worst node of each embedded state.
    pub argmax: Vec<usize>,
}

impl EmbeddedTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Extract the embedded times and states of a raw continuous trajectory:
/// a raw time `t` is embedded when its worst node differs from the worst
/// node of the previous embedded state, or its `d` is strictly smaller.
pub fn embed(tr: &Trajectory<f64>, topo: &Topology) -> Result<EmbeddedTrajectory, ContinuousError> {
    if !tr.distribution.is_continuous() {
        return Err(ContinuousError::NotContinuous);
    }
    require_cycle5(&tr.initial, topo)?;
    let mut out = EmbeddedTrajectory {
        times: Vec::new(),
        states: Vec::new(),
        h: Vec::new(),
        d: Vec::new(),
        argmax: Vec::new(),
    };
    let mut cfg = tr.initial.clone();
    let push_state =
        |out: &mut EmbeddedTrajectory, t: u64, cfg: &Configuration<f64>, d: f64, j: usize| {
            out.times.push(t);
            out.states.push(cfg.clone());
            out.h.push(h_of(cfg.values()));
            out.d.push(d);
            out.argmax.push(j);
        };
    let mut current: Option<(usize, f64)> = None;
    for (t, rec) in tr.records.iter().enumerate() {
        let StepAction::Replaced { node, new, .. } = rec.action else {
            break;
        };
        match current {
            None => {
                push_state(&mut out, 0, &cfg, rec.d_before, node);
                current = Some((node, rec.d_before));
            }
            Some((j_cur, d_cur)) => {
                if node != j_cur || rec.d_before < d_cur {
                    push_state(&mut out, t as u64, &cfg, rec.d_before, node);
                    current = Some((node, rec.d_before));
                }
            }
        }
        cfg.set(node, new);
    }
    // the final state is embedded if it advances past the last embedded one
    if let Some((j_cur, d_cur)) = current {
        let (d, argmax) = max_nonconformity(&cfg, topo);
        if argmax[0] != j_cur || d < d_cur {
            push_state(&mut out, tr.records.len() as u64, &cfg, d, argmax[0]);
        }
    }
    Ok(out)
}

/// Streaming verifier for the hard per-step bounds of the embedded chain
/// and the guaranteed-decrease frequency.
#[derive(Debug, Clone)]
pub struct StepBoundsAccumulator {
    /// `ρ = 1 − 5/(36 N³)`.
    pub rho: f64,
    pub transitions: u64,
    pub sup_norm_violations: u64,
    pub ratio_violations: u64,
    pub max_ratio: f64,
    pub decrease_events: u64,
}

/// Worst-case one-step growth factor of ξ.
pub const XI_JUMP_FACTOR: f64 = 121.0;
/// Guaranteed lower bound for the ρ-decrease probability.
pub const DECREASE_PROB_BOUND: f64 = 1.0 / 48.0;

impl StepBoundsAccumulator {
    pub fn new(n: usize) -> Self {
        let n3 = (n * n * n) as f64;
        Self {
            rho: 1.0 - 5.0 / (36.0 * n3),
            transitions: 0,
            sup_norm_violations: 0,
            ratio_violations: 0,
            max_ratio: 0.0,
            decrease_events: 0,
        }
    }

    /// Record one embedded transition. `sup_norm` is
    /// `max_i |X̃_i(s+1) − X̃_i(s)|`, which equals the replaced node's move.
    pub fn push(&mut self, d_before: f64, h_before: f64, h_after: f64, sup_norm: f64) {
        self.transitions += 1;
        if sup_norm > 4.0 * d_before {
            self.sup_norm_violations += 1;
        }
        let ratio = h_after / h_before;
        self.max_ratio = self.max_ratio.max(ratio);
        if h_after > XI_JUMP_FACTOR * h_before {
            self.ratio_violations += 1;
        }
        if h_after <= self.rho * h_before {
            self.decrease_events += 1;
        }
    }

    pub fn push_step(&mut self, step: &EmbeddedStep) {
        self.push(
            step.d_before,
            step.h_before,
            step.h_after,
            (step.new_value - step.old_value).abs(),
        );
    }

    pub fn hard_bounds_hold(&self) -> bool {
        self.sup_norm_violations == 0 && self.ratio_violations == 0
    }

    pub fn decrease_frequency(&self) -> f64 {
        if self.transitions == 0 {
            0.0
        } else {
            self.decrease_events as f64 / self.transitions as f64
        }
    }

    /// 99% lower confidence bound of the decrease frequency.
    pub fn decrease_lcb99(&self) -> f64 {
        stats::binomial_lcb(self.decrease_events, self.transitions, stats::Z_99)
    }
}

/// Verify the hard per-step bounds along an extracted embedded trajectory:
/// sup-norm moves of at most `4 d(X̃(s))` and ξ growth of at most the jump
/// factor, plus the ρ-decrease statistics.
pub fn check_step_bounds(e: &EmbeddedTrajectory) -> Result<StepBoundsAccumulator, ContinuousError> {
    let n = e.states.first().map(Configuration::len).unwrap_or(0);
    if n < 5 {
        return Err(ContinuousError::TooSmall(n));
    }
    let mut acc = StepBoundsAccumulator::new(n);
    for s in 0..e.len().saturating_sub(1) {
        let before = e.states[s].values();
        let after = e.states[s + 1].values();
        let sup_norm = before
            .iter()
            .zip(after)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        acc.push(e.d[s], e.h[s], e.h[s + 1], sup_norm);
    }
    Ok(acc)
}

/// Shape of a late-time configuration: all nodes except the current worst
/// one must have collapsed together, with spread controlled by `√h`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LimitShape {
    pub spread_non_argmax: f64,
    pub h_final: f64,
    pub holds: bool,
}

pub fn check_limit_shape(
    cfg: &Configuration<f64>,
    topo: &Topology,
) -> Result<LimitShape, ContinuousError> {
    require_cycle5(cfg, topo)?;
    let (_, argmax) = max_nonconformity(cfg, topo);
    let worst = argmax[0];
    let rest: Vec<f64> = (0..cfg.len()).filter(|&i| i != worst).map(|i| cfg.get(i)).collect();
    let spread = rest.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - rest.iter().cloned().fold(f64::INFINITY, f64::min);
    let h_final = h_of(cfg.values());
    Ok(LimitShape {
        spread_non_argmax: spread,
        h_final,
        holds: spread <= 10.0 * h_final.sqrt(),
    })
}
