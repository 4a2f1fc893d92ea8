//! Finite-integer-support machinery on cycles: the potential
//! `f(x) = Σ_i (x_i − x_{i+1})²` (cyclic), floor-midpoint replacement and its
//! descent guarantees, explicit absorbing paths, and the two families that
//! show why equal spacing and degree structure matter.
//!
//! Everything here is exact integer arithmetic. Local deviations are kept
//! doubled (`2·d_i = |2x_i − x_{i−1} − x_{i+1}|`) so the half-integer values
//! they take are ordinary integers.

use serde::Serialize;
use thiserror::Error;

use crate::process::Configuration;
use crate::topology::Topology;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DiscreteError {
    #[error("operation requires a cycle topology")]
    CycleRequired,
    #[error("configuration has {got} values but the graph has {want} nodes")]
    LengthMismatch { got: usize, want: usize },
    #[error("node index {0} out of range")]
    NodeOutOfRange(usize),
    #[error("stable family values must lie in {{0, 1, 5, 6}}, got {0}")]
    OutsideStableSupport(i64),
    #[error("absorbing path did not terminate within {0} steps; this is a bug")]
    PathBudgetExceeded(u64),
}

fn require_cycle(cfg: &Configuration<i64>, topo: &Topology) -> Result<(), DiscreteError> {
    if !topo.is_cycle() {
        return Err(DiscreteError::CycleRequired);
    }
    if cfg.len() != topo.node_count() {
        return Err(DiscreteError::LengthMismatch { got: cfg.len(), want: topo.node_count() });
    }
    Ok(())
}

/// `f(x) = Σ_{i=1}^N (x_i − x_{i+1})²` with `x_{N+1} ≡ x_1`.
pub fn lyapunov_f(cfg: &Configuration<i64>, topo: &Topology) -> Result<i64, DiscreteError> {
    require_cycle(cfg, topo)?;
    Ok(f_of(cfg.values()))
}

fn f_of(x: &[i64]) -> i64 {
    let n = x.len();
    (0..n)
        .map(|i| {
            let d = x[i] - x[(i + 1) % n];
            d * d
        })
        .sum()
}

/// Doubled deviation `2 d_i = |2 x_i − x_{i−1} − x_{i+1}|` on a cycle.
fn doubled_d_at(x: &[i64], i: usize) -> i64 {
    let n = x.len();
    (2 * x[i] - x[(i + n - 1) % n] - x[(i + 1) % n]).abs()
}

fn doubled_d_max(x: &[i64]) -> i64 {
    (0..x.len()).map(|i| doubled_d_at(x, i)).max().unwrap_or(0)
}

/// Exact per-configuration diagnostics on a cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiscreteDiagnostics {
    /// `f(x)`.
    pub f_value: i64,
    /// `Max(x)`.
    pub max_value: i64,
    /// `S(x)`: indices attaining `Max(x)` (0-based).
    pub argmax_indices: Vec<usize>,
    /// `max_i |2 x_i − x_{i−1} − x_{i+1}|`, i.e. `2 d(x)`.
    pub doubled_d: i64,
}

pub fn diagnostics(
    cfg: &Configuration<i64>,
    topo: &Topology,
) -> Result<DiscreteDiagnostics, DiscreteError> {
    require_cycle(cfg, topo)?;
    let x = cfg.values();
    let max_value = *x.iter().max().expect("non-empty");
    let argmax_indices = (0..x.len()).filter(|&i| x[i] == max_value).collect();
    Ok(DiscreteDiagnostics {
        f_value: f_of(x),
        max_value,
        argmax_indices,
        doubled_d: doubled_d_max(x),
    })
}

/// True iff the configuration is constant; on a connected graph this is
/// exactly `d(x) = 0`.
pub fn is_absorbed(cfg: &Configuration<i64>) -> bool {
    cfg.is_constant()
}

/// Copy of `cfg` with `x_i := ⌊(x_{i−1} + x_{i+1}) / 2⌋`.
pub fn floor_midpoint_replace(
    cfg: &Configuration<i64>,
    topo: &Topology,
    i: usize,
) -> Result<Configuration<i64>, DiscreteError> {
    require_cycle(cfg, topo)?;
    if i >= cfg.len() {
        return Err(DiscreteError::NodeOutOfRange(i));
    }
    let x = cfg.values();
    let n = x.len();
    let mid = (x[(i + n - 1) % n] + x[(i + 1) % n]).div_euclid(2);
    let mut out = cfg.clone();
    out.set(i, mid);
    Ok(out)
}

/// Outcome of one floor-midpoint replacement, in terms of the potential.
///
/// The replacement never increases `f`, and drops it by at least 1 whenever
/// the doubled deviation at the replaced node was ≥ 2; `holds_weak` /
/// `holds_strict` report those two guarantees for this instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FDescent {
    pub f_before: i64,
    pub f_after: i64,
    pub doubled_d_i: i64,
}

impl FDescent {
    pub fn holds_weak(&self) -> bool {
        self.f_after <= self.f_before
    }

    pub fn holds_strict(&self) -> bool {
        self.doubled_d_i < 2 || self.f_after < self.f_before
    }
}

pub fn check_f_decrease(
    cfg: &Configuration<i64>,
    topo: &Topology,
    i: usize,
) -> Result<FDescent, DiscreteError> {
    require_cycle(cfg, topo)?;
    if i >= cfg.len() {
        return Err(DiscreteError::NodeOutOfRange(i));
    }
    let replaced = floor_midpoint_replace(cfg, topo, i)?;
    Ok(FDescent {
        f_before: f_of(cfg.values()),
        f_after: f_of(replaced.values()),
        doubled_d_i: doubled_d_at(cfg.values(), i),
    })
}

/// One step of an explicit absorbing path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PathStep {
    pub node: usize,
    pub new_value: i64,
    pub f_before: i64,
    pub f_after: i64,
}

/// A deterministic sequence of floor-midpoint replacements ending in a
/// constant configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbsorbingPath {
    pub steps: Vec<PathStep>,
}

impl AbsorbingPath {
    pub fn len(&self) -> u64 {
        self.steps.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// CSV export: `t,node,new_value,f_before,f_after` with 1-based nodes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,node,new_value,f_before,f_after\n");
        for (t, s) in self.steps.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t,
                s.node + 1,
                s.new_value,
                s.f_before,
                s.f_after
            ));
        }
        out
    }

    /// `f` must drop by ≥ 1 over every window of `n − 2` consecutive steps
    /// that starts at a positive `f`.
    pub fn window_descent_holds(&self, n: usize) -> bool {
        let window = n.saturating_sub(2).max(1);
        self.steps.iter().enumerate().all(|(s, step)| {
            if step.f_before == 0 {
                return true;
            }
            let end = (s + window - 1).min(self.steps.len() - 1);
            self.steps[end].f_after < step.f_before
        })
    }
}

/// Greedy realization of the event chain driving absorption: at every step
/// replace a worst node by the floored neighbour midpoint, preferring a
/// worst node that also attains `Max(x)` when one exists, lowest index
/// otherwise, until the configuration is constant.
///
/// For values in {1, …, M} the length never exceeds `M²·N·(N−2)`.
pub fn construct_absorbing_path(
    cfg: &Configuration<i64>,
    topo: &Topology,
) -> Result<AbsorbingPath, DiscreteError> {
    require_cycle(cfg, topo)?;
    let n = cfg.len();
    let mut x = cfg.values().to_vec();
    let mut steps = Vec::new();
    // f is bounded by f(start) and must drop every n−2 steps, plus slack for
    // the final plateau
    let budget = f_of(&x).max(1) as u64 * (n as u64).max(3) + 1;
    while doubled_d_max(&x) > 0 {
        if steps.len() as u64 > budget {
            return Err(DiscreteError::PathBudgetExceeded(budget));
        }
        let dmax = doubled_d_max(&x);
        let max_value = *x.iter().max().expect("non-empty");
        let worst: Vec<usize> = (0..n).filter(|&i| doubled_d_at(&x, i) == dmax).collect();
        let node = worst
            .iter()
            .copied()
            .find(|&i| x[i] == max_value)
            .unwrap_or(worst[0]);
        let f_before = f_of(&x);
        let mid = (x[(node + n - 1) % n] + x[(node + 1) % n]).div_euclid(2);
        x[node] = mid;
        let f_after = f_of(&x);
        steps.push(PathStep { node, new_value: mid, f_before, f_after });
    }
    Ok(AbsorbingPath { steps })
}

/// Members of the stable N = 8 family `[0, 1, x, 5, 6, 5, y, 1]` over the
/// unequally spaced support {0, 1, 5, 6}.
pub fn stable_family_member(x: i64, y: i64) -> Result<Configuration<i64>, DiscreteError> {
    for v in [x, y] {
        if ![0, 1, 5, 6].contains(&v) {
            return Err(DiscreteError::OutsideStableSupport(v));
        }
    }
    Ok(Configuration::new(vec![0, 1, x, 5, 6, 5, y, 1]))
}

/// True iff the configuration has the family's frame (free slots at 0-based
/// positions 2 and 6, both within the support).
pub fn in_stable_family(cfg: &Configuration<i64>) -> bool {
    let x = cfg.values();
    x.len() == 8
        && x[0] == 0
        && x[1] == 1
        && x[3] == 5
        && x[4] == 6
        && x[5] == 5
        && x[7] == 1
        && [0, 1, 5, 6].contains(&x[2])
        && [0, 1, 5, 6].contains(&x[6])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{
        iid_configuration, max_nonconformity, step, stream_rng, DiscreteDist, DistributionSpec,
        StepAction, UpdateMode,
    };

    fn cycle(n: usize) -> Topology {
        Topology::cycle(n).unwrap()
    }

    fn cfg(values: &[i64]) -> Configuration<i64> {
        Configuration::new(values.to_vec())
    }

    #[test]
    fn f_hand_values() {
        let t = cycle(5);
        assert_eq!(lyapunov_f(&cfg(&[1, 6, 9, 6, 1]), &t).unwrap(), 68);
        assert_eq!(lyapunov_f(&cfg(&[1, 6, 6, 6, 1]), &t).unwrap(), 50);
        assert_eq!(lyapunov_f(&cfg(&[4, 4, 4, 4, 4]), &t).unwrap(), 0);
    }

    #[test]
    fn f_requires_cycle() {
        let t = Topology::counterexample_graph();
        let c = cfg(&[0, 1, 0, 1, 0, 1]);
        assert_eq!(lyapunov_f(&c, &t), Err(DiscreteError::CycleRequired));
    }

    #[test]
    fn sum_of_squared_deviations_is_no_potential() {
        // f̃(x) = Σ d_i(x)² increases across the remark's replacement
        let t = cycle(5);
        let ftilde = |c: &Configuration<i64>| -> f64 {
            (0..5).map(|i| crate::process::nonconformity(c, &t, i).powi(2)).sum()
        };
        let before = ftilde(&cfg(&[1, 6, 9, 6, 1]));
        let after = ftilde(&cfg(&[1, 6, 6, 6, 1]));
        assert!(after > before, "{after} vs {before}");
    }

    #[test]
    fn floor_midpoint_values() {
        let t = cycle(3);
        let replaced = floor_midpoint_replace(&cfg(&[1, 7, 1]), &t, 1).unwrap();
        assert_eq!(replaced.values(), &[1, 1, 1]);
        let replaced = floor_midpoint_replace(&cfg(&[1, 2, 1]), &t, 1).unwrap();
        assert_eq!(replaced.values(), &[1, 1, 1]);

        // exact midpoint of neighbours (1, 9) is 5; the maximum deviation
        // then moves and grows, which is the point of the remark
        let t12 = cycle(12);
        let x = cfg(&[1, 3, 9, 18, 24, 27, 27, 24, 18, 9, 3, 1]);
        let replaced = floor_midpoint_replace(&x, &t12, 1).unwrap();
        assert_eq!(replaced.get(1), 5);
        let (d_after, argmax) = max_nonconformity(&replaced, &t12);
        assert_eq!(d_after, 2.5);
        assert_eq!(argmax, vec![2]);
    }

    #[test]
    fn floor_midpoint_negative_values_round_down() {
        let t = cycle(3);
        let replaced = floor_midpoint_replace(&cfg(&[-1, 5, -2]), &t, 1).unwrap();
        // (−1 + −2) / 2 = −1.5 floors to −2
        assert_eq!(replaced.get(1), -2);
    }

    #[test]
    fn f_descent_hand_case() {
        let t = cycle(5);
        let d = check_f_decrease(&cfg(&[1, 6, 9, 6, 1]), &t, 2).unwrap();
        assert_eq!(d.f_before, 68);
        assert_eq!(d.f_after, 50);
        assert_eq!(d.doubled_d_i, 6);
        assert!(d.holds_weak() && d.holds_strict());
    }

    #[test]
    fn f_descent_zero_deviation_is_noop() {
        let t = cycle(4);
        let d = check_f_decrease(&cfg(&[2, 3, 4, 3]), &t, 1).unwrap();
        assert_eq!(d.doubled_d_i, 0);
        assert_eq!(d.f_before, d.f_after);
    }

    #[test]
    fn f_descent_exhaustive_small() {
        // all x ∈ {1,2,3}⁵ and every node
        let t = cycle(5);
        for code in 0..3usize.pow(5) {
            let mut c = code;
            let values: Vec<i64> = (0..5)
                .map(|_| {
                    let v = (c % 3) as i64 + 1;
                    c /= 3;
                    v
                })
                .collect();
            let config = cfg(&values);
            for i in 0..5 {
                let d = check_f_decrease(&config, &t, i).unwrap();
                assert!(d.holds_weak(), "weak fails at {values:?} node {i}");
                assert!(d.holds_strict(), "strict fails at {values:?} node {i}");
            }
        }
    }

    #[test]
    fn f_zero_iff_d_zero_exhaustive() {
        // all x ∈ {1,2}⁶
        let t = cycle(6);
        for code in 0..2usize.pow(6) {
            let values: Vec<i64> = (0..6).map(|b| ((code >> b) & 1) as i64 + 1).collect();
            let config = cfg(&values);
            let f = lyapunov_f(&config, &t).unwrap();
            let (d, _) = max_nonconformity(&config, &t);
            assert_eq!(f == 0, d == 0.0, "mismatch at {values:?}");
            assert_eq!(f == 0, is_absorbed(&config));
        }
    }

    #[test]
    fn absorbing_path_tiny_cases() {
        let t = cycle(3);
        let path = construct_absorbing_path(&cfg(&[1, 2, 1]), &t).unwrap();
        assert_eq!(path.len(), 1);
        assert_eq!(path.steps[0].node, 1);
        assert_eq!(path.steps[0].new_value, 1);

        let path = construct_absorbing_path(&cfg(&[3, 3, 3]), &t).unwrap();
        assert!(path.is_empty());
    }

    #[test]
    fn absorbing_path_prefers_max_fitness_nodes() {
        // two worst nodes, only one of them at Max(x): that one must go
        let t = cycle(12);
        let x = cfg(&[1, 3, 9, 18, 24, 27, 27, 24, 18, 9, 3, 1]);
        let path = construct_absorbing_path(&x, &t).unwrap();
        // worst set is {1, 10}, neither at Max = 27: lowest index wins
        assert_eq!(path.steps[0].node, 1);
        assert!(path.window_descent_holds(12));
    }

    #[test]
    fn absorbing_path_bound_random_sweep() {
        let t = cycle(8);
        let spec = DistributionSpec::discrete_uniform(5).unwrap();
        let dist = DiscreteDist::from_spec(&spec).unwrap();
        let mut rng = stream_rng(99, 0);
        for _ in 0..500 {
            let start = iid_configuration(&dist, 8, &mut rng);
            let path = construct_absorbing_path(&start, &t).unwrap();
            assert!(path.len() <= 25 * 8 * 6, "path length {}", path.len());
            assert!(path.window_descent_holds(8));
        }
    }

    #[test]
    fn path_csv_shape() {
        let t = cycle(3);
        let path = construct_absorbing_path(&cfg(&[1, 2, 1]), &t).unwrap();
        let csv = path.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,node,new_value,f_before,f_after"));
        assert_eq!(lines.next(), Some("0,2,1,2,0"));
    }

    #[test]
    fn stable_family_shape_and_deviations() {
        let c = stable_family_member(0, 6).unwrap();
        assert_eq!(c.values(), &[0, 1, 0, 5, 6, 5, 6, 1]);
        let t = cycle(8);
        let (d, argmax) = max_nonconformity(&c, &t);
        assert_eq!(d, 3.0);
        assert_eq!(argmax, vec![2, 6]);
        assert!(stable_family_member(2, 0).is_err());
    }

    #[test]
    fn stable_family_max_always_at_free_slots() {
        let t = cycle(8);
        for &x in &[0i64, 1, 5, 6] {
            for &y in &[0i64, 1, 5, 6] {
                let c = stable_family_member(x, y).unwrap();
                let (d, argmax) = max_nonconformity(&c, &t);
                assert!(d == 2.0 || d == 3.0, "d = {d} for x={x}, y={y}");
                assert!(argmax.iter().all(|&i| i == 2 || i == 6), "{argmax:?}");
            }
        }
    }

    #[test]
    fn stable_family_closed_under_dynamics() {
        let t = cycle(8);
        let spec = DistributionSpec::discrete_uniform_support(vec![0, 1, 5, 6]).unwrap();
        let dist = DiscreteDist::from_spec(&spec).unwrap();
        let mut rng = stream_rng(7, 0);
        let mut c = stable_family_member(5, 1).unwrap();
        for t_step in 0..2_000 {
            let rec = step(&mut c, &t, &dist, &mut rng, UpdateMode::Raw, t_step);
            assert!(matches!(rec.action, StepAction::Replaced { .. }));
            assert!(in_stable_family(&c), "left family at step {t_step}: {:?}", c.values());
            assert!(!c.is_constant());
        }
    }
}
