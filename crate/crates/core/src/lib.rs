//! Simulation and numerical verification laboratory for the barycentric
//! Bak-Sneppen process (Jante's law dynamics with local interactions).
//!
//! The chain lives on a finite connected graph. Each node carries a real
//! "fitness"; at every step the least conformist node — the one whose value
//! deviates most from the average of its neighbours — is replaced by a fresh
//! draw from a replacement law ζ, ties broken uniformly at random.
//!
//! Modules:
//! - [`topology`]: validated cycle and general graphs plus an edge-list format.
//! - [`process`]: the chain itself, distribution- and topology-agnostic, with
//!   exact argmax selection for integer fitnesses.
//! - [`discrete`]: machinery for finite integer supports — the potential
//!   `f(x) = Σ (x_i − x_{i+1})²`, floor-midpoint descent, explicit absorbing
//!   paths, and the no-convergence demo families.
//! - [`continuous`]: machinery for ζ ~ U[0,1] — the potential `h`, the
//!   embedded chain observed when the worst node moves or its deviation
//!   drops, the closed-form conditional drift with its Monte-Carlo oracle,
//!   and numerical certifiers for the supporting inequalities.
//! - [`experiments`]: declarative seeded Monte-Carlo experiments (absorbing
//!   value histograms, decay-rate estimation, the verification suite) with
//!   deterministic CSV/JSONL persistence.

pub mod continuous;
pub mod discrete;
pub mod experiments;
pub mod process;
pub mod stats;
pub mod topology;

mod par;

pub use process::{
    stream_rng, Configuration, DistributionSpec, StepAction, StepRecord, StopRule, Trajectory,
    UpdateMode,
};
pub use topology::Topology;
