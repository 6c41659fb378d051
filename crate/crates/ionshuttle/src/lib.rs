//! Ion-shuttling schedule synthesis for QCCD trapped-ion chips.
//!
//! Executing a circuit on a zoned trapped-ion chip means shuttling ions so
//! that gate operands meet in the compute zone; the schedule's length
//! dominates runtime. This crate models the chips and circuits, trains a
//! reinforcement-learning compiler on random problems, and ships greedy
//! and exact reference compilers for comparison.
//!
//! - [`chip`]: topologies (X-junction and carousel chips), cells, raw
//!   actions, durations, deterministic movement.
//! - [`circuit`]: two-qubit interaction circuits, dependency DAG, depth
//!   and front-layer tracking, problem generators.
//! - [`env`]: the decision process — masked actions, duration-aware
//!   rewards, potential-based shaping, batched training environments.
//! - [`repr`]: the permutation-invariant observation encoding with
//!   sinusoidal numeric embedding, plus ablation encodings.
//! - [`nn`]: residual MLPs with hand-rolled exact gradients and masked
//!   categorical action distributions.
//! - [`ppo`]: clipped-surrogate training with duration-aware advantage
//!   estimation, checkpoints, telemetry.
//! - [`baselines`]: the windowed greedy heuristic and the uniform-cost
//!   exact oracle; schedule replay validation.
//! - [`inference`]: best-of-N stochastic compilation with trained
//!   policies.
//! - [`bench`]: suite generation, gap analysis, bootstrap confidence
//!   intervals.
//!
//! Compile a small circuit both ways and compare:
//!
//! ```
//! use std::sync::Arc;
//! use ionshuttle::baselines::{exact_compile, heuristic_compile, SearchBudget};
//! use ionshuttle::chip::ChipSpec;
//! use ionshuttle::circuit::Circuit;
//!
//! let spec = Arc::new(ChipSpec::x_chip(3)?);
//! let circuit = Circuit::parse("1 2\n2 3\n1 3\n")?;
//! let placement = spec.default_placement(3)?;
//!
//! let greedy = heuristic_compile(&spec, &circuit, &placement, 4, 8)?;
//! let exact = exact_compile(&spec, &circuit, &placement, SearchBudget::default())?;
//! assert!(exact.proven_optimal);
//! assert!(exact.schedule.total_duration <= greedy.total_duration);
//! # Ok::<(), ionshuttle::Error>(())
//! ```
//!
//! The `book/` directory of the repository holds a narrative guide; its
//! code samples are compiled and run as doc-tests below.

pub mod baselines;
pub mod bench;
pub mod chip;
pub mod circuit;
pub mod env;
pub mod error;
pub mod inference;
pub mod nn;
pub mod ppo;
pub mod repr;

pub use error::{Error, Result};

// Every fenced Rust block in the guide runs under `cargo test --doc`,
// keeping the book in sync with the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/chips.md")]
    pub mod chips {}
    #[doc = include_str!("../../../book/src/circuits.md")]
    pub mod circuits {}
    #[doc = include_str!("../../../book/src/shuttling-smdp.md")]
    pub mod shuttling_smdp {}
    #[doc = include_str!("../../../book/src/observations.md")]
    pub mod observations {}
    #[doc = include_str!("../../../book/src/training.md")]
    pub mod training {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    pub mod baselines {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
