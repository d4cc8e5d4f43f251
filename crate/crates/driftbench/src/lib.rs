//! Construction and evaluation engine for streaming user-profiling
//! benchmarks built from UGC activity streams.
//!
//! The engine turns a per-user post stream into a sequence of closed-pool
//! selection tasks: at each step the agent sees the latest batch of posts
//! and must pick the `k` tags (out of `4k` candidates) that the user will
//! engage with next. Positives split into carried-over and novel targets;
//! distractors come in four labelled classes (stale history, semantic
//! peers, trending tags, random tags), so every prediction decomposes into
//! a failure profile rather than a single hit rate.
//!
//! A complete in-memory round trip on a synthetic corpus:
//!
//! ```
//! use driftbench::harness::{run_stream, PersonaMode};
//! use driftbench::metrics::{aggregate, score_step};
//! use driftbench::pipeline::{build_synthetic_benchmark, PipelineOptions};
//! use driftbench::synth::{DriftConfig, OracleAgent, OracleKind};
//!
//! let cfg = DriftConfig { seed: 3, users: 6, clusters: 10, ..DriftConfig::default() };
//! let bench = build_synthetic_benchmark(&cfg, &PipelineOptions::synthetic(3)).unwrap();
//!
//! let mut per_user = Vec::new();
//! for user in &bench.users {
//!     let mut agent = OracleAgent::new(OracleKind::Random, 3);
//!     let records = run_stream(&user.tasks, &mut agent, PersonaMode::Full);
//!     per_user.push(
//!         user.tasks
//!             .iter()
//!             .zip(&records)
//!             .map(|(t, r)| score_step(t, r.prediction.as_ref()))
//!             .collect::<Vec<_>>(),
//!     );
//! }
//! let report = aggregate(&per_user);
//! // a uniform guesser recalls about a quarter of the positives
//! assert!(report.r.unwrap() > 0.0 && report.r.unwrap() < 0.6);
//! ```
//!
//! Everything is deterministic for a fixed seed, all scoring arithmetic is
//! exact rational, and the `driftbench` binary exposes each pipeline stage
//! as a file-to-file subcommand. The guide chapters below are part of the
//! test suite: their code blocks compile and run as doc-tests.

pub mod anchor;
pub mod buffer;
pub mod config;
pub mod error;
pub mod harness;
pub mod index;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod task;

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod guide_introduction {}

#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod guide_pipeline {}

#[doc = include_str!("../../../book/src/pools.md")]
pub mod guide_pools {}

#[doc = include_str!("../../../book/src/scoring.md")]
pub mod guide_scoring {}

#[doc = include_str!("../../../book/src/aggregation.md")]
pub mod guide_aggregation {}

#[doc = include_str!("../../../book/src/synthetic.md")]
pub mod guide_synthetic {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod guide_cli {}

#[doc = include_str!("../../../book/src/configuration.md")]
pub mod guide_configuration {}
