//! Gain-adaptive memory retrieval engine.
//!
//! The engine indexes a passage corpus into a hierarchical entity/sentence/passage
//! graph, retrieves evidence by memory-guided iterative propagation over that graph,
//! and refines per-sentence memories online from judged feedback using a
//! Kalman-style adaptive gain. Everything model-backed (embedding, NER,
//! segmentation, time extraction, judging, rewriting, generation) goes through the
//! adapter contracts in [`adapters`], which ship with deterministic offline doubles
//! and an HTTP client implementation.
//!
//! Module map:
//! - [`graph`]: corpus ingestion, sparse incidence matrices, graph snapshots
//! - [`memory`]: sentence memory states, gain-adaptive updates, memory snapshots
//! - [`retrieval`]: entity activation, gated propagation, tiered passage scoring,
//!   the sufficiency-checked retrieval loop
//! - [`adapters`]: boundary contracts, offline doubles, HTTP client
//! - [`dynamics`]: scalar update-dynamics lab (recursion, contraction, gain curves)
//! - [`eval`]: metrics, multi-turn memorization runs, query scenarios

pub mod adapters;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod graph;
pub mod memory;
pub mod retrieval;
pub mod vecmath;
pub(crate) mod wire;

pub use error::{Error, Result};
