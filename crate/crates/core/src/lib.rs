//! Label-free reinforcement learning rewards built from majority-vote
//! selection and embedding-novelty variation, GRPO-style advantages and
//! losses for toy categorical policies, and a deterministic simulator that
//! contrasts majority-only training with the majority + novelty scheme.

pub mod cli;
pub mod consensus;
pub mod embeddings;
pub mod error;
pub mod exec;
pub mod novelty;
pub mod optimizer;
pub mod report;
pub mod reward;
pub mod rng;
pub mod rollout;
pub mod scoring;
pub mod simulator;
pub mod svg;

pub use error::{Error, Result};
pub use exec::Exec;
