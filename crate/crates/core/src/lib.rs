//! Quantum secret aggregation: GHZ-based protocol where `n-1` agents
//! obliviously deliver partial keys that Alice combines into a secret.
//!
//! Two sampling engines share one transcript format: a dense state-vector
//! simulator for small instances and a per-position sampler that scales to
//! long keys. Adversary models, exact outcome distributions and batch
//! statistics sit alongside.

pub mod adversary;
pub mod analysis;
pub mod bitkit;
pub mod channels;
pub mod error;
pub mod experiment;
pub mod invariants;
pub mod protocol;
pub mod qstate;
pub mod rng;

pub use adversary::{AttackKind, AttackModel, Basis, EveReport};
pub use analysis::{verify_batch, BatchSummary, ShotBatch, UniformityVerdict};
pub use bitkit::{BitString, KeyLayout};
pub use error::{QsaError, Result};
pub use experiment::{execute, run_experiment, ExperimentSpec, ExperimentSummary};
pub use protocol::{
    run_factorized, run_protocol, run_shot, Engine, GhzSource, PartialKeys, ProtocolConfig,
    Transcript,
};
pub use qstate::{prepare_ghz, CircuitSchedule, QuantumState};
