//! Simulated quantum and classical channels.
//!
//! Both channels are synchronous and lossless. The quantum channel hands
//! every in-transit qubit to an interception hook before delivery; the
//! classical channel is a public append-only log.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::adversary::Basis;
use crate::bitkit::BitString;
use crate::error::{QsaError, Result};

/// A protocol participant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    Alice,
    Agent(usize),
}

/// One qubit of tuple `tuple` travelling to `recipient`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuantumEnvelope {
    pub tuple: usize,
    pub recipient: Player,
    /// Index of the qubit in the shared dense state, if one exists.
    pub qubit: Option<usize>,
}

/// What happened to a qubit on its way.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DeliveryAction {
    Delivered,
    /// Measured by the eavesdropper and replaced by a fresh qubit.
    Intercepted {
        basis: Basis,
    },
    /// Delivered after the eavesdropper split off a copy of the pulse.
    Split,
    /// The original was destroyed; an eavesdropper-made qubit arrived.
    Substituted,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub tuple: usize,
    pub recipient: Player,
    pub action: DeliveryAction,
}

/// Quantum channel for one run.
#[derive(Debug, Default)]
pub struct QuantumChannel {
    delivered: HashSet<(usize, Player)>,
    records: Vec<DeliveryRecord>,
}

impl QuantumChannel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Passes the envelope through `hook`, which may act on the qubit, and
    /// records the delivery. Each (tuple, recipient) pair goes through once.
    pub fn deliver<F>(&mut self, envelope: QuantumEnvelope, hook: F) -> Result<DeliveryAction>
    where
        F: FnOnce(&QuantumEnvelope) -> Result<DeliveryAction>,
    {
        if !self.delivered.insert((envelope.tuple, envelope.recipient)) {
            return Err(QsaError::Integrity(format!(
                "qubit of tuple {} delivered twice to {:?}",
                envelope.tuple, envelope.recipient
            )));
        }
        let action = hook(&envelope)?;
        self.records.push(DeliveryRecord {
            tuple: envelope.tuple,
            recipient: envelope.recipient,
            action,
        });
        Ok(action)
    }

    pub fn records(&self) -> &[DeliveryRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<DeliveryRecord> {
        self.records
    }
}

/// An agent's public broadcast of its measurement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassicalMessage {
    pub sender: usize,
    pub payload: BitString,
}

/// Public classical channel: every party, including an eavesdropper, reads
/// the same totally ordered log.
#[derive(Debug)]
pub struct ClassicalChannel {
    width: usize,
    log: Vec<ClassicalMessage>,
}

impl ClassicalChannel {
    pub fn new(width: usize) -> Self {
        ClassicalChannel {
            width,
            log: Vec::new(),
        }
    }

    pub fn broadcast(&mut self, message: ClassicalMessage) -> Result<()> {
        if message.payload.len() != self.width {
            return Err(QsaError::Integrity(format!(
                "broadcast of {} bits on a {}-bit channel",
                message.payload.len(),
                self.width
            )));
        }
        self.log.push(message);
        Ok(())
    }

    pub fn log(&self) -> &[ClassicalMessage] {
        &self.log
    }

    pub fn payloads(&self) -> Vec<BitString> {
        self.log.iter().map(|m| m.payload.clone()).collect()
    }

    pub fn into_log(self) -> Vec<ClassicalMessage> {
        self.log
    }
}
