//! Eavesdropper models: intercept-and-resend, photon-number splitting and
//! blinding, plus Eve's decision rules and the report attached to each
//! transcript.
//!
//! Under PNS and blinding Eve ends up holding one extra qubit per affected
//! tuple, i.e. she is an (n+1)-th GHZ participant who never applies an
//! oracle. Her register `y_E` therefore enters the parity constraint:
//! `a ⊕ y_E ⊕ y_{n-2} ⊕ … ⊕ y_0 = s`. Alice's reconstruction is off by `y_E`.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bitkit::{reconstruct_secret, BitString};
use crate::channels::{DeliveryAction, Player, QuantumEnvelope};
use crate::error::{QsaError, Result};
use crate::protocol::{run_protocol, GhzSource, ProtocolConfig};
use crate::qstate::{CircuitSchedule, QuantumState};

/// Single-qubit measurement basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Z,
    X,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AttackKind {
    None,
    /// Eve measures every in-transit qubit of a selected tuple in `basis`
    /// and forwards a fresh qubit prepared in the observed basis state.
    /// Each tuple is selected independently with probability `fraction`.
    InterceptResend {
        basis: Basis,
        fraction: f64,
    },
    /// A selected tuple is emitted as GHZ_{n+1}; Eve keeps the extra qubit
    /// and measures it in `eve_basis` (X means H then measure).
    PhotonNumberSplitting {
        fraction: f64,
        eve_basis: Basis,
    },
    /// Eve destroys every source tuple and distributes her own GHZ_{n+1}
    /// tuples, keeping one qubit of each.
    Blinding,
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::InterceptResend { .. } => "intercept",
            AttackKind::PhotonNumberSplitting { .. } => "pns",
            AttackKind::Blinding => "blinding",
        }
    }

    fn fraction(&self) -> f64 {
        match *self {
            AttackKind::None => 0.0,
            AttackKind::InterceptResend { fraction, .. } => fraction,
            AttackKind::PhotonNumberSplitting { fraction, .. } => fraction,
            AttackKind::Blinding => 1.0,
        }
    }

    /// Whether Eve ends up holding a GHZ participant qubit.
    pub fn eve_holds_qubit(&self) -> bool {
        matches!(
            self,
            AttackKind::PhotonNumberSplitting { .. } | AttackKind::Blinding
        )
    }

    /// Basis Eve measures her own qubits in (PNS / blinding).
    pub fn eve_register_basis(&self) -> Basis {
        match *self {
            AttackKind::PhotonNumberSplitting { eve_basis, .. } => eve_basis,
            _ => Basis::X,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackModel {
    pub kind: AttackKind,
    pub eve_seed: u64,
}

impl AttackModel {
    pub fn none() -> Self {
        AttackModel {
            kind: AttackKind::None,
            eve_seed: 0,
        }
    }

    pub fn intercept_resend(basis: Basis, fraction: f64, eve_seed: u64) -> Self {
        AttackModel {
            kind: AttackKind::InterceptResend { basis, fraction },
            eve_seed,
        }
    }

    pub fn pns(fraction: f64, eve_basis: Basis, eve_seed: u64) -> Self {
        AttackModel {
            kind: AttackKind::PhotonNumberSplitting {
                fraction,
                eve_basis,
            },
            eve_seed,
        }
    }

    pub fn blinding(eve_seed: u64) -> Self {
        AttackModel {
            kind: AttackKind::Blinding,
            eve_seed,
        }
    }

    pub fn validate(&self, source: GhzSource) -> Result<()> {
        let fraction = self.kind.fraction();
        if !(0.0..=1.0).contains(&fraction) {
            return Err(QsaError::InvalidConfig(format!(
                "attack fraction {fraction} outside [0, 1]"
            )));
        }
        if self.kind == AttackKind::Blinding && source != GhzSource::TrustedThirdParty {
            return Err(QsaError::AttackInapplicable(
                "blinding needs a third-party GHZ source, not a player".into(),
            ));
        }
        Ok(())
    }
}

/// One qubit Eve measured in transit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterceptedBit {
    pub tuple: usize,
    pub recipient: Player,
    pub bit: bool,
}

/// Everything Eve saw during a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EveObservation {
    /// Tuples she attacked.
    pub affected: Vec<usize>,
    pub intercepted: Vec<InterceptedBit>,
    /// Her own register `y_E` (PNS / blinding); zero at unaffected tuples.
    pub register: Option<BitString>,
    pub broadcasts: Vec<BitString>,
}

impl EveObservation {
    /// Intercepted bits packed tuple-major, `per_tuple` slots per tuple in
    /// delivery order; unattacked slots are zero.
    pub fn intercept_key(&self, m: usize, per_tuple: usize) -> BitString {
        let mut key = BitString::zeros(m * per_tuple);
        let mut slot = vec![0usize; m];
        for rec in &self.intercepted {
            key.set(rec.tuple * per_tuple + slot[rec.tuple], rec.bit);
            slot[rec.tuple] += 1;
        }
        key
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EveReport {
    pub observed: EveObservation,
    pub guess: BitString,
    /// `guess == s`.
    pub success: bool,
    /// Alice's reconstruction differs from `s`.
    pub alice_corrupted: bool,
    /// `a ⊕ y_E ⊕ ⊕ys == s`, when Eve holds a register.
    pub extended_parity: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event")]
pub enum AttackEvent {
    Intercepted {
        tuple: usize,
        recipient: Player,
        bit: bool,
    },
    Split {
        tuple: usize,
    },
    Blocked {
        tuple: usize,
    },
    Report(EveReport),
}

/// Eve's passive guess: the XOR of all broadcasts, which equals `s` exactly
/// when Alice's `a` is zero. With nothing observed she guesses uniformly.
pub fn eve_passive_guess<R: Rng + ?Sized>(
    broadcasts: &[BitString],
    m: usize,
    rng: &mut R,
) -> Result<BitString> {
    match broadcasts.split_first() {
        None => Ok(BitString::random(m, rng)),
        Some((first, rest)) => reconstruct_secret(first, rest),
    }
}

/// Eve's decision rule for a finished run.
///
/// After an X-basis intercept, an intercepted agent qubit resent as
/// `|±⟩` comes back as `y_i = e_i ⊕ s_i` once the agent applies its oracle
/// and Hadamard, so the broadcast reveals that agent's key bit; those
/// positions are decoded directly. Every other position falls back to the
/// passive rule.
pub fn eve_guess<R: Rng + ?Sized>(
    kind: &AttackKind,
    observed: &EveObservation,
    m: usize,
    rng: &mut R,
) -> Result<BitString> {
    let mut guess = eve_passive_guess(&observed.broadcasts, m, rng)?;
    if let AttackKind::InterceptResend {
        basis: Basis::X, ..
    } = kind
    {
        for &j in &observed.affected {
            let bit = observed
                .intercepted
                .iter()
                .filter(|rec| rec.tuple == j)
                .filter_map(|rec| match rec.recipient {
                    Player::Agent(i) => observed.broadcasts.get(i).map(|y| rec.bit ^ y.get(j)),
                    Player::Alice => None,
                })
                .fold(false, |acc, b| acc ^ b);
            guess.set(j, bit);
        }
    }
    Ok(guess)
}

/// Assembles the report and the per-run attack event list.
pub(crate) fn finish_report<R: Rng + ?Sized>(
    kind: &AttackKind,
    observed: EveObservation,
    s: &BitString,
    a: &BitString,
    ys: &[BitString],
    reconstructed: &BitString,
    rng: &mut R,
) -> Result<Vec<AttackEvent>> {
    let guess = eve_guess(kind, &observed, s.len(), rng)?;
    let extended_parity = match &observed.register {
        Some(y_e) => Some(&reconstruct_secret(&a.xor(y_e)?, ys)? == s),
        None => None,
    };
    let mut events = Vec::new();
    for &j in &observed.affected {
        match kind {
            AttackKind::PhotonNumberSplitting { .. } => {
                events.push(AttackEvent::Split { tuple: j })
            }
            AttackKind::Blinding => events.push(AttackEvent::Blocked { tuple: j }),
            _ => {}
        }
    }
    events.extend(
        observed
            .intercepted
            .iter()
            .map(|rec| AttackEvent::Intercepted {
                tuple: rec.tuple,
                recipient: rec.recipient,
                bit: rec.bit,
            }),
    );
    events.push(AttackEvent::Report(EveReport {
        success: &guess == s,
        alice_corrupted: reconstructed != s,
        guess,
        extended_parity,
        observed,
    }));
    Ok(events)
}

/// Per-run eavesdropper state shared by both engines.
pub(crate) struct Eavesdropper {
    pub kind: AttackKind,
    pub affected: Vec<bool>,
    pub rng: ChaCha8Rng,
    pub intercepted: Vec<InterceptedBit>,
    handled: HashSet<usize>,
}

impl Eavesdropper {
    /// Selects the attacked tuples with Eve's own stream.
    pub fn new(kind: AttackKind, m: usize, mut rng: ChaCha8Rng) -> Self {
        let fraction = kind.fraction();
        let affected = (0..m)
            .map(|_| match kind {
                AttackKind::None => false,
                AttackKind::Blinding => true,
                _ => rng.random_bool(fraction),
            })
            .collect();
        Eavesdropper {
            kind,
            affected,
            rng,
            intercepted: Vec::new(),
            handled: HashSet::new(),
        }
    }

    pub fn affected_tuples(&self) -> Vec<usize> {
        (0..self.affected.len())
            .filter(|&j| self.affected[j])
            .collect()
    }

    /// Action recorded for a delivery when no state is simulated.
    pub fn symbolic_action(&self, envelope: &QuantumEnvelope) -> DeliveryAction {
        if !self.affected[envelope.tuple] {
            return DeliveryAction::Delivered;
        }
        match self.kind {
            AttackKind::None => DeliveryAction::Delivered,
            AttackKind::InterceptResend { basis, .. } => DeliveryAction::Intercepted { basis },
            AttackKind::PhotonNumberSplitting { .. } => DeliveryAction::Split,
            AttackKind::Blinding => DeliveryAction::Substituted,
        }
    }

    /// Acts on an in-transit qubit of the dense state.
    ///
    /// `eve_qubit` is Eve's slot for this tuple and `tuple_qubits` the
    /// source qubits of the tuple (both only needed for PNS / blinding).
    pub fn on_dense_delivery(
        &mut self,
        envelope: &QuantumEnvelope,
        state: &mut QuantumState,
        eve_qubit: Option<usize>,
        tuple_qubits: &[usize],
    ) -> Result<DeliveryAction> {
        let action = self.symbolic_action(envelope);
        let q = envelope
            .qubit
            .ok_or_else(|| QsaError::Integrity("dense delivery without a qubit".into()))?;
        let j = envelope.tuple;
        match (action, self.kind) {
            (DeliveryAction::Delivered, _) => {}
            (DeliveryAction::Intercepted { basis }, _) => {
                if basis == Basis::X {
                    state.apply_hadamard(q)?;
                }
                let bit = state.reset(&[q], &mut self.rng)?.get(0);
                // Fresh qubit in the observed basis state.
                if bit {
                    state.apply_x(q)?;
                }
                if basis == Basis::X {
                    state.apply_hadamard(q)?;
                }
                self.intercepted.push(InterceptedBit {
                    tuple: j,
                    recipient: envelope.recipient,
                    bit,
                });
            }
            (DeliveryAction::Split, _) => {
                if self.handled.insert(j) {
                    let eve = eve_qubit.ok_or_else(|| {
                        QsaError::Integrity("pulse split without an Eve qubit".into())
                    })?;
                    // Copying in the Z basis turns GHZ_n into GHZ_{n+1}.
                    state.apply_cnot(q, eve)?;
                }
            }
            (DeliveryAction::Substituted, _) => {
                if self.handled.insert(j) {
                    let eve = eve_qubit.ok_or_else(|| {
                        QsaError::Integrity("substitution without an Eve qubit".into())
                    })?;
                    state.reset(tuple_qubits, &mut self.rng)?;
                    let mut qubits = vec![eve];
                    qubits.extend_from_slice(tuple_qubits);
                    CircuitSchedule::ghz(&qubits)?.execute(state)?;
                }
            }
        }
        Ok(action)
    }

    /// Eve measures her kept qubits; unaffected positions read zero.
    pub fn measure_dense_register(
        &mut self,
        state: &mut QuantumState,
        eve_qubits: &[usize],
    ) -> Result<BitString> {
        let m = self.affected.len();
        let mut register = BitString::zeros(m);
        let targets: Vec<usize> = self
            .affected_tuples()
            .iter()
            .map(|&j| eve_qubits[j])
            .collect();
        if targets.is_empty() {
            return Ok(register);
        }
        if self.kind.eve_register_basis() == Basis::X {
            state.apply_hadamard_all(&targets)?;
        }
        let outcome = state.measure_subset(&targets, &mut self.rng)?;
        for (i, j) in self.affected_tuples().into_iter().enumerate() {
            register.set(j, outcome.get(i));
        }
        Ok(register)
    }
}

fn single_shot_report(config: &ProtocolConfig, model: AttackModel) -> Result<EveReport> {
    let transcript = run_protocol(config, Some(&model))?;
    transcript
        .eve_report()
        .cloned()
        .ok_or_else(|| QsaError::Integrity("attacked run produced no report".into()))
}

/// One intercept-and-resend run (shot 0 of `config`).
pub fn attack_intercept_resend(
    config: &ProtocolConfig,
    basis: Basis,
    fraction: f64,
    eve_seed: u64,
) -> Result<EveReport> {
    single_shot_report(
        config,
        AttackModel::intercept_resend(basis, fraction, eve_seed),
    )
}

/// One photon-number-splitting run (shot 0 of `config`).
pub fn attack_pns(
    config: &ProtocolConfig,
    fraction: f64,
    eve_basis: Basis,
    eve_seed: u64,
) -> Result<EveReport> {
    single_shot_report(config, AttackModel::pns(fraction, eve_basis, eve_seed))
}

/// One blinding run (shot 0 of `config`).
pub fn attack_blinding(config: &ProtocolConfig, eve_seed: u64) -> Result<EveReport> {
    single_shot_report(config, AttackModel::blinding(eve_seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn passive_guess_is_xor_of_broadcasts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = eve_passive_guess(&[bs("1010"), bs("0101"), bs("0011")], 4, &mut rng).unwrap();
        assert_eq!(g, bs("1100"));
        let empty = eve_passive_guess(&[], 4, &mut rng).unwrap();
        assert_eq!(empty.len(), 4);
    }

    #[test]
    fn passive_guess_success_by_enumeration() {
        // Attack-free run with m = 4: the broadcasts XOR to s ⊕ a, so the
        // passive guess wins iff a = 0. Enumerate a and one free agent y.
        let m = 4;
        let s = bs("1001");
        let mut wins_with_restart = 0;
        let mut wins_without = 0;
        let mut total_with = 0;
        let mut total_without = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for a in 0..16u64 {
            for y0 in 0..16u64 {
                let a = BitString::from_u64(a, m).unwrap();
                let y0 = BitString::from_u64(y0, m).unwrap();
                let y1 = reconstruct_secret(&a.xor(&s).unwrap(), std::slice::from_ref(&y0)).unwrap();
                let hit = eve_passive_guess(&[y0, y1], m, &mut rng).unwrap() == s;
                total_without += 1;
                wins_without += usize::from(hit);
                if !a.is_zero() {
                    total_with += 1;
                    wins_with_restart += usize::from(hit);
                }
            }
        }
        assert_eq!(wins_with_restart, 0);
        assert_eq!(total_with, 240);
        // 2^{-m} without the restart rule.
        assert_eq!(wins_without * 16, total_without);
    }

    #[test]
    fn blinding_needs_third_party_source() {
        assert!(matches!(
            AttackModel::blinding(1).validate(GhzSource::Spymaster),
            Err(QsaError::AttackInapplicable(_))
        ));
        assert!(AttackModel::blinding(1)
            .validate(GhzSource::TrustedThirdParty)
            .is_ok());
        assert!(AttackModel::pns(1.5, Basis::X, 0)
            .validate(GhzSource::Spymaster)
            .is_err());
        assert!(AttackModel::intercept_resend(Basis::Z, -0.1, 0)
            .validate(GhzSource::Spymaster)
            .is_err());
    }

    #[test]
    fn tuple_selection_honours_extremes() {
        let rng = ChaCha8Rng::seed_from_u64(9);
        let none = Eavesdropper::new(
            AttackKind::PhotonNumberSplitting {
                fraction: 0.0,
                eve_basis: Basis::X,
            },
            16,
            rng.clone(),
        );
        assert!(none.affected_tuples().is_empty());
        let all = Eavesdropper::new(
            AttackKind::InterceptResend {
                basis: Basis::Z,
                fraction: 1.0,
            },
            16,
            rng,
        );
        assert_eq!(all.affected_tuples().len(), 16);
    }

    #[test]
    fn x_intercept_guess_decodes_agent_bits() {
        // y_i = e_i ⊕ s_i at every intercepted position.
        let observed = EveObservation {
            affected: vec![0, 1],
            intercepted: vec![
                InterceptedBit {
                    tuple: 0,
                    recipient: Player::Agent(0),
                    bit: true,
                },
                InterceptedBit {
                    tuple: 0,
                    recipient: Player::Agent(1),
                    bit: false,
                },
                InterceptedBit {
                    tuple: 1,
                    recipient: Player::Agent(0),
                    bit: true,
                },
                InterceptedBit {
                    tuple: 1,
                    recipient: Player::Agent(1),
                    bit: true,
                },
            ],
            register: None,
            broadcasts: vec![bs("10"), bs("01")],
        };
        let kind = AttackKind::InterceptResend {
            basis: Basis::X,
            fraction: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = eve_guess(&kind, &observed, 2, &mut rng).unwrap();
        // tuple 0: (1⊕0) ⊕ (0⊕1) = 0; tuple 1: (1⊕1) ⊕ (1⊕0) = 1
        assert_eq!(g, bs("10"));
        assert_eq!(observed.intercept_key(2, 2), bs("1101"));
    }
}
