//! Full state-vector execution of one attempt.

use rand_chacha::ChaCha8Rng;

use super::{Attempt, Phase, PhaseMarker, Prepared};
use crate::adversary::Eavesdropper;
use crate::bitkit::BitString;
use crate::channels::{Player, QuantumChannel, QuantumEnvelope};
use crate::error::Result;
use crate::qstate::{CircuitSchedule, QuantumState};

/// Register-major qubit layout: agents occupy slots `0..n-1`, then
/// `eve_slots` eavesdropper slots, then Alice on top. Slot `r`, tuple `j`
/// is qubit `r*m + j`, so the basis index reads `a ‖ y_E ‖ y_{n-2} ‖ … ‖ y_0`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct DenseLayout {
    pub n: usize,
    pub m: usize,
    pub eve_slots: usize,
}

impl DenseLayout {
    pub fn slot(&self, player: Player) -> usize {
        match player {
            Player::Agent(i) => i,
            Player::Alice => self.n - 1 + self.eve_slots,
        }
    }

    pub fn qubit(&self, player: Player, j: usize) -> usize {
        self.slot(player) * self.m + j
    }

    pub fn eve_qubit(&self, e: usize, j: usize) -> usize {
        (self.n - 1 + e) * self.m + j
    }

    pub fn register(&self, player: Player) -> Vec<usize> {
        (0..self.m).map(|j| self.qubit(player, j)).collect()
    }

    pub fn players(&self) -> Vec<Player> {
        std::iter::once(Player::Alice)
            .chain((0..self.n - 1).map(Player::Agent))
            .collect()
    }

    /// Source qubits of tuple `j`, Alice first.
    pub fn tuple(&self, j: usize) -> Vec<usize> {
        self.players()
            .into_iter()
            .map(|p| self.qubit(p, j))
            .collect()
    }

    pub fn total(&self) -> usize {
        (self.n + self.eve_slots) * self.m
    }

    pub fn read(&self, outcome: &BitString, slot: usize) -> Result<BitString> {
        outcome.slice(slot * self.m, self.m)
    }
}

fn marker(phase: Phase, state: &QuantumState) -> PhaseMarker {
    PhaseMarker {
        phase,
        state_digest: Some(state.digest()),
    }
}

pub(crate) fn attempt(
    prepared: &Prepared,
    eve: &mut Eavesdropper,
    honest: &mut ChaCha8Rng,
) -> Result<Attempt> {
    let layout = DenseLayout {
        n: prepared.n,
        m: prepared.m,
        eve_slots: usize::from(eve.kind.eve_holds_qubit()),
    };
    let mut state = QuantumState::zero(layout.total())?;

    // ψ0: the source emits m GHZ_n tuples and ships the in-transit qubits.
    let schedules = (0..layout.m)
        .map(|j| CircuitSchedule::ghz(&layout.tuple(j)))
        .collect::<Result<Vec<_>>>()?;
    CircuitSchedule::parallel(&schedules)?.execute(&mut state)?;
    let mut channel = QuantumChannel::new();
    for j in 0..layout.m {
        let tuple = layout.tuple(j);
        let eve_qubit = (layout.eve_slots > 0).then(|| layout.eve_qubit(0, j));
        for &recipient in &prepared.in_transit {
            let envelope = QuantumEnvelope {
                tuple: j,
                recipient,
                qubit: Some(layout.qubit(recipient, j)),
            };
            channel.deliver(envelope, |env| {
                eve.on_dense_delivery(env, &mut state, eve_qubit, &tuple)
            })?;
        }
    }
    state.check_norm()?;
    let mut phases = vec![marker(Phase::Psi0, &state)];

    // ψ1: output registers sit in |−⟩; the oracle below is their net effect.
    phases.push(marker(Phase::Psi1, &state));

    // ψ2: each agent's phase oracle on its input register.
    for (i, key) in prepared.extended.iter().enumerate() {
        state.apply_phase_oracle(key, &layout.register(Player::Agent(i)))?;
    }
    state.check_norm()?;
    phases.push(marker(Phase::Psi2, &state));

    // ψ3: every player applies H^{⊗m}.
    for player in layout.players() {
        state.apply_hadamard_all(&layout.register(player))?;
    }
    state.check_norm()?;
    phases.push(marker(Phase::Psi3, &state));

    // ψ4: Eve reads her kept qubits, then every player measures.
    let eve_register = if layout.eve_slots > 0 {
        let eve_qubits: Vec<usize> = (0..layout.m).map(|j| layout.eve_qubit(0, j)).collect();
        Some(eve.measure_dense_register(&mut state, &eve_qubits)?)
    } else {
        None
    };
    let outcome = state.measure_all(honest)?;
    phases.push(PhaseMarker {
        phase: Phase::Psi4,
        state_digest: None,
    });

    let a = layout.read(&outcome, layout.slot(Player::Alice))?;
    let ys = (0..layout.n - 1)
        .map(|i| layout.read(&outcome, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Attempt {
        a,
        ys,
        eve_register,
        distribution: channel.into_records(),
        phases,
    })
}
