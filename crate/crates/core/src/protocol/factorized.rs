//! Per-position sampling.
//!
//! Tuples never interact: the oracle phase `(-1)^{s·x}` is a product of
//! per-position signs and the Hadamard layer acts qubit by qubit. Each bit
//! position is therefore an independent small game whose outcome can be
//! drawn directly.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Attempt, Phase, PhaseMarker, Prepared};
use crate::adversary::{AttackKind, Basis, Eavesdropper, InterceptedBit};
use crate::bitkit::BitString;
use crate::channels::{Player, QuantumChannel, QuantumEnvelope};
use crate::error::Result;

/// Fills `bits` uniformly subject to their XOR being `parity`.
fn fill_with_parity<R: Rng + ?Sized>(bits: &mut [bool], parity: bool, rng: &mut R) {
    let Some((last, rest)) = bits.split_last_mut() else {
        return;
    };
    let mut acc = parity;
    for b in rest.iter_mut() {
        *b = rng.random();
        acc ^= *b;
    }
    *last = acc;
}

pub(crate) fn attempt(
    prepared: &Prepared,
    eve: &mut Eavesdropper,
    honest: &mut ChaCha8Rng,
) -> Result<Attempt> {
    let (n, m) = (prepared.n, prepared.m);
    let mut channel = QuantumChannel::new();
    for j in 0..m {
        for &recipient in &prepared.in_transit {
            let envelope = QuantumEnvelope {
                tuple: j,
                recipient,
                qubit: None,
            };
            channel.deliver(envelope, |env| Ok(eve.symbolic_action(env)))?;
        }
    }

    // Player order within a position: Alice, then agents 0..n-2.
    let players: Vec<Player> = std::iter::once(Player::Alice)
        .chain((0..n - 1).map(Player::Agent))
        .collect();
    let mut a = BitString::zeros(m);
    let mut ys = vec![BitString::zeros(m); n - 1];
    let mut eve_register = eve.kind.eve_holds_qubit().then(|| BitString::zeros(m));
    let mut bits = vec![false; n];

    for j in 0..m {
        let s_j = prepared.s.get(j);
        let attacked = eve.affected[j];
        match eve.kind {
            _ if !attacked => fill_with_parity(&mut bits, s_j, honest),
            AttackKind::None => fill_with_parity(&mut bits, s_j, honest),
            AttackKind::PhotonNumberSplitting { .. } | AttackKind::Blinding => {
                let y_e: bool = eve.rng.random();
                if let Some(reg) = eve_register.as_mut() {
                    reg.set(j, y_e);
                }
                match eve.kind.eve_register_basis() {
                    // Eve is an extra parity participant.
                    Basis::X => fill_with_parity(&mut bits, s_j ^ y_e, honest),
                    // Her Z readout collapses the tuple to a product state.
                    Basis::Z => bits.iter_mut().for_each(|b| *b = honest.random()),
                }
            }
            AttackKind::InterceptResend {
                basis: Basis::Z, ..
            } => {
                // All intercepted qubits read the same collapsed value and
                // the resent product state carries no correlation.
                let collapsed: bool = eve.rng.random();
                for &recipient in &prepared.in_transit {
                    eve.intercepted.push(InterceptedBit {
                        tuple: j,
                        recipient,
                        bit: collapsed,
                    });
                }
                bits.iter_mut().for_each(|b| *b = honest.random());
            }
            AttackKind::InterceptResend {
                basis: Basis::X, ..
            } => {
                // X outcomes are uniform; a resent |±⟩ comes back as e ⊕ key
                // bit, and the untouched qubits keep a GHZ with parity ⊕e.
                let whole_tuple = prepared.in_transit.len() == n;
                let mut parity_e = false;
                for (r, &recipient) in prepared.in_transit.iter().enumerate() {
                    // A fully measured GHZ tuple has even X parity.
                    let e = if whole_tuple && r + 1 == n {
                        parity_e
                    } else {
                        eve.rng.random()
                    };
                    parity_e ^= e;
                    eve.intercepted.push(InterceptedBit {
                        tuple: j,
                        recipient,
                        bit: e,
                    });
                    let idx = players.iter().position(|&p| p == recipient).unwrap_or(0);
                    bits[idx] = e ^ prepared.key_bit(recipient, j);
                }
                let rest: Vec<usize> = (0..n)
                    .filter(|&k| !prepared.in_transit.contains(&players[k]))
                    .collect();
                if !rest.is_empty() {
                    let parity = rest
                        .iter()
                        .fold(parity_e, |acc, &k| acc ^ prepared.key_bit(players[k], j));
                    let mut free = vec![false; rest.len()];
                    fill_with_parity(&mut free, parity, honest);
                    for (&k, b) in rest.iter().zip(free) {
                        bits[k] = b;
                    }
                }
            }
        }
        a.set(j, bits[0]);
        for (i, y) in ys.iter_mut().enumerate() {
            y.set(j, bits[i + 1]);
        }
    }

    let phases = [
        Phase::Psi0,
        Phase::Psi1,
        Phase::Psi2,
        Phase::Psi3,
        Phase::Psi4,
    ]
    .into_iter()
    .map(|phase| PhaseMarker {
        phase,
        state_digest: None,
    })
    .collect();
    Ok(Attempt {
        a,
        ys,
        eve_register,
        distribution: channel.into_records(),
        phases,
    })
}
