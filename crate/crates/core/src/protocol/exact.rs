//! Exact joint outcome distributions, without sampling.
//!
//! [`dense_distribution`] squares the amplitudes of the full circuit, with
//! every eavesdropper measurement deferred onto record qubits.
//! [`factorized_distribution`] multiplies closed-form per-position
//! probabilities. The two are computed independently so they can be
//! compared exactly.
//!
//! Neither applies Alice's restart rule; see [`condition_on_nonzero_a`].

use std::collections::BTreeMap;

use num_rational::Ratio;

use super::dense::DenseLayout;
use super::{Prepared, ProtocolConfig};
use crate::adversary::{AttackKind, Basis};
use crate::bitkit::BitString;
use crate::channels::Player;
use crate::error::{QsaError, Result};
use crate::qstate::{CircuitSchedule, QuantumState};

/// Every register read at the end of one attempt.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JointOutcome {
    pub a: BitString,
    pub ys: Vec<BitString>,
    /// Eve's register (PNS / blinding) or her intercepted bits packed as
    /// in [`crate::adversary::EveObservation::intercept_key`].
    pub eve: Option<BitString>,
}

pub type Distribution = BTreeMap<JointOutcome, Ratio<u64>>;

/// Denominator used to turn floating probabilities into dyadic rationals.
const DYADIC_BITS: u32 = 32;

fn to_dyadic(p: f64) -> Result<Ratio<u64>> {
    let scale = (1u64 << DYADIC_BITS) as f64;
    let scaled = p * scale;
    let k = scaled.round();
    if (scaled - k).abs() > 1e-4 {
        return Err(QsaError::Integrity(format!(
            "probability {p} is not a multiple of 2^-{DYADIC_BITS}"
        )));
    }
    Ok(Ratio::new(k as u64, 1u64 << DYADIC_BITS))
}

fn eve_width(kind: &AttackKind, prepared: &Prepared) -> usize {
    match kind {
        AttackKind::None => 0,
        AttackKind::PhotonNumberSplitting { .. } | AttackKind::Blinding => 1,
        AttackKind::InterceptResend { .. } => prepared.in_transit.len(),
    }
}

fn check_affected(affected: &[bool], m: usize, kind: &AttackKind) -> Result<()> {
    if affected.len() != m {
        return Err(QsaError::InvalidConfig(format!(
            "affected mask has {} entries for {m} tuples",
            affected.len()
        )));
    }
    if *kind == AttackKind::Blinding && !affected.iter().all(|&x| x) {
        return Err(QsaError::InvalidConfig(
            "blinding affects every tuple".into(),
        ));
    }
    Ok(())
}

/// Exact distribution of one attempt from the dense amplitudes.
///
/// `affected` fixes which tuples Eve attacks.
pub fn dense_distribution(
    config: &ProtocolConfig,
    kind: &AttackKind,
    affected: &[bool],
) -> Result<Distribution> {
    let prepared = Prepared::new(config)?;
    let (n, m) = (prepared.n, prepared.m);
    check_affected(affected, m, kind)?;
    let width = eve_width(kind, &prepared);
    let layout = DenseLayout {
        n,
        m,
        eve_slots: width,
    };
    let mut state = QuantumState::zero(layout.total())?;

    // Distribution. Blinded tuples are never delivered intact; the reset
    // after Eve destroys them leaves |0…0⟩, so her own GHZ_{n+1} is built
    // from scratch.
    let mut schedules = Vec::new();
    for j in 0..m {
        let mut qubits = layout.tuple(j);
        if *kind == AttackKind::Blinding {
            qubits.insert(0, layout.eve_qubit(0, j));
        }
        schedules.push(CircuitSchedule::ghz(&qubits)?);
    }
    CircuitSchedule::parallel(&schedules)?.execute(&mut state)?;

    for j in (0..m).filter(|&j| affected[j]) {
        match *kind {
            AttackKind::None | AttackKind::Blinding => {}
            AttackKind::PhotonNumberSplitting { .. } => {
                let first = layout.qubit(prepared.in_transit[0], j);
                state.apply_cnot(first, layout.eve_qubit(0, j))?;
            }
            AttackKind::InterceptResend { basis, .. } => {
                for (r, &p) in prepared.in_transit.iter().enumerate() {
                    let q = layout.qubit(p, j);
                    let record = layout.eve_qubit(r, j);
                    if basis == Basis::X {
                        state.apply_hadamard(q)?;
                    }
                    state.apply_cnot(q, record)?;
                    if basis == Basis::X {
                        state.apply_hadamard(q)?;
                    }
                }
            }
        }
    }

    for (i, key) in prepared.extended.iter().enumerate() {
        state.apply_phase_oracle(key, &layout.register(Player::Agent(i)))?;
    }
    for player in layout.players() {
        state.apply_hadamard_all(&layout.register(player))?;
    }
    if kind.eve_holds_qubit() && kind.eve_register_basis() == Basis::X {
        for j in (0..m).filter(|&j| affected[j]) {
            state.apply_hadamard(layout.eve_qubit(0, j))?;
        }
    }
    state.check_norm()?;

    let mut dist = Distribution::new();
    for (index, p) in state.probabilities().into_iter().enumerate() {
        if p < 1e-14 {
            continue;
        }
        let outcome = BitString::from_u64(index as u64, layout.total())?;
        let a = layout.read(&outcome, layout.slot(Player::Alice))?;
        let ys = (0..n - 1)
            .map(|i| layout.read(&outcome, i))
            .collect::<Result<Vec<_>>>()?;
        let eve = match kind {
            AttackKind::None => None,
            AttackKind::PhotonNumberSplitting { .. } | AttackKind::Blinding => {
                Some(layout.read(&outcome, n - 1)?)
            }
            AttackKind::InterceptResend { .. } => {
                let mut key = BitString::zeros(m * width);
                for j in 0..m {
                    for r in 0..width {
                        key.set(j * width + r, outcome.get(layout.eve_qubit(r, j)));
                    }
                }
                Some(key)
            }
        };
        *dist
            .entry(JointOutcome { a, ys, eve })
            .or_insert(Ratio::new(0, 1)) += to_dyadic(p)?;
    }
    Ok(dist)
}

/// Attack-free dense distribution with the agents' output qubits
/// allocated: each starts in |1⟩, is Hadamard-transformed to |−⟩ and fed to
/// the explicit `|y⟩|x⟩ → |y ⊕ f(x)⟩|x⟩` oracle. Output qubits are traced out.
pub fn dense_distribution_explicit_outputs(config: &ProtocolConfig) -> Result<Distribution> {
    let prepared = Prepared::new(config)?;
    let (n, m) = (prepared.n, prepared.m);
    let layout = DenseLayout { n, m, eve_slots: 0 };
    let base = layout.total();
    let mut state = QuantumState::zero(base + n - 1)?;
    let schedules = (0..m)
        .map(|j| CircuitSchedule::ghz(&layout.tuple(j)))
        .collect::<Result<Vec<_>>>()?;
    CircuitSchedule::parallel(&schedules)?.execute(&mut state)?;
    for i in 0..n - 1 {
        state.apply_x(base + i)?;
        state.apply_hadamard(base + i)?;
    }
    for (i, key) in prepared.extended.iter().enumerate() {
        state.apply_oracle_explicit(key, &layout.register(Player::Agent(i)), base + i)?;
    }
    for player in layout.players() {
        state.apply_hadamard_all(&layout.register(player))?;
    }
    state.check_norm()?;
    let mut dist = Distribution::new();
    let inputs_mask = (1usize << base) - 1;
    let mut marginal = vec![0.0f64; 1 << base];
    for (index, p) in state.probabilities().into_iter().enumerate() {
        marginal[index & inputs_mask] += p;
    }
    for (index, p) in marginal.into_iter().enumerate() {
        if p < 1e-14 {
            continue;
        }
        let outcome = BitString::from_u64(index as u64, base)?;
        let a = layout.read(&outcome, layout.slot(Player::Alice))?;
        let ys = (0..n - 1)
            .map(|i| layout.read(&outcome, i))
            .collect::<Result<Vec<_>>>()?;
        dist.insert(JointOutcome { a, ys, eve: None }, to_dyadic(p)?);
    }
    Ok(dist)
}

/// Probability of one position's readout.
///
/// `players` holds Alice's bit then agents 0..n-2; `eve` holds Eve's bits
/// for this position (empty when she holds none).
fn position_probability(
    prepared: &Prepared,
    kind: &AttackKind,
    attacked: bool,
    j: usize,
    players: &[bool],
    eve: &[bool],
) -> Ratio<u64> {
    let n = players.len() as u32;
    let xor = |bits: &[bool]| bits.iter().fold(false, |acc, &b| acc ^ b);
    let s_j = prepared.s.get(j);
    let one = |cond: bool, denom_log2: u32| {
        if cond {
            Ratio::new(1, 1u64 << denom_log2)
        } else {
            Ratio::new(0, 1)
        }
    };
    if !attacked || *kind == AttackKind::None {
        return one(eve.iter().all(|&b| !b) && xor(players) == s_j, n - 1);
    }
    match *kind {
        AttackKind::None => unreachable!(),
        AttackKind::PhotonNumberSplitting { .. } | AttackKind::Blinding => {
            match kind.eve_register_basis() {
                Basis::X => one(xor(players) ^ eve[0] == s_j, n),
                Basis::Z => one(true, n + 1),
            }
        }
        AttackKind::InterceptResend {
            basis: Basis::Z, ..
        } => one(eve.iter().all(|&b| b == eve[0]), n + 1),
        AttackKind::InterceptResend {
            basis: Basis::X, ..
        } => {
            let order: Vec<Player> = std::iter::once(Player::Alice)
                .chain((0..players.len() - 1).map(Player::Agent))
                .collect();
            let t = eve.len() as u32;
            let mut ok = true;
            for (r, p) in prepared.in_transit.iter().enumerate() {
                let k = order.iter().position(|q| q == p).unwrap_or(0);
                ok &= players[k] == eve[r] ^ prepared.key_bit(*p, j);
            }
            let rest: Vec<usize> = (0..order.len())
                .filter(|&k| !prepared.in_transit.contains(&order[k]))
                .collect();
            if rest.is_empty() {
                // Measuring a whole GHZ tuple in X yields even parity.
                return one(ok && !xor(eve), t - 1);
            }
            let want = rest
                .iter()
                .fold(xor(eve), |acc, &k| acc ^ prepared.key_bit(order[k], j));
            let got = rest.iter().fold(false, |acc, &k| acc ^ players[k]);
            one(ok && want == got, t + rest.len() as u32 - 1)
        }
    }
}

/// Exact distribution of one attempt from closed-form per-position
/// probabilities.
pub fn factorized_distribution(
    config: &ProtocolConfig,
    kind: &AttackKind,
    affected: &[bool],
) -> Result<Distribution> {
    let prepared = Prepared::new(config)?;
    let (n, m) = (prepared.n, prepared.m);
    check_affected(affected, m, kind)?;
    let width = eve_width(kind, &prepared);

    // Per position: (player bits, eve bits, probability) with p > 0.
    type Row = (Vec<bool>, Vec<bool>, Ratio<u64>);
    let mut positions: Vec<Vec<Row>> = Vec::with_capacity(m);
    for (j, &attacked) in affected.iter().enumerate() {
        let mut rows = Vec::new();
        for pv in 0..(1u32 << n) {
            let players: Vec<bool> = (0..n).map(|k| pv >> k & 1 == 1).collect();
            for ev in 0..(1u32 << width) {
                let eve: Vec<bool> = (0..width).map(|k| ev >> k & 1 == 1).collect();
                let p = position_probability(&prepared, kind, attacked, j, &players, &eve);
                if p > Ratio::new(0, 1) {
                    rows.push((players.clone(), eve, p));
                }
            }
        }
        positions.push(rows);
    }

    let mut partial: Vec<(Vec<usize>, Ratio<u64>)> = vec![(Vec::new(), Ratio::new(1, 1))];
    for rows in &positions {
        let mut next = Vec::with_capacity(partial.len() * rows.len());
        for (choice, p) in &partial {
            for (r, row) in rows.iter().enumerate() {
                let mut c = choice.clone();
                c.push(r);
                next.push((c, p * row.2));
            }
        }
        partial = next;
    }

    let mut dist = Distribution::new();
    for (choice, p) in partial {
        let mut a = BitString::zeros(m);
        let mut ys = vec![BitString::zeros(m); n - 1];
        let mut eve_bits = match kind {
            AttackKind::None => None,
            AttackKind::InterceptResend { .. } => Some(BitString::zeros(m * width)),
            _ => Some(BitString::zeros(m)),
        };
        for (j, &r) in choice.iter().enumerate() {
            let (players, eve, _) = &positions[j][r];
            a.set(j, players[0]);
            for (i, y) in ys.iter_mut().enumerate() {
                y.set(j, players[i + 1]);
            }
            if let Some(bits) = eve_bits.as_mut() {
                for (k, &b) in eve.iter().enumerate() {
                    let at = match kind {
                        AttackKind::InterceptResend { .. } => j * width + k,
                        _ => j,
                    };
                    bits.set(at, b);
                }
            }
        }
        *dist
            .entry(JointOutcome {
                a,
                ys,
                eve: eve_bits,
            })
            .or_insert(Ratio::new(0, 1)) += p;
    }
    Ok(dist)
}

/// Conditions on Alice's `a` being nonzero, i.e. on the attempt that
/// survives the restart rule.
pub fn condition_on_nonzero_a(dist: &Distribution) -> Distribution {
    let kept: Ratio<u64> = dist
        .iter()
        .filter(|(o, _)| !o.a.is_zero())
        .map(|(_, p)| *p)
        .sum();
    dist.iter()
        .filter(|(o, _)| !o.a.is_zero())
        .map(|(o, p)| (o.clone(), p / kept))
        .collect()
}

/// Total probability of outcomes satisfying `pred`.
pub fn probability<F: Fn(&JointOutcome) -> bool>(dist: &Distribution, pred: F) -> Ratio<u64> {
    dist.iter().filter(|(o, _)| pred(o)).map(|(_, p)| *p).sum()
}
