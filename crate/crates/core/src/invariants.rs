//! Self-checks run by `qsa verify`: GHZ amplitudes, the tuple tensor
//! identity, oracle reduction and exact engine equivalence.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::adversary::{AttackKind, Basis};
use crate::bitkit::BitString;
use crate::error::Result;
use crate::protocol::exact::{dense_distribution, factorized_distribution};
use crate::protocol::{GhzSource, ProtocolConfig};
use crate::qstate::{prepare_ghz, prepare_ghz_tuples, CircuitSchedule, QuantumState};

const TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckReport {
    fn new(check: String, failures: Vec<String>, ok_detail: String) -> Self {
        CheckReport {
            check,
            pass: failures.is_empty(),
            detail: if failures.is_empty() {
                ok_detail
            } else {
                failures.join("; ")
            },
        }
    }
}

fn close(a: &[Complex64], b: &[Complex64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() <= TOLERANCE)
}

/// GHZ_n has `1/√2` on the all-zero and all-one indices and uses
/// `⌈lg n⌉` CNOT layers.
pub fn check_ghz(n: usize) -> Result<CheckReport> {
    let state = prepare_ghz(n)?;
    let qubits: Vec<usize> = (0..n).collect();
    let layers = CircuitSchedule::ghz(&qubits)?.cnot_layer_count();
    let depth = n.next_power_of_two().trailing_zeros() as usize;
    let mut want = vec![Complex64::new(0.0, 0.0); 1 << n];
    want[0] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    want[(1 << n) - 1] = want[0];
    let mut failures = Vec::new();
    if !close(state.amplitudes(), &want) {
        failures.push("amplitudes differ from (|0…0⟩ + |1…1⟩)/√2".into());
    }
    if layers != depth {
        failures.push(format!("{layers} CNOT layers, expected {depth}"));
    }
    Ok(CheckReport::new(
        format!("ghz_n{n}"),
        failures,
        format!("{depth} CNOT layers"),
    ))
}

/// `m` tuples equal `2^{-m/2} Σ_x |x⟩…|x⟩`, and adding a tuple is a
/// tensor product with GHZ_n up to qubit relabelling.
pub fn check_tensor_identity(n: usize, m: usize) -> Result<CheckReport> {
    let state = prepare_ghz_tuples(n, m)?;
    let amp = 0.5f64.powf(m as f64 / 2.0);
    let mut want = vec![Complex64::new(0.0, 0.0); 1 << (n * m)];
    for x in 0..1usize << m {
        let index = (0..n).fold(0, |acc, r| acc | x << (r * m));
        want[index] = Complex64::new(amp, 0.0);
    }
    let mut failures = Vec::new();
    if !close(state.amplitudes(), &want) {
        failures.push("closed form differs".into());
    }
    let stacked = QuantumState::tensor(&prepare_ghz(n)?, &state)?;
    let perm: Vec<usize> = (0..n * m)
        .map(|q| (q / m) * (m + 1) + q % m)
        .chain((0..n).map(|r| r * (m + 1) + m))
        .collect();
    let next = prepare_ghz_tuples(n, m + 1)?;
    if !close(
        stacked.permute_qubits(&perm)?.amplitudes(),
        next.amplitudes(),
    ) {
        failures.push("induction step differs".into());
    }
    Ok(CheckReport::new(
        format!("tensor_identity_n{n}_m{m}"),
        failures,
        "closed form and induction step".into(),
    ))
}

/// Explicit oracle with output in `|−⟩` versus the phase oracle, over all
/// keys and basis inputs of length `m`.
pub fn check_oracle_reduction(m: usize) -> Result<CheckReport> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let minus =
        QuantumState::from_amplitudes(vec![Complex64::new(h, 0.0), Complex64::new(-h, 0.0)])?;
    let register: Vec<usize> = (0..m).collect();
    let mut failures = Vec::new();
    let mut uniform = QuantumState::zero(m)?;
    uniform.apply_hadamard_all(&register)?;
    for k in 0..1u64 << m {
        let key = BitString::from_u64(k, m)?;
        let inputs = (0..1u64 << m)
            .map(|x| QuantumState::basis(m, x))
            .chain(std::iter::once(Ok(uniform.clone())));
        for psi in inputs {
            let psi = psi?;
            let mut explicit = QuantumState::tensor(&minus, &psi)?;
            explicit.apply_oracle_explicit(&key, &register, m)?;
            let mut phased = psi;
            phased.apply_phase_oracle(&key, &register)?;
            let reduced = QuantumState::tensor(&minus, &phased)?;
            if !close(explicit.amplitudes(), reduced.amplitudes()) {
                failures.push(format!("key {key}"));
                break;
            }
        }
    }
    Ok(CheckReport::new(
        format!("oracle_reduction_m{m}"),
        failures,
        format!("{} keys", 1u64 << m),
    ))
}

/// Dense amplitude enumeration equals the per-position closed form for
/// every key assignment at `n = 3`, with and without fully applied attacks.
pub fn check_engine_equivalence(m: usize) -> Result<CheckReport> {
    let kinds = [
        AttackKind::None,
        AttackKind::InterceptResend {
            basis: Basis::Z,
            fraction: 1.0,
        },
        AttackKind::InterceptResend {
            basis: Basis::X,
            fraction: 1.0,
        },
        AttackKind::PhotonNumberSplitting {
            fraction: 1.0,
            eve_basis: Basis::X,
        },
        AttackKind::Blinding,
    ];
    let mut failures = Vec::new();
    let mut compared = 0;
    for l0 in 1..m {
        for v0 in 0..1u64 << l0 {
            for v1 in 0..1u64 << (m - l0) {
                let keys = vec![
                    BitString::from_u64(v0, l0)?,
                    BitString::from_u64(v1, m - l0)?,
                ];
                for source in [GhzSource::Spymaster, GhzSource::TrustedThirdParty] {
                    let config = ProtocolConfig::with_keys(keys.clone(), 0)?.source(source);
                    for kind in &kinds {
                        if *kind == AttackKind::Blinding && source == GhzSource::Spymaster {
                            continue;
                        }
                        let mask = vec![*kind != AttackKind::None; m];
                        let dense = dense_distribution(&config, kind, &mask)?;
                        let fact = factorized_distribution(&config, kind, &mask)?;
                        compared += 1;
                        if dense != fact {
                            failures.push(format!("{} {source:?} {keys:?}", kind.name()));
                        }
                    }
                }
            }
        }
    }
    Ok(CheckReport::new(
        format!("engine_equivalence_n3_m{m}"),
        failures,
        format!("{compared} exact comparisons"),
    ))
}

/// The full suite at the sizes used by `qsa verify`.
pub fn run_all(max_m: usize) -> Result<Vec<CheckReport>> {
    let mut reports = Vec::new();
    for n in 2..=10 {
        reports.push(check_ghz(n)?);
    }
    for n in 2..=3 {
        for m in 1..=2 {
            reports.push(check_tensor_identity(n, m)?);
        }
    }
    for m in 1..=max_m {
        reports.push(check_oracle_reduction(m)?);
    }
    for m in 2..=max_m {
        reports.push(check_engine_equivalence(m)?);
    }
    Ok(reports)
}
