//! Dense state-vector engine.
//!
//! Qubit `q` is bit `q` of the basis index. The gate set is deliberately
//! small: Hadamard, X, CNOT, the inner-product phase oracle and its
//! explicit output-qubit form, plus projective Z-basis measurement.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bitkit::BitString;
use crate::error::{QsaError, Result};

/// Largest register the dense engine will allocate.
pub const DENSE_LIMIT: usize = 24;
/// Allowed drift of the squared norm after any gate layer.
pub const NORM_TOLERANCE: f64 = 1e-10;
/// Allowed drift before a measurement is refused as corrupted.
pub const MEASURE_TOLERANCE: f64 = 1e-6;
/// Amplitudes below this magnitude are omitted from dumps.
pub const DUMP_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

/// One non-negligible amplitude in a state dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeEntry {
    pub index: u64,
    pub re: f64,
    pub im: f64,
}

impl QuantumState {
    /// `|0…0⟩` on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        Self::basis(num_qubits, 0)
    }

    pub fn basis(num_qubits: usize, index: u64) -> Result<Self> {
        check_size(num_qubits)?;
        let dim = 1usize << num_qubits;
        if index as usize >= dim {
            return Err(QsaError::IndexOutOfRange {
                index: index as usize,
                limit: dim,
            });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index as usize] = Complex64::new(1.0, 0.0);
        Ok(QuantumState { num_qubits, amps })
    }

    /// Wraps a raw amplitude vector; the length must be a power of two and
    /// the vector normalized.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let dim = amps.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(QsaError::InvalidQubits(format!(
                "amplitude vector of length {dim} is not a qubit register"
            )));
        }
        let num_qubits = dim.trailing_zeros() as usize;
        check_size(num_qubits)?;
        let state = QuantumState { num_qubits, amps };
        state.check_norm()?;
        Ok(state)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Errors if the squared norm has drifted past [`NORM_TOLERANCE`].
    pub fn check_norm(&self) -> Result<()> {
        self.check_norm_within(NORM_TOLERANCE)
    }

    fn check_norm_within(&self, tolerance: f64) -> Result<()> {
        let norm = self.norm_sqr();
        if (norm - 1.0).abs() > tolerance {
            return Err(QsaError::NormDrift { norm, tolerance });
        }
        Ok(())
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.num_qubits {
            return Err(QsaError::IndexOutOfRange {
                index: q,
                limit: self.num_qubits,
            });
        }
        Ok(())
    }

    fn check_distinct(&self, qubits: &[usize]) -> Result<u64> {
        let mut mask = 0u64;
        for &q in qubits {
            self.check_qubit(q)?;
            if mask & (1 << q) != 0 {
                return Err(QsaError::InvalidQubits(format!("qubit {q} listed twice")));
            }
            mask |= 1 << q;
        }
        Ok(mask)
    }

    pub fn apply_hadamard(&mut self, target: usize) -> Result<()> {
        self.check_qubit(target)?;
        let bit = 1usize << target;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let a = self.amps[i];
                let b = self.amps[i | bit];
                self.amps[i] = (a + b) * FRAC_1_SQRT_2;
                self.amps[i | bit] = (a - b) * FRAC_1_SQRT_2;
            }
        }
        Ok(())
    }

    /// `H` on every listed qubit.
    pub fn apply_hadamard_all(&mut self, targets: &[usize]) -> Result<()> {
        for &t in targets {
            self.apply_hadamard(t)?;
        }
        Ok(())
    }

    pub fn apply_x(&mut self, target: usize) -> Result<()> {
        self.check_qubit(target)?;
        let bit = 1usize << target;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                self.amps.swap(i, i | bit);
            }
        }
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(QsaError::InvalidQubits(format!(
                "CNOT control and target are both {control}"
            )));
        }
        let c = 1usize << control;
        let t = 1usize << target;
        for i in 0..self.amps.len() {
            if i & c != 0 && i & t == 0 {
                self.amps.swap(i, i | t);
            }
        }
        Ok(())
    }

    fn oracle_mask(&self, key: &BitString, register: &[usize]) -> Result<usize> {
        self.check_distinct(register)?;
        if key.len() != register.len() {
            return Err(QsaError::LengthMismatch {
                left: key.len(),
                right: register.len(),
            });
        }
        Ok(register
            .iter()
            .enumerate()
            .filter(|&(j, _)| key.get(j))
            .fold(0usize, |mask, (_, &q)| mask | (1 << q)))
    }

    /// Multiplies each basis amplitude by `(-1)^{key·x}`, where `x` is the
    /// value held by `register` (register[j] carries bit j of `x`).
    ///
    /// This is the net action of `U_f` on `|−⟩|x⟩`; no output qubit is
    /// allocated.
    pub fn apply_phase_oracle(&mut self, key: &BitString, register: &[usize]) -> Result<()> {
        let mask = self.oracle_mask(key, register)?;
        for (i, a) in self.amps.iter_mut().enumerate() {
            if (i & mask).count_ones() % 2 == 1 {
                *a = -*a;
            }
        }
        Ok(())
    }

    /// `|y⟩|x⟩ → |y ⊕ key·x⟩|x⟩` with an explicit output qubit.
    pub fn apply_oracle_explicit(
        &mut self,
        key: &BitString,
        register: &[usize],
        output_qubit: usize,
    ) -> Result<()> {
        self.check_qubit(output_qubit)?;
        if register.contains(&output_qubit) {
            return Err(QsaError::InvalidQubits(format!(
                "output qubit {output_qubit} is part of the input register"
            )));
        }
        let mask = self.oracle_mask(key, register)?;
        let out = 1usize << output_qubit;
        for i in 0..self.amps.len() {
            if i & out == 0 && (i & mask).count_ones() % 2 == 1 {
                self.amps.swap(i, i | out);
            }
        }
        Ok(())
    }

    /// Samples a basis state with the Born rule and returns its bit pattern
    /// (qubit `q` is bit `q`). The state is consumed.
    pub fn measure_all<R: Rng + ?Sized>(self, rng: &mut R) -> Result<BitString> {
        self.check_norm_within(MEASURE_TOLERANCE)?;
        let index = sample_index(&self.amps, rng);
        BitString::from_u64(index as u64, self.num_qubits)
    }

    /// Measures `targets` jointly, collapsing the state in place. Bit `i` of
    /// the result is the outcome of `targets[i]`.
    pub fn measure_subset<R: Rng + ?Sized>(
        &mut self,
        targets: &[usize],
        rng: &mut R,
    ) -> Result<BitString> {
        self.check_norm_within(MEASURE_TOLERANCE)?;
        if targets.is_empty() {
            return Err(QsaError::InvalidQubits("nothing to measure".into()));
        }
        self.check_distinct(targets)?;
        let outcome_of = |i: usize| -> usize {
            targets
                .iter()
                .enumerate()
                .fold(0, |acc, (b, &q)| acc | (((i >> q) & 1) << b))
        };
        let mut marginal = vec![0.0f64; 1 << targets.len()];
        for (i, a) in self.amps.iter().enumerate() {
            marginal[outcome_of(i)] += a.norm_sqr();
        }
        let total: f64 = marginal.iter().sum();
        let mut r = rng.random::<f64>() * total;
        let mut chosen = marginal.len() - 1;
        for (k, &p) in marginal.iter().enumerate() {
            if p > 0.0 {
                chosen = k;
                if r < p {
                    break;
                }
                r -= p;
            }
        }
        let scale = 1.0 / marginal[chosen].sqrt();
        for (i, a) in self.amps.iter_mut().enumerate() {
            if outcome_of(i) == chosen {
                *a *= scale;
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        BitString::from_u64(chosen as u64, targets.len())
    }

    /// Measures `targets` and flips any `1` outcomes back to `|0⟩`.
    pub fn reset<R: Rng + ?Sized>(&mut self, targets: &[usize], rng: &mut R) -> Result<BitString> {
        let outcome = self.measure_subset(targets, rng)?;
        for (i, &q) in targets.iter().enumerate() {
            if outcome.get(i) {
                self.apply_x(q)?;
            }
        }
        Ok(outcome)
    }

    /// `high ⊗ low`: `low` keeps qubits `0..k_low`, `high` is shifted above.
    pub fn tensor(high: &QuantumState, low: &QuantumState) -> Result<QuantumState> {
        let k = high.num_qubits + low.num_qubits;
        check_size(k)?;
        let mut amps = Vec::with_capacity(1 << k);
        for h in &high.amps {
            for l in &low.amps {
                amps.push(h * l);
            }
        }
        Ok(QuantumState {
            num_qubits: k,
            amps,
        })
    }

    /// Relabels qubits: old qubit `q` becomes qubit `perm[q]`.
    pub fn permute_qubits(&self, perm: &[usize]) -> Result<QuantumState> {
        if perm.len() != self.num_qubits {
            return Err(QsaError::InvalidQubits(format!(
                "permutation of length {} for {} qubits",
                perm.len(),
                self.num_qubits
            )));
        }
        self.check_distinct(perm)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        for (i, a) in self.amps.iter().enumerate() {
            let j = perm
                .iter()
                .enumerate()
                .fold(0usize, |acc, (q, &p)| acc | (((i >> q) & 1) << p));
            amps[j] = *a;
        }
        Ok(QuantumState {
            num_qubits: self.num_qubits,
            amps,
        })
    }

    /// Non-negligible amplitudes in index order.
    pub fn dump(&self, threshold: f64) -> Vec<AmplitudeEntry> {
        self.amps
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm() > threshold)
            .map(|(i, a)| AmplitudeEntry {
                index: i as u64,
                re: a.re,
                im: a.im,
            })
            .collect()
    }

    /// Hex SHA-256 prefix of the raw amplitude bits.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.num_qubits as u64).to_le_bytes());
        for a in &self.amps {
            hasher.update(a.re.to_bits().to_le_bytes());
            hasher.update(a.im.to_bits().to_le_bytes());
        }
        hasher.finalize()[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn check_size(num_qubits: usize) -> Result<()> {
    if num_qubits == 0 {
        return Err(QsaError::InvalidQubits(
            "a state needs at least one qubit".into(),
        ));
    }
    if num_qubits > DENSE_LIMIT {
        return Err(QsaError::DenseLimitExceeded {
            requested: num_qubits,
            limit: DENSE_LIMIT,
        });
    }
    Ok(())
}

fn sample_index<R: Rng + ?Sized>(amps: &[Complex64], rng: &mut R) -> usize {
    let total: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    let mut r = rng.random::<f64>() * total;
    let mut last_nonzero = 0;
    for (i, a) in amps.iter().enumerate() {
        let p = a.norm_sqr();
        if p > 0.0 {
            last_nonzero = i;
            if r < p {
                return i;
            }
            r -= p;
        }
    }
    last_nonzero
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    H(usize),
    Cnot { control: usize, target: usize },
}

impl Gate {
    fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::H(q) => vec![q],
            Gate::Cnot { control, target } => vec![control, target],
        }
    }
}

/// Layers of mutually disjoint gates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CircuitSchedule {
    layers: Vec<Vec<Gate>>,
}

impl CircuitSchedule {
    pub fn new(layers: Vec<Vec<Gate>>) -> Result<Self> {
        let schedule = CircuitSchedule { layers };
        schedule.validate()?;
        Ok(schedule)
    }

    /// GHZ preparation over `qubits`: `H` on `qubits[0]`, then each layer
    /// fans out from every already-entangled qubit to one fresh qubit, so
    /// the entangled set doubles per layer.
    pub fn ghz(qubits: &[usize]) -> Result<Self> {
        let Some(&root) = qubits.first() else {
            return Err(QsaError::InvalidQubits("GHZ over zero qubits".into()));
        };
        let mut layers = vec![vec![Gate::H(root)]];
        let mut entangled = 1;
        while entangled < qubits.len() {
            let fresh = (qubits.len() - entangled).min(entangled);
            layers.push(
                (0..fresh)
                    .map(|i| Gate::Cnot {
                        control: qubits[i],
                        target: qubits[entangled + i],
                    })
                    .collect(),
            );
            entangled += fresh;
        }
        Self::new(layers)
    }

    /// Runs several schedules side by side, merging layer `t` of each.
    pub fn parallel(schedules: &[CircuitSchedule]) -> Result<Self> {
        let depth = schedules.iter().map(|s| s.layers.len()).max().unwrap_or(0);
        let layers = (0..depth)
            .map(|t| {
                schedules
                    .iter()
                    .filter_map(|s| s.layers.get(t))
                    .flatten()
                    .copied()
                    .collect()
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Vec<Gate>] {
        &self.layers
    }

    pub fn cnot_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.iter().any(|g| matches!(g, Gate::Cnot { .. })))
            .count()
    }

    fn validate(&self) -> Result<()> {
        for (t, layer) in self.layers.iter().enumerate() {
            let mut seen = std::collections::HashSet::new();
            for gate in layer {
                for q in gate.qubits() {
                    if !seen.insert(q) {
                        return Err(QsaError::InvalidQubits(format!(
                            "qubit {q} used twice in layer {t}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Applies every layer, checking the norm after each one.
    pub fn execute(&self, state: &mut QuantumState) -> Result<()> {
        for layer in &self.layers {
            for gate in layer {
                match *gate {
                    Gate::H(q) => state.apply_hadamard(q)?,
                    Gate::Cnot { control, target } => state.apply_cnot(control, target)?,
                }
            }
            state.check_norm()?;
        }
        Ok(())
    }
}

/// `(|0…0⟩ + |1…1⟩)/√2` on `n` qubits, built by running the GHZ schedule.
pub fn prepare_ghz(n: usize) -> Result<QuantumState> {
    let mut state = QuantumState::zero(n)?;
    let qubits: Vec<usize> = (0..n).collect();
    CircuitSchedule::ghz(&qubits)?.execute(&mut state)?;
    Ok(state)
}

/// `m` independent GHZ_n tuples laid out register-major: subsystem `r`
/// holds qubits `r*m .. r*m + m`, and tuple `j` is qubit `j` of every
/// subsystem.
pub fn prepare_ghz_tuples(n: usize, m: usize) -> Result<QuantumState> {
    let mut state = QuantumState::zero(n * m)?;
    let schedules = (0..m)
        .map(|j| CircuitSchedule::ghz(&(0..n).map(|r| r * m + j).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    CircuitSchedule::parallel(&schedules)?.execute(&mut state)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const EXACT: f64 = 1e-12;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < EXACT
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn ghz_five_matches_two_amplitude_form() {
        let state = prepare_ghz(5).unwrap();
        for (i, a) in state.amplitudes().iter().enumerate() {
            let want = if i == 0 || i == 31 {
                FRAC_1_SQRT_2
            } else {
                0.0
            };
            assert!(close(*a, c(want)), "index {i}: {a}");
        }
        let schedule = CircuitSchedule::ghz(&[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(schedule.layers().len(), 4);
        assert_eq!(schedule.cnot_layer_count(), 3);
    }

    #[test]
    fn ghz_small_cases() {
        let one = prepare_ghz(1).unwrap();
        assert!(close(one.amplitudes()[0], c(FRAC_1_SQRT_2)));
        assert!(close(one.amplitudes()[1], c(FRAC_1_SQRT_2)));
        let three = prepare_ghz(3).unwrap();
        let nonzero: Vec<_> = three.dump(DUMP_THRESHOLD).iter().map(|e| e.index).collect();
        assert_eq!(nonzero, vec![0, 7]);
        assert!(matches!(
            prepare_ghz(DENSE_LIMIT + 1),
            Err(QsaError::DenseLimitExceeded { .. })
        ));
    }

    #[test]
    fn ghz_depth_is_ceil_log2() {
        for n in 1..=20usize {
            let schedule = CircuitSchedule::ghz(&(0..n).collect::<Vec<_>>()).unwrap();
            let want = (n as f64).log2().ceil() as usize;
            assert_eq!(schedule.cnot_layer_count(), want, "n={n}");
        }
    }

    #[test]
    fn schedule_rejects_overlapping_gates() {
        let err = CircuitSchedule::new(vec![vec![
            Gate::H(0),
            Gate::Cnot {
                control: 0,
                target: 1,
            },
        ]]);
        assert!(err.is_err());
    }

    #[test]
    fn hadamard_examples() {
        let mut s = QuantumState::zero(1).unwrap();
        s.apply_hadamard(0).unwrap();
        assert!(close(s.amplitudes()[1], c(FRAC_1_SQRT_2)));
        let mut minus = QuantumState::basis(1, 1).unwrap();
        minus.apply_hadamard(0).unwrap();
        assert!(close(minus.amplitudes()[0], c(FRAC_1_SQRT_2)));
        assert!(close(minus.amplitudes()[1], c(-FRAC_1_SQRT_2)));
        let mut twice = QuantumState::basis(3, 5).unwrap();
        twice.apply_hadamard(2).unwrap();
        twice.apply_hadamard(2).unwrap();
        assert!(close(twice.amplitudes()[5], c(1.0)));
        assert!(twice.apply_hadamard(3).is_err());
    }

    #[test]
    fn cnot_examples() {
        let mut s = QuantumState::basis(2, 0b10).unwrap();
        s.apply_cnot(1, 0).unwrap();
        assert!(close(s.amplitudes()[0b11], c(1.0)));
        s.apply_cnot(1, 0).unwrap();
        assert!(close(s.amplitudes()[0b10], c(1.0)));

        let mut bell = QuantumState::zero(2).unwrap();
        bell.apply_hadamard(0).unwrap();
        bell.apply_cnot(0, 1).unwrap();
        let want = [FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2];
        for (a, w) in bell.amplitudes().iter().zip(want) {
            assert!(close(*a, c(w)));
        }
        assert!(bell.apply_cnot(1, 1).is_err());
        assert!(bell.apply_cnot(0, 2).is_err());
    }

    #[test]
    fn phase_oracle_examples() {
        let key: BitString = "1".parse().unwrap();
        let mut plus = QuantumState::zero(1).unwrap();
        plus.apply_hadamard(0).unwrap();
        plus.apply_phase_oracle(&key, &[0]).unwrap();
        assert!(close(plus.amplitudes()[1], c(-FRAC_1_SQRT_2)));

        let ghz = prepare_ghz_tuples(3, 3).unwrap();
        let mut same = ghz.clone();
        same.apply_phase_oracle(&"000".parse().unwrap(), &[0, 1, 2])
            .unwrap();
        assert_eq!(same, ghz);

        let mut twice = ghz.clone();
        let k: BitString = "101".parse().unwrap();
        twice.apply_phase_oracle(&k, &[3, 4, 5]).unwrap();
        twice.apply_phase_oracle(&k, &[3, 4, 5]).unwrap();
        assert_eq!(twice, ghz);

        assert!(twice.apply_phase_oracle(&k, &[3, 3, 5]).is_err());
        assert!(twice.apply_phase_oracle(&k, &[3, 4]).is_err());
        assert!(twice.apply_phase_oracle(&k, &[3, 4, 9]).is_err());
    }

    #[test]
    fn phase_oracles_compose_by_xor() {
        let base = prepare_ghz_tuples(2, 3).unwrap();
        let register = [0, 1, 2];
        for a in 0..8u64 {
            for b in 0..8u64 {
                let ka = BitString::from_u64(a, 3).unwrap();
                let kb = BitString::from_u64(b, 3).unwrap();
                let mut lhs = base.clone();
                lhs.apply_phase_oracle(&ka, &register).unwrap();
                lhs.apply_phase_oracle(&kb, &register).unwrap();
                let mut rhs = base.clone();
                rhs.apply_phase_oracle(&ka.xor(&kb).unwrap(), &register)
                    .unwrap();
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn explicit_oracle_examples() {
        // Output qubit 1 in |0⟩, x = 1 on qubit 0, key 1 → output flips.
        let mut s = QuantumState::basis(2, 0b01).unwrap();
        s.apply_oracle_explicit(&"1".parse().unwrap(), &[0], 1)
            .unwrap();
        assert!(close(s.amplitudes()[0b11], c(1.0)));

        // Output in |−⟩ picks up (−1)^{f(x)} and stays |−⟩.
        let mut s = QuantumState::basis(2, 0b11).unwrap();
        s.apply_hadamard(1).unwrap();
        let before = s.clone();
        s.apply_oracle_explicit(&"1".parse().unwrap(), &[0], 1)
            .unwrap();
        for (a, b) in s.amplitudes().iter().zip(before.amplitudes()) {
            assert!(close(*a, -*b));
        }
        assert!(s
            .apply_oracle_explicit(&"1".parse().unwrap(), &[1], 1)
            .is_err());
    }

    #[test]
    fn m_fold_hadamard_amplitudes() {
        for m in 1..=4usize {
            let dim = 1u64 << m;
            for x in 0..dim {
                let mut s = QuantumState::basis(m, x).unwrap();
                s.apply_hadamard_all(&(0..m).collect::<Vec<_>>()).unwrap();
                let xb = BitString::from_u64(x, m).unwrap();
                for z in 0..dim {
                    let zb = BitString::from_u64(z, m).unwrap();
                    let sign = if zb.inner_product_mod2(&xb).unwrap() {
                        -1.0
                    } else {
                        1.0
                    };
                    let want = sign / (dim as f64).sqrt();
                    assert!(
                        close(s.amplitudes()[z as usize], c(want)),
                        "m={m} x={x} z={z}"
                    );
                }
            }
        }
    }

    #[test]
    fn ghz_tuples_match_register_sum() {
        // (1/√2^m) Σ_x |x⟩_{n-1} … |x⟩_0
        for n in 1..=3usize {
            for m in 1..=3usize {
                let state = prepare_ghz_tuples(n, m).unwrap();
                let amp = 1.0 / ((1u64 << m) as f64).sqrt();
                let mut want = vec![c(0.0); 1 << (n * m)];
                for x in 0..(1usize << m) {
                    let index = (0..n).fold(0, |acc, r| acc | (x << (r * m)));
                    want[index] = c(amp);
                }
                for (a, w) in state.amplitudes().iter().zip(&want) {
                    assert!(close(*a, *w));
                }
            }
        }
    }

    #[test]
    fn measuring_basis_and_phase_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = QuantumState::basis(3, 0b101).unwrap();
        assert_eq!(s.measure_all(&mut rng).unwrap().to_string(), "101");

        let mut ones = 0;
        for _ in 0..2000 {
            let mut minus = QuantumState::basis(1, 1).unwrap();
            minus.apply_hadamard(0).unwrap();
            ones += usize::from(minus.measure_all(&mut rng).unwrap().get(0));
        }
        // 2000 fair flips: 5σ ≈ 112.
        assert!((ones as i64 - 1000).abs() < 112, "{ones}");
    }

    #[test]
    fn ghz_measurement_is_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shots = 10_000;
        let mut ones = 0;
        for _ in 0..shots {
            let out = prepare_ghz(3).unwrap().measure_all(&mut rng).unwrap();
            let v = out.to_u64().unwrap();
            assert!(v == 0 || v == 7);
            ones += usize::from(v == 7);
        }
        // 5σ band of Binomial(10⁴, ½) is ±250.
        assert!((ones as i64 - 5000).abs() <= 250, "{ones}");
    }

    #[test]
    fn subset_measurement_collapses() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mut s = prepare_ghz(2).unwrap();
            let bit = s.measure_subset(&[0], &mut rng).unwrap();
            let idx = if bit.get(0) { 3 } else { 0 };
            assert!(close(s.amplitudes()[idx], c(1.0)));
        }
        // Product state: measuring qubit 0 leaves qubit 1 in |+⟩.
        let mut s = QuantumState::zero(2).unwrap();
        s.apply_hadamard(0).unwrap();
        s.apply_hadamard(1).unwrap();
        let bit = s.measure_subset(&[0], &mut rng).unwrap().get(0) as usize;
        assert!(close(s.amplitudes()[bit], c(FRAC_1_SQRT_2)));
        assert!(close(s.amplitudes()[bit | 2], c(FRAC_1_SQRT_2)));
        assert!(s.measure_subset(&[0, 0], &mut rng).is_err());
    }

    #[test]
    fn subset_of_everything_matches_full_measurement_distribution() {
        // Born probabilities of a fixed 3-qubit state, compared by counting.
        let mut base = QuantumState::zero(3).unwrap();
        base.apply_hadamard(0).unwrap();
        base.apply_cnot(0, 2).unwrap();
        base.apply_hadamard(1).unwrap();
        base.apply_phase_oracle(&"110".parse().unwrap(), &[0, 1, 2])
            .unwrap();
        base.apply_hadamard(2).unwrap();
        let probs = base.probabilities();
        let shots = 20_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut full = [0usize; 8];
        let mut subset = [0usize; 8];
        for _ in 0..shots {
            full[base
                .clone()
                .measure_all(&mut rng)
                .unwrap()
                .to_u64()
                .unwrap() as usize] += 1;
            let mut s = base.clone();
            let out = s.measure_subset(&[0, 1, 2], &mut rng).unwrap();
            subset[out.to_u64().unwrap() as usize] += 1;
        }
        for k in 0..8 {
            let mean = probs[k] * shots as f64;
            let band = 5.0 * (mean * (1.0 - probs[k])).sqrt() + 1e-9;
            assert!((full[k] as f64 - mean).abs() <= band, "full {k}");
            assert!((subset[k] as f64 - mean).abs() <= band, "subset {k}");
        }
    }

    #[test]
    fn measurement_refuses_corrupted_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = QuantumState {
            num_qubits: 1,
            amps: vec![c(1.0), c(0.5)],
        };
        assert!(matches!(
            s.measure_all(&mut rng),
            Err(QsaError::NormDrift { .. })
        ));
    }

    #[test]
    fn tensor_and_permute() {
        let plus = {
            let mut s = QuantumState::zero(1).unwrap();
            s.apply_hadamard(0).unwrap();
            s
        };
        let one = QuantumState::basis(1, 1).unwrap();
        let t = QuantumState::tensor(&one, &plus).unwrap();
        assert!(close(t.amplitudes()[0b10], c(FRAC_1_SQRT_2)));
        assert!(close(t.amplitudes()[0b11], c(FRAC_1_SQRT_2)));
        let swapped = t.permute_qubits(&[1, 0]).unwrap();
        assert_eq!(swapped, QuantumState::tensor(&plus, &one).unwrap());
    }

    #[test]
    fn dump_is_sparse_and_ordered() {
        let dump = prepare_ghz(4).unwrap().dump(DUMP_THRESHOLD);
        assert_eq!(dump.len(), 2);
        assert_eq!((dump[0].index, dump[1].index), (0, 15));
        assert!((dump[1].re - FRAC_1_SQRT_2).abs() < EXACT);
    }

    #[derive(Clone, Debug)]
    enum FuzzGate {
        H(usize),
        X(usize),
        Cnot(usize, usize),
        Oracle(u64),
    }

    fn fuzz_gate(k: usize) -> impl Strategy<Value = FuzzGate> {
        prop_oneof![
            (0..k).prop_map(FuzzGate::H),
            (0..k).prop_map(FuzzGate::X),
            (0..k, 0..k).prop_map(|(a, b)| FuzzGate::Cnot(a, b)),
            any::<u64>().prop_map(FuzzGate::Oracle),
        ]
    }

    proptest! {
        #[test]
        fn random_gate_sequences_preserve_norm(gates in prop::collection::vec(fuzz_gate(6), 0..80)) {
            let mut s = QuantumState::zero(6).unwrap();
            let register: Vec<usize> = (0..6).collect();
            for g in gates {
                match g {
                    FuzzGate::H(q) => s.apply_hadamard(q).unwrap(),
                    FuzzGate::X(q) => s.apply_x(q).unwrap(),
                    FuzzGate::Cnot(a, b) if a != b => s.apply_cnot(a, b).unwrap(),
                    FuzzGate::Cnot(..) => {}
                    FuzzGate::Oracle(k) => s
                        .apply_phase_oracle(&BitString::from_u64(k, 6).unwrap(), &register)
                        .unwrap(),
                }
                prop_assert!((s.norm_sqr() - 1.0).abs() < NORM_TOLERANCE);
            }
        }
    }
}
