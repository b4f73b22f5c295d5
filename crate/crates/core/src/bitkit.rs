//! Bit-string algebra: XOR, inner product modulo 2, key padding and
//! secret reconstruction.
//!
//! Bit index 0 is the least significant bit. Text renders MSB-left, so
//! `"1001"` has bits 3 and 0 set.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{QsaError, Result};

const WORD: usize = 64;

/// Fixed-length bit sequence packed into 64-bit words.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

impl BitString {
    /// All-zero string of `len` bits.
    ///
    /// Panics if `len` is zero.
    pub fn zeros(len: usize) -> Self {
        assert!(len > 0, "bit strings have positive length");
        BitString {
            words: vec![0; len.div_ceil(WORD)],
            len,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut out = Self::zeros(len);
        for w in out.words.iter_mut() {
            *w = u64::MAX;
        }
        out.mask_tail();
        out
    }

    /// Builds from the low `len` bits of `value` (`len <= 64`).
    pub fn from_u64(value: u64, len: usize) -> Result<Self> {
        if len == 0 || len > WORD {
            return Err(QsaError::InvalidBitString(format!(
                "cannot pack {len} bits into a machine word"
            )));
        }
        let mut out = Self::zeros(len);
        out.words[0] = value;
        out.mask_tail();
        Ok(out)
    }

    /// Builds from bits given in index order (index 0 first).
    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Result<Self> {
        let bits: Vec<bool> = bits.into_iter().collect();
        if bits.is_empty() {
            return Err(QsaError::InvalidBitString("empty bit string".into()));
        }
        let mut out = Self::zeros(bits.len());
        for (i, b) in bits.into_iter().enumerate() {
            out.set(i, b);
        }
        Ok(out)
    }

    /// Uniformly random string of `len` bits.
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut out = Self::zeros(len);
        for w in out.words.iter_mut() {
            *w = rng.random();
        }
        out.mask_tail();
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// Always false; kept for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, index: usize) -> bool {
        assert!(index < self.len, "bit {index} out of range {}", self.len);
        (self.words[index / WORD] >> (index % WORD)) & 1 == 1
    }

    pub fn set(&mut self, index: usize, bit: bool) {
        assert!(index < self.len, "bit {index} out of range {}", self.len);
        let mask = 1u64 << (index % WORD);
        if bit {
            self.words[index / WORD] |= mask;
        } else {
            self.words[index / WORD] &= !mask;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Parity of the set bits.
    pub fn parity(&self) -> bool {
        self.count_ones() % 2 == 1
    }

    /// Value as a machine word, if it fits.
    pub fn to_u64(&self) -> Option<u64> {
        (self.len <= WORD).then(|| self.words[0])
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn xor(&self, other: &BitString) -> Result<BitString> {
        check_len(self, other)?;
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| a ^ b)
            .collect();
        Ok(BitString {
            words,
            len: self.len,
        })
    }

    /// In-place XOR.
    pub fn xor_assign(&mut self, other: &BitString) -> Result<()> {
        check_len(self, other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
        Ok(())
    }

    pub fn inner_product_mod2(&self, other: &BitString) -> Result<bool> {
        check_len(self, other)?;
        let ones: u32 = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum();
        Ok(ones % 2 == 1)
    }

    /// `self` placed in the high bits, `low` in the low bits.
    pub fn concat(&self, low: &BitString) -> BitString {
        let mut out = BitString::zeros(self.len + low.len);
        for i in 0..low.len {
            out.set(i, low.get(i));
        }
        for i in 0..self.len {
            out.set(low.len + i, self.get(i));
        }
        out
    }

    /// Bits `[start, start + len)` as a new string.
    pub fn slice(&self, start: usize, len: usize) -> Result<BitString> {
        if len == 0 || start + len > self.len {
            return Err(QsaError::IndexOutOfRange {
                index: start + len,
                limit: self.len,
            });
        }
        BitString::from_bits((start..start + len).map(|i| self.get(i)))
    }

    fn mask_tail(&mut self) {
        let rem = self.len % WORD;
        if rem != 0 {
            let last = self.words.len() - 1;
            self.words[last] &= (1u64 << rem) - 1;
        }
    }
}

fn check_len(a: &BitString, b: &BitString) -> Result<()> {
    if a.len != b.len {
        return Err(QsaError::LengthMismatch {
            left: a.len,
            right: b.len,
        });
    }
    Ok(())
}

/// Bitwise XOR of two equal-length strings.
pub fn xor(a: &BitString, b: &BitString) -> Result<BitString> {
    a.xor(b)
}

/// `z_{m-1} x_{m-1} ⊕ … ⊕ z_0 x_0`.
pub fn inner_product_mod2(z: &BitString, x: &BitString) -> Result<bool> {
    z.inner_product_mod2(x)
}

/// Pads agent `agent_index`'s partial key into its slot of the full
/// `layout.total()`-bit key: higher-indexed agents occupy the more
/// significant bits.
pub fn extend_partial_key(
    partial: &BitString,
    layout: &KeyLayout,
    agent_index: usize,
) -> Result<BitString> {
    let expected = *layout
        .lengths
        .get(agent_index)
        .ok_or(QsaError::IndexOutOfRange {
            index: agent_index,
            limit: layout.agents(),
        })?;
    if partial.len() != expected {
        return Err(QsaError::LengthMismatch {
            left: partial.len(),
            right: expected,
        });
    }
    let offset = layout.offset(agent_index);
    let mut out = BitString::zeros(layout.total());
    for i in 0..partial.len() {
        out.set(offset + i, partial.get(i));
    }
    Ok(out)
}

/// `a ⊕ y_{n-2} ⊕ … ⊕ y_0`.
pub fn reconstruct_secret(a: &BitString, ys: &[BitString]) -> Result<BitString> {
    let mut out = a.clone();
    for y in ys {
        out.xor_assign(y)?;
    }
    Ok(out)
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..self.len)
            .rev()
            .map(|i| if self.get(i) { '1' } else { '0' })
            .collect();
        f.pad(&s)
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl FromStr for BitString {
    type Err = QsaError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(QsaError::InvalidBitString("empty bit string".into()));
        }
        let mut bits = Vec::with_capacity(s.len());
        for c in s.chars().rev() {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                other => {
                    return Err(QsaError::InvalidBitString(format!(
                        "non-binary character {other:?} in {s:?}"
                    )))
                }
            }
        }
        BitString::from_bits(bits)
    }
}

/// Shorter strings sort first; equal lengths compare numerically, which is
/// also lexicographic order of the MSB-left text.
impl Ord for BitString {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len
            .cmp(&other.len)
            .then_with(|| self.words.iter().rev().cmp(other.words.iter().rev()))
    }
}

impl PartialOrd for BitString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordering and lengths of the agents' partial keys, known to every party.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct KeyLayout {
    lengths: Vec<usize>,
}

impl KeyLayout {
    pub fn new(lengths: Vec<usize>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(QsaError::InvalidLayout("no agents".into()));
        }
        if let Some(i) = lengths.iter().position(|&l| l == 0) {
            return Err(QsaError::InvalidLayout(format!(
                "agent {i} has an empty partial key"
            )));
        }
        Ok(KeyLayout { lengths })
    }

    /// Splits `total` bits over `agents` as evenly as possible, giving the
    /// remainder to the low-index agents.
    pub fn even_split(total: usize, agents: usize) -> Result<Self> {
        if agents == 0 || total < agents {
            return Err(QsaError::InvalidLayout(format!(
                "cannot split {total} bits over {agents} agents"
            )));
        }
        let base = total / agents;
        let extra = total % agents;
        Self::new((0..agents).map(|i| base + usize::from(i < extra)).collect())
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn agents(&self) -> usize {
        self.lengths.len()
    }

    /// Total key length `m`.
    pub fn total(&self) -> usize {
        self.lengths.iter().sum()
    }

    /// Number of trailing zeros in agent `i`'s extended key.
    pub fn offset(&self, agent_index: usize) -> usize {
        self.lengths[..agent_index].iter().sum()
    }

    /// Concatenates `p_{n-2} … p_0` into the complete secret.
    pub fn compose(&self, partial_keys: &[BitString]) -> Result<BitString> {
        if partial_keys.len() != self.agents() {
            return Err(QsaError::InvalidLayout(format!(
                "{} keys for {} agents",
                partial_keys.len(),
                self.agents()
            )));
        }
        let mut s = BitString::zeros(self.total());
        for (i, p) in partial_keys.iter().enumerate() {
            s.xor_assign(&extend_partial_key(p, self, i)?)?;
        }
        Ok(s)
    }
}

impl TryFrom<Vec<usize>> for KeyLayout {
    type Error = QsaError;

    fn try_from(lengths: Vec<usize>) -> Result<Self> {
        KeyLayout::new(lengths)
    }
}

impl From<KeyLayout> for Vec<usize> {
    fn from(layout: KeyLayout) -> Self {
        layout.lengths
    }
}
