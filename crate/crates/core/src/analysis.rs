//! Batch statistics: correlation-property rate, outcome histograms,
//! chi-square uniformity and independence tests, attack success rates.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bitkit::{reconstruct_secret, BitString};
use crate::error::{QsaError, Result};
use crate::protocol::{fcp_holds, Transcript};

/// Largest number of outcome classes a histogram may need.
pub const HISTOGRAM_GUARD: u128 = 1 << 20;
/// p-value threshold for uniformity/independence verdicts.
pub const P_THRESHOLD: f64 = 0.001;
/// Minimum expected count per class for a chi-square verdict to be valid.
pub const MIN_EXPECTED: f64 = 5.0;

/// Transcripts sharing one configuration and planted secret.
#[derive(Clone, Debug)]
pub struct ShotBatch {
    pub transcripts: Vec<Transcript>,
    pub shots: usize,
    pub s: BitString,
}

impl ShotBatch {
    pub fn new(transcripts: Vec<Transcript>) -> Result<Self> {
        let first = transcripts
            .first()
            .ok_or_else(|| QsaError::InvalidBatch("empty batch".into()))?;
        for t in &transcripts {
            if !same_config(first, t) {
                return Err(QsaError::InvalidBatch(format!(
                    "shot {} was run with a different configuration",
                    t.shot
                )));
            }
        }
        Ok(ShotBatch {
            s: first.s.clone(),
            shots: transcripts.len(),
            transcripts,
        })
    }
}

fn same_config(a: &Transcript, b: &Transcript) -> bool {
    a.n == b.n
        && a.m == b.m
        && a.layout == b.layout
        && a.s == b.s
        && a.seed == b.seed
        && a.engine == b.engine
        && a.source == b.source
        && a.attack == b.attack
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub shots: u64,
    pub n: usize,
    pub m: usize,
    pub s: BitString,
    pub attack: String,
    pub fcp_fraction: f64,
    pub reconstruction_success_fraction: f64,
    /// Restart count → number of shots.
    pub restart_counts: BTreeMap<u32, u64>,
    /// Fraction of shots that needed at least one restart.
    pub restart_fraction: f64,
    pub eve_success_fraction: Option<f64>,
    pub alice_corrupted_fraction: Option<f64>,
    pub extended_parity_fraction: Option<f64>,
}

/// Streaming accumulator behind [`verify_batch`] and [`outcome_histogram`].
#[derive(Clone, Debug)]
pub struct BatchAccumulator {
    first: Option<Transcript>,
    shots: u64,
    fcp: u64,
    reconstructed: u64,
    restarts: BTreeMap<u32, u64>,
    reports: u64,
    eve_success: u64,
    alice_corrupted: u64,
    parity_seen: u64,
    parity_ok: u64,
    histogram: Option<BTreeMap<BitString, u64>>,
}

impl BatchAccumulator {
    /// `track_histogram` keeps joint-outcome counts (subject to the guard).
    pub fn new(track_histogram: bool) -> Self {
        BatchAccumulator {
            first: None,
            shots: 0,
            fcp: 0,
            reconstructed: 0,
            restarts: BTreeMap::new(),
            reports: 0,
            eve_success: 0,
            alice_corrupted: 0,
            parity_seen: 0,
            parity_ok: 0,
            histogram: track_histogram.then(BTreeMap::new),
        }
    }

    pub fn push(&mut self, t: &Transcript) -> Result<()> {
        match &self.first {
            None => {
                if self.histogram.is_some() {
                    check_guard(t.n, t.m)?;
                }
                self.first = Some(t.clone());
            }
            Some(first) if !same_config(first, t) => {
                return Err(QsaError::InvalidBatch(format!(
                    "shot {} was run with a different configuration",
                    t.shot
                )))
            }
            Some(_) => {}
        }
        self.shots += 1;
        self.fcp += u64::from(fcp_holds(t, &t.s));
        self.reconstructed += u64::from(t.reconstructed == t.s);
        *self.restarts.entry(t.restarts).or_insert(0) += 1;
        if let Some(report) = t.eve_report() {
            self.reports += 1;
            self.eve_success += u64::from(report.success);
            self.alice_corrupted += u64::from(report.alice_corrupted);
            if let Some(ok) = report.extended_parity {
                self.parity_seen += 1;
                self.parity_ok += u64::from(ok);
            }
        }
        if let Some(h) = self.histogram.as_mut() {
            *h.entry(t.joint_outcome()).or_insert(0) += 1;
        }
        Ok(())
    }

    pub fn shots(&self) -> u64 {
        self.shots
    }

    pub fn summary(&self) -> Result<BatchSummary> {
        let first = self
            .first
            .as_ref()
            .ok_or_else(|| QsaError::InvalidBatch("empty batch".into()))?;
        let frac = |k: u64, of: u64| k as f64 / of as f64;
        let restarted: u64 = self
            .restarts
            .iter()
            .filter(|(&r, _)| r > 0)
            .map(|(_, &c)| c)
            .sum();
        Ok(BatchSummary {
            shots: self.shots,
            n: first.n,
            m: first.m,
            s: first.s.clone(),
            attack: first.attack.clone(),
            fcp_fraction: frac(self.fcp, self.shots),
            reconstruction_success_fraction: frac(self.reconstructed, self.shots),
            restart_counts: self.restarts.clone(),
            restart_fraction: frac(restarted, self.shots),
            eve_success_fraction: (self.reports > 0).then(|| frac(self.eve_success, self.reports)),
            alice_corrupted_fraction: (self.reports > 0)
                .then(|| frac(self.alice_corrupted, self.reports)),
            extended_parity_fraction: (self.parity_seen > 0)
                .then(|| frac(self.parity_ok, self.parity_seen)),
        })
    }

    pub fn histogram(&self) -> Option<&BTreeMap<BitString, u64>> {
        self.histogram.as_ref()
    }
}

fn check_guard(n: usize, m: usize) -> Result<()> {
    let exponent = (m * (n - 1)) as u32;
    let classes = 1u128.checked_shl(exponent).unwrap_or(u128::MAX);
    if exponent >= 127 || classes > HISTOGRAM_GUARD {
        return Err(QsaError::HistogramGuard {
            classes,
            guard: HISTOGRAM_GUARD,
        });
    }
    Ok(())
}

pub fn verify_batch(batch: &ShotBatch) -> Result<BatchSummary> {
    let mut acc = BatchAccumulator::new(false);
    for t in &batch.transcripts {
        acc.push(t)?;
    }
    acc.summary()
}

/// Counts keyed by `a ‖ y_{n-2} ‖ … ‖ y_0`.
pub fn outcome_histogram(batch: &ShotBatch) -> Result<BTreeMap<BitString, u64>> {
    let mut acc = BatchAccumulator::new(true);
    for t in &batch.transcripts {
        acc.push(t)?;
    }
    Ok(acc.histogram.unwrap_or_default())
}

/// Number of joint outcomes consistent with the correlation property.
pub fn parity_valid_classes(n: usize, m: usize) -> u128 {
    1u128 << (m * (n - 1))
}

/// Whether a joint outcome `a ‖ y_{n-2} ‖ … ‖ y_0` XORs to `s`.
pub fn is_parity_valid(outcome: &BitString, n: usize, s: &BitString) -> Result<bool> {
    let m = s.len();
    if outcome.len() != n * m {
        return Err(QsaError::LengthMismatch {
            left: outcome.len(),
            right: n * m,
        });
    }
    let registers = (0..n)
        .map(|k| outcome.slice(k * m, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(&reconstruct_secret(&registers[0], &registers[1..])? == s)
}

/// `outcome,count,probability` rows sorted by outcome.
pub fn histogram_csv(histogram: &BTreeMap<BitString, u64>, shots: u64) -> String {
    let mut out = String::from("outcome,count,probability\n");
    for (outcome, &count) in histogram {
        let _ = writeln!(out, "{outcome},{count},{}", count as f64 / shots as f64);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityVerdict {
    pub chi_square: f64,
    pub dof: u64,
    pub p_value: f64,
    /// Every class had at least [`MIN_EXPECTED`] expected counts.
    pub reliable: bool,
    /// `reliable && p_value > P_THRESHOLD`.
    pub pass: bool,
}

impl UniformityVerdict {
    fn new(chi_square: f64, dof: u64, reliable: bool) -> Self {
        let p_value = chi_square_sf(chi_square, dof as f64);
        UniformityVerdict {
            chi_square,
            dof,
            p_value,
            reliable,
            pass: reliable && p_value > P_THRESHOLD,
        }
    }
}

/// Pearson test of `counts` against a uniform law over `classes` classes;
/// classes missing from `counts` are observed zero times.
pub fn chi_square_uniform(counts: &[u64], classes: u64) -> Result<UniformityVerdict> {
    if classes < 2 || counts.len() as u64 > classes {
        return Err(QsaError::InvalidBatch(format!(
            "{} observed classes for a {classes}-class test",
            counts.len()
        )));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(QsaError::InvalidBatch("no observations".into()));
    }
    let expected = total as f64 / classes as f64;
    let observed: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let missing = (classes - counts.len() as u64) as f64 * expected;
    Ok(UniformityVerdict::new(
        observed + missing,
        classes - 1,
        expected >= MIN_EXPECTED,
    ))
}

/// Two-sample chi-square homogeneity test over the union of both supports.
pub fn chi_square_two_sample<K: Ord + Clone>(
    left: &BTreeMap<K, u64>,
    right: &BTreeMap<K, u64>,
) -> Result<UniformityVerdict> {
    let n_left: u64 = left.values().sum();
    let n_right: u64 = right.values().sum();
    if n_left == 0 || n_right == 0 {
        return Err(QsaError::InvalidBatch("empty sample".into()));
    }
    let mut keys: Vec<&K> = left.keys().chain(right.keys()).collect();
    keys.sort();
    keys.dedup();
    if keys.len() < 2 {
        // One shared class: the samples cannot differ.
        return Ok(UniformityVerdict {
            chi_square: 0.0,
            dof: 0,
            p_value: 1.0,
            reliable: true,
            pass: true,
        });
    }
    let total = (n_left + n_right) as f64;
    let mut stat = 0.0;
    let mut reliable = true;
    for k in &keys {
        let l = *left.get(k).unwrap_or(&0) as f64;
        let r = *right.get(k).unwrap_or(&0) as f64;
        let col = l + r;
        for (obs, row) in [(l, n_left as f64), (r, n_right as f64)] {
            let expected = row * col / total;
            reliable &= expected >= MIN_EXPECTED;
            stat += (obs - expected).powi(2) / expected;
        }
    }
    Ok(UniformityVerdict::new(
        stat,
        keys.len() as u64 - 1,
        reliable,
    ))
}

/// Survival function of the chi-square law with `dof` degrees of freedom.
pub fn chi_square_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(dof / 2.0, x / 2.0)
}

const GAMMA_EPS: f64 = 1e-15;
const GAMMA_MAX_ITER: usize = 10_000;

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// Regularized upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    // Modified Lentz.
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}
