//! Batch runner: a flat experiment description, shot-parallel execution and
//! the on-disk artifacts (`transcripts.jsonl`, `histogram.csv`,
//! `summary.json`).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{AttackModel, Basis};
use crate::analysis::{
    chi_square_uniform, histogram_csv, is_parity_valid, parity_valid_classes, BatchAccumulator,
    BatchSummary, UniformityVerdict,
};
use crate::bitkit::{BitString, KeyLayout};
use crate::error::{QsaError, Result};
use crate::protocol::{
    run_prepared, Engine, GhzSource, PartialKeys, Prepared, ProtocolConfig, Transcript,
    DEFAULT_MAX_RESTARTS,
};

/// Shots handed to the thread pool at a time.
const CHUNK: u64 = 4096;
/// Transcripts written to disk unless overridden.
pub const DEFAULT_MAX_TRANSCRIPTS: u64 = 10_000;
/// Master seed when none is given; never derived from the clock.
pub const DEFAULT_SEED: u64 = 0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackName {
    #[default]
    None,
    Intercept,
    Pns,
    Blinding,
}

/// Everything needed to reproduce a batch. Unset fields take defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub n: usize,
    /// Per-agent key lengths; overrides `m`.
    pub key_lengths: Option<Vec<usize>>,
    /// Secret length, split as evenly as possible across agents.
    pub m: Option<usize>,
    pub keys: Option<Vec<BitString>>,
    pub random_keys: bool,
    pub shots: u64,
    pub seed: u64,
    pub engine: Engine,
    pub source: GhzSource,
    pub attack: AttackName,
    pub pns_fraction: f64,
    pub intercept_fraction: f64,
    pub eve_basis: Basis,
    /// Defaults to `seed`.
    pub eve_seed: Option<u64>,
    pub max_restarts: u32,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub max_transcripts: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            n: 3,
            key_lengths: None,
            m: None,
            keys: None,
            random_keys: false,
            shots: 1,
            seed: DEFAULT_SEED,
            engine: Engine::default(),
            source: GhzSource::default(),
            attack: AttackName::None,
            pns_fraction: 1.0,
            intercept_fraction: 1.0,
            eve_basis: Basis::X,
            eve_seed: None,
            max_restarts: DEFAULT_MAX_RESTARTS,
            threads: 1,
            out_dir: PathBuf::from("out"),
            max_transcripts: DEFAULT_MAX_TRANSCRIPTS,
        }
    }
}

impl ExperimentSpec {
    /// The three-player toy instance: keys 01 and 10, 4096 dense shots.
    pub fn paper_example() -> Self {
        ExperimentSpec {
            n: 3,
            keys: Some(vec!["01".parse().unwrap(), "10".parse().unwrap()]),
            shots: 4096,
            seed: 42,
            engine: Engine::Dense,
            ..ExperimentSpec::default()
        }
    }

    pub fn protocol_config(&self) -> Result<ProtocolConfig> {
        let seed = self.seed;
        if self.shots == 0 {
            return Err(QsaError::InvalidConfig("shots must be at least 1".into()));
        }
        if self.n < 3 {
            return Err(QsaError::InvalidConfig(format!("n = {} < 3", self.n)));
        }
        if self.keys.is_some() && self.random_keys {
            return Err(QsaError::InvalidConfig(
                "explicit keys and random keys are mutually exclusive".into(),
            ));
        }
        let agents = self.n - 1;
        let (layout, partial_keys) = match &self.keys {
            Some(keys) => {
                let lengths: Vec<usize> = keys.iter().map(BitString::len).collect();
                if let Some(declared) = &self.key_lengths {
                    if declared != &lengths {
                        return Err(QsaError::InvalidConfig(format!(
                            "key lengths {lengths:?} contradict {declared:?}"
                        )));
                    }
                }
                (
                    KeyLayout::new(lengths)?,
                    PartialKeys::Explicit(keys.clone()),
                )
            }
            None => {
                let layout = match (&self.key_lengths, self.m) {
                    (Some(lengths), _) => KeyLayout::new(lengths.clone())?,
                    (None, Some(m)) => KeyLayout::even_split(m, agents)?,
                    (None, None) => {
                        return Err(QsaError::InvalidConfig(
                            "one of keys, key_lengths or m is required".into(),
                        ))
                    }
                };
                (layout, PartialKeys::Random)
            }
        };
        if let (Some(m), Some(_)) = (self.m, &self.key_lengths) {
            if m != layout.total() {
                return Err(QsaError::InvalidConfig(format!(
                    "m = {m} but key lengths sum to {}",
                    layout.total()
                )));
            }
        }
        let mut config = ProtocolConfig::new(layout, partial_keys, seed)
            .engine(self.engine)
            .source(self.source);
        config.n = self.n;
        config.max_restarts = self.max_restarts;
        config.validate()?;
        Ok(config)
    }

    pub fn attack_model(&self) -> Result<Option<AttackModel>> {
        let eve_seed = self.eve_seed.unwrap_or(self.seed);
        Ok(match self.attack {
            AttackName::None => None,
            AttackName::Intercept => Some(AttackModel::intercept_resend(
                self.eve_basis,
                self.intercept_fraction,
                eve_seed,
            )),
            AttackName::Pns => Some(AttackModel::pns(
                self.pns_fraction,
                self.eve_basis,
                eve_seed,
            )),
            AttackName::Blinding => Some(AttackModel::blinding(eve_seed)),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let config = self.protocol_config()?;
        if self.threads == 0 {
            return Err(QsaError::InvalidConfig("threads must be at least 1".into()));
        }
        if let Some(model) = self.attack_model()? {
            model.validate(config.source)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssertionResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub batch: BatchSummary,
    /// Chi-square against the uniform law on parity-valid outcomes.
    pub uniformity: Option<UniformityVerdict>,
    /// Chi-square against the uniform law on parity-valid outcomes with
    /// `a ≠ 0`, the support left by the restart rule.
    pub uniformity_nonzero_a: Option<UniformityVerdict>,
    pub histogram_classes: usize,
    pub transcripts_written: u64,
    pub assertions: Vec<AssertionResult>,
    pub passed: bool,
}

/// In-memory result of [`execute`].
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub summary: ExperimentSummary,
    /// Line-delimited JSON, capped at `max_transcripts` lines.
    pub transcripts_jsonl: String,
    pub histogram_csv: Option<String>,
}

/// Runs every shot and evaluates the batch assertions.
pub fn execute(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let config = spec.protocol_config()?;
    let adversary = spec.attack_model()?;
    let prepared = Prepared::new(&config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads)
        .build()
        .map_err(|e| QsaError::InvalidConfig(format!("thread pool: {e}")))?;

    let guard_ok = crate::analysis::HISTOGRAM_GUARD >= parity_valid_classes(config.n, config.m());
    let mut acc = BatchAccumulator::new(guard_ok);
    let mut jsonl = String::new();
    let mut written = 0u64;
    let mut start = 0u64;
    while start < spec.shots {
        let end = (start + CHUNK).min(spec.shots);
        let chunk: Vec<Transcript> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|shot| run_prepared(&config, &prepared, adversary.as_ref(), shot))
                .collect::<Result<Vec<_>>>()
        })?;
        for t in &chunk {
            acc.push(t)?;
            if written < spec.max_transcripts {
                jsonl.push_str(&serde_json::to_string(t).map_err(serde_error)?);
                jsonl.push('\n');
                written += 1;
            }
        }
        start = end;
    }

    let batch = acc.summary()?;
    let histogram = acc.histogram();
    let mut assertions = Vec::new();
    let mut check = |name: &str, pass: bool, detail: String| {
        assertions.push(AssertionResult {
            name: name.to_string(),
            pass,
            detail,
        })
    };
    check(
        "shot_count",
        batch.shots == spec.shots,
        format!("{} of {} shots", batch.shots, spec.shots),
    );
    if adversary.is_none() {
        check(
            "fcp_every_shot",
            batch.fcp_fraction == 1.0,
            format!("fraction {}", batch.fcp_fraction),
        );
        check(
            "reconstruction_every_shot",
            batch.reconstruction_success_fraction == 1.0,
            format!("fraction {}", batch.reconstruction_success_fraction),
        );
    }
    // Only an X-basis readout of Eve's register completes the parity.
    let eve_reads_x = adversary
        .as_ref()
        .is_some_and(|a| a.kind.eve_holds_qubit() && a.kind.eve_register_basis() == Basis::X);
    if let (Some(frac), true) = (batch.extended_parity_fraction, eve_reads_x) {
        check(
            "extended_parity_every_shot",
            frac == 1.0,
            format!("fraction {frac}"),
        );
    }
    let mut uniformity = None;
    let mut uniformity_nonzero_a = None;
    if let Some(hist) = histogram {
        let total: u64 = hist.values().sum();
        check(
            "histogram_total",
            total == spec.shots,
            format!("{total} counted"),
        );
        if adversary.is_none() {
            let mut invalid = 0usize;
            for outcome in hist.keys() {
                invalid += usize::from(!is_parity_valid(outcome, config.n, &prepared.s)?);
            }
            check(
                "support_parity_valid",
                invalid == 0,
                format!("{invalid} invalid outcome classes"),
            );
            let (n, m) = (config.n, config.m());
            let mut zero_a = 0u64;
            for (outcome, &count) in hist {
                zero_a += count * u64::from(outcome.slice((n - 1) * m, m)?.is_zero());
            }
            check(
                "no_zero_a",
                zero_a == 0,
                format!("{zero_a} shots kept a = 0"),
            );
            let counts: Vec<u64> = hist.values().copied().collect();
            let classes = parity_valid_classes(n, m) as u64;
            if classes >= 2 {
                uniformity = Some(chi_square_uniform(&counts, classes)?);
            }
            // The restart rule removes the 2^{m(n-2)} classes with a = 0.
            let kept = classes - (1u64 << (m * (n - 2)));
            if kept >= 2 {
                uniformity_nonzero_a = Some(chi_square_uniform(&counts, kept)?);
            }
        }
    }
    let passed = assertions.iter().all(|a| a.pass);
    Ok(ExperimentOutput {
        summary: ExperimentSummary {
            batch,
            uniformity,
            uniformity_nonzero_a,
            histogram_classes: histogram.map_or(0, |h| h.len()),
            transcripts_written: written,
            assertions,
            passed,
        },
        transcripts_jsonl: jsonl,
        histogram_csv: histogram.map(|h| histogram_csv(h, spec.shots)),
    })
}

fn serde_error(e: serde_json::Error) -> QsaError {
    QsaError::InvalidConfig(format!("serialization: {e}"))
}

fn io_error(path: &Path, e: std::io::Error) -> QsaError {
    QsaError::InvalidConfig(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(contents.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| io_error(path, e))
}

/// [`execute`], then write the artifacts into `spec.out_dir`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentSummary> {
    let output = execute(spec)?;
    let dir = &spec.out_dir;
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    write_file(&dir.join("transcripts.jsonl"), &output.transcripts_jsonl)?;
    if let Some(csv) = &output.histogram_csv {
        write_file(&dir.join("histogram.csv"), csv)?;
    }
    let mut summary = serde_json::to_string_pretty(&output.summary).map_err(serde_error)?;
    summary.push('\n');
    write_file(&dir.join("summary.json"), &summary)?;
    Ok(output.summary)
}
