//! `qsa`: batch runner for quantum secret aggregation experiments.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qsa_core::adversary::Basis;
use qsa_core::bitkit::BitString;
use qsa_core::experiment::{execute, run_experiment, AttackName, ExperimentSpec};
use qsa_core::protocol::{Engine, GhzSource};
use qsa_core::qstate::{prepare_ghz, CircuitSchedule, Gate, DENSE_LIMIT};
use qsa_core::{invariants, QsaError};

#[derive(Parser)]
#[command(
    name = "qsa",
    version,
    about = "Quantum secret aggregation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of shots and write transcripts, histogram and summary.
    Run(RunArgs),
    /// Run the invariant suite.
    Verify {
        /// Largest secret length for the exhaustive checks.
        #[arg(long, default_value_t = 3)]
        max_m: usize,
    },
    /// Sweep an attack's strength and emit success curves as CSV.
    Attack(AttackArgs),
    /// Dump a prepared GHZ state as JSON.
    Ghz {
        #[arg(long)]
        n: usize,
        /// Hide amplitudes at or below this magnitude.
        #[arg(long, default_value_t = 1e-12)]
        threshold: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Dense,
    Factorized,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Spymaster,
    ThirdParty,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum AttackArg {
    None,
    Intercept,
    Pns,
    Blinding,
}

#[derive(Clone, Copy, ValueEnum)]
enum BasisArg {
    X,
    Z,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Dense => Engine::Dense,
            EngineArg::Factorized => Engine::Factorized,
        }
    }
}

impl From<SourceArg> for GhzSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Spymaster => GhzSource::Spymaster,
            SourceArg::ThirdParty => GhzSource::TrustedThirdParty,
        }
    }
}

impl From<AttackArg> for AttackName {
    fn from(a: AttackArg) -> Self {
        match a {
            AttackArg::None => AttackName::None,
            AttackArg::Intercept => AttackName::Intercept,
            AttackArg::Pns => AttackName::Pns,
            AttackArg::Blinding => AttackName::Blinding,
        }
    }
}

impl From<BasisArg> for Basis {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::X => Basis::X,
            BasisArg::Z => Basis::Z,
        }
    }
}

#[derive(Args, Default)]
struct RunArgs {
    /// JSON or TOML file with ExperimentSpec fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// The three-player toy instance (keys 01 and 10, 4096 dense shots, seed 42).
    #[arg(long)]
    paper_example: bool,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    key_lengths: Option<Vec<usize>>,
    /// Total secret length, split evenly across agents.
    #[arg(long)]
    m: Option<usize>,
    /// Partial keys, agent 0 first, e.g. `01,10`.
    #[arg(long, value_delimiter = ',')]
    keys: Option<Vec<BitString>>,
    #[arg(long)]
    random_keys: bool,
    #[arg(long)]
    shots: Option<u64>,
    /// Master seed (default 0).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    #[arg(long, value_enum)]
    source: Option<SourceArg>,
    #[arg(long, value_enum)]
    attack: Option<AttackArg>,
    #[arg(long)]
    pns_fraction: Option<f64>,
    #[arg(long)]
    intercept_fraction: Option<f64>,
    #[arg(long, value_enum)]
    eve_basis: Option<BasisArg>,
    /// Eavesdropper seed (defaults to the master seed).
    #[arg(long)]
    eve_seed: Option<u64>,
    #[arg(long)]
    max_restarts: Option<u32>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Cap on transcript lines written to `transcripts.jsonl`.
    #[arg(long)]
    max_transcripts: Option<u64>,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long, value_enum)]
    attack: AttackArg,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, value_enum, default_value = "x")]
    eve_basis: BasisArg,
    /// Defaults to third-party for blinding, spymaster otherwise.
    #[arg(long, value_enum)]
    source: Option<SourceArg>,
    /// Attacked-tuple fractions to sweep (ignored by blinding).
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    fractions: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    shots: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure reported as one JSON record on stderr.
#[derive(Debug, Serialize)]
struct ErrorRecord {
    error: String,
    message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    failed: Vec<String>,
}

#[derive(Debug)]
enum Failure {
    Config(ErrorRecord),
    Assertion(ErrorRecord),
}

impl From<QsaError> for Failure {
    fn from(e: QsaError) -> Self {
        Failure::Config(ErrorRecord {
            error: e.kind().to_string(),
            message: e.to_string(),
            failed: Vec::new(),
        })
    }
}

fn config_error(message: String) -> Failure {
    Failure::Config(ErrorRecord {
        error: "invalid_config".into(),
        message,
        failed: Vec::new(),
    })
}

fn load_spec_file(path: &Path) -> Result<(ExperimentSpec, BTreeSet<String>), Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    let parse_error = |e: &dyn std::fmt::Display| config_error(format!("{}: {e}", path.display()));
    let is_toml = path.extension().is_some_and(|ext| ext == "toml");
    if is_toml {
        let table: toml::Table = toml::from_str(&text).map_err(|e| parse_error(&e))?;
        let keys = table.keys().cloned().collect();
        let spec = table.try_into().map_err(|e| parse_error(&e))?;
        Ok((spec, keys))
    } else {
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| parse_error(&e))?;
        let keys = value
            .as_object()
            .map(|o| o.keys().cloned().collect())
            .unwrap_or_default();
        let spec = serde_json::from_value(value).map_err(|e| parse_error(&e))?;
        Ok((spec, keys))
    }
}

fn build_spec(args: &RunArgs) -> Result<ExperimentSpec, Failure> {
    let (mut spec, file_keys) = match (&args.config, args.paper_example) {
        (Some(_), true) => {
            return Err(config_error(
                "--config and --paper-example are mutually exclusive".into(),
            ))
        }
        (Some(path), false) => load_spec_file(path)?,
        (None, true) => (ExperimentSpec::paper_example(), BTreeSet::new()),
        (None, false) => (ExperimentSpec::default(), BTreeSet::new()),
    };
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(lengths) = &args.key_lengths {
        spec.key_lengths = Some(lengths.clone());
        spec.keys = None;
    }
    if let Some(m) = args.m {
        spec.m = Some(m);
        spec.keys = None;
    }
    if let Some(keys) = &args.keys {
        spec.keys = Some(keys.clone());
        spec.random_keys = false;
    }
    if args.random_keys {
        spec.random_keys = true;
        spec.keys = None;
    }
    if let Some(shots) = args.shots {
        spec.shots = shots;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(engine) = args.engine {
        spec.engine = engine.into();
    }
    if let Some(attack) = args.attack {
        spec.attack = attack.into();
    }
    match args.source {
        Some(source) => spec.source = source.into(),
        // Blinding needs an outside source; pick it unless one was chosen.
        None if spec.attack == AttackName::Blinding && !file_keys.contains("source") => {
            spec.source = GhzSource::TrustedThirdParty;
        }
        None => {}
    }
    if let Some(f) = args.pns_fraction {
        spec.pns_fraction = f;
    }
    if let Some(f) = args.intercept_fraction {
        spec.intercept_fraction = f;
    }
    if let Some(b) = args.eve_basis {
        spec.eve_basis = b.into();
    }
    if let Some(s) = args.eve_seed {
        spec.eve_seed = Some(s);
    }
    if let Some(r) = args.max_restarts {
        spec.max_restarts = r;
    }
    if let Some(t) = args.threads {
        spec.threads = t;
    }
    if let Some(dir) = &args.out_dir {
        spec.out_dir = dir.clone();
    }
    if let Some(cap) = args.max_transcripts {
        spec.max_transcripts = cap;
    }
    Ok(spec)
}

fn print_json<T: Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    println!("{text}");
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let spec = build_spec(args)?;
    let summary = run_experiment(&spec)?;
    print_json(&summary);
    if summary.passed {
        Ok(())
    } else {
        Err(Failure::Assertion(ErrorRecord {
            error: "assertion_failed".into(),
            message: "hard assertions failed".into(),
            failed: summary
                .assertions
                .iter()
                .filter(|a| !a.pass)
                .map(|a| format!("{}: {}", a.name, a.detail))
                .collect(),
        }))
    }
}

fn cmd_verify(max_m: usize) -> Result<(), Failure> {
    if max_m < 2 {
        return Err(config_error("--max-m must be at least 2".into()));
    }
    let reports = invariants::run_all(max_m)?;
    for r in &reports {
        println!("{}", serde_json::to_string(r).expect("serializable"));
    }
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{}: {}", r.check, r.detail))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assertion(ErrorRecord {
            error: "assertion_failed".into(),
            message: format!("{} of {} checks failed", failed.len(), reports.len()),
            failed,
        }))
    }
}

fn cmd_attack(args: &AttackArgs) -> Result<(), Failure> {
    if args.attack == AttackArg::None {
        return Err(config_error("--attack none has nothing to sweep".into()));
    }
    let source = match args.source {
        Some(s) => s.into(),
        None if args.attack == AttackArg::Blinding => GhzSource::TrustedThirdParty,
        None => GhzSource::Spymaster,
    };
    let fractions = if args.attack == AttackArg::Blinding {
        vec![1.0]
    } else {
        args.fractions.clone()
    };
    let basis: Basis = args.eve_basis.into();
    let mut csv = String::from(
        "attack,eve_basis,source,fraction,shots,eve_success,alice_corrupted,extended_parity,restart_fraction\n",
    );
    for fraction in fractions {
        let spec = ExperimentSpec {
            n: args.n,
            m: Some(args.m),
            random_keys: true,
            shots: args.shots,
            seed: args.seed,
            source,
            attack: args.attack.into(),
            pns_fraction: fraction,
            intercept_fraction: fraction,
            eve_basis: basis,
            threads: args.threads,
            max_transcripts: 0,
            ..ExperimentSpec::default()
        };
        let batch = execute(&spec)?.summary.batch;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        csv.push_str(&format!(
            "{},{},{},{fraction},{},{},{},{},{}\n",
            batch.attack,
            serde_json::to_value(basis)
                .expect("serializable")
                .as_str()
                .unwrap_or(""),
            serde_json::to_value(source)
                .expect("serializable")
                .as_str()
                .unwrap_or(""),
            batch.shots,
            opt(batch.eve_success_fraction),
            opt(batch.alice_corrupted_fraction),
            opt(batch.extended_parity_fraction),
            batch.restart_fraction,
        ));
    }
    match &args.out {
        Some(path) => {
            fs::write(path, csv).map_err(|e| config_error(format!("{}: {e}", path.display())))?
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(csv.as_bytes());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct GhzDump {
    n: usize,
    cnot_layers: usize,
    layers: Vec<Vec<String>>,
    digest: String,
    amplitudes: Vec<AmplitudeRow>,
}

#[derive(Serialize)]
struct AmplitudeRow {
    index: u64,
    bits: String,
    re: f64,
    im: f64,
}

fn cmd_ghz(n: usize, threshold: f64) -> Result<(), Failure> {
    if n == 0 || n > DENSE_LIMIT {
        return Err(config_error(format!("--n must be in 1..={DENSE_LIMIT}")));
    }
    let qubits: Vec<usize> = (0..n).collect();
    let schedule = CircuitSchedule::ghz(&qubits)?;
    let state = prepare_ghz(n)?;
    let layers = schedule
        .layers()
        .iter()
        .map(|layer| {
            layer
                .iter()
                .map(|g| match g {
                    Gate::H(q) => format!("H {q}"),
                    Gate::Cnot { control, target } => format!("CNOT {control}->{target}"),
                })
                .collect()
        })
        .collect();
    let amplitudes = state
        .dump(threshold)
        .into_iter()
        .map(|a| AmplitudeRow {
            bits: format!("{:0width$b}", a.index, width = n),
            index: a.index,
            re: a.re,
            im: a.im,
        })
        .collect();
    print_json(&GhzDump {
        n,
        cnot_layers: schedule.cnot_layer_count(),
        layers,
        digest: state.digest(),
        amplitudes,
    });
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Verify { max_m } => cmd_verify(*max_m),
        Command::Attack(args) => cmd_attack(args),
        Command::Ghz { n, threshold } => cmd_ghz(*n, *threshold),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let (record, code) = match failure {
                Failure::Assertion(r) => (r, 1),
                Failure::Config(r) => (r, 2),
            };
            eprintln!("{}", serde_json::to_string(&record).expect("serializable"));
            ExitCode::from(code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.toml");
        fs::write(&path, "n = 4\nm = 6\nshots = 10\nseed = 5\n").unwrap();
        let args = RunArgs {
            config: Some(path),
            shots: Some(3),
            ..RunArgs::default()
        };
        let spec = build_spec(&args).unwrap();
        assert_eq!((spec.n, spec.m, spec.shots, spec.seed), (4, Some(6), 3, 5));
    }

    #[test]
    fn blinding_picks_outside_source() {
        let args = RunArgs {
            attack: Some(AttackArg::Blinding),
            ..RunArgs::default()
        };
        assert_eq!(
            build_spec(&args).unwrap().source,
            GhzSource::TrustedThirdParty
        );
    }

    #[test]
    fn explicit_source_in_file_is_kept() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.json");
        fs::write(
            &path,
            r#"{"m": 4, "source": "spymaster", "attack": "blinding"}"#,
        )
        .unwrap();
        let args = RunArgs {
            config: Some(path),
            ..RunArgs::default()
        };
        assert_eq!(build_spec(&args).unwrap().source, GhzSource::Spymaster);
    }

    #[test]
    fn random_keys_flag_drops_file_keys() {
        let args = RunArgs {
            paper_example: true,
            random_keys: true,
            ..RunArgs::default()
        };
        let spec = build_spec(&args).unwrap();
        assert!(spec.keys.is_none() && spec.random_keys);
    }
}
