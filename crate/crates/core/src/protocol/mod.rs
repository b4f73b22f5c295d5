//! One complete aggregation game: GHZ distribution, the agents' phase
//! oracles, the final Hadamard layer, measurement, Alice's restart rule,
//! public broadcast and reconstruction.
//!
//! Two engines produce transcripts with the same distribution:
//! [`Engine::Dense`] simulates the full register state, while
//! [`Engine::Factorized`] samples each bit position independently from the
//! parity-constrained distribution the dense state collapses to.

mod dense;
pub mod exact;
mod factorized;

use serde::{Deserialize, Serialize};

use crate::adversary::{
    finish_report, AttackEvent, AttackKind, AttackModel, Eavesdropper, EveObservation, EveReport,
};
use crate::bitkit::{extend_partial_key, reconstruct_secret, BitString, KeyLayout};
use crate::channels::{ClassicalChannel, ClassicalMessage, DeliveryRecord, Player};
use crate::error::{QsaError, Result};
use crate::rng::{stream, Domain};

pub const DEFAULT_MAX_RESTARTS: u32 = 64;

/// Who creates and distributes the GHZ tuples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GhzSource {
    /// Alice prepares the tuples and keeps her qubit of each.
    #[default]
    Spymaster,
    /// An outside source sends a qubit of every tuple to every player.
    #[serde(alias = "third_party", alias = "third-party")]
    TrustedThirdParty,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Dense,
    #[default]
    Factorized,
}

/// Where the agents' partial keys come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartialKeys {
    Explicit(Vec<BitString>),
    /// Drawn uniformly from a stream of the master seed.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Total players: Alice plus `n - 1` agents.
    pub n: usize,
    pub layout: KeyLayout,
    pub partial_keys: PartialKeys,
    pub source: GhzSource,
    pub engine: Engine,
    pub seed: u64,
    pub max_restarts: u32,
}

impl ProtocolConfig {
    pub fn new(layout: KeyLayout, partial_keys: PartialKeys, seed: u64) -> Self {
        ProtocolConfig {
            n: layout.agents() + 1,
            layout,
            partial_keys,
            source: GhzSource::default(),
            engine: Engine::default(),
            seed,
            max_restarts: DEFAULT_MAX_RESTARTS,
        }
    }

    /// Config with explicit keys; the layout is taken from their lengths.
    pub fn with_keys(keys: Vec<BitString>, seed: u64) -> Result<Self> {
        let layout = KeyLayout::new(keys.iter().map(BitString::len).collect())?;
        Ok(Self::new(layout, PartialKeys::Explicit(keys), seed))
    }

    pub fn engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn source(mut self, source: GhzSource) -> Self {
        self.source = source;
        self
    }

    pub fn m(&self) -> usize {
        self.layout.total()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(QsaError::InvalidConfig(format!(
                "need at least 3 players, got {}",
                self.n
            )));
        }
        if self.layout.agents() != self.n - 1 {
            return Err(QsaError::InvalidConfig(format!(
                "layout lists {} agents but n = {}",
                self.layout.agents(),
                self.n
            )));
        }
        if self.max_restarts == 0 {
            return Err(QsaError::InvalidConfig(
                "max_restarts must be positive".into(),
            ));
        }
        if let PartialKeys::Explicit(keys) = &self.partial_keys {
            if keys.len() != self.n - 1 {
                return Err(QsaError::InvalidConfig(format!(
                    "{} partial keys for {} agents",
                    keys.len(),
                    self.n - 1
                )));
            }
            for (i, (k, &len)) in keys.iter().zip(self.layout.lengths()).enumerate() {
                if k.len() != len {
                    return Err(QsaError::InvalidConfig(format!(
                        "agent {i} key has {} bits, layout says {len}",
                        k.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// The agents' partial keys, drawing them from the seed if random.
    pub fn resolve_keys(&self) -> Result<Vec<BitString>> {
        self.validate()?;
        Ok(match &self.partial_keys {
            PartialKeys::Explicit(keys) => keys.clone(),
            PartialKeys::Random => {
                let mut rng = stream(self.seed, u64::MAX, 0, Domain::Keys);
                self.layout
                    .lengths()
                    .iter()
                    .map(|&len| BitString::random(len, &mut rng))
                    .collect()
            }
        })
    }

    /// The planted secret `s`.
    pub fn secret(&self) -> Result<BitString> {
        self.layout.compose(&self.resolve_keys()?)
    }

    /// Qubits that travel through the quantum channel for each tuple.
    pub fn in_transit(&self) -> Vec<Player> {
        let agents = (0..self.n - 1).map(Player::Agent);
        match self.source {
            GhzSource::Spymaster => agents.collect(),
            GhzSource::TrustedThirdParty => std::iter::once(Player::Alice).chain(agents).collect(),
        }
    }
}

/// Keys and secret resolved once per config.
#[derive(Clone, Debug)]
pub(crate) struct Prepared {
    pub n: usize,
    pub m: usize,
    pub s: BitString,
    pub extended: Vec<BitString>,
    pub in_transit: Vec<Player>,
}

impl Prepared {
    pub fn new(config: &ProtocolConfig) -> Result<Self> {
        let keys = config.resolve_keys()?;
        let extended = keys
            .iter()
            .enumerate()
            .map(|(i, p)| extend_partial_key(p, &config.layout, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Prepared {
            n: config.n,
            m: config.m(),
            s: config.layout.compose(&keys)?,
            extended,
            in_transit: config.in_transit(),
        })
    }

    /// Bit `j` of the extended key held by `player` (Alice holds none).
    pub fn key_bit(&self, player: Player, j: usize) -> bool {
        match player {
            Player::Alice => false,
            Player::Agent(i) => self.extended[i].get(j),
        }
    }
}

/// The ψ0 … ψ4 checkpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Psi0,
    Psi1,
    Psi2,
    Psi3,
    Psi4,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseMarker {
    pub phase: Phase,
    /// Digest of the simulated state; absent when no state exists.
    pub state_digest: Option<String>,
}

/// Raw output of one attempt, before the restart decision.
pub(crate) struct Attempt {
    pub a: BitString,
    pub ys: Vec<BitString>,
    pub eve_register: Option<BitString>,
    pub distribution: Vec<DeliveryRecord>,
    pub phases: Vec<PhaseMarker>,
}

/// Full record of one shot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub n: usize,
    pub m: usize,
    pub layout: KeyLayout,
    pub s: BitString,
    pub seed: u64,
    pub shot: u64,
    pub engine: Engine,
    pub source: GhzSource,
    pub distribution: Vec<DeliveryRecord>,
    pub phases: Vec<PhaseMarker>,
    pub a: BitString,
    pub ys: Vec<BitString>,
    pub broadcasts: Vec<ClassicalMessage>,
    pub reconstructed: BitString,
    pub restarts: u32,
    pub attack: String,
    pub attack_events: Vec<AttackEvent>,
}

impl Transcript {
    pub fn eve_report(&self) -> Option<&EveReport> {
        self.attack_events.iter().find_map(|e| match e {
            AttackEvent::Report(r) => Some(r),
            _ => None,
        })
    }

    /// `a ‖ y_{n-2} ‖ … ‖ y_0`, MSB-left.
    pub fn joint_outcome(&self) -> BitString {
        self.ys
            .iter()
            .rev()
            .fold(self.a.clone(), |acc, y| acc.concat(y))
    }
}

/// Runs shot 0 of `config`.
pub fn run_protocol(
    config: &ProtocolConfig,
    adversary: Option<&AttackModel>,
) -> Result<Transcript> {
    run_shot(config, adversary, 0)
}

/// Runs shot 0 on the factorized engine.
pub fn run_factorized(
    config: &ProtocolConfig,
    adversary: Option<&AttackModel>,
) -> Result<Transcript> {
    if config.engine != Engine::Factorized {
        return Err(QsaError::InvalidConfig(
            "run_factorized needs engine = factorized".into(),
        ));
    }
    run_shot(config, adversary, 0)
}

/// Runs shot `shot`, repeating the whole process while Alice reads `a = 0`.
pub fn run_shot(
    config: &ProtocolConfig,
    adversary: Option<&AttackModel>,
    shot: u64,
) -> Result<Transcript> {
    let prepared = Prepared::new(config)?;
    run_prepared(config, &prepared, adversary, shot)
}

pub(crate) fn run_prepared(
    config: &ProtocolConfig,
    prepared: &Prepared,
    adversary: Option<&AttackModel>,
    shot: u64,
) -> Result<Transcript> {
    let model = adversary.copied().unwrap_or_else(AttackModel::none);
    model.validate(config.source)?;
    for restart in 0..config.max_restarts {
        let mut honest = stream(config.seed, shot, restart, Domain::Honest);
        let eve_rng = stream(model.eve_seed, shot, restart, Domain::Eve);
        let mut eve = Eavesdropper::new(model.kind, prepared.m, eve_rng);
        let attempt = match config.engine {
            Engine::Dense => dense::attempt(prepared, &mut eve, &mut honest)?,
            Engine::Factorized => factorized::attempt(prepared, &mut eve, &mut honest)?,
        };
        if attempt.a.is_zero() {
            continue;
        }
        return finish(config, prepared, attempt, eve, restart, shot);
    }
    Err(QsaError::RestartsExhausted(config.max_restarts))
}

fn finish(
    config: &ProtocolConfig,
    prepared: &Prepared,
    attempt: Attempt,
    mut eve: Eavesdropper,
    restarts: u32,
    shot: u64,
) -> Result<Transcript> {
    let mut channel = ClassicalChannel::new(prepared.m);
    for (i, y) in attempt.ys.iter().enumerate() {
        channel.broadcast(ClassicalMessage {
            sender: i,
            payload: y.clone(),
        })?;
    }
    let reconstructed = reconstruct_secret(&attempt.a, &channel.payloads())?;
    let attack_events = if eve.kind == AttackKind::None {
        Vec::new()
    } else {
        let observed = EveObservation {
            affected: eve.affected_tuples(),
            intercepted: std::mem::take(&mut eve.intercepted),
            register: attempt.eve_register.clone(),
            broadcasts: channel.payloads(),
        };
        finish_report(
            &eve.kind,
            observed,
            &prepared.s,
            &attempt.a,
            &attempt.ys,
            &reconstructed,
            &mut eve.rng,
        )?
    };
    Ok(Transcript {
        n: prepared.n,
        m: prepared.m,
        layout: config.layout.clone(),
        s: prepared.s.clone(),
        seed: config.seed,
        shot,
        engine: config.engine,
        source: config.source,
        distribution: attempt.distribution,
        phases: attempt.phases,
        a: attempt.a,
        ys: attempt.ys,
        broadcasts: channel.into_log(),
        reconstructed,
        restarts,
        attack: eve.kind.name().to_string(),
        attack_events,
    })
}

/// Fundamental correlation check: `a ⊕ y_{n-2} ⊕ … ⊕ y_0 == s`.
pub fn fcp_holds(transcript: &Transcript, s: &BitString) -> bool {
    reconstruct_secret(&transcript.a, &transcript.ys)
        .map(|x| &x == s)
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::Basis;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn toy(engine: Engine) -> ProtocolConfig {
        ProtocolConfig::with_keys(vec![bs("01"), bs("10")], 42)
            .unwrap()
            .engine(engine)
    }

    #[test]
    fn toy_instance_reconstructs_1001_on_both_engines() {
        for engine in [Engine::Dense, Engine::Factorized] {
            let config = toy(engine);
            assert_eq!(config.secret().unwrap(), bs("1001"));
            for shot in 0..50 {
                let t = run_shot(&config, None, shot).unwrap();
                assert_eq!(t.reconstructed, bs("1001"));
                assert!(fcp_holds(&t, &t.s));
                assert!(!t.a.is_zero());
                assert!(t.attack_events.is_empty());
            }
        }
    }

    #[test]
    fn zero_secret_reconstructs_zero() {
        for engine in [Engine::Dense, Engine::Factorized] {
            let config = ProtocolConfig::with_keys(vec![bs("00"), bs("000")], 5)
                .unwrap()
                .engine(engine);
            for shot in 0..20 {
                let t = run_shot(&config, None, shot).unwrap();
                assert!(t.reconstructed.is_zero());
                assert_eq!(reconstruct_secret(&t.a, &t.ys).unwrap(), t.s);
            }
        }
    }

    #[test]
    fn four_players_random_keys_always_reconstruct() {
        let layout = KeyLayout::new(vec![2, 2, 2]).unwrap();
        for seed in 0..1000u64 {
            let config = ProtocolConfig::new(layout.clone(), PartialKeys::Random, seed);
            let t = run_protocol(&config, None).unwrap();
            assert_eq!(t.reconstructed, config.secret().unwrap(), "seed {seed}");
        }
    }

    #[test]
    fn flipping_one_bit_breaks_the_correlation() {
        let t = run_protocol(&toy(Engine::Factorized), None).unwrap();
        let mut broken = t.clone();
        let bit = broken.ys[0].get(2);
        broken.ys[0].set(2, !bit);
        assert!(fcp_holds(&t, &t.s));
        assert!(!fcp_holds(&broken, &t.s));
    }

    #[test]
    fn config_validation() {
        let two_players = ProtocolConfig::with_keys(vec![bs("01")], 1).unwrap();
        assert!(matches!(
            run_protocol(&two_players, None),
            Err(QsaError::InvalidConfig(_))
        ));
        let mut mismatched = toy(Engine::Dense);
        mismatched.partial_keys = PartialKeys::Explicit(vec![bs("01"), bs("100")]);
        assert!(mismatched.validate().is_err());
        assert!(matches!(
            run_factorized(&toy(Engine::Dense), None),
            Err(QsaError::InvalidConfig(_))
        ));
        assert!(run_factorized(&toy(Engine::Factorized), None).is_ok());
    }

    #[test]
    fn restart_budget_exhaustion_is_reported() {
        let config = ProtocolConfig {
            max_restarts: 1,
            ..ProtocolConfig::with_keys(vec![bs("1"), bs("0")], 0).unwrap()
        };
        let failures = (0..200)
            .filter(|&shot| {
                matches!(
                    run_shot(&config, None, shot),
                    Err(QsaError::RestartsExhausted(1))
                )
            })
            .count();
        // m = 2, so a single attempt fails with probability 1/4.
        assert!(failures > 20 && failures < 90, "{failures}");
    }

    #[test]
    fn identical_inputs_give_identical_transcripts() {
        for engine in [Engine::Dense, Engine::Factorized] {
            let config = toy(engine).source(GhzSource::TrustedThirdParty);
            let attack = AttackModel::intercept_resend(Basis::X, 0.5, 77);
            let a = serde_json::to_string(&run_shot(&config, Some(&attack), 9).unwrap()).unwrap();
            let b = serde_json::to_string(&run_shot(&config, Some(&attack), 9).unwrap()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn transcript_fields_are_stable() {
        let t = run_protocol(&toy(Engine::Dense), None).unwrap();
        let v = serde_json::to_value(&t).unwrap();
        for key in [
            "n",
            "m",
            "layout",
            "s",
            "a",
            "ys",
            "reconstructed",
            "restarts",
            "attack",
            "seed",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["s"], "1001");
        assert_eq!(v["layout"], serde_json::json!([2, 2]));
        assert_eq!(t.phases.len(), 5);
        assert_eq!(t.distribution.len(), 4 * 2);
        assert_eq!(
            t.broadcasts.iter().map(|b| b.sender).collect::<Vec<_>>(),
            vec![0, 1]
        );
        let back: Transcript = serde_json::from_value(v).unwrap();
        assert_eq!(back, t);
    }
}
