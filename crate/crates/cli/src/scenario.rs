//! Scenario files: JSON on disk, validated into core model objects.
//!
//! Player indices are 1-based in files and 0-based everywhere else.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use deceptive_nes_core::{
    Deceiver, DeceptionTopology, ModelKind, NesTuning, OligopolyParams, QuadraticGame, Ratio,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: missing required field")]
    Missing { path: String },
    #[error("{path}: must be {requirement}, got {value}")]
    NonPositive {
        path: String,
        value: f64,
        requirement: &'static str,
    },
    #[error("{path}: expected {expected} entries, got {found}")]
    Length {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("{path}: player {player} does not exist (players are 1..={players})")]
    IndexOutOfRange {
        path: String,
        player: usize,
        players: usize,
    },
    #[error("{path}: frequency ratio {num}/{den} repeats player {other}'s ratio")]
    DuplicateFrequency {
        path: String,
        num: u64,
        den: u64,
        other: usize,
    },
    #[error("{path}: player {player} cannot deceive itself")]
    SelfDeception { path: String, player: usize },
    #[error("{path}: player {player} listed twice")]
    DuplicatePlayer { path: String, player: usize },
    #[error("{path}: a deceiver needs at least one victim")]
    EmptyVictims { path: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ScenarioError {
    /// Stable machine-readable name of the failure.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io",
            Self::Syntax { .. } => "syntax",
            Self::Missing { .. } => "missing_field",
            Self::NonPositive { .. } => "nonpositive_parameter",
            Self::Length { .. } => "length_mismatch",
            Self::IndexOutOfRange { .. } => "index_out_of_range",
            Self::DuplicateFrequency { .. } => "duplicate_frequency",
            Self::SelfDeception { .. } => "self_deception",
            Self::DuplicatePlayer { .. } => "duplicate_player",
            Self::EmptyVictims { .. } => "empty_victim_set",
            Self::Invalid { .. } => "invalid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatioSpec {
    pub num: u64,
    pub den: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub resistances: Vec<f64>,
    pub marginal_costs: Vec<f64>,
    pub total_demand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningSpec {
    pub amplitudes: Vec<f64>,
    pub gains: Vec<f64>,
    #[serde(default = "one")]
    pub omega: f64,
    pub frequency_ratios: Vec<RatioSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeceiverSpec {
    pub player: usize,
    pub victims: Vec<usize>,
    #[serde(default = "one")]
    pub gain: f64,
    pub j_ref: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeceptionSpec {
    pub eps: f64,
    pub deceivers: Vec<DeceiverSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelSpec {
    Full,
    Averaged,
    Reduced,
    Boundary,
}

impl From<ModelSpec> for ModelKind {
    fn from(m: ModelSpec) -> Self {
        match m {
            ModelSpec::Full => ModelKind::Full,
            ModelSpec::Averaged => ModelKind::Averaged,
            ModelSpec::Reduced => ModelKind::Reduced,
            ModelSpec::Boundary => ModelKind::Boundary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    pub horizon: f64,
    pub stride: f64,
    #[serde(default = "default_oversampling")]
    pub oversampling: usize,
    #[serde(default = "one")]
    pub freq_scale: f64,
    #[serde(default = "default_smooth_dt")]
    pub smooth_dt: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// Initial learned actions; defaults to the Nash equilibrium plus `offset`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
}

/// On-disk layout of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub market: MarketSpec,
    pub tuning: TuningSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deception: Option<DeceptionSpec>,
    pub sim: SimSpec,
    #[serde(default)]
    pub initial: InitialSpec,
}

fn one() -> f64 {
    1.0
}

fn default_model() -> ModelSpec {
    ModelSpec::Full
}

fn default_oversampling() -> usize {
    32
}

fn default_smooth_dt() -> f64 {
    1e-2
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub market: OligopolyParams,
    pub game: QuadraticGame,
    /// Tuning as written, before any frequency scaling.
    pub tuning: NesTuning,
    pub topology: DeceptionTopology,
}

impl Scenario {
    pub fn players(&self) -> usize {
        self.market.players()
    }

    pub fn has_deception(&self) -> bool {
        !self.topology.is_empty()
    }

    /// Tuning with `sim.freq_scale` applied.
    pub fn scaled_tuning(&self) -> NesTuning {
        self.tuning
            .with_frequency_scale(self.file.sim.freq_scale)
            .expect("validated scale keeps the tuning valid")
    }

    /// Initial deceptive gains, zero unless given.
    pub fn initial_delta(&self) -> Vec<f64> {
        self.file
            .initial
            .delta
            .clone()
            .unwrap_or_else(|| vec![0.0; self.topology.len()])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("scenario serializes")
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn write_scenario(scenario: &Scenario, path: &Path) -> std::io::Result<()> {
    fs::write(path, scenario.to_json() + "\n")
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        // serde appends " at line L column C"; keep the bare description
        let message = match message.rfind(" at line ") {
            Some(cut) => message[..cut].to_string(),
            None => message,
        };
        ScenarioError::Syntax {
            line: e.line(),
            column: e.column(),
            message,
        }
    })?;
    validate(file)
}

fn positive(path: impl Into<String>, value: f64) -> Result<(), ScenarioError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::NonPositive {
            path: path.into(),
            value,
            requirement: "positive and finite",
        })
    }
}

fn finite(path: impl Into<String>, value: f64) -> Result<(), ScenarioError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(ScenarioError::Invalid {
            path: path.into(),
            message: format!("{value} is not finite"),
        })
    }
}

fn length(path: &str, expected: usize, found: usize) -> Result<(), ScenarioError> {
    if expected == found {
        Ok(())
    } else {
        Err(ScenarioError::Length {
            path: path.to_string(),
            expected,
            found,
        })
    }
}

fn player_index(path: String, player: usize, players: usize) -> Result<usize, ScenarioError> {
    if (1..=players).contains(&player) {
        Ok(player - 1)
    } else {
        Err(ScenarioError::IndexOutOfRange {
            path,
            player,
            players,
        })
    }
}

pub fn validate(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
    let m = &file.market;
    let n = m.resistances.len();
    if n < 2 {
        return Err(ScenarioError::Invalid {
            path: "market.resistances".into(),
            message: format!("need at least 2 players, got {n}"),
        });
    }
    for (i, &r) in m.resistances.iter().enumerate() {
        positive(format!("market.resistances[{i}]"), r)?;
    }
    length("market.marginal_costs", n, m.marginal_costs.len())?;
    for (i, &c) in m.marginal_costs.iter().enumerate() {
        finite(format!("market.marginal_costs[{i}]"), c)?;
    }
    positive("market.total_demand", m.total_demand)?;

    let t = &file.tuning;
    length("tuning.amplitudes", n, t.amplitudes.len())?;
    length("tuning.gains", n, t.gains.len())?;
    length("tuning.frequency_ratios", n, t.frequency_ratios.len())?;
    for (i, &a) in t.amplitudes.iter().enumerate() {
        positive(format!("tuning.amplitudes[{i}]"), a)?;
    }
    for (i, &k) in t.gains.iter().enumerate() {
        positive(format!("tuning.gains[{i}]"), k)?;
    }
    positive("tuning.omega", t.omega)?;
    let mut ratios = Vec::with_capacity(n);
    for (i, r) in t.frequency_ratios.iter().enumerate() {
        let ratio = Ratio::new(r.num, r.den).map_err(|_| ScenarioError::NonPositive {
            path: format!("tuning.frequency_ratios[{i}]"),
            value: if r.den == 0 { f64::INFINITY } else { r.num as f64 },
            requirement: "a positive rational",
        })?;
        if let Some(j) = ratios.iter().position(|q| *q == ratio) {
            return Err(ScenarioError::DuplicateFrequency {
                path: format!("tuning.frequency_ratios[{i}]"),
                num: r.num,
                den: r.den,
                other: j + 1,
            });
        }
        ratios.push(ratio);
    }

    let topology = match &file.deception {
        None => DeceptionTopology::empty(n),
        Some(d) => validate_deception(d, n)?,
    };

    let s = &file.sim;
    positive("sim.horizon", s.horizon)?;
    positive("sim.stride", s.stride)?;
    if s.stride > s.horizon {
        return Err(ScenarioError::Invalid {
            path: "sim.stride".into(),
            message: format!("stride {} exceeds horizon {}", s.stride, s.horizon),
        });
    }
    if s.oversampling < 16 {
        return Err(ScenarioError::Invalid {
            path: "sim.oversampling".into(),
            message: format!("must be at least 16, got {}", s.oversampling),
        });
    }
    positive("sim.freq_scale", s.freq_scale)?;
    positive("sim.smooth_dt", s.smooth_dt)?;

    let init = &file.initial;
    if init.u.is_some() && init.offset.is_some() {
        return Err(ScenarioError::Invalid {
            path: "initial".into(),
            message: "give either u or offset, not both".into(),
        });
    }
    for (name, v) in [("initial.u", &init.u), ("initial.offset", &init.offset)] {
        if let Some(v) = v {
            length(name, n, v.len())?;
            for (i, &x) in v.iter().enumerate() {
                finite(format!("{name}[{i}]"), x)?;
            }
        }
    }
    if let Some(d) = &init.delta {
        length("initial.delta", topology.len(), d.len())?;
        for (i, &x) in d.iter().enumerate() {
            finite(format!("initial.delta[{i}]"), x)?;
        }
    }

    let market = OligopolyParams::new(m.resistances.clone(), m.marginal_costs.clone(), m.total_demand)
        .map_err(|e| ScenarioError::Invalid {
            path: "market".into(),
            message: e.to_string(),
        })?;
    let game = QuadraticGame::new(&market);
    let tuning = NesTuning::new(t.amplitudes.clone(), t.gains.clone(), t.omega, ratios).map_err(|e| {
        ScenarioError::Invalid {
            path: "tuning".into(),
            message: e.to_string(),
        }
    })?;
    tuning
        .with_frequency_scale(s.freq_scale)
        .map_err(|e| ScenarioError::Invalid {
            path: "sim.freq_scale".into(),
            message: e.to_string(),
        })?;
    Ok(Scenario {
        file,
        market,
        game,
        tuning,
        topology,
    })
}

fn validate_deception(d: &DeceptionSpec, n: usize) -> Result<DeceptionTopology, ScenarioError> {
    positive("deception.eps", d.eps)?;
    if d.deceivers.is_empty() {
        return Err(ScenarioError::Invalid {
            path: "deception.deceivers".into(),
            message: "omit the deception block instead of listing no deceivers".into(),
        });
    }
    let mut seen = BTreeSet::new();
    let mut deceivers = Vec::with_capacity(d.deceivers.len());
    for (s, spec) in d.deceivers.iter().enumerate() {
        let base = format!("deception.deceivers[{s}]");
        let player = player_index(format!("{base}.player"), spec.player, n)?;
        if !seen.insert(player) {
            return Err(ScenarioError::DuplicatePlayer {
                path: format!("{base}.player"),
                player: spec.player,
            });
        }
        if spec.victims.is_empty() {
            return Err(ScenarioError::EmptyVictims {
                path: format!("{base}.victims"),
            });
        }
        let mut victims = Vec::with_capacity(spec.victims.len());
        for (v, &victim) in spec.victims.iter().enumerate() {
            let path = format!("{base}.victims[{v}]");
            let j = player_index(path.clone(), victim, n)?;
            if j == player {
                return Err(ScenarioError::SelfDeception {
                    path,
                    player: spec.player,
                });
            }
            if victims.contains(&j) {
                return Err(ScenarioError::DuplicatePlayer {
                    path,
                    player: victim,
                });
            }
            victims.push(j);
        }
        positive(format!("{base}.gain"), spec.gain)?;
        finite(format!("{base}.j_ref"), spec.j_ref)?;
        deceivers.push(Deceiver {
            player,
            victims,
            gain: spec.gain,
            j_ref: spec.j_ref,
        });
    }
    DeceptionTopology::new(n, d.eps, deceivers).map_err(|e| ScenarioError::Invalid {
        path: "deception".into(),
        message: e.to_string(),
    })
}
