//! Simulation configuration and the flat `key = value` config format.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::geometry::{Architecture, RelayRegionParams};
use crate::strategies::{Placement, Strategy, StrategyRule, TieRules};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    /// Transmitter picks the cooperator nearest to itself and aims at it.
    P1,
    /// Cooperators self-select (nearest to the receiver); transmitter
    /// reduces its power to `nu^alpha` of direct.
    P2,
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "p1" | "1" => Ok(Protocol::P1),
            "p2" | "2" => Ok(Protocol::P2),
            other => Err(format!("unknown protocol '{other}' (expected p1|p2)")),
        }
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "adhoc" | "ad-hoc" => Ok(Architecture::AdHoc),
            "central" | "cellular" | "sink" => Ok(Architecture::CentralSink),
            other => Err(format!(
                "unknown architecture '{other}' (expected adhoc|central)"
            )),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the pair sequence varies across the iterations of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Traffic {
    /// The same `T` pairs are replayed in every iteration, so a node's
    /// fitness change between iterations comes from behaviour changes only.
    Repeated,
    /// Each iteration draws a fresh pair sequence.
    Fresh,
}

impl FromStr for Traffic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "repeated" => Ok(Traffic::Repeated),
            "fresh" => Ok(Traffic::Fresh),
            other => Err(format!(
                "unknown traffic schedule '{other}' (expected repeated|fresh)"
            )),
        }
    }
}

impl fmt::Display for Traffic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Traffic::Repeated => "repeated",
            Traffic::Fresh => "fresh",
        })
    }
}

/// Replication budget presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    /// N_t = 100 topologies, N = 300 iterations.
    Desk,
    /// N_t = N = 1000.
    Paper,
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(format!("unknown scale '{other}' (expected desk|paper)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Number of nodes.
    pub m: usize,
    /// Disk radius.
    pub radius: f64,
    pub path_loss_exp: f64,
    pub nu: f64,
    /// Slots per iteration.
    pub slots: usize,
    pub iterations: usize,
    /// Independent topologies.
    pub replications: usize,
    pub architecture: Architecture,
    pub strategy: Strategy,
    pub protocol: Protocol,
    pub seed: u64,
    pub placement: Placement,
    pub ties: TieRules,
    pub traffic: Traffic,
}

impl SimConfig {
    pub fn desk(architecture: Architecture, strategy: Strategy) -> Self {
        SimConfig {
            m: 30,
            radius: 1.0,
            path_loss_exp: 4.0,
            nu: 0.39,
            slots: 1000,
            iterations: 300,
            replications: 100,
            architecture,
            strategy,
            protocol: Protocol::P2,
            seed: 1,
            placement: Placement::RandomNode,
            // A node whose neighbourhood did not change keeps no grudge.
            ties: TieRules {
                tft_cooperates: true,
                wsls_shifts: false,
            },
            traffic: Traffic::Repeated,
        }
    }

    pub fn with_scale(mut self, scale: Scale) -> Self {
        match scale {
            Scale::Desk => {
                self.iterations = 300;
                self.replications = 100;
            }
            Scale::Paper => {
                self.iterations = 1000;
                self.replications = 1000;
            }
        }
        self
    }

    pub fn with_strategy(&self, strategy: Strategy) -> Self {
        SimConfig {
            strategy,
            ..self.clone()
        }
    }

    pub fn rule(&self) -> StrategyRule {
        StrategyRule::with_ties(self.strategy, self.ties)
    }

    pub fn region(&self) -> Result<RelayRegionParams, ConfigError> {
        RelayRegionParams::new(self.nu, self.path_loss_exp)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let min_m = match self.architecture {
            Architecture::AdHoc => 2,
            Architecture::CentralSink => 1,
        };
        if self.m < min_m {
            return Err(ConfigError::invalid(
                "m",
                format!("{} needs at least {min_m} nodes", self.architecture),
            ));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(ConfigError::invalid("radius", "must be positive"));
        }
        self.region()?;
        if self.slots == 0 {
            return Err(ConfigError::invalid("slots", "T must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(ConfigError::invalid("iters", "N must be at least 1"));
        }
        if self.replications == 0 {
            return Err(ConfigError::invalid("reps", "N_t must be at least 1"));
        }
        if self.architecture != Architecture::CentralSink {
            if self.strategy == Strategy::Minimal {
                return Err(ConfigError::Combination(
                    "MINIMAL routing requires the central-sink architecture".into(),
                ));
            }
            if matches!(self.placement, Placement::AtRadius(_)) {
                return Err(ConfigError::Combination(
                    "initial cooperator placement by radius requires the central-sink architecture"
                        .into(),
                ));
            }
        }
        if let Placement::AtRadius(r0) = self.placement {
            if !(r0 >= 0.0 && r0.is_finite()) {
                return Err(ConfigError::invalid("r0", "must be a non-negative radius"));
            }
        }
        if self.strategy == Strategy::Minimal && self.path_loss_exp <= 1.0 {
            return Err(ConfigError::invalid(
                "alpha",
                "MINIMAL routing needs alpha > 1",
            ));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(value: &str) -> Result<T, String>
        where
            T::Err: fmt::Display,
        {
            value.parse::<T>().map_err(|e| format!("'{value}': {e}"))
        }
        match key {
            "arch" | "architecture" => self.architecture = value.parse()?,
            "strategy" => self.strategy = value.parse()?,
            "protocol" => self.protocol = value.parse()?,
            "m" => self.m = num(value)?,
            "radius" => self.radius = num(value)?,
            "alpha" => self.path_loss_exp = num(value)?,
            "nu" => self.nu = num(value)?,
            "slots" => self.slots = num(value)?,
            "iters" => self.iterations = num(value)?,
            "reps" => self.replications = num(value)?,
            "seed" => self.seed = num(value)?,
            "scale" => *self = self.clone().with_scale(value.parse()?),
            "r0" => {
                self.placement = match value {
                    "random" => Placement::RandomNode,
                    v => Placement::AtRadius(num(v)?),
                }
            }
            "tft_tie" => self.ties.tft_cooperates = parse_tie(value, "cooperate", "defect")?,
            "wsls_tie" => self.ties.wsls_shifts = parse_tie(value, "shift", "stay")?,
            "traffic" => self.traffic = value.parse()?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Applies every setting in a flat config text: one `key = value` per
    /// line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (key, value, line) in parse_key_values(text)? {
            self.set(&key, &value)
                .map_err(|reason| ConfigError::Parse { line, reason })?;
        }
        Ok(())
    }
}

fn parse_tie(value: &str, yes: &str, no: &str) -> Result<bool, String> {
    if value == yes {
        Ok(true)
    } else if value == no {
        Ok(false)
    } else {
        Err(format!("expected '{yes}' or '{no}', got '{value}'"))
    }
}

/// Splits flat config text into `(key, value, line_number)` triples.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String, usize)>, ConfigError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
            line: idx + 1,
            reason: format!("expected 'key = value', got '{line}'"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Parse {
                line: idx + 1,
                reason: "empty key".into(),
            });
        }
        out.push((key.to_string(), value.trim().to_string(), idx + 1));
    }
    Ok(out)
}
