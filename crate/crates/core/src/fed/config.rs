use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backdoor::TriggerParams;
use crate::defense::{DefenseKind, DMF_MERGE_THRESHOLD};
use crate::error::{Error, Result};
use crate::gnn::{ModelKind, ModelSpec, Readout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMode {
    /// No poisoning; triggers are still generated so the clean model's
    /// response to them can be measured.
    None,
    /// One client poisons with the composition of all local triggers.
    Cba,
    /// Every malicious client poisons with its own local trigger.
    #[default]
    Dba,
}

impl fmt::Display for AttackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackMode::None => "none",
            AttackMode::Cba => "cba",
            AttackMode::Dba => "dba",
        })
    }
}

impl FromStr for AttackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "clean" => Ok(AttackMode::None),
            "cba" => Ok(AttackMode::Cba),
            "dba" => Ok(AttackMode::Dba),
            _ => Err(Error::Config(format!("unknown attack {s:?} (none, cba, dba)"))),
        }
    }
}

/// What a malicious client does when none of its graphs can carry its
/// trigger (all target-labelled, or all smaller than the trigger).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoisonFailure {
    /// Abort the run with the client and round.
    #[default]
    Abort,
    /// Train on the unpoisoned local data for that round and log it.
    TrainClean,
}

/// One federated experiment. Every field has a default, so a config file
/// only needs the keys it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// K
    pub clients: usize,
    /// M
    pub malicious: usize,
    pub attack: AttackMode,
    pub defense: DefenseKind,
    pub model: ModelKind,
    pub hidden: usize,
    pub layers: usize,
    pub readout: Readout,
    /// T
    pub rounds: usize,
    /// E
    pub local_epochs: usize,
    /// B
    pub batch_size: usize,
    pub lr: f64,
    pub gamma: f64,
    pub rho: f64,
    pub poison_rate: f64,
    pub target_label: usize,
    /// Non-iid concentration; when absent 0.5 is used for datasets with more
    /// than two classes and 0.7 otherwise.
    pub split_q: Option<f64>,
    pub train_frac: f64,
    pub seed: u64,
    pub poison_failure: PoisonFailure,
    pub dmf_threshold: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let trigger = TriggerParams::default();
        ScenarioConfig {
            clients: 5,
            malicious: 3,
            attack: AttackMode::Dba,
            defense: DefenseKind::None,
            model: ModelKind::Gcn,
            hidden: 32,
            layers: 2,
            readout: Readout::Mean,
            rounds: 100,
            local_epochs: 2,
            batch_size: 16,
            lr: 0.01,
            gamma: trigger.gamma,
            rho: trigger.rho,
            poison_rate: trigger.poison_rate,
            target_label: trigger.target_label,
            split_q: None,
            train_frac: 0.8,
            seed: 0,
            poison_failure: PoisonFailure::Abort,
            dmf_threshold: DMF_MERGE_THRESHOLD,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Flat `key = value` rendering, parseable by [`ScenarioConfig::from_toml`].
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn trigger_params(&self) -> TriggerParams {
        TriggerParams {
            gamma: self.gamma,
            rho: self.rho,
            poison_rate: self.poison_rate,
            target_label: self.target_label,
        }
    }

    pub fn split_q_for(&self, n_classes: usize) -> f64 {
        self.split_q.unwrap_or(if n_classes > 2 { 0.5 } else { 0.7 })
    }

    pub fn model_spec(&self, feature_dim: usize, n_classes: usize) -> Result<ModelSpec> {
        ModelSpec::uniform(
            self.model,
            feature_dim,
            self.hidden,
            self.layers,
            n_classes,
            self.readout,
        )
    }

    /// Number of clients that actually poison.
    pub fn poisoning_clients(&self) -> usize {
        match self.attack {
            AttackMode::None => 0,
            AttackMode::Cba => 1,
            AttackMode::Dba => self.malicious,
        }
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::Config("clients must be at least 1".into()));
        }
        if self.malicious > self.clients {
            return Err(Error::Config(format!(
                "malicious ({}) exceeds clients ({})",
                self.malicious, self.clients
            )));
        }
        match self.attack {
            AttackMode::Dba if self.malicious < 2 => {
                return Err(Error::Config("a distributed attack needs malicious >= 2".into()))
            }
            AttackMode::Cba if self.malicious < 1 => {
                return Err(Error::Config("a centralized attack needs malicious >= 1".into()))
            }
            _ => {}
        }
        if n_classes < 2 {
            return Err(Error::Config(format!(
                "dataset has {n_classes} classes, need at least 2"
            )));
        }
        if self.layers == 0 || self.hidden == 0 {
            return Err(Error::Config("layers and hidden must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be non-negative, got {}", self.lr)));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::Config(format!(
                "train_frac must lie in (0, 1), got {}",
                self.train_frac
            )));
        }
        if self.clients >= 2 {
            let q = self.split_q_for(n_classes);
            if !(q >= 1.0 / self.clients as f64 - 1e-12 && q <= 1.0) {
                return Err(Error::Config(format!("split_q {q} outside [1/K, 1]")));
            }
        }
        if self.malicious > 0 {
            self.trigger_params().validate(n_classes)?;
        }
        Ok(())
    }

    /// Field-by-field comparison ignoring the attack mode.
    pub fn same_except_attack(&self, other: &ScenarioConfig) -> bool {
        ScenarioConfig {
            attack: other.attack,
            ..self.clone()
        } == *other
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = ScenarioConfig::from_toml("clients = 10\nattack = \"cba\"\nmodel = \"sage\"\n").unwrap();
        assert_eq!(cfg.clients, 10);
        assert_eq!(cfg.attack, AttackMode::Cba);
        assert_eq!(cfg.model, ModelKind::Sage);
        assert_eq!(cfg.rounds, 100);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ScenarioConfig::from_toml("clientz = 3\n").unwrap_err();
        assert!(err.to_string().contains("clientz"), "{err}");
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ScenarioConfig {
            split_q: Some(0.6),
            poison_failure: PoisonFailure::TrainClean,
            ..Default::default()
        };
        assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn attack_constraints() {
        let dba = ScenarioConfig {
            malicious: 1,
            ..Default::default()
        };
        assert!(dba.validate(10).is_err());
        let cba = ScenarioConfig {
            attack: AttackMode::Cba,
            malicious: 3,
            ..Default::default()
        };
        assert!(cba.validate(10).is_ok());
        assert_eq!(cba.poisoning_clients(), 1);
        let too_many = ScenarioConfig {
            malicious: 6,
            ..Default::default()
        };
        assert!(too_many.validate(10).is_err());
    }

    #[test]
    fn default_split_q_depends_on_classes() {
        let cfg = ScenarioConfig::default();
        assert_eq!(cfg.split_q_for(10), 0.5);
        assert_eq!(cfg.split_q_for(2), 0.7);
    }
}
