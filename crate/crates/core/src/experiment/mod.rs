//! Experiment harness: data sources, single runs with their output files,
//! paired clean baselines, sweeps and CSV summaries.

mod report;
mod sweep;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::backdoor::TriggerGraph;
use crate::error::{Error, Result};
use crate::fed::{to_csv, to_jsonl, AttackMode, Federation, RoundLog, ScenarioConfig};
use crate::gnn::ParamVector;
use crate::graph::{generate_triangles_dataset, parse_tu_dataset, GraphDataset};

pub use report::{summarize_csv, CsvTable};
pub use sweep::{preset, run_sweep, SweepAggregate, SweepParam, SweepRow, SweepSpec, SweepTable};

/// Where the graphs come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dataset", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// Triangle-counting graphs generated in memory.
    Synthetic {
        #[serde(default = "default_graphs")]
        graphs: usize,
        #[serde(default = "default_min_nodes")]
        min_nodes: usize,
        #[serde(default = "default_max_nodes")]
        max_nodes: usize,
        #[serde(default)]
        data_seed: u64,
    },
    /// A TU-format directory.
    Tu { data_dir: PathBuf },
}

fn default_graphs() -> usize {
    3000
}

fn default_min_nodes() -> usize {
    10
}

fn default_max_nodes() -> usize {
    32
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            graphs: default_graphs(),
            min_nodes: default_min_nodes(),
            max_nodes: default_max_nodes(),
            data_seed: 0,
        }
    }
}

impl DataSource {
    pub const KEYS: [&'static str; 6] = ["dataset", "graphs", "min_nodes", "max_nodes", "data_seed", "data_dir"];

    pub fn load(&self) -> Result<GraphDataset> {
        match self {
            DataSource::Synthetic {
                graphs,
                min_nodes,
                max_nodes,
                data_seed,
            } => generate_triangles_dataset(*graphs, (*min_nodes, *max_nodes), *data_seed),
            DataSource::Tu { data_dir } => parse_tu_dataset(data_dir),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DataSource::Synthetic {
                graphs,
                min_nodes,
                max_nodes,
                data_seed,
            } => format!("synthetic graphs={graphs} nodes={min_nodes}..={max_nodes} data_seed={data_seed}"),
            DataSource::Tu { data_dir } => format!("tu {}", data_dir.display()),
        }
    }

    /// A relative TU directory is taken relative to `base`.
    pub fn relative_to(self, base: &Path) -> Self {
        match self {
            DataSource::Tu { data_dir } if data_dir.is_relative() => DataSource::Tu {
                data_dir: base.join(data_dir),
            },
            other => other,
        }
    }

    /// Pulls the data keys out of `table`, leaving the rest untouched.
    fn take_from(table: &mut toml::Table) -> Result<Self> {
        let mut data = toml::Table::new();
        for key in Self::KEYS {
            if let Some(v) = table.remove(key) {
                data.insert(key.to_string(), v);
            }
        }
        if data.is_empty() {
            return Ok(DataSource::default());
        }
        if !data.contains_key("dataset") {
            let kind = if data.contains_key("data_dir") {
                "tu"
            } else {
                "synthetic"
            };
            data.insert("dataset".into(), toml::Value::String(kind.into()));
        }
        toml::Value::Table(data)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("data source serializes")
    }
}

/// Contents of a `run` configuration file: data keys plus scenario keys, all
/// at top level.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub scenario: ScenarioConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Self::from_table(table)
    }

    pub fn from_table(mut table: toml::Table) -> Result<Self> {
        let data = DataSource::take_from(&mut table)?;
        Ok(ExperimentConfig {
            data,
            scenario: ScenarioConfig::from_table(table)?,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.data = cfg.data.relative_to(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        let mut table = self.data.to_table();
        table.extend(toml::Table::try_from(&self.scenario).expect("config serializes"));
        toml::to_string(&table).expect("table serializes")
    }
}

/// One finished run with everything needed to report on it.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ScenarioConfig,
    pub logs: Vec<RoundLog>,
    pub malicious: Vec<usize>,
    pub local_triggers: Vec<TriggerGraph>,
    pub global_trigger: Option<TriggerGraph>,
    pub final_params: ParamVector,
    pub final_clean_acc: f64,
    pub final_asr_global: Option<f64>,
    pub final_asr_local: Vec<Option<f64>>,
    /// Filled in by [`run_paired`].
    pub cad: Option<f64>,
    pub wall_time: Duration,
}

impl ExperimentResult {
    /// Mean final ASR over the local triggers that could be evaluated.
    pub fn final_asr_local_mean(&self) -> Option<f64> {
        let vals: Vec<f64> = self.final_asr_local.iter().flatten().copied().collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn rounds_csv(&self) -> String {
        to_csv(&self.logs, self.local_triggers.len(), self.config.clients)
    }

    pub fn rounds_jsonl(&self) -> String {
        to_jsonl(&self.logs)
    }

    /// Plain-text manifest: configuration, data, roles, triggers, checksum.
    pub fn manifest(&self, data: &DataSource) -> String {
        let mut out = String::new();
        writeln!(out, "# fedgnn {} run manifest", env!("CARGO_PKG_VERSION")).unwrap();
        writeln!(out, "# data: {}", data.describe()).unwrap();
        writeln!(out, "# seed: {}", self.config.seed).unwrap();
        writeln!(out, "# malicious clients: {:?}", self.malicious).unwrap();
        for (i, t) in self.local_triggers.iter().enumerate() {
            writeln!(out, "# local trigger {}: {}", i + 1, t.to_edge_list()).unwrap();
        }
        if let Some(t) = &self.global_trigger {
            writeln!(out, "# global trigger: {}", t.to_edge_list()).unwrap();
        }
        writeln!(out, "# final checksum: {:016x}", self.final_params.checksum()).unwrap();
        out.push_str(
            &ExperimentConfig {
                data: data.clone(),
                scenario: self.config.clone(),
            }
            .to_toml(),
        );
        out
    }

    /// Writes `rounds.csv`, `rounds.jsonl`, `manifest.toml` and
    /// `final.params` under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, data: &DataSource) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("rounds.csv", self.rounds_csv().into_bytes()),
            ("rounds.jsonl", self.rounds_jsonl().into_bytes()),
            ("manifest.toml", self.manifest(data).into_bytes()),
            ("final.params", self.final_params.to_bytes()),
        ];
        files
            .into_iter()
            .map(|(name, bytes)| {
                let path = dir.join(name);
                write_atomic(&path, &bytes)?;
                Ok(path)
            })
            .collect()
    }
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn run_experiment(config: &ScenarioConfig, data: &GraphDataset) -> Result<ExperimentResult> {
    let start = Instant::now();
    let fed = Federation::setup(config, data)?;
    let out = fed.run()?;
    let last = out
        .logs
        .last()
        .ok_or_else(|| Error::Config("rounds must be at least 1".into()))?;
    Ok(ExperimentResult {
        config: config.clone(),
        final_clean_acc: last.clean_acc,
        final_asr_global: last.asr_global,
        final_asr_local: last.asr_local.clone(),
        logs: out.logs,
        malicious: fed.malicious,
        local_triggers: fed.local_triggers,
        global_trigger: fed.global_trigger,
        final_params: out.final_params,
        cad: None,
        wall_time: start.elapsed(),
    })
}

/// Clean accuracy drop of `attacked` relative to `clean`.
pub fn cad(attacked: &ExperimentResult, clean: &ExperimentResult) -> Result<f64> {
    if clean.config.attack != AttackMode::None {
        return Err(Error::Config(format!(
            "baseline run has attack {}",
            clean.config.attack
        )));
    }
    if !attacked.config.same_except_attack(&clean.config) {
        return Err(Error::Config("paired runs differ beyond the attack mode".into()));
    }
    Ok(clean.final_clean_acc - attacked.final_clean_acc)
}

/// Runs `config` and its attack-free twin; the attacked result carries the
/// CAD.
pub fn run_paired(config: &ScenarioConfig, data: &GraphDataset) -> Result<(ExperimentResult, ExperimentResult)> {
    let clean_cfg = ScenarioConfig {
        attack: AttackMode::None,
        ..config.clone()
    };
    let clean = run_experiment(&clean_cfg, data)?;
    let mut attacked = run_experiment(config, data)?;
    attacked.cad = Some(cad(&attacked, &clean)?);
    Ok((attacked, clean))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_config_splits_data_keys() {
        let cfg = ExperimentConfig::from_toml("graphs = 200\nmin_nodes = 8\nclients = 4\nrounds = 3\n").unwrap();
        assert_eq!(
            cfg.data,
            DataSource::Synthetic {
                graphs: 200,
                min_nodes: 8,
                max_nodes: 32,
                data_seed: 0
            }
        );
        assert_eq!(cfg.scenario.clients, 4);
        assert_eq!(cfg.scenario.rounds, 3);
    }

    #[test]
    fn data_dir_implies_tu() {
        let cfg = ExperimentConfig::from_toml("data_dir = \"x/y\"\n").unwrap();
        assert_eq!(cfg.data, DataSource::Tu { data_dir: "x/y".into() });
    }

    #[test]
    fn unknown_key_is_a_config_error() {
        let err = ExperimentConfig::from_toml("grahps = 10\n").unwrap_err();
        assert_eq!(err.kind(), "config");
        let err = ExperimentConfig::from_toml("dataset = \"tu\"\ngraphs = 10\n").unwrap_err();
        assert_eq!(err.kind(), "config");
    }

    #[test]
    fn experiment_config_round_trip() {
        let cfg = ExperimentConfig {
            data: DataSource::Synthetic {
                graphs: 100,
                min_nodes: 12,
                max_nodes: 20,
                data_seed: 9,
            },
            scenario: ScenarioConfig {
                rounds: 7,
                ..Default::default()
            },
        };
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
