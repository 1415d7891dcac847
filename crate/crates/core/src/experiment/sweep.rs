use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_experiment, DataSource, ExperimentResult};
use crate::error::{Error, Result};
use crate::fed::{fmt_sig6, PoisonFailure, ScenarioConfig};
use crate::graph::GraphDataset;
use crate::metrics::mean_stderr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Gamma,
    Rho,
    PoisonRate,
    #[serde(alias = "M")]
    Malicious,
    #[serde(alias = "K")]
    Clients,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Gamma => "gamma",
            SweepParam::Rho => "rho",
            SweepParam::PoisonRate => "poison_rate",
            SweepParam::Malicious => "malicious",
            SweepParam::Clients => "clients",
        }
    }

    fn check(self, v: f64) -> Result<()> {
        let ok = match self {
            SweepParam::Gamma => v > 0.0 && v.is_finite(),
            SweepParam::Rho => (0.0..=1.0).contains(&v),
            SweepParam::PoisonRate => v > 0.0 && v < 1.0,
            SweepParam::Malicious => v >= 0.0 && v.fract() == 0.0,
            SweepParam::Clients => v >= 1.0 && v.fract() == 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("{v} is not a valid value for {}", self.name())))
        }
    }

    /// `base` with this parameter set to `v`.
    pub fn apply(self, base: &ScenarioConfig, v: f64) -> Result<ScenarioConfig> {
        self.check(v)?;
        let mut cfg = base.clone();
        match self {
            SweepParam::Gamma => cfg.gamma = v,
            SweepParam::Rho => cfg.rho = v,
            SweepParam::PoisonRate => cfg.poison_rate = v,
            SweepParam::Malicious => cfg.malicious = v as usize,
            SweepParam::Clients => cfg.clients = v as usize,
        }
        Ok(cfg)
    }
}

/// A one-parameter grid with replications.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub replications: usize,
    pub base: ScenarioConfig,
}

impl SweepSpec {
    pub const KEYS: [&'static str; 4] = ["preset", "sweep_param", "sweep_values", "replications"];

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        for &v in &self.values {
            self.param.check(v)?;
        }
        Ok(())
    }

    /// Every (value, replication) cell; replication `i` runs with seed
    /// `base.seed + i`.
    pub fn cells(&self) -> Result<Vec<(f64, usize, ScenarioConfig)>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.values.len() * self.replications);
        for &v in &self.values {
            let cfg = self.param.apply(&self.base, v)?;
            for rep in 0..self.replications {
                let seed = self.base.seed.wrapping_add(rep as u64);
                out.push((v, rep, ScenarioConfig { seed, ..cfg.clone() }));
            }
        }
        Ok(out)
    }

    /// Reads a flat sweep file: data keys, sweep keys and base scenario keys.
    pub fn from_toml(text: &str) -> Result<(Self, DataSource)> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Self::from_table(table)
    }

    pub fn from_table(mut table: toml::Table) -> Result<(Self, DataSource)> {
        let data = DataSource::take_from(&mut table)?;
        let preset_name = table.remove("preset");
        let param = table.remove("sweep_param");
        let values = table.remove("sweep_values");
        let replications = table.remove("replications");
        let base = ScenarioConfig::from_table(table)?;

        let mut spec = match preset_name {
            Some(toml::Value::String(name)) => preset(&name, &base)?,
            Some(other) => return Err(Error::Config(format!("preset must be a string, got {other}"))),
            None => SweepSpec {
                param: SweepParam::Gamma,
                values: Vec::new(),
                replications: 1,
                base,
            },
        };
        let missing = spec.values.is_empty();
        match param {
            Some(v) => {
                spec.param = v
                    .try_into()
                    .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?
            }
            None if missing => return Err(Error::Config("missing key sweep_param".into())),
            None => {}
        }
        match values {
            Some(toml::Value::Array(items)) => {
                spec.values = items
                    .iter()
                    .map(|v| match v {
                        toml::Value::Float(f) => Ok(*f),
                        toml::Value::Integer(i) => Ok(*i as f64),
                        other => Err(Error::Config(format!("sweep value {other} is not a number"))),
                    })
                    .collect::<Result<_>>()?
            }
            Some(other) => return Err(Error::Config(format!("sweep_values must be an array, got {other}"))),
            None if missing => return Err(Error::Config("missing key sweep_values".into())),
            None => {}
        }
        if let Some(r) = replications {
            spec.replications = match r {
                toml::Value::Integer(n) if n > 0 => n as usize,
                other => {
                    return Err(Error::Config(format!(
                        "replications must be a positive integer, got {other}"
                    )))
                }
            };
        }
        spec.validate()?;
        Ok((spec, data))
    }
}

/// Client/malicious-count settings of the four experiment families:
/// `exp1` (K=5, M=2), `exp2` (K=5, M=3), `exp3` (K=10, M in {4, 6}) and
/// `exp4` (K=100, M in {5, 10, 15, 20}, 50 rounds).
pub fn preset(name: &str, base: &ScenarioConfig) -> Result<SweepSpec> {
    let (clients, values): (usize, Vec<f64>) = match name {
        "exp1" => (5, vec![2.0]),
        "exp2" => (5, vec![3.0]),
        "exp3" => (10, vec![4.0, 6.0]),
        "exp4" => (100, vec![5.0, 10.0, 15.0, 20.0]),
        _ => {
            return Err(Error::Config(format!(
                "unknown preset {name:?} (exp1, exp2, exp3, exp4)"
            )))
        }
    };
    let mut base = ScenarioConfig {
        clients,
        ..base.clone()
    };
    if name == "exp4" {
        base.rounds = 50;
        base.poison_failure = PoisonFailure::TrainClean;
    }
    Ok(SweepSpec {
        param: SweepParam::Malicious,
        values,
        replications: 1,
        base,
    })
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub replication: usize,
    pub config: ScenarioConfig,
    /// Failed cells keep their diagnostic instead of aborting the sweep.
    pub outcome: std::result::Result<ExperimentResult, String>,
}

/// Mean and standard error per value over the successful replications.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAggregate {
    pub value: f64,
    pub ok: usize,
    pub failed: usize,
    pub clean_acc: Option<(f64, f64)>,
    pub asr_global: Option<(f64, f64)>,
    pub asr_local: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
}

fn pair(x: Option<(f64, f64)>) -> [String; 2] {
    match x {
        Some((m, s)) => [fmt_sig6(m), fmt_sig6(s)],
        None => [String::new(), String::new()],
    }
}

impl SweepTable {
    pub fn aggregates(&self) -> Vec<SweepAggregate> {
        let mut values: Vec<f64> = Vec::new();
        for row in &self.rows {
            if !values.contains(&row.value) {
                values.push(row.value);
            }
        }
        values
            .into_iter()
            .map(|value| {
                let ok: Vec<&ExperimentResult> = self
                    .rows
                    .iter()
                    .filter(|r| r.value == value)
                    .filter_map(|r| r.outcome.as_ref().ok())
                    .collect();
                let failed = self
                    .rows
                    .iter()
                    .filter(|r| r.value == value && r.outcome.is_err())
                    .count();
                let collect = |f: &dyn Fn(&ExperimentResult) -> Option<f64>| {
                    mean_stderr(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
                };
                SweepAggregate {
                    value,
                    ok: ok.len(),
                    failed,
                    clean_acc: collect(&|r| Some(r.final_clean_acc)),
                    asr_global: collect(&|r| r.final_asr_global),
                    asr_local: collect(&|r| r.final_asr_local_mean()),
                }
            })
            .collect()
    }

    /// One line per cell.
    pub fn rows_csv(&self) -> String {
        let mut out = format!(
            "{},replication,seed,status,clean_acc,asr_global,asr_local_mean,wall_s,error\n",
            self.param.name()
        );
        for row in &self.rows {
            let opt = |x: Option<f64>| x.map(fmt_sig6).unwrap_or_default();
            let cells = match &row.outcome {
                Ok(r) => [
                    "ok".to_string(),
                    fmt_sig6(r.final_clean_acc),
                    opt(r.final_asr_global),
                    opt(r.final_asr_local_mean()),
                    fmt_sig6(r.wall_time.as_secs_f64()),
                    String::new(),
                ],
                Err(msg) => [
                    "failed".to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    msg.replace([',', '\n'], ";"),
                ],
            };
            writeln!(
                out,
                "{},{},{},{}",
                fmt_sig6(row.value),
                row.replication,
                row.config.seed,
                cells.join(",")
            )
            .unwrap();
        }
        out
    }

    /// One line per value; `_se` columns are standard errors of the mean.
    pub fn aggregates_csv(&self) -> String {
        let mut out = format!(
            "{},ok,failed,clean_acc_mean,clean_acc_se,asr_global_mean,asr_global_se,asr_local_mean,asr_local_se\n",
            self.param.name()
        );
        for a in self.aggregates() {
            let mut cols = vec![fmt_sig6(a.value), a.ok.to_string(), a.failed.to_string()];
            cols.extend(pair(a.clean_acc));
            cols.extend(pair(a.asr_global));
            cols.extend(pair(a.asr_local));
            writeln!(out, "{}", cols.join(",")).unwrap();
        }
        out
    }

    /// Writes `sweep.csv`, `aggregate.csv` and one run directory per
    /// successful cell.
    pub fn write(&self, dir: impl AsRef<Path>, data: &DataSource) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        super::write_atomic(&dir.join("sweep.csv"), self.rows_csv().as_bytes())?;
        super::write_atomic(&dir.join("aggregate.csv"), self.aggregates_csv().as_bytes())?;
        for row in &self.rows {
            if let Ok(r) = &row.outcome {
                let cell = dir.join(format!(
                    "{}_{}_rep{}",
                    self.param.name(),
                    fmt_sig6(row.value),
                    row.replication
                ));
                r.write(cell, data)?;
            }
        }
        Ok(())
    }
}

/// Runs every cell, in parallel on the current rayon pool.
pub fn run_sweep(spec: &SweepSpec, data: &GraphDataset) -> Result<SweepTable> {
    let cells = spec.cells()?;
    let rows = cells
        .into_par_iter()
        .map(|(value, replication, config)| {
            let outcome = run_experiment(&config, data).map_err(|e| format!("{}: {e}", e.kind()));
            SweepRow {
                value,
                replication,
                config,
                outcome,
            }
        })
        .collect();
    Ok(SweepTable {
        param: spec.param,
        rows,
    })
}
