//! The server loop: broadcast, local training, optional defense, averaging,
//! evaluation.

use rayon::prelude::*;

use super::client::{client_update, ClientState, ClientUpdate, LocalTraining, Role};
use super::config::{AttackMode, PoisonFailure, ScenarioConfig};
use super::log::RoundLog;
use crate::backdoor::{compose_global_trigger, generate_trigger, poison_test_set, EvalSet, TriggerGraph};
use crate::defense::{
    dmf_filter, foolsgold_weights, off_diagonal_summary, weighted_aggregate, DefenseKind, UpdateHistory,
};
use crate::error::{Error, Result};
use crate::gnn::{ModelSpec, ParamVector};
use crate::graph::{avg_node_count, noniid_label_split, standardize_attributes, train_test_split, Graph, GraphDataset};
use crate::metrics::{attack_success_rate, clean_accuracy};
use crate::seed::{self, Stream};

/// Unweighted element-wise mean, accumulated as offsets from the first
/// vector so that identical inputs average to themselves exactly.
pub fn fedavg(params: &[ParamVector]) -> Result<ParamVector> {
    let first = params
        .first()
        .ok_or_else(|| Error::Contract("averaging zero parameter vectors".into()))?;
    let mut offset = ParamVector::zeros(first.layout().clone());
    for p in &params[1..] {
        offset.add_scaled(1.0, &p.sub(first)?)?;
    }
    let mut out = first.clone();
    out.add_scaled(1.0 / params.len() as f64, &offset)?;
    Ok(out)
}

/// Everything fixed before the first round: data split, roles, triggers,
/// evaluation sets and the initial model.
#[derive(Debug, Clone)]
pub struct Federation {
    pub config: ScenarioConfig,
    pub spec: ModelSpec,
    dataset: GraphDataset,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Training indices held by each client.
    pub parts: Vec<Vec<usize>>,
    /// Malicious client ids; the i-th one owns local trigger i.
    pub malicious: Vec<usize>,
    pub local_triggers: Vec<TriggerGraph>,
    pub global_trigger: Option<TriggerGraph>,
    /// Triggered test sets per local trigger, then the global one; `None`
    /// where no test graph can host the trigger.
    pub local_eval: Vec<Option<EvalSet>>,
    pub global_eval: Option<EvalSet>,
    pub initial: ParamVector,
}

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub logs: Vec<RoundLog>,
    pub final_params: ParamVector,
}

impl Federation {
    pub fn setup(config: &ScenarioConfig, data: &GraphDataset) -> Result<Self> {
        config.validate(data.n_classes())?;
        let spec = config.model_spec(data.feature_dim(), data.n_classes())?;
        let mut dataset = data.clone();
        let (train, test) = train_test_split(&dataset, config.train_frac, config.seed)?;
        standardize_attributes(&mut dataset, &train);

        let parts = if config.clients == 1 {
            vec![train.clone()]
        } else {
            let labels = dataset.labels();
            let q = config.split_q_for(dataset.n_classes());
            noniid_label_split(&train, &labels, config.clients, q, config.seed)?
                .parts()
                .to_vec()
        };

        let mut ids: Vec<usize> = (0..config.clients).collect();
        rand::seq::SliceRandom::shuffle(
            &mut ids[..],
            &mut seed::stream_rng(config.seed, Stream::ClientRoles, &[]),
        );
        let malicious: Vec<usize> = ids[..config.malicious].to_vec();

        let params = config.trigger_params();
        let mut local_triggers = Vec::with_capacity(malicious.len());
        for (i, &client) in malicious.iter().enumerate() {
            let local: Vec<&Graph> = parts[client].iter().map(|&j| &dataset.graphs()[j]).collect();
            let avg = if local.is_empty() {
                avg_node_count(train.iter().map(|&j| &dataset.graphs()[j]))?
            } else {
                avg_node_count(local.iter().copied())?
            };
            let s = params.trigger_size(avg)?;
            let mut rng = seed::stream_rng(config.seed, Stream::Trigger, &[i as u64]);
            local_triggers.push(generate_trigger(s, params.rho, &mut rng)?);
        }
        let global_trigger = if local_triggers.is_empty() {
            None
        } else {
            Some(compose_global_trigger(&local_triggers)?)
        };

        let test_graphs: Vec<&Graph> = test.iter().map(|&j| &dataset.graphs()[j]).collect();
        let eval_for = |t: &TriggerGraph, key: u64| -> Result<Option<EvalSet>> {
            let seed = seed::derive(config.seed, Stream::TestPoison, &[key]);
            match poison_test_set(&test_graphs, t, params.target_label, seed) {
                Ok(set) => Ok(Some(set)),
                Err(Error::Evaluation(_)) => Ok(None),
                Err(e) => Err(e),
            }
        };
        let local_eval = local_triggers
            .iter()
            .enumerate()
            .map(|(i, t)| eval_for(t, i as u64))
            .collect::<Result<Vec<_>>>()?;
        let global_eval = match &global_trigger {
            Some(t) => eval_for(t, u64::MAX)?,
            None => None,
        };

        let initial = spec.init_params(config.seed);
        Ok(Federation {
            config: config.clone(),
            spec,
            dataset,
            train,
            test,
            parts,
            malicious,
            local_triggers,
            global_trigger,
            local_eval,
            global_eval,
            initial,
        })
    }

    pub fn dataset(&self) -> &GraphDataset {
        &self.dataset
    }

    pub fn test_graphs(&self) -> Vec<&Graph> {
        self.test.iter().map(|&j| &self.dataset.graphs()[j]).collect()
    }

    pub fn local_training(&self) -> LocalTraining {
        LocalTraining {
            epochs: self.config.local_epochs,
            batch_size: self.config.batch_size,
            lr: self.config.lr,
            poison_rate: self.config.poison_rate,
            target_label: self.config.target_label,
            seed: self.config.seed,
        }
    }

    /// Client states as seen by the attack mode: under DBA each malicious
    /// client carries its local trigger, under CBA only the first carries the
    /// global trigger.
    pub fn clients(&self) -> Vec<ClientState<'_>> {
        (0..self.config.clients)
            .map(|id| {
                let role = match (self.config.attack, self.malicious.iter().position(|&m| m == id)) {
                    (AttackMode::Dba, Some(i)) => Role::Malicious {
                        trigger: self.local_triggers[i].clone(),
                    },
                    (AttackMode::Cba, Some(0)) => Role::Malicious {
                        trigger: self.global_trigger.clone().expect("CBA has a global trigger"),
                    },
                    _ => Role::Honest,
                };
                ClientState {
                    id,
                    role,
                    data: self.parts[id].iter().map(|&j| &self.dataset.graphs()[j]).collect(),
                }
            })
            .collect()
    }

    fn update_client(
        &self,
        client: &ClientState<'_>,
        global: &ParamVector,
        round: usize,
    ) -> Result<(ClientUpdate, Option<String>)> {
        let settings = self.local_training();
        match client_update(&self.spec, client, global, &settings, round) {
            Ok(u) => Ok((u, None)),
            Err(Error::Poisoning { message, .. }) if self.config.poison_failure == PoisonFailure::TrainClean => {
                let honest = ClientState {
                    role: Role::Honest,
                    ..client.clone()
                };
                let u = client_update(&self.spec, &honest, global, &settings, round)?;
                Ok((u, Some(format!("client {} trained clean: {message}", client.id))))
            }
            Err(e) => Err(e),
        }
    }

    /// Runs every round and returns the logs and the final global model.
    pub fn run(&self) -> Result<RunOutput> {
        let clients = self.clients();
        let k = clients.len();
        let mut global = self.initial.clone();
        let mut history = UpdateHistory::new(&global, k);
        let mut logs = Vec::with_capacity(self.config.rounds);
        let test_graphs = self.test_graphs();

        for round in 1..=self.config.rounds {
            let results: Vec<Result<(ClientUpdate, Option<String>)>> = clients
                .par_iter()
                .map(|c| self.update_client(c, &global, round))
                .collect();
            let mut updates = Vec::with_capacity(k);
            let mut events = Vec::new();
            for (c, r) in clients.iter().zip(results) {
                let (u, note) = r.map_err(|e| Error::Client {
                    round,
                    client: c.id,
                    source: Box::new(e),
                })?;
                events.extend(note);
                updates.push(u);
            }
            let params: Vec<ParamVector> = updates.iter().map(|u| u.params.clone()).collect();

            let (next, weights, accepted, cosine) = match self.config.defense {
                DefenseKind::None => (fedavg(&params)?, None, k, None),
                DefenseKind::FoolsGold => {
                    for (i, p) in params.iter().enumerate() {
                        history.record(i, p, &global)?;
                    }
                    let fg = foolsgold_weights(&history)?;
                    let accepted = fg.weights.iter().filter(|&&w| w > 0.0).count();
                    let next = match weighted_aggregate(&params, &fg.weights) {
                        Ok(p) => p,
                        Err(Error::Defense(msg)) => {
                            events.push(format!("foolsgold: {msg}; kept previous global model"));
                            global.clone()
                        }
                        Err(e) => return Err(e),
                    };
                    let summary = off_diagonal_summary(&fg.cosine).map(|(a, b, c)| [a, b, c]);
                    (next, Some(fg.weights), accepted, summary)
                }
                DefenseKind::Dmf => {
                    let out = dmf_filter(&params, self.config.dmf_threshold)?;
                    if out.fail_open {
                        events.push("dmf: no majority cluster, accepted all clients".into());
                    }
                    let kept: Vec<ParamVector> = out.accepted.iter().map(|&i| params[i].clone()).collect();
                    let mut indicator = vec![0.0; k];
                    for &i in &out.accepted {
                        indicator[i] = 1.0;
                    }
                    let summary = off_diagonal_summary(&out.cosine).map(|(a, b, c)| [a, b, c]);
                    (fedavg(&kept)?, Some(indicator), out.accepted.len(), summary)
                }
            };
            global = next;

            let clean_acc = clean_accuracy(&self.spec, &global, &test_graphs)?;
            let asr = |set: &Option<EvalSet>| -> Result<Option<f64>> {
                set.as_ref()
                    .map(|s| attack_success_rate(&self.spec, &global, s))
                    .transpose()
            };
            let asr_local = self.local_eval.iter().map(asr).collect::<Result<Vec<_>>>()?;
            let asr_global = asr(&self.global_eval)?;

            logs.push(RoundLog {
                round,
                checksum: format!("{:016x}", global.checksum()),
                clean_acc,
                asr_global,
                asr_local,
                weights,
                losses: updates.iter().map(|u| u.train_loss).collect(),
                poisoned: updates.iter().map(|u| u.poisoned).collect(),
                accepted,
                cosine,
                events,
            });
        }
        Ok(RunOutput {
            logs,
            final_params: global,
        })
    }
}

/// Sets up and runs one scenario.
pub fn run_federation(config: &ScenarioConfig, data: &GraphDataset) -> Result<RunOutput> {
    Federation::setup(config, data)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::{Layout, Segment};
    use std::sync::Arc;

    #[test]
    fn fedavg_examples() {
        let l = Arc::new(Layout::new(vec![Segment::new("v", vec![3])]));
        let zero = ParamVector::zeros(l.clone());
        let two = ParamVector::filled(l.clone(), 2.0);
        assert_eq!(fedavg(&[two.clone(), two.clone()]).unwrap(), two);
        assert_eq!(fedavg(&[zero, two]).unwrap().values(), &[1.0; 3]);
        assert!(fedavg(&[]).is_err());
    }
}
