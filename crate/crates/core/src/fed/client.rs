use std::borrow::Cow;

use rand::seq::SliceRandom;

use crate::backdoor::{backdoor_dataset, TriggerGraph};
use crate::error::{Error, Result};
use crate::gnn::{loss_and_grad, ModelSpec, ParamVector};
use crate::graph::Graph;
use crate::seed::{self, Stream};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Role {
    Honest,
    /// Poisons its data with `trigger` every round.
    Malicious {
        trigger: TriggerGraph,
    },
}

/// A participant: its id, role and local training graphs.
#[derive(Debug, Clone)]
pub struct ClientState<'a> {
    pub id: usize,
    pub role: Role,
    pub data: Vec<&'a Graph>,
}

impl ClientState<'_> {
    pub fn is_malicious(&self) -> bool {
        matches!(self.role, Role::Malicious { .. })
    }
}

/// Local optimization settings shared by all clients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub poison_rate: f64,
    pub target_label: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub params: ParamVector,
    /// Mean minibatch loss over the round, if any step was taken.
    pub train_loss: Option<f64>,
    pub poisoned: usize,
}

/// One round of local training starting from the global model. Malicious
/// clients re-poison their data first, with injection positions drawn from a
/// stream keyed by (seed, round, client).
pub fn client_update(
    spec: &ModelSpec,
    client: &ClientState<'_>,
    global: &ParamVector,
    settings: &LocalTraining,
    round: usize,
) -> Result<ClientUpdate> {
    let keys = [round as u64, client.id as u64];
    let (data, poisoned): (Vec<Cow<'_, Graph>>, usize) = match &client.role {
        Role::Honest => (client.data.iter().map(|&g| Cow::Borrowed(g)).collect(), 0),
        Role::Malicious { trigger } => {
            let view = backdoor_dataset(
                &client.data,
                trigger,
                settings.poison_rate,
                settings.target_label,
                client.id,
                seed::derive(settings.seed, Stream::Poison, &keys),
            )?;
            let n = view.poisoned.len();
            (view.graphs, n)
        }
    };
    train_local(spec, &data, global, settings, round, client.id).map(|(params, train_loss)| ClientUpdate {
        params,
        train_loss,
        poisoned,
    })
}

/// `epochs` passes of shuffled minibatch SGD.
pub fn train_local(
    spec: &ModelSpec,
    data: &[Cow<'_, Graph>],
    start: &ParamVector,
    settings: &LocalTraining,
    round: usize,
    client: usize,
) -> Result<(ParamVector, Option<f64>)> {
    if settings.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut params = start.clone();
    let (mut loss_sum, mut steps) = (0.0, 0usize);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..settings.epochs {
        let mut rng = seed::stream_rng(
            settings.seed,
            Stream::Shuffle,
            &[round as u64, client as u64, epoch as u64],
        );
        order.shuffle(&mut rng);
        for chunk in order.chunks(settings.batch_size) {
            let batch: Vec<&Graph> = chunk.iter().map(|&i| data[i].as_ref()).collect();
            let (loss, grad) = loss_and_grad(spec, &params, &batch)?;
            params.add_scaled(-settings.lr, &grad)?;
            loss_sum += loss;
            steps += 1;
        }
    }
    Ok((params, (steps > 0).then(|| loss_sum / steps as f64)))
}
