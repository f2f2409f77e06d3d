//! Federated Averaging over a client pool.
//!
//! Each round: sample clients, run local SGD from the shared server
//! parameters, aggregate the example-weighted model differences, and apply
//! the result as a gradient through the server's Adam state.
//!
//! Within a round, per-client training is independent: every sampled client
//! gets its own stream seeded up front from the round stream, and deltas are
//! reduced in ascending client-id order, so executing clients in parallel
//! cannot change the result.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{backprop, Batch, LossKind, MlpSpec, ParamVector};
use crate::optim::{adam_step, sgd_step, AdamState, SgdConfig};
use crate::rng::StreamFactory;

/// Which domain a client's examples were drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag {
    DomainA,
    DomainB,
    Mixed,
}

/// One client: its id, labeled examples, and source domain.
#[derive(Debug, Clone)]
pub struct ClientDataset {
    pub client_id: u64,
    pub batch: Batch,
    pub domain_tag: DomainTag,
}

/// How the two models' training pools relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolRegime {
    /// The high-capacity pool is a subset of the full pool; the small model
    /// trains on everything.
    CapacitySubset,
    /// The pools are entirely distinct: the small model trains on domain-a
    /// clients, the large model on domain-b clients.
    DomainDisjoint,
}

/// The full client pool and the high-capacity sub-pool.
#[derive(Debug, Clone)]
pub struct ClientPool {
    clients: Vec<ClientDataset>,
    high_capacity_ids: BTreeSet<u64>,
    regime: PoolRegime,
}

impl ClientPool {
    pub fn new(
        mut clients: Vec<ClientDataset>,
        high_capacity_ids: BTreeSet<u64>,
        regime: PoolRegime,
    ) -> Result<Self> {
        clients.sort_by_key(|c| c.client_id);
        let all_ids: BTreeSet<u64> = clients.iter().map(|c| c.client_id).collect();
        assert_eq!(all_ids.len(), clients.len(), "duplicate client ids");
        if !high_capacity_ids.is_subset(&all_ids) {
            return Err(Error::DegeneratePool(
                "high-capacity ids not contained in the pool".into(),
            ));
        }
        if high_capacity_ids.is_empty() || high_capacity_ids.len() == all_ids.len() {
            return Err(Error::DegeneratePool(format!(
                "high-capacity sub-pool has {} of {} clients",
                high_capacity_ids.len(),
                all_ids.len()
            )));
        }
        Ok(Self {
            clients,
            high_capacity_ids,
            regime,
        })
    }

    pub fn clients(&self) -> &[ClientDataset] {
        &self.clients
    }

    pub fn client(&self, id: u64) -> Option<&ClientDataset> {
        self.clients
            .binary_search_by_key(&id, |c| c.client_id)
            .ok()
            .map(|i| &self.clients[i])
    }

    pub fn high_capacity_ids(&self) -> &BTreeSet<u64> {
        &self.high_capacity_ids
    }

    pub fn regime(&self) -> PoolRegime {
        self.regime
    }

    /// Training pool for the small model: the full pool in the capacity
    /// regime, the non-high-capacity clients in the domain-disjoint regime.
    pub fn small_model_pool(&self) -> Vec<u64> {
        match self.regime {
            PoolRegime::CapacitySubset => self.clients.iter().map(|c| c.client_id).collect(),
            PoolRegime::DomainDisjoint => self
                .clients
                .iter()
                .map(|c| c.client_id)
                .filter(|id| !self.high_capacity_ids.contains(id))
                .collect(),
        }
    }

    /// Training pool for the large model: always the high-capacity clients.
    pub fn large_model_pool(&self) -> Vec<u64> {
        self.high_capacity_ids.iter().copied().collect()
    }
}

fn default_clients_per_round() -> usize {
    20
}
fn default_client_batch_size() -> usize {
    20
}
fn default_local_epochs() -> usize {
    1
}
fn default_weighting() -> Weighting {
    Weighting::ExampleWeighted
}

/// How client deltas are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Weight each client by its example count (canonical FedAvg).
    ExampleWeighted,
    Uniform,
}

/// Per-round federated settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundConfig {
    #[serde(default = "default_clients_per_round")]
    pub clients_per_round: usize,
    #[serde(default = "default_client_batch_size")]
    pub client_batch_size: usize,
    #[serde(default = "default_local_epochs")]
    pub local_epochs: usize,
    pub client_lr: f64,
    #[serde(default = "default_weighting")]
    pub weighting: Weighting,
}

/// A client's round contribution: `server_params - final_local_params`.
///
/// The sign is chosen so the server optimizer can consume the aggregate
/// directly as a gradient (Adam negates it in the update).
#[derive(Debug, Clone)]
pub struct ClientDelta {
    pub client_id: u64,
    pub delta: ParamVector,
    pub num_examples: usize,
}

/// Aggregated round gradient for one model.
#[derive(Debug, Clone)]
pub struct AggregatedGradient {
    pub value: ParamVector,
    pub total_examples: usize,
}

/// Samples `k` distinct clients uniformly without replacement; the output
/// order is fixed by the rng draw sequence.
pub fn sample_clients(pool: &[u64], k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
    if k > pool.len() {
        return Err(Error::PoolExhausted {
            requested: k,
            available: pool.len(),
        });
    }
    let mut ids = pool.to_vec();
    for i in 0..k {
        let j = rng.random_range(i..ids.len());
        ids.swap(i, j);
    }
    ids.truncate(k);
    Ok(ids)
}

/// Runs local minibatch SGD from the server parameters and returns the model
/// difference `server - final` along with the client's example count.
///
/// Data order is reshuffled from `rng` at each epoch; a partial final
/// minibatch is kept.
pub fn local_train(
    spec: &MlpSpec,
    server_params: &ParamVector,
    client: &ClientDataset,
    config: &RoundConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(ParamVector, usize)> {
    let n = client.batch.len();
    if n == 0 {
        return Err(Error::EmptyClient(client.client_id));
    }
    let sgd = SgdConfig {
        learning_rate: config.client_lr,
    };
    let mut params = server_params.clone();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..config.local_epochs {
        shuffle(&mut order, rng);
        for chunk in order.chunks(config.client_batch_size.max(1)) {
            let minibatch = client.batch.select(chunk);
            let (_, grad) = backprop(spec, &params, &minibatch, LossKind::CrossEntropy, None, 1.0)?;
            params = sgd_step(&params, &grad, &sgd)?;
        }
    }
    let delta = server_params.sub(&params)?;
    Ok((delta, n))
}

/// Fisher-Yates shuffle driven by the given stream.
fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

/// Combines client deltas into a single round gradient.
///
/// Summation runs in ascending client-id order regardless of input order, so
/// the reduction is exactly permutation-invariant.
pub fn aggregate(deltas: &[ClientDelta], weighting: Weighting) -> Result<AggregatedGradient> {
    if deltas.is_empty() {
        return Err(Error::NothingToAggregate);
    }
    let mut order: Vec<usize> = (0..deltas.len()).collect();
    order.sort_by_key(|&i| deltas[i].client_id);

    let first = &deltas[order[0]];
    let mut sum = first.delta.zeros_like();
    let mut weight_total = 0.0;
    let mut total_examples = 0;
    for &i in &order {
        let d = &deltas[i];
        let w = match weighting {
            Weighting::ExampleWeighted => d.num_examples as f64,
            Weighting::Uniform => 1.0,
        };
        sum = sum.add_scaled(&d.delta, w)?;
        weight_total += w;
        total_examples += d.num_examples;
    }
    Ok(AggregatedGradient {
        value: sum.scale(1.0 / weight_total),
        total_examples,
    })
}

/// Applies the aggregated gradient through the server's Adam state.
pub fn server_apply(
    params: &ParamVector,
    g: &AggregatedGradient,
    state: &AdamState,
    lr: f64,
) -> Result<(ParamVector, AdamState)> {
    adam_step(params, &g.value, state, lr)
}

/// Samples clients, trains them locally, and aggregates their deltas.
///
/// Per-client streams are seeded from `rng` in the sampled order before any
/// training starts, so client execution order cannot affect the result.
pub fn collect_round_gradient(
    spec: &MlpSpec,
    params: &ParamVector,
    pool_ids: &[u64],
    pool: &ClientPool,
    config: &RoundConfig,
    rng: &mut ChaCha8Rng,
) -> Result<AggregatedGradient> {
    let sampled = sample_clients(pool_ids, config.clients_per_round, rng)?;
    let seeds: Vec<u64> = sampled.iter().map(|_| rng.random()).collect();
    let mut deltas = Vec::with_capacity(sampled.len());
    for (client_id, seed) in sampled.into_iter().zip(seeds) {
        let client = pool
            .client(client_id)
            .unwrap_or_else(|| panic!("sampled unknown client {client_id}"));
        let mut client_rng = StreamFactory::from_drawn_seed(seed);
        let (delta, num_examples) = local_train(spec, params, client, config, &mut client_rng)?;
        deltas.push(ClientDelta {
            client_id,
            delta,
            num_examples,
        });
    }
    aggregate(&deltas, config.weighting)
}

/// One full FedAvg round: sample, train locally, aggregate, apply FedAdam.
#[allow(clippy::too_many_arguments)]
pub fn fedavg_round(
    spec: &MlpSpec,
    params: &ParamVector,
    pool_ids: &[u64],
    pool: &ClientPool,
    config: &RoundConfig,
    server_state: &AdamState,
    server_lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(ParamVector, AdamState)> {
    let g = collect_round_gradient(spec, params, pool_ids, pool, config, rng)?;
    server_apply(params, &g, server_state, server_lr)
}
