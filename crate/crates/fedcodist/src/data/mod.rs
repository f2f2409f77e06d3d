//! Synthetic task generation, non-IID client partitioning, pool
//! construction, and distillation-set assembly.
//!
//! All generation is a pure function of `(spec, seed)`: class/cluster
//! centers are drawn once per seed and shared across splits, and every split
//! comes from its own derived stream, so no two splits can share examples.

mod format;

pub use format::{
    dataset_to_string, parse_dataset_str, read_dataset, write_dataset,
};

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedcore::{sample_clients, ClientDataset, ClientPool, DomainTag, PoolRegime};
use crate::numerics::{Batch, Tensor};
use crate::rng::{StreamFactory, StreamId};

/// Synthetic classification task: Gaussian clusters per class, with an
/// additive feature offset realizing the second domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTaskSpec {
    pub input_dim: usize,
    pub num_classes: usize,
    pub clusters_per_class: usize,
    pub class_center_scale: f64,
    pub noise_sigma: f64,
    /// Offset added to every domain-b feature vector.
    pub domain_shift_delta: Vec<f64>,
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        let field = |field: &str, reason: &str| Error::ConfigValidationError {
            field: format!("task.{field}"),
            reason: reason.into(),
        };
        if self.input_dim == 0 {
            return Err(field("input_dim", "must be positive"));
        }
        if self.num_classes < 2 {
            return Err(field("num_classes", "must be at least 2"));
        }
        if self.clusters_per_class == 0 {
            return Err(field("clusters_per_class", "must be positive"));
        }
        if !(self.noise_sigma > 0.0) {
            return Err(field("noise_sigma", "must be positive"));
        }
        if !(self.class_center_scale > 0.0) {
            return Err(field("class_center_scale", "must be positive"));
        }
        if self.domain_shift_delta.len() != self.input_dim {
            return Err(field(
                "domain_shift_delta",
                "must have length input_dim",
            ));
        }
        Ok(())
    }
}

/// Task distribution with frozen cluster centers.
///
/// Centers are drawn once at construction; all splits sample from the same
/// sampler so they share the same underlying distribution.
#[derive(Debug, Clone)]
pub struct TaskSampler {
    spec: SyntheticTaskSpec,
    /// `centers[class * clusters_per_class + cluster]`.
    centers: Vec<Vec<f64>>,
}

impl TaskSampler {
    pub fn new(spec: &SyntheticTaskSpec, rng: &mut ChaCha8Rng) -> Self {
        let centers = (0..spec.num_classes * spec.clusters_per_class)
            .map(|_| {
                (0..spec.input_dim)
                    .map(|_| spec.class_center_scale * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        Self {
            spec: spec.clone(),
            centers,
        }
    }

    pub fn spec(&self) -> &SyntheticTaskSpec {
        &self.spec
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    /// Draws `n` labeled examples. Labels follow the generating cluster's
    /// class; a `Mixed` draw flips a fair coin per example for the domain.
    pub fn generate(&self, n: usize, domain: DomainTag, rng: &mut ChaCha8Rng) -> Batch {
        let spec = &self.spec;
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let shifted = match domain {
                DomainTag::DomainA => false,
                DomainTag::DomainB => true,
                DomainTag::Mixed => rng.random_bool(0.5),
            };
            let class = rng.random_range(0..spec.num_classes);
            let cluster = rng.random_range(0..spec.clusters_per_class);
            let center = &self.centers[class * spec.clusters_per_class + cluster];
            let row: Vec<f64> = center
                .iter()
                .enumerate()
                .map(|(j, &c)| {
                    let noise: f64 = rng.sample(StandardNormal);
                    c + spec.noise_sigma * noise + if shifted { spec.domain_shift_delta[j] } else { 0.0 }
                })
                .collect();
            rows.push(row);
            labels.push(class as u32);
        }
        let features = Tensor::from_rows(&rows).expect("generated features are finite");
        Batch::labeled(features, labels)
    }
}

/// How clients are carved out of the generated pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub num_clients: usize,
    pub examples_per_client: usize,
    /// Dirichlet concentration for per-client label proportions: large
    /// values approach IID, small values skew each client toward few labels.
    pub label_concentration: f64,
    #[serde(default = "default_high_capacity_fraction")]
    pub high_capacity_fraction: f64,
    #[serde(default = "default_regime")]
    pub regime: PoolRegime,
}

fn default_high_capacity_fraction() -> f64 {
    0.1
}
fn default_regime() -> PoolRegime {
    PoolRegime::CapacitySubset
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        let field = |field: &str, reason: &str| Error::ConfigValidationError {
            field: format!("partition.{field}"),
            reason: reason.into(),
        };
        if self.num_clients < 2 {
            return Err(field("num_clients", "need at least two clients"));
        }
        if self.examples_per_client == 0 {
            return Err(field("examples_per_client", "must be positive"));
        }
        if !(self.label_concentration > 0.0) {
            return Err(field("label_concentration", "must be positive"));
        }
        if self.regime == PoolRegime::CapacitySubset
            && !(self.high_capacity_fraction > 0.0 && self.high_capacity_fraction < 1.0)
        {
            return Err(field("high_capacity_fraction", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Assigns examples to clients with Dirichlet label skew.
///
/// Per client, label proportions are drawn from
/// `Dirichlet(label_concentration * 1)` (realized as normalized Gamma draws)
/// and examples are taken from per-label pools without replacement. Every
/// client receives exactly `examples_per_client` examples and is tagged with
/// the given domain.
pub fn partition_clients(
    data: &Batch,
    part: &PartitionSpec,
    tag: DomainTag,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ClientDataset>> {
    partition_into(
        data,
        part.num_clients,
        part.examples_per_client,
        part.label_concentration,
        0,
        tag,
        rng,
    )
}

pub(crate) fn partition_into(
    data: &Batch,
    num_clients: usize,
    examples_per_client: usize,
    concentration: f64,
    first_client_id: u64,
    tag: DomainTag,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ClientDataset>> {
    let needed = num_clients * examples_per_client;
    if data.len() < needed {
        return Err(Error::NotEnoughExamples(format!(
            "partition needs {needed} examples, got {}",
            data.len()
        )));
    }
    let labels = data
        .labels
        .as_ref()
        .expect("partitioned training data must be labeled");
    let num_labels = labels.iter().copied().max().unwrap_or(0) as usize + 1;

    // Per-label index pools, each in shuffled order so popping the tail is a
    // uniform draw.
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); num_labels];
    for (i, &l) in labels.iter().enumerate() {
        pools[l as usize].push(i);
    }
    for pool in &mut pools {
        shuffle(pool, rng);
    }

    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::NumericalError(format!("invalid concentration: {e}")))?;
    let mut clients = Vec::with_capacity(num_clients);
    for c in 0..num_clients {
        let mut props: Vec<f64> = (0..num_labels).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = props.iter().sum();
        if sum > 0.0 {
            for p in &mut props {
                *p /= sum;
            }
        }
        let mut indices = Vec::with_capacity(examples_per_client);
        for _ in 0..examples_per_client {
            let available: f64 = props
                .iter()
                .enumerate()
                .filter(|(l, _)| !pools[*l].is_empty())
                .map(|(_, p)| p)
                .sum();
            let label = if available > 0.0 {
                // Inverse-CDF draw restricted to labels with remaining examples.
                let u = rng.random_range(0.0..available);
                let mut acc = 0.0;
                let mut chosen = None;
                for (l, &p) in props.iter().enumerate() {
                    if pools[l].is_empty() {
                        continue;
                    }
                    acc += p;
                    if u < acc {
                        chosen = Some(l);
                        break;
                    }
                }
                chosen.unwrap_or_else(|| {
                    pools
                        .iter()
                        .position(|p| !p.is_empty())
                        .expect("examples remain by precondition")
                })
            } else {
                // This client's proportions put zero mass on every label that
                // still has examples; fall back to the first non-empty pool.
                pools
                    .iter()
                    .position(|p| !p.is_empty())
                    .expect("examples remain by precondition")
            };
            indices.push(pools[label].pop().expect("chosen pool is non-empty"));
        }
        clients.push(ClientDataset {
            client_id: first_client_id + c as u64,
            batch: data.select(&indices),
            domain_tag: tag,
        });
    }
    Ok(clients)
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

/// Builds the full pool and the high-capacity sub-pool.
///
/// In the capacity regime the sub-pool is a uniform sample of
/// `round(high_capacity_fraction * |P|)` clients; in the domain regime pool
/// membership follows the domain tag (domain-b clients are high-capacity).
pub fn split_pools(
    clients: Vec<ClientDataset>,
    part: &PartitionSpec,
    rng: &mut ChaCha8Rng,
) -> Result<ClientPool> {
    match part.regime {
        PoolRegime::CapacitySubset => {
            let n = clients.len();
            let k = (part.high_capacity_fraction * n as f64).round() as usize;
            if k == 0 || k >= n {
                return Err(Error::DegeneratePool(format!(
                    "fraction {} of {n} clients yields a sub-pool of {k}",
                    part.high_capacity_fraction
                )));
            }
            let ids: Vec<u64> = clients.iter().map(|c| c.client_id).collect();
            let high = sample_clients(&ids, k, rng)?.into_iter().collect();
            ClientPool::new(clients, high, PoolRegime::CapacitySubset)
        }
        PoolRegime::DomainDisjoint => {
            let high = clients
                .iter()
                .filter(|c| c.domain_tag == DomainTag::DomainB)
                .map(|c| c.client_id)
                .collect();
            ClientPool::new(clients, high, PoolRegime::DomainDisjoint)
        }
    }
}

/// Where distillation data comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistillSource {
    /// Unlabeled examples excised from the reserved training surplus; never
    /// part of any client's data.
    ExciseFromTrain,
    /// Freshly generated from the domain-shifted task distribution.
    GenerateOutOfDomain,
}

/// Provenance of an assembled distillation set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistillProvenance {
    InDomainExcised,
    OutOfDomain,
}

/// Unlabeled distillation data.
#[derive(Debug, Clone)]
pub struct DistillSet {
    pub batch: Batch,
    pub provenance: DistillProvenance,
}

/// Assembles a distillation set.
///
/// Excision shuffles the reserved surplus and strips labels from the first
/// `size` examples; out-of-domain sets are generated from the shifted task
/// distribution. Either way the result carries no labels.
pub fn make_distill_set(
    source: DistillSource,
    size: usize,
    surplus: &Batch,
    sampler: &TaskSampler,
    rng: &mut ChaCha8Rng,
) -> Result<DistillSet> {
    match source {
        DistillSource::ExciseFromTrain => {
            if size > surplus.len() {
                return Err(Error::NotEnoughExamples(format!(
                    "distillation set of {size} requested but the train surplus holds {}",
                    surplus.len()
                )));
            }
            let mut order: Vec<usize> = (0..surplus.len()).collect();
            shuffle(&mut order, rng);
            order.truncate(size);
            Ok(DistillSet {
                batch: surplus.select(&order).into_unlabeled(),
                provenance: DistillProvenance::InDomainExcised,
            })
        }
        DistillSource::GenerateOutOfDomain => Ok(DistillSet {
            batch: sampler.generate(size, DomainTag::DomainB, rng).into_unlabeled(),
            provenance: DistillProvenance::OutOfDomain,
        }),
    }
}

/// All data splits of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub pool: ClientPool,
    pub distill: Option<DistillSet>,
    pub heldout: Batch,
    pub test_mixed: Batch,
    pub test_domain_a: Batch,
    pub test_domain_b: Batch,
}

/// Sizes of the generated evaluation splits and the training surplus kept
/// aside for excision.
#[derive(Debug, Clone, Copy)]
pub struct SplitSizes {
    pub heldout: usize,
    pub test: usize,
    /// Extra training examples generated beyond the client allotment.
    pub train_surplus: usize,
}

/// Generates every split of an experiment from the master seed.
///
/// In the capacity regime all training data is domain-a; in the domain
/// regime half the clients hold domain-a data and half domain-b, and the
/// surplus (and thus any excised distillation set) mixes both.
pub fn assemble_experiment_data(
    task: &SyntheticTaskSpec,
    part: &PartitionSpec,
    distill: Option<(DistillSource, usize)>,
    sizes: SplitSizes,
    streams: &StreamFactory,
) -> Result<ExperimentData> {
    let sampler = TaskSampler::new(task, &mut streams.stream(StreamId::TaskCenters));
    let mut train_rng = streams.stream(StreamId::TrainPool);
    let mut part_rng = streams.stream(StreamId::Partition);

    let (clients, surplus) = match part.regime {
        PoolRegime::CapacitySubset => {
            let needed = part.num_clients * part.examples_per_client;
            let pool_batch =
                sampler.generate(needed + sizes.train_surplus, DomainTag::DomainA, &mut train_rng);
            let allotment = pool_batch.select(&(0..needed).collect::<Vec<_>>());
            let surplus = pool_batch.select(&(needed..pool_batch.len()).collect::<Vec<_>>());
            let clients = partition_clients(&allotment, part, DomainTag::DomainA, &mut part_rng)?;
            (clients, surplus)
        }
        PoolRegime::DomainDisjoint => {
            let clients_a = part.num_clients.div_ceil(2);
            let clients_b = part.num_clients - clients_a;
            if clients_b == 0 {
                return Err(Error::DegeneratePool(
                    "domain-disjoint regime needs clients in both domains".into(),
                ));
            }
            let surplus_a = sizes.train_surplus.div_ceil(2);
            let surplus_b = sizes.train_surplus - surplus_a;
            let mut clients = Vec::new();
            let mut surplus_batches = Vec::new();
            for (domain, n_clients, extra, id_offset) in [
                (DomainTag::DomainA, clients_a, surplus_a, 0u64),
                (DomainTag::DomainB, clients_b, surplus_b, clients_a as u64),
            ] {
                let needed = n_clients * part.examples_per_client;
                let batch = sampler.generate(needed + extra, domain, &mut train_rng);
                let allotment = batch.select(&(0..needed).collect::<Vec<_>>());
                clients.extend(partition_into(
                    &allotment,
                    n_clients,
                    part.examples_per_client,
                    part.label_concentration,
                    id_offset,
                    domain,
                    &mut part_rng,
                )?);
                surplus_batches.push(batch.select(&(needed..batch.len()).collect::<Vec<_>>()));
            }
            (clients, concat_batches(&surplus_batches))
        }
    };

    let pool = split_pools(clients, part, &mut streams.stream(StreamId::PoolSplit))?;
    let distill = distill
        .map(|(source, size)| {
            make_distill_set(
                source,
                size,
                &surplus,
                &sampler,
                &mut streams.stream(StreamId::DistillSet),
            )
        })
        .transpose()?;

    Ok(ExperimentData {
        pool,
        distill,
        heldout: sampler.generate(sizes.heldout, DomainTag::Mixed, &mut streams.stream(StreamId::Heldout)),
        test_mixed: sampler.generate(sizes.test, DomainTag::Mixed, &mut streams.stream(StreamId::TestMixed)),
        test_domain_a: sampler.generate(sizes.test, DomainTag::DomainA, &mut streams.stream(StreamId::TestDomainA)),
        test_domain_b: sampler.generate(sizes.test, DomainTag::DomainB, &mut streams.stream(StreamId::TestDomainB)),
    })
}

/// All federated training examples of a pool as one labeled batch, in
/// client-id order.
pub fn pooled_training_batch(pool: &ClientPool) -> Batch {
    let batches: Vec<Batch> = pool.clients().iter().map(|c| c.batch.clone()).collect();
    concat_batches(&batches)
}

fn concat_batches(batches: &[Batch]) -> Batch {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for b in batches {
        for r in 0..b.len() {
            rows.push(b.features.row(r).to_vec());
        }
        if let Some(ls) = &b.labels {
            labels.extend_from_slice(ls);
        }
    }
    let features = Tensor::from_rows(&rows).expect("concatenation of valid batches");
    if labels.len() == rows.len() {
        Batch::labeled(features, labels)
    } else {
        Batch::unlabeled(features)
    }
}

/// Verifies the four-way disjointness of federated training data, the
/// distillation set, the held-out set, and the test sets, comparing feature
/// rows bit-exactly. Returns a description of the first violation.
pub fn audit_disjointness(data: &ExperimentData) -> std::result::Result<(), String> {
    let keys = |batch: &Batch| -> HashSet<Vec<u64>> {
        (0..batch.len())
            .map(|r| batch.features.row(r).iter().map(|v| v.to_bits()).collect())
            .collect()
    };
    let mut train: HashSet<Vec<u64>> = HashSet::new();
    for c in data.pool.clients() {
        train.extend(keys(&c.batch));
    }
    let distill = data.distill.as_ref().map(|d| keys(&d.batch)).unwrap_or_default();
    let heldout = keys(&data.heldout);
    let mut test = keys(&data.test_mixed);
    test.extend(keys(&data.test_domain_a));
    test.extend(keys(&data.test_domain_b));

    let sets = [
        ("federated training", &train),
        ("distillation", &distill),
        ("held-out", &heldout),
        ("test", &test),
    ];
    for i in 0..sets.len() {
        for j in (i + 1)..sets.len() {
            if sets[i].1.intersection(sets[j].1).next().is_some() {
                return Err(format!(
                    "{} and {} splits share an example",
                    sets[i].0, sets[j].0
                ));
            }
        }
    }
    Ok(())
}
