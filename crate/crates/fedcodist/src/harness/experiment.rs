//! Seeded end-to-end experiment execution.

use crate::codist::{
    run_fedavg, run_merged_codist, run_periodic_codist, CodistArgs, DualModelState, ModelKind,
    ModelState, TrainEnv,
};
use crate::data::{assemble_experiment_data, audit_disjointness, ExperimentData, SplitSizes};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Method};
use crate::harness::metrics::{MetricsRecord, SplitKind};
use crate::numerics::{forward_logits, Batch, MlpSpec, ParamVector};
use crate::optim::AdamState;
use crate::rng::{StreamFactory, StreamId};

/// Accuracy (argmax with ties broken toward the lowest class index) and mean
/// cross-entropy loss of a model on a labeled batch.
pub fn evaluate(spec: &MlpSpec, params: &ParamVector, batch: &Batch) -> Result<(f64, f64)> {
    if batch.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let labels = batch
        .labels
        .as_ref()
        .ok_or_else(|| Error::MissingSupervision("evaluation requires labels".into()))?;
    let logits = forward_logits(spec, params, &batch.features)?;
    let n = batch.len();
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let z = logits.row(r);
        let mut arg = 0;
        for (j, &v) in z.iter().enumerate() {
            if v > z[arg] {
                arg = j;
            }
        }
        if arg == label as usize {
            correct += 1;
        }
        let max = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - z[label as usize];
    }
    Ok((correct as f64 / n as f64, loss / n as f64))
}

fn split_batch(data: &ExperimentData, split: SplitKind) -> &Batch {
    match split {
        SplitKind::TestMixed => &data.test_mixed,
        SplitKind::TestDomainA => &data.test_domain_a,
        SplitKind::TestDomainB => &data.test_domain_b,
        SplitKind::Heldout => &data.heldout,
    }
}

/// Generates all data splits for a config from its master seed.
pub fn build_experiment_data(cfg: &ExperimentConfig) -> Result<ExperimentData> {
    let streams = StreamFactory::new(cfg.seed);
    let distill_request = cfg.distill_set.map(|d| (d.source, d.size));
    let data = assemble_experiment_data(
        &cfg.task,
        &cfg.partition,
        distill_request,
        SplitSizes {
            heldout: cfg.heldout_size,
            test: cfg.test_size,
            train_surplus: cfg.train_surplus,
        },
        &streams,
    )?;
    debug_assert!(
        audit_disjointness(&data).is_ok(),
        "generated splits must be disjoint"
    );
    Ok(data)
}

/// Runs the configured experiment and returns the full metrics, sorted by
/// `(round, model, split)`. Deterministic: the records are a pure function
/// of the config (including its seed).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    let streams = StreamFactory::new(cfg.seed);
    let data = build_experiment_data(cfg)?;

    let mut state = DualModelState {
        small: ModelState {
            params: cfg
                .small_spec
                .init_params(&mut streams.stream(StreamId::Init { model: 0 })),
            server_state: AdamState::new(&ParamVector::zeros(cfg.small_spec.layout())),
        },
        large: ModelState {
            params: cfg
                .large_spec
                .init_params(&mut streams.stream(StreamId::Init { model: 1 })),
            server_state: AdamState::new(&ParamVector::zeros(cfg.large_spec.layout())),
        },
    };

    let mut records: Vec<MetricsRecord> = Vec::new();
    let eval_round = |round: u64, state: &DualModelState, records: &mut Vec<MetricsRecord>| -> Result<()> {
        for (kind, spec) in [
            (ModelKind::Small, &cfg.small_spec),
            (ModelKind::Large, &cfg.large_spec),
        ] {
            for &split in &cfg.eval_splits {
                let (accuracy, loss) =
                    evaluate(spec, &state.model(kind).params, split_batch(&data, split))?;
                records.push(MetricsRecord {
                    round,
                    model: kind,
                    split,
                    accuracy,
                    loss,
                });
            }
        }
        Ok(())
    };

    // Round-0 baseline so periodic spike plots have a reference point.
    eval_round(0, &state, &mut records)?;

    let env = TrainEnv {
        small_spec: &cfg.small_spec,
        large_spec: &cfg.large_spec,
        pool: &data.pool,
        round_cfg: &cfg.round_cfg,
        server_lr_small: &cfg.server_lr_small,
        server_lr_large: &cfg.server_lr_large,
        streams,
    };

    {
        let observe = |round: u64, state: &DualModelState| -> Result<()> {
            if round.is_multiple_of(cfg.eval_every) {
                eval_round(round, state, &mut records)?;
            }
            Ok(())
        };
        match cfg.method {
            Method::Fedavg => run_fedavg(&env, &mut state, cfg.total_rounds, observe)?,
            Method::Periodic | Method::Merged => {
                let distill_cfg = cfg.distill.as_ref().expect("validated codist config");
                let schedule = cfg.schedule.as_ref().expect("validated codist config");
                let distill_data = &data
                    .distill
                    .as_ref()
                    .ok_or(Error::NoDistillationData)?
                    .batch;
                let args = CodistArgs {
                    distill_cfg,
                    schedule,
                    distill_data,
                };
                if cfg.method == Method::Periodic {
                    run_periodic_codist(&env, &args, &mut state, cfg.total_rounds, observe)?;
                } else {
                    run_merged_codist(&env, &args, &mut state, cfg.total_rounds, observe)?;
                }
            }
        }
    }

    records.sort_by_key(|r| (r.round, r.model, r.split));
    Ok(records)
}
