//! Experiment configuration: JSON parsing, validation, and canonical
//! serialization.
//!
//! The wire format is a strict JSON document (unknown keys are rejected) with
//! defaults applied for omitted optional fields. Parsing produces a fully
//! validated [`ExperimentConfig`]; `to_canonical_json` renders it back with
//! every default filled in, and reparsing a canonical document yields the
//! same config.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codist::{CodistMode, CodistSchedule, DistillConfig};
use crate::data::{DistillSource, PartitionSpec, SyntheticTaskSpec};
use crate::error::{Error, Result};
use crate::fedcore::{PoolRegime, RoundConfig};
use crate::harness::metrics::SplitKind;
use crate::numerics::MlpSpec;
use crate::optim::LinearSchedule;

/// Which training strategy an experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fedavg,
    Periodic,
    Merged,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Fedavg => "fedavg",
            Method::Periodic => "periodic",
            Method::Merged => "merged",
        }
    }
}

/// Distillation-data request: where it comes from and how many examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillSetConfig {
    pub source: DistillSource,
    pub size: usize,
}

/// Fully validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub total_rounds: u64,
    pub seed: u64,
    pub eval_every: u64,
    pub task: SyntheticTaskSpec,
    pub partition: PartitionSpec,
    pub round_cfg: RoundConfig,
    pub small_spec: MlpSpec,
    pub large_spec: MlpSpec,
    pub server_lr_small: LinearSchedule,
    pub server_lr_large: LinearSchedule,
    /// Present only for codistillation methods.
    pub distill: Option<DistillConfig>,
    pub schedule: Option<CodistSchedule>,
    pub distill_set: Option<DistillSetConfig>,
    pub eval_splits: Vec<SplitKind>,
    pub heldout_size: usize,
    pub test_size: usize,
    /// Training examples generated beyond the client allotment, available
    /// for excision. Parsing defaults this to 30% of the allotment.
    pub train_surplus: usize,
}

fn default_surplus(partition: &PartitionSpec) -> usize {
    let allotment = partition.num_clients * partition.examples_per_client;
    (0.3 * allotment as f64).ceil() as usize
}

impl ExperimentConfig {

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| Error::ConfigValidationError {
            field: field.into(),
            reason,
        };
        if self.total_rounds == 0 {
            return Err(bad("total_rounds", "must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(bad("eval_every", "must be positive".into()));
        }
        self.task.validate()?;
        self.partition.validate()?;
        self.small_spec.validate()?;
        self.large_spec.validate()?;

        if self.small_spec.param_count() >= self.large_spec.param_count() {
            return Err(bad(
                "small_spec",
                format!(
                    "small model must have fewer parameters than the large model ({} vs {})",
                    self.small_spec.param_count(),
                    self.large_spec.param_count()
                ),
            ));
        }
        for (field, spec) in [("small_spec", &self.small_spec), ("large_spec", &self.large_spec)] {
            if spec.input_dim != self.task.input_dim {
                return Err(bad(field, "input_dim must match the task".into()));
            }
            if spec.num_classes != self.task.num_classes {
                return Err(bad(field, "num_classes must match the task".into()));
            }
        }

        if !(self.round_cfg.client_lr > 0.0) {
            return Err(bad("round_cfg.client_lr", "must be positive".into()));
        }
        if self.round_cfg.clients_per_round == 0 {
            return Err(bad("round_cfg.clients_per_round", "must be positive".into()));
        }
        if self.round_cfg.client_batch_size == 0 {
            return Err(bad("round_cfg.client_batch_size", "must be positive".into()));
        }
        if self.round_cfg.local_epochs == 0 {
            return Err(bad("round_cfg.local_epochs", "must be positive".into()));
        }

        // The sampled count must fit the smaller of the two training pools.
        let n = self.partition.num_clients;
        let min_pool = match self.partition.regime {
            PoolRegime::CapacitySubset => {
                (self.partition.high_capacity_fraction * n as f64).round() as usize
            }
            PoolRegime::DomainDisjoint => n / 2,
        };
        if self.round_cfg.clients_per_round > min_pool {
            return Err(bad(
                "round_cfg.clients_per_round",
                format!("exceeds the smallest training pool ({min_pool} clients)"),
            ));
        }

        for (field, sched) in [
            ("server_lr_small", &self.server_lr_small),
            ("server_lr_large", &self.server_lr_large),
        ] {
            if !(sched.initial_lr > 0.0) {
                return Err(bad(field, "initial_lr must be positive".into()));
            }
            if sched.total_rounds < self.total_rounds {
                return Err(bad(
                    field,
                    format!("schedule must cover all {} rounds", self.total_rounds),
                ));
            }
        }

        if self.method != Method::Fedavg {
            let distill = self
                .distill
                .as_ref()
                .ok_or_else(|| bad("distill", format!("required for method {}", self.method.name())))?;
            let schedule = self
                .schedule
                .as_ref()
                .ok_or_else(|| bad("schedule", format!("required for method {}", self.method.name())))?;
            let distill_set = self
                .distill_set
                .as_ref()
                .ok_or_else(|| bad("distill_set", format!("required for method {}", self.method.name())))?;

            let expected_mode = match self.method {
                Method::Periodic => CodistMode::Periodic,
                Method::Merged => CodistMode::Merged,
                Method::Fedavg => unreachable!(),
            };
            if schedule.mode != expected_mode {
                return Err(bad("schedule.mode", "must match the experiment method".into()));
            }
            if schedule.period_p == 0 {
                return Err(bad("schedule.period_p", "must be positive".into()));
            }
            if schedule.steps_s == 0 {
                return Err(bad("schedule.steps_s", "must be positive".into()));
            }
            if !(0.0..=1.0).contains(&schedule.alpha) {
                return Err(bad("schedule.alpha", "must lie in [0, 1]".into()));
            }

            if !(distill.temperature_cross > 0.0) {
                return Err(bad("distill.temperature_cross", "must be positive".into()));
            }
            if !(distill.temperature_self > 0.0) {
                return Err(bad("distill.temperature_self", "must be positive".into()));
            }
            if !(0.0..=1.0).contains(&distill.self_reg_lambda) {
                return Err(bad("distill.self_reg_lambda", "must lie in [0, 1]".into()));
            }
            if distill.distill_batch_size == 0 {
                return Err(bad("distill.distill_batch_size", "must be positive".into()));
            }
            if !(distill.student_lr_schedule.initial_lr > 0.0) {
                return Err(bad(
                    "distill.student_lr_schedule",
                    "initial_lr must be positive".into(),
                ));
            }
            if distill.student_lr_schedule.total_rounds < self.total_rounds {
                return Err(bad(
                    "distill.student_lr_schedule",
                    format!("schedule must cover all {} rounds", self.total_rounds),
                ));
            }
            if let Some(beta) = distill.mixup_beta {
                if !(beta > 0.0) {
                    return Err(bad("distill.mixup_beta", "must be positive".into()));
                }
            }

            if distill_set.size == 0 {
                return Err(bad(
                    "distill_set.size",
                    "codistillation needs a non-empty distillation set".into(),
                ));
            }
            if distill_set.source == DistillSource::ExciseFromTrain
                && distill_set.size > self.train_surplus
            {
                return Err(bad(
                    "distill_set.size",
                    format!(
                        "exceeds the reserved train surplus of {}",
                        self.train_surplus
                    ),
                ));
            }
        }

        if self.eval_splits.is_empty() {
            return Err(bad("eval_splits", "must not be empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.eval_splits {
            if !seen.insert(*s) {
                return Err(bad("eval_splits", format!("duplicate split `{}`", s.name())));
            }
        }
        if self.heldout_size == 0 || self.test_size == 0 {
            return Err(bad("heldout_size/test_size", "must be positive".into()));
        }
        Ok(())
    }

    /// Renders the config with every default made explicit. Parsing the
    /// result reproduces this config exactly.
    pub fn to_canonical_json(&self) -> String {
        let raw = RawConfig::from_config(self);
        serde_json::to_string_pretty(&raw).expect("config serialization cannot fail")
    }
}

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

fn d_eval_every() -> u64 {
    10
}
fn d_heldout_size() -> usize {
    500
}
fn d_test_size() -> usize {
    1000
}
fn d_temperature() -> f64 {
    2.0
}
fn d_lambda() -> f64 {
    0.1
}
fn d_distill_batch() -> usize {
    32
}
fn d_true() -> bool {
    true
}
fn d_period() -> u64 {
    200
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDistill {
    #[serde(default = "d_temperature")]
    temperature_cross: f64,
    #[serde(default)]
    temperature_self: Option<f64>,
    #[serde(default = "d_lambda")]
    self_reg_lambda: f64,
    #[serde(default)]
    steps_s: Option<u64>,
    #[serde(default = "d_distill_batch")]
    distill_batch_size: usize,
    student_lr_schedule: LinearSchedule,
    #[serde(default = "d_true")]
    scale_student_logits: bool,
    #[serde(default)]
    mixup_beta: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    mode: CodistMode,
    #[serde(default = "d_period")]
    period_p: u64,
    #[serde(default)]
    steps_s: Option<u64>,
    #[serde(default)]
    alpha: Option<f64>,
    #[serde(default)]
    skip_distill_when_alpha_one: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    method: Method,
    total_rounds: u64,
    seed: u64,
    #[serde(default = "d_eval_every")]
    eval_every: u64,
    task: SyntheticTaskSpec,
    partition: PartitionSpec,
    round_cfg: RoundConfig,
    small_spec: MlpSpec,
    large_spec: MlpSpec,
    server_lr_small: LinearSchedule,
    server_lr_large: LinearSchedule,
    #[serde(default)]
    distill: Option<RawDistill>,
    #[serde(default)]
    schedule: Option<RawSchedule>,
    #[serde(default)]
    distill_set: Option<DistillSetConfig>,
    #[serde(default)]
    eval_splits: Option<Vec<SplitKind>>,
    #[serde(default = "d_heldout_size")]
    heldout_size: usize,
    #[serde(default = "d_test_size")]
    test_size: usize,
    #[serde(default)]
    train_surplus: Option<usize>,
}

impl RawConfig {
    fn into_config(self) -> Result<ExperimentConfig> {
        let bad = |field: &str, reason: String| Error::ConfigValidationError {
            field: field.into(),
            reason,
        };

        let (distill, schedule) = if self.method == Method::Fedavg {
            // Codistillation settings are meaningless for plain FedAvg.
            (None, None)
        } else {
            let raw_schedule = self.schedule.ok_or_else(|| {
                bad("schedule", format!("required for method {}", self.method.name()))
            })?;
            let raw_distill = self.distill.ok_or_else(|| {
                bad("distill", format!("required for method {}", self.method.name()))
            })?;

            let default_steps = match raw_schedule.mode {
                CodistMode::Periodic => 200,
                CodistMode::Merged => 32,
            };
            let steps_s = match (raw_schedule.steps_s, raw_distill.steps_s) {
                (Some(a), Some(b)) if a != b => {
                    return Err(bad(
                        "distill.steps_s",
                        format!("disagrees with schedule.steps_s ({b} vs {a})"),
                    ));
                }
                (Some(a), _) => a,
                (None, Some(b)) => b,
                (None, None) => default_steps,
            };

            let schedule = CodistSchedule {
                mode: raw_schedule.mode,
                period_p: raw_schedule.period_p,
                steps_s,
                alpha: raw_schedule.alpha.unwrap_or(1.0),
                skip_distill_when_alpha_one: raw_schedule.skip_distill_when_alpha_one,
            };
            if self.method == Method::Merged && raw_schedule.alpha.is_none() {
                return Err(bad("schedule.alpha", "required for merged codistillation".into()));
            }

            let distill = DistillConfig {
                temperature_cross: raw_distill.temperature_cross,
                temperature_self: raw_distill
                    .temperature_self
                    .unwrap_or(raw_distill.temperature_cross),
                self_reg_lambda: raw_distill.self_reg_lambda,
                steps_s,
                distill_batch_size: raw_distill.distill_batch_size,
                student_lr_schedule: raw_distill.student_lr_schedule,
                scale_student_logits: raw_distill.scale_student_logits,
                mixup_beta: raw_distill.mixup_beta,
            };
            (Some(distill), Some(schedule))
        };

        let train_surplus = self
            .train_surplus
            .unwrap_or_else(|| default_surplus(&self.partition));
        let config = ExperimentConfig {
            method: self.method,
            total_rounds: self.total_rounds,
            seed: self.seed,
            eval_every: self.eval_every,
            task: self.task,
            partition: self.partition,
            round_cfg: self.round_cfg,
            small_spec: self.small_spec,
            large_spec: self.large_spec,
            server_lr_small: self.server_lr_small,
            server_lr_large: self.server_lr_large,
            distill,
            schedule,
            distill_set: self.distill_set,
            eval_splits: self.eval_splits.unwrap_or_else(|| SplitKind::ALL.to_vec()),
            heldout_size: self.heldout_size,
            test_size: self.test_size,
            train_surplus,
        };
        config.validate()?;
        Ok(config)
    }

    fn from_config(config: &ExperimentConfig) -> Self {
        RawConfig {
            method: config.method,
            total_rounds: config.total_rounds,
            seed: config.seed,
            eval_every: config.eval_every,
            task: config.task.clone(),
            partition: config.partition.clone(),
            round_cfg: config.round_cfg.clone(),
            small_spec: config.small_spec.clone(),
            large_spec: config.large_spec.clone(),
            server_lr_small: config.server_lr_small,
            server_lr_large: config.server_lr_large,
            distill: config.distill.as_ref().map(|d| RawDistill {
                temperature_cross: d.temperature_cross,
                temperature_self: Some(d.temperature_self),
                self_reg_lambda: d.self_reg_lambda,
                steps_s: Some(d.steps_s),
                distill_batch_size: d.distill_batch_size,
                student_lr_schedule: d.student_lr_schedule,
                scale_student_logits: d.scale_student_logits,
                mixup_beta: d.mixup_beta,
            }),
            schedule: config.schedule.as_ref().map(|s| RawSchedule {
                mode: s.mode,
                period_p: s.period_p,
                steps_s: Some(s.steps_s),
                alpha: Some(s.alpha),
                skip_distill_when_alpha_one: s.skip_distill_when_alpha_one,
            }),
            distill_set: config.distill_set,
            eval_splits: Some(config.eval_splits.clone()),
            heldout_size: config.heldout_size,
            test_size: config.test_size,
            train_surplus: Some(config.train_surplus),
        }
    }
}

/// Parses and validates a config document.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig =
        serde_json::from_str(text).map_err(|e| Error::ConfigSyntaxError(e.to_string()))?;
    raw.into_config()
}

/// Parses and validates an already-deserialized JSON document (used by
/// sweeps, which patch one field of the raw document per cell).
pub fn parse_config_value(value: serde_json::Value) -> Result<ExperimentConfig> {
    let raw: RawConfig =
        serde_json::from_value(value).map_err(|e| Error::ConfigSyntaxError(e.to_string()))?;
    raw.into_config()
}

/// Loads a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::ConfigSyntaxError(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn minimal_fedavg_json() -> String {
        r#"{
            "method": "fedavg",
            "total_rounds": 20,
            "seed": 1,
            "task": {
                "input_dim": 4,
                "num_classes": 3,
                "clusters_per_class": 2,
                "class_center_scale": 1.5,
                "noise_sigma": 1.0,
                "domain_shift_delta": [0.0, 0.0, 0.0, 0.0]
            },
            "partition": {
                "num_clients": 80,
                "examples_per_client": 10,
                "label_concentration": 1.0,
                "high_capacity_fraction": 0.25
            },
            "round_cfg": { "client_lr": 0.1 },
            "small_spec": { "input_dim": 4, "hidden_dims": [4], "num_classes": 3 },
            "large_spec": { "input_dim": 4, "hidden_dims": [16], "num_classes": 3 },
            "server_lr_small": { "initial_lr": 0.05, "total_rounds": 20 },
            "server_lr_large": { "initial_lr": 0.05, "total_rounds": 20 }
        }"#
        .to_string()
    }

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let cfg = parse_config_str(&minimal_fedavg_json()).unwrap();
        assert_eq!(cfg.round_cfg.clients_per_round, 20);
        assert_eq!(cfg.round_cfg.client_batch_size, 20);
        assert_eq!(cfg.round_cfg.local_epochs, 1);
        assert_eq!(cfg.eval_every, 10);
        assert_eq!(cfg.eval_splits, SplitKind::ALL.to_vec());
        assert_eq!(cfg.heldout_size, 500);
        assert_eq!(cfg.test_size, 1000);
        assert_eq!(cfg.train_surplus, 240);
        assert!(cfg.distill.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = minimal_fedavg_json().replace("\"seed\": 1,", "\"seed\": 1, \"sede\": 2,");
        assert!(matches!(
            parse_config_str(&text),
            Err(Error::ConfigSyntaxError(_))
        ));
    }

    #[test]
    fn small_spec_must_be_smaller() {
        let text = minimal_fedavg_json().replace(
            r#""small_spec": { "input_dim": 4, "hidden_dims": [4], "num_classes": 3 }"#,
            r#""small_spec": { "input_dim": 4, "hidden_dims": [64], "num_classes": 3 }"#,
        );
        match parse_config_str(&text) {
            Err(Error::ConfigValidationError { field, .. }) => assert_eq!(field, "small_spec"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn canonical_round_trip_is_identity() {
        let cfg = parse_config_str(&minimal_fedavg_json()).unwrap();
        let canonical = cfg.to_canonical_json();
        let reparsed = parse_config_str(&canonical).unwrap();
        assert_eq!(reparsed, cfg);
        assert_eq!(reparsed.to_canonical_json(), canonical);
    }

    pub(crate) fn merged_json() -> String {
        let base = minimal_fedavg_json();
        base.replace("\"method\": \"fedavg\",", concat!(
            "\"method\": \"merged\",\n",
            "\"distill\": { \"student_lr_schedule\": { \"initial_lr\": 0.01, \"total_rounds\": 20 } },\n",
            "\"schedule\": { \"mode\": \"merged\", \"alpha\": 0.5 },\n",
            "\"distill_set\": { \"source\": \"excise_from_train\", \"size\": 100 },\n",
        ))
    }

    #[test]
    fn merged_defaults_resolve_steps() {
        let cfg = parse_config_str(&merged_json()).unwrap();
        let schedule = cfg.schedule.as_ref().unwrap();
        assert_eq!(schedule.steps_s, 32);
        assert_eq!(cfg.distill.as_ref().unwrap().steps_s, 32);
        assert_eq!(cfg.distill.as_ref().unwrap().temperature_self, 2.0);
        assert_eq!(schedule.alpha, 0.5);

        let canonical = cfg.to_canonical_json();
        assert_eq!(parse_config_str(&canonical).unwrap(), cfg);
    }

    #[test]
    fn merged_requires_alpha_and_matching_mode() {
        let no_alpha = merged_json().replace(", \"alpha\": 0.5", "");
        assert!(matches!(
            parse_config_str(&no_alpha),
            Err(Error::ConfigValidationError { .. })
        ));
        let wrong_mode = merged_json().replace("\"mode\": \"merged\"", "\"mode\": \"periodic\"");
        match parse_config_str(&wrong_mode) {
            Err(Error::ConfigValidationError { field, .. }) => {
                assert_eq!(field, "schedule.mode")
            }
            other => panic!("expected mode mismatch, got {other:?}"),
        }
    }

    #[test]
    fn conflicting_steps_are_rejected() {
        let text = merged_json().replace(
            "\"schedule\": { \"mode\": \"merged\", \"alpha\": 0.5 }",
            "\"schedule\": { \"mode\": \"merged\", \"alpha\": 0.5, \"steps_s\": 8 }",
        );
        let text = text.replace(
            "\"distill\": { \"student_lr_schedule\"",
            "\"distill\": { \"steps_s\": 16, \"student_lr_schedule\"",
        );
        match parse_config_str(&text) {
            Err(Error::ConfigValidationError { field, .. }) => {
                assert_eq!(field, "distill.steps_s")
            }
            other => panic!("expected steps conflict, got {other:?}"),
        }
    }

    #[test]
    fn excision_cannot_exceed_surplus() {
        let text = merged_json().replace("\"size\": 100", "\"size\": 100000");
        match parse_config_str(&text) {
            Err(Error::ConfigValidationError { field, .. }) => {
                assert_eq!(field, "distill_set.size")
            }
            other => panic!("expected surplus error, got {other:?}"),
        }
    }

    #[test]
    fn clients_per_round_must_fit_smallest_pool() {
        // 80 clients, fraction 0.25 -> high pool of 20; default k = 20 fits.
        // Fraction 0.1 -> high pool of 8; k = 20 must be rejected.
        let text = minimal_fedavg_json().replace("0.25", "0.1");
        match parse_config_str(&text) {
            Err(Error::ConfigValidationError { field, .. }) => {
                assert_eq!(field, "round_cfg.clients_per_round")
            }
            other => panic!("expected pool-size error, got {other:?}"),
        }
    }
}
