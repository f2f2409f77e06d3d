//! Explicit grid sweeps over one numeric config field.

use serde_json::Value;

use crate::codist::ModelKind;
use crate::error::{Error, Result};
use crate::harness::config::{parse_config_value, ExperimentConfig};
use crate::harness::experiment::run_experiment;
use crate::harness::metrics::{MetricsRecord, SplitKind};

/// One `(value, seed)` experiment of a sweep.
pub struct SweepRun {
    pub value: f64,
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
}

/// Per-value summary: mean final mixed-test accuracy over the seeds, for
/// each model and averaged across the two.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub axis: String,
    pub value: f64,
    pub num_seeds: usize,
    pub small_accuracy: f64,
    pub large_accuracy: f64,
    pub average_accuracy: f64,
}

/// Sets a dotted-path numeric field on a JSON config document.
///
/// Integral values are written as JSON integers so integer-typed fields
/// (sizes, round counts) deserialize cleanly.
pub fn patch_config_value(base: &Value, path: &str, value: f64) -> Result<Value> {
    let invalid = |reason: String| Error::ConfigValidationError {
        field: path.to_string(),
        reason,
    };
    let mut patched = base.clone();
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(invalid("empty path segment".into()));
    }
    let mut cursor = &mut patched;
    for part in &parts[..parts.len() - 1] {
        cursor = cursor
            .get_mut(*part)
            .ok_or_else(|| invalid(format!("no object at `{part}`")))?;
    }
    let object = cursor
        .as_object_mut()
        .ok_or_else(|| invalid("parent is not an object".into()))?;
    let leaf = parts[parts.len() - 1];
    if let Some(existing) = object.get(leaf) {
        if !existing.is_number() {
            return Err(invalid("existing field is not numeric".into()));
        }
    }
    let number = if value.fract() == 0.0 && value.abs() < 9e15 {
        Value::from(value as i64)
    } else {
        Value::from(value)
    };
    object.insert(leaf.to_string(), number);
    Ok(patched)
}

fn final_accuracy(records: &[MetricsRecord], model: ModelKind) -> Result<f64> {
    records
        .iter()
        .filter(|r| r.model == model && r.split == SplitKind::TestMixed)
        .max_by_key(|r| r.round)
        .map(|r| r.accuracy)
        .ok_or_else(|| Error::ConfigValidationError {
            field: "eval_splits".into(),
            reason: "sweep summaries require the test_mixed split".into(),
        })
}

/// Builds the config for one sweep cell.
pub fn patched_config(base: &Value, axis: &str, value: f64, seed: u64) -> Result<ExperimentConfig> {
    let with_value = patch_config_value(base, axis, value)?;
    let with_seed = patch_config_value(&with_value, "seed", seed as f64)?;
    parse_config_value(with_seed)
}

/// Runs `|values| x |seeds|` experiments, patching only the named field and
/// the seed. Cells come back in input order.
pub fn sweep(
    base_json: &str,
    axis: &str,
    values: &[f64],
    seeds: &[u64],
) -> Result<(Vec<SweepCell>, Vec<SweepRun>)> {
    if values.is_empty() || seeds.is_empty() {
        return Err(Error::ConfigValidationError {
            field: axis.to_string(),
            reason: "sweep needs at least one value and one seed".into(),
        });
    }
    let base: Value =
        serde_json::from_str(base_json).map_err(|e| Error::ConfigSyntaxError(e.to_string()))?;

    let mut cells = Vec::with_capacity(values.len());
    let mut runs = Vec::new();
    for &value in values {
        let mut small_sum = 0.0;
        let mut large_sum = 0.0;
        for &seed in seeds {
            let cfg = patched_config(&base, axis, value, seed)?;
            let records = run_experiment(&cfg)?;
            small_sum += final_accuracy(&records, ModelKind::Small)?;
            large_sum += final_accuracy(&records, ModelKind::Large)?;
            runs.push(SweepRun {
                value,
                seed,
                records,
            });
        }
        let n = seeds.len() as f64;
        let small = small_sum / n;
        let large = large_sum / n;
        cells.push(SweepCell {
            axis: axis.to_string(),
            value,
            num_seeds: seeds.len(),
            small_accuracy: small,
            large_accuracy: large,
            average_accuracy: 0.5 * (small + large),
        });
    }
    Ok((cells, runs))
}

pub const SUMMARY_HEADER: &str = "axis,value,num_seeds,small_accuracy,large_accuracy,average_accuracy";

/// Renders the sweep summary CSV, rows in input order.
pub fn summary_to_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6}\n",
            c.axis, c.value, c.num_seeds, c.small_accuracy, c.large_accuracy, c.average_accuracy
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_preserves_everything_else() {
        let base: Value = serde_json::from_str(
            r#"{"seed": 1, "schedule": {"alpha": 0.3, "mode": "merged"}}"#,
        )
        .unwrap();
        let patched = patch_config_value(&base, "schedule.alpha", 0.9).unwrap();
        assert_eq!(patched["schedule"]["alpha"], Value::from(0.9));
        assert_eq!(patched["schedule"]["mode"], Value::from("merged"));
        assert_eq!(patched["seed"], Value::from(1));
        // Exactly one path differs.
        let mut reverted = patched.clone();
        reverted["schedule"]["alpha"] = base["schedule"]["alpha"].clone();
        assert_eq!(reverted, base);
    }

    #[test]
    fn integral_values_stay_integers() {
        let base: Value = serde_json::from_str(r#"{"distill_set": {"size": 10}}"#).unwrap();
        let patched = patch_config_value(&base, "distill_set.size", 600.0).unwrap();
        assert!(patched["distill_set"]["size"].is_i64());
        assert_eq!(patched["distill_set"]["size"], Value::from(600));
    }

    #[test]
    fn bad_axes_are_rejected() {
        let base: Value = serde_json::from_str(r#"{"task": {"noise_sigma": 1.0}}"#).unwrap();
        assert!(patch_config_value(&base, "nosuch.field", 1.0).is_err());
        let non_numeric: Value = serde_json::from_str(r#"{"method": "fedavg"}"#).unwrap();
        assert!(patch_config_value(&non_numeric, "method", 1.0).is_err());
    }

    #[test]
    fn summary_rows_follow_input_order() {
        let mk = |v: f64| SweepCell {
            axis: "schedule.alpha".into(),
            value: v,
            num_seeds: 2,
            small_accuracy: 0.5,
            large_accuracy: 0.25,
            average_accuracy: 0.375,
        };
        let csv = summary_to_csv(&[mk(0.95), mk(0.05)]);
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows[0], SUMMARY_HEADER);
        assert_eq!(rows[1], "schedule.alpha,0.95,2,0.500000,0.250000,0.375000");
        assert_eq!(rows[2], "schedule.alpha,0.05,2,0.500000,0.250000,0.375000");
    }
}
