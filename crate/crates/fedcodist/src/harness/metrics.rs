//! Per-round evaluation records and their CSV serialization.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codist::ModelKind;
use crate::error::{Error, Result};

/// Evaluation split. The declaration order fixes the CSV sort order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    TestMixed,
    TestDomainA,
    TestDomainB,
    Heldout,
}

impl SplitKind {
    pub const ALL: [SplitKind; 4] = [
        SplitKind::TestMixed,
        SplitKind::TestDomainA,
        SplitKind::TestDomainB,
        SplitKind::Heldout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::TestMixed => "test_mixed",
            SplitKind::TestDomainA => "test_domain_a",
            SplitKind::TestDomainB => "test_domain_b",
            SplitKind::Heldout => "heldout",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// One evaluation of one model on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub round: u64,
    pub model: ModelKind,
    pub split: SplitKind,
    pub accuracy: f64,
    pub loss: f64,
}

pub const METRICS_HEADER: &str = "round,model,split,accuracy,loss";

/// Renders records as CSV: fixed header, rows sorted by
/// `(round, model, split)`, floats with six decimal places.
pub fn metrics_to_csv(records: &[MetricsRecord]) -> String {
    let mut sorted: Vec<&MetricsRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.round, r.model, r.split));
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in sorted {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6}\n",
            r.round,
            r.model.name(),
            r.split.name(),
            r.accuracy,
            r.loss
        ));
    }
    out
}

/// Writes the metrics CSV to `path`.
pub fn write_metrics(records: &[MetricsRecord], path: &Path) -> Result<()> {
    fs::write(path, metrics_to_csv(records))?;
    Ok(())
}

/// Parses a metrics CSV produced by [`metrics_to_csv`].
pub fn parse_metrics_str(text: &str) -> Result<Vec<MetricsRecord>> {
    let err = |line: usize, reason: String| Error::MetricsFormatError { line, reason };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == METRICS_HEADER => {}
        Some((_, header)) => {
            return Err(err(1, format!("unexpected header `{header}`")));
        }
        None => return Err(err(1, "missing header".into())),
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(err(line_no, format!("expected 5 fields, found {}", fields.len())));
        }
        let round = fields[0]
            .parse()
            .map_err(|_| err(line_no, format!("invalid round `{}`", fields[0])))?;
        let model = match fields[1] {
            "small" => ModelKind::Small,
            "large" => ModelKind::Large,
            other => return Err(err(line_no, format!("unknown model `{other}`"))),
        };
        let split = SplitKind::parse(fields[2])
            .ok_or_else(|| err(line_no, format!("unknown split `{}`", fields[2])))?;
        let accuracy: f64 = fields[3]
            .parse()
            .map_err(|_| err(line_no, format!("invalid accuracy `{}`", fields[3])))?;
        let loss: f64 = fields[4]
            .parse()
            .map_err(|_| err(line_no, format!("invalid loss `{}`", fields[4])))?;
        if !accuracy.is_finite() || !loss.is_finite() {
            return Err(err(line_no, "non-finite metric".into()));
        }
        records.push(MetricsRecord {
            round,
            model,
            split,
            accuracy,
            loss,
        });
    }
    Ok(records)
}
