//! Model and controller diagnostics. Every output is CSV with a header line
//! and has a matching loader here.

mod control;
mod dataset;
mod rollout;

pub use control::{read_episode_csv, true_env_cem_control, write_episode_csv, EpisodeLog, EPISODE_HEADER};
pub use dataset::{dataset_evaluate, DimPairs, DimSummary, EvaluationTable, PAIRS_HEADER, SUMMARY_HEADER};
pub use rollout::{visualize_rollout, RolloutComparison};

use crate::{Error, Result};

/// Parses a header-led CSV of floats, checking the header exactly.
pub(crate) fn read_float_csv(text: &str, header: &str) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == header => {}
        other => return Err(Error::parse(format!("expected header `{header}`, found {other:?}"))),
    }
    let width = header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(format!("line {}: {e}", i + 2)))?;
        if row.len() != width {
            return Err(Error::parse(format!("line {}: expected {width} fields, found {}", i + 2, row.len())));
        }
        rows.push(row);
    }
    Ok(rows)
}
