//! `wizundry analytics ...`

use std::fs;
use std::path::Path;

use serde_json::json;
use wizundry_core::analytics::{
    parse_tlx_csv, render_tlx_table, tlx_group_stats, tlx_row_stats, usage_from_events,
};
use wizundry_core::event_log::parse_csv;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Analytics(#[from] wizundry_core::analytics::AnalyticsError),
    #[error("{0}")]
    Csv(#[from] wizundry_core::event_log::CsvError),
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.display().to_string(),
        source,
    })
}

/// Per-row and group TLX statistics for a scores CSV.
pub fn tlx(path: &Path, as_json: bool) -> Result<String, CliError> {
    let records = parse_tlx_csv(&read(path)?)?;
    if !as_json {
        return Ok(render_tlx_table(&records)?);
    }
    let group = tlx_group_stats(&records)?;
    let rows: Vec<_> = records
        .iter()
        .map(|r| json!({ "participantId": r.participant_id, "scores": r.scores, "stats": tlx_row_stats(r) }))
        .collect();
    Ok(format!("{:#}\n", json!({ "rows": rows, "group": group })))
}

/// Feature usage per wizard from an exported trial log.
pub fn usage(path: &Path, as_json: bool) -> Result<String, CliError> {
    let events = parse_csv(&read(path)?)?;
    let report = usage_from_events(&events);
    if as_json {
        Ok(format!("{:#}\n", serde_json::to_value(&report).expect("report serialises")))
    } else {
        Ok(report.render())
    }
}
