use super::{EventType, LogEvent, LogRole};

pub const CSV_HEADER: &str = "seq,timestamp_ms,trial_id,actor_id,role,event_type,payload";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CsvError {
    #[error("bad header: {0:?}")]
    BadHeader(String),
    #[error("line {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("csv: {0}")]
    Syntax(String),
}

fn push_field(out: &mut String, field: &str, force_quotes: bool) {
    if force_quotes || field.contains([',', '"', '\n', '\r']) {
        out.push('"');
        out.push_str(&field.replace('"', "\"\""));
        out.push('"');
    } else {
        out.push_str(field);
    }
}

/// Renders events as RFC 4180 CSV with LF line endings. The payload column
/// is always quoted; other fields only when they need it.
pub fn export_csv(events: &[LogEvent]) -> String {
    let mut out = String::with_capacity(64 * (events.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for e in events {
        out.push_str(&e.seq.to_string());
        out.push(',');
        out.push_str(&e.timestamp_ms.to_string());
        out.push(',');
        push_field(&mut out, &e.trial_id, false);
        out.push(',');
        push_field(&mut out, &e.actor_id, false);
        out.push(',');
        out.push_str(e.role.as_str());
        out.push(',');
        out.push_str(e.event_type.as_str());
        out.push(',');
        push_field(&mut out, &e.payload.to_string(), true);
        out.push('\n');
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<LogEvent>, CsvError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| CsvError::Syntax(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != CSV_HEADER {
        return Err(CsvError::BadHeader(header));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CsvError::Syntax(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |reason: String| CsvError::Row { line, reason };
        if record.len() != 7 {
            return Err(bad(format!("expected 7 fields, found {}", record.len())));
        }
        let num = |i: usize, name: &str| {
            record[i]
                .parse::<u64>()
                .map_err(|e| bad(format!("{name}: {e}")))
        };
        out.push(LogEvent {
            seq: num(0, "seq")?,
            timestamp_ms: num(1, "timestamp_ms")?,
            trial_id: record[2].to_owned(),
            actor_id: record[3].to_owned(),
            role: record[4].parse::<LogRole>().map_err(bad)?,
            event_type: record[5].parse::<EventType>().map_err(bad)?,
            payload: serde_json::from_str(&record[6])
                .map_err(|e| bad(format!("payload: {e}")))?,
        });
    }
    Ok(out)
}
