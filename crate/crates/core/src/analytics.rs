//! NASA-TLX statistics and per-wizard feature usage counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::event_log::{EventType, LogError, LogEvent, LogStore};

pub const SUBSCALES: [&str; 6] = [
    "mental",
    "physical",
    "temporal",
    "performance",
    "effort",
    "frustration",
];
pub const SCALE_MIN: u8 = 1;
pub const SCALE_MAX: u8 = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("{participant}: {subscale} score {value} is outside {SCALE_MIN}..={SCALE_MAX}")]
    InvalidScale {
        participant: String,
        subscale: &'static str,
        value: i64,
    },
    #[error("no records")]
    EmptyInput,
    #[error("csv: {0}")]
    Csv(String),
    #[error("unknown trial {0}")]
    UnknownTrial(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TlxRecord {
    pub participant_id: String,
    /// Mental, physical, temporal, performance, effort, frustration.
    pub scores: [u8; 6],
}

impl TlxRecord {
    pub fn new(participant_id: impl Into<String>, scores: [i64; 6]) -> Result<Self, AnalyticsError> {
        let participant_id = participant_id.into();
        let mut out = [0u8; 6];
        for (i, &v) in scores.iter().enumerate() {
            if v < SCALE_MIN as i64 || v > SCALE_MAX as i64 {
                return Err(AnalyticsError::InvalidScale {
                    participant: participant_id,
                    subscale: SUBSCALES[i],
                    value: v,
                });
            }
            out[i] = v as u8;
        }
        Ok(Self {
            participant_id,
            scores: out,
        })
    }

    pub fn sum(&self) -> u32 {
        self.scores.iter().map(|&s| s as u32).sum()
    }
}

/// Quantile by linear interpolation between order statistics (the
/// "type 7" rule). `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Descriptive statistics of one sample. The standard deviation uses the
/// n−1 denominator and is 0 for a single value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub iqr: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self, AnalyticsError> {
        if values.is_empty() {
            return Err(AnalyticsError::EmptyInput);
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            n,
            mean,
            sd,
            median: quantile(&sorted, 0.5),
            iqr: quantile(&sorted, 0.75) - quantile(&sorted, 0.25),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TlxRowStats {
    pub sum: u32,
    pub mean: f64,
    pub sample_sd: f64,
    pub median: f64,
    pub iqr: f64,
}

pub fn tlx_row_stats(record: &TlxRecord) -> TlxRowStats {
    let values: Vec<f64> = record.scores.iter().map(|&s| s as f64).collect();
    let s = Summary::of(&values).expect("six scores");
    TlxRowStats {
        sum: record.sum(),
        mean: s.mean,
        sample_sd: s.sd,
        median: s.median,
        iqr: s.iqr,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TlxGroupStats {
    pub n: usize,
    pub mean_of_sums: f64,
    pub sd_of_sums: f64,
    pub median_of_sums: f64,
    pub iqr_of_sums: f64,
    pub mean_of_means: f64,
}

pub fn tlx_group_stats(records: &[TlxRecord]) -> Result<TlxGroupStats, AnalyticsError> {
    let sums: Vec<f64> = records.iter().map(|r| r.sum() as f64).collect();
    let s = Summary::of(&sums)?;
    let mean_of_means =
        records.iter().map(|r| r.sum() as f64 / 6.0).sum::<f64>() / records.len() as f64;
    Ok(TlxGroupStats {
        n: s.n,
        mean_of_sums: s.mean,
        sd_of_sums: s.sd,
        median_of_sums: s.median,
        iqr_of_sums: s.iqr,
        mean_of_means,
    })
}

/// A questionnaire row as published, with its printed summary columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PrintedRow {
    pub record: TlxRecord,
    pub sums: f64,
    pub means: f64,
    pub sd: f64,
    pub iqr: f64,
}

#[derive(Debug, Deserialize)]
struct RawRow {
    participant_id: String,
    mental: i64,
    physical: i64,
    temporal: i64,
    performance: i64,
    effort: i64,
    frustration: i64,
    #[serde(default)]
    sums: Option<f64>,
    #[serde(default)]
    means: Option<f64>,
    #[serde(default)]
    sd: Option<f64>,
    #[serde(default)]
    iqr: Option<f64>,
}

fn read_rows(text: &str) -> Result<Vec<RawRow>, AnalyticsError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    reader
        .deserialize()
        .map(|r| r.map_err(|e: csv::Error| AnalyticsError::Csv(e.to_string())))
        .collect()
}

fn to_record(r: &RawRow) -> Result<TlxRecord, AnalyticsError> {
    TlxRecord::new(
        r.participant_id.clone(),
        [
            r.mental,
            r.physical,
            r.temporal,
            r.performance,
            r.effort,
            r.frustration,
        ],
    )
}

/// Reads `participant_id,mental,physical,temporal,performance,effort,frustration`;
/// extra columns are ignored.
pub fn parse_tlx_csv(text: &str) -> Result<Vec<TlxRecord>, AnalyticsError> {
    read_rows(text)?.iter().map(to_record).collect()
}

/// Like [`parse_tlx_csv`] but also requires the `sums,means,sd,iqr` columns.
pub fn parse_printed_csv(text: &str) -> Result<Vec<PrintedRow>, AnalyticsError> {
    read_rows(text)?
        .iter()
        .map(|r| {
            let missing = |c: &str| AnalyticsError::Csv(format!("{}: missing {c}", r.participant_id));
            Ok(PrintedRow {
                record: to_record(r)?,
                sums: r.sums.ok_or_else(|| missing("sums"))?,
                means: r.means.ok_or_else(|| missing("means"))?,
                sd: r.sd.ok_or_else(|| missing("sd"))?,
                iqr: r.iqr.ok_or_else(|| missing("iqr"))?,
            })
        })
        .collect()
}

/// Statistics over the published Sums and Means columns themselves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PrintedSummary {
    pub sums: Summary,
    pub means: Summary,
}

pub fn summarize_printed(rows: &[PrintedRow]) -> Result<PrintedSummary, AnalyticsError> {
    let sums: Vec<f64> = rows.iter().map(|r| r.sums).collect();
    let means: Vec<f64> = rows.iter().map(|r| r.means).collect();
    Ok(PrintedSummary {
        sums: Summary::of(&sums)?,
        means: Summary::of(&means)?,
    })
}

pub fn render_tlx_table(records: &[TlxRecord]) -> Result<String, AnalyticsError> {
    let group = tlx_group_stats(records)?;
    let mut out = String::new();
    writeln!(
        out,
        "{:<12} {:>3} {:>3} {:>3} {:>3} {:>3} {:>3} {:>5} {:>6} {:>6} {:>6} {:>6}",
        "participant", "MD", "PD", "TD", "P", "E", "F", "sum", "mean", "sd", "median", "iqr"
    )
    .unwrap();
    for r in records {
        let s = tlx_row_stats(r);
        write!(out, "{:<12}", r.participant_id).unwrap();
        for v in r.scores {
            write!(out, " {v:>3}").unwrap();
        }
        writeln!(
            out,
            " {:>5} {:>6.2} {:>6.2} {:>6.2} {:>6.2}",
            s.sum, s.mean, s.sample_sd, s.median, s.iqr
        )
        .unwrap();
    }
    writeln!(
        out,
        "n={} meanOfSums={:.2} sdOfSums={:.2} medianOfSums={:.2} iqrOfSums={:.2} meanOfMeans={:.2}",
        group.n,
        group.mean_of_sums,
        group.sd_of_sums,
        group.median_of_sums,
        group.iqr_of_sums,
        group.mean_of_means
    )
    .unwrap();
    Ok(out)
}

/// Feature operation counts per (actor, trial).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UsageReport {
    pub counts: BTreeMap<(String, String), BTreeMap<EventType, u64>>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct UsageEntry<'a> {
    actor_id: &'a str,
    trial_id: &'a str,
    counts: &'a BTreeMap<EventType, u64>,
}

impl Serialize for UsageReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.counts.iter().map(|((actor, trial), counts)| UsageEntry {
            actor_id: actor,
            trial_id: trial,
            counts,
        }))
    }
}

impl UsageReport {
    pub fn get(&self, actor_id: &str, trial_id: &str, event_type: EventType) -> u64 {
        self.counts
            .get(&(actor_id.to_owned(), trial_id.to_owned()))
            .and_then(|m| m.get(&event_type))
            .copied()
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for ((actor, trial), counts) in &self.counts {
            let parts: Vec<String> = counts.iter().map(|(t, n)| format!("{t}={n}")).collect();
            writeln!(out, "{trial}\t{actor}\t{}", parts.join(" ")).unwrap();
        }
        out
    }
}

pub fn usage_from_events<'a>(events: impl IntoIterator<Item = &'a LogEvent>) -> UsageReport {
    let mut report = UsageReport::default();
    for e in events {
        if e.event_type.is_feature_use() {
            *report
                .counts
                .entry((e.actor_id.clone(), e.trial_id.clone()))
                .or_default()
                .entry(e.event_type)
                .or_default() += 1;
        }
    }
    report
}

pub fn feature_usage(log: &dyn LogStore, trial_id: &str) -> Result<UsageReport, AnalyticsError> {
    match log.events(trial_id) {
        Ok(events) => Ok(usage_from_events(&events)),
        Err(LogError::UnknownTrial(t)) => Err(AnalyticsError::UnknownTrial(t)),
        Err(e) => Err(AnalyticsError::Csv(e.to_string())),
    }
}
