//! Published NASA-TLX tables and the checks made against them.

use wizundry_core::analytics::{
    parse_printed_csv, summarize_printed, tlx_group_stats, tlx_row_stats, PrintedRow,
    TlxGroupStats,
};

pub const STUDY1: &str = include_str!("../fixtures/study1_tlx.csv");
pub const STUDY2_WIZARDS: &str = include_str!("../fixtures/study2_wizards_tlx.csv");
pub const STUDY2_END_USERS: &str = include_str!("../fixtures/study2_endusers_tlx.csv");

pub fn rows(csv: &str) -> Vec<PrintedRow> {
    parse_printed_csv(csv).expect("fixture parses")
}

pub fn group(csv: &str) -> TlxGroupStats {
    let records: Vec<_> = rows(csv).into_iter().map(|r| r.record).collect();
    tlx_group_stats(&records).expect("non-empty fixture")
}

pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Rows whose recomputed sum or one-decimal mean disagrees with the
/// printed columns.
pub fn row_mismatches(csv: &str) -> Vec<String> {
    rows(csv)
        .iter()
        .filter_map(|r| {
            let s = tlx_row_stats(&r.record);
            let ok = f64::from(s.sum) == r.sums && (round1(s.mean) - r.means).abs() < 1e-9;
            (!ok).then(|| {
                format!(
                    "{}: sum {} vs {}, mean {:.2} vs {}",
                    r.record.participant_id, s.sum, r.sums, s.mean, r.means
                )
            })
        })
        .collect()
}

/// Mean of the printed Sums column.
pub fn printed_mean_of_sums(csv: &str) -> f64 {
    summarize_printed(&rows(csv)).unwrap().sums.mean
}

/// Mean of the printed Means column.
pub fn printed_mean_of_means(csv: &str) -> f64 {
    summarize_printed(&rows(csv)).unwrap().means.mean
}
