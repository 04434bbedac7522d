//! Link-quality aggregation: fold detection events into per-link statistics.
//!
//! The correlation peak is a match-confidence score in [0, 1]; the MF peak
//! on a unit-energy template scales linearly with channel amplitude, so its
//! mean serves as the link-strength estimate. Both are reported.

use std::collections::BTreeMap;

use crate::detector::DetectionEvent;
use crate::error::{Error, Result};

/// Mean and population standard deviation of inter-event spacing, in
/// samples. Defined once a link has at least two events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacingStats {
    pub mean: f64,
    pub std: f64,
}

/// Aggregated statistics for one monitored link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkStats {
    pub template_id: String,
    pub event_count: usize,
    pub mean_peak_corr: f64,
    pub mean_peak_mf: f64,
    pub mean_rss: f64,
    pub inter_arrival: Option<SpacingStats>,
}

/// Fold events (sorted by index) into per-link statistics, keyed and
/// ordered by template id.
pub fn accumulate(events: &[DetectionEvent]) -> BTreeMap<String, LinkStats> {
    debug_assert!(
        events.windows(2).all(|w| w[0].index <= w[1].index),
        "events must be sorted by index"
    );
    let mut grouped: BTreeMap<&str, Vec<&DetectionEvent>> = BTreeMap::new();
    for e in events {
        grouped.entry(&e.template_id).or_default().push(e);
    }

    let mut out = BTreeMap::new();
    for (id, evs) in grouped {
        let count = evs.len() as f64;
        let mean_peak_corr = evs.iter().map(|e| e.peak_corr).sum::<f64>() / count;
        let mean_peak_mf = evs.iter().map(|e| e.peak_mf).sum::<f64>() / count;
        let mean_rss = evs.iter().map(|e| e.rss).sum::<f64>() / count;
        let inter_arrival = if evs.len() >= 2 {
            let gaps: Vec<f64> = evs.windows(2).map(|w| (w[1].index - w[0].index) as f64).collect();
            let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
            let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / gaps.len() as f64;
            Some(SpacingStats {
                mean,
                std: var.sqrt(),
            })
        } else {
            None
        };
        out.insert(
            id.to_string(),
            LinkStats {
                template_id: id.to_string(),
                event_count: evs.len(),
                mean_peak_corr,
                mean_peak_mf,
                mean_rss,
                inter_arrival,
            },
        );
    }
    out
}

pub const CSV_HEADER: &str =
    "template_id,count,mean_peak_corr,mean_peak_mf,mean_rss,inter_arrival_mean,inter_arrival_std";

/// Render statistics as CSV, rows ordered by template id. Float fields use
/// the shortest round-trip representation, so parsing the output recovers
/// the exact values.
pub fn to_csv(stats: &BTreeMap<String, LinkStats>) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for s in stats.values() {
        let (ia_mean, ia_std) = match s.inter_arrival {
            Some(ia) => (ia.mean.to_string(), ia.std.to_string()),
            None => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.template_id, s.event_count, s.mean_peak_corr, s.mean_peak_mf, s.mean_rss, ia_mean, ia_std
        ));
    }
    out
}

pub fn from_csv(text: &str) -> Result<BTreeMap<String, LinkStats>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(Error::InvalidInput(format!(
                "unexpected CSV header: {other:?}"
            )))
        }
    }
    let mut out = BTreeMap::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::InvalidInput(format!(
                "line {}: expected 7 fields, got {}",
                ln + 2,
                fields.len()
            )));
        }
        let parse = |what: &str, v: &str| -> Result<f64> {
            v.parse()
                .map_err(|e| Error::InvalidInput(format!("line {}: bad {what}: {e}", ln + 2)))
        };
        let inter_arrival = if fields[5].is_empty() && fields[6].is_empty() {
            None
        } else {
            Some(SpacingStats {
                mean: parse("inter_arrival_mean", fields[5])?,
                std: parse("inter_arrival_std", fields[6])?,
            })
        };
        let stats = LinkStats {
            template_id: fields[0].to_string(),
            event_count: fields[1]
                .parse()
                .map_err(|e| Error::InvalidInput(format!("line {}: bad count: {e}", ln + 2)))?,
            mean_peak_corr: parse("mean_peak_corr", fields[2])?,
            mean_peak_mf: parse("mean_peak_mf", fields[3])?,
            mean_rss: parse("mean_rss", fields[4])?,
            inter_arrival,
        };
        out.insert(stats.template_id.clone(), stats);
    }
    Ok(out)
}

/// Fixed-width human-readable table, ordered by template id.
pub fn render_table(stats: &BTreeMap<String, LinkStats>) -> String {
    let mut out = format!(
        "{:<14} {:>7} {:>10} {:>10} {:>12} {:>14} {:>12}\n",
        "link", "count", "corr", "mf_peak", "rss", "spacing_mean", "spacing_std"
    );
    for s in stats.values() {
        let (ia_mean, ia_std) = match s.inter_arrival {
            Some(ia) => (format!("{:.1}", ia.mean), format!("{:.1}", ia.std)),
            None => ("-".into(), "-".into()),
        };
        out.push_str(&format!(
            "{:<14} {:>7} {:>10.4} {:>10.4} {:>12.6} {:>14} {:>12}\n",
            s.template_id, s.event_count, s.mean_peak_corr, s.mean_peak_mf, s.mean_rss, ia_mean, ia_std
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(index: usize, id: &str, corr: f64, mf: f64, rss: f64) -> DetectionEvent {
        DetectionEvent {
            index,
            template_id: id.to_string(),
            peak_corr: corr,
            peak_mf: mf,
            rss,
        }
    }

    #[test]
    fn empty_events_empty_map() {
        assert!(accumulate(&[]).is_empty());
    }

    #[test]
    fn two_event_arithmetic() {
        let events = vec![
            ev(0, "tx1", 0.9, 2.0, 0.5),
            ev(2_000_000, "tx1", 0.8, 4.0, 0.7),
        ];
        let stats = accumulate(&events);
        let s = &stats["tx1"];
        assert_eq!(s.event_count, 2);
        assert!((s.mean_peak_corr - 0.85).abs() < 1e-12);
        assert!((s.mean_peak_mf - 3.0).abs() < 1e-12);
        assert!((s.mean_rss - 0.6).abs() < 1e-12);
        let ia = s.inter_arrival.unwrap();
        assert_eq!(ia.mean, 2_000_000.0);
        assert_eq!(ia.std, 0.0);
    }

    #[test]
    fn counts_partition_totals() {
        let events = vec![
            ev(10, "tx1", 0.9, 1.0, 0.1),
            ev(20, "tx2", 0.9, 1.0, 0.1),
            ev(30, "tx1", 0.9, 1.0, 0.1),
            ev(40, "tx2", 0.9, 1.0, 0.1),
            ev(55, "tx1", 0.9, 1.0, 0.1),
        ];
        let stats = accumulate(&events);
        let total: usize = stats.values().map(|s| s.event_count).sum();
        assert_eq!(total, events.len());
        assert_eq!(stats["tx1"].event_count, 3);
        assert_eq!(stats["tx2"].event_count, 2);
    }

    #[test]
    fn equal_index_permutation_invariance() {
        let a = vec![
            ev(10, "tx1", 0.9, 1.0, 0.1),
            ev(10, "tx2", 0.8, 1.0, 0.1),
            ev(50, "tx1", 0.7, 1.0, 0.1),
        ];
        let mut b = a.clone();
        b.swap(0, 1);
        assert_eq!(accumulate(&a), accumulate(&b));
    }

    #[test]
    fn empty_stats_header_only_csv() {
        let csv = to_csv(&BTreeMap::new());
        assert_eq!(csv.trim(), CSV_HEADER);
        assert!(from_csv(&csv).unwrap().is_empty());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let events = vec![
            ev(123, "tx1", 0.987654321, 11.3137085, 0.4923),
            ev(2_000_123, "tx1", 0.91, 10.9, 0.51),
            ev(777, "tx2", 0.85, 9.7, 0.33),
        ];
        let stats = accumulate(&events);
        let parsed = from_csv(&to_csv(&stats)).unwrap();
        assert_eq!(parsed, stats);
    }

    #[test]
    fn table_has_one_row_per_link() {
        let stats = accumulate(&[ev(1, "tx1", 0.9, 1.0, 0.1)]);
        let table = render_table(&stats);
        assert_eq!(table.lines().count(), 2);
        assert!(table.contains("tx1"));
    }
}
