//! Error-pattern aggregation feeding the evaluator.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::datamodel::events::EventCategory;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WindowMeta {
    pub event_id: String,
    pub venue_id: String,
    pub categories: Vec<EventCategory>,
    pub first_target: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketStat {
    pub key: String,
    pub mae: f64,
    pub windows: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorStats {
    pub by_weekday: Vec<BucketStat>,
    pub by_hour: Vec<BucketStat>,
    pub by_category: Vec<BucketStat>,
    pub by_venue: Vec<BucketStat>,
    /// Worst buckets across the three global breakdowns, worst first,
    /// keyed "weekday:Mon" / "hour:18" / "category:Sports".
    pub worst: Vec<String>,
    /// Venues whose error profile warrants a venue-logic revision.
    pub flagged_venues: Vec<String>,
    pub overall_mae: f64,
    pub total_windows: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct ErrorPatternConfig {
    /// How many worst buckets to surface.
    pub top_k: usize,
    /// How many above-average venues to flag for venue-logic updates.
    pub venue_flag_count: usize,
}

impl Default for ErrorPatternConfig {
    fn default() -> Self {
        ErrorPatternConfig {
            top_k: 3,
            venue_flag_count: 1,
        }
    }
}

const WEEKDAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

#[derive(Default)]
struct Acc {
    abs_sum: f64,
    elems: usize,
    windows: usize,
}

impl Acc {
    fn push(&mut self, abs_sum: f64, elems: usize) {
        self.abs_sum += abs_sum;
        self.elems += elems;
        self.windows += 1;
    }

    fn mae(&self) -> f64 {
        if self.elems == 0 {
            0.0
        } else {
            self.abs_sum / self.elems as f64
        }
    }
}

fn to_stats(map: BTreeMap<String, Acc>) -> Vec<BucketStat> {
    map.into_iter()
        .map(|(key, acc)| BucketStat {
            key,
            mae: acc.mae(),
            windows: acc.windows,
        })
        .collect()
}

/// Per-bucket MAE over windows grouped by weekday, hour of day, event
/// category, and venue. Buckets are keyed by the window's first target
/// step; every element of a window weighs equally.
pub fn compute_error_patterns(
    preds: &[Tensor],
    truths: &[Tensor],
    meta: &[WindowMeta],
    config: &ErrorPatternConfig,
) -> Result<ErrorStats> {
    if preds.len() != truths.len() || preds.len() != meta.len() {
        return Err(Error::Validation(format!(
            "error patterns: {} preds, {} truths, {} meta entries",
            preds.len(),
            truths.len(),
            meta.len()
        )));
    }
    let mut weekday: BTreeMap<String, Acc> = BTreeMap::new();
    let mut hour: BTreeMap<String, Acc> = BTreeMap::new();
    let mut category: BTreeMap<String, Acc> = BTreeMap::new();
    let mut venue: BTreeMap<String, Acc> = BTreeMap::new();
    let mut overall = Acc::default();

    for ((p, t), m) in preds.iter().zip(truths).zip(meta) {
        if p.shape() != t.shape() {
            return Err(Error::Dimension {
                op: "compute_error_patterns",
                lhs: p.shape().to_vec(),
                rhs: t.shape().to_vec(),
            });
        }
        let abs_sum: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b).abs())
            .sum();
        let elems = p.numel();
        let wd = WEEKDAYS[m.first_target.weekday().num_days_from_monday() as usize];
        weekday.entry(wd.to_string()).or_default().push(abs_sum, elems);
        hour.entry(format!("{:02}", m.first_target.hour()))
            .or_default()
            .push(abs_sum, elems);
        for cat in &m.categories {
            category
                .entry(cat.label().to_string())
                .or_default()
                .push(abs_sum, elems);
        }
        venue
            .entry(m.venue_id.clone())
            .or_default()
            .push(abs_sum, elems);
        overall.push(abs_sum, elems);
    }

    let by_weekday = to_stats(weekday);
    let by_hour = to_stats(hour);
    let by_category = to_stats(category);
    let by_venue = to_stats(venue);

    let mut worst: Vec<(f64, String)> = Vec::new();
    for (prefix, stats) in [
        ("weekday", &by_weekday),
        ("hour", &by_hour),
        ("category", &by_category),
    ] {
        for s in stats {
            worst.push((s.mae, format!("{prefix}:{}", s.key)));
        }
    }
    worst.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let worst: Vec<String> = worst.into_iter().take(config.top_k).map(|(_, k)| k).collect();

    let overall_mae = overall.mae();
    let mut venues_ranked: Vec<&BucketStat> = by_venue.iter().collect();
    venues_ranked.sort_by(|a, b| b.mae.partial_cmp(&a.mae).unwrap().then(a.key.cmp(&b.key)));
    let flagged_venues: Vec<String> = venues_ranked
        .into_iter()
        .filter(|s| s.mae > overall_mae)
        .take(config.venue_flag_count)
        .map(|s| s.key.clone())
        .collect();

    Ok(ErrorStats {
        by_weekday,
        by_hour,
        by_category,
        by_venue,
        worst,
        flagged_venues,
        overall_mae,
        total_windows: meta.len(),
    })
}

impl ErrorStats {
    pub fn render_breakdown(stats: &[BucketStat]) -> String {
        stats
            .iter()
            .map(|s| format!("{}={:.3} ({} windows)", s.key, s.mae, s.windows))
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub fn worst_in(&self, prefix: &str) -> Option<&str> {
        self.worst
            .iter()
            .find(|k| k.starts_with(prefix))
            .map(|k| k.split(':').nth(1).unwrap_or(""))
            .or(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn meta(venue: &str, cat: EventCategory, ts: DateTime<Utc>) -> WindowMeta {
        WindowMeta {
            event_id: "e".into(),
            venue_id: venue.into(),
            categories: vec![cat],
            first_target: ts,
        }
    }

    #[test]
    fn single_bad_window_dominates_every_breakdown() {
        // 2019-03-04 is a Monday.
        let monday = Utc.with_ymd_and_hms(2019, 3, 4, 18, 0, 0).unwrap();
        let tuesday = Utc.with_ymd_and_hms(2019, 3, 5, 12, 0, 0).unwrap();
        let zero = Tensor::zeros(vec![2, 3]);
        let bad = Tensor::full(vec![2, 3], 9.0);
        let preds = vec![bad, zero.clone(), zero.clone()];
        let truths = vec![zero.clone(), zero.clone(), zero.clone()];
        let metas = vec![
            meta("V0", EventCategory::Sports, monday),
            meta("V1", EventCategory::Entertainment, tuesday),
            meta("V1", EventCategory::Entertainment, tuesday),
        ];
        let stats =
            compute_error_patterns(&preds, &truths, &metas, &ErrorPatternConfig::default())
                .unwrap();
        assert!(stats.worst.contains(&"weekday:Mon".to_string()));
        assert!(stats.worst.contains(&"hour:18".to_string()));
        assert!(stats.worst.contains(&"category:Sports".to_string()));
        assert_eq!(stats.flagged_venues, vec!["V0".to_string()]);
    }

    #[test]
    fn zero_error_means_zero_buckets() {
        let ts = Utc.with_ymd_and_hms(2019, 3, 4, 18, 0, 0).unwrap();
        let zero = Tensor::zeros(vec![1, 4]);
        let stats = compute_error_patterns(
            &[zero.clone()],
            &[zero.clone()],
            &[meta("V0", EventCategory::Sports, ts)],
            &ErrorPatternConfig::default(),
        )
        .unwrap();
        assert_eq!(stats.overall_mae, 0.0);
        assert!(stats.by_weekday.iter().all(|b| b.mae == 0.0));
        assert!(stats.flagged_venues.is_empty());
    }

    #[test]
    fn bucket_maes_match_hand_aggregation() {
        // Six windows, two venues; element-weighted MAE per bucket.
        let ts_a = Utc.with_ymd_and_hms(2019, 3, 4, 18, 0, 0).unwrap(); // Mon 18
        let ts_b = Utc.with_ymd_and_hms(2019, 3, 5, 19, 0, 0).unwrap(); // Tue 19
        let mk = |v: f64| Tensor::full(vec![1, 2], v);
        let preds = vec![mk(1.0), mk(2.0), mk(3.0), mk(0.0), mk(4.0), mk(6.0)];
        let truths = vec![mk(0.0); 6];
        let metas = vec![
            meta("V0", EventCategory::Sports, ts_a),
            meta("V0", EventCategory::Sports, ts_a),
            meta("V0", EventCategory::Sports, ts_b),
            meta("V1", EventCategory::Celebration, ts_b),
            meta("V1", EventCategory::Celebration, ts_b),
            meta("V1", EventCategory::Celebration, ts_b),
        ];
        let stats =
            compute_error_patterns(&preds, &truths, &metas, &ErrorPatternConfig::default())
                .unwrap();
        let venue0 = stats.by_venue.iter().find(|b| b.key == "V0").unwrap();
        assert!((venue0.mae - 2.0).abs() < 1e-12); // (1+2+3)/3
        let venue1 = stats.by_venue.iter().find(|b| b.key == "V1").unwrap();
        assert!((venue1.mae - 10.0 / 3.0).abs() < 1e-12);
        let monday = stats.by_weekday.iter().find(|b| b.key == "Mon").unwrap();
        assert!((monday.mae - 1.5).abs() < 1e-12); // windows 1,2
        let overall = (1.0 + 2.0 + 3.0 + 0.0 + 4.0 + 6.0) / 6.0;
        assert!((stats.overall_mae - overall).abs() < 1e-12);
    }
}
