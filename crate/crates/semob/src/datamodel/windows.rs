//! Sliding-window sample extraction around events.
//!
//! A window predicts `t_out` future steps from the `t_in` steps before
//! them. Windows slide with stride 1 and are emitted exactly when all
//! target steps land inside the event's impact span
//! `[start - window_hours, end + window_hours)`.

use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};

use crate::datamodel::events::{EventCategory, EventRecord};
use crate::datamodel::flows::{FlowSeries, STEP_SECONDS};
use crate::datamodel::graph::AffectedSet;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Debug)]
pub struct EventWindow {
    /// M×T history, rows in [`AffectedSet`] order.
    pub history: Tensor,
    /// M×T' targets.
    pub target: Tensor,
    pub future_timestamps: Vec<DateTime<Utc>>,
    pub affected: Arc<AffectedSet>,
    pub window_hours: u8,
    pub event_id: String,
    pub venue_id: String,
    pub categories: Vec<EventCategory>,
    /// Index of the first target step in the source flow series.
    pub first_target_step: usize,
}

fn submatrix(flows: &FlowSeries, sensors: &[usize], from: usize, to: usize) -> Tensor {
    let cols = to - from;
    let mut out = Tensor::zeros(vec![sensors.len(), cols]);
    for (r, &s) in sensors.iter().enumerate() {
        for c in 0..cols {
            out.set(r, c, flows.value(s, from + c));
        }
    }
    out
}

pub fn slice_windows(
    flows: &FlowSeries,
    event: &EventRecord,
    affected: &Arc<AffectedSet>,
    window_hours: u8,
    t_in: usize,
    t_out: usize,
) -> Result<Vec<EventWindow>> {
    event.validate()?;
    let span_start = event.start_time - Duration::hours(window_hours as i64);
    let span_end = event.end_time + Duration::hours(window_hours as i64);
    let s0 = flows.step_at_or_after(span_start);
    let s_end = flows.step_at_or_after(span_end);

    let need_lo = s0 - t_in as i64;
    if need_lo < 0 || s_end > flows.n_steps() as i64 {
        let cover_from = flows.timestamp(0);
        let cover_to = flows.timestamp(flows.n_steps());
        let need_from = flows.epoch_start + Duration::seconds(need_lo * STEP_SECONDS);
        let need_to = flows.epoch_start + Duration::seconds(s_end * STEP_SECONDS);
        return Err(Error::FlowCoverage {
            event_id: event.event_id.clone(),
            missing: format!(
                "need {need_from}..{need_to}, flows cover {cover_from}..{cover_to}"
            ),
        });
    }

    let s0 = s0 as usize;
    let s_end = s_end as usize;
    let mut out = Vec::new();
    if s_end < s0 + t_out {
        return Ok(out);
    }
    for first_target in s0..=(s_end - t_out) {
        let history = submatrix(flows, &affected.sensor_indices, first_target - t_in, first_target);
        let target = submatrix(flows, &affected.sensor_indices, first_target, first_target + t_out);
        let future_timestamps = (0..t_out)
            .map(|k| flows.timestamp(first_target + k))
            .collect();
        out.push(EventWindow {
            history,
            target,
            future_timestamps,
            affected: Arc::clone(affected),
            window_hours,
            event_id: event.event_id.clone(),
            venue_id: event.venue_id.clone(),
            categories: event.categories.clone(),
            first_target_step: first_target,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::geo::LatLon;
    use crate::datamodel::graph::{affected_sensors, SensorGraph};
    use chrono::TimeZone;
    use std::collections::BTreeMap;

    fn fixture() -> (FlowSeries, EventRecord, Arc<AffectedSet>) {
        let graph = SensorGraph::new(
            vec!["a".into(), "b".into()],
            vec![LatLon::new(34.05, -118.25), LatLon::new(34.051, -118.25)],
        )
        .unwrap();
        let affected = Arc::new(
            affected_sensors(&graph, "V0", LatLon::new(34.05, -118.25), 2.0).unwrap(),
        );
        let epoch = Utc.with_ymd_and_hms(2019, 3, 1, 0, 0, 0).unwrap();
        let steps = 2 * 288;
        let data: Vec<f64> = (0..2 * steps).map(|i| (i % 97) as f64).collect();
        let flows = FlowSeries::new(Tensor::matrix(2, steps, data).unwrap(), epoch).unwrap();
        let event = EventRecord {
            event_id: "e1".into(),
            venue_id: "V0".into(),
            venue_coords: LatLon::new(34.05, -118.25),
            date: chrono::NaiveDate::from_ymd_opt(2019, 3, 1).unwrap(),
            start_time: Utc.with_ymd_and_hms(2019, 3, 1, 19, 0, 0).unwrap(),
            end_time: Utc.with_ymd_and_hms(2019, 3, 1, 21, 0, 0).unwrap(),
            categories: vec![EventCategory::Sports],
            raw_text: BTreeMap::new(),
        };
        (flows, event, affected)
    }

    /// Brute-force enumeration of emitted window positions.
    fn count_oracle(flows: &FlowSeries, event: &EventRecord, wh: u8, t_in: usize, t_out: usize) -> usize {
        let span_start = event.start_time - Duration::hours(wh as i64);
        let span_end = event.end_time + Duration::hours(wh as i64);
        let mut count = 0;
        for p in 0..flows.n_steps() {
            if p < t_in || p + t_out > flows.n_steps() {
                continue;
            }
            let ok = (0..t_out).all(|k| {
                let ts = flows.timestamp(p + k);
                ts >= span_start && ts < span_end
            });
            if ok {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn window_count_matches_enumeration() {
        let (flows, event, affected) = fixture();
        let windows = slice_windows(&flows, &event, &affected, 2, 12, 12).unwrap();
        // 2h event + 2h margins on both sides = 6h of target positions.
        assert_eq!(windows.len(), 6 * 12 - 12 + 1);
        assert_eq!(windows.len(), count_oracle(&flows, &event, 2, 12, 12));
    }

    #[test]
    fn first_window_ends_at_span_start_plus_horizon() {
        let (flows, event, affected) = fixture();
        let windows = slice_windows(&flows, &event, &affected, 2, 12, 12).unwrap();
        let span_start = event.start_time - Duration::hours(2);
        let last_target = *windows[0].future_timestamps.last().unwrap();
        assert_eq!(last_target, span_start + Duration::seconds(11 * 300));
    }

    #[test]
    fn history_never_overlaps_targets() {
        let (flows, event, affected) = fixture();
        for w in slice_windows(&flows, &event, &affected, 2, 12, 12).unwrap() {
            let last_history_ts = flows.timestamp(w.first_target_step - 1);
            assert!(last_history_ts < w.future_timestamps[0]);
            assert_eq!(w.history.shape(), &[2, 12]);
            assert_eq!(w.target.shape(), &[2, 12]);
        }
    }

    #[test]
    fn uncovered_event_is_a_coverage_error() {
        let (flows, mut event, affected) = fixture();
        event.start_time = Utc.with_ymd_and_hms(2019, 6, 1, 19, 0, 0).unwrap();
        event.end_time = Utc.with_ymd_and_hms(2019, 6, 1, 21, 0, 0).unwrap();
        match slice_windows(&flows, &event, &affected, 2, 12, 12) {
            Err(Error::FlowCoverage { missing, .. }) => {
                assert!(missing.contains("need"));
            }
            other => panic!("expected coverage error, got {other:?}"),
        }
    }
}
