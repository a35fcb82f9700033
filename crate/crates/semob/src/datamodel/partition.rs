//! Train/test partitioning: chronological or category-stratified 8:2,
//! never separating events that share a venue and date.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datamodel::events::EventRecord;
use crate::error::{Error, Result};
use crate::numerics::rng::{child_seed, fnv1a64, seeded};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    ByTime,
    ByType,
}

impl std::fmt::Display for SplitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitMode::ByTime => "by_time",
            SplitMode::ByType => "by_type",
        })
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub train_ratio: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(mode: SplitMode, seed: u64) -> Self {
        SplitSpec {
            mode,
            train_ratio: 0.8,
            seed,
        }
    }
}

/// Partition result, written to splits.json for reproducibility.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Partition {
    pub mode: SplitMode,
    pub train_ratio: f64,
    pub seed: u64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

struct Group {
    event_ids: Vec<String>,
    first_date: chrono::NaiveDate,
    venue: String,
    stratum: String,
}

fn groups_of(events: &[EventRecord]) -> Vec<Group> {
    let mut by_key: BTreeMap<(String, chrono::NaiveDate), Vec<&EventRecord>> = BTreeMap::new();
    for ev in events {
        by_key
            .entry((ev.venue_id.clone(), ev.date))
            .or_default()
            .push(ev);
    }
    by_key
        .into_iter()
        .map(|((venue, date), evs)| {
            let mut cats: Vec<String> =
                evs[0].categories.iter().map(|c| c.label().to_string()).collect();
            cats.sort();
            Group {
                event_ids: evs.iter().map(|e| e.event_id.clone()).collect(),
                first_date: date,
                venue,
                stratum: cats.join("+"),
            }
        })
        .collect()
}

/// Pick test groups totaling as close to `target` events as the group
/// sizes allow (greedy in the given order, drop-or-keep on overshoot).
fn take_for_test(groups: &[&Group], target: usize) -> Vec<usize> {
    let mut picked = Vec::new();
    let mut count = 0usize;
    for (i, g) in groups.iter().enumerate() {
        if count >= target {
            break;
        }
        let size = g.event_ids.len();
        if count + size > target {
            // keep the overshooting group only if it lands closer
            let under = target - count;
            let over = count + size - target;
            if over < under {
                picked.push(i);
            }
            break;
        }
        picked.push(i);
        count += size;
    }
    picked
}

pub fn partition(events: &[EventRecord], spec: &SplitSpec) -> Result<Partition> {
    if events.is_empty() {
        return Err(Error::Validation("partition: no events".into()));
    }
    if !(0.0..1.0).contains(&spec.train_ratio) {
        return Err(Error::Validation(format!(
            "train_ratio must be in (0,1), got {}",
            spec.train_ratio
        )));
    }
    let groups = groups_of(events);
    let total: usize = groups.iter().map(|g| g.event_ids.len()).sum();

    let mut test_ids: Vec<String> = Vec::new();
    match spec.mode {
        SplitMode::ByTime => {
            let mut ordered: Vec<&Group> = groups.iter().collect();
            ordered.sort_by(|a, b| a.first_date.cmp(&b.first_date).then(a.venue.cmp(&b.venue)));
            let target_train = (spec.train_ratio * total as f64).round() as usize;
            // find the prefix whose event count is closest to the target
            let mut best_cut = 0;
            let mut best_dev = usize::MAX;
            let mut cum = 0usize;
            for (k, g) in ordered.iter().enumerate() {
                cum += g.event_ids.len();
                let dev = cum.abs_diff(target_train);
                if dev < best_dev {
                    best_dev = dev;
                    best_cut = k + 1;
                }
            }
            if target_train.abs_diff(0) < best_dev {
                best_cut = 0;
            }
            for g in &ordered[best_cut..] {
                test_ids.extend(g.event_ids.iter().cloned());
            }
        }
        SplitMode::ByType => {
            let mut strata: BTreeMap<&str, Vec<&Group>> = BTreeMap::new();
            for g in &groups {
                strata.entry(&g.stratum).or_default().push(g);
            }
            for (name, members) in strata {
                let n: usize = members.iter().map(|g| g.event_ids.len()).sum();
                let target_test = ((1.0 - spec.train_ratio) * n as f64).round() as usize;
                let mut order: Vec<usize> = (0..members.len()).collect();
                let mut rng = seeded(child_seed(spec.seed, name));
                use rand::seq::SliceRandom;
                order.shuffle(&mut rng);
                let shuffled: Vec<&Group> = order.iter().map(|&i| members[i]).collect();
                for idx in take_for_test(&shuffled, target_test) {
                    test_ids.extend(shuffled[idx].event_ids.iter().cloned());
                }
            }
        }
    }

    let test_set: std::collections::HashSet<&String> = test_ids.iter().collect();
    let mut train: Vec<String> = events
        .iter()
        .map(|e| e.event_id.clone())
        .filter(|id| !test_set.contains(id))
        .collect();
    train.sort();
    test_ids.sort();
    Ok(Partition {
        mode: spec.mode,
        train_ratio: spec.train_ratio,
        seed: spec.seed,
        train,
        test: test_ids,
    })
}

/// Stable content hash of a partition (manifest fingerprinting).
pub fn partition_digest(p: &Partition) -> u64 {
    fnv1a64(serde_json::to_string(p).expect("partition json").as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::events::EventCategory;
    use crate::datamodel::geo::LatLon;
    use chrono::{NaiveDate, TimeZone, Utc};
    use std::collections::BTreeMap;

    fn event(id: &str, venue: &str, day: u32, cats: &[EventCategory]) -> EventRecord {
        let date = NaiveDate::from_ymd_opt(2019, 3, day).unwrap();
        EventRecord {
            event_id: id.into(),
            venue_id: venue.into(),
            venue_coords: LatLon::new(34.05, -118.25),
            date,
            start_time: Utc.with_ymd_and_hms(2019, 3, day, 19, 0, 0).unwrap(),
            end_time: Utc.with_ymd_and_hms(2019, 3, day, 21, 0, 0).unwrap(),
            categories: cats.to_vec(),
            raw_text: BTreeMap::new(),
        }
    }

    #[test]
    fn ten_events_split_eight_two() {
        let events: Vec<EventRecord> = (1..=10)
            .map(|d| event(&format!("e{d}"), "V0", d, &[EventCategory::Sports]))
            .collect();
        for mode in [SplitMode::ByTime, SplitMode::ByType] {
            let p = partition(&events, &SplitSpec::new(mode, 3)).unwrap();
            assert_eq!(p.train.len(), 8, "{mode}");
            assert_eq!(p.test.len(), 2, "{mode}");
        }
    }

    #[test]
    fn same_venue_same_date_never_separated() {
        let mut events = vec![
            event("a", "V0", 5, &[EventCategory::Sports]),
            event("b", "V0", 5, &[EventCategory::Sports]),
        ];
        for d in 1..=8 {
            events.push(event(&format!("x{d}"), "V1", d, &[EventCategory::Sports]));
        }
        for seed in 0..20 {
            for mode in [SplitMode::ByTime, SplitMode::ByType] {
                let p = partition(&events, &SplitSpec::new(mode, seed)).unwrap();
                let a_test = p.test.iter().any(|i| i == "a");
                let b_test = p.test.iter().any(|i| i == "b");
                assert_eq!(a_test, b_test, "seed {seed} {mode} split the group");
            }
        }
    }

    #[test]
    fn by_type_stratifies_within_each_category() {
        let mut events = Vec::new();
        for d in 1..=5 {
            events.push(event(&format!("s{d}"), "V0", d, &[EventCategory::Sports]));
            events.push(event(&format!("e{d}"), "V1", d, &[EventCategory::Entertainment]));
        }
        let p = partition(&events, &SplitSpec::new(SplitMode::ByType, 9)).unwrap();
        let sports_test = p.test.iter().filter(|i| i.starts_with('s')).count();
        let ent_test = p.test.iter().filter(|i| i.starts_with('e')).count();
        assert_eq!(sports_test, 1);
        assert_eq!(ent_test, 1);
    }

    #[test]
    fn disjoint_and_exhaustive() {
        let events: Vec<EventRecord> = (1..=17)
            .map(|d| {
                let cat = EventCategory::ALL[(d % 3) as usize];
                event(&format!("e{d}"), &format!("V{}", d % 4), (d % 27) + 1, &[cat])
            })
            .collect();
        let p = partition(&events, &SplitSpec::new(SplitMode::ByType, 1)).unwrap();
        assert_eq!(p.train.len() + p.test.len(), events.len());
        for id in &p.train {
            assert!(!p.test.contains(id));
        }
    }
}
