//! Event records and the fixed six-way category taxonomy.

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::datamodel::geo::LatLon;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventCategory {
    #[serde(rename = "Trade&Industry")]
    TradeIndustry,
    Entertainment,
    Celebration,
    PublicService,
    PerformingArts,
    Sports,
}

impl EventCategory {
    pub const ALL: [EventCategory; 6] = [
        EventCategory::TradeIndustry,
        EventCategory::Entertainment,
        EventCategory::Celebration,
        EventCategory::PublicService,
        EventCategory::PerformingArts,
        EventCategory::Sports,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            EventCategory::TradeIndustry => "Trade&Industry",
            EventCategory::Entertainment => "Entertainment",
            EventCategory::Celebration => "Celebration",
            EventCategory::PublicService => "PublicService",
            EventCategory::PerformingArts => "PerformingArts",
            EventCategory::Sports => "Sports",
        }
    }
}

impl std::fmt::Display for EventCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_id: String,
    pub venue_id: String,
    pub venue_coords: LatLon,
    pub date: NaiveDate,
    pub start_time: DateTime<Utc>,
    pub end_time: DateTime<Utc>,
    pub categories: Vec<EventCategory>,
    /// Source name -> text payload (calendar blurb, venue directory, ...).
    pub raw_text: BTreeMap<String, String>,
}

impl EventRecord {
    pub fn validate(&self) -> Result<()> {
        if self.start_time >= self.end_time {
            return Err(Error::Validation(format!(
                "event {}: start {} is not before end {}",
                self.event_id, self.start_time, self.end_time
            )));
        }
        if self.categories.is_empty() {
            return Err(Error::Validation(format!(
                "event {}: categories must be nonempty",
                self.event_id
            )));
        }
        self.venue_coords.validate()
    }

    pub fn primary_category(&self) -> EventCategory {
        self.categories[0]
    }
}

/// One line of the tweets.jsonl fixture.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn category_serde_uses_exact_labels() {
        let json = serde_json::to_string(&EventCategory::TradeIndustry).unwrap();
        assert_eq!(json, "\"Trade&Industry\"");
        let back: EventCategory = serde_json::from_str("\"PerformingArts\"").unwrap();
        assert_eq!(back, EventCategory::PerformingArts);
    }

    #[test]
    fn validation_catches_inverted_times() {
        let t0 = Utc.with_ymd_and_hms(2019, 5, 4, 19, 0, 0).unwrap();
        let ev = EventRecord {
            event_id: "e1".into(),
            venue_id: "V0".into(),
            venue_coords: LatLon::new(34.05, -118.25),
            date: NaiveDate::from_ymd_opt(2019, 5, 4).unwrap(),
            start_time: t0,
            end_time: t0,
            categories: vec![EventCategory::Sports],
            raw_text: BTreeMap::new(),
        };
        assert!(ev.validate().is_err());
    }
}
