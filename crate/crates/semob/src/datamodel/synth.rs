//! Seeded synthetic world: a sensor network around a few venues, base
//! traffic with daily/weekly cycles, events that add distance- and
//! time-decaying flow bumps, and text payloads (calendar blurbs and
//! tweets).
//!
//! The bump magnitude is driven by an attendance level whose words and
//! figure appear only in the text payloads, never as numeric model
//! input, so text carries signal the flow history cannot.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datamodel::events::{EventCategory, EventRecord, Tweet};
use crate::datamodel::flows::{FlowSeries, STEPS_PER_DAY};
use crate::datamodel::geo::{haversine_km, offset_km, LatLon};
use crate::datamodel::graph::{build_adjacency, SensorGraph};
use crate::error::{Error, Result};
use crate::numerics::rng::{child_seed, seeded};
use crate::numerics::Tensor;

/// Attendance levels: the word that appears in text and the bump
/// multiplier it stands for.
pub const ATTENDANCE_LEVELS: [(&str, f64); 5] = [
    ("tiny", 0.25),
    ("small", 0.55),
    ("moderate", 1.0),
    ("large", 1.7),
    ("massive", 2.6),
];

pub fn level_word(level: usize) -> &'static str {
    ATTENDANCE_LEVELS[level].0
}

pub fn level_factor(level: usize) -> f64 {
    ATTENDANCE_LEVELS[level].1
}

/// Two descriptive terms per category, used in calendar blurbs, tweets,
/// and the mock agents' query construction.
pub fn category_terms(cat: EventCategory) -> [&'static str; 2] {
    match cat {
        EventCategory::TradeIndustry => ["expo", "convention"],
        EventCategory::Entertainment => ["show", "festival"],
        EventCategory::Celebration => ["parade", "celebration"],
        EventCategory::PublicService => ["fair", "assembly"],
        EventCategory::PerformingArts => ["concert", "performance"],
        EventCategory::Sports => ["game", "match"],
    }
}

const VENUE_NAMES: [&str; 5] = [
    "Vista Arena",
    "Riverside Bowl",
    "Harbor Center",
    "Summit Pavilion",
    "Canyon Field",
];

pub fn venue_name(index: usize) -> String {
    let base = VENUE_NAMES[index % VENUE_NAMES.len()];
    if index < VENUE_NAMES.len() {
        base.to_string()
    } else {
        format!("{} {}", base, index / VENUE_NAMES.len() + 1)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_sensors: usize,
    pub n_venues: usize,
    pub days: u32,
    pub n_events: usize,
    pub start_date: NaiveDate,
    pub base_level: f64,
    pub daily_amp: f64,
    pub weekly_amp: f64,
    pub noise_sd: f64,
    /// Peak bump added at the venue itself for a level-1.0 event.
    pub bump_amplitude: f64,
    /// e-folding distance of the bump in km.
    pub decay_km: f64,
    /// Gaussian time spread of the ingress/egress peaks, minutes.
    pub time_tau_minutes: f64,
    /// Sensors scatter within this radius of their venue.
    pub max_sensor_km: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_sensors: 20,
            n_venues: 2,
            days: 30,
            n_events: 10,
            start_date: NaiveDate::from_ymd_opt(2019, 3, 1).unwrap(),
            base_level: 32.0,
            daily_amp: 10.0,
            weekly_amp: 3.0,
            noise_sd: 2.0,
            bump_amplitude: 40.0,
            decay_km: 1.2,
            time_tau_minutes: 45.0,
            max_sensor_km: 4.5,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sensors == 0 {
            return Err(Error::Validation("synth: n_sensors must be >= 1".into()));
        }
        if self.n_venues == 0 {
            return Err(Error::Validation("synth: n_venues must be >= 1".into()));
        }
        if self.days < 3 {
            return Err(Error::Validation("synth: days must be >= 3".into()));
        }
        if self.n_events > self.n_venues * (self.days as usize - 2) {
            return Err(Error::Validation(format!(
                "synth: {} events cannot fit {} venues x {} usable days",
                self.n_events,
                self.n_venues,
                self.days - 2
            )));
        }
        if self.decay_km <= 0.0 || self.time_tau_minutes <= 0.0 || self.noise_sd < 0.0 {
            return Err(Error::Validation("synth: nonpositive scale parameter".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthWorld {
    pub graph: SensorGraph,
    pub flows: FlowSeries,
    pub events: Vec<EventRecord>,
    pub tweets: Vec<Tweet>,
    /// Generator metadata: event_id -> attendance level index.
    pub event_levels: BTreeMap<String, usize>,
    pub venue_coords: Vec<LatLon>,
}

/// Closed form of one event's additive flow contribution at a sensor.
pub fn bump_contribution(
    amplitude: f64,
    factor: f64,
    dist_km: f64,
    decay_km: f64,
    tau_minutes: f64,
    ts: DateTime<Utc>,
    start: DateTime<Utc>,
    end: DateTime<Utc>,
) -> f64 {
    let minutes_from = |anchor: DateTime<Utc>| (ts - anchor).num_seconds() as f64 / 60.0;
    let g = |dm: f64| (-dm * dm / (2.0 * tau_minutes * tau_minutes)).exp();
    let tprof = g(minutes_from(start)).max(g(minutes_from(end)));
    amplitude * factor * (-dist_km / decay_km).exp() * tprof
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthWorld> {
    cfg.validate()?;
    let center = LatLon::new(34.05, -118.25);

    // venues spread far enough apart that affected sets stay local
    let venue_coords: Vec<LatLon> = (0..cfg.n_venues)
        .map(|v| offset_km(center, 11.0 * v as f64, 3.0 * (v % 2) as f64))
        .collect();

    // sensors scattered around their venue; the first sensor of each
    // venue is forced close so 2 km coverage always holds
    let mut rng = seeded(child_seed(cfg.seed, "sensors"));
    let mut coords = Vec::with_capacity(cfg.n_sensors);
    let mut sensor_ids = Vec::with_capacity(cfg.n_sensors);
    for i in 0..cfg.n_sensors {
        let v = i % cfg.n_venues;
        let near = i < cfg.n_venues;
        let r_max = if near { 1.0 } else { cfg.max_sensor_km };
        let r = 0.2 + (r_max - 0.2) * rng.random::<f64>().sqrt();
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        coords.push(offset_km(venue_coords[v], r * theta.cos(), r * theta.sin()));
        sensor_ids.push(format!("S{i:03}"));
    }
    let mut graph = SensorGraph::new(sensor_ids, coords)?;
    graph.adjacency = build_adjacency(&graph, 2.0, 0.05)?;

    // per-sensor base-pattern parameters come from the same stream
    struct BaseParams {
        level: f64,
        daily: f64,
        weekly: f64,
        phase: f64,
    }
    let base: Vec<BaseParams> = (0..cfg.n_sensors)
        .map(|_| BaseParams {
            level: cfg.base_level * (0.75 + 0.5 * rng.random::<f64>()),
            daily: cfg.daily_amp * (0.8 + 0.4 * rng.random::<f64>()),
            weekly: cfg.weekly_amp * rng.random::<f64>(),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        })
        .collect();

    // events on unique (venue, day) slots
    let mut erng = seeded(child_seed(cfg.seed, "events"));
    let usable_days = cfg.days as usize - 2;
    let mut taken: BTreeSet<(usize, u32)> = BTreeSet::new();
    let mut events = Vec::with_capacity(cfg.n_events);
    let mut event_levels = BTreeMap::new();
    for e in 0..cfg.n_events {
        let venue = erng.random_range(0..cfg.n_venues);
        let mut day = erng.random_range(1..=usable_days as u32);
        while taken.contains(&(venue, day)) {
            day = day % usable_days as u32 + 1;
        }
        taken.insert((venue, day));
        let date = cfg.start_date + Duration::days(day as i64);
        let start_hour = 17 + erng.random_range(0..3u32);
        let duration_h = 2 + erng.random_range(0..2u32);
        let start_time = Utc
            .from_utc_datetime(&date.and_hms_opt(start_hour, 0, 0).unwrap());
        let end_time = start_time + Duration::hours(duration_h as i64);
        let mut categories = vec![EventCategory::ALL[erng.random_range(0..6)]];
        if erng.random::<f64>() < 0.3 {
            let second = EventCategory::ALL[erng.random_range(0..6)];
            if second != categories[0] {
                categories.push(second);
            }
        }
        let level = erng.random_range(0..ATTENDANCE_LEVELS.len());
        let figure =
            (((800.0 + 4200.0 * level_factor(level)) * (0.9 + 0.2 * erng.random::<f64>()))
                / 100.0)
                .round() as u64
                * 100;
        let event_id = format!("E{e:03}");
        let name = venue_name(venue);
        let term = category_terms(categories[0])[0];
        let mut raw_text = BTreeMap::new();
        raw_text.insert(
            "calendar".to_string(),
            format!(
                "{} {} at {} on {}, {}:00 to {}:00. Expected attendance around {}, a {} crowd.",
                categories[0].label(),
                term,
                name,
                date,
                start_hour,
                (start_hour + duration_h) % 24,
                figure,
                level_word(level),
            ),
        );
        raw_text.insert(
            "venue_directory".to_string(),
            format!("{name}, Los Angeles, capacity {}", 2000 + 900 * venue),
        );
        event_levels.insert(event_id.clone(), level);
        events.push(EventRecord {
            event_id,
            venue_id: format!("V{venue}"),
            venue_coords: venue_coords[venue],
            date,
            start_time,
            end_time,
            categories,
            raw_text,
        });
    }
    events.sort_by(|a, b| a.date.cmp(&b.date).then(a.event_id.cmp(&b.event_id)));

    // flows: base + weekly + noise, then event bumps, then clamp
    let n_steps = cfg.days as usize * STEPS_PER_DAY;
    let epoch = Utc.from_utc_datetime(&cfg.start_date.and_hms_opt(0, 0, 0).unwrap());
    let mut nrng = seeded(child_seed(cfg.seed, "noise"));
    let normal = Normal::new(0.0, cfg.noise_sd.max(1e-12)).expect("noise dist");
    let mut values = vec![0.0; cfg.n_sensors * n_steps];
    for (i, bp) in base.iter().enumerate() {
        for s in 0..n_steps {
            let frac_day = (s % STEPS_PER_DAY) as f64 / STEPS_PER_DAY as f64;
            let frac_week = (s % (7 * STEPS_PER_DAY)) as f64 / (7 * STEPS_PER_DAY) as f64;
            let mut v = bp.level
                + bp.daily * (std::f64::consts::TAU * (frac_day - 0.25)).sin()
                + bp.weekly * (std::f64::consts::TAU * frac_week + bp.phase).sin();
            if cfg.noise_sd > 0.0 {
                v += normal.sample(&mut nrng);
            }
            values[i * n_steps + s] = v;
        }
    }
    for ev in &events {
        let factor = level_factor(event_levels[&ev.event_id]);
        // contributions are negligible past 6 tau from either anchor
        let margin = Duration::minutes((6.0 * cfg.time_tau_minutes) as i64);
        let lo = ((ev.start_time - margin - epoch).num_seconds() / 300).max(0) as usize;
        let hi = (((ev.end_time + margin - epoch).num_seconds() / 300) + 1)
            .min(n_steps as i64)
            .max(0) as usize;
        for (i, &c) in graph.coords.iter().enumerate() {
            let dist = haversine_km(ev.venue_coords, c);
            for s in lo..hi {
                let ts = epoch + Duration::seconds(s as i64 * 300);
                values[i * n_steps + s] += bump_contribution(
                    cfg.bump_amplitude,
                    factor,
                    dist,
                    cfg.decay_km,
                    cfg.time_tau_minutes,
                    ts,
                    ev.start_time,
                    ev.end_time,
                );
            }
        }
    }
    for v in &mut values {
        *v = v.max(0.0);
    }
    let flows = FlowSeries::new(Tensor::new(vec![cfg.n_sensors, n_steps], values)?, epoch)?;

    // tweets: a few background lines per day plus event chatter
    let mut trng = seeded(child_seed(cfg.seed, "tweets"));
    let mut tweets = Vec::new();
    let mut tid = 0usize;
    let mut push_tweet = |tweets: &mut Vec<Tweet>, text: String, ts: DateTime<Utc>| {
        tweets.push(Tweet {
            id: format!("tw{tid:05}"),
            text,
            created_at: ts,
        });
        tid += 1;
    };
    for day in 0..cfg.days {
        let ts = epoch + Duration::days(day as i64) + Duration::hours(8);
        let road = ["101", "405", "10"][trng.random_range(0..3)];
        push_tweet(
            &mut tweets,
            format!("Traffic on the {road} near downtown is moving along this morning"),
            ts,
        );
    }
    for ev in &events {
        let level = event_levels[&ev.event_id];
        let name = venue_name(
            ev.venue_id[1..].parse::<usize>().expect("venue index"),
        );
        let term = category_terms(ev.primary_category())[trng.random_range(0..2)];
        let adj = level_word(level);
        let n_tw = 3 + 2 * level + trng.random_range(0..4);
        for k in 0..n_tw {
            let back_days = trng.random_range(1..20i64);
            let ts = ev.start_time - Duration::days(back_days)
                + Duration::minutes(trng.random_range(0..600));
            let tag = name.to_lowercase().replace(' ', "");
            let text = match k % 4 {
                0 => format!("{adj} crowd expected at {name} for the {term} #{tag}"),
                1 => format!("So ready for the {term} at {name}! Should be a {adj} one"),
                2 => format!("Heading to {name} for the {term}, see you there"),
                _ => format!("Anyone going to the {term} near Los Angeles this week?"),
            };
            push_tweet(&mut tweets, text, ts);
        }
    }

    Ok(SynthWorld {
        graph,
        flows,
        events,
        tweets,
        event_levels,
        venue_coords,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = SynthConfig {
            n_sensors: 8,
            n_events: 4,
            days: 12,
            ..Default::default()
        };
        let a = synth_generate(&cfg).unwrap();
        let b = synth_generate(&cfg).unwrap();
        assert_eq!(a.flows.values, b.flows.values);
        assert_eq!(
            serde_json::to_string(&a.events).unwrap(),
            serde_json::to_string(&b.events).unwrap()
        );
        assert_eq!(a.tweets.len(), b.tweets.len());
    }

    #[test]
    fn zero_events_means_no_bumps() {
        let mut cfg = SynthConfig {
            n_sensors: 6,
            days: 10,
            noise_sd: 1.5,
            ..Default::default()
        };
        cfg.n_events = 0;
        let quiet = synth_generate(&cfg).unwrap();
        cfg.n_events = 4;
        let busy = synth_generate(&cfg).unwrap();
        // sensor placement and noise come from event-independent streams
        assert_eq!(quiet.graph.coords.len(), busy.graph.coords.len());
        let mut diffs = 0;
        for (q, b) in quiet.flows.values.data().iter().zip(busy.flows.values.data()) {
            assert!(b + 1e-9 >= *q, "bumps are additive and nonnegative");
            if (b - q).abs() > 1e-9 {
                diffs += 1;
            }
        }
        assert!(diffs > 0, "events must actually perturb flows");
    }

    #[test]
    fn bump_peak_matches_closed_form() {
        let cfg = SynthConfig {
            n_sensors: 6,
            days: 10,
            n_events: 3,
            noise_sd: 0.0,
            ..Default::default()
        };
        let busy = synth_generate(&cfg).unwrap();
        let quiet = synth_generate(&SynthConfig {
            n_events: 0,
            ..cfg.clone()
        })
        .unwrap();
        let ev = &busy.events[0];
        let level = busy.event_levels[&ev.event_id];
        // nearest sensor to this venue
        let (si, dist) = busy
            .graph
            .coords
            .iter()
            .enumerate()
            .map(|(i, &c)| (i, haversine_km(ev.venue_coords, c)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        let peak_step = ((ev.start_time - busy.flows.epoch_start).num_seconds() / 300) as usize;
        let got = busy.flows.value(si, peak_step) - quiet.flows.value(si, peak_step);
        // other events' bumps are zero at this step by slot uniqueness
        let mut want = 0.0;
        for other in &busy.events {
            want += bump_contribution(
                cfg.bump_amplitude,
                level_factor(busy.event_levels[&other.event_id]),
                haversine_km(other.venue_coords, busy.graph.coords[si]),
                cfg.decay_km,
                cfg.time_tau_minutes,
                ev.start_time,
                other.start_time,
                other.end_time,
            );
        }
        assert!((got - want).abs() < 1e-9, "got {got}, want {want}");
        let solo = bump_contribution(
            cfg.bump_amplitude,
            level_factor(level),
            dist,
            cfg.decay_km,
            cfg.time_tau_minutes,
            ev.start_time,
            ev.start_time,
            ev.end_time,
        );
        assert!(
            (solo - cfg.bump_amplitude * level_factor(level) * (-dist / cfg.decay_km).exp()).abs()
                < 1e-12
        );
    }

    #[test]
    fn flows_stay_nonnegative() {
        let cfg = SynthConfig {
            n_sensors: 5,
            days: 8,
            n_events: 3,
            noise_sd: 25.0,
            ..Default::default()
        };
        let world = synth_generate(&cfg).unwrap();
        assert!(world.flows.values.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn config_validation() {
        let cfg = SynthConfig {
            n_sensors: 0,
            ..Default::default()
        };
        assert!(synth_generate(&cfg).is_err());
    }
}
