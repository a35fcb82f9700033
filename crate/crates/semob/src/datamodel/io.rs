//! File formats: sensors.csv, flows.csv (long format), events.jsonl,
//! tweets.jsonl, splits.json.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::datamodel::events::{EventRecord, Tweet};
use crate::datamodel::flows::{FlowSeries, STEP_SECONDS};
use crate::datamodel::geo::LatLon;
use crate::datamodel::graph::SensorGraph;
use crate::datamodel::partition::Partition;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Impute {
    None,
    ForwardFill,
}

fn io_err<T>(path: &Path, e: std::io::Error) -> Result<T> {
    Err(Error::io(path.display().to_string(), e))
}

pub fn write_sensors_csv(path: &Path, graph: &SensorGraph) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    w.write_record(["sensor_id", "lat", "lon"])
        .map_err(|e| Error::Data(e.to_string()))?;
    for (id, c) in graph.sensor_ids.iter().zip(&graph.coords) {
        w.write_record([id.as_str(), &c.lat.to_string(), &c.lon.to_string()])
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| io_err::<()>(path, e).unwrap_err())?;
    Ok(())
}

pub fn read_sensors_csv(path: &Path) -> Result<SensorGraph> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut ids = Vec::new();
    let mut coords = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if rec.len() != 3 {
            return Err(Error::Data(format!(
                "{}: sensors.csv row wants 3 fields, got {}",
                path.display(),
                rec.len()
            )));
        }
        ids.push(rec[0].to_string());
        let lat: f64 = rec[1]
            .parse()
            .map_err(|e| Error::Data(format!("{}: bad lat {:?}: {e}", path.display(), &rec[1])))?;
        let lon: f64 = rec[2]
            .parse()
            .map_err(|e| Error::Data(format!("{}: bad lon {:?}: {e}", path.display(), &rec[2])))?;
        coords.push(LatLon::new(lat, lon));
    }
    SensorGraph::new(ids, coords)
}

pub fn write_flows_csv(path: &Path, graph: &SensorGraph, flows: &FlowSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    w.write_record(["timestamp_utc", "sensor_id", "flow"])
        .map_err(|e| Error::Data(e.to_string()))?;
    for step in 0..flows.n_steps() {
        let ts = flows.timestamp(step).to_rfc3339();
        for (i, id) in graph.sensor_ids.iter().enumerate() {
            w.write_record([ts.as_str(), id.as_str(), &flows.value(i, step).to_string()])
                .map_err(|e| Error::Data(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| io_err::<()>(path, e).unwrap_err())?;
    Ok(())
}

/// Pivot the long-format flows file onto the sensor order of `graph`.
/// Grid gaps are rejected unless `Impute::ForwardFill` is requested.
pub fn read_flows_csv(path: &Path, graph: &SensorGraph, impute: Impute) -> Result<FlowSeries> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let index: std::collections::HashMap<&str, usize> = graph
        .sensor_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut cells: Vec<(DateTime<Utc>, usize, f64)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let ts = DateTime::parse_from_rfc3339(&rec[0])
            .map_err(|e| Error::Data(format!("{}: bad timestamp {:?}: {e}", path.display(), &rec[0])))?
            .with_timezone(&Utc);
        let sensor = *index.get(&rec[1]).ok_or_else(|| {
            Error::Data(format!("{}: unknown sensor id {:?}", path.display(), &rec[1]))
        })?;
        let flow: f64 = rec[2]
            .parse()
            .map_err(|e| Error::Data(format!("{}: bad flow {:?}: {e}", path.display(), &rec[2])))?;
        cells.push((ts, sensor, flow));
    }
    if cells.is_empty() {
        return Err(Error::Data(format!("{}: no flow rows", path.display())));
    }
    let t_min = cells.iter().map(|c| c.0).min().unwrap();
    let t_max = cells.iter().map(|c| c.0).max().unwrap();
    let span = (t_max - t_min).num_seconds();
    if span % STEP_SECONDS != 0 {
        return Err(Error::Data(format!(
            "{}: timestamps are not on the {STEP_SECONDS}s grid",
            path.display()
        )));
    }
    let n_steps = (span / STEP_SECONDS) as usize + 1;
    let n = graph.len();
    let mut grid = vec![f64::NAN; n * n_steps];
    for (ts, sensor, flow) in cells {
        let off = (ts - t_min).num_seconds();
        if off % STEP_SECONDS != 0 {
            return Err(Error::Data(format!(
                "{}: timestamp {ts} off the {STEP_SECONDS}s grid",
                path.display()
            )));
        }
        grid[sensor * n_steps + (off / STEP_SECONDS) as usize] = flow;
    }
    for sensor in 0..n {
        for step in 0..n_steps {
            if grid[sensor * n_steps + step].is_nan() {
                match impute {
                    Impute::ForwardFill if step > 0 => {
                        grid[sensor * n_steps + step] = grid[sensor * n_steps + step - 1];
                    }
                    _ => {
                        return Err(Error::Data(format!(
                            "{}: gap at sensor {} step {} ({}); rerun with --impute=ffill",
                            path.display(),
                            graph.sensor_ids[sensor],
                            step,
                            t_min + chrono::Duration::seconds(step as i64 * STEP_SECONDS),
                        )));
                    }
                }
            }
        }
    }
    FlowSeries::new(Tensor::new(vec![n, n_steps], grid)?, t_min)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut f = match fs::File::create(path) {
        Ok(f) => f,
        Err(e) => return io_err(path, e),
    };
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::Data(e.to_string()))?;
        if let Err(e) = writeln!(f, "{line}") {
            return io_err(path, e);
        }
    }
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) => return io_err(path, e),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = match line {
            Ok(l) => l,
            Err(e) => return io_err(path, e),
        };
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|e| {
            Error::Data(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_events_jsonl(path: &Path, events: &[EventRecord]) -> Result<()> {
    write_jsonl(path, events)
}

pub fn read_events_jsonl(path: &Path) -> Result<Vec<EventRecord>> {
    let events: Vec<EventRecord> = read_jsonl(path)?;
    for ev in &events {
        ev.validate()?;
    }
    Ok(events)
}

pub fn write_tweets_jsonl(path: &Path, tweets: &[Tweet]) -> Result<()> {
    write_jsonl(path, tweets)
}

pub fn read_tweets_jsonl(path: &Path) -> Result<Vec<Tweet>> {
    read_jsonl(path)
}

pub fn write_splits_json(path: &Path, partition: &Partition) -> Result<()> {
    let json = serde_json::to_string_pretty(partition).map_err(|e| Error::Data(e.to_string()))?;
    match fs::write(path, json) {
        Ok(()) => Ok(()),
        Err(e) => io_err(path, e),
    }
}

pub fn read_splits_json(path: &Path) -> Result<Partition> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return io_err(path, e),
    };
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}
