//! Flow series on the fixed 5-minute grid.

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const STEP_SECONDS: i64 = 300;
pub const STEPS_PER_HOUR: usize = 12;
pub const STEPS_PER_DAY: usize = 288;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowSeries {
    /// N×T_total vehicles per 5-minute slice, nonnegative.
    pub values: Tensor,
    pub epoch_start: DateTime<Utc>,
    pub step_seconds: u32,
}

impl FlowSeries {
    pub fn new(values: Tensor, epoch_start: DateTime<Utc>) -> Result<Self> {
        if values.data().iter().any(|&v| v < 0.0) {
            return Err(Error::Data("flow values must be nonnegative".into()));
        }
        Ok(FlowSeries {
            values,
            epoch_start,
            step_seconds: STEP_SECONDS as u32,
        })
    }

    pub fn n_sensors(&self) -> usize {
        self.values.rows()
    }

    pub fn n_steps(&self) -> usize {
        self.values.cols()
    }

    pub fn timestamp(&self, step: usize) -> DateTime<Utc> {
        self.epoch_start + Duration::seconds(step as i64 * STEP_SECONDS)
    }

    /// First grid step with timestamp >= ts (may exceed `n_steps`).
    pub fn step_at_or_after(&self, ts: DateTime<Utc>) -> i64 {
        let secs = (ts - self.epoch_start).num_seconds();
        secs.div_euclid(STEP_SECONDS) + if secs.rem_euclid(STEP_SECONDS) == 0 { 0 } else { 1 }
    }

    pub fn value(&self, sensor: usize, step: usize) -> f64 {
        self.values.at(sensor, step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn grid_round_trip() {
        let epoch = Utc.with_ymd_and_hms(2019, 3, 1, 0, 0, 0).unwrap();
        let f = FlowSeries::new(Tensor::zeros(vec![2, 10]), epoch).unwrap();
        assert_eq!(f.timestamp(0), epoch);
        assert_eq!(f.step_at_or_after(f.timestamp(7)), 7);
        let mid = epoch + Duration::seconds(7 * 300 + 1);
        assert_eq!(f.step_at_or_after(mid), 8);
    }

    #[test]
    fn negative_values_rejected() {
        let epoch = Utc.with_ymd_and_hms(2019, 3, 1, 0, 0, 0).unwrap();
        let t = Tensor::matrix(1, 2, vec![1.0, -0.5]).unwrap();
        assert!(FlowSeries::new(t, epoch).is_err());
    }
}
