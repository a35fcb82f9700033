//! Sensor networks, the distance-kernel adjacency, and radius queries
//! around venues.

use serde::{Deserialize, Serialize};

use crate::datamodel::geo::{haversine_km, initial_bearing_rad, LatLon};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SensorGraph {
    pub sensor_ids: Vec<String>,
    pub coords: Vec<LatLon>,
    /// N×N, nonnegative, diagonal 1 once built.
    pub adjacency: Tensor,
}

impl SensorGraph {
    /// New graph with identity adjacency (call [`build_adjacency`] to
    /// fill it from distances).
    pub fn new(sensor_ids: Vec<String>, coords: Vec<LatLon>) -> Result<Self> {
        if sensor_ids.is_empty() || sensor_ids.len() != coords.len() {
            return Err(Error::Validation(format!(
                "sensor graph wants matching nonempty ids/coords, got {}/{}",
                sensor_ids.len(),
                coords.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for id in &sensor_ids {
            if !seen.insert(id.clone()) {
                return Err(Error::Validation(format!("duplicate sensor id {id:?}")));
            }
        }
        for c in &coords {
            c.validate()?;
        }
        let n = sensor_ids.len();
        Ok(SensorGraph {
            sensor_ids,
            coords,
            adjacency: Tensor::identity(n),
        })
    }

    pub fn len(&self) -> usize {
        self.sensor_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensor_ids.is_empty()
    }
}

/// Gaussian distance kernel with a hard threshold:
/// `A[i][j] = exp(-d_km(i,j)^2 / sigma_km^2)` kept when >= threshold,
/// zeroed otherwise; diagonal pinned to 1.
pub fn build_adjacency(graph: &SensorGraph, sigma_km: f64, threshold: f64) -> Result<Tensor> {
    if sigma_km <= 0.0 {
        return Err(Error::Validation(format!("sigma_km must be > 0, got {sigma_km}")));
    }
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::Validation(format!(
            "threshold must be in [0, 1), got {threshold}"
        )));
    }
    for c in &graph.coords {
        c.validate()?;
    }
    let n = graph.len();
    let mut a = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        for j in 0..n {
            let w = if i == j {
                1.0
            } else {
                let d = haversine_km(graph.coords[i], graph.coords[j]);
                let w = (-d * d / (sigma_km * sigma_km)).exp();
                if w >= threshold {
                    w
                } else {
                    0.0
                }
            };
            a.set(i, j, w);
        }
    }
    Ok(a)
}

/// The sensors a venue affects, with per-sensor spatial features.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AffectedSet {
    pub venue_id: String,
    pub radius_km: f64,
    /// Indices into the parent graph, ascending distance then id.
    pub sensor_indices: Vec<usize>,
    pub distances_km: Vec<f64>,
    /// M×3: distance_km, sin(bearing), cos(bearing).
    pub features: Tensor,
    /// M×M row-normalized restriction of the graph adjacency.
    pub sub_adjacency: Tensor,
}

impl AffectedSet {
    pub fn len(&self) -> usize {
        self.sensor_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensor_indices.is_empty()
    }
}

/// All sensors within `radius_km` of the venue, ordered by ascending
/// distance with ties broken by sensor id.
pub fn affected_sensors(
    graph: &SensorGraph,
    venue_id: &str,
    venue: LatLon,
    radius_km: f64,
) -> Result<AffectedSet> {
    if radius_km <= 0.0 {
        return Err(Error::Validation(format!(
            "radius_km must be > 0, got {radius_km}"
        )));
    }
    venue.validate()?;
    let mut hits: Vec<(usize, f64)> = graph
        .coords
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| {
            let d = haversine_km(venue, c);
            (d <= radius_km).then_some((i, d))
        })
        .collect();
    if hits.is_empty() {
        return Err(Error::NoCoveredSensors {
            venue_id: venue_id.to_string(),
            radius_km,
        });
    }
    hits.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .unwrap()
            .then_with(|| graph.sensor_ids[a.0].cmp(&graph.sensor_ids[b.0]))
    });

    let m = hits.len();
    let mut features = Tensor::zeros(vec![m, 3]);
    for (row, &(i, d)) in hits.iter().enumerate() {
        let bearing = initial_bearing_rad(venue, graph.coords[i]);
        features.set(row, 0, d);
        features.set(row, 1, bearing.sin());
        features.set(row, 2, bearing.cos());
    }

    let mut sub = Tensor::zeros(vec![m, m]);
    for (r, &(i, _)) in hits.iter().enumerate() {
        let mut row_sum = 0.0;
        for &(j, _) in &hits {
            row_sum += graph.adjacency.at(i, j);
        }
        for (c, &(j, _)) in hits.iter().enumerate() {
            sub.set(r, c, graph.adjacency.at(i, j) / row_sum);
        }
    }

    Ok(AffectedSet {
        venue_id: venue_id.to_string(),
        radius_km,
        sensor_indices: hits.iter().map(|&(i, _)| i).collect(),
        distances_km: hits.iter().map(|&(_, d)| d).collect(),
        features,
        sub_adjacency: sub,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::geo::offset_km;

    fn la() -> LatLon {
        LatLon::new(34.05, -118.25)
    }

    fn grid_graph() -> SensorGraph {
        let coords: Vec<LatLon> = (0..6)
            .map(|i| offset_km(la(), 0.7 * i as f64, 0.0))
            .collect();
        let ids = (0..6).map(|i| format!("S{i:03}")).collect();
        SensorGraph::new(ids, coords).unwrap()
    }

    #[test]
    fn adjacency_diagonal_is_one() {
        let g = grid_graph();
        let a = build_adjacency(&g, 2.0, 0.1).unwrap();
        for i in 0..g.len() {
            assert_eq!(a.at(i, i), 1.0);
        }
    }

    #[test]
    fn adjacency_thresholds_far_pairs() {
        let g = grid_graph();
        // 0 and 5 are 3.5 km apart; sigma 0.5 puts the weight far under 0.1.
        let a = build_adjacency(&g, 0.5, 0.1).unwrap();
        assert_eq!(a.at(0, 5), 0.0);
    }

    #[test]
    fn adjacency_closed_form_one_km() {
        let coords = vec![la(), offset_km(la(), 0.0, 1.0)];
        let g = SensorGraph::new(vec!["a".into(), "b".into()], coords).unwrap();
        let a = build_adjacency(&g, 2.0, 0.0).unwrap();
        // exp(-(1 km)^2 / 4) = exp(-0.25)
        assert!((a.at(0, 1) - 0.7788007830714049).abs() < 1e-9);
    }

    #[test]
    fn adjacency_rejects_bad_coords() {
        let g = SensorGraph {
            sensor_ids: vec!["a".into()],
            coords: vec![LatLon::new(95.0, 0.0)],
            adjacency: Tensor::identity(1),
        };
        assert!(matches!(
            build_adjacency(&g, 1.0, 0.0),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn affected_includes_coincident_sensor_at_zero() {
        let g = grid_graph();
        let set = affected_sensors(&g, "V0", la(), 2.0).unwrap();
        assert_eq!(set.sensor_indices[0], 0);
        assert_eq!(set.distances_km[0], 0.0);
        // sin/cos defined even at distance 0
        assert!((set.features.at(0, 1).powi(2) + set.features.at(0, 2).powi(2) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn affected_matches_haversine_oracle() {
        let g = SensorGraph::new(
            vec!["only".into()],
            vec![LatLon::new(34.05, -118.25)],
        )
        .unwrap();
        let set = affected_sensors(&g, "V0", LatLon::new(34.05, -118.26), 2.0).unwrap();
        assert_eq!(set.len(), 1);
        assert!((set.distances_km[0] - 0.9213060241577776).abs() < 1e-9);
    }

    #[test]
    fn affected_empty_is_an_error() {
        let g = grid_graph();
        let far = offset_km(la(), 50.0, 50.0);
        assert!(matches!(
            affected_sensors(&g, "V0", far, 2.0),
            Err(Error::NoCoveredSensors { .. })
        ));
    }

    #[test]
    fn affected_is_monotone_in_radius() {
        let g = grid_graph();
        let venue = offset_km(la(), 1.2, 0.4);
        let mut prev: Vec<usize> = vec![];
        for r in [2.0, 3.0, 4.0, 5.0] {
            let set = affected_sensors(&g, "V0", venue, r).unwrap();
            let ids: Vec<usize> = set.sensor_indices.clone();
            assert!(prev.iter().all(|i| ids.contains(i)), "radius {r} dropped sensors");
            prev = ids;
        }
    }

    #[test]
    fn feature_rows_are_unit_bearing() {
        let g = grid_graph();
        let venue = offset_km(la(), 0.9, -0.3);
        let set = affected_sensors(&g, "V0", venue, 5.0).unwrap();
        for i in 0..set.len() {
            assert!(set.features.at(i, 0) >= 0.0);
            let s = set.features.at(i, 1);
            let c = set.features.at(i, 2);
            assert!((s * s + c * c - 1.0).abs() < 1e-9);
        }
        // rows ordered by ascending distance
        for w in set.distances_km.windows(2) {
            assert!(w[0] <= w[1]);
        }
        // sub adjacency rows sum to 1
        for i in 0..set.len() {
            let sum: f64 = set.sub_adjacency.row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
