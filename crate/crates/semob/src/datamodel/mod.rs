//! Sensor graphs, flows, events, window slicing, dataset partitioning,
//! file formats, and the synthetic world generator.

pub mod events;
pub mod flows;
pub mod geo;
pub mod graph;
pub mod io;
pub mod partition;
pub mod synth;
pub mod windows;

pub use events::{EventCategory, EventRecord, Tweet};
pub use flows::FlowSeries;
pub use geo::LatLon;
pub use graph::{affected_sensors, build_adjacency, AffectedSet, SensorGraph};
pub use partition::{partition, Partition, SplitMode, SplitSpec};
pub use synth::{synth_generate, SynthConfig, SynthWorld};
pub use windows::{slice_windows, EventWindow};
