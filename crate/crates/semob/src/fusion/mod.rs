//! The progressive text/time-series fusion model: spatiotemporal
//! encoding, dynamic contextual encoding, contextual mobility
//! projection, the output head, training, checkpoints, and the six
//! ablation variants.

pub mod checkpoint;
pub mod model;
pub mod params;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::{
    time_indices, ForwardOptions, ForwardOutput, Introspection, IntrospectionRow, SampleInput,
    TstModel,
};
pub use params::{init_params, InfluenceAxis, Param, ParamLeafs, ParamSet, TstConfig, VariantKind};
pub use train::{prepare_samples, train, TrainOutcome, TrainSample};
