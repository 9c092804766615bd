//! Low-dose CT learning workflows on synthetic data.
//!
//! [`build_dataset`] simulates phantoms, noisy low-dose sinograms and their
//! FBP reconstructions. Two learned approaches are trained from them: a
//! mixed-scale dense network that cleans up FBP images
//! ([`train_denoiser`]) and an AUTOMAP-style network that maps the sinogram
//! straight to an image ([`train_end_to_end`]). [`evaluate`] scores both
//! against plain FBP, and [`estimate_params`] gives the exact size of an
//! end-to-end network for any geometry.

pub mod arch;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod seeds;
pub mod train;

pub use arch::{estimate_params, Arch, AutomapArch, DenoiserArch, ParamEstimate};
pub use dataset::{build_dataset, DatasetConfig, Manifest, PhantomParams, SampleRecord, Split};
pub use error::{PipelineError, Result};
pub use evaluate::{evaluate, EndToEndModel, Method, MetricRow, MetricsTable};
pub use train::{
    automap_for, train_denoiser, train_end_to_end, train_network, TrainConfig, TrainLog, DEFAULT_DENSE_PARAM_LIMIT,
};
