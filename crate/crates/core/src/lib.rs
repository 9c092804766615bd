//! Parallel-beam X-ray CT toolkit.
//!
//! The crate covers the physics and classical reconstruction half of the
//! workspace: image and sinogram containers, a matrix-free Joseph projector
//! with its exact adjoint, photon-count acquisition with Poisson noise,
//! filtered backprojection and SIRT, plus the analytic phantoms and raster
//! file formats shared by the rest of the tools.

pub mod acquisition;
pub mod error;
pub mod fbp;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod projector;
pub mod sinogram;
pub mod sirt;

pub use acquisition::{log_normalize, simulate_intensity, IntensityRecord, ZERO_COUNT_CLAMP};
pub use error::{CtError, Result};
pub use fbp::{fbp_reconstruct, filter_projections, FilterKind, FilterSpec};
pub use geometry::ParallelGeometry;
pub use grid::{GridShape, ImageGrid};
pub use projector::{back_project, build_system_matrix, forward_project, SystemMatrix};
pub use sinogram::Sinogram;
pub use sirt::{sirt_init, sirt_reconstruct, sirt_step, SirtState};
