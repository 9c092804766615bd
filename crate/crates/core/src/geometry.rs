//! Parallel-beam acquisition geometry.
//!
//! A ray at angle `theta` has direction `(-sin theta, cos theta)` and sits at
//! signed offset `s` along `(cos theta, sin theta)`. Detector bin `i` is at
//! `s = (i - (n_detectors-1)/2) * detector_spacing`, centred on the rotation
//! axis.

use std::f64::consts::PI;

use crate::error::{CtError, Result};
use crate::grid::GridShape;

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelGeometry {
    angles: Vec<f64>,
    n_detectors: usize,
    detector_spacing: f64,
    image: GridShape,
}

impl ParallelGeometry {
    pub fn new(angles: Vec<f64>, n_detectors: usize, detector_spacing: f64, image: GridShape) -> Result<Self> {
        if angles.is_empty() {
            return Err(CtError::InvalidGeometry("no projection angles".into()));
        }
        for (k, &a) in angles.iter().enumerate() {
            if !(0.0..PI).contains(&a) {
                return Err(CtError::InvalidGeometry(format!("angle {k} = {a} rad is outside [0, pi)")));
            }
        }
        if let Some(k) = angles.windows(2).position(|w| w[1] <= w[0]) {
            return Err(CtError::InvalidGeometry(format!(
                "angles must be strictly increasing (angle {} = {} follows {})",
                k + 1,
                angles[k + 1],
                angles[k]
            )));
        }
        if n_detectors == 0 {
            return Err(CtError::InvalidGeometry("n_detectors must be >= 1".into()));
        }
        if !(detector_spacing > 0.0 && detector_spacing.is_finite()) {
            return Err(CtError::InvalidGeometry(format!("detector_spacing must be positive, got {detector_spacing}")));
        }
        Ok(ParallelGeometry { angles, n_detectors, detector_spacing, image })
    }

    /// `n_angles` equispaced angles `k*pi/n_angles` with the default detector
    /// layout for `image`.
    pub fn equispaced(n_angles: usize, image: GridShape) -> Result<Self> {
        ParallelGeometry::new(
            equispaced_angles(n_angles),
            default_detector_count(image.width, image.height),
            image.pixel_size,
            image,
        )
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn n_detectors(&self) -> usize {
        self.n_detectors
    }

    pub fn detector_spacing(&self) -> f64 {
        self.detector_spacing
    }

    pub fn image(&self) -> GridShape {
        self.image
    }

    /// Number of rays (`n_angles * n_detectors`).
    pub fn n_rays(&self) -> usize {
        self.angles.len() * self.n_detectors
    }

    /// Signed offset of detector bin `i` from the rotation axis.
    pub fn detector_offset(&self, i: usize) -> f64 {
        (i as f64 - self.detector_center()) * self.detector_spacing
    }

    pub(crate) fn detector_center(&self) -> f64 {
        (self.n_detectors as f64 - 1.0) / 2.0
    }

    /// Same angles and detectors bound to a different image grid.
    pub fn with_image(&self, image: GridShape) -> Self {
        ParallelGeometry { image, ..self.clone() }
    }
}

pub fn equispaced_angles(n_angles: usize) -> Vec<f64> {
    (0..n_angles).map(|k| k as f64 * PI / n_angles as f64).collect()
}

/// `ceil(sqrt(2) * max(width, height))`, rounded up to an even count, so the
/// detector spans the image diagonal.
pub fn default_detector_count(width: usize, height: usize) -> usize {
    let n = (std::f64::consts::SQRT_2 * width.max(height) as f64).ceil() as usize;
    n + n % 2
}
