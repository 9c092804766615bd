use crate::error::{CtError, Result};
use crate::geometry::ParallelGeometry;

/// Projection values `p(theta, s)`, row-major `[angle][detector]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    geometry: ParallelGeometry,
    data: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(geometry: ParallelGeometry) -> Self {
        let n = geometry.n_rays();
        Sinogram { geometry, data: vec![0.0; n] }
    }

    pub fn filled(geometry: ParallelGeometry, value: f64) -> Self {
        let n = geometry.n_rays();
        Sinogram { geometry, data: vec![value; n] }
    }

    pub fn from_vec(geometry: ParallelGeometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != geometry.n_rays() {
            return Err(CtError::DimensionMismatch(format!(
                "sinogram data has {} values, geometry needs {} angles x {} detectors = {}",
                data.len(),
                geometry.n_angles(),
                geometry.n_detectors(),
                geometry.n_rays()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(CtError::InvalidArgument(format!("sinogram value {k} is not finite ({})", data[k])));
        }
        Ok(Sinogram { geometry, data })
    }

    pub fn geometry(&self) -> &ParallelGeometry {
        &self.geometry
    }

    pub fn n_angles(&self) -> usize {
        self.geometry.n_angles()
    }

    pub fn n_detectors(&self) -> usize {
        self.geometry.n_detectors()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, angle: usize) -> &[f64] {
        let nd = self.n_detectors();
        &self.data[angle * nd..(angle + 1) * nd]
    }

    pub fn get(&self, angle: usize, detector: usize) -> f64 {
        self.data[angle * self.n_detectors() + detector]
    }

    pub fn dot(&self, other: &Sinogram) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, factor: f64) -> Sinogram {
        Sinogram { geometry: self.geometry.clone(), data: self.data.iter().map(|v| v * factor).collect() }
    }
}
