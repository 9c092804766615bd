//! Simultaneous Iterative Reconstruction Technique.
//!
//! One iteration updates every pixel at once:
//!
//! ```text
//! x_j <- x_j + (1 / C_j) * sum_i w_ij (p_i - sum_h w_ih x_h) / R_i
//! ```
//!
//! with row sums `R_i = sum_h w_ih` and column sums `C_j = sum_i w_ij`,
//! both obtained matrix-free by projecting an all-ones image and
//! backprojecting an all-ones sinogram. Rays or pixels whose sum is zero are
//! inactive: they contribute nothing and are never updated.

use crate::error::{CtError, Result};
use crate::grid::ImageGrid;
use crate::projector::{back_project, forward_project};
use crate::sinogram::Sinogram;

#[derive(Debug, Clone)]
pub struct SirtState {
    pub estimate: ImageGrid,
    pub iteration: usize,
    /// `||p - W x_k||_2` for `k = 0..=iteration`.
    pub residual_history: Vec<f64>,
    pub row_sums: Vec<f64>,
    pub col_sums: Vec<f64>,
    /// `p - W x_k` for the current estimate.
    residual: Vec<f64>,
}

impl SirtState {
    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn active_rays(&self) -> usize {
        self.row_sums.iter().filter(|&&r| r > 0.0).count()
    }

    pub fn active_pixels(&self) -> usize {
        self.col_sums.iter().filter(|&&c| c > 0.0).count()
    }

    /// Latest residual norm divided by the initial one (0 when both vanish).
    pub fn relative_residual(&self) -> f64 {
        let first = self.residual_history[0];
        let last = *self.residual_history.last().expect("history starts non-empty");
        if first > 0.0 {
            last / first
        } else {
            0.0
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual_of(estimate: &ImageGrid, sino: &Sinogram) -> Result<Vec<f64>> {
    let predicted = forward_project(estimate, sino.geometry())?;
    Ok(sino.data().iter().zip(predicted.data()).map(|(p, q)| p - q).collect())
}

/// Start from an all-zero estimate.
pub fn sirt_init(sino: &Sinogram) -> Result<SirtState> {
    sirt_init_from(sino, ImageGrid::zeros(sino.geometry().image()))
}

/// Start from a caller-supplied estimate.
pub fn sirt_init_from(sino: &Sinogram, estimate: ImageGrid) -> Result<SirtState> {
    let geom = sino.geometry();
    let shape = geom.image();
    let row_sums = forward_project(&ImageGrid::filled(shape, 1.0), geom)?.into_vec();
    let col_sums = back_project(&Sinogram::filled(geom.clone(), 1.0))?.into_vec();
    let residual = residual_of(&estimate, sino)?;
    Ok(SirtState { estimate, iteration: 0, residual_history: vec![norm(&residual)], row_sums, col_sums, residual })
}

/// The additive SIRT correction for the current residual, without applying it.
pub fn sirt_update(state: &SirtState, sino: &Sinogram) -> Result<ImageGrid> {
    let normalized: Vec<f64> =
        state.residual.iter().zip(&state.row_sums).map(|(&r, &sum)| if sum > 0.0 { r / sum } else { 0.0 }).collect();
    let mut update = back_project(&Sinogram::from_vec(sino.geometry().clone(), normalized)?)?;
    for (u, &c) in update.data_mut().iter_mut().zip(&state.col_sums) {
        *u = if c > 0.0 { *u / c } else { 0.0 };
    }
    Ok(update)
}

/// One SIRT iteration. `sino` must be the sinogram the state was initialised
/// with. With `nonneg` the estimate is clamped at zero after the update.
pub fn sirt_step(mut state: SirtState, sino: &Sinogram, nonneg: bool) -> Result<SirtState> {
    if state.residual.len() != sino.data().len() {
        return Err(CtError::DimensionMismatch("sinogram does not match the SIRT state".into()));
    }
    let update = sirt_update(&state, sino)?;
    for (x, u) in state.estimate.data_mut().iter_mut().zip(update.data()) {
        *x += u;
        if nonneg && *x < 0.0 {
            *x = 0.0;
        }
    }
    state.residual = residual_of(&state.estimate, sino)?;
    state.residual_history.push(norm(&state.residual));
    state.iteration += 1;
    Ok(state)
}

/// Run up to `n_iter` iterations from zero, stopping early once the relative
/// residual falls below `tol` (when given and positive).
pub fn sirt_reconstruct(
    sino: &Sinogram,
    n_iter: usize,
    nonneg: bool,
    tol: Option<f64>,
) -> Result<(ImageGrid, SirtState)> {
    if n_iter == 0 {
        return Err(CtError::InvalidArgument("SIRT needs at least one iteration".into()));
    }
    let mut state = sirt_init(sino)?;
    for _ in 0..n_iter {
        state = sirt_step(state, sino, nonneg)?;
        if let Some(tol) = tol.filter(|&t| t > 0.0) {
            if state.relative_residual() < tol {
                break;
            }
        }
    }
    Ok((state.estimate.clone(), state))
}

/// `iteration,residual` lines with a header row.
pub fn residual_csv(state: &SirtState) -> String {
    let mut out = String::from("iteration,residual\n");
    for (k, r) in state.residual_history.iter().enumerate() {
        out.push_str(&format!("{k},{r:e}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ParallelGeometry;
    use crate::grid::GridShape;
    use crate::phantom::shepp_logan;

    #[test]
    fn zero_sinogram_has_zero_residual() {
        let geom = ParallelGeometry::equispaced(5, GridShape::square(8).unwrap()).unwrap();
        let state = sirt_init(&Sinogram::zeros(geom)).unwrap();
        assert_eq!(state.residual_history, vec![0.0]);
        assert_eq!(state.relative_residual(), 0.0);
    }

    #[test]
    fn rays_missing_the_grid_are_inactive() {
        let shape = GridShape::square(8).unwrap();
        // 20 detectors at spacing 1 overhang the 8-pixel grid at theta = 0
        let geom = ParallelGeometry::new(vec![0.0], 20, 1.0, shape).unwrap();
        let state = sirt_init(&Sinogram::zeros(geom)).unwrap();
        assert_eq!(state.row_sums[0], 0.0);
        assert!(state.row_sums[10] > 0.0);
        assert!(state.active_rays() < 20);
        assert_eq!(state.active_pixels(), 64);
    }

    #[test]
    fn single_pixel_single_ray_is_solved_in_one_step() {
        let shape = GridShape::new(1, 1, 0.6).unwrap();
        let geom = ParallelGeometry::new(vec![0.0], 1, 0.6, shape).unwrap();
        let sino = Sinogram::from_vec(geom, vec![1.5]).unwrap();
        let (x, state) = sirt_reconstruct(&sino, 1, false, None).unwrap();
        // weight w = 0.6, so x = p / w
        assert!((x.data()[0] - 1.5 / 0.6).abs() < 1e-12);
        assert!(state.residual_history[1].abs() < 1e-12);
    }

    #[test]
    fn consistent_data_is_a_fixed_point() {
        let shape = GridShape::square(16).unwrap();
        let geom = ParallelGeometry::equispaced(10, shape).unwrap();
        let truth = shepp_logan(16).unwrap();
        let sino = forward_project(&truth, &geom).unwrap();
        let state = sirt_init_from(&sino, truth.clone()).unwrap();
        let update = sirt_update(&state, &sino).unwrap();
        assert!(update.data().iter().all(|u| u.abs() < 1e-12));
    }

    #[test]
    fn rejects_zero_iterations() {
        let geom = ParallelGeometry::equispaced(3, GridShape::square(8).unwrap()).unwrap();
        assert!(sirt_reconstruct(&Sinogram::zeros(geom), 0, false, None).is_err());
    }

    #[test]
    fn nonneg_clamp_keeps_estimate_nonnegative() {
        let shape = GridShape::square(16).unwrap();
        let geom = ParallelGeometry::equispaced(6, shape).unwrap();
        let sino = forward_project(&shepp_logan(16).unwrap(), &geom).unwrap();
        let (x, _) = sirt_reconstruct(&sino, 20, true, None).unwrap();
        assert!(x.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn tolerance_stops_early() {
        let shape = GridShape::square(16).unwrap();
        let geom = ParallelGeometry::equispaced(20, shape).unwrap();
        let sino = forward_project(&shepp_logan(16).unwrap(), &geom).unwrap();
        let (_, state) = sirt_reconstruct(&sino, 500, false, Some(0.1)).unwrap();
        assert!(state.iteration < 500);
        assert!(state.relative_residual() < 0.1);
        assert_eq!(state.residual_history.len(), state.iteration + 1);
        let csv = residual_csv(&state);
        assert!(csv.starts_with("iteration,residual\n0,"));
        assert_eq!(csv.lines().count(), state.iteration + 2);
    }
}
