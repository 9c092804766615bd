//! Joseph-style ray-driven projector and its exact adjoint.
//!
//! Each ray is marched along whichever image axis it is most aligned with,
//! one pixel line per step. On every line the ray crossing is linearly
//! interpolated between the two neighbouring pixels, and the step length
//! (`pixel_size / |cos|` or `pixel_size / |sin|`) scales the weight. The
//! weights `w_ij` are never stored except by [`build_system_matrix`], which
//! enumerates exactly the same coefficients for small oracle problems.
//!
//! [`back_project`] is written as a gather over pixels: for every pixel and
//! angle it finds the handful of rays whose footprint touches the pixel and
//! recomputes their weights with the same arithmetic as the forward pass.
//! That keeps the adjoint exact and the result independent of how many
//! worker threads run.

use rayon::prelude::*;

use crate::error::{CtError, Result};
use crate::geometry::ParallelGeometry;
use crate::grid::{GridShape, ImageGrid};
use crate::sinogram::Sinogram;

/// Upper bound on `rows * cols` for an explicit system matrix.
pub const SYSTEM_MATRIX_CELL_LIMIT: u128 = 1 << 26;

/// Per-angle marching parameters.
#[derive(Debug, Clone, Copy)]
struct RayAngle {
    sin: f64,
    cos: f64,
    /// March over rows (interpolating across columns) when the ray is closer
    /// to vertical, otherwise over columns.
    along_rows: bool,
    step: f64,
}

impl RayAngle {
    fn new(theta: f64, pixel_size: f64) -> Self {
        let (sin, cos) = theta.sin_cos();
        let along_rows = cos.abs() >= sin.abs();
        let step = if along_rows { pixel_size / cos.abs() } else { pixel_size / sin.abs() };
        RayAngle { sin, cos, along_rows, step }
    }

    fn n_lines(&self, shape: &GridShape) -> usize {
        if self.along_rows {
            shape.height
        } else {
            shape.width
        }
    }

    fn n_across(&self, shape: &GridShape) -> usize {
        if self.along_rows {
            shape.width
        } else {
            shape.height
        }
    }

    /// Fractional pixel index across the marching direction where the ray
    /// with offset `s` crosses line `line`.
    #[inline]
    fn crossing(&self, shape: &GridShape, s: f64, line: usize) -> f64 {
        if self.along_rows {
            let y = shape.y_of_row(line);
            (s - y * self.sin) / (self.cos * shape.pixel_size) + shape.center_col()
        } else {
            let x = shape.x_of_col(line);
            shape.center_row() - (s - x * self.cos) / (self.sin * shape.pixel_size)
        }
    }

    /// Detector offset whose ray crosses `line` at fractional index `t`.
    #[inline]
    fn offset_for(&self, shape: &GridShape, t: f64, line: usize) -> f64 {
        if self.along_rows {
            let y = shape.y_of_row(line);
            (t - shape.center_col()) * self.cos * shape.pixel_size + y * self.sin
        } else {
            let x = shape.x_of_col(line);
            (shape.center_row() - t) * self.sin * shape.pixel_size + x * self.cos
        }
    }

    #[inline]
    fn pixel(&self, shape: &GridShape, line: usize, across: usize) -> usize {
        if self.along_rows {
            line * shape.width + across
        } else {
            across * shape.width + line
        }
    }

    /// Visit the nonzero-or-boundary weights of one ray in marching order.
    #[inline]
    fn for_each_weight(&self, shape: &GridShape, s: f64, mut visit: impl FnMut(usize, f64)) {
        let n_across = self.n_across(shape) as i64;
        for line in 0..self.n_lines(shape) {
            let t = self.crossing(shape, s, line);
            let lower = t.floor();
            let a0 = lower as i64;
            if a0 < -1 || a0 >= n_across {
                continue;
            }
            let frac = t - lower;
            if a0 >= 0 {
                visit(self.pixel(shape, line, a0 as usize), self.step * (1.0 - frac));
            }
            if a0 + 1 < n_across {
                visit(self.pixel(shape, line, (a0 + 1) as usize), self.step * frac);
            }
        }
    }
}

fn check_image(image: &ImageGrid, geom: &ParallelGeometry) -> Result<()> {
    let expected = geom.image();
    if image.shape() != expected {
        return Err(CtError::DimensionMismatch(format!(
            "image is {}x{} (pixel {}), geometry expects {}x{} (pixel {})",
            image.width(),
            image.height(),
            image.pixel_size(),
            expected.width,
            expected.height,
            expected.pixel_size
        )));
    }
    Ok(())
}

/// Line integrals of `image` along every ray of `geom`.
pub fn forward_project(image: &ImageGrid, geom: &ParallelGeometry) -> Result<Sinogram> {
    check_image(image, geom)?;
    let shape = geom.image();
    let nd = geom.n_detectors();
    let x = image.data();
    let mut out = vec![0.0; geom.n_rays()];
    out.par_chunks_mut(nd).zip(geom.angles().par_iter()).for_each(|(row, &theta)| {
        let ray = RayAngle::new(theta, shape.pixel_size);
        for (i, value) in row.iter_mut().enumerate() {
            let s = geom.detector_offset(i);
            let mut acc = 0.0;
            ray.for_each_weight(&shape, s, |j, w| acc += w * x[j]);
            *value = acc;
        }
    });
    Sinogram::from_vec(geom.clone(), out)
}

/// Exact transpose of [`forward_project`].
pub fn back_project(sino: &Sinogram) -> Result<ImageGrid> {
    let geom = sino.geometry();
    let shape = geom.image();
    let nd = geom.n_detectors();
    let rays: Vec<RayAngle> = geom.angles().iter().map(|&theta| RayAngle::new(theta, shape.pixel_size)).collect();
    let y = sino.data();
    let mut out = vec![0.0; shape.len()];
    out.par_chunks_mut(shape.width).enumerate().for_each(|(row, out_row)| {
        for (col, value) in out_row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, ray) in rays.iter().enumerate() {
                let (line, across) = if ray.along_rows { (row, col) } else { (col, row) };
                let projections = &y[k * nd..(k + 1) * nd];
                acc += gather_pixel(ray, geom, &shape, line, across, projections);
            }
            *value = acc;
        }
    });
    ImageGrid::from_vec(shape, out)
}

/// Sum of `w_ij * y_i` over the rays of one angle touching pixel `(line, across)`.
fn gather_pixel(
    ray: &RayAngle,
    geom: &ParallelGeometry,
    shape: &GridShape,
    line: usize,
    across: usize,
    projections: &[f64],
) -> f64 {
    let nd = geom.n_detectors();
    let a = across as f64;
    let d_lo = ray.offset_for(shape, a - 1.0, line) / geom.detector_spacing() + geom.detector_center();
    let d_hi = ray.offset_for(shape, a + 1.0, line) / geom.detector_spacing() + geom.detector_center();
    let lo = (d_lo.min(d_hi).floor() - 1.0).max(0.0);
    let hi = (d_lo.max(d_hi).ceil() + 1.0).min(nd as f64 - 1.0);
    if hi < lo {
        return 0.0;
    }
    let target = across as i64;
    let mut acc = 0.0;
    for (i, &p) in projections.iter().enumerate().take(hi as usize + 1).skip(lo as usize) {
        let t = ray.crossing(shape, geom.detector_offset(i), line);
        let lower = t.floor();
        let a0 = lower as i64;
        let frac = t - lower;
        if a0 == target {
            acc += ray.step * (1.0 - frac) * p;
        } else if a0 + 1 == target {
            acc += ray.step * frac * p;
        }
    }
    acc
}

/// Explicit sparse form of the projector, for oracle-scale problems.
#[derive(Debug, Clone)]
pub struct SystemMatrix {
    pub rows: usize,
    pub cols: usize,
    /// `(ray index, pixel index, weight)`, ray-major in marching order.
    pub entries: Vec<(usize, usize, f64)>,
}

impl SystemMatrix {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "vector length must equal column count");
        let mut out = vec![0.0; self.rows];
        for &(i, j, w) in &self.entries {
            out[i] += w * x[j];
        }
        out
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "vector length must equal row count");
        let mut out = vec![0.0; self.cols];
        for &(i, j, w) in &self.entries {
            out[j] += w * y[i];
        }
        out
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.rows * self.cols];
        for &(i, j, w) in &self.entries {
            dense[i * self.cols + j] += w;
        }
        dense
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.apply(&vec![1.0; self.cols])
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.apply_transpose(&vec![1.0; self.rows])
    }
}

pub fn build_system_matrix(geom: &ParallelGeometry) -> Result<SystemMatrix> {
    let shape = geom.image();
    let rows = geom.n_rays();
    let cols = shape.len();
    let cells = rows as u128 * cols as u128;
    if cells > SYSTEM_MATRIX_CELL_LIMIT {
        return Err(CtError::SizeGuard { rows, cols, cells, limit: SYSTEM_MATRIX_CELL_LIMIT });
    }
    let nd = geom.n_detectors();
    let mut entries = Vec::new();
    for (k, &theta) in geom.angles().iter().enumerate() {
        let ray = RayAngle::new(theta, shape.pixel_size);
        for i in 0..nd {
            let s = geom.detector_offset(i);
            ray.for_each_weight(&shape, s, |j, w| {
                if w != 0.0 {
                    entries.push((k * nd + i, j, w));
                }
            });
        }
    }
    Ok(SystemMatrix { rows, cols, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(shape: GridShape, rng: &mut ChaCha8Rng) -> ImageGrid {
        ImageGrid::from_fn(shape, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_sino(geom: &ParallelGeometry, rng: &mut ChaCha8Rng) -> Sinogram {
        let data = (0..geom.n_rays()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Sinogram::from_vec(geom.clone(), data).unwrap()
    }

    #[test]
    fn zero_in_zero_out() {
        let shape = GridShape::square(12).unwrap();
        let geom = ParallelGeometry::equispaced(7, shape).unwrap();
        let sino = forward_project(&ImageGrid::zeros(shape), &geom).unwrap();
        assert!(sino.data().iter().all(|&v| v == 0.0));
        let img = back_project(&Sinogram::zeros(geom)).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn axis_aligned_chord_through_unit_square() {
        let shape = GridShape::square(16).unwrap();
        let geom = ParallelGeometry::new(vec![0.0], 24, 1.0, shape).unwrap();
        let sino = forward_project(&ImageGrid::filled(shape, 1.0), &geom).unwrap();
        // bins 11 and 12 straddle the axis at s = -0.5 and +0.5
        assert!((sino.get(0, 11) - 16.0).abs() < 1e-6);
        assert!((sino.get(0, 12) - 16.0).abs() < 1e-6);
        // a ray outside the grid sees nothing
        assert_eq!(sino.get(0, 0), 0.0);
    }

    #[test]
    fn rejects_mismatched_image() {
        let geom = ParallelGeometry::equispaced(3, GridShape::square(8).unwrap()).unwrap();
        let img = ImageGrid::zeros(GridShape::square(9).unwrap());
        assert!(matches!(forward_project(&img, &geom), Err(CtError::DimensionMismatch(_))));
    }

    #[test]
    fn single_pixel_single_ray_weight_is_pixel_size() {
        let shape = GridShape::new(1, 1, 0.75).unwrap();
        let geom = ParallelGeometry::new(vec![0.0], 1, 0.75, shape).unwrap();
        let m = build_system_matrix(&geom).unwrap();
        assert_eq!(m.entries, vec![(0, 0, 0.75)]);
    }

    #[test]
    fn system_matrix_guard() {
        let geom = ParallelGeometry::equispaced(180, GridShape::square(256).unwrap()).unwrap();
        assert!(matches!(build_system_matrix(&geom), Err(CtError::SizeGuard { .. })));
    }

    #[test]
    fn system_matrix_matches_matrix_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let shape = GridShape::square(16).unwrap();
        let geom = ParallelGeometry::equispaced(12, shape).unwrap();
        let m = build_system_matrix(&geom).unwrap();
        assert!(m.entries.iter().all(|e| e.2 >= 0.0 && e.2.is_finite()));
        let img = random_image(shape, &mut rng);
        let dense = m.apply(img.data());
        let free = forward_project(&img, &geom).unwrap();
        for (a, b) in dense.iter().zip(free.data()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let y = random_sino(&geom, &mut rng);
        let bt = m.apply_transpose(y.data());
        let free_bt = back_project(&y).unwrap();
        for (a, b) in bt.iter().zip(free_bt.data()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn adjoint_dot_product_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shape = GridShape::square(32).unwrap();
        let geom = ParallelGeometry::equispaced(24, shape).unwrap();
        for _ in 0..5 {
            let x = random_image(shape, &mut rng);
            let y = random_sino(&geom, &mut rng);
            let lhs = forward_project(&x, &geom).unwrap().dot(&y);
            let rhs = x.dot(&back_project(&y).unwrap());
            assert!((lhs - rhs).abs() <= 1e-6 * lhs.abs().max(rhs.abs()));
        }
    }

    #[test]
    fn single_ray_footprint_is_one_column_pair() {
        // At theta = 0 the ray for bin i is the vertical line x = s_i.
        let shape = GridShape::square(10).unwrap();
        let geom = ParallelGeometry::new(vec![0.0], 14, 1.0, shape).unwrap();
        let mut sino = Sinogram::zeros(geom.clone());
        // s = (5 - 6.5) = -1.5 -> column index 3.0 exactly
        sino.data_mut()[5] = 1.0;
        let img = back_project(&sino).unwrap();
        for row in 0..10 {
            for col in 0..10 {
                let v = img.get(row, col);
                if col == 3 {
                    assert!((v - 1.0).abs() < 1e-12);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
        // a single centred bin (s = 0) crosses column index 4.5
        let geom = ParallelGeometry::new(vec![0.0], 1, 1.0, shape).unwrap();
        let sino = Sinogram::from_vec(geom, vec![1.0]).unwrap();
        let img = back_project(&sino).unwrap();
        for row in 0..10 {
            assert!((img.get(row, 4) - 0.5).abs() < 1e-12);
            assert!((img.get(row, 5) - 0.5).abs() < 1e-12);
            let rest: f64 = (0..10).filter(|c| *c != 4 && *c != 5).map(|c| img.get(row, c).abs()).sum();
            assert_eq!(rest, 0.0);
        }
    }
}
