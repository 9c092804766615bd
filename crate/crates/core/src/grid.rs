//! Square-pixel image rasters.
//!
//! Pixel `(row, col)` sits at row-major index `row * width + col`, with
//! `(0, 0)` at the top-left corner. The grid is centred on the rotation
//! axis: pixel centres are at `x = (col - (width-1)/2) * pixel_size` and
//! `y = ((height-1)/2 - row) * pixel_size`, so `y` grows upwards.

use crate::error::{CtError, Result};

/// Dimensions and pixel pitch of an image, without the pixel values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridShape {
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
}

impl GridShape {
    pub fn new(width: usize, height: usize, pixel_size: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(CtError::InvalidArgument(format!("image must be at least 1x1, got {width}x{height}")));
        }
        if !(pixel_size > 0.0 && pixel_size.is_finite()) {
            return Err(CtError::InvalidArgument(format!("pixel_size must be positive and finite, got {pixel_size}")));
        }
        Ok(GridShape { width, height, pixel_size })
    }

    /// Unit-pixel square grid.
    pub fn square(size: usize) -> Result<Self> {
        GridShape::new(size, size, 1.0)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical x coordinate of a pixel column centre.
    pub fn x_of_col(&self, col: usize) -> f64 {
        (col as f64 - self.center_col()) * self.pixel_size
    }

    /// Physical y coordinate of a pixel row centre.
    pub fn y_of_row(&self, row: usize) -> f64 {
        (self.center_row() - row as f64) * self.pixel_size
    }

    pub(crate) fn center_col(&self) -> f64 {
        (self.width as f64 - 1.0) / 2.0
    }

    pub(crate) fn center_row(&self) -> f64 {
        (self.height as f64 - 1.0) / 2.0
    }
}

/// A 2-D attenuation map on a square pixel raster.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    shape: GridShape,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn zeros(shape: GridShape) -> Self {
        ImageGrid { shape, data: vec![0.0; shape.len()] }
    }

    pub fn filled(shape: GridShape, value: f64) -> Self {
        ImageGrid { shape, data: vec![value; shape.len()] }
    }

    pub fn from_vec(shape: GridShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(CtError::DimensionMismatch(format!(
                "image data has {} values, {}x{} grid needs {}",
                data.len(),
                shape.width,
                shape.height,
                shape.len()
            )));
        }
        Ok(ImageGrid { shape, data })
    }

    pub fn from_fn(shape: GridShape, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for row in 0..shape.height {
            for col in 0..shape.width {
                data.push(f(row, col));
            }
        }
        ImageGrid { shape, data }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn pixel_size(&self) -> f64 {
        self.shape.pixel_size
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

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.shape.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.shape.width + col] = value;
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn dot(&self, other: &ImageGrid) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(GridShape::new(0, 4, 1.0).is_err());
        assert!(GridShape::new(4, 4, 0.0).is_err());
        assert!(GridShape::new(4, 4, f64::NAN).is_err());
        let shape = GridShape::square(3).unwrap();
        assert!(ImageGrid::from_vec(shape, vec![0.0; 8]).is_err());
    }

    #[test]
    fn centred_coordinates() {
        let shape = GridShape::new(4, 3, 2.0).unwrap();
        assert_eq!(shape.x_of_col(0), -3.0);
        assert_eq!(shape.x_of_col(3), 3.0);
        assert_eq!(shape.y_of_row(0), 2.0);
        assert_eq!(shape.y_of_row(2), -2.0);
    }
}
