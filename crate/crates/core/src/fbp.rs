//! Filtered backprojection.
//!
//! Each projection row is convolved with the band-limited Ram-Lak kernel
//!
//! ```text
//! h[0] = 1 / (4 ds^2),  h[n odd] = -1 / (pi^2 n^2 ds^2),  h[n even] = 0
//! ```
//!
//! by zero-padding to a power of two at least twice the detector count and
//! multiplying by the kernel's DFT, so the result equals direct linear
//! convolution. Filtered rows are then smeared back over the image with
//! linear interpolation in `s`, and the angular sum is scaled by
//! `pi / n_angles` together with the `ds` quadrature weight of the
//! convolution.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{CtError, Result};
use crate::grid::ImageGrid;
use crate::sinogram::Sinogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    /// Plain ramp, optionally truncated at `cutoff`.
    RamLak,
    /// Ramp apodised by a Hann window reaching zero at `cutoff`.
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// Zero-padded row length; `None` picks the smallest valid power of two.
    pub padded_length: Option<usize>,
    /// Fraction of the Nyquist frequency, in `(0, 1]`.
    pub cutoff: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec::ram_lak()
    }
}

impl FilterSpec {
    pub fn ram_lak() -> Self {
        FilterSpec { kind: FilterKind::RamLak, padded_length: None, cutoff: 1.0 }
    }

    pub fn hann(cutoff: f64) -> Self {
        FilterSpec { kind: FilterKind::Hann, padded_length: None, cutoff }
    }

    /// Padded length for `n_detectors`, validating any explicit choice.
    pub fn padded_length_for(&self, n_detectors: usize) -> Result<usize> {
        if !(self.cutoff > 0.0 && self.cutoff <= 1.0) {
            return Err(CtError::InvalidArgument(format!("filter cutoff must be in (0, 1], got {}", self.cutoff)));
        }
        let min = 2 * n_detectors;
        match self.padded_length {
            None => Ok(min.next_power_of_two()),
            Some(len) if len.is_power_of_two() && len >= min => Ok(len),
            Some(len) => Err(CtError::InvalidArgument(format!("padded length {len} must be a power of two >= {min}"))),
        }
    }
}

/// Band-limited Ram-Lak kernel tap `h[n]` for detector spacing `spacing`.
pub fn ramp_kernel(n: i64, spacing: f64) -> f64 {
    if n == 0 {
        1.0 / (4.0 * spacing * spacing)
    } else if n % 2 == 0 {
        0.0
    } else {
        let nf = n as f64;
        -1.0 / (PI * PI * nf * nf * spacing * spacing)
    }
}

/// Real frequency response over `padded_length` DFT bins.
pub fn frequency_response(spec: &FilterSpec, padded_length: usize, spacing: f64) -> Vec<f64> {
    let len = padded_length;
    let mut taps: Vec<Complex64> = (0..len)
        .map(|k| {
            let n = if k <= len / 2 { k as i64 } else { k as i64 - len as i64 };
            Complex64::new(ramp_kernel(n, spacing), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut taps);
    let band_edge = 0.5 * spec.cutoff;
    taps.iter()
        .enumerate()
        .map(|(k, c)| {
            let freq = k.min(len - k) as f64 / len as f64;
            let window = if freq > band_edge {
                0.0
            } else {
                match spec.kind {
                    FilterKind::RamLak => 1.0,
                    FilterKind::Hann => 0.5 * (1.0 + (PI * freq / band_edge).cos()),
                }
            };
            c.re * window
        })
        .collect()
}

/// Ramp-filter every projection row: `q[k] = sum_n h[k - n] p[n]`.
pub fn filter_projections(sino: &Sinogram, spec: &FilterSpec) -> Result<Sinogram> {
    let nd = sino.n_detectors();
    let len = spec.padded_length_for(nd)?;
    let response = frequency_response(spec, len, sino.geometry().detector_spacing());
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);
    let scale = 1.0 / len as f64;
    let mut out = vec![0.0; sino.data().len()];
    out.par_chunks_mut(nd).zip(sino.data().par_chunks(nd)).for_each(|(dst, src)| {
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for (b, &v) in buf.iter_mut().zip(src) {
            b.re = v;
        }
        forward.process(&mut buf);
        for (b, &h) in buf.iter_mut().zip(&response) {
            *b *= h;
        }
        inverse.process(&mut buf);
        for (d, b) in dst.iter_mut().zip(&buf) {
            *d = b.re * scale;
        }
    });
    Sinogram::from_vec(sino.geometry().clone(), out)
}

/// Pixel-driven backprojection: every pixel sums, over angles, the row value
/// at its own `s = x cos(theta) + y sin(theta)`, linearly interpolated
/// between detector bins (zero beyond the detector ends). No angular weight
/// is applied.
pub fn backproject_interpolated(sino: &Sinogram) -> Result<ImageGrid> {
    let geom = sino.geometry();
    let shape = geom.image();
    let nd = geom.n_detectors();
    let trig: Vec<(f64, f64)> = geom.angles().iter().map(|a| a.sin_cos()).collect();
    let inv_spacing = 1.0 / geom.detector_spacing();
    let center = (nd as f64 - 1.0) / 2.0;
    let data = sino.data();
    let mut out = vec![0.0; shape.len()];
    out.par_chunks_mut(shape.width).enumerate().for_each(|(row, out_row)| {
        let y = shape.y_of_row(row);
        for (col, value) in out_row.iter_mut().enumerate() {
            let x = shape.x_of_col(col);
            let mut acc = 0.0;
            for (k, &(sin, cos)) in trig.iter().enumerate() {
                let u = (x * cos + y * sin) * inv_spacing + center;
                let lower = u.floor();
                let i0 = lower as i64;
                let frac = u - lower;
                let projections = &data[k * nd..(k + 1) * nd];
                if i0 >= 0 && (i0 as usize) < nd {
                    acc += (1.0 - frac) * projections[i0 as usize];
                }
                if i0 + 1 >= 0 && ((i0 + 1) as usize) < nd {
                    acc += frac * projections[(i0 + 1) as usize];
                }
            }
            *value = acc;
        }
    });
    ImageGrid::from_vec(shape, out)
}

/// Filter, backproject, and scale by `pi / n_angles * detector_spacing`.
pub fn fbp_reconstruct(sino: &Sinogram, spec: &FilterSpec) -> Result<ImageGrid> {
    let filtered = filter_projections(sino, spec)?;
    let mut image = backproject_interpolated(&filtered)?;
    let scale = PI / sino.n_angles() as f64 * sino.geometry().detector_spacing();
    image.data_mut().iter_mut().for_each(|v| *v *= scale);
    Ok(image)
}
