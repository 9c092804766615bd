//! Direct 2-D convolution with "same" zero padding, stride 1 and dilation.
//!
//! `y[b,o,h,w] = bias[o] + sum_{i,kh,kw} k[o,i,kh,kw] * x[b,i,h+kh*d-p,w+kw*d-p]`
//! with `p = d * (K - 1) / 2`. Every tap is applied as a shifted row-wise
//! axpy over the valid region, which keeps the inner loops contiguous.

use crate::real::{axpy, dot, Real};

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub dilation: usize,
}

/// Valid output range `[lo, hi)` for a tap shifted by `offset` along an axis
/// of length `len`.
#[inline]
fn valid_range(offset: isize, len: usize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (len as isize - offset).clamp(0, len as isize) as usize;
    (lo.min(hi), hi)
}

impl ConvDims {
    fn plane(&self) -> usize {
        self.height * self.width
    }

    fn offset(&self, tap: usize) -> isize {
        let pad = (self.dilation * (self.kernel - 1) / 2) as isize;
        (tap * self.dilation) as isize - pad
    }

    fn weight_index(&self, o: usize, i: usize, kh: usize, kw: usize) -> usize {
        ((o * self.in_channels + i) * self.kernel + kh) * self.kernel + kw
    }
}

pub(crate) fn forward<T: Real>(d: &ConvDims, x: &[T], weight: &[T], bias: &[T], y: &mut [T]) {
    let plane = d.plane();
    let w = d.width;
    for b in 0..d.batch {
        for o in 0..d.out_channels {
            let out = &mut y[(b * d.out_channels + o) * plane..][..plane];
            out.fill(bias[o]);
            for i in 0..d.in_channels {
                let inp = &x[(b * d.in_channels + i) * plane..][..plane];
                for kh in 0..d.kernel {
                    let dy = d.offset(kh);
                    let (h0, h1) = valid_range(dy, d.height);
                    for kw in 0..d.kernel {
                        let dx = d.offset(kw);
                        let (c0, c1) = valid_range(dx, w);
                        if c0 >= c1 {
                            continue;
                        }
                        let k = weight[d.weight_index(o, i, kh, kw)];
                        for h in h0..h1 {
                            let src = ((h as isize + dy) as usize) * w;
                            let sc0 = (c0 as isize + dx) as usize;
                            axpy(k, &inp[src + sc0..src + sc0 + (c1 - c0)], &mut out[h * w + c0..h * w + c1]);
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates parameter gradients into `grad_weight`/`grad_bias` and writes
/// the input gradient into `grad_x` (overwritten).
pub(crate) fn backward<T: Real>(
    d: &ConvDims,
    x: &[T],
    weight: &[T],
    grad_y: &[T],
    grad_weight: &mut [T],
    grad_bias: &mut [T],
    grad_x: &mut [T],
) {
    let plane = d.plane();
    let w = d.width;
    grad_x.fill(T::zero());
    for b in 0..d.batch {
        for o in 0..d.out_channels {
            let gy = &grad_y[(b * d.out_channels + o) * plane..][..plane];
            grad_bias[o] += gy.iter().copied().sum::<T>();
            for i in 0..d.in_channels {
                let inp = &x[(b * d.in_channels + i) * plane..][..plane];
                let gx = &mut grad_x[(b * d.in_channels + i) * plane..][..plane];
                for kh in 0..d.kernel {
                    let dy = d.offset(kh);
                    let (h0, h1) = valid_range(dy, d.height);
                    for kw in 0..d.kernel {
                        let dx = d.offset(kw);
                        let (c0, c1) = valid_range(dx, w);
                        if c0 >= c1 {
                            continue;
                        }
                        let widx = d.weight_index(o, i, kh, kw);
                        let k = weight[widx];
                        let mut acc = T::zero();
                        for h in h0..h1 {
                            let src = ((h as isize + dy) as usize) * w;
                            let sc0 = (c0 as isize + dx) as usize;
                            let g_row = &gy[h * w + c0..h * w + c1];
                            acc += dot(g_row, &inp[src + sc0..src + sc0 + (c1 - c0)]);
                            axpy(k, g_row, &mut gx[src + sc0..src + sc0 + (c1 - c0)]);
                        }
                        grad_weight[widx] += acc;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Six nested loops straight from the definition.
    fn naive(d: &ConvDims, x: &[f64], k: &[f64], bias: &[f64]) -> Vec<f64> {
        let pad = (d.dilation * (d.kernel - 1) / 2) as isize;
        let mut y = vec![0.0; d.batch * d.out_channels * d.height * d.width];
        for b in 0..d.batch {
            for o in 0..d.out_channels {
                for h in 0..d.height {
                    for ww in 0..d.width {
                        let mut acc = bias[o];
                        for i in 0..d.in_channels {
                            for kh in 0..d.kernel {
                                for kw in 0..d.kernel {
                                    let sh = h as isize + (kh * d.dilation) as isize - pad;
                                    let sw = ww as isize + (kw * d.dilation) as isize - pad;
                                    if sh < 0 || sw < 0 || sh >= d.height as isize || sw >= d.width as isize {
                                        continue;
                                    }
                                    let xi = ((b * d.in_channels + i) * d.height + sh as usize) * d.width + sw as usize;
                                    let ki = ((o * d.in_channels + i) * d.kernel + kh) * d.kernel + kw;
                                    acc += k[ki] * x[xi];
                                }
                            }
                        }
                        y[((b * d.out_channels + o) * d.height + h) * d.width + ww] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn matches_six_loop_oracle() {
        for (kernel, dilation) in [(3, 1), (3, 2), (3, 4), (1, 1)] {
            let d = ConvDims { batch: 2, in_channels: 3, out_channels: 2, height: 7, width: 9, kernel, dilation };
            let x: Vec<f64> = (0..2 * 3 * 63).map(|k| ((k * 7919) % 23) as f64 / 11.0 - 1.0).collect();
            let k: Vec<f64> = (0..2 * 3 * kernel * kernel).map(|k| ((k * 31) % 13) as f64 / 6.0 - 1.0).collect();
            let bias = [0.25, -0.5];
            let mut y = vec![0.0; 2 * 2 * 63];
            forward(&d, &x, &k, &bias, &mut y);
            let expected = naive(&d, &x, &k, &bias);
            for (a, e) in y.iter().zip(&expected) {
                assert!((a - e).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn oversized_dilation_only_keeps_centre_tap() {
        // dilation larger than the image: off-centre taps fall outside
        let d = ConvDims { batch: 1, in_channels: 1, out_channels: 1, height: 3, width: 3, kernel: 3, dilation: 5 };
        let x: Vec<f64> = (0..9).map(|v| v as f64).collect();
        let mut k = vec![1.0; 9];
        k[4] = 2.0;
        let mut y = vec![0.0; 9];
        forward(&d, &x, &k, &[0.0], &mut y);
        let expected: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert_eq!(y, expected);
    }
}
