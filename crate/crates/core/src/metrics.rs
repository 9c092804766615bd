//! Image quality metrics.

/// PSNR reported for a perfect reconstruction.
pub const PSNR_CAP_DB: f64 = 99.0;

pub fn rmse(estimate: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(estimate.len(), reference.len(), "images must have equal size");
    if estimate.is_empty() {
        return 0.0;
    }
    let sse: f64 = estimate.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    (sse / estimate.len() as f64).sqrt()
}

/// `20 log10(range / rmse)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(rmse: f64, range: f64) -> f64 {
    if rmse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (20.0 * (range / rmse).log10()).min(PSNR_CAP_DB)
}
