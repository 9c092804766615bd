//! Photon-count acquisition (Beer-Lambert) and log-normalization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{CtError, Result};
use crate::geometry::ParallelGeometry;
use crate::sinogram::Sinogram;

/// Detected count substituted for a Poisson draw of zero photons, so the
/// logarithm stays finite.
pub const ZERO_COUNT_CLAMP: f64 = 0.5;

/// Detected intensities `I(theta, s)` for a source emitting `i0` photons per bin.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityRecord {
    geometry: ParallelGeometry,
    i0: f64,
    counts: Vec<f64>,
    noisy: bool,
}

impl IntensityRecord {
    pub fn new(geometry: ParallelGeometry, i0: f64, counts: Vec<f64>, noisy: bool) -> Result<Self> {
        check_i0(i0)?;
        if counts.len() != geometry.n_rays() {
            return Err(CtError::DimensionMismatch(format!(
                "{} counts for a geometry with {} rays",
                counts.len(),
                geometry.n_rays()
            )));
        }
        Ok(IntensityRecord { geometry, i0, counts, noisy })
    }

    pub fn geometry(&self) -> &ParallelGeometry {
        &self.geometry
    }

    pub fn i0(&self) -> f64 {
        self.i0
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn is_noisy(&self) -> bool {
        self.noisy
    }
}

fn check_i0(i0: f64) -> Result<()> {
    if !(i0 > 0.0 && i0.is_finite()) {
        return Err(CtError::InvalidArgument(format!("source intensity i0 must be positive and finite, got {i0}")));
    }
    Ok(())
}

/// Attenuate a source of `i0` photons per bin through `sino`.
///
/// Without noise the counts are exactly `i0 * exp(-p)`. With noise each bin
/// is an independent Poisson draw with that mean, from a generator seeded
/// with `seed`; zero draws become [`ZERO_COUNT_CLAMP`].
pub fn simulate_intensity(sino: &Sinogram, i0: f64, noisy: bool, seed: u64) -> Result<IntensityRecord> {
    check_i0(i0)?;
    if let Some(k) = sino.data().iter().position(|&p| p < 0.0) {
        return Err(CtError::Unphysical(format!("negative line integral {} at sinogram index {k}", sino.data()[k])));
    }
    let expected = sino.data().iter().map(|&p| i0 * (-p).exp());
    let counts: Vec<f64> = if noisy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        expected
            .map(|mean| {
                let draw =
                    if mean > 0.0 { Poisson::new(mean).expect("positive finite mean").sample(&mut rng) } else { 0.0 };
                if draw <= 0.0 {
                    ZERO_COUNT_CLAMP
                } else {
                    draw
                }
            })
            .collect()
    } else {
        expected.collect()
    };
    IntensityRecord::new(sino.geometry().clone(), i0, counts, noisy)
}

/// `p = -ln(I / i0)` per bin.
pub fn log_normalize(rec: &IntensityRecord) -> Result<Sinogram> {
    if let Some(k) = rec.counts.iter().position(|&c| c.is_nan() || c <= 0.0) {
        return Err(CtError::Unphysical(format!("count {} at index {k} is not positive", rec.counts[k])));
    }
    let data = rec.counts.iter().map(|&c| -(c / rec.i0).ln()).collect();
    Sinogram::from_vec(rec.geometry.clone(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridShape;

    fn flat_sino(n: usize, value: f64) -> Sinogram {
        let geom = ParallelGeometry::new(vec![0.0], n, 1.0, GridShape::square(4).unwrap()).unwrap();
        Sinogram::filled(geom, value)
    }

    #[test]
    fn transparent_object_passes_everything() {
        let rec = simulate_intensity(&flat_sino(6, 0.0), 1000.0, false, 0).unwrap();
        assert!(rec.counts().iter().all(|&c| c == 1000.0));
        assert!(!rec.is_noisy());
        let p = log_normalize(&rec).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_value_layer() {
        let rec = simulate_intensity(&flat_sino(3, 2f64.ln()), 1000.0, false, 0).unwrap();
        for &c in rec.counts() {
            assert!((c - 500.0).abs() < 1e-9);
        }
    }

    #[test]
    fn counts_of_i0_over_e() {
        let geom = flat_sino(2, 0.0).geometry().clone();
        let i0 = 2500.0;
        let rec = IntensityRecord::new(geom, i0, vec![i0 / std::f64::consts::E; 2], false).unwrap();
        let p = log_normalize(&rec).unwrap();
        for &v in p.data() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_round_trip() {
        let geom = ParallelGeometry::new(vec![0.0, 1.0], 5, 1.0, GridShape::square(4).unwrap()).unwrap();
        let data: Vec<f64> = (0..10).map(|k| 0.37 * k as f64).collect();
        let sino = Sinogram::from_vec(geom, data).unwrap();
        let back = log_normalize(&simulate_intensity(&sino, 1e4, false, 3).unwrap()).unwrap();
        for (a, b) in back.data().iter().zip(sino.data()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300) || (a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_unphysical_inputs() {
        assert!(matches!(simulate_intensity(&flat_sino(3, -0.1), 100.0, false, 0), Err(CtError::Unphysical(_))));
        assert!(simulate_intensity(&flat_sino(3, 0.1), 0.0, false, 0).is_err());
        let geom = flat_sino(2, 0.0).geometry().clone();
        let rec = IntensityRecord::new(geom, 10.0, vec![1.0, 0.0], true).unwrap();
        assert!(log_normalize(&rec).is_err());
    }

    #[test]
    fn poisson_mean_matches_beer_lambert() {
        let rec = simulate_intensity(&flat_sino(100_000, 1.0), 1e4, true, 42).unwrap();
        let mean = rec.counts().iter().sum::<f64>() / rec.counts().len() as f64;
        let expected = 1e4 * (-1.0f64).exp();
        assert!(((mean - expected) / expected).abs() < 0.01, "mean {mean}");
        assert!(rec.is_noisy());
    }

    #[test]
    fn noise_is_seeded() {
        let sino = flat_sino(64, 2.0);
        let a = simulate_intensity(&sino, 500.0, true, 9).unwrap();
        let b = simulate_intensity(&sino, 500.0, true, 9).unwrap();
        let c = simulate_intensity(&sino, 500.0, true, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.counts(), c.counts());
    }

    #[test]
    fn zero_draws_are_clamped() {
        // mean 1e-3 photons: almost every draw is zero
        let rec = simulate_intensity(&flat_sino(200, 10.0f64.ln() * 4.0), 10.0, true, 1).unwrap();
        assert!(rec.counts().iter().all(|&c| c > 0.0));
        assert!(rec.counts().contains(&ZERO_COUNT_CLAMP));
        assert!(log_normalize(&rec).unwrap().data().iter().all(|v| v.is_finite()));
    }
}
