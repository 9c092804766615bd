//! Analytic ellipse phantoms.
//!
//! Ellipses live in normalised coordinates where the image spans
//! `[-1, 1] x [-1, 1]`, so the same phantom can be rasterised at any size.

use rand::Rng;

use crate::error::{CtError, Result};
use crate::grid::{GridShape, ImageGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center_x: f64,
    pub center_y: f64,
    pub semi_x: f64,
    pub semi_y: f64,
    /// Counter-clockwise rotation in degrees.
    pub rotation_deg: f64,
    /// Additive attenuation inside the ellipse.
    pub value: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (sin, cos) = self.rotation_deg.to_radians().sin_cos();
        let dx = x - self.center_x;
        let dy = y - self.center_y;
        let u = dx * cos + dy * sin;
        let v = -dx * sin + dy * cos;
        (u / self.semi_x).powi(2) + (v / self.semi_y).powi(2) <= 1.0
    }
}

/// The original ten-ellipse Shepp-Logan head (values in `[0, 2]`).
pub const SHEPP_LOGAN: [Ellipse; 10] = [
    e(0.0, 0.0, 0.69, 0.92, 0.0, 2.0),
    e(0.0, -0.0184, 0.6624, 0.874, 0.0, -0.98),
    e(0.22, 0.0, 0.11, 0.31, -18.0, -0.02),
    e(-0.22, 0.0, 0.16, 0.41, 18.0, -0.02),
    e(0.0, 0.35, 0.21, 0.25, 0.0, 0.01),
    e(0.0, 0.1, 0.046, 0.046, 0.0, 0.01),
    e(0.0, -0.1, 0.046, 0.046, 0.0, 0.01),
    e(-0.08, -0.605, 0.046, 0.023, 0.0, 0.01),
    e(0.0, -0.606, 0.023, 0.023, 0.0, 0.01),
    e(0.06, -0.605, 0.023, 0.046, 0.0, 0.01),
];

const fn e(cx: f64, cy: f64, a: f64, b: f64, rot: f64, value: f64) -> Ellipse {
    Ellipse { center_x: cx, center_y: cy, semi_x: a, semi_y: b, rotation_deg: rot, value }
}

/// Sum the ellipses at every pixel centre, then clip to `[lo, hi]`.
pub fn rasterize(ellipses: &[Ellipse], shape: GridShape, clip: Option<(f64, f64)>) -> ImageGrid {
    let half_w = shape.width as f64 / 2.0;
    let half_h = shape.height as f64 / 2.0;
    let cx = shape.center_col();
    let cy = shape.center_row();
    ImageGrid::from_fn(shape, |row, col| {
        let x = (col as f64 - cx) / half_w;
        let y = (cy - row as f64) / half_h;
        let v: f64 = ellipses.iter().filter(|el| el.contains(x, y)).map(|el| el.value).sum();
        match clip {
            Some((lo, hi)) => v.clamp(lo, hi),
            None => v,
        }
    })
}

pub fn shepp_logan(size: usize) -> Result<ImageGrid> {
    let shape = GridShape::square(size)?;
    // the table's sums are exact up to rounding; clip the -1e-17 residues
    Ok(rasterize(&SHEPP_LOGAN, shape, Some((0.0, 2.0))))
}

/// Uniform disk of `radius` pixels centred on the rotation axis.
pub fn centered_disk(shape: GridShape, radius: f64, value: f64) -> ImageGrid {
    let r2 = radius * radius;
    ImageGrid::from_fn(shape, |row, col| {
        let x = col as f64 - shape.center_col();
        let y = shape.center_row() - row as f64;
        if x * x + y * y <= r2 {
            value
        } else {
            0.0
        }
    })
}

/// Parameters for seeded random-ellipse phantoms.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomEllipseSpec {
    pub min_ellipses: usize,
    pub max_ellipses: usize,
    pub min_value: f64,
    pub max_value: f64,
    pub clip_max: f64,
}

impl Default for RandomEllipseSpec {
    fn default() -> Self {
        RandomEllipseSpec { min_ellipses: 4, max_ellipses: 10, min_value: 0.0, max_value: 1.0, clip_max: 1.0 }
    }
}

impl RandomEllipseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.min_ellipses > self.max_ellipses {
            return Err(CtError::InvalidArgument(format!(
                "ellipse count range {}..={} is empty",
                self.min_ellipses, self.max_ellipses
            )));
        }
        if self.min_value.partial_cmp(&self.max_value).is_none_or(|o| o.is_gt())
            || self.clip_max.is_nan()
            || self.clip_max <= 0.0
        {
            return Err(CtError::InvalidArgument("attenuation range must be ordered and clip_max positive".into()));
        }
        Ok(())
    }

    /// Draw the ellipse list for one phantom.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<Ellipse> {
        let n = rng.gen_range(self.min_ellipses..=self.max_ellipses);
        (0..n)
            .map(|_| {
                let radius = 0.6 * rng.gen::<f64>().sqrt();
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                Ellipse {
                    center_x: radius * phi.cos(),
                    center_y: radius * phi.sin(),
                    semi_x: rng.gen_range(0.05..0.45),
                    semi_y: rng.gen_range(0.05..0.45),
                    rotation_deg: rng.gen_range(0.0..180.0),
                    value: if self.max_value > self.min_value {
                        rng.gen_range(self.min_value..=self.max_value)
                    } else {
                        self.min_value
                    },
                }
            })
            .collect()
    }

    pub fn generate<R: Rng>(&self, size: usize, rng: &mut R) -> Result<ImageGrid> {
        self.validate()?;
        let shape = GridShape::square(size)?;
        let ellipses = self.sample(rng);
        Ok(rasterize(&ellipses, shape, Some((0.0, self.clip_max))))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhantomKind {
    SheppLogan,
    RandomEllipses(RandomEllipseSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub size: usize,
    pub seed: u64,
}

/// Smallest phantom side accepted by [`make_phantom`].
pub const MIN_PHANTOM_SIZE: usize = 8;

pub fn make_phantom(spec: &PhantomSpec) -> Result<ImageGrid> {
    use rand::SeedableRng;

    if spec.size < MIN_PHANTOM_SIZE {
        return Err(CtError::InvalidArgument(format!("phantom size must be >= {MIN_PHANTOM_SIZE}, got {}", spec.size)));
    }
    match &spec.kind {
        PhantomKind::SheppLogan => shepp_logan(spec.size),
        PhantomKind::RandomEllipses(params) => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed);
            params.generate(spec.size, &mut rng)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shepp_logan_is_deterministic_and_bounded() {
        let a = shepp_logan(128).unwrap();
        let b = shepp_logan(128).unwrap();
        assert_eq!(a, b);
        assert!(a.min() >= 0.0 && a.max() <= 2.0);
        assert_eq!(a.max(), 2.0);
        // everything outside the skull ellipse is exactly zero
        let half = 64.0;
        for row in 0..128 {
            for col in 0..128 {
                let x = (col as f64 - 63.5) / half;
                let y = (63.5 - row as f64) / half;
                if !SHEPP_LOGAN[0].contains(x, y) {
                    assert_eq!(a.get(row, col), 0.0);
                }
            }
        }
        // brain matter level inside
        assert!((a.get(64, 64) - 1.02).abs() < 1e-9);
    }

    #[test]
    fn zero_ellipses_give_empty_image() {
        let spec = PhantomSpec {
            kind: PhantomKind::RandomEllipses(RandomEllipseSpec {
                min_ellipses: 0,
                max_ellipses: 0,
                ..Default::default()
            }),
            size: 16,
            seed: 3,
        };
        let img = make_phantom(&spec).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_phantoms_are_seeded_and_clipped() {
        let spec =
            |seed| PhantomSpec { kind: PhantomKind::RandomEllipses(RandomEllipseSpec::default()), size: 32, seed };
        let a = make_phantom(&spec(5)).unwrap();
        assert_eq!(a, make_phantom(&spec(5)).unwrap());
        assert_ne!(a, make_phantom(&spec(6)).unwrap());
        assert!(a.min() >= 0.0 && a.max() <= 1.0);
    }

    #[test]
    fn rejects_tiny_phantoms() {
        let spec = PhantomSpec { kind: PhantomKind::SheppLogan, size: 7, seed: 0 };
        assert!(make_phantom(&spec).is_err());
    }
}
