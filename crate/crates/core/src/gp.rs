//! Zero-mean Gaussian-process sampling with a squared-exponential kernel,
//! used to generate random boundary and interface data.
//!
//! Draw `i` of a sampler is generated from its own stream seeded with
//! `seed ^ i`, so batches can be produced in any order or in parallel and
//! still be reproducible.

use crate::error::{Error, Result};
use crate::geometry::{Patch, Point};
use crate::grid::{FaceTrace, StructuredGrid};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpSpec {
    pub correlation_length: f64,
    pub variance: f64,
    /// Added to the covariance diagonal; `None` means `1e-10 * variance`.
    pub jitter: Option<f64>,
    pub seed: u64,
}

impl Default for GpSpec {
    fn default() -> Self {
        GpSpec {
            correlation_length: 0.5,
            variance: 1.0,
            jitter: None,
            seed: 0,
        }
    }
}

impl GpSpec {
    pub fn with_seed(seed: u64) -> Self {
        GpSpec {
            seed,
            ..GpSpec::default()
        }
    }

    pub fn jitter_value(&self) -> f64 {
        self.jitter.unwrap_or(1e-10 * self.variance)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.correlation_length > 0.0) {
            return Err(Error::NonPositive {
                name: "correlation_length",
                value: self.correlation_length,
            });
        }
        if !(self.variance > 0.0) {
            return Err(Error::NonPositive {
                name: "variance",
                value: self.variance,
            });
        }
        if !(self.jitter_value() >= 0.0) {
            return Err(Error::Precondition("jitter must be non-negative".into()));
        }
        Ok(())
    }

    pub fn kernel(&self, a: &Point, b: &Point) -> f64 {
        let r2: f64 = (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum();
        let l = self.correlation_length;
        self.variance * (-r2 / (2.0 * l * l)).exp()
    }
}

/// Covariance matrix of `points` without jitter.
pub fn covariance(spec: &GpSpec, points: &[Point]) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| spec.kernel(&points[i], &points[j]))
}

pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed ^ index
}

/// Factorized covariance over a fixed point set.
#[derive(Debug, Clone)]
pub struct GpSampler {
    spec: GpSpec,
    factor: DMatrix<f64>,
}

impl GpSampler {
    pub fn new(spec: &GpSpec, points: &[Point]) -> Result<Self> {
        spec.validate()?;
        if points.is_empty() {
            return Err(Error::Precondition("no sample points".into()));
        }
        for i in 0..points.len() {
            for j in 0..i {
                if points[i] == points[j] {
                    return Err(Error::Precondition(format!("points {j} and {i} coincide")));
                }
            }
        }
        let mut k = covariance(spec, points);
        let jitter = spec.jitter_value();
        for i in 0..points.len() {
            k[(i, i)] += jitter;
        }
        let chol = k.cholesky().ok_or_else(|| {
            Error::Factorization(format!(
                "covariance of {} points with jitter {jitter:e} is not positive definite",
                points.len()
            ))
        })?;
        Ok(GpSampler {
            spec: *spec,
            factor: chol.unpack(),
        })
    }

    pub fn len(&self) -> usize {
        self.factor.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spec(&self) -> &GpSpec {
        &self.spec
    }

    /// Draw number `index`.
    pub fn draw(&self, index: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.spec.seed, index));
        let z = DVector::from_fn(self.len(), |_, _| StandardNormal.sample(&mut rng));
        (&self.factor * z).as_slice().to_vec()
    }
}

/// `count` draws over `points`, one row per draw.
pub fn sample_gp(spec: &GpSpec, points: &[Point], count: usize) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::Precondition("count must be at least 1".into()));
    }
    let s = GpSampler::new(spec, points)?;
    Ok((0..count as u64).map(|i| s.draw(i)).collect())
}

/// Random traces on the nodes of `patch` as seen by `grid`.
pub fn sample_interface_space(
    spec: &GpSpec,
    patch: &Patch,
    grid: &StructuredGrid,
    count: usize,
) -> Result<Vec<FaceTrace>> {
    let nodes = grid.patch_nodes(patch)?;
    let lo = grid.bx().lo();
    // distances in the subdomain's own frame
    let points: Vec<Point> = nodes.iter().map(|&i| grid.point(i)).collect();
    let local: Vec<Point> = points
        .iter()
        .map(|p| {
            let mut q = *p;
            for k in 0..grid.dim() {
                q[k] -= lo[k];
            }
            q
        })
        .collect();
    let rows = sample_gp(spec, &local, count)?;
    Ok(rows
        .into_iter()
        .map(|values| FaceTrace {
            patch: *patch,
            points: points.clone(),
            values,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{AxisBox, Face};

    #[test]
    fn marginal_moments_match_spec() {
        let spec = GpSpec::with_seed(11);
        let draws = sample_gp(&spec, &[[0.3, 0.2, 0.0]], 100_000).unwrap();
        let n = draws.len() as f64;
        let mean = draws.iter().map(|d| d[0]).sum::<f64>() / n;
        let var = draws.iter().map(|d| (d[0] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn empirical_correlation_follows_kernel() {
        let spec = GpSpec::with_seed(3);
        let draws = sample_gp(&spec, &[[0.0; 3], [0.5, 0.0, 0.0]], 100_000).unwrap();
        let n = draws.len() as f64;
        let m: Vec<f64> = (0..2)
            .map(|k| draws.iter().map(|d| d[k]).sum::<f64>() / n)
            .collect();
        let cov = draws
            .iter()
            .map(|d| (d[0] - m[0]) * (d[1] - m[1]))
            .sum::<f64>()
            / n;
        let s0 = (draws.iter().map(|d| (d[0] - m[0]).powi(2)).sum::<f64>() / n).sqrt();
        let s1 = (draws.iter().map(|d| (d[1] - m[1]).powi(2)).sum::<f64>() / n).sqrt();
        let expected = (-0.25f64 / 0.5).exp();
        assert!((cov / (s0 * s1) - expected).abs() < 0.01);
    }

    #[test]
    fn duplicate_points_are_rejected() {
        let r = sample_gp(&GpSpec::default(), &[[0.1, 0.1, 0.0], [0.1, 0.1, 0.0]], 1);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn covariance_is_symmetric_with_variance_diagonal() {
        let pts: Vec<Point> = (0..20)
            .map(|i| [i as f64 * 0.05, (i * i) as f64 * 0.01, 0.0])
            .collect();
        let spec = GpSpec {
            variance: 2.5,
            ..GpSpec::default()
        };
        let k = covariance(&spec, &pts);
        assert_eq!((&k - k.transpose()).amax(), 0.0);
        assert!(k.diagonal().iter().all(|&d| d == 2.5));
    }

    #[test]
    fn draws_are_deterministic() {
        let bx = AxisBox::unit(3).unwrap();
        let grid = StructuredGrid::new(bx, &[6, 6, 6]).unwrap();
        let patch = bx.face_patch(Face::hi(2));
        let spec = GpSpec::with_seed(99);
        let a = sample_interface_space(&spec, &patch, &grid, 1).unwrap();
        let b = sample_interface_space(&spec, &patch, &grid, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].values.len(), 36);
    }

    #[test]
    fn zero_jitter_on_dense_points_fails_to_factor() {
        let pts: Vec<Point> = (0..200).map(|i| [i as f64 * 1e-4, 0.0, 0.0]).collect();
        let spec = GpSpec {
            jitter: Some(0.0),
            ..GpSpec::default()
        };
        assert!(matches!(
            sample_gp(&spec, &pts, 1),
            Err(Error::Factorization(_))
        ));
    }

    #[test]
    fn traces_are_smooth() {
        let bx = AxisBox::unit(2).unwrap();
        let grid = StructuredGrid::new(bx, &[25, 25]).unwrap();
        let patch = bx.face_patch(Face::lo(1));
        let spec = GpSpec::with_seed(5);
        let h = grid.spacing(0);
        let bound = 6.0 * spec.variance.sqrt() * h / spec.correlation_length;
        for t in sample_interface_space(&spec, &patch, &grid, 1000).unwrap() {
            for w in t.values.windows(2) {
                assert!((w[1] - w[0]).abs() <= bound);
            }
        }
    }
}
