//! Space-filling initial designs.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Per-dimension (lower, upper) box, in natural units.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds(pub Vec<(f64, f64)>);

impl Bounds {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        for (i, &(lo, hi)) in pairs.iter().enumerate() {
            if !(lo < hi) {
                return Err(Error::Config(format!(
                    "bounds dimension {i}: lower {lo} must be below upper {hi}"
                )));
            }
        }
        Ok(Bounds(pairs))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Map a natural-units point into the unit cube.
    pub fn normalize(&self, point: &[f64]) -> Vec<f64> {
        point
            .iter()
            .zip(&self.0)
            .map(|(v, &(lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }

    /// Map a unit-cube point back to natural units.
    pub fn denormalize(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(&self.0)
            .map(|(u, &(lo, hi))| lo + u * (hi - lo))
            .collect()
    }

    pub fn clip(&self, point: &mut [f64]) {
        for (v, &(lo, hi)) in point.iter_mut().zip(&self.0) {
            *v = v.clamp(lo, hi);
        }
    }
}

/// Latin hypercube design: for each dimension the n points occupy n distinct
/// equal-width strata, one point per stratum, uniform within stratum, with
/// strata permuted independently per dimension.
pub fn latin_hypercube(n: usize, bounds: &Bounds, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    if n < 2 {
        return Err(Error::Config(format!(
            "a Latin hypercube needs at least 2 points, got {n}"
        )));
    }
    let d = bounds.dim();
    let mut points = vec![vec![0.0; d]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for (j, &(lo, hi)) in bounds.0.iter().enumerate() {
        strata.shuffle(rng);
        for (i, point) in points.iter_mut().enumerate() {
            let u = (strata[i] as f64 + rng.random::<f64>()) / n as f64;
            point[j] = lo + u * (hi - lo);
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Histogram oracle: exactly one point per stratum in every projection.
    fn one_per_stratum(points: &[Vec<f64>], bounds: &Bounds) -> bool {
        let n = points.len();
        for j in 0..bounds.dim() {
            let (lo, hi) = bounds.0[j];
            let mut counts = vec![0usize; n];
            for p in points {
                let u = ((p[j] - lo) / (hi - lo) * n as f64).floor() as usize;
                counts[u.min(n - 1)] += 1;
            }
            if counts.iter().any(|&c| c != 1) {
                return false;
            }
        }
        true
    }

    #[test]
    fn four_points_one_dim() {
        let bounds = Bounds::new(vec![(0.0, 1.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = latin_hypercube(4, &bounds, &mut rng).unwrap();
        assert!(one_per_stratum(&pts, &bounds));
    }

    #[test]
    fn forty_points_four_dims() {
        let bounds =
            Bounds::new(vec![(0.0, 1.0), (0.0, 1.0), (6.0, 15.0), (0.05, 0.5)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = latin_hypercube(40, &bounds, &mut rng).unwrap();
        assert_eq!(pts.len(), 40);
        assert!(one_per_stratum(&pts, &bounds));
    }

    #[test]
    fn projection_property_random_sizes() {
        let bounds = Bounds::new(vec![(-3.0, 7.0), (0.0, 1.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2usize, 5, 17, 63, 100] {
            let pts = latin_hypercube(n, &bounds, &mut rng).unwrap();
            assert!(one_per_stratum(&pts, &bounds), "failed at n={n}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let bounds = Bounds::new(vec![(0.0, 1.0), (2.0, 4.0)]).unwrap();
        let a = latin_hypercube(10, &bounds, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = latin_hypercube(10, &bounds, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn n_below_two_rejected() {
        let bounds = Bounds::new(vec![(0.0, 1.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(latin_hypercube(1, &bounds, &mut rng).is_err());
    }

    #[test]
    fn inverted_bounds_rejected() {
        assert!(Bounds::new(vec![(1.0, 0.0)]).is_err());
    }

    #[test]
    fn normalize_roundtrip() {
        let bounds = Bounds::new(vec![(6.0, 15.0), (-1.0, 1.0)]).unwrap();
        let p = vec![9.3, 0.4];
        let back = bounds.denormalize(&bounds.normalize(&p));
        assert!((back[0] - p[0]).abs() < 1e-12);
        assert!((back[1] - p[1]).abs() < 1e-12);
    }
}
