//! Deterministic sample grids on the slit tangent bundle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::finsler::TangentSample;

/// Lattice of base points crossed with a set of fiber directions and radii.
#[derive(Clone, Debug)]
pub struct GridSpec {
    pub base_points_per_axis: usize,
    pub base_range: (f64, f64),
    pub fiber_directions: usize,
    pub fiber_radii: Vec<f64>,
    pub seed: u64,
    pub jitter: bool,
}

impl GridSpec {
    /// Grid used when validating structure axioms: base lattice in [-1, 1]^n,
    /// unit directions scaled by {0.5, 1, 2}.
    pub fn validation_default() -> GridSpec {
        GridSpec {
            base_points_per_axis: 3,
            base_range: (-1.0, 1.0),
            fiber_directions: 8,
            fiber_radii: vec![0.5, 1.0, 2.0],
            seed: 0,
            jitter: false,
        }
    }

    /// Grid used when classifying vector fields: multiple fibers per base
    /// point so vertical constancy of the conformal factor can be probed.
    pub fn classification_default() -> GridSpec {
        GridSpec {
            base_points_per_axis: 3,
            base_range: (-1.0, 1.0),
            fiber_directions: 8,
            fiber_radii: vec![0.7, 1.3],
            seed: 0,
            jitter: false,
        }
    }

    pub fn with_base_range(mut self, lo: f64, hi: f64) -> GridSpec {
        self.base_range = (lo, hi);
        self
    }

    /// Materializes the grid for dimension `n`. Deterministic for a fixed
    /// seed; the zero section is excluded by construction (radii must be
    /// positive).
    pub fn samples(&self, n: usize) -> Result<Vec<TangentSample>> {
        if self.base_points_per_axis == 0 {
            return Err(Error::argument("grid needs at least one base point per axis"));
        }
        if self.fiber_directions == 0 || self.fiber_radii.is_empty() {
            return Err(Error::argument("grid needs fiber directions and radii"));
        }
        if self.fiber_radii.iter().any(|&r| r <= 0.0) {
            return Err(Error::argument("fiber radii must be positive"));
        }
        let (lo, hi) = self.base_range;
        if !(lo < hi) {
            return Err(Error::argument("base range must satisfy lo < hi"));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let axis: Vec<f64> = if self.base_points_per_axis == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..self.base_points_per_axis)
                .map(|k| lo + (hi - lo) * k as f64 / (self.base_points_per_axis - 1) as f64)
                .collect()
        };
        let spacing = if self.base_points_per_axis > 1 {
            (hi - lo) / (self.base_points_per_axis - 1) as f64
        } else {
            hi - lo
        };

        let directions = unit_directions(n, self.fiber_directions, &mut rng);

        let mut base_points = vec![vec![]];
        for _ in 0..n {
            let mut extended = Vec::with_capacity(base_points.len() * axis.len());
            for p in &base_points {
                for &c in &axis {
                    let mut q = p.clone();
                    q.push(c);
                    extended.push(q);
                }
            }
            base_points = extended;
        }

        let mut samples = Vec::new();
        for mut x in base_points {
            if self.jitter {
                for c in x.iter_mut() {
                    *c += rng.gen_range(-0.1..0.1) * spacing;
                }
            }
            for dir in &directions {
                for &r in &self.fiber_radii {
                    let y: Vec<f64> = dir.iter().map(|d| d * r).collect();
                    samples.push(TangentSample::new(x.clone(), y)?);
                }
            }
        }
        Ok(samples)
    }
}

fn unit_directions(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    match n {
        2 => (0..count)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                vec![theta.cos(), theta.sin()]
            })
            .collect(),
        3 => {
            // Fibonacci sphere
            let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * k as f64;
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
        _ => (0..count)
            .map(|_| {
                loop {
                    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                    if norm > 1e-3 {
                        return v.into_iter().map(|c| c / norm).collect();
                    }
                }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_size_and_determinism() {
        let spec = GridSpec::classification_default();
        let a = spec.samples(2).unwrap();
        let b = spec.samples(2).unwrap();
        assert_eq!(a.len(), 9 * 8 * 2);
        for (s, t) in a.iter().zip(&b) {
            assert_eq!(s.x, t.x);
            assert_eq!(s.y, t.y);
        }
    }

    #[test]
    fn directions_are_unit_norm() {
        for n in [2usize, 3, 4] {
            let spec = GridSpec::validation_default();
            for s in spec.samples(n).unwrap() {
                let r = s.y.iter().map(|c| c * c).sum::<f64>().sqrt();
                assert!(
                    spec.fiber_radii.iter().any(|&want| (r - want).abs() < 1e-9),
                    "unexpected fiber radius {r}"
                );
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = GridSpec::validation_default();
        spec.fiber_radii = vec![];
        assert!(spec.samples(2).is_err());
        let mut spec = GridSpec::validation_default();
        spec.fiber_radii = vec![0.0];
        assert!(spec.samples(2).is_err());
        let spec = GridSpec::validation_default().with_base_range(1.0, -1.0);
        assert!(spec.samples(2).is_err());
    }
}
