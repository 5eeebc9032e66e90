use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;
use crate::scalar::Scalar;

/// Parameters of the synthetic biased-embedding generator.
///
/// Each row is `class_separation · μ_y + bias_strength · ν_s + ε` where the
/// class directions `μ` and group directions `ν` are mutually orthonormal
/// and `ε ~ N(0, noise_std² I)`. Two specs sharing `group_direction_seed`
/// but not `class_direction_seed` describe domains that encode the
/// sensitive attribute identically while the task directions differ.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// Rows per `(y, s)` cell before the correlation skew is applied.
    pub n_per_cell: usize,
    pub d: usize,
    pub n_classes: usize,
    pub n_groups: usize,
    pub class_separation: f64,
    pub bias_strength: f64,
    pub noise_std: f64,
    /// 0 makes `s` independent of `y`; towards 1 each class concentrates in
    /// its aligned group `y mod n_groups`.
    pub correlation: f64,
    pub seed: u64,
    pub class_direction_seed: u64,
    pub group_direction_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_per_cell: 5000,
            d: 64,
            n_classes: 2,
            n_groups: 2,
            class_separation: 1.5,
            bias_strength: 1.0,
            noise_std: 1.0,
            correlation: 0.7,
            seed: 0,
            class_direction_seed: 1,
            group_direction_seed: 2,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_cell == 0 || self.d == 0 {
            return Err(Error::config("synthetic n_per_cell and d must be positive"));
        }
        if self.n_classes < 2 || self.n_groups < 2 {
            return Err(Error::config("synthetic data needs at least 2 classes and 2 groups"));
        }
        if self.n_classes + self.n_groups > self.d {
            return Err(Error::config(format!(
                "{} orthogonal directions do not fit in dimension {}",
                self.n_classes + self.n_groups,
                self.d
            )));
        }
        for (name, v) in [
            ("class_separation", self.class_separation),
            ("bias_strength", self.bias_strength),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.noise_std > 0.0) || !self.noise_std.is_finite() {
            return Err(Error::config(format!("noise_std must be positive, got {}", self.noise_std)));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(Error::config(format!(
                "correlation must lie in [0, 1], got {}",
                self.correlation
            )));
        }
        Ok(())
    }

    /// Rows generated for cell `(y, s)`; never zero.
    pub fn cell_size(&self, y: usize, s: usize) -> usize {
        let g = self.n_groups as f64;
        let per_class = (self.n_per_cell * self.n_groups) as f64;
        let share = if s == y % self.n_groups {
            (1.0 + self.correlation * (g - 1.0)) / g
        } else {
            (1.0 - self.correlation) / g
        };
        ((per_class * share).round() as usize).max(1)
    }
}

/// `count` orthonormal vectors in `R^d` from a seeded Gaussian matrix,
/// orthogonalized (modified Gram-Schmidt, i.e. thin QR) after `fixed`.
pub fn orthonormal_directions(count: usize, d: usize, seed: u64, fixed: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if count + fixed.len() > d {
        return Err(Error::config(format!(
            "cannot fit {} orthogonal directions in dimension {d}",
            count + fixed.len()
        )));
    }
    let mut r = rng::seeded(seed);
    let mut basis: Vec<Vec<f64>> = fixed.to_vec();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut v: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        // two passes keep the result orthogonal to machine precision
        for _ in 0..2 {
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v.clone());
        out.push(v);
    }
    Ok(out)
}

/// Draws a dataset from `spec`; deterministic in the spec's seeds.
pub fn generate_synthetic<T: Scalar>(spec: &SyntheticSpec) -> Result<EmbeddingDataset<T>> {
    spec.validate()?;
    let group_dirs = orthonormal_directions(spec.n_groups, spec.d, spec.group_direction_seed, &[])?;
    let class_dirs = orthonormal_directions(spec.n_classes, spec.d, spec.class_direction_seed, &group_dirs)?;

    let mut cells = Vec::new();
    for y in 0..spec.n_classes {
        for s in 0..spec.n_groups {
            cells.extend(std::iter::repeat_n((y, s), spec.cell_size(y, s)));
        }
    }
    let mut r = rng::seeded(spec.seed);
    cells.shuffle(&mut r);

    let n = cells.len();
    let mut data = Vec::with_capacity(n * spec.d);
    for &(y, s) in &cells {
        for j in 0..spec.d {
            let noise: f64 = r.sample(StandardNormal);
            let v = spec.class_separation * class_dirs[y][j]
                + spec.bias_strength * group_dirs[s][j]
                + spec.noise_std * noise;
            data.push(T::of(v));
        }
    }
    let features = Matrix::from_vec(n, spec.d, data)?;
    let (labels, groups) = cells.into_iter().unzip();
    EmbeddingDataset::new(features, labels, groups, spec.n_classes, spec.n_groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_spec_same_dataset() {
        let spec = SyntheticSpec {
            n_per_cell: 20,
            d: 8,
            ..SyntheticSpec::default()
        };
        let a: EmbeddingDataset<f64> = generate_synthetic(&spec).unwrap();
        let b: EmbeddingDataset<f64> = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        let c: EmbeddingDataset<f64> = generate_synthetic(&SyntheticSpec { seed: 9, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn directions_are_orthonormal() {
        let g = orthonormal_directions(2, 10, 4, &[]).unwrap();
        let c = orthonormal_directions(3, 10, 5, &g).unwrap();
        let all: Vec<_> = g.iter().chain(&c).collect();
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-12);
            }
        }
        assert!(orthonormal_directions(3, 4, 0, &g).is_err());
    }

    #[test]
    fn correlation_skews_cells() {
        let spec = SyntheticSpec {
            n_per_cell: 100,
            correlation: 0.7,
            ..SyntheticSpec::default()
        };
        assert_eq!(spec.cell_size(0, 0), 170);
        assert_eq!(spec.cell_size(0, 1), 30);
        assert_eq!(spec.cell_size(1, 1), 170);
        assert_eq!(spec.cell_size(1, 0), 30);
        let flat = SyntheticSpec {
            correlation: 0.0,
            ..spec.clone()
        };
        assert_eq!(flat.cell_size(1, 0), 100);
        let full = SyntheticSpec {
            correlation: 1.0,
            ..spec
        };
        assert_eq!(full.cell_size(1, 0), 1);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let base = SyntheticSpec::default();
        for bad in [
            SyntheticSpec { correlation: 1.5, ..base.clone() },
            SyntheticSpec { noise_std: 0.0, ..base.clone() },
            SyntheticSpec { bias_strength: -1.0, ..base.clone() },
            SyntheticSpec { d: 3, ..base.clone() },
            SyntheticSpec { n_groups: 1, ..base.clone() },
        ] {
            assert!(matches!(generate_synthetic::<f64>(&bad), Err(Error::Config(_))));
        }
    }
}
