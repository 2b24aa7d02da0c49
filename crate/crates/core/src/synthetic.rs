//! Synthetic regression problems with a known Gaussian conditional law.
//!
//! `X ~ N(0, I_d)` and `Y = mu(X) + sigma(X) * eps` with
//! `mu(x) = 5 + sum_i (-1)^(i+1) beta_i |x_i|^(e_i)`, `e_i = 1.5` for odd `i` and `1.25`
//! for even `i` (1-based), and `beta_i ~ N(1, 0.5^2)`.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seed::{self, derive_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `sigma(x) = 1`
    #[default]
    Homoskedastic,
    /// `sigma(x) = 1 + |x|`, univariate only
    Sigma2,
    /// `sigma(x) = 1 + 1 / (1 + x^2)`, univariate only
    Sigma3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub d: usize,
    pub betas: Vec<f64>,
    pub noise_kind: NoiseKind,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Draws fresh coefficients from a seed derived from `seed`.
    pub fn new(d: usize, noise_kind: NoiseKind, seed: u64) -> Result<Self> {
        if noise_kind != NoiseKind::Homoskedastic && d != 1 {
            return Err(Error::invalid(format!("{noise_kind:?} noise is defined for d = 1 only")));
        }
        let betas = draw_coefficients(d, derive_seed(seed, &[0xBE7A]))?;
        Ok(SyntheticSpec {
            d,
            betas,
            noise_kind,
            seed,
        })
    }

    pub fn mean(&self, x: ArrayView1<f64>) -> Result<f64> {
        mean_function(x, &self.betas)
    }

    pub fn sigma(&self, x: ArrayView1<f64>) -> Result<f64> {
        noise_sigma(self.noise_kind, x)
    }
}

pub fn draw_coefficients(d: usize, seed: u64) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    let normal = Normal::new(1.0, 0.5).expect("valid normal parameters");
    let mut rng = seed::rng(seed);
    Ok((0..d).map(|_| normal.sample(&mut rng)).collect())
}

pub fn mean_function(x: ArrayView1<f64>, betas: &[f64]) -> Result<f64> {
    if x.len() != betas.len() {
        return Err(Error::DimensionMismatch {
            expected: betas.len(),
            got: x.len(),
        });
    }
    let sum: f64 = x
        .iter()
        .zip(betas)
        .enumerate()
        .map(|(i, (xi, b))| {
            // i is 0-based: even i is an odd 1-based position
            let (sign, exponent) = if i % 2 == 0 { (1.0, 1.5) } else { (-1.0, 1.25) };
            sign * b * xi.abs().powf(exponent)
        })
        .sum();
    Ok(5.0 + sum)
}

pub fn noise_sigma(kind: NoiseKind, x: ArrayView1<f64>) -> Result<f64> {
    if kind != NoiseKind::Homoskedastic && x.len() != 1 {
        return Err(Error::invalid(format!("{kind:?} noise is defined for d = 1 only")));
    }
    Ok(match kind {
        NoiseKind::Homoskedastic => 1.0,
        NoiseKind::Sigma2 => 1.0 + x[0].abs(),
        NoiseKind::Sigma3 => 1.0 + 1.0 / (1.0 + x[0] * x[0]),
    })
}

/// `n` draws from the spec's law, seeded by `spec.seed`.
pub fn generate_dataset(spec: &SyntheticSpec, n: usize) -> Result<Dataset<f64>> {
    generate_with_seed(spec, n, derive_seed(spec.seed, &[0xDA7A]))
}

/// `n` draws from the spec's law with an explicit seed, for fresh test samples.
pub fn generate_with_seed(spec: &SyntheticSpec, n: usize, seed: u64) -> Result<Dataset<f64>> {
    generate_scaled(spec, n, seed, 1.0)
}

fn generate_scaled(spec: &SyntheticSpec, n: usize, seed: u64, noise_scale: f64) -> Result<Dataset<f64>> {
    if n == 0 {
        return Err(Error::Empty("synthetic sample size"));
    }
    if spec.betas.len() != spec.d {
        return Err(Error::DimensionMismatch {
            expected: spec.d,
            got: spec.betas.len(),
        });
    }
    let mut rng = seed::rng(seed);
    let x = Array2::from_shape_simple_fn((n, spec.d), || StandardNormal.sample(&mut rng));
    let y = sample_targets_with(spec, &x, &mut rng, noise_scale)?;
    Dataset::from_arrays(x, y)
}

/// One fresh `Y` per row of `x`.
pub fn sample_targets(spec: &SyntheticSpec, x: &Array2<f64>, seed: u64) -> Result<Array1<f64>> {
    sample_targets_with(spec, x, &mut seed::rng(seed), 1.0)
}

fn sample_targets_with(
    spec: &SyntheticSpec,
    x: &Array2<f64>,
    rng: &mut seed::Rng,
    noise_scale: f64,
) -> Result<Array1<f64>> {
    x.axis_iter(Axis(0))
        .map(|row| {
            let eps: f64 = StandardNormal.sample(rng);
            Ok(spec.mean(row)? + noise_scale * spec.sigma(row)? * eps)
        })
        .collect::<Result<Vec<_>>>()
        .map(Array1::from)
}

/// `m` points drawn uniformly on the sphere of radius `radius` in `R^d`.
pub fn sphere_test_points(d: usize, radius: f64, m: usize, seed: u64) -> Result<Array2<f64>> {
    if d == 0 || m == 0 {
        return Err(Error::invalid("sphere points need d >= 1 and m >= 1"));
    }
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::invalid(format!("radius must be finite and non-negative, got {radius}")));
    }
    let mut rng = seed::rng(seed);
    let mut out = Array2::zeros((m, d));
    for mut row in out.axis_iter_mut(Axis(0)) {
        loop {
            row.mapv_inplace(|_: f64| StandardNormal.sample(&mut rng));
            let norm = row.dot(&row).sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|v| radius * v / norm);
                break;
            }
        }
    }
    Ok(out)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    NormalDist::standard().inverse_cdf(p)
}

/// Closed interval `(lower, upper)`.
pub type Interval = (f64, f64);

/// Exact central `1 - alpha` interval of `Y | X = x` under the generating law.
pub fn oracle_interval(x: ArrayView1<f64>, spec: &SyntheticSpec, alpha: f64) -> Result<Interval> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let z = normal_quantile(1.0 - alpha / 2.0);
    let (mu, sigma) = (spec.mean(x)?, spec.sigma(x)?);
    Ok((mu - z * sigma, mu + z * sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn spec1() -> SyntheticSpec {
        SyntheticSpec {
            d: 1,
            betas: vec![1.0],
            noise_kind: NoiseKind::Homoskedastic,
            seed: 5,
        }
    }

    #[test]
    fn coefficient_draws() {
        assert_eq!(draw_coefficients(1, 3).unwrap(), draw_coefficients(1, 3).unwrap());
        assert_eq!(draw_coefficients(20, 3).unwrap().len(), 20);
        assert!(draw_coefficients(0, 3).is_err());
        let b = draw_coefficients(10_000, 42).unwrap();
        let mean = b.iter().sum::<f64>() / b.len() as f64;
        let sd = (b.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b.len() - 1) as f64).sqrt();
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
        assert!((sd - 0.5).abs() < 0.02, "{sd}");
    }

    #[test]
    fn mean_function_by_hand() {
        assert_eq!(mean_function(array![0.0].view(), &[1.0]).unwrap(), 5.0);
        assert_eq!(mean_function(array![1.0].view(), &[1.0]).unwrap(), 6.0);
        assert_eq!(mean_function(array![1.0, 1.0].view(), &[1.0, 1.0]).unwrap(), 5.0);
        assert!(mean_function(array![1.0, 1.0].view(), &[1.0]).is_err());
    }

    #[test]
    fn sigma_variants() {
        let x = array![2.0];
        assert_eq!(noise_sigma(NoiseKind::Homoskedastic, array![3.0, -1.0].view()).unwrap(), 1.0);
        assert_eq!(noise_sigma(NoiseKind::Sigma2, x.view()).unwrap(), 3.0);
        assert_eq!(noise_sigma(NoiseKind::Sigma3, array![0.0].view()).unwrap(), 2.0);
        assert!(noise_sigma(NoiseKind::Sigma2, array![0.0, 1.0].view()).is_err());
        assert!(SyntheticSpec::new(2, NoiseKind::Sigma3, 0).is_err());
    }

    #[test]
    fn dataset_shape_and_zero_noise() {
        let spec = SyntheticSpec::new(1, NoiseKind::Homoskedastic, 1).unwrap();
        assert_eq!(generate_dataset(&spec, 5000).unwrap().n(), 5000);
        let ds = generate_scaled(&spec, 50, 9, 0.0).unwrap();
        for (row, y) in ds.features().axis_iter(Axis(0)).zip(ds.target()) {
            assert_eq!(*y, spec.mean(row).unwrap());
        }
    }

    #[test]
    fn noise_has_zero_mean() {
        let spec = SyntheticSpec::new(3, NoiseKind::Homoskedastic, 2).unwrap();
        let ds = generate_dataset(&spec, 100_000).unwrap();
        let resid: f64 = ds
            .features()
            .axis_iter(Axis(0))
            .zip(ds.target())
            .map(|(row, y)| y - spec.mean(row).unwrap())
            .sum::<f64>()
            / 100_000.0;
        assert!(resid.abs() < 0.02, "{resid}");
    }

    #[test]
    fn conditional_law_moments() {
        for kind in [NoiseKind::Homoskedastic, NoiseKind::Sigma2, NoiseKind::Sigma3] {
            let spec = SyntheticSpec::new(1, kind, 4).unwrap();
            let x = Array2::from_elem((50_000, 1), 1.3);
            let y = sample_targets(&spec, &x, 8).unwrap();
            let (mu, s) = (spec.mean(x.row(0)).unwrap(), spec.sigma(x.row(0)).unwrap());
            let z: Vec<f64> = y.iter().map(|v| (v - mu) / s).collect();
            let m = z.iter().sum::<f64>() / z.len() as f64;
            let v = z.iter().map(|v| (v - m).powi(2)).sum::<f64>() / z.len() as f64;
            assert!(m.abs() < 0.02 && (v - 1.0).abs() < 0.03, "{kind:?}: {m} {v}");
        }
    }

    #[test]
    fn sphere_points() {
        let p = sphere_test_points(1, 2.0, 200, 3).unwrap();
        assert!(p.iter().all(|&v| v == 2.0 || v == -2.0));
        assert!(p.iter().any(|&v| v < 0.0) && p.iter().any(|&v| v > 0.0));
        let p = sphere_test_points(4, 0.0, 10, 3).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
        assert!(sphere_test_points(2, -1.0, 10, 3).is_err());

        let m = 20_000;
        let p = sphere_test_points(3, 2.5, m, 6).unwrap();
        for row in p.axis_iter(Axis(0)) {
            assert!((row.dot(&row).sqrt() - 2.5).abs() < 1e-12);
        }
        let mean = p.mean_axis(Axis(0)).unwrap();
        assert!(mean.dot(&mean).sqrt() <= 3.0 / (m as f64).sqrt() * 2.5);
    }

    #[test]
    fn oracle_interval_values() {
        let spec = spec1();
        let (lo, hi) = oracle_interval(array![1.0].view(), &spec, 0.1).unwrap();
        assert!((lo - (6.0 - 1.6449)).abs() < 1e-3 && (hi - (6.0 + 1.6449)).abs() < 1e-3);
        assert!((normal_quantile(0.95) - 1.6448536269514722).abs() < 1e-9);
        let (lo, hi) = oracle_interval(array![1.0].view(), &spec, 1.0 - 1e-12).unwrap();
        assert!((hi - lo).abs() < 1e-9 && (lo - 6.0).abs() < 1e-9);
        assert!(oracle_interval(array![1.0].view(), &spec, 1.0).is_err());
    }

    #[test]
    fn oracle_interval_coverage() {
        let spec = SyntheticSpec::new(1, NoiseKind::Sigma2, 1).unwrap();
        let x = Array2::from_elem((100_000, 1), -0.7);
        let y = sample_targets(&spec, &x, 77).unwrap();
        let (lo, hi) = oracle_interval(x.row(0), &spec, 0.1).unwrap();
        let cov = y.iter().filter(|v| lo <= **v && **v <= hi).count() as f64 / 100_000.0;
        assert!((cov - 0.9).abs() < 0.005, "{cov}");
    }

    proptest! {
        #[test]
        fn mean_is_even_in_each_coordinate(x in proptest::collection::vec(-4.0f64..4.0, 1..6), flip in 0usize..6) {
            let betas = draw_coefficients(x.len(), 1).unwrap();
            let mut y = x.clone();
            let i = flip % x.len();
            y[i] = -y[i];
            let a = mean_function(ArrayView1::from(&x), &betas).unwrap();
            let b = mean_function(ArrayView1::from(&y), &betas).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
