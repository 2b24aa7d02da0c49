//! Residual quantile regression for the aleatoric part of the interval, and the conformalized
//! quantile regression baselines fitted on targets or on residuals.

use std::sync::Arc;

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::data::{bootstrap_indices, Dataset};
use crate::error::{Error, Result};
use crate::interval::IntervalSet;
use crate::learners::{fit, FittedModel, LearnerSpec};
use crate::level::Alpha;
use crate::num::Scalar;
use crate::quantile::{conformal_quantile, nearest_rank_quantile, Overflow};
use crate::seed::derive_seed;

/// Bagged quantile curves at a fixed list of levels. Any-level learners are fitted once per bag
/// and shared across levels; single-level learners get one fit per level.
#[derive(Debug, Clone)]
pub struct QuantileBag<T> {
    taus: Vec<f64>,
    /// `[bag][level]`
    members: Vec<Vec<Arc<FittedModel<T>>>>,
}

impl<T: Scalar> QuantileBag<T> {
    /// `bag_count = 1` fits once on the full data; larger counts fit on bootstrap resamples.
    pub fn fit(spec: &LearnerSpec, x: ArrayView2<T>, y: ArrayView1<T>, taus: &[f64], bag_count: usize, seed: u64) -> Result<Self> {
        if bag_count == 0 {
            return Err(Error::invalid("bag_count must be at least 1"));
        }
        if let Some(&tau) = taus.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
            return Err(Error::UnsupportedQuantile { tau });
        }
        let per_level = spec.validate().is_ok() && spec.kind.fixed_level();
        let members = (0..bag_count)
            .into_par_iter()
            .map(|bag| {
                let fit_seed = derive_seed(seed, &[bag as u64, 1]);
                let fitted = if bag_count == 1 {
                    Self::fit_bag(spec, x, y, taus, per_level, fit_seed)
                } else {
                    let rows = bootstrap_indices(y.len(), derive_seed(seed, &[bag as u64]))?;
                    let (xs, ys) = (x.select(Axis(0), &rows), y.select(Axis(0), &rows));
                    Self::fit_bag(spec, xs.view(), ys.view(), taus, per_level, fit_seed)
                };
                fitted.map_err(|e| Error::Member {
                    member: bag,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(QuantileBag {
            taus: taus.to_vec(),
            members,
        })
    }

    fn fit_bag(
        spec: &LearnerSpec,
        x: ArrayView2<T>,
        y: ArrayView1<T>,
        taus: &[f64],
        per_level: bool,
        seed: u64,
    ) -> Result<Vec<Arc<FittedModel<T>>>> {
        if per_level {
            taus.iter().map(|&t| Ok(Arc::new(fit(&spec.for_quantile(t), x, y, seed)?))).collect()
        } else {
            let model = Arc::new(fit(spec, x, y, seed)?);
            Ok(vec![model; taus.len()])
        }
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn bag_count(&self) -> usize {
        self.members.len()
    }

    /// One curve per level: pointwise median over bags.
    pub fn predict(&self, x: ArrayView2<T>) -> Result<Vec<Array1<T>>> {
        // per bag: one prediction vector per level
        let per_bag = self
            .members
            .par_iter()
            .map(|models| {
                if models.len() > 1 && models.iter().all(|m| Arc::ptr_eq(m, &models[0])) {
                    models[0].predict_quantiles(x, &self.taus)
                } else {
                    models.iter().zip(&self.taus).map(|(m, &t)| m.predict_quantile(x, t)).collect()
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let n = x.nrows();
        let mut buf = Vec::with_capacity(per_bag.len());
        Ok((0..self.taus.len())
            .map(|l| {
                (0..n)
                    .map(|i| {
                        buf.clear();
                        buf.extend(per_bag.iter().map(|p| p[l][i]));
                        nearest_rank_quantile(&mut buf, 0.5)
                    })
                    .collect()
            })
            .collect())
    }
}

/// Bagged residual quantile curves at `alpha/2`, `0.5` and `1 - alpha/2`.
#[derive(Debug, Clone)]
pub struct ResidualQuantiles<T> {
    bag: QuantileBag<T>,
    alpha: Alpha,
}

/// Raw residual curves `(r_lo, r_mid, r_hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualCurves<T> {
    pub lo: Array1<T>,
    pub mid: Array1<T>,
    pub hi: Array1<T>,
}

pub fn fit_residual_quantiles<T: Scalar>(
    train: &Dataset<T>,
    f_hat_train: ArrayView1<T>,
    spec: &LearnerSpec,
    alpha: Alpha,
    bag_count: usize,
    seed: u64,
) -> Result<ResidualQuantiles<T>> {
    if f_hat_train.len() != train.n() {
        return Err(Error::DimensionMismatch {
            expected: train.n(),
            got: f_hat_train.len(),
        });
    }
    let residuals = train.target() - &f_hat_train;
    let taus = [alpha.lower_tau(), 0.5, alpha.upper_tau()];
    Ok(ResidualQuantiles {
        bag: QuantileBag::fit(spec, train.features().view(), residuals.view(), &taus, bag_count, seed)?,
        alpha,
    })
}

impl<T: Scalar> ResidualQuantiles<T> {
    pub fn alpha(&self) -> Alpha {
        self.alpha
    }

    pub fn bag_count(&self) -> usize {
        self.bag.bag_count()
    }

    pub fn predict(&self, x: ArrayView2<T>) -> Result<ResidualCurves<T>> {
        let mut curves = self.bag.predict(x)?.into_iter();
        let (lo, mid, hi) = (curves.next().unwrap(), curves.next().unwrap(), curves.next().unwrap());
        Ok(ResidualCurves { lo, mid, hi })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AleatoricBand<T> {
    pub lo_width: Array1<T>,
    pub hi_width: Array1<T>,
    pub center_shift: Array1<T>,
}

impl<T: Scalar> AleatoricBand<T> {
    /// Widths around the residual median, clamped at zero where the curves cross.
    pub fn from_curves(curves: &ResidualCurves<T>) -> Self {
        let clamp = |d: T| d.max(T::zero());
        AleatoricBand {
            lo_width: (&curves.mid - &curves.lo).mapv(clamp),
            hi_width: (&curves.hi - &curves.mid).mapv(clamp),
            center_shift: curves.mid.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.lo_width.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo_width.is_empty()
    }
}

pub fn aleatoric_band<T: Scalar>(model: &ResidualQuantiles<T>, x: ArrayView2<T>) -> Result<AleatoricBand<T>> {
    Ok(AleatoricBand::from_curves(&model.predict(x)?))
}

/// What the baseline quantile curves are fitted on.
#[derive(Debug, Clone, Copy)]
pub enum CqrMode<'a, T> {
    OnTargets,
    /// Fit on `y - f_hat`, then shift the curves back by `f_hat`.
    OnResiduals {
        f_train: ArrayView1<'a, T>,
        f_cal: ArrayView1<'a, T>,
        f_test: ArrayView1<'a, T>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CqrResult<T> {
    pub intervals: IntervalSet<T>,
    pub gamma: T,
}

/// Scores `max{lo - y, y - hi}`.
pub fn cqr_scores<T: Scalar>(lo: ArrayView1<T>, hi: ArrayView1<T>, y: ArrayView1<T>) -> Array1<T> {
    lo.iter()
        .zip(hi)
        .zip(y)
        .map(|((&l, &h), &y)| (l - y).max(y - h))
        .collect()
}

/// Additive conformal correction: the `ceil((1 - alpha)(n + 1))`-th smallest score, the
/// largest one on overflow. May be negative.
pub fn cqr_calibrate<T: Scalar>(lo: ArrayView1<T>, hi: ArrayView1<T>, y: ArrayView1<T>, alpha: Alpha) -> Result<T> {
    if lo.len() != y.len() || hi.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: lo.len().min(hi.len()),
        });
    }
    let scores = cqr_scores(lo, hi, y);
    conformal_quantile(scores.as_slice().unwrap(), alpha, Overflow::LargestScore).ok_or(Error::Empty("calibration set"))
}

pub fn cqr_interval<T: Scalar>(lo: ArrayView1<T>, hi: ArrayView1<T>, gamma: T) -> IntervalSet<T> {
    IntervalSet {
        lower: lo.mapv(|v| v - gamma),
        upper: hi.mapv(|v| v + gamma),
    }
}

/// Conformalized quantile regression with bagged curves at `alpha/2` and `1 - alpha/2`.
#[allow(clippy::too_many_arguments)]
pub fn cqr_baseline<T: Scalar>(
    train: &Dataset<T>,
    cal: &Dataset<T>,
    test_x: ArrayView2<T>,
    spec: &LearnerSpec,
    alpha: Alpha,
    mode: CqrMode<'_, T>,
    bag_count: usize,
    seed: u64,
) -> Result<CqrResult<T>> {
    let taus = [alpha.lower_tau(), alpha.upper_tau()];
    let (target, shift_cal, shift_test) = match mode {
        CqrMode::OnTargets => (train.target().clone(), None, None),
        CqrMode::OnResiduals { f_train, f_cal, f_test } => {
            for (got, expected) in [(f_train.len(), train.n()), (f_cal.len(), cal.n()), (f_test.len(), test_x.nrows())] {
                if got != expected {
                    return Err(Error::DimensionMismatch { expected, got });
                }
            }
            (train.target() - &f_train, Some(f_cal), Some(f_test))
        }
    };
    let bag = QuantileBag::fit(spec, train.features().view(), target.view(), &taus, bag_count, seed)?;
    let shifted = |mut curves: Vec<Array1<T>>, shift: Option<ArrayView1<T>>| {
        if let Some(s) = shift {
            for c in curves.iter_mut() {
                c.zip_mut_with(&s, |a, &b| *a = *a + b);
            }
        }
        curves
    };
    let cal_curves = shifted(bag.predict(cal.features().view())?, shift_cal);
    let test_curves = shifted(bag.predict(test_x)?, shift_test);
    let gamma = cqr_calibrate(cal_curves[0].view(), cal_curves[1].view(), cal.target().view(), alpha)?;
    Ok(CqrResult {
        intervals: cqr_interval(test_curves[0].view(), test_curves[1].view(), gamma),
        gamma,
    })
}

/// CQR from curves already predicted on the calibration and test rows.
pub fn cqr_from_curves<T: Scalar>(
    cal_lo: ArrayView1<T>,
    cal_hi: ArrayView1<T>,
    cal_y: ArrayView1<T>,
    test_lo: ArrayView1<T>,
    test_hi: ArrayView1<T>,
    alpha: Alpha,
) -> Result<CqrResult<T>> {
    let gamma = cqr_calibrate(cal_lo, cal_hi, cal_y, alpha)?;
    Ok(CqrResult {
        intervals: cqr_interval(test_lo, test_hi, gamma),
        gamma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::LearnerKind;
    use crate::seed;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn alpha(a: f64) -> Alpha {
        Alpha::new(a).unwrap()
    }

    fn noisy(n: usize, s: u64) -> Dataset<f64> {
        let mut rng = seed::rng(s);
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64 / n as f64 * 2.0 - 1.0);
        let y = Array1::from_shape_fn(n, |_| StandardNormal.sample(&mut rng));
        Dataset::from_arrays(x, y).unwrap()
    }

    #[test]
    fn exact_fit_gives_zero_curves() {
        let ds = noisy(50, 1);
        let spec = LearnerSpec::new(LearnerKind::KnnQuantile).with("k", 5.0);
        let model = fit_residual_quantiles(&ds, ds.target().view(), &spec, alpha(0.1), 3, 0).unwrap();
        let c = model.predict(ds.features().view()).unwrap();
        assert!(c.lo.iter().chain(c.mid.iter()).chain(c.hi.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_residual_spread() {
        let ds = noisy(5000, 7);
        let zero = Array1::zeros(5000);
        let spec = LearnerSpec::new(LearnerKind::KnnQuantile).with("k", 500.0);
        let model = fit_residual_quantiles(&ds, zero.view(), &spec, alpha(0.1), 1, 0).unwrap();
        let c = model.predict(array![[0.0]].view()).unwrap();
        let spread = c.hi[0] - c.lo[0];
        assert!((spread - 2.0 * 1.6449).abs() < 0.15, "{spread}");
        let band = AleatoricBand::from_curves(&c);
        assert!((band.lo_width[0] - band.hi_width[0]).abs() < 0.25);
    }

    #[test]
    fn single_bag_is_single_fit() {
        let ds = noisy(80, 3);
        let zero = Array1::zeros(80);
        let spec = LearnerSpec::new(LearnerKind::QuantileForest).with("trees", 10.0).with("min_leaf", 5.0);
        let model = fit_residual_quantiles(&ds, zero.view(), &spec, alpha(0.2), 1, 9).unwrap();
        let direct = fit(&spec, ds.features().view(), ds.target().view(), derive_seed(9, &[0, 1])).unwrap();
        let probe = ds.features().view();
        let c = model.predict(probe).unwrap();
        assert_eq!(c.lo, direct.predict_quantile(probe, 0.1).unwrap());
        assert_eq!(c.hi, direct.predict_quantile(probe, 0.9).unwrap());
    }

    #[test]
    fn linear_learner_fits_each_level() {
        let ds = noisy(300, 5);
        let zero = Array1::zeros(300);
        let spec = LearnerSpec::new(LearnerKind::LinearPinball).with("solver", "irls");
        let model = fit_residual_quantiles(&ds, zero.view(), &spec, alpha(0.1), 2, 1).unwrap();
        let c = model.predict(array![[0.0]].view()).unwrap();
        assert!(c.lo[0] < c.mid[0] && c.mid[0] < c.hi[0]);
    }

    #[test]
    fn band_by_hand() {
        let curves = ResidualCurves {
            lo: array![-2.0, 0.5],
            mid: array![0.0, 0.0],
            hi: array![3.0, 3.0],
        };
        let band = AleatoricBand::from_curves(&curves);
        assert_eq!(band.lo_width, array![2.0, 0.0]);
        assert_eq!(band.hi_width, array![3.0, 3.0]);
    }

    #[test]
    fn cqr_gamma_by_hand() {
        // scores lo - y = {-0.2, 0.0, 0.3, 0.7}
        let y = array![0.2, 0.0, -0.3, -0.7];
        let lo = Array1::zeros(4);
        let hi = Array1::from_elem(4, 10.0);
        let g = cqr_calibrate(lo.view(), hi.view(), y.view(), alpha(0.2)).unwrap();
        assert_eq!(g, 0.7);
        let iv = cqr_interval(lo.view(), hi.view(), g);
        assert_eq!((0..4).filter(|&i| iv.contains(i, y[i])).count(), 4);
    }

    #[test]
    fn cqr_gamma_can_shrink() {
        let y = array![0.0, 0.1, -0.1, 0.05];
        let lo = Array1::from_elem(4, -1.0);
        let hi = Array1::from_elem(4, 1.0);
        assert!(cqr_calibrate(lo.view(), hi.view(), y.view(), alpha(0.2)).unwrap() < 0.0);
    }

    #[test]
    fn residual_mode_with_zero_fit_matches_targets() {
        let (tr, cal, te) = (noisy(120, 1), noisy(60, 2), noisy(30, 3));
        let spec = LearnerSpec::new(LearnerKind::QuantileForest).with("trees", 5.0).with("min_leaf", 5.0);
        let a = alpha(0.1);
        let on_targets = cqr_baseline(&tr, &cal, te.features().view(), &spec, a, CqrMode::OnTargets, 3, 11).unwrap();
        let (z1, z2, z3) = (Array1::zeros(120), Array1::zeros(60), Array1::zeros(30));
        let mode = CqrMode::OnResiduals {
            f_train: z1.view(),
            f_cal: z2.view(),
            f_test: z3.view(),
        };
        let on_resid = cqr_baseline(&tr, &cal, te.features().view(), &spec, a, mode, 3, 11).unwrap();
        assert_eq!(on_targets, on_resid);
    }

    proptest! {
        #[test]
        fn cqr_duality(
            rows in proptest::collection::vec((-2.0f64..2.0, 0.0f64..2.0, -4.0f64..4.0), 1..200),
            a in 0.02f64..0.6,
        ) {
            let a = alpha(a);
            let lo: Array1<f64> = rows.iter().map(|r| r.0).collect();
            let hi: Array1<f64> = rows.iter().map(|r| r.0 + r.1).collect();
            let y: Array1<f64> = rows.iter().map(|r| r.2).collect();
            let n = rows.len();
            let g = cqr_calibrate(lo.view(), hi.view(), y.view(), a).unwrap();
            let scores = cqr_scores(lo.view(), hi.view(), y.view());
            let iv = cqr_interval(lo.view(), hi.view(), g);
            for i in 0..n {
                if scores[i] < g - 1e-9 {
                    prop_assert!(iv.contains(i, y[i]));
                } else if scores[i] > g + 1e-9 {
                    prop_assert!(!iv.contains(i, y[i]));
                }
            }
            let covered = (0..n).filter(|&i| iv.lower[i] - 1e-9 <= y[i] && y[i] <= iv.upper[i] + 1e-9).count();
            let rank = a.conformal_rank(n);
            if rank <= n {
                prop_assert!(covered >= rank);
            }
        }

        #[test]
        fn widths_nonnegative(lo in -5.0f64..5.0, mid in -5.0f64..5.0, hi in -5.0f64..5.0) {
            let band = AleatoricBand::from_curves(&ResidualCurves { lo: array![lo], mid: array![mid], hi: array![hi] });
            prop_assert!(band.lo_width[0] >= 0.0 && band.hi_width[0] >= 0.0);
        }
    }
}
