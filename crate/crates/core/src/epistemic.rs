//! Ensemble-based epistemic uncertainty: model selection on validation RMSE, bootstrap
//! refits of the top-`k` specs, and pointwise median / quantile bands over the members.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{bootstrap_indices, Dataset};
use crate::error::{Error, Result};
use crate::interval::IntervalSet;
use crate::learners::{fit, FittedModel, LearnerSpec};
use crate::level::Alpha;
use crate::num::{total_cmp, Scalar};
use crate::quantile::{conformal_quantile, minimal_factor, sorted_quantile, Overflow};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Serialize)]
pub struct RankedSpec {
    pub spec: LearnerSpec,
    pub val_rmse: f64,
}

/// Fits every spec once on `train`, ranks by RMSE on `val` (stable, so pool order breaks ties)
/// and returns the best `k`.
pub fn select_top_k<T: Scalar>(
    pool: &[LearnerSpec],
    train: &Dataset<T>,
    val: &Dataset<T>,
    k: usize,
    seed: u64,
) -> Result<Vec<RankedSpec>> {
    if pool.is_empty() {
        return Err(Error::Empty("model pool"));
    }
    if val.n() == 0 {
        return Err(Error::Empty("validation set"));
    }
    if k == 0 || k > pool.len() {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={}", pool.len())));
    }
    let mut ranked = pool
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let model = fit(spec, train.features().view(), train.target().view(), derive_seed(seed, &[i as u64]))?;
            let pred = model.predict_mean(val.features().view())?;
            let mse = pred
                .iter()
                .zip(val.target())
                .map(|(p, y)| (p.as_f64() - y.as_f64()).powi(2))
                .sum::<f64>()
                / val.n() as f64;
            Ok(RankedSpec {
                spec: spec.clone(),
                val_rmse: mse.sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| a.val_rmse.total_cmp(&b.val_rmse));
    ranked.truncate(k);
    Ok(ranked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resampling {
    Bootstrap,
    /// Every member sees the full training set.
    Identity,
}

/// `k x b` fitted members, spec-major order.
#[derive(Debug, Clone)]
pub struct PcsEnsemble<T> {
    members: Vec<FittedModel<T>>,
    selected_specs: Vec<LearnerSpec>,
    b: usize,
}

impl<T: Scalar> PcsEnsemble<T> {
    pub fn members(&self) -> &[FittedModel<T>] {
        &self.members
    }

    pub fn selected_specs(&self) -> &[LearnerSpec] {
        &self.selected_specs
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn k(&self) -> usize {
        self.selected_specs.len()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `m x n` matrix of member point predictions.
    pub fn member_predictions(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        if self.members.is_empty() {
            return Err(Error::Empty("ensemble"));
        }
        let rows = self
            .members
            .par_iter()
            .map(|m| m.predict_mean(x))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Array2::zeros((rows.len(), x.nrows()));
        for (mut dst, src) in out.axis_iter_mut(Axis(0)).zip(rows) {
            dst.assign(&src);
        }
        Ok(out)
    }

    /// Pointwise median of the members.
    pub fn predict(&self, x: ArrayView2<T>) -> Result<Array1<T>> {
        let preds = self.member_predictions(x)?;
        Ok(preds
            .axis_iter(Axis(1))
            .map(|col| {
                let mut v = col.to_vec();
                v.sort_by(total_cmp);
                sorted_quantile(&v, 0.5)
            })
            .collect())
    }
}

pub fn build_ensemble<T: Scalar>(specs: &[LearnerSpec], train: &Dataset<T>, b: usize, seed: u64) -> Result<PcsEnsemble<T>> {
    build_ensemble_with(specs, train, b, seed, Resampling::Bootstrap)
}

pub fn build_ensemble_with<T: Scalar>(
    specs: &[LearnerSpec],
    train: &Dataset<T>,
    b: usize,
    seed: u64,
    resampling: Resampling,
) -> Result<PcsEnsemble<T>> {
    if b == 0 {
        return Err(Error::invalid("bootstrap count b must be at least 1"));
    }
    if specs.is_empty() {
        return Err(Error::Empty("selected specs"));
    }
    let jobs: Vec<(usize, usize)> = (0..specs.len()).flat_map(|s| (0..b).map(move |j| (s, j))).collect();
    let members = jobs
        .par_iter()
        .enumerate()
        .map(|(member, &(s, j))| {
            let key = [s as u64, j as u64];
            let data = match resampling {
                Resampling::Bootstrap => train.select(&bootstrap_indices(train.n(), derive_seed(seed, &key))?),
                Resampling::Identity => train.clone(),
            };
            fit(
                &specs[s],
                data.features().view(),
                data.target().view(),
                derive_seed(seed, &[key[0], key[1], 1]),
            )
            .map_err(|e| Error::Member {
                member,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PcsEnsemble {
        members,
        selected_specs: specs.to_vec(),
        b,
    })
}

/// Ensemble median `f_hat` and the distances to the `alpha/2` and `1 - alpha/2` member quantiles.
#[derive(Debug, Clone, PartialEq)]
pub struct EpistemicBand<T> {
    pub f_hat: Array1<T>,
    pub lo_width: Array1<T>,
    pub hi_width: Array1<T>,
}

impl<T: Scalar> EpistemicBand<T> {
    /// Band from an `m x n` matrix of member predictions, nearest-rank throughout.
    pub fn from_member_predictions(preds: ArrayView2<T>, alpha: Alpha) -> Result<Self> {
        if preds.nrows() == 0 {
            return Err(Error::Empty("ensemble"));
        }
        let n = preds.ncols();
        let (mut f_hat, mut lo_width, mut hi_width) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        let mut buf = Vec::with_capacity(preds.nrows());
        for col in preds.axis_iter(Axis(1)) {
            buf.clear();
            buf.extend(col.iter().copied());
            buf.sort_by(total_cmp);
            let med = sorted_quantile(&buf, 0.5);
            f_hat.push(med);
            lo_width.push(med - sorted_quantile(&buf, alpha.lower_tau()));
            hi_width.push(sorted_quantile(&buf, alpha.upper_tau()) - med);
        }
        Ok(EpistemicBand {
            f_hat: f_hat.into(),
            lo_width: lo_width.into(),
            hi_width: hi_width.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.f_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f_hat.is_empty()
    }

    /// `[f_hat - gamma * lo_width, f_hat + gamma * hi_width]`.
    pub fn scaled_interval(&self, gamma: T) -> IntervalSet<T> {
        scale_band(&self.f_hat, &self.lo_width, &self.hi_width, gamma)
    }
}

pub(crate) fn scale_band<T: Scalar>(f: &Array1<T>, lo: &Array1<T>, hi: &Array1<T>, gamma: T) -> IntervalSet<T> {
    // zero widths stay zero even for an infinite factor
    let term = |w: T| if w == T::zero() { T::zero() } else { gamma * w };
    IntervalSet {
        lower: f.iter().zip(lo).map(|(&f, &w)| f - term(w)).collect(),
        upper: f.iter().zip(hi).map(|(&f, &w)| f + term(w)).collect(),
    }
}

pub fn epistemic_band<T: Scalar>(ensemble: &PcsEnsemble<T>, x: ArrayView2<T>, alpha: Alpha) -> Result<EpistemicBand<T>> {
    EpistemicBand::from_member_predictions(ensemble.member_predictions(x)?.view(), alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PcsCalibration<T> {
    pub gamma: T,
    /// Some miscovered calibration point had zero width on its violated side.
    pub unreachable: bool,
}

/// Smallest global factor on the epistemic band that covers `ceil((1 - alpha)(n + 1))`
/// calibration points (the largest per-point factor when that rank exceeds `n`).
pub fn calibrate_pcs_multiplicative<T: Scalar>(
    band: &EpistemicBand<T>,
    cal_y: ArrayView1<T>,
    alpha: Alpha,
) -> Result<PcsCalibration<T>> {
    if cal_y.len() != band.len() {
        return Err(Error::DimensionMismatch {
            expected: band.len(),
            got: cal_y.len(),
        });
    }
    let factors = pcs_factors(band, cal_y);
    let gamma = conformal_quantile(factors.as_slice().unwrap(), alpha, Overflow::LargestScore)
        .ok_or(Error::Empty("calibration set"))?;
    Ok(PcsCalibration {
        gamma,
        unreachable: gamma.is_infinite(),
    })
}

/// Per-point minimal factors `max{(f - y)/lo, (y - f)/hi, 0}`.
pub fn pcs_factors<T: Scalar>(band: &EpistemicBand<T>, y: ArrayView1<T>) -> Array1<T> {
    y.iter()
        .enumerate()
        .map(|(i, &y)| {
            let f = band.f_hat[i];
            minimal_factor(f - y, band.lo_width[i]).max(minimal_factor(y - f, band.hi_width[i]))
        })
        .collect()
}
