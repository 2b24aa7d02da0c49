//! Calibration engine. For each `lambda` on a grid the global scale `gamma1` is set by split
//! conformal calibration of the combined band `f_hat -/+ gamma1 * (ale + lambda * epi)`, and the
//! `lambda` with the smallest interval quantile loss wins.

use ndarray::{Array1, ArrayView1};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aleatoric::AleatoricBand;
use crate::epistemic::EpistemicBand;
use crate::error::{Error, Result};
use crate::interval::IntervalSet;
use crate::level::Alpha;
use crate::num::Scalar;
use crate::quantile::{conformal_quantile, minimal_factor, Overflow, WIDTH_EPS};
use crate::seed;

/// Point prediction plus the four half-widths of the two uncertainty sources, optionally with
/// observed targets.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyComponents<T> {
    pub f_hat: Array1<T>,
    pub ale_lo: Array1<T>,
    pub ale_hi: Array1<T>,
    pub epi_lo: Array1<T>,
    pub epi_hi: Array1<T>,
    pub y: Option<Array1<T>>,
}

impl<T: Scalar> UncertaintyComponents<T> {
    pub fn new(
        f_hat: Array1<T>,
        ale_lo: Array1<T>,
        ale_hi: Array1<T>,
        epi_lo: Array1<T>,
        epi_hi: Array1<T>,
        y: Option<Array1<T>>,
    ) -> Result<Self> {
        let n = f_hat.len();
        for len in [ale_lo.len(), ale_hi.len(), epi_lo.len(), epi_hi.len()]
            .into_iter()
            .chain(y.as_ref().map(|y| y.len()))
        {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        let c = UncertaintyComponents {
            f_hat,
            ale_lo,
            ale_hi,
            epi_lo,
            epi_hi,
            y,
        };
        if let Some(row) = c.first_invalid_row() {
            return Err(Error::Schema {
                row: row + 1,
                message: "widths must be finite and nonnegative, f_hat and y finite".into(),
            });
        }
        Ok(c)
    }

    pub fn from_bands(epi: &EpistemicBand<T>, ale: &AleatoricBand<T>, y: Option<Array1<T>>) -> Result<Self> {
        Self::new(
            epi.f_hat.clone(),
            ale.lo_width.clone(),
            ale.hi_width.clone(),
            epi.lo_width.clone(),
            epi.hi_width.clone(),
            y,
        )
    }

    fn first_invalid_row(&self) -> Option<usize> {
        (0..self.len()).find(|&i| {
            let widths = [self.ale_lo[i], self.ale_hi[i], self.epi_lo[i], self.epi_hi[i]];
            !self.f_hat[i].is_finite()
                || self.y.as_ref().is_some_and(|y| !y[i].is_finite())
                || widths.iter().any(|w| !w.is_finite() || *w < T::zero())
        })
    }

    pub fn len(&self) -> usize {
        self.f_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f_hat.is_empty()
    }

    pub fn targets(&self) -> Result<&Array1<T>> {
        self.y.as_ref().ok_or_else(|| Error::invalid("components carry no targets"))
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        let pick = |a: &Array1<T>| rows.iter().map(|&i| a[i]).collect::<Array1<T>>();
        UncertaintyComponents {
            f_hat: pick(&self.f_hat),
            ale_lo: pick(&self.ale_lo),
            ale_hi: pick(&self.ale_hi),
            epi_lo: pick(&self.epi_lo),
            epi_hi: pick(&self.epi_hi),
            y: self.y.as_ref().map(pick),
        }
    }

    /// Copy with both epistemic widths multiplied by `c`.
    pub fn scale_epistemic(&self, c: T) -> Self {
        UncertaintyComponents {
            epi_lo: self.epi_lo.mapv(|w| w * c),
            epi_hi: self.epi_hi.mapv(|w| w * c),
            ..self.clone()
        }
    }
}

/// Sorted, deduplicated, finite nonnegative `lambda` values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaGrid<T> {
    values: Vec<T>,
}

impl<T: Scalar> LambdaGrid<T> {
    pub fn new(values: impl IntoIterator<Item = T>) -> Result<Self> {
        let mut values: Vec<T> = values.into_iter().collect();
        if values.is_empty() {
            return Err(Error::Empty("lambda grid"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < T::zero()) {
            return Err(Error::invalid(format!("lambda grid value {v} must be finite and nonnegative")));
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        Ok(LambdaGrid { values })
    }

    /// The grid with 0 and 1 added if missing.
    pub fn with_anchors(&self) -> Self {
        let mut v = self.values.clone();
        v.extend([T::zero(), T::one()]);
        LambdaGrid::new(v).unwrap()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, v: T) -> bool {
        self.values.contains(&v)
    }
}

/// `{0, 0.01, ..., 0.09}`, 4000 log-spaced points on `[0.1, 100]`, and `1`.
pub fn default_lambda_grid<T: Scalar>() -> LambdaGrid<T> {
    let linear = (0..10).map(|i| i as f64 / 100.0);
    let (lo, hi) = (0.1f64.log10(), 100f64.log10());
    let log = (0..4000).map(move |i| {
        if i == 0 {
            0.1
        } else if i == 3999 {
            100.0
        } else {
            10f64.powf(lo + (hi - lo) * i as f64 / 3999.0)
        }
    });
    LambdaGrid::new(linear.chain(log).chain([1.0]).map(T::lit)).unwrap()
}

/// `(l - y) / (f - l)` for one side: `+inf` for a violated zero-width side, `-inf` (no constraint)
/// for a satisfied one.
fn side_score<T: Scalar>(excess: T, width: T) -> T {
    if width > T::zero() {
        excess / width.max(T::lit(WIDTH_EPS))
    } else if excess > T::zero() {
        T::infinity()
    } else {
        T::neg_infinity()
    }
}

fn point_score<T: Scalar>(f: T, y: T, lo_width: T, hi_width: T) -> T {
    side_score(f - y - lo_width, lo_width).max(side_score(y - f - hi_width, hi_width))
}

/// Relative miscoverage of the preliminary interval `[f - ale_lo - lambda epi_lo, f + ale_hi + lambda epi_hi]`:
/// negative inside, zero on the boundary, and `s` when the point sits `s` widths beyond it.
pub fn conformity_scores<T: Scalar>(components: &UncertaintyComponents<T>, lambda: T) -> Result<Array1<T>> {
    let y = components.targets()?;
    Ok((0..components.len())
        .map(|i| {
            let (lo, hi) = band_widths(components, i, lambda);
            point_score(components.f_hat[i], y[i], lo, hi)
        })
        .collect())
}

fn band_widths<T: Scalar>(c: &UncertaintyComponents<T>, i: usize, lambda: T) -> (T, T) {
    let term = |w: T| if w == T::zero() { T::zero() } else { lambda * w };
    (c.ale_lo[i] + term(c.epi_lo[i]), c.ale_hi[i] + term(c.epi_hi[i]))
}

/// Scale `gamma1` for the preliminary band from its conformity scores. A score `s` means the
/// point is covered once the band is stretched by `1 + s`, so `gamma1 = max(0, 1 + s_(k))` with
/// `k = ceil((1 - alpha)(n + 1))`; on overflow `s_(k)` is the largest score or `+inf`.
pub fn gamma1_for_lambda<T: Scalar>(scores: &[T], alpha: Alpha, overflow: Overflow) -> Result<T> {
    let q = conformal_quantile(scores, alpha, overflow).ok_or(Error::Empty("conformity scores"))?;
    Ok((T::one() + q).max(T::zero()))
}

/// `lambda * gamma1` with `0 * inf` taken as 0.
pub fn gamma2_of<T: Scalar>(lambda: T, gamma1: T) -> T {
    if lambda == T::zero() || gamma1 == T::zero() {
        T::zero()
    } else {
        lambda * gamma1
    }
}

/// `[f - gamma1 ale_lo - lambda gamma1 epi_lo, f + gamma1 ale_hi + lambda gamma1 epi_hi]`.
/// An infinite `gamma1` gives the whole real line.
pub fn calibrated_interval<T: Scalar>(components: &UncertaintyComponents<T>, lambda: T, gamma1: T) -> IntervalSet<T> {
    let n = components.len();
    if gamma1.is_infinite() {
        return IntervalSet {
            lower: Array1::from_elem(n, T::neg_infinity()),
            upper: Array1::from_elem(n, T::infinity()),
        };
    }
    let gamma2 = gamma2_of(lambda, gamma1);
    let (mut lower, mut upper) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let (lo, hi) = scaled_widths(components, i, gamma1, gamma2);
        lower.push(components.f_hat[i] - lo);
        upper.push(components.f_hat[i] + hi);
    }
    IntervalSet {
        lower: lower.into(),
        upper: upper.into(),
    }
}

fn scaled_widths<T: Scalar>(c: &UncertaintyComponents<T>, i: usize, gamma1: T, gamma2: T) -> (T, T) {
    let term = |g: T, w: T| if w == T::zero() { T::zero() } else { g * w };
    (
        term(gamma1, c.ale_lo[i]) + term(gamma2, c.epi_lo[i]),
        term(gamma1, c.ale_hi[i]) + term(gamma2, c.epi_hi[i]),
    )
}

/// `(y - q)(tau - 1{y <= q})`.
pub fn pinball<T: Scalar>(y: T, q: T, tau: f64) -> T {
    let ind = if y <= q { 1.0 } else { 0.0 };
    (y - q) * T::lit(tau - ind)
}

/// Mean over points of `[QL_{alpha/2}(y, lower) + QL_{1-alpha/2}(y, upper)] / 2`.
pub fn quantile_loss_of_intervals<T: Scalar>(intervals: &IntervalSet<T>, y: ArrayView1<T>, alpha: Alpha) -> Result<T> {
    if y.len() != intervals.len() {
        return Err(Error::DimensionMismatch {
            expected: intervals.len(),
            got: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Empty("intervals"));
    }
    let (lt, ut) = (alpha.lower_tau(), alpha.upper_tau());
    let total: T = (0..y.len())
        .map(|i| pinball(y[i], intervals.lower[i], lt) + pinball(y[i], intervals.upper[i], ut))
        .sum();
    Ok(total / T::lit(2.0 * y.len() as f64))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FitMode {
    /// Choose `lambda` and `gamma1` on the same calibration rows.
    #[default]
    ReuseValidation,
    /// Split the rows: choose `lambda` on one part, then set `gamma1` on the other with an
    /// unbounded overflow rule.
    Conformalized { validation_fraction: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaLoss<T> {
    pub lambda: T,
    pub gamma1: T,
    pub loss: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClearFit<T> {
    pub lambda_star: T,
    pub gamma1: T,
    pub gamma2: T,
    pub alpha: Alpha,
    /// Per-grid-point results on the rows used to choose `lambda`.
    pub losses: Vec<LambdaLoss<T>>,
    /// Loss at `lambda_star` on those rows.
    pub val_quantile_loss: T,
}

impl<T: Scalar> ClearFit<T> {
    pub fn grid_size(&self) -> usize {
        self.losses.len()
    }

    pub fn intervals(&self, components: &UncertaintyComponents<T>) -> IntervalSet<T> {
        calibrated_interval(components, self.lambda_star, self.gamma1)
    }

    /// `gamma1` is infinite, or `lambda` is infinite in the fixed-`gamma1` variant.
    pub fn unbounded(&self) -> bool {
        self.gamma1.is_infinite() || self.lambda_star.is_infinite()
    }
}

/// `gamma1` and interval loss for one `lambda`; the loss is `+inf` when `gamma1` is.
fn evaluate_lambda<T: Scalar>(
    c: &UncertaintyComponents<T>,
    y: &Array1<T>,
    lambda: T,
    alpha: Alpha,
    overflow: Overflow,
    scores: &mut Vec<T>,
) -> LambdaLoss<T> {
    scores.clear();
    scores.extend((0..c.len()).map(|i| {
        let (lo, hi) = band_widths(c, i, lambda);
        point_score(c.f_hat[i], y[i], lo, hi)
    }));
    let gamma1 = gamma1_for_lambda(scores, alpha, overflow).unwrap();
    let loss = if gamma1.is_infinite() {
        T::infinity()
    } else {
        let gamma2 = gamma2_of(lambda, gamma1);
        let (lt, ut) = (alpha.lower_tau(), alpha.upper_tau());
        let total: T = (0..c.len())
            .map(|i| {
                let (lo, hi) = scaled_widths(c, i, gamma1, gamma2);
                pinball(y[i], c.f_hat[i] - lo, lt) + pinball(y[i], c.f_hat[i] + hi, ut)
            })
            .sum();
        total / T::lit(2.0 * c.len() as f64)
    };
    LambdaLoss { lambda, gamma1, loss }
}

fn grid_losses<T: Scalar>(c: &UncertaintyComponents<T>, grid: &LambdaGrid<T>, alpha: Alpha, overflow: Overflow) -> Result<Vec<LambdaLoss<T>>> {
    let y = c.targets()?;
    if c.is_empty() {
        return Err(Error::Empty("calibration components"));
    }
    Ok(grid
        .values()
        .par_iter()
        .map_init(Vec::new, |buf, &lambda| evaluate_lambda(c, y, lambda, alpha, overflow, buf))
        .collect())
}

/// First minimizer in grid order, treating losses within `1e-12` (relative) as equal.
fn argmin<T: Scalar>(losses: &[LambdaLoss<T>]) -> usize {
    let mut best = 0;
    for (i, l) in losses.iter().enumerate().skip(1) {
        let b = losses[best].loss;
        let tol = T::lit(1e-12) * b.abs().max(T::one());
        if l.loss < b - tol || (b.is_infinite() && l.loss.is_finite()) {
            best = i;
        }
    }
    best
}

fn fit_reuse<T: Scalar>(c: &UncertaintyComponents<T>, grid: &LambdaGrid<T>, alpha: Alpha) -> Result<ClearFit<T>> {
    let losses = grid_losses(c, grid, alpha, Overflow::LargestScore)?;
    let best = losses[argmin(&losses)];
    Ok(ClearFit {
        lambda_star: best.lambda,
        gamma1: best.gamma1,
        gamma2: gamma2_of(best.lambda, best.gamma1),
        alpha,
        val_quantile_loss: best.loss,
        losses,
    })
}

/// Chooses `lambda` by interval quantile loss over `grid` and calibrates `gamma1`.
pub fn fit_clear<T: Scalar>(
    components_cal: &UncertaintyComponents<T>,
    grid: &LambdaGrid<T>,
    alpha: Alpha,
    mode: FitMode,
) -> Result<ClearFit<T>> {
    if grid.is_empty() {
        return Err(Error::Empty("lambda grid"));
    }
    let fit = match mode {
        FitMode::ReuseValidation => fit_reuse(components_cal, grid, alpha)?,
        FitMode::Conformalized {
            validation_fraction,
            seed,
        } => {
            let (val, cal) = conformal_split(components_cal, validation_fraction, seed)?;
            let chosen = fit_reuse(&val, grid, alpha)?;
            let cal_y = cal.targets()?;
            let final_gamma = evaluate_lambda(&cal, cal_y, chosen.lambda_star, alpha, Overflow::Infinite, &mut Vec::new()).gamma1;
            ClearFit {
                gamma1: final_gamma,
                gamma2: gamma2_of(chosen.lambda_star, final_gamma),
                ..chosen
            }
        }
    };
    if fit.losses.iter().all(|l| l.loss.is_infinite()) {
        return Err(Error::Degenerate(
            "every lambda gives an unbounded interval; some miscovered point has zero width".into(),
        ));
    }
    Ok(fit)
}

/// Random split of the rows into `(validation, calibration)`, each nonempty.
pub fn conformal_split<T: Scalar>(
    c: &UncertaintyComponents<T>,
    validation_fraction: f64,
    seed: u64,
) -> Result<(UncertaintyComponents<T>, UncertaintyComponents<T>)> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::invalid(format!("validation_fraction {validation_fraction} must lie in (0, 1)")));
    }
    let n = c.len();
    if n < 2 {
        return Err(Error::invalid("conformalized mode needs at least 2 calibration rows"));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut seed::rng(seed));
    let n_val = ((n as f64 * validation_fraction).round() as usize).clamp(1, n - 1);
    Ok((c.select(&rows[..n_val]), c.select(&rows[n_val..])))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedVariant {
    /// `gamma1 = gamma2`: one conformal scale on the summed widths.
    LambdaEqualsOne,
    /// Aleatoric widths kept as is, the epistemic share calibrated alone.
    Gamma1EqualsOne,
}

pub fn fixed_variant<T: Scalar>(components_cal: &UncertaintyComponents<T>, alpha: Alpha, which: FixedVariant) -> Result<ClearFit<T>> {
    match which {
        FixedVariant::LambdaEqualsOne => fit_reuse(components_cal, &LambdaGrid::new([T::one()])?, alpha),
        FixedVariant::Gamma1EqualsOne => {
            let c = components_cal;
            let y = c.targets()?;
            let factors = epistemic_factors(c)?;
            let lambda = conformal_quantile(factors.as_slice().unwrap(), alpha, Overflow::LargestScore)
                .ok_or(Error::Empty("calibration components"))?;
            let loss = quantile_loss_of_intervals(&calibrated_interval(c, lambda, T::one()), y.view(), alpha)?;
            let loss = if loss.is_nan() { T::infinity() } else { loss };
            Ok(ClearFit {
                lambda_star: lambda,
                gamma1: T::one(),
                gamma2: lambda,
                alpha,
                losses: vec![LambdaLoss {
                    lambda,
                    gamma1: T::one(),
                    loss,
                }],
                val_quantile_loss: loss,
            })
        }
    }
}

/// Per-point minimal epistemic multipliers on top of the unscaled aleatoric band.
pub fn epistemic_factors<T: Scalar>(c: &UncertaintyComponents<T>) -> Result<Array1<T>> {
    let y = c.targets()?;
    Ok((0..c.len())
        .map(|i| {
            let f = c.f_hat[i];
            let lo = minimal_factor(f - c.ale_lo[i] - y[i], c.epi_lo[i]);
            let hi = minimal_factor(y[i] - f - c.ale_hi[i], c.epi_hi[i]);
            lo.max(hi)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveFit<T> {
    pub gamma: T,
    pub intervals: IntervalSet<T>,
}

/// Constant symmetric band `f_hat -/+ gamma` with `gamma` the conformal quantile of `|y - f_hat|`.
pub fn naive_baseline<T: Scalar>(
    f_hat_cal: ArrayView1<T>,
    y_cal: ArrayView1<T>,
    alpha: Alpha,
    f_hat_test: ArrayView1<T>,
) -> Result<NaiveFit<T>> {
    if f_hat_cal.len() != y_cal.len() {
        return Err(Error::DimensionMismatch {
            expected: f_hat_cal.len(),
            got: y_cal.len(),
        });
    }
    let residuals: Vec<T> = f_hat_cal.iter().zip(y_cal).map(|(&f, &y)| (y - f).abs()).collect();
    let gamma = conformal_quantile(&residuals, alpha, Overflow::LargestScore).ok_or(Error::Empty("calibration set"))?;
    Ok(NaiveFit {
        gamma,
        intervals: IntervalSet {
            lower: f_hat_test.mapv(|f| f - gamma),
            upper: f_hat_test.mapv(|f| f + gamma),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn alpha(a: f64) -> Alpha {
        Alpha::new(a).unwrap()
    }

    fn comps(f: Vec<f64>, a: (f64, f64), e: (f64, f64), y: Vec<f64>) -> UncertaintyComponents<f64> {
        let n = f.len();
        UncertaintyComponents::new(
            f.into(),
            Array1::from_elem(n, a.0),
            Array1::from_elem(n, a.1),
            Array1::from_elem(n, e.0),
            Array1::from_elem(n, e.1),
            Some(y.into()),
        )
        .unwrap()
    }

    #[test]
    fn grid_shape() {
        let g = default_lambda_grid::<f64>();
        let v = g.values();
        assert_eq!(v[0], 0.0);
        assert!(g.contains(1.0) && g.contains(0.09) && g.contains(0.1) && g.contains(100.0));
        assert_eq!(*v.last().unwrap(), 100.0);
        assert_eq!(v.iter().copied().filter(|&x| x > 0.0).fold(f64::INFINITY, f64::min), 0.01);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        assert!(g.len() > 4000 && g.len() <= 4011);
    }

    #[test]
    fn grid_validation() {
        assert!(LambdaGrid::<f64>::new([]).is_err());
        assert!(LambdaGrid::new([-1.0]).is_err());
        assert!(LambdaGrid::new([f64::NAN]).is_err());
        let g = LambdaGrid::new([2.0, 0.5, 2.0]).unwrap();
        assert_eq!(g.values(), &[0.5, 2.0]);
        assert_eq!(g.with_anchors().values(), &[0.0, 0.5, 1.0, 2.0]);
    }

    #[test]
    fn scores_by_hand() {
        // l = -1, u = 1 around f = 0
        let c = comps(vec![0.0; 3], (1.0, 1.0), (0.0, 0.0), vec![0.0, 0.5, 2.0]);
        assert_eq!(conformity_scores(&c, 0.0).unwrap(), array![-1.0, -0.5, 1.0]);
        let c = comps(vec![0.0; 3], (0.5, 0.5), (0.25, 0.25), vec![0.0, 0.5, 2.0]);
        assert_eq!(conformity_scores(&c, 2.0).unwrap(), array![-1.0, -0.5, 1.0]);
    }

    #[test]
    fn zero_width_scores() {
        let c = comps(vec![0.0; 3], (0.0, 0.0), (0.0, 0.0), vec![0.0, 1.0, -1.0]);
        let s = conformity_scores(&c, 1.0).unwrap();
        assert_eq!(s[0], f64::NEG_INFINITY);
        assert_eq!(s[1], f64::INFINITY);
        assert_eq!(s[2], f64::INFINITY);
    }

    #[test]
    fn order_statistic_by_hand() {
        let s = [-0.5, 0.2, 0.8, 1.5];
        assert_eq!(conformal_quantile(&s, alpha(0.2), Overflow::LargestScore), Some(1.5));
        assert_eq!(conformal_quantile(&s, alpha(0.05), Overflow::LargestScore), Some(1.5));
        assert_eq!(conformal_quantile(&s, alpha(0.05), Overflow::Infinite), Some(f64::INFINITY));
        let s19: Vec<f64> = (0..19).map(|i| i as f64).collect();
        assert_eq!(conformal_quantile(&s19, alpha(0.05), Overflow::LargestScore), Some(18.0));
        assert_eq!(conformal_quantile(&s19, alpha(0.05), Overflow::Infinite), Some(18.0));

        assert_eq!(gamma1_for_lambda(&s, alpha(0.2), Overflow::LargestScore).unwrap(), 2.5);
        assert_eq!(gamma1_for_lambda(&s, alpha(0.05), Overflow::Infinite).unwrap(), f64::INFINITY);
        assert_eq!(gamma1_for_lambda(&[-3.0, -2.0], alpha(0.5), Overflow::LargestScore).unwrap(), 0.0);
        assert!(gamma1_for_lambda::<f64>(&[], alpha(0.2), Overflow::LargestScore).is_err());
    }

    #[test]
    fn intervals_by_hand() {
        let c = comps(vec![0.0], (1.0, 1.0), (0.5, 0.5), vec![0.0]);
        let iv = calibrated_interval(&c, 2.0, 0.5);
        assert_eq!((iv.lower[0], iv.upper[0]), (-1.0, 1.0));
        let iv = calibrated_interval(&c, 2.0, 0.0);
        assert_eq!((iv.lower[0], iv.upper[0]), (0.0, 0.0));
        let iv = calibrated_interval(&c, 0.0, 2.0);
        assert_eq!((iv.lower[0], iv.upper[0]), (-2.0, 2.0));
        let iv = calibrated_interval(&c, 1.0, f64::INFINITY);
        assert!(!iv.is_bounded());
    }

    #[test]
    fn quantile_loss_by_hand() {
        let a = alpha(0.1);
        let iv: IntervalSet<f64> = IntervalSet::new(array![0.0], array![2.0]).unwrap();
        assert!((quantile_loss_of_intervals(&iv, array![1.0].view(), a).unwrap() - 0.05).abs() < 1e-12);
        assert!((quantile_loss_of_intervals(&iv, array![3.0].view(), a).unwrap() - 0.55).abs() < 1e-12);
        let y = array![1.0, -2.0];
        let tight = IntervalSet::new(y.clone(), y.clone()).unwrap();
        assert_eq!(quantile_loss_of_intervals(&tight, y.view(), a).unwrap(), 0.0);
        let empty = IntervalSet::<f64>::new(array![], array![]).unwrap();
        assert!(quantile_loss_of_intervals(&empty, array![].view(), a).is_err());
    }

    fn toy(n: usize, seed_: u64, epi: f64, ale: f64) -> UncertaintyComponents<f64> {
        use rand::Rng;
        let mut rng = seed::rng(seed_);
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = f.iter().map(|v| v + rng.random_range(-2.0..2.0)).collect();
        let c = comps(f, (ale, ale), (epi, epi), y);
        UncertaintyComponents {
            ale_lo: c.ale_lo.mapv(|w| w * rng.random_range(0.5..1.5)),
            epi_hi: c.epi_hi.mapv(|w| w * rng.random_range(0.5..1.5)),
            ..c
        }
    }

    #[test]
    fn zero_epistemic_picks_zero_lambda() {
        let c = toy(40, 1, 0.0, 1.0);
        let fit = fit_clear(&c, &default_lambda_grid(), alpha(0.1), FitMode::ReuseValidation).unwrap();
        assert_eq!(fit.lambda_star, 0.0);
        assert_eq!(fit.gamma2, 0.0);
    }

    #[test]
    fn zero_aleatoric_picks_smallest_positive_lambda() {
        let c = toy(10, 2, 1.0, 0.0);
        let grid = default_lambda_grid();
        let fit = fit_clear(&c, &grid, alpha(0.1), FitMode::ReuseValidation).unwrap();
        assert_eq!(fit.lambda_star, 0.01);
        // brute force: every positive lambda gives the same interval up to rounding
        let reference = fit.intervals(&c);
        for l in fit.losses.iter().filter(|l| l.lambda > 0.0) {
            let iv = calibrated_interval(&c, l.lambda, l.gamma1);
            for i in 0..c.len() {
                assert!((iv.lower[i] - reference.lower[i]).abs() < 1e-9);
                assert!((iv.upper[i] - reference.upper[i]).abs() < 1e-9);
            }
        }
        assert!(fit.losses[0].loss > fit.val_quantile_loss);
    }

    #[test]
    fn fixed_gamma1_by_hand() {
        let c = comps(vec![0.0], (1.0, 1.0), (1.0, 1.0), vec![2.0]);
        let fit = fixed_variant(&c, alpha(0.5), FixedVariant::Gamma1EqualsOne).unwrap();
        assert_eq!((fit.lambda_star, fit.gamma1, fit.gamma2), (1.0, 1.0, 1.0));
        let inside = comps(vec![0.0; 3], (1.0, 1.0), (1.0, 1.0), vec![0.5, -1.0, 0.0]);
        assert_eq!(fixed_variant(&inside, alpha(0.1), FixedVariant::Gamma1EqualsOne).unwrap().lambda_star, 0.0);
        let stuck = comps(vec![0.0], (1.0, 1.0), (0.0, 0.0), vec![2.0]);
        assert!(fixed_variant(&stuck, alpha(0.5), FixedVariant::Gamma1EqualsOne).unwrap().unbounded());
    }

    #[test]
    fn lambda_one_variant_is_singleton_grid() {
        let c = toy(50, 3, 0.7, 0.4);
        let a = alpha(0.1);
        let fixed = fixed_variant(&c, a, FixedVariant::LambdaEqualsOne).unwrap();
        let single = fit_clear(&c, &LambdaGrid::new([1.0]).unwrap(), a, FitMode::ReuseValidation).unwrap();
        assert_eq!(fixed, single);
        let full = fit_clear(&c, &default_lambda_grid(), a, FitMode::ReuseValidation).unwrap();
        assert!(full.val_quantile_loss <= fixed.val_quantile_loss);
        assert!(full.losses.iter().any(|l| l.lambda == full.lambda_star));
        assert_eq!(full.gamma2, full.lambda_star * full.gamma1);
    }

    #[test]
    fn conformalized_overflow_is_unbounded() {
        let c = toy(8, 4, 0.5, 0.5);
        let fit = fit_clear(
            &c,
            &default_lambda_grid(),
            alpha(0.05),
            FitMode::Conformalized {
                validation_fraction: 0.5,
                seed: 1,
            },
        )
        .unwrap();
        assert!(fit.gamma1.is_infinite());
        assert!(!fit.intervals(&c).is_bounded());
    }

    #[test]
    fn all_unbounded_is_an_error() {
        let c = comps(vec![0.0; 3], (0.0, 0.0), (0.0, 0.0), vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            fit_clear(&c, &default_lambda_grid(), alpha(0.1), FitMode::ReuseValidation),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn naive_by_hand() {
        let f = Array1::zeros(4);
        let fit = naive_baseline(f.view(), array![1.0, -2.0, 3.0, -4.0].view(), alpha(0.2), array![0.0, 5.0].view()).unwrap();
        assert_eq!(fit.gamma, 4.0);
        assert_eq!(fit.intervals.lower, array![-4.0, 1.0]);
        assert_eq!(fit.intervals.upper, array![4.0, 9.0]);
        let perfect = naive_baseline(f.view(), f.view(), alpha(0.2), f.view()).unwrap();
        assert_eq!(perfect.gamma, 0.0);
    }

    #[test]
    fn invalid_components() {
        let bad = UncertaintyComponents::new(array![0.0, 0.0], array![1.0, -1.0], array![1.0, 1.0], array![0.0, 0.0], array![0.0, 0.0], None);
        assert!(matches!(bad, Err(Error::Schema { row: 2, .. })));
        let short = UncertaintyComponents::new(array![0.0], array![1.0, 1.0], array![1.0], array![0.0], array![0.0], None);
        assert!(short.is_err());
    }

    fn arb_components(max_n: usize) -> impl Strategy<Value = UncertaintyComponents<f64>> {
        proptest::collection::vec(
            (-2.0f64..2.0, 0.0f64..1.5, 0.0f64..1.5, 0.0f64..1.5, 0.0f64..1.5, -5.0f64..5.0),
            1..max_n,
        )
        .prop_map(|rows| {
            let col = |k: usize| rows.iter().map(|r| [r.0, r.1, r.2, r.3, r.4, r.5][k]).collect::<Array1<f64>>();
            UncertaintyComponents::new(col(0), col(1), col(2), col(3), col(4), Some(col(5))).unwrap()
        })
    }

    fn coverage(c: &UncertaintyComponents<f64>, lambda: f64, gamma1: f64) -> usize {
        let iv = calibrated_interval(c, lambda, gamma1);
        let y = c.y.as_ref().unwrap();
        (0..c.len()).filter(|&i| iv.lower[i] <= y[i] && y[i] <= iv.upper[i]).count()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn gamma1_is_minimal(c in arb_components(200), lambda in 0.0f64..3.0, a in 0.02f64..0.5) {
            let a = alpha(a);
            let scores = conformity_scores(&c, lambda).unwrap();
            let g = gamma1_for_lambda(scores.as_slice().unwrap(), a, Overflow::LargestScore).unwrap();
            let need = a.conformal_rank(c.len()).min(c.len());
            prop_assume!(g.is_finite());
            let slack = 1e-9;
            prop_assert!(coverage(&c, lambda, g * (1.0 + slack) + slack) >= need);
            let below = scores.iter().map(|s| (1.0 + s).max(0.0)).filter(|&s| s < g - 1e-7).fold(f64::NEG_INFINITY, f64::max);
            if below.is_finite() {
                prop_assert!(coverage(&c, lambda, below) < need);
            }
        }

        #[test]
        fn coverage_monotone_in_gamma1(c in arb_components(80), lambda in 0.0f64..3.0, g in 0.0f64..4.0, dg in 0.0f64..2.0) {
            prop_assert!(coverage(&c, lambda, g) <= coverage(&c, lambda, g + dg));
        }

        #[test]
        fn contains_point_prediction(c in arb_components(50), lambda in 0.0f64..10.0, g in 0.0f64..10.0) {
            let iv = calibrated_interval(&c, lambda, g);
            for i in 0..c.len() {
                prop_assert!(iv.lower[i] <= c.f_hat[i] && c.f_hat[i] <= iv.upper[i]);
            }
        }

        #[test]
        fn scale_equivariance(c in arb_components(60), scale in 0.1f64..10.0, a in 0.05f64..0.3) {
            let a = alpha(a);
            let grid = LambdaGrid::new((0..40).map(|i| i as f64 * 0.1)).unwrap();
            let scaled_grid = LambdaGrid::new(grid.values().iter().map(|l| l / scale)).unwrap();
            let c2 = c.scale_epistemic(scale);
            let (f1, f2) = (fit_reuse(&c, &grid, a).unwrap(), fit_reuse(&c2, &scaled_grid, a).unwrap());
            for (l1, l2) in f1.losses.iter().zip(&f2.losses) {
                if l1.loss.is_finite() {
                    prop_assert!((l1.loss - l2.loss).abs() <= 1e-9 * l1.loss.abs().max(1.0));
                }
            }
        }

        #[test]
        fn argmin_dominates_lambda_one(c in arb_components(80), a in 0.05f64..0.3) {
            let a = alpha(a);
            let grid = LambdaGrid::new((0..60).map(|i| i as f64 * 0.05)).unwrap().with_anchors();
            if let (Ok(full), Ok(one)) = (fit_clear(&c, &grid, a, FitMode::ReuseValidation), fixed_variant(&c, a, FixedVariant::LambdaEqualsOne)) {
                prop_assert!(full.val_quantile_loss <= one.val_quantile_loss);
            }
        }
    }
}
