//! Interval evaluation: coverage, normalized widths, interval score and quantile loss.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::clear::quantile_loss_of_intervals;
use crate::error::{Error, Result};
use crate::interval::IntervalSet;
use crate::level::Alpha;
use crate::num::Scalar;
use crate::quantile::{kth_smallest, minimal_factor};

fn check_aligned<T: Scalar>(intervals: &IntervalSet<T>, y: ArrayView1<T>) -> Result<()> {
    if intervals.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: intervals.len(),
            got: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Empty("intervals"));
    }
    Ok(())
}

/// Fraction of targets inside their closed interval.
pub fn picp<T: Scalar>(intervals: &IntervalSet<T>, y: ArrayView1<T>) -> Result<T> {
    check_aligned(intervals, y)?;
    let hits = (0..y.len()).filter(|&i| intervals.contains(i, y[i])).count();
    Ok(T::lit(hits as f64 / y.len() as f64))
}

fn target_range<T: Scalar>(y: ArrayView1<T>) -> Result<T> {
    let (lo, hi) = y
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return Err(Error::Degenerate("target range is zero".into()));
    }
    Ok(hi - lo)
}

/// Mean width divided by the range of `y_reference`.
pub fn niw<T: Scalar>(intervals: &IntervalSet<T>, y_reference: ArrayView1<T>) -> Result<T> {
    if intervals.is_empty() {
        return Err(Error::Empty("intervals"));
    }
    let range = target_range(y_reference)?;
    let mean = intervals.widths().sum() / T::lit(intervals.len() as f64);
    Ok(mean / range)
}

/// Interval score: width plus `2/alpha` times the distance to a missed bound.
pub fn aisl<T: Scalar>(intervals: &IntervalSet<T>, y: ArrayView1<T>, alpha: Alpha) -> Result<T> {
    check_aligned(intervals, y)?;
    let k = T::lit(2.0 / alpha.value());
    let total: T = (0..y.len())
        .map(|i| {
            let (l, u, y) = (intervals.lower[i], intervals.upper[i], y[i]);
            let mut s = u - l;
            if y < l {
                s = s + k * (l - y);
            }
            if y > u {
                s = s + k * (y - u);
            }
            s
        })
        .sum();
    Ok(total / T::lit(y.len() as f64))
}

pub fn quantile_loss<T: Scalar>(intervals: &IntervalSet<T>, y: ArrayView1<T>, alpha: Alpha) -> Result<T> {
    quantile_loss_of_intervals(intervals, y, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Nciw<T> {
    pub nciw: T,
    /// Smallest common factor on the widths reaching the nominal coverage on these points;
    /// infinite when unreachable.
    pub c: T,
}

/// NIW after rescaling the widths by the smallest `c` reaching `ceil((1 - alpha) N)` covered points.
pub fn nciw<T: Scalar>(
    f_hat: ArrayView1<T>,
    lo_widths: ArrayView1<T>,
    hi_widths: ArrayView1<T>,
    y: ArrayView1<T>,
    alpha: Alpha,
) -> Result<Nciw<T>> {
    let n = y.len();
    for len in [f_hat.len(), lo_widths.len(), hi_widths.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    if n == 0 {
        return Err(Error::Empty("intervals"));
    }
    if lo_widths.iter().chain(hi_widths).any(|w| *w < T::zero()) {
        return Err(Error::invalid("widths must be nonnegative"));
    }
    let mut factors: Vec<T> = (0..n)
        .map(|i| minimal_factor(f_hat[i] - y[i], lo_widths[i]).max(minimal_factor(y[i] - f_hat[i], hi_widths[i])))
        .collect();
    let c = kth_smallest(&mut factors, alpha.coverage_rank(n).clamp(1, n));
    let range = target_range(y)?;
    let nciw = if c.is_infinite() {
        T::infinity()
    } else {
        let total: T = lo_widths.iter().chain(hi_widths).copied().sum();
        c * total / T::lit(n as f64) / range
    };
    Ok(Nciw { nciw, c })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport<T> {
    pub picp: T,
    pub niw: T,
    pub nciw: T,
    pub quantile_loss: T,
    pub aisl: T,
    pub c_test_cal: T,
}

/// All metrics for `intervals` around `f_hat`. Widths for NCIW are measured from `f_hat` and
/// clamped at zero when an interval does not contain it. The NIW range is that of `y`.
pub fn evaluate<T: Scalar>(intervals: &IntervalSet<T>, f_hat: ArrayView1<T>, y: ArrayView1<T>, alpha: Alpha) -> Result<MetricsReport<T>> {
    check_aligned(intervals, y)?;
    if f_hat.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: f_hat.len(),
        });
    }
    let lo: Array1<T> = (&f_hat - &intervals.lower).mapv(|w| w.max(T::zero()));
    let hi: Array1<T> = (&intervals.upper - &f_hat).mapv(|w| w.max(T::zero()));
    let n = nciw(f_hat, lo.view(), hi.view(), y, alpha)?;
    Ok(MetricsReport {
        picp: picp(intervals, y)?,
        niw: niw(intervals, y)?,
        nciw: n.nciw,
        quantile_loss: quantile_loss(intervals, y, alpha)?,
        aisl: aisl(intervals, y, alpha)?,
        c_test_cal: n.c,
    })
}
