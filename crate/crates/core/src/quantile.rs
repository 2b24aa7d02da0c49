//! Order statistics: nearest-rank empirical quantiles and the conformal rank rule.

use crate::level::{ceil_rank, Alpha};
use crate::num::{total_cmp, Scalar};

/// What to return when the conformal rank exceeds the number of scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overflow {
    /// Fall back to the largest score.
    #[default]
    LargestScore,
    /// Report an unbounded threshold.
    Infinite,
}

/// 1-based nearest-rank index `ceil(tau * m)`, clamped to `[1, m]`.
pub fn nearest_rank(tau: f64, m: usize) -> usize {
    ceil_rank(tau * m as f64).min(m).max(1)
}

/// `k`-th smallest (1-based) of `values`, reordering the slice.
pub fn kth_smallest<T: Scalar>(values: &mut [T], k: usize) -> T {
    debug_assert!(k >= 1 && k <= values.len());
    let (_, v, _) = values.select_nth_unstable_by(k - 1, total_cmp);
    *v
}

/// Nearest-rank `tau`-quantile of a nonempty sample. Reorders the slice.
pub fn nearest_rank_quantile<T: Scalar>(values: &mut [T], tau: f64) -> T {
    let k = nearest_rank(tau, values.len());
    kth_smallest(values, k)
}

/// Nearest-rank quantile of an already sorted sample.
pub fn sorted_quantile<T: Scalar>(sorted: &[T], tau: f64) -> T {
    sorted[nearest_rank(tau, sorted.len()) - 1]
}

/// `ceil((1 - alpha)(n + 1))`-th smallest score, or the overflow value when that rank exceeds `n`.
/// Returns `None` for an empty score set.
pub fn conformal_quantile<T: Scalar>(scores: &[T], alpha: Alpha, overflow: Overflow) -> Option<T> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len();
    let rank = alpha.conformal_rank(n);
    let mut buf = scores.to_vec();
    if rank > n {
        return Some(match overflow {
            Overflow::LargestScore => kth_smallest(&mut buf, n),
            Overflow::Infinite => T::infinity(),
        });
    }
    Some(kth_smallest(&mut buf, rank))
}

/// Width floor below which a side counts as degenerate.
pub const WIDTH_EPS: f64 = 1e-12;

/// Smallest non-negative factor `c` with `excess <= c * width`: zero when there is no excess,
/// `+inf` when the side has zero width but is violated.
pub fn minimal_factor<T: Scalar>(excess: T, width: T) -> T {
    if !(excess > T::zero()) {
        T::zero()
    } else if width > T::zero() {
        excess / width.max(T::lit(WIDTH_EPS))
    } else {
        T::infinity()
    }
}
