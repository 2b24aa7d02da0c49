//! Linear quantile regression by pinball-loss minimisation, optionally on an additive
//! natural cubic spline basis (linear beyond the boundary knots).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::num::Scalar;
use crate::quantile::nearest_rank_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    /// Subgradient descent with steps `learning_rate / sqrt(t)`, started at zero.
    Subgradient,
    /// Iteratively reweighted least squares, started at the least-squares fit.
    Irls,
}

#[derive(Debug, Clone)]
pub struct LinearParams {
    pub tau: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    /// 0 for raw features, otherwise knots per feature (>= 3).
    pub spline_knots: usize,
    pub solver: Solver,
}

/// Per-feature basis: the raw value plus `knots - 2` restricted cubic terms.
#[derive(Debug, Clone)]
struct Basis<T> {
    knots: Vec<Vec<T>>,
}

impl<T: Scalar> Basis<T> {
    fn new(x: ArrayView2<T>, n_knots: usize) -> Self {
        let knots = x
            .columns()
            .into_iter()
            .map(|col| {
                if n_knots == 0 {
                    return Vec::new();
                }
                let lo = col.iter().copied().fold(T::infinity(), T::min);
                let hi = col.iter().copied().fold(T::neg_infinity(), T::max);
                if !(hi > lo) {
                    return Vec::new();
                }
                let step = (hi - lo) / T::lit((n_knots - 1) as f64);
                (0..n_knots).map(|i| lo + step * T::lit(i as f64)).collect()
            })
            .collect();
        Basis { knots }
    }

    fn width(&self) -> usize {
        self.knots.iter().map(|k| 1 + k.len().saturating_sub(2)).sum()
    }

    fn expand_row(&self, row: ArrayView1<T>, out: &mut Vec<T>) {
        out.clear();
        let cube = |v: T| if v > T::zero() { v * v * v } else { T::zero() };
        for (&v, knots) in row.iter().zip(&self.knots) {
            out.push(v);
            if knots.len() < 3 {
                continue;
            }
            let k = knots.len();
            let (t_last, t_prev) = (knots[k - 1], knots[k - 2]);
            let span = t_last - t_prev;
            let norm = (t_last - knots[0]) * (t_last - knots[0]);
            for &t in &knots[..k - 2] {
                let s = cube(v - t) - cube(v - t_prev) * (t_last - t) / span + cube(v - t_last) * (t_prev - t) / span;
                out.push(s / norm);
            }
        }
    }

    fn expand(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut out = Array2::zeros((x.nrows(), self.width()));
        let mut buf = Vec::with_capacity(self.width());
        for (row, mut dst) in x.rows().into_iter().zip(out.rows_mut()) {
            self.expand_row(row, &mut buf);
            dst.assign(&ArrayView1::from(&buf[..]));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct LinearPinball<T> {
    tau: f64,
    basis: Basis<T>,
    col_mean: Array1<T>,
    col_scale: Array1<T>,
    y_center: T,
    y_scale: T,
    /// Intercept first, then one weight per standardized basis column.
    weights: Array1<T>,
    n_features: usize,
}

impl<T: Scalar> LinearPinball<T> {
    pub(crate) fn fit(x: ArrayView2<T>, y: ArrayView1<T>, params: &LinearParams) -> Self {
        let basis = Basis::new(x, params.spline_knots);
        let raw = basis.expand(x);
        let n = T::lit(y.len() as f64);
        let col_mean = raw.mean_axis(Axis(0)).expect("nonempty design");
        let col_scale = raw
            .axis_iter(Axis(1))
            .zip(col_mean.iter())
            .map(|(c, &m)| {
                let sd = (c.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / n).sqrt();
                if sd > T::zero() {
                    sd
                } else {
                    T::one()
                }
            })
            .collect::<Array1<T>>();

        let p = raw.ncols() + 1;
        let mut z = Array2::ones((raw.nrows(), p));
        z.slice_mut(ndarray::s![.., 1..]).assign(&((&raw - &col_mean) / &col_scale));

        let mut ys = y.to_vec();
        let y_center = nearest_rank_quantile(&mut ys, 0.5);
        let y_sd = (y.iter().map(|&v| (v - y_center) * (v - y_center)).sum::<T>() / n).sqrt();
        let y_scale = if y_sd > T::zero() { y_sd } else { T::one() };
        let target = y.mapv(|v| (v - y_center) / y_scale);

        let weights = match params.solver {
            Solver::Subgradient => subgradient(&z, &target, params),
            Solver::Irls => irls(&z, &target, params),
        };
        LinearPinball {
            tau: params.tau,
            basis,
            col_mean,
            col_scale,
            y_center,
            y_scale,
            weights,
            n_features: x.ncols(),
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub(crate) fn predict(&self, x: ArrayView2<T>) -> Array1<T> {
        let raw = self.basis.expand(x);
        let w = self.weights.slice(ndarray::s![1..]);
        raw.rows()
            .into_iter()
            .map(|r| {
                let lin = r
                    .iter()
                    .zip(self.col_mean.iter().zip(self.col_scale.iter()))
                    .zip(w.iter())
                    .fold(self.weights[0], |acc, ((&v, (&m, &s)), &wj)| acc + wj * (v - m) / s);
                self.y_center + self.y_scale * lin
            })
            .collect()
    }
}

fn mean_pinball<T: Scalar>(resid: &Array1<T>, tau: T) -> T {
    resid
        .iter()
        .map(|&r| if r < T::zero() { (tau - T::one()) * r } else { tau * r })
        .sum::<T>()
        / T::lit(resid.len() as f64)
}

fn subgradient<T: Scalar>(z: &Array2<T>, y: &Array1<T>, params: &LinearParams) -> Array1<T> {
    let tau = T::lit(params.tau);
    let n = T::lit(y.len() as f64);
    let mut w = Array1::zeros(z.ncols());
    let mut best = (T::infinity(), w.clone());
    for t in 1..=params.iterations {
        let resid = y - &z.dot(&w);
        let loss = mean_pinball(&resid, tau);
        if loss < best.0 {
            best = (loss, w.clone());
        }
        // psi(0) = 0 is a valid subgradient element at a kink
        let psi = resid.mapv(|r| {
            if r > T::zero() {
                tau
            } else if r < T::zero() {
                tau - T::one()
            } else {
                T::zero()
            }
        });
        let grad = z.t().dot(&psi) / n;
        let step = T::lit(params.learning_rate / (t as f64).sqrt());
        w = w + grad * step;
    }
    let resid = y - &z.dot(&w);
    if mean_pinball(&resid, tau) < best.0 {
        w
    } else {
        best.1
    }
}

fn irls<T: Scalar>(z: &Array2<T>, y: &Array1<T>, params: &LinearParams) -> Array1<T> {
    let tau = T::lit(params.tau);
    let floor = T::lit(1e-6);
    let mut weights = Array1::ones(y.len());
    let mut w = weighted_least_squares(z, y, &weights);
    let mut best = (mean_pinball(&(y - &z.dot(&w)), tau), w.clone());
    let mut stalled = 0;
    for _ in 0..params.iterations {
        let resid = y - &z.dot(&w);
        for (v, &r) in weights.iter_mut().zip(resid.iter()) {
            let side = if r < T::zero() { T::one() - tau } else { tau };
            *v = side / r.abs().max(floor);
        }
        let next = weighted_least_squares(z, y, &weights);
        let change = (&next - &w).iter().fold(T::zero(), |m, v| m.max(v.abs()));
        w = next;
        let loss = mean_pinball(&(y - &z.dot(&w)), tau);
        if loss < best.0 * T::lit(1.0 - 1e-9) {
            stalled = 0;
        } else {
            stalled += 1;
        }
        if loss < best.0 {
            best = (loss, w.clone());
        }
        if change < T::lit(1e-10) || stalled >= 5 {
            break;
        }
    }
    best.1
}

/// Solves `(Z' V Z + ridge I) w = Z' V y` by Cholesky.
fn weighted_least_squares<T: Scalar>(z: &Array2<T>, y: &Array1<T>, v: &Array1<T>) -> Array1<T> {
    let p = z.ncols();
    let mut a = Array2::<T>::zeros((p, p));
    let mut b = Array1::<T>::zeros(p);
    for ((row, &vi), &yi) in z.rows().into_iter().zip(v.iter()).zip(y.iter()) {
        for j in 0..p {
            let rj = row[j] * vi;
            b[j] = b[j] + rj * yi;
            for k in 0..=j {
                a[[j, k]] = a[[j, k]] + rj * row[k];
            }
        }
    }
    let trace = (0..p).map(|j| a[[j, j]]).fold(T::zero(), |s, v| s + v);
    let ridge = T::lit(1e-10) * (trace / T::lit(p as f64)).max(T::min_positive_value());
    for j in 0..p {
        a[[j, j]] = a[[j, j]] + ridge;
    }
    cholesky_solve(a, b)
}

fn cholesky_solve<T: Scalar>(mut a: Array2<T>, mut b: Array1<T>) -> Array1<T> {
    let p = b.len();
    // lower-triangular factor in place
    for j in 0..p {
        let mut d = a[[j, j]];
        for k in 0..j {
            d = d - a[[j, k]] * a[[j, k]];
        }
        let d = d.max(T::min_positive_value()).sqrt();
        a[[j, j]] = d;
        for i in j + 1..p {
            let mut s = a[[i, j]];
            for k in 0..j {
                s = s - a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = s / d;
        }
    }
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s = s - a[[i, k]] * b[k];
        }
        b[i] = s / a[[i, i]];
    }
    for i in (0..p).rev() {
        let mut s = b[i];
        for k in i + 1..p {
            s = s - a[[k, i]] * b[k];
        }
        b[i] = s / a[[i, i]];
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn spline_terms_are_linear_outside_knots() {
        let x = Array2::from_shape_fn((11, 1), |(i, _)| i as f64 / 10.0);
        let basis = Basis::new(x.view(), 5);
        assert_eq!(basis.width(), 4);
        let at = |v: f64| basis.expand(array![[v]].view()).row(0).to_vec();
        // second differences vanish beyond the last knot and below the first
        for (a, b, c) in [(2.0, 3.0, 4.0), (-3.0, -2.0, -1.0)] {
            let (fa, fb, fc) = (at(a), at(b), at(c));
            for j in 0..4 {
                assert!((fa[j] - 2.0 * fb[j] + fc[j]).abs() < 1e-9, "term {j}");
            }
        }
        // and not inside the knot range
        let (fa, fb, fc) = (at(0.3), at(0.5), at(0.7));
        assert!((fa[1] - 2.0 * fb[1] + fc[1]).abs() > 1e-6);
    }

    #[test]
    fn cholesky_matches_known_solution() {
        let a = array![[4.0, 0.0], [2.0, 3.0]];
        let sol: Array1<f64> = cholesky_solve(a, array![2.0, 7.0]);
        // A = [[4, 2], [2, 3]] with only the lower half stored
        assert!((sol[0] + 1.0).abs() < 1e-12 && (sol[1] - 3.0).abs() < 1e-12, "{sol}");
    }

    #[test]
    fn spline_fit_tracks_curved_median() {
        let x = Array2::from_shape_fn((400, 1), |(i, _)| -2.0 + 4.0 * i as f64 / 399.0);
        let y = x.column(0).mapv(|v| v.abs().powf(1.5));
        let params = LinearParams {
            tau: 0.5,
            learning_rate: 1.0,
            iterations: 100,
            spline_knots: 6,
            solver: Solver::Irls,
        };
        let m = LinearPinball::fit(x.view(), y.view(), &params);
        let p = m.predict(x.view());
        let max_err = p.iter().zip(y.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(max_err < 0.1, "{max_err}");
    }
}
