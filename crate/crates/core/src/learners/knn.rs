use ndarray::{Array1, Array2, ArrayView2};

use crate::num::{total_cmp, Scalar};
use crate::quantile::sorted_quantile;

/// k-nearest-neighbour conditional quantiles under Euclidean distance. Equidistant
/// neighbours are taken in training-row order.
#[derive(Debug, Clone)]
pub struct KnnQuantile<T> {
    x: Array2<T>,
    y: Array1<T>,
    k: usize,
}

impl<T: Scalar> KnnQuantile<T> {
    pub(crate) fn fit(x: ArrayView2<T>, y: ndarray::ArrayView1<T>, k: usize) -> Self {
        KnnQuantile {
            x: x.to_owned(),
            y: y.to_owned(),
            k,
        }
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub(crate) fn predict_quantiles(&self, x: ArrayView2<T>, taus: &[f64]) -> Vec<Array1<T>> {
        let mut out: Vec<Vec<T>> = vec![Vec::with_capacity(x.nrows()); taus.len()];
        let mut dist: Vec<(T, usize)> = Vec::with_capacity(self.y.len());
        let mut vals = Vec::with_capacity(self.k);
        for q in x.rows() {
            dist.clear();
            dist.extend(self.x.rows().into_iter().enumerate().map(|(i, r)| {
                let d2 = r
                    .iter()
                    .zip(q.iter())
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .fold(T::zero(), |acc, v| acc + v);
                (d2, i)
            }));
            let cmp = |a: &(T, usize), b: &(T, usize)| total_cmp(&a.0, &b.0).then(a.1.cmp(&b.1));
            if self.k < dist.len() {
                dist.select_nth_unstable_by(self.k - 1, cmp);
            }
            vals.clear();
            vals.extend(dist[..self.k].iter().map(|&(_, i)| self.y[i]));
            vals.sort_by(total_cmp);
            for (o, &t) in out.iter_mut().zip(taus) {
                o.push(sorted_quantile(&vals, t));
            }
        }
        out.into_iter().map(Array1::from).collect()
    }
}
