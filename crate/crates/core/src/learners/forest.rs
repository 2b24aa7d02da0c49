use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::Rng as _;
use rayon::prelude::*;

use super::tree::{Tree, TreeParams};
use crate::num::{total_cmp, Scalar};
use crate::quantile::sorted_quantile;
use crate::seed::{self, derive_seed};

#[derive(Debug, Clone)]
pub struct ForestParams {
    pub trees: usize,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

/// Quantile regression forest: quantiles are read off the targets pooled from the leaf each
/// tree assigns to the query point.
#[derive(Debug, Clone)]
pub struct QuantileForest<T> {
    trees: Vec<Tree<T>>,
    n_features: usize,
}

impl<T: Scalar> QuantileForest<T> {
    pub(crate) fn fit(x: ArrayView2<T>, y: ArrayView1<T>, params: &ForestParams, seed: u64) -> Self {
        let n = y.len();
        let trees = (0..params.trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng(derive_seed(seed, &[t as u64]));
                let samples: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                Tree::grow(x, y, samples, &params.tree, Some(&mut rng))
            })
            .collect();
        QuantileForest {
            trees,
            n_features: x.ncols(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub(crate) fn predict_quantiles(&self, x: ArrayView2<T>, taus: &[f64]) -> Vec<Array1<T>> {
        let mut out: Vec<Vec<T>> = vec![Vec::with_capacity(x.nrows()); taus.len()];
        let mut pool = Vec::new();
        for row in x.rows() {
            pool.clear();
            for tree in &self.trees {
                pool.extend_from_slice(&tree.leaf(row).values);
            }
            pool.sort_by(total_cmp);
            for (o, &t) in out.iter_mut().zip(taus) {
                o.push(sorted_quantile(&pool, t));
            }
        }
        out.into_iter().map(Array1::from).collect()
    }
}
