//! CART regression trees on squared error. Leaves keep their sorted training targets so the
//! same structure answers means and nearest-rank quantiles.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::index::sample;

use crate::num::{total_cmp, Scalar};
use crate::quantile::sorted_quantile;
use crate::seed::Rng;

#[derive(Debug, Clone)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Fraction of features considered at each split.
    pub max_features: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Leaf<T> {
    pub values: Vec<T>,
    pub mean: T,
}

#[derive(Debug, Clone)]
enum Node<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf(Leaf<T>),
}

#[derive(Debug, Clone)]
pub(crate) struct Tree<T> {
    nodes: Vec<Node<T>>,
}

struct Pending {
    node: usize,
    samples: Vec<usize>,
    depth: usize,
}

impl<T: Scalar> Tree<T> {
    /// Grows a tree on the rows listed in `samples` (repeats allowed).
    pub fn grow(x: ArrayView2<T>, y: ArrayView1<T>, samples: Vec<usize>, params: &TreeParams, mut rng: Option<&mut Rng>) -> Self {
        let d = x.ncols();
        let n_try = ((params.max_features * d as f64).ceil() as usize).clamp(1, d);
        let mut nodes = vec![Node::Leaf(Leaf {
            values: Vec::new(),
            mean: T::zero(),
        })];
        let mut stack = vec![Pending {
            node: 0,
            samples,
            depth: 0,
        }];
        while let Some(Pending { node, samples, depth }) = stack.pop() {
            let can_split = params.max_depth.is_none_or(|m| depth < m) && samples.len() >= 2 * params.min_leaf;
            let features: Vec<usize> = match rng.as_deref_mut() {
                Some(r) if n_try < d => {
                    let mut f = sample(r, d, n_try).into_vec();
                    f.sort_unstable();
                    f
                }
                _ => (0..d).collect(),
            };
            let split = if can_split {
                best_split(x, y, &samples, &features, params.min_leaf)
            } else {
                None
            };
            match split {
                Some((feature, threshold)) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        samples.into_iter().partition(|&s| x[[s, feature]] <= threshold);
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(Node::Leaf(Leaf {
                        values: Vec::new(),
                        mean: T::zero(),
                    }));
                    nodes.push(Node::Leaf(Leaf {
                        values: Vec::new(),
                        mean: T::zero(),
                    }));
                    nodes[node] = Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    };
                    stack.push(Pending {
                        node: right,
                        samples: r,
                        depth: depth + 1,
                    });
                    stack.push(Pending {
                        node: left,
                        samples: l,
                        depth: depth + 1,
                    });
                }
                None => {
                    let mut values: Vec<T> = samples.iter().map(|&s| y[s]).collect();
                    values.sort_by(total_cmp);
                    let mean = values.iter().copied().sum::<T>() / T::lit(values.len() as f64);
                    nodes[node] = Node::Leaf(Leaf { values, mean });
                }
            }
        }
        Tree { nodes }
    }

    pub fn leaf(&self, row: ArrayView1<T>) -> &Leaf<T> {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(l) => return l,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// Best `(feature, threshold)` by squared-error reduction; first feature and position win ties.
fn best_split<T: Scalar>(
    x: ArrayView2<T>,
    y: ArrayView1<T>,
    samples: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<(usize, T)> {
    let n = samples.len();
    let total: T = samples.iter().map(|&s| y[s]).sum();
    let total_sq: T = samples.iter().map(|&s| y[s] * y[s]).sum();
    let nf = T::lit(n as f64);
    let parent_sse = total_sq - total * total / nf;
    if parent_sse <= T::zero() {
        return None;
    }
    let base = total * total / nf;
    let min_gain = parent_sse * T::lit(1e-10);
    let mut best: Option<(T, usize, T)> = None;
    let mut order: Vec<(T, T)> = Vec::with_capacity(n);
    for &f in features {
        order.clear();
        order.extend(samples.iter().map(|&s| (x[[s, f]], y[s])));
        order.sort_by(|a, b| total_cmp(&a.0, &b.0));
        let mut left_sum = T::zero();
        for i in 1..n {
            left_sum = left_sum + order[i - 1].1;
            if i < min_leaf || n - i < min_leaf || order[i - 1].0 == order[i].0 {
                continue;
            }
            let (nl, nr) = (T::lit(i as f64), T::lit((n - i) as f64));
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - base;
            if gain > min_gain && best.as_ref().is_none_or(|(g, _, _)| gain > *g) {
                let (a, b) = (order[i - 1].0, order[i].0);
                let mut threshold = a + (b - a) / T::lit(2.0);
                if threshold >= b {
                    threshold = a;
                }
                best = Some((gain, f, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

/// Single CART tree.
#[derive(Debug, Clone)]
pub struct RegressionTree<T> {
    tree: Tree<T>,
    n_features: usize,
}

impl<T: Scalar> RegressionTree<T> {
    pub(crate) fn fit(x: ArrayView2<T>, y: ArrayView1<T>, params: &TreeParams) -> Self {
        RegressionTree {
            tree: Tree::grow(x, y, (0..y.len()).collect(), params, None),
            n_features: x.ncols(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_leaves(&self) -> usize {
        self.tree.n_leaves()
    }

    pub(crate) fn predict_mean(&self, x: ArrayView2<T>) -> Array1<T> {
        x.rows().into_iter().map(|r| self.tree.leaf(r).mean).collect()
    }

    pub(crate) fn predict_quantiles(&self, x: ArrayView2<T>, taus: &[f64]) -> Vec<Array1<T>> {
        let leaves: Vec<&Leaf<T>> = x.rows().into_iter().map(|r| self.tree.leaf(r)).collect();
        taus.iter()
            .map(|&t| leaves.iter().map(|l| sorted_quantile(&l.values, t)).collect())
            .collect()
    }
}
