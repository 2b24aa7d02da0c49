//! Built-in base models with a uniform fit / predict contract.
//!
//! Every fitted model answers conditional quantiles; `regression_tree`, `quantile_forest` and
//! `knn_quantile` answer any level from stored targets (nearest-rank), while `linear_pinball`
//! answers only the level it was fitted at.

mod forest;
mod knn;
mod linear;
mod tree;

use std::collections::BTreeMap;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

pub use forest::QuantileForest;
pub use knn::KnnQuantile;
pub use linear::{LinearPinball, Solver};
pub use tree::RegressionTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    RegressionTree,
    QuantileForest,
    KnnQuantile,
    LinearPinball,
}

impl LearnerKind {
    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::RegressionTree => "regression_tree",
            LearnerKind::QuantileForest => "quantile_forest",
            LearnerKind::KnnQuantile => "knn_quantile",
            LearnerKind::LinearPinball => "linear_pinball",
        }
    }

    /// Whether a fitted model answers a single quantile level only.
    pub fn fixed_level(self) -> bool {
        matches!(self, LearnerKind::LinearPinball)
    }

    fn allowed_keys(self) -> &'static [&'static str] {
        match self {
            LearnerKind::RegressionTree => &["max_depth", "min_leaf"],
            LearnerKind::QuantileForest => &["trees", "min_leaf", "max_depth", "max_features", "bootstrap"],
            LearnerKind::KnnQuantile => &["k"],
            LearnerKind::LinearPinball => &["tau", "learning_rate", "iterations", "spline_knots", "solver"],
        }
    }
}

/// A hyperparameter value: numbers for counts and rates, text for named options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Num(f64),
    Text(String),
}

impl From<f64> for Param {
    fn from(v: f64) -> Self {
        Param::Num(v)
    }
}

impl From<&str> for Param {
    fn from(v: &str) -> Self {
        Param::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, Param>,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind) -> Self {
        LearnerSpec {
            kind,
            hyperparameters: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Param>) -> Self {
        self.hyperparameters.insert(key.to_string(), value.into());
        self
    }

    /// Copy of this spec targeting quantile level `tau`. Only `linear_pinball` fits per level.
    pub fn for_quantile(&self, tau: f64) -> LearnerSpec {
        match self.kind {
            LearnerKind::LinearPinball => self.clone().with("tau", tau),
            _ => self.clone(),
        }
    }

    /// Human-readable label, e.g. `quantile_forest(min_leaf=10,trees=100)`.
    pub fn label(&self) -> String {
        let params: Vec<String> = self
            .hyperparameters
            .iter()
            .map(|(k, v)| match v {
                Param::Num(x) => format!("{k}={x}"),
                Param::Text(s) => format!("{k}={s}"),
            })
            .collect();
        format!("{}({})", self.kind.name(), params.join(","))
    }

    fn num(&self, key: &str) -> Result<Option<f64>> {
        match self.hyperparameters.get(key) {
            None => Ok(None),
            Some(Param::Num(v)) if v.is_finite() => Ok(Some(*v)),
            Some(other) => Err(hp_err(key, format!("expected a finite number, got {other:?}"))),
        }
    }

    fn count(&self, key: &str, default: usize, min: usize) -> Result<usize> {
        match self.num(key)? {
            None => Ok(default),
            Some(v) if v.fract() == 0.0 && v >= min as f64 => Ok(v as usize),
            Some(v) => Err(hp_err(key, format!("expected an integer >= {min}, got {v}"))),
        }
    }

    fn real(&self, key: &str, default: f64, valid: impl Fn(f64) -> bool, what: &str) -> Result<f64> {
        let v = self.num(key)?.unwrap_or(default);
        if valid(v) {
            Ok(v)
        } else {
            Err(hp_err(key, format!("expected {what}, got {v}")))
        }
    }

    fn text(&self, key: &str) -> Result<Option<&str>> {
        match self.hyperparameters.get(key) {
            None => Ok(None),
            Some(Param::Text(s)) => Ok(Some(s)),
            Some(other) => Err(hp_err(key, format!("expected text, got {other:?}"))),
        }
    }

    /// Checks keys and value ranges, returning the resolved settings.
    pub fn validate(&self) -> Result<Settings> {
        for key in self.hyperparameters.keys() {
            if !self.kind.allowed_keys().contains(&key.as_str()) {
                return Err(hp_err(key, format!("not a hyperparameter of {}", self.kind.name())));
            }
        }
        let max_depth = |s: &Self| -> Result<Option<usize>> {
            Ok(match s.count("max_depth", 0, 0)? {
                0 => None,
                d => Some(d),
            })
        };
        Ok(match self.kind {
            LearnerKind::RegressionTree => Settings::Tree(tree::TreeParams {
                max_depth: max_depth(self)?,
                min_leaf: self.count("min_leaf", 5, 1)?,
                max_features: 1.0,
            }),
            LearnerKind::QuantileForest => Settings::Forest(forest::ForestParams {
                trees: self.count("trees", 100, 1)?,
                bootstrap: self.count("bootstrap", 1, 0)? != 0,
                tree: tree::TreeParams {
                    max_depth: max_depth(self)?,
                    min_leaf: self.count("min_leaf", 10, 1)?,
                    max_features: self.real("max_features", 1.0, |v| v > 0.0 && v <= 1.0, "a fraction in (0, 1]")?,
                },
            }),
            LearnerKind::KnnQuantile => Settings::Knn {
                k: self.count("k", 20, 1)?,
            },
            LearnerKind::LinearPinball => {
                let knots = self.count("spline_knots", 0, 0)?;
                if knots == 1 || knots == 2 {
                    return Err(hp_err("spline_knots", "use 0 (linear) or at least 3 knots".into()));
                }
                let solver = match self.text("solver")? {
                    None | Some("subgradient") => Solver::Subgradient,
                    Some("irls") => Solver::Irls,
                    Some(other) => return Err(hp_err("solver", format!("unknown solver `{other}`"))),
                };
                Settings::Linear(linear::LinearParams {
                    tau: self.real("tau", 0.5, |v| v > 0.0 && v < 1.0, "a level in (0, 1)")?,
                    learning_rate: self.real("learning_rate", 1.0, |v| v > 0.0, "a positive rate")?,
                    iterations: self.count(
                        "iterations",
                        match solver {
                            Solver::Subgradient => 5000,
                            Solver::Irls => 100,
                        },
                        1,
                    )?,
                    spline_knots: knots,
                    solver,
                })
            }
        })
    }
}

fn hp_err(name: &str, reason: String) -> Error {
    Error::Hyperparameter {
        name: name.to_string(),
        reason,
    }
}

/// Validated hyperparameters.
#[derive(Debug, Clone)]
pub enum Settings {
    Tree(tree::TreeParams),
    Forest(forest::ForestParams),
    Knn { k: usize },
    Linear(linear::LinearParams),
}

#[derive(Debug, Clone)]
pub enum FittedModel<T> {
    RegressionTree(RegressionTree<T>),
    QuantileForest(QuantileForest<T>),
    KnnQuantile(KnnQuantile<T>),
    LinearPinball(LinearPinball<T>),
}

pub fn fit<T: Scalar>(spec: &LearnerSpec, x: ArrayView2<T>, y: ArrayView1<T>, seed: u64) -> Result<FittedModel<T>> {
    let settings = spec.validate()?;
    let n = y.len();
    if n == 0 || x.nrows() == 0 {
        return Err(Error::Empty("training data"));
    }
    if x.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: n,
        });
    }
    if n < 2 {
        return Err(Error::invalid("need at least 2 training rows"));
    }
    Ok(match settings {
        Settings::Tree(p) => {
            if n < p.min_leaf {
                return Err(hp_err("min_leaf", format!("{} exceeds training size {n}", p.min_leaf)));
            }
            FittedModel::RegressionTree(RegressionTree::fit(x, y, &p))
        }
        Settings::Forest(p) => {
            if n < p.tree.min_leaf {
                return Err(hp_err("min_leaf", format!("{} exceeds training size {n}", p.tree.min_leaf)));
            }
            FittedModel::QuantileForest(QuantileForest::fit(x, y, &p, seed))
        }
        Settings::Knn { k } => {
            if k > n {
                return Err(hp_err("k", format!("{k} exceeds training size {n}")));
            }
            FittedModel::KnnQuantile(KnnQuantile::fit(x, y, k))
        }
        Settings::Linear(p) => FittedModel::LinearPinball(LinearPinball::fit(x, y, &p)),
    })
}

impl<T: Scalar> FittedModel<T> {
    pub fn kind(&self) -> LearnerKind {
        match self {
            FittedModel::RegressionTree(_) => LearnerKind::RegressionTree,
            FittedModel::QuantileForest(_) => LearnerKind::QuantileForest,
            FittedModel::KnnQuantile(_) => LearnerKind::KnnQuantile,
            FittedModel::LinearPinball(_) => LearnerKind::LinearPinball,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            FittedModel::RegressionTree(m) => m.n_features(),
            FittedModel::QuantileForest(m) => m.n_features(),
            FittedModel::KnnQuantile(m) => m.n_features(),
            FittedModel::LinearPinball(m) => m.n_features(),
        }
    }

    /// `Some(tau)` for models fitted at a single level, `None` for any-level models.
    pub fn fixed_quantile(&self) -> Option<f64> {
        match self {
            FittedModel::LinearPinball(m) => Some(m.tau()),
            _ => None,
        }
    }

    pub fn supports_quantile(&self, tau: f64) -> bool {
        tau > 0.0 && tau < 1.0 && self.fixed_quantile().is_none_or(|t| (t - tau).abs() < 1e-12)
    }

    fn check_dims(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Conditional mean for trees; other kinds fall back to their median.
    pub fn predict_mean(&self, x: ArrayView2<T>) -> Result<Array1<T>> {
        self.check_dims(&x)?;
        match self {
            FittedModel::RegressionTree(m) => Ok(m.predict_mean(x)),
            FittedModel::LinearPinball(m) if (m.tau() - 0.5).abs() > 1e-12 => {
                Err(Error::UnsupportedQuantile { tau: 0.5 })
            }
            _ => Ok(self.predict_quantiles(x, &[0.5])?.remove(0)),
        }
    }

    pub fn predict_quantile(&self, x: ArrayView2<T>, tau: f64) -> Result<Array1<T>> {
        Ok(self.predict_quantiles(x, &[tau])?.remove(0))
    }

    /// One prediction vector per level in `taus`, sharing neighbourhood lookups.
    pub fn predict_quantiles(&self, x: ArrayView2<T>, taus: &[f64]) -> Result<Vec<Array1<T>>> {
        self.check_dims(&x)?;
        if let Some(&tau) = taus.iter().find(|&&t| !self.supports_quantile(t)) {
            return Err(Error::UnsupportedQuantile { tau });
        }
        Ok(match self {
            FittedModel::RegressionTree(m) => m.predict_quantiles(x, taus),
            FittedModel::QuantileForest(m) => m.predict_quantiles(x, taus),
            FittedModel::KnnQuantile(m) => m.predict_quantiles(x, taus),
            FittedModel::LinearPinball(m) => {
                let p = m.predict(x);
                taus.iter().map(|_| p.clone()).collect()
            }
        })
    }
}

/// Mean pinball loss `mean((y - q)(tau - 1{y <= q}))`.
pub fn pinball_loss<T: Scalar>(y: ArrayView1<T>, q: ArrayView1<T>, tau: f64) -> T {
    let tau = T::lit(tau);
    let total: T = y
        .iter()
        .zip(q.iter())
        .map(|(&y, &q)| {
            let ind = if y <= q { T::one() } else { T::zero() };
            (y - q) * (tau - ind)
        })
        .sum();
    total / T::lit(y.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn all_kinds() -> Vec<LearnerSpec> {
        vec![
            LearnerSpec::new(LearnerKind::RegressionTree),
            LearnerSpec::new(LearnerKind::QuantileForest).with("trees", 10.0).with("min_leaf", 3.0),
            LearnerSpec::new(LearnerKind::KnnQuantile).with("k", 5.0),
            LearnerSpec::new(LearnerKind::LinearPinball),
            LearnerSpec::new(LearnerKind::LinearPinball).with("solver", "irls").with("spline_knots", 4.0),
        ]
    }

    fn line_data(n: usize) -> (Array2<f64>, Array1<f64>) {
        let x = Array2::from_shape_fn((n, 1), |(i, _)| -1.0 + 2.0 * i as f64 / (n - 1) as f64);
        let y = x.column(0).mapv(|v| 2.0 * v);
        (x, y)
    }

    #[test]
    fn constant_target_is_reproduced() {
        let x = Array2::from_shape_fn((30, 2), |(i, j)| (i * (j + 1)) as f64 * 0.1);
        let y = Array1::from_elem(30, 3.5);
        let probe = array![[0.3, -2.0], [10.0, 4.0]];
        for spec in all_kinds() {
            let m = fit(&spec, x.view(), y.view(), 1).unwrap();
            for v in m.predict_mean(probe.view()).unwrap() {
                assert!((v - 3.5).abs() < 1e-6, "{}: {v}", spec.label());
            }
        }
    }

    #[test]
    fn linear_pinball_recovers_slope() {
        let (x, y) = line_data(200);
        let m = fit(&LearnerSpec::new(LearnerKind::LinearPinball), x.view(), y.view(), 0).unwrap();
        let p = m.predict_mean(array![[0.0], [1.0]].view()).unwrap();
        let slope = p[1] - p[0];
        assert!((slope - 2.0).abs() < 0.05, "{slope}");
    }

    #[test]
    fn knn_with_all_rows_is_unconditional_quantile() {
        let x = Array2::from_shape_fn((50, 1), |(i, _)| i as f64);
        let y = Array1::from_shape_fn(50, |i| ((i * 37) % 50) as f64);
        let spec = LearnerSpec::new(LearnerKind::KnnQuantile).with("k", 50.0);
        let m = fit(&spec, x.view(), y.view(), 0).unwrap();
        let mut sorted = y.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = sorted[(0.9f64 * 50.0).ceil() as usize - 1];
        let p = m.predict_quantile(array![[-3.0], [25.0], [100.0]].view(), 0.9).unwrap();
        assert!(p.iter().all(|&v| v == q));
    }

    #[test]
    fn knn_with_one_neighbour() {
        let x = array![[0.0], [1.0], [2.0]];
        let y = array![10.0, 20.0, 30.0];
        let m = fit(&LearnerSpec::new(LearnerKind::KnnQuantile).with("k", 1.0), x.view(), y.view(), 0).unwrap();
        assert_eq!(m.predict_quantile(array![[1.2], [0.5]].view(), 0.3).unwrap().to_vec(), vec![20.0, 10.0]);
    }

    #[test]
    fn single_leaf_tree_predicts_mean() {
        let x = array![[0.0], [1.0], [2.0]];
        let y = array![1.0, 2.0, 3.0];
        let spec = LearnerSpec::new(LearnerKind::RegressionTree).with("max_depth", 0.0).with("min_leaf", 3.0);
        let m = fit(&spec, x.view(), y.view(), 0).unwrap();
        assert_eq!(m.predict_mean(array![[5.0], [-1.0]].view()).unwrap().to_vec(), vec![2.0, 2.0]);
    }

    #[test]
    fn memorizing_tree() {
        let x = Array2::from_shape_fn((40, 2), |(i, j)| ((i * 7 + j * 13) % 40) as f64 + 0.01 * i as f64);
        let y = Array1::from_shape_fn(40, |i| (i as f64).sin());
        let spec = LearnerSpec::new(LearnerKind::RegressionTree).with("min_leaf", 1.0);
        let m = fit(&spec, x.view(), y.view(), 0).unwrap();
        assert_eq!(m.predict_mean(x.view()).unwrap(), y);
    }

    #[test]
    fn wrong_columns_rejected() {
        let (x, y) = line_data(20);
        let m = fit(&LearnerSpec::new(LearnerKind::RegressionTree), x.view(), y.view(), 0).unwrap();
        assert!(matches!(
            m.predict_mean(array![[1.0, 2.0]].view()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_leaf_forest_quantiles() {
        let x = array![[0.0], [1.0], [2.0]];
        let y = array![1.0, 2.0, 3.0];
        let spec = LearnerSpec::new(LearnerKind::QuantileForest)
            .with("trees", 1.0)
            .with("bootstrap", 0.0)
            .with("min_leaf", 3.0);
        let m = fit(&spec, x.view(), y.view(), 0).unwrap();
        assert_eq!(m.predict_quantile(array![[0.5]].view(), 0.5).unwrap()[0], 2.0);
        assert_eq!(m.predict_quantile(array![[0.5]].view(), 1e-9).unwrap()[0], 1.0);
    }

    #[test]
    fn invalid_hyperparameters() {
        let (x, y) = line_data(20);
        let bad = [
            LearnerSpec::new(LearnerKind::KnnQuantile).with("k", 0.0),
            LearnerSpec::new(LearnerKind::KnnQuantile).with("k", 21.0),
            LearnerSpec::new(LearnerKind::QuantileForest).with("trees", 2.5),
            LearnerSpec::new(LearnerKind::RegressionTree).with("trees", 2.0),
            LearnerSpec::new(LearnerKind::LinearPinball).with("tau", 1.0),
            LearnerSpec::new(LearnerKind::LinearPinball).with("solver", "newton"),
            LearnerSpec::new(LearnerKind::RegressionTree).with("min_leaf", 50.0),
        ];
        for spec in bad {
            assert!(fit(&spec, x.view(), y.view(), 0).is_err(), "{}", spec.label());
        }
        let empty = Array2::<f64>::zeros((0, 1));
        assert!(fit(&all_kinds()[0], empty.view(), Array1::zeros(0).view(), 0).is_err());
    }

    #[test]
    fn fixed_level_model_rejects_other_levels() {
        let (x, y) = line_data(20);
        let spec = LearnerSpec::new(LearnerKind::LinearPinball).with("tau", 0.9);
        let m = fit(&spec, x.view(), y.view(), 0).unwrap();
        assert!(m.predict_quantile(x.view(), 0.9).is_ok());
        assert!(matches!(m.predict_quantile(x.view(), 0.5), Err(Error::UnsupportedQuantile { .. })));
        assert!(m.predict_mean(x.view()).is_err());
        for other in &all_kinds()[..3] {
            let m = fit(other, x.view(), y.view(), 0).unwrap();
            assert!(m.predict_quantile(x.view(), 0.0).is_err());
            assert!(m.predict_quantile(x.view(), 1.0).is_err());
        }
    }

    #[test]
    fn refits_are_deterministic() {
        let x = Array2::from_shape_fn((80, 2), |(i, j)| ((i * 31 + j * 17) % 23) as f64 / 7.0);
        let y = Array1::from_shape_fn(80, |i| (i as f64 * 0.37).sin() * 3.0);
        let probe = Array2::from_shape_fn((15, 2), |(i, j)| i as f64 / 4.0 - j as f64);
        for spec in all_kinds() {
            let a = fit(&spec, x.view(), y.view(), 9).unwrap().predict_mean(probe.view()).unwrap();
            let b = fit(&spec, x.view(), y.view(), 9).unwrap().predict_mean(probe.view()).unwrap();
            assert_eq!(a, b, "{}", spec.label());
        }
    }

    /// Brute-force oracle: grid search over (intercept, slope) on a 201 x 201 grid.
    #[test]
    fn pinball_fit_close_to_grid_optimum() {
        let n = 150;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| (i as f64 / n as f64) * 4.0 - 2.0);
        // deterministic heavy-ish noise pattern
        let y = Array1::from_shape_fn(n, |i| 1.0 + 0.7 * x[[i, 0]] + ((i * 7919) % 97) as f64 / 30.0 - 1.6);
        for tau in [0.5, 0.1, 0.9] {
            let spec = LearnerSpec::new(LearnerKind::LinearPinball).with("tau", tau);
            let m = fit(&spec, x.view(), y.view(), 0).unwrap();
            let fitted_loss = pinball_loss(y.view(), m.predict_quantile(x.view(), tau).unwrap().view(), tau);
            let mut best = f64::INFINITY;
            for a in 0..=200 {
                for b in 0..=200 {
                    let (icpt, slope) = (-2.0 + 6.0 * a as f64 / 200.0, -1.0 + 3.0 * b as f64 / 200.0);
                    let q = x.column(0).mapv(|v| icpt + slope * v);
                    best = best.min(pinball_loss(y.view(), q.view(), tau));
                }
            }
            assert!(fitted_loss <= best * 1.02, "tau {tau}: {fitted_loss} vs grid {best}");
            let irls = fit(&spec.clone().with("solver", "irls"), x.view(), y.view(), 0).unwrap();
            let irls_loss = pinball_loss(y.view(), irls.predict_quantile(x.view(), tau).unwrap().view(), tau);
            assert!(irls_loss <= best * 1.02, "irls tau {tau}: {irls_loss} vs grid {best}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn quantiles_monotone_in_level(seed in 0u64..1000, t1 in 0.01f64..0.99, t2 in 0.01f64..0.99) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let x = Array2::from_shape_fn((60, 2), |(i, j)| (((i as u64 * 2654435761 + seed * 97 + j as u64 * 31) % 1000) as f64) / 100.0);
            let y = Array1::from_shape_fn(60, |i| x[[i, 0]] - x[[i, 1]] + ((i as u64 * 40503 + seed) % 17) as f64 / 5.0);
            let probe = Array2::from_shape_fn((12, 2), |(i, j)| (i * 3 + j) as f64 / 1.5 - 2.0);
            for spec in &all_kinds()[..3] {
                let m = fit(spec, x.view(), y.view(), seed).unwrap();
                let q = m.predict_quantiles(probe.view(), &[lo, hi]).unwrap();
                for (a, b) in q[0].iter().zip(q[1].iter()) {
                    prop_assert!(a <= b);
                }
            }
        }
    }
}
