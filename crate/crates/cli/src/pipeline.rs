//! One train/calibration cell: model selection, ensemble, residual quantiles, and every
//! calibrated method, ready to produce intervals on new rows.

use anyhow::{Context, Result};
use clear_core::aleatoric::{cqr_from_curves, fit_residual_quantiles, AleatoricBand, QuantileBag, ResidualQuantiles};
use clear_core::clear::{fit_clear, fixed_variant, naive_baseline, ClearFit, FitMode, FixedVariant, LambdaGrid, UncertaintyComponents};
use clear_core::data::Dataset;
use clear_core::epistemic::{build_ensemble, calibrate_pcs_multiplicative, select_top_k, EpistemicBand, PcsCalibration, PcsEnsemble, RankedSpec};
use clear_core::learners::LearnerSpec;
use clear_core::seed::derive_seed;
use clear_core::{Alpha, IntervalSetF64};
use ndarray::{Array1, ArrayView2};
use serde::Serialize;

pub const METHODS: [&str; 7] = ["CLEAR", "PCS", "ALEATORIC", "ALEATORIC-R", "NAIVE", "CLEAR-LAMBDA1", "CLEAR-GAMMA1"];

#[derive(Debug, Clone)]
pub struct Settings {
    pub alpha: Alpha,
    pub pool: Vec<LearnerSpec>,
    pub k: usize,
    pub b: usize,
    pub aleatoric_bags: usize,
    pub grid: LambdaGrid<f64>,
    pub fit_mode: FitMode,
}

pub struct FittedPipeline {
    alpha: Alpha,
    pub selected: Vec<RankedSpec>,
    ensemble: PcsEnsemble<f64>,
    residuals: ResidualQuantiles<f64>,
    targets: QuantileBag<f64>,
    pub clear: ClearFit<f64>,
    pub lambda_one: ClearFit<f64>,
    pub gamma1_one: ClearFit<f64>,
    pub pcs: PcsCalibration<f64>,
    pub naive_gamma: f64,
    pub aleatoric_gamma: f64,
    pub aleatoric_r_gamma: f64,
}

/// Calibration parameters of one cell, as written to `fits.jsonl`.
#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub selected: Vec<String>,
    pub val_rmse: Vec<f64>,
    pub lambda_star: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub grid_size: usize,
    pub val_quantile_loss: f64,
    pub lambda1_gamma1: f64,
    pub lambda1_val_quantile_loss: f64,
    pub gamma1_variant_lambda: f64,
    pub gamma1_variant_val_quantile_loss: f64,
    pub pcs_gamma: f64,
    pub pcs_unreachable: bool,
    pub naive_gamma: f64,
    pub aleatoric_gamma: f64,
    pub aleatoric_r_gamma: f64,
}

pub struct Predictions {
    pub f_hat: Array1<f64>,
    /// Intervals in `METHODS` order.
    pub intervals: Vec<IntervalSetF64>,
}

fn components(epi: &EpistemicBand<f64>, ale: &AleatoricBand<f64>, y: Option<Array1<f64>>) -> Result<UncertaintyComponents<f64>> {
    Ok(UncertaintyComponents::from_bands(epi, ale, y)?)
}

impl FittedPipeline {
    /// `cal` serves both for model selection and calibration.
    pub fn fit(train: &Dataset<f64>, cal: &Dataset<f64>, settings: &Settings, seed: u64) -> Result<Self> {
        let alpha = settings.alpha;
        let selected = select_top_k(&settings.pool, train, cal, settings.k, derive_seed(seed, &[1])).context("model selection")?;
        let specs: Vec<LearnerSpec> = selected.iter().map(|r| r.spec.clone()).collect();
        let ensemble = build_ensemble(&specs, train, settings.b, derive_seed(seed, &[2])).context("ensemble")?;

        let f_train = ensemble.predict(train.features().view())?;
        let best = &specs[0];
        let residuals = fit_residual_quantiles(train, f_train.view(), best, alpha, settings.aleatoric_bags, derive_seed(seed, &[3]))
            .context("residual quantiles")?;
        let targets = QuantileBag::fit(
            best,
            train.features().view(),
            train.target().view(),
            &[alpha.lower_tau(), alpha.upper_tau()],
            settings.aleatoric_bags,
            derive_seed(seed, &[4]),
        )
        .context("target quantiles")?;

        let x_cal = cal.features().view();
        let y_cal = cal.target();
        let epi = EpistemicBand::from_member_predictions(ensemble.member_predictions(x_cal)?.view(), alpha)?;
        let curves = residuals.predict(x_cal)?;
        let ale = AleatoricBand::from_curves(&curves);
        let comp = components(&epi, &ale, Some(y_cal.clone()))?;

        let fit_mode = match settings.fit_mode {
            FitMode::Conformalized {
                validation_fraction,
                seed: s,
            } => FitMode::Conformalized {
                validation_fraction,
                seed: derive_seed(seed, &[5, s]),
            },
            m => m,
        };
        let clear = fit_clear(&comp, &settings.grid, alpha, fit_mode).context("CLEAR calibration")?;
        let lambda_one = fixed_variant(&comp, alpha, FixedVariant::LambdaEqualsOne)?;
        let gamma1_one = fixed_variant(&comp, alpha, FixedVariant::Gamma1EqualsOne)?;
        let pcs = calibrate_pcs_multiplicative(&epi, y_cal.view(), alpha)?;
        let naive_gamma = naive_baseline(epi.f_hat.view(), y_cal.view(), alpha, epi.f_hat.view())?.gamma;

        let t = targets.predict(x_cal)?;
        let aleatoric_gamma = cqr_from_curves(t[0].view(), t[1].view(), y_cal.view(), t[0].view(), t[1].view(), alpha)?.gamma;
        let (r_lo, r_hi) = (&curves.lo + &epi.f_hat, &curves.hi + &epi.f_hat);
        let aleatoric_r_gamma = cqr_from_curves(r_lo.view(), r_hi.view(), y_cal.view(), r_lo.view(), r_hi.view(), alpha)?.gamma;

        Ok(FittedPipeline {
            alpha,
            selected,
            ensemble,
            residuals,
            targets,
            clear,
            lambda_one,
            gamma1_one,
            pcs,
            naive_gamma,
            aleatoric_gamma,
            aleatoric_r_gamma,
        })
    }

    pub fn summary(&self) -> FitSummary {
        FitSummary {
            selected: self.selected.iter().map(|r| r.spec.label()).collect(),
            val_rmse: self.selected.iter().map(|r| r.val_rmse).collect(),
            lambda_star: self.clear.lambda_star,
            gamma1: self.clear.gamma1,
            gamma2: self.clear.gamma2,
            grid_size: self.clear.grid_size(),
            val_quantile_loss: self.clear.val_quantile_loss,
            lambda1_gamma1: self.lambda_one.gamma1,
            lambda1_val_quantile_loss: self.lambda_one.val_quantile_loss,
            gamma1_variant_lambda: self.gamma1_one.lambda_star,
            gamma1_variant_val_quantile_loss: self.gamma1_one.val_quantile_loss,
            pcs_gamma: self.pcs.gamma,
            pcs_unreachable: self.pcs.unreachable,
            naive_gamma: self.naive_gamma,
            aleatoric_gamma: self.aleatoric_gamma,
            aleatoric_r_gamma: self.aleatoric_r_gamma,
        }
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Predictions> {
        let alpha = self.alpha;
        let epi = EpistemicBand::from_member_predictions(self.ensemble.member_predictions(x)?.view(), alpha)?;
        let curves = self.residuals.predict(x)?;
        let ale = AleatoricBand::from_curves(&curves);
        let comp = components(&epi, &ale, None)?;
        let f = &epi.f_hat;
        let shift = |g: f64| IntervalSetF64 {
            lower: f.mapv(|v| v - g),
            upper: f.mapv(|v| v + g),
        };
        let t = self.targets.predict(x)?;
        let cqr = |lo: &Array1<f64>, hi: &Array1<f64>, g: f64| IntervalSetF64 {
            lower: lo.mapv(|v| v - g),
            upper: hi.mapv(|v| v + g),
        };
        let (r_lo, r_hi) = (&curves.lo + f, &curves.hi + f);
        let intervals = vec![
            self.clear.intervals(&comp),
            epi.scaled_interval(self.pcs.gamma),
            cqr(&t[0], &t[1], self.aleatoric_gamma),
            cqr(&r_lo, &r_hi, self.aleatoric_r_gamma),
            shift(self.naive_gamma),
            self.lambda_one.intervals(&comp),
            self.gamma1_one.intervals(&comp),
        ];
        Ok(Predictions {
            f_hat: epi.f_hat,
            intervals,
        })
    }
}
