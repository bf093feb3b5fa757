//! Ensemble batch prediction intervals around the boosted-tree model.
//!
//! `B` models are trained on bootstrap resamples. For every training row
//! the leave-one-out prediction averages the models whose resample missed
//! that row; the absolute LOO residuals form the conformity scores. A new
//! point gets the mean of all `B` models, plus and minus the
//! `(1 - alpha)`-quantile of the scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gbt::{fit_gbt_rows, BinnedMatrix, FeatureMatrix, GbtModel, GbtParams};
use crate::error::{contract, Error, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnbpiParams {
    pub estimators: usize,
    pub alpha: f64,
    pub seed: u64,
    pub gbt: GbtParams,
}

impl Default for EnbpiParams {
    fn default() -> Self {
        EnbpiParams { estimators: 30, alpha: 0.1, seed: 0, gbt: GbtParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnbpiModel {
    pub estimators: Vec<GbtModel>,
    /// Bootstrap row indices per estimator.
    pub bootstraps: Vec<Vec<u32>>,
    /// Absolute calibration residuals, sorted ascending.
    pub residuals: Vec<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

impl EnbpiModel {
    /// Mean over all estimators.
    pub fn predict_point(&self, x: &[f64]) -> f64 {
        self.estimators.iter().map(|m| m.predict(x)).sum::<f64>() / self.estimators.len() as f64
    }

    /// Interval half-width: the `(1 - alpha)` quantile of the residuals.
    pub fn half_width(&self) -> f64 {
        quantile_linear(&self.residuals, 1.0 - self.alpha)
    }

    pub fn predict_interval(&self, x: &[f64]) -> Interval {
        let point = self.predict_point(x);
        let w = self.half_width();
        Interval { point, lower: point - w, upper: point + w }
    }

    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Vec<Interval> {
        let w = self.half_width();
        x.rows()
            .take(x.n_rows())
            .map(|r| {
                let point = self.predict_point(r);
                Interval { point, lower: point - w, upper: point + w }
            })
            .collect()
    }

    /// Replaces the residual set, e.g. to force zero-width intervals.
    pub fn with_residuals(mut self, mut residuals: Vec<f64>) -> Result<Self> {
        if residuals.is_empty() || residuals.iter().any(|&r| !(r >= 0.0)) {
            return Err(contract("residuals must be non-empty and non-negative"));
        }
        residuals.sort_by(f64::total_cmp);
        self.residuals = residuals;
        Ok(self)
    }
}

/// Empirical quantile with linear interpolation between order statistics:
/// 1-based position `1 + q (n - 1)` in the sorted sample.
pub fn quantile_linear(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn draw_bootstraps(n: usize, b: usize, seed: u64) -> Vec<Vec<u32>> {
    (0..b)
        .map(|i| {
            let stream = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(stream);
            let mut idx: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
            idx.sort_unstable();
            idx
        })
        .collect()
}

fn in_bag_masks(n: usize, bootstraps: &[Vec<u32>]) -> Vec<Vec<bool>> {
    bootstraps
        .iter()
        .map(|idx| {
            let mut mask = vec![false; n];
            for &i in idx {
                mask[i as usize] = true;
            }
            mask
        })
        .collect()
}

/// Trains the ensemble and collects leave-one-out residuals on the training
/// rows. Rows in `calibration`, which no estimator has seen, add their
/// full-ensemble residuals to the score set.
pub fn fit_enbpi(
    x: &FeatureMatrix,
    y: &[f64],
    validation: Option<(&FeatureMatrix, &[f64])>,
    calibration: Option<(&FeatureMatrix, &[f64])>,
    params: &EnbpiParams,
    exec: Execution,
) -> Result<EnbpiModel> {
    if params.estimators < 10 {
        return Err(contract(format!("need at least 10 estimators, got {}", params.estimators)));
    }
    if !(params.alpha > 0.0 && params.alpha < 1.0) {
        return Err(contract("alpha must lie in (0, 1)"));
    }
    let n = x.n_rows();
    if n == 0 || n != y.len() {
        return Err(contract(format!("{} feature rows for {} targets", n, y.len())));
    }

    let bootstraps = draw_bootstraps(n, params.estimators, params.seed);
    let masks = in_bag_masks(n, &bootstraps);

    let binned = BinnedMatrix::new(x, params.gbt.tree.max_bins)?;
    let estimators = exec.try_map(params.estimators, |b| {
        let rows: Vec<usize> = bootstraps[b].iter().map(|&i| i as usize).collect();
        fit_gbt_rows(&binned, y, &rows, validation, &params.gbt)
    })?;

    let loo: Vec<Option<f64>> = exec.map(n, |i| {
        let row = x.row(i);
        let (sum, count) = estimators
            .iter()
            .zip(&masks)
            .filter(|(_, m)| !m[i])
            .fold((0.0, 0usize), |(s, c), (est, _)| (s + est.predict(row), c + 1));
        (count > 0).then(|| (y[i] - sum / count as f64).abs())
    });
    let skipped = loo.iter().filter(|r| r.is_none()).count();
    if skipped > 0 {
        log::debug!("{skipped} of {n} training rows were in every bootstrap and have no leave-one-out residual");
    }
    let mut residuals: Vec<f64> = loo.into_iter().flatten().collect();

    let mut model = EnbpiModel {
        estimators,
        bootstraps: bootstraps
            .into_iter()
            .map(|mut v| {
                v.dedup();
                v
            })
            .collect(),
        residuals: Vec::new(),
        alpha: params.alpha,
    };
    if let Some((xc, yc)) = calibration {
        if xc.n_rows() != yc.len() {
            return Err(contract("calibration features and targets disagree"));
        }
        residuals.extend(exec.map(xc.n_rows(), |i| (yc[i] - model.predict_point(xc.row(i))).abs()));
    }
    if residuals.is_empty() {
        return Err(Error::Data("no conformity residuals: every row was in every bootstrap".into()));
    }
    residuals.sort_by(f64::total_cmp);
    model.residuals = residuals;
    Ok(model)
}
