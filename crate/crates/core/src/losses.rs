//! Edge and mask losses with analytical gradients.
//!
//! The point-supervised focal loss trains against [`TunnelTarget`]s; the dice
//! loss complements it for edges and is the usual mask objective. The
//! [`gradient_ratio`] diagnostic compares how strongly dice pushes on a
//! boundary pixel under edge versus mask framing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, GrayMap, Shape};
use crate::raster::TunnelTarget;

/// Predictions are clamped to `[PRED_EPS, 1 - PRED_EPS]` before logarithms.
pub const PRED_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocalConfig {
    /// Focusing exponent on the prediction.
    pub alpha: f64,
    /// Penalty-reduction exponent on `1 - Y` for non-positive pixels.
    pub beta: f64,
    /// Targets `>= gamma` take the positive branch.
    pub gamma: f64,
}

impl Default for FocalConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 4.0,
            gamma: 0.7,
        }
    }
}

impl FocalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Argument(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Argument(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Argument(format!(
                "gamma must be in (0, 1], got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Scalar loss and its gradient with respect to each prediction pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub gradient: Field,
}

fn same_shape(a: &GrayMap, b: &GrayMap, what: &str) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "{what}: prediction is {}x{} but target is {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )))
    }
}

/// Unnormalized focal sum `Σ term` and its per-pixel derivative.
fn focal_terms(pred: &GrayMap, target: &GrayMap, cfg: &FocalConfig) -> (f64, Vec<f64>) {
    let FocalConfig { alpha, beta, gamma } = *cfg;
    let mut sum = 0.0;
    let grad = pred
        .values()
        .iter()
        .zip(target.values())
        .map(|(&raw, &y)| {
            let p = raw.clamp(PRED_EPS, 1.0 - PRED_EPS);
            let clamped = p != raw;
            let (term, dterm) = if y >= gamma {
                let q = 1.0 - p;
                let t = y * q.powf(alpha) * p.ln();
                let dt = y * (q.powf(alpha) / p - alpha * q.powf(alpha - 1.0) * p.ln());
                (t, dt)
            } else {
                let w = (1.0 - y).powf(beta);
                let lq = (1.0 - p).ln();
                let t = w * p.powf(alpha) * lq;
                let dt = w * (alpha * p.powf(alpha - 1.0) * lq - p.powf(alpha) / (1.0 - p));
                (t, dt)
            };
            sum += term;
            if clamped {
                0.0
            } else {
                dterm
            }
        })
        .collect();
    (sum, grad)
}

/// Penalty-reduced pixel-wise focal loss against a tunnel target, normalized
/// by the target's keypoint count.
pub fn penalty_reduced_focal(
    pred: &GrayMap,
    target: &TunnelTarget,
    cfg: &FocalConfig,
) -> Result<LossResult> {
    cfg.validate()?;
    same_shape(pred, target.map(), "focal loss")?;
    let n = target.keypoint_count() as f64;
    let (sum, grad) = focal_terms(pred, target.map(), cfg);
    let gradient = grad.into_iter().map(|g| -g / n).collect();
    Ok(LossResult {
        value: -sum / n,
        gradient: Field::from_values(pred.height(), pred.width(), gradient)?,
    })
}

/// Focal loss over all instances of one image: the unnormalized terms of
/// every instance are summed, then divided by the image's total keypoint count.
pub fn penalty_reduced_focal_image(
    preds: &[GrayMap],
    targets: &[TunnelTarget],
    cfg: &FocalConfig,
) -> Result<(f64, Vec<Field>)> {
    cfg.validate()?;
    if preds.len() != targets.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if targets.is_empty() {
        return Err(Error::Argument("image has no instances".into()));
    }
    let n: usize = targets.iter().map(TunnelTarget::keypoint_count).sum();
    let n = n as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(preds.len());
    for (p, t) in preds.iter().zip(targets) {
        same_shape(p, t.map(), "focal loss")?;
        let (sum, grad) = focal_terms(p, t.map(), cfg);
        total += sum;
        grads.push(Field::from_values(
            p.height(),
            p.width(),
            grad.into_iter().map(|g| -g / n).collect(),
        )?);
    }
    Ok((-total / n, grads))
}

/// Dice loss with an optional additive smoothing constant.
///
/// With `smoothing = s` the loss is `1 - (2 Σ p y + s) / (Σ p² + Σ y² + s)`;
/// `s = 0` is the plain overlap form.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dice {
    pub smoothing: f64,
}

struct DiceSums {
    inter: f64,
    denom: f64,
}

impl Dice {
    fn sums(&self, pred: &GrayMap, gt: &GrayMap) -> Result<DiceSums> {
        same_shape(pred, gt, "dice loss")?;
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return Err(Error::Argument(format!(
                "dice smoothing must be >= 0, got {}",
                self.smoothing
            )));
        }
        let (mut inter, mut pp, mut yy) = (0.0, 0.0, 0.0);
        for (&p, &y) in pred.values().iter().zip(gt.values()) {
            inter += p * y;
            pp += p * p;
            yy += y * y;
        }
        let denom = pp + yy + self.smoothing;
        if denom == 0.0 {
            return Err(Error::UndefinedLoss);
        }
        Ok(DiceSums { inter, denom })
    }

    pub fn loss(&self, pred: &GrayMap, gt: &GrayMap) -> Result<LossResult> {
        let DiceSums { inter, denom } = self.sums(pred, gt)?;
        let s = self.smoothing;
        let num = 2.0 * inter + s;
        let gradient = pred
            .values()
            .iter()
            .zip(gt.values())
            .map(|(&p, &y)| -(2.0 * y * denom - 2.0 * p * num) / (denom * denom))
            .collect();
        Ok(LossResult {
            value: 1.0 - num / denom,
            gradient: Field::from_values(pred.height(), pred.width(), gradient)?,
        })
    }
}

/// Unsmoothed dice loss `1 - 2 Σ p y / (Σ p² + Σ y²)` with its gradient.
pub fn dice_loss(pred: &GrayMap, gt: &GrayMap) -> Result<LossResult> {
    Dice::default().loss(pred, gt)
}

/// `∂L/∂p_i = -2 (y_i (Σp² + Σy²) - 2 p_i Σ p y) / (Σp² + Σy²)²`.
pub fn dice_grad(pred: &GrayMap, gt: &GrayMap) -> Result<Field> {
    dice_loss(pred, gt).map(|r| r.gradient)
}

fn sum_squares(a: &GrayMap, b: &GrayMap) -> f64 {
    a.values()
        .iter()
        .chain(b.values())
        .map(|v| v * v)
        .sum()
}

/// Ratio of the dice denominators `(Σp² + Σy²)_mask / (Σp′² + Σy′²)_edge`.
///
/// For a boundary pixel with identical local defect this is the factor by
/// which the edge objective's gradient exceeds the mask objective's.
pub fn gradient_ratio(
    mask_pred: &GrayMap,
    mask_gt: &GrayMap,
    edge_pred: &GrayMap,
    edge_gt: &GrayMap,
) -> Result<f64> {
    same_shape(mask_pred, mask_gt, "gradient ratio (mask)")?;
    same_shape(edge_pred, edge_gt, "gradient ratio (edge)")?;
    let edge = sum_squares(edge_pred, edge_gt);
    if edge == 0.0 {
        return Err(Error::Argument("edge maps are all zero".into()));
    }
    let mask = sum_squares(mask_pred, mask_gt);
    if mask == 0.0 {
        return Err(Error::Argument("mask maps are all zero".into()));
    }
    Ok(mask / edge)
}

/// Largest relative error `|a - n| / max(1, |a|, |n|)` between the analytical
/// gradient of `loss` at `pred` and a central finite difference with `step`.
///
/// Targets and other loss-specific inputs are captured by the closure.
pub fn finite_diff_check<F>(loss: F, pred: &GrayMap, step: f64) -> Result<f64>
where
    F: Fn(&GrayMap) -> Result<LossResult>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Argument(format!("step must be positive, got {step}")));
    }
    let analytic = loss(pred)?.gradient;
    if !analytic.same_shape(pred) {
        return Err(Error::Argument("gradient shape differs from prediction".into()));
    }
    let (h, w) = (pred.height(), pred.width());
    let mut values = pred.values().to_vec();
    let mut worst = 0.0f64;
    for i in 0..values.len() {
        let orig = values[i];
        values[i] = orig + step;
        let plus = loss(&GrayMap::from_values(h, w, values.clone())?)?.value;
        values[i] = orig - step;
        let minus = loss(&GrayMap::from_values(h, w, values.clone())?)?.value;
        values[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic.values()[i];
        let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}
