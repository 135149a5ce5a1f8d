//! Log-linear scaling law `L = a·ln C + L∞`.
//!
//! The model is linear in `(a, L∞)` once `x = ln C`, so the fit is the
//! closed-form OLS solution. No sign is imposed on `a`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScalingError {
    #[error("{0} must be positive and finite, got {1}")]
    NonPositive(&'static str, f64),
    #[error("underdetermined: need at least 2 points with distinct flops")]
    Underdetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub flops: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub a: f64,
    pub l_inf: f64,
    pub rmse: f64,
}

fn positive(name: &'static str, v: f64) -> Result<f64, ScalingError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ScalingError::NonPositive(name, v))
    }
}

/// Training compute as `per_param_token · N · D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlopsEstimator {
    pub per_param_token: f64,
}

impl Default for FlopsEstimator {
    fn default() -> Self {
        FlopsEstimator { per_param_token: 6.0 }
    }
}

impl FlopsEstimator {
    pub fn estimate(&self, params: f64, tokens: f64) -> Result<f64, ScalingError> {
        Ok(self.per_param_token * positive("param_count", params)? * positive("token_count", tokens)?)
    }
}

/// `6·N·D`.
pub fn estimate_flops(params: f64, tokens: f64) -> Result<f64, ScalingError> {
    FlopsEstimator::default().estimate(params, tokens)
}

pub fn fit_scaling_law(points: &[ScalingPoint]) -> Result<ScalingFit, ScalingError> {
    let mut xs = Vec::with_capacity(points.len());
    for p in points {
        xs.push(positive("flops", p.flops)?.ln());
        if !p.loss.is_finite() {
            return Err(ScalingError::NonPositive("loss", p.loss));
        }
    }
    let n = points.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.loss).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    if points.len() < 2 || sxx <= f64::EPSILON * mean_x.abs().max(1.0) {
        return Err(ScalingError::Underdetermined);
    }
    let sxy: f64 = xs.iter().zip(points).map(|(x, p)| (x - mean_x) * (p.loss - mean_y)).sum();
    let a = sxy / sxx;
    let l_inf = mean_y - a * mean_x;
    let sse: f64 = xs.iter().zip(points).map(|(x, p)| (p.loss - a * x - l_inf).powi(2)).sum();
    Ok(ScalingFit {
        a,
        l_inf,
        rmse: (sse / n).sqrt(),
    })
}

pub fn predict_loss(fit: &ScalingFit, flops: f64) -> Result<f64, ScalingError> {
    Ok(fit.a * positive("flops", flops)?.ln() + fit.l_inf)
}
