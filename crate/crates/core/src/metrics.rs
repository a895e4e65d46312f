//! Evaluation functionals: relative L² field error against a ground truth
//! and root-mean-square Maxwell residual, both pooled over all components
//! and points as one flat vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground_truth::fd_residual;
use crate::model::{model_residual_batch, FieldSample, ModelParams, SpacetimePoint};
use crate::sampling::SetupId;
use crate::ground_truth::GroundTruthId;

/// Relative L² error: RMSE(pred − gt) / RMSE(gt), pooled over all 6·n
/// field components.
pub fn relative_l2(pred: &[FieldSample], gt: &[FieldSample]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::MetricShape(format!(
            "prediction ({}) and ground truth ({}) lengths differ",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::MetricShape("empty point cloud".into()));
    }
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (p, g) in pred.iter().zip(gt) {
        for (pc, gc) in p.components().iter().zip(g.components()) {
            let d = pc - gc;
            num += d * d;
            den += gc * gc;
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroGroundTruthNorm);
    }
    Ok((num / den).sqrt())
}

/// RMSE of precomputed residual rows over all 8·n components.
pub fn residual_rmse(residuals: &[[f64; 8]]) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::MetricShape("empty residual set".into()));
    }
    let mut sum = 0.0f64;
    for row in residuals {
        for v in row {
            sum += v * v;
        }
    }
    Ok((sum / (8.0 * residuals.len() as f64)).sqrt())
}

/// Residual RMSE of the network itself, via exact differentiation — below
/// 1e-8 for any parameters, which is the architecture's defining property.
pub fn residual_error_model(params: &ModelParams, points: &[SpacetimePoint]) -> Result<f64> {
    residual_rmse(&model_residual_batch(params, points))
}

/// Residual RMSE of an arbitrary field via central differences with step
/// `h`; use for ground truths and other non-network fields.
pub fn residual_error_fd<F>(field: &F, points: &[SpacetimePoint], h: f64) -> Result<f64>
where
    F: Fn(&SpacetimePoint) -> Result<FieldSample>,
{
    let rows = points
        .iter()
        .map(|x| fd_residual(field, x, h))
        .collect::<Result<Vec<_>>>()?;
    residual_rmse(&rows)
}

/// Evaluation summary written next to each experiment run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rel_l2_error: f64,
    pub residual_rmse: Option<f64>,
    pub n_points: usize,
    pub setup: SetupId,
    pub ground_truth: GroundTruthId,
    pub seed: u64,
}
