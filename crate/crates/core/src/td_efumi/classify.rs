use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Model;
use crate::dsrf::FeatureVector;
use crate::error::{check_dim, Error, Result};
use crate::solvers::{LassoCoder, SolverConfig};

/// How per-point scores combine into one alarm score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Max,
    Mean,
}

fn test_coder(model: &Model) -> Result<LassoCoder<'_>> {
    let cfg = SolverConfig {
        lambda1: model.config.lambda,
        lambda2: 0.0,
        max_iters: model.config.solver_max_iters,
        tolerance: model.config.solver_tolerance,
        ..SolverConfig::default()
    };
    LassoCoder::full(&model.dictionary, &cfg)
}

/// Score of one point: lasso code on the whole dictionary (no latent
/// gating), then the linear classifier.
pub fn classify(x: &FeatureVector, model: &Model) -> Result<f64> {
    check_dim(model.dictionary.dim(), x.len())?;
    let code = test_coder(model)?.code(x.as_slice())?;
    Ok(model.classifier.score(&code.weights))
}

/// Scores of many points, sharing one coder.
pub fn classify_points(points: &[FeatureVector], model: &Model) -> Result<Vec<f64>> {
    let coder = test_coder(model)?;
    points
        .par_iter()
        .map(|x| {
            check_dim(model.dictionary.dim(), x.len())?;
            Ok(model.classifier.score(&coder.code(x.as_slice())?.weights))
        })
        .collect()
}

pub fn classify_alarm(points: &[FeatureVector], model: &Model, pooling: Pooling) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Empty("alarm has no points".into()));
    }
    let scores = classify_points(points, model)?;
    Ok(match pooling {
        Pooling::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Pooling::Mean => scores.iter().sum::<f64>() / scores.len() as f64,
    })
}
