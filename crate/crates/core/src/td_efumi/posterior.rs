use super::{BagLabel, DataStats, TrainConfig};
use crate::error::{Error, Result};
use crate::linalg::norm_sq;
use crate::solvers::{sparse_code_latent, Dictionary, Latent};

/// Posterior over the latent indicator of one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentPosterior {
    pub p0: f64,
    pub p1: f64,
}

impl LatentPosterior {
    pub const BACKGROUND: LatentPosterior = LatentPosterior { p0: 1.0, p1: 0.0 };

    /// Posterior with `P(z = 0) = p0`, clamped to `[0, 1]`.
    pub fn from_background(p0: f64) -> Self {
        let p0 = p0.clamp(0.0, 1.0);
        Self { p0, p1: 1.0 - p0 }
    }

    pub fn prob(&self, z: Latent) -> f64 {
        match z {
            Latent::Background => self.p0,
            Latent::Target => self.p1,
        }
    }
}

/// Posterior from the background-only reconstruction residual `r2`.
pub(crate) fn posterior_from_residual(r2: f64, beta: f64, label: BagLabel) -> LatentPosterior {
    match label {
        BagLabel::Negative => LatentPosterior::BACKGROUND,
        BagLabel::Positive => LatentPosterior::from_background((-beta * r2).exp()),
    }
}

/// Latent posterior of `x`. Negative-bag points are background with
/// certainty; positive-bag points are background with probability
/// `exp(-beta ||x - D_nt a||^2)` where `a` codes `x` on non-target atoms only.
pub fn latent_posterior(
    x: &[f64],
    d: &Dictionary,
    cfg: &TrainConfig,
    label: BagLabel,
) -> Result<LatentPosterior> {
    if label == BagLabel::Negative {
        return Ok(LatentPosterior::BACKGROUND);
    }
    let code = sparse_code_latent(x, d, Latent::Background, &cfg.solver())?;
    let r2 = norm_sq(&d.residual(x, &code.weights));
    Ok(posterior_from_residual(r2, cfg.beta, label))
}

/// Loss reweighting: `epsilon * N_M / N_T` for positive-bag points, one for
/// background points.
pub fn delta_n(is_target_point: bool, stats: &DataStats, epsilon: f64) -> Result<f64> {
    if !is_target_point {
        return Ok(1.0);
    }
    if stats.n_target == 0 {
        return Err(Error::invalid("no positive-bag points to reweight"));
    }
    Ok(epsilon * stats.n_background as f64 / stats.n_target as f64)
}
