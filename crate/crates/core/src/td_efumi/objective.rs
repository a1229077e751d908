use serde::{Deserialize, Serialize};

use super::posterior::latent_posterior;
use super::train::{flatten_bags, TrainPoint};
use super::{Bag, Classifier, DataStats, LatentPosterior, TrainConfig};
use crate::error::{check_dim, Error, Result};
use crate::linalg::norm_sq;
use crate::solvers::{sparse_code_latent, Dictionary, Latent};

/// Sparse codes of one point under both latent hypotheses. The target code
/// is only needed when the point has non-zero target probability.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisCodes {
    pub background: Vec<f64>,
    pub target: Option<Vec<f64>>,
}

impl HypothesisCodes {
    pub fn get(&self, z: Latent) -> Option<&[f64]> {
        match z {
            Latent::Background => Some(&self.background),
            Latent::Target => self.target.as_deref(),
        }
    }
}

/// Parameters of the unsupervised reconstruction objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfumiDiagnosticConfig {
    /// One sparsity weight per non-target atom.
    pub gammas: Vec<f64>,
    pub u: f64,
    pub beta: f64,
}

/// Expected squared classification loss of one point with given codes.
pub fn point_loss_given(
    clf: &Classifier,
    post: &LatentPosterior,
    codes: &HypothesisCodes,
    delta: f64,
    u: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for z in Latent::BOTH {
        let p = post.prob(z);
        if p == 0.0 {
            continue;
        }
        let alpha = codes
            .get(z)
            .ok_or_else(|| Error::invalid("missing target-hypothesis code"))?;
        let e = clf.score(alpha) - z.indicator();
        total += p * e * e;
    }
    Ok(0.5 * (1.0 - u) * delta * total)
}

/// Expected classification loss of `x`, coding it under both hypotheses.
/// Dataset-level regularizers are not included.
pub fn expected_point_loss(
    x: &[f64],
    d: &Dictionary,
    clf: &Classifier,
    post: &LatentPosterior,
    delta: f64,
    cfg: &TrainConfig,
) -> Result<f64> {
    let solver = cfg.solver();
    let codes = HypothesisCodes {
        background: sparse_code_latent(x, d, Latent::Background, &solver)?.weights,
        target: Some(sparse_code_latent(x, d, Latent::Target, &solver)?.weights),
    };
    point_loss_given(clf, post, &codes, delta, cfg.u)
}

/// Sum of squared first differences of every atom, taken separately within
/// the real block and within the imaginary block.
pub fn smoothness_penalty(d: &Dictionary) -> f64 {
    let half = d.dim() / 2;
    (0..d.len())
        .map(|k| {
            let atom = d.atom(k);
            let (re, im) = atom.split_at(half);
            let diffs = |b: &[f64]| b.windows(2).map(|p| (p[1] - p[0]).powi(2)).sum::<f64>();
            diffs(re) + diffs(im)
        })
        .sum()
}

pub(crate) fn mean_pull(d: &Dictionary, mu0: &[f64]) -> f64 {
    (0..d.len())
        .map(|k| {
            d.atom(k)
                .iter()
                .zip(mu0)
                .map(|(a, m)| (a - m).powi(2))
                .sum::<f64>()
        })
        .sum()
}

/// Dataset-level penalties: mean pull, classifier ridge and smoothness.
pub(crate) fn regularizers(
    d: &Dictionary,
    clf: &Classifier,
    cfg: &TrainConfig,
    stats: &DataStats,
) -> f64 {
    0.5 * cfg.u * mean_pull(d, &stats.mu0)
        + 0.5 * cfg.v * norm_sq(&clf.w)
        + 0.5 * cfg.s * smoothness_penalty(d)
}

/// Objective with posteriors and codes supplied by the caller.
pub fn objective_given(
    points: &[TrainPoint],
    d: &Dictionary,
    clf: &Classifier,
    posteriors: &[LatentPosterior],
    codes: &[HypothesisCodes],
    cfg: &TrainConfig,
    stats: &DataStats,
) -> Result<f64> {
    check_dim(points.len(), posteriors.len())?;
    check_dim(points.len(), codes.len())?;
    check_dim(d.len(), clf.w.len())?;
    let mut loss = 0.0;
    for ((p, post), c) in points.iter().zip(posteriors).zip(codes) {
        loss += point_loss_given(clf, post, c, p.delta, cfg.u)?;
    }
    Ok(loss + regularizers(d, clf, cfg, stats))
}

/// Full objective: posteriors and codes are computed from `d`.
pub fn objective(
    bags: &[Bag],
    d: &Dictionary,
    clf: &Classifier,
    cfg: &TrainConfig,
    stats: &DataStats,
) -> Result<f64> {
    let points = flatten_bags(bags, stats, cfg.epsilon)?;
    let mut loss = 0.0;
    for p in &points {
        check_dim(d.dim(), p.x.len())?;
        let post = latent_posterior(&p.x, d, cfg, p.label)?;
        loss += expected_point_loss(&p.x, d, clf, &post, p.delta, cfg)?;
    }
    Ok(loss + regularizers(d, clf, cfg, stats))
}

/// Expected reconstruction objective of the unsupervised model (a quantity
/// to maximize). Codes and posteriors are given per point in bag order; the
/// sparsity weight applies to the posterior-weighted non-target weights.
pub fn efumi_objective(
    bags: &[Bag],
    d: &Dictionary,
    codes: &[HypothesisCodes],
    posteriors: &[LatentPosterior],
    diag: &EfumiDiagnosticConfig,
    stats: &DataStats,
) -> Result<f64> {
    check_dim(d.nontarget_count(), diag.gammas.len())?;
    let xs: Vec<&[f64]> = bags
        .iter()
        .flat_map(|b| b.points.iter().map(|p| p.as_slice()))
        .collect();
    check_dim(xs.len(), codes.len())?;
    check_dim(xs.len(), posteriors.len())?;
    let nt = d.nontarget_range();
    let mut recon = 0.0;
    let mut sparsity = 0.0;
    for ((x, c), post) in xs.iter().zip(codes).zip(posteriors) {
        for z in Latent::BOTH {
            let p = post.prob(z);
            if p == 0.0 {
                continue;
            }
            let alpha = c
                .get(z)
                .ok_or_else(|| Error::invalid("missing target-hypothesis code"))?;
            let mut used = alpha.to_vec();
            if z == Latent::Background {
                used[d.target_range()].iter_mut().for_each(|a| *a = 0.0);
            }
            recon += p * norm_sq(&d.residual(x, &used));
            sparsity += p * nt
                .clone()
                .zip(&diag.gammas)
                .map(|(m, g)| g * alpha[m])
                .sum::<f64>();
        }
    }
    Ok(-0.5 * (1.0 - diag.u) * recon - 0.5 * diag.u * mean_pull(d, &stats.mu0) - sparsity)
}
