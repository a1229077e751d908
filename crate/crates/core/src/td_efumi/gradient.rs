use super::objective::HypothesisCodes;
use super::train::TrainPoint;
use super::{Classifier, DataStats, LatentPosterior, TrainConfig};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, solve_spd};
use crate::solvers::{Dictionary, Latent};

/// Gradient of the objective with respect to the dictionary (atom-major,
/// same layout as [`Dictionary::raw`]), the classifier weights and the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub dictionary: Vec<f64>,
    pub w: Vec<f64>,
    pub psi: f64,
}

impl Gradients {
    fn zeros(dim: usize, k: usize) -> Self {
        Self {
            dictionary: vec![0.0; dim * k],
            w: vec![0.0; k],
            psi: 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.dictionary
            .iter()
            .chain(&self.w)
            .chain(std::iter::once(&self.psi))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Gradient of the objective restricted to `batch` (classification loss of
/// the batch points plus the dataset-level penalties), with posteriors held
/// fixed. The dictionary enters the loss only through the sparse codes;
/// their derivative is taken on each code's active set with the sign
/// pattern held fixed, using `stab_ridge` to regularize the Gram inverse.
pub fn gradients(
    batch: &[TrainPoint],
    d: &Dictionary,
    clf: &Classifier,
    posteriors: &[LatentPosterior],
    codes: &[HypothesisCodes],
    cfg: &TrainConfig,
    stats: &DataStats,
) -> Result<Gradients> {
    let mut g = data_gradient(batch, d, clf, posteriors, codes, cfg, 1.0)?;
    add_regularizer_gradient(&mut g, d, clf, cfg, stats, 1.0);
    Ok(g)
}

/// Loss part only, scaled by `scale`.
pub(crate) fn data_gradient(
    batch: &[TrainPoint],
    d: &Dictionary,
    clf: &Classifier,
    posteriors: &[LatentPosterior],
    codes: &[HypothesisCodes],
    cfg: &TrainConfig,
    scale: f64,
) -> Result<Gradients> {
    check_dim(batch.len(), posteriors.len())?;
    check_dim(batch.len(), codes.len())?;
    check_dim(d.len(), clf.w.len())?;
    let (dim, k) = (d.dim(), d.len());
    let mut g = Gradients::zeros(dim, k);
    for ((point, post), code) in batch.iter().zip(posteriors).zip(codes) {
        check_dim(dim, point.x.len())?;
        for z in Latent::BOTH {
            let p = post.prob(z);
            if p == 0.0 {
                continue;
            }
            let alpha = code
                .get(z)
                .ok_or_else(|| Error::invalid("missing target-hypothesis code"))?;
            let weight = scale * (1.0 - cfg.u) * point.delta * p;
            let e = clf.score(alpha) - z.indicator();
            let c = weight * e;
            if c == 0.0 {
                continue;
            }
            axpy(c, alpha, &mut g.w);
            g.psi += c;

            let active: Vec<usize> = (0..k).filter(|&j| alpha[j] != 0.0).collect();
            if active.is_empty() {
                continue;
            }
            let rhs: Vec<f64> = active.iter().map(|&j| c * clf.w[j]).collect();
            let gram = d.gram(&active);
            let beta = solve_spd(&gram, active.len(), cfg.stab_ridge, &rhs)
                .ok_or_else(|| Error::Divergence("active-set Gram matrix is singular".into()))?;
            let residual = d.residual(&point.x, alpha);
            // D_active beta
            let mut d_beta = vec![0.0; dim];
            for (&j, &b) in active.iter().zip(&beta) {
                axpy(b, d.atom(j), &mut d_beta);
            }
            for (&j, &b) in active.iter().zip(&beta) {
                let col = &mut g.dictionary[j * dim..(j + 1) * dim];
                axpy(b, &residual, col);
                axpy(-alpha[j], &d_beta, col);
            }
        }
    }
    Ok(g)
}

/// Penalty part, scaled by `scale`.
pub(crate) fn add_regularizer_gradient(
    g: &mut Gradients,
    d: &Dictionary,
    clf: &Classifier,
    cfg: &TrainConfig,
    stats: &DataStats,
    scale: f64,
) {
    let dim = d.dim();
    let half = dim / 2;
    let (u, s) = (scale * cfg.u, scale * cfg.s);
    axpy(scale * cfg.v, &clf.w, &mut g.w);
    for k in 0..d.len() {
        let atom = d.atom(k);
        let col = &mut g.dictionary[k * dim..(k + 1) * dim];
        for ((gc, a), m) in col.iter_mut().zip(atom).zip(&stats.mu0) {
            *gc += u * (a - m);
        }
        if s != 0.0 {
            for (start, end) in [(0, half), (half, dim)] {
                for l in start + 1..end {
                    let diff = s * (atom[l] - atom[l - 1]);
                    col[l] += diff;
                    col[l - 1] -= diff;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::td_efumi::BagLabel;

    #[test]
    fn background_posteriors_with_zero_classifier_give_zero_weight_gradient() {
        let d = Dictionary::from_raw(4, 1, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let clf = Classifier::zeros(2);
        let batch = vec![TrainPoint {
            x: vec![0.3, 0.4, 0.0, 0.1],
            label: BagLabel::Positive,
            delta: 1.0,
        }];
        let codes = vec![HypothesisCodes {
            background: vec![0.0, 0.3],
            target: Some(vec![0.2, 0.3]),
        }];
        let cfg = TrainConfig {
            v: 0.5,
            ..TrainConfig::default()
        };
        let stats = DataStats {
            mu0: vec![0.0; 4],
            n_target: 1,
            n_background: 0,
        };
        let g = gradients(
            &batch,
            &d,
            &clf,
            &[LatentPosterior::BACKGROUND],
            &codes,
            &cfg,
            &stats,
        )
        .unwrap();
        assert_eq!(g.w, vec![0.0, 0.0]);
        assert_eq!(g.psi, 0.0);
    }

    #[test]
    fn zero_weighted_data_leaves_only_ridge() {
        let d = Dictionary::from_raw(4, 1, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let clf = Classifier {
            w: vec![0.7, -1.1],
            psi: 0.3,
        };
        let batch = vec![TrainPoint {
            x: vec![0.3, 0.4, 0.0, 0.1],
            label: BagLabel::Positive,
            delta: 0.0,
        }];
        let codes = vec![HypothesisCodes {
            background: vec![0.0, 0.3],
            target: Some(vec![0.2, 0.3]),
        }];
        let cfg = TrainConfig {
            v: 0.5,
            ..TrainConfig::default()
        };
        let stats = DataStats {
            mu0: vec![0.0; 4],
            n_target: 1,
            n_background: 0,
        };
        let post = [LatentPosterior::from_background(0.4)];
        let g = gradients(&batch, &d, &clf, &post, &codes, &cfg, &stats).unwrap();
        assert_eq!(g.w, vec![0.5 * 0.7, 0.5 * -1.1]);
        assert_eq!(g.psi, 0.0);
    }
}
