use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::classify::{classify_alarm, Pooling};
use super::gradient::{add_regularizer_gradient, data_gradient};
use super::objective::{objective_given, HypothesisCodes};
use super::posterior::{delta_n, posterior_from_residual};
use super::{Bag, BagLabel, Classifier, DataStats, LatentPosterior, Model, TrainConfig};
use crate::dsrf::{dsrf_atom, log_space, stack_complex, FeatureVector, FrequencyGrid};
use crate::error::{check_dim, Error, Result};
use crate::linalg::norm_sq;
use crate::sim::soil_spectrum;
use crate::solvers::{Dictionary, LassoCoder, Latent};

/// A training point with its bag label and loss reweighting.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainPoint {
    pub x: Vec<f64>,
    pub label: BagLabel,
    pub delta: f64,
}

pub(crate) fn flatten_bags(
    bags: &[Bag],
    stats: &DataStats,
    epsilon: f64,
) -> Result<Vec<TrainPoint>> {
    let mut points = Vec::new();
    for bag in bags {
        let delta = delta_n(bag.is_positive(), stats, epsilon)?;
        for p in &bag.points {
            points.push(TrainPoint {
                x: p.0.clone(),
                label: bag.label,
                delta,
            });
        }
    }
    Ok(points)
}

/// E-step: posterior of every point under dictionary `d`.
pub fn compute_posteriors(
    points: &[TrainPoint],
    d: &Dictionary,
    cfg: &TrainConfig,
) -> Result<Vec<LatentPosterior>> {
    let coder = LassoCoder::latent(d, Latent::Background, &cfg.solver())?;
    points
        .par_iter()
        .map(|p| match p.label {
            BagLabel::Negative => Ok(LatentPosterior::BACKGROUND),
            BagLabel::Positive => {
                let code = coder.code(&p.x)?;
                Ok(posterior_from_residual(
                    norm_sq(&d.residual(&p.x, &code.weights)),
                    cfg.beta,
                    p.label,
                ))
            }
        })
        .collect()
}

/// E-step reusing background codes already computed under `d`.
fn posteriors_from_codes(
    points: &[TrainPoint],
    d: &Dictionary,
    codes: &[HypothesisCodes],
    cfg: &TrainConfig,
) -> Vec<LatentPosterior> {
    points
        .par_iter()
        .zip(codes.par_iter())
        .map(|(p, c)| match p.label {
            BagLabel::Negative => LatentPosterior::BACKGROUND,
            BagLabel::Positive => posterior_from_residual(
                norm_sq(&d.residual(&p.x, &c.background)),
                cfg.beta,
                p.label,
            ),
        })
        .collect()
}

/// Sparse codes under each hypothesis with non-zero posterior mass.
pub fn code_hypotheses(
    points: &[TrainPoint],
    posteriors: &[LatentPosterior],
    d: &Dictionary,
    cfg: &TrainConfig,
) -> Result<Vec<HypothesisCodes>> {
    code_hypotheses_from(points, posteriors, d, cfg, None)
}

/// Same codes, with coordinate descent started from `warm` where given.
/// The lasso solution is unique here, so only the iteration count changes.
fn code_hypotheses_from(
    points: &[TrainPoint],
    posteriors: &[LatentPosterior],
    d: &Dictionary,
    cfg: &TrainConfig,
    warm: Option<&[HypothesisCodes]>,
) -> Result<Vec<HypothesisCodes>> {
    check_dim(points.len(), posteriors.len())?;
    if let Some(w) = warm {
        check_dim(points.len(), w.len())?;
    }
    let solver = cfg.solver();
    let background = LassoCoder::latent(d, Latent::Background, &solver)?;
    let target = LassoCoder::latent(d, Latent::Target, &solver)?;
    points
        .par_iter()
        .zip(posteriors.par_iter())
        .enumerate()
        .map(|(i, (p, post))| {
            let prev = warm.map(|w| &w[i]);
            let bg = match prev {
                Some(c) => background.code_from(&p.x, &c.background)?,
                None => background.code(&p.x)?,
            };
            let tg = if post.p1 > 0.0 {
                let code = match prev.and_then(|c| c.target.as_ref()) {
                    Some(t) => target.code_from(&p.x, t)?,
                    None => target.code(&p.x)?,
                };
                Some(code.weights)
            } else {
                None
            };
            Ok(HypothesisCodes {
                background: bg.weights,
                target: tg,
            })
        })
        .collect()
}

/// Starting dictionary: target atoms are normalized relaxation signatures
/// at interior log-spaced relaxation frequencies of the band; non-target
/// atoms are randomly drawn negative-bag points, perturbed by 1% Gaussian
/// noise and scaled to unit norm.
pub fn initial_dictionary(
    bags: &[Bag],
    grid: &FrequencyGrid,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Dictionary> {
    let dim = grid.feature_len();
    let mut atoms = Vec::with_capacity(cfg.atom_count());
    let zetas = log_space(grid.min_omega(), grid.max_omega(), cfg.target_atoms + 2);
    for &z in &zetas[1..zetas.len() - 1] {
        atoms.push(stack_complex(&dsrf_atom(grid, z)?).normalized());
    }
    let negatives: Vec<&FeatureVector> = bags
        .iter()
        .filter(|b| !b.is_positive())
        .flat_map(|b| b.points.iter())
        .collect();
    if negatives.is_empty() {
        return Err(Error::invalid("training needs at least one negative bag"));
    }
    let picks: Vec<usize> = if negatives.len() >= cfg.nontarget_atoms {
        rand::seq::index::sample(rng, negatives.len(), cfg.nontarget_atoms).into_vec()
    } else {
        (0..cfg.nontarget_atoms)
            .map(|_| rng.random_range(0..negatives.len()))
            .collect()
    };
    for i in picks {
        let x = negatives[i].as_slice();
        check_dim(dim, x.len())?;
        let rms = (norm_sq(x) / dim as f64).sqrt();
        let sd = if rms > 0.0 { 0.01 * rms } else { 0.01 };
        let noise = Normal::new(0.0, sd).map_err(|e| Error::invalid(e.to_string()))?;
        let perturbed: Vec<f64> = x.iter().map(|v| v + noise.sample(rng)).collect();
        atoms.push(FeatureVector(perturbed).normalized());
    }
    let mut d = Dictionary::from_atoms(&atoms, cfg.target_atoms).or_else(|_| {
        let raw = atoms.iter().flat_map(|a| a.0.iter().copied()).collect();
        Dictionary::from_raw_projected(dim, cfg.target_atoms, raw)
    })?;
    d.project_in_place();
    Ok(d)
}

fn max_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Train dictionary and classifier by EM over the latent indicators with
/// minibatch gradient steps in between. Deterministic given `cfg.seed`.
pub fn train(bags: &[Bag], grid: &FrequencyGrid, cfg: &TrainConfig) -> Result<Model> {
    cfg.validate()?;
    if !bags.iter().any(|b| b.is_positive()) {
        return Err(Error::invalid("training needs at least one positive bag"));
    }
    if let Some(b) = bags.iter().find(|b| b.points.is_empty()) {
        return Err(Error::Empty(format!("bag {} has no points", b.bag_id)));
    }
    let stats = DataStats::from_bags(bags)?;
    check_dim(grid.feature_len(), stats.mu0.len())?;
    let points = flatten_bags(bags, &stats, cfg.epsilon)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut d = initial_dictionary(bags, grid, cfg, &mut rng)?;
    let mut clf = Classifier::zeros(d.len());
    let mut log = Vec::new();

    let batches_per_epoch = points.len().div_ceil(cfg.batch_size);
    let t0 = cfg.t0.unwrap_or(batches_per_epoch as f64);
    let mut order: Vec<usize> = (0..points.len()).collect();
    let mut step = 0usize;

    // codes of every point under the current dictionary, reused as warm
    // starts and, after each epoch, as the next E-step
    let mut posteriors = compute_posteriors(&points, &d, cfg)?;
    let mut cache = code_hypotheses(&points, &posteriors, &d, cfg)?;

    for epoch in 0..cfg.epochs {
        if epoch > 0 {
            posteriors = posteriors_from_codes(&points, &d, &cache, cfg);
        }
        let start_d = d.raw().to_vec();
        let start_w = clf.w.clone();
        let start_psi = clf.psi;

        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TrainPoint> = chunk.iter().map(|&i| points[i].clone()).collect();
            let post: Vec<LatentPosterior> = chunk.iter().map(|&i| posteriors[i]).collect();
            let warm: Vec<HypothesisCodes> = chunk.iter().map(|&i| cache[i].clone()).collect();
            let codes = code_hypotheses_from(&batch, &post, &d, cfg, Some(&warm))?;
            // step on the objective divided by the point count, so a batch
            // mean stands in for the data sum and the penalties shrink to match
            let mut g = data_gradient(
                &batch,
                &d,
                &clf,
                &post,
                &codes,
                cfg,
                1.0 / batch.len() as f64,
            )?;
            add_regularizer_gradient(&mut g, &d, &clf, cfg, &stats, 1.0 / points.len() as f64);
            for (&i, c) in chunk.iter().zip(codes) {
                cache[i] = c;
            }

            let rho = cfg.rho0 / (1.0 + step as f64 / t0);
            for (p, gv) in d.raw_mut().iter_mut().zip(&g.dictionary) {
                *p -= rho * gv;
            }
            d.project_in_place();
            for (p, gv) in clf.w.iter_mut().zip(&g.w) {
                *p -= rho * gv;
            }
            clf.psi -= rho * g.psi;
            step += 1;
        }

        cache = code_hypotheses_from(&points, &posteriors, &d, cfg, Some(&cache))?;
        let codes = &cache;
        let obj = objective_given(&points, &d, &clf, &posteriors, codes, cfg, &stats)?;
        if !obj.is_finite() || d.raw().iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!(
                "objective became {obj} in epoch {epoch}; lower rho0"
            )));
        }
        log.push(obj);
        log::debug!("epoch {epoch}: objective {obj:.6e}");

        let change = max_change(&start_d, d.raw())
            .max(max_change(&start_w, &clf.w))
            .max((start_psi - clf.psi).abs());
        if change < cfg.tolerance {
            break;
        }
    }

    Ok(Model {
        grid: grid.clone(),
        dictionary: d,
        classifier: clf,
        config: cfg.clone(),
        stats,
        log,
    })
}

/// Fraction of bags whose max-pooled score falls on the correct side of
/// `threshold`.
pub fn bag_accuracy(model: &Model, bags: &[Bag], threshold: f64) -> Result<f64> {
    if bags.is_empty() {
        return Err(Error::Empty("no bags to score".into()));
    }
    let mut correct = 0;
    for bag in bags {
        let score = classify_alarm(&bag.points, model, Pooling::Max)?;
        if (score >= threshold) == bag.is_positive() {
            correct += 1;
        }
    }
    Ok(correct as f64 / bags.len() as f64)
}

/// Linearly separable multiple-instance problem: positive bags mix noisy
/// copies of a relaxation signature with soil-shaped background points,
/// negative bags hold background points only.
pub fn separable_instance(grid: &FrequencyGrid, seed: u64) -> Result<Vec<Bag>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zeta = (grid.min_omega() * grid.max_omega()).sqrt();
    let target = stack_complex(&dsrf_atom(grid, zeta)?).normalized();
    let background = stack_complex(&soil_spectrum(grid, 0.15));
    let noise = Normal::new(0.0, 0.02).map_err(|e| Error::invalid(e.to_string()))?;
    let draw = |shape: &FeatureVector, rng: &mut ChaCha8Rng| {
        let amp = rng.random_range(0.8..1.2);
        FeatureVector(
            shape
                .0
                .iter()
                .map(|v| amp * v + noise.sample(rng))
                .collect(),
        )
    };
    let mut bags = Vec::new();
    for i in 0..40 {
        let positive = i % 2 == 0;
        let points = (0..10)
            .map(|j| {
                if positive && j < 6 {
                    draw(&target, &mut rng)
                } else {
                    draw(&background, &mut rng)
                }
            })
            .collect();
        bags.push(Bag {
            bag_id: i,
            label: if positive {
                BagLabel::Positive
            } else {
                BagLabel::Negative
            },
            points,
            lane_id: 0,
            position_m: i as f64,
        });
    }
    Ok(bags)
}
