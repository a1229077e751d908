//! Independent reference computations shared by the integration tests.
//! Nothing here calls the solvers under test.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tdefumi::alarms::AlarmLabel;
use tdefumi::solvers::Dictionary;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `k` random atoms of norm 0.9 (room to perturb inside the unit ball) and
/// length `dim`, the first `targets` of them marked as target atoms.
pub fn random_dictionary(rng: &mut ChaCha8Rng, dim: usize, k: usize, targets: usize) -> Dictionary {
    let mut data = Vec::with_capacity(dim * k);
    for _ in 0..k {
        let v = gaussian(rng, dim);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        data.extend(v.iter().map(|x| 0.9 * x / n));
    }
    Dictionary::from_raw(dim, targets, data).unwrap()
}

pub fn matrix(d: &Dictionary, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(d.dim(), cols.len(), |r, c| d.atom(cols[c])[r])
}

pub fn elastic_net_value(x: &[f64], d: &Dictionary, w: &[f64], l1: f64, l2: f64) -> f64 {
    let xv = DVector::from_column_slice(x);
    let all: Vec<usize> = (0..d.len()).collect();
    let r = xv - matrix(d, &all) * DVector::from_column_slice(w);
    0.5 * r.norm_squared()
        + l1 * w.iter().map(|v| v.abs()).sum::<f64>()
        + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

/// Stationary point on a fixed support and sign pattern:
/// `(D_S'D_S + l2 I) a = D_S'x - l1 s`.
pub fn signed_support_solution(
    x: &[f64],
    d: &Dictionary,
    support: &[usize],
    signs: &[f64],
    l1: f64,
    l2: f64,
) -> Option<Vec<f64>> {
    let mut w = vec![0.0; d.len()];
    if support.is_empty() {
        return Some(w);
    }
    let m = matrix(d, support);
    let gram = m.transpose() * &m + DMatrix::identity(support.len(), support.len()) * l2;
    let rhs =
        m.transpose() * DVector::from_column_slice(x) - DVector::from_column_slice(signs) * l1;
    let a = gram.lu().solve(&rhs)?;
    for (i, &k) in support.iter().enumerate() {
        w[k] = a[i];
    }
    Some(w)
}

/// Exact elastic-net minimum by trying every sign pattern in {-1, 0, +1}^K
/// and keeping the sign-consistent stationary points.
pub fn enumerate_elastic_net(x: &[f64], d: &Dictionary, l1: f64, l2: f64) -> (Vec<f64>, f64) {
    let k = d.len();
    let mut best = (vec![0.0; k], elastic_net_value(x, d, &vec![0.0; k], l1, l2));
    for code in 0..3usize.pow(k as u32) {
        let mut c = code;
        let mut support = Vec::new();
        let mut signs = Vec::new();
        for j in 0..k {
            match c % 3 {
                1 => {
                    support.push(j);
                    signs.push(1.0);
                }
                2 => {
                    support.push(j);
                    signs.push(-1.0);
                }
                _ => {}
            }
            c /= 3;
        }
        let Some(w) = signed_support_solution(x, d, &support, &signs, l1, l2) else {
            continue;
        };
        if support.iter().zip(&signs).any(|(&j, s)| w[j] * s <= 0.0) {
            continue;
        }
        let v = elastic_net_value(x, d, &w, l1, l2);
        if v < best.1 {
            best = (w, v);
        }
    }
    best
}

/// Squared residual of the least-squares fit of `x` on the columns `cols`.
pub fn ls_residual_sq(x: &[f64], d: &Dictionary, cols: &[usize]) -> f64 {
    let xv = DVector::from_column_slice(x);
    if cols.is_empty() {
        return xv.norm_squared();
    }
    let m = matrix(d, cols);
    let a = m.clone().svd(true, true).solve(&xv, 1e-14).unwrap();
    (xv - m * a).norm_squared()
}

/// Single atom minimizing the summed squared residuals of two signals, by
/// exhaustive search (lowest index on ties).
pub fn best_joint_atom(xa: &[f64], xb: &[f64], d: &Dictionary) -> (usize, f64) {
    (0..d.len())
        .map(|k| (k, ls_residual_sq(xa, d, &[k]) + ls_residual_sq(xb, d, &[k])))
        .fold((usize::MAX, f64::INFINITY), |best, c| {
            if c.1 < best.1 {
                c
            } else {
                best
            }
        })
}

/// Probability that a random target outscores a random false alarm, ties
/// counting half, over all pairs.
pub fn mann_whitney(scores: &[f64], labels: &[AlarmLabel]) -> f64 {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l == AlarmLabel::Target)
        .map(|(s, _)| *s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l == AlarmLabel::FalseAlarm)
        .map(|(s, _)| *s)
        .collect();
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// Random scores and labels with both classes present.
pub fn random_alarm_scores(
    rng: &mut ChaCha8Rng,
    n: usize,
    quantize: Option<f64>,
) -> (Vec<f64>, Vec<AlarmLabel>) {
    loop {
        let labels: Vec<AlarmLabel> = (0..n)
            .map(|_| {
                if rng.random_bool(0.4) {
                    AlarmLabel::Target
                } else {
                    AlarmLabel::FalseAlarm
                }
            })
            .collect();
        let scores: Vec<f64> = labels
            .iter()
            .map(|l| {
                let shift = if *l == AlarmLabel::Target { 0.7 } else { 0.0 };
                let s: f64 = StandardNormal.sample(rng);
                let s = s + shift;
                match quantize {
                    Some(q) => (s / q).round() * q,
                    None => s,
                }
            })
            .collect();
        if labels.contains(&AlarmLabel::Target) && labels.contains(&AlarmLabel::FalseAlarm) {
            return (scores, labels);
        }
    }
}

pub mod gradient_oracle {
    use super::*;
    use tdefumi::solvers::{LassoCoder, Latent};
    use tdefumi::td_efumi::{
        gradients, objective_given, BagLabel, Classifier, DataStats, HypothesisCodes,
        LatentPosterior, TrainConfig, TrainPoint,
    };

    /// Active set and signs of one code.
    type Pattern = (Vec<usize>, Vec<f64>);

    pub struct Instance {
        pub points: Vec<TrainPoint>,
        pub posteriors: Vec<LatentPosterior>,
        pub d: Dictionary,
        pub clf: Classifier,
        pub cfg: TrainConfig,
        pub stats: DataStats,
        /// (support, signs) per point and hypothesis, frozen at `d`.
        patterns: Vec<[Option<Pattern>; 2]>,
    }

    /// Random problem with `l`-dimensional points, `k` atoms and `n` points.
    pub fn instance(seed: u64, l: usize, k: usize, n: usize) -> Instance {
        let mut r = rng(seed);
        let d = random_dictionary(&mut r, l, k, 2);
        let n_pos = n / 2;
        let points: Vec<TrainPoint> = (0..n)
            .map(|i| {
                let positive = i < n_pos;
                TrainPoint {
                    x: gaussian(&mut r, l),
                    label: if positive {
                        BagLabel::Positive
                    } else {
                        BagLabel::Negative
                    },
                    delta: if positive {
                        r.random_range(0.5..2.0)
                    } else {
                        1.0
                    },
                }
            })
            .collect();
        let posteriors = points
            .iter()
            .map(|p| match p.label {
                BagLabel::Positive => LatentPosterior::from_background(r.random_range(0.1..0.9)),
                BagLabel::Negative => LatentPosterior::BACKGROUND,
            })
            .collect();
        let mut mu0 = vec![0.0; l];
        for p in &points {
            for (m, v) in mu0.iter_mut().zip(&p.x) {
                *m += v / n as f64;
            }
        }
        let stats = DataStats {
            mu0,
            n_target: n_pos,
            n_background: n - n_pos,
        };
        let cfg = TrainConfig {
            u: 0.1,
            v: 0.01,
            s: 0.05,
            lambda: 0.2,
            lambda2: 1e-3,
            stab_ridge: 1e-3,
            solver_tolerance: 1e-14,
            solver_max_iters: 200_000,
            ..TrainConfig::default()
        };
        let clf = Classifier {
            w: gaussian(&mut r, k),
            psi: r.random_range(-0.5..0.5),
        };
        let mut inst = Instance {
            points,
            posteriors,
            d,
            clf,
            cfg,
            stats,
            patterns: Vec::new(),
        };
        inst.patterns = inst
            .points
            .iter()
            .zip(&inst.posteriors)
            .map(|(p, post)| {
                Latent::BOTH.map(|z| {
                    if post.prob(z) == 0.0 {
                        return None;
                    }
                    let code = LassoCoder::latent(&inst.d, z, &inst.cfg.solver())
                        .unwrap()
                        .code(&p.x)
                        .unwrap();
                    let support = code.active_set();
                    let signs = support.iter().map(|&j| code.weights[j].signum()).collect();
                    Some((support, signs))
                })
            })
            .collect();
        inst
    }

    impl Instance {
        /// Codes on the frozen supports and signs for dictionary `d`.
        pub fn codes(&self, d: &Dictionary) -> Vec<HypothesisCodes> {
            let (l1, l2) = (self.cfg.lambda, self.cfg.lambda2);
            self.points
                .iter()
                .zip(&self.patterns)
                .map(|(p, [bg, tg])| {
                    let solve = |pat: &(Vec<usize>, Vec<f64>)| {
                        signed_support_solution(&p.x, d, &pat.0, &pat.1, l1, l2).unwrap()
                    };
                    HypothesisCodes {
                        background: bg.as_ref().map(solve).unwrap_or_else(|| vec![0.0; d.len()]),
                        target: tg.as_ref().map(solve),
                    }
                })
                .collect()
        }

        pub fn value(&self, d: &Dictionary, clf: &Classifier) -> f64 {
            objective_given(
                &self.points,
                d,
                clf,
                &self.posteriors,
                &self.codes(d),
                &self.cfg,
                &self.stats,
            )
            .unwrap()
        }
    }

    fn rel(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12);
        diff / scale
    }

    /// Relative errors of the dictionary, weight and bias blocks against
    /// central differences of the objective.
    pub fn check(seed: u64) -> [f64; 3] {
        let inst = instance(seed, 10, 6, 30);
        let codes = inst.codes(&inst.d);
        let g = gradients(
            &inst.points,
            &inst.d,
            &inst.clf,
            &inst.posteriors,
            &codes,
            &inst.cfg,
            &inst.stats,
        )
        .unwrap();
        let h = 1e-5;
        let (dim, k) = (inst.d.dim(), inst.d.len());
        let raw = inst.d.raw().to_vec();
        let fd_dict: Vec<f64> = (0..raw.len())
            .map(|i| {
                let mut plus = raw.clone();
                let mut minus = raw.clone();
                plus[i] += h;
                minus[i] -= h;
                let dp = Dictionary::from_raw(dim, 2, plus).unwrap();
                let dm = Dictionary::from_raw(dim, 2, minus).unwrap();
                (inst.value(&dp, &inst.clf) - inst.value(&dm, &inst.clf)) / (2.0 * h)
            })
            .collect();
        let fd_w: Vec<f64> = (0..k)
            .map(|j| {
                let mut plus = inst.clf.clone();
                let mut minus = inst.clf.clone();
                plus.w[j] += h;
                minus.w[j] -= h;
                (inst.value(&inst.d, &plus) - inst.value(&inst.d, &minus)) / (2.0 * h)
            })
            .collect();
        let fd_psi = {
            let mut plus = inst.clf.clone();
            let mut minus = inst.clf.clone();
            plus.psi += h;
            minus.psi -= h;
            (inst.value(&inst.d, &plus) - inst.value(&inst.d, &minus)) / (2.0 * h)
        };
        [
            rel(&g.dictionary, &fd_dict),
            rel(&g.w, &fd_w),
            rel(&[g.psi], &[fd_psi]),
        ]
    }
}
