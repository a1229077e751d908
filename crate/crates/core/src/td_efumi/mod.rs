//! Task-driven multiple-instance dictionary learning.
//!
//! Training data arrive as labelled bags. Points in negative bags are known
//! background; points in positive bags carry a latent indicator `z` whose
//! posterior is re-estimated once per epoch from how well the non-target
//! atoms alone reconstruct them. Between E-steps, minibatch gradient steps
//! update the dictionary, the linear classifier weights and the bias.

mod classify;
mod gradient;
mod objective;
mod persist;
mod posterior;
mod train;

use serde::{Deserialize, Serialize};

pub use classify::{classify, classify_alarm, classify_points, Pooling};
pub use gradient::{gradients, Gradients};
pub use objective::{
    efumi_objective, expected_point_loss, objective, objective_given, point_loss_given,
    smoothness_penalty, EfumiDiagnosticConfig, HypothesisCodes,
};
pub use persist::{load_model, read_model, save_model, write_model, MODEL_HEADER};
pub use posterior::{delta_n, latent_posterior, LatentPosterior};
pub use train::{
    bag_accuracy, code_hypotheses, compute_posteriors, initial_dictionary, separable_instance,
    train, TrainPoint,
};

use crate::dsrf::{FeatureVector, FrequencyGrid};
use crate::error::{Error, Result};
use crate::solvers::{Dictionary, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BagLabel {
    Positive,
    Negative,
}

/// A labelled group of points; the unit of supervision.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub bag_id: usize,
    pub label: BagLabel,
    pub points: Vec<FeatureVector>,
    pub lane_id: u32,
    pub position_m: f64,
}

impl Bag {
    pub fn is_positive(&self) -> bool {
        self.label == BagLabel::Positive
    }
}

/// Linear score `w . alpha + psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub w: Vec<f64>,
    pub psi: f64,
}

impl Classifier {
    pub fn zeros(k: usize) -> Self {
        Self {
            w: vec![0.0; k],
            psi: 0.0,
        }
    }

    pub fn score(&self, alpha: &[f64]) -> f64 {
        crate::linalg::dot(&self.w, alpha) + self.psi
    }
}

/// Training hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the pull of every atom toward the data mean; the loss term
    /// is weighted by `1 - u`.
    pub u: f64,
    /// Ridge on the classifier weights (not the bias).
    pub v: f64,
    /// Weight of the first-difference smoothness penalty on atoms.
    pub s: f64,
    /// l1 weight of the sparse coding.
    pub lambda: f64,
    /// Ridge used inside the sparse coding itself (normally zero).
    pub lambda2: f64,
    /// Ridge added to the active-set Gram matrix when differentiating codes.
    pub stab_ridge: f64,
    /// Scale of the background posterior `exp(-beta r^2)`.
    pub beta: f64,
    /// Multiplier on the positive-point reweighting `N_M / N_T`.
    pub epsilon: f64,
    pub target_atoms: usize,
    pub nontarget_atoms: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub rho0: f64,
    /// Learning-rate decay horizon in steps; `None` means one epoch.
    pub t0: Option<f64>,
    pub seed: u64,
    /// Stop once no parameter moved more than this over an epoch.
    pub tolerance: f64,
    pub solver_max_iters: usize,
    pub solver_tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            u: 0.05,
            v: 1e-3,
            s: 1e-2,
            lambda: 0.1,
            lambda2: 0.0,
            stab_ridge: 1e-4,
            beta: 5.0,
            epsilon: 1.0,
            target_atoms: 2,
            nontarget_atoms: 8,
            batch_size: 32,
            epochs: 40,
            rho0: 0.3,
            t0: None,
            seed: 0,
            tolerance: 1e-6,
            solver_max_iters: 10_000,
            solver_tolerance: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("u", (0.0..1.0).contains(&self.u)),
            ("v", self.v > 0.0),
            ("s", self.s >= 0.0),
            ("lambda", self.lambda >= 0.0),
            ("lambda2", self.lambda2 >= 0.0),
            ("stab_ridge", self.stab_ridge >= 0.0),
            ("beta", self.beta > 0.0),
            ("epsilon", self.epsilon > 0.0),
            ("nontarget_atoms", self.nontarget_atoms >= 1),
            ("batch_size", self.batch_size >= 1),
            ("rho0", self.rho0 > 0.0),
            ("t0", self.t0.is_none_or(|t| t > 0.0)),
            ("tolerance", self.tolerance > 0.0),
            ("solver_tolerance", self.solver_tolerance > 0.0),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(Error::invalid(format!("train config: {name} out of range"))),
            None => Ok(()),
        }
    }

    /// Solver settings for the latent sparse coding.
    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            lambda1: self.lambda,
            lambda2: self.lambda2,
            max_iters: self.solver_max_iters,
            tolerance: self.solver_tolerance,
            ..SolverConfig::default()
        }
    }

    pub fn atom_count(&self) -> usize {
        self.target_atoms + self.nontarget_atoms
    }
}

/// Data-set constants the objective depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct DataStats {
    /// Mean of every training point.
    pub mu0: Vec<f64>,
    /// Points in positive bags.
    pub n_target: usize,
    /// Points in negative bags.
    pub n_background: usize,
}

impl DataStats {
    pub fn from_bags(bags: &[Bag]) -> Result<Self> {
        let first = bags
            .iter()
            .flat_map(|b| b.points.first())
            .next()
            .ok_or_else(|| Error::Empty("no training points".into()))?;
        let dim = first.len();
        let mut mu0 = vec![0.0; dim];
        let (mut n_target, mut n_background) = (0, 0);
        for bag in bags {
            for p in &bag.points {
                crate::error::check_dim(dim, p.len())?;
                crate::linalg::axpy(1.0, p.as_slice(), &mut mu0);
            }
            if bag.is_positive() {
                n_target += bag.points.len();
            } else {
                n_background += bag.points.len();
            }
        }
        let n = (n_target + n_background) as f64;
        mu0.iter_mut().for_each(|v| *v /= n);
        Ok(Self {
            mu0,
            n_target,
            n_background,
        })
    }
}

/// A trained detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub grid: FrequencyGrid,
    pub dictionary: Dictionary,
    pub classifier: Classifier,
    pub config: TrainConfig,
    pub stats: DataStats,
    /// Objective value after each completed epoch.
    pub log: Vec<f64>,
}
