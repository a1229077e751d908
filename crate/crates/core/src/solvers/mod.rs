//! Sparse coding solvers: greedy pursuits (MP, OMP, joint OMP) and
//! elastic-net coordinate descent.

mod dictionary;
mod lasso;
mod pursuit;

use serde::{Deserialize, Serialize};

pub use dictionary::{project_unit_ball, Dictionary, UNIT_BALL_SLACK};
pub use lasso::{
    lasso, lasso_objective, lasso_subset, lasso_with_trace, soft_threshold, sparse_code_latent,
    LassoCoder, Latent,
};
pub use pursuit::{jomp, jomp_confidence, matching_pursuit, omp, JointCode};

use crate::error::{Error, Result};

/// Ceiling applied to each inverse residual in the joint pursuit confidence.
pub const DEFAULT_CONFIDENCE_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// l1 weight.
    pub lambda1: f64,
    /// Ridge weight (elastic net); zero gives the plain lasso.
    pub lambda2: f64,
    pub max_iters: usize,
    /// Coordinate-descent stop on max coordinate change; pursuit stop on
    /// residual norm.
    pub tolerance: f64,
    /// Pursuit sparsity level.
    pub max_atoms: usize,
    pub confidence_cap: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 0.0,
            max_iters: 10_000,
            tolerance: 1e-8,
            max_atoms: 1,
            confidence_cap: DEFAULT_CONFIDENCE_CAP,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(Error::invalid("lambda1 must be finite and >= 0"));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(Error::invalid("lambda2 must be finite and >= 0"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be > 0"));
        }
        if !(self.confidence_cap > 0.0) {
            return Err(Error::invalid("confidence cap must be > 0"));
        }
        Ok(())
    }
}

/// Sparse weights over every atom of a dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub weights: Vec<f64>,
    /// False when an iterative solver hit its iteration cap.
    pub converged: bool,
    pub iterations: usize,
}

impl SparseCode {
    pub fn zeros(k: usize) -> Self {
        Self {
            weights: vec![0.0; k],
            converged: true,
            iterations: 0,
        }
    }

    pub fn active_set(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(k, _)| k)
            .collect()
    }
}
