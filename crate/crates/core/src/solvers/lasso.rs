use super::{Dictionary, SolverConfig, SparseCode};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm_sq};

#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// `0.5 ||x - D a||^2 + lambda1 ||a||_1 + 0.5 lambda2 ||a||^2`
pub fn lasso_objective(
    x: &[f64],
    d: &Dictionary,
    weights: &[f64],
    lambda1: f64,
    lambda2: f64,
) -> f64 {
    let r = d.residual(x, weights);
    0.5 * norm_sq(&r)
        + lambda1 * weights.iter().map(|w| w.abs()).sum::<f64>()
        + 0.5 * lambda2 * norm_sq(weights)
}

/// Latent hypothesis for a training point: background (only non-target
/// atoms may be used) or target (the whole dictionary).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Latent {
    Background,
    Target,
}

impl Latent {
    pub const BOTH: [Latent; 2] = [Latent::Background, Latent::Target];

    /// The indicator value `z`.
    pub fn indicator(self) -> f64 {
        match self {
            Latent::Background => 0.0,
            Latent::Target => 1.0,
        }
    }
}

/// Elastic-net coordinate-descent coder with the Gram matrix of its atom
/// subset cached, for coding many signals against one dictionary.
#[derive(Debug, Clone)]
pub struct LassoCoder<'a> {
    dict: &'a Dictionary,
    indices: Vec<usize>,
    gram: Vec<f64>,
    lambda1: f64,
    lambda2: f64,
    max_iters: usize,
    tolerance: f64,
}

impl<'a> LassoCoder<'a> {
    /// Coder over the atoms listed in `indices` (in that cyclic order).
    pub fn new(dict: &'a Dictionary, indices: Vec<usize>, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        if let Some(&k) = indices.iter().find(|&&k| k >= dict.len()) {
            return Err(Error::invalid(format!("atom index {k} out of range")));
        }
        Ok(Self {
            gram: dict.gram(&indices),
            dict,
            indices,
            lambda1: cfg.lambda1,
            lambda2: cfg.lambda2,
            max_iters: cfg.max_iters,
            tolerance: cfg.tolerance,
        })
    }

    pub fn full(dict: &'a Dictionary, cfg: &SolverConfig) -> Result<Self> {
        Self::new(dict, (0..dict.len()).collect(), cfg)
    }

    pub fn latent(dict: &'a Dictionary, z: Latent, cfg: &SolverConfig) -> Result<Self> {
        let indices = match z {
            Latent::Target => (0..dict.len()).collect(),
            Latent::Background => dict.nontarget_range().collect(),
        };
        Self::new(dict, indices, cfg)
    }

    pub fn code(&self, x: &[f64]) -> Result<SparseCode> {
        self.code_traced(x, None, None)
    }

    /// Like [`code`](Self::code) but starts from `init`, a full-length
    /// weight vector; entries outside this coder's subset are ignored.
    pub fn code_from(&self, x: &[f64], init: &[f64]) -> Result<SparseCode> {
        check_dim(self.dict.len(), init.len())?;
        self.code_traced(x, Some(init), None)
    }

    fn code_traced(
        &self,
        x: &[f64],
        init: Option<&[f64]>,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<SparseCode> {
        check_dim(self.dict.dim(), x.len())?;
        let n = self.indices.len();
        let dtx: Vec<f64> = self
            .indices
            .iter()
            .map(|&k| dot(self.dict.atom(k), x))
            .collect();
        let mut alpha: Vec<f64> = match init {
            Some(w) => self.indices.iter().map(|&k| w[k]).collect(),
            None => vec![0.0; n],
        };
        // grad = D^T x - G alpha, kept in sync with alpha
        let mut grad = dtx.clone();
        for (a, &al) in alpha.iter().enumerate() {
            if al != 0.0 {
                for (g, gab) in grad.iter_mut().zip(&self.gram[a * n..(a + 1) * n]) {
                    *g -= gab * al;
                }
            }
        }
        let xx = norm_sq(x);
        let objective = |alpha: &[f64], grad: &[f64]| {
            // 0.5 x'x - a'D'x + 0.5 a'Ga = 0.5 x'x - 0.5 a'(D'x + (D'x - Ga))
            let quad: f64 = alpha
                .iter()
                .zip(dtx.iter().zip(grad))
                .map(|(a, (b, g))| a * (b + g))
                .sum();
            0.5 * xx - 0.5 * quad
                + self.lambda1 * alpha.iter().map(|a| a.abs()).sum::<f64>()
                + 0.5 * self.lambda2 * norm_sq(alpha)
        };
        if let Some(t) = trace.as_deref_mut() {
            t.push(objective(&alpha, &grad));
        }
        let mut converged = n == 0;
        let mut iterations = 0;
        while !converged && iterations < self.max_iters {
            iterations += 1;
            let mut max_change: f64 = 0.0;
            for a in 0..n {
                let gaa = self.gram[a * n + a];
                let denom = gaa + self.lambda2;
                let new = if denom > 0.0 {
                    soft_threshold(grad[a] + gaa * alpha[a], self.lambda1) / denom
                } else {
                    0.0
                };
                let delta = new - alpha[a];
                if delta != 0.0 {
                    alpha[a] = new;
                    let row = &self.gram[a * n..(a + 1) * n];
                    for (g, gab) in grad.iter_mut().zip(row) {
                        *g -= gab * delta;
                    }
                    max_change = max_change.max(delta.abs());
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(objective(&alpha, &grad));
            }
            converged = max_change < self.tolerance;
        }
        let mut weights = vec![0.0; self.dict.len()];
        for (&k, a) in self.indices.iter().zip(alpha) {
            weights[k] = a;
        }
        Ok(SparseCode {
            weights,
            converged,
            iterations,
        })
    }
}

/// Elastic-net sparse code of `x` over the whole dictionary by cyclic
/// coordinate descent. Hitting `max_iters` returns the last iterate with
/// `converged == false`.
pub fn lasso(x: &[f64], d: &Dictionary, cfg: &SolverConfig) -> Result<SparseCode> {
    LassoCoder::full(d, cfg)?.code(x)
}

/// Lasso over a subset of atoms; weights outside `indices` are exactly zero.
pub fn lasso_subset(
    x: &[f64],
    d: &Dictionary,
    indices: &[usize],
    cfg: &SolverConfig,
) -> Result<SparseCode> {
    LassoCoder::new(d, indices.to_vec(), cfg)?.code(x)
}

/// Lasso that also returns the objective after every sweep (entry 0 is the
/// objective at the zero start).
pub fn lasso_with_trace(
    x: &[f64],
    d: &Dictionary,
    cfg: &SolverConfig,
) -> Result<(SparseCode, Vec<f64>)> {
    let mut trace = Vec::new();
    let code = LassoCoder::full(d, cfg)?.code_traced(x, None, Some(&mut trace))?;
    Ok((code, trace))
}

/// Latent-gated sparse code: target hypotheses use every atom, background
/// hypotheses only the non-target atoms. `cfg.lambda2` is normally zero.
pub fn sparse_code_latent(
    x: &[f64],
    d: &Dictionary,
    z: Latent,
    cfg: &SolverConfig,
) -> Result<SparseCode> {
    LassoCoder::latent(d, z, cfg)?.code(x)
}
