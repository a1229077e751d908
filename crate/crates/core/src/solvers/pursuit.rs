use super::{Dictionary, SolverConfig, SparseCode};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, dot, norm, norm_sq};

/// Relative size below which a new atom is treated as lying in the span of
/// the atoms already selected.
const RANK_TOL: f64 = 1e-10;

/// Orthonormal basis of the selected atoms, grown by modified Gram-Schmidt
/// with one reorthogonalization pass. `r` holds the upper-triangular factor
/// so that `D_active = Q R`.
struct ActiveBasis {
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    indices: Vec<usize>,
}

impl ActiveBasis {
    fn new() -> Self {
        Self {
            q: Vec::new(),
            r: Vec::new(),
            indices: Vec::new(),
        }
    }

    fn contains(&self, k: usize) -> bool {
        self.indices.contains(&k)
    }

    /// Component of `v` orthogonal to the current span.
    fn orthogonal_part(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut u = v.to_vec();
        let mut coeffs = vec![0.0; self.q.len()];
        for _ in 0..2 {
            for (c, q) in coeffs.iter_mut().zip(&self.q) {
                let p = dot(q, &u);
                *c += p;
                axpy(-p, q, &mut u);
            }
        }
        (u, coeffs)
    }

    /// Adds atom `k`; returns false when it is numerically dependent.
    fn try_push(&mut self, k: usize, atom: &[f64]) -> bool {
        let (u, coeffs) = self.orthogonal_part(atom);
        let un = norm(&u);
        if un <= RANK_TOL * norm(atom).max(f64::MIN_POSITIVE) {
            return false;
        }
        self.q.push(u.into_iter().map(|v| v / un).collect());
        let mut col = coeffs;
        col.push(un);
        self.r.push(col);
        self.indices.push(k);
        true
    }

    fn residual(&self, x: &[f64]) -> Vec<f64> {
        self.orthogonal_part(x).0
    }

    /// Least-squares coefficients of `x` on the active atoms, scattered into
    /// a length-`k` weight vector.
    fn weights(&self, x: &[f64], k: usize) -> Vec<f64> {
        let n = self.q.len();
        let qtx: Vec<f64> = self.q.iter().map(|q| dot(q, x)).collect();
        // back substitution on R c = Q^T x; column j of R is self.r[j]
        let mut c = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = qtx[i];
            for j in i + 1..n {
                s -= self.r[j][i] * c[j];
            }
            c[i] = s / self.r[i][i];
        }
        let mut w = vec![0.0; k];
        for (&idx, v) in self.indices.iter().zip(c) {
            w[idx] = v;
        }
        w
    }
}

/// Index maximizing `|<d_k, r>| / ||d_k||`, lowest index on ties; zero
/// atoms and `skip`ped atoms never win. `None` when every score is zero.
fn best_correlated(d: &Dictionary, r: &[f64], skip: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for k in 0..d.len() {
        if skip(k) {
            continue;
        }
        let atom = d.atom(k);
        let an = norm(atom);
        if an == 0.0 {
            continue;
        }
        let score = dot(atom, r).abs() / an;
        if score > best.map_or(0.0, |b| b.1) {
            best = Some((k, score));
        }
    }
    best.map(|b| b.0)
}

fn check_inputs(x: &[f64], d: &Dictionary, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    check_dim(d.dim(), x.len())
}

/// Plain matching pursuit: greedy selection and projection subtraction
/// without refitting. Atoms may be selected more than once.
pub fn matching_pursuit(x: &[f64], d: &Dictionary, cfg: &SolverConfig) -> Result<SparseCode> {
    check_inputs(x, d, cfg)?;
    let mut weights = vec![0.0; d.len()];
    let mut r = x.to_vec();
    let mut iterations = 0;
    while iterations < cfg.max_atoms && norm(&r) > cfg.tolerance {
        let Some(k) = best_correlated(d, &r, |_| false) else {
            break;
        };
        let atom = d.atom(k);
        let c = dot(atom, &r) / norm_sq(atom);
        weights[k] += c;
        axpy(-c, atom, &mut r);
        iterations += 1;
    }
    Ok(SparseCode {
        weights,
        converged: true,
        iterations,
    })
}

/// Orthogonal matching pursuit. After each greedy selection the weights are
/// refit by least squares on the active set. A selected atom that is
/// linearly dependent on the active set is dropped and the pursuit stops.
pub fn omp(x: &[f64], d: &Dictionary, cfg: &SolverConfig) -> Result<SparseCode> {
    check_inputs(x, d, cfg)?;
    let mut basis = ActiveBasis::new();
    let mut r = x.to_vec();
    let mut iterations = 0;
    while iterations < cfg.max_atoms && norm(&r) > cfg.tolerance {
        let Some(k) = best_correlated(d, &r, |k| basis.contains(k)) else {
            break;
        };
        if !basis.try_push(k, d.atom(k)) {
            break;
        }
        r = basis.residual(x);
        iterations += 1;
    }
    Ok(SparseCode {
        weights: basis.weights(x, d.len()),
        converged: true,
        iterations,
    })
}

/// Output of the joint pursuit on a pair of signals.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCode {
    pub a: SparseCode,
    pub b: SparseCode,
    pub residual_a: f64,
    pub residual_b: f64,
    pub confidence: f64,
}

/// Mean of the capped inverse residual norms.
pub fn jomp_confidence(residual_a: f64, residual_b: f64, cap: f64) -> f64 {
    let inv = |r: f64| if r > 0.0 { (1.0 / r).min(cap) } else { cap };
    0.5 * (inv(residual_a) + inv(residual_b))
}

/// Joint orthogonal matching pursuit over two signals sharing one active
/// set. Each step adds the single atom that minimizes the summed squared
/// residuals of both signals after least-squares refits.
pub fn jomp(xa: &[f64], xb: &[f64], d: &Dictionary, cfg: &SolverConfig) -> Result<JointCode> {
    check_inputs(xa, d, cfg)?;
    check_dim(d.dim(), xb.len())?;
    if d.is_empty() {
        return Err(Error::Empty(
            "joint pursuit needs a non-empty dictionary".into(),
        ));
    }
    let mut basis = ActiveBasis::new();
    let mut ra = xa.to_vec();
    let mut rb = xb.to_vec();
    let mut iterations = 0;
    while iterations < cfg.max_atoms && (norm_sq(&ra) + norm_sq(&rb)).sqrt() > cfg.tolerance {
        // Residuals are orthogonal to the span, so <q_k, r> = <d_k, r>.
        let mut best: Option<(usize, f64)> = None;
        for k in 0..d.len() {
            if basis.contains(k) {
                continue;
            }
            let atom = d.atom(k);
            let (q, _) = basis.orthogonal_part(atom);
            let qn2 = norm_sq(&q);
            if qn2.sqrt() <= RANK_TOL * norm(atom).max(f64::MIN_POSITIVE) {
                continue;
            }
            let (pa, pb) = (dot(atom, &ra), dot(atom, &rb));
            let gain = (pa * pa + pb * pb) / qn2;
            if gain > best.map_or(0.0, |b| b.1) {
                best = Some((k, gain));
            }
        }
        let Some((k, _)) = best else {
            break;
        };
        if !basis.try_push(k, d.atom(k)) {
            break;
        }
        ra = basis.residual(xa);
        rb = basis.residual(xb);
        iterations += 1;
    }
    let (na, nb) = (norm(&ra), norm(&rb));
    let code = |x: &[f64]| SparseCode {
        weights: basis.weights(x, d.len()),
        converged: true,
        iterations,
    };
    Ok(JointCode {
        a: code(xa),
        b: code(xb),
        residual_a: na,
        residual_b: nb,
        confidence: jomp_confidence(na, nb, cfg.confidence_cap),
    })
}
