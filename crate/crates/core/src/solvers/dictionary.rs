use crate::dsrf::FeatureVector;
use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// Slack allowed on the unit-ball constraint.
pub const UNIT_BALL_SLACK: f64 = 1e-9;

/// Column dictionary of `K = T + M` atoms of dimension `L`.
///
/// Target atoms occupy indices `0..T`, non-target atoms `T..K`. Atoms are
/// stored contiguously (atom-major), so [`Dictionary::atom`] is a slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    dim: usize,
    target_count: usize,
    data: Vec<f64>,
}

impl Dictionary {
    pub fn from_atoms(atoms: &[FeatureVector], target_count: usize) -> Result<Self> {
        let first = atoms
            .first()
            .ok_or_else(|| Error::Empty("dictionary has no atoms".into()))?;
        let dim = first.len();
        let mut data = Vec::with_capacity(dim * atoms.len());
        for a in atoms {
            check_dim(dim, a.len())?;
            data.extend_from_slice(a.as_slice());
        }
        Self::from_raw(dim, target_count, data)
    }

    /// Build from atom-major storage (`data.len() == dim * K`).
    pub fn from_raw(dim: usize, target_count: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "dictionary storage of {} values does not tile dimension {dim}",
                data.len()
            )));
        }
        let k = data.len() / dim;
        if target_count >= k {
            return Err(Error::invalid(format!(
                "dictionary needs at least one non-target atom ({target_count} targets of {k})"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dictionary contains non-finite values"));
        }
        let d = Self {
            dim,
            target_count,
            data,
        };
        if let Some(k) = (0..d.len()).find(|&k| linalg::norm(d.atom(k)) > 1.0 + UNIT_BALL_SLACK) {
            return Err(Error::invalid(format!(
                "atom {k} lies outside the unit ball (norm {})",
                linalg::norm(d.atom(k))
            )));
        }
        Ok(d)
    }

    /// Like [`Dictionary::from_raw`] but rescales atoms into the unit ball
    /// instead of rejecting them.
    pub fn from_raw_projected(dim: usize, target_count: usize, mut data: Vec<f64>) -> Result<Self> {
        if dim > 0 {
            for atom in data.chunks_mut(dim) {
                project_atom(atom);
            }
        }
        Self::from_raw(dim, target_count, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total number of atoms `K`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn target_count(&self) -> usize {
        self.target_count
    }

    pub fn nontarget_count(&self) -> usize {
        self.len() - self.target_count
    }

    pub fn target_range(&self) -> std::ops::Range<usize> {
        0..self.target_count
    }

    pub fn nontarget_range(&self) -> std::ops::Range<usize> {
        self.target_count..self.len()
    }

    pub fn atom(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    #[cfg(test)]
    pub(crate) fn atom_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `D alpha` for a full-length weight vector.
    pub fn reconstruct(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (k, &a) in weights.iter().enumerate() {
            if a != 0.0 {
                linalg::axpy(a, self.atom(k), &mut out);
            }
        }
        out
    }

    /// `x - D alpha`
    pub fn residual(&self, x: &[f64], weights: &[f64]) -> Vec<f64> {
        let mut r = x.to_vec();
        for (k, &a) in weights.iter().enumerate() {
            if a != 0.0 {
                linalg::axpy(-a, self.atom(k), &mut r);
            }
        }
        r
    }

    /// Row-major Gram matrix restricted to `indices`.
    pub fn gram(&self, indices: &[usize]) -> Vec<f64> {
        let n = indices.len();
        let mut g = vec![0.0; n * n];
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate().skip(a) {
                let v = linalg::dot(self.atom(i), self.atom(j));
                g[a * n + b] = v;
                g[b * n + a] = v;
            }
        }
        g
    }

    /// Copy with atoms reordered by `perm` (new atom `i` is old atom `perm[i]`).
    /// The target count is kept, so callers permuting across the partition
    /// boundary get a dictionary with a different split.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_dim(self.len(), perm.len())?;
        let mut data = Vec::with_capacity(self.data.len());
        for &p in perm {
            data.extend_from_slice(self.atom(p));
        }
        Self::from_raw(self.dim, self.target_count, data)
    }

    /// Rescale every atom with norm above one onto the unit sphere.
    pub fn project_unit_ball(&self) -> Self {
        let mut d = self.clone();
        d.project_in_place();
        d
    }

    pub(crate) fn project_in_place(&mut self) {
        let dim = self.dim;
        for atom in self.data.chunks_mut(dim) {
            project_atom(atom);
        }
    }
}

fn project_atom(atom: &mut [f64]) {
    let n = linalg::norm(atom);
    if n > 1.0 {
        for v in atom.iter_mut() {
            *v /= n;
        }
    }
}

/// Free-function form of [`Dictionary::project_unit_ball`].
pub fn project_unit_ball(d: &Dictionary) -> Dictionary {
    d.project_unit_ball()
}
