//! Polynomial term expansion and column standardization.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("column {0} is constant")]
    ConstantColumn(usize),
    #[error("no rows to fit")]
    Empty,
    #[error("polynomial needs n >= 1 and m >= 1 (got n = {0}, m = {1})")]
    InvalidDegree(usize, usize),
}

/// Number of non-constant monomials of degree 1..=m in n variables.
pub fn term_count(n: usize, m: usize) -> usize {
    (1..=m).map(|k| binomial(n + k - 1, k)).sum()
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128) as usize
}

/// Monomials ordered by degree, then lexicographically. Each monomial is a
/// non-decreasing list of variable indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "(usize, usize)", try_from = "(usize, usize)")]
pub struct PolyTermIndex {
    n: usize,
    m: usize,
    monomials: Vec<Vec<usize>>,
    /// Output slot (0 = constant) holding each monomial with its last factor removed.
    parent: Vec<usize>,
    positions: HashMap<Vec<usize>, usize>,
}

impl PolyTermIndex {
    pub fn new(n: usize, m: usize) -> Result<Self, FeatureError> {
        if n == 0 || m == 0 {
            return Err(FeatureError::InvalidDegree(n, m));
        }
        let mut monomials: Vec<Vec<usize>> = Vec::with_capacity(term_count(n, m));
        let mut prev: Vec<Vec<usize>> = vec![Vec::new()];
        for _ in 1..=m {
            let mut next = Vec::new();
            for base in &prev {
                let start = base.last().copied().unwrap_or(0);
                for i in start..n {
                    let mut mono = base.clone();
                    mono.push(i);
                    next.push(mono);
                }
            }
            monomials.extend(next.iter().cloned());
            prev = next;
        }
        let positions: HashMap<Vec<usize>, usize> =
            monomials.iter().enumerate().map(|(p, mono)| (mono.clone(), p)).collect();
        let parent = monomials
            .iter()
            .map(|mono| match mono.len() {
                1 => 0,
                k => positions[&mono[..k - 1]] + 1,
            })
            .collect();
        Ok(PolyTermIndex { n, m, monomials, parent, positions })
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.m
    }

    /// Number of terms excluding the constant.
    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomial(&self, p: usize) -> &[usize] {
        &self.monomials[p]
    }

    pub fn position(&self, monomial: &[usize]) -> Option<usize> {
        self.positions.get(monomial).copied()
    }

    /// `[1, terms...]`, length `len() + 1`.
    pub fn expand(&self, x: &[f64]) -> Result<Vec<f64>, FeatureError> {
        let mut out = vec![0.0; self.len() + 1];
        self.expand_into(x, &mut out)?;
        Ok(out)
    }

    pub fn expand_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), FeatureError> {
        if x.len() != self.n {
            return Err(FeatureError::DimensionMismatch { expected: self.n, got: x.len() });
        }
        out[0] = 1.0;
        for (p, mono) in self.monomials.iter().enumerate() {
            out[p + 1] = out[self.parent[p]] * x[*mono.last().expect("nonempty")];
        }
        Ok(())
    }
}

impl From<PolyTermIndex> for (usize, usize) {
    fn from(i: PolyTermIndex) -> Self {
        (i.n, i.m)
    }
}

impl TryFrom<(usize, usize)> for PolyTermIndex {
    type Error = FeatureError;
    fn try_from((n, m): (usize, usize)) -> Result<Self, Self::Error> {
        PolyTermIndex::new(n, m)
    }
}

/// Per-column mean and sample standard deviation from training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    /// Fits on row-major `data` with `ncols` columns.
    pub fn fit(data: &[f64], ncols: usize) -> Result<Self, FeatureError> {
        if ncols == 0 || !data.len().is_multiple_of(ncols) {
            return Err(FeatureError::DimensionMismatch { expected: ncols, got: data.len() });
        }
        let rows = data.len() / ncols;
        if rows < 2 {
            return Err(FeatureError::Empty);
        }
        let mut means = vec![0.0; ncols];
        for row in data.chunks_exact(ncols) {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= rows as f64);
        let mut sds = vec![0.0; ncols];
        for row in data.chunks_exact(ncols) {
            for ((s, v), m) in sds.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for (j, (s, m)) in sds.iter_mut().zip(&means).enumerate() {
            *s = (*s / (rows - 1) as f64).sqrt();
            if !(*s > 1e-12 * (1.0 + m.abs())) {
                return Err(FeatureError::ConstantColumn(j));
            }
        }
        Ok(Standardizer { means, sds })
    }

    /// Like [`Standardizer::fit`], but constant columns keep unit scale and
    /// map to zero instead of failing.
    pub fn fit_lenient(data: &[f64], ncols: usize) -> Result<Self, FeatureError> {
        match Self::fit(data, ncols) {
            Err(FeatureError::ConstantColumn(_)) => {
                let rows = data.len() / ncols;
                let mut means = vec![0.0; ncols];
                for row in data.chunks_exact(ncols) {
                    for (m, v) in means.iter_mut().zip(row) {
                        *m += v / rows as f64;
                    }
                }
                let mut sds = vec![0.0; ncols];
                for row in data.chunks_exact(ncols) {
                    for ((s, v), m) in sds.iter_mut().zip(row).zip(&means) {
                        *s += (v - m) * (v - m);
                    }
                }
                for (s, m) in sds.iter_mut().zip(&means) {
                    *s = (*s / (rows - 1) as f64).sqrt();
                    if !(*s > 1e-12 * (1.0 + m.abs())) {
                        *s = 1.0;
                    }
                }
                Ok(Standardizer { means, sds })
            }
            other => other,
        }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) -> Result<(), FeatureError> {
        if row.len() != self.dim() {
            return Err(FeatureError::DimensionMismatch { expected: self.dim(), got: row.len() });
        }
        for (((o, v), m), s) in out.iter_mut().zip(row).zip(&self.means).zip(&self.sds) {
            *o = (v - m) / s;
        }
        Ok(())
    }

    /// Standardizes every row of row-major `data`.
    pub fn apply(&self, data: &[f64]) -> Result<Vec<f64>, FeatureError> {
        let d = self.dim();
        if !data.len().is_multiple_of(d) {
            return Err(FeatureError::DimensionMismatch { expected: d, got: data.len() % d });
        }
        let mut out = vec![0.0; data.len()];
        for (row, o) in data.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            self.apply_row(row, o)?;
        }
        Ok(out)
    }
}
