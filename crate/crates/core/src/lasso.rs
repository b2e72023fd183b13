//! LASSO-regularized multivariate polynomial regression.
//!
//! The loss is the raw sum of squared errors plus `alpha * Σ|β_p|` over the
//! polynomial terms; the intercept is not penalized. Inputs are standardized
//! before expansion, so `alpha` is relative to unit-variance factors and
//! scales with the number of training rows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureError, PolyTermIndex, Standardizer};
use crate::model::TrainingTrace;
use crate::stats::rmse;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LassoError {
    #[error("alpha must be finite and non-negative, got {0}")]
    InvalidAlpha(f64),
    #[error("term {0} is constant on the training rows")]
    DegenerateDesign(usize),
    #[error("{rows} rows but {targets} targets")]
    DimensionMismatch { rows: usize, targets: usize },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("empty sweep grid")]
    EmptyGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LassoConfig {
    pub degree: usize,
    pub alpha: f64,
    /// Stop once no coefficient moves more than this in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig { degree: 3, alpha: 0.5, tol: 1e-8, max_sweeps: 100_000 }
    }
}

/// Solution of one LASSO problem on an explicit design.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub trace: TrainingTrace,
}

fn soft_threshold(rho: f64, lambda: f64) -> f64 {
    if rho > lambda {
        rho - lambda
    } else if rho < -lambda {
        rho + lambda
    } else {
        0.0
    }
}

/// Smallest alpha at which every penalized coefficient is zero.
pub fn alpha_max(x: &[f64], ncols: usize, y: &[f64]) -> f64 {
    let rows = y.len();
    let ybar = y.iter().sum::<f64>() / rows as f64;
    let mut means = vec![0.0; ncols];
    for row in x.chunks_exact(ncols) {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v / rows as f64;
        }
    }
    let mut c = vec![0.0; ncols];
    for (row, yt) in x.chunks_exact(ncols).zip(y) {
        for p in 0..ncols {
            c[p] += (row[p] - means[p]) * (yt - ybar);
        }
    }
    c.iter().map(|v| 2.0 * v.abs()).fold(0.0, f64::max)
}

/// Cyclic coordinate descent on `Σ(y - β0 - Xβ)² + alpha Σ|β|` for a
/// row-major design `x` with `ncols` columns.
///
/// Works on the centered Gram matrix, so each sweep costs O(ncols²)
/// regardless of the number of rows.
pub fn solve_lasso(
    x: &[f64],
    ncols: usize,
    y: &[f64],
    alpha: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<LassoFit, LassoError> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(LassoError::InvalidAlpha(alpha));
    }
    let rows = y.len();
    if ncols == 0 || x.len() != rows * ncols || rows == 0 {
        return Err(LassoError::DimensionMismatch { rows: x.len() / ncols.max(1), targets: rows });
    }
    let ybar = y.iter().sum::<f64>() / rows as f64;
    let mut means = vec![0.0; ncols];
    for row in x.chunks_exact(ncols) {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= rows as f64);

    let mut gram = vec![0.0; ncols * ncols];
    let mut c = vec![0.0; ncols];
    let mut yy = 0.0;
    let mut centered = vec![0.0; ncols];
    for (row, yt) in x.chunks_exact(ncols).zip(y) {
        for p in 0..ncols {
            centered[p] = row[p] - means[p];
        }
        let yc = yt - ybar;
        yy += yc * yc;
        for p in 0..ncols {
            let a = centered[p];
            c[p] += a * yc;
            let g = &mut gram[p * ncols..];
            for q in p..ncols {
                g[q] += a * centered[q];
            }
        }
    }
    for p in 0..ncols {
        for q in 0..p {
            gram[p * ncols + q] = gram[q * ncols + p];
        }
        if !(gram[p * ncols + p] > 1e-12 * rows as f64) {
            return Err(LassoError::DegenerateDesign(p));
        }
    }

    let objective = |beta: &[f64], gb: &[f64]| -> f64 {
        let mut val = yy;
        for p in 0..ncols {
            val += beta[p] * (gb[p] - 2.0 * c[p]) + alpha * beta[p].abs();
        }
        val
    };

    let mut beta = vec![0.0; ncols];
    // gb = G β, kept current as coordinates change
    let mut gb = vec![0.0; ncols];
    let mut trace = TrainingTrace::default();
    trace.push(objective(&beta, &gb));
    let half = 0.5 * alpha;
    for sweep in 1..=max_sweeps {
        let mut max_change: f64 = 0.0;
        for p in 0..ncols {
            let gpp = gram[p * ncols + p];
            let rho = c[p] - gb[p] + gpp * beta[p];
            let new = soft_threshold(rho, half) / gpp;
            let delta = new - beta[p];
            if delta != 0.0 {
                beta[p] = new;
                let col = &gram[p * ncols..(p + 1) * ncols];
                for (g, gq) in gb.iter_mut().zip(col) {
                    *g += gq * delta;
                }
                max_change = max_change.max(delta.abs());
            }
        }
        trace.push(objective(&beta, &gb));
        trace.iterations = sweep;
        if max_change < tol {
            trace.converged = true;
            break;
        }
    }
    let intercept = ybar - beta.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    Ok(LassoFit { intercept, coef: beta, trace })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "LassoMprRaw", into = "LassoMprRaw")]
pub struct LassoMprModel {
    pub degree: usize,
    pub alpha: f64,
    pub standardizer: Standardizer,
    /// `[β0, β1..βP]` in [`PolyTermIndex`] order.
    pub coefficients: Vec<f64>,
    index: PolyTermIndex,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LassoMprRaw {
    degree: usize,
    alpha: f64,
    standardizer: Standardizer,
    coefficients: Vec<f64>,
}

impl From<LassoMprModel> for LassoMprRaw {
    fn from(m: LassoMprModel) -> Self {
        LassoMprRaw { degree: m.degree, alpha: m.alpha, standardizer: m.standardizer, coefficients: m.coefficients }
    }
}

impl TryFrom<LassoMprRaw> for LassoMprModel {
    type Error = LassoError;
    fn try_from(r: LassoMprRaw) -> Result<Self, Self::Error> {
        LassoMprModel::new(r.degree, r.alpha, r.standardizer, r.coefficients)
    }
}

impl PartialEq for LassoMprModel {
    fn eq(&self, other: &Self) -> bool {
        self.degree == other.degree
            && self.alpha == other.alpha
            && self.standardizer == other.standardizer
            && self.coefficients == other.coefficients
    }
}

impl LassoMprModel {
    pub fn new(
        degree: usize,
        alpha: f64,
        standardizer: Standardizer,
        coefficients: Vec<f64>,
    ) -> Result<Self, LassoError> {
        let index = PolyTermIndex::new(standardizer.dim(), degree)?;
        if coefficients.len() != index.len() + 1 {
            return Err(LassoError::DimensionMismatch { rows: index.len() + 1, targets: coefficients.len() });
        }
        if !(alpha >= 0.0) || coefficients.iter().any(|b| !b.is_finite()) {
            return Err(LassoError::InvalidAlpha(alpha));
        }
        Ok(LassoMprModel { degree, alpha, standardizer, coefficients, index })
    }

    pub fn input_dim(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn nonzero_terms(&self) -> usize {
        self.coefficients[1..].iter().filter(|b| **b != 0.0).count()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, LassoError> {
        let index = &self.index;
        let mut z = vec![0.0; self.input_dim()];
        self.standardizer.apply_row(x, &mut z)?;
        let phi = index.expand(&z)?;
        Ok(phi.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum())
    }

    /// Predictions for row-major `x`.
    pub fn predict_rows(&self, x: &[f64]) -> Result<Vec<f64>, LassoError> {
        x.chunks_exact(self.input_dim()).map(|r| self.predict(r)).collect()
    }
}

/// Standardized, expanded design (without the constant column).
fn design(index: &PolyTermIndex, standardizer: &Standardizer, x: &[f64]) -> Result<Vec<f64>, LassoError> {
    let n = standardizer.dim();
    let p = index.len();
    let mut out = Vec::with_capacity(x.len() / n * p);
    let mut z = vec![0.0; n];
    let mut phi = vec![0.0; p + 1];
    for row in x.chunks_exact(n) {
        standardizer.apply_row(row, &mut z)?;
        index.expand_into(&z, &mut phi)?;
        out.extend_from_slice(&phi[1..]);
    }
    Ok(out)
}

/// Fits on row-major `x` (`ncols` raw factors per row) and targets `y`.
pub fn train(
    x: &[f64],
    ncols: usize,
    y: &[f64],
    cfg: &LassoConfig,
) -> Result<(LassoMprModel, TrainingTrace), LassoError> {
    if ncols == 0 || x.len() != y.len() * ncols {
        return Err(LassoError::DimensionMismatch { rows: x.len() / ncols.max(1), targets: y.len() });
    }
    let standardizer = Standardizer::fit(x, ncols)?;
    let index = PolyTermIndex::new(ncols, cfg.degree)?;
    if y.len() < index.len() + 1 {
        log::warn!("{} training rows for {} polynomial terms", y.len(), index.len() + 1);
    }
    let phi = design(&index, &standardizer, x)?;
    let fit = solve_lasso(&phi, index.len(), y, cfg.alpha, cfg.tol, cfg.max_sweeps)?;
    let mut coefficients = Vec::with_capacity(fit.coef.len() + 1);
    coefficients.push(fit.intercept);
    coefficients.extend(fit.coef);
    let model = LassoMprModel { degree: cfg.degree, alpha: cfg.alpha, standardizer, coefficients, index };
    Ok((model, fit.trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub rmse: f64,
    pub nonzero: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: String,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn argmin(&self) -> &SweepRow {
        self.rows.iter().min_by(|a, b| a.rmse.total_cmp(&b.rmse)).expect("sweeps are never empty")
    }
}

/// `1e-3 ..= 1e2`, three points per decade, plus 0.5.
pub fn default_alpha_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=15).map(|k| 10f64.powf(-3.0 + k as f64 / 3.0)).collect();
    grid.push(0.5);
    grid.sort_by(f64::total_cmp);
    grid
}

/// Borrowed train/validation split of row-major data.
#[derive(Debug, Clone, Copy)]
pub struct SplitRows<'a> {
    pub ncols: usize,
    pub train_x: &'a [f64],
    pub train_y: &'a [f64],
    pub val_x: &'a [f64],
    pub val_y: &'a [f64],
}

fn evaluate(split: &SplitRows<'_>, cfg: &LassoConfig) -> Result<SweepRow, LassoError> {
    let (model, _) = train(split.train_x, split.ncols, split.train_y, cfg)?;
    let pred = model.predict_rows(split.val_x)?;
    let err = rmse(split.val_y, &pred)
        .map_err(|_| LassoError::DimensionMismatch { rows: pred.len(), targets: split.val_y.len() })?;
    Ok(SweepRow { value: 0.0, rmse: err, nonzero: model.nonzero_terms() })
}

pub fn sweep_alpha(split: &SplitRows<'_>, base: &LassoConfig, grid: &[f64]) -> Result<SweepTable, LassoError> {
    if grid.is_empty() {
        return Err(LassoError::EmptyGrid);
    }
    let rows = grid
        .iter()
        .map(|&alpha| {
            let row = evaluate(split, &LassoConfig { alpha, ..*base })?;
            Ok(SweepRow { value: alpha, ..row })
        })
        .collect::<Result<Vec<_>, LassoError>>()?;
    Ok(SweepTable { parameter: "alpha".into(), rows })
}

pub fn sweep_degree(split: &SplitRows<'_>, base: &LassoConfig, degrees: &[usize]) -> Result<SweepTable, LassoError> {
    if degrees.is_empty() {
        return Err(LassoError::EmptyGrid);
    }
    let rows = degrees
        .iter()
        .map(|&degree| {
            let row = evaluate(split, &LassoConfig { degree, ..*base })?;
            Ok(SweepRow { value: degree as f64, ..row })
        })
        .collect::<Result<Vec<_>, LassoError>>()?;
    Ok(SweepTable { parameter: "degree".into(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::oracle::ols_oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
        (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn unpenalized_matches_normal_equations() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (rows, n) = (40, 3);
            let x = gaussian_rows(&mut rng, rows, n);
            let y: Vec<f64> = x
                .chunks(n)
                .map(|r| {
                    2.0 + r[0] - 0.5 * r[1] * r[2] + 0.3 * r[0] * r[0] + 0.1 * rng.sample::<f64, _>(StandardNormal)
                })
                .collect();
            let cfg = LassoConfig { degree: 2, alpha: 0.0, ..LassoConfig::default() };
            let (model, _) = train(&x, n, &y, &cfg).unwrap();
            // oracle on the same standardized expansion, constant column included
            let index = PolyTermIndex::new(n, 2).unwrap();
            let full: Vec<f64> = x
                .chunks(n)
                .flat_map(|r| {
                    let mut z = vec![0.0; n];
                    model.standardizer.apply_row(r, &mut z).unwrap();
                    index.expand(&z).unwrap()
                })
                .collect();
            let ols = ols_oracle(&full, index.len() + 1, &y).unwrap();
            let scale = ols.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            for (a, b) in model.coefficients.iter().zip(&ols) {
                assert!((a - b).abs() <= 1e-6 * scale, "seed {seed}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn alpha_max_kills_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = gaussian_rows(&mut rng, 30, 4);
        let y: Vec<f64> = x.chunks(4).map(|r| 5.0 + 3.0 * r[1] - r[3]).collect();
        let amax = alpha_max(&x, 4, &y);
        let ybar = y.iter().sum::<f64>() / y.len() as f64;
        for alpha in [amax, 2.0 * amax, 4.0 * amax] {
            let fit = solve_lasso(&x, 4, &y, alpha, 1e-10, 1000).unwrap();
            assert!(fit.coef.iter().all(|b| *b == 0.0));
            assert!((fit.intercept - ybar).abs() < 1e-12);
        }
        let below = solve_lasso(&x, 4, &y, 0.9 * amax, 1e-10, 1000).unwrap();
        assert!(below.coef.iter().any(|b| *b != 0.0));
    }

    #[test]
    fn one_dimensional_closed_form() {
        // centered, unit-norm column
        let raw = [-3.0, -1.0, 0.5, 1.5, 2.0];
        let mean = raw.iter().sum::<f64>() / 5.0;
        let norm = raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt();
        let x: Vec<f64> = raw.iter().map(|v| (v - mean) / norm).collect();
        let y = [1.0, -0.4, 0.9, 2.2, 0.1];
        let ybar = y.iter().sum::<f64>() / 5.0;
        let rho: f64 = x.iter().zip(&y).map(|(a, b)| a * (b - ybar)).sum();
        for alpha in [0.0, 0.5, 1.0, 2.0 * rho.abs(), 5.0] {
            let fit = solve_lasso(&x, 1, &y, alpha, 1e-14, 100).unwrap();
            let expected = rho.signum() * (rho.abs() - alpha / 2.0).max(0.0);
            assert!((fit.coef[0] - expected).abs() < 1e-9, "alpha {alpha}");
        }
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = gaussian_rows(&mut rng, 25, 3);
        let y: Vec<f64> = x.chunks(3).map(|r| r[0] * r[1] * r[2] + r[2]).collect();
        for alpha in [0.0, 0.1, 1.0, 10.0] {
            let (_, trace) = train(&x, 3, &y, &LassoConfig { degree: 3, alpha, ..LassoConfig::default() }).unwrap();
            for w in trace.losses.windows(2) {
                assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
            }
        }
    }

    #[test]
    fn support_shrinks_along_default_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = gaussian_rows(&mut rng, 200, 4);
        let y: Vec<f64> = x
            .chunks(4)
            .map(|r| 3.0 * r[0] - 2.0 * r[1] + 0.8 * r[2] * r[3] + 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut last = usize::MAX;
        for alpha in default_alpha_grid().into_iter().chain([300.0, 1000.0, 3000.0]) {
            let (m, _) = train(&x, 4, &y, &LassoConfig { degree: 2, alpha, ..LassoConfig::default() }).unwrap();
            assert!(m.nonzero_terms() <= last, "alpha {alpha}");
            last = m.nonzero_terms();
        }
    }

    #[test]
    fn exact_cubic_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = |r: &[f64]| 1.0 + r[0] - 2.0 * r[1] * r[1] + 0.5 * r[0] * r[1] * r[2] - r[2].powi(3);
        let x = gaussian_rows(&mut rng, 120, 3);
        let y: Vec<f64> = x.chunks(3).map(g).collect();
        let cfg = LassoConfig { degree: 3, alpha: 0.0, tol: 1e-12, ..LassoConfig::default() };
        let (model, _) = train(&x, 3, &y, &cfg).unwrap();
        let held = gaussian_rows(&mut rng, 50, 3);
        for r in held.chunks(3) {
            assert!((model.predict(r).unwrap() - g(r)).abs() < 1e-6);
        }
        assert!(matches!(model.predict(&[1.0]), Err(LassoError::Feature(FeatureError::DimensionMismatch { .. }))));
    }

    #[test]
    fn constant_model_and_round_trip() {
        let st = Standardizer { means: vec![0.0, 1.0], sds: vec![1.0, 2.0] };
        let mut coefficients = vec![0.0; 6];
        coefficients[0] = 7.25;
        let m = LassoMprModel::new(2, 0.5, st, coefficients).unwrap();
        assert_eq!(m.predict(&[3.0, -4.0]).unwrap(), 7.25);
        let json = serde_json::to_string(&m).unwrap();
        let back: LassoMprModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    #[test]
    fn default_grid_contains_half() {
        let g = default_alpha_grid();
        assert!(g.contains(&0.5));
        assert!((g[0] - 1e-3).abs() < 1e-15 && (g[g.len() - 1] - 1e2).abs() < 1e-10);
    }
}
