//! WLR–AGRNN: one linear expert shared by every location, terrain weighting
//! of the expert outputs, and anisotropic Gaussian kernel regression over
//! the weighted outputs.
//!
//! Training minimizes the weighted residual sum of squares of leave-one-out
//! kernel predictions with full-batch Adam. Bandwidths are re-selected every
//! iteration and treated as constants when differentiating.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adam::{Adam, AdamConfig};
use crate::features::{FeatureError, Standardizer};
use crate::model::TrainingTrace;

/// Kernel terms whose stabilized exponent exceeds this are dropped during
/// training; `exp(-36)` is below one ulp of the dominant term.
const EXP_CUTOFF: f64 = 36.0;

/// `exp(-e)` for `e` in `[0, EXP_CUTOFF]`, zero beyond. Branch-free so the
/// leave-one-out loops vectorize; agrees with `f64::exp` to a few ulp.
#[inline(always)]
fn kernel_weight(e: f64) -> f64 {
    // adding 1.5·2^52 rounds to an integer held in the low mantissa bits
    const SHIFT: f64 = 6_755_399_441_055_744.0;
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let x = -e.min(EXP_CUTOFF + 1.0);
    let shifted = x * std::f64::consts::LOG2_E + SHIFT;
    let n = shifted - SHIFT;
    let r = (x - n * LN2_HI) - n * LN2_LO;
    // Taylor series of exp(r) for |r| <= ln(2)/2, Horner form
    let mut p = 1.0 / 6_227_020_800.0;
    for k in (0..=12).rev() {
        p = p * r + 1.0 / FACTORIALS[k];
    }
    let scale = f64::from_bits(shifted.to_bits().wrapping_add(1023) << 52);
    if e > EXP_CUTOFF {
        0.0
    } else {
        p * scale
    }
}

const FACTORIALS: [f64; 13] =
    [1.0, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0, 5040.0, 40320.0, 362880.0, 3628800.0, 39916800.0, 479001600.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgrnnError {
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("kernel bank is empty")]
    EmptyBank,
    #[error("need at least 2 training epochs, got {0}")]
    TooFewEpochs(usize),
    #[error("loss became non-finite at iteration {0}")]
    NonFiniteLoss(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Maps raw terrain heights (m) to expert-output weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ElevationTransform {
    /// `max(h, floor_m)` divided by the profile mean of the floored heights.
    FlooredNormalized { floor_m: f64 },
    /// Heights in meters, unmodified.
    Raw,
}

impl Default for ElevationTransform {
    fn default() -> Self {
        ElevationTransform::FlooredNormalized { floor_m: 1.0 }
    }
}

impl ElevationTransform {
    pub fn apply(&self, heights: &[f64]) -> Vec<f64> {
        match *self {
            ElevationTransform::Raw => heights.to_vec(),
            ElevationTransform::FlooredNormalized { floor_m } => {
                let floored: Vec<f64> = heights.iter().map(|h| h.max(floor_m)).collect();
                let scale = floored.iter().sum::<f64>() / floored.len() as f64;
                floored.iter().map(|h| h / scale).collect()
            }
        }
    }
}

/// Elementwise product of expert outputs and transformed heights.
pub fn elevation_weight(xhat: &[f64], htilde: &[f64]) -> Result<Vec<f64>, AgrnnError> {
    if xhat.len() != htilde.len() {
        return Err(AgrnnError::DimensionMismatch { expected: htilde.len(), got: xhat.len() });
    }
    Ok(xhat.iter().zip(htilde).map(|(x, h)| x * h).collect())
}

/// Two stacked affine layers, `W2 (W1 x + b1) + b2`, with no activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WlrParams {
    pub inputs: usize,
    pub hidden: usize,
    /// `hidden × inputs`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl WlrParams {
    /// Weights uniform in ±1/√fan_in, biases zero.
    pub fn init(inputs: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let a1 = 1.0 / (inputs as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        let w1 = (0..inputs * hidden).map(|_| rng.random_range(-a1..a1)).collect();
        let w2 = (0..hidden).map(|_| rng.random_range(-a2..a2)).collect();
        WlrParams { inputs, hidden, w1, b1: vec![0.0; hidden], w2, b2: 0.0 }
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64, AgrnnError> {
        if x.len() != self.inputs {
            return Err(AgrnnError::DimensionMismatch { expected: self.inputs, got: x.len() });
        }
        Ok(self.forward_unchecked(x))
    }

    fn forward_unchecked(&self, x: &[f64]) -> f64 {
        let mut out = self.b2;
        for a in 0..self.hidden {
            let row = &self.w1[a * self.inputs..(a + 1) * self.inputs];
            let h: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[a];
            out += self.w2[a] * h;
        }
        out
    }

    fn len(&self) -> usize {
        self.hidden * self.inputs + 2 * self.hidden + 1
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }

    fn set_flat(&mut self, v: &[f64]) {
        let (n1, h) = (self.w1.len(), self.hidden);
        self.w1.copy_from_slice(&v[..n1]);
        self.b1.copy_from_slice(&v[n1..n1 + h]);
        self.w2.copy_from_slice(&v[n1 + h..n1 + 2 * h]);
        self.b2 = v[n1 + 2 * h];
    }

    /// Chain rule from per-sample output gradients to the flat parameter
    /// gradient. `inputs` is row-major with `self.inputs` columns.
    fn backward(&self, inputs: &[f64], dout: &[f64]) -> Vec<f64> {
        let n = self.inputs;
        let mut s = 0.0;
        let mut sx = vec![0.0; n];
        for (x, d) in inputs.chunks_exact(n).zip(dout) {
            s += d;
            for (acc, v) in sx.iter_mut().zip(x) {
                *acc += d * v;
            }
        }
        let mut g = vec![0.0; self.len()];
        let (n1, h) = (self.w1.len(), self.hidden);
        for a in 0..h {
            let row = &self.w1[a * n..(a + 1) * n];
            for i in 0..n {
                g[a * n + i] = self.w2[a] * sx[i];
            }
            g[n1 + a] = self.w2[a] * s;
            g[n1 + h + a] = row.iter().zip(&sx).map(|(w, v)| w * v).sum::<f64>() + self.b1[a] * s;
        }
        g[n1 + 2 * h] = s;
        g
    }
}

/// Kernel-regression output; `fallback` marks the nearest-column answer
/// returned when every kernel weight vanished.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    pub fallback: bool,
}

/// Anisotropic Gaussian kernel regression of `query` against the bank
/// (`T` columns of `query.len()` values, stored column after column).
pub fn agrnn_predict(query: &[f64], bank: &[f64], y: &[f64], sigma: &[f64]) -> Result<KernelValue, AgrnnError> {
    let l = query.len();
    if y.is_empty() {
        return Err(AgrnnError::EmptyBank);
    }
    if sigma.len() != l {
        return Err(AgrnnError::DimensionMismatch { expected: l, got: sigma.len() });
    }
    if bank.len() != y.len() * l {
        return Err(AgrnnError::DimensionMismatch { expected: y.len() * l, got: bank.len() });
    }
    let inv: Vec<f64> = sigma.iter().map(|s| 1.0 / (2.0 * s * s)).collect();
    let exponents: Vec<f64> = bank
        .chunks_exact(l.max(1))
        .map(|col| col.iter().zip(query).zip(&inv).map(|((b, q), k)| (q - b) * (q - b) * k).sum::<f64>())
        .collect();
    let mut out = kernel_average(&exponents, y);
    if out.fallback {
        // every exponent overflowed; rank columns by log distance instead
        let log_dist = |col: &[f64]| {
            let terms: Vec<f64> =
                col.iter().zip(query).zip(sigma).map(|((b, q), s)| 2.0 * ((q - b).abs().ln() - s.ln())).collect();
            let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                m
            } else {
                m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
            }
        };
        let nearest = bank
            .chunks_exact(l.max(1))
            .map(log_dist)
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, d)| if d < acc.1 { (i, d) } else { acc })
            .0;
        out.value = y[nearest];
    }
    Ok(out)
}

/// `Σ y exp(-e) / Σ exp(-e)` with the smallest exponent subtracted first.
pub(crate) fn kernel_average(exponents: &[f64], y: &[f64]) -> KernelValue {
    let (nearest, min) =
        exponents.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &e)| if e < acc.1 { (i, e) } else { acc });
    if !min.is_finite() {
        return KernelValue { value: y[nearest], fallback: true };
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (e, yt) in exponents.iter().zip(y) {
        let k = (min - e).exp();
        num += k * yt;
        den += k;
    }
    if den > 0.0 && den.is_finite() {
        KernelValue { value: num / den, fallback: false }
    } else {
        KernelValue { value: y[nearest], fallback: true }
    }
}

/// Per-row standard deviation of the bank, floored for constant rows.
pub fn bank_spread(bank: &[f64], l: usize) -> Vec<f64> {
    let t = bank.len() / l;
    let mut mean = vec![0.0; l];
    for col in bank.chunks_exact(l) {
        for (m, v) in mean.iter_mut().zip(col) {
            *m += v / t as f64;
        }
    }
    let mut var = vec![0.0; l];
    for col in bank.chunks_exact(l) {
        for j in 0..l {
            var[j] += (col[j] - mean[j]).powi(2);
        }
    }
    var.iter()
        .zip(&mean)
        .map(|(v, m)| {
            let sd = (v / (t.max(2) - 1) as f64).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1e-6 * m.abs() + 1e-12
            }
        })
        .collect()
}

/// Pairwise spread-normalized squared distances between bank columns plus
/// each row's smallest off-diagonal entry.
struct Distances {
    t: usize,
    d: Vec<f64>,
    mins: Vec<f64>,
}

impl Distances {
    fn new(bank: &[f64], l: usize, spread: &[f64]) -> Self {
        let t = bank.len() / l;
        let inv: Vec<f64> = spread.iter().map(|s| 1.0 / (s * s)).collect();
        let mut d = vec![0.0; t * t];
        for a in 0..t {
            let ca = &bank[a * l..(a + 1) * l];
            d[a * t + a] = f64::INFINITY;
            for b in a + 1..t {
                let cb = &bank[b * l..(b + 1) * l];
                let mut acc = 0.0;
                for j in 0..l {
                    let diff = ca[j] - cb[j];
                    acc += diff * diff * inv[j];
                }
                d[a * t + b] = acc;
                d[b * t + a] = acc;
            }
        }
        let mins = d.chunks_exact(t).map(|row| row.iter().copied().fold(f64::INFINITY, f64::min)).collect();
        Distances { t, d, mins }
    }

    /// Leave-one-out prediction for column `row` at bandwidth scale `c`;
    /// `weights` receives the unnormalized kernel weights.
    fn loo_row(&self, row: usize, y: &[f64], inv2c2: f64, weights: &mut [f64]) -> (f64, f64) {
        let drow = &self.d[row * self.t..(row + 1) * self.t];
        let m = self.mins[row];
        for (k, &dv) in weights.iter_mut().zip(drow) {
            *k = kernel_weight((dv - m) * inv2c2);
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, ys) in weights.iter().zip(y) {
            num += k * ys;
            den += k;
        }
        (num / den, den)
    }

    fn loo_wrss(&self, y: &[f64], w: &[f64], c: f64) -> f64 {
        let inv2c2 = 1.0 / (2.0 * c * c);
        let mut buf = vec![0.0; self.t];
        let mut total = 0.0;
        for t in 0..self.t {
            let r = y[t] - self.loo_row(t, y, inv2c2, &mut buf).0;
            total += w[t] * r * r;
        }
        total
    }
}

/// Bandwidths `σ_j = c · sd_j` with `c` from golden-section search.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSelection {
    pub spread: Vec<f64>,
    pub scale: f64,
    pub sigma: Vec<f64>,
    pub objective: f64,
}

/// Golden-section minimization of `f` on `[lo, hi]`; returns the best point
/// evaluated and its value.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = if f2 < f1 { (x2, f2) } else { (x1, f1) };
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
            if f1 < best.1 {
                best = (x1, f1);
            }
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
            if f2 < best.1 {
                best = (x2, f2);
            }
        }
    }
    best
}

fn select_with(
    dist: &Distances,
    spread: Vec<f64>,
    y: &[f64],
    w: &[f64],
    bounds: (f64, f64),
    tol: f64,
) -> SigmaSelection {
    let (scale, objective) = golden_section(|c| dist.loo_wrss(y, w, c), bounds.0, bounds.1, tol);
    let sigma = spread.iter().map(|s| s * scale).collect();
    SigmaSelection { spread, scale, sigma, objective }
}

/// Chooses bandwidths for a bank of `y.len()` columns of `l` values by
/// minimizing the leave-one-out weighted residual sum of squares.
pub fn select_sigmas(
    bank: &[f64],
    l: usize,
    y: &[f64],
    w: &[f64],
    bounds: (f64, f64),
    tol: f64,
) -> Result<SigmaSelection, AgrnnError> {
    if y.len() < 2 {
        return Err(AgrnnError::TooFewEpochs(y.len()));
    }
    if bank.len() != y.len() * l || w.len() != y.len() {
        return Err(AgrnnError::DimensionMismatch { expected: y.len() * l, got: bank.len() });
    }
    let spread = bank_spread(bank, l);
    let dist = Distances::new(bank, l, &spread);
    Ok(select_with(&dist, spread, y, w, bounds, tol))
}

/// Leave-one-out WRSS, predictions, and (optionally) the gradient with
/// respect to every bank entry, bandwidths held fixed.
fn loo_loss_grad(
    dist: &Distances,
    bank: &[f64],
    l: usize,
    y: &[f64],
    w: &[f64],
    spread: &[f64],
    scale: f64,
    want_grad: bool,
) -> (f64, Vec<f64>, Vec<f64>) {
    let t = y.len();
    let inv2c2 = 1.0 / (2.0 * scale * scale);
    let mut yhat = vec![0.0; t];
    let mut loss = 0.0;
    let mut acc = if want_grad { vec![0.0; t * l] } else { Vec::new() };
    let mut p = vec![0.0; t];
    for row in 0..t {
        let (pred, den) = dist.loo_row(row, y, inv2c2, &mut p);
        yhat[row] = pred;
        let r = y[row] - yhat[row];
        loss += w[row] * r * r;
        if !want_grad {
            continue;
        }
        let g = -2.0 * w[row] * r / den;
        let ut = &bank[row * l..(row + 1) * l];
        for s in 0..t {
            if p[s] == 0.0 {
                continue;
            }
            let a = g * p[s] * (y[s] - yhat[row]);
            let us = &bank[s * l..(s + 1) * l];
            for j in 0..l {
                let diff = a * (ut[j] - us[j]);
                acc[row * l + j] += diff;
                acc[s * l + j] -= diff;
            }
        }
    }
    if want_grad {
        let inv_sigma2: Vec<f64> = spread.iter().map(|s| 1.0 / (s * scale).powi(2)).collect();
        for col in acc.chunks_exact_mut(l) {
            for (v, k) in col.iter_mut().zip(&inv_sigma2) {
                *v *= -k;
            }
        }
    }
    (loss, yhat, acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum WeightScheme {
    #[default]
    Uniform,
    /// `w_t = 1 / (epsilon + |r_t|)` from leave-one-out residuals,
    /// refreshed every `refresh` iterations.
    InverseResidual { epsilon: f64, refresh: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WlrAgrnnConfig {
    pub hidden: usize,
    pub adam: AdamConfig,
    pub max_iterations: usize,
    /// Relative WRSS change over 5 iterations that counts as converged.
    pub tolerance: f64,
    pub elevation_transform: ElevationTransform,
    pub weights: WeightScheme,
    pub seed: u64,
    pub sigma_scale_min: f64,
    pub sigma_scale_max: f64,
    pub sigma_search_tol: f64,
}

impl Default for WlrAgrnnConfig {
    fn default() -> Self {
        WlrAgrnnConfig {
            hidden: 8,
            adam: AdamConfig::default(),
            max_iterations: 2000,
            tolerance: 1e-6,
            elevation_transform: ElevationTransform::default(),
            weights: WeightScheme::Uniform,
            seed: 42,
            sigma_scale_min: 0.1,
            sigma_scale_max: 3.0,
            sigma_search_tol: 1e-3,
        }
    }
}

impl WlrAgrnnConfig {
    fn validate(&self) -> Result<(), AgrnnError> {
        let bad = |m: &str| Err(AgrnnError::InvalidConfig(m.into()));
        if self.hidden == 0 {
            return bad("hidden size must be at least 1");
        }
        if !(self.adam.learning_rate >= 0.0) {
            return bad("learning rate must be non-negative");
        }
        if !(0.0 < self.sigma_scale_min && self.sigma_scale_min < self.sigma_scale_max) {
            return bad("sigma scale bounds must satisfy 0 < min < max");
        }
        if let WeightScheme::InverseResidual { epsilon, refresh } = self.weights {
            if !(epsilon > 0.0) || refresh == 0 {
                return bad("inverse-residual weights need epsilon > 0 and refresh >= 1");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WlrAgrnnModel {
    pub params: WlrParams,
    /// Per-factor scaling pooled over locations.
    pub standardizer: Standardizer,
    pub elevation_transform: ElevationTransform,
    pub heights: Vec<f64>,
    pub htilde: Vec<f64>,
    pub sigma: Vec<f64>,
    pub sigma_scale: f64,
    /// Weighted expert outputs, one column of `n_locations` values per
    /// training epoch.
    pub bank: Vec<f64>,
    pub targets: Vec<f64>,
    pub wrss_weights: Vec<f64>,
    pub weight_scheme: WeightScheme,
    pub n_locations: usize,
    pub n_factors: usize,
}

impl WlrAgrnnModel {
    /// Weighted expert outputs for one epoch block (`n_locations × n_factors` raw values).
    pub fn weighted_outputs(&self, block: &[f64]) -> Result<Vec<f64>, AgrnnError> {
        let (l, n) = (self.n_locations, self.n_factors);
        if block.len() != l * n {
            return Err(AgrnnError::DimensionMismatch { expected: l * n, got: block.len() });
        }
        let mut z = vec![0.0; n];
        let mut out = Vec::with_capacity(l);
        for (x, h) in block.chunks_exact(n).zip(&self.htilde) {
            self.standardizer.apply_row(x, &mut z)?;
            out.push(h * self.params.forward_unchecked(&z));
        }
        Ok(out)
    }

    pub fn predict(&self, block: &[f64]) -> Result<KernelValue, AgrnnError> {
        let u = self.weighted_outputs(block)?;
        agrnn_predict(&u, &self.bank, &self.targets, &self.sigma)
    }
}

/// Standardized inputs and everything that stays fixed while training.
struct Problem {
    z: Vec<f64>,
    htilde: Vec<f64>,
    l: usize,
    n: usize,
}

impl Problem {
    fn bank(&self, params: &WlrParams) -> Vec<f64> {
        self.z
            .chunks_exact(self.n)
            .enumerate()
            .map(|(k, x)| self.htilde[k % self.l] * params.forward_unchecked(x))
            .collect()
    }

    /// Parameter gradient from the bank gradient.
    fn backprop(&self, params: &WlrParams, grad_u: &[f64]) -> Vec<f64> {
        let dout: Vec<f64> = grad_u.iter().enumerate().map(|(k, g)| g * self.htilde[k % self.l]).collect();
        params.backward(&self.z, &dout)
    }
}

/// Trains on `values` (`T × n_locations × n_factors`, raw units) against TD
/// targets `y`, with terrain heights `heights` (m) per location.
pub fn train(
    values: &[f64],
    n_locations: usize,
    n_factors: usize,
    y: &[f64],
    heights: &[f64],
    cfg: &WlrAgrnnConfig,
) -> Result<(WlrAgrnnModel, TrainingTrace), AgrnnError> {
    cfg.validate()?;
    let (l, n, t) = (n_locations, n_factors, y.len());
    if t < 2 {
        return Err(AgrnnError::TooFewEpochs(t));
    }
    if values.len() != t * l * n {
        return Err(AgrnnError::DimensionMismatch { expected: t * l * n, got: values.len() });
    }
    if heights.len() != l {
        return Err(AgrnnError::DimensionMismatch { expected: l, got: heights.len() });
    }
    let standardizer = Standardizer::fit(values, n)?;
    let problem = Problem { z: standardizer.apply(values)?, htilde: cfg.elevation_transform.apply(heights), l, n };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = WlrParams::init(n, cfg.hidden, &mut rng);
    let mut flat = params.to_flat();
    let mut adam = Adam::new(cfg.adam, flat.len());
    let mut weights = vec![1.0; t];
    let mut trace = TrainingTrace::default();
    let mut since_refresh = 0usize;
    let bounds = (cfg.sigma_scale_min, cfg.sigma_scale_max);

    let mut iteration = 0usize;
    let (bank, selection) = loop {
        let bank = problem.bank(&params);
        let spread = bank_spread(&bank, l);
        let dist = Distances::new(&bank, l, &spread);
        if let WeightScheme::InverseResidual { epsilon, refresh } = cfg.weights {
            if iteration > 0 && iteration.is_multiple_of(refresh) {
                let uniform = vec![1.0; t];
                let sel = select_with(&dist, spread.clone(), y, &uniform, bounds, cfg.sigma_search_tol);
                let (_, yhat, _) = loo_loss_grad(&dist, &bank, l, y, &uniform, &spread, sel.scale, false);
                weights = y.iter().zip(&yhat).map(|(a, b)| 1.0 / (epsilon + (a - b).abs())).collect();
                since_refresh = 0;
            }
        }
        let selection = select_with(&dist, spread, y, &weights, bounds, cfg.sigma_search_tol);
        let last = iteration == cfg.max_iterations;
        let (loss, _, grad_u) = loo_loss_grad(&dist, &bank, l, y, &weights, &selection.spread, selection.scale, !last);
        if !loss.is_finite() {
            return Err(AgrnnError::NonFiniteLoss(iteration));
        }
        trace.push(loss);
        trace.iterations = iteration;
        if since_refresh >= 5 {
            let before = trace.losses[trace.losses.len() - 6];
            if (before - loss).abs() < cfg.tolerance * before.abs() {
                trace.converged = true;
                break (bank, selection);
            }
        }
        if last {
            break (bank, selection);
        }
        let grad = problem.backprop(&params, &grad_u);
        adam.step(&mut flat, &grad);
        params.set_flat(&flat);
        iteration += 1;
        since_refresh += 1;
    };
    log::debug!(
        "wlr-agrnn: {} iterations, loss {:.6e}, sigma scale {:.4}",
        trace.iterations,
        trace.last().unwrap_or(f64::NAN),
        selection.scale
    );
    let model = WlrAgrnnModel {
        params,
        standardizer,
        elevation_transform: cfg.elevation_transform,
        heights: heights.to_vec(),
        htilde: problem.htilde,
        sigma: selection.sigma,
        sigma_scale: selection.scale,
        bank,
        targets: y.to_vec(),
        wrss_weights: weights,
        weight_scheme: cfg.weights,
        n_locations: l,
        n_factors: n,
    };
    Ok((model, trace))
}

/// Loss and analytic parameter gradient at fixed bandwidths; exposed for
/// gradient checking.
pub fn loss_and_gradient(
    params: &WlrParams,
    z: &[f64],
    n_locations: usize,
    htilde: &[f64],
    y: &[f64],
    w: &[f64],
    spread: &[f64],
    scale: f64,
) -> (f64, Vec<f64>) {
    let problem = Problem { z: z.to_vec(), htilde: htilde.to_vec(), l: n_locations, n: params.inputs };
    let bank = problem.bank(params);
    let dist = Distances::new(&bank, n_locations, spread);
    let (loss, _, grad_u) = loo_loss_grad(&dist, &bank, n_locations, y, w, spread, scale, true);
    (loss, problem.backprop(params, &grad_u))
}

/// Flat parameter order used by [`loss_and_gradient`]: W1, b1, W2, b2.
pub fn params_to_flat(p: &WlrParams) -> Vec<f64> {
    p.to_flat()
}

pub fn params_from_flat(template: &WlrParams, v: &[f64]) -> WlrParams {
    let mut p = template.clone();
    p.set_flat(v);
    p
}
