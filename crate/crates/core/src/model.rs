//! Trained-model artifacts and the shared prediction contract.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agrnn::{self, AgrnnError, WlrAgrnnConfig, WlrAgrnnModel};
use crate::baselines::{
    train_bpnn, train_grnn, train_moe, BaselineError, BpnnConfig, BpnnModel, ExpertGroups, GrnnConfig, GrnnModel,
    MoeConfig, MoeModel,
};
use crate::dataset::{DateRange, FeatureSet, LocationMode, SplitSpec};
use crate::features::term_count;
use crate::lasso::{self, LassoConfig, LassoError, LassoMprModel};
use crate::stats::{mae, rmse};
use crate::types::{EpochHour, FactorSet};

pub const SCHEMA_VERSION: u32 = 1;

/// Loss per iteration (index 0 is the state before the first update).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub losses: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl TrainingTrace {
    pub fn push(&mut self, loss: f64) {
        self.losses.push(loss);
    }

    pub fn last(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Lasso(#[from] LassoError),
    #[error(transparent)]
    Agrnn(#[from] AgrnnError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("no epochs fall in the training ranges")]
    EmptyTraining,
    #[error("no epochs fall in the test ranges")]
    EmptyTest,
    #[error("artifact does not match the data: {0}")]
    Incompatible(String),
    #[error("epoch {0} is not in the lookup table")]
    MissingEpoch(EpochHour),
    #[error("artifact schema version {0} is not supported (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
}

impl ModelError {
    /// Divergence during training rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            ModelError::Agrnn(AgrnnError::NonFiniteLoss(_))
                | ModelError::Baseline(BaselineError::NonFiniteLoss(_))
                | ModelError::Baseline(BaselineError::Kernel(AgrnnError::NonFiniteLoss(_)))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LassoMpr,
    WlrAgrnn,
    Grnn,
    Bpnn,
    Moe,
    /// Training-mean predictor.
    Mean,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] =
        [ModelKind::LassoMpr, ModelKind::WlrAgrnn, ModelKind::Grnn, ModelKind::Bpnn, ModelKind::Moe, ModelKind::Mean];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LassoMpr => "lasso_mpr",
            ModelKind::WlrAgrnn => "wlr_agrnn",
            ModelKind::Grnn => "grnn",
            ModelKind::Bpnn => "bpnn",
            ModelKind::Moe => "moe",
            ModelKind::Mean => "mean",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| ModelError::UnknownModel(s.to_string()))
    }
}

/// How a polynomial model sees a multi-location epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MprInputs {
    /// Per-factor mean over locations.
    #[default]
    LocationMean,
    /// Every location's factors as separate variables.
    Concatenate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LassoMprSettings {
    pub degree: usize,
    pub alpha: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    pub inputs: MprInputs,
}

impl Default for LassoMprSettings {
    fn default() -> Self {
        let base = LassoConfig::default();
        LassoMprSettings {
            degree: base.degree,
            alpha: base.alpha,
            tol: base.tol,
            max_sweeps: base.max_sweeps,
            inputs: MprInputs::default(),
        }
    }
}

impl LassoMprSettings {
    pub fn lasso(&self) -> LassoConfig {
        LassoConfig { degree: self.degree, alpha: self.alpha, tol: self.tol, max_sweeps: self.max_sweeps }
    }
}

/// Hyperparameters for every model; only the trained model's section ends
/// up in its artifact.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparameters {
    pub lasso_mpr: LassoMprSettings,
    pub wlr_agrnn: WlrAgrnnConfig,
    pub grnn: GrnnConfig,
    pub bpnn: BpnnConfig,
    pub moe: MoeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Payload {
    LassoMpr {
        config: LassoMprSettings,
        fit: LassoMprModel,
    },
    WlrAgrnn {
        config: WlrAgrnnConfig,
        fit: WlrAgrnnModel,
    },
    Grnn {
        config: GrnnConfig,
        fit: GrnnModel,
    },
    Bpnn {
        config: BpnnConfig,
        fit: BpnnModel,
    },
    Moe {
        config: MoeConfig,
        fit: MoeModel,
    },
    Mean {
        value: f64,
    },
    /// Fixed per-epoch values, e.g. a ground-truth oracle.
    Lookup {
        epochs: Vec<EpochHour>,
        values: Vec<f64>,
    },
}

impl Payload {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Payload::LassoMpr { .. } => "lasso_mpr",
            Payload::WlrAgrnn { .. } => "wlr_agrnn",
            Payload::Grnn { .. } => "grnn",
            Payload::Bpnn { .. } => "bpnn",
            Payload::Moe { .. } => "moe",
            Payload::Mean { .. } => "mean",
            Payload::Lookup { .. } => "lookup",
        }
    }
}

/// A trained model plus the axes it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact {
    pub schema_version: u32,
    pub factors: FactorSet,
    pub mode: LocationMode,
    pub labels: Vec<String>,
    pub train_ranges: Vec<DateRange>,
    pub train_epochs: usize,
    /// Model-specific parameters, tagged by `model`.
    pub payload: Payload,
}

/// Mean over locations of each factor in a `locations × factors` block.
fn location_mean(block: &[f64], n: usize) -> Vec<f64> {
    let l = block.len() / n;
    let mut out = vec![0.0; n];
    for loc in block.chunks_exact(n) {
        for (o, v) in out.iter_mut().zip(loc) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= l as f64);
    out
}

/// Row-major polynomial-model inputs for every epoch, and their width.
pub fn mpr_rows(features: &FeatureSet, inputs: MprInputs) -> (Vec<f64>, usize) {
    match inputs {
        MprInputs::Concatenate => (features.values.clone(), features.block_len()),
        MprInputs::LocationMean => {
            let n = features.n_factors();
            ((0..features.len()).flat_map(|t| location_mean(features.block(t), n)).collect(), n)
        }
    }
}

/// Default expert count: one per location when there are several
/// locations (capped at 10 contiguous groups), four otherwise.
fn moe_groups(l: usize, n: usize, cfg: &MoeConfig) -> ExpertGroups {
    let k = match cfg.experts {
        0 if l > 1 => l.min(10),
        0 => 4,
        k => k,
    };
    ExpertGroups::contiguous(l, n, k)
}

impl Artifact {
    pub fn kind_name(&self) -> &'static str {
        self.payload.kind_name()
    }

    /// Column label for comparison tables.
    pub fn setting_label(&self) -> String {
        format!("{}f/{}", self.factors.len(), self.mode.name())
    }

    /// Refuses data whose factor columns, location mode or location labels
    /// differ from the training data.
    pub fn check_compatible(&self, features: &FeatureSet) -> Result<(), ModelError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ModelError::Schema(self.schema_version));
        }
        if self.factors != features.factors {
            return Err(ModelError::Incompatible(format!(
                "factors {} in artifact, {} in data",
                self.factors, features.factors
            )));
        }
        if self.mode != features.mode {
            return Err(ModelError::Incompatible(format!(
                "location mode {} in artifact, {} in data",
                self.mode.name(),
                features.mode.name()
            )));
        }
        if self.labels != features.labels {
            return Err(ModelError::Incompatible(format!(
                "{} locations in artifact, {} in data (or different labels)",
                self.labels.len(),
                features.labels.len()
            )));
        }
        Ok(())
    }

    /// Prediction for one epoch from its raw `locations × factors` block.
    pub fn predict(&self, epoch: EpochHour, block: &[f64]) -> Result<f64, ModelError> {
        let expected = self.labels.len() * self.factors.len();
        if block.len() != expected {
            return Err(ModelError::Incompatible(format!("block has {} values, expected {expected}", block.len())));
        }
        Ok(match &self.payload {
            Payload::LassoMpr { config, fit } => match config.inputs {
                MprInputs::Concatenate => fit.predict(block)?,
                MprInputs::LocationMean => fit.predict(&location_mean(block, self.factors.len()))?,
            },
            Payload::WlrAgrnn { fit, .. } => {
                let k = fit.predict(block)?;
                if k.fallback {
                    log::warn!("{epoch}: every kernel weight underflowed; using the nearest bank column");
                }
                k.value
            }
            Payload::Grnn { fit, .. } => fit.predict(block)?.value,
            Payload::Bpnn { fit, .. } => fit.predict(block)?,
            Payload::Moe { fit, .. } => fit.predict(block)?,
            Payload::Mean { value } => *value,
            Payload::Lookup { epochs, values } => match epochs.binary_search(&epoch) {
                Ok(i) => values[i],
                Err(_) => return Err(ModelError::MissingEpoch(epoch)),
            },
        })
    }

    /// Predictions for the given rows of a compatible feature set.
    pub fn predict_rows(&self, features: &FeatureSet, rows: &[usize]) -> Result<Vec<f64>, ModelError> {
        self.check_compatible(features)?;
        rows.iter().map(|&t| self.predict(features.epochs[t], features.block(t))).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifacts serialize") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Artifact that replays known values per epoch.
pub fn lookup_artifact(features: &FeatureSet, epochs: &[EpochHour], values: &[f64]) -> Artifact {
    let mut pairs: Vec<(EpochHour, f64)> = epochs.iter().copied().zip(values.iter().copied()).collect();
    pairs.sort_by_key(|p| p.0);
    pairs.dedup_by_key(|p| p.0);
    Artifact {
        schema_version: SCHEMA_VERSION,
        factors: features.factors.clone(),
        mode: features.mode,
        labels: features.labels.clone(),
        train_ranges: Vec::new(),
        train_epochs: 0,
        payload: Payload::Lookup {
            epochs: pairs.iter().map(|p| p.0).collect(),
            values: pairs.iter().map(|p| p.1).collect(),
        },
    }
}

/// Trains `kind` on the rows of `features` inside the split's training
/// ranges.
pub fn train_model(
    kind: ModelKind,
    hp: &Hyperparameters,
    features: &FeatureSet,
    split: &SplitSpec,
) -> Result<(Artifact, TrainingTrace), ModelError> {
    let rows = split.train_rows(&features.epochs);
    if rows.is_empty() {
        return Err(ModelError::EmptyTraining);
    }
    let train = features.select(&rows);
    let (l, n) = (train.n_locations(), train.n_factors());
    let (payload, trace) = match kind {
        ModelKind::LassoMpr => {
            let config = hp.lasso_mpr;
            let (x, ncols) = mpr_rows(&train, config.inputs);
            let terms = term_count(ncols, config.degree);
            if terms > 20_000 {
                log::warn!("{ncols} inputs at degree {} give {terms} polynomial terms", config.degree);
            }
            let (fit, trace) = lasso::train(&x, ncols, &train.td, &config.lasso())?;
            (Payload::LassoMpr { config, fit }, trace)
        }
        ModelKind::WlrAgrnn => {
            let config = hp.wlr_agrnn;
            let (fit, trace) = agrnn::train(&train.values, l, n, &train.td, &train.heights, &config)?;
            (Payload::WlrAgrnn { config, fit }, trace)
        }
        ModelKind::Grnn => {
            let config = hp.grnn;
            let (fit, trace) = train_grnn(&train.values, l * n, &train.td, &config)?;
            (Payload::Grnn { config, fit }, trace)
        }
        ModelKind::Bpnn => {
            let config = hp.bpnn;
            let (fit, trace) = train_bpnn(&train.values, l * n, &train.td, &config)?;
            (Payload::Bpnn { config, fit }, trace)
        }
        ModelKind::Moe => {
            let config = hp.moe;
            let groups = moe_groups(l, n, &config);
            let (fit, trace) = train_moe(&train.values, l * n, &train.td, groups, &config)?;
            (Payload::Moe { config, fit }, trace)
        }
        ModelKind::Mean => {
            let value = train.td.iter().sum::<f64>() / train.len() as f64;
            let mse = train.td.iter().map(|y| (y - value).powi(2)).sum::<f64>() / train.len() as f64;
            let trace = TrainingTrace { losses: vec![mse], iterations: 0, converged: true };
            (Payload::Mean { value }, trace)
        }
    };
    let artifact = Artifact {
        schema_version: SCHEMA_VERSION,
        factors: features.factors.clone(),
        mode: features.mode,
        labels: features.labels.clone(),
        train_ranges: split.train.clone(),
        train_epochs: rows.len(),
        payload,
    };
    Ok((artifact, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldError {
    pub fold: usize,
    pub epochs: usize,
    pub rmse: f64,
    pub mae: f64,
}

/// Test-range errors of one artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub model: String,
    pub setting: String,
    pub epochs: usize,
    pub rmse: f64,
    pub mae: f64,
    pub folds: Vec<FoldError>,
}

/// Scores `artifact` on the test ranges only; training-range targets are
/// never read.
pub fn evaluate(artifact: &Artifact, features: &FeatureSet, split: &SplitSpec) -> Result<Evaluation, ModelError> {
    let rows = split.test_rows(&features.epochs);
    if rows.is_empty() {
        return Err(ModelError::EmptyTest);
    }
    let predicted = artifact.predict_rows(features, &rows)?;
    let actual: Vec<f64> = rows.iter().map(|&t| features.td[t]).collect();
    let epochs: Vec<EpochHour> = rows.iter().map(|&t| features.epochs[t]).collect();
    let fold_of = split.folds(&epochs);
    let n_folds = fold_of.iter().max().map_or(0, |m| m + 1);
    let mut folds = Vec::new();
    for fold in 0..n_folds {
        let idx: Vec<usize> = (0..rows.len()).filter(|&i| fold_of[i] == fold).collect();
        if idx.is_empty() {
            continue;
        }
        let a: Vec<f64> = idx.iter().map(|&i| actual[i]).collect();
        let p: Vec<f64> = idx.iter().map(|&i| predicted[i]).collect();
        folds.push(FoldError {
            fold,
            epochs: idx.len(),
            rmse: rmse(&a, &p).expect("equal lengths"),
            mae: mae(&a, &p).expect("equal lengths"),
        });
    }
    Ok(Evaluation {
        model: artifact.kind_name().to_string(),
        setting: artifact.setting_label(),
        epochs: rows.len(),
        rmse: rmse(&actual, &predicted).expect("equal lengths"),
        mae: mae(&actual, &predicted).expect("equal lengths"),
        folds,
    })
}
