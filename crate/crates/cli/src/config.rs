//! TOML run configuration. Every section is optional; unknown keys are
//! rejected.

use std::fs;
use std::path::{Path, PathBuf};

use eloran_td::agrnn::WlrAgrnnConfig;
use eloran_td::baselines::{BpnnConfig, GrnnConfig, MoeConfig};
use eloran_td::dataset::{FeatureSpec, SplitSpec};
use eloran_td::lasso::default_alpha_grid;
use eloran_td::model::{Hyperparameters, LassoMprSettings};
use eloran_td::synth::ScenarioConfig;
use eloran_td::types::{EpochHour, FactorSet};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides the scenario seed and every model seed.
    pub seed: Option<u64>,
    /// Corpus directory read by every command except `synth`.
    pub corpus: Option<PathBuf>,
    /// Output directory (`out` when unset).
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub features: FeatureSpec,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub models: ModelsSection,
    #[serde(default)]
    pub correlate: CorrelateSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub gridmap: GridmapSection,
}

/// Per-model hyperparameters; absent sections take defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsSection {
    pub lasso_mpr: Option<LassoMprSettings>,
    pub wlr_agrnn: Option<WlrAgrnnConfig>,
    pub grnn: Option<GrnnConfig>,
    pub bpnn: Option<BpnnConfig>,
    pub moe: Option<MoeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelateSection {
    pub r_min: f64,
    pub p_max: f64,
    /// Station whose weather is correlated with TD; the receiver station
    /// when unset.
    pub station: Option<String>,
}

impl Default for CorrelateSection {
    fn default() -> Self {
        CorrelateSection { r_min: 0.5, p_max: 0.05, station: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub alphas: Vec<f64>,
    pub degrees: Vec<usize>,
    /// Also write an SVG line chart.
    pub svg: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { alphas: default_alpha_grid(), degrees: (1..=5).collect(), svg: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridmapSection {
    /// Epoch to map; the first aligned epoch when unset.
    pub epoch: Option<EpochHour>,
    /// Factors to map; the feature factors when unset.
    pub factors: Option<FactorSet>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, or returns the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                RunConfig::parse(&text).map_err(|e| match e {
                    CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                    e => e,
                })
            }
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        self.split.validate().map_err(|e| CliError::Config(format!("[split] {e}")))?;
        let c = &self.correlate;
        if !(0.0..=1.0).contains(&c.r_min) || !(0.0..=1.0).contains(&c.p_max) {
            return Err(CliError::Config("[correlate] r_min and p_max must lie in [0, 1]".into()));
        }
        if self.features.factors.is_empty() {
            return Err(CliError::Config("[features] factors is empty".into()));
        }
        Ok(())
    }

    /// Applies command-line overrides.
    pub fn with_overrides(mut self, seed: Option<u64>, out: Option<PathBuf>, corpus: Option<PathBuf>) -> Self {
        if seed.is_some() {
            self.seed = seed;
        }
        if out.is_some() {
            self.out = out;
        }
        if corpus.is_some() {
            self.corpus = corpus;
        }
        self
    }

    pub fn scenario(&self) -> ScenarioConfig {
        let mut s = self.scenario.clone();
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        s
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        let m = &self.models;
        let mut hp = Hyperparameters {
            lasso_mpr: m.lasso_mpr.unwrap_or_default(),
            wlr_agrnn: m.wlr_agrnn.unwrap_or_default(),
            grnn: m.grnn.unwrap_or_default(),
            bpnn: m.bpnn.unwrap_or_default(),
            moe: m.moe.unwrap_or_default(),
        };
        if let Some(seed) = self.seed {
            hp.wlr_agrnn.seed = seed;
            hp.bpnn.seed = seed;
            hp.moe.seed = seed;
        }
        hp
    }

    /// The corpus directory, which must exist.
    pub fn corpus_dir(&self) -> Result<&Path, CliError> {
        let dir = self.corpus.as_deref().ok_or_else(|| CliError::Config("`corpus` is not set".into()))?;
        if !dir.is_dir() {
            return Err(CliError::Config(format!("`corpus`: {} is not a directory", dir.display())));
        }
        Ok(dir)
    }

    /// The output directory, created if needed.
    pub fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&dir)
            .map_err(|e| CliError::Config(format!("`out`: cannot create {}: {e}", dir.display())))?;
        Ok(dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use eloran_td::dataset::LocationMode;
    use eloran_td::synth::Recipe;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_and_presets_parse() {
        let cfg = RunConfig::parse(
            r#"
            seed = 7
            corpus = "data"
            [scenario]
            recipe = "cubic"
            duration_hours = 240
            [features]
            factors = 3
            mode = "receiver_only"
            [models.lasso_mpr]
            alpha = 0.25
            [models.wlr_agrnn.adam]
            learning_rate = 0.01
            [split]
            fold_days = 3
            "#,
        )
        .unwrap();
        assert_eq!(cfg.scenario().seed, 7);
        assert_eq!(cfg.scenario.recipe, Recipe::cubic());
        assert_eq!(cfg.features.factors, FactorSet::three());
        assert_eq!(cfg.features.mode, LocationMode::ReceiverOnly);
        let hp = cfg.hyperparameters();
        assert_eq!((hp.lasso_mpr.alpha, hp.lasso_mpr.degree), (0.25, 3));
        assert_eq!(hp.wlr_agrnn.adam.learning_rate, 0.01);
        assert_eq!((hp.bpnn.seed, hp.moe.seed, hp.wlr_agrnn.seed), (7, 7, 7));
        assert_eq!(cfg.split.fold_days, 3);
    }

    #[test]
    fn unknown_keys_are_named() {
        for (doc, key) in [
            ("sed = 1", "sed"),
            ("[features]\nfactor = 3", "factor"),
            ("[models.grnn]\nsigmaa = 1.0", "sigmaa"),
            ("[models.lasso]\nalpha = 1.0", "lasso"),
        ] {
            match RunConfig::parse(doc) {
                Err(CliError::Config(m)) => assert!(m.contains(key), "{m}"),
                other => panic!("{doc}: {other:?}"),
            }
        }
    }

    #[test]
    fn overlapping_split_is_a_config_error() {
        let doc = r#"
            [split]
            train = [{ start = "2024-10-01", end = "2024-12-05" }]
            test = [{ start = "2024-12-01", end = "2025-01-14" }]
        "#;
        assert!(matches!(RunConfig::parse(doc), Err(CliError::Config(_))));
    }
}
