//! TOML run configuration. One file describes a whole run; command-line
//! flags override individual fields, and secrets come from the environment
//! only.

use std::fs;
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::anchor::CoarseRules;
use crate::error::ModelError;
use crate::index::KmeansParams;
use crate::model::PlatformProfile;
use crate::synth::DriftConfig;

/// Default trade-off weight α: the share of the selection budget that the
/// stability targets claim in expectation.
pub const DEFAULT_ALPHA: (i64, i64) = (6, 25);

/// Everything a run needs besides secrets.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Stability weight α as a fraction, e.g. "6/25".
    pub alpha: String,
    pub platform: PlatformProfile,
    pub synth: DriftConfig,
    pub pipeline: PipelineConfig,
    pub curation: CoarseRules,
    pub report: ReportConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub coarse_filter: bool,
    pub blacklist: bool,
    pub re_audit: bool,
    pub max_positives: usize,
    pub kmeans_batch_size: usize,
    pub kmeans_iterations: usize,
    pub kmeans_initializations: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Iso-contour levels for the recall-plane plot.
    pub f1_levels: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            alpha: format!("{}/{}", DEFAULT_ALPHA.0, DEFAULT_ALPHA.1),
            platform: PlatformProfile::weibo_like(),
            synth: DriftConfig::default(),
            pipeline: PipelineConfig::default(),
            curation: CoarseRules::default(),
            report: ReportConfig::default(),
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let k = KmeansParams::default();
        PipelineConfig {
            coarse_filter: true,
            blacklist: true,
            re_audit: true,
            max_positives: crate::task::MAX_POSITIVES,
            kmeans_batch_size: k.batch_size,
            kmeans_iterations: k.iterations,
            kmeans_initializations: k.initializations,
        }
    }
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { f1_levels: vec![0.2, 0.4, 0.6, 0.8] }
    }
}

impl PipelineConfig {
    pub fn kmeans(&self) -> KmeansParams {
        KmeansParams {
            batch_size: self.kmeans_batch_size,
            iterations: self.kmeans_iterations,
            initializations: self.kmeans_initializations,
        }
    }
}

/// Parse a "p/q" fraction into an exact rational.
pub fn parse_alpha(s: &str) -> Result<Ratio<i64>, ModelError> {
    let err = || ModelError::InvalidProfile(format!("alpha must be a fraction p/q in (0, 1), got {s:?}"));
    let (p, q) = s.split_once('/').ok_or_else(err)?;
    let p: i64 = p.trim().parse().map_err(|_| err())?;
    let q: i64 = q.trim().parse().map_err(|_| err())?;
    if q <= 0 || p <= 0 || p >= q {
        return Err(err());
    }
    Ok(Ratio::new(p, q))
}

impl RunConfig {
    pub fn alpha_ratio(&self) -> Result<Ratio<i64>, ModelError> {
        parse_alpha(&self.alpha)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.platform.validate()?;
        self.alpha_ratio()?;
        self.synth
            .validate()
            .map_err(|e| ModelError::InvalidProfile(format!("synth: {e}")))?;
        if self.pipeline.kmeans_initializations == 0 || self.pipeline.kmeans_iterations == 0 {
            return Err(ModelError::InvalidProfile(
                "kmeans schedule needs at least one iteration and initialization".into(),
            ));
        }
        Ok(())
    }
}

/// Load and validate a TOML run configuration.
pub fn load_config(path: &Path) -> Result<RunConfig, ModelError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ModelError::InvalidProfile(format!("read {}: {e}", path.display())))?;
    let cfg: RunConfig = toml::from_str(&text)
        .map_err(|e| ModelError::InvalidProfile(format!("parse {}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}
