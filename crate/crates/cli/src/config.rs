//! TOML run configuration.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<String>,
    pub theta_hat: Option<Vec<f64>>,
    /// `vector`, `cost` or `period`.
    pub qoi: Option<String>,
    pub output_dir: Option<String>,
    pub seed: Option<u64>,
    pub fd_step: Option<f64>,
    /// `central`, `forward` or `analytic`.
    pub fd_method: Option<String>,
    pub rank_tolerance: Option<f64>,
    pub near_ratio: Option<f64>,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub profile: ProfileConfig,
    #[serde(default)]
    pub approx: ApproxConfig,
    #[serde(default)]
    pub siwr: SiwrConfig,
    #[serde(default)]
    pub cellcycle: CellCycleConfig,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    /// Box `θ̂ ± relative·|θ̂|`.
    pub relative: Option<f64>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    /// `raw` or `centered-unit`.
    pub scaling: Option<String>,
    /// `uniform` or `gaussian`.
    pub density: Option<String>,
    pub mean: Option<Vec<f64>>,
    pub stdev: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub scheme: Option<String>,
    pub n: Option<usize>,
    /// Same as the top-level `seed`; giving both with different values is an error.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    /// `gap`, `fixed` or `threshold`.
    pub criterion: Option<String>,
    pub r: Option<usize>,
    pub gap_ratio: Option<f64>,
    pub threshold: Option<f64>,
    pub summary_rows: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub parameters: Option<Vec<String>>,
    pub points: Option<usize>,
    pub span: Option<f64>,
    pub log: Option<bool>,
    pub grid: Option<BTreeMap<String, Vec<f64>>>,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub dof: Option<usize>,
    pub restarts: Option<usize>,
    pub flatness_factor: Option<f64>,
    /// Clip the optimizer to the parameter box.
    pub bounded: Option<bool>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ApproxConfig {
    pub n: Option<usize>,
    pub scheme: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SiwrConfig {
    pub y0: Option<f64>,
    pub w0: Option<f64>,
    pub n_obs: Option<usize>,
    pub end_fraction: Option<f64>,
    pub observation_times: Option<Vec<f64>>,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CellCycleConfig {
    pub horizon: Option<f64>,
    pub horizon_factor: Option<f64>,
    pub samples_per_unit: Option<f64>,
    pub transient_fraction: Option<f64>,
    pub cv_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub defaults_file: Option<String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes).map_err(|_| CliError::Config("config is not UTF-8".into()))?;
        Ok((Self::parse(text)?, bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_and_full() {
        let c = RunConfig::parse("model = \"example1\"").unwrap();
        assert_eq!(c.model.as_deref(), Some("example1"));
        let c = RunConfig::parse(
            r#"
            model = "siwr"
            theta_hat = [0.256, 1.21, 37.8, 1.1212e-5]
            qoi = "vector"
            seed = 3
            [bounds]
            relative = 0.5
            [sampling]
            scheme = "lhs"
            n = 500
            [profile]
            parameters = ["beta_W"]
            alpha = 0.05
            [profile.grid]
            beta_W = [1.0, 1.2, 1.4]
            "#,
        )
        .unwrap();
        assert_eq!(c.sampling.n, Some(500));
        assert_eq!(c.profile.grid.unwrap()["beta_W"].len(), 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("modle = \"x\""), Err(CliError::Config(_))));
    }
}
