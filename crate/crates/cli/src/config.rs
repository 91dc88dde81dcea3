//! Experiment configuration, read from a single TOML or JSON file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uniform_ext::covering::WhitneyParams;
use uniform_ext::domain::DomainSpec;
use uniform_ext::fields::FieldSpec;
use uniform_ext::norms::{NormParams, QuadratureSpec, Region};
use uniform_ext::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub domains: Vec<DomainSpec>,
    pub functions: Vec<FieldSpec>,
    pub params: Vec<NormParams>,
    /// `max_generation` is replaced by each entry of `depths`.
    #[serde(default)]
    pub whitney: WhitneyParams,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default = "default_regions")]
    pub regions: Vec<Region>,
    pub depths: Vec<i32>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Also evaluate the global norm of `Λ_k f` and its ratio to the norm on `Ω`.
    #[serde(default)]
    pub extension: bool,
    #[serde(default)]
    pub diagnostics: DiagnosticsOptions,
    #[serde(default)]
    pub figure: FigureOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsOptions {
    pub shadow_rho: f64,
    pub etas: Vec<f64>,
    pub s_exponents: Vec<f64>,
    pub pair_budget: usize,
    pub cube_budget: usize,
    /// Run the chain-based diagnostics (uniformity, `ρ_ε`, shadow sums).
    pub chains: bool,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self {
            shadow_rho: 1.5,
            etas: vec![0.25, 0.5, 1.0],
            s_exponents: vec![0.25, 0.5, 1.0],
            pair_budget: 2000,
            cube_budget: 200,
            chains: true,
        }
    }
}

/// Which cubes the chain and shadow figures show; ids index the
/// interior family in cube order, `None` picks a default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FigureOptions {
    pub chain: Option<(usize, usize)>,
    pub shadow: Option<usize>,
    /// Side of the square canvas in pixels.
    pub size: Option<f64>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_regions() -> Vec<Region> {
    vec![Region::Full]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Parses by extension: `.toml` as TOML, anything else as JSON.
    pub fn from_str_with(text: &str, toml_format: bool) -> Result<Self, Error> {
        let cfg: Self = if toml_format {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        Self::from_str_with(&text, is_toml)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.domains.is_empty() {
            return Err(Error::Config("`domains` is empty".into()));
        }
        if self.functions.is_empty() {
            return Err(Error::Config("`functions` is empty".into()));
        }
        if self.depths.is_empty() {
            return Err(Error::Config("`depths` is empty".into()));
        }
        for p in &self.params {
            p.validate()?;
        }
        for d in &self.depths {
            WhitneyParams {
                max_generation: *d,
                ..self.whitney
            }
            .validate()?;
        }
        self.quadrature.validate()?;
        for r in &self.regions {
            r.validate()?;
        }
        if !(self.diagnostics.shadow_rho > 1.0) {
            return Err(Error::Config("diagnostics.shadow_rho must exceed 1".into()));
        }
        Ok(())
    }

    pub fn whitney_at(&self, depth: i32) -> WhitneyParams {
        WhitneyParams {
            max_generation: depth,
            ..self.whitney
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        domains = [{ kind = "square" }]
        functions = [{ kind = "constant", value = 1.0 }]
        params = [{ k = 0, sigma = 0.5, p = 2, q = 2 }]
        depths = [3]
    "#;

    #[test]
    fn toml_and_json_agree() {
        let a = ExperimentConfig::from_str_with(MINIMAL, true).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        let b = ExperimentConfig::from_str_with(&json, false).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.regions, vec![Region::Full]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\nbogus = 1\n");
        assert!(matches!(ExperimentConfig::from_str_with(&text, true), Err(Error::Config(_))));
    }

    #[test]
    fn zero_q_names_the_field() {
        let text = MINIMAL.replace("q = 2", "q = 0");
        let err = ExperimentConfig::from_str_with(&text, true).unwrap_err();
        assert!(err.to_string().contains("NormParams.q"), "{err}");
    }
}
