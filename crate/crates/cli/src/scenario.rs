//! Scenario files: economy, groups, features and run settings in TOML or
//! JSON.

use std::path::Path;

use qualdyn::analysis::ScanConfig;
use qualdyn::dynamics::{DynamicsConfig, Mode};
use qualdyn::{EconomyConfig, FeatureSpec, GroupSpec, Groups, Model, SolverConfig, Subsidy};
use serde::{Deserialize, Serialize};

use crate::Failure;

pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    pub economy: EconomyConfig,
    pub groups: Vec<GroupSpec>,
    pub features: FeatureSpec,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervention: Option<Intervention>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intervention {
    #[serde(default)]
    pub decouple: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsidy: Option<SubsidySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsidySpec {
    pub group: String,
    pub transform: Subsidy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn of(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

fn located(path: &str, message: impl std::fmt::Display) -> Failure {
    if path.is_empty() || path == "." {
        Failure::config(message.to_string())
    } else {
        Failure::config(format!("at `{path}`: {message}"))
    }
}

impl Scenario {
    pub fn parse(text: &str, format: Format) -> Result<Scenario, Failure> {
        let scenario: Scenario = match format {
            Format::Toml => {
                let de = toml::Deserializer::parse(text)
                    .map_err(|e| Failure::config(e.to_string().trim_end()))?;
                serde_path_to_error::deserialize(de)
                    .map_err(|e| located(&e.path().to_string(), e.inner().message().trim_end()))?
            }
            Format::Json => {
                let mut de = serde_json::Deserializer::from_str(text);
                serde_path_to_error::deserialize(&mut de)
                    .map_err(|e| located(&e.path().to_string(), e.inner()))?
            }
        };
        if scenario.version != VERSION {
            return Err(located(
                "version",
                format!(
                    "unsupported version {}, expected {VERSION}",
                    scenario.version
                ),
            ));
        }
        scenario.build()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Scenario, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
        Scenario::parse(&text, Format::of(path))
            .map_err(|f| Failure::config(format!("{}: {}", path.display(), f.message)))
    }

    pub fn to_text(&self, format: Format) -> Result<String, Failure> {
        match format {
            Format::Toml => {
                toml::to_string_pretty(self).map_err(|e| Failure::config(e.to_string()))
            }
            Format::Json => {
                serde_json::to_string_pretty(self).map_err(|e| Failure::config(e.to_string()))
            }
        }
    }

    fn subsidized_groups(&self) -> Result<Vec<GroupSpec>, Failure> {
        let mut groups = self.groups.clone();
        if let Some(sub) = self.intervention.as_ref().and_then(|i| i.subsidy.as_ref()) {
            let group = groups
                .iter_mut()
                .find(|g| g.id == sub.group)
                .ok_or_else(|| {
                    located(
                        "intervention.subsidy.group",
                        format!("unknown group `{}`", sub.group),
                    )
                })?;
            group.cost = group.cost.subsidize(sub.transform).map_err(Failure::from)?;
        }
        Ok(groups)
    }

    /// Model with the subsidy intervention, if any, applied.
    pub fn build(&self) -> Result<Model, Failure> {
        let groups = Groups::new(self.subsidized_groups()?).map_err(|e| located("groups", e))?;
        let features = self
            .features
            .resolve(&groups)
            .map_err(|e| located("features", e))?;
        Model::with_solver(self.economy, groups, features, self.solver).map_err(Failure::from)
    }

    /// Model without interventions.
    pub fn baseline(&self) -> Result<Model, Failure> {
        let groups = Groups::new(self.groups.clone()).map_err(|e| located("groups", e))?;
        let features = self
            .features
            .resolve(&groups)
            .map_err(|e| located("features", e))?;
        Model::with_solver(self.economy, groups, features, self.solver).map_err(Failure::from)
    }

    pub fn decoupled(&self) -> bool {
        self.intervention.as_ref().is_some_and(|i| i.decouple)
    }

    /// Dynamics settings with the seed and mode overrides applied.
    pub fn dynamics(&self, seed: Option<u64>, decoupled: bool) -> Result<DynamicsConfig, Failure> {
        let mut cfg = self.dynamics.clone();
        cfg.probe_seed = seed.unwrap_or(self.seed);
        if decoupled || self.decoupled() {
            cfg.mode = Mode::Decoupled;
        }
        cfg.validate().map_err(|e| located("dynamics", e))?;
        Ok(cfg)
    }
}
