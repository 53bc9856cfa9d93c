//! TOML run configuration.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{CemSettings, SpsaSettings};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rollout::TrainSettings;
use crate::solver::TrustRegionSettings;
use crate::strip::{StripModel, StripParams};
use crate::sysid::SysidSettings;
use crate::tasks::{self, TaskKind, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Receding-horizon continuation with proxy-adjoint gradients.
    Rhc,
    /// One controller over the whole horizon with proxy-adjoint gradients.
    AdjointOnly,
    Spsa,
    Cem,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Rhc, Method::AdjointOnly, Method::Spsa, Method::Cem];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rhc" | "adjoint_rhc" => Ok(Method::Rhc),
            "adjoint_only" | "adjoint" => Ok(Method::AdjointOnly),
            "spsa" => Ok(Method::Spsa),
            "cem" => Ok(Method::Cem),
            other => Err(Error::Config(format!("unknown method '{other}' (rhc, adjoint_only, spsa, cem)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Rhc => "rhc",
            Method::AdjointOnly => "adjoint_only",
            Method::Spsa => "spsa",
            Method::Cem => "cem",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub hidden: Vec<usize>,
    /// Per-component control bound; the task default when absent.
    pub u_max: Option<Vec<f64>>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            u_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub task: TaskKind,
    pub preset: usize,
    pub method: Method,
    pub execution: Execution,
    /// Replaces the preset when given.
    pub spec: Option<TaskSpec>,
    pub strip: StripParams,
    pub solver: TrustRegionSettings,
    pub train: TrainSettings,
    pub controller: ControllerConfig,
    pub spsa: SpsaSettings,
    pub cem: CemSettings,
    pub sysid: SysidConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            task: TaskKind::PointTarget,
            preset: 0,
            method: Method::Rhc,
            execution: Execution::Parallel,
            spec: None,
            strip: StripParams::default(),
            solver: TrustRegionSettings::default(),
            train: TrainSettings::default(),
            controller: ControllerConfig::default(),
            spsa: SpsaSettings::default(),
            cem: CemSettings::default(),
            sysid: SysidConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SysidConfig {
    /// Directory of snapshot CSV files; synthetic snapshots are generated
    /// when absent.
    pub snapshots: Option<String>,
    /// Gravito-bending length [m] of the synthetic snapshots.
    pub synthetic_length: f64,
    #[serde(flatten)]
    pub settings: SysidSettings,
}

impl Default for SysidConfig {
    fn default() -> Self {
        Self {
            snapshots: None,
            synthetic_length: 0.07,
            settings: SysidSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn model(&self) -> Result<StripModel> {
        StripModel::new(&self.strip)
    }

    pub fn task_spec(&self, model: &StripModel) -> Result<TaskSpec> {
        let spec = match &self.spec {
            Some(s) => s.clone(),
            None => tasks::preset(self.task, self.preset, model, &self.solver)?,
        };
        if spec.kind != self.task {
            return Err(Error::Config(format!("spec is for {:?} but task is {:?}", spec.kind, self.task)));
        }
        spec.validate(model)?;
        Ok(spec)
    }

    pub fn u_max(&self, model: &StripModel) -> Result<Vec<f64>> {
        let u = self.controller.u_max.clone().unwrap_or_else(|| self.task.default_u_max(model.length()));
        if u.len() != self.task.dynamics().control_dim() {
            return Err(Error::Config(format!(
                "u_max needs {} entries for {:?}",
                self.task.dynamics().control_dim(),
                self.task
            )));
        }
        Ok(u)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![1];
        sizes.extend(&self.controller.hidden);
        sizes.push(self.task.dynamics().control_dim());
        sizes
    }

    /// Training settings with the horizon the method implies.
    pub fn effective_train(&self) -> TrainSettings {
        let mut t = self.train.clone();
        if self.method == Method::AdjointOnly {
            t.horizon = t.total_steps;
        }
        t
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.controller.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if self.preset >= tasks::PRESET_COUNT && self.spec.is_none() {
            return Err(Error::Config(format!("preset must be below {}", tasks::PRESET_COUNT)));
        }
        Ok(())
    }
}
