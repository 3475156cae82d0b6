use std::path::{Path, PathBuf};

use heatlab_core::fujita::Regime;
use heatlab_core::{MuMode, VertexId};
use serde::{Deserialize, Serialize};

use crate::RunError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    KernelValidate,
    CurvatureSearch,
    Blowup,
    FujitaDichotomy,
    Certificate,
    VolumeFit,
    Squeeze,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    Lattice,
    EdgeList,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    /// `a0` everywhere.
    Constant,
    /// `a0` on the ball of radius `bump_radius` around the center.
    Bump,
    /// `delta * p(gamma, center, .)`.
    Gaussian,
}

/// Initial data; `a0` doubles as the bump height.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub kind: InitialKind,
    #[serde(default = "default_a0")]
    pub a0: f64,
    #[serde(default)]
    pub bump_radius: u32,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_a0() -> f64 {
    0.5
}
fn default_delta() -> f64 {
    1e-3
}
fn default_gamma() -> f64 {
    4.0
}

/// One experiment. Every key is top level; `initial` entries are the only
/// small objects.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pipeline: Pipeline,

    pub graph: GraphKind,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub half_width: Option<i64>,
    #[serde(default)]
    pub edge_list: Option<PathBuf>,
    #[serde(default)]
    pub mu_mode: Option<MuMode>,
    #[serde(default)]
    pub center: Option<VertexId>,
    /// Truncation ball radius for solvers and kernel checks; defaults to the
    /// largest ball that fits.
    #[serde(default)]
    pub radius: Option<u32>,

    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub alphas: Option<Vec<f64>>,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    /// Per-alpha initial data for sweeps, aligned with `alphas`.
    #[serde(default)]
    pub initial_list: Option<Vec<InitialSpec>>,

    #[serde(default)]
    pub t_grid: Option<Vec<f64>>,
    /// `[start, end, ratio]`, used when `t_grid` is absent.
    #[serde(default)]
    pub t_geometric: Option<[f64; 3]>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_solver_rtol")]
    pub solver_rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,

    #[serde(default = "default_n")]
    pub n: f64,
    #[serde(default, rename = "K")]
    pub k: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,

    #[serde(default)]
    pub regime: Option<Regime>,
    #[serde(default = "default_r_min")]
    pub r_min: u32,
    #[serde(default = "default_r_max")]
    pub r_max: u32,
    #[serde(default)]
    pub fit_times: Option<Vec<f64>>,
    #[serde(default = "default_fit_distance")]
    pub fit_max_distance: u32,
    /// Squeeze radius; defaults to just above the validity radius.
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default)]
    pub mass_radii: Option<Vec<u32>>,

    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_rtol() -> f64 {
    1e-2
}
fn default_solver_rtol() -> f64 {
    1e-9
}
fn default_atol() -> f64 {
    1e-12
}
fn default_t0() -> f64 {
    1.0
}
fn default_horizon() -> f64 {
    100.0
}
fn default_n() -> f64 {
    2.0
}
fn default_trials() -> usize {
    32
}
fn default_r_min() -> u32 {
    8
}
fn default_r_max() -> u32 {
    64
}
fn default_fit_distance() -> u32 {
    8
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::ConfigParse(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        // edge lists are resolved relative to the config file
        if let (Some(el), Some(dir)) = (&cfg.edge_list, path.parent()) {
            if el.is_relative() {
                cfg.edge_list = Some(dir.join(el));
            }
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| RunError::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::ConfigParse(m));
        for (name, v) in [
            ("tol", self.tol),
            ("rtol", self.rtol),
            ("solver_rtol", self.solver_rtol),
            ("atol", self.atol),
            ("t0", self.t0),
            ("horizon", self.horizon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        match self.graph {
            GraphKind::Lattice => {
                if self.dim.is_none() || self.half_width.is_none() {
                    return bad("lattice graphs need dim and half_width".into());
                }
            }
            GraphKind::EdgeList => {
                if self.edge_list.is_none() {
                    return bad("edge-list graphs need edge_list".into());
                }
                if self.center.is_none() {
                    return bad("edge-list graphs need an explicit center".into());
                }
            }
        }
        let needs_alpha = matches!(
            self.pipeline,
            Pipeline::Blowup | Pipeline::Certificate | Pipeline::Squeeze
        );
        if needs_alpha && !self.alpha.is_some_and(|a| a > 0.0) {
            return bad(format!("pipeline {:?} needs a positive alpha", self.pipeline));
        }
        let needs_initial = matches!(
            self.pipeline,
            Pipeline::Blowup | Pipeline::Certificate | Pipeline::Squeeze
        );
        if needs_initial && self.initial.is_none() {
            return bad(format!("pipeline {:?} needs initial data", self.pipeline));
        }
        if self.pipeline == Pipeline::FujitaDichotomy {
            let alphas = self.alphas.as_deref().unwrap_or_default();
            if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0)) {
                return bad("fujita-dichotomy needs a nonempty list of positive alphas".into());
            }
            match (&self.initial_list, &self.initial) {
                (Some(list), _) if list.len() == alphas.len() => {}
                (Some(list), _) => {
                    return bad(format!("initial_list has {} entries for {} alphas", list.len(), alphas.len()))
                }
                (None, Some(_)) => {}
                (None, None) => return bad("fujita-dichotomy needs initial or initial_list".into()),
            }
        }
        if let Some(g) = &self.t_grid {
            if g.is_empty() || g[0] <= 0.0 || g.windows(2).any(|w| !(w[1] > w[0])) {
                return bad("t_grid must be positive and increasing".into());
            }
        }
        if let Some([start, end, ratio]) = self.t_geometric {
            if !(start > 0.0 && end >= start && ratio > 1.0) {
                return bad("t_geometric needs 0 < start <= end and ratio > 1".into());
            }
        }
        if matches!(self.pipeline, Pipeline::VolumeFit | Pipeline::Squeeze) && self.r_max <= self.r_min {
            return bad("r_max must exceed r_min".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses() {
        let cfg = ExperimentConfig::from_json(
            r#"{"pipeline": "volume-fit", "graph": "lattice", "dim": 1, "half_width": 70, "mu_mode": "counting"}"#,
        )
        .unwrap();
        assert_eq!(cfg.pipeline, Pipeline::VolumeFit);
        assert_eq!(cfg.tol, 1e-10);
    }

    #[test]
    fn unknown_pipeline_is_a_config_error() {
        let err = ExperimentConfig::from_json(r#"{"pipeline": "teleport", "graph": "lattice", "dim": 1, "half_width": 4}"#)
            .unwrap_err();
        assert!(matches!(err, RunError::ConfigParse(_)));
    }

    #[test]
    fn nonpositive_tolerance_is_rejected() {
        let err = ExperimentConfig::from_json(
            r#"{"pipeline": "volume-fit", "graph": "lattice", "dim": 1, "half_width": 70, "tol": 0}"#,
        )
        .unwrap_err();
        assert!(matches!(err, RunError::ConfigParse(_)));
    }

    #[test]
    fn sweeps_need_alphas() {
        let err = ExperimentConfig::from_json(
            r#"{"pipeline": "fujita-dichotomy", "graph": "lattice", "dim": 1, "half_width": 70, "alphas": [],
                "initial": {"kind": "constant"}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, RunError::ConfigParse(_)));
    }
}
