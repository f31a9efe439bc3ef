//! The JSON run configuration shared by `flow` and `solve`.

use std::path::{Path, PathBuf};

use curvflow_core::flow::FlowConfig;
use curvflow_core::minkowski::{ProblemSpec, SolveOptions};
use curvflow_core::shape::InitialShape;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// One run: a flow (`flow`) or a stationary problem (`problem`, optional `solver`)
/// plus the starting shape and output settings. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolveOptions>,
    pub initial_shape: InitialShape,
    /// Relative paths are taken relative to the config file.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Write the evolving field every this many steps; 0 keeps only the first and last.
    #[serde(default)]
    pub snapshot_stride: usize,
    /// Seed of the randomized curvature-assumption audit run before a flow.
    #[serde(default)]
    pub random_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Flow,
    Solve,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads and validates a config; the returned output directory is resolved
    /// against the config's location.
    pub fn load(path: &Path, mode: Mode) -> CliResult<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = Self::parse(&text)?;
        cfg.validate(mode)?;
        let out = if cfg.output_dir.is_absolute() {
            cfg.output_dir.clone()
        } else {
            path.parent().unwrap_or(Path::new(".")).join(&cfg.output_dir)
        };
        Ok((cfg, out))
    }

    /// Schema checks that need more than the serde layout.
    pub fn validate(&self, mode: Mode) -> CliResult<()> {
        let n = match mode {
            Mode::Flow => {
                let f = self
                    .flow
                    .as_ref()
                    .ok_or_else(|| CliError::Config("`flow` section is required".into()))?;
                if self.problem.is_some() || self.solver.is_some() {
                    return Err(CliError::Config(
                        "`problem` and `solver` do not apply to a flow run".into(),
                    ));
                }
                f.validate()?;
                f.n
            }
            Mode::Solve => {
                let p = self
                    .problem
                    .as_ref()
                    .ok_or_else(|| CliError::Config("`problem` section is required".into()))?;
                if self.flow.is_some() {
                    return Err(CliError::Config("`flow` does not apply to a solve run".into()));
                }
                p.validate()?;
                self.solver.clone().unwrap_or_default().validate()?;
                p.n
            }
        };
        self.initial_shape.validate(n)?;
        Ok(())
    }

    /// The config with every default spelled out.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if c.problem.is_some() && c.solver.is_none() {
            c.solver = Some(SolveOptions::default());
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FLOW: &str = r#"{
        "flow": {"variant": "radial_normalized", "alpha": -1, "delta": 0,
                 "curvature": {"kind": "sigma_k_root", "k": 1, "argument": "principal_curvatures", "beta": 1},
                 "n": 2, "n_theta": 8, "n_phi": 16, "t_end": 1, "max_steps": 100},
        "initial_shape": {"kind": "sphere", "radius": 1}
    }"#;

    #[test]
    fn parses_and_validates() {
        let c = RunConfig::parse(FLOW).unwrap();
        c.validate(Mode::Flow).unwrap();
        assert!(c.validate(Mode::Solve).is_err());
        assert_eq!(c.output_dir, PathBuf::from("out"));
        let round: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(round, c);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = FLOW.replace("\"n\": 2", "\"n\": 2, \"bogus\": 1");
        assert!(matches!(RunConfig::parse(&bad), Err(CliError::Config(_))));
        let bad = FLOW.replace("\"initial_shape\"", "\"extra\": 0, \"initial_shape\"");
        assert!(RunConfig::parse(&bad).is_err());
    }
}
