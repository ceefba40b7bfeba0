//! Run configuration, read from a TOML file.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use kgdecay_core::{
    CoefficientDecl, ContractionGrid, ContractionOptions, DecayGrid, Mass, ModelSpec,
    ThresholdOptions,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Threshold,
    Contraction,
    Epsilon,
    Decay,
}

impl Stage {
    pub const ALL: [Stage; 4] = [
        Stage::Threshold,
        Stage::Contraction,
        Stage::Epsilon,
        Stage::Decay,
    ];

    pub fn parse(name: &str) -> Result<Self, CliError> {
        match name {
            "threshold" => Ok(Self::Threshold),
            "contraction" => Ok(Self::Contraction),
            "epsilon" => Ok(Self::Epsilon),
            "decay" => Ok(Self::Decay),
            other => Err(CliError::Config(format!(
                "unknown stage '{other}' (expected threshold, contraction, epsilon or decay)"
            ))),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Threshold => "threshold",
            Self::Contraction => "contraction",
            Self::Epsilon => "epsilon",
            Self::Decay => "decay",
        })
    }
}

/// Perturbation size: a number, or `"half_max"` for half the certified
/// bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSetting {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    Value(f64),
    HalfMax,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub period: f64,
    pub m0: f64,
    pub b: CoefficientDecl,
    pub m1: Option<CoefficientDecl>,
    pub epsilon: Option<EpsilonSetting>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub stages: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    /// Use this N instead of running the threshold stage.
    pub threshold_n: Option<f64>,
    /// Decay horizon in periods.
    pub decay_periods: Option<f64>,
    /// Random samples for the Liouville and Gronwall spot checks.
    pub spot_checks: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub threshold_t: Option<usize>,
    pub threshold_xi: Option<usize>,
    pub threshold_window: Option<f64>,
    pub contraction_t: Option<usize>,
    pub contraction_xi: Option<usize>,
    pub decay_steps_per_period: Option<usize>,
    pub decay_inner_xi: Option<usize>,
    pub decay_outer_xi: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    pub integration: Option<f64>,
    pub contraction_margin: Option<f64>,
    pub k_max: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub grids: GridSection,
    #[serde(default)]
    pub tolerances: ToleranceSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub stages: Vec<String>,
}

/// A validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelSection,
    pub epsilon: Option<Epsilon>,
    pub stages: BTreeSet<Stage>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub base_dir: PathBuf,
    pub threshold_n: Option<f64>,
    pub decay_periods: f64,
    pub spot_checks: usize,
    pub threshold: ThresholdOptions,
    pub contraction: ContractionOptions,
    pub decay: DecayGrid,
}

pub const DEFAULT_OUTPUT_DIR: &str = "kgdecay-out";
pub const DEFAULT_DECAY_PERIODS: f64 = 40.0;
pub const DEFAULT_SPOT_CHECKS: usize = 8;

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Config(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> Result<usize, CliError> {
    if v >= min {
        Ok(v)
    } else {
        Err(CliError::Config(format!(
            "{name} must be at least {min}, got {v}"
        )))
    }
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base_dir, overrides)
    }

    pub fn parse(text: &str, base_dir: PathBuf, overrides: &Overrides) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Self::from_raw(raw, base_dir, overrides)
    }

    fn from_raw(
        raw: RawConfig,
        base_dir: PathBuf,
        overrides: &Overrides,
    ) -> Result<Self, CliError> {
        positive("model.period", raw.model.period)?;
        if !(raw.model.m0.is_finite() && raw.model.m0 >= 0.0) {
            return Err(CliError::Config(format!(
                "model.m0 must be >= 0, got {}",
                raw.model.m0
            )));
        }
        let epsilon = match (&raw.model.m1, &raw.model.epsilon) {
            (None, None) => None,
            (None, Some(_)) => {
                return Err(CliError::Config("model.epsilon needs model.m1".into()));
            }
            (Some(_), None) => Some(Epsilon::HalfMax),
            (Some(_), Some(EpsilonSetting::Value(v))) => {
                if !(v.is_finite() && *v >= 0.0) {
                    return Err(CliError::Config(format!(
                        "model.epsilon must be >= 0, got {v}"
                    )));
                }
                Some(Epsilon::Value(*v))
            }
            (Some(_), Some(EpsilonSetting::Keyword(k))) if k == "half_max" => {
                Some(Epsilon::HalfMax)
            }
            (Some(_), Some(EpsilonSetting::Keyword(k))) => {
                return Err(CliError::Config(format!(
                    "model.epsilon must be a number or \"half_max\", got \"{k}\""
                )));
            }
        };

        let names: Vec<String> = if !overrides.stages.is_empty() {
            overrides.stages.clone()
        } else if let Some(s) = &raw.run.stages {
            s.clone()
        } else {
            Stage::ALL.iter().map(Stage::to_string).collect()
        };
        let stages = names
            .iter()
            .map(|n| Stage::parse(n))
            .collect::<Result<BTreeSet<_>, _>>()?;
        if stages.is_empty() {
            return Err(CliError::Config("no stages requested".into()));
        }
        let threshold_n = raw
            .run
            .threshold_n
            .map(|n| positive("run.threshold_n", n))
            .transpose()?;
        check_dependencies(&stages, threshold_n.is_some())?;

        let mut threshold = ThresholdOptions::default();
        if let Some(v) = raw.grids.threshold_t {
            threshold.t_points = at_least("grids.threshold_t", v, 2)?;
        }
        if let Some(v) = raw.grids.threshold_xi {
            threshold.xi_points = at_least("grids.threshold_xi", v, 2)?;
        }
        if let Some(v) = raw.grids.threshold_window {
            if !(v.is_finite() && v > 1.0) {
                return Err(CliError::Config(format!(
                    "grids.threshold_window must exceed 1, got {v}"
                )));
            }
            threshold.window = v;
        }
        let mut contraction = ContractionOptions::default();
        let mut grid = ContractionGrid::default();
        if let Some(v) = raw.grids.contraction_t {
            grid.t_points = at_least("grids.contraction_t", v, 1)?;
        }
        if let Some(v) = raw.grids.contraction_xi {
            grid.xi_points = at_least("grids.contraction_xi", v, 2)?;
        }
        contraction.grid = grid;
        if let Some(v) = raw.tolerances.integration {
            contraction.tol = positive("tolerances.integration", v)?;
        }
        if let Some(v) = raw.tolerances.contraction_margin {
            contraction.margin = positive("tolerances.contraction_margin", v)?;
        }
        if let Some(v) = raw.tolerances.k_max {
            contraction.k_max = at_least("tolerances.k_max", v, 1)?;
        }
        let mut decay = DecayGrid::default();
        if let Some(v) = raw.grids.decay_steps_per_period {
            decay.steps_per_period = at_least("grids.decay_steps_per_period", v, 1)?;
        }
        if let Some(v) = raw.grids.decay_inner_xi {
            decay.inner_xi_points = at_least("grids.decay_inner_xi", v, 2)?;
        }
        if let Some(v) = raw.grids.decay_outer_xi {
            decay.outer_xi_points = at_least("grids.decay_outer_xi", v, 2)?;
        }

        Ok(Self {
            epsilon,
            stages,
            seed: overrides.seed.or(raw.run.seed).unwrap_or(0),
            output_dir: overrides
                .out
                .clone()
                .or(raw.run.output_dir)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
            base_dir,
            threshold_n,
            decay_periods: raw
                .run
                .decay_periods
                .map(|p| positive("run.decay_periods", p))
                .transpose()?
                .unwrap_or(DEFAULT_DECAY_PERIODS),
            spot_checks: raw.run.spot_checks.unwrap_or(DEFAULT_SPOT_CHECKS),
            threshold,
            contraction,
            decay,
            model: raw.model,
        })
    }

    pub fn has(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    /// The model with the configured mass; `half_max` builds the constant-mass
    /// model here, since ε is only known after the epsilon stage.
    pub fn build_model(&self) -> Result<ModelSpec, CliError> {
        let period = self.model.period;
        let b = self.model.b.build(period, Some(&self.base_dir))?;
        let mass = match (&self.model.m1, self.epsilon) {
            (Some(m1), Some(Epsilon::Value(epsilon))) => Mass::Perturbed {
                m0: self.model.m0,
                epsilon,
                m1: m1.build(period, Some(&self.base_dir))?,
            },
            _ => Mass::Constant { m0: self.model.m0 },
        };
        Ok(ModelSpec::new(b, mass)?)
    }

    /// The model with `m1` attached at the given ε.
    pub fn perturbed_model(&self, epsilon: f64) -> Result<Option<ModelSpec>, CliError> {
        let Some(m1) = &self.model.m1 else {
            return Ok(None);
        };
        let b = self
            .model
            .b
            .build(self.model.period, Some(&self.base_dir))?;
        let m1 = m1.build(self.model.period, Some(&self.base_dir))?;
        Ok(Some(ModelSpec::new(
            b,
            Mass::Perturbed {
                m0: self.model.m0,
                epsilon,
                m1,
            },
        )?))
    }
}

/// Decay needs contraction; epsilon needs contraction and threshold;
/// contraction needs an N from the threshold stage or `run.threshold_n`.
pub fn check_dependencies(stages: &BTreeSet<Stage>, has_n_override: bool) -> Result<(), CliError> {
    let need = |stage: Stage, dep: Stage| -> Result<(), CliError> {
        if stages.contains(&stage) && !stages.contains(&dep) {
            Err(CliError::Dependency(format!(
                "stage '{stage}' requires stage '{dep}'"
            )))
        } else {
            Ok(())
        }
    };
    need(Stage::Decay, Stage::Contraction)?;
    need(Stage::Epsilon, Stage::Contraction)?;
    need(Stage::Epsilon, Stage::Threshold)?;
    if stages.contains(&Stage::Contraction)
        && !stages.contains(&Stage::Threshold)
        && !has_n_override
    {
        return Err(CliError::Dependency(
            "stage 'contraction' requires stage 'threshold' or run.threshold_n".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
[model]
period = 1.0
m0 = 1.0
b = { kind = "constant", value = 1.0 }
"#;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        RunConfig::parse(text, PathBuf::new(), &Overrides::default())
    }

    #[test]
    fn defaults() {
        let c = parse(BASIC).unwrap();
        assert_eq!(c.stages.len(), 4);
        assert_eq!(c.seed, 0);
        assert_eq!(c.epsilon, None);
        assert_eq!(c.decay_periods, 40.0);
        assert_eq!(c.contraction.grid, ContractionGrid::default());
        assert!(c.build_model().unwrap().is_constant_mass());
    }

    #[test]
    fn sections_and_overrides() {
        let text = format!(
            "{BASIC}m1 = {{ kind = \"sin_offset\", offset = 0.0, amplitude = 1.0 }}\nepsilon = 0.01\n\
             [run]\nstages = [\"threshold\"]\nseed = 3\n[grids]\ncontraction_xi = 32\n"
        );
        let c = parse(&text).unwrap();
        assert_eq!(c.epsilon, Some(Epsilon::Value(0.01)));
        assert_eq!(c.seed, 3);
        assert_eq!(c.contraction.grid.xi_points, 32);
        assert_eq!(c.build_model().unwrap().epsilon(), 0.01);
        let o = Overrides {
            seed: Some(9),
            stages: vec!["threshold".into(), "contraction".into()],
            ..Default::default()
        };
        let c = RunConfig::parse(&text, PathBuf::new(), &o).unwrap();
        assert_eq!(c.seed, 9);
        assert!(c.has(Stage::Contraction));
    }

    #[test]
    fn dependency_errors() {
        let text = format!("{BASIC}[run]\nstages = [\"decay\"]\n");
        match parse(&text) {
            Err(CliError::Dependency(m)) => assert!(m.contains("contraction")),
            other => panic!("{other:?}"),
        }
        let text = format!("{BASIC}[run]\nstages = [\"contraction\", \"epsilon\"]\n");
        assert!(matches!(parse(&text), Err(CliError::Dependency(_))));
        let text =
            format!("{BASIC}[run]\nstages = [\"contraction\", \"decay\"]\nthreshold_n = 5.0\n");
        assert!(parse(&text).is_ok());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            parse("[model]\nperiod = 1.0\n"),
            Err(CliError::Config(_))
        ));
        let text = format!("{BASIC}colour = 3\n");
        assert!(matches!(parse(&text), Err(CliError::Config(_))));
        let text = format!("{BASIC}epsilon = 0.1\n");
        assert!(matches!(parse(&text), Err(CliError::Config(_))));
        let text = format!("{BASIC}[run]\nstages = [\"everything\"]\n");
        assert!(matches!(parse(&text), Err(CliError::Config(_))));
    }
}
