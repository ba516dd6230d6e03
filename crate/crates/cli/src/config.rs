//! Experiment configuration: one TOML file per experiment.

use std::path::{Path, PathBuf};

use caflow_core::catalog;
use caflow_core::flow::FlowParams;
use caflow_core::perturbation::ClassifyParams;
use caflow_core::trace_class::DEFAULT_BUDGET;
use caflow_core::{LocalRule, MeasureModel, MeasureSpec, VelocitySpec};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MeasureChoice {
    Preset(String),
    Spec(MeasureSpec),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Exact DP per cell, Monte Carlo (flagged) when over budget.
    #[default]
    ExactFirst,
    /// Exact DP only; a budget overrun is an error.
    ExactOnly,
    /// Monte Carlo for every cell.
    McOnly,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySection {
    pub points: Option<u64>,
    pub ball: Option<usize>,
    pub horizons: Option<Vec<usize>>,
    pub samples: Option<u64>,
    pub decay: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: Option<String>,
    /// Catalog name.
    pub rule: Option<String>,
    /// Rule table file, relative to the config file.
    pub rule_file: Option<PathBuf>,
    pub measure: Option<MeasureChoice>,
    /// `a,b`, `sqrt:c`, `pow:c:gamma`, `log:c` or `pointwise`; defaults to `r,r`.
    pub velocity: Option<String>,
    #[serde(default = "default_p")]
    pub p: Vec<usize>,
    #[serde(default = "default_n")]
    pub n: Vec<usize>,
    #[serde(default = "default_delta")]
    pub delta: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: u64,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub mode: Mode,
    pub budget: Option<u64>,
    pub mc_proposals: Option<u64>,
    pub mc_samples: Option<u64>,
    pub filter_samples: Option<u64>,
    /// `n` at which average exponents are measured for the entropy bound.
    pub exponent_n: Option<usize>,
    #[serde(default)]
    pub classify: ClassifySection,
}

fn default_p() -> Vec<usize> {
    vec![0, 1, 2, 3]
}

fn default_n() -> Vec<usize> {
    vec![1, 2, 3, 4]
}

fn default_delta() -> Vec<f64> {
    vec![0.1]
}

fn default_samples() -> u64 {
    16
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub budget: Option<u64>,
    pub out: Option<PathBuf>,
}

/// A validated configuration with its rule and measure built.
pub struct Experiment {
    pub id: String,
    pub rule: LocalRule,
    pub measure: MeasureModel,
    pub velocity: VelocitySpec,
    pub p: Vec<usize>,
    pub n: Vec<usize>,
    pub delta: Vec<f64>,
    pub params: FlowParams,
    pub out: PathBuf,
    pub exponent_n: usize,
    pub classify: ClassifyParams,
    pub mode: Mode,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(self, base_dir: &Path, ov: &Overrides) -> Result<Experiment, CliError> {
        let rule = match (&self.rule, &self.rule_file) {
            (Some(name), None) => catalog::rule(name)?,
            (None, Some(file)) => {
                let path = base_dir.join(file);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                LocalRule::parse(&text)?
            }
            _ => return Err(CliError::Config("set exactly one of `rule` or `rule_file`".into())),
        };
        let measure = match &self.measure {
            Some(MeasureChoice::Preset(name)) => catalog::measure(name, rule.k())?,
            Some(MeasureChoice::Spec(spec)) => spec.build()?,
            None => match &self.rule {
                Some(name) => {
                    let entry = catalog::entries().into_iter().find(|e| e.name == *name);
                    let preset = entry.map_or("uniform".to_string(), |e| e.measure);
                    catalog::measure(&preset, rule.k())?
                }
                None => MeasureModel::uniform(rule.k())?,
            },
        };
        if measure.k() != rule.k() {
            return Err(CliError::Config(format!(
                "measure alphabet {} does not match rule alphabet {}",
                measure.k(),
                rule.k()
            )));
        }
        let velocity = match &self.velocity {
            Some(text) => VelocitySpec::parse(text)?,
            None => VelocitySpec::linear_int(rule.radius() as i64, rule.radius() as i64)?,
        };
        if self.p.is_empty() || self.n.is_empty() || self.delta.is_empty() {
            return Err(CliError::Config("p, n and delta grids must be non-empty".into()));
        }
        if self.n.contains(&0) || self.n.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config("n grid must be positive and increasing".into()));
        }
        if self.delta.iter().any(|d| !(*d > 0.0 && *d < 1.0)) || self.delta.windows(2).any(|w| w[0] <= w[1]) {
            return Err(CliError::Config("delta grid must lie in (0, 1) and decrease".into()));
        }
        if self.samples == 0 {
            return Err(CliError::Config("samples must be positive".into()));
        }
        let seed = ov
            .seed
            .or(self.seed)
            .ok_or_else(|| CliError::Config("a seed is required (config `seed` or --seed)".into()))?;
        let out = ov
            .out
            .clone()
            .or_else(|| self.out.as_ref().map(|o| base_dir.join(o)))
            .ok_or_else(|| CliError::Config("an output directory is required (config `out` or --out)".into()))?;
        let budget = ov.budget.or(self.budget).unwrap_or(DEFAULT_BUDGET);
        let defaults = FlowParams::default();
        let params = FlowParams {
            samples: self.samples,
            seed,
            budget: if self.mode == Mode::McOnly { 0 } else { budget },
            allow_mc: self.mode != Mode::ExactOnly,
            mc_proposals: self.mc_proposals.unwrap_or(defaults.mc_proposals),
            mc_samples: self.mc_samples.unwrap_or(defaults.mc_samples),
            filter_samples: self.filter_samples.unwrap_or(defaults.filter_samples),
        };
        let cd = ClassifyParams::default();
        let classify = ClassifyParams {
            points: self.classify.points.unwrap_or(cd.points),
            n: self.classify.ball.unwrap_or(cd.n),
            horizons: self.classify.horizons.clone().unwrap_or(cd.horizons),
            samples: self.classify.samples.unwrap_or(cd.samples),
            seed,
            budget,
            decay: self.classify.decay.unwrap_or(cd.decay),
        };
        let id = self
            .experiment_id
            .clone()
            .unwrap_or_else(|| format!("{}-{}", rule.label(), measure.label()));
        Ok(Experiment {
            id,
            exponent_n: self.exponent_n.unwrap_or(2),
            rule,
            measure,
            velocity,
            p: self.p,
            n: self.n,
            delta: self.delta,
            params,
            out,
            classify,
            mode: self.mode,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ExperimentConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn presets_and_specs() {
        let cfg = parse("rule = \"prod2\"\nseed = 1\nout = \"o\"\n");
        let exp = cfg.resolve(Path::new("."), &Overrides::default()).unwrap();
        assert_eq!(exp.measure.label(), "uniform2_x_uniform2");
        assert_eq!(exp.velocity, VelocitySpec::linear_int(2, 2).unwrap());
        let cfg = parse(
            "rule = \"rule90\"\nseed = 1\nout = \"o\"\n[measure]\ntype = \"bernoulli\"\nparams = { probs = [\"1/3\", \"2/3\"] }\n",
        );
        let exp = cfg.resolve(Path::new("."), &Overrides::default()).unwrap();
        assert!((exp.measure.shift_entropy() - 0.6365141682948128).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_grids_and_missing_seed() {
        let bad = [
            "rule = \"shift\"\nout = \"o\"\n",
            "rule = \"shift\"\nseed = 1\nout = \"o\"\nn = [3, 2]\n",
            "rule = \"shift\"\nseed = 1\nout = \"o\"\ndelta = [0.1, 0.2]\n",
            "seed = 1\nout = \"o\"\n",
            "rule = \"prod2\"\nmeasure = \"bernoulli\"\nseed = 1\nout = \"o\"\n",
        ];
        for text in bad {
            assert!(parse(text).resolve(Path::new("."), &Overrides::default()).is_err(), "{text}");
        }
        assert!(toml::from_str::<ExperimentConfig>("rul = \"shift\"").is_err());
    }
}
