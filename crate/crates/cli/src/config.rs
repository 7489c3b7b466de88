//! Run configuration: command-line flags layered over an optional JSON file.

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use hmc_core::adapt::{MetricMode, DEFAULT_TARGET_ACCEPT};
use hmc_core::integrator::DEFAULT_DIVERGENCE_THRESHOLD;
use hmc_core::sampler::{ChainSettings, SamplerKind};
use hmc_core::transition::DEFAULT_MAX_DEPTH;
use hmc_core::{DivergenceConfig, Target, TargetDescriptor};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const DEFAULT_CHAINS: usize = 4;
pub const DEFAULT_NUM_WARMUP: usize = 1000;
pub const DEFAULT_NUM_SAMPLES: usize = 1000;
pub const DEFAULT_INIT_RADIUS: f64 = 2.0;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("no target given: pass --target or set `target` in the config file")]
    MissingTarget,
    #[error("--L (trajectory length) applies only to the static samplers, not to `dynamic`")]
    LengthWithDynamic,
    #[error("sampler `{0}` requires --L (trajectory length)")]
    MissingLength(&'static str),
    #[error("--max-depth applies only to the `dynamic` sampler, not to `{0}`")]
    DepthWithStatic(&'static str),
    #[error("cannot read config file {path}: {source}")]
    ReadFile {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config file {path}: {source}")]
    ParseFile {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid --param `{0}`: expected KEY=VALUE")]
    BadParam(String),
    #[error("invalid --init `{0}`: expected comma-separated numbers")]
    BadInit(String),
    #[error("invalid target: {0}")]
    Target(hmc_core::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SamplerName {
    #[value(name = "static_hmc")]
    StaticHmc,
    #[value(name = "static_multinomial")]
    StaticMultinomial,
    Dynamic,
}

impl SamplerName {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplerName::StaticHmc => "static_hmc",
            SamplerName::StaticMultinomial => "static_multinomial",
            SamplerName::Dynamic => "dynamic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Unit,
    Diag,
    Dense,
}

impl From<MetricArg> for MetricMode {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Unit => MetricMode::Unit,
            MetricArg::Diag => MetricMode::Diag,
            MetricArg::Dense => MetricMode::Dense,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
}

/// Starting point of every chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Init {
    /// Each component uniform in `[-r, r]`.
    Radius { radius: f64 },
    Point(Vec<f64>),
}

/// A fully resolved run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub target: TargetDescriptor,
    pub sampler: SamplerName,
    pub chains: usize,
    pub num_warmup: usize,
    pub num_samples: usize,
    pub seed: u64,
    pub init: Init,
    pub step_size: Option<f64>,
    #[serde(rename = "L")]
    pub n_steps: Option<usize>,
    pub max_depth: Option<usize>,
    pub metric: MetricMode,
    pub target_accept: f64,
    pub adapt: bool,
    pub divergence_threshold: f64,
    // Execution details below never change the draws and are left out of the echo.
    #[serde(skip)]
    pub output_dir: PathBuf,
    #[serde(skip)]
    pub report_format: ReportFormat,
    #[serde(skip)]
    pub sequential: bool,
    #[serde(skip)]
    pub quiet: bool,
}

impl RunConfig {
    /// A configuration with every default filled in.
    pub fn new(target: TargetDescriptor) -> Self {
        Self {
            target,
            sampler: SamplerName::Dynamic,
            chains: DEFAULT_CHAINS,
            num_warmup: DEFAULT_NUM_WARMUP,
            num_samples: DEFAULT_NUM_SAMPLES,
            seed: DEFAULT_SEED,
            init: Init::Radius {
                radius: DEFAULT_INIT_RADIUS,
            },
            step_size: None,
            n_steps: None,
            max_depth: Some(DEFAULT_MAX_DEPTH),
            metric: MetricMode::Diag,
            target_accept: DEFAULT_TARGET_ACCEPT,
            adapt: true,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
            output_dir: PathBuf::from("output"),
            report_format: ReportFormat::Text,
            sequential: false,
            quiet: false,
        }
    }

    pub fn build_target(&self) -> Result<Target, ConfigError> {
        Target::from_descriptor(&self.target).map_err(ConfigError::Target)
    }

    pub fn sampler_kind(&self) -> SamplerKind {
        match self.sampler {
            SamplerName::StaticHmc => SamplerKind::StaticHmc {
                n_steps: self.n_steps.unwrap_or(1),
            },
            SamplerName::StaticMultinomial => SamplerKind::StaticMultinomial {
                n_steps: self.n_steps.unwrap_or(1),
            },
            SamplerName::Dynamic => SamplerKind::Dynamic {
                max_depth: self.max_depth.unwrap_or(DEFAULT_MAX_DEPTH),
            },
        }
    }

    pub fn chain_settings(&self) -> ChainSettings {
        ChainSettings {
            sampler: self.sampler_kind(),
            num_warmup: self.num_warmup,
            num_samples: self.num_samples,
            metric_mode: self.metric,
            target_accept: self.target_accept,
            adapt: self.adapt,
            step_size: self.step_size,
            divergence: DivergenceConfig {
                threshold: self.divergence_threshold,
            },
        }
    }

    /// Checks counts, ranges and sampler-specific fields.
    pub fn validate(&self) -> Result<Target, ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        match (self.sampler, self.n_steps) {
            (SamplerName::Dynamic, Some(_)) => return Err(ConfigError::LengthWithDynamic),
            (SamplerName::Dynamic, None) => {}
            (s, None) => return Err(ConfigError::MissingLength(s.as_str())),
            (_, Some(0)) => return invalid("--L must be positive".into()),
            _ => {}
        }
        if self.sampler != SamplerName::Dynamic && self.max_depth.is_some() {
            return Err(ConfigError::DepthWithStatic(self.sampler.as_str()));
        }
        if self.max_depth == Some(0) {
            return invalid("--max-depth must be positive".into());
        }
        if self.chains == 0 {
            return invalid("--chains must be positive".into());
        }
        if self.num_samples == 0 {
            return invalid("--num-samples must be positive".into());
        }
        if self.adapt && self.num_warmup < 20 {
            return invalid(format!(
                "--num-warmup {} is too short for adaptation (minimum 20)",
                self.num_warmup
            ));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return invalid(format!("--target-accept must lie in (0, 1), got {}", self.target_accept));
        }
        if !(self.divergence_threshold > 0.0) {
            return invalid("--divergence-threshold must be positive".into());
        }
        if let Some(eps) = self.step_size {
            if !(eps > 0.0 && eps.is_finite()) {
                return invalid(format!("--step-size must be positive and finite, got {eps}"));
            }
        }
        let target = self.build_target()?;
        match &self.init {
            Init::Radius { radius } if !(*radius >= 0.0 && radius.is_finite()) => {
                return invalid(format!("init radius must be non-negative, got {radius}"));
            }
            Init::Point(p) if p.len() != target.dim() => {
                return invalid(format!(
                    "init point has {} components but the target has dimension {}",
                    p.len(),
                    target.dim()
                ));
            }
            _ => {}
        }
        Ok(target)
    }
}

/// JSON config file. Every field is optional and unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub target: Option<TargetDescriptor>,
    pub sampler: Option<SamplerName>,
    pub chains: Option<usize>,
    pub num_warmup: Option<usize>,
    pub num_samples: Option<usize>,
    pub seed: Option<u64>,
    pub init: Option<Init>,
    pub step_size: Option<f64>,
    #[serde(rename = "L", alias = "n_steps")]
    pub n_steps: Option<usize>,
    pub max_depth: Option<usize>,
    pub metric: Option<MetricMode>,
    pub target_accept: Option<f64>,
    pub adapt: Option<bool>,
    pub divergence_threshold: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub report_format: Option<ReportFormat>,
    pub sequential: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::ReadFile {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::ParseFile {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Hamiltonian Monte Carlo sampler for built-in targets.
#[derive(Debug, Clone, Default, Parser)]
#[command(name = "hmc", version, about, allow_negative_numbers = true)]
pub struct Args {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Target kind: std_normal, mvn_precision, funnel or beta_family.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Target parameter as KEY=VALUE, VALUE in JSON (e.g. scale=3, beta=1).
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerName>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub num_warmup: Option<usize>,
    #[arg(long)]
    pub num_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Start every chain at this point (comma-separated).
    #[arg(long, conflicts_with = "init_radius")]
    pub init: Option<String>,
    /// Random start, each component uniform in [-r, r].
    #[arg(long)]
    pub init_radius: Option<f64>,
    /// Fixed step size; disables step-size adaptation.
    #[arg(long)]
    pub step_size: Option<f64>,
    /// Leapfrog steps per trajectory (static samplers).
    #[arg(long = "L", value_name = "L")]
    pub n_steps: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long)]
    pub target_accept: Option<f64>,
    /// Turn off warm-up adaptation.
    #[arg(long)]
    pub no_adapt: bool,
    #[arg(long)]
    pub divergence_threshold: Option<f64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Format of the summary printed to stdout.
    #[arg(long, value_enum)]
    pub report_format: Option<ReportFormat>,
    /// Run chains one after another instead of concurrently.
    #[arg(long)]
    pub sequential: bool,
    /// Suppress per-chain progress lines.
    #[arg(long)]
    pub quiet: bool,
}

fn parse_point(text: &str) -> Result<Vec<f64>, ConfigError> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| ConfigError::BadInit(text.to_string()))
}

fn parse_param(text: &str) -> Result<(String, Value), ConfigError> {
    let (key, value) = text
        .split_once('=')
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| ConfigError::BadParam(text.to_string()))?;
    let value = serde_json::from_str(value).map_err(|_| ConfigError::BadParam(text.to_string()))?;
    Ok((key.to_string(), value))
}

/// Parses raw command-line arguments (including the program name).
pub fn parse_args<I, T>(args: I) -> Result<Args, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Args::try_parse_from(args)
}

/// Resolves flags over the optional file over the defaults, then validates.
pub fn parse_config(args: &Args, file: Option<FileConfig>) -> Result<RunConfig, ConfigError> {
    let file = match (file, &args.config) {
        (Some(f), _) => f,
        (None, Some(path)) => FileConfig::load(path)?,
        (None, None) => FileConfig::default(),
    };

    let mut target = match (&args.target, file.target) {
        (Some(kind), Some(desc)) if &desc.kind == kind => desc,
        (Some(kind), _) => TargetDescriptor::new(kind.clone(), None),
        (None, Some(desc)) => desc,
        (None, None) => return Err(ConfigError::MissingTarget),
    };
    if args.dim.is_some() {
        target.dim = args.dim;
    }
    for p in &args.params {
        let (key, value) = parse_param(p)?;
        target.params.insert(key, value);
    }

    let mut config = RunConfig::new(target);
    config.sampler = args.sampler.or(file.sampler).unwrap_or(config.sampler);
    config.chains = args.chains.or(file.chains).unwrap_or(config.chains);
    config.num_warmup = args.num_warmup.or(file.num_warmup).unwrap_or(config.num_warmup);
    config.num_samples = args.num_samples.or(file.num_samples).unwrap_or(config.num_samples);
    config.seed = args.seed.or(file.seed).unwrap_or(config.seed);
    config.init = match (&args.init, args.init_radius) {
        (Some(point), _) => Init::Point(parse_point(point)?),
        (None, Some(radius)) => Init::Radius { radius },
        (None, None) => file.init.unwrap_or(config.init),
    };
    config.step_size = args.step_size.or(file.step_size);
    config.n_steps = args.n_steps.or(file.n_steps);
    config.max_depth = match args.max_depth.or(file.max_depth) {
        Some(depth) => Some(depth),
        None if config.sampler == SamplerName::Dynamic => Some(DEFAULT_MAX_DEPTH),
        None => None,
    };
    config.metric = args.metric.map(MetricMode::from).or(file.metric).unwrap_or(config.metric);
    config.target_accept = args.target_accept.or(file.target_accept).unwrap_or(config.target_accept);
    config.adapt = !args.no_adapt && file.adapt.unwrap_or(true);
    config.divergence_threshold = args
        .divergence_threshold
        .or(file.divergence_threshold)
        .unwrap_or(config.divergence_threshold);
    config.output_dir = args.output_dir.clone().or(file.output_dir).unwrap_or(config.output_dir);
    config.report_format = args.report_format.or(file.report_format).unwrap_or_default();
    config.sequential = args.sequential || file.sequential.unwrap_or(false);
    config.quiet = args.quiet;

    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Args {
        parse_args(std::iter::once("hmc").chain(list.iter().copied())).unwrap()
    }

    #[test]
    fn flags_with_defaults() {
        let c = parse_config(&args(&["--target", "std_normal", "--dim", "10"]), None).unwrap();
        assert_eq!(c.target.kind, "std_normal");
        assert_eq!(c.target.dim, Some(10));
        assert_eq!(c.sampler, SamplerName::Dynamic);
        assert_eq!(c.chains, 4);
        assert_eq!(c.num_warmup, 1000);
        assert_eq!(c.num_samples, 1000);
        assert_eq!(c.max_depth, Some(10));
        assert_eq!(c.init, Init::Radius { radius: 2.0 });
        assert_eq!(c.target_accept, 0.8);
    }

    #[test]
    fn length_is_static_only() {
        let err = parse_config(
            &args(&["--target", "std_normal", "--dim", "2", "--sampler", "dynamic", "--L", "16"]),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::LengthWithDynamic));
        assert!(err.to_string().contains("static"));
    }

    #[test]
    fn static_sampler_needs_length() {
        let err = parse_config(
            &args(&["--target", "std_normal", "--dim", "2", "--sampler", "static_hmc"]),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::MissingLength("static_hmc")));
        let ok = parse_config(
            &args(&["--target", "std_normal", "--dim", "2", "--sampler", "static_hmc", "--L", "8"]),
            None,
        )
        .unwrap();
        assert_eq!(ok.max_depth, None);
        assert_eq!(ok.sampler_kind(), SamplerKind::StaticHmc { n_steps: 8 });
    }

    #[test]
    fn flags_override_file() {
        let file: FileConfig = serde_json::from_str(
            r#"{"target": {"kind": "funnel", "dim": 5, "params": {"scale": 2.0}}, "chains": 2, "seed": 9}"#,
        )
        .unwrap();
        let c = parse_config(&args(&["--chains", "8"]), Some(file)).unwrap();
        assert_eq!(c.chains, 8);
        assert_eq!(c.seed, 9);
        assert_eq!(c.target.params["scale"], 2.0);
    }

    #[test]
    fn missing_target_and_unknown_flag_are_distinct() {
        let err = parse_config(&args(&["--dim", "3"]), None).unwrap_err();
        assert!(matches!(err, ConfigError::MissingTarget));
        let unknown = parse_args(["hmc", "--frobnicate"]).unwrap_err();
        assert_eq!(unknown.kind(), clap::error::ErrorKind::UnknownArgument);
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        let parsed: Result<FileConfig, _> = serde_json::from_str(r#"{"chainz": 2}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn params_and_init_point() {
        let c = parse_config(
            &args(&["--target", "beta_family", "--param", "beta=1", "--init", "-0.5"]),
            None,
        )
        .unwrap();
        assert_eq!(c.target.params["beta"], 1);
        assert_eq!(c.init, Init::Point(vec![-0.5]));
        let bad = parse_config(&args(&["--target", "beta_family", "--param", "beta"]), None);
        assert!(matches!(bad, Err(ConfigError::BadParam(_))));
    }

    #[test]
    fn invalid_values() {
        for extra in [
            &["--chains", "0"][..],
            &["--num-samples", "0"],
            &["--num-warmup", "10"],
            &["--target-accept", "1.5"],
            &["--step-size", "-1"],
            &["--init", "1,2,3"],
        ] {
            let mut list = vec!["--target", "std_normal", "--dim", "2"];
            list.extend_from_slice(extra);
            assert!(parse_config(&args(&list), None).is_err(), "{extra:?}");
        }
        let unknown_target = parse_config(&args(&["--target", "banana", "--dim", "2"]), None);
        assert!(matches!(unknown_target, Err(ConfigError::Target(_))));
    }
}
