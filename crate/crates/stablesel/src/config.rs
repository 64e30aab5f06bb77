//! Run configuration: `key = value` lines under `[section]` headers.
//!
//! Every key can be overridden from the environment as
//! `STABLESEL_<SECTION>_<KEY>` (upper case). [`RunConfig::snapshot`] renders
//! the fully resolved configuration in the same format, so a snapshot can be
//! fed back in unchanged.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use stablesel_core::baselines::{GradStabConfig, Method};
use stablesel_core::data::{EnvStrategy, DEFAULT_SPLIT_SEED};
use stablesel_core::sampler::StepSchedule;
use stablesel_core::synth::SynthSpec;
use stablesel_core::{PipelineConfig, Task};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Synth,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    /// Use the environments present in the data.
    Given,
    Quantile,
    GroupShift,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: Source,
    pub path: PathBuf,
    pub target: String,
    pub env_column: Option<String>,
    pub task: Task,
    /// Synthetic generator settings; its `seed` is ignored in favour of
    /// `seed` below.
    pub synth: SynthSpec,
    /// Fixed data seed; `None` ties the data to the run seed.
    pub seed: Option<u64>,
    pub split_seed: u64,
    pub env_kind: EnvKind,
    pub env_feature: usize,
    pub env_count: usize,
    pub shift_features: Vec<usize>,
    pub shift_scales: Vec<f64>,
    pub shift_offsets: Vec<f64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: Source::Synth,
            path: PathBuf::from("data.csv"),
            target: "y".into(),
            env_column: Some("env".into()),
            task: Task::Regression,
            synth: SynthSpec {
                held_out_envs: 1,
                ..SynthSpec::default()
            },
            seed: None,
            split_seed: DEFAULT_SPLIT_SEED,
            env_kind: EnvKind::Given,
            env_feature: 0,
            env_count: 3,
            shift_features: Vec::new(),
            shift_scales: Vec::new(),
            shift_offsets: Vec::new(),
        }
    }
}

impl DataConfig {
    pub fn strategy(&self) -> Option<EnvStrategy> {
        match self.env_kind {
            EnvKind::Given => None,
            EnvKind::Quantile => Some(EnvStrategy::QuantilePartition {
                column: self.env_feature,
                n_envs: self.env_count,
            }),
            EnvKind::GroupShift => Some(EnvStrategy::GroupShift {
                features: self.shift_features.clone(),
                scales: self.shift_scales.clone(),
                shifts: self.shift_offsets.clone(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataConfig,
    pub pipeline: PipelineConfig,
    pub grad_stab: GradStabConfig,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub trace: bool,
    /// Add the no-prior / no-icp / no-sampling rows to comparisons.
    pub ablations: bool,
    pub methods: Vec<Method>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            pipeline: PipelineConfig {
                k: 4,
                ..PipelineConfig::default()
            },
            grad_stab: GradStabConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
            output: PathBuf::from("out"),
            trace: true,
            ablations: true,
            methods: Method::ALL.to_vec(),
        }
    }
}

fn parse<T: FromStr>(section: &str, key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("[{section}] {key}: cannot parse `{v}`")))
}

fn parse_list<T: FromStr>(section: &str, key: &str, v: &str) -> Result<Vec<T>> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse(section, key, s))
        .collect()
}

fn list<T: Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

fn opt(v: &str) -> Option<String> {
    let v = v.trim();
    (!v.is_empty() && v != "none").then(|| v.to_owned())
}

fn task_str(t: Task) -> &'static str {
    t.as_str()
}

impl RunConfig {
    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let ini = ini::Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = Self::default();
        for (section, props) in ini.iter() {
            for (key, value) in props.iter() {
                let section = section.ok_or_else(|| {
                    Error::Config(format!("`{key}` appears outside any section"))
                })?;
                cfg.set(section, key, value)?;
            }
        }
        Ok(cfg)
    }

    /// Applies `STABLESEL_<SECTION>_<KEY>` overrides from `vars`.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let keys: Vec<(&str, &str)> = self.entries().iter().map(|(s, k, _)| (*s, *k)).collect();
        for (name, value) in vars {
            let Some(rest) = name.strip_prefix("STABLESEL_") else {
                continue;
            };
            let hit = keys.iter().find(|(s, k)| {
                format!("{}_{}", s.to_uppercase(), k.to_uppercase()) == rest
            });
            match hit {
                Some((s, k)) => self.set(s, k, &value)?,
                None => return Err(Error::Config(format!("unknown override {name}"))),
            }
        }
        Ok(())
    }

    /// Reads `path` (or starts from defaults) and applies process
    /// environment overrides.
    pub fn load(path: Option<&std::path::Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::parse(&std::fs::read_to_string(p).map_err(Error::io(p))?)?,
            None => Self::default(),
        };
        cfg.apply_env(std::env::vars())?;
        Ok(cfg)
    }

    pub fn set(&mut self, section: &str, key: &str, v: &str) -> Result<()> {
        let d = &mut self.data;
        let pc = &mut self.pipeline;
        match (section, key) {
            ("data", "source") => {
                d.source = match v.trim() {
                    "synth" => Source::Synth,
                    "csv" => Source::Csv,
                    _ => return Err(Error::Config(format!("unknown data source `{v}`"))),
                }
            }
            ("data", "path") => d.path = PathBuf::from(v.trim()),
            ("data", "target") => d.target = v.trim().to_owned(),
            ("data", "env_column") => d.env_column = opt(v),
            ("data", "task") => {
                d.task = Task::parse(v.trim())
                    .ok_or_else(|| Error::Config(format!("unknown task `{v}`")))?;
                d.synth.task = d.task;
            }
            ("data", "seed") => d.seed = opt(v).map(|s| parse(section, key, &s)).transpose()?,
            ("data", "split_seed") => d.split_seed = parse(section, key, v)?,
            ("data", "p") => d.synth.p = parse(section, key, v)?,
            ("data", "k_causal") => d.synth.k_causal = parse(section, key, v)?,
            ("data", "k_spurious") => d.synth.k_spurious = parse(section, key, v)?,
            ("data", "n_envs") => d.synth.n_envs = parse(section, key, v)?,
            ("data", "n_per_env") => d.synth.n_per_env = parse(section, key, v)?,
            ("data", "noise_sd") => d.synth.noise_sd = parse(section, key, v)?,
            ("data", "flip") => d.synth.flip = parse(section, key, v)?,
            ("data", "held_out_envs") => d.synth.held_out_envs = parse(section, key, v)?,
            ("data", "env_strategy") => {
                d.env_kind = match v.trim() {
                    "given" => EnvKind::Given,
                    "quantile" => EnvKind::Quantile,
                    "group_shift" => EnvKind::GroupShift,
                    _ => return Err(Error::Config(format!("unknown env_strategy `{v}`"))),
                }
            }
            ("data", "env_feature") => d.env_feature = parse(section, key, v)?,
            ("data", "env_count") => d.env_count = parse(section, key, v)?,
            ("data", "shift_features") => d.shift_features = parse_list(section, key, v)?,
            ("data", "shift_scales") => d.shift_scales = parse_list(section, key, v)?,
            ("data", "shift_offsets") => d.shift_offsets = parse_list(section, key, v)?,

            ("selection", "k") => pc.k = parse(section, key, v)?,
            ("selection", "lambda_var") => pc.lambda_var = parse(section, key, v)?,
            ("selection", "use_icp") => pc.use_icp = parse(section, key, v)?,
            ("selection", "use_prior") => pc.use_prior = parse(section, key, v)?,

            ("pool", "size") => pc.pool_size = parse(section, key, v)?,
            ("pool", "sigma_mask") => pc.sigma_mask = parse(section, key, v)?,
            ("pool", "gamma") => pc.gamma = parse(section, key, v)?,

            ("prior", "steps") => pc.diffusion_steps = parse(section, key, v)?,
            ("prior", "hidden") => pc.prior.hidden = parse(section, key, v)?,
            ("prior", "epochs") => pc.prior.epochs = parse(section, key, v)?,
            ("prior", "batch") => pc.prior.batch = parse(section, key, v)?,
            ("prior", "lr") => pc.prior.lr = parse(section, key, v)?,

            ("predictor", "hidden") => pc.predictor.hidden = parse(section, key, v)?,
            ("predictor", "epochs") => pc.predictor.epochs = parse(section, key, v)?,
            ("predictor", "batch") => pc.predictor.batch = parse(section, key, v)?,
            ("predictor", "lr") => pc.predictor.lr = parse(section, key, v)?,

            ("sampler", "steps") => pc.sampler.steps = parse(section, key, v)?,
            ("sampler", "chains") => pc.sampler.chains = parse(section, key, v)?,
            ("sampler", "beta") => pc.sampler.beta = parse(section, key, v)?,
            ("sampler", "eta0") | ("sampler", "decay") => {
                let x: f64 = parse(section, key, v)?;
                let (mut eta0, mut decay) = match pc.sampler.schedule {
                    StepSchedule::Polynomial { eta0, decay } => (eta0, decay),
                    StepSchedule::Constant(e) => (e, 0.0),
                };
                if key == "eta0" {
                    eta0 = x;
                } else {
                    decay = x;
                }
                pc.sampler.schedule = StepSchedule::Polynomial { eta0, decay };
            }
            ("sampler", "grad_clip") => {
                pc.sampler.grad_clip = opt(v).map(|s| parse(section, key, &s)).transpose()?
            }
            ("sampler", "temperature") => pc.sampler.temperature = parse(section, key, v)?,
            ("sampler", "normalize") => pc.sampler.normalize = parse(section, key, v)?,
            ("sampler", "project") => pc.sampler.project = parse(section, key, v)?,

            ("grad_stab", "steps") => self.grad_stab.steps = parse(section, key, v)?,
            ("grad_stab", "lr") => self.grad_stab.lr = parse(section, key, v)?,
            ("grad_stab", "init") => self.grad_stab.init = parse(section, key, v)?,

            ("run", "seeds") => self.seeds = parse_list(section, key, v)?,
            ("run", "output") => self.output = PathBuf::from(v.trim()),
            ("run", "trace") => self.trace = parse(section, key, v)?,
            ("run", "ablations") => self.ablations = parse(section, key, v)?,
            ("run", "methods") => {
                self.methods = if v.trim() == "all" {
                    Method::ALL.to_vec()
                } else {
                    v.split(|c: char| c == ',' || c.is_whitespace())
                        .filter(|s| !s.is_empty())
                        .map(|s| {
                            Method::parse(s)
                                .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
                        })
                        .collect::<Result<_>>()?
                }
            }
            _ => return Err(Error::Config(format!("unknown key [{section}] {key}"))),
        }
        Ok(())
    }

    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, &'static str, String)> {
        let d = &self.data;
        let s = &d.synth;
        let pc = &self.pipeline;
        let (eta0, decay) = match pc.sampler.schedule {
            StepSchedule::Polynomial { eta0, decay } => (eta0, decay),
            StepSchedule::Constant(e) => (e, 0.0),
        };
        let env_kind = match d.env_kind {
            EnvKind::Given => "given",
            EnvKind::Quantile => "quantile",
            EnvKind::GroupShift => "group_shift",
        };
        let none = || "none".to_owned();
        let methods: Vec<&str> = self.methods.iter().map(|m| m.as_str()).collect();
        vec![
            ("data", "source", match d.source {
                Source::Synth => "synth".into(),
                Source::Csv => "csv".into(),
            }),
            ("data", "path", d.path.display().to_string()),
            ("data", "target", d.target.clone()),
            ("data", "env_column", d.env_column.clone().unwrap_or_else(none)),
            ("data", "task", task_str(d.task).into()),
            ("data", "seed", d.seed.map_or_else(none, |v| v.to_string())),
            ("data", "split_seed", d.split_seed.to_string()),
            ("data", "p", s.p.to_string()),
            ("data", "k_causal", s.k_causal.to_string()),
            ("data", "k_spurious", s.k_spurious.to_string()),
            ("data", "n_envs", s.n_envs.to_string()),
            ("data", "n_per_env", s.n_per_env.to_string()),
            ("data", "noise_sd", s.noise_sd.to_string()),
            ("data", "flip", s.flip.to_string()),
            ("data", "held_out_envs", s.held_out_envs.to_string()),
            ("data", "env_strategy", env_kind.into()),
            ("data", "env_feature", d.env_feature.to_string()),
            ("data", "env_count", d.env_count.to_string()),
            ("data", "shift_features", list(&d.shift_features)),
            ("data", "shift_scales", list(&d.shift_scales)),
            ("data", "shift_offsets", list(&d.shift_offsets)),
            ("selection", "k", pc.k.to_string()),
            ("selection", "lambda_var", pc.lambda_var.to_string()),
            ("selection", "use_icp", pc.use_icp.to_string()),
            ("selection", "use_prior", pc.use_prior.to_string()),
            ("pool", "size", pc.pool_size.to_string()),
            ("pool", "sigma_mask", pc.sigma_mask.to_string()),
            ("pool", "gamma", pc.gamma.to_string()),
            ("prior", "steps", pc.diffusion_steps.to_string()),
            ("prior", "hidden", pc.prior.hidden.to_string()),
            ("prior", "epochs", pc.prior.epochs.to_string()),
            ("prior", "batch", pc.prior.batch.to_string()),
            ("prior", "lr", pc.prior.lr.to_string()),
            ("predictor", "hidden", pc.predictor.hidden.to_string()),
            ("predictor", "epochs", pc.predictor.epochs.to_string()),
            ("predictor", "batch", pc.predictor.batch.to_string()),
            ("predictor", "lr", pc.predictor.lr.to_string()),
            ("sampler", "steps", pc.sampler.steps.to_string()),
            ("sampler", "chains", pc.sampler.chains.to_string()),
            ("sampler", "beta", pc.sampler.beta.to_string()),
            ("sampler", "eta0", eta0.to_string()),
            ("sampler", "decay", decay.to_string()),
            ("sampler", "grad_clip", pc.sampler.grad_clip.map_or_else(none, |c| c.to_string())),
            ("sampler", "temperature", pc.sampler.temperature.to_string()),
            ("sampler", "normalize", pc.sampler.normalize.to_string()),
            ("sampler", "project", pc.sampler.project.to_string()),
            ("grad_stab", "steps", self.grad_stab.steps.to_string()),
            ("grad_stab", "lr", self.grad_stab.lr.to_string()),
            ("grad_stab", "init", self.grad_stab.init.to_string()),
            ("run", "seeds", list(&self.seeds)),
            ("run", "output", self.output.display().to_string()),
            ("run", "trace", self.trace.to_string()),
            ("run", "ablations", self.ablations.to_string()),
            ("run", "methods", methods.join(" ")),
        ]
    }

    /// The resolved configuration in config-file syntax.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for (section, key, value) in self.entries() {
            if section != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                out.push_str(&format!("[{section}]\n"));
                current = section;
            }
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    /// Checks everything that can be checked without the data.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.data.source == Source::Synth {
            self.data.synth.validate()?;
        }
        self.pipeline.sampler.validate()?;
        Ok(())
    }
}
