//! Run configuration: a flat `key = value` file plus command-line overrides.
//!
//! Grammar, one setting per line:
//!
//! ```text
//! # comment
//! key = value
//! key = v1, v2, v3      # lists: commas and/or whitespace
//! ```
//!
//! Keys are lowercase with underscores. Unknown and repeated keys are
//! errors. Overrides (`--set key=value` and the dedicated flags) are applied
//! after the file, in order.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::str::FromStr;

use dirquant::contours::Estimator;
use dirquant::geometry::GammaConvention;
use dirquant::priors::RadiusFamily;
use dirquant::samplers::{DesignKind, KernelKind};
use dirquant::simlab::ConditionalResponse;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Fit,
    Contour,
    Tube,
    Ci,
    Simulate,
    Elicit,
    Generate,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Contour => "contour",
            Command::Tube => "tube",
            Command::Ci => "ci",
            Command::Simulate => "simulate",
            Command::Elicit => "elicit",
            Command::Generate => "generate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerChoice {
    Gibbs,
    Metropolis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Desk,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Rmse,
    Coverage,
    Subgradient,
    Conditional,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Rmse => "rmse",
            Experiment::Coverage => "coverage",
            Experiment::Subgradient => "subgradient",
            Experiment::Conditional => "conditional",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    /// Response column names; empty means every non-covariate column.
    pub responses: Vec<String>,
    pub covariates: Vec<String>,
    /// Direction for `fit` and `ci`; normalized on use.
    pub direction: Vec<f64>,
    /// Grid size for `contour` and `tube`.
    pub directions: usize,
    pub taus: Vec<f64>,
    pub prior_variance: f64,
    /// JSON prior written by `elicit` (or a bare prior object).
    pub prior_file: Option<PathBuf>,
    pub sampler: SamplerChoice,
    pub proposal_scale: f64,
    /// Defaults: 3000 draws / 1000 burn-in, or 1100 / 100 for `simulate`.
    pub draws: Option<usize>,
    pub burn_in: Option<usize>,
    pub seed: u64,
    pub jitter: bool,
    /// Not part of the hash: artifacts must not depend on where they land.
    #[serde(skip)]
    pub output: PathBuf,
    pub estimator: Estimator,
    /// Default: Householder, or the clockwise complement for `simulate`.
    pub convention: Option<GammaConvention>,
    pub simultaneous: bool,
    /// Tube slices (one value per slice when there is one covariate).
    pub x0: Vec<f64>,
    /// `None` selects the rule-of-thumb bandwidth.
    pub bandwidth: Option<f64>,
    pub kernel: KernelKind,
    pub design: DesignKind,
    pub level: f64,
    pub profile: Profile,
    pub experiments: Vec<Experiment>,
    pub replications: Option<usize>,
    pub sample_sizes: Option<Vec<usize>>,
    pub dgps: Option<Vec<u8>>,
    pub oracle_mc_size: Option<usize>,
    pub conditional_response: ConditionalResponse,
    pub family: RadiusFamily,
    pub alpha_variance: f64,
    pub beta_variance: f64,
    pub k: usize,
    pub p: usize,
    /// `star` or a DGP index 1–4.
    pub generator: String,
    pub n: usize,
    /// Not part of the hash: results are identical for any thread count.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        Self {
            command,
            input: None,
            responses: Vec::new(),
            covariates: Vec::new(),
            direction: vec![0.0, 1.0],
            directions: 32,
            taus: vec![0.2],
            prior_variance: 1000.0,
            prior_file: None,
            sampler: SamplerChoice::Gibbs,
            proposal_scale: 0.1,
            draws: None,
            burn_in: None,
            seed: 0,
            jitter: false,
            output: PathBuf::from("out"),
            estimator: Estimator::BayesMean,
            convention: None,
            simultaneous: false,
            x0: Vec::new(),
            bandwidth: None,
            kernel: KernelKind::Gaussian,
            design: DesignKind::LocalConstant,
            level: 0.95,
            profile: Profile::Desk,
            experiments: vec![Experiment::Rmse],
            replications: None,
            sample_sizes: None,
            dgps: None,
            oracle_mc_size: None,
            conditional_response: ConditionalResponse::Latent,
            family: RadiusFamily::StandardNormal,
            alpha_variance: 1.0,
            beta_variance: 1.0,
            k: 2,
            p: 0,
            generator: "star".into(),
            n: 500,
            threads: None,
        }
    }

    /// Defaults, then the file entries, then the overrides.
    pub fn build(command: Command, file_text: Option<&str>, overrides: &[(String, String)]) -> CliResult<Self> {
        let mut cfg = Self::defaults(command);
        if let Some(text) = file_text {
            for (line, key, value) in parse_entries(text)? {
                cfg.set(&key, &value).map_err(|e| CliError::Config(format!("line {line}: {e}")))?;
            }
        }
        for (key, value) in overrides {
            cfg.set(key, value).map_err(|e| CliError::Config(format!("override {key}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "input" => self.input = Some(PathBuf::from(v)),
            "responses" => self.responses = words(v),
            "covariates" => self.covariates = words(v),
            "direction" => self.direction = list(v)?,
            "directions" => self.directions = scalar(v)?,
            "taus" | "tau" => self.taus = list(v)?,
            "prior_variance" => self.prior_variance = scalar(v)?,
            "prior_file" => self.prior_file = Some(PathBuf::from(v)),
            "sampler" => {
                self.sampler = match v {
                    "gibbs" => SamplerChoice::Gibbs,
                    "metropolis" | "mh" => SamplerChoice::Metropolis,
                    other => return Err(format!("unknown sampler `{other}`")),
                }
            }
            "proposal_scale" => self.proposal_scale = scalar(v)?,
            "draws" => self.draws = Some(scalar(v)?),
            "burn_in" => self.burn_in = Some(scalar(v)?),
            "seed" => self.seed = scalar(v)?,
            "jitter" => self.jitter = boolean(v)?,
            "output" => self.output = PathBuf::from(v),
            "estimator" => self.estimator = parsed(v)?,
            "convention" => self.convention = Some(parsed(v)?),
            "simultaneous" => self.simultaneous = boolean(v)?,
            "x0" => self.x0 = list(v)?,
            "bandwidth" => {
                self.bandwidth = match v {
                    "rule-of-thumb" | "auto" => None,
                    _ => Some(scalar(v)?),
                }
            }
            "kernel" => {
                self.kernel = match v {
                    "gaussian" => KernelKind::Gaussian,
                    "flat" => KernelKind::Flat,
                    other => return Err(format!("unknown kernel `{other}`")),
                }
            }
            "design" => self.design = parsed(v)?,
            "level" => self.level = scalar(v)?,
            "profile" => {
                self.profile = match v {
                    "desk" => Profile::Desk,
                    "full" => Profile::Full,
                    other => return Err(format!("unknown profile `{other}`")),
                }
            }
            "experiments" => {
                self.experiments = words(v)
                    .iter()
                    .map(|w| match w.as_str() {
                        "rmse" => Ok(Experiment::Rmse),
                        "coverage" => Ok(Experiment::Coverage),
                        "subgradient" => Ok(Experiment::Subgradient),
                        "conditional" => Ok(Experiment::Conditional),
                        other => Err(format!("unknown experiment `{other}`")),
                    })
                    .collect::<std::result::Result<_, _>>()?
            }
            "replications" => self.replications = Some(scalar(v)?),
            "sample_sizes" => self.sample_sizes = Some(list(v)?),
            "dgps" => self.dgps = Some(list(v)?),
            "oracle_mc_size" => self.oracle_mc_size = Some(scalar(v)?),
            "conditional_response" => self.conditional_response = parsed(v)?,
            "family" => self.family = parsed(v)?,
            "alpha_variance" => self.alpha_variance = scalar(v)?,
            "beta_variance" => self.beta_variance = scalar(v)?,
            "k" => self.k = scalar(v)?,
            "p" => self.p = scalar(v)?,
            "generator" => self.generator = v.to_string(),
            "n" => self.n = scalar(v)?,
            "threads" => self.threads = Some(scalar(v)?),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.taus.is_empty() {
            return bad("taus must not be empty".into());
        }
        if let Some(t) = self.taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return bad(format!("tau {t} outside (0, 1)"));
        }
        let (draws, burn_in) = self.mcmc_counts();
        if draws <= burn_in {
            return bad(format!("draws ({draws}) must exceed burn_in ({burn_in})"));
        }
        if self.responses.len() == 1 {
            return bad("need at least two response columns".into());
        }
        if self.responses.iter().any(|r| self.covariates.contains(r)) {
            return bad("a column cannot be both a response and a covariate".into());
        }
        if !(self.prior_variance > 0.0) || !(self.alpha_variance > 0.0) || !(self.beta_variance > 0.0) {
            return bad("prior variances must be positive".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level {} outside (0, 1)", self.level));
        }
        if self.directions < 3 {
            return bad("directions must be at least 3".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if matches!(self.bandwidth, Some(h) if !(h > 0.0)) {
            return bad("bandwidth must be positive".into());
        }
        if self.k < 2 {
            return bad("k must be at least 2".into());
        }
        let needs_input = matches!(self.command, Command::Fit | Command::Contour | Command::Tube | Command::Ci);
        if needs_input && self.input.is_none() {
            return bad(format!("`{}` needs an input file", self.command.as_str()));
        }
        Ok(())
    }

    /// `(draws, burn_in)` with command defaults filled in.
    pub fn mcmc_counts(&self) -> (usize, usize) {
        let (d, b) = if self.command == Command::Simulate { (1100, 100) } else { (3000, 1000) };
        (self.draws.unwrap_or(d), self.burn_in.unwrap_or(b))
    }

    pub fn gamma_convention(&self) -> GammaConvention {
        self.convention.unwrap_or(if self.command == Command::Simulate {
            GammaConvention::Clockwise
        } else {
            GammaConvention::Householder
        })
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `(line number, key, value)` for every setting in a config file.
pub fn parse_entries(text: &str) -> CliResult<Vec<(usize, String, String)>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {line_no}: expected `key = value`")))?;
        let key = key.trim().to_string();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') {
            return Err(CliError::Config(format!("line {line_no}: invalid key `{key}`")));
        }
        if !seen.insert(key.clone()) {
            return Err(CliError::Config(format!("line {line_no}: `{key}` set twice")));
        }
        out.push((line_no, key, value.trim().to_string()));
    }
    Ok(out)
}

/// Split `key=value` from `--set`.
pub fn parse_override(s: &str) -> CliResult<(String, String)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| CliError::Config(format!("`{s}` is not of the form key=value")))
}

fn words(v: &str) -> Vec<String> {
    v.split(|c: char| c == ',' || c.is_whitespace()).filter(|w| !w.is_empty()).map(str::to_string).collect()
}

fn scalar<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    words(v).iter().map(|w| scalar(w)).collect()
}

fn boolean(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(format!("expected a boolean, got `{other}`")),
    }
}

fn parsed<T: FromStr<Err = dirquant::Error>>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|e: dirquant::Error| e.to_string())
}
