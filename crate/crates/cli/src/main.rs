use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dirquant_cli::config::{parse_override, Command};
use dirquant_cli::{run, CliError, RunConfig};

/// Bayesian directional quantile regression.
#[derive(Parser, Debug)]
#[command(name = "dirquant", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Config file (`key = value` lines).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Input CSV.
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Quantile levels.
    #[arg(long, num_args = 1..)]
    tau: Vec<f64>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Sample the posterior for one direction and summarize it.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Direction vector (normalized on use).
        #[arg(long, num_args = 2.., allow_negative_numbers = true)]
        direction: Vec<f64>,
    },
    /// Quantile regions of a location model.
    Contour {
        #[command(flatten)]
        common: Common,
        /// Number of equally spaced directions.
        #[arg(long)]
        directions: Option<usize>,
    },
    /// Slices of conditional quantile tubes.
    Tube {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        directions: Option<usize>,
        /// Covariate values to slice at.
        #[arg(long, num_args = 1.., allow_negative_numbers = true)]
        x0: Vec<f64>,
    },
    /// Asymptotic and naive posterior intervals.
    Ci {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 2.., allow_negative_numbers = true)]
        direction: Vec<f64>,
        #[arg(long)]
        level: Option<f64>,
    },
    /// Monte Carlo experiments on the built-in data generating processes.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// `desk` (minutes) or `full` (hours).
        #[arg(long)]
        profile: Option<String>,
        /// Any of rmse, coverage, subgradient, conditional.
        #[arg(long, num_args = 1..)]
        experiments: Vec<String>,
    },
    /// Prior centred on spherical contours.
    Elicit {
        #[command(flatten)]
        common: Common,
        /// standard-normal, uniform-ball or custom:<radius>.
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        p: Option<usize>,
    },
    /// Write a synthetic dataset (`star` or a DGP index 1-4).
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        generator: Option<String>,
        #[arg(long)]
        n: Option<usize>,
    },
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn prepare(cmd: Cmd) -> Result<RunConfig, CliError> {
    let mut extra: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| extra.push((k.to_string(), v));
    let (command, common) = match cmd {
        Cmd::Fit { common, direction } => {
            if !direction.is_empty() {
                put("direction", join(&direction));
            }
            (Command::Fit, common)
        }
        Cmd::Contour { common, directions } => {
            if let Some(d) = directions {
                put("directions", d.to_string());
            }
            (Command::Contour, common)
        }
        Cmd::Tube { common, directions, x0 } => {
            if let Some(d) = directions {
                put("directions", d.to_string());
            }
            if !x0.is_empty() {
                put("x0", join(&x0));
            }
            (Command::Tube, common)
        }
        Cmd::Ci { common, direction, level } => {
            if !direction.is_empty() {
                put("direction", join(&direction));
            }
            if let Some(l) = level {
                put("level", l.to_string());
            }
            (Command::Ci, common)
        }
        Cmd::Simulate { common, profile, experiments } => {
            if let Some(p) = profile {
                put("profile", p);
            }
            if !experiments.is_empty() {
                put("experiments", experiments.join(","));
            }
            (Command::Simulate, common)
        }
        Cmd::Elicit { common, family, k, p } => {
            if let Some(f) = family {
                put("family", f);
            }
            if let Some(k) = k {
                put("k", k.to_string());
            }
            if let Some(p) = p {
                put("p", p.to_string());
            }
            (Command::Elicit, common)
        }
        Cmd::Generate { common, generator, n } => {
            if let Some(g) = generator {
                put("generator", g);
            }
            if let Some(n) = n {
                put("n", n.to_string());
            }
            (Command::Generate, common)
        }
    };
    let file_text = match &common.config {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?),
        None => None,
    };
    let mut overrides: Vec<(String, String)> = common.set.iter().map(|s| parse_override(s)).collect::<Result<_, _>>()?;
    if let Some(p) = &common.input {
        overrides.push(("input".into(), p.display().to_string()));
    }
    if let Some(p) = &common.output {
        overrides.push(("output".into(), p.display().to_string()));
    }
    if let Some(s) = common.seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    if let Some(t) = common.threads {
        overrides.push(("threads".into(), t.to_string()));
    }
    if !common.tau.is_empty() {
        overrides.push(("taus".into(), join(&common.tau)));
    }
    overrides.extend(extra);
    RunConfig::build(command, file_text.as_deref(), &overrides)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = prepare(cli.command).and_then(|cfg| run(&cfg));
    match result {
        Ok(outcome) => {
            for note in &outcome.notes {
                eprintln!("{note}");
            }
            for path in &outcome.written {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("dirquant: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
