//! Subcommand execution.

use std::path::PathBuf;

use dirquant::ald::{loglik_unconditional, HyperplaneParams};
use dirquant::contours::{tau_contour, tube_slice, ContourPolygon, ContourSettings};
use dirquant::geometry::{orthonormal_complement, project, Dataset, Direction};
use dirquant::inference::{
    asymptotic_ci, chain_diagnostics, naive_interval, posterior_mean, subgradient_diagnostics, CiResult,
};
use dirquant::optimize::frequentist_fit;
use dirquant::priors::{spherical_prior, ImpliedSlopePrior};
use dirquant::samplers::{
    gibbs_unconditional, metropolis_hastings, Chain, DesignKind, KernelKind, KernelSpec, McmcSettings, PriorSpec,
};
use dirquant::seed::derive_seed;
use dirquant::simlab::{
    conditional_experiment, coverage_experiment, dgp_sample, rmse_experiment, star_like, subgradient_experiment,
    DgpId, DgpSpec, ExperimentConfig, ExperimentTable, OracleCache,
};
use serde_json::{json, Value};

use crate::config::{Command, Experiment, Profile, RunConfig, SamplerChoice};
use crate::error::{CliError, CliResult};
use crate::ingest::{ingest_csv, ColumnRoles, Ingested};
use crate::output::{fmt_num, ArtifactWriter, Provenance};

const ORACLE_TAG: u64 = 0x0AC;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub written: Vec<PathBuf>,
    /// One-line notes for the terminal.
    pub notes: Vec<String>,
}

/// Execute a validated configuration, capping parallelism at `threads`.
pub fn run(cfg: &RunConfig) -> CliResult<RunOutcome> {
    match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
            .install(|| dispatch(cfg)),
        None => dispatch(cfg),
    }
}

fn dispatch(cfg: &RunConfig) -> CliResult<RunOutcome> {
    let provenance = Provenance::new(cfg.command.as_str(), cfg.hash(), cfg.seed);
    let mut w = ArtifactWriter::new(&cfg.output, provenance)?;
    let mut notes = Vec::new();
    match cfg.command {
        Command::Fit => fit(cfg, &mut w, &mut notes, false)?,
        Command::Ci => fit(cfg, &mut w, &mut notes, true)?,
        Command::Contour => contour(cfg, &mut w, &mut notes)?,
        Command::Tube => tube(cfg, &mut w, &mut notes)?,
        Command::Simulate => simulate(cfg, &mut w, &mut notes)?,
        Command::Elicit => elicit(cfg, &mut w)?,
        Command::Generate => generate(cfg, &mut w)?,
    }
    Ok(RunOutcome { written: w.finish(), notes })
}

fn load_data(cfg: &RunConfig) -> CliResult<Ingested> {
    let path = cfg.input.as_ref().ok_or_else(|| CliError::Config("no input file".into()))?;
    let roles = ColumnRoles { responses: cfg.responses.clone(), covariates: cfg.covariates.clone() };
    ingest_csv(path, &roles, cfg.jitter, cfg.seed)
}

fn load_prior(cfg: &RunConfig, d: usize) -> CliResult<Option<PriorSpec>> {
    let Some(path) = &cfg.prior_file else { return Ok(None) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("prior file: {e}")))?;
    let inner = value.get("prior").cloned().unwrap_or(value);
    let prior: PriorSpec = serde_json::from_value(inner).map_err(|e| CliError::Config(format!("prior file: {e}")))?;
    if prior.dim() != d {
        return Err(CliError::Config(format!("prior has dimension {}, model needs {d}", prior.dim())));
    }
    Ok(Some(prior))
}

fn mcmc(cfg: &RunConfig, seed: u64) -> McmcSettings {
    let (n_draws, burn_in) = cfg.mcmc_counts();
    McmcSettings { n_draws, burn_in, seed }
}

fn tau_tag(tau: f64) -> String {
    format!("tau{}", fmt_num(tau))
}

fn fit(cfg: &RunConfig, w: &mut ArtifactWriter, notes: &mut Vec<String>, ci_only: bool) -> CliResult<()> {
    let ing = load_data(cfg)?;
    let data = &ing.data;
    let (k, p) = (data.k(), data.p());
    if ci_only && p > 0 {
        return Err(CliError::Config("asymptotic intervals are available for location models only (no covariates)".into()));
    }
    if cfg.direction.len() != k {
        return Err(CliError::Config(format!("direction has {} entries, data have {k} responses", cfg.direction.len())));
    }
    let prior = match load_prior(cfg, k + p)? {
        Some(prior) => prior,
        None => PriorSpec::weak(k + p, cfg.prior_variance)?,
    };
    for (ti, &tau) in cfg.taus.iter().enumerate() {
        let dir = Direction::normalized(cfg.direction.clone(), tau)?;
        let basis = orthonormal_complement(dir.u(), cfg.gamma_convention())?;
        let settings = mcmc(cfg, derive_seed(cfg.seed, &[ti as u64]));
        let chain = sample(cfg, data, &dir, &basis, &prior, &settings)?;
        let theta = HyperplaneParams::from_slice(&posterior_mean(&chain)?, k)?;
        let naive = naive_interval(&chain, cfg.level)?;
        let asym = if p == 0 { Some(asymptotic_ci(&chain, data, &dir, &basis, cfg.level)?) } else { None };
        let tag = tau_tag(tau);
        if ci_only {
            let asym = asym.expect("location model");
            w.json(&format!("ci_{tag}.json"), json!({"tau": tau, "u": dir.u(), "asymptotic": asym, "naive": naive}))?;
            w.csv(&format!("ci_{tag}.csv"), &ci_csv(&asym, &naive))?;
            notes.push(format!("tau {tau}: {}", ci_line(&asym)));
            continue;
        }
        let subgradient = subgradient_diagnostics(data, &dir, &basis, &theta)?;
        let diagnostics = chain_diagnostics(std::slice::from_ref(&chain)).ok();
        w.csv(&format!("chain_{tag}.csv"), &chain.to_csv())?;
        w.json(&format!("chain_{tag}.json"), json!({"chain": chain.meta(), "config": cfg}))?;
        w.json(
            &format!("summary_{tag}.json"),
            json!({
                "tau": tau,
                "u": dir.u(),
                "gamma": basis.gamma().iter().copied().collect::<Vec<f64>>(),
                "parameters": chain.names(),
                "posterior_mean": theta.to_vec(),
                "asymptotic_ci": asym,
                "naive_interval": naive,
                "subgradient": subgradient,
                "diagnostics": diagnostics,
                "data": ing.report,
            }),
        )?;
        notes.push(format!("tau {tau}: posterior mean {:?}", theta.to_vec()));
    }
    Ok(())
}

fn sample(
    cfg: &RunConfig,
    data: &Dataset,
    dir: &Direction,
    basis: &dirquant::geometry::OrthoBasis,
    prior: &PriorSpec,
    settings: &McmcSettings,
) -> CliResult<Chain> {
    Ok(match cfg.sampler {
        SamplerChoice::Gibbs => gibbs_unconditional(data, dir, basis, prior, settings, None)?,
        SamplerChoice::Metropolis => {
            let k = data.k();
            let init = if data.n() > k + data.p() {
                frequentist_fit(data, dir, basis, None)?.theta
            } else {
                prior.mean().iter().copied().collect()
            };
            let proj = project(data, dir, basis)?;
            let x = data.x().clone();
            let loglik = |t: &[f64]| {
                HyperplaneParams::from_slice(t, k)
                    .and_then(|th| loglik_unconditional(&proj, &x, &th, dir.tau()))
                    .unwrap_or(f64::NEG_INFINITY)
            };
            let names = HyperplaneParams::names(k, data.p());
            metropolis_hastings(loglik, prior, cfg.proposal_scale, settings, &init, names)?
        }
    })
}

fn ci_csv(asym: &CiResult, naive: &CiResult) -> String {
    let mut out = String::from("parameter,estimate,std_error,lower,upper,naive_lower,naive_upper\n");
    for j in 0..asym.names.len() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            asym.names[j], asym.estimate[j], asym.std_error[j], asym.lower[j], asym.upper[j], naive.lower[j], naive.upper[j]
        ));
    }
    out
}

fn ci_line(ci: &CiResult) -> String {
    (0..ci.names.len())
        .map(|j| format!("{} [{:.4}, {:.4}]", ci.names[j], ci.lower[j], ci.upper[j]))
        .collect::<Vec<_>>()
        .join(", ")
}

fn contour_settings(cfg: &RunConfig, d: usize, seed: u64) -> CliResult<ContourSettings> {
    Ok(ContourSettings {
        estimator: cfg.estimator,
        mcmc: mcmc(cfg, seed),
        prior: load_prior(cfg, d)?,
        prior_variance: cfg.prior_variance,
        convention: cfg.gamma_convention(),
        simultaneous: cfg.simultaneous,
    })
}

fn feature(polygon: &ContourPolygon, extra: Value) -> Value {
    let mut f = polygon.to_geojson();
    if let (Some(props), Value::Object(extra)) = (f.get_mut("properties").and_then(Value::as_object_mut), extra) {
        props.extend(extra);
    }
    f
}

/// Regions ordered by depth `min(τ, 1−τ)`; deeper ones must sit inside.
fn nested(regions: &[(f64, ContourPolygon)]) -> bool {
    let mut sorted: Vec<&(f64, ContourPolygon)> = regions.iter().collect();
    sorted.sort_by(|a, b| a.0.min(1.0 - a.0).total_cmp(&b.0.min(1.0 - b.0)));
    sorted.windows(2).all(|w| w[1].1.is_empty() || w[1].1.is_inside(&w[0].1, 1e-9))
}

fn contour(cfg: &RunConfig, w: &mut ArtifactWriter, notes: &mut Vec<String>) -> CliResult<()> {
    let ing = load_data(cfg)?;
    let data = &ing.data;
    if data.p() > 0 {
        return Err(CliError::Config("contour needs a location model; use `tube` with covariates".into()));
    }
    let mut regions = Vec::new();
    for (ti, &tau) in cfg.taus.iter().enumerate() {
        let settings = contour_settings(cfg, data.k(), derive_seed(cfg.seed, &[ti as u64]))?;
        let polygon = tau_contour(data, tau, cfg.directions, &settings)?;
        w.csv(&format!("contour_{}.csv", tau_tag(tau)), &polygon.to_csv())?;
        notes.push(format!("tau {tau}: {} vertices, area {:.6}", polygon.vertices.len(), polygon.area()));
        regions.push((tau, polygon));
    }
    let is_nested = nested(&regions);
    let features: Vec<Value> = regions.iter().map(|(tau, poly)| feature(poly, json!({"tau": tau}))).collect();
    w.json(
        "contours.json",
        json!({"type": "FeatureCollection", "nested": is_nested, "features": features, "data": ing.report}),
    )?;
    if !is_nested {
        notes.push("warning: regions are not nested".into());
    }
    Ok(())
}

fn tube(cfg: &RunConfig, w: &mut ArtifactWriter, notes: &mut Vec<String>) -> CliResult<()> {
    let ing = load_data(cfg)?;
    let data = &ing.data;
    let p = data.p();
    if p == 0 {
        return Err(CliError::Config("tube needs at least one covariate column".into()));
    }
    let slices: Vec<Vec<f64>> = if cfg.x0.is_empty() {
        vec![(0..p).map(|j| median(data.x().column(j).iter().copied().collect())).collect()]
    } else if p == 1 {
        cfg.x0.iter().map(|v| vec![*v]).collect()
    } else if cfg.x0.len() == p {
        vec![cfg.x0.clone()]
    } else {
        return Err(CliError::Config(format!("x0 needs {p} entries for {p} covariates")));
    };
    let kernel = match (cfg.kernel, cfg.bandwidth) {
        (KernelKind::Flat, _) => KernelSpec::flat(),
        (KernelKind::Gaussian, Some(h)) => KernelSpec::gaussian(h)?,
        (KernelKind::Gaussian, None) => KernelSpec::rule_of_thumb(data.x())?,
    };
    let q = match cfg.design {
        DesignKind::LocalConstant => 2,
        DesignKind::LocalBilinear => 2 * (p + 1),
    };
    let mut features = Vec::new();
    for (ti, &tau) in cfg.taus.iter().enumerate() {
        for (si, x0) in slices.iter().enumerate() {
            let settings = contour_settings(cfg, q, derive_seed(cfg.seed, &[ti as u64, si as u64]))?;
            let polygon = tube_slice(data, tau, x0, &kernel, cfg.design, cfg.directions, &settings)?;
            let x_tag = x0.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join("_");
            w.csv(&format!("tube_{}_x{x_tag}.csv", tau_tag(tau)), &polygon.to_csv())?;
            notes.push(format!("tau {tau}, x0 {x0:?}: centroid {:?}", polygon.centroid()));
            features.push(feature(&polygon, json!({"tau": tau, "x0": x0, "centroid": polygon.centroid()})));
        }
    }
    w.json(
        "tube.json",
        json!({"type": "FeatureCollection", "kernel": kernel, "design": cfg.design, "features": features, "data": ing.report}),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn experiment_config(cfg: &RunConfig) -> CliResult<ExperimentConfig> {
    let mut e = match cfg.profile {
        Profile::Desk => ExperimentConfig::desk(),
        Profile::Full => ExperimentConfig::full(),
    };
    let (n_draws, burn_in) = cfg.mcmc_counts();
    e.mcmc = McmcSettings { n_draws, burn_in, seed: cfg.seed };
    e.taus = cfg.taus.clone();
    e.prior_variance = cfg.prior_variance;
    e.convention = cfg.gamma_convention();
    e.level = cfg.level;
    e.design = cfg.design;
    e.conditional_response = cfg.conditional_response;
    if let Some(r) = cfg.replications {
        e.replications = r;
    }
    if let Some(ns) = &cfg.sample_sizes {
        e.sample_sizes = ns.clone();
    }
    if let Some(ids) = &cfg.dgps {
        e.dgps = ids.iter().map(|&i| DgpId::try_from(i)).collect::<dirquant::Result<_>>()?;
    }
    if let Some(m) = cfg.oracle_mc_size {
        e.oracle_mc_size = m;
    }
    if !cfg.x0.is_empty() {
        e.x0 = cfg.x0[0];
    }
    e.validate()?;
    Ok(e)
}

fn simulate(cfg: &RunConfig, w: &mut ArtifactWriter, notes: &mut Vec<String>) -> CliResult<()> {
    let e = experiment_config(cfg)?;
    let oracles = OracleCache::new(e.oracle_mc_size, derive_seed(cfg.seed, &[ORACLE_TAG]));
    let mut summary = Vec::new();
    for exp in &cfg.experiments {
        let table: ExperimentTable = match exp {
            Experiment::Rmse => rmse_experiment(&e, &oracles)?,
            Experiment::Coverage => coverage_experiment(&e, &oracles)?,
            Experiment::Subgradient => subgradient_experiment(&e)?,
            Experiment::Conditional => conditional_experiment(&e, &oracles)?,
        };
        let name = exp.as_str();
        w.csv(&format!("{name}.csv"), &table.to_csv())?;
        for (di, u) in e.directions.iter().enumerate() {
            for &tau in &e.taus {
                w.csv(&format!("{name}_layout_u{}_{}.csv", di + 1, tau_tag(tau)), &table.to_layout_csv(*u, tau))?;
            }
        }
        let failed: usize = table.rows.iter().map(|r| r.failed).max().unwrap_or(0);
        if failed > 0 {
            notes.push(format!("{name}: some cells recorded failed replications"));
        }
        summary.push(json!({"experiment": name, "rows": table.rows.len(), "max_failed_per_cell": failed}));
    }
    w.json("simulate.json", json!({"experiment_config": e, "config": cfg, "tables": summary}))
}

fn elicit(cfg: &RunConfig, w: &mut ArtifactWriter) -> CliResult<()> {
    for &tau in &cfg.taus {
        let sp = spherical_prior(tau, cfg.family, cfg.k, cfg.p, cfg.alpha_variance, cfg.beta_variance)?;
        let implied = if cfg.k == 2 && cfg.direction.len() == 2 {
            let dir = Direction::normalized(cfg.direction.clone(), tau)?;
            let basis = orthonormal_complement(dir.u(), cfg.gamma_convention())?;
            ImpliedSlopePrior::new(0.0, cfg.beta_variance.sqrt(), [dir.u()[0], dir.u()[1]], &basis)
                .ok()
                .map(|isp| {
                    json!({
                        "u": dir.u(),
                        "law": isp,
                        "modes": isp.modes(),
                        "mode_height_ratio": isp.mode_height_ratio(),
                        "mode_height_ratio_numeric": isp.mode_height_ratio_numeric(),
                    })
                })
        } else {
            None
        };
        w.json(
            &format!("prior_{}.json", tau_tag(tau)),
            json!({"tau": tau, "family": sp.family, "radius": sp.radius, "prior": sp.prior, "implied_slope": implied}),
        )?;
    }
    Ok(())
}

fn generate(cfg: &RunConfig, w: &mut ArtifactWriter) -> CliResult<()> {
    let (data, header) = match cfg.generator.as_str() {
        "star" => (star_like(cfg.n, cfg.seed)?, vec!["reading", "math", "experience"]),
        id => {
            let id: u8 = id.parse().map_err(|_| CliError::Config(format!("unknown generator `{id}`")))?;
            let dgp = DgpId::try_from(id)?;
            let header = if dgp.p() > 0 { vec!["y1", "y2", "x1"] } else { vec!["y1", "y2"] };
            (dgp_sample(&DgpSpec { id: dgp, n: cfg.n, seed: cfg.seed })?, header)
        }
    };
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..data.n() {
        let row: Vec<String> = data.y().row(i).iter().chain(data.x().row(i).iter()).map(|v| fmt_num(*v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    w.csv("data.csv", &out)
}
