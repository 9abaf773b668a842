use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Result;
use mcr_core::diagnostics::{
    draw_traces, effective_sample_size, forecast_study as run_forecast_study, mean_of_draws, posterior_quantiles,
    summarize, sum_of_squares_decomposition, Decomposition, FitMethod, ForecastComparison, OrdinalScoring,
    ParameterSummary, TermShares,
};
use mcr_core::gibbs::{fit_bayes as run_gibbs, ChainConfig, ChainInit, InitialStateModel, ModelSpec, OrdinalOptions};
use mcr_core::io::{
    read_params, read_prior, read_samples, write_attributes_csv, write_json_value, write_latent_csv, write_network_csv,
    write_params, write_samples,
};
use mcr_core::latent::{align_latent_draws, posterior_mean_latent};
use mcr_core::simulate::{simulate as run_simulation, SimConfig};
use mcr_core::{
    fit_mle as run_mle, AttributeScale, CovariateSpec, Direction, Layout, McrError, McrParams, MleOptions, ModelMode,
    NetworkScale, PriorSpec, Terms,
};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::{check_data_files, load_dataset, ordinal_method, resolve_mode, Problems};
use crate::{
    AttributeScaleArg, DiagnoseArgs, FitBayesArgs, FitMleArgs, ForecastArgs, FormatArg, InitArg, MethodArg, ModelArgs,
    NetworkScaleArg, SamplerArgs, ScoringArg, SimulateArgs,
};

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn check_cuts(flag: &str, cuts: &[f64], problems: &mut Problems) {
    if cuts.is_empty() || cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[0] >= w[1]) {
        problems.push(format!("{flag} must be finite and strictly increasing"));
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|source| McrError::Io { path: path.display().to_string(), source })?,
        None => print!("{text}"),
    }
    Ok(())
}

/// A stable process: moderate autoregression and homophily, contagion
/// scaled down by the number of neighbours.
fn default_params(layout: &Layout) -> McrParams {
    let p = layout.p;
    let mut params = McrParams::zeros(layout);
    params.alpha1 = 0.5;
    if let Some(a2) = params.alpha2.as_mut() {
        *a2 = 0.2;
    }
    let m = layout.m.max(2) as f64;
    params.h = DMatrix::identity(p, p) * 0.1;
    params.a = DMatrix::identity(p, p) * 0.5;
    params.c1 = DMatrix::identity(p, p) * (0.1 / (m - 1.0));
    if let Some(c2) = params.c2.as_mut() {
        *c2 = DMatrix::identity(p, p) * (0.05 / (m - 1.0));
    }
    params
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut problems = Problems::default();
    if a.m < 2 {
        problems.push("--m must be at least 2");
    }
    if a.n < 1 {
        problems.push("--n must be at least 1");
    }
    if let Some(path) = &a.params {
        if !path.is_file() {
            problems.push(format!("parameter file {} does not exist", path.display()));
        }
    }
    if a.network_scale == NetworkScaleArg::Ordinal {
        check_cuts("--network-cuts", &a.network_cuts, &mut problems);
    }
    if a.attribute_scale == AttributeScaleArg::Ordinal {
        check_cuts("--attribute-cuts", &a.attribute_cuts, &mut problems);
    }
    problems.finish()?;

    let params = a.params.as_deref().map(read_params).transpose()?;
    let p = params.as_ref().map_or(a.p, McrParams::p);
    let mut problems = Problems::default();
    if params.is_some() && a.p != 0 && a.p != p {
        problems.push(format!("--p {} disagrees with the parameter file (p = {p})", a.p));
    }
    if a.attribute_scale != AttributeScaleArg::Gaussian && p == 0 {
        problems.push("ordinal or latent attributes need p > 0");
    }
    problems.finish()?;

    let mode = ModelMode {
        direction: if a.directed { Direction::Directed } else { Direction::Undirected },
        network_scale: match a.network_scale {
            NetworkScaleArg::Gaussian => NetworkScale::Gaussian,
            NetworkScaleArg::Ordinal => NetworkScale::Ordinal,
        },
        attribute_scale: match a.attribute_scale {
            AttributeScaleArg::Gaussian => AttributeScale::Gaussian,
            AttributeScaleArg::Ordinal => AttributeScale::Ordinal,
            AttributeScaleArg::Latent => AttributeScale::Latent,
        },
    };
    let mut config = SimConfig::new(a.m, a.n + 1, mode);
    config.seed = a.seed;
    config.burn_in = a.burn_in;
    if a.shared_intercepts {
        config.covariates = CovariateSpec::intercepts(a.m);
    }
    config.network_cuts = a.network_cuts.clone();
    if mode.attribute_scale == AttributeScale::Ordinal {
        config.attribute_cuts = vec![a.attribute_cuts.clone(); p];
    }
    let params = params.unwrap_or_else(|| default_params(&config.layout(p)));
    let sim = run_simulation(&params, &config)?;

    let mut written = Vec::new();
    let network_path = with_suffix(&a.out_prefix, "_network.csv");
    write_network_csv(&network_path, &sim.observed.network)?;
    written.push(network_path);
    if sim.observed.p() > 0 {
        let path = with_suffix(&a.out_prefix, "_attributes.csv");
        write_attributes_csv(&path, &sim.observed.attributes)?;
        written.push(path);
    }
    if mode.network_scale == NetworkScale::Ordinal {
        let path = with_suffix(&a.out_prefix, "_latent_network.csv");
        write_network_csv(&path, &sim.latent.network)?;
        written.push(path);
    }
    if mode.attribute_scale != AttributeScale::Gaussian {
        let path = with_suffix(&a.out_prefix, "_latent_attributes.csv");
        write_attributes_csv(&path, &sim.latent.attributes)?;
        written.push(path);
    }
    let params_path = with_suffix(&a.out_prefix, "_params.json");
    write_params(&params_path, &params)?;
    written.push(params_path);
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct Coefficient {
    name: String,
    estimate: f64,
    se: f64,
}

#[derive(Serialize)]
struct MleReport {
    m: usize,
    time_points: usize,
    p: usize,
    directed: bool,
    params: McrParams,
    coefficients: Vec<Coefficient>,
    rss_network: f64,
    /// Column-major.
    rss_attributes: Vec<f64>,
    dyad_count: usize,
    node_time_count: usize,
    condition_network: f64,
    condition_attributes: Option<f64>,
}

pub fn fit_mle(a: &FitMleArgs) -> Result<()> {
    let mut problems = Problems::default();
    check_data_files(&a.data, &mut problems);
    if a.network_scale != NetworkScaleArg::Gaussian {
        problems.push("maximum likelihood needs a Gaussian network; use fit-bayes for ordinal relations");
    }
    if a.attribute_scale.is_some_and(|s| s != AttributeScaleArg::Gaussian) || a.latent_dim.is_some() {
        problems.push("maximum likelihood needs observed Gaussian attributes; use fit-bayes for ordinal or latent attributes");
    }
    problems.finish()?;

    let mode = ModelMode::gaussian(if a.data.directed { Direction::Directed } else { Direction::Undirected });
    let panel = load_dataset(&a.data, mode)?;
    let opts = MleOptions { pseudo_inverse: a.pseudo_inverse, ..MleOptions::default() };
    let fit = run_mle(&panel, mode, Terms::default(), &opts)?;

    let beta = fit.beta();
    let mut coefficients: Vec<Coefficient> = fit
        .layout
        .beta_labels()
        .into_iter()
        .enumerate()
        .map(|(k, name)| Coefficient { name, estimate: beta[k], se: fit.se_beta[k] })
        .collect();
    let b = fit.b();
    for (k, label) in fit.layout.b_labels().iter().enumerate() {
        for r in 0..fit.layout.p {
            coefficients.push(Coefficient {
                name: label.replace(":,", &format!("{r},")),
                estimate: b[(r, k)],
                se: fit.se_b[(r, k)],
            });
        }
    }

    let mut text = String::new();
    writeln!(text, "{:<14} {:>12} {:>12}", "coefficient", "estimate", "se")?;
    for c in coefficients.iter().filter(|c| !c.name.starts_with("gamma[") && !c.name.starts_with("Gamma[")) {
        writeln!(text, "{:<14} {:>12.6} {:>12.6}", c.name, c.estimate, c.se)?;
    }
    writeln!(text, "{:<14} {:>12.6}", "sigma2", fit.params.sigma2)?;
    writeln!(text, "condition number (network line): {:.3e}", fit.condition_network)?;
    if let Some(c) = fit.condition_attributes {
        writeln!(text, "condition number (attribute line): {c:.3e}")?;
    }
    print!("{text}");

    let report = MleReport {
        m: panel.m(),
        time_points: panel.times(),
        p: panel.p(),
        directed: a.data.directed,
        params: fit.params.clone(),
        coefficients,
        rss_network: fit.rss_network,
        rss_attributes: fit.rss_attributes.iter().copied().collect(),
        dyad_count: fit.dyad_count,
        node_time_count: fit.node_time_count,
        condition_network: fit.condition_network,
        condition_attributes: fit.condition_attributes,
    };
    if let Some(out) = &a.out {
        write_json_value(out, &report)?;
    }
    if let Some(out) = &a.params_out {
        write_params(out, &fit.params)?;
    }
    Ok(())
}

fn chain_config(s: &SamplerArgs) -> ChainConfig {
    ChainConfig {
        iters: s.iters,
        burn_in: s.burn_in,
        thin: s.thin,
        seed: s.seed,
        chains: s.chains,
        init: match s.init {
            InitArg::Mle => ChainInit::Mle,
            InitArg::PriorMean => ChainInit::PriorMean,
            InitArg::PriorDraw => ChainInit::PriorDraw,
        },
        keep_latent: true,
    }
}

fn model_spec(mode: ModelMode, model: &ModelArgs) -> ModelSpec {
    ModelSpec {
        mode,
        terms: Terms::default(),
        latent_dim: model.latent_dim.unwrap_or(0),
        ordinal: OrdinalOptions {
            network: ordinal_method(model.ordinal_mode),
            attributes: ordinal_method(model.ordinal_mode),
            pin_first_cut: !model.free_first_cut,
            network_levels: model.levels.clone(),
            attribute_levels: model.attribute_levels.clone(),
        },
        initial_state: InitialStateModel {
            network: model.initial_network_regression,
            attributes: model.initial_attribute_regression,
        },
    }
}

/// Shared validation of the data, model and sampler flags of the Bayesian
/// commands.
fn bayes_setup(
    data: &crate::DataArgs,
    model: &ModelArgs,
    sampler: &SamplerArgs,
    problems: &mut Problems,
) -> (ModelMode, ChainConfig) {
    check_data_files(data, problems);
    let mode = resolve_mode(data, model, problems);
    let config = chain_config(sampler);
    problems.extend_from(config.validate().map_err(Into::into));
    if let Some(path) = &sampler.prior {
        if !path.is_file() {
            problems.push(format!("prior file {} does not exist", path.display()));
        }
    }
    (mode, config)
}

fn load_prior(sampler: &SamplerArgs, p: usize) -> Result<PriorSpec> {
    let prior = match &sampler.prior {
        Some(path) => read_prior(path)?,
        None => PriorSpec::default(),
    };
    prior.validate(p)?;
    Ok(prior)
}

fn summary_table(rows: &[ParameterSummary]) -> Result<String> {
    let mut text = String::new();
    writeln!(text, "{:<22} {:>10} {:>10} {:>10} {:>10} {:>10} {:>8}", "parameter", "mean", "sd", "2.5%", "50%", "97.5%", "ess")?;
    for r in rows {
        writeln!(
            text,
            "{:<22} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>8.0}",
            r.name, r.mean, r.sd, r.q025, r.q500, r.q975, r.ess
        )?;
    }
    Ok(text)
}

pub fn fit_bayes(a: &FitBayesArgs) -> Result<()> {
    let mut problems = Problems::default();
    let (mode, config) = bayes_setup(&a.data, &a.model, &a.sampler, &mut problems);
    if a.export_latent.is_some() && mode.attribute_scale == AttributeScale::Gaussian {
        problems.push("--export-latent needs latent or ordinal attributes");
    }
    problems.finish()?;

    let panel = load_dataset(&a.data, mode)?;
    let spec = model_spec(mode, &a.model);
    let p = if mode.attribute_scale == AttributeScale::Latent { spec.latent_dim } else { panel.p() };
    let prior = load_prior(&a.sampler, p)?;
    let mut samples = run_gibbs(&panel, &spec, &prior, &config)?;
    if mode.attribute_scale == AttributeScale::Latent {
        align_latent_draws(&mut samples.draws);
    }
    write_samples(&a.out, &samples)?;
    if let Some(path) = &a.export_latent {
        let mean = posterior_mean_latent(&samples.draws)
            .ok_or_else(|| McrError::InsufficientData("no latent trajectories were retained".into()))?;
        write_latent_csv(path, &mean)?;
    }
    let rows = summarize(&samples, false)?;
    eprint!("{}", summary_table(&rows)?);
    if let Some(path) = &a.summary {
        write_json_value(path, &rows)?;
    }
    eprintln!("wrote {} draws to {}", samples.draws.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct TraceReport {
    name: String,
    mean: f64,
    sd: f64,
    ess: f64,
    quantiles: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
}

#[derive(Serialize)]
struct DiagnoseReport {
    draws: usize,
    parameters: Vec<TraceReport>,
    average_ess: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    decomposition: Option<Decomposition>,
}

fn shares_line(label: &str, s: &TermShares) -> String {
    format!(
        "{label:<12} intercept {:>6.1}%  autoregression {:>6.1}%  interaction {:>6.1}%  error {:>6.1}%\n",
        s.intercept, s.autoregression, s.interaction, s.error
    )
}

pub fn diagnose(a: &DiagnoseArgs) -> Result<()> {
    let mut problems = Problems::default();
    if !a.samples.is_file() {
        problems.push(format!("samples file {} does not exist", a.samples.display()));
    }
    if a.quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
        problems.push("--quantiles must lie in [0, 1]");
    }
    if a.data.network.is_some() {
        check_data_files(&a.data, &mut problems);
    } else if a.data.attributes.is_some() || a.params.is_some() {
        problems.push("the decomposition needs --network");
    }
    if let Some(path) = &a.params {
        if !path.is_file() {
            problems.push(format!("parameter file {} does not exist", path.display()));
        }
    }
    problems.finish()?;

    let draws = read_samples(&a.samples)?;
    let traces = draw_traces(&draws, a.intercepts)?;
    let mut parameters = Vec::with_capacity(traces.len());
    for (name, x) in &traces {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
        let ess = effective_sample_size(x);
        let q = posterior_quantiles(x, &a.quantiles)?;
        parameters.push(TraceReport {
            name: name.clone(),
            mean,
            sd,
            ess: ess.ess,
            quantiles: a.quantiles.iter().copied().zip(q).collect(),
            warning: ess.warning,
        });
    }
    let average_ess = parameters.iter().map(|p| p.ess).sum::<f64>() / parameters.len().max(1) as f64;

    let decomposition = match &a.data.network {
        Some(_) => {
            let mode = ModelMode::gaussian(if a.data.directed { Direction::Directed } else { Direction::Undirected });
            let panel = load_dataset(&a.data, mode)?;
            let params = match &a.params {
                Some(path) => read_params(path)?,
                None => mean_of_draws(&draws).ok_or_else(|| McrError::InsufficientData("no draws".into()))?,
            };
            let layout = Layout::new(mode, Terms::default(), &panel);
            params.validate(&layout)?;
            Some(sum_of_squares_decomposition(&panel, &params))
        }
        None => None,
    };

    let report = DiagnoseReport { draws: draws.len(), parameters, average_ess, decomposition };
    let text = match a.format {
        FormatArg::Json => {
            let mut s = serde_json::to_string_pretty(&report)?;
            s.push('\n');
            s
        }
        FormatArg::Text => {
            let mut s = String::new();
            write!(s, "{:<22} {:>10} {:>10} {:>8}", "parameter", "mean", "sd", "ess")?;
            for q in &a.quantiles {
                write!(s, " {:>10}", format!("{}%", q * 100.0))?;
            }
            s.push('\n');
            for p in &report.parameters {
                write!(s, "{:<22} {:>10.4} {:>10.4} {:>8.0}", p.name, p.mean, p.sd, p.ess)?;
                for (_, v) in &p.quantiles {
                    write!(s, " {v:>10.4}")?;
                }
                s.push('\n');
            }
            writeln!(s, "draws: {}, average ESS: {:.0}", report.draws, report.average_ess)?;
            for p in report.parameters.iter().filter(|p| p.warning.is_some()) {
                writeln!(s, "warning ({}): {}", p.name, p.warning.as_deref().unwrap_or_default())?;
            }
            if let Some(d) = &report.decomposition {
                s.push_str("sum-of-squares decomposition\n");
                s.push_str(&shares_line("network", &d.network));
                if let Some(att) = &d.attributes {
                    s.push_str(&shares_line("attributes", att));
                }
            }
            s
        }
    };
    emit(&text, a.out.as_deref())
}

fn forecast_text(c: &ForecastComparison) -> Result<String> {
    let mut s = String::new();
    let with_attributes = c.average.iter().any(|r| r.attribute_pess.is_some());
    writeln!(s, "{:>6} {:<18} {:>14} {:>14}", "time", "submodel", "network PESS", "attribute PESS")?;
    for r in &c.per_time {
        let att = r.attribute_pess.map_or("-".to_string(), |v| format!("{v:.4}"));
        writeln!(s, "{:>6} {:<18} {:>14.4} {:>14}", r.time, r.submodel, r.network_pess, att)?;
    }
    s.push_str("average over holdouts (change relative to the full model)\n");
    for r in &c.average {
        write!(s, "{:<18} {:>14.4} {:>9}", r.submodel, r.network_pess, r.network_relative)?;
        if with_attributes {
            let att = r.attribute_pess.map_or("-".to_string(), |v| format!("{v:.4}"));
            write!(s, " {:>14} {:>9}", att, r.attribute_relative.as_deref().unwrap_or("-"))?;
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn forecast_study(a: &ForecastArgs) -> Result<()> {
    let mut problems = Problems::default();
    let (mode, config) = bayes_setup(&a.data, &a.model, &a.sampler, &mut problems);
    if a.method == MethodArg::Mle && !mode.is_fully_observed_gaussian() {
        problems.push("--method mle needs Gaussian scales; use --method bayes for ordinal or latent data");
    }
    problems.finish()?;

    let panel = load_dataset(&a.data, mode)?;
    let spec = model_spec(mode, &a.model);
    let method = match a.method {
        MethodArg::Mle => FitMethod::Mle(MleOptions::default()),
        MethodArg::Bayes => {
            let p = if mode.attribute_scale == AttributeScale::Latent { spec.latent_dim } else { panel.p() };
            FitMethod::Bayes { prior: load_prior(&a.sampler, p)?, config }
        }
    };
    let scoring = match a.scoring {
        ScoringArg::Latent => OrdinalScoring::Latent,
        ScoringArg::Brier => OrdinalScoring::Brier,
    };
    let comparison = run_forecast_study(&panel, &spec, &a.holdouts, &method, scoring)?;
    let text = match a.format {
        FormatArg::Json => {
            let mut s = serde_json::to_string_pretty(&comparison)?;
            s.push('\n');
            s
        }
        FormatArg::Text => forecast_text(&comparison)?,
    };
    emit(&text, a.out.as_deref())
}
