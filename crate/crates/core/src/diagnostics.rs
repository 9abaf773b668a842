//! Posterior summaries, variance decomposition and forecast comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::truncated_std_moments;
use crate::error::{McrError, Result};
use crate::gibbs::{fit_bayes, ChainConfig, Draw, ModelSpec, PosteriorSamples, PriorSpec};
use crate::mle::{fit_mle, MleOptions};
use crate::model::{
    bilinear, contagion_sums, AttributeScale, AttributeSeries, McrParams, NetworkScale, NetworkSeries,
    Panel, Terms,
};
use crate::ordinal::{categorize, category_probabilities};
use crate::simulate::forecast_one_step;

/// Effective sample size with an optional warning.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ess {
    pub ess: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Effective sample size by Geyer's initial positive sequence: sums of
/// adjacent autocorrelation pairs are accumulated while they stay
/// positive, and `ESS = N / (−1 + 2 Σ Γ_k)`, capped at `N`.
pub fn effective_sample_size(x: &[f64]) -> Ess {
    let n = x.len();
    if n < 4 {
        return Ess {
            ess: n as f64,
            warning: Some(format!("only {n} draws; ESS not estimated")),
        };
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let autocov = |lag: usize| dev[..n - lag].iter().zip(&dev[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let gamma0 = autocov(0);
    // relative to the scale of the chain so that constant chains with
    // rounding noise are still detected
    let scale = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(gamma0 > (1e-13 * scale).powi(2)) {
        return Ess {
            ess: n as f64,
            warning: Some("constant chain; ESS set to the number of draws".into()),
        };
    }
    let mut sum = 0.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = (autocov(2 * k) + autocov(2 * k + 1)) / gamma0;
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        k += 1;
    }
    let tau = (-1.0 + 2.0 * sum).max(1.0);
    Ess {
        ess: n as f64 / tau,
        warning: (n < 100).then(|| format!("only {n} draws; ESS is unreliable")),
    }
}

/// Sample quantiles by linear interpolation between order statistics
/// (`h = (N − 1) p`, the common "type 7" definition).
pub fn posterior_quantiles(x: &[f64], probs: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(McrError::InsufficientData("no draws".into()));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    probs
        .iter()
        .map(|&p| {
            if !(0.0..=1.0).contains(&p) {
                return Err(McrError::Invalid(vec![format!("quantile level {p} outside [0, 1]")]));
            }
            let h = (sorted.len() - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(sorted.len() - 1);
            Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
        })
        .collect()
}

/// Per-parameter posterior summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
    pub ess: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

pub fn summarize_trace(name: &str, x: &[f64]) -> Result<ParameterSummary> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let q = posterior_quantiles(x, &[0.025, 0.5, 0.975])?;
    let ess = effective_sample_size(x);
    Ok(ParameterSummary {
        name: name.to_string(),
        mean,
        sd: var.sqrt(),
        q025: q[0],
        q500: q[1],
        q975: q[2],
        ess: ess.ess,
        warning: ess.warning,
    })
}

/// Summaries of every scalar trace. Intercept blocks (`gamma`, `Gamma`)
/// are skipped unless `intercepts` is set.
pub fn summarize(samples: &PosteriorSamples, intercepts: bool) -> Result<Vec<ParameterSummary>> {
    samples
        .scalar_traces()
        .iter()
        .filter(|(name, _)| intercepts || !(name.starts_with("gamma[") || name.starts_with("Gamma[")))
        .map(|(name, x)| summarize_trace(name, x))
        .collect()
}

/// Percentage contributions of the four terms of each model line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub network: TermShares,
    /// Absent without attributes.
    pub attributes: Option<TermShares>,
}

/// For the network line `dynamic` is the autoregressive part
/// (`α₁y_ij + α₂y_ji`) and `interaction` the homophily term; for the
/// attribute line they are `Ax_i` and the combined contagion term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermShares {
    pub intercept: f64,
    pub autoregression: f64,
    pub interaction: f64,
    pub error: f64,
}

impl TermShares {
    fn from_sums(ss: [f64; 4]) -> Option<Self> {
        let total: f64 = ss.iter().sum();
        (total > 0.0).then(|| TermShares {
            intercept: 100.0 * ss[0] / total,
            autoregression: 100.0 * ss[1] / total,
            interaction: 100.0 * ss[2] / total,
            error: 100.0 * ss[3] / total,
        })
    }

    fn average(shares: &[TermShares]) -> Option<Self> {
        let n = shares.len() as f64;
        (!shares.is_empty()).then(|| TermShares {
            intercept: shares.iter().map(|s| s.intercept).sum::<f64>() / n,
            autoregression: shares.iter().map(|s| s.autoregression).sum::<f64>() / n,
            interaction: shares.iter().map(|s| s.interaction).sum::<f64>() / n,
            error: shares.iter().map(|s| s.error).sum::<f64>() / n,
        })
    }

    pub fn total(&self) -> f64 {
        self.intercept + self.autoregression + self.interaction + self.error
    }
}

/// Splits each response into intercept, autoregressive, interaction and
/// residual parts and reports each part's share of the raw (uncentered)
/// sum of squares. Shares are computed per time point and averaged over
/// time points.
pub fn sum_of_squares_decomposition(panel: &Panel, params: &McrParams) -> Decomposition {
    let m = panel.m();
    let p = panel.p();
    let net = &panel.network;
    let directed = net.directed();
    let mut net_shares = Vec::new();
    let mut att_shares = Vec::new();
    let mut send = vec![0.0; p];
    let mut recv = vec![0.0; p];
    let mut cov = vec![0.0; p];
    for t in 1..panel.times() {
        let mut ss = [0.0; 4];
        for (i, j) in net.dyads() {
            if !(net.is_observed(t, i, j) && net.is_observed(t - 1, i, j) && net.is_observed(t - 1, j, i)) {
                continue;
            }
            let intercept = panel.covariates.dyad_dot(m, directed, i, j, params.gamma.as_slice());
            let ar = params.alpha1 * net.get(t - 1, i, j) + params.alpha2.map_or(0.0, |a2| a2 * net.get(t - 1, j, i));
            let hom = bilinear(panel.attributes.node(t - 1, i), &params.h, panel.attributes.node(t - 1, j));
            let err = net.get(t, i, j) - intercept - ar - hom;
            for (s, v) in ss.iter_mut().zip([intercept, ar, hom, err]) {
                *s += v * v;
            }
        }
        net_shares.extend(TermShares::from_sums(ss));

        if p > 0 {
            let mut ss = [0.0; 4];
            for i in 0..m {
                panel.covariates.node_term_into(i, &params.theta_coef, &mut cov);
                contagion_sums(panel, i, t - 1, &mut send, &mut recv);
                let xi = panel.attributes.node(t - 1, i);
                for k in 0..p {
                    let x = panel.attributes.get(t, i, k);
                    if x.is_nan() {
                        continue;
                    }
                    let ar: f64 = (0..p).map(|l| params.a[(k, l)] * xi[l]).sum();
                    let mut con: f64 = (0..p).map(|l| params.c1[(k, l)] * send[l]).sum();
                    if let Some(c2) = &params.c2 {
                        con += (0..p).map(|l| c2[(k, l)] * recv[l]).sum::<f64>();
                    }
                    let err = x - cov[k] - ar - con;
                    for (s, v) in ss.iter_mut().zip([cov[k], ar, con, err]) {
                        *s += v * v;
                    }
                }
            }
            att_shares.extend(TermShares::from_sums(ss));
        }
    }
    let zero = TermShares { intercept: 0.0, autoregression: 0.0, interaction: 0.0, error: 0.0 };
    Decomposition {
        network: TermShares::average(&net_shares).unwrap_or(zero),
        attributes: (p > 0).then(|| TermShares::average(&att_shares).unwrap_or(zero)),
    }
}

fn push_matrix(out: &mut Vec<(String, f64)>, name: &str, m: &nalgebra::DMatrix<f64>) {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            out.push((format!("{name}[{r},{c}]"), m[(r, c)]));
        }
    }
}

/// Named scalar values of one draw, matrices column-major. Intercept
/// blocks are included only when `intercepts` is set.
pub fn draw_scalars(d: &Draw, intercepts: bool) -> Vec<(String, f64)> {
    let p = &d.params;
    let mut out = Vec::new();
    if intercepts {
        out.extend(p.gamma.iter().enumerate().map(|(k, v)| (format!("gamma[{k}]"), *v)));
        push_matrix(&mut out, "Gamma", &p.theta_coef);
    }
    out.push(("alpha1".into(), p.alpha1));
    if let Some(a2) = p.alpha2 {
        out.push(("alpha2".into(), a2));
    }
    push_matrix(&mut out, "H", &p.h);
    push_matrix(&mut out, "A", &p.a);
    push_matrix(&mut out, "C1", &p.c1);
    if let Some(c2) = &p.c2 {
        push_matrix(&mut out, "C2", c2);
    }
    out.push(("sigma2".into(), p.sigma2));
    push_matrix(&mut out, "Sigma", &p.sigma);
    if let Some(cuts) = &d.network_cuts {
        out.extend(cuts.iter().enumerate().map(|(k, v)| (format!("cut[{k}]"), *v)));
    }
    if let Some(cuts) = &d.attribute_cuts {
        for (k, c) in cuts.iter().enumerate() {
            out.extend(c.iter().enumerate().map(|(s, v)| (format!("attribute_cut[{k}][{s}]"), *v)));
        }
    }
    out
}

/// Scalar traces of a sequence of draws, named as in [`draw_scalars`].
pub fn draw_traces(draws: &[Draw], intercepts: bool) -> Result<Vec<(String, Vec<f64>)>> {
    let Some(first) = draws.first() else {
        return Err(McrError::InsufficientData("no draws".into()));
    };
    let mut traces: Vec<(String, Vec<f64>)> =
        draw_scalars(first, intercepts).into_iter().map(|(name, _)| (name, Vec::with_capacity(draws.len()))).collect();
    for (n, d) in draws.iter().enumerate() {
        let values = draw_scalars(d, intercepts);
        if values.len() != traces.len() {
            return Err(McrError::Dimension(format!("draw {n} has {} values, the first has {}", values.len(), traces.len())));
        }
        for ((_, trace), (_, v)) in traces.iter_mut().zip(values) {
            trace.push(v);
        }
    }
    Ok(traces)
}

/// Entrywise mean of the parameters of the draws.
pub fn mean_of_draws(draws: &[Draw]) -> Option<McrParams> {
    let first = &draws.first()?.params;
    let n = draws.len() as f64;
    let mut mean = first.clone();
    for d in &draws[1..] {
        let p = &d.params;
        mean.gamma += &p.gamma;
        mean.alpha1 += p.alpha1;
        mean.alpha2 = mean.alpha2.zip(p.alpha2).map(|(a, b)| a + b);
        mean.h += &p.h;
        mean.theta_coef += &p.theta_coef;
        mean.a += &p.a;
        mean.c1 += &p.c1;
        mean.c2 = mean.c2.zip(p.c2.as_ref()).map(|(a, b)| a + b);
        mean.sigma2 += p.sigma2;
        mean.sigma += &p.sigma;
    }
    mean.gamma /= n;
    mean.alpha1 /= n;
    mean.alpha2 = mean.alpha2.map(|a| a / n);
    mean.h /= n;
    mean.theta_coef /= n;
    mean.a /= n;
    mean.c1 /= n;
    mean.c2 = mean.c2.map(|c| c / n);
    mean.sigma2 /= n;
    mean.sigma /= n;
    Some(mean)
}

/// The nested submodels compared in the forecast study.
pub fn submodels() -> [(&'static str, Terms); 4] {
    [
        ("full", Terms { autoregression: true, contagion: true }),
        ("no contagion", Terms { autoregression: true, contagion: false }),
        ("no autoregression", Terms { autoregression: false, contagion: true }),
        ("neither", Terms { autoregression: false, contagion: false }),
    ]
}

/// How the forecast study fits each submodel.
#[derive(Debug, Clone)]
pub enum FitMethod {
    Mle(MleOptions),
    Bayes { prior: PriorSpec, config: ChainConfig },
}

/// How ordinal forecasts are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrdinalScoring {
    /// Squared latent-scale residual `(E[z | category] − μ̂)²`, where the
    /// conditional expectation is under the predictive normal.
    #[default]
    Latent,
    /// Brier score of the predictive category probabilities.
    Brier,
}

/// Prediction-error sums of squares of one submodel at one holdout time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoldoutScore {
    pub time: usize,
    pub submodel: String,
    pub network_pess: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attribute_pess: Option<f64>,
}

/// Average error of one submodel over the holdout times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastRow {
    pub submodel: String,
    pub network_pess: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attribute_pess: Option<f64>,
    /// Network error relative to the full model, e.g. `+6.8% worse`.
    pub network_relative: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attribute_relative: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastComparison {
    pub per_time: Vec<HoldoutScore>,
    pub average: Vec<ForecastRow>,
}

impl ForecastComparison {
    pub fn row(&self, submodel: &str) -> Option<&ForecastRow> {
        self.average.iter().find(|r| r.submodel == submodel)
    }
}

/// Formats `value` relative to `reference` as a signed percentage.
pub fn relative_percent(value: f64, reference: f64) -> String {
    let d = 100.0 * (value / reference - 1.0);
    let d = if d.abs() < 0.05 || !d.is_finite() { 0.0 } else { d };
    if d > 0.0 {
        format!("+{d:.1}% worse")
    } else if d < 0.0 {
        format!("{d:.1}% better")
    } else {
        "0.0% (same)".into()
    }
}

/// One posterior draw (or the point estimate) used for forecasting.
struct ForecastSample {
    params: McrParams,
    panel: Panel,
    network_cuts: Option<Vec<f64>>,
    attribute_cuts: Option<Vec<Vec<f64>>>,
}

/// Score of one ordinal observation in category `c` given predictive
/// draws `(mean, sd, cuts)`.
fn ordinal_score(draws: &[(f64, f64, &[f64])], c: usize, scoring: OrdinalScoring) -> f64 {
    let ns = draws.len() as f64;
    match scoring {
        OrdinalScoring::Brier => {
            let mut probs: Vec<f64> = Vec::new();
            for &(mean, sd, cuts) in draws {
                let pr = category_probabilities(mean, sd, cuts);
                if probs.is_empty() {
                    probs = vec![0.0; pr.len()];
                }
                for (a, b) in probs.iter_mut().zip(pr) {
                    *a += b / ns;
                }
            }
            brier(&probs, c)
        }
        OrdinalScoring::Latent => {
            let mut mean_pred = 0.0;
            let mut mean_cond = 0.0;
            for &(mean, sd, cuts) in draws {
                let lo = if c == 0 { f64::NEG_INFINITY } else { cuts[c - 1] };
                let hi = cuts.get(c).copied().unwrap_or(f64::INFINITY);
                let (mu, _) = truncated_std_moments((lo - mean) / sd, (hi - mean) / sd);
                mean_pred += mean / ns;
                mean_cond += (mean + sd * mu) / ns;
            }
            (mean_cond - mean_pred).powi(2)
        }
    }
}

/// Prediction-error sums of squares at time `t`.
fn forecast_errors(
    spec: &ModelSpec,
    samples: &[ForecastSample],
    truth: &Panel,
    t: usize,
    scoring: OrdinalScoring,
) -> (f64, Option<f64>) {
    let m = truth.m();
    let p = truth.p();
    let ns = samples.len() as f64;
    let forecasts: Vec<_> = samples.iter().map(|s| forecast_one_step(&s.params, &s.panel)).collect();
    let mut net_err = 0.0;
    for (i, j) in truth.network.dyads() {
        if !truth.network.is_observed(t, i, j) {
            continue;
        }
        let y = truth.network.get(t, i, j);
        net_err += match spec.mode.network_scale {
            NetworkScale::Gaussian => {
                let mean = forecasts.iter().map(|f| f.network_mean[(i, j)]).sum::<f64>() / ns;
                (y - mean).powi(2)
            }
            NetworkScale::Ordinal => {
                let draws: Vec<(f64, f64, &[f64])> = forecasts
                    .iter()
                    .zip(samples)
                    .map(|(f, s)| (f.network_mean[(i, j)], s.params.sigma2.sqrt(), s.network_cuts.as_deref().unwrap_or(&[])))
                    .collect();
                ordinal_score(&draws, y as usize, scoring)
            }
        };
    }
    let attributes = (p > 0).then(|| {
        let mut err = 0.0;
        for i in 0..m {
            for k in 0..p {
                let x = truth.attributes.get(t, i, k);
                if x.is_nan() {
                    continue;
                }
                err += match spec.mode.attribute_scale {
                    AttributeScale::Ordinal => {
                        let draws: Vec<(f64, f64, &[f64])> = forecasts
                            .iter()
                            .zip(samples)
                            .map(|(f, s)| {
                                let cuts = s.attribute_cuts.as_ref().map_or(&[][..], |c| &c[k][..]);
                                (f.attribute_mean[(i, k)], s.params.sigma[(k, k)].sqrt(), cuts)
                            })
                            .collect();
                        ordinal_score(&draws, x as usize, scoring)
                    }
                    _ => {
                        let mean = forecasts.iter().map(|f| f.attribute_mean[(i, k)]).sum::<f64>() / ns;
                        (x - mean).powi(2)
                    }
                };
            }
        }
        err
    });
    (net_err, attributes)
}

fn brier(probs: &[f64], observed: usize) -> f64 {
    probs
        .iter()
        .enumerate()
        .map(|(c, pr)| (pr - if c == observed { 1.0 } else { 0.0 }).powi(2))
        .sum()
}

/// Category index of each observed ordinal value, so that scores refer to
/// positions rather than raw codes.
fn categorical_truth(panel: &Panel, spec: &ModelSpec) -> Panel {
    let mut out = panel.clone();
    if spec.mode.network_scale == NetworkScale::Ordinal {
        let mut levels: Vec<f64> = spec.ordinal.network_levels.clone().unwrap_or_default();
        for t in 0..panel.times() {
            for (i, j) in panel.network.dyads() {
                if panel.network.is_observed(t, i, j) {
                    levels.push(panel.network.get(t, i, j));
                }
            }
        }
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        let mut net = panel.network.clone();
        for t in 0..panel.times() {
            for (i, j) in panel.network.dyads() {
                let v = panel.network.get(t, i, j);
                net.set(t, i, j, levels.partition_point(|l| *l < v) as f64);
            }
        }
        out.network = net;
    }
    if spec.mode.attribute_scale == AttributeScale::Ordinal {
        let (m, p, times) = (panel.m(), panel.p(), panel.times());
        let mut x = panel.attributes.clone();
        for k in 0..p {
            let mut levels: Vec<f64> = spec.ordinal.attribute_levels.clone().unwrap_or_default();
            levels.extend(
                (0..times)
                    .flat_map(|t| (0..m).map(move |i| (t, i)))
                    .map(|(t, i)| panel.attributes.get(t, i, k))
                    .filter(|v| !v.is_nan()),
            );
            levels.sort_by(f64::total_cmp);
            levels.dedup();
            for t in 0..times {
                for i in 0..m {
                    let v = panel.attributes.get(t, i, k);
                    if !v.is_nan() {
                        x.set(t, i, k, levels.partition_point(|l| *l < v) as f64);
                    }
                }
            }
        }
        out.attributes = x;
    }
    out
}

fn latent_panel_for_forecast(draw: &Draw, train: &Panel) -> Panel {
    let mut panel = train.clone();
    if let Some(z) = &draw.final_network {
        let last = train.times() - 1;
        for (i, j) in train.network.dyads() {
            panel.network.set(last, i, j, z[(i, j)]);
        }
        panel.network = panel.network.into_complete();
    }
    if let Some(x) = &draw.latent {
        panel.attributes = x.clone();
    }
    panel
}

/// Smallest admissible holdout time: the training panel needs one
/// transition.
pub const MIN_HOLDOUT_TIME: usize = 2;

/// For every holdout time `t*` and every nested submodel, fits on time
/// points `0..t*` and scores the one-step forecast of time point `t*`.
pub fn forecast_study(
    panel: &Panel,
    spec: &ModelSpec,
    holdout_times: &[usize],
    method: &FitMethod,
    scoring: OrdinalScoring,
) -> Result<ForecastComparison> {
    let times = panel.times();
    let mut problems = Vec::new();
    if holdout_times.is_empty() {
        problems.push("no holdout times given".to_string());
    }
    for &t in holdout_times {
        if t < MIN_HOLDOUT_TIME || t >= times {
            problems.push(format!(
                "holdout time {t} outside {MIN_HOLDOUT_TIME}..={} (the data have {times} time points)",
                times.saturating_sub(1)
            ));
        }
    }
    if let FitMethod::Mle(_) = method {
        if !spec.mode.is_fully_observed_gaussian() {
            problems.push("maximum likelihood forecasts need the Gaussian model".into());
        }
    }
    if !problems.is_empty() {
        return Err(McrError::Invalid(problems));
    }
    let truth = categorical_truth(panel, spec);
    let subs = submodels();
    let jobs: Vec<(usize, usize)> =
        (0..subs.len()).flat_map(|s| holdout_times.iter().map(move |&t| (s, t))).collect();
    let scores: Vec<HoldoutScore> = jobs
        .par_iter()
        .map(|&(s, target)| -> Result<HoldoutScore> {
            let (name, terms) = subs[s];
            let sub = ModelSpec { terms, ..spec.clone() };
            let train = panel.truncated(target);
            let samples: Vec<ForecastSample> = match method {
                FitMethod::Mle(opts) => {
                    let fit = fit_mle(&train, sub.mode, terms, opts)?;
                    vec![ForecastSample { params: fit.params, panel: train, network_cuts: None, attribute_cuts: None }]
                }
                FitMethod::Bayes { prior, config } => {
                    let config = ChainConfig { keep_latent: true, ..*config };
                    let fit = fit_bayes(&train, &sub, prior, &config)?;
                    fit.draws
                        .iter()
                        .map(|d| ForecastSample {
                            params: d.params.clone(),
                            panel: latent_panel_for_forecast(d, &train),
                            network_cuts: d.network_cuts.clone(),
                            attribute_cuts: d.attribute_cuts.clone(),
                        })
                        .collect()
                }
            };
            let (network_pess, attribute_pess) = forecast_errors(&sub, &samples, &truth, target, scoring);
            Ok(HoldoutScore { time: target, submodel: name.to_string(), network_pess, attribute_pess })
        })
        .collect::<Result<_>>()?;

    let h = holdout_times.len() as f64;
    let averages: Vec<(&str, f64, Option<f64>)> = subs
        .iter()
        .map(|(name, _)| {
            let rows: Vec<&HoldoutScore> = scores.iter().filter(|r| r.submodel == *name).collect();
            let net = rows.iter().map(|r| r.network_pess).sum::<f64>() / h;
            let att = rows.iter().map(|r| r.attribute_pess).sum::<Option<f64>>().map(|a| a / h);
            (*name, net, att)
        })
        .collect();
    let (ref_net, ref_att) = (averages[0].1, averages[0].2);
    let average = averages
        .into_iter()
        .map(|(name, net, att)| ForecastRow {
            submodel: name.to_string(),
            network_pess: net,
            attribute_pess: att,
            network_relative: relative_percent(net, ref_net),
            attribute_relative: att.zip(ref_att).map(|(a, r)| relative_percent(a, r)),
        })
        .collect();
    Ok(ForecastComparison { per_time: scores, average })
}

/// Maps latent values to categories with the given cut points.
pub fn categorize_network(z: &NetworkSeries, cuts: &[f64]) -> NetworkSeries {
    let mut out = z.clone();
    for t in 0..z.times() {
        for (i, j) in z.dyads() {
            out.set(t, i, j, categorize(z.get(t, i, j), cuts) as f64);
        }
    }
    out
}

pub fn categorize_attributes(w: &AttributeSeries, cuts: &[Vec<f64>]) -> AttributeSeries {
    let mut out = w.clone();
    for t in 0..w.times() {
        for i in 0..w.m() {
            for (k, c) in cuts.iter().enumerate() {
                out.set(t, i, k, categorize(w.get(t, i, k), c) as f64);
            }
        }
    }
    out
}
