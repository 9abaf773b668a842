//! Forward simulation and one-step forecasts.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dist::chain_rng;
use crate::error::{McrError, Result};
use crate::linalg::cholesky;
use crate::model::{
    dyads, AttributeScale, AttributeSeries, CovariateSpec, Layout, McrParams, ModelMode, NetworkScale,
    NetworkSeries, Panel, Terms,
};
use crate::ordinal::{categorize, category_probabilities};

/// Where the simulated process starts.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialState {
    /// Independent noise around the covariate terms:
    /// `y_ij = γᵀs_ij + ε`, `x_i = Γs_i + e`.
    #[default]
    Noise,
    /// `Y = 0`, `X = 0`.
    Zeros,
    /// Given latent-scale `Y_0` (`m × m`) and `X_0` (`m × p`).
    Given { network: DMatrix<f64>, attributes: DMatrix<f64> },
    /// `y_{ij,0} ~ N(γ₀ᵀ s_ij, σ²)` and `x_{i,k,0} ~ N(g_kᵀ s_i, τ_k²)`.
    Regression {
        network_coef: DVector<f64>,
        attribute_coef: DMatrix<f64>,
        attribute_var: DVector<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub m: usize,
    /// Number of recorded time points `n + 1`.
    pub times: usize,
    pub mode: ModelMode,
    pub covariates: CovariateSpec,
    /// Transitions discarded before the first recorded time point.
    pub burn_in: usize,
    pub seed: u64,
    pub initial: InitialState,
    /// Interior cut points for an ordinal network; categories are
    /// reported as `0, 1, …`.
    pub network_cuts: Vec<f64>,
    /// Interior cut points for each ordinal attribute.
    pub attribute_cuts: Vec<Vec<f64>>,
    /// Any latent value beyond this magnitude is reported as instability.
    pub blow_up: f64,
}

impl SimConfig {
    pub fn new(m: usize, times: usize, mode: ModelMode) -> Self {
        SimConfig {
            m,
            times,
            mode,
            covariates: CovariateSpec::default(),
            burn_in: 50,
            seed: 1,
            initial: InitialState::Noise,
            network_cuts: vec![0.0],
            attribute_cuts: Vec::new(),
            blow_up: 1e8,
        }
    }

    pub fn layout(&self, p: usize) -> Layout {
        Layout::with_dims(
            self.mode,
            Terms::default(),
            self.m,
            p,
            self.covariates.q_dyad(self.m, self.mode.is_directed()),
            self.covariates.q_node(self.m),
        )
    }
}

/// Simulated data on the latent scale and as observed.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub latent: Panel,
    pub observed: Panel,
}

/// Simulates the coevolution process. Ordinal components are generated on
/// the latent scale and categorized with the configured cut points; for
/// latent attributes the observed panel has no attributes. `sigma2 = 0` and
/// an all-zero `Sigma` switch the respective noise off.
pub fn simulate(params: &McrParams, config: &SimConfig) -> Result<Simulation> {
    let m = config.m;
    let p = params.p();
    let mode = config.mode;
    let directed = mode.is_directed();
    let layout = config.layout(p);
    // zero noise is allowed here and nowhere else
    let mut check = params.clone();
    if check.sigma2 == 0.0 {
        check.sigma2 = 1.0;
    }
    if check.sigma.iter().all(|v| *v == 0.0) {
        check.sigma = DMatrix::identity(p, p);
    }
    check.validate(&layout)?;
    if config.times == 0 || m < 2 {
        return Err(McrError::Invalid(vec!["simulation needs m >= 2 and at least one time point".into()]));
    }
    if mode.attribute_scale == AttributeScale::Ordinal && config.attribute_cuts.len() != p {
        return Err(McrError::Invalid(vec![format!(
            "ordinal attributes need {p} cut-point vectors, got {}",
            config.attribute_cuts.len()
        )]));
    }
    let mut rng = chain_rng(config.seed, 0);
    let sd = params.sigma2.sqrt();
    // a zero covariance switches the attribute noise off
    let sigma_l = if p > 0 && params.sigma.iter().any(|v| *v != 0.0) {
        Some(cholesky(&params.sigma, "Sigma")?.l())
    } else {
        None
    };

    let total = config.burn_in + config.times;
    let mut panel = Panel::new(
        NetworkSeries::zeros(m, total, directed),
        AttributeSeries::zeros(m, p, total),
        config.covariates.clone(),
    )?;

    match &config.initial {
        InitialState::Zeros => {}
        InitialState::Noise => {
            for (i, j) in dyads(m, directed) {
                let mean = config.covariates.dyad_dot(m, directed, i, j, params.gamma.as_slice());
                let z: f64 = rng.sample(StandardNormal);
                panel.network.set(0, i, j, mean + sd * z);
            }
            let mut mean = vec![0.0; p];
            for i in 0..m {
                config.covariates.node_term_into(i, &params.theta_coef, &mut mean);
                let e = noise(&sigma_l, p, &mut rng);
                for k in 0..p {
                    panel.attributes.set(0, i, k, mean[k] + e[k]);
                }
            }
        }
        InitialState::Given { network: y0, attributes: x0 } => {
            if y0.shape() != (m, m) || x0.shape() != (m, p) {
                return Err(McrError::Dimension("initial state has the wrong shape".into()));
            }
            for (i, j) in dyads(m, directed) {
                panel.network.set(0, i, j, y0[(i, j)]);
            }
            for i in 0..m {
                for k in 0..p {
                    panel.attributes.set(0, i, k, x0[(i, k)]);
                }
            }
        }
        InitialState::Regression { network_coef, attribute_coef, attribute_var } => {
            for (i, j) in dyads(m, directed) {
                let mean = config.covariates.dyad_dot(m, directed, i, j, network_coef.as_slice());
                let z: f64 = rng.sample(StandardNormal);
                panel.network.set(0, i, j, mean + sd * z);
            }
            let mut row = vec![0.0; config.covariates.q_node(m)];
            for i in 0..m {
                config.covariates.node_row_into(i, &mut row);
                let s = DVector::from_column_slice(&row);
                let mean = attribute_coef * s;
                for k in 0..p {
                    let z: f64 = rng.sample(StandardNormal);
                    panel.attributes.set(0, i, k, mean[k] + attribute_var[k].sqrt() * z);
                }
            }
        }
    }

    let mut x_mean = vec![0.0; p];
    for t in 1..total {
        for (i, j) in dyads(m, directed) {
            let mean = params.network_mean(&panel, i, j, t);
            let z: f64 = rng.sample(StandardNormal);
            panel.network.set(t, i, j, mean + sd * z);
        }
        for i in 0..m {
            params.attribute_mean_into(&panel, i, t, &mut x_mean);
            let e = noise(&sigma_l, p, &mut rng);
            for k in 0..p {
                panel.attributes.set(t, i, k, x_mean[k] + e[k]);
            }
        }
        let too_big = |v: &f64| !v.is_finite() || v.abs() > config.blow_up;
        if (0..m).any(|i| panel.network.row(t, i).iter().any(too_big))
            || (0..m).any(|i| panel.attributes.node(t, i).iter().any(too_big))
        {
            return Err(McrError::Unstable { t });
        }
    }

    // keep the last `times` time points
    let skip = config.burn_in;
    let mut network = NetworkSeries::zeros(m, config.times, directed);
    for t in 0..config.times {
        for (i, j) in dyads(m, directed) {
            network.set(t, i, j, panel.network.get(t + skip, i, j));
        }
    }
    let attributes = AttributeSeries::new(m, p, config.times, panel.attributes.values()[skip * m * p..].to_vec())?;
    let latent = Panel::new(network.clone(), attributes.clone(), config.covariates.clone())?;

    let mut observed = latent.clone();
    if mode.network_scale == NetworkScale::Ordinal {
        for t in 0..config.times {
            for (i, j) in dyads(m, directed) {
                let c = categorize(network.get(t, i, j), &config.network_cuts);
                observed.network.set(t, i, j, c as f64);
            }
        }
    }
    match mode.attribute_scale {
        AttributeScale::Ordinal => {
            for t in 0..config.times {
                for i in 0..m {
                    for k in 0..p {
                        let c = categorize(attributes.get(t, i, k), &config.attribute_cuts[k]);
                        observed.attributes.set(t, i, k, c as f64);
                    }
                }
            }
        }
        AttributeScale::Latent => {
            observed.attributes = AttributeSeries::zeros(m, 0, config.times);
        }
        AttributeScale::Gaussian => {}
    }
    Ok(Simulation { latent, observed })
}

fn noise<R: Rng + ?Sized>(l: &Option<DMatrix<f64>>, p: usize, rng: &mut R) -> DVector<f64> {
    match l {
        Some(l) => l * DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal)),
        None => DVector::zeros(p),
    }
}

/// One-step-ahead forecast from the last time point of a latent-scale panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    /// `E[y_{ij,T+1}]` on the latent scale (`m × m`, zero diagonal).
    #[serde(with = "crate::io::serde_matrix")]
    pub network_mean: DMatrix<f64>,
    /// `E[x_{i,T+1}]` (`m × p`).
    #[serde(with = "crate::io::serde_matrix")]
    pub attribute_mean: DMatrix<f64>,
}

pub fn forecast_one_step(params: &McrParams, panel: &Panel) -> Forecast {
    let m = panel.m();
    let p = panel.p();
    let next = panel.times();
    let mut network_mean = DMatrix::zeros(m, m);
    for (i, j) in panel.network.dyads() {
        let v = params.network_mean(panel, i, j, next);
        network_mean[(i, j)] = v;
        if !panel.network.directed() {
            network_mean[(j, i)] = v;
        }
    }
    let mut attribute_mean = DMatrix::zeros(m, p);
    let mut buf = vec![0.0; p];
    for i in 0..m {
        params.attribute_mean_into(panel, i, next, &mut buf);
        for k in 0..p {
            attribute_mean[(i, k)] = buf[k];
        }
    }
    Forecast { network_mean, attribute_mean }
}

impl Forecast {
    /// Predictive category probabilities of relation `(i, j)` given the
    /// noise standard deviation and interior cut points.
    pub fn network_probabilities(&self, i: usize, j: usize, sd: f64, cuts: &[f64]) -> Vec<f64> {
        category_probabilities(self.network_mean[(i, j)], sd, cuts)
    }
}
