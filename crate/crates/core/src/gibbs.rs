//! Gibbs sampling for the coevolution model under semiconjugate priors.
//!
//! One iteration updates, in this fixed order,
//!
//! 1. `β` from its multivariate normal full conditional,
//! 2. `vec(B)` (column-major) from its multivariate normal full conditional,
//! 3. `σ²` (Gaussian networks only) from its inverse-gamma full conditional,
//! 4. `Σ` from its inverse-Wishart full conditional, or the latent
//!    attributes when they are unobserved,
//!
//! followed by the ordinal extension steps (latent relations, cut points,
//! latent attributes, initial-state regressions) when the mode needs them.
//! The order is part of the reproducibility contract: a chain is a pure
//! function of `(data, model, prior, config)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{chain_rng, gamma, wishart, ChainRng};
use crate::error::{McrError, Result};
use crate::latent;
use crate::linalg::{cholesky, spd_inverse, symmetrize, GaussianInfo};
use crate::mle::{
    accumulate_attribute_normal_equations, accumulate_network_normal_equations, MleOptions,
    NormalEquations,
};
use crate::model::{
    AttributeScale, AttributeSeries, Layout, McrParams, ModelMode, NetworkScale, Panel, Terms,
};
use crate::ordinal::{self, OrdinalMethod, OrdinalVariable};

/// A prior covariance: either a multiple of the identity or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorCovariance {
    Scaled(f64),
    Full(#[serde(with = "crate::io::serde_matrix")] DMatrix<f64>),
}

impl PriorCovariance {
    pub fn inverse(&self, d: usize, what: &str) -> Result<DMatrix<f64>> {
        match self {
            PriorCovariance::Scaled(v) if *v > 0.0 => Ok(DMatrix::identity(d, d) / *v),
            PriorCovariance::Scaled(v) => Err(McrError::Invalid(vec![format!(
                "{what} scale {v} must be positive"
            )])),
            PriorCovariance::Full(m) if m.shape() == (d, d) => spd_inverse(m, what),
            PriorCovariance::Full(m) => Err(McrError::Invalid(vec![format!(
                "{what} is {:?}, expected ({d}, {d})",
                m.shape()
            )])),
        }
    }
}

/// How the latent attributes at the first time point are anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LatentAnchor {
    /// `x_{i,0} ~ N(0, I)`.
    #[default]
    Normal,
    /// Improper flat prior on `x_{i,0}`.
    Flat,
}

/// Semiconjugate prior hyperparameters.
///
/// `β ~ N(0, V_β)`, `vec(B) ~ N(0, V_b)`, `1/σ² ~ gamma(ν₀/2, ν₀σ₀²/2)`,
/// `Σ⁻¹ ~ Wishart(S₀⁻¹, η₀)`. The remaining fields configure the latent
/// and ordinal extensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSpec {
    pub v_beta: PriorCovariance,
    pub v_b: PriorCovariance,
    pub nu0: f64,
    pub sigma0_sq: f64,
    #[serde(with = "crate::io::serde_opt_matrix", skip_serializing_if = "Option::is_none")]
    pub s0: Option<DMatrix<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta0: Option<f64>,
    /// Mean of the prior on latent relations and ordinal attributes at `t = 0`.
    pub z_prior_mean: f64,
    /// Variance of that prior.
    pub z_prior_var: f64,
    pub latent_anchor: LatentAnchor,
    /// Variance of the normal prior on interior cut points.
    pub threshold_prior_var: f64,
    /// Prior variance of initial-state regression coefficients.
    pub initial_coef_var: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            v_beta: PriorCovariance::Scaled(100.0),
            v_b: PriorCovariance::Scaled(100.0),
            nu0: 1.0,
            sigma0_sq: 1.0,
            s0: None,
            eta0: None,
            z_prior_mean: 0.0,
            z_prior_var: 100.0,
            latent_anchor: LatentAnchor::Normal,
            threshold_prior_var: 100.0,
            initial_coef_var: 100.0,
        }
    }
}

impl PriorSpec {
    /// Prior with every regression coefficient variance set to `v`.
    pub fn flat(v: f64) -> Self {
        PriorSpec {
            v_beta: PriorCovariance::Scaled(v),
            v_b: PriorCovariance::Scaled(v),
            ..Default::default()
        }
    }

    pub fn s0(&self, p: usize) -> DMatrix<f64> {
        self.s0.clone().unwrap_or_else(|| DMatrix::identity(p, p))
    }

    pub fn eta0(&self, p: usize) -> f64 {
        self.eta0.unwrap_or(p as f64 + 2.0)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.nu0 > 0.0) {
            problems.push(format!("nu0 = {} must be positive", self.nu0));
        }
        if !(self.sigma0_sq > 0.0) {
            problems.push(format!("sigma0_sq = {} must be positive", self.sigma0_sq));
        }
        if !(self.eta0(p) > p as f64 - 1.0) {
            problems.push(format!("eta0 = {} must exceed p - 1 = {}", self.eta0(p), p as f64 - 1.0));
        }
        if let Some(s0) = &self.s0 {
            if s0.shape() != (p, p) || s0.clone().cholesky().is_none() {
                problems.push("S0 must be a p x p positive-definite matrix".into());
            }
        }
        for (name, v) in [
            ("z_prior_var", self.z_prior_var),
            ("threshold_prior_var", self.threshold_prior_var),
            ("initial_coef_var", self.initial_coef_var),
        ] {
            if !(v > 0.0) {
                problems.push(format!("{name} = {v} must be positive"));
            }
        }
        for (name, cov) in [("V_beta", &self.v_beta), ("V_b", &self.v_b)] {
            match cov {
                PriorCovariance::Scaled(v) if !(*v > 0.0) => {
                    problems.push(format!("{name} scale {v} must be positive"))
                }
                PriorCovariance::Full(m) if m.clone().cholesky().is_none() => {
                    problems.push(format!("{name} must be positive definite"))
                }
                _ => {}
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(McrError::Invalid(problems))
        }
    }
}

/// Options for the ordinal (probit) extension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalOptions {
    pub network: OrdinalMethod,
    pub attributes: OrdinalMethod,
    /// Fix the lowest interior cut at zero in threshold mode.
    pub pin_first_cut: bool,
    /// Explicit category levels of the network; inferred from the data
    /// when absent.
    pub network_levels: Option<Vec<f64>>,
    /// Explicit category levels shared by the ordinal attributes.
    pub attribute_levels: Option<Vec<f64>>,
}

impl Default for OrdinalOptions {
    fn default() -> Self {
        OrdinalOptions {
            network: OrdinalMethod::Auto,
            attributes: OrdinalMethod::Auto,
            pin_first_cut: true,
            network_levels: None,
            attribute_levels: None,
        }
    }
}

/// Optional regressions for latent values at the first time point:
/// `z_{ij,0} ~ N(γ₀ᵀ s_ij, σ²)` and `w_{i,k,0} ~ N(g_kᵀ s_i, τ_k²)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct InitialStateModel {
    pub network: bool,
    pub attributes: bool,
}

/// Everything that defines the model being fitted, apart from the prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub mode: ModelMode,
    pub terms: Terms,
    /// Dimension of the latent attributes (latent mode only).
    pub latent_dim: usize,
    pub ordinal: OrdinalOptions,
    pub initial_state: InitialStateModel,
}

impl ModelSpec {
    pub fn new(mode: ModelMode) -> Self {
        ModelSpec {
            mode,
            terms: Terms::default(),
            latent_dim: 0,
            ordinal: OrdinalOptions::default(),
            initial_state: InitialStateModel::default(),
        }
    }

    pub fn latent(direction: crate::model::Direction, p: usize) -> Self {
        ModelSpec {
            latent_dim: p,
            ..ModelSpec::new(ModelMode::latent(direction))
        }
    }
}

/// How chains are started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ChainInit {
    /// Least-squares estimates on the (initialized) latent-scale data,
    /// falling back to prior means.
    #[default]
    Mle,
    /// Prior means.
    PriorMean,
    /// A draw from the prior, for over-dispersed starts.
    PriorDraw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
    pub init: ChainInit,
    /// Store latent attribute trajectories with every retained draw.
    pub keep_latent: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iters: 2000,
            burn_in: 500,
            thin: 1,
            seed: 1,
            chains: 1,
            init: ChainInit::Mle,
            keep_latent: true,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.iters <= self.burn_in {
            problems.push(format!(
                "iters ({}) must exceed burn-in ({})",
                self.iters, self.burn_in
            ));
        }
        if self.thin == 0 {
            problems.push("thin must be at least 1".into());
        }
        if self.chains == 0 {
            problems.push("chains must be at least 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(McrError::Invalid(problems))
        }
    }

    pub fn retained_per_chain(&self) -> usize {
        (self.iters - self.burn_in) / self.thin
    }
}

/// Parameters of the initial-state regressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InitialParams {
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::io::serde_opt_vector")]
    pub network_coef: Option<DVector<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::io::serde_opt_matrix")]
    pub attribute_coef: Option<DMatrix<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::io::serde_opt_vector")]
    pub attribute_var: Option<DVector<f64>>,
}

/// The fitted model: layout, options and prior, shared by every chain.
#[derive(Debug, Clone)]
pub struct Model {
    pub layout: Layout,
    pub spec: ModelSpec,
    pub prior: PriorSpec,
}

/// Current state of one chain.
#[derive(Debug, Clone)]
pub struct GibbsState {
    pub params: McrParams,
    /// Latent-scale data: `Z` in place of an ordinal or partly missing
    /// network, and `X`/`W` in place of latent or ordinal attributes.
    pub panel: Panel,
    pub network_ordinal: Option<OrdinalVariable>,
    pub attribute_ordinal: Vec<OrdinalVariable>,
    pub initial: InitialParams,
    /// Missing `(t, i, j)` entries of a Gaussian network, imputed each
    /// iteration.
    pub missing_entries: Vec<(usize, usize, usize)>,
    pub iteration: usize,
    pub rng: ChainRng,
}

/// One retained draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub chain: usize,
    pub iteration: usize,
    #[serde(flatten)]
    pub params: McrParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network_cuts: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute_cuts: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "is_default_initial")]
    pub initial: InitialParams,
    /// Latent attribute trajectories (not written to sample files).
    #[serde(skip)]
    pub latent: Option<AttributeSeries>,
    /// Latent-scale network at the last time point (not written to sample files).
    #[serde(skip)]
    pub final_network: Option<DMatrix<f64>>,
}

fn is_default_initial(p: &InitialParams) -> bool {
    *p == InitialParams::default()
}

/// Thinned draws from one or more chains, chain-major.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    pub draws: Vec<Draw>,
    pub layout: Layout,
    pub spec: ModelSpec,
    pub config: ChainConfig,
    /// Every update is an exact draw from a full conditional.
    pub moves: &'static str,
}

impl PosteriorSamples {
    pub fn chain(&self, c: usize) -> impl Iterator<Item = &Draw> {
        self.draws.iter().filter(move |d| d.chain == c)
    }

    /// Posterior mean of the parameters (coefficient blocks averaged entrywise).
    pub fn mean_params(&self) -> McrParams {
        let mut mean = McrParams::zeros(&self.layout);
        let n = self.draws.len() as f64;
        let mut beta = DVector::zeros(self.layout.beta_len);
        let mut b = DMatrix::zeros(self.layout.p, self.layout.k_len);
        let mut sigma2 = 0.0;
        let mut sigma = DMatrix::zeros(self.layout.p, self.layout.p);
        for d in &self.draws {
            beta += self.layout.pack_beta(&d.params);
            b += self.layout.pack_b(&d.params);
            sigma2 += d.params.sigma2;
            sigma += &d.params.sigma;
        }
        self.layout.unpack_beta(&(beta / n), &mut mean);
        self.layout.unpack_b(&(b / n), &mut mean);
        mean.sigma2 = sigma2 / n;
        mean.sigma = sigma / n;
        mean
    }

    /// Named scalar parameter traces, one per structural coefficient and
    /// noise parameter. Intercept blocks are included.
    pub fn scalar_traces(&self) -> Vec<(String, Vec<f64>)> {
        let layout = &self.layout;
        let mut names = layout.beta_labels();
        let p = layout.p;
        let b_labels = layout.b_labels();
        for (k, label) in b_labels.iter().enumerate() {
            let _ = k;
            for r in 0..p {
                names.push(label.replace(":,", &format!("{r},")));
            }
        }
        names.push("sigma2".into());
        for c in 0..p {
            for r in 0..p {
                names.push(format!("Sigma[{r},{c}]"));
            }
        }
        let mut traces: Vec<Vec<f64>> = vec![Vec::with_capacity(self.draws.len()); names.len()];
        for d in &self.draws {
            let beta = layout.pack_beta(&d.params);
            let b = layout.pack_b(&d.params);
            let mut idx = 0;
            for v in beta.iter().chain(b.iter()) {
                traces[idx].push(*v);
                idx += 1;
            }
            traces[idx].push(d.params.sigma2);
            idx += 1;
            for v in d.params.sigma.iter() {
                traces[idx].push(*v);
                idx += 1;
            }
        }
        names.into_iter().zip(traces).collect()
    }
}

/// Full conditional of `β`: precision `V_β⁻¹ + Q/σ²`, linear term `l/σ²`.
pub fn beta_conditional(ne: &NormalEquations, sigma2: f64, v_beta_inv: &DMatrix<f64>) -> GaussianInfo {
    GaussianInfo {
        precision: symmetrize(v_beta_inv + &ne.q / sigma2),
        linear: ne.l_vector() / sigma2,
    }
}

/// Full conditional of `vec(B)` (column-major, `B` is `p × K`):
/// precision `V_b⁻¹ + Q ⊗ Σ⁻¹`, linear term `vec(Σ⁻¹ L)`.
pub fn b_conditional(ne: &NormalEquations, sigma_inv: &DMatrix<f64>, v_b_inv: &DMatrix<f64>) -> GaussianInfo {
    let precision = symmetrize(v_b_inv + ne.q.kronecker(sigma_inv));
    let weighted = sigma_inv * &ne.l;
    GaussianInfo {
        precision,
        linear: DVector::from_column_slice(weighted.as_slice()),
    }
}

/// Step 1: draws `β`.
pub fn step_beta(state: &mut GibbsState, model: &Model, ne: &NormalEquations) -> Result<()> {
    let v_inv = model.prior.v_beta.inverse(model.layout.beta_len, "V_beta")?;
    let info = beta_conditional(ne, state.params.sigma2, &v_inv);
    let (beta, _) = info.sample(&mut state.rng, "beta full-conditional precision")?;
    model.layout.unpack_beta(&beta, &mut state.params);
    Ok(())
}

/// Step 2: draws `B`.
pub fn step_b(state: &mut GibbsState, model: &Model, ne: &NormalEquations) -> Result<()> {
    let layout = &model.layout;
    if layout.p == 0 {
        return Ok(());
    }
    let v_inv = model.prior.v_b.inverse(layout.p * layout.k_len, "V_b")?;
    let sigma_inv = spd_inverse(&state.params.sigma, "Sigma")?;
    let info = b_conditional(ne, &sigma_inv, &v_inv);
    let (b, _) = info.sample(&mut state.rng, "B full-conditional precision")?;
    let b = DMatrix::from_column_slice(layout.p, layout.k_len, b.as_slice());
    layout.unpack_b(&b, &mut state.params);
    Ok(())
}

/// Step 3: `1/σ² ~ gamma((ν₀ + N)/2, (ν₀σ₀² + RSS)/2)` with `N` residuals.
pub fn step_sigma2<R: Rng + ?Sized>(
    params: &mut McrParams,
    prior: &PriorSpec,
    rss: f64,
    count: usize,
    rng: &mut R,
) -> Result<()> {
    let shape = (prior.nu0 + count as f64) / 2.0;
    let rate = (prior.nu0 * prior.sigma0_sq + rss.max(0.0)) / 2.0;
    params.sigma2 = 1.0 / gamma(shape, rate, rng)?;
    Ok(())
}

/// Step 4: `Σ⁻¹ ~ Wishart((S₀ + RSS)⁻¹, η₀ + N)` with `N = m n` residual vectors.
pub fn step_sigma<R: Rng + ?Sized>(
    params: &mut McrParams,
    prior: &PriorSpec,
    rss: &DMatrix<f64>,
    count: usize,
    rng: &mut R,
) -> Result<()> {
    let p = rss.nrows();
    if p == 0 {
        return Ok(());
    }
    let scale = spd_inverse(&(prior.s0(p) + rss), "Wishart scale S0 + RSS")?;
    let precision = wishart(&scale, prior.eta0(p) + count as f64, rng)?;
    params.sigma = spd_inverse(&precision, "sampled Sigma^-1")?;
    Ok(())
}

fn draw_prior_params<R: Rng + ?Sized>(model: &Model, params: &mut McrParams, rng: &mut R) -> Result<()> {
    let layout = &model.layout;
    let v_beta_inv = model.prior.v_beta.inverse(layout.beta_len, "V_beta")?;
    let (beta, _) = GaussianInfo {
        precision: v_beta_inv,
        linear: DVector::zeros(layout.beta_len),
    }
    .sample(rng, "V_beta")?;
    layout.unpack_beta(&beta, params);
    if layout.p > 0 {
        let d = layout.p * layout.k_len;
        let v_b_inv = model.prior.v_b.inverse(d, "V_b")?;
        let (b, _) = GaussianInfo {
            precision: v_b_inv,
            linear: DVector::zeros(d),
        }
        .sample(rng, "V_b")?;
        layout.unpack_b(&DMatrix::from_column_slice(layout.p, layout.k_len, b.as_slice()), params);
    }
    if !model.spec.mode.fixed_sigma2() {
        let shape = model.prior.nu0 / 2.0;
        let rate = model.prior.nu0 * model.prior.sigma0_sq / 2.0;
        params.sigma2 = 1.0 / gamma(shape, rate, rng)?;
    }
    if !model.spec.mode.fixed_sigma() && layout.p > 0 {
        let p = layout.p;
        let scale = spd_inverse(&model.prior.s0(p), "S0")?;
        let precision = wishart(&scale, model.prior.eta0(p), rng)?;
        params.sigma = spd_inverse(&precision, "Sigma")?;
    }
    Ok(())
}

fn mle_start(model: &Model, panel: &Panel, params: &mut McrParams) {
    let opts = MleOptions::default();
    let layout = &model.layout;
    if let Ok(ne) = accumulate_network_normal_equations(panel, layout) {
        if let Ok((beta, sigma2)) = crate::mle::solve_network_mle(&ne, &opts) {
            layout.unpack_beta(&beta, params);
            if sigma2 > 0.0 {
                params.sigma2 = sigma2;
            }
        }
    }
    if layout.p > 0 {
        if let Ok(ne) = accumulate_attribute_normal_equations(panel, layout) {
            if let Ok((b, sigma)) = crate::mle::solve_attribute_mle(&ne, &opts) {
                layout.unpack_b(&b, params);
                if sigma.clone().cholesky().is_some() {
                    params.sigma = sigma;
                }
            }
        }
    }
}

/// Builds the model for `panel` (the observed data) and validates the
/// combination of mode, data and prior.
pub fn build_model(panel: &Panel, spec: &ModelSpec, prior: &PriorSpec) -> Result<Model> {
    let mode = spec.mode;
    let mut problems = Vec::new();
    if panel.network.directed() != mode.is_directed() {
        problems.push("network directedness does not match the model mode".to_string());
    }
    let p = match mode.attribute_scale {
        AttributeScale::Latent => {
            if panel.p() > 0 {
                problems.push("latent attributes cannot be combined with observed attributes".into());
            }
            if spec.latent_dim == 0 {
                problems.push("latent mode needs a latent dimension of at least 1".into());
            }
            spec.latent_dim
        }
        _ => panel.p(),
    };
    if spec.initial_state.network && mode.network_scale != NetworkScale::Ordinal {
        problems.push("the initial-state network regression needs an ordinal network".into());
    }
    if spec.initial_state.attributes && mode.attribute_scale != AttributeScale::Ordinal {
        problems.push("the initial-state attribute regression needs ordinal attributes".into());
    }
    if panel.n() == 0 {
        problems.push("at least two time points are needed".into());
    }
    if let Err(McrError::Invalid(mut more)) = prior.validate(p) {
        problems.append(&mut more);
    }
    if !problems.is_empty() {
        return Err(McrError::Invalid(problems));
    }
    let m = panel.m();
    let layout = Layout::with_dims(
        mode,
        spec.terms,
        m,
        p,
        panel.covariates.q_dyad(m, mode.is_directed()),
        panel.covariates.q_node(m),
    );
    Ok(Model {
        layout,
        spec: spec.clone(),
        prior: prior.clone(),
    })
}

/// Initializes a chain: latent-scale data first, then parameters.
pub fn init_state(model: &Model, data: &Panel, init: ChainInit, seed: u64, chain: usize) -> Result<GibbsState> {
    let mut rng = chain_rng(seed, chain as u64);
    let mode = model.spec.mode;
    let layout = &model.layout;

    let mut panel = data.clone();
    let network_ordinal = match mode.network_scale {
        NetworkScale::Ordinal => {
            let opts = &model.spec.ordinal;
            let (var, network) =
                ordinal::init_network(&data.network, opts.network, opts.pin_first_cut, opts.network_levels.as_deref())?;
            panel.network = network;
            Some(var)
        }
        NetworkScale::Gaussian => {
            if data.network.has_missing() {
                panel.network = ordinal::fill_missing_network(&data.network);
            }
            None
        }
    };
    let attribute_ordinal = match mode.attribute_scale {
        AttributeScale::Ordinal => {
            let opts = &model.spec.ordinal;
            let (vars, w) = ordinal::init_attributes(
                &data.attributes,
                opts.attributes,
                opts.pin_first_cut,
                opts.attribute_levels.as_deref(),
            )?;
            panel.attributes = w;
            vars
        }
        AttributeScale::Latent => {
            panel.attributes = latent::init_latent(&panel.network, layout.p, &mut rng);
            Vec::new()
        }
        AttributeScale::Gaussian => Vec::new(),
    };

    let mut params = McrParams::zeros(layout);
    match init {
        ChainInit::Mle => mle_start(model, &panel, &mut params),
        ChainInit::PriorMean => {}
        ChainInit::PriorDraw => draw_prior_params(model, &mut params, &mut rng)?,
    }
    if mode.fixed_sigma2() {
        params.sigma2 = 1.0;
    }
    if mode.fixed_sigma() {
        params.sigma = DMatrix::identity(layout.p, layout.p);
    }
    // stationarity is not enforced, but a wildly explosive start can
    // overflow the latent updates before the chain settles
    params.alpha1 = params.alpha1.clamp(-0.99, 0.99);

    let mut initial = InitialParams::default();
    if model.spec.initial_state.network {
        initial.network_coef = Some(DVector::zeros(layout.q_dyad));
    }
    if model.spec.initial_state.attributes {
        initial.attribute_coef = Some(DMatrix::zeros(layout.p, layout.q_node));
        initial.attribute_var = Some(DVector::from_element(layout.p, 1.0));
    }

    Ok(GibbsState {
        params,
        panel,
        network_ordinal,
        attribute_ordinal,
        initial,
        missing_entries: if mode.network_scale == NetworkScale::Gaussian {
            ordinal::missing_entries(&data.network)
        } else {
            Vec::new()
        },
        iteration: 0,
        rng,
    })
}

/// Cached normal equations for the fully observed Gaussian model, whose
/// data never change during sampling.
struct FixedEquations {
    network: NormalEquations,
    attributes: Option<NormalEquations>,
}

/// Runs one full Gibbs iteration.
pub fn gibbs_iteration(state: &mut GibbsState, model: &Model) -> Result<()> {
    gibbs_iteration_cached(state, model, None)
}

fn gibbs_iteration_cached(state: &mut GibbsState, model: &Model, fixed: Option<&FixedEquations>) -> Result<()> {
    let mode = model.spec.mode;
    let layout = &model.layout;

    let computed;
    let (net_ne, att_ne) = match fixed {
        Some(f) => (&f.network, f.attributes.as_ref()),
        None => {
            let net = accumulate_network_normal_equations(&state.panel, layout)?;
            let att = if layout.p > 0 {
                Some(accumulate_attribute_normal_equations(&state.panel, layout)?)
            } else {
                None
            };
            computed = (net, att);
            (&computed.0, computed.1.as_ref())
        }
    };

    step_beta(state, model, net_ne)?;
    if let Some(att) = att_ne {
        step_b(state, model, att)?;
    }
    if !mode.fixed_sigma2() {
        let beta = layout.pack_beta(&state.params);
        let coef = DMatrix::from_row_slice(1, beta.len(), beta.as_slice());
        let rss = net_ne.rss(&coef)[(0, 0)];
        step_sigma2(&mut state.params, &model.prior, rss, net_ne.count, &mut state.rng)?;
    }
    match mode.attribute_scale {
        AttributeScale::Gaussian => {
            if let Some(att) = att_ne {
                let rss = att.rss(&layout.pack_b(&state.params));
                step_sigma(&mut state.params, &model.prior, &rss, att.count, &mut state.rng)?;
            }
        }
        AttributeScale::Latent => latent::step_latent_sweep(state, model)?,
        AttributeScale::Ordinal => {}
    }
    if mode.network_scale == NetworkScale::Ordinal || !state.missing_entries.is_empty() {
        ordinal::step_z_sweep(state, model)?;
    }
    if mode.network_scale == NetworkScale::Ordinal {
        ordinal::step_network_thresholds(state, model)?;
    }
    if mode.attribute_scale == AttributeScale::Ordinal {
        ordinal::step_attribute_thresholds(state, model)?;
        ordinal::step_w_sweep(state, model)?;
    }
    if model.spec.initial_state.network || model.spec.initial_state.attributes {
        ordinal::step_initial_state(state, model)?;
    }
    state.iteration += 1;
    Ok(())
}

/// Runs one chain.
pub fn run_single_chain(data: &Panel, model: &Model, config: &ChainConfig, chain: usize) -> Result<Vec<Draw>> {
    let mut state = init_state(model, data, config.init, config.seed, chain)?;
    let fixed = if model.spec.mode.is_fully_observed_gaussian() && !data.network.has_missing() {
        let network = accumulate_network_normal_equations(&state.panel, &model.layout)?;
        let attributes = if model.layout.p > 0 {
            Some(accumulate_attribute_normal_equations(&state.panel, &model.layout)?)
        } else {
            None
        };
        Some(FixedEquations { network, attributes })
    } else {
        None
    };

    let keep_latent = config.keep_latent && model.spec.mode.attribute_scale != AttributeScale::Gaussian;
    let keep_network = model.spec.mode.network_scale == NetworkScale::Ordinal || data.network.has_missing();
    let mut draws = Vec::with_capacity(config.retained_per_chain());
    for k in 1..=config.iters {
        gibbs_iteration_cached(&mut state, model, fixed.as_ref()).map_err(|e| e.at_iteration(k))?;
        if k > config.burn_in && (k - config.burn_in) % config.thin == 0 {
            let last = state.panel.times() - 1;
            draws.push(Draw {
                chain,
                iteration: k,
                params: state.params.clone(),
                network_cuts: state.network_ordinal.as_ref().map(|v| v.cuts_for_export()),
                attribute_cuts: (!state.attribute_ordinal.is_empty())
                    .then(|| state.attribute_ordinal.iter().map(|v| v.cuts_for_export()).collect()),
                initial: state.initial.clone(),
                latent: keep_latent.then(|| state.panel.attributes.clone()),
                final_network: keep_network.then(|| state.panel.network.slice(last)),
            });
        }
    }
    Ok(draws)
}

/// Runs `config.chains` independent chains (in parallel) and pools the
/// retained draws, chain-major.
pub fn fit_bayes(data: &Panel, spec: &ModelSpec, prior: &PriorSpec, config: &ChainConfig) -> Result<PosteriorSamples> {
    config.validate()?;
    let model = build_model(data, spec, prior)?;
    let per_chain: Vec<Result<Vec<Draw>>> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_single_chain(data, &model, config, c))
        .collect();
    let mut draws = Vec::with_capacity(config.chains * config.retained_per_chain());
    for chain in per_chain {
        draws.extend(chain?);
    }
    Ok(PosteriorSamples {
        draws,
        layout: model.layout,
        spec: spec.clone(),
        config: *config,
        moves: "gibbs",
    })
}

/// The four-step sampler for fully observed Gaussian data.
pub fn run_chain(data: &Panel, mode: ModelMode, prior: &PriorSpec, config: &ChainConfig) -> Result<PosteriorSamples> {
    fit_bayes(data, &ModelSpec::new(mode), prior, config)
}

/// Cholesky-based check that a matrix is usable as a covariance.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    cholesky(m, "check").is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dyads, CovariateSpec, Direction, NetworkSeries};
    use rand::SeedableRng;

    fn ar_panel(m: usize, times: usize, p: usize, seed: u64) -> Panel {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut net = NetworkSeries::zeros(m, times, false);
        for t in 0..times {
            for (i, j) in dyads(m, false) {
                net.set(t, i, j, rng.random_range(-1.0..1.0));
            }
        }
        let x = (0..m * p * times).map(|_| rng.random_range(-1.0..1.0)).collect();
        Panel::new(net, AttributeSeries::new(m, p, times, x).unwrap(), CovariateSpec::default()).unwrap()
    }

    #[test]
    fn no_data_draws_from_prior() {
        let ne = NormalEquations::zeros(1, vec!["a".into(), "b".into()]);
        let v_inv = DMatrix::identity(2, 2) / 4.0;
        let info = beta_conditional(&ne, 1.0, &v_inv);
        let (mean, cov) = info.moments("prior").unwrap();
        assert_eq!(mean, DVector::zeros(2));
        assert!((cov - DMatrix::identity(2, 2) * 4.0).amax() < 1e-12);
    }

    #[test]
    fn hand_computed_two_parameter_conditional() {
        // single dyad, two transitions, w = (1, y_{t-1})
        let ys = [1.0, 2.0, 0.5];
        let mut net = NetworkSeries::zeros(2, 3, false);
        for (t, y) in ys.iter().enumerate() {
            net.set(t, 0, 1, *y);
        }
        let panel = Panel::network_only(net, CovariateSpec::default()).unwrap();
        let layout = Layout::new(ModelMode::default(), Terms::default(), &panel);
        let ne = accumulate_network_normal_equations(&panel, &layout).unwrap();
        let sigma2 = 0.5;
        let v = 10.0;
        let info = beta_conditional(&ne, sigma2, &(DMatrix::identity(2, 2) / v));
        let (mean, cov) = info.moments("hand").unwrap();
        // Q = [[2, 3], [3, 5]], l = (2.5, 3.0)
        let (q11, q12, q22) = (2.0 / sigma2 + 1.0 / v, 3.0 / sigma2, 5.0 / sigma2 + 1.0 / v);
        let det = q11 * q22 - q12 * q12;
        let inv = [[q22 / det, -q12 / det], [-q12 / det, q11 / det]];
        let (l1, l2) = (2.5 / sigma2, 3.0 / sigma2);
        assert!((mean[0] - (inv[0][0] * l1 + inv[0][1] * l2)).abs() < 1e-10);
        assert!((mean[1] - (inv[1][0] * l1 + inv[1][1] * l2)).abs() < 1e-10);
        assert!((cov[(0, 0)] - inv[0][0]).abs() < 1e-10);
        assert!((cov[(0, 1)] - inv[0][1]).abs() < 1e-10);
        assert!((cov[(1, 1)] - inv[1][1]).abs() < 1e-10);
    }

    #[test]
    fn flat_prior_beta_mean_is_mle() {
        let panel = ar_panel(6, 5, 1, 3);
        let layout = Layout::new(ModelMode::default(), Terms::default(), &panel);
        let ne = accumulate_network_normal_equations(&panel, &layout).unwrap();
        let (mle, _) = crate::mle::solve_network_mle(&ne, &MleOptions::default()).unwrap();
        let info = beta_conditional(&ne, 0.7, &(DMatrix::identity(layout.beta_len, layout.beta_len) * 1e-8));
        let (mean, _) = info.moments("flat").unwrap();
        assert!((mean - mle).amax() < 1e-3);
    }

    #[test]
    fn flat_prior_b_mean_is_mle() {
        let panel = ar_panel(6, 5, 2, 4);
        let layout = Layout::new(ModelMode::default(), Terms::default(), &panel);
        let ne = accumulate_attribute_normal_equations(&panel, &layout).unwrap();
        let (b_hat, _) = crate::mle::solve_attribute_mle(&ne, &MleOptions::default()).unwrap();
        // a non-identity Sigma checks the vec / Kronecker orientation
        let sigma = DMatrix::from_row_slice(2, 2, &[0.8, 0.3, 0.3, 0.5]);
        let sigma_inv = spd_inverse(&sigma, "s").unwrap();
        let d = 2 * layout.k_len;
        let info = b_conditional(&ne, &sigma_inv, &(DMatrix::identity(d, d) * 1e-8));
        let (mean, _) = info.moments("flat").unwrap();
        let expected = DVector::from_column_slice(b_hat.as_slice());
        assert!((mean - expected).amax() < 1e-3);
    }

    #[test]
    fn kronecker_conditional_matches_dense_construction() {
        let panel = ar_panel(4, 4, 2, 5);
        let layout = Layout::new(ModelMode::default(), Terms::default(), &panel);
        let ne = accumulate_attribute_normal_equations(&panel, &layout).unwrap();
        let sigma = DMatrix::from_row_slice(2, 2, &[0.9, -0.2, -0.2, 0.4]);
        let sigma_inv = spd_inverse(&sigma, "s").unwrap();
        let d = 2 * layout.k_len;
        let v_inv = DMatrix::identity(d, d) * 0.01;
        let info = b_conditional(&ne, &sigma_inv, &v_inv);
        // dense: x_{i,t} = (w_{i,t}ᵀ ⊗ I_p) vec(B) + e
        let mut precision = v_inv.clone();
        let mut linear = DVector::zeros(d);
        for t in 1..=panel.n() {
            for i in 0..4 {
                let w = crate::model::attribute_design_row(&panel, &layout, i, t).unwrap();
                let design = w.transpose().kronecker(&DMatrix::<f64>::identity(2, 2));
                let x = DVector::from_column_slice(panel.attributes.node(t, i));
                precision += design.transpose() * &sigma_inv * &design;
                linear += design.transpose() * &sigma_inv * x;
            }
        }
        assert!((info.precision - precision).amax() < 1e-10);
        assert!((info.linear - linear).amax() < 1e-10);
    }

    #[test]
    fn p_one_b_conditional_matches_beta_formula() {
        let panel = ar_panel(5, 4, 1, 6);
        let layout = Layout::new(ModelMode::default(), Terms::default(), &panel);
        let ne = accumulate_attribute_normal_equations(&panel, &layout).unwrap();
        let s2 = 0.6;
        let v_inv = DMatrix::identity(layout.k_len, layout.k_len) * 0.05;
        let b = b_conditional(&ne, &DMatrix::from_element(1, 1, 1.0 / s2), &v_inv);
        let beta = beta_conditional(&ne, s2, &v_inv);
        assert!((b.precision - beta.precision).amax() < 1e-12);
        assert!((b.linear - beta.linear).amax() < 1e-12);
    }

    #[test]
    fn sigma2_step_parameters() {
        // RSS = 0 and ν₀σ₀² = 1: 1/σ² ~ gamma((ν₀ + N)/2, 1/2), mean ν₀ + N
        let prior = PriorSpec::default();
        let mut params = McrParams::zeros(&Layout::with_dims(ModelMode::default(), Terms::default(), 3, 0, 3, 3));
        let mut rng = chain_rng(2, 0);
        let n = 6;
        let draws = 50_000;
        let mean_precision = (0..draws)
            .map(|_| {
                step_sigma2(&mut params, &prior, 0.0, n, &mut rng).unwrap();
                1.0 / params.sigma2
            })
            .sum::<f64>()
            / draws as f64;
        assert!((mean_precision - 7.0).abs() < 0.1, "{mean_precision}");
    }

    #[test]
    fn residual_counts() {
        let panel = ar_panel(3, 3, 0, 1);
        let layout = Layout::new(ModelMode::default(), Terms::default(), &panel);
        let ne = accumulate_network_normal_equations(&panel, &layout).unwrap();
        assert_eq!(ne.count, 6);
    }

    #[test]
    fn zero_rss_sigma_scale_is_s0_inverse() {
        // With RSS = 0 the Wishart scale is S₀⁻¹; check the sampled mean of Σ⁻¹.
        let prior = PriorSpec { s0: Some(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])), ..Default::default() };
        let layout = Layout::with_dims(ModelMode::default(), Terms::default(), 3, 2, 3, 3);
        let mut params = McrParams::zeros(&layout);
        let mut rng = chain_rng(3, 0);
        let count = 10;
        let mut acc = DMatrix::zeros(2, 2);
        let draws = 20_000;
        for _ in 0..draws {
            step_sigma(&mut params, &prior, &DMatrix::zeros(2, 2), count, &mut rng).unwrap();
            acc += spd_inverse(&params.sigma, "s").unwrap();
        }
        let expected = spd_inverse(&prior.s0(2), "s0").unwrap() * (prior.eta0(2) + count as f64);
        let got = acc / draws as f64;
        assert!(((got - &expected).amax() / expected.amax()) < 0.02);
    }

    #[test]
    fn seeded_chains_are_identical() {
        let panel = ar_panel(5, 6, 1, 8);
        let config = ChainConfig { iters: 60, burn_in: 10, thin: 5, seed: 42, ..Default::default() };
        let a = run_chain(&panel, ModelMode::default(), &PriorSpec::default(), &config).unwrap();
        let b = run_chain(&panel, ModelMode::default(), &PriorSpec::default(), &config).unwrap();
        assert_eq!(a.draws.len(), 10);
        assert_eq!(a.draws, b.draws);
        assert!(a.draws.iter().all(|d| d.params.sigma2 > 0.0 && is_positive_definite(&d.params.sigma)));
    }

    #[test]
    fn mismatched_direction_is_rejected() {
        let panel = ar_panel(4, 3, 1, 9);
        let err = fit_bayes(
            &panel,
            &ModelSpec::new(ModelMode::gaussian(Direction::Directed)),
            &PriorSpec::default(),
            &ChainConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, McrError::Invalid(_)));
    }
}
