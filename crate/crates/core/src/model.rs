//! Domain types for longitudinal network and attribute panels, and the
//! design-row algebra that turns the coevolution model into a pair of
//! linear regressions.
//!
//! Conventions used throughout the crate:
//!
//! * time points are `t = 0..=n`; transitions are `t = 1..=n`;
//! * node indices are 0-based internally (the CSV layer uses 1-based ids);
//! * matrices are flattened column-major whenever they are vectorized;
//! * `vech` stacks the lower triangle column by column, diagonal included.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{McrError, Result};

const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Undirected,
    Directed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NetworkScale {
    #[default]
    Gaussian,
    Ordinal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AttributeScale {
    #[default]
    Gaussian,
    Ordinal,
    Latent,
}

/// Which variant of the model is being fitted or simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct ModelMode {
    pub direction: Direction,
    pub network_scale: NetworkScale,
    pub attribute_scale: AttributeScale,
}

impl ModelMode {
    pub fn gaussian(direction: Direction) -> Self {
        ModelMode {
            direction,
            ..Default::default()
        }
    }

    pub fn latent(direction: Direction) -> Self {
        ModelMode {
            direction,
            network_scale: NetworkScale::Gaussian,
            attribute_scale: AttributeScale::Latent,
        }
    }

    pub fn is_directed(&self) -> bool {
        self.direction == Direction::Directed
    }

    /// Latent attributes are only identified up to rotation, so the
    /// homophily matrix is restricted to the diagonal.
    pub fn diagonal_homophily(&self) -> bool {
        self.attribute_scale == AttributeScale::Latent
    }

    /// Ordinal networks fix the latent noise variance at one.
    pub fn fixed_sigma2(&self) -> bool {
        self.network_scale == NetworkScale::Ordinal
    }

    /// Latent and ordinal attributes fix the attribute noise covariance at I.
    pub fn fixed_sigma(&self) -> bool {
        self.attribute_scale != AttributeScale::Gaussian
    }

    pub fn is_fully_observed_gaussian(&self) -> bool {
        self.network_scale == NetworkScale::Gaussian
            && self.attribute_scale == AttributeScale::Gaussian
    }

    pub fn homophily_kind(&self) -> HomophilyKind {
        if self.diagonal_homophily() {
            HomophilyKind::Diagonal
        } else if self.is_directed() {
            HomophilyKind::Kronecker
        } else {
            HomophilyKind::HalfVec
        }
    }
}

/// Optional model terms; switching one off yields the nested submodels
/// used by the forecast comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Terms {
    pub autoregression: bool,
    pub contagion: bool,
}

impl Default for Terms {
    fn default() -> Self {
        Terms {
            autoregression: true,
            contagion: true,
        }
    }
}

/// How the homophily coefficient vector `h` maps onto `H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HomophilyKind {
    /// `h = vech(H)`, `H` symmetric.
    HalfVec,
    /// `h = vec(H)`, regressor `x_j ⊗ x_i`.
    Kronecker,
    /// `h = diag(H)`, regressor `x_i ∘ x_j`.
    Diagonal,
}

impl HomophilyKind {
    pub fn len(&self, p: usize) -> usize {
        match self {
            HomophilyKind::HalfVec => p * (p + 1) / 2,
            HomophilyKind::Kronecker => p * p,
            HomophilyKind::Diagonal => p,
        }
    }
}

/// A time series of `m × m` sociomatrices `Y_0, …, Y_n`.
///
/// Values are stored densely as `values[(t * m + i) * m + j]`. The
/// diagonal is held at zero and never read. For undirected series both
/// `(i, j)` and `(j, i)` are stored and kept equal.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSeries {
    m: usize,
    times: usize,
    directed: bool,
    values: Vec<f64>,
    observed: Option<Vec<bool>>,
}

impl NetworkSeries {
    pub fn new(
        m: usize,
        times: usize,
        directed: bool,
        mut values: Vec<f64>,
        observed: Option<Vec<bool>>,
    ) -> Result<Self> {
        let len = m * m * times;
        if values.len() != len {
            return Err(McrError::Dimension(format!(
                "network tensor has {} values, expected {times} x {m} x {m} = {len}",
                values.len()
            )));
        }
        if let Some(mask) = &observed {
            if mask.len() != len {
                return Err(McrError::Dimension(format!(
                    "missing-entry mask has {} entries, expected {len}",
                    mask.len()
                )));
            }
        }
        for t in 0..times {
            for i in 0..m {
                values[(t * m + i) * m + i] = 0.0;
            }
        }
        if !directed {
            for t in 0..times {
                for i in 0..m {
                    for j in (i + 1)..m {
                        let a = (t * m + i) * m + j;
                        let b = (t * m + j) * m + i;
                        let obs_a = observed.as_ref().is_none_or(|o| o[a]);
                        let obs_b = observed.as_ref().is_none_or(|o| o[b]);
                        if obs_a != obs_b {
                            return Err(McrError::Asymmetric(format!(
                                "undirected network observed at ({t},{i},{j}) but not at ({t},{j},{i})"
                            )));
                        }
                        if obs_a && (values[a] - values[b]).abs() > SYMMETRY_TOL {
                            return Err(McrError::Asymmetric(format!(
                                "undirected network has y[{t},{i},{j}] = {} but y[{t},{j},{i}] = {}",
                                values[a], values[b]
                            )));
                        }
                    }
                }
            }
        }
        if let Some(mask) = &observed {
            for (v, &o) in values.iter_mut().zip(mask) {
                if !o {
                    *v = 0.0;
                }
            }
        }
        let observed = observed.filter(|mask| {
            (0..len).any(|k| {
                let i = (k / m) % m;
                let j = k % m;
                i != j && !mask[k]
            })
        });
        Ok(NetworkSeries {
            m,
            times,
            directed,
            values,
            observed,
        })
    }

    pub fn zeros(m: usize, times: usize, directed: bool) -> Self {
        NetworkSeries {
            m,
            times,
            directed,
            values: vec![0.0; m * m * times],
            observed: None,
        }
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of time points, `n + 1`.
    #[inline]
    pub fn times(&self) -> usize {
        self.times
    }

    /// Number of transitions `n`.
    #[inline]
    pub fn n(&self) -> usize {
        self.times.saturating_sub(1)
    }

    #[inline]
    pub fn directed(&self) -> bool {
        self.directed
    }

    #[inline]
    fn index(&self, t: usize, i: usize, j: usize) -> usize {
        (t * self.m + i) * self.m + j
    }

    #[inline]
    pub fn get(&self, t: usize, i: usize, j: usize) -> f64 {
        self.values[self.index(t, i, j)]
    }

    /// Writes `y[t,i,j]`, mirroring into `y[t,j,i]` for undirected series.
    /// Diagonal writes are ignored.
    #[inline]
    pub fn set(&mut self, t: usize, i: usize, j: usize, value: f64) {
        if i == j {
            return;
        }
        let a = self.index(t, i, j);
        self.values[a] = value;
        if !self.directed {
            let b = self.index(t, j, i);
            self.values[b] = value;
        }
    }

    #[inline]
    pub fn is_observed(&self, t: usize, i: usize, j: usize) -> bool {
        i != j
            && self
                .observed
                .as_ref()
                .is_none_or(|o| o[self.index(t, i, j)])
    }

    pub fn has_missing(&self) -> bool {
        self.observed.is_some()
    }

    pub fn missing_count(&self) -> usize {
        self.dyads()
            .map(|(i, j)| {
                (0..self.times)
                    .filter(|&t| !self.is_observed(t, i, j))
                    .count()
            })
            .sum()
    }

    /// Row `y_{i·,t}` with a zero on the diagonal.
    pub fn row(&self, t: usize, i: usize) -> &[f64] {
        let start = self.index(t, i, 0);
        &self.values[start..start + self.m]
    }

    pub fn slice(&self, t: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |i, j| self.get(t, i, j))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The modelled dyads: `i < j` when undirected, `i ≠ j` when directed.
    pub fn dyads(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        dyads(self.m, self.directed)
    }

    /// Drops the observation mask, treating the current values as complete.
    pub fn into_complete(mut self) -> Self {
        self.observed = None;
        self
    }

    /// Keeps time points `0..times`.
    pub fn truncated(&self, times: usize) -> Self {
        let len = self.m * self.m * times;
        NetworkSeries {
            m: self.m,
            times,
            directed: self.directed,
            values: self.values[..len].to_vec(),
            observed: self.observed.as_ref().map(|o| o[..len].to_vec()),
        }
    }
}

/// Enumerates modelled dyads in a fixed order.
pub fn dyads(m: usize, directed: bool) -> impl Iterator<Item = (usize, usize)> {
    (0..m).flat_map(move |i| {
        let start = if directed { 0 } else { i + 1 };
        (start..m)
            .filter(move |&j| j != i)
            .map(move |j| (i, j))
    })
}

pub fn dyad_count(m: usize, directed: bool) -> usize {
    if directed {
        m * m.saturating_sub(1)
    } else {
        m * m.saturating_sub(1) / 2
    }
}

/// Position of dyad `(i, j)` in the [`dyads`] enumeration.
#[inline]
pub fn dyad_index(m: usize, directed: bool, i: usize, j: usize) -> usize {
    if directed {
        i * (m - 1) + if j > i { j - 1 } else { j }
    } else {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        a * m - a * (a + 1) / 2 + (b - a - 1)
    }
}

/// A time series of `m × p` nodal attribute matrices `X_0, …, X_n`,
/// stored as `values[(t * m + i) * p + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSeries {
    m: usize,
    p: usize,
    times: usize,
    values: Vec<f64>,
}

impl AttributeSeries {
    pub fn new(m: usize, p: usize, times: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != m * p * times {
            return Err(McrError::Dimension(format!(
                "attribute tensor has {} values, expected {times} x {m} x {p}",
                values.len()
            )));
        }
        Ok(AttributeSeries {
            m,
            p,
            times,
            values,
        })
    }

    pub fn zeros(m: usize, p: usize, times: usize) -> Self {
        AttributeSeries {
            m,
            p,
            times,
            values: vec![0.0; m * p * times],
        }
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }
    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }
    #[inline]
    pub fn times(&self) -> usize {
        self.times
    }

    #[inline]
    pub fn get(&self, t: usize, i: usize, k: usize) -> f64 {
        self.values[(t * self.m + i) * self.p + k]
    }

    #[inline]
    pub fn set(&mut self, t: usize, i: usize, k: usize, v: f64) {
        self.values[(t * self.m + i) * self.p + k] = v;
    }

    /// `x_{i,t}` as a slice of length `p`.
    #[inline]
    pub fn node(&self, t: usize, i: usize) -> &[f64] {
        let start = (t * self.m + i) * self.p;
        &self.values[start..start + self.p]
    }

    #[inline]
    pub fn node_mut(&mut self, t: usize, i: usize) -> &mut [f64] {
        let start = (t * self.m + i) * self.p;
        &mut self.values[start..start + self.p]
    }

    pub fn slice(&self, t: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.p, |i, k| self.get(t, i, k))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn truncated(&self, times: usize) -> Self {
        AttributeSeries {
            m: self.m,
            p: self.p,
            times,
            values: self.values[..self.m * self.p * times].to_vec(),
        }
    }
}

/// Exogenous covariates `s_{ij}` (dyads) and `s_i` (nodes).
///
/// When a block is absent it defaults to a one-hot encoding, giving one
/// free intercept per dyad (`μ_{ij}`) and per node (`θ_i`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CovariateSpec {
    pub dyad: Option<DyadCovariates>,
    pub node: Option<NodeCovariates>,
}

/// `values[(i * m + j) * q + k]`; for undirected models the entry for
/// `(min(i,j), max(i,j))` is read.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadCovariates {
    pub q: usize,
    pub values: Vec<f64>,
}

/// `values[i * q + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCovariates {
    pub q: usize,
    pub values: Vec<f64>,
}

impl CovariateSpec {
    /// A single shared intercept in each line.
    pub fn intercepts(m: usize) -> Self {
        CovariateSpec {
            dyad: Some(DyadCovariates { q: 1, values: vec![1.0; m * m] }),
            node: Some(NodeCovariates { q: 1, values: vec![1.0; m] }),
        }
    }

    pub fn q_dyad(&self, m: usize, directed: bool) -> usize {
        self.dyad
            .as_ref()
            .map_or_else(|| dyad_count(m, directed), |d| d.q)
    }

    pub fn q_node(&self, m: usize) -> usize {
        self.node.as_ref().map_or(m, |d| d.q)
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if let Some(d) = &self.dyad {
            if d.values.len() != m * m * d.q {
                return Err(McrError::Dimension(format!(
                    "dyad covariates have {} values, expected {m} x {m} x {}",
                    d.values.len(),
                    d.q
                )));
            }
        }
        if let Some(n) = &self.node {
            if n.values.len() != m * n.q {
                return Err(McrError::Dimension(format!(
                    "node covariates have {} values, expected {m} x {}",
                    n.values.len(),
                    n.q
                )));
            }
        }
        Ok(())
    }

    /// Writes `s_{ij}` into `out` (length `q_dyad`).
    pub fn dyad_row_into(&self, m: usize, directed: bool, i: usize, j: usize, out: &mut [f64]) {
        match &self.dyad {
            Some(d) => {
                let (a, b) = if directed || i < j { (i, j) } else { (j, i) };
                let start = (a * m + b) * d.q;
                out.copy_from_slice(&d.values[start..start + d.q]);
            }
            None => {
                out.fill(0.0);
                out[dyad_index(m, directed, i, j)] = 1.0;
            }
        }
    }

    /// `γᵀ s_{ij}`.
    pub fn dyad_dot(&self, m: usize, directed: bool, i: usize, j: usize, gamma: &[f64]) -> f64 {
        match &self.dyad {
            Some(d) => {
                let (a, b) = if directed || i < j { (i, j) } else { (j, i) };
                let start = (a * m + b) * d.q;
                d.values[start..start + d.q]
                    .iter()
                    .zip(gamma)
                    .map(|(s, g)| s * g)
                    .sum()
            }
            None => gamma[dyad_index(m, directed, i, j)],
        }
    }

    pub fn node_row_into(&self, i: usize, out: &mut [f64]) {
        match &self.node {
            Some(n) => out.copy_from_slice(&n.values[i * n.q..(i + 1) * n.q]),
            None => {
                out.fill(0.0);
                out[i] = 1.0;
            }
        }
    }

    /// `Γ s_i` accumulated into `out` (length `p`).
    pub fn node_term_into(&self, i: usize, theta_coef: &DMatrix<f64>, out: &mut [f64]) {
        match &self.node {
            Some(n) => {
                let s = &n.values[i * n.q..(i + 1) * n.q];
                for (k, o) in out.iter_mut().enumerate() {
                    *o = s
                        .iter()
                        .enumerate()
                        .map(|(c, v)| theta_coef[(k, c)] * v)
                        .sum();
                }
            }
            None => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = theta_coef[(k, i)];
                }
            }
        }
    }
}

/// A network series with its (possibly latent) attributes and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub network: NetworkSeries,
    pub attributes: AttributeSeries,
    pub covariates: CovariateSpec,
}

impl Panel {
    pub fn new(
        network: NetworkSeries,
        attributes: AttributeSeries,
        covariates: CovariateSpec,
    ) -> Result<Self> {
        if attributes.m() != network.m() || attributes.times() != network.times() {
            return Err(McrError::Dimension(format!(
                "attributes are {} nodes x {} times but the network is {} nodes x {} times",
                attributes.m(),
                attributes.times(),
                network.m(),
                network.times()
            )));
        }
        covariates.validate(network.m())?;
        Ok(Panel {
            network,
            attributes,
            covariates,
        })
    }

    /// A panel without nodal attributes (`p = 0`).
    pub fn network_only(network: NetworkSeries, covariates: CovariateSpec) -> Result<Self> {
        let attributes = AttributeSeries::zeros(network.m(), 0, network.times());
        Panel::new(network, attributes, covariates)
    }

    pub fn m(&self) -> usize {
        self.network.m()
    }
    pub fn p(&self) -> usize {
        self.attributes.p()
    }
    pub fn n(&self) -> usize {
        self.network.n()
    }
    pub fn times(&self) -> usize {
        self.network.times()
    }

    /// Keeps time points `0..times`.
    pub fn truncated(&self, times: usize) -> Panel {
        Panel {
            network: self.network.truncated(times),
            attributes: self.attributes.truncated(times),
            covariates: self.covariates.clone(),
        }
    }
}

/// Parameters of the coevolution model.
///
/// Network line: `y_{ij,t+1} = γᵀs_{ij} + α₁ y_{ij,t} + α₂ y_{ji,t} + x_iᵀ H x_j + ε`.
/// Attribute line: `x_{i,t+1} = Γ s_i + A x_i + C₁ X_tᵀ y_{i·,t} + C₂ X_tᵀ y_{·i,t} + e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McrParams {
    #[serde(with = "crate::io::serde_vector")]
    pub gamma: DVector<f64>,
    pub alpha1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<f64>,
    #[serde(rename = "H", with = "crate::io::serde_matrix")]
    pub h: DMatrix<f64>,
    #[serde(rename = "Gamma", with = "crate::io::serde_matrix")]
    pub theta_coef: DMatrix<f64>,
    #[serde(rename = "A", with = "crate::io::serde_matrix")]
    pub a: DMatrix<f64>,
    #[serde(rename = "C1", with = "crate::io::serde_matrix")]
    pub c1: DMatrix<f64>,
    #[serde(
        rename = "C2",
        default,
        skip_serializing_if = "Option::is_none",
        with = "crate::io::serde_opt_matrix"
    )]
    pub c2: Option<DMatrix<f64>>,
    pub sigma2: f64,
    #[serde(rename = "Sigma", with = "crate::io::serde_matrix")]
    pub sigma: DMatrix<f64>,
}

impl McrParams {
    /// All-zero coefficients with unit noise.
    pub fn zeros(layout: &Layout) -> Self {
        let p = layout.p;
        let directed = layout.mode.is_directed();
        McrParams {
            gamma: DVector::zeros(layout.q_dyad),
            alpha1: 0.0,
            alpha2: directed.then_some(0.0),
            h: DMatrix::zeros(p, p),
            theta_coef: DMatrix::zeros(p, layout.q_node),
            a: DMatrix::zeros(p, p),
            c1: DMatrix::zeros(p, p),
            c2: directed.then(|| DMatrix::zeros(p, p)),
            sigma2: 1.0,
            sigma: DMatrix::identity(p, p),
        }
    }

    pub fn p(&self) -> usize {
        self.a.nrows()
    }

    /// Checks that shapes and mode constraints agree with `layout`.
    pub fn validate(&self, layout: &Layout) -> Result<()> {
        let p = layout.p;
        let mut problems = Vec::new();
        let directed = layout.mode.is_directed();
        if self.gamma.len() != layout.q_dyad {
            problems.push(format!(
                "gamma has length {}, expected {}",
                self.gamma.len(),
                layout.q_dyad
            ));
        }
        for (name, mat) in [("H", &self.h), ("A", &self.a), ("C1", &self.c1), ("Sigma", &self.sigma)] {
            if mat.shape() != (p, p) {
                problems.push(format!("{name} is {:?}, expected ({p}, {p})", mat.shape()));
            }
        }
        if self.theta_coef.shape() != (p, layout.q_node) {
            problems.push(format!(
                "Gamma is {:?}, expected ({p}, {})",
                self.theta_coef.shape(),
                layout.q_node
            ));
        }
        if directed != self.alpha2.is_some() {
            problems.push("alpha2 must be present exactly for directed models".into());
        }
        match &self.c2 {
            Some(c2) if directed && c2.shape() != (p, p) => {
                problems.push(format!("C2 is {:?}, expected ({p}, {p})", c2.shape()))
            }
            Some(_) if !directed => problems.push("C2 given for an undirected model".into()),
            None if directed => problems.push("C2 missing for a directed model".into()),
            _ => {}
        }
        if !(self.sigma2 > 0.0) {
            problems.push(format!("sigma2 = {} must be positive", self.sigma2));
        }
        if problems.is_empty() && p > 0 {
            if !directed && !is_symmetric(&self.h, SYMMETRY_TOL) {
                problems.push("H must be symmetric for undirected models".into());
            }
            if layout.mode.diagonal_homophily() && !is_diagonal(&self.h) {
                problems.push("H must be diagonal when attributes are latent".into());
            }
            if !is_symmetric(&self.sigma, SYMMETRY_TOL) || self.sigma.clone().cholesky().is_none() {
                problems.push("Sigma must be symmetric positive definite".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(McrError::Invalid(problems))
        }
    }

    /// Expected `y_{ij,t}` given the state at `t - 1` (`t ≥ 1`).
    pub fn network_mean(&self, panel: &Panel, i: usize, j: usize, t: usize) -> f64 {
        let net = &panel.network;
        let m = net.m();
        let directed = net.directed();
        let mut mean = panel
            .covariates
            .dyad_dot(m, directed, i, j, self.gamma.as_slice());
        mean += self.alpha1 * net.get(t - 1, i, j);
        if let Some(a2) = self.alpha2 {
            mean += a2 * net.get(t - 1, j, i);
        }
        mean + bilinear(
            panel.attributes.node(t - 1, i),
            &self.h,
            panel.attributes.node(t - 1, j),
        )
    }

    /// Expected `x_{i,t}` given the state at `t - 1` (`t ≥ 1`), written into `out`.
    pub fn attribute_mean_into(&self, panel: &Panel, i: usize, t: usize, out: &mut [f64]) {
        let p = self.p();
        if p == 0 {
            return;
        }
        panel.covariates.node_term_into(i, &self.theta_coef, out);
        let x = &panel.attributes;
        let xi = x.node(t - 1, i);
        let mut send = vec![0.0; p];
        let mut recv = vec![0.0; p];
        contagion_sums(panel, i, t - 1, &mut send, &mut recv);
        for k in 0..p {
            let mut v = 0.0;
            for l in 0..p {
                v += self.a[(k, l)] * xi[l] + self.c1[(k, l)] * send[l];
            }
            if let Some(c2) = &self.c2 {
                for l in 0..p {
                    v += c2[(k, l)] * recv[l];
                }
            }
            out[k] += v;
        }
    }

    pub fn attribute_mean(&self, panel: &Panel, i: usize, t: usize) -> DVector<f64> {
        let mut out = DVector::zeros(self.p());
        self.attribute_mean_into(panel, i, t, out.as_mut_slice());
        out
    }
}

/// `X_tᵀ y_{i·,t}` into `send` and `X_tᵀ y_{·i,t}` into `recv`.
pub fn contagion_sums(panel: &Panel, i: usize, t: usize, send: &mut [f64], recv: &mut [f64]) {
    let net = &panel.network;
    let x = &panel.attributes;
    send.fill(0.0);
    recv.fill(0.0);
    let row = net.row(t, i);
    for (j, &yij) in row.iter().enumerate() {
        if j == i {
            continue;
        }
        let yji = net.get(t, j, i);
        let xj = x.node(t, j);
        for k in 0..send.len() {
            send[k] += xj[k] * yij;
            recv[k] += xj[k] * yji;
        }
    }
}

#[inline]
pub fn bilinear(xi: &[f64], h: &DMatrix<f64>, xj: &[f64]) -> f64 {
    let mut s = 0.0;
    for (c, &b) in xj.iter().enumerate() {
        if b == 0.0 {
            continue;
        }
        let mut col = 0.0;
        for (r, &a) in xi.iter().enumerate() {
            col += a * h[(r, c)];
        }
        s += col * b;
    }
    s
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
}

/// Half-vectorization: the lower triangle of a symmetric matrix, stacked
/// column by column, diagonal included.
pub fn vech(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    if !m.is_square() {
        return Err(McrError::Dimension(format!(
            "vech needs a square matrix, got {:?}",
            m.shape()
        )));
    }
    if !is_symmetric(m, SYMMETRY_TOL) {
        return Err(McrError::Asymmetric("vech input".into()));
    }
    let p = m.nrows();
    let mut out = Vec::with_capacity(p * (p + 1) / 2);
    for c in 0..p {
        for r in c..p {
            out.push(m[(r, c)]);
        }
    }
    Ok(DVector::from_vec(out))
}

/// Inverse of [`vech`].
pub fn unvech(v: &[f64], p: usize) -> Result<DMatrix<f64>> {
    if v.len() != p * (p + 1) / 2 {
        return Err(McrError::Dimension(format!(
            "vech vector of length {} does not match p = {p}",
            v.len()
        )));
    }
    let mut m = DMatrix::zeros(p, p);
    let mut idx = 0;
    for c in 0..p {
        for r in c..p {
            m[(r, c)] = v[idx];
            m[(c, r)] = v[idx];
            idx += 1;
        }
    }
    Ok(m)
}

/// Regressor `x_{ij}` with `hᵀ x_{ij} = x_iᵀ H x_j` for the homophily
/// parameterization implied by `mode`.
pub fn homophily_regressor(x_i: &[f64], x_j: &[f64], mode: &ModelMode) -> Result<DVector<f64>> {
    if x_i.len() != x_j.len() {
        return Err(McrError::Dimension(format!(
            "attribute vectors have lengths {} and {}",
            x_i.len(),
            x_j.len()
        )));
    }
    let kind = mode.homophily_kind();
    let mut out = vec![0.0; kind.len(x_i.len())];
    homophily_into(x_i, x_j, kind, &mut out);
    Ok(DVector::from_vec(out))
}

#[inline]
pub(crate) fn homophily_into(x_i: &[f64], x_j: &[f64], kind: HomophilyKind, out: &mut [f64]) {
    let p = x_i.len();
    match kind {
        HomophilyKind::HalfVec => {
            let mut idx = 0;
            for c in 0..p {
                for r in c..p {
                    out[idx] = if r == c {
                        x_i[r] * x_j[r]
                    } else {
                        x_i[r] * x_j[c] + x_j[r] * x_i[c]
                    };
                    idx += 1;
                }
            }
        }
        HomophilyKind::Kronecker => {
            for c in 0..p {
                for r in 0..p {
                    out[c * p + r] = x_j[c] * x_i[r];
                }
            }
        }
        HomophilyKind::Diagonal => {
            for k in 0..p {
                out[k] = x_i[k] * x_j[k];
            }
        }
    }
}

/// Column layout of the network coefficient vector `β` and the attribute
/// coefficient matrix `B`.
///
/// `β = (γ, α₁[, α₂], h)`; `B = [Γ A C₁[ C₂]]` with `B` being `p × K`.
/// Terms switched off in [`Terms`] are dropped from the layout and held
/// at zero in [`McrParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub mode: ModelMode,
    pub terms: Terms,
    pub m: usize,
    pub p: usize,
    pub q_dyad: usize,
    pub q_node: usize,
    pub homophily: HomophilyKind,
    pub beta_len: usize,
    pub alpha1_col: Option<usize>,
    pub alpha2_col: Option<usize>,
    pub h_start: usize,
    pub k_len: usize,
    pub a_start: usize,
    pub c1_start: Option<usize>,
    pub c2_start: Option<usize>,
}

impl Layout {
    pub fn new(mode: ModelMode, terms: Terms, panel: &Panel) -> Self {
        let m = panel.m();
        Layout::with_dims(
            mode,
            terms,
            m,
            panel.p(),
            panel.covariates.q_dyad(m, mode.is_directed()),
            panel.covariates.q_node(m),
        )
    }

    pub fn with_dims(
        mode: ModelMode,
        terms: Terms,
        m: usize,
        p: usize,
        q_dyad: usize,
        q_node: usize,
    ) -> Self {
        let directed = mode.is_directed();
        let homophily = mode.homophily_kind();
        let mut col = q_dyad;
        let (alpha1_col, alpha2_col) = if terms.autoregression {
            let a1 = col;
            col += 1;
            let a2 = directed.then(|| {
                col += 1;
                a1 + 1
            });
            (Some(a1), a2)
        } else {
            (None, None)
        };
        let h_start = col;
        let beta_len = col + homophily.len(p);

        let a_start = q_node;
        let mut k = q_node + p;
        let (c1_start, c2_start) = if terms.contagion && p > 0 {
            let c1 = k;
            k += p;
            let c2 = directed.then(|| {
                k += p;
                c1 + p
            });
            (Some(c1), c2)
        } else {
            (None, None)
        };
        Layout {
            mode,
            terms,
            m,
            p,
            q_dyad,
            q_node,
            homophily,
            beta_len,
            alpha1_col,
            alpha2_col,
            h_start,
            k_len: k,
            a_start,
            c1_start,
            c2_start,
        }
    }

    pub fn directed(&self) -> bool {
        self.mode.is_directed()
    }

    pub fn h_len(&self) -> usize {
        self.homophily.len(self.p)
    }

    /// Human-readable names of the `β` columns.
    pub fn beta_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = (0..self.q_dyad).map(|k| format!("gamma[{k}]")).collect();
        if self.alpha1_col.is_some() {
            labels.push(if self.directed() { "alpha1".into() } else { "alpha".into() });
        }
        if self.alpha2_col.is_some() {
            labels.push("alpha2".into());
        }
        for k in 0..self.h_len() {
            labels.push(format!("h[{k}]"));
        }
        labels
    }

    /// Human-readable names of the columns of `B`.
    pub fn b_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = (0..self.q_node).map(|k| format!("Gamma[:,{k}]")).collect();
        labels.extend((0..self.p).map(|k| format!("A[:,{k}]")));
        if self.c1_start.is_some() {
            let name = if self.directed() { "C1" } else { "C" };
            labels.extend((0..self.p).map(|k| format!("{name}[:,{k}]")));
        }
        if self.c2_start.is_some() {
            labels.extend((0..self.p).map(|k| format!("C2[:,{k}]")));
        }
        labels
    }

    /// Writes `w_{ij,t}` into `out` (length `beta_len`).
    pub(crate) fn network_row_into(&self, panel: &Panel, i: usize, j: usize, t: usize, out: &mut [f64]) {
        let net = &panel.network;
        let directed = self.directed();
        panel
            .covariates
            .dyad_row_into(self.m, directed, i, j, &mut out[..self.q_dyad]);
        if let Some(c) = self.alpha1_col {
            out[c] = net.get(t - 1, i, j);
        }
        if let Some(c) = self.alpha2_col {
            out[c] = net.get(t - 1, j, i);
        }
        if self.p > 0 {
            homophily_into(
                panel.attributes.node(t - 1, i),
                panel.attributes.node(t - 1, j),
                self.homophily,
                &mut out[self.h_start..self.beta_len],
            );
        }
    }

    /// Writes `w_{i,t}` into `out` (length `k_len`).
    pub(crate) fn attribute_row_into(&self, panel: &Panel, i: usize, t: usize, out: &mut [f64]) {
        panel.covariates.node_row_into(i, &mut out[..self.q_node]);
        let p = self.p;
        out[self.a_start..self.a_start + p].copy_from_slice(panel.attributes.node(t - 1, i));
        if let Some(c1) = self.c1_start {
            let (send, rest) = out[c1..].split_at_mut(p);
            match self.c2_start {
                Some(_) => contagion_sums(panel, i, t - 1, send, &mut rest[..p]),
                None => {
                    let mut recv = vec![0.0; p];
                    contagion_sums(panel, i, t - 1, send, &mut recv);
                }
            }
        }
    }

    pub fn pack_beta(&self, params: &McrParams) -> DVector<f64> {
        let mut beta = DVector::zeros(self.beta_len);
        beta.rows_mut(0, self.q_dyad).copy_from(&params.gamma);
        if let Some(c) = self.alpha1_col {
            beta[c] = params.alpha1;
        }
        if let Some(c) = self.alpha2_col {
            beta[c] = params.alpha2.unwrap_or(0.0);
        }
        let p = self.p;
        let h = &params.h;
        let hs = self.h_start;
        match self.homophily {
            HomophilyKind::HalfVec => {
                let mut idx = hs;
                for c in 0..p {
                    for r in c..p {
                        beta[idx] = h[(r, c)];
                        idx += 1;
                    }
                }
            }
            HomophilyKind::Kronecker => {
                for c in 0..p {
                    for r in 0..p {
                        beta[hs + c * p + r] = h[(r, c)];
                    }
                }
            }
            HomophilyKind::Diagonal => {
                for k in 0..p {
                    beta[hs + k] = h[(k, k)];
                }
            }
        }
        beta
    }

    pub fn unpack_beta(&self, beta: &DVector<f64>, params: &mut McrParams) {
        params.gamma = beta.rows(0, self.q_dyad).into_owned();
        params.alpha1 = self.alpha1_col.map_or(0.0, |c| beta[c]);
        if self.directed() {
            params.alpha2 = Some(self.alpha2_col.map_or(0.0, |c| beta[c]));
        }
        let p = self.p;
        let hs = self.h_start;
        let mut h = DMatrix::zeros(p, p);
        match self.homophily {
            HomophilyKind::HalfVec => {
                let mut idx = hs;
                for c in 0..p {
                    for r in c..p {
                        h[(r, c)] = beta[idx];
                        h[(c, r)] = beta[idx];
                        idx += 1;
                    }
                }
            }
            HomophilyKind::Kronecker => {
                for c in 0..p {
                    for r in 0..p {
                        h[(r, c)] = beta[hs + c * p + r];
                    }
                }
            }
            HomophilyKind::Diagonal => {
                for k in 0..p {
                    h[(k, k)] = beta[hs + k];
                }
            }
        }
        params.h = h;
    }

    /// `B = [Γ A C₁[ C₂]]`, `p × K`.
    pub fn pack_b(&self, params: &McrParams) -> DMatrix<f64> {
        let p = self.p;
        let mut b = DMatrix::zeros(p, self.k_len);
        b.columns_mut(0, self.q_node).copy_from(&params.theta_coef);
        b.columns_mut(self.a_start, p).copy_from(&params.a);
        if let Some(c) = self.c1_start {
            b.columns_mut(c, p).copy_from(&params.c1);
        }
        if let (Some(c), Some(c2)) = (self.c2_start, &params.c2) {
            b.columns_mut(c, p).copy_from(c2);
        }
        b
    }

    pub fn unpack_b(&self, b: &DMatrix<f64>, params: &mut McrParams) {
        let p = self.p;
        params.theta_coef = b.columns(0, self.q_node).into_owned();
        params.a = b.columns(self.a_start, p).into_owned();
        params.c1 = match self.c1_start {
            Some(c) => b.columns(c, p).into_owned(),
            None => DMatrix::zeros(p, p),
        };
        if self.directed() {
            params.c2 = Some(match self.c2_start {
                Some(c) => b.columns(c, p).into_owned(),
                None => DMatrix::zeros(p, p),
            });
        }
    }
}

/// `w_{ij,t} = (s_{ij}, y_{ij,t−1}[, y_{ji,t−1}], x_{ij,t−1})`.
pub fn network_design_row(
    panel: &Panel,
    layout: &Layout,
    i: usize,
    j: usize,
    t: usize,
) -> Result<DVector<f64>> {
    if t == 0 {
        return Err(McrError::NoLag);
    }
    if i == j {
        return Err(McrError::Diagonal(i));
    }
    if t > panel.n() || i >= panel.m() || j >= panel.m() {
        return Err(McrError::Dimension(format!(
            "(i, j, t) = ({i}, {j}, {t}) outside a panel with m = {}, n = {}",
            panel.m(),
            panel.n()
        )));
    }
    let mut row = DVector::zeros(layout.beta_len);
    layout.network_row_into(panel, i, j, t, row.as_mut_slice());
    Ok(row)
}

/// `w_{i,t} = (s_i, x_{i,t−1}, X_{t−1}ᵀ y_{i·,t−1}[, X_{t−1}ᵀ y_{·i,t−1}])`.
pub fn attribute_design_row(panel: &Panel, layout: &Layout, i: usize, t: usize) -> Result<DVector<f64>> {
    if t == 0 {
        return Err(McrError::NoLag);
    }
    if t > panel.n() || i >= panel.m() {
        return Err(McrError::Dimension(format!(
            "(i, t) = ({i}, {t}) outside a panel with m = {}, n = {}",
            panel.m(),
            panel.n()
        )));
    }
    let mut row = DVector::zeros(layout.k_len);
    layout.attribute_row_into(panel, i, t, row.as_mut_slice());
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::assert_close;
    use proptest::prelude::*;

    mod approx_eq {
        macro_rules! assert_close {
            ($a:expr, $b:expr, $tol:expr) => {{
                let (a, b): (f64, f64) = ($a, $b);
                assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {})", $tol);
            }};
        }
        pub(crate) use assert_close;
    }

    fn panel_from(m: usize, times: usize, p: usize, directed: bool, seed: u64) -> Panel {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut net = NetworkSeries::zeros(m, times, directed);
        for t in 0..times {
            for (i, j) in dyads(m, directed) {
                net.set(t, i, j, rng.random_range(-1.0..1.0));
            }
        }
        let x: Vec<f64> = (0..m * p * times).map(|_| rng.random_range(-1.0..1.0)).collect();
        Panel::new(
            net,
            AttributeSeries::new(m, p, times, x).unwrap(),
            CovariateSpec::default(),
        )
        .unwrap()
    }

    #[test]
    fn vech_small_cases() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(vech(&m).unwrap().as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(
            vech(&DMatrix::identity(2, 2)).unwrap().as_slice(),
            &[1.0, 0.0, 1.0]
        );
        assert_eq!(vech(&DMatrix::from_element(1, 1, 4.5)).unwrap().as_slice(), &[4.5]);
    }

    #[test]
    fn vech_rejects_bad_input() {
        assert!(matches!(
            vech(&DMatrix::zeros(2, 3)),
            Err(McrError::Dimension(_))
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.5, 3.0]);
        assert!(matches!(vech(&asym), Err(McrError::Asymmetric(_))));
    }

    #[test]
    fn homophily_two_dimensional_layout() {
        let (a1, a2, b1, b2) = (1.5, -2.0, 0.5, 3.0);
        let r = homophily_regressor(&[a1, a2], &[b1, b2], &ModelMode::default()).unwrap();
        assert_eq!(r.as_slice(), &[a1 * b1, a1 * b2 + a2 * b1, a2 * b2]);
        let swapped = homophily_regressor(&[b1, b2], &[a1, a2], &ModelMode::default()).unwrap();
        assert_eq!(r, swapped);

        let diag = homophily_regressor(&[1.0, 2.0], &[3.0, 4.0], &ModelMode::latent(Direction::Undirected))
            .unwrap();
        assert_eq!(diag.as_slice(), &[3.0, 8.0]);

        assert!(homophily_regressor(&[1.0], &[1.0, 2.0], &ModelMode::default()).is_err());
    }

    proptest! {
        #[test]
        fn vech_identity(entries in proptest::collection::vec(-5.0f64..5.0, 9), xi in proptest::collection::vec(-3.0f64..3.0, 3), xj in proptest::collection::vec(-3.0f64..3.0, 3)) {
            let raw = DMatrix::from_vec(3, 3, entries);
            let h = (&raw + raw.transpose()) * 0.5;
            let v = vech(&h).unwrap();
            prop_assert_eq!(unvech(v.as_slice(), 3).unwrap(), h.clone());
            let r = homophily_regressor(&xi, &xj, &ModelMode::default()).unwrap();
            let direct = bilinear(&xi, &h, &xj);
            prop_assert!((v.dot(&r) - direct).abs() < 1e-12);
        }

        #[test]
        fn kronecker_identity(entries in proptest::collection::vec(-5.0f64..5.0, 9), xi in proptest::collection::vec(-3.0f64..3.0, 3), xj in proptest::collection::vec(-3.0f64..3.0, 3)) {
            let h = DMatrix::from_vec(3, 3, entries);
            let r = homophily_regressor(&xi, &xj, &ModelMode::gaussian(Direction::Directed)).unwrap();
            let vec_h = DVector::from_column_slice(h.as_slice());
            prop_assert!((vec_h.dot(&r) - bilinear(&xi, &h, &xj)).abs() < 1e-12);
        }
    }

    #[test]
    fn asymmetric_undirected_rejected() {
        let mut values = vec![0.0; 2 * 2];
        values[1] = 1.0;
        values[2] = 2.0;
        assert!(matches!(
            NetworkSeries::new(2, 1, false, values, None),
            Err(McrError::Asymmetric(_))
        ));
    }

    #[test]
    fn dyad_index_matches_enumeration() {
        for directed in [false, true] {
            for (k, (i, j)) in dyads(6, directed).enumerate() {
                assert_eq!(dyad_index(6, directed, i, j), k);
                if !directed {
                    assert_eq!(dyad_index(6, directed, j, i), k);
                }
            }
            assert_eq!(dyads(6, directed).count(), dyad_count(6, directed));
        }
    }

    #[test]
    fn design_row_errors() {
        let panel = panel_from(3, 3, 1, false, 1);
        let layout = Layout::new(ModelMode::default(), Terms::default(), &panel);
        assert!(matches!(network_design_row(&panel, &layout, 0, 1, 0), Err(McrError::NoLag)));
        assert!(matches!(network_design_row(&panel, &layout, 1, 1, 1), Err(McrError::Diagonal(1))));
        assert!(matches!(attribute_design_row(&panel, &layout, 0, 0), Err(McrError::NoLag)));
    }

    #[test]
    fn degenerate_row_without_attributes() {
        let mut net = NetworkSeries::zeros(3, 2, false);
        net.set(0, 0, 2, 0.7);
        let panel = Panel::network_only(net, CovariateSpec::default()).unwrap();
        let layout = Layout::new(ModelMode::default(), Terms::default(), &panel);
        let row = network_design_row(&panel, &layout, 0, 2, 1).unwrap();
        // one-hot over the 3 dyads, then the lag
        assert_eq!(row.as_slice(), &[0.0, 1.0, 0.0, 0.7]);
    }

    #[test]
    fn directed_row_has_both_lags() {
        let panel = panel_from(4, 3, 2, true, 2);
        let layout = Layout::new(ModelMode::gaussian(Direction::Directed), Terms::default(), &panel);
        let row = network_design_row(&panel, &layout, 1, 3, 2).unwrap();
        let q = layout.q_dyad;
        assert_eq!(row[q], panel.network.get(1, 1, 3));
        assert_eq!(row[q + 1], panel.network.get(1, 3, 1));
    }

    #[test]
    fn row_dot_beta_matches_model_mean() {
        for directed in [false, true] {
            for latent in [false, true] {
                let panel = panel_from(5, 4, 2, directed, 3 + directed as u64);
                let mode = ModelMode {
                    direction: if directed { Direction::Directed } else { Direction::Undirected },
                    network_scale: NetworkScale::Gaussian,
                    attribute_scale: if latent { AttributeScale::Latent } else { AttributeScale::Gaussian },
                };
                let layout = Layout::new(mode, Terms::default(), &panel);
                let mut params = McrParams::zeros(&layout);
                params.gamma = DVector::from_fn(layout.q_dyad, |k, _| 0.1 * k as f64 - 0.3);
                params.alpha1 = 0.4;
                params.alpha2 = directed.then_some(-0.2);
                params.h = if latent {
                    DMatrix::from_diagonal(&DVector::from_vec(vec![0.7, -0.3]))
                } else if directed {
                    DMatrix::from_row_slice(2, 2, &[0.7, 0.2, -0.5, -0.3])
                } else {
                    DMatrix::from_row_slice(2, 2, &[0.7, 0.2, 0.2, -0.3])
                };
                let beta = layout.pack_beta(&params);
                for t in 1..=panel.n() {
                    for (i, j) in panel.network.dyads() {
                        let w = network_design_row(&panel, &layout, i, j, t).unwrap();
                        // term-by-term evaluation of the network line
                        let xi = panel.attributes.node(t - 1, i);
                        let xj = panel.attributes.node(t - 1, j);
                        let mu = params.gamma[dyad_index(5, directed, i, j)];
                        let mut expected = mu + 0.4 * panel.network.get(t - 1, i, j);
                        if directed {
                            expected += -0.2 * panel.network.get(t - 1, j, i);
                        }
                        for r in 0..2 {
                            for c in 0..2 {
                                expected += xi[r] * params.h[(r, c)] * xj[c];
                            }
                        }
                        assert_close!(beta.dot(&w), expected, 1e-12);
                        assert_close!(params.network_mean(&panel, i, j, t), expected, 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn attribute_row_matches_model_mean() {
        for directed in [false, true] {
            let panel = panel_from(5, 3, 2, directed, 9);
            let mode = ModelMode::gaussian(if directed { Direction::Directed } else { Direction::Undirected });
            let layout = Layout::new(mode, Terms::default(), &panel);
            assert_eq!(layout.k_len, 5 + if directed { 6 } else { 4 });
            let mut params = McrParams::zeros(&layout);
            params.theta_coef = DMatrix::from_fn(2, 5, |r, c| 0.1 * (r + c) as f64);
            params.a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3]);
            params.c1 = DMatrix::from_row_slice(2, 2, &[0.05, 0.0, 0.02, -0.04]);
            if directed {
                params.c2 = Some(DMatrix::from_row_slice(2, 2, &[-0.03, 0.01, 0.0, 0.06]));
            }
            let b = layout.pack_b(&params);
            for t in 1..=panel.n() {
                for i in 0..5 {
                    let w = attribute_design_row(&panel, &layout, i, t).unwrap();
                    let x_prev = panel.attributes.slice(t - 1);
                    let y_prev = panel.network.slice(t - 1);
                    let xi = x_prev.row(i).transpose();
                    let mut expected = params.theta_coef.column(i) + &params.a * &xi
                        + &params.c1 * x_prev.transpose() * y_prev.row(i).transpose();
                    if let Some(c2) = &params.c2 {
                        expected += c2 * x_prev.transpose() * y_prev.column(i);
                    }
                    let got = &b * &w;
                    for k in 0..2 {
                        assert_close!(got[k], expected[k], 1e-12);
                    }
                    let mean = params.attribute_mean(&panel, i, t);
                    for k in 0..2 {
                        assert_close!(mean[k], expected[k], 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn contagion_block_for_isolated_and_binary_rows() {
        let mut net = NetworkSeries::zeros(4, 2, false);
        net.set(0, 1, 2, 1.0);
        net.set(0, 1, 3, 1.0);
        let x = AttributeSeries::new(4, 1, 2, vec![1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let panel = Panel::new(net, x, CovariateSpec::default()).unwrap();
        let layout = Layout::new(ModelMode::default(), Terms::default(), &panel);
        let isolated = attribute_design_row(&panel, &layout, 0, 1).unwrap();
        assert_eq!(isolated[layout.c1_start.unwrap()], 0.0);
        let linked = attribute_design_row(&panel, &layout, 1, 1).unwrap();
        assert_eq!(linked[layout.c1_start.unwrap()], 3.0 + 4.0);
    }

    #[test]
    fn design_rows_are_deterministic() {
        let panel = panel_from(5, 3, 2, true, 11);
        let layout = Layout::new(ModelMode::gaussian(Direction::Directed), Terms::default(), &panel);
        let a = network_design_row(&panel, &layout, 2, 4, 2).unwrap();
        let b = network_design_row(&panel, &layout, 2, 4, 2).unwrap();
        assert_eq!(a.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   b.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn pack_unpack_round_trip() {
        let panel = panel_from(4, 3, 2, true, 5);
        let layout = Layout::new(ModelMode::gaussian(Direction::Directed), Terms::default(), &panel);
        let beta = DVector::from_fn(layout.beta_len, |k, _| k as f64 * 0.5);
        let b = DMatrix::from_fn(2, layout.k_len, |r, c| (r * 10 + c) as f64);
        let mut params = McrParams::zeros(&layout);
        layout.unpack_beta(&beta, &mut params);
        layout.unpack_b(&b, &mut params);
        assert_eq!(layout.pack_beta(&params), beta);
        assert_eq!(layout.pack_b(&params), b);
        params.validate(&layout).unwrap();
    }

    #[test]
    fn submodel_layout_drops_columns() {
        let panel = panel_from(4, 3, 2, false, 5);
        let full = Layout::new(ModelMode::default(), Terms::default(), &panel);
        let reduced = Layout::new(
            ModelMode::default(),
            Terms { autoregression: false, contagion: false },
            &panel,
        );
        assert_eq!(full.beta_len, reduced.beta_len + 1);
        assert_eq!(full.k_len, reduced.k_len + 2);
    }
}
