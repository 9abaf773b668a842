//! Ordinal relations and attributes through a latent probit scale.
//!
//! Each ordinal observation is the category of a latent Gaussian value.
//! The latent values follow the coevolution model and are updated one at a
//! time from truncated normal full conditionals. Truncation comes either
//! from explicit cut points (threshold mode) or, in the rank-likelihood
//! mode, from the latent values of the neighbouring categories, which only
//! uses the ordering of the observations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::{gamma, std_normal_cdf, std_normal_quantile, truncated_normal, truncated_std_moments};
use crate::error::{McrError, Result};
use crate::gibbs::{self, ChainConfig, GibbsState, Model, ModelSpec, PosteriorSamples, PriorSpec};
use crate::latent::attribute_block_conditional;
use crate::linalg::GaussianInfo;
use crate::model::{AttributeScale, AttributeSeries, NetworkScale, NetworkSeries, Panel};

/// How ordinal observations constrain their latent values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OrdinalMethod {
    Rank,
    Threshold,
    /// Threshold mode for at most [`AUTO_MAX_THRESHOLD_LEVELS`] categories,
    /// rank likelihood otherwise.
    #[default]
    Auto,
}

pub const AUTO_MAX_THRESHOLD_LEVELS: usize = 10;

const MISSING: u32 = u32::MAX;

/// One ordinal variable: the observed categories, indexed by slot (a
/// position in the latent-value storage), and the current truncation
/// state.
#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalVariable {
    /// Distinct observed values, ascending; category `c` is `levels[c]`.
    pub levels: Vec<f64>,
    /// Resolved method, never `Auto`.
    pub method: OrdinalMethod,
    /// Interior cut points (threshold mode), `levels.len() - 1` of them.
    pub cuts: Vec<f64>,
    pub pinned_first: bool,
    category: Vec<u32>,
    members: Vec<Vec<usize>>,
    class_min: Vec<f64>,
    class_max: Vec<f64>,
}

impl OrdinalVariable {
    /// `entries` lists `(slot, value)` for observed values; `NaN` values are
    /// treated as missing. `slots` bounds the slot indices. Levels are the
    /// distinct observed values unless given explicitly, in which case
    /// every observed value must be one of them.
    pub fn new(
        slots: usize,
        entries: &[(usize, f64)],
        method: OrdinalMethod,
        pin_first: bool,
        levels: Option<&[f64]>,
    ) -> Result<Self> {
        let levels: Vec<f64> = match levels {
            Some(given) => {
                let mut given = given.to_vec();
                given.sort_by(f64::total_cmp);
                given.dedup();
                let unknown: Vec<String> = entries
                    .iter()
                    .filter(|e| !e.1.is_nan() && given.binary_search_by(|l| l.total_cmp(&e.1)).is_err())
                    .map(|e| e.1.to_string())
                    .take(5)
                    .collect();
                if !unknown.is_empty() {
                    return Err(McrError::Invalid(vec![format!(
                        "observed values {} are not among the declared levels",
                        unknown.join(", ")
                    )]));
                }
                given
            }
            None => {
                let mut found: Vec<f64> = entries.iter().map(|e| e.1).filter(|v| !v.is_nan()).collect();
                found.sort_by(f64::total_cmp);
                found.dedup();
                found
            }
        };
        if levels.is_empty() || entries.iter().all(|e| e.1.is_nan()) {
            return Err(McrError::InsufficientData("ordinal variable has no observed values".into()));
        }
        let q = levels.len();
        let method = match method {
            OrdinalMethod::Auto if q <= AUTO_MAX_THRESHOLD_LEVELS => OrdinalMethod::Threshold,
            OrdinalMethod::Auto => OrdinalMethod::Rank,
            other => other,
        };
        let mut category = vec![MISSING; slots];
        let mut members = vec![Vec::new(); q];
        for &(slot, v) in entries {
            if v.is_nan() {
                continue;
            }
            let c = levels.partition_point(|l| *l < v);
            category[slot] = c as u32;
            members[c].push(slot);
        }
        Ok(OrdinalVariable {
            levels,
            method,
            cuts: Vec::new(),
            pinned_first: pin_first && method == OrdinalMethod::Threshold,
            category,
            members,
            class_min: vec![f64::INFINITY; q],
            class_max: vec![f64::NEG_INFINITY; q],
        })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn category(&self, slot: usize) -> Option<usize> {
        let c = self.category[slot];
        (c != MISSING).then_some(c as usize)
    }

    /// Normal-score starting values `(slot, z)` for every observed slot,
    /// and cut points consistent with them.
    pub fn initial_values(&mut self) -> Vec<(usize, f64)> {
        let q = self.n_levels();
        let total: usize = self.members.iter().map(Vec::len).sum();
        let mut bounds = Vec::with_capacity(q + 1);
        bounds.push(f64::NEG_INFINITY);
        let mut cum = 0usize;
        for c in 0..q - 1 {
            cum += self.members[c].len();
            let frac = (cum as f64 / total as f64).clamp(1e-6, 1.0 - 1e-6);
            bounds.push(std_normal_quantile(frac));
        }
        bounds.push(f64::INFINITY);
        // strictly increasing even with empty classes
        for c in 1..q {
            if bounds[c] <= bounds[c - 1] {
                bounds[c] = bounds[c - 1] + 1e-3;
            }
        }
        let shift = if self.pinned_first && q > 1 { bounds[1] } else { 0.0 };
        let mut out = Vec::with_capacity(total);
        for c in 0..q {
            let (mean, _) = truncated_std_moments(bounds[c], bounds[c + 1]);
            for &slot in &self.members[c] {
                out.push((slot, mean - shift));
            }
        }
        self.cuts = if self.method == OrdinalMethod::Threshold {
            bounds[1..q].iter().map(|b| b - shift).collect()
        } else {
            Vec::new()
        };
        out
    }

    /// Recomputes every class extremum from `values`.
    pub fn refresh(&mut self, values: &[f64]) {
        for c in 0..self.n_levels() {
            self.rescan(c, values);
        }
    }

    fn rescan(&mut self, c: usize, values: &[f64]) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &slot in &self.members[c] {
            lo = lo.min(values[slot]);
            hi = hi.max(values[slot]);
        }
        self.class_min[c] = lo;
        self.class_max[c] = hi;
    }

    /// Updates the class extrema after `values[slot]` changed from `old`;
    /// `values` must already hold the new value.
    pub fn record_change(&mut self, slot: usize, old: f64, values: &[f64]) {
        let Some(c) = self.category(slot) else { return };
        let new = values[slot];
        let stale_min = new > old && old <= self.class_min[c];
        let stale_max = new < old && old >= self.class_max[c];
        if stale_min || stale_max {
            self.rescan(c, values);
        } else {
            self.class_min[c] = self.class_min[c].min(new);
            self.class_max[c] = self.class_max[c].max(new);
        }
    }

    pub fn class_extrema(&self, c: usize) -> (f64, f64) {
        (self.class_min[c], self.class_max[c])
    }

    /// Rank-likelihood bounds for category `c`: the largest latent value in
    /// any lower category and the smallest in any higher one.
    pub fn rank_interval(&self, c: usize) -> (f64, f64) {
        let lo = self.class_max[..c].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let hi = self.class_min[c + 1..].iter().copied().fold(f64::INFINITY, f64::min);
        (lo, hi)
    }

    /// The truncation interval for the latent value at `slot`.
    pub fn interval(&self, slot: usize) -> (f64, f64) {
        let Some(c) = self.category(slot) else {
            return (f64::NEG_INFINITY, f64::INFINITY);
        };
        match self.method {
            OrdinalMethod::Threshold => {
                let q = self.n_levels();
                let lo = if c == 0 { f64::NEG_INFINITY } else { self.cuts[c - 1] };
                let hi = if c + 1 == q { f64::INFINITY } else { self.cuts[c] };
                (lo, hi)
            }
            _ => self.rank_interval(c),
        }
    }

    /// Draws every free cut point from its normal prior truncated to the
    /// range allowed by the neighbouring cuts and the latent values.
    pub fn step_cuts<R: rand::Rng + ?Sized>(&mut self, prior_var: f64, rng: &mut R) -> Result<()> {
        if self.method != OrdinalMethod::Threshold {
            return Ok(());
        }
        let sd = prior_var.sqrt();
        let n_cuts = self.cuts.len();
        for s in 0..n_cuts {
            if self.pinned_first && s == 0 {
                continue;
            }
            let mut lo = self.class_max[s];
            if s > 0 {
                lo = lo.max(self.cuts[s - 1]);
            }
            let mut hi = self.class_min[s + 1];
            if s + 1 < n_cuts {
                hi = hi.min(self.cuts[s + 1]);
            }
            self.cuts[s] = truncated_normal(0.0, sd, lo, hi, rng)
                .map_err(|e| McrError::Consistency(format!("cut point {s}: {e}")))?;
        }
        Ok(())
    }

    /// Cut points used to map latent values back to categories: the
    /// sampled cuts in threshold mode, midpoints between adjacent
    /// categories' latent values in rank mode.
    pub fn cuts_for_export(&self) -> Vec<f64> {
        if self.method == OrdinalMethod::Threshold {
            return self.cuts.clone();
        }
        let q = self.n_levels();
        (0..q - 1)
            .map(|c| {
                let below = self.class_max[..=c].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let above = self.class_min[c + 1..].iter().copied().fold(f64::INFINITY, f64::min);
                match (below.is_finite(), above.is_finite()) {
                    (true, true) => 0.5 * (below + above),
                    (true, false) => below,
                    (false, true) => above,
                    (false, false) => 0.0,
                }
            })
            .collect()
    }

    /// Checks that every observed latent value lies in its category's range.
    pub fn check_consistency(&self, values: &[f64]) -> Result<()> {
        for c in 0..self.n_levels() {
            for &slot in &self.members[c] {
                let (lo, hi) = self.interval(slot);
                let v = values[slot];
                if !(v >= lo && v <= hi) {
                    return Err(McrError::Consistency(format!(
                        "latent value {v} of category {c} at slot {slot} outside [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Category probabilities of `N(mean, sd²)` under interior `cuts`.
pub fn category_probabilities(mean: f64, sd: f64, cuts: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut prev = 0.0;
    for c in cuts {
        let cdf = std_normal_cdf((c - mean) / sd);
        out.push((cdf - prev).max(0.0));
        prev = cdf;
    }
    out.push((1.0 - prev).max(0.0));
    out
}

/// Category index of a latent value under interior `cuts`.
pub fn categorize(value: f64, cuts: &[f64]) -> usize {
    cuts.partition_point(|c| *c < value)
}

fn network_slot(m: usize, t: usize, i: usize, j: usize) -> usize {
    (t * m + i) * m + j
}

/// Missing `(t, i, j)` entries in sweep order.
pub fn missing_entries(network: &NetworkSeries) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    if !network.has_missing() {
        return out;
    }
    for t in 0..network.times() {
        for (i, j) in network.dyads() {
            if !network.is_observed(t, i, j) {
                out.push((t, i, j));
            }
        }
    }
    out
}

/// A complete copy of `network` with missing entries set to the mean of
/// the observed entries at the same time point.
pub fn fill_missing_network(network: &NetworkSeries) -> NetworkSeries {
    let mut out = network.clone().into_complete();
    for t in 0..network.times() {
        let (mut sum, mut count) = (0.0, 0usize);
        for (i, j) in network.dyads() {
            if network.is_observed(t, i, j) {
                sum += network.get(t, i, j);
                count += 1;
            }
        }
        let fill = if count > 0 { sum / count as f64 } else { 0.0 };
        for (i, j) in network.dyads() {
            if !network.is_observed(t, i, j) {
                out.set(t, i, j, fill);
            }
        }
    }
    out
}

/// Builds the ordinal variable for a network and a latent network with
/// normal-score starting values.
pub fn init_network(
    network: &NetworkSeries,
    method: OrdinalMethod,
    pin_first: bool,
    levels: Option<&[f64]>,
) -> Result<(OrdinalVariable, NetworkSeries)> {
    let m = network.m();
    let mut entries = Vec::new();
    for t in 0..network.times() {
        for (i, j) in network.dyads() {
            if network.is_observed(t, i, j) {
                entries.push((network_slot(m, t, i, j), network.get(t, i, j)));
            }
        }
    }
    let mut var = OrdinalVariable::new(m * m * network.times(), &entries, method, pin_first, levels)?;
    let mut z = NetworkSeries::zeros(m, network.times(), network.directed());
    for (slot, v) in var.initial_values() {
        let t = slot / (m * m);
        let i = (slot / m) % m;
        let j = slot % m;
        z.set(t, i, j, v);
    }
    var.refresh(z.values());
    Ok((var, z))
}

/// Builds one ordinal variable per attribute column (`NaN` marks a missing
/// value) and latent attributes with normal-score starting values.
pub fn init_attributes(
    attributes: &AttributeSeries,
    method: OrdinalMethod,
    pin_first: bool,
    levels: Option<&[f64]>,
) -> Result<(Vec<OrdinalVariable>, AttributeSeries)> {
    let (m, p, times) = (attributes.m(), attributes.p(), attributes.times());
    let mut w = AttributeSeries::zeros(m, p, times);
    let mut vars = Vec::with_capacity(p);
    for k in 0..p {
        let entries: Vec<(usize, f64)> = (0..times)
            .flat_map(|t| (0..m).map(move |i| (t, i)))
            .map(|(t, i)| ((t * m + i) * p + k, attributes.get(t, i, k)))
            .collect();
        let mut var = OrdinalVariable::new(m * p * times, &entries, method, pin_first, levels)?;
        for (slot, v) in var.initial_values() {
            let t = slot / (m * p);
            let i = (slot / p) % m;
            w.set(t, i, k, v);
        }
        var.refresh(w.values());
        vars.push(var);
    }
    Ok((vars, w))
}

/// Mean and variance of the full conditional of the latent relation
/// `z_{ij,t}`, before truncation.
pub fn z_full_conditional(model: &Model, state: &GibbsState, i: usize, j: usize, t: usize) -> Result<(f64, f64)> {
    let params = &state.params;
    let panel = &state.panel;
    let net = &panel.network;
    let s2 = params.sigma2;
    let z = net.get(t, i, j);
    let (mut prec, mut lin) = (0.0, 0.0);

    if t >= 1 {
        prec += 1.0 / s2;
        lin += params.network_mean(panel, i, j, t) / s2;
    } else if let Some(coef) = &state.initial.network_coef {
        let m = panel.m();
        let mean = panel.covariates.dyad_dot(m, net.directed(), i, j, coef.as_slice());
        prec += 1.0 / s2;
        lin += mean / s2;
    } else {
        prec += 1.0 / model.prior.z_prior_var;
        lin += model.prior.z_prior_mean / model.prior.z_prior_var;
    }

    if t < panel.n() {
        let mut relations = vec![(i, j, params.alpha1)];
        if let Some(a2) = params.alpha2 {
            relations.push((j, i, a2));
        }
        for (a, b, coef) in relations {
            if coef == 0.0 {
                continue;
            }
            let r = net.get(t + 1, a, b) - (params.network_mean(panel, a, b, t + 1) - coef * z);
            prec += coef * coef / s2;
            lin += coef * r / s2;
        }
        let p = model.layout.p;
        if p > 0 {
            let sigma_inv = crate::linalg::spd_inverse(&params.sigma, "Sigma")?;
            let xi = DVector::from_column_slice(panel.attributes.node(t, i));
            let xj = DVector::from_column_slice(panel.attributes.node(t, j));
            // node i sends to j; node j receives from i
            let mut loads = vec![(i, &params.c1 * &xj)];
            match &params.c2 {
                Some(c2) => loads.push((j, c2 * &xi)),
                None => loads.push((j, &params.c1 * &xi)),
            }
            for (node, jac) in loads {
                if jac.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let mean = params.attribute_mean(panel, node, t + 1);
                let x = DVector::from_column_slice(panel.attributes.node(t + 1, node));
                let r = x - (mean - &jac * z);
                let sj = &sigma_inv * &jac;
                prec += jac.dot(&sj);
                lin += sj.dot(&r);
            }
        }
    }
    Ok((lin / prec, 1.0 / prec))
}

/// Rank-likelihood bounds `(z⁻, z⁺)` for the latent relation `z_{ij,t}`.
pub fn rank_bounds(state: &GibbsState, i: usize, j: usize, t: usize) -> (f64, f64) {
    let m = state.panel.m();
    match &state.network_ordinal {
        Some(var) => match var.category(network_slot(m, t, i, j)) {
            Some(c) => var.rank_interval(c),
            None => (f64::NEG_INFINITY, f64::INFINITY),
        },
        None => (f64::NEG_INFINITY, f64::INFINITY),
    }
}

fn update_relation(state: &mut GibbsState, model: &Model, t: usize, i: usize, j: usize) -> Result<()> {
    let m = state.panel.m();
    let slot = network_slot(m, t, i, j);
    let (lo, hi) = match &state.network_ordinal {
        Some(var) => var.interval(slot),
        None => (f64::NEG_INFINITY, f64::INFINITY),
    };
    let (mean, var) = z_full_conditional(model, state, i, j, t)?;
    let old = state.panel.network.get(t, i, j);
    let new = truncated_normal(mean, var.sqrt(), lo, hi, &mut state.rng)
        .map_err(|e| McrError::Consistency(format!("latent relation ({i}, {j}) at t = {t}: {e}")))?;
    state.panel.network.set(t, i, j, new);
    if let Some(v) = state.network_ordinal.as_mut() {
        v.record_change(slot, old, state.panel.network.values());
    }
    Ok(())
}

/// Updates the latent relations: every dyad of an ordinal network, or the
/// missing entries of a Gaussian one. Time ascending, dyads in order.
pub fn step_z_sweep(state: &mut GibbsState, model: &Model) -> Result<()> {
    if state.network_ordinal.is_some() {
        let m = state.panel.m();
        let directed = state.panel.network.directed();
        for t in 0..state.panel.times() {
            for (i, j) in crate::model::dyads(m, directed) {
                update_relation(state, model, t, i, j)?;
            }
        }
    } else {
        let entries = std::mem::take(&mut state.missing_entries);
        let result = entries.iter().try_for_each(|&(t, i, j)| update_relation(state, model, t, i, j));
        state.missing_entries = entries;
        result?;
    }
    Ok(())
}

pub fn step_network_thresholds(state: &mut GibbsState, model: &Model) -> Result<()> {
    if let Some(var) = state.network_ordinal.as_mut() {
        var.step_cuts(model.prior.threshold_prior_var, &mut state.rng)?;
    }
    Ok(())
}

pub fn step_attribute_thresholds(state: &mut GibbsState, model: &Model) -> Result<()> {
    for var in state.attribute_ordinal.iter_mut() {
        var.step_cuts(model.prior.threshold_prior_var, &mut state.rng)?;
    }
    Ok(())
}

/// Scalar conditional of coordinate `k` of a block with information
/// `info`, given the other coordinates `x`.
pub fn coordinate_conditional(info: &GaussianInfo, x: &[f64], k: usize) -> (f64, f64) {
    let q = &info.precision;
    let mut lin = info.linear[k];
    for (l, &xl) in x.iter().enumerate() {
        if l != k {
            lin -= q[(k, l)] * xl;
        }
    }
    (lin / q[(k, k)], 1.0 / q[(k, k)])
}

/// Updates the latent ordinal attributes one coordinate at a time, time
/// ascending, node ascending, attribute ascending.
pub fn step_w_sweep(state: &mut GibbsState, model: &Model) -> Result<()> {
    let (m, p) = (state.panel.m(), model.layout.p);
    for t in 0..state.panel.times() {
        for i in 0..m {
            // the block conditional does not depend on x_{i,t} itself
            let info = attribute_block_conditional(model, state, i, t)?;
            for k in 0..p {
                let slot = (t * m + i) * p + k;
                let (mean, var) = coordinate_conditional(&info, state.panel.attributes.node(t, i), k);
                let (lo, hi) = state.attribute_ordinal[k].interval(slot);
                let old = state.panel.attributes.get(t, i, k);
                let new = truncated_normal(mean, var.sqrt(), lo, hi, &mut state.rng).map_err(|e| {
                    McrError::Consistency(format!("latent attribute {k} of node {i} at t = {t}: {e}"))
                })?;
                state.panel.attributes.set(t, i, k, new);
                state.attribute_ordinal[k].record_change(slot, old, state.panel.attributes.values());
            }
        }
    }
    Ok(())
}

fn regression_draw<R: rand::Rng + ?Sized>(
    rows: &DMatrix<f64>,
    y: &DVector<f64>,
    noise_var: f64,
    prior_var: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let q = rows.ncols();
    let info = GaussianInfo {
        precision: DMatrix::identity(q, q) / prior_var + rows.transpose() * rows / noise_var,
        linear: rows.transpose() * y / noise_var,
    };
    Ok(info.sample(rng, "initial-state regression precision")?.0)
}

/// Updates the initial-state regressions for latent values at `t = 0`.
pub fn step_initial_state(state: &mut GibbsState, model: &Model) -> Result<()> {
    let panel = &state.panel;
    let m = panel.m();
    let prior = &model.prior;
    if state.initial.network_coef.is_some() {
        let directed = panel.network.directed();
        let q = model.layout.q_dyad;
        let pairs: Vec<(usize, usize)> = crate::model::dyads(m, directed).collect();
        let mut rows = DMatrix::zeros(pairs.len(), q);
        let mut row = vec![0.0; q];
        let y = DVector::from_iterator(pairs.len(), pairs.iter().map(|&(i, j)| panel.network.get(0, i, j)));
        for (r, &(i, j)) in pairs.iter().enumerate() {
            panel.covariates.dyad_row_into(m, directed, i, j, &mut row);
            for (c, v) in row.iter().enumerate() {
                rows[(r, c)] = *v;
            }
        }
        let coef = regression_draw(&rows, &y, state.params.sigma2, prior.initial_coef_var, &mut state.rng)?;
        state.initial.network_coef = Some(coef);
    }
    if let (Some(_), Some(_)) = (&state.initial.attribute_coef, &state.initial.attribute_var) {
        let p = model.layout.p;
        let q = model.layout.q_node;
        let mut rows = DMatrix::zeros(m, q);
        let mut row = vec![0.0; q];
        for i in 0..m {
            panel.covariates.node_row_into(i, &mut row);
            for (c, v) in row.iter().enumerate() {
                rows[(i, c)] = *v;
            }
        }
        let mut coef = DMatrix::zeros(p, q);
        let mut var = DVector::zeros(p);
        let old_var = state.initial.attribute_var.clone().unwrap_or_default();
        for k in 0..p {
            let y = DVector::from_iterator(m, (0..m).map(|i| panel.attributes.get(0, i, k)));
            let g = regression_draw(&rows, &y, old_var[k], prior.initial_coef_var, &mut state.rng)?;
            let resid = &y - &rows * &g;
            let shape = (prior.nu0 + m as f64) / 2.0;
            let rate = (prior.nu0 * prior.sigma0_sq + resid.norm_squared()) / 2.0;
            var[k] = 1.0 / gamma(shape, rate, &mut state.rng)?;
            coef.set_row(k, &g.transpose());
        }
        state.initial.attribute_coef = Some(coef);
        state.initial.attribute_var = Some(var);
    }
    Ok(())
}

/// Fits a model with an ordinal network and/or ordinal attributes.
pub fn fit_ordinal(data: &Panel, spec: &ModelSpec, prior: &PriorSpec, config: &ChainConfig) -> Result<PosteriorSamples> {
    if spec.mode.network_scale != NetworkScale::Ordinal && spec.mode.attribute_scale != AttributeScale::Ordinal {
        return Err(McrError::Invalid(vec!["fit_ordinal needs an ordinal network or ordinal attributes".into()]));
    }
    gibbs::fit_bayes(data, spec, prior, config)
}
