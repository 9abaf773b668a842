//! Latent nodal attributes.
//!
//! When attributes are unobserved, each `x_{i,t}` is updated from its
//! Gaussian full conditional. The block appears linearly in three places:
//! its own equation (or the prior at `t = 0`), every relation at `t + 1`
//! through the homophily term, and every attribute vector at `t + 1`
//! through the autoregression and contagion terms. Each contributes a
//! Gaussian factor, so the conditional is available in closed form.
//!
//! The same machinery serves the latent-scale ordinal attributes, where
//! it is applied one coordinate at a time.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::gibbs::{Draw, GibbsState, LatentAnchor, Model};
use crate::linalg::{spd_inverse, symmetrize, GaussianInfo};
use crate::model::{AttributeScale, AttributeSeries, McrParams, NetworkSeries};

fn initial_block_prior(model: &Model, state: &GibbsState, i: usize, info: &mut GaussianInfo) {
    let p = model.layout.p;
    let prior = &model.prior;
    match model.spec.mode.attribute_scale {
        AttributeScale::Latent => {
            if prior.latent_anchor == LatentAnchor::Normal {
                for k in 0..p {
                    info.precision[(k, k)] += 1.0;
                }
            }
        }
        _ => {
            if let (Some(coef), Some(var)) = (&state.initial.attribute_coef, &state.initial.attribute_var) {
                let mut row = vec![0.0; model.layout.q_node];
                state.panel.covariates.node_row_into(i, &mut row);
                let mean = coef * DVector::from_vec(row);
                for k in 0..p {
                    info.precision[(k, k)] += 1.0 / var[k];
                    info.linear[k] += mean[k] / var[k];
                }
            } else {
                for k in 0..p {
                    info.precision[(k, k)] += 1.0 / prior.z_prior_var;
                    info.linear[k] += prior.z_prior_mean / prior.z_prior_var;
                }
            }
        }
    }
}

/// Information-form full conditional of the attribute block `x_{i,t}`
/// given everything else in `state`.
pub fn attribute_block_conditional(model: &Model, state: &GibbsState, i: usize, t: usize) -> Result<GaussianInfo> {
    let p = model.layout.p;
    let params = &state.params;
    let panel = &state.panel;
    let net = &panel.network;
    let m = panel.m();
    let sigma_inv = spd_inverse(&params.sigma, "Sigma")?;
    let mut info = GaussianInfo::zeros(p);

    if t >= 1 {
        let mean = params.attribute_mean(panel, i, t);
        info.precision += &sigma_inv;
        info.linear += &sigma_inv * mean;
    } else {
        initial_block_prior(model, state, i, &mut info);
    }

    if t < panel.n() {
        let xi = DVector::from_column_slice(panel.attributes.node(t, i));
        let s2 = params.sigma2;
        for j in 0..m {
            if j == i {
                continue;
            }
            let xj = DVector::from_column_slice(panel.attributes.node(t, j));
            let out_coef = &params.h * &xj;
            let mut factors = vec![(i, j, out_coef)];
            if net.directed() {
                factors.push((j, i, params.h.transpose() * &xj));
            }
            for (a, b, c) in factors {
                let r = net.get(t + 1, a, b) - (params.network_mean(panel, a, b, t + 1) - c.dot(&xi));
                info.precision += &c * c.transpose() / s2;
                info.linear += c * (r / s2);
            }
        }
        for k in 0..m {
            let jac = attribute_jacobian(params, net, i, k, t);
            if jac.iter().all(|v| *v == 0.0) {
                continue;
            }
            let mean_k = params.attribute_mean(panel, k, t + 1);
            let xk = DVector::from_column_slice(panel.attributes.node(t + 1, k));
            let r = xk - (mean_k - &jac * &xi);
            let jts = jac.transpose() * &sigma_inv;
            info.precision += &jts * &jac;
            info.linear += jts * r;
        }
    }
    info.precision = symmetrize(info.precision);
    Ok(info)
}

/// `∂ E[x_{k,t+1}] / ∂ x_{i,t}`.
fn attribute_jacobian(params: &McrParams, net: &NetworkSeries, i: usize, k: usize, t: usize) -> DMatrix<f64> {
    if k == i {
        return params.a.clone();
    }
    let mut jac = &params.c1 * net.get(t, k, i);
    if let Some(c2) = &params.c2 {
        jac += c2 * net.get(t, i, k);
    }
    jac
}

/// Mean and covariance of the full conditional of `x_{i,t}`.
pub fn latent_full_conditional(
    model: &Model,
    state: &GibbsState,
    i: usize,
    t: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    attribute_block_conditional(model, state, i, t)?.moments("latent attribute full-conditional precision")
}

/// Updates every latent block, time ascending and node ascending within
/// each time point.
pub fn step_latent_sweep(state: &mut GibbsState, model: &Model) -> Result<()> {
    let m = state.panel.m();
    for t in 0..state.panel.times() {
        for i in 0..m {
            let info = attribute_block_conditional(model, state, i, t)?;
            let (x, _) = info.sample(&mut state.rng, "latent attribute full-conditional precision")?;
            state.panel.attributes.node_mut(t, i).copy_from_slice(x.as_slice());
        }
    }
    Ok(())
}

/// Spectral starting values: the leading `p` eigenvectors of each
/// (symmetrized) network slice scaled by `sqrt(|λ|)`, sign-matched to the
/// previous slice, plus small jitter.
pub fn init_latent<R: Rng + ?Sized>(network: &NetworkSeries, p: usize, rng: &mut R) -> AttributeSeries {
    let m = network.m();
    let times = network.times();
    let mut out = AttributeSeries::zeros(m, p, times);
    let mut previous: Option<DMatrix<f64>> = None;
    for t in 0..times {
        let y = network.slice(t);
        let s = (&y + y.transpose()) * 0.5;
        let eig = SymmetricEigen::new(s);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|a, b| eig.eigenvalues[*b].abs().total_cmp(&eig.eigenvalues[*a].abs()));
        let mut u = DMatrix::zeros(m, p);
        for (k, &idx) in order.iter().take(p).enumerate() {
            let scale = eig.eigenvalues[idx].abs().sqrt();
            let mut col = eig.eigenvectors.column(idx) * scale;
            if let Some(prev) = &previous {
                if col.dot(&prev.column(k)) < 0.0 {
                    col = -col;
                }
            }
            u.set_column(k, &col);
        }
        for i in 0..m {
            for k in 0..p {
                let jitter: f64 = rng.sample(StandardNormal);
                out.set(t, i, k, u[(i, k)] + 0.1 * jitter);
            }
        }
        previous = Some(u);
    }
    out
}

/// A signed permutation `x ↦ T x` of latent coordinates, with
/// `(T x)_k = sign_k · x_{perm_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedPermutation {
    pub perm: Vec<usize>,
    pub signs: Vec<f64>,
}

impl SignedPermutation {
    pub fn identity(p: usize) -> Self {
        SignedPermutation {
            perm: (0..p).collect(),
            signs: vec![1.0; p],
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let p = self.perm.len();
        let mut t = DMatrix::zeros(p, p);
        for k in 0..p {
            t[(k, self.perm[k])] = self.signs[k];
        }
        t
    }

    pub fn apply_series(&self, x: &mut AttributeSeries) {
        let p = x.p();
        let mut buf = vec![0.0; p];
        for t in 0..x.times() {
            for i in 0..x.m() {
                let node = x.node_mut(t, i);
                for k in 0..p {
                    buf[k] = self.signs[k] * node[self.perm[k]];
                }
                node.copy_from_slice(&buf);
            }
        }
    }

    /// Rewrites the parameters so the transformed latent values have the
    /// same likelihood.
    pub fn apply_params(&self, params: &mut McrParams) {
        let t = self.matrix();
        let tt = t.transpose();
        params.h = &t * &params.h * &tt;
        params.a = &t * &params.a * &tt;
        params.c1 = &t * &params.c1 * &tt;
        if let Some(c2) = &params.c2 {
            params.c2 = Some(&t * c2 * &tt);
        }
        params.theta_coef = &t * &params.theta_coef;
        params.sigma = &t * &params.sigma * &tt;
    }
}

fn permutations(p: usize) -> Vec<Vec<usize>> {
    if p == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(p - 1) {
        for pos in 0..=rest.len() {
            let mut v = rest.clone();
            v.insert(pos, p - 1);
            out.push(v);
        }
    }
    out
}

/// Cross-products `M[k, l] = Σ_{t,i} ref_k x_l`.
fn cross(reference: &AttributeSeries, x: &AttributeSeries) -> DMatrix<f64> {
    let p = x.p();
    let mut c = DMatrix::zeros(p, p);
    for (r, v) in reference.values().chunks(p).zip(x.values().chunks(p)) {
        for k in 0..p {
            for l in 0..p {
                c[(k, l)] += r[k] * v[l];
            }
        }
    }
    c
}

/// The signed permutation of `x` that best matches `reference`.
/// Exhaustive for `p ≤ 6`, greedy above.
pub fn best_signed_permutation(reference: &AttributeSeries, x: &AttributeSeries) -> SignedPermutation {
    let p = x.p();
    let c = cross(reference, x);
    let score_of = |perm: &[usize]| perm.iter().enumerate().map(|(k, &l)| c[(k, l)].abs()).sum::<f64>();
    let perm = if p <= 6 {
        permutations(p)
            .into_iter()
            .max_by(|a, b| score_of(a).total_cmp(&score_of(b)))
            .unwrap_or_default()
    } else {
        let mut used = vec![false; p];
        let mut perm = vec![0; p];
        let mut pairs: Vec<(usize, usize)> = (0..p).flat_map(|k| (0..p).map(move |l| (k, l))).collect();
        pairs.sort_by(|a, b| c[*b].abs().total_cmp(&c[*a].abs()));
        let mut assigned = vec![false; p];
        for (k, l) in pairs {
            if !assigned[k] && !used[l] {
                perm[k] = l;
                assigned[k] = true;
                used[l] = true;
            }
        }
        perm
    };
    let signs = perm
        .iter()
        .enumerate()
        .map(|(k, &l)| if c[(k, l)] < 0.0 { -1.0 } else { 1.0 })
        .collect();
    SignedPermutation { perm, signs }
}

/// Resolves the rotation/reflection ambiguity of latent draws by aligning
/// each draw to a common reference: first the initial draw, then the mean
/// of the aligned draws. Parameters are transformed along with the
/// trajectories. Draws without stored latent values are left unchanged.
pub fn align_latent_draws(draws: &mut [Draw]) {
    let Some(mut reference) = draws.iter().find_map(|d| d.latent.clone()) else {
        return;
    };
    for _ in 0..2 {
        for d in draws.iter_mut() {
            let Some(x) = d.latent.as_mut() else { continue };
            let sp = best_signed_permutation(&reference, x);
            sp.apply_series(x);
            sp.apply_params(&mut d.params);
        }
        if let Some(mean) = posterior_mean_latent(draws) {
            reference = mean;
        }
    }
}

/// Entrywise posterior mean of the stored latent trajectories.
pub fn posterior_mean_latent(draws: &[Draw]) -> Option<AttributeSeries> {
    let mut iter = draws.iter().filter_map(|d| d.latent.as_ref());
    let first = iter.next()?;
    let mut acc = first.values().to_vec();
    let mut count = 1.0;
    for x in iter {
        for (a, v) in acc.iter_mut().zip(x.values()) {
            *a += v;
        }
        count += 1.0;
    }
    for a in acc.iter_mut() {
        *a /= count;
    }
    AttributeSeries::new(first.m(), first.p(), first.times(), acc).ok()
}
