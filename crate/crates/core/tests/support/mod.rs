//! Shared fixtures and brute-force reference computations for the
//! integration tests. The references call none of the estimation or
//! conditioning code under test; only the model mean functions are
//! reused. The comparisons themselves live in [`conditional`].
#![allow(dead_code)]

use mcr_core::model::{dyads, DyadCovariates, NodeCovariates};
use mcr_core::{AttributeSeries, CovariateSpec, Layout, McrParams, ModelMode, NetworkSeries, Panel, Terms};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_panel(rng: &mut ChaCha8Rng, m: usize, times: usize, p: usize, directed: bool) -> Panel {
    let mut net = NetworkSeries::zeros(m, times, directed);
    for t in 0..times {
        for (i, j) in dyads(m, directed) {
            net.set(t, i, j, normal(rng));
        }
    }
    let x = (0..m * p * times).map(|_| normal(rng)).collect();
    Panel::new(net, AttributeSeries::new(m, p, times, x).unwrap(), CovariateSpec::default()).unwrap()
}

pub fn random_covariates(rng: &mut ChaCha8Rng, m: usize, q_dyad: usize, q_node: usize) -> CovariateSpec {
    let mut dyad = vec![0.0; m * m * q_dyad];
    for i in 0..m {
        for j in 0..m {
            for k in 0..q_dyad {
                // the first column is an intercept
                dyad[(i * m + j) * q_dyad + k] = if k == 0 { 1.0 } else { normal(rng) };
            }
        }
    }
    let node = (0..m * q_node)
        .map(|c| if c % q_node == 0 { 1.0 } else { normal(rng) })
        .collect();
    CovariateSpec {
        dyad: Some(DyadCovariates { q: q_dyad, values: dyad }),
        node: Some(NodeCovariates { q: q_node, values: node }),
    }
}

/// Random coefficients of moderate size; `H` is symmetric for undirected
/// observed-attribute models and diagonal for latent ones.
pub fn random_params(rng: &mut ChaCha8Rng, layout: &Layout, scale: f64) -> McrParams {
    let p = layout.p;
    let mut params = McrParams::zeros(layout);
    for v in params.gamma.iter_mut() {
        *v = normal(rng);
    }
    params.alpha1 = scale * normal(rng);
    if let Some(a2) = params.alpha2.as_mut() {
        *a2 = scale * normal(rng);
    }
    let mut h = DMatrix::from_fn(p, p, |_, _| scale * normal(rng));
    if layout.mode.diagonal_homophily() {
        h = DMatrix::from_diagonal(&h.diagonal());
    } else if !layout.mode.is_directed() {
        h = (&h + h.transpose()) * 0.5;
    }
    params.h = h;
    params.theta_coef = DMatrix::from_fn(p, layout.q_node, |_, _| normal(rng));
    params.a = DMatrix::from_fn(p, p, |_, _| scale * normal(rng));
    params.c1 = DMatrix::from_fn(p, p, |_, _| 0.3 * scale * normal(rng));
    if let Some(c2) = params.c2.as_mut() {
        *c2 = DMatrix::from_fn(p, p, |_, _| 0.3 * scale * normal(rng));
    }
    params.sigma2 = 0.5 + rng.random::<f64>();
    let l = DMatrix::from_fn(p, p, |r, c| if r == c { 0.7 + rng.random::<f64>() } else if r > c { 0.3 * normal(rng) } else { 0.0 });
    params.sigma = &l * l.transpose();
    params
}

pub fn layout_for(panel: &Panel, directed: bool) -> Layout {
    let mode = ModelMode::gaussian(if directed { mcr_core::Direction::Directed } else { mcr_core::Direction::Undirected });
    Layout::new(mode, Terms::default(), panel)
}

/// Least squares by Householder QR of the stacked design.
pub fn qr_solve(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r().solve_upper_triangular(&qty).expect("full column rank")
}

/// Reference estimates from the explicitly stacked regressions, in
/// model-parameter form.
pub struct StackedFit {
    /// Fitted intercept `γᵀs_ij` for every ordered pair.
    pub dyad_intercept: DMatrix<f64>,
    pub alpha1: f64,
    pub alpha2: Option<f64>,
    pub h: DMatrix<f64>,
    /// Fitted `Γs_i`, row `i`.
    pub node_intercept: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub c2: Option<DMatrix<f64>>,
    pub sigma2: f64,
    pub sigma: DMatrix<f64>,
}

fn dyad_cov_row(panel: &Panel, i: usize, j: usize) -> Vec<f64> {
    let m = panel.m();
    let directed = panel.network.directed();
    match &panel.covariates.dyad {
        Some(d) => {
            let (a, b) = if directed || i < j { (i, j) } else { (j, i) };
            d.values[(a * m + b) * d.q..(a * m + b + 1) * d.q].to_vec()
        }
        None => {
            let list: Vec<(usize, usize)> = dyads(m, directed).collect();
            let key = if directed || i < j { (i, j) } else { (j, i) };
            list.iter().map(|d| if *d == key { 1.0 } else { 0.0 }).collect()
        }
    }
}

fn node_cov_row(panel: &Panel, i: usize) -> Vec<f64> {
    match &panel.covariates.node {
        Some(n) => n.values[i * n.q..(i + 1) * n.q].to_vec(),
        None => (0..panel.m()).map(|k| if k == i { 1.0 } else { 0.0 }).collect(),
    }
}

pub fn stacked_least_squares(panel: &Panel) -> StackedFit {
    let m = panel.m();
    let p = panel.p();
    let directed = panel.network.directed();
    let net = &panel.network;
    let x = &panel.attributes;

    // network line
    let hom_pairs: Vec<(usize, usize)> = if directed {
        (0..p).flat_map(|k| (0..p).map(move |l| (k, l))).collect()
    } else {
        (0..p).flat_map(|k| (k..p).map(move |l| (k, l))).collect()
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ys = Vec::new();
    for t in 1..panel.times() {
        for (i, j) in dyads(m, directed) {
            let mut row = dyad_cov_row(panel, i, j);
            row.push(net.get(t - 1, i, j));
            if directed {
                row.push(net.get(t - 1, j, i));
            }
            let (xi, xj) = (x.node(t - 1, i), x.node(t - 1, j));
            for &(k, l) in &hom_pairs {
                row.push(if directed || k == l { xi[k] * xj[l] } else { xi[k] * xj[l] + xi[l] * xj[k] });
            }
            rows.push(row);
            ys.push(net.get(t, i, j));
        }
    }
    let q_dyad = dyad_cov_row(panel, 0, 1).len();
    let design = DMatrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c]);
    let y = DMatrix::from_column_slice(ys.len(), 1, &ys);
    let coef = qr_solve(&design, &y);
    let resid = &y - &design * &coef;
    let sigma2 = resid.norm_squared() / ys.len() as f64;
    let gamma: Vec<f64> = (0..q_dyad).map(|k| coef[k]).collect();
    let dyad_intercept = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            0.0
        } else {
            dyad_cov_row(panel, i, j).iter().zip(&gamma).map(|(a, b)| a * b).sum()
        }
    });
    let alpha1 = coef[q_dyad];
    let alpha2 = directed.then(|| coef[q_dyad + 1]);
    let h0 = q_dyad + if directed { 2 } else { 1 };
    let mut h = DMatrix::zeros(p, p);
    for (c, &(k, l)) in hom_pairs.iter().enumerate() {
        h[(k, l)] = coef[h0 + c];
        if !directed {
            h[(l, k)] = coef[h0 + c];
        }
    }

    // attribute line
    let (mut node_intercept, mut a, mut c1, mut c2, mut sigma) = (
        DMatrix::zeros(m, p),
        DMatrix::zeros(p, p),
        DMatrix::zeros(p, p),
        directed.then(|| DMatrix::zeros(p, p)),
        DMatrix::zeros(p, p),
    );
    if p > 0 {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut ys: Vec<Vec<f64>> = Vec::new();
        for t in 1..panel.times() {
            for i in 0..m {
                let mut row = node_cov_row(panel, i);
                row.extend_from_slice(x.node(t - 1, i));
                let mut send = vec![0.0; p];
                let mut recv = vec![0.0; p];
                for j in (0..m).filter(|&j| j != i) {
                    for k in 0..p {
                        send[k] += net.get(t - 1, i, j) * x.get(t - 1, j, k);
                        recv[k] += net.get(t - 1, j, i) * x.get(t - 1, j, k);
                    }
                }
                row.extend(send);
                if directed {
                    row.extend(recv);
                }
                rows.push(row);
                ys.push(x.node(t, i).to_vec());
            }
        }
        let q_node = node_cov_row(panel, 0).len();
        let design = DMatrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c]);
        let y = DMatrix::from_fn(ys.len(), p, |r, c| ys[r][c]);
        let coef = qr_solve(&design, &y);
        let resid = &y - &design * &coef;
        sigma = resid.transpose() * &resid / ys.len() as f64;
        let gamma_node = coef.rows(0, q_node).transpose();
        node_intercept = DMatrix::from_fn(m, p, |i, k| {
            node_cov_row(panel, i).iter().enumerate().map(|(c, v)| v * gamma_node[(k, c)]).sum()
        });
        a = coef.rows(q_node, p).transpose();
        c1 = coef.rows(q_node + p, p).transpose();
        if directed {
            c2 = Some(coef.rows(q_node + 2 * p, p).transpose());
        }
    }
    StackedFit { dyad_intercept, alpha1, alpha2, h, node_intercept, a, c1, c2, sigma2, sigma }
}

/// Largest absolute difference between a fitted parameter set and the
/// stacked reference.
pub fn max_discrepancy(panel: &Panel, params: &McrParams, reference: &StackedFit) -> f64 {
    let m = panel.m();
    let p = panel.p();
    let directed = panel.network.directed();
    let mut worst: f64 = 0.0;
    let mut track = |a: f64, b: f64| worst = worst.max((a - b).abs());
    for (i, j) in dyads(m, directed) {
        let fitted = panel.covariates.dyad_dot(m, directed, i, j, params.gamma.as_slice());
        track(fitted, reference.dyad_intercept[(i, j)]);
    }
    track(params.alpha1, reference.alpha1);
    if let (Some(a), Some(b)) = (params.alpha2, reference.alpha2) {
        track(a, b);
    }
    let mut buf = vec![0.0; p];
    for i in 0..m {
        panel.covariates.node_term_into(i, &params.theta_coef, &mut buf);
        for k in 0..p {
            track(buf[k], reference.node_intercept[(i, k)]);
        }
    }
    let pairs = [
        (&params.h, &reference.h),
        (&params.a, &reference.a),
        (&params.c1, &reference.c1),
        (&params.sigma, &reference.sigma),
    ];
    for (x, y) in pairs {
        for (u, v) in x.iter().zip(y.iter()) {
            track(*u, *v);
        }
    }
    if let (Some(x), Some(y)) = (&params.c2, &reference.c2) {
        for (u, v) in x.iter().zip(y.iter()) {
            track(*u, *v);
        }
    }
    track(params.sigma2, reference.sigma2);
    worst
}

/// A Gaussian observation `r = offset + loading · u + noise` of an unknown
/// vector `u`.
pub struct Observation {
    pub value: DVector<f64>,
    pub offset: DVector<f64>,
    pub loading: DMatrix<f64>,
    pub noise: DMatrix<f64>,
}

/// Offset and loading of a map that is affine in `u`, by evaluating it at
/// zero and at the unit vectors.
pub fn affine_map(d: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let zero = vec![0.0; d];
    let offset = DVector::from_vec(f(&zero));
    let mut loading = DMatrix::zeros(offset.len(), d);
    for k in 0..d {
        let mut e = zero.clone();
        e[k] = 1.0;
        let fk = DVector::from_vec(f(&e));
        loading.set_column(k, &(fk - &offset));
    }
    (offset, loading)
}

/// Conditional mean and covariance of `u ~ N(prior_mean, prior_cov)` given
/// the observations, from the dense joint covariance of `(u, r)`.
pub fn condition_joint_gaussian(
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    observations: &[Observation],
) -> (DVector<f64>, DMatrix<f64>) {
    let d = prior_mean.len();
    let total: usize = observations.iter().map(|o| o.value.len()).sum();
    if total == 0 {
        return (prior_mean.clone(), prior_cov.clone());
    }
    let mut cov_ru = DMatrix::zeros(total, d);
    let mut cov_rr = DMatrix::zeros(total, total);
    let mut resid = DVector::zeros(total);
    let mut offs = Vec::new();
    let mut at = 0;
    for o in observations {
        offs.push(at);
        let q = o.value.len();
        cov_ru.rows_mut(at, q).copy_from(&(&o.loading * prior_cov));
        resid.rows_mut(at, q).copy_from(&(&o.value - &o.offset - &o.loading * prior_mean));
        at += q;
    }
    for (a, oa) in observations.iter().enumerate() {
        for (b, ob) in observations.iter().enumerate() {
            let mut block = &oa.loading * prior_cov * ob.loading.transpose();
            if a == b {
                block += &oa.noise;
            }
            cov_rr.view_mut((offs[a], offs[b]), (oa.value.len(), ob.value.len())).copy_from(&block);
        }
    }
    let lu = cov_rr.lu();
    let gain = lu.solve(&cov_ru).expect("nonsingular observation covariance");
    let mean = prior_mean + gain.transpose() * resid;
    let cov = prior_cov - cov_ru.transpose() * gain;
    (mean, (&cov + cov.transpose()) * 0.5)
}

/// Conditional of coordinate `k` given the others under `N(mean, cov)`.
pub fn condition_coordinate(mean: &DVector<f64>, cov: &DMatrix<f64>, x: &[f64], k: usize) -> (f64, f64) {
    let d = mean.len();
    let others: Vec<usize> = (0..d).filter(|&l| l != k).collect();
    if others.is_empty() {
        return (mean[k], cov[(k, k)]);
    }
    let s_oo = DMatrix::from_fn(others.len(), others.len(), |a, b| cov[(others[a], others[b])]);
    let s_ko = DVector::from_fn(others.len(), |a, _| cov[(k, others[a])]);
    let dev = DVector::from_fn(others.len(), |a, _| x[others[a]] - mean[others[a]]);
    let w = s_oo.lu().solve(&s_ko).unwrap();
    (mean[k] + w.dot(&dev), cov[(k, k)] - w.dot(&s_ko))
}

/// Every observation at `t + 1` (all relations and all attribute
/// vectors), with means as affine functions of the unknown `u` that
/// `set` writes into a copy of `panel`.
pub fn next_step_observations(
    panel: &Panel,
    params: &McrParams,
    t: usize,
    d: usize,
    set: impl Fn(&mut Panel, &[f64]),
) -> Vec<Observation> {
    let mut out = Vec::new();
    if t + 1 >= panel.times() {
        return out;
    }
    let m = panel.m();
    let p = panel.p();
    let directed = panel.network.directed();
    let with = |u: &[f64]| {
        let mut copy = panel.clone();
        set(&mut copy, u);
        copy
    };
    for (a, b) in dyads(m, directed) {
        let (offset, loading) = affine_map(d, |u| vec![params.network_mean(&with(u), a, b, t + 1)]);
        out.push(Observation {
            value: DVector::from_element(1, panel.network.get(t + 1, a, b)),
            offset,
            loading,
            noise: DMatrix::from_element(1, 1, params.sigma2),
        });
    }
    if p > 0 {
        for k in 0..m {
            let (offset, loading) = affine_map(d, |u| params.attribute_mean(&with(u), k, t + 1).as_slice().to_vec());
            out.push(Observation {
                value: DVector::from_column_slice(panel.attributes.node(t + 1, k)),
                offset,
                loading,
                noise: params.sigma.clone(),
            });
        }
    }
    out
}

/// Brute-force conditional of the attribute block `x_{i,t}` given
/// `prior` at `t = 0` (the own equation otherwise).
pub fn attribute_block_oracle(
    panel: &Panel,
    params: &McrParams,
    i: usize,
    t: usize,
    prior_at_zero: (DVector<f64>, DMatrix<f64>),
) -> (DVector<f64>, DMatrix<f64>) {
    let p = panel.p();
    let (mean0, cov0) = if t == 0 { prior_at_zero } else { (params.attribute_mean(panel, i, t), params.sigma.clone()) };
    let obs = next_step_observations(panel, params, t, p, |pn, u| {
        pn.attributes.node_mut(t, i).copy_from_slice(u);
    });
    condition_joint_gaussian(&mean0, &cov0, &obs)
}

/// Brute-force conditional of the relation `y_{ij,t}`; `prior_at_zero`
/// is its distribution at `t = 0`.
pub fn relation_oracle(
    panel: &Panel,
    params: &McrParams,
    i: usize,
    j: usize,
    t: usize,
    prior_at_zero: (f64, f64),
) -> (f64, f64) {
    let (mean0, var0) = if t == 0 { prior_at_zero } else { (params.network_mean(panel, i, j, t), params.sigma2) };
    let obs = next_step_observations(panel, params, t, 1, |pn, u| pn.network.set(t, i, j, u[0]));
    let (mean, cov) = condition_joint_gaussian(&DVector::from_element(1, mean0), &DMatrix::from_element(1, 1, var0), &obs);
    (mean[0], cov[(0, 0)])
}

/// Noise-free trajectories from random initial values.
pub fn noiseless_panel(params: &McrParams, m: usize, times: usize, directed: bool, covariates: CovariateSpec, rng: &mut ChaCha8Rng) -> Panel {
    let p = params.p();
    let mut panel = Panel::new(
        NetworkSeries::zeros(m, times, directed),
        AttributeSeries::zeros(m, p, times),
        covariates,
    )
    .unwrap();
    for (i, j) in dyads(m, directed) {
        panel.network.set(0, i, j, normal(rng));
    }
    for i in 0..m {
        for k in 0..p {
            panel.attributes.set(0, i, k, normal(rng));
        }
    }
    for t in 1..times {
        for (i, j) in dyads(m, directed) {
            let v = params.network_mean(&panel, i, j, t);
            panel.network.set(t, i, j, v);
        }
        for i in 0..m {
            let v = params.attribute_mean(&panel, i, t);
            panel.attributes.node_mut(t, i).copy_from_slice(v.as_slice());
        }
    }
    panel
}

pub mod conditional;
