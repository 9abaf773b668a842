//! Closed-form maximum likelihood for the Gaussian model.
//!
//! Both model lines are linear regressions once the design rows are formed,
//! so estimation reduces to accumulating normal equations and solving them.
//! The likelihood conditions on the first time point `(Y_0, X_0)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{McrError, Result};
use crate::linalg::{cholesky, condition_number, symmetric_pinv, symmetrize, weakest_direction};
use crate::model::{Layout, McrParams, ModelMode, Panel, Terms};

/// Accumulated cross-products of a multivariate regression `y = coef · w + noise`.
///
/// * `q = Σ w wᵀ` (`d × d`)
/// * `l = Σ y wᵀ` (`r × d`; `r = 1` for the network line, `p` for attributes)
/// * `yy = Σ y yᵀ` (`r × r`)
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    pub q: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub yy: DMatrix<f64>,
    pub count: usize,
    pub columns: Vec<String>,
}

impl NormalEquations {
    pub fn zeros(responses: usize, columns: Vec<String>) -> Self {
        let d = columns.len();
        NormalEquations {
            q: DMatrix::zeros(d, d),
            l: DMatrix::zeros(responses, d),
            yy: DMatrix::zeros(responses, responses),
            count: 0,
            columns,
        }
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// `l` as a column vector (network line).
    pub fn l_vector(&self) -> DVector<f64> {
        self.l.row(0).transpose()
    }

    /// Adds one design row. Only the lower triangle of `q` is touched;
    /// call [`NormalEquations::finish`] once accumulation is complete.
    fn push(&mut self, w: &[f64], y: &[f64], nonzero: &mut Vec<usize>) {
        nonzero.clear();
        nonzero.extend(w.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, _)| k));
        for (ia, &a) in nonzero.iter().enumerate() {
            let wa = w[a];
            for &b in &nonzero[..=ia] {
                self.q[(a, b)] += wa * w[b];
            }
        }
        for (r, &yr) in y.iter().enumerate() {
            for &a in nonzero.iter() {
                self.l[(r, a)] += yr * w[a];
            }
            for (s, &ys) in y.iter().enumerate() {
                self.yy[(r, s)] += yr * ys;
            }
        }
        self.count += 1;
    }

    fn finish(mut self) -> Self {
        let d = self.dim();
        for a in 0..d {
            for b in (a + 1)..d {
                self.q[(a, b)] = self.q[(b, a)];
            }
        }
        self
    }

    /// Associative merge of partial sums.
    pub fn merge(mut self, other: &NormalEquations) -> Self {
        self.q += &other.q;
        self.l += &other.l;
        self.yy += &other.yy;
        self.count += other.count;
        self
    }

    /// Residual cross-product `Σ (y − coef·w)(y − coef·w)ᵀ` for `coef` (`r × d`).
    pub fn rss(&self, coef: &DMatrix<f64>) -> DMatrix<f64> {
        let cl = coef * self.l.transpose();
        let out = &self.yy - &cl - cl.transpose() + coef * &self.q * coef.transpose();
        symmetrize(out)
    }
}

/// Solver safeguards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    /// Largest accepted spectral condition number of `Q`.
    pub condition_cap: f64,
    /// Fall back to the pseudo-inverse instead of failing on an
    /// ill-conditioned `Q`.
    pub pseudo_inverse: bool,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            condition_cap: 1e12,
            pseudo_inverse: false,
        }
    }
}

fn network_slice(panel: &Panel, layout: &Layout, t: usize, ne: &mut NormalEquations) {
    let mut w = vec![0.0; layout.beta_len];
    let mut nz = Vec::with_capacity(layout.beta_len);
    let net = &panel.network;
    for (i, j) in net.dyads() {
        let complete = net.is_observed(t, i, j)
            && net.is_observed(t - 1, i, j)
            && (!layout.directed() || net.is_observed(t - 1, j, i));
        if !complete {
            continue;
        }
        layout.network_row_into(panel, i, j, t, &mut w);
        ne.push(&w, &[net.get(t, i, j)], &mut nz);
    }
}

fn attribute_slice(panel: &Panel, layout: &Layout, t: usize, ne: &mut NormalEquations) {
    let mut w = vec![0.0; layout.k_len];
    let mut nz = Vec::with_capacity(layout.k_len);
    let net = &panel.network;
    for i in 0..panel.m() {
        if layout.c1_start.is_some() && net.has_missing() {
            let touches_missing = (0..panel.m())
                .any(|j| j != i && (!net.is_observed(t - 1, i, j) || !net.is_observed(t - 1, j, i)));
            if touches_missing {
                continue;
            }
        }
        layout.attribute_row_into(panel, i, t, &mut w);
        ne.push(&w, panel.attributes.node(t, i), &mut nz);
    }
}

const ACCUMULATION_CHUNKS: usize = 8;

fn accumulate<F>(panel: &Panel, empty: NormalEquations, slice: F) -> Result<NormalEquations>
where
    F: Fn(usize, &mut NormalEquations) + Sync + Send,
{
    if panel.n() == 0 {
        return Err(McrError::InsufficientData(
            "at least two time points are needed".into(),
        ));
    }
    // Fixed chunks of time points are summed independently and merged in
    // time order, so the result is bit-identical for any thread count.
    let n = panel.n();
    let chunk = n.div_ceil(ACCUMULATION_CHUNKS);
    let parts: Vec<NormalEquations> = (0..n.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut part = NormalEquations::zeros(empty.l.nrows(), empty.columns.clone());
            for t in (1 + c * chunk)..=((c + 1) * chunk).min(n) {
                slice(t, &mut part);
            }
            part
        })
        .collect();
    Ok(parts.iter().fold(empty, |acc, part| acc.merge(part)).finish())
}

/// `Q = Σ_t Σ_pairs w wᵀ`, `l = Σ_t Σ_pairs w y` over `i < j` (undirected)
/// or `i ≠ j` (directed). Rows whose response or lags are missing are skipped.
pub fn accumulate_network_normal_equations(panel: &Panel, layout: &Layout) -> Result<NormalEquations> {
    accumulate(panel, NormalEquations::zeros(1, layout.beta_labels()), |t, ne| {
        network_slice(panel, layout, t, ne)
    })
}

/// `L = Σ_t X_tᵀ W_t`, `Q = Σ_t W_tᵀ W_t`.
pub fn accumulate_attribute_normal_equations(
    panel: &Panel,
    layout: &Layout,
) -> Result<NormalEquations> {
    accumulate(panel, NormalEquations::zeros(layout.p, layout.b_labels()), |t, ne| {
        attribute_slice(panel, layout, t, ne)
    })
}

/// Solution of one regression line.
#[derive(Debug, Clone)]
pub struct LineSolution {
    /// `r × d` coefficients.
    pub coef: DMatrix<f64>,
    /// Residual cross-product at `coef`.
    pub rss: DMatrix<f64>,
    /// `rss / count`.
    pub noise: DMatrix<f64>,
    pub condition: f64,
    /// `Q⁻¹` (or its pseudo-inverse).
    pub q_inverse: DMatrix<f64>,
}

fn solve_line(ne: &NormalEquations, opts: &MleOptions) -> Result<LineSolution> {
    if ne.count == 0 {
        return Err(McrError::InsufficientData("no complete design rows".into()));
    }
    let condition = condition_number(&ne.q);
    let q_inverse = if condition <= opts.condition_cap {
        symmetrize(cholesky(&ne.q, "normal-equation matrix Q")?.inverse())
    } else if opts.pseudo_inverse {
        symmetric_pinv(&ne.q)
    } else {
        let weakest = weakest_direction(&ne.q);
        let max = weakest.amax();
        let columns = weakest
            .iter()
            .zip(&ne.columns)
            .filter(|(v, _)| v.abs() >= 0.1 * max)
            .map(|(_, c)| c.clone())
            .collect();
        return Err(McrError::RankDeficient { condition, columns });
    };
    let coef = &ne.l * &q_inverse;
    let rss = ne.rss(&coef);
    let noise = &rss / ne.count as f64;
    Ok(LineSolution {
        coef,
        rss,
        noise,
        condition,
        q_inverse,
    })
}

/// `β̂ = Q⁻¹ l` and `σ̂² = RSS / count`.
pub fn solve_network_mle(ne: &NormalEquations, opts: &MleOptions) -> Result<(DVector<f64>, f64)> {
    let sol = solve_line(ne, opts)?;
    Ok((sol.coef.row(0).transpose(), sol.noise[(0, 0)].max(0.0)))
}

/// `B̂ = L Q⁻¹` and `Σ̂ = RSS / (m n)`.
pub fn solve_attribute_mle(ne: &NormalEquations, opts: &MleOptions) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let sol = solve_line(ne, opts)?;
    Ok((sol.coef, sol.noise))
}

/// A fitted Gaussian model.
#[derive(Debug, Clone)]
pub struct MleFit {
    pub layout: Layout,
    pub params: McrParams,
    pub rss_network: f64,
    pub rss_attributes: DMatrix<f64>,
    pub dyad_count: usize,
    pub node_time_count: usize,
    pub condition_network: f64,
    pub condition_attributes: Option<f64>,
    /// Standard errors of `β̂` from `σ̂² Q⁻¹`.
    pub se_beta: DVector<f64>,
    /// Standard errors of `B̂` from `Q⁻¹ ⊗ Σ̂`, same shape as `B`.
    pub se_b: DMatrix<f64>,
}

impl MleFit {
    pub fn beta(&self) -> DVector<f64> {
        self.layout.pack_beta(&self.params)
    }

    pub fn b(&self) -> DMatrix<f64> {
        self.layout.pack_b(&self.params)
    }
}

/// Fits both lines of the Gaussian model by least squares.
pub fn fit_mle(panel: &Panel, mode: ModelMode, terms: Terms, opts: &MleOptions) -> Result<MleFit> {
    if !mode.is_fully_observed_gaussian() {
        return Err(McrError::Invalid(vec![
            "maximum likelihood needs a Gaussian network and observed Gaussian attributes".into(),
        ]));
    }
    if panel.network.directed() != mode.is_directed() {
        return Err(McrError::Invalid(vec![
            "network directedness does not match the model mode".into(),
        ]));
    }
    let layout = Layout::new(mode, terms, panel);
    let mut params = McrParams::zeros(&layout);

    let net_ne = accumulate_network_normal_equations(panel, &layout)?;
    let net = solve_line(&net_ne, opts)?;
    let beta = net.coef.row(0).transpose();
    layout.unpack_beta(&beta, &mut params);
    let rss_network = net.rss[(0, 0)].max(0.0);
    params.sigma2 = rss_network / net_ne.count as f64;
    let se_beta = DVector::from_fn(layout.beta_len, |k, _| {
        (params.sigma2 * net.q_inverse[(k, k)]).max(0.0).sqrt()
    });

    let p = layout.p;
    let (rss_attributes, node_time_count, condition_attributes, se_b) = if p > 0 {
        let att_ne = accumulate_attribute_normal_equations(panel, &layout)?;
        let att = solve_line(&att_ne, opts)?;
        layout.unpack_b(&att.coef, &mut params);
        params.sigma = symmetrize(att.noise.clone());
        let se_b = DMatrix::from_fn(p, layout.k_len, |r, k| {
            (params.sigma[(r, r)] * att.q_inverse[(k, k)]).max(0.0).sqrt()
        });
        (att.rss, att_ne.count, Some(att.condition), se_b)
    } else {
        (DMatrix::zeros(0, 0), 0, None, DMatrix::zeros(0, layout.k_len))
    };

    Ok(MleFit {
        layout,
        params,
        rss_network,
        rss_attributes,
        dyad_count: net_ne.count,
        node_time_count,
        condition_network: net.condition,
        condition_attributes,
        se_beta,
        se_b,
    })
}

/// Gaussian log-likelihood of time points `1..=n` given the first one.
/// Dyads with a missing response or lag are skipped; attributes enter the
/// attribute line only when `p > 0`.
pub fn log_likelihood(panel: &Panel, params: &McrParams) -> Result<f64> {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let net = &panel.network;
    let mut ll = 0.0;
    for t in 1..panel.times() {
        for (i, j) in net.dyads() {
            if !(net.is_observed(t, i, j) && net.is_observed(t - 1, i, j) && net.is_observed(t - 1, j, i)) {
                continue;
            }
            let r = net.get(t, i, j) - params.network_mean(panel, i, j, t);
            ll -= 0.5 * (ln2pi + params.sigma2.ln() + r * r / params.sigma2);
        }
    }
    let p = panel.p();
    if p > 0 {
        let chol = cholesky(&params.sigma, "Sigma")?;
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        for t in 1..panel.times() {
            for i in 0..panel.m() {
                let r = DVector::from_column_slice(panel.attributes.node(t, i)) - params.attribute_mean(panel, i, t);
                let q = r.dot(&chol.solve(&r));
                ll -= 0.5 * (p as f64 * ln2pi + log_det + q);
            }
        }
    }
    Ok(ll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dyads, AttributeSeries, CovariateSpec, Direction, NetworkSeries};
    use rand::{Rng, SeedableRng};

    fn random_panel(m: usize, times: usize, p: usize, directed: bool, seed: u64) -> Panel {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut net = NetworkSeries::zeros(m, times, directed);
        for t in 0..times {
            for (i, j) in dyads(m, directed) {
                net.set(t, i, j, rng.random_range(-2.0..2.0));
            }
        }
        let x = (0..m * p * times).map(|_| rng.random_range(-2.0..2.0)).collect();
        Panel::new(net, AttributeSeries::new(m, p, times, x).unwrap(), CovariateSpec::default()).unwrap()
    }

    #[test]
    fn single_dyad_single_transition() {
        let panel = random_panel(2, 2, 0, false, 1);
        let layout = Layout::new(ModelMode::default(), Terms::default(), &panel);
        let ne = accumulate_network_normal_equations(&panel, &layout).unwrap();
        assert_eq!(ne.count, 1);
    }

    #[test]
    fn zero_transitions_is_insufficient() {
        let panel = random_panel(3, 1, 1, false, 1);
        let layout = Layout::new(ModelMode::default(), Terms::default(), &panel);
        assert!(matches!(
            accumulate_network_normal_equations(&panel, &layout),
            Err(McrError::InsufficientData(_))
        ));
    }

    #[test]
    fn accumulation_is_linear_in_data() {
        // Stacking the same transitions twice doubles Q and l.
        let panel = random_panel(4, 3, 1, false, 2);
        let layout = Layout::new(ModelMode::default(), Terms::default(), &panel);
        let once = accumulate_network_normal_equations(&panel, &layout).unwrap();
        let twice = once.clone().merge(&once);
        assert_eq!(twice.q, &once.q * 2.0);
        assert_eq!(twice.l, &once.l * 2.0);
        assert_eq!(twice.count, 2 * once.count);
    }

    #[test]
    fn exact_ar1_single_dyad() {
        let mut net = NetworkSeries::zeros(2, 6, false);
        let mut y = 3.0;
        for t in 0..6 {
            net.set(t, 0, 1, y);
            y *= 0.5;
        }
        let panel = Panel::network_only(net, CovariateSpec::default()).unwrap();
        let layout = Layout::new(ModelMode::default(), Terms::default(), &panel);
        // drop the intercept column: solve the 1x1 system by hand
        let ne = accumulate_network_normal_equations(&panel, &layout).unwrap();
        let alpha = ne.l[(0, 1)] / ne.q[(1, 1)];
        assert!((alpha - 0.5).abs() < 1e-12);
    }

    #[test]
    fn all_zero_attributes_are_collinear() {
        let mut panel = random_panel(5, 4, 1, false, 3);
        panel.attributes = AttributeSeries::zeros(5, 1, 4);
        let layout = Layout::new(ModelMode::default(), Terms::default(), &panel);
        let ne = accumulate_attribute_normal_equations(&panel, &layout).unwrap();
        let err = solve_attribute_mle(&ne, &MleOptions::default()).unwrap_err();
        match err {
            McrError::RankDeficient { columns, .. } => {
                assert!(columns.iter().any(|c| c.starts_with("A[")), "{columns:?}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let (b, _) = solve_attribute_mle(
            &ne,
            &MleOptions { pseudo_inverse: true, ..Default::default() },
        )
        .unwrap();
        assert!(b.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn attribute_noise_is_symmetric_psd() {
        let panel = random_panel(6, 5, 2, true, 4);
        let fit = fit_mle(&panel, ModelMode::gaussian(Direction::Directed), Terms::default(), &MleOptions::default())
            .unwrap();
        let s = &fit.params.sigma;
        assert!((s - s.transpose()).amax() < 1e-14);
        assert!(nalgebra::SymmetricEigen::new(s.clone()).eigenvalues.min() >= -1e-12);
    }

    #[test]
    fn intercept_only_attributes_give_node_means() {
        // A = C = 0: regress x_{i,t} on the one-hot s_i alone
        let panel = random_panel(4, 6, 1, false, 5);
        let mut ne = NormalEquations::zeros(1, (0..4).map(|k| k.to_string()).collect());
        let mut nz = Vec::new();
        for t in 1..6 {
            for i in 0..4 {
                let mut w = [0.0; 4];
                w[i] = 1.0;
                ne.push(&w, &[panel.attributes.get(t, i, 0)], &mut nz);
            }
        }
        let ne = ne.finish();
        let (b, _) = solve_attribute_mle(&ne, &MleOptions::default()).unwrap();
        for i in 0..4 {
            let mean = (1..6).map(|t| panel.attributes.get(t, i, 0)).sum::<f64>() / 5.0;
            assert!((b[(0, i)] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn mle_requires_gaussian_mode() {
        let panel = random_panel(4, 3, 1, false, 6);
        let err = fit_mle(
            &panel,
            ModelMode::latent(Direction::Undirected),
            Terms::default(),
            &MleOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, McrError::Invalid(_)));
    }

    #[test]
    fn rss_formula_matches_direct_residuals() {
        let panel = random_panel(5, 4, 2, false, 7);
        let fit = fit_mle(&panel, ModelMode::default(), Terms::default(), &MleOptions::default()).unwrap();
        let mut direct = 0.0;
        for t in 1..=panel.n() {
            for (i, j) in panel.network.dyads() {
                let r = panel.network.get(t, i, j) - fit.params.network_mean(&panel, i, j, t);
                direct += r * r;
            }
        }
        assert!((direct - fit.rss_network).abs() < 1e-9 * direct.max(1.0));
    }
}
