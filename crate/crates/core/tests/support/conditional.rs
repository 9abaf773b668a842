//! Comparisons of the sampler's full conditionals with the brute-force
//! joint-Gaussian conditioning above.

use mcr_core::gibbs::{build_model, init_state, ChainInit, GibbsState, Model, ModelSpec};
use mcr_core::latent::{attribute_block_conditional, latent_full_conditional};
use mcr_core::model::dyads;
use mcr_core::ordinal::{coordinate_conditional, z_full_conditional};
use mcr_core::{AttributeScale, AttributeSeries, Direction, ModelMode, NetworkScale, Panel, PriorSpec};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::*;

/// Largest discrepancy of one family of conditionals.
#[derive(Debug, Clone)]
pub struct Gap {
    pub what: String,
    pub gap: f64,
}

fn direction(directed: bool) -> Direction {
    if directed {
        Direction::Directed
    } else {
        Direction::Undirected
    }
}

fn engine(data: &Panel, spec: &ModelSpec) -> (Model, GibbsState) {
    let model = build_model(data, spec, &PriorSpec::default()).unwrap();
    let state = init_state(&model, data, ChainInit::PriorMean, 1, 0).unwrap();
    (model, state)
}

fn random_series(r: &mut ChaCha8Rng, m: usize, p: usize, times: usize) -> AttributeSeries {
    AttributeSeries::new(m, p, times, (0..m * p * times).map(|_| normal(r)).collect()).unwrap()
}

fn gap_of(a: &DVector<f64>, b: &DVector<f64>, ca: &DMatrix<f64>, cb: &DMatrix<f64>) -> f64 {
    (a - b).amax().max((ca - cb).amax())
}

/// Latent attribute blocks at every `(i, t)`.
pub fn latent_block_gap(r: &mut ChaCha8Rng, directed: bool, m: usize, times: usize, p: usize) -> Gap {
    let data = random_panel(r, m, times, 0, directed);
    let (model, mut state) = engine(&data, &ModelSpec::latent(direction(directed), p));
    state.panel.attributes = random_series(r, m, p, times);
    state.params = random_params(r, &model.layout, 0.4);
    state.params.sigma = DMatrix::identity(p, p);
    let mut worst: f64 = 0.0;
    for t in 0..times {
        for i in 0..m {
            let (mean, cov) = latent_full_conditional(&model, &state, i, t).unwrap();
            let anchor = (DVector::zeros(p), DMatrix::identity(p, p));
            let (om, oc) = attribute_block_oracle(&state.panel, &state.params, i, t, anchor);
            worst = worst.max(gap_of(&mean, &om, &cov, &oc));
        }
    }
    Gap { what: format!("latent block (directed={directed}, p={p})"), gap: worst }
}

/// Latent relations of a binary probit network at every `(i, j, t)`.
pub fn relation_gap(r: &mut ChaCha8Rng, directed: bool, m: usize, times: usize, p: usize, initial_regression: bool) -> Gap {
    let mut data = random_panel(r, m, times, p, directed);
    for t in 0..times {
        for (i, j) in dyads(m, directed) {
            data.network.set(t, i, j, if r.random::<bool>() { 1.0 } else { 0.0 });
        }
    }
    let mut spec = ModelSpec::new(ModelMode {
        direction: direction(directed),
        network_scale: NetworkScale::Ordinal,
        attribute_scale: AttributeScale::Gaussian,
    });
    spec.initial_state.network = initial_regression;
    let (model, mut state) = engine(&data, &spec);
    for t in 0..times {
        for (i, j) in dyads(m, directed) {
            state.panel.network.set(t, i, j, normal(r));
        }
    }
    state.params = random_params(r, &model.layout, 0.4);
    state.params.sigma2 = 1.0;
    if initial_regression {
        state.initial.network_coef = Some(DVector::from_fn(model.layout.q_dyad, |_, _| normal(r)));
    }
    let prior = &model.prior;
    let mut worst: f64 = 0.0;
    for t in 0..times {
        for (i, j) in dyads(m, directed) {
            let (mean, var) = z_full_conditional(&model, &state, i, j, t).unwrap();
            let at_zero = match &state.initial.network_coef {
                Some(c) => (state.panel.covariates.dyad_dot(m, directed, i, j, c.as_slice()), state.params.sigma2),
                None => (prior.z_prior_mean, prior.z_prior_var),
            };
            let (om, ov) = relation_oracle(&state.panel, &state.params, i, j, t, at_zero);
            worst = worst.max((mean - om).abs()).max((var - ov).abs());
        }
    }
    Gap {
        what: format!("probit relation (directed={directed}, p={p}, initial regression={initial_regression})"),
        gap: worst,
    }
}

/// Single coordinates of ordinal attribute blocks at every `(i, k, t)`.
pub fn ordinal_attribute_gap(r: &mut ChaCha8Rng, directed: bool, m: usize, times: usize, p: usize, initial_regression: bool) -> Gap {
    let mut data = random_panel(r, m, times, p, directed);
    for t in 0..times {
        for i in 0..m {
            for k in 0..p {
                data.attributes.set(t, i, k, r.random_range(0..3) as f64);
            }
        }
    }
    let mut spec = ModelSpec::new(ModelMode {
        direction: direction(directed),
        network_scale: NetworkScale::Gaussian,
        attribute_scale: AttributeScale::Ordinal,
    });
    spec.initial_state.attributes = initial_regression;
    let (model, mut state) = engine(&data, &spec);
    state.panel.attributes = random_series(r, m, p, times);
    state.params = random_params(r, &model.layout, 0.4);
    if initial_regression {
        state.initial.attribute_coef = Some(DMatrix::from_fn(p, model.layout.q_node, |_, _| normal(r)));
        state.initial.attribute_var = Some(DVector::from_fn(p, |_, _| 0.5 + r.random::<f64>()));
    }
    let prior = &model.prior;
    let mut worst: f64 = 0.0;
    for t in 0..times {
        for i in 0..m {
            let info = attribute_block_conditional(&model, &state, i, t).unwrap();
            let at_zero = match (&state.initial.attribute_coef, &state.initial.attribute_var) {
                (Some(coef), Some(var)) => {
                    let mut s = vec![0.0; model.layout.q_node];
                    state.panel.covariates.node_row_into(i, &mut s);
                    (coef * DVector::from_vec(s), DMatrix::from_diagonal(var))
                }
                _ => (
                    DVector::from_element(p, prior.z_prior_mean),
                    DMatrix::identity(p, p) * prior.z_prior_var,
                ),
            };
            let (bm, bc) = attribute_block_oracle(&state.panel, &state.params, i, t, at_zero);
            let x = state.panel.attributes.node(t, i);
            for k in 0..p {
                let (mean, var) = coordinate_conditional(&info, x, k);
                let (om, ov) = condition_coordinate(&bm, &bc, x, k);
                worst = worst.max((mean - om).abs()).max((var - ov).abs());
            }
        }
    }
    Gap {
        what: format!("ordinal attribute coordinate (directed={directed}, p={p}, initial regression={initial_regression})"),
        gap: worst,
    }
}

/// Every family on small instances (`m = 4`, `n = 3`) in both directions.
pub fn all_gaps(seed: u64, dims: &[usize]) -> Vec<Gap> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    for directed in [false, true] {
        for &p in dims {
            out.push(latent_block_gap(&mut r, directed, 4, 4, p));
            for initial in [false, true] {
                out.push(relation_gap(&mut r, directed, 4, 4, p, initial));
                out.push(ordinal_attribute_gap(&mut r, directed, 4, 4, p, initial));
            }
        }
    }
    out
}
