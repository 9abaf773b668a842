//! Multiplicative coevolution regression (MCR) for longitudinal network and
//! nodal attribute data.
//!
//! A network `Y_t` and attributes `X_t` evolve jointly:
//!
//! ```text
//! y_{ij,t+1} = μ_ij + α y_{ij,t} + x_{i,t}ᵀ H x_{j,t} + ε_{ij,t+1}
//! x_{i,t+1}  = θ_i + A x_{i,t} + C X_tᵀ y_{i·,t} + e_{i,t+1}
//! ```
//!
//! with `α`/`A` capturing autocorrelation, `H` homophily and `C` contagion.
//! The crate provides closed-form maximum likelihood ([`mle`]), a Gibbs
//! sampler ([`gibbs`]) with latent-attribute ([`latent`]) and ordinal probit
//! ([`ordinal`]) extensions, forward simulation ([`simulate`]), and MCMC and
//! forecasting diagnostics ([`diagnostics`]).

pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod latent;
pub mod linalg;
pub mod mle;
pub mod model;
pub mod ordinal;
pub mod simulate;

pub use error::{McrError, Result};
pub use diagnostics::{effective_sample_size, forecast_study, posterior_quantiles, sum_of_squares_decomposition, FitMethod};
pub use gibbs::{fit_bayes, ChainConfig, ChainInit, ModelSpec, OrdinalOptions, PosteriorSamples, PriorSpec};
pub use mle::{fit_mle, MleFit, MleOptions};
pub use simulate::{simulate, InitialState, SimConfig, Simulation};
pub use model::{
    AttributeScale, AttributeSeries, CovariateSpec, Direction, Layout, McrParams, ModelMode,
    NetworkScale, NetworkSeries, Panel, Terms,
};
