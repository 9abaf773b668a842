//! Simulated inputs shared by the benchmarks.

use mcr_core::simulate::{simulate, SimConfig};
use mcr_core::{CovariateSpec, Direction, McrParams, ModelMode, Panel};
use nalgebra::DMatrix;

/// A stable directed Gaussian panel with `p` attributes.
pub fn gaussian_panel(m: usize, times: usize, p: usize, shared_intercepts: bool) -> Panel {
    let mut config = SimConfig::new(m, times, ModelMode::gaussian(Direction::Directed));
    config.seed = 17;
    if shared_intercepts {
        config.covariates = CovariateSpec::intercepts(m);
    }
    let mut params = McrParams::zeros(&config.layout(p));
    params.alpha1 = 0.5;
    params.alpha2 = Some(0.2);
    params.h = DMatrix::identity(p, p) * 0.1;
    params.a = DMatrix::identity(p, p) * 0.5;
    params.c1 = DMatrix::identity(p, p) * (0.1 / (m - 1) as f64);
    params.c2 = Some(DMatrix::identity(p, p) * (0.05 / (m - 1) as f64));
    simulate(&params, &config).expect("stable parameters").latent
}
