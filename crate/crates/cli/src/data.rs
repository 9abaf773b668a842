use mcr_core::io::{read_attributes_csv, read_dyad_covariates_csv, read_network_csv, read_node_covariates_csv, Shape};
use mcr_core::ordinal::OrdinalMethod;
use mcr_core::{
    AttributeScale, AttributeSeries, CovariateSpec, Direction, McrError, ModelMode, NetworkScale, Panel, Result,
};

use crate::{AttributeScaleArg, DataArgs, ModelArgs, NetworkScaleArg, OrdinalModeArg};

/// Accumulates configuration problems so they can be reported together.
#[derive(Default)]
pub struct Problems(Vec<String>);

impl Problems {
    pub fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    pub fn extend_from(&mut self, result: Result<()>) {
        match result {
            Ok(()) => {}
            Err(McrError::Invalid(list)) => self.0.extend(list),
            Err(e) => self.0.push(e.to_string()),
        }
    }

    pub fn finish(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(McrError::Invalid(self.0))
        }
    }
}

pub fn check_data_files(data: &DataArgs, problems: &mut Problems) {
    match &data.network {
        None => problems.push("--network is required"),
        Some(p) if !p.is_file() => problems.push(format!("network file {} does not exist", p.display())),
        _ => {}
    }
    for (flag, path) in [
        ("--attributes", &data.attributes),
        ("--dyad-covariates", &data.dyad_covariates),
        ("--node-covariates", &data.node_covariates),
    ] {
        if let Some(p) = path {
            if !p.is_file() {
                problems.push(format!("{flag} file {} does not exist", p.display()));
            }
        }
    }
    if data.nodes == Some(0) {
        problems.push("--nodes must be positive");
    }
}

/// Checks the scale flags against the inputs and resolves the model mode.
pub fn resolve_mode(data: &DataArgs, model: &ModelArgs, problems: &mut Problems) -> ModelMode {
    let direction = if data.directed { Direction::Directed } else { Direction::Undirected };
    let network_scale = match model.network_scale {
        NetworkScaleArg::Gaussian => NetworkScale::Gaussian,
        NetworkScaleArg::Ordinal => NetworkScale::Ordinal,
    };
    let attribute_scale = match (model.attribute_scale, model.latent_dim) {
        (Some(AttributeScaleArg::Latent), None) => {
            problems.push("--attribute-scale latent needs --latent-dim");
            AttributeScale::Latent
        }
        (Some(AttributeScaleArg::Latent), Some(_)) | (None, Some(_)) => AttributeScale::Latent,
        (Some(other), Some(_)) => {
            problems.push(format!(
                "--latent-dim implies latent attributes, but --attribute-scale is {}",
                format!("{other:?}").to_lowercase()
            ));
            AttributeScale::Latent
        }
        (Some(AttributeScaleArg::Ordinal), None) => AttributeScale::Ordinal,
        (Some(AttributeScaleArg::Gaussian), None) | (None, None) => AttributeScale::Gaussian,
    };
    if model.latent_dim.is_some() && data.attributes.is_some() {
        problems.push("--latent-dim excludes --attributes: latent attributes are not observed");
    }
    if model.latent_dim == Some(0) {
        problems.push("--latent-dim must be positive");
    }
    if attribute_scale == AttributeScale::Ordinal && data.attributes.is_none() {
        problems.push("--attribute-scale ordinal needs --attributes");
    }
    if model.levels.is_some() && network_scale != NetworkScale::Ordinal {
        problems.push("--levels applies to an ordinal network only (--network-scale ordinal)");
    }
    if model.attribute_levels.is_some() && attribute_scale != AttributeScale::Ordinal {
        problems.push("--attribute-levels applies to ordinal attributes only (--attribute-scale ordinal)");
    }
    if model.initial_attribute_regression && attribute_scale == AttributeScale::Gaussian {
        problems.push("--initial-attribute-regression needs ordinal or latent attributes");
    }
    if model.initial_network_regression && network_scale == NetworkScale::Gaussian {
        problems.push("--initial-network-regression needs an ordinal network");
    }
    ModelMode { direction, network_scale, attribute_scale }
}

pub fn ordinal_method(mode: OrdinalModeArg) -> OrdinalMethod {
    match mode {
        OrdinalModeArg::Auto => OrdinalMethod::Auto,
        OrdinalModeArg::Rank => OrdinalMethod::Rank,
        OrdinalModeArg::Threshold => OrdinalMethod::Threshold,
    }
}

/// Reads and validates the panel, and reports its dimensions on stderr.
pub fn load_dataset(data: &DataArgs, mode: ModelMode) -> Result<Panel> {
    let network_path = data.network.as_deref().ok_or_else(|| McrError::Invalid(vec!["--network is required".into()]))?;
    let network = read_network_csv(network_path, Shape { m: data.nodes, times: None }, data.directed, data.dense_zero)?;
    let (m, times) = (network.m(), network.times());
    if times < 2 {
        return Err(McrError::InsufficientData(format!("the network has {times} time point(s); at least 2 are needed")));
    }
    let directed = mode.is_directed();
    let mut covariates = if data.shared_intercepts { CovariateSpec::intercepts(m) } else { CovariateSpec::default() };
    if let Some(path) = &data.dyad_covariates {
        covariates.dyad = Some(read_dyad_covariates_csv(path, m, directed)?);
    }
    if let Some(path) = &data.node_covariates {
        covariates.node = Some(read_node_covariates_csv(path, m)?);
    }
    let attributes = match &data.attributes {
        Some(path) => read_attributes_csv(path, m, times, None)?,
        None => AttributeSeries::zeros(m, 0, times),
    };

    let missing_relations: usize = (0..times)
        .map(|t| network.dyads().filter(|&(i, j)| !network.is_observed(t, i, j)).count())
        .sum();
    let missing_attributes = attributes.values().iter().filter(|v| v.is_nan()).count();
    eprintln!(
        "loaded m = {m}, n = {} transitions ({times} time points), p = {}, {} network; missing: {missing_relations} relations, {missing_attributes} attribute values",
        times - 1,
        attributes.p(),
        if directed { "directed" } else { "undirected" },
    );
    Panel::new(network, attributes, covariates)
}
