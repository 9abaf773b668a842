//! File formats.
//!
//! * network: CSV `t,i,j,y` (time 0-based, nodes 1-based); pairs not
//!   listed are missing unless `dense_zero` is set
//! * attributes: CSV `t,i,k,x` (attribute index 1-based)
//! * covariates: CSV `i,j,s1,…` (dyads) and `i,s1,…` (nodes)
//! * parameters and priors: JSON, matrices as `{"rows","cols","data"}`
//!   with `data` column-major
//! * posterior samples: one JSON object per line
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write followed by a read reproduces values bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{McrError, Result};
use crate::gibbs::{Draw, PosteriorSamples, PriorSpec};
use crate::model::{AttributeSeries, DyadCovariates, McrParams, NetworkSeries, NodeCovariates};

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

pub mod serde_matrix {
    use super::*;
    use serde::{de::Error, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.as_slice().to_vec(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DMatrix<f64>, D::Error> {
        let r = MatrixRepr::deserialize(d)?;
        if r.data.len() != r.rows * r.cols {
            return Err(D::Error::custom(format!(
                "matrix has {} values, expected {} x {}",
                r.data.len(),
                r.rows,
                r.cols
            )));
        }
        Ok(DMatrix::from_column_slice(r.rows, r.cols, &r.data))
    }
}

pub mod serde_opt_matrix {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "super::serde_matrix")] DMatrix<f64>);

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.clone().map(Wrap).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<DMatrix<f64>>, D::Error> {
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

pub mod serde_vector {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

pub mod serde_opt_vector {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<DVector<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.as_ref().map(|v| v.as_slice().to_vec()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<DVector<f64>>, D::Error> {
        Ok(Option::<Vec<f64>>::deserialize(d)?.map(DVector::from_vec))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> McrError + '_ {
    move |source| McrError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> McrError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => McrError::Io {
            path: path.display().to_string(),
            source,
        },
        other => McrError::Parse {
            path: path.display().to_string(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Rows of a CSV file with a header, collected with line numbers. Every
/// violation is collected rather than stopping at the first.
struct Table {
    path: String,
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(io_err(path))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(file);
        let header = reader
            .headers()
            .map_err(|e| csv_err(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            rows.push((line, rec.iter().map(str::to_string).collect()));
        }
        Ok(Table {
            path: path.display().to_string(),
            header,
            rows,
        })
    }

    fn expect_header(&self, prefix: &[&str], problems: &mut Vec<String>) {
        let ok = self.header.len() >= prefix.len() && self.header.iter().zip(prefix).all(|(h, p)| h == p);
        if !ok {
            problems.push(format!(
                "{}: header must start with {}, found {}",
                self.path,
                prefix.join(","),
                self.header.join(",")
            ));
        }
    }

    fn problem(&self, line: usize, msg: impl std::fmt::Display) -> String {
        format!("{}:{line}: {msg}", self.path)
    }
}

fn parse_index(table: &Table, line: usize, field: &str, name: &str, problems: &mut Vec<String>) -> Option<usize> {
    match field.parse::<usize>() {
        Ok(v) => Some(v),
        Err(_) => {
            problems.push(table.problem(line, format!("{name} = {field:?} is not a non-negative integer")));
            None
        }
    }
}

fn parse_value(table: &Table, line: usize, field: &str, name: &str, problems: &mut Vec<String>) -> Option<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Some(v),
        _ => {
            problems.push(table.problem(line, format!("{name} = {field:?} is not a finite number")));
            None
        }
    }
}

fn finish<T>(value: T, problems: Vec<String>) -> Result<T> {
    if problems.is_empty() {
        Ok(value)
    } else {
        Err(McrError::Invalid(problems))
    }
}

/// Shape hints for reading; unset dimensions are inferred from the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Shape {
    pub m: Option<usize>,
    pub times: Option<usize>,
}

/// Reads a network CSV. Undirected files may list each pair in either or
/// both orientations; both orientations must then agree.
pub fn read_network_csv(path: &Path, shape: Shape, directed: bool, dense_zero: bool) -> Result<NetworkSeries> {
    let table = Table::read(path)?;
    let mut problems = Vec::new();
    table.expect_header(&["t", "i", "j", "y"], &mut problems);
    let mut entries = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        if row.len() != 4 {
            problems.push(table.problem(*line, format!("expected 4 fields, found {}", row.len())));
            continue;
        }
        let t = parse_index(&table, *line, &row[0], "t", &mut problems);
        let i = parse_index(&table, *line, &row[1], "i", &mut problems);
        let j = parse_index(&table, *line, &row[2], "j", &mut problems);
        let y = parse_value(&table, *line, &row[3], "y", &mut problems);
        if let (Some(t), Some(i), Some(j), Some(y)) = (t, i, j, y) {
            if i == 0 || j == 0 {
                problems.push(table.problem(*line, "node indices are 1-based"));
            } else if i == j {
                problems.push(table.problem(*line, format!("self-relation ({i}, {i}) is not allowed")));
            } else {
                entries.push((*line, t, i - 1, j - 1, y));
            }
        }
    }
    let m = shape
        .m
        .unwrap_or_else(|| entries.iter().map(|e| e.2.max(e.3) + 1).max().unwrap_or(0));
    let times = shape
        .times
        .unwrap_or_else(|| entries.iter().map(|e| e.1 + 1).max().unwrap_or(0));
    let len = m * m * times;
    let mut values = vec![0.0; len];
    let mut seen: Vec<Option<usize>> = vec![None; len];
    for &(line, t, i, j, y) in &entries {
        if i >= m || j >= m || t >= times {
            problems.push(table.problem(
                line,
                format!("entry (t={t}, i={}, j={}) is outside {times} times x {m} nodes", i + 1, j + 1),
            ));
            continue;
        }
        let a = (t * m + i) * m + j;
        if let Some(first) = seen[a] {
            problems.push(table.problem(line, format!("duplicate entry, first given on line {first}")));
            continue;
        }
        seen[a] = Some(line);
        values[a] = y;
    }
    if !directed {
        for t in 0..times {
            for i in 0..m {
                for j in (i + 1)..m {
                    let a = (t * m + i) * m + j;
                    let b = (t * m + j) * m + i;
                    match (seen[a], seen[b]) {
                        (Some(la), Some(_)) if values[a] != values[b] => problems.push(table.problem(
                            la,
                            format!(
                                "undirected pair ({}, {}) at t={t} listed with different values {} and {}",
                                i + 1,
                                j + 1,
                                values[a],
                                values[b]
                            ),
                        )),
                        (Some(l), None) => {
                            values[b] = values[a];
                            seen[b] = Some(l);
                        }
                        (None, Some(l)) => {
                            values[a] = values[b];
                            seen[a] = Some(l);
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    if !problems.is_empty() {
        return Err(McrError::Invalid(problems));
    }
    let observed = (!dense_zero).then(|| seen.iter().map(Option::is_some).collect());
    NetworkSeries::new(m, times, directed, values, observed)
}

/// Writes every observed modelled pair (`i < j` for undirected series).
pub fn write_network_csv(path: &Path, network: &NetworkSeries) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let e = io_err(path);
    let mut body = String::from("t,i,j,y\n");
    for t in 0..network.times() {
        for (i, j) in network.dyads() {
            if network.is_observed(t, i, j) {
                body.push_str(&format!("{t},{},{},{}\n", i + 1, j + 1, network.get(t, i, j)));
            }
        }
    }
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(e)
}

/// Reads an attribute CSV. Entries not listed are `NaN`.
pub fn read_attributes_csv(path: &Path, m: usize, times: usize, p: Option<usize>) -> Result<AttributeSeries> {
    let table = Table::read(path)?;
    let mut problems = Vec::new();
    table.expect_header(&["t", "i", "k", "x"], &mut problems);
    let mut entries = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        if row.len() != 4 {
            problems.push(table.problem(*line, format!("expected 4 fields, found {}", row.len())));
            continue;
        }
        let t = parse_index(&table, *line, &row[0], "t", &mut problems);
        let i = parse_index(&table, *line, &row[1], "i", &mut problems);
        let k = parse_index(&table, *line, &row[2], "k", &mut problems);
        let x = parse_value(&table, *line, &row[3], "x", &mut problems);
        if let (Some(t), Some(i), Some(k), Some(x)) = (t, i, k, x) {
            if i == 0 || k == 0 {
                problems.push(table.problem(*line, "node and attribute indices are 1-based"));
            } else {
                entries.push((*line, t, i - 1, k - 1, x));
            }
        }
    }
    let p = p.unwrap_or_else(|| entries.iter().map(|e| e.3 + 1).max().unwrap_or(0));
    let mut values = vec![f64::NAN; m * p * times];
    let mut seen: Vec<Option<usize>> = vec![None; values.len()];
    for &(line, t, i, k, x) in &entries {
        if t >= times || i >= m || k >= p {
            problems.push(table.problem(
                line,
                format!("entry (t={t}, i={}, k={}) is outside {times} times x {m} nodes x {p} attributes", i + 1, k + 1),
            ));
            continue;
        }
        let a = (t * m + i) * p + k;
        if let Some(first) = seen[a] {
            problems.push(table.problem(line, format!("duplicate entry, first given on line {first}")));
            continue;
        }
        seen[a] = Some(line);
        values[a] = x;
    }
    finish((), problems)?;
    AttributeSeries::new(m, p, times, values)
}

/// Writes every non-`NaN` attribute value.
pub fn write_attributes_csv(path: &Path, x: &AttributeSeries) -> Result<()> {
    write_attribute_table(path, x, "x")
}

/// Writes latent attribute trajectories as `t,i,k,xhat`.
pub fn write_latent_csv(path: &Path, x: &AttributeSeries) -> Result<()> {
    write_attribute_table(path, x, "xhat")
}

fn write_attribute_table(path: &Path, x: &AttributeSeries, column: &str) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut body = format!("t,i,k,{column}\n");
    for t in 0..x.times() {
        for i in 0..x.m() {
            for k in 0..x.p() {
                let v = x.get(t, i, k);
                if !v.is_nan() {
                    body.push_str(&format!("{t},{},{},{v}\n", i + 1, k + 1));
                }
            }
        }
    }
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Reads dyad covariates `i,j,s1,…`. Every modelled pair must be listed
/// (for undirected models in either orientation).
pub fn read_dyad_covariates_csv(path: &Path, m: usize, directed: bool) -> Result<DyadCovariates> {
    let table = Table::read(path)?;
    let mut problems = Vec::new();
    table.expect_header(&["i", "j"], &mut problems);
    let q = table.header.len().saturating_sub(2);
    if q == 0 {
        problems.push(format!("{}: no covariate columns", table.path));
    }
    let mut values = vec![0.0; m * m * q];
    let mut seen: Vec<Option<usize>> = vec![None; m * m];
    for (line, row) in &table.rows {
        if row.len() != q + 2 {
            problems.push(table.problem(*line, format!("expected {} fields, found {}", q + 2, row.len())));
            continue;
        }
        let i = parse_index(&table, *line, &row[0], "i", &mut problems);
        let j = parse_index(&table, *line, &row[1], "j", &mut problems);
        let s: Vec<Option<f64>> = row[2..]
            .iter()
            .enumerate()
            .map(|(k, f)| parse_value(&table, *line, f, &format!("s{}", k + 1), &mut problems))
            .collect();
        let (Some(i), Some(j)) = (i, j) else { continue };
        if i == 0 || j == 0 || i > m || j > m || i == j {
            problems.push(table.problem(*line, format!("pair ({i}, {j}) is not a dyad of {m} nodes")));
            continue;
        }
        let (a, b) = if directed || i < j { (i - 1, j - 1) } else { (j - 1, i - 1) };
        if let Some(first) = seen[a * m + b] {
            problems.push(table.problem(*line, format!("duplicate pair, first given on line {first}")));
            continue;
        }
        seen[a * m + b] = Some(*line);
        for (k, v) in s.into_iter().enumerate() {
            values[(a * m + b) * q + k] = v.unwrap_or(0.0);
        }
    }
    for (i, j) in crate::model::dyads(m, directed) {
        if seen[i * m + j].is_none() {
            problems.push(format!("{}: pair ({}, {}) has no covariates", table.path, i + 1, j + 1));
        }
    }
    finish(DyadCovariates { q, values }, problems)
}

/// Reads node covariates `i,s1,…`; every node must be listed.
pub fn read_node_covariates_csv(path: &Path, m: usize) -> Result<NodeCovariates> {
    let table = Table::read(path)?;
    let mut problems = Vec::new();
    table.expect_header(&["i"], &mut problems);
    let q = table.header.len().saturating_sub(1);
    if q == 0 {
        problems.push(format!("{}: no covariate columns", table.path));
    }
    let mut values = vec![0.0; m * q];
    let mut seen: Vec<Option<usize>> = vec![None; m];
    for (line, row) in &table.rows {
        if row.len() != q + 1 {
            problems.push(table.problem(*line, format!("expected {} fields, found {}", q + 1, row.len())));
            continue;
        }
        let i = parse_index(&table, *line, &row[0], "i", &mut problems);
        let s: Vec<Option<f64>> = row[1..]
            .iter()
            .enumerate()
            .map(|(k, f)| parse_value(&table, *line, f, &format!("s{}", k + 1), &mut problems))
            .collect();
        let Some(i) = i else { continue };
        if i == 0 || i > m {
            problems.push(table.problem(*line, format!("node {i} is outside 1..={m}")));
            continue;
        }
        if let Some(first) = seen[i - 1] {
            problems.push(table.problem(*line, format!("duplicate node, first given on line {first}")));
            continue;
        }
        seen[i - 1] = Some(*line);
        for (k, v) in s.into_iter().enumerate() {
            values[(i - 1) * q + k] = v.unwrap_or(0.0);
        }
    }
    for (i, s) in seen.iter().enumerate() {
        if s.is_none() {
            problems.push(format!("{}: node {} has no covariates", table.path, i + 1));
        }
    }
    finish(NodeCovariates { q, values }, problems)
}

pub fn write_dyad_covariates_csv(path: &Path, m: usize, directed: bool, cov: &DyadCovariates) -> Result<()> {
    let mut body = String::from("i,j");
    for k in 0..cov.q {
        body.push_str(&format!(",s{}", k + 1));
    }
    body.push('\n');
    for (i, j) in crate::model::dyads(m, directed) {
        body.push_str(&format!("{},{}", i + 1, j + 1));
        for k in 0..cov.q {
            body.push_str(&format!(",{}", cov.values[(i * m + j) * cov.q + k]));
        }
        body.push('\n');
    }
    std::fs::write(path, body).map_err(io_err(path))
}

pub fn write_node_covariates_csv(path: &Path, cov: &NodeCovariates) -> Result<()> {
    let mut body = String::from("i");
    for k in 0..cov.q {
        body.push_str(&format!(",s{}", k + 1));
    }
    body.push('\n');
    for (i, s) in cov.values.chunks(cov.q.max(1)).enumerate() {
        body.push_str(&(i + 1).to_string());
        for v in s {
            body.push_str(&format!(",{v}"));
        }
        body.push('\n');
    }
    std::fs::write(path, body).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| McrError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_params(path: &Path) -> Result<McrParams> {
    read_json(path)
}

pub fn write_params(path: &Path, params: &McrParams) -> Result<()> {
    write_json(path, params)
}

pub fn read_prior(path: &Path) -> Result<PriorSpec> {
    read_json(path)
}

pub fn write_prior(path: &Path, prior: &PriorSpec) -> Result<()> {
    write_json(path, prior)
}

pub fn write_json_value<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value)
}

/// Writes retained draws, one JSON object per line.
pub fn write_samples(path: &Path, samples: &PosteriorSamples) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for d in &samples.draws {
        let line = serde_json::to_string(d)?;
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_samples(path: &Path) -> Result<Vec<Draw>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| McrError::Parse {
            path: path.display().to_string(),
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
