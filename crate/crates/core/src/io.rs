//! File formats: data matrices, truth edge lists, manifests and fit outputs.
//!
//! Indices in files are 1-based; everything in memory is 0-based.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::MetricRow;
use crate::model::{CholeskyPair, Dataset, GroupData, SupportGraph};
use crate::priors::Hyperparameters;
use crate::sampler::{Mode, PosteriorSummary};
use crate::simulate::{ScenarioSpec, Truth};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn header(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// Write a numeric matrix with header `x1,...,xp`.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header(m.ncols()))?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a numeric matrix with one header row; every record must have the
/// header's width.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let p = r.headers()?.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, record) in r.records().enumerate() {
        let record = record?;
        if record.len() != p {
            return Err(Error::InvalidData(format!(
                "{}: row {} has {} fields, header has {p}",
                path.display(),
                i + 1,
                record.len()
            )));
        }
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Parse(format!("{}: row {}: cannot parse {field:?} as a number", path.display(), i + 1))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, p, &values))
}

pub fn read_group_csv(path: &Path) -> Result<GroupData> {
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    GroupData::new(label, read_matrix_csv(path)?)
}

/// One group per CSV file, in the given order.
pub fn load_csvs(paths: &[PathBuf]) -> Result<Dataset> {
    Dataset::new(paths.iter().map(|p| read_group_csv(p)).collect::<Result<_>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub label: String,
    pub data: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagonal: Option<String>,
}

/// Binds per-group data (and optionally truth) files. Paths are relative to
/// the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub version: String,
    pub p: usize,
    pub groups: Vec<GroupEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
}

impl DataManifest {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn load_dataset(&self, base: &Path) -> Result<Dataset> {
        let groups = self
            .groups
            .iter()
            .map(|g| {
                let path = base.join(&g.data);
                let group = GroupData::new(g.label.clone(), read_matrix_csv(&path)?)?;
                if group.p() != self.p || group.n() != g.n {
                    return Err(Error::ShapeMismatch(format!(
                        "{}: expected {} x {}, found {} x {}",
                        path.display(),
                        g.n,
                        self.p,
                        group.n(),
                        group.p()
                    )));
                }
                Ok(group)
            })
            .collect::<Result<_>>()?;
        Dataset::new(groups)
    }

    pub fn load_truth(&self, base: &Path) -> Result<Truth> {
        let pairs = self
            .groups
            .iter()
            .map(|g| match (&g.edges, &g.diagonal) {
                (Some(e), Some(d)) => read_truth_pair(&base.join(e), &base.join(d), self.p),
                _ => Err(Error::InvalidData(format!("group {} has no truth files", g.label))),
            })
            .collect::<Result<Vec<_>>>()?;
        let graph = SupportGraph::from_pairs(&pairs)?;
        Ok(Truth { pairs, graph })
    }
}

fn manifest_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

pub fn load_dataset(manifest: &Path) -> Result<Dataset> {
    DataManifest::read(manifest)?.load_dataset(manifest_dir(manifest))
}

pub fn load_truth(manifest: &Path) -> Result<Truth> {
    DataManifest::read(manifest)?.load_truth(manifest_dir(manifest))
}

#[derive(Debug, Deserialize)]
struct EdgeRecord {
    j: usize,
    l: usize,
    a: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DiagRecord {
    j: usize,
    d: f64,
}

pub fn write_truth_pair(edges: &Path, diagonal: &Path, pair: &CholeskyPair) -> Result<()> {
    let mut w = csv::Writer::from_path(edges)?;
    let a = pair.a();
    w.write_record(["j", "l", "a"])?;
    for j in 0..pair.p() {
        for l in 0..j {
            if a[(j, l)] != 0.0 {
                w.write_record([(j + 1).to_string(), (l + 1).to_string(), a[(j, l)].to_string()])?;
            }
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(diagonal)?;
    for (j, &d) in pair.d().iter().enumerate() {
        w.serialize(DiagRecord { j: j + 1, d })?;
    }
    w.flush()?;
    Ok(())
}

fn one_based(path: &Path, j: usize, l: Option<usize>, p: usize) -> Result<(usize, Option<usize>)> {
    let bad = || Error::InvalidData(format!("{}: index out of range in ({j}, {l:?}) for p = {p}", path.display()));
    if j == 0 || j > p {
        return Err(bad());
    }
    match l {
        Some(l) if l == 0 || l >= j => Err(bad()),
        _ => Ok((j - 1, l.map(|l| l - 1))),
    }
}

pub fn read_truth_pair(edges: &Path, diagonal: &Path, p: usize) -> Result<CholeskyPair> {
    let mut a = DMatrix::zeros(p, p);
    for rec in csv::Reader::from_path(edges)?.deserialize::<EdgeRecord>() {
        let rec = rec?;
        let (j, l) = one_based(edges, rec.j, Some(rec.l), p)?;
        a[(j, l.unwrap_or_default())] = rec.a;
    }
    let mut d = DVector::from_element(p, f64::NAN);
    for rec in csv::Reader::from_path(diagonal)?.deserialize::<DiagRecord>() {
        let rec = rec?;
        let (j, _) = one_based(diagonal, rec.j, None, p)?;
        d[j] = rec.d;
    }
    CholeskyPair::new(a, d)
}

/// Write truth, data and a manifest for a simulated scenario into `dir`;
/// returns the manifest path.
pub fn write_simulation(dir: &Path, spec: &ScenarioSpec, truth: &Truth, data: &Dataset) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut groups = Vec::with_capacity(data.k());
    for (k, (group, pair)) in data.groups().iter().zip(&truth.pairs).enumerate() {
        let entry = GroupEntry {
            label: group.label().to_string(),
            data: format!("data_{}.csv", k + 1),
            n: group.n(),
            edges: Some(format!("edges_{}.csv", k + 1)),
            diagonal: Some(format!("diag_{}.csv", k + 1)),
        };
        write_matrix_csv(&dir.join(&entry.data), group.matrix())?;
        write_truth_pair(
            &dir.join(entry.edges.as_deref().unwrap_or_default()),
            &dir.join(entry.diagonal.as_deref().unwrap_or_default()),
            pair,
        )?;
        groups.push(entry);
    }
    let manifest = DataManifest { version: VERSION.into(), p: data.p(), groups, scenario: Some(spec.clone()) };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_hyperparameters(path: &Path) -> Result<Hyperparameters> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub sampling_seconds: f64,
    pub total_seconds: f64,
}

/// Everything needed to repeat a fit bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub mode: Mode,
    pub seed: u64,
    pub data: Vec<String>,
    pub centered: bool,
    pub p: usize,
    pub k: usize,
    pub n: Vec<usize>,
    pub threads: usize,
    pub hyperparameters: Hyperparameters,
    pub timings: Timings,
}

#[derive(Debug, Serialize, Deserialize)]
struct AcceptanceRecord {
    group: usize,
    j: usize,
    rate: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRecord {
    iteration: usize,
    score: f64,
}

pub fn inclusion_file(k: usize) -> String {
    format!("inclusion_{}.csv", k + 1)
}

pub fn selected_file(k: usize) -> String {
    format!("selected_{}.csv", k + 1)
}

/// Inclusion matrices, selected edge lists, acceptance rates, trace and
/// `run.json` under `dir`.
pub fn write_fit(dir: &Path, summary: &PosteriorSummary, manifest: &RunManifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (k, inc) in summary.inclusion.iter().enumerate() {
        write_matrix_csv(&dir.join(inclusion_file(k)), inc)?;
        let mut w = csv::Writer::from_path(dir.join(selected_file(k)))?;
        w.write_record(["j", "l", "prob"])?;
        for (j, l) in summary.selected.edges(k) {
            w.write_record([(j + 1).to_string(), (l + 1).to_string(), inc[(j, l)].to_string()])?;
        }
        w.flush()?;
    }
    let mut w = csv::Writer::from_path(dir.join("acceptance.csv"))?;
    for (k, rates) in summary.acceptance.iter().enumerate() {
        for (j, &rate) in rates.iter().enumerate().skip(1) {
            w.serialize(AcceptanceRecord { group: k + 1, j: j + 1, rate })?;
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
    for (t, &score) in summary.trace.iter().enumerate() {
        w.serialize(TraceRecord { iteration: t + 1, score })?;
    }
    w.flush()?;
    write_json(&dir.join("run.json"), manifest)
}

/// Read `selected_k.csv` for `k = 1..=groups` and, when every group has one,
/// the matching `inclusion_k.csv`. Edge lists from other tools work as long as
/// they carry `j,l` columns.
pub fn read_fitted(dir: &Path, p: usize, groups: usize) -> Result<(SupportGraph, Option<Vec<DMatrix<f64>>>)> {
    let mut graph = SupportGraph::empty(p, groups);
    for k in 0..groups {
        let path = dir.join(selected_file(k));
        let mut r = csv::Reader::from_path(&path)?;
        let headers = r.headers()?.clone();
        let column = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::InvalidData(format!("{}: missing column {name}", path.display())))
        };
        let (cj, cl) = (column("j")?, column("l")?);
        for record in r.records() {
            let record = record?;
            let parse = |c: usize| -> Result<usize> {
                record
                    .get(c)
                    .and_then(|f| f.trim().parse().ok())
                    .ok_or_else(|| Error::Parse(format!("{}: bad index in {:?}", path.display(), record)))
            };
            let (j, l) = one_based(&path, parse(cj)?, Some(parse(cl)?), p)?;
            graph.set_edge(k, j, l.unwrap_or_default(), true);
        }
    }
    let paths: Vec<PathBuf> = (0..groups).map(|k| dir.join(inclusion_file(k))).collect();
    if !paths.iter().all(|p| p.exists()) {
        return Ok((graph, None));
    }
    let inclusion = paths
        .iter()
        .map(|path| {
            let m = read_matrix_csv(path)?;
            if m.nrows() != p || m.ncols() != p {
                return Err(Error::ShapeMismatch(format!(
                    "{}: expected {p} x {p}, found {} x {}",
                    path.display(),
                    m.nrows(),
                    m.ncols()
                )));
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((graph, Some(inclusion)))
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocRecord {
    pub subset: String,
    pub fpr: f64,
    pub tpr: f64,
}

pub fn write_roc(path: &Path, rows: &[RocRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
