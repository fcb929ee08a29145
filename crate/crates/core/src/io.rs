//! File formats: dataset CSVs, two-group manifests, matrices, path exports.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covariance::{Dataset, DatasetCollection};
use crate::error::{Error, Result};
use crate::path::{Event, SolutionPath, SparseDelta, Termination};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Csv {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Write through a sibling temp file and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Invalid(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Samples as rows, one header line of variable names.
pub fn read_dataset_csv(path: &Path, source_id: &str) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let names: Vec<String> = rd
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let d = names.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != d {
            return Err(csv_err(path, format!("row {} has {} fields, expected {d}", r + 1, rec.len())));
        }
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| csv_err(path, format!("row {}: '{field}' is not a number", r + 1)))?;
            values.push(v);
        }
        rows += 1;
    }
    let samples = DMatrix::from_row_slice(rows, d, &values);
    Dataset::with_names(samples, source_id, names)
}

fn format_f64(x: f64) -> String {
    // shortest representation that round-trips
    let s = format!("{x}");
    if s.contains('e') || s.contains('.') || !x.is_finite() {
        s
    } else {
        format!("{s}.0")
    }
}

pub fn dataset_csv_bytes(ds: &Dataset) -> Result<Vec<u8>> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(ds.variable_names())
        .map_err(|e| csv_err(Path::new(ds.source_id()), e))?;
    let x = ds.samples();
    for r in 0..x.nrows() {
        wr.write_record((0..x.ncols()).map(|c| format_f64(x[(r, c)])))
            .map_err(|e| csv_err(Path::new(ds.source_id()), e))?;
    }
    wr.into_inner()
        .map_err(|e| Error::Invalid(format!("csv buffer: {e}")))
}

pub fn write_dataset_csv(ds: &Dataset, path: &Path) -> Result<()> {
    write_atomic(path, &dataset_csv_bytes(ds)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub source_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestGroup {
    pub label: String,
    pub datasets: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub groups: Vec<ManifestGroup>,
}

/// Two groups read from a manifest, with their labels.
#[derive(Clone, Debug)]
pub struct LoadedGroups {
    pub labels: [String; 2],
    pub group_a: DatasetCollection,
    pub group_b: DatasetCollection,
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.groups.len() != 2 {
        return Err(Error::Invalid(format!(
            "manifest must list exactly 2 groups, found {}",
            m.groups.len()
        )));
    }
    for g in &m.groups {
        if g.datasets.is_empty() {
            return Err(Error::Invalid(format!("group '{}' lists no datasets", g.label)));
        }
    }
    Ok(m)
}

pub fn load_groups(manifest_path: &Path) -> Result<LoadedGroups> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let load = |g: &ManifestGroup| -> Result<DatasetCollection> {
        let sets = g
            .datasets
            .iter()
            .map(|e| read_dataset_csv(&base.join(&e.path), &e.source_id))
            .collect::<Result<Vec<_>>>()?;
        DatasetCollection::new(sets)
    };
    let group_a = load(&manifest.groups[0])?;
    let group_b = load(&manifest.groups[1])?;
    if group_a.dim() != group_b.dim() {
        return Err(Error::DimensionMismatch {
            expected: group_a.dim(),
            found: group_b.dim(),
        });
    }
    Ok(LoadedGroups {
        labels: [manifest.groups[0].label.clone(), manifest.groups[1].label.clone()],
        group_a,
        group_b,
    })
}

pub fn matrix_csv_bytes(m: &DMatrix<f64>, names: &[String]) -> Result<Vec<u8>> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| csv_err(Path::new("<matrix>"), e);
    wr.write_record(std::iter::once("").chain(names.iter().map(String::as_str)))
        .map_err(err)?;
    for r in 0..m.nrows() {
        wr.write_record(
            std::iter::once(names[r].clone()).chain((0..m.ncols()).map(|c| format_f64(m[(r, c)]))),
        )
        .map_err(err)?;
    }
    wr.into_inner()
        .map_err(|e| Error::Invalid(format!("csv buffer: {e}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryExport {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnotExport {
    pub lambda: f64,
    pub event: Event,
    pub entries: Vec<EntryExport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathExport {
    pub d: usize,
    pub knots: Vec<KnotExport>,
    pub termination_reason: Termination,
}

fn entries_of(delta: &SparseDelta<f64>) -> Vec<EntryExport> {
    delta
        .entries()
        .iter()
        .map(|&(e, value)| {
            let (i, j) = e.pair(delta.dim());
            EntryExport { i, j, value }
        })
        .collect()
}

impl PathExport {
    pub fn from_path(path: &SolutionPath<f64>) -> Self {
        Self {
            d: path.dim(),
            knots: path
                .knots()
                .iter()
                .map(|k| KnotExport {
                    lambda: k.lambda,
                    event: k.event,
                    entries: entries_of(&k.delta),
                })
                .collect(),
            termination_reason: path.termination(),
        }
    }
}

pub fn path_json_bytes(path: &SolutionPath<f64>) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(&PathExport::from_path(path))?;
    v.push(b'\n');
    Ok(v)
}

/// `var_i  var_j  delta_value` for the upper-triangle nonzeros.
pub fn edge_tsv_bytes(delta: &SparseDelta<f64>, names: &[String]) -> Vec<u8> {
    let mut out = String::from("var_i\tvar_j\tdelta_value\n");
    let mut rows: Vec<(usize, usize, f64)> = delta
        .entries()
        .iter()
        .map(|&(e, v)| {
            let (i, j) = e.pair(delta.dim());
            (i, j, v)
        })
        .filter(|&(i, j, _)| i < j)
        .collect();
    rows.sort_by_key(|&(i, j, _)| (i, j));
    for (i, j, v) in rows {
        out.push_str(&format!("{}\t{}\t{}\n", names[i], names[j], format_f64(v)));
    }
    out.into_bytes()
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    write_atomic(path, &v)
}
