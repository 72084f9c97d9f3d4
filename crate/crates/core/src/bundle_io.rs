//! On-disk graph bundle directories.
//!
//! Layout:
//!
//! ```text
//! meta.json      {"name", "num_nodes", "feature_dim", "num_classes", "feature_dtype", ...}
//! edges.tsv      "src\tdst" per line
//! features.bin   row-major little-endian reals, dtype from meta ("f64" or "f32")
//! features.tsv   alternative to features.bin, one row per line, tab separated
//! labels.tsv     optional, one integer per node, -1 = unlabeled
//! split.json     optional, {"train": [...], "val": [...], "test": [...]}
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphBundle, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FeatureDtype {
    #[default]
    F64,
    F32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFormat {
    #[default]
    Bin,
    Tsv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub name: String,
    pub num_nodes: usize,
    pub feature_dim: usize,
    #[serde(default)]
    pub num_classes: usize,
    #[serde(default)]
    pub feature_dtype: FeatureDtype,
    #[serde(default)]
    pub feature_format: FeatureFormat,
    /// Free-form provenance (converter statistics and similar).
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl BundleMeta {
    pub fn for_bundle(bundle: &GraphBundle) -> Self {
        Self {
            name: bundle.name.clone(),
            num_nodes: bundle.num_nodes(),
            feature_dim: bundle.feature_dim(),
            num_classes: bundle.num_classes,
            feature_dtype: FeatureDtype::F64,
            feature_format: FeatureFormat::Bin,
            extra: BTreeMap::new(),
        }
    }
}

pub fn save_bundle(bundle: &GraphBundle, dir: &Path) -> Result<()> {
    save_bundle_with_meta(bundle, &BundleMeta::for_bundle(bundle), dir)
}

pub fn save_bundle_with_meta(bundle: &GraphBundle, meta: &BundleMeta, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut meta = meta.clone();
    meta.num_nodes = bundle.num_nodes();
    meta.feature_dim = bundle.feature_dim();
    meta.num_classes = bundle.num_classes;
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;

    let mut w = BufWriter::new(fs::File::create(dir.join("edges.tsv"))?);
    for &(a, b) in bundle.edges() {
        writeln!(w, "{a}\t{b}")?;
    }
    w.flush()?;

    match meta.feature_format {
        FeatureFormat::Bin => {
            let mut bytes = Vec::with_capacity(bundle.features.len() * 8);
            for &v in bundle.features.iter() {
                match meta.feature_dtype {
                    FeatureDtype::F64 => bytes.extend_from_slice(&v.to_le_bytes()),
                    FeatureDtype::F32 => bytes.extend_from_slice(&(v as f32).to_le_bytes()),
                }
            }
            fs::write(dir.join("features.bin"), bytes)?;
        }
        FeatureFormat::Tsv => {
            let mut w = BufWriter::new(fs::File::create(dir.join("features.tsv"))?);
            for row in bundle.features.rows() {
                let line: Vec<String> = row
                    .iter()
                    .map(|&v| match meta.feature_dtype {
                        FeatureDtype::F64 => format!("{v:?}"),
                        FeatureDtype::F32 => format!("{:?}", v as f32),
                    })
                    .collect();
                writeln!(w, "{}", line.join("\t"))?;
            }
            w.flush()?;
        }
    }

    if let Some(labels) = &bundle.labels {
        let mut w = BufWriter::new(fs::File::create(dir.join("labels.tsv"))?);
        for l in labels {
            match l {
                Some(v) => writeln!(w, "{v}")?,
                None => writeln!(w, "-1")?,
            }
        }
        w.flush()?;
    }
    if let Some(split) = &bundle.split {
        fs::write(dir.join("split.json"), serde_json::to_string(split)? + "\n")?;
    }
    Ok(())
}

pub fn load_meta(dir: &Path) -> Result<BundleMeta> {
    let path = dir.join("meta.json");
    let text = fs::read_to_string(&path).map_err(|e| missing_or_io(path.clone(), e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_bundle(dir: &Path) -> Result<GraphBundle> {
    let meta = load_meta(dir)?;
    let n = meta.num_nodes;
    let f = meta.feature_dim;

    let edges = read_edges(&dir.join("edges.tsv"))?;

    let bin = dir.join("features.bin");
    let tsv = dir.join("features.tsv");
    let features = if bin.exists() {
        read_features_bin(&bin, n, f, meta.feature_dtype)?
    } else if tsv.exists() {
        read_features_tsv(&tsv, n, f)?
    } else {
        return Err(Error::MissingFile(bin));
    };

    let mut bundle = GraphBundle::new(meta.name.clone(), n, edges, features)?;

    let labels_path = dir.join("labels.tsv");
    if labels_path.exists() {
        let labels = read_labels(&labels_path, n)?;
        let observed = labels.iter().flatten().max().map_or(0, |m| m + 1);
        bundle = bundle.with_labels(labels, meta.num_classes.max(observed))?;
    }
    let split_path = dir.join("split.json");
    if split_path.exists() {
        let split: Split = serde_json::from_str(&fs::read_to_string(&split_path)?)?;
        bundle = bundle.with_split(split)?;
    }
    Ok(bundle)
}

fn missing_or_io(path: PathBuf, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::MissingFile(path)
    } else {
        Error::Io(e)
    }
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let file = fs::File::open(path).map_err(|e| missing_or_io(path.to_path_buf(), e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l)))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (lineno, line) in open_lines(path)? {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(path, lineno, "expected two tab-separated integers"));
        };
        let a: usize = a
            .trim()
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("non-integer edge field {a:?}")))?;
        let b: usize = b
            .trim()
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("non-integer edge field {b:?}")))?;
        edges.push((a, b));
    }
    Ok(edges)
}

fn read_features_bin(path: &Path, n: usize, f: usize, dtype: FeatureDtype) -> Result<Array2<f64>> {
    let bytes = fs::read(path)?;
    let width = match dtype {
        FeatureDtype::F64 => 8,
        FeatureDtype::F32 => 4,
    };
    if bytes.len() != n * f * width {
        return Err(Error::Shape(format!(
            "{} holds {} bytes, meta implies {}x{}x{} = {}",
            path.display(),
            bytes.len(),
            n,
            f,
            width,
            n * f * width
        )));
    }
    let values: Vec<f64> = match dtype {
        FeatureDtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        FeatureDtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    Ok(Array2::from_shape_vec((n, f), values).expect("length checked"))
}

fn read_features_tsv(path: &Path, n: usize, f: usize) -> Result<Array2<f64>> {
    let mut values = Vec::with_capacity(n * f);
    let mut rows = 0;
    for (lineno, line) in open_lines(path)? {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for tok in line.split('\t') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad real {tok:?}")))?;
            values.push(v);
        }
        if values.len() - before != f {
            return Err(Error::Shape(format!(
                "{} line {lineno}: {} columns, meta says {f}",
                path.display(),
                values.len() - before
            )));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Shape(format!(
            "{} has {rows} rows, meta says {n}",
            path.display()
        )));
    }
    Ok(Array2::from_shape_vec((n, f), values).expect("length checked"))
}

fn read_labels(path: &Path, n: usize) -> Result<Vec<Option<usize>>> {
    let mut labels = Vec::with_capacity(n);
    for (lineno, line) in open_lines(path)? {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: i64 = line
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad label {line:?}")))?;
        labels.push(match v {
            -1 => None,
            v if v >= 0 => Some(v as usize),
            _ => return Err(parse_err(path, lineno, format!("negative label {v}"))),
        });
    }
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} has {} labels, meta says {n} nodes",
            path.display(),
            labels.len()
        )));
    }
    Ok(labels)
}
