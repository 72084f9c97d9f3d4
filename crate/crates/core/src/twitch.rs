//! Converter for the MUSAE Twitch gamer networks.
//!
//! Expected raw layout, per region code `R` (either in `raw/R/` or directly
//! in `raw/`):
//!
//! ```text
//! musae_R_edges.csv     header "from,to", node ids
//! musae_R_features.json {"node id": [feature index, ...], ...}
//! musae_R_target.csv    header includes "mature" and "new_id"
//! ```
//!
//! Features become multi-hot vectors over a feature space shared by all
//! regions; the label is the `mature` flag.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;

use crate::bundle_io::{BundleMeta, FeatureDtype, FeatureFormat};
use crate::error::{Error, Result};
use crate::graph::GraphBundle;

/// `(region code, bundle name, nodes, edges)` as published for the release.
pub const REFERENCE_STATS: [(&str, &str, usize, usize); 6] = [
    ("DE", "twitch-DE", 9_498, 153_138),
    ("ENGB", "twitch-EN", 7_126, 35_324),
    ("ES", "twitch-ES", 4_648, 59_382),
    ("FR", "twitch-FR", 6_549, 112_666),
    ("PTBR", "twitch-PT", 1_912, 31_299),
    ("RU", "twitch-RU", 4_385, 37_304),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionStats {
    pub name: String,
    pub nodes: usize,
    /// Rows in the raw edge file.
    pub raw_edges: usize,
    /// Undirected edges after deduplication and self-loop removal.
    pub undirected_edges: usize,
    pub expected_nodes: usize,
    pub expected_edges: usize,
}

impl RegionStats {
    pub fn nodes_match(&self) -> bool {
        self.nodes == self.expected_nodes
    }
}

#[derive(Debug, Clone)]
pub struct ConvertedRegion {
    pub bundle: GraphBundle,
    pub meta: BundleMeta,
    pub stats: RegionStats,
}

struct RawRegion {
    name: String,
    expected: (usize, usize),
    edges: Vec<(usize, usize)>,
    features: BTreeMap<usize, Vec<usize>>,
    labels: Vec<(usize, usize)>,
}

fn region_file(raw_dir: &Path, code: &str, suffix: &str) -> Option<PathBuf> {
    let name = format!("musae_{code}_{suffix}");
    [raw_dir.join(code).join(&name), raw_dir.join(&name)]
        .into_iter()
        .find(|p| p.exists())
}

/// Regions present under `raw_dir`.
pub fn available_regions(raw_dir: &Path) -> Vec<&'static str> {
    REFERENCE_STATS
        .iter()
        .map(|r| r.0)
        .filter(|code| region_file(raw_dir, code, "edges.csv").is_some())
        .collect()
}

/// Converts every region found under `raw_dir`. `feature_dim` defaults to
/// one past the largest feature index seen in any region.
pub fn convert_twitch(raw_dir: &Path, feature_dim: Option<usize>) -> Result<Vec<ConvertedRegion>> {
    let codes = available_regions(raw_dir);
    if codes.is_empty() {
        return Err(Error::MissingFile(raw_dir.join("<REGION>/musae_<REGION>_edges.csv")));
    }
    let raw: Vec<RawRegion> = codes
        .iter()
        .map(|code| read_region(raw_dir, code))
        .collect::<Result<_>>()?;

    let observed = raw
        .iter()
        .flat_map(|r| r.features.values().flatten())
        .max()
        .map_or(0, |m| m + 1);
    let dim = feature_dim.unwrap_or(observed);

    raw.into_iter().map(|r| build_region(r, dim)).collect()
}

fn missing(path: Option<PathBuf>, raw_dir: &Path, code: &str, suffix: &str) -> Result<PathBuf> {
    path.ok_or_else(|| Error::MissingFile(raw_dir.join(code).join(format!("musae_{code}_{suffix}"))))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read_region(raw_dir: &Path, code: &str) -> Result<RawRegion> {
    let &(_, name, exp_nodes, exp_edges) = REFERENCE_STATS
        .iter()
        .find(|r| r.0 == code)
        .expect("known region");

    let edges_path = missing(region_file(raw_dir, code, "edges.csv"), raw_dir, code, "edges.csv")?;
    let mut edges = Vec::new();
    let mut rdr = csv::Reader::from_path(&edges_path)?;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != 2 {
            return Err(parse_err(&edges_path, line, "expected two columns"));
        }
        let a = rec[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(&edges_path, line, format!("bad node id {:?}", &rec[0])))?;
        let b = rec[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(&edges_path, line, format!("bad node id {:?}", &rec[1])))?;
        edges.push((a, b));
    }

    let feat_path = missing(region_file(raw_dir, code, "features.json"), raw_dir, code, "features.json")?;
    let raw_features: BTreeMap<String, Vec<usize>> = serde_json::from_str(&fs::read_to_string(&feat_path)?)?;
    let mut features = BTreeMap::new();
    for (k, v) in raw_features {
        let id: usize = k
            .parse()
            .map_err(|_| parse_err(&feat_path, 1, format!("bad node key {k:?}")))?;
        features.insert(id, v);
    }

    let target_path = missing(region_file(raw_dir, code, "target.csv"), raw_dir, code, "target.csv")?;
    let mut rdr = csv::Reader::from_path(&target_path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_err(&target_path, 1, format!("missing column {name}")))
    };
    let (id_col, label_col) = (col("new_id")?, col("mature")?);
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let id: usize = rec
            .get(id_col)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| parse_err(&target_path, line, "bad new_id"))?;
        let label = match rec.get(label_col).map(|s| s.trim().to_ascii_lowercase()) {
            Some(s) if s == "true" || s == "1" => 1,
            Some(s) if s == "false" || s == "0" => 0,
            other => return Err(parse_err(&target_path, line, format!("bad mature flag {other:?}"))),
        };
        labels.push((id, label));
    }

    Ok(RawRegion {
        name: name.to_string(),
        expected: (exp_nodes, exp_edges),
        edges,
        features,
        labels,
    })
}

fn build_region(raw: RawRegion, dim: usize) -> Result<ConvertedRegion> {
    let n = raw
        .labels
        .iter()
        .map(|&(id, _)| id + 1)
        .chain(raw.edges.iter().map(|&(a, b)| a.max(b) + 1))
        .chain(raw.features.keys().map(|&k| k + 1))
        .max()
        .unwrap_or(0);

    let mut x = Array2::zeros((n, dim));
    for (&node, idx) in &raw.features {
        for &f in idx {
            if f >= dim {
                return Err(Error::Invalid(format!(
                    "{}: feature index {f} of node {node} outside feature dim {dim}",
                    raw.name
                )));
            }
            x[[node, f]] = 1.0;
        }
    }
    let mut labels = vec![None; n];
    for &(id, y) in &raw.labels {
        labels[id] = Some(y);
    }

    let raw_edges = raw.edges.len();
    let bundle = GraphBundle::new(raw.name.clone(), n, raw.edges, x)?.with_labels(labels, 2)?;
    let stats = RegionStats {
        name: raw.name.clone(),
        nodes: n,
        raw_edges,
        undirected_edges: bundle.edges().len(),
        expected_nodes: raw.expected.0,
        expected_edges: raw.expected.1,
    };
    let mut meta = BundleMeta::for_bundle(&bundle);
    meta.feature_dtype = FeatureDtype::F32;
    meta.feature_format = FeatureFormat::Bin;
    meta.extra.insert("raw_edge_count".into(), raw_edges.into());
    meta.extra
        .insert("undirected_edge_count".into(), stats.undirected_edges.into());
    meta.extra.insert(
        "edge_convention".into(),
        "undirected, deduplicated, self-loops dropped".into(),
    );
    Ok(ConvertedRegion {
        bundle,
        meta,
        stats,
    })
}
