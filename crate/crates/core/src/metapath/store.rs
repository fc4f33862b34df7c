//! On-disk layout of precomputed semantic matrices.
//!
//! `manifest.json` lists every matrix with its shape and the content hash of
//! the graph it came from. Each matrix is a `.smx` file: magic `SMX1`, u64
//! rows, u64 cols, then f64 values row-major, all little-endian. The target
//! labels and splits are copied alongside so training never needs the
//! original dataset directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::path::{Metapath, MetapathSet, PathKind};
use super::propagate::SemanticMatrix;
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::io::{create_dir, read_label_table, read_to_string, write_bytes, write_label_table};
use crate::graph::{HeteroGraph, LabelTable};

pub const SMX_MAGIC: &[u8; 4] = b"SMX1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub kind: PathKind,
    pub types: Vec<String>,
    pub rows: usize,
    pub cols: usize,
    pub file: String,
}

impl ManifestEntry {
    pub fn metapath(&self) -> Metapath {
        Metapath::unchecked(self.types.clone(), self.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub graph_hash: String,
    pub target_type: String,
    pub num_targets: usize,
    pub num_classes: usize,
    pub max_hop_features: usize,
    pub max_hop_labels: usize,
    pub metapaths: Vec<ManifestEntry>,
}

/// Everything the training loop consumes.
#[derive(Debug, Clone)]
pub struct Precomputed {
    pub manifest: Manifest,
    pub matrices: Vec<SemanticMatrix>,
    pub labels: LabelTable,
}

pub fn write_smx(path: &Path, m: &Matrix<f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(20 + m.as_slice().len() * 8);
    bytes.extend_from_slice(SMX_MAGIC);
    bytes.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(path, &bytes)
}

pub fn read_smx(path: &Path) -> Result<Matrix<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 20 || &bytes[..4] != SMX_MAGIC {
        return Err(Error::format(path, "missing SMX1 header"));
    }
    let rows = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[20..];
    if body.len() != rows * cols * 8 {
        return Err(Error::format(
            path,
            format!("body has {} bytes, header implies {}", body.len(), rows * cols * 8),
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
}

/// Writes the manifest, matrices and label files into `dir`.
///
/// Refuses to touch a directory whose existing manifest came from a different
/// graph. Matrix files listed by a previous manifest of the same graph but not
/// by the new one are removed.
pub fn write_precomputed(
    dir: &Path,
    graph: &HeteroGraph,
    set: &MetapathSet,
    max_hops: (usize, usize),
    matrices: &[SemanticMatrix],
) -> Result<Manifest> {
    let hash = graph.content_hash();
    let previous = if dir.join(MANIFEST_FILE).exists() {
        let old = read_manifest(dir)?;
        if old.graph_hash != hash {
            return Err(Error::HashMismatch {
                expected: old.graph_hash,
                found: hash,
            });
        }
        Some(old)
    } else {
        None
    };
    create_dir(dir)?;
    debug_assert_eq!(set.len(), matrices.len());

    let mut entries = Vec::with_capacity(matrices.len());
    for sm in matrices {
        let file = sm.metapath.file_name();
        write_smx(&dir.join(&file), &sm.matrix)?;
        entries.push(ManifestEntry {
            name: sm.metapath.canonical(),
            kind: sm.metapath.kind(),
            types: sm.metapath.types().to_vec(),
            rows: sm.matrix.rows(),
            cols: sm.matrix.cols(),
            file,
        });
    }
    if let Some(old) = previous {
        for e in old.metapaths {
            if !entries.iter().any(|n| n.file == e.file) {
                let stale: PathBuf = dir.join(&e.file);
                fs::remove_file(&stale).map_err(|err| Error::io(&stale, err))?;
            }
        }
    }
    write_label_table(graph.labels(), &dir.join("labels.tsv"), &dir.join("splits.tsv"))?;
    let schema = graph.schema();
    let manifest = Manifest {
        graph_hash: hash,
        target_type: schema.target_type.clone(),
        num_targets: graph.num_targets(),
        num_classes: schema.num_classes,
        max_hop_features: max_hops.0,
        max_hop_labels: max_hops.1,
        metapaths: entries,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_bytes(&dir.join(MANIFEST_FILE), json.as_bytes())?;
    Ok(manifest)
}

/// Loads the manifest, every listed matrix, and the label table.
pub fn load_precomputed(dir: &Path) -> Result<Precomputed> {
    let manifest = read_manifest(dir)?;
    let mut matrices = Vec::with_capacity(manifest.metapaths.len());
    for e in &manifest.metapaths {
        let path = dir.join(&e.file);
        let m = read_smx(&path)?;
        if m.shape() != (e.rows, e.cols) || e.rows != manifest.num_targets {
            return Err(Error::format(
                &path,
                format!("shape {:?} disagrees with manifest ({}, {})", m.shape(), e.rows, e.cols),
            ));
        }
        matrices.push(SemanticMatrix {
            metapath: e.metapath(),
            matrix: m,
        });
    }
    let labels = read_label_table(
        &dir.join("labels.tsv"),
        &dir.join("splits.tsv"),
        manifest.num_targets,
        manifest.num_classes,
    )?;
    Ok(Precomputed {
        manifest,
        matrices,
        labels,
    })
}
