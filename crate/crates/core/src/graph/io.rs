//! Dataset directory format.
//!
//! ```text
//! schema.json
//! edges/<relation>.tsv      src<TAB>dst, 0-based per-type ids
//! features/<type>.tsv       one row per node
//! features/<type>.bin       u64 rows, u64 cols, f32 row-major (all LE)
//! labels.tsv                node_id<TAB>class_id
//! splits.tsv                node_id<TAB>train|val|test
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::hetero::{FeatureTable, HeteroGraph, LabelTable, Split};
use super::schema::Schema;
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Seed base for node types that ship without a feature file.
const FEATURELESS_SEED: u64 = 0x5eed_f00d;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Tsv,
    Bin,
}

pub fn load_graph(dir: &Path) -> Result<HeteroGraph> {
    let schema_path = dir.join("schema.json");
    let text = read_to_string(&schema_path)?;
    let schema: Schema = serde_json::from_str(&text)
        .map_err(|e| Error::format(&schema_path, e.to_string()))?;
    schema.validate()?;

    let count = |t: &str| schema.node_type(t).map(|n| n.count).unwrap_or(0);
    let mut adjacency = BTreeMap::new();
    for r in &schema.relations {
        let path = dir.join("edges").join(format!("{}.tsv", r.name));
        let edges = read_pairs(&path, |a, b| Ok((a.parse()?, b.parse()?)))?;
        let (m, dropped) = SparseMatrix::from_edges(count(&r.src), count(&r.dst), &edges)
            .map_err(|e| Error::format(&path, e.to_string()))?;
        if dropped > 0 {
            warn!("{}: dropped {dropped} duplicate edges", path.display());
        }
        adjacency.insert(r.name.clone(), m);
    }

    let mut features = BTreeMap::new();
    for (idx, t) in schema.node_types.iter().enumerate() {
        let tsv = dir.join("features").join(format!("{}.tsv", t.name));
        let bin = dir.join("features").join(format!("{}.bin", t.name));
        let matrix = if tsv.exists() {
            read_feature_tsv(&tsv)?
        } else if bin.exists() {
            read_feature_bin(&bin)?
        } else {
            random_features(t.count, t.feature_dim, FEATURELESS_SEED + idx as u64)
        };
        if matrix.shape() != (t.count, t.feature_dim) {
            return Err(Error::Shape(format!(
                "features for {} are {:?}, schema expects ({}, {})",
                t.name,
                matrix.shape(),
                t.count,
                t.feature_dim
            )));
        }
        features.insert(
            t.name.clone(),
            FeatureTable {
                node_type: t.name.clone(),
                matrix,
            },
        );
    }

    let labels = read_label_table(
        &dir.join("labels.tsv"),
        &dir.join("splits.tsv"),
        schema.num_targets(),
        schema.num_classes,
    )?;
    HeteroGraph::new(schema, adjacency, features, labels)
}

pub fn write_graph(graph: &HeteroGraph, dir: &Path, format: FeatureFormat) -> Result<()> {
    let schema = graph.schema();
    create_dir(&dir.join("edges"))?;
    create_dir(&dir.join("features"))?;
    let json = serde_json::to_string_pretty(schema).expect("schema serializes");
    write_bytes(&dir.join("schema.json"), json.as_bytes())?;
    for r in &schema.relations {
        let m = graph.relation(&r.name).expect("validated relation");
        let path = dir.join("edges").join(format!("{}.tsv", r.name));
        write_lines(&path, |w| {
            for i in 0..m.n_rows() {
                for &c in m.row(i).0 {
                    writeln!(w, "{i}\t{c}")?;
                }
            }
            Ok(())
        })?;
    }
    for t in &schema.node_types {
        let m = graph.features(&t.name).expect("validated type");
        match format {
            FeatureFormat::Tsv => {
                write_feature_tsv(&dir.join("features").join(format!("{}.tsv", t.name)), m)?
            }
            FeatureFormat::Bin => {
                write_feature_bin(&dir.join("features").join(format!("{}.bin", t.name)), m)?
            }
        }
    }
    write_label_table(graph.labels(), &dir.join("labels.tsv"), &dir.join("splits.tsv"))
}

pub fn read_label_table(
    labels_path: &Path,
    splits_path: &Path,
    n: usize,
    num_classes: usize,
) -> Result<LabelTable> {
    let mut labels = vec![None; n];
    for (line, (node, class)) in read_pairs(labels_path, |a, b| {
        Ok((a.parse::<usize>()?, b.parse::<usize>()?))
    })?
    .into_iter()
    .enumerate()
    {
        if node >= n {
            return Err(Error::Parse {
                path: labels_path.into(),
                line: line + 1,
                msg: format!("node id {node} out of range ({n} target nodes)"),
            });
        }
        if class >= num_classes {
            return Err(Error::ClassOutOfRange {
                node,
                class,
                num_classes,
            });
        }
        labels[node] = Some(class);
    }
    let mut splits = vec![None; n];
    for (line, (node, split)) in read_pairs(splits_path, |a, b| {
        let split = Split::parse(b).ok_or(PairError(format!("unknown split {b:?}")))?;
        Ok((a.parse::<usize>()?, split))
    })?
    .into_iter()
    .enumerate()
    {
        if node >= n {
            return Err(Error::Parse {
                path: splits_path.into(),
                line: line + 1,
                msg: format!("node id {node} out of range ({n} target nodes)"),
            });
        }
        splits[node] = Some(split);
    }
    LabelTable::new(num_classes, labels, splits)
}

pub fn write_label_table(labels: &LabelTable, labels_path: &Path, splits_path: &Path) -> Result<()> {
    write_lines(labels_path, |w| {
        for (i, l) in labels.labels.iter().enumerate() {
            if let Some(c) = l {
                writeln!(w, "{i}\t{c}")?;
            }
        }
        Ok(())
    })?;
    write_lines(splits_path, |w| {
        for (i, s) in labels.splits.iter().enumerate() {
            if let Some(s) = s {
                writeln!(w, "{i}\t{}", s.as_str())?;
            }
        }
        Ok(())
    })
}

fn random_features(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal) as f32 as f64)
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized buffer")
}

fn read_feature_tsv(path: &Path) -> Result<Matrix<f64>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (ln, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for tok in line.split(['\t', ' ', ',']).filter(|t| !t.is_empty()) {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                path: path.into(),
                line: ln + 1,
                msg: format!("bad feature value {tok:?}"),
            })?;
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: ln + 1,
                    msg: format!("row has {width} values, expected {c}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols.unwrap_or(0), data)
}

fn write_feature_tsv(path: &Path, m: &Matrix<f64>) -> Result<()> {
    write_lines(path, |w| {
        for i in 0..m.rows() {
            let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join("\t"))?;
        }
        Ok(())
    })
}

fn read_feature_bin(path: &Path) -> Result<Matrix<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 {
        return Err(Error::format(path, "truncated header"));
    }
    let rows = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != rows * cols * 4 {
        return Err(Error::format(
            path,
            format!("body has {} bytes, header implies {}", body.len(), rows * cols * 4),
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Matrix::from_vec(rows, cols, data)
}

fn write_feature_bin(path: &Path, m: &Matrix<f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + m.as_slice().len() * 4);
    bytes.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for &v in m.as_slice() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    write_bytes(path, &bytes)
}

struct PairError(String);

impl From<std::num::ParseIntError> for PairError {
    fn from(e: std::num::ParseIntError) -> Self {
        PairError(e.to_string())
    }
}

/// Reads a two-column whitespace/tab separated file, skipping blank and `#` lines.
fn read_pairs<T>(
    path: &Path,
    parse: impl Fn(&str, &str) -> std::result::Result<T, PairError>,
) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (ln, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(a), Some(b)) = (it.next(), it.next()) else {
            return Err(Error::Parse {
                path: path.into(),
                line: ln + 1,
                msg: "expected two columns".into(),
            });
        };
        out.push(parse(a, b).map_err(|PairError(msg)| Error::Parse {
            path: path.into(),
            line: ln + 1,
            msg,
        })?);
    }
    Ok(out)
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_lines(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
