use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::schema::Schema;
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" | "valid" | "validation" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub node_type: String,
    pub matrix: Matrix<f64>,
}

/// Class ids and split membership for the target nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTable {
    pub num_classes: usize,
    pub labels: Vec<Option<usize>>,
    pub splits: Vec<Option<Split>>,
}

impl LabelTable {
    pub fn new(
        num_classes: usize,
        labels: Vec<Option<usize>>,
        splits: Vec<Option<Split>>,
    ) -> Result<Self> {
        if labels.len() != splits.len() {
            return Err(Error::Shape(format!(
                "{} labels but {} split entries",
                labels.len(),
                splits.len()
            )));
        }
        for (node, (l, s)) in labels.iter().zip(&splits).enumerate() {
            if let Some(class) = *l {
                if class >= num_classes {
                    return Err(Error::ClassOutOfRange {
                        node,
                        class,
                        num_classes,
                    });
                }
            } else if matches!(s, Some(Split::Train | Split::Val)) {
                return Err(Error::Shape(format!(
                    "node {node} is in the {} split but has no label",
                    s.unwrap().as_str()
                )));
            }
        }
        Ok(Self {
            num_classes,
            labels,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Node ids in `split`, ascending.
    pub fn rows(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == Some(split))
            .map(|(i, _)| i)
            .collect()
    }

    /// One-hot rows for train nodes, zero rows elsewhere.
    pub fn train_one_hot(&self) -> Matrix<f64> {
        let mut y = Matrix::zeros(self.len(), self.num_classes);
        for i in self.rows(Split::Train) {
            if let Some(c) = self.labels[i] {
                y.set(i, c, 1.0);
            }
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    schema: Schema,
    adjacency: BTreeMap<String, SparseMatrix>,
    features: BTreeMap<String, FeatureTable>,
    labels: LabelTable,
}

impl HeteroGraph {
    /// Validates shapes against the schema. Self-loops in same-type relations are dropped.
    pub fn new(
        schema: Schema,
        mut adjacency: BTreeMap<String, SparseMatrix>,
        features: BTreeMap<String, FeatureTable>,
        labels: LabelTable,
    ) -> Result<Self> {
        schema.validate()?;
        let count = |t: &str| schema.node_type(t).map(|n| n.count).unwrap_or(0);
        for r in &schema.relations {
            let adj = adjacency
                .get_mut(&r.name)
                .ok_or_else(|| Error::Shape(format!("missing adjacency for relation {}", r.name)))?;
            if adj.n_rows() != count(&r.src) || adj.n_cols() != count(&r.dst) {
                return Err(Error::Shape(format!(
                    "relation {} is {}x{}, schema expects {}x{}",
                    r.name,
                    adj.n_rows(),
                    adj.n_cols(),
                    count(&r.src),
                    count(&r.dst)
                )));
            }
            if r.src == r.dst {
                let stripped = adj.rm_diag()?;
                if stripped.nnz() != adj.nnz() {
                    warn!(
                        "relation {}: dropped {} self-loops",
                        r.name,
                        adj.nnz() - stripped.nnz()
                    );
                    *adj = stripped;
                }
            }
        }
        if adjacency.len() != schema.relations.len() {
            return Err(Error::Shape("adjacency for undeclared relation".into()));
        }
        for t in &schema.node_types {
            let f = features
                .get(&t.name)
                .ok_or_else(|| Error::Shape(format!("missing features for type {}", t.name)))?;
            if f.matrix.shape() != (t.count, t.feature_dim) {
                return Err(Error::Shape(format!(
                    "features for {} are {:?}, schema expects ({}, {})",
                    t.name,
                    f.matrix.shape(),
                    t.count,
                    t.feature_dim
                )));
            }
            if !f.matrix.is_finite() {
                return Err(Error::Shape(format!("non-finite feature for type {}", t.name)));
            }
        }
        if labels.len() != schema.num_targets() || labels.num_classes != schema.num_classes {
            return Err(Error::Shape(format!(
                "label table covers {} nodes / {} classes, schema has {} targets / {} classes",
                labels.len(),
                labels.num_classes,
                schema.num_targets(),
                schema.num_classes
            )));
        }
        Ok(Self {
            schema,
            adjacency,
            features,
            labels,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn labels(&self) -> &LabelTable {
        &self.labels
    }

    pub fn relation(&self, name: &str) -> Option<&SparseMatrix> {
        self.adjacency.get(name)
    }

    pub fn features(&self, node_type: &str) -> Option<&Matrix<f64>> {
        self.features.get(node_type).map(|f| &f.matrix)
    }

    pub fn num_targets(&self) -> usize {
        self.schema.num_targets()
    }

    pub fn total_edges(&self) -> usize {
        self.adjacency.values().map(SparseMatrix::nnz).sum()
    }

    /// Binary adjacency for stepping from type `from` to type `to`: the union
    /// of every relation `from→to` and the transpose of every relation `to→from`.
    pub fn type_adjacency(&self, from: &str, to: &str) -> Result<SparseMatrix> {
        let steps = self.schema.relations_between(from, to);
        if steps.is_empty() {
            return Err(Error::Metapath {
                path: format!("{from}->{to}"),
                msg: "no relation connects these types".into(),
            });
        }
        let mut acc: Option<SparseMatrix> = None;
        for (rel, transposed) in steps {
            let m = &self.adjacency[&rel.name];
            let m = if transposed { m.transpose() } else { m.clone() };
            acc = Some(match acc {
                None => m,
                Some(a) => a.union_pattern(&m)?,
            });
        }
        Ok(acc.expect("at least one step"))
    }

    pub fn normalized_adjacency(&self, from: &str, to: &str) -> Result<SparseMatrix> {
        Ok(self.type_adjacency(from, to)?.row_normalize())
    }

    /// Hex SHA-256 over schema, adjacency, features, labels and splits.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.schema).expect("schema serializes"));
        for r in &self.schema.relations {
            let m = &self.adjacency[&r.name];
            h.update(r.name.as_bytes());
            for &o in m.row_offsets() {
                h.update((o as u64).to_le_bytes());
            }
            for &c in m.col_indices() {
                h.update((c as u64).to_le_bytes());
            }
        }
        for t in &self.schema.node_types {
            h.update(t.name.as_bytes());
            for v in self.features[&t.name].matrix.as_slice() {
                h.update(v.to_le_bytes());
            }
        }
        for (l, s) in self.labels.labels.iter().zip(&self.labels.splits) {
            h.update(l.map_or(u64::MAX, |c| c as u64).to_le_bytes());
            h.update([s.map_or(0u8, |s| s as u8 + 1)]);
        }
        h.finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
