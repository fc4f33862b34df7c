use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Schema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Feature,
    Label,
}

/// A node-type sequence anchored at the target type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Metapath {
    types: Vec<String>,
    kind: PathKind,
}

impl Metapath {
    /// Checks every consecutive pair against the schema's relations (either direction).
    pub fn new(schema: &Schema, types: Vec<String>, kind: PathKind) -> Result<Self> {
        let path = Self::unchecked(types, kind);
        path.validate(schema)?;
        Ok(path)
    }

    /// Builds a path without schema validation (used when reading stored manifests).
    pub fn unchecked(types: Vec<String>, kind: PathKind) -> Self {
        Self { types, kind }
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        let err = |msg: String| Error::Metapath {
            path: self.canonical(),
            msg,
        };
        match self.types.first() {
            Some(t) if *t == schema.target_type => {}
            _ => return Err(err("must start at the target type".into())),
        }
        for t in &self.types {
            if schema.node_type(t).is_none() {
                return Err(err(format!("undeclared node type {t}")));
            }
        }
        for w in self.types.windows(2) {
            if schema.relations_between(&w[0], &w[1]).is_empty() {
                return Err(err(format!("no relation between {} and {}", w[0], w[1])));
            }
        }
        if self.kind == PathKind::Label
            && (self.hops() < 2 || self.types.last() != Some(&schema.target_type))
        {
            return Err(err(
                "label paths must return to the target type in at least 2 hops".into(),
            ));
        }
        Ok(())
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn hops(&self) -> usize {
        self.types.len().saturating_sub(1)
    }

    /// Concatenated type initials, e.g. `APA`.
    pub fn canonical(&self) -> String {
        self.types.iter().map(|t| crate::graph::schema_initial(t)).collect()
    }

    /// Unique key across kinds: `APA` for features, `APA.label` for labels.
    pub fn key(&self) -> String {
        match self.kind {
            PathKind::Feature => self.canonical(),
            PathKind::Label => format!("{}.label", self.canonical()),
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}.smx", self.key())
    }

    fn sort_key(&self) -> (PathKind, usize, String) {
        (self.kind, self.hops(), self.canonical())
    }
}

impl PartialOrd for Metapath {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Feature paths first, then by hop count, then canonical string.
impl Ord for Metapath {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl fmt::Display for Metapath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetapathSet {
    pub feature_paths: Vec<Metapath>,
    pub label_paths: Vec<Metapath>,
}

impl MetapathSet {
    pub fn enumerate(schema: &Schema, max_hop_features: usize, max_hop_labels: usize) -> Self {
        Self {
            feature_paths: enumerate_feature_metapaths(schema, max_hop_features),
            label_paths: enumerate_label_metapaths(schema, max_hop_labels),
        }
    }

    pub fn len(&self) -> usize {
        self.feature_paths.len() + self.label_paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Metapath> {
        self.feature_paths.iter().chain(&self.label_paths)
    }
}

/// Every walk over the type graph from the target type with at most
/// `max_hop` steps, including the 0-hop path.
pub fn enumerate_feature_metapaths(schema: &Schema, max_hop: usize) -> Vec<Metapath> {
    let mut out = Vec::new();
    walk(schema, &mut vec![schema.target_type.clone()], max_hop, &mut |w| {
        out.push(Metapath::unchecked(w.to_vec(), PathKind::Feature));
    });
    out.sort();
    out
}

/// Every walk from the target type back to itself with 2..=`max_hop` steps.
pub fn enumerate_label_metapaths(schema: &Schema, max_hop: usize) -> Vec<Metapath> {
    let mut out = Vec::new();
    walk(schema, &mut vec![schema.target_type.clone()], max_hop, &mut |w| {
        if w.len() >= 3 && w.last() == Some(&schema.target_type) {
            out.push(Metapath::unchecked(w.to_vec(), PathKind::Label));
        }
    });
    out.sort();
    out
}

fn walk(schema: &Schema, prefix: &mut Vec<String>, budget: usize, visit: &mut impl FnMut(&[String])) {
    visit(prefix);
    if budget == 0 {
        return;
    }
    let last = prefix.last().cloned().expect("non-empty walk");
    for next in schema.type_neighbors(&last) {
        prefix.push(next.to_string());
        walk(schema, prefix, budget - 1, visit);
        prefix.pop();
    }
}
