use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeType {
    pub name: String,
    pub count: usize,
    pub feature_dim: usize,
}

/// A directed edge type. Its transpose is available implicitly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub name: String,
    pub src: String,
    pub dst: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub node_types: Vec<NodeType>,
    pub relations: Vec<Relation>,
    pub target_type: String,
    pub num_classes: usize,
}

impl Schema {
    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        let mut initials = HashSet::new();
        for t in &self.node_types {
            if t.name.is_empty() {
                return Err(Error::Schema("empty node type name".into()));
            }
            if !names.insert(t.name.as_str()) {
                return Err(Error::Schema(format!("duplicate node type {}", t.name)));
            }
            // Metapath identifiers are built from type initials.
            if !initials.insert(initial(&t.name)) {
                return Err(Error::Schema(format!(
                    "node type {} shares its initial with another type",
                    t.name
                )));
            }
            if t.count == 0 {
                return Err(Error::Schema(format!("node type {} has no nodes", t.name)));
            }
            if t.feature_dim == 0 {
                return Err(Error::Schema(format!(
                    "node type {} has zero feature dimension",
                    t.name
                )));
            }
        }
        let mut rel_names = HashSet::new();
        for r in &self.relations {
            if !rel_names.insert(r.name.as_str()) {
                return Err(Error::Schema(format!("duplicate relation {}", r.name)));
            }
            if r.name.is_empty() || r.name.contains(['/', '\\']) {
                return Err(Error::Schema(format!("invalid relation name {:?}", r.name)));
            }
            for end in [&r.src, &r.dst] {
                if !names.contains(end.as_str()) {
                    return Err(Error::Schema(format!(
                        "relation {} references undeclared type {end}",
                        r.name
                    )));
                }
            }
        }
        if !names.contains(self.target_type.as_str()) {
            return Err(Error::Schema(format!(
                "target type {} is not declared",
                self.target_type
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Schema("num_classes must be at least 2".into()));
        }
        if !self
            .relations
            .iter()
            .any(|r| r.src == self.target_type || r.dst == self.target_type)
        {
            return Err(Error::Schema(
                "no relation is incident to the target type".into(),
            ));
        }
        Ok(())
    }

    pub fn node_type(&self, name: &str) -> Option<&NodeType> {
        self.node_types.iter().find(|t| t.name == name)
    }

    pub fn type_index(&self, name: &str) -> Option<usize> {
        self.node_types.iter().position(|t| t.name == name)
    }

    pub fn type_by_initial(&self, c: char) -> Option<&NodeType> {
        self.node_types.iter().find(|t| initial(&t.name) == c)
    }

    pub fn num_targets(&self) -> usize {
        self.node_type(&self.target_type).map_or(0, |t| t.count)
    }

    /// Relations usable to step from `from` to `to`: `(relation, transposed)`.
    pub fn relations_between(&self, from: &str, to: &str) -> Vec<(&Relation, bool)> {
        let mut out = Vec::new();
        for r in &self.relations {
            if r.src == from && r.dst == to {
                out.push((r, false));
            }
            if r.dst == from && r.src == to {
                out.push((r, true));
            }
        }
        out
    }

    /// Types reachable from `from` in one step, in declaration order.
    pub fn type_neighbors(&self, from: &str) -> Vec<&str> {
        self.node_types
            .iter()
            .filter(|t| !self.relations_between(from, &t.name).is_empty())
            .map(|t| t.name.as_str())
            .collect()
    }
}

/// First character of a type name, upper-cased.
pub fn initial(name: &str) -> char {
    name.chars()
        .next()
        .map(|c| c.to_ascii_uppercase())
        .unwrap_or('?')
}
