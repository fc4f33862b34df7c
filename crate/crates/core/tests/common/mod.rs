#![allow(dead_code)]

use std::collections::BTreeMap;

use hgnn::dense::Matrix;
use hgnn::graph::{FeatureTable, HeteroGraph, LabelTable, NodeType, Relation, Schema, Split};
use hgnn::SparseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn schema(types: &[(&str, usize, usize)], relations: &[(&str, &str, &str)], target: &str, classes: usize) -> Schema {
    Schema {
        node_types: types
            .iter()
            .map(|&(n, c, d)| NodeType {
                name: n.into(),
                count: c,
                feature_dim: d,
            })
            .collect(),
        relations: relations
            .iter()
            .map(|&(n, s, d)| Relation {
                name: n.into(),
                src: s.into(),
                dst: d.into(),
            })
            .collect(),
        target_type: target.into(),
        num_classes: classes,
    }
}

/// Builds a graph from explicit edge lists and feature rows.
pub fn build(
    schema: Schema,
    edges: &[(&str, Vec<(usize, usize)>)],
    features: &[(&str, Vec<Vec<f64>>)],
    labels: Vec<Option<usize>>,
    splits: Vec<Option<Split>>,
) -> HeteroGraph {
    let mut adjacency = BTreeMap::new();
    for r in &schema.relations {
        let count = |t: &str| schema.node_type(t).unwrap().count;
        let list = edges
            .iter()
            .find(|(n, _)| *n == r.name)
            .map(|(_, e)| e.clone())
            .unwrap_or_default();
        let (m, _) = SparseMatrix::from_edges(count(&r.src), count(&r.dst), &list).unwrap();
        adjacency.insert(r.name.clone(), m);
    }
    let mut feats = BTreeMap::new();
    for t in &schema.node_types {
        let rows = features
            .iter()
            .find(|(n, _)| *n == t.name)
            .map(|(_, r)| r.clone())
            .unwrap_or_else(|| vec![vec![0.0; t.feature_dim]; t.count]);
        feats.insert(
            t.name.clone(),
            FeatureTable {
                node_type: t.name.clone(),
                matrix: Matrix::from_rows(&rows),
            },
        );
    }
    let table = LabelTable::new(schema.num_classes, labels, splits).unwrap();
    HeteroGraph::new(schema, adjacency, feats, table).unwrap()
}

/// A random graph with node types T (target), B, C; three relations with
/// random directions, one of them possibly same-type; at most 45 nodes.
pub fn random_graph(seed: u64) -> HeteroGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = [rng.random_range(5..=20), rng.random_range(3..=15), rng.random_range(2..=10)];
    let dims = [rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=4)];
    let names = ["T", "B", "C"];
    let mut pick = |pairs: &[(usize, usize)]| {
        let (a, b) = pairs[rng.random_range(0..pairs.len())];
        if rng.random_bool(0.5) { (b, a) } else { (a, b) }
    };
    let rels = [
        pick(&[(0, 1), (0, 2)]),
        pick(&[(1, 2), (0, 2), (0, 1)]),
        pick(&[(0, 0), (1, 1), (1, 2), (0, 1)]),
    ];
    let rel_names = ["r0", "r1", "r2"];
    let types: Vec<(&str, usize, usize)> = (0..3).map(|i| (names[i], counts[i], dims[i])).collect();
    let relations: Vec<(&str, &str, &str)> = rels
        .iter()
        .zip(rel_names)
        .map(|(&(s, d), n)| (n, names[s], names[d]))
        .collect();
    let schema = schema(&types, &relations, "T", 3);

    let mut edges = Vec::new();
    for (i, &(s, d)) in rels.iter().enumerate() {
        let p = rng.random_range(0.1..0.4);
        let mut list = Vec::new();
        for a in 0..counts[s] {
            for b in 0..counts[d] {
                if rng.random_bool(p) {
                    list.push((a, b));
                }
            }
        }
        edges.push((rel_names[i], list));
    }
    let features: Vec<(&str, Vec<Vec<f64>>)> = (0..3)
        .map(|t| {
            let rows = (0..counts[t])
                .map(|_| (0..dims[t]).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            (names[t], rows)
        })
        .collect();
    let labels = (0..counts[0]).map(|_| Some(rng.random_range(0..3))).collect();
    let splits = (0..counts[0])
        .map(|_| {
            Some(match rng.random_range(0..3) {
                0 => Split::Train,
                1 => Split::Val,
                _ => Split::Test,
            })
        })
        .collect();
    build(schema, &edges, &features, labels, splits)
}
