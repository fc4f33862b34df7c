//! Brute-force per-node aggregation by explicit metapath-instance enumeration.
//!
//! Neighbor lists are rebuilt here straight from the relation matrices
//! (forward rows plus a column scan for transposed steps) so the oracle
//! shares no kernel with the matrix route it checks.

use std::collections::BTreeSet;

use super::path::{Metapath, PathKind};
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;

/// Instance enumeration is exponential in hop count.
pub const ORACLE_MAX_HOP: usize = 4;

/// Sum over every instance rooted at `node` of the source feature weighted by
/// the product of inverse out-degrees along the instance.
pub fn oracle_aggregate(graph: &HeteroGraph, path: &Metapath, node: usize) -> Result<Vec<f64>> {
    if path.kind() != PathKind::Feature {
        return Err(Error::Metapath {
            path: path.key(),
            msg: "oracle handles feature paths only".into(),
        });
    }
    path.validate(graph.schema())?;
    if path.hops() > ORACLE_MAX_HOP {
        return Err(Error::HopBound {
            hops: path.hops(),
            bound: ORACLE_MAX_HOP,
        });
    }
    let types = path.types();
    if node >= graph.num_targets() {
        return Err(Error::Shape(format!("node {node} out of range")));
    }
    let source = graph
        .features(types.last().expect("non-empty"))
        .expect("validated type");
    let mut acc = vec![0.0; source.cols()];
    descend(graph, types, 0, node, 1.0, &mut |j, w| {
        for (a, &x) in acc.iter_mut().zip(source.row(j)) {
            *a += w * x;
        }
    });
    Ok(acc)
}

fn descend(
    graph: &HeteroGraph,
    types: &[String],
    depth: usize,
    node: usize,
    weight: f64,
    emit: &mut impl FnMut(usize, f64),
) {
    if depth + 1 == types.len() {
        emit(node, weight);
        return;
    }
    let next = neighbors(graph, &types[depth], &types[depth + 1], node);
    if next.is_empty() {
        return;
    }
    let w = weight / next.len() as f64;
    for j in next {
        descend(graph, types, depth + 1, j, w, emit);
    }
}

fn neighbors(graph: &HeteroGraph, from: &str, to: &str, node: usize) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for (rel, transposed) in graph.schema().relations_between(from, to) {
        let m = graph.relation(&rel.name).expect("declared relation");
        if transposed {
            for r in 0..m.n_rows() {
                if m.row(r).0.contains(&node) {
                    out.insert(r);
                }
            }
        } else {
            out.extend(m.row(node).0.iter().copied());
        }
    }
    out
}
