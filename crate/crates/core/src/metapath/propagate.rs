//! Parameter-free neighbor aggregation along metapaths.
//!
//! Feature paths are evaluated right to left as repeated sparse–dense
//! products; the memo is keyed by type-sequence suffix and built level by
//! level (suffix length 1, 2, ...), so each suffix is computed exactly once and
//! every level's entries can run in parallel. Label paths multiply
//! normalized adjacencies left to right into a composite keyed by prefix,
//! remove its diagonal, then apply it to the one-hot train labels.
//!
//! Both the memoized and direct routes perform the same floating-point
//! operations in the same order, so their outputs are bitwise identical.

use std::collections::{BTreeMap, BTreeSet};

use super::path::{Metapath, MetapathSet, PathKind};
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::graph::HeteroGraph;
use crate::sparse::SparseMatrix;

/// Aggregated features (`X^P`) or propagated labels (`Y^P`) for one metapath.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMatrix {
    pub metapath: Metapath,
    pub matrix: Matrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PropagateOptions {
    pub memoize: bool,
    pub exec: Execution,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self {
            memoize: true,
            exec: Execution::default(),
        }
    }
}

type TypeSeq = Vec<String>;

pub fn propagate_features(graph: &HeteroGraph, paths: &[Metapath]) -> Result<Vec<SemanticMatrix>> {
    propagate_features_with(graph, paths, PropagateOptions::default())
}

pub fn propagate_features_with(
    graph: &HeteroGraph,
    paths: &[Metapath],
    opts: PropagateOptions,
) -> Result<Vec<SemanticMatrix>> {
    for p in paths {
        check_kind(p, PathKind::Feature)?;
        p.validate(graph.schema())?;
    }
    let adj = normalized_steps(graph, paths, opts.exec)?;
    let raw = |t: &str| graph.features(t).expect("validated type").clone();

    if !opts.memoize {
        return paths
            .iter()
            .map(|p| {
                let types = p.types();
                let mut x = raw(types.last().expect("non-empty path"));
                for w in types.windows(2).rev() {
                    x = adj[&(w[0].clone(), w[1].clone())].spmm_with(&x, opts.exec)?;
                }
                Ok(SemanticMatrix {
                    metapath: p.clone(),
                    matrix: x,
                })
            })
            .collect();
    }

    let wanted: BTreeMap<TypeSeq, usize> = paths
        .iter()
        .enumerate()
        .map(|(i, p)| (p.types().to_vec(), i))
        .collect();
    let longest = paths.iter().map(|p| p.types().len()).max().unwrap_or(0);
    let mut results: Vec<Option<Matrix<f64>>> = vec![None; paths.len()];
    let mut level: BTreeMap<TypeSeq, Matrix<f64>> = BTreeMap::new();
    for len in 1..=longest {
        let keys: Vec<TypeSeq> = paths
            .iter()
            .filter(|p| p.types().len() >= len)
            .map(|p| p.types()[p.types().len() - len..].to_vec())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let computed = opts.exec.map_range(keys.len(), |k| -> Result<Matrix<f64>> {
            let key = &keys[k];
            if len == 1 {
                return Ok(raw(&key[0]));
            }
            let step = &adj[&(key[0].clone(), key[1].clone())];
            step.spmm_with(&level[&key[1..]], opts.exec)
        });
        let mut next = BTreeMap::new();
        for (key, m) in keys.into_iter().zip(computed) {
            let m = m?;
            if let Some(&i) = wanted.get(&key) {
                results[i] = Some(m.clone());
            }
            next.insert(key, m);
        }
        level = next;
    }
    Ok(paths
        .iter()
        .zip(results)
        .map(|(p, m)| SemanticMatrix {
            metapath: p.clone(),
            matrix: m.expect("every path reaches its full length"),
        })
        .collect())
}

pub fn propagate_labels(graph: &HeteroGraph, paths: &[Metapath]) -> Result<Vec<SemanticMatrix>> {
    propagate_labels_with(graph, paths, PropagateOptions::default())
}

pub fn propagate_labels_with(
    graph: &HeteroGraph,
    paths: &[Metapath],
    opts: PropagateOptions,
) -> Result<Vec<SemanticMatrix>> {
    for p in paths {
        check_kind(p, PathKind::Label)?;
        p.validate(graph.schema())?;
    }
    let adj = normalized_steps(graph, paths, opts.exec)?;
    let y = graph.labels().train_one_hot();
    let finish = |p: &Metapath, composite: &SparseMatrix| -> Result<SemanticMatrix> {
        Ok(SemanticMatrix {
            metapath: p.clone(),
            matrix: composite.rm_diag()?.spmm_with(&y, opts.exec)?,
        })
    };
    let step = |w: &[String]| &adj[&(w[0].clone(), w[1].clone())];

    if !opts.memoize {
        return paths
            .iter()
            .map(|p| {
                let types = p.types();
                let mut acc = step(&types[0..2]).clone();
                for w in types[1..].windows(2) {
                    acc = acc.sparse_matmul_with(step(w), opts.exec)?;
                }
                finish(p, &acc)
            })
            .collect();
    }

    let wanted: BTreeMap<TypeSeq, usize> = paths
        .iter()
        .enumerate()
        .map(|(i, p)| (p.types().to_vec(), i))
        .collect();
    let longest = paths.iter().map(|p| p.types().len()).max().unwrap_or(0);
    let mut results: Vec<Option<SemanticMatrix>> = vec![None; paths.len()];
    let mut level: BTreeMap<TypeSeq, SparseMatrix> = BTreeMap::new();
    // Prefix of length `len` covers `len - 1` hops.
    for len in 2..=longest {
        let keys: Vec<TypeSeq> = paths
            .iter()
            .filter(|p| p.types().len() >= len)
            .map(|p| p.types()[..len].to_vec())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let computed = opts.exec.map_range(keys.len(), |k| -> Result<SparseMatrix> {
            let key = &keys[k];
            if len == 2 {
                return Ok(step(key).clone());
            }
            level[&key[..len - 1]].sparse_matmul_with(step(&key[len - 2..]), opts.exec)
        });
        let mut next = BTreeMap::new();
        for (key, m) in keys.into_iter().zip(computed) {
            let m = m?;
            if let Some(&i) = wanted.get(&key) {
                results[i] = Some(finish(&paths[i], &m)?);
            }
            next.insert(key, m);
        }
        level = next;
    }
    Ok(results
        .into_iter()
        .map(|m| m.expect("every path reaches its full length"))
        .collect())
}

/// Enumerates both metapath families and computes every semantic matrix.
pub fn precompute(
    graph: &HeteroGraph,
    max_hop_features: usize,
    max_hop_labels: usize,
    opts: PropagateOptions,
) -> Result<(MetapathSet, Vec<SemanticMatrix>)> {
    let set = MetapathSet::enumerate(graph.schema(), max_hop_features, max_hop_labels);
    let mut out = propagate_features_with(graph, &set.feature_paths, opts)?;
    out.extend(propagate_labels_with(graph, &set.label_paths, opts)?);
    Ok((set, out))
}

fn check_kind(p: &Metapath, kind: PathKind) -> Result<()> {
    if p.kind() != kind {
        return Err(Error::Metapath {
            path: p.key(),
            msg: format!("expected a {kind:?} path"),
        });
    }
    Ok(())
}

/// Row-normalized adjacency for every consecutive type pair used by `paths`.
fn normalized_steps(
    graph: &HeteroGraph,
    paths: &[Metapath],
    exec: Execution,
) -> Result<BTreeMap<(String, String), SparseMatrix>> {
    let pairs: Vec<(String, String)> = paths
        .iter()
        .flat_map(|p| p.types().windows(2).map(|w| (w[0].clone(), w[1].clone())))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mats = exec.map_range(pairs.len(), |i| {
        graph.normalized_adjacency(&pairs[i].0, &pairs[i].1)
    });
    pairs
        .into_iter()
        .zip(mats)
        .map(|(k, m)| Ok((k, m?)))
        .collect()
}
