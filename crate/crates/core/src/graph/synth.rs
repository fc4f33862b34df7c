//! Seeded planted-signal heterogeneous graphs.
//!
//! Every node carries a latent community. Edges prefer endpoints in the same
//! community (`homophily`). A target node's class is the majority community
//! among its distinct 2-hop target-type neighbors, falling back to its own
//! community on ties or isolation. Features are class/community-conditional
//! Gaussians whose separation is set per type by `signal`; a weak target
//! signal leaves most of the class information in the graph structure.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::hetero::{FeatureTable, HeteroGraph, LabelTable, Split};
use super::schema::{NodeType, Relation, Schema};
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthType {
    pub name: String,
    pub count: usize,
    pub feature_dim: usize,
    /// Distance scale between class means relative to unit noise.
    pub signal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRelation {
    pub name: String,
    pub src: String,
    pub dst: String,
    /// Expected out-degree of a source node before `edge_scale`.
    pub avg_degree: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub node_types: Vec<SynthType>,
    pub relations: Vec<SynthRelation>,
    pub target_type: String,
    pub num_classes: usize,
    pub homophily: f64,
    pub edge_scale: f64,
    pub train_frac: f64,
    pub val_frac: f64,
}

impl Default for SynthConfig {
    /// ACM-like P/A/S graph with 2,000 target papers and 3 classes.
    fn default() -> Self {
        let t = |name: &str, count, feature_dim, signal| SynthType {
            name: name.into(),
            count,
            feature_dim,
            signal,
        };
        let r = |name: &str, src: &str, dst: &str, avg_degree| SynthRelation {
            name: name.into(),
            src: src.into(),
            dst: dst.into(),
            avg_degree,
        };
        Self {
            node_types: vec![t("P", 2000, 32, 0.25), t("A", 3000, 32, 0.8), t("S", 60, 16, 0.8)],
            relations: vec![r("pa", "P", "A", 3.0), r("ps", "P", "S", 1.5), r("pp", "P", "P", 2.0)],
            target_type: "P".into(),
            num_classes: 3,
            homophily: 0.8,
            edge_scale: 1.0,
            train_frac: 0.24,
            val_frac: 0.06,
        }
    }
}

impl SynthConfig {
    pub fn schema(&self) -> Schema {
        Schema {
            node_types: self
                .node_types
                .iter()
                .map(|t| NodeType {
                    name: t.name.clone(),
                    count: t.count,
                    feature_dim: t.feature_dim,
                })
                .collect(),
            relations: self
                .relations
                .iter()
                .map(|r| Relation {
                    name: r.name.clone(),
                    src: r.src.clone(),
                    dst: r.dst.clone(),
                })
                .collect(),
            target_type: self.target_type.clone(),
            num_classes: self.num_classes,
        }
    }

    fn validate(&self) -> Result<()> {
        self.schema().validate()?;
        if !(0.0..=1.0).contains(&self.homophily) {
            return Err(Error::Synthetic("homophily must lie in [0, 1]".into()));
        }
        if self.train_frac <= 0.0 || self.val_frac < 0.0 || self.train_frac + self.val_frac > 1.0 {
            return Err(Error::Synthetic("invalid split fractions".into()));
        }
        for r in &self.relations {
            let degree = r.avg_degree * self.edge_scale;
            if !(degree.is_finite() && degree >= 0.0) {
                return Err(Error::Synthetic(format!("relation {}: invalid degree", r.name)));
            }
            let incident = r.src == self.target_type || r.dst == self.target_type;
            if incident && degree == 0.0 {
                return Err(Error::Synthetic(format!(
                    "relation {} touches the target type but expects zero edges",
                    r.name
                )));
            }
        }
        Ok(())
    }
}

pub fn gen_synthetic(cfg: &SynthConfig, seed: u64) -> Result<HeteroGraph> {
    cfg.validate()?;
    let schema = cfg.schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = cfg.num_classes;

    let mut community: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for t in &cfg.node_types {
        let comm: Vec<usize> = if t.name == cfg.target_type {
            let mut v: Vec<usize> = (0..t.count).map(|i| i % c).collect();
            v.shuffle(&mut rng);
            v
        } else {
            (0..t.count).map(|_| rng.random_range(0..c)).collect()
        };
        community.insert(&t.name, comm);
    }

    let mut adjacency = BTreeMap::new();
    for r in &cfg.relations {
        let src_comm = &community[r.src.as_str()];
        let dst_comm = &community[r.dst.as_str()];
        let mut members = vec![Vec::new(); c];
        for (j, &k) in dst_comm.iter().enumerate() {
            members[k].push(j);
        }
        let degree = r.avg_degree * cfg.edge_scale;
        let poisson = (degree > 0.0).then(|| Poisson::new(degree).expect("positive rate"));
        let mut edges = Vec::new();
        for (i, &k) in src_comm.iter().enumerate() {
            let d = poisson.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
            for _ in 0..d {
                let same = rng.random_bool(cfg.homophily) && !members[k].is_empty();
                let j = if same {
                    members[k][rng.random_range(0..members[k].len())]
                } else {
                    rng.random_range(0..dst_comm.len())
                };
                if r.src == r.dst && i == j {
                    continue;
                }
                edges.push((i, j));
            }
        }
        let (m, _) = SparseMatrix::from_edges(src_comm.len(), dst_comm.len(), &edges)?;
        adjacency.insert(r.name.clone(), m);
    }

    let labels = planted_labels(&schema, &adjacency, &community[cfg.target_type.as_str()], c)?;

    let mut features = BTreeMap::new();
    for t in &cfg.node_types {
        let classes = if t.name == cfg.target_type {
            &labels
        } else {
            &community[t.name.as_str()]
        };
        let means: Vec<Vec<f64>> = (0..c)
            .map(|_| {
                (0..t.feature_dim)
                    .map(|_| t.signal * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let mut data = Vec::with_capacity(t.count * t.feature_dim);
        for &k in classes {
            for &mean in &means[k][..t.feature_dim] {
                let v = mean + rng.sample::<f64, _>(StandardNormal);
                // f32-representable so both on-disk feature formats round-trip exactly.
                data.push(v as f32 as f64);
            }
        }
        features.insert(
            t.name.clone(),
            FeatureTable {
                node_type: t.name.clone(),
                matrix: Matrix::from_vec(t.count, t.feature_dim, data)?,
            },
        );
    }

    let splits = stratified_splits(&labels, c, cfg.train_frac, cfg.val_frac, &mut rng);
    let table = LabelTable::new(c, labels.into_iter().map(Some).collect(), splits)?;
    HeteroGraph::new(schema, adjacency, features, table)
}

fn planted_labels(
    schema: &Schema,
    adjacency: &BTreeMap<String, SparseMatrix>,
    own: &[usize],
    c: usize,
) -> Result<Vec<usize>> {
    let target = schema.target_type.as_str();
    let step = |from: &str, to: &str| -> Result<Option<SparseMatrix>> {
        let mut acc: Option<SparseMatrix> = None;
        for (rel, transposed) in schema.relations_between(from, to) {
            let m = &adjacency[&rel.name];
            let m = if transposed { m.transpose() } else { m.clone() };
            acc = Some(match acc {
                None => m,
                Some(a) => a.union_pattern(&m)?,
            });
        }
        Ok(acc)
    };
    let mut two_hop: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); own.len()];
    for mid in schema.type_neighbors(target) {
        let (Some(out), Some(back)) = (step(target, mid)?, step(mid, target)?) else {
            continue;
        };
        for (i, set) in two_hop.iter_mut().enumerate() {
            for &k in out.row(i).0 {
                set.extend(back.row(k).0.iter().copied().filter(|&j| j != i));
            }
        }
    }
    Ok(two_hop
        .iter()
        .enumerate()
        .map(|(i, set)| {
            let mut counts = vec![0usize; c];
            for &j in set {
                counts[own[j]] += 1;
            }
            let best = counts.iter().copied().max().unwrap_or(0);
            if best == 0 || counts[own[i]] == best {
                own[i]
            } else {
                counts.iter().position(|&n| n == best).unwrap()
            }
        })
        .collect())
}

fn stratified_splits(
    labels: &[usize],
    c: usize,
    train_frac: f64,
    val_frac: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Option<Split>> {
    let mut splits = vec![Some(Split::Test); labels.len()];
    for class in 0..c {
        let mut nodes: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        nodes.shuffle(rng);
        let n = nodes.len() as f64;
        let n_train = ((n * train_frac).round() as usize).max(1).min(nodes.len());
        let n_val = ((n * val_frac).round() as usize).min(nodes.len() - n_train);
        for (pos, &i) in nodes.iter().enumerate() {
            splits[i] = Some(if pos < n_train {
                Split::Train
            } else if pos < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            });
        }
    }
    splits
}
