//! Cost sweep: precompute time against per-epoch training time as edge density grows.
//!
//! With target count, metapath count and hidden width fixed, the epoch cost
//! depends only on dense matrix shapes, so it should stay flat while the
//! one-off aggregation cost grows with the number of edges.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{gen_synthetic, LabelTable, Split, SynthConfig};
use crate::metapath::{precompute, PropagateOptions, SemanticMatrix};
use crate::model::{
    adam_step, init_params, input_specs, loss_and_grad, Mode, ModelConfig, ModelParams,
    OptimizerState,
};
use crate::model::AdamConfig;

/// Below this the smallest point is considered unmeasurable and sizes grow.
pub const MIN_MEASURABLE_MS: f64 = 1.0;
const MAX_GROWTH_ROUNDS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub synth: SynthConfig,
    pub edge_scales: Vec<f64>,
    pub max_hop_features: usize,
    pub max_hop_labels: usize,
    pub hidden: usize,
    pub warmup_epochs: usize,
    pub epochs: usize,
    pub precompute_repeats: usize,
    /// Also time epochs with the metapath list cut to K/2 and K.
    pub k_sweep: bool,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            edge_scales: vec![1.0, 2.0, 4.0],
            max_hop_features: 2,
            max_hop_labels: 2,
            hidden: 64,
            warmup_epochs: 5,
            epochs: 20,
            precompute_repeats: 3,
            k_sweep: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub edge_scale: f64,
    pub num_targets: usize,
    pub total_edges: usize,
    pub num_metapaths: usize,
    pub hidden: usize,
    /// Median over repeats.
    pub precompute_ms: f64,
    /// Mean over timed epochs after warmup.
    pub epoch_ms: f64,
    pub generate_total_ms: f64,
    pub precompute_total_ms: f64,
    pub train_total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KPoint {
    pub num_metapaths: usize,
    pub epoch_ms: f64,
    pub train_total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub points: Vec<BenchPoint>,
    pub k_points: Vec<KPoint>,
    /// (max − min) / min of epoch_ms across the edge sweep.
    pub epoch_ms_spread: f64,
    pub precompute_strictly_increasing: bool,
    /// Least-squares slope of ln(time) against ln(edges).
    pub precompute_edge_exponent: f64,
    pub epoch_edge_exponent: f64,
    /// Times the graph was enlarged because the smallest point was too fast to time.
    pub size_growth_rounds: usize,
    pub notes: Vec<String>,
    pub generate_ms: f64,
    pub precompute_ms: f64,
    pub train_ms: f64,
    pub total_ms: f64,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if var == 0.0 {
        0.0
    } else {
        cov / var
    }
}

/// Full-batch Adam epochs on the train split, one at a time.
pub struct EpochTimer<'a> {
    matrices: &'a [SemanticMatrix],
    labels: &'a LabelTable,
    rows: Vec<usize>,
    params: ModelParams<f64>,
    state: OptimizerState<f64>,
    seed: u64,
    epoch: usize,
}

impl<'a> EpochTimer<'a> {
    pub fn new(matrices: &'a [SemanticMatrix], labels: &'a LabelTable, hidden: usize, seed: u64) -> Result<Self> {
        let rows = labels.rows(Split::Train);
        if rows.is_empty() {
            return Err(Error::EmptyTrainSplit);
        }
        let config = ModelConfig::new(hidden, labels.num_classes);
        let params: ModelParams<f64> = init_params(&config, &input_specs(matrices), seed)?;
        let state = OptimizerState::new(AdamConfig::default(), &params);
        Ok(Self {
            matrices,
            labels,
            rows,
            params,
            state,
            seed,
            epoch: 0,
        })
    }

    /// Runs one epoch and returns its wall time in milliseconds.
    pub fn step(&mut self) -> Result<f64> {
        let t = Instant::now();
        let mode = Mode::Train {
            seed: self.seed.wrapping_add(self.epoch as u64),
        };
        let (_, grads) = loss_and_grad(&self.params, self.matrices, &self.rows, &self.labels.labels, mode)?;
        adam_step(&mut self.params, &grads, &mut self.state)?;
        self.epoch += 1;
        Ok(ms_since(t))
    }
}

/// Full-batch epochs on the train split. Returns the per-epoch times of the
/// epochs after `warmup`, and the total time of all epochs.
pub fn time_epochs(
    matrices: &[SemanticMatrix],
    labels: &LabelTable,
    hidden: usize,
    warmup: usize,
    epochs: usize,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    let start = Instant::now();
    let mut timer = EpochTimer::new(matrices, labels, hidden, seed)?;
    let mut times = Vec::with_capacity(epochs);
    for epoch in 0..warmup + epochs {
        let ms = timer.step()?;
        if epoch >= warmup {
            times.push(ms);
        }
    }
    Ok((times, ms_since(start)))
}

fn scaled(cfg: &SynthConfig, edge_scale: f64, growth: usize) -> SynthConfig {
    let mut s = cfg.clone();
    s.edge_scale = cfg.edge_scale * edge_scale;
    for t in &mut s.node_types {
        t.count <<= growth;
    }
    s
}

type Inputs = (Vec<SemanticMatrix>, LabelTable);

fn sweep(cfg: &BenchConfig, growth: usize) -> Result<(Vec<BenchPoint>, Option<Inputs>)> {
    let mut prepared = Vec::new();
    for &scale in &cfg.edge_scales {
        let t = Instant::now();
        let graph = gen_synthetic(&scaled(&cfg.synth, scale, growth), cfg.seed)?;
        let generate_total_ms = ms_since(t);

        let mut pre_times = Vec::new();
        let mut matrices = Vec::new();
        for _ in 0..cfg.precompute_repeats.max(1) {
            let t = Instant::now();
            let (_, m) = precompute(
                &graph,
                cfg.max_hop_features,
                cfg.max_hop_labels,
                PropagateOptions::default(),
            )?;
            pre_times.push(ms_since(t));
            matrices = m;
        }
        prepared.push((scale, graph, matrices, generate_total_ms, pre_times));
    }

    // Epochs run round-robin over the sweep points so slow drift in machine
    // load lands on every point alike.
    let mut timers = prepared
        .iter()
        .map(|(_, g, m, _, _)| EpochTimer::new(m, g.labels(), cfg.hidden, cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    let epochs = cfg.epochs.max(1);
    let mut times = vec![Vec::with_capacity(epochs); timers.len()];
    let mut totals = vec![0.0; timers.len()];
    for round in 0..cfg.warmup_epochs + epochs {
        for (i, timer) in timers.iter_mut().enumerate() {
            let ms = timer.step()?;
            totals[i] += ms;
            if round >= cfg.warmup_epochs {
                times[i].push(ms);
            }
        }
    }
    drop(timers);

    let mut points = Vec::new();
    let mut first = None;
    for ((scale, graph, matrices, generate_total_ms, pre_times), (epoch_times, train_total_ms)) in
        prepared.into_iter().zip(times.into_iter().zip(totals))
    {
        let epoch_ms = epoch_times.iter().sum::<f64>() / epoch_times.len() as f64;
        log::info!(
            "edges x{scale}: E = {}, precompute {:.2} ms, epoch {:.2} ms",
            graph.total_edges(),
            median(pre_times.clone()),
            epoch_ms
        );
        points.push(BenchPoint {
            edge_scale: scale,
            num_targets: graph.num_targets(),
            total_edges: graph.total_edges(),
            num_metapaths: matrices.len(),
            hidden: cfg.hidden,
            precompute_ms: median(pre_times.clone()),
            epoch_ms,
            generate_total_ms,
            precompute_total_ms: pre_times.iter().sum(),
            train_total_ms,
        });
        if first.is_none() {
            first = Some((matrices, graph.labels().clone()));
        }
    }
    Ok((points, first))
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.edge_scales.len() < 3 {
        return Err(Error::Config("the edge sweep needs at least three points".into()));
    }
    if cfg.edge_scales.windows(2).any(|w| w[1] <= w[0]) || cfg.edge_scales[0] <= 0.0 {
        return Err(Error::Config("edge scales must be positive and increasing".into()));
    }
    let mut notes = Vec::new();
    let mut growth = 0;
    let (points, smallest) = loop {
        let (points, smallest) = sweep(cfg, growth)?;
        let p = &points[0];
        if (p.precompute_ms >= MIN_MEASURABLE_MS && p.epoch_ms >= MIN_MEASURABLE_MS)
            || growth == MAX_GROWTH_ROUNDS
        {
            break (points, smallest);
        }
        growth += 1;
        notes.push(format!(
            "smallest point too fast to time (precompute {:.3} ms, epoch {:.3} ms); doubling node counts",
            p.precompute_ms, p.epoch_ms
        ));
    };

    let mut k_points = Vec::new();
    if cfg.k_sweep {
        if let Some((matrices, labels)) = smallest {
            let k = matrices.len();
            for kk in [k.div_ceil(2), k] {
                let (times, total) = time_epochs(
                    &matrices[..kk],
                    &labels,
                    cfg.hidden,
                    cfg.warmup_epochs,
                    cfg.epochs.max(1),
                    cfg.seed,
                )?;
                k_points.push(KPoint {
                    num_metapaths: kk,
                    epoch_ms: times.iter().sum::<f64>() / times.len() as f64,
                    train_total_ms: total,
                });
            }
        }
    }

    let epochs: Vec<f64> = points.iter().map(|p| p.epoch_ms).collect();
    let pre: Vec<f64> = points.iter().map(|p| p.precompute_ms).collect();
    let edges: Vec<f64> = points.iter().map(|p| p.total_edges as f64).collect();
    let lo = epochs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = epochs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let epoch_ms_spread = (hi - lo) / lo;
    let precompute_strictly_increasing = pre.windows(2).all(|w| w[1] > w[0]);
    let precompute_edge_exponent = slope(&edges, &pre);
    let epoch_edge_exponent = slope(&edges, &epochs);
    notes.push(format!(
        "precompute time grows like E^{precompute_edge_exponent:.2}; epoch time like E^{epoch_edge_exponent:.2} (spread {:.1}%)",
        100.0 * epoch_ms_spread
    ));
    if let [a, b] = k_points.as_slice() {
        notes.push(format!(
            "K {} -> {}: epoch time x{:.2}",
            a.num_metapaths,
            b.num_metapaths,
            b.epoch_ms / a.epoch_ms
        ));
    }

    let generate_ms = points.iter().map(|p| p.generate_total_ms).sum::<f64>();
    let precompute_ms = points.iter().map(|p| p.precompute_total_ms).sum::<f64>();
    let train_ms = points.iter().map(|p| p.train_total_ms).sum::<f64>()
        + k_points.iter().map(|k| k.train_total_ms).sum::<f64>();
    Ok(BenchReport {
        points,
        k_points,
        epoch_ms_spread,
        precompute_strictly_increasing,
        precompute_edge_exponent,
        epoch_edge_exponent,
        size_growth_rounds: growth,
        notes,
        generate_ms,
        precompute_ms,
        train_ms,
        total_ms: generate_ms + precompute_ms + train_ms,
    })
}
