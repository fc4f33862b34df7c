use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use hgnn::bench::{run_bench, BenchConfig};
use hgnn::graph::{gen_synthetic, load_graph, write_graph, FeatureFormat, Split, SynthConfig};
use hgnn::metapath::store::{load_precomputed, write_precomputed, Precomputed};
use hgnn::metapath::{precompute, PropagateOptions, SemanticMatrix};
use hgnn::model::checkpoint::{checkpoint_precision, encode_checkpoint};
use hgnn::model::{check_inputs, load_checkpoint, FusionMode, ModelParams};
use hgnn::train::{evaluate_split, train, Metrics, Precision, RunConfig, TrainReport};
use hgnn::{Error, Real};
use serde_json::json;

use crate::args::*;
use crate::UsageError;

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Synth(a) => synth(g, a),
        Command::Precompute(a) => cmd_precompute(a),
        Command::Train(a) => cmd_train(g, a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(g, a),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Scales every node-type count so the target type has `targets` nodes.
fn with_targets(mut cfg: SynthConfig, targets: usize) -> Result<SynthConfig> {
    if targets == 0 {
        return Err(usage("--targets must be positive"));
    }
    let current = cfg
        .node_types
        .iter()
        .find(|t| t.name == cfg.target_type)
        .map(|t| t.count)
        .unwrap_or(targets);
    let ratio = targets as f64 / current as f64;
    for t in &mut cfg.node_types {
        t.count = if t.name == cfg.target_type {
            targets
        } else {
            ((t.count as f64 * ratio).round() as usize).max(1)
        };
    }
    Ok(cfg)
}

fn synth(g: &GlobalArgs, a: SynthArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(s) = a.edge_scale {
        cfg.edge_scale = s;
    }
    if let Some(n) = a.targets {
        cfg = with_targets(cfg, n)?;
    }
    let seed = g.seed.unwrap_or(0);
    let graph = gen_synthetic(&cfg, seed)?;
    let format = match a.feature_format {
        FeatureFormatArg::Tsv => FeatureFormat::Tsv,
        FeatureFormatArg::Bin => FeatureFormat::Bin,
    };
    write_graph(&graph, &a.out, format)?;
    println!(
        "wrote {}: {} node types, {} target nodes, {} edges, seed {seed}",
        a.out.display(),
        graph.schema().node_types.len(),
        graph.num_targets(),
        graph.total_edges()
    );
    Ok(())
}

fn cmd_precompute(a: PrecomputeArgs) -> Result<()> {
    let t = Instant::now();
    let graph = load_graph(&a.data)?;
    let load_ms = t.elapsed().as_secs_f64() * 1e3;
    let opts = PropagateOptions {
        memoize: !a.no_memo,
        ..PropagateOptions::default()
    };
    let t = Instant::now();
    let (set, matrices) = precompute(&graph, a.max_hop, a.label_max_hop, opts)?;
    let compute_ms = t.elapsed().as_secs_f64() * 1e3;
    let t = Instant::now();
    write_precomputed(&a.out, &graph, &set, (a.max_hop, a.label_max_hop), &matrices)?;
    let write_ms = t.elapsed().as_secs_f64() * 1e3;
    println!(
        "{} feature metapaths: {}",
        set.feature_paths.len(),
        set.feature_paths.iter().map(|p| p.canonical()).collect::<Vec<_>>().join(" ")
    );
    println!(
        "{} label metapaths: {}",
        set.label_paths.len(),
        set.label_paths.iter().map(|p| p.canonical()).collect::<Vec<_>>().join(" ")
    );
    println!("load {load_ms:.1} ms, precompute {compute_ms:.1} ms, write {write_ms:.1} ms");
    Ok(())
}

fn run_config(g: &GlobalArgs, a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for kv in &a.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v).map_err(|e| usage(e.to_string()))?;
    }
    macro_rules! over {
        ($field:ident) => {
            if let Some(v) = a.$field {
                cfg.$field = v;
            }
        };
    }
    over!(max_hop_features);
    over!(max_hop_labels);
    over!(hidden);
    over!(dropout);
    over!(lr);
    over!(weight_decay);
    over!(max_epochs);
    over!(patience);
    over!(batch_size);
    if let Some(f) = a.fusion {
        cfg.fusion = match f {
            FusionArg::Transformer => FusionMode::Transformer,
            FusionArg::WeightedSum => FusionMode::WeightedSum,
        };
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(p) = g.precision {
        cfg.precision = match p {
            PrecisionArg::F64 => Precision::F64,
            PrecisionArg::F32 => Precision::F32,
        };
    }
    Ok(cfg)
}

fn check_against_manifest(cfg: &RunConfig, pre: &Precomputed, dir: &Path) -> Result<()> {
    let m = &pre.manifest;
    if let Some(expected) = &cfg.graph_hash {
        if *expected != m.graph_hash {
            return Err(Error::HashMismatch {
                expected: expected.clone(),
                found: m.graph_hash.clone(),
            }
            .into());
        }
    }
    if cfg.max_hop_features > m.max_hop_features || cfg.max_hop_labels > m.max_hop_labels {
        bail!(
            "config asks for feature/label hops {}/{} but {} was precomputed with {}/{}",
            cfg.max_hop_features,
            cfg.max_hop_labels,
            dir.display(),
            m.max_hop_features,
            m.max_hop_labels
        );
    }
    Ok(())
}

fn train_as<T: Real>(pre: &Precomputed, cfg: &RunConfig) -> Result<(Vec<u8>, TrainReport)> {
    let (params, report) = train::<T>(&pre.matrices, &pre.labels, cfg)?;
    Ok((encode_checkpoint(&params), report))
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

fn cmd_train(g: &GlobalArgs, a: TrainArgs) -> Result<()> {
    let cfg = run_config(g, &a)?;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    if a.repeats == 0 {
        return Err(usage("--repeats must be at least 1"));
    }
    let t = Instant::now();
    let pre = load_precomputed(&a.precomputed)?;
    let load_ms = t.elapsed().as_secs_f64() * 1e3;
    check_against_manifest(&cfg, &pre, &a.precomputed)?;

    let mut reports = Vec::with_capacity(a.repeats);
    let mut checkpoint = None;
    for r in 0..a.repeats {
        let run_cfg = RunConfig {
            seed: cfg.seed.wrapping_add(r as u64),
            ..cfg.clone()
        };
        let (ckpt, mut report) = match cfg.precision {
            Precision::F64 => train_as::<f64>(&pre, &run_cfg)?,
            Precision::F32 => train_as::<f32>(&pre, &run_cfg)?,
        };
        report.precompute_ms = load_ms;
        println!(
            "seed {}: {} epochs, best epoch {}, val micro-f1 {:.4}, test micro-f1 {:.4}, test macro-f1 {:.4}, {:.2} ms/epoch",
            run_cfg.seed,
            report.epochs,
            report.best_epoch,
            report.val_micro_f1,
            report.test_micro_f1,
            report.test_macro_f1,
            report.epoch_ms_mean
        );
        if checkpoint.is_none() {
            checkpoint = Some(ckpt);
        }
        reports.push(report);
    }

    let ckpt_path = a.checkpoint.clone().unwrap_or_else(|| {
        a.out
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
            .join("model.ckpt")
    });
    if let Some(dir) = ckpt_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&ckpt_path, checkpoint.expect("at least one run"))
        .with_context(|| format!("writing {}", ckpt_path.display()))?;

    if reports.len() == 1 {
        write_json(&a.out, &reports[0])?;
    } else {
        let micro = median(reports.iter().map(|r| r.test_micro_f1).collect());
        let macro_ = median(reports.iter().map(|r| r.test_macro_f1).collect());
        println!("median over {} runs: test micro-f1 {micro:.4}, macro-f1 {macro_:.4}", reports.len());
        write_json(
            &a.out,
            &json!({
                "runs": reports,
                "median_test_micro_f1": micro,
                "median_test_macro_f1": macro_,
            }),
        )?;
    }
    println!("report {}, checkpoint {}", a.out.display(), ckpt_path.display());
    Ok(())
}

/// The precomputed matrices the checkpoint was trained on, in its order.
fn matching_inputs<T: Real>(params: &ModelParams<T>, pre: &Precomputed, dir: &Path) -> Result<Vec<SemanticMatrix>> {
    let mut inputs = Vec::with_capacity(params.inputs.len());
    for spec in &params.inputs {
        let m = pre
            .matrices
            .iter()
            .find(|m| m.metapath == spec.metapath)
            .ok_or_else(|| {
                Error::InputMismatch(format!(
                    "checkpoint uses metapath {} which is not in {}",
                    spec.metapath,
                    dir.display()
                ))
            })?;
        inputs.push(m.clone());
    }
    check_inputs(params, &inputs)?;
    Ok(inputs)
}

fn eval_as<T: Real>(a: &EvalArgs, pre: &Precomputed) -> Result<Metrics> {
    let params: ModelParams<T> = load_checkpoint(&a.checkpoint)?;
    let inputs = matching_inputs(&params, pre, &a.precomputed)?;
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Val => Split::Val,
        SplitArg::Test => Split::Test,
    };
    Ok(evaluate_split(&params, &inputs, &pre.labels, split)?)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let pre = load_precomputed(&a.precomputed)?;
    let metrics = match checkpoint_precision(&a.checkpoint)? {
        4 => eval_as::<f32>(&a, &pre)?,
        _ => eval_as::<f64>(&a, &pre)?,
    };
    let text = serde_json::to_string_pretty(&metrics)?;
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = writeln!(stdout, "{text}") {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            return Err(e.into());
        }
    }
    if let Some(out) = &a.out {
        write_json(out, &metrics)?;
    }
    Ok(())
}

/// Parses `edges=1x,2x,4x` into edge multipliers.
pub fn parse_sweep(spec: &str) -> Result<Vec<f64>> {
    let values = spec
        .strip_prefix("edges=")
        .ok_or_else(|| usage(format!("--sweep must look like edges=1x,2x,4x, got {spec:?}")))?;
    values
        .split(',')
        .map(|v| {
            let v = v.trim();
            v.strip_suffix('x')
                .unwrap_or(v)
                .parse::<f64>()
                .ok()
                .filter(|x| *x > 0.0 && x.is_finite())
                .ok_or_else(|| usage(format!("bad sweep value {v:?}")))
        })
        .collect()
}

fn cmd_bench(g: &GlobalArgs, a: BenchArgs) -> Result<()> {
    let edge_scales = parse_sweep(&a.sweep)?;
    if edge_scales.len() < 3 {
        return Err(usage("the sweep needs at least three points"));
    }
    let mut synth = SynthConfig::default();
    if let Some(n) = a.targets {
        synth = with_targets(synth, n)?;
    }
    let cfg = BenchConfig {
        synth,
        edge_scales,
        max_hop_features: a.max_hop,
        max_hop_labels: a.label_max_hop,
        hidden: a.hidden,
        warmup_epochs: a.warmup,
        epochs: a.epochs,
        precompute_repeats: a.precompute_repeats,
        k_sweep: !a.no_k_sweep,
        seed: g.seed.unwrap_or(0),
    };
    let report = run_bench(&cfg)?;
    for p in &report.points {
        println!(
            "edges x{}: N {} E {} K {} D {}: precompute {:.2} ms, epoch {:.2} ms",
            p.edge_scale, p.num_targets, p.total_edges, p.num_metapaths, p.hidden, p.precompute_ms, p.epoch_ms
        );
    }
    for k in &report.k_points {
        println!("K {}: epoch {:.2} ms", k.num_metapaths, k.epoch_ms);
    }
    for n in &report.notes {
        println!("{n}");
    }
    write_json(&a.out, &report)?;
    println!("report {}", a.out.display());
    Ok(())
}
