//! Training at one scale and evaluation across scales.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use super::config::Config;
use super::dataset::{Dataset, Split};
use super::report::{histogram, write_csv, write_metrics, write_trace, CURVE_HEADER, HISTOGRAM_HEADER};
use crate::error::{Error, Result};
use crate::geometry::GeometricGraph;
use crate::gnn::write_checkpoint;
use crate::gnn::GnnParams;
use crate::policy::{evaluate_policy, train, Evaluation, MetricsRecord, Policy, TraceRow};
use crate::rng;

pub const TRANSFER_POLICY: &str = "gnn_transfer";
pub const IN_DISTRIBUTION_POLICY: &str = "gnn_in_distribution";
pub const WMMSE_POLICY: &str = "wmmse";

/// Output file names under the output root.
pub const METRICS_FILE: &str = "metrics.csv";
pub const CURVE_FILE: &str = "transfer_curve.csv";
pub const CURVE_SVG_FILE: &str = "transfer_curve.svg";

pub fn trace_file(scale: usize) -> String {
    format!("trace_n{scale}.csv")
}

pub fn checkpoint_file(scale: usize) -> String {
    format!("models/gnn_n{scale}.ckpt")
}

pub fn histogram_file(policy: &str, scale: usize) -> String {
    format!("histograms/sum_rate_{policy}_n{scale}.csv")
}

/// Seed of the initial taps; shared by every trained model.
fn init_seed(seed: u64) -> u64 {
    rng::derive(seed, &[rng::tag("init")])
}

fn train_seed(seed: u64, scale: usize) -> u64 {
    rng::derive(seed, &[rng::tag("train"), scale as u64])
}

/// Common seed for all evaluations, so policies see the same channels.
fn eval_seed(seed: u64) -> u64 {
    rng::derive(seed, &[rng::tag("eval")])
}

/// Trains a policy on the training split of one scale.
pub fn train_at_scale(config: &Config, dataset: &Dataset, scale: usize, seed: u64) -> Result<(GnnParams, Vec<TraceRow>)> {
    let graphs: Vec<GeometricGraph> = dataset.load(scale, Split::Train)?.into_iter().map(|(_, g)| g).collect();
    info!("training at n={scale} on {} graphs", graphs.len());
    let init = config.gnn.init(init_seed(seed))?;
    train(
        &config.problem,
        &graphs,
        &config.channel_model(),
        config.channel.input,
        &init,
        train_seed(seed, scale),
    )
}

/// Trains at `scale` and writes the checkpoint and trace under `out`.
pub fn train_and_save(config: &Config, dataset: &Dataset, scale: usize, seed: u64, out: &Path) -> Result<GnnParams> {
    let (params, trace) = train_at_scale(config, dataset, scale, seed)?;
    let ckpt = out.join(checkpoint_file(scale));
    if let Some(dir) = ckpt.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_checkpoint(&ckpt, &params)?;
    write_trace(&out.join(trace_file(scale)), &trace)?;
    Ok(params)
}

/// Evaluates named policies on the held-out split of one scale.
pub fn evaluate_at_scale(
    config: &Config,
    dataset: &Dataset,
    scale: usize,
    policies: &[(&str, &Policy)],
    seed: u64,
) -> Result<Vec<Evaluation>> {
    let held_out = dataset.load(scale, Split::Test)?;
    if held_out.is_empty() {
        return Err(Error::Config(format!("scale {scale} has no held-out graphs")));
    }
    let graphs: Vec<(u64, &GeometricGraph)> = held_out.iter().map(|(id, g)| (*id, g)).collect();
    policies
        .iter()
        .map(|(name, policy)| {
            info!("evaluating {name} at n={scale}");
            evaluate_policy(
                policy,
                name,
                scale,
                &graphs,
                &config.channel_model(),
                &config.problem,
                config.channel.input,
                config.experiment.trials,
                eval_seed(seed),
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub scale: usize,
    pub nodes_mean: f64,
    pub policy: String,
    pub per_node_rate_mean: f64,
    pub per_node_rate_std: f64,
    pub sum_rate_mean: f64,
    pub violation_mean: f64,
    pub violation_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutcome {
    pub records: Vec<MetricsRecord>,
    pub curve: Vec<CurveRow>,
    pub evaluations: Vec<Evaluation>,
}

impl TransferOutcome {
    pub fn curve_row(&self, scale: usize, policy: &str) -> Option<&CurveRow> {
        self.curve.iter().find(|r| r.scale == scale && r.policy == policy)
    }
}

/// Writes metrics, curve, histograms and (optionally) the curve plot.
pub fn write_outcome(config: &Config, outcome: &TransferOutcome, out: &Path) -> Result<()> {
    write_metrics(&out.join(METRICS_FILE), &outcome.records)?;
    write_csv(&out.join(CURVE_FILE), &CURVE_HEADER, &outcome.curve)?;
    for ev in &outcome.evaluations {
        let bins = histogram(&ev.sum_rates, config.experiment.histogram_bins);
        write_csv(
            &out.join(histogram_file(&ev.record.policy, ev.record.scale)),
            &HISTOGRAM_HEADER,
            &bins,
        )?;
    }
    if config.experiment.svg {
        let path = out.join(CURVE_SVG_FILE);
        fs::write(&path, curve_svg(&outcome.curve)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn collect_outcome(dataset: &Dataset, evaluations: Vec<Evaluation>) -> Result<TransferOutcome> {
    let curve = evaluations
        .iter()
        .map(|ev| {
            Ok(CurveRow {
                scale: ev.record.scale,
                nodes_mean: dataset.manifest.scale(ev.record.scale)?.mean_nodes(Split::Test),
                policy: ev.record.policy.clone(),
                per_node_rate_mean: ev.per_node_rate_mean,
                per_node_rate_std: ev.per_node_rate_std,
                sum_rate_mean: ev.record.sum_rate_mean,
                violation_mean: ev.record.violation_mean,
                violation_std: ev.record.violation_std,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TransferOutcome {
        records: evaluations.iter().map(|e| e.record.clone()).collect(),
        curve,
        evaluations,
    })
}

/// Evaluates a fixed policy and WMMSE at every configured scale.
pub fn evaluate_checkpoint(config: &Config, dataset: &Dataset, params: &GnnParams, seed: u64) -> Result<TransferOutcome> {
    let gnn = Policy::Gnn(params.clone());
    let wmmse = Policy::Wmmse {
        iters: config.experiment.wmmse_iters,
    };
    let mut evaluations = Vec::new();
    for scale in config.eval_scales() {
        evaluations.extend(evaluate_at_scale(
            config,
            dataset,
            scale,
            &[(TRANSFER_POLICY, &gnn), (WMMSE_POLICY, &wmmse)],
            seed,
        )?);
    }
    collect_outcome(dataset, evaluations)
}

/// Trains at the training scale (and, if configured, at every evaluation
/// scale), evaluates every model and WMMSE on the held-out graphs of each
/// evaluation scale, and writes all artifacts under `out`.
pub fn run_transfer_experiment(config: &Config, dataset_root: &Path, out: &Path, seed: u64) -> Result<TransferOutcome> {
    config.validate()?;
    let dataset = Dataset::open(dataset_root)?;
    let train_scale = config.experiment.train_scale;
    let transferred = Policy::Gnn(train_and_save(config, &dataset, train_scale, seed, out)?);
    let wmmse = Policy::Wmmse {
        iters: config.experiment.wmmse_iters,
    };
    let mut evaluations = Vec::new();
    for scale in config.eval_scales() {
        let local = if !config.experiment.in_distribution {
            None
        } else if scale == train_scale {
            Some(transferred.clone())
        } else {
            Some(Policy::Gnn(train_and_save(config, &dataset, scale, seed, out)?))
        };
        let mut policies: Vec<(&str, &Policy)> = vec![(TRANSFER_POLICY, &transferred)];
        if let Some(p) = &local {
            policies.push((IN_DISTRIBUTION_POLICY, p));
        }
        policies.push((WMMSE_POLICY, &wmmse));
        evaluations.extend(evaluate_at_scale(config, &dataset, scale, &policies, seed)?);
    }
    let outcome = collect_outcome(&dataset, evaluations)?;
    write_outcome(config, &outcome, out)?;
    Ok(outcome)
}

/// Default dataset location under an output root.
pub fn default_dataset_dir(out: &Path) -> PathBuf {
    out.join("dataset")
}

/// Line plot of per-node rate against mean node count, one line per policy.
pub fn curve_svg(curve: &[CurveRow]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const PAD: f64 = 48.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let mut policies: Vec<&str> = Vec::new();
    for r in curve {
        if !policies.contains(&r.policy.as_str()) {
            policies.push(&r.policy);
        }
    }
    let xs = curve.iter().map(|r| r.nodes_mean);
    let ys = curve.iter().map(|r| r.per_node_rate_mean);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let y1 = ys.fold(0.0f64, f64::max).max(1e-12);
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let px = |x: f64| PAD + (x - x0) / span * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - y / y1 * (H - 2.0 * PAD);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#).unwrap();
    writeln!(
        s,
        r#"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">nodes</text>"#, W / 2.0, H - 12.0).unwrap();
    writeln!(s, r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">rate per node</text>"#, H / 2.0, H / 2.0).unwrap();
    for (p, name) in policies.iter().enumerate() {
        let color = COLORS[p % COLORS.len()];
        let pts: Vec<String> = curve
            .iter()
            .filter(|r| r.policy == *name)
            .map(|r| format!("{:.2},{:.2}", px(r.nodes_mean), py(r.per_node_rate_mean)))
            .collect();
        writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}"/>"#, pts.join(" ")).unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{name}</text>"#,
            W - PAD - 120.0,
            PAD + 14.0 * p as f64
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
