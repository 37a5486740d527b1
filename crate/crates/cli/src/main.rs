//! `cfsim`: plan sweeps, validate and score prediction logs, drop image
//! patches, and render curve reports.
//!
//! Exit status: 0 on success, 1 when inputs fail validation or cannot be
//! processed, 2 on usage errors (bad flags, unreadable input paths).
//! Every successful or validation-failed run writes a `run.json` provenance
//! record next to its primary output.

mod commands;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use cfsim_core::metrics::{ConservationMode, MetricName, DEFAULT_K, DEFAULT_RESAMPLES};
use cfsim_core::sweep::{AxisName, Reference};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "cfsim",
    version,
    about = "Counterfactual simulation testing toolkit"
)]
struct Cli {
    /// Where to write the provenance record (default: run.json beside the output).
    #[arg(long, global = true)]
    provenance: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plan a single-axis sweep manifest.
    Plan(PlanArgs),
    /// Check a prediction log against a manifest.
    Validate(ValidateArgs),
    /// Compute metric curves with bootstrap standard deviations.
    Score(ScoreArgs),
    /// Black out random image patches at several information-loss levels.
    Patchdrop(PatchDropArgs),
    /// Plot metric curves as SVG.
    Report(ReportArgs),
    /// Summarize curves of several models into a comparison table.
    Compare(CompareArgs),
}

#[derive(Debug, Args, Serialize)]
struct PlanArgs {
    /// object_rotation, camera_panorama, object_scale, camera_elevation,
    /// occluder_position or custom.
    #[arg(long)]
    axis: AxisName,
    /// JSON array of scene trials.
    #[arg(long, required_unless_present = "nvd", conflicts_with = "nvd")]
    trials: Option<PathBuf>,
    /// Use the built-in 92-model × 27-lighting trial set (× 3 occluders for occluder_position).
    #[arg(long)]
    nvd: bool,
    /// Comma-separated grid replacing the axis default.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    grid: Option<Vec<f64>>,
    /// Reference value, or "absent".
    #[arg(long, allow_negative_numbers = true)]
    reference: Option<Reference>,
    #[arg(long)]
    unit: Option<String>,
    #[arg(long)]
    occluder_positions: Option<usize>,
    /// JSON object of constant scene parameters (string → string).
    #[arg(long)]
    constants: Option<PathBuf>,
    #[arg(long)]
    frame_id_template: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ManifestInput {
    #[arg(long)]
    manifest: PathBuf,
    /// Reject unknown keys in the manifest instead of warning.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args, Serialize)]
struct ValidateArgs {
    #[command(flatten)]
    manifest: ManifestInput,
    #[arg(long)]
    log: PathBuf,
    /// Skip malformed log lines (listed in the report) instead of failing.
    #[arg(long)]
    lenient_log: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ScoreArgs {
    #[command(flatten)]
    manifest: ManifestInput,
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    lenient_log: bool,
    /// accuracy, pccp, pacp or pibc.
    #[arg(long)]
    metric: MetricName,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// label_retained, top1_identity or topk_overlap (default depends on the metric).
    #[arg(long)]
    mode: Option<ConservationMode>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES as u64, value_parser = clap::value_parser!(u64).range(1..))]
    resamples: u64,
    /// Only score these models (repeatable); default is every model in the log.
    #[arg(long = "model")]
    models: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct PatchDropArgs {
    /// Directory searched recursively for PNG images.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Comma-separated loss fractions (default 0,0.1,…,0.9).
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    #[arg(long, default_value_t = cfsim_core::patch_drop::DEFAULT_PATCH_SIZE)]
    patch_size: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fill value: one byte for all channels or one per channel, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    fill: Vec<u8>,
}

#[derive(Debug, Args, Serialize)]
struct CurveInputs {
    /// Curve CSV files written by `score` (repeatable).
    #[arg(long, num_args = 1.., required = true)]
    curves: Vec<PathBuf>,
    /// Manifest the curves were scored against; supplies the axis.
    #[command(flatten)]
    manifest: ManifestInput,
    /// Keep only curves with this metric label, e.g. pccp@5/label_retained.
    #[arg(long)]
    metric: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct ReportArgs {
    #[command(flatten)]
    inputs: CurveInputs,
    #[arg(long)]
    title: Option<String>,
    #[arg(long)]
    x_label: Option<String>,
    #[arg(long)]
    y_label: Option<String>,
    #[arg(long)]
    no_error_bars: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct CompareArgs {
    #[command(flatten)]
    inputs: CurveInputs,
    /// Integration interval "lo,hi" on the axis.
    #[arg(
        long,
        value_delimiter = ',',
        num_args = 1,
        allow_negative_numbers = true
    )]
    interval: Option<Vec<f64>>,
    /// Model pair "first:second" whose margins (first minus second) are reported.
    #[arg(long = "pair")]
    pairs: Vec<String>,
    /// JSON array of {model_id, params, flops, train_data}.
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn thread_pool() -> Result<rayon::ThreadPool, String> {
    let threads = match std::env::var("CFSIM_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("CFSIM_THREADS must be a non-negative integer, got '{v}'"))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let code = pool.install(|| commands::run(&cli));
    ExitCode::from(code)
}
