//! Shared test support: random sweep fixtures and a brute-force metric oracle.
//!
//! The oracle never touches `TrialSeries` or the metric internals. It scans
//! the raw records for each (model, trial, θ) cell and counts hits directly
//! from the metric definitions.

#![allow(dead_code)]

use cfsim_core::metrics::{
    accuracy_curve, pacp_curve, pccp_curve, pibc_curve, MetricCurve, MetricKind,
};
use cfsim_core::predictions::{PredictionRecord, SeriesSet};
use cfsim_core::sweep::{
    plan_axis, AxisOverrides, FrameTheta, Reference, SceneTrial, SweepManifest,
};
use rand::seq::SliceRandom;
use rand::Rng;

pub const LABELS: [&str; 8] = ["cup", "vase", "bowl", "mug", "jar", "pot", "can", "lamp"];

pub struct Fixture {
    pub manifest: SweepManifest,
    pub records: Vec<PredictionRecord>,
    pub models: Vec<String>,
}

pub fn trials(n: usize, rng: &mut impl Rng) -> Vec<SceneTrial> {
    (0..n)
        .map(|i| SceneTrial {
            trial_id: format!("t{i:02}"),
            object_model_id: format!("obj_{i:02}"),
            class_label: LABELS[rng.random_range(0..3)].to_string(),
            lighting_env_id: "hdri_01".into(),
            occluder_id: None,
            unit_scale: None,
        })
        .collect()
}

/// Top-`depth` prediction with distinct labels and descending scores. The
/// true label is pushed to the front often enough that every metric sees
/// both outcomes.
pub fn random_topk(true_label: &str, depth: usize, rng: &mut impl Rng) -> Vec<(String, f64)> {
    let mut labels: Vec<&str> = LABELS.to_vec();
    labels.shuffle(rng);
    if rng.random_bool(0.4) {
        let pos = labels.iter().position(|l| *l == true_label).unwrap();
        labels.swap(0, pos);
    }
    let mut scores: Vec<f64> = (0..depth).map(|_| rng.random::<f64>()).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    labels
        .into_iter()
        .take(depth)
        .map(String::from)
        .zip(scores)
        .collect()
}

/// Up to 10 trials × 10 θ, one or two models, top-5 predictions, a grid or
/// absent reference and a few missing frames.
pub fn random_fixture(rng: &mut impl Rng) -> Fixture {
    let n_trials = rng.random_range(1..=10);
    let n_theta = rng.random_range(1..=10);
    let grid: Vec<f64> = (0..n_theta).map(|i| (i * 10) as f64).collect();
    let reference = if rng.random_bool(0.2) {
        Reference::Absent
    } else {
        Reference::Grid(grid[rng.random_range(0..n_theta)])
    };
    let overrides = AxisOverrides {
        grid: Some(grid),
        reference: Some(reference),
        ..AxisOverrides::default()
    };
    let manifest = plan_axis("custom", trials(n_trials, rng), &overrides).unwrap();
    let models: Vec<String> = (0..rng.random_range(1..=2))
        .map(|m| format!("model_{m}"))
        .collect();
    let reference_theta = match reference {
        Reference::Grid(v) => FrameTheta::Value(v),
        Reference::Absent => FrameTheta::Reference,
    };

    let mut records = Vec::new();
    for model in &models {
        for frame in manifest.enumerate_frames() {
            let trial = &manifest.trials[frame.trial_index];
            let is_reference = frame.theta == reference_theta;
            // The first trial always keeps its reference so every model scores.
            let keep = if is_reference {
                frame.trial_index == 0 || rng.random_bool(0.9)
            } else {
                rng.random_bool(0.9)
            };
            if !keep {
                continue;
            }
            records.push(PredictionRecord {
                frame_id: frame.frame_id.clone(),
                trial_id: frame.trial_id.clone(),
                theta: frame.theta,
                model_id: model.clone(),
                topk: random_topk(&trial.class_label, 5, rng),
                schema_version: None,
            });
        }
    }
    records.shuffle(rng);
    Fixture {
        manifest,
        records,
        models,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    Pccp,
    Pacp,
    Pibc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    LabelRetained,
    Top1Identity,
    TopkOverlap,
}

/// Every metric/mode pairing the library supports.
pub const COMBINATIONS: [(Metric, Mode); 7] = [
    (Metric::Accuracy, Mode::LabelRetained),
    (Metric::Pccp, Mode::LabelRetained),
    (Metric::Pccp, Mode::Top1Identity),
    (Metric::Pacp, Mode::Top1Identity),
    (Metric::Pacp, Mode::TopkOverlap),
    (Metric::Pibc, Mode::LabelRetained),
    (Metric::Pibc, Mode::Top1Identity),
];

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Pccp => "pccp",
            Metric::Pacp => "pacp",
            Metric::Pibc => "pibc",
        }
    }
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::LabelRetained => "label_retained",
            Mode::Top1Identity => "top1_identity",
            Mode::TopkOverlap => "topk_overlap",
        }
    }
}

/// (estimate, number of eligible trials with a record) at one θ.
pub type OraclePoint = (Option<f64>, usize);

fn labels_k(r: &PredictionRecord, k: usize) -> Vec<&str> {
    r.topk.iter().take(k).map(|(l, _)| l.as_str()).collect()
}

fn top1(r: &PredictionRecord) -> &str {
    &r.topk[0].0
}

/// Brute-force curve for one model.
///
/// A trial counts only if its reference frame has a record. At each grid θ,
/// the denominator is the eligible trials with a record at θ:
/// accuracy and PACP take every trial, PCCP the ones correct at the
/// reference and PIBC the ones incorrect there. The numerator is the trials
/// whose θ prediction is correct (accuracy, PCCP, PIBC) or conserved
/// relative to the reference prediction (PACP).
pub fn oracle_curve(
    records: &[PredictionRecord],
    manifest: &SweepManifest,
    model: &str,
    metric: Metric,
    mode: Mode,
    k: usize,
) -> Vec<OraclePoint> {
    let find = |trial: &str, theta: &FrameTheta| {
        records
            .iter()
            .find(|r| r.model_id == model && r.trial_id == trial && &r.theta == theta)
    };
    let reference_theta = match manifest.axis.reference {
        Reference::Grid(v) => FrameTheta::Value(v),
        Reference::Absent => FrameTheta::Reference,
    };
    let correct = |r: &PredictionRecord, label: &str| match mode {
        Mode::Top1Identity => top1(r) == label,
        _ => labels_k(r, k).contains(&label),
    };

    let mut hits = vec![0usize; manifest.axis.grid.len()];
    let mut n = vec![0usize; manifest.axis.grid.len()];
    for trial in &manifest.trials {
        let label = trial.class_label.as_str();
        let Some(r0) = find(&trial.trial_id, &reference_theta) else {
            continue;
        };
        let eligible = match metric {
            Metric::Accuracy | Metric::Pacp => true,
            Metric::Pccp => correct(r0, label),
            Metric::Pibc => !correct(r0, label),
        };
        if !eligible {
            continue;
        }
        for (j, &theta) in manifest.axis.grid.iter().enumerate() {
            let Some(r) = find(&trial.trial_id, &FrameTheta::Value(theta)) else {
                continue;
            };
            let hit = match (metric, mode) {
                (Metric::Accuracy, _) => labels_k(r, k).contains(&label),
                (Metric::Pccp | Metric::Pibc, _) => correct(r, label),
                (Metric::Pacp, Mode::TopkOverlap) => {
                    let at_reference = labels_k(r0, k);
                    labels_k(r, k).iter().any(|l| at_reference.contains(l))
                }
                (Metric::Pacp, _) => top1(r) == top1(r0),
            };
            n[j] += 1;
            hits[j] += usize::from(hit);
        }
    }
    hits.iter()
        .zip(&n)
        .map(|(&h, &n)| ((n > 0).then(|| h as f64 / n as f64), n))
        .collect()
}

pub fn kind(metric: Metric, mode: Mode, k: usize) -> MetricKind {
    MetricKind::new(
        metric.name().parse().unwrap(),
        k,
        Some(mode.name().parse().unwrap()),
    )
    .unwrap()
}

/// The library curve for `metric`, through its dedicated entry point.
pub fn library_curve(set: &SeriesSet, metric: Metric, mode: Mode, k: usize) -> MetricCurve {
    let kind = kind(metric, mode, k);
    match metric {
        Metric::Accuracy => accuracy_curve(set, k),
        Metric::Pccp => pccp_curve(set, &kind),
        Metric::Pacp => pacp_curve(set, &kind),
        Metric::Pibc => pibc_curve(set, &kind),
    }
    .unwrap()
}
