//! Per-θ accuracy and prediction-conservation metrics over trial series,
//! trial-level bootstrap standard deviations, and interval averages.
//!
//! Every metric reduces to the same shape: a set of eligible trials (fixed by
//! the reference prediction) and, for each eligible trial with a record at θ,
//! a binary outcome. The estimate at θ is the mean outcome, computed from
//! integer counts so that equal rationals give equal doubles. A θ with no
//! eligible record is `None`, never zero.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::predictions::{PredictionRecord, SeriesSet, TrialSeries};
use crate::sweep::VariationAxis;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_RESAMPLES: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("frame '{frame_id}' has {depth} predictions but top-{k} was requested")]
    InsufficientDepth {
        frame_id: String,
        depth: usize,
        k: usize,
    },
    #[error("conservation mode '{mode}' is not defined for {metric}")]
    UnsupportedMode {
        metric: MetricName,
        mode: ConservationMode,
    },
    #[error("series set is empty")]
    EmptySeries,
    #[error("resample count must be at least 1")]
    ZeroResamples,
    #[error("unrecognized metric label '{0}'")]
    BadLabel(String),
    #[error("interval [{lo}, {hi}] is degenerate")]
    DegenerateInterval { lo: f64, hi: f64 },
    #[error("interval [{lo}, {hi}] is outside the grid range [{min}, {max}]")]
    OutsideGrid {
        lo: f64,
        hi: f64,
        min: f64,
        max: f64,
    },
    #[error("curve is undefined at θ = {0} inside the interval")]
    UndefinedInInterval(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Accuracy,
    /// Proportion of correct conserved predictions.
    Pccp,
    /// Proportion of all conserved predictions.
    Pacp,
    /// Proportion of incorrect predictions that become correct.
    Pibc,
}

impl MetricName {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::Accuracy => "accuracy",
            MetricName::Pccp => "pccp",
            MetricName::Pacp => "pacp",
            MetricName::Pibc => "pibc",
        }
    }

    pub fn default_mode(self) -> ConservationMode {
        match self {
            MetricName::Pacp => ConservationMode::Top1Identity,
            _ => ConservationMode::LabelRetained,
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accuracy" => Ok(MetricName::Accuracy),
            "pccp" => Ok(MetricName::Pccp),
            "pacp" => Ok(MetricName::Pacp),
            "pibc" => Ok(MetricName::Pibc),
            _ => Err(MetricError::BadLabel(s.to_string())),
        }
    }
}

/// What counts as a prediction being correct, or conserved between the
/// reference frame and a frame at θ.
///
/// - `LabelRetained`: correct means the true label is in the top k; a
///   correct prediction is conserved while the label stays in the top k.
/// - `Top1Identity`: correct means the top-1 label is the true label;
///   conserved means the top-1 label is unchanged.
/// - `TopkOverlap` (PACP only): conserved means the two top-k lists share
///   at least one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConservationMode {
    LabelRetained,
    Top1Identity,
    TopkOverlap,
}

impl ConservationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ConservationMode::LabelRetained => "label_retained",
            ConservationMode::Top1Identity => "top1_identity",
            ConservationMode::TopkOverlap => "topk_overlap",
        }
    }
}

impl fmt::Display for ConservationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConservationMode {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "label_retained" => Ok(ConservationMode::LabelRetained),
            "top1_identity" => Ok(ConservationMode::Top1Identity),
            "topk_overlap" => Ok(ConservationMode::TopkOverlap),
            _ => Err(MetricError::BadLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetricKind {
    pub metric: MetricName,
    pub k: usize,
    /// Ignored for accuracy.
    pub mode: ConservationMode,
}

impl MetricKind {
    pub fn new(
        metric: MetricName,
        k: usize,
        mode: Option<ConservationMode>,
    ) -> Result<Self, MetricError> {
        if k == 0 {
            return Err(MetricError::ZeroK);
        }
        let mode = mode.unwrap_or(metric.default_mode());
        let supported = match metric {
            MetricName::Accuracy => true,
            MetricName::Pccp | MetricName::Pibc => mode != ConservationMode::TopkOverlap,
            MetricName::Pacp => mode != ConservationMode::LabelRetained,
        };
        if !supported {
            return Err(MetricError::UnsupportedMode { metric, mode });
        }
        let mode = if metric == MetricName::Accuracy {
            ConservationMode::LabelRetained
        } else {
            mode
        };
        Ok(MetricKind { metric, k, mode })
    }

    pub fn accuracy(k: usize) -> Result<Self, MetricError> {
        Self::new(MetricName::Accuracy, k, None)
    }

    /// PCCP with top-5 label retention.
    pub fn pccp() -> Self {
        Self::new(MetricName::Pccp, DEFAULT_K, None).expect("default kind is valid")
    }

    /// Stable text form, e.g. `pccp@5/label_retained` or `accuracy@1`.
    pub fn label(&self) -> String {
        match self.metric {
            MetricName::Accuracy => format!("accuracy@{}", self.k),
            m => format!("{m}@{}/{}", self.k, self.mode),
        }
    }

    /// Whether some record is consulted beyond its top-1 entry.
    fn uses_topk(&self) -> bool {
        self.metric == MetricName::Accuracy || self.mode != ConservationMode::Top1Identity
    }

    fn is_correct(&self, record: &PredictionRecord, label: &str) -> bool {
        match self.mode {
            ConservationMode::Top1Identity => record.top1() == label,
            _ => record.in_topk(label, self.k),
        }
    }

    fn is_conserved(&self, reference: &PredictionRecord, other: &PredictionRecord) -> bool {
        match self.mode {
            ConservationMode::Top1Identity => reference.top1() == other.top1(),
            ConservationMode::TopkOverlap => {
                let at_reference: HashSet<&str> = reference
                    .topk
                    .iter()
                    .take(self.k)
                    .map(|(l, _)| l.as_str())
                    .collect();
                other
                    .topk
                    .iter()
                    .take(self.k)
                    .any(|(l, _)| at_reference.contains(l.as_str()))
            }
            ConservationMode::LabelRetained => {
                unreachable!("label retention is a correctness test")
            }
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for MetricKind {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MetricError::BadLabel(s.to_string());
        let (metric, rest) = s.split_once('@').ok_or_else(bad)?;
        let (k, mode) = match rest.split_once('/') {
            Some((k, mode)) => (k, Some(mode.parse()?)),
            None => (rest, None),
        };
        let metric: MetricName = metric.parse()?;
        let k = k.parse().map_err(|_| bad())?;
        if metric != MetricName::Accuracy && mode.is_none() {
            return Err(bad());
        }
        MetricKind::new(metric, k, mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub theta: f64,
    pub estimate: Option<f64>,
    pub std: Option<f64>,
    pub n_eligible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricCurve {
    pub axis: VariationAxis,
    pub model_id: String,
    pub kind: MetricKind,
    /// One point per grid value, in grid order.
    pub points: Vec<CurvePoint>,
    /// Set when the whole curve is undefined (no eligible trial).
    pub diagnostic: Option<String>,
}

impl MetricCurve {
    pub fn is_undefined(&self) -> bool {
        self.points.iter().all(|p| p.estimate.is_none())
    }

    pub fn estimate_at(&self, theta: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.theta == theta)
            .and_then(|p| p.estimate)
    }
}

/// Eligibility and binary outcomes for one metric, one row per trial.
struct Outcomes {
    eligible: Vec<bool>,
    /// `cells[trial][grid index]`, `None` when the frame has no record.
    cells: Vec<Vec<Option<bool>>>,
}

impl Outcomes {
    fn build(set: &SeriesSet, kind: &MetricKind) -> Result<Self, MetricError> {
        if set.series.is_empty() {
            return Err(MetricError::EmptySeries);
        }
        if kind.k == 0 {
            return Err(MetricError::ZeroK);
        }
        if kind.uses_topk() {
            for record in set.series.iter().flat_map(TrialSeries::records) {
                if record.topk.len() < kind.k {
                    return Err(MetricError::InsufficientDepth {
                        frame_id: record.frame_id.clone(),
                        depth: record.topk.len(),
                        k: kind.k,
                    });
                }
            }
        }
        let grid_len = set.axis.grid.len();
        let mut eligible = Vec::with_capacity(set.series.len());
        let mut cells = Vec::with_capacity(set.series.len());
        for s in &set.series {
            let label = s.true_label.as_str();
            let reference_correct = kind.is_correct(&s.reference_record, label);
            eligible.push(match kind.metric {
                MetricName::Accuracy | MetricName::Pacp => true,
                MetricName::Pccp => reference_correct,
                MetricName::Pibc => !reference_correct,
            });
            let row = (0..grid_len)
                .map(|j| {
                    s.record_at(j).map(|r| match kind.metric {
                        MetricName::Accuracy => r.in_topk(label, kind.k),
                        MetricName::Pccp | MetricName::Pibc => kind.is_correct(r, label),
                        MetricName::Pacp => kind.is_conserved(&s.reference_record, r),
                    })
                })
                .collect();
            cells.push(row);
        }
        Ok(Outcomes { eligible, cells })
    }

    /// (hits, eligible count) at grid index `j`, each trial weighted by its
    /// multiplicity in `weights`.
    fn counts(&self, j: usize, weights: &[usize]) -> (usize, usize) {
        let mut hits = 0;
        let mut n = 0;
        for (t, &w) in weights.iter().enumerate() {
            if w == 0 || !self.eligible[t] {
                continue;
            }
            if let Some(hit) = self.cells[t][j] {
                n += w;
                if hit {
                    hits += w;
                }
            }
        }
        (hits, n)
    }

    fn estimate(&self, j: usize, weights: &[usize]) -> Option<f64> {
        match self.counts(j, weights) {
            (_, 0) => None,
            (hits, n) => Some(hits as f64 / n as f64),
        }
    }

    fn any_eligible(&self) -> bool {
        self.eligible.iter().any(|&e| e)
    }
}

fn no_eligible_diagnostic(kind: &MetricKind) -> String {
    match kind.metric {
        MetricName::Pccp => format!(
            "no trial is correct at the reference under {}; {} is undefined",
            kind.mode, kind.metric
        ),
        MetricName::Pibc => format!(
            "no trial is incorrect at the reference under {}; {} is undefined",
            kind.mode, kind.metric
        ),
        _ => format!("no eligible trials for {}", kind.metric),
    }
}

/// Point estimates of `kind` at every grid value.
pub fn curve(set: &SeriesSet, kind: &MetricKind) -> Result<MetricCurve, MetricError> {
    let outcomes = Outcomes::build(set, kind)?;
    let ones = vec![1; set.series.len()];
    let points = set
        .axis
        .grid
        .iter()
        .enumerate()
        .map(|(j, &theta)| {
            let (_, n) = outcomes.counts(j, &ones);
            CurvePoint {
                theta,
                estimate: outcomes.estimate(j, &ones),
                std: None,
                n_eligible: n,
            }
        })
        .collect();
    Ok(MetricCurve {
        axis: set.axis.clone(),
        model_id: set.model_id.clone(),
        kind: *kind,
        points,
        diagnostic: (!outcomes.any_eligible()).then(|| no_eligible_diagnostic(kind)),
    })
}

/// Top-k accuracy at each θ over all trials.
pub fn accuracy_curve(set: &SeriesSet, k: usize) -> Result<MetricCurve, MetricError> {
    curve(set, &MetricKind::accuracy(k)?)
}

fn require(kind: &MetricKind, metric: MetricName) -> Result<MetricKind, MetricError> {
    MetricKind::new(metric, kind.k, Some(kind.mode))
}

/// Conservation rate at each θ over trials correct at the reference.
pub fn pccp_curve(set: &SeriesSet, kind: &MetricKind) -> Result<MetricCurve, MetricError> {
    curve(set, &require(kind, MetricName::Pccp)?)
}

/// Conservation rate at each θ over all trials.
pub fn pacp_curve(set: &SeriesSet, kind: &MetricKind) -> Result<MetricCurve, MetricError> {
    curve(set, &require(kind, MetricName::Pacp)?)
}

/// Rate at which trials wrong at the reference become correct at θ.
pub fn pibc_curve(set: &SeriesSet, kind: &MetricKind) -> Result<MetricCurve, MetricError> {
    curve(set, &require(kind, MetricName::Pibc)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: DEFAULT_RESAMPLES,
            seed: 0,
        }
    }
}

/// Base seed for a bootstrap run: the user seed hashed together with the
/// sorted trial ids, so results do not depend on trial input order.
fn keyed_seed(seed: u64, sorted_ids: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for id in sorted_ids {
        hasher.update(id.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Population standard deviation, computed on values shifted by the first
/// one so identical inputs give exactly zero.
fn population_std(values: &[f64]) -> Option<f64> {
    let first = *values.first()?;
    let m = values.len() as f64;
    let (s1, s2) = values.iter().fold((0.0, 0.0), |(s1, s2), v| {
        let d = v - first;
        (s1 + d, s2 + d * d)
    });
    Some(((s2 - s1 * s1 / m) / m).max(0.0).sqrt())
}

/// Point estimates of `kind` plus bootstrap standard deviations.
///
/// Each resample draws as many trials as the set holds, with replacement;
/// eligibility travels with the trial, so PCCP and PIBC eligibility is
/// recomputed on every resample. The std at θ is taken over the resamples in
/// which θ has at least one eligible record. Resample `r` uses its own
/// ChaCha stream, so the result does not depend on how resamples are
/// scheduled across threads.
pub fn bootstrap_std(
    set: &SeriesSet,
    kind: &MetricKind,
    config: BootstrapConfig,
) -> Result<MetricCurve, MetricError> {
    if config.resamples == 0 {
        return Err(MetricError::ZeroResamples);
    }
    let mut curve = curve(set, kind)?;
    let outcomes = Outcomes::build(set, kind)?;

    let mut order: Vec<usize> = (0..set.series.len()).collect();
    order.sort_by(|&a, &b| {
        set.series[a]
            .trial
            .trial_id
            .cmp(&set.series[b].trial.trial_id)
    });
    let ids: Vec<&str> = order
        .iter()
        .map(|&i| set.series[i].trial.trial_id.as_str())
        .collect();
    let base = keyed_seed(config.seed, &ids);
    let n = order.len();
    let grid_len = set.axis.grid.len();

    let draws: Vec<Vec<Option<f64>>> = (0..config.resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(base);
            rng.set_stream(r as u64);
            let mut weights = vec![0usize; n];
            for _ in 0..n {
                weights[order[rng.random_range(0..n)]] += 1;
            }
            (0..grid_len)
                .map(|j| outcomes.estimate(j, &weights))
                .collect()
        })
        .collect();

    for (j, point) in curve.points.iter_mut().enumerate() {
        let values: Vec<f64> = draws.iter().filter_map(|d| d[j]).collect();
        point.std = population_std(&values);
    }
    Ok(curve)
}

/// Mean value of the curve over `[lo, hi]` by the trapezoid rule, with
/// linear interpolation where an end falls between grid values.
pub fn interval_integral(curve: &MetricCurve, lo: f64, hi: f64) -> Result<f64, MetricError> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(MetricError::DegenerateInterval { lo, hi });
    }
    let pts = &curve.points;
    let (min, max) = match (pts.first(), pts.last()) {
        (Some(a), Some(b)) => (a.theta, b.theta),
        _ => {
            return Err(MetricError::OutsideGrid {
                lo,
                hi,
                min: f64::NAN,
                max: f64::NAN,
            })
        }
    };
    if lo < min || hi > max {
        return Err(MetricError::OutsideGrid { lo, hi, min, max });
    }

    let value_at = |x: f64| -> Result<f64, MetricError> {
        let i = pts.partition_point(|p| p.theta < x);
        let right = &pts[i];
        let undefined = |p: &CurvePoint| MetricError::UndefinedInInterval(p.theta);
        if right.theta == x {
            return right.estimate.ok_or_else(|| undefined(right));
        }
        let left = &pts[i - 1];
        let yl = left.estimate.ok_or_else(|| undefined(left))?;
        let yr = right.estimate.ok_or_else(|| undefined(right))?;
        Ok(yl + (yr - yl) * (x - left.theta) / (right.theta - left.theta))
    };

    let mut nodes = vec![(lo, value_at(lo)?)];
    for p in pts.iter().filter(|p| p.theta > lo && p.theta < hi) {
        nodes.push((
            p.theta,
            p.estimate
                .ok_or(MetricError::UndefinedInInterval(p.theta))?,
        ));
    }
    nodes.push((hi, value_at(hi)?));

    let area: f64 = nodes
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    Ok(area / (hi - lo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::{AxisName, Reference, SceneTrial};
    use std::collections::BTreeMap;

    fn rec(trial: &str, j: usize, labels: &[&str]) -> PredictionRecord {
        PredictionRecord {
            frame_id: format!("{trial}/{j}"),
            trial_id: trial.into(),
            theta: crate::sweep::FrameTheta::Value(j as f64),
            model_id: "m".into(),
            topk: labels
                .iter()
                .enumerate()
                .map(|(i, l)| (l.to_string(), 1.0 - i as f64 * 0.1))
                .collect(),
            schema_version: None,
        }
    }

    /// `cells[j]` holds the top-k labels of the trial at grid index j;
    /// `None` leaves the frame without a record.
    fn series(id: &str, label: &str, reference: usize, cells: &[Option<&[&str]>]) -> TrialSeries {
        let variation_records: BTreeMap<usize, PredictionRecord> = cells
            .iter()
            .enumerate()
            .filter_map(|(j, c)| c.map(|labels| (j, rec(id, j, labels))))
            .collect();
        TrialSeries {
            trial: SceneTrial {
                trial_id: id.into(),
                object_model_id: id.into(),
                class_label: label.into(),
                lighting_env_id: "l".into(),
                occluder_id: None,
                unit_scale: None,
            },
            model_id: "m".into(),
            true_label: label.into(),
            reference_record: variation_records[&reference].clone(),
            variation_records,
        }
    }

    fn set(grid: Vec<f64>, series: Vec<TrialSeries>) -> SeriesSet {
        SeriesSet {
            axis: VariationAxis {
                name: AxisName::Custom,
                unit: "u".into(),
                grid,
                reference: Reference::Grid(0.0),
            },
            model_id: "m".into(),
            series,
            excluded: vec![],
        }
    }

    fn kind(metric: MetricName, k: usize) -> MetricKind {
        MetricKind::new(metric, k, None).unwrap()
    }

    fn estimates(c: &MetricCurve) -> Vec<Option<f64>> {
        c.points.iter().map(|p| p.estimate).collect()
    }

    #[test]
    fn accuracy_all_correct() {
        let s = set(
            vec![0.0, 1.0, 2.0],
            vec![series(
                "a",
                "cup",
                0,
                &[Some(&["cup"]), Some(&["cup"]), Some(&["cup"])],
            )],
        );
        let c = accuracy_curve(&s, 1).unwrap();
        assert_eq!(estimates(&c), vec![Some(1.0); 3]);
    }

    #[test]
    fn accuracy_two_trials() {
        let s = set(
            vec![0.0, 1.0],
            vec![
                series("a", "cup", 0, &[Some(&["cup"]), Some(&["cup"])]),
                series("b", "cup", 0, &[Some(&["cup"]), Some(&["vase"])]),
            ],
        );
        let c = accuracy_curve(&s, 1).unwrap();
        assert_eq!(estimates(&c), vec![Some(1.0), Some(0.5)]);
    }

    #[test]
    fn accuracy_empty_cell_undefined() {
        let s = set(
            vec![0.0, 1.0],
            vec![series("a", "cup", 0, &[Some(&["cup"]), None])],
        );
        let c = accuracy_curve(&s, 1).unwrap();
        assert_eq!(c.points[1].estimate, None);
        assert_eq!(c.points[1].n_eligible, 0);
    }

    #[test]
    fn accuracy_depth_check() {
        let s = set(
            vec![0.0],
            vec![series("a", "cup", 0, &[Some(&["cup", "vase"])])],
        );
        assert_eq!(
            accuracy_curve(&s, 5).unwrap_err(),
            MetricError::InsufficientDepth {
                frame_id: "a/0".into(),
                depth: 2,
                k: 5
            }
        );
        // Top-1 identity never looks past the first entry.
        let top1 =
            MetricKind::new(MetricName::Pccp, 5, Some(ConservationMode::Top1Identity)).unwrap();
        assert!(pccp_curve(&s, &top1).is_ok());
    }

    /// ψ1 correct at 0, keeps the label at 1, loses it at 2; ψ2 wrong at 0.
    fn pccp_fixture() -> SeriesSet {
        set(
            vec![0.0, 1.0, 2.0],
            vec![
                series(
                    "p1",
                    "cup",
                    0,
                    &[Some(&["cup"]), Some(&["cup"]), Some(&["vase"])],
                ),
                series(
                    "p2",
                    "cup",
                    0,
                    &[Some(&["vase"]), Some(&["vase"]), Some(&["plate"])],
                ),
            ],
        )
    }

    #[test]
    fn pccp_hand_enumeration() {
        let c = pccp_curve(&pccp_fixture(), &kind(MetricName::Pccp, 1)).unwrap();
        // The reference itself is a grid point: conserved with itself.
        assert_eq!(estimates(&c), vec![Some(1.0), Some(1.0), Some(0.0)]);
        assert!(c.points.iter().all(|p| p.n_eligible == 1));
        assert!(c.diagnostic.is_none());
    }

    #[test]
    fn pacp_hand_enumeration() {
        let c = pacp_curve(&pccp_fixture(), &kind(MetricName::Pacp, 1)).unwrap();
        // ψ2 keeps its wrong top-1 at θ=1 and flips it at θ=2.
        assert_eq!(estimates(&c), vec![Some(1.0), Some(1.0), Some(0.0)]);
        assert_eq!(c.points[1].n_eligible, 2);

        let s = set(
            vec![0.0, 1.0, 2.0],
            vec![
                series(
                    "p1",
                    "cup",
                    0,
                    &[Some(&["cup"]), Some(&["cup"]), Some(&["cup"])],
                ),
                series(
                    "p2",
                    "cup",
                    0,
                    &[Some(&["vase"]), Some(&["vase"]), Some(&["plate"])],
                ),
            ],
        );
        let c = pacp_curve(&s, &kind(MetricName::Pacp, 1)).unwrap();
        assert_eq!(c.points[2].estimate, Some(0.5));
    }

    #[test]
    fn pacp_constant_predictor() {
        let labels: &[&str] = &["vase", "cup", "plate"];
        let s = set(
            vec![0.0, 1.0],
            vec![
                series("a", "cup", 0, &[Some(labels), Some(labels)]),
                series("b", "orange", 0, &[Some(labels), Some(labels)]),
            ],
        );
        let overlap =
            MetricKind::new(MetricName::Pacp, 3, Some(ConservationMode::TopkOverlap)).unwrap();
        for k in [kind(MetricName::Pacp, 1), overlap] {
            assert_eq!(estimates(&pacp_curve(&s, &k).unwrap()), vec![Some(1.0); 2]);
        }
    }

    #[test]
    fn topk_overlap_mode() {
        let s = set(
            vec![0.0, 1.0, 2.0],
            vec![series(
                "a",
                "cup",
                0,
                &[
                    Some(&["cup", "vase"]),
                    Some(&["plate", "vase"]),
                    Some(&["plate", "orange"]),
                ],
            )],
        );
        let k = MetricKind::new(MetricName::Pacp, 2, Some(ConservationMode::TopkOverlap)).unwrap();
        assert_eq!(
            estimates(&pacp_curve(&s, &k).unwrap()),
            vec![Some(1.0), Some(1.0), Some(0.0)]
        );
    }

    #[test]
    fn pibc_single_trial() {
        let s = set(
            vec![0.0, 1.0],
            vec![series("a", "cup", 0, &[Some(&["vase"]), Some(&["cup"])])],
        );
        let c = pibc_curve(&s, &kind(MetricName::Pibc, 1)).unwrap();
        assert_eq!(estimates(&c), vec![Some(0.0), Some(1.0)]);
    }

    #[test]
    fn empty_eligibility_gives_diagnostic() {
        let all_wrong = set(
            vec![0.0, 1.0],
            vec![series("a", "cup", 0, &[Some(&["vase"]), Some(&["cup"])])],
        );
        let c = pccp_curve(&all_wrong, &kind(MetricName::Pccp, 1)).unwrap();
        assert!(c.is_undefined());
        assert!(c
            .diagnostic
            .as_deref()
            .unwrap()
            .contains("no trial is correct"));

        let all_right = set(
            vec![0.0, 1.0],
            vec![series("a", "cup", 0, &[Some(&["cup"]), Some(&["cup"])])],
        );
        let c = pibc_curve(&all_right, &kind(MetricName::Pibc, 1)).unwrap();
        assert!(c.is_undefined());
        assert!(c.diagnostic.is_some());
    }

    #[test]
    fn unsupported_modes_rejected() {
        assert!(matches!(
            MetricKind::new(MetricName::Pccp, 5, Some(ConservationMode::TopkOverlap)),
            Err(MetricError::UnsupportedMode { .. })
        ));
        assert!(matches!(
            MetricKind::new(MetricName::Pacp, 5, Some(ConservationMode::LabelRetained)),
            Err(MetricError::UnsupportedMode { .. })
        ));
        assert_eq!(
            MetricKind::new(MetricName::Pibc, 0, None),
            Err(MetricError::ZeroK)
        );
    }

    #[test]
    fn labels_round_trip() {
        for k in [
            MetricKind::pccp(),
            MetricKind::accuracy(1).unwrap(),
            MetricKind::new(MetricName::Pacp, 5, Some(ConservationMode::TopkOverlap)).unwrap(),
            MetricKind::new(MetricName::Pibc, 3, Some(ConservationMode::Top1Identity)).unwrap(),
        ] {
            assert_eq!(k.label().parse::<MetricKind>().unwrap(), k);
        }
        assert_eq!(MetricKind::pccp().label(), "pccp@5/label_retained");
        assert!("pccp@5".parse::<MetricKind>().is_err());
        assert!("nope@5".parse::<MetricKind>().is_err());
    }

    #[test]
    fn bootstrap_identical_trials_zero_std() {
        let cells: &[Option<&[&str]>] = &[Some(&["cup"]), Some(&["vase"]), Some(&["cup"])];
        let s = set(
            vec![0.0, 1.0, 2.0],
            (0..6)
                .map(|i| series(&format!("t{i}"), "cup", 0, cells))
                .collect(),
        );
        for seed in [0, 1, 99] {
            let c = bootstrap_std(
                &s,
                &kind(MetricName::Pccp, 1),
                BootstrapConfig {
                    resamples: 37,
                    seed,
                },
            )
            .unwrap();
            assert!(c.points.iter().all(|p| p.std == Some(0.0)));
        }
    }

    #[test]
    fn bootstrap_two_trial_regression() {
        let s = set(
            vec![0.0, 1.0],
            vec![
                series("a", "cup", 0, &[Some(&["cup"]), Some(&["cup"])]),
                series("b", "cup", 0, &[Some(&["cup"]), Some(&["vase"])]),
            ],
        );
        let c = bootstrap_std(&s, &kind(MetricName::Pccp, 1), BootstrapConfig::default()).unwrap();
        let std = c.points[1].std.unwrap();
        // Exact resampling distribution {0, .5, 1} w.p. {1/4, 1/2, 1/4} has std sqrt(1/8).
        assert!((std - 0.125f64.sqrt()).abs() < 0.05, "{std}");
        assert_eq!(std, FROZEN_TWO_TRIAL_STD);
        assert_eq!(c.points[0].std, Some(0.0));
    }

    /// Seed 0, 100 resamples, trial ids "a" and "b".
    const FROZEN_TWO_TRIAL_STD: f64 = 0.34583232931581165;

    #[test]
    fn bootstrap_order_invariant() {
        let mut s = pccp_fixture();
        let a = bootstrap_std(
            &s,
            &kind(MetricName::Pacp, 1),
            BootstrapConfig {
                resamples: 50,
                seed: 7,
            },
        )
        .unwrap();
        s.series.reverse();
        let b = bootstrap_std(
            &s,
            &kind(MetricName::Pacp, 1),
            BootstrapConfig {
                resamples: 50,
                seed: 7,
            },
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bootstrap_rejects_zero_resamples() {
        assert_eq!(
            bootstrap_std(
                &pccp_fixture(),
                &MetricKind::accuracy(1).unwrap(),
                BootstrapConfig {
                    resamples: 0,
                    seed: 0
                }
            )
            .unwrap_err(),
            MetricError::ZeroResamples
        );
    }

    fn fixed_curve(points: &[(f64, Option<f64>)]) -> MetricCurve {
        MetricCurve {
            axis: VariationAxis {
                name: AxisName::Custom,
                unit: "u".into(),
                grid: points.iter().map(|p| p.0).collect(),
                reference: Reference::Grid(points[0].0),
            },
            model_id: "m".into(),
            kind: MetricKind::pccp(),
            points: points
                .iter()
                .map(|&(theta, estimate)| CurvePoint {
                    theta,
                    estimate,
                    std: None,
                    n_eligible: 1,
                })
                .collect(),
            diagnostic: None,
        }
    }

    #[test]
    fn integral_constant_and_linear() {
        let c = fixed_curve(&[(0.0, Some(1.0)), (10.0, Some(1.0)), (90.0, Some(1.0))]);
        assert_eq!(interval_integral(&c, 0.0, 90.0).unwrap(), 1.0);
        assert_eq!(interval_integral(&c, 3.0, 47.5).unwrap(), 1.0);

        let c = fixed_curve(&[(0.0, Some(0.0)), (90.0, Some(1.0))]);
        assert_eq!(interval_integral(&c, 0.0, 90.0).unwrap(), 0.5);
    }

    #[test]
    fn integral_piecewise() {
        let c = fixed_curve(&[(0.0, Some(1.0)), (15.0, Some(0.5)), (30.0, Some(0.5))]);
        assert_eq!(interval_integral(&c, 0.0, 30.0).unwrap(), 0.625);
        // Interpolated ends: value 0.75 at 7.5, 0.5 at 22.5.
        let expected = (7.5 * (0.75 + 0.5) / 2.0 + 7.5 * 0.5) / 15.0;
        assert!((interval_integral(&c, 7.5, 22.5).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn integral_errors() {
        let c = fixed_curve(&[
            (0.0, Some(1.0)),
            (15.0, None),
            (30.0, Some(0.5)),
            (45.0, Some(0.5)),
        ]);
        assert_eq!(
            interval_integral(&c, 0.0, 30.0).unwrap_err(),
            MetricError::UndefinedInInterval(15.0)
        );
        assert_eq!(
            interval_integral(&c, 5.0, 10.0).unwrap_err(),
            MetricError::UndefinedInInterval(15.0)
        );
        assert_eq!(interval_integral(&c, 30.0, 45.0).unwrap(), 0.5);
        assert!(matches!(
            interval_integral(&c, 10.0, 10.0),
            Err(MetricError::DegenerateInterval { .. })
        ));
        assert!(matches!(
            interval_integral(&c, -1.0, 10.0),
            Err(MetricError::OutsideGrid { .. })
        ));
    }

    #[test]
    fn population_std_basics() {
        assert_eq!(population_std(&[]), None);
        assert_eq!(population_std(&[0.3; 10]), Some(0.0));
        assert_eq!(population_std(&[0.0, 1.0]), Some(0.5));
    }
}
