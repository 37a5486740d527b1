//! Prediction logs: the JSON Lines records a model runner emits, one per
//! rendered frame, and their join against a sweep manifest.
//!
//! Each line carries `frame_id`, `trial_id`, `theta` (a number, or the string
//! `"reference"` for the occluder-absent frame), `model_id` and `topk`, an
//! array of `[label, score]` pairs in descending score order. Scores are kept
//! exactly as written; only the ranking is used downstream.
//!
//! A record whose `trial_id` is `"__meta__"` is runner provenance and is kept
//! aside verbatim rather than validated as a prediction.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::sweep::{FrameSlot, FrameTheta, SceneTrial, SweepManifest, VariationAxis};

pub const META_TRIAL_ID: &str = "__meta__";
pub const LOG_SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRecord {
    pub frame_id: String,
    pub trial_id: String,
    pub theta: FrameTheta,
    pub model_id: String,
    pub topk: Vec<(String, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u64>,
}

impl PredictionRecord {
    pub fn top1(&self) -> &str {
        &self.topk[0].0
    }

    /// Whether `label` is among the first `k` predictions.
    pub fn in_topk(&self, label: &str, k: usize) -> bool {
        self.topk.iter().take(k).any(|(l, _)| l == label)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    fn check(&self) -> Result<(), LogErrorKind> {
        if self.topk.is_empty() {
            return Err(LogErrorKind::EmptyTopk);
        }
        let mut seen = HashSet::new();
        for (i, (label, score)) in self.topk.iter().enumerate() {
            if !score.is_finite() {
                return Err(LogErrorKind::NonFiniteScore { position: i });
            }
            if i > 0 && *score > self.topk[i - 1].1 {
                return Err(LogErrorKind::NonDescendingScores { position: i });
            }
            if !seen.insert(label.as_str()) {
                return Err(LogErrorKind::DuplicateLabel(label.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogErrorKind {
    #[error("read failure: {0}")]
    Io(String),
    #[error("line is not valid UTF-8")]
    NotUtf8,
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("record must be a JSON object")]
    NotObject,
    #[error("missing required field '{0}'")]
    MissingField(&'static str),
    #[error("field '{field}' must be {expected}")]
    InvalidField {
        field: &'static str,
        expected: &'static str,
    },
    #[error("unsupported schema_version {0}")]
    SchemaVersion(u64),
    #[error("topk is empty")]
    EmptyTopk,
    #[error("topk score at position {position} is not finite")]
    NonFiniteScore { position: usize },
    #[error("topk score at position {position} exceeds the previous score")]
    NonDescendingScores { position: usize },
    #[error("topk repeats label '{0}'")]
    DuplicateLabel(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct LogError {
    /// 1-based line number.
    pub line: usize,
    pub kind: LogErrorKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Abort on the first bad line.
    #[default]
    Strict,
    /// Collect every bad line and keep the good ones.
    Lenient,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedLog {
    pub records: Vec<PredictionRecord>,
    pub meta: Vec<Map<String, Value>>,
    pub errors: Vec<LogError>,
}

/// Parses a prediction log. In strict mode the first bad line is returned as
/// the error; in lenient mode bad lines are collected in `errors`.
pub fn parse_log<R: BufRead>(mut reader: R, mode: ParseMode) -> Result<ParsedLog, LogError> {
    let mut out = ParsedLog::default();
    let mut buf = Vec::new();
    let mut line = 0;
    loop {
        buf.clear();
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => break,
            Ok(_) => {}
            Err(e) => {
                return Err(LogError {
                    line: line + 1,
                    kind: LogErrorKind::Io(e.to_string()),
                })
            }
        }
        line += 1;
        let parsed = match std::str::from_utf8(&buf) {
            Ok(text) if text.trim().is_empty() => continue,
            Ok(text) => parse_line(text),
            Err(_) => Err(LogErrorKind::NotUtf8),
        };
        match parsed {
            Ok(Line::Record(r)) => out.records.push(r),
            Ok(Line::Meta(m)) => out.meta.push(m),
            Err(kind) => {
                let err = LogError { line, kind };
                if mode == ParseMode::Strict {
                    return Err(err);
                }
                out.errors.push(err);
            }
        }
    }
    Ok(out)
}

enum Line {
    Record(PredictionRecord),
    Meta(Map<String, Value>),
}

fn parse_line(text: &str) -> Result<Line, LogErrorKind> {
    let value: Value = serde_json::from_str(text).map_err(|e| LogErrorKind::Json(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(LogErrorKind::NotObject);
    };
    if obj.get("trial_id").and_then(Value::as_str) == Some(META_TRIAL_ID) {
        return Ok(Line::Meta(obj));
    }

    let string = |field: &'static str| -> Result<String, LogErrorKind> {
        match obj.get(field) {
            None => Err(LogErrorKind::MissingField(field)),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(LogErrorKind::InvalidField {
                field,
                expected: "a string",
            }),
        }
    };
    let frame_id = string("frame_id")?;
    let trial_id = string("trial_id")?;
    let theta = match obj.get("theta") {
        None => return Err(LogErrorKind::MissingField("theta")),
        Some(Value::String(s)) if s == "reference" => FrameTheta::Reference,
        Some(Value::Number(n)) => {
            FrameTheta::Value(n.as_f64().ok_or(LogErrorKind::InvalidField {
                field: "theta",
                expected: "a finite number",
            })?)
        }
        Some(_) => {
            return Err(LogErrorKind::InvalidField {
                field: "theta",
                expected: "a number or \"reference\"",
            })
        }
    };
    let model_id = string("model_id")?;
    let bad_topk = LogErrorKind::InvalidField {
        field: "topk",
        expected: "an array of [label, score] pairs",
    };
    let topk = match obj.get("topk") {
        None => return Err(LogErrorKind::MissingField("topk")),
        Some(Value::Array(items)) => items
            .iter()
            .map(|item| match item.as_array().map(Vec::as_slice) {
                Some([Value::String(l), Value::Number(s)]) => {
                    s.as_f64().map(|s| (l.clone(), s)).ok_or(bad_topk.clone())
                }
                _ => Err(bad_topk.clone()),
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(bad_topk),
    };
    let schema_version = match obj.get("schema_version") {
        None => None,
        Some(v) => match v.as_u64() {
            Some(LOG_SCHEMA_VERSION) => Some(LOG_SCHEMA_VERSION),
            Some(other) => return Err(LogErrorKind::SchemaVersion(other)),
            None => {
                return Err(LogErrorKind::InvalidField {
                    field: "schema_version",
                    expected: "an integer",
                })
            }
        },
    };
    let record = PredictionRecord {
        frame_id,
        trial_id,
        theta,
        model_id,
        topk,
        schema_version,
    };
    record.check()?;
    Ok(Line::Record(record))
}

pub fn write_log<W: Write>(records: &[PredictionRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_json_line())?;
    }
    Ok(())
}

/// Model ids in order of first appearance.
pub fn model_ids(records: &[PredictionRecord]) -> Vec<String> {
    let mut ids: Vec<String> = Vec::new();
    for r in records {
        if !ids.contains(&r.model_id) {
            ids.push(r.model_id.clone());
        }
    }
    ids
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum Issue {
    NoRecords,
    UnknownFrame {
        frame_id: String,
        model_id: String,
    },
    DuplicateFrame {
        frame_id: String,
        model_id: String,
        count: usize,
    },
    /// The frame exists but the record's trial or θ disagrees with it.
    FrameMismatch {
        frame_id: String,
        model_id: String,
        expected_trial: String,
        expected_theta: FrameTheta,
        found_trial: String,
        found_theta: FrameTheta,
    },
    MissingFrame {
        model_id: String,
        trial_id: String,
        theta: FrameTheta,
        frame_id: String,
    },
    /// Predicted labels outside the manifest label set. Expected for an
    /// ImageNet classifier (distractor classes), so never fatal.
    LabelOutsideSet {
        label: String,
        occurrences: usize,
    },
}

impl Issue {
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            Issue::UnknownFrame { .. } | Issue::DuplicateFrame { .. } | Issue::FrameMismatch { .. }
        )
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::NoRecords => f.write_str("log contains no prediction records"),
            Issue::UnknownFrame { frame_id, model_id } => {
                write!(f, "[{model_id}] unknown frame '{frame_id}'")
            }
            Issue::DuplicateFrame {
                frame_id,
                model_id,
                count,
            } => write!(f, "[{model_id}] frame '{frame_id}' appears {count} times"),
            Issue::FrameMismatch {
                frame_id,
                model_id,
                expected_trial,
                expected_theta,
                found_trial,
                found_theta,
            } => write!(
                f,
                "[{model_id}] frame '{frame_id}' belongs to ({expected_trial}, {expected_theta}) \
                 but the record says ({found_trial}, {found_theta})"
            ),
            Issue::MissingFrame {
                model_id,
                trial_id,
                theta,
                ..
            } => write!(f, "[{model_id}] missing ({trial_id}, {theta})"),
            Issue::LabelOutsideSet { label, occurrences } => {
                write!(
                    f,
                    "label '{label}' outside the label set ({occurrences} predictions)"
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialCompleteness {
    pub model_id: String,
    pub trial_id: String,
    pub present: usize,
    pub expected: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
    pub completeness: Vec<TrialCompleteness>,
}

impl ValidationReport {
    pub fn is_fatal(&self) -> bool {
        self.issues.iter().any(Issue::is_fatal)
    }

    pub fn fatal_count(&self) -> usize {
        self.issues.iter().filter(|i| i.is_fatal()).count()
    }

    pub fn missing(&self) -> impl Iterator<Item = &Issue> {
        self.issues
            .iter()
            .filter(|i| matches!(i, Issue::MissingFrame { .. }))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Checks a log against a manifest. Never fails; every problem is an issue in
/// the report, with unknown, duplicated and mismatched frames marked fatal.
pub fn validate_against_manifest(
    records: &[PredictionRecord],
    manifest: &SweepManifest,
) -> ValidationReport {
    let frames = manifest.enumerate_frames();
    let by_id: HashMap<&str, usize> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| (f.frame_id.as_str(), i))
        .collect();
    let labels: HashSet<&str> = manifest.label_set.iter().map(String::as_str).collect();

    let mut report = ValidationReport::default();
    if records.is_empty() {
        report.issues.push(Issue::NoRecords);
        return report;
    }

    // (model, frame index) -> number of records
    let mut counts: BTreeMap<(&str, usize), usize> = BTreeMap::new();
    let mut unknown: BTreeMap<(&str, &str), ()> = BTreeMap::new();
    let mut outside: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        for (label, _) in &r.topk {
            if !labels.contains(label.as_str()) {
                *outside.entry(label.as_str()).or_default() += 1;
            }
        }
        let Some(&fi) = by_id.get(r.frame_id.as_str()) else {
            unknown.insert((r.model_id.as_str(), r.frame_id.as_str()), ());
            continue;
        };
        let frame = &frames[fi];
        if frame.trial_id != r.trial_id || !frame.theta.matches(&r.theta) {
            report.issues.push(Issue::FrameMismatch {
                frame_id: r.frame_id.clone(),
                model_id: r.model_id.clone(),
                expected_trial: frame.trial_id.clone(),
                expected_theta: frame.theta,
                found_trial: r.trial_id.clone(),
                found_theta: r.theta,
            });
            continue;
        }
        *counts.entry((r.model_id.as_str(), fi)).or_default() += 1;
    }

    for (model_id, frame_id) in unknown.into_keys() {
        report.issues.push(Issue::UnknownFrame {
            frame_id: frame_id.to_string(),
            model_id: model_id.to_string(),
        });
    }
    for (&(model_id, fi), &count) in &counts {
        if count > 1 {
            report.issues.push(Issue::DuplicateFrame {
                frame_id: frames[fi].frame_id.clone(),
                model_id: model_id.to_string(),
                count,
            });
        }
    }

    let per_trial = manifest.frames_per_trial();
    for model_id in model_ids(records) {
        for (ti, trial) in manifest.trials.iter().enumerate() {
            let mut present = 0;
            let start = ti * per_trial;
            for (fi, frame) in frames.iter().enumerate().skip(start).take(per_trial) {
                if counts.contains_key(&(model_id.as_str(), fi)) {
                    present += 1;
                } else {
                    report.issues.push(Issue::MissingFrame {
                        model_id: model_id.clone(),
                        trial_id: trial.trial_id.clone(),
                        theta: frame.theta,
                        frame_id: frame.frame_id.clone(),
                    });
                }
            }
            report.completeness.push(TrialCompleteness {
                model_id: model_id.clone(),
                trial_id: trial.trial_id.clone(),
                present,
                expected: per_trial,
                fraction: present as f64 / per_trial as f64,
            });
        }
    }

    for (label, occurrences) in outside {
        report.issues.push(Issue::LabelOutsideSet {
            label: label.to_string(),
            occurrences,
        });
    }
    report
}

/// One trial's predictions for one model, joined with its reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSeries {
    pub trial: SceneTrial,
    pub model_id: String,
    pub true_label: String,
    pub reference_record: PredictionRecord,
    /// Grid index -> record.
    pub variation_records: BTreeMap<usize, PredictionRecord>,
}

impl TrialSeries {
    pub fn record_at(&self, grid_index: usize) -> Option<&PredictionRecord> {
        self.variation_records.get(&grid_index)
    }

    pub fn records(&self) -> impl Iterator<Item = &PredictionRecord> {
        std::iter::once(&self.reference_record).chain(self.variation_records.values())
    }
}

/// All trial series of one model along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSet {
    pub axis: VariationAxis,
    pub model_id: String,
    pub series: Vec<TrialSeries>,
    /// Trials dropped because their reference frame has no record.
    pub excluded: Vec<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("log has {0} fatal validation issue(s)")]
    FatalValidation(usize),
    #[error("no trial of model '{0}' has a reference record")]
    NoReference(String),
}

/// Joins the records of `model_id` into per-trial series, in manifest trial
/// order. Records are matched to frames by `frame_id`.
pub fn build_trial_series(
    records: &[PredictionRecord],
    manifest: &SweepManifest,
    model_id: &str,
) -> Result<SeriesSet, SeriesError> {
    let report = validate_against_manifest(records, manifest);
    if report.is_fatal() {
        return Err(SeriesError::FatalValidation(report.fatal_count()));
    }
    let frames = manifest.enumerate_frames();
    let by_id: HashMap<&str, usize> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| (f.frame_id.as_str(), i))
        .collect();

    let mut per_trial: Vec<(Option<PredictionRecord>, BTreeMap<usize, PredictionRecord>)> =
        vec![(None, BTreeMap::new()); manifest.trials.len()];
    let reference_slot = manifest.reference_slot();
    for r in records.iter().filter(|r| r.model_id == model_id) {
        let Some(&fi) = by_id.get(r.frame_id.as_str()) else {
            continue;
        };
        let frame = &frames[fi];
        let (reference, variations) = &mut per_trial[frame.trial_index];
        if frame.slot == reference_slot {
            *reference = Some(r.clone());
        }
        if let FrameSlot::Grid(i) = frame.slot {
            variations.insert(i, r.clone());
        }
    }

    let mut series = Vec::new();
    let mut excluded = Vec::new();
    for (trial, (reference, variations)) in manifest.trials.iter().zip(per_trial) {
        match reference {
            Some(reference_record) => series.push(TrialSeries {
                trial: trial.clone(),
                model_id: model_id.to_string(),
                true_label: trial.class_label.clone(),
                reference_record,
                variation_records: variations,
            }),
            None => excluded.push(trial.trial_id.clone()),
        }
    }
    if series.is_empty() {
        return Err(SeriesError::NoReference(model_id.to_string()));
    }
    Ok(SeriesSet {
        axis: manifest.axis.clone(),
        model_id: model_id.to_string(),
        series,
        excluded,
    })
}

/// One series set per model id found in the log.
pub fn series_by_model(
    records: &[PredictionRecord],
    manifest: &SweepManifest,
) -> Result<Vec<SeriesSet>, SeriesError> {
    model_ids(records)
        .iter()
        .map(|m| build_trial_series(records, manifest, m))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::{plan_axis, AxisOverrides, Reference};

    fn manifest(reference: Reference) -> SweepManifest {
        let trials = ["a", "b", "c"]
            .iter()
            .map(|id| SceneTrial {
                trial_id: id.to_string(),
                object_model_id: format!("cup_{id}"),
                class_label: "cup".into(),
                lighting_env_id: "hdri_01".into(),
                occluder_id: None,
                unit_scale: None,
            })
            .collect();
        plan_axis(
            "custom",
            trials,
            &AxisOverrides {
                grid: Some(vec![0.0, 1.0, 2.0]),
                reference: Some(reference),
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn full_log(m: &SweepManifest) -> Vec<PredictionRecord> {
        m.enumerate_frames()
            .into_iter()
            .map(|f| PredictionRecord {
                frame_id: f.frame_id,
                trial_id: f.trial_id,
                theta: f.theta,
                model_id: "net".into(),
                topk: vec![("cup".into(), 0.9), ("plate".into(), 0.05)],
                schema_version: None,
            })
            .collect()
    }

    const LINE: &str = r#"{"frame_id":"a/custom/000","trial_id":"a","theta":0,"model_id":"net","topk":[["cup",0.6],["plate",0.2],["vase",0.1],["orange",0.05],["pillow",0.05]]}"#;

    #[test]
    fn parses_single_line() {
        let log = parse_log(LINE.as_bytes(), ParseMode::Strict).unwrap();
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.records[0].topk.len(), 5);
        assert_eq!(log.records[0].theta, FrameTheta::Value(0.0));
    }

    #[test]
    fn empty_input_is_empty_log() {
        let log = parse_log(&b""[..], ParseMode::Strict).unwrap();
        assert!(log.records.is_empty() && log.errors.is_empty());
        let log = parse_log(&b"\n  \n"[..], ParseMode::Strict).unwrap();
        assert!(log.records.is_empty());
    }

    #[test]
    fn truncated_line_reported_with_number() {
        let text = format!("{LINE}\n{LINE}\n{}\n", &LINE[..40]);
        let err = parse_log(text.as_bytes(), ParseMode::Strict).unwrap_err();
        assert_eq!(err.line, 3);
        assert!(matches!(err.kind, LogErrorKind::Json(_)));

        let log = parse_log(text.as_bytes(), ParseMode::Lenient).unwrap();
        assert_eq!(log.records.len(), 2);
        assert_eq!(log.errors.len(), 1);
        assert_eq!(log.errors[0].line, 3);
    }

    #[test]
    fn record_level_errors() {
        let cases = [
            (
                LINE.replace(r#""model_id":"net","#, ""),
                LogErrorKind::MissingField("model_id"),
            ),
            (
                LINE.replace("0.6", "0.01"),
                LogErrorKind::NonDescendingScores { position: 1 },
            ),
            (
                LINE.replace("plate", "cup"),
                LogErrorKind::DuplicateLabel("cup".into()),
            ),
            (
                LINE.replace(r#""theta":0"#, r#""theta":"ref""#),
                LogErrorKind::InvalidField {
                    field: "theta",
                    expected: "a number or \"reference\"",
                },
            ),
            ("[1,2]".to_string(), LogErrorKind::NotObject),
        ];
        for (line, expected) in cases {
            let err = parse_log(line.as_bytes(), ParseMode::Strict).unwrap_err();
            assert_eq!(err.kind, expected, "{line}");
        }
        let empty = LINE.replace(
            r#"[["cup",0.6],["plate",0.2],["vase",0.1],["orange",0.05],["pillow",0.05]]"#,
            "[]",
        );
        assert_eq!(
            parse_log(empty.as_bytes(), ParseMode::Strict)
                .unwrap_err()
                .kind,
            LogErrorKind::EmptyTopk
        );
    }

    #[test]
    fn ties_are_accepted_in_emitted_order() {
        let log = parse_log(LINE.as_bytes(), ParseMode::Strict).unwrap();
        assert_eq!(log.records[0].topk[3].0, "orange");
        assert_eq!(log.records[0].topk[4].0, "pillow");
    }

    #[test]
    fn meta_record_kept_aside() {
        let meta = r#"{"trial_id":"__meta__","model_id":"net","input_size":224}"#;
        let text = format!("{meta}\n{LINE}\n");
        let log = parse_log(text.as_bytes(), ParseMode::Strict).unwrap();
        assert_eq!(log.meta.len(), 1);
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.meta[0]["input_size"], 224);
    }

    #[test]
    fn reference_theta_token() {
        let line = LINE.replace(r#""theta":0"#, r#""theta":"reference""#);
        let log = parse_log(line.as_bytes(), ParseMode::Strict).unwrap();
        assert_eq!(log.records[0].theta, FrameTheta::Reference);
        assert!(log.records[0]
            .to_json_line()
            .contains(r#""theta":"reference""#));
    }

    #[test]
    fn complete_log_validates() {
        let m = manifest(Reference::Grid(0.0));
        let report = validate_against_manifest(&full_log(&m), &m);
        assert!(!report.is_fatal());
        assert_eq!(report.missing().count(), 0);
        assert!(report.completeness.iter().all(|c| c.fraction == 1.0));
        // "plate" is outside the label set: a warning only.
        assert!(matches!(
            report.issues[..],
            [Issue::LabelOutsideSet { occurrences: 9, .. }]
        ));
    }

    #[test]
    fn missing_frame_reported() {
        let m = manifest(Reference::Grid(0.0));
        let mut log = full_log(&m);
        let dropped = log.remove(4);
        let report = validate_against_manifest(&log, &m);
        let missing: Vec<_> = report.missing().collect();
        assert_eq!(missing.len(), 1);
        assert!(
            matches!(missing[0], Issue::MissingFrame { trial_id, frame_id, .. }
            if *trial_id == dropped.trial_id && *frame_id == dropped.frame_id)
        );
        let b = report
            .completeness
            .iter()
            .find(|c| c.trial_id == "b")
            .unwrap();
        assert_eq!(b.fraction, 2.0 / 3.0);
    }

    #[test]
    fn duplicates_and_unknowns_are_fatal() {
        let m = manifest(Reference::Grid(0.0));
        let mut log = full_log(&m);
        log.push(log[0].clone());
        let report = validate_against_manifest(&log, &m);
        assert!(report.is_fatal());
        assert!(report
            .issues
            .iter()
            .any(|i| matches!(i, Issue::DuplicateFrame { count: 2, .. })));

        let mut log = full_log(&m);
        log[0].frame_id = "zzz".into();
        assert!(validate_against_manifest(&log, &m)
            .issues
            .iter()
            .any(|i| matches!(i, Issue::UnknownFrame { .. })));

        let mut log = full_log(&m);
        log[1].theta = FrameTheta::Value(2.0);
        assert!(validate_against_manifest(&log, &m)
            .issues
            .iter()
            .any(|i| matches!(i, Issue::FrameMismatch { .. })));

        assert_eq!(
            build_trial_series(&log, &m, "net").unwrap_err(),
            SeriesError::FatalValidation(1)
        );
    }

    #[test]
    fn same_frame_different_models_is_fine() {
        let m = manifest(Reference::Grid(0.0));
        let mut log = full_log(&m);
        let mut other = full_log(&m);
        other.iter_mut().for_each(|r| r.model_id = "net2".into());
        log.extend(other);
        let report = validate_against_manifest(&log, &m);
        assert!(!report.is_fatal());
        assert_eq!(report.completeness.len(), 6);
        assert_eq!(series_by_model(&log, &m).unwrap().len(), 2);
    }

    #[test]
    fn series_cardinality() {
        let m = manifest(Reference::Grid(0.0));
        let set = build_trial_series(&full_log(&m), &m, "net").unwrap();
        assert_eq!(set.series.len(), 3);
        assert!(set.series.iter().all(|s| s.variation_records.len() == 3));
        assert!(set.excluded.is_empty());
    }

    #[test]
    fn trial_without_reference_excluded() {
        let m = manifest(Reference::Grid(0.0));
        let log: Vec<_> = full_log(&m)
            .into_iter()
            .filter(|r| r.frame_id != "b/custom/000")
            .collect();
        let set = build_trial_series(&log, &m, "net").unwrap();
        assert_eq!(set.series.len(), 2);
        assert_eq!(set.excluded, vec!["b".to_string()]);
    }

    #[test]
    fn no_reference_anywhere_is_error() {
        let m = manifest(Reference::Grid(0.0));
        let log: Vec<_> = full_log(&m)
            .into_iter()
            .filter(|r| r.theta != FrameTheta::Value(0.0))
            .collect();
        assert_eq!(
            build_trial_series(&log, &m, "net").unwrap_err(),
            SeriesError::NoReference("net".into())
        );
    }

    #[test]
    fn occlusion_reference_is_absent_frame() {
        let m = manifest(Reference::Absent);
        let log = full_log(&m);
        assert_eq!(log.len(), 12);
        let set = build_trial_series(&log, &m, "net").unwrap();
        for s in &set.series {
            assert_eq!(s.reference_record.theta, FrameTheta::Reference);
            assert!(s.reference_record.frame_id.ends_with("/ref"));
            assert_eq!(s.variation_records.len(), 3);
        }
    }

    #[test]
    fn series_independent_of_record_order() {
        let m = manifest(Reference::Grid(1.0));
        let log = full_log(&m);
        let mut rev = log.clone();
        rev.reverse();
        assert_eq!(
            build_trial_series(&log, &m, "net").unwrap(),
            build_trial_series(&rev, &m, "net").unwrap()
        );
    }
}
