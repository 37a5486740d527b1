//! Sweep manifests: one variation axis, the trials swept along it, and the
//! frame identifiers a renderer and a model runner agree on.
//!
//! A manifest fixes the grid of the swept scene parameter, the reference
//! condition every counterfactual comparison is made against, and the set of
//! trials (object model, lighting environment, optional occluder) that the
//! metrics average over.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Default frame identifier template. `{index}` is the zero-padded grid index,
/// or `ref` for the occluder-absent reference frame.
pub const DEFAULT_FRAME_ID_TEMPLATE: &str = "{trial_id}/{axis}/{index}";

pub const DEFAULT_OCCLUDER_POSITIONS: usize = 13;

#[derive(Debug, Error, PartialEq)]
pub enum SweepError {
    #[error("unknown axis name '{0}'")]
    UnknownAxis(String),
    #[error("grid is empty")]
    EmptyGrid,
    #[error("grid value {0} is not finite")]
    NonFiniteGrid(f64),
    #[error("grid is not strictly increasing at index {index} ({prev} then {next})")]
    NotIncreasing { index: usize, prev: f64, next: f64 },
    #[error("periodic axis value {0} lies outside [0, 360)")]
    OutOfPeriod(f64),
    #[error("reference {0} is not a grid value")]
    ReferenceNotInGrid(f64),
    #[error("axis '{0}' has no reference condition")]
    MissingReference(AxisName),
    #[error("custom axis requires an explicit grid")]
    MissingGrid,
    #[error("occluder position count must be odd so the centre position is included, got {0}")]
    InvalidOccluderCount(usize),
    #[error("trial list is empty")]
    NoTrials,
    #[error("duplicate trial id '{0}'")]
    DuplicateTrialId(String),
    #[error("trials '{first}' and '{second}' share object model, lighting and occluder")]
    DuplicateTrialIdentity { first: String, second: String },
    #[error("trial '{trial}' has class label '{label}' outside the label set")]
    LabelOutsideSet { trial: String, label: String },
    #[error("label set contains '{0}' twice")]
    DuplicateLabel(String),
    #[error("frame id template must contain {{trial_id}} and {{index}}: '{0}'")]
    BadTemplate(String),
    #[error("frame id '{0}' is generated more than once")]
    DuplicateFrameId(String),
    #[error("unsupported schema version {0}")]
    SchemaVersion(u32),
    #[error("unknown manifest keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("invalid manifest JSON: {0}")]
    Json(String),
}

/// The scene parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisName {
    ObjectRotation,
    CameraPanorama,
    ObjectScale,
    CameraElevation,
    OccluderPosition,
    Custom,
}

impl AxisName {
    pub const ALL: [AxisName; 6] = [
        AxisName::ObjectRotation,
        AxisName::CameraPanorama,
        AxisName::ObjectScale,
        AxisName::CameraElevation,
        AxisName::OccluderPosition,
        AxisName::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AxisName::ObjectRotation => "object_rotation",
            AxisName::CameraPanorama => "camera_panorama",
            AxisName::ObjectScale => "object_scale",
            AxisName::CameraElevation => "camera_elevation",
            AxisName::OccluderPosition => "occluder_position",
            AxisName::Custom => "custom",
        }
    }

    /// Full-turn axes whose values are angles modulo 360.
    pub fn is_periodic(self) -> bool {
        matches!(self, AxisName::ObjectRotation | AxisName::CameraPanorama)
    }

    pub fn default_unit(self) -> &'static str {
        match self {
            AxisName::ObjectRotation | AxisName::CameraPanorama | AxisName::CameraElevation => {
                "degrees"
            }
            AxisName::ObjectScale => "scale-factor",
            AxisName::OccluderPosition => "normalized-x",
            AxisName::Custom => "custom",
        }
    }
}

impl fmt::Display for AxisName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AxisName {
    type Err = SweepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AxisName::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| SweepError::UnknownAxis(s.to_string()))
    }
}

/// Reference condition of an axis: a grid value, or a dedicated frame with
/// the varied element removed (the occluder-absent scene).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    Grid(f64),
    Absent,
}

impl Serialize for Reference {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Reference::Grid(v) => serializer.serialize_f64(*v),
            Reference::Absent => serializer.serialize_str("absent"),
        }
    }
}

impl<'de> Deserialize<'de> for Reference {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Ok(Reference::Grid(v)),
            Raw::Str(s) if s == "absent" => Ok(Reference::Absent),
            Raw::Str(s) => Err(de::Error::custom(format!(
                "reference must be a number or \"absent\", got \"{s}\""
            ))),
        }
    }
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reference::Grid(v) => write!(f, "{v}"),
            Reference::Absent => f.write_str("absent"),
        }
    }
}

impl FromStr for Reference {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "absent" {
            return Ok(Reference::Absent);
        }
        s.parse::<f64>()
            .map(Reference::Grid)
            .map_err(|_| format!("expected a number or 'absent', got '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationAxis {
    pub name: AxisName,
    pub unit: String,
    pub grid: Vec<f64>,
    pub reference: Reference,
}

impl VariationAxis {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.grid.is_empty() {
            return Err(SweepError::EmptyGrid);
        }
        for &v in &self.grid {
            if !v.is_finite() {
                return Err(SweepError::NonFiniteGrid(v));
            }
            if self.name.is_periodic() && !(0.0..360.0).contains(&v) {
                return Err(SweepError::OutOfPeriod(v));
            }
        }
        for (i, w) in self.grid.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(SweepError::NotIncreasing {
                    index: i + 1,
                    prev: w[0],
                    next: w[1],
                });
            }
        }
        if let Reference::Grid(r) = self.reference {
            if self.reference_index().is_none() {
                return Err(SweepError::ReferenceNotInGrid(r));
            }
        }
        Ok(())
    }

    /// Grid index of the reference condition, `None` when the reference is
    /// the separate absent frame.
    pub fn reference_index(&self) -> Option<usize> {
        match self.reference {
            Reference::Grid(r) => self.grid.iter().position(|&v| v == r),
            Reference::Absent => None,
        }
    }

    pub fn index_of(&self, theta: f64) -> Option<usize> {
        self.grid.iter().position(|&v| v == theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTrial {
    pub trial_id: String,
    pub object_model_id: String,
    pub class_label: String,
    pub lighting_env_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occluder_id: Option<String>,
    /// Simulator-provided unit scale of the object model. Carried as metadata.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub schema_version: u32,
    pub axis: VariationAxis,
    pub trials: Vec<SceneTrial>,
    #[serde(default)]
    pub constants: BTreeMap<String, String>,
    pub label_set: Vec<String>,
    pub frame_id_template: String,
}

/// θ coordinate of a frame as it appears in prediction logs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrameTheta {
    Value(f64),
    Reference,
}

impl Serialize for FrameTheta {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            FrameTheta::Value(v) => serializer.serialize_f64(*v),
            FrameTheta::Reference => serializer.serialize_str("reference"),
        }
    }
}

impl FrameTheta {
    /// Same frame coordinate, allowing for decimal round-off in runner output.
    pub fn matches(&self, other: &FrameTheta) -> bool {
        match (self, other) {
            (FrameTheta::Reference, FrameTheta::Reference) => true,
            (FrameTheta::Value(a), FrameTheta::Value(b)) => {
                (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
            }
            _ => false,
        }
    }
}

impl fmt::Display for FrameTheta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameTheta::Value(v) => write!(f, "{v}"),
            FrameTheta::Reference => f.write_str("reference"),
        }
    }
}

/// Position of a frame within a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameSlot {
    /// The dedicated reference frame of an axis whose reference is absent.
    Reference,
    Grid(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: String,
    pub trial_index: usize,
    pub trial_id: String,
    pub slot: FrameSlot,
    pub theta: FrameTheta,
}

/// Optional replacements for an axis' default grid and reference.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AxisOverrides {
    pub grid: Option<Vec<f64>>,
    pub reference: Option<Reference>,
    pub unit: Option<String>,
    /// Number of occluder positions in [-1, 1]; only used by `occluder_position`.
    pub occluder_positions: Option<usize>,
}

/// Default grid of an axis. `Custom` has none.
pub fn default_grid(name: AxisName, occluder_positions: usize) -> Result<Vec<f64>, SweepError> {
    let grid = match name {
        // 360 is the same pose as 0 and is left out.
        AxisName::ObjectRotation => (0..24).map(|i| (i * 15) as f64).collect(),
        AxisName::CameraPanorama => (0..12).map(|i| (i * 30) as f64).collect(),
        // Built from integer hundredths so every value is the closest double
        // to its decimal spelling.
        AxisName::ObjectScale => (0..17).map(|i| (20 + 5 * i) as f64 / 100.0).collect(),
        AxisName::CameraElevation => (0..19).map(|i| (i * 5) as f64).collect(),
        AxisName::OccluderPosition => occluder_grid(occluder_positions)?,
        AxisName::Custom => return Err(SweepError::MissingGrid),
    };
    Ok(grid)
}

fn occluder_grid(count: usize) -> Result<Vec<f64>, SweepError> {
    if count.is_multiple_of(2) {
        return Err(SweepError::InvalidOccluderCount(count));
    }
    if count == 1 {
        return Ok(vec![0.0]);
    }
    let half = (count / 2) as f64;
    Ok((0..count).map(|i| (i as f64 - half) / half).collect())
}

pub fn default_reference(name: AxisName) -> Option<Reference> {
    match name {
        AxisName::ObjectRotation | AxisName::CameraPanorama => Some(Reference::Grid(0.0)),
        AxisName::ObjectScale => Some(Reference::Grid(1.0)),
        AxisName::CameraElevation => Some(Reference::Grid(45.0)),
        AxisName::OccluderPosition => Some(Reference::Absent),
        AxisName::Custom => None,
    }
}

/// Builds the default (or overridden) axis for `name`.
pub fn build_axis(name: AxisName, overrides: &AxisOverrides) -> Result<VariationAxis, SweepError> {
    let grid = match &overrides.grid {
        Some(g) => g.clone(),
        None => default_grid(
            name,
            overrides
                .occluder_positions
                .unwrap_or(DEFAULT_OCCLUDER_POSITIONS),
        )?,
    };
    let reference = overrides
        .reference
        .or_else(|| default_reference(name))
        .ok_or(SweepError::MissingReference(name))?;
    let axis = VariationAxis {
        name,
        unit: overrides
            .unit
            .clone()
            .unwrap_or_else(|| name.default_unit().to_string()),
        grid,
        reference,
    };
    axis.validate()?;
    Ok(axis)
}

/// Plans a sweep along `axis_name` for `trials`.
///
/// The label set is the trials' class labels in order of first appearance;
/// constants start empty and the default frame id template is used.
pub fn plan_axis(
    axis_name: &str,
    trials: Vec<SceneTrial>,
    overrides: &AxisOverrides,
) -> Result<SweepManifest, SweepError> {
    let name: AxisName = axis_name.parse()?;
    let axis = build_axis(name, overrides)?;
    let mut label_set: Vec<String> = Vec::new();
    for t in &trials {
        if !label_set.contains(&t.class_label) {
            label_set.push(t.class_label.clone());
        }
    }
    let manifest = SweepManifest {
        schema_version: SCHEMA_VERSION,
        axis,
        trials,
        constants: BTreeMap::new(),
        label_set,
        frame_id_template: DEFAULT_FRAME_ID_TEMPLATE.to_string(),
    };
    manifest.validate()?;
    Ok(manifest)
}

impl SweepManifest {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SweepError::SchemaVersion(self.schema_version));
        }
        self.axis.validate()?;
        if self.trials.is_empty() {
            return Err(SweepError::NoTrials);
        }
        let mut labels = HashSet::new();
        for l in &self.label_set {
            if !labels.insert(l.as_str()) {
                return Err(SweepError::DuplicateLabel(l.clone()));
            }
        }
        let mut ids = HashSet::new();
        let mut identities: BTreeMap<(&str, &str, Option<&str>), &str> = BTreeMap::new();
        for t in &self.trials {
            if !ids.insert(t.trial_id.as_str()) {
                return Err(SweepError::DuplicateTrialId(t.trial_id.clone()));
            }
            let key = (
                t.object_model_id.as_str(),
                t.lighting_env_id.as_str(),
                t.occluder_id.as_deref(),
            );
            if let Some(first) = identities.insert(key, t.trial_id.as_str()) {
                return Err(SweepError::DuplicateTrialIdentity {
                    first: first.to_string(),
                    second: t.trial_id.clone(),
                });
            }
            if !labels.contains(t.class_label.as_str()) {
                return Err(SweepError::LabelOutsideSet {
                    trial: t.trial_id.clone(),
                    label: t.class_label.clone(),
                });
            }
        }
        if !self.frame_id_template.contains("{trial_id}")
            || !self.frame_id_template.contains("{index}")
        {
            return Err(SweepError::BadTemplate(self.frame_id_template.clone()));
        }
        let mut seen = HashSet::new();
        for f in self.enumerate_frames() {
            if !seen.insert(f.frame_id.clone()) {
                return Err(SweepError::DuplicateFrameId(f.frame_id));
            }
        }
        Ok(())
    }

    pub fn frames_per_trial(&self) -> usize {
        self.axis.grid.len() + usize::from(self.axis.reference == Reference::Absent)
    }

    pub fn frame_count(&self) -> usize {
        self.trials.len() * self.frames_per_trial()
    }

    pub fn frame_id(&self, trial: &SceneTrial, slot: FrameSlot) -> String {
        let width = self
            .axis
            .grid
            .len()
            .saturating_sub(1)
            .to_string()
            .len()
            .max(3);
        let index = match slot {
            FrameSlot::Reference => "ref".to_string(),
            FrameSlot::Grid(i) => format!("{i:0width$}"),
        };
        self.frame_id_template
            .replace("{trial_id}", &trial.trial_id)
            .replace("{axis}", self.axis.name.as_str())
            .replace("{index}", &index)
    }

    /// Frames in render order: trials in declaration order; within a trial
    /// the reference frame (when the reference is absent) precedes the grid
    /// in ascending θ.
    pub fn enumerate_frames(&self) -> Vec<Frame> {
        let absent = self.axis.reference == Reference::Absent;
        let mut frames = Vec::with_capacity(self.frame_count());
        for (trial_index, trial) in self.trials.iter().enumerate() {
            if absent {
                frames.push(Frame {
                    frame_id: self.frame_id(trial, FrameSlot::Reference),
                    trial_index,
                    trial_id: trial.trial_id.clone(),
                    slot: FrameSlot::Reference,
                    theta: FrameTheta::Reference,
                });
            }
            for (i, &theta) in self.axis.grid.iter().enumerate() {
                frames.push(Frame {
                    frame_id: self.frame_id(trial, FrameSlot::Grid(i)),
                    trial_index,
                    trial_id: trial.trial_id.clone(),
                    slot: FrameSlot::Grid(i),
                    theta: FrameTheta::Value(theta),
                });
            }
        }
        frames
    }

    /// Slot holding the reference prediction of each trial.
    pub fn reference_slot(&self) -> FrameSlot {
        match self.axis.reference_index() {
            Some(i) => FrameSlot::Grid(i),
            None => FrameSlot::Reference,
        }
    }

    pub fn with_constants(mut self, constants: BTreeMap<String, String>) -> Self {
        self.constants = constants;
        self
    }

    pub fn with_frame_id_template(
        mut self,
        template: impl Into<String>,
    ) -> Result<Self, SweepError> {
        self.frame_id_template = template.into();
        self.validate()?;
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Parses and validates a manifest. Unknown keys are returned as warnings,
    /// or rejected when `strict` is set.
    pub fn from_json(text: &str, strict: bool) -> Result<(Self, Vec<String>), SweepError> {
        let mut unknown = Vec::new();
        let mut de = serde_json::Deserializer::from_str(text);
        let manifest: SweepManifest = serde_ignored::deserialize(&mut de, |path| {
            unknown.push(path.to_string());
        })
        .map_err(|e| SweepError::Json(e.to_string()))?;
        de.end().map_err(|e| SweepError::Json(e.to_string()))?;
        if strict && !unknown.is_empty() {
            return Err(SweepError::UnknownKeys(unknown));
        }
        manifest.validate()?;
        let warnings = unknown
            .into_iter()
            .map(|k| format!("ignoring unknown manifest key '{k}'"))
            .collect();
        Ok((manifest, warnings))
    }
}
