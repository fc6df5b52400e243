//! Trials, labels, displacement features and the on-disk dataset formats.
//!
//! The canonical dataset file is line-delimited JSON. Line 1 is a header
//! carrying the shared frame capacity, joint layout, provenance and seed;
//! every following line is one trial. Feature matrices can additionally be
//! cached in a flat little-endian binary file (see [`encode_feature_cache`]).

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::seed;

/// Frame capacity of the reference dataset.
pub const DEFAULT_T_MAX: usize = 394;

/// Frame or trial label. `0` marks compensatory motion, `1` normal motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Compensatory = 0,
    Normal = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn is_compensatory(self) -> bool {
        self == Label::Compensatory
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Label::Compensatory),
            1 => Ok(Label::Normal),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

/// Trial label implied by frame labels: compensatory iff any frame is.
pub fn trial_label_of(frame_labels: &[Label]) -> Label {
    frame_labels.iter().copied().min().unwrap_or(Label::Normal)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Affected,
    Unaffected,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Affected => "affected",
            Side::Unaffected => "unaffected",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coord {
    X = 0,
    Y = 1,
}

/// Ordered joints; each contributes an x and a y feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointLayout {
    joints: Vec<String>,
}

impl Default for JointLayout {
    fn default() -> Self {
        Self::upper_body()
    }
}

impl JointLayout {
    pub const UPPER_BODY: [&'static str; 8] = [
        "Head",
        "Neck",
        "ShoulderRight",
        "ElbowRight",
        "WristRight",
        "ShoulderLeft",
        "ElbowLeft",
        "WristLeft",
    ];

    pub fn upper_body() -> Self {
        Self {
            joints: Self::UPPER_BODY.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn new(joints: Vec<String>) -> Result<Self> {
        let layout = Self { joints };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.is_empty() {
            return Err(Error::Data("joint layout is empty".into()));
        }
        let mut seen = HashSet::new();
        for j in &self.joints {
            if !seen.insert(j.as_str()) {
                return Err(Error::Data(format!("duplicate joint `{j}` in layout")));
            }
        }
        Ok(())
    }

    pub fn joints(&self) -> &[String] {
        &self.joints
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn feature_count(&self) -> usize {
        2 * self.joints.len()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j == name)
    }

    pub fn feature_index(&self, joint: usize, coord: Coord) -> usize {
        2 * joint + coord as usize
    }

    /// Column names in feature order, e.g. `HeadX`, `HeadY`, `NeckX`, ...
    pub fn feature_names(&self) -> Vec<String> {
        self.joints
            .iter()
            .flat_map(|j| [format!("{j}X"), format!("{j}Y")])
            .collect()
    }
}

/// Raw per-frame 2D keypoints of one exercise trial, in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointTrial {
    pub trial_id: String,
    pub patient_id: String,
    pub side: Side,
    pub frames: Vec<Vec<[f64; 2]>>,
    pub frame_labels: Vec<Label>,
    pub trial_label: Label,
}

impl KeypointTrial {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self, layout: &JointLayout, t_max: usize) -> Result<()> {
        let id = &self.trial_id;
        if self.frames.is_empty() {
            return Err(Error::Data(format!("trial {id}: no frames")));
        }
        if self.frames.len() > t_max {
            return Err(Error::Data(format!(
                "trial {id}: {} frames exceeds capacity {t_max}",
                self.frames.len()
            )));
        }
        if self.frame_labels.len() != self.frames.len() {
            return Err(Error::Data(format!(
                "trial {id}: {} frame labels for {} frames",
                self.frame_labels.len(),
                self.frames.len()
            )));
        }
        for (t, frame) in self.frames.iter().enumerate() {
            if frame.len() != layout.joint_count() {
                return Err(Error::Data(format!(
                    "trial {id}: frame {t} has {} keypoints, layout has {} joints",
                    frame.len(),
                    layout.joint_count()
                )));
            }
            if frame.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("trial {id}: non-finite coordinate at frame {t}")));
            }
        }
        if self.trial_label != trial_label_of(&self.frame_labels) {
            return Err(Error::Data(format!(
                "trial {id}: trial_label {} inconsistent with frame labels",
                self.trial_label.as_u8()
            )));
        }
        Ok(())
    }
}

/// Dense row-major `rows x cols` matrix of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Contract(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// Displacement features of one trial, `T x F`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrial {
    pub trial_id: String,
    pub features: Matrix,
    /// Frame count before padding.
    pub original_length: usize,
    pub frame_labels: Vec<Label>,
    pub trial_label: Label,
}

impl FeatureTrial {
    pub fn frames(&self) -> usize {
        self.features.rows()
    }

    pub fn is_padded(&self, t: usize) -> bool {
        t >= self.original_length
    }

    /// Network input: the feature matrix flattened row-major.
    pub fn input(&self) -> &[f64] {
        self.features.as_slice()
    }
}

/// Signed per-coordinate displacement of every joint from its position in frame 0.
pub fn extract_features(trial: &KeypointTrial, layout: &JointLayout) -> Result<FeatureTrial> {
    trial.validate(layout, usize::MAX)?;
    let f = layout.feature_count();
    let origin = &trial.frames[0];
    let mut features = Matrix::zeros(trial.len(), f);
    for (t, frame) in trial.frames.iter().enumerate() {
        let row = features.row_mut(t);
        for (j, (p, p0)) in frame.iter().zip(origin).enumerate() {
            row[2 * j] = p[0] - p0[0];
            row[2 * j + 1] = p[1] - p0[1];
        }
    }
    Ok(FeatureTrial {
        trial_id: trial.trial_id.clone(),
        features,
        original_length: trial.len(),
        frame_labels: trial.frame_labels.clone(),
        trial_label: trial.trial_label,
    })
}

/// Extends a trial to `t_max` frames with zero-displacement rows labeled normal.
pub fn pad_trial(f: FeatureTrial, t_max: usize) -> Result<FeatureTrial> {
    let len = f.frames();
    if len > t_max {
        return Err(Error::Data(format!(
            "trial {}: {len} frames exceeds capacity {t_max}",
            f.trial_id
        )));
    }
    if len == t_max {
        return Ok(f);
    }
    let cols = f.features.cols();
    let mut data = f.features.into_vec();
    data.resize(t_max * cols, 0.0);
    let mut frame_labels = f.frame_labels;
    frame_labels.resize(t_max, Label::Normal);
    Ok(FeatureTrial {
        trial_id: f.trial_id,
        features: Matrix::from_vec(t_max, cols, data)?,
        original_length: f.original_length,
        frame_labels,
        trial_label: f.trial_label,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Synthetic,
    Ingested,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub t_max: usize,
    pub layout: JointLayout,
    pub provenance: Provenance,
    pub seed: u64,
    pub trials: Vec<KeypointTrial>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::Data("t_max must be positive".into()));
        }
        self.layout.validate()?;
        let mut ids = HashSet::new();
        for trial in &self.trials {
            if !ids.insert(trial.trial_id.as_str()) {
                return Err(Error::Data(format!("duplicate trial_id `{}`", trial.trial_id)));
            }
            trial.validate(&self.layout, self.t_max)?;
        }
        Ok(())
    }

    /// Featurizes and pads every trial to `t_max`.
    pub fn features(&self) -> Result<Vec<FeatureTrial>> {
        self.trials
            .iter()
            .map(|t| extract_features(t, &self.layout).and_then(|f| pad_trial(f, self.t_max)))
            .collect()
    }

    fn subset(&self, indices: &[usize]) -> DatasetManifest {
        DatasetManifest {
            t_max: self.t_max,
            layout: self.layout.clone(),
            provenance: self.provenance,
            seed: self.seed,
            trials: indices.iter().map(|&i| self.trials[i].clone()).collect(),
        }
    }
}

/// Seeded trial-level partition of `n` items. Both index lists come back sorted.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::Data("cannot split an empty dataset".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_dataset(
    manifest: &DatasetManifest,
    train_fraction: f64,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    let (train, test) = split_indices(manifest.trials.len(), train_fraction, seed)?;
    Ok((manifest.subset(&train), manifest.subset(&test)))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    t_max: usize,
    joints: Vec<String>,
    provenance: Provenance,
    seed: u64,
}

/// Renders the manifest as JSON lines: a header line, then one trial per line.
pub fn dataset_to_string(manifest: &DatasetManifest) -> String {
    let header = Header {
        t_max: manifest.t_max,
        joints: manifest.layout.joints().to_vec(),
        provenance: manifest.provenance,
        seed: manifest.seed,
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for trial in &manifest.trials {
        out.push_str(&serde_json::to_string(trial).expect("trial serializes"));
        out.push('\n');
    }
    out
}

pub fn save_dataset(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(dataset_to_string(manifest).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

fn take_field<T: serde::de::DeserializeOwned>(
    obj: &mut serde_json::Map<String, Value>,
    line: usize,
    field: &str,
) -> Result<T> {
    let v = obj.remove(field).ok_or_else(|| Error::record(line, field, "missing"))?;
    serde_json::from_value(v).map_err(|e| Error::record(line, field, e.to_string()))
}

fn parse_object(line_text: &str, line: usize) -> Result<serde_json::Map<String, Value>> {
    match serde_json::from_str::<Value>(line_text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(Error::record(line, "<record>", "expected a JSON object")),
        Err(e) => Err(Error::record(line, "<record>", e.to_string())),
    }
}

fn parse_trial(line_text: &str, line: usize, layout: &JointLayout, t_max: usize) -> Result<KeypointTrial> {
    let mut obj = parse_object(line_text, line)?;
    let trial = KeypointTrial {
        trial_id: take_field(&mut obj, line, "trial_id")?,
        patient_id: take_field(&mut obj, line, "patient_id")?,
        side: take_field(&mut obj, line, "side")?,
        frames: take_field(&mut obj, line, "frames")?,
        frame_labels: take_field(&mut obj, line, "frame_labels")?,
        trial_label: take_field(&mut obj, line, "trial_label")?,
    };
    if let Some(extra) = obj.keys().next() {
        return Err(Error::record(line, extra, "unknown field"));
    }
    let n = trial.frames.len();
    if n == 0 || n > t_max {
        return Err(Error::record(
            line,
            "frames",
            format!("{n} frames, expected 1..={t_max}"),
        ));
    }
    if trial.frame_labels.len() != n {
        return Err(Error::record(
            line,
            "frame_labels",
            format!("{} labels for {n} frames", trial.frame_labels.len()),
        ));
    }
    if let Some(t) = trial.frames.iter().position(|f| f.len() != layout.joint_count()) {
        return Err(Error::record(
            line,
            "frames",
            format!(
                "frame {t} has {} keypoints, layout has {} joints",
                trial.frames[t].len(),
                layout.joint_count()
            ),
        ));
    }
    if let Some(t) = trial
        .frames
        .iter()
        .position(|f| f.iter().flatten().any(|v| !v.is_finite()))
    {
        return Err(Error::record(
            line,
            "frames",
            format!("non-finite coordinate at frame {t}"),
        ));
    }
    if trial.trial_label != trial_label_of(&trial.frame_labels) {
        return Err(Error::record(line, "trial_label", "inconsistent with frame_labels"));
    }
    Ok(trial)
}

/// Parses the JSON-lines dataset format. Errors name the 1-based line and field.
pub fn parse_dataset(text: &str) -> Result<DatasetManifest> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let (hline, htext) = lines
        .next()
        .ok_or_else(|| Error::Data("dataset file is empty".into()))?;
    let mut hobj = parse_object(htext, hline)?;
    let header = Header {
        t_max: take_field(&mut hobj, hline, "t_max")?,
        joints: take_field(&mut hobj, hline, "joints")?,
        provenance: take_field(&mut hobj, hline, "provenance")?,
        seed: take_field(&mut hobj, hline, "seed")?,
    };
    if let Some(extra) = hobj.keys().next() {
        return Err(Error::record(hline, extra, "unknown field"));
    }
    if header.t_max == 0 {
        return Err(Error::record(hline, "t_max", "must be positive"));
    }
    let layout = JointLayout::new(header.joints).map_err(|e| Error::record(hline, "joints", e.to_string()))?;

    let mut trials = Vec::new();
    let mut ids = HashSet::new();
    for (line, l) in lines {
        let trial = parse_trial(l, line, &layout, header.t_max)?;
        if !ids.insert(trial.trial_id.clone()) {
            return Err(Error::record(
                line,
                "trial_id",
                format!("duplicate `{}`", trial.trial_id),
            ));
        }
        trials.push(trial);
    }
    Ok(DatasetManifest {
        t_max: header.t_max,
        layout,
        provenance: header.provenance,
        seed: header.seed,
        trials,
    })
}

const CACHE_MAGIC: [u8; 8] = *b"MSFEAT01";
const CACHE_HEADER_LEN: usize = 16;

/// Decoded binary feature cache: a sequence of `t_max x features` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub t_max: usize,
    pub features: usize,
    pub matrices: Vec<Matrix>,
}

/// Header (8-byte magic, `u32` LE frame capacity, `u32` LE feature count)
/// followed by every matrix as row-major little-endian `f64`.
pub fn encode_feature_cache(trials: &[FeatureTrial]) -> Result<Vec<u8>> {
    let (t_max, f) = trials
        .first()
        .map(|t| (t.features.rows(), t.features.cols()))
        .unwrap_or((0, 0));
    if trials
        .iter()
        .any(|t| t.features.rows() != t_max || t.features.cols() != f)
    {
        return Err(Error::Contract("feature cache requires equally shaped matrices".into()));
    }
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Contract(format!("{what} {v} does not fit the cache header")))
    };
    let mut out = Vec::with_capacity(CACHE_HEADER_LEN + trials.len() * t_max * f * 8);
    out.extend_from_slice(&CACHE_MAGIC);
    out.extend_from_slice(&to_u32(t_max, "t_max")?.to_le_bytes());
    out.extend_from_slice(&to_u32(f, "feature count")?.to_le_bytes());
    for t in trials {
        for v in t.features.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_feature_cache(bytes: &[u8]) -> Result<FeatureCache> {
    if bytes.len() < CACHE_HEADER_LEN {
        return Err(Error::Data(format!("feature cache truncated: {} bytes", bytes.len())));
    }
    if bytes[..8] != CACHE_MAGIC {
        return Err(Error::Data("feature cache: bad magic".into()));
    }
    let t_max = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let features = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[CACHE_HEADER_LEN..];
    let stride = t_max
        .checked_mul(features)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::Data("feature cache: header shape overflows".into()))?;
    if stride == 0 {
        if !body.is_empty() {
            return Err(Error::Data("feature cache: data present for an empty shape".into()));
        }
        return Ok(FeatureCache {
            t_max,
            features,
            matrices: Vec::new(),
        });
    }
    if !body.len().is_multiple_of(stride) {
        return Err(Error::Data(format!(
            "feature cache: body of {} bytes is not a multiple of {stride}",
            body.len()
        )));
    }
    let mut matrices = Vec::with_capacity(body.len() / stride);
    for chunk in body.chunks_exact(stride) {
        let data: Vec<f64> = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("feature cache: non-finite value".into()));
        }
        matrices.push(Matrix::from_vec(t_max, features, data)?);
    }
    Ok(FeatureCache {
        t_max,
        features,
        matrices,
    })
}
