//! From input gradients to per-frame scores.
//!
//! Raw frame score = sum of absolute gradient entries across the frame's
//! features. Normalized scores are min-max scaled over a pooled frame set, so
//! the same frame can normalize differently under different selections.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::{FeatureTrial, Label, Matrix};
use crate::error::{Error, Result};
use crate::nn::TrainedModel;

/// Raw dL/dx of one trial, reshaped to `frames x features`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMatrix {
    pub trial_id: String,
    pub values: Matrix,
}

/// Gradient of the loss at the trial's own trial-level label.
pub fn compute_saliency(model: &TrainedModel, trial: &FeatureTrial) -> Result<SaliencyMatrix> {
    let arch = &model.architecture;
    if trial.features.rows() != arch.frames || trial.features.cols() != arch.features {
        return Err(Error::Contract(format!(
            "trial {} is {}x{}, model expects {}x{}",
            trial.trial_id,
            trial.features.rows(),
            trial.features.cols(),
            arch.frames,
            arch.features
        )));
    }
    let grad = model.input_gradient(trial.input(), trial.trial_label)?;
    Ok(SaliencyMatrix {
        trial_id: trial.trial_id.clone(),
        values: Matrix::from_vec(arch.frames, arch.features, grad)?,
    })
}

/// Per-frame sum of absolute gradient values.
pub fn frame_aggregate(s: &SaliencyMatrix) -> Vec<f64> {
    (0..s.values.rows())
        .map(|t| s.values.row(t).iter().map(|v| v.abs()).sum())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameScoreTrack {
    pub trial_id: String,
    pub trial_label: Label,
    pub frame_labels: Vec<Label>,
    pub padded: Vec<bool>,
    pub raw_scores: Vec<f64>,
    pub normalized_scores: Option<Vec<f64>>,
}

impl FrameScoreTrack {
    pub fn from_saliency(s: &SaliencyMatrix, trial: &FeatureTrial) -> Self {
        let raw_scores = frame_aggregate(s);
        Self {
            trial_id: trial.trial_id.clone(),
            trial_label: trial.trial_label,
            frame_labels: trial.frame_labels.clone(),
            padded: (0..raw_scores.len()).map(|t| trial.is_padded(t)).collect(),
            raw_scores,
            normalized_scores: None,
        }
    }

    pub fn len(&self) -> usize {
        self.raw_scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw_scores.is_empty()
    }

    pub fn original_length(&self) -> usize {
        self.padded.iter().filter(|&&p| !p).count()
    }
}

/// Saliency and frame scores for every trial.
pub fn explain_trials(model: &TrainedModel, trials: &[FeatureTrial]) -> Result<Vec<(SaliencyMatrix, FrameScoreTrack)>> {
    trials
        .iter()
        .map(|t| {
            let s = compute_saliency(model, t)?;
            let track = FrameScoreTrack::from_saliency(&s, t);
            Ok((s, track))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    /// Index of the trial in the track list the pool was built from.
    pub trial: usize,
    pub frame: usize,
    pub raw: f64,
    pub normalized: f64,
    pub label: Label,
    pub padded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledScoreSet {
    pub trial_ids: Vec<String>,
    /// Ordered by trial, then frame.
    pub entries: Vec<PoolEntry>,
    pub pool_min: f64,
    pub pool_max: f64,
}

/// Min-max scaling; a degenerate range maps everything to 0.
pub fn min_max(values: &[f64]) -> (f64, f64, Vec<f64>) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let out = if hi > lo {
        let span = hi - lo;
        values.iter().map(|v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; values.len()]
    };
    (lo, hi, out)
}

/// Selects frames with `select(track, frame)` and min-max normalizes them as one pool.
pub fn pool_and_normalize<F>(tracks: &[FrameScoreTrack], select: F) -> Result<PooledScoreSet>
where
    F: Fn(&FrameScoreTrack, usize) -> bool,
{
    let mut entries = Vec::new();
    for (ti, tr) in tracks.iter().enumerate() {
        for t in 0..tr.len() {
            if select(tr, t) {
                entries.push(PoolEntry {
                    trial: ti,
                    frame: t,
                    raw: tr.raw_scores[t],
                    normalized: 0.0,
                    label: tr.frame_labels[t],
                    padded: tr.padded[t],
                });
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::Contract("frame selection is empty".into()));
    }
    let raws: Vec<f64> = entries.iter().map(|e| e.raw).collect();
    let (pool_min, pool_max, normalized) = min_max(&raws);
    for (e, n) in entries.iter_mut().zip(normalized) {
        e.normalized = n;
    }
    Ok(PooledScoreSet {
        trial_ids: tracks.iter().map(|t| t.trial_id.clone()).collect(),
        entries,
        pool_min,
        pool_max,
    })
}

/// Fills every track's `normalized_scores` from one pool over all frames.
pub fn normalize_all(tracks: &mut [FrameScoreTrack]) -> Result<()> {
    let pool = pool_and_normalize(tracks, |_, _| true)?;
    for tr in tracks.iter_mut() {
        tr.normalized_scores = Some(vec![0.0; tr.len()]);
    }
    for e in &pool.entries {
        tracks[e.trial].normalized_scores.as_mut().unwrap()[e.frame] = e.normalized;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub score: f64,
    pub label: Label,
}

/// Non-overlapping windows of `w` consecutive scores, final partial window kept.
/// Score = mean; label = majority, with ties going to compensatory.
pub fn window_aggregate(scores: &[f64], labels: &[Label], w: usize) -> Result<Vec<Window>> {
    if w == 0 {
        return Err(Error::Contract("window size must be at least 1".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::Contract("scores and labels differ in length".into()));
    }
    Ok(scores
        .chunks(w)
        .zip(labels.chunks(w))
        .map(|(s, l)| {
            let comp = l.iter().filter(|x| x.is_compensatory()).count();
            Window {
                score: s.iter().sum::<f64>() / s.len() as f64,
                label: if 2 * comp >= l.len() {
                    Label::Compensatory
                } else {
                    Label::Normal
                },
            }
        })
        .collect())
}

/// Windows each trial's selected frames separately; windows never cross trials.
pub fn window_pool(pool: &PooledScoreSet, w: usize) -> Result<Vec<Window>> {
    let mut out = Vec::new();
    let mut start = 0;
    let entries = &pool.entries;
    while start < entries.len() {
        let trial = entries[start].trial;
        let end = start + entries[start..].iter().take_while(|e| e.trial == trial).count();
        let scores: Vec<f64> = entries[start..end].iter().map(|e| e.normalized).collect();
        let labels: Vec<Label> = entries[start..end].iter().map(|e| e.label).collect();
        out.extend(window_aggregate(&scores, &labels, w)?);
        start = end;
    }
    Ok(out)
}

/// Per-cell importance in `[0, 1]`: |gradient| min-max scaled over the whole matrix.
pub fn heatmap_matrix(s: &SaliencyMatrix) -> Matrix {
    let abs: Vec<f64> = s.values.as_slice().iter().map(|v| v.abs()).collect();
    let (_, _, scaled) = min_max(&abs);
    Matrix::from_vec(s.values.rows(), s.values.cols(), scaled).expect("shape preserved")
}

pub fn heatmap_to_string(m: &Matrix, feature_names: &[String]) -> Result<String> {
    if feature_names.len() != m.cols() {
        return Err(Error::Contract(format!(
            "{} feature names for {} columns",
            feature_names.len(),
            m.cols()
        )));
    }
    let mut out = String::from("frame");
    for n in feature_names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for t in 0..m.rows() {
        write!(out, "{t}").unwrap();
        for v in m.row(t) {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes a `frames x features` grid as CSV with a feature-name header and a frame-index column.
pub fn export_heatmap(m: &Matrix, feature_names: &[String], path: &Path) -> Result<()> {
    let text = heatmap_to_string(m, feature_names)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a heatmap CSV back into feature names and the value grid.
pub fn parse_heatmap(text: &str) -> Result<(Vec<String>, Matrix)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("heatmap header: {e}")))?
        .clone();
    if headers.get(0) != Some("frame") || headers.len() < 2 {
        return Err(Error::Data(
            "heatmap header must start with `frame` and name features".into(),
        ));
    }
    let names: Vec<String> = headers.iter().skip(1).map(String::from).collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::record(line, "<record>", e.to_string()))?;
        if rec.len() != names.len() + 1 {
            return Err(Error::record(
                line,
                "<record>",
                format!("{} columns, expected {}", rec.len(), names.len() + 1),
            ));
        }
        let frame: usize = rec[0]
            .parse()
            .map_err(|_| Error::record(line, "frame", format!("not an index: {:?}", &rec[0])))?;
        if frame != rows {
            return Err(Error::record(line, "frame", format!("expected {rows}, got {frame}")));
        }
        for (name, field) in names.iter().zip(rec.iter().skip(1)) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::record(line, name, format!("not a number: {field:?}")))?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = names.len();
    Ok((names, Matrix::from_vec(rows, cols, data)?))
}

const SCORE_HEADER: [&str; 6] = [
    "trial_id",
    "frame_index",
    "raw_score",
    "normalized_score",
    "frame_label",
    "padded",
];

/// Score file: one row per (trial, frame). Tracks without normalized scores leave that column empty.
pub fn scores_to_string(tracks: &[FrameScoreTrack]) -> String {
    let mut out = SCORE_HEADER.join(",");
    out.push('\n');
    for tr in tracks {
        for t in 0..tr.len() {
            let norm = tr
                .normalized_scores
                .as_ref()
                .map(|n| n[t].to_string())
                .unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                tr.trial_id,
                t,
                tr.raw_scores[t],
                norm,
                tr.frame_labels[t].as_u8(),
                u8::from(tr.padded[t])
            )
            .unwrap();
        }
    }
    out
}

pub fn write_scores(tracks: &[FrameScoreTrack], path: &Path) -> Result<()> {
    fs::write(path, scores_to_string(tracks)).map_err(|e| Error::io(path, e))
}

pub fn read_scores(path: &Path) -> Result<Vec<FrameScoreTrack>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scores(&text)
}

fn parse_flag(line: usize, field: &str, s: &str) -> Result<u8> {
    match s {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::record(line, field, format!("expected 0 or 1, got {other:?}"))),
    }
}

/// Parses a score file. Rows of a trial must be contiguous with frame indices 0, 1, 2, ...
/// Trial labels are recovered as the minimum frame label.
pub fn parse_scores(text: &str) -> Result<Vec<FrameScoreTrack>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("score header: {e}")))?;
    if headers.iter().ne(SCORE_HEADER.iter().copied()) {
        return Err(Error::Data(format!(
            "score header must be `{}`",
            SCORE_HEADER.join(",")
        )));
    }
    let mut tracks: Vec<FrameScoreTrack> = Vec::new();
    let mut any_missing_norm = false;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::record(line, "<record>", e.to_string()))?;
        let id = &rec[0];
        let frame: usize = rec[1]
            .parse()
            .map_err(|_| Error::record(line, "frame_index", format!("not an index: {:?}", &rec[1])))?;
        let raw: f64 = rec[2]
            .parse()
            .map_err(|_| Error::record(line, "raw_score", format!("not a number: {:?}", &rec[2])))?;
        if !(raw.is_finite() && raw >= 0.0) {
            return Err(Error::record(
                line,
                "raw_score",
                format!("must be finite and non-negative, got {raw}"),
            ));
        }
        let norm: Option<f64> = if rec[3].is_empty() {
            None
        } else {
            let v: f64 = rec[3]
                .parse()
                .map_err(|_| Error::record(line, "normalized_score", format!("not a number: {:?}", &rec[3])))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::record(line, "normalized_score", format!("{v} outside [0, 1]")));
            }
            Some(v)
        };
        let label = Label::try_from(parse_flag(line, "frame_label", &rec[4])?).unwrap();
        let padded = parse_flag(line, "padded", &rec[5])? == 1;

        let new_trial = tracks.last().is_none_or(|t| t.trial_id != id);
        if new_trial {
            if tracks.iter().any(|t| t.trial_id == id) {
                return Err(Error::record(
                    line,
                    "trial_id",
                    format!("rows of `{id}` are not contiguous"),
                ));
            }
            tracks.push(FrameScoreTrack {
                trial_id: id.to_string(),
                trial_label: Label::Normal,
                frame_labels: Vec::new(),
                padded: Vec::new(),
                raw_scores: Vec::new(),
                normalized_scores: Some(Vec::new()),
            });
        }
        let tr = tracks.last_mut().unwrap();
        if frame != tr.len() {
            return Err(Error::record(
                line,
                "frame_index",
                format!("expected {}, got {frame}", tr.len()),
            ));
        }
        if padded && label == Label::Compensatory {
            return Err(Error::record(line, "frame_label", "padded frames must be labeled 1"));
        }
        if !padded && tr.padded.last() == Some(&true) {
            return Err(Error::record(line, "padded", "unpadded frame after padding"));
        }
        tr.raw_scores.push(raw);
        tr.frame_labels.push(label);
        tr.padded.push(padded);
        match (norm, tr.normalized_scores.as_mut()) {
            (Some(v), Some(n)) => n.push(v),
            _ => any_missing_norm = true,
        }
    }
    for tr in tracks.iter_mut() {
        tr.trial_label = crate::data::trial_label_of(&tr.frame_labels);
        if any_missing_norm {
            tr.normalized_scores = None;
        }
    }
    Ok(tracks)
}
