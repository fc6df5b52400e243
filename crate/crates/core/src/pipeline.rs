//! Stage drivers shared by the command-line tool and the test suites:
//! synthesize, featurize + split + select + train, explain, sweep.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::data::{split_indices, DatasetManifest, FeatureTrial, Label};
use crate::error::{Error, Result};
use crate::eval::{ExperimentSettings, FilterMode, DEFAULT_BINS};
use crate::nn::{
    accuracy, examples, grid_search, train, Architecture, GridReport, GridSpec, TrainConfig, TrainedModel,
};
use crate::saliency::{explain_trials, FrameScoreTrack, SaliencyMatrix};
use crate::seed::{self, Stage};
use crate::synth::SynthConfig;

/// Default hidden widths when no grid search is run.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 32];

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub modes: Vec<String>,
    pub windows: Vec<usize>,
    pub beta: f64,
    pub step: f64,
    pub bins: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            modes: FilterMode::ALL_MODES.iter().map(|m| m.name().to_string()).collect(),
            windows: vec![1, 5, 10, 15, 20],
            beta: 2.0,
            step: 0.01,
            bins: DEFAULT_BINS,
        }
    }
}

impl SweepConfig {
    pub fn settings(&self) -> Result<ExperimentSettings> {
        let s = ExperimentSettings {
            modes: self.modes.iter().map(|m| m.parse()).collect::<Result<_>>()?,
            windows: self.windows.clone(),
            beta: self.beta,
            step: self.step,
            bins: self.bins,
        };
        s.validate()?;
        Ok(s)
    }
}

/// Whole-pipeline configuration file (TOML). Every table is optional.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Top-level seed; every stage derives its own seed from it.
    pub seed: u64,
    pub split: f64,
    pub hidden: Vec<usize>,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub grid: GridSpec,
    pub sweep: SweepConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            split: 0.8,
            hidden: DEFAULT_HIDDEN.to_vec(),
            paths: Paths::default(),
            synth: SynthConfig::default(),
            grid: GridSpec::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// Synthesis settings with the stage seed taken from the top-level seed.
pub fn synth_config_for(seed: u64, base: &SynthConfig) -> SynthConfig {
    SynthConfig { seed, ..base.clone() }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub seed: u64,
    pub split: f64,
    /// `None` trains `hidden` with `base` directly.
    pub grid: Option<GridSpec>,
    pub hidden: Vec<usize>,
    pub base: TrainConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            seed: 42,
            split: 0.8,
            grid: None,
            hidden: DEFAULT_HIDDEN.to_vec(),
            base: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub grid: Option<GridReport>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Featurize, split at trial level, optionally grid-search, then train the
/// selected cell on the full training split and score it on the test split.
pub fn train_pipeline(manifest: &DatasetManifest, opts: &TrainOptions) -> Result<TrainOutcome> {
    manifest.validate()?;
    let features = manifest.features()?;
    let (train_idx, test_idx) = split_indices(features.len(), opts.split, seed::derive(opts.seed, Stage::Split))?;
    let train_set: Vec<FeatureTrial> = train_idx.iter().map(|&i| features[i].clone()).collect();
    let test_set: Vec<FeatureTrial> = test_idx.iter().map(|&i| features[i].clone()).collect();
    let train_ex = examples(&train_set);
    let frames = manifest.t_max;
    let f = manifest.layout.feature_count();
    let train_seed = seed::derive(opts.seed, Stage::Train);

    let (hidden, config, grid) = match &opts.grid {
        Some(spec) => {
            let cells: Vec<_> = spec
                .cells()
                .into_iter()
                .map(|mut c| {
                    c.config.seed = train_seed;
                    c
                })
                .collect();
            let report = grid_search(&train_ex, frames, f, &cells, spec.folds, opts.seed)?;
            let best = report.best_cell().clone();
            (best.hidden, best.config, Some(report))
        }
        None => (
            opts.hidden.clone(),
            TrainConfig {
                seed: train_seed,
                ..opts.base.clone()
            },
            None,
        ),
    };

    let arch = Architecture::new(frames, f, hidden)?;
    let mut model = train(&train_ex, &arch, &config)?;
    if !test_set.is_empty() {
        model.metadata.test_accuracy = Some(accuracy(&model.network, &examples(&test_set))?);
    }
    Ok(TrainOutcome {
        model,
        grid,
        train_indices: train_idx,
        test_indices: test_idx,
    })
}

pub fn grid_report_csv(report: &GridReport) -> String {
    let mut out = String::from("cell,hidden,learning_rate,momentum,epochs,batch_size,parameters,");
    out.push_str(
        &(0..report.folds)
            .map(|k| format!("fold{k}_accuracy"))
            .collect::<Vec<_>>()
            .join(","),
    );
    out.push_str(",mean_accuracy,selected\n");
    for (i, r) in report.results.iter().enumerate() {
        let hidden = r
            .cell
            .hidden
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join("-");
        let c = &r.cell.config;
        write!(
            out,
            "{i},{hidden},{},{},{},{},{},",
            c.learning_rate, c.momentum, c.epochs, c.batch_size, r.parameter_count
        )
        .unwrap();
        let folds: Vec<String> = r.fold_accuracies.iter().map(|a| a.to_string()).collect();
        writeln!(
            out,
            "{},{},{}",
            folds.join(","),
            r.mean_accuracy,
            u8::from(i == report.best)
        )
        .unwrap();
    }
    for w in &report.warnings {
        writeln!(out, "# warning: {w}").unwrap();
    }
    out
}

/// Checks that a checkpoint can consume a dataset's feature matrices.
pub fn check_compatible(model: &TrainedModel, manifest: &DatasetManifest) -> Result<()> {
    let arch = &model.architecture;
    if arch.frames != manifest.t_max || arch.features != manifest.layout.feature_count() {
        return Err(Error::Contract(format!(
            "model expects {}x{} inputs, dataset provides {}x{}",
            arch.frames,
            arch.features,
            manifest.t_max,
            manifest.layout.feature_count()
        )));
    }
    Ok(())
}

pub fn explain_dataset(
    model: &TrainedModel,
    manifest: &DatasetManifest,
) -> Result<Vec<(SaliencyMatrix, FrameScoreTrack)>> {
    check_compatible(model, manifest)?;
    explain_trials(model, &manifest.features()?)
}

/// Checks that score tracks describe exactly the dataset's trials and labels.
pub fn check_scores_match(tracks: &[FrameScoreTrack], manifest: &DatasetManifest) -> Result<()> {
    if tracks.len() != manifest.trials.len() {
        return Err(Error::Data(format!(
            "score file has {} trials, dataset has {}",
            tracks.len(),
            manifest.trials.len()
        )));
    }
    for (tr, trial) in tracks.iter().zip(&manifest.trials) {
        if tr.trial_id != trial.trial_id {
            return Err(Error::Data(format!(
                "score file trial `{}` does not match dataset trial `{}`",
                tr.trial_id, trial.trial_id
            )));
        }
        if tr.len() != manifest.t_max {
            return Err(Error::Data(format!(
                "trial {}: {} score rows, expected {}",
                tr.trial_id,
                tr.len(),
                manifest.t_max
            )));
        }
        let l = trial.len();
        let labels_match =
            tr.frame_labels[..l] == trial.frame_labels[..] && tr.frame_labels[l..].iter().all(|&x| x == Label::Normal);
        let padding_match = tr.padded.iter().enumerate().all(|(t, &p)| p == (t >= l));
        if !labels_match || !padding_match {
            return Err(Error::Data(format!(
                "trial {}: labels or padding disagree with dataset",
                tr.trial_id
            )));
        }
    }
    Ok(())
}

/// Dataset summary counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetCounts {
    pub trials: usize,
    pub compensatory_trials: usize,
    pub frames: usize,
    pub compensatory_frames: usize,
    pub padded_frames: usize,
}

pub fn dataset_counts(m: &DatasetManifest) -> DatasetCounts {
    let frames: usize = m.trials.iter().map(|t| t.len()).sum();
    DatasetCounts {
        trials: m.trials.len(),
        compensatory_trials: m.trials.iter().filter(|t| t.trial_label.is_compensatory()).count(),
        frames,
        compensatory_frames: m
            .trials
            .iter()
            .flat_map(|t| &t.frame_labels)
            .filter(|l| l.is_compensatory())
            .count(),
        padded_frames: m.trials.len() * m.t_max - frames,
    }
}
