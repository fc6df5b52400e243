//! Filter modes, confusion metrics, threshold sweeps and score histograms.
//!
//! The positive class throughout is *compensatory* (frame label 0): a unit
//! is predicted compensatory when its normalized score is strictly greater
//! than the threshold.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::data::Label;
use crate::error::{Error, Result};
use crate::saliency::{pool_and_normalize, window_pool, FrameScoreTrack, PooledScoreSet, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FilterMode {
    /// Every frame of every trial.
    All,
    /// Padded frames dropped.
    NoPad,
    /// Padded frames dropped, compensatory trials only.
    CompNoPad,
}

impl FilterMode {
    pub const ALL_MODES: [FilterMode; 3] = [FilterMode::All, FilterMode::NoPad, FilterMode::CompNoPad];

    pub fn admits(self, track: &FrameScoreTrack, frame: usize) -> bool {
        match self {
            FilterMode::All => true,
            FilterMode::NoPad => !track.padded[frame],
            FilterMode::CompNoPad => !track.padded[frame] && track.trial_label == Label::Compensatory,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FilterMode::All => "all",
            FilterMode::NoPad => "no-pad",
            FilterMode::CompNoPad => "comp-no-pad",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            FilterMode::All => "All trials",
            FilterMode::NoPad => "All trials without padded frames",
            FilterMode::CompNoPad => "Compensatory trials without padded frames",
        }
    }
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(FilterMode::All),
            "no-pad" => Ok(FilterMode::NoPad),
            "comp-no-pad" => Ok(FilterMode::CompNoPad),
            other => Err(Error::Config(format!(
                "unknown filter mode `{other}` (expected all, no-pad, comp-no-pad)"
            ))),
        }
    }
}

/// Selected `(trial, frame)` pairs for `mode`, in trial then frame order.
pub fn select_frames(tracks: &[FrameScoreTrack], mode: FilterMode) -> Result<Vec<(usize, usize)>> {
    if mode == FilterMode::CompNoPad && !tracks.iter().any(|t| t.trial_label == Label::Compensatory) {
        return Err(Error::Contract("no compensatory trials to select".into()));
    }
    let sel: Vec<(usize, usize)> = tracks
        .iter()
        .enumerate()
        .flat_map(|(i, tr)| (0..tr.len()).filter(move |&t| mode.admits(tr, t)).map(move |t| (i, t)))
        .collect();
    if sel.is_empty() {
        return Err(Error::Contract(format!("mode {mode} selects no frames")));
    }
    Ok(sel)
}

/// Selection followed by pooled min-max normalization.
pub fn pool_for_mode(tracks: &[FrameScoreTrack], mode: FilterMode) -> Result<PooledScoreSet> {
    select_frames(tracks, mode)?;
    pool_and_normalize(tracks, |tr, t| mode.admits(tr, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    Compensatory,
    Normal,
}

/// Scores at or below the threshold are normal.
pub fn classify(score: f64, threshold: f64) -> Prediction {
    if score > threshold {
        Prediction::Compensatory
    } else {
        Prediction::Normal
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, truth: Label, predicted: Prediction) {
        match (truth, predicted) {
            (Label::Compensatory, Prediction::Compensatory) => self.tp += 1,
            (Label::Normal, Prediction::Compensatory) => self.fp += 1,
            (Label::Normal, Prediction::Normal) => self.tn += 1,
            (Label::Compensatory, Prediction::Normal) => self.fn_ += 1,
        }
    }

    /// 0 when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// 0 when there are no positives.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// F-beta from counts; 0 when precision and recall are both 0.
pub fn fbeta(counts: &ConfusionCounts, beta: f64) -> f64 {
    let p = counts.precision();
    let r = counts.recall();
    let b2 = beta * beta;
    let denom = b2 * p + r;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * p * r / denom
    }
}

/// A scored, labeled evaluation unit (frame or window).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unit {
    pub score: f64,
    pub label: Label,
}

impl From<Window> for Unit {
    fn from(w: Window) -> Self {
        Unit {
            score: w.score,
            label: w.label,
        }
    }
}

pub fn confusion_at(units: &[Unit], threshold: f64) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for u in units {
        c.add(u.label, classify(u.score, threshold));
    }
    c
}

/// `{0, step, 2 step, ...}` up to and including 1.
pub fn threshold_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Config(format!("threshold step must lie in (0, 1], got {step}")));
    }
    let n = (1.0 / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|k| (k as f64 * step).min(1.0)).collect();
    if *grid.last().unwrap() < 1.0 - 1e-12 {
        grid.push(1.0);
    } else {
        *grid.last_mut().unwrap() = 1.0;
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub fbeta: f64,
}

/// Group sizes of an evaluated pool: group 0 = label 0 units, group 1 = label 1 units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolStats {
    pub group0: u64,
    pub group1: u64,
}

impl PoolStats {
    pub fn of(units: &[Unit]) -> Self {
        let group0 = units.iter().filter(|u| u.label.is_compensatory()).count() as u64;
        Self {
            group0,
            group1: units.len() as u64 - group0,
        }
    }

    pub fn total(&self) -> u64 {
        self.group0 + self.group1
    }

    pub fn percent0(&self) -> f64 {
        100.0 * ratio(self.group0, self.total())
    }

    pub fn percent1(&self) -> f64 {
        100.0 * ratio(self.group1, self.total())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSweepReport {
    pub mode: FilterMode,
    pub window: usize,
    pub beta: f64,
    pub step: f64,
    pub rows: Vec<SweepRow>,
    pub best: usize,
    pub stats: PoolStats,
}

impl ThresholdSweepReport {
    pub fn best_row(&self) -> &SweepRow {
        &self.rows[self.best]
    }
}

/// Evaluates every threshold on the grid; best = max F-beta, ties to the smallest threshold.
pub fn sweep(units: &[Unit], beta: f64, step: f64) -> Result<(Vec<SweepRow>, usize)> {
    if units.is_empty() {
        return Err(Error::Contract("cannot sweep an empty pool".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("beta must be positive, got {beta}")));
    }
    let grid = threshold_grid(step)?;
    let rows: Vec<SweepRow> = grid
        .into_iter()
        .map(|threshold| {
            let counts = confusion_at(units, threshold);
            SweepRow {
                threshold,
                counts,
                precision: counts.precision(),
                recall: counts.recall(),
                fbeta: fbeta(&counts, beta),
            }
        })
        .collect();
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.fbeta > rows[best].fbeta {
            best = i;
        }
    }
    Ok((rows, best))
}

/// Units of a pool: frames when `window == 1`, otherwise per-trial windows.
pub fn pool_units(pool: &PooledScoreSet, window: usize) -> Result<Vec<Unit>> {
    if window == 1 {
        Ok(pool
            .entries
            .iter()
            .map(|e| Unit {
                score: e.normalized,
                label: e.label,
            })
            .collect())
    } else {
        Ok(window_pool(pool, window)?.into_iter().map(Unit::from).collect())
    }
}

pub fn sweep_pool(
    pool: &PooledScoreSet,
    mode: FilterMode,
    window: usize,
    beta: f64,
    step: f64,
) -> Result<ThresholdSweepReport> {
    let units = pool_units(pool, window)?;
    let (rows, best) = sweep(&units, beta, step)?;
    Ok(ThresholdSweepReport {
        mode,
        window,
        beta,
        step,
        rows,
        best,
        stats: PoolStats::of(&units),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreHistogram {
    /// `bins + 1` edges over `[0, 1]`.
    pub edges: Vec<f64>,
    pub group0: Vec<u64>,
    pub group1: Vec<u64>,
}

impl ScoreHistogram {
    /// Units shared by both groups' distributions: `sum_b min(group0[b], group1[b])`.
    pub fn overlap(&self) -> u64 {
        self.group0.iter().zip(&self.group1).map(|(a, b)| *a.min(b)).sum()
    }
}

pub const DEFAULT_BINS: usize = 50;

pub fn histogram(units: &[Unit], bins: usize) -> Result<ScoreHistogram> {
    if units.is_empty() {
        return Err(Error::Contract("cannot histogram an empty pool".into()));
    }
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let mut h = ScoreHistogram {
        edges: (0..=bins).map(|k| k as f64 / bins as f64).collect(),
        group0: vec![0; bins],
        group1: vec![0; bins],
    };
    for u in units {
        let b = ((u.score * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        match u.label {
            Label::Compensatory => h.group0[b] += 1,
            Label::Normal => h.group1[b] += 1,
        }
    }
    Ok(h)
}

#[derive(Debug, Clone)]
pub struct ExperimentSettings {
    pub modes: Vec<FilterMode>,
    pub windows: Vec<usize>,
    pub beta: f64,
    pub step: f64,
    pub bins: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            modes: FilterMode::ALL_MODES.to_vec(),
            windows: vec![1, 5, 10, 15, 20],
            beta: 2.0,
            step: 0.01,
            bins: DEFAULT_BINS,
        }
    }
}

impl ExperimentSettings {
    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::Config("no filter modes requested".into()));
        }
        if self.windows.is_empty() || self.windows.contains(&0) {
            return Err(Error::Config(format!(
                "window sizes must be >= 1, got {:?}",
                self.windows
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        threshold_grid(self.step)?;
        if self.bins == 0 {
            return Err(Error::Config("histogram needs at least one bin".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentBundle {
    pub settings: ExperimentSettings,
    /// Sorted by (mode, window).
    pub reports: Vec<ThresholdSweepReport>,
    /// Frame-level histogram per evaluated mode.
    pub histograms: Vec<(FilterMode, ScoreHistogram)>,
    /// Modes skipped because they selected nothing.
    pub skipped: Vec<(FilterMode, String)>,
}

impl ExperimentBundle {
    pub fn report(&self, mode: FilterMode, window: usize) -> Option<&ThresholdSweepReport> {
        self.reports.iter().find(|r| r.mode == mode && r.window == window)
    }
}

/// Sweeps every (mode, window) cell. A mode with an empty selection is
/// skipped and recorded rather than failing the whole matrix.
pub fn run_experiment_matrix(tracks: &[FrameScoreTrack], settings: &ExperimentSettings) -> Result<ExperimentBundle> {
    settings.validate()?;
    let mut modes = settings.modes.clone();
    modes.sort();
    modes.dedup();
    let mut windows = settings.windows.clone();
    windows.sort_unstable();
    windows.dedup();

    let mut reports = Vec::new();
    let mut histograms = Vec::new();
    let mut skipped = Vec::new();
    for mode in modes {
        let pool = match pool_for_mode(tracks, mode) {
            Ok(p) => p,
            Err(Error::Contract(msg)) => {
                skipped.push((mode, msg));
                continue;
            }
            Err(e) => return Err(e),
        };
        histograms.push((mode, histogram(&pool_units(&pool, 1)?, settings.bins)?));
        for &w in &windows {
            reports.push(sweep_pool(&pool, mode, w, settings.beta, settings.step)?);
        }
    }
    Ok(ExperimentBundle {
        settings: settings.clone(),
        reports,
        histograms,
        skipped,
    })
}

fn fmt_real(v: f64) -> String {
    // Thresholds come off a k*step grid; trim float noise such as 0.35000000000000003.
    let r = (v * 1e12).round() / 1e12;
    format!("{r}")
}

/// One sweep as CSV, preceded by `#` header lines recording mode, window, beta and step.
pub fn sweep_report_csv(r: &ThresholdSweepReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "# mode={} window={} beta={} step={}",
        r.mode, r.window, r.beta, r.step
    )
    .unwrap();
    writeln!(
        out,
        "# group0={} group1={} total={} best_threshold={} best_recall={} best_f{}={}",
        r.stats.group0,
        r.stats.group1,
        r.stats.total(),
        fmt_real(r.best_row().threshold),
        r.best_row().recall,
        r.beta,
        r.best_row().fbeta
    )
    .unwrap();
    out.push_str("mode,window,threshold,tp,fp,tn,fn,precision,recall,fbeta\n");
    for row in &r.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.mode,
            r.window,
            fmt_real(row.threshold),
            row.counts.tp,
            row.counts.fp,
            row.counts.tn,
            row.counts.fn_,
            row.precision,
            row.recall,
            row.fbeta
        )
        .unwrap();
    }
    out
}

/// Best row of every sweep, one line each.
pub fn summary_csv(b: &ExperimentBundle) -> String {
    let mut out = String::new();
    writeln!(out, "# beta={} step={}", b.settings.beta, b.settings.step).unwrap();
    out.push_str("mode,window,beta,best_threshold,precision,recall,fbeta,group0,group1,total\n");
    for r in &b.reports {
        let best = r.best_row();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.mode,
            r.window,
            r.beta,
            fmt_real(best.threshold),
            best.precision,
            best.recall,
            best.fbeta,
            r.stats.group0,
            r.stats.group1,
            r.stats.total()
        )
        .unwrap();
    }
    out
}

/// Group sizes per evaluated pool, laid out like a data-distribution table.
pub fn pool_stats_csv(b: &ExperimentBundle) -> String {
    let mut out = String::from("mode,window,group0,group0_pct,group1,group1_pct,total\n");
    for r in &b.reports {
        let s = r.stats;
        writeln!(
            out,
            "{},{},{},{:.2},{},{:.2},{}",
            r.mode,
            r.window,
            s.group0,
            s.percent0(),
            s.group1,
            s.percent1(),
            s.total()
        )
        .unwrap();
    }
    out
}

pub fn histogram_csv(h: &ScoreHistogram) -> String {
    let mut out = String::new();
    writeln!(out, "# overlap={}", h.overlap()).unwrap();
    out.push_str("bin_lo,bin_hi,group0,group1\n");
    for (b, (c0, c1)) in h.group0.iter().zip(&h.group1).enumerate() {
        writeln!(
            out,
            "{},{},{},{}",
            fmt_real(h.edges[b]),
            fmt_real(h.edges[b + 1]),
            c0,
            c1
        )
        .unwrap();
    }
    out
}

/// Human-readable table of best thresholds per experiment.
pub fn summary_table(b: &ExperimentBundle) -> String {
    let mut out = String::new();
    let f = format!("F{}", b.settings.beta);
    writeln!(
        out,
        "{:<44} {:>6} {:>10} {:>8} {:>8}",
        "Experiment", "Window", "Threshold", "Recall", f
    )
    .unwrap();
    for r in &b.reports {
        let best = r.best_row();
        writeln!(
            out,
            "{:<44} {:>6} {:>10.2} {:>8.4} {:>8.4}",
            r.mode.description(),
            r.window,
            best.threshold,
            best.recall,
            best.fbeta
        )
        .unwrap();
    }
    for (mode, why) in &b.skipped {
        writeln!(out, "{:<44} skipped: {why}", mode.description()).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(score: f64, label: u8) -> Unit {
        Unit {
            score,
            label: Label::try_from(label).unwrap(),
        }
    }

    #[test]
    fn classify_boundary_is_normal() {
        assert_eq!(classify(0.36, 0.36), Prediction::Normal);
        assert_eq!(classify(0.37, 0.36), Prediction::Compensatory);
        assert_eq!(classify(1.0, 1.0), Prediction::Normal);
    }

    #[test]
    fn fbeta_values() {
        assert_eq!(fbeta(&ConfusionCounts::new(5, 0, 3, 0), 2.0), 1.0);
        // P = 0.5, R = 1
        let f = fbeta(&ConfusionCounts::new(4, 4, 0, 0), 2.0);
        assert!((f - 2.5 / 3.0).abs() < 1e-15);
        assert_eq!(fbeta(&ConfusionCounts::new(0, 3, 3, 0), 2.0), 0.0);
        assert_eq!(fbeta(&ConfusionCounts::default(), 2.0), 0.0);
    }

    #[test]
    fn implied_precision_probe() {
        // Inverting F2 = 5PR/(4P+R) for P at R = 0.96, F2 = 0.91.
        let (r, f2): (f64, f64) = (0.96, 0.91);
        let p = f2 * r / (5.0 * r - 4.0 * f2);
        assert!((p - 0.753).abs() < 1e-3);
        let b2: f64 = 4.0;
        assert!(((1.0 + b2) * p * r / (b2 * p + r) - f2).abs() < 1e-12);
    }

    #[test]
    fn grid_arithmetic() {
        assert_eq!(threshold_grid(0.5).unwrap(), vec![0.0, 0.5, 1.0]);
        let g = threshold_grid(0.01).unwrap();
        assert_eq!(g.len(), 101);
        assert_eq!(g[100], 1.0);
        assert_eq!(threshold_grid(0.3).unwrap().last(), Some(&1.0));
        assert!(threshold_grid(0.0).is_err());
        assert!(threshold_grid(1.5).is_err());
    }

    #[test]
    fn perfectly_separated_pool() {
        let units: Vec<Unit> = (0..10).map(|i| if i < 4 { u(1.0, 0) } else { u(0.0, 1) }).collect();
        let (rows, best) = sweep(&units, 2.0, 0.01).unwrap();
        assert_eq!(rows[best].fbeta, 1.0);
        // Every tau in [0, 1) separates (a score of 0 is not > 0), so the smallest tie wins.
        assert!(rows[..100].iter().all(|r| r.fbeta == 1.0));
        assert_eq!(rows[100].fbeta, 0.0);
        assert_eq!(best, 0);
    }

    #[test]
    fn all_normal_pool_scores_zero() {
        let units: Vec<Unit> = (0..10).map(|i| u(i as f64 / 10.0, 1)).collect();
        let (rows, best) = sweep(&units, 2.0, 0.01).unwrap();
        assert!(rows.iter().all(|r| r.fbeta == 0.0));
        assert_eq!(rows[best].threshold, 0.0);
    }

    #[test]
    fn endpoints() {
        let units = vec![u(0.0, 0), u(0.3, 1), u(1.0, 0), u(0.7, 1)];
        let (rows, _) = sweep(&units, 2.0, 0.1).unwrap();
        let last = rows.last().unwrap();
        assert_eq!((last.counts.tp, last.counts.fp), (0, 0));
        let first = &rows[0].counts;
        assert_eq!(first.tp + first.fp, 3);
    }

    #[test]
    fn histogram_overlap() {
        let sep: Vec<Unit> = (0..6).map(|i| if i < 3 { u(0.0, 0) } else { u(1.0, 1) }).collect();
        let h = histogram(&sep, 50).unwrap();
        assert_eq!(h.overlap(), 0);
        assert_eq!(h.group1[49], 3);
        let same: Vec<Unit> = (0..10)
            .flat_map(|i| [u(i as f64 / 10.0, 0), u(i as f64 / 10.0, 1)])
            .collect();
        assert_eq!(histogram(&same, 50).unwrap().overlap(), 10);
    }

    #[test]
    fn mode_parsing() {
        for m in FilterMode::ALL_MODES {
            assert_eq!(m.name().parse::<FilterMode>().unwrap(), m);
        }
        assert!("pad".parse::<FilterMode>().is_err());
    }

    fn track(labels: Vec<u8>, len: usize) -> FrameScoreTrack {
        let frame_labels: Vec<Label> = labels.into_iter().map(|l| Label::try_from(l).unwrap()).collect();
        FrameScoreTrack {
            trial_id: "t".into(),
            trial_label: crate::data::trial_label_of(&frame_labels),
            padded: (0..frame_labels.len()).map(|t| t >= len).collect(),
            raw_scores: (0..frame_labels.len()).map(|t| t as f64).collect(),
            frame_labels,
            normalized_scores: None,
        }
    }

    #[test]
    fn comp_mode_needs_compensatory_trials() {
        let tracks = vec![track(vec![1; 5], 3)];
        assert!(matches!(
            select_frames(&tracks, FilterMode::CompNoPad),
            Err(Error::Contract(_))
        ));
        assert_eq!(select_frames(&tracks, FilterMode::All).unwrap().len(), 5);
        assert_eq!(select_frames(&tracks, FilterMode::NoPad).unwrap().len(), 3);
        let full = vec![track(vec![1; 5], 5)];
        assert_eq!(
            select_frames(&full, FilterMode::NoPad).unwrap(),
            select_frames(&full, FilterMode::All).unwrap()
        );
    }

    #[test]
    fn matrix_skips_empty_modes() {
        let tracks = vec![track(vec![1; 8], 6)];
        let b = run_experiment_matrix(&tracks, &ExperimentSettings::default()).unwrap();
        assert_eq!(b.reports.len(), 10);
        assert_eq!(b.skipped.len(), 1);
        assert_eq!(b.skipped[0].0, FilterMode::CompNoPad);
        assert!(summary_table(&b).contains("skipped"));
    }

    #[test]
    fn report_header_records_beta() {
        let tracks = vec![track(vec![0, 0, 1, 1, 1], 4)];
        let b = run_experiment_matrix(&tracks, &ExperimentSettings::default()).unwrap();
        assert_eq!(b.reports.len(), 15);
        for r in &b.reports {
            let csv = sweep_report_csv(r);
            assert!(csv.lines().next().unwrap().contains("beta=2"));
            assert_eq!(csv.lines().count(), 3 + 101);
        }
        assert!(sweep_report_csv(&b.reports[0]).contains("\nall,1,0.35,"));
    }
}
