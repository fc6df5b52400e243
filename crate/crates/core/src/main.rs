use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use motion_saliency::data::{encode_feature_cache, load_dataset, save_dataset};
use motion_saliency::eval::{
    histogram_csv, pool_stats_csv, run_experiment_matrix, summary_csv, summary_table, sweep_report_csv,
};
use motion_saliency::nn::{load_checkpoint, save_checkpoint, GridSpec};
use motion_saliency::pipeline::{
    check_scores_match, dataset_counts, explain_dataset, grid_report_csv, synth_config_for, train_pipeline,
    PipelineConfig, TrainOptions,
};
use motion_saliency::saliency::{export_heatmap, heatmap_matrix, normalize_all, read_scores, write_scores};
use motion_saliency::synth::generate_dataset;
use motion_saliency::{Error, Result};

/// Localize salient (compensatory) frames in motion time series from trial-level labels.
#[derive(Parser)]
#[command(name = "motion-saliency", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset
    Synth(SynthArgs),
    /// Featurize, split, grid-search and train the classifier
    Train(TrainArgs),
    /// Compute per-frame saliency scores (and optional heatmaps)
    Explain(ExplainArgs),
    /// Sweep thresholds across filter modes and window sizes
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Pipeline config (TOML); the [synth] table holds generator settings
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output dataset file (JSON lines)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Top-level seed [default: 42, or the config's seed]
    #[arg(long)]
    seed: Option<u64>,
    /// Number of patients [default: 15]
    #[arg(long)]
    patients: Option<usize>,
    /// Trials per patient per side [default: 10]
    #[arg(long)]
    trials_per_side: Option<usize>,
    /// Frame capacity [default: 394]
    #[arg(long)]
    t_max: Option<usize>,
    /// Also write the padded feature matrices as a binary cache
    #[arg(long)]
    features_cache: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset file (JSON lines)
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid file (TOML); defaults to 4 architectures x 2 learning rates, 3 folds
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Skip the grid search and train the configured architecture directly
    #[arg(long, conflicts_with = "grid")]
    no_grid: bool,
    /// Training fraction of the trial-level split [default: 0.8]
    #[arg(long)]
    split: Option<f64>,
    /// Output checkpoint
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid report path [default: <out>.grid.csv]
    #[arg(long)]
    grid_report: Option<PathBuf>,
    /// Top-level seed [default: 42, or the config's seed]
    #[arg(long)]
    seed: Option<u64>,
    /// Override the epoch budget of every trained model
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct ExplainArgs {
    /// Model checkpoint
    #[arg(long)]
    model: Option<PathBuf>,
    /// Dataset file (JSON lines)
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output score file (CSV)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also export the saliency heatmap of this trial (repeatable)
    #[arg(long)]
    heatmap: Vec<String>,
    /// Directory for heatmaps [default: the score file's directory]
    #[arg(long)]
    heatmap_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Score file written by `explain`
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Dataset file the scores were computed on
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Filter modes [default: all,no-pad,comp-no-pad]
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<String>>,
    /// Window sizes; 1 evaluates single frames [default: 1,5,10,15,20]
    #[arg(long, value_delimiter = ',')]
    windows: Option<Vec<usize>>,
    /// F-beta weight [default: 2]
    #[arg(long)]
    beta: Option<f64>,
    /// Threshold grid step over [0, 1] [default: 0.01]
    #[arg(long)]
    step: Option<f64>,
    /// Histogram bins [default: 50]
    #[arg(long)]
    bins: Option<usize>,
    /// Report directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(path: &Option<PathBuf>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(format!("--{name} is required")))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let out = required(args.out, &cfg.paths.dataset, "out")?;
    let mut synth = synth_config_for(args.seed.unwrap_or(cfg.seed), &cfg.synth);
    if let Some(p) = args.patients {
        synth.patient_count = p;
    }
    if let Some(n) = args.trials_per_side {
        synth.trials_per_patient_per_side = n;
    }
    if let Some(t) = args.t_max {
        synth.t_max = t;
    }
    synth.validate()?;
    let manifest = generate_dataset(&synth)?;
    let cache = match args.features_cache.or(cfg.paths.features) {
        Some(p) => Some((encode_feature_cache(&manifest.features()?)?, p)),
        None => None,
    };

    ensure_parent(&out)?;
    save_dataset(&manifest, &out)?;
    if let Some((bytes, path)) = cache {
        write_file(&path, bytes)?;
    }
    let c = dataset_counts(&manifest);
    println!(
        "{} trials ({} compensatory), {} frames ({} compensatory), {} padded slots, T_max {}",
        c.trials, c.compensatory_trials, c.frames, c.compensatory_frames, c.padded_frames, manifest.t_max
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let data = required(args.data, &cfg.paths.dataset, "data")?;
    let out = required(args.out, &cfg.paths.model, "out")?;
    let mut grid = match &args.grid {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            GridSpec::from_toml_str(&text)?
        }
        None => cfg.grid.clone(),
    };
    let mut base = cfg.grid.train.clone();
    if let Some(e) = args.epochs {
        grid.train.epochs = e;
        base.epochs = e;
    }
    let opts = TrainOptions {
        seed: args.seed.unwrap_or(cfg.seed),
        split: args.split.unwrap_or(cfg.split),
        grid: (!args.no_grid).then_some(grid),
        hidden: cfg.hidden.clone(),
        base,
    };
    let manifest = load_dataset(&data)?;

    let outcome = train_pipeline(&manifest, &opts)?;
    println!(
        "{} train / {} test",
        outcome.train_indices.len(),
        outcome.test_indices.len()
    );
    if let Some(g) = &outcome.grid {
        for w in &g.warnings {
            eprintln!("warning: {w}");
        }
        for (i, r) in g.results.iter().enumerate() {
            println!(
                "cell {i}: hidden {:?} lr {} mean cv accuracy {:.4}{}",
                r.cell.hidden,
                r.cell.config.learning_rate,
                r.mean_accuracy,
                if i == g.best { "  <- selected" } else { "" }
            );
        }
    }
    let m = &outcome.model.metadata;
    println!(
        "hidden {:?}: train accuracy {:.4}, test accuracy {}",
        outcome.model.architecture.hidden,
        m.train_accuracy,
        m.test_accuracy.map_or("n/a".to_string(), |a| format!("{a:.4}"))
    );

    ensure_parent(&out)?;
    save_checkpoint(&outcome.model, &out)?;
    if let Some(g) = &outcome.grid {
        let path = args.grid_report.unwrap_or_else(|| {
            let mut p = out.clone().into_os_string();
            p.push(".grid.csv");
            PathBuf::from(p)
        });
        write_file(&path, grid_report_csv(g))?;
        println!("wrote {}", path.display());
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn run_explain(args: ExplainArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let model_path = required(args.model, &cfg.paths.model, "model")?;
    let data = required(args.data, &cfg.paths.dataset, "data")?;
    let out = required(args.out, &cfg.paths.scores, "out")?;
    let model = load_checkpoint(&model_path)?;
    let manifest = load_dataset(&data)?;
    for id in &args.heatmap {
        if !manifest.trials.iter().any(|t| &t.trial_id == id) {
            return Err(Error::Config(format!(
                "--heatmap: no trial `{id}` in {}",
                data.display()
            )));
        }
    }

    let explained = explain_dataset(&model, &manifest)?;
    let mut tracks: Vec<_> = explained.iter().map(|(_, t)| t.clone()).collect();
    normalize_all(&mut tracks)?;
    let names = manifest.layout.feature_names();
    let heat_dir = args
        .heatmap_dir
        .unwrap_or_else(|| out.parent().map(Path::to_path_buf).unwrap_or_default());

    ensure_parent(&out)?;
    write_scores(&tracks, &out)?;
    println!("{} trials x {} frames scored", tracks.len(), manifest.t_max);
    println!("wrote {}", out.display());
    for id in &args.heatmap {
        let (s, _) = explained.iter().find(|(s, _)| &s.trial_id == id).unwrap();
        let path = heat_dir.join(format!("heatmap_{id}.csv"));
        ensure_parent(&path)?;
        export_heatmap(&heatmap_matrix(s), &names, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let scores = required(args.scores, &cfg.paths.scores, "scores")?;
    let data = required(args.data, &cfg.paths.dataset, "data")?;
    let out = required(args.out, &cfg.paths.reports, "out")?;
    let mut sweep = cfg.sweep.clone();
    if let Some(m) = args.modes {
        sweep.modes = m;
    }
    if let Some(w) = args.windows {
        sweep.windows = w;
    }
    if let Some(b) = args.beta {
        sweep.beta = b;
    }
    if let Some(s) = args.step {
        sweep.step = s;
    }
    if let Some(b) = args.bins {
        sweep.bins = b;
    }
    let settings = sweep.settings()?;
    let manifest = load_dataset(&data)?;
    let tracks = read_scores(&scores)?;
    check_scores_match(&tracks, &manifest)?;

    let bundle = run_experiment_matrix(&tracks, &settings)?;
    for (mode, why) in &bundle.skipped {
        eprintln!("warning: mode {mode} skipped: {why}");
    }
    fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    for r in &bundle.reports {
        write_file(
            &out.join(format!("sweep_{}_w{}.csv", r.mode, r.window)),
            sweep_report_csv(r),
        )?;
    }
    for (mode, h) in &bundle.histograms {
        write_file(&out.join(format!("histogram_{mode}.csv")), histogram_csv(h))?;
    }
    write_file(&out.join("summary.csv"), summary_csv(&bundle))?;
    write_file(&out.join("pool_stats.csv"), pool_stats_csv(&bundle))?;
    let table = summary_table(&bundle);
    write_file(&out.join("summary.txt"), &table)?;
    print!("{table}");
    println!("wrote {} sweep reports to {}", bundle.reports.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Train(a) => run_train(a),
        Command::Explain(a) => run_explain(a),
        Command::Sweep(a) => run_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
