//! `visradio` command-line tool.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 input or contract error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use visradio::dataset::{read_dataset_file, write_dataset_file};
use visradio::experiment::{
    check_layout, evaluate, generate, infer, report_table, train_classifier, ClassifierKind, Evaluation,
    ExperimentConfig,
};
use visradio::model_file::TrainedModel;
use visradio::radio::Setup;
use visradio::{Error, Result};

#[derive(Parser)]
#[command(name = "visradio", version, about = "Vision-aided transmitter identification: simulate, train, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a setup and write train.csv, validation.csv and generation.json.
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train a classifier on a dataset file.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// forest or mlp
        #[arg(long)]
        classifier: String,
        #[arg(long)]
        model: PathBuf,
        /// Training report (JSON). Wall time goes to a `.timing.json` file next to it.
        #[arg(long)]
        report: PathBuf,
    },
    /// Score a model on a dataset file.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        confusion: PathBuf,
        /// Feature layout the data is meant for; must match the model.
        #[arg(long)]
        layout: Option<String>,
    },
    /// Classify one dataset row and print `label<TAB>confidence<TAB>association`.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        row: String,
        #[arg(long)]
        layout: Option<String>,
    },
    /// Tabulate metrics files as CSV.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        metrics: Vec<PathBuf>,
        /// Write the table here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Config file plus flag overrides.
#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    setup: Option<Setup>,
    #[arg(long)]
    train_count: Option<usize>,
    #[arg(long)]
    validation_count: Option<usize>,
    #[arg(long)]
    scene_seed: Option<u64>,
    #[arg(long)]
    channel_seed: Option<u64>,
    #[arg(long)]
    training_seed: Option<u64>,
    #[arg(long)]
    purge_threshold: Option<f64>,
    /// Forest grid tree counts, e.g. `20,50`.
    #[arg(long, value_delimiter = ',')]
    grid_trees: Option<Vec<usize>>,
    /// Forest grid depths, e.g. `30,80`.
    #[arg(long, value_delimiter = ',')]
    grid_depths: Option<Vec<usize>>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    timing_repetitions: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_json(&read_text(p)?)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.setup {
            cfg.setup = s;
        }
        if self.train_count.is_some() {
            cfg.train_count = self.train_count;
        }
        if self.validation_count.is_some() {
            cfg.validation_count = self.validation_count;
        }
        if let Some(s) = self.scene_seed {
            cfg.seeds.scene = s;
        }
        if let Some(s) = self.channel_seed {
            cfg.seeds.channel = s;
        }
        if let Some(s) = self.training_seed {
            cfg.seeds.training = s;
        }
        if self.purge_threshold.is_some() {
            cfg.fusion.purge_threshold = self.purge_threshold;
        }
        if let Some(t) = &self.grid_trees {
            cfg.forest.grid.tree_counts = t.clone();
        }
        if let Some(d) = &self.grid_depths {
            cfg.forest.grid.depths = d.clone();
        }
        if let Some(f) = self.folds {
            cfg.forest.folds = f;
        }
        if let Some(e) = self.epochs {
            cfg.mlp.epochs = e;
        }
        if let Some(r) = self.timing_repetitions {
            cfg.timing_repetitions = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

#[derive(Serialize)]
struct Timing {
    repetitions: usize,
    mean_seconds: f64,
    runs_seconds: Vec<f64>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out_dir } => {
            let cfg = config.resolve()?;
            let g = generate(&cfg)?;
            std::fs::create_dir_all(&out_dir)?;
            write_dataset_file(&out_dir.join("train.csv"), &g.train)?;
            write_dataset_file(&out_dir.join("validation.csv"), &g.validation)?;
            write_json(&out_dir.join("generation.json"), &g.report)?;
        }
        Command::Train {
            config,
            dataset,
            classifier,
            model,
            report,
        } => {
            let cfg = config.resolve()?;
            let kind: ClassifierKind = classifier.parse()?;
            let data = read_dataset_file(&dataset)?;
            let mut runs = Vec::with_capacity(cfg.timing_repetitions);
            let mut result = None;
            for _ in 0..cfg.timing_repetitions {
                let start = Instant::now();
                let r = train_classifier(&data, kind, &cfg)?;
                runs.push(start.elapsed().as_secs_f64());
                result = Some(r);
            }
            let (trained, train_report) = result.expect("at least one repetition");
            trained.save(&model)?;
            write_json(&report, &train_report)?;
            let timing = Timing {
                repetitions: runs.len(),
                mean_seconds: runs.iter().sum::<f64>() / runs.len() as f64,
                runs_seconds: runs,
            };
            write_json(&report.with_extension("timing.json"), &timing)?;
        }
        Command::Evaluate {
            model,
            dataset,
            metrics,
            confusion,
            layout,
        } => {
            let m = TrainedModel::load(&model)?;
            check_layout(&m, layout.as_deref())?;
            let data = read_dataset_file(&dataset)?;
            let e = evaluate(&m, &data)?;
            write_json(&metrics, &e)?;
            std::fs::write(&confusion, e.confusion.to_csv())?;
        }
        Command::Infer { model, row, layout } => {
            let m = TrainedModel::load(&model)?;
            check_layout(&m, layout.as_deref())?;
            println!("{}", infer(&m, &row)?.line());
        }
        Command::Report { metrics, out } => {
            let mut rows = Vec::new();
            for p in &metrics {
                let e: Evaluation = serde_json::from_str(&read_text(p)?)?;
                rows.push((p.display().to_string(), e));
            }
            let table = report_table(&rows);
            match out {
                Some(p) => std::fs::write(p, table)?,
                None => print!("{table}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
