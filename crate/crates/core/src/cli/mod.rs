//! Configuration loading, method sweeps and result summaries.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;

pub use config::{parse_methods, ExperimentConfig, Overrides};

use crate::error::{Error, Result};
use crate::fed::{run_experiment, Method};
use crate::metrics::{emit_csv, format_float, round_sig6};

/// Federated semi-supervised learning simulator with prior-bias debiasing.
#[derive(Debug, Parser)]
#[command(name = "feddb", version)]
pub struct Args {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated methods, or `all`.
    #[arg(long)]
    pub method: Option<String>,
    /// Dirichlet concentration for the non-IID split.
    #[arg(long)]
    pub delta: Option<f64>,
    /// IID split instead of Dirichlet.
    #[arg(long)]
    pub iid: bool,
    #[arg(long)]
    pub clients: Option<usize>,
    #[arg(long)]
    pub activation_rate: Option<f64>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub local_epochs: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_aggr: Option<f64>,
    #[arg(long)]
    pub e_aggr: Option<usize>,
    /// Master seed; run `i` uses `seed + i`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Output directory for CSV logs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Args {
    pub fn overrides(&self) -> Result<Overrides> {
        Ok(Overrides {
            methods: self.method.as_deref().map(parse_methods).transpose()?,
            delta: self.delta,
            iid: self.iid,
            clients: self.clients,
            activation_rate: self.activation_rate,
            rounds: self.rounds,
            local_epochs: self.local_epochs,
            tau: self.tau,
            lambda: self.lambda,
            gamma: self.gamma,
            lr: self.lr,
            lr_aggr: self.lr_aggr,
            e_aggr: self.e_aggr,
            seed: self.seed,
            repeats: self.repeats,
            out: self.out.clone(),
        })
    }

    pub fn load(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(self.config.as_deref(), &self.overrides()?)
    }
}

/// `{method}_{dataset}_{delta}_{seed}.csv`
pub fn csv_name(config: &ExperimentConfig, method: Method, run_seed: u64) -> String {
    format!("{}_{}_{}_{}.csv", method.name(), config.dataset, config.delta_label(), run_seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    /// Best balanced accuracy of each run, as written to the CSV.
    pub best: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation across runs.
    pub std: f64,
}

impl SummaryRow {
    pub fn new(method: Method, best: Vec<f64>) -> Self {
        let n = best.len() as f64;
        let mean = best.iter().sum::<f64>() / n;
        let std = (best.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self { method, best, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    /// Every CSV written, in run order.
    pub files: Vec<PathBuf>,
}

impl Summary {
    pub fn row(&self, method: Method) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Mean(std) of best balanced accuracy, in percent.
    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.method.name().len()).max().unwrap_or(6).max(6);
        let mut out = format!("{:<width$}  runs  best balanced accuracy (%)\n", "method");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>4}  {:.2} ({:.2})",
                r.method.name(),
                r.best.len(),
                100.0 * r.mean,
                100.0 * r.std
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,runs,mean_best_balanced_accuracy,std_best_balanced_accuracy\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.method.name(), r.best.len(), format_float(r.mean), format_float(r.std));
        }
        out
    }
}

/// Runs every (repeat, method) pair, writing one CSV per run into
/// `config.out`. A failed run still leaves its partial CSV behind.
pub fn run(config: &ExperimentConfig) -> Result<Summary> {
    config.validate()?;
    let out = &config.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut best: Vec<Vec<f64>> = vec![Vec::new(); config.methods.len()];
    let mut files = Vec::new();
    for i in 0..config.repeats {
        let run_seed = config.seed.wrapping_add(i as u64);
        for (j, &method) in config.methods.iter().enumerate() {
            let path = out.join(csv_name(config, method, run_seed));
            match run_experiment(config, method, run_seed) {
                Ok(r) => {
                    emit_csv(&r.log, config.classes, &path)?;
                    files.push(path);
                    if let Some(b) = r.best_balanced_accuracy() {
                        best[j].push(round_sig6(b));
                    }
                }
                Err(failure) => {
                    emit_csv(&failure.log, config.classes, &path)?;
                    return Err(failure.error);
                }
            }
        }
    }
    let rows = config
        .methods
        .iter()
        .zip(best)
        .filter(|(_, b)| !b.is_empty())
        .map(|(&m, b)| SummaryRow::new(m, b))
        .collect();
    let summary = Summary { rows, files };
    write_file(&out.join("summary.csv"), &summary.to_csv())?;
    Ok(summary)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Entry point behind the binary; returns the process exit code.
pub fn main_with(args: &Args) -> i32 {
    let result = args.load().and_then(|config| run(&config));
    match result {
        Ok(summary) => {
            print!("{}", summary.render());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
