use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use volmix::pipeline::{self, RunConfig};
use volmix::{Error, Result};

/// Mixed-frequency volatility forecasting pipeline.
///
/// Settings are resolved as command-line flag, then `--config` file, then default.
#[derive(Parser, Debug)]
#[command(name = "volmix", version)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory that holds every input and output file of the run.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Any configuration key, as `key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scenario with known ground truth.
    Simulate {
        #[arg(long)]
        months: Option<usize>,
        #[arg(long)]
        days_per_month: Option<usize>,
    },
    /// Daily returns and scale-adjusted realized variance.
    Rv(Split),
    /// Principal components of the macro, technical and attention groups.
    Pca {
        #[command(flatten)]
        split: Split,
        /// Components kept for a group, as `macro=2`, `tech=3` or `attention=1`. Repeatable.
        #[arg(long, value_name = "GROUP=K")]
        retain: Vec<String>,
        /// `forward` or `linear`.
        #[arg(long)]
        fill: Option<String>,
    },
    /// Estimate GARCH-MIDAS on the training days and filter every day.
    MidasFit {
        #[command(flatten)]
        split: Split,
        #[arg(long)]
        lags: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Train the transformer on one feature group.
    Train(Training),
    /// Forecast the test period with saved weights.
    Predict(Split),
    /// Score the forecasts.
    Evaluate {
        /// Add a persistence forecast row.
        #[arg(long)]
        with_baseline: bool,
    },
    /// Train, predict and evaluate all four feature groups.
    Ablate {
        #[command(flatten)]
        training: Training,
        #[arg(long)]
        with_baseline: bool,
    },
}

#[derive(Args, Debug)]
struct Split {
    /// Fraction of trading days used for training.
    #[arg(long)]
    ratio: Option<f64>,
}

#[derive(Args, Debug)]
struct Training {
    #[command(flatten)]
    split: Split,
    /// G1, G2, G3 or G4.
    #[arg(long)]
    group: Option<String>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    /// `sgd` or `adam`.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    patience: Option<usize>,
}

fn push<T: ToString>(out: &mut Vec<(String, String)>, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        out.push((key.to_string(), v.to_string()));
    }
}

impl Split {
    fn settings(&self, out: &mut Vec<(String, String)>) {
        push(out, "split_ratio", &self.ratio);
    }
}

impl Training {
    fn settings(&self, out: &mut Vec<(String, String)>) {
        self.split.settings(out);
        push(out, "group", &self.group);
        push(out, "window", &self.window);
        push(out, "epochs", &self.epochs);
        push(out, "learning_rate", &self.lr);
        push(out, "batch_size", &self.batch_size);
        push(out, "heads", &self.heads);
        push(out, "layers", &self.layers);
        push(out, "optimizer", &self.optimizer);
        push(out, "patience", &self.patience);
    }
}

fn split_pair(s: &str) -> Result<(String, String)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| Error::Config(format!("expected `key=value`, got `{s}`")))
}

/// Flag settings in application order.
fn flag_settings(cli: &Cli) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for s in &cli.set {
        out.push(split_pair(s)?);
    }
    push(&mut out, "out_dir", &cli.out_dir.as_ref().map(|p| p.display().to_string()));
    push(&mut out, "seed", &cli.seed);
    match &cli.command {
        Command::Simulate { months, days_per_month } => {
            push(&mut out, "sim.months", months);
            push(&mut out, "sim.days_per_month", days_per_month);
        }
        Command::Rv(split) | Command::Predict(split) => split.settings(&mut out),
        Command::Pca { split, retain, fill } => {
            split.settings(&mut out);
            for r in retain {
                let (group, k) = split_pair(r)?;
                out.push((format!("retain_{group}"), k));
            }
            push(&mut out, "fill", fill);
        }
        Command::MidasFit { split, lags, restarts } => {
            split.settings(&mut out);
            push(&mut out, "lags", lags);
            push(&mut out, "restarts", restarts);
        }
        Command::Train(t) => t.settings(&mut out),
        Command::Evaluate { with_baseline } => {
            if *with_baseline {
                out.push(("with_baseline".into(), "true".into()));
            }
        }
        Command::Ablate { training, with_baseline } => {
            training.settings(&mut out);
            if *with_baseline {
                out.push(("with_baseline".into(), "true".into()));
            }
        }
    }
    Ok(out)
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for (k, v) in flag_settings(cli)? {
        cfg.set(&k, &v)?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli)?;
    match cli.command {
        Command::Simulate { .. } => pipeline::cmd_simulate(&cfg),
        Command::Rv(_) => pipeline::cmd_rv(&cfg),
        Command::Pca { .. } => pipeline::cmd_pca(&cfg),
        Command::MidasFit { .. } => pipeline::cmd_midas_fit(&cfg),
        Command::Train(_) => pipeline::cmd_train(&cfg),
        Command::Predict(_) => pipeline::cmd_predict(&cfg),
        Command::Evaluate { .. } => pipeline::cmd_evaluate(&cfg),
        Command::Ablate { .. } => pipeline::cmd_ablate(&cfg).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("volmix: error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
