use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use deepstatic::features::BlockMask;
use deepstatic::pipeline::{self, ConfigFile, EvalMode, RunManifest, SCORES_FILE};
use deepstatic::store::write_scores;
use deepstatic::{Error, Result};

#[derive(Parser)]
#[command(name = "deepstatic", version, about = "Static PE malware classifier: extract, train, evaluate, score")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract 1024-wide feature vectors from PE files
    Extract {
        /// Files or directories (searched recursively)
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        votes: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train a classifier and its score calibration
    Train {
        /// Directory written by `extract`
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        votes: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Cross-validated or time-split evaluation
    Evaluate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        votes: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// kfold or timesplit
        #[arg(long, default_value = "kfold")]
        mode: EvalModeArg,
        #[command(flatten)]
        common: Common,
    },
    /// Score files with a trained model
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Directory for scores.csv; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy)]
struct EvalModeArg(EvalMode);

impl std::str::FromStr for EvalModeArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.parse().map(EvalModeArg).map_err(|e: Error| e.to_string())
    }
}

#[derive(Args)]
struct Common {
    /// TOML file with the same keys as the flags; flags win
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated feature blocks (byte-entropy, imports, metadata, strings) or "all"
    #[arg(long)]
    mask: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    keep_prob: Option<f64>,
    /// Comma-separated hidden layer widths
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Assumed malware base rate P(m) for threat scores
    #[arg(long)]
    base_rate: Option<f64>,
    /// Kernel density half-width for score calibration
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    calibration_fraction: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    /// First day of the test period (YYYY-MM-DD)
    #[arg(long)]
    split_date: Option<String>,
    #[arg(long)]
    min_date: Option<String>,
    /// Last kept day; defaults to today
    #[arg(long)]
    max_date: Option<String>,
    /// Worker threads for extraction and folds
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn manifest(&self, out_dir: PathBuf) -> Result<RunManifest> {
        let mut m = RunManifest::new(out_dir);
        let s = &mut m.settings;
        if let Some(path) = &self.config {
            ConfigFile::load(path)?.apply(s)?;
        }
        macro_rules! flag {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    s.$f = v.clone();
                }
            )*};
        }
        flag!(seed, epochs, batch_size, keep_prob, hidden, bandwidth, calibration_fraction, folds);
        macro_rules! flag_opt {
            ($($f:ident),*) => {$(
                if self.$f.is_some() {
                    s.$f = self.$f.clone();
                }
            )*};
        }
        flag_opt!(base_rate, split_date, min_date, max_date, jobs);
        if let Some(mask) = &self.mask {
            s.mask = mask.parse::<BlockMask>()?;
        }
        Ok(m)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract { inputs, votes, out, common } => {
            let mut m = common.manifest(out)?;
            m.inputs = inputs;
            m.votes = votes;
            let r = pipeline::extract(&m)?;
            println!("wrote {} rows to {} ({} skipped)", r.rows, r.matrix_path.display(), r.skipped);
        }
        Command::Train { features, votes, out, common } => {
            let mut m = common.manifest(out)?;
            m.features = Some(features);
            m.votes = votes;
            let r = pipeline::train(&m)?;
            println!(
                "trained on {} rows for {} epochs (final loss {:.6}); calibrated on {} rows; model at {}",
                r.fit_rows,
                r.report.epoch_losses.len(),
                r.report.epoch_losses.last().copied().unwrap_or(f64::NAN),
                r.calibration_rows,
                r.model_path.display()
            );
        }
        Command::Evaluate { features, votes, out, mode, common } => {
            let mut m = common.manifest(out)?;
            m.features = Some(features);
            m.votes = votes;
            let r = pipeline::evaluate(&m, mode.0)?;
            println!("fold,auc,tpr_at_0.001");
            for row in &r.summary {
                println!("{},{:.6},{:.6}", row.fold, row.auc, row.tpr_at_0_001);
            }
        }
        Command::Score { model, inputs, out, common } => {
            let out_dir = out.clone().unwrap_or_default();
            let mut m = common.manifest(out_dir)?;
            m.model = Some(model);
            m.inputs = inputs;
            let r = pipeline::score(&m)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
                    let path = dir.join(SCORES_FILE);
                    let f = std::fs::File::create(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                    write_scores(io::BufWriter::new(f), &r.rows)?;
                }
                None => write_scores(io::stdout().lock(), &r.rows)?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
