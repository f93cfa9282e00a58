//! Argument definitions. Every value is taken as text and validated by
//! [`crate::settings`], so flags, config files and manifests share one parser.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, Parser, Subcommand};

use crate::error::exit;
use crate::settings::Settings;

#[derive(Parser, Debug)]
#[command(name = "gsinfonce", version, about = "Contrastive sentence embeddings with Gaussian-smoothed negatives")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train an encoder on a corpus and keep the best checkpoint on validation.
    Train(TrainArgs),
    /// Score a checkpoint on pair files (one row each plus Avg.).
    Eval(EvalArgs),
    /// Top-k negative similarity against batch size.
    Probe(ProbeArgs),
    /// Analytic vs. finite-difference loss gradients.
    Gradcheck(GradcheckArgs),
    /// Train once per noise multiplier and tabulate Spearman.
    AblateM(AblateArgs),
    /// Write a synthetic clustered corpus and pair files.
    MakeToyData(ToyArgs),
}

#[derive(Args, Debug)]
#[group(skip)]
pub struct CommonArgs {
    /// `key = value` config file; flags override it.
    #[arg(long, value_name = "PATH")]
    pub config: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
#[group(skip)]
pub struct TrainingArgs {
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<String>,
    /// Pair file; repeat for several. The first is used for validation.
    #[arg(long, value_name = "PATH")]
    pub sts: Vec<String>,
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<String>,
    #[arg(long, value_name = "N")]
    pub batch_size: Option<String>,
    #[arg(long, value_name = "N")]
    pub steps: Option<String>,
    #[arg(long, value_name = "X")]
    pub lr: Option<String>,
    #[arg(long, value_name = "X")]
    pub tau: Option<String>,
    #[arg(long, value_name = "X")]
    pub lambda: Option<String>,
    /// Noise vectors per step as a multiple of the batch size.
    #[arg(long, value_name = "X")]
    pub m_multiplier: Option<String>,
    #[arg(long, value_name = "X")]
    pub noise_mean: Option<String>,
    #[arg(long, value_name = "X")]
    pub noise_std: Option<String>,
    /// gs-infonce or infonce.
    #[arg(long, value_name = "NAME")]
    pub objective: Option<String>,
    #[arg(long, value_name = "N")]
    pub dim: Option<String>,
    #[arg(long, value_name = "X")]
    pub dropout: Option<String>,
    #[arg(long, value_name = "N")]
    pub eval_every: Option<String>,
    #[arg(long, value_name = "N")]
    pub seed: Option<String>,
    /// Log wall-clock ms per step (makes the loss CSV non-reproducible).
    #[arg(long)]
    pub record_time: bool,
}

#[derive(Args, Debug)]
#[group(skip)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Args, Debug)]
#[group(skip)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Comma-separated noise multipliers.
    #[arg(long, value_name = "CSV")]
    pub multipliers: Option<String>,
    /// Run legs concurrently (results are identical).
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Args, Debug)]
#[group(skip)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<String>,
    /// Corpus the checkpoint was trained on (rebuilds its vocabulary).
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub sts: Vec<String>,
}

#[derive(Args, Debug)]
#[group(skip)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// synthetic or checkpoint.
    #[arg(long, value_name = "NAME")]
    pub source: Option<String>,
    #[arg(long, value_name = "N")]
    pub clusters: Option<String>,
    #[arg(long, value_name = "X")]
    pub spread: Option<String>,
    #[arg(long, value_name = "N")]
    pub dim: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<String>,
    #[arg(long, value_name = "CSV")]
    pub batch_sizes: Option<String>,
    #[arg(long, value_name = "N")]
    pub repeats: Option<String>,
    #[arg(long, value_name = "N")]
    pub top_k: Option<String>,
    #[arg(long, value_name = "N")]
    pub seed: Option<String>,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Args, Debug)]
#[group(skip)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Batch size.
    #[arg(long, value_name = "N")]
    pub n: Option<String>,
    /// Embedding dimension.
    #[arg(long, value_name = "N")]
    pub d: Option<String>,
    /// Noise vectors.
    #[arg(long, value_name = "N")]
    pub m: Option<String>,
    #[arg(long, value_name = "X")]
    pub tau: Option<String>,
    #[arg(long, value_name = "X")]
    pub lambda: Option<String>,
    #[arg(long, value_name = "N")]
    pub trials: Option<String>,
    /// Finite-difference step.
    #[arg(long, value_name = "X")]
    pub step: Option<String>,
    #[arg(long, value_name = "N")]
    pub seed: Option<String>,
}

#[derive(Args, Debug)]
#[group(skip)]
pub struct ToyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_name = "N")]
    pub sentences: Option<String>,
    #[arg(long, value_name = "N")]
    pub clusters: Option<String>,
    /// Pairs per split.
    #[arg(long, value_name = "N")]
    pub pairs: Option<String>,
    #[arg(long, value_name = "N")]
    pub seed: Option<String>,
}

/// Values given explicitly on the command line, keyed by setting name.
pub fn explicit_flags(matches: &ArgMatches) -> BTreeMap<String, Vec<String>> {
    let mut flags = BTreeMap::new();
    for id in matches.ids() {
        let id = id.as_str();
        if matches.value_source(id) != Some(ValueSource::CommandLine) {
            continue;
        }
        if let Some(raw) = matches.get_raw(id) {
            let values: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            flags.insert(id.to_string(), values);
        }
    }
    flags
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let Some((name, sub)) = matches.subcommand() else {
        let _ = writeln!(stderr, "error: no command given");
        return exit::CONFIG;
    };
    let result = Settings::resolve(name, explicit_flags(sub)).and_then(|s| crate::commands::run(s, stdout));
    match result {
        Ok(()) => exit::OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
