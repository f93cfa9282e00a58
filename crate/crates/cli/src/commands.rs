//! One function per subcommand. Each validates its settings, writes the run
//! manifest, then computes and writes its outputs.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use gs_infonce::evaluation::{eval_table_csv, evaluate_pairs, evaluate_sts, load_sts_pairs, EvalReport};
use gs_infonce::loss::{noise_count, GsLossConfig};
use gs_infonce::noise::NoiseConfig;
use gs_infonce::probe::{probe_sweep, synthetic_embedding_source, EmbeddingSource, PoolSource};
use gs_infonce::svg::{LineChart, Series};
use gs_infonce::trainer::{train_run, TrainLog};
use gs_infonce::vocab::read_corpus;
use gs_infonce::{read_checkpoint, GradCheckConfig, Objective, ProbeConfig, TrainConfig, Vocabulary};

use crate::error::{CliError, CliResult};
use crate::settings::Settings;
use crate::toy_data::{write_toy_data, ToyDataConfig};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const GRADCHECK_TOLERANCE: f64 = gs_infonce::gradcheck::DEFAULT_TOLERANCE;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn emit(stdout: &mut dyn Write, text: &str) -> CliResult<()> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::io("<stdout>", e))
}

fn out_dir(s: &Settings) -> PathBuf {
    s.path("out").expect("out has a default")
}

fn write_manifest(s: &Settings) -> CliResult<PathBuf> {
    let path = out_dir(s).join(MANIFEST_FILE);
    write_file(&path, s.manifest())?;
    Ok(path)
}

pub fn run(s: Settings, stdout: &mut dyn Write) -> CliResult<()> {
    match s.command() {
        "train" => train(s, stdout),
        "eval" => eval(s, stdout),
        "probe" => probe(s, stdout),
        "gradcheck" => gradcheck(s, stdout),
        "ablate-m" => ablate_m(s, stdout),
        "make-toy-data" => make_toy_data(s, stdout),
        other => Err(CliError::config(format!("unknown command {other}"))),
    }
}

fn objective(s: &Settings) -> CliResult<Objective> {
    match s.text("objective") {
        "gs-infonce" => Ok(Objective::GsInfoNce),
        "infonce" => Ok(Objective::InfoNce),
        other => Err(CliError::config(format!(
            "--objective must be gs-infonce or infonce, got `{other}`"
        ))),
    }
}

/// Training configuration for one run with noise multiplier `multiplier`.
pub fn train_config(
    s: &Settings,
    corpus: &Path,
    checkpoint: &Path,
    validation: Option<&Path>,
    multiplier: f64,
) -> CliResult<TrainConfig> {
    if multiplier < 0.0 {
        return Err(CliError::config(format!("noise multiplier must be >= 0, got {multiplier}")));
    }
    let batch_size = s.count("batch_size");
    let dim = s.count("dim");
    let count = noise_count(multiplier, batch_size);
    let mut cfg = TrainConfig::new(corpus, checkpoint);
    cfg.batch_size = batch_size;
    cfg.steps = s.count("steps");
    cfg.learning_rate = s.real("lr");
    cfg.loss = GsLossConfig {
        temperature: s.real("tau"),
        lambda: s.real("lambda"),
        noise: NoiseConfig {
            mean: s.real("noise_mean"),
            std_dev: s.real("noise_std"),
            count,
            dim,
            seed: 0,
        },
    };
    cfg.objective = if multiplier == 0.0 { Objective::InfoNce } else { objective(s)? };
    cfg.dim = dim;
    cfg.dropout_p = s.real("dropout");
    cfg.validation_path = validation.map(Path::to_path_buf);
    cfg.master_seed = s.seed("seed");
    cfg.eval_every = s.count("eval_every");
    cfg.record_time = s.flag("record_time");
    cfg.validate()?;
    Ok(cfg)
}

fn evaluate_all(
    params: &gs_infonce::Encoder,
    vocab: &Vocabulary,
    datasets: &[PathBuf],
) -> CliResult<Vec<EvalReport>> {
    datasets
        .iter()
        .map(|p| evaluate_sts(params, vocab, p).map_err(CliError::from))
        .collect()
}

fn write_logs(dir: &Path, log: &TrainLog) -> CliResult<()> {
    write_file(&dir.join("train_loss.csv"), log.loss_csv())?;
    write_file(&dir.join("train_eval.csv"), log.eval_csv())
}

/// Trains with the first `--sts` file as validation; the best checkpoint is
/// then scored on every `--sts` file.
fn train(mut s: Settings, stdout: &mut dyn Write) -> CliResult<()> {
    let corpus = s.require_path("corpus")?;
    let out = out_dir(&s);
    let checkpoint = s.path("checkpoint").unwrap_or_else(|| out.join("checkpoint.bin"));
    s.set("checkpoint", checkpoint.display().to_string());
    let datasets = s.paths("sts");
    let cfg = train_config(&s, &corpus, &checkpoint, datasets.first().map(PathBuf::as_path), s.real("m_multiplier"))?;

    s.record_resolved("noise_count", cfg.loss.noise.count.to_string());
    s.record_output("checkpoint", &checkpoint);
    s.record_output("train_loss", out.join("train_loss.csv"));
    s.record_output("train_eval", out.join("train_eval.csv"));
    if !datasets.is_empty() {
        s.record_output("eval", out.join("eval.csv"));
    }
    write_manifest(&s)?;

    let outcome = train_run(&cfg)?;
    write_logs(&out, &outcome.log)?;
    let mut summary = format!(
        "trained {} steps, final loss {:.6}, noise matrix {}x{}\n",
        cfg.steps,
        outcome.log.steps.last().map_or(f64::NAN, |r| r.mean_loss),
        outcome.noise_shape.0,
        outcome.noise_shape.1
    );
    if let Some(best) = outcome.best_eval {
        let _ = writeln!(summary, "best validation spearman {:.6} at step {}", best.spearman, best.step);
    }
    emit(stdout, &summary)?;
    if !datasets.is_empty() {
        let table = eval_table_csv(&evaluate_all(&outcome.best_params, &outcome.vocab, &datasets)?);
        write_file(&out.join("eval.csv"), &table)?;
        emit(stdout, &table)?;
    }
    Ok(())
}

/// Loads a checkpoint together with the vocabulary of the corpus it was
/// trained on.
fn load_model(s: &Settings) -> CliResult<(gs_infonce::Encoder, Vocabulary, Vec<String>)> {
    let checkpoint = s.require_path("checkpoint")?;
    let corpus = s.require_path("corpus")?;
    let params = read_checkpoint(&checkpoint)?;
    let sentences = read_corpus(&corpus)?;
    let vocab = Vocabulary::build(sentences.iter().map(String::as_str));
    if vocab.len() != params.vocab_size {
        return Err(CliError::config(format!(
            "checkpoint vocabulary has {} entries but --corpus yields {}",
            params.vocab_size,
            vocab.len()
        )));
    }
    Ok((params, vocab, sentences))
}

fn eval(mut s: Settings, stdout: &mut dyn Write) -> CliResult<()> {
    s.require_path("checkpoint")?;
    s.require_path("corpus")?;
    let datasets = s.paths("sts");
    if datasets.is_empty() {
        return Err(CliError::config("missing required --sts (at least one dataset)"));
    }
    let out = out_dir(&s);
    s.record_output("eval", out.join("eval.csv"));
    write_manifest(&s)?;
    let (params, vocab, _) = load_model(&s)?;
    let table = eval_table_csv(&evaluate_all(&params, &vocab, &datasets)?);
    write_file(&out.join("eval.csv"), &table)?;
    emit(stdout, &table)
}

fn probe(mut s: Settings, stdout: &mut dyn Write) -> CliResult<()> {
    let cfg = ProbeConfig {
        batch_sizes: s.counts("batch_sizes"),
        repeats: s.count("repeats"),
        top_k: s.count("top_k"),
        seed: s.seed("seed"),
    };
    cfg.validate()?;
    let source_kind = s.text("source").to_string();
    if source_kind != "synthetic" && source_kind != "checkpoint" {
        return Err(CliError::config(format!(
            "--source must be synthetic or checkpoint, got `{source_kind}`"
        )));
    }
    if source_kind == "checkpoint" {
        s.require_path("checkpoint")?;
        s.require_path("corpus")?;
    }
    let out = out_dir(&s);
    s.record_output("probe", out.join("probe.csv"));
    if s.flag("svg") {
        s.record_output("svg", out.join("probe.svg"));
    }
    write_manifest(&s)?;

    let source: Box<dyn EmbeddingSource> = if source_kind == "synthetic" {
        Box::new(synthetic_embedding_source(
            s.count("clusters"),
            s.real("spread"),
            s.count("dim"),
            cfg.seed,
        )?)
    } else {
        let (params, vocab, sentences) = load_model(&s)?;
        Box::new(PoolSource::from_checkpoint(&params, &vocab, &sentences)?)
    };
    let report = probe_sweep(&cfg, source.as_ref())?;
    let csv = report.to_csv();
    write_file(&out.join("probe.csv"), &csv)?;
    if s.flag("svg") {
        write_file(&out.join("probe.svg"), report.to_svg())?;
    }
    emit(stdout, &csv)
}

fn gradcheck(mut s: Settings, stdout: &mut dyn Write) -> CliResult<()> {
    let cfg = GradCheckConfig {
        batch: s.count("n"),
        dim: s.count("d"),
        noise_count: s.count("m"),
        temperature: s.real("tau"),
        lambda: s.real("lambda"),
        seed: s.seed("seed"),
        trials: s.count("trials"),
        step: s.real("step"),
    };
    if cfg.batch == 0 || cfg.dim == 0 || cfg.trials == 0 {
        return Err(CliError::config("--n, --d and --trials must be >= 1"));
    }
    if cfg.temperature <= 0.0 || cfg.lambda < 0.0 || cfg.step <= 0.0 {
        return Err(CliError::config("--tau and --step must be > 0 and --lambda >= 0"));
    }
    let out = out_dir(&s);
    s.record_output("gradcheck", out.join("gradcheck.csv"));
    write_manifest(&s)?;

    let report = gs_infonce::run_gradcheck(&cfg)?;
    let passed = report.passes(GRADCHECK_TOLERANCE);
    let csv = format!(
        "trials,max_relative_error,max_abs_error,max_entrywise_relative_error,worst_seed,passed\n{},{:.6e},{:.6e},{:.6e},{},{}\n",
        report.trials,
        report.max_relative_error,
        report.max_abs_error,
        report.max_entrywise_relative_error,
        report.worst_seed,
        passed
    );
    write_file(&out.join("gradcheck.csv"), &csv)?;
    emit(stdout, &csv)?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Tolerance {
            max_relative_error: report.max_relative_error,
            tolerance: GRADCHECK_TOLERANCE,
            worst_seed: report.worst_seed,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub multiplier: f64,
    pub noise_count: usize,
    pub val_spearman: f64,
    pub test_spearman: f64,
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("multiplier,M,val_spearman,test_spearman\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:.6},{},{:.6},{:.6}",
            r.multiplier, r.noise_count, r.val_spearman, r.test_spearman
        );
    }
    out
}

fn leg_dir(out: &Path, multiplier: f64) -> PathBuf {
    out.join(format!("m{multiplier}"))
}

/// One training run per noise multiplier. Every leg uses the same master
/// seed, so leg `m` equals a standalone `train` with `--m-multiplier m`.
fn ablate_m(mut s: Settings, stdout: &mut dyn Write) -> CliResult<()> {
    let corpus = s.require_path("corpus")?;
    let datasets = s.paths("sts");
    let [validation, test] = datasets.as_slice() else {
        return Err(CliError::config(
            "ablate-m needs exactly two --sts files: validation then test",
        ));
    };
    let out = out_dir(&s);
    let multipliers = s.reals("multipliers");
    let legs: Vec<(f64, TrainConfig)> = multipliers
        .iter()
        .map(|&m| {
            let dir = leg_dir(&out, m);
            train_config(&s, &corpus, &dir.join("checkpoint.bin"), Some(validation), m).map(|c| (m, c))
        })
        .collect::<CliResult<_>>()?;
    let counts: Vec<String> = legs.iter().map(|(_, c)| c.loss.noise.count.to_string()).collect();
    s.record_resolved("noise_counts", counts.join(","));
    s.record_output("ablation", out.join("ablation.csv"));
    if s.flag("svg") {
        s.record_output("svg", out.join("ablation.svg"));
    }
    for (m, _) in &legs {
        s.record_output(&format!("leg.m{m}"), leg_dir(&out, *m));
    }
    write_manifest(&s)?;

    let validation_pairs = load_sts_pairs(validation)?;
    let test_pairs = load_sts_pairs(test)?;
    let run_leg = |(m, cfg): &(f64, TrainConfig)| -> CliResult<AblationRow> {
        let outcome = train_run(cfg)?;
        write_logs(&leg_dir(&out, *m), &outcome.log)?;
        let val = evaluate_pairs(&outcome.best_params, &outcome.vocab, &validation_pairs, "validation")?;
        let tst = evaluate_pairs(&outcome.best_params, &outcome.vocab, &test_pairs, "test")?;
        Ok(AblationRow {
            multiplier: *m,
            noise_count: cfg.loss.noise.count,
            val_spearman: val.spearman,
            test_spearman: tst.spearman,
        })
    };
    let rows: Vec<AblationRow> = if s.flag("parallel") {
        legs.par_iter().map(run_leg).collect::<CliResult<_>>()?
    } else {
        legs.iter().map(run_leg).collect::<CliResult<_>>()?
    };

    let csv = ablation_csv(&rows);
    write_file(&out.join("ablation.csv"), &csv)?;
    if s.flag("svg") {
        let chart = LineChart {
            title: "Spearman vs. noise multiplier".into(),
            x_label: "M / batch size".into(),
            y_label: "Spearman".into(),
            x_ticks: rows.iter().map(|r| format!("{}", r.multiplier)).collect(),
            series: vec![
                Series {
                    label: "validation".into(),
                    values: rows.iter().map(|r| r.val_spearman).collect(),
                },
                Series {
                    label: "test".into(),
                    values: rows.iter().map(|r| r.test_spearman).collect(),
                },
            ],
        };
        write_file(&out.join("ablation.svg"), chart.render())?;
    }
    emit(stdout, &csv)
}

fn make_toy_data(mut s: Settings, stdout: &mut dyn Write) -> CliResult<()> {
    let cfg = ToyDataConfig {
        sentences: s.count("sentences"),
        clusters: s.count("clusters"),
        pairs: s.count("pairs"),
        seed: s.seed("seed"),
        ..ToyDataConfig::default()
    };
    cfg.validate()?;
    let out = out_dir(&s);
    let paths = crate::toy_data::ToyDataPaths::in_dir(&out);
    s.record_output("corpus", &paths.corpus);
    s.record_output("train", &paths.train);
    s.record_output("validation", &paths.validation);
    s.record_output("test", &paths.test);
    write_manifest(&s)?;
    write_toy_data(&cfg, &out)?;
    emit(
        stdout,
        &format!(
            "wrote {} sentences and {} pairs per split to {}\n",
            cfg.sentences,
            cfg.pairs,
            out.display()
        ),
    )
}
