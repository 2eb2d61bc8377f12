use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::info;

use sleepnet::clinical::cohort_stats;
use sleepnet::container::MANIFEST_FILE;
use sleepnet::metrics::{fmt_metric, TaskScores};
use sleepnet::model::{Model, ModelConfig};
use sleepnet::pipeline::{
    clinical_entry, end_to_end, record_name, report, run_ablation_suite, score_prediction, stage_seed, synth_record,
    RunConfig, RESOLVED_CONFIG,
};
use sleepnet::prediction::PredictionTrack;
use sleepnet::prep::{prepare_record, read_prepared, record_label_triples, write_prepared, PrepOptions, PREPARED_RATE};
use sleepnet::record::{generate_synthetic, parse_plan, read_record, write_record};
use sleepnet::remap::{output_bin, TaskLabelTriple};
use sleepnet::train::{ensemble_predict, make_folds, score_tracks, train_fold, EpochLog, RecordSource};

use crate::{Command, Overwrite};

/// A command declined to run; carries its exit code.
#[derive(Debug)]
pub struct Refused {
    pub code: u8,
    message: String,
}

impl fmt::Display for Refused {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Refused {}

fn refuse(code: u8, message: impl Into<String>) -> anyhow::Error {
    Refused {
        code,
        message: message.into(),
    }
    .into()
}

/// Makes `dir` an empty directory, replacing existing contents only with
/// `--force`.
fn claim_dir(dir: &Path, overwrite: &Overwrite) -> Result<()> {
    if dir.exists() {
        let occupied = !dir.is_dir() || fs::read_dir(dir)?.next().is_some();
        if occupied {
            if !overwrite.force {
                return Err(refuse(2, format!("{} exists; pass --force to replace it", dir.display())));
            }
            if dir.is_dir() {
                fs::remove_dir_all(dir).with_context(|| format!("removing {}", dir.display()))?;
            } else {
                fs::remove_file(dir).with_context(|| format!("removing {}", dir.display()))?;
            }
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn claim_file(path: &Path, overwrite: &Overwrite) -> Result<()> {
    if path.exists() && !overwrite.force {
        return Err(refuse(2, format!("{} exists; pass --force to replace it", path.display())));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::read(p)?),
        None => Ok(RunConfig::default()),
    }
}

/// Record directories directly under `dir`, sorted by name; `dir` itself
/// when it is a record.
fn record_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(refuse(2, format!("{} is not a directory", dir.display())));
    }
    if dir.join(MANIFEST_FILE).is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(refuse(2, format!("no records under {}", dir.display())));
    }
    Ok(dirs)
}

fn with_jsonl(path: &Path) -> PathBuf {
    path.with_extension("jsonl")
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            out,
            seed,
            records,
            duration,
            config,
            plan,
            overwrite,
        } => synth(&out, seed, records, duration, config.as_deref(), plan.as_deref(), &overwrite),
        Command::Prepare {
            input,
            out,
            pad_seconds,
            no_normalization,
            workers,
            overwrite,
        } => prepare(&input, &out, pad_seconds, !no_normalization, workers, &overwrite),
        Command::Train {
            data,
            fold,
            seed,
            config,
            out,
            overwrite,
        } => train(&data, fold as usize, seed, config.as_deref(), &out, &overwrite),
        Command::Ensemble {
            models,
            record,
            out,
            overwrite,
        } => predict(&models, &record, &out, &overwrite),
        Command::Predict {
            model,
            record,
            out,
            overwrite,
        } => predict(&[model], &record, &out, &overwrite),
        Command::Evaluate {
            pred,
            record,
            mask_nontarget,
            out,
            overwrite,
        } => evaluate(&pred, &record, mask_nontarget, out.as_deref(), &overwrite),
        Command::Report {
            pred,
            truth,
            out,
            config,
            overwrite,
        } => clinical(&pred, &truth, &out, config.as_deref(), &overwrite),
        Command::Ablate {
            config,
            experiments,
            epochs,
            seed,
            out,
            overwrite,
        } => ablate(config.as_deref(), experiments, epochs, seed, &out, &overwrite),
        Command::Pipeline {
            config,
            seed,
            out,
            overwrite,
        } => pipeline(config.as_deref(), seed, &out, &overwrite),
        Command::Config => {
            print!("{}", RunConfig::default().to_toml());
            Ok(())
        }
        Command::Selftest { cases } => selftest(cases),
    }
}

fn synth(
    out: &Path,
    seed: Option<u64>,
    records: Option<usize>,
    duration: Option<usize>,
    config: Option<&Path>,
    plan: Option<&Path>,
    overwrite: &Overwrite,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let plan = match plan {
        Some(p) => Some(parse_plan(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?),
        None => None,
    };
    if let Some(n) = records {
        cfg.data.records = n;
    }
    if let Some(d) = duration {
        cfg.data.duration_s = d;
        cfg.data.pad_seconds = cfg.data.pad_seconds.max(d);
    }
    cfg.validate()?;
    claim_dir(out, overwrite)?;
    cfg.write(&out.join(RESOLVED_CONFIG))?;
    for i in 0..cfg.data.records {
        let raw = match &plan {
            Some(plan) => {
                let name = record_name(i);
                let mut raw = generate_synthetic(
                    stage_seed(cfg.seed, &format!("signal/{name}")),
                    cfg.data.duration_s,
                    plan,
                )?;
                raw.record_id = name;
                raw
            }
            None => synth_record(&cfg, i)?,
        };
        write_record(&raw, &out.join(&raw.record_id))?;
        info!("wrote {} ({} s)", raw.record_id, cfg.data.duration_s);
    }
    Ok(())
}

fn prepare_one(dir: &Path, out: &Path, opts: &PrepOptions) -> Result<()> {
    let raw = read_record(dir).with_context(|| format!("reading {}", dir.display()))?;
    let prepared = prepare_record(&raw, opts).with_context(|| format!("preparing {}", raw.record_id))?;
    write_prepared(&prepared, &out.join(&raw.record_id))?;
    info!("prepared {} ({} s valid)", raw.record_id, prepared.valid_length_s);
    Ok(())
}

fn prepare(
    input: &Path,
    out: &Path,
    pad_seconds: usize,
    normalize: bool,
    workers: usize,
    overwrite: &Overwrite,
) -> Result<()> {
    let inputs = record_dirs(input)?;
    let opts = PrepOptions {
        pad_seconds,
        moving_normalization: normalize,
        ..PrepOptions::default()
    };
    claim_dir(out, overwrite)?;
    let workers = workers.clamp(1, inputs.len());
    // records are dealt round-robin; each worker stops at its first error
    let results: Vec<Result<()>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (inputs, opts) = (&inputs, &opts);
                s.spawn(move || {
                    inputs
                        .iter()
                        .skip(w)
                        .step_by(workers)
                        .try_for_each(|dir| prepare_one(dir, out, opts))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(anyhow::anyhow!("preparation worker panicked"))))
            .collect()
    });
    results.into_iter().collect()
}

fn train(
    data: &Path,
    fold: usize,
    seed: Option<u64>,
    config: Option<&Path>,
    out: &Path,
    overwrite: &Overwrite,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let paths = record_dirs(data)?;
    let first = read_prepared(&paths[0]).with_context(|| format!("reading {}", paths[0].display()))?;
    if first.samples() % cfg.model.total_pool() != 0 {
        bail!(refuse(
            2,
            format!(
                "prepared length {} s is not a multiple of the model's {} samples per output",
                first.seconds(),
                cfg.model.total_pool()
            )
        ));
    }
    let folds = make_folds(paths.len(), stage_seed(cfg.seed, "folds"))?;
    let plan = &folds[fold - 1];
    claim_dir(out, overwrite)?;
    cfg.folds = vec![fold];
    cfg.write(&out.join(RESOLVED_CONFIG))?;
    let names: String = paths
        .iter()
        .enumerate()
        .map(|(i, p)| format!("{i} {}\n", p.file_name().unwrap_or_default().to_string_lossy()))
        .collect();
    write_text(&out.join("records.txt"), &names)?;
    write_text(&out.join("fold.json"), &report::json_line(plan))?;
    info!(
        "fold {fold}: {} training, {} validation, {} testing records",
        plan.training.len(),
        plan.validation.len(),
        plan.testing.len()
    );
    let mut log = String::new();
    let mut jsonl = String::new();
    let start = Instant::now();
    let outcome = train_fold(
        &cfg.model,
        &cfg.train,
        &RecordSource::Disk(&paths),
        plan,
        stage_seed(cfg.seed, &format!("train/fold{fold}")),
        Some(out),
        |epoch: &EpochLog| {
            let line = epoch.line();
            info!("{line} [{:.0} s]", start.elapsed().as_secs_f64());
            log.push_str(&line);
            log.push('\n');
            jsonl.push_str(&report::json_line(epoch));
        },
    )?;
    write_text(&out.join("train_log.txt"), &log)?;
    write_text(&out.join("train_log.jsonl"), &jsonl)?;
    info!(
        "best validation arousal AUPRC {:.4} at epoch {}; checkpoint in {}",
        outcome.best_auprc,
        outcome.best_epoch,
        out.join("best").display()
    );
    Ok(())
}

fn predict(models: &[PathBuf], record: &Path, out: &Path, overwrite: &Overwrite) -> Result<()> {
    let models = models
        .iter()
        .map(|p| Model::load(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let rec = read_prepared(record).with_context(|| format!("reading {}", record.display()))?;
    claim_file(out, overwrite)?;
    let track = ensemble_predict(&models, &rec)?;
    track.write(out)?;
    info!("wrote {} s of predictions for {} to {}", track.len(), track.record_id, out.display());
    Ok(())
}

fn evaluate(pred: &Path, record: &Path, mask_nontarget: bool, out: Option<&Path>, overwrite: &Overwrite) -> Result<()> {
    let track = PredictionTrack::read(pred)?;
    let raw = read_record(record).with_context(|| format!("reading {}", record.display()))?;
    if let Some(o) = out {
        claim_file(o, overwrite)?;
        claim_file(&with_jsonl(o), overwrite)?;
    }
    let labels = record_label_triples(&raw);
    let scoring = score_prediction(&track, &labels, &raw.arousal, mask_nontarget)?;
    let rows = vec![(track.record_id.clone(), score_tracks(&scoring.per_second))];
    let raw_scores = TaskScores::of(&scoring.raw_arousal);
    let mut text = report::metrics_table("per-second scoring, ignored seconds excluded", &rows);
    text.push_str(&format!(
        "\n# arousal at {} Hz ({})\nauroc {} auprc {} masked_samples {}\n",
        raw.sample_rate,
        if mask_nontarget { "non-target samples masked" } else { "whole track" },
        fmt_metric(raw_scores.auroc),
        fmt_metric(raw_scores.auprc),
        scoring.raw_arousal.masked_count(),
    ));
    let mut jsonl = report::metrics_jsonl("record", &rows);
    jsonl.push_str(&report::json_line(&serde_json::json!({
        "kind": "raw_rate_arousal",
        "masked": mask_nontarget,
        "masked_samples": scoring.raw_arousal.masked_count(),
        "scores": raw_scores,
    })));
    print!("{text}");
    if let Some(o) = out {
        write_text(o, &text)?;
        write_text(&with_jsonl(o), &jsonl)?;
    }
    Ok(())
}

fn clinical(pred: &Path, truth: &Path, out: &Path, config: Option<&Path>, overwrite: &Overwrite) -> Result<()> {
    let cfg = load_config(config)?;
    if !pred.is_dir() {
        return Err(refuse(2, format!("{} is not a directory", pred.display())));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(pred)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(refuse(2, format!("no prediction files in {}", pred.display())));
    }
    claim_file(out, overwrite)?;
    claim_file(&with_jsonl(out), overwrite)?;
    let mut entries = Vec::new();
    for file in files {
        let track = PredictionTrack::read(&file)?;
        let dir = truth.join(&track.record_id);
        let raw = read_record(&dir).with_context(|| format!("reference record {}", dir.display()))?;
        let labels: Vec<TaskLabelTriple> = record_label_triples(&raw);
        // reject label triples the remapping cannot represent
        for &t in &labels {
            output_bin(t)?;
        }
        entries.push(clinical_entry(&track, &labels, &cfg.thresholds)?);
    }
    let truth_summaries: Vec<_> = entries.iter().map(|e| e.reference).collect();
    let predicted: Vec<_> = entries.iter().map(|e| e.predicted).collect();
    let reference_sleep: Vec<_> = entries.iter().map(|e| e.predicted_reference_sleep).collect();
    let stats = cohort_stats(&predicted, &truth_summaries)?;
    let stats_rs = cohort_stats(&reference_sleep, &truth_summaries)?;
    let text = report::clinical_report(&entries, &stats, &stats_rs);
    print!("{text}");
    write_text(out, &text)?;
    write_text(&with_jsonl(out), &report::clinical_jsonl(&entries, &stats, &stats_rs))
}

fn ablate(
    config: Option<&Path>,
    experiments: Vec<usize>,
    epochs: Option<usize>,
    seed: Option<u64>,
    out: &Path,
    overwrite: &Overwrite,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if epochs.is_some() {
        cfg.ablation_epochs = epochs;
    }
    cfg.validate()?;
    let experiments = if experiments.is_empty() {
        (1..=sleepnet::model::ABLATIONS.len()).collect()
    } else {
        experiments
    };
    claim_dir(out, overwrite)?;
    cfg.write(&out.join(RESOLVED_CONFIG))?;
    let start = Instant::now();
    let rows = run_ablation_suite(&cfg, &experiments, Some(out), |s| {
        info!("{s} [{:.0} s]", start.elapsed().as_secs_f64())
    })?;
    let text = report::ablation_report(&rows);
    print!("{text}");
    write_text(&out.join("ablation.txt"), &text)?;
    write_text(&out.join("ablation.jsonl"), &report::ablation_jsonl(&rows))?;
    if rows.iter().all(|r| r.outcome.is_err()) {
        bail!("every ablation experiment failed");
    }
    Ok(())
}

fn pipeline(config: Option<&Path>, seed: Option<u64>, out: &Path, overwrite: &Overwrite) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    claim_dir(out, overwrite)?;
    let start = Instant::now();
    end_to_end(&cfg, out, |s| info!("{s} [{:.0} s]", start.elapsed().as_secs_f64()))?;
    print!("{}", fs::read_to_string(out.join("metrics.txt"))?);
    Ok(())
}

fn selftest(cases: usize) -> Result<()> {
    let mut failures = 0;
    let mut report_line = |ok: bool, name: &str, detail: String| {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    let start = Instant::now();
    for check in autodiff::gradcheck::operator_suite(cases, 7)? {
        report_line(
            check.passed(),
            &format!("gradient {}", check.name),
            format!("max relative error {:.2e} < {:.0e}", check.max_rel_error, check.tolerance),
        );
    }
    info!("gradient checks took {:.1} s", start.elapsed().as_secs_f64());

    let triples = TaskLabelTriple::all();
    let mapped: Vec<_> = triples.iter().filter_map(|&t| output_bin(t).ok()).collect();
    let ignored = mapped.iter().filter(|b| b.is_ignored()).count();
    report_line(
        triples.len() == 18 && mapped.len() == 12 && ignored == 6,
        "label remapping",
        format!("{} triples, {} representable, {} ignored", triples.len(), mapped.len(), ignored),
    );

    let model = Model::init(&ModelConfig::desk(), 1)?;
    let seconds = 1200;
    let input = autodiff::Tensor::zeros(&[sleepnet::prep::INPUT_CHANNELS, seconds * PREPARED_RATE]);
    let probs = model.predict(&input)?;
    let worst = (0..probs.len())
        .map(|t| ((0..4).map(|c| probs.get2(c, t)).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    report_line(
        probs.shape() == [4, seconds] && worst < 1e-6,
        "output shape",
        format!("{:?} from {:?}, column sums within {worst:.1e}", probs.shape(), input.shape()),
    );

    if failures > 0 {
        bail!(refuse(3, format!("{failures} self-test check(s) failed")));
    }
    Ok(())
}
