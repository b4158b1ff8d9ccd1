//! The command-line subcommands as library functions.
//!
//! The staged commands pass data between runs through files only: each stage
//! reads what the previous one wrote under the output directory. Because
//! every file round-trips bit for bit, a staged run produces the same
//! artifacts as `run-all`.

use crate::checkpoint::{load_checkpoint, save_checkpoint, ModelCheckpoint};
use crate::config::ExperimentConfig;
use crate::layout::OutputLayout;
use crate::pipeline::{
    assemble_report, ate_checkpoints, ate_stage, audit_seed, baseline_snapshot, generate, run_seed, te_stage,
    ted_checkpoint, train_baseline_stage, AuditModels, MetricsReport, SeedOutcome, StageTiming, ATE_D, ATE_D_INVERTED, ATE_D_PLAIN, BASELINE, TE_D,
};
use crate::report::{read_seed_audit, write_report, write_seed_audit, write_timings};
use crate::{write_file, HarnessError, Result};
use std::collections::BTreeMap;
use synthbias::{read_split, write_split, DatasetBundle, SplitName};

/// Progress messages go to stderr unless quiet.
#[derive(Debug, Clone, Copy)]
pub struct Log {
    pub quiet: bool,
}

impl Log {
    pub fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn write_config(cfg: &ExperimentConfig, layout: &OutputLayout) -> Result<()> {
    write_file(&layout.config(), &cfg.to_toml_string()?)
}

pub fn write_bundle(bundle: &DatasetBundle, layout: &OutputLayout, seed: u64) -> Result<()> {
    for name in SplitName::ALL {
        let path = layout.split(seed, name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.display().to_string(), source })?;
        }
        write_split(&path, name, &bundle.spec, bundle.split(name))?;
    }
    Ok(())
}

/// Reads the four splits of `seed` and checks they were generated from the configured spec.
pub fn read_bundle(cfg: &ExperimentConfig, layout: &OutputLayout, seed: u64) -> Result<DatasetBundle> {
    let expected = cfg.spec_for(seed);
    let mut splits = Vec::with_capacity(4);
    for name in SplitName::ALL {
        let path = layout.split(seed, name);
        let (found, spec, samples) = read_split(&path)?;
        let corrupt = |reason: String| HarnessError::Corrupt { path: path.display().to_string(), reason };
        if found != name {
            return Err(corrupt(format!("holds split '{}', expected '{}'", found.as_str(), name.as_str())));
        }
        if spec != expected {
            return Err(corrupt("generated with a different bias_spec than the current config".into()));
        }
        splits.push(samples);
    }
    let mut it = splits.into_iter();
    let mut next = || it.next().unwrap_or_default();
    Ok(DatasetBundle { spec: expected, train: next(), id_test: next(), ood_test: next(), cf_test: next() })
}

fn load_kind(layout: &OutputLayout, seed: u64, model: &str) -> Result<ModelCheckpoint> {
    load_checkpoint(&layout.checkpoint(seed, model))
}

fn snapshot(ckpt: &ModelCheckpoint) -> BTreeMap<String, f64> {
    ckpt.metrics.iter().cloned().collect()
}

pub fn generate_data(cfg: &ExperimentConfig, layout: &OutputLayout, log: Log) -> Result<()> {
    write_config(cfg, layout)?;
    for &seed in &cfg.seeds {
        write_bundle(&generate(cfg, seed)?, layout, seed)?;
        log.say(format!("seed {seed}: wrote dataset to {}", layout.seed_dir(seed).display()));
    }
    Ok(())
}

pub fn train_baseline(cfg: &ExperimentConfig, layout: &OutputLayout, log: Log) -> Result<()> {
    let snap = cfg.to_toml_string()?;
    for &seed in &cfg.seeds {
        let bundle = read_bundle(cfg, layout, seed)?;
        let t = train_baseline_stage(cfg, seed, &bundle)?;
        let ckpt = ModelCheckpoint::from_baseline(&t.model, &snap, baseline_snapshot(&t));
        save_checkpoint(&ckpt, &layout.checkpoint(seed, BASELINE))?;
        log.say(format!("seed {seed}: baseline id {:.4} ood {:.4}", t.id_accuracy, t.ood_accuracy));
    }
    Ok(())
}

pub fn run_ate_d(cfg: &ExperimentConfig, layout: &OutputLayout, log: Log) -> Result<()> {
    for &seed in &cfg.seeds {
        let bundle = read_bundle(cfg, layout, seed)?;
        let base = load_kind(layout, seed, BASELINE)?.to_baseline()?;
        let ate = ate_stage(cfg, seed, &bundle, &base)?;
        log.say(format!(
            "seed {seed}: ATE-D ood {:.4} (inverted {:.4}, plain {:.4})",
            ate.standard.ood_accuracy, ate.inverted.ood_accuracy, ate.plain.ood_accuracy
        ));
        for (name, ckpt) in ate_checkpoints(&cfg.to_toml_string()?, &ate) {
            save_checkpoint(&ckpt, &layout.checkpoint(seed, &name))?;
        }
    }
    Ok(())
}

pub fn run_te_d(cfg: &ExperimentConfig, layout: &OutputLayout, log: Log) -> Result<()> {
    for &seed in &cfg.seeds {
        let bundle = read_bundle(cfg, layout, seed)?;
        let base = load_kind(layout, seed, BASELINE)?.to_baseline()?;
        let ted = te_stage(cfg, seed, &bundle, &base)?;
        log.say(format!("seed {seed}: TE-D id {:.4} ood {:.4}", ted.id_accuracy, ted.ood_accuracy));
        let (name, ckpt) = ted_checkpoint(&cfg.to_toml_string()?, &ted);
        save_checkpoint(&ckpt, &layout.checkpoint(seed, &name))?;
    }
    Ok(())
}

/// Audits one seed from the files on disk.
pub fn audit_from_files(cfg: &ExperimentConfig, layout: &OutputLayout, seed: u64) -> Result<SeedOutcome> {
    let bundle = read_bundle(cfg, layout, seed)?;
    let mut training = BTreeMap::new();
    let base_ckpt = load_kind(layout, seed, BASELINE)?;
    let base = base_ckpt.to_baseline()?;
    training.insert(BASELINE.to_string(), snapshot(&base_ckpt));

    let mut ate = Vec::new();
    if cfg.method.runs_ate() {
        for name in [ATE_D, ATE_D_INVERTED, ATE_D_PLAIN] {
            let c = load_kind(layout, seed, name)?;
            training.insert(name.to_string(), snapshot(&c));
            ate.push(c.to_ate()?);
        }
    }
    let ted = if cfg.method.runs_te() {
        let c = load_kind(layout, seed, TE_D)?;
        training.insert(TE_D.to_string(), snapshot(&c));
        Some(c.to_ted()?)
    } else {
        None
    };
    let models = AuditModels {
        baseline: &base,
        ate: (ate.len() == 3).then(|| [&ate[0], &ate[1], &ate[2]]),
        ted: ted.as_ref(),
    };
    let report = audit_seed(cfg, seed, &bundle, models, training)?;
    Ok(SeedOutcome { seed, report: Some(report), error: None })
}

pub fn audit(cfg: &ExperimentConfig, layout: &OutputLayout, log: Log) -> Result<()> {
    for &seed in &cfg.seeds {
        let outcome = audit_from_files(cfg, layout, seed)?;
        write_seed_audit(&outcome, &layout.audit(seed))?;
        log.say(format!("seed {seed}: wrote {}", layout.audit(seed).display()));
    }
    Ok(())
}

/// Assembles the report from the per-seed audit files and writes every report file.
pub fn report(cfg: &ExperimentConfig, layout: &OutputLayout, log: Log) -> Result<MetricsReport> {
    let outcomes = cfg.seeds.iter().map(|&s| read_seed_audit(&layout.audit(s))).collect::<Result<Vec<_>>>()?;
    if outcomes.iter().all(|o| o.report.is_none()) {
        return Err(HarnessError::AllSeedsFailed("no seed has a successful audit".into()));
    }
    let report = assemble_report(cfg, outcomes)?;
    write_report(&report, layout)?;
    log.say(format!("wrote report to {}", layout.report_dir().display()));
    Ok(report)
}

/// Runs every stage for every seed and writes all artifacts. A failing seed is
/// recorded in its audit file and the run continues; the call fails only if
/// every seed failed.
pub fn run_all(cfg: &ExperimentConfig, layout: &OutputLayout, log: Log) -> Result<MetricsReport> {
    cfg.validate()?;
    write_config(cfg, layout)?;
    let mut timings: Vec<StageTiming> = Vec::new();
    let mut outcomes = Vec::new();
    for &seed in &cfg.seeds {
        log.say(format!("seed {seed}: running"));
        let outcome = match run_seed(cfg, seed, &mut timings) {
            Ok((art, report)) => {
                write_bundle(&art.bundle, layout, seed)?;
                for (name, ckpt) in art.checkpoints(cfg)? {
                    save_checkpoint(&ckpt, &layout.checkpoint(seed, &name))?;
                }
                for m in &report.models {
                    log.say(format!(
                        "seed {seed}: {:<16} id {:.4} ood {:.4}",
                        m.model, m.id_accuracy, m.ood_accuracy
                    ));
                }
                SeedOutcome { seed, report: Some(report), error: None }
            }
            Err(e) => {
                log.say(format!("seed {seed}: failed: {e}"));
                SeedOutcome { seed, report: None, error: Some(e.to_string()) }
            }
        };
        write_seed_audit(&outcome, &layout.audit(seed))?;
        outcomes.push(outcome);
    }
    write_timings(&timings, &layout.timings())?;
    if outcomes.iter().all(|o| o.report.is_none()) {
        let msgs: Vec<String> =
            outcomes.iter().map(|o| format!("seed {}: {}", o.seed, o.error.as_deref().unwrap_or(""))).collect();
        return Err(HarnessError::AllSeedsFailed(msgs.join("; ")));
    }
    let report = assemble_report(cfg, outcomes)?;
    write_report(&report, layout)?;
    log.say(format!("wrote report to {}", layout.report_dir().display()));
    Ok(report)
}
