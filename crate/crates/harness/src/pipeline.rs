//! The per-seed pipeline and the metric suite.
//!
//! A seed runs dataset generation, the biased baseline, the selected
//! debiasing methods and then [`audit_seed`], which evaluates every model on
//! the same splits. [`run_experiment`] repeats this for each configured seed,
//! keeps going when a seed fails, and aggregates mean ± std over the seeds
//! that succeeded.

use crate::checkpoint::ModelCheckpoint;
use crate::config::{stage_seed, ExperimentConfig, Stage};
use crate::{HarnessError, Result};
use ate_d::{build_dictionary, finetune_recalibrated, train_autoencoder, AteModel, Autoencoder, TrainedAte, Weighting};
use baseline::{train_biased, BiasedModel, TrainedBaseline};
use infomath::FeatureMatrix;
use metrics::{
    bootstrap_significance, groups_of, highest_bias_groups, modal_predictions, model_prediction_entropy,
    necessity_delta, probe_confounders, split_accuracy, sufficiency_lambda, train_modal_labels, Classifier,
    MetricsError,
};
use netcore::{Mat, Module};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;
use synthbias::{make_dataset, DatasetBundle, SplitArrays};
use te_d::{batch_rates, train_te_d, ConfHead, LossComponents, TeDModel, TrainedTeD};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Model names used throughout reports, checkpoints and file names.
pub const BASELINE: &str = "baseline";
pub const ATE_D: &str = "ate_d";
pub const ATE_D_INVERTED: &str = "ate_d_inverted";
pub const ATE_D_PLAIN: &str = "ate_d_plain";
pub const TE_D: &str = "te_d";
pub const TE_D_CONF_HEAD: &str = "te_d_conf_head";

/// Tag mixed into the bootstrap seed of the comparison pooled over seeds.
const POOLED_BOOTSTRAP_TAG: u64 = 0x504F_4F4C;

/// λ of one prefix group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLambda {
    pub group_id: usize,
    /// Number of evaluation samples in the group.
    pub n: usize,
    /// `None` when the full-input certainty is below the degeneracy guard.
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: String,
    pub train_accuracy: f64,
    pub id_accuracy: f64,
    pub ood_accuracy: f64,
    pub cf_accuracy: f64,
    /// id accuracy minus accuracy on the counterfactual copy of the id split.
    pub necessity_delta: f64,
    /// λ on the highest-bias groups, measured on the id split.
    pub lambda: Vec<GroupLambda>,
    /// Mean λ over the non-degenerate groups.
    pub lambda_mean: Option<f64>,
    pub ood_prediction_entropy: f64,
    /// Modal ood prediction of each group.
    pub ood_modal_by_group: Vec<Option<usize>>,
    /// Groups whose modal ood prediction equals the train-split modal label.
    pub modal_matches: usize,
    pub param_count: usize,
    /// Parameters updated while fitting this model from the baseline.
    pub trainable_param_count: usize,
    /// Parameters present in addition to the baseline's.
    pub added_param_count: usize,
    /// Per-sample ood correctness as a string of `0`/`1`, kept for pooled bootstraps.
    pub ood_correct: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMetrics {
    /// Which confounder representation was probed.
    pub source: String,
    pub accuracy: f64,
    pub prediction_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEntry {
    pub method: String,
    pub reference: String,
    /// Method ood accuracy minus reference ood accuracy.
    pub ood_gain: f64,
    pub resamples: usize,
    pub p_value: f64,
}

/// One row of the TE-D loss log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub l_con: f64,
    pub l_ce: f64,
    pub l_ce_conf: f64,
    pub r: f64,
    pub total: f64,
}

impl LossRow {
    pub fn from_components(epoch: usize, c: &LossComponents) -> Self {
        LossRow { epoch, l_con: c.l_con, l_ce: c.l_ce, l_ce_conf: c.l_ce_conf, r: c.r, total: c.total }
    }

    pub fn values(&self) -> [f64; 5] {
        [self.l_con, self.l_ce, self.l_ce_conf, self.r, self.total]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    /// Groups on which λ is reported, highest bias first.
    pub lambda_groups: Vec<usize>,
    pub train_modal_labels: Vec<Option<usize>>,
    pub models: Vec<ModelMetrics>,
    pub probes: Vec<ProbeMetrics>,
    pub bootstrap: Vec<BootstrapEntry>,
    /// Mean batch rate-distortion of z_c and z_θ on the train split.
    pub te_d_rates: Option<(f64, f64)>,
    pub te_d_loss: Vec<LossRow>,
    /// Metric snapshots recorded at training time, keyed by model name.
    pub training: BTreeMap<String, BTreeMap<String, f64>>,
}

impl SeedReport {
    pub fn model(&self, name: &str) -> Option<&ModelMetrics> {
        self.models.iter().find(|m| m.model == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub report: Option<SeedReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateStat {
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single seed.
    pub std: f64,
    pub n: usize,
}

impl AggregateStat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(AggregateStat { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateModel {
    pub model: String,
    pub stats: BTreeMap<String, AggregateStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedOutcome>,
    pub aggregate: Vec<AggregateModel>,
    /// Paired bootstrap on ood correctness concatenated over successful seeds.
    pub pooled_bootstrap: Vec<BootstrapEntry>,
}

impl MetricsReport {
    pub fn successful(&self) -> impl Iterator<Item = &SeedReport> {
        self.seeds.iter().filter_map(|s| s.report.as_ref())
    }

    pub fn aggregate_of(&self, model: &str) -> Option<&AggregateModel> {
        self.aggregate.iter().find(|a| a.model == model)
    }

    /// Mean of `stat` for `model`, if present.
    pub fn mean(&self, model: &str, stat: &str) -> Option<f64> {
        self.aggregate_of(model)?.stats.get(stat).map(|s| s.mean)
    }
}

/// Wall-clock duration of one stage. Kept out of the report so reports stay deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTiming {
    pub seed: u64,
    pub stage: String,
    pub seconds: f64,
}

/// The three ATE-D variants sharing one autoencoder and dictionary.
#[derive(Debug, Clone)]
pub struct AteRun {
    pub ae_initial_loss: f64,
    pub ae_final_loss: f64,
    pub standard: TrainedAte,
    pub inverted: TrainedAte,
    pub plain: TrainedAte,
}

/// Everything trained for one seed.
#[derive(Debug, Clone)]
pub struct SeedArtifacts {
    pub seed: u64,
    pub bundle: DatasetBundle,
    pub baseline: TrainedBaseline,
    pub ate: Option<AteRun>,
    pub ted: Option<TrainedTeD>,
}

/// Frozen models handed to the audit.
#[derive(Debug, Clone, Copy)]
pub struct AuditModels<'a> {
    pub baseline: &'a BiasedModel,
    /// Standard, inverted and plain ATE-D models.
    pub ate: Option<[&'a AteModel; 3]>,
    pub ted: Option<&'a TeDModel>,
}

impl SeedArtifacts {
    pub fn audit_models(&self) -> AuditModels<'_> {
        AuditModels {
            baseline: &self.baseline.model,
            ate: self.ate.as_ref().map(|a| [&a.standard.model, &a.inverted.model, &a.plain.model]),
            ted: self.ted.as_ref().map(|t| &t.model),
        }
    }

    /// Checkpoints of every trained model, keyed by model name.
    pub fn checkpoints(&self, cfg: &ExperimentConfig) -> Result<Vec<(String, ModelCheckpoint)>> {
        let snapshot = cfg.to_toml_string()?;
        let mut out = vec![(
            BASELINE.to_string(),
            ModelCheckpoint::from_baseline(&self.baseline.model, &snapshot, baseline_snapshot(&self.baseline)),
        )];
        if let Some(a) = &self.ate {
            out.extend(ate_checkpoints(&snapshot, a));
        }
        if let Some(t) = &self.ted {
            out.push(ted_checkpoint(&snapshot, t));
        }
        Ok(out)
    }

    /// Training-time metric snapshots, keyed by model name.
    pub fn training_snapshots(&self) -> BTreeMap<String, BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        out.insert(BASELINE.to_string(), baseline_snapshot(&self.baseline).into_iter().collect());
        if let Some(a) = &self.ate {
            for (name, t) in [(ATE_D, &a.standard), (ATE_D_INVERTED, &a.inverted), (ATE_D_PLAIN, &a.plain)] {
                out.insert(name.to_string(), ate_snapshot(a, t).into_iter().collect());
            }
        }
        if let Some(t) = &self.ted {
            out.insert(TE_D.to_string(), ted_snapshot(t).into_iter().collect());
        }
        out
    }
}

fn epoch_entries<'a>(prefix: &str, values: &'a [f64]) -> impl Iterator<Item = (String, f64)> + 'a {
    let prefix = prefix.to_string();
    values.iter().enumerate().map(move |(e, &v)| (format!("epoch{e}.{prefix}"), v))
}

pub fn baseline_snapshot(t: &TrainedBaseline) -> Vec<(String, f64)> {
    let mut m = vec![
        ("train_accuracy".to_string(), t.train_accuracy),
        ("id_accuracy".to_string(), t.id_accuracy),
        ("ood_accuracy".to_string(), t.ood_accuracy),
    ];
    m.extend(epoch_entries("loss", &t.epoch_losses));
    m
}

/// Checkpoints of the three ATE-D variants; `config` is the TOML snapshot.
pub fn ate_checkpoints(config: &str, a: &AteRun) -> Vec<(String, ModelCheckpoint)> {
    [(ATE_D, &a.standard), (ATE_D_INVERTED, &a.inverted), (ATE_D_PLAIN, &a.plain)]
        .into_iter()
        .map(|(name, t)| (name.to_string(), ModelCheckpoint::from_ate(&t.model, config, ate_snapshot(a, t))))
        .collect()
}

pub fn ted_checkpoint(config: &str, t: &TrainedTeD) -> (String, ModelCheckpoint) {
    (TE_D.to_string(), ModelCheckpoint::from_ted(&t.model, config, ted_snapshot(t)))
}

fn ate_snapshot(a: &AteRun, t: &TrainedAte) -> Vec<(String, f64)> {
    let mut m = vec![
        ("ae_initial_loss".to_string(), a.ae_initial_loss),
        ("ae_final_loss".to_string(), a.ae_final_loss),
        ("head_scale".to_string(), t.head_scale),
        ("id_accuracy".to_string(), t.id_accuracy),
        ("ood_accuracy".to_string(), t.ood_accuracy),
    ];
    m.extend(epoch_entries("loss", &t.epoch_losses));
    m
}

fn ted_snapshot(t: &TrainedTeD) -> Vec<(String, f64)> {
    let mut m = vec![
        ("id_accuracy".to_string(), t.id_accuracy),
        ("ood_accuracy".to_string(), t.ood_accuracy),
        ("conf_ood_accuracy".to_string(), t.conf_ood_accuracy),
        ("rate_conf".to_string(), t.final_rate_conf),
        ("rate_theta".to_string(), t.final_rate_theta),
    ];
    for (e, c) in t.epoch_log.iter().enumerate() {
        for (name, v) in LossComponents::NAMES.iter().zip(c.values()) {
            m.push((format!("epoch{e}.{name}"), v));
        }
    }
    m
}

/// Rebuilds the TE-D loss log from a training snapshot.
pub fn loss_rows_from_snapshot(snapshot: &BTreeMap<String, f64>) -> Vec<LossRow> {
    let mut rows = Vec::new();
    loop {
        let e = rows.len();
        let get = |name: &str| snapshot.get(&format!("epoch{e}.{name}")).copied();
        let vals: Option<Vec<f64>> = LossComponents::NAMES.iter().map(|n| get(n)).collect();
        match vals {
            Some(v) => rows.push(LossRow { epoch: e, l_con: v[0], l_ce: v[1], l_ce_conf: v[2], r: v[3], total: v[4] }),
            None => return rows,
        }
    }
}

fn timed<T>(timings: &mut Vec<StageTiming>, seed: u64, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    timings.push(StageTiming { seed, stage: stage.to_string(), seconds: start.elapsed().as_secs_f64() });
    Ok(out)
}

pub fn generate(cfg: &ExperimentConfig, seed: u64) -> Result<DatasetBundle> {
    Ok(make_dataset(&cfg.spec_for(seed))?)
}

pub fn train_baseline_stage(cfg: &ExperimentConfig, seed: u64, bundle: &DatasetBundle) -> Result<TrainedBaseline> {
    Ok(train_biased(bundle, &cfg.baseline_train(seed))?)
}

/// Trains the autoencoder and dictionary once, then fine-tunes the head
/// under standard, inverted and plain weighting.
pub fn ate_stage(cfg: &ExperimentConfig, seed: u64, bundle: &DatasetBundle, base: &BiasedModel) -> Result<AteRun> {
    let train = SplitArrays::from_samples(&bundle.train);
    let features = FeatureMatrix::new(base.stacked_features(&train.q, &train.v)?)?;
    let ae_cfg = cfg.autoencoder(seed);
    let ae = Autoencoder::new(base.d_f(), &ae_cfg, stage_seed(seed, Stage::Autoencoder))?;
    let (ae, report) = train_autoencoder(ae, &features, &ae_cfg.train)?;
    let dict = build_dictionary(&ae, &features, cfg.ate.k, stage_seed(seed, Stage::Dictionary))?;
    let head = cfg.ate_head(seed);
    let fit = |w| finetune_recalibrated(base, &ae, &dict, bundle, &head, w);
    Ok(AteRun {
        ae_initial_loss: report.initial_loss,
        ae_final_loss: report.final_loss,
        standard: fit(Weighting::Standard)?,
        inverted: fit(Weighting::Inverted)?,
        plain: fit(Weighting::Plain)?,
    })
}

pub fn te_stage(cfg: &ExperimentConfig, seed: u64, bundle: &DatasetBundle, base: &BiasedModel) -> Result<TrainedTeD> {
    Ok(train_te_d(base, bundle, &cfg.te_d(seed))?)
}

/// Trains every model the config selects for `seed`.
pub fn train_seed(cfg: &ExperimentConfig, seed: u64, timings: &mut Vec<StageTiming>) -> Result<SeedArtifacts> {
    let bundle = timed(timings, seed, "generate", || generate(cfg, seed))?;
    let baseline = timed(timings, seed, "baseline", || train_baseline_stage(cfg, seed, &bundle))?;
    let ate = if cfg.method.runs_ate() {
        Some(timed(timings, seed, "ate_d", || ate_stage(cfg, seed, &bundle, &baseline.model))?)
    } else {
        None
    };
    let ted = if cfg.method.runs_te() {
        Some(timed(timings, seed, "te_d", || te_stage(cfg, seed, &bundle, &baseline.model))?)
    } else {
        None
    };
    Ok(SeedArtifacts { seed, bundle, baseline, ate, ted })
}

/// Precomputed split arrays and group structure shared by every model's evaluation.
struct EvalContext<'a> {
    bundle: &'a DatasetBundle,
    train: SplitArrays,
    id: SplitArrays,
    ood: SplitArrays,
    cf: SplitArrays,
    lambda_groups: Vec<metrics::GroupSpec>,
    train_modes: Vec<Option<usize>>,
}

impl<'a> EvalContext<'a> {
    fn new(cfg: &ExperimentConfig, bundle: &'a DatasetBundle) -> Self {
        let spec = &bundle.spec;
        let (g, k) = (spec.num_groups(), spec.num_classes);
        let top = highest_bias_groups(&bundle.train, g, k, cfg.audit.lambda_groups);
        let all = groups_of(&bundle.id_test, g);
        let lambda_groups = top.iter().map(|&id| all[id].clone()).collect();
        EvalContext {
            bundle,
            train: SplitArrays::from_samples(&bundle.train),
            id: SplitArrays::from_samples(&bundle.id_test),
            ood: SplitArrays::from_samples(&bundle.ood_test),
            cf: SplitArrays::from_samples(&bundle.cf_test),
            lambda_groups,
            train_modes: train_modal_labels(&bundle.train, g, k),
        }
    }

    fn evaluate<C: Classifier + ?Sized>(&self, name: &str, model: &C, params: [usize; 3]) -> Result<ModelMetrics> {
        let spec = &self.bundle.spec;
        let mut lambda = Vec::with_capacity(self.lambda_groups.len());
        for grp in &self.lambda_groups {
            let value = match sufficiency_lambda(model, grp, &self.bundle.id_test, spec.block_dim) {
                Ok(v) => Some(v),
                Err(MetricsError::DegenerateGroup { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            lambda.push(GroupLambda { group_id: grp.group_id, n: grp.sample_indices.len(), lambda: value });
        }
        let finite: Vec<f64> = lambda.iter().filter_map(|l| l.lambda).collect();
        let lambda_mean = (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64);

        let ood_preds = model.predict_labels(&self.ood.q, &self.ood.v)?;
        let ood_modal_by_group = modal_predictions(&ood_preds, &self.ood.groups, spec.num_groups(), spec.num_classes);
        let modal_matches = ood_modal_by_group
            .iter()
            .zip(&self.train_modes)
            .filter(|(a, b)| a.is_some() && a == b)
            .count();
        let ood_correct: String = ood_preds
            .iter()
            .zip(&self.ood.labels)
            .map(|(p, y)| if p == y { '1' } else { '0' })
            .collect();
        let ood_accuracy = metrics::accuracy(&ood_preds, &self.ood.labels)?;

        Ok(ModelMetrics {
            model: name.to_string(),
            train_accuracy: split_accuracy(model, &self.train)?,
            id_accuracy: split_accuracy(model, &self.id)?,
            ood_accuracy,
            cf_accuracy: split_accuracy(model, &self.cf)?,
            necessity_delta: necessity_delta(model, &self.bundle.id_test, &self.bundle.cf_test)?,
            lambda,
            lambda_mean,
            ood_prediction_entropy: model_prediction_entropy(model, &self.ood)?,
            ood_modal_by_group,
            modal_matches,
            param_count: params[0],
            trainable_param_count: params[1],
            added_param_count: params[2],
            ood_correct,
        })
    }
}

/// Decodes a `0`/`1` correctness string.
pub fn parse_correctness(s: &str) -> Result<Vec<u8>> {
    s.bytes()
        .map(|b| match b {
            b'0' => Ok(0),
            b'1' => Ok(1),
            _ => Err(HarnessError::Corrupt { path: "<report>".into(), reason: format!("bad correctness byte {b}") }),
        })
        .collect()
}

fn bootstrap_entry(method: &ModelMetrics, reference: &ModelMetrics, resamples: usize, seed: u64) -> Result<BootstrapEntry> {
    let a = parse_correctness(&method.ood_correct)?;
    let b = parse_correctness(&reference.ood_correct)?;
    bootstrap_pair(&method.model, &reference.model, &a, &b, resamples, seed)
}

fn bootstrap_pair(method: &str, reference: &str, a: &[u8], b: &[u8], resamples: usize, seed: u64) -> Result<BootstrapEntry> {
    let n = a.len().max(1) as f64;
    let gain = (a.iter().map(|&x| x as f64).sum::<f64>() - b.iter().map(|&x| x as f64).sum::<f64>()) / n;
    Ok(BootstrapEntry {
        method: method.to_string(),
        reference: reference.to_string(),
        ood_gain: gain,
        resamples,
        p_value: bootstrap_significance(a, b, resamples, seed)?,
    })
}

/// Methods compared against the baseline in bootstrap tests.
const COMPARED: [&str; 2] = [ATE_D, TE_D];

/// Runs the full metric suite on frozen models.
pub fn audit_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    bundle: &DatasetBundle,
    models: AuditModels<'_>,
    training: BTreeMap<String, BTreeMap<String, f64>>,
) -> Result<SeedReport> {
    let ctx = EvalContext::new(cfg, bundle);
    let base_params = models.baseline.param_count();
    let mut out = vec![ctx.evaluate(BASELINE, models.baseline, [base_params, base_params, 0])?];
    let mut probes = Vec::new();
    let k = bundle.spec.num_classes;
    let probe_cfg = cfg.probe(seed);

    if let Some(ate) = models.ate {
        for (name, m) in [ATE_D, ATE_D_INVERTED, ATE_D_PLAIN].into_iter().zip(ate) {
            let added = m.ae.param_count() + m.dict.centroids().len();
            let total = m.backbone.param_count() + added + m.head.param_count();
            out.push(ctx.evaluate(name, m, [total, m.trainable_param_count(), added])?);
        }
        let std = ate[0];
        let x_train = std.pooled_latents(&ctx.train.q, &ctx.train.v)?;
        let x_ood = std.pooled_latents(&ctx.ood.q, &ctx.ood.v)?;
        let r = probe_confounders(&x_train, &ctx.train.labels, &x_ood, &ctx.ood.labels, k, &probe_cfg)?;
        probes.push(ProbeMetrics {
            source: ATE_D.into(),
            accuracy: r.accuracy,
            prediction_entropy: r.prediction_entropy,
        });
    }

    let mut te_d_rates = None;
    if let Some(m) = models.ted {
        let params = [m.param_count(), m.trainable_param_count(), m.added_param_count()];
        out.push(ctx.evaluate(TE_D, m, params)?);
        out.push(ctx.evaluate(TE_D_CONF_HEAD, &ConfHead(m), params)?);
        let code = |s: &SplitArrays| -> Result<Mat> {
            let f = m.features(&s.q, &s.v)?;
            Ok(m.confounder_code(&f.z_theta)?)
        };
        let r = probe_confounders(&code(&ctx.train)?, &ctx.train.labels, &code(&ctx.ood)?, &ctx.ood.labels, k, &probe_cfg)?;
        probes.push(ProbeMetrics {
            source: TE_D.into(),
            accuracy: r.accuracy,
            prediction_entropy: r.prediction_entropy,
        });
        te_d_rates = Some(batch_rates(m, &ctx.train, cfg.te.batch_size)?);
    }

    let mut bootstrap = Vec::new();
    let boot_seed = stage_seed(seed, Stage::Bootstrap);
    for (i, name) in COMPARED.iter().enumerate() {
        if let Some(m) = out.iter().find(|m| m.model == *name) {
            let s = boot_seed.wrapping_add(i as u64);
            bootstrap.push(bootstrap_entry(m, &out[0], cfg.audit.bootstrap_resamples, s)?);
        }
    }

    let te_d_loss = training.get(TE_D).map(loss_rows_from_snapshot).unwrap_or_default();
    Ok(SeedReport {
        seed,
        lambda_groups: ctx.lambda_groups.iter().map(|g| g.group_id).collect(),
        train_modal_labels: ctx.train_modes.clone(),
        models: out,
        probes,
        bootstrap,
        te_d_rates,
        te_d_loss,
        training,
    })
}

/// Trains and audits one seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, timings: &mut Vec<StageTiming>) -> Result<(SeedArtifacts, SeedReport)> {
    let art = train_seed(cfg, seed, timings)?;
    let report = timed(timings, seed, "audit", || {
        audit_seed(cfg, seed, &art.bundle, art.audit_models(), art.training_snapshots())
    })?;
    Ok((art, report))
}

/// Per-model statistic extracted for aggregation.
type StatFn = fn(&ModelMetrics) -> Option<f64>;

pub const AGGREGATED_STATS: [(&str, StatFn); 10] = [
    ("train_accuracy", |m| Some(m.train_accuracy)),
    ("id_accuracy", |m| Some(m.id_accuracy)),
    ("ood_accuracy", |m| Some(m.ood_accuracy)),
    ("cf_accuracy", |m| Some(m.cf_accuracy)),
    ("necessity_delta", |m| Some(m.necessity_delta)),
    ("lambda_mean", |m| m.lambda_mean),
    ("ood_prediction_entropy", |m| Some(m.ood_prediction_entropy)),
    ("modal_matches", |m| Some(m.modal_matches as f64)),
    ("trainable_param_count", |m| Some(m.trainable_param_count as f64)),
    ("added_param_count", |m| Some(m.added_param_count as f64)),
];

/// Builds the report from per-seed outcomes: aggregates and pooled bootstraps.
pub fn assemble_report(cfg: &ExperimentConfig, seeds: Vec<SeedOutcome>) -> Result<MetricsReport> {
    let ok: Vec<&SeedReport> = seeds.iter().filter_map(|s| s.report.as_ref()).collect();
    let mut names: Vec<String> = Vec::new();
    for r in &ok {
        for m in &r.models {
            if !names.contains(&m.model) {
                names.push(m.model.clone());
            }
        }
    }
    let mut aggregate = Vec::new();
    for name in &names {
        let per_seed: Vec<&ModelMetrics> = ok.iter().filter_map(|r| r.model(name)).collect();
        let mut stats = BTreeMap::new();
        for (stat, f) in AGGREGATED_STATS {
            let vals: Vec<f64> = per_seed.iter().filter_map(|m| f(m)).collect();
            if let Some(s) = AggregateStat::of(&vals) {
                stats.insert(stat.to_string(), s);
            }
        }
        aggregate.push(AggregateModel { model: name.clone(), stats });
    }

    let mut pooled_bootstrap = Vec::new();
    let pooled_seed = stage_seed(cfg.seeds[0] ^ POOLED_BOOTSTRAP_TAG, Stage::Bootstrap);
    for (i, method) in COMPARED.iter().enumerate() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for r in &ok {
            if let (Some(m), Some(base)) = (r.model(method), r.model(BASELINE)) {
                a.extend(parse_correctness(&m.ood_correct)?);
                b.extend(parse_correctness(&base.ood_correct)?);
            }
        }
        if !a.is_empty() {
            let s = pooled_seed.wrapping_add(i as u64);
            pooled_bootstrap.push(bootstrap_pair(method, BASELINE, &a, &b, cfg.audit.bootstrap_resamples, s)?);
        }
    }
    Ok(MetricsReport { format_version: REPORT_FORMAT_VERSION, config: cfg.clone(), seeds, aggregate, pooled_bootstrap })
}

/// Result of [`run_experiment`].
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub report: MetricsReport,
    /// Trained artifacts of the seeds that succeeded.
    pub artifacts: Vec<SeedArtifacts>,
    pub timings: Vec<StageTiming>,
}

/// Runs every configured seed. A failing seed is recorded in the report and
/// the remaining seeds still run; the call fails only if every seed failed.
pub fn run_experiment(cfg: &ExperimentConfig, mut on_seed: impl FnMut(u64, &Result<SeedReport>)) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let mut outcomes = Vec::new();
    let mut artifacts = Vec::new();
    let mut timings = Vec::new();
    for &seed in &cfg.seeds {
        match run_seed(cfg, seed, &mut timings) {
            Ok((art, report)) => {
                on_seed(seed, &Ok(report.clone()));
                artifacts.push(art);
                outcomes.push(SeedOutcome { seed, report: Some(report), error: None });
            }
            Err(e) => {
                let msg = e.to_string();
                on_seed(seed, &Err(e));
                outcomes.push(SeedOutcome { seed, report: None, error: Some(msg) });
            }
        }
    }
    if outcomes.iter().all(|o| o.report.is_none()) {
        let msgs: Vec<String> =
            outcomes.iter().map(|o| format!("seed {}: {}", o.seed, o.error.as_deref().unwrap_or(""))).collect();
        return Err(HarnessError::AllSeedsFailed(msgs.join("; ")));
    }
    let report = assemble_report(cfg, outcomes)?;
    Ok(ExperimentOutcome { report, artifacts, timings })
}
