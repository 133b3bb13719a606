//! Training: the compositional MSE + optimal-pair ranking loss, a decoupled
//! weight-decay adaptive-moment optimizer, the single-threaded deterministic
//! training loop, and the ablation harness.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{build_pairs, AssignmentError, PairingResult, ParityPolicy};
use crate::degrade::{resample_plan, DegradeError, SynthesisConfig};
use crate::metrics::{lcc, map_at_k, srocc, MetricSample};
use crate::model::embed::{one_hot_embeddings, EmbeddingProvider, TextEmbeddings};
use crate::model::{forward_backward, BatchItem, HeadConfig, ModelError, QualityHead};
use crate::rng::{derive_seed, Rng};
use crate::volume::SlicePair;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample {0} has no true_dsc target")]
    MissingTarget(String),
    #[error("invalid loss config: {0}")]
    BadLossConfig(String),
    #[error("invalid train config: {0}")]
    BadTrainConfig(String),
    #[error("validation split is empty (need at least 2 volumes)")]
    EmptyValidation,
    #[error("batch has {predictions} predictions but {targets} targets")]
    BatchSizeMismatch { predictions: usize, targets: usize },
    #[error("pairing references index {0} outside batch of {1}")]
    PairOutOfRange(usize, usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Degrade(#[from] DegradeError),
}

/// Weights of the compositional loss.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
    pub margin_xi: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { lambda: 1.0, margin_xi: 0.05 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.margin_xi <= 0.0 || self.margin_xi.is_nan() {
            return Err(TrainError::BadLossConfig("margin_xi must be positive".into()));
        }
        if self.lambda < 0.0 {
            return Err(TrainError::BadLossConfig("lambda must be non-negative".into()));
        }
        Ok(())
    }
}

/// Pairwise hinge on prediction order:
/// max(0, (h_hat_i - h_hat_j) * (h_j - h_i) + xi).
pub fn rank_loss(h_hat_i: f64, h_hat_j: f64, h_i: f64, h_j: f64, xi: f64) -> f64 {
    ((h_hat_i - h_hat_j) * (h_j - h_i) + xi).max(0.0)
}

/// Mean squared error over all samples plus lambda times the mean rank hinge
/// over the given pairs. An unmatched odd sample contributes only to the MSE.
pub fn batch_loss(
    predictions: &[f64],
    targets: &[f64],
    pairs: &PairingResult,
    config: &LossConfig,
) -> Result<(f64, f64, f64), TrainError> {
    config.validate()?;
    if predictions.len() != targets.len() {
        return Err(TrainError::BatchSizeMismatch {
            predictions: predictions.len(),
            targets: targets.len(),
        });
    }
    let n = predictions.len();
    if n == 0 {
        return Err(TrainError::EmptyDataset);
    }
    for &(i, j) in &pairs.pairs {
        if i >= n || j >= n {
            return Err(TrainError::PairOutOfRange(i.max(j), n));
        }
    }
    let mse = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n as f64;
    let rank = if pairs.pairs.is_empty() {
        0.0
    } else {
        pairs
            .pairs
            .iter()
            .map(|&(i, j)| rank_loss(predictions[i], predictions[j], targets[i], targets[j], config.margin_xi))
            .sum::<f64>()
            / pairs.pairs.len() as f64
    };
    Ok((mse + config.lambda * rank, mse, rank))
}

/// Adaptive moments with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(param_count: usize, learning_rate: f64, weight_decay: f64, beta1: f64, beta2: f64) -> Self {
        AdamW {
            learning_rate,
            weight_decay,
            beta1,
            beta2,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            params[i] -= self.learning_rate * self.weight_decay * params[i];
        }
    }
}

/// Which conditioning/pairing/balancing pieces a training run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub use_text_condition: bool,
    pub use_onehot_condition: bool,
    pub use_rank_loss: bool,
    pub use_resample: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            use_text_condition: true,
            use_onehot_condition: false,
            use_rank_loss: true,
            use_resample: true,
        }
    }
}

impl AblationFlags {
    pub fn condition_label(&self) -> &'static str {
        if self.use_text_condition {
            "text"
        } else if self.use_onehot_condition {
            "onehot"
        } else {
            "-"
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    #[serde(default)]
    pub ablation: AblationFlags,
    #[serde(default)]
    pub head: HeadConfig,
    /// Fraction of volumes held out for validation.
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// Bins for the balancing resample of the training split.
    #[serde(default = "default_resample_bins")]
    pub resample_bins: usize,
    /// Per-bin target; None sizes bins to keep the split's length.
    #[serde(default)]
    pub resample_per_bin: Option<usize>,
}

fn default_val_fraction() -> f64 {
    0.2
}

fn default_resample_bins() -> usize {
    10
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 128,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
            ablation: AblationFlags::default(),
            head: HeadConfig::default(),
            val_fraction: default_val_fraction(),
            resample_bins: default_resample_bins(),
            resample_per_bin: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::BadTrainConfig("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::BadTrainConfig("learning_rate must be non-negative".into()));
        }
        if self.ablation.use_text_condition && self.ablation.use_onehot_condition {
            return Err(TrainError::BadTrainConfig(
                "text and one-hot conditioning are mutually exclusive".into(),
            ));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(TrainError::BadTrainConfig("val_fraction must lie in (0,1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_mse: f64,
    pub loss_rank: f64,
    pub val_lcc: Option<f64>,
    pub val_srocc: Option<f64>,
    pub val_map5: Option<f64>,
    pub val_map10: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Parameters of the best-validation-SROCC epoch.
    pub head: QualityHead,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub train_volumes: Vec<String>,
    pub val_volumes: Vec<String>,
}

/// The metric-log CSV: one row per epoch, empty cells for undefined metrics.
pub fn metric_log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,loss_mse,loss_rank,val_lcc,val_srocc,val_map5,val_map10\n");
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for row in log {
        out.push_str(&format!(
            "{},{:.6},{:.6},{},{},{},{}\n",
            row.epoch,
            row.loss_mse,
            row.loss_rank,
            cell(row.val_lcc),
            cell(row.val_srocc),
            cell(row.val_map5),
            cell(row.val_map10),
        ));
    }
    out
}

struct EncodedSample {
    f1: Vec<f64>,
    class_id: u16,
    target: f64,
    sample_id: String,
}

/// Deterministic volume-wise split: sorted unique ids, seeded shuffle,
/// last `val_fraction` of volumes become validation.
pub fn split_volumes(
    dataset: &[SlicePair],
    val_fraction: f64,
    seed: u64,
) -> (Vec<String>, Vec<String>) {
    let mut ids: Vec<String> = dataset.iter().map(|p| p.volume_id.clone()).collect();
    ids.sort();
    ids.dedup();
    let mut rng = Rng::new(derive_seed(seed, "volume-split"));
    rng.shuffle(&mut ids);
    let n_val = ((ids.len() as f64 * val_fraction).round() as usize)
        .max(1)
        .min(ids.len().saturating_sub(1));
    let val = ids.split_off(ids.len() - n_val);
    (ids, val)
}

type ValidationMetrics = (Option<f64>, Option<f64>, Option<f64>, Option<f64>);

fn evaluate(
    head: &QualityHead,
    samples: &[EncodedSample],
    condition: &dyn Fn(u16) -> Vec<f64>,
) -> Result<ValidationMetrics, TrainError> {
    let mut metric_samples = Vec::with_capacity(samples.len());
    for s in samples {
        let phi = condition(s.class_id);
        let predicted = head.forward(&s.f1, &phi)?;
        metric_samples.push(MetricSample::new(predicted, s.target, s.class_id, s.sample_id.clone()));
    }
    let val_lcc = lcc(&metric_samples).ok();
    let val_srocc = srocc(&metric_samples).ok();
    let val_map5 = map_at_k(&metric_samples, 5).ok().map(|m| m.value);
    let val_map10 = map_at_k(&metric_samples, 10).ok().map(|m| m.value);
    Ok((val_lcc, val_srocc, val_map5, val_map10))
}

/// Train the quality head on scored slice pairs.
///
/// Deterministic given (dataset order, config, seeds): encoding happens once
/// up front, shuffling/batching/resampling all draw from seeds derived from
/// `config.seed`, and parameter updates run on a single thread.
pub fn train(
    dataset: &[SlicePair],
    provider: &EmbeddingProvider,
    text: &TextEmbeddings,
    config: &TrainConfig,
    loss: &LossConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    loss.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }

    let mut class_ids: Vec<u16> = dataset.iter().map(|p| p.class_id).collect();
    class_ids.sort_unstable();
    class_ids.dedup();

    let d_t = config.head.d_t;
    let onehot = one_hot_embeddings(&class_ids, d_t);
    // Pairing always runs on the class identity embeddings (text when
    // available, one-hot otherwise), independent of what the head sees.
    let pair_table: BTreeMap<u16, Vec<f64>> = {
        let mut t = BTreeMap::new();
        for &c in &class_ids {
            let v = match text.get(c) {
                Some(v) => v.clone(),
                None => onehot.lookup(c)?.clone(),
            };
            t.insert(c, v);
        }
        t
    };
    let flags = config.ablation;
    if flags.use_text_condition {
        for &c in &class_ids {
            text.lookup(c)?;
        }
    }
    // What the head is conditioned on, per the ablation flags.
    let zero_phi = vec![0.0; d_t];
    let cond_table: BTreeMap<u16, Vec<f64>> = class_ids
        .iter()
        .map(|&c| {
            let phi = if flags.use_text_condition {
                text.get(c).cloned().unwrap_or_else(|| zero_phi.clone())
            } else if flags.use_onehot_condition {
                onehot.get(c).cloned().unwrap_or_else(|| zero_phi.clone())
            } else {
                zero_phi.clone()
            };
            (c, phi)
        })
        .collect();
    let condition = |c: u16| cond_table.get(&c).cloned().unwrap_or_else(|| zero_phi.clone());

    let (train_ids, val_ids) = split_volumes(dataset, config.val_fraction, config.seed);
    if val_ids.is_empty() || train_ids.is_empty() {
        return Err(TrainError::EmptyValidation);
    }
    let is_val: std::collections::BTreeSet<&str> =
        val_ids.iter().map(String::as_str).collect();

    let mut train_set = Vec::new();
    let mut val_set = Vec::new();
    for pair in dataset {
        let target = pair
            .true_dsc
            .ok_or_else(|| TrainError::MissingTarget(pair.sample_key()))?;
        let sample = EncodedSample {
            f1: provider.embed(pair)?,
            class_id: pair.class_id,
            target,
            sample_id: pair.sample_key(),
        };
        if is_val.contains(pair.volume_id.as_str()) {
            val_set.push(sample);
        } else {
            train_set.push(sample);
        }
    }
    if train_set.is_empty() || val_set.is_empty() {
        return Err(TrainError::EmptyValidation);
    }

    // Balancing resample of the training split only.
    let train_indices: Vec<usize> = if flags.use_resample {
        let dscs: Vec<f64> = train_set.iter().map(|s| s.target).collect();
        let per_bin = config
            .resample_per_bin
            .unwrap_or_else(|| train_set.len().div_ceil(config.resample_bins));
        let synth_cfg = SynthesisConfig {
            target_bins: config.resample_bins,
            samples_per_bin: per_bin.max(1),
            seed: derive_seed(config.seed, "train-resample"),
            ..Default::default()
        };
        resample_plan(&dscs, &synth_cfg)?.selected
    } else {
        (0..train_set.len()).collect()
    };

    let mut head = QualityHead::init(config.head, derive_seed(config.seed, "init"));
    let mut optimizer = AdamW::new(
        head.param_count(),
        config.learning_rate,
        config.weight_decay,
        config.beta1,
        config.beta2,
    );

    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for epoch in 0..config.epochs {
        let mut order = train_indices.clone();
        Rng::new(derive_seed(config.seed, &format!("epoch/{epoch}"))).shuffle(&mut order);

        let mut sum_mse = 0.0;
        let mut sum_rank = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<BatchItem> = chunk
                .iter()
                .map(|&i| {
                    let s = &train_set[i];
                    BatchItem { f1: s.f1.clone(), phi: condition(s.class_id), target: s.target }
                })
                .collect();
            let pairs: Vec<(usize, usize)> = if flags.use_rank_loss && batch.len() >= 2 {
                let embeddings: Vec<Vec<f64>> = chunk
                    .iter()
                    .map(|&i| pair_table[&train_set[i].class_id].clone())
                    .collect();
                build_pairs(&embeddings, ParityPolicy::DropLastUnmatched)?.pairs
            } else {
                Vec::new()
            };
            let lambda = if flags.use_rank_loss { loss.lambda } else { 0.0 };
            let (breakdown, grads) =
                forward_backward(&head, &batch, &pairs, lambda, loss.margin_xi)?;
            optimizer.step(head.params_mut(), &grads);
            sum_mse += breakdown.mse;
            sum_rank += breakdown.rank;
            batches += 1;
        }

        let (val_lcc, val_srocc, val_map5, val_map10) = evaluate(&head, &val_set, &condition)?;
        log.push(EpochLog {
            epoch,
            loss_mse: sum_mse / batches.max(1) as f64,
            loss_rank: sum_rank / batches.max(1) as f64,
            val_lcc,
            val_srocc,
            val_map5,
            val_map10,
        });
        let score = val_srocc.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
            best = Some((score, epoch, head.params().to_vec()));
        }
    }

    let (_, best_epoch, best_params) =
        best.unwrap_or((f64::NEG_INFINITY, config.epochs - 1, head.params().to_vec()));
    head.params_mut().copy_from_slice(&best_params);
    Ok(TrainOutcome { head, log, best_epoch, train_volumes: train_ids, val_volumes: val_ids })
}

/// One ablation row: flags plus end metrics of the best checkpoint.
#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub condition: String,
    pub opt_pair: bool,
    pub resample: bool,
    pub lcc: Option<f64>,
    pub srocc: Option<f64>,
    pub map5: Option<f64>,
    pub map10: Option<f64>,
}

/// Named flag grids for [`run_ablation`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationGrid {
    /// The five-row block: no extras, condition only, pairs only, both,
    /// both plus resampling.
    Table1,
    /// Every distinct combination: {none, text, onehot} x pair x resample.
    Full,
}

pub fn ablation_grid(grid: AblationGrid) -> Vec<AblationFlags> {
    let f = |text: bool, onehot: bool, rank: bool, resample: bool| AblationFlags {
        use_text_condition: text,
        use_onehot_condition: onehot,
        use_rank_loss: rank,
        use_resample: resample,
    };
    match grid {
        AblationGrid::Table1 => vec![
            f(false, false, false, false),
            f(true, false, false, false),
            f(false, false, true, false),
            f(true, false, true, false),
            f(true, false, true, true),
        ],
        AblationGrid::Full => {
            let mut rows = Vec::new();
            for (text, onehot) in [(false, false), (true, false), (false, true)] {
                for rank in [false, true] {
                    for resample in [false, true] {
                        rows.push(f(text, onehot, rank, resample));
                    }
                }
            }
            rows
        }
    }
}

/// Train one run per flag combination with identical seeds and budgets.
pub fn run_ablation(
    dataset: &[SlicePair],
    provider: &EmbeddingProvider,
    text: &TextEmbeddings,
    base: &TrainConfig,
    loss: &LossConfig,
    grid: &[AblationFlags],
) -> Result<Vec<AblationRow>, TrainError> {
    let mut rows = Vec::with_capacity(grid.len());
    for &flags in grid {
        let mut config = base.clone();
        config.ablation = flags;
        let outcome = train(dataset, provider, text, &config, loss)?;
        let at_best = outcome.log[outcome.best_epoch];
        rows.push(AblationRow {
            condition: flags.condition_label().to_string(),
            opt_pair: flags.use_rank_loss,
            resample: flags.use_resample,
            lcc: at_best.val_lcc,
            srocc: at_best.val_srocc,
            map5: at_best.val_map5,
            map10: at_best.val_map10,
        });
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("condition,opt_pair,resample,lcc,srocc,map5,map10\n");
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.condition,
            if r.opt_pair { "yes" } else { "no" },
            if r.resample { "yes" } else { "no" },
            cell(r.lcc),
            cell(r.srocc),
            cell(r.map5),
            cell(r.map10),
        ));
    }
    out
}
