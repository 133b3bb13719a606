//! 3D mask quality scoring via uniformly stratified slice sampling.
//!
//! Scoring never touches 3D probability maps: each (volume, class) label is
//! judged from a handful of preprocessed 2D slices, so the per-label cost is
//! a few encoder and head evaluations.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::embed::{EmbeddingProvider, TextEmbeddings};
use crate::model::{ModelError, QualityHead};
use crate::volume::{
    preprocess_slice, slices_containing, LabelSource, LabeledVolume, Manifest, PreprocessConfig,
    VolumeError,
};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("n_slices must be positive")]
    ZeroSlices,
    #[error("class {class} absent from candidate labels of volume {volume}")]
    AbsentClass { volume: String, class: u16 },
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Quality estimate of one 3D (volume, class) label.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub volume_id: String,
    pub class_id: u16,
    pub predicted_dsc: f64,
    pub n_slices_used: usize,
    pub per_slice_scores: Vec<f64>,
    pub wall_time_s: f64,
}

/// Evenly spaced ranks over `0..count`, half-values rounded down.
///
/// For one sample the middle rank is used; for m samples the t-th rank is
/// round(t * (count-1) / (m-1)).
pub fn stratified_ranks(count: usize, samples: usize) -> Vec<usize> {
    assert!(samples > 0 && count > 0);
    let m = samples.min(count);
    if m == 1 {
        return vec![round_half_down((count - 1) as f64 / 2.0)];
    }
    (0..m)
        .map(|t| round_half_down(t as f64 * (count - 1) as f64 / (m - 1) as f64))
        .collect()
}

fn round_half_down(x: f64) -> usize {
    (x - 0.5).ceil() as usize
}

/// Score one 3D candidate mask by averaging head predictions over
/// `n_slices` uniformly stratified slices of the class's candidate extent.
pub fn score_mask_3d(
    volume: &LabeledVolume,
    class_id: u16,
    head: &QualityHead,
    provider: &EmbeddingProvider,
    text: &TextEmbeddings,
    n_slices: usize,
    preprocess: &PreprocessConfig,
) -> Result<ScoreRecord, ScoreError> {
    if n_slices == 0 {
        return Err(ScoreError::ZeroSlices);
    }
    let started = Instant::now();
    let slices = slices_containing(volume, class_id, LabelSource::Candidate)?;
    if slices.is_empty() {
        return Err(ScoreError::AbsentClass { volume: volume.id.clone(), class: class_id });
    }
    let phi = text.lookup(class_id)?;
    let ranks = stratified_ranks(slices.len(), n_slices);
    let mut per_slice = Vec::with_capacity(ranks.len());
    for &r in &ranks {
        let pair = preprocess_slice(
            volume,
            volume.axial_axis,
            slices[r],
            class_id,
            LabelSource::Candidate,
            preprocess,
        )?;
        let f1 = provider.embed(&pair)?;
        per_slice.push(head.forward(&f1, phi)?);
    }
    let predicted = per_slice.iter().sum::<f64>() / per_slice.len() as f64;
    Ok(ScoreRecord {
        volume_id: volume.id.clone(),
        class_id,
        predicted_dsc: predicted,
        n_slices_used: per_slice.len(),
        per_slice_scores: per_slice,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Per-dataset scoring outcome: records in (volume, class) order plus
/// anything that could not be scored.
#[derive(Debug, Default)]
pub struct DatasetScores {
    pub records: Vec<ScoreRecord>,
    pub absent: Vec<(String, u16)>,
    pub errors: Vec<String>,
}

/// Score every (volume, class present in candidate) of a manifest. Volumes
/// that fail to load become error records; the run continues.
pub fn score_dataset(
    manifest: &Manifest,
    head: &QualityHead,
    provider: &EmbeddingProvider,
    text: &TextEmbeddings,
    n_slices: usize,
    preprocess: &PreprocessConfig,
) -> Result<DatasetScores, ScoreError> {
    if n_slices == 0 {
        return Err(ScoreError::ZeroSlices);
    }
    let mut out = DatasetScores::default();
    for entry in &manifest.entries {
        let loaded = match manifest.load_entry(entry) {
            Ok(l) => l,
            Err(e) => {
                out.errors.push(format!("{}: {e}", entry.path));
                continue;
            }
        };
        let volume = loaded.volume;
        let classes = match volume.classes_present(LabelSource::Candidate) {
            Ok(c) => c,
            Err(e) => {
                out.errors.push(format!("{}: {e}", volume.id));
                continue;
            }
        };
        for class_id in classes {
            match score_mask_3d(&volume, class_id, head, provider, text, n_slices, preprocess) {
                Ok(record) => out.records.push(record),
                Err(ScoreError::AbsentClass { volume, class }) => {
                    out.absent.push((volume, class));
                }
                Err(e) => return Err(e),
            }
        }
    }
    out.records
        .sort_by(|a, b| a.volume_id.cmp(&b.volume_id).then(a.class_id.cmp(&b.class_id)));
    Ok(out)
}

/// Score one label with the true per-slice Dice of candidate vs ground
/// truth instead of a learned head. Same sampling scheme as
/// [`score_mask_3d`]; useful as a reference scorer when ground truth exists.
pub fn oracle_score_mask_3d(
    volume: &LabeledVolume,
    class_id: u16,
    n_slices: usize,
) -> Result<ScoreRecord, ScoreError> {
    use crate::metrics::dsc2;
    if n_slices == 0 {
        return Err(ScoreError::ZeroSlices);
    }
    let started = Instant::now();
    let slices = slices_containing(volume, class_id, LabelSource::Candidate)?;
    if slices.is_empty() {
        return Err(ScoreError::AbsentClass { volume: volume.id.clone(), class: class_id });
    }
    let candidate = volume.labels(LabelSource::Candidate)?;
    let axis = volume.axial_axis;
    let ranks = stratified_ranks(slices.len(), n_slices);
    let mut per_slice = Vec::with_capacity(ranks.len());
    for &r in &ranks {
        let cand = candidate.slice_axis(axis, slices[r]).map(|&v| v == class_id);
        let gt = volume.ground_truth.slice_axis(axis, slices[r]).map(|&v| v == class_id);
        // Candidate is non-empty on these slices by construction, so the
        // Dice is defined even against an empty ground-truth slice.
        let d = dsc2(&cand, &gt).unwrap_or(0.0);
        per_slice.push(d);
    }
    let predicted = per_slice.iter().sum::<f64>() / per_slice.len() as f64;
    Ok(ScoreRecord {
        volume_id: volume.id.clone(),
        class_id,
        predicted_dsc: predicted,
        n_slices_used: per_slice.len(),
        per_slice_scores: per_slice,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// [`score_dataset`] with the true-Dice oracle scorer.
pub fn oracle_score_dataset(
    manifest: &Manifest,
    n_slices: usize,
) -> Result<DatasetScores, ScoreError> {
    if n_slices == 0 {
        return Err(ScoreError::ZeroSlices);
    }
    let mut out = DatasetScores::default();
    for entry in &manifest.entries {
        let loaded = match manifest.load_entry(entry) {
            Ok(l) => l,
            Err(e) => {
                out.errors.push(format!("{}: {e}", entry.path));
                continue;
            }
        };
        let volume = loaded.volume;
        let classes = match volume.classes_present(LabelSource::Candidate) {
            Ok(c) => c,
            Err(e) => {
                out.errors.push(format!("{}: {e}", volume.id));
                continue;
            }
        };
        for class_id in classes {
            match oracle_score_mask_3d(&volume, class_id, n_slices) {
                Ok(record) => out.records.push(record),
                Err(ScoreError::AbsentClass { volume, class }) => {
                    out.absent.push((volume, class));
                }
                Err(e) => return Err(e),
            }
        }
    }
    out.records
        .sort_by(|a, b| a.volume_id.cmp(&b.volume_id).then(a.class_id.cmp(&b.class_id)));
    Ok(out)
}

pub fn scores_csv(records: &[ScoreRecord]) -> String {
    let mut out = String::from("volume_id,class,predicted_dsc,n_slices,time_s\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{:.6},{},{:.6}\n",
            r.volume_id, r.class_id, r.predicted_dsc, r.n_slices_used, r.wall_time_s
        ));
    }
    out
}
