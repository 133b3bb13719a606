//! Subcommand implementations: thin, deterministic compositions of library
//! operations. All randomness flows from the --seed flag; outputs embed the
//! resolved configuration.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::anyhow;
use serde::{Deserialize, Serialize};

use segqc::dataset::{read_dataset, write_dataset};
use segqc::degrade::{
    apply_degradation3, resample_balanced, synthesize_dataset, DegradationKind, DegradationSpec,
    SynthesisConfig,
};
use segqc::metrics::{lcc, map_at_k, srocc, MetricSample};
use segqc::model::embed::{
    load_text_embeddings, synthesize_text_embeddings, EmbeddingProvider, PrecomputedEmbeddings,
    TextEmbeddings,
};
use segqc::model::{load_checkpoint, save_checkpoint};
use segqc::report::{build_report, report_csv, report_text};
use segqc::rng::derive_seed;
use segqc::scoring::{
    oracle_score_dataset, score_dataset, scores_csv, DatasetScores, ScoreRecord,
};
use segqc::selection::{
    entropy_score, load_probability_volumes, mc_variance_score, select_active, select_semisup,
    simulate_selection_benefit, CandidatePool, Method, MethodResources, PoolRecord,
    ResourceReport, SelectionMode,
};
use segqc::training::{
    ablation_csv, ablation_grid, metric_log_csv, run_ablation, AblationGrid, LossConfig,
    TrainConfig,
};
use segqc::volume::{load_volume, write_volume, LabelSource, Manifest, VolumeFormat};

use crate::util::{data_err, internal, read_json, run_config_json, usage, CliError, OutputGuard};

// --- synth -------------------------------------------------------------------

#[derive(Debug, Deserialize, Serialize)]
pub struct SynthCommandConfig {
    pub manifest: String,
    pub synthesis: SynthesisConfig,
}

pub fn cmd_synth(
    config_path: &Path,
    resample: bool,
    seed: Option<u64>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let mut config: SynthCommandConfig = read_json(config_path)?;
    if let Some(s) = seed {
        config.synthesis.seed = s;
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    let manifest = Manifest::load(&base.join(&config.manifest)).map_err(data_err)?;

    let mut volumes = Vec::new();
    let mut warnings = Vec::new();
    for entry in &manifest.entries {
        let loaded = manifest.load_entry(entry).map_err(data_err)?;
        warnings.extend(loaded.warnings);
        volumes.push(loaded.volume);
    }
    let classes = {
        let mut all = BTreeMap::new();
        for v in &volumes {
            all.extend(v.classes.clone());
        }
        all
    };

    let output = synthesize_dataset(&volumes, &config.synthesis).map_err(data_err)?;
    let (records, resample_plan) = if resample {
        let (r, plan) = resample_balanced(&output.records, &config.synthesis).map_err(data_err)?;
        (r, Some(plan))
    } else {
        (output.records, None)
    };

    let mut guard = OutputGuard::new(out_dir)?;
    let index_path = guard.path("dataset.json");
    guard.register(out_dir.join("dataset.bin"));
    write_dataset(&index_path, &records, &classes).map_err(data_err)?;

    let all_warnings: Vec<String> =
        warnings.into_iter().chain(output.warnings).collect();
    let log = serde_json::json!({
        "run": run_config_json("synth", config.synthesis.seed,
                               serde_json::to_value(&config).map_err(internal)?),
        "resampled": resample,
        "records": records.len(),
        "flagged_cells": output.flagged,
        "warnings": all_warnings,
        "resample_plan": resample_plan.map(|p| serde_json::json!({
            "bin_counts_before": p.bin_counts_before,
            "bin_counts_after": p.bin_counts_after,
            "empty_bins": p.empty_bins,
        })),
    });
    guard.write("synth_log.json", serde_json::to_vec_pretty(&log).map_err(internal)?)?;
    guard.commit();
    println!("synth: wrote {} records to {}", records.len(), out_dir.display());
    Ok(())
}

// --- train ---------------------------------------------------------------------

#[derive(Debug, Default, Deserialize, Serialize)]
pub struct TrainCommandConfig {
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub loss: LossConfig,
}

fn text_table_for(
    classes: &BTreeMap<u16, String>,
    text_path: Option<&Path>,
    d_t: usize,
    seed: u64,
) -> Result<TextEmbeddings, CliError> {
    match text_path {
        Some(p) => load_text_embeddings(p, classes, d_t).map_err(data_err),
        None => Ok(synthesize_text_embeddings(classes, d_t, derive_seed(seed, "text"))),
    }
}

fn provider_for(
    embeddings: Option<&Path>,
    d_v: usize,
) -> Result<EmbeddingProvider, CliError> {
    match embeddings {
        Some(p) => Ok(EmbeddingProvider::Precomputed(
            PrecomputedEmbeddings::load(p, d_v).map_err(data_err)?,
        )),
        None => Ok(EmbeddingProvider::toy(d_v)),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_train(
    dataset_index: &Path,
    config_path: Option<&Path>,
    preset: Option<&str>,
    text_path: Option<&Path>,
    embeddings: Option<&Path>,
    seed: Option<u64>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let mut config: TrainCommandConfig = match config_path {
        Some(p) => read_json(p)?,
        None => TrainCommandConfig::default(),
    };
    if let Some(s) = seed {
        config.train.seed = s;
    }
    let (pairs, classes, _) = read_dataset(dataset_index).map_err(data_err)?;
    let text = text_table_for(&classes, text_path, config.train.head.d_t, config.train.seed)?;
    let provider = provider_for(embeddings, config.train.head.d_v)?;

    let mut guard = OutputGuard::new(out_dir)?;
    let run = run_config_json(
        "train",
        config.train.seed,
        serde_json::to_value(&config).map_err(internal)?,
    );

    match preset {
        Some(name) => {
            let grid = match name {
                "table1" => ablation_grid(AblationGrid::Table1),
                "full" => ablation_grid(AblationGrid::Full),
                other => return Err(usage(format!("unknown preset '{other}'"))),
            };
            let rows = run_ablation(&pairs, &provider, &text, &config.train, &config.loss, &grid)
                .map_err(data_err)?;
            guard.write("ablation.csv", ablation_csv(&rows))?;
            guard.write(
                "ablation.config.json",
                serde_json::to_vec_pretty(&run).map_err(internal)?,
            )?;
            guard.commit();
            println!("train: wrote ablation.csv with {} configurations", rows.len());
        }
        None => {
            let outcome =
                segqc::training::train(&pairs, &provider, &text, &config.train, &config.loss)
                    .map_err(data_err)?;
            let ckpt = guard.path("checkpoint.sqhd");
            save_checkpoint(&outcome.head, &ckpt).map_err(data_err)?;
            guard.write("metrics.csv", metric_log_csv(&outcome.log))?;
            let best = outcome.log[outcome.best_epoch];
            let summary = serde_json::json!({
                "run": run,
                "best_epoch": outcome.best_epoch,
                "val_lcc": best.val_lcc,
                "val_srocc": best.val_srocc,
                "val_map5": best.val_map5,
                "val_map10": best.val_map10,
                "train_volumes": outcome.train_volumes,
                "val_volumes": outcome.val_volumes,
            });
            guard.write("train_summary.json", serde_json::to_vec_pretty(&summary).map_err(internal)?)?;
            guard.commit();
            println!(
                "train: best epoch {} val_srocc {:?}",
                outcome.best_epoch, best.val_srocc
            );
        }
    }
    Ok(())
}

// --- eval ----------------------------------------------------------------------

/// Parse a score CSV with header sample_id,class_id,predicted,actual.
fn parse_eval_csv(path: &Path) -> Result<Vec<MetricSample>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(anyhow!("{}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Data(anyhow!("{}: empty file", path.display())))?
        .1;
    if header.trim() != "sample_id,class_id,predicted,actual" {
        return Err(CliError::Data(anyhow!(
            "{}: expected header 'sample_id,class_id,predicted,actual', got '{header}'",
            path.display()
        )));
    }
    let mut samples = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(CliError::Data(anyhow!("{}:{}: expected 4 fields", path.display(), lineno + 1)));
        }
        let parse_f = |s: &str| -> Result<f64, CliError> {
            s.trim()
                .parse()
                .map_err(|e| CliError::Data(anyhow!("{}:{}: bad number '{s}': {e}", path.display(), lineno + 1)))
        };
        samples.push(MetricSample::new(
            parse_f(parts[2])?,
            parse_f(parts[3])?,
            parts[1].trim().parse().map_err(|e| {
                CliError::Data(anyhow!("{}:{}: bad class id: {e}", path.display(), lineno + 1))
            })?,
            parts[0].trim(),
        ));
    }
    Ok(samples)
}

pub fn cmd_eval(scores: &Path, out_dir: &Path) -> Result<(), CliError> {
    let samples = parse_eval_csv(scores)?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let row = format!(
        "lcc,srocc,map5,map10\n{},{},{},{}\n",
        cell(lcc(&samples).ok()),
        cell(srocc(&samples).ok()),
        cell(map_at_k(&samples, 5).ok().map(|m| m.value)),
        cell(map_at_k(&samples, 10).ok().map(|m| m.value)),
    );
    let mut guard = OutputGuard::new(out_dir)?;
    guard.write("eval.csv", &row)?;
    guard.write(
        "eval.config.json",
        serde_json::to_vec_pretty(&run_config_json(
            "eval",
            0,
            serde_json::json!({"scores": scores.display().to_string(), "samples": samples.len()}),
        ))
        .map_err(internal)?,
    )?;
    guard.commit();
    print!("{row}");
    Ok(())
}

// --- score ---------------------------------------------------------------------

#[derive(Serialize)]
struct ScoresJson<'a> {
    run: serde_json::Value,
    records: &'a [ScoreRecord],
    absent: &'a [(String, u16)],
    errors: &'a [String],
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_score(
    manifest_path: &Path,
    checkpoint: &Path,
    embeddings: Option<&Path>,
    text_path: Option<&Path>,
    n_slices: usize,
    jobs: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<(), CliError> {
    let manifest = Manifest::load(manifest_path).map_err(data_err)?;
    let head = load_checkpoint(checkpoint).map_err(data_err)?;
    let classes = manifest.merged_classes().map_err(data_err)?;
    let text = text_table_for(&classes, text_path, head.config().d_t, seed)?;
    let provider = provider_for(embeddings, head.config().d_v)?;
    let preprocess = Default::default();

    let scores = if jobs <= 1 || manifest.entries.len() <= 1 {
        score_dataset(&manifest, &head, &provider, &text, n_slices, &preprocess)
            .map_err(data_err)?
    } else {
        // Volumes are scored independently; workers take entry chunks and
        // the merged records are re-sorted, so the output is identical to a
        // single-threaded run.
        let chunks: Vec<Vec<segqc::volume::ManifestEntry>> = manifest
            .entries
            .chunks(manifest.entries.len().div_ceil(jobs))
            .map(|c| c.to_vec())
            .collect();
        let mut merged = DatasetScores::default();
        let results: Vec<Result<DatasetScores, segqc::scoring::ScoreError>> =
            std::thread::scope(|scope| {
                let handles: Vec<_> = chunks
                    .into_iter()
                    .map(|chunk| {
                        let sub = manifest.with_entries(chunk);
                        let head = &head;
                        let provider = &provider;
                        let text = &text;
                        let preprocess = &preprocess;
                        scope.spawn(move || {
                            score_dataset(&sub, head, provider, text, n_slices, preprocess)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            });
        for r in results {
            let part = r.map_err(data_err)?;
            merged.records.extend(part.records);
            merged.absent.extend(part.absent);
            merged.errors.extend(part.errors);
        }
        merged
            .records
            .sort_by(|a, b| a.volume_id.cmp(&b.volume_id).then(a.class_id.cmp(&b.class_id)));
        merged
    };

    let run = run_config_json(
        "score",
        seed,
        serde_json::json!({
            "manifest": manifest_path.display().to_string(),
            "checkpoint": checkpoint.display().to_string(),
            "n_slices": n_slices,
            "jobs": jobs,
        }),
    );
    let mut guard = OutputGuard::new(out_dir)?;
    guard.write("scores.csv", scores_csv(&scores.records))?;
    let json = ScoresJson {
        run,
        records: &scores.records,
        absent: &scores.absent,
        errors: &scores.errors,
    };
    guard.write("scores.json", serde_json::to_vec_pretty(&json).map_err(internal)?)?;
    guard.commit();
    println!(
        "score: {} records, {} absent, {} errors",
        scores.records.len(),
        scores.absent.len(),
        scores.errors.len()
    );
    Ok(())
}

// --- select --------------------------------------------------------------------

#[derive(Deserialize)]
struct ScoresJsonIn {
    records: Vec<ScoreRecord>,
}

/// Mean per-volume aggregate of per-class predicted scores.
fn pool_from_scores(path: &Path) -> Result<CandidatePool, CliError> {
    let parsed: ScoresJsonIn = read_json(path)?;
    let mut by_volume: BTreeMap<String, Vec<&ScoreRecord>> = BTreeMap::new();
    for r in &parsed.records {
        by_volume.entry(r.volume_id.clone()).or_default().push(r);
    }
    let records = by_volume
        .into_iter()
        .map(|(volume_id, rs)| {
            let mean = rs.iter().map(|r| r.predicted_dsc).sum::<f64>() / rs.len() as f64;
            PoolRecord {
                volume_id,
                scores: BTreeMap::from([(Method::Predicted, mean)]),
                per_class: rs.iter().map(|r| (r.class_id, r.predicted_dsc)).collect(),
                true_dsc: None,
            }
        })
        .collect();
    Ok(CandidatePool { records })
}

fn parse_method(s: &str) -> Result<Method, CliError> {
    match s {
        "predicted" => Ok(Method::Predicted),
        "entropy" => Ok(Method::Entropy),
        "mc_variance" => Ok(Method::McVariance),
        "random" => Ok(Method::Random),
        other => Err(usage(format!(
            "unknown method '{other}' (expected predicted|entropy|mc_variance|random)"
        ))),
    }
}

fn parse_mode(s: &str) -> Result<SelectionMode, CliError> {
    match s {
        "active" => Ok(SelectionMode::Active),
        "semisup" => Ok(SelectionMode::Semisup),
        other => Err(usage(format!("unknown mode '{other}' (expected active|semisup)"))),
    }
}

/// Fill entropy / mc-variance scores from probability volumes named
/// `<volume_id>.json` in `prob_dir`, charging bytes and time per method.
fn score_pool_from_probabilities(
    pool: &mut CandidatePool,
    prob_dir: &Path,
    method: Method,
) -> Result<MethodResources, CliError> {
    let started = std::time::Instant::now();
    let mut aux_bytes = 0u64;
    let mut labels = 0usize;
    for record in &mut pool.records {
        if record.scores.contains_key(&method) {
            continue;
        }
        let path = prob_dir.join(format!("{}.json", record.volume_id));
        let (volumes, bytes) = load_probability_volumes(&path).map_err(data_err)?;
        aux_bytes += bytes;
        labels += 1;
        let score = match method {
            Method::Entropy => entropy_score(&volumes[0]),
            Method::McVariance => mc_variance_score(&volumes).map_err(data_err)?,
            _ => unreachable!("only uncertainty methods read probability volumes"),
        };
        record.scores.insert(method, score);
    }
    Ok(MethodResources {
        method,
        labels,
        total_time_s: started.elapsed().as_secs_f64(),
        aux_bytes,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_select(
    pool_path: Option<&Path>,
    scores_path: Option<&Path>,
    method_str: &str,
    mode_str: &str,
    budget: usize,
    prob_dir: Option<&Path>,
    simulate_trials: Option<usize>,
    seed: u64,
    out_dir: &Path,
) -> Result<(), CliError> {
    let method = parse_method(method_str)?;
    let mode = parse_mode(mode_str)?;
    let mut pool = match (pool_path, scores_path) {
        (Some(p), None) => CandidatePool::load(p).map_err(data_err)?,
        (None, Some(s)) => pool_from_scores(s)?,
        _ => return Err(usage("provide exactly one of --pool or --scores")),
    };

    let mut resources = ResourceReport::default();
    if matches!(method, Method::Entropy | Method::McVariance) {
        let missing = pool
            .records
            .iter()
            .any(|r| !r.scores.contains_key(&method));
        if missing {
            let dir = prob_dir.ok_or_else(|| {
                usage("method needs probability volumes: pass --prob-dir or pre-scored pool")
            })?;
            resources
                .method_resources
                .push(score_pool_from_probabilities(&mut pool, dir, method)?);
        }
    }

    let ids = match mode {
        SelectionMode::Active => select_active(&pool, method, budget, seed).map_err(data_err)?,
        SelectionMode::Semisup => select_semisup(&pool, method, budget, seed).map_err(data_err)?,
    };

    let simulation = match simulate_trials {
        Some(trials) => {
            let mut methods: Vec<Method> =
                pool.records.first().map(|r| r.scores.keys().copied().collect()).unwrap_or_default();
            methods.push(Method::Random);
            methods.dedup();
            Some(
                simulate_selection_benefit(&pool, &methods, mode, budget, trials, seed)
                    .map_err(data_err)?,
            )
        }
        None => None,
    };

    let scores_of_selected: BTreeMap<String, Option<f64>> = ids
        .iter()
        .map(|id| {
            let s = pool
                .records
                .iter()
                .find(|r| &r.volume_id == id)
                .and_then(|r| r.scores.get(&method).copied());
            (id.clone(), s)
        })
        .collect();

    let output = serde_json::json!({
        "run": run_config_json("select", seed, serde_json::json!({
            "method": method_str, "mode": mode_str, "budget": budget,
        })),
        "method": method,
        "mode": mode,
        "budget": budget,
        "ids": ids,
        "scores": scores_of_selected,
        "resources": resources,
        "simulation": simulation,
    });
    let mut guard = OutputGuard::new(out_dir)?;
    guard.write("selection.json", serde_json::to_vec_pretty(&output).map_err(internal)?)?;
    guard.commit();
    println!("select: picked {} of {} candidates", budget, pool.records.len());
    Ok(())
}

// --- benchmark -------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn cmd_benchmark(
    manifest_path: &Path,
    checkpoint: Option<&Path>,
    oracle: bool,
    embeddings: Option<&Path>,
    text_path: Option<&Path>,
    threshold: f64,
    n_slices: usize,
    name: Option<&str>,
    seed: u64,
    out_dir: &Path,
) -> Result<(), CliError> {
    let manifest = Manifest::load(manifest_path).map_err(data_err)?;
    let classes = manifest.merged_classes().map_err(data_err)?;
    let scores = if oracle {
        if checkpoint.is_some() {
            return Err(usage("--oracle and --checkpoint are mutually exclusive"));
        }
        oracle_score_dataset(&manifest, n_slices).map_err(data_err)?
    } else {
        let ckpt = checkpoint.ok_or_else(|| usage("benchmark needs --checkpoint or --oracle"))?;
        let head = load_checkpoint(ckpt).map_err(data_err)?;
        let text = text_table_for(&classes, text_path, head.config().d_t, seed)?;
        let provider = provider_for(embeddings, head.config().d_v)?;
        score_dataset(&manifest, &head, &provider, &text, n_slices, &Default::default())
            .map_err(data_err)?
    };

    let dataset_name = name.unwrap_or("dataset");
    let report = build_report(dataset_name, &scores.records, &classes, threshold);
    let mut guard = OutputGuard::new(out_dir)?;
    guard.write("report.csv", report_csv(&report))?;
    let text_out = report_text(&report);
    guard.write("report.txt", &text_out)?;
    let json = serde_json::json!({
        "run": run_config_json("benchmark", seed, serde_json::json!({
            "manifest": manifest_path.display().to_string(),
            "threshold": threshold,
            "n_slices": n_slices,
            "oracle": oracle,
        })),
        "report": report,
        "absent": scores.absent,
        "errors": scores.errors,
    });
    guard.write("report.json", serde_json::to_vec_pretty(&json).map_err(internal)?)?;
    guard.commit();
    print!("{text_out}");
    Ok(())
}

// --- degrade ---------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn cmd_degrade(
    volume_path: &Path,
    format: VolumeFormat,
    kind_str: &str,
    severity: f64,
    class_id: Option<u16>,
    seed: u64,
    out_name: &str,
    out_dir: &Path,
) -> Result<(), CliError> {
    let kind = match kind_str {
        "erode" => DegradationKind::Erode,
        "dilate" => DegradationKind::Dilate,
        "drop_components" => DegradationKind::DropComponents,
        "boundary_noise" => DegradationKind::BoundaryNoise,
        "shift" => DegradationKind::Shift,
        "checkpoint_schedule" => DegradationKind::CheckpointSchedule,
        other => return Err(usage(format!("unknown degradation kind '{other}'"))),
    };
    let loaded = load_volume(volume_path, format).map_err(data_err)?;
    let mut volume = loaded.volume;
    let classes: Vec<u16> = match class_id {
        Some(c) => vec![c],
        None => volume.classes_present(LabelSource::GroundTruth).map_err(data_err)?,
    };
    let mut candidate = volume.ground_truth.map(|_| 0u16);
    for class in classes {
        let mask = volume.ground_truth.map(|&v| v == class);
        if !mask.any() {
            continue;
        }
        let spec = DegradationSpec::new(kind, severity, derive_seed(seed, &format!("class/{class}")));
        let degraded = apply_degradation3(&mask, &spec).map_err(data_err)?;
        for (i, &set) in degraded.as_slice().iter().enumerate() {
            if set {
                candidate.as_mut_slice()[i] = class;
            }
        }
    }
    volume.candidate = Some(candidate);

    let mut guard = OutputGuard::new(out_dir)?;
    let sidecar = guard.path(&format!("{out_name}.json"));
    guard.register(out_dir.join(format!("{out_name}.image.raw")));
    guard.register(out_dir.join(format!("{out_name}.ground_truth.raw")));
    guard.register(out_dir.join(format!("{out_name}.candidate.raw")));
    write_volume(&volume, &sidecar).map_err(data_err)?;
    guard.write(
        &format!("{out_name}.run.json"),
        serde_json::to_vec_pretty(&run_config_json(
            "degrade",
            seed,
            serde_json::json!({"kind": kind_str, "severity": severity, "class_id": class_id}),
        ))
        .map_err(internal)?,
    )?;
    guard.commit();
    println!("degrade: wrote {}", sidecar.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_and_mode_parsing() {
        assert_eq!(parse_method("predicted").unwrap(), Method::Predicted);
        assert_eq!(parse_method("mc_variance").unwrap(), Method::McVariance);
        assert!(parse_method("segmentation").is_err());
        assert_eq!(parse_mode("active").unwrap(), SelectionMode::Active);
        assert!(parse_mode("passive").is_err());
    }
}
