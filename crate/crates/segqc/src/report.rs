//! Dataset quality reports: per-class and overall predicted-Dice statistics
//! with the fraction of labels below a quality threshold.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::scoring::ScoreRecord;

pub const DEFAULT_QUALITY_THRESHOLD: f64 = 0.8;

#[derive(Clone, Debug, Serialize)]
pub struct ClassQuality {
    pub class_id: u16,
    pub class_name: String,
    pub mean_predicted_dsc: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct QualityReport {
    pub dataset: String,
    pub per_class: Vec<ClassQuality>,
    pub overall_mean: f64,
    pub threshold: f64,
    /// Fraction of labels with predicted quality below the threshold.
    pub below_threshold_fraction: f64,
    pub sample_count: usize,
}

/// Aggregate scored labels into a report. Only defined scores enter the
/// means; absent/error records never reach this function.
pub fn build_report(
    dataset: impl Into<String>,
    records: &[ScoreRecord],
    class_names: &BTreeMap<u16, String>,
    threshold: f64,
) -> QualityReport {
    let mut by_class: BTreeMap<u16, (f64, usize)> = BTreeMap::new();
    let mut below = 0usize;
    let mut sum = 0.0;
    for r in records {
        let e = by_class.entry(r.class_id).or_insert((0.0, 0));
        e.0 += r.predicted_dsc;
        e.1 += 1;
        sum += r.predicted_dsc;
        if r.predicted_dsc < threshold {
            below += 1;
        }
    }
    let per_class = by_class
        .into_iter()
        .map(|(class_id, (total, count))| ClassQuality {
            class_id,
            class_name: class_names
                .get(&class_id)
                .cloned()
                .unwrap_or_else(|| format!("class_{class_id}")),
            mean_predicted_dsc: total / count as f64,
            count,
        })
        .collect();
    let n = records.len();
    QualityReport {
        dataset: dataset.into(),
        per_class,
        overall_mean: if n == 0 { 0.0 } else { sum / n as f64 },
        threshold,
        below_threshold_fraction: if n == 0 { 0.0 } else { below as f64 / n as f64 },
        sample_count: n,
    }
}

fn fmt_mean(v: f64) -> String {
    format!("{v:.4}")
}

fn fmt_pct(fraction: f64) -> String {
    format!("{:.1}", fraction * 100.0)
}

/// CSV row mirroring the benchmark table: one column per class mean, then
/// the overall mean, the below-threshold percentage, and the sample count.
pub fn report_csv(report: &QualityReport) -> String {
    let mut header = String::from("dataset");
    let mut row = report.dataset.clone();
    for c in &report.per_class {
        header.push_str(&format!(",{}", c.class_name));
        row.push_str(&format!(",{}", fmt_mean(c.mean_predicted_dsc)));
    }
    header.push_str(&format!(",mean_dsc,dsc_below_{:.2}_pct,samples\n", report.threshold));
    row.push_str(&format!(
        ",{},{},{}\n",
        fmt_mean(report.overall_mean),
        fmt_pct(report.below_threshold_fraction),
        report.sample_count
    ));
    header + &row
}

/// Aligned human-readable table carrying exactly the same numbers as the
/// CSV.
pub fn report_text(report: &QualityReport) -> String {
    let mut rows: Vec<(String, String)> = report
        .per_class
        .iter()
        .map(|c| {
            (
                format!("{} (id {})", c.class_name, c.class_id),
                format!("{}  n={}", fmt_mean(c.mean_predicted_dsc), c.count),
            )
        })
        .collect();
    rows.push(("mean DSC".to_string(), fmt_mean(report.overall_mean)));
    rows.push((
        format!("DSC < {:.2}", report.threshold),
        format!("{}%", fmt_pct(report.below_threshold_fraction)),
    ));
    rows.push(("samples".to_string(), report.sample_count.to_string()));

    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = format!("Label quality report: {}\n", report.dataset);
    out.push_str(&"-".repeat(width + 24));
    out.push('\n');
    for (k, v) in rows {
        out.push_str(&format!("{k:<width$}  {v}\n"));
    }
    out
}
