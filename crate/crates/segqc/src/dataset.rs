//! On-disk form of synthesized slice datasets: one binary record file
//! (pixels as f32, mask as u8) plus a JSON index carrying per-record
//! metadata and the class table. Writes are deterministic, so identical
//! inputs produce byte-identical files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::degrade::{DegradationSpec, SynthRecord};
use crate::grid::Grid2;
use crate::volume::SlicePair;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{0}: io error: {1}")]
    Io(String, String),
    #[error("{0}: invalid json: {1}")]
    Json(String, String),
    #[error("record {index}: {reason}")]
    BadRecord { index: usize, reason: String },
    #[error("records file has {got} bytes, expected {expected}")]
    PayloadSizeMismatch { expected: usize, got: usize },
    #[error("dataset is empty")]
    Empty,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndexEntry {
    pub class_id: u16,
    pub true_dsc: Option<f64>,
    pub volume_id: String,
    pub slice_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degradation: Option<DegradationSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub size: [usize; 2],
    pub records_file: String,
    pub classes: BTreeMap<String, String>,
    pub entries: Vec<IndexEntry>,
}

fn record_bytes(size: [usize; 2]) -> usize {
    size[0] * size[1] * 5 // 4 bytes f32 pixel + 1 byte mask per cell
}

/// Write records + index; the records file sits next to the index.
pub fn write_dataset(
    index_path: &Path,
    records: &[SynthRecord],
    classes: &BTreeMap<u16, String>,
) -> Result<(), DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::Empty);
    }
    let ctx = index_path.display().to_string();
    let w = records[0].pair.pixels.width();
    let h = records[0].pair.pixels.height();
    for (i, r) in records.iter().enumerate() {
        if r.pair.pixels.width() != w || r.pair.pixels.height() != h {
            return Err(DatasetError::BadRecord {
                index: i,
                reason: format!(
                    "size {}x{} differs from first record {w}x{h}",
                    r.pair.pixels.width(),
                    r.pair.pixels.height()
                ),
            });
        }
    }
    let stem = index_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let records_file = format!("{stem}.bin");
    let dir = index_path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| DatasetError::Io(ctx.clone(), e.to_string()))?;

    let mut bin = std::io::BufWriter::new(
        std::fs::File::create(dir.join(&records_file))
            .map_err(|e| DatasetError::Io(ctx.clone(), e.to_string()))?,
    );
    for r in records {
        for px in r.pair.pixels.as_slice() {
            bin.write_all(&px.to_le_bytes())
                .map_err(|e| DatasetError::Io(ctx.clone(), e.to_string()))?;
        }
        let mask_bytes: Vec<u8> =
            r.pair.mask.as_slice().iter().map(|&m| u8::from(m)).collect();
        bin.write_all(&mask_bytes)
            .map_err(|e| DatasetError::Io(ctx.clone(), e.to_string()))?;
    }
    bin.flush().map_err(|e| DatasetError::Io(ctx.clone(), e.to_string()))?;

    let index = DatasetIndex {
        size: [w, h],
        records_file,
        classes: classes.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        entries: records
            .iter()
            .map(|r| IndexEntry {
                class_id: r.pair.class_id,
                true_dsc: r.pair.true_dsc,
                volume_id: r.pair.volume_id.clone(),
                slice_index: r.pair.slice_index,
                degradation: Some(r.degradation),
            })
            .collect(),
    };
    std::fs::write(
        index_path,
        serde_json::to_vec_pretty(&index).map_err(|e| DatasetError::Json(ctx.clone(), e.to_string()))?,
    )
    .map_err(|e| DatasetError::Io(ctx, e.to_string()))
}

/// Pairs, class table, and per-record degradation provenance.
pub type LoadedDataset = (Vec<SlicePair>, BTreeMap<u16, String>, Vec<Option<DegradationSpec>>);

/// Read a dataset back; classes come along for embedding lookups.
pub fn read_dataset(index_path: &Path) -> Result<LoadedDataset, DatasetError> {
    let ctx = index_path.display().to_string();
    let text =
        std::fs::read(index_path).map_err(|e| DatasetError::Io(ctx.clone(), e.to_string()))?;
    let index: DatasetIndex =
        serde_json::from_slice(&text).map_err(|e| DatasetError::Json(ctx.clone(), e.to_string()))?;
    let dir = index_path.parent().unwrap_or(Path::new("."));
    let payload = std::fs::read(dir.join(&index.records_file))
        .map_err(|e| DatasetError::Io(ctx.clone(), e.to_string()))?;

    let per_record = record_bytes(index.size);
    let expected = per_record * index.entries.len();
    if payload.len() != expected {
        return Err(DatasetError::PayloadSizeMismatch { expected, got: payload.len() });
    }
    let [w, h] = index.size;
    let px_bytes = w * h * 4;

    let mut classes = BTreeMap::new();
    for (k, v) in &index.classes {
        let id: u16 = k.parse().map_err(|_| DatasetError::Json(
            ctx.clone(),
            format!("class id '{k}' is not a u16"),
        ))?;
        classes.insert(id, v.clone());
    }

    let mut pairs = Vec::with_capacity(index.entries.len());
    let mut specs = Vec::with_capacity(index.entries.len());
    for (i, entry) in index.entries.iter().enumerate() {
        let base = i * per_record;
        let pixels: Vec<f32> = payload[base..base + px_bytes]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mask: Vec<bool> = payload[base + px_bytes..base + per_record]
            .iter()
            .map(|&b| b != 0)
            .collect();
        pairs.push(SlicePair {
            pixels: Grid2::from_vec(w, h, pixels),
            mask: Grid2::from_vec(w, h, mask),
            class_id: entry.class_id,
            true_dsc: entry.true_dsc,
            volume_id: entry.volume_id.clone(),
            slice_index: entry.slice_index,
        });
        specs.push(entry.degradation);
    }
    Ok((pairs, classes, specs))
}
