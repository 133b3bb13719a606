//! Embedding providers: a deterministic toy vision encoder, precomputed
//! embedding files, and class text-embedding tables.
//!
//! The engine is encoder-agnostic: real pretrained encoders plug in through
//! the precomputed-file provider without code changes, while the toy encoder
//! keeps everything runnable at desk scale. Both emit vectors of the
//! configured dimension; text embeddings are L2-normalized on load.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::grid::Grid2;
use crate::rng::{derive_seed, Rng};
use crate::volume::SlicePair;

pub const DEFAULT_VISION_DIM: usize = 512;
pub const DEFAULT_TEXT_DIM: usize = 512;

/// Cells per side of the toy encoder's pooling grid.
const TOY_CELLS: usize = 8;
/// Statistics per cell: mean intensity, mask area fraction, mask boundary
/// fraction, masked intensity mean, masked intensity variance.
const TOY_STATS: usize = 5;
/// Fixed seed of the toy random projection; part of the encoder definition.
const TOY_PROJECTION_SEED: u64 = 0x7041_c0de_f00d_5eed;

/// Deterministic stand-in for a frozen vision encoder: pooled per-cell
/// statistics of the 2-channel (image, mask) input, mapped to `d_v` by a
/// fixed seeded random projection with unit-norm rows.
#[derive(Clone, Debug)]
pub struct ToyEncoder {
    d_v: usize,
    projection: Vec<f64>, // d_v x (TOY_CELLS^2 * TOY_STATS), row-major
}

impl ToyEncoder {
    pub fn new(d_v: usize) -> Self {
        let cols = TOY_CELLS * TOY_CELLS * TOY_STATS;
        let mut rng = Rng::new(derive_seed(TOY_PROJECTION_SEED, &format!("dv{d_v}")));
        let mut projection = vec![0.0; d_v * cols];
        for row in projection.chunks_mut(cols) {
            for v in row.iter_mut() {
                *v = rng.uniform(-1.0, 1.0);
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in row.iter_mut() {
                    *v /= norm;
                }
            }
        }
        ToyEncoder { d_v, projection }
    }

    pub fn dim(&self) -> usize {
        self.d_v
    }

    pub fn encode(&self, pair: &SlicePair) -> Vec<f64> {
        let features = toy_features(&pair.pixels, &pair.mask);
        let cols = features.len();
        let mut out = vec![0.0; self.d_v];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.projection[r * cols..(r + 1) * cols];
            *o = row.iter().zip(&features).map(|(p, f)| p * f).sum();
        }
        out
    }
}

/// The documented per-cell statistics, in cell row-major order.
pub fn toy_features(pixels: &Grid2<f32>, mask: &Grid2<bool>) -> Vec<f64> {
    let (w, h) = (pixels.width(), pixels.height());
    let mut features = Vec::with_capacity(TOY_CELLS * TOY_CELLS * TOY_STATS);
    for cy in 0..TOY_CELLS {
        let r0 = cy * h / TOY_CELLS;
        let r1 = (cy + 1) * h / TOY_CELLS;
        for cx in 0..TOY_CELLS {
            let c0 = cx * w / TOY_CELLS;
            let c1 = (cx + 1) * w / TOY_CELLS;
            let count = ((r1 - r0) * (c1 - c0)).max(1) as f64;
            let mut sum = 0.0;
            let mut mask_count = 0.0;
            let mut boundary = 0.0;
            let mut msum = 0.0;
            let mut msq = 0.0;
            for r in r0..r1 {
                for c in c0..c1 {
                    let v = *pixels.get(r, c) as f64;
                    sum += v;
                    if *mask.get(r, c) {
                        mask_count += 1.0;
                        msum += v;
                        msq += v * v;
                        let exposed = (r == 0 || !*mask.get(r - 1, c))
                            || (r + 1 == h || !*mask.get(r + 1, c))
                            || (c == 0 || !*mask.get(r, c - 1))
                            || (c + 1 == w || !*mask.get(r, c + 1));
                        if exposed {
                            boundary += 1.0;
                        }
                    }
                }
            }
            let mean = sum / count;
            let area = mask_count / count;
            let boundary_frac = boundary / count;
            let (mmean, mvar) = if mask_count > 0.0 {
                let mm = msum / mask_count;
                (mm, (msq / mask_count - mm * mm).max(0.0))
            } else {
                (0.0, 0.0)
            };
            features.extend_from_slice(&[mean, area, boundary_frac, mmean, mvar]);
        }
    }
    features
}

// --- embedding files ---------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EmbeddingManifest {
    dim: usize,
    payload: String,
    /// key -> record index into the payload (offset = index * dim * 4 bytes).
    entries: BTreeMap<String, usize>,
}

/// Write an embedding file: JSON manifest plus little-endian f32 payload.
pub fn write_embedding_file(
    manifest_path: &Path,
    dim: usize,
    entries: &BTreeMap<String, Vec<f64>>,
) -> Result<(), ModelError> {
    let ctx = manifest_path.display().to_string();
    for v in entries.values() {
        if v.len() != dim {
            return Err(ModelError::DimMismatch {
                what: "embedding record",
                expected: dim,
                got: v.len(),
            });
        }
    }
    let payload_name = format!(
        "{}.f32",
        manifest_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    );
    let mut payload = Vec::with_capacity(entries.len() * dim * 4);
    let mut index = BTreeMap::new();
    for (i, (key, vector)) in entries.iter().enumerate() {
        index.insert(key.clone(), i);
        for v in vector {
            payload.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    std::fs::write(dir.join(&payload_name), payload)
        .map_err(|e| ModelError::Io(ctx.clone(), e.to_string()))?;
    let manifest = EmbeddingManifest { dim, payload: payload_name, entries: index };
    std::fs::write(
        manifest_path,
        serde_json::to_vec_pretty(&manifest).map_err(|e| ModelError::Json(ctx.clone(), e.to_string()))?,
    )
    .map_err(|e| ModelError::Io(ctx, e.to_string()))
}

fn read_embedding_file(
    manifest_path: &Path,
) -> Result<(usize, BTreeMap<String, Vec<f64>>), ModelError> {
    let ctx = manifest_path.display().to_string();
    let text = std::fs::read(manifest_path)
        .map_err(|e| ModelError::Io(ctx.clone(), e.to_string()))?;
    let manifest: EmbeddingManifest =
        serde_json::from_slice(&text).map_err(|e| ModelError::Json(ctx.clone(), e.to_string()))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let payload = std::fs::read(dir.join(&manifest.payload))
        .map_err(|e| ModelError::Io(ctx.clone(), e.to_string()))?;
    let record_bytes = manifest.dim * 4;
    let mut table = BTreeMap::new();
    for (key, index) in &manifest.entries {
        let start = index * record_bytes;
        if start + record_bytes > payload.len() {
            return Err(ModelError::BadCheckpoint(
                ctx,
                format!("record '{key}' at index {index} exceeds payload"),
            ));
        }
        let v: Vec<f64> = payload[start..start + record_bytes]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        table.insert(key.clone(), v);
    }
    Ok((manifest.dim, table))
}

/// Class text embeddings, keyed by class id, all unit-normalized.
#[derive(Clone, Debug)]
pub struct TextEmbeddings {
    pub dim: usize,
    table: BTreeMap<u16, Vec<f64>>,
}

impl TextEmbeddings {
    pub fn get(&self, class_id: u16) -> Option<&Vec<f64>> {
        self.table.get(&class_id)
    }

    pub fn lookup(&self, class_id: u16) -> Result<&Vec<f64>, ModelError> {
        self.table.get(&class_id).ok_or_else(|| {
            ModelError::MissingClassEmbedding(class_id, format!("class_{class_id}"))
        })
    }

    pub fn from_table(dim: usize, table: BTreeMap<u16, Vec<f64>>) -> Result<Self, ModelError> {
        let mut normalized = BTreeMap::new();
        for (id, v) in table {
            if v.len() != dim {
                return Err(ModelError::DimMismatch {
                    what: "text embedding",
                    expected: dim,
                    got: v.len(),
                });
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm <= 1e-12 {
                return Err(ModelError::ZeroVector(format!("class {id}")));
            }
            normalized.insert(id, v.into_iter().map(|x| x / norm).collect());
        }
        Ok(TextEmbeddings { dim, table: normalized })
    }

    pub fn class_ids(&self) -> impl Iterator<Item = u16> + '_ {
        self.table.keys().copied()
    }
}

/// Load text embeddings keyed by class name and re-key them by class id.
/// Every registered class must have an entry of the declared dimension;
/// vectors are L2-normalized.
pub fn load_text_embeddings(
    manifest_path: &Path,
    classes: &BTreeMap<u16, String>,
    expected_dim: usize,
) -> Result<TextEmbeddings, ModelError> {
    let (dim, by_name) = read_embedding_file(manifest_path)?;
    if dim != expected_dim {
        return Err(ModelError::DimMismatch {
            what: "text embedding file",
            expected: expected_dim,
            got: dim,
        });
    }
    let mut table = BTreeMap::new();
    for (&id, name) in classes {
        let v = by_name
            .get(name)
            .ok_or_else(|| ModelError::MissingClassEmbedding(id, name.clone()))?;
        table.insert(id, v.clone());
    }
    TextEmbeddings::from_table(dim, table)
}

/// Deterministic pseudo text embeddings: one seeded unit vector per class
/// name. Used where no pretrained language encoder output is available; the
/// vector depends only on (name, dim), never on the surrounding class set.
pub fn synthesize_text_embeddings(
    classes: &BTreeMap<u16, String>,
    dim: usize,
    seed: u64,
) -> TextEmbeddings {
    let mut table = BTreeMap::new();
    for (&id, name) in classes {
        let mut rng = Rng::new(derive_seed(seed, &format!("text/{name}")));
        table.insert(id, rng.unit_vector(dim));
    }
    TextEmbeddings { dim, table }
}

/// One-hot class conditioning of the same dimension as the text embeddings,
/// so the head architecture is unchanged: rank-ordered one-hot, zero-padded
/// up to `dim`, or pushed through a fixed seeded projection when there are
/// more classes than dimensions.
pub fn one_hot_embeddings(class_ids: &[u16], dim: usize) -> TextEmbeddings {
    let mut sorted: Vec<u16> = class_ids.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let n = sorted.len();
    let mut table = BTreeMap::new();
    if n <= dim {
        for (rank, &id) in sorted.iter().enumerate() {
            let mut v = vec![0.0; dim];
            v[rank] = 1.0;
            table.insert(id, v);
        }
    } else {
        let mut rng = Rng::new(derive_seed(TOY_PROJECTION_SEED, "onehot"));
        let projection: Vec<Vec<f64>> = (0..n).map(|_| rng.unit_vector(dim)).collect();
        for (rank, &id) in sorted.iter().enumerate() {
            table.insert(id, projection[rank].clone());
        }
    }
    TextEmbeddings { dim, table }
}

/// Precomputed vision embeddings keyed by [`SlicePair::sample_key`].
#[derive(Clone, Debug)]
pub struct PrecomputedEmbeddings {
    dim: usize,
    table: BTreeMap<String, Vec<f64>>,
}

impl PrecomputedEmbeddings {
    pub fn load(manifest_path: &Path, expected_dim: usize) -> Result<Self, ModelError> {
        let (dim, table) = read_embedding_file(manifest_path)?;
        if dim != expected_dim {
            return Err(ModelError::DimMismatch {
                what: "vision embedding file",
                expected: expected_dim,
                got: dim,
            });
        }
        Ok(PrecomputedEmbeddings { dim, table })
    }
}

/// Source of vision embeddings for slice pairs.
#[derive(Clone, Debug)]
pub enum EmbeddingProvider {
    Toy(ToyEncoder),
    Precomputed(PrecomputedEmbeddings),
}

impl EmbeddingProvider {
    pub fn toy(d_v: usize) -> Self {
        EmbeddingProvider::Toy(ToyEncoder::new(d_v))
    }

    pub fn vision_dim(&self) -> usize {
        match self {
            EmbeddingProvider::Toy(t) => t.dim(),
            EmbeddingProvider::Precomputed(p) => p.dim,
        }
    }

    pub fn embed(&self, pair: &SlicePair) -> Result<Vec<f64>, ModelError> {
        match self {
            EmbeddingProvider::Toy(t) => Ok(t.encode(pair)),
            EmbeddingProvider::Precomputed(p) => p
                .table
                .get(&pair.sample_key())
                .cloned()
                .ok_or_else(|| ModelError::MissingEmbedding(pair.sample_key())),
        }
    }
}
