//! Loading, validation, preprocessing, and slicing of labeled CT volumes.
//!
//! Two containers are supported. The native `raw_json` container is a JSON
//! sidecar (dims, spacing, dtype, class table, file names) next to raw
//! little-endian voxel payloads; it round-trips bit-exactly and has no
//! dependency on imaging tooling. NIfTI-1 ingestion reads a descriptor JSON
//! of the same shape whose files point at uncompressed `.nii` volumes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid2, Grid3};
use crate::nifti;

/// Intensities are clipped to this HU window before normalization to [0,1].
pub const HU_CLIP_MIN: f64 = -200.0;
pub const HU_CLIP_MAX: f64 = 200.0;

/// Side length of preprocessed slices.
pub const SLICE_SIZE: usize = 256;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("{0}: io error: {1}")]
    Io(String, String),
    #[error("{0}: invalid json: {1}")]
    Json(String, String),
    #[error("{path}: payload has {got} bytes, expected {expected}")]
    PayloadSizeMismatch { path: String, expected: usize, got: usize },
    #[error("{0}: spacing must be positive and finite, got {1:?}")]
    BadSpacing(String, [f64; 3]),
    #[error("{0}: grid dims differ: {1}")]
    DimsMismatch(String, String),
    #[error("{0}: unsupported dtype '{1}'")]
    UnsupportedDtype(String, String),
    #[error("{0}: unsupported NIfTI datatype code {1}")]
    UnsupportedDatatype(String, i16),
    #[error("{0}: header parse failed: {1}")]
    HeaderParse(String, String),
    #[error("label value {0} does not fit an unsigned 16-bit class id")]
    InvalidLabelValue(f64),
    #[error("class {0} is not registered in the class table")]
    UnknownClass(u16),
    #[error("slice index {index} out of bounds for axis {axis} (len {len})")]
    SliceOutOfBounds { axis: usize, index: usize, len: usize },
    #[error("axis {0} out of range (volume has 3 axes)")]
    AxisOutOfRange(usize),
    #[error("class {class} has no pixels on slice {slice} of volume {volume}")]
    EmptyClassSlice { volume: String, class: u16, slice: usize },
    #[error("volume {0} has no candidate labels")]
    MissingCandidate(String),
    #[error("{0}: manifest entry is invalid: {1}")]
    BadManifest(String, String),
}

/// Which label grid an operation reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    GroundTruth,
    Candidate,
}

/// A 3D image with ground-truth and optional candidate multi-class labels.
#[derive(Clone, Debug)]
pub struct LabeledVolume {
    pub id: String,
    pub image: Grid3<i16>,
    pub ground_truth: Grid3<u16>,
    pub candidate: Option<Grid3<u16>>,
    pub spacing_mm: [f64; 3],
    /// class id -> class name; 0 is background and never registered.
    pub classes: BTreeMap<u16, String>,
    /// Axis along which axial slices are taken (2 by convention).
    pub axial_axis: usize,
}

impl LabeledVolume {
    pub fn new(
        id: impl Into<String>,
        image: Grid3<i16>,
        ground_truth: Grid3<u16>,
        candidate: Option<Grid3<u16>>,
        spacing_mm: [f64; 3],
        classes: BTreeMap<u16, String>,
    ) -> Result<Self, VolumeError> {
        let id = id.into();
        if !ground_truth.same_shape(&image) {
            return Err(VolumeError::DimsMismatch(
                id,
                format!("image {:?} vs ground_truth {:?}", image.dims(), ground_truth.dims()),
            ));
        }
        if let Some(c) = &candidate {
            if !c.same_shape(&image) {
                return Err(VolumeError::DimsMismatch(
                    id,
                    format!("image {:?} vs candidate {:?}", image.dims(), c.dims()),
                ));
            }
        }
        for s in spacing_mm {
            if !(s.is_finite() && s > 0.0) {
                return Err(VolumeError::BadSpacing(id, spacing_mm));
            }
        }
        Ok(LabeledVolume {
            id,
            image,
            ground_truth,
            candidate,
            spacing_mm,
            classes,
            axial_axis: 2,
        })
    }

    pub fn labels(&self, source: LabelSource) -> Result<&Grid3<u16>, VolumeError> {
        match source {
            LabelSource::GroundTruth => Ok(&self.ground_truth),
            LabelSource::Candidate => self
                .candidate
                .as_ref()
                .ok_or_else(|| VolumeError::MissingCandidate(self.id.clone())),
        }
    }

    /// Binary mask of one class from the chosen label grid.
    pub fn class_mask(&self, class_id: u16, source: LabelSource) -> Result<Grid3<bool>, VolumeError> {
        Ok(self.labels(source)?.map(|&v| v == class_id))
    }

    /// Sorted nonzero class ids present in the chosen label grid.
    pub fn classes_present(&self, source: LabelSource) -> Result<Vec<u16>, VolumeError> {
        let grid = self.labels(source)?;
        let mut ids: Vec<u16> = grid.as_slice().iter().copied().filter(|&v| v != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        Ok(ids)
    }

    /// Register placeholder names for label ids missing from the class
    /// table; returns one warning per registration.
    pub fn register_unknown_classes(&mut self) -> Vec<String> {
        let mut warnings = Vec::new();
        let mut seen: Vec<u16> = self.ground_truth.as_slice().to_vec();
        if let Some(c) = &self.candidate {
            seen.extend_from_slice(c.as_slice());
        }
        seen.sort_unstable();
        seen.dedup();
        for id in seen {
            if id != 0 && !self.classes.contains_key(&id) {
                self.classes.insert(id, format!("class_{id}"));
                warnings.push(format!(
                    "volume {}: label id {id} missing from class table, registered as class_{id}",
                    self.id
                ));
            }
        }
        warnings
    }
}

/// A preprocessed 2D training/scoring sample.
#[derive(Clone, Debug)]
pub struct SlicePair {
    /// 256x256 intensities in [0,1].
    pub pixels: Grid2<f32>,
    /// 256x256 binary mask of one class.
    pub mask: Grid2<bool>,
    pub class_id: u16,
    pub true_dsc: Option<f64>,
    pub volume_id: String,
    pub slice_index: usize,
}

impl SlicePair {
    /// Stable key used to look up precomputed vision embeddings.
    pub fn sample_key(&self) -> String {
        format!("{}/{}/{}", self.volume_id, self.slice_index, self.class_id)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Pixels added around the class bounding box before resizing.
    pub crop_margin: usize,
    pub output_size: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { crop_margin: 16, output_size: SLICE_SIZE }
    }
}

/// Clip to the HU window and map affinely to [0,1].
#[inline]
pub fn normalize_hu(v: f64) -> f64 {
    (v.clamp(HU_CLIP_MIN, HU_CLIP_MAX) - HU_CLIP_MIN) / (HU_CLIP_MAX - HU_CLIP_MIN)
}

fn resize_bilinear(src: &Grid2<f64>, out_w: usize, out_h: usize) -> Grid2<f64> {
    let (in_w, in_h) = (src.width(), src.height());
    let mut out = Grid2::filled(out_w, out_h, 0.0);
    let sx = in_w as f64 / out_w as f64;
    let sy = in_h as f64 / out_h as f64;
    for r in 0..out_h {
        let fy = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, (in_h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let wy = fy - y0 as f64;
        for c in 0..out_w {
            let fx = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, (in_w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let wx = fx - x0 as f64;
            let top = src.get(y0, x0) * (1.0 - wx) + src.get(y0, x1) * wx;
            let bottom = src.get(y1, x0) * (1.0 - wx) + src.get(y1, x1) * wx;
            out.set(r, c, top * (1.0 - wy) + bottom * wy);
        }
    }
    out
}

fn resize_nearest(src: &Grid2<bool>, out_w: usize, out_h: usize) -> Grid2<bool> {
    let (in_w, in_h) = (src.width(), src.height());
    let mut out = Grid2::filled(out_w, out_h, false);
    let sx = in_w as f64 / out_w as f64;
    let sy = in_h as f64 / out_h as f64;
    for r in 0..out_h {
        let y = (((r as f64 + 0.5) * sy).floor() as usize).min(in_h - 1);
        for c in 0..out_w {
            let x = (((c as f64 + 0.5) * sx).floor() as usize).min(in_w - 1);
            out.set(r, c, *src.get(y, x));
        }
    }
    out
}

fn crop<T: Clone>(src: &Grid2<T>, r0: usize, c0: usize, r1: usize, c1: usize) -> Grid2<T> {
    let mut data = Vec::with_capacity((r1 - r0 + 1) * (c1 - c0 + 1));
    for r in r0..=r1 {
        for c in c0..=c1 {
            data.push(src.get(r, c).clone());
        }
    }
    Grid2::from_vec(c1 - c0 + 1, r1 - r0 + 1, data)
}

/// Build a SlicePair from a raw image slice and mask. The crop window is the
/// bounding box of `crop_reference` expanded by the margin; the reference is
/// usually the mask itself but synthesis may substitute the ground-truth
/// footprint when the candidate mask is empty on a slice.
pub fn compose_slice_pair(
    image_slice: &Grid2<i16>,
    mask: &Grid2<bool>,
    crop_reference: &Grid2<bool>,
    config: &PreprocessConfig,
    class_id: u16,
    volume_id: &str,
    slice_index: usize,
) -> Result<SlicePair, VolumeError> {
    let (r0, c0, r1, c1) = crop_reference.bounding_box().ok_or_else(|| {
        VolumeError::EmptyClassSlice {
            volume: volume_id.to_string(),
            class: class_id,
            slice: slice_index,
        }
    })?;
    let m = config.crop_margin;
    let r0 = r0.saturating_sub(m);
    let c0 = c0.saturating_sub(m);
    let r1 = (r1 + m).min(image_slice.height() - 1);
    let c1 = (c1 + m).min(image_slice.width() - 1);

    let norm = crop(image_slice, r0, c0, r1, c1).map(|&v| normalize_hu(v as f64));
    let mask_crop = crop(mask, r0, c0, r1, c1);
    let pixels = resize_bilinear(&norm, config.output_size, config.output_size)
        .map(|&v| v as f32);
    let mask = resize_nearest(&mask_crop, config.output_size, config.output_size);
    Ok(SlicePair {
        pixels,
        mask,
        class_id,
        true_dsc: None,
        volume_id: volume_id.to_string(),
        slice_index,
    })
}

/// Preprocess one axial slice of one class into a SlicePair: HU clip and
/// normalize, crop to the class bounding box plus margin, resize to 256x256
/// (bilinear image, nearest mask).
pub fn preprocess_slice(
    volume: &LabeledVolume,
    axis_index: usize,
    slice_index: usize,
    class_id: u16,
    source: LabelSource,
    config: &PreprocessConfig,
) -> Result<SlicePair, VolumeError> {
    if axis_index > 2 {
        return Err(VolumeError::AxisOutOfRange(axis_index));
    }
    let len = volume.image.axis_len(axis_index);
    if slice_index >= len {
        return Err(VolumeError::SliceOutOfBounds { axis: axis_index, index: slice_index, len });
    }
    if !volume.classes.contains_key(&class_id) {
        return Err(VolumeError::UnknownClass(class_id));
    }
    let image_slice = volume.image.slice_axis(axis_index, slice_index);
    let label_slice = volume.labels(source)?.slice_axis(axis_index, slice_index);
    let mask = label_slice.map(|&v| v == class_id);
    compose_slice_pair(&image_slice, &mask, &mask, config, class_id, &volume.id, slice_index)
}

/// Sorted indices of axial slices where the class has at least one voxel.
pub fn slices_containing(
    volume: &LabeledVolume,
    class_id: u16,
    source: LabelSource,
) -> Result<Vec<usize>, VolumeError> {
    let grid = volume.labels(source)?;
    Ok(slices_with_class(grid, class_id, volume.axial_axis))
}

pub fn slices_with_class(grid: &Grid3<u16>, class_id: u16, axis: usize) -> Vec<usize> {
    (0..grid.axis_len(axis))
        .filter(|&i| grid.slice_axis(axis, i).as_slice().contains(&class_id))
        .collect()
}

pub fn slices_with_any(mask: &Grid3<bool>, axis: usize) -> Vec<usize> {
    (0..mask.axis_len(axis))
        .filter(|&i| mask.slice_axis(axis, i).any())
        .collect()
}

// ---------------------------------------------------------------------------
// Containers
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeFormat {
    RawJson,
    Nifti1,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SidecarFiles {
    image: String,
    ground_truth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    candidate: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Sidecar {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    dims: Option<[usize; 3]>,
    #[serde(default)]
    spacing_mm: Option<[f64; 3]>,
    #[serde(default)]
    dtype: Option<String>,
    classes: BTreeMap<String, String>,
    #[serde(default)]
    axial_axis: Option<usize>,
    files: SidecarFiles,
}

/// A loaded volume plus non-fatal warnings (e.g. unregistered class ids).
#[derive(Debug)]
pub struct VolumeLoad {
    pub volume: LabeledVolume,
    pub warnings: Vec<String>,
}

fn read_file(path: &Path) -> Result<Vec<u8>, VolumeError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| VolumeError::Io(path.display().to_string(), e.to_string()))?
        .read_to_end(&mut buf)
        .map_err(|e| VolumeError::Io(path.display().to_string(), e.to_string()))?;
    Ok(buf)
}

fn parse_classes(raw: &BTreeMap<String, String>, ctx: &str) -> Result<BTreeMap<u16, String>, VolumeError> {
    let mut classes = BTreeMap::new();
    for (k, v) in raw {
        let id: u16 = k
            .parse()
            .map_err(|_| VolumeError::Json(ctx.to_string(), format!("class id '{k}' is not a u16")))?;
        classes.insert(id, v.clone());
    }
    Ok(classes)
}

fn decode_i16_payload(bytes: &[u8], path: &str, expected: usize) -> Result<Vec<i16>, VolumeError> {
    if bytes.len() != expected * 2 {
        return Err(VolumeError::PayloadSizeMismatch {
            path: path.to_string(),
            expected: expected * 2,
            got: bytes.len(),
        });
    }
    Ok(bytes.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect())
}

fn decode_u16_payload(bytes: &[u8], path: &str, expected: usize) -> Result<Vec<u16>, VolumeError> {
    if bytes.len() != expected * 2 {
        return Err(VolumeError::PayloadSizeMismatch {
            path: path.to_string(),
            expected: expected * 2,
            got: bytes.len(),
        });
    }
    Ok(bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect())
}

/// Load a labeled volume from a sidecar/descriptor JSON.
pub fn load_volume(path: &Path, format: VolumeFormat) -> Result<VolumeLoad, VolumeError> {
    let text = read_file(path)?;
    let sidecar: Sidecar = serde_json::from_slice(&text)
        .map_err(|e| VolumeError::Json(path.display().to_string(), e.to_string()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let id = sidecar.id.clone().unwrap_or_else(|| {
        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    });
    let classes = parse_classes(&sidecar.classes, &path.display().to_string())?;

    let mut volume = match format {
        VolumeFormat::RawJson => load_raw_json(&sidecar, dir, &id, classes, path)?,
        VolumeFormat::Nifti1 => load_nifti_descriptor(&sidecar, dir, &id, classes, path)?,
    };
    if let Some(axis) = sidecar.axial_axis {
        if axis > 2 {
            return Err(VolumeError::AxisOutOfRange(axis));
        }
        volume.axial_axis = axis;
    }
    let warnings = volume.register_unknown_classes();
    Ok(VolumeLoad { volume, warnings })
}

fn load_raw_json(
    sidecar: &Sidecar,
    dir: &Path,
    id: &str,
    classes: BTreeMap<u16, String>,
    sidecar_path: &Path,
) -> Result<LabeledVolume, VolumeError> {
    let ctx = sidecar_path.display().to_string();
    let dims = sidecar
        .dims
        .ok_or_else(|| VolumeError::Json(ctx.clone(), "missing 'dims'".into()))?;
    let spacing = sidecar
        .spacing_mm
        .ok_or_else(|| VolumeError::Json(ctx.clone(), "missing 'spacing_mm'".into()))?;
    let dtype = sidecar
        .dtype
        .clone()
        .ok_or_else(|| VolumeError::Json(ctx.clone(), "missing 'dtype'".into()))?;
    if dtype != "int16" {
        return Err(VolumeError::UnsupportedDtype(ctx, dtype));
    }
    let n = dims[0] * dims[1] * dims[2];

    let image_path = dir.join(&sidecar.files.image);
    let image_bytes = read_file(&image_path)?;
    let image_vals = decode_i16_payload(&image_bytes, &image_path.display().to_string(), n)?;
    let image = Grid3::from_vec(dims[0], dims[1], dims[2], image_vals);

    let gt_path = dir.join(&sidecar.files.ground_truth);
    let gt_bytes = read_file(&gt_path)?;
    let gt_vals = decode_u16_payload(&gt_bytes, &gt_path.display().to_string(), n)?;
    let ground_truth = Grid3::from_vec(dims[0], dims[1], dims[2], gt_vals);

    let candidate = match &sidecar.files.candidate {
        Some(rel) => {
            let cand_path = dir.join(rel);
            let cand_bytes = read_file(&cand_path)?;
            let vals = decode_u16_payload(&cand_bytes, &cand_path.display().to_string(), n)?;
            Some(Grid3::from_vec(dims[0], dims[1], dims[2], vals))
        }
        None => None,
    };

    LabeledVolume::new(id, image, ground_truth, candidate, spacing, classes)
}

fn load_nifti_descriptor(
    sidecar: &Sidecar,
    dir: &Path,
    id: &str,
    classes: BTreeMap<u16, String>,
    sidecar_path: &Path,
) -> Result<LabeledVolume, VolumeError> {
    let ctx = sidecar_path.display().to_string();
    let image_nii = nifti::read_nifti(&dir.join(&sidecar.files.image))?;
    let gt_nii = nifti::read_nifti(&dir.join(&sidecar.files.ground_truth))?;
    if gt_nii.dims != image_nii.dims {
        return Err(VolumeError::DimsMismatch(
            ctx,
            format!("image {:?} vs ground_truth {:?}", image_nii.dims, gt_nii.dims),
        ));
    }
    let candidate = match &sidecar.files.candidate {
        Some(rel) => {
            let c = nifti::read_nifti(&dir.join(rel))?;
            if c.dims != image_nii.dims {
                return Err(VolumeError::DimsMismatch(
                    ctx,
                    format!("image {:?} vs candidate {:?}", image_nii.dims, c.dims),
                ));
            }
            Some(c.to_label_grid()?)
        }
        None => None,
    };
    let spacing = image_nii.spacing_mm;
    LabeledVolume::new(
        id,
        image_nii.to_image_grid(),
        gt_nii.to_label_grid()?,
        candidate,
        spacing,
        classes,
    )
}

/// Write a volume in the raw_json container. Payload files are named after
/// the sidecar stem and placed next to it.
pub fn write_volume(volume: &LabeledVolume, sidecar_path: &Path) -> Result<(), VolumeError> {
    let dir = sidecar_path.parent().unwrap_or(Path::new("."));
    let stem = sidecar_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "volume".to_string());
    std::fs::create_dir_all(dir)
        .map_err(|e| VolumeError::Io(dir.display().to_string(), e.to_string()))?;

    let write_bytes = |name: &str, bytes: &[u8]| -> Result<(), VolumeError> {
        let p = dir.join(name);
        let mut f = std::fs::File::create(&p)
            .map_err(|e| VolumeError::Io(p.display().to_string(), e.to_string()))?;
        f.write_all(bytes)
            .map_err(|e| VolumeError::Io(p.display().to_string(), e.to_string()))
    };

    let image_name = format!("{stem}.image.raw");
    let gt_name = format!("{stem}.ground_truth.raw");
    let cand_name = format!("{stem}.candidate.raw");

    let image_bytes: Vec<u8> =
        volume.image.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
    write_bytes(&image_name, &image_bytes)?;
    let gt_bytes: Vec<u8> =
        volume.ground_truth.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
    write_bytes(&gt_name, &gt_bytes)?;
    if let Some(c) = &volume.candidate {
        let bytes: Vec<u8> = c.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
        write_bytes(&cand_name, &bytes)?;
    }

    let (nx, ny, nz) = volume.image.dims();
    let sidecar = Sidecar {
        id: Some(volume.id.clone()),
        dims: Some([nx, ny, nz]),
        spacing_mm: Some(volume.spacing_mm),
        dtype: Some("int16".to_string()),
        classes: volume.classes.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        axial_axis: Some(volume.axial_axis),
        files: SidecarFiles {
            image: image_name,
            ground_truth: gt_name,
            candidate: volume.candidate.as_ref().map(|_| cand_name),
        },
    };
    let json = serde_json::to_vec_pretty(&sidecar)
        .map_err(|e| VolumeError::Json(sidecar_path.display().to_string(), e.to_string()))?;
    let mut f = std::fs::File::create(sidecar_path)
        .map_err(|e| VolumeError::Io(sidecar_path.display().to_string(), e.to_string()))?;
    f.write_all(&json)
        .map_err(|e| VolumeError::Io(sidecar_path.display().to_string(), e.to_string()))
}

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

/// One entry of a dataset manifest (a JSON list of these).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    #[serde(default = "default_format")]
    pub format: VolumeFormat,
}

fn default_format() -> VolumeFormat {
    VolumeFormat::RawJson
}

#[derive(Clone, Debug)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    base_dir: PathBuf,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, VolumeError> {
        let text = read_file(path)?;
        let entries: Vec<ManifestEntry> = serde_json::from_slice(&text)
            .map_err(|e| VolumeError::Json(path.display().to_string(), e.to_string()))?;
        if entries.is_empty() {
            return Err(VolumeError::BadManifest(
                path.display().to_string(),
                "manifest lists no volumes".into(),
            ));
        }
        Ok(Manifest {
            entries,
            base_dir: path.parent().unwrap_or(Path::new(".")).to_path_buf(),
        })
    }

    pub fn load_entry(&self, entry: &ManifestEntry) -> Result<VolumeLoad, VolumeError> {
        load_volume(&self.base_dir.join(&entry.path), entry.format)
    }

    /// A manifest over a subset of entries, sharing this one's base
    /// directory; used to partition scoring across workers.
    pub fn with_entries(&self, entries: Vec<ManifestEntry>) -> Manifest {
        Manifest { entries, base_dir: self.base_dir.clone() }
    }

    /// Union of the class tables of all loadable volumes.
    pub fn merged_classes(&self) -> Result<BTreeMap<u16, String>, VolumeError> {
        let mut classes = BTreeMap::new();
        for entry in &self.entries {
            let loaded = self.load_entry(entry)?;
            classes.extend(loaded.volume.classes);
        }
        Ok(classes)
    }
}
