//! Synthetic quality-labeled training data: parametric mask corruptions,
//! slice extraction with per-slice Dice targets, and histogram-balancing
//! resampling.
//!
//! Every operation is a pure function of (input, spec/config seed), so a
//! rerun with the same seed reproduces the dataset byte for byte. Parallel
//! synthesis must derive one seed per (volume, class, severity) cell via
//! [`crate::rng::derive_seed`]; this module does exactly that internally.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid3;
use crate::metrics::dsc2;
use crate::rng::{derive_seed, Rng};
use crate::volume::{
    compose_slice_pair, slices_with_class, LabeledVolume, PreprocessConfig, SlicePair,
    VolumeError,
};

#[derive(Debug, Error)]
pub enum DegradeError {
    #[error("severity {severity} out of range for {kind:?}: {reason}")]
    SeverityOutOfRange { kind: DegradationKind, severity: f64, reason: &'static str },
    #[error("{0:?} requires a non-empty input mask")]
    EmptyInput(DegradationKind),
    #[error("invalid synthesis config: {0}")]
    BadConfig(String),
    #[error("record {0} has no true_dsc; resampling requires scored pairs")]
    MissingDsc(usize),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationKind {
    Erode,
    Dilate,
    DropComponents,
    BoundaryNoise,
    Shift,
    CheckpointSchedule,
}

/// One parametric corruption. Severity meaning per kind:
/// iterations (erode/dilate), voxels (shift), probability/fraction in [0,1]
/// (boundary_noise/drop_components), or training progress in [0,1] where 0
/// is the earliest virtual checkpoint (checkpoint_schedule).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub kind: DegradationKind,
    pub severity: f64,
    pub seed: u64,
}

impl DegradationSpec {
    pub fn new(kind: DegradationKind, severity: f64, seed: u64) -> Self {
        DegradationSpec { kind, severity, seed }
    }

    fn validate(&self) -> Result<(), DegradeError> {
        use DegradationKind::*;
        let fail = |reason| Err(DegradeError::SeverityOutOfRange {
            kind: self.kind,
            severity: self.severity,
            reason,
        });
        if !self.severity.is_finite() || self.severity < 0.0 {
            return fail("must be finite and non-negative");
        }
        match self.kind {
            Erode | Dilate | Shift => {
                if self.severity.fract() != 0.0 {
                    return fail("must be an integer iteration/voxel count");
                }
            }
            DropComponents | BoundaryNoise | CheckpointSchedule => {
                if self.severity > 1.0 {
                    return fail("must lie in [0, 1]");
                }
            }
        }
        Ok(())
    }
}

// --- morphology -------------------------------------------------------------

/// One erosion step with the box element (3x3x3, or 3x3 when an axis has
/// extent 1), separable per axis. Outside the grid counts as background;
/// degenerate axes are skipped so single-slice grids behave as 2D masks.
fn erode3_once(mask: &Grid3<bool>) -> Grid3<bool> {
    let (nx, ny, nz) = mask.dims();
    let pass = |src: &Grid3<bool>, axis: usize| {
        let len = src.axis_len(axis);
        if len == 1 {
            return src.clone();
        }
        let mut out = src.clone();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let c = [x, y, z][axis];
                    let lo_ok = c > 0;
                    let hi_ok = c + 1 < len;
                    let get = |d: isize| -> bool {
                        let (mut xx, mut yy, mut zz) = (x as isize, y as isize, z as isize);
                        match axis {
                            0 => xx += d,
                            1 => yy += d,
                            _ => zz += d,
                        }
                        *src.get(xx as usize, yy as usize, zz as usize)
                    };
                    let v = *src.get(x, y, z)
                        && (lo_ok && get(-1))
                        && (hi_ok && get(1));
                    out.set(x, y, z, v);
                }
            }
        }
        out
    };
    pass(&pass(&pass(mask, 0), 1), 2)
}

fn dilate3_once(mask: &Grid3<bool>) -> Grid3<bool> {
    let (nx, ny, nz) = mask.dims();
    let pass = |src: &Grid3<bool>, axis: usize| {
        let len = src.axis_len(axis);
        if len == 1 {
            return src.clone();
        }
        let mut out = src.clone();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let c = [x, y, z][axis];
                    let get = |d: isize| -> bool {
                        let (mut xx, mut yy, mut zz) = (x as isize, y as isize, z as isize);
                        match axis {
                            0 => xx += d,
                            1 => yy += d,
                            _ => zz += d,
                        }
                        *src.get(xx as usize, yy as usize, zz as usize)
                    };
                    let v = *src.get(x, y, z)
                        || (c > 0 && get(-1))
                        || (c + 1 < len && get(1));
                    out.set(x, y, z, v);
                }
            }
        }
        out
    };
    pass(&pass(&pass(mask, 0), 1), 2)
}

pub fn erode3(mask: &Grid3<bool>, iterations: usize) -> Grid3<bool> {
    let mut m = mask.clone();
    for _ in 0..iterations {
        m = erode3_once(&m);
    }
    m
}

pub fn dilate3(mask: &Grid3<bool>, iterations: usize) -> Grid3<bool> {
    let mut m = mask.clone();
    for _ in 0..iterations {
        m = dilate3_once(&m);
    }
    m
}

// --- connected components (6-connectivity) ----------------------------------

fn connected_components3(mask: &Grid3<bool>) -> Vec<Vec<usize>> {
    let (nx, ny, nz) = mask.dims();
    let total = mask.len();
    let mut label = vec![usize::MAX; total];
    let mut components: Vec<Vec<usize>> = Vec::new();
    let flat = mask.as_slice();
    let mut stack = Vec::new();
    for start in 0..total {
        if !flat[start] || label[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut voxels = Vec::new();
        stack.push(start);
        label[start] = id;
        while let Some(idx) = stack.pop() {
            voxels.push(idx);
            let x = idx % nx;
            let y = (idx / nx) % ny;
            let z = idx / (nx * ny);
            let mut push = |nxt: usize| {
                if flat[nxt] && label[nxt] == usize::MAX {
                    label[nxt] = id;
                    stack.push(nxt);
                }
            };
            if x > 0 {
                push(idx - 1);
            }
            if x + 1 < nx {
                push(idx + 1);
            }
            if y > 0 {
                push(idx - nx);
            }
            if y + 1 < ny {
                push(idx + nx);
            }
            if z > 0 {
                push(idx - nx * ny);
            }
            if z + 1 < nz {
                push(idx + nx * ny);
            }
        }
        components.push(voxels);
    }
    components
}

fn drop_components3(mask: &Grid3<bool>, fraction: f64, seed: u64) -> Grid3<bool> {
    let mut components = connected_components3(mask);
    if components.is_empty() {
        return mask.clone();
    }
    // Deterministic base order, then a seeded shuffle picks the victims.
    components.sort_by_key(|c| c.iter().copied().min().unwrap_or(usize::MAX));
    let k = (fraction * components.len() as f64).round() as usize;
    let k = k.min(components.len());
    let mut order: Vec<usize> = (0..components.len()).collect();
    Rng::new(seed).shuffle(&mut order);
    let mut out = mask.clone();
    for &ci in order.iter().take(k) {
        for &idx in &components[ci] {
            out.as_mut_slice()[idx] = false;
        }
    }
    out
}

fn boundary_noise3(mask: &Grid3<bool>, probability: f64, seed: u64) -> Grid3<bool> {
    let (nx, ny, nz) = mask.dims();
    let mut out = mask.clone();
    let mut rng = Rng::new(seed);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let v = *mask.get(x, y, z);
                let mut interface = false;
                let mut check = |xx: isize, yy: isize, zz: isize| {
                    if xx < 0 || yy < 0 || zz < 0 {
                        return;
                    }
                    let (xx, yy, zz) = (xx as usize, yy as usize, zz as usize);
                    if xx >= nx || yy >= ny || zz >= nz {
                        return;
                    }
                    if *mask.get(xx, yy, zz) != v {
                        interface = true;
                    }
                };
                let (xi, yi, zi) = (x as isize, y as isize, z as isize);
                check(xi - 1, yi, zi);
                check(xi + 1, yi, zi);
                check(xi, yi - 1, zi);
                check(xi, yi + 1, zi);
                check(xi, yi, zi - 1);
                check(xi, yi, zi + 1);
                // Mask voxels on the frame edge count as boundary.
                if v && (x == 0 || x + 1 == nx || y == 0 || y + 1 == ny || z == 0 || z + 1 == nz)
                {
                    interface = true;
                }
                if interface && rng.next_f64() < probability {
                    out.set(x, y, z, !v);
                }
            }
        }
    }
    out
}

fn shift3(mask: &Grid3<bool>, voxels: usize, seed: u64) -> Grid3<bool> {
    let (nx, ny, nz) = mask.dims();
    let mut rng = Rng::new(seed);
    let axis = rng.next_below(3);
    let forward = rng.next_below(2) == 1;
    let delta = voxels as isize * if forward { 1 } else { -1 };
    let mut out = Grid3::filled(nx, ny, nz, false);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !*mask.get(x, y, z) {
                    continue;
                }
                let (mut xx, mut yy, mut zz) = (x as isize, y as isize, z as isize);
                match axis {
                    0 => xx += delta,
                    1 => yy += delta,
                    _ => zz += delta,
                }
                if xx >= 0
                    && yy >= 0
                    && zz >= 0
                    && (xx as usize) < nx
                    && (yy as usize) < ny
                    && (zz as usize) < nz
                {
                    out.set(xx as usize, yy as usize, zz as usize, true);
                }
            }
        }
    }
    out
}

/// Apply one corruption to a 3D mask. Identical (spec, input) always yields
/// an identical output; grid dimensions never change. Erosion may erase the
/// mask entirely, which callers observe as an empty output.
pub fn apply_degradation3(
    mask: &Grid3<bool>,
    spec: &DegradationSpec,
) -> Result<Grid3<bool>, DegradeError> {
    use DegradationKind::*;
    spec.validate()?;
    if matches!(spec.kind, Erode | Shift | DropComponents) && !mask.any() {
        return Err(DegradeError::EmptyInput(spec.kind));
    }
    Ok(match spec.kind {
        Erode => erode3(mask, spec.severity as usize),
        Dilate => dilate3(mask, spec.severity as usize),
        DropComponents => drop_components3(mask, spec.severity, spec.seed),
        BoundaryNoise => boundary_noise3(mask, spec.severity, spec.seed),
        Shift => shift3(mask, spec.severity as usize, spec.seed),
        CheckpointSchedule => {
            // Earlier virtual checkpoints (severity near 0) corrupt harder;
            // quality improves as the schedule approaches 1.
            let decay = (1.0 - spec.severity).powi(2);
            let noisy = boundary_noise3(mask, 0.45 * decay, derive_seed(spec.seed, "noise"));
            if noisy.any() {
                drop_components3(&noisy, 0.5 * decay, derive_seed(spec.seed, "drop"))
            } else {
                noisy
            }
        }
    })
}

// --- dataset synthesis -------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KindSeverities {
    pub kind: DegradationKind,
    pub severities: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub severity_grid: Vec<KindSeverities>,
    pub target_bins: usize,
    pub samples_per_bin: usize,
    pub seed: u64,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            severity_grid: vec![
                KindSeverities { kind: DegradationKind::Erode, severities: vec![0.0, 1.0, 2.0] },
                KindSeverities { kind: DegradationKind::Dilate, severities: vec![1.0, 2.0] },
            ],
            target_bins: 10,
            samples_per_bin: 64,
            seed: 0,
            preprocess: PreprocessConfig::default(),
        }
    }
}

impl SynthesisConfig {
    fn validate(&self) -> Result<(), DegradeError> {
        if self.target_bins < 2 {
            return Err(DegradeError::BadConfig("target_bins must be >= 2".into()));
        }
        if self.samples_per_bin < 1 {
            return Err(DegradeError::BadConfig("samples_per_bin must be >= 1".into()));
        }
        if self.severity_grid.iter().all(|ks| ks.severities.is_empty()) {
            return Err(DegradeError::BadConfig("severity grid is empty".into()));
        }
        Ok(())
    }
}

/// A synthesized sample plus the corruption that produced it.
#[derive(Clone, Debug)]
pub struct SynthRecord {
    pub pair: SlicePair,
    pub degradation: DegradationSpec,
}

#[derive(Debug, Default)]
pub struct SynthOutput {
    pub records: Vec<SynthRecord>,
    /// (volume, class) cells skipped because the class has no ground truth
    /// there; surfaced rather than silently dropped.
    pub flagged: Vec<String>,
    pub warnings: Vec<String>,
}

/// Degrade every (volume, class, severity) cell, slice the results, and emit
/// one record per ground-truth-present slice with its per-slice 2D Dice as
/// the quality target. Slices where the degraded candidate is empty but the
/// ground truth is not yield true_dsc = 0.
pub fn synthesize_dataset(
    volumes: &[LabeledVolume],
    config: &SynthesisConfig,
) -> Result<SynthOutput, DegradeError> {
    config.validate()?;
    let mut out = SynthOutput::default();

    let mut all_classes: Vec<u16> = volumes
        .iter()
        .flat_map(|v| v.classes.keys().copied())
        .collect();
    all_classes.sort_unstable();
    all_classes.dedup();

    let mut class_seen = std::collections::BTreeMap::new();
    for volume in volumes {
        let axis = volume.axial_axis;
        for &class in &all_classes {
            if !volume.classes.contains_key(&class) {
                continue;
            }
            let gt_mask = volume.ground_truth.map(|&v| v == class);
            if !gt_mask.any() {
                out.flagged.push(format!(
                    "volume {} class {class}: no ground-truth voxels, cell skipped",
                    volume.id
                ));
                continue;
            }
            *class_seen.entry(class).or_insert(0usize) += 1;
            let gt_slices = slices_with_class(&volume.ground_truth, class, axis);
            for ks in &config.severity_grid {
                for (si, &severity) in ks.severities.iter().enumerate() {
                    let cell_seed = derive_seed(
                        config.seed,
                        &format!("{}/{}/{:?}/{}", volume.id, class, ks.kind, si),
                    );
                    let spec = DegradationSpec::new(ks.kind, severity, cell_seed);
                    let degraded = apply_degradation3(&gt_mask, &spec)?;
                    for &slice in &gt_slices {
                        let gt2 = gt_mask.slice_axis(axis, slice);
                        let cand2 = degraded.slice_axis(axis, slice);
                        // gt2 is non-empty by construction, so the Dice is
                        // defined even when the candidate slice is empty.
                        let dsc = dsc2(&cand2, &gt2).expect("gt slice non-empty");
                        let crop_ref = if cand2.any() { &cand2 } else { &gt2 };
                        let image2 = volume.image.slice_axis(axis, slice);
                        let mut pair = compose_slice_pair(
                            &image2,
                            &cand2,
                            crop_ref,
                            &config.preprocess,
                            class,
                            &volume.id,
                            slice,
                        )?;
                        pair.true_dsc = Some(dsc);
                        out.records.push(SynthRecord { pair, degradation: spec });
                    }
                }
            }
        }
    }
    for &class in &all_classes {
        if !class_seen.contains_key(&class) {
            out.warnings.push(format!("class {class} is empty in every volume; skipped"));
        }
    }
    Ok(out)
}

// --- balancing resample -------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ResamplePlan {
    /// Indices into the input, possibly repeated (upsampling), shuffled.
    pub selected: Vec<usize>,
    pub bin_counts_before: Vec<usize>,
    pub bin_counts_after: Vec<usize>,
    /// Bins with no source samples are left empty, never fabricated.
    pub empty_bins: Vec<usize>,
}

/// Plan a histogram-balancing resample of quality scores over
/// `target_bins` equal-width bins on [0,1].
pub fn resample_plan(dsc: &[f64], config: &SynthesisConfig) -> Result<ResamplePlan, DegradeError> {
    config.validate()?;
    let bins = config.target_bins;
    let mut by_bin: Vec<Vec<usize>> = vec![Vec::new(); bins];
    for (i, &d) in dsc.iter().enumerate() {
        if !(0.0..=1.0).contains(&d) {
            return Err(DegradeError::BadConfig(format!("true_dsc {d} outside [0,1]")));
        }
        let b = ((d * bins as f64) as usize).min(bins - 1);
        by_bin[b].push(i);
    }
    let before: Vec<usize> = by_bin.iter().map(Vec::len).collect();
    let mut selected = Vec::new();
    let mut after = vec![0usize; bins];
    let mut empty = Vec::new();
    for (b, members) in by_bin.iter().enumerate() {
        if members.is_empty() {
            empty.push(b);
            continue;
        }
        let mut rng = Rng::new(derive_seed(config.seed, &format!("bin/{b}")));
        let take = config.samples_per_bin;
        if members.len() >= take {
            let mut order = members.clone();
            rng.shuffle(&mut order);
            selected.extend_from_slice(&order[..take]);
        } else {
            selected.extend_from_slice(members);
            for _ in members.len()..take {
                selected.push(members[rng.next_below(members.len())]);
            }
        }
        after[b] = take;
    }
    Rng::new(derive_seed(config.seed, "resample-shuffle")).shuffle(&mut selected);
    Ok(ResamplePlan {
        selected,
        bin_counts_before: before,
        bin_counts_after: after,
        empty_bins: empty,
    })
}

/// Apply [`resample_plan`] to synthesized records.
pub fn resample_balanced(
    records: &[SynthRecord],
    config: &SynthesisConfig,
) -> Result<(Vec<SynthRecord>, ResamplePlan), DegradeError> {
    let mut dsc = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        dsc.push(r.pair.true_dsc.ok_or(DegradeError::MissingDsc(i))?);
    }
    let plan = resample_plan(&dsc, config)?;
    let out = plan.selected.iter().map(|&i| records[i].clone()).collect();
    Ok((out, plan))
}
