//! Segmentation-quality metrics (Dice, normalized surface distance) and the
//! rank/correlation metrics used to evaluate quality predictors.
//!
//! Undefined values (both masks empty, degenerate variance, ...) are explicit
//! errors; they never leak into reports as 0 or NaN.

use thiserror::Error;

use crate::grid::{Grid2, Grid3};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("mask shapes differ: {0} vs {1}")]
    ShapeMismatch(String, String),
    #[error("metric undefined: both masks empty")]
    BothEmpty,
    #[error("metric undefined: empty mask")]
    EmptyMask,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("metric undefined: zero variance in {0}")]
    DegenerateVariance(&'static str),
    #[error("no class group has at least k samples")]
    NoEligibleGroups,
    #[error("k must be positive")]
    ZeroK,
}

/// A (predicted, actual) score pair for one sample.
#[derive(Clone, Debug)]
pub struct MetricSample {
    pub predicted: f64,
    pub actual: f64,
    pub class_id: u16,
    pub sample_id: String,
}

impl MetricSample {
    pub fn new(predicted: f64, actual: f64, class_id: u16, sample_id: impl Into<String>) -> Self {
        MetricSample { predicted, actual, class_id, sample_id: sample_id.into() }
    }
}

fn dsc_flat(a: &[bool], b: &[bool]) -> Result<f64, MetricError> {
    let inter = a.iter().zip(b).filter(|(&x, &y)| x && y).count();
    let na = a.iter().filter(|&&x| x).count();
    let nb = b.iter().filter(|&&x| x).count();
    if na == 0 && nb == 0 {
        return Err(MetricError::BothEmpty);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Dice similarity of two 2D masks: 2|A∩B| / (|A|+|B|).
pub fn dsc2(a: &Grid2<bool>, b: &Grid2<bool>) -> Result<f64, MetricError> {
    if !a.same_shape(b) {
        return Err(MetricError::ShapeMismatch(
            format!("{}x{}", a.width(), a.height()),
            format!("{}x{}", b.width(), b.height()),
        ));
    }
    dsc_flat(a.as_slice(), b.as_slice())
}

/// Dice similarity of two 3D masks.
pub fn dsc3(a: &Grid3<bool>, b: &Grid3<bool>) -> Result<f64, MetricError> {
    if !a.same_shape(b) {
        return Err(MetricError::ShapeMismatch(
            format!("{:?}", a.dims()),
            format!("{:?}", b.dims()),
        ));
    }
    dsc_flat(a.as_slice(), b.as_slice())
}

/// Boundary pixels of a 2D mask: set pixels with a 4-neighbor outside the
/// mask (the frame edge counts as outside).
pub fn boundary2(mask: &Grid2<bool>) -> Vec<(usize, usize)> {
    let (w, h) = (mask.width(), mask.height());
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !*mask.get(r, c) {
                continue;
            }
            let exposed = (r == 0 || !*mask.get(r - 1, c))
                || (r + 1 == h || !*mask.get(r + 1, c))
                || (c == 0 || !*mask.get(r, c - 1))
                || (c + 1 == w || !*mask.get(r, c + 1));
            if exposed {
                out.push((r, c));
            }
        }
    }
    out
}

/// Boundary voxels of a 3D mask under 6-connectivity.
pub fn boundary3(mask: &Grid3<bool>) -> Vec<(usize, usize, usize)> {
    let (nx, ny, nz) = mask.dims();
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !*mask.get(x, y, z) {
                    continue;
                }
                let exposed = (x == 0 || !*mask.get(x - 1, y, z))
                    || (x + 1 == nx || !*mask.get(x + 1, y, z))
                    || (y == 0 || !*mask.get(x, y - 1, z))
                    || (y + 1 == ny || !*mask.get(x, y + 1, z))
                    || (z == 0 || !*mask.get(x, y, z - 1))
                    || (z + 1 == nz || !*mask.get(x, y, z + 1));
                if exposed {
                    out.push((x, y, z));
                }
            }
        }
    }
    out
}

/// Fraction of `from` points with a `to` point within `tol` (mm), using a
/// uniform bucket grid over the `to` set so queries stay local.
fn covered_fraction(from: &[[f64; 3]], to: &[[f64; 3]], tol: f64) -> f64 {
    if from.is_empty() {
        return 0.0;
    }
    // Bucket side = tol, so a query only inspects the 3x3x3 neighborhood.
    let cell = tol.max(1e-9);
    let key = |p: &[f64; 3]| {
        [
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        ]
    };
    let mut buckets: std::collections::HashMap<[i64; 3], Vec<usize>> =
        std::collections::HashMap::new();
    for (i, p) in to.iter().enumerate() {
        buckets.entry(key(p)).or_default().push(i);
    }
    let tol2 = tol * tol;
    let mut covered = 0usize;
    'outer: for p in from {
        let k = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(ids) = buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) else {
                        continue;
                    };
                    for &i in ids {
                        let q = &to[i];
                        let d2 = (p[0] - q[0]).powi(2)
                            + (p[1] - q[1]).powi(2)
                            + (p[2] - q[2]).powi(2);
                        if d2 <= tol2 {
                            covered += 1;
                            continue 'outer;
                        }
                    }
                }
            }
        }
    }
    covered as f64 / from.len() as f64
}

fn nsd_points(a: Vec<[f64; 3]>, b: Vec<[f64; 3]>, tolerance_mm: f64) -> f64 {
    let fa = covered_fraction(&a, &b, tolerance_mm);
    let fb = covered_fraction(&b, &a, tolerance_mm);
    0.5 * (fa + fb)
}

/// Normalized surface distance between two 3D masks: the fraction of each
/// mask's boundary voxels lying within `tolerance_mm` of the other mask's
/// boundary, averaged symmetrically. Distances are between voxel centers in
/// physical coordinates.
pub fn nsd3(
    a: &Grid3<bool>,
    b: &Grid3<bool>,
    spacing_mm: [f64; 3],
    tolerance_mm: f64,
) -> Result<f64, MetricError> {
    if !a.same_shape(b) {
        return Err(MetricError::ShapeMismatch(
            format!("{:?}", a.dims()),
            format!("{:?}", b.dims()),
        ));
    }
    if !a.any() || !b.any() {
        return Err(MetricError::EmptyMask);
    }
    let to_mm = |pts: Vec<(usize, usize, usize)>| {
        pts.into_iter()
            .map(|(x, y, z)| {
                [
                    x as f64 * spacing_mm[0],
                    y as f64 * spacing_mm[1],
                    z as f64 * spacing_mm[2],
                ]
            })
            .collect::<Vec<_>>()
    };
    Ok(nsd_points(to_mm(boundary3(a)), to_mm(boundary3(b)), tolerance_mm))
}

/// 2D normalized surface distance (boundary edges under 4-connectivity).
pub fn nsd2(
    a: &Grid2<bool>,
    b: &Grid2<bool>,
    spacing_mm: [f64; 2],
    tolerance_mm: f64,
) -> Result<f64, MetricError> {
    if !a.same_shape(b) {
        return Err(MetricError::ShapeMismatch(
            format!("{}x{}", a.width(), a.height()),
            format!("{}x{}", b.width(), b.height()),
        ));
    }
    if !a.any() || !b.any() {
        return Err(MetricError::EmptyMask);
    }
    let to_mm = |pts: Vec<(usize, usize)>| {
        pts.into_iter()
            .map(|(r, c)| [c as f64 * spacing_mm[0], r as f64 * spacing_mm[1], 0.0])
            .collect::<Vec<_>>()
    };
    Ok(nsd_points(to_mm(boundary2(a)), to_mm(boundary2(b)), tolerance_mm))
}

/// Default NSD tolerance: one voxel-equivalent, i.e. the largest spacing
/// component in mm.
pub fn default_nsd_tolerance(spacing_mm: &[f64]) -> f64 {
    spacing_mm.iter().cloned().fold(0.0, f64::max)
}

/// Pearson (linear) correlation of predicted vs. actual.
pub fn lcc(samples: &[MetricSample]) -> Result<f64, MetricError> {
    if samples.len() < 2 {
        return Err(MetricError::TooFewSamples { needed: 2, got: samples.len() });
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.predicted).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.actual).collect();
    pearson(&xs, &ys)
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 {
        return Err(MetricError::DegenerateVariance("predicted"));
    }
    if syy <= 0.0 {
        return Err(MetricError::DegenerateVariance("actual"));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Ranks with ties assigned the average of the positions they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("NaN in rank input"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the averaged 1-based rank
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank-order correlation: Pearson correlation of average ranks.
pub fn srocc(samples: &[MetricSample]) -> Result<f64, MetricError> {
    if samples.len() < 2 {
        return Err(MetricError::TooFewSamples { needed: 2, got: samples.len() });
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.predicted).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.actual).collect();
    pearson(&average_ranks(&xs), &average_ranks(&ys))
}

/// Result of [`map_at_k`], including which class groups were too small.
#[derive(Clone, Debug)]
pub struct MapAtK {
    pub value: f64,
    pub per_class: Vec<(u16, f64)>,
    pub skipped_classes: Vec<u16>,
}

/// Mean average precision at cutoff `k` for retrieving the worst labels.
///
/// Per class, the relevant set is the `k` samples with the lowest actual
/// score; the ranking is by ascending predicted score. Classes with fewer
/// than `k` samples are skipped and reported.
pub fn map_at_k(samples: &[MetricSample], k: usize) -> Result<MapAtK, MetricError> {
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    let mut classes: Vec<u16> = samples.iter().map(|s| s.class_id).collect();
    classes.sort_unstable();
    classes.dedup();

    let mut per_class = Vec::new();
    let mut skipped = Vec::new();
    for class in classes {
        let group: Vec<&MetricSample> =
            samples.iter().filter(|s| s.class_id == class).collect();
        if group.len() < k {
            skipped.push(class);
            continue;
        }
        // Relevant = k lowest actual; ties broken by sample id so the
        // outcome does not depend on input order.
        let mut by_actual: Vec<&&MetricSample> = group.iter().collect();
        by_actual.sort_by(|a, b| {
            a.actual
                .partial_cmp(&b.actual)
                .unwrap()
                .then_with(|| a.sample_id.cmp(&b.sample_id))
        });
        let relevant: std::collections::BTreeSet<&str> =
            by_actual[..k].iter().map(|s| s.sample_id.as_str()).collect();

        let mut by_predicted: Vec<&&MetricSample> = group.iter().collect();
        by_predicted.sort_by(|a, b| {
            a.predicted
                .partial_cmp(&b.predicted)
                .unwrap()
                .then_with(|| a.sample_id.cmp(&b.sample_id))
        });

        let mut hits = 0usize;
        let mut ap = 0.0;
        for (pos, s) in by_predicted.iter().take(k).enumerate() {
            if relevant.contains(s.sample_id.as_str()) {
                hits += 1;
                ap += hits as f64 / (pos + 1) as f64;
            }
        }
        per_class.push((class, ap / k as f64));
    }
    if per_class.is_empty() {
        return Err(MetricError::NoEligibleGroups);
    }
    let value = per_class.iter().map(|(_, v)| v).sum::<f64>() / per_class.len() as f64;
    Ok(MapAtK { value, per_class, skipped_classes: skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask2(w: usize, h: usize, set: &[(usize, usize)]) -> Grid2<bool> {
        let mut g = Grid2::filled(w, h, false);
        for &(r, c) in set {
            g.set(r, c, true);
        }
        g
    }

    fn samples_from(pairs: &[(f64, f64)]) -> Vec<MetricSample> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(p, a))| MetricSample::new(p, a, 1, format!("s{i}")))
            .collect()
    }

    #[test]
    fn dsc_identical_and_disjoint() {
        let a = mask2(4, 4, &[(1, 1), (1, 2), (2, 1)]);
        let b = mask2(4, 4, &[(0, 0)]);
        assert_eq!(dsc2(&a, &a), Ok(1.0));
        assert_eq!(dsc2(&a, &b), Ok(0.0));
    }

    #[test]
    fn dsc_worked_half_overlap() {
        // A = {(0,0),(0,1)}, B = {(0,1),(1,1)} -> 2*1/(2+2) = 0.5
        let a = mask2(2, 2, &[(0, 0), (0, 1)]);
        let b = mask2(2, 2, &[(0, 1), (1, 1)]);
        assert_eq!(dsc2(&a, &b), Ok(0.5));
    }

    #[test]
    fn dsc_undefined_and_mismatch() {
        let empty = Grid2::filled(3, 3, false);
        assert_eq!(dsc2(&empty, &empty), Err(MetricError::BothEmpty));
        let a = mask2(3, 3, &[(0, 0)]);
        let b = mask2(4, 3, &[(0, 0)]);
        assert!(matches!(dsc2(&a, &b), Err(MetricError::ShapeMismatch(_, _))));
    }

    #[test]
    fn nsd_identical_masks_is_one() {
        let mut a = Grid3::filled(6, 6, 6, false);
        for x in 1..4 {
            for y in 1..4 {
                for z in 1..4 {
                    a.set(x, y, z, true);
                }
            }
        }
        let v = nsd3(&a, &a, [1.0, 1.0, 1.0], 0.5).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn nsd_far_apart_is_zero() {
        // Two unit cubes 10 mm apart, tolerance 1 mm.
        let mut a = Grid3::filled(16, 3, 3, false);
        let mut b = Grid3::filled(16, 3, 3, false);
        a.set(1, 1, 1, true);
        b.set(11, 1, 1, true);
        let v = nsd3(&a, &b, [1.0, 1.0, 1.0], 1.0).unwrap();
        assert_eq!(v, 0.0);
    }

    /// Exhaustive O(n^2) oracle: nearest boundary-point distances, no buckets.
    fn nsd3_oracle(
        a: &Grid3<bool>,
        b: &Grid3<bool>,
        spacing: [f64; 3],
        tol: f64,
    ) -> f64 {
        let pa: Vec<[f64; 3]> = boundary3(a)
            .into_iter()
            .map(|(x, y, z)| [x as f64 * spacing[0], y as f64 * spacing[1], z as f64 * spacing[2]])
            .collect();
        let pb: Vec<[f64; 3]> = boundary3(b)
            .into_iter()
            .map(|(x, y, z)| [x as f64 * spacing[0], y as f64 * spacing[1], z as f64 * spacing[2]])
            .collect();
        let frac = |from: &[[f64; 3]], to: &[[f64; 3]]| {
            let mut c = 0usize;
            for p in from {
                let mut best = f64::INFINITY;
                for q in to {
                    let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2))
                        .sqrt();
                    best = best.min(d);
                }
                if best <= tol {
                    c += 1;
                }
            }
            c as f64 / from.len() as f64
        };
        0.5 * (frac(&pa, &pb) + frac(&pb, &pa))
    }

    fn boxed(nx: usize, ny: usize, nz: usize, lo: (usize, usize, usize), hi: (usize, usize, usize)) -> Grid3<bool> {
        let mut g = Grid3::filled(nx, ny, nz, false);
        for x in lo.0..=hi.0 {
            for y in lo.1..=hi.1 {
                for z in lo.2..=hi.2 {
                    g.set(x, y, z, true);
                }
            }
        }
        g
    }

    #[test]
    fn nsd_matches_bruteforce_oracle_on_overlapping_boxes() {
        let a = boxed(10, 10, 10, (1, 1, 1), (5, 6, 4));
        let b = boxed(10, 10, 10, (3, 2, 2), (7, 7, 6));
        for tol in [0.5, 1.0, 1.5, 2.0] {
            let got = nsd3(&a, &b, [1.0, 1.0, 1.0], tol).unwrap();
            let want = nsd3_oracle(&a, &b, [1.0, 1.0, 1.0], tol);
            assert!((got - want).abs() < 1e-9, "tol {tol}: {got} vs {want}");
        }
        // Anisotropic spacing.
        let got = nsd3(&a, &b, [0.7, 1.3, 2.0], 1.4).unwrap();
        let want = nsd3_oracle(&a, &b, [0.7, 1.3, 2.0], 1.4);
        assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn nsd_empty_mask_is_undefined() {
        let a = boxed(4, 4, 4, (1, 1, 1), (2, 2, 2));
        let empty = Grid3::filled(4, 4, 4, false);
        assert_eq!(nsd3(&a, &empty, [1.0; 3], 1.0), Err(MetricError::EmptyMask));
    }

    #[test]
    fn lcc_perfect_and_inverted() {
        let xs: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 / 10.0, i as f64 / 10.0)).collect();
        assert!((lcc(&samples_from(&xs)).unwrap() - 1.0).abs() < 1e-12);
        let inv: Vec<(f64, f64)> = xs.iter().map(|&(p, a)| (1.0 - p, a)).collect();
        assert!((lcc(&samples_from(&inv)).unwrap() + 1.0).abs() < 1e-12);
    }

    /// Textbook-formula oracle in extended precision via Kahan summation.
    fn pearson_oracle(pairs: &[(f64, f64)]) -> f64 {
        let kahan = |it: &mut dyn Iterator<Item = f64>| {
            let mut sum = 0.0f64;
            let mut c = 0.0f64;
            for v in it {
                let y = v - c;
                let t = sum + y;
                c = (t - sum) - y;
                sum = t;
            }
            sum
        };
        let n = pairs.len() as f64;
        let sx = kahan(&mut pairs.iter().map(|p| p.0));
        let sy = kahan(&mut pairs.iter().map(|p| p.1));
        let sxx = kahan(&mut pairs.iter().map(|p| p.0 * p.0));
        let syy = kahan(&mut pairs.iter().map(|p| p.1 * p.1));
        let sxy = kahan(&mut pairs.iter().map(|p| p.0 * p.1));
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn lcc_matches_textbook_oracle() {
        let mut rng = crate::rng::Rng::new(2024);
        let pairs: Vec<(f64, f64)> = (0..20)
            .map(|_| (rng.next_f64(), rng.next_f64()))
            .collect();
        let got = lcc(&samples_from(&pairs)).unwrap();
        let want = pearson_oracle(&pairs);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn lcc_degenerate_variance() {
        let s = samples_from(&[(0.5, 0.1), (0.5, 0.9)]);
        assert_eq!(lcc(&s), Err(MetricError::DegenerateVariance("predicted")));
    }

    #[test]
    fn srocc_monotone_transform_is_one() {
        let mut rng = crate::rng::Rng::new(5);
        let actual: Vec<f64> = (0..15).map(|_| rng.next_f64()).collect();
        // Strictly monotone increasing map of actual.
        let pairs: Vec<(f64, f64)> =
            actual.iter().map(|&a| ((3.0 * a + 0.2).tanh(), a)).collect();
        assert!((srocc(&samples_from(&pairs)).unwrap() - 1.0).abs() < 1e-12);
        let reversed: Vec<(f64, f64)> = actual.iter().map(|&a| (-a, a)).collect();
        assert!((srocc(&samples_from(&reversed)).unwrap() + 1.0).abs() < 1e-12);
    }

    /// Tie-averaging oracle: enumerate the positions each tied block spans.
    fn average_ranks_oracle(values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .map(|&v| {
                let below = values.iter().filter(|&&u| u < v).count();
                let equal = values.iter().filter(|&&u| u == v).count();
                // average of 1-based positions below+1 ..= below+equal
                (2 * below + equal + 1) as f64 / 2.0
            })
            .collect()
    }

    #[test]
    fn srocc_tie_handling_matches_oracle() {
        let values = [0.5, 0.5, 0.2, 0.9, 0.5, 0.2];
        assert_eq!(average_ranks(&values), average_ranks_oracle(&values));
        let pairs = [(0.5, 0.3), (0.5, 0.7), (0.1, 0.1), (0.9, 0.9)];
        let s = samples_from(&pairs);
        let got = srocc(&s).unwrap();
        let px = average_ranks_oracle(&[0.5, 0.5, 0.1, 0.9]);
        let py = average_ranks_oracle(&[0.3, 0.7, 0.1, 0.9]);
        let want = pearson_oracle(&px.iter().cloned().zip(py).collect::<Vec<_>>());
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn map_perfect_ordering_is_one() {
        let pairs: Vec<(f64, f64)> =
            (0..8).map(|i| (i as f64 / 8.0, i as f64 / 8.0)).collect();
        let m = map_at_k(&samples_from(&pairs), 3).unwrap();
        assert_eq!(m.value, 1.0);
    }

    #[test]
    fn map_worst_ordering_is_zero() {
        // The k lowest-actual samples ranked last by the predictor.
        let n = 8;
        let k = 2;
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| (1.0 - i as f64 / n as f64, i as f64 / n as f64))
            .collect();
        let m = map_at_k(&samples_from(&pairs), k).unwrap();
        assert_eq!(m.value, 0.0);
    }

    #[test]
    fn map_worked_example() {
        // 6-sample group, k=2: one relevant at predicted rank 1, the other at
        // rank 3 -> AP@2 = (1/2)*(1/1 + 0) = 0.5.
        let samples = vec![
            MetricSample::new(0.10, 0.05, 1, "a"), // relevant, rank 1
            MetricSample::new(0.20, 0.95, 1, "b"), // rank 2, not relevant
            MetricSample::new(0.30, 0.10, 1, "c"), // relevant, rank 3
            MetricSample::new(0.40, 0.90, 1, "d"),
            MetricSample::new(0.50, 0.80, 1, "e"),
            MetricSample::new(0.60, 0.70, 1, "f"),
        ];
        let m = map_at_k(&samples, 2).unwrap();
        assert!((m.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn map_skips_small_groups() {
        let mut samples = samples_from(&[(0.1, 0.2), (0.3, 0.4), (0.5, 0.6)]);
        samples.push(MetricSample::new(0.2, 0.2, 7, "only-one"));
        let m = map_at_k(&samples, 2).unwrap();
        assert_eq!(m.skipped_classes, vec![7]);
        assert_eq!(m.per_class.len(), 1);
    }

    proptest! {
        #[test]
        fn dsc_symmetric_and_reflexive(
            bits_a in proptest::collection::vec(any::<bool>(), 36),
            bits_b in proptest::collection::vec(any::<bool>(), 36),
        ) {
            let a = Grid2::from_vec(6, 6, bits_a);
            let b = Grid2::from_vec(6, 6, bits_b);
            prop_assume!(a.any() || b.any());
            prop_assert_eq!(dsc2(&a, &b), dsc2(&b, &a));
            if a.any() {
                prop_assert_eq!(dsc2(&a, &a), Ok(1.0));
            }
        }

        #[test]
        fn dsc_invariant_under_common_permutation(
            bits_a in proptest::collection::vec(any::<bool>(), 25),
            bits_b in proptest::collection::vec(any::<bool>(), 25),
            seed in any::<u64>(),
        ) {
            prop_assume!(bits_a.iter().any(|&v| v) || bits_b.iter().any(|&v| v));
            let mut perm: Vec<usize> = (0..25).collect();
            crate::rng::Rng::new(seed).shuffle(&mut perm);
            let pa: Vec<bool> = perm.iter().map(|&i| bits_a[i]).collect();
            let pb: Vec<bool> = perm.iter().map(|&i| bits_b[i]).collect();
            let before = dsc2(&Grid2::from_vec(5, 5, bits_a), &Grid2::from_vec(5, 5, bits_b));
            let after = dsc2(&Grid2::from_vec(5, 5, pa), &Grid2::from_vec(5, 5, pb));
            prop_assert_eq!(before, after);
        }

        #[test]
        fn srocc_invariant_under_monotone_transform(
            vals in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 5..30),
            scale in 0.1f64..5.0,
        ) {
            let base = samples_from(&vals);
            // exp(scale * x) is strictly monotone in x.
            let transformed: Vec<(f64, f64)> =
                vals.iter().map(|&(p, a)| ((scale * p).exp(), a)).collect();
            let t = samples_from(&transformed);
            match (srocc(&base), srocc(&t)) {
                (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-9),
                (a, b) => prop_assert_eq!(a, b),
            }
        }

        #[test]
        fn lcc_invariant_under_positive_affine(
            vals in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 5..30),
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let base = samples_from(&vals);
            let transformed: Vec<(f64, f64)> =
                vals.iter().map(|&(p, a)| (scale * p + shift, a)).collect();
            let t = samples_from(&transformed);
            match (lcc(&base), lcc(&t)) {
                (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-9),
                (a, b) => prop_assert_eq!(a, b),
            }
        }

        #[test]
        fn map_invariant_under_monotone_predictor_transform(
            vals in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 6..24),
        ) {
            let base = samples_from(&vals);
            let transformed: Vec<(f64, f64)> =
                vals.iter().map(|&(p, a)| (p.powi(3) * 2.0 + 1.0, a)).collect();
            let t = samples_from(&transformed);
            // p^3*2+1 is strictly monotone; predicted order (incl. ties) is preserved.
            let k = 3;
            if let (Ok(x), Ok(y)) = (map_at_k(&base, k), map_at_k(&t, k)) {
                prop_assert!((x.value - y.value).abs() < 1e-12);
            }
        }
    }
}
