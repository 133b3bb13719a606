//! Dense linear assignment (Jonker-Volgenant) and optimal pair construction.
//!
//! The solver follows the classic three-phase scheme: column reduction,
//! augmenting row reduction, then shortest augmenting paths with dual
//! updates. It returns an exact optimum; the test suite checks it against
//! exhaustive permutation search.
//!
//! `build_pairs` turns a batch of embeddings into mutually-most-similar
//! sample pairs: cosine similarity matrix, diagonal masked with a large
//! finite sentinel so no sample pairs with itself, one LAP solve, then
//! symmetrization of the resulting permutation.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AssignmentError {
    #[error("cost matrix entry ({0},{1}) is not finite")]
    NonFinite(usize, usize),
    #[error("need at least 2 samples to pair, got {0}")]
    TooFewSamples(usize),
    #[error("embedding {0} is a zero vector")]
    ZeroVector(usize),
    #[error("embedding {0} has dimension {got}, expected {expected}", got = .1, expected = .2)]
    DimensionMismatch(usize, usize, usize),
    #[error("row {0} has {got} entries, expected {expected}", got = .1, expected = .2)]
    NonSquare(usize, usize, usize),
}

/// Row-major square matrix of f64.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AssignmentError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(AssignmentError::NonSquare(i, row.len(), n));
            }
            data.extend_from_slice(row);
        }
        Ok(SquareMatrix { n, data })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
    }
}

/// Exact minimum-cost assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct LapSolution {
    /// `assignment[row] = column`.
    pub assignment: Vec<usize>,
    pub total_cost: f64,
}

const UNASSIGNED: usize = usize::MAX;

/// Solve the dense linear assignment problem exactly.
///
/// All entries must be finite; use a large finite sentinel (not IEEE
/// infinity) to forbid an edge.
// Index-based loops and in-loop bound updates mirror the classic dense
// formulation; iterator rewrites obscure the correspondence.
#[allow(clippy::needless_range_loop, clippy::mut_range_bound)]
pub fn solve_lap(cost: &SquareMatrix) -> Result<LapSolution, AssignmentError> {
    let n = cost.size();
    for i in 0..n {
        for j in 0..n {
            if !cost.get(i, j).is_finite() {
                return Err(AssignmentError::NonFinite(i, j));
            }
        }
    }
    if n == 0 {
        return Ok(LapSolution { assignment: Vec::new(), total_cost: 0.0 });
    }
    if n == 1 {
        return Ok(LapSolution { assignment: vec![0], total_cost: cost.get(0, 0) });
    }

    let mut rowsol = vec![UNASSIGNED; n];
    let mut colsol = vec![UNASSIGNED; n];
    let mut v = vec![0.0f64; n];

    // Column reduction: give each column its minimum as the dual, assign the
    // minimizing row the first time it wins a column.
    let mut matches = vec![0usize; n];
    for j in (0..n).rev() {
        let mut min = cost.get(0, j);
        let mut imin = 0;
        for i in 1..n {
            let c = cost.get(i, j);
            if c < min {
                min = c;
                imin = i;
            }
        }
        v[j] = min;
        matches[imin] += 1;
        if matches[imin] == 1 {
            rowsol[imin] = j;
            colsol[j] = imin;
        } else {
            colsol[j] = UNASSIGNED;
        }
    }

    // Reduction transfer from singly-assigned rows.
    let mut free: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        if matches[i] == 0 {
            free.push(i);
        } else if matches[i] == 1 {
            let j1 = rowsol[i];
            let mut min = f64::INFINITY;
            for j in 0..n {
                if j != j1 {
                    let r = cost.get(i, j) - v[j];
                    if r < min {
                        min = r;
                    }
                }
            }
            v[j1] -= min;
        }
    }

    // Augmenting row reduction, two passes. A rescan budget guards against
    // float-tie livelock; rows over budget simply fall through to the
    // shortest-augmenting-path phase, which assigns them exactly.
    let mut numfree = free.len();
    free.resize(n, UNASSIGNED);
    let mut rescans = 0usize;
    let rescan_budget = 10 * n * n + 100;
    for _pass in 0..2 {
        let mut k = 0;
        let prvnumfree = numfree;
        numfree = 0;
        while k < prvnumfree {
            let i = free[k];
            k += 1;
            // minimum and subminimum reduced cost over row i
            let mut umin = cost.get(i, 0) - v[0];
            let mut j1 = 0usize;
            let mut usubmin = f64::INFINITY;
            let mut j2 = UNASSIGNED;
            for j in 1..n {
                let h = cost.get(i, j) - v[j];
                if h < usubmin {
                    if h >= umin {
                        usubmin = h;
                        j2 = j;
                    } else {
                        usubmin = umin;
                        umin = h;
                        j2 = j1;
                        j1 = j;
                    }
                }
            }
            let mut i0 = colsol[j1];
            if umin < usubmin {
                v[j1] -= usubmin - umin;
            } else if i0 != UNASSIGNED {
                j1 = j2;
                i0 = colsol[j1];
            }
            rowsol[i] = j1;
            colsol[j1] = i;
            if i0 != UNASSIGNED {
                if umin < usubmin && rescans < rescan_budget {
                    rescans += 1;
                    k -= 1;
                    free[k] = i0;
                } else {
                    free[numfree] = i0;
                    numfree += 1;
                }
            }
        }
    }

    // Shortest augmenting path for each remaining free row.
    let mut d = vec![0.0f64; n];
    let mut pred = vec![0usize; n];
    let mut collist = vec![0usize; n];
    for f in 0..numfree {
        let freerow = free[f];
        for j in 0..n {
            d[j] = cost.get(freerow, j) - v[j];
            pred[j] = freerow;
            collist[j] = j;
        }
        // collist[0..ready] is settled, [ready..up) is the current minimum
        // front, [up..n) is untouched.
        let mut low = 0usize;
        let mut up = 0usize;
        let mut ready = 0usize;
        let mut minv = 0.0f64;
        let endofpath;
        'search: loop {
            if up == low {
                ready = low;
                minv = d[collist[up]];
                up += 1;
                for k in (low + 1)..n {
                    let j = collist[k];
                    let h = d[j];
                    if h <= minv {
                        if h < minv {
                            up = low;
                            minv = h;
                        }
                        collist.swap(k, up);
                        up += 1;
                    }
                }
                for k in low..up {
                    let j = collist[k];
                    if colsol[j] == UNASSIGNED {
                        endofpath = j;
                        break 'search;
                    }
                }
            }
            let j1 = collist[low];
            low += 1;
            let i = colsol[j1];
            let h = cost.get(i, j1) - v[j1] - minv;
            for k in up..n {
                let j = collist[k];
                let v2 = cost.get(i, j) - v[j] - h;
                if v2 < d[j] {
                    pred[j] = i;
                    if v2 == minv {
                        if colsol[j] == UNASSIGNED {
                            endofpath = j;
                            break 'search;
                        }
                        collist.swap(k, up);
                        up += 1;
                    }
                    d[j] = v2;
                }
            }
        }
        for k in 0..ready {
            let j1 = collist[k];
            v[j1] += d[j1] - minv;
        }
        // Trace the alternating path back to the free row.
        let mut j = endofpath;
        loop {
            let i = pred[j];
            colsol[j] = i;
            std::mem::swap(&mut rowsol[i], &mut j);
            if i == freerow {
                break;
            }
        }
    }

    let total_cost = (0..n).map(|i| cost.get(i, rowsol[i])).sum();
    Ok(LapSolution { assignment: rowsol, total_cost })
}

/// Large finite diagonal sentinel; strictly dominates any sum of negated
/// cosines, so the solver never selects a self-pair.
pub const SELF_PAIR_SENTINEL: f64 = 1e6;

/// How to treat the sample left over in an odd-sized batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ParityPolicy {
    /// Exclude the index left unmatched after symmetrization.
    #[default]
    DropLastUnmatched,
}

/// Similarity/cost matrices and the resulting sample pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct PairingResult {
    pub similarity: SquareMatrix,
    pub cost: SquareMatrix,
    /// ⌊N/2⌋ index pairs; no index repeats, no self-pairs.
    pub pairs: Vec<(usize, usize)>,
    /// The unmatched index when N is odd.
    pub dropped: Option<usize>,
}

impl PairingResult {
    pub fn total_similarity(&self) -> f64 {
        self.pairs.iter().map(|&(i, j)| self.similarity.get(i, j)).sum()
    }
}

/// Batch (or remainder) sizes up to this bound get an exact matching pass;
/// the 2^r DP table stays around a megabyte.
const EXACT_MATCHING_LIMIT: usize = 20;

/// Exact maximum-weight matching over `indices` by subset DP. For an odd
/// count a zero-similarity virtual partner absorbs one index, which is
/// returned as the dropped leftover.
fn match_remainder_exact(
    indices: &[usize],
    similarity: &SquareMatrix,
) -> (Vec<(usize, usize)>, Option<usize>) {
    let odd = indices.len() % 2 == 1;
    let r = indices.len() + usize::from(odd); // virtual node at position r-1 when odd
    if r == 0 {
        return (Vec::new(), None);
    }
    let sim_at = |a: usize, b: usize| -> f64 {
        if a >= indices.len() || b >= indices.len() {
            0.0
        } else {
            similarity.get(indices[a], indices[b])
        }
    };
    let full = 1usize << r;
    let mut best = vec![f64::NEG_INFINITY; full];
    let mut pick = vec![(0usize, 0usize); full];
    best[0] = 0.0;
    for mask in 0..full {
        if best[mask] == f64::NEG_INFINITY {
            continue;
        }
        let free = !mask & (full - 1);
        if free == 0 {
            continue;
        }
        let a = free.trailing_zeros() as usize;
        let mut rest = free & !(1 << a);
        while rest != 0 {
            let b = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let next = mask | (1 << a) | (1 << b);
            let total = best[mask] + sim_at(a, b);
            if total > best[next] {
                best[next] = total;
                pick[next] = (a, b);
            }
        }
    }
    let mut pairs = Vec::with_capacity(r / 2);
    let mut dropped = None;
    let mut mask = full - 1;
    while mask != 0 {
        let (a, b) = pick[mask];
        if odd && b == r - 1 {
            dropped = Some(indices[a]);
        } else {
            pairs.push((indices[a].min(indices[b]), indices[a].max(indices[b])));
        }
        mask &= !((1 << a) | (1 << b));
    }
    (pairs, dropped)
}

/// Greedy completion by descending similarity; only used when the leftover
/// set is too large for the exact DP.
fn match_remainder_greedy(
    mut rest: Vec<usize>,
    similarity: &SquareMatrix,
) -> (Vec<(usize, usize)>, Option<usize>) {
    let mut pairs = Vec::with_capacity(rest.len() / 2);
    while rest.len() >= 2 {
        let mut best = (0usize, 1usize);
        let mut best_sim = f64::NEG_INFINITY;
        for a in 0..rest.len() {
            for b in (a + 1)..rest.len() {
                let s = similarity.get(rest[a], rest[b]);
                if s > best_sim {
                    best_sim = s;
                    best = (a, b);
                }
            }
        }
        let (a, b) = best;
        pairs.push((rest[a], rest[b]));
        // remove b first so a's position stays valid
        rest.remove(b);
        rest.remove(a);
    }
    (pairs, rest.pop())
}

/// Pair batch samples by maximal embedding similarity.
///
/// Builds the cosine matrix, masks the diagonal with the sentinel, solves
/// one LAP, keeps mutual (i→j, j→i) assignments as pairs, and completes the
/// leftover indices (members of longer assignment cycles) with an exact
/// maximum-weight matching. Because odd assignment cycles can make any
/// completion of the kept pairs lose to an alternative perfect matching,
/// small batches additionally get a full-set exact matching pass; the result
/// is therefore never beaten by another perfect matching up to size 20, and
/// large batches keep the pure LAP symmetrization.
pub fn build_pairs(
    embeddings: &[Vec<f64>],
    _parity: ParityPolicy,
) -> Result<PairingResult, AssignmentError> {
    let n = embeddings.len();
    if n < 2 {
        return Err(AssignmentError::TooFewSamples(n));
    }
    let dim = embeddings[0].len();
    let mut norms = Vec::with_capacity(n);
    for (i, e) in embeddings.iter().enumerate() {
        if e.len() != dim {
            return Err(AssignmentError::DimensionMismatch(i, e.len(), dim));
        }
        let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-12 {
            return Err(AssignmentError::ZeroVector(i));
        }
        norms.push(norm);
    }

    let mut similarity = SquareMatrix::zeros(n);
    for i in 0..n {
        similarity.set(i, i, 1.0);
        for j in (i + 1)..n {
            let dot: f64 = embeddings[i]
                .iter()
                .zip(&embeddings[j])
                .map(|(a, b)| a * b)
                .sum();
            let cos = dot / (norms[i] * norms[j]);
            similarity.set(i, j, cos);
            similarity.set(j, i, cos);
        }
    }

    let mut cost = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                cost.set(i, j, SELF_PAIR_SENTINEL);
            } else {
                cost.set(i, j, -similarity.get(i, j));
            }
        }
    }

    let solution = solve_lap(&cost)?;
    let sigma = &solution.assignment;

    // Mutual assignments become pairs.
    let mut paired = vec![false; n];
    let mut pairs = Vec::with_capacity(n / 2);
    for i in 0..n {
        let j = sigma[i];
        if i < j && sigma[j] == i {
            pairs.push((i, j));
            paired[i] = true;
            paired[j] = true;
        }
    }

    let rest: Vec<usize> = (0..n).filter(|&i| !paired[i]).collect();
    let (mut rest_pairs, mut dropped) = if rest.len() <= EXACT_MATCHING_LIMIT {
        match_remainder_exact(&rest, &similarity)
    } else {
        match_remainder_greedy(rest, &similarity)
    };
    pairs.append(&mut rest_pairs);

    if n <= EXACT_MATCHING_LIMIT {
        let all: Vec<usize> = (0..n).collect();
        let (full_pairs, full_dropped) = match_remainder_exact(&all, &similarity);
        let total = |ps: &[(usize, usize)]| -> f64 {
            ps.iter().map(|&(i, j)| similarity.get(i, j)).sum()
        };
        if total(&full_pairs) > total(&pairs) {
            pairs = full_pairs;
            dropped = full_dropped;
        }
    }

    pairs.sort_unstable();
    Ok(PairingResult { similarity, cost, pairs, dropped })
}
