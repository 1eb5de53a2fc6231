//! Distance-profile matching: discrepancy matrix, per-source argmin and the
//! inlier threshold.
//!
//! Every source point `i` is sent to the target `j` whose profile is closest in
//! Wasserstein-p distance; ties go to the smallest target index. Points whose
//! best discrepancy is strictly below the threshold `rho` form the inlier set.
//! The map need not be injective or surjective.

use crate::error::{Error, Result};
use crate::geometry::{DistanceMatrix, DistanceProfile, PointCloud};
use crate::par::{self, Execution};
use crate::wasserstein1d::{self, check_order, root};

/// `n x m` table of profile-to-profile Wasserstein discrepancies.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyMatrix {
    n: usize,
    m: usize,
    order: f64,
    entries: Vec<f64>,
}

impl DiscrepancyMatrix {
    /// Wraps a precomputed table (row-major, `n * m` entries).
    pub fn new(n: usize, m: usize, order: f64, entries: Vec<f64>) -> Result<Self> {
        check_order(order)?;
        if n == 0 || m == 0 {
            return Err(Error::invalid("discrepancy matrix needs at least one row and column"));
        }
        if entries.len() != n * m {
            return Err(Error::mismatch(format!("{} entries for a {n}x{m} table", entries.len())));
        }
        if entries.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("discrepancies must be finite and nonnegative"));
        }
        Ok(Self { n, m, order, entries })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, order: f64) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::mismatch("ragged discrepancy rows"));
        }
        Self::new(n, m, order, rows.into_iter().flatten().collect())
    }

    pub fn from_profiles(
        source: &[DistanceProfile],
        target: &[DistanceProfile],
        order: f64,
        exec: Execution,
    ) -> Result<Self> {
        check_order(order)?;
        let (n, m) = (source.len(), target.len());
        if n == 0 || m == 0 {
            return Err(Error::invalid("cannot match an empty set of profiles"));
        }
        let mut entries = vec![0.0; n * m];
        par::fill_chunks(&mut entries, m, exec, |i, row| {
            for (slot, q) in row.iter_mut().zip(target) {
                *slot = root(wasserstein1d::pow_unchecked(&source[i], q, order), order);
            }
        });
        Ok(Self { n, m, order, entries })
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.entries
    }

    /// Entrywise `order`-th powers, the cost of the third lower bound.
    pub fn powered(&self) -> Vec<f64> {
        let p = self.order;
        self.entries
            .iter()
            .map(|v| if p == 1.0 { *v } else { v.powf(p) })
            .collect()
    }
}

/// Output of profile matching.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `pi[i]` is the target matched to source `i`.
    pub pi: Vec<usize>,
    /// `discrepancy[i] = D(i, pi[i])`.
    pub discrepancy: Vec<f64>,
    /// Sources with `discrepancy[i] < threshold`, ascending.
    pub inliers: Vec<usize>,
    pub threshold: f64,
}

impl MatchResult {
    fn from_parts(pi: Vec<usize>, discrepancy: Vec<f64>, threshold: f64) -> Self {
        let inliers = inliers_below(&discrepancy, threshold);
        Self { pi, discrepancy, inliers, threshold }
    }

    /// Re-applies the strict threshold rule with a different `rho`.
    pub fn with_threshold(&self, rho: f64) -> Self {
        Self::from_parts(self.pi.clone(), self.discrepancy.clone(), rho)
    }

    pub fn is_inlier(&self, i: usize) -> bool {
        self.inliers.binary_search(&i).is_ok()
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }
}

fn inliers_below(discrepancy: &[f64], rho: f64) -> Vec<usize> {
    discrepancy
        .iter()
        .enumerate()
        .filter(|(_, d)| **d < rho)
        .map(|(i, _)| i)
        .collect()
}

/// Discrepancy matrix between the profiles of two distance matrices.
pub fn discrepancy_matrix(
    source: &DistanceMatrix,
    target: &DistanceMatrix,
    order: f64,
) -> Result<DiscrepancyMatrix> {
    discrepancy_matrix_with(source, target, order, Execution::default())
}

pub fn discrepancy_matrix_with(
    source: &DistanceMatrix,
    target: &DistanceMatrix,
    order: f64,
    exec: Execution,
) -> Result<DiscrepancyMatrix> {
    check_order(order)?;
    let px = source.profiles_with(exec);
    let py = target.profiles_with(exec);
    DiscrepancyMatrix::from_profiles(&px, &py, order, exec)
}

/// Row-wise argmin with smallest-index tie-breaking, then the strict
/// threshold rule `D(i, pi(i)) < rho`. Pass `f64::INFINITY` for no threshold.
pub fn match_discrepancies(d: &DiscrepancyMatrix, rho: f64) -> MatchResult {
    let mut pi = Vec::with_capacity(d.n);
    let mut disc = Vec::with_capacity(d.n);
    for i in 0..d.n {
        let (j, v) = d
            .row(i)
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (j, &v)| if v < best.1 { (j, v) } else { best });
        pi.push(j);
        disc.push(v);
    }
    MatchResult::from_parts(pi, disc, rho)
}

/// Full pipeline on coordinates: distances, profiles, discrepancies, matching.
pub fn match_clouds(
    source: &PointCloud,
    target: &PointCloud,
    order: f64,
    rho: f64,
) -> Result<MatchResult> {
    let d = discrepancy_matrix(
        &DistanceMatrix::from_cloud(source),
        &DistanceMatrix::from_cloud(target),
        order,
    )?;
    Ok(match_discrepancies(&d, rho))
}

/// Same result as [`match_discrepancies`] on the full discrepancy matrix, but
/// without materialising it.
///
/// Candidates are visited in order of `|mean(p) - mean(q)|`, a lower bound on
/// every `W_p`, and the scan of a row stops once that bound exceeds the best
/// value found. For equal-size uniform profiles the running Wasserstein sum
/// is abandoned as soon as it exceeds the current best. Fully evaluated
/// candidates use the same arithmetic as the materialised path, so the map
/// and the reported discrepancies are bit-identical to it.
pub fn match_profiles(
    source: &[DistanceProfile],
    target: &[DistanceProfile],
    order: f64,
    rho: f64,
    exec: Execution,
) -> Result<MatchResult> {
    check_order(order)?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::invalid("cannot match an empty set of profiles"));
    }
    let mut by_mean: Vec<(f64, usize)> = target.iter().map(|q| q.mean()).zip(0..).collect();
    by_mean.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let rows = par::map_indexed(source.len(), exec, |i| {
        best_target(&source[i], target, &by_mean, order)
    });
    let (pi, pows): (Vec<usize>, Vec<f64>) = rows.into_iter().unzip();
    let disc = pows.into_iter().map(|p| root(p, order)).collect();
    Ok(MatchResult::from_parts(pi, disc, rho))
}

/// Relative slack on the mean lower bound; covers rounding in both the bound
/// and the evaluated distances.
const BOUND_SLACK: f64 = 1e-9;

fn best_target(
    p: &DistanceProfile,
    target: &[DistanceProfile],
    by_mean: &[(f64, usize)],
    order: f64,
) -> (usize, f64) {
    let mp = p.mean();
    let start = by_mean.partition_point(|(m, _)| *m < mp);
    let (mut lo, mut hi) = (start, start);
    let (mut best_j, mut best_pow, mut best_val) = (usize::MAX, f64::INFINITY, f64::INFINITY);

    loop {
        let left = (lo > 0).then(|| (mp - by_mean[lo - 1].0).abs());
        let right = (hi < by_mean.len()).then(|| (by_mean[hi].0 - mp).abs());
        let (gap, j) = match (left, right) {
            (None, None) => break,
            (Some(l), Some(r)) if l <= r => {
                lo -= 1;
                (l, by_mean[lo].1)
            }
            (Some(l), None) => {
                lo -= 1;
                (l, by_mean[lo].1)
            }
            (_, Some(r)) => {
                hi += 1;
                (r, by_mean[hi - 1].1)
            }
        };
        if gap * (1.0 - BOUND_SLACK) > best_val {
            break;
        }
        let q = &target[j];
        let pow = if p.is_uniform() && q.is_uniform() && p.len() == q.len() {
            let n = p.len() as f64;
            let bound = best_pow * n * (1.0 + BOUND_SLACK);
            match wasserstein1d::equal_uniform_sum(p.values(), q.values(), order, bound) {
                Some(total) => total / n,
                None => continue,
            }
        } else {
            wasserstein1d::pow_unchecked(p, q, order)
        };
        if pow < best_pow || (pow == best_pow && j < best_j) {
            best_j = j;
            best_pow = pow;
            best_val = root(pow, order);
        }
    }
    (best_j, best_pow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pairwise_distances;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rows: &[&[f64]]) -> PointCloud {
        PointCloud::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> PointCloud {
        PointCloud::from_flat(d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identical_clouds_have_zero_diagonal() {
        let x = cloud(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 2.5]]);
        let dx = pairwise_distances(&x);
        let d = discrepancy_matrix(&dx, &dx, 1.0).unwrap();
        for i in 0..3 {
            assert_eq!(d.get(i, i), 0.0);
        }
    }

    #[test]
    fn collinear_entry() {
        // profiles (0,1,3) and (0,1,2): quantile pieces differ only on the
        // last third, by 1
        let x = cloud(&[&[0.0], &[1.0], &[3.0]]);
        let dx = pairwise_distances(&x);
        let d = discrepancy_matrix(&dx, &dx, 1.0).unwrap();
        assert!((d.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unique_zero_per_row() {
        let d = DiscrepancyMatrix::from_rows(
            vec![vec![0.5, 0.0, 0.3], vec![0.0, 0.2, 0.9], vec![0.4, 0.7, 0.0]],
            1.0,
        )
        .unwrap();
        let r = match_discrepancies(&d, 1e-6);
        assert_eq!(r.pi, vec![1, 0, 2]);
        assert_eq!(r.inliers, vec![0, 1, 2]);
    }

    #[test]
    fn ties_go_to_smallest_index() {
        let d = DiscrepancyMatrix::from_rows(vec![vec![0.2, 0.2, 0.5]], 1.0).unwrap();
        assert_eq!(match_discrepancies(&d, f64::INFINITY).pi, vec![0]);
        assert_eq!(match_discrepancies(&d, 0.1).pi, vec![0]);
    }

    #[test]
    fn strict_threshold() {
        let d = DiscrepancyMatrix::from_rows(vec![vec![0.1, 0.9], vec![0.9, 0.4]], 1.0).unwrap();
        let r = match_discrepancies(&d, 0.3);
        assert_eq!(r.pi, vec![0, 1]);
        assert_eq!(r.discrepancy, vec![0.1, 0.4]);
        assert_eq!(r.inliers, vec![0]);
        // equality is not enough
        assert_eq!(match_discrepancies(&d, 0.1).inliers, Vec::<usize>::new());
        assert_eq!(match_discrepancies(&d, f64::INFINITY).inliers, vec![0, 1]);
        assert!(r.is_inlier(0) && !r.is_inlier(1));
    }

    #[test]
    fn two_symmetric_points_map_to_zero() {
        let x = cloud(&[&[0.0, 0.0], &[1.0, 1.0]]);
        let r = match_clouds(&x, &x, 1.0, f64::INFINITY).unwrap();
        assert_eq!(r.pi, vec![0, 0]);
        assert_eq!(r.discrepancy, vec![0.0, 0.0]);
    }

    #[test]
    fn self_match_is_identity_for_separated_profiles() {
        let x = cloud(&[&[0.0], &[1.0], &[3.0], &[7.0]]);
        let dx = pairwise_distances(&x);
        let d = discrepancy_matrix(&dx, &dx, 1.0).unwrap();
        // brute force: each row's strict minimum sits on the diagonal
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(d.get(i, j) > d.get(i, i));
                }
            }
        }
        assert_eq!(match_clouds(&x, &x, 1.0, f64::INFINITY).unwrap().pi, vec![0, 1, 2, 3]);
    }

    #[test]
    fn scaling_both_clouds_scales_discrepancies() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_cloud(&mut rng, 20, 3);
        let y = random_cloud(&mut rng, 15, 3);
        let a = match_clouds(&x, &y, 1.0, f64::INFINITY).unwrap();
        let b = match_clouds(&x.scaled(2.5).unwrap(), &y.scaled(2.5).unwrap(), 1.0, f64::INFINITY)
            .unwrap();
        assert_eq!(a.pi, b.pi);
        for (u, v) in a.discrepancy.iter().zip(&b.discrepancy) {
            assert!((2.5 * u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn pruned_search_equals_materialised_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (n, m, order) in [(40, 40, 1.0), (300, 300, 1.0), (30, 45, 1.0), (25, 25, 2.0), (20, 20, 1.5)]
        {
            let x = random_cloud(&mut rng, n, 2);
            let y = random_cloud(&mut rng, m, 2);
            let (px, py) = (pairwise_distances(&x).profiles(), pairwise_distances(&y).profiles());
            let full = DiscrepancyMatrix::from_profiles(&px, &py, order, Execution::Sequential)
                .unwrap();
            let expect = match_discrepancies(&full, 0.2);
            let got = match_profiles(&px, &py, order, 0.2, Execution::Parallel).unwrap();
            assert_eq!(got, expect, "n={n} m={m} order={order}");
        }
    }

    #[test]
    fn pruned_search_respects_ties() {
        // duplicated targets: identical profiles at several indices
        let x = cloud(&[&[0.0], &[1.0], &[3.0], &[3.0], &[1.0], &[0.0]]);
        let p = pairwise_distances(&x).profiles();
        let full = DiscrepancyMatrix::from_profiles(&p, &p, 1.0, Execution::Sequential).unwrap();
        let got = match_profiles(&p, &p, 1.0, f64::INFINITY, Execution::Sequential).unwrap();
        assert_eq!(got, match_discrepancies(&full, f64::INFINITY));
    }

    #[test]
    fn threshold_can_be_reapplied() {
        let d = DiscrepancyMatrix::from_rows(vec![vec![0.1], vec![0.5]], 1.0).unwrap();
        let r = match_discrepancies(&d, f64::INFINITY);
        assert_eq!(r.with_threshold(0.5).inliers, vec![0]);
        assert_eq!(r.with_threshold(0.50001).inliers, vec![0, 1]);
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(DiscrepancyMatrix::from_rows(vec![], 1.0).is_err());
        assert!(DiscrepancyMatrix::from_rows(vec![vec![-1.0]], 1.0).is_err());
        assert!(DiscrepancyMatrix::from_rows(vec![vec![1.0]], 0.5).is_err());
        assert!(DiscrepancyMatrix::from_rows(vec![vec![1.0], vec![1.0, 2.0]], 1.0).is_err());
    }
}
