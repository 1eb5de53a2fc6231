//! One-to-one matching: an exact linear assignment solver, the profile-based
//! assignment estimator and the squared-Euclidean transport baseline.

use crate::error::{Error, Result};
use crate::geometry::{euclidean, DistanceMatrix, PointCloud};
use crate::matching::{discrepancy_matrix_with, DiscrepancyMatrix};
use crate::par::{self, Execution};

/// A bijection on `0..n`; `map[i]` is the image of `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &j in &map {
            if j >= n || std::mem::replace(&mut seen[j], true) {
                return Err(Error::invalid(format!("{map:?} is not a permutation")));
            }
        }
        Ok(Self { map })
    }

    pub fn identity(n: usize) -> Self {
        Self { map: (0..n).collect() }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (i, &j) in self.map.iter().enumerate() {
            inv[j] = i;
        }
        Self { map: inv }
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// Number of positions where `self` and `other` agree.
    pub fn agreement(&self, other: &Permutation) -> usize {
        self.map.iter().zip(&other.map).filter(|(a, b)| a == b).count()
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.map
    }
}

/// A permutation together with its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub permutation: Permutation,
    pub total_cost: f64,
}

/// Exact minimum-cost perfect matching on a square cost matrix given in
/// row-major order.
///
/// Shortest augmenting paths with dual potentials (Hungarian method), O(n^3).
pub fn solve_lap(n: usize, cost: &[f64]) -> Result<Assignment> {
    if cost.len() != n * n {
        return Err(Error::mismatch(format!("{} entries for an {n}x{n} cost matrix", cost.len())));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("cost matrix has non-finite entries"));
    }
    if n == 0 {
        return Ok(Assignment { permutation: Permutation::identity(0), total_cost: 0.0 });
    }

    // 1-based, column 0 is the virtual start
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut map = vec![0usize; n];
    for j in 1..=n {
        map[owner[j] - 1] = j - 1;
    }
    let total_cost = map.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok(Assignment { permutation: Permutation { map }, total_cost })
}

/// Assignment on a square discrepancy matrix.
pub fn assign_discrepancies(d: &DiscrepancyMatrix) -> Result<Assignment> {
    if d.rows() != d.cols() {
        return Err(Error::mismatch(format!(
            "assignment needs n = m, got {} and {}",
            d.rows(),
            d.cols()
        )));
    }
    solve_lap(d.rows(), d.as_flat())
}

/// Profile assignment from distance matrices: the permutation minimising the
/// summed order-1 profile discrepancies.
pub fn assign_distance_matrices(
    source: &DistanceMatrix,
    target: &DistanceMatrix,
    exec: Execution,
) -> Result<Assignment> {
    if source.len() != target.len() {
        return Err(Error::mismatch(format!(
            "assignment needs n = m, got {} and {}",
            source.len(),
            target.len()
        )));
    }
    assign_discrepancies(&discrepancy_matrix_with(source, target, 1.0, exec)?)
}

/// Profile assignment on point clouds.
pub fn assign_profiles(source: &PointCloud, target: &PointCloud) -> Result<Assignment> {
    assign_profiles_with(source, target, Execution::default())
}

pub fn assign_profiles_with(
    source: &PointCloud,
    target: &PointCloud,
    exec: Execution,
) -> Result<Assignment> {
    assign_distance_matrices(
        &DistanceMatrix::from_cloud_with(source, exec),
        &DistanceMatrix::from_cloud_with(target, exec),
        exec,
    )
}

/// Squared-Euclidean cost matrix between two equally sized clouds.
pub fn squared_euclidean_costs(
    source: &PointCloud,
    target: &PointCloud,
    exec: Execution,
) -> Result<Vec<f64>> {
    if source.dim() != target.dim() {
        return Err(Error::mismatch(format!(
            "dimensions differ: {} vs {}",
            source.dim(),
            target.dim()
        )));
    }
    let m = target.len();
    let mut cost = vec![0.0; source.len() * m];
    par::fill_chunks(&mut cost, m, exec, |i, row| {
        let x = source.point(i);
        for (j, slot) in row.iter_mut().enumerate() {
            let d = euclidean(x, target.point(j));
            *slot = d * d;
        }
    });
    Ok(cost)
}

/// Transport baseline: the permutation minimising summed squared Euclidean
/// distances between matched points.
pub fn assign_ot_baseline(source: &PointCloud, target: &PointCloud) -> Result<Assignment> {
    assign_ot_baseline_with(source, target, Execution::default())
}

pub fn assign_ot_baseline_with(
    source: &PointCloud,
    target: &PointCloud,
    exec: Execution,
) -> Result<Assignment> {
    if source.len() != target.len() {
        return Err(Error::mismatch(format!(
            "assignment needs n = m, got {} and {}",
            source.len(),
            target.len()
        )));
    }
    let cost = squared_euclidean_costs(source, target, exec)?;
    solve_lap(source.len(), &cost)
}
