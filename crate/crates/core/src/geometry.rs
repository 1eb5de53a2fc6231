//! Point clouds, pairwise distance matrices and distance profiles.
//!
//! Everything downstream of this module consumes distances only, so a
//! [`DistanceMatrix`] can be built from coordinates or supplied directly.

use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Relative tolerance used when validating symmetry of user-supplied matrices.
pub const SYMMETRY_REL_TOL: f64 = 1e-12;
/// Tolerance on the total mass of a weighted profile.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// `n` points in `d`-dimensional Euclidean space, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| p.len() != dim) {
            return Err(Error::mismatch(format!(
                "point {i} has dimension {}, expected {dim}",
                p.len()
            )));
        }
        Self::from_flat(dim, points.into_iter().flatten().collect())
    }

    /// Builds a cloud from a row-major coordinate buffer.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("point dimension must be positive"));
        }
        if coords.is_empty() {
            return Err(Error::invalid("point cloud is empty"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::mismatch(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(k) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite coordinate at point {}, axis {}",
                k / dim,
                k % dim
            )));
        }
        Ok(Self { dim, coords })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.points().map(<[f64]>::to_vec).collect()
    }

    /// Relabels points so that the point at index `i` moves to index `perm[i]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        let n = self.len();
        if perm.len() != n {
            return Err(Error::mismatch(format!(
                "permutation of length {} applied to {n} points",
                perm.len()
            )));
        }
        let mut coords = vec![0.0; self.coords.len()];
        let mut seen = vec![false; n];
        for (i, &target) in perm.iter().enumerate() {
            if target >= n || std::mem::replace(&mut seen[target], true) {
                return Err(Error::invalid("relabeling is not a permutation"));
            }
            coords[target * self.dim..(target + 1) * self.dim].copy_from_slice(self.point(i));
        }
        Ok(Self { dim: self.dim, coords })
    }

    /// Multiplies every coordinate by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::from_flat(self.dim, self.coords.iter().map(|c| c * s).collect())
    }
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// A symmetric `n x n` matrix of nonnegative distances with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    /// Euclidean distances between all pairs of points.
    pub fn from_cloud(cloud: &PointCloud) -> Self {
        Self::from_cloud_with(cloud, Execution::default())
    }

    pub fn from_cloud_with(cloud: &PointCloud, exec: Execution) -> Self {
        let n = cloud.len();
        let mut entries = vec![0.0; n * n];
        par::fill_chunks(&mut entries, n, exec, |i, row| {
            let xi = cloud.point(i);
            for (l, slot) in row.iter_mut().enumerate() {
                *slot = if l == i { 0.0 } else { euclidean(xi, cloud.point(l)) };
            }
        });
        Self { n, entries }
    }

    /// Validates a user-supplied matrix: square, finite, nonnegative,
    /// symmetric within [`SYMMETRY_REL_TOL`] and with a zero diagonal.
    /// The triangle inequality is not checked; see [`Self::check_triangle`].
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("distance matrix is empty"));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::mismatch(format!(
                "distance matrix row {i} has {} entries, expected {n}",
                r.len()
            )));
        }
        Self::from_flat(n, rows.into_iter().flatten().collect())
    }

    pub fn from_flat(n: usize, mut entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("distance matrix is empty"));
        }
        if entries.len() != n * n {
            return Err(Error::mismatch(format!(
                "{} entries do not form a {n}x{n} matrix",
                entries.len()
            )));
        }
        let mut scale: f64 = 0.0;
        for (k, &v) in entries.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!(
                    "entry ({}, {}) = {v} is not a finite nonnegative distance",
                    k / n,
                    k % n
                )));
            }
            scale = scale.max(v);
        }
        for i in 0..n {
            let d = entries[i * n + i];
            if d > SYMMETRY_REL_TOL * scale.max(1.0) {
                return Err(Error::invalid(format!("diagonal entry {i} is {d}, expected 0")));
            }
            entries[i * n + i] = 0.0;
            for j in i + 1..n {
                let (a, b) = (entries[i * n + j], entries[j * n + i]);
                if (a - b).abs() > SYMMETRY_REL_TOL * a.max(b) {
                    return Err(Error::invalid(format!(
                        "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.entries
    }

    /// Checks the triangle inequality for every triple, allowing a relative
    /// slack of `rel_tol`. Cubic; meant for validation of small inputs.
    pub fn check_triangle(&self, rel_tol: f64) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                let dij = self.get(i, j);
                for k in 0..n {
                    let via = self.get(i, k) + self.get(k, j);
                    if dij > via + rel_tol * dij.max(via) {
                        return Err(Error::invalid(format!(
                            "triangle inequality fails for ({i}, {j}) via {k}: {dij} > {via}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Distance profile of point `i`: all `n` distances from row `i`,
    /// including the zero self-distance, with weight `1/n` each.
    pub fn profile(&self, i: usize) -> Result<DistanceProfile> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange { index: i, len: self.n });
        }
        Ok(DistanceProfile::from_sorted_uniform(sorted_row(self.row(i))))
    }

    pub fn profiles(&self) -> Vec<DistanceProfile> {
        self.profiles_with(Execution::default())
    }

    pub fn profiles_with(&self, exec: Execution) -> Vec<DistanceProfile> {
        par::map_indexed(self.n, exec, |i| {
            DistanceProfile::from_sorted_uniform(sorted_row(self.row(i)))
        })
    }
}

fn sorted_row(row: &[f64]) -> Vec<f64> {
    let mut v = row.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// Euclidean distance matrix of a cloud.
pub fn pairwise_distances(cloud: &PointCloud) -> DistanceMatrix {
    DistanceMatrix::from_cloud(cloud)
}

/// Profile of point `i` of `dmat`.
pub fn distance_profile(dmat: &DistanceMatrix, i: usize) -> Result<DistanceProfile> {
    dmat.profile(i)
}

/// Profiles of every point of `dmat`, in index order.
pub fn all_profiles(dmat: &DistanceMatrix) -> Vec<DistanceProfile> {
    dmat.profiles()
}

#[derive(Debug, Clone, PartialEq)]
enum Weights {
    Uniform,
    Explicit(Vec<f64>),
}

/// A probability measure on the nonnegative reals given by sorted atoms and
/// their weights. Empirical profiles carry uniform weights implicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceProfile {
    values: Vec<f64>,
    weights: Weights,
}

impl DistanceProfile {
    /// Empirical measure with weight `1/len` on every value.
    pub fn uniform(mut values: Vec<f64>) -> Result<Self> {
        check_values(&values)?;
        values.sort_unstable_by(f64::total_cmp);
        Ok(Self::from_sorted_uniform(values))
    }

    /// Weighted measure. Atoms are sorted together with their weights;
    /// duplicates are kept. Zero weights are allowed, negative ones are not,
    /// and the total must be 1 within [`WEIGHT_SUM_TOL`].
    pub fn weighted(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(Error::mismatch(format!(
                "{} values but {} weights",
                values.len(),
                weights.len()
            )));
        }
        check_values(&values)?;
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
        }
        let mut pairs: Vec<(f64, f64)> = values.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (values, weights) = pairs.into_iter().unzip();
        Ok(Self { values, weights: Weights::Explicit(weights) })
    }

    pub(crate) fn from_sorted_uniform(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        debug_assert!(values.windows(2).all(|w| w[0] <= w[1]));
        Self { values, weights: Weights::Uniform }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Atoms in ascending order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.weights, Weights::Uniform)
    }

    pub fn weight(&self, k: usize) -> f64 {
        match &self.weights {
            Weights::Uniform => 1.0 / self.values.len() as f64,
            Weights::Explicit(w) => w[k],
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.weight(k)).collect()
    }

    pub fn mean(&self) -> f64 {
        match &self.weights {
            Weights::Uniform => self.values.iter().sum::<f64>() / self.values.len() as f64,
            Weights::Explicit(w) => self.values.iter().zip(w).map(|(v, w)| v * w).sum(),
        }
    }

    /// Shifts every atom by `c`; fails if an atom would become negative.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        let values: Vec<f64> = self.values.iter().map(|v| v + c).collect();
        check_values(&values)?;
        Ok(Self { values, weights: self.weights.clone() })
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid("profile has no atoms"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::invalid(format!("profile atom {v} is not a finite nonnegative real")));
    }
    Ok(())
}
