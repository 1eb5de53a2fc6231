//! Seeded generators: Gaussian mixtures with shared components, rigid motions,
//! noisy correspondence instances, and k-means for region labelling.
//!
//! Every generator takes an explicit 64-bit seed and uses ChaCha8, so outputs
//! are bit-identical across platforms and thread counts. Replicates use
//! [`child_seed`] rather than sharing a stream.

use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::assignment::Permutation;
use crate::error::{Error, Result};
use crate::geometry::{euclidean, PointCloud, WEIGHT_SUM_TOL};

/// Minimum center separation in [`make_paired_mixtures`], relative to the
/// cube side.
pub const MIN_CENTER_SEPARATION: f64 = 0.1;
const MAX_CENTER_DRAWS: usize = 100_000;

/// Deterministic per-replicate seed (splitmix64 finaliser of the pair).
pub fn child_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Isotropic Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub centers: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub stds: Vec<f64>,
}

impl MixtureSpec {
    pub fn new(centers: Vec<Vec<f64>>, weights: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        let spec = Self { centers, weights, stds };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks shapes, finiteness, `sum(weights) = 1` and that the stds are
    /// either all positive or all zero.
    pub fn validate(&self) -> Result<()> {
        let t = self.centers.len();
        if t == 0 {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if self.weights.len() != t || self.stds.len() != t {
            return Err(Error::mismatch(format!(
                "{t} centers, {} weights, {} stds",
                self.weights.len(),
                self.stds.len()
            )));
        }
        let d = self.centers[0].len();
        if d == 0 {
            return Err(Error::invalid("centers must have positive dimension"));
        }
        if self.centers.iter().any(|c| c.len() != d) {
            return Err(Error::mismatch("centers have different dimensions"));
        }
        if self.centers.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite center coordinate"));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("mixture weights must be finite and nonnegative"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!("mixture weights sum to {total}")));
        }
        if self.stds.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::invalid("stds must be finite and nonnegative"));
        }
        let zeros = self.stds.iter().filter(|s| **s == 0.0).count();
        if zeros != 0 && zeros != t {
            return Err(Error::invalid("stds must be all positive or all zero"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn max_std(&self) -> f64 {
        self.stds.iter().cloned().fold(0.0, f64::max)
    }

    pub fn with_std(&self, sigma: f64) -> Result<Self> {
        Self::new(self.centers.clone(), self.weights.clone(), vec![sigma; self.len()])
    }
}

/// Two mixtures whose first `k` components coincide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedMixtures {
    pub mu: MixtureSpec,
    pub nu: MixtureSpec,
    pub k: usize,
}

impl PairedMixtures {
    pub fn new(mu: MixtureSpec, nu: MixtureSpec, k: usize) -> Result<Self> {
        mu.validate()?;
        nu.validate()?;
        if mu.dim() != nu.dim() {
            return Err(Error::mismatch(format!("dimensions {} and {}", mu.dim(), nu.dim())));
        }
        if k == 0 || k > mu.len().min(nu.len()) {
            return Err(Error::invalid(format!(
                "shared count {k} not in 1..={}",
                mu.len().min(nu.len())
            )));
        }
        for a in 0..k {
            if mu.centers[a] != nu.centers[a] || mu.weights[a] != nu.weights[a] || mu.stds[a] != nu.stds[a]
            {
                return Err(Error::invalid(format!("component {a} differs between the mixtures")));
            }
        }
        Ok(Self { mu, nu, k })
    }

    pub fn with_std(&self, sigma: f64) -> Result<Self> {
        Self::new(self.mu.with_std(sigma)?, self.nu.with_std(sigma)?, self.k)
    }
}

/// Points with the index of the component that generated each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub cloud: PointCloud,
    pub labels: Vec<usize>,
}

/// `n` draws: a component by weight, then `center + std * N(0, I)`.
pub fn sample_mixture(spec: &MixtureSpec, n: usize, seed: u64) -> Result<LabeledSample> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let pick = WeightedIndex::new(&spec.weights).map_err(|e| Error::invalid(e.to_string()))?;
    let d = spec.dim();
    let mut coords = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = pick.sample(&mut rng);
        let s = spec.stds[k];
        for &c in &spec.centers[k] {
            let z: f64 = StandardNormal.sample(&mut rng);
            coords.push(c + s * z);
        }
        labels.push(k);
    }
    Ok(LabeledSample { cloud: PointCloud::from_flat(d, coords)?, labels })
}

/// Random paired mixtures with uniform weights `1/t` and common std. Shared
/// components must carry equal weight in both mixtures, so `t = s`.
///
/// Centers are uniform in `[0, center_scale]^d`, drawn in the order shared,
/// `mu`-only, `nu`-only; each is redrawn until it is at least
/// `0.1 * center_scale` from every center accepted before it. With a fixed
/// seed the centers therefore do not depend on `sigma`, and adding outlier
/// components leaves the shared ones unchanged.
pub fn make_paired_mixtures(
    k: usize,
    t: usize,
    s: usize,
    d: usize,
    center_scale: f64,
    sigma: f64,
    seed: u64,
) -> Result<PairedMixtures> {
    if k == 0 || k > t.min(s) {
        return Err(Error::invalid(format!("shared count {k} must lie in 1..=min(t, s)")));
    }
    if t != s {
        // shared components need equal weights on both sides
        return Err(Error::invalid(format!("uniform weights need t = s, got {t} and {s}")));
    }
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if !(center_scale.is_finite() && center_scale > 0.0) {
        return Err(Error::invalid("center scale must be positive"));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid("sigma must be finite and nonnegative"));
    }
    let mut rng = rng_from_seed(seed);
    let total = t + s - k;
    let min_sep = MIN_CENTER_SEPARATION * center_scale;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(total);
    while centers.len() < total {
        let mut draws = 0;
        let c = loop {
            let c: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * center_scale).collect();
            if centers.iter().all(|o| euclidean(o, &c) >= min_sep) {
                break c;
            }
            draws += 1;
            if draws >= MAX_CENTER_DRAWS {
                return Err(Error::invalid(format!(
                    "cannot place {total} centers {min_sep} apart in dimension {d}"
                )));
            }
        };
        centers.push(c);
    }
    let mu_centers: Vec<Vec<f64>> = centers[..t].to_vec();
    let nu_centers: Vec<Vec<f64>> =
        centers[..k].iter().chain(&centers[t..]).cloned().collect();
    let mu = MixtureSpec::new(mu_centers, vec![1.0 / t as f64; t], vec![sigma; t])?;
    let nu = MixtureSpec::new(nu_centers, vec![1.0 / s as f64; s], vec![sigma; s])?;
    PairedMixtures::new(mu, nu, k)
}

/// Haar-random rotation: QR of a Gaussian matrix, columns sign-fixed by the
/// diagonal of R, then the first column flipped if the determinant is -1.
pub fn random_rotation(d: usize, seed: u64) -> Result<DMatrix<f64>> {
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    Ok(q)
}

/// Rotation by `angle` in the plane of the first two coordinates.
pub fn make_two_coordinate_rotation(d: usize, angle: f64) -> Result<DMatrix<f64>> {
    if d < 2 {
        return Err(Error::invalid("a plane rotation needs d >= 2"));
    }
    let mut r = DMatrix::<f64>::identity(d, d);
    let (s, c) = angle.sin_cos();
    r[(0, 0)] = c;
    r[(0, 1)] = -s;
    r[(1, 0)] = s;
    r[(1, 1)] = c;
    Ok(r)
}

/// Maps every point `x` to `r x + b`.
pub fn apply_rigid(cloud: &PointCloud, r: &DMatrix<f64>, b: &[f64]) -> Result<PointCloud> {
    let d = cloud.dim();
    if r.nrows() != d || r.ncols() != d || b.len() != d {
        return Err(Error::mismatch(format!(
            "{}x{} matrix and offset of length {} for dimension {d}",
            r.nrows(),
            r.ncols(),
            b.len()
        )));
    }
    let mut out = Vec::with_capacity(cloud.len() * d);
    for x in cloud.points() {
        let y = r * DVector::from_column_slice(x);
        out.extend(y.iter().zip(b).map(|(v, o)| v + o));
    }
    PointCloud::from_flat(d, out)
}

/// Noisy observations of locations and of their rigidly moved, relabelled
/// copies: `X_i = theta_i + xi_i`, `eta_{pi(i)} = r theta_i + b` and
/// `Y_j = eta_j + zeta_j`, with `xi ~ N(0, sigma^2 I)`, `zeta ~ N(0, tau^2 I)`.
pub fn noisy_correspondence_instance(
    thetas: &PointCloud,
    r: &DMatrix<f64>,
    b: &[f64],
    pi_star: &Permutation,
    sigma: f64,
    tau: f64,
    seed: u64,
) -> Result<(PointCloud, PointCloud)> {
    let n = thetas.len();
    if pi_star.len() != n {
        return Err(Error::mismatch(format!("permutation of {} for {n} locations", pi_star.len())));
    }
    if !(sigma.is_finite() && sigma >= 0.0 && tau.is_finite() && tau >= 0.0) {
        return Err(Error::invalid("noise levels must be finite and nonnegative"));
    }
    let moved = apply_rigid(thetas, r, b)?;
    let eta = moved.relabeled(pi_star.as_slice())?;
    let mut rng = rng_from_seed(seed);
    let mut jitter = |cloud: &PointCloud, scale: f64| {
        let coords: Vec<f64> = cloud
            .as_flat()
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + scale * z
            })
            .collect();
        PointCloud::from_flat(cloud.dim(), coords)
    };
    let x = jitter(thetas, sigma)?;
    let y = jitter(&eta, tau)?;
    Ok((x, y))
}

/// Lloyd's algorithm from k-means++ seeds. Stops at an assignment fixpoint or
/// after `max_iters` rounds. A cluster that empties is re-seeded with the point
/// farthest from its current center.
pub fn kmeans(cloud: &PointCloud, k: usize, seed: u64, max_iters: usize) -> Result<Vec<usize>> {
    let n = cloud.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={n}")));
    }
    let d = cloud.dim();
    let mut rng = rng_from_seed(seed);

    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(cloud.point(rng.gen_range(0..n)).to_vec());
    let mut d2: Vec<f64> = cloud.points().map(|x| sq(euclidean(x, &centers[0]))).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if *w > 0.0 && target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            while d2[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        let c = cloud.point(idx).to_vec();
        for (i, x) in cloud.points().enumerate() {
            d2[i] = d2[i].min(sq(euclidean(x, &c)));
        }
        centers.push(c);
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        for (i, x) in cloud.points().enumerate() {
            let best = nearest(&centers, x);
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, x) in cloud.points().enumerate() {
            counts[labels[i]] += 1;
            for (s, v) in sums[labels[i]].iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| {
                        let da = euclidean(cloud.point(a), &centers[labels[a]]);
                        let db = euclidean(cloud.point(b), &centers[labels[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    });
                if let Some(i) = far {
                    counts[labels[i]] -= 1;
                    counts[c] = 1;
                    labels[i] = c;
                    centers[c] = cloud.point(i).to_vec();
                }
            }
        }
    }
    Ok(labels)
}

fn sq(x: f64) -> f64 {
    x * x
}

fn nearest(centers: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let dist = euclidean(center, x);
        if dist < bd {
            bd = dist;
            best = c;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pairwise_distances;

    #[test]
    fn noiseless_single_component_is_constant() {
        let spec = MixtureSpec::new(vec![vec![0.0, 0.0]], vec![1.0], vec![0.0]).unwrap();
        let s = sample_mixture(&spec, 50, 1).unwrap();
        assert!(s.cloud.as_flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_weight_component_never_drawn() {
        let spec =
            MixtureSpec::new(vec![vec![0.0], vec![5.0]], vec![1.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(sample_mixture(&spec, 500, 3).unwrap().labels.iter().all(|l| *l == 0));
    }

    #[test]
    fn label_frequencies() {
        let spec =
            MixtureSpec::new(vec![vec![0.0], vec![5.0]], vec![0.5, 0.5], vec![1.0, 1.0]).unwrap();
        let n = 100_000;
        let s = sample_mixture(&spec, n, 9).unwrap();
        let ones = s.labels.iter().filter(|l| **l == 1).count() as f64 / n as f64;
        assert!((ones - 0.5).abs() < 0.01);
    }

    #[test]
    fn sampling_is_reproducible() {
        let pm = make_paired_mixtures(3, 5, 5, 2, 1.0, 0.05, 77).unwrap();
        assert_eq!(pm, make_paired_mixtures(3, 5, 5, 2, 1.0, 0.05, 77).unwrap());
        let a = sample_mixture(&pm.mu, 100, 5).unwrap();
        assert_eq!(a, sample_mixture(&pm.mu, 100, 5).unwrap());
        assert_ne!(a, sample_mixture(&pm.mu, 100, 6).unwrap());
    }

    #[test]
    fn paired_mixture_structure() {
        let same = make_paired_mixtures(4, 4, 4, 3, 1.0, 0.1, 1).unwrap();
        assert_eq!(same.mu, same.nu);
        let noiseless = make_paired_mixtures(2, 4, 4, 3, 1.0, 0.0, 1).unwrap();
        assert!(noiseless.mu.stds.iter().chain(&noiseless.nu.stds).all(|s| *s == 0.0));
        assert_eq!(noiseless.nu.len(), 4);
        assert_ne!(noiseless.mu.centers[2..], noiseless.nu.centers[2..]);
        assert!(make_paired_mixtures(5, 4, 4, 3, 1.0, 0.1, 1).is_err());
        assert!(make_paired_mixtures(2, 3, 4, 3, 1.0, 0.1, 1).is_err());
        // shared centers do not depend on sigma or on the outliers
        let a = make_paired_mixtures(10, 10, 10, 3, 1.0, 0.0, 5).unwrap();
        let b = make_paired_mixtures(10, 11, 11, 3, 1.0, 0.3, 5).unwrap();
        assert_eq!(a.mu.centers[..], b.mu.centers[..10]);
        assert_eq!(a.nu.centers[..], b.nu.centers[..10]);
    }

    #[test]
    fn spec_validation() {
        assert!(MixtureSpec::new(vec![vec![0.0]], vec![0.9], vec![1.0]).is_err());
        assert!(MixtureSpec::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5], vec![0.0, 1.0]).is_err());
        assert!(MixtureSpec::new(vec![vec![0.0], vec![1.0, 2.0]], vec![0.5, 0.5], vec![1.0, 1.0])
            .is_err());
    }

    #[test]
    fn rotations_are_orthonormal() {
        assert_eq!(random_rotation(1, 4).unwrap()[(0, 0)], 1.0);
        for d in [2, 3, 5, 10] {
            let r = random_rotation(d, d as u64).unwrap();
            let e = &r * r.transpose() - DMatrix::<f64>::identity(d, d);
            assert!(e.amax() < 1e-10);
            assert!((r.determinant() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn plane_rotation() {
        let r = make_two_coordinate_rotation(4, std::f64::consts::FRAC_PI_2).unwrap();
        let v = &r * DVector::from_column_slice(&[1.0, 0.0, 0.0, 0.0]);
        assert!((v - DVector::from_column_slice(&[0.0, 1.0, 0.0, 0.0])).amax() < 1e-12);
        let back = make_two_coordinate_rotation(4, -0.7).unwrap() * make_two_coordinate_rotation(4, 0.7).unwrap();
        assert!((back - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
        assert_eq!(make_two_coordinate_rotation(3, 0.0).unwrap(), DMatrix::identity(3, 3));
        assert!(make_two_coordinate_rotation(1, 0.3).is_err());
    }

    #[test]
    fn rigid_motion_keeps_distances() {
        let x = sample_mixture(&make_paired_mixtures(2, 2, 2, 3, 1.0, 0.2, 0).unwrap().mu, 30, 1)
            .unwrap()
            .cloud;
        let y = apply_rigid(&x, &random_rotation(3, 2).unwrap(), &[1.0, -2.0, 0.5]).unwrap();
        let (dx, dy) = (pairwise_distances(&x), pairwise_distances(&y));
        for (a, b) in dx.as_flat().iter().zip(dy.as_flat()) {
            assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
        assert_eq!(apply_rigid(&x, &DMatrix::identity(3, 3), &[0.0; 3]).unwrap(), x);
        assert!(apply_rigid(&x, &DMatrix::identity(2, 2), &[0.0; 2]).is_err());
    }

    #[test]
    fn noiseless_correspondence() {
        let thetas = PointCloud::new(vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![3.0, 2.0]]).unwrap();
        let id = Permutation::identity(3);
        let eye = DMatrix::identity(2, 2);
        let (x, y) = noisy_correspondence_instance(&thetas, &eye, &[0.0, 0.0], &id, 0.0, 0.0, 1).unwrap();
        assert_eq!(x, thetas);
        assert_eq!(y, thetas);

        let pi = Permutation::new(vec![2, 0, 1]).unwrap();
        let r = random_rotation(2, 3).unwrap();
        let (x, y) = noisy_correspondence_instance(&thetas, &r, &[2.0, 1.0], &pi, 0.0, 0.0, 1).unwrap();
        let dx = pairwise_distances(&x);
        let dy = pairwise_distances(&y);
        for i in 0..3 {
            for k in 0..3 {
                assert!((dx.get(i, k) - dy.get(pi.get(i), pi.get(k))).abs() < 1e-9);
            }
        }
        let a = noisy_correspondence_instance(&thetas, &r, &[0.0, 0.0], &pi, 0.1, 0.2, 8).unwrap();
        assert_eq!(a, noisy_correspondence_instance(&thetas, &r, &[0.0, 0.0], &pi, 0.1, 0.2, 8).unwrap());
    }

    #[test]
    fn kmeans_basic_cases() {
        let x = PointCloud::new((0..6).map(|i| vec![i as f64, (i * i) as f64]).collect()).unwrap();
        assert!(kmeans(&x, 1, 3, 50).unwrap().iter().all(|l| *l == 0));
        let mut own = kmeans(&x, 6, 3, 50).unwrap();
        own.sort();
        assert_eq!(own, vec![0, 1, 2, 3, 4, 5]);
        assert!(kmeans(&x, 7, 3, 50).is_err());
        assert_eq!(kmeans(&x, 3, 11, 50).unwrap(), kmeans(&x, 3, 11, 50).unwrap());
    }

    #[test]
    fn kmeans_separates_blobs() {
        let spec = MixtureSpec::new(
            vec![vec![0.0, 0.0], vec![10.0, 10.0]],
            vec![0.5, 0.5],
            vec![0.1, 0.1],
        )
        .unwrap();
        let s = sample_mixture(&spec, 200, 4).unwrap();
        let labels = kmeans(&s.cloud, 2, 9, 100).unwrap();
        let same = labels.iter().zip(&s.labels).filter(|(a, b)| a == b).count();
        assert!(same == 200 || same == 0);
    }

    #[test]
    fn child_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|r| child_seed(42, r)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(child_seed(1, 0), child_seed(2, 0));
    }
}
