//! Separation constants, noise ceilings, accuracy metrics and the simulation
//! drivers.

use serde::{Deserialize, Serialize};

use crate::assignment::{assign_distance_matrices, assign_ot_baseline_with, Permutation};
use crate::error::{Error, Result};
use crate::geometry::{euclidean, DistanceMatrix, DistanceProfile, PointCloud};
use crate::gw::solve_discrete_ot;
use crate::matching::{match_profiles, MatchResult};
use crate::par::{self, Execution};
use crate::synthetic::{
    apply_rigid, child_seed, make_paired_mixtures, make_two_coordinate_rotation,
    noisy_correspondence_instance, random_rotation, rng_from_seed, sample_mixture, MixtureSpec,
    PairedMixtures,
};
use crate::wasserstein1d::wasserstein_p;

use rand::seq::SliceRandom;
use rand::Rng;

/// Weighted profile of center `alpha` against all centers of `spec`.
pub fn center_profile(spec: &MixtureSpec, alpha: usize) -> Result<DistanceProfile> {
    if alpha >= spec.len() {
        return Err(Error::IndexOutOfRange { index: alpha, len: spec.len() });
    }
    let c = &spec.centers[alpha];
    let values = spec.centers.iter().map(|o| euclidean(c, o)).collect();
    DistanceProfile::weighted(values, spec.weights.clone())
}

/// `W1` between the weighted center profiles of `mu` at `alpha` and `nu` at
/// `beta` (0-based).
pub fn center_profile_distance(pm: &PairedMixtures, alpha: usize, beta: usize) -> Result<f64> {
    wasserstein_p(&center_profile(&pm.mu, alpha)?, &center_profile(&pm.nu, beta)?, 1.0)
}

/// All `t x s` center profile distances, row-major.
pub fn center_profile_table(pm: &PairedMixtures) -> Result<Vec<f64>> {
    let mu: Vec<_> = (0..pm.mu.len()).map(|a| center_profile(&pm.mu, a)).collect::<Result<_>>()?;
    let nu: Vec<_> = (0..pm.nu.len()).map(|b| center_profile(&pm.nu, b)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(mu.len() * nu.len());
    for p in &mu {
        for q in &nu {
            out.push(wasserstein_p(p, q, 1.0)?);
        }
    }
    Ok(out)
}

/// Largest distance among all centers of both mixtures.
pub fn center_diameter(pm: &PairedMixtures) -> f64 {
    let all: Vec<&Vec<f64>> = pm.mu.centers.iter().chain(&pm.nu.centers).collect();
    let mut r = 0.0f64;
    for (i, a) in all.iter().enumerate() {
        for b in &all[i + 1..] {
            r = r.max(euclidean(a, b));
        }
    }
    r
}

/// Constants of the outlier-robust matching guarantee for a pair of mixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    /// min over shared `alpha`, `beta != alpha` of the center profile distance.
    pub wbar_min_offdiag: f64,
    /// max over shared `alpha` of the diagonal center profile distance.
    pub wbar_max_diag: f64,
    pub omega: f64,
    pub omega_o: f64,
    pub omega_prime: f64,
    pub rhs: f64,
    /// The three terms whose maximum is `rhs`.
    pub rhs_terms: [f64; 3],
    pub r: f64,
    pub gamma: f64,
    /// `1 - sum of the shared weights`.
    pub outlier_mass: f64,
}

impl SeparationReport {
    /// Whether the sufficient condition `omega >= rhs` holds.
    pub fn condition_holds(&self) -> bool {
        self.omega >= self.rhs
    }
}

pub fn separation_report(pm: &PairedMixtures, n: usize, m: usize, delta: f64) -> Result<SeparationReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta = {delta} must lie in (0, 1)")));
    }
    if n == 0 || m == 0 {
        return Err(Error::invalid("sample sizes must be positive"));
    }
    let (t, s, k) = (pm.mu.len(), pm.nu.len(), pm.k);
    let w = center_profile_table(pm)?;
    let at = |a: usize, b: usize| w[a * s + b];

    let mut min_off = f64::INFINITY;
    let mut max_diag = 0.0f64;
    let mut omega_o = f64::INFINITY;
    for a in 0..k {
        let row_min = (0..s).filter(|&b| b != a).map(|b| at(a, b)).fold(f64::INFINITY, f64::min);
        min_off = min_off.min(row_min);
        max_diag = max_diag.max(at(a, a));
        omega_o = omega_o.min(row_min - at(a, a));
    }
    let min_outlier = (k..t)
        .flat_map(|a| (0..s).map(move |b| (a, b)))
        .map(|(a, b)| at(a, b))
        .fold(f64::INFINITY, f64::min);

    let r = center_diameter(pm);
    let gamma = pm.mu.max_std().max(pm.nu.max_std());
    let outlier_mass = (1.0 - pm.mu.weights[..k].iter().sum::<f64>()).max(0.0);
    let omega = min_off - r * outlier_mass;
    let omega_prime = min_off.min(min_outlier) - r * outlier_mass;

    let (small, large) = (n.min(m) as f64, n.max(m) as f64);
    let d = pm.mu.dim() as f64;
    let logs = (k as f64).ln() + ((t + s - 2) as f64).ln() + (4.0 / delta).ln();
    let rhs_terms = [
        16.0 * gamma * d.sqrt(),
        8.0 * r * (logs / (2.0 * small)).sqrt(),
        32.0 * gamma * (2.0 * (4.0 * large * large / delta).ln()).sqrt(),
    ];
    let rhs = rhs_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(SeparationReport {
        wbar_min_offdiag: min_off,
        wbar_max_diag: max_diag,
        omega,
        omega_o,
        omega_prime,
        rhs,
        rhs_terms,
        r,
        gamma,
        outlier_mass,
    })
}

/// Both sides of the diagonal bound: the largest `W̄(alpha, alpha)` over shared
/// components, and `(1 - shared mass) * max ||theta_a - eta_b||`.
pub fn lemma1_sides(pm: &PairedMixtures) -> Result<(f64, f64)> {
    let mut lhs = 0.0f64;
    for a in 0..pm.k {
        lhs = lhs.max(center_profile_distance(pm, a, a)?);
    }
    let mut cross = 0.0f64;
    for a in &pm.mu.centers {
        for b in &pm.nu.centers {
            cross = cross.max(euclidean(a, b));
        }
    }
    let mass = (1.0 - pm.mu.weights[..pm.k].iter().sum::<f64>()).max(0.0);
    Ok((lhs, mass * cross))
}

pub fn lemma1_bound_check(pm: &PairedMixtures) -> Result<bool> {
    let (lhs, rhs) = lemma1_sides(pm)?;
    Ok(lhs <= rhs + 1e-9)
}

/// Both sides of the shared-support bound: `W1(sum p_k d_{z_k}, sum q_k d_{z_k})`
/// and `(z_t - z_1) * max_j |sum_{k<=j} (p_k - q_k)|`, `z` nondecreasing.
pub fn lemma2_sides(z: &[f64], p: &[f64], q: &[f64]) -> Result<(f64, f64)> {
    if z.is_empty() || z.len() != p.len() || z.len() != q.len() {
        return Err(Error::mismatch("support and weight vectors must share a nonzero length"));
    }
    if z.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("support must be nondecreasing"));
    }
    let lhs = wasserstein_p(
        &DistanceProfile::weighted(z.to_vec(), p.to_vec())?,
        &DistanceProfile::weighted(z.to_vec(), q.to_vec())?,
        1.0,
    )?;
    let mut partial = 0.0f64;
    let mut worst = 0.0f64;
    for j in 0..z.len() - 1 {
        partial += p[j] - q[j];
        worst = worst.max(partial.abs());
    }
    Ok((lhs, (z[z.len() - 1] - z[0]) * worst))
}

/// Smallest order-1 discrepancy between the profiles of two distinct
/// locations.
pub fn phi(locations: &PointCloud) -> Result<f64> {
    if locations.len() < 2 {
        return Err(Error::invalid("need at least two locations"));
    }
    let profiles = DistanceMatrix::from_cloud(locations).profiles();
    let n = profiles.len();
    let mins = par::map_indexed(n, Execution::default(), |i| {
        ((i + 1)..n)
            .map(|j| crate::wasserstein1d::pow_unchecked(&profiles[i], &profiles[j], 1.0))
            .fold(f64::INFINITY, f64::min)
    });
    Ok(mins.into_iter().fold(f64::INFINITY, f64::min))
}

/// Largest admissible `sigma^2 v tau^2` for exact recovery with probability
/// `1 - delta`: `Phi^2 / (64 (d v 8 log(2 n^2 / delta)))`.
pub fn theorem2_noise_bound(locations: &PointCloud, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta = {delta} must lie in (0, 1)")));
    }
    let f = phi(locations)?;
    if f <= 0.0 {
        return Err(Error::NotIdentifiable("two locations share a distance profile".into()));
    }
    Ok(noise_bound_from_phi(f, locations.dim(), locations.len(), delta))
}

pub fn noise_bound_from_phi(phi: f64, d: usize, n: usize, delta: f64) -> f64 {
    let n = n as f64;
    let denom = (d as f64).max(8.0 * (2.0 * n * n / delta).ln());
    phi * phi / (64.0 * denom)
}

/// Share of shared-component sources matched to a target of the same
/// component. Vacuously 1 when no source comes from a shared component.
pub fn matching_accuracy(result: &MatchResult, labels_x: &[usize], labels_y: &[usize], k: usize) -> f64 {
    map_accuracy(&result.pi, labels_x, labels_y, k)
}

pub fn map_accuracy(pi: &[usize], labels_x: &[usize], labels_y: &[usize], k: usize) -> f64 {
    let mut total = 0usize;
    let mut hit = 0usize;
    for (i, &li) in labels_x.iter().enumerate() {
        if li < k {
            total += 1;
            if labels_y[pi[i]] == li {
                hit += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    }
}

pub fn perfect_matching(result: &MatchResult, labels_x: &[usize], labels_y: &[usize], k: usize) -> bool {
    matching_accuracy(result, labels_x, labels_y, k) == 1.0
}

/// `(lo, hi)`: the largest discrepancy among shared-component sources and the
/// smallest among outlier sources. When `lo < hi`, any threshold in
/// `(lo, hi]` selects exactly the shared-component sources.
pub fn inlier_threshold_interval(result: &MatchResult, labels_x: &[usize], k: usize) -> Result<(f64, f64)> {
    if labels_x.len() != result.len() {
        return Err(Error::mismatch("labels and match result differ in length"));
    }
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let (mut inl, mut out) = (0, 0);
    for (d, &l) in result.discrepancy.iter().zip(labels_x) {
        if l < k {
            inl += 1;
            lo = lo.max(*d);
        } else {
            out += 1;
            hi = hi.min(*d);
        }
    }
    if inl == 0 || out == 0 {
        return Err(Error::invalid("need both shared-component and outlier sources"));
    }
    Ok((lo, hi))
}

/// Estimator that produced an [`ExperimentRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Profile,
    Assignment,
    OtBaseline,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Profile => "profile",
            Method::Assignment => "assignment",
            Method::OtBaseline => "ot_baseline",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub method: Method,
    pub sigma: f64,
    pub replicate: usize,
    pub perfect: bool,
    pub accuracy: f64,
}

fn default_scale() -> f64 {
    1.0
}

fn default_order() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub d: usize,
    #[serde(rename = "K", alias = "k")]
    pub k: usize,
    pub t: usize,
    pub s: usize,
    pub n: usize,
    pub m: usize,
    pub sigmas: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "default_scale")]
    pub center_scale: f64,
    #[serde(default = "default_order")]
    pub order: f64,
}

impl MixtureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() {
            return Err(Error::invalid("sigma grid is empty"));
        }
        if self.sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::invalid("sigmas must be finite and nonnegative"));
        }
        if self.n == 0 || self.m == 0 || self.replicates == 0 {
            return Err(Error::invalid("n, m and replicates must be positive"));
        }
        Ok(())
    }

    /// The mixtures used at noise level `sigma`: the centers depend on the
    /// seed only.
    pub fn mixtures(&self, sigma: f64) -> Result<PairedMixtures> {
        make_paired_mixtures(self.k, self.t, self.s, self.d, self.center_scale, sigma, self.seed)
    }
}

/// Outlier-robust matching sweep. Centers are fixed by `config.seed`; replicate
/// `r` draws its samples from a child seed that is shared across the sigma
/// grid, so curves over sigma use common random numbers.
pub fn run_mixture_experiment(config: &MixtureConfig) -> Result<Vec<ExperimentRecord>> {
    let mut out = Vec::new();
    run_mixture_experiment_streaming(config, Execution::default(), |r| {
        out.push(r.clone());
        Ok(())
    })?;
    Ok(out)
}

/// As [`run_mixture_experiment`], handing records to `sink` one sigma at a
/// time in replicate order.
pub fn run_mixture_experiment_streaming<F>(config: &MixtureConfig, exec: Execution, mut sink: F) -> Result<()>
where
    F: FnMut(&ExperimentRecord) -> Result<()>,
{
    config.validate()?;
    for &sigma in &config.sigmas {
        let pm = config.mixtures(sigma)?;
        let batch = par::map_indexed(config.replicates, exec, |r| {
            mixture_replicate(config, &pm, sigma, r)
        });
        for rec in batch {
            sink(&rec?)?;
        }
    }
    Ok(())
}

fn mixture_replicate(config: &MixtureConfig, pm: &PairedMixtures, sigma: f64, r: usize) -> Result<ExperimentRecord> {
    let base = child_seed(config.seed, r as u64);
    let xs = sample_mixture(&pm.mu, config.n, child_seed(base, 0))?;
    let ys = sample_mixture(&pm.nu, config.m, child_seed(base, 1))?;
    let px = DistanceMatrix::from_cloud_with(&xs.cloud, Execution::Sequential).profiles_with(Execution::Sequential);
    let py = DistanceMatrix::from_cloud_with(&ys.cloud, Execution::Sequential).profiles_with(Execution::Sequential);
    let res = match_profiles(&px, &py, config.order, f64::INFINITY, Execution::Sequential)?;
    let accuracy = matching_accuracy(&res, &xs.labels, &ys.labels, pm.k);
    Ok(ExperimentRecord { method: Method::Profile, sigma, replicate: r, perfect: accuracy == 1.0, accuracy })
}

/// Which rigid motion relates the two location sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationKind {
    TwoCoord,
    Full,
}

impl std::str::FromStr for RotationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_coord" | "two-coord" => Ok(Self::TwoCoord),
            "full" => Ok(Self::Full),
            other => Err(Error::Parse(format!("unknown rotation kind {other:?}"))),
        }
    }
}

/// Default plane-rotation angle of the two-coordinate setting.
pub const DEFAULT_PLANE_ANGLE: f64 = std::f64::consts::PI / 12.0;

fn default_angle() -> f64 {
    DEFAULT_PLANE_ANGLE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub d: usize,
    pub n: usize,
    pub sigmas: Vec<f64>,
    pub rotation: RotationKind,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "default_angle")]
    pub angle: f64,
    /// Locations are uniform in `[-scale/2, scale/2]^d`.
    #[serde(default = "default_scale")]
    pub location_scale: f64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() {
            return Err(Error::invalid("sigma grid is empty"));
        }
        if self.sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::invalid("sigmas must be finite and nonnegative"));
        }
        if self.n < 2 || self.d == 0 || self.replicates == 0 {
            return Err(Error::invalid("need n >= 2, d >= 1 and replicates >= 1"));
        }
        if self.rotation == RotationKind::TwoCoord && self.d < 2 {
            return Err(Error::invalid("a plane rotation needs d >= 2"));
        }
        if !(self.location_scale.is_finite() && self.location_scale > 0.0) {
            return Err(Error::invalid("location scale must be positive"));
        }
        Ok(())
    }

    /// The fixed locations of the experiment.
    pub fn locations(&self) -> Result<PointCloud> {
        uniform_cube(self.n, self.d, self.location_scale, child_seed(self.seed, u64::MAX))
    }
}

/// `n` points uniform in `[-scale/2, scale/2]^d`.
pub fn uniform_cube(n: usize, d: usize, scale: f64, seed: u64) -> Result<PointCloud> {
    let mut rng = rng_from_seed(seed);
    let coords = (0..n * d).map(|_| (rng.gen::<f64>() - 0.5) * scale).collect();
    PointCloud::from_flat(d, coords)
}

/// Noise-stability sweep: for each sigma and replicate, a random relabelling
/// and fresh noise (`sigma = tau`), then both the profile assignment and the
/// squared-Euclidean baseline. Locations and the rigid motion are fixed by the
/// seed. Accuracy is the share of correctly recovered positions.
pub fn run_noise_stability_experiment(config: &NoiseConfig) -> Result<Vec<ExperimentRecord>> {
    let mut out = Vec::new();
    run_noise_stability_experiment_streaming(config, Execution::default(), |r| {
        out.push(r.clone());
        Ok(())
    })?;
    Ok(out)
}

pub fn run_noise_stability_experiment_streaming<F>(config: &NoiseConfig, exec: Execution, mut sink: F) -> Result<()>
where
    F: FnMut(&ExperimentRecord) -> Result<()>,
{
    config.validate()?;
    let thetas = config.locations()?;
    let rot = match config.rotation {
        RotationKind::TwoCoord => make_two_coordinate_rotation(config.d, config.angle)?,
        RotationKind::Full => random_rotation(config.d, child_seed(config.seed, u64::MAX - 1))?,
    };
    let mut rng = rng_from_seed(child_seed(config.seed, u64::MAX - 2));
    let shift: Vec<f64> = (0..config.d).map(|_| rng.gen::<f64>() * config.location_scale).collect();

    for &sigma in &config.sigmas {
        let batch = par::map_indexed(config.replicates, exec, |r| -> Result<[ExperimentRecord; 2]> {
            let base = child_seed(config.seed, r as u64);
            let mut prng = rng_from_seed(child_seed(base, 0));
            let mut map: Vec<usize> = (0..config.n).collect();
            map.shuffle(&mut prng);
            let pi_star = Permutation::new(map)?;
            let (x, y) = noisy_correspondence_instance(&thetas, &rot, &shift, &pi_star, sigma, sigma, child_seed(base, 1))?;
            let dx = DistanceMatrix::from_cloud_with(&x, Execution::Sequential);
            let dy = DistanceMatrix::from_cloud_with(&y, Execution::Sequential);
            let prof = assign_distance_matrices(&dx, &dy, Execution::Sequential)?.permutation;
            let ot = assign_ot_baseline_with(&x, &y, Execution::Sequential)?.permutation;
            let rec = |method, p: &Permutation| {
                let accuracy = p.agreement(&pi_star) as f64 / config.n as f64;
                ExperimentRecord { method, sigma, replicate: r, perfect: *p == pi_star, accuracy }
            };
            Ok([rec(Method::Assignment, &prof), rec(Method::OtBaseline, &ot)])
        });
        for pair in batch {
            for rec in pair? {
                sink(&rec)?;
            }
        }
    }
    Ok(())
}

/// Mean and standard deviation of accuracy and exact recovery per method and
/// sigma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub sigma: f64,
    pub replicates: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub recovery_frequency: f64,
    pub recovery_std: f64,
}

/// Groups records by `(method, sigma)` in order of first appearance. Standard
/// deviations use the `n - 1` denominator (0 for a single replicate).
pub fn summarize(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Method, u64)> = Vec::new();
    for r in records {
        let key = (r.method, r.sigma.to_bits());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(method, bits)| {
            let group: Vec<&ExperimentRecord> =
                records.iter().filter(|r| r.method == method && r.sigma.to_bits() == bits).collect();
            let acc: Vec<f64> = group.iter().map(|r| r.accuracy).collect();
            let rec: Vec<f64> = group.iter().map(|r| if r.perfect { 1.0 } else { 0.0 }).collect();
            let (am, asd) = mean_std(&acc);
            let (rm, rsd) = mean_std(&rec);
            SummaryRow {
                method,
                sigma: f64::from_bits(bits),
                replicates: group.len(),
                accuracy_mean: am,
                accuracy_std: asd,
                recovery_frequency: rm,
                recovery_std: rsd,
            }
        })
        .collect()
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Outcome of a Monte-Carlo check of the rotational-invariance bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposition1Report {
    pub trials: usize,
    pub violations: usize,
    pub max_excess: f64,
    pub tolerance: f64,
}

impl Proposition1Report {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Size of the Monte-Carlo sample standing in for the population.
pub const PROPOSITION1_SAMPLES: usize = 100_000;

/// Checks `W1(mu_x, mu_x') <= sum_k p_k | ||x - theta_k|| - ||x' - theta_k|| |`
/// for random pairs `(x, x')`, where `mu_x` is the law of `||x - Z||` under the
/// mixture. Population profiles are replaced by the empirical profile of one
/// shared mixture sample of size [`PROPOSITION1_SAMPLES`]; the tolerance is
/// `max(0.02 Gamma, 3 * standard error)`.
pub fn proposition1_check(spec: &MixtureSpec, trials: usize, seed: u64) -> Result<Proposition1Report> {
    proposition1_check_with(spec, trials, seed, PROPOSITION1_SAMPLES)
}

pub fn proposition1_check_with(spec: &MixtureSpec, trials: usize, seed: u64, samples: usize) -> Result<Proposition1Report> {
    let z = sample_mixture(spec, samples, child_seed(seed, 0))?.cloud;
    let d = spec.dim();
    let gamma = spec.max_std();
    let lo: Vec<f64> = (0..d).map(|c| spec.centers.iter().map(|v| v[c]).fold(f64::INFINITY, f64::min) - 3.0 * gamma).collect();
    let hi: Vec<f64> = (0..d).map(|c| spec.centers.iter().map(|v| v[c]).fold(f64::NEG_INFINITY, f64::max) + 3.0 * gamma).collect();
    let mut rng = rng_from_seed(child_seed(seed, 1));
    let point = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        (0..d).map(|c| if hi[c] > lo[c] { rng.gen_range(lo[c]..hi[c]) } else { lo[c] }).collect()
    };
    let mut report = Proposition1Report { trials, violations: 0, max_excess: f64::NEG_INFINITY, tolerance: 0.0 };
    for trial in 0..trials {
        let x = point(&mut rng);
        // every fourth pair reuses x, the degenerate case
        let xp = if trial % 4 == 3 { x.clone() } else { point(&mut rng) };
        let (lhs, tol) = monte_carlo_profile_w1(&z, &x, &xp, gamma)?;
        let rhs: f64 = spec
            .centers
            .iter()
            .zip(&spec.weights)
            .map(|(c, p)| p * (euclidean(&x, c) - euclidean(&xp, c)).abs())
            .sum();
        let excess = lhs - rhs;
        report.max_excess = report.max_excess.max(excess);
        report.tolerance = report.tolerance.max(tol);
        if excess > tol {
            report.violations += 1;
        }
    }
    Ok(report)
}

fn monte_carlo_profile_w1(z: &PointCloud, x: &[f64], xp: &[f64], gamma: f64) -> Result<(f64, f64)> {
    let a: Vec<f64> = z.points().map(|p| euclidean(p, x)).collect();
    let b: Vec<f64> = z.points().map(|p| euclidean(p, xp)).collect();
    let n = a.len() as f64;
    let (_, sa) = mean_std(&a);
    let (_, sb) = mean_std(&b);
    let se = (sa.max(sb)) / n.sqrt();
    let w = wasserstein_p(&DistanceProfile::uniform(a)?, &DistanceProfile::uniform(b)?, 1.0)?;
    Ok((w, (0.02 * gamma).max(3.0 * se)))
}

/// Sorted distances from `x` to every point of `cloud`.
fn sorted_distances(cloud: &PointCloud, x: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = cloud.points().map(|p| euclidean(p, x)).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// A sorted uniform profile with prefix sums, for block Wasserstein sums
/// against a coarser uniform profile.
pub struct BlockProfile {
    values: Vec<f64>,
    prefix: Vec<f64>,
}

impl BlockProfile {
    pub fn new(sorted: Vec<f64>) -> Self {
        let mut prefix = Vec::with_capacity(sorted.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for v in &sorted {
            acc += v;
            prefix.push(acc);
        }
        Self { values: sorted, prefix }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `W1` against the uniform profile on the sorted `coarse`, whose length
    /// must divide `self.len()`. Quantile block `j` of `self` is sent to
    /// `coarse[j]`.
    pub fn w1_to_coarse(&self, coarse: &[f64]) -> f64 {
        let big = self.values.len();
        let block = big / coarse.len();
        debug_assert_eq!(block * coarse.len(), big);
        let mut total = 0.0;
        for (j, &b) in coarse.iter().enumerate() {
            let (lo, hi) = (j * block, (j + 1) * block);
            let cut = lo + self.values[lo..hi].partition_point(|&a| a < b);
            let below = (cut - lo) as f64 * b - (self.prefix[cut] - self.prefix[lo]);
            let above = (self.prefix[hi] - self.prefix[cut]) - (hi - cut) as f64 * b;
            total += below + above;
        }
        total / big as f64
    }
}

/// Order-1 third lower bound between a large reference cloud and a sample
/// whose size divides the reference size, with the reference profiles
/// precomputed.
pub fn tlb_to_reference(reference: &[BlockProfile], sample: &PointCloud, exec: Execution) -> Result<f64> {
    let n0 = reference.len();
    let n = sample.len();
    if n0 == 0 || n == 0 || !n0.is_multiple_of(n) || reference.iter().any(|p| p.len() != n0) {
        return Err(Error::invalid(format!("sample size {n} must divide the reference size {n0}")));
    }
    let py: Vec<Vec<f64>> = DistanceMatrix::from_cloud_with(sample, exec)
        .profiles_with(exec)
        .into_iter()
        .map(|p| p.values().to_vec())
        .collect();
    let mut cost = vec![0.0; n0 * n];
    par::fill_chunks(&mut cost, n, exec, |i, row| {
        for (slot, q) in row.iter_mut().zip(&py) {
            *slot = reference[i].w1_to_coarse(q);
        }
    });
    Ok(solve_discrete_ot(n0, n, &cost)?.value)
}

/// Profiles of every reference point against the reference cloud.
pub fn reference_profiles(reference: &PointCloud, exec: Execution) -> Vec<BlockProfile> {
    par::map_indexed(reference.len(), exec, |i| BlockProfile::new(sorted_distances(reference, reference.point(i))))
}

/// `max_x W1(profile of x in the reference, profile of x in the subsample)`
/// over the points `x` of a subsample of the reference given by `indices`.
/// The subsample size must divide the reference size.
pub fn sup_profile_deviation(reference: &PointCloud, indices: &[usize], exec: Execution) -> Result<f64> {
    let n0 = reference.len();
    let n = indices.len();
    if n == 0 || !n0.is_multiple_of(n) || indices.iter().any(|&i| i >= n0) {
        return Err(Error::invalid(format!("subsample of {n} must index and divide the reference of {n0}")));
    }
    let devs = par::map_indexed(n, exec, |a| {
        let x = reference.point(indices[a]);
        let full = BlockProfile::new(sorted_distances(reference, x));
        let mut sub: Vec<f64> = indices.iter().map(|&j| euclidean(reference.point(j), x)).collect();
        sub.sort_by(f64::total_cmp);
        full.w1_to_coarse(&sub)
    });
    Ok(devs.into_iter().fold(0.0, f64::max))
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Rigidly moved copy of a cloud with a random rotation and shift, for
/// invariance checks.
pub fn random_rigid_copy(cloud: &PointCloud, seed: u64) -> Result<PointCloud> {
    let r = random_rotation(cloud.dim(), child_seed(seed, 0))?;
    let mut rng = rng_from_seed(child_seed(seed, 1));
    let b: Vec<f64> = (0..cloud.dim()).map(|_| rng.gen_range(-10.0..10.0)).collect();
    apply_rigid(cloud, &r, &b)
}
