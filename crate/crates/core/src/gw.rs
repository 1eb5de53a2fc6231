//! Exact discrete optimal transport with uniform marginals, the third lower
//! bound to the Gromov-Wasserstein distance, and the GW objective evaluated at
//! a fixed coupling.

use crate::error::{Error, Result};
use crate::geometry::{DistanceMatrix, DistanceProfile};
use crate::par::{self, Execution};
use crate::wasserstein1d::{self, check_order, lcm, root};

/// Row-sum and column-sum tolerance for couplings returned by the solver.
pub const MARGINAL_TOL: f64 = 1e-9;
/// Marginal violation accepted by [`gw_objective`].
pub const FEASIBILITY_TOL: f64 = 1e-6;

const MAX_UNITS: u128 = 1 << 62;

/// `n x m` transport plan between uniform measures, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    n: usize,
    m: usize,
    gamma: Vec<f64>,
}

impl Coupling {
    /// Wraps a plan. Entries down to `-1e-15` are clamped to zero; anything
    /// more negative is rejected. Marginals are not checked here.
    pub fn new(n: usize, m: usize, mut gamma: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::invalid("coupling needs at least one row and column"));
        }
        if gamma.len() != n * m {
            return Err(Error::mismatch(format!("{} entries for a {n}x{m} coupling", gamma.len())));
        }
        for g in &mut gamma {
            if !g.is_finite() || *g < -1e-15 {
                return Err(Error::invalid("coupling entries must be finite and nonnegative"));
            }
            if *g < 0.0 {
                *g = 0.0;
            }
        }
        Ok(Self { n, m, gamma })
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.gamma[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.gamma[i * self.m..(i + 1) * self.m]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.gamma
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.m];
        for i in 0..self.n {
            for (acc, g) in s.iter_mut().zip(self.row(i)) {
                *acc += g;
            }
        }
        s
    }

    /// Largest absolute deviation of a row sum from `1/n` or a column sum
    /// from `1/m`.
    pub fn marginal_violation(&self) -> f64 {
        let (a, b) = (1.0 / self.n as f64, 1.0 / self.m as f64);
        let rows = self.row_sums().into_iter().map(|s| (s - a).abs());
        let cols = self.col_sums().into_iter().map(|s| (s - b).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }

    /// Linear transport cost `sum_ij cost[i][j] * gamma[i][j]`.
    pub fn cost(&self, cost: &[f64]) -> f64 {
        self.gamma.iter().zip(cost).map(|(g, c)| g * c).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut t = vec![0.0; self.n * self.m];
        for i in 0..self.n {
            for j in 0..self.m {
                t[j * self.n + i] = self.gamma[i * self.m + j];
            }
        }
        Self { n: self.m, m: self.n, gamma: t }
    }
}

/// The independent coupling `gamma[i][j] = 1/(n m)`.
pub fn product_coupling(n: usize, m: usize) -> Result<Coupling> {
    if n == 0 || m == 0 {
        return Err(Error::invalid("coupling needs at least one row and column"));
    }
    Ok(Coupling { n, m, gamma: vec![1.0 / (n as f64 * m as f64); n * m] })
}

/// An optimal plan and its cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Transport {
    pub coupling: Coupling,
    pub value: f64,
}

/// Exact optimal transport between the uniform measures on `n` and `m`
/// points, for a nonnegative row-major cost matrix.
///
/// Integer min-cost flow: with `L = lcm(n, m)` every source supplies `L/n`
/// units and every sink absorbs `L/m`. Successive shortest paths with node
/// potentials keep the flow integral, so the plan is an exact vertex of the
/// transport polytope scaled by `L`.
pub fn solve_discrete_ot(n: usize, m: usize, cost: &[f64]) -> Result<Transport> {
    if n == 0 || m == 0 {
        return Err(Error::invalid("transport needs at least one source and one target"));
    }
    if cost.len() != n * m {
        return Err(Error::mismatch(format!("{} entries for a {n}x{m} cost matrix", cost.len())));
    }
    if cost.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::invalid("transport costs must be finite and nonnegative"));
    }
    let l = lcm(n as u64, m as u64)
        .filter(|l| (*l as u128) * (n.max(m) as u128) <= MAX_UNITS)
        .ok_or_else(|| Error::Overflow(format!("lcm({n}, {m}) too large for integer flow")))?;

    // the search cost is dominated by rows x columns, with columns the
    // narrower side
    let flow = if m <= n {
        min_cost_flow(n, m, cost, l / n as u64, l / m as u64)
    } else {
        let mut t = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                t[j * n + i] = cost[i * m + j];
            }
        }
        let ft = min_cost_flow(m, n, &t, l / m as u64, l / n as u64);
        let mut f = vec![0u64; n * m];
        for j in 0..m {
            for i in 0..n {
                f[i * m + j] = ft[j * n + i];
            }
        }
        f
    };

    let lf = l as f64;
    let gamma: Vec<f64> = flow.iter().map(|&f| f as f64 / lf).collect();
    let value = flow
        .iter()
        .zip(cost)
        .filter(|(f, _)| **f > 0)
        .map(|(&f, c)| f as f64 * c)
        .sum::<f64>()
        / lf;
    Ok(Transport { coupling: Coupling { n, m, gamma }, value })
}

/// Successive shortest augmenting paths on the complete bipartite network.
/// Reduced cost of arc `i -> j` is `c[i][j] - u[i] - v[j]`, nonnegative on
/// every arc and zero on arcs carrying flow.
fn min_cost_flow(n: usize, m: usize, cost: &[f64], supply: u64, demand: u64) -> Vec<u64> {
    let mut flow = vec![0u64; n * m];
    let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut supply_left = vec![supply; n];
    let mut demand_left = vec![demand; m];

    let mut u = vec![0.0f64; n];
    let mut v: Vec<f64> = (0..m)
        .map(|j| (0..n).map(|i| cost[i * m + j]).fold(f64::INFINITY, f64::min))
        .collect();

    let mut dist_row = vec![f64::INFINITY; n];
    let mut dist_col = vec![f64::INFINITY; m];
    let mut done_row = vec![false; n];
    let mut done_col = vec![false; m];
    let mut prev_of_col = vec![usize::MAX; m];
    let mut prev_of_row = vec![usize::MAX; n];
    let mut touched_rows: Vec<usize> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();

    let mut next_source = 0usize;
    loop {
        while next_source < n && supply_left[next_source] == 0 {
            next_source += 1;
        }
        if next_source == n {
            break;
        }
        let s = next_source;

        dist_col.fill(f64::INFINITY);
        done_col.fill(false);
        for &i in &touched_rows {
            dist_row[i] = f64::INFINITY;
            done_row[i] = false;
        }
        touched_rows.clear();

        dist_row[s] = 0.0;
        done_row[s] = true;
        touched_rows.push(s);
        stack.push(s);
        let target = loop {
            while let Some(i) = stack.pop() {
                let di = dist_row[i];
                let row = &cost[i * m..(i + 1) * m];
                for j in 0..m {
                    if done_col[j] {
                        continue;
                    }
                    let rc = (row[j] - u[i] - v[j]).max(0.0);
                    if di + rc < dist_col[j] {
                        dist_col[j] = di + rc;
                        prev_of_col[j] = i;
                    }
                }
            }
            let mut best = usize::MAX;
            let mut bd = f64::INFINITY;
            for j in 0..m {
                if !done_col[j] && dist_col[j] < bd {
                    bd = dist_col[j];
                    best = j;
                }
            }
            debug_assert!(best != usize::MAX, "complete network always has a path");
            done_col[best] = true;
            if demand_left[best] > 0 {
                break best;
            }
            for &i in &col_rows[best] {
                if !done_row[i] {
                    done_row[i] = true;
                    dist_row[i] = bd;
                    prev_of_row[i] = best;
                    touched_rows.push(i);
                    stack.push(i);
                }
            }
        };

        let d_t = dist_col[target];
        for &i in &touched_rows {
            u[i] -= dist_row[i].min(d_t);
        }
        for i in 0..n {
            if !done_row[i] {
                u[i] -= d_t;
            }
        }
        for j in 0..m {
            v[j] += dist_col[j].min(d_t);
        }

        // bottleneck along target <- row <- col <- ... <- s
        let mut delta = supply_left[s].min(demand_left[target]);
        let mut j = target;
        loop {
            let i = prev_of_col[j];
            if i == s {
                break;
            }
            let jb = prev_of_row[i];
            delta = delta.min(flow[i * m + jb]);
            j = jb;
        }
        let mut j = target;
        loop {
            let i = prev_of_col[j];
            let f = &mut flow[i * m + j];
            if *f == 0 {
                col_rows[j].push(i);
            }
            *f += delta;
            if i == s {
                break;
            }
            let jb = prev_of_row[i];
            let fb = &mut flow[i * m + jb];
            *fb -= delta;
            if *fb == 0 {
                col_rows[jb].retain(|&r| r != i);
            }
            j = jb;
        }
        supply_left[s] -= delta;
        demand_left[target] -= delta;
    }
    flow
}

/// Row-major matrix of `W_p^p` between two families of profiles.
pub fn profile_cost_matrix(
    source: &[DistanceProfile],
    target: &[DistanceProfile],
    order: f64,
    exec: Execution,
) -> Result<Vec<f64>> {
    check_order(order)?;
    let m = target.len();
    let mut cost = vec![0.0; source.len() * m];
    if m == 0 {
        return Ok(cost);
    }
    par::fill_chunks(&mut cost, m, exec, |i, row| {
        for (slot, q) in row.iter_mut().zip(target) {
            *slot = wasserstein1d::pow_unchecked(&source[i], q, order);
        }
    });
    Ok(cost)
}

/// Value of the third lower bound together with an optimal coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct Tlb {
    pub value: f64,
    pub coupling: Coupling,
}

/// Third lower bound: the `order`-th root of the optimal transport cost
/// between the two point sets when moving point `i` to point `j` costs
/// `W_p^p` between their distance profiles.
pub fn tlb(source: &DistanceMatrix, target: &DistanceMatrix, order: f64) -> Result<Tlb> {
    tlb_with(source, target, order, Execution::default())
}

pub fn tlb_with(
    source: &DistanceMatrix,
    target: &DistanceMatrix,
    order: f64,
    exec: Execution,
) -> Result<Tlb> {
    check_order(order)?;
    let px = source.profiles_with(exec);
    let py = target.profiles_with(exec);
    let cost = profile_cost_matrix(&px, &py, order, exec)?;
    let t = solve_discrete_ot(px.len(), py.len(), &cost)?;
    Ok(Tlb { value: root(t.value.max(0.0), order), coupling: t.coupling })
}

/// `(sum |dX(i,k) - dY(j,l)|^p g[i][j] g[k][l])^(1/p)`, by direct summation over
/// the support of the coupling.
pub fn gw_objective(
    source: &DistanceMatrix,
    target: &DistanceMatrix,
    coupling: &Coupling,
    order: f64,
) -> Result<f64> {
    check_order(order)?;
    if coupling.rows() != source.len() || coupling.cols() != target.len() {
        return Err(Error::mismatch(format!(
            "{}x{} coupling for {} source and {} target points",
            coupling.rows(),
            coupling.cols(),
            source.len(),
            target.len()
        )));
    }
    let violation = coupling.marginal_violation();
    if violation > FEASIBILITY_TOL {
        return Err(Error::InfeasibleCoupling(format!("marginals off by {violation:e}")));
    }
    let support: Vec<(usize, usize, f64)> = (0..coupling.rows())
        .flat_map(|i| (0..coupling.cols()).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, coupling.get(i, j)))
        .filter(|(_, _, g)| *g > 0.0)
        .collect();
    let mut total = 0.0;
    for &(i, j, g) in &support {
        let (rx, ry) = (source.row(i), target.row(j));
        let mut inner = 0.0;
        for &(k, l, h) in &support {
            let diff = (rx[k] - ry[l]).abs();
            let c = if order == 1.0 {
                diff
            } else if order == 2.0 {
                diff * diff
            } else {
                diff.powf(order)
            };
            inner += c * h;
        }
        total += inner * g;
    }
    Ok(root(total, order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::solve_lap;
    use crate::geometry::{pairwise_distances, PointCloud};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cost(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<f64> {
        (0..n * m).map(|_| rng.gen_range(0.0..5.0)).collect()
    }

    #[test]
    fn zero_diagonal() {
        let n = 4;
        let cost: Vec<f64> = (0..n * n).map(|k| if k % (n + 1) == 0 { 0.0 } else { 1.0 }).collect();
        let t = solve_discrete_ot(n, n, &cost).unwrap();
        assert_eq!(t.value, 0.0);
        for i in 0..n {
            assert_eq!(t.coupling.get(i, i), 0.25);
        }
    }

    #[test]
    fn forced_marginals() {
        let t = solve_discrete_ot(1, 2, &[3.0, 5.0]).unwrap();
        assert_eq!(t.coupling.as_flat(), &[0.5, 0.5]);
        assert_eq!(t.value, 4.0);
    }

    #[test]
    fn equals_assignment_when_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let n = rng.gen_range(1..=12);
            let cost = random_cost(&mut rng, n, n);
            let ot = solve_discrete_ot(n, n, &cost).unwrap();
            let lap = solve_lap(n, &cost).unwrap();
            assert!((ot.value - lap.total_cost / n as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn rectangular_marginals_and_orientation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (n, m) in [(3, 7), (7, 3), (6, 4), (1, 5), (9, 1)] {
            let cost = random_cost(&mut rng, n, m);
            let a = solve_discrete_ot(n, m, &cost).unwrap();
            assert!(a.coupling.marginal_violation() < MARGINAL_TOL);
            assert!((a.coupling.cost(&cost) - a.value).abs() < 1e-12);
            let mut t = vec![0.0; n * m];
            for i in 0..n {
                for j in 0..m {
                    t[j * n + i] = cost[i * m + j];
                }
            }
            let b = solve_discrete_ot(m, n, &t).unwrap();
            assert!((a.value - b.value).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_negative_costs() {
        assert!(solve_discrete_ot(1, 1, &[-1.0]).is_err());
        assert!(solve_discrete_ot(1, 2, &[1.0]).is_err());
    }

    #[test]
    fn product_coupling_sums() {
        let c = product_coupling(2, 3).unwrap();
        assert!(c.as_flat().iter().all(|g| (g - 1.0 / 6.0).abs() < 1e-17));
        assert_eq!(product_coupling(1, 1).unwrap().as_flat(), &[1.0]);
        assert!(c.marginal_violation() < 1e-15);
    }

    #[test]
    fn identical_inputs_have_zero_bound_and_objective() {
        let x = PointCloud::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let d = pairwise_distances(&x);
        for order in [1.0, 2.0] {
            let t = tlb(&d, &d, order).unwrap();
            assert_eq!(t.value, 0.0);
            let diag = Coupling::new(3, 3, (0..9).map(|k| if k % 4 == 0 { 1.0 / 3.0 } else { 0.0 }).collect())
                .unwrap();
            assert_eq!(gw_objective(&d, &d, &diag, order).unwrap(), 0.0);
        }
    }

    #[test]
    fn objective_is_above_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let (n, m) = (rng.gen_range(2..=8), rng.gen_range(2..=8));
            let x = PointCloud::from_flat(2, (0..2 * n).map(|_| rng.gen_range(0.0..1.0)).collect())
                .unwrap();
            let y = PointCloud::from_flat(2, (0..2 * m).map(|_| rng.gen_range(0.0..1.0)).collect())
                .unwrap();
            let (dx, dy) = (pairwise_distances(&x), pairwise_distances(&y));
            let t = tlb(&dx, &dy, 1.0).unwrap();
            let prod = product_coupling(n, m).unwrap();
            assert!(t.value <= gw_objective(&dx, &dy, &t.coupling, 1.0).unwrap() + 1e-9);
            assert!(t.value <= gw_objective(&dx, &dy, &prod, 1.0).unwrap() + 1e-9);
        }
    }

    #[test]
    fn infeasible_coupling_is_rejected() {
        let x = pairwise_distances(&PointCloud::new(vec![vec![0.0], vec![1.0]]).unwrap());
        let bad = Coupling::new(2, 2, vec![0.5, 0.0, 0.5, 0.0]).unwrap();
        assert!(matches!(gw_objective(&x, &x, &bad, 1.0), Err(Error::InfeasibleCoupling(_))));
        assert!(Coupling::new(1, 1, vec![-0.1]).is_err());
        assert_eq!(Coupling::new(1, 1, vec![-1e-16]).unwrap().as_flat(), &[0.0]);
    }
}
