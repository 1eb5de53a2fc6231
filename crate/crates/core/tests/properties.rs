use itertools::Itertools;
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use proptest::prelude::*;

use profilematch::assignment::{assign_distance_matrices, solve_lap, Permutation};
use profilematch::geometry::{DistanceMatrix, DistanceProfile, PointCloud};
use profilematch::gw::{gw_objective, product_coupling, solve_discrete_ot, tlb, tlb_with};
use profilematch::matching::{discrepancy_matrix, discrepancy_matrix_with, match_discrepancies, match_profiles};
use profilematch::par::Execution;
use profilematch::theory::{lemma2_sides, random_rigid_copy};
use profilematch::wasserstein1d::wasserstein_p;

fn cloud(max_n: usize, max_d: usize) -> impl Strategy<Value = PointCloud> {
    (2..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
        prop::collection::vec(-5.0f64..5.0, n * d).prop_map(move |c| PointCloud::from_flat(d, c).unwrap())
    })
}

fn cloud_pair(max_n: usize, max_d: usize) -> impl Strategy<Value = (PointCloud, PointCloud)> {
    (2..=max_n, 2..=max_n, 1..=max_d).prop_flat_map(|(n, m, d)| {
        (prop::collection::vec(-5.0f64..5.0, n * d), prop::collection::vec(-5.0f64..5.0, m * d))
            .prop_map(move |(a, b)| (PointCloud::from_flat(d, a).unwrap(), PointCloud::from_flat(d, b).unwrap()))
    })
}

fn weights(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, k).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    })
}

fn costs(rows: usize, cols: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..10.0, rows * cols)
}

fn lp_transport(n: usize, m: usize, cost: &[f64]) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = cost.iter().map(|c| lp.add_var(*c, (0.0, f64::INFINITY))).collect();
    for i in 0..n {
        let row: Vec<_> = (0..m).map(|j| (vars[i * m + j], 1.0)).collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, 1.0 / n as f64);
    }
    for j in 0..m {
        let col: Vec<_> = (0..n).map(|i| (vars[i * m + j], 1.0)).collect();
        lp.add_constraint(col.as_slice(), ComparisonOp::Eq, 1.0 / m as f64);
    }
    lp.solve().unwrap().objective()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn profiles_are_one_lipschitz(x in cloud(25, 5)) {
        let dm = DistanceMatrix::from_cloud(&x);
        let ps = dm.profiles();
        for i in 0..x.len() {
            for j in 0..x.len() {
                prop_assert!(wasserstein_p(&ps[i], &ps[j], 1.0).unwrap() <= dm.get(i, j) + 1e-9);
            }
        }
    }

    #[test]
    fn discrepancies_ignore_rigid_motions((x, y) in cloud_pair(30, 6), seed in any::<u64>()) {
        let y2 = random_rigid_copy(&y, seed).unwrap();
        let dx = DistanceMatrix::from_cloud(&x);
        let a = discrepancy_matrix(&dx, &DistanceMatrix::from_cloud(&y), 2.0).unwrap();
        let b = discrepancy_matrix(&dx, &DistanceMatrix::from_cloud(&y2), 2.0).unwrap();
        for (u, v) in a.as_flat().iter().zip(b.as_flat()) {
            prop_assert!((u - v).abs() <= 1e-9);
        }
    }

    #[test]
    fn relabelling_the_target_relabels_the_map(x in cloud(20, 3), seed in any::<u64>()) {
        let n = x.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let y = x.relabeled(&order).unwrap();
        let dx = DistanceMatrix::from_cloud(&x);
        let dy = DistanceMatrix::from_cloud(&y);
        let self_d = discrepancy_matrix(&dx, &dx, 1.0).unwrap();
        // ties between profiles make the map ambiguous
        prop_assume!((0..n).all(|i| (0..n).all(|j| i == j || self_d.get(i, j) > 1e-9)));
        let b = match_discrepancies(&discrepancy_matrix(&dx, &dy, 1.0).unwrap(), f64::INFINITY);
        prop_assert!(b.discrepancy.iter().all(|d| *d == 0.0));
        for (i, &j) in b.pi.iter().enumerate() {
            prop_assert_eq!(j, order[i]);
            prop_assert_eq!(y.point(j), x.point(i));
        }
    }

    #[test]
    fn shared_support_bound(
        (z, p, q) in (1usize..8).prop_flat_map(|t| (prop::collection::vec(0.0f64..4.0, t), weights(t), weights(t)))
    ) {
        let mut z = z;
        z.sort_by(f64::total_cmp);
        let (lhs, rhs) = lemma2_sides(&z, &p, &q).unwrap();
        prop_assert!(lhs <= rhs + 1e-9);
    }

    #[test]
    fn lap_matches_enumeration((n, c) in (1usize..=6).prop_flat_map(|n| (Just(n), costs(n, n)))) {
        let best = (0..n)
            .permutations(n)
            .map(|p| p.iter().enumerate().map(|(i, &j)| c[i * n + j]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let a = solve_lap(n, &c).unwrap();
        prop_assert!((a.total_cost - best).abs() <= 1e-9);
        let recomputed: f64 = a.permutation.as_slice().iter().enumerate().map(|(i, &j)| c[i * n + j]).sum();
        prop_assert!((recomputed - a.total_cost).abs() <= 1e-9);
    }

    #[test]
    fn transport_matches_lp(
        (n, m, c) in (1usize..=5, 1usize..=7).prop_flat_map(|(n, m)| (Just(n), Just(m), costs(n, m)))
    ) {
        let t = solve_discrete_ot(n, m, &c).unwrap();
        prop_assert!((t.value - lp_transport(n, m, &c)).abs() <= 1e-9);
        prop_assert!(t.coupling.marginal_violation() <= 1e-12);
        prop_assert!((t.coupling.cost(&c) - t.value).abs() <= 1e-9);
    }

    #[test]
    fn tlb_is_symmetric_and_below_gw((x, y) in cloud_pair(10, 3), order in 1.0f64..3.0) {
        let dx = DistanceMatrix::from_cloud(&x);
        let dy = DistanceMatrix::from_cloud(&y);
        let a = tlb(&dx, &dy, order).unwrap();
        let b = tlb(&dy, &dx, order).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-9);
        for c in [a.coupling.clone(), product_coupling(x.len(), y.len()).unwrap()] {
            prop_assert!(a.value <= gw_objective(&dx, &dy, &c, order).unwrap() + 1e-9);
        }
    }

    #[test]
    fn equal_size_tlb_is_an_assignment(x in cloud(12, 3), seed in any::<u64>()) {
        let y = random_rigid_copy(&x, seed).unwrap();
        let dx = DistanceMatrix::from_cloud(&x);
        let dy = DistanceMatrix::from_cloud(&y);
        let t = tlb(&dx, &dy, 1.0).unwrap();
        let a = assign_distance_matrices(&dx, &dy, Execution::Sequential).unwrap();
        prop_assert!((t.value - a.total_cost / x.len() as f64).abs() <= 1e-9);
        prop_assert!(t.value <= 1e-9);
    }

    #[test]
    fn execution_mode_does_not_change_results((x, y) in cloud_pair(40, 3)) {
        let dx = DistanceMatrix::from_cloud_with(&x, Execution::Parallel);
        let dy = DistanceMatrix::from_cloud_with(&y, Execution::Sequential);
        prop_assert_eq!(&dx, &DistanceMatrix::from_cloud_with(&x, Execution::Sequential));
        let seq = discrepancy_matrix_with(&dx, &dy, 1.0, Execution::Sequential).unwrap();
        let par = discrepancy_matrix_with(&dx, &dy, 1.0, Execution::Parallel).unwrap();
        prop_assert_eq!(&seq, &par);
        let full = match_discrepancies(&seq, 0.5);
        let pruned = match_profiles(&dx.profiles(), &dy.profiles(), 1.0, 0.5, Execution::Parallel).unwrap();
        prop_assert_eq!(&full, &pruned);
        let ts = tlb_with(&dx, &dy, 2.0, Execution::Sequential).unwrap();
        let tp = tlb_with(&dx, &dy, 2.0, Execution::Parallel).unwrap();
        prop_assert_eq!(ts, tp);
    }
}

#[test]
fn identical_clouds_match_to_themselves() {
    let x = PointCloud::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 3.0]]).unwrap();
    let dx = DistanceMatrix::from_cloud(&x);
    let res = match_discrepancies(&discrepancy_matrix(&dx, &dx, 1.0).unwrap(), f64::INFINITY);
    assert_eq!(res.pi, vec![0, 1, 2, 3]);
    assert!(res.discrepancy.iter().all(|d| *d == 0.0));
    let a = assign_distance_matrices(&dx, &dx, Execution::Sequential).unwrap();
    assert_eq!(a.permutation, Permutation::identity(4));
    assert_eq!(a.total_cost, 0.0);
}

#[test]
fn profiles_of_an_equilateral_triangle_coincide() {
    let x = PointCloud::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 3f64.sqrt() / 2.0]]).unwrap();
    let ps = DistanceMatrix::from_cloud(&x).profiles();
    for p in &ps[1..] {
        assert!(wasserstein_p(&ps[0], p, 1.0).unwrap() < 1e-12);
    }
    let q = DistanceProfile::uniform(vec![0.0, 1.0, 1.0]).unwrap();
    assert!(wasserstein_p(&ps[0], &q, 2.0).unwrap() < 1e-12);
}
