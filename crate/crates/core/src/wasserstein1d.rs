//! Exact Wasserstein-p distances between discrete measures on the line.
//!
//! On the real line the optimal coupling is the quantile (monotone) coupling,
//! so `W_p^p(P, Q) = ∫_0^1 |F_P^{-1}(u) - F_Q^{-1}(u)|^p du`. Both quantile
//! functions are step functions; a two-cursor sweep over the sorted atoms
//! visits every breakpoint once and integrates each constant piece exactly.

use crate::error::{Error, Result};
use crate::geometry::DistanceProfile;

/// `W_order(p, q)`.
pub fn wasserstein_p(p: &DistanceProfile, q: &DistanceProfile, order: f64) -> Result<f64> {
    let pow = wasserstein_p_pow(p, q, order)?;
    Ok(root(pow, order))
}

/// `W_order(p, q)^order`, without the final root.
pub fn wasserstein_p_pow(p: &DistanceProfile, q: &DistanceProfile, order: f64) -> Result<f64> {
    check_order(order)?;
    Ok(pow_unchecked(p, q, order))
}

pub(crate) fn check_order(order: f64) -> Result<()> {
    if order.is_finite() && order >= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("Wasserstein order must be a finite real >= 1, got {order}")))
    }
}

#[inline]
pub(crate) fn root(pow: f64, order: f64) -> f64 {
    if order == 1.0 {
        pow
    } else if order == 2.0 {
        pow.sqrt()
    } else {
        pow.powf(1.0 / order)
    }
}

#[inline(always)]
fn cost(d: f64, order: f64) -> f64 {
    if order == 1.0 {
        d.abs()
    } else if order == 2.0 {
        d * d
    } else {
        d.abs().powf(order)
    }
}

pub(crate) fn pow_unchecked(p: &DistanceProfile, q: &DistanceProfile, order: f64) -> f64 {
    let (a, b) = (p.values(), q.values());
    match (p.is_uniform(), q.is_uniform()) {
        (true, true) if a.len() == b.len() => {
            equal_uniform_sum(a, b, order, f64::INFINITY).unwrap_or(f64::INFINITY)
                / a.len() as f64
        }
        (true, true) => uniform_sweep(a, b, order)
            .unwrap_or_else(|| weighted_sweep(a, &p.weights(), b, &q.weights(), order)),
        _ => weighted_sweep(a, &p.weights(), b, &q.weights(), order),
    }
}

const LANES: usize = 8;
const CHECK_EVERY: usize = 64;

/// `Σ_k |a_k - b_k|^order` for equal-length sorted slices (the quantile
/// coupling of two uniform measures with the same number of atoms).
///
/// The sum is accumulated in fixed lanes so the result does not depend on how
/// the loop is compiled. Every [`CHECK_EVERY`] atoms the running total is
/// compared with `bound`; once it exceeds `bound` the final total must too
/// (all terms are nonnegative), and `None` is returned.
pub(crate) fn equal_uniform_sum(a: &[f64], b: &[f64], order: f64, bound: f64) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let blocks = a.len() / CHECK_EVERY;
    for blk in 0..blocks {
        let lo = blk * CHECK_EVERY;
        let (xa, xb) = (&a[lo..lo + CHECK_EVERY], &b[lo..lo + CHECK_EVERY]);
        for (ca, cb) in xa.chunks_exact(LANES).zip(xb.chunks_exact(LANES)) {
            for l in 0..LANES {
                acc[l] += cost(ca[l] - cb[l], order);
            }
        }
        if lane_total(&acc) > bound {
            return None;
        }
    }
    let tail = blocks * CHECK_EVERY;
    for (k, (x, y)) in a[tail..].iter().zip(&b[tail..]).enumerate() {
        acc[k % LANES] += cost(x - y, order);
    }
    let total = lane_total(&acc);
    (total <= bound).then_some(total)
}

#[inline(always)]
fn lane_total(acc: &[f64; LANES]) -> f64 {
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// Sweep for two uniform measures of different sizes. Breakpoints are the
/// multiples of `1/na` and `1/nb`; on the common grid of `1/lcm(na, nb)` they
/// are integers, so piece lengths are exact. Returns `None` if the grid does
/// not fit in 64 bits.
fn uniform_sweep(a: &[f64], b: &[f64], order: f64) -> Option<f64> {
    let (na, nb) = (a.len() as u64, b.len() as u64);
    let l = lcm(na, nb)?;
    let (sa, sb) = (l / na, l / nb);
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ea, mut eb) = (sa, sb);
    let mut u = 0u64;
    let mut acc = 0.0;
    while i < a.len() && j < b.len() {
        let next = ea.min(eb);
        acc += (next - u) as f64 * cost(a[i] - b[j], order);
        u = next;
        if ea == next {
            i += 1;
            ea += sa;
        }
        if eb == next {
            j += 1;
            eb += sb;
        }
    }
    Some(acc / l as f64)
}

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub(crate) fn lcm(a: u64, b: u64) -> Option<u64> {
    (a / gcd(a, b)).checked_mul(b)
}

/// General sweep over cumulative weights. A tie in cumulative weight advances
/// both cursors; zero-length pieces contribute nothing.
fn weighted_sweep(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64], order: f64) -> f64 {
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ca, mut cb) = (wa[0], wb[0]);
    let mut u = 0.0;
    let mut acc = 0.0;
    loop {
        let next = ca.min(cb);
        let len = next - u;
        if len > 0.0 {
            acc += len * cost(a[i] - b[j], order);
        }
        u = next;
        let (adv_a, adv_b) = (ca <= cb, cb <= ca);
        if adv_a {
            i += 1;
            if i == a.len() {
                break;
            }
            ca += wa[i];
        }
        if adv_b {
            j += 1;
            if j == b.len() {
                break;
            }
            cb += wb[j];
        }
    }
    acc
}
