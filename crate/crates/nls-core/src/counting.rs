//! Lattice counting: divisor counts, the cubic-resonance count in closed form
//! against a brute-force oracle, constrained-tuple counts along a diagram
//! tree, and empirical scaling tables for the resonant coefficient sums.

use crate::forest::{generate_forest_with_cap, DiagramTree, ForestError};
use crate::lattice::{bracket, linear_numer, quadratic_numer};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CountError {
    #[error("divisor_count requires n ≥ 1, got {0}")]
    NonPositive(i64),
    #[error("μ-vector length {0} does not match tree depth {1}")]
    MuLength(usize, usize),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("ℓ must exceed 1 for the weighted norms, got {0}")]
    EllRange(f64),
    #[error("scaling_report supports d ∈ {{2, 3}}, got {0}")]
    OrderRange(usize),
}

/// Query for the cubic resonance count: S₃ target μ and quadratic target μ′,
/// in the scaled units where (K₁−K₂)(K₂−K₃) = μ′ − μ² on the solution set.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CountQuery {
    pub mu: i64,
    pub mu_prime: i64,
}

/// Number of positive divisors, via trial-division factorization.
pub fn divisor_count(n: i64) -> Result<u64, CountError> {
    if n < 1 {
        return Err(CountError::NonPositive(n));
    }
    let mut n = n as u64;
    let mut count = 1u64;
    let mut p = 2u64;
    while p * p <= n {
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            count *= e + 1;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        count *= 2;
    }
    Ok(count)
}

/// Direct-enumeration oracle for `divisor_count`.
pub fn divisor_count_naive(n: i64) -> Result<u64, CountError> {
    if n < 1 {
        return Err(CountError::NonPositive(n));
    }
    let n = n as u64;
    let mut count = 0;
    let mut d = 1;
    while d * d <= n {
        if n % d == 0 {
            count += if d * d == n { 1 } else { 2 };
        }
        d += 1;
    }
    Ok(count)
}

/// Divisor counts of 1..=n in one sieve pass; oracle side of the bulk sweep.
pub fn divisor_counts_upto(n: usize) -> Vec<u32> {
    let mut counts = vec![0u32; n + 1];
    for d in 1..=n {
        for m in (d..=n).step_by(d) {
            counts[m] += 1;
        }
    }
    counts
}

/// Number of triples (k₁,k₂,k₃) with k₁≠k₂, k₂≠k₃, k₁−k₂+k₃ = μ and
/// (k₁−k₂)(k₂−k₃) = μ′−μ², i.e. the number of ordered nonzero factor pairs of
/// μ′−μ².
pub fn count_cubic_resonances(q: CountQuery) -> u64 {
    let n = q.mu_prime as i128 - (q.mu as i128) * (q.mu as i128);
    if n == 0 {
        return 0;
    }
    let mut n_abs = n.unsigned_abs() as u64;
    // ordered nonzero factor pairs with both signs: 2·d(|n|)
    let mut d = 1u64;
    let mut p = 2u64;
    while p * p <= n_abs {
        if n_abs % p == 0 {
            let mut e = 0;
            while n_abs % p == 0 {
                n_abs /= p;
                e += 1;
            }
            d *= e + 1;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n_abs > 1 {
        d *= 2;
    }
    2 * d
}

/// Exhaustive oracle for `count_cubic_resonances` over the provably
/// sufficient box |k_i| ≤ |μ| + |μ′−μ²| + 2.
pub fn count_cubic_resonances_brute(q: CountQuery) -> u64 {
    let n = q.mu_prime as i128 - (q.mu as i128) * (q.mu as i128);
    let b = q.mu.unsigned_abs() as i128 + n.unsigned_abs() as i128 + 2;
    let range: Vec<i128> = (-b..=b).collect();
    range
        .par_iter()
        .map(|&k1| {
            let mut local = 0u64;
            for k2 in -b..=b {
                let k3 = q.mu as i128 - k1 + k2;
                if k3.abs() > b || k1 == k2 || k2 == k3 {
                    continue;
                }
                if (k1 - k2) * (k2 - k3) == n {
                    local += 1;
                }
            }
            local
        })
        .sum()
}

/// Brute count of (2d+1)-tuples with target K = 0 on the resonance surface,
/// satisfying every 𝒜 gate of `tree` and hitting |Ω| = μ_k at each internal
/// level, inside |k_i| ≤ box. Counts are translation invariant in K, so K = 0
/// is a normalization, not a restriction.
pub fn count_constrained_tuples(
    tree: &DiagramTree,
    mu: &[i64],
    box_k: i64,
) -> Result<u64, CountError> {
    let depth = tree.depth();
    if mu.len() != depth {
        return Err(CountError::MuLength(mu.len(), depth));
    }
    let arity = tree.bottom_len();
    let first: Vec<i64> = (-box_k..=box_k).collect();
    let total = first
        .par_iter()
        .map(|&k1| {
            let mut numers = vec![0i64; arity];
            numers[0] = k1;
            let mut count = 0u64;
            // odometer over the middle entries; the last is fixed by S = 0
            let free = arity - 1;
            for v in &mut numers[1..free] {
                *v = -box_k;
            }
            loop {
                let partial = linear_numer(&numers[..free], 0);
                // position `arity` is odd, so the last entry enters with +
                let last = -partial;
                if last.abs() <= box_k {
                    numers[free] = last;
                    if quadratic_numer(&numers, 0) == 0
                        && tree.all_a_constraints(&numers, 0)
                        && (1..=depth)
                            .all(|k| tree.omega_numer(k, &numers, 0).abs() == mu[k - 1])
                    {
                        count += 1;
                    }
                }
                let mut i = free;
                loop {
                    if i == 1 {
                        return count;
                    }
                    i -= 1;
                    if numers[i] < box_k {
                        numers[i] += 1;
                        for v in &mut numers[i + 1..free] {
                            *v = -box_k;
                        }
                        break;
                    }
                }
            }
        })
        .sum();
    Ok(total)
}

/// One row of the scaling table.
#[derive(Clone, Debug, Serialize)]
pub struct ScalingRow {
    pub l: i64,
    pub sum_value: f64,
    pub bound_exponent: f64,
    pub fitted_slope: f64,
}

/// For random unit-X^ℓ states at each L, evaluates the constrained resonant
/// coefficient sum sup_K ⟨K⟩^ℓ |Σ_T Σ_{𝓡∩𝒜(T)} d_{K₁}⋯d_{K_{2d+1}}/|Ω⋯Ω||
/// in physical units and fits the log-log slope against the predicted
/// L^{2(d−1)} growth.
pub fn scaling_report(
    d: usize,
    l_list: &[i64],
    ell: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<ScalingRow>, CountError> {
    if ell <= 1.0 {
        return Err(CountError::EllRange(ell));
    }
    if !(2..=3).contains(&d) {
        return Err(CountError::OrderRange(d));
    }
    let forest = generate_forest_with_cap(d - 1, 4).map_err(CountError::Forest)?;
    let mut rows = Vec::new();
    for (li, &l) in l_list.iter().enumerate() {
        let mut mean = 0.0;
        for trial in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed ^ (li as u64) << 32 ^ trial as u64,
            );
            let amps = random_unit_state(l, ell, &mut rng);
            mean += resonant_sum(&forest.trees, &amps, l, d, ell) / trials as f64;
        }
        rows.push(ScalingRow {
            l,
            sum_value: mean,
            bound_exponent: 2.0 * (d as f64 - 1.0),
            fitted_slope: 0.0,
        });
    }
    let slope = fit_slope(
        &rows.iter().map(|r| (r.l as f64).ln()).collect::<Vec<_>>(),
        &rows
            .iter()
            .map(|r| r.sum_value.max(f64::MIN_POSITIVE).ln())
            .collect::<Vec<_>>(),
    );
    for r in &mut rows {
        r.fitted_slope = slope;
    }
    Ok(rows)
}

/// Random magnitudes |d_{k/L}| with sup_K ⟨K⟩^ℓ |d_K| = 1, indexed k + L.
fn random_unit_state(l: i64, ell: f64, rng: &mut impl Rng) -> Vec<Complex64> {
    let mut amps: Vec<Complex64> = (-l..=l)
        .map(|k| {
            let r = rng.gen_range(0.1..1.0) / bracket(k, l).powf(ell);
            Complex64::from_polar(r, rng.gen_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let sup = amps
        .iter()
        .zip(-l..=l)
        .map(|(a, k)| a.norm() * bracket(k, l).powf(ell))
        .fold(0.0f64, f64::max);
    for a in &mut amps {
        *a /= sup;
    }
    amps
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

/// Σ over the in-box resonance surface of the gated |coefficient| against the
/// state's magnitudes, in physical units (× L^{2(d−1)} for the Ω scalings).
fn resonant_sum(trees: &[DiagramTree], amps: &[Complex64], l: i64, d: usize, ell: f64) -> f64 {
    let arity = 2 * d + 1;
    let scale = (l as f64).powi(2 * (d as i32 - 1));
    let first: Vec<i64> = (-l..=l).collect();
    // per-(tree, external-mode) buckets: the bound fixes one tree and is a
    // sup over K, not a sum
    let width = (2 * l + 1) as usize;
    let buckets = first
        .par_iter()
        .map(|&k1| {
            let mut numers = vec![0i64; arity];
            numers[0] = k1;
            let free = arity - 2; // the last two entries are solved for
            for v in &mut numers[1..free] {
                *v = -l;
            }
            let mut local = vec![Complex64::default(); trees.len() * width];
            loop {
                sum_solved_tail(trees, amps, l, &mut numers, free, scale, &mut local);
                let mut i = free;
                loop {
                    if i == 1 {
                        return local;
                    }
                    i -= 1;
                    if numers[i] < l {
                        numers[i] += 1;
                        for v in &mut numers[i + 1..free] {
                            *v = -l;
                        }
                        break;
                    }
                }
            }
        })
        .reduce(
            || vec![Complex64::default(); trees.len() * width],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                a
            },
        );
    buckets
        .chunks(width)
        .flat_map(|chunk| chunk.iter().zip(-l..=l))
        .map(|(sum, k)| bracket(k, l).powf(ell) * sum.norm())
        .fold(0.0f64, f64::max)
}

/// With entries 0..free fixed, solves S = 0, Ω = 0 for the last entry and the
/// target and accumulates the gated coefficient magnitudes.
fn sum_solved_tail(
    trees: &[DiagramTree],
    amps: &[Complex64],
    l: i64,
    numers: &mut Vec<i64>,
    free: usize,
    scale: f64,
    acc: &mut [Complex64],
) {
    let arity = numers.len();
    for klast in -l..=l {
        numers[free] = klast;
        // S: prefix − K_{last}... final entry enters with +, so
        // k_{2d+1} − K = −P and k² − K² = −Q with P, Q the prefix forms
        let p = linear_numer(&numers[..arity - 1], 0);
        let q = quadratic_numer(&numers[..arity - 1], 0);
        let (k_end, target) = if p != 0 {
            if q % p != 0 || (q / p + p) % 2 != 0 {
                continue;
            }
            let target = (q / p + p) / 2;
            (target - p, target)
        } else if q == 0 {
            // degenerate line: K = k_{2d+1}; handled by the inner loop below
            for k_end in -l..=l {
                numers[arity - 1] = k_end;
                add_point(trees, amps, l, numers, k_end, scale, acc);
            }
            continue;
        } else {
            continue;
        };
        if k_end.abs() > l || target.abs() > l {
            continue;
        }
        numers[arity - 1] = k_end;
        add_point(trees, amps, l, numers, target, scale, acc);
    }
}

fn add_point(
    trees: &[DiagramTree],
    amps: &[Complex64],
    l: i64,
    numers: &[i64],
    target: i64,
    scale: f64,
    acc: &mut [Complex64],
) {
    debug_assert_eq!(linear_numer(numers, target), 0);
    debug_assert_eq!(quadratic_numer(numers, target), 0);
    let idx = |k: i64| (k + l) as usize;
    let mut mono = Complex64::new(1.0, 0.0);
    for &k in numers {
        mono *= amps[idx(k)];
    }
    if mono.norm_sqr() == 0.0 {
        return;
    }
    let width = 2 * l as usize + 1;
    for (ti, tree) in trees.iter().enumerate() {
        let mut denom = 1i64;
        let mut live = true;
        for k in 0..tree.depth() {
            if !tree.a_constraint(k, numers, target) {
                live = false;
                break;
            }
            denom *= tree.omega_numer(k + 1, numers, target);
        }
        if live {
            acc[ti * width + idx(target)] += scale / denom.abs() as f64 * mono;
        }
    }
}
