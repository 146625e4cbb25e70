//! Normal-form coefficients H^d, G^d: the contraction recurrences, the closed
//! tree formulas, the vanishing-theorem verifier, the partition-chain sums, and
//! the quintic main-term closed form.
//!
//! All exact values are computed in scaled numerator units (frequencies as the
//! integers k rather than k/L), in which every Ω is an integer. A coefficient
//! of order d is homogeneous of degree −(d−1) in Ω, so its physical value is
//! `value · L^{2(d−1)} · (2π)^{two_pi_power}`; both rescalings are tracked, not
//! baked in.

use crate::forest::{generate_forest_with_cap, generate_g_forest, DiagramTree, ForestError};
use crate::lattice::{linear_numer, quadratic_numer, ExactRational, ModeTuple};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

/// Exact coefficient value with its symbolic 2π exponent. `killed` means every
/// indicator in the defining formula was 0.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct CoefficientValue {
    pub value: ExactRational,
    pub two_pi_power: i64,
    pub killed: bool,
}

impl CoefficientValue {
    fn killed(order: usize) -> Self {
        CoefficientValue {
            value: ExactRational::zero(),
            two_pi_power: -(order as i64 - 1),
            killed: true,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoeffError {
    #[error("live indicator with zero denominator at {context}; tuple {numers:?} -> {target}")]
    LiveIndicatorZeroDenominator {
        context: &'static str,
        numers: Vec<i64>,
        target: i64,
    },
    #[error("order {0} outside supported range {1}..={2}")]
    OrderRange(usize, usize, usize),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("invalid partition: {0}")]
    BadPartition(String),
    #[error("degenerate input: un-hatted difference l_{0} = 0 in the closed form")]
    DegenerateDifference(usize),
    #[error("zero Ω at an intermediate partition of a chain (tuple not in the constrained set)")]
    ChainZeroOmega,
}

fn inv(n: i64) -> ExactRational {
    ExactRational::new(BigInt::one(), BigInt::from(n))
}

/// Cache for the contraction recurrences, keyed by (kind, order, tuple, K).
#[derive(Default)]
pub struct CoeffCache {
    map: HashMap<(u8, usize, Vec<i64>, i64), CoefficientValue>,
}

impl CoeffCache {
    pub fn new() -> Self {
        Self::default()
    }
    pub fn len(&self) -> usize {
        self.map.len()
    }
    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// H² by the three-term formula with indicator sets A₁, A₂, A₃.
///
/// Intended for tuples with vanishing linear form (the only place coefficients
/// are consumed); a live indicator with a vanishing denominator is reported as
/// an inconsistency instead of being skipped.
pub fn h2_initial(t: &ModeTuple) -> Result<CoefficientValue, CoeffError> {
    let n = t.numerators();
    let k = t.target.0;
    assert_eq!(n.len(), 5, "h2_initial expects a quintic tuple");
    let (k1, k2, k3, k4, k5) = (n[0], n[1], n[2], n[3], n[4]);
    let a1 = k1 != k2 && k2 != k3 && k4 != k5 && k5 != k;
    let a2 = k1 != k && k2 != k3 && k3 != k4 && k5 != k;
    let a3 = k1 != k2 && k1 != k && k3 != k4 && k4 != k5;
    let mut value = ExactRational::zero();
    let mut killed = true;
    for (live, contracted, sign, context) in [
        (a2, [k1, k2 - k3 + k4, k5], 1i64, "A2 term of H²"),
        (a1, [k1 - k2 + k3, k4, k5], -1, "A1 term of H²"),
        (a3, [k1, k2, k3 - k4 + k5], -1, "A3 term of H²"),
    ] {
        if !live {
            continue;
        }
        let omega = quadratic_numer(&contracted, k);
        if omega == 0 {
            return Err(CoeffError::LiveIndicatorZeroDenominator {
                context,
                numers: n.clone(),
                target: k,
            });
        }
        killed = false;
        value += inv(sign * omega);
    }
    Ok(CoefficientValue {
        value,
        two_pi_power: -1,
        killed,
    })
}

/// G² by the four-indicator formula (1_{B₁} − 1_{B₂} + 1_{B₃} − 1_{B₄})/(2πΩ₅).
pub fn g2_initial(t: &ModeTuple) -> Result<CoefficientValue, CoeffError> {
    let n = t.numerators();
    let k = t.target.0;
    assert_eq!(n.len(), 5, "g2_initial expects a quintic tuple");
    let (k1, k2, k3, k4, k5) = (n[0], n[1], n[2], n[3], n[4]);
    let b1 = k1 == k2 && k2 == k3 && k3 != k4 && k4 != k5;
    let b2 = k1 != k2 && k2 == k3 && k3 == k4 && k4 != k5;
    let b3 = k1 != k2 && k2 != k3 && k3 == k4 && k4 == k5;
    let b4 = k1 != k2 && k2 != k3 && k4 == k5 && k5 == k;
    let numer = b1 as i64 - b2 as i64 + b3 as i64 - b4 as i64;
    if !(b1 || b2 || b3 || b4) {
        return Ok(CoefficientValue::killed(2));
    }
    let omega = quadratic_numer(&n, k);
    if omega == 0 {
        return Err(CoeffError::LiveIndicatorZeroDenominator {
            context: "G² with a live B indicator",
            numers: n.clone(),
            target: k,
        });
    }
    Ok(CoefficientValue {
        value: ExactRational::new(BigInt::from(numer), BigInt::from(omega)),
        two_pi_power: -1,
        killed: false,
    })
}

const MAX_ORDER: usize = 5;

#[derive(Copy, Clone, PartialEq, Eq)]
enum Kind {
    H,
    G,
}

/// H^d on a (2d+1)-tuple by the contraction recurrence, memoized.
pub fn h_coeff_recurrence(
    d: usize,
    t: &ModeTuple,
    cache: &mut CoeffCache,
) -> Result<CoefficientValue, CoeffError> {
    coeff_recurrence(Kind::H, d, &t.numerators(), t.target.0, cache)
}

/// G^d by the same recurrence, base cases G¹ ≡ 0 and G².
pub fn g_coeff_recurrence(
    d: usize,
    t: &ModeTuple,
    cache: &mut CoeffCache,
) -> Result<CoefficientValue, CoeffError> {
    coeff_recurrence(Kind::G, d, &t.numerators(), t.target.0, cache)
}

fn coeff_recurrence(
    kind: Kind,
    d: usize,
    numers: &[i64],
    target: i64,
    cache: &mut CoeffCache,
) -> Result<CoefficientValue, CoeffError> {
    assert_eq!(numers.len(), 2 * d + 1, "order/tuple-length mismatch");
    let min = if kind == Kind::H { 2 } else { 1 };
    if d < min || d > MAX_ORDER {
        return Err(CoeffError::OrderRange(d, min, MAX_ORDER));
    }
    let tag = if kind == Kind::H { 0 } else { 1 };
    let key = (tag, d, numers.to_vec(), target);
    if let Some(v) = cache.map.get(&key) {
        return Ok(v.clone());
    }
    let result = if kind == Kind::G && d == 1 {
        CoefficientValue::killed(1)
    } else if d == 2 {
        let t = ModeTuple::from_numerators(numers, target);
        match kind {
            Kind::H => h2_initial(&t)?,
            Kind::G => g2_initial(&t)?,
        }
    } else {
        let mut value = ExactRational::zero();
        let mut killed = true;
        for j in 1..=2 * d - 1 {
            if numers[j - 1] == numers[j] || numers[j] == numers[j + 1] {
                continue;
            }
            let mut contracted = numers[..j - 1].to_vec();
            contracted.push(numers[j - 1] - numers[j] + numers[j + 1]);
            contracted.extend(&numers[j + 2..]);
            let omega = quadratic_numer(&contracted, target);
            if omega == 0 {
                continue;
            }
            let sub = coeff_recurrence(kind, d - 1, &contracted, target, cache)?;
            if !sub.killed {
                killed = false;
            }
            let sign = if j % 2 == 0 { 1 } else { -1 };
            value += sub.value * inv(sign * omega);
        }
        CoefficientValue {
            value,
            two_pi_power: -(d as i64 - 1),
            killed,
        }
    };
    cache.map.insert(key, result.clone());
    Ok(result)
}

/// H^d by the closed tree formula: sum over 𝒢_{d−1} of the signed,
/// 𝒜-gated reciprocal product of the tree's Ω values.
pub fn h_coeff_trees(d: usize, t: &ModeTuple) -> Result<CoefficientValue, CoeffError> {
    assert_eq!(t.entries.len(), 2 * d + 1, "order/tuple-length mismatch");
    if !(2..=MAX_ORDER).contains(&d) {
        return Err(CoeffError::OrderRange(d, 2, MAX_ORDER));
    }
    let numers = t.numerators();
    let target = t.target.0;
    let forest = generate_forest_with_cap(d - 1, MAX_ORDER - 1)?;
    let mut value = ExactRational::zero();
    let mut killed = true;
    for tree in &forest.trees {
        if let Some(term) = h_tree_term(tree, &numers, target) {
            killed = false;
            value += big_ratio(term);
        }
    }
    Ok(CoefficientValue {
        value,
        two_pi_power: -(d as i64 - 1),
        killed,
    })
}

/// One tree's contribution sign/∏Ω as an i128 ratio; None when gated off.
/// Exact: the Ω values here are small integers, far from i128 limits.
fn h_tree_term(tree: &DiagramTree, numers: &[i64], target: i64) -> Option<Ratio<i128>> {
    let mut denom: i128 = 1;
    for k in 0..tree.depth() {
        if !tree.a_constraint(k, numers, target) {
            return None;
        }
        denom *= tree.omega_numer(k + 1, numers, target) as i128;
    }
    Some(Ratio::new(tree.sign() as i128, denom))
}

fn big_ratio(r: Ratio<i128>) -> ExactRational {
    ExactRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

/// G^d by the tree formula: 5-ary-root trees, the 𝓑₀^{(s)} equality patterns
/// at the first level, 𝓑 gates at each branching, and the first Ω squared.
pub fn g_coeff_trees(d: usize, t: &ModeTuple) -> Result<CoefficientValue, CoeffError> {
    assert_eq!(t.entries.len(), 2 * d + 1, "order/tuple-length mismatch");
    if !(1..=MAX_ORDER).contains(&d) {
        return Err(CoeffError::OrderRange(d, 1, MAX_ORDER));
    }
    if d == 1 {
        return Ok(CoefficientValue::killed(1));
    }
    let numers = t.numerators();
    let target = t.target.0;
    let forest = generate_g_forest(d - 2, MAX_ORDER - 1)?;
    let mut value = ExactRational::zero();
    let mut killed = true;
    for tree in &forest.trees {
        // every branching gates its own Ω; check them first
        let mut denom: i128 = 1;
        let mut gated = false;
        for k in 0..tree.depth() {
            if !tree.a_constraint(k, &numers, target) {
                gated = true;
                break;
            }
            denom *= tree.omega_numer(k + 1, &numers, target) as i128;
        }
        if gated {
            continue;
        }
        // the leading Ω₅ carries one extra power beyond the branching gates
        // (net: Ω₅² Ω₁ ⋯ for deep trees, plain Ω₅ at depth 0)
        let omega5 = quadratic_numer(&tree.level_sums(0, &numers), target) as i128;
        if !(1..=4).any(|s| tree.b0_constraint(s, &numers, target)) {
            continue;
        }
        if omega5 == 0 {
            // unreachable when a branching gates level 0 (d ≥ 3)
            return Err(CoeffError::LiveIndicatorZeroDenominator {
                context: "G tree formula with a live B indicator",
                numers: numers.clone(),
                target,
            });
        }
        denom *= omega5;
        let tree_sign = tree.sign();
        for s in 1..=4i64 {
            if !tree.b0_constraint(s as usize, &numers, target) {
                continue;
            }
            killed = false;
            let sign = if (s + 1) % 2 == 0 { tree_sign } else { -tree_sign };
            value += big_ratio(Ratio::new(sign as i128, denom));
        }
    }
    Ok(CoefficientValue {
        value,
        two_pi_power: -(d as i64 - 1),
        killed,
    })
}

/// Allocation-free H² in scaled units (no 2π), 0 when killed. Assumes the
/// tuple lies on S = 0, where a live indicator guarantees a nonzero
/// denominator; the exact API is authoritative off the surface.
pub fn h2_scaled_f64(n: &[i64], k: i64) -> f64 {
    let (k1, k2, k3, k4, k5) = (n[0], n[1], n[2], n[3], n[4]);
    let mut v = 0.0;
    if k1 != k && k2 != k3 && k3 != k4 && k5 != k {
        v += 1.0 / quadratic_numer(&[k1, k2 - k3 + k4, k5], k) as f64;
    }
    if k1 != k2 && k2 != k3 && k4 != k5 && k5 != k {
        v -= 1.0 / quadratic_numer(&[k1 - k2 + k3, k4, k5], k) as f64;
    }
    if k1 != k2 && k1 != k && k3 != k4 && k4 != k5 {
        v -= 1.0 / quadratic_numer(&[k1, k2, k3 - k4 + k5], k) as f64;
    }
    v
}

/// Allocation-free G² in scaled units (no 2π), 0 when killed; same surface
/// assumption as `h2_scaled_f64`.
pub fn g2_scaled_f64(n: &[i64], k: i64) -> f64 {
    let (k1, k2, k3, k4, k5) = (n[0], n[1], n[2], n[3], n[4]);
    let b1 = k1 == k2 && k2 == k3 && k3 != k4 && k4 != k5;
    let b2 = k1 != k2 && k2 == k3 && k3 == k4 && k4 != k5;
    let b3 = k1 != k2 && k2 != k3 && k3 == k4 && k4 == k5;
    let b4 = k1 != k2 && k2 != k3 && k4 == k5 && k5 == k;
    let numer = b1 as i64 - b2 as i64 + b3 as i64 - b4 as i64;
    if numer == 0 {
        return 0.0;
    }
    numer as f64 / quadratic_numer(n, k) as f64
}

/// H^d over a pre-generated forest of depth d−1, as f64 in scaled units.
pub fn h_trees_scaled_f64(forest: &crate::forest::Forest, numers: &[i64], target: i64) -> f64 {
    forest
        .trees
        .iter()
        .filter_map(|t| h_tree_term(t, numers, target))
        .map(|r| *r.numer() as f64 / *r.denom() as f64)
        .sum()
}

/// G^d over a pre-generated 5-ary-root forest, as f64 in scaled units.
/// Off-surface degeneracies (live B with Ω₅ = 0) are skipped here; the exact
/// API reports them loudly instead.
pub fn g_trees_scaled_f64(forest: &crate::forest::Forest, numers: &[i64], target: i64) -> f64 {
    let mut value = 0.0;
    for tree in &forest.trees {
        let mut denom: i128 = 1;
        let mut gated = false;
        for k in 0..tree.depth() {
            if !tree.a_constraint(k, numers, target) {
                gated = true;
                break;
            }
            denom *= tree.omega_numer(k + 1, numers, target) as i128;
        }
        if gated {
            continue;
        }
        let omega5 = quadratic_numer(&tree.level_sums(0, numers), target) as i128;
        let mut numer = 0i64;
        for s in 1..=4 {
            if tree.b0_constraint(s, numers, target) {
                numer += if s % 2 == 1 { 1 } else { -1 };
            }
        }
        if numer == 0 || omega5 == 0 {
            continue;
        }
        denom *= omega5;
        value += (tree.sign() * numer) as f64 / denom as f64;
    }
    value
}

/// Report of an exhaustive vanishing verification inside a box.
#[derive(Clone, Debug, Serialize)]
pub struct VanishingReport {
    pub d: usize,
    pub box_size: i64,
    pub l: i64,
    pub resonance_points: u64,
    pub constrained_points: u64,
    pub violations: u64,
    pub witnesses: Vec<(Vec<i64>, i64)>,
}

impl VanishingReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks H^d = 0 exactly at every point of 𝓡 ∩ (all 𝒜 constraints over all
/// trees) with all |numerators| ≤ box. Exact rational arithmetic throughout;
/// the reported counts are L-independent (scaling Ω by L² preserves zeroness).
pub fn verify_vanishing(d: usize, box_k: i64, l: i64) -> Result<VanishingReport, CoeffError> {
    if !(2..=MAX_ORDER).contains(&d) {
        return Err(CoeffError::OrderRange(d, 2, MAX_ORDER));
    }
    let forest = generate_forest_with_cap(d - 1, MAX_ORDER - 1)?;
    let mut report = VanishingReport {
        d,
        box_size: box_k,
        l,
        resonance_points: 0,
        constrained_points: 0,
        violations: 0,
        witnesses: Vec::new(),
    };
    let arity = 2 * d + 1;
    let mut numers = vec![-box_k; arity];
    if box_k < 0 {
        return Ok(report);
    }
    loop {
        let target = linear_numer(&numers, 0);
        if target.abs() <= box_k && quadratic_numer(&numers, target) == 0 {
            report.resonance_points += 1;
            if forest.trees.iter().all(|t| t.all_a_constraints(&numers, target)) {
                report.constrained_points += 1;
                let mut total = Ratio::<i128>::zero();
                for tree in &forest.trees {
                    total += h_tree_term(tree, &numers, target)
                        .expect("constraints checked live");
                }
                if !total.is_zero() {
                    report.violations += 1;
                    if report.witnesses.len() < 16 {
                        report.witnesses.push((numers.clone(), target));
                    }
                }
            }
        }
        // odometer
        let mut i = arity;
        loop {
            if i == 0 {
                return Ok(report);
            }
            i -= 1;
            if numers[i] < box_k {
                numers[i] += 1;
                for v in &mut numers[i + 1..] {
                    *v = -box_k;
                }
                break;
            }
        }
    }
}

/// Random points of 𝓡 ∩ (all-𝒜) found by solving the two forms for (K₁, K);
/// used where exhaustive enumeration is out of reach (d = 4).
pub fn sample_constrained_points(
    d: usize,
    box_k: i64,
    count: usize,
    seed: u64,
) -> Result<Vec<ModeTuple>, CoeffError> {
    let forest = generate_forest_with_cap(d - 1, MAX_ORDER - 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found = Vec::new();
    let mut attempts = 0u64;
    let arity = 2 * d + 1;
    while found.len() < count && attempts < 10_000_000 {
        attempts += 1;
        let mut numers = vec![0i64; arity];
        for v in numers.iter_mut().skip(1) {
            *v = rng.gen_range(-box_k..=box_k);
        }
        // S = 0 and Ω = 0 determine K₁ − K and K₁² − K²
        let r = -linear_numer(&numers[1..], 0); // = K − K₁, tail starts with −K₂
        let q = -quadratic_numer(&numers[1..], 0);
        if r == 0 {
            continue;
        }
        if q % r != 0 || (q / r - r) % 2 != 0 {
            continue;
        }
        let k1 = (q / r - r) / 2;
        let target = k1 + r;
        if k1.abs() > box_k || target.abs() > box_k {
            continue;
        }
        numers[0] = k1;
        let t = ModeTuple::from_numerators(&numers, target);
        debug_assert!(t.is_resonant());
        if forest.trees.iter().all(|tr| tr.all_a_constraints(&numers, target)) {
            found.push(t);
        }
    }
    Ok(found)
}

/// A partition of {1..2d+1} into consecutive odd-length blocks; the boundary
/// parity condition i_s ≡ s (mod 2) is equivalent to all lengths being odd.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Partition {
    pub blocks: Vec<(usize, usize)>,
}

impl Partition {
    pub fn new(blocks: Vec<(usize, usize)>) -> Result<Self, CoeffError> {
        let mut expect = 1;
        for &(a, b) in &blocks {
            if a != expect || b < a {
                return Err(CoeffError::BadPartition(format!(
                    "blocks not consecutive at ({a},{b})"
                )));
            }
            if (b - a) % 2 != 0 {
                return Err(CoeffError::BadPartition(format!(
                    "block ({a},{b}) has even length"
                )));
            }
            expect = b + 1;
        }
        if blocks.len() % 2 == 0 {
            return Err(CoeffError::BadPartition("even number of blocks".into()));
        }
        Ok(Partition { blocks })
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            blocks: (1..=n).map(|j| (j, j)).collect(),
        }
    }

    /// The index k with 2k+1 blocks.
    pub fn k(&self) -> usize {
        (self.blocks.len() - 1) / 2
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.1)
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    fn block_sums(&self, numers: &[i64]) -> Vec<i64> {
        self.blocks
            .iter()
            .map(|&(a, b)| {
                let mut s = 0;
                for j in a..=b {
                    if (j - a) % 2 == 0 {
                        s += numers[j - 1];
                    } else {
                        s -= numers[j - 1];
                    }
                }
                s
            })
            .collect()
    }

    /// All refinements splitting one block into three odd-length parts,
    /// tagged with the split block's 1-based index (the sign exponent).
    fn refinements(&self) -> Vec<(usize, Partition)> {
        let mut out = Vec::new();
        for (s, &(a, b)) in self.blocks.iter().enumerate() {
            let len = b - a + 1;
            if len < 3 {
                continue;
            }
            for len1 in (1..len).step_by(2) {
                for len2 in (1..len - len1).step_by(2) {
                    let (c1, c2) = (a + len1 - 1, a + len1 + len2 - 1);
                    let mut blocks = self.blocks[..s].to_vec();
                    blocks.push((a, c1));
                    blocks.push((c1 + 1, c2));
                    blocks.push((c2 + 1, b));
                    blocks.extend(&self.blocks[s + 1..]);
                    out.push((s + 1, Partition { blocks }));
                }
            }
        }
        out
    }
}

/// Enumerates all admissible partitions of {1..n} into `blocks` odd blocks.
pub fn admissible_partitions(n: usize, blocks: usize) -> Vec<Partition> {
    fn go(start: usize, n: usize, left: usize, acc: &mut Vec<(usize, usize)>, out: &mut Vec<Partition>) {
        if left == 0 {
            if start == n + 1 {
                out.push(Partition { blocks: acc.clone() });
            }
            return;
        }
        let mut end = start;
        while end <= n {
            acc.push((start, end));
            go(end + 1, n, left - 1, acc, out);
            acc.pop();
            end += 2;
        }
    }
    let mut out = Vec::new();
    let mut acc = Vec::new();
    go(1, n, blocks, &mut acc, &mut out);
    out
}

/// Result of one partition-chain evaluation.
#[derive(Clone, Debug, Serialize)]
pub struct ChainSumCheck {
    pub k: usize,
    pub recursive: ExactRational,
    pub closed_form: ExactRational,
    pub equal: bool,
}

/// Σ_{k,𝒫}: the sum over all chains of refinements from 𝒫 down to singletons
/// of the signed reciprocal Ω products, compared against the closed form
/// 1/(2^{d−k} · ∏ l_i over non-boundary i).
///
/// Precondition: t on the resonance surface with every intermediate Ω nonzero
/// (guaranteed on 𝓡 ∩ all-𝒜 points); otherwise an error is returned.
pub fn chain_sum(part: &Partition, t: &ModeTuple) -> Result<ChainSumCheck, CoeffError> {
    let numers = t.numerators();
    let target = t.target.0;
    let n = numers.len();
    if part.len() != n {
        return Err(CoeffError::BadPartition(format!(
            "partition covers 1..{} but tuple has {} entries",
            part.len(),
            n
        )));
    }
    let d = (n - 1) / 2;
    let k = part.k();
    let recursive = chain_rec(part, &numers, target)?;
    // closed form: boundaries are the block ends except the last
    let diffs = t.differences();
    let mut boundary = vec![false; n]; // 1-based l index
    for &(_, b) in &part.blocks[..part.blocks.len() - 1] {
        boundary[b] = true;
    }
    let mut denom = Ratio::<i128>::one();
    for (i, &l) in diffs.iter().enumerate() {
        let idx = i + 1;
        if boundary[idx] {
            continue;
        }
        if l == 0 {
            return Err(CoeffError::DegenerateDifference(idx));
        }
        denom *= Ratio::from_integer(l as i128);
    }
    let closed = big_ratio(Ratio::new(1, 1 << (d - k)) / denom);
    let recursive_big = big_ratio(recursive);
    let equal = recursive_big == closed;
    Ok(ChainSumCheck {
        k,
        recursive: recursive_big,
        closed_form: closed,
        equal,
    })
}

fn chain_rec(part: &Partition, numers: &[i64], target: i64) -> Result<Ratio<i128>, CoeffError> {
    if part.blocks.iter().all(|&(a, b)| a == b) {
        return Ok(Ratio::one());
    }
    let omega = quadratic_numer(&part.block_sums(numers), target);
    if omega == 0 {
        return Err(CoeffError::ChainZeroOmega);
    }
    let mut total = Ratio::zero();
    for (s, refined) in part.refinements() {
        let sub = chain_rec(&refined, numers, target)?;
        let sign = if s % 2 == 0 { 1 } else { -1 };
        total += sub * Ratio::from_integer(sign as i128);
    }
    Ok(total / Ratio::from_integer(omega as i128))
}

/// Σ over all 3-block partitions of Σ_{1,𝒫}; zero on constrained resonance
/// tuples (this is the vanishing theorem in chain form).
pub fn chain_sum_p3_total(t: &ModeTuple) -> Result<ExactRational, CoeffError> {
    let numers = t.numerators();
    let target = t.target.0;
    let mut total = Ratio::<i128>::zero();
    for part in admissible_partitions(numers.len(), 3) {
        total += chain_rec(&part, &numers, target)?;
    }
    Ok(big_ratio(total))
}

/// Closed form of the quintic resonant main term at K: 3 Σ_{K₁≠K}
/// |d_{K₁}|⁴/(K₁−K)² · d_K, with physical frequencies K = k/L and without the
/// ε⁴/L⁴ prefactor (callers reinstate prefactors).
///
/// `amps[i]` is the amplitude at numerator k = i − n_box.
pub fn quintic_main_term(amps: &[Complex64], n_box: i64, l: i64, k: i64) -> Complex64 {
    let idx = |kk: i64| (kk + n_box) as usize;
    let dk = amps[idx(k)];
    let mut sum = 0.0;
    for k1 in -n_box..=n_box {
        if k1 == k {
            continue;
        }
        let a = amps[idx(k1)].norm_sqr();
        let dist = (k1 - k) as f64 / l as f64;
        sum += a * a / (dist * dist);
    }
    3.0 * sum * dk
}

/// Exact finite-box closed form of the quintic resonant sum at K:
/// (Σ_{K₁≠K} |d_{K₁}|⁴/(K₁−K)² + 2|d_K|² Σ_{K₁≠K} |d_{K₁}|²/(K₁−K)²) · d_K,
/// with physical frequencies K = k/L and without the ε⁴/L⁴ prefactor.
///
/// The degenerate pair families of the resonant sum symmetrize to this value
/// identically on any finite box; the two squared single sums produced by the
/// symmetrization cancel between families. When every occupied mode shares one
/// modulus the two sums coincide and this reduces to `quintic_main_term`
/// (whose diagonal 3 Σ|d_{K₁}|⁴ form absorbs the |d_K|²-weighted boundary
/// terms of the pair symmetrization, exact only in that modulus-flat case).
pub fn quintic_main_term_exact(amps: &[Complex64], n_box: i64, l: i64, k: i64) -> Complex64 {
    let idx = |kk: i64| (kk + n_box) as usize;
    let dk = amps[idx(k)];
    let mut quartic = 0.0;
    let mut quadratic = 0.0;
    for k1 in -n_box..=n_box {
        if k1 == k {
            continue;
        }
        let a = amps[idx(k1)].norm_sqr();
        let dist = (k1 - k) as f64 / l as f64;
        quartic += a * a / (dist * dist);
        quadratic += a / (dist * dist);
    }
    (quartic + 2.0 * dk.norm_sqr() * quadratic) * dk
}

/// Direct evaluation of the quintic resonant sum Σ_{S=0, Ω=0} H² · d d̄ d d̄ d
/// over the in-box lattice, rescaled to physical units. The bracket carries a
/// single Ω factor, so one power of L² restores physical frequencies, and the
/// Ω = ±2·l·l' factorizations mean the reciprocals carry weight 2; the bracket
/// orientation is opposite to the closed form, hence the −2·L² normalization.
/// Brute-force oracle for `quintic_main_term_exact` (and for
/// `quintic_main_term` on states whose occupied modes share one modulus).
pub fn quintic_resonant_sum_direct(
    amps: &[Complex64],
    n_box: i64,
    l: i64,
    k: i64,
) -> Result<Complex64, CoeffError> {
    let idx = |kk: i64| (kk + n_box) as usize;
    let mut total = Complex64::zero();
    let lf = l as f64;
    let scale = lf * lf; // Ω ~ integer/L², one reciprocal Ω per bracket term
    for k1 in -n_box..=n_box {
        for k2 in -n_box..=n_box {
            for k3 in -n_box..=n_box {
                for k4 in -n_box..=n_box {
                    let k5 = k - k1 + k2 - k3 + k4;
                    if k5.abs() > n_box {
                        continue;
                    }
                    let numers = [k1, k2, k3, k4, k5];
                    if quadratic_numer(&numers, k) != 0 {
                        continue;
                    }
                    let t = ModeTuple::from_numerators(&numers, k);
                    let h = h2_initial(&t)?;
                    if h.killed || h.value.is_zero() {
                        continue;
                    }
                    let hv = ratio_to_f64(&h.value) * -2.0 * scale;
                    let mono = amps[idx(k1)]
                        * amps[idx(k2)].conj()
                        * amps[idx(k3)]
                        * amps[idx(k4)].conj()
                        * amps[idx(k5)];
                    total += hv * mono;
                }
            }
        }
    }
    Ok(total)
}

pub fn ratio_to_f64(r: &ExactRational) -> f64 {
    let n = r.numer();
    let d = r.denom();
    // values in this codebase comfortably fit f64 after the division
    str_to_f64(n) / str_to_f64(d)
}

fn str_to_f64(b: &BigInt) -> f64 {
    let mut x = 0.0f64;
    let (sign, digits) = b.to_radix_be(10);
    for d in digits {
        x = x * 10.0 + d as f64;
    }
    if sign == num_bigint::Sign::Minus {
        -x
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ratio;

    fn mt(n: &[i64], k: i64) -> ModeTuple {
        ModeTuple::from_numerators(n, k)
    }

    #[test]
    fn h2_known_zeros() {
        let v = h2_initial(&mt(&[1, 0, -1, 1, 0], -1)).unwrap();
        assert!(v.value.is_zero() && !v.killed);
        assert_eq!(v.two_pi_power, -1);
        let v = h2_initial(&mt(&[2, 0, -1, 2, 0], -1)).unwrap();
        assert!(v.value.is_zero() && !v.killed);
    }

    #[test]
    fn h2_killed_case() {
        // K1=K2 kills A1 and A3; K3=K4 kills A2
        let v = h2_initial(&mt(&[1, 1, 0, 0, 2], 2)).unwrap();
        assert!(v.killed && v.value.is_zero());
    }

    #[test]
    fn h2_term_values() {
        // only A2 live: contraction (1,−2,0), Ω = −12
        let v = h2_initial(&mt(&[1, 0, 2, 0, 0], 3)).unwrap();
        assert_eq!(v.value, ratio(-1, 12));
        // all three live: 1/4 − 1/2 − 1/12
        let v = h2_initial(&mt(&[4, 1, 0, 2, 1], 2)).unwrap();
        assert_eq!(v.value, ratio(-1, 3));
    }

    #[test]
    fn g2_signs() {
        // only B1 live
        let t = mt(&[1, 1, 1, 2, 0], 3);
        let omega = t.quadratic_numer();
        assert_ne!(omega, 0);
        let v = g2_initial(&t).unwrap();
        assert_eq!(v.value, ratio(1, omega));
        assert_eq!(v.two_pi_power, -1);
        // only B4 live: K4=K5=K
        let t = mt(&[5, 1, 2, 3, 3], 3);
        let omega = t.quadratic_numer();
        assert_ne!(omega, 0);
        let v = g2_initial(&t).unwrap();
        assert_eq!(v.value, ratio(-1, omega));
        // nothing live
        let v = g2_initial(&mt(&[1, 2, 3, 4, 5], 6)).unwrap();
        assert!(v.killed);
    }

    #[test]
    fn recurrence_base_cases() {
        let mut cache = CoeffCache::new();
        let t = mt(&[2, 0, -1, 2, 0], -1);
        assert_eq!(
            h_coeff_recurrence(2, &t, &mut cache).unwrap(),
            h2_initial(&t).unwrap()
        );
        let t3 = mt(&[1, 2, 3], 2);
        let v = g_coeff_recurrence(1, &t3, &mut cache).unwrap();
        assert!(v.killed && v.value.is_zero());
    }

    #[test]
    fn tree_formula_matches_h2() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let mut n = [0i64; 5];
            for v in &mut n {
                *v = rng.gen_range(-6..=6);
            }
            let target = linear_numer(&n, 0); // S = 0 sampling
            let t = mt(&n, target);
            let a = h2_initial(&t).unwrap();
            let b = h_coeff_trees(2, &t).unwrap();
            assert_eq!(a.value, b.value, "tuple {:?}", t);
            assert_eq!(a.two_pi_power, b.two_pi_power);
        }
    }

    #[test]
    fn dual_path_h3_g3() {
        let mut cache = CoeffCache::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let mut n = [0i64; 7];
            for v in &mut n {
                *v = rng.gen_range(-5..=5);
            }
            let target = linear_numer(&n, 0);
            let t = mt(&n, target);
            let a = h_coeff_recurrence(3, &t, &mut cache).unwrap();
            let b = h_coeff_trees(3, &t).unwrap();
            assert_eq!(a.value, b.value, "H³ mismatch at {:?}", t);
            assert_eq!(a.two_pi_power, b.two_pi_power);
            let a = g_coeff_recurrence(3, &t, &mut cache).unwrap();
            let b = g_coeff_trees(3, &t).unwrap();
            assert_eq!(a.value, b.value, "G³ mismatch at {:?}", t);
            assert_eq!(a.two_pi_power, b.two_pi_power);
        }
    }

    #[test]
    fn g2_tree_matches_initial() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..500 {
            let mut n = [0i64; 5];
            for v in &mut n {
                *v = rng.gen_range(-5..=5);
            }
            let target = linear_numer(&n, 0);
            let t = mt(&n, target);
            match (g2_initial(&t), g_coeff_trees(2, &t)) {
                (Ok(a), Ok(b)) => {
                    assert_eq!(a.value, b.value, "G² mismatch at {:?}", t);
                }
                (Err(_), Err(_)) => {}
                (a, b) => panic!("error mismatch at {:?}: {:?} vs {:?}", t, a, b),
            }
        }
    }

    #[test]
    fn vanishing_small_boxes() {
        let rep = verify_vanishing(2, 4, 4).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(rep.constrained_points > 0);
        // vacuous box
        let rep = verify_vanishing(2, 0, 4).unwrap();
        assert_eq!(rep.violations, 0);
    }

    #[test]
    fn sampled_points_are_constrained() {
        let pts = sample_constrained_points(2, 12, 25, 3).unwrap();
        assert_eq!(pts.len(), 25);
        for t in &pts {
            assert!(t.is_resonant());
            let v = h_coeff_trees(2, t).unwrap();
            assert!(v.value.is_zero() && !v.killed, "nonzero at {:?}", t);
        }
    }

    #[test]
    fn chain_sum_example() {
        let t = mt(&[2, 0, -1, 2, 0], -1);
        let part = Partition::new(vec![(1, 1), (2, 2), (3, 5)]).unwrap();
        let check = chain_sum(&part, &t).unwrap();
        assert_eq!(check.k, 1);
        assert_eq!(check.recursive, ratio(-1, 12));
        assert_eq!(check.closed_form, ratio(-1, 12));
        assert!(check.equal);
    }

    #[test]
    fn chain_p3_total_vanishes() {
        for t in [mt(&[2, 0, -1, 2, 0], -1), mt(&[1, 0, -1, 1, 0], -1)] {
            assert!(chain_sum_p3_total(&t).unwrap().is_zero());
        }
    }

    #[test]
    fn chain_sums_all_partitions_on_sampled_points() {
        for d in 2..=3usize {
            let pts = sample_constrained_points(d, 10, 10, 5).unwrap();
            for t in &pts {
                if t.differences().iter().any(|&l| l == 0) {
                    continue;
                }
                for blocks in (3..=2 * d + 1).step_by(2) {
                    for part in admissible_partitions(2 * d + 1, blocks) {
                        let check = chain_sum(&part, t).unwrap();
                        assert!(check.equal, "chain mismatch {:?} on {:?}", part, t);
                    }
                }
            }
        }
    }

    #[test]
    fn quintic_main_term_examples() {
        // single mode
        let mut amps = vec![Complex64::zero(); 9];
        amps[4] = Complex64::new(0.7, -0.2);
        assert!(quintic_main_term(&amps, 4, 4, 0).norm() < 1e-15);
        // two modes
        let a1 = Complex64::new(0.3, 0.4);
        amps[6] = a1; // k = 2
        let got = quintic_main_term(&amps, 4, 4, 0);
        let dist = 2.0f64 / 4.0;
        let want = 3.0 * a1.norm_sqr().powi(2) / (dist * dist) * amps[4];
        assert!((got - want).norm() < 1e-12);
        // exact closed form on the same two-mode state
        let exact = quintic_main_term_exact(&amps, 4, 4, 0);
        let want_exact = (a1.norm_sqr().powi(2)
            + 2.0 * amps[4].norm_sqr() * a1.norm_sqr())
            / (dist * dist)
            * amps[4];
        assert!((exact - want_exact).norm() < 1e-12);
    }

    #[test]
    fn quintic_direct_sum_matches_closed_forms() {
        let n_box = 5;
        let l = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        // general states: exact closed form
        for _ in 0..5 {
            let amps: Vec<Complex64> = (0..2 * n_box + 1)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            for k in [-3i64, 0, 2] {
                let direct = quintic_resonant_sum_direct(&amps, n_box, l, k).unwrap();
                let exact = quintic_main_term_exact(&amps, n_box, l, k);
                assert!(
                    (direct - exact).norm() <= 1e-10 * exact.norm().max(1.0),
                    "direct {direct} vs exact {exact} at k={k}"
                );
            }
        }
        // modulus-flat states: diagonal form quintic_main_term is exact
        for _ in 0..5 {
            let amps: Vec<Complex64> = (0..2 * n_box + 1)
                .map(|_| {
                    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                    0.5 * Complex64::new(phase.cos(), phase.sin())
                })
                .collect();
            for k in [-2i64, 1] {
                let direct = quintic_resonant_sum_direct(&amps, n_box, l, k).unwrap();
                let diag = quintic_main_term(&amps, n_box, l, k);
                assert!(
                    (direct - diag).norm() <= 1e-10 * diag.norm().max(1.0),
                    "direct {direct} vs diagonal {diag} at k={k}"
                );
            }
        }
    }

    #[test]
    fn f64_paths_match_exact() {
        let h_forest = generate_forest_with_cap(2, 4).unwrap();
        let g_forest = generate_g_forest(1, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..200 {
            let mut n5 = [0i64; 5];
            for v in &mut n5 {
                *v = rng.gen_range(-5..=5);
            }
            let t5 = mt(&n5, linear_numer(&n5, 0));
            let exact = ratio_to_f64(&h2_initial(&t5).unwrap().value);
            assert!((exact - h2_scaled_f64(&n5, t5.target.0)).abs() < 1e-12);
            let mut n7 = [0i64; 7];
            for v in &mut n7 {
                *v = rng.gen_range(-4..=4);
            }
            let k = linear_numer(&n7, 0);
            let t7 = mt(&n7, k);
            let exact = ratio_to_f64(&h_coeff_trees(3, &t7).unwrap().value);
            assert!((exact - h_trees_scaled_f64(&h_forest, &n7, k)).abs() < 1e-12);
            let exact = ratio_to_f64(&g_coeff_trees(3, &t7).unwrap().value);
            assert!((exact - g_trees_scaled_f64(&g_forest, &n7, k)).abs() < 1e-12);
        }
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![(1, 2), (3, 5)]).is_err());
        assert!(Partition::new(vec![(1, 3), (4, 4), (5, 5)]).is_ok());
        assert_eq!(admissible_partitions(5, 3).len(), 3);
        assert_eq!(admissible_partitions(7, 3).len(), 6);
    }
}
