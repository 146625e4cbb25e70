//! Torus lattice frequencies and the alternating resonance forms.
//!
//! A frequency K ∈ ℤ_L = ℤ/L is stored by its integer numerator k (K = k/L);
//! the box parameter L is carried by the surrounding context, never per value.
//! The linear form S and quadratic form Ω are exact: S has denominator L,
//! Ω has denominator L², so all resonance tests are integer comparisons on
//! numerators.

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

/// Exact rational value used throughout the coefficient machinery.
pub type ExactRational = BigRational;

/// Build an `ExactRational` from an integer numerator/denominator pair.
pub fn ratio(num: i64, den: i64) -> ExactRational {
    ExactRational::new(BigInt::from(num), BigInt::from(den))
}

/// Frequency K = k/L, stored by its numerator.
#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct LatticeFrequency(pub i64);

impl LatticeFrequency {
    /// The exact value k/L.
    pub fn value(self, l: i64) -> ExactRational {
        ratio(self.0, l)
    }

    /// The exact value of K².
    pub fn square(self, l: i64) -> ExactRational {
        ratio(self.0 * self.0, l * l)
    }
}

/// S_{2d+1,K} numerator: k₁ − k₂ + … + k_{2d+1} − k (the value is this over L).
pub fn linear_numer(entries: &[i64], target: i64) -> i64 {
    let mut s = -target;
    for (j, k) in entries.iter().enumerate() {
        if j % 2 == 0 {
            s += k;
        } else {
            s -= k;
        }
    }
    s
}

/// Ω_{2d+1,K} numerator: k₁² − k₂² + … + k_{2d+1}² − k² (the value is this over L²).
pub fn quadratic_numer(entries: &[i64], target: i64) -> i64 {
    let mut s = -target * target;
    for (j, k) in entries.iter().enumerate() {
        if j % 2 == 0 {
            s += k * k;
        } else {
            s -= k * k;
        }
    }
    s
}

/// Ordered odd-length tuple (K₁,…,K_{2d+1}) with the output frequency K.
/// Entry j carries sign (−1)^{j−1} in both forms.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct ModeTuple {
    pub entries: Vec<LatticeFrequency>,
    pub target: LatticeFrequency,
}

impl ModeTuple {
    /// Construct from raw numerators; panics unless the length is odd and ≥ 3.
    pub fn from_numerators(entries: &[i64], target: i64) -> Self {
        assert!(
            entries.len() >= 3 && entries.len() % 2 == 1,
            "mode tuple length must be odd and ≥ 3, got {}",
            entries.len()
        );
        ModeTuple {
            entries: entries.iter().map(|&k| LatticeFrequency(k)).collect(),
            target: LatticeFrequency(target),
        }
    }

    pub fn numerators(&self) -> Vec<i64> {
        self.entries.iter().map(|f| f.0).collect()
    }

    /// Arity parameter d, with 2d+1 entries.
    pub fn arity(&self) -> usize {
        (self.entries.len() - 1) / 2
    }

    pub fn linear_numer(&self) -> i64 {
        let numers = self.numerators();
        linear_numer(&numers, self.target.0)
    }

    pub fn quadratic_numer(&self) -> i64 {
        let numers = self.numerators();
        quadratic_numer(&numers, self.target.0)
    }

    /// S_{2d+1,K} as an exact rational (denominator divides L).
    pub fn linear_form(&self, l: i64) -> ExactRational {
        ratio(self.linear_numer(), l)
    }

    /// Ω_{2d+1,K} as an exact rational (denominator divides L²).
    pub fn quadratic_form(&self, l: i64) -> ExactRational {
        ratio(self.quadratic_numer(), l * l)
    }

    /// True when both forms vanish (the tuple lies on 𝓡); L-independent.
    pub fn is_resonant(&self) -> bool {
        self.linear_numer() == 0 && self.quadratic_numer() == 0
    }

    /// Difference numerators l_i = k_i − k_{i+1}, i = 1..2d.
    pub fn differences(&self) -> Vec<i64> {
        self.entries.windows(2).map(|w| w[0].0 - w[1].0).collect()
    }
}

/// Streams every tuple on the resonance surface with all |numerators| ≤ box
/// (the target K included), in lexicographic order of (entries, implied K).
///
/// The target is determined by S = 0; tuples whose implied K falls outside the
/// box are skipped, and the quadratic constraint is checked last.
pub fn enumerate_resonances(
    d: usize,
    box_k: i64,
) -> impl Iterator<Item = ModeTuple> {
    let arity = 2 * d + 1;
    ResonanceIter {
        arity,
        box_k,
        current: vec![-box_k; arity],
        done: box_k < 0,
    }
}

struct ResonanceIter {
    arity: usize,
    box_k: i64,
    current: Vec<i64>,
    done: bool,
}

impl Iterator for ResonanceIter {
    type Item = ModeTuple;

    fn next(&mut self) -> Option<ModeTuple> {
        while !self.done {
            let target = linear_numer(&self.current, 0);
            let hit = target.abs() <= self.box_k
                && quadratic_numer(&self.current, target) == 0;
            let item = if hit {
                Some(ModeTuple::from_numerators(&self.current, target))
            } else {
                None
            };
            // advance the odometer
            let mut i = self.arity;
            loop {
                if i == 0 {
                    self.done = true;
                    break;
                }
                i -= 1;
                if self.current[i] < self.box_k {
                    self.current[i] += 1;
                    for v in &mut self.current[i + 1..] {
                        *v = -self.box_k;
                    }
                    break;
                }
            }
            if item.is_some() {
                return item;
            }
        }
        None
    }
}

/// ⟨K⟩ = sqrt(1 + K²) for K = k/L.
pub fn bracket(k: i64, l: i64) -> f64 {
    let x = k as f64 / l as f64;
    (1.0 + x * x).sqrt()
}

/// Weighted sup-norm sup_K ⟨K⟩^ℓ |value(K)| over (numerator, magnitude) pairs.
pub fn weighted_supnorm(values: impl Iterator<Item = (i64, f64)>, ell: f64, l: i64) -> f64 {
    values
        .map(|(k, m)| bracket(k, l).powf(ell) * m)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;
    use proptest::prelude::*;

    #[test]
    fn linear_form_examples() {
        // degenerate cubic solution {K1,K3} = {K,K2}
        let t = ModeTuple::from_numerators(&[3, 5, 5], 3);
        assert!(t.linear_form(4).is_zero());
        let t = ModeTuple::from_numerators(&[2, 0, -1, 2, 0], -1);
        assert!(t.linear_form(4).is_zero());
        let t = ModeTuple::from_numerators(&[1, 0, 0], 0);
        assert_eq!(t.linear_form(4), ratio(1, 4));
    }

    #[test]
    fn quadratic_form_examples() {
        let t = ModeTuple::from_numerators(&[3, 5, 5], 3);
        assert!(t.quadratic_form(4).is_zero());
        let t = ModeTuple::from_numerators(&[2, 0, -1, 2, 0], -1);
        assert!(t.quadratic_form(4).is_zero());
        let t = ModeTuple::from_numerators(&[1, 0, 0], 0);
        assert_eq!(t.quadratic_form(4), ratio(1, 16));
    }

    #[test]
    fn cubic_resonances_are_degenerate() {
        for t in enumerate_resonances(1, 8) {
            let (k1, k2, k3) = (t.entries[0].0, t.entries[1].0, t.entries[2].0);
            let k = t.target.0;
            assert!(
                (k1 == k2 && k3 == k) || (k2 == k3 && k1 == k),
                "non-degenerate cubic resonance {:?}",
                t
            );
        }
    }

    #[test]
    fn quintic_enumeration_includes_known_point() {
        let want = ModeTuple::from_numerators(&[1, 0, -1, 1, 0], -1);
        assert!(want.is_resonant());
        assert!(enumerate_resonances(2, 2).any(|t| t == want));
    }

    #[test]
    fn quintic_box_zero_is_trivial() {
        let all: Vec<_> = enumerate_resonances(2, 0).collect();
        assert_eq!(all.len(), 1);
        assert!(all[0].numerators().iter().all(|&k| k == 0));
    }

    #[test]
    fn enumeration_is_lexicographic_and_symmetric() {
        let tuples: Vec<_> = enumerate_resonances(1, 3).collect();
        let mut sorted = tuples.clone();
        sorted.sort_by_key(|t| (t.numerators(), t.target.0));
        assert_eq!(tuples, sorted);
        // closed under swapping (K1, K3)
        for t in &tuples {
            let n = t.numerators();
            let swapped = ModeTuple::from_numerators(&[n[2], n[1], n[0]], t.target.0);
            assert!(tuples.contains(&swapped));
        }
    }

    #[test]
    fn supnorm_examples() {
        assert_eq!(weighted_supnorm([(0i64, 1.0)].into_iter(), 2.0, 1), 1.0);
        assert!((weighted_supnorm([(1i64, 1.0)].into_iter(), 2.0, 1) - 2.0).abs() < 1e-12);
        let two = weighted_supnorm([(0, 1.0), (1, 0.25)].into_iter(), 2.0, 1);
        assert!((two - 1.0).abs() < 1e-12);
        assert_eq!(weighted_supnorm(std::iter::empty(), 2.0, 1), 0.0);
    }

    proptest! {
        #[test]
        fn translation_invariance_on_surface(
            ks in proptest::collection::vec(-20i64..=20, 5),
            c in -10i64..=10,
        ) {
            // force S = 0 by choosing the target as the alternating sum
            let target = linear_numer(&ks, 0);
            let t = ModeTuple::from_numerators(&ks, target);
            prop_assert_eq!(t.linear_numer(), 0);
            let shifted: Vec<i64> = ks.iter().map(|k| k + c).collect();
            let ts = ModeTuple::from_numerators(&shifted, target + c);
            prop_assert_eq!(t.quadratic_numer(), ts.quadratic_numer());
        }

        #[test]
        fn quadratic_shift_is_twice_c_times_linear(
            ks in proptest::collection::vec(-20i64..=20, 3),
            target in -20i64..=20,
            c in -10i64..=10,
        ) {
            let t = ModeTuple::from_numerators(&ks, target);
            let shifted: Vec<i64> = ks.iter().map(|k| k + c).collect();
            let ts = ModeTuple::from_numerators(&shifted, target + c);
            prop_assert_eq!(
                ts.quadratic_numer() - t.quadratic_numer(),
                2 * c * t.linear_numer()
            );
        }
    }
}
