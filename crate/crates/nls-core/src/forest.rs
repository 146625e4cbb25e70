//! Leveled diagram trees and the forests 𝒢_d that index normal-form terms.
//!
//! A tree of depth d has a root R at level −1 with three children; level k
//! (0 ≤ k ≤ d) has 2k+3 nodes, exactly one node per level below d carries a
//! 3-branching, and the bottom nodes are labeled 1..2d+3 left to right. A tree
//! is uniquely determined by its branch-index sequence (l₀,…,l_{d−1}), where
//! l_k is the position of the branching node on level k.
//!
//! The same machinery, instantiated with a 5-ary root, indexes the G-coefficient
//! terms (their first transformation step produces five siblings at once).

use crate::lattice::ModeTuple;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Default depth cap: |𝒢₄| = 945 trees.
pub const DEPTH_CAP: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ForestError {
    #[error("depth {0} exceeds the configured cap {1}")]
    DepthCap(usize, usize),
}

/// A leveled tree, identified by its branch-index sequence. `root_arity` is 3
/// for the forests 𝒢_d and 5 for the G-coefficient variant.
///
/// `intervals[k][i]` is the (1-based, inclusive) range of bottom labels covered
/// by node i+1 on level k; levels run 0..=depth.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct DiagramTree {
    root_arity: usize,
    branches: Vec<usize>,
    intervals: Vec<Vec<(usize, usize)>>,
}

impl DiagramTree {
    /// Tree in 𝒢_d from its branch-index sequence (l₀,…,l_{d−1}).
    pub fn from_branches(branches: &[usize]) -> Self {
        Self::with_root_arity(3, branches)
    }

    pub fn with_root_arity(root_arity: usize, branches: &[usize]) -> Self {
        assert!(root_arity % 2 == 1 && root_arity >= 3);
        for (k, &l) in branches.iter().enumerate() {
            assert!(
                l >= 1 && l <= root_arity + 2 * k,
                "branch index l_{} = {} out of range 1..={}",
                k,
                l,
                root_arity + 2 * k
            );
        }
        let depth = branches.len();
        let bottom = root_arity + 2 * depth;
        // build per-level intervals top-down from the singleton bottom level
        let mut intervals = vec![Vec::new(); depth + 1];
        intervals[depth] = (1..=bottom).map(|j| (j, j)).collect();
        for k in (0..depth).rev() {
            let l = branches[k];
            let below = &intervals[k + 1];
            let mut row = Vec::with_capacity(root_arity + 2 * k);
            for i in 1..=root_arity + 2 * k {
                if i < l {
                    row.push(below[i - 1]);
                } else if i == l {
                    row.push((below[i - 1].0, below[i + 1].1));
                } else {
                    row.push(below[i + 1]);
                }
            }
            intervals[k] = row;
        }
        DiagramTree {
            root_arity,
            branches: branches.to_vec(),
            intervals,
        }
    }

    pub fn depth(&self) -> usize {
        self.branches.len()
    }

    pub fn root_arity(&self) -> usize {
        self.root_arity
    }

    /// Number of bottom nodes (2d+3 for a 3-ary root of depth d).
    pub fn bottom_len(&self) -> usize {
        self.root_arity + 2 * self.depth()
    }

    /// Branch index l_k, 0 ≤ k ≤ depth−1.
    pub fn branch_index(&self, k: usize) -> usize {
        self.branches[k]
    }

    pub fn branches(&self) -> &[usize] {
        &self.branches
    }

    /// Alternating sum of bottom labels under node i (1-based) on level k,
    /// normalized to lead with +: S = k_a − k_{a+1} + … over the node's
    /// interval. The linear/quadratic forms re-apply the per-node alternating
    /// sign, which matches because interval starts share the node's parity.
    pub fn subtree_sum_numer(&self, k: usize, i: usize, numers: &[i64]) -> i64 {
        let (a, b) = self.intervals[k][i - 1];
        let mut s = 0;
        for j in a..=b {
            if (j - a) % 2 == 0 {
                s += numers[j - 1];
            } else {
                s -= numers[j - 1];
            }
        }
        s
    }

    /// The 2k+3 subtree sums across level k.
    pub fn level_sums(&self, k: usize, numers: &[i64]) -> Vec<i64> {
        (1..=self.intervals[k].len())
            .map(|i| self.subtree_sum_numer(k, i, numers))
            .collect()
    }

    /// Ω_{2k+1,K}(T) numerator: the quadratic form on the level-(k−1) subtree
    /// sums, WITHOUT any 2π prefactor (tracked symbolically by callers).
    pub fn omega_numer(&self, k: usize, numers: &[i64], target: i64) -> i64 {
        assert!(k >= 1 && k <= self.depth());
        let sums = self.level_sums(k - 1, numers);
        crate::lattice::quadratic_numer(&sums, target)
    }

    /// Ω_{2k+1,K}(T) as an exact rational with the physical 1/L² scaling.
    pub fn omega_of_tree(&self, k: usize, t: &ModeTuple, l: i64) -> crate::lattice::ExactRational {
        let numers = t.numerators();
        crate::lattice::ratio(self.omega_numer(k, &numers, t.target.0), l * l)
    }

    /// Subtree alternating sum as an exact rational (node i on level k).
    pub fn subtree_alternating_sum(
        &self,
        k: usize,
        i: usize,
        t: &ModeTuple,
        l: i64,
    ) -> crate::lattice::ExactRational {
        let numers = t.numerators();
        crate::lattice::ratio(self.subtree_sum_numer(k, i, &numers), l)
    }

    /// The three children (level k+1 positions) of the level-k branching node.
    pub fn branching_children(&self, k: usize) -> [usize; 3] {
        let l = self.branches[k];
        [l, l + 1, l + 2]
    }

    /// 𝒜_k(T) on a tuple: the three children subtree sums of the level-k
    /// branching node satisfy S¹ ≠ S², S² ≠ S³, and Ω_{2k+3,K}(T) ≠ 0.
    pub fn a_constraint(&self, k: usize, numers: &[i64], target: i64) -> bool {
        let [c1, c2, c3] = self.branching_children(k);
        let s1 = self.subtree_sum_numer(k + 1, c1, numers);
        let s2 = self.subtree_sum_numer(k + 1, c2, numers);
        let s3 = self.subtree_sum_numer(k + 1, c3, numers);
        s1 != s2 && s2 != s3 && self.omega_numer(k + 1, numers, target) != 0
    }

    /// All 𝒜_k(T) for k = 0..depth−1.
    pub fn all_a_constraints(&self, numers: &[i64], target: i64) -> bool {
        (0..self.depth()).all(|k| self.a_constraint(k, numers, target))
    }

    /// 𝓑₀^{(s)}(T): equality of consecutive level-"first" subtree sums,
    /// literally S^s = S^{s+1} = S^{s+2} for s ∈ {1,2,3} and
    /// S⁴ = S⁵ = K for s = 4, indexed on the first level with 5 nodes.
    pub fn b0_constraint(&self, s: usize, numers: &[i64], target: i64) -> bool {
        assert!((1..=4).contains(&s));
        let level = match self.root_arity {
            3 => 1, // level 1 of a 𝒢_d tree has 5 nodes
            5 => 0,
            _ => unreachable!(),
        };
        assert!(level <= self.depth(), "tree too shallow for 𝓑₀ constraints");
        let sums = self.level_sums(level, numers);
        match s {
            1 => sums[0] == sums[1] && sums[1] == sums[2] && sums[2] != sums[3] && sums[3] != sums[4],
            2 => sums[0] != sums[1] && sums[1] == sums[2] && sums[2] == sums[3] && sums[3] != sums[4],
            3 => sums[0] != sums[1] && sums[1] != sums[2] && sums[2] == sums[3] && sums[3] == sums[4],
            _ => sums[0] != sums[1] && sums[1] != sums[2] && sums[3] == sums[4] && sums[4] == target,
        }
    }

    /// Overall sign (−1)^{Σ l_k}.
    pub fn sign(&self) -> i64 {
        if self.branches.iter().sum::<usize>() % 2 == 0 {
            1
        } else {
            -1
        }
    }
}

impl fmt::Display for DiagramTree {
    /// Serializes as the branch-index sequence, e.g. "[1,3]".
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, l) in self.branches.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", l)?;
        }
        write!(f, "]")
    }
}

/// The forest 𝒢_d (or its 5-ary-root variant), trees in generation order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Forest {
    pub depth: usize,
    pub trees: Vec<DiagramTree>,
}

/// Generates 𝒢_d: from each tree of 𝒢_{d−1}, the 2d+1 successors obtained by
/// 3-branching the m-th bottom node, m = 1..2d+1, in order.
pub fn generate_forest(d: usize) -> Result<Forest, ForestError> {
    generate_forest_with_cap(d, DEPTH_CAP)
}

pub fn generate_forest_with_cap(d: usize, cap: usize) -> Result<Forest, ForestError> {
    generate(3, d, cap)
}

/// The 5-ary-root forest indexing G^{d+1} terms: `extra` branching levels
/// beyond the initial 5-way split.
pub fn generate_g_forest(extra: usize, cap: usize) -> Result<Forest, ForestError> {
    generate(5, extra, cap)
}

fn generate(root_arity: usize, d: usize, cap: usize) -> Result<Forest, ForestError> {
    if d > cap {
        return Err(ForestError::DepthCap(d, cap));
    }
    let mut seqs: Vec<Vec<usize>> = vec![Vec::new()];
    for k in 0..d {
        let width = root_arity + 2 * k;
        let mut next = Vec::with_capacity(seqs.len() * width);
        for seq in &seqs {
            for m in 1..=width {
                let mut s = seq.clone();
                s.push(m);
                next.push(s);
            }
        }
        seqs = next;
    }
    Ok(Forest {
        depth: d,
        trees: seqs
            .iter()
            .map(|s| DiagramTree::with_root_arity(root_arity, s))
            .collect(),
    })
}

/// Per-level constraint evaluation of one tree on one tuple.
#[derive(Clone, Debug, Serialize)]
pub struct ConstraintReport {
    pub tree: String,
    pub per_level: Vec<bool>,
    pub sign: i64,
}

impl ConstraintReport {
    pub fn all_live(&self) -> bool {
        self.per_level.iter().all(|&b| b)
    }
}

/// Which indicator family to evaluate: the 𝒜_k sets of the H formula, or the
/// 𝓑 family of the G formula with its level-0 equality pattern 𝓑₀^{(s)}.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ConstraintFamily {
    A,
    B(usize),
}

pub fn constraint_sets(tree: &DiagramTree, t: &ModeTuple, family: ConstraintFamily) -> ConstraintReport {
    let numers = t.numerators();
    let target = t.target.0;
    let per_level = match family {
        ConstraintFamily::A => (0..tree.depth())
            .map(|k| tree.a_constraint(k, &numers, target))
            .collect(),
        ConstraintFamily::B(s) => {
            let mut v = vec![tree.b0_constraint(s, &numers, target)];
            for k in 1..tree.depth() {
                v.push(tree.a_constraint(k, &numers, target));
            }
            v
        }
    };
    ConstraintReport {
        tree: tree.to_string(),
        per_level,
        sign: tree.sign(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ratio;
    use proptest::prelude::*;

    #[test]
    fn forest_sizes() {
        assert_eq!(generate_forest(0).unwrap().trees.len(), 1);
        assert_eq!(generate_forest(1).unwrap().trees.len(), 3);
        assert_eq!(generate_forest(2).unwrap().trees.len(), 15);
        assert_eq!(generate_forest(3).unwrap().trees.len(), 105);
        assert_eq!(generate_forest(4).unwrap().trees.len(), 945);
        assert_eq!(
            generate_forest(5),
            Err(ForestError::DepthCap(5, DEPTH_CAP))
        );
    }

    #[test]
    fn growth_factor() {
        for d in 0..4usize {
            let a = generate_forest(d).unwrap().trees.len();
            let b = generate_forest(d + 1).unwrap().trees.len();
            assert_eq!(b, a * (2 * d + 3));
        }
    }

    #[test]
    fn branch_indices() {
        let g1 = generate_forest(1).unwrap();
        assert_eq!(g1.trees[0].branch_index(0), 1);
        assert_eq!(g1.trees[2].branch_index(0), 3);
        // the m-th successor branches at m on the last level
        let g2 = generate_forest(2).unwrap();
        for (i, tree) in g2.trees.iter().enumerate() {
            assert_eq!(tree.branch_index(1), i % 5 + 1);
        }
        assert_eq!(g2.trees[0].to_string(), "[1,1]");
    }

    #[test]
    fn subtree_sums_first_tree_g2() {
        // first tree of 𝒢₂ branches at node 1 on both levels:
        // level-0 node 1 carries K1−K2+K3−K4+K5, node 2 carries K6, node 3 K7
        let tree = DiagramTree::from_branches(&[1, 1]);
        let t = ModeTuple::from_numerators(&[1, 2, 3, 4, 5, 6, 7], 0);
        let n = t.numerators();
        assert_eq!(tree.subtree_sum_numer(0, 1, &n), 1 - 2 + 3 - 4 + 5);
        assert_eq!(tree.subtree_sum_numer(0, 2, &n), 6);
        assert_eq!(tree.subtree_sum_numer(0, 3, &n), 7);
        // leaves carry single labels
        assert_eq!(tree.subtree_sum_numer(2, 4, &n), 4);
    }

    #[test]
    fn omega_example() {
        // tree branching at node 3: level-0 sums (K1, K2, K3−K4+K5)
        let tree = DiagramTree::from_branches(&[3]);
        let t = ModeTuple::from_numerators(&[2, 0, -1, 2, 0], -1);
        let n = t.numerators();
        assert_eq!(tree.level_sums(0, &n), vec![2, 0, -3]);
        assert_eq!(tree.omega_numer(1, &n, -1), 12);
        assert_eq!(tree.omega_of_tree(1, &t, 1), ratio(12, 1));
        let zero = ModeTuple::from_numerators(&[0, 0, 0, 0, 0], 0);
        assert_eq!(tree.omega_numer(1, &zero.numerators(), 0), 0);
    }

    #[test]
    fn constraint_examples() {
        let t = ModeTuple::from_numerators(&[2, 0, -1, 2, 0], -1);
        for tree in &generate_forest(1).unwrap().trees {
            let rep = constraint_sets(tree, &t, ConstraintFamily::A);
            assert!(rep.all_live(), "tree {} dead on {:?}", tree, t);
        }
        // equal adjacent entries kill the branching constraint
        let t = ModeTuple::from_numerators(&[1, 1, 0, 2, 0], 2);
        let tree = DiagramTree::from_branches(&[1]);
        assert!(!constraint_sets(&tree, &t, ConstraintFamily::A).all_live());
        // fully repeated tuple kills every tree
        let t = ModeTuple::from_numerators(&[3, 3, 3, 3, 3], 3);
        for tree in &generate_forest(1).unwrap().trees {
            assert!(!constraint_sets(tree, &t, ConstraintFamily::A).all_live());
        }
    }

    #[test]
    fn successor_omega_matches_contraction() {
        // the j-th successor's deepest omega equals the quadratic form on the
        // contracted tuple (K1,…,Kj−Kj+1+Kj+2,…)
        for d in 1..=3usize {
            let forest = generate_forest(d).unwrap();
            let numers: Vec<i64> = (0..2 * d as i64 + 3).map(|j| 3 * j - 5).collect();
            let target = 7;
            for tree in &forest.trees {
                let j = tree.branch_index(d - 1);
                // independently contract the bottom tuple at position j
                let mut contracted: Vec<i64> = numers[..j - 1].to_vec();
                contracted.push(numers[j - 1] - numers[j] + numers[j + 1]);
                contracted.extend(&numers[j + 2..]);
                assert_eq!(tree.level_sums(d - 1, &numers), contracted, "tree {}", tree);
                assert_eq!(
                    tree.omega_numer(d, &numers, target),
                    crate::lattice::quadratic_numer(&contracted, target),
                    "tree {} j={}",
                    tree,
                    j
                );
            }
        }
    }

    proptest! {
        #[test]
        fn level_sums_telescope(
            d in 1usize..=3,
            seed in proptest::collection::vec(-9i64..=9, 11),
            target in -9i64..=9,
        ) {
            // total alternating sum is the same on every level
            let forest = generate_forest(d).unwrap();
            let n = 2 * d + 3;
            let numers = &seed[..n];
            let total = crate::lattice::linear_numer(numers, 0);
            for tree in &forest.trees {
                for k in 0..=d {
                    let sums = tree.level_sums(k, numers);
                    prop_assert_eq!(crate::lattice::linear_numer(&sums, 0), total);
                }
            }
            let _ = target;
        }
    }
}
