//! Multi-index bookkeeping for monomials in the augmented normal coordinates.
//!
//! A reduction to `n` master modes works with `2n + 2` coordinates: the `2n`
//! complex normal coordinates (modes first, conjugates second) followed by the
//! two forcing coordinates `z+` and `z-`. A monomial is identified by its
//! exponent vector; within one total order, monomials are processed by
//! ascending forcing power so that every same-order dependency
//! `alpha - e_forcing + e_master` is already solved when it is needed.

use std::cmp::Ordering;
use std::collections::HashMap;

use thiserror::Error;

/// Number of forcing coordinates appended after the master block.
pub const N_FORCING_VARS: usize = 2;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolyError {
    #[error("monomial count C({0}+{1},{0}) exceeds the platform integer range")]
    CountOverflow(usize, usize),
    #[error("truncation rule invalid: {0}")]
    BadRule(String),
}

/// Exponent vector of one monomial in the augmented coordinates.
///
/// The last [`N_FORCING_VARS`] entries are the forcing coordinates; everything
/// before them belongs to the master block.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    exp: Vec<u8>,
}

impl MultiIndex {
    pub fn new(exp: Vec<u8>) -> Self {
        debug_assert!(exp.len() > N_FORCING_VARS);
        Self { exp }
    }

    /// Unit vector `e_s` in `n_vars` coordinates.
    pub fn unit(n_vars: usize, s: usize) -> Self {
        let mut exp = vec![0u8; n_vars];
        exp[s] = 1;
        Self { exp }
    }

    pub fn n_vars(&self) -> usize {
        self.exp.len()
    }

    /// Total order `p` of the monomial.
    pub fn order(&self) -> usize {
        self.exp.iter().map(|&e| e as usize).sum()
    }

    /// Total power carried by the two forcing coordinates.
    pub fn forcing_order(&self) -> usize {
        self.exp[self.exp.len() - N_FORCING_VARS..]
            .iter()
            .map(|&e| e as usize)
            .sum()
    }

    /// Total power carried by the master coordinates.
    pub fn master_order(&self) -> usize {
        self.order() - self.forcing_order()
    }

    pub fn exponent(&self, s: usize) -> usize {
        self.exp[s] as usize
    }

    pub fn exponents(&self) -> &[u8] {
        &self.exp
    }

    /// Index of the `z+` coordinate.
    pub fn plus_var(n_vars: usize) -> usize {
        n_vars - 2
    }

    /// Index of the `z-` coordinate.
    pub fn minus_var(n_vars: usize) -> usize {
        n_vars - 1
    }

    /// Componentwise sum; the order of the product is the sum of the orders.
    pub fn product(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n_vars(), other.n_vars());
        Self {
            exp: self
                .exp
                .iter()
                .zip(&other.exp)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    /// Power rule: returns `(alpha_s, alpha - e_s)` or `None` when the
    /// coordinate is absent.
    pub fn derivative(&self, s: usize) -> Option<(usize, Self)> {
        if self.exp[s] == 0 {
            return None;
        }
        let mut exp = self.exp.clone();
        exp[s] -= 1;
        Some((self.exp[s] as usize, Self { exp }))
    }

    /// Componentwise difference, `None` if any exponent would go negative.
    pub fn checked_sub(&self, other: &Self) -> Option<Self> {
        debug_assert_eq!(self.n_vars(), other.n_vars());
        let mut exp = Vec::with_capacity(self.exp.len());
        for (&a, &b) in self.exp.iter().zip(&other.exp) {
            if a < b {
                return None;
            }
            exp.push(a - b);
        }
        Some(Self { exp })
    }

    /// `alpha - e_from + e_to`, or `None` if `alpha_from = 0`.
    pub fn shifted(&self, from: usize, to: usize) -> Option<Self> {
        if self.exp[from] == 0 {
            return None;
        }
        let mut exp = self.exp.clone();
        exp[from] -= 1;
        exp[to] += 1;
        Some(Self { exp })
    }

    /// Exponent vector of the complex-conjugate monomial: each master pair is
    /// swapped and `z+` is exchanged with `z-`.
    pub fn conjugate(&self, n_pairs: usize) -> Self {
        debug_assert_eq!(self.exp.len(), 2 * n_pairs + N_FORCING_VARS);
        let mut exp = self.exp.clone();
        for k in 0..n_pairs {
            exp.swap(k, k + n_pairs);
        }
        let nv = exp.len();
        exp.swap(nv - 2, nv - 1);
        Self { exp }
    }

    fn cmp_stage_lex(&self, other: &Self) -> Ordering {
        self.forcing_order()
            .cmp(&other.forcing_order())
            // Descending lexicographic within one forcing stage keeps z1^p
            // ahead of mixed products, matching the usual graded listing.
            .then_with(|| other.exp.cmp(&self.exp))
    }
}

/// Number of monomials of order `p` in `d + 1` coordinates: `(p+d)! / (p! d!)`.
pub fn monomial_count(p: usize, d: usize) -> Result<usize, PolyError> {
    let mut num: u128 = 1;
    for i in 1..=d as u128 {
        num = num
            .checked_mul(p as u128 + i)
            .ok_or(PolyError::CountOverflow(p, d))?;
        num /= i;
    }
    usize::try_from(num).map_err(|_| PolyError::CountOverflow(p, d))
}

/// All monomials of order `p` in `n_vars` coordinates, ordered by ascending
/// forcing power with descending lexicographic tie-break.
///
/// The ordering guarantees that any same-order dependency
/// `alpha - e_forcing + e_master` appears strictly earlier in the list.
pub fn monomials_of_order(p: usize, n_vars: usize) -> Vec<MultiIndex> {
    assert!(p >= 1 && n_vars >= 1);
    let mut out = Vec::new();
    let mut exp = vec![0u8; n_vars];
    compositions(p, 0, &mut exp, &mut out);
    out.sort_by(|a, b| a.cmp_stage_lex(b));
    out
}

fn compositions(rest: usize, var: usize, exp: &mut Vec<u8>, out: &mut Vec<MultiIndex>) {
    if var + 1 == exp.len() {
        exp[var] = rest as u8;
        out.push(MultiIndex::new(exp.clone()));
        return;
    }
    for e in 0..=rest {
        exp[var] = e as u8;
        compositions(rest - e, var + 1, exp, out);
    }
    exp[var] = 0;
}

/// Position `(p, k)` of a monomial in the declared ordering.
pub fn monomial_index(alpha: &MultiIndex) -> (usize, usize) {
    let p = alpha.order();
    let k = monomials_of_order(p, alpha.n_vars())
        .iter()
        .position(|m| m == alpha)
        .expect("monomial of its own order");
    (p, k)
}

/// Order-`p` monomial list with O(1) exponent-vector lookup.
#[derive(Debug, Clone)]
pub struct OrderIndex {
    mons: Vec<MultiIndex>,
    pos: HashMap<MultiIndex, usize>,
}

impl OrderIndex {
    pub fn new(p: usize, n_vars: usize) -> Self {
        Self::from_list(monomials_of_order(p, n_vars))
    }

    pub fn from_list(mons: Vec<MultiIndex>) -> Self {
        let pos = mons
            .iter()
            .enumerate()
            .map(|(k, m)| (m.clone(), k))
            .collect();
        Self { mons, pos }
    }

    pub fn len(&self) -> usize {
        self.mons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mons.is_empty()
    }

    pub fn get(&self, k: usize) -> &MultiIndex {
        &self.mons[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &MultiIndex> {
        self.mons.iter()
    }

    pub fn position(&self, alpha: &MultiIndex) -> Option<usize> {
        self.pos.get(alpha).copied()
    }
}

/// Which monomials of the joint expansion in master amplitude and forcing
/// amplitude are retained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncationRule {
    /// Keep `p_master + m * p_forcing <= o`; the forcing amplitude is treated
    /// as an order-`m` power of the master amplitude.
    Asymptotic { o: usize, m: usize },
    /// Keep `p_master + p_forcing <= o` and `p_forcing <= o_eps`.
    Coupled { o: usize, o_eps: usize },
    /// Keep `p_master <= o` and `p_forcing <= o_eps` independently.
    Disjoint { o: usize, o_eps: usize },
}

impl TruncationRule {
    pub fn validate(&self) -> Result<(), PolyError> {
        match *self {
            TruncationRule::Asymptotic { o, m } => {
                if o < 1 {
                    return Err(PolyError::BadRule("o must be >= 1".into()));
                }
                if m < 1 {
                    return Err(PolyError::BadRule("m must be a positive integer".into()));
                }
            }
            TruncationRule::Coupled { o, o_eps } => {
                if o < 1 {
                    return Err(PolyError::BadRule("o must be >= 1".into()));
                }
                if o_eps > o {
                    return Err(PolyError::BadRule(
                        "o_eps must not exceed o in coupled mode".into(),
                    ));
                }
            }
            TruncationRule::Disjoint { o, .. } => {
                if o < 1 {
                    return Err(PolyError::BadRule("o must be >= 1".into()));
                }
            }
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        match *self {
            TruncationRule::Asymptotic { o, .. }
            | TruncationRule::Coupled { o, .. }
            | TruncationRule::Disjoint { o, .. } => o,
        }
    }

    pub fn eps_order(&self) -> usize {
        match *self {
            TruncationRule::Asymptotic { o, m } => o / m,
            TruncationRule::Coupled { o_eps, .. } | TruncationRule::Disjoint { o_eps, .. } => o_eps,
        }
    }

    /// Largest total monomial order any kept monomial can have.
    pub fn max_total_order(&self) -> usize {
        match *self {
            TruncationRule::Asymptotic { o, .. } | TruncationRule::Coupled { o, .. } => o,
            TruncationRule::Disjoint { o, o_eps } => o + o_eps,
        }
    }

    pub fn keep(&self, alpha: &MultiIndex) -> bool {
        self.keep_cell(alpha.master_order(), alpha.forcing_order())
    }

    /// Truncation decision on the `(p_master, p_forcing)` cell.
    pub fn keep_cell(&self, p_master: usize, p_forcing: usize) -> bool {
        match *self {
            TruncationRule::Asymptotic { o, m } => p_master + m * p_forcing <= o,
            TruncationRule::Coupled { o, o_eps } => p_master + p_forcing <= o && p_forcing <= o_eps,
            TruncationRule::Disjoint { o, o_eps } => p_master <= o && p_forcing <= o_eps,
        }
    }

    /// Number of kept `(p_master, p_forcing)` cells, the constant cell
    /// included; this is the bookkeeping quantity reported by the CLI.
    pub fn kept_cell_count(&self) -> usize {
        let mut count = 0;
        for pm in 0..=self.max_total_order() {
            for pf in 0..=self.max_total_order() {
                if self.keep_cell(pm, pf) {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Convenience shorthand for [`TruncationRule::keep`].
pub fn truncation_keep(alpha: &MultiIndex, rule: &TruncationRule) -> bool {
    rule.keep(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mi(exp: &[u8]) -> MultiIndex {
        MultiIndex::new(exp.to_vec())
    }

    #[test]
    fn count_matches_formula() {
        assert_eq!(monomial_count(3, 1).unwrap(), 4);
        assert_eq!(monomial_count(1, 7).unwrap(), 8);
        // {z1^2, z1 z2, z1 z3, z2^2, z2 z3, z3^2}
        assert_eq!(monomial_count(2, 2).unwrap(), 6);
    }

    #[test]
    fn count_overflows_are_reported() {
        assert!(monomial_count(400, 80).is_err());
    }

    #[test]
    fn order_one_lists_unit_vectors_forcing_last() {
        let mons = monomials_of_order(1, 4);
        assert_eq!(mons[0], mi(&[1, 0, 0, 0]));
        assert_eq!(mons[1], mi(&[0, 1, 0, 0]));
        assert_eq!(mons[2], mi(&[0, 0, 1, 0]));
        assert_eq!(mons[3], mi(&[0, 0, 0, 1]));
    }

    #[test]
    fn order_two_sorted_by_forcing_power() {
        let mons = monomials_of_order(2, 3);
        let fpow: Vec<usize> = mons.iter().map(|m| m.forcing_order()).collect();
        for w in fpow.windows(2) {
            assert!(w[0] <= w[1]);
        }
        assert_eq!(mons[0], mi(&[2, 0, 0]));
        assert_eq!(mons.len(), monomial_count(2, 2).unwrap());
    }

    #[test]
    fn enumeration_length_matches_count() {
        for p in 1..=6 {
            for nv in 3..=6 {
                assert_eq!(
                    monomials_of_order(p, nv).len(),
                    monomial_count(p, nv - 1).unwrap()
                );
            }
        }
    }

    #[test]
    fn derivative_power_rule() {
        // z1^2 z+ in the layout (z1, z1bar, z+, z-)
        let a = mi(&[2, 0, 1, 0]);
        let (c, d) = a.derivative(0).unwrap();
        assert_eq!(c, 2);
        assert_eq!(d, mi(&[1, 0, 1, 0]));
        assert!(a.derivative(1).is_none());
        let f3 = mi(&[0, 0, 3, 0]);
        let (c, d) = f3.derivative(2).unwrap();
        assert_eq!(c, 3);
        assert_eq!(d, mi(&[0, 0, 2, 0]));
    }

    #[test]
    fn product_adds_exponents() {
        let z1 = mi(&[1, 0, 0, 0]);
        assert_eq!(z1.product(&z1), mi(&[2, 0, 0, 0]));
        let a = mi(&[1, 0, 1, 0]);
        let b = mi(&[0, 0, 1, 0]);
        assert_eq!(a.product(&b), mi(&[1, 0, 2, 0]));
        let p1 = mi(&[1, 1, 0, 0]);
        let p2 = mi(&[1, 0, 2, 0]);
        assert_eq!(p1.product(&p2).order(), 5);
    }

    #[test]
    fn truncation_cell_counts_match_reference_tables() {
        let asym = TruncationRule::Asymptotic { o: 6, m: 3 };
        let coup = TruncationRule::Coupled { o: 6, o_eps: 3 };
        let disj = TruncationRule::Disjoint { o: 6, o_eps: 3 };
        assert_eq!(asym.kept_cell_count(), 12);
        assert_eq!(coup.kept_cell_count(), 22);
        assert_eq!(disj.kept_cell_count(), 28);
    }

    #[test]
    fn coupled_is_intersection_of_disjoint_and_asymptotic_m1() {
        let o = 5;
        let o_eps = 2;
        let coup = TruncationRule::Coupled { o, o_eps };
        let disj = TruncationRule::Disjoint { o, o_eps };
        let asym = TruncationRule::Asymptotic { o, m: 1 };
        for p in 1..=(o + o_eps) {
            for alpha in monomials_of_order(p, 4) {
                assert_eq!(
                    coup.keep(&alpha),
                    disj.keep(&alpha) && asym.keep(&alpha),
                    "mismatch at {alpha:?}"
                );
            }
        }
    }

    #[test]
    fn rule_validation() {
        assert!(TruncationRule::Coupled { o: 3, o_eps: 4 }.validate().is_err());
        assert!(TruncationRule::Asymptotic { o: 3, m: 0 }.validate().is_err());
        assert!(TruncationRule::Coupled { o: 0, o_eps: 0 }.validate().is_err());
        assert!(TruncationRule::Disjoint { o: 9, o_eps: 0 }.validate().is_ok());
    }

    #[test]
    fn same_order_dependencies_resolve_earlier() {
        // Every dependency alpha - e_forcing + e_master must sit strictly
        // before alpha; exhaustive scan over small configurations.
        for n_vars in 3..=6 {
            for p in 1..=6 {
                let idx = OrderIndex::new(p, n_vars);
                for (k, alpha) in idx.mons.iter().enumerate() {
                    for fvar in [MultiIndex::plus_var(n_vars), MultiIndex::minus_var(n_vars)] {
                        for s in 0..n_vars - N_FORCING_VARS {
                            if let Some(dep) = alpha.shifted(fvar, s) {
                                let kw = idx.position(&dep).unwrap();
                                assert!(kw < k, "dependency not resolved: {alpha:?}");
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn conjugate_swaps_pairs_and_forcing() {
        let a = mi(&[2, 1, 1, 0]); // n_pairs = 1
        assert_eq!(a.conjugate(1), mi(&[1, 2, 0, 1]));
        let b = mi(&[1, 0, 0, 2, 3, 0]); // n_pairs = 2
        assert_eq!(b.conjugate(2), mi(&[0, 2, 1, 0, 0, 3]));
    }

    proptest! {
        #[test]
        fn round_trip_index(p in 1usize..=5, n_vars in 3usize..=6, seed in 0usize..1000) {
            let mons = monomials_of_order(p, n_vars);
            let k = seed % mons.len();
            prop_assert_eq!(monomial_index(&mons[k]), (p, k));
        }

        #[test]
        fn forcing_power_is_monotone_along_list(p in 1usize..=6, n_vars in 3usize..=6) {
            let mons = monomials_of_order(p, n_vars);
            for w in mons.windows(2) {
                prop_assert!(w[0].forcing_order() <= w[1].forcing_order());
            }
        }

        #[test]
        fn conjugation_is_involutive(pairs in 1usize..=2, raw in proptest::collection::vec(0u8..4, 6)) {
            let n_vars = 2 * pairs + N_FORCING_VARS;
            let exp = raw[..n_vars].to_vec();
            let a = MultiIndex::new(exp);
            let c = a.conjugate(pairs).conjugate(pairs);
            prop_assert_eq!(c, a);
        }
    }
}
