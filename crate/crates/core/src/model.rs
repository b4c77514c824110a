//! Problem instances, solutions, weight moments, the one-sided Chebyshev
//! surrogate and the penalized lexicographic fitness.
//!
//! Items are laid out group-major: item `(i, j)` (group `i`, position `j`)
//! lives at flat index `i * m + j`. All items share expected weight `a` and
//! variance `d`; two items of the same group have covariance `c`, items of
//! different groups are uncorrelated.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Relative tolerance under which two fitness components are considered tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// `|a - b| <= TIE_TOLERANCE * max(1, |a|, |b|)`.
#[inline]
pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * 1f64.max(a.abs()).max(b.abs())
}

/// `value <= bound`, with ties inside [`TIE_TOLERANCE`] counted as satisfied.
#[inline]
pub fn le_with_ties(value: f64, bound: f64) -> bool {
    value <= bound || approx_eq(value, bound)
}

/// Shared first and second moments of the item weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightModel {
    pub expected_weight: f64,
    pub variance: f64,
    pub covariance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    groups: usize,
    group_size: usize,
    weights: WeightModel,
    budget: f64,
    alpha: f64,
    profits: Vec<f64>,
    max_profit: f64,
}

impl ProblemInstance {
    /// Builds an instance from a row-major `K x m` profit vector.
    ///
    /// Every violated constraint is reported, not only the first one.
    pub fn new(
        groups: usize,
        group_size: usize,
        weights: WeightModel,
        budget: f64,
        alpha: f64,
        profits: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let mut problems = Vec::new();
        if groups == 0 {
            problems.push("groups (K) must be at least 1".to_string());
        }
        if group_size == 0 {
            problems.push("group_size (m) must be at least 1".to_string());
        }
        let positive = |name: &str, v: f64, problems: &mut Vec<String>| {
            if !(v.is_finite() && v > 0.0) {
                problems.push(format!("{name} must be a finite positive real, got {v}"));
            }
        };
        positive(
            "expected_weight (a)",
            weights.expected_weight,
            &mut problems,
        );
        positive("variance (d)", weights.variance, &mut problems);
        positive("covariance (c)", weights.covariance, &mut problems);
        positive("budget (B)", budget, &mut problems);
        if !(alpha > 0.0 && alpha < 1.0) {
            problems.push(format!("alpha must lie in (0, 1), got {alpha}"));
        }
        let n = groups.saturating_mul(group_size);
        if profits.len() != n {
            problems.push(format!(
                "profits must have K*m = {n} entries, got {}",
                profits.len()
            ));
        }
        if let Some((idx, p)) = profits
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p >= 0.0))
        {
            problems.push(format!(
                "profits must be finite and non-negative, entry {idx} is {p}"
            ));
        }
        if !problems.is_empty() {
            return Err(ModelError::InvalidInstance(problems));
        }
        let max_profit = profits.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            groups,
            group_size,
            weights,
            budget,
            alpha,
            profits,
            max_profit,
        })
    }

    /// Same as [`ProblemInstance::new`] with a `K x m` profit matrix.
    pub fn with_profit_matrix(
        weights: WeightModel,
        budget: f64,
        alpha: f64,
        matrix: &[Vec<f64>],
    ) -> Result<Self, ModelError> {
        let groups = matrix.len();
        let group_size = matrix.first().map_or(0, Vec::len);
        if let Some(row) = matrix.iter().position(|r| r.len() != group_size) {
            return Err(ModelError::InvalidInstance(vec![format!(
                "profit matrix is ragged: row {row} has {} entries, expected {group_size}",
                matrix[row].len()
            )]));
        }
        let flat = matrix.iter().flatten().copied().collect();
        Self::new(groups, group_size, weights, budget, alpha, flat)
    }

    /// Instance with every profit equal to 1.
    pub fn unit_profits(
        groups: usize,
        group_size: usize,
        weights: WeightModel,
        budget: f64,
        alpha: f64,
    ) -> Result<Self, ModelError> {
        let n = groups * group_size;
        Self::new(groups, group_size, weights, budget, alpha, vec![1.0; n])
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    /// Total number of items `n = K * m`.
    pub fn len(&self) -> usize {
        self.groups * self.group_size
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weights(&self) -> WeightModel {
        self.weights
    }

    pub fn expected_item_weight(&self) -> f64 {
        self.weights.expected_weight
    }

    pub fn item_variance(&self) -> f64 {
        self.weights.variance
    }

    pub fn covariance(&self) -> f64 {
        self.weights.covariance
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Row-major profits.
    pub fn profits(&self) -> &[f64] {
        &self.profits
    }

    pub fn profit(&self, group: usize, position: usize) -> f64 {
        self.profits[self.index(group, position)]
    }

    pub fn max_profit(&self) -> f64 {
        self.max_profit
    }

    pub fn profit_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.profits.chunks(self.group_size)
    }

    #[inline]
    pub fn index(&self, group: usize, position: usize) -> usize {
        debug_assert!(group < self.groups && position < self.group_size);
        group * self.group_size + position
    }

    #[inline]
    pub fn group_of(&self, index: usize) -> usize {
        index / self.group_size
    }
}

/// A bit vector over the items together with cached selection counts.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Solution {
    bits: Vec<bool>,
    ones: usize,
    group_counts: Vec<usize>,
}

impl Solution {
    pub fn empty(inst: &ProblemInstance) -> Self {
        Self {
            bits: vec![false; inst.len()],
            ones: 0,
            group_counts: vec![0; inst.groups()],
        }
    }

    pub fn full(inst: &ProblemInstance) -> Self {
        Self {
            bits: vec![true; inst.len()],
            ones: inst.len(),
            group_counts: vec![inst.group_size(); inst.groups()],
        }
    }

    pub fn from_bits(inst: &ProblemInstance, bits: Vec<bool>) -> Result<Self, ModelError> {
        if bits.len() != inst.len() {
            return Err(ModelError::LengthMismatch {
                expected: inst.len(),
                actual: bits.len(),
            });
        }
        let mut group_counts = vec![0; inst.groups()];
        for (idx, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
            group_counts[inst.group_of(idx)] += 1;
        }
        let ones = group_counts.iter().sum();
        Ok(Self {
            bits,
            ones,
            group_counts,
        })
    }

    /// Bit `k` of `mask` selects item `k`. Requires `n <= 64`.
    pub fn from_mask(inst: &ProblemInstance, mask: u64) -> Self {
        assert!(inst.len() <= 64, "mask encoding needs n <= 64");
        let bits = (0..inst.len()).map(|k| mask >> k & 1 == 1).collect();
        Self::from_bits(inst, bits).expect("length matches by construction")
    }

    /// Parses a string of `0`/`1` characters (whitespace and `_` ignored).
    pub fn parse(inst: &ProblemInstance, text: &str) -> Result<Self, ModelError> {
        let mut bits = Vec::with_capacity(inst.len());
        for ch in text.chars().filter(|c| !c.is_whitespace() && *c != '_') {
            match ch {
                '0' => bits.push(false),
                '1' => bits.push(true),
                other => return Err(ModelError::BadBitString(other)),
            }
        }
        Self::from_bits(inst, bits)
    }

    /// Selects exactly the given per-group counts, filling each group from position 0.
    pub fn from_group_counts(inst: &ProblemInstance, counts: &[usize]) -> Result<Self, ModelError> {
        if counts.len() != inst.groups() {
            return Err(ModelError::LengthMismatch {
                expected: inst.groups(),
                actual: counts.len(),
            });
        }
        if let Some(&r) = counts.iter().find(|&&r| r > inst.group_size()) {
            return Err(ModelError::GroupOverflow {
                count: r,
                capacity: inst.group_size(),
            });
        }
        let mut sol = Self::empty(inst);
        for (g, &r) in counts.iter().enumerate() {
            for j in 0..r {
                sol.flip(inst, inst.index(g, j));
            }
        }
        Ok(sol)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of selected items, `|x|_1`.
    #[inline]
    pub fn ones(&self) -> usize {
        self.ones
    }

    pub fn group_counts(&self) -> &[usize] {
        &self.group_counts
    }

    /// `sum_i r_i (r_i - 1)`, i.e. twice the number of selected same-group pairs.
    pub fn pair_sum(&self) -> u64 {
        pair_sum_of(&self.group_counts)
    }

    /// Toggles one bit, keeping the cached counts in sync.
    #[inline]
    pub fn flip(&mut self, inst: &ProblemInstance, index: usize) {
        let g = inst.group_of(index);
        if self.bits[index] {
            self.bits[index] = false;
            self.ones -= 1;
            self.group_counts[g] -= 1;
        } else {
            self.bits[index] = true;
            self.ones += 1;
            self.group_counts[g] += 1;
        }
    }

    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }
}

impl fmt::Display for Solution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl Serialize for Solution {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// `sum_i r_i (r_i - 1)` over a count vector.
pub fn pair_sum_of(counts: &[usize]) -> u64 {
    counts
        .iter()
        .map(|&r| (r as u64) * (r as u64).saturating_sub(1))
        .sum()
}

/// The lexicographic fitness pair `(p', beta')`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessValue {
    pub penalized_profit: f64,
    pub penalized_beta: f64,
}

impl FitnessValue {
    pub const INFEASIBLE_PROFIT: f64 = -1.0;

    pub fn new(penalized_profit: f64, penalized_beta: f64) -> Self {
        Self {
            penalized_profit,
            penalized_beta,
        }
    }

    /// Lexicographic order: larger profit first, then smaller beta.
    pub fn compare(&self, other: &Self) -> Ordering {
        fitness_compare(self, other)
    }

    /// `self` is at least as good as `other`.
    pub fn at_least(&self, other: &Self) -> bool {
        self.compare(other) != Ordering::Less
    }
}

impl fmt::Display for FitnessValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.penalized_profit, self.penalized_beta)
    }
}

/// Total order on fitness values; ties within [`TIE_TOLERANCE`] compare equal.
pub fn fitness_compare(a: &FitnessValue, b: &FitnessValue) -> Ordering {
    if !approx_eq(a.penalized_profit, b.penalized_profit) {
        return a.penalized_profit.total_cmp(&b.penalized_profit);
    }
    if approx_eq(a.penalized_beta, b.penalized_beta) {
        Ordering::Equal
    } else {
        b.penalized_beta.total_cmp(&a.penalized_beta)
    }
}

/// `E[W(x)] = a * |x|_1`.
pub fn expected_weight(inst: &ProblemInstance, x: &Solution) -> f64 {
    inst.expected_item_weight() * x.ones() as f64
}

/// `c * sum_i r_i (r_i - 1)`, the within-group covariance contribution.
pub fn covariance_term(inst: &ProblemInstance, x: &Solution) -> f64 {
    inst.covariance() * x.pair_sum() as f64
}

/// `Var[W(x)] = d * |x|_1 + covariance_term`.
pub fn weight_variance(inst: &ProblemInstance, x: &Solution) -> f64 {
    variance_from_parts(inst, x.ones(), x.pair_sum())
}

#[inline]
pub(crate) fn variance_from_parts(inst: &ProblemInstance, ones: usize, pair_sum: u64) -> f64 {
    inst.item_variance() * ones as f64 + inst.covariance() * pair_sum as f64
}

/// `Var / (Var + (B - E)^2)`; only defined while `E[W(x)] < B`.
pub fn chebyshev_surrogate(inst: &ProblemInstance, x: &Solution) -> Result<f64, ModelError> {
    let expected = expected_weight(inst, x);
    if expected >= inst.budget() {
        return Err(ModelError::SurrogateUndefined {
            expected,
            budget: inst.budget(),
        });
    }
    Ok(surrogate_unchecked(
        weight_variance(inst, x),
        inst.budget() - expected,
    ))
}

#[inline]
fn surrogate_unchecked(variance: f64, slack: f64) -> f64 {
    variance / (variance + slack * slack)
}

/// Chebyshev surrogate below the budget, `1 + E - B` otherwise.
pub fn penalized_beta(inst: &ProblemInstance, x: &Solution) -> f64 {
    penalized_beta_from_parts(inst, x.ones(), x.pair_sum())
}

#[inline]
pub(crate) fn penalized_beta_from_parts(inst: &ProblemInstance, ones: usize, pair_sum: u64) -> f64 {
    let expected = inst.expected_item_weight() * ones as f64;
    if expected < inst.budget() {
        surrogate_unchecked(
            variance_from_parts(inst, ones, pair_sum),
            inst.budget() - expected,
        )
    } else {
        1.0 + expected - inst.budget()
    }
}

/// Plain profit `p(x) = sum p_ij x_ij`.
pub fn profit(inst: &ProblemInstance, x: &Solution) -> f64 {
    x.selected().map(|i| inst.profits()[i]).sum()
}

/// `p(x)` when surrogate-feasible, `-1` otherwise.
pub fn penalized_profit(inst: &ProblemInstance, x: &Solution) -> f64 {
    fitness(inst, x).penalized_profit
}

/// Whether a penalized beta satisfies the tolerance `alpha` (ties count as feasible).
#[inline]
pub fn beta_within_tolerance(inst: &ProblemInstance, beta: f64) -> bool {
    le_with_ties(beta, inst.alpha())
}

pub fn is_surrogate_feasible(inst: &ProblemInstance, x: &Solution) -> bool {
    beta_within_tolerance(inst, penalized_beta(inst, x))
}

/// The fitness pair `(p'(x), beta'(x))`.
pub fn fitness(inst: &ProblemInstance, x: &Solution) -> FitnessValue {
    fitness_from_parts(inst, x.ones(), x.pair_sum(), profit(inst, x))
}

/// Fitness from cached aggregates; used by the incremental search loop.
#[inline]
pub fn fitness_from_parts(
    inst: &ProblemInstance,
    ones: usize,
    pair_sum: u64,
    profit: f64,
) -> FitnessValue {
    let beta = penalized_beta_from_parts(inst, ones, pair_sum);
    let p = if beta_within_tolerance(inst, beta) {
        profit
    } else {
        FitnessValue::INFEASIBLE_PROFIT
    };
    FitnessValue::new(p, beta)
}
