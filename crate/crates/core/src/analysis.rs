//! Level structure of the search space and brute-force oracles.
//!
//! A level is the set of solutions with the same number of selected items.
//! Within a level the covariance is minimized by balanced solutions (group
//! counts differ by at most one) and maximized by packing full groups. Level
//! feasibility therefore reduces to checking the balanced witness against
//! the covariance bound derived from the surrogate.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::AnalysisError;
use crate::exec::Execution;
use crate::model::{
    self, fitness_compare, le_with_ties, pair_sum_of, FitnessValue, ProblemInstance, Solution,
};

/// Largest `n` accepted by [`brute_force_optimum`].
pub const BRUTE_FORCE_LIMIT: usize = 24;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelSummary {
    pub level: usize,
    pub balanced_covariance: f64,
    pub most_unbalanced_covariance: f64,
    /// `None` when `a * level >= B` (no slack, the bound is undefined).
    pub feasible_covariance_bound: Option<f64>,
    pub level_feasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleResult {
    pub optimum_fitness: FitnessValue,
    pub optimum_solutions: Vec<Solution>,
    pub max_feasible_level: usize,
    pub per_level: Vec<LevelSummary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LevelClass {
    /// Feasible, and no single addition stays feasible.
    Gamma,
    /// Feasible, and at least one single addition stays feasible.
    Zeta,
    Infeasible,
}

/// How [`brute_force_optimum`] compares fitness values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ComparisonMode {
    /// Floating point with the tie tolerance of [`model::fitness_compare`].
    #[default]
    Tolerant,
    /// Exact rational arithmetic on the (exactly representable) f64 inputs.
    Exact,
}

fn check_level(inst: &ProblemInstance, level: usize) -> Result<(), AnalysisError> {
    if level > inst.len() {
        return Err(AnalysisError::LevelOutOfRange {
            level,
            n: inst.len(),
        });
    }
    Ok(())
}

/// Group counts of a balanced solution at `level`: `level mod K` groups hold
/// `floor(level/K) + 1` items, the rest hold `floor(level/K)`.
pub fn balanced_counts(inst: &ProblemInstance, level: usize) -> Result<Vec<usize>, AnalysisError> {
    let k = inst.groups();
    let q = level / k;
    let t = level % k;
    if q + usize::from(t > 0) > inst.group_size() {
        return Err(AnalysisError::NoBalancedSolution {
            level,
            groups: k,
            group_size: inst.group_size(),
        });
    }
    Ok((0..k).map(|g| if g < t { q + 1 } else { q }).collect())
}

/// Group counts of the most unbalanced solution: full groups plus one remainder.
pub fn most_unbalanced_counts(
    inst: &ProblemInstance,
    level: usize,
) -> Result<Vec<usize>, AnalysisError> {
    check_level(inst, level)?;
    let m = inst.group_size();
    let full = level / m;
    let rem = level % m;
    Ok((0..inst.groups())
        .map(|g| match g.cmp(&full) {
            Ordering::Less => m,
            Ordering::Equal => rem,
            Ordering::Greater => 0,
        })
        .collect())
}

pub fn balanced_solution(inst: &ProblemInstance, level: usize) -> Result<Solution, AnalysisError> {
    let counts = balanced_counts(inst, level)?;
    Ok(Solution::from_group_counts(inst, &counts).expect("balanced counts fit the groups"))
}

/// Covariance term of a balanced solution with `level` items.
pub fn balanced_covariance(inst: &ProblemInstance, level: usize) -> Result<f64, AnalysisError> {
    let counts = balanced_counts(inst, level)?;
    Ok(inst.covariance() * pair_sum_of(&counts) as f64)
}

/// Covariance term of the most unbalanced solution with `level` items.
pub fn most_unbalanced_covariance(
    inst: &ProblemInstance,
    level: usize,
) -> Result<f64, AnalysisError> {
    let counts = most_unbalanced_counts(inst, level)?;
    Ok(inst.covariance() * pair_sum_of(&counts) as f64)
}

/// Slack term `(B - a*level)^2 * alpha / (1 - alpha)`.
fn scaled_slack(inst: &ProblemInstance, level: usize) -> Result<f64, AnalysisError> {
    let expected = inst.expected_item_weight() * level as f64;
    if expected >= inst.budget() {
        return Err(AnalysisError::NoSlack {
            expected,
            budget: inst.budget(),
        });
    }
    let slack = inst.budget() - expected;
    Ok(slack * slack * inst.alpha() / (1.0 - inst.alpha()))
}

/// Upper bound on the covariance term of a feasible solution with `level` items:
/// `(B - a*level)^2 * alpha / (1 - alpha) - level * d`.
pub fn feasible_covariance_bound(
    inst: &ProblemInstance,
    level: usize,
) -> Result<f64, AnalysisError> {
    Ok(scaled_slack(inst, level)? - level as f64 * inst.item_variance())
}

/// Whether a covariance term `covariance` at `level` satisfies the bound.
///
/// Compares `level*d + covariance` against the scaled slack so that no
/// cancellation happens before the comparison.
pub fn covariance_within_bound(
    inst: &ProblemInstance,
    level: usize,
    covariance: f64,
) -> Result<bool, AnalysisError> {
    let slack = scaled_slack(inst, level)?;
    Ok(le_with_ties(
        level as f64 * inst.item_variance() + covariance,
        slack,
    ))
}

/// Whether some solution with `level` items is surrogate-feasible.
pub fn level_feasible(inst: &ProblemInstance, level: usize) -> Result<bool, AnalysisError> {
    let s = balanced_covariance(inst, level)?;
    match covariance_within_bound(inst, level, s) {
        Ok(ok) => Ok(ok),
        Err(AnalysisError::NoSlack { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

pub fn level_summary(inst: &ProblemInstance, level: usize) -> Result<LevelSummary, AnalysisError> {
    Ok(LevelSummary {
        level,
        balanced_covariance: balanced_covariance(inst, level)?,
        most_unbalanced_covariance: most_unbalanced_covariance(inst, level)?,
        feasible_covariance_bound: feasible_covariance_bound(inst, level).ok(),
        level_feasible: level_feasible(inst, level)?,
    })
}

/// Summaries for every level `0..=n`.
pub fn level_summaries(inst: &ProblemInstance) -> Vec<LevelSummary> {
    (0..=inst.len())
        .map(|l| level_summary(inst, l).expect("every level up to n has a balanced witness"))
        .collect()
}

/// Largest level holding a surrogate-feasible solution (0 if only the empty one).
pub fn max_feasible_level(inst: &ProblemInstance) -> usize {
    (0..=inst.len())
        .rev()
        .find(|&l| level_feasible(inst, l).unwrap_or(false))
        .unwrap_or(0)
}

/// Splits a level into members that can still take one more item and those that cannot.
pub fn classify_level_member(inst: &ProblemInstance, x: &Solution) -> LevelClass {
    if !model::is_surrogate_feasible(inst, x) {
        return LevelClass::Infeasible;
    }
    let mut y = x.clone();
    for idx in 0..inst.len() {
        if x.get(idx) {
            continue;
        }
        y.flip(inst, idx);
        let ok = model::is_surrogate_feasible(inst, &y);
        y.flip(inst, idx);
        if ok {
            return LevelClass::Zeta;
        }
    }
    LevelClass::Gamma
}

/// Multiset of the profits selected by a solution, stored in descending order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfitProfile(Vec<f64>);

impl ProfitProfile {
    pub fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Multiset inclusion `other ⊆ self`.
    pub fn contains(&self, other: &ProfitProfile) -> bool {
        let mut mine = self.0.iter().peekable();
        'outer: for v in &other.0 {
            while let Some(&&w) = mine.peek() {
                mine.next();
                match w.total_cmp(v) {
                    Ordering::Equal => continue 'outer,
                    Ordering::Greater => continue,
                    Ordering::Less => return false,
                }
            }
            return false;
        }
        true
    }
}

pub fn profit_profile(inst: &ProblemInstance, x: &Solution) -> ProfitProfile {
    ProfitProfile::from_values(x.selected().map(|i| inst.profits()[i]).collect())
}

/// The `j` largest profit values of the instance, with multiplicity.
pub fn top_profits(inst: &ProblemInstance, j: usize) -> ProfitProfile {
    let mut all = ProfitProfile::from_values(inst.profits().to_vec());
    all.0.truncate(j);
    all
}

/// Whether `profile` contains the `j` largest profits of the instance.
pub fn profile_contains(profile: &ProfitProfile, j: usize, inst: &ProblemInstance) -> bool {
    profile.contains(&top_profits(inst, j))
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct ExactFitness {
    profit: BigRational,
    beta: BigRational,
    feasible: bool,
}

fn ratio(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite instance parameter")
}

fn exact_fitness(inst: &ProblemInstance, mask: u64, ones: usize, pair_sum: u64) -> ExactFitness {
    let count = |k: u64| BigRational::from_integer(BigInt::from(k));
    let a = ratio(inst.expected_item_weight());
    let budget = ratio(inst.budget());
    let expected = a * count(ones as u64);
    let beta = if expected < budget {
        let var = ratio(inst.item_variance()) * count(ones as u64)
            + ratio(inst.covariance()) * count(pair_sum);
        let slack = &budget - &expected;
        let denom = &var + &slack * &slack;
        if denom.is_zero() {
            BigRational::zero()
        } else {
            var / denom
        }
    } else {
        BigRational::one() + expected - budget
    };
    let feasible = beta <= ratio(inst.alpha());
    let profit = if feasible {
        (0..inst.len())
            .filter(|k| mask >> k & 1 == 1)
            .map(|k| ratio(inst.profits()[k]))
            .fold(BigRational::zero(), |acc, p| acc + p)
    } else {
        -BigRational::one()
    };
    ExactFitness {
        profit,
        beta,
        feasible,
    }
}

fn exact_compare(a: &ExactFitness, b: &ExactFitness) -> Ordering {
    a.profit.cmp(&b.profit).then_with(|| b.beta.cmp(&a.beta))
}

struct Partial<K> {
    best: Option<K>,
    masks: Vec<u64>,
    max_level: usize,
}

impl<K> Partial<K> {
    fn offer(&mut self, key: K, mask: u64, cmp: impl Fn(&K, &K) -> Ordering) {
        match self.best.as_ref().map(|b| cmp(&key, b)) {
            None | Some(Ordering::Greater) => {
                self.best = Some(key);
                self.masks.clear();
                self.masks.push(mask);
            }
            Some(Ordering::Equal) => self.masks.push(mask),
            Some(Ordering::Less) => {}
        }
    }

    fn merge(mut self, other: Self, cmp: impl Fn(&K, &K) -> Ordering) -> Self {
        self.max_level = self.max_level.max(other.max_level);
        let Some(theirs) = other.best else {
            return self;
        };
        match self.best.as_ref().map(|b| cmp(&theirs, b)) {
            None | Some(Ordering::Greater) => {
                self.best = Some(theirs);
                self.masks = other.masks;
            }
            Some(Ordering::Equal) => self.masks.extend(other.masks),
            Some(Ordering::Less) => {}
        }
        self
    }
}

/// Sums of profits over every subset of `len` consecutive items from `offset`.
fn subset_sums(profits: &[f64], offset: usize, len: usize) -> Vec<f64> {
    (0u64..1 << len)
        .map(|mask| {
            (0..len)
                .filter(|k| mask >> k & 1 == 1)
                .map(|k| profits[offset + k])
                .sum()
        })
        .collect()
}

/// Walks masks `gray(k)` for `k` in `[start, end)`, maintaining counts incrementally.
fn walk_gray<F: FnMut(u64, usize, u64)>(
    inst: &ProblemInstance,
    start: u64,
    end: u64,
    mut visit: F,
) {
    let gray = |k: u64| k ^ (k >> 1);
    let m = inst.group_size();
    let mut mask = gray(start);
    let mut counts = vec![0usize; inst.groups()];
    for k in (0..inst.len()).filter(|k| mask >> k & 1 == 1) {
        counts[k / m] += 1;
    }
    let mut ones = mask.count_ones() as usize;
    let mut pair_sum = pair_sum_of(&counts);
    visit(mask, ones, pair_sum);
    for k in start + 1..end {
        let bit = k.trailing_zeros() as usize;
        let g = bit / m;
        let r = counts[g] as u64;
        if mask >> bit & 1 == 1 {
            pair_sum -= 2 * (r - 1);
            counts[g] -= 1;
            ones -= 1;
        } else {
            pair_sum += 2 * r;
            counts[g] += 1;
            ones += 1;
        }
        mask ^= 1 << bit;
        visit(mask, ones, pair_sum);
    }
}

/// Enumerates all `2^n` solutions and returns the lexicographic optimum,
/// all its maximizers (sorted by mask), the highest feasible level and the
/// closed-form per-level table.
pub fn brute_force_optimum(
    inst: &ProblemInstance,
    mode: ComparisonMode,
    exec: Execution,
) -> Result<OracleResult, AnalysisError> {
    let n = inst.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(AnalysisError::TooLarge {
            n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let total = 1u64 << n;
    let chunk = total.min(1 << 14);
    let ranges: Vec<(u64, u64)> = (0..total / chunk)
        .map(|c| (c * chunk, (c + 1) * chunk))
        .collect();

    let (optimum_fitness, mut masks, max_level) = match mode {
        ComparisonMode::Tolerant => {
            let lo_bits = n.min(12);
            let lo = subset_sums(inst.profits(), 0, lo_bits);
            let hi = subset_sums(inst.profits(), lo_bits, n - lo_bits);
            let lo_mask = (1u64 << lo_bits) - 1;
            let partials = exec.map(ranges, |(start, end)| {
                let mut part = Partial {
                    best: None,
                    masks: Vec::new(),
                    max_level: 0,
                };
                walk_gray(inst, start, end, |mask, ones, pair_sum| {
                    let profit = lo[(mask & lo_mask) as usize] + hi[(mask >> lo_bits) as usize];
                    let f = model::fitness_from_parts(inst, ones, pair_sum, profit);
                    if f.penalized_profit >= 0.0 {
                        part.max_level = part.max_level.max(ones);
                    }
                    part.offer(f, mask, fitness_compare);
                });
                part
            });
            let merged = partials
                .into_iter()
                .reduce(|a, b| a.merge(b, fitness_compare))
                .expect("at least one chunk");
            (
                merged.best.expect("the empty solution is always visited"),
                merged.masks,
                merged.max_level,
            )
        }
        ComparisonMode::Exact => {
            let partials = exec.map(ranges, |(start, end)| {
                let mut part = Partial {
                    best: None,
                    masks: Vec::new(),
                    max_level: 0,
                };
                walk_gray(inst, start, end, |mask, ones, pair_sum| {
                    let f = exact_fitness(inst, mask, ones, pair_sum);
                    if f.feasible {
                        part.max_level = part.max_level.max(ones);
                    }
                    part.offer(f, mask, exact_compare);
                });
                part
            });
            let merged = partials
                .into_iter()
                .reduce(|a, b| a.merge(b, exact_compare))
                .expect("at least one chunk");
            let first = *merged.masks.iter().min().expect("nonempty maximizer set");
            let fitness = model::fitness(inst, &Solution::from_mask(inst, first));
            (fitness, merged.masks, merged.max_level)
        }
    };
    masks.sort_unstable();
    Ok(OracleResult {
        optimum_fitness,
        optimum_solutions: masks
            .into_iter()
            .map(|mask| Solution::from_mask(inst, mask))
            .collect(),
        max_feasible_level: max_level,
        per_level: level_summaries(inst),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WeightModel;

    fn inst(k: usize, m: usize, a: f64, d: f64, c: f64, b: f64, alpha: f64) -> ProblemInstance {
        let w = WeightModel {
            expected_weight: a,
            variance: d,
            covariance: c,
        };
        ProblemInstance::unit_profits(k, m, w, b, alpha).unwrap()
    }

    #[test]
    fn balanced_covariance_examples() {
        let i = inst(2, 3, 1.0, 1.0, 1.0, 4.0, 0.5);
        for l in 0..=2 {
            assert_eq!(balanced_covariance(&i, l).unwrap(), 0.0);
        }
        assert_eq!(balanced_covariance(&i, 3).unwrap(), 2.0);
        let i = inst(3, 2, 1.0, 1.0, 1.0, 4.0, 0.5);
        assert_eq!(balanced_covariance(&i, 6).unwrap(), 6.0);
        assert!(matches!(
            balanced_covariance(&i, 7),
            Err(AnalysisError::NoBalancedSolution { .. })
        ));
    }

    #[test]
    fn most_unbalanced_covariance_examples() {
        let i = inst(2, 3, 1.0, 1.0, 1.0, 4.0, 0.5);
        assert_eq!(most_unbalanced_covariance(&i, 3).unwrap(), 6.0);
        assert_eq!(most_unbalanced_covariance(&i, 4).unwrap(), 6.0);
        assert_eq!(most_unbalanced_covariance(&i, 0).unwrap(), 0.0);
        assert_eq!(most_unbalanced_covariance(&i, 1).unwrap(), 0.0);
        assert!(most_unbalanced_covariance(&i, 7).is_err());
    }

    #[test]
    fn covariance_bound_examples() {
        let i = inst(2, 2, 1.0, 1.0, 1.0, 4.0, 0.2);
        assert!((feasible_covariance_bound(&i, 2).unwrap() - -1.0).abs() < 1e-12);
        assert!(!level_feasible(&i, 2).unwrap());
        let b0 = feasible_covariance_bound(&i, 0).unwrap();
        assert!((b0 - 4.0).abs() < 1e-12);
        let i = inst(2, 2, 1.0, 1.0, 1.0, 10.0, 0.5);
        assert_eq!(feasible_covariance_bound(&i, 4).unwrap(), 32.0);
        assert!(matches!(
            feasible_covariance_bound(&inst(1, 20, 1.0, 1.0, 1.0, 10.0, 0.5), 10),
            Err(AnalysisError::NoSlack { .. })
        ));
    }

    #[test]
    fn max_feasible_level_examples() {
        let i = inst(2, 3, 1.0, 1.0, 1.0, 4.0, 0.5);
        assert_eq!(max_feasible_level(&i), 2);
        let tiny = inst(2, 3, 1.0, 1.0, 1.0, 1.0, 0.05);
        assert_eq!(max_feasible_level(&tiny), 0);
        let loose = inst(2, 3, 1.0, 0.001, 0.001, 100.0, 0.9);
        assert_eq!(max_feasible_level(&loose), 6);
    }

    #[test]
    fn classify_examples() {
        let i = inst(2, 3, 1.0, 1.0, 1.0, 4.0, 0.5);
        assert_eq!(
            classify_level_member(&i, &Solution::empty(&i)),
            LevelClass::Zeta
        );
        let top = Solution::parse(&i, "100100").unwrap();
        assert_eq!(classify_level_member(&i, &top), LevelClass::Gamma);
        assert_eq!(
            classify_level_member(&i, &Solution::full(&i)),
            LevelClass::Infeasible
        );
    }

    #[test]
    fn unbalanced_member_can_be_stuck_while_balanced_peer_is_not() {
        // (2,0,0): Var 4, slack 4, beta 0.2. Its additions (3,0,0) and (2,1,0)
        // reach beta 0.5 and 5/14, while (1,1,0) can grow to (1,1,1) at beta 0.25.
        let i = inst(3, 3, 1.0, 1.0, 1.0, 6.0, 0.3);
        let stuck = Solution::parse(&i, "110000000").unwrap();
        let free = Solution::parse(&i, "100100000").unwrap();
        assert!(model::is_surrogate_feasible(&i, &stuck));
        assert_eq!(classify_level_member(&i, &stuck), LevelClass::Gamma);
        assert_eq!(classify_level_member(&i, &free), LevelClass::Zeta);
    }

    #[test]
    fn profiles() {
        let w = WeightModel {
            expected_weight: 1.0,
            variance: 1.0,
            covariance: 1.0,
        };
        let i = ProblemInstance::with_profit_matrix(
            w,
            10.0,
            0.5,
            &[
                vec![5.0, 3.0, 1.0],
                vec![5.0, 3.0, 1.0],
                vec![5.0, 3.0, 1.0],
            ],
        )
        .unwrap();
        assert!(profit_profile(&i, &Solution::empty(&i)).is_empty());
        let x = Solution::parse(&i, "110 100 000").unwrap();
        let p = profit_profile(&i, &x);
        assert_eq!(p.values(), &[5.0, 5.0, 3.0]);
        assert!(profile_contains(&p, 0, &i));
        assert!(profile_contains(&p, 2, &i));
        assert!(!profile_contains(&p, 3, &i));
        let y = Solution::parse(&i, "100 100 100").unwrap();
        assert!(profile_contains(&profit_profile(&i, &y), 3, &i));
    }

    #[test]
    fn brute_force_small_instance() {
        let i = inst(2, 3, 1.0, 1.0, 1.0, 4.0, 0.5);
        let res = brute_force_optimum(&i, ComparisonMode::Tolerant, Execution::Sequential).unwrap();
        assert_eq!(res.max_feasible_level, 2);
        assert_eq!(res.optimum_fitness.penalized_profit, 2.0);
        assert!((res.optimum_fitness.penalized_beta - 1.0 / 3.0).abs() < 1e-15);
        // One item from each group: 3 * 3 choices.
        assert_eq!(res.optimum_solutions.len(), 9);
        let exact = brute_force_optimum(&i, ComparisonMode::Exact, Execution::Parallel).unwrap();
        assert_eq!(exact.optimum_solutions, res.optimum_solutions);
        assert_eq!(exact.max_feasible_level, 2);
    }

    #[test]
    fn brute_force_guard() {
        let i = inst(5, 5, 1.0, 1.0, 1.0, 4.0, 0.5);
        assert!(matches!(
            brute_force_optimum(&i, ComparisonMode::Tolerant, Execution::Sequential),
            Err(AnalysisError::TooLarge { n: 25, .. })
        ));
    }

    #[test]
    fn unconstrained_optimum_is_all_ones() {
        let i = inst(3, 3, 1.0, 0.01, 0.01, 1000.0, 0.99);
        let res = brute_force_optimum(&i, ComparisonMode::Tolerant, Execution::Parallel).unwrap();
        assert_eq!(res.optimum_solutions, vec![Solution::full(&i)]);
    }

    #[test]
    fn gray_walk_visits_every_mask_once() {
        let i = inst(2, 3, 1.0, 1.0, 1.0, 4.0, 0.5);
        let mut seen = [false; 64];
        walk_gray(&i, 0, 64, |mask, ones, pair_sum| {
            assert!(!seen[mask as usize]);
            seen[mask as usize] = true;
            let x = Solution::from_mask(&i, mask);
            assert_eq!(ones, x.ones());
            assert_eq!(pair_sum, x.pair_sum());
        });
        assert!(seen.iter().all(|&s| s));
    }
}
