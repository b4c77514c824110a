//! Randomized local search and the (1+1) EA on the penalized fitness.
//!
//! Both algorithms keep a single parent and accept an offspring whenever its
//! fitness is not worse. The loop is incremental: mutation operators report
//! the flipped indices and the fitness is updated from group-count deltas in
//! `O(#flips)`. Evaluation 0 is the initial solution; every offspring adds one
//! evaluation and the budget counts offspring only.

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{AlgorithmError, ModelError};
use crate::model::{self, approx_eq, FitnessValue, ProblemInstance, Solution};
use crate::rng::trial_rng;

/// Indices flipped by one mutation.
pub type FlipSet = SmallVec<[usize; 4]>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlgorithmKind {
    #[serde(rename = "rls")]
    Rls,
    #[serde(rename = "ea")]
    OnePlusOneEa,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 2] = [AlgorithmKind::Rls, AlgorithmKind::OnePlusOneEa];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Rls => "rls",
            AlgorithmKind::OnePlusOneEa => "ea",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "rls" => Some(AlgorithmKind::Rls),
            "ea" | "(1+1)ea" | "oneplusoneea" | "(1+1) ea" => Some(AlgorithmKind::OnePlusOneEa),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    UniformRandom,
    AllOnes,
    AllZeros,
    Given(Vec<bool>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmConfig {
    pub kind: AlgorithmKind,
    pub init: Init,
    pub seed: u64,
    /// Maximum number of offspring evaluated.
    pub max_evaluations: u64,
    /// Keep `(evaluation, fitness)` at every strict improvement.
    pub record_trajectory: bool,
    /// Recompute the fitness of every accepted state from scratch and fail on drift.
    pub verify_incremental: bool,
}

impl AlgorithmConfig {
    pub fn new(kind: AlgorithmKind, seed: u64, max_evaluations: u64) -> Self {
        Self {
            kind,
            init: Init::UniformRandom,
            seed,
            max_evaluations,
            record_trajectory: false,
            verify_incremental: false,
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_trajectory(mut self) -> Self {
        self.record_trajectory = true;
        self
    }

    pub fn with_verification(mut self) -> Self {
        self.verify_incremental = true;
        self
    }

    pub fn validate(&self, inst: &ProblemInstance) -> Result<(), AlgorithmError> {
        if self.max_evaluations == 0 {
            return Err(AlgorithmError::ZeroBudget);
        }
        if self.kind == AlgorithmKind::Rls && inst.len() < 2 {
            return Err(AlgorithmError::TooFewItems(inst.len()));
        }
        if let Init::Given(bits) = &self.init {
            if bits.len() != inst.len() {
                return Err(ModelError::LengthMismatch {
                    expected: inst.len(),
                    actual: bits.len(),
                }
                .into());
            }
        }
        Ok(())
    }
}

/// When a run stops before its budget is spent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Spend the whole budget.
    Budget,
    /// Stop at the first surrogate-feasible solution.
    Feasible,
    /// Stop once the current fitness is not worse than the target.
    Target(FitnessValue),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub evaluation: u64,
    pub fitness: FitnessValue,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub t_feasible: Option<u64>,
    pub t_optimal: Option<u64>,
    /// Offspring evaluated (the initial solution is evaluation 0 and not counted).
    pub evaluations: u64,
    pub initial_fitness: FitnessValue,
    pub final_solution: Solution,
    pub final_fitness: FitnessValue,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<TrajectoryPoint>>,
}

/// Draws the flip set of one RLS move: one uniform bit with probability 1/2,
/// otherwise a uniform unordered pair of distinct bits.
pub fn sample_rls_flips<R: Rng + ?Sized>(n: usize, rng: &mut R, out: &mut FlipSet) {
    debug_assert!(n >= 2);
    out.clear();
    if rng.random::<bool>() {
        out.push(rng.random_range(0..n));
    } else {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        out.push(i.min(j));
        out.push(i.max(j));
    }
}

/// Standard bit mutation: each index independently with probability `1/n`.
///
/// Gaps between flipped positions are drawn from a geometric distribution,
/// which has the same law as `n` independent Bernoulli trials.
pub fn sample_ea_flips<R: Rng + ?Sized>(
    gaps: &Geometric,
    n: usize,
    rng: &mut R,
    out: &mut FlipSet,
) {
    out.clear();
    let mut pos = gaps.sample(rng);
    while pos < n as u64 {
        out.push(pos as usize);
        pos = pos.saturating_add(1).saturating_add(gaps.sample(rng));
    }
}

fn ea_gaps(n: usize) -> Geometric {
    Geometric::new(1.0 / n.max(1) as f64).expect("1/n lies in (0, 1]")
}

/// RLS offspring of `x`; the parent is left untouched.
pub fn rls_mutate<R: Rng + ?Sized>(inst: &ProblemInstance, x: &Solution, rng: &mut R) -> Solution {
    let mut flips = FlipSet::new();
    sample_rls_flips(inst.len(), rng, &mut flips);
    let mut y = x.clone();
    for &i in &flips {
        y.flip(inst, i);
    }
    y
}

/// (1+1) EA offspring of `x`; the parent is left untouched.
pub fn ea_mutate<R: Rng + ?Sized>(inst: &ProblemInstance, x: &Solution, rng: &mut R) -> Solution {
    let mut flips = FlipSet::new();
    sample_ea_flips(&ea_gaps(inst.len()), inst.len(), rng, &mut flips);
    let mut y = x.clone();
    for &i in &flips {
        y.flip(inst, i);
    }
    y
}

/// One generation on plain values: returns the survivor, its fitness and
/// whether the offspring strictly improved on the parent.
pub fn step<R: Rng + ?Sized>(
    inst: &ProblemInstance,
    x: &Solution,
    fx: FitnessValue,
    kind: AlgorithmKind,
    rng: &mut R,
) -> (Solution, FitnessValue, bool) {
    let y = match kind {
        AlgorithmKind::Rls => rls_mutate(inst, x, rng),
        AlgorithmKind::OnePlusOneEa => ea_mutate(inst, x, rng),
    };
    let fy = model::fitness(inst, &y);
    match fy.compare(&fx) {
        Ordering::Less => (x.clone(), fx, false),
        Ordering::Equal => (y, fy, false),
        Ordering::Greater => (y, fy, true),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub improved: bool,
}

/// Incremental single-parent search state.
#[derive(Clone, Debug)]
pub struct Search<'a> {
    inst: &'a ProblemInstance,
    kind: AlgorithmKind,
    current: Solution,
    pair_sum: u64,
    profit: f64,
    fitness: FitnessValue,
    flips: FlipSet,
    gaps: Geometric,
    accepts_since_resync: usize,
}

impl<'a> Search<'a> {
    pub fn new(inst: &'a ProblemInstance, kind: AlgorithmKind, start: Solution) -> Self {
        let pair_sum = start.pair_sum();
        let profit = model::profit(inst, &start);
        let fitness = model::fitness_from_parts(inst, start.ones(), pair_sum, profit);
        Self {
            inst,
            kind,
            current: start,
            pair_sum,
            profit,
            fitness,
            flips: FlipSet::new(),
            gaps: ea_gaps(inst.len()),
            accepts_since_resync: 0,
        }
    }

    pub fn current(&self) -> &Solution {
        &self.current
    }

    pub fn fitness(&self) -> FitnessValue {
        self.fitness
    }

    /// Indices flipped by the most recent offspring.
    pub fn last_flips(&self) -> &[usize] {
        &self.flips
    }

    fn apply_flips(&mut self) {
        let profits = self.inst.profits();
        for &i in &self.flips {
            let r = self.current.group_counts()[self.inst.group_of(i)] as u64;
            if self.current.get(i) {
                self.pair_sum -= 2 * (r - 1);
                self.profit -= profits[i];
            } else {
                self.pair_sum += 2 * r;
                self.profit += profits[i];
            }
            self.current.flip(self.inst, i);
        }
    }

    /// Generates one offspring and applies the accept-if-not-worse rule.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> StepOutcome {
        let n = self.inst.len();
        match self.kind {
            AlgorithmKind::Rls => sample_rls_flips(n, rng, &mut self.flips),
            AlgorithmKind::OnePlusOneEa => sample_ea_flips(&self.gaps, n, rng, &mut self.flips),
        }
        let (saved_pairs, saved_profit) = (self.pair_sum, self.profit);
        self.apply_flips();
        let candidate =
            model::fitness_from_parts(self.inst, self.current.ones(), self.pair_sum, self.profit);
        match candidate.compare(&self.fitness) {
            Ordering::Less => {
                for &i in &self.flips {
                    self.current.flip(self.inst, i);
                }
                self.pair_sum = saved_pairs;
                self.profit = saved_profit;
                StepOutcome {
                    accepted: false,
                    improved: false,
                }
            }
            ord => {
                self.fitness = candidate;
                self.accepts_since_resync += 1;
                // Bound floating-point drift of the running profit sum.
                if self.accepts_since_resync >= n {
                    self.accepts_since_resync = 0;
                    self.profit = model::profit(self.inst, &self.current);
                    self.fitness = model::fitness_from_parts(
                        self.inst,
                        self.current.ones(),
                        self.pair_sum,
                        self.profit,
                    );
                }
                StepOutcome {
                    accepted: true,
                    improved: ord == Ordering::Greater,
                }
            }
        }
    }

    /// Whether the cached aggregates agree with a from-scratch evaluation.
    pub fn consistent(&self) -> bool {
        let fresh = model::fitness(self.inst, &self.current);
        self.pair_sum == self.current.pair_sum()
            && approx_eq(fresh.penalized_profit, self.fitness.penalized_profit)
            && approx_eq(fresh.penalized_beta, self.fitness.penalized_beta)
    }

    pub fn into_solution(self) -> Solution {
        self.current
    }
}

/// A state the search moved to, as seen by a run observer.
#[derive(Debug)]
pub struct AcceptedStep<'s> {
    pub evaluation: u64,
    pub solution: &'s Solution,
    pub previous: FitnessValue,
    pub fitness: FitnessValue,
    pub improved: bool,
}

/// Runs until the target fitness is reached or the budget is spent.
pub fn run(
    inst: &ProblemInstance,
    cfg: &AlgorithmConfig,
    target: Option<FitnessValue>,
) -> Result<RunRecord, AlgorithmError> {
    let stop = target.map_or(StopRule::Budget, StopRule::Target);
    run_observed(inst, cfg, stop, |_| {})
}

pub fn run_until(
    inst: &ProblemInstance,
    cfg: &AlgorithmConfig,
    stop: StopRule,
) -> Result<RunRecord, AlgorithmError> {
    run_observed(inst, cfg, stop, |_| {})
}

/// Like [`run_until`], calling `observer` on every accepted offspring.
pub fn run_observed<F>(
    inst: &ProblemInstance,
    cfg: &AlgorithmConfig,
    stop: StopRule,
    mut observer: F,
) -> Result<RunRecord, AlgorithmError>
where
    F: FnMut(&AcceptedStep<'_>),
{
    cfg.validate(inst)?;
    let mut rng = trial_rng(cfg.seed);
    let start = match &cfg.init {
        Init::UniformRandom => {
            let bits = (0..inst.len()).map(|_| rng.random::<bool>()).collect();
            Solution::from_bits(inst, bits)?
        }
        Init::AllOnes => Solution::full(inst),
        Init::AllZeros => Solution::empty(inst),
        Init::Given(bits) => Solution::from_bits(inst, bits.clone())?,
    };
    let mut search = Search::new(inst, cfg.kind, start);
    let initial_fitness = search.fitness();
    let target = match stop {
        StopRule::Target(t) => Some(t),
        _ => None,
    };
    let feasible = |f: &FitnessValue| model::beta_within_tolerance(inst, f.penalized_beta);
    let reached = |f: &FitnessValue| target.is_some_and(|t| f.at_least(&t));

    let mut t_feasible = feasible(&initial_fitness).then_some(0);
    let mut t_optimal = reached(&initial_fitness).then_some(0);
    let mut trajectory = cfg.record_trajectory.then(Vec::new);
    let done = |t_feasible: Option<u64>, t_optimal: Option<u64>| match stop {
        StopRule::Budget => false,
        StopRule::Feasible => t_feasible.is_some(),
        StopRule::Target(_) => t_optimal.is_some(),
    };

    let mut evaluations = 0;
    while evaluations < cfg.max_evaluations && !done(t_feasible, t_optimal) {
        evaluations += 1;
        let previous = search.fitness();
        let outcome = search.step(&mut rng);
        if !outcome.accepted {
            continue;
        }
        let fitness = search.fitness();
        if cfg.verify_incremental && !search.consistent() {
            return Err(AlgorithmError::StateDrift {
                evaluation: evaluations,
            });
        }
        observer(&AcceptedStep {
            evaluation: evaluations,
            solution: search.current(),
            previous,
            fitness,
            improved: outcome.improved,
        });
        if outcome.improved {
            if let Some(points) = trajectory.as_mut() {
                points.push(TrajectoryPoint {
                    evaluation: evaluations,
                    fitness,
                });
            }
        }
        if t_feasible.is_none() && feasible(&fitness) {
            t_feasible = Some(evaluations);
        }
        if t_optimal.is_none() && reached(&fitness) {
            t_optimal = Some(evaluations);
        }
    }

    let final_fitness = search.fitness();
    Ok(RunRecord {
        seed: cfg.seed,
        t_feasible,
        t_optimal,
        evaluations,
        initial_fitness,
        final_solution: search.into_solution(),
        final_fitness,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WeightModel;
    use crate::rng::trial_rng;

    fn instance(k: usize, m: usize, b: f64, alpha: f64) -> ProblemInstance {
        let w = WeightModel {
            expected_weight: 1.0,
            variance: 1.0,
            covariance: 1.0,
        };
        ProblemInstance::unit_profits(k, m, w, b, alpha).unwrap()
    }

    #[test]
    fn rls_requires_two_items() {
        let inst = instance(1, 1, 3.0, 0.5);
        let cfg = AlgorithmConfig::new(AlgorithmKind::Rls, 1, 10);
        assert_eq!(cfg.validate(&inst), Err(AlgorithmError::TooFewItems(1)));
        let ea = AlgorithmConfig::new(AlgorithmKind::OnePlusOneEa, 1, 10);
        assert!(ea.validate(&inst).is_ok());
        let zero = AlgorithmConfig::new(AlgorithmKind::OnePlusOneEa, 1, 0);
        assert_eq!(zero.validate(&inst), Err(AlgorithmError::ZeroBudget));
    }

    #[test]
    fn given_init_must_match_length() {
        let inst = instance(2, 2, 3.0, 0.5);
        let cfg =
            AlgorithmConfig::new(AlgorithmKind::Rls, 1, 10).with_init(Init::Given(vec![true]));
        assert!(cfg.validate(&inst).is_err());
    }

    #[test]
    fn rls_flips_are_one_index_or_distinct_sorted_pair() {
        let mut rng = trial_rng(3);
        let mut flips = FlipSet::new();
        for _ in 0..10_000 {
            sample_rls_flips(5, &mut rng, &mut flips);
            match flips.as_slice() {
                [i] => assert!(*i < 5),
                [i, j] => assert!(i < j && *j < 5),
                other => panic!("bad flip set {other:?}"),
            }
        }
    }

    #[test]
    fn mutation_leaves_parent_untouched() {
        let inst = instance(2, 3, 3.0, 0.5);
        let parent = Solution::parse(&inst, "100100").unwrap();
        let mut rng = trial_rng(9);
        for _ in 0..100 {
            let child = rls_mutate(&inst, &parent, &mut rng);
            let d = child
                .bits()
                .iter()
                .zip(parent.bits())
                .filter(|(a, b)| a != b)
                .count();
            assert!(d == 1 || d == 2);
            let _ = ea_mutate(&inst, &parent, &mut rng);
        }
        assert_eq!(parent.to_string(), "100100");
    }

    #[test]
    fn ea_on_single_item_always_flips() {
        let inst = instance(1, 1, 3.0, 0.5);
        let mut rng = trial_rng(1);
        let x = Solution::empty(&inst);
        for _ in 0..50 {
            assert_eq!(ea_mutate(&inst, &x, &mut rng).ones(), 1);
        }
    }

    #[test]
    fn step_accepts_equal_fitness() {
        // All single-item solutions of a one-group instance have equal fitness.
        let inst = instance(1, 4, 10.0, 0.9);
        let x = Solution::parse(&inst, "1000").unwrap();
        let fx = model::fitness(&inst, &x);
        let mut rng = trial_rng(5);
        let mut moved = false;
        for _ in 0..200 {
            let (y, fy, improved) = step(&inst, &x, fx, AlgorithmKind::Rls, &mut rng);
            if fy.compare(&fx) == Ordering::Equal && y != x {
                assert!(!improved);
                moved = true;
            }
        }
        assert!(moved);
    }

    #[test]
    fn step_rejects_infeasible_offspring_of_feasible_parent() {
        // Only the empty solution and singletons are feasible here.
        let inst = instance(1, 3, 2.5, 0.5);
        let x = Solution::parse(&inst, "100").unwrap();
        let fx = model::fitness(&inst, &x);
        assert_eq!(fx.penalized_profit, 1.0);
        let mut rng = trial_rng(11);
        for _ in 0..500 {
            let (y, fy, _) = step(&inst, &x, fx, AlgorithmKind::OnePlusOneEa, &mut rng);
            assert!(fy.penalized_profit >= 0.0);
            assert!(y.ones() <= 1);
        }
    }

    #[test]
    fn step_accepts_penalty_descent() {
        let inst = instance(1, 4, 2.0, 0.5);
        let x = Solution::full(&inst);
        let fx = model::fitness(&inst, &x);
        assert_eq!(fx.penalized_beta, 3.0);
        let mut rng = trial_rng(2);
        let mut descended = false;
        for _ in 0..200 {
            let (y, _, improved) = step(&inst, &x, fx, AlgorithmKind::Rls, &mut rng);
            assert!(y.ones() <= 4);
            descended |= improved && y.ones() < 4;
        }
        assert!(descended);
    }

    #[test]
    fn all_zeros_start_is_feasible_at_zero() {
        let inst = instance(2, 3, 4.0, 0.5);
        let cfg = AlgorithmConfig::new(AlgorithmKind::Rls, 4, 100).with_init(Init::AllZeros);
        let rec = run(&inst, &cfg, None).unwrap();
        assert_eq!(rec.t_feasible, Some(0));
        assert_eq!(rec.evaluations, 100);
    }

    #[test]
    fn runs_are_deterministic_and_verified() {
        let inst = instance(3, 3, 5.0, 0.3);
        for kind in AlgorithmKind::ALL {
            let cfg = AlgorithmConfig::new(kind, 77, 5_000)
                .with_init(Init::AllOnes)
                .with_trajectory()
                .with_verification();
            let a = run(&inst, &cfg, None).unwrap();
            let b = run(&inst, &cfg, None).unwrap();
            assert_eq!(a, b);
            assert!(a.t_feasible.is_some());
            let traj = a.trajectory.unwrap();
            assert!(traj
                .windows(2)
                .all(|w| w[1].fitness.compare(&w[0].fitness) == Ordering::Greater));
        }
    }

    #[test]
    fn target_stops_run_early() {
        let inst = instance(2, 2, 100.0, 0.9);
        let target = model::fitness(&inst, &Solution::full(&inst));
        let cfg = AlgorithmConfig::new(AlgorithmKind::OnePlusOneEa, 1, 1_000_000)
            .with_init(Init::AllZeros);
        let rec = run(&inst, &cfg, Some(target)).unwrap();
        let t = rec.t_optimal.expect("all-ones is reachable");
        assert_eq!(rec.evaluations, t);
        assert!(rec.t_feasible.unwrap() <= t);
        assert_eq!(rec.final_solution.ones(), 4);
    }
}
