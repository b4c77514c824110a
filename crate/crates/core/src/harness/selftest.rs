//! Randomized invariant sweep behind the `selftest` subcommand.

use std::cmp::Ordering;

use rand::Rng;
use serde::Serialize;

use crate::algorithms::{self, AlgorithmConfig, AlgorithmKind, StopRule};
use crate::analysis::{self, ComparisonMode};
use crate::exec::Execution;
use crate::harness::instance::{
    closed_form_target, random_instance, RandomInstanceConfig, RandomProfits,
};
use crate::model::{self, approx_eq, ProblemInstance, Solution};
use crate::rng::{derive_seed, trial_rng};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub cases: usize,
    pub violations: usize,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Variance as the full quadratic form over the selected indices.
fn quadratic_form_variance(inst: &ProblemInstance, x: &Solution) -> f64 {
    let sel: Vec<usize> = x.selected().collect();
    let mut total = 0.0;
    for &i in &sel {
        for &j in &sel {
            total += if i == j {
                inst.item_variance()
            } else if inst.group_of(i) == inst.group_of(j) {
                inst.covariance()
            } else {
                0.0
            };
        }
    }
    total
}

fn all_solutions(inst: &ProblemInstance) -> impl Iterator<Item = Solution> + '_ {
    (0u64..1 << inst.len()).map(move |mask| Solution::from_mask(inst, mask))
}

/// Runs every invariant check on `instances` random instances with `n <= 10`.
pub fn run_selftest(seed: u64, instances: usize) -> Vec<CheckOutcome> {
    let mut moments = CheckOutcome {
        name: "variance matches covariance quadratic form",
        cases: 0,
        violations: 0,
    };
    let mut bound = CheckOutcome {
        name: "feasibility iff covariance within bound",
        cases: 0,
        violations: 0,
    };
    let mut range = CheckOutcome {
        name: "covariance between balanced and most unbalanced",
        cases: 0,
        violations: 0,
    };
    let mut levels = CheckOutcome {
        name: "closed-form max level matches enumeration",
        cases: 0,
        violations: 0,
    };
    let mut target = CheckOutcome {
        name: "closed-form optimum matches brute force",
        cases: 0,
        violations: 0,
    };
    let mut runs = CheckOutcome {
        name: "runs deterministic and monotone",
        cases: 0,
        violations: 0,
    };

    let mut rng = trial_rng(seed);
    for case in 0..instances {
        let kind = if rng.random::<bool>() {
            RandomProfits::Uniform
        } else {
            RandomProfits::Mirrored
        };
        let inst = random_instance(&mut rng, &RandomInstanceConfig::small(kind, 10));
        let a = inst.expected_item_weight();

        let mut best_level = 0;
        for x in all_solutions(&inst) {
            let l = x.ones();
            moments.cases += 1;
            let (fast, slow) = (
                model::weight_variance(&inst, &x),
                quadratic_form_variance(&inst, &x),
            );
            if !approx_eq(fast, slow) {
                moments.violations += 1;
            }
            let s = model::covariance_term(&inst, &x);
            range.cases += 1;
            let lo = analysis::balanced_covariance(&inst, l).unwrap_or(f64::INFINITY);
            let hi = analysis::most_unbalanced_covariance(&inst, l).unwrap_or(f64::NEG_INFINITY);
            if s < lo || s > hi {
                range.violations += 1;
            }
            let feasible = model::is_surrogate_feasible(&inst, &x);
            if feasible {
                best_level = best_level.max(l);
            }
            if a * (l as f64) < inst.budget() {
                bound.cases += 1;
                if analysis::covariance_within_bound(&inst, l, s).ok() != Some(feasible) {
                    bound.violations += 1;
                }
            }
        }
        levels.cases += 1;
        if analysis::max_feasible_level(&inst) != best_level {
            levels.violations += 1;
        }

        target.cases += 1;
        let oracle =
            analysis::brute_force_optimum(&inst, ComparisonMode::Tolerant, Execution::Sequential)
                .expect("n <= 10");
        match closed_form_target(&inst) {
            Ok(t) if t.compare(&oracle.optimum_fitness) == Ordering::Equal => {}
            _ => target.violations += 1,
        }

        for kind in AlgorithmKind::ALL {
            runs.cases += 1;
            let cfg = AlgorithmConfig::new(kind, derive_seed(seed, &[case as u64]), 2_000)
                .with_verification();
            let mut monotone = true;
            let observed = algorithms::run_observed(&inst, &cfg, StopRule::Budget, |step| {
                monotone &= step.fitness.at_least(&step.previous);
            });
            let again = algorithms::run_until(&inst, &cfg, StopRule::Budget);
            match (observed, again) {
                (Ok(a), Ok(b)) if a == b && monotone => {}
                _ => runs.violations += 1,
            }
        }
    }
    vec![moments, bound, range, levels, target, runs]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes_on_a_few_instances() {
        let out = run_selftest(1, 8);
        assert_eq!(out.len(), 6);
        for c in &out {
            assert!(c.passed(), "{c:?}");
            assert!(c.cases > 0);
        }
    }
}
