//! Oracles shared by the integration tests. Nothing here calls the closed-form
//! moment code of the library.
#![allow(dead_code)]

use ccknap::harness::{random_instance, RandomInstanceConfig, RandomProfits};
use ccknap::rng::trial_rng;
use ccknap::{ProblemInstance, Solution};
use num_rational::BigRational;
use num_traits::Zero;

pub fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Full `n x n` covariance matrix restricted to the selected indices, summed in
/// exact rational arithmetic.
pub fn quadratic_form_exact(inst: &ProblemInstance, x: &Solution) -> BigRational {
    let d = rational(inst.item_variance());
    let c = rational(inst.covariance());
    let m = inst.group_size();
    let sel: Vec<usize> = (0..inst.len()).filter(|&i| x.get(i)).collect();
    let mut total = BigRational::zero();
    for &i in &sel {
        for &j in &sel {
            if i == j {
                total += &d;
            } else if i / m == j / m {
                total += &c;
            }
        }
    }
    total
}

/// Same sum in floating point.
pub fn quadratic_form_float(inst: &ProblemInstance, x: &Solution) -> f64 {
    let m = inst.group_size();
    let sel: Vec<usize> = (0..inst.len()).filter(|&i| x.get(i)).collect();
    let mut total = 0.0;
    for &i in &sel {
        for &j in &sel {
            total += if i == j {
                inst.item_variance()
            } else if i / m == j / m {
                inst.covariance()
            } else {
                0.0
            };
        }
    }
    total
}

/// Sum over ordered pairs of distinct selected items in the same group, times `c`,
/// counted pair by pair.
pub fn pairwise_covariance(inst: &ProblemInstance, x: &Solution) -> f64 {
    let m = inst.group_size();
    let mut pairs = 0u64;
    for i in 0..inst.len() {
        for j in 0..inst.len() {
            if i != j && x.get(i) && x.get(j) && i / m == j / m {
                pairs += 1;
            }
        }
    }
    pairs as f64 * inst.covariance()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn every_solution(inst: &ProblemInstance) -> impl Iterator<Item = Solution> + '_ {
    (0u64..1 << inst.len()).map(move |mask| Solution::from_mask(inst, mask))
}

/// `count` random instances with `min_n <= n <= max_n`, alternating profit kinds.
pub fn instances(
    seed: u64,
    count: usize,
    max_groups: usize,
    max_group_size: usize,
    max_n: usize,
) -> Vec<ProblemInstance> {
    let mut rng = trial_rng(seed);
    (0..count)
        .map(|i| {
            let profits = if i % 2 == 0 {
                RandomProfits::Uniform
            } else {
                RandomProfits::Mirrored
            };
            let cfg = RandomInstanceConfig {
                max_groups,
                max_group_size,
                max_n,
                min_n: 1,
                profits,
            };
            random_instance(&mut rng, &cfg)
        })
        .collect()
}
