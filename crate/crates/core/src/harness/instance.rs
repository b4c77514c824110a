use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::error::{HarnessError, ModelError};
use crate::model::{self, FitnessValue, ProblemInstance, WeightModel};

/// How the profit matrix is filled.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfitKind {
    /// Every profit is 1.
    #[default]
    Uniform,
    /// The same nonincreasing list of `m` profits in every group.
    Mirrored { values: Vec<f64> },
    /// Mirrored list spaced evenly from `high` down to `low`, for size sweeps.
    MirroredLinear { high: f64, low: f64 },
    /// A verbatim `K x m` matrix.
    Explicit { matrix: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub groups: usize,
    pub group_size: usize,
    pub expected_weight: f64,
    pub variance: f64,
    pub covariance: f64,
    pub budget: f64,
    pub alpha: f64,
    #[serde(default)]
    pub profits: ProfitKind,
}

impl InstanceSpec {
    pub fn weights(&self) -> WeightModel {
        WeightModel {
            expected_weight: self.expected_weight,
            variance: self.variance,
            covariance: self.covariance,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|source| HarnessError::Json {
            context: "instance spec".into(),
            source,
        })
    }

    pub fn n(&self) -> usize {
        self.groups * self.group_size
    }
}

fn profit_rows(spec: &InstanceSpec, problems: &mut Vec<String>) -> Vec<f64> {
    let (k, m) = (spec.groups, spec.group_size);
    let mirrored = |row: &[f64]| row.iter().copied().cycle().take(k * row.len()).collect();
    match &spec.profits {
        ProfitKind::Uniform => vec![1.0; k * m],
        ProfitKind::Mirrored { values } => {
            if values.len() != m {
                problems.push(format!(
                    "mirrored profits need group_size = {m} values, got {}",
                    values.len()
                ));
            }
            if values.windows(2).any(|w| w[0] < w[1]) {
                problems.push("mirrored profits must be nonincreasing".into());
            }
            mirrored(values)
        }
        ProfitKind::MirroredLinear { high, low } => {
            if !(high >= low && *low >= 0.0) {
                problems.push(format!(
                    "mirrored_linear needs high >= low >= 0, got high {high}, low {low}"
                ));
            }
            let row: Vec<f64> = (0..m)
                .map(|j| {
                    if m == 1 {
                        *high
                    } else {
                        high - (high - low) * j as f64 / (m - 1) as f64
                    }
                })
                .collect();
            mirrored(&row)
        }
        ProfitKind::Explicit { matrix } => {
            if matrix.len() != k || matrix.iter().any(|r| r.len() != m) {
                problems.push(format!("explicit profit matrix must be {k} x {m}"));
            }
            matrix.iter().flatten().copied().collect()
        }
    }
}

/// Materializes an instance, reporting every violated field constraint.
pub fn generate_instance(spec: &InstanceSpec) -> Result<ProblemInstance, HarnessError> {
    let mut problems = Vec::new();
    let profits = profit_rows(spec, &mut problems);
    match ProblemInstance::new(
        spec.groups,
        spec.group_size,
        spec.weights(),
        spec.budget,
        spec.alpha,
        profits,
    ) {
        Ok(inst) if problems.is_empty() => Ok(inst),
        Ok(_) => Err(HarnessError::InvalidSpec(problems)),
        Err(ModelError::InvalidInstance(more)) => {
            problems.extend(more);
            Err(HarnessError::InvalidSpec(problems))
        }
        Err(other) => Err(other.into()),
    }
}

/// Whether every group carries the same multiset of profits.
pub fn is_group_mirrored(inst: &ProblemInstance) -> bool {
    let sorted = |row: &[f64]| {
        let mut r = row.to_vec();
        r.sort_by(|a, b| b.total_cmp(a));
        r
    };
    let mut rows = inst.profit_rows().map(sorted);
    let first = rows.next().unwrap_or_default();
    rows.all(|r| r == first)
}

/// Optimal fitness of a uniform or group-mirrored instance, from structure alone.
///
/// The optimum takes the `r` largest profits, where `r` is the highest feasible
/// level; those items form a balanced selection. When trailing top profits are
/// zero the same profit is reached at a lower balanced level with smaller beta.
pub fn closed_form_target(inst: &ProblemInstance) -> Result<FitnessValue, HarnessError> {
    if !is_group_mirrored(inst) {
        return Err(HarnessError::UnsupportedProfits);
    }
    let r = analysis::max_feasible_level(inst);
    let top = analysis::top_profits(inst, r);
    let values = top.values();
    let profit: f64 = values.iter().sum();
    let level = values
        .iter()
        .rposition(|&p| p != 0.0)
        .map_or(0, |last| last + 1);
    let witness = analysis::balanced_solution(inst, level)?;
    Ok(FitnessValue::new(
        profit,
        model::penalized_beta(inst, &witness),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RandomProfits {
    Uniform,
    Mirrored,
}

/// Shape limits for [`random_instance`].
#[derive(Clone, Copy, Debug)]
pub struct RandomInstanceConfig {
    pub max_groups: usize,
    pub max_group_size: usize,
    pub max_n: usize,
    pub min_n: usize,
    pub profits: RandomProfits,
}

impl RandomInstanceConfig {
    pub fn small(profits: RandomProfits, max_n: usize) -> Self {
        Self {
            max_groups: 4,
            max_group_size: 4,
            max_n,
            min_n: 2,
            profits,
        }
    }
}

/// Draws a random instance. Half of the parameters come from a coarse grid of
/// dyadic values (so that exact ties between levels and the tolerance occur),
/// the rest are continuous.
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &RandomInstanceConfig,
) -> ProblemInstance {
    let (k, m) = loop {
        let k = rng.random_range(1..=cfg.max_groups);
        let m = rng.random_range(1..=cfg.max_group_size);
        if (cfg.min_n..=cfg.max_n).contains(&(k * m)) {
            break (k, m);
        }
    };
    let n = (k * m) as f64;
    let grid = rng.random::<bool>();
    let pick = |rng: &mut R, choices: &[f64], lo: f64, hi: f64| {
        if grid {
            choices[rng.random_range(0..choices.len())]
        } else {
            rng.random_range(lo..hi)
        }
    };
    let a = pick(rng, &[0.5, 1.0, 1.5, 2.0], 0.2, 3.0);
    let d = pick(rng, &[0.25, 0.5, 1.0, 2.0], 0.05, 3.0);
    let c = pick(rng, &[0.125, 0.25, 0.5, 1.0], 0.02, 2.0);
    let alpha = pick(rng, &[0.125, 0.25, 0.5, 0.75], 0.02, 0.95);
    let fill = pick(rng, &[0.25, 0.5, 0.75, 1.0], 0.1, 1.2);
    let budget = (a * n * fill).max(0.25);
    let profits = match cfg.profits {
        RandomProfits::Uniform => vec![1.0; k * m],
        RandomProfits::Mirrored => {
            let mut row: Vec<f64> = (0..m)
                .map(|_| {
                    if grid {
                        rng.random_range(1..=10) as f64
                    } else {
                        rng.random_range(0.5..10.0)
                    }
                })
                .collect();
            row.sort_by(|a, b| b.total_cmp(a));
            row.iter().copied().cycle().take(k * m).collect()
        }
    };
    let w = WeightModel {
        expected_weight: a,
        variance: d,
        covariance: c,
    };
    ProblemInstance::new(k, m, w, budget, alpha, profits).expect("generated parameters are valid")
}
