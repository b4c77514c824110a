//! Batches of seeded trials and their CSV form.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::algorithms::{self, AlgorithmConfig, AlgorithmKind, Init, StopRule};
use crate::analysis::{self, ComparisonMode, BRUTE_FORCE_LIMIT};
use crate::error::HarnessError;
use crate::exec::Execution;
use crate::harness::instance::{closed_form_target, generate_instance, InstanceSpec};
use crate::harness::scaling::GrowthModel;
use crate::model::{FitnessValue, ProblemInstance};
use crate::rng::derive_seed;

/// Column order of the results CSV.
pub const CSV_HEADER: [&str; 14] = [
    "algorithm",
    "K",
    "m",
    "n",
    "trial",
    "seed",
    "t_feasible",
    "t_optimal",
    "evaluations",
    "final_profit",
    "final_beta",
    "target_profit",
    "target_beta",
    "censored",
];

const NA: &str = "NA";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// Stop at the first surrogate-feasible solution.
    Feasible,
    /// Stop at the brute-force optimum (n <= 24).
    Oracle,
    /// Stop at the structural optimum of uniform or mirrored instances.
    #[serde(alias = "closed-form")]
    ClosedForm,
}

impl FromStr for TargetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "feasible" | "feasibility" => Ok(TargetKind::Feasible),
            "oracle" => Ok(TargetKind::Oracle),
            "closed-form" | "closed_form" => Ok(TargetKind::ClosedForm),
            other => Err(format!("unknown target {other:?}")),
        }
    }
}

/// Evaluation budget per trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BudgetValue", into = "String")]
pub enum BudgetRule {
    Absolute(u64),
    /// `ceil(multiplier * model(n))`.
    Scaled {
        multiplier: f64,
        model: GrowthModel,
    },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum BudgetValue {
    Number(f64),
    Text(String),
}

impl TryFrom<BudgetValue> for BudgetRule {
    type Error = HarnessError;

    fn try_from(v: BudgetValue) -> Result<Self, Self::Error> {
        match v {
            BudgetValue::Number(x) => format!("{x}").parse(),
            BudgetValue::Text(s) => s.parse(),
        }
    }
}

impl From<BudgetRule> for String {
    fn from(b: BudgetRule) -> String {
        b.to_string()
    }
}

impl fmt::Display for BudgetRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BudgetRule::Absolute(v) => write!(f, "{v}"),
            BudgetRule::Scaled { multiplier, model } => write!(f, "{multiplier}*{model}"),
        }
    }
}

impl FromStr for BudgetRule {
    type Err = HarnessError;

    /// Accepts `1000000`, `1e6`, `n3logn` or `10*n^2*log(n)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::BadBudget(s.to_string());
        let text = s.trim();
        if let Ok(v) = text.parse::<f64>() {
            if v >= 1.0 && v.is_finite() && v.fract() == 0.0 {
                return Ok(BudgetRule::Absolute(v as u64));
            }
            return Err(bad());
        }
        let (multiplier, model) = match text.split_once('*') {
            Some((head, tail)) if head.trim().parse::<f64>().is_ok() => {
                (head.trim().parse::<f64>().map_err(|_| bad())?, tail)
            }
            _ => (1.0, text),
        };
        if !(multiplier > 0.0 && multiplier.is_finite()) {
            return Err(bad());
        }
        let model = model.parse::<GrowthModel>().map_err(|_| bad())?;
        Ok(BudgetRule::Scaled { multiplier, model })
    }
}

impl BudgetRule {
    pub fn evaluations(&self, n: usize) -> u64 {
        match *self {
            BudgetRule::Absolute(v) => v.max(1),
            BudgetRule::Scaled { multiplier, model } => {
                (multiplier * model.eval(n.max(2) as f64)).ceil().max(1.0) as u64
            }
        }
    }
}

/// Capacity used for every size of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capacity {
    Fixed(f64),
    /// `B = factor * n`.
    PerItem(f64),
}

fn default_algorithms() -> Vec<AlgorithmKind> {
    AlgorithmKind::ALL.to_vec()
}

fn default_trials() -> usize {
    30
}

fn default_budget() -> BudgetRule {
    BudgetRule::Absolute(1_000_000)
}

fn default_target() -> TargetKind {
    TargetKind::Feasible
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub instance: InstanceSpec,
    /// `(K, m)` pairs; empty means the instance's own shape.
    #[serde(default)]
    pub sizes: Vec<(usize, usize)>,
    #[serde(default)]
    pub capacity: Option<Capacity>,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<AlgorithmKind>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_budget")]
    pub budget: BudgetRule,
    #[serde(default)]
    pub init: Init,
    #[serde(default = "default_target")]
    pub target: TargetKind,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|source| HarnessError::Json {
            context: "experiment spec".into(),
            source,
        })
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        if self.sizes.is_empty() {
            vec![(self.instance.groups, self.instance.group_size)]
        } else {
            self.sizes.clone()
        }
    }

    /// Instance spec for one `(K, m)` of the sweep.
    pub fn instance_spec(&self, groups: usize, group_size: usize) -> InstanceSpec {
        let mut spec = self.instance.clone();
        spec.groups = groups;
        spec.group_size = group_size;
        match self.capacity {
            Some(Capacity::Fixed(b)) => spec.budget = b,
            Some(Capacity::PerItem(f)) => spec.budget = f * (groups * group_size) as f64,
            None => {}
        }
        spec
    }
}

/// One trial of an experiment, in CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub algorithm: AlgorithmKind,
    pub groups: usize,
    pub group_size: usize,
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub t_feasible: Option<u64>,
    pub t_optimal: Option<u64>,
    pub evaluations: u64,
    pub final_profit: f64,
    pub final_beta: f64,
    pub target_profit: Option<f64>,
    pub target_beta: Option<f64>,
    pub censored: bool,
}

impl ExperimentRow {
    pub fn target(&self) -> Option<FitnessValue> {
        Some(FitnessValue::new(self.target_profit?, self.target_beta?))
    }

    pub fn final_fitness(&self) -> FitnessValue {
        FitnessValue::new(self.final_profit, self.final_beta)
    }
}

struct Prepared {
    groups: usize,
    group_size: usize,
    instance: ProblemInstance,
    target: Option<FitnessValue>,
    budget: u64,
}

fn algorithm_code(kind: AlgorithmKind) -> u64 {
    match kind {
        AlgorithmKind::Rls => 0,
        AlgorithmKind::OnePlusOneEa => 1,
    }
}

fn prepare(spec: &ExperimentSpec) -> Result<Vec<Prepared>, HarnessError> {
    let mut problems = Vec::new();
    if spec.trials == 0 {
        problems.push("trials must be at least 1".to_string());
    }
    if spec.algorithms.is_empty() {
        problems.push("at least one algorithm is required".to_string());
    }
    let shapes = spec.shapes();
    if spec.target == TargetKind::Oracle {
        for &(k, m) in &shapes {
            if k * m > BRUTE_FORCE_LIMIT {
                problems.push(format!(
                    "oracle target needs n <= {BRUTE_FORCE_LIMIT}, size ({k}, {m}) has n = {}",
                    k * m
                ));
            }
        }
    }
    if spec.algorithms.contains(&AlgorithmKind::Rls) {
        if let Some(&(k, m)) = shapes.iter().find(|(k, m)| k * m < 2) {
            problems.push(format!(
                "RLS needs n >= 2, size ({k}, {m}) has n = {}",
                k * m
            ));
        }
    }
    if !problems.is_empty() {
        return Err(HarnessError::InvalidSpec(problems));
    }

    shapes
        .into_iter()
        .map(|(groups, group_size)| {
            let instance = generate_instance(&spec.instance_spec(groups, group_size))?;
            let target = match spec.target {
                TargetKind::Feasible => None,
                TargetKind::ClosedForm => Some(closed_form_target(&instance)?),
                TargetKind::Oracle => Some(
                    analysis::brute_force_optimum(
                        &instance,
                        ComparisonMode::Tolerant,
                        Execution::Sequential,
                    )?
                    .optimum_fitness,
                ),
            };
            Ok(Prepared {
                groups,
                group_size,
                budget: spec.budget.evaluations(instance.len()),
                instance,
                target,
            })
        })
        .collect()
}

/// Runs every `(size, algorithm, trial)` and returns rows in that canonical order.
///
/// Each trial's seed is derived from the master seed and the trial's
/// coordinates, so the output does not depend on scheduling.
pub fn run_experiment(
    spec: &ExperimentSpec,
    exec: Execution,
) -> Result<Vec<ExperimentRow>, HarnessError> {
    let prepared = prepare(spec)?;
    let mut items = Vec::new();
    for (size_idx, _) in prepared.iter().enumerate() {
        for &kind in &spec.algorithms {
            for trial in 0..spec.trials {
                items.push((size_idx, kind, trial));
            }
        }
    }
    let results = exec.map(items, |(size_idx, kind, trial)| {
        let p = &prepared[size_idx];
        let seed = derive_seed(
            spec.master_seed,
            &[size_idx as u64, algorithm_code(kind), trial as u64],
        );
        let cfg = AlgorithmConfig::new(kind, seed, p.budget).with_init(spec.init.clone());
        let stop = p.target.map_or(StopRule::Feasible, StopRule::Target);
        let rec = algorithms::run_until(&p.instance, &cfg, stop)?;
        let censored = match p.target {
            Some(_) => rec.t_optimal.is_none(),
            None => rec.t_feasible.is_none(),
        };
        Ok(ExperimentRow {
            algorithm: kind,
            groups: p.groups,
            group_size: p.group_size,
            n: p.instance.len(),
            trial,
            seed,
            t_feasible: rec.t_feasible,
            t_optimal: rec.t_optimal,
            evaluations: rec.evaluations,
            final_profit: rec.final_fitness.penalized_profit,
            final_beta: rec.final_fitness.penalized_beta,
            target_profit: p.target.map(|t| t.penalized_profit),
            target_beta: p.target.map(|t| t.penalized_beta),
            censored,
        })
    });
    results.into_iter().collect()
}

/// 17 significant digits, enough to round-trip any f64.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

pub fn write_csv<W: Write>(rows: &[ExperimentRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.algorithm.name().to_string(),
            r.groups.to_string(),
            r.group_size.to_string(),
            r.n.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            opt(r.t_feasible),
            opt(r.t_optimal),
            r.evaluations.to_string(),
            format_float(r.final_profit),
            format_float(r.final_beta),
            opt(r.target_profit.map(format_float)),
            opt(r.target_beta.map(format_float)),
            u8::from(r.censored).to_string(),
        ])?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        context: "writing CSV".into(),
        source,
    })?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ExperimentRow>, HarnessError> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(HarnessError::MalformedRow {
            row: 0,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let bad = |what: &str| HarnessError::MalformedRow {
            row,
            message: format!("bad {what}"),
        };
        let field = |k: usize| rec.get(k).ok_or_else(|| bad(CSV_HEADER[k]));
        fn num<T: FromStr>(s: &str) -> Option<T> {
            s.parse().ok()
        }
        let maybe = |k: usize| -> Result<Option<String>, HarnessError> {
            let s = field(k)?;
            Ok((s != NA).then(|| s.to_string()))
        };
        let parse_opt_u64 = |k: usize| -> Result<Option<u64>, HarnessError> {
            maybe(k)?
                .map(|s| num(&s).ok_or_else(|| bad(CSV_HEADER[k])))
                .transpose()
        };
        let parse_opt_f64 = |k: usize| -> Result<Option<f64>, HarnessError> {
            maybe(k)?
                .map(|s| num(&s).ok_or_else(|| bad(CSV_HEADER[k])))
                .transpose()
        };
        let req = |k: usize| field(k).map(str::to_string);
        rows.push(ExperimentRow {
            algorithm: AlgorithmKind::from_name(&req(0)?).ok_or_else(|| bad("algorithm"))?,
            groups: num(&req(1)?).ok_or_else(|| bad("K"))?,
            group_size: num(&req(2)?).ok_or_else(|| bad("m"))?,
            n: num(&req(3)?).ok_or_else(|| bad("n"))?,
            trial: num(&req(4)?).ok_or_else(|| bad("trial"))?,
            seed: num(&req(5)?).ok_or_else(|| bad("seed"))?,
            t_feasible: parse_opt_u64(6)?,
            t_optimal: parse_opt_u64(7)?,
            evaluations: num(&req(8)?).ok_or_else(|| bad("evaluations"))?,
            final_profit: num(&req(9)?).ok_or_else(|| bad("final_profit"))?,
            final_beta: num(&req(10)?).ok_or_else(|| bad("final_beta"))?,
            target_profit: parse_opt_f64(11)?,
            target_beta: parse_opt_f64(12)?,
            censored: match req(13)?.as_str() {
                "0" => false,
                "1" => true,
                _ => return Err(bad("censored")),
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::instance::ProfitKind;

    fn base() -> ExperimentSpec {
        ExperimentSpec {
            instance: InstanceSpec {
                groups: 2,
                group_size: 3,
                expected_weight: 1.0,
                variance: 1.0,
                covariance: 1.0,
                budget: 4.0,
                alpha: 0.5,
                profits: ProfitKind::Uniform,
            },
            sizes: vec![(2, 2), (2, 3), (3, 3), (3, 4), (4, 4)],
            capacity: Some(Capacity::PerItem(0.5)),
            algorithms: AlgorithmKind::ALL.to_vec(),
            trials: 100,
            master_seed: 99,
            budget: BudgetRule::Absolute(100_000),
            init: Init::AllOnes,
            target: TargetKind::Feasible,
        }
    }

    #[test]
    fn budget_expressions() {
        assert_eq!(
            "1000000".parse::<BudgetRule>().unwrap(),
            BudgetRule::Absolute(1_000_000)
        );
        assert_eq!(
            "1e6".parse::<BudgetRule>().unwrap(),
            BudgetRule::Absolute(1_000_000)
        );
        let scaled = "10*n^3*log(n)".parse::<BudgetRule>().unwrap();
        assert_eq!(
            scaled,
            BudgetRule::Scaled {
                multiplier: 10.0,
                model: GrowthModel::N3LogN
            }
        );
        assert_eq!(
            scaled.evaluations(10),
            (10.0 * 1000.0 * 10f64.ln()).ceil() as u64
        );
        assert!("0".parse::<BudgetRule>().is_err());
        assert!("-3*n2".parse::<BudgetRule>().is_err());
        assert!("lots".parse::<BudgetRule>().is_err());
    }

    #[test]
    fn cartesian_row_count_and_order() {
        let rows = run_experiment(&base(), Execution::Parallel).unwrap();
        assert_eq!(rows.len(), 1000);
        assert!(rows.iter().all(|r| r.t_feasible.is_some() && !r.censored));
        assert_eq!(rows[0].algorithm, AlgorithmKind::Rls);
        assert_eq!(rows[100].algorithm, AlgorithmKind::OnePlusOneEa);
        assert_eq!(rows[200].n, 6);
    }

    #[test]
    fn execution_mode_does_not_change_rows() {
        let mut spec = base();
        spec.trials = 10;
        let a = run_experiment(&spec, Execution::Sequential).unwrap();
        let b = run_experiment(&spec, Execution::ParallelWith { workers: 3 }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oracle_guard_fails_fast() {
        let mut spec = base();
        spec.sizes = vec![(2, 2), (5, 5)];
        spec.target = TargetKind::Oracle;
        match run_experiment(&spec, Execution::Sequential) {
            Err(HarnessError::InvalidSpec(list)) => assert_eq!(list.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut spec = base();
        spec.trials = 3;
        spec.target = TargetKind::ClosedForm;
        let rows = run_experiment(&spec, Execution::Sequential).unwrap();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("algorithm,K,m,n,trial,seed,t_feasible,t_optimal,evaluations,"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn spec_json_defaults() {
        let text = r#"{"instance":{"groups":2,"group_size":3,"expected_weight":1,"variance":1,
            "covariance":1,"budget":4,"alpha":0.5},"budget":"5*n2logn","target":"closed_form",
            "init":"all_ones","capacity":{"per_item":0.25}}"#;
        let spec = ExperimentSpec::from_json(text).unwrap();
        assert_eq!(spec.algorithms, AlgorithmKind::ALL.to_vec());
        assert_eq!(spec.target, TargetKind::ClosedForm);
        assert_eq!(spec.shapes(), vec![(2, 3)]);
        assert_eq!(spec.instance_spec(4, 4).budget, 4.0);
        let numeric = text.replace("\"5*n2logn\"", "250000");
        assert_eq!(
            ExperimentSpec::from_json(&numeric).unwrap().budget,
            BudgetRule::Absolute(250_000)
        );
    }
}
