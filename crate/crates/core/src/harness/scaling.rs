//! Fitting hitting-time medians against candidate growth models.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::algorithms::AlgorithmKind;
use crate::error::HarnessError;
use crate::harness::experiment::ExperimentRow;

pub const MIN_SIZES: usize = 3;
pub const MIN_COMPLETED: usize = 30;
/// Largest relative residual for which a model counts as consistent.
pub const RESIDUAL_THRESHOLD: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthModel {
    NLogN,
    N2,
    N2LogN,
    N3,
    N3LogN,
}

impl GrowthModel {
    pub const ALL: [GrowthModel; 5] = [
        GrowthModel::NLogN,
        GrowthModel::N2,
        GrowthModel::N2LogN,
        GrowthModel::N3,
        GrowthModel::N3LogN,
    ];

    pub fn eval(self, n: f64) -> f64 {
        let ln = n.ln();
        match self {
            GrowthModel::NLogN => n * ln,
            GrowthModel::N2 => n * n,
            GrowthModel::N2LogN => n * n * ln,
            GrowthModel::N3 => n * n * n,
            GrowthModel::N3LogN => n * n * n * ln,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GrowthModel::NLogN => "nlogn",
            GrowthModel::N2 => "n2",
            GrowthModel::N2LogN => "n2logn",
            GrowthModel::N3 => "n3",
            GrowthModel::N3LogN => "n3logn",
        }
    }
}

impl fmt::Display for GrowthModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GrowthModel {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, ' ' | '^' | '*' | '(' | ')' | '_'))
            .collect::<String>()
            .to_ascii_lowercase()
            .replace("ln", "log");
        match key.as_str() {
            "nlogn" => Ok(GrowthModel::NLogN),
            "n2" => Ok(GrowthModel::N2),
            "n2logn" => Ok(GrowthModel::N2LogN),
            "n3" => Ok(GrowthModel::N3),
            "n3logn" => Ok(GrowthModel::N3LogN),
            _ => Err(HarnessError::BadBudget(s.to_string())),
        }
    }
}

/// Which hitting time is summarized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Feasible,
    Optimal,
}

/// Profit setting of a sweep, used to pick the proven bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfitSetting {
    Uniform,
    Mirrored,
}

/// Growth of the proven upper bound for an algorithm, metric and profit setting.
/// For mirrored profits the (1+1) EA bound carries an extra `log p_max` factor
/// that is constant within a sweep and is dropped here.
pub fn proven_bound(kind: AlgorithmKind, metric: Metric, profits: ProfitSetting) -> GrowthModel {
    match (kind, metric, profits) {
        (AlgorithmKind::Rls, Metric::Feasible, _) => GrowthModel::NLogN,
        (AlgorithmKind::OnePlusOneEa, Metric::Feasible, _) => GrowthModel::N2LogN,
        (AlgorithmKind::Rls, Metric::Optimal, _) => GrowthModel::N3,
        (AlgorithmKind::OnePlusOneEa, Metric::Optimal, _) => GrowthModel::N3LogN,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeStats {
    pub n: usize,
    pub trials: usize,
    pub completed: usize,
    pub median: f64,
    pub q90: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelFit {
    pub model: GrowthModel,
    pub constant: f64,
    /// `(median - C g(n)) / median` per size.
    pub relative_residuals: Vec<f64>,
    pub max_relative_residual: f64,
    /// `max_relative_residual <= RESIDUAL_THRESHOLD`.
    pub consistent: bool,
    /// `(median / g)` at the largest size over the same ratio at the smallest.
    pub ratio_growth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupReport {
    pub algorithm: AlgorithmKind,
    pub metric: Metric,
    pub sizes: Vec<SizeStats>,
    pub fits: Vec<ModelFit>,
}

impl GroupReport {
    pub fn fit(&self, model: GrowthModel) -> Option<&ModelFit> {
        self.fits.iter().find(|f| f.model == model)
    }

    /// Models whose ratio does not grow by more than the residual threshold.
    pub fn not_exceeded(&self, model: GrowthModel) -> bool {
        self.fit(model)
            .is_some_and(|f| f.ratio_growth <= 1.0 + RESIDUAL_THRESHOLD)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingReport {
    pub groups: Vec<GroupReport>,
}

impl ScalingReport {
    pub fn group(&self, algorithm: AlgorithmKind, metric: Metric) -> Option<&GroupReport> {
        self.groups
            .iter()
            .find(|g| g.algorithm == algorithm && g.metric == metric)
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Least-squares fit of `y ≈ C g(n)` on relative error.
pub fn fit_model(model: GrowthModel, points: &[(usize, f64)]) -> Result<ModelFit, HarnessError> {
    if points.iter().any(|&(_, y)| y <= 0.0) {
        return Err(HarnessError::InsufficientData(
            "hitting-time medians must be positive to fit on relative error".into(),
        ));
    }
    let ratios: Vec<f64> = points
        .iter()
        .map(|&(n, y)| model.eval(n as f64) / y)
        .collect();
    let constant = ratios.iter().sum::<f64>() / ratios.iter().map(|r| r * r).sum::<f64>();
    let relative_residuals: Vec<f64> = ratios.iter().map(|r| 1.0 - constant * r).collect();
    let max_relative_residual = relative_residuals
        .iter()
        .fold(0.0f64, |acc, r| acc.max(r.abs()));
    let ratio_growth = ratios[0] / ratios[ratios.len() - 1];
    Ok(ModelFit {
        model,
        constant,
        relative_residuals,
        max_relative_residual,
        consistent: max_relative_residual <= RESIDUAL_THRESHOLD,
        ratio_growth,
    })
}

/// Per `(algorithm, metric)`: median and 0.9-quantile per size and fits of
/// every requested model. The optimal-time metric is reported only for rows
/// that carry a target.
pub fn scaling_summary(
    rows: &[ExperimentRow],
    models: &[GrowthModel],
) -> Result<ScalingReport, HarnessError> {
    type Key = (AlgorithmKind, Metric);
    let mut buckets: BTreeMap<Key, BTreeMap<usize, (usize, Vec<f64>)>> = BTreeMap::new();
    for row in rows {
        let mut push = |metric, value: Option<u64>| {
            let entry = buckets
                .entry((row.algorithm, metric))
                .or_default()
                .entry(row.n)
                .or_default();
            entry.0 += 1;
            if let Some(v) = value {
                entry.1.push(v as f64);
            }
        };
        push(Metric::Feasible, row.t_feasible);
        if row.target_profit.is_some() {
            push(Metric::Optimal, row.t_optimal);
        }
    }
    if buckets.is_empty() {
        return Err(HarnessError::InsufficientData("no rows".into()));
    }

    let mut groups = Vec::new();
    for ((algorithm, metric), per_size) in buckets {
        if per_size.len() < MIN_SIZES {
            return Err(HarnessError::InsufficientData(format!(
                "{} {metric:?}: {} sizes, need at least {MIN_SIZES}",
                algorithm.name(),
                per_size.len()
            )));
        }
        let mut sizes = Vec::new();
        for (n, (trials, mut values)) in per_size {
            if values.len() < MIN_COMPLETED {
                return Err(HarnessError::InsufficientData(format!(
                    "{} {metric:?} at n = {n}: {} completed trials, need at least {MIN_COMPLETED}",
                    algorithm.name(),
                    values.len()
                )));
            }
            values.sort_by(f64::total_cmp);
            sizes.push(SizeStats {
                n,
                trials,
                completed: values.len(),
                median: quantile(&values, 0.5),
                q90: quantile(&values, 0.9),
            });
        }
        let points: Vec<(usize, f64)> = sizes.iter().map(|s| (s.n, s.median)).collect();
        let fits = models
            .iter()
            .map(|&m| fit_model(m, &points))
            .collect::<Result<_, _>>()?;
        groups.push(GroupReport {
            algorithm,
            metric,
            sizes,
            fits,
        });
    }
    Ok(ScalingReport { groups })
}

impl fmt::Display for ScalingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.groups {
            writeln!(f, "{} / {:?}", g.algorithm.name(), g.metric)?;
            writeln!(
                f,
                "  {:>6} {:>7} {:>9} {:>14} {:>14}",
                "n", "trials", "completed", "median", "q90"
            )?;
            for s in &g.sizes {
                writeln!(
                    f,
                    "  {:>6} {:>7} {:>9} {:>14.1} {:>14.1}",
                    s.n, s.trials, s.completed, s.median, s.q90
                )?;
            }
            for fit in &g.fits {
                writeln!(
                    f,
                    "  {:<7} C = {:<12.6e} max rel. residual = {:.3} growth = {:.3}{}",
                    fit.model.name(),
                    fit.constant,
                    fit.max_relative_residual,
                    fit.ratio_growth,
                    if fit.consistent { "  consistent" } else { "" }
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(model: GrowthModel, c: f64) -> Vec<(usize, f64)> {
        [32usize, 64, 128, 256]
            .iter()
            .map(|&n| (n, c * model.eval(n as f64)))
            .collect()
    }

    #[test]
    fn exact_proportional_medians_fit_with_zero_residual() {
        let fit = fit_model(GrowthModel::NLogN, &synthetic(GrowthModel::NLogN, 3.5)).unwrap();
        assert!((fit.constant - 3.5).abs() < 1e-12);
        assert!(fit.max_relative_residual < 1e-12);
        assert!(fit.consistent);
        assert!((fit.ratio_growth - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cubic_growth_is_inconsistent_with_nlogn() {
        let fit = fit_model(GrowthModel::NLogN, &synthetic(GrowthModel::N3, 0.1)).unwrap();
        assert!(!fit.consistent);
        // (256/32)^2 * ln 32 / ln 256
        assert!(
            (fit.ratio_growth - 40.0).abs() < 1e-9,
            "{}",
            fit.ratio_growth
        );
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert!((quantile(&v, 0.9) - 4.6).abs() < 1e-12);
        assert_eq!(quantile(&[7.0], 0.9), 7.0);
    }

    #[test]
    fn parses_model_names() {
        assert_eq!(
            "n^3 log n".parse::<GrowthModel>().unwrap(),
            GrowthModel::N3LogN
        );
        assert_eq!("n2".parse::<GrowthModel>().unwrap(), GrowthModel::N2);
        assert_eq!(
            "n*ln(n)".parse::<GrowthModel>().unwrap(),
            GrowthModel::NLogN
        );
        assert!("n4".parse::<GrowthModel>().is_err());
    }

    #[test]
    fn proven_bounds_table() {
        use AlgorithmKind::*;
        assert_eq!(
            proven_bound(Rls, Metric::Feasible, ProfitSetting::Uniform),
            GrowthModel::NLogN
        );
        assert_eq!(
            proven_bound(OnePlusOneEa, Metric::Feasible, ProfitSetting::Mirrored),
            GrowthModel::N2LogN
        );
        assert_eq!(
            proven_bound(Rls, Metric::Optimal, ProfitSetting::Mirrored),
            GrowthModel::N3
        );
        assert_eq!(
            proven_bound(OnePlusOneEa, Metric::Optimal, ProfitSetting::Uniform),
            GrowthModel::N3LogN
        );
    }
}
