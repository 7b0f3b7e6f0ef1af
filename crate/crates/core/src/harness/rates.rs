use rayon::prelude::*;

use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::optimizer;
use crate::prox::FEASIBILITY_TOL;

pub const MIN_HORIZONS: usize = 4;
pub const MIN_REPETITIONS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    /// Least-squares slope of `log(mean metric)` against `log(K + 1)`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Horizons that entered the fit.
    pub horizons: Vec<usize>,
    /// Horizons dropped because their mean was zero or not finite.
    pub excluded: Vec<usize>,
}

/// Fits `log(mean) = intercept + slope · log(K + 1)` over `(K, per-run values)`.
pub fn estimate_rate(samples: &[(usize, Vec<f64>)]) -> Result<RateEstimate> {
    if samples.len() < MIN_HORIZONS {
        return Err(Error::InvalidInput(format!(
            "rate estimate needs ≥ {MIN_HORIZONS} horizons, got {}",
            samples.len()
        )));
    }
    if samples.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::InvalidInput("horizons must be strictly increasing".into()));
    }
    if let Some((k, v)) = samples.iter().find(|(_, v)| v.len() < MIN_REPETITIONS) {
        return Err(Error::InvalidInput(format!(
            "horizon {k} has {} repetitions, need ≥ {MIN_REPETITIONS}",
            v.len()
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut horizons = Vec::new();
    let mut excluded = Vec::new();
    for (k, values) in samples {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        if mean > 0.0 && mean.is_finite() {
            xs.push(((k + 1) as f64).ln());
            ys.push(mean.ln());
            horizons.push(*k);
        } else {
            log::warn!("horizon {k}: mean {mean} excluded from the rate fit");
            excluded.push(*k);
        }
    }
    if xs.len() < MIN_HORIZONS {
        return Err(Error::InvalidInput(format!(
            "only {} usable horizons after excluding degenerate means",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(RateEstimate {
        slope,
        intercept,
        r_squared,
        horizons,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMetric {
    /// Time-averaged Bregman gap.
    Gap,
    /// Time-averaged `‖∇f(x^k)‖`.
    GradNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonStat {
    pub horizon: usize,
    pub mean: f64,
    pub values: Vec<f64>,
    pub step_bound_violations: usize,
    /// Runs whose last iterate is outside the constraint set.
    pub infeasible_runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateSweep {
    pub estimate: RateEstimate,
    pub stats: Vec<HorizonStat>,
}

/// Runs `config.repetitions` seeds at each horizon and fits the rate.
pub fn rate_sweep(config: &ExperimentConfig, horizons: &[usize], metric: RateMetric) -> Result<RateSweep> {
    config.check()?;
    let problem = config.problem.build()?;
    let jobs: Vec<(usize, usize)> = horizons
        .iter()
        .flat_map(|&k| (0..config.repetitions).map(move |rep| (k, rep)))
        .collect();
    let results: Vec<Result<(f64, usize, bool)>> = jobs
        .par_iter()
        .map(|&(k, rep)| {
            let mut cfg = config.clone();
            cfg.horizon = k;
            let rc = cfg.run_config(rep)?;
            rc.validate(&problem)?;
            let trace = optimizer::run(&rc, &problem).map_err(|f| {
                Error::Numerical(format!("horizon {k}, seed {}: {}", rc.seed, f.error))
            })?;
            let value = match metric {
                RateMetric::Gap => trace.mean_gap(),
                RateMetric::GradNorm => trace.mean_grad_norm(),
            };
            let feasible = trace.x_final.is_finite() && rc.constraints.contains(&trace.x_final, FEASIBILITY_TOL)?;
            Ok((value, trace.step_bound_violations(), feasible))
        })
        .collect();
    let mut stats: Vec<HorizonStat> = horizons
        .iter()
        .map(|&k| HorizonStat {
            horizon: k,
            mean: 0.0,
            values: Vec::new(),
            step_bound_violations: 0,
            infeasible_runs: 0,
        })
        .collect();
    for ((k, _), r) in jobs.iter().zip(results) {
        let (value, violations, feasible) = r?;
        let s = stats.iter_mut().find(|s| s.horizon == *k).expect("horizon listed");
        s.values.push(value);
        s.step_bound_violations += violations;
        s.infeasible_runs += usize::from(!feasible);
    }
    for s in &mut stats {
        s.mean = s.values.iter().sum::<f64>() / s.values.len() as f64;
    }
    let samples: Vec<(usize, Vec<f64>)> = stats.iter().map(|s| (s.horizon, s.values.clone())).collect();
    Ok(RateSweep {
        estimate: estimate_rate(&samples)?,
        stats,
    })
}

/// `64, 128, ..., 4096`.
pub fn default_horizons() -> Vec<usize> {
    (6..=12).map(|e| 1usize << e).collect()
}
