//! The forward–backward iteration in deterministic, momentum, STORM and
//! normalized (Polar Express) modes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::direction::{self, DirectionKind, DirectionState, ScheduleKind};
use crate::error::{Error, Result};
use crate::polar_express::{apply_poly_scalar, iterate_poly_matrix, PolySchedule};
use crate::problems::{NoiseModel, Problem, SampleToken};
use crate::prox::{self, ConstraintSpec, FEASIBILITY_TOL};
use crate::reference::{self, ReferenceFn};
use crate::stationarity;
use crate::tensor::{norm2, Block, ParamVec};

/// Result of one forward–backward step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub x_next: ParamVec,
    pub y: ParamVec,
    /// `-∇φ((x_next - y)/γ) ∈ ∂g(x_next)`
    pub subgrad: ParamVec,
}

/// `y = x - γ∇φ*(d)`, `x_next = prox(y)`, and the recovered subgradient.
pub fn step(x: &ParamVec, d: &ParamVec, gamma: f64, r: &ReferenceFn, spec: &ConstraintSpec) -> Result<StepOutput> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidInput(format!("step size must be positive, got {gamma}")));
    }
    x.check_conformable(d)?;
    let p = reference::precondition(r, d)?;
    let y = x.sub(&p.scale(gamma))?;
    let x_next = prox::prox(spec, r, &y, gamma)?;
    let subgrad = prox::recover_subgradient(&x_next, &y, gamma, r)?;
    Ok(StepOutput { x_next, y, subgrad })
}

/// `x - γ∇φ*(d/(‖d‖ + ε̂))`; with a schedule, the polynomial surrogate takes
/// the place of `∇φ*` (applied per block to the normalized direction).
pub fn polar_express_step(
    x: &ParamVec,
    d: &ParamVec,
    gamma: f64,
    r: &ReferenceFn,
    eps_hat: f64,
    schedule: Option<&PolySchedule>,
) -> Result<ParamVec> {
    if !(eps_hat > 0.0 && eps_hat.is_finite()) {
        return Err(Error::InvalidInput(format!("normalization offset must be positive, got {eps_hat}")));
    }
    x.check_conformable(d)?;
    let d_eps = d.scale(1.0 / (norm2(d) + eps_hat));
    let dir = match schedule {
        None => reference::precondition(r, &d_eps)?,
        Some(s) => {
            let blocks = d_eps
                .blocks()
                .iter()
                .map(|b| match b {
                    Block::Vector(v) => Block::Vector(v.iter().map(|&t| apply_poly_scalar(s, t)).collect()),
                    Block::Matrix(m) => Block::Matrix(iterate_poly_matrix(s, m)),
                })
                .collect();
            ParamVec::new(blocks)?
        }
    };
    x.sub(&dir.scale(gamma))
}

/// How directions and step sizes are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    /// Exact gradients, constant step.
    Deterministic { gamma: f64 },
    /// Polyak momentum with `α = (K+1)^{-1/2}`, `γ = γ̄ (K+1)^{-3/4}`.
    Polyak { gamma_bar: f64 },
    /// STORM with `α_k = (k+1)^{-2/3}`, `γ_k = γ̄ (k+1)^{-2/3}`.
    Storm { gamma_bar: f64 },
    /// Polyak momentum, normalized direction, unconstrained only. `eps_hat`
    /// defaults to `(K+1)^{-min(1/4, (p-1)/2p)}`.
    PolarExpress {
        gamma_bar: f64,
        #[serde(default)]
        eps_hat: Option<f64>,
        /// Name of a shipped schedule for the polynomial surrogate.
        #[serde(default)]
        schedule: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub reference: ReferenceFn,
    pub constraints: ConstraintSpec,
    pub mode: Mode,
    pub noise: NoiseModel,
    /// Iterations `0..=horizon` are executed.
    pub horizon: usize,
    pub seed: u64,
    pub x0: ParamVec,
}

impl RunConfig {
    pub fn validate(&self, problem: &Problem) -> Result<()> {
        let shapes = self.x0.shapes();
        if shapes != problem.shapes() {
            return Err(Error::InvalidConfig(format!(
                "starting point has shapes {:?}, problem has {:?}",
                shapes,
                problem.shapes()
            )));
        }
        self.reference.check(&self.x0)?;
        self.constraints.validate(&shapes)?;
        self.noise.validate()?;
        if !self.constraints.contains(&self.x0, FEASIBILITY_TOL)? {
            return Err(Error::InvalidConfig("starting point is not feasible".into()));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        match &self.mode {
            Mode::Deterministic { gamma } => positive("gamma", *gamma),
            Mode::Polyak { gamma_bar } | Mode::Storm { gamma_bar } => positive("gamma_bar", *gamma_bar),
            Mode::PolarExpress {
                gamma_bar,
                eps_hat,
                schedule,
            } => {
                positive("gamma_bar", *gamma_bar)?;
                if let Some(e) = eps_hat {
                    positive("eps_hat", *e)?;
                }
                if let Some(name) = schedule {
                    PolySchedule::by_name(name)?;
                }
                if !self.constraints.is_unconstrained() {
                    return Err(Error::InvalidConfig("normalized mode supports unconstrained problems only".into()));
                }
                Ok(())
            }
        }
    }

    pub fn default_eps_hat(&self) -> f64 {
        let p = self.noise.p_moment();
        let expo = 0.25_f64.min((p - 1.0) / (2.0 * p));
        ((self.horizon + 1) as f64).powf(-expo)
    }
}

/// Diagnostics for iteration `k` (the move `x^k → x^{k+1}`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    /// `F(x^{k+1})`
    pub f_value: f64,
    /// `D_{φ*}(∇f(x^{k+1}), -∇̃g(x^{k+1}))` with the exact gradient.
    pub gap_bregman: f64,
    pub step_norm: f64,
    /// `2 γ_k D`
    pub step_bound: f64,
    pub gamma: f64,
    pub alpha: f64,
    /// `‖∇f(x^k)‖`
    pub grad_norm: f64,
    /// Regularized gap at `x^k` (deterministic mode only).
    pub reg_gap: Option<f64>,
    pub oracle_calls: usize,
    /// The sample behind `d^k`, if any.
    pub sample: Option<SampleToken>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub seed: u64,
    /// `F(x^0)`
    pub f0: f64,
    pub records: Vec<StepRecord>,
    pub x_final: ParamVec,
}

impl Trace {
    /// `(1/(K+1)) Σ_k gap(x^{k+1})`.
    pub fn mean_gap(&self) -> f64 {
        mean(self.records.iter().map(|r| r.gap_bregman))
    }

    /// `(1/(K+1)) Σ_k ‖∇f(x^k)‖`.
    pub fn mean_grad_norm(&self) -> f64 {
        mean(self.records.iter().map(|r| r.grad_norm))
    }

    pub fn step_bound_violations(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.step_norm > r.step_bound + 1e-12)
            .count()
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// A run that stopped early: the completed records and the cause.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub partial: Trace,
    pub error: Error,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run aborted after {} iterations: {}", self.partial.records.len(), self.error)
    }
}

impl std::error::Error for RunFailure {}

impl From<RunFailure> for Error {
    fn from(e: RunFailure) -> Self {
        e.error
    }
}

fn token(seed: u64, k: usize) -> SampleToken {
    SampleToken {
        seed,
        index: k as u64,
    }
}

/// Executes `horizon + 1` iterations. Deterministic for a fixed config.
pub fn run(config: &RunConfig, problem: &Problem) -> std::result::Result<Trace, RunFailure> {
    let mut trace = Trace {
        seed: config.seed,
        f0: f64::NAN,
        records: Vec::with_capacity(config.horizon + 1),
        x_final: config.x0.clone(),
    };
    match run_inner(config, problem, &mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => Err(RunFailure { partial: trace, error }),
    }
}

fn objective(problem: &Problem, spec: &ConstraintSpec, x: &ParamVec) -> Result<f64> {
    let f = problem.value(x)? + spec.g(x)?;
    if f.is_finite() {
        Ok(f)
    } else {
        Err(Error::Numerical(format!("objective is not finite ({f})")))
    }
}

fn run_inner(config: &RunConfig, problem: &Problem, trace: &mut Trace) -> Result<()> {
    config.validate(problem)?;
    let r = &config.reference;
    let spec = &config.constraints;
    let noise = &config.noise;
    let seed = config.seed;
    let big_k = config.horizon;
    let radius = r.domain_radius(&config.x0.shapes());
    let stochastic = !matches!(config.mode, Mode::Deterministic { .. });

    let mut x = config.x0.clone();
    trace.f0 = objective(problem, spec, &x)?;

    let first = if stochastic {
        problem.sample_gradient(&x, noise, token(seed, 0))?
    } else {
        problem.gradient(&x)?
    };
    let kind = match config.mode {
        Mode::Storm { .. } => DirectionKind::Storm,
        Mode::Deterministic { .. } => DirectionKind::Plain,
        _ => DirectionKind::Polyak,
    };
    let mut state = DirectionState::new(kind, first, &x)?;
    let schedule = match &config.mode {
        Mode::PolarExpress { schedule: Some(name), .. } => Some(PolySchedule::by_name(name)?),
        _ => None,
    };
    let eps_hat = match config.mode {
        Mode::PolarExpress { eps_hat, .. } => eps_hat.unwrap_or_else(|| config.default_eps_hat()),
        _ => 0.0,
    };

    for k in 0..=big_k {
        let (alpha, gamma) = match config.mode {
            Mode::Deterministic { gamma } => (1.0, gamma),
            Mode::Polyak { gamma_bar } | Mode::PolarExpress { gamma_bar, .. } => {
                direction::schedule(ScheduleKind::Polyak43, big_k, gamma_bar)
            }
            Mode::Storm { gamma_bar } => direction::schedule(ScheduleKind::Storm45, k, gamma_bar),
        };
        // d^k for k ≥ 1; d^0 was set from the first sample
        let mut calls = if k == 0 { 1 } else { 0 };
        if k > 0 {
            state = match config.mode {
                Mode::Deterministic { .. } => DirectionState {
                    d: problem.gradient(&x)?,
                    kind,
                    k,
                    x_prev: None,
                },
                Mode::Storm { .. } => {
                    let t = token(seed, k);
                    let g_now = problem.sample_gradient(&x, noise, t)?;
                    let x_prev = state.x_prev.clone().expect("storm state keeps x_prev");
                    let g_prev = problem.sample_gradient(&x_prev, noise, t)?;
                    calls += 1;
                    direction::storm_update(&state, &x, &g_now, &g_prev, alpha)?
                }
                _ => {
                    let g = problem.sample_gradient(&x, noise, token(seed, k))?;
                    direction::polyak_update(&state, &g, alpha)?
                }
            };
            calls += 1;
        }

        let grad_true = problem.gradient(&x)?;
        let reg_gap = match config.mode {
            Mode::Deterministic { .. } => Some(stationarity::regularized_gap(spec, r, gamma, &x, &grad_true)?),
            _ => None,
        };

        let (x_next, subgrad) = match config.mode {
            Mode::PolarExpress { .. } => {
                let xn = polar_express_step(&x, &state.d, gamma, r, eps_hat, schedule.as_ref())?;
                let zero = xn.map(|_| 0.0);
                (xn, zero)
            }
            _ => {
                let out = step(&x, &state.d, gamma, r, spec)?;
                (out.x_next, out.subgrad)
            }
        };
        if !x_next.is_finite() {
            return Err(Error::Numerical(format!("iterate {} is not finite", k + 1)));
        }

        let grad_next = problem.gradient(&x_next)?;
        let record = StepRecord {
            k,
            f_value: objective(problem, spec, &x_next)?,
            gap_bregman: stationarity::gap_bregman(r, &grad_next, &subgrad)?,
            step_norm: norm2(&x_next.sub(&x)?),
            step_bound: 2.0 * gamma * radius,
            gamma,
            alpha,
            grad_norm: norm2(&grad_true),
            reg_gap,
            oracle_calls: calls,
            sample: stochastic.then(|| token(seed, k)),
        };
        let finite = record.f_value.is_finite()
            && record.gap_bregman.is_finite()
            && record.reg_gap.is_none_or(f64::is_finite);
        if !finite {
            return Err(Error::Numerical(format!("non-finite diagnostics at iteration {k}: {record:?}")));
        }
        trace.records.push(record);
        if state.kind == DirectionKind::Storm {
            state.x_prev = Some(x.clone());
        }
        x = x_next;
        trace.x_final = x.clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::Constraint;
    use crate::reference::{ScalarRef, Structure};
    use crate::tensor::Matrix;

    fn v(x: &[f64]) -> ParamVec {
        ParamVec::vector(x.to_vec()).unwrap()
    }

    fn barrier(structure: Structure) -> ReferenceFn {
        ReferenceFn::single(structure, ScalarRef::barrier(1.0).unwrap()).unwrap()
    }

    fn scalar_quadratic() -> Problem {
        Problem::quadratic(Matrix::identity(1), vec![0.0]).unwrap()
    }

    fn det_config(gamma: f64, horizon: usize, x0: ParamVec) -> RunConfig {
        RunConfig {
            reference: barrier(Structure::Aniso),
            constraints: ConstraintSpec::unconstrained(1),
            mode: Mode::Deterministic { gamma },
            noise: NoiseModel::None,
            horizon,
            seed: 0,
            x0,
        }
    }

    #[test]
    fn step_examples() {
        let r = barrier(Structure::Aniso);
        let free = ConstraintSpec::unconstrained(1);
        let out = step(&v(&[0.0, 0.0]), &v(&[1.0, -3.0]), 1.0, &r, &free).unwrap();
        assert_eq!(out.x_next.to_flat(), vec![-0.5, 0.75]);
        assert_eq!(out.subgrad.to_flat(), vec![0.0, 0.0]);
        let ball = ConstraintSpec::single(Constraint::LinfBall { radius: 1.0 });
        let x = v(&[0.3, -0.9]);
        let out = step(&x, &v(&[0.0, 0.0]), 0.7, &r, &ball).unwrap();
        assert_eq!(out.x_next, x);
    }

    #[test]
    fn polar_express_step_examples() {
        let h = ScalarRef::hyper_kappa(3e-4, 4.0).unwrap();
        let r = ReferenceFn::single(Structure::Aniso, h).unwrap();
        let x = v(&[0.0]);
        assert_eq!(polar_express_step(&x, &v(&[0.0]), 1.0, &r, 0.1, None).unwrap(), x);
        let got = polar_express_step(&x, &v(&[1.0]), 1.0, &r, 1.0, None).unwrap().to_flat()[0];
        let expect = -0.5 / (3e-4f64.powi(4) + 0.5f64.powi(4)).powf(0.25);
        assert!((got - expect).abs() < 1e-15, "{got} {expect}");
        assert!((got + 1.0 - 3.24e-14).abs() < 1e-16);
    }

    #[test]
    fn deterministic_first_step() {
        let trace = run(&det_config(0.1, 0, v(&[1.0])), &scalar_quadratic()).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert!((trace.x_final.to_flat()[0] - 0.95).abs() < 1e-15);
        assert_eq!(trace.f0, 0.5);
    }

    #[test]
    fn deterministic_monotone() {
        let trace = run(&det_config(0.1, 19, v(&[1.0])), &scalar_quadratic()).unwrap();
        let mut prev = trace.f0;
        for rec in &trace.records {
            assert!(rec.f_value < prev);
            prev = rec.f_value;
        }
    }

    #[test]
    fn infeasible_start_rejected() {
        let mut cfg = det_config(0.1, 3, v(&[2.0]));
        cfg.constraints = ConstraintSpec::single(Constraint::LinfBall { radius: 1.0 });
        let err = run(&cfg, &scalar_quadratic()).unwrap_err();
        assert!(matches!(err.error, Error::InvalidConfig(_)));
        assert!(err.partial.records.is_empty());
    }

    #[test]
    fn partial_trace_on_failure() {
        // the curvature saturates the preconditioner after the first step
        let problem = Problem::quadratic(Matrix::from_rows(&[&[1e154]]), vec![1e-154]).unwrap();
        let cfg = det_config(0.1, 100, v(&[0.0]));
        let fail = run(&cfg, &problem).unwrap_err();
        assert!(matches!(fail.error, Error::Numerical(_)), "{}", fail.error);
        let n = fail.partial.records.len();
        assert!((1..101).contains(&n), "{n}");
        assert!(fail.partial.records.iter().all(|r| r.f_value.is_finite()));
    }

    #[test]
    fn stochastic_modes_replay() {
        let problem = Problem::quadratic(Matrix::identity(3), vec![1.0, -1.0, 0.5]).unwrap();
        for mode in [
            Mode::Polyak { gamma_bar: 1.0 },
            Mode::Storm { gamma_bar: 1.0 },
            Mode::PolarExpress {
                gamma_bar: 1.0,
                eps_hat: None,
                schedule: None,
            },
            Mode::PolarExpress {
                gamma_bar: 1.0,
                eps_hat: Some(0.1),
                schedule: Some("polar_express".into()),
            },
        ] {
            let cfg = RunConfig {
                reference: ReferenceFn::single(Structure::Aniso, ScalarRef::hyper_kappa(0.5, 4.0).unwrap()).unwrap(),
                constraints: ConstraintSpec::unconstrained(1),
                mode,
                noise: NoiseModel::Gaussian { sigma: 1.0 },
                horizon: 30,
                seed: 17,
                x0: v(&[0.0, 0.0, 0.0]),
            };
            let a = run(&cfg, &problem).unwrap();
            let b = run(&cfg, &problem).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.records.len(), 31);
            assert_eq!(a.step_bound_violations(), 0);
        }
    }

    #[test]
    fn storm_counts_two_calls_per_step() {
        let problem = Problem::quadratic(Matrix::identity(2), vec![1.0, 2.0]).unwrap();
        let cfg = RunConfig {
            reference: barrier(Structure::Iso),
            constraints: ConstraintSpec::single(Constraint::L2Ball { radius: 1.0 }),
            mode: Mode::Storm { gamma_bar: 0.5 },
            noise: NoiseModel::Gaussian { sigma: 0.3 },
            horizon: 4,
            seed: 3,
            x0: v(&[0.0, 0.0]),
        };
        let t = run(&cfg, &problem).unwrap();
        let calls: Vec<usize> = t.records.iter().map(|r| r.oracle_calls).collect();
        assert_eq!(calls, vec![1, 2, 2, 2, 2]);
    }

    #[test]
    fn normalized_mode_needs_unconstrained() {
        let mut cfg = det_config(0.1, 3, v(&[0.0]));
        cfg.mode = Mode::PolarExpress {
            gamma_bar: 1.0,
            eps_hat: None,
            schedule: None,
        };
        cfg.constraints = ConstraintSpec::single(Constraint::LinfBall { radius: 1.0 });
        assert!(matches!(run(&cfg, &scalar_quadratic()).unwrap_err().error, Error::InvalidConfig(_)));
    }
}
