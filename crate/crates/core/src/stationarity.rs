//! Stationarity measures: the Bregman gap, the anisotropic Moreau envelope,
//! the regularized gap function, and a sampled anisotropic-smoothness check.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::problems::Problem;
use crate::prox::{self, ConstraintSpec, FEASIBILITY_TOL};
use crate::reference::{self, ReferenceFn};
use crate::tensor::{Block, Matrix, ParamVec};

/// `D_{φ*}(∇f, -∇̃g)`.
pub fn gap_bregman(r: &ReferenceFn, grad_f: &ParamVec, subgrad_g: &ParamVec) -> Result<f64> {
    reference::bregman_dual(r, grad_f, &subgrad_g.neg())
}

/// `inf_x g(x) + γ φ((x - y)/γ)`, evaluated at the backward-step minimizer.
/// `+∞` when `y` is out of reach of every feasible point.
pub fn aniso_moreau_env(spec: &ConstraintSpec, r: &ReferenceFn, gamma: f64, y: &ParamVec) -> Result<f64> {
    match prox::prox(spec, r, y, gamma) {
        Ok(x) => prox::prox_objective(spec, r, &x, y, gamma),
        Err(Error::EmptyProxDomain(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// `(1/γ)[g(x) + γ φ(∇φ*(∇f(x))) - g^φ_γ(x - γ∇φ*(∇f(x)))]`.
pub fn regularized_gap(
    spec: &ConstraintSpec,
    r: &ReferenceFn,
    gamma: f64,
    x: &ParamVec,
    grad_f: &ParamVec,
) -> Result<f64> {
    if !spec.contains(x, FEASIBILITY_TOL)? {
        return Err(Error::InvalidInput("regularized gap needs a feasible point".into()));
    }
    let p = reference::precondition(r, grad_f)?;
    let y = x.sub(&p.scale(gamma))?;
    let env = aniso_moreau_env(spec, r, gamma, &y)?;
    let phi_p = reference::phi(r, &p)?;
    Ok((gamma * phi_p - env) / gamma)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    pub gap_bregman: f64,
    pub reg_gap: Option<f64>,
    pub envelope_value: f64,
}

/// Gaps at `x`, with `subgrad_g` the subgradient recovered by the backward
/// step that produced `x`.
pub fn gap_report(
    spec: &ConstraintSpec,
    r: &ReferenceFn,
    gamma: f64,
    x: &ParamVec,
    grad_f: &ParamVec,
    subgrad_g: &ParamVec,
) -> Result<GapReport> {
    let p = reference::precondition(r, grad_f)?;
    let y = x.sub(&p.scale(gamma))?;
    Ok(GapReport {
        gap_bregman: gap_bregman(r, grad_f, subgrad_g)?,
        reg_gap: Some(regularized_gap(spec, r, gamma, x, grad_f)?),
        envelope_value: aniso_moreau_env(spec, r, gamma, &y)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentCheck {
    pub samples: usize,
    pub violations: usize,
    pub max_violation: f64,
}

/// Absolute slack (relative to `1 + |f(x̄)|`) before a sample counts as a violation.
pub const DESCENT_TOL: f64 = 1e-9;

/// Samples the anisotropic descent inequality
/// `f(x) ≤ f(x̄) + (1/L ⋆ φ)(x - ȳ) - (1/L ⋆ φ)(x̄ - ȳ)`,
/// `ȳ = x̄ - (1/L)∇φ*(∇f(x̄))`, at Gaussian `x̄` (entries scaled by `spread`)
/// and `x = ȳ + w/L` with `w` drawn from the interior of dom φ.
pub fn check_aniso_descent<R: Rng + ?Sized>(
    problem: &Problem,
    r: &ReferenceFn,
    l: f64,
    n_samples: usize,
    spread: f64,
    rng: &mut R,
) -> Result<DescentCheck> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidInput(format!("smoothness candidate must be positive, got {l}")));
    }
    let shapes = problem.shapes();
    let mut report = DescentCheck {
        samples: n_samples,
        violations: 0,
        max_violation: f64::NEG_INFINITY,
    };
    for i in 0..n_samples {
        let dim: usize = shapes.iter().map(|s| s.len()).sum();
        let flat: Vec<f64> = (0..dim).map(|_| spread * rng.sample::<f64, _>(StandardNormal)).collect();
        let xbar = ParamVec::from_flat(&shapes, &flat)?;
        let f_bar = problem.value(&xbar)?;
        let p = reference::precondition(r, &problem.gradient(&xbar)?)?;
        let ybar = xbar.sub(&p.scale(1.0 / l))?;
        // every eighth sample sits at x = x̄
        let w = if i % 8 == 0 { p.clone() } else { sample_domain_interior(r, &shapes, rng)? };
        let x = ybar.add(&w.scale(1.0 / l))?;
        let lhs = problem.value(&x)?;
        let rhs = f_bar + (reference::phi(r, &w)? - reference::phi(r, &p)?) / l;
        let excess = lhs - rhs;
        report.max_violation = report.max_violation.max(excess);
        if excess > DESCENT_TOL * (1.0 + f_bar.abs()) {
            report.violations += 1;
        }
    }
    Ok(report)
}

/// A point with structural norm uniform in `[0, 1 - 1e-6)` per block.
pub fn sample_domain_interior<R: Rng + ?Sized>(
    r: &ReferenceFn,
    shapes: &[crate::tensor::Shape],
    rng: &mut R,
) -> Result<ParamVec> {
    let mut blocks = Vec::with_capacity(shapes.len());
    for (br, &s) in r.blocks().iter().zip(shapes) {
        let g = match s {
            crate::tensor::Shape::Vector(n) => {
                Block::Vector((0..n).map(|_| rng.sample(StandardNormal)).collect())
            }
            crate::tensor::Shape::Matrix(m, n) => Block::Matrix(Matrix::random_normal(m, n, rng)),
        };
        let norm = br.structural_norm(&g)?;
        let target = (1.0 - 1e-6) * rng.random::<f64>();
        let c = if norm > 0.0 { target / norm } else { 0.0 };
        blocks.push(g.map(|v| c * v));
    }
    ParamVec::new(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Problem;
    use crate::prox::Constraint;
    use crate::reference::{ScalarRef, Structure};
    use crate::tensor::dot;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn r(structure: Structure) -> ReferenceFn {
        ReferenceFn::single(structure, ScalarRef::barrier(1.0).unwrap()).unwrap()
    }

    fn v(x: &[f64]) -> ParamVec {
        ParamVec::vector(x.to_vec()).unwrap()
    }

    #[test]
    fn bregman_gap_basics() {
        let rf = r(Structure::Aniso);
        let g = v(&[0.7, -2.0]);
        assert_eq!(gap_bregman(&rf, &g, &g.neg()).unwrap(), 0.0);
        let zero = v(&[0.0, 0.0]);
        let gap = gap_bregman(&rf, &g, &zero).unwrap();
        assert!((gap - reference::phi_star(&rf, &g).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn envelope_examples() {
        let rf = r(Structure::Aniso);
        let free = ConstraintSpec::unconstrained(1);
        assert_eq!(aniso_moreau_env(&free, &rf, 0.3, &v(&[5.0, -1.0])).unwrap(), 0.0);
        let ball = ConstraintSpec::single(Constraint::LinfBall { radius: 1.0 });
        assert_eq!(aniso_moreau_env(&ball, &rf, 0.5, &v(&[0.9])).unwrap(), 0.0);
        // 1D: the minimizer over [-1, 1] of 0.5 h((x - 1.2)/0.5) is x = 1
        let val = aniso_moreau_env(&ball, &rf, 0.5, &v(&[1.2])).unwrap();
        let h = ScalarRef::barrier(1.0).unwrap();
        assert!((val - 0.5 * h.h(-0.4)).abs() < 1e-15);
        assert!(aniso_moreau_env(&ball, &rf, 0.5, &v(&[1.6])).unwrap().is_infinite());
    }

    #[test]
    fn regularized_gap_unconstrained_reduction() {
        let rf = r(Structure::Aniso);
        let free = ConstraintSpec::unconstrained(1);
        let x = v(&[0.3, 0.1]);
        assert_eq!(regularized_gap(&free, &rf, 0.4, &x, &v(&[0.0, 0.0])).unwrap(), 0.0);
        let g = v(&[1.5, -0.25]);
        let got = regularized_gap(&free, &rf, 0.4, &x, &g).unwrap();
        let p = reference::precondition(&rf, &g).unwrap();
        let expect = dot(&p, &g).unwrap() - reference::phi_star(&rf, &g).unwrap();
        assert!((got - expect).abs() < 1e-14, "{got} {expect}");
    }

    #[test]
    fn regularized_gap_rejects_infeasible() {
        let rf = r(Structure::Aniso);
        let ball = ConstraintSpec::single(Constraint::LinfBall { radius: 1.0 });
        let e = regularized_gap(&ball, &rf, 0.4, &v(&[2.0]), &v(&[1.0]));
        assert!(matches!(e, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn descent_check_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rf = r(Structure::Iso);
        let lin = Problem::linear(v(&[0.4]));
        let rep = check_aniso_descent(&lin, &rf, 0.05, 500, 2.0, &mut rng).unwrap();
        assert_eq!(rep.violations, 0);
        let quad = Problem::quadratic(Matrix::identity(1), vec![0.0]).unwrap();
        let rep = check_aniso_descent(&quad, &rf, 0.01, 500, 2.0, &mut rng).unwrap();
        assert!(rep.violations > 0);
        let rep = check_aniso_descent(&quad, &rf, 1.0, 500, 2.0, &mut rng).unwrap();
        assert_eq!(rep.violations, 0, "max violation {:e}", rep.max_violation);
    }
}
