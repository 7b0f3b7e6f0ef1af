//! Anisotropic backward steps `argmin_x g(x) + γ φ((x - y)/γ)` for indicator
//! functions `g = δ_C`.
//!
//! For every set except the ℓ2 / Frobenius ball the anisotropic minimizer
//! coincides with the Euclidean projection (both are coordinatewise or
//! singular-value-wise "closest point" rules). The ball needs a scalar
//! Lagrange multiplier, found by bisection.
//!
//! Matrix sets are handled by reducing to the vector rule on the singular
//! values and reassembling with the same singular vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reference::{self, BlockRef, ReferenceFn, ScalarRef, Structure};
use crate::tensor::{full_svd, slice_norm, Block, Matrix, ParamVec, Shape};

/// Membership tolerance used by `contains` checks on iterates.
pub const FEASIBILITY_TOL: f64 = 1e-9;

const BISECTION_MAX_ITER: usize = 200;
const BISECTION_REL_TOL: f64 = 1e-12;
const DOMAIN_SLACK: f64 = 1e-9;

/// One nonsmooth term per block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    Zero,
    /// `|x_1| = ... = |x_n| = r`
    SignSet { radius: f64 },
    L2Ball { radius: f64 },
    LinfBall { radius: f64 },
    LinfSphere { radius: f64 },
    /// `‖x‖_0 ≤ s`
    HardThreshold { sparsity: usize },
    /// `XᵀX = r² I`, needs `cols ≤ rows`
    Stiefel { radius: f64 },
    FrobeniusBall { radius: f64 },
    SpectralBall { radius: f64 },
    SpectralSphere { radius: f64 },
    RankLimit { rank: usize },
}

impl Constraint {
    pub fn is_vector_tag(&self) -> bool {
        matches!(
            self,
            Constraint::SignSet { .. }
                | Constraint::L2Ball { .. }
                | Constraint::LinfBall { .. }
                | Constraint::LinfSphere { .. }
                | Constraint::HardThreshold { .. }
        )
    }

    pub fn is_matrix_tag(&self) -> bool {
        matches!(
            self,
            Constraint::Stiefel { .. }
                | Constraint::FrobeniusBall { .. }
                | Constraint::SpectralBall { .. }
                | Constraint::SpectralSphere { .. }
                | Constraint::RankLimit { .. }
        )
    }

    pub fn is_convex(&self) -> bool {
        matches!(
            self,
            Constraint::Zero
                | Constraint::L2Ball { .. }
                | Constraint::LinfBall { .. }
                | Constraint::FrobeniusBall { .. }
                | Constraint::SpectralBall { .. }
        )
    }

    /// The vector rule a matrix set reduces to on its singular values.
    pub fn spectral_counterpart(&self) -> Option<Constraint> {
        Some(match *self {
            Constraint::Stiefel { radius } => Constraint::SignSet { radius },
            Constraint::FrobeniusBall { radius } => Constraint::L2Ball { radius },
            Constraint::SpectralBall { radius } => Constraint::LinfBall { radius },
            Constraint::SpectralSphere { radius } => Constraint::LinfSphere { radius },
            Constraint::RankLimit { rank } => Constraint::HardThreshold { sparsity: rank },
            _ => return None,
        })
    }

    fn radius(&self) -> Option<f64> {
        match *self {
            Constraint::SignSet { radius }
            | Constraint::L2Ball { radius }
            | Constraint::LinfBall { radius }
            | Constraint::LinfSphere { radius }
            | Constraint::Stiefel { radius }
            | Constraint::FrobeniusBall { radius }
            | Constraint::SpectralBall { radius }
            | Constraint::SpectralSphere { radius } => Some(radius),
            _ => None,
        }
    }

    pub fn validate(&self, shape: Shape) -> Result<()> {
        if let Some(r) = self.radius() {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidSpec(format!("{self:?}: radius must be positive")));
            }
        }
        match (self, shape) {
            (Constraint::Zero, _) => Ok(()),
            (c, Shape::Matrix(..)) if c.is_vector_tag() => Err(Error::InvalidSpec(format!(
                "{c:?} is a vector constraint but the block is {shape}"
            ))),
            (c, Shape::Vector(_)) if c.is_matrix_tag() => Err(Error::InvalidSpec(format!(
                "{c:?} is a matrix constraint but the block is {shape}"
            ))),
            (Constraint::HardThreshold { sparsity }, Shape::Vector(n)) => {
                if *sparsity == 0 || *sparsity > n {
                    Err(Error::InvalidSpec(format!("sparsity {sparsity} outside 1..={n}")))
                } else {
                    Ok(())
                }
            }
            (Constraint::RankLimit { rank }, Shape::Matrix(m, n)) => {
                if *rank == 0 || *rank > m.min(n) {
                    Err(Error::InvalidSpec(format!("rank {rank} outside 1..={}", m.min(n))))
                } else {
                    Ok(())
                }
            }
            (Constraint::Stiefel { .. }, Shape::Matrix(m, n)) if n > m => Err(Error::InvalidSpec(
                format!("Stiefel constraint needs cols <= rows, got {m}x{n}"),
            )),
            _ => Ok(()),
        }
    }

    /// Membership up to `tol` (scaled by the radius where one exists).
    pub fn contains(&self, x: &Block, tol: f64) -> Result<bool> {
        self.validate(x.shape())?;
        let scaled = tol * self.radius().unwrap_or(1.0).max(1.0);
        Ok(match (*self, x) {
            (Constraint::Zero, _) => true,
            (Constraint::Stiefel { .. } | Constraint::SpectralSphere { .. } | Constraint::SpectralBall { .. }
                | Constraint::RankLimit { .. } | Constraint::FrobeniusBall { .. }, Block::Matrix(m)) => {
                let sigma = full_svd(m)?.sigma;
                let counterpart = self.spectral_counterpart().expect("matrix tag");
                counterpart.contains(&Block::Vector(sigma), tol)?
            }
            (c, Block::Vector(v)) => vector_contains(c, v, scaled),
            _ => false,
        })
    }

    /// `δ_C(x)` with membership tolerance `tol`.
    pub fn indicator(&self, x: &Block, tol: f64) -> Result<f64> {
        Ok(if self.contains(x, tol)? { 0.0 } else { f64::INFINITY })
    }

    /// Euclidean projection onto the set (a minimizer for nonconvex sets).
    pub fn project(&self, y: &Block) -> Result<Block> {
        self.validate(y.shape())?;
        match (self, y) {
            (Constraint::Zero, _) => Ok(y.clone()),
            (c, Block::Vector(v)) => Ok(Block::Vector(project_vector(c, v))),
            (c, Block::Matrix(m)) => {
                let counterpart = c.spectral_counterpart().expect("validated matrix tag");
                let svd = full_svd(m)?;
                let x = project_vector(&counterpart, &svd.sigma);
                Ok(Block::Matrix(svd.compose(&x)))
            }
        }
    }
}

fn vector_contains(c: Constraint, v: &[f64], tol: f64) -> bool {
    let max_abs = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    match c {
        Constraint::Zero => true,
        Constraint::SignSet { radius } => v.iter().all(|x| (x.abs() - radius).abs() <= tol),
        Constraint::L2Ball { radius } => slice_norm(v) <= radius + tol,
        Constraint::LinfBall { radius } => max_abs <= radius + tol,
        Constraint::LinfSphere { radius } => (max_abs - radius).abs() <= tol,
        Constraint::HardThreshold { sparsity } => v.iter().filter(|x| x.abs() > tol).count() <= sparsity,
        _ => false,
    }
}

fn sign(t: f64) -> f64 {
    if t < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Index of the largest-magnitude entry, lowest index on ties.
fn argmax_abs(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    best
}

fn project_vector(c: &Constraint, y: &[f64]) -> Vec<f64> {
    match *c {
        Constraint::SignSet { radius } => y.iter().map(|&t| radius * sign(t)).collect(),
        Constraint::LinfBall { radius } => y.iter().map(|&t| t.clamp(-radius, radius)).collect(),
        Constraint::LinfSphere { radius } => {
            let mut x: Vec<f64> = y.iter().map(|&t| t.clamp(-radius, radius)).collect();
            let j = argmax_abs(y);
            if y[j].abs() < radius {
                x[j] = radius * sign(y[j]);
            }
            x
        }
        Constraint::HardThreshold { sparsity } => {
            let mut order: Vec<usize> = (0..y.len()).collect();
            // stable sort keeps the lowest index first among equal magnitudes
            order.sort_by(|&i, &j| y[j].abs().total_cmp(&y[i].abs()));
            let mut x = vec![0.0; y.len()];
            for &i in order.iter().take(sparsity) {
                x[i] = y[i];
            }
            x
        }
        Constraint::L2Ball { radius } => {
            let n = slice_norm(y);
            if n <= radius {
                y.to_vec()
            } else {
                y.iter().map(|&t| t * radius / n).collect()
            }
        }
        _ => y.to_vec(),
    }
}

fn check_step(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("step size must be positive, got {gamma}")))
    }
}

/// Errors if `(x - y)/γ` left dom φ by more than rounding.
fn check_reach(r: &BlockRef, x: &Block, y: &Block, gamma: f64) -> Result<()> {
    let diff = x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| (a - b) / gamma).collect();
    let z = match x {
        Block::Vector(_) => Block::Vector(diff),
        Block::Matrix(m) => Block::Matrix(Matrix::from_row_major(m.rows(), m.cols(), diff)),
    };
    let norm = r.structural_norm(&z)?;
    if norm > 1.0 + DOMAIN_SLACK {
        return Err(Error::EmptyProxDomain(format!(
            "every feasible point is farther than the step reach (scaled distance {norm:.6e})"
        )));
    }
    Ok(())
}

/// Backward step on a vector block with an `Aniso` or `Iso` reference.
pub fn prox_vector(c: &Constraint, r: &BlockRef, y: &[f64], gamma: f64) -> Result<Vec<f64>> {
    check_step(gamma)?;
    if !y.iter().all(|t| t.is_finite()) {
        return Err(Error::InvalidInput("prox input has non-finite entries".into()));
    }
    c.validate(Shape::Vector(y.len()))?;
    if !matches!(r.structure, Structure::Aniso | Structure::Iso) {
        return Err(Error::InvalidSpec(format!(
            "vector backward step needs an Aniso or Iso reference, got {:?}",
            r.structure
        )));
    }
    if let (Constraint::L2Ball { radius }, Structure::Aniso) = (c, r.structure) {
        return aniso_l2_ball(&r.scalar, y, gamma, *radius).map(|(x, _)| x);
    }
    let x = project_vector(c, y);
    check_reach(r, &Block::Vector(x.clone()), &Block::Vector(y.to_vec()), gamma)?;
    Ok(x)
}

/// Backward step on a matrix block with a spectral reference.
pub fn prox_matrix(c: &Constraint, r: &BlockRef, y: &Matrix, gamma: f64) -> Result<Matrix> {
    check_step(gamma)?;
    if !y.is_finite() {
        return Err(Error::InvalidInput("prox input has non-finite entries".into()));
    }
    c.validate(Shape::Matrix(y.rows(), y.cols()))?;
    if *c == Constraint::Zero {
        return Ok(y.clone());
    }
    let vector_structure = match r.structure {
        Structure::SpectralAniso => Structure::Aniso,
        Structure::SpectralIso => Structure::Iso,
        s => {
            return Err(Error::InvalidSpec(format!(
                "matrix backward step needs a spectral reference, got {s:?}"
            )))
        }
    };
    let counterpart = c.spectral_counterpart().expect("validated matrix tag");
    let svd = full_svd(y)?;
    let vref = BlockRef::new(vector_structure, r.scalar);
    let x = prox_vector(&counterpart, &vref, &svd.sigma, gamma)?;
    Ok(svd.compose(&x))
}

/// Blockwise constraint specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    blocks: Vec<Constraint>,
}

impl ConstraintSpec {
    pub fn new(blocks: Vec<Constraint>) -> Self {
        ConstraintSpec { blocks }
    }

    pub fn single(c: Constraint) -> Self {
        ConstraintSpec { blocks: vec![c] }
    }

    pub fn unconstrained(n_blocks: usize) -> Self {
        ConstraintSpec {
            blocks: vec![Constraint::Zero; n_blocks],
        }
    }

    pub fn blocks(&self) -> &[Constraint] {
        &self.blocks
    }

    pub fn is_unconstrained(&self) -> bool {
        self.blocks.iter().all(|c| *c == Constraint::Zero)
    }

    pub fn validate(&self, shapes: &[Shape]) -> Result<()> {
        if shapes.len() != self.blocks.len() {
            return Err(Error::InvalidSpec(format!(
                "spec has {} blocks, parameters have {}",
                self.blocks.len(),
                shapes.len()
            )));
        }
        self.blocks.iter().zip(shapes).try_for_each(|(c, &s)| c.validate(s))
    }

    pub fn contains(&self, x: &ParamVec, tol: f64) -> Result<bool> {
        self.validate(&x.shapes())?;
        for (c, b) in self.blocks.iter().zip(x.blocks()) {
            if !c.contains(b, tol)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// `g(x)`: 0 on the set (within tolerance), `+∞` elsewhere.
    pub fn g(&self, x: &ParamVec) -> Result<f64> {
        Ok(if self.contains(x, FEASIBILITY_TOL)? { 0.0 } else { f64::INFINITY })
    }

    pub fn project(&self, y: &ParamVec) -> Result<ParamVec> {
        self.validate(&y.shapes())?;
        let blocks = self
            .blocks
            .iter()
            .zip(y.blocks())
            .map(|(c, b)| c.project(b))
            .collect::<Result<Vec<_>>>()?;
        ParamVec::new(blocks)
    }
}

/// `argmin_x g(x) + (γ ⋆ φ)(x - y)`, evaluated blockwise.
pub fn prox(spec: &ConstraintSpec, r: &ReferenceFn, y: &ParamVec, gamma: f64) -> Result<ParamVec> {
    check_step(gamma)?;
    r.check(y)?;
    spec.validate(&y.shapes())?;
    let blocks = spec
        .blocks
        .iter()
        .zip(r.blocks())
        .zip(y.blocks())
        .map(|((c, br), b)| -> Result<Block> {
            match (c, b) {
                (Constraint::Zero, _) => Ok(b.clone()),
                (c, Block::Vector(v)) => prox_vector(c, br, v, gamma).map(Block::Vector),
                (c, Block::Matrix(m)) => prox_matrix(c, br, m, gamma).map(Block::Matrix),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    ParamVec::new(blocks)
}

/// `g(x) + γ φ((x - y)/γ)`, the quantity the backward step minimizes.
pub fn prox_objective(spec: &ConstraintSpec, r: &ReferenceFn, x: &ParamVec, y: &ParamVec, gamma: f64) -> Result<f64> {
    let g = spec.g(x)?;
    if g.is_infinite() {
        return Ok(g);
    }
    let z = x.sub(y)?.scale(1.0 / gamma);
    Ok(g + gamma * reference::phi(r, &z)?)
}

/// `-∇φ((x_next - y)/γ) ∈ ∂g(x_next)`, the subgradient selected by the backward step.
pub fn recover_subgradient(x_next: &ParamVec, y: &ParamVec, gamma: f64, r: &ReferenceFn) -> Result<ParamVec> {
    check_step(gamma)?;
    let z = x_next.sub(y)?.scale(1.0 / gamma);
    let z = reference::clamp_interior(r, &z)?;
    Ok(reference::grad_phi(r, &z)?.neg())
}

/// Anisotropic ℓ2-ball step: returns the minimizer and its multiplier `λ`.
///
/// Each coordinate solves `x_i + γ (h*)'(2λ x_i) = y_i`; `Σ x_i(λ)² - r²`
/// decreases in `λ`, so bisection on `λ` locates the active multiplier.
pub fn aniso_l2_ball(h: &ScalarRef, y: &[f64], gamma: f64, radius: f64) -> Result<(Vec<f64>, f64)> {
    check_step(gamma)?;
    if slice_norm(y) <= radius {
        return Ok((y.to_vec(), 0.0));
    }
    let r2 = radius * radius;
    let residual = |lambda: f64| -> f64 {
        y.iter().map(|&t| coordinate_root(h, t, gamma, lambda).powi(2)).sum::<f64>() - r2
    };

    let mut hi = 1.0;
    let mut doublings = 0;
    while residual(hi) >= 0.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > BISECTION_MAX_ITER {
            let limit: f64 = y.iter().map(|&t| (t.abs() - gamma).max(0.0).powi(2)).sum();
            return Err(if limit >= r2 {
                Error::EmptyProxDomain(format!(
                    "ball of radius {radius} is out of reach of a step of size {gamma}"
                ))
            } else {
                Error::Numerical(format!("no bracket for the ball multiplier up to λ = {hi:e}"))
            });
        }
    }

    let mut lo = 0.0;
    let mut lambda = hi;
    let mut found = false;
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let res = residual(mid);
        if res.abs() <= BISECTION_REL_TOL * r2 {
            lambda = mid;
            found = true;
            break;
        }
        if res > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if !found {
        // feasible side of the bracket
        lambda = hi;
    }
    let x = y.iter().map(|&t| coordinate_root(h, t, gamma, lambda)).collect();
    Ok((x, lambda))
}

/// Solution of `x + γ (h*)'(2λx) = y` (same sign as `y`, `|x| ≤ |y|`).
pub fn coordinate_root(h: &ScalarRef, y: f64, gamma: f64, lambda: f64) -> f64 {
    let a = y.abs();
    if lambda == 0.0 || a == 0.0 {
        return y;
    }
    let mag = match *h {
        ScalarRef::Barrier { epsilon } => {
            // 2λx² + (ε + 2γλ - 2aλ)x - εa = 0, positive root
            let b = epsilon + 2.0 * lambda * (gamma - a);
            let disc = (b * b + 8.0 * lambda * epsilon * a).sqrt();
            if b > 0.0 {
                2.0 * epsilon * a / (b + disc)
            } else {
                (disc - b) / (4.0 * lambda)
            }
        }
        ScalarRef::HyperKappa { .. } => {
            let (mut lo, mut hi) = (0.0, a);
            for _ in 0..BISECTION_MAX_ITER {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if mid + gamma * h.h_star_prime(2.0 * lambda * mid) > a {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        }
    };
    mag.copysign(y)
}

/// Max over coordinates of `|h'((x_i - y_i)/γ) + 2λx_i|`, relative to `max(1, |2λx_i|)`.
pub fn l2_ball_kkt_residual(h: &ScalarRef, y: &[f64], x: &[f64], gamma: f64, lambda: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let t = (xi - yi) / gamma;
            let g = h.h_prime(t) + 2.0 * lambda * xi;
            g.abs() / (2.0 * lambda * xi).abs().max(1.0)
        })
        .fold(0.0, f64::max)
}
