//! Reference functions φ and their conjugate calculus.
//!
//! Every reference function here is built from an even scalar kernel `h`
//! with domain `(-1, 1)`:
//!
//! * `Barrier`: `h(t) = -ε(ln(1-|t|) + |t|)`, `(h*)'(s) = s/(ε+|s|)`.
//! * `HyperKappa`: `(h*)'(s) = s/(ε^κ + |s|^κ)^{1/κ}`; `κ = 1` reproduces the barrier.
//!
//! The kernel is lifted blockwise to the product space with one of four
//! structures (anisotropic sum over entries, isotropic composition with the
//! Euclidean norm, and their orthogonally invariant spectral versions acting
//! on singular values). `precondition` is `∇φ*`, the map applied to the
//! search direction in the forward step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::tensor::{full_svd, slice_dot, slice_norm, Block, Matrix, ParamVec, Shape};

/// `grad_phi` refuses points whose structural norm exceeds `1 - BOUNDARY_MARGIN`.
pub const BOUNDARY_MARGIN: f64 = 1e-12;

/// Slack beyond the unit boundary still treated as rounding when clamping.
const CLAMP_SLACK: f64 = 1e-9;

const QUAD_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarRef {
    Barrier { epsilon: f64 },
    HyperKappa { epsilon: f64, kappa: f64 },
}

impl ScalarRef {
    pub fn barrier(epsilon: f64) -> Result<Self> {
        let r = ScalarRef::Barrier { epsilon };
        r.validate()?;
        Ok(r)
    }

    pub fn hyper_kappa(epsilon: f64, kappa: f64) -> Result<Self> {
        let r = ScalarRef::HyperKappa { epsilon, kappa };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let eps = self.epsilon();
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {eps}")));
        }
        if let ScalarRef::HyperKappa { kappa, .. } = *self {
            if !(kappa >= 1.0 && kappa.is_finite()) {
                return Err(Error::InvalidConfig(format!("kappa must be >= 1, got {kappa}")));
            }
        }
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        match *self {
            ScalarRef::Barrier { epsilon } | ScalarRef::HyperKappa { epsilon, .. } => epsilon,
        }
    }

    /// Strong convexity modulus of `h`.
    pub fn mu(&self) -> f64 {
        self.epsilon()
    }

    /// `h(t)`; `+∞` outside the open unit interval.
    pub fn h(&self, t: f64) -> f64 {
        let a = t.abs();
        if a >= 1.0 {
            return f64::INFINITY;
        }
        match *self {
            ScalarRef::Barrier { epsilon } => -epsilon * (f64::ln_1p(-a) + a),
            ScalarRef::HyperKappa { epsilon, kappa } => {
                if a == 0.0 {
                    return 0.0;
                }
                // Legendre transform evaluated at its maximizer s = h'(a):
                // h(a) = a·s - h*(s) = R(s) - (1-a)·s with h*(s) = s - R(s).
                let s = self.h_prime(a);
                let one_minus_a_times_s = epsilon * a * (1.0 - a) / one_minus_pow(a, kappa);
                conjugate_deficit(epsilon, kappa, s) - one_minus_a_times_s
            }
        }
    }

    /// `h'(t)` for `|t| < 1`.
    pub fn h_prime(&self, t: f64) -> f64 {
        match *self {
            ScalarRef::Barrier { epsilon } => epsilon * t / (1.0 - t.abs()),
            ScalarRef::HyperKappa { epsilon, kappa } => epsilon * t / one_minus_pow(t.abs(), kappa),
        }
    }

    /// `h*(s)`, finite everywhere.
    pub fn h_star(&self, s: f64) -> f64 {
        let a = s.abs();
        match *self {
            ScalarRef::Barrier { epsilon } => a - epsilon * f64::ln_1p(a / epsilon),
            ScalarRef::HyperKappa { epsilon, kappa } => {
                let deficit = conjugate_deficit(epsilon, kappa, a);
                (a - deficit).max(0.0)
            }
        }
    }

    /// `(h*)'(s)`: odd, strictly increasing, valued in `(-1, 1)`.
    pub fn h_star_prime(&self, s: f64) -> f64 {
        match *self {
            ScalarRef::Barrier { epsilon } => s / (epsilon + s.abs()),
            ScalarRef::HyperKappa { epsilon, kappa } => {
                let a = s.abs() / epsilon;
                let mag = if a <= 1.0 {
                    a / (1.0 + a.powf(kappa)).powf(1.0 / kappa)
                } else {
                    1.0 / (1.0 + a.powf(-kappa)).powf(1.0 / kappa)
                };
                mag.copysign(s)
            }
        }
    }
}

/// `(1 - a^κ)^{1/κ}` for `a ∈ [0, 1)`.
fn one_minus_pow(a: f64, kappa: f64) -> f64 {
    (-(kappa * a.ln()).exp_m1()).powf(1.0 / kappa)
}

/// `R(s) = ∫_0^s (1 - (h*)'(u)) du = |s| - h*(s)` for the κ-family.
fn conjugate_deficit(epsilon: f64, kappa: f64, s: f64) -> f64 {
    let upper = s.abs() / epsilon;
    let integrand = |v: f64| {
        if v <= 1.0 {
            1.0 - v / (1.0 + v.powf(kappa)).powf(1.0 / kappa)
        } else {
            // 1 - (1 + v^-κ)^{-1/κ}, written to avoid cancellation
            -(-f64::ln_1p(v.powf(-kappa)) / kappa).exp_m1()
        }
    };
    epsilon * quadrature::integrate_from_zero_geometric(integrand, upper, QUAD_TOL)
}

/// How the scalar kernel is lifted to a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    /// `Σ h(x_i)` over all entries.
    Aniso,
    /// `h(‖x‖)` with the Euclidean / Frobenius norm.
    Iso,
    /// `Σ h(σ_i(X))`; matrix blocks only.
    SpectralAniso,
    /// `h(‖σ(X)‖) = h(‖X‖_F)`; matrix blocks only.
    SpectralIso,
}

impl Structure {
    pub fn is_spectral(self) -> bool {
        matches!(self, Structure::SpectralAniso | Structure::SpectralIso)
    }

    pub fn is_isotropic(self) -> bool {
        matches!(self, Structure::Iso | Structure::SpectralIso)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockRef {
    pub structure: Structure,
    pub scalar: ScalarRef,
}

impl BlockRef {
    pub fn new(structure: Structure, scalar: ScalarRef) -> Self {
        BlockRef { structure, scalar }
    }

    pub fn check_shape(&self, shape: Shape) -> Result<()> {
        if self.structure.is_spectral() && matches!(shape, Shape::Vector(_)) {
            return Err(Error::InvalidInput(format!(
                "{:?} reference needs a matrix block, got {shape}",
                self.structure
            )));
        }
        Ok(())
    }

    /// `sup ‖x‖` over the block's domain.
    pub fn domain_radius(&self, shape: Shape) -> f64 {
        match (self.structure, shape) {
            (Structure::Iso | Structure::SpectralIso, _) => 1.0,
            (Structure::Aniso, s) => (s.len() as f64).sqrt(),
            (Structure::SpectralAniso, Shape::Matrix(m, n)) => (m.min(n) as f64).sqrt(),
            (Structure::SpectralAniso, Shape::Vector(_)) => 1.0,
        }
    }

    /// `∇φ*` on one block.
    pub fn precondition(&self, d: &Block) -> Result<Block> {
        self.check_shape(d.shape())?;
        let h = &self.scalar;
        match self.structure {
            Structure::Aniso => Ok(d.map(|s| h.h_star_prime(s))),
            Structure::Iso | Structure::SpectralIso => {
                let n = d.frobenius();
                if n == 0.0 {
                    return Ok(d.map(|_| 0.0));
                }
                let c = h.h_star_prime(n) / n;
                Ok(d.map(|s| c * s))
            }
            Structure::SpectralAniso => spectral_map(d, |s| h.h_star_prime(s)),
        }
    }

    /// `∇φ` on one block; errors within `BOUNDARY_MARGIN` of the boundary.
    pub fn grad_phi(&self, x: &Block) -> Result<Block> {
        self.check_shape(x.shape())?;
        let limit = 1.0 - BOUNDARY_MARGIN;
        let norm = self.structural_norm(x)?;
        if norm > limit {
            return Err(Error::BoundaryProximity { norm, limit });
        }
        let h = &self.scalar;
        match self.structure {
            Structure::Aniso => Ok(x.map(|t| h.h_prime(t))),
            Structure::Iso | Structure::SpectralIso => {
                if norm == 0.0 {
                    return Ok(x.map(|_| 0.0));
                }
                let c = h.h_prime(norm) / norm;
                Ok(x.map(|t| c * t))
            }
            Structure::SpectralAniso => spectral_map(x, |t| h.h_prime(t)),
        }
    }

    /// `φ` on one block; `+∞` outside the domain.
    pub fn phi(&self, x: &Block) -> Result<f64> {
        self.check_shape(x.shape())?;
        let h = &self.scalar;
        Ok(match self.structure {
            Structure::Aniso => x.as_slice().iter().map(|&t| h.h(t)).sum(),
            Structure::Iso | Structure::SpectralIso => h.h(x.frobenius()),
            Structure::SpectralAniso => spectrum(x)?.iter().map(|&s| h.h(s)).sum(),
        })
    }

    /// `φ*` on one block.
    pub fn phi_star(&self, y: &Block) -> Result<f64> {
        self.check_shape(y.shape())?;
        let h = &self.scalar;
        Ok(match self.structure {
            Structure::Aniso => y.as_slice().iter().map(|&s| h.h_star(s)).sum(),
            Structure::Iso | Structure::SpectralIso => h.h_star(y.frobenius()),
            Structure::SpectralAniso => spectrum(y)?.iter().map(|&s| h.h_star(s)).sum(),
        })
    }

    /// Gauge whose unit ball is dom φ: max-abs, Euclidean, or spectral norm.
    pub fn structural_norm(&self, x: &Block) -> Result<f64> {
        Ok(match self.structure {
            Structure::Aniso => x.as_slice().iter().fold(0.0, |m, v| m.max(v.abs())),
            Structure::Iso | Structure::SpectralIso => x.frobenius(),
            Structure::SpectralAniso => spectrum(x)?.first().copied().unwrap_or(0.0),
        })
    }

    /// Pulls `z` into `1 - BOUNDARY_MARGIN` of the domain when rounding left it
    /// on or marginally past the boundary; genuine exits are errors.
    pub fn clamp_interior(&self, z: &Block) -> Result<Block> {
        let limit = 1.0 - BOUNDARY_MARGIN;
        let norm = self.structural_norm(z)?;
        if norm <= limit {
            return Ok(z.clone());
        }
        if norm > 1.0 + CLAMP_SLACK || !norm.is_finite() {
            return Err(Error::BoundaryProximity { norm, limit });
        }
        match self.structure {
            Structure::Aniso => Ok(z.map(|t| t.clamp(-limit, limit))),
            Structure::Iso | Structure::SpectralIso => {
                let c = limit / norm;
                Ok(z.map(|t| c * t))
            }
            Structure::SpectralAniso => spectral_map(z, |s| s.min(limit)),
        }
    }
}

fn spectrum(b: &Block) -> Result<Vec<f64>> {
    match b {
        Block::Matrix(m) => Ok(full_svd(m)?.sigma),
        Block::Vector(v) => Ok(vec![slice_norm(v)]),
    }
}

/// `U · Diag(f(σ)) · Vᵀ`; requires `f(0) = 0`.
fn spectral_map(b: &Block, f: impl Fn(f64) -> f64) -> Result<Block> {
    let m: &Matrix = b
        .as_matrix()
        .ok_or_else(|| Error::InvalidInput("spectral map on a vector block".into()))?;
    let svd = full_svd(m)?;
    let values: Vec<f64> = svd.sigma.iter().map(|&s| f(s)).collect();
    Ok(Block::Matrix(svd.compose(&values)))
}

/// Layerwise separable reference function `φ(x) = Σ_i φ_i(x_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFn {
    blocks: Vec<BlockRef>,
}

impl ReferenceFn {
    pub fn new(blocks: Vec<BlockRef>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidConfig("reference function needs at least one block".into()));
        }
        for b in &blocks {
            b.scalar.validate()?;
        }
        Ok(ReferenceFn { blocks })
    }

    /// Single-block reference.
    pub fn single(structure: Structure, scalar: ScalarRef) -> Result<Self> {
        ReferenceFn::new(vec![BlockRef::new(structure, scalar)])
    }

    /// Vector blocks get `Aniso`/`Iso`, matrix blocks the spectral counterpart.
    pub fn layerwise(shapes: &[Shape], scalar: ScalarRef, anisotropic: bool) -> Result<Self> {
        let blocks = shapes
            .iter()
            .map(|s| {
                let structure = match (s, anisotropic) {
                    (Shape::Vector(_), true) => Structure::Aniso,
                    (Shape::Vector(_), false) => Structure::Iso,
                    (Shape::Matrix(..), true) => Structure::SpectralAniso,
                    (Shape::Matrix(..), false) => Structure::SpectralIso,
                };
                BlockRef::new(structure, scalar)
            })
            .collect();
        ReferenceFn::new(blocks)
    }

    pub fn blocks(&self) -> &[BlockRef] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &BlockRef {
        &self.blocks[i]
    }

    /// Smallest strong convexity modulus across blocks.
    pub fn mu(&self) -> f64 {
        self.blocks.iter().map(|b| b.scalar.mu()).fold(f64::INFINITY, f64::min)
    }

    pub fn check(&self, x: &ParamVec) -> Result<()> {
        if self.blocks.len() != x.blocks().len() {
            return Err(Error::Conformability(format!(
                "reference has {} blocks, point has {}",
                self.blocks.len(),
                x.blocks().len()
            )));
        }
        for (r, b) in self.blocks.iter().zip(x.blocks()) {
            r.check_shape(b.shape())?;
        }
        Ok(())
    }

    pub fn block_radii(&self, shapes: &[Shape]) -> Vec<f64> {
        self.blocks
            .iter()
            .zip(shapes)
            .map(|(r, &s)| r.domain_radius(s))
            .collect()
    }

    /// `D = sup_{x ∈ dom φ} ‖x‖` over the product space.
    pub fn domain_radius(&self, shapes: &[Shape]) -> f64 {
        self.block_radii(shapes).iter().map(|r| r * r).sum::<f64>().sqrt()
    }

    fn blockwise(&self, x: &ParamVec, f: impl Fn(&BlockRef, &Block) -> Result<Block>) -> Result<ParamVec> {
        self.check(x)?;
        let blocks = self
            .blocks
            .iter()
            .zip(x.blocks())
            .map(|(r, b)| f(r, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(ParamVec::from_blocks_unchecked(blocks))
    }

    fn sum(&self, x: &ParamVec, f: impl Fn(&BlockRef, &Block) -> Result<f64>) -> Result<f64> {
        self.check(x)?;
        self.blocks.iter().zip(x.blocks()).map(|(r, b)| f(r, b)).sum()
    }
}

fn require_finite(x: &ParamVec) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput("non-finite entries".into()))
    }
}

/// `∇φ*(d)`.
pub fn precondition(r: &ReferenceFn, d: &ParamVec) -> Result<ParamVec> {
    require_finite(d)?;
    r.blockwise(d, BlockRef::precondition)
}

/// `φ(x)`; `+∞` outside dom φ.
pub fn phi(r: &ReferenceFn, x: &ParamVec) -> Result<f64> {
    r.sum(x, BlockRef::phi)
}

pub fn phi_star(r: &ReferenceFn, y: &ParamVec) -> Result<f64> {
    require_finite(y)?;
    r.sum(y, BlockRef::phi_star)
}

/// `∇φ(x)`, the inverse of [`precondition`] on the interior of dom φ.
pub fn grad_phi(r: &ReferenceFn, x: &ParamVec) -> Result<ParamVec> {
    require_finite(x)?;
    r.blockwise(x, BlockRef::grad_phi)
}

pub fn clamp_interior(r: &ReferenceFn, z: &ParamVec) -> Result<ParamVec> {
    r.blockwise(z, BlockRef::clamp_interior)
}

/// Dual Bregman distance `φ*(a) - φ*(b) - ⟨∇φ*(b), a - b⟩`.
pub fn bregman_dual(r: &ReferenceFn, a: &ParamVec, b: &ParamVec) -> Result<f64> {
    a.check_conformable(b)?;
    let pa = phi_star(r, a)?;
    let pb = phi_star(r, b)?;
    let gb = precondition(r, b)?;
    let lin: f64 = gb
        .blocks()
        .iter()
        .zip(a.blocks().iter().zip(b.blocks()))
        .map(|(g, (x, y))| {
            let diff: Vec<f64> = x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| p - q).collect();
            slice_dot(g.as_slice(), &diff)
        })
        .sum();
    Ok((pa - pb - lin).max(0.0))
}
