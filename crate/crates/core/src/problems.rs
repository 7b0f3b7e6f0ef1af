//! Synthetic smooth objectives with exact gradients and additive-noise
//! stochastic oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::tensor::{singular_values, Block, Matrix, ParamVec, Shape};

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    /// `½‖Ax - b‖²`
    Quadratic { a: Matrix, b: Vec<f64> },
    /// `Σ_i log(1 + exp(-y_i ⟨a_i, x⟩))`
    Logistic { features: Matrix, labels: Vec<f64> },
    /// `½‖A X B - C‖_F²`
    MatrixQuadratic { a: Matrix, b: Matrix, c: Matrix },
    /// `⟨c, x⟩`
    Linear { c: ParamVec },
}

/// Smooth part `f` of the composite objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    kind: Kind,
    lipschitz: f64,
    f_star_hint: Option<f64>,
}

fn largest_singular_value(m: &Matrix) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.contains(&0) {
        Err(Error::InvalidConfig("problem dimensions must be at least 1".into()))
    } else {
        Ok(())
    }
}

impl Problem {
    pub fn quadratic(a: Matrix, b: Vec<f64>) -> Result<Self> {
        check_dims(&[a.rows(), a.cols()])?;
        if b.len() != a.rows() {
            return Err(Error::Conformability(format!(
                "A is {}x{} but b has length {}",
                a.rows(),
                a.cols(),
                b.len()
            )));
        }
        let s = largest_singular_value(&a)?;
        Ok(Problem {
            kind: Kind::Quadratic { a, b },
            lipschitz: s * s,
            f_star_hint: Some(0.0),
        })
    }

    /// Labels must be `±1`.
    pub fn logistic(features: Matrix, labels: Vec<f64>) -> Result<Self> {
        check_dims(&[features.rows(), features.cols()])?;
        if labels.len() != features.rows() || labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidInput("logistic labels must be ±1, one per row".into()));
        }
        let s = largest_singular_value(&features)?;
        Ok(Problem {
            kind: Kind::Logistic { features, labels },
            lipschitz: 0.25 * s * s,
            f_star_hint: Some(0.0),
        })
    }

    /// Variable `X` has shape `a.cols() × b.rows()`.
    pub fn matrix_quadratic(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        check_dims(&[a.rows(), a.cols(), b.rows(), b.cols()])?;
        if c.shape() != (a.rows(), b.cols()) {
            return Err(Error::Conformability(format!(
                "C is {:?}, expected {}x{}",
                c.shape(),
                a.rows(),
                b.cols()
            )));
        }
        let sa = largest_singular_value(&a)?;
        let sb = largest_singular_value(&b)?;
        Ok(Problem {
            kind: Kind::MatrixQuadratic { a, b, c },
            lipschitz: (sa * sb).powi(2),
            f_star_hint: Some(0.0),
        })
    }

    pub fn linear(c: ParamVec) -> Self {
        Problem {
            kind: Kind::Linear { c },
            lipschitz: 0.0,
            f_star_hint: None,
        }
    }

    pub fn shapes(&self) -> Vec<Shape> {
        match &self.kind {
            Kind::Quadratic { a, .. } => vec![Shape::Vector(a.cols())],
            Kind::Logistic { features, .. } => vec![Shape::Vector(features.cols())],
            Kind::MatrixQuadratic { a, b, .. } => vec![Shape::Matrix(a.cols(), b.rows())],
            Kind::Linear { c } => c.shapes(),
        }
    }

    /// Lipschitz constant of `∇f` in the Euclidean norm.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// A known lower bound on `inf f`.
    pub fn f_star_hint(&self) -> Option<f64> {
        self.f_star_hint
    }

    fn check(&self, x: &ParamVec) -> Result<()> {
        if x.shapes() != self.shapes() {
            return Err(Error::Conformability(format!(
                "problem expects {:?}, got {:?}",
                self.shapes(),
                x.shapes()
            )));
        }
        Ok(())
    }

    pub fn value(&self, x: &ParamVec) -> Result<f64> {
        self.check(x)?;
        Ok(match &self.kind {
            Kind::Quadratic { a, b } => {
                let r = residual(a, b, x.block(0).as_slice());
                0.5 * r.iter().map(|v| v * v).sum::<f64>()
            }
            Kind::Logistic { features, labels } => {
                let z = features.matvec(x.block(0).as_slice());
                z.iter().zip(labels).map(|(&zi, &yi)| softplus(-yi * zi)).sum()
            }
            Kind::MatrixQuadratic { a, b, c } => {
                let r = matrix_residual(a, b, c, x)?;
                0.5 * r.frobenius().powi(2)
            }
            Kind::Linear { c } => crate::tensor::dot(c, x)?,
        })
    }

    pub fn gradient(&self, x: &ParamVec) -> Result<ParamVec> {
        self.check(x)?;
        match &self.kind {
            Kind::Quadratic { a, b } => {
                let r = residual(a, b, x.block(0).as_slice());
                ParamVec::vector(a.tr_matvec(&r))
            }
            Kind::Logistic { features, labels } => {
                let z = features.matvec(x.block(0).as_slice());
                let w: Vec<f64> = z
                    .iter()
                    .zip(labels)
                    .map(|(&zi, &yi)| -yi * logistic_sigmoid(-yi * zi))
                    .collect();
                ParamVec::vector(features.tr_matvec(&w))
            }
            Kind::MatrixQuadratic { a, b, c } => {
                let r = matrix_residual(a, b, c, x)?;
                ParamVec::matrix(a.transpose().matmul(&r).matmul(&b.transpose()))
            }
            Kind::Linear { c } => Ok(c.clone()),
        }
    }

    /// `∇f(x) + ξ`, where the noise `ξ` is a function of the token alone.
    /// Two calls with one token at different points differ exactly by the
    /// difference of true gradients.
    pub fn sample_gradient(&self, x: &ParamVec, noise: &NoiseModel, token: SampleToken) -> Result<ParamVec> {
        let g = self.gradient(x)?;
        if *noise == NoiseModel::None {
            return Ok(g);
        }
        let xi = noise.draw(&self.shapes(), token)?;
        g.add(&xi)
    }
}

fn residual(a: &Matrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    a.matvec(x).iter().zip(b).map(|(ax, bi)| ax - bi).collect()
}

fn matrix_residual(a: &Matrix, b: &Matrix, c: &Matrix, x: &ParamVec) -> Result<Matrix> {
    let xm = x
        .block(0)
        .as_matrix()
        .ok_or_else(|| Error::Conformability("matrix quadratic needs a matrix block".into()))?;
    Ok(a.matmul(xm).matmul(b).sub(c))
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn logistic_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Quadratic `½‖Ax - b‖²` on `R^n` with `A = Q₁ Diag(s) Q₂`, `s_1² = 1`
/// down to `s_n² = 1/cond` (so `L = 1`), and Gaussian `b`.
pub fn make_quadratic<R: Rng + ?Sized>(n: usize, cond: f64, rng: &mut R) -> Result<Problem> {
    check_dims(&[n])?;
    if !(cond >= 1.0 && cond.is_finite()) {
        return Err(Error::InvalidConfig(format!("condition number must be ≥ 1, got {cond}")));
    }
    let s: Vec<f64> = (0..n)
        .map(|i| {
            let frac = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            cond.powf(-0.5 * frac)
        })
        .collect();
    let q1 = Matrix::random_orthogonal(n, rng);
    let q2 = Matrix::random_orthogonal(n, rng);
    let a = q1.matmul(&Matrix::from_diag(n, n, &s)).matmul(&q2);
    let b: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut p = Problem::quadratic(a, b)?;
    // exact by construction; the SVD value agrees to rounding
    p.lipschitz = s[0] * s[0];
    Ok(p)
}

/// Logistic regression on Gaussian features with labels from a random
/// separating direction flipped with probability 0.1.
pub fn make_logistic<R: Rng + ?Sized>(n_samples: usize, n_features: usize, rng: &mut R) -> Result<Problem> {
    check_dims(&[n_samples, n_features])?;
    let scale = 1.0 / (n_features as f64).sqrt();
    let features = Matrix::random_normal(n_samples, n_features, rng).scale(scale);
    let w: Vec<f64> = (0..n_features).map(|_| rng.sample(StandardNormal)).collect();
    let labels = features
        .matvec(&w)
        .iter()
        .map(|&z| {
            let y = if z >= 0.0 { 1.0 } else { -1.0 };
            if rng.random::<f64>() < 0.1 {
                -y
            } else {
                y
            }
        })
        .collect();
    Problem::logistic(features, labels)
}

/// `½‖A X B - C‖_F²` with `X ∈ R^{m×n}`, Gaussian `A ∈ R^{m×m}`, `B ∈ R^{n×n}`
/// scaled by the inverse square root of their sizes, and Gaussian `C`.
pub fn make_matrix_quadratic<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Result<Problem> {
    check_dims(&[m, n])?;
    let a = Matrix::random_normal(m, m, rng).scale(1.0 / (m as f64).sqrt());
    let b = Matrix::random_normal(n, n, rng).scale(1.0 / (n as f64).sqrt());
    let c = Matrix::random_normal(m, n, rng);
    Problem::matrix_quadratic(a, b, c)
}

/// Identifies one sample `ξ`: a per-run seed and the draw index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleToken {
    pub seed: u64,
    pub index: u64,
}

/// Additive gradient noise, independent of the query point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    /// i.i.d. `N(0, σ²)` per coordinate.
    Gaussian { sigma: f64 },
    /// i.i.d. symmetric Student-t per coordinate, scaled so that
    /// `E Σ_i |ξ_i|^p = σ^p` (which bounds `E‖ξ‖^p` for `p ≤ 2`).
    StudentT { df: f64, sigma: f64, p: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::None => Ok(()),
            NoiseModel::Gaussian { sigma } => {
                if sigma >= 0.0 && sigma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(format!("noise sigma must be ≥ 0, got {sigma}")))
                }
            }
            NoiseModel::StudentT { df, sigma, p } => {
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::InvalidConfig(format!("noise sigma must be ≥ 0, got {sigma}")));
                }
                if !(p > 1.0 && p <= 2.0) {
                    return Err(Error::InvalidConfig(format!("moment order p must lie in (1, 2], got {p}")));
                }
                if !(df > p && df.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "Student-t degrees of freedom {df} must exceed p = {p}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// The moment order whose bound the model certifies.
    pub fn p_moment(&self) -> f64 {
        match *self {
            NoiseModel::StudentT { p, .. } => p,
            _ => 2.0,
        }
    }

    /// Per-coordinate multiplier applied to a standard draw.
    fn coordinate_scale(&self, dim: usize) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Gaussian { sigma } => sigma,
            NoiseModel::StudentT { df, sigma, p } => {
                let m = student_t_abs_moment(df, p);
                sigma / (dim as f64 * m).powf(1.0 / p)
            }
        }
    }

    pub fn draw(&self, shapes: &[Shape], token: SampleToken) -> Result<ParamVec> {
        self.validate()?;
        let dim: usize = shapes.iter().map(Shape::len).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(token.seed);
        rng.set_stream(token.index);
        let c = self.coordinate_scale(dim);
        let raw: Vec<f64> = match *self {
            NoiseModel::None => vec![0.0; dim],
            NoiseModel::Gaussian { .. } => (0..dim).map(|_| c * rng.sample::<f64, _>(StandardNormal)).collect(),
            NoiseModel::StudentT { df, .. } => {
                let t = StudentT::new(df).map_err(|e| Error::InvalidConfig(e.to_string()))?;
                (0..dim).map(|_| c * t.sample(&mut rng)).collect()
            }
        };
        let blocks = shapes
            .iter()
            .scan(0usize, |offset, &s| {
                let chunk = raw[*offset..*offset + s.len()].to_vec();
                *offset += s.len();
                Some(match s {
                    Shape::Vector(_) => Block::Vector(chunk),
                    Shape::Matrix(m, n) => Block::Matrix(Matrix::from_row_major(m, n, chunk)),
                })
            })
            .collect();
        ParamVec::new(blocks)
    }
}

/// `E|T|^p` for a standard Student-t with `ν > p` degrees of freedom:
/// `ν^{p/2} Γ((p+1)/2) Γ((ν-p)/2) / (√π Γ(ν/2))`.
pub fn student_t_abs_moment(nu: f64, p: f64) -> f64 {
    let ln = 0.5 * p * nu.ln() + ln_gamma(0.5 * (p + 1.0)) + ln_gamma(0.5 * (nu - p))
        - 0.5 * std::f64::consts::PI.ln()
        - ln_gamma(0.5 * nu);
    ln.exp()
}
