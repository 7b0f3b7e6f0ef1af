//! TOML experiment description.
//!
//! ```toml
//! name = "polyak-quadratic"
//! seed = 0
//! repetitions = 20
//! horizon = 1024
//! output = "out/polyak.csv"
//!
//! [problem]
//! kind = "quadratic"
//! dim = 10
//! cond = 10.0
//! seed = 1
//!
//! [reference]
//! structure = "aniso"
//! kind = "barrier"
//! epsilon = 0.01
//!
//! [constraint]
//! kind = "linf_ball"
//! radius = 1.0
//!
//! [noise]
//! kind = "gaussian"
//! sigma = 1.0
//!
//! [mode]
//! kind = "polyak"
//! gamma_bar = 1.0
//! ```

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{Mode, RunConfig};
use crate::problems::{make_logistic, make_matrix_quadratic, make_quadratic, NoiseModel, Problem};
use crate::prox::{Constraint, ConstraintSpec};
use crate::reference::{BlockRef, ReferenceFn, ScalarRef, Structure};
use crate::tensor::{ParamVec, Shape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// `½‖Ax - b‖²`, `A` of size `dim` with condition number `cond` (of `AᵀA`).
    Quadratic {
        dim: usize,
        cond: f64,
        #[serde(default)]
        seed: u64,
    },
    Logistic {
        samples: usize,
        features: usize,
        #[serde(default)]
        seed: u64,
    },
    /// `½‖A X B - C‖_F²` over `rows × cols` matrices.
    MatrixQuadratic {
        rows: usize,
        cols: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Problem> {
        match *self {
            ProblemSpec::Quadratic { dim, cond, seed } => make_quadratic(dim, cond, &mut ChaCha8Rng::seed_from_u64(seed)),
            ProblemSpec::Logistic { samples, features, seed } => {
                make_logistic(samples, features, &mut ChaCha8Rng::seed_from_u64(seed))
            }
            ProblemSpec::MatrixQuadratic { rows, cols, seed } => {
                make_matrix_quadratic(rows, cols, &mut ChaCha8Rng::seed_from_u64(seed))
            }
        }
    }

    pub fn shape(&self) -> Shape {
        match *self {
            ProblemSpec::Quadratic { dim, .. } => Shape::Vector(dim),
            ProblemSpec::Logistic { features, .. } => Shape::Vector(features),
            ProblemSpec::MatrixQuadratic { rows, cols, .. } => Shape::Matrix(rows, cols),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpec {
    pub structure: Structure,
    #[serde(flatten)]
    pub scalar: ScalarRef,
}

fn default_repetitions() -> usize {
    1
}

fn default_noise() -> NoiseModel {
    NoiseModel::None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Repetition `r` runs with seed `seed + r`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    pub horizon: usize,
    pub output: PathBuf,
    pub problem: ProblemSpec,
    pub reference: ReferenceSpec,
    /// Absent means unconstrained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<Constraint>,
    #[serde(default = "default_noise")]
    pub noise: NoiseModel,
    pub mode: Mode,
    /// Flattened starting point (row-major for matrices). Defaults to the
    /// projection of the origin onto the constraint set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::ConfigParse(msg) => Error::ConfigParse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    /// Field-level checks that do not need the built problem.
    pub fn check(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be ≥ 1".into()));
        }
        if self.name.trim().is_empty() {
            return Err(Error::InvalidConfig("name must not be empty".into()));
        }
        self.reference.scalar.validate()?;
        self.noise.validate()?;
        BlockRef::new(self.reference.structure, self.reference.scalar).check_shape(self.problem.shape())?;
        if let Some(c) = &self.constraint {
            c.validate(self.problem.shape())?;
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != self.problem.shape().len() {
                return Err(Error::InvalidConfig(format!(
                    "x0 has {} entries, problem has {}",
                    x0.len(),
                    self.problem.shape().len()
                )));
            }
        }
        Ok(())
    }

    pub fn reference_fn(&self) -> Result<ReferenceFn> {
        ReferenceFn::single(self.reference.structure, self.reference.scalar)
    }

    pub fn constraint_spec(&self) -> ConstraintSpec {
        match self.constraint {
            Some(c) => ConstraintSpec::single(c),
            None => ConstraintSpec::unconstrained(1),
        }
    }

    pub fn starting_point(&self) -> Result<ParamVec> {
        let shapes = [self.problem.shape()];
        match &self.x0 {
            Some(flat) => ParamVec::from_flat(&shapes, flat),
            None => self.constraint_spec().project(&ParamVec::zeros(&shapes)),
        }
    }

    /// Run configuration for repetition `rep`.
    pub fn run_config(&self, rep: usize) -> Result<RunConfig> {
        Ok(RunConfig {
            reference: self.reference_fn()?,
            constraints: self.constraint_spec(),
            mode: self.mode.clone(),
            noise: self.noise,
            horizon: self.horizon,
            seed: self.seed.wrapping_add(rep as u64),
            x0: self.starting_point()?,
        })
    }

    /// The settings used by the rate experiments: a 10-dimensional quadratic
    /// with condition number 10, anisotropic reference with `ε = 0.01`,
    /// `γ̄ = 1`, unit Gaussian noise, 20 repetitions.
    pub fn rate_preset(mode: &str) -> Result<Self> {
        let (mode, scalar, noise) = match mode {
            "polyak" => (
                Mode::Polyak { gamma_bar: 1.0 },
                ScalarRef::barrier(0.01)?,
                NoiseModel::Gaussian { sigma: 1.0 },
            ),
            "polyak-heavy" => (
                Mode::Polyak { gamma_bar: 1.0 },
                ScalarRef::barrier(0.01)?,
                NoiseModel::StudentT {
                    df: 1.8,
                    sigma: 1.0,
                    p: 1.5,
                },
            ),
            "storm" => (
                Mode::Storm { gamma_bar: 1.0 },
                ScalarRef::barrier(0.01)?,
                NoiseModel::Gaussian { sigma: 1.0 },
            ),
            "pe" => (
                Mode::PolarExpress {
                    gamma_bar: 1.0,
                    eps_hat: None,
                    schedule: None,
                },
                ScalarRef::hyper_kappa(0.01, 4.0)?,
                NoiseModel::Gaussian { sigma: 1.0 },
            ),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown rate preset {other:?} (expected polyak, polyak-heavy, storm or pe)"
                )))
            }
        };
        Ok(ExperimentConfig {
            name: "rates".into(),
            seed: 0,
            repetitions: 20,
            horizon: 64,
            output: PathBuf::from("rates.csv"),
            problem: ProblemSpec::Quadratic {
                dim: 10,
                cond: 10.0,
                seed: 1,
            },
            reference: ReferenceSpec {
                structure: Structure::Aniso,
                scalar,
            },
            constraint: None,
            noise,
            mode,
            x0: None,
        })
    }
}
