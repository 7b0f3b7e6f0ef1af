use std::fmt;

use super::matrix::{dot as slice_dot, norm as slice_norm, Matrix};
use crate::error::{Error, Result};

/// Shape of one block of the product space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Vector(n) => n,
            Shape::Matrix(m, n) => m * n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Vector(n) => write!(f, "vec[{n}]"),
            Shape::Matrix(m, n) => write!(f, "mat[{m}x{n}]"),
        }
    }
}

/// One factor `E_i` of the parameter space.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Vector(Vec<f64>),
    Matrix(Matrix),
}

impl Block {
    pub fn zeros(shape: Shape) -> Self {
        match shape {
            Shape::Vector(n) => Block::Vector(vec![0.0; n]),
            Shape::Matrix(m, n) => Block::Matrix(Matrix::zeros(m, n)),
        }
    }

    pub fn shape(&self) -> Shape {
        match self {
            Block::Vector(v) => Shape::Vector(v.len()),
            Block::Matrix(m) => Shape::Matrix(m.rows(), m.cols()),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            Block::Vector(v) => v,
            Block::Matrix(m) => m.as_slice(),
        }
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        match self {
            Block::Vector(v) => v,
            Block::Matrix(m) => m.as_mut_slice(),
        }
    }

    pub fn frobenius(&self) -> f64 {
        slice_norm(self.as_slice())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Block {
        match self {
            Block::Vector(v) => Block::Vector(v.iter().map(|&x| f(x)).collect()),
            Block::Matrix(m) => Block::Matrix(m.map(f)),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Block::Vector(v) => Some(v),
            Block::Matrix(_) => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&Matrix> {
        match self {
            Block::Matrix(m) => Some(m),
            Block::Vector(_) => None,
        }
    }

    fn zip_with(&self, other: &Block, f: impl Fn(f64, f64) -> f64) -> Block {
        let data: Vec<f64> = self
            .as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(&a, &b)| f(a, b))
            .collect();
        match self {
            Block::Vector(_) => Block::Vector(data),
            Block::Matrix(m) => Block::Matrix(Matrix::from_row_major(m.rows(), m.cols(), data)),
        }
    }
}

impl From<Vec<f64>> for Block {
    fn from(v: Vec<f64>) -> Self {
        Block::Vector(v)
    }
}

impl From<Matrix> for Block {
    fn from(m: Matrix) -> Self {
        Block::Matrix(m)
    }
}

/// A point of the layerwise product space `E_1 × ... × E_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVec {
    blocks: Vec<Block>,
}

impl ParamVec {
    /// Rejects empty block lists, zero-sized blocks and non-finite entries.
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidInput("a parameter vector needs at least one block".into()));
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.shape().is_empty() {
                return Err(Error::InvalidInput(format!("block {i} has a zero dimension")));
            }
            if !b.is_finite() {
                return Err(Error::InvalidInput(format!("block {i} has non-finite entries")));
            }
        }
        Ok(ParamVec { blocks })
    }

    /// Builds without validation; callers guarantee the invariants.
    pub(crate) fn from_blocks_unchecked(blocks: Vec<Block>) -> Self {
        ParamVec { blocks }
    }

    pub fn vector(v: Vec<f64>) -> Result<Self> {
        ParamVec::new(vec![Block::Vector(v)])
    }

    pub fn matrix(m: Matrix) -> Result<Self> {
        ParamVec::new(vec![Block::Matrix(m)])
    }

    pub fn zeros(shapes: &[Shape]) -> Self {
        ParamVec {
            blocks: shapes.iter().map(|&s| Block::zeros(s)).collect(),
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<Block> {
        self.blocks
    }

    pub fn block(&self, i: usize) -> &Block {
        &self.blocks[i]
    }

    pub fn shapes(&self) -> Vec<Shape> {
        self.blocks.iter().map(Block::shape).collect()
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.shape().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(Block::is_finite)
    }

    pub fn conformable(&self, other: &ParamVec) -> bool {
        self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a.shape() == b.shape())
    }

    pub fn check_conformable(&self, other: &ParamVec) -> Result<()> {
        if self.conformable(other) {
            Ok(())
        } else {
            Err(Error::Conformability(format!(
                "{} vs {}",
                describe(&self.shapes()),
                describe(&other.shapes())
            )))
        }
    }

    /// Flattened entries in block order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.as_slice().iter().copied()).collect()
    }

    pub fn from_flat(shapes: &[Shape], flat: &[f64]) -> Result<Self> {
        let total: usize = shapes.iter().map(Shape::len).sum();
        if total != flat.len() {
            return Err(Error::Conformability(format!(
                "flat buffer of length {} for shapes {}",
                flat.len(),
                describe(shapes)
            )));
        }
        let mut offset = 0;
        let blocks = shapes
            .iter()
            .map(|&s| {
                let chunk = flat[offset..offset + s.len()].to_vec();
                offset += s.len();
                match s {
                    Shape::Vector(_) => Block::Vector(chunk),
                    Shape::Matrix(m, n) => Block::Matrix(Matrix::from_row_major(m, n, chunk)),
                }
            })
            .collect();
        ParamVec::new(blocks)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ParamVec {
        ParamVec {
            blocks: self.blocks.iter().map(|b| b.map(&f)).collect(),
        }
    }

    pub fn scale(&self, a: f64) -> ParamVec {
        self.map(|x| a * x)
    }

    pub fn neg(&self) -> ParamVec {
        self.map(|x| -x)
    }

    pub fn add(&self, other: &ParamVec) -> Result<ParamVec> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ParamVec) -> Result<ParamVec> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &ParamVec, f: impl Fn(f64, f64) -> f64) -> Result<ParamVec> {
        self.check_conformable(other)?;
        Ok(ParamVec {
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a.zip_with(b, &f))
                .collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &ParamVec) -> Result<f64> {
        self.check_conformable(other)?;
        Ok(self
            .to_flat()
            .iter()
            .zip(other.to_flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// `a·x + y`.
pub fn axpy(a: f64, x: &ParamVec, y: &ParamVec) -> Result<ParamVec> {
    x.zip_with(y, |xi, yi| a * xi + yi)
}

pub fn dot(x: &ParamVec, y: &ParamVec) -> Result<f64> {
    x.check_conformable(y)?;
    Ok(x
        .blocks
        .iter()
        .zip(&y.blocks)
        .map(|(a, b)| slice_dot(a.as_slice(), b.as_slice()))
        .sum())
}

/// Product-space Euclidean norm.
pub fn norm2(x: &ParamVec) -> f64 {
    slice_norm(&blockwise_frobenius(x))
}

pub fn blockwise_frobenius(x: &ParamVec) -> Vec<f64> {
    x.blocks.iter().map(Block::frobenius).collect()
}

fn describe(shapes: &[Shape]) -> String {
    let parts: Vec<String> = shapes.iter().map(|s| s.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn axpy_small_example() {
        let x = ParamVec::vector(vec![1.0, 0.0]).unwrap();
        let y = ParamVec::vector(vec![0.0, 1.0]).unwrap();
        let z = axpy(2.0, &x, &y).unwrap();
        assert_eq!(z.to_flat(), vec![2.0, 1.0]);
    }

    #[test]
    fn zero_has_zero_norm() {
        let z = ParamVec::zeros(&[Shape::Vector(3), Shape::Matrix(2, 2)]);
        assert_eq!(norm2(&z), 0.0);
        assert_eq!(blockwise_frobenius(&z), vec![0.0, 0.0]);
    }

    #[test]
    fn shape_mismatch_is_conformability_error() {
        let x = ParamVec::vector(vec![1.0, 0.0]).unwrap();
        let y = ParamVec::matrix(Matrix::zeros(1, 2)).unwrap();
        assert!(matches!(dot(&x, &y), Err(Error::Conformability(_))));
        let w = ParamVec::vector(vec![1.0]).unwrap();
        assert!(matches!(axpy(1.0, &x, &w), Err(Error::Conformability(_))));
    }

    #[test]
    fn rejects_invalid_blocks() {
        assert!(ParamVec::vector(vec![]).is_err());
        assert!(ParamVec::vector(vec![f64::INFINITY]).is_err());
        assert!(ParamVec::new(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn dot_self_is_norm_squared(v in proptest::collection::vec(-1e3_f64..1e3, 1..12),
                                    w in proptest::collection::vec(-1e3_f64..1e3, 4..=4)) {
            let x = ParamVec::new(vec![
                Block::Vector(v),
                Block::Matrix(Matrix::from_row_major(2, 2, w)),
            ]).unwrap();
            let d = dot(&x, &x).unwrap();
            let n = norm2(&x);
            prop_assert!((d - n * n).abs() <= 1e-12 * d.max(1.0));
        }

        #[test]
        fn flat_round_trip(v in proptest::collection::vec(-10.0_f64..10.0, 7..=7)) {
            let shapes = [Shape::Vector(1), Shape::Matrix(3, 2)];
            let x = ParamVec::from_flat(&shapes, &v).unwrap();
            prop_assert_eq!(x.to_flat(), v);
            prop_assert_eq!(x.shapes(), shapes.to_vec());
        }
    }
}
