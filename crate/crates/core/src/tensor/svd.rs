//! Full singular value decomposition by one-sided (Hestenes) Jacobi.
//!
//! Rotations are applied to the columns of the taller orientation of the
//! input until every column pair is orthogonal to a relative tolerance of
//! `1e-12`. Sweeps visit pairs in a fixed order, so the result is a pure
//! function of the input.

use super::matrix::{dot, norm, Matrix};
use crate::error::{Error, Result};

const ORTHOGONALITY_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 80;

/// `M = U · Diag(sigma) · Vᵀ` with `U ∈ O(m)`, `V ∈ O(n)`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn rank_count(&self) -> usize {
        self.sigma.iter().filter(|&&s| s > 0.0).count()
    }

    /// `U[:, :q] · Diag(values) · V[:, :q]ᵀ` for `q = values.len() = min(m, n)`.
    pub fn compose(&self, values: &[f64]) -> Matrix {
        assert_eq!(values.len(), self.sigma.len(), "spectrum length mismatch");
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut out = Matrix::zeros(m, n);
        for (k, &s) in values.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            for i in 0..m {
                let us = self.u[(i, k)] * s;
                if us == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += us * self.v[(j, k)];
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Matrix {
        self.compose(&self.sigma)
    }

    /// Thin factors restricted to the nonzero singular values.
    pub fn reduced(&self) -> ReducedSvd {
        let r = self.rank_count();
        let take = |m: &Matrix| {
            let mut out = Matrix::zeros(m.rows(), r);
            for j in 0..r {
                out.set_column(j, &m.column(j));
            }
            out
        };
        ReducedSvd {
            u: take(&self.u),
            sigma: self.sigma[..r].to_vec(),
            v: take(&self.v),
        }
    }
}

/// Reduced view: `U` is `m × r`, `V` is `n × r`, `r` = number of nonzero singular values.
#[derive(Debug, Clone)]
pub struct ReducedSvd {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

pub fn full_svd(m: &Matrix) -> Result<Svd> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::InvalidInput("svd of an empty matrix".into()));
    }
    if !m.is_finite() {
        return Err(Error::InvalidInput("svd input contains non-finite entries".into()));
    }
    let mut svd = if m.rows() >= m.cols() {
        tall_svd(m)?
    } else {
        let t = tall_svd(&m.transpose())?;
        Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        }
    };
    normalize_signs(&mut svd);
    Ok(svd)
}

pub fn reduced_svd(m: &Matrix) -> Result<ReducedSvd> {
    Ok(full_svd(m)?.reduced())
}

pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    Ok(full_svd(m)?.sigma)
}

/// One-sided Jacobi for `rows >= cols`.
fn tall_svd(a: &Matrix) -> Result<Svd> {
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = n == 1;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= ORTHOGONALITY_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi SVD did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let norms: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal singular values keep their original column order
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut v = Matrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        v.set_column(k, &vcols[j]);
        let s = norms[j];
        let candidate = if s > f64::MIN_POSITIVE * 1e4 {
            let mut u: Vec<f64> = cols[j].iter().map(|x| x / s).collect();
            reorthogonalize(&mut u, &ucols);
            let nu = norm(&u);
            (nu > 0.5).then(|| u.into_iter().map(|x| x / nu).collect::<Vec<_>>())
        } else {
            None
        };
        ucols.push(candidate.unwrap_or_else(|| completion_vector(m, &ucols)));
    }
    while ucols.len() < m {
        let c = completion_vector(m, &ucols);
        ucols.push(c);
    }
    let mut u = Matrix::zeros(m, m);
    for (k, c) in ucols.iter().enumerate() {
        u.set_column(k, c);
    }
    Ok(Svd { u, sigma, v })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

fn reorthogonalize(u: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let p = dot(b, u);
            u.iter_mut().zip(b).for_each(|(ui, bi)| *ui -= p * bi);
        }
    }
}

/// Unit vector orthogonal to `basis`: the standard basis vector with the
/// largest residual after projection (lowest index on ties).
fn completion_vector(m: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for k in 0..m {
        let mut e = vec![0.0; m];
        e[k] = 1.0;
        reorthogonalize(&mut e, basis);
        let ne = norm(&e);
        if best.as_ref().is_none_or(|(b, _)| ne > *b) {
            best = Some((ne, e));
        }
    }
    let (ne, e) = best.expect("m >= 1");
    e.into_iter().map(|x| x / ne).collect()
}

/// Each left singular vector gets a positive largest-magnitude entry (lowest
/// index on ties); the paired right vector flips with it.
fn normalize_signs(svd: &mut Svd) {
    let q = svd.sigma.len();
    for k in 0..svd.u.cols() {
        if leading_entry_negative(&svd.u.column(k)) {
            for i in 0..svd.u.rows() {
                svd.u[(i, k)] = -svd.u[(i, k)];
            }
            if k < q {
                for i in 0..svd.v.rows() {
                    svd.v[(i, k)] = -svd.v[(i, k)];
                }
            }
        }
    }
    for k in q..svd.v.cols() {
        if leading_entry_negative(&svd.v.column(k)) {
            for i in 0..svd.v.rows() {
                svd.v[(i, k)] = -svd.v[(i, k)];
            }
        }
    }
}

fn leading_entry_negative(c: &[f64]) -> bool {
    let mut best = 0.0_f64;
    let mut sign_negative = false;
    for &x in c {
        if x.abs() > best {
            best = x.abs();
            sign_negative = x < 0.0;
        }
    }
    sign_negative
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn check_invariants(m: &Matrix, svd: &Svd) {
        let (r, c) = m.shape();
        assert!(svd.u.gram().max_abs_diff(&Matrix::identity(r)) < 1e-10);
        assert!(svd.v.gram().max_abs_diff(&Matrix::identity(c)) < 1e-10);
        assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
        assert!(svd.sigma.iter().all(|&s| s >= 0.0));
        let err = svd.reconstruct().sub(m).frobenius();
        assert!(err <= 1e-9 * m.frobenius().max(1e-300), "reconstruction error {err}");
    }

    #[test]
    fn diagonal_sorted_input_is_identity_factored() {
        let m = Matrix::from_diag(2, 2, &[2.0, 0.5]);
        let svd = full_svd(&m).unwrap();
        assert_eq!(svd.sigma, vec![2.0, 0.5]);
        assert_eq!(svd.u, Matrix::identity(2));
        assert_eq!(svd.v, Matrix::identity(2));
    }

    #[test]
    fn diagonal_unsorted_input_permutes_factors() {
        let m = Matrix::from_diag(2, 2, &[0.5, 2.0]);
        let svd = full_svd(&m).unwrap();
        assert_eq!(svd.sigma, vec![2.0, 0.5]);
        let perm = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(svd.u, perm);
        assert_eq!(svd.v, perm);
        check_invariants(&m, &svd);
    }

    #[test]
    fn random_rectangular_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(r, c) in &[(4, 3), (3, 4), (1, 5), (5, 1), (6, 6), (9, 2)] {
            let m = Matrix::random_normal(r, c, &mut rng);
            let svd = full_svd(&m).unwrap();
            check_invariants(&m, &svd);
        }
    }

    #[test]
    fn rank_deficient_keeps_full_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Matrix::random_normal(5, 2, &mut rng);
        let b = Matrix::random_normal(2, 4, &mut rng);
        let m = a.matmul(&b);
        let svd = full_svd(&m).unwrap();
        check_invariants(&m, &svd);
        assert!(svd.sigma[2] < 1e-12 * svd.sigma[0]);
        let zero = Matrix::zeros(3, 2);
        let svd = full_svd(&zero).unwrap();
        assert_eq!(svd.sigma, vec![0.0, 0.0]);
        check_invariants(&zero, &svd);
        assert_eq!(svd.reduced().sigma.len(), 0);
    }

    #[test]
    fn deterministic_and_sign_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Matrix::random_normal(4, 4, &mut rng);
        let a = full_svd(&m).unwrap();
        let b = full_svd(&m).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.sigma, b.sigma);
        for k in 0..4 {
            assert!(!leading_entry_negative(&a.u.column(k)));
        }
    }

    #[test]
    fn rejects_non_finite() {
        let m = Matrix::from_rows(&[&[1.0, f64::NAN]]);
        assert!(matches!(full_svd(&m), Err(Error::InvalidInput(_))));
    }
}
