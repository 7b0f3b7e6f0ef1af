//! Brute-force oracles and invariant suites, independent of the closed forms
//! in [`crate::prox`] and [`crate::reference`].
//!
//! The vector oracles only evaluate the scalar kernel `h`: 1D convex pieces
//! are minimized by golden-section search, the ℓ2 ball goes through its
//! concave dual, and nonconvex sets are enumerated (sign patterns, supports,
//! sphere liftings).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::prox::{self, Constraint};
use crate::reference::{BlockRef, ScalarRef, Structure};
use crate::tensor::{full_svd, singular_values, Block, Matrix, Shape};

const GOLDEN_ITERS: usize = 90;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// One line of a check suite.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    /// Worst observed discrepancy (meaning depends on the check).
    pub worst: f64,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, cases: usize, worst: f64, tol: f64, detail: impl Into<String>) -> Self {
        CheckOutcome {
            name: name.into(),
            passed: worst <= tol,
            cases,
            worst,
            detail: detail.into(),
        }
    }
}

/// Minimizes a convex (unimodal) `f` over the open interval `(a, b)`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// `γ h((x - y)/γ)`, `+∞` off the domain.
fn piece(h: &ScalarRef, x: f64, y: f64, gamma: f64) -> f64 {
    let t = (x - y) / gamma;
    if t.abs() >= 1.0 {
        f64::INFINITY
    } else {
        gamma * h.h(t)
    }
}

/// `Σ_i γ h((x_i - y_i)/γ)`.
pub fn separable_objective(h: &ScalarRef, x: &[f64], y: &[f64], gamma: f64) -> f64 {
    x.iter().zip(y).map(|(&xi, &yi)| piece(h, xi, yi, gamma)).sum()
}

/// `min_{x ∈ [lo, hi]} γ h((x - y)/γ) (+ λx²)` by golden section on the part
/// of the interval within reach of `y`.
fn interval_min(h: &ScalarRef, y: f64, gamma: f64, lo: f64, hi: f64, lambda: f64) -> (f64, f64) {
    let a = lo.max(y - gamma);
    let b = hi.min(y + gamma);
    if a >= b {
        return (f64::NAN, f64::INFINITY);
    }
    golden_min(|x| piece(h, x, y, gamma) + lambda * x * x, a, b)
}

/// Best objective of `min_{x ∈ C} Σ γ h((x_i - y_i)/γ)` for a vector set `C`
/// and a separable kernel, without using the closed-form rules.
pub fn brute_force_vector(c: &Constraint, h: &ScalarRef, y: &[f64], gamma: f64) -> Result<f64> {
    c.validate(Shape::Vector(y.len()))?;
    let n = y.len();
    let inf = f64::INFINITY;
    Ok(match *c {
        Constraint::Zero => 0.0,
        Constraint::LinfBall { radius } => y
            .iter()
            .map(|&yi| interval_min(h, yi, gamma, -radius, radius, 0.0).1)
            .sum(),
        Constraint::L2Ball { radius } => l2_ball_dual(h, y, gamma, radius),
        Constraint::SignSet { radius } => (0..1u32 << n)
            .map(|mask| {
                (0..n)
                    .map(|i| {
                        let s = if mask >> i & 1 == 1 { -radius } else { radius };
                        piece(h, s, y[i], gamma)
                    })
                    .sum::<f64>()
            })
            .fold(inf, f64::min),
        Constraint::LinfSphere { radius } => {
            let free: Vec<f64> = y
                .iter()
                .map(|&yi| interval_min(h, yi, gamma, -radius, radius, 0.0).1)
                .collect();
            let mut best = inf;
            for (j, &yj) in y.iter().enumerate() {
                for s in [radius, -radius] {
                    let rest: f64 = (0..n).filter(|&i| i != j).map(|i| free[i]).sum();
                    best = best.min(piece(h, s, yj, gamma) + rest);
                }
            }
            best
        }
        Constraint::HardThreshold { sparsity } => subsets(n, sparsity)
            .into_iter()
            .map(|support| {
                (0..n)
                    .filter(|i| !support.contains(i))
                    .map(|i| piece(h, 0.0, y[i], gamma))
                    .sum::<f64>()
            })
            .fold(inf, f64::min),
        _ => {
            return Err(Error::InvalidSpec(format!("{c:?} is not a vector constraint")));
        }
    })
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0..1u32 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

/// `max_{λ ≥ 0} Σ_i min_x [γ h((x - y_i)/γ) + λ x²] - λ r²`; equals the
/// primal optimum by strong duality.
fn l2_ball_dual(h: &ScalarRef, y: &[f64], gamma: f64, radius: f64) -> f64 {
    let r2 = radius * radius;
    if y.iter().map(|v| v * v).sum::<f64>() <= r2 {
        return 0.0;
    }
    let inner = |lambda: f64| -> (f64, f64) {
        let mut val = -lambda * r2;
        let mut sq = 0.0;
        for &yi in y {
            let (x, v) = interval_min(h, yi, gamma, f64::NEG_INFINITY, f64::INFINITY, lambda);
            val += v;
            sq += x * x;
        }
        (val, sq)
    };
    let mut hi = 1.0;
    while inner(hi).1 >= r2 {
        hi *= 2.0;
        if hi > 1e30 {
            return f64::INFINITY;
        }
    }
    -golden_min(|l| -inner(l).0, 0.0, hi).1
}

fn sample_radius<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(0.5..2.0)
}

fn random_vector_constraint<R: Rng + ?Sized>(tag: &str, n: usize, rng: &mut R) -> Constraint {
    let radius = sample_radius(rng);
    match tag {
        "sign_set" => Constraint::SignSet { radius },
        "l2_ball" => Constraint::L2Ball { radius },
        "linf_ball" => Constraint::LinfBall { radius },
        "linf_sphere" => Constraint::LinfSphere { radius },
        "hard_threshold" => Constraint::HardThreshold {
            sparsity: rng.random_range(1..=n),
        },
        _ => Constraint::Zero,
    }
}

pub const VECTOR_TAGS: [&str; 6] = ["zero", "sign_set", "l2_ball", "linf_ball", "linf_sphere", "hard_threshold"];
pub const SPECTRAL: [Structure; 2] = [Structure::SpectralAniso, Structure::SpectralIso];
pub const MATRIX_TAGS: [&str; 5] = ["stiefel", "frobenius_ball", "spectral_ball", "spectral_sphere", "rank_limit"];

/// A prox input reachable from the set: `y = x_c - γ p` with `x_c ∈ C` and
/// `p` in the interior of the unit box.
fn reachable_input<R: Rng + ?Sized>(c: &Constraint, n: usize, gamma: f64, rng: &mut R) -> Result<Vec<f64>> {
    let g: Vec<f64> = (0..n).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
    let base = c.project(&Block::Vector(g))?;
    Ok(base
        .as_slice()
        .iter()
        .map(|&b| b - gamma * rng.random_range(-0.999..0.999))
        .collect())
}

/// Objective of the library's backward step versus the brute-force oracle on
/// random vector instances of dimension `1..=max_dim`.
pub fn check_vector_prox(
    tag: &str,
    h: &ScalarRef,
    instances: usize,
    max_dim: usize,
    tol: f64,
    seed: u64,
) -> Result<CheckOutcome> {
    let results: Vec<Result<(f64, String)>> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let n = rng.random_range(1..=max_dim);
            let gamma = rng.random_range(0.1..2.0);
            let c = random_vector_constraint(tag, n, &mut rng);
            let y = reachable_input(&c, n, gamma, &mut rng)?;
            let br = BlockRef::new(Structure::Aniso, *h);
            let x = prox::prox_vector(&c, &br, &y, gamma)?;
            if !c.contains(&Block::Vector(x.clone()), 1e-9)? {
                return Ok((f64::INFINITY, format!("infeasible output for {c:?}, y={y:?}")));
            }
            let ours = separable_objective(h, &x, &y, gamma);
            let oracle = brute_force_vector(&c, h, &y, gamma)?;
            let diff = if ours.is_finite() && oracle.is_finite() { (ours - oracle).abs() } else { f64::INFINITY };
            Ok((diff, format!("{c:?} γ={gamma:.3} y={y:?}: ours {ours:.15e} oracle {oracle:.15e}")))
        })
        .collect();
    summarize(format!("prox {tag} ({})", kernel_label(h)), results, tol)
}

fn kernel_label(h: &ScalarRef) -> String {
    match h {
        ScalarRef::Barrier { epsilon } => format!("barrier ε={epsilon}"),
        ScalarRef::HyperKappa { epsilon, kappa } => format!("hyper κ={kappa} ε={epsilon}"),
    }
}

fn summarize(name: String, results: Vec<Result<(f64, String)>>, tol: f64) -> Result<CheckOutcome> {
    let cases = results.len();
    let mut worst = 0.0_f64;
    let mut detail = String::new();
    for r in results {
        let (d, msg) = r?;
        if d > worst || d.is_nan() {
            worst = if d.is_nan() { f64::INFINITY } else { d };
            detail = msg;
        }
    }
    Ok(CheckOutcome::new(name, cases, worst, tol, detail))
}

fn random_matrix_constraint<R: Rng + ?Sized>(tag: &str, m: usize, n: usize, rng: &mut R) -> Constraint {
    let radius = sample_radius(rng);
    match tag {
        "stiefel" => Constraint::Stiefel { radius },
        "frobenius_ball" => Constraint::FrobeniusBall { radius },
        "spectral_ball" => Constraint::SpectralBall { radius },
        "spectral_sphere" => Constraint::SpectralSphere { radius },
        _ => Constraint::RankLimit {
            rank: rng.random_range(1..=m.min(n)),
        },
    }
}

/// `γ φ((X - Y)/γ)` for a spectral reference, evaluated through the SVD of
/// the difference.
fn spectral_objective(br: &BlockRef, x: &Matrix, y: &Matrix, gamma: f64) -> Result<f64> {
    let z = x.sub(y).scale(1.0 / gamma);
    if spectral_norm_lower_bound(&z) >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(gamma * br.phi(&Block::Matrix(z))?)
}

/// Largest of the row norms, column norms and `‖Z‖_F/√min(m,n)`, each a lower
/// bound on `‖Z‖₂ ≤ ‖Z‖_F`; at or past 1 the point is outside every spectral domain.
fn spectral_norm_lower_bound(z: &Matrix) -> f64 {
    let (m, n) = z.shape();
    let mut best = z.frobenius() / (m.min(n) as f64).sqrt();
    for j in 0..n {
        best = best.max(z.column(j).iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    for i in 0..m {
        best = best.max(z.as_slice()[i * n..(i + 1) * n].iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    best
}

/// Random point of `C`, either anywhere or near `center`.
fn random_feasible_matrix<R: Rng + ?Sized>(c: &Constraint, center: &Matrix, rng: &mut R) -> Result<Matrix> {
    let (m, n) = center.shape();
    let scale = match rng.random_range(0..3) {
        0 => 1.0,
        1 => 0.1,
        _ => 0.01,
    };
    let g = Matrix::random_normal(m, n, rng).scale(scale);
    let raw = if scale == 1.0 { g.scale(2.0) } else { center.add(&g) };
    match c.project(&Block::Matrix(raw))? {
        Block::Matrix(x) => Ok(x),
        Block::Vector(_) => unreachable!("matrix constraint projects to a matrix"),
    }
}

/// Matrix backward step versus (a) the vector step on σ(Y) and (b) random
/// feasible candidates, on matrices up to 6×5. Instance `i` uses
/// `structures[i % structures.len()]`.
pub fn check_matrix_reduction(
    tag: &str,
    structures: &[Structure],
    h: &ScalarRef,
    instances: usize,
    candidates: usize,
    tol: f64,
    seed: u64,
) -> Result<CheckOutcome> {
    let results: Vec<Result<(f64, String)>> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let (mut m, mut n) = (rng.random_range(1..=6), rng.random_range(1..=5));
            if tag == "stiefel" && n > m {
                std::mem::swap(&mut m, &mut n);
            }
            let gamma = rng.random_range(0.1..2.0);
            let c = random_matrix_constraint(tag, m, n, &mut rng);
            let structure = structures[i % structures.len()];
            let br = BlockRef::new(structure, *h);
            // reachable input: a feasible point minus γ times an interior direction
            let base = random_feasible_matrix(&c, &Matrix::zeros(m, n), &mut rng)?;
            let dir = Matrix::random_normal(m, n, &mut rng);
            let dn = br.structural_norm(&Block::Matrix(dir.clone()))?;
            let y = base.sub(&dir.scale(gamma * rng.random_range(0.0..0.999) / dn));

            let x = prox::prox_matrix(&c, &br, &y, gamma)?;
            let ours = spectral_objective(&br, &x, &y, gamma)?;
            let vstruct = if structure == Structure::SpectralAniso { Structure::Aniso } else { Structure::Iso };
            let vref = BlockRef::new(vstruct, *h);
            let sigma = singular_values(&y)?;
            let counterpart = c.spectral_counterpart().expect("matrix tag");
            let xs = prox::prox_vector(&counterpart, &vref, &sigma, gamma)?;
            let diff: Vec<f64> = xs.iter().zip(&sigma).map(|(a, b)| (a - b) / gamma).collect();
            let vec_obj = gamma * vref.phi(&Block::Vector(diff))?;
            let mut worst = (ours - vec_obj).abs();
            let mut msg = format!("{c:?} {m}x{n}: matrix {ours:.15e} vector {vec_obj:.15e}");
            if !c.contains(&Block::Matrix(x.clone()), 1e-9)? {
                return Ok((f64::INFINITY, format!("infeasible output for {c:?}")));
            }
            for _ in 0..candidates {
                let z = random_feasible_matrix(&c, &x, &mut rng)?;
                let cand = spectral_objective(&br, &z, &y, gamma)?;
                let excess = ours - cand;
                if excess > worst {
                    worst = excess;
                    msg = format!("{c:?} {m}x{n}: candidate {cand:.15e} beats {ours:.15e}");
                }
            }
            Ok((worst, msg))
        })
        .collect();
    summarize(format!("matrix {tag} ({structures:?}, {})", kernel_label(h)), results, tol)
}

/// Euclidean projections written out independently of `prox`.
fn euclidean_projection(c: &Constraint, y: &[f64]) -> Vec<f64> {
    let n = y.len();
    match *c {
        Constraint::SignSet { radius } => y.iter().map(|&v| if v < 0.0 { -radius } else { radius }).collect(),
        Constraint::L2Ball { radius } => {
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            let s = if norm > radius { radius / norm } else { 1.0 };
            y.iter().map(|v| v * s).collect()
        }
        Constraint::LinfBall { radius } => y.iter().map(|v| v.max(-radius).min(radius)).collect(),
        Constraint::LinfSphere { radius } => {
            // nearest point on each face {x_j = ±r}, keep the closest
            let mut best = (f64::INFINITY, Vec::new());
            for j in 0..n {
                for s in [radius, -radius] {
                    let mut x: Vec<f64> = y.iter().map(|v| v.max(-radius).min(radius)).collect();
                    x[j] = s;
                    let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
                    if d < best.0 {
                        best = (d, x);
                    }
                }
            }
            best.1
        }
        Constraint::HardThreshold { sparsity } => {
            let mut best = (f64::INFINITY, Vec::new());
            for support in subsets(n, sparsity) {
                let x: Vec<f64> = (0..n).map(|i| if support.contains(&i) { y[i] } else { 0.0 }).collect();
                let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
                if d < best.0 {
                    best = (d, x);
                }
            }
            best.1
        }
        _ => y.to_vec(),
    }
}

/// With an isotropic reference the backward step is a Euclidean projection.
/// Compares distances `‖x - y‖` (the minimizer may be set-valued).
pub fn check_iso_reduction(instances: usize, seed: u64) -> Result<CheckOutcome> {
    let h = ScalarRef::barrier(1.0)?;
    let br = BlockRef::new(Structure::Iso, h);
    let mut results = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for tag in &VECTOR_TAGS[1..] {
        for _ in 0..instances {
            let n = rng.random_range(1..=6);
            let c = random_vector_constraint(tag, n, &mut rng);
            let y: Vec<f64> = (0..n).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let e = euclidean_projection(&c, &y);
            let dist = |x: &[f64]| x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            // a step long enough to reach every candidate
            let gamma = 2.0 * dist(&e) + 1.0;
            let x = prox::prox_vector(&c, &br, &y, gamma)?;
            let d = (dist(&x) - dist(&e)).abs();
            let feasible = c.contains(&Block::Vector(x.clone()), 1e-10)?;
            results.push(Ok((if feasible { d } else { f64::INFINITY }, format!("{c:?} y={y:?}"))));
        }
    }
    summarize("iso reduction to Euclidean projection".into(), results, 1e-10)
}

/// `f(σ(X) - σ(Y)) ≤ f(σ(X - Y))` for absolutely symmetric convex `f`, and the
/// underlying weak majorization `|σ(X) - σ(Y)| ≺_w σ(X - Y)`.
pub fn check_majorization(pairs: usize, tol: f64, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let barrier = ScalarRef::barrier(0.5)?;
    let mut worst = f64::NEG_INFINITY;
    let mut detail = String::new();
    for _ in 0..pairs {
        let (m, n) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let x = Matrix::random_normal(m, n, &mut rng).scale(rng.random_range(0.1..3.0));
        let y = Matrix::random_normal(m, n, &mut rng).scale(rng.random_range(0.1..3.0));
        let sx = singular_values(&x)?;
        let sy = singular_values(&y)?;
        let sd = singular_values(&x.sub(&y))?;
        let mut lhs: Vec<f64> = sx.iter().zip(&sy).map(|(a, b)| (a - b).abs()).collect();
        lhs.sort_by(|a, b| b.total_cmp(a));
        let scale = sd.first().copied().unwrap_or(0.0).max(1.0);
        // partial sums
        let (mut pl, mut pr) = (0.0, 0.0);
        for (a, b) in lhs.iter().zip(&sd) {
            pl += a;
            pr += b;
            worst = worst.max((pl - pr) / scale);
        }
        // norms and a barrier on the rescaled spectrum
        let p_norm = |v: &[f64], p: f64| v.iter().map(|t| t.powf(p)).sum::<f64>().powf(1.0 / p);
        for p in [1.0, 1.5, 2.0, 4.0] {
            worst = worst.max((p_norm(&lhs, p) - p_norm(&sd, p)) / scale);
        }
        let s = 1.0 / (sd.first().copied().unwrap_or(0.0) * 1.01 + 1e-300);
        let bar = |v: &[f64]| v.iter().map(|&t| barrier.h((t * s).min(1.0 - 1e-12))).sum::<f64>();
        let (bl, br) = (bar(&lhs), bar(&sd));
        let excess = (bl - br) / br.abs().max(1.0);
        if excess > worst {
            detail = format!("barrier {bl:e} vs {br:e} at {m}x{n}");
        }
        worst = worst.max(excess);
    }
    Ok(CheckOutcome::new("spectral majorization", pairs, worst.max(0.0), tol, detail))
}

/// Fenchel–Young, oddness, `1/ε`-Lipschitz gradient, strict monotonicity and
/// the `∇φ* ∘ ∇φ` round trip on random points.
pub fn check_conjugate_calculus(h: &ScalarRef, points: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = h.epsilon();
    let sample = |rng: &mut ChaCha8Rng| -> f64 {
        let mag = 10f64.powf(rng.random_range(-3.0..2.0)) * eps;
        if rng.random::<bool>() { mag } else { -mag }
    };
    let (mut fy, mut odd, mut lip, mut mono, mut trip) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..points {
        let s = sample(&mut rng);
        let t = h.h_star_prime(s);
        fy = fy.max((h.h(t) + h.h_star(s) - s * t).abs());
        odd = odd.max((h.h_star_prime(-s) + t).abs());
        // interior point, pushed toward the boundary on a log scale
        let x = (1.0 - 10f64.powf(rng.random_range(-6.0..0.0))) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        trip = trip.max((h.h_star_prime(h.h_prime(x)) - x).abs());
        let s2 = sample(&mut rng);
        let t2 = h.h_star_prime(s2);
        lip = lip.max((t - t2).abs() - (s - s2).abs() / eps);
        if s != s2 {
            // strict: the product must be positive
            let prod = (t - t2) * (s - s2);
            mono = mono.max(if prod > 0.0 { 0.0 } else { 1.0 });
        }
    }
    let name = kernel_label(h);
    Ok(vec![
        CheckOutcome::new(format!("Fenchel–Young ({name})"), points, fy, 1e-8, ""),
        CheckOutcome::new(format!("oddness ({name})"), points, odd, 0.0, ""),
        CheckOutcome::new(format!("1/ε-Lipschitz ∇φ* ({name})"), points, lip.max(0.0), 1e-12, ""),
        CheckOutcome::new(format!("strict monotonicity ({name})"), points, mono, 0.0, ""),
        CheckOutcome::new(format!("∇φ*∘∇φ round trip ({name})"), points, trip, 1e-8, ""),
    ])
}

/// Block-level versions of the conjugate checks for every structure.
pub fn check_structured_calculus(h: &ScalarRef, points: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = h.epsilon();
    let mut out = Vec::new();
    for structure in [Structure::Aniso, Structure::Iso, Structure::SpectralAniso, Structure::SpectralIso] {
        let br = BlockRef::new(structure, *h);
        let (mut fy, mut odd, mut lip, mut mono, mut trip) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
        for _ in 0..points {
            let shape = if structure.is_spectral() {
                Shape::Matrix(rng.random_range(1..=4), rng.random_range(1..=4))
            } else {
                Shape::Vector(rng.random_range(1..=5))
            };
            let draw = |rng: &mut ChaCha8Rng| -> Block {
                let scale = 10f64.powf(rng.random_range(-2.0..1.5)) * eps;
                let vals: Vec<f64> = (0..shape.len()).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
                match shape {
                    Shape::Vector(_) => Block::Vector(vals),
                    Shape::Matrix(m, n) => Block::Matrix(Matrix::from_row_major(m, n, vals)),
                }
            };
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let pa = br.precondition(&a)?;
            let pb = br.precondition(&b)?;
            let inner = |u: &Block, v: &Block| u.as_slice().iter().zip(v.as_slice()).map(|(p, q)| p * q).sum::<f64>();
            let scale = br.phi_star(&a)?.abs().max(1.0);
            fy = fy.max((br.phi(&pa)? + br.phi_star(&a)? - inner(&a, &pa)).abs() / scale);
            let neg = br.precondition(&a.map(|v| -v))?;
            odd = odd.max(
                neg.as_slice()
                    .iter()
                    .zip(pa.as_slice())
                    .map(|(p, q)| (p + q).abs())
                    .fold(0.0, f64::max),
            );
            let diff = |u: &Block, v: &Block| {
                u.as_slice()
                    .iter()
                    .zip(v.as_slice())
                    .map(|(p, q)| (p - q).powi(2))
                    .sum::<f64>()
                    .sqrt()
            };
            let dab = diff(&a, &b);
            lip = lip.max(diff(&pa, &pb) - dab / eps);
            let gap: f64 = pa
                .as_slice()
                .iter()
                .zip(pb.as_slice())
                .zip(a.as_slice().iter().zip(b.as_slice()))
                .map(|((p, q), (u, v))| (p - q) * (u - v))
                .sum();
            if dab > 0.0 && gap <= 0.0 {
                mono = 1.0;
            }
            let x = sample_interior_block(&br, shape, &mut rng)?;
            let back = br.precondition(&br.grad_phi(&x)?)?;
            trip = trip.max(diff(&back, &x));
        }
        let name = format!("{structure:?}, {}", kernel_label(h));
        out.push(CheckOutcome::new(format!("Fenchel–Young ({name})"), points, fy, 1e-8, ""));
        out.push(CheckOutcome::new(format!("oddness ({name})"), points, odd, 0.0, ""));
        out.push(CheckOutcome::new(format!("1/ε-Lipschitz ∇φ* ({name})"), points, lip.max(0.0), 1e-12, ""));
        out.push(CheckOutcome::new(format!("strict monotonicity ({name})"), points, mono, 0.0, ""));
        out.push(CheckOutcome::new(format!("∇φ*∘∇φ round trip ({name})"), points, trip, 1e-8, ""));
    }
    Ok(out)
}

/// Random point with structural norm in `[0, 1 - 1e-6]`, biased toward the boundary.
fn sample_interior_block(br: &BlockRef, shape: Shape, rng: &mut ChaCha8Rng) -> Result<Block> {
    let vals: Vec<f64> = (0..shape.len()).map(|_| rng.sample(StandardNormal)).collect();
    let g = match shape {
        Shape::Vector(_) => Block::Vector(vals),
        Shape::Matrix(m, n) => Block::Matrix(Matrix::from_row_major(m, n, vals)),
    };
    let norm = br.structural_norm(&g)?;
    let target = 1.0 - 10f64.powf(rng.random_range(-6.0..0.0));
    Ok(if norm > 0.0 { g.map(|v| v * target / norm) } else { g })
}

/// Full oracle-equivalence suite for the backward step.
pub fn prox_suite(instances: usize, candidates: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    let kernels = [ScalarRef::barrier(0.5)?, ScalarRef::hyper_kappa(0.5, 4.0)?];
    for h in &kernels {
        for tag in VECTOR_TAGS {
            out.push(check_vector_prox(tag, h, instances, 6, 1e-9, seed)?);
        }
    }
    for tag in MATRIX_TAGS {
        out.push(check_matrix_reduction(tag, &SPECTRAL, &kernels[0], instances, candidates, 1e-9, seed)?);
    }
    out.push(check_iso_reduction(instances, seed)?);
    Ok(out)
}

/// Conjugate calculus for several kernels, majorization, SVD invariance and
/// the polynomial-fit ordering.
pub fn invariant_suite(points: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for h in [
        ScalarRef::barrier(1.0)?,
        ScalarRef::barrier(0.01)?,
        ScalarRef::hyper_kappa(0.5, 4.0)?,
        ScalarRef::hyper_kappa(0.01, 1.0)?,
    ] {
        out.extend(check_conjugate_calculus(&h, points, seed)?);
        out.extend(check_structured_calculus(&h, points, seed)?);
    }
    out.push(check_majorization(points, 1e-10, seed)?);
    out.push(check_svd_invariance(points.min(200), seed)?);
    let schedule = crate::polar_express::PolySchedule::polar_express();
    let fit = crate::polar_express::fit_report(&schedule, 3e-4, 4.0, &crate::polar_express::unit_grid(2001))?;
    let margin = fit.max_dev_vs_preconditioner - fit.max_dev_vs_sign;
    out.push(CheckOutcome {
        name: "default schedule is closer to the preconditioner than to sign".into(),
        passed: margin < 0.0,
        cases: 2001,
        worst: margin,
        detail: format!(
            "vs preconditioner {:.6e}, vs sign {:.6e}",
            fit.max_dev_vs_preconditioner, fit.max_dev_vs_sign
        ),
    });
    Ok(out)
}

/// Orthogonal-invariance spot check used by the CLI: `σ(Q₁ X Q₂) = σ(X)`.
pub fn check_svd_invariance(samples: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let (m, n) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let x = Matrix::random_normal(m, n, &mut rng);
        let q1 = Matrix::random_orthogonal(m, &mut rng);
        let q2 = Matrix::random_orthogonal(n, &mut rng);
        let a = full_svd(&x)?.sigma;
        let b = full_svd(&q1.matmul(&x).matmul(&q2))?.sigma;
        for (u, v) in a.iter().zip(&b) {
            worst = worst.max((u - v).abs());
        }
    }
    Ok(CheckOutcome::new("singular values are orthogonally invariant", samples, worst, 1e-12, ""))
}
