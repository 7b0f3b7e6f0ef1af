//! Composed odd-polynomial iterations approximating the matrix sign, and a
//! comparison of the resulting scalar map with the κ-hyperbolic
//! preconditioner `t / (ε^κ + t^κ)^{1/κ}`.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::reference::ScalarRef;
use crate::tensor::Matrix;

const NEWTON_SCHULZ: &str = include_str!("../data/newton_schulz.txt");
const POLAR_EXPRESS: &str = include_str!("../data/polar_express.txt");

/// `p_T ∘ ... ∘ p_1` with `p_i(t) = a t + b t³ + c t⁵`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolySchedule {
    pub name: String,
    pub iterations: Vec<(f64, f64, f64)>,
}

impl PolySchedule {
    pub fn new(name: impl Into<String>, iterations: Vec<(f64, f64, f64)>) -> Result<Self> {
        if iterations.iter().any(|&(a, b, c)| !(a.is_finite() && b.is_finite() && c.is_finite())) {
            return Err(Error::InvalidConfig("polynomial coefficients must be finite".into()));
        }
        Ok(PolySchedule {
            name: name.into(),
            iterations,
        })
    }

    pub fn identity() -> Self {
        PolySchedule {
            name: "identity".into(),
            iterations: Vec::new(),
        }
    }

    /// Shipped five-step quintic Newton–Schulz schedule.
    pub fn newton_schulz() -> Self {
        parse_schedule("newton_schulz", NEWTON_SCHULZ).expect("shipped schedule parses")
    }

    /// Shipped five-step Polar Express schedule; the default surrogate.
    pub fn polar_express() -> Self {
        parse_schedule("polar_express", POLAR_EXPRESS).expect("shipped schedule parses")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "polar_express" | "default" => Ok(Self::polar_express()),
            "newton_schulz" => Ok(Self::newton_schulz()),
            "identity" => Ok(Self::identity()),
            other => Err(Error::InvalidConfig(format!("unknown polynomial schedule {other:?}"))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("schedule");
        parse_schedule(name, &text)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# {}\n", self.name);
        for (a, b, c) in &self.iterations {
            out.push_str(&format!("{a:?} {b:?} {c:?}\n"));
        }
        out
    }
}

impl FromStr for PolySchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_schedule("schedule", s)
    }
}

/// One triple per line, separated by whitespace and/or commas; `#` starts a comment.
pub fn parse_schedule(name: &str, text: &str) -> Result<PolySchedule> {
    let mut iterations = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != 3 {
            return Err(Error::ConfigParse(format!(
                "line {}: expected 3 coefficients, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        let mut abc = [0.0; 3];
        for (slot, f) in abc.iter_mut().zip(&fields) {
            *slot = f
                .parse()
                .map_err(|_| Error::ConfigParse(format!("line {}: bad coefficient {f:?}", lineno + 1)))?;
        }
        iterations.push((abc[0], abc[1], abc[2]));
    }
    PolySchedule::new(name, iterations)
}

pub fn apply_poly_scalar(schedule: &PolySchedule, t: f64) -> f64 {
    schedule.iterations.iter().fold(t, |t, &(a, b, c)| {
        let t2 = t * t;
        t * (a + t2 * (b + c * t2))
    })
}

/// Normalizes `M` by `‖M‖_F + eps_hat`, then applies each step as
/// `X ← X (aI + bG + cG²)` with `G = XᵀX`.
pub fn apply_poly_matrix(schedule: &PolySchedule, m: &Matrix, eps_hat: f64) -> Result<Matrix> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("polynomial iteration on non-finite matrix".into()));
    }
    if !(eps_hat >= 0.0 && eps_hat.is_finite()) {
        return Err(Error::InvalidInput(format!("normalization offset must be ≥ 0, got {eps_hat}")));
    }
    let denom = m.frobenius() + eps_hat;
    if denom == 0.0 {
        return Ok(m.clone());
    }
    Ok(iterate_poly_matrix(schedule, &m.scale(1.0 / denom)))
}

/// The polynomial steps alone, for inputs already scaled to `σ_max ≤ 1`.
pub fn iterate_poly_matrix(schedule: &PolySchedule, x: &Matrix) -> Matrix {
    let mut x = x.clone();
    for &(a, b, c) in &schedule.iterations {
        let g = x.gram();
        let g2 = g.matmul(&g);
        let n = g.rows();
        let mut poly = g.scale(b).add(&g2.scale(c));
        for i in 0..n {
            poly[(i, i)] += a;
        }
        x = x.matmul(&poly);
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitPoint {
    pub t: f64,
    pub poly: f64,
    pub preconditioner: f64,
    pub sign: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub max_dev_vs_preconditioner: f64,
    pub max_dev_vs_sign: f64,
    pub curves: Vec<FitPoint>,
}

/// Compares the scalar polynomial map with the κ-hyperbolic preconditioner
/// and with `sign` (taking `sign(0) = 0`, since zero singular values stay zero).
pub fn fit_report(schedule: &PolySchedule, epsilon: f64, kappa: f64, grid: &[f64]) -> Result<FitReport> {
    if grid.is_empty() || grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidInput("fit grid must be nonempty and inside [0, 1]".into()));
    }
    let h = ScalarRef::hyper_kappa(epsilon, kappa)?;
    let curves: Vec<FitPoint> = grid
        .iter()
        .map(|&t| FitPoint {
            t,
            poly: apply_poly_scalar(schedule, t),
            preconditioner: h.h_star_prime(t),
            sign: if t > 0.0 { 1.0 } else { 0.0 },
        })
        .collect();
    let max_dev = |f: fn(&FitPoint) -> f64| curves.iter().map(|p| (p.poly - f(p)).abs()).fold(0.0, f64::max);
    Ok(FitReport {
        max_dev_vs_preconditioner: max_dev(|p| p.preconditioner),
        max_dev_vs_sign: max_dev(|p| p.sign),
        curves,
    })
}

/// `n` equispaced points on `[0, 1]`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::full_svd;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_examples() {
        assert_eq!(apply_poly_scalar(&PolySchedule::identity(), 0.37), 0.37);
        let cubic = PolySchedule::new("ns3", vec![(1.5, -0.5, 0.0)]).unwrap();
        assert_eq!(apply_poly_scalar(&cubic, 1.0), 1.0);
        for s in [PolySchedule::newton_schulz(), PolySchedule::polar_express()] {
            assert_eq!(apply_poly_scalar(&s, 0.0), 0.0);
            for &t in &[0.01, 0.3, 0.9] {
                assert_eq!(apply_poly_scalar(&s, -t), -apply_poly_scalar(&s, t));
            }
        }
    }

    #[test]
    fn shipped_schedules_load() {
        assert_eq!(PolySchedule::newton_schulz().iterations.len(), 5);
        assert_eq!(PolySchedule::polar_express().iterations, PolySchedule::by_name("default").unwrap().iterations);
    }

    #[test]
    fn parse_round_trip_and_errors() {
        let s = PolySchedule::polar_express();
        let back: PolySchedule = s.to_text().parse().unwrap();
        assert_eq!(back.iterations, s.iterations);
        assert_eq!("1, 2, 3\n# c\n\n4 5 6".parse::<PolySchedule>().unwrap().iterations.len(), 2);
        assert!(matches!("1 2".parse::<PolySchedule>(), Err(Error::ConfigParse(_))));
        assert!(matches!("1 x 2".parse::<PolySchedule>(), Err(Error::ConfigParse(_))));
    }

    #[test]
    fn matrix_zero_and_symmetric() {
        let s = PolySchedule::polar_express();
        assert_eq!(apply_poly_matrix(&s, &Matrix::zeros(3, 2), 0.1).unwrap(), Matrix::zeros(3, 2));
        let eps = 0.25;
        let c = 2f64.sqrt() + eps;
        let out = apply_poly_matrix(&s, &Matrix::identity(2).scale(c), eps).unwrap();
        let sig = full_svd(&out).unwrap().sigma;
        assert!((sig[0] - sig[1]).abs() < 1e-14);
    }

    #[test]
    fn matrix_acts_on_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = PolySchedule::newton_schulz();
        let m = Matrix::random_normal(4, 4, &mut rng);
        let eps = 0.05;
        let out = apply_poly_matrix(&s, &m, eps).unwrap();
        let scale = m.frobenius() + eps;
        let mut expect: Vec<f64> = full_svd(&m)
            .unwrap()
            .sigma
            .iter()
            .map(|&v| apply_poly_scalar(&s, v / scale).abs())
            .collect();
        expect.sort_by(|a, b| b.total_cmp(a));
        let got = full_svd(&out).unwrap().sigma;
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-9, "{got:?} vs {expect:?}");
        }
    }

    #[test]
    fn fit_report_examples() {
        let r = fit_report(&PolySchedule::identity(), 3e-4, 4.0, &[1.0]).unwrap();
        assert_eq!(r.curves[0].sign - r.curves[0].poly, 0.0);
        let r = fit_report(&PolySchedule::polar_express(), 3e-4, 4.0, &[0.0]).unwrap();
        assert_eq!((r.max_dev_vs_preconditioner, r.max_dev_vs_sign), (0.0, 0.0));
        assert!(fit_report(&PolySchedule::identity(), 3e-4, 4.0, &[]).is_err());
        assert!(fit_report(&PolySchedule::identity(), 3e-4, 4.0, &[1.5]).is_err());
    }
}
