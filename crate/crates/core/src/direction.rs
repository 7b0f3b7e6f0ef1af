//! Direction estimators `d^k`: plain samples, Polyak momentum and STORM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{axpy, ParamVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionKind {
    Plain,
    Polyak,
    Storm,
}

/// Current estimate plus the bookkeeping each estimator needs.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionState {
    pub d: ParamVec,
    pub kind: DirectionKind,
    pub k: usize,
    /// Point the previous sample was taken at (STORM only).
    pub x_prev: Option<ParamVec>,
}

impl DirectionState {
    /// `d^0 = ∇f(x^0, ξ^0)`.
    pub fn new(kind: DirectionKind, first_sample: ParamVec, x0: &ParamVec) -> Result<Self> {
        first_sample.check_conformable(x0)?;
        Ok(DirectionState {
            d: first_sample,
            kind,
            k: 0,
            x_prev: (kind == DirectionKind::Storm).then(|| x0.clone()),
        })
    }
}

fn check_weight(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("momentum weight must lie in (0, 1], got {alpha}")))
    }
}

/// `d ← α g + (1 - α) d`.
pub fn polyak_update(state: &DirectionState, grad_sample: &ParamVec, alpha: f64) -> Result<DirectionState> {
    check_weight(alpha)?;
    let d = axpy(alpha, grad_sample, &state.d.scale(1.0 - alpha))?;
    Ok(DirectionState {
        d,
        kind: state.kind,
        k: state.k + 1,
        x_prev: state.x_prev.clone(),
    })
}

/// `d ← (1 - α) d + α g(x) + (1 - α)(g(x) - g(x_prev))`, both gradients on one sample.
///
/// `alpha = 0` is accepted here so the estimator can be frozen in tests; the
/// optimizer schedule only ever produces weights in `(0, 1]`.
pub fn storm_update(
    state: &DirectionState,
    x: &ParamVec,
    grad_at_x: &ParamVec,
    grad_at_xprev_same_sample: &ParamVec,
    alpha: f64,
) -> Result<DirectionState> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("momentum weight must lie in [0, 1], got {alpha}")));
    }
    let beta = 1.0 - alpha;
    let correction = grad_at_x.sub(grad_at_xprev_same_sample)?;
    let d = state
        .d
        .scale(beta)
        .add(&grad_at_x.scale(alpha))?
        .add(&correction.scale(beta))?;
    Ok(DirectionState {
        d,
        kind: state.kind,
        k: state.k + 1,
        x_prev: Some(x.clone()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Constant over a horizon `K`: `α = (K+1)^{-1/2}`, `γ = γ̄ (K+1)^{-3/4}`.
    Polyak43,
    /// Per iteration `k`: `α_k = γ_k/γ̄ = (k+1)^{-2/3}`.
    Storm45,
}

/// `(α, γ)` for the given horizon (Polyak) or iteration index (STORM).
pub fn schedule(kind: ScheduleKind, k: usize, gamma_bar: f64) -> (f64, f64) {
    let t = (k + 1) as f64;
    match kind {
        ScheduleKind::Polyak43 => (t.powf(-0.5), gamma_bar * t.powf(-0.75)),
        ScheduleKind::Storm45 => {
            let a = t.powf(-2.0 / 3.0);
            (a, gamma_bar * a)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::norm2;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> ParamVec {
        ParamVec::vector(x.to_vec()).unwrap()
    }

    fn plain(d: &[f64]) -> DirectionState {
        DirectionState::new(DirectionKind::Polyak, v(d), &v(&vec![0.0; d.len()])).unwrap()
    }

    #[test]
    fn polyak_examples() {
        let s = plain(&[5.0, -1.0]);
        assert_eq!(polyak_update(&s, &v(&[2.0, 2.0]), 1.0).unwrap().d, v(&[2.0, 2.0]));
        let s = plain(&[0.0, 0.0]);
        let n = polyak_update(&s, &v(&[2.0, 2.0]), 0.5).unwrap();
        assert_eq!(n.d, v(&[1.0, 1.0]));
        assert_eq!(n.k, 1);
        assert!(matches!(polyak_update(&s, &v(&[1.0, 1.0]), 0.0), Err(Error::InvalidConfig(_))));
        assert!(matches!(polyak_update(&s, &v(&[1.0, 1.0]), 1.5), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn storm_examples() {
        let x0 = v(&[0.0]);
        let s = DirectionState::new(DirectionKind::Storm, v(&[3.0]), &x0).unwrap();
        let n = storm_update(&s, &v(&[1.0]), &v(&[7.0]), &v(&[4.0]), 1.0).unwrap();
        assert_eq!(n.d, v(&[7.0]));
        assert_eq!(n.x_prev, Some(v(&[1.0])));
        let n = storm_update(&s, &x0, &v(&[4.0]), &v(&[4.0]), 0.0).unwrap();
        assert_eq!(n.d, v(&[3.0]));
    }

    #[test]
    fn schedule_values() {
        assert_eq!(schedule(ScheduleKind::Polyak43, 15, 1.0), (0.25, 0.125));
        let (a, g) = schedule(ScheduleKind::Storm45, 7, 1.0);
        assert!((a - 0.25).abs() < 1e-15 && (g - 0.25).abs() < 1e-15);
        assert_eq!(schedule(ScheduleKind::Polyak43, 0, 2.5), (1.0, 2.5));
    }

    #[test]
    fn polyak_contracts_toward_constant_gradient() {
        let g = v(&[1.0, -2.0, 0.5]);
        let mut s = plain(&[4.0, 4.0, 4.0]);
        let e0 = norm2(&s.d.sub(&g).unwrap());
        let alpha = 0.3;
        for k in 1..=20 {
            s = polyak_update(&s, &g, alpha).unwrap();
            let e = norm2(&s.d.sub(&g).unwrap());
            let expect = (1.0 - alpha).powi(k) * e0;
            assert!((e - expect).abs() <= 1e-12 * e0, "k={k}");
        }
    }

    proptest! {
        #[test]
        fn polyak_three_steps_unroll(
            d0 in prop::collection::vec(-5.0..5.0f64, 3),
            g in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 3), 3),
            alpha in 0.01..1.0f64,
        ) {
            let mut s = plain(&d0);
            for gi in &g {
                s = polyak_update(&s, &v(gi), alpha).unwrap();
            }
            let b = 1.0 - alpha;
            for i in 0..3 {
                let expect = b.powi(3) * d0[i]
                    + alpha * (b * b * g[0][i] + b * g[1][i] + g[2][i]);
                prop_assert!((s.d.to_flat()[i] - expect).abs() <= 1e-12);
            }
        }

        #[test]
        fn storm_matches_expanded_formula(
            d0 in prop::collection::vec(-5.0..5.0f64, 4),
            gx in prop::collection::vec(-5.0..5.0f64, 4),
            gp in prop::collection::vec(-5.0..5.0f64, 4),
            alpha in 0.0..=1.0f64,
        ) {
            let s = DirectionState::new(DirectionKind::Storm, v(&d0), &v(&[0.0; 4])).unwrap();
            let n = storm_update(&s, &v(&[1.0; 4]), &v(&gx), &v(&gp), alpha).unwrap();
            for i in 0..4 {
                // d + gx - gp - α(d - gp)
                let expect = d0[i] + gx[i] - gp[i] - alpha * (d0[i] - gp[i]);
                let got = n.d.to_flat()[i];
                prop_assert!((got - expect).abs() <= 1e-14 * (1.0 + expect.abs()) * 8.0, "{got} vs {expect}");
            }
        }
    }
}
