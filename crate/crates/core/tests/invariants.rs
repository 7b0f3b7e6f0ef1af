use proptest::prelude::*;
use spectral_prox::optimizer::step;
use spectral_prox::polar_express::{apply_poly_scalar, PolySchedule};
use spectral_prox::problems::{NoiseModel, SampleToken};
use spectral_prox::prox::{self, Constraint, ConstraintSpec};
use spectral_prox::reference::{self, ReferenceFn, ScalarRef, Structure};
use spectral_prox::tensor::{dot, Matrix, ParamVec, Shape};

fn kernel() -> impl Strategy<Value = ScalarRef> {
    prop_oneof![
        (0.05..2.0f64).prop_map(|e| ScalarRef::barrier(e).unwrap()),
        (0.05..2.0f64, 1.0..6.0f64).prop_map(|(e, k)| ScalarRef::hyper_kappa(e, k).unwrap()),
    ]
}

fn vector_set() -> impl Strategy<Value = Constraint> {
    prop_oneof![
        Just(Constraint::Zero),
        (0.3..2.0f64).prop_map(|radius| Constraint::SignSet { radius }),
        (0.3..2.0f64).prop_map(|radius| Constraint::L2Ball { radius }),
        (0.3..2.0f64).prop_map(|radius| Constraint::LinfBall { radius }),
        (0.3..2.0f64).prop_map(|radius| Constraint::LinfSphere { radius }),
        (1usize..=4).prop_map(|sparsity| Constraint::HardThreshold { sparsity }),
    ]
}

fn structure() -> impl Strategy<Value = Structure> {
    prop_oneof![Just(Structure::Aniso), Just(Structure::Iso)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn preconditioned_directions_stay_in_the_domain(
        h in kernel(),
        s in prop_oneof![Just(Structure::Aniso), Just(Structure::Iso), Just(Structure::SpectralAniso), Just(Structure::SpectralIso)],
        vals in proptest::collection::vec(-1e4f64..1e4, 12),
    ) {
        let r = ReferenceFn::single(s, h).unwrap();
        let d = if s.is_spectral() {
            ParamVec::matrix(Matrix::from_row_major(4, 3, vals)).unwrap()
        } else {
            ParamVec::vector(vals).unwrap()
        };
        let p = reference::precondition(&r, &d).unwrap();
        let norm = r.block(0).structural_norm(p.block(0)).unwrap();
        // saturated norms are exactly 1; rescaling and re-measuring a block adds rounding
        let slack = if s == Structure::Aniso { 0.0 } else { 1e-12 };
        prop_assert!(norm <= 1.0 + slack, "norm {norm:e} for {s:?}");
        // descent direction: ⟨∇φ*(d), d⟩ ≥ 0
        prop_assert!(dot(&p, &d).unwrap() >= 0.0);
    }

    #[test]
    fn backward_step_is_feasible_reachable_and_no_worse_than_its_seed(
        h in kernel(),
        s in structure(),
        c in vector_set(),
        base in proptest::collection::vec(-2.0f64..2.0, 4),
        dir in proptest::collection::vec(-1.0f64..1.0, 4),
        gamma in 0.1f64..2.0,
    ) {
        let spec = ConstraintSpec::single(c);
        let r = ReferenceFn::single(s, h).unwrap();
        let seed = spec.project(&ParamVec::vector(base).unwrap()).unwrap();
        // y = seed - γ w with w strictly inside the domain
        let w = ParamVec::vector(dir).unwrap();
        let wn = r.block(0).structural_norm(w.block(0)).unwrap().max(1e-12);
        let w = w.scale(0.99 / wn.max(1.0));
        let y = seed.sub(&w.scale(gamma)).unwrap();
        let x = prox::prox(&spec, &r, &y, gamma).unwrap();
        prop_assert!(spec.contains(&x, 1e-9).unwrap());
        let reach = r.block(0).structural_norm(x.sub(&y).unwrap().scale(1.0 / gamma).block(0)).unwrap();
        prop_assert!(reach < 1.0 + 1e-9);
        let ours = prox::prox_objective(&spec, &r, &x, &y, gamma).unwrap();
        let theirs = prox::prox_objective(&spec, &r, &seed, &y, gamma).unwrap();
        prop_assert!(ours <= theirs + 1e-9 * (1.0 + theirs.abs()), "{ours} > {theirs}");
    }

    #[test]
    fn recovered_subgradient_is_a_normal_vector_on_convex_sets(
        h in kernel(),
        radius in 0.3f64..2.0,
        ball in prop::bool::ANY,
        base in proptest::collection::vec(-2.0f64..2.0, 4),
        dir in proptest::collection::vec(-0.99f64..0.99, 4),
        probe in proptest::collection::vec(-3.0f64..3.0, 4),
        gamma in 0.1f64..2.0,
    ) {
        let c = if ball { Constraint::L2Ball { radius } } else { Constraint::LinfBall { radius } };
        let spec = ConstraintSpec::single(c);
        let r = ReferenceFn::single(Structure::Aniso, h).unwrap();
        let seed = spec.project(&ParamVec::vector(base).unwrap()).unwrap();
        let y = seed.sub(&ParamVec::vector(dir).unwrap().scale(gamma)).unwrap();
        let x = prox::prox(&spec, &r, &y, gamma).unwrap();
        let v = prox::recover_subgradient(&x, &y, gamma, &r).unwrap();
        let z = spec.project(&ParamVec::vector(probe).unwrap()).unwrap();
        let inner = dot(&v, &z.sub(&x).unwrap()).unwrap();
        let scale = 1.0 + reference::grad_phi(&r, &reference::clamp_interior(&r, &x.sub(&y).unwrap().scale(1.0 / gamma)).unwrap()).unwrap().to_flat().iter().map(|a| a.abs()).sum::<f64>();
        prop_assert!(inner <= 1e-7 * scale, "⟨v, z - x⟩ = {inner}");
    }

    #[test]
    fn step_length_is_bounded_by_twice_gamma_d(
        h in kernel(),
        s in structure(),
        c in vector_set(),
        x0 in proptest::collection::vec(-2.0f64..2.0, 4),
        d in proptest::collection::vec(-50.0f64..50.0, 4),
        gamma in 0.05f64..1.0,
    ) {
        let spec = ConstraintSpec::single(c);
        let r = ReferenceFn::single(s, h).unwrap();
        let x = spec.project(&ParamVec::vector(x0).unwrap()).unwrap();
        match step(&x, &ParamVec::vector(d).unwrap(), gamma, &r, &spec) {
            Ok(out) => {
                let len = out.x_next.sub(&x).unwrap().to_flat().iter().map(|v| v * v).sum::<f64>().sqrt();
                let bound = 2.0 * gamma * r.domain_radius(&[Shape::Vector(4)]);
                prop_assert!(len <= bound + 1e-12, "{len} > {bound}");
            }
            Err(e) => prop_assert!(matches!(e, spectral_prox::Error::EmptyProxDomain(_)), "{e}"),
        }
    }

    #[test]
    fn spectral_step_matches_vector_step_on_diagonal_inputs(
        h in kernel(),
        sig in proptest::collection::vec(0.0f64..3.0, 3),
        radius in 0.3f64..2.0,
        gamma in 0.2f64..2.0,
    ) {
        // y = Diag(σ): the matrix prox is Diag(vector prox on σ) up to ordering
        let mut sorted = sig.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let y = Matrix::from_diag(3, 3, &sorted);
        let br = spectral_prox::reference::BlockRef::new(Structure::SpectralAniso, h);
        let vr = spectral_prox::reference::BlockRef::new(Structure::Aniso, h);
        let c = Constraint::SpectralBall { radius };
        let vc = c.spectral_counterpart().unwrap();
        match (prox::prox_matrix(&c, &br, &y, gamma), prox::prox_vector(&vc, &vr, &sorted, gamma)) {
            (Ok(xm), Ok(xv)) => {
                let diag = Matrix::from_diag(3, 3, &xv);
                prop_assert!(xm.max_abs_diff(&diag) < 1e-10);
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "disagree: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn shipped_polynomials_are_odd(t in -1.0f64..1.0) {
        for s in [PolySchedule::polar_express(), PolySchedule::newton_schulz()] {
            prop_assert_eq!(apply_poly_scalar(&s, -t), -apply_poly_scalar(&s, t));
        }
    }

    #[test]
    fn noise_draws_replay(seed in 0u64..1000, index in 0u64..1000, sigma in 0.1f64..3.0) {
        let shapes = [Shape::Vector(3), Shape::Matrix(2, 2)];
        for noise in [NoiseModel::Gaussian { sigma }, NoiseModel::StudentT { df: 1.8, sigma, p: 1.5 }] {
            let token = SampleToken { seed, index };
            let a = noise.draw(&shapes, token).unwrap();
            prop_assert_eq!(&a, &noise.draw(&shapes, token).unwrap());
            prop_assert!(a.is_finite());
        }
    }
}

#[test]
fn iso_step_on_the_sign_set_is_the_euclidean_projection() {
    let r = ReferenceFn::single(Structure::Iso, ScalarRef::barrier(1.0).unwrap()).unwrap();
    let spec = ConstraintSpec::single(Constraint::SignSet { radius: 1.0 });
    let y = ParamVec::vector(vec![0.2, -0.1, 0.0]).unwrap();
    let x = prox::prox(&spec, &r, &y, 5.0).unwrap();
    assert_eq!(x.to_flat(), vec![1.0, -1.0, 1.0]);
}

