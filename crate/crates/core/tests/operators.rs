use std::f64::consts::PI;

use proptest::prelude::*;
use tissue_flow::brinkman::{solve_brinkman, solve_brinkman_forced, HelmholtzOperator};
use tissue_flow::grid::{curl2d, divergence, gradient, GridSpec, ScalarField, VectorField};
use tissue_flow::linalg::SolverConfig;

fn spec(n: usize) -> GridSpec {
    GridSpec::new(-1.0, 1.0, -1.0, 1.0, n, n).unwrap()
}

fn field(n: usize, values: &[f64]) -> ScalarField {
    ScalarField::from_values(spec(n), values[..n * n].to_vec()).unwrap()
}

fn face_field(n: usize, values: &[f64]) -> VectorField {
    let s = spec(n);
    let mut v = VectorField::zeros(s);
    let nu = v.u.len();
    v.u.copy_from_slice(&values[..nu]);
    let nv = v.v.len();
    v.v.copy_from_slice(&values[nu..nu + nv]);
    v.zero_boundary();
    v
}

const N: usize = 10;
const N_FACES: usize = 2 * N * (N + 1);

/// Error of the velocity solve against `v = sin(pi x) sin(pi y) (1, 1)`,
/// whose forcing is `(2 pi^2 beta + 1) v`.
fn manufactured_error(n: usize, beta: f64) -> f64 {
    let s = spec(n);
    let exact = |x: f64, y: f64| {
        let w = (PI * x).sin() * (PI * y).sin();
        (w, w)
    };
    let k = 2.0 * PI * PI * beta + 1.0;
    let f = VectorField::from_fn(s, |x, y| {
        let (a, b) = exact(x, y);
        (k * a, k * b)
    });
    let v = solve_brinkman_forced(&f, beta, &SolverConfig::direct()).unwrap();
    v.axpy(-1.0, &VectorField::from_fn_dirichlet(s, exact)).norm_l2()
}

#[test]
fn manufactured_velocity_is_second_order() {
    let e: Vec<f64> = [16, 32, 64].iter().map(|&n| manufactured_error(n, 0.5)).collect();
    for w in e.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.5..4.5).contains(&ratio), "errors {e:?}");
    }
}

#[test]
fn smooth_gradient_curl_is_zero_inside() {
    let s = spec(24);
    let f = ScalarField::from_fn(s, |x, y| (2.0 * x).sin() * (y * y + 1.0).ln() + x * y * y);
    let c = curl2d(&gradient(&f));
    for j in 1..s.ny - 1 {
        for i in 1..s.nx - 1 {
            assert!(c.at(i, j).abs() < 1e-10, "({i}, {j}) {}", c.at(i, j));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_and_divergence_are_adjoint(
        f in prop::collection::vec(-1.0f64..1.0, N * N),
        v in prop::collection::vec(-1.0f64..1.0, N_FACES),
    ) {
        let f = field(N, &f);
        let v = face_field(N, &v);
        let lhs = gradient(&f).dot(&v);
        let rhs = -f.dot(&divergence(&v));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn divergence_is_bounded_by_gradient(v in prop::collection::vec(-1.0f64..1.0, N_FACES)) {
        let v = face_field(N, &v);
        let d = divergence(&v);
        let g = HelmholtzOperator::new(v.spec, 1.0).unwrap().grad_norm_sq(&v);
        prop_assert!(d.dot(&d) <= g * (1.0 + 1e-12));
    }

    #[test]
    fn velocity_is_linear_in_pressure(
        p in prop::collection::vec(0.0f64..2.0, N * N),
        q in prop::collection::vec(0.0f64..2.0, N * N),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        beta in 0.01f64..2.0,
    ) {
        let cfg = SolverConfig::direct();
        let (p, q) = (field(N, &p), field(N, &q));
        let combo = p.zip_map(&q, |x, y| a * x + b * y);
        let vp = solve_brinkman(&p, beta, &cfg).unwrap();
        let vq = solve_brinkman(&q, beta, &cfg).unwrap();
        let vc = solve_brinkman(&combo, beta, &cfg).unwrap();
        let expect = vp.scale(a).axpy(b, &vq);
        prop_assert!(vc.axpy(-1.0, &expect).max_abs() <= 1e-10 * (1.0 + expect.max_abs()));
    }

    #[test]
    fn velocity_energy_identity(p in prop::collection::vec(0.0f64..2.0, N * N), beta in 0.01f64..2.0) {
        let p = field(N, &p);
        let v = solve_brinkman(&p, beta, &SolverConfig::direct()).unwrap();
        let op = HelmholtzOperator::new(p.spec, beta).unwrap();
        let energy = beta * op.grad_norm_sq(&v) + v.dot(&v);
        let work = p.dot(&divergence(&v));
        prop_assert!((energy - work).abs() <= 1e-10 * (1.0 + work.abs()));
    }
}
