use proptest::prelude::*;
use tissue_flow::constitutive::ModelParams;
use tissue_flow::dynamics::{banded_initial_data, init_state, run, step, ModelKind, StepControl, VelocityLaw};
use tissue_flow::grid::{GridSpec, ScalarField};
use tissue_flow::linalg::SolverConfig;

fn spec(n: usize) -> GridSpec {
    GridSpec::new(-1.0, 1.0, -1.0, 1.0, n, n).unwrap()
}

fn control(dt: f64, t_end: f64, model: ModelKind) -> StepControl {
    StepControl { dt, t_end, model, ..StepControl::default() }
}

/// Reference solution of `n' = g (p* - eps n / (1 - n)) n` by classical
/// Runge-Kutta with a much finer step.
fn logistic_reference(n0: f64, t: f64, g: f64, p_star: f64, eps: f64) -> f64 {
    let rate = |n: f64| g * (p_star - eps * n / (1.0 - n)) * n;
    let steps = 20_000;
    let h = t / steps as f64;
    let mut n = n0;
    for _ in 0..steps {
        let k1 = rate(n);
        let k2 = rate(n + 0.5 * h * k1);
        let k3 = rate(n + 0.5 * h * k2);
        let k4 = rate(n + h * k3);
        n += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    n
}

#[test]
fn uniform_density_follows_the_growth_ode() {
    let s = spec(8);
    let params = ModelParams::default();
    let n0 = 0.3;
    let t_end = 0.05;
    let reference = logistic_reference(n0, t_end, params.g1, params.p1_star, params.eps);
    let mut errors = Vec::new();
    for dt in [2e-3, 1e-3, 5e-4] {
        let state = init_state(ScalarField::constant(s, n0), ScalarField::zeros(s), &params, VelocityLaw::Dirichlet, &SolverConfig::default()).unwrap();
        let end = run(state, &control(dt, t_end, ModelKind::Esvm), &params, 1000, |_, _| {}).unwrap().final_state;
        assert_eq!(end.v1.max_abs(), 0.0);
        let spread = end.n1.max() - end.n1.min();
        assert!(spread < 1e-13, "uniform state lost uniformity: {spread}");
        errors.push((end.n1.values[0] - reference).abs());
    }
    // explicit Euler in time: the error halves with the step
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.8..2.2).contains(&ratio), "errors {errors:?}");
    }
    assert!(errors[2] < 1e-3);
}

#[test]
fn mass_changes_only_by_growth() {
    let s = spec(32);
    let (n1, n2) = banded_initial_data(s, 0.9);
    let params = ModelParams::default();
    let ctrl = control(1e-3, 1.0, ModelKind::Vm);
    let mut state = init_state(n1, n2, &params, ctrl.velocity_law, &ctrl.solver).unwrap();
    for _ in 0..10 {
        let next = step(&state, &ctrl, &params).unwrap();
        assert_eq!(next.negative_clips, 0);
        assert_eq!(next.clamp_count, 0);
        let dt = next.last_dt;
        for (n_old, p_old, n_new, g, p_star) in [
            (&state.n1, &state.p1, &next.n1, params.g1, params.p1_star),
            (&state.n2, &state.p2, &next.n2, params.g2, params.p2_star),
        ] {
            let source = n_old.zip_map(p_old, |n, p| n * g * (p_star - p)).integral();
            let expected = n_old.integral() + dt * source;
            assert!((n_new.integral() - expected).abs() < 1e-12 * expected, "{} vs {expected}", n_new.integral());
        }
        state = next;
    }
}

#[test]
fn mirror_symmetric_data_stay_symmetric() {
    let s = spec(24);
    let (n1, n2) = banded_initial_data(s, 0.9);
    let params = ModelParams::default();
    for law in [VelocityLaw::Dirichlet, VelocityLaw::GradientForm] {
        let ctrl = StepControl { velocity_law: law, ..control(1e-3, 0.01, ModelKind::Esvm) };
        let state = init_state(n1.clone(), n2.clone(), &params, law, &ctrl.solver).unwrap();
        let end = run(state, &ctrl, &params, 100, |_, _| {}).unwrap().final_state;
        for f in [&end.n1, &end.n2, &end.p1, &end.p2] {
            let scale = f.max_abs().max(1e-300);
            for j in 0..s.ny {
                for i in 0..s.nx {
                    let d = (f.at(i, j) - f.at(s.nx - 1 - i, j)).abs();
                    assert!(d <= 1e-9 * scale, "{law:?} asymmetry {d} at ({i}, {j})");
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn densities_stay_admissible(
        a in prop::collection::vec(0.0f64..0.5, 100),
        b in prop::collection::vec(0.0f64..0.45, 100),
        esvm in any::<bool>(),
    ) {
        let s = spec(10);
        let n1 = ScalarField::from_values(s, a).unwrap();
        let n2 = ScalarField::from_values(s, b).unwrap();
        let params = ModelParams::default();
        let model = if esvm { ModelKind::Esvm } else { ModelKind::Vm };
        let ctrl = control(1e-3, 0.005, model);
        let state = init_state(n1, n2, &params, ctrl.velocity_law, &ctrl.solver).unwrap();
        let end = run(state, &ctrl, &params, 100, |_, _| {}).unwrap().final_state;
        prop_assert!(end.n1.min() >= 0.0 && end.n2.min() >= 0.0);
        let total = end.n1.zip_map(&end.n2, |x, y| x + y);
        prop_assert!(total.max() < 1.0);
    }
}
