//! Semi-implicit finite-volume stepping of the two-tissue models.
//!
//! One step of [`step_esvm`]:
//!
//! 1. pressures and velocities are those stored in the state, which are
//!    always consistent with its densities (pressure lagged to time `t`);
//! 2. donor-cell upwind advection of `n_i v_i` and an explicit reaction
//!    `max(n_i, 0) G_i(p_i)`;
//! 3. the fourth-order flux `α ∇·(n_i ∇Δn_i)` is taken implicitly with `n_i`
//!    frozen at time `t`: `(I + dt α D_{n_i} Δ_h) n_i^{new} = n_i^*`, where
//!    `D_n s = ∇·(n ∇s)`; the relaxation variable `w_i = Δ_h n_i^{new}` is
//!    stored with the state;
//! 4. densities are clamped to `n_1 + n_2 <= 1 - δ`, then pressures and
//!    velocities are recomputed for the new densities.
//!
//! [`step_vm`] is the same code path with `α = 0` and the repulsion switched
//! off, so the two models agree bitwise whenever the parameters do.

use crate::brinkman::{HelmholtzOperator, ScreenedPoisson, SolverConfig};
use crate::constitutive::{total_pressures, ModelParams, Tissue, DELTA_CLAMP};
use crate::diagnostics::{record_for, DiagnosticRecord};
use crate::error::{Error, Result};
use crate::grid::{gradient, laplacian, BoundaryKind, GridSpec, ScalarField, VectorField};
use crate::linalg::{bicgstab, CsrMatrix, TripletBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Enforced-segregation viscous model.
    Esvm,
    /// Viscous model without repulsion or fourth-order flux.
    Vm,
}

/// How velocities are obtained from pressures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityLaw {
    /// `-β Δv + v = -∇p` with no-slip walls.
    Dirichlet,
    /// `v = -∇K`, `-β ΔK + K = p` with zero-flux walls (curl free).
    GradientForm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    /// Largest time step allowed; the actual step may be smaller.
    pub dt: f64,
    pub cfl_number: f64,
    pub t_end: f64,
    pub model: ModelKind,
    pub velocity_law: VelocityLaw,
    pub solver: SolverConfig,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            cfl_number: 0.4,
            t_end: 0.1,
            model: ModelKind::Esvm,
            velocity_law: VelocityLaw::Dirichlet,
            solver: SolverConfig::default(),
        }
    }
}

const VELOCITY_FLOOR: f64 = 1e-12;
const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub n1: ScalarField,
    pub n2: ScalarField,
    pub v1: VectorField,
    pub v2: VectorField,
    pub p1: ScalarField,
    pub p2: ScalarField,
    /// Relaxation variables holding `Δ_h n_i`.
    pub w1: ScalarField,
    pub w2: ScalarField,
    /// Cells clamped at the congestion cap, accumulated over the run.
    pub clamp_count: usize,
    /// Cells where the repulsion pressure overflowed.
    pub overflow_count: usize,
    /// Negative density values removed after the fourth-order stage.
    pub negative_clips: usize,
    pub steps: usize,
    pub last_dt: f64,
}

impl SimState {
    pub fn spec(&self) -> GridSpec {
        self.n1.spec
    }

    pub fn density(&self, t: Tissue) -> &ScalarField {
        match t {
            Tissue::One => &self.n1,
            Tissue::Two => &self.n2,
        }
    }

    pub fn velocity(&self, t: Tissue) -> &VectorField {
        match t {
            Tissue::One => &self.v1,
            Tissue::Two => &self.v2,
        }
    }
}

/// Checks nonnegativity and `n1 + n2 < 1` cell by cell.
pub fn validate_initial_data(n1: &ScalarField, n2: &ScalarField) -> Result<()> {
    if n1.spec != n2.spec {
        return Err(Error::Shape("initial densities on different grids".into()));
    }
    let s = n1.spec;
    for j in 0..s.ny {
        for i in 0..s.nx {
            let (a, b) = (n1.at(i, j), n2.at(i, j));
            let reason = if !(a.is_finite() && b.is_finite()) {
                Some("non-finite density".to_string())
            } else if a < 0.0 || b < 0.0 {
                Some(format!("negative density ({a}, {b})"))
            } else if a + b >= 1.0 {
                Some(format!("total density {} >= 1", a + b))
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(Error::InitialData { i, j, reason });
            }
        }
    }
    Ok(())
}

/// Builds the state at `t = 0`, solving the velocities once from the
/// initial pressures.
pub fn init_state(
    n1_0: ScalarField,
    n2_0: ScalarField,
    params: &ModelParams,
    law: VelocityLaw,
    solver: &SolverConfig,
) -> Result<SimState> {
    validate_initial_data(&n1_0, &n2_0)?;
    params.validate()?;
    let spec = n1_0.spec;
    let mut state = SimState {
        t: 0.0,
        w1: laplacian(&n1_0, BoundaryKind::ZeroFlux),
        w2: laplacian(&n2_0, BoundaryKind::ZeroFlux),
        n1: n1_0,
        n2: n2_0,
        v1: VectorField::zeros(spec),
        v2: VectorField::zeros(spec),
        p1: ScalarField::zeros(spec),
        p2: ScalarField::zeros(spec),
        clamp_count: 0,
        overflow_count: 0,
        negative_clips: 0,
        steps: 0,
        last_dt: 0.0,
    };
    refresh_pressures_and_velocities(&mut state, params, law, solver)?;
    Ok(state)
}

fn refresh_pressures_and_velocities(
    state: &mut SimState,
    params: &ModelParams,
    law: VelocityLaw,
    solver: &SolverConfig,
) -> Result<()> {
    let pr = total_pressures(&state.n1, &state.n2, params);
    state.overflow_count += pr.overflow_cells;
    state.v1 = solve_velocity(&pr.p1, params.beta1, law, solver, Some(&state.v1))?;
    state.v2 = solve_velocity(&pr.p2, params.beta2, law, solver, Some(&state.v2))?;
    state.p1 = pr.p1;
    state.p2 = pr.p2;
    Ok(())
}

fn solve_velocity(
    p: &ScalarField,
    beta: f64,
    law: VelocityLaw,
    solver: &SolverConfig,
    guess: Option<&VectorField>,
) -> Result<VectorField> {
    match law {
        VelocityLaw::Dirichlet => {
            let op = HelmholtzOperator::new(p.spec, beta)?;
            let rhs = gradient(p).scale(-1.0);
            Ok(op.solve(&rhs, solver, guess)?.0)
        }
        VelocityLaw::GradientForm => {
            let k = ScreenedPoisson::new(p.spec, beta)?.solve(p, solver, None)?;
            Ok(gradient(&k).scale(-1.0))
        }
    }
}

/// Donor-cell divergence `∇·(n v)` with zero flux through the walls.
pub fn upwind_divergence(n: &ScalarField, v: &VectorField) -> ScalarField {
    let s = n.spec;
    let mut out = ScalarField::zeros(s);
    let flux_u = |i: usize, j: usize| -> f64 {
        if i == 0 || i == s.nx {
            return 0.0;
        }
        let vel = v.u[s.u_idx(i, j)];
        vel * if vel >= 0.0 { n.at(i - 1, j) } else { n.at(i, j) }
    };
    let flux_v = |i: usize, j: usize| -> f64 {
        if j == 0 || j == s.ny {
            return 0.0;
        }
        let vel = v.v[s.v_idx(i, j)];
        vel * if vel >= 0.0 { n.at(i, j - 1) } else { n.at(i, j) }
    };
    for j in 0..s.ny {
        for i in 0..s.nx {
            out.values[s.idx(i, j)] =
                (flux_u(i + 1, j) - flux_u(i, j)) / s.hx + (flux_v(i, j + 1) - flux_v(i, j)) / s.hy;
        }
    }
    out
}

/// Largest rate at which a cell can be emptied: upwind outflow plus the
/// negative part of the reaction rate.
fn max_depletion_rate(v: &VectorField, growth: &ScalarField) -> f64 {
    let s = v.spec;
    let mut worst: f64 = 0.0;
    for j in 0..s.ny {
        for i in 0..s.nx {
            let out = v.u[s.u_idx(i + 1, j)].max(0.0) / s.hx
                + (-v.u[s.u_idx(i, j)]).max(0.0) / s.hx
                + v.v[s.v_idx(i, j + 1)].max(0.0) / s.hy
                + (-v.v[s.v_idx(i, j)]).max(0.0) / s.hy
                + (-growth.at(i, j)).max(0.0);
            worst = worst.max(out);
        }
    }
    worst
}

/// Largest relaxation rate of the pressure feedback. A density perturbation
/// `δn_i` changes `p_i` by `∂p_i/∂n_i δn_i`, which the Brinkman flow removes
/// at rate at most `n_i ∂p_i/∂n_i / β_i` and the reaction at rate
/// `n_i g_i ∂p_i/∂n_i`.
fn pressure_stiffness(state: &SimState, params: &ModelParams) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..state.n1.values.len() {
        let a = state.n1.values[k].max(0.0);
        let b = state.n2.values[k].max(0.0);
        let n = (a + b).min(1.0 - DELTA_CLAMP);
        let dp = params.eps / ((1.0 - n) * (1.0 - n));
        let (dq1, dq2) = if params.repulsion {
            let dq = repulsion_derivative(a * b, params.m);
            (b * b * dq, a * a * dq)
        } else {
            (0.0, 0.0)
        };
        let rate = a * (dp + dq1) * (1.0 / params.beta1 + params.g1) + b * (dp + dq2) * (1.0 / params.beta2 + params.g2);
        worst = worst.max(rate);
    }
    worst
}

fn repulsion_derivative(r: f64, m: f64) -> f64 {
    let d = m * ((m - 2.0) * r.ln_1p()).exp();
    if d.is_finite() {
        d
    } else {
        f64::MAX
    }
}

/// Candidate time step before positivity halvings.
pub fn stable_dt(state: &SimState, ctrl: &StepControl, params: &ModelParams) -> f64 {
    let s = state.spec();
    let vmax = state.v1.max_abs().max(state.v2.max_abs()).max(VELOCITY_FLOOR);
    let mut dt = ctrl.dt.min(ctrl.cfl_number * s.hx.min(s.hy) / vmax);
    let stiff = pressure_stiffness(state, params);
    if stiff > 0.0 {
        dt = dt.min(1.0 / stiff);
    }
    let remaining = ctrl.t_end - state.t;
    if remaining > 0.0 && remaining < dt {
        dt = remaining;
    }
    dt
}

/// `D_n s = ∇·(n_face ∇s)` with face values of `n` averaged from the two
/// adjacent cells and zero flux through the walls.
fn weighted_laplacian_matrix(n: &ScalarField) -> CsrMatrix {
    let s = n.spec;
    let mut t = TripletBuilder::new(s.n_cells(), s.n_cells());
    for j in 0..s.ny {
        for i in 0..s.nx {
            let r = s.idx(i, j);
            let nc = n.at(i, j).max(0.0);
            let mut diag = 0.0;
            for (ok, ii, jj, h2) in [
                (i > 0, i.wrapping_sub(1), j, s.hx * s.hx),
                (i + 1 < s.nx, i + 1, j, s.hx * s.hx),
                (j > 0, i, j.wrapping_sub(1), s.hy * s.hy),
                (j + 1 < s.ny, i, j + 1, s.hy * s.hy),
            ] {
                if ok {
                    let a = 0.5 * (nc + n.at(ii, jj).max(0.0)) / h2;
                    diag -= a;
                    t.push(r, s.idx(ii, jj), a);
                }
            }
            t.push(r, r, diag);
        }
    }
    t.build()
}

fn zero_flux_laplacian_matrix(s: &GridSpec) -> CsrMatrix {
    weighted_laplacian_matrix(&ScalarField::constant(*s, 1.0))
}

fn sparse_product(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
    let mut t = TripletBuilder::new(a.n_rows(), b.n_cols());
    for r in 0..a.n_rows() {
        for (k, av) in a.row(r) {
            for (c, bv) in b.row(k) {
                t.push(r, c, av * bv);
            }
        }
    }
    t.build()
}

/// Implicit fourth-order stage: solves `(I + dt α D_frozen Δ_h) n = rhs`.
fn fourth_order_stage(
    rhs: &ScalarField,
    frozen: &ScalarField,
    alpha: f64,
    dt: f64,
    solver: &SolverConfig,
) -> Result<ScalarField> {
    let s = rhs.spec;
    let prod = sparse_product(&weighted_laplacian_matrix(frozen), &zero_flux_laplacian_matrix(&s));
    let mut t = TripletBuilder::new(s.n_cells(), s.n_cells());
    for r in 0..s.n_cells() {
        t.push(r, r, 1.0);
        for (c, v) in prod.row(r) {
            t.push(r, c, dt * alpha * v);
        }
    }
    let a = t.build();
    let mut x = rhs.values.clone();
    let max_iter = solver.max_iter_for(s.nx, s.ny);
    bicgstab(&a, &rhs.values, &mut x, solver.rel_tol, max_iter)?;
    ScalarField::from_values(s, x)
}

/// One step of the enforced-segregation model.
pub fn step_esvm(state: &SimState, ctrl: &StepControl, params: &ModelParams) -> Result<SimState> {
    advance(state, ctrl, params)
}

/// One step of the viscous model: no repulsion pressure and `α = 0`.
pub fn step_vm(state: &SimState, ctrl: &StepControl, params: &ModelParams) -> Result<SimState> {
    advance(state, ctrl, &vm_params(params))
}

pub fn vm_params(params: &ModelParams) -> ModelParams {
    ModelParams {
        alpha: 0.0,
        repulsion: false,
        ..*params
    }
}

/// Steps with the model selected in `ctrl`.
pub fn step(state: &SimState, ctrl: &StepControl, params: &ModelParams) -> Result<SimState> {
    match ctrl.model {
        ModelKind::Esvm => step_esvm(state, ctrl, params),
        ModelKind::Vm => step_vm(state, ctrl, params),
    }
}

fn advance(state: &SimState, ctrl: &StepControl, params: &ModelParams) -> Result<SimState> {
    let s = state.spec();
    let g1 = state.p1.map(|p| params.growth_at(Tissue::One, p));
    let g2 = state.p2.map(|p| params.growth_at(Tissue::Two, p));

    let depletion = max_depletion_rate(&state.v1, &g1).max(max_depletion_rate(&state.v2, &g2));
    let mut dt = stable_dt(state, ctrl, params);
    let mut halvings = 0;
    while dt * depletion > 1.0 {
        if halvings == MAX_HALVINGS {
            return Err(Error::StepControl(format!(
                "positivity bound not met after {MAX_HALVINGS} halvings (dt = {dt:.3e}, rate = {depletion:.3e})"
            )));
        }
        dt *= 0.5;
        halvings += 1;
    }

    let explicit = |n: &ScalarField, v: &VectorField, g: &ScalarField| {
        let adv = upwind_divergence(n, v);
        let mut out = n.clone();
        for k in 0..out.values.len() {
            out.values[k] = n.values[k] - dt * adv.values[k] + dt * n.values[k].max(0.0) * g.values[k];
        }
        out
    };
    let mut n1 = explicit(&state.n1, &state.v1, &g1);
    let mut n2 = explicit(&state.n2, &state.v2, &g2);

    if params.alpha > 0.0 {
        n1 = fourth_order_stage(&n1, &state.n1, params.alpha, dt, &ctrl.solver)?;
        n2 = fourth_order_stage(&n2, &state.n2, params.alpha, dt, &ctrl.solver)?;
    }

    let mut negative_clips = 0;
    let mut clamp_count = 0;
    let cap = 1.0 - DELTA_CLAMP;
    for k in 0..s.n_cells() {
        for n in [&mut n1.values[k], &mut n2.values[k]] {
            if *n < 0.0 {
                *n = 0.0;
                negative_clips += 1;
            }
        }
        let total = n1.values[k] + n2.values[k];
        if total > cap {
            let f = cap / total;
            n1.values[k] *= f;
            n2.values[k] *= f;
            clamp_count += 1;
        }
    }

    let mut next = SimState {
        t: state.t + dt,
        w1: laplacian(&n1, BoundaryKind::ZeroFlux),
        w2: laplacian(&n2, BoundaryKind::ZeroFlux),
        n1,
        n2,
        v1: state.v1.clone(),
        v2: state.v2.clone(),
        p1: state.p1.clone(),
        p2: state.p2.clone(),
        clamp_count: state.clamp_count + clamp_count,
        overflow_count: state.overflow_count,
        negative_clips: state.negative_clips + negative_clips,
        steps: state.steps + 1,
        last_dt: dt,
    };
    refresh_pressures_and_velocities(&mut next, params, ctrl.velocity_law, &ctrl.solver)?;
    Ok(next)
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<DiagnosticRecord>,
    pub final_state: SimState,
}

/// Steps until `ctrl.t_end`, recording diagnostics every `every` steps and
/// after the last step. `observer` sees each recorded state.
pub fn run(
    state: SimState,
    ctrl: &StepControl,
    params: &ModelParams,
    every: usize,
    mut observer: impl FnMut(&SimState, &DiagnosticRecord),
) -> Result<Trajectory> {
    let every = every.max(1);
    let mut records = Vec::new();
    let mut state = state;
    // relative slack absorbs rounding in the accumulated time
    let t_stop = ctrl.t_end - 1e-12 * ctrl.t_end.abs().max(1.0);
    while state.t < t_stop {
        state = step(&state, ctrl, params)?;
        let last = state.t >= t_stop;
        if state.steps.is_multiple_of(every) || last {
            let rec = record_for(&state, params);
            observer(&state, &rec);
            records.push(rec);
        }
    }
    Ok(Trajectory { records, final_state: state })
}

/// Paper-style initial data: tissue 1 fills the central band of the lower
/// half, tissue 2 the two lateral strips, both at density `level`.
pub fn banded_initial_data(spec: GridSpec, level: f64) -> (ScalarField, ScalarField) {
    let n1 = ScalarField::from_fn(spec, |x, y| if x.abs() < 2.0 / 3.0 && y < 0.0 { level } else { 0.0 });
    let n2 = ScalarField::from_fn(spec, |x, y| if x.abs() > 2.0 / 3.0 && y < 0.0 { level } else { 0.0 });
    (n1, n2)
}
