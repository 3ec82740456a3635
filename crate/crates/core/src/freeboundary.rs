//! Sharp-interface evolution of the limit models L-ESVM and L-VM.
//!
//! Each tissue is the super-level set `{l_i > 1/2}` of a continuous level
//! field. A step solves the stationary system on the current partition,
//! moves every level field with its own tissue velocity, rethresholds, and
//! (for L-ESVM) transports the limit repulsion pressure `q` in the variable
//! `s = ln(1 + q)`.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::constitutive::{ModelParams, Tissue};
use crate::diagnostics::{CurlStats, DiagnosticRecord};
use crate::dynamics::{upwind_divergence, ModelKind, StepControl};
use crate::error::{Error, Result};
use crate::field_io::scalar_to_csv;
use crate::grid::{divergence, GridSpec, ScalarField, VectorField};
use crate::linalg::SolveStats;
use crate::stationary::{
    solve_single_species, solve_stationary_from, DomainPartition, InterfaceFace, InterfaceKind, Region, StationarySolution,
};

/// Smallest tissue, in cells, a run may continue with.
pub const MIN_DOMAIN_CELLS: usize = 4;

#[derive(Debug, Clone)]
pub struct LimitState {
    pub t: f64,
    pub part: DomainPartition,
    /// Repulsion pressure on the tissues; stored as 0 on the void.
    pub q: ScalarField,
    /// Velocities of the latest stationary solve.
    pub v1: VectorField,
    pub v2: VectorField,
    /// Tissue pressures `P_1`, `P_2` of the latest solve.
    pub p1: ScalarField,
    pub p2: ScalarField,
    pub steps: usize,
    pub last_dt: f64,
    pub last_stats: SolveStats,
    /// Largest complementarity closure residual of the latest solve.
    pub closure: f64,
}

impl LimitState {
    pub fn spec(&self) -> GridSpec {
        self.part.spec()
    }

    /// Cells claimed by both tissues; zero by construction.
    pub fn overlap_cells(&self) -> usize {
        self.part.chi1.values.iter().zip(&self.part.chi2.values).filter(|(a, b)| **a * **b != 0.0).count()
    }

    pub fn area(&self, t: Tissue) -> f64 {
        self.part.cell_count(t) as f64 * self.spec().cell_area()
    }
}

/// Builds a state at `t = 0` with zero velocities. `q` is masked to the
/// tissues and must be nonnegative.
pub fn init_limit(part: DomainPartition, q: ScalarField) -> Result<LimitState> {
    let s = part.spec();
    if q.spec != s {
        return Err(Error::Shape("q and partition on different grids".into()));
    }
    if let Some(k) = q.values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InitialData { i: k % s.nx, j: k / s.nx, reason: format!("q = {} is not a nonnegative number", q.values[k]) });
    }
    let q = mask(&q, &part);
    Ok(LimitState {
        t: 0.0,
        q,
        v1: VectorField::zeros(s),
        v2: VectorField::zeros(s),
        p1: ScalarField::zeros(s),
        p2: ScalarField::zeros(s),
        steps: 0,
        last_dt: 0.0,
        last_stats: SolveStats { iterations: 0, rel_residual: 0.0 },
        closure: 0.0,
        part,
    })
}

fn mask(f: &ScalarField, part: &DomainPartition) -> ScalarField {
    let mut out = f.clone();
    for (k, v) in out.values.iter_mut().enumerate() {
        if part.chi1.values[k] == 0.0 && part.chi2.values[k] == 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Residual `∇·v_i - G_i(p)` on `Ω_i`, zero on the void.
pub fn complementarity_closure(part: &DomainPartition, params: &ModelParams, sol: &StationarySolution) -> ScalarField {
    let s = part.spec();
    let d1 = divergence(&sol.v1);
    let d2 = divergence(&sol.v2);
    let mut out = ScalarField::zeros(s);
    for j in 0..s.ny {
        for i in 0..s.nx {
            let r = match part.region(i, j) {
                Region::Void => 0.0,
                Region::One => d1.at(i, j) - params.growth_at(Tissue::One, sol.p.at(i, j)),
                Region::Two => d2.at(i, j) - params.growth_at(Tissue::Two, sol.p.at(i, j)),
            };
            out.set(i, j, r);
        }
    }
    out
}

/// Stationary solve for the current partition and `q`, warm-started from
/// the stored velocities.
pub fn solve_current(state: &LimitState, ctrl: &StepControl, params: &ModelParams) -> Result<StationarySolution> {
    if state.part.cell_count(Tissue::Two) == 0 && state.q.max_abs() == 0.0 {
        solve_single_species(&state.part, params, &ctrl.solver)
    } else {
        solve_stationary_from(&state.part, params, &state.q, &ctrl.solver, Some((&state.v1, &state.v2)))
    }
}

/// Non-conservative upwind transport `∂_t l + v·∇l = 0` with the velocity
/// averaged to cell centers; zero-gradient at the walls.
pub fn advect_level(level: &ScalarField, v: &VectorField, dt: f64) -> ScalarField {
    let s = level.spec;
    let mut out = level.clone();
    for j in 0..s.ny {
        for i in 0..s.nx {
            let (cu, cv) = v.cell_center(i, j);
            let l = level.at(i, j);
            let dx_minus = if i > 0 { (l - level.at(i - 1, j)) / s.hx } else { 0.0 };
            let dx_plus = if i + 1 < s.nx { (level.at(i + 1, j) - l) / s.hx } else { 0.0 };
            let dy_minus = if j > 0 { (l - level.at(i, j - 1)) / s.hy } else { 0.0 };
            let dy_plus = if j + 1 < s.ny { (level.at(i, j + 1) - l) / s.hy } else { 0.0 };
            let adv = cu.max(0.0) * dx_minus + cu.min(0.0) * dx_plus + cv.max(0.0) * dy_minus + cv.min(0.0) * dy_plus;
            out.set(i, j, l - dt * adv);
        }
    }
    out
}

/// One explicit step of the `q` equations in `s = ln(1 + q)`: on `Ω_1`, `s`
/// is carried by `v_2` and multiplied by `exp(dt G_2(P_2))`, and
/// symmetrically on `Ω_2`. The source is integrated exactly, so `q >= 0`
/// whenever `dt` satisfies the transport CFL bound. The result is not
/// masked.
pub fn transport_q(state: &LimitState, params: &ModelParams, dt: f64) -> ScalarField {
    let s_field = state.q.map(f64::ln_1p);
    let part = &state.part;
    let on = |chi: &ScalarField| s_field.zip_map(chi, |s, c| s * c);
    let carry = |s_i: ScalarField, v: &VectorField, p: &ScalarField, other: Tissue| {
        let div = upwind_divergence(&s_i, v);
        let mut out = s_i;
        for k in 0..out.values.len() {
            let g = params.growth_at(other, p.values[k]);
            out.values[k] = (out.values[k] - dt * div.values[k]).max(0.0) * (dt * g).exp();
        }
        out
    };
    if s_field.max_abs() == 0.0 {
        return ScalarField::zeros(part.spec());
    }
    let s1 = carry(on(&part.chi1), &state.v2, &state.p2, Tissue::Two);
    let s2 = carry(on(&part.chi2), &state.v1, &state.p1, Tissue::One);
    s1.zip_map(&s2, |a, b| (a + b).exp_m1())
}

/// Time step bound: the requested step, the transport CFL bound, and the
/// remaining time.
pub fn limit_dt(state: &LimitState, ctrl: &StepControl, vmax: f64) -> f64 {
    let s = state.spec();
    let mut dt = ctrl.dt.min(ctrl.t_end - state.t);
    if vmax > 0.0 {
        dt = dt.min(ctrl.cfl_number * s.hx.min(s.hy) / vmax);
    }
    dt
}

/// One step of L-ESVM (`ctrl.model = Esvm`) or L-VM (`Vm`, `q` forced to
/// zero).
pub fn step_limit(state: &LimitState, ctrl: &StepControl, params: &ModelParams) -> Result<LimitState> {
    let sol = solve_current(state, ctrl, params)?;
    let closure = complementarity_closure(&state.part, params, &sol).max_abs();
    let mut next = state.clone();
    next.p1 = sol.tissue_pressure(&state.part, Tissue::One);
    next.p2 = sol.tissue_pressure(&state.part, Tissue::Two);
    next.v1 = sol.v1;
    next.v2 = sol.v2;
    next.last_stats = sol.stats;
    next.closure = closure;

    let vmax = next.v1.max_abs().max(next.v2.max_abs());
    let dt = limit_dt(state, ctrl, vmax);
    if !(dt > 0.0) {
        return Err(Error::StepControl(format!("non-positive time step {dt} at t = {}", state.t)));
    }
    let level1 = advect_level(&state.part.level1, &next.v1, dt);
    let level2 = advect_level(&state.part.level2, &next.v2, dt);
    let q = match ctrl.model {
        ModelKind::Esvm => transport_q(&next, params, dt),
        ModelKind::Vm => ScalarField::zeros(state.spec()),
    };
    let part = DomainPartition::from_levels(level1, level2)?;
    for t in [Tissue::One, Tissue::Two] {
        let before = state.part.cell_count(t);
        let after = part.cell_count(t);
        if before >= MIN_DOMAIN_CELLS && after < MIN_DOMAIN_CELLS {
            return Err(Error::VanishingDomain { tissue: t.index(), cells: after });
        }
    }
    next.q = mask(&q, &part);
    next.part = part;
    next.t = state.t + dt;
    next.steps += 1;
    next.last_dt = dt;
    Ok(next)
}

/// Observer record of a limit state: areas in place of masses, overlap in
/// cells, the closure residual in place of the complementarity residual.
pub fn limit_record(state: &LimitState) -> DiagnosticRecord {
    DiagnosticRecord {
        t: state.t,
        mass1: state.area(Tissue::One),
        mass2: state.area(Tissue::Two),
        overlap: state.overlap_cells() as f64,
        comp_residual: state.closure,
        curl1: CurlStats::of(&state.v1),
        curl2: CurlStats::of(&state.v2),
        clamp_count: 0,
    }
}

#[derive(Debug, Clone)]
pub struct LimitTrajectory {
    pub records: Vec<DiagnosticRecord>,
    pub final_state: LimitState,
    /// Largest overlap cell count over every step, recorded or not.
    pub max_overlap_cells: usize,
    /// Largest closure residual over every stationary solve.
    pub max_closure: f64,
}

/// Steps until `ctrl.t_end`, recording every `every` steps and the last.
/// The final state carries the velocities of a solve on its own partition.
pub fn run_limit(
    state: LimitState,
    ctrl: &StepControl,
    params: &ModelParams,
    every: usize,
    mut observer: impl FnMut(&LimitState, &DiagnosticRecord),
) -> Result<LimitTrajectory> {
    let every = every.max(1);
    let mut state = state;
    let mut records = Vec::new();
    let mut max_overlap = state.overlap_cells();
    let mut max_closure: f64 = 0.0;
    let t_stop = ctrl.t_end - 1e-12 * ctrl.t_end.abs().max(1.0);
    while state.t < t_stop {
        state = step_limit(&state, ctrl, params)?;
        max_overlap = max_overlap.max(state.overlap_cells());
        max_closure = max_closure.max(state.closure);
        let last = state.t >= t_stop;
        if last {
            let sol = solve_current(&state, ctrl, params)?;
            state.closure = complementarity_closure(&state.part, params, &sol).max_abs();
            max_closure = max_closure.max(state.closure);
            state.p1 = sol.tissue_pressure(&state.part, Tissue::One);
            state.p2 = sol.tissue_pressure(&state.part, Tissue::Two);
            state.v1 = sol.v1;
            state.v2 = sol.v2;
            state.last_stats = sol.stats;
        }
        if state.steps.is_multiple_of(every) || last {
            let rec = limit_record(&state);
            observer(&state, &rec);
            records.push(rec);
        }
    }
    Ok(LimitTrajectory { records, final_state: state, max_overlap_cells: max_overlap, max_closure })
}

/// Area of `{l > 1/2}` from sub-cell volume fractions, assuming `l` is
/// locally linear across each cell.
pub fn level_area(level: &ScalarField) -> f64 {
    let s = level.spec;
    let mut area = 0.0;
    for j in 0..s.ny {
        for i in 0..s.nx {
            let l = level.at(i, j);
            let slope = |a: Option<f64>, b: Option<f64>, h: f64| match (a, b) {
                (Some(a), Some(b)) => (b - a) / (2.0 * h),
                (Some(a), None) => (l - a) / h,
                (None, Some(b)) => (b - l) / h,
                (None, None) => 0.0,
            };
            let gx = slope((i > 0).then(|| level.at(i - 1, j)), (i + 1 < s.nx).then(|| level.at(i + 1, j)), s.hx);
            let gy = slope((j > 0).then(|| level.at(i, j - 1)), (j + 1 < s.ny).then(|| level.at(i, j + 1)), s.hy);
            let width = gx.abs() * s.hx + gy.abs() * s.hy;
            let frac = if width > 0.0 {
                ((l - 0.5) / width + 0.5).clamp(0.0, 1.0)
            } else if l > 0.5 {
                1.0
            } else {
                0.0
            };
            area += frac;
        }
    }
    area * s.cell_area()
}

/// Region codes (0 void, 1, 2) in the field CSV layout.
pub fn partition_to_csv(part: &DomainPartition) -> String {
    let codes = part.chi1.zip_map(&part.chi2, |a, b| a + 2.0 * b);
    scalar_to_csv(&codes)
}

/// Chain of interface face midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub kind: InterfaceKind,
    pub points: Vec<(f64, f64)>,
    pub closed: bool,
}

fn face_vertices(s: &GridSpec, f: &InterfaceFace) -> [(usize, usize); 2] {
    let _ = s;
    if f.x_face {
        [(f.i, f.j), (f.i, f.j + 1)]
    } else {
        [(f.i, f.j), (f.i + 1, f.j)]
    }
}

/// Interface faces joined through shared grid vertices into polylines, one
/// set per interface kind. Where more than two faces meet at a vertex the
/// chain continues with the first unvisited one.
pub fn interface_polylines(part: &DomainPartition) -> Vec<Polyline> {
    let s = part.spec();
    let faces = part.interfaces();
    let mut lines = Vec::new();
    for kind in InterfaceKind::ALL {
        let idx: Vec<usize> = (0..faces.len()).filter(|&k| faces[k].kind == kind).collect();
        let mut by_vertex: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for &k in &idx {
            for v in face_vertices(&s, &faces[k]) {
                by_vertex.entry(v).or_default().push(k);
            }
        }
        let mut visited = vec![false; faces.len()];
        // open chains start at a vertex used by a single face
        let mut starts: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|&k| face_vertices(&s, &faces[k]).iter().any(|v| by_vertex[v].len() == 1))
            .collect();
        starts.extend(idx.iter().copied());
        for start in starts {
            if visited[start] {
                continue;
            }
            let mut chain = vec![start];
            visited[start] = true;
            let mut current = start;
            loop {
                let next = face_vertices(&s, &faces[current])
                    .iter()
                    .flat_map(|v| by_vertex[v].iter().copied())
                    .find(|&k| !visited[k]);
                match next {
                    Some(k) => {
                        visited[k] = true;
                        chain.push(k);
                        current = k;
                    }
                    None => break,
                }
            }
            let ends_meet = chain.len() > 2 && {
                let a = face_vertices(&s, &faces[chain[0]]);
                let b = face_vertices(&s, &faces[*chain.last().expect("non-empty")]);
                a.iter().any(|v| b.contains(v))
            };
            lines.push(Polyline { kind, points: chain.iter().map(|&k| (faces[k].x, faces[k].y)).collect(), closed: ends_meet });
        }
    }
    lines
}

pub const POLYLINE_HEADER: &str = "interface,chain,point,x,y,closed";

pub fn polylines_to_csv(lines: &[Polyline]) -> String {
    let mut out = String::from(POLYLINE_HEADER);
    out.push('\n');
    for (c, line) in lines.iter().enumerate() {
        for (k, (x, y)) in line.points.iter().enumerate() {
            let _ = writeln!(out, "{},{c},{k},{x:.17e},{y:.17e},{}", line.kind.name(), line.closed);
        }
    }
    out
}

/// Level field `1/2 + signed distance` of a union of axis-aligned
/// rectangles `[x0, x1] x [y0, y1]`. Rectangle edges on the box boundary
/// are treated as extending beyond it, so walls are not interfaces.
pub fn rectangles_level(spec: GridSpec, rects: &[[f64; 4]]) -> ScalarField {
    let tol = 1e-12;
    ScalarField::from_fn(spec, |x, y| {
        let dist = |r: &[f64; 4]| {
            let ext = |lo: f64, hi: f64, min: f64, max: f64| {
                (if (lo - min).abs() < tol { f64::NEG_INFINITY } else { lo }, if (hi - max).abs() < tol { f64::INFINITY } else { hi })
            };
            let (x0, x1) = ext(r[0], r[1], spec.x_min, spec.x_max);
            let (y0, y1) = ext(r[2], r[3], spec.y_min, spec.y_max);
            let dx = (x0 - x).max(x - x1);
            let dy = (y0 - y).max(y - y1);
            if dx <= 0.0 && dy <= 0.0 {
                -dx.max(dy)
            } else {
                -(dx.max(0.0).hypot(dy.max(0.0)))
            }
        };
        0.5 + rects.iter().map(dist).fold(f64::NEG_INFINITY, f64::max)
    })
}

/// The segregated paper data as a partition: tissue 1 on
/// `[-2/3, 2/3] x [-1, 0]`, tissue 2 on the two side strips of the lower
/// half, rescaled to the box.
pub fn banded_partition(spec: GridSpec) -> DomainPartition {
    let sx = |f: f64| spec.x_min + (f + 1.0) * 0.5 * (spec.x_max - spec.x_min);
    let sy = |f: f64| spec.y_min + (f + 1.0) * 0.5 * (spec.y_max - spec.y_min);
    let l1 = rectangles_level(spec, &[[sx(-2.0 / 3.0), sx(2.0 / 3.0), sy(-1.0), sy(0.0)]]);
    let l2 = rectangles_level(spec, &[[sx(-1.0), sx(-2.0 / 3.0), sy(-1.0), sy(0.0)], [sx(2.0 / 3.0), sx(1.0), sy(-1.0), sy(0.0)]]);
    DomainPartition::from_levels(l1, l2).expect("same grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brinkman::SolverConfig;
    use crate::dynamics::VelocityLaw;

    fn ctrl(model: ModelKind, dt: f64, t_end: f64) -> StepControl {
        StepControl { dt, cfl_number: 0.4, t_end, model, velocity_law: VelocityLaw::Dirichlet, solver: SolverConfig::default() }
    }

    fn square(n: usize) -> GridSpec {
        GridSpec::new(-1.0, 1.0, -1.0, 1.0, n, n).unwrap()
    }

    #[test]
    fn homeostatic_partition_stays_put() {
        let s = square(24);
        let params = ModelParams { p1_star: 0.0, p2_star: 0.0, beta1: 1.0, beta2: 1.0, g1: 1.0, g2: 1.0, ..ModelParams::default() };
        let part = DomainPartition::concentric(s, 0.3, 0.6);
        let state = init_limit(part.clone(), ScalarField::zeros(s)).unwrap();
        let next = step_limit(&state, &ctrl(ModelKind::Esvm, 1e-2, 1.0), &params).unwrap();
        assert_eq!(next.part.chi1, part.chi1);
        assert_eq!(next.part.chi2, part.chi2);
        assert_eq!(next.v1.max_abs(), 0.0);
    }

    #[test]
    fn q_zero_stays_zero_and_models_agree() {
        let s = square(20);
        let params = ModelParams { beta1: 1.0, beta2: 1.0, g1: 1.0, g2: 1.0, ..ModelParams::default() };
        let state = init_limit(banded_partition(s), ScalarField::zeros(s)).unwrap();
        let a = run_limit(state.clone(), &ctrl(ModelKind::Esvm, 5e-3, 0.02), &params, 1, |_, _| {}).unwrap();
        let b = run_limit(state, &ctrl(ModelKind::Vm, 5e-3, 0.02), &params, 1, |_, _| {}).unwrap();
        assert_eq!(a.final_state.q.max_abs(), 0.0);
        assert_eq!(a.records, b.records);
        assert_eq!(a.final_state.part, b.final_state.part);
        assert_eq!(a.max_overlap_cells, 0);
    }

    #[test]
    fn closure_residual_vanishes() {
        let s = square(24);
        let params = ModelParams { beta1: 1.0, beta2: 1.0, g1: 1.0, g2: 1.0, ..ModelParams::default() };
        let part = DomainPartition::concentric(s, 0.3, 0.6);
        let sol = crate::stationary::solve_stationary(&part, &params, &ScalarField::zeros(s), &SolverConfig::default()).unwrap();
        assert!(complementarity_closure(&part, &params, &sol).max_abs() < 1e-9);
    }

    #[test]
    fn q_ode_with_exact_source() {
        // v = 0, G = γ on both tissues: s' = γ s, so q = (1 + q0)^{e^{γt}} - 1
        let s = square(8);
        let gamma = 0.7;
        let params = ModelParams { p1_star: gamma, p2_star: gamma, g1: 1.0, g2: 1.0, ..ModelParams::default() };
        let part = DomainPartition::concentric(s, 0.4, 0.8);
        let q0 = 0.3;
        let mut state = init_limit(part, ScalarField::constant(s, q0)).unwrap();
        let dt = 0.01;
        for _ in 0..10 {
            state.q = mask(&transport_q(&state, &params, dt), &state.part);
        }
        let exact = (1.0 + q0).powf((gamma * 0.1f64).exp()) - 1.0;
        for (k, &v) in state.q.values.iter().enumerate() {
            if state.part.chi1.values[k] + state.part.chi2.values[k] > 0.0 {
                assert!((v - exact).abs() < 1e-12, "{v} vs {exact}");
            }
        }
    }

    #[test]
    fn level_area_of_disk() {
        let s = square(64);
        let r = 0.5;
        let l = ScalarField::from_fn(s, |x, y| 0.5 + r - x.hypot(y));
        let a = level_area(&l);
        assert!((a - std::f64::consts::PI * r * r).abs() < 2e-3, "{a}");
    }

    #[test]
    fn rectangles_level_ignores_walls() {
        let s = square(16);
        let l = rectangles_level(s, &[[-1.0, 0.0, -1.0, 1.0]]);
        // the cell next to the left wall is as deep as any other in its row
        assert!(l.at(0, 8) > l.at(6, 8));
        let part = banded_partition(s);
        assert_eq!(part.cell_count(Tissue::One), 10 * 8);
        assert_eq!(part.cell_count(Tissue::Two), 6 * 8);
    }

    #[test]
    fn concentric_polylines_close() {
        let s = square(32);
        let part = DomainPartition::concentric(s, 0.3, 0.6);
        let lines = interface_polylines(&part);
        let gamma: Vec<&Polyline> = lines.iter().filter(|l| l.kind == InterfaceKind::Gamma).collect();
        assert_eq!(gamma.len(), 1);
        assert!(gamma[0].closed);
        let total: usize = lines.iter().map(|l| l.points.len()).sum();
        assert_eq!(total, part.interfaces().len());
        assert!(polylines_to_csv(&lines).starts_with(POLYLINE_HEADER));
    }

    #[test]
    fn partition_csv_codes() {
        let s = square(4);
        let part = DomainPartition::from_fn(s, |x, _| if x < 0.0 { Region::One } else { Region::Two });
        let text = partition_to_csv(&part);
        let f = crate::field_io::scalar_from_csv(&text).unwrap();
        assert_eq!(f.at(0, 0), 1.0);
        assert_eq!(f.at(3, 3), 2.0);
    }
}
