//! Stationary incompressible-limit system on a fixed partition of the box
//! into tissue 1, tissue 2 and void.
//!
//! With `d_i = ∇·v_i` and indicators `χ_i` sampled at cell centers, the
//! velocities solve
//!
//! ```text
//! (-β_i Δ_h + I) v_i = -∇_h P_i,
//! P_1 = χ_1 (p1* - d_1/g_1) + χ_2 (p2* - d_2/g_2 + q),
//! P_2 = χ_2 (p2* - d_2/g_2) + χ_1 (p1* - d_1/g_1 + q),
//! ```
//!
//! with no-slip walls. Moving the divergence terms to the left gives the
//! discrete weak form `B_h(v, φ) = l_h(φ)`, whose matrix carries the
//! cross-coupling `∫ χ_1 d_1 ∇·φ_2 / g_1 + ∫ χ_2 d_2 ∇·φ_1 / g_2` and is
//! therefore not symmetric. The pressure is recovered as
//! `p = χ_1 (p1* - d_1/g_1) + χ_2 (p2* - d_2/g_2)`.

use std::fmt::Write as _;

use crate::brinkman::{n_u_unknowns, n_v_unknowns, pack_u, pack_v, push_face_laplacian, u_unknown, unpack, v_unknown, HelmholtzOperator};
use crate::constitutive::{coercivity_check, CoercivityReport, ModelParams, Tissue};
use crate::error::{Error, Result};
use crate::grid::{divergence, GridSpec, ScalarField, VectorField};
use crate::linalg::{bicgstab, solve_banded_lu, CsrMatrix, SolveStats, SolverConfig, SolverMethod, TripletBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Void,
    One,
    Two,
}

impl Region {
    fn tissue(self) -> Option<Tissue> {
        match self {
            Region::Void => None,
            Region::One => Some(Tissue::One),
            Region::Two => Some(Tissue::Two),
        }
    }
}

/// Which pair of regions a face separates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InterfaceKind {
    /// Tissue 1 against tissue 2.
    Gamma,
    /// Tissue 1 against void.
    Gamma1,
    /// Tissue 2 against void.
    Gamma2,
}

impl InterfaceKind {
    pub fn name(self) -> &'static str {
        match self {
            InterfaceKind::Gamma => "gamma",
            InterfaceKind::Gamma1 => "gamma1",
            InterfaceKind::Gamma2 => "gamma2",
        }
    }

    pub const ALL: [InterfaceKind; 3] = [InterfaceKind::Gamma, InterfaceKind::Gamma1, InterfaceKind::Gamma2];
}

/// One grid face on an interface. The normal points from the inside region
/// (tissue 1 on `Gamma` and `Gamma1`, tissue 2 on `Gamma2`) to the outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceFace {
    pub kind: InterfaceKind,
    /// True for a face normal to x (a `u` face).
    pub x_face: bool,
    /// Face index in the `u` or `v` layout.
    pub i: usize,
    pub j: usize,
    pub x: f64,
    pub y: f64,
    pub normal: (f64, f64),
}

/// Indicator fields of the two tissue domains, with the continuous level
/// fields they were thresholded from (used for interface normals).
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPartition {
    pub chi1: ScalarField,
    pub chi2: ScalarField,
    pub level1: ScalarField,
    pub level2: ScalarField,
}

/// Threshold of the level fields.
pub const LEVEL_THRESHOLD: f64 = 0.5;

impl DomainPartition {
    /// Checks that both fields take values in {0, 1} and are disjoint. The
    /// indicators double as level fields.
    pub fn new(chi1: ScalarField, chi2: ScalarField) -> Result<Self> {
        if chi1.spec != chi2.spec {
            return Err(Error::Shape("indicators on different grids".into()));
        }
        for (k, (&a, &b)) in chi1.values.iter().zip(&chi2.values).enumerate() {
            if (a != 0.0 && a != 1.0) || (b != 0.0 && b != 1.0) {
                return Err(Error::Partition(format!("cell {k}: indicator values ({a}, {b}) not in {{0, 1}}")));
            }
            if a * b != 0.0 {
                let (i, j) = (k % chi1.spec.nx, k / chi1.spec.nx);
                return Err(Error::Partition(format!("cell ({i}, {j}) belongs to both tissues")));
            }
        }
        Ok(Self { level1: chi1.clone(), level2: chi2.clone(), chi1, chi2 })
    }

    /// Thresholds two level fields at one half. A cell exactly at the
    /// threshold goes to the void; a cell above it for both tissues goes to
    /// the larger level, tissue 1 on ties.
    pub fn from_levels(level1: ScalarField, level2: ScalarField) -> Result<Self> {
        if level1.spec != level2.spec {
            return Err(Error::Shape("level fields on different grids".into()));
        }
        let s = level1.spec;
        let mut chi1 = ScalarField::zeros(s);
        let mut chi2 = ScalarField::zeros(s);
        for k in 0..s.n_cells() {
            let (a, b) = (level1.values[k], level2.values[k]);
            let in1 = a > LEVEL_THRESHOLD;
            let in2 = b > LEVEL_THRESHOLD;
            match (in1, in2) {
                (true, true) if b > a => chi2.values[k] = 1.0,
                (true, _) => chi1.values[k] = 1.0,
                (false, true) => chi2.values[k] = 1.0,
                (false, false) => {}
            }
        }
        Ok(Self { chi1, chi2, level1, level2 })
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> Region) -> Self {
        let region = |x, y, r| if f(x, y) == r { 1.0 } else { 0.0 };
        let chi1 = ScalarField::from_fn(spec, |x, y| region(x, y, Region::One));
        let chi2 = ScalarField::from_fn(spec, |x, y| region(x, y, Region::Two));
        Self { level1: chi1.clone(), level2: chi2.clone(), chi1, chi2 }
    }

    /// Disk of radius `r1` (tissue 1) inside the annulus `r1 < r < r2`
    /// (tissue 2), both centered at the box center. Level fields are
    /// shifted signed distances.
    pub fn concentric(spec: GridSpec, r1: f64, r2: f64) -> Self {
        let (cx, cy) = (0.5 * (spec.x_min + spec.x_max), 0.5 * (spec.y_min + spec.y_max));
        let r = move |x: f64, y: f64| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
        let l1 = ScalarField::from_fn(spec, |x, y| LEVEL_THRESHOLD + (r1 - r(x, y)));
        let l2 = ScalarField::from_fn(spec, |x, y| LEVEL_THRESHOLD + (r(x, y) - r1).min(r2 - r(x, y)));
        Self::from_levels(l1, l2).expect("same grid")
    }

    pub fn spec(&self) -> GridSpec {
        self.chi1.spec
    }

    pub fn region(&self, i: usize, j: usize) -> Region {
        if self.chi1.at(i, j) != 0.0 {
            Region::One
        } else if self.chi2.at(i, j) != 0.0 {
            Region::Two
        } else {
            Region::Void
        }
    }

    pub fn cell_count(&self, t: Tissue) -> usize {
        let chi = match t {
            Tissue::One => &self.chi1,
            Tissue::Two => &self.chi2,
        };
        chi.values.iter().filter(|&&v| v != 0.0).count()
    }

    /// Fewest cells between a tissue cell and the nearest wall (0 when a
    /// tissue touches the wall); `None` when both tissues are empty.
    pub fn wall_clearance(&self) -> Option<usize> {
        let s = self.spec();
        let mut best: Option<usize> = None;
        for j in 0..s.ny {
            for i in 0..s.nx {
                if self.region(i, j) != Region::Void {
                    let d = i.min(j).min(s.nx - 1 - i).min(s.ny - 1 - j);
                    best = Some(best.map_or(d, |b| b.min(d)));
                }
            }
        }
        best
    }

    /// Requires every tissue cell to be at least `cells` cells from the walls.
    pub fn check_wall_clearance(&self, cells: usize) -> Result<()> {
        match self.wall_clearance() {
            Some(d) if d < cells => Err(Error::Partition(format!(
                "tissue reaches within {d} cells of the wall, {cells} required"
            ))),
            _ => Ok(()),
        }
    }

    /// Tissue labels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            chi1: self.chi2.clone(),
            chi2: self.chi1.clone(),
            level1: self.level2.clone(),
            level2: self.level1.clone(),
        }
    }

    /// All faces separating two different regions, x-faces first.
    pub fn interfaces(&self) -> Vec<InterfaceFace> {
        let s = self.spec();
        let mut out = Vec::new();
        let classify = |a: Region, b: Region| -> Option<(InterfaceKind, bool)> {
            // returns the kind and whether `a` is the inside region
            match (a, b) {
                (Region::One, Region::Two) => Some((InterfaceKind::Gamma, true)),
                (Region::Two, Region::One) => Some((InterfaceKind::Gamma, false)),
                (Region::One, Region::Void) => Some((InterfaceKind::Gamma1, true)),
                (Region::Void, Region::One) => Some((InterfaceKind::Gamma1, false)),
                (Region::Two, Region::Void) => Some((InterfaceKind::Gamma2, true)),
                (Region::Void, Region::Two) => Some((InterfaceKind::Gamma2, false)),
                _ => None,
            }
        };
        for j in 0..s.ny {
            for i in 1..s.nx {
                if let Some((kind, low_inside)) = classify(self.region(i - 1, j), self.region(i, j)) {
                    out.push(InterfaceFace {
                        kind,
                        x_face: true,
                        i,
                        j,
                        x: s.xf(i),
                        y: s.yc(j),
                        normal: if low_inside { (1.0, 0.0) } else { (-1.0, 0.0) },
                    });
                }
            }
        }
        for j in 1..s.ny {
            for i in 0..s.nx {
                if let Some((kind, low_inside)) = classify(self.region(i, j - 1), self.region(i, j)) {
                    out.push(InterfaceFace {
                        kind,
                        x_face: false,
                        i,
                        j,
                        x: s.xc(i),
                        y: s.yf(j),
                        normal: if low_inside { (0.0, 1.0) } else { (0.0, -1.0) },
                    });
                }
            }
        }
        out
    }
}

/// Assembled discrete weak form, unknowns ordered `[v1 x-faces, v1 y-faces,
/// v2 x-faces, v2 y-faces]` (only the `v1` blocks in single-species mode).
#[derive(Debug, Clone)]
pub struct StationarySystem {
    pub spec: GridSpec,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub coercivity: CoercivityReport,
    pub species: usize,
}

/// Tissue-wise constants entering `P_i` in a cell.
fn pressure_constants(region: Region, params: &ModelParams, q: f64) -> (f64, f64) {
    match region {
        Region::Void => (0.0, 0.0),
        Region::One => (params.p1_star, params.p1_star + q),
        Region::Two => (params.p2_star + q, params.p2_star),
    }
}

/// Interior faces of cell `(i, j)` with their divergence coefficients, as
/// `(block_is_y, unknown, coefficient)`.
fn cell_faces(s: &GridSpec, i: usize, j: usize) -> Vec<(bool, usize, f64)> {
    let mut f = Vec::with_capacity(4);
    if i > 0 {
        f.push((false, u_unknown(s, i, j), -1.0 / s.hx));
    }
    if i + 1 < s.nx {
        f.push((false, u_unknown(s, i + 1, j), 1.0 / s.hx));
    }
    if j > 0 {
        f.push((true, v_unknown(s, i, j), -1.0 / s.hy));
    }
    if j + 1 < s.ny {
        f.push((true, v_unknown(s, i, j + 1), 1.0 / s.hy));
    }
    f
}

fn assemble(part: &DomainPartition, params: &ModelParams, q: &ScalarField, species: usize) -> Result<StationarySystem> {
    let s = part.spec();
    if q.spec != s {
        return Err(Error::Shape("q and partition on different grids".into()));
    }
    for (k, &v) in q.values.iter().enumerate() {
        let inside = part.chi1.values[k] != 0.0 || part.chi2.values[k] != 0.0;
        if inside && !v.is_finite() {
            return Err(Error::Params(format!("q is not finite in tissue cell {k}")));
        }
    }
    let (nu, nv) = (n_u_unknowns(&s), n_v_unknowns(&s));
    let block = nu + nv;
    let n = species * block;
    let beta = [params.beta1, params.beta2];
    let mut t = TripletBuilder::new(n, n);
    for b in 0..species {
        let o = b * block;
        push_face_laplacian(&mut t, &s, true, beta[b], o, o);
        push_face_laplacian(&mut t, &s, false, beta[b], o + nu, o + nu);
        for k in 0..block {
            t.push(o + k, o + k, 1.0);
        }
    }
    let offset = |blk: usize, is_y: bool, k: usize| blk * block + if is_y { nu + k } else { k };
    let mut rhs = vec![0.0; n];
    for j in 0..s.ny {
        for i in 0..s.nx {
            let region = part.region(i, j);
            let faces = cell_faces(&s, i, j);
            // divergence-divergence coupling, identical in every row block
            if let Some(tissue) = region.tissue() {
                let col_block = tissue.index() - 1;
                if col_block < species {
                    let w = 1.0 / params.g(tissue);
                    for row_block in 0..species {
                        for &(ry, rk, rc) in &faces {
                            for &(cy, ck, cc) in &faces {
                                t.push(offset(row_block, ry, rk), offset(col_block, cy, ck), w * rc * cc);
                            }
                        }
                    }
                }
            }
            // -∇_h C_i tested against the faces of this cell
            let consts = pressure_constants(region, params, q.at(i, j));
            let c = [consts.0, consts.1];
            for (b, &cb) in c.iter().enumerate().take(species) {
                if cb != 0.0 {
                    for &(fy, fk, fc) in &faces {
                        rhs[offset(b, fy, fk)] += cb * fc;
                    }
                }
            }
        }
    }
    Ok(StationarySystem {
        spec: s,
        matrix: t.build(),
        rhs,
        coercivity: coercivity_check(params),
        species,
    })
}

/// Discrete weak form of the two-tissue stationary system. Assembly goes
/// ahead when the coercivity condition fails; the report is attached.
pub fn assemble_weak_form(part: &DomainPartition, params: &ModelParams, q: &ScalarField) -> Result<StationarySystem> {
    assemble(part, params, q, 2)
}

/// One-tissue system on `part.chi1` with `beta1`, `g1`, `p1_star`. Tissue 2
/// must be empty.
pub fn assemble_single_species(part: &DomainPartition, params: &ModelParams) -> Result<StationarySystem> {
    if part.cell_count(Tissue::Two) != 0 {
        return Err(Error::Partition("single-species mode requires an empty tissue 2".into()));
    }
    let q = ScalarField::zeros(part.spec());
    let mut sys = assemble(part, params, &q, 1)?;
    sys.coercivity = CoercivityReport { holds: true, margins: (f64::INFINITY, f64::INFINITY) };
    Ok(sys)
}

impl StationarySystem {
    pub fn n_unknowns(&self) -> usize {
        self.rhs.len()
    }

    fn block(&self) -> usize {
        n_u_unknowns(&self.spec) + n_v_unknowns(&self.spec)
    }

    pub fn pack(&self, v1: &VectorField, v2: &VectorField) -> Vec<f64> {
        let mut x = pack_u(v1);
        x.extend(pack_v(v1));
        if self.species == 2 {
            x.extend(pack_u(v2));
            x.extend(pack_v(v2));
        }
        x
    }

    pub fn unpack(&self, x: &[f64]) -> (VectorField, VectorField) {
        let nu = n_u_unknowns(&self.spec);
        let b = self.block();
        let v1 = unpack(self.spec, &x[..nu], &x[nu..b]);
        let v2 = if self.species == 2 {
            unpack(self.spec, &x[b..b + nu], &x[b + nu..])
        } else {
            VectorField::zeros(self.spec)
        };
        (v1, v2)
    }

    /// `B_h((v1, v2), (φ1, φ2))` with face-area weights.
    pub fn bilinear(&self, v: (&VectorField, &VectorField), phi: (&VectorField, &VectorField)) -> f64 {
        let x = self.pack(v.0, v.1);
        let y = self.pack(phi.0, phi.1);
        let ax = self.matrix.mul_vec(&x);
        ax.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() * self.spec.cell_area()
    }

    /// `l_h((φ1, φ2))`.
    pub fn linear(&self, phi: (&VectorField, &VectorField)) -> f64 {
        let y = self.pack(phi.0, phi.1);
        self.rhs.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() * self.spec.cell_area()
    }

    /// Unknowns ordered by position, which keeps the bandwidth near
    /// `4 nx` for the direct solver.
    fn spatial_order(&self) -> Vec<usize> {
        let s = self.spec;
        let nu = n_u_unknowns(&s);
        let b = self.block();
        let mut keys: Vec<(usize, usize, usize)> = Vec::with_capacity(self.n_unknowns());
        for blk in 0..self.species {
            for j in 0..s.ny {
                for i in 1..s.nx {
                    keys.push((2 * j + 1, 2 * i, blk * b + u_unknown(&s, i, j)));
                }
            }
            for j in 1..s.ny {
                for i in 0..s.nx {
                    keys.push((2 * j, 2 * i + 1, blk * b + nu + v_unknown(&s, i, j)));
                }
            }
        }
        keys.sort_unstable();
        keys.into_iter().map(|k| k.2).collect()
    }

    /// Solves the assembled system; `guess` warm-starts the iterative path.
    pub fn solve(&self, cfg: &SolverConfig, guess: Option<&[f64]>) -> Result<(Vec<f64>, SolveStats)> {
        match cfg.method {
            SolverMethod::Iterative => {
                let mut x = guess.map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; self.n_unknowns()]);
                let max_iter = cfg.max_iter_for(self.spec.nx, self.spec.ny) * 2;
                let st = bicgstab(&self.matrix, &self.rhs, &mut x, cfg.rel_tol, max_iter)?;
                Ok((x, st))
            }
            SolverMethod::DirectBanded => {
                let order = self.spatial_order();
                let mut pos = vec![0; order.len()];
                for (p, &k) in order.iter().enumerate() {
                    pos[k] = p;
                }
                let n = self.n_unknowns();
                let mut t = TripletBuilder::new(n, n);
                for r in 0..n {
                    for (c, v) in self.matrix.row(r) {
                        t.push(pos[r], pos[c], v);
                    }
                }
                let b: Vec<f64> = order.iter().map(|&k| self.rhs[k]).collect();
                let y = solve_banded_lu(&t.build(), &b)?;
                let mut x = vec![0.0; n];
                for (p, &k) in order.iter().enumerate() {
                    x[k] = y[p];
                }
                Ok((x, SolveStats { iterations: 0, rel_residual: 0.0 }))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct StationarySolution {
    pub v1: VectorField,
    pub v2: VectorField,
    /// Pressure rebuilt from the velocity divergences, zero on the void.
    pub p: ScalarField,
    /// Repulsion pressure on the tissues, zero on the void.
    pub q: ScalarField,
    pub params: ModelParams,
    pub coercivity: CoercivityReport,
    pub stats: SolveStats,
    pub species: usize,
}

impl StationarySolution {
    /// `P_i` of the stationary system, cell by cell.
    pub fn tissue_pressure(&self, part: &DomainPartition, which: Tissue) -> ScalarField {
        let s = part.spec();
        let d1 = divergence(&self.v1);
        let d2 = divergence(&self.v2);
        let p = &self.params;
        let mut out = ScalarField::zeros(s);
        for j in 0..s.ny {
            for i in 0..s.nx {
                let q = self.q.at(i, j);
                let val = match part.region(i, j) {
                    Region::Void => 0.0,
                    Region::One => p.p1_star - d1.at(i, j) / p.g1 + if which == Tissue::Two { q } else { 0.0 },
                    Region::Two => p.p2_star - d2.at(i, j) / p.g2 + if which == Tissue::One { q } else { 0.0 },
                };
                out.set(i, j, val);
            }
        }
        out
    }

    pub fn velocity(&self, t: Tissue) -> &VectorField {
        match t {
            Tissue::One => &self.v1,
            Tissue::Two => &self.v2,
        }
    }
}

fn reconstruct_pressure(part: &DomainPartition, params: &ModelParams, v1: &VectorField, v2: &VectorField) -> ScalarField {
    let s = part.spec();
    let d1 = divergence(v1);
    let d2 = divergence(v2);
    let mut p = ScalarField::zeros(s);
    for j in 0..s.ny {
        for i in 0..s.nx {
            let val = match part.region(i, j) {
                Region::Void => 0.0,
                Region::One => params.p1_star - d1.at(i, j) / params.g1,
                Region::Two => params.p2_star - d2.at(i, j) / params.g2,
            };
            p.set(i, j, val);
        }
    }
    p
}

fn masked_q(part: &DomainPartition, q: &ScalarField) -> ScalarField {
    let mut out = q.clone();
    for (k, v) in out.values.iter_mut().enumerate() {
        if part.chi1.values[k] == 0.0 && part.chi2.values[k] == 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Solves the two-tissue stationary system for a given `q`.
pub fn solve_stationary(
    part: &DomainPartition,
    params: &ModelParams,
    q: &ScalarField,
    cfg: &SolverConfig,
) -> Result<StationarySolution> {
    solve_stationary_from(part, params, q, cfg, None)
}

/// As [`solve_stationary`], warm-started from a previous solution.
pub fn solve_stationary_from(
    part: &DomainPartition,
    params: &ModelParams,
    q: &ScalarField,
    cfg: &SolverConfig,
    previous: Option<(&VectorField, &VectorField)>,
) -> Result<StationarySolution> {
    let sys = assemble_weak_form(part, params, q)?;
    let guess = previous.map(|(a, b)| sys.pack(a, b));
    let (x, stats) = sys.solve(cfg, guess.as_deref())?;
    let (v1, v2) = sys.unpack(&x);
    Ok(StationarySolution {
        p: reconstruct_pressure(part, params, &v1, &v2),
        q: masked_q(part, q),
        v1,
        v2,
        params: *params,
        coercivity: sys.coercivity,
        stats,
        species: 2,
    })
}

/// One-tissue stationary problem on `part.chi1`. Elliptic for every
/// `beta1, g1 > 0`.
pub fn solve_single_species(part: &DomainPartition, params: &ModelParams, cfg: &SolverConfig) -> Result<StationarySolution> {
    let sys = assemble_single_species(part, params)?;
    let (x, stats) = sys.solve(cfg, None)?;
    let (v1, v2) = sys.unpack(&x);
    Ok(StationarySolution {
        p: reconstruct_pressure(part, params, &v1, &v2),
        q: ScalarField::zeros(part.spec()),
        v1,
        v2,
        params: *params,
        coercivity: sys.coercivity,
        stats,
        species: 1,
    })
}

/// Discrete Dirichlet energy `<-Δ_h v, v>` of a face field.
pub fn gradient_energy(v: &VectorField) -> f64 {
    HelmholtzOperator::new(v.spec, 1.0).map(|op| op.grad_norm_sq(v)).unwrap_or(0.0)
}

// ---------------------------------------------------------------------------
// Traces and jumps

/// Jump measurement quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JumpQuantity {
    Pressure,
    /// Velocity of tissue 1 itself; the jump is the Euclidean norm.
    V1,
    V2,
    /// Normal component of `∂_ν v_1`.
    GradV1Normal,
    GradV2Normal,
}

impl JumpQuantity {
    pub fn name(self) -> &'static str {
        match self {
            JumpQuantity::Pressure => "pressure",
            JumpQuantity::V1 => "v1",
            JumpQuantity::V2 => "v2",
            JumpQuantity::GradV1Normal => "grad_v1_normal",
            JumpQuantity::GradV2Normal => "grad_v2_normal",
        }
    }
}

/// Extrapolation order of one-sided traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceOrder {
    /// Two nearest samples.
    #[default]
    Linear,
    /// Three nearest samples.
    Quadratic,
}

impl TraceOrder {
    fn points(self) -> usize {
        match self {
            TraceOrder::Linear => 2,
            TraceOrder::Quadratic => 3,
        }
    }
}

/// How interface normals are chosen when tracing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalMode {
    /// Axis normal of the staircase face; samples sit on grid nodes.
    #[default]
    Axis,
    /// Normal of the level fields at the face; samples are bilinear
    /// interpolants along that normal line.
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TraceOptions {
    pub order: TraceOrder,
    pub normals: NormalMode,
    /// Geometric mode only: samples skip this many spacings next to the
    /// interface before the first one is taken.
    pub standoff: u32,
}

impl TraceOptions {
    /// Geometric normals, linear traces, one spacing of standoff.
    pub fn geometric() -> Self {
        Self { order: TraceOrder::Linear, normals: NormalMode::Geometric, standoff: 1 }
    }
}

impl From<TraceOrder> for TraceOptions {
    fn from(order: TraceOrder) -> Self {
        Self { order, ..Self::default() }
    }
}

/// Bilinear interpolation of samples on the lattice
/// `(x0 + a hx, y0 + b hy)`, `a < na`, `b < nb`, clamped to its hull.
fn bilinear(values: &[f64], na: usize, nb: usize, origin: (f64, f64), h: (f64, f64), p: (f64, f64)) -> f64 {
    let axis = |c: f64, o: f64, h: f64, n: usize| {
        let t = ((c - o) / h).clamp(0.0, (n - 1) as f64);
        let a = (t.floor() as usize).min(n.saturating_sub(2));
        (a, t - a as f64)
    };
    let (a, ta) = axis(p.0, origin.0, h.0, na);
    let (b, tb) = axis(p.1, origin.1, h.1, nb);
    let at = |a: usize, b: usize| values[b.min(nb - 1) * na + a.min(na - 1)];
    (1.0 - tb) * ((1.0 - ta) * at(a, b) + ta * at(a + 1, b)) + tb * ((1.0 - ta) * at(a, b + 1) + ta * at(a + 1, b + 1))
}

fn sample_cell(f: &ScalarField, p: (f64, f64)) -> f64 {
    let s = f.spec;
    bilinear(&f.values, s.nx, s.ny, (s.xc(0), s.yc(0)), (s.hx, s.hy), p)
}

fn sample_velocity(v: &VectorField, p: (f64, f64)) -> (f64, f64) {
    let s = v.spec;
    (
        bilinear(&v.u, s.nx + 1, s.ny, (s.x_min, s.yc(0)), (s.hx, s.hy), p),
        bilinear(&v.v, s.nx, s.ny + 1, (s.xc(0), s.y_min), (s.hx, s.hy), p),
    )
}

/// Lagrange extrapolation to 0 from samples at `first, first + 1, ...`
/// (in units of the spacing).
fn extrapolate_to_zero(values: &[f64], first: f64) -> f64 {
    let n = values.len();
    let mut sum = 0.0;
    for a in 0..n {
        let xa = first + a as f64;
        let mut w = 1.0;
        for b in 0..n {
            if a != b {
                let xb = first + b as f64;
                w *= (0.0 - xb) / (xa - xb);
            }
        }
        sum += w * values[a];
    }
    sum
}

/// Traces at an interface face as `[inside, outside]` pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideTraces {
    /// Normal velocity component `v·ν` and tangential `v·τ`, `τ = (-ν_y, ν_x)`.
    pub v_normal: [f64; 2],
    pub v_tangential: [f64; 2],
    /// `∂_ν (v·ν)` and `∂_ν (v·τ)`.
    pub dv_normal: [f64; 2],
    pub dv_tangential: [f64; 2],
}

struct Probe<'a> {
    part: &'a DomainPartition,
    face: &'a InterfaceFace,
    order: TraceOrder,
    geometric: bool,
    standoff: f64,
    normal: (f64, f64),
}

impl<'a> Probe<'a> {
    fn new(part: &'a DomainPartition, face: &'a InterfaceFace, opts: TraceOptions) -> Self {
        let mut probe = Probe { part, face, order: opts.order, geometric: false, standoff: opts.standoff as f64, normal: face.normal };
        if opts.normals == NormalMode::Geometric {
            if let Some(n) = probe.level_normal() {
                probe.geometric = true;
                probe.normal = n;
            }
        }
        probe
    }

    /// Unit normal of the level function of the inside region at the face,
    /// oriented like the face normal.
    fn level_normal(&self) -> Option<(f64, f64)> {
        let s = self.part.spec();
        let phi = match self.face.kind {
            InterfaceKind::Gamma => self.part.level1.zip_map(&self.part.level2, |a, b| a - b),
            InterfaceKind::Gamma1 => self.part.level1.clone(),
            InterfaceKind::Gamma2 => self.part.level2.clone(),
        };
        let (x, y) = (self.face.x, self.face.y);
        let gx = (sample_cell(&phi, (x + s.hx, y)) - sample_cell(&phi, (x - s.hx, y))) / (2.0 * s.hx);
        let gy = (sample_cell(&phi, (x, y + s.hy)) - sample_cell(&phi, (x, y - s.hy))) / (2.0 * s.hy);
        let norm = gx.hypot(gy);
        if norm < 1e-12 {
            return None;
        }
        let (nx, ny) = (gx / norm, gy / norm);
        let (ax, ay) = self.face.normal;
        let dot = nx * ax + ny * ay;
        if dot.abs() < 1e-3 {
            return None;
        }
        Some(if dot > 0.0 { (nx, ny) } else { (-nx, -ny) })
    }

    /// Point at `d + standoff` spacings along the normal line.
    fn point(&self, outside: bool, d: f64) -> (f64, f64) {
        let d = d + self.standoff * self.spacing();
        let sgn = if outside { 1.0 } else { -1.0 };
        (self.face.x + sgn * d * self.normal.0, self.face.y + sgn * d * self.normal.1)
    }

    /// The four cells of the bilinear stencil of `p` lie in `r`.
    fn point_in(&self, p: (f64, f64), r: Region) -> bool {
        let s = self.part.spec();
        let ci = ((p.0 - s.xc(0)) / s.hx).floor() as i64;
        let cj = ((p.1 - s.yc(0)) / s.hy).floor() as i64;
        (0..=1).all(|di| {
            (0..=1).all(|dj| {
                let (i, j) = (ci + di, cj + dj);
                i >= 0 && j >= 0 && (i as usize) < s.nx && (j as usize) < s.ny && self.part.region(i as usize, j as usize) == r
            })
        })
    }

    /// Cell `k` steps (1-based) away from the face on the inside
    /// (`outside = false`) or outside.
    fn cell(&self, outside: bool, k: usize) -> Option<(usize, usize)> {
        let s = self.part.spec();
        let (nx, ny) = (self.face.normal.0, self.face.normal.1);
        // +1 when the step points in the positive axis direction
        let dir = if (nx + ny > 0.0) == outside { 1i64 } else { -1i64 };
        let (i, j) = (self.face.i as i64, self.face.j as i64);
        let (ci, cj) = if self.face.x_face {
            (if dir > 0 { i + k as i64 - 1 } else { i - k as i64 }, j)
        } else {
            (i, if dir > 0 { j + k as i64 - 1 } else { j - k as i64 })
        };
        if ci < 0 || cj < 0 || ci >= s.nx as i64 || cj >= s.ny as i64 {
            None
        } else {
            Some((ci as usize, cj as usize))
        }
    }

    fn side_region(&self, outside: bool) -> Option<Region> {
        self.cell(outside, 1).map(|(i, j)| self.part.region(i, j))
    }

    /// True when `n` consecutive cells on the side stay in its region.
    fn side_ok(&self, outside: bool, n: usize) -> bool {
        let Some(r) = self.side_region(outside) else { return false };
        (1..=n).all(|k| self.cell(outside, k).is_some_and(|(i, j)| self.part.region(i, j) == r))
    }

    fn cells_needed(&self) -> usize {
        self.order.points() + 1
    }

    fn traceable(&self) -> bool {
        if self.geometric {
            let h = self.spacing();
            return [false, true].into_iter().all(|outside| {
                self.side_region(outside)
                    .is_some_and(|r| (1..=self.cells_needed()).all(|k| self.point_in(self.point(outside, k as f64 * h), r)))
            });
        }
        self.side_ok(false, self.cells_needed()) && self.side_ok(true, self.cells_needed())
    }

    fn spacing(&self) -> f64 {
        let s = self.part.spec();
        if self.face.x_face {
            s.hx
        } else {
            s.hy
        }
    }

    /// Trace of a cell-centered field.
    fn cell_trace(&self, f: &ScalarField, outside: bool) -> f64 {
        if self.geometric {
            let h = self.spacing();
            let vals: Vec<f64> = (1..=self.order.points()).map(|k| sample_cell(f, self.point(outside, k as f64 * h))).collect();
            return extrapolate_to_zero(&vals, 1.0 + self.standoff);
        }
        let vals: Vec<f64> = (1..=self.order.points())
            .map(|k| {
                let (i, j) = self.cell(outside, k).expect("traceable face");
                f.at(i, j)
            })
            .collect();
        extrapolate_to_zero(&vals, 0.5)
    }

    /// Normal velocity component on the faces along the normal line, the
    /// interface face first (`k = 0`).
    fn normal_face_value(&self, v: &VectorField, outside: bool, k: usize) -> f64 {
        let s = v.spec;
        let sign = self.face.normal.0 + self.face.normal.1;
        let step_positive = (sign > 0.0) == outside;
        let off = |base: usize| if step_positive { base + k } else { base - k };
        let raw = if self.face.x_face {
            v.u[s.u_idx(off(self.face.i), self.face.j)]
        } else {
            v.v[s.v_idx(self.face.i, off(self.face.j))]
        };
        raw * sign
    }

    /// Tangential component `v·τ` averaged to the center of cell `k`.
    fn tangential_cell_value(&self, v: &VectorField, outside: bool, k: usize) -> f64 {
        let (i, j) = self.cell(outside, k).expect("traceable face");
        let (cu, cv) = v.cell_center(i, j);
        let (nx, ny) = self.face.normal;
        -ny * cu + nx * cv
    }

    /// `(v·ν, v·τ, ∂_ν(v·ν), ∂_ν(v·τ))` traced from one side.
    /// Geometric counterpart of `side`: `(v·ν, v·τ)` sampled at distances
    /// `h, 2h, ...` along the normal line.
    fn side_geometric(&self, v: &VectorField, outside: bool) -> [f64; 4] {
        let n = self.order.points();
        let h = self.spacing();
        let sgn = if outside { 1.0 } else { -1.0 };
        let (nx, ny) = self.normal;
        let samples: Vec<(f64, f64)> = (1..=n + 1)
            .map(|k| {
                let (a, b) = sample_velocity(v, self.point(outside, k as f64 * h));
                (nx * a + ny * b, -ny * a + nx * b)
            })
            .collect();
        let vn: Vec<f64> = samples[..n].iter().map(|s| s.0).collect();
        let vt: Vec<f64> = samples[..n].iter().map(|s| s.1).collect();
        let dvn: Vec<f64> = samples.windows(2).map(|w| sgn * (w[1].0 - w[0].0) / h).collect();
        let dvt: Vec<f64> = samples.windows(2).map(|w| sgn * (w[1].1 - w[0].1) / h).collect();
        [
            extrapolate_to_zero(&vn, 1.0 + self.standoff),
            extrapolate_to_zero(&vt, 1.0 + self.standoff),
            extrapolate_to_zero(&dvn, 1.5 + self.standoff),
            extrapolate_to_zero(&dvt, 1.5 + self.standoff),
        ]
    }

    fn side(&self, v: &VectorField, outside: bool) -> [f64; 4] {
        if self.geometric {
            return self.side_geometric(v, outside);
        }
        let n = self.order.points();
        let h = self.spacing();
        // ξ runs along ν, so inside samples sit at negative ξ
        let sgn = if outside { 1.0 } else { -1.0 };
        let vn: Vec<f64> = (1..=n).map(|k| self.normal_face_value(v, outside, k)).collect();
        let vt: Vec<f64> = (1..=n).map(|k| self.tangential_cell_value(v, outside, k)).collect();
        let dvn: Vec<f64> = (0..n)
            .map(|k| sgn * (self.normal_face_value(v, outside, k + 1) - self.normal_face_value(v, outside, k)) / h)
            .collect();
        let dvt: Vec<f64> = (1..=n)
            .map(|k| sgn * (self.tangential_cell_value(v, outside, k + 1) - self.tangential_cell_value(v, outside, k)) / h)
            .collect();
        [
            extrapolate_to_zero(&vn, 1.0),
            extrapolate_to_zero(&vt, 0.5),
            extrapolate_to_zero(&dvn, 0.5),
            extrapolate_to_zero(&dvt, 1.0),
        ]
    }

    fn traces(&self, v: &VectorField) -> SideTraces {
        let a = self.side(v, false);
        let b = self.side(v, true);
        SideTraces {
            v_normal: [a[0], b[0]],
            v_tangential: [a[1], b[1]],
            dv_normal: [a[2], b[2]],
            dv_tangential: [a[3], b[3]],
        }
    }
}

/// One row of a jump table.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRow {
    pub interface: InterfaceKind,
    pub face_index: usize,
    pub x: f64,
    pub y: f64,
    pub normal: (f64, f64),
    pub quantity: JumpQuantity,
    /// Inside and outside traces; `None` for untraceable faces.
    pub traces: Option<(f64, f64)>,
    pub jump: f64,
    pub predicted_jump: f64,
    pub residual: f64,
}

impl JumpRow {
    pub fn traceable(&self) -> bool {
        self.traces.is_some()
    }
}

/// Interface-wise aggregates over traceable faces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpSummary {
    pub interface: InterfaceKind,
    pub faces: usize,
    pub traced: usize,
    pub mean_abs_jump: f64,
    pub max_abs_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpTable {
    pub quantity: JumpQuantity,
    pub rows: Vec<JumpRow>,
}

impl JumpTable {
    pub fn summary(&self, kind: InterfaceKind) -> JumpSummary {
        let rows: Vec<&JumpRow> = self.rows.iter().filter(|r| r.interface == kind).collect();
        let traced: Vec<&&JumpRow> = rows.iter().filter(|r| r.traceable()).collect();
        let mean = if traced.is_empty() {
            0.0
        } else {
            traced.iter().map(|r| r.jump.abs()).sum::<f64>() / traced.len() as f64
        };
        JumpSummary {
            interface: kind,
            faces: rows.len(),
            traced: traced.len(),
            mean_abs_jump: mean,
            max_abs_residual: traced.iter().map(|r| r.residual.abs()).fold(0.0, f64::max),
        }
    }

    /// Aggregate over several interface kinds at once.
    pub fn summary_over(&self, kinds: &[InterfaceKind]) -> JumpSummary {
        let traced: Vec<&JumpRow> = self.rows.iter().filter(|r| kinds.contains(&r.interface) && r.traceable()).collect();
        let faces = self.rows.iter().filter(|r| kinds.contains(&r.interface)).count();
        JumpSummary {
            interface: kinds.first().copied().unwrap_or(InterfaceKind::Gamma),
            faces,
            traced: traced.len(),
            mean_abs_jump: if traced.is_empty() {
                0.0
            } else {
                traced.iter().map(|r| r.jump.abs()).sum::<f64>() / traced.len() as f64
            },
            max_abs_residual: traced.iter().map(|r| r.residual.abs()).fold(0.0, f64::max),
        }
    }
}

pub const JUMP_HEADER: &str = "interface,face_index,x,y,nx,ny,quantity,left_trace,right_trace,jump,predicted_jump,residual";

fn fmt_num(v: f64) -> String {
    format!("{v:.17e}")
}

pub fn jump_rows_to_csv(rows: &[JumpRow]) -> String {
    let mut out = String::from(JUMP_HEADER);
    out.push('\n');
    for r in rows {
        let (l, rt, j, p, res) = match r.traces {
            Some((a, b)) => (fmt_num(a), fmt_num(b), fmt_num(r.jump), fmt_num(r.predicted_jump), fmt_num(r.residual)),
            None => (String::new(), String::new(), String::new(), String::new(), "untraceable".to_string()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.interface.name(),
            r.face_index,
            fmt_num(r.x),
            fmt_num(r.y),
            r.normal.0,
            r.normal.1,
            r.quantity.name(),
            l,
            rt,
            j,
            p,
            res
        );
    }
    out
}

/// Per-face jumps of `quantity` across every interface of `part`.
///
/// * `Pressure`: jump of the rebuilt pressure; predicted by
///   `β_1 [∂_ν v_1]·ν`.
/// * `GradViNormal`: jump of `∂_ν (v_i·ν)`; predicted by `[P_i] / β_i`, the
///   residual is `β_i [∂_ν v_i]·ν - [P_i]`.
/// * `Vi`: Euclidean norm of the velocity jump; predicted 0.
pub fn measure_jump(
    sol: &StationarySolution,
    part: &DomainPartition,
    quantity: JumpQuantity,
    opts: impl Into<TraceOptions>,
) -> JumpTable {
    let opts = opts.into();
    let faces = part.interfaces();
    let p1 = sol.tissue_pressure(part, Tissue::One);
    let p2 = sol.tissue_pressure(part, Tissue::Two);
    let params = &sol.params;
    let rows = faces
        .iter()
        .enumerate()
        .map(|(idx, f)| {
            let probe = Probe::new(part, f, opts);
            let mut row = JumpRow {
                interface: f.kind,
                face_index: idx,
                x: f.x,
                y: f.y,
                normal: probe.normal,
                quantity,
                traces: None,
                jump: f64::NAN,
                predicted_jump: f64::NAN,
                residual: f64::NAN,
            };
            if !probe.traceable() {
                return row;
            }
            let pair = |field: &ScalarField| (probe.cell_trace(field, false), probe.cell_trace(field, true));
            match quantity {
                JumpQuantity::Pressure => {
                    let (a, b) = pair(&sol.p);
                    let t1 = probe.traces(&sol.v1);
                    row.traces = Some((a, b));
                    row.jump = a - b;
                    row.predicted_jump = params.beta1 * (t1.dv_normal[0] - t1.dv_normal[1]);
                    row.residual = row.jump - row.predicted_jump;
                }
                JumpQuantity::GradV1Normal | JumpQuantity::GradV2Normal => {
                    let (v, pi, beta) = if quantity == JumpQuantity::GradV1Normal {
                        (&sol.v1, &p1, params.beta1)
                    } else {
                        (&sol.v2, &p2, params.beta2)
                    };
                    let t = probe.traces(v);
                    let (pa, pb) = pair(pi);
                    row.traces = Some((t.dv_normal[0], t.dv_normal[1]));
                    row.jump = t.dv_normal[0] - t.dv_normal[1];
                    row.predicted_jump = (pa - pb) / beta;
                    row.residual = beta * row.jump - (pa - pb);
                }
                JumpQuantity::V1 | JumpQuantity::V2 => {
                    let v = if quantity == JumpQuantity::V1 { &sol.v1 } else { &sol.v2 };
                    let t = probe.traces(v);
                    let dn = t.v_normal[0] - t.v_normal[1];
                    let dt = t.v_tangential[0] - t.v_tangential[1];
                    row.traces = Some((t.v_normal[0], t.v_normal[1]));
                    row.jump = dn.hypot(dt);
                    row.predicted_jump = 0.0;
                    row.residual = row.jump;
                }
            }
            row
        })
        .collect();
    JumpTable { quantity, rows }
}

/// Residual of one transmission condition at one face.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionRow {
    pub interface: InterfaceKind,
    pub face_index: usize,
    pub condition: &'static str,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionReport {
    pub rows: Vec<TransmissionRow>,
    pub untraceable_faces: usize,
}

impl TransmissionReport {
    /// Largest residual magnitude of `condition` on interface `kind`, or
    /// `None` when no face was traced.
    pub fn max_residual(&self, kind: InterfaceKind, condition: &str) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.interface == kind && r.condition == condition)
            .map(|r| r.residual.abs())
            .reduce(f64::max)
    }

    pub fn conditions(&self) -> Vec<&'static str> {
        let mut c: Vec<&'static str> = self.rows.iter().map(|r| r.condition).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("interface,face_index,condition,residual\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{:.17e}", r.interface.name(), r.face_index, r.condition, r.residual);
        }
        out
    }
}

/// Discrete residuals of the interface conditions: for each tissue `i`
/// present, the normal flux balance `β_i [∂_ν v_i]·ν - [P_i]`, the
/// tangential balance `β_i [∂_ν v_i]·τ`, the velocity continuity `|[v_i]|`,
/// and on tissue-tissue faces the normal-velocity match `v_1·ν - v_2·ν`.
/// The same schema is used whatever `q` is.
pub fn verify_transmission(sol: &StationarySolution, part: &DomainPartition, opts: impl Into<TraceOptions>) -> TransmissionReport {
    let opts = opts.into();
    let faces = part.interfaces();
    let tissues: &[Tissue] = if sol.species == 1 { &[Tissue::One] } else { &[Tissue::One, Tissue::Two] };
    let pressures = [sol.tissue_pressure(part, Tissue::One), sol.tissue_pressure(part, Tissue::Two)];
    let mut rows = Vec::new();
    let mut untraceable = 0;
    for (idx, f) in faces.iter().enumerate() {
        let probe = Probe::new(part, f, opts);
        if !probe.traceable() {
            untraceable += 1;
            continue;
        }
        for &t in tissues {
            let beta = sol.params.beta(t);
            let tr = probe.traces(sol.velocity(t));
            let pi = &pressures[t.index() - 1];
            let jp = probe.cell_trace(pi, false) - probe.cell_trace(pi, true);
            let (flux_n, flux_t, cont) = match t {
                Tissue::One => ("flux_v1_normal", "flux_v1_tangential", "continuity_v1"),
                Tissue::Two => ("flux_v2_normal", "flux_v2_tangential", "continuity_v2"),
            };
            let mut push = |condition, residual| rows.push(TransmissionRow { interface: f.kind, face_index: idx, condition, residual });
            push(flux_n, beta * (tr.dv_normal[0] - tr.dv_normal[1]) - jp);
            push(flux_t, beta * (tr.dv_tangential[0] - tr.dv_tangential[1]));
            push(cont, (tr.v_normal[0] - tr.v_normal[1]).hypot(tr.v_tangential[0] - tr.v_tangential[1]));
        }
        if f.kind == InterfaceKind::Gamma && sol.species == 2 {
            let s = part.spec();
            let sign = f.normal.0 + f.normal.1;
            let (a, b) = if f.x_face {
                (sol.v1.u[s.u_idx(f.i, f.j)], sol.v2.u[s.u_idx(f.i, f.j)])
            } else {
                (sol.v1.v[s.v_idx(f.i, f.j)], sol.v2.v[s.v_idx(f.i, f.j)])
            };
            rows.push(TransmissionRow { interface: f.kind, face_index: idx, condition: "normal_velocity", residual: sign * (a - b) });
        }
    }
    TransmissionReport { rows, untraceable_faces: untraceable }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_spec(n: usize) -> GridSpec {
        GridSpec::unit_square(n, n).unwrap()
    }

    fn unit_params() -> ModelParams {
        ModelParams { beta1: 1.0, beta2: 1.0, g1: 1.0, g2: 1.0, p1_star: 5.0, p2_star: 10.0, ..ModelParams::default() }
    }

    #[test]
    fn partition_checks() {
        let s = box_spec(8);
        let one = ScalarField::constant(s, 1.0);
        assert!(DomainPartition::new(one.clone(), one.clone()).is_err());
        assert!(DomainPartition::new(one.map(|_| 0.5), ScalarField::zeros(s)).is_err());
        let part = DomainPartition::concentric(s, 0.3, 0.6);
        assert!(DomainPartition::new(part.chi1.clone(), part.chi2.clone()).is_ok());
        assert!(part.check_wall_clearance(2).is_ok());
        let touching = DomainPartition::from_fn(s, |x, _| if x < 0.0 { Region::One } else { Region::Void });
        assert_eq!(touching.wall_clearance(), Some(0));
        assert!(touching.check_wall_clearance(2).is_err());
    }

    #[test]
    fn interface_normals_point_out_of_inside_region() {
        let s = box_spec(8);
        let part = DomainPartition::from_fn(s, |x, y| {
            if x.abs() < 0.5 && y.abs() < 0.5 {
                if x < 0.0 {
                    Region::One
                } else {
                    Region::Two
                }
            } else {
                Region::Void
            }
        });
        let faces = part.interfaces();
        let gamma: Vec<_> = faces.iter().filter(|f| f.kind == InterfaceKind::Gamma).collect();
        assert_eq!(gamma.len(), 4);
        assert!(gamma.iter().all(|f| f.normal == (1.0, 0.0) && f.x == 0.0));
        for f in faces.iter().filter(|f| f.kind == InterfaceKind::Gamma1 && f.x_face) {
            assert_eq!(f.normal, (-1.0, 0.0));
        }
        for f in faces.iter().filter(|f| f.kind == InterfaceKind::Gamma2 && f.x_face) {
            assert_eq!(f.normal, (1.0, 0.0));
        }
    }

    #[test]
    fn zero_load_gives_zero_velocity() {
        let s = box_spec(12);
        let part = DomainPartition::concentric(s, 0.3, 0.6);
        let params = ModelParams { p1_star: 0.0, p2_star: 0.0, ..unit_params() };
        let sol = solve_stationary(&part, &params, &ScalarField::zeros(s), &SolverConfig::default()).unwrap();
        assert_eq!(sol.v1.max_abs(), 0.0);
        assert_eq!(sol.v2.max_abs(), 0.0);
    }

    #[test]
    fn iterative_matches_direct() {
        let s = box_spec(12);
        let part = DomainPartition::concentric(s, 0.3, 0.6);
        let q = ScalarField::constant(s, 0.7);
        let a = solve_stationary(&part, &unit_params(), &q, &SolverConfig::default()).unwrap();
        let b = solve_stationary(&part, &unit_params(), &q, &SolverConfig::direct()).unwrap();
        assert!(a.v1.axpy(-1.0, &b.v1).max_abs() < 1e-8 * b.v1.max_abs());
        assert!(a.v2.axpy(-1.0, &b.v2).max_abs() < 1e-8 * b.v2.max_abs());
    }

    #[test]
    fn weak_form_holds_for_test_fields() {
        let s = box_spec(10);
        let part = DomainPartition::concentric(s, 0.3, 0.6);
        let q = ScalarField::zeros(s);
        let sys = assemble_weak_form(&part, &unit_params(), &q).unwrap();
        let (x, _) = sys.solve(&SolverConfig::direct(), None).unwrap();
        let (v1, v2) = sys.unpack(&x);
        let phi1 = VectorField::from_fn_dirichlet(s, |x, y| (x * y, (3.0 * x).sin()));
        let phi2 = VectorField::from_fn_dirichlet(s, |x, y| (y * y - 0.1, x - y));
        let lhs = sys.bilinear((&v1, &v2), (&phi1, &phi2));
        let rhs = sys.linear((&phi1, &phi2));
        assert!((lhs - rhs).abs() < 1e-10 * rhs.abs().max(1.0));
    }

    #[test]
    fn single_species_is_the_decoupled_block() {
        let s = box_spec(12);
        let part = DomainPartition::from_fn(s, |x, y| if x * x + y * y < 0.25 { Region::One } else { Region::Void });
        let weak = ModelParams { beta1: 0.01, g1: 0.05, ..unit_params() };
        let single = solve_single_species(&part, &weak, &SolverConfig::default()).unwrap();
        let both = solve_stationary(&part, &weak, &ScalarField::zeros(s), &SolverConfig::default()).unwrap();
        assert!(single.v1.axpy(-1.0, &both.v1).max_abs() < 1e-7 * both.v1.max_abs());
        assert_eq!(single.v2.max_abs(), 0.0);
    }

    #[test]
    fn extrapolation_is_exact_for_polynomials() {
        let f = |x: f64| 2.0 - 3.0 * x;
        assert!((extrapolate_to_zero(&[f(0.5), f(1.5)], 0.5) - 2.0).abs() < 1e-14);
        let g = |x: f64| 1.0 + x + x * x;
        assert!((extrapolate_to_zero(&[g(1.0), g(2.0), g(3.0)], 1.0) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn pressure_jumps_in_the_resting_regime() {
        // with no load the velocity vanishes, so traces reduce to p* values
        let s = box_spec(24);
        let part = DomainPartition::from_fn(s, |x, y| {
            if y.abs() < 0.6 && x > -0.7 && x < 0.0 {
                Region::One
            } else if y.abs() < 0.6 && (0.0..0.7).contains(&x) {
                Region::Two
            } else {
                Region::Void
            }
        });
        let params = unit_params();
        let sol = StationarySolution {
            v1: VectorField::zeros(s),
            v2: VectorField::zeros(s),
            p: reconstruct_pressure(&part, &params, &VectorField::zeros(s), &VectorField::zeros(s)),
            q: ScalarField::zeros(s),
            params,
            coercivity: coercivity_check(&params),
            stats: SolveStats { iterations: 0, rel_residual: 0.0 },
            species: 2,
        };
        let t = measure_jump(&sol, &part, JumpQuantity::Pressure, TraceOrder::Linear);
        for (kind, expected) in [(InterfaceKind::Gamma1, 5.0), (InterfaceKind::Gamma2, 10.0), (InterfaceKind::Gamma, -5.0)] {
            let traced: Vec<_> = t.rows.iter().filter(|r| r.interface == kind && r.traceable()).collect();
            assert!(!traced.is_empty());
            assert!(traced.iter().all(|r| (r.jump - expected).abs() < 1e-12), "{kind:?}");
        }
    }
}
