//! Brinkman velocity law `-beta Δv + v = -∇p` with no-slip walls.
//!
//! On the MAC grid the operator acts on each velocity component
//! independently, so the x-faces and the y-faces are two decoupled SPD
//! systems. Wall-normal faces are fixed to zero; wall-tangential neighbors
//! use a negated ghost value, which places the zero on the wall itself.

use crate::error::{Error, Result};
use crate::grid::{gradient, GridSpec, ScalarField, VectorField};
use crate::linalg::{pcg, solve_banded_spd, CsrMatrix, SolveStats, SolverMethod, TripletBuilder};

pub use crate::linalg::SolverConfig;

/// Assembled `-beta Δ_h + I` for both face families of a grid.
#[derive(Debug, Clone)]
pub struct HelmholtzOperator {
    pub spec: GridSpec,
    pub beta: f64,
    pub u_matrix: CsrMatrix,
    pub v_matrix: CsrMatrix,
}

/// Unknown numbering of the interior x-faces (i in 1..nx, all rows).
pub(crate) fn u_unknown(spec: &GridSpec, i: usize, j: usize) -> usize {
    j * (spec.nx - 1) + (i - 1)
}

/// Unknown numbering of the interior y-faces (j in 1..ny, all columns).
pub(crate) fn v_unknown(spec: &GridSpec, i: usize, j: usize) -> usize {
    (j - 1) * spec.nx + i
}

pub(crate) fn n_u_unknowns(spec: &GridSpec) -> usize {
    (spec.nx - 1) * spec.ny
}

pub(crate) fn n_v_unknowns(spec: &GridSpec) -> usize {
    spec.nx * (spec.ny - 1)
}

/// Pushes the stencil of `scale * (-Δ_h)` for one face family into `t`.
/// `along` runs over the face-normal direction (Dirichlet faces at both
/// ends), `across` over the tangential one (ghost reflection at the walls).
pub(crate) fn push_face_laplacian(
    t: &mut TripletBuilder,
    spec: &GridSpec,
    x_faces: bool,
    scale: f64,
    row_offset: usize,
    col_offset: usize,
) {
    let (ihx2, ihy2) = (scale / (spec.hx * spec.hx), scale / (spec.hy * spec.hy));
    if x_faces {
        for j in 0..spec.ny {
            for i in 1..spec.nx {
                let r = row_offset + u_unknown(spec, i, j);
                let mut diag = 2.0 * ihx2;
                if i > 1 {
                    t.push(r, col_offset + u_unknown(spec, i - 1, j), -ihx2);
                }
                if i + 1 < spec.nx {
                    t.push(r, col_offset + u_unknown(spec, i + 1, j), -ihx2);
                }
                for (nb, exists) in [(j.wrapping_sub(1), j > 0), (j + 1, j + 1 < spec.ny)] {
                    if exists {
                        diag += ihy2;
                        t.push(r, col_offset + u_unknown(spec, i, nb), -ihy2);
                    } else {
                        diag += 2.0 * ihy2;
                    }
                }
                t.push(r, col_offset + u_unknown(spec, i, j), diag);
            }
        }
    } else {
        for j in 1..spec.ny {
            for i in 0..spec.nx {
                let r = row_offset + v_unknown(spec, i, j);
                let mut diag = 2.0 * ihy2;
                if j > 1 {
                    t.push(r, col_offset + v_unknown(spec, i, j - 1), -ihy2);
                }
                if j + 1 < spec.ny {
                    t.push(r, col_offset + v_unknown(spec, i, j + 1), -ihy2);
                }
                for (nb, exists) in [(i.wrapping_sub(1), i > 0), (i + 1, i + 1 < spec.nx)] {
                    if exists {
                        diag += ihx2;
                        t.push(r, col_offset + v_unknown(spec, nb, j), -ihx2);
                    } else {
                        diag += 2.0 * ihx2;
                    }
                }
                t.push(r, col_offset + v_unknown(spec, i, j), diag);
            }
        }
    }
}

pub(crate) fn pack_u(f: &VectorField) -> Vec<f64> {
    let s = f.spec;
    let mut out = vec![0.0; n_u_unknowns(&s)];
    for j in 0..s.ny {
        for i in 1..s.nx {
            out[u_unknown(&s, i, j)] = f.u[s.u_idx(i, j)];
        }
    }
    out
}

pub(crate) fn pack_v(f: &VectorField) -> Vec<f64> {
    let s = f.spec;
    let mut out = vec![0.0; n_v_unknowns(&s)];
    for j in 1..s.ny {
        for i in 0..s.nx {
            out[v_unknown(&s, i, j)] = f.v[s.v_idx(i, j)];
        }
    }
    out
}

pub(crate) fn unpack(spec: GridSpec, u: &[f64], v: &[f64]) -> VectorField {
    let mut f = VectorField::zeros(spec);
    for j in 0..spec.ny {
        for i in 1..spec.nx {
            f.u[spec.u_idx(i, j)] = u[u_unknown(&spec, i, j)];
        }
    }
    for j in 1..spec.ny {
        for i in 0..spec.nx {
            f.v[spec.v_idx(i, j)] = v[v_unknown(&spec, i, j)];
        }
    }
    f
}

impl HelmholtzOperator {
    pub fn new(spec: GridSpec, beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::Params(format!("viscosity must be > 0, got {beta}")));
        }
        let build = |x_faces: bool, n: usize| {
            let mut t = TripletBuilder::new(n, n);
            push_face_laplacian(&mut t, &spec, x_faces, beta, 0, 0);
            for k in 0..n {
                t.push(k, k, 1.0);
            }
            t.build()
        };
        Ok(Self {
            spec,
            beta,
            u_matrix: build(true, n_u_unknowns(&spec)),
            v_matrix: build(false, n_v_unknowns(&spec)),
        })
    }

    /// `(-beta Δ_h + I) v` on interior faces; wall faces of the result are 0.
    pub fn apply(&self, v: &VectorField) -> VectorField {
        let u = self.u_matrix.mul_vec(&pack_u(v));
        let w = self.v_matrix.mul_vec(&pack_v(v));
        unpack(self.spec, &u, &w)
    }

    /// Discrete Dirichlet energy `<-Δ_h v, v>` (face-weighted).
    pub fn grad_norm_sq(&self, v: &VectorField) -> f64 {
        let av = self.apply(v);
        let mut inner = av.dot(v) - {
            let mut w = v.clone();
            w.zero_boundary();
            w.dot(&w)
        };
        inner /= self.beta;
        inner
    }

    /// Solves `(-beta Δ_h + I) v = f` on interior faces, warm-starting from
    /// `guess` when given.
    pub fn solve(&self, f: &VectorField, cfg: &SolverConfig, guess: Option<&VectorField>) -> Result<(VectorField, [SolveStats; 2])> {
        let s = self.spec;
        let bu = pack_u(f);
        let bv = pack_v(f);
        let (u, v, stats) = match cfg.method {
            SolverMethod::DirectBanded => {
                let u = solve_banded_spd(&self.u_matrix, &bu)?;
                let v = solve_banded_spd(&self.v_matrix, &bv)?;
                let st = SolveStats { iterations: 0, rel_residual: 0.0 };
                (u, v, [st, st])
            }
            SolverMethod::Iterative => {
                let max_iter = cfg.max_iter_for(s.nx, s.ny);
                let (mut u, mut v) = match guess {
                    Some(g) => (pack_u(g), pack_v(g)),
                    None => (vec![0.0; bu.len()], vec![0.0; bv.len()]),
                };
                let su = pcg(&self.u_matrix, &bu, &mut u, cfg.rel_tol, max_iter)?;
                let sv = pcg(&self.v_matrix, &bv, &mut v, cfg.rel_tol, max_iter)?;
                (u, v, [su, sv])
            }
        };
        Ok((unpack(s, &u, &v), stats))
    }
}

/// Brinkman velocity for pressure `p` with no-slip walls.
pub fn solve_brinkman(p: &ScalarField, beta: f64, cfg: &SolverConfig) -> Result<VectorField> {
    let op = HelmholtzOperator::new(p.spec, beta)?;
    let rhs = gradient(p).scale(-1.0);
    Ok(op.solve(&rhs, cfg, None)?.0)
}

/// Brinkman velocity with an arbitrary face forcing `f` in place of `-∇p`.
pub fn solve_brinkman_forced(f: &VectorField, beta: f64, cfg: &SolverConfig) -> Result<VectorField> {
    let op = HelmholtzOperator::new(f.spec, beta)?;
    Ok(op.solve(f, cfg, None)?.0)
}

/// Screened Poisson operator `-beta Δ_h + I` on cells with zero-flux walls.
#[derive(Debug, Clone)]
pub struct ScreenedPoisson {
    pub spec: GridSpec,
    pub beta: f64,
    pub matrix: CsrMatrix,
}

impl ScreenedPoisson {
    pub fn new(spec: GridSpec, beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::Params(format!("viscosity must be > 0, got {beta}")));
        }
        let n = spec.n_cells();
        let (ax, ay) = (beta / (spec.hx * spec.hx), beta / (spec.hy * spec.hy));
        let mut t = TripletBuilder::new(n, n);
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let r = spec.idx(i, j);
                let mut diag = 1.0;
                for (ok, ii, jj, a) in [
                    (i > 0, i.wrapping_sub(1), j, ax),
                    (i + 1 < spec.nx, i + 1, j, ax),
                    (j > 0, i, j.wrapping_sub(1), ay),
                    (j + 1 < spec.ny, i, j + 1, ay),
                ] {
                    if ok {
                        diag += a;
                        t.push(r, spec.idx(ii, jj), -a);
                    }
                }
                t.push(r, r, diag);
            }
        }
        Ok(Self { spec, beta, matrix: t.build() })
    }

    pub fn solve(&self, rhs: &ScalarField, cfg: &SolverConfig, guess: Option<&ScalarField>) -> Result<ScalarField> {
        let values = match cfg.method {
            SolverMethod::DirectBanded => solve_banded_spd(&self.matrix, &rhs.values)?,
            SolverMethod::Iterative => {
                let mut x = guess.map_or_else(|| vec![0.0; rhs.values.len()], |g| g.values.clone());
                pcg(&self.matrix, &rhs.values, &mut x, cfg.rel_tol, cfg.max_iter_for(self.spec.nx, self.spec.ny))?;
                x
            }
        };
        ScalarField::from_values(self.spec, values)
    }
}

/// Gradient-form velocity: solve `-beta ΔK + K = p` with zero-flux walls and
/// return `v = -∇K`, which is curl free by construction.
pub fn solve_brinkman_gradient_form(p: &ScalarField, beta: f64, cfg: &SolverConfig) -> Result<VectorField> {
    let potential = ScreenedPoisson::new(p.spec, beta)?.solve(p, cfg, None)?;
    Ok(gradient(&potential).scale(-1.0))
}

/// Residual `||(-beta Δ_h + I) v - f|| / ||f||` in the face-weighted norm.
pub fn relative_residual(op: &HelmholtzOperator, v: &VectorField, f: &VectorField) -> f64 {
    let mut f = f.clone();
    f.zero_boundary();
    let r = op.apply(v).axpy(-1.0, &f);
    let fn_ = f.norm_l2();
    if fn_ == 0.0 {
        r.norm_l2()
    } else {
        r.norm_l2() / fn_
    }
}
