//! Structured rectangular grid with MAC (staggered) field placement.
//!
//! Scalars live at cell centers. A [`VectorField`] stores its x-component on
//! vertical faces and its y-component on horizontal faces. Indexing is
//! row-major with `i` (x direction) running fastest.

use crate::error::{Error, Result};

/// Axis-aligned box discretized into `nx * ny` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::Grid(format!("need at least 4x4 cells, got {nx}x{ny}")));
        }
        if !(x_max > x_min) || !(y_max > y_min) {
            return Err(Error::Grid(format!(
                "empty box [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
            nx,
            ny,
            hx: (x_max - x_min) / nx as f64,
            hy: (y_max - y_min) / ny as f64,
        })
    }

    /// The square `[-1, 1]^2` with `nx * ny` cells.
    pub fn unit_square(nx: usize, ny: usize) -> Result<Self> {
        Self::new(-1.0, 1.0, -1.0, 1.0, nx, ny)
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    /// Index of the vertical face `i` (0..=nx) in row `j`.
    #[inline]
    pub fn u_idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j < self.ny);
        j * (self.nx + 1) + i
    }

    /// Index of the horizontal face `j` (0..=ny) in column `i`.
    #[inline]
    pub fn v_idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j <= self.ny);
        j * self.nx + i
    }

    pub fn xc(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.hx
    }

    pub fn yc(&self, j: usize) -> f64 {
        self.y_min + (j as f64 + 0.5) * self.hy
    }

    /// x coordinate of grid line `i` (0..=nx).
    pub fn xf(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.hx
    }

    /// y coordinate of grid line `j` (0..=ny).
    pub fn yf(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.hy
    }

    pub fn n_u(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn n_v(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    /// Same box with a different resolution.
    pub fn with_resolution(&self, nx: usize, ny: usize) -> Result<Self> {
        Self::new(self.x_min, self.x_max, self.y_min, self.y_max, nx, ny)
    }
}

/// Boundary condition realized by ghost cells in [`laplacian`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// Ghost mirrors the interior value (homogeneous Neumann).
    ZeroFlux,
    /// Ghost is the negated interior value (homogeneous Dirichlet on the wall).
    ZeroValue,
}

/// Cell-centered grid function.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(spec: GridSpec) -> Self {
        Self::constant(spec, 0.0)
    }

    pub fn constant(spec: GridSpec, c: f64) -> Self {
        Self {
            spec,
            values: vec![c; spec.n_cells()],
        }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.n_cells() {
            return Err(Error::Shape(format!(
                "scalar field needs {} values, got {}",
                spec.n_cells(),
                values.len()
            )));
        }
        Ok(Self { spec, values })
    }

    /// Samples `f(x, y)` at cell centers.
    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(spec.n_cells());
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                values.push(f(spec.xc(i), spec.yc(j)));
            }
        }
        Self { spec, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = self.spec.idx(i, j);
        self.values[k] = value;
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            spec: self.spec,
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_same_grid(&self.spec, &other.spec);
        Self {
            spec: self.spec,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Discrete integral `sum(values) * hx * hy`, summed in index order.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_area()
    }

    /// Cell-area weighted inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        assert_same_grid(&self.spec, &other.spec);
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.spec.cell_area()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// Staggered vector field: `u` on vertical faces, `v` on horizontal faces.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub spec: GridSpec,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl VectorField {
    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            u: vec![0.0; spec.n_u()],
            v: vec![0.0; spec.n_v()],
        }
    }

    /// Samples `f` on the faces: the x-component on vertical faces and the
    /// y-component on horizontal faces. Boundary faces are sampled too.
    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut field = Self::zeros(spec);
        for j in 0..spec.ny {
            for i in 0..=spec.nx {
                field.u[spec.u_idx(i, j)] = f(spec.xf(i), spec.yc(j)).0;
            }
        }
        for j in 0..=spec.ny {
            for i in 0..spec.nx {
                field.v[spec.v_idx(i, j)] = f(spec.xc(i), spec.yf(j)).1;
            }
        }
        field
    }

    /// Like [`VectorField::from_fn`] but with the wall-normal faces set to zero.
    pub fn from_fn_dirichlet(spec: GridSpec, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut field = Self::from_fn(spec, f);
        field.zero_boundary();
        field
    }

    /// Sets the faces lying on the outer wall to zero.
    pub fn zero_boundary(&mut self) {
        let s = self.spec;
        for j in 0..s.ny {
            self.u[s.u_idx(0, j)] = 0.0;
            self.u[s.u_idx(s.nx, j)] = 0.0;
        }
        for i in 0..s.nx {
            self.v[s.v_idx(i, 0)] = 0.0;
            self.v[s.v_idx(i, s.ny)] = 0.0;
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            spec: self.spec,
            u: self.u.iter().map(|x| a * x).collect(),
            v: self.v.iter().map(|x| a * x).collect(),
        }
    }

    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        assert_same_grid(&self.spec, &other.spec);
        Self {
            spec: self.spec,
            u: self.u.iter().zip(&other.u).map(|(x, y)| x + a * y).collect(),
            v: self.v.iter().zip(&other.v).map(|(x, y)| x + a * y).collect(),
        }
    }

    /// Face inner product, each face weighted by `hx * hy`.
    pub fn dot(&self, other: &Self) -> f64 {
        assert_same_grid(&self.spec, &other.spec);
        let su: f64 = self.u.iter().zip(&other.u).map(|(a, b)| a * b).sum();
        let sv: f64 = self.v.iter().zip(&other.v).map(|(a, b)| a * b).sum();
        (su + sv) * self.spec.cell_area()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Face-averaged velocity at the center of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        let s = &self.spec;
        (
            0.5 * (self.u[s.u_idx(i, j)] + self.u[s.u_idx(i + 1, j)]),
            0.5 * (self.v[s.v_idx(i, j)] + self.v[s.v_idx(i, j + 1)]),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

pub(crate) fn assert_same_grid(a: &GridSpec, b: &GridSpec) {
    assert!(a == b, "fields live on different grids: {a:?} vs {b:?}");
}

/// Cell-centered divergence of a staggered field.
pub fn divergence(v: &VectorField) -> ScalarField {
    let s = v.spec;
    let mut out = ScalarField::zeros(s);
    for j in 0..s.ny {
        for i in 0..s.nx {
            let dudx = (v.u[s.u_idx(i + 1, j)] - v.u[s.u_idx(i, j)]) / s.hx;
            let dvdy = (v.v[s.v_idx(i, j + 1)] - v.v[s.v_idx(i, j)]) / s.hy;
            out.values[s.idx(i, j)] = dudx + dvdy;
        }
    }
    out
}

/// Face-centered gradient. Wall faces are zero, so `-gradient` is the exact
/// adjoint of [`divergence`] restricted to fields vanishing on the wall.
pub fn gradient(f: &ScalarField) -> VectorField {
    let s = f.spec;
    let mut out = VectorField::zeros(s);
    for j in 0..s.ny {
        for i in 1..s.nx {
            out.u[s.u_idx(i, j)] = (f.at(i, j) - f.at(i - 1, j)) / s.hx;
        }
    }
    for j in 1..s.ny {
        for i in 0..s.nx {
            out.v[s.v_idx(i, j)] = (f.at(i, j) - f.at(i, j - 1)) / s.hy;
        }
    }
    out
}

/// Five-point Laplacian with ghost cells realizing `bc`.
pub fn laplacian(f: &ScalarField, bc: BoundaryKind) -> ScalarField {
    let s = f.spec;
    let ghost = |interior: f64| match bc {
        BoundaryKind::ZeroFlux => interior,
        BoundaryKind::ZeroValue => -interior,
    };
    let (ihx2, ihy2) = (1.0 / (s.hx * s.hx), 1.0 / (s.hy * s.hy));
    let mut out = ScalarField::zeros(s);
    for j in 0..s.ny {
        for i in 0..s.nx {
            let c = f.at(i, j);
            let w = if i > 0 { f.at(i - 1, j) } else { ghost(c) };
            let e = if i + 1 < s.nx { f.at(i + 1, j) } else { ghost(c) };
            let so = if j > 0 { f.at(i, j - 1) } else { ghost(c) };
            let n = if j + 1 < s.ny { f.at(i, j + 1) } else { ghost(c) };
            out.values[s.idx(i, j)] = (w - 2.0 * c + e) * ihx2 + (so - 2.0 * c + n) * ihy2;
        }
    }
    out
}

/// Scalar curl `dv_y/dx - dv_x/dy`, computed at grid nodes and averaged to
/// cell centers. Wall nodes use one-sided differences of the tangential
/// component, so linear fields are reproduced exactly everywhere.
pub fn curl2d(v: &VectorField) -> ScalarField {
    let s = v.spec;
    let (nx, ny) = (s.nx, s.ny);
    let mut node = vec![0.0; (nx + 1) * (ny + 1)];
    for j in 0..=ny {
        for i in 0..=nx {
            // v-faces of row j sit on grid line y_j; columns i-1, i straddle node i.
            let (a, b) = match i {
                0 => (0, 1),
                _ if i == nx => (nx - 2, nx - 1),
                _ => (i - 1, i),
            };
            let dvdx = (v.v[s.v_idx(b, j)] - v.v[s.v_idx(a, j)]) / s.hx;
            let (c, d) = match j {
                0 => (0, 1),
                _ if j == ny => (ny - 2, ny - 1),
                _ => (j - 1, j),
            };
            let dudy = (v.u[s.u_idx(i, d)] - v.u[s.u_idx(i, c)]) / s.hy;
            node[j * (nx + 1) + i] = dvdx - dudy;
        }
    }
    let mut out = ScalarField::zeros(s);
    for j in 0..ny {
        for i in 0..nx {
            let k = |ii: usize, jj: usize| node[jj * (nx + 1) + ii];
            out.values[s.idx(i, j)] = 0.25 * (k(i, j) + k(i + 1, j) + k(i, j + 1) + k(i + 1, j + 1));
        }
    }
    out
}
