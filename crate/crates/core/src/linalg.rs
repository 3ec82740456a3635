//! Sparse matrices and the linear solvers behind the elliptic problems.
//!
//! All kernels run sequentially in a fixed order, so a solve is bitwise
//! reproducible for identical inputs.

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

/// Triplet accumulator; duplicate entries are summed on conversion.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        if val != 0.0 {
            self.entries.push((row, col, val));
        }
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0usize; self.n_rows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            vals,
        }
    }
}

impl CsrMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.vals[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        for (r, out) in y.iter_mut().enumerate().take(self.n_rows) {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, r)).collect()
    }

    /// Largest `|row - col|` over stored entries: (lower, upper).
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut lo = 0;
        let mut hi = 0;
        for r in 0..self.n_rows {
            for (c, _) in self.row(r) {
                if c < r {
                    lo = lo.max(r - c);
                } else {
                    hi = hi.max(c - r);
                }
            }
        }
        (lo, hi)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n_rows).all(|r| self.row(r).all(|(c, v)| (self.get(c, r) - v).abs() <= tol * v.abs().max(1.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    /// Jacobi-preconditioned Krylov iteration (CG for SPD systems, BiCGSTAB otherwise).
    Iterative,
    /// Banded Cholesky (SPD) or banded LU with partial pivoting.
    DirectBanded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub rel_tol: f64,
    /// `None` means `10 * (nx + ny)` for the grid being solved.
    pub max_iter: Option<usize>,
    pub method: SolverMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: None,
            method: SolverMethod::Iterative,
        }
    }
}

impl SolverConfig {
    pub fn max_iter_for(&self, nx: usize, ny: usize) -> usize {
        self.max_iter.unwrap_or(10 * (nx + ny))
    }

    pub fn direct() -> Self {
        Self {
            method: SolverMethod::DirectBanded,
            ..Self::default()
        }
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub rel_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn inverse_diagonal(a: &CsrMatrix) -> Vec<f64> {
    a.diagonal().into_iter().map(|d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect()
}

/// Jacobi-preconditioned conjugate gradients for SPD `a`. Converged when
/// `||b - a x|| <= rel_tol * ||b||`.
pub fn pcg(a: &CsrMatrix, b: &[f64], x: &mut [f64], rel_tol: f64, max_iter: usize) -> Result<SolveStats> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, rel_residual: 0.0 });
    }
    let dinv = inverse_diagonal(a);
    let mut r = a.mul_vec(x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let target = rel_tol * bnorm;
    let mut res = norm(&r);
    for it in 0..max_iter {
        if res <= target {
            return Ok(SolveStats { iterations: it, rel_residual: res / bnorm });
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SolverFailure { iterations: it, residual: res / bnorm, target: rel_tol });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm(&r);
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if res <= target {
        return Ok(SolveStats { iterations: max_iter, rel_residual: res / bnorm });
    }
    Err(Error::SolverFailure { iterations: max_iter, residual: res / bnorm, target: rel_tol })
}

/// Jacobi-preconditioned BiCGSTAB for general square `a`. The convergence
/// test is on the true residual recomputed at exit.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], x: &mut [f64], rel_tol: f64, max_iter: usize) -> Result<SolveStats> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, rel_residual: 0.0 });
    }
    let dinv = inverse_diagonal(a);
    let target = rel_tol * bnorm;
    let mut r = a.mul_vec(x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut iterations = 0;
    // a few restarts guard against breakdown of the shadow residual
    for _restart in 0..4 {
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut t = vec![0.0; n];
        let mut breakdown = false;
        while iterations < max_iter {
            if norm(&r) <= target {
                break;
            }
            iterations += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() < 1e-300 || omega == 0.0 {
                breakdown = true;
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
                y[i] = p[i] * dinv[i];
            }
            a.mul_vec_into(&y, &mut v);
            let rv = dot(&r_hat, &v);
            if rv.abs() < 1e-300 {
                breakdown = true;
                break;
            }
            alpha = rho / rv;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm(&s) <= target {
                for i in 0..n {
                    x[i] += alpha * y[i];
                }
                r.copy_from_slice(&s);
                break;
            }
            for i in 0..n {
                z[i] = s[i] * dinv[i];
            }
            a.mul_vec_into(&z, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            for i in 0..n {
                x[i] += alpha * y[i] + omega * z[i];
                r[i] = s[i] - omega * t[i];
            }
        }
        // refresh the residual to guard against drift
        let ax = a.mul_vec(x);
        for i in 0..n {
            r[i] = b[i] - ax[i];
        }
        let res = norm(&r);
        if res <= target {
            return Ok(SolveStats { iterations, rel_residual: res / bnorm });
        }
        if !breakdown && iterations >= max_iter {
            break;
        }
    }
    Err(Error::SolverFailure { iterations, residual: norm(&r) / bnorm, target: rel_tol })
}

/// Banded Cholesky factorization and solve for SPD `a`.
pub fn solve_banded_spd(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n_rows();
    let (k, _) = a.bandwidths();
    // l[i][d] holds L(i, i - k + d) for d in 0..=k
    let w = k + 1;
    let mut l = vec![0.0; n * w];
    for i in 0..n {
        for (c, v) in a.row(i) {
            if c <= i {
                l[i * w + (c + k - i)] = v;
            }
        }
    }
    for i in 0..n {
        let j0 = i.saturating_sub(k);
        for j in j0..=i {
            let mut sum = l[i * w + (j + k - i)];
            let m0 = j0.max(j.saturating_sub(k));
            for m in m0..j {
                sum -= l[i * w + (m + k - i)] * l[j * w + (m + k - j)];
            }
            if j == i {
                if sum <= 0.0 {
                    return Err(Error::SolverFailure { iterations: 0, residual: f64::NAN, target: 0.0 });
                }
                l[i * w + k] = sum.sqrt();
            } else {
                l[i * w + (j + k - i)] = sum / l[j * w + k];
            }
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        let mut sum = y[i];
        for m in i.saturating_sub(k)..i {
            sum -= l[i * w + (m + k - i)] * y[m];
        }
        y[i] = sum / l[i * w + k];
    }
    for i in (0..n).rev() {
        let mut sum = y[i];
        for m in i + 1..(i + k + 1).min(n) {
            sum -= l[m * w + (i + k - m)] * y[m];
        }
        y[i] = sum / l[i * w + k];
    }
    Ok(y)
}

/// Banded LU with partial pivoting for general `a`.
pub fn solve_banded_lu(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n_rows();
    let (kl, ku) = a.bandwidths();
    // row-pivoting fills up to kl extra superdiagonals
    let ku2 = ku + kl;
    let w = kl + ku2 + 1;
    // band[i][c - i + kl] = A(i, c)
    let mut band = vec![0.0; n * w];
    for i in 0..n {
        for (c, v) in a.row(i) {
            band[i * w + (c + kl - i)] = v;
        }
    }
    let at = |band: &Vec<f64>, i: usize, c: usize| band[i * w + (c + kl - i)];
    let mut rhs = b.to_vec();
    for col in 0..n {
        let last = (col + kl).min(n - 1);
        let mut piv = col;
        let mut best = at(&band, col, col).abs();
        for r in col + 1..=last {
            let v = at(&band, r, col).abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return Err(Error::SolverFailure { iterations: 0, residual: f64::NAN, target: 0.0 });
        }
        let cmax = (col + ku2).min(n - 1);
        if piv != col {
            for c in col..=cmax {
                let (x, y) = (piv * w + (c + kl - piv), col * w + (c + kl - col));
                band.swap(x, y);
            }
            rhs.swap(piv, col);
        }
        let d = at(&band, col, col);
        for r in col + 1..=last {
            let f = at(&band, r, col) / d;
            if f == 0.0 {
                continue;
            }
            band[r * w + (col + kl - r)] = 0.0;
            for c in col + 1..=cmax {
                let u = at(&band, col, c);
                if u != 0.0 {
                    band[r * w + (c + kl - r)] -= f * u;
                }
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = rhs[i];
        for c in i + 1..(i + ku2 + 1).min(n) {
            sum -= at(&band, i, c) * x[c];
        }
        x[i] = sum / at(&band, i, i);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize, shift: f64) -> CsrMatrix {
        let mut t = TripletBuilder::new(n, n);
        for i in 0..n {
            t.push(i, i, 2.0 + shift);
            if i > 0 {
                t.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                t.push(i, i + 1, -1.0);
            }
        }
        t.build()
    }

    #[test]
    fn duplicates_are_summed() {
        let mut t = TripletBuilder::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 0, 2.5);
        t.push(1, 0, -1.0);
        let m = t.build();
        assert_eq!(m.get(0, 0), 3.5);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.mul_vec(&[1.0, 2.0]), vec![3.5, -1.0]);
    }

    #[test]
    fn cg_and_cholesky_agree() {
        let a = laplace_1d(50, 0.1);
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut x = vec![0.0; 50];
        pcg(&a, &b, &mut x, 1e-12, 500).unwrap();
        let y = solve_banded_spd(&a, &b).unwrap();
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn bicgstab_and_lu_agree_on_nonsymmetric() {
        let n = 40;
        let mut t = TripletBuilder::new(n, n);
        for i in 0..n {
            t.push(i, i, 3.0);
            if i > 0 {
                t.push(i, i - 1, -1.5);
            }
            if i + 2 < n {
                t.push(i, i + 2, -0.7);
            }
        }
        let a = t.build();
        assert!(!a.is_symmetric(1e-12));
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.1).collect();
        let mut x = vec![0.0; n];
        bicgstab(&a, &b, &mut x, 1e-12, 500).unwrap();
        let y = solve_banded_lu(&a, &b).unwrap();
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn lu_pivots_through_zero_diagonal() {
        let mut t = TripletBuilder::new(2, 2);
        t.push(0, 1, 1.0);
        t.push(1, 0, 2.0);
        t.push(1, 1, 1.0);
        let x = solve_banded_lu(&t.build(), &[3.0, 4.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-14 && (x[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn reports_non_convergence() {
        let a = laplace_1d(200, 0.0);
        let b = vec![1.0; 200];
        let mut x = vec![0.0; 200];
        match pcg(&a, &b, &mut x, 1e-14, 3) {
            Err(Error::SolverFailure { iterations, residual, .. }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-14);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
