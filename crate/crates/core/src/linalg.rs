//! Symmetric banded storage with an in-place Cholesky factorization and a
//! Jacobi-preconditioned conjugate gradient.
//!
//! All structured-grid operators in this crate have a bandwidth bounded by a
//! couple of grid rows once degrees of freedom are numbered row by row, so a
//! dense band is both compact and fast to factor.

use crate::error::{Error, Result};

/// Lower band of a symmetric matrix: entry `(i, j)` with `i - bw <= j <= i`
/// lives at `data[i * (bw + 1) + (j + bw - i)]`.
#[derive(Debug, Clone)]
pub struct SymBanded {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBanded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`).
    ///
    /// Panics if the pair lies outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        assert!(r - c <= self.bw, "entry ({i}, {j}) outside bandwidth {}", self.bw);
        let k = self.idx(r, c);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[self.idx(i, i)]).collect()
    }

    /// `self += alpha * other` (same shape required).
    pub fn axpy(&mut self, alpha: f64, other: &SymBanded) {
        assert_eq!(self.n, other.n);
        assert_eq!(self.bw, other.bw);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    /// Copy stored with a (not smaller) bandwidth `bw`.
    pub fn widened(&self, bw: usize) -> SymBanded {
        assert!(bw >= self.bw);
        let mut out = SymBanded::zeros(self.n, bw);
        for i in 0..self.n {
            for j in i.saturating_sub(self.bw)..=i {
                out.add(i, j, self.get(i, j));
            }
        }
        out
    }

    pub fn add_diagonal(&mut self, d: &[f64]) {
        assert_eq!(d.len(), self.n);
        for (i, v) in d.iter().enumerate() {
            let k = self.idx(i, i);
            self.data[k] += v;
        }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.iter_mut().for_each(|v| *v = 0.0);
        let w = self.bw + 1;
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = 0.0;
            for j in j0..i {
                let a = row[j + self.bw - i];
                acc += a * x[j];
                y[j] += a * x[i];
            }
            acc += row[self.bw] * x[i];
            y[i] += acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let mut rows = vec![0.0; self.n];
        for i in 0..self.n {
            for j in i.saturating_sub(self.bw)..=i {
                let a = self.get(i, j).abs();
                rows[i] += a;
                if j != i {
                    rows[j] += a;
                }
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    /// Quadratic form `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul(y))
    }

    /// Factors `A = L L^T`. Fails if a pivot is not strictly positive.
    pub fn cholesky(&self) -> Result<BandCholesky> {
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        let mut l = self.data.clone();
        let max_diag = self.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let floor = max_diag * 1e-15;
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = l[i * w + (j + bw - i)];
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                if j == i {
                    if !(s > floor) || !s.is_finite() {
                        return Err(Error::SolveFailure(format!(
                            "non-positive pivot {s:e} at row {i} of {n}"
                        )));
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        Ok(BandCholesky { n, bw, l })
    }
}

/// Cholesky factor of a [`SymBanded`] matrix.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let w = self.bw + 1;
        let bw = self.bw;
        for i in 0..self.n {
            let j0 = i.saturating_sub(bw);
            let mut s = b[i];
            for j in j0..i {
                s -= self.l[i * w + (j + bw - i)] * b[j];
            }
            b[i] = s / self.l[i * w + bw];
        }
        for i in (0..self.n).rev() {
            let s = b[i] / self.l[i * w + bw];
            b[i] = s;
            let j0 = i.saturating_sub(bw);
            for j in j0..i {
                b[j] -= self.l[i * w + (j + bw - i)] * s;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Direct solve with one round of iterative refinement against `a`.
pub fn refined_solve(a: &SymBanded, fac: &BandCholesky, b: &[f64]) -> Vec<f64> {
    let mut x = fac.solve(b);
    let ax = a.mul(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    fac.solve_in_place(&mut r);
    for (xi, ri) in x.iter_mut().zip(&r) {
        *xi += ri;
    }
    x
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgReport {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Jacobi-preconditioned conjugate gradient on `a x = b`, starting from `x`.
pub fn pcg(a: &SymBanded, b: &[f64], x: &mut [f64], opts: CgOptions) -> Result<CgReport> {
    let n = a.dim();
    let diag = a.diagonal();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgReport {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let mut r: Vec<f64> = b.iter().zip(a.mul(x)).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..opts.max_iter {
        let rel = norm(&r) / bnorm;
        if rel <= opts.rel_tol {
            return Ok(CgReport {
                iterations: it,
                rel_residual: rel,
            });
        }
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolveFailure(format!(
                "conjugate gradient breakdown at iteration {it} (p^T A p = {pap:e})"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = norm(&r) / bnorm;
    if rel <= opts.rel_tol {
        Ok(CgReport {
            iterations: opts.max_iter,
            rel_residual: rel,
        })
    } else {
        Err(Error::SolveFailure(format!(
            "conjugate gradient stagnated at relative residual {rel:e} after {} iterations",
            opts.max_iter
        )))
    }
}

/// Solves a symmetric tridiagonal system (Thomas algorithm). `lower[i]`
/// couples unknowns `i` and `i + 1`.
pub fn solve_sym_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    assert_eq!(rhs.len(), n);
    assert_eq!(off.len(), n.saturating_sub(1));
    if n == 0 {
        return Vec::new();
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = if n > 1 { off[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - off[i - 1] * c[i - 1];
        if i + 1 < n {
            c[i] = off[i] / m;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / m;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> SymBanded {
        let mut a = SymBanded::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i + 1 < n {
                a.add(i + 1, i, -1.0);
            }
        }
        a
    }

    #[test]
    fn cholesky_solves_laplacian() {
        let a = laplace_1d(50);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul(&x_true);
        let x = a.cholesky().unwrap().solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-11);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = laplace_1d(4);
        a.add(2, 2, -10.0);
        assert!(matches!(a.cholesky(), Err(Error::SolveFailure(_))));
    }

    #[test]
    fn matvec_is_symmetric_in_band() {
        let mut a = SymBanded::zeros(6, 2);
        for i in 0..6usize {
            for j in i.saturating_sub(2)..=i {
                a.add(i, j, 1.0 + (i * 7 + j) as f64 * 0.1);
            }
        }
        let x = [1.0, -2.0, 0.5, 3.0, 0.0, 1.5];
        let y = [0.2, 0.1, -1.0, 2.0, 4.0, -0.5];
        assert!((a.bilinear(&x, &y) - a.bilinear(&y, &x)).abs() < 1e-12);
        assert_eq!(a.get(0, 2), a.get(2, 0));
        assert_eq!(a.get(0, 5), 0.0);
    }

    #[test]
    fn pcg_matches_direct() {
        let a = laplace_1d(40);
        let b: Vec<f64> = (0..40).map(|i| 1.0 + i as f64 * 0.01).collect();
        let direct = a.cholesky().unwrap().solve(&b);
        let mut x = vec![0.0; 40];
        let rep = pcg(&a, &b, &mut x, CgOptions::default()).unwrap();
        assert!(rep.rel_residual <= 1e-10);
        for (u, v) in x.iter().zip(&direct) {
            assert!((u - v).abs() < 1e-7);
        }
    }

    #[test]
    fn pcg_reports_stagnation() {
        let a = laplace_1d(200);
        let b = vec![1.0; 200];
        let mut x = vec![0.0; 200];
        let err = pcg(
            &a,
            &b,
            &mut x,
            CgOptions {
                rel_tol: 1e-14,
                max_iter: 3,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::SolveFailure(_)));
    }

    #[test]
    fn tridiagonal_matches_banded() {
        let a = laplace_1d(9);
        let b: Vec<f64> = (0..9).map(|i| (i as f64).cos()).collect();
        let x = solve_sym_tridiagonal(&[2.0; 9], &[-1.0; 8], &b);
        let y = a.cholesky().unwrap().solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}
