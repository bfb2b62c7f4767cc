//! Bilinear (Q1) plane-strain elasticity on tensor grids.
//!
//! Degrees of freedom are `(u1, u3)` per node, numbered row by row.
//! Constrained components are eliminated; with `periodic_x1` the last
//! column of nodes shares the unknowns of the first.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid2d, PlaneField, GAUSS2};
use crate::linalg::{norm, pcg, refined_solve, CgOptions, SymBanded};

#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    /// Unknown index of each `(node, component)`, `None` when constrained to zero.
    pub map: Vec<[Option<usize>; 2]>,
    pub ndof: usize,
    pub bandwidth: usize,
}

impl DofMap {
    /// `fixed(i, j, c)` marks component `c` of node `(i, j)` as constrained.
    pub fn build(grid: &Grid2d, fixed: impl Fn(usize, usize, usize) -> bool) -> Self {
        let n1 = grid.x1.len();
        let mut map = vec![[None; 2]; grid.num_nodes()];
        let mut next = 0;
        for j in 0..grid.x3.len() {
            for i in 0..n1 {
                let node = grid.node(i, j);
                if grid.periodic_x1 && i == n1 - 1 {
                    map[node] = map[grid.node(0, j)];
                    continue;
                }
                for c in 0..2 {
                    if !fixed(i, j, c) {
                        map[node][c] = Some(next);
                        next += 1;
                    }
                }
            }
        }
        let mut dm = DofMap {
            map,
            ndof: next,
            bandwidth: 0,
        };
        let mut bw = 0;
        for cj in 0..grid.n3() {
            for ci in 0..grid.n1() {
                let ids: Vec<usize> = dm.cell_dofs(grid, ci, cj).into_iter().flatten().collect();
                let lo = ids.iter().min().copied().unwrap_or(0);
                let hi = ids.iter().max().copied().unwrap_or(0);
                bw = bw.max(hi - lo);
            }
        }
        dm.bandwidth = bw;
        dm
    }

    /// Dirichlet on the whole boundary (or on `x3 ∈ {0, L}` only when the
    /// grid is periodic in x1).
    pub fn dirichlet(grid: &Grid2d) -> Self {
        Self::build(grid, |i, j, _| grid.is_boundary(i, j))
    }

    /// Local order: nodes `(ci, cj)`, `(ci+1, cj)`, `(ci, cj+1)`, `(ci+1, cj+1)`,
    /// each contributing `u1` then `u3`.
    pub fn cell_dofs(&self, grid: &Grid2d, ci: usize, cj: usize) -> [Option<usize>; 8] {
        let nodes = cell_nodes(grid, ci, cj);
        let mut out = [None; 8];
        for (a, &n) in nodes.iter().enumerate() {
            out[2 * a] = self.map[n][0];
            out[2 * a + 1] = self.map[n][1];
        }
        out
    }

    pub fn gather(&self, field: &PlaneField) -> Vec<f64> {
        let mut x = vec![0.0; self.ndof];
        for (n, ids) in self.map.iter().enumerate() {
            for c in 0..2 {
                if let Some(d) = ids[c] {
                    x[d] = field.u[n][c];
                }
            }
        }
        x
    }

    /// Nodal field from unknowns; constrained components are zero.
    pub fn scatter_into(&self, x: &[f64], field: &mut PlaneField) {
        for (n, ids) in self.map.iter().enumerate() {
            for c in 0..2 {
                field.u[n][c] = ids[c].map_or(0.0, |d| x[d]);
            }
        }
    }

    /// Sums per-node weights onto the unknowns (shared periodic nodes add up).
    pub fn reduce_nodal(&self, w: &[[f64; 2]]) -> Vec<f64> {
        let mut out = vec![0.0; self.ndof];
        for (n, ids) in self.map.iter().enumerate() {
            for c in 0..2 {
                if let Some(d) = ids[c] {
                    out[d] += w[n][c];
                }
            }
        }
        out
    }
}

pub fn cell_nodes(grid: &Grid2d, ci: usize, cj: usize) -> [usize; 4] {
    [
        grid.node(ci, cj),
        grid.node(ci + 1, cj),
        grid.node(ci, cj + 1),
        grid.node(ci + 1, cj + 1),
    ]
}

/// Rows of `e11`, `e33` and `e13` in terms of the 8 local unknowns at `(s, t)`.
fn strain_rows(h1: f64, h3: f64, s: f64, t: f64) -> [[f64; 8]; 3] {
    let ds = [-(1.0 - t), 1.0 - t, -t, t];
    let dt = [-(1.0 - s), -s, 1.0 - s, s];
    let mut r = [[0.0; 8]; 3];
    for a in 0..4 {
        let d1 = ds[a] / h1;
        let d3 = dt[a] / h3;
        r[0][2 * a] = d1;
        r[1][2 * a + 1] = d3;
        r[2][2 * a] = 0.5 * d3;
        r[2][2 * a + 1] = 0.5 * d1;
    }
    r
}

/// Element stiffness with full 2×2 Gauss integration of the normal strains
/// and a one-point rule for the shear strain `e13`.
pub fn element_stiffness(h1: f64, h3: f64, lambda: f64, mu: f64) -> [[f64; 8]; 8] {
    let mut k = [[0.0; 8]; 8];
    let w = 0.25 * h1 * h3;
    for &s in &GAUSS2 {
        for &t in &GAUSS2 {
            let [a, b, _] = strain_rows(h1, h3, s, t);
            for p in 0..8 {
                for q in 0..8 {
                    k[p][q] += w
                        * (lambda * (a[p] + b[p]) * (a[q] + b[q])
                            + 2.0 * mu * (a[p] * a[q] + b[p] * b[q]));
                }
            }
        }
    }
    let [_, _, c] = strain_rows(h1, h3, 0.5, 0.5);
    for p in 0..8 {
        for q in 0..8 {
            k[p][q] += h1 * h3 * 4.0 * mu * c[p] * c[q];
        }
    }
    k
}

/// Global stiffness for per-cell Lamé pairs `lame[cj * n1 + ci] = (λ, μ)`.
pub fn assemble_stiffness(grid: &Grid2d, dofs: &DofMap, lame: &[(f64, f64)]) -> SymBanded {
    let n1 = grid.n1();
    let elems: Vec<[[f64; 8]; 8]> = (0..n1 * grid.n3())
        .into_par_iter()
        .map(|c| {
            let (ci, cj) = (c % n1, c / n1);
            let (lambda, mu) = lame[c];
            element_stiffness(grid.h1(ci), grid.h3(cj), lambda, mu)
        })
        .collect();
    let mut k = SymBanded::zeros(dofs.ndof, dofs.bandwidth);
    for (c, ke) in elems.iter().enumerate() {
        let ids = dofs.cell_dofs(grid, c % n1, c / n1);
        for p in 0..8 {
            let Some(gp) = ids[p] else { continue };
            for q in 0..8 {
                let Some(gq) = ids[q] else { continue };
                if gq <= gp {
                    k.add(gp, gq, ke[p][q]);
                }
            }
        }
    }
    k
}

/// Lumped (row-sum) mass per node: each cell hands a quarter of
/// `ρ · area` to each of its corners.
pub fn nodal_mass(grid: &Grid2d, density: &[f64]) -> Vec<[f64; 2]> {
    let n1 = grid.n1();
    let mut m = vec![[0.0; 2]; grid.num_nodes()];
    for cj in 0..grid.n3() {
        for ci in 0..n1 {
            let q = 0.25 * density[cj * n1 + ci] * grid.h1(ci) * grid.h3(cj);
            for n in cell_nodes(grid, ci, cj) {
                m[n][0] += q;
                m[n][1] += q;
            }
        }
    }
    m
}

/// Nodal quadrature weights (dual cell areas).
pub fn nodal_area(grid: &Grid2d) -> Vec<f64> {
    let mut a = Vec::with_capacity(grid.num_nodes());
    for j in 0..grid.x3.len() {
        for i in 0..grid.x1.len() {
            a.push(grid.dual1(i) * grid.dual3(j));
        }
    }
    a
}

/// Load vector `Σ w_node f(x_node)` for nodal weights `w`.
pub fn nodal_load(grid: &Grid2d, dofs: &DofMap, weights: &[[f64; 2]], f: impl Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
    let mut w = vec![[0.0; 2]; grid.num_nodes()];
    for j in 0..grid.x3.len() {
        for i in 0..grid.x1.len() {
            let n = grid.node(i, j);
            let v = f(grid.x1[i], grid.x3[j]);
            w[n] = [weights[n][0] * v[0], weights[n][1] * v[1]];
        }
    }
    dofs.reduce_nodal(&w)
}

/// How symmetric positive definite systems are solved.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    /// Banded Cholesky with one step of iterative refinement.
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    Cg,
}

/// Solves `K x = F` and checks the normwise backward error
/// `‖K x − F‖∞ / (‖K‖∞ ‖x‖∞ + ‖F‖∞)` against `tol`.
pub fn solve_spd(k: &SymBanded, f: &[f64], solver: LinearSolver, tol: f64) -> Result<Vec<f64>> {
    let fnorm = norm(f);
    if fnorm == 0.0 {
        return Ok(vec![0.0; f.len()]);
    }
    let x = match solver {
        LinearSolver::Direct => {
            let fac = k.cholesky()?;
            refined_solve(k, &fac, f)
        }
        LinearSolver::Cg => {
            let mut x = vec![0.0; f.len()];
            let opts = CgOptions {
                rel_tol: tol,
                ..CgOptions::default()
            };
            pcg(k, f, &mut x, opts)?;
            x
        }
    };
    let kx = k.mul(&x);
    let inf = |v: &[f64]| v.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
    let r = kx.iter().zip(f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let res = r / (k.norm_inf() * inf(&x) + inf(f));
    if !(res <= tol) {
        return Err(Error::SolveFailure(format!(
            "backward error {res:.3e} above tolerance {tol:.1e}"
        )));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn element_has_rigid_modes_only() {
        let k = element_stiffness(0.3, 0.05, 1.5, 0.7);
        let modes: [[f64; 8]; 3] = [
            [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            // rotation: u1 = -x3, u3 = x1
            [0.0, 0.0, 0.0, 0.3, -0.05, 0.0, -0.05, 0.3],
        ];
        for m in modes {
            for p in 0..8 {
                let r: f64 = (0..8).map(|q| k[p][q] * m[q]).sum();
                assert!(r.abs() < 1e-12, "{r}");
            }
        }
        // hourglass modes carry energy
        let hg = [1.0, 0.0, -1.0, 0.0, -1.0, 0.0, 1.0, 0.0];
        let e: f64 = (0..8).map(|p| (0..8).map(|q| hg[p] * k[p][q] * hg[q]).sum::<f64>()).sum();
        assert!(e > 1e-3);
    }

    #[test]
    fn patch_test_reproduces_uniform_strain() {
        // u = (a x1 + b x3, c x1 + d x3) is an exact discrete equilibrium
        let g = Arc::new(Grid2d::new(vec![0.0, 0.2, 0.5, 1.0], vec![0.0, 0.1, 0.15, 0.6, 1.0], false).unwrap());
        let free = DofMap::build(&g, |_, _, _| false);
        let lame = vec![(1.7, 0.6); 12];
        let k = assemble_stiffness(&g, &free, &lame);
        let u = PlaneField::from_fn(g.clone(), |x, z| [0.3 * x - 0.2 * z, 0.1 * x + 0.4 * z]);
        let r = k.mul(&free.gather(&u));
        for j in 1..g.n3() {
            for i in 1..g.n1() {
                let ids = free.map[g.node(i, j)];
                assert!(r[ids[0].unwrap()].abs() < 1e-12);
                assert!(r[ids[1].unwrap()].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn periodic_map_shares_columns() {
        let mut g = Grid2d::uniform(1.0, 1.0, 4, 3);
        g.periodic_x1 = true;
        let d = DofMap::dirichlet(&g);
        assert_eq!(d.map[g.node(4, 1)], d.map[g.node(0, 1)]);
        assert_eq!(d.ndof, 4 * 2 * 2);
        let area = nodal_area(&g);
        let w: Vec<[f64; 2]> = area.iter().map(|a| [*a, *a]).collect();
        let total: f64 = d.reduce_nodal(&w).iter().sum();
        // interior rows carry 2/3 of the area, counted per component
        assert!((total - 2.0 * 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mass_is_conserved() {
        let g = Grid2d::new(vec![0.0, 0.4, 1.0], vec![0.0, 0.3, 2.0], false).unwrap();
        let rho = vec![1.0, 2.0, 3.0, 4.0];
        let m = nodal_mass(&g, &rho);
        let total: f64 = m.iter().map(|v| v[0]).sum();
        let exact = 1.0 * 0.4 * 0.3 + 2.0 * 0.6 * 0.3 + 3.0 * 0.4 * 1.7 + 4.0 * 0.6 * 1.7;
        assert!((total - exact).abs() < 1e-12);
    }

    #[test]
    fn direct_and_cg_agree() {
        let g = Grid2d::uniform(1.0, 1.0, 6, 6);
        let d = DofMap::dirichlet(&g);
        let k = assemble_stiffness(&g, &d, &vec![(1.0, 1.0); 36]);
        let area = nodal_area(&g);
        let w: Vec<[f64; 2]> = area.iter().map(|a| [*a, *a]).collect();
        let f = nodal_load(&g, &d, &w, |x, z| [x * z, 1.0]);
        let a = solve_spd(&k, &f, LinearSolver::Direct, 1e-10).unwrap();
        let b = solve_spd(&k, &f, LinearSolver::Cg, 1e-10).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-8 * (1.0 + x.abs()));
        }
    }
}
