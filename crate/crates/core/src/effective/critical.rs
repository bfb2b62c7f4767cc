//! Two-scale model for soft interlayers of order `ε²`: a macro equation for
//! the layer displacement `v` coupled at every macro node to a 1D micro
//! wave equation across the soft cell interval.
//!
//! Unknowns are grouped per interior macro node as
//! `[v1?, v3?, w1[1..m-1], w3[1..m-1]]`, where `w_c` are the interior micro
//! nodes and both micro end nodes coincide with `v_c`. The micro blocks are
//! eliminated by a Schur complement in every shifted solve.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fine_solver::TimeSpec;
use crate::grid::{Grid2d, PlaneField, Trajectory};
use crate::linalg::{solve_sym_tridiagonal, BandCholesky, SymBanded};
use crate::microstructure::LayerSet;
use crate::newmark::{integrate, EnergyTrace, SecondOrderSystem};
use crate::operators::{
    bending_coefficients, clamped_bending_matrix, membrane_coefficient, membrane_matrix, uniform_step, MicroProfile,
    SoftClass,
};

use super::{EffectiveProblem, InterlayerClass};

#[derive(Debug, Clone)]
struct Shifted {
    c: f64,
    /// Per component: tridiagonal `T̂ = ρ h I + c E/h tridiag(-1, 2, -1)`.
    t_diag: [Vec<f64>; 2],
    t_off: [Vec<f64>; 2],
    /// `T̂⁻¹ b̂` with `b̂ = −c E/h (e_first + e_last)`.
    q: [Vec<f64>; 2],
    /// Factored macro row systems per interior row and component.
    rows: Vec<[Option<BandCholesky>; 2]>,
}

/// Monolithic macro + micro system of the critical model.
#[derive(Debug, Clone)]
pub struct CriticalSystem {
    grid: Arc<Grid2d>,
    m: usize,
    hy: f64,
    theta: f64,
    /// Micro wave moduli `μ0` and `λ0 + 2μ0`.
    modulus: [f64; 2],
    rho: f64,
    rho1: f64,
    has_v: [bool; 2],
    membrane: Option<f64>,
    bending: Option<f64>,
    block: usize,
    ncol: usize,
    nrow: usize,
    mass: Vec<f64>,
    shifted: Option<Shifted>,
}

impl CriticalSystem {
    pub fn new(ep: &EffectiveProblem) -> Result<Self> {
        let reg = ep.regime;
        if reg.class != InterlayerClass::Critical {
            return Err(Error::RegimeMismatch(format!(
                "{:?} interlayers given to the critical solver",
                reg.class
            )));
        }
        if !ep.periodic_layers {
            return Err(Error::NotPeriodic);
        }
        let SoftClass::Critical { mu0, lambda0 } = ep.scaling.soft else {
            unreachable!("class checked above")
        };
        let m = ep.setup.micro_cells;
        if m < 2 {
            return Err(Error::InvalidParameter("micro problems need at least 2 cells".into()));
        }
        let g = ep.grid.clone();
        if g.n1() < 2 || g.n3() < 2 {
            return Err(Error::GridMismatch("macro grid needs interior nodes".into()));
        }
        let has_v = [
            !(reg.constrains_in_plane() || reg.constrains_all()),
            !reg.constrains_all(),
        ];
        let membrane = (has_v[0] && reg.membrane_active()).then(|| reg.k * membrane_coefficient(reg.l));
        let bending = if has_v[1] && reg.bending_active() {
            uniform_step(&g.x1)?;
            Some(reg.kappa / 6.0 * bending_coefficients(reg.l).0)
        } else {
            None
        };
        let nv = has_v.iter().filter(|b| **b).count();
        let block = nv + 2 * (m - 1);
        let hy = (1.0 - reg.theta) / m as f64;
        let mut sys = CriticalSystem {
            grid: g.clone(),
            m,
            hy,
            theta: reg.theta,
            modulus: [mu0, lambda0 + 2.0 * mu0],
            rho: ep.scaling.rho,
            rho1: ep.scaling.rho1_bar,
            has_v,
            membrane,
            bending,
            block,
            ncol: g.n1() - 1,
            nrow: g.n3() - 1,
            mass: Vec::new(),
            shifted: None,
        };
        let mut mass = vec![0.0; sys.dim()];
        for r in 0..sys.nrow {
            for col in 0..sys.ncol {
                let a = sys.area(r, col);
                let base = sys.offset(r, col);
                for c in 0..2 {
                    if let Some(k) = sys.v_slot(c) {
                        mass[base + k] = a * (sys.rho1 + sys.rho * hy);
                    }
                    let w = sys.w_slot(c);
                    for k in 0..m - 1 {
                        mass[base + w + k] = a * sys.rho * hy;
                    }
                }
            }
        }
        sys.mass = mass;
        Ok(sys)
    }

    fn area(&self, r: usize, col: usize) -> f64 {
        self.grid.dual1(col + 1) * self.grid.dual3(r + 1)
    }

    fn offset(&self, r: usize, col: usize) -> usize {
        (r * self.ncol + col) * self.block
    }

    fn v_slot(&self, c: usize) -> Option<usize> {
        match c {
            0 => self.has_v[0].then_some(0),
            _ => self.has_v[1].then_some(usize::from(self.has_v[0])),
        }
    }

    fn w_slot(&self, c: usize) -> usize {
        let nv = usize::from(self.has_v[0]) + usize::from(self.has_v[1]);
        nv + c * (self.m - 1)
    }

    fn row_len(&self) -> usize {
        self.ncol * self.block
    }

    /// Macro stiffness of row `r` for component `c` over interior columns
    /// (boundary columns are zero).
    fn macro_row(&self, r: usize, c: usize) -> Option<SymBanded> {
        let w3 = self.grid.dual3(r + 1);
        let full = match (c, self.membrane, self.bending) {
            (0, Some(coef), _) => {
                let mut m = membrane_matrix(&self.grid.x1);
                m.scale(coef * w3);
                m
            }
            (1, _, Some(coef)) => {
                let h = self.grid.h1(0);
                let mut b = clamped_bending_matrix(h, self.grid.x1.len());
                b.scale(coef * w3);
                b
            }
            _ => return None,
        };
        let mut out = SymBanded::zeros(self.ncol, 2);
        for p in 0..self.ncol {
            for q in p.saturating_sub(2)..=p {
                out.add(p, q, full.get(p + 1, q + 1));
            }
        }
        Some(out)
    }

    /// Nodal field of `v` and of the cell mean `ϑ v + ∫ u0 dy`.
    fn fields(&self, x: &[f64]) -> (PlaneField, PlaneField) {
        let g = &self.grid;
        let mut v = PlaneField::zeros(g.clone());
        let mut mean = PlaneField::zeros(g.clone());
        for r in 0..self.nrow {
            for col in 0..self.ncol {
                let base = self.offset(r, col);
                let node = g.node(col + 1, r + 1);
                for c in 0..2 {
                    let vc = self.v_slot(c).map_or(0.0, |k| x[base + k]);
                    let w = &x[base + self.w_slot(c)..base + self.w_slot(c) + self.m - 1];
                    let integral = self.hy * (vc + w.iter().sum::<f64>());
                    v.u[node][c] = vc;
                    mean.u[node][c] = self.theta * vc + integral;
                }
            }
        }
        (v, mean)
    }

    fn snapshot(&self, t: f64, x: &[f64]) -> MicroSnapshot {
        let g = &self.grid;
        let stride = 2 * (self.m + 1);
        let mut data = vec![0.0; g.num_nodes() * stride];
        for r in 0..self.nrow {
            for col in 0..self.ncol {
                let base = self.offset(r, col);
                let out = g.node(col + 1, r + 1) * stride;
                for c in 0..2 {
                    let vc = self.v_slot(c).map_or(0.0, |k| x[base + k]);
                    let w = &x[base + self.w_slot(c)..base + self.w_slot(c) + self.m - 1];
                    let dst = &mut data[out + c * (self.m + 1)..out + (c + 1) * (self.m + 1)];
                    dst[0] = vc;
                    dst[self.m] = vc;
                    dst[1..self.m].copy_from_slice(w);
                }
            }
        }
        MicroSnapshot {
            t,
            cells: self.m,
            theta: self.theta,
            data,
        }
    }

    /// Unknown vector for the initial pair `u0(x, 0, y) = a(x)`.
    fn lift(&self, a: &PlaneField) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for r in 0..self.nrow {
            for col in 0..self.ncol {
                let base = self.offset(r, col);
                let val = a.at(col + 1, r + 1);
                for c in 0..2 {
                    if let Some(k) = self.v_slot(c) {
                        x[base + k] = val[c];
                    }
                    let w = self.w_slot(c);
                    x[base + w..base + w + self.m - 1].fill(val[c]);
                }
            }
        }
        x
    }
}

impl SecondOrderSystem for CriticalSystem {
    fn dim(&self) -> usize {
        self.nrow * self.row_len()
    }

    fn mass(&self) -> &[f64] {
        &self.mass
    }

    fn apply_k(&self, x: &[f64], y: &mut [f64]) {
        let len = self.row_len();
        y.par_chunks_mut(len)
            .zip(x.par_chunks(len))
            .enumerate()
            .for_each(|(r, (yr, xr))| {
                yr.fill(0.0);
                let m = self.m;
                for col in 0..self.ncol {
                    let a = self.area(r, col);
                    let base = col * self.block;
                    for c in 0..2 {
                        let s = a * self.modulus[c] / self.hy;
                        let vs = self.v_slot(c);
                        let v = vs.map_or(0.0, |k| xr[base + k]);
                        let w0 = base + self.w_slot(c);
                        let at = |k: usize| if k == 0 || k == m { v } else { xr[w0 + k - 1] };
                        for k in 1..m {
                            yr[w0 + k - 1] = s * (2.0 * at(k) - at(k - 1) - at(k + 1));
                        }
                        if let Some(k) = vs {
                            yr[base + k] += s * (2.0 * v - at(1) - at(m - 1));
                        }
                    }
                }
                for c in 0..2 {
                    let Some(k) = self.v_slot(c) else { continue };
                    let Some(mat) = self.macro_row(r, c) else { continue };
                    let v: Vec<f64> = (0..self.ncol).map(|col| xr[col * self.block + k]).collect();
                    for (col, val) in mat.mul(&v).into_iter().enumerate() {
                        yr[col * self.block + k] += val;
                    }
                }
            });
    }

    fn prepare(&mut self, c: f64) -> Result<()> {
        let m = self.m;
        let mut t_diag: [Vec<f64>; 2] = Default::default();
        let mut t_off: [Vec<f64>; 2] = Default::default();
        let mut q: [Vec<f64>; 2] = Default::default();
        let mut schur = [0.0; 2];
        for comp in 0..2 {
            let s = c * self.modulus[comp] / self.hy;
            let diag = vec![self.rho * self.hy + 2.0 * s; m - 1];
            let off = vec![-s; m.saturating_sub(2)];
            let mut b = vec![0.0; m - 1];
            b[0] -= s;
            b[m - 2] -= s;
            let qc = solve_sym_tridiagonal(&diag, &off, &b);
            schur[comp] = b.iter().zip(&qc).map(|(x, y)| x * y).sum();
            t_diag[comp] = diag;
            t_off[comp] = off;
            q[comp] = qc;
        }
        let mut rows = Vec::with_capacity(self.nrow);
        for r in 0..self.nrow {
            let mut pair: [Option<BandCholesky>; 2] = [None, None];
            for comp in 0..2 {
                if !self.has_v[comp] {
                    continue;
                }
                let s = c * self.modulus[comp] / self.hy;
                let mut mat = match self.macro_row(r, comp) {
                    Some(mut k) => {
                        k.scale(c);
                        k
                    }
                    None => SymBanded::zeros(self.ncol, 2),
                };
                let d: Vec<f64> = (0..self.ncol)
                    .map(|col| self.area(r, col) * (self.rho1 + self.rho * self.hy + 2.0 * s - schur[comp]))
                    .collect();
                mat.add_diagonal(&d);
                pair[comp] = Some(mat.cholesky()?);
            }
            rows.push(pair);
        }
        self.shifted = Some(Shifted {
            c,
            t_diag,
            t_off,
            q,
            rows,
        });
        Ok(())
    }

    fn solve_shifted(&self, rhs: &[f64], out: &mut [f64]) -> Result<()> {
        let sh = self
            .shifted
            .as_ref()
            .ok_or_else(|| Error::SolveFailure("system not prepared".into()))?;
        let len = self.row_len();
        let m = self.m;
        out.par_chunks_mut(len)
            .zip(rhs.par_chunks(len))
            .enumerate()
            .for_each(|(r, (or, rr))| {
                for comp in 0..2 {
                    let w0 = self.w_slot(comp);
                    let s = sh.c * self.modulus[comp] / self.hy;
                    // z = T̂⁻¹ r_w / A per node
                    let mut z: Vec<Vec<f64>> = Vec::with_capacity(self.ncol);
                    for col in 0..self.ncol {
                        let a = self.area(r, col);
                        let base = col * self.block + w0;
                        let rw: Vec<f64> = rr[base..base + m - 1].iter().map(|v| v / a).collect();
                        z.push(solve_sym_tridiagonal(&sh.t_diag[comp], &sh.t_off[comp], &rw));
                    }
                    let mut v = vec![0.0; self.ncol];
                    if let Some(k) = self.v_slot(comp) {
                        let mut reff: Vec<f64> = (0..self.ncol)
                            .map(|col| {
                                let zc = &z[col];
                                // A b̂ᵀ z with b̂ = −s (e_first + e_last)
                                rr[col * self.block + k] + self.area(r, col) * s * (zc[0] + zc[m - 2])
                            })
                            .collect();
                        sh.rows[r][comp]
                            .as_ref()
                            .expect("factored")
                            .solve_in_place(&mut reff);
                        v = reff;
                        for col in 0..self.ncol {
                            or[col * self.block + k] = v[col];
                        }
                    }
                    for col in 0..self.ncol {
                        let base = col * self.block + w0;
                        for kk in 0..m - 1 {
                            or[base + kk] = z[col][kk] - v[col] * sh.q[comp][kk];
                        }
                    }
                }
            });
        Ok(())
    }
}

/// Micro profiles at every macro node at one sampled time. For node `n`,
/// `data[n * 2(m+1) ..]` holds `u01` then `u03` on the `m + 1` micro nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroSnapshot {
    pub t: f64,
    pub cells: usize,
    pub theta: f64,
    pub data: Vec<f64>,
}

impl MicroSnapshot {
    pub fn profile(&self, node: usize) -> MicroProfile {
        let s = 2 * (self.cells + 1);
        let d = &self.data[node * s..(node + 1) * s];
        MicroProfile {
            u1: d[..self.cells + 1].to_vec(),
            u3: d[self.cells + 1..].to_vec(),
        }
    }

    /// Linear interpolation of the profile of `node` at soft coordinate
    /// `z ∈ [0, 1 − ϑ]`.
    pub fn eval(&self, node: usize, z: f64) -> [f64; 2] {
        let s = 2 * (self.cells + 1);
        let d = &self.data[node * s..(node + 1) * s];
        let hy = (1.0 - self.theta) / self.cells as f64;
        let pos = (z / hy).clamp(0.0, self.cells as f64);
        let k = (pos.floor() as usize).min(self.cells - 1);
        let w = pos - k as f64;
        let m1 = self.cells + 1;
        [
            (1.0 - w) * d[k] + w * d[k + 1],
            (1.0 - w) * d[m1 + k] + w * d[m1 + k + 1],
        ]
    }
}

#[derive(Debug, Clone)]
pub struct TwoScaleState {
    /// Layer displacement `v` and its velocity.
    pub v: Trajectory,
    /// Cell mean `u = ∫_Y u0 dy` and its velocity.
    pub u_mean: Trajectory,
    pub micro: Vec<MicroSnapshot>,
    pub energy: EnergyTrace,
    pub theta: f64,
}

/// Implicit average-acceleration march of the coupled macro + micro system.
pub fn solve_effective_critical(ep: &EffectiveProblem) -> Result<TwoScaleState> {
    let mut sys = CriticalSystem::new(ep)?;
    let g = ep.grid.clone();
    let loads = &ep.setup.loads;
    let a0 = PlaneField::from_fn(g.clone(), |x, z| (loads.a0)(x, z, 0.0));
    let b0 = PlaneField::from_fn(g.clone(), |x, z| (loads.b0)(x, z, 0.0));
    let u0 = sys.lift(&a0);
    let v0 = sys.lift(&b0);
    let time: TimeSpec = ep.setup.time;
    let steps = time.steps();
    let stride = time.stride();
    let mut v = empty_traj();
    let mut mean = empty_traj();
    let mut micro = Vec::new();
    let mass = sys.mass.clone();
    let shape = sys.clone();
    let f = loads.f.clone();
    let mut unit = vec![0.0; sys.dim()];
    let force = |t: f64, out: &mut [f64]| {
        let fx = PlaneField::from_fn(g.clone(), |x, z| f(x, z, t));
        unit.copy_from_slice(&shape.lift(&fx));
        for ((o, m), u) in out.iter_mut().zip(&mass).zip(&unit) {
            *o = m * u;
        }
    };
    let observer_sys = sys.clone();
    let energy = integrate(&mut sys, &u0, &v0, time.step(), steps, force, |step, t, x, xd| {
        if step % stride == 0 || step == steps {
            let (fv, fm) = observer_sys.fields(x);
            let (dv, dm) = observer_sys.fields(xd);
            v.times.push(t);
            v.u.push(fv);
            v.v.push(dv);
            mean.times.push(t);
            mean.u.push(fm);
            mean.v.push(dm);
            micro.push(observer_sys.snapshot(t, x));
        }
    })?;
    Ok(TwoScaleState {
        v,
        u_mean: mean,
        micro,
        energy,
        theta: ep.regime.theta,
    })
}

fn empty_traj() -> Trajectory {
    Trajectory {
        times: Vec::new(),
        u: Vec::new(),
        v: Vec::new(),
    }
}

/// Static micro problem `−(E u0')' = ρ f` on the soft interval with
/// `u0 = v` at both ends.
pub fn solve_micro_static(
    v: [f64; 2],
    f: [f64; 2],
    cells: usize,
    theta: f64,
    mu0: f64,
    lambda0: f64,
    rho: f64,
) -> Result<MicroProfile> {
    if cells < 2 || !(0.0..1.0).contains(&theta) {
        return Err(Error::InvalidParameter("micro problem needs >= 2 cells and 0 <= theta < 1".into()));
    }
    let h = (1.0 - theta) / cells as f64;
    let modulus = [mu0, lambda0 + 2.0 * mu0];
    let mut out = [vec![0.0; cells + 1], vec![0.0; cells + 1]];
    for c in 0..2 {
        let s = modulus[c] / h;
        let diag = vec![2.0 * s; cells - 1];
        let off = vec![-s; cells - 2];
        let mut rhs = vec![rho * f[c] * h; cells - 1];
        rhs[0] += s * v[c];
        rhs[cells - 2] += s * v[c];
        let w = solve_sym_tridiagonal(&diag, &off, &rhs);
        out[c][0] = v[c];
        out[c][cells] = v[c];
        out[c][1..cells].copy_from_slice(&w);
    }
    let [u1, u3] = out;
    Ok(MicroProfile { u1, u3 })
}

/// `u0(x, t, x3/ε)` on the nodes of `fine`, which must share the macro grid
/// coordinates. Nodes inside a stiff layer take `v`; the others take the
/// micro profile of their own macro node at the wrapped cell coordinate,
/// interpolated linearly.
pub fn corrector_field(ts: &TwoScaleState, ls: &LayerSet, fine: &Arc<Grid2d>) -> Result<Trajectory> {
    let macro_grid = ts.v.grid();
    if macro_grid.x1 != fine.x1 || macro_grid.x3 != fine.x3 {
        return Err(Error::GridMismatch("corrector needs the fine grid to match the macro grid".into()));
    }
    if !ls.periodic {
        return Err(Error::NotPeriodic);
    }
    let eps = ls.epsilon;
    let theta = ts.theta;
    let mut out = empty_traj();
    for (s, snap) in ts.micro.iter().enumerate() {
        let v = &ts.v.u[s];
        let mut u = PlaneField::zeros(fine.clone());
        for j in 0..fine.x3.len() {
            let x3 = fine.x3[j];
            let d = ls.nearest(x3).map(|c| (x3 - ls.centers[c]).abs());
            let stiff = d.is_some_and(|d| d <= 0.5 * ls.thickness * (1.0 + 1e-9));
            let z = (x3 / eps - 0.5 * theta).rem_euclid(1.0).min(1.0 - theta);
            for i in 0..fine.x1.len() {
                let n = fine.node(i, j);
                u.u[n] = if stiff { v.u[n] } else { snap.eval(n, z) };
            }
        }
        out.times.push(snap.t);
        out.u.push(u);
        out.v.push(PlaneField::zeros(fine.clone()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::EffectiveSetup;
    use crate::fine_solver::Loads;
    use crate::operators::{traction_jump_1d, MaterialScaling};

    fn problem(a: f64, b: f64, c2: f64, loads: Loads) -> EffectiveProblem {
        let sc = MaterialScaling {
            a,
            b,
            c1: 1.0,
            c2,
            l: 1.0,
            soft: SoftClass::Critical { mu0: 1.0, lambda0: 0.5 },
            rho: 1.0,
            rho1_bar: 2.0,
        };
        let grid = Arc::new(Grid2d::uniform(1.0, 1.0, 6, 5));
        let setup = EffectiveSetup {
            loads,
            time: TimeSpec {
                t_final: 0.5,
                dt: Some(0.01),
                samples: 5,
            },
            micro_cells: 6,
            ..EffectiveSetup::default()
        };
        EffectiveProblem::new(&sc, grid, vec![1.0; 6], true, setup).unwrap()
    }

    fn bump() -> Loads {
        let s = |x: f64, z: f64| (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * z).sin();
        Loads {
            f: Arc::new(move |x, z, t| [s(x, z) * (1.0 + t), -s(x, z)]),
            a0: Arc::new(move |x, z, _| [0.1 * s(x, z), 0.2 * s(x, z)]),
            b0: Arc::new(move |x, z, _| [0.0, 0.3 * s(x, z)]),
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let ts = solve_effective_critical(&problem(1.0, 2.0, 1.0, Loads::default())).unwrap();
        assert!(ts.v.u.iter().all(|u| u.max_abs() == 0.0));
        assert!(ts.micro.iter().all(|m| m.data.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn shifted_solve_inverts_operator() {
        let ep = problem(1.0, 1.0, 0.25, Loads::default());
        let mut sys = CriticalSystem::new(&ep).unwrap();
        let n = sys.dim();
        let x: Vec<f64> = (0..n).map(|i| (i * 37 % 101) as f64 / 50.0 - 1.0).collect();
        let c = 0.3;
        sys.prepare(c).unwrap();
        let mut kx = vec![0.0; n];
        sys.apply_k(&x, &mut kx);
        let rhs: Vec<f64> = (0..n).map(|i| sys.mass()[i] * x[i] + c * kx[i]).collect();
        let mut y = vec![0.0; n];
        sys.solve_shifted(&rhs, &mut y).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn operator_is_symmetric() {
        let ep = problem(1.0, 1.0, 0.25, Loads::default());
        let sys = CriticalSystem::new(&ep).unwrap();
        let n = sys.dim();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).cos()).collect();
        let (mut kx, mut ky) = (vec![0.0; n], vec![0.0; n]);
        sys.apply_k(&x, &mut kx);
        sys.apply_k(&y, &mut ky);
        let a: f64 = y.iter().zip(&kx).map(|(a, b)| a * b).sum();
        let b: f64 = x.iter().zip(&ky).map(|(a, b)| a * b).sum();
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        assert!(x.iter().zip(&kx).map(|(a, b)| a * b).sum::<f64>() > 0.0);
    }

    #[test]
    fn energy_is_conserved_and_balanced() {
        let mut loads = bump();
        loads.f = Arc::new(|_, _, _| [0.0, 0.0]);
        let ts = solve_effective_critical(&problem(1.0, 1.0, 0.25, loads)).unwrap();
        assert!(ts.energy.max_step_drift() < 1e-12);
        let ts = solve_effective_critical(&problem(1.0, 2.0, 1.0, bump())).unwrap();
        assert!(ts.energy.max_residual() < 1e-10);
    }

    #[test]
    fn infinite_kappa_pins_layers() {
        let ts = solve_effective_critical(&problem(4.0, 1.0, 0.25, bump())).unwrap();
        for (u, m) in ts.v.u.iter().zip(&ts.micro) {
            assert_eq!(u.max_abs(), 0.0);
            let g = &ts.v.u[0].grid;
            let p = m.profile(g.node(2, 2));
            assert_eq!((p.u1[0], p.u3[p.cells()]), (0.0, 0.0));
        }
        assert!(ts.micro.last().unwrap().data.iter().any(|x| *x != 0.0));
    }

    #[test]
    fn static_micro_with_constant_v_is_flat() {
        let p = solve_micro_static([0.4, -1.2], [0.0, 0.0], 8, 0.0, 1.0, 0.5, 1.0).unwrap();
        assert!(p.u1.iter().all(|u| (u - 0.4).abs() < 1e-14));
        assert!(p.u3.iter().all(|u| (u + 1.2).abs() < 1e-14));
        let g = traction_jump_1d(&p, 1.0, 0.5, 0.0);
        assert!(g.iter().all(|x| x.abs() < 1e-12));
        // uniform load: parabola with symmetric slopes, traction = total load
        let p = solve_micro_static([0.0, 0.0], [1.0, 2.0], 10, 0.2, 1.0, 0.5, 1.5).unwrap();
        let g = traction_jump_1d(&p, 1.0, 0.5, 0.2);
        let h = 0.8 / 10.0;
        assert!((g[0] - 1.5 * 1.0 * (0.8 - h)).abs() < 1e-12);
        assert!((g[2] - 1.5 * 2.0 * (0.8 - h)).abs() < 1e-12);
    }

    #[test]
    fn corrector_examples() {
        use crate::microstructure::{build_layers, LayerMode};
        let eps = 0.25;
        let ls = build_layers(LayerMode::Periodic, eps, eps * eps, 1.0, 0.5).unwrap();
        let g = Arc::new(Grid2d::uniform(1.0, 1.0, 4, 8));
        let mut data = vec![0.0; g.num_nodes() * 2 * 5];
        // affine micro profile u01 = y, u03 = 2 with v = (0, 2)
        for n in 0..g.num_nodes() {
            for k in 0..=4 {
                data[n * 10 + k] = k as f64 / 4.0;
                data[n * 10 + 5 + k] = 2.0;
            }
        }
        let mut v = PlaneField::zeros(g.clone());
        v.u.iter_mut().for_each(|x| *x = [0.0, 2.0]);
        let ts = TwoScaleState {
            v: Trajectory::single(v.clone()),
            u_mean: Trajectory::single(v),
            micro: vec![MicroSnapshot {
                t: 0.0,
                cells: 4,
                theta: 0.0,
                data,
            }],
            energy: EnergyTrace::default(),
            theta: 0.0,
        };
        let c = corrector_field(&ts, &ls, &g).unwrap();
        for j in 0..g.x3.len() {
            let x3 = g.x3[j];
            let u = c.u[0].at(1, j);
            assert_eq!(u[1], 2.0);
            let stiff = ls.query(x3).in_stiff;
            let expect = if stiff { 0.0 } else { (x3 / eps).rem_euclid(1.0) };
            assert!((u[0] - expect).abs() < 1e-12, "{x3}: {} vs {expect}", u[0]);
        }
        let other = Arc::new(Grid2d::uniform(1.0, 1.0, 4, 9));
        assert!(matches!(corrector_field(&ts, &ls, &other), Err(Error::GridMismatch(_))));
    }
}
