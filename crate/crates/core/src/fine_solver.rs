//! Heterogeneous fine-scale problem on a layer-fitted grid.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{assemble_stiffness, nodal_area, nodal_load, nodal_mass, solve_spd, DofMap, LinearSolver};
use crate::grid::{layer_fitted_x3, linspace, Grid2d, GridSpec, PlaneField, Trajectory};
use crate::linalg::SymBanded;
use crate::microstructure::LayerSet;
use crate::newmark::{integrate, BandedSystem, EnergyTrace};
use crate::operators::MaterialScaling;

/// Vector data `g(x1, x3, t)`.
pub type VectorFn = Arc<dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync>;

pub fn zero_fn() -> VectorFn {
    Arc::new(|_, _, _| [0.0, 0.0])
}

/// Body force `f` and initial displacement / velocity `a0`, `b0`
/// (the time argument of the latter two is ignored).
#[derive(Clone)]
pub struct Loads {
    pub f: VectorFn,
    pub a0: VectorFn,
    pub b0: VectorFn,
}

impl Default for Loads {
    fn default() -> Self {
        Self {
            f: zero_fn(),
            a0: zero_fn(),
            b0: zero_fn(),
        }
    }
}

impl std::fmt::Debug for Loads {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Loads { .. }")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TimeSpec {
    pub t_final: f64,
    /// Step size; `None` means `t_final / 1024`.
    pub dt: Option<f64>,
    /// Number of stored snapshots after `t = 0` (the final time is always stored).
    pub samples: usize,
}

impl Default for TimeSpec {
    fn default() -> Self {
        Self {
            t_final: 1.0,
            dt: None,
            samples: 16,
        }
    }
}

impl TimeSpec {
    pub fn step(&self) -> f64 {
        self.dt.unwrap_or(self.t_final / 1024.0)
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.step()).round().max(1.0) as usize
    }

    pub fn stride(&self) -> usize {
        (self.steps() / self.samples.max(1)).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0 && self.step() > 0.0) {
            return Err(Error::InvalidParameter("final time and time step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Zero displacement on the whole boundary.
    DirichletAll,
    /// Zero displacement at `x3 ∈ {0, L}`, periodic in x1. Test harness only.
    DirichletX3PeriodicX1,
}

#[derive(Debug, Clone)]
pub struct FineSetup {
    pub width: f64,
    pub grid: GridSpec,
    pub loads: Loads,
    pub time: TimeSpec,
    pub boundary: Boundary,
    pub solver: LinearSolver,
    pub tol: f64,
}

impl Default for FineSetup {
    fn default() -> Self {
        Self {
            width: 1.0,
            grid: GridSpec::default(),
            loads: Loads::default(),
            time: TimeSpec::default(),
            boundary: Boundary::DirichletAll,
            solver: LinearSolver::Direct,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FineReport {
    pub cells_x1: usize,
    pub cells_x3: usize,
    pub stiff_cells: usize,
    pub cells_per_layer: usize,
    /// `μ1ε / μ0ε`.
    pub contrast: f64,
}

#[derive(Debug, Clone)]
pub struct FineProblem {
    pub layers: LayerSet,
    pub scaling: MaterialScaling,
    pub epsilon: f64,
    pub grid: Arc<Grid2d>,
    /// Per cell, row by row.
    pub stiff: Vec<bool>,
    pub lame: Vec<(f64, f64)>,
    pub density: Vec<f64>,
    pub setup: FineSetup,
}

/// Assembled discrete operators of a fine problem.
#[derive(Debug, Clone)]
pub struct FineOperators {
    pub dofs: DofMap,
    pub k: SymBanded,
    /// Lumped mass per unknown.
    pub mass: Vec<f64>,
    /// Lumped mass per node and component, before elimination.
    pub node_mass: Vec<[f64; 2]>,
}

pub fn build_fine_problem(ls: LayerSet, sc: &MaterialScaling, eps: f64, setup: FineSetup) -> Result<FineProblem> {
    sc.validate()?;
    setup.time.validate()?;
    if (ls.epsilon - eps).abs() > 1e-12 * eps {
        return Err(Error::InvalidParameter(format!(
            "layer set built for epsilon {} used at {eps}",
            ls.epsilon
        )));
    }
    let r = sc.thickness(eps);
    if !ls.is_empty() && (ls.thickness - r).abs() > 1e-9 * r {
        return Err(Error::InvalidParameter(format!(
            "layer thickness {} differs from the scaling thickness {r}",
            ls.thickness
        )));
    }
    if !(setup.width > 0.0) {
        return Err(Error::InvalidParameter("width must be positive".into()));
    }
    let x3 = layer_fitted_x3(&ls, &setup.grid)?;
    let x1 = linspace(0.0, setup.width, setup.grid.n1);
    let periodic = setup.boundary == Boundary::DirichletX3PeriodicX1;
    let grid = Arc::new(Grid2d::new(x1, x3, periodic)?);
    let (mu0, lambda0) = sc.soft_moduli(eps);
    let (mu1, lambda1) = (sc.mu1(eps), sc.lambda1(eps));
    let rho1 = sc.stiff_density(eps);
    let mut stiff = Vec::with_capacity(grid.n1() * grid.n3());
    let mut lame = Vec::with_capacity(stiff.capacity());
    let mut density = Vec::with_capacity(stiff.capacity());
    for cj in 0..grid.n3() {
        let mid = 0.5 * (grid.x3[cj] + grid.x3[cj + 1]);
        let s = ls.query(mid).in_stiff;
        for _ in 0..grid.n1() {
            stiff.push(s);
            if s {
                lame.push((lambda1, mu1));
                density.push(rho1);
            } else {
                lame.push((lambda0, mu0));
                density.push(sc.rho);
            }
        }
    }
    Ok(FineProblem {
        layers: ls,
        scaling: *sc,
        epsilon: eps,
        grid,
        stiff,
        lame,
        density,
        setup,
    })
}

impl FineProblem {
    pub fn report(&self) -> FineReport {
        let g = &self.grid;
        let stiff_rows = (0..g.n3()).filter(|&cj| self.stiff[cj * g.n1()]).count();
        FineReport {
            cells_x1: g.n1(),
            cells_x3: g.n3(),
            stiff_cells: self.stiff.iter().filter(|s| **s).count(),
            cells_per_layer: if self.layers.is_empty() {
                0
            } else {
                stiff_rows / self.layers.len()
            },
            contrast: self.scaling.contrast(self.epsilon),
        }
    }

    pub fn assemble(&self) -> FineOperators {
        let dofs = DofMap::dirichlet(&self.grid);
        let k = assemble_stiffness(&self.grid, &dofs, &self.lame);
        let node_mass = nodal_mass(&self.grid, &self.density);
        let mass = dofs.reduce_nodal(&node_mass);
        FineOperators {
            dofs,
            k,
            mass,
            node_mass,
        }
    }

    /// `∫ ρ_ε dx`.
    pub fn total_mass(&self) -> f64 {
        let g = &self.grid;
        let mut m = 0.0;
        for cj in 0..g.n3() {
            for ci in 0..g.n1() {
                m += self.density[cj * g.n1() + ci] * g.h1(ci) * g.h3(cj);
            }
        }
        m
    }
}

/// `−div σ_ε(u) = f` with the configured boundary conditions.
pub fn solve_static_fine(p: &FineProblem, f: &dyn Fn(f64, f64) -> [f64; 2]) -> Result<PlaneField> {
    let ops = p.assemble();
    let w: Vec<[f64; 2]> = nodal_area(&p.grid).into_iter().map(|a| [a, a]).collect();
    let rhs = nodal_load(&p.grid, &ops.dofs, &w, f);
    let x = solve_spd(&ops.k, &rhs, p.setup.solver, p.setup.tol)?;
    let mut u = PlaneField::zeros(p.grid.clone());
    ops.dofs.scatter_into(&x, &mut u);
    Ok(u)
}

#[derive(Debug, Clone)]
pub struct FineState {
    pub trajectory: Trajectory,
    pub energy: EnergyTrace,
}

/// Implicit average-acceleration march of `ρ_ε ü − div σ_ε(u) = ρ_ε f`.
pub fn solve_dynamic_fine(p: &FineProblem) -> Result<FineState> {
    let ops = p.assemble();
    let grid = p.grid.clone();
    let loads = &p.setup.loads;
    let a0 = PlaneField::from_fn(grid.clone(), |x, z| (loads.a0)(x, z, 0.0));
    let b0 = PlaneField::from_fn(grid.clone(), |x, z| (loads.b0)(x, z, 0.0));
    let u0 = ops.dofs.gather(&a0);
    let v0 = ops.dofs.gather(&b0);
    let mut sys = BandedSystem::new(ops.k.clone(), ops.mass.clone());
    run_march(&mut sys, &ops.dofs, &ops.node_mass, grid, &u0, &v0, &loads.f, &p.setup.time)
}

/// Shared time loop for systems whose unknowns follow a [`DofMap`] and whose
/// load is `M f` with nodal masses `node_mass`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_march(
    sys: &mut BandedSystem,
    dofs: &DofMap,
    node_mass: &[[f64; 2]],
    grid: Arc<Grid2d>,
    u0: &[f64],
    v0: &[f64],
    f: &VectorFn,
    time: &TimeSpec,
) -> Result<FineState> {
    time.validate()?;
    let steps = time.steps();
    let stride = time.stride();
    let dt = time.step();
    let mut traj = Trajectory {
        times: Vec::new(),
        u: Vec::new(),
        v: Vec::new(),
    };
    let mut buf = vec![[0.0; 2]; grid.num_nodes()];
    let force = |t: f64, out: &mut [f64]| {
        for j in 0..grid.x3.len() {
            for i in 0..grid.x1.len() {
                let n = grid.node(i, j);
                let v = f(grid.x1[i], grid.x3[j], t);
                buf[n] = [node_mass[n][0] * v[0], node_mass[n][1] * v[1]];
            }
        }
        out.copy_from_slice(&dofs.reduce_nodal(&buf));
    };
    let energy = integrate(sys, u0, v0, dt, steps, force, |step, t, u, v| {
        if step % stride == 0 || step == steps {
            let mut fu = PlaneField::zeros(grid.clone());
            let mut fv = PlaneField::zeros(grid.clone());
            dofs.scatter_into(u, &mut fu);
            dofs.scatter_into(v, &mut fv);
            traj.times.push(t);
            traj.u.push(fu);
            traj.v.push(fv);
        }
    })?;
    Ok(FineState {
        trajectory: traj,
        energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microstructure::{build_layers, LayerMode};
    use crate::operators::SoftClass;

    fn scaling() -> MaterialScaling {
        MaterialScaling {
            a: 1.0,
            b: 2.0,
            c1: 1.0,
            c2: 1.0,
            l: 1.0,
            soft: SoftClass::Unit { mu: 1.0, lambda: 1.0 },
            rho: 1.0,
            rho1_bar: 2.0,
        }
    }

    #[test]
    fn contrast_is_reported() {
        let eps = 0.125;
        let ls = build_layers(LayerMode::Periodic, eps, eps * eps, 1.0, 0.5).unwrap();
        let p = build_fine_problem(ls, &scaling(), eps, FineSetup::default()).unwrap();
        let rep = p.report();
        assert!((rep.contrast - 8.0).abs() < 1e-12);
        assert_eq!(rep.cells_per_layer, 4);
        assert_eq!(rep.stiff_cells, 7 * 4 * 16);
    }

    #[test]
    fn empty_layer_set_is_homogeneous() {
        let ls = build_layers(LayerMode::Explicit(vec![]), 0.125, 0.125 * 0.125, 1.0, 0.5).unwrap();
        let p = build_fine_problem(ls, &scaling(), 0.125, FineSetup::default()).unwrap();
        assert!(p.stiff.iter().all(|s| !s));
        assert!(p.lame.iter().all(|l| *l == (1.0, 1.0)));
    }

    #[test]
    fn coarse_grid_rejects_thin_layers() {
        let eps: f64 = 0.125;
        let mut sc = scaling();
        sc.b = 3.0;
        let ls = build_layers(LayerMode::Periodic, eps, eps.powi(3), 1.0, 0.5).unwrap();
        let setup = FineSetup {
            grid: GridSpec {
                h3_floor: 1e-3,
                ..GridSpec::default()
            },
            ..FineSetup::default()
        };
        assert!(matches!(
            build_fine_problem(ls, &sc, eps, setup),
            Err(Error::UnresolvedLayer { .. })
        ));
    }

    #[test]
    fn zero_data_gives_zero() {
        let eps = 0.25;
        let ls = build_layers(LayerMode::Periodic, eps, eps * eps, 1.0, 0.5).unwrap();
        let setup = FineSetup {
            grid: GridSpec {
                n1: 4,
                cells_per_gap: 2,
                ..GridSpec::default()
            },
            time: TimeSpec {
                t_final: 0.1,
                dt: Some(0.01),
                samples: 5,
            },
            ..FineSetup::default()
        };
        let p = build_fine_problem(ls, &scaling(), eps, setup).unwrap();
        let u = solve_static_fine(&p, &|_, _| [0.0, 0.0]).unwrap();
        assert_eq!(u.max_abs(), 0.0);
        let s = solve_dynamic_fine(&p).unwrap();
        assert_eq!(s.trajectory.len(), 6);
        assert!(s.trajectory.u.iter().all(|u| u.max_abs() == 0.0));
    }

    #[test]
    fn total_mass_is_epsilon_independent() {
        let mut masses = Vec::new();
        for eps in [0.125, 0.0625] {
            let ls = build_layers(LayerMode::Periodic, eps, eps * eps, 1.0, 0.5).unwrap();
            let p = build_fine_problem(ls, &scaling(), eps, FineSetup::default()).unwrap();
            masses.push((p.total_mass(), p.layers.len()));
        }
        // soft volume ρ (1 - N r) + N ε ρ̄1 per unit width, exactly
        for ((m, n), eps) in masses.iter().zip([0.125, 0.0625]) {
            let n = *n as f64;
            let exact = 1.0 * (1.0 - n * eps * eps) + n * eps * 2.0;
            assert!((m - exact).abs() < 1e-12);
        }
        assert!((masses[0].0 - masses[1].0).abs() < 0.25);
    }
}
