use crate::error::{Error, Result};
use crate::fem::{assemble_stiffness, nodal_load, solve_spd, DofMap};
use crate::fine_solver::{run_march, FineState};
use crate::grid::PlaneField;
use crate::linalg::SymBanded;
use crate::newmark::BandedSystem;
use crate::operators::{bending_coefficients, clamped_bending_matrix, membrane_coefficient, membrane_matrix, uniform_step, SoftClass};

use super::{EffectiveProblem, InterlayerClass};

/// Assembled macro operators of the unit / intermediate models.
#[derive(Debug, Clone)]
pub struct LayeredOperators {
    pub dofs: DofMap,
    pub k: SymBanded,
    pub mass: Vec<f64>,
    /// `(ρ(1 − ϑn) + n ρ̄1) × dual area` per node and component.
    pub node_mass: Vec<[f64; 2]>,
    /// Dual area per node and component.
    pub node_area: Vec<[f64; 2]>,
}

pub fn assemble_layered(ep: &EffectiveProblem) -> Result<LayeredOperators> {
    let reg = ep.regime;
    let g = &ep.grid;
    if reg.class == InterlayerClass::Critical {
        return Err(Error::RegimeMismatch("critical interlayers need the two-scale solver".into()));
    }
    if reg.class == InterlayerClass::Unit && reg.theta > 0.0 {
        return Err(Error::RegimeMismatch("unit interlayers require r/ε → 0".into()));
    }
    let dofs = DofMap::build(g, |i, j, c| ep.is_fixed(i, j, c));
    let mut k = SymBanded::zeros(dofs.ndof, dofs.bandwidth.max(4));
    if let SoftClass::Unit { mu, lambda } = ep.scaling.soft {
        let lame = vec![(lambda, mu); g.n1() * g.n3()];
        k.axpy(1.0, &assemble_stiffness(g, &dofs, &lame).widened(k.bandwidth()));
    }
    let add_row = |k: &mut SymBanded, row: &SymBanded, j: usize, c: usize, w: f64| {
        for p in 0..row.dim() {
            for q in p.saturating_sub(row.bandwidth())..=p {
                let a = row.get(p, q);
                if a == 0.0 {
                    continue;
                }
                if let (Some(dp), Some(dq)) = (dofs.map[g.node(p, j)][c], dofs.map[g.node(q, j)][c]) {
                    k.add(dp, dq, w * a);
                }
            }
        }
    };
    if reg.membrane_active() {
        let m = membrane_matrix(&g.x1);
        let c = reg.k * membrane_coefficient(reg.l);
        for (j, &n) in ep.n_rows.iter().enumerate() {
            if n > 0.0 {
                add_row(&mut k, &m, j, 0, c * n * g.dual3(j));
            }
        }
    }
    if reg.bending_active() {
        let h = uniform_step(&g.x1)?;
        let b = clamped_bending_matrix(h, g.x1.len());
        let c = reg.kappa / 6.0 * bending_coefficients(reg.l).0;
        for (j, &n) in ep.n_rows.iter().enumerate() {
            if n > 0.0 {
                add_row(&mut k, &b, j, 1, c * n * g.dual3(j));
            }
        }
    }
    let sc = &ep.scaling;
    let mut node_mass = Vec::with_capacity(g.num_nodes());
    let mut node_area = Vec::with_capacity(g.num_nodes());
    for (j, &n) in ep.n_rows.iter().enumerate() {
        let rho = sc.rho * (1.0 - reg.theta * n) + n * sc.rho1_bar;
        for i in 0..g.x1.len() {
            let a = g.dual1(i) * g.dual3(j);
            node_mass.push([rho * a; 2]);
            node_area.push([a; 2]);
        }
    }
    let mass = dofs.reduce_nodal(&node_mass);
    Ok(LayeredOperators {
        dofs,
        k,
        mass,
        node_mass,
        node_area,
    })
}

fn march(ep: &EffectiveProblem) -> Result<FineState> {
    let ops = assemble_layered(ep)?;
    let g = ep.grid.clone();
    let loads = &ep.setup.loads;
    let a0 = PlaneField::from_fn(g.clone(), |x, z| (loads.a0)(x, z, 0.0));
    let b0 = PlaneField::from_fn(g.clone(), |x, z| (loads.b0)(x, z, 0.0));
    let u0 = ops.dofs.gather(&a0);
    let v0 = ops.dofs.gather(&b0);
    let mut sys = BandedSystem::new(ops.k, ops.mass);
    run_march(&mut sys, &ops.dofs, &ops.node_mass, g, &u0, &v0, &loads.f, &ep.setup.time)
}

/// Unit interlayers: isotropic soft stiffness plus the n-weighted layer terms,
/// density `ρ + n ρ̄1`.
pub fn solve_effective_stiff(ep: &EffectiveProblem) -> Result<FineState> {
    if ep.regime.class != InterlayerClass::Unit {
        return Err(Error::RegimeMismatch(format!("{:?} interlayers given to the stiff solver", ep.regime.class)));
    }
    march(ep)
}

/// Intermediate interlayers: layer terms only, density `ρ(1 − ϑn) + n ρ̄1`.
pub fn solve_effective_intermediate(ep: &EffectiveProblem) -> Result<FineState> {
    if ep.regime.class != InterlayerClass::Intermediate {
        return Err(Error::RegimeMismatch(format!(
            "{:?} interlayers given to the intermediate solver",
            ep.regime.class
        )));
    }
    march(ep)
}

/// Time-independent variant: `K u = ∫ f ψ` with the layered operators.
pub fn solve_effective_static(ep: &EffectiveProblem, f: &dyn Fn(f64, f64) -> [f64; 2]) -> Result<PlaneField> {
    let ops = assemble_layered(ep)?;
    let rhs = nodal_load(&ep.grid, &ops.dofs, &ops.node_area, f);
    let x = solve_spd(&ops.k, &rhs, ep.setup.solver, ep.setup.tol)?;
    let mut u = PlaneField::zeros(ep.grid.clone());
    ops.dofs.scatter_into(&x, &mut u);
    Ok(u)
}
