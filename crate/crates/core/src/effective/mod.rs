//! Homogenized models: regime classification, the layered macro models
//! (unit and intermediate interlayers) and the two-scale critical model.

mod critical;
mod layered;

use std::sync::Arc;

use serde::Serialize;

pub use critical::{
    corrector_field, solve_effective_critical, solve_micro_static, CriticalSystem, MicroSnapshot, TwoScaleState,
};
pub use layered::{
    assemble_layered, solve_effective_intermediate, solve_effective_static, solve_effective_stiff, LayeredOperators,
};

use crate::error::{Error, Result};
use crate::fem::LinearSolver;
use crate::fine_solver::{Loads, TimeSpec};
use crate::grid::Grid2d;
use crate::microstructure::{coarse_average, n_eps_field, LayerSet};
use crate::operators::{MaterialScaling, SoftClass};

/// Relative slack when comparing exponents against zero.
const EXP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InterlayerClass {
    Unit,
    Intermediate,
    Critical,
}

/// Scaling limits `k`, `κ`, `ϑ`, `l` and the interlayer class.
/// Infinite limits are stored as `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Regime {
    pub class: InterlayerClass,
    pub k: f64,
    pub kappa: f64,
    pub theta: f64,
    pub l: f64,
}

impl Regime {
    /// In-plane components vanish where `n > 0`.
    pub fn constrains_in_plane(&self) -> bool {
        self.k.is_infinite()
    }

    /// All components vanish where `n > 0`.
    pub fn constrains_all(&self) -> bool {
        self.kappa.is_infinite()
    }

    pub fn membrane_active(&self) -> bool {
        self.k.is_finite()
    }

    pub fn bending_active(&self) -> bool {
        self.kappa.is_finite() && self.kappa > 0.0 && self.k.is_infinite()
    }

    pub fn describe(&self) -> String {
        let f = |x: f64| if x.is_infinite() { "inf".to_string() } else { format!("{x}") };
        format!(
            "{:?} k={} kappa={} theta={} l={}",
            self.class,
            f(self.k),
            f(self.kappa),
            self.theta,
            self.l
        )
    }
}

fn limit(coeff: f64, exponent: f64) -> f64 {
    if exponent.abs() <= EXP_TOL {
        coeff
    } else if exponent < 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// `k = c1 c2 lim ε^(b-1-a)`, `κ = c1 c2³ lim ε^(3b-1-a)`, `ϑ = c2 1{b = 1}`.
pub fn classify_regime(sc: &MaterialScaling) -> Result<Regime> {
    sc.validate()?;
    let ek = sc.b - 1.0 - sc.a;
    if ek > EXP_TOL {
        return Err(Error::UnsupportedScaling(format!(
            "k = 0 since a = {} < b - 1 = {}",
            sc.a,
            sc.b - 1.0
        )));
    }
    let k = limit(sc.c1 * sc.c2, ek);
    let kappa = limit(sc.c1 * sc.c2.powi(3), 3.0 * sc.b - 1.0 - sc.a);
    let theta = if (sc.b - 1.0).abs() <= EXP_TOL { sc.c2 } else { 0.0 };
    let class = match sc.soft {
        SoftClass::Unit { .. } => InterlayerClass::Unit,
        SoftClass::Intermediate { .. } => InterlayerClass::Intermediate,
        SoftClass::Critical { .. } => InterlayerClass::Critical,
    };
    Ok(Regime {
        class,
        k,
        kappa,
        theta,
        l: sc.l,
    })
}

#[derive(Debug, Clone)]
pub struct EffectiveSetup {
    pub loads: Loads,
    pub time: TimeSpec,
    pub solver: LinearSolver,
    pub tol: f64,
    /// Cells across the soft interval of each micro problem.
    pub micro_cells: usize,
}

impl Default for EffectiveSetup {
    fn default() -> Self {
        Self {
            loads: Loads::default(),
            time: TimeSpec::default(),
            solver: LinearSolver::Direct,
            tol: 1e-10,
            micro_cells: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EffectiveProblem {
    pub regime: Regime,
    pub scaling: MaterialScaling,
    /// Macro grid, Dirichlet on the whole boundary.
    pub grid: Arc<Grid2d>,
    /// Layer density on every x3 row of the grid.
    pub n_rows: Vec<f64>,
    /// Whether the layers come from the periodic construction.
    pub periodic_layers: bool,
    pub setup: EffectiveSetup,
}

impl EffectiveProblem {
    pub fn new(
        sc: &MaterialScaling,
        grid: Arc<Grid2d>,
        n_rows: Vec<f64>,
        periodic_layers: bool,
        setup: EffectiveSetup,
    ) -> Result<Self> {
        let regime = classify_regime(sc)?;
        if grid.periodic_x1 {
            return Err(Error::GridMismatch("effective models use Dirichlet conditions in x1".into()));
        }
        if n_rows.len() != grid.x3.len() {
            return Err(Error::GridMismatch(format!(
                "{} density rows for {} grid rows",
                n_rows.len(),
                grid.x3.len()
            )));
        }
        if n_rows.iter().any(|n| !(*n >= 0.0 && n.is_finite())) {
            return Err(Error::InvalidParameter("layer density must be finite and non-negative".into()));
        }
        setup.time.validate()?;
        Ok(Self {
            regime,
            scaling: *sc,
            grid,
            n_rows,
            periodic_layers,
            setup,
        })
    }

    /// Whether component `c` of node `(i, j)` is eliminated.
    pub fn is_fixed(&self, i: usize, j: usize, c: usize) -> bool {
        if self.grid.is_boundary(i, j) {
            return true;
        }
        let masked = self.n_rows[j] > 0.0;
        masked && (self.regime.constrains_all() || (c == 0 && self.regime.constrains_in_plane()))
    }
}

/// Layer density on the rows of `grid`: the average of `n_ε` over windows
/// of width `window` centred at each row.
pub fn n_rows_from_layers(ls: &LayerSet, window: f64, grid: &Grid2d) -> Result<Vec<f64>> {
    let n = n_eps_field(ls);
    coarse_average(&n, window, ls.epsilon, &grid.x3)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(a: f64, b: f64, soft: SoftClass) -> MaterialScaling {
        MaterialScaling {
            a,
            b,
            c1: 2.0,
            c2: 0.5,
            l: 1.0,
            soft,
            rho: 1.0,
            rho1_bar: 1.0,
        }
    }

    const UNIT: SoftClass = SoftClass::Unit { mu: 1.0, lambda: 1.0 };

    #[test]
    fn classification_examples() {
        let r = classify_regime(&sc(0.0, 1.0, UNIT)).unwrap();
        assert_eq!((r.k, r.kappa, r.theta), (1.0, 0.0, 0.5));
        let r = classify_regime(&sc(2.0, 1.0, UNIT)).unwrap();
        assert!(r.k.is_infinite());
        assert_eq!(r.kappa, 2.0 * 0.125);
        let r = classify_regime(&sc(1.0, 2.0, UNIT)).unwrap();
        assert_eq!((r.k, r.kappa, r.theta, r.class), (1.0, 0.0, 0.0, InterlayerClass::Unit));
        let r = classify_regime(&sc(7.0, 2.0, SoftClass::Critical { mu0: 1.0, lambda0: 0.0 })).unwrap();
        assert!(r.k.is_infinite() && r.kappa.is_infinite());
        assert_eq!(r.class, InterlayerClass::Critical);
    }

    #[test]
    fn vanishing_k_is_unsupported() {
        assert!(matches!(
            classify_regime(&sc(0.5, 2.0, UNIT)),
            Err(Error::UnsupportedScaling(_))
        ));
    }
}
