//! Average-acceleration Newmark (β = 1/4, γ = 1/2) for `M ü + K u = F(t)`
//! with diagonal `M`.
//!
//! With `E = ½ v·Mv + ½ u·Ku` the scheme satisfies exactly
//! `E_{n+1} − E_n = dt/4 (v_n + v_{n+1})·(F_n + F_{n+1})`,
//! which the integrator accumulates as the discrete work.

use crate::error::{Error, Result};
use crate::linalg::{dot, BandCholesky, SymBanded};

pub const BETA: f64 = 0.25;
pub const GAMMA: f64 = 0.5;

/// Linear second-order system with a diagonal mass.
pub trait SecondOrderSystem {
    fn dim(&self) -> usize;
    fn mass(&self) -> &[f64];
    fn apply_k(&self, x: &[f64], y: &mut [f64]);
    /// Prepares solves with `M + c K`.
    fn prepare(&mut self, c: f64) -> Result<()>;
    fn solve_shifted(&self, rhs: &[f64], out: &mut [f64]) -> Result<()>;

    fn energy(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut ku = vec![0.0; u.len()];
        self.apply_k(u, &mut ku);
        let kin: f64 = v.iter().zip(self.mass()).map(|(v, m)| m * v * v).sum();
        0.5 * (kin + dot(u, &ku))
    }
}

/// Stiffness in banded form, factored once per time step size.
#[derive(Debug, Clone)]
pub struct BandedSystem {
    pub k: SymBanded,
    pub m: Vec<f64>,
    fac: Option<BandCholesky>,
}

impl BandedSystem {
    pub fn new(k: SymBanded, m: Vec<f64>) -> Self {
        assert_eq!(k.dim(), m.len());
        Self { k, m, fac: None }
    }
}

impl SecondOrderSystem for BandedSystem {
    fn dim(&self) -> usize {
        self.m.len()
    }

    fn mass(&self) -> &[f64] {
        &self.m
    }

    fn apply_k(&self, x: &[f64], y: &mut [f64]) {
        self.k.matvec(x, y);
    }

    fn prepare(&mut self, c: f64) -> Result<()> {
        let mut a = self.k.clone();
        a.scale(c);
        a.add_diagonal(&self.m);
        self.fac = Some(a.cholesky()?);
        Ok(())
    }

    fn solve_shifted(&self, rhs: &[f64], out: &mut [f64]) -> Result<()> {
        let fac = self
            .fac
            .as_ref()
            .ok_or_else(|| Error::SolveFailure("system not prepared".into()))?;
        out.copy_from_slice(rhs);
        fac.solve_in_place(out);
        Ok(())
    }
}

/// Energy and cumulative work at every step, starting at `t = 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub work: Vec<f64>,
}

impl EnergyTrace {
    /// `|E(τ) − E(0) − W(τ)| / max(E(0), E(τ), floor)` per step.
    pub fn residuals(&self) -> Vec<f64> {
        let e0 = self.energy.first().copied().unwrap_or(0.0);
        self.energy
            .iter()
            .zip(&self.work)
            .map(|(e, w)| {
                let scale = e0.abs().max(e.abs()).max(f64::MIN_POSITIVE);
                let r = (e - e0 - w).abs();
                if r == 0.0 {
                    0.0
                } else {
                    r / scale
                }
            })
            .collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals().into_iter().fold(0.0, f64::max)
    }

    /// Largest relative change of the energy between consecutive steps.
    pub fn max_step_drift(&self) -> f64 {
        self.energy
            .windows(2)
            .map(|w| (w[1] - w[0]).abs() / w[0].abs().max(w[1].abs()).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

/// Marches `steps` steps of size `dt` from `(u0, v0)`. `force(t, out)`
/// fills the load vector; `observe(step, t, u, v)` is called at step 0
/// and after every step.
pub fn integrate<S: SecondOrderSystem>(
    sys: &mut S,
    u0: &[f64],
    v0: &[f64],
    dt: f64,
    steps: usize,
    mut force: impl FnMut(f64, &mut [f64]),
    mut observe: impl FnMut(usize, f64, &[f64], &[f64]),
) -> Result<EnergyTrace> {
    let n = sys.dim();
    if u0.len() != n || v0.len() != n {
        return Err(Error::InvalidParameter("initial data length does not match the system".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter("time step must be positive".into()));
    }
    sys.prepare(BETA * dt * dt)?;
    let mass = sys.mass().to_vec();
    let mut u = u0.to_vec();
    let mut v = v0.to_vec();
    let mut f = vec![0.0; n];
    force(0.0, &mut f);
    let mut ku = vec![0.0; n];
    sys.apply_k(&u, &mut ku);
    let mut a: Vec<f64> = (0..n)
        .map(|i| if mass[i] > 0.0 { (f[i] - ku[i]) / mass[i] } else { 0.0 })
        .collect();
    let mut trace = EnergyTrace::default();
    trace.times.push(0.0);
    trace.energy.push(sys.energy(&u, &v));
    trace.work.push(0.0);
    observe(0, 0.0, &u, &v);

    let mut pred = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut a_new = vec![0.0; n];
    let mut f_new = vec![0.0; n];
    let mut work = 0.0;
    for step in 1..=steps {
        let t = step as f64 * dt;
        force(t, &mut f_new);
        for i in 0..n {
            pred[i] = u[i] + dt * v[i] + (0.5 - BETA) * dt * dt * a[i];
        }
        sys.apply_k(&pred, &mut ku);
        for i in 0..n {
            rhs[i] = f_new[i] - ku[i];
        }
        sys.solve_shifted(&rhs, &mut a_new)?;
        let mut dw = 0.0;
        for i in 0..n {
            let v_new = v[i] + dt * ((1.0 - GAMMA) * a[i] + GAMMA * a_new[i]);
            u[i] = pred[i] + BETA * dt * dt * a_new[i];
            dw += (v[i] + v_new) * (f[i] + f_new[i]);
            v[i] = v_new;
        }
        work += 0.25 * dt * dw;
        std::mem::swap(&mut a, &mut a_new);
        std::mem::swap(&mut f, &mut f_new);
        if !u.iter().chain(&v).all(|x| x.is_finite()) {
            return Err(Error::NonFiniteState { time: t });
        }
        trace.times.push(t);
        trace.energy.push(sys.energy(&u, &v));
        trace.work.push(work);
        observe(step, t, &u, &v);
    }
    Ok(trace)
}
