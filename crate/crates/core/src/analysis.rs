//! Diagnostics comparing fine and effective solutions: space-time L²
//! distances, pairings against the layer measure `m_ε`, the layered Korn
//! ratio, energy balances and ε-sweeps.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::effective::{
    classify_regime, corrector_field, solve_effective_critical, solve_effective_intermediate, solve_effective_static,
    solve_effective_stiff, EffectiveProblem, EffectiveSetup, InterlayerClass,
};
use crate::error::{Error, Result};
use crate::fem::LinearSolver;
use crate::fine_solver::{build_fine_problem, solve_dynamic_fine, solve_static_fine, FineSetup, Loads, TimeSpec, Boundary};
use crate::grid::{Grid2d, GridSpec, PlaneField, Trajectory, GAUSS2};
use crate::microstructure::{build_layers, LayerMode, LayerSet};
use crate::newmark::EnergyTrace;
use crate::operators::{MaterialScaling, Sym2};

/// Scalar test function `ψ(x1, x3, t, y)`; `y` is the local layer coordinate.
pub type TestFn = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;

fn time_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    if n == 1 {
        return vec![1.0];
    }
    let mut w = vec![0.0; n];
    for k in 0..n - 1 {
        let h = times[k + 1] - times[k];
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    w
}

/// `sqrt(∫∫ w |a − b|² dx dt)` with 2×2 Gauss points on the cells of `a`'s
/// grid and the trapezoid rule over the sample times (a single sample is
/// weighted by 1). With `interpolate`, `b` may live on another grid and is
/// evaluated by bilinear interpolation; otherwise the grids must coincide.
pub fn l2_error(
    a: &Trajectory,
    b: &Trajectory,
    weight: Option<&dyn Fn(f64, f64) -> f64>,
    interpolate: bool,
) -> Result<f64> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::GridMismatch(format!(
            "trajectories have {} and {} samples",
            a.len(),
            b.len()
        )));
    }
    if a.times.iter().zip(&b.times).any(|(s, t)| (s - t).abs() > 1e-9 * (1.0 + s.abs())) {
        return Err(Error::GridMismatch("sample times differ".into()));
    }
    let ga = a.grid();
    let same = ga.x1 == b.grid().x1 && ga.x3 == b.grid().x3;
    if !same && !interpolate {
        return Err(Error::GridMismatch("grids differ and interpolation is disabled".into()));
    }
    let tw = time_weights(&a.times);
    let mut total = 0.0;
    for (s, w_t) in tw.iter().enumerate() {
        let (ua, ub) = (&a.u[s], &b.u[s]);
        let mut acc = 0.0;
        for cj in 0..ga.n3() {
            for ci in 0..ga.n1() {
                let area = 0.25 * ga.h1(ci) * ga.h3(cj);
                for &p in &GAUSS2 {
                    for &q in &GAUSS2 {
                        let (va, _) = ua.cell_eval(ci, cj, p, q);
                        let x1 = ga.x1[ci] + p * ga.h1(ci);
                        let x3 = ga.x3[cj] + q * ga.h3(cj);
                        let vb = if same { ub.cell_eval(ci, cj, p, q).0 } else { ub.eval(x1, x3) };
                        let wgt = weight.map_or(1.0, |f| f(x1, x3));
                        acc += area * wgt * ((va[0] - vb[0]).powi(2) + (va[1] - vb[1]).powi(2));
                    }
                }
            }
        }
        total += w_t * acc;
    }
    Ok(total.sqrt())
}

/// Cells of `grid` lying inside a layer, with the index of that layer.
fn stiff_cells(grid: &Grid2d, ls: &LayerSet) -> Vec<(usize, usize)> {
    (0..grid.n3())
        .filter_map(|cj| {
            let mid = 0.5 * (grid.x3[cj] + grid.x3[cj + 1]);
            let q = ls.query(mid);
            q.in_stiff.then(|| (cj, ls.nearest(mid).expect("inside a layer")))
        })
        .collect()
}

/// `∫∫ u · ψ(x, t, y) (1, 1) dm_ε dt` with `y = (x3 − ω^j)/r_ε`.
pub fn measure_moment(u: &Trajectory, ls: &LayerSet, psi: &TestFn) -> f64 {
    let g = u.grid();
    let cells = stiff_cells(g, ls);
    let w_m = ls.weight();
    let tw = time_weights(&u.times);
    let mut total = 0.0;
    for (s, w_t) in tw.iter().enumerate() {
        let t = u.times[s];
        let mut acc = 0.0;
        for &(cj, layer) in &cells {
            for ci in 0..g.n1() {
                let area = 0.25 * g.h1(ci) * g.h3(cj);
                for &p in &GAUSS2 {
                    for &q in &GAUSS2 {
                        let (v, _) = u.u[s].cell_eval(ci, cj, p, q);
                        let x1 = g.x1[ci] + p * g.h1(ci);
                        let x3 = g.x3[cj] + q * g.h3(cj);
                        let y = (x3 - ls.centers[layer]) / ls.thickness;
                        acc += area * (v[0] + v[1]) * psi(x1, x3, t, y);
                    }
                }
            }
        }
        total += w_t * w_m * acc;
    }
    total
}

/// `∫∫ n v · ψ(x, t, y) (1, 1) dy dx dt` with `y ∈ (−1/2, 1/2)`, `n` given per
/// grid row and interpolated linearly in x3.
pub fn effective_moment(v: &Trajectory, n_rows: &[f64], psi: &TestFn) -> Result<f64> {
    let g = v.grid();
    if n_rows.len() != g.x3.len() {
        return Err(Error::GridMismatch("density rows do not match the grid".into()));
    }
    // 3-point Gauss–Legendre on (−1/2, 1/2)
    let ys = [-0.5 * (0.6f64).sqrt(), 0.0, 0.5 * (0.6f64).sqrt()];
    let yw = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    let tw = time_weights(&v.times);
    let mut total = 0.0;
    for (s, w_t) in tw.iter().enumerate() {
        let t = v.times[s];
        let mut acc = 0.0;
        for cj in 0..g.n3() {
            for ci in 0..g.n1() {
                let area = 0.25 * g.h1(ci) * g.h3(cj);
                for &p in &GAUSS2 {
                    for &q in &GAUSS2 {
                        let (val, _) = v.u[s].cell_eval(ci, cj, p, q);
                        let n = (1.0 - q) * n_rows[cj] + q * n_rows[cj + 1];
                        let x1 = g.x1[ci] + p * g.h1(ci);
                        let x3 = g.x3[cj] + q * g.h3(cj);
                        let py: f64 = ys.iter().zip(&yw).map(|(y, w)| w * psi(x1, x3, t, *y)).sum();
                        acc += area * n * (val[0] + val[1]) * py;
                    }
                }
            }
        }
        total += w_t * acc;
    }
    Ok(total)
}

/// `(∫ |u|² dm_ε, ∫ |e(u)|² dm_ε)` by 2×2 Gauss quadrature on the stiff cells.
pub fn layer_norms(u: &PlaneField, ls: &LayerSet) -> (f64, f64) {
    let g = &u.grid;
    let mut mass = 0.0;
    let mut strain = 0.0;
    for (cj, _) in stiff_cells(g, ls) {
        for ci in 0..g.n1() {
            let area = 0.25 * g.h1(ci) * g.h3(cj);
            for &p in &GAUSS2 {
                for &q in &GAUSS2 {
                    let (v, grad) = u.cell_eval(ci, cj, p, q);
                    mass += area * (v[0] * v[0] + v[1] * v[1]);
                    strain += area * Sym2::from_gradient(grad).norm_sq();
                }
            }
        }
    }
    (ls.weight() * mass, ls.weight() * strain)
}

/// `∫(φ1²/r² + φ3²) dm_ε` over `(1/r²) ∫ |e(φ)|² dm_ε`.
pub fn key_inequality_ratio(phi: &PlaneField, ls: &LayerSet) -> Result<f64> {
    let g = &phi.grid;
    let r2 = ls.thickness * ls.thickness;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for (cj, _) in stiff_cells(g, ls) {
        for ci in 0..g.n1() {
            let area = 0.25 * g.h1(ci) * g.h3(cj);
            for &p in &GAUSS2 {
                for &q in &GAUSS2 {
                    let (v, grad) = phi.cell_eval(ci, cj, p, q);
                    lhs += area * (v[0] * v[0] / r2 + v[1] * v[1]);
                    rhs += area * Sym2::from_gradient(grad).norm_sq() / r2;
                }
            }
        }
    }
    if rhs == 0.0 {
        if lhs == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::DegenerateField(
            "strain vanishes on the layers while the field does not".into(),
        ));
    }
    Ok(lhs / rhs)
}

/// Per-step `|e(τ) − e(0) − W(τ)| / max(e(0), e(τ))`.
pub fn energy_residual(trace: &EnergyTrace) -> Vec<f64> {
    trace.residuals()
}

/// Five smooth bumps and the modes `sin(pπx1/W) sin(qπx3/L)` for
/// `(p, q) ∈ {(1,1), (2,1), (1,2)}`, all independent of `t` and `y`.
pub fn psi_battery(width: f64, length: f64) -> Vec<(String, TestFn)> {
    let mut out: Vec<(String, TestFn)> = Vec::new();
    let centres = [(0.5, 0.5), (0.3, 0.3), (0.7, 0.3), (0.3, 0.7), (0.7, 0.7)];
    for (k, &(cx, cz)) in centres.iter().enumerate() {
        let f: TestFn = Arc::new(move |x1, x3, _, _| {
            let rho2 = ((x1 / width - cx) / 0.25).powi(2) + ((x3 / length - cz) / 0.25).powi(2);
            if rho2 < 1.0 {
                (1.0 - 1.0 / (1.0 - rho2)).exp()
            } else {
                0.0
            }
        });
        out.push((format!("bump{}", k + 1), f));
    }
    for (p, q) in [(1.0, 1.0), (2.0, 1.0), (1.0, 2.0)] {
        let f: TestFn = Arc::new(move |x1, x3, _, _| {
            (p * std::f64::consts::PI * x1 / width).sin() * (q * std::f64::consts::PI * x3 / length).sin()
        });
        out.push((format!("trig{}{}", p as u32, q as u32), f));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub epsilon: f64,
    pub quantity: String,
    pub value: f64,
    /// Value at the coarsest ε.
    pub baseline: f64,
    /// Previous value over this value (decreasing quantities) or value over
    /// baseline (bounded quantities).
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DiagnosticsReport {
    pub rows: Vec<ReportRow>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub pass: bool,
    pub rows: usize,
    pub failed: Vec<String>,
    pub notes: Vec<String>,
}

impl DiagnosticsReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,quantity,value,baseline,ratio,pass\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:e},{:e},{:e},{}",
                r.epsilon, r.quantity, r.value, r.baseline, r.ratio, r.pass
            );
        }
        s
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            pass: self.passed(),
            rows: self.rows.len(),
            failed: self
                .rows
                .iter()
                .filter(|r| !r.pass)
                .map(|r| format!("{}@{}", r.quantity, r.epsilon))
                .collect(),
            notes: self.notes.clone(),
        }
    }

    pub fn values(&self, quantity: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.quantity == quantity).map(|r| r.value).collect()
    }

    pub fn rows_for<'a>(&'a self, quantity: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.quantity == quantity)
    }

    /// Rows for a quantity that should decrease by at least `min_ratio`
    /// per step of the sweep.
    pub fn push_decreasing(&mut self, quantity: &str, eps: &[f64], values: &[f64], min_ratio: f64) {
        let base = values[0];
        for k in 0..values.len() {
            let (ratio, pass) = if k == 0 {
                (1.0, true)
            } else {
                let r = values[k - 1] / values[k];
                (r, values[k] < values[k - 1] && r >= min_ratio)
            };
            self.rows.push(ReportRow {
                epsilon: eps[k],
                quantity: quantity.into(),
                value: values[k],
                baseline: base,
                ratio,
                pass,
            });
        }
    }

    /// Rows for a quantity that must stay within `factor` of its baseline.
    pub fn push_bounded(&mut self, quantity: &str, eps: &[f64], values: &[f64], factor: f64) {
        let base = values[0];
        for k in 0..values.len() {
            let ratio = values[k] / base;
            self.rows.push(ReportRow {
                epsilon: eps[k],
                quantity: quantity.into(),
                value: values[k],
                baseline: base,
                ratio,
                pass: ratio.is_finite() && ratio <= factor,
            });
        }
    }

    /// Informational rows (always pass).
    pub fn push_info(&mut self, quantity: &str, eps: &[f64], values: &[f64]) {
        let base = values[0];
        for k in 0..values.len() {
            self.rows.push(ReportRow {
                epsilon: eps[k],
                quantity: quantity.into(),
                value: values[k],
                baseline: base,
                ratio: values[k] / base,
                pass: true,
            });
        }
    }
}

/// Least-squares slope of `log(value)` against `log(ε)`.
pub fn fitted_rate(eps: &[f64], values: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0)
        .map(|(e, v)| (e.ln(), v.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyLayers {
    /// `ω_ε = ε Z_ε`.
    Periodic,
    /// No layers at all (homogeneous soft material).
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyMode {
    Static,
    Dynamic,
}

/// Engineering thresholds applied by [`convergence_study`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Minimal successive decrease of the fine / effective distance.
    pub error_ratio: f64,
    /// Minimal successive decrease of the corrector error.
    pub corrector_ratio: f64,
    /// Allowed growth of the a-priori quantities over their coarsest value.
    pub apriori_factor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            error_ratio: 1.3,
            corrector_ratio: 1.2,
            apriori_factor: 2.0,
        }
    }
}

/// Data shared by every run of an ε-sweep.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub scaling: MaterialScaling,
    pub width: f64,
    pub length: f64,
    pub delta: f64,
    pub layers: StudyLayers,
    pub grid: GridSpec,
    pub loads: Loads,
    pub time: TimeSpec,
    pub mode: StudyMode,
    pub solver: LinearSolver,
    pub tol: f64,
    pub thresholds: Thresholds,
}

/// Everything computed for one ε of a sweep.
#[derive(Debug, Clone)]
pub struct StudyRun {
    pub epsilon: f64,
    pub layers: LayerSet,
    pub fine: Trajectory,
    /// Effective solution on the fine grid (`u`, or the cell mean for
    /// critical interlayers).
    pub effective: Trajectory,
    /// Layer displacement `v` paired with `n` in the moment limit.
    pub layer_field: Trajectory,
    pub corrector: Option<Trajectory>,
    pub n_rows: Vec<f64>,
    pub fine_energy: Option<EnergyTrace>,
    pub effective_energy: Option<EnergyTrace>,
}

/// Runs the fine and the effective model at one ε on a common grid.
pub fn study_run(cfg: &StudyConfig, eps: f64) -> Result<StudyRun> {
    let sc = &cfg.scaling;
    let regime = classify_regime(sc)?;
    let r = sc.thickness(eps);
    let ls = match cfg.layers {
        StudyLayers::Periodic => build_layers(LayerMode::Periodic, eps, r, cfg.length, cfg.delta)?,
        StudyLayers::None => {
            let mut ls = build_layers(LayerMode::Explicit(vec![]), eps, r, cfg.length, cfg.delta)?;
            ls.periodic = true;
            ls
        }
    };
    let setup = FineSetup {
        width: cfg.width,
        grid: cfg.grid,
        loads: cfg.loads.clone(),
        time: cfg.time,
        boundary: Boundary::DirichletAll,
        solver: cfg.solver,
        tol: cfg.tol,
    };
    let fine = build_fine_problem(ls.clone(), sc, eps, setup)?;
    let grid = fine.grid.clone();
    let n_rows = match cfg.layers {
        StudyLayers::Periodic => vec![1.0; grid.x3.len()],
        StudyLayers::None => vec![0.0; grid.x3.len()],
    };
    let esetup = EffectiveSetup {
        loads: cfg.loads.clone(),
        time: cfg.time,
        solver: cfg.solver,
        tol: cfg.tol,
        micro_cells: cfg.grid.cells_per_gap.max(2),
    };
    let ep = EffectiveProblem::new(sc, grid.clone(), n_rows.clone(), ls.periodic, esetup)?;
    let f = cfg.loads.f.clone();
    let f0 = move |x: f64, z: f64| f(x, z, 0.0);
    match (cfg.mode, regime.class) {
        (StudyMode::Static, InterlayerClass::Critical) => Err(Error::RegimeMismatch(
            "the critical model is compared through its time-dependent form".into(),
        )),
        (StudyMode::Static, _) => {
            let u = Trajectory::single(solve_static_fine(&fine, &f0)?);
            let e = Trajectory::single(solve_effective_static(&ep, &f0)?);
            Ok(StudyRun {
                epsilon: eps,
                layers: ls,
                fine: u,
                effective: e.clone(),
                layer_field: e,
                corrector: None,
                n_rows,
                fine_energy: None,
                effective_energy: None,
            })
        }
        (StudyMode::Dynamic, class) => {
            let fs = solve_dynamic_fine(&fine)?;
            let (effective, layer_field, corrector, energy) = match class {
                InterlayerClass::Critical => {
                    let ts = solve_effective_critical(&ep)?;
                    let c = corrector_field(&ts, &ls, &grid)?;
                    (ts.u_mean, ts.v, Some(c), ts.energy)
                }
                InterlayerClass::Unit => {
                    let s = solve_effective_stiff(&ep)?;
                    (s.trajectory.clone(), s.trajectory, None, s.energy)
                }
                InterlayerClass::Intermediate => {
                    let s = solve_effective_intermediate(&ep)?;
                    (s.trajectory.clone(), s.trajectory, None, s.energy)
                }
            };
            Ok(StudyRun {
                epsilon: eps,
                layers: ls,
                fine: fs.trajectory,
                effective,
                layer_field,
                corrector,
                n_rows,
                fine_energy: Some(fs.energy),
                effective_energy: Some(energy),
            })
        }
    }
}

/// Runs every ε (in parallel) and reports distances, moment gaps, a-priori
/// quantities and fitted rates. Rate thresholds are engineering choices.
pub fn convergence_study(cfg: &StudyConfig, eps_list: &[f64]) -> Result<(DiagnosticsReport, Vec<StudyRun>)> {
    if eps_list.len() < 3 {
        return Err(Error::InsufficientEpsilons(eps_list.len()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("epsilon list must be strictly decreasing".into()));
    }
    let runs = eps_list
        .par_iter()
        .map(|&e| study_run(cfg, e))
        .collect::<Result<Vec<_>>>()?;
    let report = report_from_runs(cfg, eps_list, &runs)?;
    Ok((report, runs))
}

pub fn report_from_runs(cfg: &StudyConfig, eps: &[f64], runs: &[StudyRun]) -> Result<DiagnosticsReport> {
    let th = cfg.thresholds;
    let regime = classify_regime(&cfg.scaling)?;
    let mut rep = DiagnosticsReport::default();
    rep.notes.push(format!("regime: {}", regime.describe()));
    rep.notes.push(format!(
        "thresholds (engineering choices): error ratio >= {}, corrector ratio >= {}, a-priori <= {}x baseline",
        th.error_ratio, th.corrector_ratio, th.apriori_factor
    ));
    rep.notes.push("corrector interpolation: linear in the cell coordinate".into());
    let mut l2 = Vec::new();
    for run in runs {
        l2.push(l2_error(&run.fine, &run.effective, None, false)?);
    }
    let critical = regime.class == InterlayerClass::Critical;
    if critical {
        rep.push_info("l2_error_mean", eps, &l2);
        let ce = runs
            .iter()
            .map(|r| l2_error(&r.fine, r.corrector.as_ref().expect("critical run"), None, false))
            .collect::<Result<Vec<_>>>()?;
        rep.push_decreasing("corrector_error", eps, &ce, th.corrector_ratio);
        rep.push_info("rate:corrector_error", eps, &vec![fitted_rate(eps, &ce); eps.len()]);
    } else if cfg.layers == StudyLayers::None {
        rep.push_info("l2_error", eps, &l2);
    } else {
        rep.push_decreasing("l2_error", eps, &l2, th.error_ratio);
    }
    let rate = fitted_rate(eps, &l2);
    rep.push_info("rate:l2_error", eps, &vec![rate; eps.len()]);
    let scale = runs.iter().map(|r| r.effective.u.iter().map(|u| u.max_abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
    if l2.iter().all(|e| *e <= 1e-8 * scale.max(1e-300)) || !(rate.abs() >= 0.2) {
        rep.notes.push("no epsilon-dependence".into());
    }
    if cfg.layers == StudyLayers::Periodic {
        for (name, psi) in psi_battery(cfg.width, cfg.length) {
            let mut gaps = Vec::new();
            for run in runs {
                let fine = measure_moment(&run.fine, &run.layers, &psi);
                let lim = effective_moment(&run.layer_field, &run.n_rows, &psi)?;
                gaps.push((fine - lim).abs());
            }
            rep.push_decreasing(&format!("moment_gap:{name}"), eps, &gaps, 1.0);
        }
        let mut strain = Vec::new();
        let mut mass = Vec::new();
        for run in runs {
            let sc = &cfg.scaling;
            let e = run.epsilon;
            let factor = sc.thickness(e) * sc.mu1(e) / e;
            let (mut m_acc, mut s_acc) = (0.0, 0.0);
            let tw = time_weights(&run.fine.times);
            for (u, w) in run.fine.u.iter().zip(&tw) {
                let (m, s) = layer_norms(u, &run.layers);
                m_acc += w * m;
                s_acc += w * s;
            }
            strain.push(s_acc * factor);
            mass.push(m_acc);
        }
        rep.push_bounded("apriori_strain", eps, &strain, th.apriori_factor);
        rep.push_bounded("apriori_mass", eps, &mass, th.apriori_factor);
    }
    Ok(rep)
}

/// Quick in-process checks of the operator identities, the time integrator
/// and the layer geometry; used by the `selftest` command.
pub fn selftest() -> DiagnosticsReport {
    use crate::operators::{bending_coefficients, bending_pair, membrane_coefficient, sigma_xprime_tensor};
    let mut rep = DiagnosticsReport::default();
    let mut check = |name: &str, value: f64, pass: bool| {
        rep.rows.push(ReportRow {
            epsilon: 0.0,
            quantity: name.into(),
            value,
            baseline: 0.0,
            ratio: 1.0,
            pass,
        });
    };
    let mut worst: f64 = 0.0;
    for l in [0.0, 1.0, 2.0, 10.0] {
        let s = sigma_xprime_tensor(l, [[1.0, 0.0], [0.0, 0.0]]);
        worst = worst.max((s[0][0] - membrane_coefficient(l)).abs());
        worst = worst.max((bending_coefficients(l).0 - 2.0 * (l + 1.0) / (l + 2.0)).abs());
    }
    check("operator_coefficients", worst, worst <= 1e-15);
    let h = 0.1;
    let v: Vec<f64> = (0..11).map(|i| ((i as f64) * h * 3.0).sin()).collect();
    let ok = bending_pair(0.0, h, &v).iter().all(|p| p.h == p.h_sigma);
    check("l0_collapse", 0.0, ok);
    let drift = (|| -> Result<f64> {
        let sc = MaterialScaling {
            a: 1.0,
            b: 2.0,
            c1: 1.0,
            c2: 1.0,
            l: 1.0,
            soft: crate::operators::SoftClass::Unit { mu: 1.0, lambda: 1.0 },
            rho: 1.0,
            rho1_bar: 1.0,
        };
        let eps = 0.25;
        let ls = build_layers(LayerMode::Periodic, eps, eps * eps, 1.0, 0.5)?;
        let s = |x: f64, z: f64| (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * z).sin();
        let setup = FineSetup {
            grid: GridSpec {
                n1: 6,
                cells_per_gap: 3,
                ..GridSpec::default()
            },
            loads: Loads {
                a0: Arc::new(move |x, z, _| [s(x, z), 0.5 * s(x, z)]),
                ..Loads::default()
            },
            time: TimeSpec {
                t_final: 1.0,
                dt: Some(0.01),
                samples: 4,
            },
            ..FineSetup::default()
        };
        let p = build_fine_problem(ls, &sc, eps, setup)?;
        Ok(solve_dynamic_fine(&p)?.energy.max_step_drift())
    })();
    match drift {
        Ok(d) => check("newmark_energy_drift", d, d <= 1e-10),
        Err(_) => check("newmark_energy_drift", f64::NAN, false),
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj(g: &Arc<Grid2d>, times: &[f64], f: impl Fn(f64, f64, f64) -> [f64; 2]) -> Trajectory {
        Trajectory {
            times: times.to_vec(),
            u: times.iter().map(|&t| PlaneField::from_fn(g.clone(), |x, z| f(x, z, t))).collect(),
            v: times.iter().map(|_| PlaneField::zeros(g.clone())).collect(),
        }
    }

    #[test]
    fn l2_error_examples() {
        let g = Arc::new(Grid2d::uniform(1.0, 1.0, 4, 5));
        let ts = [0.0, 0.5, 1.0];
        let a = traj(&g, &ts, |x, z, t| [x * z + t, z]);
        assert_eq!(l2_error(&a, &a, None, false).unwrap(), 0.0);
        let c = traj(&g, &ts, |x, z, t| [x * z + t + 0.3, z]);
        assert!((l2_error(&a, &c, None, false).unwrap() - 0.3).abs() < 1e-14);
        let x3 = traj(&g, &[0.0, 1.0], |_, z, _| [z, 0.0]);
        let zero = traj(&g, &[0.0, 1.0], |_, _, _| [0.0, 0.0]);
        assert!((l2_error(&x3, &zero, None, false).unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-14);
        let other = Arc::new(Grid2d::uniform(1.0, 1.0, 3, 5));
        let b = traj(&other, &ts, |x, z, t| [x * z + t, z]);
        assert!(matches!(l2_error(&a, &b, None, false), Err(Error::GridMismatch(_))));
        assert!(l2_error(&a, &b, None, true).unwrap() < 1e-2);
    }

    #[test]
    fn measure_moment_examples() {
        let eps = 0.125;
        let ls = build_layers(LayerMode::Periodic, eps, eps * eps, 1.0, 0.5).unwrap();
        let x3 = crate::grid::layer_fitted_x3(&ls, &GridSpec::default()).unwrap();
        let g = Arc::new(Grid2d::new(crate::grid::linspace(0.0, 2.0, 4), x3, false).unwrap());
        let one = traj(&g, &[0.0, 1.0], |_, _, _| [1.0, 0.0]);
        let psi: TestFn = Arc::new(|_, _, _, _| 1.0);
        let m = measure_moment(&one, &ls, &psi);
        assert!((m - ls.len() as f64 * eps * 2.0).abs() < 1e-12);
        let zero = traj(&g, &[0.0, 1.0], |_, _, _| [0.0, 0.0]);
        assert_eq!(measure_moment(&zero, &ls, &psi), 0.0);
        // even field against odd test function in the layer coordinate
        let centres = ls.centers.clone();
        let even = traj(&g, &[0.0], move |_, z, _| {
            let d = centres.iter().map(|c| z - c).fold(f64::INFINITY, |a, b| if b.abs() < a.abs() { b } else { a });
            [1.0 + d * d, 0.0]
        });
        let odd: TestFn = Arc::new(|_, _, _, y| y);
        assert!(measure_moment(&even, &ls, &odd).abs() < 1e-12);
    }

    #[test]
    fn key_ratio_examples() {
        let eps = 0.125;
        let ls = build_layers(LayerMode::Periodic, eps, eps * eps, 1.0, 0.5).unwrap();
        let x3 = crate::grid::layer_fitted_x3(&ls, &GridSpec::default()).unwrap();
        let g = Arc::new(Grid2d::new(crate::grid::linspace(0.0, 1.0, 8), x3, false).unwrap());
        let zero = PlaneField::zeros(g.clone());
        assert_eq!(key_inequality_ratio(&zero, &ls).unwrap(), 0.0);
        let p = PlaneField::from_fn(g.clone(), |_, z| [0.0, z * (1.0 - z)]);
        let r = key_inequality_ratio(&p, &ls).unwrap();
        assert!(r.is_finite() && r > 0.0);
        let rigid = PlaneField::from_fn(g, |_, _| [0.0, 1.0]);
        assert!(matches!(key_inequality_ratio(&rigid, &ls), Err(Error::DegenerateField(_))));
    }

    #[test]
    fn report_csv_and_rules() {
        let mut rep = DiagnosticsReport::default();
        let eps = [0.1, 0.05, 0.025];
        rep.push_decreasing("e", &eps, &[1.0, 0.5, 0.45], 1.3);
        rep.push_bounded("b", &eps, &[1.0, 1.5, 2.5], 2.0);
        let pass: Vec<bool> = rep.rows.iter().map(|r| r.pass).collect();
        assert_eq!(pass, vec![true, true, false, true, true, false]);
        assert!(rep.to_csv().starts_with("epsilon,quantity,value,baseline,ratio,pass\n"));
        assert!(!rep.summary().pass);
        assert!((fitted_rate(&eps, &[0.1, 0.025, 0.00625]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn study_needs_three_epsilons() {
        let cfg = StudyConfig {
            scaling: MaterialScaling {
                a: 1.0,
                b: 2.0,
                c1: 1.0,
                c2: 1.0,
                l: 0.0,
                soft: crate::operators::SoftClass::Unit { mu: 1.0, lambda: 0.0 },
                rho: 1.0,
                rho1_bar: 1.0,
            },
            width: 1.0,
            length: 1.0,
            delta: 0.5,
            layers: StudyLayers::Periodic,
            grid: GridSpec::default(),
            loads: Loads::default(),
            time: TimeSpec::default(),
            mode: StudyMode::Static,
            solver: LinearSolver::Direct,
            tol: 1e-10,
            thresholds: Thresholds::default(),
        };
        assert!(matches!(
            convergence_study(&cfg, &[0.25, 0.125]),
            Err(Error::InsufficientEpsilons(2))
        ));
    }

    #[test]
    fn selftest_passes() {
        assert!(selftest().passed());
    }

    proptest! {
        #[test]
        fn l2_is_pseudometric(c in proptest::collection::vec(-2.0f64..2.0, 9)) {
            let g = Arc::new(Grid2d::uniform(1.0, 1.0, 3, 3));
            let mk = |a: f64, b: f64, d: f64| traj(&g, &[0.0, 1.0], move |x, z, t| [a * x + d * t, b * z * x]);
            let (p, q, r) = (mk(c[0], c[1], c[2]), mk(c[3], c[4], c[5]), mk(c[6], c[7], c[8]));
            let d = |a: &Trajectory, b: &Trajectory| l2_error(a, b, None, false).unwrap();
            prop_assert!((d(&p, &q) - d(&q, &p)).abs() < 1e-14);
            prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-12);
        }

        #[test]
        fn moment_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let eps = 0.25;
            let ls = build_layers(LayerMode::Periodic, eps, eps * eps, 1.0, 0.5).unwrap();
            let x3 = crate::grid::layer_fitted_x3(&ls, &GridSpec { cells_per_gap: 2, ..GridSpec::default() }).unwrap();
            let g = Arc::new(Grid2d::new(crate::grid::linspace(0.0, 1.0, 3), x3, false).unwrap());
            let u = traj(&g, &[0.0], |x, z, _| [x * z, x - z]);
            let w = traj(&g, &[0.0], |x, z, _| [z * z, x]);
            let mix = traj(&g, &[0.0], move |x, z, _| [a * x * z + b * z * z, a * (x - z) + b * x]);
            let p1: TestFn = Arc::new(|x, z, _, y| x + z * y);
            let p2: TestFn = Arc::new(|x, _, _, _| x * x);
            let p12: TestFn = Arc::new(move |x, z, t, y| a * (x + z * y) + b * x * x + 0.0 * t);
            let lhs = measure_moment(&mix, &ls, &p1);
            let rhs = a * measure_moment(&u, &ls, &p1) + b * measure_moment(&w, &ls, &p1);
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
            let lhs = measure_moment(&u, &ls, &p12);
            let rhs = a * measure_moment(&u, &ls, &p1) + b * measure_moment(&u, &ls, &p2);
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
        }
    }
}
