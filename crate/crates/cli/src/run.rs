//! Command implementations. Each writes its artifacts into the output
//! directory and reports their names for the manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use strata_core::analysis::{
    convergence_study, l2_error, measure_moment, effective_moment, psi_battery, selftest, study_run,
    DiagnosticsReport, StudyMode,
};
use strata_core::effective::{
    classify_regime, n_rows_from_layers, solve_effective_critical, solve_effective_intermediate,
    solve_effective_static, solve_effective_stiff, EffectiveProblem, EffectiveSetup, InterlayerClass,
};
use strata_core::fine_solver::{build_fine_problem, solve_dynamic_fine, solve_static_fine, Boundary, FineSetup};
use strata_core::grid::{Grid2d, Trajectory};
use strata_core::io::{micro_profiles_csv, trajectory_csv, write_vtk_series};
use strata_core::microstructure::{build_layers, build_layers_with_gap, n_eps_field, LayerMode, LayerSet};
use strata_core::newmark::EnergyTrace;
use strata_core::stochastic::{empirical_density_limit, restrict_and_scale, sample_process};

use crate::config::{Format, LayerLayout, RunConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Fine,
    Effective,
    Compare,
    Sweep,
    Stochastic,
    Selftest,
}

/// Output directory plus the list of files written so far.
pub struct Outputs {
    pub dir: PathBuf,
    pub format: Format,
    pub files: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path, format: Format) -> Self {
        Self {
            dir: dir.to_path_buf(),
            format,
            files: Vec::new(),
        }
    }

    fn text(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        fs::create_dir_all(&self.dir)?;
        fs::write(self.dir.join(name), content)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn trajectory(&mut self, prefix: &str, traj: &Trajectory) -> Result<(), CliError> {
        if self.format.csv() {
            self.text(&format!("{prefix}_trajectory.csv"), &trajectory_csv(traj))?;
        }
        if self.format.vtk() {
            let dir = self.dir.join("vtk");
            for p in write_vtk_series(traj, &dir, prefix)? {
                let name = p.strip_prefix(&self.dir).unwrap_or(&p).to_string_lossy().into_owned();
                self.files.push(name);
            }
        }
        Ok(())
    }

    fn energy(&mut self, name: &str, trace: &EnergyTrace) -> Result<(), CliError> {
        let mut s = String::from("t,energy,work,residual\n");
        for (k, r) in trace.residuals().iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{r}", trace.times[k], trace.energy[k], trace.work[k]);
        }
        self.text(name, &s)
    }

    fn report(&mut self, name: &str, rep: &DiagnosticsReport) -> Result<(), CliError> {
        self.text(name, &rep.to_csv())?;
        let summary = serde_json::to_string_pretty(&rep.summary()).expect("summary serializes");
        self.text(&name.replace(".csv", "_summary.json"), &summary)
    }
}

pub fn dispatch(cmd: Command, cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    match cmd {
        Command::Fine => fine(cfg, out),
        Command::Effective => effective(cfg, out),
        Command::Compare => compare(cfg, out),
        Command::Sweep => sweep(cfg, out),
        Command::Stochastic => stochastic(cfg, out),
        Command::Selftest => self_test(out),
    }
}

fn layer_set(cfg: &RunConfig, eps: f64) -> Result<LayerSet, CliError> {
    let ms = &cfg.microstructure;
    let r = cfg.scaling().thickness(eps);
    let length = cfg.geometry.length;
    let ls = match ms.mode {
        LayerLayout::Periodic => build_layers(LayerMode::Periodic, eps, r, length, ms.delta)?,
        LayerLayout::Explicit => build_layers(LayerMode::Explicit(ms.centers.clone()), eps, r, length, ms.delta)?,
        LayerLayout::Stochastic => {
            let model = cfg.process()?;
            let omega = sample_process(&model, (0.0, length / eps))?;
            let centers = restrict_and_scale(&omega, eps, length);
            build_layers_with_gap(LayerMode::Explicit(centers), eps, r, length, ms.delta, model.min_gap)?
        }
        LayerLayout::None => {
            let mut ls = build_layers(LayerMode::Explicit(Vec::new()), eps, r, length, ms.delta)?;
            ls.periodic = true;
            ls
        }
    };
    Ok(ls)
}

fn fine(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let eps = cfg.epsilon()?;
    let ls = layer_set(cfg, eps)?;
    out.text("layers.csv", &ls.to_csv())?;
    out.text("layer_density.csv", &n_eps_field(&ls).to_csv())?;
    let setup = FineSetup {
        width: cfg.geometry.width,
        grid: cfg.grid_spec(),
        loads: cfg.loads(),
        time: cfg.time_spec(),
        boundary: Boundary::DirichletAll,
        solver: cfg.solver.linear,
        tol: cfg.solver.tol,
    };
    let p = build_fine_problem(ls, &cfg.scaling(), eps, setup)?;
    out.text(
        "fine_report.json",
        &serde_json::to_string_pretty(&p.report()).expect("report serializes"),
    )?;
    match cfg.time.mode {
        StudyMode::Static => {
            let f = cfg.loads().f;
            let u = solve_static_fine(&p, &|x, z| f(x, z, 0.0))?;
            out.trajectory("fine", &Trajectory::single(u))
        }
        StudyMode::Dynamic => {
            let s = solve_dynamic_fine(&p)?;
            out.energy("fine_energy.csv", &s.energy)?;
            out.trajectory("fine", &s.trajectory)
        }
    }
}

fn macro_problem(cfg: &RunConfig) -> Result<EffectiveProblem, CliError> {
    let sc = cfg.scaling();
    let (w, l) = (cfg.geometry.width, cfg.geometry.length);
    let grid = Arc::new(Grid2d::uniform(w, l, cfg.solver.n1, cfg.solver.macro_n3));
    let rows = grid.x3.len();
    let (n_rows, periodic) = match cfg.microstructure.mode {
        LayerLayout::Periodic => (vec![1.0; rows], true),
        LayerLayout::None => (vec![0.0; rows], true),
        LayerLayout::Explicit | LayerLayout::Stochastic => {
            let eps = cfg.epsilon()?;
            let ls = layer_set(cfg, eps)?;
            let window = cfg.microstructure.window.unwrap_or(4.0 * eps);
            (n_rows_from_layers(&ls, window, &grid)?, false)
        }
    };
    let setup = EffectiveSetup {
        loads: cfg.loads(),
        time: cfg.time_spec(),
        solver: cfg.solver.linear,
        tol: cfg.solver.tol,
        micro_cells: cfg.micro_cells(),
    };
    Ok(EffectiveProblem::new(&sc, grid, n_rows, periodic, setup)?)
}

fn effective(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let ep = macro_problem(cfg)?;
    let mut s = String::from("x3,n\n");
    for (z, n) in ep.grid.x3.iter().zip(&ep.n_rows) {
        let _ = writeln!(s, "{z},{n}");
    }
    out.text("effective_density.csv", &s)?;
    let class = ep.regime.class;
    match (cfg.time.mode, class) {
        (StudyMode::Static, _) => {
            let f = cfg.loads().f;
            let u = solve_effective_static(&ep, &|x, z| f(x, z, 0.0))?;
            out.trajectory("effective", &Trajectory::single(u))
        }
        (StudyMode::Dynamic, InterlayerClass::Critical) => {
            let ts = solve_effective_critical(&ep)?;
            out.energy("effective_energy.csv", &ts.energy)?;
            out.trajectory("effective", &ts.u_mean)?;
            out.trajectory("layer", &ts.v)?;
            if out.format.csv() {
                let csv = micro_profiles_csv(&ts.micro, &ep.grid, cfg.solver.micro_node_stride);
                out.text("micro_profiles.csv", &csv)?;
            }
            Ok(())
        }
        (StudyMode::Dynamic, c) => {
            let s = if c == InterlayerClass::Unit {
                solve_effective_stiff(&ep)?
            } else {
                solve_effective_intermediate(&ep)?
            };
            out.energy("effective_energy.csv", &s.energy)?;
            out.trajectory("effective", &s.trajectory)
        }
    }
}

fn compare(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let eps = cfg.epsilon()?;
    let study = cfg.study()?;
    let run = study_run(&study, eps)?;
    out.trajectory("fine", &run.fine)?;
    out.trajectory("effective", &run.effective)?;
    if let Some(c) = &run.corrector {
        out.trajectory("corrector", c)?;
    }
    let e = [eps];
    let mut rep = DiagnosticsReport::default();
    rep.notes.push(format!("regime: {}", classify_regime(&study.scaling)?.describe()));
    rep.push_info("l2_error", &e, &[l2_error(&run.fine, &run.effective, None, false)?]);
    if let Some(c) = &run.corrector {
        rep.push_info("corrector_error", &e, &[l2_error(&run.fine, c, None, false)?]);
    }
    if !run.layers.is_empty() {
        for (name, psi) in psi_battery(study.width, study.length) {
            let gap = measure_moment(&run.fine, &run.layers, &psi) - effective_moment(&run.layer_field, &run.n_rows, &psi)?;
            rep.push_info(&format!("moment_gap:{name}"), &e, &[gap.abs()]);
        }
    }
    if let Some(t) = &run.fine_energy {
        out.energy("fine_energy.csv", t)?;
    }
    if let Some(t) = &run.effective_energy {
        out.energy("effective_energy.csv", t)?;
    }
    out.report("comparison.csv", &rep)
}

fn sweep(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let eps = cfg.epsilon_list()?;
    let study = cfg.study()?;
    let (rep, _) = convergence_study(&study, &eps)?;
    out.report("diagnostics.csv", &rep)?;
    if rep.passed() {
        Ok(())
    } else {
        let failed: Vec<String> = rep
            .rows
            .iter()
            .filter(|r| !r.pass)
            .map(|r| format!("{}@{}", r.quantity, r.epsilon))
            .collect();
        Err(CliError::Acceptance(format!("failed rows: {}", failed.join(", "))))
    }
}

fn stochastic(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let eps = cfg.epsilon_list()?;
    let model = cfg.process()?;
    let length = cfg.geometry.length;
    let window = cfg.microstructure.window.unwrap_or(0.25 * length);
    let rep = empirical_density_limit(&model, &eps, length, cfg.microstructure.replicas, window)?;
    out.text("density_report.csv", &rep.to_csv())?;
    let mut s = String::from("epsilon,replica,window,mean\n");
    for r in &rep.rows {
        for (k, m) in r.window_means.iter().enumerate() {
            let _ = writeln!(s, "{},{},{k},{m}", r.epsilon, r.replica);
        }
    }
    out.text("window_means.csv", &s)
}

fn self_test(out: &mut Outputs) -> Result<(), CliError> {
    let rep = selftest();
    out.report("selftest.csv", &rep)?;
    if rep.passed() {
        Ok(())
    } else {
        Err(CliError::SelfTest(format!("{} checks failed", rep.rows.iter().filter(|r| !r.pass).count())))
    }
}
