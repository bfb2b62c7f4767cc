//! Text exports of trajectories: CSV tables and legacy VTK structured grids.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::effective::MicroSnapshot;
use crate::error::Result;
use crate::grid::{Grid2d, PlaneField, Trajectory};

pub const TRAJECTORY_HEADER: &str = "t,x1,x3,u1,u3,v1,v3";
pub const MICRO_HEADER: &str = "t,x1,x3,y3,u01,u03";

/// One row per sampled time and node, nodes in row-major order.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = String::from(TRAJECTORY_HEADER);
    s.push('\n');
    for (k, t) in traj.times.iter().enumerate() {
        let (u, v) = (&traj.u[k], &traj.v[k]);
        let g = &u.grid;
        for j in 0..g.x3.len() {
            for i in 0..g.x1.len() {
                let n = g.node(i, j);
                let _ = writeln!(
                    s,
                    "{t},{},{},{},{},{},{}",
                    g.x1[i], g.x3[j], u.u[n][0], u.u[n][1], v.u[n][0], v.u[n][1]
                );
            }
        }
    }
    s
}

/// Legacy VTK structured grid with displacement and velocity vectors
/// (the section is embedded in 3D as the plane `y = 0`).
pub fn vtk_structured(title: &str, u: &PlaneField, v: &PlaneField) -> String {
    let g = &u.grid;
    let (n1, n3) = (g.x1.len(), g.x3.len());
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "{}", title.replace('\n', " "));
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET STRUCTURED_GRID");
    let _ = writeln!(s, "DIMENSIONS {n1} {n3} 1");
    let _ = writeln!(s, "POINTS {} double", n1 * n3);
    for j in 0..n3 {
        for i in 0..n1 {
            let _ = writeln!(s, "{} 0 {}", g.x1[i], g.x3[j]);
        }
    }
    let _ = writeln!(s, "POINT_DATA {}", n1 * n3);
    for (name, f) in [("displacement", u), ("velocity", v)] {
        let _ = writeln!(s, "VECTORS {name} double");
        for p in &f.u {
            let _ = writeln!(s, "{} 0 {}", p[0], p[1]);
        }
    }
    s
}

/// Writes `<prefix>_<k>.vtk` for every sample of `traj` into `dir`.
pub fn write_vtk_series(traj: &Trajectory, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::with_capacity(traj.len());
    for (k, t) in traj.times.iter().enumerate() {
        let path = dir.join(format!("{prefix}_{k:04}.vtk"));
        fs::write(&path, vtk_structured(&format!("{prefix} t={t}"), &traj.u[k], &traj.v[k]))?;
        out.push(path);
    }
    Ok(out)
}

/// Micro profiles at every `node_stride`-th interior node of each sampled
/// time. `y3` is the cell coordinate, the soft interval being
/// `(ϑ/2, 1 − ϑ/2)`.
pub fn micro_profiles_csv(snapshots: &[MicroSnapshot], grid: &Grid2d, node_stride: usize) -> String {
    let mut s = String::from(MICRO_HEADER);
    s.push('\n');
    let stride = node_stride.max(1);
    for snap in snapshots {
        let hy = (1.0 - snap.theta) / snap.cells as f64;
        let mut count = 0usize;
        for j in 1..grid.x3.len() - 1 {
            for i in 1..grid.x1.len() - 1 {
                count += 1;
                if !(count - 1).is_multiple_of(stride) {
                    continue;
                }
                let prof = snap.profile(grid.node(i, j));
                for k in 0..=snap.cells {
                    let y = 0.5 * snap.theta + k as f64 * hy;
                    let _ = writeln!(
                        s,
                        "{},{},{},{y},{},{}",
                        snap.t, grid.x1[i], grid.x3[j], prof.u1[k], prof.u3[k]
                    );
                }
            }
        }
    }
    s
}
