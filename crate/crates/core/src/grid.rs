//! Tensor-product grids on `Ω = (0, W) × (0, L)` and nodal fields on them.
//!
//! Nodes are numbered row by row: node `(i, j)` sits at `(x1[i], x3[j])`
//! and has index `j * (n1 + 1) + i`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::microstructure::LayerSet;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid2d {
    pub x1: Vec<f64>,
    pub x3: Vec<f64>,
    /// Whether the nodes at `x1 = 0` and `x1 = W` are identified.
    pub periodic_x1: bool,
}

impl Grid2d {
    pub fn new(x1: Vec<f64>, x3: Vec<f64>, periodic_x1: bool) -> Result<Self> {
        for (name, v) in [("x1", &x1), ("x3", &x3)] {
            if v.len() < 2 || v.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::GridMismatch(format!(
                    "{name} coordinates must be strictly increasing with at least two nodes"
                )));
            }
        }
        Ok(Self { x1, x3, periodic_x1 })
    }

    pub fn uniform(width: f64, length: f64, n1: usize, n3: usize) -> Self {
        Self {
            x1: linspace(0.0, width, n1),
            x3: linspace(0.0, length, n3),
            periodic_x1: false,
        }
    }

    pub fn width(&self) -> f64 {
        *self.x1.last().unwrap()
    }

    pub fn length(&self) -> f64 {
        *self.x3.last().unwrap()
    }

    /// Number of cells along x1.
    pub fn n1(&self) -> usize {
        self.x1.len() - 1
    }

    /// Number of cells along x3.
    pub fn n3(&self) -> usize {
        self.x3.len() - 1
    }

    pub fn num_nodes(&self) -> usize {
        self.x1.len() * self.x3.len()
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.x1.len() + i
    }

    pub fn h1(&self, i: usize) -> f64 {
        self.x1[i + 1] - self.x1[i]
    }

    pub fn h3(&self, j: usize) -> f64 {
        self.x3[j + 1] - self.x3[j]
    }

    /// Length of the dual cell of x3-node `j` (half of each adjacent cell).
    pub fn dual3(&self, j: usize) -> f64 {
        dual(&self.x3, j)
    }

    pub fn dual1(&self, i: usize) -> f64 {
        dual(&self.x1, i)
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        let on_x3 = j == 0 || j == self.n3();
        let on_x1 = !self.periodic_x1 && (i == 0 || i == self.n1());
        on_x1 || on_x3
    }

    /// Cell `(ci, cj)` containing the point, clamped to the grid.
    pub fn locate(&self, x1: f64, x3: f64) -> (usize, usize) {
        (locate(&self.x1, x1), locate(&self.x3, x3))
    }
}

fn dual(x: &[f64], j: usize) -> f64 {
    let left = if j > 0 { x[j] - x[j - 1] } else { 0.0 };
    let right = if j + 1 < x.len() { x[j + 1] - x[j] } else { 0.0 };
    0.5 * (left + right)
}

fn locate(x: &[f64], v: f64) -> usize {
    let k = x.partition_point(|p| *p <= v);
    k.clamp(1, x.len() - 1) - 1
}

pub fn linspace(a: f64, b: f64, cells: usize) -> Vec<f64> {
    (0..=cells)
        .map(|k| {
            if k == cells {
                b
            } else {
                a + (b - a) * k as f64 / cells as f64
            }
        })
        .collect()
}

/// Resolution parameters of the layer-fitted grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    /// Uniform cells along x1.
    pub n1: usize,
    /// Requested cells across each stiff layer.
    pub cells_per_layer: usize,
    /// Cells in each soft gap between consecutive layers (and next to the walls).
    pub cells_per_gap: usize,
    /// Ratio of the largest to the smallest cell inside a gap (1 = uniform).
    pub grading: f64,
    /// Smallest admissible x3 cell size; layers thinner than
    /// `4 · h3_floor` cannot be resolved.
    pub h3_floor: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n1: 16,
            cells_per_layer: 4,
            cells_per_gap: 8,
            grading: 1.0,
            h3_floor: 0.0,
        }
    }
}

/// Builds the x3 node set conforming to every layer interface.
pub fn layer_fitted_x3(ls: &LayerSet, spec: &GridSpec) -> Result<Vec<f64>> {
    if spec.cells_per_gap == 0 || spec.n1 == 0 || !(spec.grading >= 1.0) {
        return Err(Error::InvalidParameter(
            "grid needs n1 >= 1, cells_per_gap >= 1 and grading >= 1".into(),
        ));
    }
    let r = ls.thickness;
    let mut layer_cells = spec.cells_per_layer;
    if spec.h3_floor > 0.0 {
        layer_cells = layer_cells.min((r / spec.h3_floor + 1e-9).floor() as usize);
    }
    if !ls.is_empty() && layer_cells < 4 {
        return Err(Error::UnresolvedLayer {
            cells: layer_cells,
            thickness: r,
        });
    }
    let length = ls.domain_length;
    let mut x = vec![0.0];
    let mut cursor = 0.0;
    for (lo, hi) in ls.intervals() {
        push_graded(&mut x, cursor, lo, spec.cells_per_gap, spec.grading);
        push_graded(&mut x, lo, hi, layer_cells, 1.0);
        cursor = hi;
    }
    push_graded(&mut x, cursor, length, spec.cells_per_gap, spec.grading);
    Ok(x)
}

fn push_graded(x: &mut Vec<f64>, a: f64, b: f64, cells: usize, grading: f64) {
    let weights: Vec<f64> = if grading == 1.0 || cells < 3 {
        vec![1.0; cells]
    } else {
        let half = (cells - 1) / 2;
        let q = grading.powf(1.0 / half as f64);
        (0..cells)
            .map(|k| q.powi(k.min(cells - 1 - k) as i32))
            .collect()
    };
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        x.push(if k + 1 == cells {
            b
        } else {
            a + (b - a) * acc / total
        });
    }
}

/// Two-component displacement `(u1, u3)` at every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneField {
    pub grid: Arc<Grid2d>,
    pub u: Vec<[f64; 2]>,
}

impl PlaneField {
    pub fn zeros(grid: Arc<Grid2d>) -> Self {
        let n = grid.num_nodes();
        Self {
            grid,
            u: vec![[0.0; 2]; n],
        }
    }

    pub fn from_fn(grid: Arc<Grid2d>, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let mut u = Vec::with_capacity(grid.num_nodes());
        for &x3 in &grid.x3 {
            for &x1 in &grid.x1 {
                u.push(f(x1, x3));
            }
        }
        Self { grid, u }
    }

    pub fn at(&self, i: usize, j: usize) -> [f64; 2] {
        self.u[self.grid.node(i, j)]
    }

    /// Bilinear interpolation at an arbitrary point of the domain.
    pub fn eval(&self, x1: f64, x3: f64) -> [f64; 2] {
        let g = &self.grid;
        let (ci, cj) = g.locate(x1, x3);
        let s = ((x1 - g.x1[ci]) / g.h1(ci)).clamp(0.0, 1.0);
        let t = ((x3 - g.x3[cj]) / g.h3(cj)).clamp(0.0, 1.0);
        let w = [(1.0 - s) * (1.0 - t), s * (1.0 - t), (1.0 - s) * t, s * t];
        let n = [
            self.at(ci, cj),
            self.at(ci + 1, cj),
            self.at(ci, cj + 1),
            self.at(ci + 1, cj + 1),
        ];
        let mut out = [0.0; 2];
        for k in 0..4 {
            out[0] += w[k] * n[k][0];
            out[1] += w[k] * n[k][1];
        }
        out
    }

    /// Values and gradient of the bilinear interpolant inside cell `(ci, cj)`
    /// at local coordinates `(s, t) ∈ [0, 1]²`. The gradient is
    /// `[[∂1u1, ∂3u1], [∂1u3, ∂3u3]]`.
    pub fn cell_eval(&self, ci: usize, cj: usize, s: f64, t: f64) -> ([f64; 2], [[f64; 2]; 2]) {
        let g = &self.grid;
        let (h1, h3) = (g.h1(ci), g.h3(cj));
        let a = self.at(ci, cj);
        let b = self.at(ci + 1, cj);
        let c = self.at(ci, cj + 1);
        let d = self.at(ci + 1, cj + 1);
        let mut val = [0.0; 2];
        let mut grad = [[0.0; 2]; 2];
        for k in 0..2 {
            val[k] = (1.0 - s) * (1.0 - t) * a[k] + s * (1.0 - t) * b[k] + (1.0 - s) * t * c[k] + s * t * d[k];
            grad[k][0] = ((1.0 - t) * (b[k] - a[k]) + t * (d[k] - c[k])) / h1;
            grad[k][1] = ((1.0 - s) * (c[k] - a[k]) + s * (d[k] - b[k])) / h3;
        }
        (val, grad)
    }

    pub fn axpy(&mut self, alpha: f64, other: &PlaneField) {
        for (a, b) in self.u.iter_mut().zip(&other.u) {
            a[0] += alpha * b[0];
            a[1] += alpha * b[1];
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.u
            .iter()
            .fold(0.0_f64, |m, v| m.max(v[0].abs()).max(v[1].abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().all(|v| v[0].is_finite() && v[1].is_finite())
    }
}

/// One scalar value per grid node, e.g. the transverse component `ψ3`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Arc<Grid2d>,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn from_fn(grid: Arc<Grid2d>, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.num_nodes());
        for &x3 in &grid.x3 {
            for &x1 in &grid.x1 {
                values.push(f(x1, x3));
            }
        }
        Self { grid, values }
    }

    pub fn component(field: &PlaneField, c: usize) -> Self {
        Self {
            grid: field.grid.clone(),
            values: field.u.iter().map(|v| v[c]).collect(),
        }
    }

    /// Values along the x3-row `j`.
    pub fn row(&self, j: usize) -> &[f64] {
        let n = self.grid.x1.len();
        &self.values[j * n..(j + 1) * n]
    }
}

/// Displacement and velocity snapshots at increasing times. Static
/// solutions are stored as a single snapshot at `t = 0` with zero velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub u: Vec<PlaneField>,
    pub v: Vec<PlaneField>,
}

impl Trajectory {
    pub fn single(u: PlaneField) -> Self {
        let v = PlaneField::zeros(u.grid.clone());
        Self {
            times: vec![0.0],
            u: vec![u],
            v: vec![v],
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn grid(&self) -> &Arc<Grid2d> {
        &self.u[0].grid
    }

    pub fn last(&self) -> &PlaneField {
        self.u.last().expect("empty trajectory")
    }
}

/// Two-point Gauss abscissae on `[0, 1]`.
pub const GAUSS2: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microstructure::{build_layers, LayerMode};

    #[test]
    fn fitted_grid_hits_interfaces() {
        let ls = build_layers(LayerMode::Periodic, 0.25, 1.0 / 32.0, 1.0, 0.5).unwrap();
        let spec = GridSpec {
            cells_per_gap: 6,
            grading: 3.0,
            ..GridSpec::default()
        };
        let x = layer_fitted_x3(&ls, &spec).unwrap();
        assert_eq!(x.len(), 1 + 4 * 6 + 3 * 4);
        for (lo, hi) in ls.intervals() {
            assert!(x.iter().any(|v| (v - lo).abs() < 1e-14));
            assert!(x.iter().any(|v| (v - hi).abs() < 1e-14));
        }
        assert!(x.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*x.last().unwrap(), 1.0);
    }

    #[test]
    fn thin_layer_unresolved() {
        let eps: f64 = 0.125;
        let ls = build_layers(LayerMode::Periodic, eps, eps.powi(3), 1.0, 0.5).unwrap();
        let spec = GridSpec {
            h3_floor: 1e-3,
            ..GridSpec::default()
        };
        assert!(matches!(
            layer_fitted_x3(&ls, &spec),
            Err(Error::UnresolvedLayer { .. })
        ));
    }

    #[test]
    fn bilinear_interpolation_is_exact_for_bilinear_data() {
        let g = Arc::new(Grid2d::new(vec![0.0, 0.3, 1.0], vec![0.0, 0.1, 0.5, 1.0], false).unwrap());
        let f = |x: f64, z: f64| [1.0 + 2.0 * x - z + 0.5 * x * z, x * z];
        let p = PlaneField::from_fn(g.clone(), f);
        for (x, z) in [(0.2, 0.05), (0.7, 0.9), (1.0, 1.0), (0.0, 0.3)] {
            let v = p.eval(x, z);
            let e = f(x, z);
            assert!((v[0] - e[0]).abs() < 1e-14 && (v[1] - e[1]).abs() < 1e-14);
        }
        let (_, grad) = p.cell_eval(1, 2, 0.5, 0.5);
        let (x, z) = (0.65, 0.75);
        assert!((grad[0][0] - (2.0 + 0.5 * z)).abs() < 1e-12);
        assert!((grad[1][1] - x).abs() < 1e-12);
    }

    #[test]
    fn dual_lengths_sum_to_length() {
        let g = Grid2d::new(vec![0.0, 1.0], vec![0.0, 0.1, 0.4, 1.0], false).unwrap();
        let total: f64 = (0..g.x3.len()).map(|j| g.dual3(j)).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }
}
