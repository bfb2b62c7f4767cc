//! Material scalings and the discrete operators of the limit models:
//! isotropic stress, membrane stress, the bending pair, the layer
//! bilinear forms and the micro traction jump.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PlaneField, ScalarField};
use crate::linalg::SymBanded;

/// Moduli of the soft interlayer material as a function of `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum SoftClass {
    /// `(μ, λ)` independent of `ε`.
    Unit { mu: f64, lambda: f64 },
    /// `ε^s (μ, λ)` with `0 < s < 2`.
    Intermediate { s: f64, mu: f64, lambda: f64 },
    /// `ε² (μ0, λ0)`.
    Critical { mu0: f64, lambda0: f64 },
}

impl SoftClass {
    pub fn name(&self) -> &'static str {
        match self {
            SoftClass::Unit { .. } => "unit",
            SoftClass::Intermediate { .. } => "intermediate",
            SoftClass::Critical { .. } => "critical",
        }
    }
}

/// `μ1ε = c1 ε^-a`, `λ1ε = l μ1ε`, `rε = c2 ε^b`, soft moduli per class,
/// soft density `ρ` and stiff density `(ε / rε) ρ̄1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialScaling {
    pub a: f64,
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
    pub l: f64,
    pub soft: SoftClass,
    pub rho: f64,
    pub rho1_bar: f64,
}

impl MaterialScaling {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.b >= 1.0) {
            return bad("thickness exponent b must be >= 1");
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return bad("c1 and c2 must be positive");
        }
        if !(self.l >= 0.0) {
            return bad("l must be >= 0");
        }
        if !(self.rho > 0.0 && self.rho1_bar > 0.0) {
            return bad("densities must be positive");
        }
        if !self.a.is_finite() {
            return bad("stiff exponent a must be finite");
        }
        let (mu, lambda) = match self.soft {
            SoftClass::Unit { mu, lambda } => (mu, lambda),
            SoftClass::Intermediate { s, mu, lambda } => {
                if !(s > 0.0 && s < 2.0) {
                    return bad("intermediate exponent s must lie in (0, 2)");
                }
                (mu, lambda)
            }
            SoftClass::Critical { mu0, lambda0 } => (mu0, lambda0),
        };
        if !(mu > 0.0 && lambda >= 0.0) {
            return bad("soft moduli need mu > 0 and lambda >= 0");
        }
        if self.b == 1.0 && self.c2 >= 1.0 {
            return bad("b = 1 needs c2 < 1 so that layers fit in their cells");
        }
        Ok(())
    }

    pub fn mu1(&self, eps: f64) -> f64 {
        self.c1 * eps.powf(-self.a)
    }

    pub fn lambda1(&self, eps: f64) -> f64 {
        self.l * self.mu1(eps)
    }

    pub fn thickness(&self, eps: f64) -> f64 {
        self.c2 * eps.powf(self.b)
    }

    /// `(μ0ε, λ0ε)`.
    pub fn soft_moduli(&self, eps: f64) -> (f64, f64) {
        match self.soft {
            SoftClass::Unit { mu, lambda } => (mu, lambda),
            SoftClass::Intermediate { s, mu, lambda } => {
                let f = eps.powf(s);
                (f * mu, f * lambda)
            }
            SoftClass::Critical { mu0, lambda0 } => {
                let f = eps * eps;
                (f * mu0, f * lambda0)
            }
        }
    }

    pub fn stiff_density(&self, eps: f64) -> f64 {
        eps / self.thickness(eps) * self.rho1_bar
    }

    pub fn contrast(&self, eps: f64) -> f64 {
        self.mu1(eps) / self.soft_moduli(eps).0
    }
}

/// Symmetric tensor on the `(x1, x3)` section.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym2 {
    pub e11: f64,
    pub e13: f64,
    pub e33: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 {
        e11: 0.0,
        e13: 0.0,
        e33: 0.0,
    };

    pub fn identity() -> Self {
        Sym2 {
            e11: 1.0,
            e13: 0.0,
            e33: 1.0,
        }
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Sym2 {
            e11: a,
            e13: 0.0,
            e33: b,
        }
    }

    /// Symmetric part of `[[∂1u1, ∂3u1], [∂1u3, ∂3u3]]`.
    pub fn from_gradient(g: [[f64; 2]; 2]) -> Self {
        Sym2 {
            e11: g[0][0],
            e13: 0.5 * (g[0][1] + g[1][0]),
            e33: g[1][1],
        }
    }

    pub fn trace(&self) -> f64 {
        self.e11 + self.e33
    }

    /// `A : B`.
    pub fn ddot(&self, o: &Sym2) -> f64 {
        self.e11 * o.e11 + self.e33 * o.e33 + 2.0 * self.e13 * o.e13
    }

    pub fn norm_sq(&self) -> f64 {
        self.ddot(self)
    }
}

/// One symmetric tensor per grid cell, evaluated at the cell midpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub n1: usize,
    pub n3: usize,
    pub cells: Vec<Sym2>,
}

pub type StrainField = TensorField;
pub type StressField = TensorField;

impl TensorField {
    pub fn at(&self, ci: usize, cj: usize) -> Sym2 {
        self.cells[cj * self.n1 + ci]
    }
}

/// `e(u)` at the cell midpoints.
pub fn strain_field(u: &PlaneField) -> StrainField {
    let g = &u.grid;
    let mut cells = Vec::with_capacity(g.n1() * g.n3());
    for cj in 0..g.n3() {
        for ci in 0..g.n1() {
            let (_, grad) = u.cell_eval(ci, cj, 0.5, 0.5);
            cells.push(Sym2::from_gradient(grad));
        }
    }
    TensorField {
        n1: g.n1(),
        n3: g.n3(),
        cells,
    }
}

/// `σ = λ tr(e) I + 2μ e`.
pub fn isotropic_stress(lambda: f64, mu: f64, e: &Sym2) -> Sym2 {
    let tr = lambda * e.trace();
    Sym2 {
        e11: tr + 2.0 * mu * e.e11,
        e13: 2.0 * mu * e.e13,
        e33: tr + 2.0 * mu * e.e33,
    }
}

pub fn isotropic_stress_field(lambda: f64, mu: f64, e: &StrainField) -> StressField {
    TensorField {
        n1: e.n1,
        n3: e.n3,
        cells: e.cells.iter().map(|c| isotropic_stress(lambda, mu, c)).collect(),
    }
}

/// In-plane membrane stress `2 e' + 2l/(l+2) tr(e') I'` of an in-plane
/// strain `e'` given in the `(x1, x2)` layer plane.
pub fn sigma_xprime_tensor(l: f64, e: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let c = 2.0 * l / (l + 2.0) * (e[0][0] + e[1][1]);
    [
        [2.0 * e[0][0] + c, 2.0 * e[0][1]],
        [2.0 * e[1][0], 2.0 * e[1][1] + c],
    ]
}

/// `4(l+1)/(l+2)`: the 11-entry of the membrane stress per unit `∂1ψ1`
/// for x2-invariant fields with `ψ2 = 0`.
pub fn membrane_coefficient(l: f64) -> f64 {
    4.0 * (l + 1.0) / (l + 2.0)
}

/// `(2(l+1)/(l+2), l/(l+2))`: the two diagonal entries of `H^σ` per unit `∂11ψ3`.
pub fn bending_coefficients(l: f64) -> (f64, f64) {
    (2.0 * (l + 1.0) / (l + 2.0), l / (l + 2.0))
}

/// Membrane stress at every cell midpoint of `ψ`, from `∂1ψ1` alone.
pub fn sigma_xprime(l: f64, psi: &PlaneField) -> Vec<[[f64; 2]; 2]> {
    let g = &psi.grid;
    let mut out = Vec::with_capacity(g.n1() * g.n3());
    for cj in 0..g.n3() {
        for ci in 0..g.n1() {
            let (_, grad) = psi.cell_eval(ci, cj, 0.5, 0.5);
            out.push(sigma_xprime_tensor(l, [[grad[0][0], 0.0], [0.0, 0.0]]));
        }
    }
    out
}

/// Second derivative at the nodes of a uniform 1D grid: centred
/// differences inside, one-sided second-order closures at the two ends.
pub fn second_difference(h: f64, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let h2 = h * h;
    let mut d = vec![0.0; n];
    if n < 3 {
        return d;
    }
    for i in 1..n - 1 {
        d[i] = (v[i - 1] - 2.0 * v[i] + v[i + 1]) / h2;
    }
    if n >= 4 {
        d[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2;
        d[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / h2;
    } else {
        d[0] = d[1];
        d[n - 1] = d[1];
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BendingPair {
    /// In-plane Hessian, `diag(∂11ψ3, 0)` for x2-invariant fields.
    pub h: [[f64; 2]; 2],
    pub h_sigma: [[f64; 2]; 2],
}

impl BendingPair {
    pub fn contract(&self, other: &BendingPair) -> f64 {
        let mut s = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                s += self.h[a][b] * other.h_sigma[a][b];
            }
        }
        s
    }
}

/// `(H, H^σ)` at every node of a uniform x1 line.
pub fn bending_pair(l: f64, h: f64, psi3: &[f64]) -> Vec<BendingPair> {
    let (c11, c22) = bending_coefficients(l);
    second_difference(h, psi3)
        .into_iter()
        .map(|d| BendingPair {
            h: [[d, 0.0], [0.0, 0.0]],
            h_sigma: [[c11 * d, 0.0], [0.0, c22 * d]],
        })
        .collect()
}

/// Which layer term of the limit form to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerForm {
    /// `k ∫ n e'(u) : σ'(ψ)`.
    Membrane { k: f64, l: f64 },
    /// `κ/6 ∫ n H(u3) : H^σ(ψ3)`.
    Bending { kappa: f64, l: f64 },
}

#[derive(Debug, Clone, Copy)]
pub enum FormInput<'a> {
    Plane(&'a PlaneField),
    Scalar(&'a ScalarField),
}

/// Quadrature of a layer term of the limit bilinear form. `n_rows[j]` is the
/// layer density on the x3-row `j`; rows are weighted by their dual length
/// in x3. Membrane uses the cell differences of `u1` in x1, bending the
/// nodal second differences with trapezoid weights.
pub fn effective_bilinear(
    form: LayerForm,
    n_rows: &[f64],
    u: FormInput<'_>,
    psi: FormInput<'_>,
) -> Result<f64> {
    match (form, u, psi) {
        (LayerForm::Membrane { k, l }, FormInput::Plane(u), FormInput::Plane(p)) => {
            check_finite(k)?;
            check_rows(&u.grid.x3, n_rows)?;
            if u.grid != p.grid {
                return Err(Error::GridMismatch("fields live on different grids".into()));
            }
            let g = &u.grid;
            let c = k * membrane_coefficient(l);
            let mut total = 0.0;
            for (j, &n) in n_rows.iter().enumerate() {
                if n == 0.0 {
                    continue;
                }
                let mut row = 0.0;
                for i in 0..g.n1() {
                    let h = g.h1(i);
                    let du = (u.at(i + 1, j)[0] - u.at(i, j)[0]) / h;
                    let dp = (p.at(i + 1, j)[0] - p.at(i, j)[0]) / h;
                    row += h * du * dp;
                }
                total += n * g.dual3(j) * c * row;
            }
            Ok(total)
        }
        (LayerForm::Bending { kappa, l }, FormInput::Scalar(u), FormInput::Scalar(p)) => {
            check_finite(kappa)?;
            check_rows(&u.grid.x3, n_rows)?;
            if u.grid != p.grid {
                return Err(Error::GridMismatch("fields live on different grids".into()));
            }
            let g = &u.grid;
            let h = uniform_step(&g.x1)?;
            let mut total = 0.0;
            for (j, &n) in n_rows.iter().enumerate() {
                if n == 0.0 {
                    continue;
                }
                let hu = bending_pair(l, h, u.row(j));
                let hp = bending_pair(l, h, p.row(j));
                let last = hu.len() - 1;
                let row: f64 = hu
                    .iter()
                    .zip(&hp)
                    .enumerate()
                    .map(|(i, (a, b))| {
                        let w = if i == 0 || i == last { 0.5 * h } else { h };
                        w * a.contract(b)
                    })
                    .sum();
                total += n * g.dual3(j) * kappa / 6.0 * row;
            }
            Ok(total)
        }
        (LayerForm::Membrane { .. }, _, _) => Err(Error::RegimeMismatch(
            "membrane form acts on in-plane displacement fields".into(),
        )),
        (LayerForm::Bending { .. }, _, _) => Err(Error::RegimeMismatch(
            "bending form acts on scalar transverse fields".into(),
        )),
    }
}

fn check_finite(c: f64) -> Result<()> {
    if c.is_finite() {
        Ok(())
    } else {
        Err(Error::RegimeMismatch(
            "an infinite coefficient is a constraint, not a form".into(),
        ))
    }
}

fn check_rows(x3: &[f64], n_rows: &[f64]) -> Result<()> {
    if x3.len() != n_rows.len() {
        return Err(Error::GridMismatch(format!(
            "{} density rows for {} grid rows",
            n_rows.len(),
            x3.len()
        )));
    }
    Ok(())
}

pub(crate) fn uniform_step(x: &[f64]) -> Result<f64> {
    let h = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    if x.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h) {
        return Err(Error::GridMismatch("bending terms need a uniform x1 grid".into()));
    }
    Ok(h)
}

/// `Σ_i w_i (D2 u)_i (D2 ψ)_i` on `N + 1` uniform nodes, where `D2` is the
/// centred second difference closed by the even reflections
/// `v_{-1} = v_1`, `v_{N+1} = v_{N-1}` (clamped slope) and `w` are trapezoid
/// weights. Dividing a row of the matrix by `h` gives the standard clamped
/// fourth difference.
pub fn clamped_bending_matrix(h: f64, nodes: usize) -> SymBanded {
    assert!(nodes >= 3, "need at least three nodes");
    let n = nodes - 1;
    let mut m = SymBanded::zeros(nodes, 2);
    let h2 = h * h;
    for i in 0..=n {
        let w = if i == 0 || i == n { 0.5 * h } else { h };
        let stencil: Vec<(usize, f64)> = if i == 0 {
            vec![(0, -2.0 / h2), (1, 2.0 / h2)]
        } else if i == n {
            vec![(n, -2.0 / h2), (n - 1, 2.0 / h2)]
        } else {
            vec![(i - 1, 1.0 / h2), (i, -2.0 / h2), (i + 1, 1.0 / h2)]
        };
        for &(p, a) in &stencil {
            for &(q, b) in &stencil {
                if q <= p {
                    m.add(p, q, w * a * b);
                }
            }
        }
    }
    m
}

/// P1 stiffness `Σ_i h_i (Δu/h)(Δψ/h)` on the nodes `x`.
pub fn membrane_matrix(x: &[f64]) -> SymBanded {
    let mut m = SymBanded::zeros(x.len(), 1);
    for i in 0..x.len() - 1 {
        let s = 1.0 / (x[i + 1] - x[i]);
        m.add(i, i, s);
        m.add(i + 1, i + 1, s);
        m.add(i + 1, i, -s);
    }
    m
}

/// Nodal micro displacements `u0(y3)` for components 1 and 3 on a uniform
/// grid over the soft interval, node 0 touching the layer below and the
/// last node touching the layer above.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroProfile {
    pub u1: Vec<f64>,
    pub u3: Vec<f64>,
}

impl MicroProfile {
    pub fn from_fn(cells: usize, theta: f64, f: impl Fn(f64) -> [f64; 2]) -> Self {
        let h = (1.0 - theta) / cells as f64;
        let (u1, u3) = (0..=cells).map(|k| f(k as f64 * h)).map(|v| (v[0], v[1])).unzip();
        Self { u1, u3 }
    }

    pub fn cells(&self) -> usize {
        self.u1.len() - 1
    }
}

/// Traction exerted by the soft cell on the stiff layer:
/// `g1 = μ0 (∂y u01|⁺ − ∂y u01|⁻)`, `g3 = (λ0 + 2μ0)(∂y u03|⁺ − ∂y u03|⁻)`,
/// `g2 = 0`. The `⁺` side is the start of the soft interval (above the
/// layer), the `⁻` side its end (below the next layer, by periodicity).
pub fn traction_jump_1d(micro: &MicroProfile, mu0: f64, lambda0: f64, theta: f64) -> [f64; 3] {
    let m = micro.cells();
    let h = (1.0 - theta) / m as f64;
    let jump = |v: &[f64]| (v[1] - v[0]) / h - (v[m] - v[m - 1]) / h;
    [mu0 * jump(&micro.u1), 0.0, (lambda0 + 2.0 * mu0) * jump(&micro.u3)]
}
