//! Layer geometry on the stacking axis `x3 ∈ (0, L)`: periodic and explicit
//! center sets, the per-cell layer count `n_ε`, the layer-supported weight
//! `m_ε = (ε / r_ε) 1_{B_ε}` and moving-window averages of step profiles.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when comparing center gaps against `ε`.
const GAP_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerMode {
    Periodic,
    Explicit(Vec<f64>),
}

/// Stiff layer centers `ω_ε^j` with common thickness `r_ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSet {
    pub centers: Vec<f64>,
    pub thickness: f64,
    pub epsilon: f64,
    pub domain_length: f64,
    pub delta: f64,
    /// True when built by the periodic construction `ω = ε Z_ε`.
    pub periodic: bool,
    /// Smallest pairwise distance between centers (`+∞` for fewer than two).
    pub min_gap: f64,
    /// Whether `min_gap` equals `ε` (up to rounding); explicit sets may exceed it.
    pub gap_exact: bool,
}

impl LayerSet {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Weight `ε / r_ε` carried by the measure `m_ε` inside the layers.
    pub fn weight(&self) -> f64 {
        self.epsilon / self.thickness
    }

    /// Layer intervals `(ω - r/2, ω + r/2)` along `x3`.
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * self.thickness;
        self.centers.iter().map(move |c| (c - h, c + h))
    }

    /// Volume fraction of stiff material on `(0, L)`.
    pub fn stiff_fraction(&self) -> f64 {
        self.len() as f64 * self.thickness / self.domain_length
    }

    /// Index of the center closest to `x3`, if any.
    pub fn nearest(&self, x3: f64) -> Option<usize> {
        if self.centers.is_empty() {
            return None;
        }
        let k = self.centers.partition_point(|c| *c < x3);
        let mut best = k.min(self.centers.len() - 1);
        if k > 0 && (x3 - self.centers[k - 1]).abs() <= (self.centers[best] - x3).abs() {
            best = k - 1;
        }
        Some(best)
    }

    /// Point query against the layer geometry.
    pub fn query(&self, x3: f64) -> LayerQuery {
        layer_query(self, x3)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("center,thickness\n");
        for c in &self.centers {
            let _ = writeln!(s, "{c},{}", self.thickness);
        }
        s
    }
}

/// Indices `i` with `(εi - ε/2, εi + ε/2] ⊂ (0, L)`.
pub fn cell_indices(epsilon: f64, length: f64) -> std::ops::RangeInclusive<i64> {
    let hi = (length / epsilon - 0.5 + 1e-9).floor() as i64;
    1..=hi
}

/// Builds a layer set, validating the clearance and spacing conditions.
pub fn build_layers(
    mode: LayerMode,
    epsilon: f64,
    thickness: f64,
    length: f64,
    delta: f64,
) -> Result<LayerSet> {
    build_layers_with_gap(mode, epsilon, thickness, length, delta, 1.0)
}

/// As [`build_layers`], but explicit sets only need a minimum gap of
/// `gap_factor · ε` (the hard-core distance of a scaled point sample).
pub fn build_layers_with_gap(
    mode: LayerMode,
    epsilon: f64,
    thickness: f64,
    length: f64,
    delta: f64,
    gap_factor: f64,
) -> Result<LayerSet> {
    if !(epsilon > 0.0 && thickness > 0.0 && length > 0.0 && delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon, thickness, length and delta must be positive (got {epsilon}, {thickness}, {length}, {delta})"
        )));
    }
    if !(gap_factor > 0.0 && gap_factor <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gap factor must lie in (0, 1], got {gap_factor}"
        )));
    }
    let bound = thickness * (1.0 + delta);
    if epsilon * gap_factor <= bound {
        return Err(Error::ThicknessViolation {
            epsilon: epsilon * gap_factor,
            bound,
        });
    }
    let (centers, periodic) = match mode {
        LayerMode::Periodic => (
            cell_indices(epsilon, length)
                .map(|i| epsilon * i as f64)
                .collect::<Vec<_>>(),
            true,
        ),
        LayerMode::Explicit(c) => (c, false),
    };
    let min_allowed = gap_factor * epsilon * (1.0 - GAP_RTOL);
    let mut min_gap = f64::INFINITY;
    for w in centers.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::UnsortedCenters);
        }
        let gap = w[1] - w[0];
        if gap < min_allowed {
            return Err(Error::GapViolation {
                a: w[0],
                b: w[1],
                gap,
                min_gap: gap_factor * epsilon,
            });
        }
        min_gap = min_gap.min(gap);
    }
    let clearance = 0.5 * epsilon;
    for &c in &centers {
        if !(c > clearance && c < length - clearance) {
            return Err(Error::BoundaryViolation {
                center: c,
                clearance,
                length,
            });
        }
    }
    let gap_exact = centers.len() < 2 || (min_gap - epsilon).abs() <= GAP_RTOL * epsilon;
    Ok(LayerSet {
        centers,
        thickness,
        epsilon,
        domain_length: length,
        delta,
        periodic,
        min_gap,
        gap_exact,
    })
}

/// Per-cell layer counts `n_ε` on the cells `(εi - ε/2, εi + ε/2]`,
/// `i ∈ Z_ε`; zero outside those cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDensity {
    pub epsilon: f64,
    pub domain_length: f64,
    pub first_index: i64,
    pub counts: Vec<u32>,
}

impl StepDensity {
    /// Cell boundaries `εi - ε/2` for every stored cell plus the final right end.
    pub fn breakpoints(&self) -> Vec<f64> {
        let e = self.epsilon;
        let mut b: Vec<f64> = (0..self.counts.len())
            .map(|k| e * (self.first_index + k as i64) as f64 - 0.5 * e)
            .collect();
        if let Some(last) = b.last().copied() {
            b.push(last + e);
        }
        b
    }

    fn cell_of(&self, x3: f64) -> i64 {
        (x3 / self.epsilon - 0.5).ceil() as i64
    }

    /// Piecewise-constant value at `x3`.
    pub fn value_at(&self, x3: f64) -> f64 {
        let k = self.cell_of(x3) - self.first_index;
        if k >= 0 && (k as usize) < self.counts.len() {
            self.counts[k as usize] as f64
        } else {
            0.0
        }
    }

    pub fn sup(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("cell_index,cell_left,cell_right,count\n");
        let e = self.epsilon;
        for (k, c) in self.counts.iter().enumerate() {
            let i = self.first_index + k as i64;
            let left = e * i as f64 - 0.5 * e;
            let _ = writeln!(s, "{i},{left},{},{c}", left + e);
        }
        s
    }
}

pub fn n_eps_field(ls: &LayerSet) -> StepDensity {
    let e = ls.epsilon;
    let range = cell_indices(e, ls.domain_length);
    let first = *range.start();
    let mut counts = vec![0u32; range.clone().count()];
    for &c in &ls.centers {
        let i = (c / e - 0.5).ceil() as i64;
        if range.contains(&i) {
            counts[(i - first) as usize] += 1;
        }
    }
    StepDensity {
        epsilon: e,
        domain_length: ls.domain_length,
        first_index: first,
        counts,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerQuery {
    pub in_stiff: bool,
    /// Density of `m_ε` with respect to Lebesgue measure.
    pub weight: f64,
    /// Local layer coordinate `(x3 - ω^j) / r_ε` inside the widened window, else 0.
    pub y_local: f64,
}

pub fn layer_query(ls: &LayerSet, x3: f64) -> LayerQuery {
    let Some(j) = ls.nearest(x3) else {
        return LayerQuery {
            in_stiff: false,
            weight: 0.0,
            y_local: 0.0,
        };
    };
    let d = x3 - ls.centers[j];
    let r = ls.thickness;
    let in_stiff = d.abs() < 0.5 * r;
    let y_local = if d.abs() < 0.5 * r * (1.0 + ls.delta) {
        d / r
    } else {
        0.0
    };
    LayerQuery {
        in_stiff,
        weight: if in_stiff { ls.weight() } else { 0.0 },
        y_local,
    }
}

/// A one-dimensional profile on `(0, L)` that can be integrated exactly.
pub trait Profile1d {
    fn domain_length(&self) -> f64;
    /// `∫_a^b f`, with `0 <= a <= b <= L`.
    fn integral(&self, a: f64, b: f64) -> f64;
}

impl Profile1d for StepDensity {
    fn domain_length(&self) -> f64 {
        self.domain_length
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        let e = self.epsilon;
        let mut total = 0.0;
        for (k, &c) in self.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let i = (self.first_index + k as i64) as f64;
            let lo = (e * i - 0.5 * e).max(a);
            let hi = (e * i + 0.5 * e).min(b);
            if hi > lo {
                total += c as f64 * (hi - lo);
            }
        }
        total
    }
}

/// Piecewise-linear profile through `(points[i], values[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalProfile {
    pub points: Vec<f64>,
    pub values: Vec<f64>,
}

impl NodalProfile {
    pub fn new(points: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() || points.len() < 2 {
            return Err(Error::GridMismatch(
                "profile needs at least two points and one value per point".into(),
            ));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::UnsortedCenters);
        }
        Ok(Self { points, values })
    }

    pub fn value_at(&self, x: f64) -> f64 {
        let k = self.points.partition_point(|p| *p <= x);
        if k == 0 {
            return self.values[0];
        }
        if k >= self.points.len() {
            return *self.values.last().unwrap();
        }
        let (x0, x1) = (self.points[k - 1], self.points[k]);
        let t = (x - x0) / (x1 - x0);
        self.values[k - 1] * (1.0 - t) + self.values[k] * t
    }
}

impl Profile1d for NodalProfile {
    fn domain_length(&self) -> f64 {
        *self.points.last().unwrap()
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        for k in 0..self.points.len() - 1 {
            let lo = self.points[k].max(a);
            let hi = self.points[k + 1].min(b);
            if hi > lo {
                total += 0.5 * (hi - lo) * (self.value_at(lo) + self.value_at(hi));
            }
        }
        total
    }
}

/// Moving average of `f` over windows of length `window` centered at each
/// point of `at`; windows are clipped to `(0, L)`.
pub fn coarse_average<P: Profile1d + ?Sized>(
    f: &P,
    window: f64,
    epsilon: f64,
    at: &[f64],
) -> Result<Vec<f64>> {
    if window < epsilon * (1.0 - GAP_RTOL) {
        return Err(Error::WindowTooSmall { window, epsilon });
    }
    let length = f.domain_length();
    Ok(at
        .iter()
        .map(|&x| {
            let a = (x - 0.5 * window).max(0.0);
            let b = (x + 0.5 * window).min(length);
            if b > a {
                f.integral(a, b) / (b - a)
            } else {
                0.0
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn periodic(eps: f64, r: f64) -> LayerSet {
        build_layers(LayerMode::Periodic, eps, r, 1.0, 0.5).unwrap()
    }

    #[test]
    fn periodic_quarter_cells() {
        let ls = periodic(0.25, 1.0 / 32.0);
        assert_eq!(ls.centers, vec![0.25, 0.5, 0.75]);
        assert!(ls.periodic && ls.gap_exact);
    }

    #[test]
    fn explicit_exact_gap_accepted() {
        let ls = build_layers(LayerMode::Explicit(vec![0.3, 0.3 + 0.2]), 0.2, 0.01, 1.0, 0.5).unwrap();
        assert_eq!(ls.len(), 2);
        assert!(ls.gap_exact);
    }

    #[test]
    fn explicit_wide_gap_is_flagged() {
        let ls = build_layers(LayerMode::Explicit(vec![0.2, 0.6]), 0.2, 0.01, 1.0, 0.5).unwrap();
        assert!(!ls.gap_exact);
        assert!((ls.min_gap - 0.4).abs() < 1e-12);
    }

    #[test]
    fn explicit_gap_violation() {
        let err = build_layers(LayerMode::Explicit(vec![0.3, 0.35]), 0.2, 0.01, 1.0, 0.5).unwrap_err();
        assert!(matches!(err, Error::GapViolation { .. }));
    }

    #[test]
    fn boundary_and_thickness_violations() {
        let err = build_layers(LayerMode::Explicit(vec![0.05]), 0.2, 0.01, 1.0, 0.5).unwrap_err();
        assert!(matches!(err, Error::BoundaryViolation { .. }));
        let err = build_layers(LayerMode::Periodic, 0.1, 0.08, 1.0, 0.5).unwrap_err();
        assert!(matches!(err, Error::ThicknessViolation { .. }));
    }

    #[test]
    fn unsorted_rejected() {
        let err = build_layers(LayerMode::Explicit(vec![0.6, 0.3]), 0.2, 0.01, 1.0, 0.5).unwrap_err();
        assert!(matches!(err, Error::UnsortedCenters));
    }

    #[test]
    fn n_eps_periodic_quarter() {
        let n = n_eps_field(&periodic(0.25, 1.0 / 32.0));
        assert_eq!(n.first_index, 1);
        assert_eq!(n.counts, vec![1, 1, 1]);
        assert_eq!(n.value_at(0.25), 1.0);
        assert_eq!(n.value_at(0.6), 1.0);
        assert_eq!(n.value_at(0.1), 0.0);
        assert_eq!(n.value_at(0.95), 0.0);
    }

    #[test]
    fn n_eps_empty_and_periodic_fine() {
        let empty = build_layers(LayerMode::Explicit(vec![]), 0.1, 0.01, 1.0, 0.5).unwrap();
        assert!(n_eps_field(&empty).counts.iter().all(|&c| c == 0));
        let n = n_eps_field(&periodic(1.0 / 16.0, 1.0 / 256.0));
        assert!(n.counts.iter().all(|&c| c == 1));
        assert_eq!(n.counts.len(), 15);
    }

    #[test]
    fn density_csv_layout() {
        let csv = n_eps_field(&periodic(0.25, 1.0 / 32.0)).to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "cell_index,cell_left,cell_right,count");
        assert_eq!(lines[1], "1,0.125,0.375,1");
        assert_eq!(lines.len(), 4);
        let layers = periodic(0.25, 1.0 / 32.0).to_csv();
        assert!(layers.starts_with("center,thickness\n0.25,0.03125\n"));
    }

    #[test]
    fn query_examples() {
        let ls = periodic(0.25, 1.0 / 32.0);
        let r = ls.thickness;
        let q = layer_query(&ls, 0.25);
        assert_eq!(q, LayerQuery { in_stiff: true, weight: 8.0, y_local: 0.0 });
        let q = layer_query(&ls, 0.375);
        assert_eq!(q, LayerQuery { in_stiff: false, weight: 0.0, y_local: 0.0 });
        let q = layer_query(&ls, 0.25 + r / 4.0);
        assert!(q.in_stiff);
        assert!((q.y_local - 0.25).abs() < 1e-12);
        // inside the widened window but outside the layer
        let q = layer_query(&ls, 0.25 + 0.6 * r);
        assert!(!q.in_stiff);
        assert!((q.y_local - 0.6).abs() < 1e-12);
    }

    #[test]
    fn coarse_average_examples() {
        let n = n_eps_field(&periodic(1.0 / 16.0, 1.0 / 256.0));
        let at = [0.3, 0.5, 0.7];
        let avg = coarse_average(&n, 4.0 / 16.0, 1.0 / 16.0, &at).unwrap();
        for v in avg {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let alt = StepDensity {
            epsilon: 0.1,
            domain_length: 1.0,
            first_index: 1,
            counts: (0..9).map(|k| if k % 2 == 0 { 0 } else { 2 }).collect(),
        };
        let avg = coarse_average(&alt, 0.2, 0.1, &[0.33, 0.41, 0.5, 0.62]).unwrap();
        for v in avg {
            assert!((v - 1.0).abs() < 1e-12, "{v}");
        }
        let c = NodalProfile::new(vec![0.0, 0.5, 1.0], vec![3.0, 3.0, 3.0]).unwrap();
        for v in coarse_average(&c, 0.3, 0.1, &[0.0, 0.4, 1.0]).unwrap() {
            assert!((v - 3.0).abs() < 1e-12);
        }
        assert!(matches!(
            coarse_average(&c, 0.05, 0.1, &[0.5]),
            Err(Error::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn weight_integrates_to_count_times_eps() {
        let ls = periodic(0.125, 1.0 / 64.0);
        let m = 200_000;
        let h = 1.0 / m as f64;
        let total: f64 = (0..m).map(|k| layer_query(&ls, (k as f64 + 0.5) * h).weight * h).sum();
        assert!((total - ls.len() as f64 * ls.epsilon).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn coarse_average_scales(c in -5.0f64..5.0, x in 0.0f64..1.0) {
            let prof = NodalProfile::new(vec![0.0, 0.4, 1.0], vec![1.0 * c, -2.0 * c, 0.5 * c]).unwrap();
            let unit = NodalProfile::new(vec![0.0, 0.4, 1.0], vec![1.0, -2.0, 0.5]).unwrap();
            let a = coarse_average(&prof, 0.3, 0.1, &[x]).unwrap()[0];
            let b = coarse_average(&unit, 0.3, 0.1, &[x]).unwrap()[0];
            prop_assert!((a - c * b).abs() <= 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn explicit_sets_bound_density(gaps in proptest::collection::vec(1.0f64..3.0, 1..6), start in 0.15f64..0.3) {
            let eps = 0.1;
            let mut centers = vec![start];
            for g in gaps {
                let next = centers.last().unwrap() + g * eps;
                if next < 1.0 - 0.06 { centers.push(next); }
            }
            let ls = build_layers(LayerMode::Explicit(centers), eps, 0.01, 1.0, 0.5).unwrap();
            let n = n_eps_field(&ls);
            let bound = if ls.len() < 2 { 1.0 } else { (eps / ls.min_gap).ceil().max(1.0) };
            prop_assert!(n.sup() as f64 <= bound);
            let total: u32 = n.counts.iter().sum();
            prop_assert!(total as usize <= ls.len());
        }
    }
}
