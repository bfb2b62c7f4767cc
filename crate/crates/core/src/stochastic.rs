//! Integer-shift stationary hard-core point processes on the real line and
//! the empirical limit of the layer density they induce.
//!
//! Every lattice site `z` owns a fixed slice of a ChaCha8 keystream selected
//! by `(seed, replica)`, so a sample restricted to any window is a pure
//! function of the seed, the replica index and the window. Shifting the
//! window never reshuffles the randomness of the sites it still covers.

use std::fmt::Write as _;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::microstructure::{
    build_layers_with_gap, coarse_average, n_eps_field, LayerMode, Profile1d,
};

/// Built-in process families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessKind {
    /// Each integer site is kept independently with probability `p`.
    BernoulliLattice { p: f64 },
    /// With probability `mix_weight` the whole realization uses `p1`,
    /// otherwise `p2`. Stationary but not ergodic.
    Mixture { p1: f64, p2: f64, mix_weight: f64 },
    /// Every site kept, displaced by an independent uniform jitter in
    /// `[-jitter, jitter]`.
    ShiftedLattice { jitter: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessModel {
    pub kind: ProcessKind,
    pub min_gap: f64,
    pub seed: u64,
}

/// Words of keystream reserved per lattice site.
const WORDS_PER_SITE: u128 = 4;
/// Offset making site word positions non-negative for |z| < 2^40.
const SITE_OFFSET: i128 = 1 << 40;
const COMPONENT_KEY: u64 = 0x9e37_79b9_7f4a_7c15;

fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl ProcessModel {
    pub fn validate(&self) -> Result<()> {
        let d = self.min_gap;
        if !(d > 0.0 && d <= 1.0) {
            return Err(Error::BadModelParams(format!(
                "min gap must lie in (0, 1], got {d}"
            )));
        }
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::BadModelParams(format!("{name} = {p} outside [0, 1]")))
            }
        };
        match self.kind {
            ProcessKind::BernoulliLattice { p } => prob("p", p),
            ProcessKind::Mixture { p1, p2, mix_weight } => {
                prob("p1", p1)?;
                prob("p2", p2)?;
                prob("mix_weight", mix_weight)
            }
            ProcessKind::ShiftedLattice { jitter } => {
                if jitter >= 0.0 && jitter <= 0.5 * (1.0 - d) + 1e-12 {
                    Ok(())
                } else {
                    Err(Error::BadModelParams(format!(
                        "jitter {jitter} exceeds (1 - d)/2 = {}",
                        0.5 * (1.0 - d)
                    )))
                }
            }
        }
    }

    pub fn name(&self) -> String {
        match self.kind {
            ProcessKind::BernoulliLattice { p } => format!("bernoulli_lattice(p={p})"),
            ProcessKind::Mixture { p1, p2, mix_weight } => {
                format!("mixture(p1={p1};p2={p2};w={mix_weight})")
            }
            ProcessKind::ShiftedLattice { jitter } => format!("shifted_lattice(jitter={jitter})"),
        }
    }

    fn site_stream(&self, replica: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replica);
        rng
    }

    fn site_words(rng: &mut ChaCha8Rng, z: i64) -> (u64, u64) {
        let pos = (z as i128 + SITE_OFFSET) as u128 * WORDS_PER_SITE;
        rng.set_word_pos(pos);
        (rng.next_u64(), rng.next_u64())
    }

    /// Site-retention probability of a given replica (the realized mixture
    /// component for non-ergodic models).
    pub fn retention(&self, replica: u64) -> f64 {
        match self.kind {
            ProcessKind::BernoulliLattice { p } => p,
            ProcessKind::Mixture { p1, p2, mix_weight } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ COMPONENT_KEY);
                rng.set_stream(replica);
                if rng.random::<f64>() < mix_weight {
                    p1
                } else {
                    p2
                }
            }
            ProcessKind::ShiftedLattice { .. } => 1.0,
        }
    }

    /// Conditional expectation of `n0` given the shift-invariant events, as
    /// realized by `replica`.
    pub fn conditional_n0(&self, replica: u64) -> f64 {
        self.retention(replica)
    }
}

/// Restriction of one realization to an open window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaSample {
    pub points: Vec<f64>,
    pub window: (f64, f64),
}

pub fn sample_process(model: &ProcessModel, window: (f64, f64)) -> Result<OmegaSample> {
    sample_replica(model, 0, window)
}

/// Points of replica `replica` inside the open window `(a, b)`.
pub fn sample_replica(model: &ProcessModel, replica: u64, window: (f64, f64)) -> Result<OmegaSample> {
    model.validate()?;
    let (a, b) = window;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::BadModelParams(format!("window ({a}, {b}) is not a bounded interval")));
    }
    let keep_p = model.retention(replica);
    let jitter = match model.kind {
        ProcessKind::ShiftedLattice { jitter } => jitter,
        _ => 0.0,
    };
    let mut rng = model.site_stream(replica);
    let z_lo = (a - jitter).floor() as i64;
    let z_hi = (b + jitter).ceil() as i64;
    let mut points = Vec::new();
    for z in z_lo..=z_hi {
        let (w0, w1) = ProcessModel::site_words(&mut rng, z);
        let keep = unit_f64(w0) < keep_p;
        if !keep {
            continue;
        }
        let x = z as f64 + jitter * (2.0 * unit_f64(w1) - 1.0);
        if x > a && x < b {
            points.push(x);
        }
    }
    Ok(OmegaSample {
        points,
        window,
    })
}

/// Centers `εω ∩ (ε, L - ε)`.
pub fn restrict_and_scale(omega: &OmegaSample, epsilon: f64, length: f64) -> Vec<f64> {
    omega
        .points
        .iter()
        .map(|x| epsilon * x)
        .filter(|c| *c > epsilon && *c < length - epsilon)
        .collect()
}

/// `♯(ω ∩ [-1/2, 1/2))`.
pub fn n0_count(omega: &OmegaSample) -> Result<usize> {
    n0_count_at(omega, 0)
}

/// `♯(ω ∩ [z - 1/2, z + 1/2))`, i.e. `n0` of the sample shifted by `-z`.
pub fn n0_count_at(omega: &OmegaSample, z: i64) -> Result<usize> {
    let lo = z as f64 - 0.5;
    let hi = z as f64 + 0.5;
    let (a, b) = omega.window;
    if !(a < lo && b >= hi) {
        return Err(Error::WindowTooSmall {
            window: b - a,
            epsilon: 1.0,
        });
    }
    Ok(omega.points.iter().filter(|x| **x >= lo && **x < hi).count())
}

/// `min{1, d_H(ω, ω')}` between two finite samples.
pub fn omega_distance(a: &OmegaSample, b: &OmegaSample) -> f64 {
    match (a.points.is_empty(), b.points.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return 1.0,
        _ => {}
    }
    let directed = |p: &[f64], q: &[f64]| {
        p.iter()
            .map(|x| {
                let k = q.partition_point(|y| y < x);
                let mut d = f64::INFINITY;
                if k < q.len() {
                    d = d.min((q[k] - x).abs());
                }
                if k > 0 {
                    d = d.min((x - q[k - 1]).abs());
                }
                d
            })
            .fold(0.0_f64, f64::max)
    };
    directed(&a.points, &b.points)
        .max(directed(&b.points, &a.points))
        .min(1.0)
}

/// One `(ε, replica)` record of the density study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityRow {
    pub model: String,
    pub epsilon: f64,
    pub replica: u64,
    /// Mean of `n_ε` over `(ε, L - ε)`.
    pub interior_mean: f64,
    /// Analytic conditional expectation for this replica.
    pub target: f64,
    pub abs_err: f64,
    /// Averages of `n_ε` over the non-overlapping interior windows.
    pub window_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityReport {
    pub window: f64,
    pub length: f64,
    pub rows: Vec<DensityRow>,
}

impl DensityReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,epsilon,replica,interior_mean,target,abs_err\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.model, r.epsilon, r.replica, r.interior_mean, r.target, r.abs_err
            );
        }
        s
    }

    /// Rows for one `ε`, in replica order.
    pub fn at_epsilon(&self, eps: f64) -> impl Iterator<Item = &DensityRow> {
        self.rows.iter().filter(move |r| r.epsilon == eps)
    }
}

/// Samples `replicas` realizations per `ε`, builds `n_ε` from the scaled
/// centers and averages it over windows of length `window` tiling the
/// interior `(ε, L - ε)`.
pub fn empirical_density_limit(
    model: &ProcessModel,
    eps_list: &[f64],
    length: f64,
    replicas: usize,
    window: f64,
) -> Result<DensityReport> {
    model.validate()?;
    if replicas == 0 {
        return Err(Error::InvalidParameter("replicas must be at least 1".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("epsilon list must be strictly decreasing".into()));
    }
    let jobs: Vec<(f64, u64)> = eps_list
        .iter()
        .flat_map(|&e| (0..replicas as u64).map(move |r| (e, r)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(eps, replica)| density_row(model, eps, replica, length, window))
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityReport {
        window,
        length,
        rows,
    })
}

fn density_row(
    model: &ProcessModel,
    eps: f64,
    replica: u64,
    length: f64,
    window: f64,
) -> Result<DensityRow> {
    let omega = sample_replica(model, replica, (0.0, length / eps))?;
    let centers = restrict_and_scale(&omega, eps, length);
    let d = model.min_gap;
    // thickness only has to satisfy the disjointness condition; n_ε ignores it
    let thickness = 0.25 * d * eps;
    let ls = build_layers_with_gap(LayerMode::Explicit(centers), eps, thickness, length, 1.0, d)?;
    let n = n_eps_field(&ls);
    // interior cells are those whose centre εi can carry a layer: εi ∈ (ε, L - ε)
    let first = 2.0;
    let last = ((length - eps) / eps - 1e-9).ceil() - 1.0;
    if last < first {
        return Err(Error::InvalidParameter(format!(
            "no interior cells for epsilon {eps} on length {length}"
        )));
    }
    let (lo, hi) = (eps * (first - 0.5), eps * (last + 0.5));
    let interior = hi - lo;
    let interior_mean = n.integral(lo, hi) / interior;
    let count = (interior / window + 1e-9).floor() as usize;
    let mids: Vec<f64> = (0..count)
        .map(|k| lo + (k as f64 + 0.5) * window)
        .collect();
    let window_means = coarse_average(&n, window, eps, &mids)?;
    let target = model.conditional_n0(replica);
    Ok(DensityRow {
        model: model.name(),
        epsilon: eps,
        replica,
        interior_mean,
        target,
        abs_err: (interior_mean - target).abs(),
        window_means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bern(p: f64, seed: u64) -> ProcessModel {
        ProcessModel {
            kind: ProcessKind::BernoulliLattice { p },
            min_gap: 1.0,
            seed,
        }
    }

    #[test]
    fn full_and_empty_lattices() {
        let s = sample_process(&bern(1.0, 3), (0.0, 10.0)).unwrap();
        assert_eq!(s.points, (1..=9).map(|z| z as f64).collect::<Vec<_>>());
        let s = sample_process(&bern(0.0, 3), (0.0, 10.0)).unwrap();
        assert!(s.points.is_empty());
    }

    #[test]
    fn seeded_samples_reproduce() {
        let m = bern(0.5, 42);
        let a = sample_process(&m, (0.0, 10_000.0)).unwrap();
        let b = sample_process(&m, (0.0, 10_000.0)).unwrap();
        assert_eq!(a, b);
        let n = 9_999.0;
        let density = a.points.len() as f64 / n;
        assert!((density - 0.5).abs() <= 3.0 * (0.25f64 / n).sqrt(), "{density}");
        let other = sample_process(&bern(0.5, 43), (0.0, 10_000.0)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn sites_do_not_depend_on_window() {
        let m = bern(0.5, 9);
        let a = sample_process(&m, (0.0, 100.0)).unwrap();
        let b = sample_process(&m, (40.0, 140.0)).unwrap();
        let overlap_a: Vec<f64> = a.points.iter().copied().filter(|x| *x > 40.0).collect();
        let overlap_b: Vec<f64> = b.points.iter().copied().filter(|x| *x < 100.0).collect();
        assert_eq!(overlap_a, overlap_b);
    }

    #[test]
    fn bad_params_rejected() {
        assert!(matches!(
            sample_process(&bern(1.5, 0), (0.0, 1.0)),
            Err(Error::BadModelParams(_))
        ));
        let m = ProcessModel {
            kind: ProcessKind::ShiftedLattice { jitter: 0.3 },
            min_gap: 0.6,
            seed: 0,
        };
        assert!(matches!(m.validate(), Err(Error::BadModelParams(_))));
    }

    #[test]
    fn restrict_examples() {
        let ints = OmegaSample {
            points: (-10..=10).map(|z| z as f64).collect(),
            window: (-10.5, 10.5),
        };
        assert_eq!(restrict_and_scale(&ints, 0.25, 1.0), vec![0.5]);
        let empty = OmegaSample {
            points: vec![],
            window: (0.0, 1.0),
        };
        assert!(restrict_and_scale(&empty, 0.1, 1.0).is_empty());
        let two = OmegaSample {
            points: vec![2.0, 3.0],
            window: (0.0, 10.0),
        };
        let c = restrict_and_scale(&two, 0.1, 1.0);
        assert!((c[0] - 0.2).abs() < 1e-15 && (c[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn n0_examples() {
        let s = |pts: Vec<f64>| OmegaSample {
            points: pts,
            window: (-2.0, 2.0),
        };
        assert_eq!(n0_count(&s(vec![0.0])).unwrap(), 1);
        assert_eq!(n0_count(&s(vec![-0.5, 0.49])).unwrap(), 2);
        assert_eq!(n0_count(&s(vec![0.5])).unwrap(), 0);
        let narrow = OmegaSample {
            points: vec![],
            window: (-0.2, 0.2),
        };
        assert!(matches!(n0_count(&narrow), Err(Error::WindowTooSmall { .. })));
    }

    #[test]
    fn distance_examples() {
        let s = |pts: Vec<f64>| OmegaSample {
            points: pts,
            window: (-10.0, 10.0),
        };
        assert_eq!(omega_distance(&s(vec![0.0, 2.0]), &s(vec![0.0, 2.0])), 0.0);
        assert!((omega_distance(&s(vec![0.0]), &s(vec![0.3])) - 0.3).abs() < 1e-15);
        assert_eq!(omega_distance(&s(vec![0.0]), &s(vec![5.0])), 1.0);
        assert_eq!(omega_distance(&s(vec![]), &s(vec![5.0])), 1.0);
        assert_eq!(omega_distance(&s(vec![]), &s(vec![])), 0.0);
    }

    #[test]
    fn n0_mean_converges_to_p() {
        let p = 0.3;
        let m = bern(p, 11);
        let n = 4000;
        let total: usize = (0..n)
            .map(|r| n0_count(&sample_replica(&m, r, (-1.0, 1.0)).unwrap()).unwrap())
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - p).abs() <= 4.0 * (p * (1.0 - p) / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn n0_law_is_shift_invariant() {
        // chi-square comparison of the n0 histogram at shift 0 and shift 7
        let m = ProcessModel {
            kind: ProcessKind::Mixture {
                p1: 0.2,
                p2: 0.7,
                mix_weight: 0.4,
            },
            min_gap: 1.0,
            seed: 5,
        };
        let n = 3000u64;
        let mut counts = [[0.0f64; 2]; 2];
        for r in 0..n {
            let s = sample_replica(&m, r, (-1.0, 9.0)).unwrap();
            counts[0][n0_count_at(&s, 0).unwrap()] += 1.0;
            counts[1][n0_count_at(&s, 7).unwrap()] += 1.0;
        }
        let mut chi2 = 0.0;
        for k in 0..2 {
            let pooled = 0.5 * (counts[0][k] + counts[1][k]);
            for row in counts {
                chi2 += (row[k] - pooled).powi(2) / pooled;
            }
        }
        // 1 degree of freedom, 99.9% quantile
        assert!(chi2 < 10.83, "chi2 = {chi2}");
    }

    #[test]
    fn hard_core_constraint_holds_for_many_samples() {
        let models = [
            bern(0.5, 1),
            ProcessModel {
                kind: ProcessKind::ShiftedLattice { jitter: 0.2 },
                min_gap: 0.6,
                seed: 2,
            },
            ProcessModel {
                kind: ProcessKind::Mixture {
                    p1: 0.1,
                    p2: 0.9,
                    mix_weight: 0.5,
                },
                min_gap: 1.0,
                seed: 3,
            },
        ];
        for m in models {
            for r in 0..10_000u64 / 3 {
                let s = sample_replica(&m, r, (-3.0, 3.0)).unwrap();
                for w in s.points.windows(2) {
                    assert!(w[1] - w[0] >= m.min_gap - 1e-12);
                }
            }
        }
    }

    #[test]
    fn density_limit_examples() {
        let rep = empirical_density_limit(&bern(1.0, 0), &[1.0 / 16.0], 1.0, 1, 0.25).unwrap();
        assert_eq!(rep.rows[0].interior_mean, 1.0);
        let eps = 1.0 / 64.0;
        let rep = empirical_density_limit(&bern(0.5, 8), &[eps], 1.0, 1, 0.5).unwrap();
        let row = &rep.rows[0];
        let bound = 3.0 * (0.25 * eps / (1.0 - 2.0 * eps)).sqrt();
        assert!(row.abs_err <= bound, "{} > {bound}", row.abs_err);
        assert!(rep.to_csv().starts_with("model,epsilon,replica,interior_mean,target,abs_err\n"));
    }

    #[test]
    fn mixture_replicas_follow_components() {
        let m = ProcessModel {
            kind: ProcessKind::Mixture {
                p1: 0.2,
                p2: 0.8,
                mix_weight: 0.5,
            },
            min_gap: 1.0,
            seed: 17,
        };
        let rep = empirical_density_limit(&m, &[1.0 / 256.0], 4.0, 16, 1.0).unwrap();
        let mut seen = [false; 2];
        for row in &rep.rows {
            assert!(row.target == 0.2 || row.target == 0.8);
            seen[(row.target > 0.5) as usize] = true;
            assert!(row.abs_err < 0.1 && (row.interior_mean - 0.5).abs() > 0.2);
        }
        assert!(seen[0] && seen[1]);
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(
            a in proptest::collection::vec(-5.0f64..5.0, 0..5),
            b in proptest::collection::vec(-5.0f64..5.0, 0..5),
            c in proptest::collection::vec(-5.0f64..5.0, 0..5),
        ) {
            let mk = |mut v: Vec<f64>| {
                v.sort_by(|x, y| x.partial_cmp(y).unwrap());
                OmegaSample { points: v, window: (-6.0, 6.0) }
            };
            let (a, b, c) = (mk(a), mk(b), mk(c));
            let ab = omega_distance(&a, &b);
            prop_assert!((ab - omega_distance(&b, &a)).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!(ab <= omega_distance(&a, &c) + omega_distance(&c, &b) + 1e-12);
        }
    }
}
