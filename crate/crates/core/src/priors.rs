//! Support-size prior and cross-group Markov random field coupling, plus the
//! hyperparameter set with its default schedules.
//!
//! All log-priors are unnormalized; the sampler and the oracle only ever
//! consume differences or normalize explicitly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, SupportColumn};

/// Hyperparameters of the joint prior and the sampler.
///
/// `c2` and `Rj` are indexed by 0-based column; entry 0 belongs to the
/// first variable, which has no candidate parents, and is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub alpha: f64,
    pub gamma: f64,
    pub nu0: f64,
    pub c1: f64,
    pub c2: Vec<f64>,
    #[serde(rename = "Rj")]
    pub rj: Vec<usize>,
    pub iterations: usize,
    pub burn_in: usize,
    pub d_floor: f64,
    pub seed: u64,
}

/// Which per-column MRF strength to use when building defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum C2Schedule {
    /// `1 / (p (K - 1))` for every column.
    #[default]
    Constant,
    /// The largest value admitted by the theory, `1 / (number of candidate parents)`.
    ParentBound,
}

pub const DEFAULT_ALPHA: f64 = 0.999;
pub const DEFAULT_GAMMA: f64 = 0.1;
pub const DEFAULT_NU0: f64 = 0.0;
pub const DEFAULT_C1: f64 = 2.0;
pub const DEFAULT_ITERATIONS: usize = 5000;
pub const DEFAULT_BURN_IN: usize = 1000;
pub const DEFAULT_D_FLOOR: f64 = 1e-12;

impl Hyperparameters {
    pub fn p(&self) -> usize {
        self.rj.len()
    }

    pub fn c2_for(&self, j: usize) -> f64 {
        self.c2[j]
    }

    /// Effective cap on the number of parents of column `j`.
    pub fn cap_for(&self, j: usize) -> usize {
        self.rj[j].min(j)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return fail(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.nu0 >= 0.0 && self.nu0.is_finite()) {
            return fail(format!("nu0 must be non-negative, got {}", self.nu0));
        }
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            return fail(format!("c1 must be positive, got {}", self.c1));
        }
        if !(self.d_floor > 0.0 && self.d_floor.is_finite()) {
            return fail(format!("d_floor must be positive, got {}", self.d_floor));
        }
        if self.c2.len() != p || self.rj.len() != p {
            return fail(format!(
                "c2 and Rj must have one entry per column ({p}), got {} and {}",
                self.c2.len(),
                self.rj.len()
            ));
        }
        if let Some(bad) = self.c2.iter().find(|c| !(**c >= 0.0 && c.is_finite())) {
            return fail(format!("c2 entries must be finite and non-negative, got {bad}"));
        }
        for j in 1..p {
            if self.rj[j] < 1 || self.rj[j] > j {
                return fail(format!("Rj for column {} must lie in [1, {j}], got {}", j + 1, self.rj[j]));
            }
        }
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return fail(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        Ok(())
    }

    /// Copy with the MRF switched off.
    pub fn without_coupling(&self) -> Self {
        Self { c2: vec![0.0; self.c2.len()], ..self.clone() }
    }
}

/// Default hyperparameters for a dataset, natural logarithms throughout.
pub fn default_hyperparameters(data: &Dataset) -> Hyperparameters {
    default_hyperparameters_with(data, C2Schedule::Constant)
}

pub fn default_hyperparameters_with(data: &Dataset, schedule: C2Schedule) -> Hyperparameters {
    let p = data.p();
    let k = data.k();
    let c2 = (0..p)
        .map(|j| {
            if k < 2 || j == 0 {
                0.0
            } else {
                match schedule {
                    C2Schedule::Constant => 1.0 / (p as f64 * (k - 1) as f64),
                    C2Schedule::ParentBound => 1.0 / j as f64,
                }
            }
        })
        .collect::<Vec<_>>();
    // the theory admits c2 up to 1 / (number of candidate parents)
    for (j, &c) in c2.iter().enumerate().skip(1) {
        assert!(c <= 1.0 / j as f64, "default c2 for column {} exceeds 1/{j}", j + 1);
    }
    let r = default_parent_cap(data.min_n(), data.total_n(), p);
    let rj = (0..p).map(|j| if j == 0 { 0 } else { r.min(j) }).collect();
    Hyperparameters {
        alpha: DEFAULT_ALPHA,
        gamma: DEFAULT_GAMMA,
        nu0: DEFAULT_NU0,
        c1: DEFAULT_C1,
        c2,
        rj,
        iterations: DEFAULT_ITERATIONS,
        burn_in: DEFAULT_BURN_IN,
        d_floor: DEFAULT_D_FLOOR,
        seed: 0,
    }
}

/// `max(1, ⌊min_k n_k / (ln p · ln n)⌋)`, before the per-column `j - 1` cap.
pub fn default_parent_cap(min_n: usize, total_n: usize, p: usize) -> usize {
    let denom = (p as f64).ln() * (total_n as f64).ln();
    let raw = (min_n as f64 / denom).floor();
    if raw.is_finite() && raw >= 1.0 {
        raw as usize
    } else if raw.is_infinite() && raw > 0.0 {
        usize::MAX
    } else {
        1
    }
}

/// `ln C(n, s)`.
pub fn ln_binomial(n: usize, s: usize) -> f64 {
    if s > n {
        return f64::NEG_INFINITY;
    }
    let s = s.min(n - s);
    (0..s).map(|i| ((n - i) as f64 / (i + 1) as f64).ln()).sum()
}

/// Size prior of one parent set: `-ln C(j, |S|) - c1 |S| ln p` when
/// `|S| <= Rj`, `-∞` otherwise (`j` is the 0-based column, so it also counts
/// the candidate parents).
pub fn log_support_prior(set: &[usize], j: usize, hp: &Hyperparameters) -> f64 {
    log_support_prior_size(set.len(), j, hp)
}

pub(crate) fn log_support_prior_size(size: usize, j: usize, hp: &Hyperparameters) -> f64 {
    if size > hp.cap_for(j) {
        return f64::NEG_INFINITY;
    }
    -ln_binomial(j, size) - hp.c1 * size as f64 * (hp.p() as f64).ln()
}

/// `2 c2 Σ_l Σ_{k<k'} 1{l ∈ S_k ∩ S_k'}`.
pub fn log_mrf(col: &SupportColumn, hp: &Hyperparameters) -> f64 {
    let c2 = hp.c2_for(col.j);
    if c2 == 0.0 || col.k() < 2 {
        return 0.0;
    }
    let mut counts = vec![0usize; col.j];
    for set in &col.sets {
        for &l in set {
            counts[l] += 1;
        }
    }
    let pairs: usize = counts.iter().map(|&m| m * m.saturating_sub(1) / 2).sum();
    2.0 * c2 * pairs as f64
}

/// How the per-group priors and the MRF combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorScaling {
    /// `f · Π π(S_k)`.
    Joint,
    /// The same product raised to the power `1/K`.
    Modified,
}

pub fn log_joint_support_prior(col: &SupportColumn, hp: &Hyperparameters, scaling: PriorScaling) -> f64 {
    let total = log_mrf(col, hp) + col.sets.iter().map(|s| log_support_prior(s, col.j, hp)).sum::<f64>();
    match scaling {
        PriorScaling::Joint => total,
        PriorScaling::Modified => total / col.k() as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GroupData;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn dataset(p: usize, k: usize, n: usize) -> Dataset {
        let groups = (0..k)
            .map(|g| GroupData::new(format!("g{g}"), DMatrix::zeros(n, p)).unwrap())
            .collect();
        Dataset::new(groups).unwrap()
    }

    fn hp(p: usize, c2: f64, cap: usize) -> Hyperparameters {
        let mut h = default_hyperparameters(&dataset(p, 2, 50));
        h.c2 = vec![c2; p];
        h.rj = (0..p).map(|j| cap.min(j)).collect();
        h
    }

    #[test]
    fn defaults_for_simulation_scale() {
        let h = default_hyperparameters(&dataset(150, 3, 100));
        assert_eq!(h.alpha, 0.999);
        assert_eq!(h.gamma, 0.1);
        assert_eq!(h.nu0, 0.0);
        assert_eq!(h.c1, 2.0);
        assert_eq!((h.iterations, h.burn_in), (5000, 1000));
        assert!(h.c2[1..].iter().all(|&c| c == 1.0 / 300.0));
        // 100 / (ln 150 · ln 300) = 3.50...
        assert_eq!(h.rj[149], 3);
        assert_eq!(h.rj[1], 1);
        assert_eq!(h.rj[2], 2);
        assert_eq!(h.rj[3], 3);
        h.validate(150).unwrap();
    }

    #[test]
    fn single_group_has_no_coupling() {
        let h = default_hyperparameters(&dataset(10, 1, 100));
        assert!(h.c2.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn two_variables_cap_at_one() {
        let h = default_hyperparameters(&dataset(2, 2, 5));
        assert_eq!(h.rj[1], 1);
    }

    #[test]
    fn parent_bound_schedule() {
        let h = default_hyperparameters_with(&dataset(6, 3, 40), C2Schedule::ParentBound);
        assert_eq!(h.c2[4], 0.25);
        h.validate(6).unwrap();
    }

    #[test]
    fn validation_errors() {
        let good = hp(5, 0.1, 3);
        good.validate(5).unwrap();
        let mut bad = good.clone();
        bad.alpha = 1.0;
        assert!(bad.validate(5).is_err());
        let mut bad = good.clone();
        bad.burn_in = bad.iterations;
        assert!(bad.validate(5).is_err());
        let mut bad = good.clone();
        bad.rj[2] = 3;
        assert!(bad.validate(5).is_err());
        assert!(good.validate(6).is_err());
    }

    #[test]
    fn json_field_names() {
        let h = hp(3, 0.1, 2);
        let json = serde_json::to_value(&h).unwrap();
        let mut keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["Rj", "alpha", "burn_in", "c1", "c2", "d_floor", "gamma", "iterations", "nu0", "seed"]
        );
        let back: Hyperparameters = serde_json::from_value(json).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn support_prior_values() {
        let h = hp(10, 0.0, 3);
        assert_eq!(log_support_prior(&[], 4, &h), 0.0);
        // column 5 (four candidate parents), two of them chosen
        assert_relative_eq!(
            log_support_prior(&[0, 2], 4, &h),
            -(6.0_f64).ln() - 4.0 * (10.0_f64).ln(),
            epsilon = 1e-12
        );
        assert_eq!(log_support_prior(&[0, 1, 2, 3], 4, &h), f64::NEG_INFINITY);
    }

    #[test]
    fn mrf_values() {
        let h = hp(6, 0.05, 5);
        assert_eq!(log_mrf(&SupportColumn::empty(4, 3), &h), 0.0);
        let shared = SupportColumn::new(4, vec![vec![1], vec![1, 3]]).unwrap();
        assert_relative_eq!(log_mrf(&shared, &h), 0.1);
        let disjoint = SupportColumn::new(4, vec![vec![0], vec![1], vec![2, 3]]).unwrap();
        assert_eq!(log_mrf(&disjoint, &h), 0.0);
        assert_eq!(log_mrf(&shared, &h.without_coupling()), 0.0);
    }

    #[test]
    fn joint_prior_reductions() {
        let h = hp(6, 0.05, 5);
        let single = SupportColumn::new(4, vec![vec![0, 3]]).unwrap();
        assert_eq!(
            log_joint_support_prior(&single, &h, PriorScaling::Joint),
            log_support_prior(&[0, 3], 4, &h)
        );
        let same = SupportColumn::new(4, vec![vec![0, 3]; 3]).unwrap();
        let modified = log_joint_support_prior(&same, &h, PriorScaling::Modified);
        assert_relative_eq!(
            modified,
            log_mrf(&same, &h) / 3.0 + log_support_prior(&[0, 3], 4, &h),
            epsilon = 1e-12
        );
        let mixed = SupportColumn::new(4, vec![vec![0], vec![], vec![1, 2]]).unwrap();
        let direct = log_mrf(&mixed, &h)
            + log_support_prior(&[0], 4, &h)
            + log_support_prior(&[], 4, &h)
            + log_support_prior(&[1, 2], 4, &h);
        assert_eq!(log_joint_support_prior(&mixed, &h, PriorScaling::Joint), direct);
    }

    fn quadratic_form_mrf(col: &SupportColumn, c2: f64) -> f64 {
        // c2 Σ_l s̃ᵀ (11ᵀ - I) s̃ with s̃ the K-vector of indicators
        let k = col.k();
        let mut total = 0.0;
        for l in 0..col.j {
            let s: Vec<f64> = col
                .sets
                .iter()
                .map(|set| if set.contains(&l) { 1.0 } else { 0.0 })
                .collect();
            for a in 0..k {
                for b in 0..k {
                    if a != b {
                        total += s[a] * s[b];
                    }
                }
            }
        }
        c2 * total
    }

    fn arb_column() -> impl Strategy<Value = SupportColumn> {
        (1usize..7, 1usize..5).prop_flat_map(|(j, k)| {
            proptest::collection::vec(proptest::collection::vec(any::<bool>(), j), k).prop_map(move |masks| {
                let sets = masks
                    .iter()
                    .map(|m| m.iter().enumerate().filter(|(_, &b)| b).map(|(l, _)| l).collect())
                    .collect();
                SupportColumn::new(j, sets).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn mrf_equals_quadratic_form(col in arb_column()) {
            let h = hp(8, 0.07, 7);
            prop_assert!((log_mrf(&col, &h) - quadratic_form_mrf(&col, 0.07)).abs() < 1e-12);
        }

        #[test]
        fn mrf_group_permutation_invariant(col in arb_column(), shift in 0usize..5) {
            let h = hp(8, 0.07, 7);
            let mut rotated = col.clone();
            let k = rotated.sets.len();
            rotated.sets.rotate_left(shift % k);
            rotated.sets.reverse();
            prop_assert_eq!(log_mrf(&col, &h), log_mrf(&rotated, &h));
        }

        #[test]
        fn adding_a_shared_edge_never_decreases_mrf(col in arb_column(), g in 0usize..5, l in 0usize..7) {
            let h = hp(8, 0.07, 7);
            let g = g % col.k();
            let l = l % col.j;
            if !col.sets[g].contains(&l) {
                let before = log_mrf(&col, &h);
                let others = col.multiplicity(l);
                let mut grown = col.clone();
                grown.sets[g].push(l);
                grown.sets[g].sort_unstable();
                let after = log_mrf(&grown, &h);
                prop_assert!(after >= before);
                prop_assert!((after - before - 2.0 * 0.07 * others as f64).abs() < 1e-12);
            }
        }
    }
}
