//! Exact posterior over parent-set configurations of one column, by brute
//! force enumeration. Used to validate the sampler on small instances and to
//! check the conditional-posterior inequality for nested true supports.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::likelihood::{log_marginal_parts, residual};
use crate::model::{Dataset, ParentSet, SupportColumn};
use crate::priors::{log_joint_support_prior, log_mrf, log_support_prior, Hyperparameters, PriorScaling};
use crate::sampler::{ColumnRun, Mode, Sampler};

/// Largest number of configurations the oracle will enumerate per column.
pub const MAX_CONFIGURATIONS: u128 = 1 << 20;

/// Normalized posterior of one column.
#[derive(Debug, Clone)]
pub struct ExactColumnPosterior {
    pub j: usize,
    pub mode: Mode,
    pub k: usize,
    /// Per configuration: one bit mask per group (bit `l` = parent `l`).
    pub configs: Vec<Vec<u32>>,
    pub probs: Vec<f64>,
    /// `[k][l]` marginal inclusion probabilities.
    pub inclusion: Vec<Vec<f64>>,
}

pub fn mask_to_set(mask: u32) -> ParentSet {
    (0..32).filter(|l| mask >> l & 1 == 1).collect()
}

pub fn set_to_mask(set: &[usize]) -> u32 {
    set.iter().fold(0, |m, &l| m | 1 << l)
}

fn check_bound(bits: usize) -> Result<()> {
    let configurations = if bits >= 127 { u128::MAX } else { 1u128 << bits };
    if configurations > MAX_CONFIGURATIONS {
        return Err(Error::EnumerationBound { configurations, bound: MAX_CONFIGURATIONS });
    }
    Ok(())
}

/// Normalize log-scores into probabilities (max subtracted before exponentiating).
pub fn normalize_log_scores(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![0.0; scores.len()];
    }
    let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// `ln f_α(X_k | S)` for every mask of column `j`.
fn marginal_table(data: &Dataset, k: usize, j: usize, hp: &Hyperparameters) -> Vec<f64> {
    let group = data.group(k);
    (0u32..1 << j)
        .map(|mask| {
            let set = mask_to_set(mask);
            let res = residual(group, j, &set);
            log_marginal_parts(set.len(), res.hat_d, group.n(), res.full_rank, hp)
        })
        .collect()
}

impl ExactColumnPosterior {
    pub fn probability(&self, sets: &[ParentSet]) -> f64 {
        let masks: Vec<u32> = sets.iter().map(|s| set_to_mask(s)).collect();
        self.configs
            .iter()
            .position(|c| *c == masks)
            .map(|i| self.probs[i])
            .unwrap_or(0.0)
    }

    pub fn as_map(&self) -> HashMap<Vec<ParentSet>, f64> {
        self.configs
            .iter()
            .zip(&self.probs)
            .map(|(c, &p)| (c.iter().map(|&m| mask_to_set(m)).collect(), p))
            .collect()
    }

    /// Total variation distance to the empirical distribution of `visits`.
    pub fn total_variation(&self, visits: &HashMap<Vec<ParentSet>, u64>) -> f64 {
        let total: u64 = visits.values().sum();
        let exact = self.as_map();
        let mut tv = 0.0;
        for (config, &p) in &exact {
            let q = visits.get(config).copied().unwrap_or(0) as f64 / total as f64;
            tv += (p - q).abs();
        }
        for (config, &count) in visits {
            if !exact.contains_key(config) {
                tv += count as f64 / total as f64;
            }
        }
        tv / 2.0
    }
}

/// Exact posterior of column `j` (0-based) under `mode`.
///
/// Joint and separate modes range over all `K`-tuples of parent sets; the
/// common modes range over a single shared set, reported as `K` equal masks.
pub fn enumerate_column_posterior(
    data: &Dataset,
    j: usize,
    hp: &Hyperparameters,
    mode: Mode,
) -> Result<ExactColumnPosterior> {
    hp.validate(data.p())?;
    if j == 0 || j >= data.p() {
        return Err(Error::Config(format!("column {} has no parent sets to enumerate", j + 1)));
    }
    let k_groups = data.k();
    let bits = if mode.is_common() { j } else { j * k_groups };
    check_bound(bits)?;
    let marginals: Vec<Vec<f64>> = (0..k_groups).map(|k| marginal_table(data, k, j, hp)).collect();
    let prior_hp = if mode == Mode::Separate { hp.without_coupling() } else { hp.clone() };
    let scaling = if mode == Mode::CommonModified { PriorScaling::Modified } else { PriorScaling::Joint };
    let low_mask = (1u64 << j) - 1;

    let mut configs = Vec::with_capacity(1 << bits);
    let mut scores = Vec::with_capacity(1 << bits);
    for index in 0u64..1 << bits {
        let masks: Vec<u32> = if mode.is_common() {
            vec![index as u32; k_groups]
        } else {
            (0..k_groups).map(|k| ((index >> (k * j)) & low_mask) as u32).collect()
        };
        let col = SupportColumn { j, sets: masks.iter().map(|&m| mask_to_set(m)).collect() };
        let lik: f64 = masks.iter().enumerate().map(|(k, &m)| marginals[k][m as usize]).sum();
        let prior = log_joint_support_prior(&col, &prior_hp, scaling);
        scores.push(if prior == f64::NEG_INFINITY { f64::NEG_INFINITY } else { lik + prior });
        configs.push(masks);
    }
    let probs = normalize_log_scores(&scores);
    let mut inclusion = vec![vec![0.0; j]; k_groups];
    for (masks, &p) in configs.iter().zip(&probs) {
        for (k, &m) in masks.iter().enumerate() {
            for (l, slot) in inclusion[k].iter_mut().enumerate() {
                if m >> l & 1 == 1 {
                    *slot += p;
                }
            }
        }
    }
    let table = ExactColumnPosterior { j, mode, k: k_groups, configs, probs, inclusion };
    if mode == Mode::Separate {
        let singles: Vec<Vec<f64>> =
            (0..k_groups).map(|k| independence_posterior(&marginals[k], j, hp)).collect();
        for (masks, &p) in table.configs.iter().zip(&table.probs) {
            let product: f64 = masks.iter().enumerate().map(|(k, &m)| singles[k][m as usize]).product();
            assert!((product - p).abs() <= 1e-12, "separate posterior does not factorize");
        }
    }
    Ok(table)
}

/// `π^I(S | X_k) ∝ f_α(X_k | S) π(S)` over every mask of column `j`.
fn independence_posterior(marginals: &[f64], j: usize, hp: &Hyperparameters) -> Vec<f64> {
    let scores: Vec<f64> = marginals
        .iter()
        .enumerate()
        .map(|(m, &lik)| lik + log_support_prior(&mask_to_set(m as u32), j, hp))
        .collect();
    normalize_log_scores(&scores)
}

/// Outcome of the conditional-posterior comparison for one column and group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceCheck {
    /// Joint conditional posterior of the true set given the other groups' true sets.
    pub lhs: f64,
    /// Independence posterior of the true set from the group's own data.
    pub rhs: f64,
    pub holds: bool,
}

/// When the other groups' true parent sets are all contained in group `k`'s,
/// conditioning on them cannot lower the posterior of group `k`'s true set
/// below its independence posterior.
pub fn check_conditional_dominance(
    data: &Dataset,
    j: usize,
    true_supports: &[ParentSet],
    k: usize,
    hp: &Hyperparameters,
) -> Result<DominanceCheck> {
    hp.validate(data.p())?;
    if true_supports.len() != data.k() || k >= data.k() {
        return Err(Error::ShapeMismatch(format!(
            "{} true supports for {} groups (designated group {k})",
            true_supports.len(),
            data.k()
        )));
    }
    if j == 0 || j >= data.p() {
        return Err(Error::Config(format!("column {} has no parent sets", j + 1)));
    }
    let col = SupportColumn::new(j, true_supports.to_vec())?;
    check_bound(j)?;
    let own = &col.sets[k];
    let nested = col
        .sets
        .iter()
        .enumerate()
        .filter(|&(g, _)| g != k)
        .all(|(_, s)| s.iter().all(|l| own.binary_search(l).is_ok()));
    if !nested {
        return Err(Error::NestingViolated);
    }
    let marginals = marginal_table(data, k, j, hp);
    let truth = set_to_mask(own) as usize;
    let rhs = independence_posterior(&marginals, j, hp)[truth];
    let conditional: Vec<f64> = marginals
        .iter()
        .enumerate()
        .map(|(m, &lik)| {
            let mut candidate = col.clone();
            candidate.sets[k] = mask_to_set(m as u32);
            // the other groups' size priors are constant in this conditional
            lik + log_support_prior(&candidate.sets[k], j, hp) + log_mrf(&candidate, hp)
        })
        .collect();
    let lhs = normalize_log_scores(&conditional)[truth];
    Ok(DominanceCheck { lhs, rhs, holds: lhs >= rhs - 1e-12 })
}

/// Random true supports for column `j` in which every group's set is
/// contained in group `k`'s set.
pub fn random_nested_supports<R: Rng + ?Sized>(j: usize, groups: usize, k: usize, rng: &mut R) -> Vec<ParentSet> {
    let own: ParentSet = (0..j).filter(|_| rng.gen_bool(0.5)).collect();
    (0..groups)
        .map(|g| if g == k { own.clone() } else { own.iter().copied().filter(|_| rng.gen_bool(0.5)).collect() })
        .collect()
}

/// Per-column agreement between a chain and the exact posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnValidation {
    pub j: usize,
    pub mode: Mode,
    pub total_variation: f64,
}

/// Run the sampler with configuration recording on every column and compare
/// each column's visit frequencies with the exact posterior.
pub fn validate_sampler(data: &Dataset, hp: &Hyperparameters, mode: Mode) -> Result<Vec<ColumnValidation>> {
    // fail fast on the size bound before any sampling
    for j in 1..data.p() {
        check_bound(if mode.is_common() { j } else { j * data.k() })?;
    }
    let sampler = Sampler::new(data, hp, mode)?.record_visits(true);
    let runs: Vec<ColumnRun> = sampler.run_columns();
    runs.iter()
        .map(|run| {
            let table = enumerate_column_posterior(data, run.j, hp, mode)?;
            Ok(ColumnValidation { j: run.j, mode, total_variation: table.total_variation(&run.visits) })
        })
        .collect()
}
