//! Metropolis-Hastings-within-Gibbs over parent sets, one independent chain
//! per column.
//!
//! Every column `j` owns one ChaCha8 stream per group: seeded with
//! `hp.seed` and stream id `(j << 32) | group_stream`, where `group_stream`
//! defaults to the group index. Common-support modes update one shared set
//! and use the first group's stream. Because the streams depend only on
//! `(seed, j, group_stream)`, columns can run in any order or concurrently.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{column_fit, log_marginal_parts, residual, sample_coefficients, sample_variance};
use crate::model::{CholeskyPair, Dataset, ParentSet, SupportColumn, SupportGraph};
use crate::priors::{log_joint_support_prior, log_support_prior_size, Hyperparameters, PriorScaling};

/// Iterations between from-scratch checks of the cached marginals in debug builds.
const DEBUG_RECHECK_EVERY: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Per-group parent sets coupled through the MRF prior.
    Joint,
    /// Per-group parent sets, no coupling.
    Separate,
    /// One parent set shared by every group, joint prior.
    Common,
    /// One shared parent set, prior raised to the power `1/K`.
    CommonModified,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Joint, Mode::Separate, Mode::Common, Mode::CommonModified];

    pub fn is_common(self) -> bool {
        matches!(self, Mode::Common | Mode::CommonModified)
    }

    fn scaling(self) -> PriorScaling {
        match self {
            Mode::CommonModified => PriorScaling::Modified,
            _ => PriorScaling::Joint,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Joint => "joint",
            Mode::Separate => "separate",
            Mode::Common => "common",
            Mode::CommonModified => "common-modified",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

/// A single-flip move and its Hastings correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub set: ParentSet,
    /// The coordinate that changed.
    pub flipped: usize,
    pub added: bool,
    /// `ln q(S | S_new) - ln q(S_new | S)`.
    pub log_q_ratio: f64,
}

/// `ln q` of one particular add (or remove) move out of a set of size `size`.
pub fn log_move_probability(size: usize, adding: bool, j: usize, cap: usize) -> f64 {
    let (choices, boundary) = if adding {
        (j - size, size == 0)
    } else {
        (size, size == cap)
    };
    let type_prob: f64 = if boundary { 1.0 } else { 0.5 };
    type_prob.ln() - (choices as f64).ln()
}

/// Flip one coordinate of `set`: with probability ½ add a uniformly chosen
/// absent parent, otherwise remove a uniformly chosen present one. Empty sets
/// can only grow and sets at the cap `min(Rj, j)` can only shrink.
pub fn propose<R: Rng + ?Sized>(set: &[usize], j: usize, cap: usize, rng: &mut R) -> Proposal {
    assert!(j >= 1 && cap >= 1, "column {j} has no candidate parents");
    let cap = cap.min(j);
    let size = set.len();
    debug_assert!(size <= cap);
    let adding = if size == 0 {
        true
    } else if size >= cap {
        false
    } else {
        rng.gen::<f64>() < 0.5
    };
    let mut new_set = set.to_vec();
    let flipped = if adding {
        let mut r = rng.gen_range(0..j - size);
        let mut chosen = 0;
        for l in 0..j {
            if set.binary_search(&l).is_err() {
                if r == 0 {
                    chosen = l;
                    break;
                }
                r -= 1;
            }
        }
        let pos = new_set.binary_search(&chosen).unwrap_err();
        new_set.insert(pos, chosen);
        chosen
    } else {
        let idx = rng.gen_range(0..size);
        new_set.remove(idx)
    };
    let forward = log_move_probability(size, adding, j, cap);
    let backward = log_move_probability(new_set.len(), !adding, j, cap);
    Proposal { set: new_set, flipped, added: adding, log_q_ratio: backward - forward }
}

/// Output of one column's chain.
#[derive(Debug, Clone)]
pub struct ColumnRun {
    pub j: usize,
    /// `[k][l]`: retained iterations with `l` in group `k`'s parent set.
    pub inclusion_counts: Vec<Vec<u64>>,
    pub accepted: Vec<u64>,
    pub proposed: Vec<u64>,
    /// Unnormalized log posterior of the column after every iteration.
    pub trace: Vec<f64>,
    /// Log acceptance ratio of every proposal, when recorded.
    pub steps: Vec<f64>,
    /// Retained-iteration counts per configuration, when recorded.
    pub visits: HashMap<Vec<ParentSet>, u64>,
    pub final_state: SupportColumn,
}

/// Chain output aggregated over columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub mode: Mode,
    pub retained: usize,
    /// Per-group `p × p` marginal inclusion probabilities, entry `(j, l)`.
    pub inclusion: Vec<DMatrix<f64>>,
    /// Edges with inclusion probability strictly above ½.
    pub selected: SupportGraph,
    /// `[k][j]` acceptance rates; column 0 is never updated and reports 0.
    pub acceptance: Vec<Vec<f64>>,
    /// Unnormalized log posterior summed over columns, one entry per iteration.
    pub trace: Vec<f64>,
}

/// Builder around one dataset and hyperparameter set.
pub struct Sampler<'a> {
    data: &'a Dataset,
    hp: &'a Hyperparameters,
    mode: Mode,
    group_streams: Vec<u64>,
    record_steps: bool,
    record_visits: bool,
}

impl<'a> Sampler<'a> {
    pub fn new(data: &'a Dataset, hp: &'a Hyperparameters, mode: Mode) -> Result<Self> {
        hp.validate(data.p())?;
        Ok(Self {
            data,
            hp,
            mode,
            group_streams: (0..data.k() as u64).collect(),
            record_steps: false,
            record_visits: false,
        })
    }

    /// Override the RNG stream id of every group, e.g. to replay one group
    /// of a larger run on its own.
    pub fn with_group_streams(mut self, streams: Vec<u64>) -> Result<Self> {
        if streams.len() != self.data.k() {
            return Err(Error::Config(format!(
                "{} group streams given for {} groups",
                streams.len(),
                self.data.k()
            )));
        }
        self.group_streams = streams;
        Ok(self)
    }

    pub fn record_steps(mut self, on: bool) -> Self {
        self.record_steps = on;
        self
    }

    pub fn record_visits(mut self, on: bool) -> Self {
        self.record_visits = on;
        self
    }

    fn stream(&self, j: usize, group: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.hp.seed);
        rng.set_stream(((j as u64) << 32) | self.group_streams[group]);
        rng
    }

    fn marginal(&self, k: usize, j: usize, set: &[usize]) -> f64 {
        let group = self.data.group(k);
        let res = residual(group, j, set);
        log_marginal_parts(set.len(), res.hat_d, group.n(), res.full_rank, self.hp)
    }

    fn coupled(&self, j: usize) -> bool {
        self.mode == Mode::Joint && self.data.k() > 1 && self.hp.c2_for(j) > 0.0
    }

    fn score(&self, col: &SupportColumn, marginals: &[f64]) -> f64 {
        let lik: f64 = marginals.iter().sum();
        let prior = match self.mode {
            Mode::Separate => col.sets.iter().map(|s| log_support_prior_size(s.len(), col.j, self.hp)).sum(),
            Mode::Joint if !self.coupled(col.j) => {
                col.sets.iter().map(|s| log_support_prior_size(s.len(), col.j, self.hp)).sum()
            }
            mode => log_joint_support_prior(col, self.hp, mode.scaling()),
        };
        lik + prior
    }

    /// Run the chain of column `j` (0-based, `j >= 1`) from empty parent sets.
    pub fn run_column(&self, j: usize) -> ColumnRun {
        assert!(j >= 1 && j < self.data.p(), "column {j} has no chain");
        let k_groups = self.data.k();
        let hp = self.hp;
        let cap = hp.cap_for(j);
        let iterations = hp.iterations;
        let mut rngs: Vec<ChaCha8Rng> = (0..k_groups).map(|k| self.stream(j, k)).collect();
        let mut state = SupportColumn::empty(j, k_groups);
        let mut marginals: Vec<f64> = (0..k_groups).map(|k| self.marginal(k, j, &[])).collect();
        let mut run = ColumnRun {
            j,
            inclusion_counts: vec![vec![0; j]; k_groups],
            accepted: vec![0; k_groups],
            proposed: vec![0; k_groups],
            trace: Vec::with_capacity(iterations),
            steps: Vec::new(),
            visits: HashMap::new(),
            final_state: SupportColumn::empty(j, k_groups),
        };
        let coupled = self.coupled(j);
        let c2 = hp.c2_for(j);

        for t in 0..iterations {
            if self.mode.is_common() {
                let prop = propose(&state.sets[0], j, cap, &mut rngs[0]);
                let new_marginals: Vec<f64> = (0..k_groups).map(|k| self.marginal(k, j, &prop.set)).collect();
                let d_lik: f64 = new_marginals.iter().zip(&marginals).map(|(new, cur)| new - cur).sum();
                let proposed_col = SupportColumn { j, sets: vec![prop.set.clone(); k_groups] };
                let scaling = self.mode.scaling();
                let d_prior = log_joint_support_prior(&proposed_col, hp, scaling)
                    - log_joint_support_prior(&state, hp, scaling);
                let delta = d_lik + d_prior + prop.log_q_ratio;
                let u: f64 = rngs[0].gen();
                run.proposed[0] += 1;
                if self.record_steps {
                    run.steps.push(delta);
                }
                if u < delta.exp() {
                    run.accepted[0] += 1;
                    state = proposed_col;
                    marginals = new_marginals;
                }
            } else {
                for k in 0..k_groups {
                    let current = &state.sets[k];
                    let prop = propose(current, j, cap, &mut rngs[k]);
                    let m_new = self.marginal(k, j, &prop.set);
                    let d_lik = m_new - marginals[k];
                    let d_prior = log_support_prior_size(prop.set.len(), j, hp)
                        - log_support_prior_size(current.len(), j, hp);
                    let mut delta = d_lik + d_prior;
                    let mut d_mrf = 0.0;
                    if coupled {
                        let others = state.multiplicity(prop.flipped) - usize::from(!prop.added);
                        d_mrf = 2.0 * c2 * others as f64;
                        if !prop.added {
                            d_mrf = -d_mrf;
                        }
                        delta += d_mrf;
                    }
                    delta += prop.log_q_ratio;
                    if cfg!(debug_assertions) {
                        let back = log_move_probability(prop.set.len(), !prop.added, j, cap)
                            - log_move_probability(current.len(), prop.added, j, cap);
                        let mut reverse = (marginals[k] - m_new)
                            + (log_support_prior_size(current.len(), j, hp)
                                - log_support_prior_size(prop.set.len(), j, hp));
                        if coupled {
                            reverse += -d_mrf;
                        }
                        reverse += -back;
                        debug_assert!(
                            (delta.is_infinite() && reverse.is_infinite()) || reverse == -delta,
                            "reverse move ratio {reverse} is not the negation of {delta}"
                        );
                    }
                    let u: f64 = rngs[k].gen();
                    run.proposed[k] += 1;
                    if self.record_steps {
                        run.steps.push(delta);
                    }
                    if u < delta.exp() {
                        run.accepted[k] += 1;
                        state.sets[k] = prop.set;
                        marginals[k] = m_new;
                    }
                }
            }

            if cfg!(debug_assertions) && (t + 1) % DEBUG_RECHECK_EVERY == 0 {
                for (k, set) in state.sets.iter().enumerate() {
                    assert_eq!(marginals[k], self.marginal(k, j, set), "stale marginal cache");
                }
            }

            run.trace.push(self.score(&state, &marginals));
            if t >= hp.burn_in {
                for (k, set) in state.sets.iter().enumerate() {
                    for &l in set {
                        run.inclusion_counts[k][l] += 1;
                    }
                }
                if self.record_visits {
                    *run.visits.entry(state.sets.clone()).or_insert(0) += 1;
                }
            }
        }
        if self.mode.is_common() {
            for k in 1..k_groups {
                run.accepted[k] = run.accepted[0];
                run.proposed[k] = run.proposed[0];
            }
        }
        run.final_state = state;
        run
    }

    /// Every column's chain, in column order.
    pub fn run_columns(&self) -> Vec<ColumnRun> {
        (1..self.data.p()).into_par_iter().map(|j| self.run_column(j)).collect()
    }

    pub fn run(&self) -> PosteriorSummary {
        summarize(self.mode, self.data.p(), self.data.k(), self.hp, &self.run_columns())
    }
}

pub fn summarize(mode: Mode, p: usize, k_groups: usize, hp: &Hyperparameters, runs: &[ColumnRun]) -> PosteriorSummary {
    let retained = hp.iterations - hp.burn_in;
    let mut inclusion = vec![DMatrix::zeros(p, p); k_groups];
    let mut selected = SupportGraph::empty(p, k_groups);
    let mut acceptance = vec![vec![0.0; p]; k_groups];
    let mut trace = vec![0.0; hp.iterations];
    for run in runs {
        let j = run.j;
        for k in 0..k_groups {
            for l in 0..j {
                let prob = run.inclusion_counts[k][l] as f64 / retained as f64;
                inclusion[k][(j, l)] = prob;
                if prob > 0.5 {
                    selected.set_edge(k, j, l, true);
                }
            }
            if run.proposed[k] > 0 {
                acceptance[k][j] = run.accepted[k] as f64 / run.proposed[k] as f64;
            }
        }
        for (total, s) in trace.iter_mut().zip(&run.trace) {
            *total += s;
        }
    }
    PosteriorSummary { mode, retained, inclusion, selected, acceptance, trace }
}

/// Run every column's chain with the given hyperparameters.
pub fn run_chain(data: &Dataset, hp: &Hyperparameters, mode: Mode) -> Result<PosteriorSummary> {
    Ok(Sampler::new(data, hp, mode)?.run())
}

/// One posterior draw of `(A_k, D_k)` for every group with parent sets
/// fixed to `graph`: `d` from its inverse-gamma conditional, then `a` given `d`.
pub fn sample_parameters<R: Rng + ?Sized>(
    graph: &SupportGraph,
    data: &Dataset,
    hp: &Hyperparameters,
    rng: &mut R,
) -> Result<Vec<CholeskyPair>> {
    if graph.p() != data.p() || graph.k() != data.k() {
        return Err(Error::ShapeMismatch(format!(
            "graph is {} groups x {} variables, data is {} x {}",
            graph.k(),
            graph.p(),
            data.k(),
            data.p()
        )));
    }
    let p = data.p();
    (0..data.k())
        .map(|k| {
            let group = data.group(k);
            let mut a = DMatrix::zeros(p, p);
            let mut d = nalgebra::DVector::zeros(p);
            for j in 0..p {
                let parents = graph.parents(k, j);
                let fit = column_fit(group, j, &parents)?;
                d[j] = sample_variance(&fit, hp, rng)?;
                let coef = sample_coefficients(&fit, d[j], hp, rng)?;
                for (i, &l) in parents.iter().enumerate() {
                    a[(j, l)] = coef[i];
                }
            }
            CholeskyPair::new(a, d)
        })
        .collect()
}
