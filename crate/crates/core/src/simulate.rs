//! Ground-truth DAGs with controlled overlap across groups, and Gaussian data
//! drawn from them.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{lower_positions, CholeskyPair, Dataset, GroupData, SupportGraph};

/// Edges removed from, then added to, the previous group's graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation {
    pub remove: usize,
    pub add: usize,
}

impl Perturbation {
    pub fn swap(m: usize) -> Self {
        Self { remove: m, add: m }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub p: usize,
    /// Fraction of strictly lower-triangular positions that carry an edge in group 1.
    pub density: f64,
    /// One entry per group after the first.
    pub schedule: Vec<Perturbation>,
    /// Magnitude interval of nonzero coefficients; signs are ± with probability ½.
    pub coef_range: (f64, f64),
    pub diag_range: (f64, f64),
    pub n: Vec<usize>,
    pub seed: u64,
}

impl ScenarioSpec {
    /// The three overlap scenarios with `K = 3`: high (5 then 5 swapped
    /// edges), medium (5 then 20) and low (20 then 20).
    pub fn scenario(id: u8, p: usize, n: usize, seed: u64) -> Result<Self> {
        let schedule = match id {
            1 => vec![Perturbation::swap(5), Perturbation::swap(5)],
            2 => vec![Perturbation::swap(5), Perturbation::swap(20)],
            3 => vec![Perturbation::swap(20), Perturbation::swap(20)],
            _ => return Err(Error::InfeasibleScenario(format!("unknown scenario {id}, expected 1, 2 or 3"))),
        };
        Ok(Self {
            p,
            density: 0.02,
            schedule,
            coef_range: (0.3, 0.7),
            diag_range: (2.0, 5.0),
            n: vec![n; 3],
            seed,
        })
    }

    /// A small instance for exact checks: `K` groups on `p` variables, about
    /// 40% of positions filled, one edge swapped between consecutive groups.
    pub fn small(p: usize, k: usize, n: usize, seed: u64) -> Result<Self> {
        if p < 3 || k == 0 {
            return Err(Error::InfeasibleScenario(format!("small instance needs p >= 3 and K >= 1, got p = {p}, K = {k}")));
        }
        Ok(Self {
            p,
            density: 0.4,
            schedule: vec![Perturbation::swap(1); k - 1],
            coef_range: (0.3, 0.7),
            diag_range: (2.0, 5.0),
            n: vec![n; k],
            seed,
        })
    }

    pub fn k(&self) -> usize {
        self.schedule.len() + 1
    }

    pub fn positions(&self) -> usize {
        self.p * self.p.saturating_sub(1) / 2
    }

    /// `⌊density · p(p-1)/2⌋`.
    pub fn edge_count(&self) -> usize {
        (self.density * self.positions() as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InfeasibleScenario(m));
        if self.p < 2 {
            return fail(format!("p = {} leaves no edge positions", self.p));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return fail(format!("density {} outside [0, 1]", self.density));
        }
        let (lo, hi) = self.coef_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return fail(format!("coefficient range {:?} must be positive and ordered", self.coef_range));
        }
        let (lo, hi) = self.diag_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return fail(format!("diagonal range {:?} must be positive and ordered", self.diag_range));
        }
        if self.n.len() != self.k() || self.n.contains(&0) {
            return fail(format!("need {} positive sample sizes, got {:?}", self.k(), self.n));
        }
        let mut edges = self.edge_count();
        for step in &self.schedule {
            if step.remove > edges {
                return fail(format!("cannot remove {} of {edges} edges", step.remove));
            }
            if step.add > self.positions() - edges {
                return fail(format!("cannot add {} edges with {} free positions", step.add, self.positions() - edges));
            }
            edges = edges - step.remove + step.add;
        }
        Ok(())
    }
}

/// True Cholesky pairs and their supports.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub pairs: Vec<CholeskyPair>,
    pub graph: SupportGraph,
}

fn signed_uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    sign * rng.gen_range(lo..=hi)
}

/// Build the `K` graphs and draw fresh coefficients and diagonals per group.
///
/// Removed edges come from the previous group's edges and added ones from
/// positions absent in the previous group, so consecutive groups share
/// exactly `|E| - remove` edges.
pub fn generate_truth(spec: &ScenarioSpec) -> Result<Truth> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let positions: Vec<(usize, usize)> = lower_positions(spec.p).collect();
    let mut present = vec![false; positions.len()];
    for i in index::sample(&mut rng, positions.len(), spec.edge_count()) {
        present[i] = true;
    }
    let mut layouts = vec![present.clone()];
    for step in &spec.schedule {
        let on: Vec<usize> = (0..present.len()).filter(|&i| present[i]).collect();
        let off: Vec<usize> = (0..present.len()).filter(|&i| !present[i]).collect();
        let removed: Vec<usize> = index::sample(&mut rng, on.len(), step.remove).iter().map(|i| on[i]).collect();
        let added: Vec<usize> = index::sample(&mut rng, off.len(), step.add).iter().map(|i| off[i]).collect();
        for i in removed {
            present[i] = false;
        }
        for i in added {
            present[i] = true;
        }
        layouts.push(present.clone());
    }

    let mut graph = SupportGraph::empty(spec.p, spec.k());
    let mut pairs = Vec::with_capacity(spec.k());
    for (k, layout) in layouts.iter().enumerate() {
        let mut a = DMatrix::zeros(spec.p, spec.p);
        for (i, &(j, l)) in positions.iter().enumerate() {
            if layout[i] {
                a[(j, l)] = signed_uniform(&mut rng, spec.coef_range);
                graph.set_edge(k, j, l, true);
            }
        }
        let (lo, hi) = spec.diag_range;
        let d = DVector::from_fn(spec.p, |_, _| rng.gen_range(lo..=hi));
        pairs.push(CholeskyPair::new(a, d)?);
    }
    Ok(Truth { pairs, graph })
}

/// Draw `n[k]` rows from `N(0, Ω_k⁻¹)` for every group by forward
/// substitution through `(I - A) x = ε`, `ε ~ N(0, D)`.
pub fn sample_data<R: Rng + ?Sized>(truth: &Truth, n: &[usize], rng: &mut R) -> Result<Dataset> {
    if n.len() != truth.pairs.len() {
        return Err(Error::ShapeMismatch(format!("{} sample sizes for {} groups", n.len(), truth.pairs.len())));
    }
    let groups = truth
        .pairs
        .iter()
        .zip(n)
        .enumerate()
        .map(|(k, (pair, &rows))| {
            let p = pair.p();
            let sd: Vec<f64> = pair.d().iter().map(|d| d.sqrt()).collect();
            let mut x = DMatrix::zeros(rows, p);
            for i in 0..rows {
                for j in 0..p {
                    let mut v = sd[j] * rng.sample::<f64, _>(StandardNormal);
                    for l in 0..j {
                        let a = pair.a()[(j, l)];
                        if a != 0.0 {
                            v += a * x[(i, l)];
                        }
                    }
                    x[(i, j)] = v;
                }
            }
            GroupData::new(format!("group{}", k + 1), x)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(groups)
}

/// Truth plus data, with the data drawn from a stream derived from `spec.seed`.
pub fn simulate(spec: &ScenarioSpec) -> Result<(Truth, Dataset)> {
    let truth = generate_truth(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let data = sample_data(&truth, &spec.n, &mut rng)?;
    Ok((truth, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_one_overlaps() {
        let spec = ScenarioSpec::scenario(1, 150, 100, 11).unwrap();
        assert_eq!(spec.edge_count(), 223);
        let truth = generate_truth(&spec).unwrap();
        for k in 0..3 {
            assert_eq!(truth.graph.edge_count(k), 223);
        }
        assert_eq!(truth.graph.overlap(0, 1), 218);
        assert_eq!(truth.graph.overlap(1, 2), 218);
        assert!(truth.graph.overlap(0, 2) >= 213);
    }

    #[test]
    fn scenario_two_and_three_overlaps() {
        let truth = generate_truth(&ScenarioSpec::scenario(2, 150, 100, 5).unwrap()).unwrap();
        assert_eq!(truth.graph.overlap(0, 1), 218);
        assert_eq!(truth.graph.overlap(1, 2), 203);
        let truth = generate_truth(&ScenarioSpec::scenario(3, 150, 100, 5).unwrap()).unwrap();
        assert_eq!(truth.graph.overlap(0, 1), 203);
        assert_eq!(truth.graph.overlap(1, 2), 203);
        assert!(truth.graph.overlap(0, 2) >= 183);
    }

    #[test]
    fn zero_perturbation_keeps_supports_but_not_values() {
        let mut spec = ScenarioSpec::scenario(1, 30, 10, 2).unwrap();
        spec.density = 0.2;
        spec.schedule = vec![Perturbation::swap(0); 2];
        let truth = generate_truth(&spec).unwrap();
        assert_eq!(truth.graph.edges(0), truth.graph.edges(1));
        assert_eq!(truth.graph.edges(1), truth.graph.edges(2));
        assert_ne!(truth.pairs[0].a(), truth.pairs[1].a());
    }

    #[test]
    fn coefficients_and_diagonals_in_range() {
        let truth = generate_truth(&ScenarioSpec::scenario(3, 60, 10, 9).unwrap()).unwrap();
        for pair in &truth.pairs {
            for &a in pair.a().iter().filter(|a| **a != 0.0) {
                assert!((0.3..=0.7).contains(&a.abs()));
            }
            assert!(pair.d().iter().all(|d| (2.0..=5.0).contains(d)));
        }
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let mut spec = ScenarioSpec::scenario(1, 10, 10, 0).unwrap();
        // ⌊0.02 · 45⌋ = 0 edges, nothing to remove
        assert!(matches!(generate_truth(&spec), Err(Error::InfeasibleScenario(_))));
        spec.density = 0.5;
        spec.coef_range = (0.7, 0.3);
        assert!(generate_truth(&spec).is_err());
        assert!(ScenarioSpec::scenario(4, 10, 10, 0).is_err());
    }

    #[test]
    fn identity_truth_gives_identity_covariance() {
        let truth = Truth { pairs: vec![CholeskyPair::identity(4)], graph: SupportGraph::empty(4, 1) };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 4000;
        let data = sample_data(&truth, &[n], &mut rng).unwrap();
        let x = data.group(0).matrix();
        let cov = x.transpose() * x / n as f64;
        let tol = 3.0 / (n as f64).sqrt();
        for i in 0..4 {
            for j in 0..4 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((cov[(i, j)] - target).abs() < tol * if i == j { 1.5 } else { 1.0 });
            }
        }
    }

    #[test]
    fn sample_covariance_converges_to_inverse_precision() {
        let mut spec = ScenarioSpec::scenario(1, 8, 10, 3).unwrap();
        spec.density = 0.4;
        spec.schedule = vec![Perturbation::swap(1)];
        spec.n = vec![10, 10];
        let truth = generate_truth(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let data = sample_data(&truth, &[n, n], &mut rng).unwrap();
        for (k, pair) in truth.pairs.iter().enumerate() {
            let sigma = pair.compose().try_inverse().unwrap();
            let x = data.group(k).matrix();
            let cov = x.transpose() * x / n as f64;
            let rel = (&cov - &sigma).norm() / sigma.norm();
            assert!(rel < 0.02, "group {k}: relative error {rel}");
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let spec = ScenarioSpec::scenario(2, 40, 20, 8).unwrap();
        let mut spec = spec;
        spec.density = 0.1;
        let (t1, d1) = simulate(&spec).unwrap();
        let (t2, d2) = simulate(&spec).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(d1, d2);
    }
}
