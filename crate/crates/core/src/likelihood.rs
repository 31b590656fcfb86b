//! Per-column regression fits, the α-fractional marginal likelihood of a
//! parent set, and conjugate draws of `(a, d)` given a parent set.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{check_parent_set, GroupData};
use crate::priors::Hyperparameters;

/// Relative threshold on the diagonal of the triangular factor below which a
/// design column counts as linearly dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Least-squares regression of column `j` on the columns in `support`.
#[derive(Debug, Clone)]
pub struct ColumnFit {
    pub j: usize,
    pub n: usize,
    pub support: Vec<usize>,
    pub hat_a: DVector<f64>,
    pub hat_d: f64,
    pub gram: DMatrix<f64>,
    pub gram_rank: usize,
    /// Upper-triangular `R` with `gram = RᵀR`, present when full rank.
    r_factor: Option<DMatrix<f64>>,
}

impl ColumnFit {
    pub fn size(&self) -> usize {
        self.support.len()
    }

    pub fn is_full_rank(&self) -> bool {
        self.gram_rank == self.support.len()
    }
}

/// Residual summary used on the sampler's hot path.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Residual {
    pub hat_d: f64,
    pub full_rank: bool,
}

struct Decomposition {
    qr: Option<nalgebra::linalg::QR<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    qty: DVector<f64>,
    rank: usize,
}

fn design(data: &GroupData, support: &[usize]) -> DMatrix<f64> {
    let n = data.n();
    DMatrix::from_fn(n, support.len(), |i, c| data.matrix()[(i, support[c])])
}

fn decompose(data: &GroupData, j: usize, support: &[usize]) -> Decomposition {
    let y = data.column(j).clone_owned();
    if support.is_empty() {
        return Decomposition { qr: None, qty: y, rank: 0 };
    }
    let x = design(data, support);
    let scale = x.column_iter().map(|c| c.norm()).fold(0.0_f64, f64::max);
    let qr = x.qr();
    let mut qty = y;
    qr.q_tr_mul(&mut qty);
    let r = qr.r();
    let diag_len = r.nrows().min(r.ncols());
    let rank = (0..diag_len)
        .filter(|&i| r[(i, i)].abs() > RANK_TOLERANCE * scale && scale > 0.0)
        .count();
    Decomposition { qr: Some(qr), qty, rank }
}

pub(crate) fn residual(data: &GroupData, j: usize, support: &[usize]) -> Residual {
    let dec = decompose(data, j, support);
    let s = support.len();
    let n = data.n();
    let rss: f64 = if s < n { dec.qty.rows(s, n - s).norm_squared() } else { 0.0 };
    Residual { hat_d: rss / n as f64, full_rank: dec.rank == s }
}

/// Regress column `j` of one group on the columns in `support`.
///
/// Rank deficiency is reported through `gram_rank`, never as an error.
pub fn column_fit(data: &GroupData, j: usize, support: &[usize]) -> Result<ColumnFit> {
    if j >= data.p() {
        return Err(Error::InvalidData(format!("column {j} out of range for p = {}", data.p())));
    }
    check_parent_set(j, support)?;
    let n = data.n();
    let s = support.len();
    let dec = decompose(data, j, support);
    let x = design(data, support);
    let gram = x.transpose() * &x;
    let rss: f64 = if s < n { dec.qty.rows(s, n - s).norm_squared() } else { 0.0 };
    let (hat_a, r_factor) = match &dec.qr {
        None => (DVector::zeros(0), None),
        Some(qr) if dec.rank == s => {
            let r = qr.r();
            let rhs = dec.qty.rows(0, s).clone_owned();
            let a = r
                .solve_upper_triangular(&rhs)
                .expect("full-rank triangular factor is invertible");
            (a, Some(r))
        }
        Some(_) => {
            let y = data.column(j).clone_owned();
            let svd = x.clone().svd(true, true);
            let a = svd
                .solve(&y, RANK_TOLERANCE * svd.singular_values.max())
                .unwrap_or_else(|_| DVector::zeros(s));
            (a, None)
        }
    };
    let hat_d = if dec.rank == s {
        rss / n as f64
    } else {
        let y = data.column(j).clone_owned();
        (y - &x * &hat_a).norm_squared() / n as f64
    };
    Ok(ColumnFit { j, n, support: support.to_vec(), hat_a, hat_d, gram, gram_rank: dec.rank, r_factor })
}

/// `-(|S|/2) ln(1 + α/γ) - ((α n + ν₀)/2) ln(max(d̂, d_floor))`, up to a
/// constant shared by all parent sets of the same column and group.
/// Rank-deficient designs score `-∞`.
pub fn log_fractional_marginal(fit: &ColumnFit, hp: &Hyperparameters) -> f64 {
    log_marginal_parts(fit.size(), fit.hat_d, fit.n, fit.is_full_rank(), hp)
}

pub(crate) fn log_marginal_parts(size: usize, hat_d: f64, n: usize, full_rank: bool, hp: &Hyperparameters) -> f64 {
    if !full_rank {
        return f64::NEG_INFINITY;
    }
    let shrink = -(size as f64) / 2.0 * (1.0 + hp.alpha / hp.gamma).ln();
    let fit = -(hp.alpha * n as f64 + hp.nu0) / 2.0 * hat_d.max(hp.d_floor).ln();
    shrink + fit
}

/// Draw `a ~ N(â, d/(α+γ) (X_SᵀX_S)⁻¹)`.
pub fn sample_coefficients<R: Rng + ?Sized>(
    fit: &ColumnFit,
    d: f64,
    hp: &Hyperparameters,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if fit.size() == 0 {
        return Ok(DVector::zeros(0));
    }
    let r = fit.r_factor.as_ref().ok_or(Error::SingularDesign)?;
    if d.is_nan() || d <= 0.0 {
        return Err(Error::Config(format!("variance must be positive, got {d}")));
    }
    let z = DVector::from_fn(fit.size(), |_, _| rng.sample::<f64, _>(StandardNormal));
    // R⁻¹z has covariance (RᵀR)⁻¹
    let w = r.solve_upper_triangular(&z).ok_or(Error::SingularDesign)?;
    Ok(&fit.hat_a + w * (d / (hp.alpha + hp.gamma)).sqrt())
}

/// Draw `d ~ IG((α n + ν₀)/2, (α n / 2) d̂)`.
pub fn sample_variance<R: Rng + ?Sized>(fit: &ColumnFit, hp: &Hyperparameters, rng: &mut R) -> Result<f64> {
    if fit.hat_d <= hp.d_floor {
        return Err(Error::DegenerateResidual);
    }
    let (shape, scale) = variance_posterior(fit, hp);
    let gamma = Gamma::new(shape, 1.0 / scale).map_err(|e| Error::Config(e.to_string()))?;
    Ok(1.0 / gamma.sample(rng))
}

/// Shape and scale of the inverse-gamma conditional of `d`.
pub fn variance_posterior(fit: &ColumnFit, hp: &Hyperparameters) -> (f64, f64) {
    let n = fit.n as f64;
    ((hp.alpha * n + hp.nu0) / 2.0, hp.alpha * n / 2.0 * fit.hat_d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dataset;
    use crate::priors::default_hyperparameters;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hp_for(data: &GroupData) -> Hyperparameters {
        default_hyperparameters(&Dataset::new(vec![data.clone()]).unwrap())
    }

    fn random_group(n: usize, p: usize, seed: u64) -> GroupData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        GroupData::new("g", m).unwrap()
    }

    #[test]
    fn empty_support_is_mean_square() {
        let g = random_group(20, 3, 1);
        let fit = column_fit(&g, 2, &[]).unwrap();
        let ms = g.column(2).norm_squared() / 20.0;
        assert_relative_eq!(fit.hat_d, ms, epsilon = 1e-14);
        assert_eq!(fit.hat_a.len(), 0);
    }

    #[test]
    fn hand_least_squares() {
        let g = GroupData::new("toy", dmatrix![1.0, 2.0; 0.0, 1.0; 0.0, 0.0]).unwrap();
        let fit = column_fit(&g, 1, &[0]).unwrap();
        assert_relative_eq!(fit.hat_a[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(fit.hat_d, 1.0 / 3.0, epsilon = 1e-14);
        assert_eq!(fit.gram_rank, 1);
    }

    #[test]
    fn perfect_fit_has_zero_residual() {
        let mut m = random_group(10, 3, 2).matrix().clone();
        let combo = m.column(0) * 2.0 - m.column(1) * 0.5;
        m.set_column(2, &combo);
        let g = GroupData::new("g", m).unwrap();
        let fit = column_fit(&g, 2, &[0, 1]).unwrap();
        assert!(fit.hat_d < 1e-20);
        assert_relative_eq!(fit.hat_a[0], 2.0, epsilon = 1e-10);
        let hp = hp_for(&g);
        // clamped at the floor instead of -ln 0
        assert!(log_fractional_marginal(&fit, &hp).is_finite());
    }

    #[test]
    fn rank_deficiency_is_flagged_not_an_error() {
        let mut m = random_group(10, 4, 3).matrix().clone();
        let dup = m.column(0).clone_owned();
        m.set_column(1, &dup);
        let g = GroupData::new("g", m).unwrap();
        let fit = column_fit(&g, 3, &[0, 1]).unwrap();
        assert_eq!(fit.gram_rank, 1);
        let hp = hp_for(&g);
        assert_eq!(log_fractional_marginal(&fit, &hp), f64::NEG_INFINITY);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = sample_coefficients(&fit, 1.0, &hp, &mut rng).unwrap_err();
        assert_eq!(err.to_string(), "singular design");
        // more parents than observations
        let small = random_group(2, 5, 4);
        let fit = column_fit(&small, 4, &[0, 1, 2]).unwrap();
        assert!(fit.gram_rank <= 2);
        assert!(!fit.is_full_rank());
    }

    #[test]
    fn invalid_support_is_an_error() {
        let g = random_group(5, 3, 5);
        assert!(column_fit(&g, 1, &[1]).is_err());
        assert!(column_fit(&g, 2, &[1, 0]).is_err());
    }

    #[test]
    fn marginal_formula() {
        let g = random_group(10, 2, 6);
        let mut hp = hp_for(&g);
        hp.alpha = 0.999;
        hp.gamma = 0.1;
        hp.nu0 = 0.0;
        let mut fit = column_fit(&g, 1, &[]).unwrap();
        fit.hat_d = 1.0;
        assert_eq!(log_fractional_marginal(&fit, &hp), 0.0);
        let mut fit = column_fit(&g, 1, &[0]).unwrap();
        fit.hat_d = 1.0;
        assert_relative_eq!(log_fractional_marginal(&fit, &hp), -0.5 * 10.99_f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(log_fractional_marginal(&fit, &hp), -1.198493, epsilon = 1e-6);
        let mut worse = fit.clone();
        worse.hat_d = 2.0;
        assert!(log_fractional_marginal(&fit, &hp) > log_fractional_marginal(&worse, &hp));
    }

    #[test]
    fn marginal_ignores_column_order() {
        let g = random_group(30, 5, 7);
        let hp = hp_for(&g);
        let a = column_fit(&g, 4, &[0, 2, 3]).unwrap();
        // same design, columns permuted through a relabelled dataset
        let mut m = g.matrix().clone();
        m.swap_columns(0, 3);
        let h = GroupData::new("h", m).unwrap();
        let b = column_fit(&h, 4, &[0, 2, 3]).unwrap();
        assert_relative_eq!(log_fractional_marginal(&a, &hp), log_fractional_marginal(&b, &hp), epsilon = 1e-12);
    }

    #[test]
    fn nested_supports_shrink_residual() {
        let g = random_group(25, 6, 8);
        let mut prev = f64::INFINITY;
        for s in [vec![], vec![2], vec![1, 2], vec![1, 2, 4], vec![0, 1, 2, 3, 4]] {
            let d = column_fit(&g, 5, &s).unwrap().hat_d;
            assert!(d <= prev * (1.0 + 1e-12));
            prev = d;
        }
    }

    #[test]
    fn full_support_matches_normal_equations() {
        let g = random_group(40, 5, 9);
        let fit = column_fit(&g, 4, &[0, 1, 2, 3]).unwrap();
        let x = g.matrix().columns(0, 4).clone_owned();
        let y = g.column(4).clone_owned();
        let beta = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * &y;
        let rss = (y - x * &beta).norm_squared() / 40.0;
        assert_relative_eq!(fit.hat_d, rss, epsilon = 1e-12);
        assert_relative_eq!(fit.hat_a, beta, epsilon = 1e-10);
    }

    #[test]
    fn empty_support_coefficients() {
        let g = random_group(10, 2, 10);
        let hp = hp_for(&g);
        let fit = column_fit(&g, 1, &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_coefficients(&fit, 2.0, &hp, &mut rng).unwrap().len(), 0);
    }

    #[test]
    fn coefficient_draws_match_conjugate_moments() {
        let g = random_group(30, 3, 11);
        let hp = hp_for(&g);
        let fit = column_fit(&g, 2, &[0, 1]).unwrap();
        let d = 1.7;
        let cov = fit.gram.clone().try_inverse().unwrap() * (d / (hp.alpha + hp.gamma));
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let draws: Vec<DVector<f64>> =
            (0..100_000).map(|_| sample_coefficients(&fit, d, &hp, &mut rng).unwrap()).collect();
        let m = draws.len() as f64;
        let mean = draws.iter().fold(DVector::zeros(2), |acc, x| acc + x) / m;
        for i in 0..2 {
            let se = (cov[(i, i)] / m).sqrt();
            assert!((mean[i] - fit.hat_a[i]).abs() < 4.0 * se, "coordinate {i}");
        }
        let mut emp = DMatrix::zeros(2, 2);
        for x in &draws {
            let c = x - &mean;
            emp += &c * c.transpose();
        }
        emp /= m - 1.0;
        let rel = (&emp - &cov).norm() / cov.norm();
        assert!(rel < 0.05, "relative covariance error {rel}");
    }

    #[test]
    fn variance_draws_match_inverse_gamma_mean() {
        let g = random_group(30, 3, 13);
        let hp = hp_for(&g);
        let fit = column_fit(&g, 2, &[1]).unwrap();
        let (shape, scale) = variance_posterior(&fit, &hp);
        let mean = scale / (shape - 1.0);
        let sd = mean / (shape - 2.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let draws: Vec<f64> = (0..100_000).map(|_| sample_variance(&fit, &hp, &mut rng).unwrap()).collect();
        assert!(draws.iter().all(|&d| d > 0.0));
        let emp = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((emp - mean).abs() < 4.0 * sd / (draws.len() as f64).sqrt());
        // IG mean written in data terms
        let n = fit.n as f64;
        assert_relative_eq!(mean, hp.alpha * n * fit.hat_d / (hp.alpha * n + hp.nu0 - 2.0), epsilon = 1e-12);
    }

    #[test]
    fn variance_draws_are_reproducible() {
        let g = random_group(30, 3, 15);
        let hp = hp_for(&g);
        let fit = column_fit(&g, 2, &[0]).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10).map(|_| sample_variance(&fit, &hp, &mut rng).unwrap().to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
    }

    #[test]
    fn degenerate_residual_is_an_error() {
        let g = GroupData::new("g", dmatrix![1.0, 2.0; 2.0, 4.0]).unwrap();
        let hp = hp_for(&g);
        let fit = column_fit(&g, 1, &[0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_variance(&fit, &hp, &mut rng).unwrap_err().to_string(), "degenerate residual");
    }
}
