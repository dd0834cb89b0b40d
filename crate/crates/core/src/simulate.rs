//! Synthetic-data generator for the simulation benchmark: Fourier-basis
//! curves with truncated-Gaussian coefficient fields, exponentially
//! correlated noise, and ground-truth responses.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::funcdata::{FunctionalCurve, Grid};
use crate::spatial::{make_lattice, LatticeDesign, NormKind, SpatialCovModel};

/// Maximum supported Fourier basis size.
pub const MAX_BASIS: usize = 15;

/// splitmix64 step, used to derive independent seed streams.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed for stream `stream` derived from a base seed.
/// Replications, noise draws, and coefficient draws each own a stream, so
/// datasets are bit-identical regardless of worker count.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream.wrapping_add(1)))
}

/// k-th element of the orthonormal Fourier basis on [0,1], with its analytic
/// derivative: F_1 = 1, F_{2j} = sqrt(2) sin(2 pi j t),
/// F_{2j+1} = sqrt(2) cos(2 pi j t).
pub fn fourier_basis(k: usize, grid: &Arc<Grid>) -> Result<FunctionalCurve> {
    if k < 1 || k > MAX_BASIS {
        return Err(Error::InvalidArgument(format!(
            "Fourier basis index {k} outside 1..={MAX_BASIS}"
        )));
    }
    let tau = std::f64::consts::TAU;
    let sqrt2 = std::f64::consts::SQRT_2;
    if k == 1 {
        return FunctionalCurve::from_fn(grid.clone(), |_| 1.0, |_| 0.0);
    }
    let j = (k / 2) as f64;
    if k % 2 == 0 {
        FunctionalCurve::from_fn(
            grid.clone(),
            move |t| sqrt2 * (tau * j * t).sin(),
            move |t| sqrt2 * tau * j * (tau * j * t).cos(),
        )
    } else {
        FunctionalCurve::from_fn(
            grid.clone(),
            move |t| sqrt2 * (tau * j * t).cos(),
            move |t| -sqrt2 * tau * j * (tau * j * t).sin(),
        )
    }
}

fn truncated_normal_draw(n01: &Normal, mu: f64, sd: f64, lo: f64, hi: f64, u: f64) -> f64 {
    if !(sd.is_finite() && sd > 0.0) {
        return mu.clamp(lo, hi);
    }
    let pa = n01.cdf((lo - mu) / sd);
    let pb = n01.cdf((hi - mu) / sd);
    if !(pb - pa > 1e-300) {
        return mu.clamp(lo, hi);
    }
    let q = (pa + u * (pb - pa)).clamp(1e-16, 1.0 - 1e-16);
    (mu + sd * n01.inverse_cdf(q)).clamp(lo, hi)
}

/// Gibbs sampler for the multivariate normal truncated to a box.
///
/// Coordinatewise conditional truncated-normal draws by inverse CDF, with a
/// fixed burn-in of 200 sweeps and 10 thinning sweeps between retained
/// samples. Returns a `count x m` matrix of draws; deterministic given the
/// seed.
pub fn sample_truncated_mvn(
    mean: &[f64],
    cov: &DMatrix<f64>,
    lower: &[f64],
    upper: &[f64],
    count: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    const BURN_IN: usize = 200;
    const THINNING: usize = 10;

    let m = mean.len();
    if cov.nrows() != m || cov.ncols() != m || lower.len() != m || upper.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "truncated MVN of dimension {m} with {}x{} covariance",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if lower.iter().zip(upper).any(|(&l, &u)| !(l < u)) {
        return Err(Error::InvalidArgument("truncation bounds must satisfy lower < upper".into()));
    }
    let chol = Cholesky::new(cov.clone())
        .ok_or_else(|| Error::Numeric("truncated MVN covariance is not positive definite".into()))?;
    let precision = chol.inverse();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n01 = Normal::new(0.0, 1.0).expect("standard normal");
    // deterministic interior start
    let mut x: Vec<f64> = lower.iter().zip(upper).map(|(&l, &u)| 0.5 * (l + u)).collect();

    let sweep = |x: &mut Vec<f64>, rng: &mut ChaCha8Rng| {
        for j in 0..m {
            let qjj = precision[(j, j)];
            let mut s = 0.0;
            for k in 0..m {
                if k != j {
                    s += precision[(j, k)] * (x[k] - mean[k]);
                }
            }
            let (mu_c, sd_c) = if qjj.is_finite() && qjj > 0.0 {
                (mean[j] - s / qjj, (1.0 / qjj).sqrt())
            } else {
                (mean[j], f64::NAN)
            };
            let u: f64 = rng.random();
            x[j] = truncated_normal_draw(&n01, mu_c, sd_c, lower[j], upper[j], u);
        }
    };

    for _ in 0..BURN_IN {
        sweep(&mut x, &mut rng);
    }
    let mut out = DMatrix::zeros(count, m);
    for row in 0..count {
        for _ in 0..THINNING {
            sweep(&mut x, &mut rng);
        }
        for j in 0..m {
            out[(row, j)] = x[j];
        }
    }
    Ok(out)
}

/// Draw one centered Gaussian vector with the given covariance.
///
/// Cholesky factorization when the matrix is positive definite; otherwise
/// the eigenvalue-clipping repair (negative eigenvalues floored at zero)
/// with a logged warning.
pub fn generate_noise(cov: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let m = cov.nrows();
    if cov.ncols() != m {
        return Err(Error::DimensionMismatch("noise covariance must be square".into()));
    }
    let factor = match Cholesky::new(cov.clone()) {
        Some(c) => c.unpack(),
        None => {
            log::warn!("noise covariance not positive definite; clipping negative eigenvalues");
            let eig = nalgebra::SymmetricEigen::new(cov.clone());
            let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals)
        }
    };
    let z = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
    Ok((factor * z).iter().copied().collect())
}

/// Error covariance of the benchmark: diagonal of the unit-variance field
/// kept, off-diagonal entries scaled by `noise_scale`.
pub fn noise_covariance(design: &LatticeDesign, a: f64, noise_scale: f64) -> Result<DMatrix<f64>> {
    let sigma1 = SpatialCovModel::new(1.0, a, NormKind::Euclidean)?.covariance_matrix(design);
    let m = design.site_count();
    let mut sigma2 = sigma1 * noise_scale;
    for l in 0..m {
        sigma2[(l, l)] = 1.0;
    }
    Ok(sigma2)
}

/// Configuration of one benchmark scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Lattice side; the design is n x n.
    pub n: usize,
    /// Spatial decay of the coefficient field and noise.
    pub a: f64,
    /// Grid size for the curves.
    pub p: usize,
    /// Number of Fourier basis elements.
    pub n_basis: usize,
    pub seed: u64,
    /// Off-diagonal factor of the noise covariance.
    pub noise_scale: f64,
}

impl ScenarioConfig {
    pub fn new(n: usize, a: f64, seed: u64) -> Self {
        ScenarioConfig { n, a, p: 366, n_basis: MAX_BASIS, seed, noise_scale: 0.01 }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("lattice side must be >= 2, got {}", self.n)));
        }
        if !(self.a > 0.0) {
            return Err(Error::InvalidArgument(format!("decay a must be positive, got {}", self.a)));
        }
        if self.n_basis < 1 || self.n_basis > MAX_BASIS {
            return Err(Error::InvalidArgument(format!(
                "basis size {} outside 1..={MAX_BASIS}",
                self.n_basis
            )));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::InvalidArgument("noise scale must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Benchmark truth: phi(t) = sin(2 pi t^3)^3.
pub fn truth_phi(t: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    (tau * t * t * t).sin().powi(3)
}

fn truth_phi_deriv(t: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let s = (tau * t * t * t).sin();
    3.0 * s * s * (tau * t * t * t).cos() * tau * 3.0 * t * t
}

/// Benchmark truth: gamma(t) = (0.6 - t)^2.
pub fn truth_gamma(t: f64) -> f64 {
    (0.6 - t) * (0.6 - t)
}

fn truth_gamma_deriv(t: f64) -> f64 {
    -2.0 * (0.6 - t)
}

/// Benchmark truth: r(x) = exp(-|x|_inf).
pub fn truth_r(x: &[f64]) -> f64 {
    (-x.iter().fold(0.0f64, |m, v| m.max(v.abs()))).exp()
}

/// Ground truth carried by a synthetic dataset.
#[derive(Debug, Clone)]
pub struct ScenarioTruth {
    pub phi: FunctionalCurve,
    pub gamma: FunctionalCurve,
    /// r evaluated at the design points.
    pub r_values: Vec<f64>,
    /// Realized noise.
    pub eps: Vec<f64>,
    /// Coefficient field, one row per basis index.
    pub lambda: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub design: LatticeDesign,
    pub curves: Vec<FunctionalCurve>,
    pub responses: Vec<f64>,
    pub truth: ScenarioTruth,
}

/// A non-visited site with its curve and both the noiseless and the noisy
/// response.
#[derive(Debug, Clone)]
pub struct HoldoutSite {
    pub index: Vec<usize>,
    pub coords: Vec<f64>,
    pub curve: FunctionalCurve,
    pub y_star: f64,
    pub y_actual: f64,
}

/// Linear part of a response under the generator's quadrature:
/// int phi X + int gamma X'.
pub fn linear_response(phi: &FunctionalCurve, gamma: &FunctionalCurve, x: &FunctionalCurve) -> f64 {
    let dt = x.grid().dt();
    dt * (phi.values().dot(x.values()) + gamma.values().dot(x.deriv()))
}

struct FieldDraws {
    lambda: DMatrix<f64>,
    eps: Vec<f64>,
}

/// One coefficient-field draw per basis index over `field_design`, plus one
/// noise draw, both seeded from the scenario seed.
fn draw_fields(config: &ScenarioConfig, field_design: &LatticeDesign) -> Result<FieldDraws> {
    let m = field_design.site_count();
    let sigma1 = SpatialCovModel::new(1.0, config.a, NormKind::Euclidean)?.covariance_matrix(field_design);
    let lambda = sample_truncated_mvn(
        &vec![0.0; m],
        &sigma1,
        &vec![0.0; m],
        &vec![1.0; m],
        config.n_basis,
        derive_seed(config.seed, 1),
    )?;
    let sigma2 = noise_covariance(field_design, config.a, config.noise_scale)?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 2));
    let eps = generate_noise(&sigma2, &mut noise_rng)?;
    Ok(FieldDraws { lambda, eps })
}

fn assemble_curve(
    grid: &Arc<Grid>,
    basis: &[FunctionalCurve],
    lambda: &DMatrix<f64>,
    col: usize,
) -> Result<FunctionalCurve> {
    let mut x = FunctionalCurve::zero(grid.clone());
    for (k, b) in basis.iter().enumerate() {
        x = x.axpy(lambda[(k, col)], b)?;
    }
    Ok(x)
}

/// Generate the benchmark dataset on the n x n lattice.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<SyntheticDataset> {
    let (dataset, _) = generate_with_holdout(config, false)?;
    Ok(dataset)
}

/// Generate the benchmark dataset together with the held-out sites of the
/// enlarged lattice (indices in I_{n+1} \ I_n, design map unchanged).
pub fn generate_scenario_extended(config: &ScenarioConfig) -> Result<(SyntheticDataset, Vec<HoldoutSite>)> {
    generate_with_holdout(config, true)
}

fn generate_with_holdout(
    config: &ScenarioConfig,
    with_holdout: bool,
) -> Result<(SyntheticDataset, Vec<HoldoutSite>)> {
    config.validate()?;
    let n = config.n;
    let grid = Grid::new(config.p)?;
    let basis: Vec<FunctionalCurve> = (1..=config.n_basis)
        .map(|k| fourier_basis(k, &grid))
        .collect::<Result<_>>()?;
    let design = make_lattice(&[n, n])?;

    // fields are drawn over the enlarged lattice when holdout sites are
    // requested; index distances do not depend on the design map
    let field_design = if with_holdout {
        make_lattice(&[n + 1, n + 1])?
    } else {
        design.clone()
    };
    let fields = draw_fields(config, &field_design)?;

    let phi = FunctionalCurve::from_fn(grid.clone(), truth_phi, truth_phi_deriv)?;
    let gamma = FunctionalCurve::from_fn(grid.clone(), truth_gamma, truth_gamma_deriv)?;

    let m_train = design.site_count();
    let mut curves = Vec::with_capacity(m_train);
    let mut responses = Vec::with_capacity(m_train);
    let mut r_values = Vec::with_capacity(m_train);
    let mut eps_train = Vec::with_capacity(m_train);
    let mut lambda_train = DMatrix::zeros(config.n_basis, m_train);
    let mut holdout = Vec::new();

    for (row, site) in field_design.sites().iter().enumerate() {
        let in_train = site.iter().all(|&c| c <= n);
        // design points always use the training map i/(n+1)
        let coords: Vec<f64> = site.iter().map(|&i| i as f64 / (n as f64 + 1.0)).collect();
        let x = assemble_curve(&grid, &basis, &fields.lambda, row)?;
        let r_val = truth_r(&coords);
        let y_star = linear_response(&phi, &gamma, &x) + r_val;
        if in_train {
            let train_idx = curves.len();
            for k in 0..config.n_basis {
                lambda_train[(k, train_idx)] = fields.lambda[(k, row)];
            }
            r_values.push(r_val);
            eps_train.push(fields.eps[row]);
            responses.push(y_star + fields.eps[row]);
            curves.push(x);
        } else if with_holdout {
            holdout.push(HoldoutSite {
                index: site.clone(),
                coords,
                curve: x,
                y_star,
                y_actual: y_star + fields.eps[row],
            });
        }
    }
    debug_assert_eq!(curves.len(), m_train);

    Ok((
        SyntheticDataset {
            design,
            curves,
            responses,
            truth: ScenarioTruth {
                phi,
                gamma,
                r_values,
                eps: eps_train,
                lambda: lambda_train,
            },
        },
        holdout,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_first_element_constant() {
        let grid = Grid::new(16).unwrap();
        let f1 = fourier_basis(1, &grid).unwrap();
        assert!(f1.values().iter().all(|&v| v == 1.0));
        assert!(f1.deriv().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fourier_second_element_at_quarter() {
        let grid = Grid::new(4).unwrap();
        let f2 = fourier_basis(2, &grid).unwrap();
        // t = 0.25 is grid point 1: sqrt(2) sin(pi/2) = sqrt(2)
        assert!((f2.values()[1] - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn fourier_rejects_out_of_range() {
        let grid = Grid::new(8).unwrap();
        assert!(fourier_basis(0, &grid).is_err());
        assert!(fourier_basis(16, &grid).is_err());
    }

    #[test]
    fn fourier_gram_is_identity_under_quadrature() {
        let grid = Grid::new(366).unwrap();
        let basis: Vec<_> = (1..=15).map(|k| fourier_basis(k, &grid).unwrap()).collect();
        for (i, fi) in basis.iter().enumerate() {
            for (j, fj) in basis.iter().enumerate() {
                let g = crate::funcdata::inner_g(fi, fj).unwrap();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g - expect).abs() < 2.0 / 366.0, "({i},{j}): {g}");
            }
        }
    }

    #[test]
    fn truncated_mvn_1d_mean_matches_quadrature_oracle() {
        // E of N(0,1) truncated to [0,1] by Simpson quadrature of t phi(t)
        let steps = 20_000usize;
        let dt = 1.0 / steps as f64;
        let phi = |t: f64| (-0.5 * t * t).exp() / (std::f64::consts::TAU).sqrt();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..=steps {
            let t = i as f64 * dt;
            let w = if i == 0 || i == steps {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            num += w * t * phi(t);
            den += w * phi(t);
        }
        let oracle = num / den;
        assert!((oracle - 0.4598).abs() < 1e-3, "oracle {oracle}");

        let cov = DMatrix::from_element(1, 1, 1.0);
        let draws = sample_truncated_mvn(&[0.0], &cov, &[0.0], &[1.0], 100_000, 99).unwrap();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - oracle).abs() < 0.01, "mean {mean} vs oracle {oracle}");
        assert!(draws.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn truncated_mvn_is_seed_deterministic() {
        let cov = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.3 });
        let a = sample_truncated_mvn(&[0.0; 3], &cov, &[0.0; 3], &[1.0; 3], 50, 7).unwrap();
        let b = sample_truncated_mvn(&[0.0; 3], &cov, &[0.0; 3], &[1.0; 3], 50, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_mvn_uncorrelated_when_decay_is_extreme() {
        let design = make_lattice(&[2, 1]).unwrap();
        let cov = SpatialCovModel::new(1.0, 200.0, NormKind::Euclidean)
            .unwrap()
            .covariance_matrix(&design);
        let draws = sample_truncated_mvn(&[0.0; 2], &cov, &[0.0; 2], &[1.0; 2], 10_000, 3).unwrap();
        let m0 = draws.column(0).mean();
        let m1 = draws.column(1).mean();
        let mut num = 0.0;
        let mut v0 = 0.0;
        let mut v1 = 0.0;
        for i in 0..10_000 {
            let a = draws[(i, 0)] - m0;
            let b = draws[(i, 1)] - m1;
            num += a * b;
            v0 += a * a;
            v1 += b * b;
        }
        let corr = num / (v0.sqrt() * v1.sqrt());
        assert!(corr.abs() < 0.05, "corr {corr}");
    }

    #[test]
    fn truncated_mvn_rejects_bad_inputs() {
        let cov = DMatrix::from_element(1, 1, 1.0);
        assert!(sample_truncated_mvn(&[0.0], &cov, &[1.0], &[0.0], 1, 0).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(sample_truncated_mvn(&[0.0; 2], &indefinite, &[0.0; 2], &[1.0; 2], 1, 0).is_err());
    }

    #[test]
    fn noise_identity_covariance_behaves_iid() {
        let m = 10_000;
        let cov = DMatrix::<f64>::identity(m, m);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let eps = generate_noise(&cov, &mut rng).unwrap();
        let mean: f64 = eps.iter().sum::<f64>() / m as f64;
        let var: f64 = eps.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64;
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn noise_scale_zero_gives_unit_diagonal() {
        let design = make_lattice(&[3, 3]).unwrap();
        let sigma2 = noise_covariance(&design, 1.0, 0.0).unwrap();
        assert_eq!(sigma2, DMatrix::identity(9, 9));
    }

    #[test]
    fn noise_empirical_covariance_matches_sigma2() {
        let design = make_lattice(&[2, 2]).unwrap();
        let sigma2 = noise_covariance(&design, 1.0, 0.01).unwrap();
        let reps = 10_000;
        let mut acc = DMatrix::<f64>::zeros(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..reps {
            let e = generate_noise(&sigma2, &mut rng).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    acc[(i, j)] += e[i] * e[j];
                }
            }
        }
        acc /= reps as f64;
        assert!((acc - sigma2).amax() < 0.05);
    }

    #[test]
    fn noise_indefinite_covariance_is_repaired() {
        let mut cov = DMatrix::<f64>::identity(3, 3);
        cov[(0, 1)] = 1.2;
        cov[(1, 0)] = 1.2;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eps = generate_noise(&cov, &mut rng).unwrap();
        assert!(eps.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn scenario_reconstruction_identity() {
        let config = ScenarioConfig { p: 96, ..ScenarioConfig::new(3, 3.0, 42) };
        let data = generate_scenario(&config).unwrap();
        let grid = data.curves[0].grid().clone();
        for l in 0..data.design.site_count() {
            let x = &data.curves[l];
            let prod_phi: Vec<f64> = (0..grid.len())
                .map(|j| data.truth.phi.values()[j] * x.values()[j])
                .collect();
            let prod_gamma: Vec<f64> = (0..grid.len())
                .map(|j| data.truth.gamma.values()[j] * x.deriv()[j])
                .collect();
            let recon = grid.quadrature(&prod_phi).unwrap()
                + grid.quadrature(&prod_gamma).unwrap()
                + data.truth.r_values[l]
                + data.truth.eps[l];
            assert!((data.responses[l] - recon).abs() < 1e-10, "site {l}");
        }
    }

    #[test]
    fn scenario_truth_closed_forms() {
        assert!((truth_phi(0.5) - 0.35355).abs() < 1e-5);
        assert!((truth_r(&[0.25, 0.75]) - 0.47237).abs() < 1e-5);
        assert!((truth_gamma(0.1) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn scenario_is_seed_deterministic() {
        let config = ScenarioConfig { p: 48, ..ScenarioConfig::new(3, 1.0, 7) };
        let a = generate_scenario(&config).unwrap();
        let b = generate_scenario(&config).unwrap();
        assert_eq!(a.responses, b.responses);
        assert_eq!(a.truth.eps, b.truth.eps);
        for (ca, cb) in a.curves.iter().zip(&b.curves) {
            assert_eq!(ca.values(), cb.values());
        }
    }

    #[test]
    fn lambda_field_stays_in_unit_box() {
        let config = ScenarioConfig { p: 48, ..ScenarioConfig::new(4, 0.1, 13) };
        let data = generate_scenario(&config).unwrap();
        assert!(data.truth.lambda.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn extended_scenario_exposes_boundary_sites() {
        let config = ScenarioConfig { p: 48, ..ScenarioConfig::new(3, 1.0, 19) };
        let (data, holdout) = generate_scenario_extended(&config).unwrap();
        assert_eq!(data.design.site_count(), 9);
        // I_{n+1} \ I_n has 2n+1 sites
        assert_eq!(holdout.len(), 7);
        for h in &holdout {
            assert!(h.index.iter().any(|&c| c == 4));
            for (k, &c) in h.coords.iter().enumerate() {
                assert!((c - h.index[k] as f64 / 4.0).abs() < 1e-15);
            }
            assert!((h.y_actual - h.y_star).abs() < 10.0);
        }
        // training portion matches the plain scenario's design map
        for (l, c) in data.design.coords().iter().enumerate() {
            let site = &data.design.sites()[l];
            assert!((c[0] - site[0] as f64 / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn neighbor_correlation_decreases_with_decay() {
        // average nearest-neighbor correlation of the Lambda columns over
        // replications: a = 0.1 above a = 3 above a = 200
        let avg = |a: f64| {
            let mut pooled = Vec::new();
            for rep in 0..50u64 {
                let config = ScenarioConfig {
                    p: 48,
                    n_basis: 4,
                    ..ScenarioConfig::new(3, a, 1000 + rep)
                };
                let data = generate_scenario(&config).unwrap();
                let design = &data.design;
                for k in 0..config.n_basis {
                    for l in 0..design.site_count() {
                        for m2 in l + 1..design.site_count() {
                            let (si, sj) = (&design.sites()[l], &design.sites()[m2]);
                            let dist = si
                                .iter()
                                .zip(sj)
                                .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                                .sum::<f64>()
                                .sqrt();
                            if (dist - 1.0).abs() < 1e-12 {
                                pooled.push((data.truth.lambda[(k, l)], data.truth.lambda[(k, m2)]));
                            }
                        }
                    }
                }
            }
            let n = pooled.len() as f64;
            let mx: f64 = pooled.iter().map(|p| p.0).sum::<f64>() / n;
            let my: f64 = pooled.iter().map(|p| p.1).sum::<f64>() / n;
            let mut num = 0.0;
            let mut vx = 0.0;
            let mut vy = 0.0;
            for (x, y) in &pooled {
                num += (x - mx) * (y - my);
                vx += (x - mx) * (x - mx);
                vy += (y - my) * (y - my);
            }
            num / (vx.sqrt() * vy.sqrt())
        };
        let (c01, c3, c200) = (avg(0.1), avg(3.0), avg(200.0));
        assert!(c01 > c3, "a=0.1 corr {c01} <= a=3 corr {c3}");
        assert!(c3 > c200, "a=3 corr {c3} <= a=200 corr {c200}");
    }
}
