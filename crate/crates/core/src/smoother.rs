//! Local-linear kernel regression on [0,1]^d: the spatial-surface estimator,
//! batched evaluation, and hat-weight extraction for GCV.

use crate::error::{Error, Result};

/// Epanechnikov kernel families.
///
/// The radial family is the simulation kernel `c_d * max(1 - |u|_2^2, 0)`
/// with `c_2 = 2/pi`; the product family multiplies the one-dimensional
/// Epanechnikov across coordinates and satisfies the moment conditions
/// `int K = 1`, `int u K = 0`, `int u u^T K = nu2 I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    EpanechnikovRadial,
    EpanechnikovProduct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub dimension: usize,
}

/// Volume of the d-dimensional unit ball.
fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * std::f64::consts::TAU / d as f64,
    }
}

impl KernelSpec {
    pub fn new(family: KernelFamily, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidArgument("kernel dimension must be positive".into()));
        }
        Ok(KernelSpec { family, dimension })
    }

    /// Normalizing constant of the radial family, chosen so int K = 1;
    /// equals 2/pi in dimension 2.
    pub fn radial_normalizer(d: usize) -> f64 {
        (d as f64 + 2.0) / (2.0 * unit_ball_volume(d))
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.dimension);
        match self.family {
            KernelFamily::EpanechnikovRadial => {
                let sq: f64 = u.iter().map(|v| v * v).sum();
                Self::radial_normalizer(self.dimension) * (1.0 - sq).max(0.0)
            }
            KernelFamily::EpanechnikovProduct => u
                .iter()
                .map(|v| 0.75 * (1.0 - v * v).max(0.0))
                .product(),
        }
    }

    /// Second-moment constant nu2 with `int u u^T K = nu2 I_d`.
    /// Diagnostic only; it never enters a computed estimate.
    pub fn nu2(&self) -> f64 {
        match self.family {
            KernelFamily::EpanechnikovRadial => 1.0 / (self.dimension as f64 + 4.0),
            KernelFamily::EpanechnikovProduct => 0.2,
        }
    }
}

/// One local-linear fit at an evaluation point.
#[derive(Debug, Clone)]
pub struct LocalLinearFit {
    pub s0: Vec<f64>,
    /// beta_0 estimate, the surface value at s0. Always equals
    /// `hat_weights . responses`.
    pub intercept: f64,
    /// Bandwidth-scaled slope estimate (h times the gradient).
    pub slope: Vec<f64>,
    /// Row of the smoothing matrix centered at s0.
    pub hat_weights: Vec<f64>,
    /// True when the locally constant fallback replaced a singular
    /// local-linear system.
    pub used_fallback: bool,
}

/// Cholesky of a small symmetric matrix with a relative pivot floor.
/// Returns None when the matrix is numerically singular.
fn small_cholesky(a: &[f64], d: usize, pivot_floor: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= l[j * d + k] * l[j * d + k];
        }
        if !(diag > pivot_floor) {
            return None;
        }
        let dj = diag.sqrt();
        l[j * d + j] = dj;
        for i in j + 1..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = v / dj;
        }
    }
    Some(l)
}

fn small_solve(l: &[f64], d: usize, b: &mut [f64]) {
    for i in 0..d {
        for k in 0..i {
            b[i] -= l[i * d + k] * b[k];
        }
        b[i] /= l[i * d + i];
    }
    for i in (0..d).rev() {
        for k in i + 1..d {
            b[i] -= l[k * d + i] * b[k];
        }
        b[i] /= l[i * d + i];
    }
}

/// Weighted local-linear fit of `responses` over `sites` at the point `s0`.
///
/// Solves the kernel-weighted normal equations of the design with rows
/// `[1, (site - s0)/h]`; the intercept estimates the surface at s0 and the
/// hat-weight row makes it an explicit linear functional of the responses.
/// Singular local systems fall back to the locally constant estimator.
pub fn local_linear_fit(
    responses: &[f64],
    sites: &[Vec<f64>],
    s0: &[f64],
    h: f64,
    spec: &KernelSpec,
) -> Result<LocalLinearFit> {
    let n = sites.len();
    let d = spec.dimension;
    if responses.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} responses for {n} sites",
            responses.len()
        )));
    }
    if s0.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "evaluation point of dimension {}, kernel dimension {d}",
            s0.len()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }

    let inv_hd = 1.0 / h.powi(d as i32);
    let mut z = vec![0.0; n * d];
    let mut w = vec![0.0; n];
    let mut w_total = 0.0;
    for (i, site) in sites.iter().enumerate() {
        if site.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "site {i} has dimension {}, kernel dimension {d}",
                site.len()
            )));
        }
        for k in 0..d {
            z[i * d + k] = (site[k] - s0[k]) / h;
        }
        let wi = inv_hd * spec.eval(&z[i * d..(i + 1) * d]);
        w[i] = wi;
        w_total += wi;
    }
    if !(w_total > 0.0) {
        return Err(Error::EmptyWindow { index: 0, h });
    }

    // centered coordinates decouple the intercept from the slope block and
    // make the hat row sum to one identically
    let mut zbar = vec![0.0; d];
    for i in 0..n {
        for k in 0..d {
            zbar[k] += w[i] * z[i * d + k];
        }
    }
    for k in 0..d {
        zbar[k] /= w_total;
    }

    let mut cmat = vec![0.0; d * d];
    for i in 0..n {
        if w[i] == 0.0 {
            continue;
        }
        for r in 0..d {
            let zr = z[i * d + r] - zbar[r];
            for cidx in r..d {
                cmat[r * d + cidx] += w[i] * zr * (z[i * d + cidx] - zbar[cidx]);
            }
        }
    }
    for r in 0..d {
        for cidx in 0..r {
            cmat[r * d + cidx] = cmat[cidx * d + r];
        }
    }
    let trace: f64 = (0..d).map(|k| cmat[k * d + k]).sum();
    for k in 0..d {
        cmat[k * d + k] += 1e-12 * trace;
    }

    let chol = small_cholesky(&cmat, d, 1e-10 * trace.max(f64::MIN_POSITIVE));
    let (hat_weights, slope, used_fallback) = match chol {
        Some(l) => {
            // hat_i = w_i [1/W - zbar^T C^{-1} (z_i - zbar)]
            let mut corr = zbar.clone();
            small_solve(&l, d, &mut corr);
            let mut hat = vec![0.0; n];
            for i in 0..n {
                if w[i] == 0.0 {
                    continue;
                }
                let mut dot = 0.0;
                for k in 0..d {
                    dot += corr[k] * (z[i * d + k] - zbar[k]);
                }
                hat[i] = w[i] * (1.0 / w_total - dot);
            }
            let mut rhs = vec![0.0; d];
            for i in 0..n {
                if w[i] == 0.0 {
                    continue;
                }
                for k in 0..d {
                    rhs[k] += w[i] * (z[i * d + k] - zbar[k]) * responses[i];
                }
            }
            small_solve(&l, d, &mut rhs);
            (hat, rhs, false)
        }
        None => {
            log::warn!(
                "singular local-linear system at {s0:?} with h={h}; using locally constant fit"
            );
            let hat: Vec<f64> = w.iter().map(|&wi| wi / w_total).collect();
            (hat, vec![0.0; d], true)
        }
    };

    let intercept = hat_weights
        .iter()
        .zip(responses)
        .map(|(&s, &t)| s * t)
        .sum();
    Ok(LocalLinearFit {
        s0: s0.to_vec(),
        intercept,
        slope,
        hat_weights,
        used_fallback,
    })
}

/// Surface estimate at a batch of evaluation points. Empty windows are
/// collected and reported together with their point indices.
pub fn smooth_surface(
    responses: &[f64],
    sites: &[Vec<f64>],
    eval_points: &[Vec<f64>],
    h: f64,
    spec: &KernelSpec,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(eval_points.len());
    let mut empty = Vec::new();
    for (idx, s0) in eval_points.iter().enumerate() {
        match local_linear_fit(responses, sites, s0, h, spec) {
            Ok(fit) => out.push(fit.intercept),
            Err(Error::EmptyWindow { .. }) => {
                empty.push(idx);
                out.push(f64::NAN);
            }
            Err(e) => return Err(e),
        }
    }
    if !empty.is_empty() {
        return Err(Error::EmptyWindows { indices: empty, h });
    }
    Ok(out)
}

/// Smoothing matrix: row l holds the hat weights of the fit centered at
/// site l. Row sums are 1 whenever the local system is nonsingular.
pub fn hat_matrix(sites: &[Vec<f64>], h: f64, spec: &KernelSpec) -> Result<nalgebra::DMatrix<f64>> {
    let n = sites.len();
    let zeros = vec![0.0; n];
    let mut s = nalgebra::DMatrix::zeros(n, n);
    for l in 0..n {
        let fit = local_linear_fit(&zeros, sites, &sites[l], h, spec)?;
        for k in 0..n {
            s[(l, k)] = fit.hat_weights[k];
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn lattice_sites(n: usize) -> Vec<Vec<f64>> {
        let d = crate::spatial::make_lattice(&[n, n]).unwrap();
        d.coords().to_vec()
    }

    #[test]
    fn radial_kernel_at_origin_d2() {
        let k = KernelSpec::new(KernelFamily::EpanechnikovRadial, 2).unwrap();
        assert!((k.eval(&[0.0, 0.0]) - 2.0 / std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn kernels_vanish_outside_support() {
        let kr = KernelSpec::new(KernelFamily::EpanechnikovRadial, 2).unwrap();
        assert_eq!(kr.eval(&[0.8, 0.8]), 0.0);
        let kp = KernelSpec::new(KernelFamily::EpanechnikovProduct, 2).unwrap();
        assert_eq!(kp.eval(&[1.0, 0.3]), 0.0);
        assert!(kp.eval(&[0.99, 0.3]) > 0.0);
    }

    #[test]
    fn product_kernel_integrates_to_one() {
        // midpoint rule on a 200^2 grid over [-1,1]^2
        let k = KernelSpec::new(KernelFamily::EpanechnikovProduct, 2).unwrap();
        let m = 200;
        let step = 2.0 / m as f64;
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..m {
                let u = [-1.0 + (i as f64 + 0.5) * step, -1.0 + (j as f64 + 0.5) * step];
                total += k.eval(&u) * step * step;
            }
        }
        assert!((total - 1.0).abs() < 1e-4, "{total}");
    }

    #[test]
    fn radial_kernel_integrates_to_one_d1_d2_d3() {
        for d in 1..=3usize {
            let k = KernelSpec::new(KernelFamily::EpanechnikovRadial, d).unwrap();
            let m = match d {
                1 => 4000,
                2 => 400,
                _ => 80,
            };
            let step = 2.0 / m as f64;
            let mut total = 0.0;
            let mut idx = vec![0usize; d];
            'outer: loop {
                let u: Vec<f64> = idx.iter().map(|&i| -1.0 + (i as f64 + 0.5) * step).collect();
                total += k.eval(&u) * step.powi(d as i32);
                for k2 in (0..d).rev() {
                    idx[k2] += 1;
                    if idx[k2] < m {
                        continue 'outer;
                    }
                    idx[k2] = 0;
                    if k2 == 0 {
                        break 'outer;
                    }
                }
            }
            assert!((total - 1.0).abs() < 2e-3, "d={d}: {total}");
        }
    }

    #[test]
    fn nu2_matches_numeric_integration() {
        for (family, d) in [
            (KernelFamily::EpanechnikovRadial, 1),
            (KernelFamily::EpanechnikovRadial, 2),
            (KernelFamily::EpanechnikovProduct, 2),
        ] {
            let k = KernelSpec::new(family, d).unwrap();
            let m = if d == 1 { 4000 } else { 500 };
            let step = 2.0 / m as f64;
            let mut second = 0.0;
            let mut idx = vec![0usize; d];
            'outer: loop {
                let u: Vec<f64> = idx.iter().map(|&i| -1.0 + (i as f64 + 0.5) * step).collect();
                second += u[0] * u[0] * k.eval(&u) * step.powi(d as i32);
                for k2 in (0..d).rev() {
                    idx[k2] += 1;
                    if idx[k2] < m {
                        continue 'outer;
                    }
                    idx[k2] = 0;
                    if k2 == 0 {
                        break 'outer;
                    }
                }
            }
            assert!((second - k.nu2()).abs() < 1e-3, "{family:?} d={d}: {second} vs {}", k.nu2());
        }
    }

    #[test]
    fn constant_responses_reproduced_exactly() {
        let sites = lattice_sites(4);
        let t = vec![2.5; sites.len()];
        let spec = KernelSpec::new(KernelFamily::EpanechnikovRadial, 2).unwrap();
        for s0 in [[0.3, 0.3], [0.5, 0.9], [0.05, 0.05]] {
            let fit = local_linear_fit(&t, &sites, &s0, 0.6, &spec).unwrap();
            assert!((fit.intercept - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_responses_reproduced() {
        let sites = lattice_sites(5);
        let t: Vec<f64> = sites.iter().map(|s| 0.4 + 1.3 * s[0] - 2.2 * s[1]).collect();
        let spec = KernelSpec::new(KernelFamily::EpanechnikovRadial, 2).unwrap();
        let s0 = [0.45, 0.55];
        let fit = local_linear_fit(&t, &sites, &s0, 0.5, &spec).unwrap();
        let expect = 0.4 + 1.3 * s0[0] - 2.2 * s0[1];
        assert!((fit.intercept - expect).abs() < 1e-8, "{}", fit.intercept - expect);
        assert!(!fit.used_fallback);
    }

    #[test]
    fn matches_uncentered_normal_equation_oracle() {
        // independent dense solve of (1,0) ((1/n) X^T W X)^{-1} ((1/n) X^T W Y)
        let sites = lattice_sites(3);
        let n = sites.len();
        let mut r = ChaCha8Rng::seed_from_u64(21);
        let t: Vec<f64> = (0..n).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
        let spec = KernelSpec::new(KernelFamily::EpanechnikovRadial, 2).unwrap();
        let h = 0.9;
        let s0 = [0.5, 0.5];
        let fit = local_linear_fit(&t, &sites, &s0, h, &spec).unwrap();

        let mut xt_w_x = nalgebra::DMatrix::<f64>::zeros(3, 3);
        let mut xt_w_y = nalgebra::DVector::<f64>::zeros(3);
        for i in 0..n {
            let z = [(sites[i][0] - s0[0]) / h, (sites[i][1] - s0[1]) / h];
            let wi = spec.eval(&z) / (h * h);
            let row = [1.0, z[0], z[1]];
            for a in 0..3 {
                for b in 0..3 {
                    xt_w_x[(a, b)] += wi * row[a] * row[b] / n as f64;
                }
                xt_w_y[a] += wi * row[a] * t[i] / n as f64;
            }
        }
        let beta = xt_w_x.lu().solve(&xt_w_y).unwrap();
        assert!((fit.intercept - beta[0]).abs() < 1e-10, "{} vs {}", fit.intercept, beta[0]);
    }

    #[test]
    fn smooth_surface_batches_and_reduces() {
        let sites = lattice_sites(5);
        let spec = KernelSpec::new(KernelFamily::EpanechnikovRadial, 2).unwrap();
        let zeros = vec![0.0; sites.len()];
        let vals = smooth_surface(&zeros, &sites, &sites, 0.5, &spec).unwrap();
        assert!(vals.iter().all(|&v| v.abs() < 1e-14));

        let t: Vec<f64> = sites.iter().map(|s| 1.0 + s[0] - 0.5 * s[1]).collect();
        let single = local_linear_fit(&t, &sites, &[0.4, 0.4], 0.5, &spec).unwrap();
        let batched = smooth_surface(&t, &sites, &[vec![0.4, 0.4]], 0.5, &spec).unwrap();
        assert_eq!(batched.len(), 1);
        assert_eq!(batched[0], single.intercept);

        for (s0, &v) in sites.iter().zip(smooth_surface(&t, &sites, &sites, 0.5, &spec).unwrap().iter()) {
            let expect = 1.0 + s0[0] - 0.5 * s0[1];
            assert!((v - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn empty_window_reports_indices() {
        let sites = lattice_sites(3);
        let t = vec![0.0; sites.len()];
        let spec = KernelSpec::new(KernelFamily::EpanechnikovRadial, 2).unwrap();
        // h too small to reach any lattice site from either point
        let err = smooth_surface(&t, &sites, &[vec![0.0, 0.0], vec![0.05, 0.95]], 0.05, &spec)
            .unwrap_err();
        match err {
            Error::EmptyWindows { indices, .. } => assert_eq!(indices, vec![0, 1]),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn hat_matrix_single_site_is_one() {
        let spec = KernelSpec::new(KernelFamily::EpanechnikovRadial, 2).unwrap();
        let s = hat_matrix(&[vec![0.5, 0.5]], 0.5, &spec).unwrap();
        assert_eq!(s.nrows(), 1);
        assert!((s[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hat_matrix_reproduces_affine_with_wide_window() {
        let sites = lattice_sites(4);
        let spec = KernelSpec::new(KernelFamily::EpanechnikovRadial, 2).unwrap();
        let s = hat_matrix(&sites, 2.0, &spec).unwrap();
        let t = nalgebra::DVector::from_iterator(
            sites.len(),
            sites.iter().map(|c| -0.3 + 2.0 * c[0] + 0.7 * c[1]),
        );
        let st = &s * &t;
        for l in 0..sites.len() {
            assert!((st[l] - t[l]).abs() < 1e-8);
        }
    }

    #[test]
    fn hat_rows_sum_to_one_on_random_configs() {
        let mut r = ChaCha8Rng::seed_from_u64(33);
        let spec2 = KernelSpec::new(KernelFamily::EpanechnikovRadial, 2).unwrap();
        for n in 3..=6 {
            for _ in 0..3 {
                let h = 0.2 + r.random::<f64>() * 0.7;
                let sites = lattice_sites(n);
                let s = hat_matrix(&sites, h, &spec2).unwrap();
                for l in 0..sites.len() {
                    let sum: f64 = s.row(l).iter().sum();
                    assert!((sum - 1.0).abs() < 1e-10, "n={n} h={h} row {l}: {sum}");
                }
            }
        }
    }

    #[test]
    fn zero_kernel_weight_means_zero_hat_weight() {
        let sites = lattice_sites(6);
        let spec = KernelSpec::new(KernelFamily::EpanechnikovRadial, 2).unwrap();
        let t = vec![0.0; sites.len()];
        let s0 = [0.2, 0.2];
        let h = 0.25;
        let fit = local_linear_fit(&t, &sites, &s0, h, &spec).unwrap();
        for (i, site) in sites.iter().enumerate() {
            let z = [(site[0] - s0[0]) / h, (site[1] - s0[1]) / h];
            if spec.eval(&z) == 0.0 {
                assert_eq!(fit.hat_weights[i], 0.0, "site {i}");
            }
        }
    }

    #[test]
    fn fit_is_linear_in_responses() {
        let sites = lattice_sites(4);
        let spec = KernelSpec::new(KernelFamily::EpanechnikovProduct, 2).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(44);
        let t1: Vec<f64> = (0..sites.len()).map(|_| r.random::<f64>()).collect();
        let t2: Vec<f64> = (0..sites.len()).map(|_| r.random::<f64>()).collect();
        let alpha = 1.7;
        let combo: Vec<f64> = t1.iter().zip(&t2).map(|(&a, &b)| alpha * a + b).collect();
        let s0 = [0.35, 0.6];
        let f1 = local_linear_fit(&t1, &sites, &s0, 0.5, &spec).unwrap();
        let f2 = local_linear_fit(&t2, &sites, &s0, 0.5, &spec).unwrap();
        let fc = local_linear_fit(&combo, &sites, &s0, 0.5, &spec).unwrap();
        assert!((fc.intercept - (alpha * f1.intercept + f2.intercept)).abs() < 1e-10);
    }

    #[test]
    fn depends_on_sites_only_through_scaled_offsets() {
        // translating and rescaling (sites, s0, h) together leaves the
        // hat weights unchanged
        let spec = KernelSpec::new(KernelFamily::EpanechnikovRadial, 1).unwrap();
        let sites: Vec<Vec<f64>> = (1..=9).map(|i| vec![i as f64 / 10.0]).collect();
        let mut r = ChaCha8Rng::seed_from_u64(55);
        let t: Vec<f64> = (0..9).map(|_| r.random::<f64>()).collect();
        let base = local_linear_fit(&t, &sites, &[0.4], 0.3, &spec).unwrap();
        let shifted: Vec<Vec<f64>> = sites.iter().map(|s| vec![0.1 + s[0] * 2.0]).collect();
        let moved = local_linear_fit(&t, &shifted, &[0.1 + 0.4 * 2.0], 0.6, &spec).unwrap();
        for i in 0..9 {
            // scaled problem halves the 1/h^d weight level but hat rows are
            // scale-free
            assert!((base.hat_weights[i] - moved.hat_weights[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_window_falls_back_to_weighted_mean() {
        // single site inside the window: slope unidentifiable
        let sites = vec![vec![0.5, 0.5], vec![0.95, 0.95]];
        let t = vec![3.0, -1.0];
        let spec = KernelSpec::new(KernelFamily::EpanechnikovRadial, 2).unwrap();
        let fit = local_linear_fit(&t, &sites, &[0.5, 0.5], 0.2, &spec).unwrap();
        assert!(fit.used_fallback);
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        let sum: f64 = fit.hat_weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
