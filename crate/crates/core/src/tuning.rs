//! Hyperparameter selection: leave-one-out cross-validated prediction error
//! over the ridge pair (psi, w), and generalized cross-validation over the
//! bandwidth h with the correlated-error correction tr(SC).

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::funcdata::{inner, FunctionalCurve, SpaceKind};
use crate::operators::{
    assemble_schur, build_empirical, solve_from_schur, CoefficientEstimates, GridMetrics,
    MomentIndexSet,
};
use crate::smoother::{hat_matrix, KernelSpec};
use crate::spatial::{LatticeDesign, SpatialCovModel};

/// Fraction of leave-one-out folds that may fail before a score is flagged
/// invalid.
const MAX_SKIPPED_FOLD_FRACTION: f64 = 0.1;

/// Relative slack for treating two scores as tied; larger regularization
/// wins ties, so permuting the grid cannot change the selection.
const TIE_EPS: f64 = 1e-12;

/// Estimation switches shared across the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EstimationOptions {
    /// Inner product pairing phi with the curves (the model uses H; the
    /// simulation-study displays pair in G).
    pub phi_space: SpaceKind,
    /// Index set of the Delta moments.
    pub index_set: MomentIndexSet,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        EstimationOptions {
            phi_space: SpaceKind::H,
            index_set: MomentIndexSet::Offset,
        }
    }
}

/// Hyperparameter grids. The bandwidth list may be empty, which skips the
/// surface stage entirely (the no-spatial-component baseline).
#[derive(Debug, Clone, PartialEq)]
pub struct TuningGrid {
    pub psi_values: Vec<f64>,
    pub w_values: Vec<f64>,
    pub h_values: Vec<f64>,
}

impl TuningGrid {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: &[f64], allow_empty: bool| -> Result<()> {
            if v.is_empty() && !allow_empty {
                return Err(Error::InvalidArgument(format!("{name} grid is empty")));
            }
            for (i, &x) in v.iter().enumerate() {
                if !(x > 0.0) {
                    return Err(Error::InvalidArgument(format!("{name} grid entry {i} = {x} not positive")));
                }
                if i > 0 && v[i - 1] >= x {
                    return Err(Error::InvalidArgument(format!("{name} grid not strictly ascending")));
                }
            }
            Ok(())
        };
        check("psi", &self.psi_values, false)?;
        check("w", &self.w_values, false)?;
        check("h", &self.h_values, true)
    }

    /// Log-spaced ridge grids and eight equispaced bandwidths in [0.1, 0.9].
    pub fn default_grid() -> Self {
        let ridge = vec![1e-4, 1e-3, 1e-2, 1e-1];
        let h = (0..8).map(|i| 0.1 + 0.8 * i as f64 / 7.0).collect();
        TuningGrid { psi_values: ridge.clone(), w_values: ridge, h_values: h }
    }
}

/// Outcome of a grid search: the winner, every score (non-finite when the
/// criterion failed there), and the tie-break rule that was applied.
#[derive(Debug, Clone)]
pub struct TuningResult<T> {
    pub best: T,
    pub scores: Vec<(T, f64)>,
    pub ties_broken: &'static str,
}

/// Linear prediction of the fitted pair at one curve.
pub fn linear_predict(
    est: &CoefficientEstimates,
    x: &FunctionalCurve,
    phi_space: SpaceKind,
) -> Result<f64> {
    let dt = x.grid().dt();
    Ok(inner(phi_space, &est.phi_hat, x)? + dt * est.gamma_hat.values().dot(x.deriv()))
}

/// Scores of the leave-one-out criterion over a full (psi, w) grid, indexed
/// `[psi][w]`; failed cells are NaN. One pass refits every fold once per w.
pub fn cvmsep_grid(
    data: &Dataset,
    psi_values: &[f64],
    w_values: &[f64],
    opts: &EstimationOptions,
) -> Result<Vec<Vec<f64>>> {
    let m = data.site_count();
    if m < 2 {
        return Err(Error::InvalidArgument("leave-one-out needs at least 2 sites".into()));
    }
    let grid = data.curves[0].grid();
    let metrics = GridMetrics::new(grid)?;
    let n_psi = psi_values.len();
    let n_w = w_values.len();

    // per fold: squared errors for each (w, psi), or None where the refit failed
    let fold_errors: Vec<Vec<Option<f64>>> = (0..m)
        .into_par_iter()
        .map(|fold| {
            let mut cell = vec![None; n_w * n_psi];
            let moments = match build_empirical(
                &data.curves,
                &data.responses,
                &data.design,
                opts.index_set,
                Some(fold),
                &metrics,
            ) {
                Ok(mm) => mm,
                Err(_) => return cell,
            };
            for (wi, &w) in w_values.iter().enumerate() {
                let schur = match assemble_schur(&moments, w) {
                    Ok(s) => s,
                    Err(_) => continue,
                };
                for (pi, &psi) in psi_values.iter().enumerate() {
                    if let Ok(est) = solve_from_schur(&schur, psi) {
                        if let Ok(pred) = linear_predict(&est, &data.curves[fold], opts.phi_space) {
                            let e = data.responses[fold] - pred;
                            cell[wi * n_psi + pi] = Some(e * e);
                        }
                    }
                }
            }
            cell
        })
        .collect();

    let mut scores = vec![vec![f64::NAN; n_w]; n_psi];
    for pi in 0..n_psi {
        for wi in 0..n_w {
            let mut sum = 0.0;
            let mut kept = 0usize;
            for fe in &fold_errors {
                if let Some(e) = fe[wi * n_psi + pi] {
                    sum += e;
                    kept += 1;
                }
            }
            let skipped = m - kept;
            if (skipped as f64) <= MAX_SKIPPED_FOLD_FRACTION * m as f64 && kept > 0 {
                scores[pi][wi] = sum / kept as f64;
            } else if skipped > 0 {
                log::warn!(
                    "CVMSEP(psi={}, w={}): {skipped}/{m} folds failed; score flagged",
                    psi_values[pi],
                    w_values[wi]
                );
            }
        }
    }
    Ok(scores)
}

/// Leave-one-out mean squared prediction error at one ridge pair.
pub fn cvmsep(data: &Dataset, psi: f64, w: f64, opts: &EstimationOptions) -> Result<f64> {
    if !(psi > 0.0) || !(w > 0.0) {
        return Err(Error::InvalidArgument(format!("ridge pair must be positive: psi={psi}, w={w}")));
    }
    let scores = cvmsep_grid(data, &[psi], &[w], opts)?;
    Ok(scores[0][0])
}

/// Exhaustive CVMSEP search over the ridge grid; ties go to the larger psi,
/// then the larger w.
pub fn select_regularization(
    data: &Dataset,
    grid: &TuningGrid,
    opts: &EstimationOptions,
) -> Result<TuningResult<(f64, f64)>> {
    grid.validate()?;
    let scores = cvmsep_grid(data, &grid.psi_values, &grid.w_values, opts)?;
    let mut flat = Vec::with_capacity(grid.psi_values.len() * grid.w_values.len());
    for (pi, &psi) in grid.psi_values.iter().enumerate() {
        for (wi, &w) in grid.w_values.iter().enumerate() {
            flat.push(((psi, w), scores[pi][wi]));
        }
    }
    let best_score = flat
        .iter()
        .filter(|(_, s)| s.is_finite())
        .map(|&(_, s)| s)
        .fold(f64::INFINITY, f64::min);
    if !best_score.is_finite() {
        return Err(Error::Tuning("every CVMSEP score is invalid".into()));
    }
    let tol = TIE_EPS * (1.0 + best_score.abs());
    let best = flat
        .iter()
        .filter(|(_, s)| s.is_finite() && *s <= best_score + tol)
        .map(|&(pw, _)| pw)
        .fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |acc, pw| {
            if pw.0 > acc.0 || (pw.0 == acc.0 && pw.1 > acc.1) {
                pw
            } else {
                acc
            }
        });
    Ok(TuningResult {
        best,
        scores: flat,
        ties_broken: "near-minimal scores resolved toward larger psi, then larger w",
    })
}

/// Generalized cross-validation score of the surface stage at bandwidth h,
/// with the correlated-denominator 1 - tr(SC)/n.
pub fn gcv(
    t: &[f64],
    design: &LatticeDesign,
    h: f64,
    kernel: &KernelSpec,
    cov: &SpatialCovModel,
) -> Result<f64> {
    let m = design.site_count();
    if t.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} residuals for {m} sites",
            t.len()
        )));
    }
    let s = hat_matrix(design.coords(), h, kernel)?;
    let c = cov.correlation_matrix(design);
    let mut tr_sc = 0.0;
    for l in 0..m {
        for k in 0..m {
            tr_sc += s[(l, k)] * c[(k, l)];
        }
    }
    let denom = 1.0 - tr_sc / m as f64;
    if denom.abs() < 1e-8 {
        return Err(Error::Numeric(format!(
            "GCV denominator vanishes at h={h}: tr(SC)/n = {}",
            tr_sc / m as f64
        )));
    }
    let mut total = 0.0;
    for l in 0..m {
        let mut fitted = 0.0;
        for k in 0..m {
            fitted += s[(l, k)] * t[k];
        }
        let ratio = (t[l] - fitted) / denom;
        total += ratio * ratio;
    }
    Ok(total / m as f64)
}

/// Minimize GCV over the bandwidth grid; ties go to the larger h.
pub fn select_bandwidth(
    t: &[f64],
    design: &LatticeDesign,
    h_values: &[f64],
    kernel: &KernelSpec,
    cov: &SpatialCovModel,
) -> Result<TuningResult<f64>> {
    if h_values.is_empty() {
        return Err(Error::InvalidArgument("bandwidth grid is empty".into()));
    }
    let scores: Vec<(f64, f64)> = h_values
        .par_iter()
        .map(|&h| {
            let s = match gcv(t, design, h, kernel, cov) {
                Ok(v) => v,
                Err(e) => {
                    log::warn!("GCV(h={h}) failed: {e}");
                    f64::NAN
                }
            };
            (h, s)
        })
        .collect();
    let best_score = scores
        .iter()
        .filter(|(_, s)| s.is_finite())
        .map(|&(_, s)| s)
        .fold(f64::INFINITY, f64::min);
    if !best_score.is_finite() {
        return Err(Error::Tuning("every GCV score is invalid".into()));
    }
    let tol = TIE_EPS * (1.0 + best_score.abs());
    let best = scores
        .iter()
        .filter(|(_, s)| s.is_finite() && *s <= best_score + tol)
        .map(|&(h, _)| h)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(TuningResult {
        best,
        scores,
        ties_broken: "near-minimal scores resolved toward larger h",
    })
}
