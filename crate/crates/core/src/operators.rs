//! Empirical moment operators, metric-aware adjoints, regularized inverses,
//! and the moment-method solver for the functional coefficient pair.
//!
//! Operators are p x p matrices acting on grid value samples. An argument's
//! derivative, wherever the H inner product needs one, is implied by the
//! finite-difference stencil D, so the H-metric Gram matrix is
//! `dt*(I + D^T D)` and adjoints/norms stay consistent with the funcdata
//! quadrature. Data curves contribute through their stored derivative
//! samples, which may be analytic.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};
use crate::funcdata::{inner, same_grid, FunctionalCurve, Grid, SpaceKind};
use crate::spatial::LatticeDesign;

/// Relative residual bound enforced on every regularized dense solve.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-8;

/// Which index set the moment vectors Delta, Delta' average over.
///
/// `Offset` is the estimator as printed: the sub-lattice with every
/// coordinate >= 2 and divisor prod(n_k - 1). `Full` averages over all
/// sites, like the operator moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentIndexSet {
    #[default]
    Offset,
    Full,
}

/// Cached per-grid quantities: the derivative stencil D and the H-metric
/// Gram matrix with its factorization.
pub struct GridMetrics {
    grid: Arc<Grid>,
    d: DMatrix<f64>,
    m_h: DMatrix<f64>,
    m_h_chol: Cholesky<f64, Dyn>,
}

impl GridMetrics {
    pub fn new(grid: &Arc<Grid>) -> Result<Self> {
        let p = grid.len();
        let d = grid.derivative_matrix();
        let mut m_h = DMatrix::identity(p, p);
        m_h += d.transpose() * &d;
        m_h *= grid.dt();
        let m_h_chol = Cholesky::new(m_h.clone())
            .ok_or_else(|| Error::Numeric("H-metric Gram matrix not positive definite".into()))?;
        Ok(GridMetrics { grid: grid.clone(), d, m_h, m_h_chol })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn stencil(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// Gram matrix of the requested metric.
    pub fn gram(&self, space: SpaceKind) -> DMatrix<f64> {
        let p = self.grid.len();
        match space {
            SpaceKind::G => DMatrix::identity(p, p) * self.grid.dt(),
            SpaceKind::H => self.m_h.clone(),
        }
    }

    /// M_dom^{-1} X for the requested domain metric.
    fn solve_gram(&self, space: SpaceKind, x: DMatrix<f64>) -> DMatrix<f64> {
        match space {
            SpaceKind::G => x / self.grid.dt(),
            SpaceKind::H => self.m_h_chol.solve(&x),
        }
    }

}

/// A discretized operator between the grid realizations of G and H.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub entries: DMatrix<f64>,
    pub domain: SpaceKind,
    pub codomain: SpaceKind,
    grid: Arc<Grid>,
}

impl OperatorMatrix {
    pub fn new(entries: DMatrix<f64>, domain: SpaceKind, codomain: SpaceKind, grid: Arc<Grid>) -> Result<Self> {
        let p = grid.len();
        if entries.nrows() != p || entries.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} operator on a {p}-point grid",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("operator entries".into()));
        }
        Ok(OperatorMatrix { entries, domain, codomain, grid })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn apply(&self, f: &FunctionalCurve) -> Result<FunctionalCurve> {
        if !same_grid(&self.grid, f.grid()) {
            return Err(Error::DimensionMismatch("operator applied across grids".into()));
        }
        let values: Vec<f64> = (&self.entries * f.values()).iter().copied().collect();
        FunctionalCurve::from_values(self.grid.clone(), values)
    }
}

/// A curve-valued moment (Delta or Delta') tagged with its space.
#[derive(Debug, Clone)]
pub struct MomentVector {
    pub curve: FunctionalCurve,
    pub space: SpaceKind,
}

/// The six empirical moments of the estimation system.
pub struct EmpiricalMoments {
    /// Gamma_n = (1/n) sum X_i (x)_H X_i, on H.
    pub gamma: OperatorMatrix,
    /// Gamma'_n = (1/n) sum X'_i (x)_G X_i, G -> H.
    pub gamma_prime: OperatorMatrix,
    /// Gamma'*_n = (1/n) sum X_i (x)_H X'_i, H -> G.
    pub gamma_prime_adj: OperatorMatrix,
    /// Gamma''_n = (1/n) sum X'_i (x)_G X'_i, on G.
    pub gamma_second: OperatorMatrix,
    /// Delta_n: moment of Y X over the configured index set, in H.
    pub delta: MomentVector,
    /// Delta'_n: moment of Y X' over the configured index set, in G.
    pub delta_prime: MomentVector,
    /// Number of samples in the operator averages.
    pub sample_count: usize,
    /// Number of sites in the Delta averages.
    pub moment_count: usize,
}

/// Ridge parameters: `w` regularizes operator inversions inside the Schur
/// compositions, `psi` the outer coefficient solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationParams {
    pub w: f64,
    pub psi: f64,
}

impl RegularizationParams {
    pub fn new(w: f64, psi: f64) -> Result<Self> {
        if !(w > 0.0) || !(psi > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "regularization parameters must be positive: w={w}, psi={psi}"
            )));
        }
        Ok(RegularizationParams { w, psi })
    }
}

/// Fitted coefficient pair: phi_hat in H (stencil-filled derivative) and
/// gamma_hat in G.
#[derive(Debug, Clone)]
pub struct CoefficientEstimates {
    pub phi_hat: FunctionalCurve,
    pub gamma_hat: FunctionalCurve,
    pub params: RegularizationParams,
}

/// Rank-one tensor action `(u (x) v)(h) = <u,h> v` in the requested metric.
/// Serves as the oracle for the matrix-form operators.
pub fn tensor_apply(
    u: &FunctionalCurve,
    v: &FunctionalCurve,
    space: SpaceKind,
    h: &FunctionalCurve,
) -> Result<FunctionalCurve> {
    if !same_grid(u.grid(), v.grid()) || !same_grid(u.grid(), h.grid()) {
        return Err(Error::DimensionMismatch("tensor_apply across grids".into()));
    }
    Ok(v.scaled(inner(space, u, h)?))
}

/// Build the six empirical moments from an ordered sample.
///
/// Operator averages run over every site with weight 1/n; the Delta moments
/// run over the configured index set (offset sub-lattice by default) with
/// its own count as divisor. `skip` drops one site from all six sums, which
/// is the leave-one-out refit.
pub fn build_empirical(
    curves: &[FunctionalCurve],
    responses: &[f64],
    design: &LatticeDesign,
    index_set: MomentIndexSet,
    skip: Option<usize>,
    metrics: &GridMetrics,
) -> Result<EmpiricalMoments> {
    let m_total = design.site_count();
    if curves.len() != m_total || responses.len() != m_total {
        return Err(Error::DimensionMismatch(format!(
            "{} curves / {} responses for {m_total} design sites",
            curves.len(),
            responses.len()
        )));
    }
    if responses.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonFinite("responses".into()));
    }
    let grid = metrics.grid();
    for c in curves {
        if !same_grid(c.grid(), grid) {
            return Err(Error::DimensionMismatch("curves on different grids".into()));
        }
    }
    let kept: Vec<usize> = (0..m_total).filter(|&l| Some(l) != skip).collect();
    if kept.is_empty() {
        return Err(Error::InvalidArgument("empty sample set".into()));
    }

    let p = grid.len();
    let m = kept.len();
    let mut xv = DMatrix::zeros(p, m);
    let mut xd = DMatrix::zeros(p, m);
    for (col, &l) in kept.iter().enumerate() {
        xv.set_column(col, curves[l].values());
        xd.set_column(col, curves[l].deriv());
    }
    // representers <X_i, .>_H as columns: A = dt*(Xv + D^T Xd)
    let mut a = metrics.stencil().transpose() * &xd;
    a += &xv;
    a *= grid.dt();

    let inv_m = 1.0 / m as f64;
    let gamma = &xv * a.transpose() * inv_m;
    let gamma_prime = (&xv * xd.transpose()) * (grid.dt() * inv_m);
    let gamma_prime_adj = &xd * a.transpose() * inv_m;
    let gamma_second = (&xd * xd.transpose()) * (grid.dt() * inv_m);

    let member = |l: usize| match index_set {
        MomentIndexSet::Offset => design.in_offset_set(l),
        MomentIndexSet::Full => true,
    };
    let mut delta_vals = DVector::zeros(p);
    let mut delta_derivs = DVector::zeros(p);
    let mut dp_vals = DVector::zeros(p);
    let mut moment_count = 0usize;
    for &l in &kept {
        if !member(l) {
            continue;
        }
        moment_count += 1;
        delta_vals.axpy(responses[l], curves[l].values(), 1.0);
        delta_derivs.axpy(responses[l], curves[l].deriv(), 1.0);
        dp_vals.axpy(responses[l], curves[l].deriv(), 1.0);
    }
    if moment_count == 0 {
        return Err(Error::InvalidArgument(
            "moment index set is empty for this design".into(),
        ));
    }
    let inv_m1 = 1.0 / moment_count as f64;
    delta_vals *= inv_m1;
    delta_derivs *= inv_m1;
    dp_vals *= inv_m1;

    let delta_curve = FunctionalCurve::new(
        grid.clone(),
        delta_vals.iter().copied().collect(),
        delta_derivs.iter().copied().collect(),
    )?;
    let dp_curve =
        FunctionalCurve::from_values(grid.clone(), dp_vals.iter().copied().collect())?;

    Ok(EmpiricalMoments {
        gamma: OperatorMatrix::new(gamma, SpaceKind::H, SpaceKind::H, grid.clone())?,
        gamma_prime: OperatorMatrix::new(gamma_prime, SpaceKind::G, SpaceKind::H, grid.clone())?,
        gamma_prime_adj: OperatorMatrix::new(gamma_prime_adj, SpaceKind::H, SpaceKind::G, grid.clone())?,
        gamma_second: OperatorMatrix::new(gamma_second, SpaceKind::G, SpaceKind::G, grid.clone())?,
        delta: MomentVector { curve: delta_curve, space: SpaceKind::H },
        delta_prime: MomentVector { curve: dp_curve, space: SpaceKind::G },
        sample_count: m,
        moment_count,
    })
}

/// Metric adjoint `M_dom^{-1} A^T M_cod`. Self-moment operators are fixed
/// points; `adjoint(adjoint(A)) = A`.
pub fn adjoint(a: &OperatorMatrix, metrics: &GridMetrics) -> Result<OperatorMatrix> {
    if !same_grid(a.grid(), metrics.grid()) {
        return Err(Error::DimensionMismatch("adjoint across grids".into()));
    }
    let m_cod = metrics.gram(a.codomain);
    let rhs = a.entries.transpose() * m_cod;
    let entries = metrics.solve_gram(a.domain, rhs);
    OperatorMatrix::new(entries, a.codomain, a.domain, a.grid().clone())
}

fn lu_solve_vector(lu: &LU<f64, Dyn, Dyn>, shifted: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::Numeric("singular regularized system".into()))?;
    let resid = (shifted * &x - b).norm();
    if !(resid <= SOLVE_RESIDUAL_TOL * b.norm().max(f64::MIN_POSITIVE)) {
        return Err(Error::Numeric(format!(
            "regularized solve residual {resid:.3e} exceeds bound"
        )));
    }
    Ok(x)
}

/// Solve `(A + w I) x = b` by dense LU with an explicit residual check.
pub fn regularized_inverse_apply(
    a: &OperatorMatrix,
    w: f64,
    b: &FunctionalCurve,
) -> Result<FunctionalCurve> {
    if !(w > 0.0) {
        return Err(Error::InvalidArgument(format!("ridge w must be positive, got {w}")));
    }
    if !same_grid(a.grid(), b.grid()) {
        return Err(Error::DimensionMismatch("regularized solve across grids".into()));
    }
    let p = a.grid().len();
    let mut shifted = a.entries.clone();
    for i in 0..p {
        shifted[(i, i)] += w;
    }
    let lu = shifted.clone().lu();
    let x = lu_solve_vector(&lu, &shifted, b.values())?;
    FunctionalCurve::from_values(a.grid().clone(), x.iter().copied().collect())
}

/// The regularized Schur-complement system for the coefficient pair.
pub struct SchurSystem {
    pub s_phi: OperatorMatrix,
    pub s_gamma: OperatorMatrix,
    pub u_phi: MomentVector,
    pub u_gamma: MomentVector,
    pub w: f64,
}

/// Compose the four Schur quantities
/// `S_phi = Gamma - Gamma' (Gamma'' + wI)^{-1} Gamma'*`,
/// `u_phi = Delta - Gamma' (Gamma'' + wI)^{-1} Delta'`,
/// and symmetrically for the gamma side with `(Gamma + wI)^{-1}`.
pub fn assemble_schur(moments: &EmpiricalMoments, w: f64) -> Result<SchurSystem> {
    if !(w > 0.0) {
        return Err(Error::InvalidArgument(format!("ridge w must be positive, got {w}")));
    }
    let grid = moments.gamma.grid().clone();
    let p = grid.len();

    let mut g2_shift = moments.gamma_second.entries.clone();
    for i in 0..p {
        g2_shift[(i, i)] += w;
    }
    // Gamma'' + wI is symmetric positive definite by construction.
    let g2_chol = Cholesky::new(g2_shift)
        .ok_or_else(|| Error::Numeric("Gamma'' + wI not positive definite".into()))?;
    let t1 = g2_chol.solve(&moments.gamma_prime_adj.entries);
    let s_phi = &moments.gamma.entries - &moments.gamma_prime.entries * t1;
    let u_phi = moments.delta.curve.values()
        - &moments.gamma_prime.entries * g2_chol.solve(moments.delta_prime.curve.values());

    let mut g_shift = moments.gamma.entries.clone();
    for i in 0..p {
        g_shift[(i, i)] += w;
    }
    let g_lu = g_shift.clone().lu();
    let t2 = g_lu
        .solve(&moments.gamma_prime.entries)
        .ok_or_else(|| Error::Numeric("Gamma + wI singular".into()))?;
    let s_gamma = &moments.gamma_second.entries - &moments.gamma_prime_adj.entries * t2;
    let u_gamma = moments.delta_prime.curve.values()
        - &moments.gamma_prime_adj.entries * lu_solve_vector(&g_lu, &g_shift, moments.delta.curve.values())?;

    Ok(SchurSystem {
        s_phi: OperatorMatrix::new(s_phi, SpaceKind::H, SpaceKind::H, grid.clone())?,
        s_gamma: OperatorMatrix::new(s_gamma, SpaceKind::G, SpaceKind::G, grid.clone())?,
        u_phi: MomentVector {
            curve: FunctionalCurve::from_values(grid.clone(), u_phi.iter().copied().collect())?,
            space: SpaceKind::H,
        },
        u_gamma: MomentVector {
            curve: FunctionalCurve::from_values(grid, u_gamma.iter().copied().collect())?,
            space: SpaceKind::G,
        },
        w,
    })
}

/// Outer ridge solves `phi = (S_phi + psi I)^{-1} u_phi` and likewise for
/// gamma, given an assembled Schur system.
pub fn solve_from_schur(schur: &SchurSystem, psi: f64) -> Result<CoefficientEstimates> {
    let params = RegularizationParams::new(schur.w, psi)?;
    let grid = schur.s_phi.grid().clone();
    let p = grid.len();

    let solve_one = |s: &OperatorMatrix, u: &MomentVector| -> Result<DVector<f64>> {
        let mut shifted = s.entries.clone();
        for i in 0..p {
            shifted[(i, i)] += psi;
        }
        let lu = shifted.clone().lu();
        lu_solve_vector(&lu, &shifted, u.curve.values())
    };

    let phi_vals = solve_one(&schur.s_phi, &schur.u_phi)?;
    let gamma_vals = solve_one(&schur.s_gamma, &schur.u_gamma)?;
    // phi lives in H: fill its derivative by the stencil
    let phi_hat = FunctionalCurve::from_values(grid.clone(), phi_vals.iter().copied().collect())?;
    let gamma_hat = FunctionalCurve::from_values(grid, gamma_vals.iter().copied().collect())?;
    Ok(CoefficientEstimates { phi_hat, gamma_hat, params })
}

/// Full moment-method solve: assemble the Schur system at `params.w` and
/// apply the outer ridge `params.psi`.
pub fn solve_coefficients(
    moments: &EmpiricalMoments,
    params: RegularizationParams,
) -> Result<CoefficientEstimates> {
    let schur = assemble_schur(moments, params.w)?;
    solve_from_schur(&schur, params.psi)
}
