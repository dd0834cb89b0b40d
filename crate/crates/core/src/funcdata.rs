//! Discretized functional data on a shared uniform grid of [0,1].
//!
//! Curves carry both value samples and first-derivative samples so that the
//! L2 inner product and the first-order Sobolev inner product are both
//! available. Integrals use the left-rectangular rule with weight 1/p per
//! point, so the grid excludes t = 1.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Which inner product a curve or operator argument lives under.
///
/// `G` is L2[0,1]; `H` is the Sobolev space adding the derivative term:
/// `<f,g>_H = <f,g>_G + <f',g'>_G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    G,
    H,
}

impl std::fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpaceKind::G => write!(f, "G"),
            SpaceKind::H => write!(f, "H"),
        }
    }
}

/// Uniform quadrature grid: p points t_j = (j-1)/p, spacing 1/p.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    dt: f64,
}

impl Grid {
    /// Left-rectangular grid with `p` equispaced points, t_j = (j-1)/p.
    pub fn new(p: usize) -> Result<Arc<Grid>> {
        if p < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 points, got {p}")));
        }
        let dt = 1.0 / p as f64;
        let points = (0..p).map(|j| j as f64 / p as f64).collect();
        Ok(Arc::new(Grid { points, dt }))
    }

    /// Rebuild a grid from explicit points (deserialization path).
    ///
    /// Points must be strictly increasing in [0,1] with uniform spacing to
    /// within 1e-12 relative tolerance.
    pub fn from_points(points: Vec<f64>) -> Result<Arc<Grid>> {
        let p = points.len();
        if p < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 points, got {p}")));
        }
        let dt = points[1] - points[0];
        if dt <= 0.0 {
            return Err(Error::InvalidGrid("points not strictly increasing".into()));
        }
        for j in 0..p {
            let t = points[j];
            if !t.is_finite() || !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidGrid(format!("point {j} = {t} outside [0,1]")));
            }
            if j > 0 {
                let step = points[j] - points[j - 1];
                if (step - dt).abs() > 1e-12 * dt.max(1e-300) {
                    return Err(Error::InvalidGrid(format!(
                        "non-uniform spacing at index {j}: {step} vs {dt}"
                    )));
                }
            }
        }
        Ok(Arc::new(Grid { points, dt }))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Rectangular-rule integral of sampled values.
    pub fn quadrature(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "quadrature over {} values on a {}-point grid",
                values.len(),
                self.len()
            )));
        }
        Ok(self.dt * values.iter().sum::<f64>())
    }

    /// Derivative stencil as a dense matrix (rows apply `numeric_derivative`).
    pub fn derivative_matrix(&self) -> DMatrix<f64> {
        let p = self.len();
        let mut d = DMatrix::zeros(p, p);
        let c = 1.0 / (2.0 * self.dt);
        d[(0, 0)] = -3.0 * c;
        d[(0, 1)] = 4.0 * c;
        d[(0, 2)] = -c;
        for j in 1..p - 1 {
            d[(j, j - 1)] = -c;
            d[(j, j + 1)] = c;
        }
        d[(p - 1, p - 1)] = 3.0 * c;
        d[(p - 1, p - 2)] = -4.0 * c;
        d[(p - 1, p - 3)] = c;
        d
    }
}

pub fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// Second-order finite differences: central stencils at interior points,
/// one-sided three-point stencils at both endpoints. Exact on polynomials of
/// degree <= 2.
pub fn numeric_derivative(values: &[f64], grid: &Grid) -> Result<Vec<f64>> {
    let p = grid.len();
    if values.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "derivative of {} values on a {p}-point grid",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("numeric_derivative input".into()));
    }
    let c = 1.0 / (2.0 * grid.dt());
    let mut out = vec![0.0; p];
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) * c;
    for j in 1..p - 1 {
        out[j] = (values[j + 1] - values[j - 1]) * c;
    }
    out[p - 1] = (3.0 * values[p - 1] - 4.0 * values[p - 2] + values[p - 3]) * c;
    Ok(out)
}

/// A function on [0,1] sampled on a shared grid, together with its
/// first-derivative samples. Immutable after construction.
#[derive(Debug, Clone)]
pub struct FunctionalCurve {
    grid: Arc<Grid>,
    values: DVector<f64>,
    deriv: DVector<f64>,
}

impl FunctionalCurve {
    /// Curve with explicitly supplied derivative samples (analytic path).
    pub fn new(grid: Arc<Grid>, values: Vec<f64>, deriv: Vec<f64>) -> Result<Self> {
        let p = grid.len();
        if values.len() != p || deriv.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "curve with {} values / {} deriv samples on a {p}-point grid",
                values.len(),
                deriv.len()
            )));
        }
        if values.iter().chain(deriv.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("FunctionalCurve samples".into()));
        }
        Ok(FunctionalCurve {
            grid,
            values: DVector::from_vec(values),
            deriv: DVector::from_vec(deriv),
        })
    }

    /// Curve whose derivative is filled by `numeric_derivative` (ingested-data path).
    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        let deriv = numeric_derivative(&values, &grid)?;
        FunctionalCurve::new(grid, values, deriv)
    }

    /// Sample a closed-form function and its derivative on the grid.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> Result<Self> {
        let values: Vec<f64> = grid.points().iter().map(|&t| f(t)).collect();
        let deriv: Vec<f64> = grid.points().iter().map(|&t| df(t)).collect();
        FunctionalCurve::new(grid, values, deriv)
    }

    pub fn zero(grid: Arc<Grid>) -> Self {
        let p = grid.len();
        FunctionalCurve {
            grid,
            values: DVector::zeros(p),
            deriv: DVector::zeros(p),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn deriv(&self) -> &DVector<f64> {
        &self.deriv
    }

    pub fn scaled(&self, c: f64) -> FunctionalCurve {
        FunctionalCurve {
            grid: self.grid.clone(),
            values: &self.values * c,
            deriv: &self.deriv * c,
        }
    }

    /// self + c * other, on a shared grid.
    pub fn axpy(&self, c: f64, other: &FunctionalCurve) -> Result<FunctionalCurve> {
        check_same_grid(self, other)?;
        Ok(FunctionalCurve {
            grid: self.grid.clone(),
            values: &self.values + &other.values * c,
            deriv: &self.deriv + &other.deriv * c,
        })
    }

    /// The derivative as a standalone curve in G.
    pub fn derivative_curve(&self) -> Result<FunctionalCurve> {
        FunctionalCurve::from_values(self.grid.clone(), self.deriv.iter().copied().collect())
    }

    pub fn norm_g(&self) -> f64 {
        (self.grid.dt() * self.values.dot(&self.values)).max(0.0).sqrt()
    }

    pub fn norm_h(&self) -> f64 {
        let dt = self.grid.dt();
        (dt * (self.values.dot(&self.values) + self.deriv.dot(&self.deriv)))
            .max(0.0)
            .sqrt()
    }
}

fn check_same_grid(f: &FunctionalCurve, g: &FunctionalCurve) -> Result<()> {
    if !same_grid(&f.grid, &g.grid) {
        return Err(Error::DimensionMismatch("curves on different grids".into()));
    }
    Ok(())
}

/// `<f,g>_G = int_0^1 f g dt` by the rectangular rule.
pub fn inner_g(f: &FunctionalCurve, g: &FunctionalCurve) -> Result<f64> {
    check_same_grid(f, g)?;
    Ok(f.grid.dt() * f.values.dot(&g.values))
}

/// `<f,g>_H = <f,g>_G + <f',g'>_G`, using the stored derivative samples.
pub fn inner_h(f: &FunctionalCurve, g: &FunctionalCurve) -> Result<f64> {
    check_same_grid(f, g)?;
    Ok(f.grid.dt() * (f.values.dot(&g.values) + f.deriv.dot(&g.deriv)))
}

/// Inner product in the requested space.
pub fn inner(space: SpaceKind, f: &FunctionalCurve, g: &FunctionalCurve) -> Result<f64> {
    match space {
        SpaceKind::G => inner_g(f, g),
        SpaceKind::H => inner_h(f, g),
    }
}
