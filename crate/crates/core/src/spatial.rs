//! Lattice designs, site coordinate maps, and parametric spatial covariance.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Norm used for inter-site distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// max_s |i_s - j_s|
    Chebyshev,
    /// Euclidean norm
    Euclidean,
}

impl NormKind {
    fn apply(self, diff: impl Iterator<Item = f64>) -> f64 {
        match self {
            NormKind::Chebyshev => diff.fold(0.0f64, |m, v| m.max(v.abs())),
            NormKind::Euclidean => diff.map(|v| v * v).sum::<f64>().sqrt(),
        }
    }
}

/// How distances feed the covariance kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistanceScale {
    /// Distances between integer multi-indices (irregular designs fall back
    /// to the ordinal site numbering 1..n).
    Index,
    /// Distances between site coordinates, multiplied by `factor`.
    Coordinate { factor: f64 },
}

/// The index set of a d-dimensional lattice with the design map
/// i -> i/(n+1), or an irregular list of sites with explicit coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeDesign {
    dims: Vec<usize>,
    sites: Vec<Vec<usize>>,
    coords: Vec<Vec<f64>>,
    irregular: bool,
}

impl LatticeDesign {
    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Spatial dimension of the coordinates.
    pub fn dim(&self) -> usize {
        self.coords.first().map_or(self.dims.len(), Vec::len)
    }

    pub fn sites(&self) -> &[Vec<usize>] {
        &self.sites
    }

    pub fn coords(&self) -> &[Vec<f64>] {
        &self.coords
    }

    pub fn is_irregular(&self) -> bool {
        self.irregular
    }

    /// Membership in the offset sub-lattice I^1_n = prod {2,...,n_k}.
    /// Irregular designs have no offset structure; every site is a member.
    pub fn in_offset_set(&self, site_idx: usize) -> bool {
        if self.irregular {
            return true;
        }
        self.sites[site_idx].iter().all(|&c| c >= 2)
    }

    /// Design-point coordinate of a multi-index under this design's map
    /// i -> i/(n+1). Accepts indices outside the lattice box (prediction at
    /// non-visited sites).
    pub fn coord_of_index(&self, index: &[usize]) -> Result<Vec<f64>> {
        if self.irregular {
            return Err(Error::InvalidArgument(
                "coord_of_index is undefined for irregular designs".into(),
            ));
        }
        if index.len() != self.dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "index of length {} for a {}-dimensional lattice",
                index.len(),
                self.dims.len()
            )));
        }
        Ok(index
            .iter()
            .zip(&self.dims)
            .map(|(&i, &n)| i as f64 / (n as f64 + 1.0))
            .collect())
    }
}

/// Lattice I_n = {1..n_1} x ... x {1..n_d} in lexicographic order, with
/// design points i/(n+1).
pub fn make_lattice(dims: &[usize]) -> Result<LatticeDesign> {
    if dims.is_empty() {
        return Err(Error::InvalidArgument("lattice needs at least one dimension".into()));
    }
    if dims.iter().any(|&n| n == 0) {
        return Err(Error::InvalidArgument(format!("zero lattice dimension in {dims:?}")));
    }
    let d = dims.len();
    let count: usize = dims.iter().product();
    let mut sites = Vec::with_capacity(count);
    let mut current = vec![1usize; d];
    loop {
        sites.push(current.clone());
        // lexicographic increment, last coordinate fastest
        let mut k = d;
        loop {
            if k == 0 {
                break;
            }
            k -= 1;
            if current[k] < dims[k] {
                current[k] += 1;
                for c in current.iter_mut().skip(k + 1) {
                    *c = 1;
                }
                break;
            }
            if k == 0 {
                break;
            }
        }
        if sites.len() == count {
            break;
        }
    }
    let coords = sites
        .iter()
        .map(|s| {
            s.iter()
                .zip(dims)
                .map(|(&i, &n)| i as f64 / (n as f64 + 1.0))
                .collect()
        })
        .collect();
    Ok(LatticeDesign {
        dims: dims.to_vec(),
        sites,
        coords,
        irregular: false,
    })
}

/// Irregular design from explicit site coordinates (real-data mode).
/// Sites keep the supplied ordering and are numbered 1..n.
pub fn make_irregular(points: Vec<Vec<f64>>) -> Result<LatticeDesign> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("irregular design needs at least one site".into()));
    }
    let d = points[0].len();
    if d == 0 {
        return Err(Error::InvalidArgument("irregular sites need at least one coordinate".into()));
    }
    for (i, pt) in points.iter().enumerate() {
        if pt.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "site {i} has {} coordinates, expected {d}",
                pt.len()
            )));
        }
        if pt.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("coordinates of site {i}")));
        }
    }
    let sites = (1..=points.len()).map(|i| vec![i]).collect();
    Ok(LatticeDesign {
        dims: vec![points.len()],
        sites,
        coords: points,
        irregular: true,
    })
}

/// Parametric exponential covariance over a site set:
/// Cov(eps_i, eps_j) = sigma2 * exp(-a * dist(i, j)).
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCovModel {
    pub sigma2: f64,
    pub a: f64,
    pub norm: NormKind,
    pub scale: DistanceScale,
}

impl SpatialCovModel {
    pub fn new(sigma2: f64, a: f64, norm: NormKind) -> Result<Self> {
        if !(sigma2 > 0.0) || !(a > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "covariance parameters must be positive: sigma2={sigma2}, a={a}"
            )));
        }
        Ok(SpatialCovModel {
            sigma2,
            a,
            norm,
            scale: DistanceScale::Index,
        })
    }

    pub fn with_scale(mut self, scale: DistanceScale) -> Self {
        self.scale = scale;
        self
    }

    pub fn distance(&self, design: &LatticeDesign, l: usize, m: usize) -> f64 {
        match self.scale {
            DistanceScale::Index => {
                let si = &design.sites()[l];
                let sj = &design.sites()[m];
                self.norm
                    .apply(si.iter().zip(sj).map(|(&a, &b)| a as f64 - b as f64))
            }
            DistanceScale::Coordinate { factor } => {
                let ci = &design.coords()[l];
                let cj = &design.coords()[m];
                self.norm.apply(ci.iter().zip(cj).map(|(&a, &b)| (a - b) * factor))
            }
        }
    }

    /// Covariance matrix over the design; diagonal is exactly sigma2.
    pub fn covariance_matrix(&self, design: &LatticeDesign) -> DMatrix<f64> {
        let m = design.site_count();
        let mut out = DMatrix::zeros(m, m);
        for l in 0..m {
            out[(l, l)] = self.sigma2;
            for k in l + 1..m {
                let v = self.sigma2 * (-self.a * self.distance(design, l, k)).exp();
                out[(l, k)] = v;
                out[(k, l)] = v;
            }
        }
        out
    }

    /// Correlation matrix: covariance scaled by 1/sigma2, unit diagonal.
    pub fn correlation_matrix(&self, design: &LatticeDesign) -> DMatrix<f64> {
        let mut out = self.covariance_matrix(design);
        out /= self.sigma2;
        for l in 0..design.site_count() {
            out[(l, l)] = 1.0;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_2x2() {
        let d = make_lattice(&[2, 2]).unwrap();
        assert_eq!(d.sites(), &[vec![1, 1], vec![1, 2], vec![2, 1], vec![2, 2]]);
        let third = 1.0 / 3.0;
        let two_third = 2.0 / 3.0;
        assert_eq!(
            d.coords(),
            &[
                vec![third, third],
                vec![third, two_third],
                vec![two_third, third],
                vec![two_third, two_third]
            ]
        );
    }

    #[test]
    fn lattice_5x5_site_count() {
        assert_eq!(make_lattice(&[5, 5]).unwrap().site_count(), 25);
    }

    #[test]
    fn lattice_1d_coords() {
        let d = make_lattice(&[3]).unwrap();
        assert_eq!(d.coords(), &[vec![0.25], vec![0.5], vec![0.75]]);
    }

    #[test]
    fn lattice_rejects_zero_dim() {
        assert!(make_lattice(&[3, 0]).is_err());
        assert!(make_lattice(&[]).is_err());
    }

    #[test]
    fn lexicographic_order_is_reproducible() {
        let a = make_lattice(&[4, 3, 2]).unwrap();
        let b = make_lattice(&[4, 3, 2]).unwrap();
        assert_eq!(a, b);
        // spot-check ordering: last coordinate varies fastest
        assert_eq!(a.sites()[0], vec![1, 1, 1]);
        assert_eq!(a.sites()[1], vec![1, 1, 2]);
        assert_eq!(a.sites()[2], vec![1, 2, 1]);
    }

    #[test]
    fn offset_set_membership() {
        let d = make_lattice(&[3, 3]).unwrap();
        let members: Vec<usize> = (0..9).filter(|&l| d.in_offset_set(l)).collect();
        // sites with both coordinates >= 2: (2,2),(2,3),(3,2),(3,3)
        assert_eq!(members.len(), 4);
        for &l in &members {
            assert!(d.sites()[l].iter().all(|&c| c >= 2));
        }
    }

    #[test]
    fn covariance_diagonal_and_adjacent() {
        let d = make_lattice(&[3, 3]).unwrap();
        let m = SpatialCovModel::new(1.0, 1.0, NormKind::Chebyshev).unwrap();
        let c = m.covariance_matrix(&d);
        for l in 0..9 {
            assert_eq!(c[(l, l)], 1.0);
        }
        // sites (1,1) and (1,2) are chebyshev-adjacent
        assert!((c[(0, 1)] - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn covariance_a200_vanishes_off_diagonal() {
        let d = make_lattice(&[2, 2]).unwrap();
        let m = SpatialCovModel::new(1.0, 200.0, NormKind::Euclidean).unwrap();
        let c = m.covariance_matrix(&d);
        for l in 0..4 {
            for k in 0..4 {
                if l != k {
                    assert!(c[(l, k)] < 1e-80);
                }
            }
        }
    }

    #[test]
    fn correlation_has_unit_diagonal_and_matches_sigma1() {
        let d = make_lattice(&[4, 2]).unwrap();
        let m = SpatialCovModel::new(3.7, 0.5, NormKind::Euclidean).unwrap();
        let corr = m.correlation_matrix(&d);
        let unit = SpatialCovModel::new(1.0, 0.5, NormKind::Euclidean)
            .unwrap()
            .covariance_matrix(&d);
        for l in 0..8 {
            assert_eq!(corr[(l, l)], 1.0);
            for k in 0..8 {
                assert!((corr[(l, k)] - unit[(l, k)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn correlation_is_psd_on_5x5() {
        let d = make_lattice(&[5, 5]).unwrap();
        for a in [0.1, 1.0, 3.0] {
            for norm in [NormKind::Chebyshev, NormKind::Euclidean] {
                let m = SpatialCovModel::new(1.0, a, norm).unwrap();
                let c = m.correlation_matrix(&d);
                let eig = nalgebra::SymmetricEigen::new(c);
                let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
                assert!(min >= -1e-8, "a={a} norm={norm:?}: min eigenvalue {min}");
            }
        }
    }

    #[test]
    fn covariance_decays_with_distance() {
        let d = make_lattice(&[6]).unwrap();
        let m = SpatialCovModel::new(2.0, 0.7, NormKind::Euclidean).unwrap();
        let c = m.covariance_matrix(&d);
        for k in 1..5 {
            assert!(c[(0, k)] > c[(0, k + 1)]);
        }
    }

    #[test]
    fn irregular_ordinal_distance_and_coordinate_scale() {
        let pts = vec![vec![0.1, 0.2], vec![0.4, 0.6], vec![0.9, 0.1]];
        let d = make_irregular(pts).unwrap();
        assert!(d.is_irregular());
        let m = SpatialCovModel::new(1.0, 1.0, NormKind::Euclidean).unwrap();
        // index mode: ordinal distances 1..n
        assert!((m.distance(&d, 0, 2) - 2.0).abs() < 1e-15);
        let mc = m.with_scale(DistanceScale::Coordinate { factor: 2.0 });
        let expect = 2.0 * ((0.3f64).powi(2) + (0.4f64).powi(2)).sqrt();
        assert!((mc.distance(&d, 0, 1) - expect).abs() < 1e-12);
    }
}
