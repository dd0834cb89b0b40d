//! Sample container shared by the estimation pipeline.

use crate::error::{Error, Result};
use crate::funcdata::{same_grid, FunctionalCurve};
use crate::spatial::LatticeDesign;

/// One dataset: a site design, one curve per site, one scalar response per
/// site, all in design order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub design: LatticeDesign,
    pub curves: Vec<FunctionalCurve>,
    pub responses: Vec<f64>,
}

impl Dataset {
    pub fn new(design: LatticeDesign, curves: Vec<FunctionalCurve>, responses: Vec<f64>) -> Result<Self> {
        let m = design.site_count();
        if curves.len() != m || responses.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{} curves / {} responses for {m} sites",
                curves.len(),
                responses.len()
            )));
        }
        if let Some(first) = curves.first() {
            for c in &curves[1..] {
                if !same_grid(first.grid(), c.grid()) {
                    return Err(Error::DimensionMismatch("curves on different grids".into()));
                }
            }
        }
        if responses.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFinite("responses".into()));
        }
        Ok(Dataset { design, curves, responses })
    }

    pub fn site_count(&self) -> usize {
        self.design.site_count()
    }
}

impl From<crate::simulate::SyntheticDataset> for Dataset {
    fn from(s: crate::simulate::SyntheticDataset) -> Self {
        Dataset {
            design: s.design,
            curves: s.curves,
            responses: s.responses,
        }
    }
}
