//! Flat key-value run configuration: `key = value` lines, `#` comments,
//! unknown keys rejected, CLI flags override file values, and the fully
//! resolved map is echoed into every output for provenance.

use std::collections::BTreeMap;
use std::path::Path;

use ssflrd_core::{
    EstimationOptions, KernelFamily, KernelSpec, MomentIndexSet, NormKind, SpaceKind,
    SpatialCovModel, TuningGrid,
};

use crate::errors::{CliError, CliResult};

pub const FORMAT_VERSION: &str = "1.0";

const KNOWN_KEYS: &[&str] = &[
    "command",
    "seed",
    "workers",
    "p",
    "n",
    "a",
    "replications",
    "n-basis",
    "noise-scale",
    "kernel",
    "cov-a",
    "cov-sigma2",
    "cov-norm",
    "coord-scale",
    "phi-inner-product",
    "moment-index-set",
    "psi-grid",
    "w-grid",
    "h-grid",
    "model",
    "plot",
    "benchmark-ns",
    "benchmark-a",
    "curves",
    "responses",
    "fit",
    "actual",
    "out",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelKind {
    Ssflrd,
    Sflrd,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Ssflrd => "ssflrd",
            ModelKind::Sflrd => "sflrd",
        }
    }
}

/// Resolved configuration with defaults applied.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: Option<usize>,
    pub p: usize,
    pub n: usize,
    pub a: f64,
    pub replications: usize,
    pub n_basis: usize,
    pub noise_scale: f64,
    pub kernel_family: KernelFamily,
    pub cov_a: Option<f64>,
    pub cov_sigma2: f64,
    pub cov_norm: NormKind,
    pub coord_scale: f64,
    pub phi_space: SpaceKind,
    pub index_set: MomentIndexSet,
    pub psi_grid: Vec<f64>,
    pub w_grid: Vec<f64>,
    pub h_grid: Vec<f64>,
    pub model: ModelKind,
    pub plot: bool,
    pub benchmark_ns: Vec<usize>,
    pub benchmark_a: Vec<f64>,
    pub curves: Option<String>,
    pub responses: Option<String>,
    pub fit: Option<String>,
    pub actual: Option<String>,
    pub out: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let default_grid = TuningGrid::default_grid();
        RunConfig {
            seed: 0,
            workers: None,
            p: 366,
            n: 5,
            a: 1.0,
            replications: 100,
            n_basis: 15,
            noise_scale: 0.01,
            kernel_family: KernelFamily::EpanechnikovRadial,
            cov_a: None,
            cov_sigma2: 1.0,
            cov_norm: NormKind::Chebyshev,
            coord_scale: 1.0,
            phi_space: SpaceKind::H,
            index_set: MomentIndexSet::Offset,
            psi_grid: default_grid.psi_values.clone(),
            w_grid: default_grid.w_values.clone(),
            h_grid: default_grid.h_values,
            model: ModelKind::Ssflrd,
            plot: false,
            benchmark_ns: vec![5, 10],
            benchmark_a: vec![0.1, 1.0, 3.0, 200.0],
            curves: None,
            responses: None,
            fit: None,
            actual: None,
            out: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.trim()
        .parse::<T>()
        .map_err(|_| CliError::Config(format!("invalid value for {key}: {v:?}")))
}

fn parse_list_f64(key: &str, v: &str) -> CliResult<Vec<f64>> {
    v.split(',')
        .map(|s| parse_num::<f64>(key, s))
        .collect::<CliResult<Vec<f64>>>()
        .and_then(|list| {
            if list.iter().any(|x| !x.is_finite()) {
                Err(CliError::Config(format!("non-finite entry in {key}: {v:?}")))
            } else {
                Ok(list)
            }
        })
}

fn parse_list_usize(key: &str, v: &str) -> CliResult<Vec<usize>> {
    v.split(',').map(|s| parse_num::<usize>(key, s)).collect()
}

fn parse_bool(key: &str, v: &str) -> CliResult<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(CliError::Config(format!("invalid boolean for {key}: {other:?}"))),
    }
}

impl RunConfig {
    /// Apply one key-value pair. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::Config(format!("unknown configuration key {key:?}")));
        }
        let v = value.trim();
        match key {
            "command" => {} // informational; the subcommand decides
            "seed" => self.seed = parse_num(key, v)?,
            "workers" => self.workers = Some(parse_num(key, v)?),
            "p" => self.p = parse_num(key, v)?,
            "n" => self.n = parse_num(key, v)?,
            "a" => self.a = parse_num(key, v)?,
            "replications" => self.replications = parse_num(key, v)?,
            "n-basis" => self.n_basis = parse_num(key, v)?,
            "noise-scale" => self.noise_scale = parse_num(key, v)?,
            "kernel" => {
                self.kernel_family = match v {
                    "radial" => KernelFamily::EpanechnikovRadial,
                    "product" => KernelFamily::EpanechnikovProduct,
                    other => {
                        return Err(CliError::Config(format!(
                            "kernel must be radial or product, got {other:?}"
                        )))
                    }
                }
            }
            "cov-a" => self.cov_a = Some(parse_num(key, v)?),
            "cov-sigma2" => self.cov_sigma2 = parse_num(key, v)?,
            "cov-norm" => {
                self.cov_norm = match v {
                    "chebyshev" => NormKind::Chebyshev,
                    "euclidean" => NormKind::Euclidean,
                    other => {
                        return Err(CliError::Config(format!(
                            "cov-norm must be chebyshev or euclidean, got {other:?}"
                        )))
                    }
                }
            }
            "coord-scale" => self.coord_scale = parse_num(key, v)?,
            "phi-inner-product" => {
                self.phi_space = match v {
                    "H" => SpaceKind::H,
                    "G" => SpaceKind::G,
                    other => {
                        return Err(CliError::Config(format!(
                            "phi-inner-product must be H or G, got {other:?}"
                        )))
                    }
                }
            }
            "moment-index-set" => {
                self.index_set = match v {
                    "offset" => MomentIndexSet::Offset,
                    "full" => MomentIndexSet::Full,
                    other => {
                        return Err(CliError::Config(format!(
                            "moment-index-set must be offset or full, got {other:?}"
                        )))
                    }
                }
            }
            "psi-grid" => self.psi_grid = parse_list_f64(key, v)?,
            "w-grid" => self.w_grid = parse_list_f64(key, v)?,
            "h-grid" => {
                self.h_grid = if v.is_empty() { vec![] } else { parse_list_f64(key, v)? }
            }
            "model" => {
                self.model = match v {
                    "ssflrd" => ModelKind::Ssflrd,
                    "sflrd" => ModelKind::Sflrd,
                    other => {
                        return Err(CliError::Config(format!(
                            "model must be ssflrd or sflrd, got {other:?}"
                        )))
                    }
                }
            }
            "plot" => self.plot = parse_bool(key, v)?,
            "benchmark-ns" => self.benchmark_ns = parse_list_usize(key, v)?,
            "benchmark-a" => self.benchmark_a = parse_list_f64(key, v)?,
            "curves" => self.curves = Some(v.to_string()),
            "responses" => self.responses = Some(v.to_string()),
            "fit" => self.fit = Some(v.to_string()),
            "actual" => self.actual = Some(v.to_string()),
            "out" => self.out = Some(v.to_string()),
            _ => unreachable!(),
        }
        Ok(())
    }

    /// Load `key = value` lines from a config file.
    pub fn load_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(&format!("reading config {}", path.display()), e))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!(
                    "{}:{}: expected `key = value`, got {raw:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// Structural validation after all overrides.
    pub fn validate(&self) -> CliResult<()> {
        if self.p < 3 {
            return Err(CliError::Config(format!("p must be >= 3, got {}", self.p)));
        }
        if self.n < 2 {
            return Err(CliError::Config(format!("n must be >= 2, got {}", self.n)));
        }
        if !(self.a > 0.0) || !(self.cov_sigma2 > 0.0) {
            return Err(CliError::Config("a and cov-sigma2 must be positive".into()));
        }
        if let Some(ca) = self.cov_a {
            if !(ca > 0.0) {
                return Err(CliError::Config("cov-a must be positive".into()));
            }
        }
        if !(self.noise_scale >= 0.0) {
            return Err(CliError::Config("noise-scale must be nonnegative".into()));
        }
        if !(self.coord_scale > 0.0) {
            return Err(CliError::Config("coord-scale must be positive".into()));
        }
        if self.n_basis < 1 || self.n_basis > 15 {
            return Err(CliError::Config(format!("n-basis must be in 1..=15, got {}", self.n_basis)));
        }
        if self.replications < 2 {
            return Err(CliError::Config("replications must be >= 2".into()));
        }
        self.tuning_grid()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.benchmark_ns.is_empty() || self.benchmark_ns.iter().any(|&n| n < 2) {
            return Err(CliError::Config("benchmark-ns must list lattice sides >= 2".into()));
        }
        if self.benchmark_a.is_empty() || self.benchmark_a.iter().any(|&a| !(a > 0.0)) {
            return Err(CliError::Config("benchmark-a must list positive decays".into()));
        }
        Ok(())
    }

    pub fn tuning_grid(&self) -> TuningGrid {
        TuningGrid {
            psi_values: self.psi_grid.clone(),
            w_values: self.w_grid.clone(),
            h_values: if self.model == ModelKind::Sflrd {
                vec![]
            } else {
                self.h_grid.clone()
            },
        }
    }

    pub fn kernel(&self, dimension: usize) -> CliResult<KernelSpec> {
        KernelSpec::new(self.kernel_family, dimension).map_err(|e| CliError::Config(e.to_string()))
    }

    /// The assumed error-correlation model for GCV; `cov-a` falls back to
    /// the scenario decay `a`.
    pub fn cov_model(&self) -> CliResult<SpatialCovModel> {
        SpatialCovModel::new(self.cov_sigma2, self.cov_a.unwrap_or(self.a), self.cov_norm)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn estimation_options(&self) -> EstimationOptions {
        EstimationOptions {
            phi_space: self.phi_space,
            index_set: self.index_set,
        }
    }

    /// Fully resolved key-value echo for output provenance.
    pub fn resolved(&self, command: &str) -> BTreeMap<String, String> {
        let fmt_f = |v: f64| format!("{v}");
        let fmt_list_f = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        let fmt_list_u = |v: &[usize]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        let mut m = BTreeMap::new();
        m.insert("command".into(), command.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m.insert(
            "workers".into(),
            self.workers.map(|w| w.to_string()).unwrap_or_else(|| "auto".into()),
        );
        m.insert("p".into(), self.p.to_string());
        m.insert("n".into(), self.n.to_string());
        m.insert("a".into(), fmt_f(self.a));
        m.insert("replications".into(), self.replications.to_string());
        m.insert("n-basis".into(), self.n_basis.to_string());
        m.insert("noise-scale".into(), fmt_f(self.noise_scale));
        m.insert(
            "kernel".into(),
            match self.kernel_family {
                KernelFamily::EpanechnikovRadial => "radial".into(),
                KernelFamily::EpanechnikovProduct => "product".into(),
            },
        );
        m.insert("cov-a".into(), fmt_f(self.cov_a.unwrap_or(self.a)));
        m.insert("cov-sigma2".into(), fmt_f(self.cov_sigma2));
        m.insert(
            "cov-norm".into(),
            match self.cov_norm {
                NormKind::Chebyshev => "chebyshev".into(),
                NormKind::Euclidean => "euclidean".into(),
            },
        );
        m.insert("coord-scale".into(), fmt_f(self.coord_scale));
        m.insert(
            "phi-inner-product".into(),
            match self.phi_space {
                SpaceKind::H => "H".into(),
                SpaceKind::G => "G".into(),
            },
        );
        m.insert(
            "moment-index-set".into(),
            match self.index_set {
                MomentIndexSet::Offset => "offset".into(),
                MomentIndexSet::Full => "full".into(),
            },
        );
        m.insert("psi-grid".into(), fmt_list_f(&self.psi_grid));
        m.insert("w-grid".into(), fmt_list_f(&self.w_grid));
        m.insert("h-grid".into(), fmt_list_f(&self.h_grid));
        m.insert("model".into(), self.model.as_str().into());
        m.insert("plot".into(), self.plot.to_string());
        m.insert("benchmark-ns".into(), fmt_list_u(&self.benchmark_ns));
        m.insert("benchmark-a".into(), fmt_list_f(&self.benchmark_a));
        m
    }
}
