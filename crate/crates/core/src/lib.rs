//! Estimation and prediction for the spatial semi-functional linear
//! regression model with derivatives.
//!
//! The model couples a functional linear part, pairing a curve and its first
//! derivative with unknown coefficient functions, with a nonparametric
//! spatial surface over lattice design points and spatially correlated
//! errors. Estimation is two-stage: a ridge-regularized method of moments
//! for the coefficient pair, then a local-linear kernel fit of the residual
//! series for the surface. Hyperparameters come from leave-one-out
//! cross-validation (ridge pair) and generalized cross-validation with a
//! correlated-error correction (bandwidth). The crate also ships the full
//! simulation benchmark for the estimator and prediction at non-visited
//! lattice sites.

pub mod data;
pub mod error;
pub mod funcdata;
pub mod model;
pub mod operators;
pub mod simulate;
pub mod smoother;
pub mod spatial;
pub mod tuning;

pub use data::Dataset;
pub use error::{Error, Result};
pub use funcdata::{
    inner, inner_g, inner_h, numeric_derivative, FunctionalCurve, Grid, SpaceKind,
};
pub use model::{
    fit_sflrd, fit_ssflrd, fitted_surface, fitted_values, holdout_experiment, mse1, mse2,
    predict, prediction_error, run_benchmark, BenchmarkCell, BenchmarkConfig, BenchmarkTable,
    FitSettings, HoldoutOutcome, Prediction, PredictionSite, SmootherConfig, SsflrdFit,
};
pub use operators::{
    adjoint, assemble_schur, build_empirical, regularized_inverse_apply, solve_coefficients,
    tensor_apply, CoefficientEstimates, EmpiricalMoments, GridMetrics, MomentIndexSet,
    MomentVector, OperatorMatrix, RegularizationParams, SchurSystem,
};
pub use simulate::{
    derive_seed, fourier_basis, generate_noise, generate_scenario, generate_scenario_extended,
    noise_covariance, sample_truncated_mvn, HoldoutSite, ScenarioConfig, ScenarioTruth,
    SyntheticDataset,
};
pub use smoother::{
    hat_matrix, local_linear_fit, smooth_surface, KernelFamily, KernelSpec, LocalLinearFit,
};
pub use spatial::{
    make_irregular, make_lattice, DistanceScale, LatticeDesign, NormKind, SpatialCovModel,
};
pub use tuning::{
    cvmsep, cvmsep_grid, gcv, linear_predict, select_bandwidth, select_regularization,
    EstimationOptions, TuningGrid, TuningResult,
};
