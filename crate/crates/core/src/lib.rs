//! Bayesian spectral density estimation for Gaussian ARMA processes.
//!
//! The crate compares Bayesian spectral estimates under the Jeffreys prior
//! `π_J ∝ √det g` and under superharmonic modifications `π_J·h`, measured by
//! the Kullback-Leibler spectral divergence.
//!
//! * [`model`]: the ARMA spectral family and its autocovariances.
//! * [`likelihood`]: exact Gaussian likelihood, derivatives, path sampling,
//!   and finite-`n` trace quantities.
//! * [`geometry`]: Fisher metric, connections, Laplace-Beltrami operator,
//!   superharmonicity checks and prior specifications.
//! * [`posterior`]: MLE fitting, Gaussian posterior moments, the Bayesian
//!   spectral density by expansion and by quadrature, MLE bias.
//! * [`risk`]: KL divergence, Monte Carlo and asymptotic risk, paired
//!   dominance experiments.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the aliases below fix
//! `f64`.

pub mod error;
pub mod geometry;
pub mod likelihood;
pub mod linalg;
pub mod model;
pub mod posterior;
pub mod quadrature;
pub mod real;
pub mod risk;
pub mod toeplitz;

pub use error::{Error, Result};
pub use geometry::{
    check_superharmonic, geometry_at, laplace_beltrami, ConstantField, ExpQuadraticField, PowerAffineField, PriorSpec,
    QuadraticPowerField, ScalarField,
};
pub use model::{SigmaPolicy, SpectralModel, ThetaVector};
pub use posterior::{bayes_spectral_expansion, bayes_spectral_oracle, fit_mle, gaussian_moments, mle_bias, posterior_shift};
pub use quadrature::QuadratureConfig;
pub use real::Real;
pub use risk::{asymptotic_risk, dominance_experiment, kl_divergence, mc_risk, paired_losses, Estimator};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Model = SpectralModel<f64>;
pub type Theta = ThetaVector<f64>;
pub type Prior = PriorSpec<f64>;
pub type Matrix = linalg::Matrix<f64>;
pub type Geometry = geometry::GeometryTensors<f64>;
pub type Fit = posterior::MleFit<f64>;
pub type Estimate = posterior::BayesSpectralEstimate<f64>;
pub type Summary = posterior::PosteriorSummary<f64>;
pub type RiskReport = risk::RiskReport<f64>;
pub type DominanceReport = risk::DominanceReport<f64>;
pub type SuperharmonicReport = geometry::SuperharmonicReport<f64>;
