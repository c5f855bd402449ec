//! Maximum-likelihood fitting, Gaussian posterior moments, the posterior
//! shift `B_f`, and the Bayesian spectral density `Ŝ_f(ω) = E[S(ω|θ) | X]`
//! by asymptotic expansion or by brute-force θ-quadrature.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{geometry_at, GeometryTensors, PriorSpec};
use crate::likelihood::{
    expected_derivatives, levinson_score, log_likelihood_levinson, log_likelihood_partials, trace_quantities,
};
use crate::linalg::{dot, Cholesky, Matrix, Tensor3, Tensor4};
use crate::model::{SigmaPolicy, SpectralModel, ThetaVector};
use crate::quadrature::QuadratureConfig;
use crate::real::{pairwise_sum, Real};
use crate::toeplitz::levinson;

/// Expansion estimates below this value are clamped to it.
pub const DENSITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Bound on the max-norm of the normalized score `∂l_n/n`.
    pub tol_grad: f64,
    pub max_iter: usize,
    /// Extra attempts from jittered starting points.
    pub restarts: usize,
    /// Jitter scale, relative to `1 + |θ_i|`.
    pub jitter: f64,
    pub seed: u64,
    /// Compute `J_n` from exact second derivatives (`O(n³)`).
    pub information: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tol_grad: 1e-8, max_iter: 200, restarts: 4, jitter: 0.1, seed: 0, information: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit<T> {
    pub theta_hat: ThetaVector<T>,
    pub log_likelihood: T,
    /// Max-norm of the normalized score at `θ̂`.
    pub grad_norm: T,
    pub iterations: usize,
    /// Jittered restarts used before success.
    pub restarts: usize,
    /// Observed information `J_n = −(1/n)∂²l_n(θ̂)`.
    pub j_n: Option<Matrix<T>>,
}

/// Data-driven starting point: Yule-Walker for the AR part, zero MA part,
/// and the innovation variance for a free σ coordinate.
pub fn default_init<T: Real>(model: &SpectralModel<T>, x: &[T]) -> Result<ThetaVector<T>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two observations".into()));
    }
    let p = model.p();
    let nf = T::from_usize_lossy(n);
    let acov: Vec<T> = (0..=p.min(n - 1)).map(|h| dot(&x[..n - h], &x[h..]) / nf).collect();
    let mut coords = vec![T::zero(); model.dim()];
    let mut innovation = acov[0];
    if p > 0 && p < n && acov[0] > T::zero() {
        let lev = levinson(&acov, None)?;
        coords[..p].copy_from_slice(&lev.predictor);
        innovation = lev.last_variance;
    }
    if !(innovation > T::zero()) {
        innovation = T::one();
    }
    match model.sigma_policy() {
        SigmaPolicy::Fixed(_) => {}
        SigmaPolicy::FreeLogVariance => *coords.last_mut().expect("σ coordinate") = innovation.ln(),
        SigmaPolicy::FreeSpectralLevel => *coords.last_mut().expect("σ coordinate") = innovation / T::two_pi(),
    }
    for _ in 0..200 {
        if let Ok(t) = model.validate(&coords) {
            return Ok(t);
        }
        for c in &mut coords[..p] {
            *c = *c * T::lit(0.9);
        }
    }
    model.validate(&coords)
}

/// Local maximizer of `l_n` by BFGS on `−l_n/n` with a backtracking line
/// search that shrinks any step leaving the validated region.
pub fn fit_mle<T: Real>(model: &SpectralModel<T>, x: &[T], init: &ThetaVector<T>, opts: &FitOptions) -> Result<MleFit<T>> {
    init.require_validated()?;
    if init.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: init.dim() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut last_err = Error::DidNotConverge { iterations: 0, grad_norm: f64::NAN };
    for attempt in 0..=opts.restarts {
        let start = if attempt == 0 {
            init.coords().to_vec()
        } else {
            match jitter(model, init.coords(), opts.jitter, &mut rng) {
                Some(s) => s,
                None => continue,
            }
        };
        let run = match bfgs(model, x, start, opts) {
            Ok(r) => r,
            Err(e) => {
                last_err = e;
                continue;
            }
        };
        let j_n = if opts.information {
            match observed_information(model, &run.theta, x) {
                Ok(j) => Some(j),
                Err(e) => {
                    last_err = e;
                    continue;
                }
            }
        } else {
            None
        };
        return Ok(MleFit {
            theta_hat: run.theta,
            log_likelihood: run.log_likelihood,
            grad_norm: run.grad_norm,
            iterations: run.iterations,
            restarts: attempt,
            j_n,
        });
    }
    Err(last_err)
}

/// `J_n = −L_ij(θ)`; fails with `HessianNotPd` unless positive definite.
pub fn observed_information<T: Real>(model: &SpectralModel<T>, theta: &ThetaVector<T>, x: &[T]) -> Result<Matrix<T>> {
    let d = log_likelihood_partials(model, theta, x, 2)?;
    let j = d.l_ij.expect("second order requested").scale(-T::one());
    Cholesky::factor(&j).map_err(|_| Error::HessianNotPd)?;
    Ok(j)
}

fn jitter<T: Real>(model: &SpectralModel<T>, center: &[T], scale: f64, rng: &mut ChaCha8Rng) -> Option<Vec<T>> {
    for _ in 0..50 {
        let c: Vec<T> = center
            .iter()
            .map(|&v| {
                let z: f64 = StandardNormal.sample(rng);
                v + T::lit(z * scale) * (T::one() + v.abs())
            })
            .collect();
        if model.validate(&c).is_ok() {
            return Some(c);
        }
    }
    None
}

struct BfgsRun<T> {
    theta: ThetaVector<T>,
    log_likelihood: T,
    grad_norm: T,
    iterations: usize,
}

fn max_abs<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &a| m.max(a.abs()))
}

fn bfgs<T: Real>(model: &SpectralModel<T>, x: &[T], start: Vec<T>, opts: &FitOptions) -> Result<BfgsRun<T>> {
    let k = model.dim();
    let nf = T::from_usize_lossy(x.len());
    let eval = |c: &[T]| -> Option<(ThetaVector<T>, T, Vec<T>)> {
        let th = model.validate(c).ok()?;
        let ls = levinson_score(model, &th, x).ok()?;
        if !ls.log_likelihood.is_finite() {
            return None;
        }
        let g = ls.score.iter().map(|&s| -s).collect();
        Some((th, -ls.log_likelihood / nf, g))
    };
    let (mut theta, mut f, mut g) = eval(&start).ok_or(Error::DidNotConverge { iterations: 0, grad_norm: f64::NAN })?;
    let tol = T::lit(opts.tol_grad);
    let max_step = T::one();
    let mut h = Matrix::identity(k);
    let mut fresh = true;
    for it in 0..opts.max_iter {
        let gn = max_abs(&g);
        if gn <= tol {
            return Ok(BfgsRun { theta, log_likelihood: -f * nf, grad_norm: gn, iterations: it });
        }
        let mut d: Vec<T> = h.matvec(&g).into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &d);
        if !(slope < T::zero()) {
            h = Matrix::identity(k);
            fresh = true;
            d = g.iter().map(|&v| -v).collect();
            slope = dot(&g, &d);
        }
        let mut alpha = T::one().min(max_step / max_abs(&d));
        let slack = T::lit(1e-12) * (T::one() + f.abs());
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<T> = theta.coords().iter().zip(&d).map(|(&c, &di)| c + alpha * di).collect();
            if let Some((tt, ft, gt)) = eval(&trial) {
                let armijo = ft <= f + T::lit(1e-4) * alpha * slope;
                let flat = ft <= f + slack && max_abs(&gt) < gn;
                if armijo || flat {
                    accepted = Some((tt, ft, gt));
                    break;
                }
            }
            alpha = alpha * T::lit(0.5);
        }
        let Some((tt, ft, gt)) = accepted else {
            if fresh {
                return Err(Error::DidNotConverge { iterations: it, grad_norm: gn.to_f64_lossy() });
            }
            h = Matrix::identity(k);
            fresh = true;
            continue;
        };
        let s: Vec<T> = tt.coords().iter().zip(theta.coords()).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = gt.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > T::lit(1e-14) * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                h = Matrix::identity(k).scale(sy / dot(&y, &y));
            }
            let rho = T::one() / sy;
            let hy = h.matvec(&y);
            let yhy = dot(&y, &hy);
            let c = rho * rho * yhy + rho;
            h = Matrix::from_fn(k, k, |i, j| h[(i, j)] - rho * (s[i] * hy[j] + hy[i] * s[j]) + c * s[i] * s[j]);
            fresh = false;
        }
        theta = tt;
        f = ft;
        g = gt;
    }
    Err(Error::DidNotConverge { iterations: opts.max_iter, grad_norm: max_abs(&g).to_f64_lossy() })
}

/// Second and fourth moments of `N(0, J_n⁻¹/n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments<T> {
    pub n: usize,
    /// `I^{ij} = (J_n⁻¹)_{ij}/n`.
    pub i2: Matrix<T>,
    /// `I^{ijkl}` by Isserlis pairing of `I2`.
    pub i4: Option<Tensor4<T>>,
}

impl<T: Real> GaussianMoments<T> {
    /// `E[Δθ^{i_1}⋯Δθ^{i_p}]` for any order; zero when `p` is odd.
    pub fn moment(&self, idx: &[usize]) -> T {
        isserlis(&self.i2, idx)
    }
}

/// Gaussian product moment `E[z_{i_1}⋯z_{i_p}]` for covariance `cov`.
pub fn isserlis<T: Real>(cov: &Matrix<T>, idx: &[usize]) -> T {
    match idx.len() {
        0 => T::one(),
        p if p % 2 == 1 => T::zero(),
        _ => {
            let (first, rest) = (idx[0], &idx[1..]);
            let mut acc = T::zero();
            for j in 0..rest.len() {
                let others: Vec<usize> = rest.iter().enumerate().filter(|&(m, _)| m != j).map(|(_, &v)| v).collect();
                acc = acc + cov[(first, rest[j])] * isserlis(cov, &others);
            }
            acc
        }
    }
}

/// `orders` must be a subset of `{2, 4}`; `I2` is always returned.
pub fn gaussian_moments<T: Real>(j_n: &Matrix<T>, n: usize, orders: &[usize]) -> Result<GaussianMoments<T>> {
    if let Some(&bad) = orders.iter().find(|&&o| o != 2 && o != 4) {
        return Err(Error::InvalidArgument(format!("moment order {bad} is not one of 2, 4")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let k = j_n.rows();
    let chol = Cholesky::factor(j_n).map_err(|_| Error::SingularMatrix)?;
    let inv = chol.solve_mat(&Matrix::identity(k));
    let nf = T::from_usize_lossy(n);
    let half = T::lit(0.5);
    let i2 = Matrix::from_fn(k, k, |i, j| half * (inv[(i, j)] + inv[(j, i)]) / nf);
    let i4 = orders.contains(&4).then(|| {
        Tensor4::from_fn(k, |a, b, c, d| i2[(a, b)] * i2[(c, d)] + i2[(a, c)] * i2[(b, d)] + i2[(a, d)] * i2[(b, c)])
    });
    Ok(GaussianMoments { n, i2, i4 })
}

/// `B^i = (n/3!) L_abc I^{abci} + I^{ia} ∂_a log f`.
pub fn shift_formula<T: Real>(l_ijk: &Tensor3<T>, moments: &GaussianMoments<T>, log_prior_gradient: &[T]) -> Result<Vec<T>> {
    let i4 = moments
        .i4
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("posterior shift needs fourth moments".into()))?;
    let k = moments.i2.rows();
    if log_prior_gradient.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: log_prior_gradient.len() });
    }
    let c = T::from_usize_lossy(moments.n) / T::lit(6.0);
    Ok((0..k)
        .map(|i| {
            let mut cubic = T::zero();
            for a in 0..k {
                for b in 0..k {
                    for d in 0..k {
                        cubic = cubic + l_ijk[(a, b, d)] * i4[(a, b, d, i)];
                    }
                }
            }
            let prior = (0..k).fold(T::zero(), |acc, a| acc + moments.i2[(i, a)] * log_prior_gradient[a]);
            c * cubic + prior
        })
        .collect())
}

/// Everything the likelihood-route expansion needs at `θ̂`.
#[derive(Debug, Clone)]
pub struct PosteriorSummary<T> {
    pub theta_hat: ThetaVector<T>,
    pub n: usize,
    pub j_n: Matrix<T>,
    pub moments: GaussianMoments<T>,
    /// `L_ijk(θ̂)`.
    pub l_ijk: Tensor3<T>,
    /// Geometry at `θ̂`, used for Jeffreys-based prior gradients.
    pub geometry: GeometryTensors<T>,
    pub prior: PriorSpec<T>,
    pub log_prior_gradient: Vec<T>,
    pub b_f: Vec<T>,
}

impl<T: Real> PosteriorSummary<T> {
    pub fn build(
        model: &SpectralModel<T>,
        x: &[T],
        theta_hat: &ThetaVector<T>,
        prior: PriorSpec<T>,
        quad: &QuadratureConfig,
    ) -> Result<Self> {
        let d = log_likelihood_partials(model, theta_hat, x, 3)?;
        let j_n = d.l_ij.expect("second order requested").scale(-T::one());
        Cholesky::factor(&j_n).map_err(|_| Error::HessianNotPd)?;
        let moments = gaussian_moments(&j_n, x.len(), &[2, 4])?;
        let l_ijk = d.l_ijk.expect("third order requested");
        let geometry = geometry_at(model, theta_hat, quad)?;
        let log_prior_gradient = prior.log_prior_gradient(&geometry);
        let b_f = shift_formula(&l_ijk, &moments, &log_prior_gradient)?;
        Ok(Self { theta_hat: theta_hat.clone(), n: x.len(), j_n, moments, l_ijk, geometry, prior, log_prior_gradient, b_f })
    }

    /// Same data and fit under another prior; only `B_f` changes.
    pub fn with_prior(&self, prior: PriorSpec<T>) -> Result<Self> {
        let log_prior_gradient = prior.log_prior_gradient(&self.geometry);
        let b_f = shift_formula(&self.l_ijk, &self.moments, &log_prior_gradient)?;
        Ok(Self { prior, log_prior_gradient, b_f, ..self.clone() })
    }
}

/// `B_f` at `θ̂` for data `x`.
pub fn posterior_shift<T: Real>(
    model: &SpectralModel<T>,
    x: &[T],
    theta_hat: &ThetaVector<T>,
    prior: &PriorSpec<T>,
    quad: &QuadratureConfig,
) -> Result<Vec<T>> {
    Ok(PosteriorSummary::build(model, x, theta_hat, prior.clone(), quad)?.b_f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpansionRoute {
    /// `S + ∂_iS B^i + ½∂_ijS I^{ij}` with observed `L_ijk` and `J_n`.
    Likelihood,
    /// `S + (1/2n)g^{ij}(∂_ijS − Γ^(m)k_ij ∂_kS) + (1/n)g^{ij}F_i∂_jS`.
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    PlugIn,
    Expansion(ExpansionRoute),
    OracleQuadrature,
}

/// Which `O(1/n)` terms of an expansion to include.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Corrections {
    /// The first-derivative (mean shift) term.
    pub shift: bool,
    /// The second-derivative (posterior spread) term.
    pub curvature: bool,
}

impl Corrections {
    pub const ALL: Self = Self { shift: true, curvature: true };
    pub const NONE: Self = Self { shift: false, curvature: false };
}

impl Default for Corrections {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesSpectralEstimate<T> {
    pub omega: Vec<T>,
    pub values: Vec<T>,
    pub method: EstimateMethod,
    /// Nodes clamped to [`DENSITY_FLOOR`].
    pub floored: usize,
}

impl<T: Real> BayesSpectralEstimate<T> {
    fn expansion(omega: &[T], raw: Vec<T>, route: ExpansionRoute) -> Self {
        let floor = T::lit(DENSITY_FLOOR);
        let mut floored = 0;
        let values = raw
            .into_iter()
            .map(|v| {
                if v < floor || !v.is_finite() {
                    floored += 1;
                    floor
                } else {
                    v
                }
            })
            .collect();
        Self { omega: omega.to_vec(), values, method: EstimateMethod::Expansion(route), floored }
    }
}

/// Likelihood route from a built summary.
pub fn expansion_likelihood_route<T: Real>(
    model: &SpectralModel<T>,
    summary: &PosteriorSummary<T>,
    omega: &[T],
    corr: Corrections,
) -> Result<BayesSpectralEstimate<T>> {
    let k = model.dim();
    let half = T::lit(0.5);
    let raw = omega
        .iter()
        .map(|&w| {
            let e = model.spectral_partials(&summary.theta_hat, w, 2)?;
            let mut v = e.value;
            if corr.shift {
                v = v + dot(&e.grad, &summary.b_f);
            }
            if corr.curvature {
                v = v + half * e.hess.trace_of_product(&summary.moments.i2);
            }
            debug_assert_eq!(e.grad.len(), k);
            Ok(v)
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(BayesSpectralEstimate::expansion(omega, raw, ExpansionRoute::Likelihood))
}

/// Geometric shift `b^k = (1/n) g^{kj}F_j − (1/2n) g^{ij} Γ^(m)k_ij`.
pub fn geometric_shift<T: Real>(geo: &GeometryTensors<T>, prior: &PriorSpec<T>, n: usize) -> Vec<T> {
    let k = geo.k();
    let nf = T::from_usize_lossy(n);
    let f = prior.f_vector(geo);
    let gmr = geo.gm_raised();
    (0..k)
        .map(|a| {
            let lin = (0..k).fold(T::zero(), |acc, j| acc + geo.g_inv[(a, j)] * f[j]);
            let mut conn = T::zero();
            for i in 0..k {
                for j in 0..k {
                    conn = conn + geo.g_inv[(i, j)] * gmr[(a, i, j)];
                }
            }
            (lin - T::lit(0.5) * conn) / nf
        })
        .collect()
}

/// Geometric route at `θ̂` from the tensors there; no data beyond `n`.
pub fn expansion_geometric_route<T: Real>(
    model: &SpectralModel<T>,
    theta_hat: &ThetaVector<T>,
    n: usize,
    geo: &GeometryTensors<T>,
    prior: &PriorSpec<T>,
    omega: &[T],
    corr: Corrections,
) -> Result<BayesSpectralEstimate<T>> {
    let b = geometric_shift(geo, prior, n);
    let curv_scale = T::lit(0.5) / T::from_usize_lossy(n);
    let raw = omega
        .iter()
        .map(|&w| {
            let e = model.spectral_partials(theta_hat, w, 2)?;
            let mut v = e.value;
            if corr.shift {
                v = v + dot(&e.grad, &b);
            }
            if corr.curvature {
                v = v + curv_scale * e.hess.trace_of_product(&geo.g_inv);
            }
            Ok(v)
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(BayesSpectralEstimate::expansion(omega, raw, ExpansionRoute::Geometric))
}

/// Both expansion routes for one dataset.
#[derive(Debug, Clone)]
pub struct SpectralExpansion<T> {
    pub likelihood: BayesSpectralEstimate<T>,
    pub geometric: BayesSpectralEstimate<T>,
    pub summary: PosteriorSummary<T>,
}

impl<T: Real> SpectralExpansion<T> {
    pub fn route(&self, route: ExpansionRoute) -> &BayesSpectralEstimate<T> {
        match route {
            ExpansionRoute::Likelihood => &self.likelihood,
            ExpansionRoute::Geometric => &self.geometric,
        }
    }
}

pub fn bayes_spectral_expansion<T: Real>(
    model: &SpectralModel<T>,
    x: &[T],
    theta_hat: &ThetaVector<T>,
    prior: &PriorSpec<T>,
    omega: &[T],
    quad: &QuadratureConfig,
) -> Result<SpectralExpansion<T>> {
    let summary = PosteriorSummary::build(model, x, theta_hat, prior.clone(), quad)?;
    let likelihood = expansion_likelihood_route(model, &summary, omega, Corrections::ALL)?;
    let geometric =
        expansion_geometric_route(model, theta_hat, x.len(), &summary.geometry, prior, omega, Corrections::ALL)?;
    Ok(SpectralExpansion { likelihood, geometric, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Half-width of the θ box in posterior standard deviations.
    pub span_sd: f64,
    /// Nodes per axis on the first level (`0`: 33 for k = 1, else 17).
    pub start_nodes: usize,
    /// Cap on nodes per axis (`0`: 1025, 129, 33 for k = 1, 2, 3).
    pub max_nodes: usize,
    /// Stop when doubling changes every output by less than `tol·max(1, |v|)`.
    pub tol: f64,
    /// The box is intersected with the region of reciprocal roots inside
    /// `1/(1 + region_margin)`.
    pub region_margin: f64,
    /// Width (in SDs) of the layer whose posterior mass counts as boundary mass.
    pub boundary_layer_sd: f64,
    /// Boundary mass above this flags the result as truncated.
    pub truncation_tol: f64,
    pub quad: QuadratureConfig,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            span_sd: 8.0,
            start_nodes: 0,
            max_nodes: 0,
            tol: 1e-10,
            region_margin: 0.01,
            boundary_layer_sd: 0.5,
            truncation_tol: 1e-6,
            quad: QuadratureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleEstimate<T> {
    pub estimate: BayesSpectralEstimate<T>,
    pub posterior_mean: Vec<T>,
    /// Largest share, over θ-mass and each `S(ω|θ)`-weighted mass, held in
    /// the boundary layer of the integration region.
    pub boundary_mass: T,
    pub truncated: bool,
    /// Whether the last doubling met `tol`. Otherwise the change is within the
    /// boundary mass or the result is flagged truncated.
    pub converged: bool,
    pub change: T,
    pub nodes_per_axis: usize,
}

impl<T: Real> OracleEstimate<T> {
    pub fn require_untruncated(self) -> Result<Self> {
        if self.truncated {
            Err(Error::OracleRegionTruncated { mass: self.boundary_mass.to_f64_lossy() })
        } else {
            Ok(self)
        }
    }
}

/// Normalizes `f(θ)·exp(l_n(θ))` on a tensor trapezoid grid over
/// `θ̂ ± span·sd`, doubling the grid until the outputs settle.
pub fn bayes_spectral_oracle<T: Real>(
    model: &SpectralModel<T>,
    x: &[T],
    theta_hat: &ThetaVector<T>,
    j_n: &Matrix<T>,
    prior: &PriorSpec<T>,
    omega: &[T],
    cfg: &OracleConfig,
) -> Result<OracleEstimate<T>> {
    theta_hat.require_validated()?;
    let k = model.dim();
    if k > 3 {
        return Err(Error::InvalidArgument(format!("oracle quadrature supports k ≤ 3, got {k}")));
    }
    let moments = gaussian_moments(j_n, x.len(), &[2])?;
    let sd: Vec<T> = (0..k).map(|i| moments.i2[(i, i)].sqrt()).collect();
    let start = if cfg.start_nodes > 0 { cfg.start_nodes } else if k == 1 { 33 } else { 17 };
    let cap = if cfg.max_nodes > 0 { cfg.max_nodes } else { [1025, 129, 33][k - 1] };
    if start < 3 || start % 2 == 0 {
        return Err(Error::InvalidArgument("oracle start_nodes must be odd and at least 3".into()));
    }
    let mut levels = 0;
    while (start - 1) << (levels + 1) < cap {
        levels += 1;
    }
    let finest = ((start - 1) << levels) + 1;
    let span = T::lit(cfg.span_sd);
    let lo: Vec<T> = (0..k).map(|i| theta_hat.coords()[i] - span * sd[i]).collect();
    let fine_step: Vec<T> = (0..k).map(|i| T::lit(2.0) * span * sd[i] / T::from_usize_lossy(finest - 1)).collect();
    let region = model.clone().with_root_margin(T::lit(cfg.region_margin));
    let mut cache: HashMap<Vec<usize>, Option<T>> = HashMap::new();
    let mut prev: Option<Vec<T>> = None;
    let mut result = None;
    for level in 0..=levels {
        let m = ((start - 1) << level) + 1;
        let stride = 1usize << (levels - level);
        let total = m.pow(k as u32);
        let mut log_w: Vec<Option<T>> = Vec::with_capacity(total);
        let mut points: Vec<Vec<T>> = Vec::with_capacity(total);
        for flat in 0..total {
            let idx = unflatten(flat, m, k);
            let global: Vec<usize> = idx.iter().map(|&i| i * stride).collect();
            let coords: Vec<T> = (0..k).map(|i| lo[i] + T::from_usize_lossy(global[i]) * fine_step[i]).collect();
            let lw = match cache.get(&global) {
                Some(v) => *v,
                None => {
                    let v = if region.validate(&coords).is_ok() {
                        let th = model.validate(&coords)?;
                        Some(log_likelihood_levinson(model, &th, x)? + prior.log_density(model, &coords, &cfg.quad)?)
                    } else {
                        None
                    };
                    cache.insert(global, v);
                    v
                }
            };
            log_w.push(lw);
            points.push(coords);
        }
        let peak = log_w.iter().flatten().fold(T::neg_infinity(), |a, &b| a.max(b));
        if !peak.is_finite() {
            return Err(Error::InvalidArgument("oracle grid has no valid node".into()));
        }
        let weights: Vec<T> = (0..total)
            .map(|flat| match log_w[flat] {
                Some(lw) => {
                    let edge = unflatten(flat, m, k)
                        .iter()
                        .filter(|&&i| i == 0 || i == m - 1)
                        .fold(T::one(), |acc, _| acc * T::lit(0.5));
                    edge * (lw - peak).exp()
                }
                None => T::zero(),
            })
            .collect();
        let z = pairwise_sum(&weights);
        let mean: Vec<T> =
            (0..k).map(|i| pairwise_sum(&weights.iter().zip(&points).map(|(&w, p)| w * p[i]).collect::<Vec<_>>()) / z).collect();
        let layer = ((cfg.boundary_layer_sd / (2.0 * cfg.span_sd)) * (m - 1) as f64).ceil().max(1.0) as usize;
        let edge: Vec<bool> = (0..total)
            .map(|flat| weights[flat] > T::zero() && near_boundary(flat, m, k, layer, &log_w))
            .collect();
        let edge_fraction = |terms: &[T]| -> T {
            let b: Vec<T> = terms.iter().zip(&edge).map(|(&t, &e)| if e { t } else { T::zero() }).collect();
            pairwise_sum(&b) / pairwise_sum(terms)
        };
        // θ-mass and the S-weighted mass of every output, whichever is largest
        let mut boundary_mass = edge_fraction(&weights);
        let values: Vec<T> = omega
            .iter()
            .map(|&w| {
                let terms: Vec<T> = weights
                    .iter()
                    .zip(&points)
                    .map(|(&wt, p)| if wt > T::zero() { wt * model.density_at(p, w) } else { T::zero() })
                    .collect();
                boundary_mass = boundary_mass.max(edge_fraction(&terms));
                pairwise_sum(&terms) / z
            })
            .collect();
        let outputs: Vec<T> = values.iter().chain(&mean).copied().collect();
        let change = match &prev {
            Some(p) => p
                .iter()
                .zip(&outputs)
                .map(|(&a, &b)| (a - b).abs() / T::one().max(b.abs()))
                .fold(T::zero(), T::max),
            None => T::infinity(),
        };
        let converged = change <= T::lit(cfg.tol);
        let truncated = boundary_mass > T::lit(cfg.truncation_tol);
        result = Some(OracleEstimate {
            estimate: BayesSpectralEstimate {
                omega: omega.to_vec(),
                values,
                method: EstimateMethod::OracleQuadrature,
                floored: 0,
            },
            posterior_mean: mean,
            boundary_mass,
            truncated,
            converged,
            change,
            nodes_per_axis: m,
        });
        if converged {
            break;
        }
        prev = Some(outputs);
    }
    let out = result.expect("at least one level");
    // the region cut leaves an O(step) residual bounded by the boundary mass
    if !out.converged && !out.truncated && out.change > out.boundary_mass {
        return Err(Error::QuadratureNotConverged { nodes: out.nodes_per_axis, change: out.change.to_f64_lossy() });
    }
    Ok(out)
}

fn unflatten(mut flat: usize, m: usize, k: usize) -> Vec<usize> {
    let mut idx = vec![0; k];
    for slot in idx.iter_mut().rev() {
        *slot = flat % m;
        flat /= m;
    }
    idx
}

/// Within `layer` grid steps of the box edge or of an excluded node.
fn near_boundary<T>(flat: usize, m: usize, k: usize, layer: usize, log_w: &[Option<T>]) -> bool {
    let idx = unflatten(flat, m, k);
    if idx.iter().any(|&i| i < layer || i + layer >= m) {
        return true;
    }
    let mut stride = 1;
    for _ in 0..k {
        for r in 1..=layer {
            if log_w[flat - r * stride].is_none() || log_w[flat + r * stride].is_none() {
                return true;
            }
        }
        stride *= m;
    }
    false
}

/// First-order MLE bias `E[θ̂ − θ₀]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MleBias<T> {
    pub n: usize,
    /// `(1/n) m^{il} m^{jk} (n·m_{lj,k} + ½ m_{ljk})` from finite-n traces.
    pub finite_n: Vec<T>,
    /// `−(1/2n) Γ^(m)i_jk g^{jk}`.
    pub geometric: Vec<T>,
}

pub fn mle_bias<T: Real>(
    model: &SpectralModel<T>,
    theta0: &ThetaVector<T>,
    n: usize,
    quad: &QuadratureConfig,
) -> Result<MleBias<T>> {
    let k = model.dim();
    let nf = T::from_usize_lossy(n);
    let half = T::lit(0.5);
    let ed = expected_derivatives(&trace_quantities(model, theta0, n)?)?;
    let mi = &ed.m_inv;
    let finite_n = (0..k)
        .map(|i| {
            let mut acc = T::zero();
            for l in 0..k {
                for j in 0..k {
                    for c in 0..k {
                        acc = acc + mi[(i, l)] * mi[(j, c)] * (ed.n_m_ij_k[(l, j, c)] + half * ed.m_ijk[(l, j, c)]);
                    }
                }
            }
            acc / nf
        })
        .collect();
    let geo = geometry_at(model, theta0, quad)?;
    let gmr = geo.gm_raised();
    let geometric = (0..k)
        .map(|i| {
            let mut acc = T::zero();
            for j in 0..k {
                for c in 0..k {
                    acc = acc + gmr[(i, j, c)] * geo.g_inv[(j, c)];
                }
            }
            -half * acc / nf
        })
        .collect();
    Ok(MleBias { n, finite_n, geometric })
}
