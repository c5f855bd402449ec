//! Kullback-Leibler risk of Bayesian spectral estimates: Monte Carlo,
//! asymptotic coefficients, and paired comparisons of two priors.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{geometry_at, laplace_beltrami, metric_at, GeometryTensors, LogDensity, ModelMetric, PriorSpec, ScalarField};
use crate::likelihood::PathSampler;
use crate::linalg::{Cholesky, Matrix};
use crate::model::{SpectralModel, ThetaVector};
use crate::posterior::{
    bayes_spectral_oracle, default_init, expansion_geometric_route, expansion_likelihood_route, fit_mle,
    BayesSpectralEstimate, Corrections, EstimateMethod, FitOptions, OracleConfig, PosteriorSummary,
};
use crate::quadrature::{integrate_refined, FrequencyGrid, QuadratureConfig};
use crate::real::{pairwise_sum, Real};

/// `D(S₀‖Ŝ) = ∫ dω/4π {S₀/Ŝ − 1 − log(S₀/Ŝ)}` on a fixed grid.
pub fn kl_on_grid<T: Real>(grid: &FrequencyGrid<T>, s0: &[T], shat: &[T]) -> Result<T> {
    if s0.len() != grid.len() || shat.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: s0.len().min(shat.len()) });
    }
    let mut terms = Vec::with_capacity(grid.len());
    for (m, ((&a, &b), &w)) in s0.iter().zip(shat).zip(&grid.weights).enumerate() {
        if !(a > T::zero() && b > T::zero() && a.is_finite() && b.is_finite()) {
            return Err(Error::NonPositiveDensity { node: m });
        }
        let d = a / b - T::one();
        terms.push(w * (d - d.ln_1p()).max(T::zero()));
    }
    Ok(pairwise_sum(&terms) / (T::lit(2.0) * T::two_pi()))
}

/// [`kl_on_grid`] with the node count refined per `quad`.
pub fn kl_divergence<T: Real>(s0: impl Fn(T) -> T, shat: impl Fn(T) -> T, quad: &QuadratureConfig) -> Result<T> {
    let (v, _) = integrate_refined(quad, |grid: &FrequencyGrid<T>| {
        let a: Vec<T> = grid.omega.iter().map(|&w| s0(w)).collect();
        let b: Vec<T> = grid.omega.iter().map(|&w| shat(w)).collect();
        Ok(vec![kl_on_grid(grid, &a, &b)?])
    })?;
    Ok(v[0])
}

/// How each replication turns a path into a spectral estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// `S(ω|θ̂)`, prior-free.
    PlugIn,
    ExpansionLikelihood,
    #[serde(alias = "expansion")]
    ExpansionGeometric,
    Oracle,
}

impl Estimator {
    fn needs_information(self) -> bool {
        matches!(self, Self::ExpansionLikelihood | Self::Oracle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskConfig {
    pub quad: QuadratureConfig,
    pub fit: FitOptions,
    pub oracle: OracleConfig,
    /// Trapezoid nodes for the KL integral; `0` takes the refined node count
    /// of the geometry at `θ₀`.
    pub omega_nodes: usize,
    /// Share of failed replications above which a cell aborts.
    pub max_failure_rate: f64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            quad: QuadratureConfig::default(),
            fit: FitOptions::default(),
            oracle: OracleConfig::default(),
            omega_nodes: 0,
            max_failure_rate: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe<T> {
    pub mean: T,
    /// Sample standard deviation over `√reps`.
    pub se: T,
}

impl<T: Real> MeanSe<T> {
    pub fn of(xs: &[T]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: T::nan(), se: T::nan() };
        }
        let nf = T::from_usize_lossy(n);
        let mean = pairwise_sum(xs) / nf;
        if n < 2 {
            return Self { mean, se: T::nan() };
        }
        let dev: Vec<T> = xs.iter().map(|&x| (x - mean) * (x - mean)).collect();
        let sd = (pairwise_sum(&dev) / T::from_usize_lossy(n - 1)).sqrt();
        Self { mean, se: sd / nf.sqrt() }
    }

    /// `mean / se`, taken as zero when both vanish.
    pub fn t_stat(&self) -> T {
        if self.se == T::zero() {
            if self.mean == T::zero() {
                T::zero()
            } else {
                self.mean.signum() * T::infinity()
            }
        } else {
            self.mean / self.se
        }
    }
}

#[derive(Debug, Clone)]
pub struct RiskReport<T> {
    pub theta0: Vec<T>,
    pub prior: PriorSpec<T>,
    pub n: usize,
    /// Replications requested.
    pub reps: usize,
    /// Replications that failed (dropped).
    pub failures: usize,
    pub estimator: Estimator,
    pub mc_risk: MeanSe<T>,
    pub floored_count: usize,
    pub seed: u64,
}

/// Shared per-cell state: true spectrum on the KL grid and a path sampler.
struct Cell<'a, T> {
    model: &'a SpectralModel<T>,
    grid: FrequencyGrid<T>,
    s0: Vec<T>,
    sampler: PathSampler<T>,
    cfg: &'a RiskConfig,
}

impl<'a, T: Real> Cell<'a, T> {
    fn new(model: &'a SpectralModel<T>, theta0: &ThetaVector<T>, n: usize, cfg: &'a RiskConfig) -> Result<Self> {
        theta0.require_validated()?;
        let nodes = match cfg.omega_nodes {
            0 => geometry_at(model, theta0, &cfg.quad)?.nodes,
            m => m,
        };
        let grid = FrequencyGrid::trapezoid(nodes);
        let s0 = grid.omega.iter().map(|&w| model.spectral_density(theta0, w)).collect();
        Ok(Self { model, grid, s0, sampler: PathSampler::new(model, theta0, n)?, cfg })
    }

    /// KL loss of every prior's estimate on replication `rep`, plus floor events.
    fn replicate(&self, priors: &[PriorSpec<T>], estimator: Estimator, seed: u64, rep: u64) -> Result<(Vec<T>, usize)> {
        let x = self.sampler.sample(seed, rep);
        let estimates = estimates_for_priors(self.model, &x, priors, estimator, &self.grid.omega, self.cfg, mix(seed, rep))?;
        let mut floored = 0;
        let losses = estimates
            .iter()
            .map(|e| {
                floored += e.floored;
                kl_on_grid(&self.grid, &self.s0, &e.values)
            })
            .collect::<Result<_>>()?;
        Ok((losses, floored))
    }

    /// Replications `reps` in parallel; results in replication order.
    fn run(&self, priors: &[PriorSpec<T>], estimator: Estimator, seed: u64, reps: std::ops::Range<u64>) -> Vec<Result<(Vec<T>, usize)>> {
        reps.into_par_iter().map(|r| self.replicate(priors, estimator, seed, r)).collect()
    }
}

/// One fit per path, then one estimate per prior.
fn estimates_for_priors<T: Real>(
    model: &SpectralModel<T>,
    x: &[T],
    priors: &[PriorSpec<T>],
    estimator: Estimator,
    omega: &[T],
    cfg: &RiskConfig,
    fit_seed: u64,
) -> Result<Vec<BayesSpectralEstimate<T>>> {
    let opts = FitOptions { information: estimator.needs_information(), seed: fit_seed, ..cfg.fit };
    let init = default_init(model, x)?;
    let fit = fit_mle(model, x, &init, &opts)?;
    let th = &fit.theta_hat;
    match estimator {
        Estimator::PlugIn => {
            let values: Vec<T> = omega.iter().map(|&w| model.spectral_density(th, w)).collect();
            let est = BayesSpectralEstimate {
                omega: omega.to_vec(),
                values,
                method: EstimateMethod::PlugIn,
                floored: 0,
            };
            Ok(vec![est; priors.len()])
        }
        Estimator::ExpansionGeometric => {
            let geo = geometry_at(model, th, &cfg.quad)?;
            priors
                .iter()
                .map(|p| expansion_geometric_route(model, th, x.len(), &geo, p, omega, Corrections::ALL))
                .collect()
        }
        Estimator::ExpansionLikelihood => {
            let Some(first) = priors.first() else { return Ok(Vec::new()) };
            let base = PosteriorSummary::build(model, x, th, first.clone(), &cfg.quad)?;
            priors
                .iter()
                .map(|p| expansion_likelihood_route(model, &base.with_prior(p.clone())?, omega, Corrections::ALL))
                .collect()
        }
        Estimator::Oracle => {
            let j_n = fit.j_n.as_ref().expect("information requested");
            priors
                .iter()
                .map(|p| Ok(bayes_spectral_oracle(model, x, th, j_n, p, omega, &cfg.oracle)?.estimate))
                .collect()
        }
    }
}

/// SplitMix64 finalizer over `a ⊕ mix(b)`.
pub fn mix(a: u64, b: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    splitmix(a ^ splitmix(b))
}

fn check_failures(failed: usize, reps: usize, cfg: &RiskConfig) -> Result<()> {
    if failed as f64 > cfg.max_failure_rate * reps as f64 {
        Err(Error::TooManyFitFailures { failed, reps })
    } else {
        Ok(())
    }
}

/// `E_{θ₀}[D(S₀‖Ŝ)]` by Monte Carlo over `reps` exact paths.
#[allow(clippy::too_many_arguments)]
pub fn mc_risk<T: Real>(
    model: &SpectralModel<T>,
    theta0: &ThetaVector<T>,
    prior: &PriorSpec<T>,
    n: usize,
    reps: usize,
    seed: u64,
    estimator: Estimator,
    cfg: &RiskConfig,
) -> Result<RiskReport<T>> {
    if reps < 2 {
        return Err(Error::InvalidArgument("reps must be at least 2".into()));
    }
    let cell = Cell::new(model, theta0, n, cfg)?;
    let out = cell.run(std::slice::from_ref(prior), estimator, seed, 0..reps as u64);
    let mut losses = Vec::with_capacity(reps);
    let (mut failures, mut floored_count) = (0, 0);
    for r in out {
        match r {
            Ok((l, f)) => {
                losses.push(l[0]);
                floored_count += f;
            }
            Err(_) => failures += 1,
        }
    }
    check_failures(failures, reps, cfg)?;
    Ok(RiskReport {
        theta0: theta0.coords().to_vec(),
        prior: prior.clone(),
        n,
        reps,
        failures,
        estimator,
        mc_risk: MeanSe::of(&losses),
        floored_count,
        seed,
    })
}

/// Per-replication losses of several priors on common paths and fits.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedLosses<T> {
    pub n: usize,
    pub seed: u64,
    pub estimator: Estimator,
    /// One row per successful replication, one column per prior.
    pub losses: Vec<Vec<T>>,
    pub failures: usize,
    pub floored_count: usize,
}

impl<T: Real> PairedLosses<T> {
    pub fn risk(&self, prior: usize) -> MeanSe<T> {
        MeanSe::of(&self.losses.iter().map(|l| l[prior]).collect::<Vec<_>>())
    }

    /// `risk(a) − risk(b)` estimated from paired differences.
    pub fn difference(&self, a: usize, b: usize) -> MeanSe<T> {
        MeanSe::of(&self.losses.iter().map(|l| l[a] - l[b]).collect::<Vec<_>>())
    }
}

/// Replications `0..reps` under `seed`, the same paths a dominance cell with
/// that cell seed draws.
#[allow(clippy::too_many_arguments)]
pub fn paired_losses<T: Real>(
    model: &SpectralModel<T>,
    theta0: &ThetaVector<T>,
    priors: &[PriorSpec<T>],
    n: usize,
    reps: usize,
    seed: u64,
    estimator: Estimator,
    cfg: &RiskConfig,
) -> Result<PairedLosses<T>> {
    if reps < 2 || priors.is_empty() {
        return Err(Error::InvalidArgument("need at least 2 replications and one prior".into()));
    }
    let cell = Cell::new(model, theta0, n, cfg)?;
    let (mut losses, mut failures, mut floored_count) = (Vec::with_capacity(reps), 0, 0);
    for r in cell.run(priors, estimator, seed, 0..reps as u64) {
        match r {
            Ok((l, f)) => {
                losses.push(l);
                floored_count += f;
            }
            Err(_) => failures += 1,
        }
    }
    check_failures(failures, reps, cfg)?;
    Ok(PairedLosses { n, seed, estimator, losses, failures, floored_count })
}

/// `n²`-scaled coefficients of the prior-dependent risk terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticRisk<T> {
    /// `½ g^{ij}F_iF_j + ∇ᵉ_k(g^{kj}F_j)` for the prior.
    pub f_part: T,
    /// The same for `π_J`.
    pub f_part_jeffreys: T,
    /// `½ g^{ij}∂_i log h ∂_j log h − Δh/h` with `h = f/π_J`.
    pub diff_vs_jeffreys: T,
    /// The two summands of `diff_vs_jeffreys`.
    pub components: [T; 2],
}

impl<T: Real> AsymptoticRisk<T> {
    /// `f_part(π_J) − f_part(f)`, the independently computed difference.
    pub fn diff_from_f_parts(&self) -> T {
        self.f_part_jeffreys - self.f_part
    }
}

/// `f/π_J` for a custom prior, as a field.
struct PriorRatio<'a, T: Real> {
    model: &'a SpectralModel<T>,
    density: Arc<dyn LogDensity<T>>,
    quad: QuadratureConfig,
}

impl<T: Real> fmt::Debug for PriorRatio<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PriorRatio({:?})", self.density)
    }
}

impl<T: Real> ScalarField<T> for PriorRatio<'_, T> {
    fn value(&self, theta: &[T]) -> T {
        let jeffreys = metric_at(self.model, theta, &self.quad)
            .and_then(|g| Cholesky::factor(&g))
            .map(|c| T::lit(0.5) * c.log_det());
        match jeffreys {
            Ok(j) => (self.density.log_density(theta) - j).exp(),
            Err(_) => T::nan(),
        }
    }

    fn describe(&self) -> String {
        format!("{} / jeffreys", self.density.describe())
    }
}

fn quadratic_form<T: Real>(m: &Matrix<T>, a: &[T], b: &[T]) -> T {
    let mb = m.matvec(b);
    a.iter().zip(&mb).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `½ g^{ij}F_iF_j + eΓ^l_{lk} g^{kj}F_j + ∂_k(g^{kj}F_j)`, the last term by
/// central differences of the geometry.
fn f_part<T: Real>(model: &SpectralModel<T>, geo: &GeometryTensors<T>, prior: &PriorSpec<T>, quad: &QuadratureConfig) -> Result<T> {
    let k = geo.k();
    let theta = &geo.theta;
    let flux = |g: &GeometryTensors<T>| -> Vec<T> { g.g_inv.matvec(&prior.f_vector(g)) };
    let f = prior.f_vector(geo);
    let v = flux(geo);
    let egr = geo.eg_raised();
    let mut total = T::lit(0.5) * quadratic_form(&geo.g_inv, &f, &f);
    for kk in 0..k {
        let trace = (0..k).fold(T::zero(), |acc, l| acc + egr[(l, l, kk)]);
        total = total + trace * v[kk];
    }
    let two = T::lit(2.0);
    for kk in 0..k {
        let h = crate::geometry::fd_step(theta[kk]);
        let mut up = theta.clone();
        let mut dn = theta.clone();
        up[kk] = up[kk] + h;
        dn[kk] = dn[kk] - h;
        let at = |c: &[T]| -> Result<GeometryTensors<T>> {
            let t = model
                .validate(c)
                .map_err(|_| Error::StencilOutOfDomain { theta: theta.iter().map(|x| x.to_f64_lossy()).collect() })?;
            geometry_at(model, &t, quad)
        };
        total = total + (flux(&at(&up)?)[kk] - flux(&at(&dn)?)[kk]) / (two * h);
    }
    Ok(total)
}

pub fn asymptotic_risk<T: Real>(
    model: &SpectralModel<T>,
    theta0: &ThetaVector<T>,
    prior: &PriorSpec<T>,
    quad: &QuadratureConfig,
) -> Result<AsymptoticRisk<T>> {
    let geo = geometry_at(model, theta0, quad)?;
    let f_part_f = f_part(model, &geo, prior, quad)?;
    let f_part_j = f_part(model, &geo, &PriorSpec::Jeffreys, quad)?;
    let metric = ModelMetric { model, quad: *quad };
    let c = theta0.coords();
    let components = match prior {
        PriorSpec::Jeffreys => [T::zero(), T::zero()],
        PriorSpec::JeffreysTimesH(h) => ratio_components(h.as_ref(), c, &geo, &metric)?,
        PriorSpec::Custom(d) => {
            let ratio = PriorRatio { model, density: d.clone(), quad: *quad };
            ratio_components(&ratio, c, &geo, &metric)?
        }
    };
    Ok(AsymptoticRisk {
        f_part: f_part_f,
        f_part_jeffreys: f_part_j,
        diff_vs_jeffreys: components[0] + components[1],
        components,
    })
}

fn ratio_components<T: Real, F: ScalarField<T> + ?Sized>(
    h: &F,
    theta: &[T],
    geo: &GeometryTensors<T>,
    metric: &ModelMetric<'_, T>,
) -> Result<[T; 2]> {
    let lg = h.log_gradient(theta);
    let grad_term = T::lit(0.5) * quadratic_form(&geo.g_inv, &lg, &lg);
    let lap = laplace_beltrami(h, theta, metric)?;
    Ok([grad_term, -lap / h.value(theta)])
}

/// How many replications a dominance cell runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum RepsRule {
    Fixed { reps: usize },
    /// Run `pilot` paired replications, then size the cell so the predicted
    /// difference `asymptote/n²` would reach `target_t` standard errors.
    /// Clamped to `[min, max]`; the pilot counts toward the total.
    Pilot { pilot: usize, target_t: f64, min: usize, max: usize },
}

impl Default for RepsRule {
    fn default() -> Self {
        Self::Pilot { pilot: 200, target_t: 6.0, min: 400, max: 20_000 }
    }
}

impl RepsRule {
    /// Final replication count from a pilot standard deviation of the paired
    /// difference and the predicted mean difference.
    pub fn size(&self, pilot_sd: f64, predicted: f64) -> usize {
        match *self {
            Self::Fixed { reps } => reps,
            Self::Pilot { pilot, target_t, min, max } => {
                let want = if predicted > 0.0 && pilot_sd.is_finite() {
                    ((target_t * pilot_sd / predicted).powi(2)).ceil()
                } else {
                    0.0
                };
                (want.min(max as f64) as usize).max(min).max(pilot).min(max.max(pilot))
            }
        }
    }

    fn pilot(&self) -> usize {
        match *self {
            Self::Fixed { reps } => reps,
            Self::Pilot { pilot, .. } => pilot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DominanceConfig {
    pub risk: RiskConfig,
    pub estimator: Estimator,
    pub reps: RepsRule,
}

impl Default for DominanceConfig {
    fn default() -> Self {
        Self { risk: RiskConfig::default(), estimator: Estimator::ExpansionGeometric, reps: RepsRule::default() }
    }
}

/// One `n` of a paired Jeffreys-versus-`π_J·h` comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceCell<T> {
    pub n: usize,
    /// Successful paired replications.
    pub reps: usize,
    pub failures: usize,
    pub seed: u64,
    pub risk_jeffreys: MeanSe<T>,
    pub risk_h: MeanSe<T>,
    /// `risk(π_J) − risk(π_J·h)` over common paths.
    pub diff: MeanSe<T>,
    /// Standard error the difference would have from independent arms.
    pub unpaired_se: T,
    pub t_stat: T,
    pub n2_diff: T,
    pub n2_diff_se: T,
    /// Predicted `n²·diff`.
    pub asymptote: T,
    pub floored_count: usize,
}

#[derive(Debug, Clone)]
pub struct DominanceReport<T> {
    pub theta0: Vec<T>,
    pub h: String,
    pub asymptotic: AsymptoticRisk<T>,
    pub cells: Vec<DominanceCell<T>>,
}

/// Paired Monte Carlo risk difference between `π_J` and `π_J·h` at each `n`.
///
/// The superharmonicity of `h` is the caller's precondition.
pub fn dominance_experiment<T: Real>(
    model: &SpectralModel<T>,
    theta0: &ThetaVector<T>,
    h: Arc<dyn ScalarField<T>>,
    n_grid: &[usize],
    seed: u64,
    cfg: &DominanceConfig,
) -> Result<DominanceReport<T>> {
    if n_grid.is_empty() {
        return Err(Error::InvalidArgument("n_grid is empty".into()));
    }
    let priors = [PriorSpec::Jeffreys, PriorSpec::JeffreysTimesH(h.clone())];
    let asymptotic = asymptotic_risk(model, theta0, &priors[1], &cfg.risk.quad)?;
    let cells = n_grid
        .iter()
        .map(|&n| dominance_cell(model, theta0, &priors, n, seed, asymptotic.diff_vs_jeffreys, cfg))
        .collect::<Result<_>>()?;
    Ok(DominanceReport { theta0: theta0.coords().to_vec(), h: h.describe(), asymptotic, cells })
}

fn dominance_cell<T: Real>(
    model: &SpectralModel<T>,
    theta0: &ThetaVector<T>,
    priors: &[PriorSpec<T>],
    n: usize,
    seed: u64,
    asymptote: T,
    cfg: &DominanceConfig,
) -> Result<DominanceCell<T>> {
    let cell_seed = mix(seed, n as u64);
    let cell = Cell::new(model, theta0, n, &cfg.risk)?;
    let pilot = cfg.reps.pilot() as u64;
    let mut out = cell.run(priors, cfg.estimator, cell_seed, 0..pilot);
    let pilot_diffs: Vec<T> = out.iter().flatten().map(|(l, _)| l[0] - l[1]).collect();
    let pilot_sd = MeanSe::of(&pilot_diffs).se.to_f64_lossy() * (pilot_diffs.len() as f64).sqrt();
    let nf = T::from_usize_lossy(n);
    let predicted = (asymptote / (nf * nf)).to_f64_lossy();
    let total = cfg.reps.size(pilot_sd, predicted) as u64;
    if total > pilot {
        out.extend(cell.run(priors, cfg.estimator, cell_seed, pilot..total));
    }
    let (mut rj, mut rh, mut diffs) = (Vec::new(), Vec::new(), Vec::new());
    let (mut failures, mut floored_count) = (0, 0);
    for r in &out {
        match r {
            Ok((l, f)) => {
                rj.push(l[0]);
                rh.push(l[1]);
                diffs.push(l[0] - l[1]);
                floored_count += f;
            }
            Err(_) => failures += 1,
        }
    }
    check_failures(failures, out.len(), &cfg.risk)?;
    let (risk_jeffreys, risk_h, diff) = (MeanSe::of(&rj), MeanSe::of(&rh), MeanSe::of(&diffs));
    let n2 = nf * nf;
    Ok(DominanceCell {
        n,
        reps: diffs.len(),
        failures,
        seed: cell_seed,
        risk_jeffreys,
        risk_h,
        diff,
        unpaired_se: (risk_jeffreys.se * risk_jeffreys.se + risk_h.se * risk_h.se).sqrt(),
        t_stat: diff.t_stat(),
        n2_diff: n2 * diff.mean,
        n2_diff_se: n2 * diff.se,
        asymptote,
        floored_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_constant_fields() {
        let v = kl_divergence(|_| 1.0f64, |_| 2.0, &QuadratureConfig::default()).unwrap();
        assert!((v - 0.5 * (0.5 - 1.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(kl_divergence(|w: f64| 1.0 + 0.5 * w.cos(), |w| 1.0 + 0.5 * w.cos(), &QuadratureConfig::default()).unwrap(), 0.0);
        let grid = FrequencyGrid::<f64>::trapezoid(4);
        assert!(matches!(
            kl_on_grid(&grid, &[1.0; 4], &[1.0, 0.0, 1.0, 1.0]),
            Err(Error::NonPositiveDensity { node: 1 })
        ));
    }

    #[test]
    fn mean_se_and_t() {
        let m = MeanSe::of(&[1.0f64, 2.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert!((m.se - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(MeanSe::of(&[0.0f64; 5]).t_stat(), 0.0);
    }

    #[test]
    fn reps_rule_sizes() {
        let rule = RepsRule::Pilot { pilot: 100, target_t: 4.0, min: 200, max: 5000 };
        assert_eq!(rule.size(1.0, 0.1), 1600);
        assert_eq!(rule.size(1.0, 0.0), 200);
        assert_eq!(rule.size(10.0, 0.01), 5000);
        assert_eq!(RepsRule::Fixed { reps: 7 }.size(1.0, 1.0), 7);
    }
}
