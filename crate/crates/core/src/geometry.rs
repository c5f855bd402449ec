//! Information-geometric tensors of the spectral family, computed by
//! quadrature over frequency.
//!
//! With `ℓ_i = ∂_i log S` and `r_ij = ∂_i∂_j S / S`:
//!
//! | tensor | integrand | measure |
//! |---|---|---|
//! | `g_ij` | `ℓ_i ℓ_j` | `dω/4π` |
//! | `Γ^(m)_{i,jk}` | `ℓ_i r_jk` | `dω/4π` |
//! | `M_{i,jkl}` | `ℓ_i r_jkl` | `dω/4π` |
//! | `N_{ij,kl}` | `r_ij r_kl` | `dω/4π` |
//! | `T_ijk` | `ℓ_i ℓ_j ℓ_k` | `dω/2π` |
//! | `L_{ij,kl}` | `ℓ_i ℓ_j r_kl` | `dω/4π` |
//!
//! and `eΓ_{i,jk} = Γ^(m)_{i,jk} − T_ijk`, `T_i = T_ijk g^jk`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix, Tensor3, Tensor4};
use crate::model::{NodeJet, SpectralModel, ThetaVector};
use crate::quadrature::{integrate_refined, QuadratureConfig};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryTensors<T> {
    pub theta: Vec<T>,
    pub g: Matrix<T>,
    pub g_inv: Matrix<T>,
    /// `Γ^(m)_{i,jk}` at `(i, j, k)`.
    pub gm: Tensor3<T>,
    /// `eΓ_{i,jk}` at `(i, j, k)`.
    pub eg: Tensor3<T>,
    pub t: Tensor3<T>,
    pub t_i: Vec<T>,
    /// `M_{i,jkl}` at `(i, j, k, l)`.
    pub m: Tensor4<T>,
    /// `N_{ij,kl}` at `(i, j, k, l)`.
    pub n: Tensor4<T>,
    /// `L_{ij,kl}` at `(i, j, k, l)`.
    pub l: Tensor4<T>,
    /// Quadrature nodes used after refinement.
    pub nodes: usize,
}

impl<T: Real> GeometryTensors<T> {
    pub fn k(&self) -> usize {
        self.g.rows()
    }

    /// `Γ^(m)_{jk}^i = g^{il} Γ^(m)_{l,jk}`.
    pub fn gm_raised(&self) -> Tensor3<T> {
        raise_first(&self.g_inv, &self.gm)
    }

    /// `eΓ_{jk}^i = g^{il} eΓ_{l,jk}`.
    pub fn eg_raised(&self) -> Tensor3<T> {
        raise_first(&self.g_inv, &self.eg)
    }
}

fn raise_first<T: Real>(g_inv: &Matrix<T>, t: &Tensor3<T>) -> Tensor3<T> {
    let k = t.dim();
    Tensor3::from_fn(k, |i, j, l| (0..k).fold(T::zero(), |acc, m| acc + g_inv[(i, m)] * t[(m, j, l)]))
}

pub fn geometry_at<T: Real>(model: &SpectralModel<T>, theta: &ThetaVector<T>, quad: &QuadratureConfig) -> Result<GeometryTensors<T>> {
    theta.require_validated()?;
    let k = model.dim();
    let (k2, k3, k4) = (k * k, k * k * k, k * k * k * k);
    let (off_gm, off_t, off_m, off_n, off_l) = (k2, k2 + k3, k2 + 2 * k3, k2 + 2 * k3 + k4, k2 + 2 * k3 + 2 * k4);
    let len = k2 + 2 * k3 + 3 * k4;
    let coords = theta.coords();
    let (values, nodes) = integrate_refined(quad, |grid| {
        let mut acc = vec![T::zero(); len];
        let mut jet = NodeJet::default();
        for (&omega, &w) in grid.omega.iter().zip(&grid.weights) {
            model.node_jet(coords, omega, 3, &mut jet);
            let d = &jet.dlog;
            for i in 0..k {
                let wi = w * d[i];
                for j in 0..k {
                    let wij = wi * d[j];
                    acc[i * k + j] = acc[i * k + j] + wij;
                    for l in 0..k {
                        acc[off_gm + (i * k + j) * k + l] = acc[off_gm + (i * k + j) * k + l] + wi * jet.r2[j * k + l];
                        acc[off_t + (i * k + j) * k + l] = acc[off_t + (i * k + j) * k + l] + wij * d[l];
                        for m in 0..k {
                            let idx = ((i * k + j) * k + l) * k + m;
                            acc[off_m + idx] = acc[off_m + idx] + wi * jet.r3[(j * k + l) * k + m];
                            acc[off_n + idx] = acc[off_n + idx] + w * jet.r2[i * k + j] * jet.r2[l * k + m];
                            acc[off_l + idx] = acc[off_l + idx] + wij * jet.r2[l * k + m];
                        }
                    }
                }
            }
        }
        let four_pi = T::lit(2.0) * T::two_pi();
        for (idx, v) in acc.iter_mut().enumerate() {
            let norm = if (off_t..off_m).contains(&idx) { T::two_pi() } else { four_pi };
            *v = *v / norm;
        }
        Ok(acc)
    })?;
    let g = Matrix::from_fn(k, k, |i, j| values[i * k + j]);
    let g_inv = g.inverse_spd()?;
    let t3 = |off: usize| Tensor3::from_fn(k, |i, j, l| values[off + (i * k + j) * k + l]);
    let t4 = |off: usize| Tensor4::from_fn(k, |i, j, l, m| values[off + ((i * k + j) * k + l) * k + m]);
    let gm = t3(off_gm);
    let t = t3(off_t);
    let eg = Tensor3::from_fn(k, |i, j, l| gm[(i, j, l)] - t[(i, j, l)]);
    let t_i = contract_last_two(&t, &g_inv);
    Ok(GeometryTensors {
        theta: coords.to_vec(),
        g,
        g_inv,
        gm,
        eg,
        t,
        t_i,
        m: t4(off_m),
        n: t4(off_n),
        l: t4(off_l),
        nodes,
    })
}

/// `v_i = A_ijk B^jk`.
pub(crate) fn contract_last_two<T: Real>(a: &Tensor3<T>, b: &Matrix<T>) -> Vec<T> {
    let k = a.dim();
    (0..k)
        .map(|i| {
            let mut s = T::zero();
            for j in 0..k {
                for l in 0..k {
                    s = s + a[(i, j, l)] * b[(j, l)];
                }
            }
            s
        })
        .collect()
}

/// The Fisher metric rate `g_ij` alone.
pub fn metric_at<T: Real>(model: &SpectralModel<T>, coords: &[T], quad: &QuadratureConfig) -> Result<Matrix<T>> {
    let k = model.dim();
    let (values, _) = integrate_refined(quad, |grid| {
        let mut acc = vec![T::zero(); k * k];
        let mut jet = NodeJet::default();
        for (&omega, &w) in grid.omega.iter().zip(&grid.weights) {
            model.node_jet(coords, omega, 1, &mut jet);
            for i in 0..k {
                for j in i..k {
                    acc[i * k + j] = acc[i * k + j] + w * jet.dlog[i] * jet.dlog[j];
                }
            }
        }
        let four_pi = T::lit(2.0) * T::two_pi();
        Ok(acc.into_iter().map(|v| v / four_pi).collect())
    })?;
    Ok(Matrix::from_fn(k, k, |i, j| values[i.min(j) * k + i.max(j)]))
}

/// Central-difference step used for outer θ-derivatives.
pub fn fd_step<T: Real>(x: T) -> T {
    T::lit(1e-4) * (T::one() + x.abs())
}

/// A Riemannian metric on (a region of) the parameter space.
pub trait MetricField<T: Real>: Sync {
    fn dim(&self) -> usize;
    fn metric(&self, theta: &[T]) -> Result<Matrix<T>>;
    /// Whether `theta` lies in the region where the metric is defined.
    fn contains(&self, theta: &[T]) -> bool;
}

/// The Euclidean metric `δ_ij` on `R^k`.
#[derive(Debug, Clone, Copy)]
pub struct FlatMetric {
    pub k: usize,
}

impl<T: Real> MetricField<T> for FlatMetric {
    fn dim(&self) -> usize {
        self.k
    }

    fn metric(&self, _: &[T]) -> Result<Matrix<T>> {
        Ok(Matrix::identity(self.k))
    }

    fn contains(&self, theta: &[T]) -> bool {
        theta.iter().all(|v| v.is_finite())
    }
}

/// The Fisher metric of a spectral model, defined on its validated region.
#[derive(Debug, Clone)]
pub struct ModelMetric<'a, T> {
    pub model: &'a SpectralModel<T>,
    pub quad: QuadratureConfig,
}

impl<'a, T: Real> ModelMetric<'a, T> {
    pub fn new(model: &'a SpectralModel<T>) -> Self {
        Self { model, quad: QuadratureConfig::default() }
    }
}

impl<T: Real> MetricField<T> for ModelMetric<'_, T> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn metric(&self, theta: &[T]) -> Result<Matrix<T>> {
        metric_at(self.model, theta, &self.quad)
    }

    fn contains(&self, theta: &[T]) -> bool {
        self.model.validate(theta).is_ok()
    }
}

/// A positive scalar field on the parameter space, used as a prior factor.
pub trait ScalarField<T: Real>: Send + Sync + fmt::Debug {
    fn value(&self, theta: &[T]) -> T;

    /// Central differences unless overridden.
    fn gradient(&self, theta: &[T]) -> Vec<T> {
        let two = T::lit(2.0);
        (0..theta.len())
            .map(|i| {
                let h = fd_step(theta[i]);
                let mut up = theta.to_vec();
                let mut dn = theta.to_vec();
                up[i] = up[i] + h;
                dn[i] = dn[i] - h;
                (self.value(&up) - self.value(&dn)) / (two * h)
            })
            .collect()
    }

    /// `∂_i log h`.
    fn log_gradient(&self, theta: &[T]) -> Vec<T> {
        let v = self.value(theta);
        self.gradient(theta).into_iter().map(|d| d / v).collect()
    }

    fn describe(&self) -> String;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantField<T>(pub T);

impl<T: Real> ScalarField<T> for ConstantField<T> {
    fn value(&self, _: &[T]) -> T {
        self.0
    }

    fn gradient(&self, theta: &[T]) -> Vec<T> {
        vec![T::zero(); theta.len()]
    }

    fn describe(&self) -> String {
        format!("constant {}", self.0)
    }
}

/// `h(θ) = (c + Σ a_i θ_i)^power`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAffineField<T> {
    pub intercept: T,
    pub slopes: Vec<T>,
    pub power: T,
}

impl<T: Real> PowerAffineField<T> {
    pub fn affine(intercept: T, slopes: Vec<T>) -> Self {
        Self { intercept, slopes, power: T::one() }
    }

    fn base(&self, theta: &[T]) -> T {
        self.slopes.iter().zip(theta).fold(self.intercept, |acc, (&a, &x)| acc + a * x)
    }
}

impl<T: Real> ScalarField<T> for PowerAffineField<T> {
    fn value(&self, theta: &[T]) -> T {
        self.base(theta).powf(self.power)
    }

    fn gradient(&self, theta: &[T]) -> Vec<T> {
        let b = self.base(theta);
        let scale = self.power * b.powf(self.power - T::one());
        self.slopes.iter().map(|&a| scale * a).collect()
    }

    fn describe(&self) -> String {
        let terms: Vec<String> = self.slopes.iter().enumerate().map(|(i, a)| format!("{a}·θ{}", i + 1)).collect();
        format!("({} + {})^{}", self.intercept, terms.join(" + "), self.power)
    }
}

/// `h(θ) = (c + bᵀθ + ½ θᵀQθ)^power` with symmetric `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPowerField<T> {
    pub constant: T,
    pub linear: Vec<T>,
    pub quadratic: Matrix<T>,
    pub power: T,
}

impl<T: Real> QuadraticPowerField<T> {
    fn base(&self, theta: &[T]) -> T {
        let qx = self.quadratic.matvec(theta);
        let lin = self.linear.iter().zip(theta).fold(T::zero(), |acc, (&b, &x)| acc + b * x);
        let quad = qx.iter().zip(theta).fold(T::zero(), |acc, (&q, &x)| acc + q * x);
        self.constant + lin + T::lit(0.5) * quad
    }
}

impl<T: Real> ScalarField<T> for QuadraticPowerField<T> {
    fn value(&self, theta: &[T]) -> T {
        self.base(theta).powf(self.power)
    }

    fn gradient(&self, theta: &[T]) -> Vec<T> {
        let scale = self.power * self.base(theta).powf(self.power - T::one());
        let qx = self.quadratic.matvec(theta);
        self.linear.iter().zip(qx).map(|(&b, q)| scale * (b + q)).collect()
    }

    fn describe(&self) -> String {
        format!("({} + {:?}·θ + ½θᵀQθ)^{}", self.constant, self.linear, self.power)
    }
}

/// `h(θ) = exp(c + bᵀθ + ½ θᵀQθ)` with symmetric `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpQuadraticField<T> {
    pub constant: T,
    pub linear: Vec<T>,
    pub quadratic: Matrix<T>,
}

impl<T: Real> ExpQuadraticField<T> {
    fn exponent(&self, theta: &[T]) -> T {
        let half = T::lit(0.5);
        let qx = self.quadratic.matvec(theta);
        let lin = self.linear.iter().zip(theta).fold(T::zero(), |acc, (&b, &x)| acc + b * x);
        let quad = qx.iter().zip(theta).fold(T::zero(), |acc, (&q, &x)| acc + q * x);
        self.constant + lin + half * quad
    }
}

impl<T: Real> ScalarField<T> for ExpQuadraticField<T> {
    fn value(&self, theta: &[T]) -> T {
        self.exponent(theta).exp()
    }

    fn gradient(&self, theta: &[T]) -> Vec<T> {
        let v = self.value(theta);
        self.log_gradient(theta).into_iter().map(|d| d * v).collect()
    }

    fn log_gradient(&self, theta: &[T]) -> Vec<T> {
        let qx = self.quadratic.matvec(theta);
        self.linear.iter().zip(qx).map(|(&b, q)| b + q).collect()
    }

    fn describe(&self) -> String {
        format!("exp({} + {:?}·θ + ½θᵀQθ)", self.constant, self.linear)
    }
}

/// A field given by a closure, differentiated numerically.
pub struct FnField<F> {
    pub f: F,
    pub label: String,
}

impl<F> fmt::Debug for FnField<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnField").field("label", &self.label).finish()
    }
}

impl<T: Real, F: Fn(&[T]) -> T + Send + Sync> ScalarField<T> for FnField<F> {
    fn value(&self, theta: &[T]) -> T {
        (self.f)(theta)
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// A prior log-density known up to an additive constant.
pub trait LogDensity<T: Real>: Send + Sync + fmt::Debug {
    fn log_density(&self, theta: &[T]) -> T;
    fn gradient(&self, theta: &[T]) -> Vec<T>;
    fn describe(&self) -> String;
}

#[derive(Debug, Clone)]
pub enum PriorSpec<T> {
    Jeffreys,
    JeffreysTimesH(Arc<dyn ScalarField<T>>),
    Custom(Arc<dyn LogDensity<T>>),
}

impl<T: Real> PriorSpec<T> {
    pub fn jeffreys_times(h: impl ScalarField<T> + 'static) -> Self {
        Self::JeffreysTimesH(Arc::new(h))
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Jeffreys => "jeffreys".into(),
            Self::JeffreysTimesH(h) => format!("jeffreys × {}", h.describe()),
            Self::Custom(c) => format!("custom {}", c.describe()),
        }
    }

    /// `∂_j log(f/π_J)` at the point where `geo` was evaluated.
    pub fn log_ratio_gradient(&self, geo: &GeometryTensors<T>) -> Vec<T> {
        match self {
            Self::Jeffreys => vec![T::zero(); geo.k()],
            Self::JeffreysTimesH(h) => h.log_gradient(&geo.theta),
            Self::Custom(c) => {
                let j = jeffreys_log_gradient_tensor(geo);
                c.gradient(&geo.theta).into_iter().zip(j).map(|(a, b)| a - b).collect()
            }
        }
    }

    /// `∂_j log f`.
    pub fn log_prior_gradient(&self, geo: &GeometryTensors<T>) -> Vec<T> {
        match self {
            Self::Custom(c) => c.gradient(&geo.theta),
            _ => {
                let j = jeffreys_log_gradient_tensor(geo);
                self.log_ratio_gradient(geo).into_iter().zip(j).map(|(a, b)| a + b).collect()
            }
        }
    }

    /// `F_j = ∂_j log(f/π_J) + ½ T_j`.
    pub fn f_vector(&self, geo: &GeometryTensors<T>) -> Vec<T> {
        let half = T::lit(0.5);
        self.log_ratio_gradient(geo).into_iter().zip(&geo.t_i).map(|(a, &t)| a + half * t).collect()
    }

    /// Unnormalized `log f(θ)`; Jeffreys-based kinds use `½ log det g`.
    pub fn log_density(&self, model: &SpectralModel<T>, theta: &[T], quad: &QuadratureConfig) -> Result<T> {
        let jeffreys = |theta: &[T]| -> Result<T> {
            Ok(T::lit(0.5) * Cholesky::factor(&metric_at(model, theta, quad)?)?.log_det())
        };
        match self {
            Self::Jeffreys => jeffreys(theta),
            Self::JeffreysTimesH(h) => {
                let v = h.value(theta);
                if !(v > T::zero()) {
                    return Err(Error::InvalidArgument(format!("prior factor h must be positive, got {v}")));
                }
                Ok(jeffreys(theta)? + v.ln())
            }
            Self::Custom(c) => Ok(c.log_density(theta)),
        }
    }
}

/// `∂_j log π_J = ∂_j log √det g` by central differences of `log det g`.
pub fn jeffreys_log_gradient<T: Real>(model: &SpectralModel<T>, theta: &ThetaVector<T>, quad: &QuadratureConfig) -> Result<Vec<T>> {
    theta.require_validated()?;
    let c = theta.coords();
    let log_det = |x: &[T]| -> Result<T> {
        if model.validate(x).is_err() {
            return Err(Error::StencilOutOfDomain { theta: c.iter().map(|v| v.to_f64_lossy()).collect() });
        }
        Ok(Cholesky::factor(&metric_at(model, x, quad)?)?.log_det())
    };
    (0..c.len())
        .map(|j| {
            let h = fd_step(c[j]);
            let mut up = c.to_vec();
            let mut dn = c.to_vec();
            up[j] = up[j] + h;
            dn[j] = dn[j] - h;
            Ok((log_det(&up)? - log_det(&dn)?) / (T::lit(4.0) * h))
        })
        .collect()
}

/// `∂_j log π_J = g^{kl} eΓ_{l,jk} + ½ T_j` from the tensors.
pub fn jeffreys_log_gradient_tensor<T: Real>(geo: &GeometryTensors<T>) -> Vec<T> {
    let k = geo.k();
    let half = T::lit(0.5);
    (0..k)
        .map(|j| {
            let mut s = half * geo.t_i[j];
            for a in 0..k {
                for l in 0..k {
                    s = s + geo.g_inv[(a, l)] * geo.eg[(l, j, a)];
                }
            }
            s
        })
        .collect()
}

/// `Δφ = (1/√g) ∂_i(√g g^{ij} ∂_j φ)`, outer derivatives by central
/// differences with step `1e-4·(1 + |θ_i|)`.
pub fn laplace_beltrami<T: Real, M: MetricField<T> + ?Sized, F: ScalarField<T> + ?Sized>(
    field: &F,
    theta: &[T],
    metric: &M,
) -> Result<T> {
    let k = metric.dim();
    if theta.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: theta.len() });
    }
    let out_of_domain = || Error::StencilOutOfDomain { theta: theta.iter().map(|v| v.to_f64_lossy()).collect() };
    if !metric.contains(theta) {
        return Err(out_of_domain());
    }
    // V^i = √g g^{ij} ∂_j φ
    let flux = |x: &[T]| -> Result<(Vec<T>, T)> {
        let g = metric.metric(x)?;
        let chol = Cholesky::factor(&g)?;
        let sqrt_det = (T::lit(0.5) * chol.log_det()).exp();
        let v = chol.solve_vec(&field.gradient(x));
        Ok((v.into_iter().map(|c| c * sqrt_det).collect(), sqrt_det))
    };
    let stencil: Vec<(Vec<T>, Vec<T>, T)> = (0..k)
        .map(|i| {
            let h = fd_step(theta[i]);
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[i] = up[i] + h;
            dn[i] = dn[i] - h;
            (up, dn, h)
        })
        .collect();
    if stencil.iter().any(|(up, dn, _)| !metric.contains(up) || !metric.contains(dn)) {
        return Err(out_of_domain());
    }
    let (_, sqrt_det) = flux(theta)?;
    let two = T::lit(2.0);
    let mut div = T::zero();
    for (i, (up, dn, h)) in stencil.iter().enumerate() {
        div = div + (flux(up)?.0[i] - flux(dn)?.0[i]) / (two * *h);
    }
    Ok(div / sqrt_det)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeCheck<T> {
    pub theta: Vec<T>,
    pub value: T,
    pub laplacian: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperharmonicReport<T> {
    pub nodes: Vec<NodeCheck<T>>,
    /// Largest `Δh` over the grid and where it occurs.
    pub max_laplacian: T,
    pub worst_node: Vec<T>,
    pub min_value: T,
    pub tol: T,
    pub positive: bool,
    pub pass: bool,
}

impl<T: Real> SuperharmonicReport<T> {
    /// `tol − max Δh`; non-negative iff the Laplacian condition holds.
    pub fn margin(&self) -> T {
        self.tol - self.max_laplacian
    }
}

/// Default tolerance for `Δh ≤ tol`.
pub const TOL_SUPER: f64 = 1e-8;

/// Evaluates `h` and `Δh` at every grid node (in parallel). Passes iff
/// `h > 0` and `Δh ≤ tol` everywhere.
pub fn check_superharmonic<T: Real, M: MetricField<T> + ?Sized, F: ScalarField<T> + ?Sized>(
    h: &F,
    grid: &[Vec<T>],
    metric: &M,
    tol: T,
) -> Result<SuperharmonicReport<T>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    let nodes: Vec<NodeCheck<T>> = grid
        .par_iter()
        .map(|x| Ok(NodeCheck { theta: x.clone(), value: h.value(x), laplacian: laplace_beltrami(h, x, metric)? }))
        .collect::<Result<_>>()?;
    let worst = nodes
        .iter()
        .fold(&nodes[0], |w, n| if n.laplacian > w.laplacian { n } else { w });
    let min_value = nodes.iter().fold(T::infinity(), |m, n| m.min(n.value));
    let positive = min_value > T::zero();
    let pass = positive && worst.laplacian <= tol;
    Ok(SuperharmonicReport {
        max_laplacian: worst.laplacian,
        worst_node: worst.theta.clone(),
        min_value,
        tol,
        positive,
        pass,
        nodes,
    })
}

/// Regular grid over the AR(2) stationarity triangle
/// `a₂ + a₁ < 1, a₂ − a₁ < 1, a₂ > −1`, keeping nodes at least `clearance`
/// away from every edge.
pub fn ar2_triangle_grid<T: Real>(per_axis: usize, clearance: f64) -> Vec<Vec<T>> {
    assert!(per_axis >= 2);
    let mut out = Vec::new();
    let sqrt2 = std::f64::consts::SQRT_2;
    for i in 0..per_axis {
        let a1 = -2.0 + 4.0 * i as f64 / (per_axis - 1) as f64;
        for j in 0..per_axis {
            let a2 = -1.0 + 2.0 * j as f64 / (per_axis - 1) as f64;
            let d1 = (1.0 - a1 - a2) / sqrt2;
            let d2 = (1.0 + a1 - a2) / sqrt2;
            let d3 = a2 + 1.0;
            if d1 >= clearance && d2 >= clearance && d3 >= clearance {
                out.push(vec![T::lit(a1), T::lit(a2)]);
            }
        }
    }
    out
}
