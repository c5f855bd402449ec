//! The ARMA(p, q) spectral family.
//!
//! Convention: `S(ω|θ) = σ²/(2π) · |1 + Σ b_j e^{-ijω}|² / |1 − Σ a_j e^{-ijω}|²`
//! and `γ(h) = ∫_{-π}^{π} e^{ihω} S(ω|θ) dω`, so the `(s, t)` entry of the
//! sample covariance is exactly `γ(|s − t|)`.
//!
//! Coordinates are ordered `(a_1..a_p, b_1..b_q, [σ coordinate])`.

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Tensor3};
use crate::real::Real;

/// How the innovation variance enters the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum SigmaPolicy<T> {
    /// σ² is known and equal to the given positive value.
    Fixed(T),
    /// The last coordinate is `log σ²`.
    FreeLogVariance,
    /// The last coordinate is the spectral level `σ²/(2π)`; with `p = q = 0`
    /// this is the constant-spectrum family `S(ω|θ) = θ`.
    FreeSpectralLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel<T> {
    p: usize,
    q: usize,
    sigma: SigmaPolicy<T>,
    root_margin: T,
}

/// A point of the parameter space. Only [`SpectralModel::validate`] produces
/// values with `validated == true`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVector<T> {
    coords: Vec<T>,
    validated: bool,
    pole_radius: T,
}

impl<T: Real> ThetaVector<T> {
    pub fn raw(coords: Vec<T>) -> Self {
        Self { coords, validated: false, pole_radius: T::zero() }
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn is_validated(&self) -> bool {
        self.validated
    }

    /// Largest modulus among the reciprocal AR roots; governs how fast the
    /// autocovariances decay.
    pub fn pole_radius(&self) -> T {
        self.pole_radius
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub(crate) fn require_validated(&self) -> Result<()> {
        if self.validated {
            Ok(())
        } else {
            Err(Error::NotValidated)
        }
    }
}

/// Value and coordinate partials of `S(ω|θ)` at a single frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEval<T> {
    pub value: T,
    pub grad: Vec<T>,
    pub hess: Matrix<T>,
    pub third: Option<Tensor3<T>>,
}

/// Log-derivative jet of the spectral density at one frequency:
/// `∂_i log S`, `∂_i∂_j S / S` and `∂_i∂_j∂_l S / S` (flattened row-major).
#[derive(Debug, Clone, Default)]
pub(crate) struct NodeJet<T> {
    pub s: T,
    pub dlog: Vec<T>,
    pub r2: Vec<T>,
    pub r3: Vec<T>,
    u2: Vec<T>,
    u3: Vec<T>,
}

/// Autocovariances and their coordinate partials for lags `0..=max_lag`;
/// `d2` and `d3` are full (symmetric) row-major index arrays of lag vectors.
#[derive(Debug, Clone)]
pub struct AutocovPartials<T> {
    pub gamma: Vec<T>,
    pub d1: Vec<Vec<T>>,
    pub d2: Vec<Vec<T>>,
    pub d3: Vec<Vec<T>>,
    pub nodes: usize,
}

impl<T: Real> AutocovPartials<T> {
    pub fn k(&self) -> usize {
        self.d1.len()
    }

    pub fn second(&self, i: usize, j: usize) -> &[T] {
        &self.d2[i * self.k() + j]
    }

    pub fn third(&self, i: usize, j: usize, l: usize) -> &[T] {
        let k = self.k();
        &self.d3[(i * k + j) * k + l]
    }
}

impl<T: Real> SpectralModel<T> {
    pub fn arma(p: usize, q: usize, sigma: SigmaPolicy<T>) -> Result<Self> {
        if let SigmaPolicy::Fixed(s2) = sigma {
            if !(s2 > T::zero() && s2.is_finite()) {
                return Err(Error::InvalidArgument(format!("fixed σ² must be positive, got {s2}")));
            }
        }
        let model = Self { p, q, sigma, root_margin: T::lit(1e-6) };
        if model.dim() == 0 {
            return Err(Error::EmptyModel);
        }
        Ok(model)
    }

    pub fn ar(p: usize, sigma2: T) -> Result<Self> {
        Self::arma(p, 0, SigmaPolicy::Fixed(sigma2))
    }

    pub fn ma(q: usize, sigma2: T) -> Result<Self> {
        Self::arma(0, q, SigmaPolicy::Fixed(sigma2))
    }

    /// The constant-spectrum family `S(ω|θ) = θ`.
    pub fn constant_spectrum() -> Self {
        Self::arma(0, 0, SigmaPolicy::FreeSpectralLevel).expect("one free coordinate")
    }

    pub fn with_root_margin(mut self, margin: T) -> Self {
        self.root_margin = margin;
        self
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn sigma_policy(&self) -> SigmaPolicy<T> {
        self.sigma
    }

    pub fn root_margin(&self) -> T {
        self.root_margin
    }

    /// Parameter dimension `k`.
    pub fn dim(&self) -> usize {
        self.p + self.q + usize::from(!matches!(self.sigma, SigmaPolicy::Fixed(_)))
    }

    pub fn validate(&self, coords: &[T]) -> Result<ThetaVector<T>> {
        self.validate_params(ThetaVector::raw(coords.to_vec()))
    }

    /// Checks stationarity and invertibility with the configured root margin.
    pub fn validate_params(&self, theta: ThetaVector<T>) -> Result<ThetaVector<T>> {
        let k = self.dim();
        if theta.coords.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: theta.coords.len() });
        }
        if theta.coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coordinate".into()));
        }
        let bound = T::one() / (T::one() + self.root_margin);
        let ar: Vec<T> = theta.coords[..self.p].iter().map(|&a| -a).collect();
        let ar_radius = reciprocal_root_radius(&ar);
        if ar_radius >= bound {
            return Err(Error::NonStationary { modulus: 1.0 / ar_radius.to_f64_lossy() });
        }
        let ma_radius = reciprocal_root_radius(&theta.coords[self.p..self.p + self.q]);
        if ma_radius >= bound {
            return Err(Error::NonInvertible { modulus: 1.0 / ma_radius.to_f64_lossy() });
        }
        if let SigmaPolicy::FreeSpectralLevel = self.sigma {
            let level = theta.coords[k - 1];
            if level <= T::zero() {
                return Err(Error::InvalidLevel(level.to_f64_lossy()));
            }
        }
        Ok(ThetaVector { coords: theta.coords, validated: true, pole_radius: ar_radius })
    }

    /// Innovation variance σ² at `coords`.
    pub fn sigma2(&self, coords: &[T]) -> T {
        match self.sigma {
            SigmaPolicy::Fixed(s2) => s2,
            SigmaPolicy::FreeLogVariance => coords[self.dim() - 1].exp(),
            SigmaPolicy::FreeSpectralLevel => T::two_pi() * coords[self.dim() - 1],
        }
    }

    fn poly_moduli(&self, coords: &[T], omega: T) -> (T, T) {
        let (mut ar_re, mut ar_im) = (T::one(), T::zero());
        for (j, &a) in coords[..self.p].iter().enumerate() {
            let jw = T::from_usize_lossy(j + 1) * omega;
            ar_re = ar_re - a * jw.cos();
            ar_im = ar_im + a * jw.sin();
        }
        let (mut ma_re, mut ma_im) = (T::one(), T::zero());
        for (j, &b) in coords[self.p..self.p + self.q].iter().enumerate() {
            let jw = T::from_usize_lossy(j + 1) * omega;
            ma_re = ma_re + b * jw.cos();
            ma_im = ma_im - b * jw.sin();
        }
        (ar_re * ar_re + ar_im * ar_im, ma_re * ma_re + ma_im * ma_im)
    }

    /// `S(ω|θ)` in power per radian.
    pub fn spectral_density(&self, theta: &ThetaVector<T>, omega: T) -> T {
        self.density_at(&theta.coords, omega)
    }

    pub(crate) fn density_at(&self, coords: &[T], omega: T) -> T {
        let (qa, qb) = self.poly_moduli(coords, omega);
        self.sigma2(coords) / T::two_pi() * qb / qa
    }

    /// Analytic partials of `S(ω|θ)` up to `max_order` (1..=3).
    pub fn spectral_partials(&self, theta: &ThetaVector<T>, omega: T, max_order: usize) -> Result<SpectralEval<T>> {
        if max_order == 0 || max_order > 3 {
            return Err(Error::OrderUnsupported(max_order));
        }
        let k = self.dim();
        let mut jet = NodeJet::default();
        self.node_jet(&theta.coords, omega, max_order, &mut jet);
        let s = jet.s;
        let grad = jet.dlog.iter().map(|&d| s * d).collect();
        let hess = if max_order >= 2 {
            Matrix::from_fn(k, k, |i, j| s * jet.r2[i * k + j])
        } else {
            Matrix::zeros(k, k)
        };
        let third = (max_order == 3).then(|| Tensor3::from_fn(k, |i, j, l| s * jet.r3[(i * k + j) * k + l]));
        Ok(SpectralEval { value: s, grad, hess, third })
    }

    /// Fills `jet` with the log-derivative jet at `omega`, up to `order`.
    pub(crate) fn node_jet(&self, coords: &[T], omega: T, order: usize, jet: &mut NodeJet<T>) {
        let k = self.dim();
        let (p, q) = (self.p, self.q);
        jet.dlog.clear();
        jet.dlog.resize(k, T::zero());
        if order >= 2 {
            jet.u2.clear();
            jet.u2.resize(k * k, T::zero());
        }
        if order >= 3 {
            jet.u3.clear();
            jet.u3.resize(k * k * k, T::zero());
        }
        let two = T::lit(2.0);

        // AR block: u = -log|A|², ∂|A|²/∂a_i = 2(-Re A cos iω + Im A sin iω),
        // ∂²|A|²/∂a_i∂a_j = 2 cos((i-j)ω).
        let (mut ar_re, mut ar_im) = (T::one(), T::zero());
        let mut cs = Vec::with_capacity(p.max(q));
        for j in 0..p.max(q) {
            let jw = T::from_usize_lossy(j + 1) * omega;
            cs.push((jw.cos(), jw.sin()));
        }
        for (j, &a) in coords[..p].iter().enumerate() {
            ar_re = ar_re - a * cs[j].0;
            ar_im = ar_im + a * cs[j].1;
        }
        let qa = ar_re * ar_re + ar_im * ar_im;
        let (mut ma_re, mut ma_im) = (T::one(), T::zero());
        for (j, &b) in coords[p..p + q].iter().enumerate() {
            ma_re = ma_re + b * cs[j].0;
            ma_im = ma_im - b * cs[j].1;
        }
        let qb = ma_re * ma_re + ma_im * ma_im;
        jet.s = self.sigma2(coords) / T::two_pi() * qb / qa;

        let ar_d1: Vec<T> = (0..p).map(|i| two * (-ar_re * cs[i].0 + ar_im * cs[i].1)).collect();
        let ma_d1: Vec<T> = (0..q).map(|i| two * (ma_re * cs[i].0 - ma_im * cs[i].1)).collect();
        let cos_diff = |i: usize, j: usize| two * (T::from_usize_lossy(i.abs_diff(j)) * omega).cos();

        // log-derivatives of a quadratic form Q with first partials d1 and second partials c(i,j)
        let block = |offset: usize, len: usize, quad: T, d1: &[T], sign: T, jet: &mut NodeJet<T>| {
            let inv = T::one() / quad;
            for i in 0..len {
                jet.dlog[offset + i] = sign * d1[i] * inv;
            }
            if order >= 2 {
                for i in 0..len {
                    for j in 0..len {
                        let v = cos_diff(i, j) * inv - d1[i] * d1[j] * inv * inv;
                        jet.u2[(offset + i) * k + offset + j] = sign * v;
                    }
                }
            }
            if order >= 3 {
                let inv2 = inv * inv;
                let inv3 = inv2 * inv;
                for i in 0..len {
                    for j in 0..len {
                        for l in 0..len {
                            let v = -(cos_diff(i, j) * d1[l] + cos_diff(i, l) * d1[j] + cos_diff(j, l) * d1[i]) * inv2
                                + two * d1[i] * d1[j] * d1[l] * inv3;
                            jet.u3[((offset + i) * k + offset + j) * k + offset + l] = sign * v;
                        }
                    }
                }
            }
        };
        block(0, p, qa, &ar_d1, -T::one(), jet);
        block(p, q, qb, &ma_d1, T::one(), jet);

        if k > p + q {
            let s_idx = k - 1;
            match self.sigma {
                SigmaPolicy::FreeLogVariance => {
                    jet.dlog[s_idx] = T::one();
                }
                SigmaPolicy::FreeSpectralLevel => {
                    let inv = T::one() / coords[s_idx];
                    jet.dlog[s_idx] = inv;
                    if order >= 2 {
                        jet.u2[s_idx * k + s_idx] = -inv * inv;
                    }
                    if order >= 3 {
                        jet.u3[(s_idx * k + s_idx) * k + s_idx] = two * inv * inv * inv;
                    }
                }
                SigmaPolicy::Fixed(_) => unreachable!("fixed σ has no coordinate"),
            }
        }

        // ∂²S/S = u_ij + u_i u_j; ∂³S/S = u_ijl + u_ij u_l + u_il u_j + u_jl u_i + u_i u_j u_l
        if order >= 2 {
            jet.r2.clear();
            jet.r2.resize(k * k, T::zero());
            for i in 0..k {
                for j in 0..k {
                    jet.r2[i * k + j] = jet.u2[i * k + j] + jet.dlog[i] * jet.dlog[j];
                }
            }
        }
        if order >= 3 {
            jet.r3.clear();
            jet.r3.resize(k * k * k, T::zero());
            let d = &jet.dlog;
            for i in 0..k {
                for j in 0..k {
                    for l in 0..k {
                        jet.r3[(i * k + j) * k + l] = jet.u3[(i * k + j) * k + l]
                            + jet.u2[i * k + j] * d[l]
                            + jet.u2[i * k + l] * d[j]
                            + jet.u2[j * k + l] * d[i]
                            + d[i] * d[j] * d[l];
                    }
                }
            }
        }
    }

    /// Exact autocovariances `γ(0..=max_lag)` from the ARMA difference
    /// equation: a small linear system for the first `max(p, q) + 1` lags,
    /// then the homogeneous AR recursion.
    pub fn autocovariances(&self, theta: &ThetaVector<T>, max_lag: usize) -> Vec<T> {
        let (p, q) = (self.p, self.q);
        let c = &theta.coords;
        let a = &c[..p];
        let b: Vec<T> = std::iter::once(T::one()).chain(c[p..p + q].iter().copied()).collect();
        let s2 = self.sigma2(c);

        let mut psi = vec![T::zero(); q + 1];
        for j in 0..=q {
            let mut v = b[j];
            for i in 1..=j.min(p) {
                v = v + a[i - 1] * psi[j - i];
            }
            psi[j] = v;
        }

        let r = p.max(q);
        let mut sys = Matrix::zeros(r + 1, r + 1);
        let mut rhs = vec![T::zero(); r + 1];
        for lag in 0..=r {
            sys[(lag, lag)] = sys[(lag, lag)] + T::one();
            for (j, &aj) in a.iter().enumerate() {
                let idx = lag.abs_diff(j + 1);
                sys[(lag, idx)] = sys[(lag, idx)] - aj;
            }
            let mut v = T::zero();
            for j in lag..=q {
                v = v + b[j] * psi[j - lag];
            }
            rhs[lag] = s2 * v;
        }
        let head = sys.solve(&rhs).expect("ARMA autocovariance system is nonsingular on the validated region");

        let mut gamma = Vec::with_capacity(max_lag + 1);
        for h in 0..=max_lag {
            if h <= r {
                gamma.push(head[h]);
            } else {
                let mut v = T::zero();
                for (j, &aj) in a.iter().enumerate() {
                    v = v + aj * gamma[h - j - 1];
                }
                gamma.push(v);
            }
        }
        gamma
    }

    /// Number of periodic trapezoid nodes that resolves lags `0..=max_lag`
    /// of a third-order spectral partial to below `1e-20` aliasing error.
    pub fn alias_free_nodes(&self, theta: &ThetaVector<T>, max_lag: usize) -> usize {
        let rho = theta.pole_radius.to_f64_lossy();
        let tail = if self.p == 0 || rho <= 0.0 {
            0
        } else {
            let mut m = 1usize;
            while ((m + 1) as f64).powi(3) * rho.powi(m as i32) > 1e-20 && m < (1 << 22) {
                m += 1;
            }
            m
        };
        let need = (2 * (max_lag + 1)).max(max_lag + 1 + tail + self.q + 1).max(64);
        need.next_power_of_two().min(1 << 22)
    }

    /// `γ(h) = ∫ e^{ihω} S dω` by the periodic trapezoid rule on `nodes`
    /// equispaced frequencies.
    pub fn autocovariances_quadrature(&self, theta: &ThetaVector<T>, max_lag: usize, nodes: usize) -> Vec<T> {
        let values: Vec<T> = (0..nodes)
            .map(|m| self.density_at(&theta.coords, T::two_pi() * T::from_usize_lossy(m) / T::from_usize_lossy(nodes)))
            .collect();
        cosine_transform(&mut FftPlanner::new(), &values, max_lag)
    }

    /// Autocovariances and their θ-partials up to `order` via alias-free
    /// trapezoid quadrature of the analytic spectral partials.
    pub fn autocovariance_partials(&self, theta: &ThetaVector<T>, max_lag: usize, order: usize) -> Result<AutocovPartials<T>> {
        if order > 3 {
            return Err(Error::OrderUnsupported(order));
        }
        theta.require_validated()?;
        let k = self.dim();
        let nodes = self.alias_free_nodes(theta, max_lag);
        let jet_order = order.max(1);
        let mut s0 = Vec::with_capacity(nodes);
        let mut s1 = vec![Vec::with_capacity(nodes); k];
        let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
        let triples: Vec<(usize, usize, usize)> =
            (0..k).flat_map(|i| (i..k).flat_map(move |j| (j..k).map(move |l| (i, j, l)))).collect();
        let mut s2 = vec![Vec::with_capacity(nodes); if order >= 2 { pairs.len() } else { 0 }];
        let mut s3 = vec![Vec::with_capacity(nodes); if order >= 3 { triples.len() } else { 0 }];
        let mut jet = NodeJet::default();
        for m in 0..nodes {
            let omega = T::two_pi() * T::from_usize_lossy(m) / T::from_usize_lossy(nodes);
            self.node_jet(&theta.coords, omega, jet_order, &mut jet);
            let s = jet.s;
            s0.push(s);
            if order >= 1 {
                for i in 0..k {
                    s1[i].push(s * jet.dlog[i]);
                }
            }
            if order >= 2 {
                for (slot, &(i, j)) in s2.iter_mut().zip(&pairs) {
                    slot.push(s * jet.r2[i * k + j]);
                }
            }
            if order >= 3 {
                for (slot, &(i, j, l)) in s3.iter_mut().zip(&triples) {
                    slot.push(s * jet.r3[(i * k + j) * k + l]);
                }
            }
        }
        let mut planner = FftPlanner::new();
        let gamma = cosine_transform(&mut planner, &s0, max_lag);
        let d1 = if order >= 1 { s1.iter().map(|v| cosine_transform(&mut planner, v, max_lag)).collect() } else { Vec::new() };
        let mut d2 = vec![Vec::new(); if order >= 2 { k * k } else { 0 }];
        for (v, &(i, j)) in s2.iter().zip(&pairs) {
            let t = cosine_transform(&mut planner, v, max_lag);
            d2[i * k + j] = t.clone();
            d2[j * k + i] = t;
        }
        let mut d3 = vec![Vec::new(); if order >= 3 { k * k * k } else { 0 }];
        for (v, &(i, j, l)) in s3.iter().zip(&triples) {
            let t = cosine_transform(&mut planner, v, max_lag);
            for (a, b, c) in permutations3(i, j, l) {
                d3[(a * k + b) * k + c] = t.clone();
            }
        }
        Ok(AutocovPartials { gamma, d1, d2, d3, nodes })
    }
}

/// Free-function form of [`SpectralModel::validate_params`].
pub fn validate_params<T: Real>(model: &SpectralModel<T>, theta: ThetaVector<T>) -> Result<ThetaVector<T>> {
    model.validate_params(theta)
}

/// Free-function form of [`SpectralModel::spectral_density`].
pub fn spectral_density<T: Real>(model: &SpectralModel<T>, theta: &ThetaVector<T>, omega: T) -> T {
    model.spectral_density(theta, omega)
}

/// Free-function form of [`SpectralModel::spectral_partials`].
pub fn spectral_partials<T: Real>(
    model: &SpectralModel<T>,
    theta: &ThetaVector<T>,
    omega: T,
    max_order: usize,
) -> Result<SpectralEval<T>> {
    model.spectral_partials(theta, omega, max_order)
}

/// Free-function form of [`SpectralModel::autocovariances`].
pub fn autocovariances<T: Real>(model: &SpectralModel<T>, theta: &ThetaVector<T>, max_lag: usize) -> Vec<T> {
    model.autocovariances(theta, max_lag)
}

pub(crate) fn permutations3(i: usize, j: usize, l: usize) -> [(usize, usize, usize); 6] {
    [(i, j, l), (i, l, j), (j, i, l), (j, l, i), (l, i, j), (l, j, i)]
}

/// `(2π/N) Σ_m v_m cos(h ω_m)` for `h = 0..=max_lag`, with `ω_m = 2πm/N`.
fn cosine_transform<T: Real>(planner: &mut FftPlanner<T>, values: &[T], max_lag: usize) -> Vec<T> {
    let n = values.len();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex<T>> = values.iter().map(|&v| Complex::new(v, T::zero())).collect();
    fft.process(&mut buf);
    let w = T::two_pi() / T::from_usize_lossy(n);
    (0..=max_lag).map(|h| if h < n { buf[h].re * w } else { T::zero() }).collect()
}

/// Largest root modulus of the monic polynomial `z^d + c_1 z^{d-1} + … + c_d`.
///
/// Its roots are the reciprocals of the roots of `1 + c_1 z + … + c_d z^d`,
/// so a value below one means every root of the latter lies outside the
/// unit circle.
pub fn reciprocal_root_radius<T: Real>(coeffs: &[T]) -> T {
    let mut d = coeffs.len();
    while d > 0 && coeffs[d - 1] == T::zero() {
        d -= 1;
    }
    let c = &coeffs[..d];
    match d {
        0 => T::zero(),
        1 => c[0].abs(),
        2 => {
            let disc = c[0] * c[0] - T::lit(4.0) * c[1];
            if disc >= T::zero() {
                let s = disc.sqrt();
                let half = T::lit(0.5);
                ((-c[0] + s) * half).abs().max(((-c[0] - s) * half).abs())
            } else {
                // complex pair: |z|² = product of roots
                c[1].abs().sqrt()
            }
        }
        _ => durand_kerner(c).into_iter().fold(T::zero(), |m, z| m.max(z.norm())),
    }
}

fn durand_kerner<T: Real>(c: &[T]) -> Vec<Complex<T>> {
    let d = c.len();
    let eval = |z: Complex<T>| c.iter().fold(Complex::new(T::one(), T::zero()), |acc, &ci| acc * z + ci);
    let bound = T::one() + c.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let seed = Complex::new(T::lit(0.4), T::lit(0.9));
    let mut roots: Vec<Complex<T>> = (0..d).map(|i| seed.powu(i as u32 + 1) * bound).collect();
    for _ in 0..2000 {
        let mut delta = T::zero();
        for i in 0..d {
            let zi = roots[i];
            let mut denom = Complex::new(T::one(), T::zero());
            for (j, &zj) in roots.iter().enumerate() {
                if j != i {
                    denom = denom * (zi - zj);
                }
            }
            let step = eval(zi) / denom;
            roots[i] = zi - step;
            delta = delta.max(step.norm());
        }
        if delta <= T::epsilon() * T::lit(16.0) * bound {
            break;
        }
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ar1(a: f64) -> (SpectralModel<f64>, ThetaVector<f64>) {
        let m = SpectralModel::ar(1, 1.0).unwrap();
        let t = m.validate(&[a]).unwrap();
        (m, t)
    }

    #[test]
    fn validation_examples() {
        let m = SpectralModel::<f64>::ar(1, 1.0).unwrap();
        assert!(matches!(m.validate(&[1.5]), Err(Error::NonStationary { .. })));
        let ma = SpectralModel::<f64>::ma(1, 1.0).unwrap();
        assert!(ma.validate(&[0.5]).unwrap().is_validated());
        assert!(matches!(ma.validate(&[2.0]), Err(Error::NonInvertible { .. })));
        let ar2 = SpectralModel::<f64>::ar(2, 1.0).unwrap();
        assert!(ar2.validate(&[0.5, 0.3]).is_ok());
        assert!(ar2.validate(&[0.5, 0.6]).is_err());
        assert!(matches!(ar2.validate(&[0.5]), Err(Error::DimensionMismatch { expected: 2, got: 1 })));
        assert!(matches!(
            SpectralModel::<f64>::constant_spectrum().validate(&[-1.0]),
            Err(Error::InvalidLevel(_))
        ));
    }

    #[test]
    fn root_margin_rejects_near_boundary() {
        let m = SpectralModel::<f64>::ar(1, 1.0).unwrap();
        assert!(m.validate(&[1.0 - 1e-8]).is_err());
        assert!(m.clone().with_root_margin(0.0).validate(&[1.0 - 1e-8]).is_ok());
        assert!(m.with_root_margin(0.1).validate(&[0.95]).is_err());
    }

    #[test]
    fn higher_order_roots_via_durand_kerner() {
        // (1 - 0.5z)(1 - 0.4z)(1 + 0.3z) = 1 - 0.6z - 0.07z² + 0.06z³
        let r = reciprocal_root_radius(&[-0.6f64, -0.07, 0.06]);
        assert!((r - 0.5).abs() < 1e-12);
        let r = reciprocal_root_radius(&[-0.6f64, -0.07, 0.06, 0.0]);
        assert!((r - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spectral_density_examples() {
        let wn = SpectralModel::<f64>::ar(1, 1.0).unwrap();
        let t = wn.validate(&[0.0]).unwrap();
        assert!((wn.spectral_density(&t, 1.234) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let (m, t) = ar1(0.5);
        assert!((m.spectral_density(&t, 0.0) - 2.0 / PI).abs() < 1e-14);
        assert!((m.spectral_density(&t, PI) - 0.070_735_530_263_8).abs() < 1e-12);
        assert_eq!(m.spectral_density(&t, 0.7), m.spectral_density(&t, -0.7));
    }

    #[test]
    fn constant_spectrum_partials() {
        let m = SpectralModel::<f64>::constant_spectrum();
        let t = m.validate(&[1.7]).unwrap();
        let e = m.spectral_partials(&t, 0.3, 3).unwrap();
        assert!((e.value - 1.7).abs() < 1e-15);
        assert!((e.grad[0] - 1.0).abs() < 1e-15);
        assert!(e.hess[(0, 0)].abs() < 1e-15);
        assert!(e.third.unwrap()[(0, 0, 0)].abs() < 1e-15);
        assert_eq!(m.spectral_partials(&t, 0.3, 4), Err(Error::OrderUnsupported(4)));
    }

    #[test]
    fn ar1_gradient_at_zero_is_cos_over_pi() {
        let (m, t) = ar1(0.0);
        for &w in &[0.0, 0.4, 1.9, PI] {
            let e = m.spectral_partials(&t, w, 1).unwrap();
            assert!((e.grad[0] - w.cos() / PI).abs() < 1e-15);
        }
    }

    fn fd_check(model: &SpectralModel<f64>, coords: &[f64]) {
        let t = model.validate(coords).unwrap();
        let k = model.dim();
        let h = 1e-5;
        for &w in &[0.0, 0.37, 1.3, 2.9] {
            let e = model.spectral_partials(&t, w, 3).unwrap();
            let third = e.third.as_ref().unwrap();
            for i in 0..k {
                let mut up = coords.to_vec();
                let mut dn = coords.to_vec();
                up[i] += h;
                dn[i] -= h;
                let eu = model.spectral_partials(&model.validate(&up).unwrap(), w, 2).unwrap();
                let ed = model.spectral_partials(&model.validate(&dn).unwrap(), w, 2).unwrap();
                let fd = (eu.value - ed.value) / (2.0 * h);
                assert!((fd - e.grad[i]).abs() <= 1e-6 * (1.0 + e.grad[i].abs()), "grad {i}");
                for j in 0..k {
                    let fd = (eu.grad[j] - ed.grad[j]) / (2.0 * h);
                    assert!((fd - e.hess[(i, j)]).abs() <= 1e-6 * (1.0 + e.hess[(i, j)].abs()), "hess {i}{j}");
                    for l in 0..k {
                        let fd = (eu.hess[(j, l)] - ed.hess[(j, l)]) / (2.0 * h);
                        assert!((fd - third[(i, j, l)]).abs() <= 1e-5 * (1.0 + third[(i, j, l)].abs()), "third");
                    }
                }
            }
            assert!(e.hess.is_symmetric(1e-14));
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        fd_check(&SpectralModel::ar(2, 1.3).unwrap(), &[0.5, -0.3]);
        fd_check(&SpectralModel::arma(1, 1, SigmaPolicy::FreeLogVariance).unwrap(), &[0.6, 0.3, 0.2]);
        fd_check(&SpectralModel::arma(1, 2, SigmaPolicy::FreeSpectralLevel).unwrap(), &[-0.4, 0.3, 0.1, 0.8]);
    }

    #[test]
    fn autocovariance_examples() {
        let wn = SpectralModel::<f64>::arma(0, 0, SigmaPolicy::FreeLogVariance).unwrap();
        let g = wn.autocovariances(&wn.validate(&[0.0]).unwrap(), 3);
        assert_eq!(g, vec![1.0, 0.0, 0.0, 0.0]);
        let (m, t) = ar1(0.5);
        let g = m.autocovariances(&t, 2);
        assert!((g[0] - 4.0 / 3.0).abs() < 1e-14 && (g[1] - 2.0 / 3.0).abs() < 1e-14 && (g[2] - 1.0 / 3.0).abs() < 1e-14);
        let ma = SpectralModel::<f64>::ma(1, 1.0).unwrap();
        let g = ma.autocovariances(&ma.validate(&[0.4]).unwrap(), 2);
        assert!((g[0] - 1.16).abs() < 1e-14 && (g[1] - 0.4).abs() < 1e-14 && g[2].abs() < 1e-15);
    }

    #[test]
    fn recursion_matches_quadrature() {
        let cases: Vec<(SpectralModel<f64>, Vec<f64>)> = vec![
            (SpectralModel::ar(1, 1.0).unwrap(), vec![0.8]),
            (SpectralModel::ma(1, 2.0).unwrap(), vec![-0.6]),
            (SpectralModel::arma(1, 1, SigmaPolicy::Fixed(1.0)).unwrap(), vec![0.7, -0.4]),
            (SpectralModel::arma(2, 2, SigmaPolicy::FreeLogVariance).unwrap(), vec![0.5, -0.3, 0.4, 0.2, 0.1]),
        ];
        for (m, c) in cases {
            let t = m.validate(&c).unwrap();
            let exact = m.autocovariances(&t, 20);
            let quad = m.autocovariances_quadrature(&t, 20, m.alias_free_nodes(&t, 20));
            for (a, b) in exact.iter().zip(&quad) {
                assert!((a - b).abs() < 1e-13, "{a} vs {b}");
            }
            assert!(exact.iter().all(|g| g.abs() <= exact[0]));
        }
    }

    #[test]
    fn autocovariance_partials_match_fd_of_recursion() {
        let m = SpectralModel::arma(1, 1, SigmaPolicy::FreeLogVariance).unwrap();
        let c = [0.6f64, 0.3, 0.2];
        let t = m.validate(&c).unwrap();
        let ap = m.autocovariance_partials(&t, 10, 3).unwrap();
        let h = 1e-5;
        for i in 0..3 {
            let mut up = c.to_vec();
            let mut dn = c.to_vec();
            up[i] += h;
            dn[i] -= h;
            let gu = m.autocovariances(&m.validate(&up).unwrap(), 10);
            let gd = m.autocovariances(&m.validate(&dn).unwrap(), 10);
            let apu = m.autocovariance_partials(&m.validate(&up).unwrap(), 10, 2).unwrap();
            let apd = m.autocovariance_partials(&m.validate(&dn).unwrap(), 10, 2).unwrap();
            for lag in 0..=10 {
                let fd = (gu[lag] - gd[lag]) / (2.0 * h);
                assert!((fd - ap.d1[i][lag]).abs() < 1e-8);
                for j in 0..3 {
                    let fd = (apu.d1[j][lag] - apd.d1[j][lag]) / (2.0 * h);
                    assert!((fd - ap.second(i, j)[lag]).abs() < 1e-7);
                    for l in 0..3 {
                        let fd = (apu.second(j, l)[lag] - apd.second(j, l)[lag]) / (2.0 * h);
                        assert!((fd - ap.third(i, j, l)[lag]).abs() < 1e-6);
                    }
                }
            }
        }
    }
}
