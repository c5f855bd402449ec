//! `O(n²)` kernels for symmetric positive definite Toeplitz systems.
//!
//! The Durbin-Levinson recursion yields the exact Gaussian log-likelihood
//! through the prediction-error decomposition, and its last predictor
//! generates the inverse through the Gohberg-Semencul formula
//! `Σ⁻¹ = (L(a)L(a)ᵀ − L(b)L(b)ᵀ) / v`. Neither ever forms `Σ⁻¹`.

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::real::Real;

/// Output of one Durbin-Levinson pass.
#[derive(Debug, Clone)]
pub struct Levinson<T> {
    /// `xᵀ Σ⁻¹ x` (zero when no data was supplied).
    pub quad_form: T,
    /// `log det Σ`.
    pub log_det: T,
    /// Order-`(n-1)` predictor coefficients `φ_{n-1, 1..n-1}`.
    pub predictor: Vec<T>,
    /// Order-`(n-1)` prediction error variance.
    pub last_variance: T,
}

/// Runs Durbin-Levinson on `gamma[0..n]`, accumulating the innovations
/// quadratic form of `x` when given.
pub fn levinson<T: Real>(gamma: &[T], x: Option<&[T]>) -> Result<Levinson<T>> {
    let n = gamma.len();
    assert!(n > 0);
    if let Some(x) = x {
        assert_eq!(x.len(), n);
    }
    let mut log_det = T::zero();
    let mut quad = T::zero();
    let mut predictor = Vec::new();
    let mut last_variance = T::zero();
    for_each_predictor(gamma, |t, phi, v| {
        log_det = log_det + v.ln();
        if let Some(x) = x {
            // e_t = x_t − Σ_j φ_{t,j} x_{t−j}
            let mut e = x[t];
            for (j, &p) in phi.iter().enumerate() {
                e = e - p * x[t - 1 - j];
            }
            quad = quad + e * e / v;
        }
        if t + 1 == n {
            predictor = phi.to_vec();
            last_variance = v;
        }
    })?;
    Ok(Levinson { quad_form: quad, log_det, predictor, last_variance })
}

/// Streams Durbin-Levinson predictors, handing `(t, φ_{t,1..t}, v_t)` to
/// `visit` for `t = 0..n`.
fn for_each_predictor<T: Real>(gamma: &[T], mut visit: impl FnMut(usize, &[T], T)) -> Result<()> {
    let n = gamma.len();
    let mut phi: Vec<T> = Vec::with_capacity(n);
    let mut next = Vec::with_capacity(n);
    let mut v = gamma[0];
    if !(v > T::zero()) {
        return Err(Error::NotPositiveDefinite { pivot: 0, value: v.to_f64_lossy() });
    }
    visit(0, &phi, v);
    for t in 1..n {
        let mut acc = gamma[t];
        for (j, &p) in phi.iter().enumerate() {
            acc = acc - p * gamma[t - 1 - j];
        }
        let kappa = acc / v;
        next.clear();
        for j in 0..phi.len() {
            next.push(phi[j] - kappa * phi[phi.len() - 1 - j]);
        }
        next.push(kappa);
        std::mem::swap(&mut phi, &mut next);
        v = v * (T::one() - kappa * kappa);
        if !(v > T::zero()) || !v.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: t, value: v.to_f64_lossy() });
        }
        visit(t, &phi, v);
    }
    Ok(())
}

/// Innovations form of the lower Cholesky factor of `Σ`: a path with
/// covariance `Σ` is `x_t = Σ_j φ_{t,j} x_{t−j} + √v_t z_t`.
#[derive(Debug, Clone)]
pub struct InnovationsFactor<T> {
    /// Row `t` holds `φ_{t,1..t}` starting at `t(t−1)/2`.
    packed: Vec<T>,
    sd: Vec<T>,
}

impl<T: Real> InnovationsFactor<T> {
    pub fn new(gamma: &[T]) -> Result<Self> {
        let n = gamma.len();
        let mut packed = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        let mut sd = Vec::with_capacity(n);
        for_each_predictor(gamma, |_, phi, v| {
            packed.extend_from_slice(phi);
            sd.push(v.sqrt());
        })?;
        Ok(Self { packed, sd })
    }

    pub fn dim(&self) -> usize {
        self.sd.len()
    }

    /// Maps standard normals `z` to a draw with covariance `Σ`.
    pub fn color(&self, z: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(z.len(), n);
        let mut x = Vec::with_capacity(n);
        for t in 0..n {
            let phi = &self.packed[t * t.saturating_sub(1) / 2..][..t];
            let mut v = self.sd[t] * z[t];
            for (j, &p) in phi.iter().enumerate() {
                v = v + p * x[t - 1 - j];
            }
            x.push(v);
        }
        x
    }
}

/// One-shot [`InnovationsFactor::color`] in `O(n)` memory.
pub fn color_streaming<T: Real>(gamma: &[T], z: &[T]) -> Result<Vec<T>> {
    assert_eq!(gamma.len(), z.len());
    let mut x: Vec<T> = Vec::with_capacity(z.len());
    for_each_predictor(gamma, |t, phi, v| {
        let mut s = v.sqrt() * z[t];
        for (j, &p) in phi.iter().enumerate() {
            s = s + p * x[t - 1 - j];
        }
        x.push(s);
    })?;
    Ok(x)
}

/// Gohberg-Semencul generators of `Σ⁻¹`.
#[derive(Debug, Clone)]
pub struct InverseGenerators<T> {
    a: Vec<T>,
    b: Vec<T>,
    scale: T,
}

impl<T: Real> InverseGenerators<T> {
    pub fn from_levinson(lev: &Levinson<T>) -> Self {
        let n = lev.predictor.len() + 1;
        let mut a = Vec::with_capacity(n);
        a.push(T::one());
        a.extend(lev.predictor.iter().map(|&p| -p));
        let mut b = Vec::with_capacity(n);
        b.push(T::zero());
        b.extend(lev.predictor.iter().rev().map(|&p| -p));
        Self { a, b, scale: T::one() / lev.last_variance }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// `Σ⁻¹ x`.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let n = self.dim();
        let ltx = |g: &[T]| -> Vec<T> { (0..n).map(|r| dot(&g[..n - r], &x[r..])).collect() };
        let lmul = |g: &[T], y: &[T]| -> Vec<T> {
            (0..n).map(|r| (0..=r).fold(T::zero(), |acc, c| acc + g[r - c] * y[c])).collect()
        };
        let ya = lmul(&self.a, &ltx(&self.a));
        let yb = lmul(&self.b, &ltx(&self.b));
        ya.iter().zip(&yb).map(|(&p, &q)| (p - q) * self.scale).collect()
    }

    /// Diagonal sums `d_h = Σ_s (Σ⁻¹)_{s, s+h}` for `h = 0..n`.
    pub fn diagonal_sums(&self) -> Vec<T> {
        let n = self.dim();
        (0..n)
            .map(|h| {
                let mut acc = T::zero();
                for i in 0..n - h {
                    let w = T::from_usize_lossy(n - h - i);
                    acc = acc + w * (self.a[i] * self.a[i + h] - self.b[i] * self.b[i + h]);
                }
                acc * self.scale
            })
            .collect()
    }
}

/// `Tr(Σ⁻¹ M)` for the symmetric Toeplitz `M` with first column `m`, given
/// the diagonal sums of `Σ⁻¹`.
pub fn trace_with_toeplitz<T: Real>(diag_sums: &[T], m: &[T]) -> T {
    let two = T::lit(2.0);
    diag_sums
        .iter()
        .zip(m)
        .enumerate()
        .fold(T::zero(), |acc, (h, (&d, &c))| acc + if h == 0 { d * c } else { two * d * c })
}
