//! Exact zero-mean Gaussian likelihood over Toeplitz covariances.
//!
//! `l_n(θ) = −½ xᵀΣ⁻¹x − ½ log det Σ` and its θ-derivatives, built from
//! Toeplitz matrices of autocovariance partials. Everything that multiplies
//! by `Σ⁻¹` goes through Cholesky solves; the Durbin-Levinson path in
//! [`levinson_score`] is an `O(n²)` alternative for the optimizer.
//!
//! Trace quantities carry a `1/(2n)` factor throughout:
//! `J′_ij = Tr(Σ⁻¹Σ_iΣ⁻¹Σ_j)/2n`, `h_ij = Tr(Σ⁻¹Σ_ij)/2n`,
//! `Γ′_kij = Tr(Σ⁻¹Σ_kΣ⁻¹Σ_ij)/2n`, `T′_kij = Tr(Σ⁻¹Σ_kΣ⁻¹Σ_iΣ⁻¹Σ_j)/2n`,
//! `N′_kij = Tr(Σ⁻¹Σ_kij)/2n`.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{dot, toeplitz_bilinear, toeplitz_matvec, Cholesky, Matrix, Tensor3};
use crate::model::{permutations3, AutocovPartials, SpectralModel, ThetaVector};
use crate::real::Real;
use crate::toeplitz::{color_streaming, levinson, trace_with_toeplitz, InnovationsFactor, InverseGenerators};

/// `Σ_n` with entries `γ(|s − t|)` and a lazily computed Cholesky factor.
#[derive(Debug)]
pub struct ToeplitzCov<T> {
    gamma: Vec<T>,
    chol: OnceLock<Result<Cholesky<T>>>,
}

impl<T: Clone> Clone for ToeplitzCov<T> {
    fn clone(&self) -> Self {
        let chol = OnceLock::new();
        if let Some(c) = self.chol.get() {
            let _ = chol.set(c.clone());
        }
        Self { gamma: self.gamma.clone(), chol }
    }
}

impl<T: Real> ToeplitzCov<T> {
    pub fn from_autocovariances(gamma: Vec<T>) -> Self {
        assert!(!gamma.is_empty(), "n must be at least 1");
        Self { gamma, chol: OnceLock::new() }
    }

    pub fn n(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self) -> &[T] {
        &self.gamma
    }

    pub fn entry(&self, s: usize, t: usize) -> T {
        self.gamma[s.abs_diff(t)]
    }

    pub fn dense(&self) -> Matrix<T> {
        Matrix::toeplitz(&self.gamma)
    }

    /// Factor on first use; concurrent callers all observe the same fill.
    pub fn cholesky(&self) -> Result<&Cholesky<T>> {
        self.chol.get_or_init(|| Cholesky::factor(&self.dense())).as_ref().map_err(Clone::clone)
    }

    pub fn is_factored(&self) -> bool {
        self.chol.get().is_some()
    }
}

pub fn covariance_matrix<T: Real>(model: &SpectralModel<T>, theta: &ThetaVector<T>, n: usize) -> Result<ToeplitzCov<T>> {
    theta.require_validated()?;
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    Ok(ToeplitzCov::from_autocovariances(model.autocovariances(theta, n - 1)))
}

fn check_data<T>(model_dim: usize, theta: &ThetaVector<T>, x: &[T]) -> Result<()>
where
    T: Real,
{
    theta.require_validated()?;
    if theta.dim() != model_dim {
        return Err(Error::DimensionMismatch { expected: model_dim, got: theta.dim() });
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument("empty data".into()));
    }
    Ok(())
}

/// `l_n(θ) = −½ xᵀΣ⁻¹x − ½ log det Σ`, constant omitted.
pub fn log_likelihood<T: Real>(model: &SpectralModel<T>, theta: &ThetaVector<T>, x: &[T]) -> Result<T> {
    check_data(model.dim(), theta, x)?;
    let cov = covariance_matrix(model, theta, x.len())?;
    log_likelihood_with(&cov, x)
}

pub fn log_likelihood_with<T: Real>(cov: &ToeplitzCov<T>, x: &[T]) -> Result<T> {
    if x.len() != cov.n() {
        return Err(Error::DimensionMismatch { expected: cov.n(), got: x.len() });
    }
    let chol = cov.cholesky()?;
    let y = chol.forward(x);
    let half = T::lit(0.5);
    Ok(-half * dot(&y, &y) - half * chol.log_det())
}

/// Full Gaussian log-density including `−(n/2) log 2π`.
pub fn log_density<T: Real>(model: &SpectralModel<T>, theta: &ThetaVector<T>, x: &[T]) -> Result<T> {
    let l = log_likelihood(model, theta, x)?;
    Ok(l - T::lit(0.5) * T::from_usize_lossy(x.len()) * T::two_pi().ln())
}

/// `l_n(θ)` and the normalized score `L_i = (1/n) ∂_i l_n` in `O(n²)` via
/// Durbin-Levinson and the Gohberg-Semencul inverse generators.
#[derive(Debug, Clone, PartialEq)]
pub struct LevinsonScore<T> {
    pub log_likelihood: T,
    pub score: Vec<T>,
}

/// Value-only `O(n²)` log-likelihood.
pub fn log_likelihood_levinson<T: Real>(model: &SpectralModel<T>, theta: &ThetaVector<T>, x: &[T]) -> Result<T> {
    check_data(model.dim(), theta, x)?;
    let gamma = model.autocovariances(theta, x.len() - 1);
    let lev = levinson(&gamma, Some(x))?;
    let half = T::lit(0.5);
    Ok(-half * lev.quad_form - half * lev.log_det)
}

pub fn levinson_score<T: Real>(model: &SpectralModel<T>, theta: &ThetaVector<T>, x: &[T]) -> Result<LevinsonScore<T>> {
    check_data(model.dim(), theta, x)?;
    let n = x.len();
    let ap = model.autocovariance_partials(theta, n - 1, 1)?;
    let lev = levinson(&ap.gamma, Some(x))?;
    let gens = InverseGenerators::from_levinson(&lev);
    let u = gens.apply(x);
    let diag = gens.diagonal_sums();
    let half = T::lit(0.5);
    let inv_n = T::one() / T::from_usize_lossy(n);
    let score = ap
        .d1
        .iter()
        .map(|d| half * inv_n * (toeplitz_bilinear(d, &u, &u) - trace_with_toeplitz(&diag, d)))
        .collect();
    Ok(LevinsonScore { log_likelihood: -half * lev.quad_form - half * lev.log_det, score })
}

/// Normalized log-likelihood derivatives `L_{i…} = (1/n) ∂_{i…} l_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodDerivs<T> {
    pub l_i: Vec<T>,
    pub l_ij: Option<Matrix<T>>,
    pub l_ijk: Option<Tensor3<T>>,
}

/// Cholesky solves `Σ⁻¹Σ_i`, `Σ⁻¹Σ_ij`, and the traces `Tr(Σ⁻¹Σ_ijl)`,
/// shared by the data-dependent derivatives and the trace quantities.
struct SolveCache<T> {
    k: usize,
    a1: Vec<Matrix<T>>,
    a2: Vec<Option<Matrix<T>>>,
    tr3: Option<Tensor3<T>>,
}

impl<T: Real> SolveCache<T> {
    fn build(chol: &Cholesky<T>, ap: &AutocovPartials<T>, order: usize) -> Self {
        let k = ap.k();
        let solve = |col: &[T]| chol.solve_mat(&Matrix::toeplitz(col));
        let a1 = ap.d1.iter().map(|d| solve(d)).collect();
        let mut a2 = vec![None; k * k];
        if order >= 2 {
            for i in 0..k {
                for j in i..k {
                    a2[i * k + j] = Some(solve(ap.second(i, j)));
                }
            }
        }
        let tr3 = (order >= 3).then(|| {
            let mut t = Tensor3::zeros(k);
            for i in 0..k {
                for j in i..k {
                    for l in j..k {
                        let v = solve(ap.third(i, j, l)).trace();
                        for (a, b, c) in permutations3(i, j, l) {
                            t[(a, b, c)] = v;
                        }
                    }
                }
            }
            t
        });
        Self { k, a1, a2, tr3 }
    }

    fn a2(&self, i: usize, j: usize) -> &Matrix<T> {
        let (i, j) = (i.min(j), i.max(j));
        self.a2[i * self.k + j].as_ref().expect("second-order solves cached")
    }

    /// `Tr(A_k A_i A_j)` for all index triples; fully symmetric.
    fn triple_traces(&self) -> Tensor3<T> {
        let k = self.k;
        let mut t = Tensor3::zeros(k);
        for a in 0..k {
            for b in a..k {
                let prod = self.a1[a].matmul(&self.a1[b]);
                for c in b..k {
                    let v = prod.trace_of_product(&self.a1[c]);
                    for (x, y, z) in permutations3(a, b, c) {
                        t[(x, y, z)] = v;
                    }
                }
            }
        }
        t
    }
}

/// `L_i`, `L_ij`, `L_ijk` at `θ` for data `x`, normalized by `1/n`.
pub fn log_likelihood_partials<T: Real>(
    model: &SpectralModel<T>,
    theta: &ThetaVector<T>,
    x: &[T],
    max_order: usize,
) -> Result<LikelihoodDerivs<T>> {
    if max_order == 0 || max_order > 3 {
        return Err(Error::OrderUnsupported(max_order));
    }
    check_data(model.dim(), theta, x)?;
    let n = x.len();
    let k = model.dim();
    let cov = covariance_matrix(model, theta, n)?;
    let chol = cov.cholesky()?;
    let ap = model.autocovariance_partials(theta, n - 1, max_order)?;
    let cache = SolveCache::build(chol, &ap, max_order);

    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let inv_n = T::one() / T::from_usize_lossy(n);
    let u = chol.solve_vec(x);
    let w1: Vec<Vec<T>> = ap.d1.iter().map(|d| toeplitz_matvec(d, &u)).collect();
    let l_i = (0..k).map(|i| half * inv_n * (dot(&u, &w1[i]) - cache.a1[i].trace())).collect();
    if max_order == 1 {
        return Ok(LikelihoodDerivs { l_i, l_ij: None, l_ijk: None });
    }

    let v1: Vec<Vec<T>> = w1.iter().map(|w| chol.solve_vec(w)).collect();
    let w2: Vec<Vec<T>> = (0..k * k).map(|ij| toeplitz_matvec(&ap.d2[ij], &u)).collect();
    let l_ij = Matrix::from_fn(k, k, |i, j| {
        let quad = half * dot(&u, &w2[i * k + j]) - dot(&w1[i], &v1[j]);
        let ld = cache.a2(i, j).trace() - cache.a1[i].trace_of_product(&cache.a1[j]);
        inv_n * (quad - half * ld)
    });
    if max_order == 2 {
        return Ok(LikelihoodDerivs { l_i, l_ij: Some(l_ij), l_ijk: None });
    }

    // y_ij = Σ_i Σ⁻¹ Σ_j u
    let y: Vec<Vec<T>> = (0..k * k).map(|ij| toeplitz_matvec(&ap.d1[ij / k], &v1[ij % k])).collect();
    let tr3 = cache.tr3.as_ref().expect("third-order traces cached");
    let ttt = cache.triple_traces();
    let mut l_ijk = Tensor3::zeros(k);
    for a in 0..k {
        for b in a..k {
            for c in b..k {
                let (kk, i, j) = (a, b, c);
                let q = -toeplitz_bilinear(ap.third(kk, i, j), &u, &u)
                    + two * (dot(&v1[kk], &w2[i * k + j]) + dot(&v1[j], &w2[kk * k + i]) + dot(&v1[i], &w2[kk * k + j]))
                    - two * (dot(&v1[kk], &y[i * k + j]) + dot(&v1[i], &y[kk * k + j]) + dot(&v1[i], &y[j * k + kk]));
                let ld = tr3[(kk, i, j)]
                    - cache.a1[kk].trace_of_product(cache.a2(i, j))
                    - cache.a2(kk, i).trace_of_product(&cache.a1[j])
                    - cache.a1[i].trace_of_product(cache.a2(kk, j))
                    + two * ttt[(kk, i, j)];
                let v = inv_n * (-half * q - half * ld);
                for (p1, p2, p3) in permutations3(a, b, c) {
                    l_ijk[(p1, p2, p3)] = v;
                }
            }
        }
    }
    Ok(LikelihoodDerivs { l_i, l_ij: Some(l_ij), l_ijk: Some(l_ijk) })
}

fn standard_normals<T: Real>(n: usize, seed: u64, stream: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..n)
        .map(|_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            T::lit(v)
        })
        .collect()
}

/// Draws exact Gaussian paths for one `(θ, n)` from a shared factor.
///
/// The factor is the lower Cholesky factor of `Σ_n` in innovations form,
/// built by Durbin-Levinson in `O(n²)`.
#[derive(Debug, Clone)]
pub struct PathSampler<T> {
    cov: ToeplitzCov<T>,
    factor: InnovationsFactor<T>,
}

impl<T: Real> PathSampler<T> {
    pub fn new(model: &SpectralModel<T>, theta: &ThetaVector<T>, n: usize) -> Result<Self> {
        let cov = covariance_matrix(model, theta, n)?;
        let factor = InnovationsFactor::new(cov.gamma())?;
        Ok(Self { cov, factor })
    }

    pub fn n(&self) -> usize {
        self.cov.n()
    }

    pub fn covariance(&self) -> &ToeplitzCov<T> {
        &self.cov
    }

    /// Path for replication `stream` under `seed`: ChaCha8 keyed by the seed,
    /// one generator stream per replication.
    pub fn sample(&self, seed: u64, stream: u64) -> Vec<T> {
        self.factor.color(&standard_normals(self.n(), seed, stream))
    }
}

/// One exact draw from `N(0, Σ_n(θ))`; identical inputs give identical paths.
/// Equal to `PathSampler::new(..).sample(seed, 0)` without storing the factor.
pub fn sample_path<T: Real>(model: &SpectralModel<T>, theta: &ThetaVector<T>, n: usize, seed: u64) -> Result<Vec<T>> {
    let cov = covariance_matrix(model, theta, n)?;
    color_streaming(cov.gamma(), &standard_normals(n, seed, 0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceQuantities<T> {
    pub n: usize,
    pub jp: Matrix<T>,
    pub h: Matrix<T>,
    /// `Γ′_{k,ij}` at `(k, i, j)`.
    pub gammap: Tensor3<T>,
    pub tp: Tensor3<T>,
    pub np: Tensor3<T>,
}

impl<T: Real> TraceQuantities<T> {
    pub fn k(&self) -> usize {
        self.jp.rows()
    }
}

pub fn trace_quantities<T: Real>(model: &SpectralModel<T>, theta: &ThetaVector<T>, n: usize) -> Result<TraceQuantities<T>> {
    theta.require_validated()?;
    if n < 2 {
        return Err(Error::InvalidArgument("trace quantities need n ≥ 2".into()));
    }
    let k = model.dim();
    let cov = covariance_matrix(model, theta, n)?;
    let chol = cov.cholesky()?;
    let ap = model.autocovariance_partials(theta, n - 1, 3)?;
    let cache = SolveCache::build(chol, &ap, 3);
    let s = T::one() / T::from_usize_lossy(2 * n);
    let jp = Matrix::from_fn(k, k, |i, j| s * cache.a1[i].trace_of_product(&cache.a1[j]));
    let h = Matrix::from_fn(k, k, |i, j| s * cache.a2(i, j).trace());
    let gammap = Tensor3::from_fn(k, |a, i, j| s * cache.a1[a].trace_of_product(cache.a2(i, j)));
    let ttt = cache.triple_traces();
    let tp = Tensor3::from_fn(k, |a, i, j| s * ttt[(a, i, j)]);
    let tr3 = cache.tr3.as_ref().expect("third-order traces cached");
    let np = Tensor3::from_fn(k, |a, i, j| s * tr3[(a, i, j)]);
    Ok(TraceQuantities { n, jp, h, gammap, tp, np })
}

/// Expectations of the normalized log-likelihood derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedDerivs<T> {
    pub n: usize,
    /// `m_ij = E[L_ij] = −J′_ij`.
    pub m_ij: Matrix<T>,
    /// `m^ij`, the inverse of `m_ij`.
    pub m_inv: Matrix<T>,
    /// `m_ijk = E[L_ijk]`.
    pub m_ijk: Tensor3<T>,
    /// `n · m_{ij,k}` at `(i, j, k)`, where `m_{ij,k} = E[L_ij L_k]`.
    pub n_m_ij_k: Tensor3<T>,
}

impl<T: Real> ExpectedDerivs<T> {
    /// `m_{ij,k}` with its `1/n` factor applied.
    pub fn m_ij_k(&self, i: usize, j: usize, k: usize) -> T {
        self.n_m_ij_k[(i, j, k)] / T::from_usize_lossy(self.n)
    }
}

pub fn expected_derivatives<T: Real>(tq: &TraceQuantities<T>) -> Result<ExpectedDerivs<T>> {
    let k = tq.k();
    let m_ij = tq.jp.scale(-T::one());
    let m_inv = m_ij.inverse()?;
    let two = T::lit(2.0);
    let (g, t) = (&tq.gammap, &tq.tp);
    let m_ijk = Tensor3::from_fn(k, |i, j, l| {
        two * (t[(i, j, l)] + t[(j, i, l)]) - (g[(i, j, l)] + g[(j, i, l)] + g[(l, i, j)])
    });
    let n_m_ij_k = Tensor3::from_fn(k, |i, j, l| g[(l, i, j)] - t[(i, j, l)] - t[(j, i, l)]);
    Ok(ExpectedDerivs { n: tq.n, m_ij, m_inv, m_ijk, n_m_ij_k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SigmaPolicy;

    fn ar1(a: f64) -> (SpectralModel<f64>, ThetaVector<f64>) {
        let m = SpectralModel::ar(1, 1.0).unwrap();
        let t = m.validate(&[a]).unwrap();
        (m, t)
    }

    #[test]
    fn covariance_examples() {
        let (m, t) = ar1(0.5);
        let c = covariance_matrix(&m, &t, 2).unwrap().dense();
        let want = Matrix::from_rows(&[vec![4.0 / 3.0, 2.0 / 3.0], vec![2.0 / 3.0, 4.0 / 3.0]]);
        assert!(c.max_abs_diff(&want) < 1e-14);
        let wn = SpectralModel::<f64>::ar(1, 1.0).unwrap();
        let c = covariance_matrix(&wn, &wn.validate(&[0.0]).unwrap(), 3).unwrap().dense();
        assert!(c.max_abs_diff(&Matrix::identity(3)) < 1e-15);
    }

    #[test]
    fn cholesky_is_cached_once() {
        let (m, t) = ar1(0.7);
        let cov = covariance_matrix(&m, &t, 32).unwrap();
        assert!(!cov.is_factored());
        let a = cov.cholesky().unwrap() as *const _;
        let b = cov.cholesky().unwrap() as *const _;
        assert_eq!(a, b);
        assert!(cov.cholesky().unwrap().reconstruct().max_abs_diff(&cov.dense()) < 1e-10);
    }

    #[test]
    fn white_noise_likelihood() {
        let m = SpectralModel::<f64>::arma(0, 0, SigmaPolicy::FreeLogVariance).unwrap();
        let t = m.validate(&[0.0]).unwrap();
        let zero = vec![0.0; 5];
        let d = log_density(&m, &t, &zero).unwrap();
        assert!((d.exp() - (2.0 * std::f64::consts::PI).powf(-2.5)).abs() < 1e-15);
        let x = [0.3, -1.2, 2.0];
        let l = log_likelihood(&m, &t, &x).unwrap();
        assert!((l + 0.5 * x.iter().map(|v| v * v).sum::<f64>()).abs() < 1e-14);
    }

    #[test]
    fn rejects_unvalidated_theta() {
        let (m, _) = ar1(0.5);
        let raw = ThetaVector::raw(vec![0.5]);
        assert_eq!(log_likelihood(&m, &raw, &[1.0, 2.0]), Err(Error::NotValidated));
        assert_eq!(log_likelihood_partials(&m, &m.validate(&[0.5]).unwrap(), &[1.0], 4), Err(Error::OrderUnsupported(4)));
    }

    #[test]
    fn levinson_path_agrees_with_cholesky() {
        let m = SpectralModel::arma(1, 1, SigmaPolicy::FreeLogVariance).unwrap();
        let t = m.validate(&[0.6f64, 0.3, 0.2]).unwrap();
        let x = sample_path(&m, &t, 50, 11).unwrap();
        let a = log_likelihood(&m, &t, &x).unwrap();
        let b = log_likelihood_levinson(&m, &t, &x).unwrap();
        assert!((a - b).abs() < 1e-9);
        let fast = levinson_score(&m, &t, &x).unwrap();
        let slow = log_likelihood_partials(&m, &t, &x, 1).unwrap();
        for (f, s) in fast.score.iter().zip(&slow.l_i) {
            assert!((f - s).abs() < 1e-10);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let (m, t) = ar1(0.5);
        assert_eq!(sample_path(&m, &t, 20, 5).unwrap(), sample_path(&m, &t, 20, 5).unwrap());
        let s = PathSampler::new(&m, &t, 20).unwrap();
        assert_ne!(s.sample(5, 0), s.sample(5, 1));
        assert_eq!(s.sample(5, 0), sample_path(&m, &t, 20, 5).unwrap());
    }

    #[test]
    fn constant_spectrum_traces() {
        let m = SpectralModel::<f64>::constant_spectrum();
        let t = m.validate(&[1.0]).unwrap();
        for n in [2, 7, 16] {
            let tq = trace_quantities(&m, &t, n).unwrap();
            assert!((tq.jp[(0, 0)] - 0.5).abs() < 1e-14);
            let ed = expected_derivatives(&tq).unwrap();
            assert_eq!(ed.m_ij[(0, 0)], -tq.jp[(0, 0)]);
            assert!((ed.m_ij[(0, 0)] + 0.5).abs() < 1e-14);
            // Σ = θI: T′ = 1/(2θ³), Γ′ = N′ = 0, m_111 = 2/θ³... in the 1/(2n) scaling m_111 = 4T′ = 2
            assert!((ed.m_ijk[(0, 0, 0)] - 2.0).abs() < 1e-13);
        }
    }
}
