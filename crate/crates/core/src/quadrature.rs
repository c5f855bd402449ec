//! Frequency-domain quadrature over `[-π, π]`.
//!
//! The integrands met here are smooth and 2π-periodic, for which the
//! equispaced trapezoid rule converges geometrically. Gauss-Legendre is kept
//! as a fallback rule when trapezoid refinement stalls.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    Trapezoid,
    GaussLegendre,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub rule: QuadratureRule,
    /// Starting node count.
    pub nodes: usize,
    /// Refinement stops with an error beyond this many nodes.
    pub max_nodes: usize,
    /// Doubling must change every integral by less than `tol · max(1, |value|)`.
    pub tol: f64,
    /// When false the starting rule is used as-is (no convergence check).
    pub refine: bool,
    /// Retry with Gauss-Legendre if trapezoid refinement does not converge.
    pub fallback: bool,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { rule: QuadratureRule::Trapezoid, nodes: 512, max_nodes: 1 << 16, tol: 1e-8, refine: true, fallback: true }
    }
}

impl QuadratureConfig {
    pub fn fixed(nodes: usize) -> Self {
        Self { nodes, refine: false, ..Self::default() }
    }
}

/// Nodes on `[-π, π]` with weights summing to `2π`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid<T> {
    pub omega: Vec<T>,
    pub weights: Vec<T>,
    pub rule: QuadratureRule,
}

impl<T: Real> FrequencyGrid<T> {
    pub fn new(rule: QuadratureRule, nodes: usize) -> Self {
        match rule {
            QuadratureRule::Trapezoid => Self::trapezoid(nodes),
            QuadratureRule::GaussLegendre => Self::gauss_legendre(nodes),
        }
    }

    pub fn trapezoid(nodes: usize) -> Self {
        assert!(nodes > 0);
        let step = T::two_pi() / T::from_usize_lossy(nodes);
        let omega = (0..nodes).map(|m| -T::PI() + step * T::from_usize_lossy(m)).collect();
        Self { omega, weights: vec![step; nodes], rule: QuadratureRule::Trapezoid }
    }

    pub fn gauss_legendre(nodes: usize) -> Self {
        let (x, w) = gauss_legendre_unit(nodes);
        let pi = T::PI();
        let omega = x.iter().map(|&v| T::lit(v) * pi).collect();
        let weights = w.iter().map(|&v| T::lit(v) * pi).collect();
        Self { omega, weights, rule: QuadratureRule::GaussLegendre }
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// `Σ_m w_m f(ω_m)`.
    pub fn integrate(&self, mut f: impl FnMut(T) -> T) -> T {
        let terms: Vec<T> = self.omega.iter().zip(&self.weights).map(|(&o, &w)| w * f(o)).collect();
        crate::real::pairwise_sum(&terms)
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// Legendre three-term recurrence.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Evaluates a vector of integrals on successively doubled grids until every
/// entry settles to `config.tol`. Returns the finest values and node count.
pub fn integrate_refined<T: Real>(
    config: &QuadratureConfig,
    mut eval: impl FnMut(&FrequencyGrid<T>) -> Result<Vec<T>>,
) -> Result<(Vec<T>, usize)> {
    match try_rule_with(config, config.rule, &mut eval) {
        Err(Error::QuadratureNotConverged { .. })
            if config.fallback && config.rule == QuadratureRule::Trapezoid =>
        {
            let capped = QuadratureConfig { max_nodes: config.max_nodes.min(GAUSS_LEGENDRE_MAX_NODES), ..*config };
            try_rule_with(&capped, QuadratureRule::GaussLegendre, &mut eval)
        }
        other => other,
    }
}

/// Node construction for Gauss-Legendre is quadratic in the node count.
const GAUSS_LEGENDRE_MAX_NODES: usize = 8192;

fn try_rule_with<T: Real>(
    config: &QuadratureConfig,
    rule: QuadratureRule,
    eval: &mut dyn FnMut(&FrequencyGrid<T>) -> Result<Vec<T>>,
) -> Result<(Vec<T>, usize)> {
    let mut nodes = config.nodes.max(8);
    let mut prev = eval(&FrequencyGrid::new(rule, nodes))?;
    if !config.refine {
        return Ok((prev, nodes));
    }
    let tol = T::lit(config.tol);
    let mut change = f64::INFINITY;
    while nodes * 2 <= config.max_nodes {
        let next_nodes = nodes * 2;
        let next = eval(&FrequencyGrid::new(rule, next_nodes))?;
        let c = prev
            .iter()
            .zip(&next)
            .map(|(&a, &b)| (a - b).abs() / T::one().max(b.abs()))
            .fold(T::zero(), T::max);
        if c <= tol {
            return Ok((next, next_nodes));
        }
        change = c.to_f64_lossy();
        prev = next;
        nodes = next_nodes;
    }
    Err(Error::QuadratureNotConverged { nodes, change })
}
