use std::sync::OnceLock;

use proptest::prelude::*;
use specbayes::geometry::*;
use specbayes::likelihood::{log_likelihood, log_likelihood_levinson, sample_path};
use specbayes::linalg::Matrix;
use specbayes::model::{SigmaPolicy, SpectralModel};
use specbayes::posterior::*;
use specbayes::quadrature::{FrequencyGrid, QuadratureConfig};
use specbayes::risk::{asymptotic_risk, kl_on_grid, MeanSe, RepsRule};

fn arma11() -> SpectralModel<f64> {
    SpectralModel::arma(1, 1, SigmaPolicy::FreeLogVariance).unwrap()
}

fn coords() -> impl Strategy<Value = Vec<f64>> {
    (-0.9..0.9f64, -0.9..0.9f64, -1.0..1.0f64).prop_map(|(a, b, s)| vec![a, b, s])
}

fn spd(k: usize) -> impl Strategy<Value = Matrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, k * k).prop_map(move |v| {
        let a = Matrix::from_fn(k, k, |i, j| v[i * k + j]);
        let mut m = a.matmul(&a.transpose());
        for i in 0..k {
            m[(i, i)] += 0.3;
        }
        m
    })
}

struct Fixture {
    x: Vec<f64>,
    summary: PosteriorSummary<f64>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let model = arma11();
        let t0 = model.validate(&[0.5, 0.2, 0.0]).unwrap();
        let x = sample_path(&model, &t0, 120, 5).unwrap();
        let fit = fit_mle(&model, &x, &default_init(&model, &x).unwrap(), &FitOptions::default()).unwrap();
        let summary =
            PosteriorSummary::build(&model, &x, &fit.theta_hat, PriorSpec::Jeffreys, &QuadratureConfig::default()).unwrap();
        Fixture { x, summary }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kl_is_nonnegative_and_zero_only_on_equal_spectra(c0 in coords(), c1 in coords()) {
        let model = arma11();
        let (t0, t1) = (model.validate(&c0).unwrap(), model.validate(&c1).unwrap());
        let grid = FrequencyGrid::<f64>::trapezoid(128);
        let s0: Vec<f64> = grid.omega.iter().map(|&w| model.spectral_density(&t0, w)).collect();
        let s1: Vec<f64> = grid.omega.iter().map(|&w| model.spectral_density(&t1, w)).collect();
        let d = kl_on_grid(&grid, &s0, &s1).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(kl_on_grid(&grid, &s0, &s0).unwrap(), 0.0);
        let gap = s0.iter().zip(&s1).map(|(a, b)| (a / b - 1.0).abs()).fold(0.0, f64::max);
        if gap > 1e-3 {
            prop_assert!(d > 0.0);
        }
    }

    #[test]
    fn spectral_density_is_positive_even_and_integrates_to_variance(c in coords(), w in 0.0..std::f64::consts::PI) {
        let model = arma11();
        let t = model.validate(&c).unwrap();
        let s = model.spectral_density(&t, w);
        prop_assert!(s > 0.0);
        prop_assert!((s - model.spectral_density(&t, -w)).abs() <= 1e-14 * s);
        let grid = FrequencyGrid::<f64>::trapezoid(4096);
        let integral: f64 = grid.omega.iter().zip(&grid.weights).map(|(&w, &q)| q * model.spectral_density(&t, w)).sum();
        let g0 = model.autocovariances(&t, 0)[0];
        prop_assert!((integral - g0).abs() < 1e-8 * g0);
    }

    #[test]
    fn levinson_and_dense_likelihoods_agree(c in coords(), seed in 0u64..1000) {
        let model = arma11();
        let t = model.validate(&c).unwrap();
        let x = sample_path(&model, &t, 60, seed).unwrap();
        let a = log_likelihood(&model, &t, &x).unwrap();
        let b = log_likelihood_levinson(&model, &t, &x).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn fourth_moments_are_symmetric_with_gaussian_kurtosis(j in spd(3), n in 1usize..50) {
        let mo = gaussian_moments(&j, n, &[2, 4]).unwrap();
        let i4 = mo.i4.as_ref().unwrap();
        for a in 0..3 {
            prop_assert!((i4[(a, a, a, a)] - 3.0 * mo.i2[(a, a)].powi(2)).abs() <= 1e-12 * i4[(a, a, a, a)]);
            for b in 0..3 {
                for c in 0..3 {
                    for d in 0..3 {
                        let v = i4[(a, b, c, d)];
                        let tol = 1e-14 * i4[(a, a, a, a)].max(i4[(d, d, d, d)]).max(1.0);
                        prop_assert!((v - i4[(b, a, c, d)]).abs() <= tol);
                        prop_assert!((v - i4[(c, b, a, d)]).abs() <= tol);
                        prop_assert!((v - i4[(d, b, c, a)]).abs() <= tol);
                    }
                }
            }
        }
    }

    #[test]
    fn prior_shift_difference_is_information_times_log_ratio_gradient(
        lin in prop::collection::vec(-2.0..2.0f64, 3),
        q in -1.0..0.0f64,
    ) {
        let f = fixture();
        let h = ExpQuadraticField { constant: 0.0, linear: lin, quadratic: Matrix::from_fn(3, 3, |i, j| if i == j { q } else { 0.0 }) };
        let other = f.summary.with_prior(PriorSpec::jeffreys_times(h.clone())).unwrap();
        let th = f.summary.theta_hat.coords();
        let want = f.summary.moments.i2.matvec(&h.log_gradient(th));
        for i in 0..3 {
            prop_assert!((other.b_f[i] - f.summary.b_f[i] - want[i]).abs() < 1e-13);
        }
        prop_assert_eq!(f.x.len(), f.summary.n);
    }

    #[test]
    fn geometry_tensors_have_their_index_symmetries(a1 in -1.6..1.6f64, frac in 0.05..0.95f64) {
        // AR(2) triangle: |a2| < 1, a2 ± a1 < 1
        let lo = -1.0f64;
        let hi = 1.0 - a1.abs();
        let a2 = lo + (hi - lo) * frac;
        let model = SpectralModel::<f64>::ar(2, 1.0).unwrap();
        let t = model.validate(&[a1 * 0.95, a2 * 0.95]).unwrap();
        let geo = geometry_at(&model, &t, &QuadratureConfig::default()).unwrap();
        prop_assert!(geo.g.is_symmetric(1e-14 * geo.g[(0, 0)]));
        let scale = geo.t.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    prop_assert!((geo.t[(i, j, k)] - geo.t[(j, i, k)]).abs() < 1e-12 * scale);
                    prop_assert!((geo.t[(i, j, k)] - geo.t[(i, k, j)]).abs() < 1e-12 * scale);
                    prop_assert!((geo.eg[(i, j, k)] - geo.eg[(i, k, j)]).abs() < 1e-12 * scale);
                    prop_assert!((geo.gm[(i, j, k)] - geo.gm[(i, k, j)]).abs() < 1e-12 * scale);
                    let d = |a: usize, b: usize, c: usize| geo.gm[(a, b, c)] - geo.eg[(a, b, c)];
                    prop_assert!((d(i, j, k) - d(j, i, k)).abs() < 1e-10 * scale);
                }
            }
        }
    }

    #[test]
    fn risk_difference_equals_difference_of_prior_parts(a in -0.85..0.85f64, b in -1.5..1.5f64, q in -1.0..0.0f64) {
        let model = SpectralModel::<f64>::ar(1, 1.0).unwrap();
        let t = model.validate(&[a]).unwrap();
        let h = ExpQuadraticField { constant: 0.0, linear: vec![b], quadratic: Matrix::from_rows(&[vec![q]]) };
        let r = asymptotic_risk(&model, &t, &PriorSpec::jeffreys_times(h), &QuadratureConfig::default()).unwrap();
        prop_assert!((r.diff_from_f_parts() - r.diff_vs_jeffreys).abs() < 1e-5 * r.f_part_jeffreys.abs().max(1.0));
        prop_assert!(r.components[0] >= 0.0);
    }

    #[test]
    fn reps_rule_stays_within_its_clamp(sd in 0.0..1.0f64, pred in -1e-3..1e-3f64) {
        let rule = RepsRule::Pilot { pilot: 50, target_t: 4.0, min: 100, max: 5000 };
        let r = rule.size(sd, pred);
        prop_assert!((100..=5000).contains(&r));
        prop_assert!(rule.size(sd * 2.0, pred) >= r);
        prop_assert_eq!(RepsRule::Fixed { reps: 17 }.size(sd, pred), 17);
    }

    #[test]
    fn mean_se_is_shift_equivariant(xs in prop::collection::vec(-1.0..1.0f64, 2..60), c in -5.0..5.0f64) {
        let a = MeanSe::of(&xs);
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let b = MeanSe::of(&shifted);
        prop_assert!((b.mean - a.mean - c).abs() < 1e-12);
        prop_assert!((b.se - a.se).abs() < 1e-9);
        prop_assert!(a.se >= 0.0);
    }
}
