//! Job runners. All numerics come from the library; this module sequences
//! calls, sorts cells, and shapes tables.

use std::fmt::Display;
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::json;
use specbayes::geometry::{check_superharmonic, geometry_at, ModelMetric, PriorSpec, ScalarField};
use specbayes::likelihood::PathSampler;
use specbayes::linalg::Cholesky;
use specbayes::posterior::{
    bayes_spectral_expansion, bayes_spectral_oracle, default_init, fit_mle, mle_bias, ExpansionRoute, FitOptions,
};
use specbayes::quadrature::FrequencyGrid;
use specbayes::risk::{dominance_experiment, mix, paired_losses, DominanceConfig, Estimator, MeanSe};
use specbayes::{Model, Theta};

use crate::config::{ExperimentConfig, JobInputs, JobSpec, Validated, JEFFREYS};
use crate::error::{CliError, Result};
use crate::report::{num, JobReport, Table, Verdict};
use crate::svg::{self, Panel, Series};

pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub built: &'a Validated,
    pub hash: &'a str,
}

impl Context<'_> {
    fn model(&self) -> &Model {
        &self.built.model
    }

    fn theta0(&self) -> &Theta {
        &self.built.theta0
    }

    fn field(&self, name: &str) -> Arc<dyn ScalarField<f64>> {
        self.built.fields[name].clone()
    }

    fn metric(&self) -> ModelMetric<'_, f64> {
        ModelMetric { model: self.model(), quad: self.cfg.numerics.quad }
    }
}

/// Seed of job `index`; cells derive theirs from it.
pub fn job_seed(seed: u64, index: usize) -> u64 {
    mix(seed, index as u64)
}

fn compute(job: &str, cell: impl Display) -> impl FnOnce(specbayes::Error) -> CliError + '_ {
    let cell = cell.to_string();
    move |source| CliError::Compute { job: job.to_owned(), cell, source }
}

fn failure_check(job: &str, cell: impl Display, failed: usize, reps: usize, rate: f64) -> Result<()> {
    if failed as f64 > rate * reps as f64 {
        return Err(compute(job, cell)(specbayes::Error::TooManyFitFailures { failed, reps }));
    }
    Ok(())
}

pub fn run_job(ctx: &Context<'_>, index: usize) -> Result<JobReport> {
    let job = &ctx.cfg.jobs[index];
    let name = job.name(index);
    let seed = job_seed(ctx.cfg.seed, index);
    let inputs = &ctx.built.jobs[index];
    let mut report = JobReport {
        name: name.clone(),
        kind: job.kind(),
        seed,
        table: Table::default(),
        result: json!({}),
        verdicts: Vec::new(),
        svg: None,
    };
    match (job, inputs) {
        (JobSpec::GeometryTable { .. }, JobInputs::Points(points)) => geometry_table(ctx, &mut report, points),
        (JobSpec::SuperharmonicCheck { h, tol, .. }, JobInputs::Grid(grid)) => {
            superharmonic_check(ctx, &mut report, h, grid, *tol)
        }
        (JobSpec::BiasCheck { n, reps, z, .. }, _) => bias_check(ctx, &mut report, *n, *reps, *z),
        (JobSpec::DominanceExperiment { .. }, JobInputs::Grid(grid)) => dominance(ctx, &mut report, job, grid),
        (JobSpec::ExpansionVsOracle { prior, route, n_grid, reps, omega_nodes, max_slope, .. }, _) => {
            expansion_vs_oracle(ctx, &mut report, prior, *route, n_grid, *reps, *omega_nodes, *max_slope)
        }
        _ => unreachable!("validation pairs every job with its inputs"),
    }?;
    Ok(report)
}

fn theta_columns(prefix: &str, k: usize) -> Vec<String> {
    (0..k).map(|i| format!("{prefix}_{i}")).collect()
}

fn header(parts: &[&[String]]) -> Table {
    let cols: Vec<String> = parts.iter().flat_map(|p| p.iter().cloned()).collect();
    Table { header: cols, rows: Vec::new() }
}

fn strs(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn geometry_table(ctx: &Context<'_>, report: &mut JobReport, points: &[Theta]) -> Result<()> {
    let k = ctx.model().dim();
    let g_cols: Vec<String> = (0..k).flat_map(|i| (i..k).map(move |j| format!("g_{i}_{j}"))).collect();
    let mut table = header(&[
        &strs(&["config_hash", "point"]),
        &theta_columns("theta", k),
        &g_cols,
        &strs(&["log_jeffreys"]),
        &theta_columns("t", k),
        &strs(&["nodes"]),
    ]);
    let mut entries = Vec::new();
    for (j, p) in points.iter().enumerate() {
        let geo = geometry_at(ctx.model(), p, &ctx.cfg.numerics.quad).map_err(compute(&report.name, format_args!("point {j}")))?;
        let chol = Cholesky::factor(&geo.g).map_err(compute(&report.name, format_args!("point {j}")))?;
        let log_jeffreys = 0.5 * chol.log_det();
        let mut row = vec![ctx.hash.to_owned(), j.to_string()];
        row.extend(p.coords().iter().map(|&v| num(v)));
        row.extend((0..k).flat_map(|a| (a..k).map(move |b| (a, b))).map(|(a, b)| num(geo.g[(a, b)])));
        row.push(num(log_jeffreys));
        row.extend(geo.t_i.iter().map(|&v| num(v)));
        row.push(geo.nodes.to_string());
        table.push(row);
        entries.push(json!({
            "theta": p.coords(),
            "g": (0..k).map(|a| geo.g.row(a).to_vec()).collect::<Vec<_>>(),
            "t_i": geo.t_i,
            "log_jeffreys": log_jeffreys,
            "nodes": geo.nodes,
        }));
    }
    report.table = table;
    report.result = json!({ "points": entries });
    report.verdicts.push(Verdict::new("metric-positive-definite", true, format!("{} points", points.len())));
    Ok(())
}

fn superharmonic_json(h: &str, field: &dyn ScalarField<f64>, rep: &specbayes::SuperharmonicReport) -> serde_json::Value {
    json!({
        "h": h,
        "field": field.describe(),
        "nodes": rep.nodes.len(),
        "pass": rep.pass,
        "positive": rep.positive,
        "min_value": rep.min_value,
        "max_laplacian": rep.max_laplacian,
        "worst_node": rep.worst_node,
        "margin": rep.margin(),
        "tol": rep.tol,
    })
}

fn superharmonic_verdict(h: &str, rep: &specbayes::SuperharmonicReport) -> Verdict {
    Verdict::new(
        "superharmonic",
        rep.pass,
        format!(
            "h = {h}: max Δh = {:e} at {:?} (margin {:e}), min h = {:e} over {} nodes",
            rep.max_laplacian,
            rep.worst_node,
            rep.margin(),
            rep.min_value,
            rep.nodes.len()
        ),
    )
}

fn superharmonic_check(ctx: &Context<'_>, report: &mut JobReport, h: &str, grid: &[Vec<f64>], tol: f64) -> Result<()> {
    let k = ctx.model().dim();
    let field = ctx.field(h);
    let rep = check_superharmonic(field.as_ref(), grid, &ctx.metric(), tol).map_err(compute(&report.name, "grid"))?;
    let mut table = header(&[&strs(&["config_hash", "node"]), &theta_columns("theta", k), &strs(&["value", "laplacian"])]);
    for (j, node) in rep.nodes.iter().enumerate() {
        let mut row = vec![ctx.hash.to_owned(), j.to_string()];
        row.extend(node.theta.iter().map(|&v| num(v)));
        row.push(num(node.value));
        row.push(num(node.laplacian));
        table.push(row);
    }
    report.table = table;
    report.result = superharmonic_json(h, field.as_ref(), &rep);
    report.verdicts.push(superharmonic_verdict(h, &rep));
    Ok(())
}

fn bias_check(ctx: &Context<'_>, report: &mut JobReport, n: usize, reps: usize, z: f64) -> Result<()> {
    let (model, theta0, seed) = (ctx.model(), ctx.theta0(), report.seed);
    let k = model.dim();
    let sampler = PathSampler::new(model, theta0, n).map_err(compute(&report.name, format_args!("n = {n}")))?;
    let base = FitOptions { information: false, ..ctx.cfg.numerics.fit };
    let errors: Vec<Option<Vec<f64>>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let x = sampler.sample(seed, r);
            let init = default_init(model, &x).ok()?;
            let fit = fit_mle(model, &x, &init, &FitOptions { seed: mix(seed, r), ..base }).ok()?;
            Some(fit.theta_hat.coords().iter().zip(theta0.coords()).map(|(a, b)| a - b).collect())
        })
        .collect();
    let ok: Vec<&Vec<f64>> = errors.iter().flatten().collect();
    let failures = reps - ok.len();
    failure_check(&report.name, format_args!("n = {n}"), failures, reps, ctx.cfg.numerics.max_failure_rate)?;
    let bias = mle_bias(model, theta0, n, &ctx.cfg.numerics.quad).map_err(compute(&report.name, format_args!("n = {n}")))?;
    let mut table = Table::new(&["config_hash", "n", "reps", "coord", "mc_bias", "mc_se", "finite_n", "geometric", "seed"]);
    let mut coords = Vec::new();
    for i in 0..k {
        let mc = MeanSe::of(&ok.iter().map(|e| e[i]).collect::<Vec<_>>());
        table.push(vec![
            ctx.hash.to_owned(),
            n.to_string(),
            ok.len().to_string(),
            i.to_string(),
            num(mc.mean),
            num(mc.se),
            num(bias.finite_n[i]),
            num(bias.geometric[i]),
            seed.to_string(),
        ]);
        let gap = (mc.mean - bias.finite_n[i]).abs();
        report.verdicts.push(Verdict::new(
            &format!("bias-within-band[{i}]"),
            gap <= z * mc.se,
            format!("|{:e} − {:e}| = {:e} vs {z}·SE = {:e}", mc.mean, bias.finite_n[i], gap, z * mc.se),
        ));
        coords.push(json!({
            "coord": i,
            "mc_bias": mc.mean,
            "mc_se": mc.se,
            "finite_n": bias.finite_n[i],
            "geometric": bias.geometric[i],
        }));
    }
    report.table = table;
    report.result = json!({ "n": n, "reps": ok.len(), "failures": failures, "coords": coords });
    Ok(())
}

fn dominance(ctx: &Context<'_>, report: &mut JobReport, job: &JobSpec, grid: &[Vec<f64>]) -> Result<()> {
    let JobSpec::DominanceExperiment {
        h, n_grid, reps, estimator, tol, min_t, null_max_t, band_sigmas, oracle_audit_reps, ..
    } = job
    else {
        unreachable!()
    };
    let (model, theta0, seed) = (ctx.model(), ctx.theta0(), report.seed);
    let field = ctx.field(h);
    let null = ctx.cfg.h[h.as_str()].is_constant();
    report.table = Table::new(&[
        "config_hash", "n", "reps", "risk_jeffreys", "risk_h", "diff", "diff_se", "n2_diff", "asymptote", "floored_count", "seed",
    ]);

    let pre = check_superharmonic(field.as_ref(), grid, &ctx.metric(), *tol).map_err(compute(&report.name, "superharmonic grid"))?;
    report.verdicts.push(superharmonic_verdict(h, &pre));
    let pre_json = superharmonic_json(h, field.as_ref(), &pre);
    if !pre.pass {
        report.result = json!({ "superharmonic": pre_json, "cells": [] });
        return Ok(());
    }

    let dcfg = DominanceConfig { risk: ctx.cfg.numerics, estimator: *estimator, reps: *reps };
    let mut rep = dominance_experiment(model, theta0, field.clone(), n_grid, seed, &dcfg)
        .map_err(compute(&report.name, format_args!("n_grid {n_grid:?}")))?;
    rep.cells.sort_by_key(|c| c.n);

    let mut cells_json = Vec::new();
    for c in &rep.cells {
        report.table.push(vec![
            ctx.hash.to_owned(),
            c.n.to_string(),
            c.reps.to_string(),
            num(c.risk_jeffreys.mean),
            num(c.risk_h.mean),
            num(c.diff.mean),
            num(c.diff.se),
            num(c.n2_diff),
            num(c.asymptote),
            c.floored_count.to_string(),
            c.seed.to_string(),
        ]);
        let audit = if *oracle_audit_reps >= 2 {
            Some(audit_cell(ctx, &report.name, field.clone(), c.n, *oracle_audit_reps, c.seed, *estimator)?)
        } else {
            None
        };
        cells_json.push(json!({
            "n": c.n,
            "reps": c.reps,
            "failures": c.failures,
            "seed": c.seed,
            "risk_jeffreys": c.risk_jeffreys,
            "risk_h": c.risk_h,
            "diff": c.diff,
            "unpaired_se": c.unpaired_se,
            "t_stat": c.t_stat,
            "n2_diff": c.n2_diff,
            "n2_diff_se": c.n2_diff_se,
            "asymptote": c.asymptote,
            "floored_count": c.floored_count,
            "oracle_audit": audit,
        }));
    }

    let ts: Vec<f64> = rep.cells.iter().map(|c| c.t_stat).collect();
    if null {
        let worst = ts.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        report.verdicts.push(Verdict::new(
            "null-control",
            worst < *null_max_t,
            format!("max |t| = {worst} (bound {null_max_t}); t by n: {ts:?}"),
        ));
    } else {
        report.verdicts.push(Verdict::new(
            "positive-difference",
            ts.iter().all(|t| *t > *min_t),
            format!("t by n: {ts:?} (need > {min_t})"),
        ));
        let (first, last) = (&rep.cells[0], &rep.cells[rep.cells.len() - 1]);
        let gap = |c: &specbayes::risk::DominanceCell<f64>| c.n2_diff - c.asymptote;
        let within = gap(last).abs() <= band_sigmas * last.n2_diff_se;
        let band = band_sigmas * (first.n2_diff_se.powi(2) + last.n2_diff_se.powi(2)).sqrt();
        let not_growing = gap(last).abs() <= gap(first).abs() + band;
        report.verdicts.push(Verdict::new(
            "asymptote-consistency",
            within && not_growing,
            format!(
                "n²·diff = {} ± {} at n = {} vs asymptote {}; gap {} at n = {} (band {})",
                last.n2_diff,
                last.n2_diff_se,
                last.n,
                last.asymptote,
                gap(first),
                first.n,
                band
            ),
        ));
    }
    let paired_ok = rep.cells.iter().all(|c| c.diff.se < c.unpaired_se || (null && c.diff.se == 0.0));
    report.verdicts.push(Verdict::new("paired-variance-reduction", paired_ok, "paired SE below unpaired SE in every cell"));

    report.svg = Some(dominance_svg(&report.name, h, &rep));
    report.result = json!({
        "h": h,
        "field": rep.h,
        "theta0": rep.theta0,
        "estimator": estimator,
        "asymptotic": rep.asymptotic,
        "superharmonic": pre_json,
        "cells": cells_json,
    });
    Ok(())
}

fn audit_cell(
    ctx: &Context<'_>,
    job: &str,
    field: Arc<dyn ScalarField<f64>>,
    n: usize,
    reps: usize,
    cell_seed: u64,
    estimator: Estimator,
) -> Result<serde_json::Value> {
    let priors = [PriorSpec::Jeffreys, PriorSpec::JeffreysTimesH(field)];
    let run = |est: Estimator| {
        paired_losses(ctx.model(), ctx.theta0(), &priors, n, reps, cell_seed, est, &ctx.cfg.numerics)
            .map_err(compute(job, format_args!("oracle audit n = {n}")))
    };
    let (oracle, expansion) = (run(Estimator::Oracle)?, run(estimator)?);
    let summary = |p: &specbayes::risk::PairedLosses<f64>| {
        json!({
            "reps": p.losses.len(),
            "failures": p.failures,
            "risk_jeffreys": p.risk(0),
            "risk_h": p.risk(1),
            "diff": p.difference(0, 1),
        })
    };
    Ok(json!({ "oracle": summary(&oracle), "estimator": summary(&expansion) }))
}

fn dominance_svg(name: &str, h: &str, rep: &specbayes::DominanceReport) -> String {
    let x = |c: &specbayes::risk::DominanceCell<f64>| c.n as f64;
    let risks = Panel {
        y_label: "KL risk ± 2 SE".into(),
        log_y: true,
        series: vec![
            Series { label: "Jeffreys".into(), points: rep.cells.iter().map(|c| (x(c), c.risk_jeffreys.mean, 2.0 * c.risk_jeffreys.se)).collect() },
            Series { label: format!("Jeffreys × {h}"), points: rep.cells.iter().map(|c| (x(c), c.risk_h.mean, 2.0 * c.risk_h.se)).collect() },
        ],
        lines: vec![],
    };
    let diff = Panel {
        y_label: "n² · risk difference ± 2 SE".into(),
        log_y: false,
        series: vec![Series {
            label: "paired difference".into(),
            points: rep.cells.iter().map(|c| (x(c), c.n2_diff, 2.0 * c.n2_diff_se)).collect(),
        }],
        lines: vec![("asymptote".into(), rep.asymptotic.diff_vs_jeffreys)],
    };
    svg::render(&format!("{name}: Jeffreys vs Jeffreys × {h}"), "n", &[risks, diff])
}

#[allow(clippy::too_many_arguments)]
fn expansion_vs_oracle(
    ctx: &Context<'_>,
    report: &mut JobReport,
    prior_name: &str,
    route: ExpansionRoute,
    n_grid: &[usize],
    reps: usize,
    omega_nodes: usize,
    max_slope: f64,
) -> Result<()> {
    let (model, theta0, seed) = (ctx.model(), ctx.theta0(), report.seed);
    let prior = if prior_name == JEFFREYS { PriorSpec::Jeffreys } else { PriorSpec::JeffreysTimesH(ctx.field(prior_name)) };
    let omega = FrequencyGrid::<f64>::trapezoid(omega_nodes).omega;
    let numerics = &ctx.cfg.numerics;
    let fit_opts = FitOptions { information: true, ..numerics.fit };
    let mut ns = n_grid.to_vec();
    ns.sort_unstable();
    let mut table = Table::new(&[
        "config_hash", "n", "reps", "failures", "truncated", "gap_likelihood", "gap_likelihood_se", "gap_geometric",
        "gap_geometric_se", "gap_routes", "seed",
    ]);
    let max_gap = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let mut cells = Vec::new();
    let mut points = [Vec::new(), Vec::new(), Vec::new()];
    for &n in &ns {
        let cell_seed = mix(seed, n as u64);
        let sampler = PathSampler::new(model, theta0, n).map_err(compute(&report.name, format_args!("n = {n}")))?;
        let out: Vec<Option<([f64; 3], bool)>> = (0..reps as u64)
            .into_par_iter()
            .map(|r| {
                let x = sampler.sample(cell_seed, r);
                let init = default_init(model, &x).ok()?;
                let fit = fit_mle(model, &x, &init, &FitOptions { seed: mix(cell_seed, r), ..fit_opts }).ok()?;
                let th = &fit.theta_hat;
                let e = bayes_spectral_expansion(model, &x, th, &prior, &omega, &numerics.quad).ok()?;
                let o = bayes_spectral_oracle(model, &x, th, fit.j_n.as_ref()?, &prior, &omega, &numerics.oracle).ok()?;
                let v = &o.estimate.values;
                Some((
                    [max_gap(&e.likelihood.values, v), max_gap(&e.geometric.values, v), max_gap(&e.likelihood.values, &e.geometric.values)],
                    o.truncated,
                ))
            })
            .collect();
        let ok: Vec<&([f64; 3], bool)> = out.iter().flatten().collect();
        let failures = reps - ok.len();
        failure_check(&report.name, format_args!("n = {n}"), failures, reps, numerics.max_failure_rate)?;
        let truncated = ok.iter().filter(|o| o.1).count();
        let g: Vec<MeanSe<f64>> = (0..3).map(|i| MeanSe::of(&ok.iter().map(|o| o.0[i]).collect::<Vec<_>>())).collect();
        table.push(vec![
            ctx.hash.to_owned(),
            n.to_string(),
            ok.len().to_string(),
            failures.to_string(),
            truncated.to_string(),
            num(g[0].mean),
            num(g[0].se),
            num(g[1].mean),
            num(g[1].se),
            num(g[2].mean),
            cell_seed.to_string(),
        ]);
        for (i, m) in g.iter().enumerate() {
            points[i].push((n as f64, m.mean, 2.0 * m.se));
        }
        cells.push(json!({
            "n": n, "reps": ok.len(), "failures": failures, "truncated": truncated, "seed": cell_seed,
            "gap_likelihood": g[0], "gap_geometric": g[1], "gap_routes": g[2],
        }));
    }
    let slopes: Vec<f64> = points.iter().map(|p| log_log_slope(p)).collect();
    let chosen = match route {
        ExpansionRoute::Likelihood => slopes[0],
        ExpansionRoute::Geometric => slopes[1],
    };
    report.verdicts.push(Verdict::new(
        "expansion-rate",
        chosen <= max_slope,
        format!("log-log slope {chosen} (need ≤ {max_slope})"),
    ));
    let [pl, pg, pr] = points;
    report.svg = Some(svg::render(
        &format!("{}: expansion vs quadrature oracle", report.name),
        "n",
        &[Panel {
            y_label: "mean max_ω |Ŝ − Ŝ_oracle| ± 2 SE".into(),
            log_y: true,
            series: vec![
                Series { label: "likelihood route".into(), points: pl },
                Series { label: "geometric route".into(), points: pg },
                Series { label: "route difference".into(), points: pr },
            ],
            lines: vec![],
        }],
    ));
    report.table = table;
    report.result = json!({
        "prior": prior_name,
        "route": route,
        "omega_nodes": omega_nodes,
        "slope_likelihood": slopes[0],
        "slope_geometric": slopes[1],
        "slope_routes": slopes[2],
        "cells": cells,
    });
    Ok(())
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(points: &[(f64, f64, f64)]) -> f64 {
    let m = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|p| (p.0.ln(), p.1.ln())).unzip();
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
