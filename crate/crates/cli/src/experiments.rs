use effdim::concentration::{scaling_experiment, ScalingConfig};
use effdim::entropy::{build_cover, eps_entropy_bound, unit_entropy_bound, verify_cover, volumetric_lower_bound, EllipsoidAxes};
use effdim::erm::precondition_experiment;
use effdim::smoothing::smoothing_comparison;
use effdim::{CovarianceSpectrum, RngStream};
use serde_json::{json, Value};

use crate::config::{ConcentrationParams, CoverParams, EffdimParams, EntropyParams, Params};
use crate::error::CliError;
use crate::output::{num, Table};

/// Data tables plus the summary document of one experiment.
#[derive(Debug, Clone)]
pub struct Outputs {
    pub tables: Vec<Table>,
    pub summary: Value,
}

pub fn execute(params: &Params, seed: u64) -> Result<Outputs, CliError> {
    match params {
        Params::Effdim(p) => effdim(p, seed),
        Params::Entropy(p) => entropy(p, seed),
        Params::Cover(p) => cover(p, seed),
        Params::Concentration(p) => concentration(p, seed),
        Params::Precondition(p) => precondition(p, seed),
        Params::Smooth(p) => smooth(p, seed),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn effdim(p: &EffdimParams, seed: u64) -> Result<Outputs, CliError> {
    let mut t = Table::new("effdim", &["r", "d_eff", "seed", "trial"]);
    let mut values = Vec::new();
    for &r in &p.r {
        let v = p.spectrum.effective_dimension(r);
        t.push(vec![r.to_string(), num(v), seed.to_string(), "0".into()]);
        values.push(json!({ "r": r, "value": v }));
    }
    let summary = json!({
        "d": p.spectrum.dim(),
        "sigma1": p.spectrum.sigma1(),
        "effective_dimensions": values,
    });
    Ok(Outputs { tables: vec![t], summary })
}

fn entropy(p: &EntropyParams, seed: u64) -> Result<Outputs, CliError> {
    let (spectrum, unit) = match (&p.axes, &p.spectrum) {
        (Some(axes), None) => {
            let e = EllipsoidAxes::new(axes.clone())?;
            let u = unit_entropy_bound(&e, p.c)?;
            (CovarianceSpectrum::new(axes.clone(), None)?, Some(u))
        }
        (None, Some(s)) => (s.clone(), None),
        _ => return Err(CliError::ConfigInvalid("exactly one of axes or spectrum is required".into())),
    };
    let mut t = Table::new(
        "entropy",
        &["eps", "r", "m_eps", "exact_sum", "bracket", "total", "deff_bound", "seed", "trial"],
    );
    let mut inequality = true;
    for &r in &p.r {
        for &eps in &p.eps {
            let b = eps_entropy_bound(&spectrum, eps, r, p.c)?;
            inequality &= b.count_inequality_holds;
            t.push(vec![
                num(eps),
                r.to_string(),
                b.m_eps.to_string(),
                num(b.exact_sum),
                num(b.bracket),
                num(b.exact_total),
                num(b.total),
                seed.to_string(),
                "0".into(),
            ]);
        }
    }
    let summary = json!({
        "d": spectrum.dim(),
        "unit_entropy": unit,
        "count_inequality_holds": inequality,
    });
    Ok(Outputs { tables: vec![t], summary })
}

fn cover(p: &CoverParams, seed: u64) -> Result<Outputs, CliError> {
    let e = EllipsoidAxes::new(p.axes.clone())?;
    let cov = build_cover(&e, p.eps)?;
    let root = RngStream::new(seed, 0);
    let report = verify_cover(&cov, &e, p.samples, &root.substream(0))?;
    let lower = volumetric_lower_bound(&e, p.eps);
    let mut t = Table::new("cover", &["check", "centers", "samples", "violations", "max_dist", "seed", "trial"]);
    t.push(vec![
        "cover".into(),
        cov.len().to_string(),
        report.samples.to_string(),
        report.violations.to_string(),
        num(report.max_dist),
        seed.to_string(),
        "0".into(),
    ]);
    let control = if p.negative_control_fraction > 0.0 {
        let holed = cov.without_cluster(&vec![0.0; e.dim()], p.negative_control_fraction);
        let r = verify_cover(&holed, &e, p.samples, &root.substream(1))?;
        t.push(vec![
            "negative_control".into(),
            holed.len().to_string(),
            r.samples.to_string(),
            r.violations.to_string(),
            num(r.max_dist),
            seed.to_string(),
            "1".into(),
        ]);
        Some(json!({ "centers": holed.len(), "violations": r.violations, "max_dist": r.max_dist }))
    } else {
        None
    };
    let summary = json!({
        "eps": p.eps,
        "cover_size": cov.len(),
        "ln_cover_size": (cov.len() as f64).ln(),
        "volumetric_lower_bound": lower,
        "samples": report.samples,
        "violations": report.violations,
        "max_dist": report.max_dist,
        "negative_control": control,
    });
    Ok(Outputs { tables: vec![t], summary })
}

fn concentration(p: &ConcentrationParams, seed: u64) -> Result<Outputs, CliError> {
    let fs = p.nonlinearities().map_err(CliError::ConfigInvalid)?;
    let cfg = ScalingConfig {
        spectra: p.spectra.iter().map(|s| (s.id.clone(), s.spectrum.clone())).collect(),
        n_grid: p.n_grid.clone(),
        trials: p.trials,
        fs,
        centered: p.centered,
        search: p.search,
        reference_size: p.reference_size,
        master_seed: seed,
    };
    let table = scaling_experiment(&cfg)?;
    let mut t = Table::new("concentration", &["spectrum_id", "n", "trial", "value", "mode", "seed"]);
    for r in &table.records {
        t.push(vec![r.spectrum_id.clone(), r.n.to_string(), r.trial.to_string(), num(r.value), r.mode.as_str().into(), r.seed.to_string()]);
    }
    let slopes: Vec<Value> = table
        .slopes
        .iter()
        .map(|s| {
            json!({
                "spectrum_id": s.spectrum_id,
                "slope": s.slope,
                "stderr": s.stderr,
                "ci95": [s.slope - 1.96 * s.stderr, s.slope + 1.96 * s.stderr],
                "intercept": s.intercept,
            })
        })
        .collect();
    let summary = json!({ "cells": table.cells, "slopes": slopes });
    Ok(Outputs { tables: vec![t], summary })
}

fn precondition(p: &effdim::erm::PrecondConfig<f64>, seed: u64) -> Result<Outputs, CliError> {
    let r = precondition_experiment(p, seed)?;
    let mut t = Table::new("precondition", &["method", "t", "phi", "gap", "ratio", "seed", "trial"]);
    for (method, trace) in [("preconditioned", &r.precond), ("vanilla", &r.vanilla)] {
        for (i, &g) in trace.gaps.iter().enumerate() {
            let ratio = if i == 0 { None } else { trace.ratios.get(i - 1).copied().flatten() };
            t.push(vec![
                method.into(),
                i.to_string(),
                num(trace.phi_star + g),
                num(g),
                opt(ratio),
                seed.to_string(),
                "0".into(),
            ]);
        }
    }
    let summary = json!({
        "mu_hat": r.mu_hat,
        "kappa_bound": r.kappa_bound,
        "rate_bound": 1.0 - 1.0 / r.kappa_bound,
        "l_rel": r.condition.l_rel,
        "sigma_rel": r.condition.sigma_rel,
        "radius": r.radius,
        "phi_star": r.phi_star,
        "eta_preconditioned": r.eta_precond,
        "eta_vanilla": r.eta_vanilla,
        "max_ratio": r.max_ratio,
        "rounds_preconditioned": r.rounds_precond,
        "rounds_vanilla": r.rounds_vanilla,
        "target_gap": p.target_gap,
        "newton_steps": r.newton_steps,
    });
    Ok(Outputs { tables: vec![t], summary })
}

fn smooth(p: &effdim::smoothing::SmoothExperimentConfig<f64>, seed: u64) -> Result<Outputs, CliError> {
    let c = smoothing_comparison(p, seed)?;
    let mut t = Table::new("smooth", &["mode", "t", "gap", "theta", "eta", "u_t", "l_t", "seed", "trial"]);
    for o in &c.outcomes {
        let mode = serde_json::to_value(o.mode)?.as_str().unwrap_or_default().to_string();
        for (i, (g, s)) in o.gaps.iter().zip(&o.schedule).enumerate() {
            t.push(vec![
                mode.clone(),
                i.to_string(),
                num(*g),
                num(s.theta),
                num(s.eta),
                num(s.u),
                num(s.l),
                seed.to_string(),
                o.seed.to_string(),
            ]);
        }
    }
    let per_seed: Vec<Value> = c
        .outcomes
        .iter()
        .map(|o| json!({ "trial": o.seed, "mode": o.mode, "iterations": o.iterations, "reached": o.reached, "final_gap": o.final_gap }))
        .collect();
    let summary = json!({
        "phi_star": c.phi_star,
        "radius": c.radius,
        "lipschitz": c.lipschitz,
        "u_isotropic": c.u_isotropic,
        "u_non_isotropic": c.u_non_isotropic,
        "target_gap": p.target_gap,
        "median_iterations_isotropic": c.median_isotropic,
        "median_iterations_non_isotropic": c.median_non_isotropic,
        "non_isotropic_faster": c.median_non_isotropic < c.median_isotropic,
        "runs": per_seed,
    });
    Ok(Outputs { tables: vec![t], summary })
}
