use super::breather_config;
use crate::command::{pair, settle, Context, Outcome, Subcommand};
use anyhow::{bail, Result};
use breather_core::breather::{anti_continuum_seed, continue_breather, periodicity_defect, polish, BreatherConfig};
use breather_core::config::KeyValues;
use breather_core::normal_form::{
    build_initial, invariant_manifold_check, normalize, normalize_until, reconstruct_breather_from_nf, NormalForm, NormalFormConfig,
};
use breather_core::numerics::fit_loglog;
use breather_core::oscillator::ActionAngleChart;
use breather_core::potential::PotentialSpec;
use rayon::prelude::*;
use std::f64::consts::TAU;
use std::io::Write;

fn nf_config(cfg: &KeyValues) -> Result<NormalFormConfig> {
    let d = NormalFormConfig::default();
    let c = NormalFormConfig {
        degree: cfg.get_or("degree", d.degree)?,
        cutoff: cfg.get_or("cutoff", d.cutoff)?,
        alpha_points: cfg.get_or("alpha_points", d.alpha_points)?,
        action_nodes: cfg.get_or("action_nodes", d.action_nodes)?,
        sites: cfg.get_or("sites", d.sites)?,
        action_range: pair(cfg, "action_range", d.action_range)?,
        steps: cfg.get_or("steps", d.steps)?,
        lie_order: cfg.get_or("lie_order", d.lie_order)?,
        divisor_floor: cfg.get_or("divisor_floor", d.divisor_floor)?,
        ..d
    };
    c.validate()?;
    Ok(c)
}

/// Normalizes at several couplings, reports each step and fits the
/// residual scaling; optionally cross-checks the reconstructed breather
/// against Newton continuation.
pub struct NormalFormCommand;

impl Subcommand for NormalFormCommand {
    fn name(&self) -> &'static str {
        "normal-form"
    }

    fn about(&self) -> &'static str {
        "normalize around the one-site torus and fit the residual orders in ε"
    }

    fn run(&self, cfg: &KeyValues, ctx: &Context) -> Result<Outcome> {
        let potential: PotentialSpec = cfg.get_or("potential", PotentialSpec::monomial(8, 1.0)?)?;
        let (lo, hi) = pair(cfg, "chart_range", (0.05, 0.6))?;
        let eps: Vec<f64> = cfg.list("eps")?.unwrap_or_else(|| vec![0.0125, 0.025, 0.05, 0.1]);
        let nfc = nf_config(cfg)?;
        let manifold: bool = cfg.get_or("manifold", false)?;
        let cross_eps: Option<f64> = cfg.get("cross_eps")?;
        let cross_action: f64 = cfg.get_or("cross_action", 0.4)?;
        let bc = breather_config(cfg, "breather.", BreatherConfig { n: 24, ..BreatherConfig::default() })?;
        let output: String = cfg.get_or("output", "normal_form".to_string())?;
        let slope_checks: Vec<String> = (1..=nfc.steps).map(|r| format!("slope.r{r}")).collect();
        let mut known: Vec<&str> = slope_checks.iter().map(String::as_str).collect();
        known.extend(["max_back_substitution", "min_manifold_slope", "max_defect_constant", "max_polish_steps"]);
        settle(cfg, &known)?;
        if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) {
            bail!("'eps' needs positive couplings");
        }
        if let Some(e) = cross_eps {
            if !eps.contains(&e) {
                bail!("cross_eps = {e} is not among the normalized couplings");
            }
        }

        let chart = ActionAngleChart::for_potential(potential, lo, hi)?;
        let forms: Vec<NormalForm> = eps
            .par_iter()
            .map(|&e| normalize(build_initial(&chart, e, &nfc)?, &nfc))
            .collect::<breather_core::Result<_>>()?;

        let mut out = Outcome::default();
        for nf in &forms {
            nf.write_report(ctx.create(&mut out, &format!("{output}_eps{}.csv", nf.eps))?)?;
        }
        let back = forms
            .iter()
            .flat_map(|nf| nf.reports.iter().skip(1).map(|r| r.back_substitution))
            .fold(0.0, f64::max);
        out.at_most(cfg, "max_back_substitution", back)?;

        let mut w = ctx.create(&mut out, &format!("{output}_slopes.csv"))?;
        writeln!(w, "step,residual_slope")?;
        if eps.len() >= 2 {
            for r in 1..=nfc.steps {
                let res: Vec<f64> = forms.iter().map(|nf| nf.reports[r].residual_norm).collect();
                let s = fit_loglog(&eps, &res)?.slope;
                writeln!(w, "{r},{s:.17e}")?;
                out.within(cfg, &format!("slope.r{r}"), s)?;
            }
        }
        if manifold && eps.len() >= 2 {
            let xi: Vec<f64> = eps
                .par_iter()
                .map(|&e| Ok(invariant_manifold_check(&normalize_until(build_initial(&chart, e, &nfc)?, &nfc, 1)?).xi))
                .collect::<breather_core::Result<_>>()?;
            let s = fit_loglog(&eps, &xi)?.slope;
            writeln!(w, "manifold_step1,{s:.17e}")?;
            out.at_least(cfg, "min_manifold_slope", s)?;
        }
        w.flush()?;

        if let Some(e) = cross_eps {
            let nf = forms.iter().find(|nf| nf.eps == e).expect("checked above");
            let seed = anti_continuum_seed(&chart, cross_action, &bc)?;
            let b = continue_breather(&seed, e, 0.01, 1e-10, &bc)?;
            let (_, state) = reconstruct_breather_from_nf(nf, TAU / b.period)?;
            let guess = state.resized(bc.n);
            let defect = periodicity_defect(&b.model(), &guess, b.period, bc.residual_steps, &bc.scheme)?;
            let (polished, report) = polish(&b, &guess, 1e-10, &bc)?;
            let gap = polished.point.sub(&b.point)?.l2();
            let mut w = ctx.create(&mut out, &format!("{output}_cross.csv"))?;
            writeln!(w, "quantity,value")?;
            writeln!(w, "eps,{e:.17e}")?;
            writeln!(w, "defect,{defect:.17e}")?;
            writeln!(w, "defect_over_eps_1.5,{:.17e}", defect / e.powf(1.5))?;
            writeln!(w, "polish_steps,{}", report.iterations)?;
            writeln!(w, "distance_to_newton,{gap:.17e}")?;
            w.flush()?;
            out.at_most(cfg, "max_defect_constant", defect / e.powf(1.5))?;
            out.at_most(cfg, "max_polish_steps", report.iterations as f64)?;
        }
        Ok(out)
    }
}
