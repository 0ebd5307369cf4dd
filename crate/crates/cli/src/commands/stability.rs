use super::breather_config;
use crate::command::{pair, settle, Context, Outcome, Subcommand};
use anyhow::{bail, Result};
use breather_core::config::KeyValues;
use breather_core::experiments::modulation::NormalFormRoute;
use breather_core::experiments::{
    emit_report, run_mu_sweep, scaling_summary, write_scaling, ExperimentConfig, FamilySpec, StabilityRecord, StabilitySetup,
};
use breather_core::normal_form::{build_initial, normalize, NormalFormConfig};
use std::path::PathBuf;
use std::sync::Arc;

fn experiment(cfg: &KeyValues, ctx: &Context) -> Result<ExperimentConfig> {
    let d = ExperimentConfig::default();
    let eps: f64 = cfg.get_or("eps", d.eps)?;
    let delta: f64 = cfg.get_or("delta", d.delta)?;
    let i_label: f64 = cfg.get_or("i_label", d.i_label)?;
    let fd = FamilySpec::default();
    let family = FamilySpec {
        eps,
        center: i_label,
        half_width: cfg.get_or("family.half_width", fd.half_width)?,
        members: cfg.get_or("family.members", fd.members)?,
        eps_step: cfg.get_or("family.eps_step", fd.eps_step)?,
        newton_tol: cfg.get_or("family.newton_tol", fd.newton_tol)?,
        breather: breather_config(cfg, "family.", fd.breather)?,
    };
    Ok(ExperimentConfig {
        eps,
        delta,
        mu: cfg.get_or("mu", eps.powf(delta))?,
        potential: cfg.get_or("potential", d.potential)?,
        i_label,
        n: cfg.get_or("n", d.n)?,
        horizon: cfg.get_or("horizon", d.horizon)?,
        dt: cfg.get_or("dt", d.dt)?,
        scheme: cfg.get_or("scheme", d.scheme)?,
        sample_interval: cfg.get_or("sample_interval", d.sample_interval)?,
        norms: cfg.list("norms")?.unwrap_or(d.norms),
        residual_s: cfg.get_or("residual_s", d.residual_s)?,
        shape: cfg.get_or("shape", d.shape)?,
        transverse: cfg.get_or("transverse", d.transverse)?,
        seed: ctx.seed(cfg)?,
        family,
        route: cfg.get_or("route", d.route)?,
        output: cfg.get_or("output", PathBuf::from("stability"))?,
    })
}

/// Perturbs a breather, integrates the full chain and tracks the
/// modulation parameters; `mu_factors` adds a sweep in the kick size.
pub struct Stability;

impl Subcommand for Stability {
    fn name(&self) -> &'static str {
        "stability"
    }

    fn about(&self) -> &'static str {
        "perturbed-breather run with modulation tracking and space-time norms"
    }

    fn run(&self, cfg: &KeyValues, ctx: &Context) -> Result<Outcome> {
        let exp = experiment(cfg, ctx)?;
        let factors: Vec<f64> = cfg.list("mu_factors")?.unwrap_or_else(|| vec![1.0]);
        let nf_sites: usize = cfg.get_or("nf.sites", 4)?;
        let nf_range = pair(cfg, "nf.action_range", (0.22, 0.58))?;
        settle(
            cfg,
            &["max_residual_over_mu", "max_drift_over_bound", "max_energy_drift", "drift_ratio", "norm_ratio"],
        )?;
        if factors.is_empty() || factors.iter().any(|f| !(*f > 0.0)) {
            bail!("'mu_factors' needs positive factors");
        }
        exp.validate()?;

        let mut setup = StabilitySetup::new(&exp)?;
        if exp.route == "normal-form" {
            let nfc = NormalFormConfig {
                sites: nf_sites,
                action_range: nf_range,
                ..NormalFormConfig::default()
            };
            let nf = normalize(build_initial(&setup.chart, exp.eps, &nfc)?, &nfc)?;
            let route = NormalFormRoute::new(&nf, setup.chart.clone(), &setup.family)?;
            setup.routes.register(Arc::new(route));
        }
        let records: Vec<StabilityRecord> = run_mu_sweep(&exp, &setup, &factors)?;

        let mut out = Outcome::default();
        for (rec, f) in records.iter().zip(&factors) {
            let c = ExperimentConfig {
                mu: rec.mu,
                output: if factors.len() == 1 { exp.output.clone() } else { PathBuf::from(format!("{}_mu{f}", exp.output.display())) },
                ..exp.clone()
            };
            let files = emit_report(rec, &c, &ctx.out_dir)?;
            out.files.extend([files.series, files.summary, files.plot]);
            let s = rec.summarize(&exp.norms, exp.residual_s)?;
            out.at_most(cfg, "max_residual_over_mu", s.max_residual_over_mu)?;
            out.at_most(cfg, "max_drift_over_bound", s.drift / s.drift_bound)?;
            out.at_most(cfg, "max_energy_drift", s.energy_drift)?;
        }
        if records.len() >= 2 {
            let sc = scaling_summary(&records, &exp.norms, exp.residual_s)?;
            write_scaling(&sc, ctx.create(&mut out, &format!("{}_scaling.csv", exp.output.display()))?)?;
            // the first two runs: μ and the next factor, typically μ/2
            out.within(cfg, "drift_ratio", sc.drifts[0] / sc.drifts[1])?;
            out.within(cfg, "norm_ratio", sc.norms[0] / sc.norms[1])?;
        }
        Ok(out)
    }
}
