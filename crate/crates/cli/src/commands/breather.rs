use super::breather_config;
use crate::command::{pair, settle, Context, Outcome, Subcommand};
use anyhow::Result;
use breather_core::breather::{
    anti_continuum_seed, continue_breather, distance_to_unperturbed, floquet_spectrum, localization_fit, Breather, BreatherConfig,
};
use breather_core::config::KeyValues;
use breather_core::oscillator::ActionAngleChart;
use breather_core::potential::PotentialSpec;
use std::io::Write;

/// Continues a one-site breather from the anti-continuum limit.
///
/// With `sweep_eps` set the continuation passes through every listed
/// coupling and the distance to the unperturbed torus is tabulated.
pub struct Find;

impl Subcommand for Find {
    fn name(&self) -> &'static str {
        "breather find"
    }

    fn about(&self) -> &'static str {
        "continue a breather in the coupling and write its section point"
    }

    fn run(&self, cfg: &KeyValues, ctx: &Context) -> Result<Outcome> {
        let potential: PotentialSpec = cfg.get_or("potential", PotentialSpec::monomial(8, 1.0)?)?;
        let action: f64 = cfg.get_or("action", 0.4)?;
        let eps: f64 = cfg.get_or("eps", 0.05)?;
        let eps_step: f64 = cfg.get_or("eps_step", 0.01)?;
        let tol: f64 = cfg.get_or("tol", 1e-10)?;
        let (lo, hi) = pair(cfg, "chart_range", (0.05, 0.6))?;
        let bc = breather_config(cfg, "", BreatherConfig::default())?;
        let floquet: bool = cfg.get_or("floquet", false)?;
        let beta: f64 = cfg.get_or("beta", 1.0)?;
        let sweep: Vec<f64> = cfg.list("sweep_eps")?.unwrap_or_default();
        let output: String = cfg.get_or("output", "breather".to_string())?;
        settle(cfg, &["max_defect", "min_r_squared", "max_newton_steps", "max_floquet_excess", "max_ratio_spread"])?;
        let mut out = Outcome::default();

        let chart = ActionAngleChart::for_potential(potential, lo, hi)?;
        let mut targets = sweep.clone();
        targets.push(eps);
        targets.sort_by(f64::total_cmp);
        targets.dedup();
        let mut current = anti_continuum_seed(&chart, action, &bc)?;
        let mut solved: Vec<Breather> = Vec::new();
        for &e in &targets {
            current = continue_breather(&current, e, eps_step, tol, &bc)?;
            solved.push(current.clone());
        }
        let main = solved.iter().find(|b| b.eps == eps).expect("eps is among the targets");
        main.write_csv(ctx.create(&mut out, &format!("{output}.csv"))?)?;

        out.at_most(cfg, "max_defect", main.defect)?;
        let fit = localization_fit(main)?;
        out.at_least(cfg, "min_r_squared", fit.r_squared)?;
        let newton = solved.iter().flat_map(|b| b.newton_history.iter().copied()).max().unwrap_or(0);
        out.at_most(cfg, "max_newton_steps", newton as f64)?;

        if floquet {
            let spec = floquet_spectrum(main, &bc)?;
            let mut w = ctx.create(&mut out, &format!("{output}_floquet.csv"))?;
            writeln!(w, "re,im,modulus")?;
            for z in &spec.eigenvalues {
                writeln!(w, "{:.17e},{:.17e},{:.17e}", z.re, z.im, z.norm())?;
            }
            out.at_most(cfg, "max_floquet_excess", spec.max_excess)?;
        }

        if !sweep.is_empty() {
            let mut w = ctx.create(&mut out, &format!("{output}_sweep.csv"))?;
            writeln!(w, "eps,defect,beta_hat,distance,distance_over_sqrt_eps")?;
            let mut ratios = Vec::new();
            for b in solved.iter().filter(|b| sweep.contains(&b.eps)) {
                let d = distance_to_unperturbed(b, &chart, beta)?;
                let ratio = d / b.eps.sqrt();
                ratios.push(ratio);
                writeln!(w, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", b.eps, b.defect, b.beta_hat, d, ratio)?;
            }
            let spread = ratios.iter().cloned().fold(0.0, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            out.at_most(cfg, "max_ratio_spread", spread)?;
        }
        Ok(out)
    }
}
