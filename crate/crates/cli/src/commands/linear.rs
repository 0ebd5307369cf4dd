use crate::command::{pair, parse_norm, settle, Context, Outcome, Subcommand};
use anyhow::{bail, Context as _, Result};
use breather_core::config::KeyValues;
use breather_core::lattice::LatticeState;
use breather_core::linear::{
    dipole, eps_t_grid, measure_decay, propagator::propagate, puiseux_leading_check, resolvent_kernel, van_der_corput_check, DecayOptions,
    LinearPropagator, PhaseInterval,
};
use breather_core::numerics::logspace;
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::io::Write;

/// `dipole` (whole chain), `hl-unit` (`q₁ = 1` on the half chain) or a
/// states CSV resized to `n`.
fn datum(cfg: &KeyValues, n: usize) -> Result<LatticeState> {
    let name: String = cfg.get_or("datum", "dipole".to_string())?;
    Ok(match name.as_str() {
        "dipole" => dipole(n),
        "hl-unit" => {
            let mut s = LatticeState::zeros(n, false);
            s.set(1, 0.0, 1.0);
            s
        }
        path => {
            let file = std::fs::File::open(path).with_context(|| format!("opening datum {path}"))?;
            LatticeState::read_csv(file)?.resized(n)
        }
    })
}

pub struct Propagate;

impl Subcommand for Propagate {
    fn name(&self) -> &'static str {
        "propagate"
    }

    fn about(&self) -> &'static str {
        "run the linear flow and record norms at chosen times"
    }

    fn run(&self, cfg: &KeyValues, ctx: &Context) -> Result<Outcome> {
        let eps: f64 = cfg.get_or("eps", 0.1)?;
        let n: usize = cfg.get_or("n", 1024)?;
        let xi = datum(cfg, n)?;
        let times: Vec<f64> = cfg.list("times")?.unwrap_or_else(|| vec![0.0, 10.0, 50.0, 100.0]);
        let names: Vec<String> = cfg.list("observables")?.unwrap_or_else(|| vec!["l2".into(), "linf".into()]);
        let output: String = cfg.get_or("output", "propagate".to_string())?;
        settle(cfg, &["max_energy_drift"])?;
        if times.is_empty() {
            bail!("'times' is empty");
        }
        let energy_wanted = names.iter().any(|o| o == "energy");
        if energy_wanted && xi.include_site0() {
            bail!("the 'energy' observable needs a half-chain datum (e.g. datum = hl-unit)");
        }
        let norms = names
            .iter()
            .filter(|o| *o != "energy")
            .map(|o| Ok((o.clone(), parse_norm(o)?)))
            .collect::<Result<Vec<_>>>()?;

        let prop = LinearPropagator::new(n, eps)?;
        let mut out = Outcome::default();
        let mut w = ctx.create(&mut out, &format!("{output}_observers.csv"))?;
        writeln!(w, "t,observable,value")?;
        let e0 = prop.hl_energy(&xi);
        let mut drift: f64 = 0.0;
        let mut last = xi.clone();
        for &t in &times {
            let s = propagate(&prop, &xi, t)?;
            for (name, spec) in &norms {
                writeln!(w, "{t:.17e},{name},{:.17e}", spec.eval(&s)?)?;
            }
            if energy_wanted {
                let e = prop.hl_energy(&s);
                drift = drift.max((e - e0).abs() / e0.abs().max(f64::MIN_POSITIVE));
                writeln!(w, "{t:.17e},energy,{e:.17e}")?;
            }
            last = s;
        }
        w.flush()?;
        last.write_csv(ctx.create(&mut out, &format!("{output}_state.csv"))?)?;
        if energy_wanted {
            out.at_most(cfg, "max_energy_drift", drift)?;
        }
        Ok(out)
    }
}

pub struct DecayFitCommand;

impl Subcommand for DecayFitCommand {
    fn name(&self) -> &'static str {
        "decay-fit"
    }

    fn about(&self) -> &'static str {
        "fit the decay exponent of a norm of the linear flow in εt"
    }

    fn run(&self, cfg: &KeyValues, ctx: &Context) -> Result<Outcome> {
        let eps: f64 = cfg.get_or("eps", 0.1)?;
        let n: usize = cfg.get_or("n", 8192)?;
        let xi = datum(cfg, n)?;
        let norm = parse_norm(&cfg.get_or("norm", "linf".to_string())?)?;
        let (lo, hi) = pair(cfg, "window", (10.0, 300.0))?;
        let samples: usize = cfg.get_or("samples", 24)?;
        let options = if cfg.get_or("envelope", true)? {
            DecayOptions::default()
        } else {
            DecayOptions::instantaneous()
        };
        let output: String = cfg.get_or("output", "decay".to_string())?;
        settle(cfg, &["slope", "min_r_squared"])?;

        let prop = LinearPropagator::new(n, eps)?;
        let fit = measure_decay(&prop, &xi, norm, &eps_t_grid(eps, lo, hi, samples), &options)?;
        let mut out = Outcome::default();
        fit.write_csv(ctx.create(&mut out, &format!("{output}.csv"))?)?;
        out.within(cfg, "slope", fit.slope)?;
        out.at_least(cfg, "min_r_squared", fit.r_squared)?;
        Ok(out)
    }
}

pub struct VdcCheck;

impl Subcommand for VdcCheck {
    fn name(&self) -> &'static str {
        "vdc-check"
    }

    fn about(&self) -> &'static str {
        "decay of the oscillatory integral on the split phase intervals"
    }

    fn run(&self, cfg: &KeyValues, ctx: &Context) -> Result<Outcome> {
        let eps: f64 = cfg.get_or("eps", 0.1)?;
        let (lo, hi) = pair(cfg, "lambda_range", (1e2, 1e4))?;
        let count: usize = cfg.get_or("lambda_count", 9)?;
        let intervals: Vec<PhaseInterval> = cfg.list("intervals")?.unwrap_or_else(|| vec![PhaseInterval::I1, PhaseInterval::I2]);
        let coarse: usize = cfg.get_or("coarse", 201)?;
        let output: String = cfg.get_or("output", "vdc".to_string())?;
        settle(cfg, &["slope.I1", "slope.I2", "slope.full"])?;

        let fits = van_der_corput_check(eps, &logspace(lo, hi, count), &intervals, coarse)?;
        let mut out = Outcome::default();
        let mut w = ctx.create(&mut out, &format!("{output}.csv"))?;
        writeln!(w, "interval,lambda,sup,rho")?;
        for f in &fits {
            for s in &f.samples {
                writeln!(w, "{},{:.17e},{:.17e},{:.17e}", f.interval.name(), s.lambda, s.sup, s.rho)?;
            }
        }
        w.flush()?;
        let mut w = ctx.create(&mut out, &format!("{output}_summary.csv"))?;
        writeln!(w, "interval,slope,r_squared")?;
        for f in &fits {
            writeln!(w, "{},{:.17e},{:.17e}", f.interval.name(), f.slope, f.r_squared)?;
            out.within(cfg, &format!("slope.{}", f.interval.name()), f.slope)?;
        }
        w.flush()?;
        Ok(out)
    }
}

/// `(−Δ − ν̃)` with Dirichlet ends on `−n..n`.
fn dense_shifted_laplacian(n: usize, nu_tilde: Complex64) -> DMatrix<Complex64> {
    let m = 2 * n + 1;
    DMatrix::from_fn(m, m, |i, j| match i.abs_diff(j) {
        0 => Complex64::new(2.0, 0.0) - nu_tilde,
        1 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 0.0),
    })
}

pub struct ResolventCheck;

impl Subcommand for ResolventCheck {
    fn name(&self) -> &'static str {
        "resolvent-check"
    }

    fn about(&self) -> &'static str {
        "compare the closed-form resolvent with dense inversion and test the threshold expansion"
    }

    fn run(&self, cfg: &KeyValues, ctx: &Context) -> Result<Outcome> {
        let n: usize = cfg.get_or("n", 256)?;
        let (re, im) = pair(cfg, "nu_tilde", (2.0, 0.5))?;
        let interior: i64 = cfg.get_or("interior", 20)?;
        let puiseux: bool = cfg.get_or("puiseux", true)?;
        let (nu_lo, nu_hi) = pair(cfg, "nu_range", (1e-4, 1e-1))?;
        let nu_count: usize = cfg.get_or("nu_count", 7)?;
        let s: f64 = cfg.get_or("s", 2.0)?;
        let k_max: i64 = cfg.get_or("k_max", 100_000)?;
        let output: String = cfg.get_or("output", "resolvent".to_string())?;
        settle(cfg, &["max_error", "puiseux_slope"])?;
        if interior < 0 || interior as usize > n {
            bail!("interior {interior} must lie in 0..={n}");
        }

        let nu_tilde = Complex64::new(re, im);
        let lu = dense_shifted_laplacian(n, nu_tilde).lu();
        let m = 2 * n + 1;
        let mut out = Outcome::default();
        let mut w = ctx.create(&mut out, &format!("{output}.csv"))?;
        writeln!(w, "j,k,kernel_re,kernel_im,dense_re,dense_im,abs_error")?;
        let mut worst: f64 = 0.0;
        for k in -interior..=interior {
            let mut e = DMatrix::<Complex64>::zeros(m, 1);
            e[((k + n as i64) as usize, 0)] = Complex64::new(1.0, 0.0);
            let col = lu.solve(&e).context("dense system is singular")?;
            for j in -interior..=interior {
                let dense = col[((j + n as i64) as usize, 0)];
                let g = resolvent_kernel(nu_tilde, j, k)?;
                let err = (g - dense).norm();
                worst = worst.max(err);
                writeln!(w, "{j},{k},{:.17e},{:.17e},{:.17e},{:.17e},{err:.17e}", g.re, g.im, dense.re, dense.im)?;
            }
        }
        w.flush()?;
        out.at_most(cfg, "max_error", worst)?;

        if puiseux {
            let check = puiseux_leading_check(&dipole(4), &logspace(nu_lo, nu_hi, nu_count), s, k_max)?;
            let mut w = ctx.create(&mut out, &format!("{output}_puiseux.csv"))?;
            writeln!(w, "nu_tilde,error")?;
            for (nt, e) in &check.errors {
                writeln!(w, "{nt:.17e},{e:.17e}")?;
            }
            writeln!(w, "slope,{:.17e}", check.slope)?;
            w.flush()?;
            out.within(cfg, "puiseux_slope", check.slope)?;
        }
        Ok(out)
    }
}
