//! Oscillatory integrals `∫ e^{iλφ(ψ, ρ)} dψ` with the dispersive phase
//! `φ(ψ, ρ) = √(1 + 4ε sin²ψ) + ρψ` written in the half angle `ψ = θ/2`.
//!
//! In this variable `∂²_ψ φ` vanishes only near `ψ = π/4` and `3π/4`; the
//! interval family `I₂` isolates those inflection points (third-order
//! stationary phase, decay `λ^{−1/3}`) while `I₁` keeps the phase strictly
//! convex or concave (decay `λ^{−1/2}`).

use crate::error::{Error, Result};
use crate::numerics::{fit_loglog, GaussLegendre};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhaseInterval {
    /// `[0, π/8] ∪ [3π/8, 5π/8] ∪ [7π/8, π]`: away from the inflections.
    I1,
    /// `[π/8, 3π/8] ∪ [5π/8, 7π/8]`: around the inflections.
    I2,
    /// `[0, π]`, one full period of the phase.
    Full,
}

impl PhaseInterval {
    pub fn pieces(self) -> Vec<(f64, f64)> {
        let e = PI / 8.0;
        match self {
            PhaseInterval::I1 => vec![(0.0, e), (3.0 * e, 5.0 * e), (7.0 * e, PI)],
            PhaseInterval::I2 => vec![(e, 3.0 * e), (5.0 * e, 7.0 * e)],
            PhaseInterval::Full => vec![(0.0, PI)],
        }
    }

    pub fn length(self) -> f64 {
        self.pieces().iter().map(|(a, b)| b - a).sum()
    }

    pub fn name(self) -> &'static str {
        match self {
            PhaseInterval::I1 => "I1",
            PhaseInterval::I2 => "I2",
            PhaseInterval::Full => "full",
        }
    }
}

impl std::str::FromStr for PhaseInterval {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "i1" => Ok(Self::I1),
            "i2" => Ok(Self::I2),
            "full" => Ok(Self::Full),
            other => Err(Error::InvalidInput(format!("unknown interval '{other}'"))),
        }
    }
}

/// `φ(ψ, ρ)`
pub fn phase(eps: f64, rho: f64, psi: f64) -> f64 {
    let s = psi.sin();
    (1.0 + 4.0 * eps * s * s).sqrt() + rho * psi
}

const PANEL_NODES: usize = 16;
/// Phase advance allowed per panel, in radians.
const PANEL_PHASE: f64 = 3.0;

fn panel_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(PANEL_NODES))
}

/// Composite Gauss–Legendre with `refine` times the default panel count.
fn composite(rho: f64, lambda: f64, eps: f64, interval: PhaseInterval, refine: usize) -> Complex64 {
    let rule = panel_rule();
    // |∂_ψ φ| ≤ 2ε + |ρ|
    let rate = lambda.abs() * (2.0 * eps + rho.abs());
    let mut total = Complex64::new(0.0, 0.0);
    for (a, b) in interval.pieces() {
        let panels = ((rate * (b - a) / PANEL_PHASE).ceil() as usize).max(1) * refine;
        let h = (b - a) / panels as f64;
        for j in 0..panels {
            let lo = a + j as f64 * h;
            let mid = lo + 0.5 * h;
            let mut acc = Complex64::new(0.0, 0.0);
            for (x, w) in rule.nodes().iter().zip(rule.weights()) {
                let psi = mid + 0.5 * h * x;
                acc += Complex64::from_polar(*w, lambda * phase(eps, rho, psi));
            }
            total += acc * (0.5 * h);
        }
    }
    total
}

/// `∫_interval e^{iλφ(ψ, ρ)} dψ`, accepted once doubling the panel count
/// changes the value by less than `1e−10` (relative to `max(1, |value|)`).
pub fn oscillatory_integral(rho: f64, lambda: f64, eps: f64, interval: PhaseInterval) -> Result<Complex64> {
    let mut prev = composite(rho, lambda, eps, interval, 1);
    for refine in [2, 4, 8, 16] {
        let next = composite(rho, lambda, eps, interval, refine);
        let change = (next - prev).norm();
        if change <= 1e-10 * next.norm().max(1.0) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureNotConverged {
        estimate: prev.norm(),
        change: f64::NAN,
    })
}

/// `sup_ρ |∫ e^{iλφ}|` with the maximizing `ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupSample {
    pub lambda: f64,
    pub sup: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VdcFit {
    pub interval: PhaseInterval,
    pub slope: f64,
    pub r_squared: f64,
    pub samples: Vec<SupSample>,
}

/// Supremum over `ρ ∈ [−ρ_max, ρ_max]`: a coarse grid of `coarse` points,
/// then golden-section refinement around the best few candidates.
pub fn sup_over_rho(lambda: f64, eps: f64, interval: PhaseInterval, rho_max: f64, coarse: usize) -> SupSample {
    let coarse = coarse.max(3);
    let step = 2.0 * rho_max / (coarse - 1) as f64;
    let f = |rho: f64| composite(rho, lambda, eps, interval, 1).norm();
    let grid: Vec<(f64, f64)> = (0..coarse)
        .into_par_iter()
        .map(|j| {
            let rho = -rho_max + j as f64 * step;
            (rho, f(rho))
        })
        .collect();
    let mut order: Vec<usize> = (0..coarse).collect();
    order.sort_by(|&a, &b| grid[b].1.total_cmp(&grid[a].1));
    let best = order
        .into_iter()
        .take(6)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|j| golden_max(&f, grid[j].0 - step, grid[j].0 + step, 40))
        .reduce(|| (0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    SupSample {
        lambda,
        sup: best.1,
        rho: best.0,
    }
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Decay of `sup_ρ |∫_I e^{iλφ}|` in `λ` for the given intervals.
/// The `ρ` range covers every stationary point: `|ρ| ≤ 2.5ε`.
pub fn van_der_corput_check(eps: f64, lambdas: &[f64], intervals: &[PhaseInterval], coarse: usize) -> Result<Vec<VdcFit>> {
    if !(eps > 0.0) || lambdas.len() < 2 {
        return Err(Error::InvalidInput("need ε > 0 and at least two λ values".into()));
    }
    intervals
        .iter()
        .map(|&interval| {
            let samples: Vec<SupSample> = lambdas
                .iter()
                .map(|&l| sup_over_rho(l, eps, interval, 2.5 * eps, coarse))
                .collect();
            let x: Vec<f64> = samples.iter().map(|s| s.lambda).collect();
            let y: Vec<f64> = samples.iter().map(|s| s.sup).collect();
            let fit = fit_loglog(&x, &y)?;
            Ok(VdcFit {
                interval,
                slope: fit.slope,
                r_squared: fit.r_squared,
                samples,
            })
        })
        .collect()
}
