//! The single anharmonic oscillator `H = (p² + q²)/2 + V(q)`: energy levels,
//! action and period integrals, and the action-angle chart.
//!
//! Every orbit integral is written in the angle variable `φ` of the
//! substitution `q = c + h sin φ`, where `c` and `h` are the midpoint and
//! half-width of the turning-point interval. Factoring
//! `E − U(q) = (q_max − q)(q − q_min) S(q)` leaves smooth, positive
//! integrands, so plain Gauss–Legendre converges spectrally:
//!
//! * `dt = dφ / √(2S)`
//! * `|p| dq = h² cos²φ √(2S) dφ`
//!
//! The angle origin is the point of maximal elongation `(p, q) = (0, q_max)`.

use crate::error::{Error, Result};
use crate::numerics::{integrate_adaptive, newton_bracketed};
use crate::potential::PotentialSpec;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

const QUAD_TOL: f64 = 2e-15;

/// A single oscillator with on-site energy `U(q) = q²/2 + V(q)`.
#[derive(Debug, Clone)]
pub struct Oscillator {
    potential: PotentialSpec,
    energy_ceiling: f64,
}

/// The closed level set `{U(q) + p²/2 = E}`.
#[derive(Debug, Clone, Copy)]
pub struct Level {
    pub energy: f64,
    pub q_min: f64,
    pub q_max: f64,
}

impl Level {
    pub fn center(&self) -> f64 {
        0.5 * (self.q_max + self.q_min)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.q_max - self.q_min)
    }

    pub fn q_at(&self, phi: f64) -> f64 {
        self.center() + self.half_width() * phi.sin()
    }
}

impl Oscillator {
    /// `energy_ceiling` bounds the energies the chart will accept.
    pub fn new(potential: PotentialSpec, energy_ceiling: f64) -> Result<Self> {
        if !(energy_ceiling > 0.0) {
            return Err(Error::InvalidInput(format!(
                "energy ceiling must be positive, got {energy_ceiling}"
            )));
        }
        Ok(Self {
            potential,
            energy_ceiling,
        })
    }

    pub fn potential(&self) -> &PotentialSpec {
        &self.potential
    }

    pub fn energy_ceiling(&self) -> f64 {
        self.energy_ceiling
    }

    pub fn onsite(&self, q: f64) -> f64 {
        0.5 * q * q + self.potential.eval(q)
    }

    pub fn onsite_derivative(&self, q: f64) -> f64 {
        q + self.potential.derivative(q)
    }

    pub fn energy(&self, p: f64, q: f64) -> f64 {
        0.5 * p * p + self.onsite(q)
    }

    /// `(U(a) − U(b)) / (a − b)` without cancellation.
    fn onsite_divided_difference(&self, a: f64, b: f64) -> f64 {
        0.5 * (a + b) + self.potential.divided_difference(a, b)
    }

    fn check_energy(&self, energy: f64) -> Result<()> {
        if !(energy > 0.0) || energy > self.energy_ceiling {
            return Err(Error::OutOfRange {
                value: energy,
                lo: 0.0,
                hi: self.energy_ceiling,
            });
        }
        Ok(())
    }

    fn turning_point(&self, energy: f64, direction: f64) -> Result<f64> {
        let mut hi = direction * (2.0 * energy).sqrt().max(1e-3);
        let mut steps = 0;
        while self.onsite(hi) < energy {
            hi *= 2.0;
            steps += 1;
            if steps > 60 || !hi.is_finite() {
                return Err(Error::UnboundedLevelSet { energy });
            }
        }
        let (lo, hi) = if direction > 0.0 { (0.0, hi) } else { (hi, 0.0) };
        newton_bracketed(lo, hi, 1e-16, |q| {
            (self.onsite(q) - energy, self.onsite_derivative(q))
        })
    }

    /// Turning points of the level set, after checking that `U` is a single
    /// well on `[q_min, q_max]` (strictly monotone on each side of 0).
    pub fn level(&self, energy: f64) -> Result<Level> {
        self.check_energy(energy)?;
        let q_max = self.turning_point(energy, 1.0)?;
        let q_min = self.turning_point(energy, -1.0)?;
        const PROBES: usize = 64;
        for i in 1..=PROBES {
            let s = i as f64 / PROBES as f64;
            if self.onsite_derivative(s * q_max) <= 0.0 || self.onsite_derivative(s * q_min) >= 0.0 {
                return Err(Error::NonConvexLevelSet { energy });
            }
        }
        Ok(Level {
            energy,
            q_min,
            q_max,
        })
    }

    /// The smooth factor `S(q) = (E − U(q)) / ((q_max − q)(q − q_min))`.
    pub fn shape_factor(&self, level: &Level, q: f64) -> f64 {
        if q >= level.center() {
            self.onsite_divided_difference(level.q_max, q) / (q - level.q_min)
        } else {
            -self.onsite_divided_difference(level.q_min, q) / (level.q_max - q)
        }
    }

    /// `dt/dφ` along the orbit.
    fn time_density(&self, level: &Level, phi: f64) -> f64 {
        1.0 / (2.0 * self.shape_factor(level, level.q_at(phi))).sqrt()
    }

    /// Period `T(E) = 2 ∫ dq / |p|`.
    pub fn period(&self, energy: f64) -> Result<f64> {
        let level = self.level(energy)?;
        self.period_of_level(&level)
    }

    fn period_of_level(&self, level: &Level) -> Result<f64> {
        Ok(2.0 * integrate_adaptive(-FRAC_PI_2, FRAC_PI_2, QUAD_TOL, |phi| {
            self.time_density(level, phi)
        })?)
    }

    /// Action `I(E) = (1/2π) ∮ p dq`.
    pub fn action_of_energy(&self, energy: f64) -> Result<f64> {
        let level = self.level(energy)?;
        let h = level.half_width();
        let integral = integrate_adaptive(-FRAC_PI_2, FRAC_PI_2, QUAD_TOL, |phi| {
            let c = phi.cos();
            c * c * (2.0 * self.shape_factor(&level, level.q_at(phi))).sqrt()
        })?;
        Ok(h * h * integral / PI)
    }

    /// Frequency `2π / T(E)`.
    pub fn frequency_of_energy(&self, energy: f64) -> Result<f64> {
        Ok(TAU / self.period(energy)?)
    }

    /// Time needed to travel from `φ` up to the maximal elongation `φ = π/2`
    /// along the lower half of the orbit.
    fn time_to_top(&self, level: &Level, phi: f64) -> Result<f64> {
        if phi >= FRAC_PI_2 {
            return Ok(0.0);
        }
        integrate_adaptive(phi, FRAC_PI_2, QUAD_TOL, |x| self.time_density(level, x))
    }

    /// Solves `E(I) = energy` by Newton steps on the action integral
    /// (`dI/dE = 1/ω`), safeguarded by a bracket.
    pub fn energy_of_action(&self, action: f64, guess: Option<f64>) -> Result<f64> {
        if !(action > 0.0) {
            return Err(Error::InvalidInput(format!("action must be positive, got {action}")));
        }
        let ceiling_action = self.action_of_energy(self.energy_ceiling)?;
        if action > ceiling_action {
            return Err(Error::OutOfRange {
                value: action,
                lo: 0.0,
                hi: ceiling_action,
            });
        }
        if action == ceiling_action {
            return Ok(self.energy_ceiling);
        }
        let mut lo = 0.0;
        let mut hi = self.energy_ceiling;
        let mut e = guess
            .filter(|g| *g > 0.0 && *g < hi)
            .unwrap_or_else(|| action.min(0.5 * hi));
        for _ in 0..200 {
            let level = self.level(e)?;
            let i_e = self.action_of_energy(e)?;
            let residual = i_e - action;
            if residual > 0.0 {
                hi = e;
            } else {
                lo = e;
            }
            let omega = TAU / self.period_of_level(&level)?;
            let mut next = e - residual * omega;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - e).abs() <= 1e-15 * e.max(1e-300) {
                return Ok(next);
            }
            e = next;
        }
        Err(Error::RootNotConverged(format!("energy for action {action}")))
    }

    /// Phase point at action-angle coordinates given the energy of the level.
    fn cartesian_on_level(&self, level: &Level, period: f64, angle: f64) -> Result<(f64, f64)> {
        let angle = angle.rem_euclid(TAU);
        let t = angle / TAU * period;
        let half = 0.5 * period;
        // First half-period: from the top towards q_min with p ≤ 0.
        let (t_half, sign) = if t <= half { (t, -1.0) } else { (period - t, 1.0) };
        let phi = if t_half <= 0.0 {
            FRAC_PI_2
        } else if t_half >= half {
            -FRAC_PI_2
        } else {
            newton_bracketed(-FRAC_PI_2, FRAC_PI_2, 1e-16, |phi| {
                let tau = self.time_to_top(level, phi).unwrap_or(f64::NAN);
                (t_half - tau, self.time_density(level, phi))
            })?
        };
        let q = level.q_at(phi);
        let speed = if phi.abs() >= FRAC_PI_2 {
            0.0
        } else {
            level.half_width() * phi.cos() * (2.0 * self.shape_factor(level, q)).sqrt()
        };
        Ok((sign * speed, q))
    }

    /// Angle of a phase point on a known level.
    fn angle_on_level(&self, level: &Level, period: f64, p: f64, q: f64) -> Result<f64> {
        let h = level.half_width();
        let sin_phi = ((q - level.center()) / h).clamp(-1.0, 1.0);
        let qc = q.clamp(level.q_min, level.q_max);
        let cos_phi = p.abs() / (h * (2.0 * self.shape_factor(level, qc)).sqrt());
        let phi = sin_phi.atan2(cos_phi);
        let tau = self.time_to_top(level, phi)?;
        let t = if p <= 0.0 { tau } else { period - tau };
        Ok((TAU * t / period).rem_euclid(TAU))
    }
}

/// Tabulated action-angle chart on `[Δ₁, Δ₂]`.
///
/// The table (energy and frequency on a uniform action grid) serves fast
/// cubic interpolation and bracketing; the exact operations re-solve the
/// orbit integrals to quadrature accuracy.
#[derive(Debug, Clone)]
pub struct ActionAngleChart {
    oscillator: Oscillator,
    action_grid: Vec<f64>,
    energy_of_action: Vec<f64>,
    omega_of_action: Vec<f64>,
    interpolation_order: usize,
}

pub const DEFAULT_CHART_POINTS: usize = 512;

impl ActionAngleChart {
    pub fn new(oscillator: Oscillator, action_lo: f64, action_hi: f64, points: usize) -> Result<Self> {
        if !(action_lo > 0.0 && action_hi > action_lo) || points < 4 {
            return Err(Error::InvalidInput(format!(
                "chart needs 0 < Δ₁ < Δ₂ and ≥ 4 points, got [{action_lo}, {action_hi}] with {points}"
            )));
        }
        let action_grid: Vec<f64> = (0..points)
            .map(|j| action_lo + (action_hi - action_lo) * j as f64 / (points - 1) as f64)
            .collect();
        let mut energy_of_action = Vec::with_capacity(points);
        let mut omega_of_action = Vec::with_capacity(points);
        let mut guess = None;
        for &i in &action_grid {
            let e = oscillator.energy_of_action(i, guess)?;
            let omega = oscillator.frequency_of_energy(e)?;
            guess = Some(e + omega * (action_grid[1] - action_grid[0]));
            energy_of_action.push(e);
            omega_of_action.push(omega);
        }
        if energy_of_action.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("tabulated energy is not increasing".into()));
        }
        if omega_of_action.iter().any(|w| *w <= 0.0) {
            return Err(Error::InvalidInput("tabulated frequency is not positive".into()));
        }
        Ok(Self {
            oscillator,
            action_grid,
            energy_of_action,
            omega_of_action,
            interpolation_order: 3,
        })
    }

    /// Chart for `potential` on `[Δ₁, Δ₂]` with the default 512-point table.
    /// The energy ceiling is placed a little above the energy of `Δ₂`.
    pub fn for_potential(potential: PotentialSpec, action_lo: f64, action_hi: f64) -> Result<Self> {
        let ceiling = Self::ceiling_for(&potential, action_hi)?;
        Self::new(Oscillator::new(potential, ceiling)?, action_lo, action_hi, DEFAULT_CHART_POINTS)
    }

    fn ceiling_for(potential: &PotentialSpec, action_hi: f64) -> Result<f64> {
        // Grow the ceiling until it encloses Δ₂ with some margin.
        let mut ceiling = 2.0 * action_hi;
        for _ in 0..60 {
            let osc = Oscillator::new(potential.clone(), ceiling)?;
            if osc.action_of_energy(ceiling)? > 1.25 * action_hi {
                return Ok(ceiling);
            }
            ceiling *= 2.0;
        }
        Err(Error::InvalidInput("could not bracket the requested action range".into()))
    }

    pub fn oscillator(&self) -> &Oscillator {
        &self.oscillator
    }

    pub fn potential(&self) -> &PotentialSpec {
        self.oscillator.potential()
    }

    pub fn action_range(&self) -> (f64, f64) {
        (self.action_grid[0], *self.action_grid.last().unwrap())
    }

    pub fn action_grid(&self) -> &[f64] {
        &self.action_grid
    }

    pub fn tabulated_energy(&self) -> &[f64] {
        &self.energy_of_action
    }

    pub fn tabulated_omega(&self) -> &[f64] {
        &self.omega_of_action
    }

    pub fn interpolation_order(&self) -> usize {
        self.interpolation_order
    }

    fn check_action(&self, action: f64) -> Result<()> {
        let (lo, hi) = self.action_range();
        let slack = 1e-12 * (hi - lo);
        if !(action >= lo - slack && action <= hi + slack) {
            return Err(Error::OutOfRange { value: action, lo, hi });
        }
        Ok(())
    }

    fn cell(&self, action: f64) -> (usize, f64, f64) {
        let (lo, hi) = self.action_range();
        let n = self.action_grid.len();
        let step = (hi - lo) / (n - 1) as f64;
        let j = (((action - lo) / step).floor().max(0.0) as usize).min(n - 2);
        let s = (action - self.action_grid[j]) / step;
        (j, s, step)
    }

    /// Cubic Hermite interpolation of the tabulated energy, using the
    /// tabulated frequency as the exact node derivative.
    pub fn energy_interpolated(&self, action: f64) -> f64 {
        let (j, s, step) = self.cell(action);
        hermite(
            self.energy_of_action[j],
            self.energy_of_action[j + 1],
            self.omega_of_action[j] * step,
            self.omega_of_action[j + 1] * step,
            s,
        )
        .0
    }

    /// Derivative of the energy interpolant, a cheap stand-in for `ω₀`.
    pub fn omega_interpolated(&self, action: f64) -> f64 {
        let (j, s, step) = self.cell(action);
        hermite(
            self.energy_of_action[j],
            self.energy_of_action[j + 1],
            self.omega_of_action[j] * step,
            self.omega_of_action[j + 1] * step,
            s,
        )
        .1 / step
    }

    /// `hs₀(I)`: inverts the action integral by bracketed root finding.
    pub fn h0_of_action(&self, action: f64) -> Result<f64> {
        self.check_action(action)?;
        self.oscillator
            .energy_of_action(action, Some(self.energy_interpolated(action)))
    }

    /// `ω₀(I) = ∂hs₀/∂I = 2π / T(hs₀(I))`.
    pub fn omega0(&self, action: f64) -> Result<f64> {
        let e = self.h0_of_action(action)?;
        self.oscillator.frequency_of_energy(e)
    }

    /// Phase point `(p₀, q₀)` at action-angle `(I, α)`.
    pub fn to_cartesian(&self, action: f64, angle: f64) -> Result<(f64, f64)> {
        let e = self.h0_of_action(action)?;
        let level = self.oscillator.level(e)?;
        let period = self.oscillator.period_of_level(&level)?;
        self.oscillator.cartesian_on_level(&level, period, angle)
    }

    /// `(p, q)` at several angles of one torus, sharing the level quadrature.
    pub fn circle(&self, action: f64, angles: &[f64]) -> Result<Vec<(f64, f64)>> {
        let e = self.h0_of_action(action)?;
        let level = self.oscillator.level(e)?;
        let period = self.oscillator.period_of_level(&level)?;
        angles
            .iter()
            .map(|&a| self.oscillator.cartesian_on_level(&level, period, a))
            .collect()
    }

    /// Action-angle coordinates of `(p₀, q₀)`.
    pub fn from_cartesian(&self, p: f64, q: f64) -> Result<(f64, f64)> {
        let e = self.oscillator.energy(p, q);
        let level = self.oscillator.level(e)?;
        let action = self.oscillator.action_of_energy(e)?;
        self.check_action(action)?;
        let period = self.oscillator.period_of_level(&level)?;
        let angle = self.oscillator.angle_on_level(&level, period, p, q)?;
        Ok((action, angle))
    }

    /// Same as [`from_cartesian`](Self::from_cartesian) but without the chart
    /// range check, for diagnostics on orbits that wander slightly outside.
    pub fn from_cartesian_unchecked(&self, p: f64, q: f64) -> Result<(f64, f64)> {
        let e = self.oscillator.energy(p, q);
        let level = self.oscillator.level(e)?;
        let action = self.oscillator.action_of_energy(e)?;
        let period = self.oscillator.period_of_level(&level)?;
        let angle = self.oscillator.angle_on_level(&level, period, p, q)?;
        Ok((action, angle))
    }

    /// Largest elongation `q_max` on the level of action `I`.
    pub fn max_elongation(&self, action: f64) -> Result<f64> {
        let e = self.h0_of_action(action)?;
        Ok(self.oscillator.level(e)?.q_max)
    }

    /// `min |ω₀(I) − 1/n|` over the table nodes in `[I_lo, I_hi]` (plus both
    /// endpoints) and `1 ≤ |n| ≤ n_max`.
    pub fn nonresonance_margin(&self, action_lo: f64, action_hi: f64, n_max: u32) -> Result<f64> {
        self.check_action(action_lo)?;
        self.check_action(action_hi)?;
        if n_max == 0 || action_hi < action_lo {
            return Err(Error::InvalidInput("need n_max ≥ 1 and I_lo ≤ I_hi".into()));
        }
        let mut omegas = vec![self.omega0(action_lo)?, self.omega0(action_hi)?];
        omegas.extend(
            self.action_grid
                .iter()
                .zip(&self.omega_of_action)
                .filter(|(i, _)| **i >= action_lo && **i <= action_hi)
                .map(|(_, w)| *w),
        );
        Ok(omegas
            .iter()
            .map(|&w| {
                (1..=n_max as i64)
                    .flat_map(|n| [n, -n])
                    .map(|n| (w - 1.0 / n as f64).abs())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min))
    }
}

/// Cubic Hermite basis on `s ∈ [0, 1]`; returns value and `d/ds`.
fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, s: f64) -> (f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let value = h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1;
    let deriv = (6.0 * s2 - 6.0 * s) * y0
        + (3.0 * s2 - 4.0 * s + 1.0) * d0
        + (-6.0 * s2 + 6.0 * s) * y1
        + (3.0 * s2 - 2.0 * s) * d1;
    (value, deriv)
}
