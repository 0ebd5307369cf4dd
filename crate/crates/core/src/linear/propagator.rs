//! Exact flow of the harmonic chain `H = Σ (p_k² + q_k²)/2 + (ε/2) Σ (q_{k+1} − q_k)²`.
//!
//! A skew-symmetric state on `−N..N` with Dirichlet closure is the odd part
//! of a periodic sequence on a ring of `2N + 2` sites, where the Fourier
//! modes diagonalize the flow with frequencies `ν(θ) = √(1 + 4ε sin²(θ/2))`.

use crate::error::{Error, Result};
use crate::lattice::{self, LatticeState, NormSpec};
use crate::numerics::fit_loglog;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::TAU;
use std::io::Write;
use std::sync::Arc;

/// Dispersion relation of the linear chain.
pub fn nu(eps: f64, theta: f64) -> f64 {
    let s = (0.5 * theta).sin();
    (1.0 + 4.0 * eps * s * s).sqrt()
}

/// Tolerance on the skew-symmetry defect, relative to the sup norm.
const SKEW_TOL: f64 = 1e-12;

/// Discrete Fourier data of a state on the ring of `2N + 2` sites,
/// normalized to be unitary.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierField {
    pub theta: Vec<f64>,
    pub q_hat: Vec<Complex64>,
    pub p_hat: Vec<Complex64>,
}

impl FourierField {
    /// Largest violation of `x̂(−θ) = conj(x̂(θ))`.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let l = self.theta.len();
        (0..l)
            .map(|m| {
                let mm = (l - m) % l;
                (self.q_hat[m] - self.q_hat[mm].conj())
                    .norm()
                    .max((self.p_hat[m] - self.p_hat[mm].conj()).norm())
            })
            .fold(0.0, f64::max)
    }

    pub fn l2(&self) -> f64 {
        self.q_hat
            .iter()
            .chain(&self.p_hat)
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// FFT plans and frequencies for one window size and coupling.
#[derive(Clone)]
pub struct LinearPropagator {
    n: usize,
    eps: f64,
    nu: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for LinearPropagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearPropagator")
            .field("n", &self.n)
            .field("eps", &self.eps)
            .finish()
    }
}

impl LinearPropagator {
    pub fn new(n: usize, eps: f64) -> Result<Self> {
        if n == 0 || !(eps >= 0.0) {
            return Err(Error::InvalidInput(format!("need N ≥ 1 and ε ≥ 0, got N = {n}, ε = {eps}")));
        }
        let l = 2 * n + 2;
        let mut planner = FftPlanner::new();
        let nu_grid = (0..l).map(|m| nu(eps, TAU * m as f64 / l as f64)).collect();
        Ok(Self {
            n,
            eps,
            nu: nu_grid,
            forward: planner.plan_fft_forward(l),
            inverse: planner.plan_fft_inverse(l),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn ring_len(&self) -> usize {
        2 * self.n + 2
    }

    /// Ring slot of site `k ∈ −N..N`.
    fn slot(&self, k: i64) -> usize {
        k.rem_euclid(self.ring_len() as i64) as usize
    }

    fn to_ring(&self, f: impl Fn(i64) -> Complex64) -> Vec<Complex64> {
        let l = self.ring_len();
        let mut buf = vec![Complex64::new(0.0, 0.0); l];
        for k in -(self.n as i64)..=self.n as i64 {
            buf[self.slot(k)] = f(k);
        }
        buf
    }

    fn fft(&self, buf: &mut [Complex64], forward: bool) {
        let scale = 1.0 / (self.ring_len() as f64).sqrt();
        if forward {
            self.forward.process(buf);
        } else {
            self.inverse.process(buf);
        }
        buf.iter_mut().for_each(|z| *z *= scale);
    }

    /// Unitary transform of a full-window state (`N` must match).
    pub fn transform(&self, state: &LatticeState) -> Result<FourierField> {
        self.check_window(state, true)?;
        let mut q = self.to_ring(|k| Complex64::new(state.q_at(k), 0.0));
        let mut p = self.to_ring(|k| Complex64::new(state.p_at(k), 0.0));
        self.fft(&mut q, true);
        self.fft(&mut p, true);
        let l = self.ring_len();
        Ok(FourierField {
            theta: (0..l).map(|m| TAU * m as f64 / l as f64).collect(),
            q_hat: q,
            p_hat: p,
        })
    }

    fn check_window(&self, state: &LatticeState, site0: bool) -> Result<()> {
        if state.n() != self.n || state.include_site0() != site0 {
            return Err(Error::InvalidInput(format!(
                "propagator built for N = {} (site 0: {site0}), got N = {} (site 0: {})",
                self.n,
                state.n(),
                state.include_site0()
            )));
        }
        Ok(())
    }

    /// Applies the Fourier multiplier of `S(t)` to ring data in place.
    fn evolve_spectral(&self, q: &mut [Complex64], p: &mut [Complex64], t: f64) {
        for m in 0..q.len() {
            let w = self.nu[m];
            let (s, c) = (w * t).sin_cos();
            let (q0, p0) = (q[m], p[m]);
            q[m] = q0 * c + p0 * (s / w);
            p[m] = p0 * c - q0 * (w * s);
        }
    }

    /// Flow of ring data (real and imaginary parts evolve independently).
    fn evolve_ring(&self, mut q: Vec<Complex64>, mut p: Vec<Complex64>, t: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        self.fft(&mut q, true);
        self.fft(&mut p, true);
        self.evolve_spectral(&mut q, &mut p, t);
        self.fft(&mut q, false);
        self.fft(&mut p, false);
        (q, p)
    }

    /// `S⁰_ε(t)` on skew-symmetric whole-chain data.
    pub fn propagate_whole_chain(&self, state: &LatticeState, t: f64) -> Result<LatticeState> {
        self.check_window(state, true)?;
        let scale = state.p.iter().chain(&state.q).fold(0.0f64, |m, x| m.max(x.abs()));
        let defect = lattice::skew_defect(state);
        if defect > SKEW_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotSkewSymmetric { defect });
        }
        let q = self.to_ring(|k| Complex64::new(state.q_at(k), 0.0));
        let p = self.to_ring(|k| Complex64::new(state.p_at(k), 0.0));
        let (q, p) = self.evolve_ring(q, p, t);
        let mut out = LatticeState::zeros(self.n, true);
        for i in 0..out.len() {
            let k = out.site(i);
            // the exact flow keeps the data odd; store the odd part so the
            // symmetry holds to the last bit
            let j = self.slot(k);
            let jm = self.slot(-k);
            out.q[i] = 0.5 * (q[j].re - q[jm].re);
            out.p[i] = 0.5 * (p[j].re - p[jm].re);
        }
        Ok(out)
    }

    /// `S_ε(t)`: the flow of `H_L`, i.e. the chain with `q₀ ≡ 0` pinned. Each
    /// half-chain is extended to odd whole-chain data and propagated on its
    /// own, so a vanishing half stays exactly zero.
    pub fn propagate_hl(&self, xi: &LatticeState, t: f64) -> Result<LatticeState> {
        self.check_window(xi, false)?;
        let mut out = LatticeState::zeros(self.n, false);
        for sign in [1i64, -1] {
            let half = |k: i64| k.signum() == sign;
            if !xi.sites().any(|k| half(k) && (xi.p_at(k) != 0.0 || xi.q_at(k) != 0.0)) {
                continue;
            }
            let ext = |get: &dyn Fn(i64) -> f64| {
                self.to_ring(|k| {
                    let v = if half(k) { get(k) } else if k != 0 { -get(-k) } else { 0.0 };
                    Complex64::new(v, 0.0)
                })
            };
            let (q, p) = self.evolve_ring(ext(&|k| xi.q_at(k)), ext(&|k| xi.p_at(k)), t);
            for i in 0..out.len() {
                let k = out.site(i);
                if half(k) {
                    let j = self.slot(k);
                    out.q[i] = q[j].re;
                    out.p[i] = p[j].re;
                }
            }
        }
        Ok(out)
    }

    /// Conserved quadratic form `⟨p, p⟩ + ⟨q, Bq⟩`, `B = 1 − εΔ` with `q₀ = 0`.
    pub fn hl_energy(&self, xi: &LatticeState) -> f64 {
        2.0 * lattice::hamiltonian(xi, &crate::potential::PotentialSpec::zero(), self.eps)
    }
}

/// One sample of a decay curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecaySample {
    pub t: f64,
    pub eps_t: f64,
    pub norm: f64,
}

/// Least-squares decay exponent of `log ‖S(t)ξ₀‖` against `log(εt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: Vec<DecaySample>,
}

impl DecayFit {
    /// Columns `t, eps_t, norm`; the last row is `summary, <lo>:<hi>, <slope>`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "eps_t", "norm"])?;
        for s in &self.samples {
            w.write_record(&[format!("{:e}", s.t), format!("{:e}", s.eps_t), format!("{:e}", s.norm)])?;
        }
        w.write_record(&[
            "summary".to_string(),
            format!("{}:{}", self.window.0, self.window.1),
            format!("{}", self.slope),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// A datum to be propagated: whole-chain skew-symmetric, or `H_L` (no site 0).
pub fn propagate(prop: &LinearPropagator, state: &LatticeState, t: f64) -> Result<LatticeState> {
    if state.include_site0() {
        prop.propagate_whole_chain(state, t)
    } else {
        prop.propagate_hl(state, t)
    }
}

/// How each decay sample is taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayOptions {
    /// The norm at `t` is the max over `[t, t + envelope_period]`; the unit
    /// carrier frequency makes instantaneous values dip towards zero.
    /// Zero gives instantaneous samples.
    pub envelope_period: f64,
    pub envelope_samples: usize,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self {
            envelope_period: TAU,
            envelope_samples: 16,
        }
    }
}

impl DecayOptions {
    pub fn instantaneous() -> Self {
        Self {
            envelope_period: 0.0,
            envelope_samples: 1,
        }
    }
}

/// Samples `‖S(t)ξ₀‖` on `times` and fits the decay exponent in `εt`.
/// Every sample window must satisfy the boundary guard `t < N/2`.
pub fn measure_decay(
    prop: &LinearPropagator,
    datum: &LatticeState,
    norm: NormSpec,
    times: &[f64],
    options: &DecayOptions,
) -> Result<DecayFit> {
    if times.len() < 2 {
        return Err(Error::FitFailure("need at least two sample times".into()));
    }
    let guard = 0.5 * prop.n() as f64;
    if let Some(t) = times
        .iter()
        .find(|t| **t + options.envelope_period >= guard || **t <= 0.0)
    {
        return Err(Error::BoundaryReached(format!(
            "sample time {t} outside (0, N/2 = {guard})"
        )));
    }
    let eps = prop.eps();
    let subs = if options.envelope_period > 0.0 {
        options.envelope_samples.max(1)
    } else {
        1
    };
    let samples = times
        .par_iter()
        .map(|&t| {
            let mut value: f64 = 0.0;
            for j in 0..subs {
                let tj = t + options.envelope_period * j as f64 / subs as f64;
                value = value.max(norm.eval(&propagate(prop, datum, tj)?)?);
            }
            Ok(DecaySample {
                t,
                eps_t: eps * t,
                norm: value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = samples.iter().map(|s| s.eps_t).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.norm).collect();
    let fit = fit_loglog(&x, &y)?;
    Ok(DecayFit {
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        window: (x[0], *x.last().unwrap()),
        samples,
    })
}

/// Sample times with `εt` log-spaced over `[lo, hi]`.
pub fn eps_t_grid(eps: f64, lo: f64, hi: f64, count: usize) -> Vec<f64> {
    crate::numerics::logspace(lo, hi, count)
        .into_iter()
        .map(|x| x / eps)
        .collect()
}

/// The skew-symmetric dipole `q_{±1} = ±1`.
pub fn dipole(n: usize) -> LatticeState {
    let mut s = LatticeState::zeros(n, true);
    s.set(1, 0.0, 1.0);
    s.set(-1, 0.0, -1.0);
    s
}
