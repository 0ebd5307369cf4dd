//! Space-time norms of sampled trajectories.
//!
//! Time integrals use the slow time `εt` as measure (`d(εt) = ε dt`) and the
//! trapezoid rule on the uniform sample grid.

use super::propagator::{propagate, LinearPropagator};
use crate::error::{Error, Result};
use crate::lattice::{japanese, norm, AdmissiblePair, LatticeState, WeightSpec};

/// States sampled on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<LatticeState>,
}

impl StateTrajectory {
    pub fn new(times: Vec<f64>, states: Vec<LatticeState>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::InvalidInput("times and states differ in length".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("time grid must be increasing".into()));
        }
        Ok(Self { times, states })
    }

    /// Samples `S(t)ξ₀` at `t = j·dt`, `j = 0..=steps`.
    pub fn linear_flow(prop: &LinearPropagator, datum: &LatticeState, dt: f64, steps: usize) -> Result<Self> {
        let times: Vec<f64> = (0..=steps).map(|j| j as f64 * dt).collect();
        let states = times
            .iter()
            .map(|&t| propagate(prop, datum, t))
            .collect::<Result<Vec<_>>>()?;
        Self::new(times, states)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Trapezoid weights `w_j` of `∫ · d(εt)` on the sample grid.
fn trapezoid_weights(times: &[f64], eps: f64) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    for j in 0..n.saturating_sub(1) {
        let h = 0.5 * eps * (times[j + 1] - times[j]);
        w[j] += h;
        w[j + 1] += h;
    }
    w
}

/// `‖f‖_{L^q(εdt)}` of scalar samples.
fn time_norm(values: &[f64], weights: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        return values.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * v.abs().powf(q))
        .sum::<f64>()
        .powf(1.0 / q)
}

/// `‖f‖_{L^q_{εt}}` of a scalar series sampled at increasing `times`.
pub fn series_time_norm(times: &[f64], values: &[f64], q: f64, eps: f64) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::InvalidInput("times and values differ in length".into()));
    }
    Ok(time_norm(values, &trapezoid_weights(times, eps), q))
}

/// `‖ξ‖_{L^q_{εt} 𝐥^r_s}` for a pair `(q, r)` and spatial weight.
pub fn spacetime_norm(traj: &StateTrajectory, pair: AdmissiblePair, weight: WeightSpec, eps: f64) -> Result<f64> {
    if traj.is_empty() {
        return Ok(0.0);
    }
    let spatial = traj
        .states
        .iter()
        .map(|s| norm(s, pair.r_exp, weight))
        .collect::<Result<Vec<_>>>()?;
    Ok(time_norm(&spatial, &trapezoid_weights(&traj.times, eps), pair.q_exp))
}

/// `‖ξ‖_{𝐥^∞_{−s} L²_{εt}} = sup_k ⟨k⟩^{−s} ‖x_k‖_{L²_{εt}}`, with `p_k` and
/// `q_k` as separate entries.
pub fn mixed_norm(traj: &StateTrajectory, s: f64, eps: f64) -> f64 {
    if traj.is_empty() {
        return 0.0;
    }
    let w = trapezoid_weights(&traj.times, eps);
    let first = &traj.states[0];
    (0..first.len())
        .map(|i| {
            let k = first.site(i);
            let (mut sp, mut sq) = (0.0, 0.0);
            for (st, wj) in traj.states.iter().zip(&w) {
                sp += wj * st.p[i] * st.p[i];
                sq += wj * st.q[i] * st.q[i];
            }
            japanese(k).powf(-s) * sp.max(sq).sqrt()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpTempCheck {
    /// `‖q‖_{L²_{εt} ℓ^∞_{−s}}`
    pub left: f64,
    /// `‖q‖_{ℓ^∞_{−s′} L²_{εt}}`
    pub right: f64,
    /// `Σ_n ⟨n⟩^{−2(s−s′)}` over the window.
    pub constant: f64,
    pub holds: bool,
}

impl SpTempCheck {
    /// `left / (√constant · right)`, at most 1 when the inequality holds.
    pub fn ratio(&self) -> f64 {
        if self.left == 0.0 {
            0.0
        } else {
            self.left / (self.constant.sqrt() * self.right)
        }
    }
}

/// Checks `‖q‖_{L² ℓ^∞_{−s}} ≤ √C ‖q‖_{ℓ^∞_{−s′} L²}` on the `q` components.
pub fn sp_temp_check(traj: &StateTrajectory, s: f64, s_prime: f64, eps: f64) -> Result<SpTempCheck> {
    if !(s > s_prime + 0.5) {
        return Err(Error::InvalidInput(format!("need s > s′ + 1/2, got s = {s}, s′ = {s_prime}")));
    }
    if traj.is_empty() {
        return Ok(SpTempCheck { left: 0.0, right: 0.0, constant: 0.0, holds: true });
    }
    let w = trapezoid_weights(&traj.times, eps);
    let first = &traj.states[0];
    let sites: Vec<i64> = first.sites().collect();
    let left_sq: f64 = traj
        .states
        .iter()
        .zip(&w)
        .map(|(st, wj)| {
            let sup = (0..st.len())
                .map(|i| japanese(sites[i]).powf(-s) * st.q[i].abs())
                .fold(0.0, f64::max);
            wj * sup * sup
        })
        .sum();
    let right = (0..first.len())
        .map(|i| {
            let l2: f64 = traj.states.iter().zip(&w).map(|(st, wj)| wj * st.q[i] * st.q[i]).sum();
            japanese(sites[i]).powf(-s_prime) * l2.sqrt()
        })
        .fold(0.0, f64::max);
    let constant: f64 = sites.iter().map(|&k| japanese(k).powf(-2.0 * (s - s_prime))).sum();
    let left = left_sq.sqrt();
    let holds = left <= constant.sqrt() * right * (1.0 + 1e-12) + 1e-300;
    Ok(SpTempCheck { left, right, constant, holds })
}

/// Retarded solution `u(t) = ∫₀ᵗ S(t − τ) F(τ) dτ` on the forcing's time grid,
/// by the trapezoid recursion `u_{j+1} = S(h)(u_j + (h/2)F_j) + (h/2)F_{j+1}`.
pub fn duhamel(prop: &LinearPropagator, forcing: &StateTrajectory) -> Result<StateTrajectory> {
    let Some(first) = forcing.states.first() else {
        return StateTrajectory::new(vec![], vec![]);
    };
    let mut u = LatticeState::zeros(first.n(), first.include_site0());
    let mut states = vec![u.clone()];
    for j in 0..forcing.len() - 1 {
        let h = forcing.times[j + 1] - forcing.times[j];
        u.axpy(0.5 * h, &forcing.states[j])?;
        u = propagate(prop, &u, h)?;
        u.axpy(0.5 * h, &forcing.states[j + 1])?;
        states.push(u.clone());
    }
    StateTrajectory::new(forcing.times.clone(), states)
}

/// Dual exponent `p/(p − 1)`.
pub fn dual_exponent(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

/// `‖S(·)ξ₀‖_{L^q_{εt} 𝐥^r} / ‖ξ₀‖_{𝐥²}` on `[0, steps·dt]`.
pub fn homogeneous_strichartz_quotient(
    prop: &LinearPropagator,
    datum: &LatticeState,
    pair: AdmissiblePair,
    dt: f64,
    steps: usize,
) -> Result<f64> {
    let traj = StateTrajectory::linear_flow(prop, datum, dt, steps)?;
    Ok(spacetime_norm(&traj, pair, WeightSpec::NONE, prop.eps())? / datum.l2())
}

/// `ε ‖∫₀ᵗ S(t−τ)F dτ‖_{L^q_{εt}𝐥^r} / ‖F‖_{L^{q̃′}_{εt}𝐥^{r̃′}}`; bounded
/// uniformly in `ε` when the retarded estimate carries the factor `1/ε`.
pub fn retarded_strichartz_quotient(
    prop: &LinearPropagator,
    forcing: &StateTrajectory,
    pair: AdmissiblePair,
    dual_of: AdmissiblePair,
) -> Result<f64> {
    let u = duhamel(prop, forcing)?;
    let eps = prop.eps();
    let lhs = spacetime_norm(&u, pair, WeightSpec::NONE, eps)?;
    let dual = AdmissiblePair::new(dual_exponent(dual_of.q_exp), dual_exponent(dual_of.r_exp));
    let rhs = spacetime_norm(forcing, dual, WeightSpec::NONE, eps)?;
    Ok(eps * lhs / rhs)
}
