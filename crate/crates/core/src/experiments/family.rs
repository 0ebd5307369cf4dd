//! A tabulated one-parameter family of breathers at fixed coupling.
//!
//! Members are continued from anti-continuum seeds spread over an action
//! window. A family point is addressed by `(I, φ)`: the label `I` is the
//! period-averaged central action and `φ ∈ [0, 2π)` the orbit phase, with
//! `γ(I, φ) = Φ_{φT(I)/2π}(x_I)` for each member and Lagrange
//! interpolation across members.

use crate::breather::{anti_continuum_seed, continue_breather, Breather, BreatherConfig};
use crate::error::{Error, Result};
use crate::integrator::{flow, scheme, Scheme};
use crate::lattice::LatticeState;
use crate::oscillator::ActionAngleChart;
use rayon::prelude::*;
use std::f64::consts::TAU;
use std::sync::Arc;

/// How the members are continued.
#[derive(Debug, Clone)]
pub struct FamilySpec {
    pub eps: f64,
    pub center: f64,
    pub half_width: f64,
    pub members: usize,
    pub eps_step: f64,
    pub newton_tol: f64,
    pub breather: BreatherConfig,
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self {
            eps: 0.05,
            center: 0.4,
            half_width: 0.12,
            members: 9,
            eps_step: 0.0125,
            newton_tol: 1e-11,
            breather: BreatherConfig {
                n: 24,
                ..BreatherConfig::default()
            },
        }
    }
}

/// Points per interpolation stencil in the action direction.
const STENCIL: usize = 4;

#[derive(Clone)]
pub struct BreatherFamily {
    members: Vec<Breather>,
    scheme: Arc<dyn Scheme>,
    /// Steps per period used to move along an orbit.
    steps_per_period: usize,
}

impl std::fmt::Debug for BreatherFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BreatherFamily")
            .field("labels", &self.labels())
            .field("scheme", &self.scheme.name())
            .finish()
    }
}

impl BreatherFamily {
    /// Continues `spec.members` seeds spread evenly over
    /// `center ± half_width` up to `spec.eps`, in parallel.
    pub fn tabulate(chart: &ActionAngleChart, spec: &FamilySpec) -> Result<Self> {
        if spec.members < 2 {
            return Err(Error::InvalidInput("a family needs at least two members".into()));
        }
        if !(spec.half_width > 0.0) {
            return Err(Error::InvalidInput(format!("family half width must be positive, got {}", spec.half_width)));
        }
        let m = spec.members;
        let seeds: Vec<f64> = (0..m)
            .map(|j| spec.center - spec.half_width + 2.0 * spec.half_width * j as f64 / (m - 1) as f64)
            .collect();
        let members = seeds
            .par_iter()
            .map(|&action| {
                let seed = anti_continuum_seed(chart, action, &spec.breather)?;
                continue_breather(&seed, spec.eps, spec.eps_step, spec.newton_tol, &spec.breather)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_members(members, &spec.breather)
    }

    /// Wraps already continued members; they must share `ε`, lattice and
    /// carry orbit samples.
    pub fn from_members(mut members: Vec<Breather>, cfg: &BreatherConfig) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::InvalidInput("a family needs at least two members".into()));
        }
        members.sort_by(|a, b| a.i_label.total_cmp(&b.i_label));
        let first = &members[0];
        for b in &members {
            if b.eps != first.eps || b.point.n() != first.point.n() || b.potential != first.potential {
                return Err(Error::InvalidInput("family members differ in ε, lattice or potential".into()));
            }
            if b.orbit.is_empty() {
                return Err(Error::InvalidInput("family members need orbit samples".into()));
            }
        }
        if members.windows(2).any(|w| w[1].i_label <= w[0].i_label) {
            return Err(Error::InvalidInput("family labels must be distinct".into()));
        }
        Ok(Self {
            members,
            scheme: scheme(&cfg.scheme)?,
            steps_per_period: cfg.residual_steps.max(1),
        })
    }

    pub fn members(&self) -> &[Breather] {
        &self.members
    }

    pub fn labels(&self) -> Vec<f64> {
        self.members.iter().map(|b| b.i_label).collect()
    }

    pub fn label_range(&self) -> (f64, f64) {
        (self.members[0].i_label, self.members[self.members.len() - 1].i_label)
    }

    pub fn eps(&self) -> f64 {
        self.members[0].eps
    }

    /// Half-width of the members' lattice.
    pub fn n(&self) -> usize {
        self.members[0].point.n()
    }

    /// Member `j` at phase `φ`: nearest stored sample flowed the rest of the way.
    pub fn member_point(&self, j: usize, phase: f64) -> LatticeState {
        let b = &self.members[j];
        let m = b.orbit.len();
        let phase = phase.rem_euclid(TAU);
        let pos = phase / TAU * m as f64;
        let idx = (pos.round() as usize) % m;
        let (_, sample) = &b.orbit[idx];
        let t = (pos - pos.round()) * b.period / m as f64;
        if t == 0.0 {
            return sample.clone();
        }
        flow(&b.model(), self.scheme.as_ref(), sample, b.period / self.steps_per_period as f64, t)
    }

    fn check(&self, action: f64) -> Result<()> {
        let (lo, hi) = self.label_range();
        if !(action >= lo && action <= hi) {
            return Err(Error::WindowExhausted(format!("Ī = {action:.6} outside the family labels [{lo:.6}, {hi:.6}]")));
        }
        Ok(())
    }

    /// Indices of the interpolation stencil and the Lagrange weights and
    /// their derivatives at `action`.
    fn stencil(&self, action: f64) -> (usize, Vec<f64>, Vec<f64>) {
        let labels = self.labels();
        let k = STENCIL.min(labels.len());
        let upper = labels.partition_point(|&l| l < action);
        let start = upper.saturating_sub(k / 2).min(labels.len() - k);
        let x = &labels[start..start + k];
        let mut w = vec![0.0; k];
        let mut dw = vec![0.0; k];
        for i in 0..k {
            let denom: f64 = (0..k).filter(|&j| j != i).map(|j| x[i] - x[j]).product();
            w[i] = (0..k).filter(|&j| j != i).map(|j| action - x[j]).product::<f64>() / denom;
            dw[i] = (0..k)
                .filter(|&l| l != i)
                .map(|l| (0..k).filter(|&j| j != i && j != l).map(|j| action - x[j]).product::<f64>())
                .sum::<f64>()
                / denom;
        }
        (start, w, dw)
    }

    /// `γ(I, φ)` on the family lattice.
    pub fn point(&self, action: f64, phase: f64) -> Result<LatticeState> {
        Ok(self.point_with_tangents(action, phase)?.0)
    }

    /// `γ`, `∂γ/∂I` and `∂γ/∂φ` at `(I, φ)`.
    pub fn point_with_tangents(&self, action: f64, phase: f64) -> Result<(LatticeState, LatticeState, LatticeState)> {
        self.check(action)?;
        let (start, w, dw) = self.stencil(action);
        let n = self.n();
        let mut g = LatticeState::zeros(n, true);
        let mut gi = g.clone();
        let mut gphi = g.clone();
        for (i, (wi, dwi)) in w.iter().zip(&dw).enumerate() {
            let b = &self.members[start + i];
            let x = self.member_point(start + i, phase);
            g.axpy(*wi, &x)?;
            gi.axpy(*dwi, &x)?;
            gphi.axpy(wi * b.period / TAU, &b.model().vector_field(&x))?;
        }
        Ok((g, gi, gphi))
    }

    /// Frequency `2π/T` interpolated at `action`.
    pub fn frequency(&self, action: f64) -> Result<f64> {
        self.check(action)?;
        let (start, w, _) = self.stencil(action);
        Ok(w.iter()
            .enumerate()
            .map(|(i, wi)| wi * TAU / self.members[start + i].period)
            .sum())
    }
}
