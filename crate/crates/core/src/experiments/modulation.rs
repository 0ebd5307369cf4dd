//! Projection of a lattice state onto the breather family.
//!
//! Routes are strategies looked up by name. `l2-min` minimizes the `𝐥²`
//! distance over `(Ī, φ)`; `normal-form` reads `Ī` off the normalized action
//! and only fits the phase.

use super::family::BreatherFamily;
use crate::error::{Error, Result};
use crate::lattice::LatticeState;
use crate::normal_form::algebra::{lie_transform, Graded};
use crate::normal_form::{complex_coordinates, NormalForm, NormalFormConfig};
use crate::oscillator::ActionAngleChart;
use num_complex::Complex64 as C64;
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::Arc;

/// Outcome of a projection.
#[derive(Debug, Clone)]
pub struct Modulation {
    pub action: f64,
    pub phase: f64,
    /// `state − γ(Ī, φ)` on the state's lattice.
    pub residual: LatticeState,
    pub residual_l2: f64,
    /// `γ(Ī, φ)` embedded in the state's lattice.
    pub family_point: LatticeState,
}

pub trait ModulationRoute: Send + Sync {
    fn name(&self) -> &str;
    fn project(&self, state: &LatticeState, family: &BreatherFamily) -> Result<Modulation>;
}

#[derive(Clone)]
pub struct RouteRegistry {
    routes: BTreeMap<String, Arc<dyn ModulationRoute>>,
}

impl Default for RouteRegistry {
    /// Only `l2-min`; the normal-form route needs a computed normal form and
    /// is registered by the caller.
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(L2Minimization::default()));
        r
    }
}

impl RouteRegistry {
    pub fn empty() -> Self {
        Self { routes: BTreeMap::new() }
    }

    pub fn register(&mut self, route: Arc<dyn ModulationRoute>) {
        self.routes.insert(route.name().to_string(), route);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn ModulationRoute>> {
        self.routes
            .get(name)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("unknown projection route '{name}' (known: {})", self.names().join(", "))))
    }

    pub fn names(&self) -> Vec<String> {
        self.routes.keys().cloned().collect()
    }
}

/// Projects with the given route.
pub fn track_modulation(state: &LatticeState, family: &BreatherFamily, route: &dyn ModulationRoute) -> Result<Modulation> {
    route.project(state, family)
}

fn finish(state: &LatticeState, family: &BreatherFamily, action: f64, phase: f64) -> Result<Modulation> {
    let family_point = family.point(action, phase)?.resized(state.n());
    let residual = state.sub(&family_point)?;
    Ok(Modulation {
        action,
        phase: phase.rem_euclid(TAU),
        residual_l2: residual.l2(),
        residual,
        family_point,
    })
}

fn dot(a: &LatticeState, b: &LatticeState) -> f64 {
    a.p.iter().zip(&b.p).chain(a.q.iter().zip(&b.q)).map(|(x, y)| x * y).sum()
}

/// `argmin ‖state − γ(I, φ)‖_{𝐥²}`: coarse search over members and stored
/// samples, then damped Gauss–Newton.
#[derive(Debug, Clone)]
pub struct L2Minimization {
    pub max_iterations: usize,
    pub tol: f64,
}

impl Default for L2Minimization {
    fn default() -> Self {
        Self {
            max_iterations: 40,
            tol: 1e-13,
        }
    }
}

impl L2Minimization {
    fn coarse(&self, window: &LatticeState, family: &BreatherFamily) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for b in family.members() {
            let m = b.orbit.len();
            for (j, (_, x)) in b.orbit.iter().enumerate() {
                let d = window.sub(x).map(|r| r.l2()).unwrap_or(f64::INFINITY);
                if d < best.0 {
                    best = (d, b.i_label, TAU * j as f64 / m as f64);
                }
            }
        }
        (best.1, best.2)
    }

    /// Gauss–Newton in `(I, φ)`, or in `φ` alone when `fixed_action` is set.
    fn refine(&self, window: &LatticeState, family: &BreatherFamily, start: (f64, f64), fixed_action: bool) -> Result<(f64, f64)> {
        let (mut action, mut phase) = start;
        let objective = |a: f64, ph: f64| -> Result<f64> { Ok(window.sub(&family.point(a, ph)?)?.l2()) };
        let mut current = objective(action, phase)?;
        for _ in 0..self.max_iterations {
            let (g, gi, gphi) = family.point_with_tangents(action, phase)?;
            let r = window.sub(&g)?;
            let (da, dph) = if fixed_action {
                let a = dot(&gphi, &gphi);
                if a == 0.0 {
                    break;
                }
                (0.0, dot(&gphi, &r) / a)
            } else {
                let (a11, a12, a22) = (dot(&gi, &gi), dot(&gi, &gphi), dot(&gphi, &gphi));
                let (b1, b2) = (dot(&gi, &r), dot(&gphi, &r));
                let det = a11 * a22 - a12 * a12;
                if !(det.abs() > 1e-300) {
                    return Err(Error::SingularSystem("degenerate family tangents".into()));
                }
                ((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det)
            };
            // halve the step until the distance does not grow
            let mut scale = 1.0;
            let mut accepted = None;
            for _ in 0..30 {
                let (na, np) = (action + scale * da, phase + scale * dph);
                match objective(na, np) {
                    Ok(v) if v <= current * (1.0 + 1e-12) => {
                        accepted = Some((na, np, v));
                        break;
                    }
                    Ok(_) => scale *= 0.5,
                    Err(Error::WindowExhausted(msg)) if scale < 1e-3 => return Err(Error::WindowExhausted(msg)),
                    Err(Error::WindowExhausted(_)) => scale *= 0.5,
                    Err(e) => return Err(e),
                }
            }
            let Some((na, np, v)) = accepted else { break };
            let step = (na - action).abs().max((np - phase).abs());
            action = na;
            phase = np;
            current = v;
            if step < self.tol {
                break;
            }
        }
        // a minimizer pinned to the outermost labels is not trusted
        let (lo, hi) = family.label_range();
        if !fixed_action && (action - lo < 1e-9 || hi - action < 1e-9) {
            return Err(Error::WindowExhausted(format!("minimizer at the family edge (Ī = {action:.6})")));
        }
        Ok((action, phase))
    }
}

impl ModulationRoute for L2Minimization {
    fn name(&self) -> &str {
        "l2-min"
    }

    fn project(&self, state: &LatticeState, family: &BreatherFamily) -> Result<Modulation> {
        if !state.include_site0() {
            return Err(Error::InvalidInput("projection needs site 0".into()));
        }
        let window = state.resized(family.n());
        let start = self.coarse(&window, family);
        let (action, phase) = self.refine(&window, family, start, false)?;
        finish(state, family, action, phase)
    }
}

/// `Ī` from the action of the normalized coordinates, `I ∘ Φ⁻¹`, mapped to
/// family labels through the members' own normalized actions.
pub struct NormalFormRoute {
    chart: ActionAngleChart,
    transported: Graded,
    sites: usize,
    /// `(normalized action, label)` of the family members, increasing.
    calibration: Vec<(f64, f64)>,
    phase_fit: L2Minimization,
}

impl NormalFormRoute {
    pub fn new(nf: &NormalForm, chart: ActionAngleChart, family: &BreatherFamily) -> Result<Self> {
        if (nf.eps - family.eps()).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("normal form at ε = {} but family at ε = {}", nf.eps, family.eps())));
        }
        let grid = nf.grid().clone();
        let (n, d) = (nf.config.sites, nf.config.degree);
        let r_xi = NormalFormConfig::r_xi(nf.eps);
        let action = Graded::scalar(grid.clone(), n, d, grid.sample(|i, _| C64::new(i, 0.0)));
        let transported = nf
            .generators
            .iter()
            .rev()
            .fold(action, |acc, chi| lie_transform(&acc, &chi.scaled(C64::new(-1.0, 0.0)), nf.config.lie_order, r_xi).0);
        let mut route = Self {
            chart,
            transported,
            sites: n,
            calibration: Vec::new(),
            phase_fit: L2Minimization::default(),
        };
        let mut calibration = Vec::new();
        for b in family.members() {
            let mean = b
                .orbit
                .iter()
                .map(|(_, x)| route.normalized_action(x))
                .sum::<Result<f64>>()?
                / b.orbit.len() as f64;
            calibration.push((mean, b.i_label));
        }
        if calibration.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidInput("normalized actions of the family are not monotone".into()));
        }
        route.calibration = calibration;
        Ok(route)
    }

    /// `(I ∘ Φ⁻¹)` at the state, using sites `|k| ≤ sites`.
    pub fn normalized_action(&self, state: &LatticeState) -> Result<f64> {
        let (action, angle) = self.chart.from_cartesian_unchecked(state.p_at(0), state.q_at(0))?;
        let (lo, hi) = self.transported.grid().action_range();
        if !(lo..=hi).contains(&action) {
            return Err(Error::WindowExhausted(format!("central action {action:.6} outside the normal-form range [{lo}, {hi}]")));
        }
        let (z, w) = complex_coordinates(state, self.sites);
        Ok(self.transported.evaluate(action, angle, &z, &w).re)
    }

    fn label_of(&self, normalized: f64) -> Result<f64> {
        let c = &self.calibration;
        if !(normalized >= c[0].0 && normalized <= c[c.len() - 1].0) {
            return Err(Error::WindowExhausted(format!("normalized action {normalized:.6} outside the calibrated family")));
        }
        let j = c.partition_point(|x| x.0 < normalized).clamp(1, c.len() - 1);
        let (a, b) = (c[j - 1], c[j]);
        Ok(a.1 + (b.1 - a.1) * (normalized - a.0) / (b.0 - a.0))
    }
}

impl ModulationRoute for NormalFormRoute {
    fn name(&self) -> &str {
        "normal-form"
    }

    fn project(&self, state: &LatticeState, family: &BreatherFamily) -> Result<Modulation> {
        let action = self.label_of(self.normalized_action(state)?)?;
        let window = state.resized(family.n());
        // coarse phase from the member nearest in label
        let labels = family.labels();
        let j = labels
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - action).abs().total_cmp(&(b.1 - action).abs()))
            .map(|x| x.0)
            .unwrap_or(0);
        let b = &family.members()[j];
        let m = b.orbit.len();
        let k = (0..m)
            .min_by(|&x, &y| {
                let dx = window.sub(&b.orbit[x].1).map(|r| r.l2()).unwrap_or(f64::INFINITY);
                let dy = window.sub(&b.orbit[y].1).map(|r| r.l2()).unwrap_or(f64::INFINITY);
                dx.total_cmp(&dy)
            })
            .unwrap_or(0);
        let (_, phase) = self.phase_fit.refine(&window, family, (action, TAU * k as f64 / m as f64), true)?;
        finish(state, family, action, phase)
    }
}
