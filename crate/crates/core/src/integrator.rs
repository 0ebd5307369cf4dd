//! Symplectic splitting integrators for the chain.
//!
//! The basic step rotates every site exactly under the harmonic part
//! `(p² + q²)/2` and kicks the momenta with the anharmonic and coupling
//! forces. Schemes are compositions of the symmetric rotate-kick-rotate
//! step and are looked up by name in a [`SchemeRegistry`].

use crate::error::{Error, Result};
use crate::lattice::{self, LatticeState};
use crate::potential::PotentialSpec;
use nalgebra::DMatrix;
use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

/// On-site potential plus coupling strength.
#[derive(Debug, Clone)]
pub struct ChainModel {
    pub potential: PotentialSpec,
    pub eps: f64,
}

impl ChainModel {
    pub fn new(potential: PotentialSpec, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::InvalidInput(format!("coupling must be ≥ 0, got {eps}")));
        }
        Ok(Self { potential, eps })
    }

    /// Harmonic chain (`V = 0`).
    pub fn linear(eps: f64) -> Result<Self> {
        Self::new(PotentialSpec::zero(), eps)
    }

    pub fn hamiltonian(&self, state: &LatticeState) -> f64 {
        lattice::hamiltonian(state, &self.potential, self.eps)
    }

    pub fn vector_field(&self, state: &LatticeState) -> LatticeState {
        lattice::vector_field(state, &self.potential, self.eps)
    }

    /// Top of the linear spectrum, `√(1 + 4ε)`.
    pub fn max_frequency(&self) -> f64 {
        (1.0 + 4.0 * self.eps).sqrt()
    }

    /// `p += h (−V′(q) + εΔq)`
    fn kick(&self, state: &mut LatticeState, h: f64) {
        let split = (!state.include_site0()).then_some(state.n());
        let q = &state.q;
        let len = q.len();
        for i in 0..len {
            let left = if i == 0 || split == Some(i) { 0.0 } else { q[i - 1] };
            let right = if i + 1 == len || split == Some(i + 1) { 0.0 } else { q[i + 1] };
            let force = -self.potential.derivative(q[i]) + self.eps * (left + right - 2.0 * q[i]);
            state.p[i] += h * force;
        }
    }

    /// Linearized kick applied to the tangent columns; `q` is the base point.
    fn kick_tangent(&self, q: &[f64], include_site0: bool, n: usize, tangent: &mut DMatrix<f64>, h: f64) {
        let len = q.len();
        let split = (!include_site0).then_some(n);
        let curvature: Vec<f64> = q.iter().map(|&x| self.potential.second_derivative(x)).collect();
        for mut col in tangent.column_iter_mut() {
            let (dp, dq) = col.as_mut_slice().split_at_mut(len);
            for i in 0..len {
                let left = if i == 0 || split == Some(i) { 0.0 } else { dq[i - 1] };
                let right = if i + 1 == len || split == Some(i + 1) { 0.0 } else { dq[i + 1] };
                dp[i] += h * (-curvature[i] * dq[i] + self.eps * (left + right - 2.0 * dq[i]));
            }
        }
    }
}

/// Exact harmonic rotation of every site by angle `h`.
fn rotate(p: &mut [f64], q: &mut [f64], h: f64) {
    rotate_by(p, q, h.sin_cos());
}

fn rotate_by(p: &mut [f64], q: &mut [f64], (s, c): (f64, f64)) {
    for (pi, qi) in p.iter_mut().zip(q.iter_mut()) {
        let (p0, q0) = (*pi, *qi);
        *pi = c * p0 - s * q0;
        *qi = c * q0 + s * p0;
    }
}

fn rotate_tangent(tangent: &mut DMatrix<f64>, len: usize, h: f64) {
    let sc = h.sin_cos();
    for mut col in tangent.column_iter_mut() {
        let (dp, dq) = col.as_mut_slice().split_at_mut(len);
        rotate_by(dp, dq, sc);
    }
}

/// A one-step map of the chain.
pub trait Scheme: Send + Sync {
    fn name(&self) -> &str;

    /// Classical order of accuracy.
    fn order(&self) -> u32;

    fn step(&self, model: &ChainModel, state: &mut LatticeState, dt: f64);

    /// Advances `state` and the tangent columns (layout `[δp; δq]`) together.
    fn step_with_tangent(&self, model: &ChainModel, state: &mut LatticeState, tangent: &mut DMatrix<f64>, dt: f64);
}

/// Composition `S(w_m dt) ∘ … ∘ S(w₁ dt)` of the symmetric Strang step.
#[derive(Debug, Clone)]
pub struct Composition {
    name: String,
    order: u32,
    weights: Vec<f64>,
}

impl Composition {
    pub fn new(name: impl Into<String>, order: u32, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.is_empty() || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("composition weights must sum to 1, got {total}")));
        }
        Ok(Self {
            name: name.into(),
            order,
            weights,
        })
    }

    pub fn strang2() -> Self {
        Self::new("strang2", 2, vec![1.0]).unwrap()
    }

    pub fn yoshida4() -> Self {
        let cbrt2 = 2f64.cbrt();
        let w1 = 1.0 / (2.0 - cbrt2);
        let w0 = -cbrt2 / (2.0 - cbrt2);
        Self::new("yoshida4", 4, vec![w1, w0, w1]).unwrap()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Scheme for Composition {
    fn name(&self) -> &str {
        &self.name
    }

    fn order(&self) -> u32 {
        self.order
    }

    fn step(&self, model: &ChainModel, state: &mut LatticeState, dt: f64) {
        let (stages, last) = self.stages(dt);
        for (rot, h) in stages {
            rotate(&mut state.p, &mut state.q, rot);
            model.kick(state, h);
        }
        rotate(&mut state.p, &mut state.q, last);
    }

    fn step_with_tangent(&self, model: &ChainModel, state: &mut LatticeState, tangent: &mut DMatrix<f64>, dt: f64) {
        let len = state.len();
        assert_eq!(tangent.nrows(), 2 * len, "tangent rows must match the state");
        let (stages, last) = self.stages(dt);
        for (rot, h) in stages {
            rotate(&mut state.p, &mut state.q, rot);
            rotate_tangent(tangent, len, rot);
            model.kick_tangent(&state.q, state.include_site0(), state.n(), tangent, h);
            model.kick(state, h);
        }
        rotate(&mut state.p, &mut state.q, last);
        rotate_tangent(tangent, len, last);
    }
}

impl Composition {
    /// `(rotation, kick)` pairs with adjacent half rotations merged, plus the
    /// closing rotation.
    fn stages(&self, dt: f64) -> (Vec<(f64, f64)>, f64) {
        let mut pending = 0.0;
        let mut out = Vec::with_capacity(self.weights.len());
        for &w in &self.weights {
            let h = w * dt;
            out.push((pending + 0.5 * h, h));
            pending = 0.5 * h;
        }
        (out, pending)
    }
}

/// Name-keyed table of integration schemes.
#[derive(Clone)]
pub struct SchemeRegistry {
    schemes: BTreeMap<String, Arc<dyn Scheme>>,
}

impl Default for SchemeRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(Composition::strang2()));
        r.register(Arc::new(Composition::yoshida4()));
        r
    }
}

impl SchemeRegistry {
    pub fn empty() -> Self {
        Self {
            schemes: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, scheme: Arc<dyn Scheme>) {
        self.schemes.insert(scheme.name().to_string(), scheme);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Scheme>> {
        self.schemes.get(name).cloned().ok_or_else(|| {
            Error::InvalidInput(format!(
                "unknown scheme '{name}' (available: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.schemes.keys().cloned().collect()
    }
}

/// Looks a scheme up in the default registry.
pub fn scheme(name: &str) -> Result<Arc<dyn Scheme>> {
    SchemeRegistry::default().get(name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub scheme: String,
    pub t_final: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            scheme: "yoshida4".into(),
            t_final: 0.0,
        }
    }
}

/// States whose sup norm exceeds this are reported as blown up.
pub const BLOW_UP_THRESHOLD: f64 = 1e6;

impl IntegratorConfig {
    pub fn validate(&self, model: &ChainModel) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_final >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "need dt > 0 and t_final ≥ 0, got dt = {}, t_final = {}",
                self.dt, self.t_final
            )));
        }
        if self.dt * model.max_frequency() > 0.5 {
            return Err(Error::InvalidInput(format!(
                "dt = {} violates dt·√(1+4ε) ≤ 0.5",
                self.dt
            )));
        }
        Ok(())
    }

    /// Number of steps and the step actually used (`t_final / steps`).
    pub fn steps(&self) -> (usize, f64) {
        let n = (self.t_final / self.dt - 1e-9).ceil().max(0.0) as usize;
        if n == 0 {
            (0, 0.0)
        } else {
            (n, self.t_final / n as f64)
        }
    }
}

/// Flows `state` for time `t` with steps no longer than `dt`.
pub fn flow(model: &ChainModel, scheme: &dyn Scheme, state: &LatticeState, dt: f64, t: f64) -> LatticeState {
    let cfg = IntegratorConfig {
        dt: dt.abs(),
        scheme: String::new(),
        t_final: t.abs(),
    };
    let (n, h) = cfg.steps();
    let h = h * t.signum();
    let mut s = state.clone();
    for _ in 0..n {
        scheme.step(model, &mut s, h);
    }
    s
}

/// Flow map and its Jacobian `DΦ_t` (rows and columns ordered `[p; q]`).
pub fn flow_with_jacobian(
    model: &ChainModel,
    scheme: &dyn Scheme,
    state: &LatticeState,
    dt: f64,
    t: f64,
) -> (LatticeState, DMatrix<f64>) {
    let cfg = IntegratorConfig {
        dt: dt.abs(),
        scheme: String::new(),
        t_final: t.abs(),
    };
    let (n, h) = cfg.steps();
    let h = h * t.signum();
    let mut s = state.clone();
    let mut m = DMatrix::identity(2 * s.len(), 2 * s.len());
    for _ in 0..n {
        scheme.step_with_tangent(model, &mut s, &mut m, h);
    }
    (s, m)
}

/// A scalar quantity recorded along a trajectory.
pub trait Observer {
    fn name(&self) -> &str;
    fn observe(&mut self, t: f64, state: &LatticeState) -> Result<f64>;
}

/// Observer backed by a closure.
pub struct FnObserver<F> {
    name: String,
    f: F,
}

impl<F: FnMut(f64, &LatticeState) -> f64> FnObserver<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F: FnMut(f64, &LatticeState) -> f64> Observer for FnObserver<F> {
    fn name(&self) -> &str {
        &self.name
    }

    fn observe(&mut self, t: f64, state: &LatticeState) -> Result<f64> {
        Ok((self.f)(t, state))
    }
}

/// Energy observer for a given model.
pub fn energy_observer(model: ChainModel) -> impl Observer {
    FnObserver::new("energy", move |_, s: &LatticeState| model.hamiltonian(s))
}

/// Recorded observables: one row of values per sample time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl TrajectoryRecord {
    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(self.values.iter().map(|row| row[j]).collect())
    }

    /// Long format: `t, observable, value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "observable", "value"])?;
        for (t, row) in self.times.iter().zip(&self.values) {
            for (name, v) in self.names.iter().zip(row) {
                w.write_record(&[format!("{t:e}"), name.clone(), format!("{v:e}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Integrates `state` for `config.t_final`, calling `visit` at `t = 0` and
/// after every `stride` steps (and at the end). Aborts on blow-up.
pub fn evolve_with<F>(
    model: &ChainModel,
    config: &IntegratorConfig,
    state: &LatticeState,
    stride: usize,
    mut visit: F,
) -> Result<LatticeState>
where
    F: FnMut(f64, &LatticeState) -> Result<()>,
{
    config.validate(model)?;
    let scheme = scheme(&config.scheme)?;
    let stride = stride.max(1);
    let (n, h) = config.steps();
    let mut s = state.clone();
    visit(0.0, &s)?;
    for j in 1..=n {
        scheme.step(model, &mut s, h);
        if j % stride == 0 || j == n {
            let t = j as f64 * h;
            let sup = s.p.iter().chain(&s.q).fold(0.0f64, |m, x| m.max(x.abs()));
            if !(sup <= BLOW_UP_THRESHOLD) {
                return Err(Error::BlowUp { t });
            }
            visit(t, &s)?;
        }
    }
    Ok(s)
}

/// [`evolve_with`] sampling a set of observers into a record.
pub fn evolve(
    model: &ChainModel,
    config: &IntegratorConfig,
    state: &LatticeState,
    stride: usize,
    observers: &mut [Box<dyn Observer + '_>],
) -> Result<(LatticeState, TrajectoryRecord)> {
    let mut record = TrajectoryRecord {
        names: observers.iter().map(|o| o.name().to_string()).collect(),
        ..Default::default()
    };
    let last = evolve_with(model, config, state, stride, |t, s| {
        let row = observers
            .iter_mut()
            .map(|o| o.observe(t, s))
            .collect::<Result<Vec<_>>>()?;
        record.times.push(t);
        record.values.push(row);
        Ok(())
    })?;
    Ok((last, record))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn octic(eps: f64) -> ChainModel {
        ChainModel::new(PotentialSpec::monomial(8, 1.0).unwrap(), eps).unwrap()
    }

    #[test]
    fn harmonic_uncoupled_is_exact_rotation() {
        let model = ChainModel::linear(0.0).unwrap();
        let s0 = LatticeState::from_fn(3, true, |k| (0.1 * k as f64, 1.0 - 0.2 * k as f64));
        let t = 7.3;
        for name in ["strang2", "yoshida4"] {
            let s = flow(&model, scheme(name).unwrap().as_ref(), &s0, 0.05, t);
            for i in 0..s.len() {
                let (p, q) = (s0.p[i], s0.q[i]);
                assert!((s.q[i] - (q * t.cos() + p * t.sin())).abs() < 1e-13);
                assert!((s.p[i] - (p * t.cos() - q * t.sin())).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn step_is_reversible() {
        let model = octic(0.1);
        let s0 = LatticeState::from_fn(4, true, |k| (0.3 / (1 + k * k) as f64, 0.5 * (-(k as f64).abs()).exp()));
        for name in ["strang2", "yoshida4"] {
            let sch = scheme(name).unwrap();
            let mut s = s0.clone();
            sch.step(&model, &mut s, 0.05);
            sch.step(&model, &mut s, -0.05);
            assert!(s.sub(&s0).unwrap().l2() < 1e-15);
        }
    }

    #[test]
    fn tangent_matches_finite_differences() {
        let model = octic(0.07);
        let s0 = LatticeState::from_fn(2, true, |k| (0.1 * k as f64, 0.6 / (1 + k * k) as f64));
        let sch = Composition::yoshida4();
        let (_, m) = flow_with_jacobian(&model, &sch, &s0, 0.05, 1.0);
        let x0 = s0.to_flat();
        let h = 1e-6;
        for j in 0..x0.len() {
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[j] += h;
            xm[j] -= h;
            let fp = flow(&model, &sch, &LatticeState::from_flat(2, true, &xp).unwrap(), 0.05, 1.0).to_flat();
            let fm = flow(&model, &sch, &LatticeState::from_flat(2, true, &xm).unwrap(), 0.05, 1.0).to_flat();
            for i in 0..x0.len() {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!((fd - m[(i, j)]).abs() < 1e-7, "({i},{j}) {fd} vs {}", m[(i, j)]);
            }
        }
    }

    #[test]
    fn registry_lookup() {
        let r = SchemeRegistry::default();
        assert_eq!(r.names(), vec!["strang2", "yoshida4"]);
        assert_eq!(r.get("yoshida4").unwrap().order(), 4);
        assert!(r.get("rk4").is_err());
    }

    #[test]
    fn config_guard() {
        let model = octic(0.1);
        let ok = IntegratorConfig { dt: 0.05, scheme: "strang2".into(), t_final: 1.0 };
        assert!(ok.validate(&model).is_ok());
        let bad = IntegratorConfig { dt: 0.5, ..ok.clone() };
        assert!(bad.validate(&model).is_err());
        assert_eq!(IntegratorConfig { dt: 0.3, ..ok }.steps(), (4, 0.25));
    }

    #[test]
    fn zero_state_record() {
        let model = octic(0.05);
        let cfg = IntegratorConfig { dt: 0.05, scheme: "yoshida4".into(), t_final: 1.0 };
        let mut obs: Vec<Box<dyn Observer>> = vec![Box::new(energy_observer(model.clone()))];
        let (s, rec) = evolve(&model, &cfg, &LatticeState::zeros(4, true), 5, &mut obs).unwrap();
        assert_eq!(s, LatticeState::zeros(4, true));
        assert_eq!(rec.times.len(), 5);
        assert!(rec.values.iter().all(|r| r[0] == 0.0));
    }

    #[test]
    fn blow_up_detected() {
        // a softening potential lets a large excitation escape
        let model = ChainModel::new(PotentialSpec::new(vec![(4, -1.0)], 4).unwrap(), 0.0).unwrap();
        let cfg = IntegratorConfig { dt: 0.01, scheme: "strang2".into(), t_final: 50.0 };
        let mut s = LatticeState::zeros(1, true);
        s.q[1] = 2.0;
        assert!(matches!(evolve_with(&model, &cfg, &s, 1, |_, _| Ok(())), Err(Error::BlowUp { .. })));
    }
}
