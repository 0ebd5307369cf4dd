//! Perturb a breather, evolve the full chain and follow the modulated action
//! and the space-time norms of the distance to the family.

pub mod family;
pub mod modulation;

pub use family::{BreatherFamily, FamilySpec};
pub use modulation::{track_modulation, L2Minimization, Modulation, ModulationRoute, NormalFormRoute, RouteRegistry};

use crate::breather::{split_point, Breather};
use crate::error::{Error, Result};
use crate::integrator::{evolve_with, ChainModel, IntegratorConfig};
use crate::lattice::{is_admissible, japanese, AdmissiblePair, LatticeState, NormSpec, WeightSpec};
use crate::linear::spacetime::series_time_norm;
use crate::numerics::fit_loglog;
use crate::oscillator::ActionAngleChart;
use crate::potential::PotentialSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

/// Where the random perturbation lives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerturbationShape {
    /// Gaussian envelope `e^{−k²/(2w²)}` around site 0.
    Localized { width: f64 },
    /// Every site of the lattice.
    Spread,
}

impl std::str::FromStr for PerturbationShape {
    type Err = Error;

    /// `spread` or `localized` / `localized:<width>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "spread" {
            return Ok(Self::Spread);
        }
        if s == "localized" {
            return Ok(Self::Localized { width: 4.0 });
        }
        if let Some(w) = s.strip_prefix("localized:") {
            let width: f64 = w.trim().parse().map_err(|e| Error::InvalidInput(format!("bad width '{w}': {e}")))?;
            if !(width > 0.0) {
                return Err(Error::InvalidInput(format!("width must be positive, got {width}")));
            }
            return Ok(Self::Localized { width });
        }
        Err(Error::InvalidInput(format!("unknown perturbation shape '{s}'")))
    }
}

/// Breather point on an `N`-site lattice plus a random kick of `𝐥²` size `μ`.
pub fn perturb(b: &Breather, n: usize, mu: f64, shape: PerturbationShape, seed: u64) -> Result<LatticeState> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::InvalidInput(format!("perturbation size must be ≥ 0, got {mu}")));
    }
    let mut state = b.point.resized(n);
    if mu == 0.0 {
        return Ok(state);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let envelope = |k: i64| match shape {
        PerturbationShape::Localized { width } => (-(k * k) as f64 / (2.0 * width * width)).exp(),
        PerturbationShape::Spread => 1.0,
    };
    let mut kick = LatticeState::from_fn(n, true, |k| {
        let e = envelope(k);
        let p: f64 = StandardNormal.sample(&mut rng);
        let q: f64 = StandardNormal.sample(&mut rng);
        (e * p, e * q)
    });
    let size = kick.l2();
    if size == 0.0 {
        return Err(Error::InvalidInput("perturbation envelope vanishes on the lattice".into()));
    }
    kick.scale(mu / size);
    state.axpy(1.0, &kick)?;
    Ok(state)
}

/// [`perturb`] with the kick made `𝐥²`-orthogonal to the family tangents
/// `∂γ/∂I`, `∂γ/∂φ` and to their images under `J`, so that it changes
/// neither the projected label nor the energy to first order.
pub fn perturb_transverse(family: &BreatherFamily, member: usize, n: usize, mu: f64, shape: PerturbationShape, seed: u64) -> Result<LatticeState> {
    let b = family
        .members()
        .get(member)
        .ok_or_else(|| Error::InvalidInput(format!("family has no member {member}")))?;
    let raw = perturb(b, n, 1.0, shape, seed)?;
    let base = b.point.resized(n);
    let mut kick = raw.sub(&base)?;
    let (_, gi, gphi) = family.point_with_tangents(b.i_label, 0.0)?;
    let jay = |v: &LatticeState| LatticeState::from_vecs(v.n(), true, v.q.clone(), v.p.iter().map(|x| -x).collect()).expect("same layout");
    let mut basis: Vec<LatticeState> = Vec::new();
    for v in [gi.clone(), gphi.clone(), jay(&gi), jay(&gphi)] {
        let mut v = v.resized(n);
        for e in &basis {
            let c = dot(&v, e);
            v.axpy(-c, e)?;
        }
        let size = v.l2();
        if size > 1e-12 {
            v.scale(1.0 / size);
            basis.push(v);
        }
    }
    // twice for round-off
    for _ in 0..2 {
        for e in &basis {
            let c = dot(&kick, e);
            kick.axpy(-c, e)?;
        }
    }
    let size = kick.l2();
    if size == 0.0 || mu == 0.0 {
        return Ok(base);
    }
    kick.scale(mu / size);
    let mut state = base;
    state.axpy(1.0, &kick)?;
    Ok(state)
}

fn dot(a: &LatticeState, b: &LatticeState) -> f64 {
    a.p.iter().zip(&b.p).chain(a.q.iter().zip(&b.q)).map(|(x, y)| x * y).sum()
}

/// A space-time norm `L^q_{εt} 𝐥^r` (optionally weighted) of the distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordedNorm {
    pub pair: AdmissiblePair,
    pub weight: WeightSpec,
}

impl RecordedNorm {
    pub fn label(&self) -> String {
        let e = |x: f64| if x.is_infinite() { "inf".to_string() } else { format!("{x}") };
        let base = format!("L{}_l{}", e(self.pair.q_exp), e(self.pair.r_exp));
        match self.weight {
            WeightSpec::Polynomial { s } if s == 0.0 => base,
            WeightSpec::Polynomial { s } => format!("{base}_s{s}"),
            WeightSpec::Exponential { plus, beta } => format!("{base}_exp{}{beta}", if plus { "+" } else { "-" }),
        }
    }

    fn spatial(&self) -> NormSpec {
        NormSpec {
            r: self.pair.r_exp,
            weight: self.weight,
        }
    }
}

impl std::str::FromStr for RecordedNorm {
    type Err = Error;

    /// `q:r` or `q:r:s` (polynomial weight `s`); `inf` is accepted.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
        let num = |t: &str| -> Result<f64> {
            if t == "inf" {
                return Ok(f64::INFINITY);
            }
            t.parse().map_err(|e| Error::InvalidInput(format!("bad exponent '{t}': {e}")))
        };
        match parts.as_slice() {
            [q, r] => Ok(Self {
                pair: AdmissiblePair::new(num(q)?, num(r)?),
                weight: WeightSpec::NONE,
            }),
            [q, r, w] => Ok(Self {
                pair: AdmissiblePair::new(num(q)?, num(r)?),
                weight: WeightSpec::Polynomial { s: num(w)? },
            }),
            _ => Err(Error::InvalidInput(format!("norm '{s}' is not q:r or q:r:s"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub eps: f64,
    /// `δ > 1/2`; the perturbation obeys `μ ≤ ε^δ`.
    pub delta: f64,
    pub mu: f64,
    pub potential: PotentialSpec,
    pub i_label: f64,
    pub n: usize,
    /// Horizon in slow time, `εT`.
    pub horizon: f64,
    pub dt: f64,
    pub scheme: String,
    /// Slow time between samples.
    pub sample_interval: f64,
    pub norms: Vec<RecordedNorm>,
    /// Weight exponent `s` of the `𝐥^∞_{−s} L²_{εt}` residual norm.
    pub residual_s: f64,
    pub shape: PerturbationShape,
    /// Remove the family-tangent directions from the kick.
    pub transverse: bool,
    pub seed: u64,
    pub family: FamilySpec,
    pub route: String,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let eps: f64 = 0.05;
        Self {
            eps,
            delta: 0.6,
            mu: eps.powf(0.6),
            potential: PotentialSpec::monomial(8, 1.0).expect("q⁸ is valid"),
            i_label: 0.4,
            n: 2048,
            horizon: 100.0,
            // the stiff q⁸ core needs this to hold the energy to 1e-7
            dt: 0.0125,
            scheme: "yoshida4".into(),
            sample_interval: 0.5,
            norms: vec![
                RecordedNorm {
                    pair: AdmissiblePair::new(7.0, 14.0),
                    weight: WeightSpec::NONE,
                },
                RecordedNorm {
                    pair: AdmissiblePair::new(f64::INFINITY, 2.0),
                    weight: WeightSpec::NONE,
                },
            ],
            residual_s: 2.0,
            shape: PerturbationShape::Localized { width: 4.0 },
            transverse: true,
            seed: 1,
            family: FamilySpec::default(),
            route: "l2-min".into(),
            output: PathBuf::from("stability"),
        }
    }
}

impl ExperimentConfig {
    /// Physical horizon `T`.
    pub fn t_final(&self) -> f64 {
        self.horizon / self.eps
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.eps > 0.0) {
            return bad(format!("ε must be positive, got {}", self.eps));
        }
        if !(self.delta > 0.5) {
            return bad(format!("δ must exceed 1/2, got {}", self.delta));
        }
        // μ = ε^δ itself is allowed so that the boundary case can be run
        let cap = self.eps.powf(self.delta);
        if !(self.mu >= 0.0) || self.mu > cap * (1.0 + 1e-12) {
            return bad(format!("need 0 ≤ μ ≤ ε^δ = {cap:.6}, got μ = {}", self.mu));
        }
        if !(self.horizon > 0.0) || !(self.sample_interval > 0.0) || self.sample_interval > self.horizon {
            return bad(format!("need 0 < sample interval ≤ horizon, got {} and {}", self.sample_interval, self.horizon));
        }
        let reach = 4.0 * self.t_final() * self.eps.sqrt();
        if (self.n as f64) <= reach {
            return Err(Error::BoundaryReached(format!("N = {} but the horizon needs N > 4T√ε = {reach:.1}", self.n)));
        }
        if self.n < self.family.breather.n {
            return bad(format!("lattice N = {} smaller than the family lattice {}", self.n, self.family.breather.n));
        }
        for r in &self.norms {
            if !is_admissible(r.pair) {
                return bad(format!("({}, {}) is not an admissible pair", r.pair.q_exp, r.pair.r_exp));
            }
        }
        if self.family.members < 3 || self.family.members % 2 == 0 {
            return bad(format!("family needs an odd member count ≥ 3, got {}", self.family.members));
        }
        if (self.family.eps - self.eps).abs() > 0.0 || (self.family.center - self.i_label).abs() > 0.0 {
            return bad("family must be centred at (I_label, ε) of the experiment".into());
        }
        Ok(())
    }

    /// Action window needed by the chart.
    fn chart_range(&self) -> (f64, f64) {
        let w = self.family.half_width;
        ((self.i_label - 1.5 * w).max(1e-3), self.i_label + 1.5 * w)
    }

    /// Builds the chart covering the family window.
    pub fn chart(&self) -> Result<ActionAngleChart> {
        let (lo, hi) = self.chart_range();
        ActionAngleChart::for_potential(self.potential.clone(), lo, hi)
    }

    /// Tabulates the family described by the config.
    pub fn tabulate_family(&self) -> Result<(ActionAngleChart, BreatherFamily)> {
        let chart = self.chart()?;
        let family = BreatherFamily::tabulate(&chart, &self.family)?;
        Ok((chart, family))
    }

    /// Integrator steps between samples.
    pub fn stride_steps(&self) -> usize {
        ((self.sample_interval / self.eps) / self.dt).round().max(1.0) as usize
    }
}

/// Finite-horizon space-time norm of the distance.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacetimeValue {
    pub label: String,
    pub value: f64,
    /// Increase of the norm over the last decade `[T/10, T]` of the horizon.
    pub last_decade_increment: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StabilityRecord {
    pub eps: f64,
    pub mu: f64,
    pub times: Vec<f64>,
    pub actions: Vec<f64>,
    pub phases: Vec<f64>,
    pub residual_l2: Vec<f64>,
    pub energy: Vec<f64>,
    /// Norm labels, one distance series each.
    pub norm_labels: Vec<String>,
    pub distances: Vec<Vec<f64>>,
    /// Per-site `‖ξ_k‖²_{L²_{εt}}` of the residual (max of `p` and `q` parts).
    pub residual_site_l2: Vec<(i64, f64)>,
}

/// Derived quantities of a record.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilitySummary {
    pub i_start: f64,
    pub i_end: f64,
    pub drift: f64,
    pub drift_bound: f64,
    pub max_residual_over_mu: f64,
    pub energy_drift: f64,
    pub spacetime: Vec<SpacetimeValue>,
    pub mixed_residual: f64,
    /// `(T′, |⟨Ī⟩_{[2T′,4T′]} − ⟨Ī⟩_{[T′,2T′]}|)` over dyadic windows.
    pub cauchy_tails: Vec<(f64, f64)>,
}

fn window_mean(times: &[f64], values: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let sel: Vec<f64> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= lo && **t <= hi)
        .map(|(_, v)| *v)
        .collect();
    (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
}

impl StabilityRecord {
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn distance(&self, label: &str) -> Option<&[f64]> {
        let j = self.norm_labels.iter().position(|l| l == label)?;
        Some(&self.distances[j])
    }

    /// Summary under the norms of `cfg` and the residual weight `residual_s`.
    pub fn summarize(&self, norms: &[RecordedNorm], residual_s: f64) -> Result<StabilitySummary> {
        if self.is_empty() {
            return Err(Error::InvalidInput("empty record".into()));
        }
        let last = self.times.len() - 1;
        let t_end = self.times[last];
        let mut spacetime = Vec::new();
        for r in norms {
            let label = r.label();
            let d = self
                .distance(&label)
                .ok_or_else(|| Error::InvalidInput(format!("record has no distance series '{label}'")))?;
            let value = series_time_norm(&self.times, d, r.pair.q_exp, self.eps)?;
            let cut = self.times.partition_point(|&t| t <= t_end / 10.0);
            let early = series_time_norm(&self.times[..cut.max(1)], &d[..cut.max(1)], r.pair.q_exp, self.eps)?;
            spacetime.push(SpacetimeValue {
                label,
                value,
                last_decade_increment: value - early,
            });
        }
        let mixed_residual = self
            .residual_site_l2
            .iter()
            .map(|&(k, v)| japanese(k).powf(-residual_s) * v.sqrt())
            .fold(0.0, f64::max);
        let mut cauchy_tails = Vec::new();
        let mut tp = t_end / 4.0;
        while tp * self.eps >= 1.0 {
            if let (Some(a), Some(b)) = (
                window_mean(&self.times, &self.actions, tp, 2.0 * tp),
                window_mean(&self.times, &self.actions, 2.0 * tp, 4.0 * tp),
            ) {
                cauchy_tails.push((tp, (b - a).abs()));
            }
            tp /= 2.0;
        }
        cauchy_tails.reverse();
        let e0 = self.energy[0];
        let energy_drift = self.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs().max(f64::MIN_POSITIVE);
        let mu = self.mu;
        Ok(StabilitySummary {
            i_start: self.actions[0],
            i_end: self.actions[last],
            drift: (self.actions[last] - self.actions[0]).abs(),
            drift_bound: 10.0 * mu * mu / self.eps.sqrt(),
            max_residual_over_mu: if mu > 0.0 {
                self.residual_l2.iter().fold(0.0f64, |m, v| m.max(*v)) / mu
            } else {
                0.0
            },
            energy_drift,
            spacetime,
            mixed_residual,
            cauchy_tails,
        })
    }
}

/// Everything [`run_stability`] needs besides the config.
pub struct StabilitySetup {
    pub chart: ActionAngleChart,
    pub family: BreatherFamily,
    pub routes: RouteRegistry,
}

impl StabilitySetup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let (chart, family) = cfg.tabulate_family()?;
        Ok(Self {
            chart,
            family,
            routes: RouteRegistry::default(),
        })
    }

    /// Index of the member seeded at `I_label`.
    pub fn center(&self) -> usize {
        self.family.members().len() / 2
    }

    /// The breather that gets perturbed.
    pub fn breather(&self) -> &Breather {
        &self.family.members()[self.center()]
    }

    /// Initial state of a run.
    pub fn initial_state(&self, cfg: &ExperimentConfig) -> Result<LatticeState> {
        if cfg.transverse {
            perturb_transverse(&self.family, self.center(), cfg.n, cfg.mu, cfg.shape, cfg.seed)
        } else {
            perturb(self.breather(), cfg.n, cfg.mu, cfg.shape, cfg.seed)
        }
    }
}

/// Builds the family and runs one experiment.
pub fn run_stability(cfg: &ExperimentConfig) -> Result<StabilityRecord> {
    cfg.validate()?;
    let setup = StabilitySetup::new(cfg)?;
    run_stability_with(cfg, &setup)
}

/// Runs one experiment on a prepared family.
pub fn run_stability_with(cfg: &ExperimentConfig, setup: &StabilitySetup) -> Result<StabilityRecord> {
    cfg.validate()?;
    let route = setup.routes.get(&cfg.route)?;
    let model = ChainModel::new(cfg.potential.clone(), cfg.eps)?;
    let integ = IntegratorConfig {
        dt: cfg.dt,
        scheme: cfg.scheme.clone(),
        t_final: cfg.t_final(),
    };
    let state0 = setup.initial_state(cfg)?;
    let mut rec = StabilityRecord {
        eps: cfg.eps,
        mu: cfg.mu,
        norm_labels: cfg.norms.iter().map(RecordedNorm::label).collect(),
        distances: vec![Vec::new(); cfg.norms.len()],
        ..Default::default()
    };
    let len = state0.len();
    let mut sums_p = vec![0.0; len];
    let mut sums_q = vec![0.0; len];
    let mut prev: Option<(f64, LatticeState)> = None;
    let edge = (cfg.n as f64 * 0.9) as i64;
    evolve_with(&model, &integ, &state0, cfg.stride_steps(), |t, s| {
        let m = track_modulation(s, &setup.family, route.as_ref())?;
        let here = split_point(&setup.chart, s)?;
        let there = split_point(&setup.chart, &m.family_point)?;
        for (j, r) in cfg.norms.iter().enumerate() {
            rec.distances[j].push(crate::lattice::distance(&here, &there, r.spatial())?);
        }
        // trapezoid accumulation of the per-site L²_{εt} mass
        if let Some((t0, r0)) = &prev {
            let h = 0.5 * cfg.eps * (t - t0);
            for i in 0..len {
                sums_p[i] += h * (r0.p[i] * r0.p[i] + m.residual.p[i] * m.residual.p[i]);
                sums_q[i] += h * (r0.q[i] * r0.q[i] + m.residual.q[i] * m.residual.q[i]);
            }
        }
        let far = (0..len)
            .filter(|&i| s.site(i).abs() >= edge)
            .map(|i| s.p[i] * s.p[i] + s.q[i] * s.q[i])
            .sum::<f64>()
            .sqrt();
        if cfg.mu > 0.0 && far > 1e-6 * cfg.mu {
            return Err(Error::BoundaryReached(format!("𝐥² mass {far:.3e} near the lattice edge at t = {t:.1}")));
        }
        rec.times.push(t);
        rec.actions.push(m.action);
        rec.phases.push(m.phase);
        rec.residual_l2.push(m.residual_l2);
        rec.energy.push(model.hamiltonian(s));
        prev = Some((t, m.residual));
        Ok(())
    })?;
    let probe = LatticeState::zeros(cfg.n, true);
    rec.residual_site_l2 = (0..len).map(|i| (probe.site(i), sums_p[i].max(sums_q[i]))).collect();
    Ok(rec)
}

/// Scaling of drift and distance norm across a `μ` sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSummary {
    pub mus: Vec<f64>,
    pub drifts: Vec<f64>,
    /// First recorded norm of each run.
    pub norms: Vec<f64>,
    pub drift_slope: f64,
    pub norm_slope: f64,
}

/// Runs the same experiment at `μ·factor` for each factor, concurrently.
pub fn run_mu_sweep(cfg: &ExperimentConfig, setup: &StabilitySetup, factors: &[f64]) -> Result<Vec<StabilityRecord>> {
    factors
        .par_iter()
        .map(|f| {
            let c = ExperimentConfig {
                mu: cfg.mu * f,
                ..cfg.clone()
            };
            run_stability_with(&c, setup)
        })
        .collect()
}

/// Log-log slopes of the drift and the first norm against `μ`.
pub fn scaling_summary(records: &[StabilityRecord], norms: &[RecordedNorm], residual_s: f64) -> Result<ScalingSummary> {
    if records.len() < 2 || norms.is_empty() {
        return Err(Error::InvalidInput("scaling needs two runs and one norm".into()));
    }
    let mut mus = Vec::new();
    let mut drifts = Vec::new();
    let mut nvals = Vec::new();
    for r in records {
        let s = r.summarize(norms, residual_s)?;
        mus.push(r.mu);
        drifts.push(s.drift);
        nvals.push(s.spacetime[0].value);
    }
    Ok(ScalingSummary {
        drift_slope: fit_loglog(&mus, &drifts)?.slope,
        norm_slope: fit_loglog(&mus, &nvals)?.slope,
        mus,
        drifts,
        norms: nvals,
    })
}

/// Files written by [`emit_report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub series: PathBuf,
    pub summary: PathBuf,
    pub plot: PathBuf,
}

const SERIES: [&str; 4] = ["action", "phase", "residual_l2", "energy"];

/// Long-format time series `t, observable, value`.
pub fn write_series<W: Write>(rec: &StabilityRecord, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "observable", "value"])?;
    for (i, t) in rec.times.iter().enumerate() {
        let fixed = [rec.actions[i], rec.phases[i], rec.residual_l2[i], rec.energy[i]];
        for (name, v) in SERIES.iter().zip(fixed) {
            w.write_record([format!("{t:.17e}"), name.to_string(), format!("{v:.17e}")])?;
        }
        for (label, d) in rec.norm_labels.iter().zip(&rec.distances) {
            w.write_record([format!("{t:.17e}"), format!("distance_{label}"), format!("{:.17e}", d[i])])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads what [`write_series`] wrote; `ε`, `μ` and the site masses are not
/// part of the series and come back as given / empty.
pub fn read_series<R: Read>(reader: R, eps: f64, mu: f64) -> Result<StabilityRecord> {
    let mut rd = csv::Reader::from_reader(reader);
    let mut rows: BTreeMap<u64, BTreeMap<String, f64>> = BTreeMap::new();
    let mut order: Vec<u64> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for row in rd.records() {
        let row = row?;
        let parse = |i: usize| -> Result<f64> {
            row.get(i)
                .ok_or_else(|| Error::InvalidInput("short CSV row".into()))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad number in series: {e}")))
        };
        let t = parse(0)?;
        let name = row.get(1).unwrap_or("").to_string();
        let key = t.to_bits();
        if !rows.contains_key(&key) {
            order.push(key);
        }
        if let Some(l) = name.strip_prefix("distance_") {
            if !labels.iter().any(|x| x == l) {
                labels.push(l.to_string());
            }
        }
        rows.entry(key).or_default().insert(name, parse(2)?);
    }
    let mut rec = StabilityRecord {
        eps,
        mu,
        distances: vec![Vec::new(); labels.len()],
        norm_labels: labels.clone(),
        ..Default::default()
    };
    for key in order {
        let r = &rows[&key];
        let get = |n: &str| r.get(n).copied().ok_or_else(|| Error::InvalidInput(format!("series row lacks '{n}'")));
        rec.times.push(f64::from_bits(key));
        rec.actions.push(get("action")?);
        rec.phases.push(get("phase")?);
        rec.residual_l2.push(get("residual_l2")?);
        rec.energy.push(get("energy")?);
        for (j, l) in labels.iter().enumerate() {
            rec.distances[j].push(get(&format!("distance_{l}"))?);
        }
    }
    Ok(rec)
}

/// `quantity, value` rows of the summary; header only for an empty record.
pub fn write_summary<W: Write>(rec: &StabilityRecord, cfg: &ExperimentConfig, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["quantity", "value"])?;
    if !rec.is_empty() {
        let s = rec.summarize(&cfg.norms, cfg.residual_s)?;
        let mut rows: Vec<(String, f64)> = vec![
            ("eps".into(), rec.eps),
            ("mu".into(), rec.mu),
            ("I_start".into(), s.i_start),
            ("I_end".into(), s.i_end),
            ("drift".into(), s.drift),
            ("drift_bound".into(), s.drift_bound),
            ("drift_pass".into(), f64::from(u8::from(s.drift <= s.drift_bound))),
            ("max_residual_over_mu".into(), s.max_residual_over_mu),
            ("residual_pass".into(), f64::from(u8::from(s.max_residual_over_mu <= 5.0))),
            ("energy_drift".into(), s.energy_drift),
            (format!("mixed_residual_s{}", cfg.residual_s), s.mixed_residual),
        ];
        for v in &s.spacetime {
            rows.push((format!("spacetime_{}", v.label), v.value));
            rows.push((format!("last_decade_{}", v.label), v.last_decade_increment));
        }
        for (tp, c) in &s.cauchy_tails {
            rows.push((format!("cauchy_T{tp}"), *c));
        }
        for (k, v) in rows {
            w.write_record([k, format!("{v:.17e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Wide table, one row per sample, for plotting.
pub fn write_plot<W: Write>(rec: &StabilityRecord, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string(), "eps_t".to_string()];
    header.extend(SERIES.iter().map(|s| s.to_string()));
    header.extend(rec.norm_labels.iter().map(|l| format!("distance_{l}")));
    w.write_record(&header)?;
    for i in 0..rec.times.len() {
        let mut row = vec![rec.times[i], rec.eps * rec.times[i], rec.actions[i], rec.phases[i], rec.residual_l2[i], rec.energy[i]];
        row.extend(rec.distances.iter().map(|d| d[i]));
        w.write_record(row.iter().map(|v| format!("{v:.10e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<prefix>_series.csv`, `<prefix>_summary.csv` and
/// `<prefix>_plot.csv` into `dir`.
pub fn emit_report(rec: &StabilityRecord, cfg: &ExperimentConfig, dir: &Path) -> Result<ReportFiles> {
    std::fs::create_dir_all(dir)?;
    let prefix = cfg.output.to_string_lossy().to_string();
    let files = ReportFiles {
        series: dir.join(format!("{prefix}_series.csv")),
        summary: dir.join(format!("{prefix}_summary.csv")),
        plot: dir.join(format!("{prefix}_plot.csv")),
    };
    write_series(rec, std::fs::File::create(&files.series)?)?;
    write_summary(rec, cfg, std::fs::File::create(&files.summary)?)?;
    write_plot(rec, std::fs::File::create(&files.plot)?)?;
    Ok(files)
}

/// `mu, drift, norm` rows plus the fitted slopes.
pub fn write_scaling<W: Write>(s: &ScalingSummary, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["mu", "drift", "norm"])?;
    for i in 0..s.mus.len() {
        w.write_record([format!("{:.17e}", s.mus[i]), format!("{:.17e}", s.drifts[i]), format!("{:.17e}", s.norms[i])])?;
    }
    w.write_record(["slope".to_string(), format!("{:.17e}", s.drift_slope), format!("{:.17e}", s.norm_slope)])?;
    w.flush()?;
    Ok(())
}
