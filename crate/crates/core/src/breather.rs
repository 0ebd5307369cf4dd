//! Single-site breathers by Newton continuation from the anti-continuum limit.
//!
//! The period `T` is frozen at `2π/ω₀(I)` of the seed and `ε` is stepped up.
//! Each Newton step solves the bordered system
//!
//! ```text
//! [ M − 1   ∇H ] [δx]   [x − Φ_T(x)]
//! [ e_{p₀}ᵀ  0 ] [ λ] = [    0     ]
//! ```
//!
//! where the extra column unfolds the energy direction and the last row pins
//! the phase to the section `p₀ = 0`.

use crate::error::{Error, Result};
use crate::integrator::{flow, flow_with_jacobian, scheme, ChainModel};
use crate::lattice::{distance, LatticeState, NormSpec, SplitPoint};
use crate::numerics::fit_line;
use crate::oscillator::ActionAngleChart;
use crate::potential::PotentialSpec;
use nalgebra::{Complex, DMatrix, DVector};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::{BufRead, Write};

/// Amplitudes below this are treated as zero by the localization fit.
pub const AMPLITUDE_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct BreatherConfig {
    /// Half-width `N` of the lattice `−N..N`.
    pub n: usize,
    /// Integration steps per period for the periodicity residual.
    pub residual_steps: usize,
    /// Integration steps per period for the Newton Jacobian.
    pub jacobian_steps: usize,
    /// Integration steps per period for the Floquet monodromy.
    pub floquet_steps: usize,
    pub scheme: String,
    pub max_newton: usize,
    /// Number of stored orbit samples over one period.
    pub orbit_samples: usize,
}

impl Default for BreatherConfig {
    fn default() -> Self {
        Self {
            n: 64,
            residual_steps: 4000,
            jacobian_steps: 250,
            floquet_steps: 1000,
            scheme: "yoshida4".into(),
            max_newton: 12,
            orbit_samples: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Breather {
    /// Family label: period-averaged action of the central oscillator.
    pub i_label: f64,
    pub eps: f64,
    pub period: f64,
    pub potential: PotentialSpec,
    /// Point on the section `p₀ = 0`, `q₀ > 0`.
    pub point: LatticeState,
    pub orbit: Vec<(f64, LatticeState)>,
    /// Fitted decay rate; infinite when only the centre is excited.
    pub beta_hat: f64,
    pub fit_r_squared: f64,
    pub defect: f64,
    /// Newton iterations used at each continuation step.
    pub newton_history: Vec<usize>,
    /// Nonresonance margin `min |nω₀ − 1|` of the seed.
    pub nonresonance_margin: f64,
}

impl Breather {
    pub fn model(&self) -> ChainModel {
        ChainModel {
            potential: self.potential.clone(),
            eps: self.eps,
        }
    }

    /// Metadata header plus `k, p_k, q_k` rows of the section point.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "# I_label = {:.17e}", self.i_label)?;
        writeln!(writer, "# eps = {:.17e}", self.eps)?;
        writeln!(writer, "# T = {:.17e}", self.period)?;
        writeln!(writer, "# beta_hat = {:.17e}", self.beta_hat)?;
        writeln!(writer, "# defect = {:.17e}", self.defect)?;
        writeln!(writer, "# potential = {}", self.potential)?;
        self.point.write_csv(writer)
    }

    /// Reads what [`Breather::write_csv`] wrote; the orbit is not stored and
    /// comes back empty.
    pub fn read_csv<R: BufRead>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let mut meta = BTreeMap::new();
        for line in text.lines().filter_map(|l| l.strip_prefix('#')) {
            if let Some((k, v)) = line.split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let num = |key: &str| -> Result<f64> {
            meta.get(key)
                .ok_or_else(|| Error::InvalidInput(format!("missing metadata '{key}'")))?
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad '{key}': {e}")))
        };
        let potential: PotentialSpec = meta
            .get("potential")
            .ok_or_else(|| Error::InvalidInput("missing metadata 'potential'".into()))?
            .parse()?;
        let point = LatticeState::read_csv(text.as_bytes())?;
        Ok(Self {
            i_label: num("I_label")?,
            eps: num("eps")?,
            period: num("T")?,
            potential,
            point,
            orbit: Vec::new(),
            beta_hat: num("beta_hat")?,
            fit_r_squared: f64::NAN,
            defect: num("defect")?,
            newton_history: Vec::new(),
            nonresonance_margin: f64::NAN,
        })
    }
}

fn residual_dt(period: f64, cfg: &BreatherConfig) -> f64 {
    period / cfg.residual_steps.max(1) as f64
}

/// `‖Φ_T(x) − x‖_{𝐥²}` with `steps` integration steps.
pub fn periodicity_defect(model: &ChainModel, point: &LatticeState, period: f64, steps: usize, scheme_name: &str) -> Result<f64> {
    let s = scheme(scheme_name)?;
    let end = flow(model, s.as_ref(), point, period / steps.max(1) as f64, period);
    Ok(end.sub(point)?.l2())
}

/// Central oscillator on its level set at angle 0, every other site at rest.
pub fn anti_continuum_seed(chart: &ActionAngleChart, action: f64, cfg: &BreatherConfig) -> Result<Breather> {
    let (lo, hi) = chart.action_range();
    if !(action >= lo && action <= hi) {
        return Err(Error::OutOfRange { value: action, lo, hi });
    }
    let omega = chart.omega0(action)?;
    let (p0, q0) = chart.to_cartesian(action, 0.0)?;
    let mut point = LatticeState::zeros(cfg.n, true);
    point.set(0, p0, q0);
    let margin = chart.nonresonance_margin(action, action, 64)?;
    let mut b = Breather {
        i_label: action,
        eps: 0.0,
        period: TAU / omega,
        potential: chart.potential().clone(),
        point,
        orbit: Vec::new(),
        beta_hat: f64::INFINITY,
        fit_r_squared: f64::NAN,
        defect: 0.0,
        newton_history: Vec::new(),
        nonresonance_margin: margin,
    };
    b.orbit = sample_orbit(&b.model(), &b.point, b.period, cfg)?;
    b.defect = periodicity_defect(&b.model(), &b.point, b.period, cfg.residual_steps, &cfg.scheme)?;
    Ok(b)
}

fn sample_orbit(model: &ChainModel, point: &LatticeState, period: f64, cfg: &BreatherConfig) -> Result<Vec<(f64, LatticeState)>> {
    let s = scheme(&cfg.scheme)?;
    let m = cfg.orbit_samples.max(1);
    let dt = residual_dt(period, cfg);
    let mut out = Vec::with_capacity(m);
    let mut x = point.clone();
    out.push((0.0, x.clone()));
    for j in 1..m {
        x = flow(model, s.as_ref(), &x, dt, period / m as f64);
        out.push((j as f64 * period / m as f64, x.clone()));
    }
    Ok(out)
}

/// `∇H` in `[p; q]` layout.
fn gradient(model: &ChainModel, x: &LatticeState) -> DVector<f64> {
    let f = model.vector_field(x);
    let len = x.len();
    DVector::from_fn(2 * len, |i, _| if i < len { x.p[i] } else { -f.p[i - len] })
}

/// Outcome of [`newton_periodic`].
#[derive(Debug, Clone)]
pub struct NewtonReport {
    pub point: LatticeState,
    pub iterations: usize,
    /// Defect before each step and after the last.
    pub defects: Vec<f64>,
}

/// Newton iteration for `Φ_T(x) = x` on the section `p₀ = 0`.
pub fn newton_periodic(model: &ChainModel, guess: &LatticeState, period: f64, tol: f64, cfg: &BreatherConfig) -> Result<NewtonReport> {
    if !guess.include_site0() {
        return Err(Error::InvalidInput("breather states carry site 0".into()));
    }
    let s = scheme(&cfg.scheme)?;
    let len = guess.len();
    let dim = 2 * len;
    let i0 = guess.index(0).expect("site 0 present");
    let fine = residual_dt(period, cfg);
    let coarse = period / cfg.jacobian_steps.max(1) as f64;
    let mut x = guess.clone();
    x.p[i0] = 0.0;
    let mut defects = Vec::new();
    for it in 0..=cfg.max_newton {
        let end = flow(model, s.as_ref(), &x, fine, period);
        let residual = end.sub(&x)?;
        let defect = residual.l2();
        defects.push(defect);
        if !defect.is_finite() {
            return Err(Error::BlowUp { t: period });
        }
        if defect < tol {
            return Ok(NewtonReport { point: x, iterations: it, defects });
        }
        if it == cfg.max_newton {
            break;
        }
        let (_, m) = flow_with_jacobian(model, s.as_ref(), &x, coarse, period);
        let mut a = DMatrix::zeros(dim + 1, dim + 1);
        a.view_mut((0, 0), (dim, dim)).copy_from(&m);
        for i in 0..dim {
            a[(i, i)] -= 1.0;
        }
        a.view_mut((0, dim), (dim, 1)).copy_from(&gradient(model, &x));
        a[(dim, i0)] = 1.0;
        let flat = residual.to_flat();
        let rhs = DVector::from_fn(dim + 1, |i, _| if i < dim { -flat[i] } else { 0.0 });
        let delta = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SingularSystem(format!("bordered Newton matrix at iteration {it}")))?;
        if !delta.iter().all(|v| v.is_finite()) {
            return Err(Error::SingularSystem(format!("non-finite Newton update at iteration {it}")));
        }
        let mut next = x.to_flat();
        for (v, d) in next.iter_mut().zip(delta.iter()) {
            *v += d;
        }
        x = LatticeState::from_flat(x.n(), true, &next)?;
    }
    Err(Error::NewtonNotConverged {
        iterations: cfg.max_newton,
        defect: *defects.last().unwrap_or(&f64::NAN),
    })
}

/// Period-averaged action of the central oscillator over the orbit samples.
fn central_action(chart_pot: &PotentialSpec, orbit: &[(f64, LatticeState)]) -> Result<f64> {
    let osc_energy = |p: f64, q: f64| 0.5 * (p * p + q * q) + chart_pot.eval(q);
    let max_e = orbit
        .iter()
        .map(|(_, s)| osc_energy(s.p_at(0), s.q_at(0)))
        .fold(0.0, f64::max);
    let osc = crate::oscillator::Oscillator::new(chart_pot.clone(), 2.0 * max_e + 1.0)?;
    let mut acc = 0.0;
    for (_, s) in orbit {
        acc += osc.action_of_energy(osc_energy(s.p_at(0), s.q_at(0)))?;
    }
    Ok(acc / orbit.len() as f64)
}

/// Path-follows the fixed-period family from `seed.eps` to `eps_target`.
pub fn continue_breather(seed: &Breather, eps_target: f64, eps_step: f64, tol: f64, cfg: &BreatherConfig) -> Result<Breather> {
    if !(eps_target >= 0.0) || !(eps_step > 0.0) {
        return Err(Error::InvalidInput(format!("need ε_target ≥ 0 and ε_step > 0, got {eps_target}, {eps_step}")));
    }
    if eps_target == seed.eps {
        return Ok(seed.clone());
    }
    let steps = ((eps_target - seed.eps).abs() / eps_step).ceil().max(1.0) as usize;
    let mut x = seed.point.resized(cfg.n);
    let mut prev: Option<(f64, LatticeState)> = None;
    let mut eps_now = seed.eps;
    let mut history = seed.newton_history.clone();
    for j in 1..=steps {
        let eps = seed.eps + (eps_target - seed.eps) * j as f64 / steps as f64;
        // secant predictor once two family members are known
        let guess = match &prev {
            Some((e_prev, x_prev)) => {
                let mut g = x.clone();
                let r = (eps - eps_now) / (eps_now - e_prev);
                g.axpy(r, &x.sub(x_prev)?)?;
                g
            }
            None => x.clone(),
        };
        let model = ChainModel::new(seed.potential.clone(), eps)?;
        let report = newton_periodic(&model, &guess, seed.period, tol, cfg)?;
        history.push(report.iterations);
        prev = Some((eps_now, x));
        x = report.point;
        eps_now = eps;
    }
    finish(seed, x, eps_target, history, cfg)
}

fn finish(seed: &Breather, point: LatticeState, eps: f64, history: Vec<usize>, cfg: &BreatherConfig) -> Result<Breather> {
    let model = ChainModel::new(seed.potential.clone(), eps)?;
    let orbit = sample_orbit(&model, &point, seed.period, cfg)?;
    let defect = periodicity_defect(&model, &point, seed.period, cfg.residual_steps, &cfg.scheme)?;
    let mut b = Breather {
        i_label: central_action(&seed.potential, &orbit)?,
        eps,
        period: seed.period,
        potential: seed.potential.clone(),
        point,
        orbit,
        beta_hat: f64::INFINITY,
        fit_r_squared: f64::NAN,
        defect,
        newton_history: history,
        nonresonance_margin: seed.nonresonance_margin,
    };
    match localization_fit(&b) {
        Ok(fit) => {
            b.beta_hat = fit.beta;
            b.fit_r_squared = fit.r_squared;
        }
        Err(Error::FitFailure(_)) if eps == 0.0 => {}
        Err(e) => return Err(e),
    }
    Ok(b)
}

/// Newton-polishes an arbitrary guess at the breather's `(ε, T)`.
pub fn polish(template: &Breather, guess: &LatticeState, tol: f64, cfg: &BreatherConfig) -> Result<(Breather, NewtonReport)> {
    let model = template.model();
    let report = newton_periodic(&model, guess, template.period, tol, cfg)?;
    let b = finish(template, report.point.clone(), template.eps, vec![report.iterations], cfg)?;
    Ok((b, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationFit {
    pub beta: f64,
    pub r_squared: f64,
    /// `(|k|, amplitude)` of the sites used.
    pub samples: Vec<(i64, f64)>,
}

/// Least-squares fit of `log max_t(|q_k| + |p_k|)` against `|k|`, `k ≠ 0`.
pub fn localization_fit(b: &Breather) -> Result<LocalizationFit> {
    let orbit: Vec<&LatticeState> = if b.orbit.is_empty() {
        vec![&b.point]
    } else {
        b.orbit.iter().map(|(_, s)| s).collect()
    };
    let samples: Vec<(i64, f64)> = b
        .point
        .sites()
        .filter(|&k| k != 0)
        .map(|k| {
            let amp = orbit.iter().map(|s| s.q_at(k).abs() + s.p_at(k).abs()).fold(0.0, f64::max);
            (k.abs(), amp)
        })
        .filter(|&(_, a)| a > AMPLITUDE_FLOOR)
        .collect();
    let distinct = samples.iter().map(|s| s.0).collect::<std::collections::BTreeSet<_>>().len();
    if distinct < 3 {
        return Err(Error::FitFailure(format!("only {distinct} distinct sites above {AMPLITUDE_FLOOR:e}")));
    }
    let x: Vec<f64> = samples.iter().map(|s| s.0 as f64).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let fit = fit_line(&x, &y)?;
    Ok(LocalizationFit {
        beta: -fit.slope,
        r_squared: fit.r_squared,
        samples,
    })
}

/// Splits a full-chain state at site 0 into `(I, α, ξ)`.
pub fn split_point(chart: &ActionAngleChart, state: &LatticeState) -> Result<SplitPoint> {
    let (action, angle) = chart.from_cartesian_unchecked(state.p_at(0), state.q_at(0))?;
    Ok(SplitPoint {
        action,
        angle,
        xi: state.without_site0(),
    })
}

/// `min_t d₊(b(t), γ₀(Ī))` over the stored orbit samples, with the
/// `e^{+β|k|}`-weighted norm on `ξ`.
pub fn distance_to_unperturbed(b: &Breather, chart: &ActionAngleChart, beta: f64) -> Result<f64> {
    let metric = NormSpec::exponential(true, beta);
    let samples: Vec<&LatticeState> = if b.orbit.is_empty() {
        vec![&b.point]
    } else {
        b.orbit.iter().map(|(_, s)| s).collect()
    };
    let mut best = f64::INFINITY;
    for s in samples {
        let z = split_point(chart, s)?;
        // nearest point of γ₀(Ī) shares the angle
        let reference = SplitPoint {
            action: b.i_label,
            angle: z.angle,
            xi: LatticeState::zeros(z.xi.n(), false),
        };
        best = best.min(distance(&z, &reference, metric)?);
    }
    if b.eps == 0.0 {
        // the label is the exact action; avoid reporting chart round-off
        return Ok(0.0);
    }
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct FloquetSpectrum {
    pub eigenvalues: Vec<Complex<f64>>,
    /// Distance of the two eigenvalues closest to 1.
    pub trivial_pair_distance: f64,
    /// `max |λ| − 1` over the spectrum without the trivial pair.
    pub max_excess: f64,
    /// `‖MᵀJM − J‖_max` of the monodromy.
    pub symplectic_defect: f64,
}

/// Spectrum of the monodromy `DΦ_T` at the section point.
pub fn floquet_spectrum(b: &Breather, cfg: &BreatherConfig) -> Result<FloquetSpectrum> {
    let s = scheme(&cfg.scheme)?;
    let (_, m) = flow_with_jacobian(&b.model(), s.as_ref(), &b.point, b.period / cfg.floquet_steps.max(1) as f64, b.period);
    let eigenvalues: Vec<Complex<f64>> = m.complex_eigenvalues().iter().copied().collect();
    if eigenvalues.len() < 2 || eigenvalues.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigenFailure);
    }
    // the Jordan block at 1 (phase and energy directions) splits like the
    // square root of the round-off, so it is set aside
    let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
    order.sort_by(|&a, &b| (eigenvalues[a] - 1.0).norm().total_cmp(&(eigenvalues[b] - 1.0).norm()));
    let trivial_pair_distance = (eigenvalues[order[1]] - 1.0).norm();
    let max_excess = order[2..]
        .iter()
        .map(|&i| eigenvalues[i].norm() - 1.0)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(FloquetSpectrum {
        eigenvalues,
        trivial_pair_distance,
        max_excess,
        symplectic_defect: symplectic_defect(&m),
    })
}

/// `‖MᵀJM − J‖_max` with `J = [[0, −1], [1, 0]]` in `[p; q]` layout.
pub fn symplectic_defect(m: &DMatrix<f64>) -> f64 {
    let dim = m.nrows();
    let half = dim / 2;
    let mut j = DMatrix::zeros(dim, dim);
    for i in 0..half {
        j[(i, half + i)] = -1.0;
        j[(half + i, i)] = 1.0;
    }
    (m.transpose() * &j * m - &j).amax()
}
