//! Finite-order normalization of the chain Hamiltonian around the
//! one-site torus family: the central oscillator in action-angle variables,
//! the rest in complex coordinates, finitely many Lie-transform steps.

pub mod algebra;
pub mod cohomological;

use crate::error::{Error, Result};
use crate::lattice::LatticeState;
use crate::oscillator::ActionAngleChart;
use algebra::{lie_transform, p_site, poisson_bracket, product, q_site, Field, Graded, Monomial, SpectralGrid};
use cohomological::{back_substitution_residual, solve_cohomological};
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::io::Write;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalFormConfig {
    /// Polynomial truncation degree `D` in ξ.
    pub degree: usize,
    /// Fourier cutoff `M` in α.
    pub cutoff: usize,
    pub alpha_points: usize,
    pub action_nodes: usize,
    /// Transverse sites per side.
    pub sites: usize,
    pub action_range: (f64, f64),
    pub steps: usize,
    pub lie_order: usize,
    pub divisor_floor: f64,
    /// Largest tolerated Fourier mass dropped in one coefficient.
    pub truncation_threshold: f64,
    /// Quadrature nodes for the Fourier series of `q₀(I, α)`.
    pub q0_nodes: usize,
    pub q0_tail_tolerance: f64,
    pub r_i: f64,
    pub r_alpha: f64,
    /// Coefficients below this sup norm are discarded after each step.
    pub prune: f64,
}

impl Default for NormalFormConfig {
    fn default() -> Self {
        Self {
            degree: 4,
            cutoff: 32,
            alpha_points: 128,
            action_nodes: 16,
            sites: 8,
            action_range: (0.3, 0.5),
            steps: 2,
            lie_order: 6,
            divisor_floor: 1e-3,
            truncation_threshold: 1e-6,
            q0_nodes: 256,
            q0_tail_tolerance: 1e-10,
            r_i: 1.0,
            r_alpha: 1.0,
            prune: 1e-16,
        }
    }
}

impl NormalFormConfig {
    pub fn validate(&self) -> Result<()> {
        if self.degree < 2 {
            return Err(Error::InvalidInput(format!("truncation degree {} < 2", self.degree)));
        }
        if self.steps < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 normalization steps, got {}", self.steps)));
        }
        if self.sites < 1 || self.lie_order < 1 {
            return Err(Error::InvalidInput("sites and Lie order must be positive".into()));
        }
        if self.q0_nodes < 2 * self.cutoff + 2 {
            return Err(Error::InvalidInput(format!("{} quadrature nodes cannot resolve cutoff {}", self.q0_nodes, self.cutoff)));
        }
        Ok(())
    }

    /// `R_ξ = √ε`, falling back to 1 at zero coupling.
    pub fn r_xi(eps: f64) -> f64 {
        if eps > 0.0 {
            eps.sqrt()
        } else {
            1.0
        }
    }
}

/// The starting decomposition `H = H₀ + Z₂ + R₀⁽¹⁾ + R₀⁽⁰⁾`.
#[derive(Debug, Clone)]
pub struct InitialHamiltonian {
    pub eps: f64,
    pub grid: Arc<SpectralGrid>,
    /// `hs₀(I) + Σ z_k w_k`
    pub h0: Graded,
    pub z2: Graded,
    pub r1: Graded,
    pub r0: Graded,
    /// `hs₀` at the action nodes.
    pub hs0: Vec<f64>,
    pub q0: Field,
    pub p0: Field,
    /// Largest `ℓ²` Fourier tail of `q₀` beyond the cutoff over the action nodes.
    pub q0_tail: f64,
    pub p0_tail: f64,
}

impl InitialHamiltonian {
    pub fn total(&self) -> Graded {
        self.h0.plus(&self.z2).plus(&self.r1).plus(&self.r0)
    }
}

fn constant(grid: &SpectralGrid, v: f64) -> Field {
    vec![C64::new(v, 0.0); grid.len()]
}

fn harmonic_sum(grid: &Arc<SpectralGrid>, n: usize, d: usize) -> Graded {
    let mut g = Graded::zero(grid.clone(), n, d);
    for k in (-(n as i64)..=n as i64).filter(|&k| k != 0) {
        g.add_term(Monomial::z(n, k).times(&Monomial::w(n, k)), constant(grid, 1.0));
    }
    g
}

/// `(q₀, p₀)` on the grid with the Fourier tail beyond the cutoff.
fn central_coordinates(chart: &ActionAngleChart, grid: &SpectralGrid, cfg: &NormalFormConfig) -> Result<(Field, Field, [f64; 2])> {
    let nq = cfg.q0_nodes;
    let a = grid.alpha_points();
    let angles: Vec<f64> = (0..nq).map(|j| TAU * j as f64 / nq as f64).collect();
    let fft = FftPlanner::new().plan_fft_forward(nq);
    let (mut q0, mut p0) = (grid.zeros(), grid.zeros());
    let mut worst_tail = [0.0f64; 2];
    for (g, &action) in grid.i_nodes().iter().enumerate() {
        let pts = chart.circle(action, &angles)?;
        for (which, out) in [(0usize, &mut p0), (1, &mut q0)] {
            let mut buf: Vec<C64> = pts.iter().map(|pq| C64::new(if which == 0 { pq.0 } else { pq.1 }, 0.0)).collect();
            fft.process(&mut buf);
            buf.iter_mut().for_each(|v| *v /= nq as f64);
            let mut tail: f64 = 0.0;
            let mut modes = vec![C64::new(0.0, 0.0); a];
            for (j, v) in buf.iter().enumerate() {
                let n = if j <= nq / 2 { j as i64 } else { j as i64 - nq as i64 };
                if n.unsigned_abs() as usize > grid.cutoff() {
                    tail += v.norm_sqr();
                } else {
                    modes[n.rem_euclid(a as i64) as usize] = *v;
                }
            }
            worst_tail[which] = worst_tail[which].max(tail.sqrt());
            let row = grid.from_modes(&modes);
            // keep the real part: the series is real up to round-off
            for (j, v) in row.iter().enumerate() {
                out[g * a + j] = C64::new(v.re, 0.0);
            }
        }
    }
    Ok((q0, p0, worst_tail))
}

/// Builds the graded decomposition of the chain Hamiltonian on `2N + 1` sites
/// (Dirichlet closure) around the central torus family.
pub fn build_initial(chart: &ActionAngleChart, eps: f64, cfg: &NormalFormConfig) -> Result<InitialHamiltonian> {
    cfg.validate()?;
    let (lo, hi) = cfg.action_range;
    let (clo, chi) = chart.action_range();
    if lo < clo || hi > chi {
        return Err(Error::OutOfRange { value: if lo < clo { lo } else { hi }, lo: clo, hi: chi });
    }
    let grid = Arc::new(SpectralGrid::new(lo, hi, cfg.action_nodes, cfg.alpha_points, cfg.cutoff)?);
    let (n, d) = (cfg.sites, cfg.degree);
    let (q0, p0, [p0_tail, q0_tail]) = central_coordinates(chart, &grid, cfg)?;
    if q0_tail.max(p0_tail) > cfg.q0_tail_tolerance {
        return Err(Error::TruncationExceeded { mass: q0_tail.max(p0_tail), threshold: cfg.q0_tail_tolerance });
    }
    let hs0 = grid.i_nodes().iter().map(|&i| chart.h0_of_action(i)).collect::<Result<Vec<_>>>()?;
    let hs_field = grid.sample(|i, _| {
        let g = grid.i_nodes().iter().position(|&x| x == i).unwrap();
        C64::new(hs0[g], 0.0)
    });
    let mut h0 = Graded::scalar(grid.clone(), n, d, hs_field);
    h0.add_scaled(&harmonic_sum(&grid, n, d), C64::new(1.0, 0.0));

    let ni = n as i64;
    let q = |k: i64| q_site(&grid, n, d, k);
    let half = C64::new(0.5 * eps, 0.0);
    let mut z2 = Graded::zero(grid.clone(), n, d);
    if eps != 0.0 {
        for k in -ni - 1..=ni {
            let (a, b) = (k, k + 1);
            if a == 0 || b == 0 {
                continue;
            }
            let mut diff = Graded::zero(grid.clone(), n, d);
            if b.abs() <= ni {
                diff.add_scaled(&q(b), C64::new(1.0, 0.0));
            }
            if a.abs() <= ni {
                diff.add_scaled(&q(a), C64::new(-1.0, 0.0));
            }
            z2.add_scaled(&product(&diff, &diff), half);
        }
        for k in [-1, 1] {
            z2.add_scaled(&product(&q(k), &q(k)), half);
        }
    }
    for k in (-ni..=ni).filter(|&k| k != 0) {
        for &(m, a) in chart.potential().terms() {
            if m as usize > d {
                // a degree-m monomial with unit-size coefficients
                z2.dropped.degree = z2.dropped.degree.max(a.abs());
                continue;
            }
            let mut pow = q(k);
            for _ in 1..m {
                pow = product(&pow, &q(k));
            }
            z2.add_scaled(&pow, C64::new(a, 0.0));
        }
    }
    z2.prune(0.0);

    let q0g = Graded::scalar(grid.clone(), n, d, q0.clone());
    let mut r1 = Graded::zero(grid.clone(), n, d);
    let mut r0 = Graded::zero(grid.clone(), n, d);
    if eps != 0.0 {
        let neighbours = q(-1).plus(&q(1));
        r1 = product(&q0g, &neighbours).scaled(C64::new(-eps, 0.0));
        r0 = product(&q0g, &q0g).scaled(C64::new(eps, 0.0));
    }
    Ok(InitialHamiltonian { eps, grid, h0, z2, r1, r0, hs0, q0, p0, q0_tail, p0_tail })
}

/// One line of the normalization report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: usize,
    /// Vector-field norm of the non-normal part `R⁽⁰⁾ − ⟨R⁽⁰⁾⟩ + R⁽¹⁾`.
    pub residual_norm: f64,
    pub h_norm: f64,
    pub z_norm: f64,
    pub min_divisor: f64,
    pub back_substitution: f64,
    pub lie_remainder: f64,
    /// Conjugation-symmetry defect removed by projecting onto real functions.
    pub reality_defect: f64,
}

#[derive(Debug, Clone)]
pub struct NormalForm {
    pub eps: f64,
    pub config: NormalFormConfig,
    pub initial: InitialHamiltonian,
    /// `hs_r` at the action nodes.
    pub hs: Vec<f64>,
    /// The transformed Hamiltonian.
    pub hamiltonian: Graded,
    pub generators: Vec<Graded>,
    pub reports: Vec<StepReport>,
}

fn real_nodes(grid: &SpectralGrid, f: &Graded) -> Vec<f64> {
    let a = grid.alpha_points();
    match f.coefficient(&Monomial::one(f.sites())) {
        Some(c) => (0..grid.i_nodes().len()).map(|g| c[g * a].re).collect(),
        None => vec![0.0; grid.i_nodes().len()],
    }
}

fn node_field(grid: &SpectralGrid, v: &[f64]) -> Field {
    let a = grid.alpha_points();
    (0..grid.len()).map(|p| C64::new(v[p / a], 0.0)).collect()
}

impl NormalForm {
    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.initial.grid
    }

    /// `R⁽⁰⁾ = f⁽⁰⁾ − hs_r` of the current Hamiltonian.
    pub fn r0(&self) -> Graded {
        let mut f0 = self.hamiltonian.degree_part(0);
        f0.add_term(Monomial::one(self.config.sites), node_field(self.grid(), &self.hs).iter().map(|v| -v).collect());
        f0
    }

    pub fn r1(&self) -> Graded {
        self.hamiltonian.degree_part(1)
    }

    /// Non-normal part `R⁽⁰⁾ − ⟨R⁽⁰⁾⟩ + R⁽¹⁾`.
    pub fn residual(&self) -> Graded {
        let r0 = self.r0();
        r0.minus(&r0.mean()).plus(&self.r1())
    }

    /// `Z`: the part of degree ≥ 2 beyond `Σ z_k w_k`.
    pub fn z(&self) -> Graded {
        let n = self.config.sites;
        let mut z = self.hamiltonian.select(|m| m.degree() >= 2).minus(&harmonic_sum(self.grid(), n, self.config.degree));
        z.prune(0.0);
        z
    }

    fn norm(&self, f: &Graded) -> f64 {
        f.weighted_vector_field_norm(self.config.r_i, self.config.r_alpha, NormalFormConfig::r_xi(self.eps))
    }

    /// Frequencies `∂_I(hs_r + ⟨R_r⁽⁰⁾⟩)` at the action nodes.
    pub fn frequencies(&self) -> Vec<f64> {
        let mean = real_nodes(self.grid(), &self.r0().mean());
        let total: Vec<f64> = self.hs.iter().zip(&mean).map(|(a, b)| a + b).collect();
        self.grid().d_action_nodes(&total)
    }

    /// Action whose normalized frequency equals `omega` (bisection on the
    /// interpolated frequency curve).
    pub fn action_for_frequency(&self, omega: f64) -> Result<f64> {
        let grid = self.grid();
        let w: Vec<C64> = self.frequencies().iter().map(|&x| C64::new(x, 0.0)).collect();
        let f = |i: f64| grid.interpolate_action(&w, i).re - omega;
        let (mut lo, mut hi) = grid.action_range();
        let (flo, fhi) = (f(lo), f(hi));
        if flo * fhi > 0.0 {
            return Err(Error::OutOfRange { value: omega, lo: flo.min(fhi) + omega, hi: flo.max(fhi) + omega });
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (flo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn write_report<W: Write>(&self, writer: W) -> Result<()> {
        write_report(&self.reports, writer)
    }
}

pub fn write_report<W: Write>(reports: &[StepReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["step", "residual_norm", "h_norm", "z_norm", "min_divisor"])?;
    for r in reports {
        w.write_record([
            r.step.to_string(),
            format!("{:.12e}", r.residual_norm),
            format!("{:.12e}", r.h_norm),
            format!("{:.12e}", r.z_norm),
            format!("{:.12e}", r.min_divisor),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report<R: std::io::Read>(reader: R) -> Result<Vec<StepReport>> {
    let mut rd = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::InvalidInput(format!("bad report field {i} in {rec:?}")))
        };
        out.push(StepReport {
            step: num(0)? as usize,
            residual_norm: num(1)?,
            h_norm: num(2)?,
            z_norm: num(3)?,
            min_divisor: num(4)?,
            back_substitution: f64::NAN,
            lie_remainder: f64::NAN,
            reality_defect: f64::NAN,
        });
    }
    Ok(out)
}

/// Runs `cfg.steps` normalization steps. Step 1 removes the ξ-linear part,
/// step 2 the α-dependence at ξ = 0, later steps both.
pub fn normalize(initial: InitialHamiltonian, cfg: &NormalFormConfig) -> Result<NormalForm> {
    cfg.validate()?;
    normalize_until(initial, cfg, cfg.steps)
}

/// As [`normalize`] but stopping after `steps` steps (any number ≥ 1).
pub fn normalize_until(initial: InitialHamiltonian, cfg: &NormalFormConfig, steps: usize) -> Result<NormalForm> {
    if steps == 0 {
        return Err(Error::InvalidInput("at least one normalization step".into()));
    }
    let grid = initial.grid.clone();
    let mut nf = NormalForm {
        eps: initial.eps,
        config: cfg.clone(),
        hs: initial.hs0.clone(),
        hamiltonian: initial.total(),
        generators: Vec::new(),
        reports: Vec::new(),
        initial,
    };
    let z_norm = nf.norm(&nf.z());
    nf.reports.push(StepReport {
        step: 0,
        residual_norm: nf.norm(&nf.residual()),
        h_norm: 0.0,
        z_norm,
        min_divisor: f64::NAN,
        back_substitution: 0.0,
        lie_remainder: 0.0,
        reality_defect: 0.0,
    });
    let r_xi = NormalFormConfig::r_xi(nf.eps);
    for step in 1..=steps {
        let omega = grid.d_action_nodes(&nf.hs);
        let r0 = nf.r0();
        let mean = r0.mean();
        let mut psi = nf.hamiltonian.like();
        if step != 1 {
            psi.add_scaled(&r0.minus(&mean), C64::new(1.0, 0.0));
        }
        if step != 2 {
            psi.add_scaled(&nf.r1(), C64::new(1.0, 0.0));
        }
        psi.prune(0.0);
        let sol = solve_cohomological(&omega, &psi, cfg.divisor_floor)?;
        let back = back_substitution_residual(&omega, &sol.chi, &psi);
        let (mut h, rem) = lie_transform(&nf.hamiltonian, &sol.chi, cfg.lie_order, r_xi);
        if h.dropped.fourier > cfg.truncation_threshold {
            return Err(Error::TruncationExceeded { mass: h.dropped.fourier, threshold: cfg.truncation_threshold });
        }
        h.prune(cfg.prune);
        let reality_defect = h.symmetrize();
        let h_step = if step >= 2 { real_nodes(&grid, &mean) } else { vec![0.0; nf.hs.len()] };
        nf.hs.iter_mut().zip(&h_step).for_each(|(a, b)| *a += b);
        nf.hamiltonian = h;
        nf.generators.push(sol.chi);
        let hg = Graded::scalar(grid.clone(), cfg.sites, cfg.degree, node_field(&grid, &h_step));
        let z_norm = nf.norm(&nf.z());
        nf.reports.push(StepReport {
            step,
            residual_norm: nf.norm(&nf.residual()),
            h_norm: nf.norm(&hg),
            z_norm,
            min_divisor: if sol.min_divisor.is_finite() { sol.min_divisor } else { f64::NAN },
            back_substitution: back,
            lie_remainder: rem,
            reality_defect,
        });
    }
    Ok(nf)
}

/// Sizes of the normalized vector field at ξ = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldDefect {
    /// `max |ξ̇|` at ξ = 0 (unscaled).
    pub xi: f64,
    /// `max |İ|` at ξ = 0.
    pub action: f64,
    /// `max |∂_ξ İ|` at ξ = 0.
    pub action_linear: f64,
}

/// Evaluates how far `ξ = 0` is from invariant under the transformed flow.
pub fn invariant_manifold_check(nf: &NormalForm) -> ManifoldDefect {
    let grid = nf.grid();
    let sup = |c: &[C64]| c.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let mut xi: f64 = 0.0;
    let mut action_linear: f64 = 0.0;
    for (_, c) in nf.hamiltonian.degree_part(1).terms() {
        xi = xi.max(sup(c));
        action_linear = action_linear.max(sup(&grid.d_alpha(c)));
    }
    let action = nf.hamiltonian.degree_part(0).terms().map(|(_, c)| sup(&grid.d_alpha(c))).fold(0.0, f64::max);
    ManifoldDefect { xi, action, action_linear }
}

/// Per generator, the largest `(I, α, ξ)` components of its vector field on
/// the scaled polydisc: the size of the coordinate change.
pub fn transformation_size(nf: &NormalForm) -> (f64, f64, f64) {
    let r = NormalFormConfig::r_xi(nf.eps);
    let grid = nf.grid();
    let len = grid.len();
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for chi in &nf.generators {
        let (mut si, mut sa, mut sx) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
        for (m, c) in chi.terms() {
            let d = m.degree() as i32;
            let ca = grid.d_alpha(c);
            let ci = grid.d_action(c);
            for p in 0..len {
                si[p] += ca[p].norm() * r.powi(d);
                sa[p] += ci[p].norm() * r.powi(d);
                if d >= 1 {
                    sx[p] += d as f64 * c[p].norm() * r.powi(d - 1);
                }
            }
        }
        let mx = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
        worst = (worst.0.max(mx(&si)), worst.1.max(mx(&sa)), worst.2.max(mx(&sx)));
    }
    worst
}

/// Pushes a function of the original coordinates through every generator:
/// `f ∘ Φ_{χ₁} ∘ … ∘ Φ_{χ_r}`.
pub fn pull_back(nf: &NormalForm, f: &Graded) -> Graded {
    let r_xi = NormalFormConfig::r_xi(nf.eps);
    nf.generators.iter().fold(f.clone(), |acc, chi| lie_transform(&acc, chi, nf.config.lie_order, r_xi).0)
}

/// Image of the point `(I, α, ξ = 0)` in the original lattice coordinates.
pub fn reconstruct_point(nf: &NormalForm, action: f64, alpha: f64) -> Result<LatticeState> {
    let (lo, hi) = nf.grid().action_range();
    if !(lo..=hi).contains(&action) {
        return Err(Error::OutOfRange { value: action, lo, hi });
    }
    let grid = nf.grid();
    let (n, d) = (nf.config.sites, nf.config.degree);
    let zero_xi = |f: &Graded| -> f64 {
        let g = pull_back(nf, f);
        g.coefficient(&Monomial::one(n)).map(|c| grid.eval(c, action, alpha).re).unwrap_or(0.0)
    };
    let q0 = zero_xi(&Graded::scalar(grid.clone(), n, d, nf.initial.q0.clone()));
    let p0 = zero_xi(&Graded::scalar(grid.clone(), n, d, nf.initial.p0.clone()));
    let mut state = LatticeState::zeros(n, true);
    state.set(0, p0, q0);
    for k in (-(n as i64)..=n as i64).filter(|&k| k != 0) {
        let q = zero_xi(&q_site(grid, n, d, k));
        let p = zero_xi(&p_site(grid, n, d, k));
        state.set(k, p, q);
    }
    Ok(state)
}

/// The normalized torus with frequency `omega`, started at `α = 0`, in the
/// original coordinates. Returns the action used and the state.
pub fn reconstruct_breather_from_nf(nf: &NormalForm, omega: f64) -> Result<(f64, LatticeState)> {
    let action = nf.action_for_frequency(omega)?;
    Ok((action, reconstruct_point(nf, action, 0.0)?))
}

/// Sanity check used in tests: `{q_k, p_k}` transported by the generators.
pub fn transported_bracket(nf: &NormalForm, k: i64) -> Graded {
    let (n, d) = (nf.config.sites, nf.config.degree);
    let q = pull_back(nf, &q_site(nf.grid(), n, d, k));
    let p = pull_back(nf, &p_site(nf.grid(), n, d, k));
    poisson_bracket(&p, &q)
}

/// `ξ` for a real state: `z_k = (q_k + i p_k)/√2` indexed by slot.
pub fn complex_coordinates(state: &LatticeState, n: usize) -> (Vec<C64>, Vec<C64>) {
    let mut z = vec![C64::new(0.0, 0.0); 2 * n];
    for s in 0..2 * n {
        let k = Monomial::site(n, s);
        z[s] = C64::new(state.q_at(k), state.p_at(k)) * FRAC_1_SQRT_2;
    }
    let w = z.iter().map(|v| v.conj()).collect();
    (z, w)
}
