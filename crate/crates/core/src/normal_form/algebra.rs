//! Graded functions of `(I, α, z, w)`: polynomials in the transverse complex
//! coordinates whose coefficients are sampled on a Chebyshev grid in `I`
//! times a uniform grid in `α`, band-limited to `|n| ≤ M`.
//!
//! Conventions: `z_k = (q_k + i p_k)/√2`, `w_k = (q_k − i p_k)/√2`, and
//! `{f, g} = f_I g_α − f_α g_I + i Σ_k (f_{z_k} g_{w_k} − f_{w_k} g_{z_k})`,
//! so that `ẋ = {H, x}` is the lattice flow and `{I, α} = 1`.

use crate::error::{Error, Result};
use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Coefficient samples, row-major `[g · A + j]` over `(I_g, α_j)`.
pub type Field = Vec<C64>;

/// Chebyshev–Lobatto nodes in `I` and a uniform periodic grid in `α`.
pub struct SpectralGrid {
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
    diff: Vec<f64>,
    bary: Vec<f64>,
    a: usize,
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("range", &(self.lo, self.hi))
            .field("i_nodes", &self.nodes.len())
            .field("alpha_points", &self.a)
            .field("cutoff", &self.m)
            .finish()
    }
}

impl SpectralGrid {
    /// `g` nodes on `[lo, hi]`, `a` angles, Fourier cutoff `m`. Products of
    /// two band-`m` fields must not alias into the band, so `a > 3m`.
    pub fn new(lo: f64, hi: f64, g: usize, a: usize, m: usize) -> Result<Self> {
        if !(lo < hi) || g < 2 {
            return Err(Error::InvalidInput(format!("bad action grid [{lo}, {hi}] with {g} nodes")));
        }
        if a <= 3 * m {
            return Err(Error::InvalidInput(format!("{a} angles cannot hold products of band {m} without aliasing")));
        }
        let nn = g - 1;
        let x: Vec<f64> = (0..g).map(|j| (PI * j as f64 / nn as f64).cos()).collect();
        let c = |j: usize| if j == 0 || j == nn { 2.0 } else { 1.0 };
        let sign = |j: usize| if j % 2 == 0 { 1.0 } else { -1.0 };
        let mut diff = vec![0.0; g * g];
        for i in 0..g {
            for j in 0..g {
                if i != j {
                    diff[i * g + j] = c(i) / c(j) * sign(i + j) / (x[i] - x[j]);
                }
            }
        }
        // negative-sum trick for the diagonal
        for i in 0..g {
            let s: f64 = (0..g).filter(|&j| j != i).map(|j| diff[i * g + j]).sum();
            diff[i * g + i] = -s;
        }
        let half = 0.5 * (hi - lo);
        for v in &mut diff {
            *v /= half;
        }
        let nodes = x.iter().map(|&t| 0.5 * (lo + hi) + half * t).collect();
        let bary = (0..g).map(|j| sign(j) / c(j)).collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            lo,
            hi,
            nodes,
            diff,
            bary,
            a,
            m,
            fwd: planner.plan_fft_forward(a),
            inv: planner.plan_fft_inverse(a),
        })
    }

    pub fn action_range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn i_nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn alpha_points(&self) -> usize {
        self.a
    }

    pub fn cutoff(&self) -> usize {
        self.m
    }

    pub fn alpha(&self, j: usize) -> f64 {
        TAU * j as f64 / self.a as f64
    }

    pub fn len(&self) -> usize {
        self.nodes.len() * self.a
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fourier index of FFT bin `j`.
    pub fn mode(&self, j: usize) -> i64 {
        if j <= self.a / 2 {
            j as i64
        } else {
            j as i64 - self.a as i64
        }
    }

    pub fn zeros(&self) -> Field {
        vec![ZERO; self.len()]
    }

    /// Samples `f(I, α)` on the grid.
    pub fn sample(&self, f: impl Fn(f64, f64) -> C64) -> Field {
        let mut out = self.zeros();
        for (g, &x) in self.nodes.iter().enumerate() {
            for j in 0..self.a {
                out[g * self.a + j] = f(x, self.alpha(j));
            }
        }
        out
    }

    /// Per-row Fourier coefficients `ĉ_n` (bin layout, normalized by `1/A`).
    pub fn to_modes(&self, c: &[C64]) -> Field {
        let mut out = c.to_vec();
        for row in out.chunks_mut(self.a) {
            self.fwd.process(row);
        }
        let s = 1.0 / self.a as f64;
        out.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn from_modes(&self, modes: &[C64]) -> Field {
        let mut out = modes.to_vec();
        for row in out.chunks_mut(self.a) {
            self.inv.process(row);
        }
        out
    }

    /// Zeroes modes above the cutoff; returns the largest per-row `ℓ¹` mass removed.
    pub fn filter(&self, c: &mut Field) -> f64 {
        let mut modes = self.to_modes(c);
        let mut dropped: f64 = 0.0;
        for row in modes.chunks_mut(self.a) {
            let mut mass = 0.0;
            for (j, v) in row.iter_mut().enumerate() {
                if self.mode(j).unsigned_abs() as usize > self.m {
                    mass += v.norm();
                    *v = ZERO;
                }
            }
            dropped = dropped.max(mass);
        }
        *c = self.from_modes(&modes);
        dropped
    }

    pub fn d_alpha(&self, c: &[C64]) -> Field {
        let mut modes = self.to_modes(c);
        for row in modes.chunks_mut(self.a) {
            for (j, v) in row.iter_mut().enumerate() {
                let n = self.mode(j);
                // the Nyquist bin has no antisymmetric partner
                *v *= if 2 * n.unsigned_abs() as usize == self.a { ZERO } else { I * n as f64 };
            }
        }
        self.from_modes(&modes)
    }

    pub fn d_action(&self, c: &[C64]) -> Field {
        let g = self.nodes.len();
        let mut out = self.zeros();
        if c.chunks(self.a).all(|row| row == &c[..self.a]) {
            return out;
        }
        for i in 0..g {
            for k in 0..g {
                let d = self.diff[i * g + k];
                if d == 0.0 {
                    continue;
                }
                let (dst, src) = (i * self.a, k * self.a);
                for j in 0..self.a {
                    out[dst + j] += c[src + j] * d;
                }
            }
        }
        out
    }

    /// `α`-average of each row, broadcast back over the row.
    pub fn alpha_mean(&self, c: &[C64]) -> Field {
        let mut out = c.to_vec();
        for row in out.chunks_mut(self.a) {
            let m = row.iter().sum::<C64>() / self.a as f64;
            row.iter_mut().for_each(|v| *v = m);
        }
        out
    }

    /// Spectral interpolation at an arbitrary `(I, α)`.
    pub fn eval(&self, c: &[C64], action: f64, alpha: f64) -> C64 {
        let modes = self.to_modes(c);
        let rows: Vec<C64> = modes
            .chunks(self.a)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(j, _)| 2 * self.mode(*j).unsigned_abs() as usize != self.a)
                    .map(|(j, v)| v * C64::from_polar(1.0, self.mode(j) as f64 * alpha))
                    .sum()
            })
            .collect();
        self.interpolate_action(&rows, action)
    }

    /// Barycentric interpolation of node values at `action`.
    pub fn interpolate_action(&self, values: &[C64], action: f64) -> C64 {
        let (mut num, mut den) = (ZERO, 0.0);
        for (j, (&x, &w)) in self.nodes.iter().zip(&self.bary).enumerate() {
            let d = action - x;
            if d == 0.0 {
                return values[j];
            }
            num += values[j] * (w / d);
            den += w / d;
        }
        num / den
    }

    /// Derivative of the node-value interpolant, at the nodes.
    pub fn d_action_nodes(&self, values: &[f64]) -> Vec<f64> {
        let g = self.nodes.len();
        (0..g).map(|i| (0..g).map(|k| self.diff[i * g + k] * values[k]).sum()).collect()
    }
}

/// Exponents of `z` and `w` per transverse site, layout `[z₀, w₀, z₁, w₁, …]`
/// over the sites `−N..−1, 1..N` in that order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(Box<[u8]>);

impl Monomial {
    pub fn one(n: usize) -> Self {
        Monomial(vec![0; 4 * n].into_boxed_slice())
    }

    /// Slot of lattice site `k ≠ 0`.
    pub fn slot(n: usize, k: i64) -> usize {
        assert!(k != 0 && k.unsigned_abs() as usize <= n, "site {k} outside the transverse window");
        if k < 0 {
            (k + n as i64) as usize
        } else {
            (k + n as i64 - 1) as usize
        }
    }

    /// Lattice site of slot `s`.
    pub fn site(n: usize, s: usize) -> i64 {
        if s < n {
            s as i64 - n as i64
        } else {
            s as i64 - n as i64 + 1
        }
    }

    pub fn z(n: usize, k: i64) -> Self {
        let mut m = Self::one(n);
        m.0[2 * Self::slot(n, k)] = 1;
        m
    }

    pub fn w(n: usize, k: i64) -> Self {
        let mut m = Self::one(n);
        m.0[2 * Self::slot(n, k) + 1] = 1;
        m
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    pub fn exponents(&self) -> &[u8] {
        &self.0
    }

    /// `(Σ z exponents, Σ w exponents)`
    pub fn bidegree(&self) -> (usize, usize) {
        let z = self.0.iter().step_by(2).map(|&e| e as usize).sum();
        let w = self.0.iter().skip(1).step_by(2).map(|&e| e as usize).sum();
        (z, w)
    }

    pub fn times(&self, other: &Self) -> Self {
        Monomial(self.0.iter().zip(other.0.iter()).map(|(a, b)| a + b).collect())
    }

    /// Exchanges every `z` with the matching `w`.
    pub fn conjugate(&self) -> Self {
        let mut v = self.0.to_vec();
        for pair in v.chunks_mut(2) {
            pair.swap(0, 1);
        }
        Monomial(v.into_boxed_slice())
    }

    fn lowered(&self, var: usize) -> Self {
        let mut v = self.0.to_vec();
        v[var] -= 1;
        Monomial(v.into_boxed_slice())
    }
}

/// Largest single coefficients removed by the Fourier cutoff and by the
/// degree cap.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Truncation {
    pub fourier: f64,
    pub degree: f64,
}

impl Truncation {
    pub fn merge(self, other: Truncation) -> Truncation {
        Truncation {
            fourier: self.fourier.max(other.fourier),
            degree: self.degree.max(other.degree),
        }
    }
}

/// A truncated graded function `Σ_m c_m(I, α) ξ^m`.
#[derive(Debug, Clone)]
pub struct Graded {
    grid: Arc<SpectralGrid>,
    n: usize,
    max_degree: usize,
    terms: BTreeMap<Monomial, Field>,
    /// Largest coefficients dropped by truncation so far.
    pub dropped: Truncation,
}

fn sup(c: &[C64]) -> f64 {
    c.iter().fold(0.0, |m, v| m.max(v.norm()))
}

fn is_zero(c: &[C64]) -> bool {
    c.iter().all(|v| *v == ZERO)
}

struct Derivs {
    c: Field,
    ci: Option<Field>,
    ca: Option<Field>,
    sup: f64,
    sup_i: f64,
    sup_a: f64,
}

fn derivs(grid: &SpectralGrid, c: &Field) -> Derivs {
    let ci = grid.d_action(c);
    let ca = grid.d_alpha(c);
    // drop derivatives that vanish to round-off so constant terms skip work
    let scale = sup(c).max(1e-300);
    let (sup_i, sup_a) = (sup(&ci), sup(&ca));
    Derivs {
        c: c.clone(),
        ci: (sup_i > 1e-13 * scale).then_some(ci),
        ca: (sup_a > 1e-13 * scale).then_some(ca),
        sup: sup(c),
        sup_i,
        sup_a,
    }
}

fn axpy_prod(out: &mut [C64], s: C64, a: &[C64], b: &[C64]) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o += s * x * y;
    }
}

impl Graded {
    pub fn zero(grid: Arc<SpectralGrid>, n: usize, max_degree: usize) -> Self {
        Self {
            grid,
            n,
            max_degree,
            terms: BTreeMap::new(),
            dropped: Truncation::default(),
        }
    }

    /// Degree-0 function from samples.
    pub fn scalar(grid: Arc<SpectralGrid>, n: usize, max_degree: usize, c: Field) -> Self {
        let mut g = Self::zero(grid, n, max_degree);
        g.add_term(Monomial::one(n), c);
        g
    }

    pub fn like(&self) -> Self {
        Self::zero(self.grid.clone(), self.n, self.max_degree)
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn sites(&self) -> usize {
        self.n
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Field)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &Monomial) -> Option<&Field> {
        self.terms.get(m)
    }

    /// Adds `c · m`; terms above the degree cap are dropped and recorded.
    pub fn add_term(&mut self, m: Monomial, c: Field) {
        assert_eq!(c.len(), self.grid.len(), "field size must match the grid");
        if m.degree() > self.max_degree {
            self.dropped.degree = self.dropped.degree.max(sup(&c));
            return;
        }
        match self.terms.get_mut(&m) {
            Some(old) => old.iter_mut().zip(&c).for_each(|(a, b)| *a += b),
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    pub fn add_scaled(&mut self, other: &Graded, s: C64) {
        for (m, c) in &other.terms {
            self.add_term(m.clone(), c.iter().map(|v| v * s).collect());
        }
        self.dropped = self.dropped.merge(other.dropped);
    }

    pub fn plus(&self, other: &Graded) -> Graded {
        let mut out = self.clone();
        out.add_scaled(other, C64::new(1.0, 0.0));
        out
    }

    pub fn minus(&self, other: &Graded) -> Graded {
        let mut out = self.clone();
        out.add_scaled(other, C64::new(-1.0, 0.0));
        out
    }

    pub fn scaled(&self, s: C64) -> Graded {
        let mut out = self.like();
        out.add_scaled(self, s);
        out
    }

    /// Terms of ξ-degree exactly `d`.
    pub fn degree_part(&self, d: usize) -> Graded {
        self.select(|m| m.degree() == d)
    }

    pub fn select(&self, keep: impl Fn(&Monomial) -> bool) -> Graded {
        let mut out = self.like();
        for (m, c) in self.terms.iter().filter(|(m, _)| keep(m)) {
            out.terms.insert(m.clone(), c.clone());
        }
        out
    }

    /// `α`-mean of the degree-0 part (a function of `I` only).
    pub fn mean(&self) -> Graded {
        let mut out = self.like();
        if let Some(c) = self.terms.get(&Monomial::one(self.n)) {
            out.add_term(Monomial::one(self.n), self.grid.alpha_mean(c));
        }
        out
    }

    /// Removes exact zeros and coefficients below `tol` in sup norm.
    pub fn prune(&mut self, tol: f64) {
        self.terms.retain(|_, c| !is_zero(c) && sup(c) > tol);
    }

    pub fn filter(&mut self) {
        let grid = self.grid.clone();
        let mut dropped: f64 = 0.0;
        for c in self.terms.values_mut() {
            dropped = dropped.max(grid.filter(c));
        }
        self.dropped.fourier = self.dropped.fourier.max(dropped);
    }

    /// `max_m sup |c_m|`
    pub fn sup_norm(&self) -> f64 {
        self.terms.values().map(|c| sup(c)).fold(0.0, f64::max)
    }

    /// Majorant of the Hamiltonian vector field on the polydisc `|ξ_k| ≤ R_ξ`:
    /// `max(sup Σ|∂_α c_m| R_ξ^d, sup Σ|∂_I c_m| R_ξ^d, sup Σ d|c_m| R_ξ^{d−2})`.
    pub fn vector_field_norm(&self, r_xi: f64) -> f64 {
        self.weighted_vector_field_norm(1.0, 1.0, r_xi)
    }

    /// As [`Graded::vector_field_norm`] with the `I` and `α` components
    /// divided by `r_i` and `r_alpha`.
    pub fn weighted_vector_field_norm(&self, r_i: f64, r_alpha: f64, r_xi: f64) -> f64 {
        let len = self.grid.len();
        let (mut si, mut sa, mut sx) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
        for (m, c) in &self.terms {
            let d = m.degree();
            let w = r_xi.powi(d as i32);
            let ca = self.grid.d_alpha(c);
            let ci = self.grid.d_action(c);
            for p in 0..len {
                si[p] += ca[p].norm() * w;
                sa[p] += ci[p].norm() * w;
            }
            if d >= 1 {
                let wx = d as f64 * r_xi.powi(d as i32 - 2);
                for p in 0..len {
                    sx[p] += c[p].norm() * wx;
                }
            }
        }
        (0..len).map(|p| (si[p] / r_i).max(sa[p] / r_alpha).max(sx[p])).fold(0.0, f64::max)
    }

    /// `max sup |c_m − conj(c_{m̄})|`: zero for functions real on `w = z̄`.
    pub fn reality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, c) in &self.terms {
            let mc = m.conjugate();
            match self.terms.get(&mc) {
                Some(d) => {
                    for (x, y) in c.iter().zip(d) {
                        worst = worst.max((x - y.conj()).norm());
                    }
                }
                None => worst = worst.max(sup(c)),
            }
        }
        worst
    }

    /// Projects onto real functions, `c_m ← (c_m + conj c_{m̄})/2`; returns
    /// the reality defect before projection.
    pub fn symmetrize(&mut self) -> f64 {
        let defect = self.reality_defect();
        let keys: Vec<Monomial> = self.terms.keys().cloned().collect();
        for m in keys {
            let mc = m.conjugate();
            if mc < m && self.terms.contains_key(&mc) {
                continue;
            }
            let a = self.terms.get(&m).cloned().unwrap_or_default();
            let b = self.terms.get(&mc).cloned().unwrap_or_else(|| vec![ZERO; a.len()]);
            let avg: Field = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y.conj())).collect();
            if mc != m {
                self.terms.insert(mc, avg.iter().map(|v| v.conj()).collect());
            }
            self.terms.insert(m, avg);
        }
        defect
    }

    /// Value at `(I, α, z, w)` with `z`, `w` indexed by slot.
    pub fn evaluate(&self, action: f64, alpha: f64, z: &[C64], w: &[C64]) -> C64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                let mut v = self.grid.eval(c, action, alpha);
                for (s, pair) in m.exponents().chunks(2).enumerate() {
                    v *= z[s].powu(pair[0] as u32) * w[s].powu(pair[1] as u32);
                }
                v
            })
            .sum()
    }
}

/// Poisson bracket `{f, g}` with Fourier filtering of the result.
pub fn poisson_bracket(f: &Graded, g: &Graded) -> Graded {
    assert!(Arc::ptr_eq(&f.grid, &g.grid) && f.n == g.n, "brackets need a common grid");
    let grid = &f.grid;
    let fd: Vec<(&Monomial, Derivs)> = f.terms.iter().map(|(m, c)| (m, derivs(grid, c))).collect();
    let gd: Vec<(&Monomial, Derivs)> = g.terms.iter().map(|(m, c)| (m, derivs(grid, c))).collect();
    let mut acc: BTreeMap<Monomial, Field> = BTreeMap::new();
    let mut dropped = f.dropped.merge(g.dropped);
    let cap = f.max_degree;
    let len = grid.len();
    let one = C64::new(1.0, 0.0);
    for (mf, df) in &fd {
        for (mg, dg) in &gd {
            // action–angle part: f_I g_α − f_α g_I
            let has_ia = (df.ci.is_some() && dg.ca.is_some()) || (df.ca.is_some() && dg.ci.is_some());
            if has_ia && mf.degree() + mg.degree() > cap {
                // bound instead of forming a product that is thrown away
                let bound = df.sup_i * dg.sup_a + df.sup_a * dg.sup_i;
                dropped.degree = dropped.degree.max(bound);
            } else if has_ia {
                let t = acc.entry(mf.times(mg)).or_insert_with(|| vec![ZERO; len]);
                if let (Some(a), Some(b)) = (&df.ci, &dg.ca) {
                    t.iter_mut().zip(a).zip(b).for_each(|((o, x), y)| *o += x * y);
                }
                if let (Some(a), Some(b)) = (&df.ca, &dg.ci) {
                    t.iter_mut().zip(a).zip(b).for_each(|((o, x), y)| *o -= x * y);
                }
            }
            // transverse part: i Σ (f_z g_w − f_w g_z)
            let (ef, eg) = (mf.exponents(), mg.exponents());
            let over = mf.degree() + mg.degree() > cap + 2;
            for s in 0..f.n * 2 {
                let (zi, wi) = (2 * s, 2 * s + 1);
                for (fv, gv, sign) in [(zi, wi, one), (wi, zi, -one)] {
                    if ef[fv] > 0 && eg[gv] > 0 && over {
                        let bound = (ef[fv] as f64 * eg[gv] as f64) * df.sup * dg.sup;
                        dropped.degree = dropped.degree.max(bound);
                    } else if ef[fv] > 0 && eg[gv] > 0 {
                        let key = mf.lowered(fv).times(&mg.lowered(gv));
                        let coef = I * sign * (ef[fv] as f64 * eg[gv] as f64);
                        let t = acc.entry(key).or_insert_with(|| vec![ZERO; len]);
                        axpy_prod(t, coef, &df.c, &dg.c);
                    }
                }
            }
        }
    }
    let mut out = f.like();
    for (m, mut c) in acc {
        dropped.fourier = dropped.fourier.max(grid.filter(&mut c));
        if !is_zero(&c) {
            out.terms.insert(m, c);
        }
    }
    out.dropped = dropped;
    out
}

/// `H ∘ Φ¹_χ = Σ_{l ≤ L} L_χ^l H / l!` with `L_χ = {χ, ·}`; also returns the
/// vector-field norm of the first omitted term as a remainder estimate.
pub fn lie_transform(h: &Graded, chi: &Graded, order: usize, r_xi: f64) -> (Graded, f64) {
    let mut out = h.clone();
    let mut term = h.clone();
    if chi.is_empty() {
        return (out, 0.0);
    }
    for l in 1..=order {
        term = poisson_bracket(chi, &term).scaled(C64::new(1.0 / l as f64, 0.0));
        if term.is_empty() {
            return (out, 0.0);
        }
        out.add_scaled(&term, C64::new(1.0, 0.0));
    }
    let next = poisson_bracket(chi, &term).scaled(C64::new(1.0 / (order + 1) as f64, 0.0));
    out.dropped = out.dropped.merge(term.dropped);
    (out, next.vector_field_norm(r_xi))
}

/// Parts of ξ-degree 0, 1, ≥ 2 and the mean of the degree-0 part.
#[derive(Debug, Clone)]
pub struct Parts {
    pub f0: Graded,
    pub f1: Graded,
    pub f2: Graded,
    pub mean: Graded,
}

pub fn split_parts(f: &Graded) -> Parts {
    Parts {
        f0: f.degree_part(0),
        f1: f.degree_part(1),
        f2: f.select(|m| m.degree() >= 2),
        mean: f.mean(),
    }
}

/// `q_k = (z_k + w_k)/√2` as a graded function.
pub fn q_site(grid: &Arc<SpectralGrid>, n: usize, d: usize, k: i64) -> Graded {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut g = Graded::zero(grid.clone(), n, d);
    g.add_term(Monomial::z(n, k), vec![C64::new(s, 0.0); grid.len()]);
    g.add_term(Monomial::w(n, k), vec![C64::new(s, 0.0); grid.len()]);
    g
}

/// `p_k = (z_k − w_k)/(i√2)`
pub fn p_site(grid: &Arc<SpectralGrid>, n: usize, d: usize, k: i64) -> Graded {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut g = Graded::zero(grid.clone(), n, d);
    g.add_term(Monomial::z(n, k), vec![-I * s; grid.len()]);
    g.add_term(Monomial::w(n, k), vec![I * s; grid.len()]);
    g
}

/// Pointwise product of two graded functions (degree-capped, filtered).
pub fn product(f: &Graded, g: &Graded) -> Graded {
    let mut out = f.like();
    let len = f.grid.len();
    for (mf, cf) in &f.terms {
        for (mg, cg) in &g.terms {
            let mut c = vec![ZERO; len];
            axpy_prod(&mut c, C64::new(1.0, 0.0), cf, cg);
            out.add_term(mf.times(mg), c);
        }
    }
    out.filter();
    out.dropped = out.dropped.merge(f.dropped).merge(g.dropped);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Arc<SpectralGrid> {
        Arc::new(SpectralGrid::new(0.3, 0.5, 12, 64, 16).unwrap())
    }

    #[test]
    fn chebyshev_derivative_of_polynomial_is_exact() {
        let g = grid();
        let c = g.sample(|i, _| C64::new(i.powi(5), 0.0));
        let d = g.d_action(&c);
        let expect = g.sample(|i, _| C64::new(5.0 * i.powi(4), 0.0));
        assert!(d.iter().zip(&expect).all(|(a, b)| (a - b).norm() < 1e-11));
    }

    #[test]
    fn alpha_derivative_and_eval() {
        let g = grid();
        let c = g.sample(|i, a| C64::new(i * (3.0 * a).cos(), 0.0));
        let d = g.d_alpha(&c);
        let expect = g.sample(|i, a| C64::new(-3.0 * i * (3.0 * a).sin(), 0.0));
        assert!(d.iter().zip(&expect).all(|(x, y)| (x - y).norm() < 1e-12));
        let v = g.eval(&c, 0.4321, 1.234);
        assert!((v.re - 0.4321 * (3.0 * 1.234f64).cos()).abs() < 1e-12);
    }

    #[test]
    fn filter_removes_high_modes() {
        let g = grid();
        let mut c = g.sample(|_, a| C64::new((2.0 * a).cos() + (20.0 * a).cos(), 0.0));
        let dropped = g.filter(&mut c);
        assert!((dropped - 1.0).abs() < 1e-12);
        let expect = g.sample(|_, a| C64::new((2.0 * a).cos(), 0.0));
        assert!(c.iter().zip(&expect).all(|(x, y)| (x - y).norm() < 1e-12));
    }

    #[test]
    fn aliasing_guard() {
        assert!(SpectralGrid::new(0.3, 0.5, 8, 96, 32).is_err());
        assert!(SpectralGrid::new(0.5, 0.3, 8, 128, 32).is_err());
    }

    #[test]
    fn monomial_slots_round_trip() {
        for k in [-3i64, -1, 1, 3] {
            assert_eq!(Monomial::site(3, Monomial::slot(3, k)), k);
        }
        let m = Monomial::z(2, -1).times(&Monomial::w(2, 2));
        assert_eq!(m.degree(), 2);
        assert_eq!(m.bidegree(), (1, 1));
        assert_eq!(m.conjugate().conjugate(), m);
    }

    #[test]
    fn harmonic_bracket() {
        let g = grid();
        let n = 2;
        let zw = Graded::zero(g.clone(), n, 4);
        let mut zw = zw;
        zw.add_term(Monomial::z(n, 1).times(&Monomial::w(n, 1)), vec![C64::new(1.0, 0.0); g.len()]);
        let mut z = Graded::zero(g.clone(), n, 4);
        z.add_term(Monomial::z(n, 1), vec![C64::new(1.0, 0.0); g.len()]);
        let b = poisson_bracket(&zw, &z);
        let c = b.coefficient(&Monomial::z(n, 1)).unwrap();
        assert!(c.iter().all(|v| (v - C64::new(0.0, -1.0)).norm() < 1e-15));
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn action_angle_bracket_sign() {
        // {I, e^{iα}} = i e^{iα}, i.e. {I, α} = 1
        let g = grid();
        let fi = Graded::scalar(g.clone(), 1, 2, g.sample(|i, _| C64::new(i, 0.0)));
        let e = Graded::scalar(g.clone(), 1, 2, g.sample(|_, a| C64::from_polar(1.0, a)));
        let b = poisson_bracket(&fi, &e);
        let expect = g.sample(|_, a| I * C64::from_polar(1.0, a));
        let c = b.coefficient(&Monomial::one(1)).unwrap();
        assert!(c.iter().zip(&expect).all(|(x, y)| (x - y).norm() < 1e-12));
    }

    #[test]
    fn q_and_p_are_real() {
        let g = grid();
        assert!(q_site(&g, 2, 4, -2).reality_defect() < 1e-15);
        assert!(p_site(&g, 2, 4, 1).reality_defect() < 1e-15);
        // {q_k, p_k} = −1 under ẋ = {H, x}: q̇ = {H, q} = ∂_p H
        let b = poisson_bracket(&p_site(&g, 2, 4, 1), &q_site(&g, 2, 4, 1));
        let c = b.coefficient(&Monomial::one(2)).unwrap();
        assert!(c.iter().all(|v| (v - C64::new(1.0, 0.0)).norm() < 1e-15));
    }
}
