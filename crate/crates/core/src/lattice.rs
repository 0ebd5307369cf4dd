//! Lattice states on the window `k = −N..N`, the chain Hamiltonian, its vector
//! field and the weighted sequence norms.
//!
//! The chain is closed by Dirichlet conditions `q_{±(N+1)} = 0`. A state
//! without site 0 describes the transverse variables `ξ`; whenever such a
//! state is fed to the Hamiltonian or its vector field the missing site is
//! pinned at `q₀ = 0`, which splits the chain into two independent halves.

use crate::error::{Error, Result};
use crate::numerics::pairwise_sum;
use crate::potential::PotentialSpec;
use std::f64::consts::TAU;
use std::io::{Read, Write};

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    n: usize,
    include_site0: bool,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl LatticeState {
    pub fn zeros(n: usize, include_site0: bool) -> Self {
        let len = Self::len_for(n, include_site0);
        Self {
            n,
            include_site0,
            p: vec![0.0; len],
            q: vec![0.0; len],
        }
    }

    pub fn from_vecs(n: usize, include_site0: bool, p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        let len = Self::len_for(n, include_site0);
        if p.len() != len || q.len() != len {
            return Err(Error::InvalidInput(format!(
                "expected {len} entries for N = {n}, got p: {}, q: {}",
                p.len(),
                q.len()
            )));
        }
        Ok(Self {
            n,
            include_site0,
            p,
            q,
        })
    }

    /// Builds a state by evaluating `f(k) -> (p_k, q_k)` on every site.
    pub fn from_fn(n: usize, include_site0: bool, mut f: impl FnMut(i64) -> (f64, f64)) -> Self {
        let mut s = Self::zeros(n, include_site0);
        for i in 0..s.len() {
            let (p, q) = f(s.site(i));
            s.p[i] = p;
            s.q[i] = q;
        }
        s
    }

    fn len_for(n: usize, include_site0: bool) -> usize {
        if include_site0 {
            2 * n + 1
        } else {
            2 * n
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn include_site0(&self) -> bool {
        self.include_site0
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Lattice index `k` of storage slot `i`.
    pub fn site(&self, i: usize) -> i64 {
        let k = i as i64 - self.n as i64;
        if !self.include_site0 && k >= 0 {
            k + 1
        } else {
            k
        }
    }

    /// Storage slot of lattice index `k`, if present.
    pub fn index(&self, k: i64) -> Option<usize> {
        let n = self.n as i64;
        if k.abs() > n || (k == 0 && !self.include_site0) {
            return None;
        }
        if !self.include_site0 && k > 0 {
            Some((k + n - 1) as usize)
        } else {
            Some((k + n) as usize)
        }
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.len()).map(move |i| self.site(i))
    }

    pub fn p_at(&self, k: i64) -> f64 {
        self.index(k).map_or(0.0, |i| self.p[i])
    }

    pub fn q_at(&self, k: i64) -> f64 {
        self.index(k).map_or(0.0, |i| self.q[i])
    }

    /// Sets `(p_k, q_k)`; panics if `k` is outside the window.
    pub fn set(&mut self, k: i64, p: f64, q: f64) {
        let i = self.index(k).unwrap_or_else(|| panic!("site {k} outside the window"));
        self.p[i] = p;
        self.q[i] = q;
    }

    /// Drops site 0: the transverse part `ξ` of a full state.
    pub fn without_site0(&self) -> Self {
        if !self.include_site0 {
            return self.clone();
        }
        let mut out = Self::zeros(self.n, false);
        for i in 0..out.len() {
            let j = self.index(out.site(i)).unwrap();
            out.p[i] = self.p[j];
            out.q[i] = self.q[j];
        }
        out
    }

    /// Inserts site 0 with the given values.
    pub fn with_site0(&self, p0: f64, q0: f64) -> Self {
        let mut out = Self::zeros(self.n, true);
        for i in 0..out.len() {
            let k = out.site(i);
            if k == 0 {
                out.p[i] = p0;
                out.q[i] = q0;
            } else {
                out.p[i] = self.p_at(k);
                out.q[i] = self.q_at(k);
            }
        }
        out
    }

    /// Copies the state into a wider or narrower window, zero-filling new sites.
    pub fn resized(&self, n: usize) -> Self {
        let mut out = Self::zeros(n, self.include_site0);
        for i in 0..out.len() {
            let k = out.site(i);
            out.p[i] = self.p_at(k);
            out.q[i] = self.q_at(k);
        }
        out
    }

    fn check_layout(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.include_site0 != other.include_site0 {
            return Err(Error::InvalidInput(format!(
                "layout mismatch: (N = {}, site0 = {}) vs (N = {}, site0 = {})",
                self.n, self.include_site0, other.n, other.include_site0
            )));
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_layout(other)?;
        let mut out = self.clone();
        out.p.iter_mut().zip(&other.p).for_each(|(a, b)| *a -= b);
        out.q.iter_mut().zip(&other.q).for_each(|(a, b)| *a -= b);
        Ok(out)
    }

    /// `self += a · other`
    pub fn axpy(&mut self, a: f64, other: &Self) -> Result<()> {
        self.check_layout(other)?;
        self.p.iter_mut().zip(&other.p).for_each(|(x, y)| *x += a * y);
        self.q.iter_mut().zip(&other.q).for_each(|(x, y)| *x += a * y);
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        self.p.iter_mut().chain(self.q.iter_mut()).for_each(|x| *x *= a);
    }

    /// Plain `𝐥²` norm of the concatenated pair.
    pub fn l2(&self) -> f64 {
        pairwise_sum(&self.p.iter().chain(&self.q).map(|x| x * x).collect::<Vec<_>>()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(&self.q).all(|x| x.is_finite())
    }

    /// Flattened `[p..., q...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.p.iter().chain(&self.q).copied().collect()
    }

    pub fn from_flat(n: usize, include_site0: bool, flat: &[f64]) -> Result<Self> {
        let len = Self::len_for(n, include_site0);
        if flat.len() != 2 * len {
            return Err(Error::InvalidInput(format!(
                "flat vector has {} entries, expected {}",
                flat.len(),
                2 * len
            )));
        }
        Self::from_vecs(n, include_site0, flat[..len].to_vec(), flat[len..].to_vec())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "p_k", "q_k"])?;
        for i in 0..self.len() {
            w.write_record(&[
                self.site(i).to_string(),
                format!("{:e}", self.p[i]),
                format!("{:e}", self.q[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `k, p_k, q_k` rows. Lines starting with `#` are skipped. The
    /// window is the smallest symmetric one holding every listed site.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |j: usize| -> Result<f64> {
                rec.get(j)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::InvalidInput(format!("bad state row {:?}", rec)))
            };
            let k: i64 = rec
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidInput(format!("bad site index in {:?}", rec)))?;
            rows.push((k, parse(1)?, parse(2)?));
        }
        let n = rows.iter().map(|r| r.0.unsigned_abs()).max().unwrap_or(0) as usize;
        let include_site0 = rows.iter().any(|r| r.0 == 0);
        let mut s = Self::zeros(n, include_site0);
        for (k, p, q) in rows {
            let i = s.index(k).unwrap();
            s.p[i] = p;
            s.q[i] = q;
        }
        Ok(s)
    }
}

/// Weights of the sequence spaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightSpec {
    /// `⟨k⟩^s` with `⟨k⟩ = √(1 + k²)`; `s` may be negative.
    Polynomial { s: f64 },
    /// `e^{+β|k|}` (`plus = true`) or `e^{−β|k|}`, always in `ℓ²`.
    Exponential { plus: bool, beta: f64 },
}

impl WeightSpec {
    pub const NONE: WeightSpec = WeightSpec::Polynomial { s: 0.0 };
}

pub fn japanese(k: i64) -> f64 {
    (1.0 + (k * k) as f64).sqrt()
}

/// Weighted norm of the concatenated pair `(p, q)`.
///
/// Polynomial weight: `(Σ |x_k|^r ⟨k⟩^{rs})^{1/r}` (sup for `r = ∞`).
/// Exponential weight: `(Σ e^{±β|k|} |x_k|²)^{1/2}`; `r` is ignored.
pub fn norm(state: &LatticeState, r: f64, weight: WeightSpec) -> Result<f64> {
    match weight {
        WeightSpec::Polynomial { s } => weighted_lr(state, r, |k| japanese(k).powf(s)),
        WeightSpec::Exponential { plus, beta } => {
            if !(beta > 0.0) {
                return Err(Error::InvalidInput(format!("β must be positive, got {beta}")));
            }
            let sign = if plus { 1.0 } else { -1.0 };
            let terms: Vec<f64> = (0..state.len())
                .map(|i| {
                    let w = (sign * beta * state.site(i).abs() as f64).exp();
                    w * (state.p[i] * state.p[i] + state.q[i] * state.q[i])
                })
                .collect();
            Ok(pairwise_sum(&terms).sqrt())
        }
    }
}

fn weighted_lr(state: &LatticeState, r: f64, w: impl Fn(i64) -> f64) -> Result<f64> {
    if !(r >= 1.0) {
        return Err(Error::InvalidInput(format!("norm exponent must be ≥ 1, got {r}")));
    }
    if r.is_infinite() {
        return Ok((0..state.len())
            .map(|i| w(state.site(i)) * state.p[i].abs().max(state.q[i].abs()))
            .fold(0.0, f64::max));
    }
    let scale = (0..state.len())
        .map(|i| w(state.site(i)) * state.p[i].abs().max(state.q[i].abs()))
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let terms: Vec<f64> = (0..state.len())
        .flat_map(|i| {
            let wk = w(state.site(i));
            [
                (wk * state.p[i].abs() / scale).powf(r),
                (wk * state.q[i].abs() / scale).powf(r),
            ]
        })
        .collect();
    Ok(scale * pairwise_sum(&terms).powf(1.0 / r))
}

/// A norm on transverse sequences: exponent plus weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSpec {
    pub r: f64,
    pub weight: WeightSpec,
}

impl NormSpec {
    pub fn lr(r: f64) -> Self {
        Self {
            r,
            weight: WeightSpec::NONE,
        }
    }

    pub fn weighted(r: f64, s: f64) -> Self {
        Self {
            r,
            weight: WeightSpec::Polynomial { s },
        }
    }

    pub fn exponential(plus: bool, beta: f64) -> Self {
        Self {
            r: 2.0,
            weight: WeightSpec::Exponential { plus, beta },
        }
    }

    pub fn eval(&self, state: &LatticeState) -> Result<f64> {
        norm(state, self.r, self.weight)
    }
}

/// A point `ζ = (I, α, ξ)` of the phase space split at site 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPoint {
    pub action: f64,
    pub angle: f64,
    pub xi: LatticeState,
}

/// Shortest arc between two angles.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// `max{|I − I′|, |α − α′| mod 2π, ‖ξ − ξ′‖}`.
pub fn distance(a: &SplitPoint, b: &SplitPoint, metric: NormSpec) -> Result<f64> {
    let dx = metric.eval(&a.xi.sub(&b.xi)?)?;
    Ok((a.action - b.action)
        .abs()
        .max(angle_distance(a.angle, b.angle))
        .max(dx))
}

/// Strichartz exponents `(q, r)`; either may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissiblePair {
    pub q_exp: f64,
    pub r_exp: f64,
}

impl AdmissiblePair {
    pub fn new(q_exp: f64, r_exp: f64) -> Self {
        Self { q_exp, r_exp }
    }
}

/// `q ≥ 6`, `r ≥ 2` and `1/q + 1/(3r) ≤ 1/6`.
///
/// For finite exponents the inequality is tested in the cleared form
/// `6r + 2q ≤ qr`, which is exact on integers.
pub fn is_admissible(pair: AdmissiblePair) -> bool {
    let AdmissiblePair { q_exp: q, r_exp: r } = pair;
    if q.is_nan() || r.is_nan() || q < 6.0 || r < 2.0 {
        return false;
    }
    match (q.is_infinite(), r.is_infinite()) {
        (true, true) => true,
        (true, false) => r >= 2.0,
        (false, true) => q >= 6.0,
        (false, false) => 6.0 * r + 2.0 * q <= q * r,
    }
}

/// `Σ_k [(p_k² + q_k²)/2 + V(q_k)] + (ε/2) Σ_k (q_{k+1} − q_k)²` with
/// Dirichlet closure (and `q₀ = 0` when site 0 is absent).
pub fn hamiltonian(state: &LatticeState, v: &PotentialSpec, eps: f64) -> f64 {
    let n = state.n() as i64;
    let mut terms = Vec::with_capacity(2 * state.len() + 2);
    for i in 0..state.len() {
        let (p, q) = (state.p[i], state.q[i]);
        terms.push(0.5 * (p * p + q * q) + v.eval(q));
    }
    for k in -n - 1..=n {
        let d = state.q_at(k + 1) - state.q_at(k);
        terms.push(0.5 * eps * d * d);
    }
    pairwise_sum(&terms)
}

/// Discrete Laplacian `(Δq)_k = q_{k+1} + q_{k−1} − 2q_k` with the chain closure.
pub fn laplacian(state: &LatticeState) -> Vec<f64> {
    (0..state.len())
        .map(|i| {
            let k = state.site(i);
            state.q_at(k + 1) + state.q_at(k - 1) - 2.0 * state.q[i]
        })
        .collect()
}

/// `(ṗ, q̇) = (−q − V′(q) + εΔq, p)` as a state-shaped pair.
pub fn vector_field(state: &LatticeState, v: &PotentialSpec, eps: f64) -> LatticeState {
    let lap = laplacian(state);
    let mut out = LatticeState::zeros(state.n(), state.include_site0());
    for i in 0..state.len() {
        let q = state.q[i];
        out.p[i] = -q - v.derivative(q) + eps * lap[i];
        out.q[i] = state.p[i];
    }
    out
}

/// Antisymmetric part `(x_k − x_{−k})/2`.
pub fn skew_symmetrize(state: &LatticeState) -> LatticeState {
    let mut out = state.clone();
    for i in 0..state.len() {
        let k = state.site(i);
        out.p[i] = 0.5 * (state.p[i] - state.p_at(-k));
        out.q[i] = 0.5 * (state.q[i] - state.q_at(-k));
    }
    out
}

/// Largest violation of `x_k = −x_{−k}`.
pub fn skew_defect(state: &LatticeState) -> f64 {
    (0..state.len())
        .map(|i| {
            let k = state.site(i);
            (state.p[i] + state.p_at(-k))
                .abs()
                .max((state.q[i] + state.q_at(-k)).abs())
        })
        .fold(0.0, f64::max)
}

/// Exact skew symmetry check.
pub fn check_skew(state: &LatticeState) -> bool {
    skew_defect(state) == 0.0
}

/// Embedding constants on the truncated window for the chain
/// `‖x‖_{−} ≤ c_minus ‖x‖_{𝐥^r}` and `‖x‖_{𝐥^r} ≤ c_plus ‖x‖_{+}` (Hölder).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingConstants {
    pub c_minus: f64,
    pub c_plus: f64,
}

pub fn embedding_constants(n: usize, include_site0: bool, r: f64, beta: f64) -> Result<EmbeddingConstants> {
    if !(r >= 1.0) || !(beta > 0.0) {
        return Err(Error::InvalidInput(format!("need r ≥ 1 and β > 0, got r = {r}, β = {beta}")));
    }
    let sites: Vec<i64> = LatticeState::zeros(n, include_site0).sites().collect();
    let geometric = |rate: f64| -> f64 { sites.iter().map(|k| (-rate * k.abs() as f64).exp()).sum() };
    // ‖x‖₋² = Σ e^{−β|k|}|x_k|² ≤ (Σ e^{−β|k| r/(r−2)})^{(r−2)/r} ‖x‖_r²
    let c_minus = if r <= 2.0 {
        1.0
    } else if r.is_infinite() {
        geometric(beta).sqrt()
    } else {
        geometric(beta * r / (r - 2.0)).powf((r - 2.0) / (2.0 * r))
    };
    // ‖x‖_r^r = Σ (e^{β|k|}|x_k|²)^{r/2} e^{−β|k| r/2} ≤ ‖x‖₊^r (Σ e^{−β|k| r/(2−r)})^{(2−r)/2}
    let c_plus = if r >= 2.0 {
        1.0
    } else {
        geometric(beta * r / (2.0 - r)).powf((2.0 - r) / (2.0 * r))
    };
    Ok(EmbeddingConstants { c_minus, c_plus })
}
