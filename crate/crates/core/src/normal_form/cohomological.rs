//! Mode-wise solution of `{H_lin, χ} = Ψ` for `H_lin = hs(I) + Σ z_k w_k`.
//!
//! For `c(I, α) z^a w^b` the operator acts as `ω ∂_α c + i(|b| − |a|) c`,
//! so Fourier mode `n` is divided by `i(nω + |b| − |a|)`.

use super::algebra::{Field, Graded, Monomial};
use crate::error::{Error, Result};
use num_complex::Complex64 as C64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Generator and the smallest divisor met while building it.
#[derive(Debug, Clone)]
pub struct Solution {
    pub chi: Graded,
    pub min_divisor: f64,
}

fn shift(m: &Monomial) -> Result<i64> {
    match m.bidegree() {
        (0, 0) => Ok(0),
        (1, 0) => Ok(-1),
        (0, 1) => Ok(1),
        (a, b) => Err(Error::InvalidInput(format!("right-hand side has a term of bidegree ({a}, {b}); only ξ-degree ≤ 1 is solvable"))),
    }
}

/// Solves the cohomological equation with frequency `omega[g]` at each
/// action node. The α-mean of the degree-0 part must vanish.
pub fn solve_cohomological(omega: &[f64], psi: &Graded, floor: f64) -> Result<Solution> {
    let grid = psi.grid().clone();
    let a = grid.alpha_points();
    assert_eq!(omega.len(), grid.i_nodes().len(), "one frequency per action node");
    let mut chi = psi.like();
    let mut min_divisor = f64::INFINITY;
    for (m, c) in psi.terms() {
        let s = shift(m)?;
        let mut modes = grid.to_modes(c);
        for (g, row) in modes.chunks_mut(a).enumerate() {
            let scale = row.iter().fold(0.0f64, |x, v| x.max(v.norm())).max(1e-300);
            for (j, v) in row.iter_mut().enumerate() {
                let n = grid.mode(j);
                if n.unsigned_abs() as usize > grid.cutoff() {
                    *v = C64::new(0.0, 0.0);
                    continue;
                }
                let d = n as f64 * omega[g] + s as f64;
                if s == 0 && n == 0 {
                    if v.norm() > 1e-12 * scale.max(1.0) {
                        return Err(Error::InvalidInput(format!("right-hand side has nonzero α-mean {:.3e}", v.norm())));
                    }
                    *v = C64::new(0.0, 0.0);
                    continue;
                }
                if d.abs() < floor {
                    let kind = match s {
                        0 => "nω",
                        -1 => "nω − 1",
                        _ => "nω + 1",
                    };
                    return Err(Error::Resonance { mode: n, divisor: d.abs(), kind });
                }
                min_divisor = min_divisor.min(d.abs());
                *v /= I * d;
            }
        }
        chi.add_term(m.clone(), grid.from_modes(&modes));
    }
    Ok(Solution { chi, min_divisor })
}

/// `{H_lin, χ}` evaluated directly on the grid (no Fourier division).
pub fn apply_linear(omega: &[f64], chi: &Graded) -> Graded {
    let grid = chi.grid().clone();
    let a = grid.alpha_points();
    let mut out = chi.like();
    for (m, c) in chi.terms() {
        let (za, wb) = m.bidegree();
        let s = wb as f64 - za as f64;
        let ca = grid.d_alpha(c);
        let f: Field = ca
            .iter()
            .zip(c)
            .enumerate()
            .map(|(p, (d, v))| d * omega[p / a] + I * s * v)
            .collect();
        out.add_term(m.clone(), f);
    }
    out
}

/// `sup |{H_lin, χ} − Ψ|` over the grid and all monomials.
pub fn back_substitution_residual(omega: &[f64], chi: &Graded, psi: &Graded) -> f64 {
    apply_linear(omega, chi).minus(psi).sup_norm()
}
