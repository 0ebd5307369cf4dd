//! Helpers shared by the integration test targets.

use breather_core::normal_form::algebra::{Field, Graded, Monomial, SpectralGrid};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Real random function of ξ-degree ≤ `deg` on `n` sites, coefficients of
/// polynomial degree ≤ `ideg` in I and Fourier band ≤ `band`.
pub fn random_graded(rng: &mut ChaCha8Rng, grid: &Arc<SpectralGrid>, n: usize, cap: usize, deg: usize, ideg: i32, band: i64, amp: f64) -> Graded {
    let mut g = Graded::zero(grid.clone(), n, cap);
    let mut monos = vec![Monomial::one(n)];
    for d in 1..=deg {
        for _ in 0..2 {
            let mut m = Monomial::one(n);
            for _ in 0..d {
                let k = loop {
                    let k = rng.random_range(-(n as i64)..=n as i64);
                    if k != 0 {
                        break k;
                    }
                };
                let v = if rng.random_bool(0.5) { Monomial::z(n, k) } else { Monomial::w(n, k) };
                m = m.times(&v);
            }
            monos.push(m);
        }
    }
    for m in monos {
        let coef: Vec<(i64, i32, C64)> = (-band..=band)
            .flat_map(|nn| (0..=ideg).map(move |p| (nn, p)))
            .map(|(nn, p)| (nn, p, C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * amp))
            .collect();
        let field = grid.sample(|i, a| coef.iter().map(|(nn, p, c)| c * C64::from_polar(1.0, *nn as f64 * a) * i.powi(*p)).sum());
        let conj_field = grid.sample(|i, a| coef.iter().map(|(nn, p, c)| c.conj() * C64::from_polar(1.0, -(*nn as f64) * a) * i.powi(*p)).sum());
        if m.conjugate() == m {
            let real: Field = field.iter().zip(&conj_field).map(|(x, y)| 0.5 * (x + y)).collect();
            g.add_term(m, real);
        } else {
            g.add_term(m.conjugate(), conj_field);
            g.add_term(m, field);
        }
    }
    g
}

