//! The on-site anharmonic potential `V(q) = Σ a_m q^m`.

use crate::error::{Error, Result};
use std::fmt;
use std::str::FromStr;

/// Polynomial on-site potential with a zero of order at least `min_degree`
/// at the origin. Only the anharmonic part is stored; the quadratic on-site
/// term `q²/2` is always present in the lattice Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    terms: Vec<(u32, f64)>,
    min_degree: u32,
}

impl PotentialSpec {
    pub fn new(terms: Vec<(u32, f64)>, min_degree: u32) -> Result<Self> {
        if min_degree != 4 && min_degree != 8 {
            return Err(Error::InvalidInput(format!(
                "min_degree must be 4 or 8, got {min_degree}"
            )));
        }
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(terms.len());
        for (m, a) in terms {
            if m < min_degree {
                return Err(Error::InvalidInput(format!(
                    "term of degree {m} below min_degree {min_degree}"
                )));
            }
            if !a.is_finite() {
                return Err(Error::InvalidInput(format!("coefficient of q^{m} is {a}")));
            }
            match merged.iter_mut().find(|(d, _)| *d == m) {
                Some(entry) => entry.1 += a,
                None => merged.push((m, a)),
            }
        }
        merged.retain(|(_, a)| *a != 0.0);
        merged.sort_by_key(|(m, _)| *m);
        Ok(Self {
            terms: merged,
            min_degree,
        })
    }

    /// `V ≡ 0`: the harmonic oscillator.
    pub fn zero() -> Self {
        Self {
            terms: Vec::new(),
            min_degree: 8,
        }
    }

    /// `V(q) = a q^m` with `min_degree` set to `m` (4 or 8) or 8 above that.
    pub fn monomial(degree: u32, coefficient: f64) -> Result<Self> {
        let min_degree = if degree < 8 { 4 } else { 8 };
        Self::new(vec![(degree, coefficient)], min_degree)
    }

    pub fn terms(&self) -> &[(u32, f64)] {
        &self.terms
    }

    pub fn min_degree(&self) -> u32 {
        self.min_degree
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_degree(&self) -> u32 {
        self.terms.last().map_or(0, |(m, _)| *m)
    }

    pub fn eval(&self, q: f64) -> f64 {
        self.terms.iter().map(|&(m, a)| a * q.powi(m as i32)).sum()
    }

    pub fn derivative(&self, q: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(m, a)| a * m as f64 * q.powi(m as i32 - 1))
            .sum()
    }

    pub fn second_derivative(&self, q: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(m, a)| a * (m * (m - 1)) as f64 * q.powi(m as i32 - 2))
            .sum()
    }

    /// `(V(a) − V(b)) / (a − b)`, evaluated without cancellation.
    /// Reduces to `V'(a)` when `a == b`.
    pub fn divided_difference(&self, a: f64, b: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(m, c)| {
                // a^{m-1} + a^{m-2} b + ... + b^{m-1}
                let mut acc = 0.0;
                let mut bp = 1.0;
                for _ in 0..m {
                    acc = acc * a + bp;
                    bp *= b;
                }
                c * acc
            })
            .sum()
    }
}

impl fmt::Display for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.terms.iter().map(|(m, a)| format!("{m}:{a}")).collect();
        write!(f, "{}", parts.join(", "))
    }
}

/// Parses `"8:1.0, 10:0.1"` (degree:coefficient pairs, comma or whitespace
/// separated). `"0"` or an empty string is the zero potential. The minimum
/// degree is 8 if every term has degree ≥ 8, otherwise 4.
impl FromStr for PotentialSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim();
        if trimmed.is_empty() || trimmed == "0" {
            return Ok(Self::zero());
        }
        let mut terms = Vec::new();
        for tok in trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
        {
            let tok = tok.trim_matches(|c| c == '(' || c == ')');
            let (d, a) = tok
                .split_once(':')
                .ok_or_else(|| Error::InvalidInput(format!("expected degree:coefficient, got {tok:?}")))?;
            let d: u32 = d
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad degree {d:?}")))?;
            let a: f64 = a
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad coefficient {a:?}")))?;
            terms.push((d, a));
        }
        let min_degree = if terms.iter().all(|(d, _)| *d >= 8) { 8 } else { 4 };
        Self::new(terms, min_degree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn horner(coeffs: &[(u32, f64)], q: f64) -> f64 {
        let deg = coeffs.iter().map(|(m, _)| *m).max().unwrap_or(0) as usize;
        let mut dense = vec![0.0; deg + 1];
        for &(m, a) in coeffs {
            dense[m as usize] += a;
        }
        dense.iter().rev().fold(0.0, |acc, &a| acc * q + a)
    }

    #[test]
    fn octic_values() {
        let v = PotentialSpec::monomial(8, 1.0).unwrap();
        assert_eq!(v.eval(0.0), 0.0);
        assert_eq!(v.eval(1.0), 1.0);
        assert_eq!(v.derivative(0.0), 0.0);
    }

    #[test]
    fn mixed_potential_matches_horner() {
        let terms = vec![(8, 0.5), (10, 0.1)];
        let v = PotentialSpec::new(terms.clone(), 8).unwrap();
        let expected = horner(&terms, 0.5);
        assert!((v.eval(0.5) - expected).abs() < 1e-16);
        assert!((expected - (0.5 * 0.5f64.powi(8) + 0.1 * 0.5f64.powi(10))).abs() < 1e-17);
    }

    #[test]
    fn rejects_low_degree_terms() {
        assert!(PotentialSpec::new(vec![(3, 1.0)], 4).is_err());
        assert!(PotentialSpec::new(vec![(6, 1.0)], 8).is_err());
        assert!(PotentialSpec::new(vec![(8, 1.0)], 6).is_err());
    }

    #[test]
    fn parses_config_pairs() {
        let v: PotentialSpec = "8:1.0, 10:0.1".parse().unwrap();
        assert_eq!(v.terms(), &[(8, 1.0), (10, 0.1)]);
        assert_eq!(v.min_degree(), 8);
        let w: PotentialSpec = "(4:0.25)".parse().unwrap();
        assert_eq!(w.min_degree(), 4);
        assert!("0".parse::<PotentialSpec>().unwrap().is_zero());
        assert!("8-1".parse::<PotentialSpec>().is_err());
    }

    #[test]
    fn divided_difference_is_stable() {
        let v = PotentialSpec::new(vec![(8, 1.0), (10, -0.05)], 8).unwrap();
        let (a, b) = (0.7, 0.7 - 1e-9);
        let dd = v.divided_difference(a, b);
        assert!((dd - v.derivative(a)).abs() < 1e-7);
        let (a, b) = (0.9, -0.3);
        let direct = (v.eval(a) - v.eval(b)) / (a - b);
        assert!((v.divided_difference(a, b) - direct).abs() < 1e-14);
    }
}
