//! Resolvent of the discrete Laplacian on `ℓ²(ℤ)` and of `B = 1 − εΔ`.
//!
//! For `ν̃ ∉ [0, 4]` the kernel of `(−Δ − ν̃)⁻¹` is
//! `G(j, k) = −i e^{−iθ|j−k|} / (2 sin θ)` with `2 − 2cos θ = ν̃` and
//! `Im θ < 0`, so that `|e^{−iθ}| < 1` and the kernel decays.

use crate::error::{Error, Result};
use crate::lattice::{japanese, LatticeState};
use crate::numerics::fit_loglog;
use num_complex::Complex64;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// The root `θ` of `2 − 2cos θ = ν̃` with `Im θ < 0`.
pub fn theta_of(nu_tilde: Complex64) -> Result<Complex64> {
    let mut theta = (Complex64::new(1.0, 0.0) - nu_tilde * 0.5).acos();
    if theta.im > 0.0 {
        theta = -theta;
    }
    if theta.im == 0.0 || !theta.im.is_finite() {
        return Err(Error::OnSpectralCut {
            re: nu_tilde.re,
            im: nu_tilde.im,
        });
    }
    Ok(theta)
}

/// `(−Δ − ν̃)⁻¹(j, k)`.
pub fn resolvent_kernel(nu_tilde: Complex64, j: i64, k: i64) -> Result<Complex64> {
    let theta = theta_of(nu_tilde)?;
    Ok(kernel_with_theta(theta, (j - k).abs()))
}

fn kernel_with_theta(theta: Complex64, dist: i64) -> Complex64 {
    -I * (-I * theta * dist as f64).exp() / (theta.sin() * 2.0)
}

/// Boundary value `R⁺(ν̃) = lim_{μ→0⁺} (−Δ − ν̃ − iμ)⁻¹` for `ν̃ ∈ (0, 4)`:
/// `i e^{iθ₀|j−k|} / (2 sin θ₀)` with `θ₀ = arccos(1 − ν̃/2) ∈ (0, π)`.
pub fn boundary_kernel_plus(nu_tilde: f64, j: i64, k: i64) -> Result<Complex64> {
    if !(nu_tilde > 0.0 && nu_tilde < 4.0) {
        return Err(Error::InvalidInput(format!("ν̃ = {nu_tilde} is not inside the band (0, 4)")));
    }
    let theta0 = (1.0 - 0.5 * nu_tilde).acos();
    let dist = (j - k).abs() as f64;
    Ok(I * Complex64::from_polar(1.0, theta0 * dist) / (2.0 * theta0.sin()))
}

/// Applies `(−Δ − ν̃)⁻¹` to `y` supported on `−N..N`, returning the values on
/// the same window (the infinite-lattice kernel, no truncation).
pub fn apply_resolvent(nu_tilde: Complex64, y: &[Complex64]) -> Result<Vec<Complex64>> {
    let theta = theta_of(nu_tilde)?;
    let len = y.len() as i64;
    // kernel depends on |j − k| only
    let table: Vec<Complex64> = (0..len).map(|d| kernel_with_theta(theta, d)).collect();
    Ok((0..len)
        .map(|j| {
            (0..len)
                .filter(|&k| y[k as usize] != Complex64::new(0.0, 0.0))
                .map(|k| table[(j - k).unsigned_abs() as usize] * y[k as usize])
                .sum()
        })
        .collect())
}

/// `R_B(ν) = (B − ν)⁻¹ = (1/ε) R_{−Δ}((ν − 1)/ε)` applied to `y`.
pub fn resolvent_b(nu: Complex64, eps: f64, y: &[Complex64]) -> Result<Vec<Complex64>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("ε must be positive, got {eps}")));
    }
    let nu_tilde = (nu - 1.0) / eps;
    theta_of(nu_tilde).map_err(|_| Error::OnSpectralCut { re: nu.re, im: nu.im })?;
    Ok(apply_resolvent(nu_tilde, y)?
        .into_iter()
        .map(|z| z / eps)
        .collect())
}

/// Kernel values at `ν̃ + iμ` for each `μ`, and the successive differences
/// `|G(μ_i) − G(μ_{i+1})|`, which shrink as `μ → 0` when the boundary value
/// exists.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionProbe {
    pub mus: Vec<f64>,
    pub values: Vec<Complex64>,
    pub cauchy_differences: Vec<f64>,
    pub boundary_value: Complex64,
}

pub fn limiting_absorption(nu_tilde: f64, j: i64, k: i64, mus: &[f64]) -> Result<AbsorptionProbe> {
    let values = mus
        .iter()
        .map(|&mu| resolvent_kernel(Complex64::new(nu_tilde, mu), j, k))
        .collect::<Result<Vec<_>>>()?;
    let cauchy_differences = values.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    Ok(AbsorptionProbe {
        mus: mus.to_vec(),
        values,
        cauchy_differences,
        boundary_value: boundary_kernel_plus(nu_tilde, j, k)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PuiseuxCheck {
    /// `(ν̃, ‖R⁺q − leading‖_{ℓ²_{−s}})`
    pub errors: Vec<(f64, f64)>,
    pub slope: f64,
}

/// Compares `R⁺(ν̃) q` with the leading term `−½ Σ_l |k − l| q_l` in `ℓ²_{−s}`
/// over `|k| ≤ k_max`, for skew-symmetric `q` (the `q` components of `datum`).
pub fn puiseux_leading_check(datum: &LatticeState, nu_grid: &[f64], s: f64, k_max: i64) -> Result<PuiseuxCheck> {
    if !datum.include_site0() {
        return Err(Error::InvalidInput("datum must include site 0".into()));
    }
    let defect = datum
        .sites()
        .map(|k| (datum.q_at(k) + datum.q_at(-k)).abs())
        .fold(0.0, f64::max);
    if defect > 0.0 {
        return Err(Error::NotSkewSymmetric { defect });
    }
    if !(s > 1.5) {
        return Err(Error::InvalidInput(format!("need s > 3/2, got {s}")));
    }
    let support: Vec<(i64, f64)> = datum
        .sites()
        .map(|k| (k, datum.q_at(k)))
        .filter(|(_, v)| *v != 0.0)
        .collect();
    let errors = nu_grid
        .iter()
        .map(|&nt| {
            let theta0 = (1.0 - 0.5 * nt).acos();
            let pref = I / (2.0 * theta0.sin());
            let mut terms: Vec<f64> = (-k_max..=k_max)
                .map(|k| {
                    let mut full = Complex64::new(0.0, 0.0);
                    let mut lead = 0.0;
                    for &(l, v) in &support {
                        let d = (k - l).abs() as f64;
                        full += pref * Complex64::from_polar(1.0, theta0 * d) * v;
                        lead -= 0.5 * d * v;
                    }
                    (full - lead).norm_sqr() * japanese(k).powf(-2.0 * s)
                })
                .collect();
            terms.sort_by(f64::total_cmp);
            (nt, terms.iter().sum::<f64>().sqrt())
        })
        .collect::<Vec<_>>();
    let x: Vec<f64> = errors.iter().map(|e| e.0).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.1).collect();
    let slope = fit_loglog(&x, &y)?.slope;
    Ok(PuiseuxCheck { errors, slope })
}
