use breather_core::integrator::{flow, ChainModel, Composition};
use breather_core::lattice::{check_skew, hamiltonian, norm, AdmissiblePair, LatticeState, NormSpec, WeightSpec};
use breather_core::linear::oscillatory::{oscillatory_integral, sup_over_rho, PhaseInterval};
use breather_core::linear::propagator::*;
use breather_core::linear::resolvent::*;
use breather_core::linear::spacetime::*;
use breather_core::numerics::logspace;
use breather_core::potential::PotentialSpec;
use breather_core::Error;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, PI};

fn random_skew(n: usize, support: i64, rng: &mut ChaCha8Rng) -> LatticeState {
    let mut s = LatticeState::zeros(n, true);
    for k in 1..=support {
        let (p, q) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        s.set(k, p, q);
        s.set(-k, -p, -q);
    }
    s
}

fn random_half_chains(n: usize, support: i64, rng: &mut ChaCha8Rng) -> LatticeState {
    LatticeState::from_fn(n, false, |k| {
        if k.abs() <= support {
            (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        } else {
            (0.0, 0.0)
        }
    })
}

#[test]
fn dispersion_relation_values() {
    assert_eq!(nu(0.3, 0.0), 1.0);
    assert!((nu(0.1, PI) - 1.4f64.sqrt()).abs() < 1e-15);
    assert!((nu(0.25, FRAC_PI_2) - 1.5f64.sqrt()).abs() < 1e-15);
    for j in 0..100 {
        let th = -PI + 2.0 * PI * j as f64 / 99.0;
        let v = nu(0.2, th);
        assert!((1.0..=1.8f64.sqrt() + 1e-15).contains(&v));
    }
}

#[test]
fn parseval_and_conjugate_symmetry() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let prop = LinearPropagator::new(50, 0.1).unwrap();
    let s = LatticeState::from_fn(50, true, |_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let f = prop.transform(&s).unwrap();
    assert!((f.l2() - s.l2()).abs() < 1e-12 * s.l2());
    assert!(f.conjugate_symmetry_defect() < 1e-12);
}

#[test]
fn uncoupled_chain_rotates_each_site() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let prop = LinearPropagator::new(20, 0.0).unwrap();
    let s = random_skew(20, 8, &mut rng);
    let t = 2.7;
    let out = prop.propagate_whole_chain(&s, t).unwrap();
    for i in 0..s.len() {
        assert!((out.q[i] - (s.q[i] * t.cos() + s.p[i] * t.sin())).abs() < 1e-13);
        assert!((out.p[i] - (s.p[i] * t.cos() - s.q[i] * t.sin())).abs() < 1e-13);
    }
    let id = prop.propagate_whole_chain(&s, 0.0).unwrap();
    assert!(id.sub(&s).unwrap().l2() < 1e-14);
}

#[test]
fn whole_chain_group_property_and_symmetry() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let prop = LinearPropagator::new(64, 0.1).unwrap();
    let s = random_skew(64, 10, &mut rng);
    let a = prop.propagate_whole_chain(&prop.propagate_whole_chain(&s, 3.1).unwrap(), 4.4).unwrap();
    let b = prop.propagate_whole_chain(&s, 7.5).unwrap();
    assert!(a.sub(&b).unwrap().l2() < 1e-10);
    assert!(check_skew(&b));
}

#[test]
fn whole_chain_rejects_non_skew() {
    let prop = LinearPropagator::new(8, 0.1).unwrap();
    let mut s = LatticeState::zeros(8, true);
    s.set(1, 0.0, 1.0);
    assert!(matches!(prop.propagate_whole_chain(&s, 1.0), Err(Error::NotSkewSymmetric { .. })));
}

#[test]
fn whole_chain_matches_time_stepping() {
    let prop = LinearPropagator::new(100, 0.1).unwrap();
    let s = dipole(100);
    let exact = prop.propagate_whole_chain(&s, 50.0).unwrap();
    let model = ChainModel::linear(0.1).unwrap();
    let stepped = flow(&model, &Composition::yoshida4(), &s, 0.01, 50.0);
    assert!(exact.sub(&stepped).unwrap().l2() < 1e-8);
}

#[test]
fn hl_identity_and_decoupling() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let prop = LinearPropagator::new(40, 0.1).unwrap();
    let mut xi = random_half_chains(40, 6, &mut rng);
    assert!(prop.propagate_hl(&xi, 0.0).unwrap().sub(&xi).unwrap().l2() < 1e-14);
    for k in 1..=40 {
        xi.set(k, 0.0, 0.0);
    }
    let out = prop.propagate_hl(&xi, 12.0).unwrap();
    assert!((1..=40).all(|k| out.p_at(k) == 0.0 && out.q_at(k) == 0.0));
    assert!(out.l2() > 0.1);
}

#[test]
fn hl_matches_pinned_time_stepping() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let prop = LinearPropagator::new(80, 0.1).unwrap();
    let xi = random_half_chains(80, 5, &mut rng);
    let exact = prop.propagate_hl(&xi, 30.0).unwrap();
    let model = ChainModel::linear(0.1).unwrap();
    let stepped = flow(&model, &Composition::yoshida4(), &xi, 0.01, 30.0);
    assert!(exact.sub(&stepped).unwrap().l2() < 1e-8);
}

#[test]
fn hl_energy_conserved() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let prop = LinearPropagator::new(60, 0.1).unwrap();
    let xi = random_half_chains(60, 10, &mut rng);
    let e0 = prop.hl_energy(&xi);
    assert!((e0 - 2.0 * hamiltonian(&xi, &PotentialSpec::zero(), 0.1)).abs() < 1e-15);
    for t in [1.0, 10.0, 25.0] {
        let e = prop.hl_energy(&prop.propagate_hl(&xi, t).unwrap());
        assert!((e - e0).abs() < 1e-10 * e0);
    }
}

#[test]
fn l2_norm_does_not_decay() {
    let prop = LinearPropagator::new(1024, 0.1).unwrap();
    let fit = measure_decay(&prop, &dipole(1024), NormSpec::lr(2.0), &eps_t_grid(0.1, 1.0, 40.0, 10), &DecayOptions::instantaneous())
        .unwrap();
    assert!(fit.slope.abs() < 0.02, "{}", fit.slope);
}

#[test]
fn decay_window_guard() {
    let prop = LinearPropagator::new(256, 0.1).unwrap();
    let r = measure_decay(&prop, &dipole(256), NormSpec::lr(f64::INFINITY), &[10.0, 200.0], &DecayOptions::default());
    assert!(matches!(r, Err(Error::BoundaryReached(_))));
}

#[test]
fn decay_csv_has_summary_row() {
    let prop = LinearPropagator::new(512, 0.1).unwrap();
    let fit = measure_decay(&prop, &dipole(512), NormSpec::lr(f64::INFINITY), &eps_t_grid(0.1, 1.0, 20.0, 5), &DecayOptions::default())
        .unwrap();
    let mut buf = Vec::new();
    fit.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,eps_t,norm");
    assert_eq!(lines.len(), 7);
    assert!(lines[6].starts_with("summary,"));
}

#[test]
fn sup_decay_is_cube_root_on_moderate_lattice() {
    let prop = LinearPropagator::new(2048, 0.1).unwrap();
    let fit = measure_decay(
        &prop,
        &dipole(2048),
        NormSpec::lr(f64::INFINITY),
        &eps_t_grid(0.1, 10.0, 80.0, 16),
        &DecayOptions::default(),
    )
    .unwrap();
    assert!((-0.40..=-0.26).contains(&fit.slope), "{}", fit.slope);
}

#[test]
fn oscillatory_trivial_cases() {
    let z = oscillatory_integral(0.3, 0.0, 0.1, PhaseInterval::I1).unwrap();
    assert!((z - Complex64::new(PhaseInterval::I1.length(), 0.0)).norm() < 1e-13);
    let lambda = 37.0;
    let z = oscillatory_integral(0.0, lambda, 0.0, PhaseInterval::I2).unwrap();
    let expect = Complex64::from_polar(PhaseInterval::I2.length(), lambda);
    assert!((z - expect).norm() < 1e-12);
}

#[test]
fn oscillatory_matches_refined_trapezoid() {
    // Oracle: composite trapezoid on a very fine mesh with Richardson steps
    let (rho, lambda, eps) = (0.5, 100.0, 0.1);
    let z = oscillatory_integral(rho, lambda, eps, PhaseInterval::Full).unwrap();
    let f = |psi: f64| {
        let s = psi.sin();
        Complex64::from_polar(1.0, lambda * ((1.0 + 4.0 * eps * s * s).sqrt() + rho * psi))
    };
    let trap = |n: usize| {
        let h = PI / n as f64;
        let mut acc = (f(0.0) + f(PI)) * 0.5;
        for j in 1..n {
            acc += f(j as f64 * h);
        }
        acc * h
    };
    let (a, b) = (trap(200_000), trap(400_000));
    let oracle = b + (b - a) / 3.0;
    assert!((z - oracle).norm() < 1e-10, "{z} vs {oracle}");
}

#[test]
fn vdc_doubling_ratio_on_i1() {
    let a = sup_over_rho(2000.0, 0.1, PhaseInterval::I1, 0.25, 201);
    let b = sup_over_rho(4000.0, 0.1, PhaseInterval::I1, 0.25, 201);
    let ratio = a.sup / b.sup;
    assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.1, "{ratio}");
}

fn dense_minus_laplacian(n: usize, shift: Complex64) -> DMatrix<Complex64> {
    let m = 2 * n + 1;
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            Complex64::new(2.0, 0.0) - shift
        } else if i.abs_diff(j) == 1 {
            Complex64::new(-1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

#[test]
fn resolvent_kernel_matches_dense_inverse() {
    for nt in [Complex64::new(-1.0, 0.0), Complex64::new(2.0, 0.5)] {
        let n = 256;
        let inv = dense_minus_laplacian(n, nt).try_inverse().unwrap();
        let mut worst: f64 = 0.0;
        for j in -20i64..=20 {
            for k in -20i64..=20 {
                let dense = inv[((j + n as i64) as usize, (k + n as i64) as usize)];
                worst = worst.max((resolvent_kernel(nt, j, k).unwrap() - dense).norm());
            }
        }
        assert!(worst < 1e-6, "ν̃ = {nt}: {worst}");
    }
    let nt = Complex64::new(-1.0, 0.0);
    let g0 = resolvent_kernel(nt, 0, 0).unwrap();
    assert!(g0.re.abs() > 0.0 && g0.im.abs() < 1e-15, "real negative shift gives a real positive kernel");
}

#[test]
fn resolvent_kernel_decays_geometrically() {
    let nt = Complex64::new(1.0, 0.3);
    let theta = theta_of(nt).unwrap();
    assert!(theta.im < 0.0);
    let ratio = (-theta.im).exp().recip();
    for d in 0..10 {
        let a = resolvent_kernel(nt, d, 0).unwrap().norm();
        let b = resolvent_kernel(nt, d + 1, 0).unwrap().norm();
        assert!((b / a - ratio).abs() < 1e-12);
    }
    assert!(ratio < 1.0);
}

#[test]
fn resolvent_rejects_cut() {
    assert!(matches!(resolvent_kernel(Complex64::new(2.0, 0.0), 0, 0), Err(Error::OnSpectralCut { .. })));
    assert!(resolvent_b(Complex64::new(1.2, 0.0), 0.1, &[Complex64::new(1.0, 0.0)]).is_err());
}

#[test]
fn resolvent_b_scaling_and_neumann_regime() {
    let eps = 0.1;
    let y: Vec<Complex64> = (0..21).map(|j| Complex64::new((j as f64 * 0.7).sin(), 0.0)).collect();
    let z = Complex64::new(1.3, 0.4);
    let lhs = resolvent_b(Complex64::new(1.0, 0.0) + z * eps, eps, &y).unwrap();
    let rhs = apply_resolvent(z, &y).unwrap();
    for (a, b) in lhs.iter().zip(&rhs) {
        assert!((a - b / eps).norm() < 1e-12);
    }
    let nu_big = Complex64::new(0.0, 1e4);
    let out = resolvent_b(nu_big, eps, &y).unwrap();
    let ny = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let no = out.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    assert!((no * nu_big.norm() / ny - 1.0).abs() < 1e-3);
}

#[test]
fn resolvent_b_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let eps = 0.1;
    let n = 200;
    for _ in 0..5 {
        let nu = Complex64::new(rng.random_range(0.5..2.0), rng.random_range(0.05..0.5));
        // y supported near the centre; the dense system is large enough that
        // the boundary is invisible there
        let mut y = vec![Complex64::new(0.0, 0.0); 2 * n + 1];
        for k in n - 5..=n + 5 {
            y[k] = Complex64::new(rng.random_range(-1.0..1.0), 0.0);
        }
        let b = dense_minus_laplacian(n, (nu - 1.0) / eps).map(|v| v * eps);
        let x = b.lu().solve(&DVector::from_vec(y.clone())).unwrap();
        let got = resolvent_b(nu, eps, &y).unwrap();
        for k in n - 30..=n + 30 {
            assert!((got[k] - x[k]).norm() < 1e-8);
        }
    }
}

#[test]
fn limiting_absorption_converges() {
    let probe = limiting_absorption(1.5, 3, -2, &[1e-3, 1e-4, 1e-5]).unwrap();
    assert!(probe.cauchy_differences[1] < probe.cauchy_differences[0]);
    assert!((probe.values[2] - probe.boundary_value).norm() < 1e-4);
}

#[test]
fn puiseux_dipole_by_hand() {
    // For the dipole the exact boundary value is e^{iθ₀k} for k ≥ 1 and the
    // leading term is 1, so the error is Σ_{k≥1} 2|e^{iθ₀k} − 1|² ⟨k⟩^{−4}.
    let nt: f64 = 0.01;
    let theta0 = (1.0 - 0.5 * nt).acos();
    let kmax = 20_000i64;
    let mut terms: Vec<f64> = (1..=kmax)
        .map(|k| 2.0 * (Complex64::from_polar(1.0, theta0 * k as f64) - 1.0).norm_sqr() / (1.0 + (k * k) as f64).powi(2))
        .collect();
    terms.sort_by(f64::total_cmp);
    let oracle = terms.iter().sum::<f64>().sqrt();
    let got = puiseux_leading_check(&dipole(4), &[nt, 0.02], 2.0, kmax).unwrap();
    assert!((got.errors[0].1 - oracle).abs() < 1e-10 * oracle);
}

#[test]
fn puiseux_rejects_even_data() {
    let mut s = LatticeState::zeros(4, true);
    s.set(1, 0.0, 1.0);
    s.set(-1, 0.0, 1.0);
    assert!(matches!(puiseux_leading_check(&s, &[0.01], 2.0, 100), Err(Error::NotSkewSymmetric { .. })));
}

#[test]
fn spacetime_norm_trivial_cases() {
    let zero = StateTrajectory::new(vec![0.0, 1.0, 2.0], vec![LatticeState::zeros(3, true); 3]).unwrap();
    let pair = AdmissiblePair::new(7.0, 14.0);
    assert_eq!(spacetime_norm(&zero, pair, WeightSpec::NONE, 0.1).unwrap(), 0.0);
    let s = LatticeState::from_fn(3, true, |k| (0.1 * k as f64, 1.0 / (1 + k * k) as f64));
    let times: Vec<f64> = (0..=40).map(|j| j as f64 * 0.5).collect();
    let traj = StateTrajectory::new(times, vec![s.clone(); 41]).unwrap();
    let eps = 0.1;
    let got = spacetime_norm(&traj, pair, WeightSpec::NONE, eps).unwrap();
    let expect = norm(&s, 14.0, WeightSpec::NONE).unwrap() * (eps * 20.0f64).powf(1.0 / 7.0);
    assert!((got - expect).abs() < 1e-12);
}

#[test]
fn sp_temp_trivial_and_single_site() {
    let zero = StateTrajectory::new(vec![0.0, 1.0], vec![LatticeState::zeros(3, true); 2]).unwrap();
    let c = sp_temp_check(&zero, 3.0, 2.0, 0.1).unwrap();
    assert!(c.holds && c.left == 0.0);
    let times: Vec<f64> = (0..50).map(|j| j as f64 * 0.2).collect();
    let states: Vec<LatticeState> = times
        .iter()
        .map(|t| {
            let mut s = LatticeState::zeros(5, true);
            s.set(3, 0.0, t.cos());
            s
        })
        .collect();
    let traj = StateTrajectory::new(times, states).unwrap();
    let c = sp_temp_check(&traj, 3.0, 2.0, 0.1).unwrap();
    // one active site: left/right is exactly the weight ratio ⟨3⟩^{−1}
    assert!((c.left / c.right - 10f64.sqrt().recip()).abs() < 1e-12);
    assert!(sp_temp_check(&traj, 2.2, 2.0, 0.1).is_err());
}

#[test]
fn sp_temp_holds_on_dispersive_trajectory() {
    let prop = LinearPropagator::new(300, 0.1).unwrap();
    let traj = StateTrajectory::linear_flow(&prop, &dipole(300), 0.5, 300).unwrap();
    let c = sp_temp_check(&traj, 3.0, 2.0, 0.1).unwrap();
    assert!(c.holds, "{c:?}");
    assert!(c.ratio() <= 1.0);
    assert!(mixed_norm(&traj, 3.0, 0.1) > 0.0);
}

#[test]
fn homogeneous_strichartz_quotient_bounded_over_ensemble() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let prop = LinearPropagator::new(400, 0.1).unwrap();
    let pair = AdmissiblePair::new(7.0, 14.0);
    let quotients: Vec<f64> = (0..8)
        .map(|_| {
            let d = random_skew(400, 6, &mut rng);
            homogeneous_strichartz_quotient(&prop, &d, pair, 1.0, 150).unwrap()
        })
        .collect();
    let (lo, hi) = quotients.iter().fold((f64::INFINITY, 0.0f64), |(a, b), q| (a.min(*q), b.max(*q)));
    assert!(hi < 3.0 * lo, "{quotients:?}");
}

#[test]
fn retarded_quotient_stable_under_eps_halving() {
    // forcing: a localized skew-symmetric kick oscillating at the band centre
    let quotient = |eps: f64| {
        let n = 600;
        let prop = LinearPropagator::new(n, eps).unwrap();
        let steps = (20.0 / eps / 0.5) as usize;
        let times: Vec<f64> = (0..=steps).map(|j| j as f64 * 0.5).collect();
        let states = times
            .iter()
            .map(|t| {
                let mut s = LatticeState::zeros(n, true);
                let w = (-(eps * t - 5.0).powi(2)).exp() * (1.0 + 2.0 * eps).sqrt().mul_add(*t, 0.0).cos();
                s.set(1, w, 0.0);
                s.set(-1, -w, 0.0);
                s
            })
            .collect();
        let f = StateTrajectory::new(times, states).unwrap();
        let pair = AdmissiblePair::new(7.0, 14.0);
        retarded_strichartz_quotient(&prop, &f, pair, pair).unwrap()
    };
    let (a, b) = (quotient(0.1), quotient(0.05));
    assert!(a / b > 0.5 && a / b < 2.0, "{a} {b}");
}

#[test]
fn skew_random_data_helper_is_skew() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    assert!(check_skew(&random_skew(10, 4, &mut rng)));
    let _ = logspace(1.0, 2.0, 3);
}
