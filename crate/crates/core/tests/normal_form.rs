use breather_core::breather::{anti_continuum_seed, continue_breather, periodicity_defect, polish, BreatherConfig};
use breather_core::normal_form::algebra::*;
use breather_core::normal_form::cohomological::*;
use breather_core::normal_form::*;
use breather_core::numerics::fit_loglog;
use breather_core::oscillator::ActionAngleChart;
use breather_core::potential::PotentialSpec;
use breather_core::Error;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;
use std::sync::{Arc, OnceLock};

mod common;
use common::random_graded;

const EPS: [f64; 4] = [0.0125, 0.025, 0.05, 0.1];

fn quartic8() -> &'static ActionAngleChart {
    static C: OnceLock<ActionAngleChart> = OnceLock::new();
    C.get_or_init(|| ActionAngleChart::for_potential(PotentialSpec::monomial(8, 1.0).unwrap(), 0.05, 0.6).unwrap())
}

fn harmonic() -> &'static ActionAngleChart {
    static C: OnceLock<ActionAngleChart> = OnceLock::new();
    C.get_or_init(|| ActionAngleChart::for_potential(PotentialSpec::zero(), 0.05, 0.6).unwrap())
}

/// Two-step normal forms over the ε grid.
fn family() -> &'static Vec<NormalForm> {
    static F: OnceLock<Vec<NormalForm>> = OnceLock::new();
    F.get_or_init(|| {
        let cfg = NormalFormConfig::default();
        EPS.iter().map(|&e| normalize(build_initial(quartic8(), e, &cfg).unwrap(), &cfg).unwrap()).collect()
    })
}

fn slope(eps: &[f64], y: &[f64]) -> f64 {
    fit_loglog(eps, y).unwrap().slope
}

fn small_grid() -> Arc<SpectralGrid> {
    Arc::new(SpectralGrid::new(0.3, 0.5, 12, 64, 16).unwrap())
}

fn max_diff(a: &Graded, b: &Graded) -> f64 {
    a.minus(b).sup_norm()
}

#[test]
fn harmonic_chart_gives_single_fourier_pair() {
    let cfg = NormalFormConfig::default();
    let init = build_initial(harmonic(), 0.05, &cfg).unwrap();
    let grid = init.grid.clone();
    let modes = grid.to_modes(&init.q0);
    let a = grid.alpha_points();
    for row in modes.chunks(a) {
        for (j, v) in row.iter().enumerate() {
            if grid.mode(j).abs() != 1 {
                assert!(v.norm() < 1e-12, "mode {} = {}", grid.mode(j), v);
            } else {
                assert!(v.norm() > 0.1);
            }
        }
    }
    for (m, c) in init.r1.terms() {
        assert_eq!(m.degree(), 1);
        let modes = grid.to_modes(c);
        assert!(modes.iter().enumerate().all(|(j, v)| grid.mode(j % a).abs() == 1 || v.norm() < 1e-12));
    }
    // q₀² carries modes 0 and ±2 only
    let r0 = init.r0.coefficient(&Monomial::one(cfg.sites)).unwrap();
    let modes = grid.to_modes(r0);
    assert!(modes.iter().enumerate().all(|(j, v)| [0, 2].contains(&grid.mode(j % a).abs()) || v.norm() < 1e-12));
    assert_eq!(init.r0.len(), 1);
}

#[test]
fn quartic8_fourier_tail_small_at_label_action() {
    let cfg = NormalFormConfig {
        action_range: (0.399, 0.401),
        action_nodes: 3,
        ..NormalFormConfig::default()
    };
    let init = build_initial(quartic8(), 0.05, &cfg).unwrap();
    assert!(init.q0_tail < 1e-12, "{}", init.q0_tail);
}

#[test]
fn tail_tolerance_is_enforced() {
    let cfg = NormalFormConfig {
        cutoff: 4,
        alpha_points: 16,
        q0_tail_tolerance: 1e-12,
        ..NormalFormConfig::default()
    };
    assert!(matches!(build_initial(quartic8(), 0.05, &cfg), Err(Error::TruncationExceeded { .. })));
}

#[test]
fn config_validation() {
    let bad = NormalFormConfig { steps: 1, ..NormalFormConfig::default() };
    assert!(bad.validate().is_err());
    let bad = NormalFormConfig { degree: 1, ..NormalFormConfig::default() };
    assert!(bad.validate().is_err());
    let bad = NormalFormConfig { action_range: (0.01, 0.5), ..NormalFormConfig::default() };
    assert!(matches!(build_initial(quartic8(), 0.05, &bad), Err(Error::OutOfRange { .. })));
}

#[test]
fn initial_decomposition_reproduces_lattice_energy() {
    // H at a real point with small ξ against the lattice Hamiltonian
    let chart = quartic8();
    let cfg = NormalFormConfig { sites: 3, ..NormalFormConfig::default() };
    let eps = 0.05;
    let init = build_initial(chart, eps, &cfg).unwrap();
    let h = init.total();
    let (action, alpha) = (0.42, 0.7);
    let (p0, q0) = chart.to_cartesian(action, alpha).unwrap();
    let mut state = breather_core::lattice::LatticeState::zeros(3, true);
    state.set(0, p0, q0);
    for (k, (p, q)) in [(-3, (0.01, -0.02)), (-1, (0.03, 0.02)), (1, (-0.02, 0.04)), (2, (0.01, 0.01))] {
        state.set(k, p, q);
    }
    let (z, w) = complex_coordinates(&state, 3);
    let graded = h.evaluate(action, alpha, &z, &w);
    // only the q⁸ terms of the transverse sites are above the degree cap
    let dropped: f64 = state.sites().filter(|&k| k != 0).map(|k| state.q_at(k).powi(8)).sum();
    let exact = breather_core::lattice::hamiltonian(&state, chart.potential(), eps) - dropped;
    assert!((graded.re - exact).abs() < 1e-10, "{} vs {}", graded.re, exact);
    assert!(graded.im.abs() < 1e-12);
}

#[test]
fn split_parts_examples() {
    let grid = small_grid();
    let n = 2;
    let mut zw = Graded::zero(grid.clone(), n, 4);
    zw.add_term(Monomial::z(n, 1).times(&Monomial::w(n, 1)), vec![C64::new(1.0, 0.0); grid.len()]);
    let p = split_parts(&zw);
    assert!(p.f0.is_empty() && p.f1.is_empty() && p.mean.is_empty());
    assert_eq!(max_diff(&p.f2, &zw), 0.0);

    let g = Graded::scalar(grid.clone(), n, 4, grid.sample(|i, _| C64::new(i * i, 0.0)));
    let p = split_parts(&g);
    assert!(max_diff(&p.f0, &g) < 1e-15 && max_diff(&p.mean, &g) < 1e-15);
    assert!(p.f1.is_empty() && p.f2.is_empty());

    let init = build_initial(harmonic(), 0.05, &NormalFormConfig::default()).unwrap();
    let p = split_parts(&init.r1);
    assert_eq!(max_diff(&p.f1, &init.r1), 0.0);
    assert!(p.f0.is_empty() && p.f2.is_empty());
}

#[test]
fn harmonic_rotation_bracket() {
    let grid = small_grid();
    let n = 3;
    let mut h = Graded::zero(grid.clone(), n, 4);
    let mut z = Graded::zero(grid.clone(), n, 4);
    h.add_term(Monomial::z(n, -2).times(&Monomial::w(n, -2)), vec![C64::new(1.0, 0.0); grid.len()]);
    z.add_term(Monomial::z(n, -2), vec![C64::new(1.0, 0.0); grid.len()]);
    let expected = z.scaled(C64::new(0.0, -1.0));
    assert!(max_diff(&poisson_bracket(&h, &z), &expected) < 1e-15);
}

#[test]
fn bracket_reproduces_lattice_vector_field() {
    // q̇_k = {H, q_k} on a real point equals ∂H/∂p_k
    let chart = quartic8();
    let cfg = NormalFormConfig { sites: 3, ..NormalFormConfig::default() };
    let init = build_initial(chart, 0.05, &cfg).unwrap();
    let h = init.total();
    let grid = init.grid.clone();
    let (action, alpha) = (0.41, 1.1);
    let (p0, q0) = chart.to_cartesian(action, alpha).unwrap();
    let mut state = breather_core::lattice::LatticeState::zeros(3, true);
    state.set(0, p0, q0);
    state.set(1, 0.02, -0.03);
    state.set(-1, -0.01, 0.05);
    let (z, w) = complex_coordinates(&state, 3);
    let vf = breather_core::lattice::vector_field(&state, chart.potential(), 0.05);
    for k in [-1i64, 1] {
        let qdot = poisson_bracket(&h, &q_site(&grid, 3, 4, k)).evaluate(action, alpha, &z, &w);
        let pdot = poisson_bracket(&h, &p_site(&grid, 3, 4, k)).evaluate(action, alpha, &z, &w);
        assert!((qdot.re - vf.q_at(k)).abs() < 1e-10, "{} {}", qdot, vf.q_at(k));
        // q⁸ force terms are above the degree cap
        let dropped = -8.0 * state.q_at(k).powi(7);
        assert!((pdot.re - (vf.p_at(k) - dropped)).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn bracket_antisymmetry_and_jacobi(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = small_grid();
        let (n, cap) = (2, 6);
        let f = random_graded(&mut rng, &grid, n, cap, 2, 3, 3, 1.0);
        let g = random_graded(&mut rng, &grid, n, cap, 2, 3, 3, 1.0);
        let h = random_graded(&mut rng, &grid, n, cap, 2, 3, 3, 1.0);
        let fg = poisson_bracket(&f, &g);
        let gf = poisson_bracket(&g, &f);
        let scale = fg.sup_norm().max(1.0);
        prop_assert!(fg.plus(&gf).sup_norm() < 1e-10 * scale);
        let j = poisson_bracket(&f, &poisson_bracket(&g, &h))
            .plus(&poisson_bracket(&g, &poisson_bracket(&h, &f)))
            .plus(&poisson_bracket(&h, &poisson_bracket(&f, &g)));
        let scale = poisson_bracket(&f, &poisson_bracket(&g, &h)).sup_norm().max(1.0);
        prop_assert!(j.sup_norm() < 1e-10 * scale, "{}", j.sup_norm() / scale);
    }

    #[test]
    fn brackets_and_transforms_preserve_reality(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = small_grid();
        let f = random_graded(&mut rng, &grid, 2, 4, 2, 2, 3, 1.0);
        let chi = random_graded(&mut rng, &grid, 2, 4, 1, 1, 2, 0.05);
        prop_assert!(f.reality_defect() < 1e-13);
        let b = poisson_bracket(&f, &chi);
        prop_assert!(b.reality_defect() < 1e-12 * b.sup_norm().max(1.0));
        // nested I-derivatives amplify round-off, hence the looser bound
        let mut lt = lie_transform(&f, &chi, 5, 1.0).0;
        prop_assert!(lt.reality_defect() < 1e-8 * lt.sup_norm());
        lt.symmetrize();
        prop_assert!(lt.reality_defect() == 0.0);
    }

    #[test]
    fn cohomological_back_substitution(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = Arc::new(SpectralGrid::new(0.3, 0.5, 8, 128, 32).unwrap());
        let omega = vec![1.3; 8];
        let mut psi = random_graded(&mut rng, &grid, 2, 4, 1, 2, 32, 1.0);
        psi.filter();
        let mean = psi.mean();
        let psi = psi.minus(&mean);
        let sol = solve_cohomological(&omega, &psi, 1e-3).unwrap();
        prop_assert!(back_substitution_residual(&omega, &sol.chi, &psi) < 1e-10);
        prop_assert!((sol.min_divisor - 0.3).abs() < 1e-12);
    }
}

#[test]
fn single_mode_cohomological_solution() {
    let grid = small_grid();
    let omega = vec![1.7; grid.i_nodes().len()];
    let psi = Graded::scalar(grid.clone(), 1, 4, grid.sample(|_, a| C64::new(a.cos(), 0.0)));
    let sol = solve_cohomological(&omega, &psi, 1e-3).unwrap();
    let expected = Graded::scalar(grid.clone(), 1, 4, grid.sample(|_, a| C64::new(a.sin() / 1.7, 0.0)));
    assert!(max_diff(&sol.chi, &expected) < 1e-14);
    assert_eq!(sol.chi.len(), 1);
    // Ψ⁽¹⁾ = 0 gives χ⁽¹⁾ = 0
    assert!(sol.chi.degree_part(1).is_empty());
}

#[test]
fn resonance_names_the_mode() {
    let grid = small_grid();
    let omega = vec![0.5; grid.i_nodes().len()];
    let n = 1;
    let mut psi = Graded::zero(grid.clone(), n, 4);
    psi.add_term(Monomial::z(n, 1), grid.sample(|_, a| C64::from_polar(1.0, 2.0 * a)));
    match solve_cohomological(&omega, &psi, 1e-3) {
        Err(Error::Resonance { mode, kind, .. }) => {
            assert_eq!(mode, 2);
            assert_eq!(kind, "nω − 1");
        }
        other => panic!("expected resonance, got {other:?}"),
    }
}

#[test]
fn cohomological_rejects_mean_and_high_degree() {
    let grid = small_grid();
    let omega = vec![1.3; grid.i_nodes().len()];
    let psi = Graded::scalar(grid.clone(), 1, 4, grid.sample(|i, _| C64::new(i, 0.0)));
    assert!(matches!(solve_cohomological(&omega, &psi, 1e-3), Err(Error::InvalidInput(_))));
    let mut psi = Graded::zero(grid.clone(), 1, 4);
    psi.add_term(Monomial::z(1, 1).times(&Monomial::z(1, 1)), grid.sample(|_, a| C64::from_polar(1.0, a)));
    assert!(matches!(solve_cohomological(&omega, &psi, 1e-3), Err(Error::InvalidInput(_))));
}

#[test]
fn lie_transform_trivial_cases() {
    let grid = small_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = random_graded(&mut rng, &grid, 2, 4, 2, 2, 3, 1.0);
    let (same, rem) = lie_transform(&h, &h.like(), 6, 1.0);
    assert_eq!(max_diff(&same, &h), 0.0);
    assert_eq!(rem, 0.0);

    // with {I, α} = 1, {χ(α), I} = −χ'(α): the series stops after one term
    let action = Graded::scalar(grid.clone(), 1, 4, grid.sample(|i, _| C64::new(i, 0.0)));
    let chi = Graded::scalar(grid.clone(), 1, 4, grid.sample(|_, a| C64::new(0.1 * (2.0 * a).sin(), 0.0)));
    let (out, rem) = lie_transform(&action, &chi, 1, 1.0);
    let expected = Graded::scalar(grid.clone(), 1, 4, grid.sample(|i, a| C64::new(i - 0.2 * (2.0 * a).cos(), 0.0)));
    assert!(max_diff(&out, &expected) < 1e-13);
    // the next term vanishes analytically; numerically ∂_I I = 1 only to round-off,
    // and the following ∂_I amplifies that row-to-row noise
    assert!(rem < 1e-9, "{rem}");
}

#[test]
fn lie_transform_is_canonical() {
    // few action nodes keep the differentiation round-off small; the error is
    // dominated by series and degree truncation, hence the generous cap and order
    let grid = Arc::new(SpectralGrid::new(0.3, 0.5, 6, 256, 64).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, cap, order) = (2, 12, 10);
    for _ in 0..3 {
        let chi = random_graded(&mut rng, &grid, n, cap, 1, 1, 2, 0.005);
        let f = random_graded(&mut rng, &grid, n, cap, 1, 2, 2, 1.0);
        let g = random_graded(&mut rng, &grid, n, cap, 1, 2, 2, 1.0);
        let lhs = poisson_bracket(&lie_transform(&f, &chi, order, 1.0).0, &lie_transform(&g, &chi, order, 1.0).0);
        let rhs = lie_transform(&poisson_bracket(&f, &g), &chi, order, 1.0).0;
        let d = max_diff(&lhs, &rhs);
        assert!(d < 1e-8, "{d}");
    }
}

/// Time-one map of `ẋ = {χ, x}` for a generator of ξ-degree ≤ 1, by RK4.
fn flow_of_generator(chi: &Graded, action: f64, alpha: f64, z: &[C64], w: &[C64], steps: usize) -> (f64, f64, Vec<C64>, Vec<C64>) {
    let grid = chi.grid().clone();
    let n = chi.sites();
    let with = |f: &dyn Fn(&Field) -> Field| {
        let mut g = chi.like();
        for (m, c) in chi.terms() {
            g.add_term(m.clone(), f(c));
        }
        g
    };
    let chi_i = with(&|c| grid.d_action(c));
    let chi_a = with(&|c| grid.d_alpha(c));
    let slots = 2 * n;
    let coef = |m: &Monomial| chi.coefficient(m).cloned();
    let zc: Vec<Option<Field>> = (0..slots).map(|s| coef(&Monomial::z(n, Monomial::site(n, s)))).collect();
    let wc: Vec<Option<Field>> = (0..slots).map(|s| coef(&Monomial::w(n, Monomial::site(n, s)))).collect();
    let rhs = |x: &(f64, f64, Vec<C64>, Vec<C64>)| {
        let di = -chi_a.evaluate(x.0, x.1, &x.2, &x.3).re;
        let da = chi_i.evaluate(x.0, x.1, &x.2, &x.3).re;
        let at = |c: &Option<Field>| c.as_ref().map(|c| grid.eval(c, x.0, x.1)).unwrap_or_default();
        // ż = −i χ_w, ẇ = i χ_z
        let dz: Vec<C64> = wc.iter().map(|c| -C64::i() * at(c)).collect();
        let dw: Vec<C64> = zc.iter().map(|c| C64::i() * at(c)).collect();
        (di, da, dz, dw)
    };
    let add = |x: &(f64, f64, Vec<C64>, Vec<C64>), k: &(f64, f64, Vec<C64>, Vec<C64>), h: f64| {
        (
            x.0 + h * k.0,
            x.1 + h * k.1,
            x.2.iter().zip(&k.2).map(|(a, b)| a + b * h).collect::<Vec<_>>(),
            x.3.iter().zip(&k.3).map(|(a, b)| a + b * h).collect::<Vec<_>>(),
        )
    };
    let mut x = (action, alpha, z.to_vec(), w.to_vec());
    let h = 1.0 / steps as f64;
    for _ in 0..steps {
        let k1 = rhs(&x);
        let k2 = rhs(&add(&x, &k1, 0.5 * h));
        let k3 = rhs(&add(&x, &k2, 0.5 * h));
        let k4 = rhs(&add(&x, &k3, h));
        let sum = (
            k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0,
            k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1,
            (0..slots).map(|s| k1.2[s] + 2.0 * k2.2[s] + 2.0 * k3.2[s] + k4.2[s]).collect(),
            (0..slots).map(|s| k1.3[s] + 2.0 * k2.3[s] + 2.0 * k3.3[s] + k4.3[s]).collect(),
        );
        x = add(&x, &sum, h / 6.0);
    }
    x
}

#[test]
fn lie_series_matches_integrated_generator_flow() {
    let nf = &family()[2];
    let n = nf.config.sites;
    let grid = nf.grid().clone();
    let (action, alpha) = (0.4, 0.3);
    let z: Vec<C64> = (0..2 * n).map(|s| C64::new(0.02 / (1 + s) as f64, -0.01)).collect();
    let w: Vec<C64> = z.iter().map(|v| v.conj()).collect();
    let tests = [
        Graded::scalar(grid.clone(), n, 4, nf.initial.q0.clone()),
        q_site(&grid, n, 4, 1),
        p_site(&grid, n, 4, -1),
    ];
    for chi in &nf.generators {
        let end = flow_of_generator(chi, action, alpha, &z, &w, 40);
        for f in &tests {
            let series = lie_transform(f, chi, nf.config.lie_order, 1.0).0.evaluate(action, alpha, &z, &w);
            let direct = f.evaluate(end.0, end.1, &end.2, &end.3);
            assert!((series - direct).norm() < 1e-7, "{series} vs {direct}");
        }
    }
}

#[test]
fn every_step_back_substitutes_and_stays_real() {
    for nf in family() {
        for r in &nf.reports[1..] {
            assert!(r.back_substitution < 1e-10, "{r:?}");
            assert!(r.min_divisor > nf.config.divisor_floor);
        }
        assert!(nf.hamiltonian.reality_defect() < 1e-12, "{}", nf.hamiltonian.reality_defect());
        assert!(nf.reports.iter().all(|r| r.reality_defect < 1e-6), "{:?}", nf.reports);
        assert!(nf.generators.iter().all(|g| g.reality_defect() < 1e-12));
        assert!(nf.hamiltonian.dropped.fourier < nf.config.truncation_threshold);
    }
}

#[test]
fn two_step_residual_scales_like_eps_three_halves() {
    let r2: Vec<f64> = family().iter().map(|nf| nf.reports[2].residual_norm).collect();
    let s = slope(&EPS, &r2);
    assert!((s - 1.5).abs() < 0.15, "{s}");
    // the initial residual is dominated by the ξ-linear coupling, ~√ε
    let r0: Vec<f64> = family().iter().map(|nf| nf.reports[0].residual_norm).collect();
    assert!((slope(&EPS[..3], &r0[..3]) - 0.5).abs() < 0.1);
}

#[test]
fn first_step_leaves_linear_part_of_order_eps_three_halves() {
    // the ξ-linear part after step 1 equals that after step 2 (step 2 only touches ξ = 0)
    let lin: Vec<f64> = family().iter().map(|nf| nf.r1().vector_field_norm(nf.eps.sqrt())).collect();
    let s = slope(&EPS, &lin);
    assert!((s - 1.5).abs() < 0.15, "{s}");
}

#[test]
fn h2_is_first_order_average_of_coupling() {
    // h₂ = ε⟨q₀²⟩ + O(ε²)
    let dev: Vec<f64> = family()
        .iter()
        .map(|nf| {
            let grid = nf.grid();
            let h2: Vec<f64> = nf.hs.iter().zip(&nf.initial.hs0).map(|(a, b)| a - b).collect();
            let q2: Field = nf.initial.q0.iter().map(|v| v * v).collect();
            let avg = grid.alpha_mean(&q2);
            let a = grid.alpha_points();
            h2.iter().enumerate().map(|(g, v)| (v - nf.eps * avg[g * a].re).abs()).fold(0.0, f64::max)
        })
        .collect();
    let s = slope(&EPS[..3], &dev[..3]);
    assert!((s - 2.0).abs() < 0.3, "{s} {dev:?}");
    let h: Vec<f64> = family().iter().map(|nf| nf.reports[2].h_norm).collect();
    assert!(h.iter().zip(&EPS).all(|(h, e)| h / e < 1.0));
}

#[test]
fn invariant_manifold_defect_after_first_step() {
    let cfg = NormalFormConfig::default();
    let defects: Vec<f64> = EPS
        .iter()
        .map(|&e| invariant_manifold_check(&normalize_until(build_initial(quartic8(), e, &cfg).unwrap(), &cfg, 1).unwrap()).xi)
        .collect();
    assert!(slope(&EPS, &defects) >= 1.5, "{defects:?}");
    let zero = normalize(build_initial(quartic8(), 0.0, &cfg).unwrap(), &cfg).unwrap();
    let d = invariant_manifold_check(&zero);
    assert_eq!((d.xi, d.action, d.action_linear), (0.0, 0.0, 0.0));
}

#[test]
fn action_component_vanishes_quadratically_at_xi_zero() {
    // X_I and ∂_ξ X_I at ξ = 0 are the truncation-level residual sizes
    let d: Vec<ManifoldDefect> = family().iter().map(invariant_manifold_check).collect();
    let a: Vec<f64> = d.iter().map(|d| d.action).collect();
    let al: Vec<f64> = d.iter().map(|d| d.action_linear).collect();
    assert!(slope(&EPS[..3], &a[..3]) > 1.5, "{a:?}");
    assert!(slope(&EPS[..3], &al[..3]) > 1.5, "{al:?}");
    for nf in family() {
        let z = nf.z();
        assert!(z.terms().all(|(m, _)| m.degree() >= 2));
    }
}

#[test]
fn quadratic_core_is_unchanged_to_order_three_halves() {
    let devs: Vec<f64> = family()
        .iter()
        .map(|nf| {
            let q_now = nf.z().degree_part(2);
            let q_then = nf.initial.z2.degree_part(2);
            q_now.minus(&q_then).vector_field_norm(nf.eps.sqrt())
        })
        .collect();
    assert!(slope(&EPS, &devs) >= 1.5, "{devs:?}");
}

#[test]
fn transformation_size_bounded_by_sqrt_eps() {
    let sizes: Vec<f64> = family().iter().map(|nf| transformation_size(nf).1).collect();
    assert!(slope(&EPS, &sizes) >= 0.5, "{sizes:?}");
}

#[test]
fn higher_steps_gain_at_least_half_order_each() {
    let cfg = NormalFormConfig { steps: 4, ..NormalFormConfig::default() };
    let eps = [0.0125, 0.025, 0.05];
    let runs: Vec<NormalForm> = eps.iter().map(|&e| normalize(build_initial(quartic8(), e, &cfg).unwrap(), &cfg).unwrap()).collect();
    for r in [3usize, 4] {
        let res: Vec<f64> = runs.iter().map(|nf| nf.reports[r].residual_norm).collect();
        let s = slope(&eps, &res);
        assert!(s >= (r as f64 + 1.0) / 2.0 - 0.15, "r = {r}: {s}");
    }
    for nf in &runs {
        assert!(nf.reports.iter().skip(1).all(|r| r.back_substitution < 1e-10));
    }
}

#[test]
fn report_csv_round_trip() {
    let nf = &family()[1];
    let mut buf = Vec::new();
    nf.write_report(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("step,residual_norm,h_norm,z_norm,min_divisor"));
    let back = read_report(&buf[..]).unwrap();
    assert_eq!(back.len(), nf.reports.len());
    for (a, b) in back.iter().zip(&nf.reports) {
        assert_eq!(a.step, b.step);
        assert!((a.residual_norm - b.residual_norm).abs() <= 1e-11 * b.residual_norm);
    }
}

#[test]
fn zero_coupling_reconstruction_is_the_seed() {
    let cfg = NormalFormConfig::default();
    let nf = normalize(build_initial(quartic8(), 0.0, &cfg).unwrap(), &cfg).unwrap();
    let omega = quartic8().omega0(0.4).unwrap();
    let (action, state) = reconstruct_breather_from_nf(&nf, omega).unwrap();
    assert!((action - 0.4).abs() < 1e-9, "{action}");
    let seed = anti_continuum_seed(quartic8(), 0.4, &BreatherConfig { n: cfg.sites, ..BreatherConfig::default() }).unwrap();
    assert!(state.sub(&seed.point).unwrap().l2() < 1e-9);
}

#[test]
fn reconstructed_orbit_polishes_to_the_continued_breather() {
    let bc = BreatherConfig { n: 24, ..BreatherConfig::default() };
    let seed = anti_continuum_seed(quartic8(), 0.4, &bc).unwrap();
    let b = continue_breather(&seed, 0.05, 0.01, 1e-10, &bc).unwrap();
    let nf = &family()[2];
    let (_, state) = reconstruct_breather_from_nf(nf, TAU / b.period).unwrap();
    let guess = state.resized(bc.n);
    let defect = periodicity_defect(&b.model(), &guess, b.period, bc.residual_steps, &bc.scheme).unwrap();
    assert!(defect < 10.0 * 0.05f64.powf(1.5), "{defect}");
    let (polished, report) = polish(&b, &guess, 1e-10, &bc).unwrap();
    assert!(report.iterations <= 3);
    assert!(polished.point.sub(&b.point).unwrap().l2() < 1e-8);
}

#[test]
fn transported_coordinates_stay_canonical() {
    // {p₁, q₁} = 1 after transport, up to the Lie-series remainder
    let mut errs = Vec::new();
    for nf in family() {
        let b = transported_bracket(nf, 1);
        let c = b.coefficient(&Monomial::one(nf.config.sites)).unwrap();
        let err = c.iter().map(|v| (v - 1.0).norm()).fold(0.0, f64::max);
        let rem = nf.reports.iter().map(|r| r.lie_remainder).fold(0.0, f64::max);
        assert!(err <= 10.0 * rem, "ε = {}: {err} vs remainder {rem}", nf.eps);
        errs.push(err);
    }
    assert!(errs[0] < 1e-9);
    assert!(slope(&EPS, &errs) > 3.0, "{errs:?}");
}

#[test]
fn frequency_matching_rejects_out_of_range() {
    let nf = &family()[0];
    assert!(matches!(nf.action_for_frequency(5.0), Err(Error::OutOfRange { .. })));
}
