use breather_core::breather::symplectic_defect;
use breather_core::integrator::*;
use breather_core::lattice::LatticeState;
use breather_core::numerics::fit_loglog;
use breather_core::potential::PotentialSpec;
use breather_core::Error;
use proptest::prelude::*;
use std::sync::Arc;

fn octic(eps: f64) -> ChainModel {
    ChainModel::new(PotentialSpec::monomial(8, 1.0).unwrap(), eps).unwrap()
}

fn localized(n: usize) -> LatticeState {
    LatticeState::from_fn(n, true, |k| (0.1 * (-(k as f64).abs()).exp(), 0.8 * (-(2.0 * k as f64).abs()).exp()))
}

/// Global error at t = 2 against a fine yoshida4 reference, slope in dt.
fn order_slope(name: &str) -> f64 {
    let model = octic(0.1);
    let s0 = localized(4);
    let reference = flow(&model, &Composition::yoshida4(), &s0, 1e-4, 2.0);
    let sch = scheme(name).unwrap();
    let dts = [0.04, 0.02, 0.01, 0.005];
    let errs: Vec<f64> = dts.iter().map(|&dt| flow(&model, sch.as_ref(), &s0, dt, 2.0).sub(&reference).unwrap().l2()).collect();
    fit_loglog(&dts, &errs).unwrap().slope
}

#[test]
fn convergence_orders() {
    let s2 = order_slope("strang2");
    let s4 = order_slope("yoshida4");
    assert!((s2 - 2.0).abs() < 0.2, "{s2}");
    assert!((s4 - 4.0).abs() < 0.2, "{s4}");
}

/// Relative energy error over `[0, 400]`, one value per sample.
fn energy_errors(dt: f64) -> Vec<f64> {
    let model = octic(0.05);
    let cfg = IntegratorConfig { dt, scheme: "yoshida4".into(), t_final: 400.0 };
    let mut obs: Vec<Box<dyn Observer>> = vec![Box::new(energy_observer(model.clone()))];
    let stride = (10.0 / dt).round() as usize;
    let (_, rec) = evolve(&model, &cfg, &localized(16), stride, &mut obs).unwrap();
    assert_eq!(rec.times.len(), 41);
    let e = rec.series("energy").unwrap();
    e.iter().map(|v| (v - e[0]).abs() / e[0]).collect()
}

#[test]
fn energy_error_is_bounded_not_drifting() {
    let coarse = energy_errors(0.025);
    let fine = energy_errors(0.0125);
    let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    // no secular growth: the second half is no worse than the first
    assert!(max(&fine[21..]) <= 2.0 * max(&fine[..21]), "{fine:?}");
    // fourth order: halving dt divides the error by about 16
    let ratio = max(&coarse) / max(&fine);
    assert!((10.0..=24.0).contains(&ratio), "{ratio}");
    assert!(max(&fine) < 1e-6);
}

#[test]
fn custom_schemes_register_by_name() {
    let mut reg = SchemeRegistry::default();
    // Strang weights written out: same scheme under another name
    let custom = Composition::new("lie-trotter-sym", 2, Composition::strang2().weights().to_vec()).unwrap();
    reg.register(Arc::new(custom));
    assert!(reg.names().contains(&"lie-trotter-sym".to_string()));
    let model = octic(0.1);
    let s0 = localized(3);
    let a = flow(&model, reg.get("lie-trotter-sym").unwrap().as_ref(), &s0, 0.05, 1.0);
    let b = flow(&model, reg.get("strang2").unwrap().as_ref(), &s0, 0.05, 1.0);
    assert_eq!(a, b);
    assert!(matches!(scheme("leapfrog9"), Err(Error::InvalidInput(_))));
}

#[test]
fn observers_write_long_csv() {
    let model = octic(0.1);
    let cfg = IntegratorConfig { dt: 0.05, scheme: "strang2".into(), t_final: 0.5 };
    let mut obs: Vec<Box<dyn Observer>> = vec![
        Box::new(energy_observer(model.clone())),
        Box::new(FnObserver::new("q0", |_, s: &LatticeState| s.q_at(0))),
    ];
    let (_, rec) = evolve(&model, &cfg, &localized(2), 5, &mut obs).unwrap();
    let mut buf = Vec::new();
    rec.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("t,observable,value"));
    assert_eq!(text.lines().count(), 1 + 3 * 2);
}

#[test]
fn step_size_guard() {
    let model = octic(0.1);
    let cfg = IntegratorConfig { dt: 1.0, scheme: "yoshida4".into(), t_final: 1.0 };
    assert!(evolve_with(&model, &cfg, &localized(2), 1, |_, _| Ok(())).is_err());
    let cfg = IntegratorConfig { dt: 0.05, scheme: "nope".into(), t_final: 1.0 };
    assert!(evolve_with(&model, &cfg, &localized(2), 1, |_, _| Ok(())).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn flow_is_time_reversible(a in 0.0f64..0.6, eps in 0.0f64..0.2, t in 0.1f64..3.0) {
        let model = octic(eps);
        let s0 = LatticeState::from_fn(3, true, |k| (0.1 * a * k as f64, a * (-(k as f64).abs()).exp()));
        for name in ["strang2", "yoshida4"] {
            let sch = scheme(name).unwrap();
            let fwd = flow(&model, sch.as_ref(), &s0, 0.02, t);
            let back = flow(&model, sch.as_ref(), &fwd, 0.02, -t);
            prop_assert!(back.sub(&s0).unwrap().l2() < 1e-12);
        }
    }

    #[test]
    fn discrete_flow_is_symplectic(a in 0.0f64..0.6, eps in 0.0f64..0.2) {
        let model = octic(eps);
        let s0 = LatticeState::from_fn(2, true, |k| (0.05, a / (1 + k * k) as f64));
        let (_, m) = flow_with_jacobian(&model, &Composition::yoshida4(), &s0, 0.05, 1.0);
        prop_assert!(symplectic_defect(&m) < 1e-11, "{}", symplectic_defect(&m));
    }
}
