use super::*;
use crate::grid::GridSpace;

fn prefs() -> Preferences {
    Preferences::new(-5.0).unwrap()
}

fn constant_market() -> MarketSpec {
    MarketSpec::constant(0.05, 0.30, 0.2777).unwrap()
}

fn cev_market() -> MarketSpec {
    MarketSpec::clamped_cev(0.05, 0.3, 10.0, -0.4, 6.0, 0.15, 0.45).unwrap()
}

fn grid(n_t: usize, n_y: usize) -> Grid2D {
    let y0 = 10f64.ln();
    Grid2D::uniform(10.0, n_t, y0 - 2.0, y0 + 2.0, n_y, GridSpace::Log).unwrap()
}

/// Classical fourth-order Runge–Kutta on `v' = −k v − 1`, backwards from `v(T) = 1`.
fn rk4(k: f64, tau: f64, steps: usize) -> f64 {
    let h = tau / steps as f64;
    // in time-to-go, dv/dτ = k v + 1
    let f = |v: f64| k * v + 1.0;
    let mut v = 1.0;
    for _ in 0..steps {
        let k1 = f(v);
        let k2 = f(v + 0.5 * h * k1);
        let k3 = f(v + 0.5 * h * k2);
        let k4 = f(v + h * k3);
        v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    v
}

#[test]
fn closed_form_matches_runge_kutta() {
    let k = constant_k(0.05, 0.2777, 0.02, &prefs());
    assert!((k + 0.050355).abs() < 5e-7, "k = {k}");
    assert!((constant_v(k, 10.0) - 8.46).abs() < 5e-3);
    for tau in [0.0, 0.3, 1.0, 4.5, 10.0] {
        let exact = constant_v(k, tau);
        assert!((exact - rk4(k, tau, 20_000)).abs() / exact < 1e-10);
    }
    assert_eq!(constant_v(0.0, 3.0), 4.0);
    assert!((constant_v(1e-13, 3.0) - 4.0).abs() < 1e-11);
}

#[test]
fn fd_matches_closed_form_on_fine_time_grid() {
    let report = self_test(0.05, 0.30, 0.2777, 0.02, &prefs(), 10.0, 1e-3).unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
    assert!(report.max_pi_error < 1e-9, "{report:?}");
}

#[test]
fn fd_zero_potential_gives_linear_v() {
    // pick ρ so that k vanishes
    let p = prefs();
    let (r, theta) = (0.05, 0.2777);
    let rho = -5.0 * r + 0.5 * -5.0 * p.p() * theta * theta;
    assert!(constant_k(r, theta, rho, &p).abs() < 1e-15);
    let g = grid(101, 9);
    let vf = solve_v_fd(
        &constant_market(),
        &p,
        &RateSource::Constant(rho),
        &g,
        &FdParams::default(),
    )
    .unwrap();
    for (n, &t) in g.t_nodes().iter().enumerate() {
        for i in 0..9 {
            assert!((vf.v.at(n, i) - (1.0 + 10.0 - t)).abs() < 1e-10);
        }
    }
}

#[test]
fn fd_second_order_in_time() {
    let p = prefs();
    let k = constant_k(0.05, 0.2777, 0.02, &p);
    let err = |n_t: usize| {
        let g = grid(n_t, 5);
        let vf = solve_v_fd(
            &constant_market(),
            &p,
            &RateSource::Constant(0.02),
            &g,
            &FdParams::default(),
        )
        .unwrap();
        (vf.v.at(0, 2) - constant_v(k, 10.0)).abs()
    };
    let (e1, e2) = (err(21), err(41));
    let ratio = e1 / e2;
    assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}, errors {e1} {e2}");
}

#[test]
fn terminal_row_and_strategy_at_horizon() {
    let p = prefs();
    let d = DiscountSpec::generalized_hyperbolic(1.0, 0.02, 0.02).unwrap();
    let g = grid(41, 41);
    let vf = solve_v_fd(
        &cev_market(),
        &p,
        &RateSource::Precommitment(&d),
        &g,
        &FdParams::default(),
    )
    .unwrap();
    assert_eq!(vf.kind, ValueKind::Precommitment);
    assert!(vf.v.row(40).iter().all(|&v| v == 1.0));
    assert!(vf.v.min() > 0.0);
    let st = extract_strategies(&vf, &cev_market(), &p);
    assert!(st.c.row(40).iter().all(|&c| c == 1.0));
    assert!(st.pi.values().iter().all(|p| p.is_finite()));
}

#[test]
fn constant_market_pi_is_merton_for_both_kinds() {
    let p = prefs();
    let d = DiscountSpec::generalized_hyperbolic(1.0, 0.02, 0.02).unwrap();
    let g = grid(41, 21);
    let q = RateField::constant(g.clone(), 0.03);
    for rate in [RateSource::Precommitment(&d), RateSource::Field(&q)] {
        let vf = solve_v_fd(&constant_market(), &p, &rate, &g, &FdParams::default()).unwrap();
        let st = extract_strategies(&vf, &constant_market(), &p);
        for &pi in st.pi.values() {
            assert!((pi - 0.2777 / 1.8).abs() < 1e-9);
        }
    }
    assert!((0.2777f64 / 1.8 - 0.154278).abs() < 1e-6);
}

#[test]
fn higher_rate_means_lower_v() {
    let p = prefs();
    let g = grid(41, 21);
    let lo = RateField::constant(g.clone(), 0.02);
    let hi = RateField::new(
        Surface::new(
            g.clone(),
            g.y_nodes()
                .iter()
                .cycle()
                .take(g.len())
                .map(|y| 0.03 + 0.01 * y.sin())
                .collect(),
        )
        .unwrap(),
    )
    .unwrap();
    let v_lo = solve_v_fd(&cev_market(), &p, &RateSource::Field(&lo), &g, &FdParams::default()).unwrap();
    let v_hi = solve_v_fd(&cev_market(), &p, &RateSource::Field(&hi), &g, &FdParams::default()).unwrap();
    // boundary rows extrapolate linearly and are excluded
    for n in 0..g.n_t() {
        for i in 1..g.n_y() - 1 {
            assert!(v_hi.v.at(n, i) <= v_lo.v.at(n, i), "node ({n}, {i})");
        }
    }
}

fn mc_settings(n_paths: usize) -> SimSettings {
    SimSettings {
        n_paths,
        n_steps_per_unit_time: 20.0,
        seed: 7,
        antithetic: true,
        quadrature: crate::simulate::Quadrature::Trapezoid,
    }
}

#[test]
fn mc_matches_closed_form() {
    let p = prefs();
    let k = constant_k(0.05, 0.2777, 0.02, &p);
    let probes = [(0.0, 1.0), (5.0, 2.3), (9.5, 4.0), (10.0, 2.0)];
    let est = solve_v_mc(
        &constant_market(),
        &p,
        &RateSource::Constant(0.02),
        10.0,
        &probes,
        &mc_settings(64),
    )
    .unwrap();
    for (e, (t, _)) in est.iter().zip(probes) {
        let exact = constant_v(k, 10.0 - t);
        // deterministic integrand: only quadrature error remains
        assert!((e.mean - exact).abs() / exact < 1e-3, "{} vs {exact}", e.mean);
    }
    assert_eq!(est[3], Estimate { mean: 1.0, se: 0.0 });
}

#[test]
fn mc_agrees_with_fd_on_cev() {
    let p = prefs();
    let d = DiscountSpec::generalized_hyperbolic(1.0, 0.02, 0.02).unwrap();
    let y0 = 10f64.ln();
    let g = Grid2D::uniform(10.0, 201, y0 - 4.0, y0 + 4.0, 161, GridSpace::Log).unwrap();
    let rate = RateSource::Precommitment(&d);
    let vf = solve_v_fd(&cev_market(), &p, &rate, &g, &FdParams::default()).unwrap();
    let probes = [(0.0, y0), (3.0, y0 - 0.5), (7.0, y0 + 0.5)];
    let est = solve_v_mc(&cev_market(), &p, &rate, 10.0, &probes, &mc_settings(4000)).unwrap();
    for (e, &(t, y)) in est.iter().zip(&probes) {
        let v = vf.v.interp(t, y);
        assert!(
            (e.mean - v).abs() <= 4.0 * e.se + 2e-3 * v,
            "t={t} y={y}: mc {e:?} fd {v}"
        );
    }
}

#[test]
fn objective_is_homogeneous_and_matches_value_function() {
    let p = prefs();
    let model = Model::new(DiscountSpec::exponential(0.02).unwrap(), constant_market(), p);
    let g = grid(101, 11);
    let vf = solve_v_fd(&model.market, &p, &RateSource::Constant(0.02), &g, &FdParams::default()).unwrap();
    let st = extract_strategies(&vf, &model.market, &p);
    let sim = mc_settings(2000);
    let j1 = evaluate_objective(&st, &model, 0.0, 10.0, 1.0, &sim).unwrap();
    let j3 = evaluate_objective(&st, &model, 0.0, 10.0, 3.0, &sim).unwrap();
    let scale = 3f64.powf(-5.0);
    assert!((j3.mean - scale * j1.mean).abs() <= 1e-12 * j3.mean.abs());
    let target = value_from_v(vf.v.at(0, 5), 1.0, &p);
    assert!(
        (j1.mean - target).abs() <= 3.0 * j1.se + 5e-3 * target.abs(),
        "{j1:?} vs {target}"
    );
}
