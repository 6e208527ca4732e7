use wkam_core::evolve::{
    convexity_defect, linearized_step, normalize_spec, solve_adjoint, solve_cauchy_regularized,
    solve_ergodic, CauchyOptions, ErgodicOptions,
};
use wkam_core::grid::{mollify, Dissipation};
use wkam_core::potential::{ExprField, ScalarField, TrigPolynomial};
use wkam_core::{
    apply_coupling, CouplingMatrix, GridFunction, Hamiltonian, HamiltonianSpec, PeriodicGrid,
    Potential,
};

fn single_well(m: usize) -> HamiltonianSpec {
    HamiltonianSpec::quadratic(
        Potential::uniform(1, m, ScalarField::Trig(TrigPolynomial::sin_squared(1, 1))).unwrap(),
    )
}

fn shifted_sine() -> HamiltonianSpec {
    let field = ExprField::parse("2 + sin(2*PI*x)", 1).unwrap();
    HamiltonianSpec::quadratic(Potential::uniform(1, 1, ScalarField::Expr(field)).unwrap())
}

/// Semi-Lagrangian discounted value iteration for the single equation with
/// `L = q²/2 + f`: `u(x) = min_q { dt L(x, q) + e^{-α dt} u(x + q dt) }`,
/// linear interpolation in `x`. Returns `-α min_x u`, which tends to the
/// ergodic constant as `α, dt → 0`.
fn semi_lagrangian_lambda(f: impl Fn(f64) -> f64, n: usize, alpha: f64, dt: f64) -> f64 {
    let h = 1.0 / n as f64;
    let fx: Vec<f64> = (0..n).map(|k| f(k as f64 * h)).collect();
    let speeds: Vec<f64> = (-30..=30).map(|k| k as f64 * 0.1).collect();
    let decay = (-alpha * dt).exp();
    let mut u = vec![fx.iter().copied().fold(f64::INFINITY, f64::min) / alpha; n];
    loop {
        let mut next = vec![0.0; n];
        let mut change: f64 = 0.0;
        for k in 0..n {
            let mut best = f64::INFINITY;
            for &q in &speeds {
                let y = (k as f64 + q * dt / h).rem_euclid(n as f64);
                let j = y.floor() as usize % n;
                let frac = y - y.floor();
                let uy = (1.0 - frac) * u[j] + frac * u[(j + 1) % n];
                best = best.min(dt * (0.5 * q * q + fx[k]) + decay * uy);
            }
            next[k] = best;
            change = change.max((best - u[k]).abs());
        }
        u = next;
        if change < 1e-10 {
            break;
        }
    }
    -alpha * u.iter().copied().fold(f64::INFINITY, f64::min)
}

#[test]
fn ergodic_constants() {
    let c2 = CouplingMatrix::uniform(2, 1.0).unwrap();
    let g64 = PeriodicGrid::new(1, 64, 2).unwrap();
    let opts = ErgodicOptions::default();

    let sol = solve_ergodic(&single_well(2), &c2, &g64, &opts).unwrap();
    assert!(sol.lambda.abs() <= 0.02, "{}", sol.lambda);
    assert!(sol.residual <= opts.tolerance);
    assert!(!sol.flagged, "{} vs {}", sol.lambda, sol.lambda_long_time);
    assert!(sol.v.mean().abs() < 1e-12);

    // Potential f + 1, i.e. H shifted by -1.
    let plus_one = single_well(2).with_shift(-1.0);
    let shifted = solve_ergodic(&plus_one, &c2, &g64, &opts).unwrap();
    assert!((shifted.lambda + 1.0).abs() <= 0.02);
    assert!((shifted.lambda - (sol.lambda - 1.0)).abs() <= 1e-8);
    assert!(shifted.v.max_abs_diff(&sol.v).unwrap() < 1e-8);

    let g512 = PeriodicGrid::new(1, 512, 1).unwrap();
    let c1 = CouplingMatrix::uniform(1, 0.0).unwrap();
    let single = solve_ergodic(&shifted_sine(), &c1, &g512, &opts).unwrap();
    assert!((single.lambda + 1.0).abs() <= 0.02, "{}", single.lambda);
}

#[test]
fn semi_lagrangian_oracle_agrees() {
    // The oracle first reproduces -min f = -1; refining it moves it closer.
    let f = |x: f64| 2.0 + (2.0 * std::f64::consts::PI * x).sin();
    let coarse = semi_lagrangian_lambda(f, 128, 0.2, 0.02);
    let fine = semi_lagrangian_lambda(f, 512, 0.1, 0.01);
    assert!((fine + 1.0).abs() < 0.02, "{fine}");
    assert!((fine + 1.0).abs() <= (coarse + 1.0).abs() + 1e-12);
    let g = PeriodicGrid::new(1, 512, 1).unwrap();
    let c1 = CouplingMatrix::uniform(1, 0.0).unwrap();
    let sol = solve_ergodic(&shifted_sine(), &c1, &g, &ErgodicOptions::default()).unwrap();
    assert!((sol.lambda - fine).abs() <= 0.02);
}

#[test]
fn normalization() {
    let c2 = CouplingMatrix::uniform(2, 1.0).unwrap();
    let g = PeriodicGrid::new(1, 64, 2).unwrap();
    let opts = ErgodicOptions::default();
    let spec = single_well(2);
    assert_eq!(normalize_spec(&spec, 0.0).shift, spec.shift);

    let plus_one = single_well(2).with_shift(-1.0);
    let lam = solve_ergodic(&plus_one, &c2, &g, &opts).unwrap().lambda;
    let normalized = normalize_spec(&plus_one, lam);
    let again = solve_ergodic(&normalized, &c2, &g, &opts).unwrap().lambda;
    assert!(again.abs() <= 0.02);
    let twice = normalize_spec(&normalized, again);
    let third = solve_ergodic(&twice, &c2, &g, &opts).unwrap().lambda;
    assert!(third.abs() <= 10.0 * opts.tolerance, "{third}");
}

#[test]
fn cauchy_converges_to_stationary_solution() {
    let c2 = CouplingMatrix::uniform(2, 1.0).unwrap();
    let g = PeriodicGrid::new(1, 64, 2).unwrap();
    let spec = single_well(2);
    let sol = solve_ergodic(&spec, &c2, &g, &ErgodicOptions::default()).unwrap();
    let spec = normalize_spec(&spec, sol.lambda_long_time);
    let mut deviations = Vec::new();
    for eps in [0.2f64, 0.1, 0.05] {
        let init = mollify(&sol.v, eps.powi(4)).unwrap();
        let run = solve_cauchy_regularized(&spec, &c2, eps, &init, &CauchyOptions::default())
            .unwrap();
        deviations.push(run.slab.max_deviation(&sol.v).unwrap());
    }
    assert!(deviations[0] > deviations[1] && deviations[1] > deviations[2], "{deviations:?}");
}

#[test]
fn adjoint_conservation_and_pairing() {
    let c2 = CouplingMatrix::uniform(2, 1.0).unwrap();
    let g = PeriodicGrid::new(1, 32, 2).unwrap();
    let spec = single_well(2);
    let eps = 0.2;
    let init = GridFunction::from_fn(g, |x, i| {
        0.3 * (2.0 * std::f64::consts::PI * x[0]).cos() + 0.1 * i as f64
    });
    let run = solve_cauchy_regularized(&spec, &c2, eps, &init, &CauchyOptions::default()).unwrap();
    let sigma = solve_adjoint(&spec, &c2, eps, &run.slab, 5, 1).unwrap();
    assert!(sigma.max_mass_error <= 1e-10);
    assert!(sigma.min_before_clip >= -1e-12);
    for n in 0..sigma.slab.len() {
        assert!((sigma.mass(n) - 1.0).abs() <= 1e-10);
    }

    let mut w = GridFunction::from_fn(g, |x, i| (x[0] * 7.0).sin() - i as f64);
    let h = g.h();
    let pairing = |w: &GridFunction, n: usize| -> f64 {
        w.values()
            .iter()
            .zip(sigma.slab.frame(n).values())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * h
    };
    let start = pairing(&w, 0);
    for n in 0..run.steps {
        w = linearized_step(&spec, &c2, eps, run.dt, run.slab.frame(n), &w).unwrap();
        let p = pairing(&w, n + 1);
        assert!((p - start).abs() <= 1e-12 * (1.0 + start.abs()), "step {n}: {p} vs {start}");
    }
    // The last pairing reads off w at the source.
    assert!((pairing(&w, run.steps) - w.get(5, 1)).abs() < 1e-12);
}

struct Concave;

impl Hamiltonian for Concave {
    fn dim(&self) -> usize {
        1
    }
    fn components(&self) -> usize {
        1
    }
    fn value(&self, _x: &[f64], p: &[f64], _i: usize) -> f64 {
        -0.5 * p[0] * p[0]
    }
    fn grad_p(&self, _x: &[f64], p: &[f64], _i: usize, out: &mut [f64]) {
        out[0] = -p[0];
    }
    fn grad_x(&self, _x: &[f64], _p: &[f64], _i: usize, out: &mut [f64]) {
        out[0] = 0.0;
    }
}

#[test]
fn defect_detects_nonconvexity() {
    let g = PeriodicGrid::new(1, 128, 1).unwrap();
    let c = CouplingMatrix::uniform(1, 0.0).unwrap();
    let eps = 0.5;
    let bump = GridFunction::from_fn(g, |x, _| 0.2 * (2.0 * std::f64::consts::PI * x[0]).sin());
    let flat = GridFunction::zeros(g);
    let opts = CauchyOptions {
        dissipation: Some(Dissipation::Global(2.0)),
        theta: Some(2.0),
        ..Default::default()
    };
    let convex = HamiltonianSpec::quadratic(Potential::zero(1, 1));
    let u1 = solve_cauchy_regularized(&convex, &c, eps, &bump, &opts).unwrap();
    let u2 = solve_cauchy_regularized(&convex, &c, eps, &flat, &opts).unwrap();
    let convex_defect = convexity_defect(&convex, &c, eps, &u1.slab, &u2.slab).unwrap();

    let u1 = solve_cauchy_regularized(&Concave, &c, eps, &bump, &opts).unwrap();
    let u2 = solve_cauchy_regularized(&Concave, &c, eps, &flat, &opts).unwrap();
    let concave_defect = convexity_defect(&Concave, &c, eps, &u1.slab, &u2.slab).unwrap();
    // Concave: (p1 - p2)² / 2 with |p1| up to 0.4π. Convex: only the
    // viscous part of the flux, θ h |u''| / 2 ≤ 0.8π² h.
    assert!(concave_defect.max > 0.3, "{}", concave_defect.max);
    assert!(convex_defect.max <= 0.8 * std::f64::consts::PI.powi(2) * g.h() + 1e-12);
    assert!(convex_defect.max < 0.15 * concave_defect.max, "{}", convex_defect.max);
}

#[test]
fn coupling_of_component_constant_data_vanishes() {
    let g = PeriodicGrid::new(1, 64, 2).unwrap();
    let c = CouplingMatrix::uniform(2, 1.0).unwrap();
    let v = GridFunction::from_fn(g, |x, _| x[0] * (1.0 - x[0]));
    assert_eq!(apply_coupling(&c, &v).unwrap().max_abs(), 0.0);
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig { cases: 16, failure_persistence: None, ..Default::default() })]

    #[test]
    fn adjoint_density_stays_a_probability(
        a in -0.5f64..0.5,
        b in -0.5f64..0.5,
        coupling in 0.0f64..2.0,
        source in 0usize..16,
        component in 0usize..2,
    ) {
        let c = CouplingMatrix::uniform(2, coupling).unwrap();
        let g = PeriodicGrid::new(1, 16, 2).unwrap();
        let init = GridFunction::from_fn(g, |x, i| {
            let t = 2.0 * std::f64::consts::PI * x[0];
            a * t.cos() + b * (2.0 * t).sin() + 0.1 * i as f64
        });
        let run = solve_cauchy_regularized(&single_well(2), &c, 0.3, &init, &CauchyOptions::default()).unwrap();
        let sigma = solve_adjoint(&single_well(2), &c, 0.3, &run.slab, source, component).unwrap();
        proptest::prop_assert!(sigma.max_mass_error <= 1e-10);
        proptest::prop_assert!(sigma.min_before_clip >= -1e-12);
        for n in 0..sigma.slab.len() {
            proptest::prop_assert!(sigma.slab.frame(n).values().iter().all(|v| *v >= 0.0));
        }
    }
}
