//! Cross-module properties: isotopy continuity, the grafted growth bound,
//! same-orbit boundedness on randomized contractions, and spectrum
//! invariance of the stable-chart projection.

use conspert::bump::make_bell;
use conspert::distortion::{distortion, distortion_sweep, stable_chart_projection, StableChart};
use conspert::extension::build_isotopy;
use conspert::interpolation::{build_interpolating_genfn, Ball};
use conspert::map::{inverse_map, DomainBox, SampledMap};
use conspert::perturb_orbit;
use conspert::probe::{rng_from_seed, sample_box};
use conspert::samples::{bump_disk_diffeo, linear_contraction, random_contraction, trig_genfn};
use nalgebra::{ComplexField, DMatrix};

#[test]
fn isotopy_members_move_continuously_in_t() {
    let psi = bump_disk_diffeo(1, Ball::new(vec![0.0], 0.5_f64), 0.02, 5).unwrap();
    let u_box = DomainBox::new(vec![-0.8, -0.3], vec![0.8, 0.3]);
    let bell = make_bell(0.25).unwrap();
    let genfn = build_interpolating_genfn(&psi, &u_box, &bell).unwrap();
    let family = build_isotopy(&genfn).unwrap();
    let mut rng = rng_from_seed(31);
    let probes = sample_box(&u_box, 10, &mut rng);
    let max_step = |steps: usize| -> f64 {
        let mut sup = 0.0_f64;
        for k in 0..steps {
            let t0 = k as f64 / steps as f64;
            let t1 = (k + 1) as f64 / steps as f64;
            for z in &probes {
                let a = family.eval_at(t0, z).unwrap();
                let b = family.eval_at(t1, z).unwrap();
                let d: f64 = a
                    .iter()
                    .zip(&b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                sup = sup.max(d);
            }
        }
        sup
    };
    let coarse = max_step(64);
    let fine = max_step(128);
    assert!(
        coarse <= 4.0 * fine + 1e-14,
        "displacement not continuous in t: step 1/64 gives {coarse:e}, step 1/128 gives {fine:e}"
    );
}

#[test]
fn grafted_growth_is_bounded_below_by_the_slope_line() {
    let f = linear_contraction::<f64>(1, 0.5).unwrap();
    let x = [0.7];
    let lambda: Vec<Vec<f64>> = (0..4).map(|k| vec![-0.85 + 0.15 * k as f64]).collect();
    let gap = 1.2_f64.ln();
    let grafted = perturb_orbit(&f, &x, &lambda, 8.0, gap).unwrap();
    let i0 = grafted.i0() as f64;
    for y in &lambda {
        let delta_i0 = if grafted.i0() > 0 {
            distortion(grafted.contraction(), &x, y, grafted.i0()).unwrap().delta
        } else {
            0.0
        };
        for rec in distortion_sweep(grafted.contraction(), &x, y, grafted.i0() + 60).unwrap() {
            let lower = (rec.n as f64 - i0) * gap - delta_i0;
            assert!(
                rec.delta >= lower - 1e-9,
                "growth bound violated at n = {}: delta = {} < {}",
                rec.n,
                rec.delta,
                lower
            );
        }
    }
}

#[test]
fn same_orbit_distortion_is_bounded_on_random_contractions() {
    for (d, seed) in [(1usize, 2u64), (2, 3)] {
        let f = random_contraction::<f64>(d, seed).unwrap();
        // sup |log Jac f| over a probe sweep of the ball, with margin.
        let mut rng = rng_from_seed(seed + 100);
        let mut sup_log = 0.0_f64;
        for p in conspert::probe::sample_ball(&vec![0.0; d], 0.999, 400, &mut rng) {
            sup_log = sup_log.max(f.log_jac(&p).unwrap().abs());
        }
        let bound_scale = 1.05 * sup_log;
        let x = vec![0.55; d];
        let mut y = x.clone();
        for k in 1..=3usize {
            y = f.eval(&y);
            let mut worst = 0.0_f64;
            for rec in distortion_sweep(&f, &x, &y, 600).unwrap() {
                worst = worst.max(rec.delta);
            }
            assert!(
                worst <= 2.0 * k as f64 * bound_scale,
                "same-orbit bound violated for k = {k}: {worst} > {}",
                2.0 * k as f64 * bound_scale
            );
        }
    }
}

#[test]
fn stable_chart_projection_preserves_the_stable_spectrum() {
    // Conjugate diag(1/2, 2) by a generated symplectomorphism; the projected
    // contraction must keep the stable eigenvalue 1/2 at the fixed point.
    let genfn = trig_genfn::<f64>(1, 0.05, 17);
    let chart_map = conspert::genfn::generate_map(&genfn, 1e-13, 60)
        .unwrap()
        .map()
        .clone();
    let model = SampledMap::linear(
        DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]),
        DomainBox::cube(2, 3.0),
    );
    let chart_inverse = inverse_map(&chart_map, 1e-13, 60);
    let f_tau = chart_map.compose(&model).compose(&chart_inverse);

    let fixed_point = chart_map.eval(&[0.0, 0.0]);
    let chart = StableChart {
        chart: chart_map,
        graph: SampledMap::new(1, 1, DomainBox::cube(1, 2.0), |_: &[f64]| vec![0.0])
            .with_jac(|_: &[f64]| DMatrix::zeros(1, 1)),
        offset: vec![0.0],
        period: 1,
        stable_dim: 1,
    };
    let theta = stable_chart_projection(&chart, &f_tau).unwrap();
    let dtheta0 = theta.jacobian(&[0.0]).unwrap();
    assert!(
        (dtheta0[(0, 0)] - 0.5).abs() <= 1e-6,
        "theta'(0) = {} instead of 1/2",
        dtheta0[(0, 0)]
    );
    // Spectrum agreement with the stable part of the ambient derivative at
    // the fixed point chart(0, 0).
    let df = f_tau.jacobian(&fixed_point).unwrap();
    let mut stable_moduli: Vec<f64> = df
        .complex_eigenvalues()
        .iter()
        .map(|z| z.modulus())
        .filter(|m| *m < 1.0)
        .collect();
    stable_moduli.sort_by(f64::total_cmp);
    let theta_moduli: Vec<f64> = dtheta0
        .complex_eigenvalues()
        .iter()
        .map(|z| z.modulus())
        .collect();
    assert_eq!(stable_moduli.len(), 1);
    assert!(
        (stable_moduli[0] - theta_moduli[0]).abs() <= 1e-8,
        "spectrum mismatch: ambient stable {stable_moduli:?}, theta {theta_moduli:?}"
    );
}
