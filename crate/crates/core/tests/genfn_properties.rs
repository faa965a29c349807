//! Crate-level properties of the generating-function correspondence: round
//! trips, the small-field limit, and symplecticity of everything the
//! implicit solve produces.

use conspert::genfn::{certify_symplectic, generate_map, genfn_from_map, identity_genfn};
use conspert::map::DomainBox;
use conspert::probe::{c1_distance_to_identity, grid_mesh, rng_from_seed, sample_box};
use conspert::samples::trig_genfn;
use conspert::GeneratingFunction;

#[test]
fn round_trip_gradients_agree_for_small_fields() {
    for n in [1usize, 2] {
        for seed in [3u64, 5, 8] {
            let s = trig_genfn::<f64>(n, 0.02, seed);
            let h = generate_map(&s, 1e-12, 60).unwrap();
            let recovered = genfn_from_map(h.map(), &vec![0.0; 2 * n]).unwrap();
            let probes = grid_mesh(recovered.domain(), 3);
            let mut worst = 0.0_f64;
            for p in &probes {
                let (gu_a, geta_a) = s.grad(&p[..n], &p[n..]);
                let (gu_b, geta_b) = recovered.grad(&p[..n], &p[n..]);
                for i in 0..n {
                    worst = worst.max((gu_a[i] - gu_b[i]).abs());
                    worst = worst.max((geta_a[i] - geta_b[i]).abs());
                }
            }
            assert!(
                worst <= 1e-6,
                "round-trip gradient gap {worst:e} (n = {n}, seed {seed})"
            );
        }
    }
}

#[test]
fn generated_maps_pass_the_symplectic_certificate_densely() {
    let s = trig_genfn::<f64>(2, 0.05, 12);
    let h = generate_map(&s, 1e-12, 60).unwrap();
    let mut rng = rng_from_seed(99);
    let samples = sample_box(&DomainBox::cube(4, 1.2), 1000, &mut rng);
    let cert = certify_symplectic(h.map(), &samples, 1e-7).unwrap();
    assert!(cert.pass, "residual {:e} at {} points", cert.residual, cert.points);
}

#[test]
fn c1_distance_to_identity_vanishes_with_the_field() {
    // For S_t = S0 + t (S - S0) the generated map tends to the identity in
    // C^1 as t -> 0, with a monotone decreasing envelope.
    let mut rng = rng_from_seed(7);
    let probes = sample_box(&DomainBox::cube(2, 1.2), 40, &mut rng);
    for seed in 0..10u64 {
        let s = trig_genfn::<f64>(1, 0.05, 40 + seed);
        let s0 = identity_genfn::<f64>(1);
        let mut previous = f64::INFINITY;
        let mut first = 0.0;
        let mut last = 0.0;
        for (k, t) in [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125].iter().enumerate() {
            let st = GeneratingFunction::blend(&s0, &s, *t);
            let ht = generate_map(&st, 1e-12, 60).unwrap();
            let m = c1_distance_to_identity(ht.map(), &probes).unwrap();
            assert!(
                m <= previous * 1.05,
                "envelope not decreasing at t = {t}: {m:e} after {previous:e} (seed {seed})"
            );
            previous = m;
            if k == 0 {
                first = m;
            }
            last = m;
        }
        assert!(
            last <= 0.1 * first,
            "C1 distance does not vanish with t: {first:e} -> {last:e} (seed {seed})"
        );
    }
}
