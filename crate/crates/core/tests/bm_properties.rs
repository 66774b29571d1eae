use std::f64::consts::TAU;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trace_forms::bm::{
    escape_probability_mc, exterior_bin_masses, sample_hit_from_inside, FarField, ShellConfig,
};
use trace_forms::mc::RngStream;
use trace_forms::sphere::{annulus_hit_probability, escape_probability, feller_density, SphereSpec};
use trace_forms::tolerances;

/// Harmonic in every dimension >= 3.
fn h(y: &[f64]) -> f64 {
    y[0] * y[0] - y[1] * y[1] + y[2] + 0.5 * y[0] * y[2]
}

#[test]
fn interior_hits_average_harmonic_functions() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in [3usize, 4, 5] {
        let s = SphereSpec::new(n, 1.5).unwrap();
        for _ in 0..3 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-0.6..0.6)).collect();
            let walks = 40_000;
            let (mut sum, mut sq) = (0.0, 0.0);
            for _ in 0..walks {
                let hit = sample_hit_from_inside(&s, &x, &mut rng).unwrap();
                assert!((s.distance(&hit.point) - 1.5).abs() < 1e-6);
                let v = h(&hit.point);
                sum += v;
                sq += v * v;
            }
            let mean = sum / walks as f64;
            let se = ((sq / walks as f64 - mean * mean) / walks as f64).sqrt();
            let z = (mean - h(&x)) / se;
            assert!(z.abs() < tolerances::Z_BOUND, "n = {n}, x = {x:?}: z = {z}");
        }
    }
}

#[test]
fn escape_fractions_match_closed_forms_across_radii() {
    for n in [3usize, 4] {
        let s = SphereSpec::new(n, 1.0).unwrap();
        for (i, d) in [1.3, 2.5, 6.0].into_iter().enumerate() {
            let mut x = vec![0.0; n];
            x[0] = d;
            let mut absorb = ShellConfig::new(&s, 0.1);
            absorb.kill_radius = 20.0;
            let stream = RngStream::new(31, (n * 10 + i) as u64);
            let a = escape_probability_mc(&s, &x, &absorb, 20_000, stream).unwrap();
            assert_eq!(a.max_steps_exceeded, 0);
            let want = annulus_hit_probability(&s, d, 20.0);
            assert!((a.hit.exact.unwrap() - want).abs() < 1e-15);
            assert!(a.hit.within(tolerances::Z_BOUND), "absorb n={n} d={d}: z = {:?}", a.hit.z_score);

            let restart = absorb.with_far_field(FarField::Restart);
            let b = escape_probability_mc(&s, &x, &restart, 20_000, stream.child(1)).unwrap();
            let q = escape_probability(&s, &x).unwrap();
            assert!((b.escape.exact.unwrap() - q).abs() < 1e-15);
            assert!(b.escape.within(tolerances::Z_BOUND), "restart n={n} d={d}: z = {:?}", b.escape.z_score);
        }
    }
}

proptest! {
    #[test]
    fn annulus_probability_is_a_decreasing_probability(n in 3usize..=7, r in 0.2f64..3.0, a in 1.01f64..5.0, b in 1.01f64..5.0) {
        let s = SphereSpec::new(n, r).unwrap();
        let big_r = 6.0 * r;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (p_lo, p_hi) = (annulus_hit_probability(&s, lo * r, big_r), annulus_hit_probability(&s, hi * r, big_r));
        prop_assert!((0.0..=1.0).contains(&p_hi) && p_hi <= p_lo + 1e-15);
        prop_assert!((annulus_hit_probability(&s, r, big_r) - 1.0).abs() < 1e-12);
        prop_assert!(annulus_hit_probability(&s, big_r, big_r).abs() < 1e-12);
        // far sphere at infinity
        let mut x = vec![0.0; n];
        x[0] = lo * r;
        let q = escape_probability(&s, &x).unwrap();
        prop_assert!((annulus_hit_probability(&s, lo * r, 1e9 * r) - (1.0 - q)).abs() < 1e-6);
    }

    #[test]
    fn exterior_bin_masses_sum_to_hit_probability(n in 3usize..=6, d in 1.05f64..8.0, bins in 4usize..=24) {
        let s = SphereSpec::new(n, 1.0).unwrap();
        let mut x = vec![0.0; n];
        x[n - 1] = d;
        let masses = exterior_bin_masses(&s, &x, bins).unwrap();
        prop_assert_eq!(masses.len(), bins);
        prop_assert!(masses.iter().all(|&m| m >= 0.0));
        let total: f64 = masses.iter().sum();
        let want = d.powi(2 - n as i32);
        prop_assert!((total - want).abs() < 1e-8 * want, "{total} vs {want}");
    }

    #[test]
    fn feller_density_is_symmetric_and_rotation_invariant(theta in 0.05f64..3.1, phi in 0.0f64..TAU, rot in 0.0f64..TAU) {
        let s = SphereSpec::new(3, 2.0).unwrap();
        let p = |t: f64, f: f64| vec![2.0 * t.sin() * f.cos(), 2.0 * t.sin() * f.sin(), 2.0 * t.cos()];
        let xi = p(0.0, 0.0);
        let eta = p(theta, phi);
        let u = feller_density(&s, &xi, &eta).unwrap();
        prop_assert!((u - feller_density(&s, &eta, &xi).unwrap()).abs() <= 1e-14 * u);
        // rotate both points about the x axis
        let turn = |v: &[f64]| vec![v[0], v[1] * rot.cos() - v[2] * rot.sin(), v[1] * rot.sin() + v[2] * rot.cos()];
        let w = feller_density(&s, &turn(&xi), &turn(&eta)).unwrap();
        prop_assert!((u - w).abs() <= 1e-12 * u);
    }
}
