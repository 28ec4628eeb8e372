use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spherekit::grids::integrate;
use spherekit::harmonics::{sht_forward, sht_inverse, ShtPlan, SpectralCoeffs};
use spherekit::{GridSpec, SphericalField};

fn y21(t: f64, p: f64) -> Complex64 {
    -0.5 * (15.0 / (2.0 * PI)).sqrt() * t.sin() * t.cos() * Complex64::from_polar(1.0, p)
}

fn y53(t: f64, p: f64) -> Complex64 {
    let c = t.cos();
    -(1.0 / 32.0) * (385.0 / PI).sqrt() * t.sin().powi(3) * (9.0 * c * c - 1.0) * Complex64::from_polar(1.0, 3.0 * p)
}

fn random_coeffs(lmax: usize, mmax: usize, channels: usize, rng: &mut impl Rng) -> SpectralCoeffs {
    let mut c = SpectralCoeffs::zeros(lmax, mmax, channels);
    for ch in 0..channels {
        for l in 0..lmax {
            for m in 0..=l.min(mmax - 1) {
                let im = if m == 0 { 0.0 } else { rng.random_range(-1.0..1.0) };
                c.set(ch, l, m, Complex64::new(rng.random_range(-1.0..1.0), im));
            }
        }
    }
    c
}

#[test]
fn forward_of_real_y53() {
    let g = GridSpec::gaussian(16, 32).unwrap();
    let u = SphericalField::from_fn(g, 1, |_, t, p| y53(t, p).re);
    let c = sht_forward(&u, 16, 16).unwrap();
    for l in 0..16 {
        for m in 0..=l {
            let expect = if (l, m) == (5, 3) { 0.5 } else { 0.0 };
            assert!((c.get(0, l, m) - Complex64::new(expect, 0.0)).norm() <= 1e-12, "({l},{m})");
        }
    }
}

#[test]
fn inverse_matches_analytic_y21_on_equiangular() {
    let g = Arc::new(GridSpec::equiangular(19, 36).unwrap());
    let mut c = SpectralCoeffs::zeros(4, 4, 2);
    // Re Y and Im Y from the single stored m=1 coefficient.
    c.set(0, 2, 1, Complex64::new(0.5, 0.0));
    c.set(1, 2, 1, Complex64::new(0.0, -0.5));
    let u = sht_inverse(&c, g.clone()).unwrap();
    let oracle = SphericalField::from_fn(g, 2, |ch, t, p| if ch == 0 { y21(t, p).re } else { y21(t, p).im });
    assert!(u.max_abs_diff(&oracle) <= 1e-12);
}

#[test]
fn orthonormality_on_64_point_gaussian_grid() {
    let g = GridSpec::gaussian(64, 128).unwrap();
    let plan = ShtPlan::new(g.clone(), 64, 64).unwrap();
    let table = plan.table();
    let w: Vec<f64> = (0..64).map(|i| g.quad_weights()[i] * g.nlon() as f64).collect();
    // Latitude Gram matrix at fixed m; the longitude sum contributes 2π δ_mm'.
    for m in 0..64 {
        for l in m..64 {
            for l2 in m..64 {
                let s: f64 = (0..64).map(|i| w[i] * table.get(i, l, m) * table.get(i, l2, m)).sum();
                let expect = if l == l2 { 1.0 } else { 0.0 };
                assert!((s - expect).abs() <= 1e-12, "m={m} l={l} l2={l2} s={s}");
            }
        }
    }
    for m in 0..64 {
        for m2 in 0..64 {
            let s: Complex64 = g
                .longitudes()
                .iter()
                .map(|&p| Complex64::from_polar(1.0, (m as f64 - m2 as f64) * p))
                .sum::<Complex64>()
                * g.dphi();
            let expect = if m == m2 { 2.0 * PI } else { 0.0 };
            assert!((s - expect).norm() <= 1e-12);
        }
    }
}

#[test]
fn parseval() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let g = Arc::new(GridSpec::gaussian(24, 48).unwrap());
    let plan = ShtPlan::new(g.clone(), 24, 24).unwrap();
    let u = plan.inverse(&random_coeffs(24, 24, 2, &mut rng)).unwrap();
    let energy = plan.forward(&u).unwrap().energy();
    let norms = integrate(&u.map(|v| v * v));
    for (e, n) in energy.iter().zip(&norms) {
        assert!((e - n).abs() <= 1e-10 * n.max(1.0));
    }
}

#[test]
fn roundtrip_32x64() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = Arc::new(GridSpec::gaussian(32, 64).unwrap());
    let plan = ShtPlan::new(g, 32, 32).unwrap();
    let u = plan.inverse(&random_coeffs(32, 32, 4, &mut rng)).unwrap();
    let back = plan.inverse(&plan.forward(&u).unwrap()).unwrap();
    assert!(back.max_abs_diff(&u) <= 1e-11);
}

#[test]
fn sequential_and_parallel_agree_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = Arc::new(GridSpec::gaussian(16, 32).unwrap());
    let plan = ShtPlan::new(g, 16, 16).unwrap();
    let u = plan.inverse(&random_coeffs(16, 16, 3, &mut rng)).unwrap();
    let a = plan.forward(&u).unwrap();
    let b = spherekit::exec::sequential(|| plan.forward(&u).unwrap());
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn linearity(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Arc::new(GridSpec::gaussian(12, 24).unwrap());
        let u = SphericalField::from_fn(g.clone(), 1, |_, _, _| rng.random_range(-1.0..1.0));
        let v = SphericalField::from_fn(g.clone(), 1, |_, _, _| rng.random_range(-1.0..1.0));
        let mix = SphericalField::from_vec(
            g, 1, u.data().iter().zip(v.data()).map(|(a, b)| alpha * a + beta * b).collect()).unwrap();
        let (cu, cv, cm) = (sht_forward(&u, 12, 12).unwrap(), sht_forward(&v, 12, 12).unwrap(), sht_forward(&mix, 12, 12).unwrap());
        for ((a, b), m) in cu.data().iter().zip(cv.data()).zip(cm.data()) {
            prop_assert!((a * alpha + b * beta - m).norm() <= 1e-12);
        }
    }

    #[test]
    fn polar_rotation_is_a_phase(seed in any::<u64>(), k in 0isize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Arc::new(GridSpec::gaussian(12, 24).unwrap());
        let u = SphericalField::from_fn(g, 1, |_, _, _| rng.random_range(-1.0..1.0));
        let c = sht_forward(&u, 12, 12).unwrap();
        let r = sht_forward(&u.roll_longitude(k), 12, 12).unwrap();
        for l in 0..12 {
            for m in 0..=l {
                let phase = Complex64::from_polar(1.0, -(m as f64) * 2.0 * PI * k as f64 / 24.0);
                prop_assert!((c.get(0, l, m) * phase - r.get(0, l, m)).norm() <= 1e-12);
            }
        }
    }
}
