use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spherekit::convolutions::{
    disco_apply, disco_transpose_apply, spectral_conv, DiscoOperator, FilterBasis, MixWeights, SpectralKernel,
};
use spherekit::harmonics::{sht_forward, sht_inverse, SpectralCoeffs};
use spherekit::{Error, GridSpec, SphericalField};

mod common;
use common::{dense_disco, local_coords};

fn random_field(grid: &Arc<GridSpec>, channels: usize, rng: &mut impl Rng) -> SphericalField {
    SphericalField::from_fn(grid.clone(), channels, |_, _, _| rng.random_range(-1.0..1.0))
}

fn random_mix(c_out: usize, c_in: usize, k: usize, rng: &mut impl Rng) -> MixWeights {
    MixWeights::new(c_out, c_in, k, (0..c_out * c_in * k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &SphericalField, b: &SphericalField) -> f64 {
    let g = a.grid();
    let n = g.len();
    let mut s = 0.0;
    for c in 0..a.channels() {
        for p in 0..n {
            s += a.channel(c)[p] * b.channel(c)[p] * g.quad_weights()[p / g.nlon()];
        }
    }
    s
}

#[test]
fn disco_matches_dense_oracle_up_to_nlat_24() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (nlat, nlon, stride) in [(8, 16, 1), (16, 32, 2), (17, 32, 1), (24, 48, 2)] {
        let gin = Arc::new(GridSpec::equiangular(nlat, nlon).unwrap());
        let gout = Arc::new(GridSpec::gaussian(nlat / stride, nlon / stride).unwrap());
        let basis = FilterBasis::morlet(3.0 * PI / gout.nlat() as f64, 1);
        let op = DiscoOperator::assemble(gin.clone(), gout.clone(), basis.clone()).unwrap();
        let u = random_field(&gin, 2, &mut rng);
        let mix = random_mix(3, 2, basis.len(), &mut rng);
        let fast = disco_apply(&op, &u, &mix).unwrap();
        let dense = dense_disco(&gin, &gout, &basis, &u, &mix);
        assert!(fast.max_abs_diff(&dense) <= 1e-12, "nlat={nlat}: {}", fast.max_abs_diff(&dense));
    }
}

#[test]
fn zero_in_zero_out() {
    let g = Arc::new(GridSpec::equiangular(16, 32).unwrap());
    let op = DiscoOperator::assemble(g.clone(), g.clone(), FilterBasis::morlet(0.5, 2)).unwrap();
    let mix = random_mix(2, 2, 25, &mut ChaCha8Rng::seed_from_u64(0));
    let z = SphericalField::zeros(g, 2);
    assert!(disco_apply(&op, &z, &mix).unwrap().data().iter().all(|&v| v == 0.0));
    assert!(disco_transpose_apply(&op, &z, &mix).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn global_window_on_constant_matches_quadrature() {
    let gin = Arc::new(GridSpec::gaussian(12, 24).unwrap());
    let gout = Arc::new(GridSpec::gaussian(6, 12).unwrap());
    let basis = FilterBasis::isotropic(PI);
    let op = DiscoOperator::assemble(gin.clone(), gout.clone(), basis.clone()).unwrap();
    let u = SphericalField::from_fn(gin.clone(), 1, |_, _, _| 1.0);
    let y = disco_apply(&op, &u, &MixWeights::identity(1, 1)).unwrap();
    for (h, &to) in gout.colatitudes().iter().enumerate() {
        let mut oracle = 0.0;
        for (hi, &ti) in gin.colatitudes().iter().enumerate() {
            for &pi in gin.longitudes() {
                let (t, p) = local_coords(to, 0.0, ti, pi);
                oracle += basis.eval(0, t, p) * gin.quad_weights()[hi];
            }
        }
        for w in 0..gout.nlon() {
            assert!((y.get(0, h, w) - oracle).abs() <= 1e-10);
            // cos²(θ/2) = (1 + cos θ)/2 integrates to 2π.
            assert!((y.get(0, h, w) - 2.0 * PI).abs() <= 1e-10);
        }
    }
}

#[test]
fn one_cell_cutoff_matches_dense_oracle() {
    let g = Arc::new(GridSpec::equiangular(12, 24).unwrap());
    let basis = FilterBasis::isotropic(1.01 * PI / 12.0);
    let op = DiscoOperator::assemble(g.clone(), g.clone(), basis.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let u = random_field(&g, 1, &mut rng);
    let mix = MixWeights::identity(1, 1);
    let y = disco_apply(&op, &u, &mix).unwrap();
    assert!(y.max_abs_diff(&dense_disco(&g, &g, &basis, &u, &mix)) <= 1e-12);
}

#[test]
fn support_lies_inside_cutoff_disk() {
    let g = Arc::new(GridSpec::equiangular(32, 64).unwrap());
    let cutoff = 5.0 * PI / 32.0;
    let op = DiscoOperator::assemble(g.clone(), g.clone(), FilterBasis::morlet(cutoff, 2)).unwrap();
    for (h, row) in op.rows().iter().enumerate() {
        let po = g.point(h, 0);
        for e in 0..row.nnz() {
            let pi = g.point(row.h_in[e], row.w_in[e]);
            let d = (po[0] * pi[0] + po[1] * pi[1] + po[2] * pi[2]).clamp(-1.0, 1.0).acos();
            assert!(d < cutoff + 1e-12);
        }
    }
}

#[test]
fn empty_support_is_an_error() {
    let gin = Arc::new(GridSpec::gaussian(8, 16).unwrap());
    let gout = Arc::new(GridSpec::gaussian(4, 8).unwrap());
    let err = DiscoOperator::assemble(gin, gout, FilterBasis::isotropic(1e-3)).unwrap_err();
    assert!(matches!(err, Error::EmptySupport(_)));
}

#[test]
fn transpose_is_adjoint_under_weighted_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let gin = Arc::new(GridSpec::equiangular(16, 32).unwrap());
    let gout = Arc::new(GridSpec::gaussian(8, 16).unwrap());
    let op = DiscoOperator::assemble(gin.clone(), gout.clone(), FilterBasis::morlet(0.7, 2)).unwrap();
    let mix = random_mix(3, 2, 25, &mut rng);
    let u = random_field(&gin, 2, &mut rng);
    let v = random_field(&gout, 3, &mut rng);
    let lhs = dot(&disco_apply(&op, &u, &mix).unwrap(), &v);
    let rhs = dot(&u, &disco_transpose_apply(&op, &v, &mix).unwrap());
    assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
}

#[test]
fn symmetric_kernel_transpose_equals_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let g = Arc::new(GridSpec::gaussian(16, 32).unwrap());
    let op = DiscoOperator::assemble(g.clone(), g.clone(), FilterBasis::isotropic(0.6)).unwrap();
    let u = random_field(&g, 1, &mut rng);
    let mix = MixWeights::identity(1, 1);
    let f = disco_apply(&op, &u, &mix).unwrap();
    let t = disco_transpose_apply(&op, &u, &mix).unwrap();
    assert!(f.max_abs_diff(&t) <= 1e-12);
}

#[test]
fn spectral_identity_and_projection() {
    let g = Arc::new(GridSpec::gaussian(16, 32).unwrap());
    let mut c = SpectralCoeffs::zeros(16, 16, 1);
    c.set(0, 2, 1, Complex64::new(0.3, -0.2));
    c.set(0, 3, 1, Complex64::new(-0.4, 0.1));
    c.set(0, 7, 5, Complex64::new(0.2, 0.6));
    let u = sht_inverse(&c, g.clone()).unwrap();
    let ident = spectral_conv(&u, &SpectralKernel::diagonal(1, &[1.0; 16])).unwrap();
    assert!(ident.max_abs_diff(&u) <= 1e-10);
    let mut delta = [0.0; 16];
    delta[2] = 1.0;
    let proj = spectral_conv(&u, &SpectralKernel::diagonal(1, &delta)).unwrap();
    let mut only = SpectralCoeffs::zeros(16, 16, 1);
    only.set(0, 2, 1, c.get(0, 2, 1));
    assert!(proj.max_abs_diff(&sht_inverse(&only, g).unwrap()) <= 1e-12);
}

#[test]
fn spectral_conv_is_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let g = Arc::new(GridSpec::gaussian(12, 24).unwrap());
    let kernel = SpectralKernel::diagonal(1, &(0..12).map(|_| rng.random_range(0.5..1.5)).collect::<Vec<_>>());
    let u = random_field(&g, 1, &mut rng);
    let mut bumped = sht_forward(&u, 12, 12).unwrap();
    let (l0, m0) = (5, 2);
    bumped.set(0, l0, m0, bumped.get(0, l0, m0) + Complex64::new(0.3, 0.1));
    let v = sht_inverse(&bumped, g).unwrap();
    let a = sht_forward(&spectral_conv(&u, &kernel).unwrap(), 12, 12).unwrap();
    let b = sht_forward(&spectral_conv(&v, &kernel).unwrap(), 12, 12).unwrap();
    for l in 0..12 {
        for m in 0..=l {
            let d = (a.get(0, l, m) - b.get(0, l, m)).norm();
            if (l, m) == (l0, m0) {
                assert!(d > 1e-3);
            } else {
                assert!(d <= 1e-12, "({l},{m}) changed by {d}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn disco_shift_equivariance_is_a_permutation(seed in any::<u64>(), k in 0isize..16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gin = Arc::new(GridSpec::equiangular(16, 32).unwrap());
        let gout = Arc::new(GridSpec::equiangular(8, 16).unwrap());
        let op = DiscoOperator::assemble(gin.clone(), gout, FilterBasis::morlet(0.6, 1)).unwrap();
        let mix = random_mix(2, 1, 9, &mut rng);
        let u = random_field(&gin, 1, &mut rng);
        let shifted = disco_apply(&op, &u.roll_longitude(2 * k), &mix).unwrap();
        let expected = disco_apply(&op, &u, &mix).unwrap().roll_longitude(k);
        prop_assert_eq!(shifted.data(), expected.data());
    }

    #[test]
    fn spectral_conv_commutes_with_polar_rotation(seed in any::<u64>(), k in 0isize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Arc::new(GridSpec::gaussian(12, 24).unwrap());
        let kernel = SpectralKernel::new(2, 1, 12, (0..24).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let u = random_field(&g, 1, &mut rng);
        let a = spectral_conv(&u.roll_longitude(k), &kernel).unwrap();
        let b = spectral_conv(&u, &kernel).unwrap().roll_longitude(k);
        prop_assert!(a.max_abs_diff(&b) <= 1e-12);
    }
}

#[test]
fn mixing_first_gives_the_same_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let gin = Arc::new(GridSpec::equiangular(16, 32).unwrap());
    let gout = Arc::new(GridSpec::gaussian(8, 16).unwrap());
    let op = DiscoOperator::assemble(gin.clone(), gout, FilterBasis::morlet(0.7, 2)).unwrap();
    let mix = random_mix(2, 5, 25, &mut rng);
    let u = random_field(&gin, 5, &mut rng);
    let a = op.apply(&u, &mix).unwrap();
    let b = op.apply_mixed_first(&u, &mix).unwrap();
    assert!(a.max_abs_diff(&b) <= 1e-12);
    assert!(op.apply_mixed_first(&random_field(&gin, 4, &mut rng), &mix).is_err());
}
