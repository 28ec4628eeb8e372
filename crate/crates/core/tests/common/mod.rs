#![allow(dead_code)]

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use spherekit::convolutions::{apply_spectral_kernel, spectral_conv_kernel_gradient, FilterBasis, MixWeights, SpectralKernel};
use spherekit::harmonics::{ShtPlan, SpectralCoeffs};
use spherekit::loss::{combined_loss, combined_loss_gradient, LossWeights};
use spherekit::metrics::CrpsVariant;
use spherekit::{EnsembleField, GridSpec, SphericalField};

/// Random coefficients with unit-variance modes up to `lmax`.
pub fn random_coeffs(lmax: usize, mmax: usize, channels: usize, rng: &mut impl Rng) -> SpectralCoeffs {
    let mut c = SpectralCoeffs::zeros(lmax, mmax, channels);
    for ch in 0..channels {
        for l in 0..lmax {
            for m in 0..=l.min(mmax - 1) {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = if m == 0 { 0.0 } else { rng.sample(StandardNormal) };
                c.set(ch, l, m, Complex64::new(re, im));
            }
        }
    }
    c
}

pub struct FitReport {
    pub target: Vec<f64>,
    pub fitted: Vec<f64>,
    pub iterations: usize,
    pub max_rel_err: f64,
    pub final_loss: f64,
}

/// Fits a diagonal spectral kernel to a known target by Adam on the combined
/// loss of a single-member ensemble with `λ = 1`.
pub fn fit_spectral_kernel(seed: u64, iterations: usize) -> FitReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Arc::new(GridSpec::gaussian(16, 32).unwrap());
    let lmax = 16;
    let plan = ShtPlan::new(grid.clone(), lmax, lmax).unwrap();
    let target: Vec<f64> = (0..lmax).map(|_| rng.random_range(0.6..1.5)).collect();
    let inputs: Vec<SpectralCoeffs> = (0..4).map(|_| random_coeffs(lmax, lmax, 1, &mut rng)).collect();
    let truths: Vec<SphericalField> = inputs
        .iter()
        .map(|a| plan.inverse(&apply_spectral_kernel(a, &SpectralKernel::diagonal(1, &target)).unwrap()).unwrap())
        .collect();
    let weights = LossWeights::uniform(1, 1.0, CrpsVariant::SpreadSkill);
    let mut k = vec![1.0; lmax];
    let (mut m1, mut m2) = (vec![0.0; lmax], vec![0.0; lmax]);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-12);
    for t in 1..=iterations {
        let kernel = SpectralKernel::diagonal(1, &k);
        let mut grad = vec![0.0; lmax];
        for (a, truth) in inputs.iter().zip(&truths) {
            let pred = plan.inverse(&apply_spectral_kernel(a, &kernel).unwrap()).unwrap();
            let ens = EnsembleField::from_members(&[pred]).unwrap();
            let rollout = [(ens, truth.clone())];
            let g = combined_loss_gradient(&rollout, &weights).unwrap().remove(0).member(0);
            let gk = spectral_conv_kernel_gradient(&plan, a, &g, 1).unwrap();
            for (l, v) in grad.iter_mut().enumerate() {
                *v += gk.get(0, 0, l);
            }
        }
        let lr = 0.05 * 0.5 * (1.0 + (std::f64::consts::PI * t as f64 / iterations as f64).cos()) + 1e-4;
        for l in 0..lmax {
            m1[l] = b1 * m1[l] + (1.0 - b1) * grad[l];
            m2[l] = b2 * m2[l] + (1.0 - b2) * grad[l] * grad[l];
            let mh = m1[l] / (1.0 - b1.powi(t as i32));
            let vh = m2[l] / (1.0 - b2.powi(t as i32));
            k[l] -= lr * mh / (vh.sqrt() + eps);
        }
    }
    let kernel = SpectralKernel::diagonal(1, &k);
    let pred = plan.inverse(&apply_spectral_kernel(&inputs[0], &kernel).unwrap()).unwrap();
    let rollout = [(EnsembleField::from_members(&[pred]).unwrap(), truths[0].clone())];
    let final_loss = combined_loss(&rollout, &weights).unwrap();
    let max_rel_err = k.iter().zip(&target).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);
    FitReport { target, fitted: k, iterations, max_rel_err, final_loss }
}

/// Filter-local coordinates via explicit rotation matrices `R = Rz(φ_o) Ry(θ_o)`.
pub fn local_coords(t_out: f64, p_out: f64, t_in: f64, p_in: f64) -> (f64, f64) {
    let x = [t_in.sin() * p_in.cos(), t_in.sin() * p_in.sin(), t_in.cos()];
    let (sp, cp) = p_out.sin_cos();
    let (st, ct) = t_out.sin_cos();
    let rz_t = [[cp, sp, 0.0], [-sp, cp, 0.0], [0.0, 0.0, 1.0]];
    let ry_t = [[ct, 0.0, -st], [0.0, 1.0, 0.0], [st, 0.0, ct]];
    let mul = |m: [[f64; 3]; 3], v: [f64; 3]| {
        [0, 1, 2].map(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
    };
    let y = mul(ry_t, mul(rz_t, x));
    (y[2].clamp(-1.0, 1.0).acos(), y[1].atan2(y[0]))
}

/// Dense evaluation of the quadrature form of the convolution integral.
pub fn dense_disco(in_grid: &GridSpec, out_grid: &GridSpec, basis: &FilterBasis, u: &SphericalField, mix: &MixWeights) -> SphericalField {
    let mut out = SphericalField::zeros(out_grid.clone(), mix.c_out());
    for (h, &to) in out_grid.colatitudes().iter().enumerate() {
        for (w, &po) in out_grid.longitudes().iter().enumerate() {
            for co in 0..mix.c_out() {
                let mut acc = 0.0;
                for (hi, &ti) in in_grid.colatitudes().iter().enumerate() {
                    for (wi, &pi) in in_grid.longitudes().iter().enumerate() {
                        let (t, p) = local_coords(to, po, ti, pi);
                        if t >= basis.cutoff() {
                            continue;
                        }
                        for ci in 0..mix.c_in() {
                            for k in 0..basis.len() {
                                acc += mix.get(co, ci, k) * basis.eval(k, t, p) * u.get(ci, hi, wi) * in_grid.quad_weights()[hi];
                            }
                        }
                    }
                }
                out.set(co, h, w, acc);
            }
        }
    }
    out
}
