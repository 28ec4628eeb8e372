use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{shape_err, Result};
use crate::field::SphericalField;
use crate::harmonics::{ShtPlan, SpectralCoeffs};

/// Isotropic spectral kernel `k̂_ℓ⁰` for every `(c_out, c_in)` pair, stored `[c_out, c_in, ℓ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralKernel {
    c_out: usize,
    c_in: usize,
    lmax: usize,
    data: Vec<f64>,
}

impl SpectralKernel {
    pub fn new(c_out: usize, c_in: usize, lmax: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != c_out * c_in * lmax {
            return Err(shape_err(c_out * c_in * lmax, data.len()));
        }
        Ok(Self { c_out, c_in, lmax, data })
    }

    pub fn zeros(c_out: usize, c_in: usize, lmax: usize) -> Self {
        Self { c_out, c_in, lmax, data: vec![0.0; c_out * c_in * lmax] }
    }

    /// Diagonal kernel `k̂_ℓ` applied channel-wise.
    pub fn diagonal(channels: usize, values: &[f64]) -> Self {
        let lmax = values.len();
        let mut k = Self::zeros(channels, channels, lmax);
        for c in 0..channels {
            for (l, &v) in values.iter().enumerate() {
                *k.get_mut(c, c, l) = v;
            }
        }
        k
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, co: usize, ci: usize, l: usize) -> f64 {
        self.data[(co * self.c_in + ci) * self.lmax + l]
    }

    pub fn get_mut(&mut self, co: usize, ci: usize, l: usize) -> &mut f64 {
        &mut self.data[(co * self.c_in + ci) * self.lmax + l]
    }
}

/// `ô_ℓ^m[c_out] = Σ_{c_in} k̂_ℓ[c_out, c_in] û_ℓ^m[c_in]`.
pub fn apply_spectral_kernel(coeffs: &SpectralCoeffs, kernel: &SpectralKernel) -> Result<SpectralCoeffs> {
    if coeffs.channels() != kernel.c_in() || coeffs.lmax() != kernel.lmax() {
        return Err(shape_err(
            format!("{} channels, lmax {}", kernel.c_in(), kernel.lmax()),
            format!("{} channels, lmax {}", coeffs.channels(), coeffs.lmax()),
        ));
    }
    let (lmax, mmax) = (coeffs.lmax(), coeffs.mmax());
    let mut out = SpectralCoeffs::zeros(lmax, mmax, kernel.c_out());
    for co in 0..kernel.c_out() {
        let dst = out.channel_mut(co);
        for ci in 0..kernel.c_in() {
            let src = coeffs.channel(ci);
            for l in 0..lmax {
                let k = kernel.get(co, ci, l);
                if k == 0.0 {
                    continue;
                }
                for m in 0..=l.min(mmax - 1) {
                    dst[l * mmax + m] += src[l * mmax + m] * k;
                }
            }
        }
    }
    Ok(out)
}

/// Spectral convolution with a prepared transform plan.
pub fn spectral_conv_with(plan: &ShtPlan, field: &SphericalField, kernel: &SpectralKernel) -> Result<SphericalField> {
    let coeffs = plan.forward(field)?;
    plan.inverse(&apply_spectral_kernel(&coeffs, kernel)?)
}

/// `isht(û_ℓ^m k̂_ℓ⁰)` on the field's own (Gaussian) grid, truncated at the kernel's `lmax`.
pub fn spectral_conv(field: &SphericalField, kernel: &SpectralKernel) -> Result<SphericalField> {
    let grid: Arc<_> = field.grid_arc().clone();
    let mmax = kernel.lmax().min(grid.nlon() / 2);
    let plan = ShtPlan::new(grid, kernel.lmax(), mmax)?;
    spectral_conv_with(&plan, field, kernel)
}

/// Gradient of a scalar loss with respect to the kernel entries, given the
/// input coefficients and `∂L/∂y` on the output grid.
pub fn spectral_conv_kernel_gradient(
    plan: &ShtPlan,
    input_coeffs: &SpectralCoeffs,
    output_grad: &SphericalField,
    c_out: usize,
) -> Result<SpectralKernel> {
    let adj = plan.inverse_adjoint(output_grad)?;
    let (lmax, mmax, c_in) = (plan.lmax(), plan.mmax(), input_coeffs.channels());
    if output_grad.channels() != c_out {
        return Err(shape_err(c_out, output_grad.channels()));
    }
    let mut grad = SpectralKernel::zeros(c_out, c_in, lmax);
    for co in 0..c_out {
        for ci in 0..c_in {
            for l in 0..lmax {
                let mut g = 0.0;
                for m in 0..=l.min(mmax - 1) {
                    let a: Complex64 = input_coeffs.get(ci, l, m);
                    g += SpectralCoeffs::multiplicity(m) * (a * adj.get(co, l, m).conj()).re;
                }
                *grad.get_mut(co, ci, l) = g;
            }
        }
    }
    Ok(grad)
}
