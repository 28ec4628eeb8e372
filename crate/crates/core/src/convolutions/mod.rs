//! Spectral (global) and discrete-continuous (local) convolutions on the sphere.

mod basis;
mod disco;
mod spectral;

pub use basis::{morlet_basis_eval, relative_coords, BasisFn, FilterBasis, Part};
pub use disco::{DiscoOperator, DiscoRow};
pub use spectral::{
    apply_spectral_kernel, spectral_conv, spectral_conv_kernel_gradient, spectral_conv_with, SpectralKernel,
};

use crate::error::{shape_err, Result};
use crate::field::SphericalField;

/// Channel-mixing weights `[c_out, c_in, k]` of a local convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct MixWeights {
    c_out: usize,
    c_in: usize,
    k: usize,
    data: Vec<f64>,
}

impl MixWeights {
    pub fn new(c_out: usize, c_in: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != c_out * c_in * k {
            return Err(shape_err(c_out * c_in * k, data.len()));
        }
        Ok(Self { c_out, c_in, k, data })
    }

    pub fn zeros(c_out: usize, c_in: usize, k: usize) -> Self {
        Self { c_out, c_in, k, data: vec![0.0; c_out * c_in * k] }
    }

    /// Channel-wise identity on basis function 0 (the isotropic window).
    pub fn identity(channels: usize, k: usize) -> Self {
        let mut m = Self::zeros(channels, channels, k);
        for c in 0..channels {
            *m.get_mut(c, c, 0) = 1.0;
        }
        m
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, co: usize, ci: usize, k: usize) -> f64 {
        self.data[(co * self.c_in + ci) * self.k + k]
    }

    pub fn get_mut(&mut self, co: usize, ci: usize, k: usize) -> &mut f64 {
        &mut self.data[(co * self.c_in + ci) * self.k + k]
    }
}

/// Forward DISCO convolution.
pub fn disco_apply(op: &DiscoOperator, field: &SphericalField, mix: &MixWeights) -> Result<SphericalField> {
    op.apply(field, mix)
}

/// Transposed DISCO convolution, mapping fields on the operator's output grid back to its input grid.
pub fn disco_transpose_apply(op: &DiscoOperator, field: &SphericalField, mix: &MixWeights) -> Result<SphericalField> {
    op.transpose_apply(field, mix)
}
