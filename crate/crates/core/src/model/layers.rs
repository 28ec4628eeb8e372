use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::convolutions::{apply_spectral_kernel, DiscoOperator, MixWeights, SpectralKernel};
use crate::error::{shape_err, Result};
use crate::exec;
use crate::field::SphericalField;
use crate::harmonics::ShtPlan;

/// `x Φ(x)` with the exact Gaussian CDF.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// `0` below zero, `x²` on `(0, ½]`, `x − ¼` above.
pub fn softclamp(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x <= 0.5 {
        x * x
    } else {
        x - 0.25
    }
}

pub(crate) fn normal_vec(n: usize, std: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
}

pub(crate) fn white_noise(grid: &Arc<crate::grids::GridSpec>, channels: usize, rng: &mut impl Rng) -> SphericalField {
    SphericalField::from_vec(grid.clone(), channels, normal_vec(channels * grid.len(), 1.0, rng))
        .expect("shape by construction")
}

/// Plain mean of `x²` over every channel and point.
pub fn uncentered_variance(field: &SphericalField) -> f64 {
    field.data().iter().map(|v| v * v).sum::<f64>() / field.data().len() as f64
}

/// Pointwise affine map across channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub c_out: usize,
    pub c_in: usize,
    /// `[c_out, c_in]`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    /// He fan-in initialization with zero bias.
    pub fn he(c_out: usize, c_in: usize, rng: &mut impl Rng) -> Self {
        Self {
            c_out,
            c_in,
            weight: normal_vec(c_out * c_in, (2.0 / c_in as f64).sqrt(), rng),
            bias: vec![0.0; c_out],
        }
    }

    pub fn apply(&self, x: &SphericalField) -> Result<SphericalField> {
        if x.channels() != self.c_in {
            return Err(shape_err(format!("{} channels", self.c_in), x.channels()));
        }
        let n = x.grid().len();
        let mut out = SphericalField::zeros(x.grid_arc().clone(), self.c_out);
        exec::for_each_chunk_mut(out.data_mut(), n, |co, dst| {
            dst.fill(self.bias[co]);
            for ci in 0..self.c_in {
                let w = self.weight[co * self.c_in + ci];
                dst.iter_mut().zip(x.channel(ci)).for_each(|(d, s)| *d += w * s);
            }
        });
        Ok(out)
    }
}

/// DISCO convolution applied group by group: group `g` maps its `g_in`
/// input channels to `g_out` outputs with the weight set `sets[set_of[g]]`.
#[derive(Debug, Clone)]
pub struct GroupedConv {
    pub op: Arc<DiscoOperator>,
    pub g_in: usize,
    pub g_out: usize,
    pub set_of: Vec<usize>,
    /// Each `[g_out, g_in, k]`.
    pub sets: Vec<Vec<f64>>,
}

impl GroupedConv {
    pub fn new(op: Arc<DiscoOperator>, g_in: usize, g_out: usize, set_of: Vec<usize>, rng: &mut impl Rng) -> Self {
        let k = op.n_basis();
        let n_sets = set_of.iter().max().map_or(0, |m| m + 1);
        let std = (1.0 / (g_in * k) as f64).sqrt();
        let sets = (0..n_sets).map(|_| normal_vec(g_out * g_in * k, std, rng)).collect();
        Self { op, g_in, g_out, set_of, sets }
    }

    pub fn c_in(&self) -> usize {
        self.set_of.len() * self.g_in
    }

    pub fn c_out(&self) -> usize {
        self.set_of.len() * self.g_out
    }

    /// Block-diagonal dense mixing equivalent to the grouping.
    fn mix_weights(&self) -> MixWeights {
        let k = self.op.n_basis();
        let mut mix = MixWeights::zeros(self.c_out(), self.c_in(), k);
        for (g, &s) in self.set_of.iter().enumerate() {
            let w = &self.sets[s];
            for o in 0..self.g_out {
                for i in 0..self.g_in {
                    for kk in 0..k {
                        *mix.get_mut(g * self.g_out + o, g * self.g_in + i, kk) = w[(o * self.g_in + i) * k + kk];
                    }
                }
            }
        }
        mix
    }

    pub fn apply(&self, x: &SphericalField) -> Result<SphericalField> {
        if self.g_out < self.g_in {
            self.op.apply_mixed_first(x, &self.mix_weights())
        } else {
            self.op.apply(x, &self.mix_weights())
        }
    }

    pub(crate) fn scale(&mut self, s: f64) {
        self.sets.iter_mut().flatten().for_each(|w| *w *= s);
    }

    /// Rescales so unit white noise gives unit uncentered output variance.
    pub fn calibrate(&mut self, probes: usize, rng: &mut impl Rng) -> Result<()> {
        let mut v = 0.0;
        for _ in 0..probes {
            v += uncentered_variance(&self.apply(&white_noise(self.op.in_grid(), self.c_in(), rng))?);
        }
        self.scale((probes as f64 / v).sqrt());
        Ok(())
    }
}

/// Channel-mixing convolution of a processor block.
#[derive(Debug, Clone)]
pub enum BlockConv {
    Local { op: Arc<DiscoOperator>, mix: MixWeights },
    Global { plan: Arc<ShtPlan>, kernel: SpectralKernel },
}

impl BlockConv {
    pub fn local(op: Arc<DiscoOperator>, c_out: usize, c_in: usize, rng: &mut impl Rng) -> Self {
        let k = op.n_basis();
        let data = normal_vec(c_out * c_in * k, (1.0 / (c_in * k) as f64).sqrt(), rng);
        let mix = MixWeights::new(c_out, c_in, k, data).expect("shape by construction");
        Self::Local { op, mix }
    }

    pub fn global(plan: Arc<ShtPlan>, c_out: usize, c_in: usize, rng: &mut impl Rng) -> Self {
        let lmax = plan.lmax();
        let data = normal_vec(c_out * c_in * lmax, (1.0 / c_in as f64).sqrt(), rng);
        let kernel = SpectralKernel::new(c_out, c_in, lmax, data).expect("shape by construction");
        Self::Global { plan, kernel }
    }

    pub fn c_in(&self) -> usize {
        match self {
            Self::Local { mix, .. } => mix.c_in(),
            Self::Global { kernel, .. } => kernel.c_in(),
        }
    }

    pub fn weights(&self) -> &[f64] {
        match self {
            Self::Local { mix, .. } => mix.data(),
            Self::Global { kernel, .. } => kernel.data(),
        }
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        match self {
            Self::Local { mix, .. } => mix.data_mut(),
            Self::Global { kernel, .. } => kernel.data_mut(),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            Self::Local { mix, .. } => vec![mix.c_out(), mix.c_in(), mix.k()],
            Self::Global { kernel, .. } => vec![kernel.c_out(), kernel.c_in(), kernel.lmax()],
        }
    }

    pub fn apply(&self, x: &SphericalField) -> Result<SphericalField> {
        match self {
            Self::Local { op, mix } => op.apply(x, mix),
            Self::Global { plan, kernel } => plan.inverse(&apply_spectral_kernel(&plan.forward(x)?, kernel)?),
        }
    }

    pub fn calibrate(&mut self, grid: &Arc<crate::grids::GridSpec>, probes: usize, rng: &mut impl Rng) -> Result<()> {
        let mut v = 0.0;
        for _ in 0..probes {
            v += uncentered_variance(&self.apply(&white_noise(grid, self.c_in(), rng))?);
        }
        let s = (probes as f64 / v).sqrt();
        self.weights_mut().iter_mut().for_each(|w| *w *= s);
        Ok(())
    }
}

/// `y = x + scale ⊙ W₂ GeLU(W₁ GeLU(conv([x, cond])) + b₁) + b₂`.
#[derive(Debug, Clone)]
pub struct Block {
    pub conv: BlockConv,
    pub fc1: Linear,
    pub fc2: Linear,
    pub scale: Vec<f64>,
}

impl Block {
    pub fn apply(&self, x: &SphericalField, cond: &SphericalField) -> Result<SphericalField> {
        let h = self.conv.apply(&SphericalField::concat(&[x, cond])?)?.map(gelu);
        let h = self.fc2.apply(&self.fc1.apply(&h)?.map(gelu))?;
        if h.channels() != x.channels() {
            return Err(shape_err(format!("{} channels", x.channels()), h.channels()));
        }
        let n = x.grid().len();
        let mut y = x.clone();
        for (c, s) in self.scale.iter().enumerate() {
            y.channel_mut(c).iter_mut().zip(&h.data()[c * n..(c + 1) * n]).for_each(|(d, v)| *d += s * v);
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_values() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((gelu(-1.0) + 0.158_655_253_931_457_05).abs() < 1e-15);
    }

    #[test]
    fn softclamp_branches() {
        assert_eq!(softclamp(-1.0), 0.0);
        assert_eq!(softclamp(0.25), 0.0625);
        assert_eq!(softclamp(1.0), 0.75);
        assert_eq!(softclamp(0.5), 0.25);
    }
}
