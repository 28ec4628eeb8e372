//! Spectral AR(1) diffusion process supplying spatially and temporally
//! correlated noise on the sphere.
//!
//! Each spherical-harmonic coefficient evolves as
//! `ẑ_ℓ^m ← φ ẑ_ℓ^m + σ_ℓ η_ℓ^m` with `φ = e^{-λ}` and
//! `σ_ℓ = F₀ e^{-k_T ℓ(ℓ+1)/2}`. The degree-0 mode is never forced.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{shape_err, Error, Result};
use crate::field::SphericalField;
use crate::grids::GridSpec;
use crate::harmonics::{ShtPlan, SpectralCoeffs};

/// Spatial scales `k_T` of the eight standard noise channels (with `λ = 1`, `σ = 1`).
pub const STANDARD_KT: [f64; 8] = [3.08e-5, 1.23e-4, 4.93e-4, 1.97e-3, 7.89e-3, 3.16e-2, 1.26e-1, 5.05e-1];

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionParams {
    pub sigma: f64,
    pub lambda: f64,
    pub k_t: f64,
    pub lmax: usize,
    pub phi: f64,
    pub f0: f64,
    pub sigma_l: Vec<f64>,
}

/// Derived process constants. `λ = ∞` is accepted and gives `φ = 0`;
/// `σ = 0` gives a purely decaying process.
pub fn diffusion_params(sigma: f64, lambda: f64, k_t: f64, lmax: usize) -> Result<DiffusionParams> {
    if !sigma.is_finite() || sigma < 0.0 || lambda.is_nan() || lambda <= 0.0 || !k_t.is_finite() || k_t <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "degenerate diffusion parameters sigma={sigma} lambda={lambda} k_T={k_t}"
        )));
    }
    if lmax < 2 {
        return Err(Error::InvalidArgument("diffusion needs lmax >= 2".into()));
    }
    let phi = (-lambda).exp();
    let norm: f64 = (1..lmax)
        .map(|l| {
            let lf = l as f64;
            (2.0 * lf + 1.0) * (-k_t * lf * (lf + 1.0)).exp()
        })
        .sum();
    if norm.is_nan() || norm <= 0.0 {
        return Err(Error::InvalidArgument(format!("k_T={k_t} leaves no variance in degrees 1..{lmax}")));
    }
    let f0 = sigma * (2.0 * std::f64::consts::PI * (1.0 - phi * phi) / norm).sqrt();
    let sigma_l = (0..lmax)
        .map(|l| if l == 0 { 0.0 } else { f0 * (-0.5 * k_t * (l * (l + 1)) as f64).exp() })
        .collect();
    Ok(DiffusionParams { sigma, lambda, k_t, lmax, phi, f0, sigma_l })
}

impl DiffusionParams {
    /// Closed-form stationary variance `σ_ℓ²/(1 − φ²)` of each complex coefficient.
    pub fn stationary_variance(&self, l: usize) -> f64 {
        self.sigma_l[l].powi(2) / (1.0 - self.phi * self.phi)
    }
}

/// Draws one innovation: `N(0, 1)` for `m = 0`, independent `N(0, 1/2)` real
/// and imaginary parts for `m > 0`. Degree 0 is left at zero.
pub fn draw_eta(lmax: usize, rng: &mut impl Rng) -> SpectralCoeffs {
    let mut eta = SpectralCoeffs::zeros(lmax, lmax, 1);
    let half = std::f64::consts::FRAC_1_SQRT_2;
    for l in 1..lmax {
        for m in 0..=l {
            let re: f64 = rng.sample(StandardNormal);
            let z = if m == 0 {
                Complex64::new(re, 0.0)
            } else {
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re * half, im * half)
            };
            eta.set(0, l, m, z);
        }
    }
    eta
}

/// Current coefficients of one process and the number of steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseState {
    pub coeffs: SpectralCoeffs,
    pub step: usize,
}

impl NoiseState {
    pub fn zeros(lmax: usize) -> Self {
        Self { coeffs: SpectralCoeffs::zeros(lmax, lmax, 1), step: 0 }
    }

    /// A draw from the stationary distribution, scaled by `sign`.
    pub fn stationary(params: &DiffusionParams, rng: &mut impl Rng, sign: f64) -> Self {
        let mut eta = draw_eta(params.lmax, rng);
        let scale = sign / (1.0 - params.phi * params.phi).sqrt();
        for l in 0..params.lmax {
            for m in 0..=l {
                eta.set(0, l, m, eta.get(0, l, m) * params.sigma_l[l] * scale);
            }
        }
        Self { coeffs: eta, step: 0 }
    }
}

/// Advances `state` with a given innovation `eta`.
pub fn step_with_eta(state: &NoiseState, params: &DiffusionParams, eta: &SpectralCoeffs) -> Result<NoiseState> {
    let lmax = params.lmax;
    if state.coeffs.lmax() != lmax || eta.lmax() != lmax {
        return Err(shape_err(format!("lmax {lmax}"), format!("lmax {} / {}", state.coeffs.lmax(), eta.lmax())));
    }
    let mut next = state.coeffs.clone();
    for l in 0..lmax {
        for m in 0..=l {
            next.set(0, l, m, state.coeffs.get(0, l, m) * params.phi + eta.get(0, l, m) * params.sigma_l[l]);
        }
    }
    Ok(NoiseState { coeffs: next, step: state.step + 1 })
}

/// One step of the process with a fresh innovation from `rng`.
pub fn diffusion_step(state: &NoiseState, params: &DiffusionParams, rng: &mut impl Rng) -> Result<NoiseState> {
    step_with_eta(state, params, &draw_eta(params.lmax, rng))
}

/// A bank of independent processes synthesised onto a grid, one channel each.
///
/// A stream built with `sign = -1` and the same seed as a `sign = +1` stream
/// consumes the same innovations negated, which pairs ensemble members for
/// noise centering.
#[derive(Debug)]
pub struct NoiseStream {
    params: Vec<DiffusionParams>,
    states: Vec<NoiseState>,
    rng: ChaCha8Rng,
    sign: f64,
    plan: ShtPlan,
    last_eta: Vec<SpectralCoeffs>,
}

impl NoiseStream {
    /// All processes must share one `lmax`. States start stationary.
    pub fn new(params: Vec<DiffusionParams>, grid: impl Into<Arc<GridSpec>>, seed: u64, sign: f64) -> Result<Self> {
        let lmax = params
            .first()
            .ok_or_else(|| Error::InvalidArgument("noise stream needs at least one process".into()))?
            .lmax;
        if params.iter().any(|p| p.lmax != lmax) {
            return Err(Error::InvalidArgument("all noise processes must share lmax".into()));
        }
        let plan = ShtPlan::new(grid, lmax, lmax)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states = params.iter().map(|p| NoiseState::stationary(p, &mut rng, sign)).collect();
        Ok(Self { params, states, rng, sign, plan, last_eta: Vec::new() })
    }

    /// Stream for ensemble member `member`. With `centered`, members `2e` and
    /// `2e + 1` share a seed and the odd member's innovations are negated.
    pub fn for_member(
        params: Vec<DiffusionParams>,
        grid: impl Into<Arc<GridSpec>>,
        base_seed: u64,
        member: usize,
        centered: bool,
    ) -> Result<Self> {
        let (idx, sign) = if centered {
            (member / 2, if member % 2 == 1 { -1.0 } else { 1.0 })
        } else {
            (member, 1.0)
        };
        let seed = base_seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(idx as u64 + 1));
        Self::new(params, grid, seed, sign)
    }

    /// The eight standard channels at a given `lmax`.
    pub fn standard(grid: impl Into<Arc<GridSpec>>, lmax: usize, seed: u64) -> Result<Self> {
        let params = STANDARD_KT.iter().map(|&k| diffusion_params(1.0, 1.0, k, lmax)).collect::<Result<_>>()?;
        Self::new(params, grid, seed, 1.0)
    }

    pub fn channels(&self) -> usize {
        self.params.len()
    }

    pub fn sign(&self) -> f64 {
        self.sign
    }

    pub fn states(&self) -> &[NoiseState] {
        &self.states
    }

    /// Signed innovations consumed by the most recent [`NoiseStream::advance`].
    pub fn last_eta(&self) -> &[SpectralCoeffs] {
        &self.last_eta
    }

    /// Synthesises the current states on the stream's grid.
    pub fn current(&self) -> Result<SphericalField> {
        let lmax = self.params[0].lmax;
        let mut all = SpectralCoeffs::zeros(lmax, lmax, self.states.len());
        for (c, s) in self.states.iter().enumerate() {
            all.channel_mut(c).copy_from_slice(s.coeffs.channel(0));
        }
        self.plan.inverse(&all)
    }

    /// Steps every process once.
    pub fn advance(&mut self) -> Result<()> {
        self.last_eta.clear();
        for (p, s) in self.params.iter().zip(self.states.iter_mut()) {
            let mut eta = draw_eta(p.lmax, &mut self.rng);
            eta.scale(self.sign);
            *s = step_with_eta(s, p, &eta)?;
            self.last_eta.push(eta);
        }
        Ok(())
    }
}
