//! Training objective: spatial and spectral ensemble CRPS with channel,
//! temporal and rollout weighting, plus analytic subgradients.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{shape_err, Error, Result};
use crate::exec;
use crate::field::{EnsembleField, SphericalField};
use crate::grids::{GridKind, GridSpec};
use crate::harmonics::{ShtPlan, SpectralCoeffs};
use crate::metrics::{crps_field, crps_sorted, CrpsVariant};

/// Weights of [`combined_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub w_c: Vec<f64>,
    pub w_dt: Vec<f64>,
    /// Per-step weights; `None` means `1/N_times`.
    pub w_n: Option<Vec<f64>>,
    pub lambda_spectral: f64,
    pub variant: CrpsVariant,
    /// Highest degree in the spectral sum; `None` means `nlat/2`.
    pub lmax_sum: Option<usize>,
}

impl LossWeights {
    /// Unit channel and temporal weights, default rollout weights.
    pub fn uniform(channels: usize, lambda_spectral: f64, variant: CrpsVariant) -> Self {
        Self {
            w_c: vec![1.0; channels],
            w_dt: vec![1.0; channels],
            w_n: None,
            lambda_spectral,
            variant,
            lmax_sum: None,
        }
    }

    fn validate(&self, channels: usize, steps: usize) -> Result<Vec<f64>> {
        if self.w_c.len() != channels || self.w_dt.len() != channels {
            return Err(shape_err(
                format!("{channels} channel weights"),
                format!("{} w_c, {} w_dt", self.w_c.len(), self.w_dt.len()),
            ));
        }
        let w_n = match &self.w_n {
            Some(w) if w.len() != steps => {
                return Err(shape_err(format!("{steps} step weights"), w.len()));
            }
            Some(w) => w.clone(),
            None => vec![1.0 / steps as f64; steps],
        };
        let all = self.w_c.iter().chain(&self.w_dt).chain(&w_n).chain(std::iter::once(&self.lambda_spectral));
        if all.clone().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument("loss weights must be finite and non-negative".into()));
        }
        Ok(w_n)
    }
}

/// Quadrature-weighted spatial mean of the pointwise CRPS, per channel.
pub fn spatial_crps_loss(ens: &EnsembleField, obs: &SphericalField, variant: CrpsVariant) -> Result<Vec<f64>> {
    crps_field(ens, obs, variant)
}

/// Default upper degree of the spectral sum.
pub fn default_lmax_sum(grid: &GridSpec) -> usize {
    grid.nlat() / 2
}

fn spectral_plan(grid: &Arc<GridSpec>, lmax_sum: usize) -> Result<ShtPlan> {
    if grid.kind() != GridKind::Gaussian {
        return Err(Error::NonGaussianGrid);
    }
    if lmax_sum > grid.nlat() / 2 {
        return Err(Error::InvalidArgument(format!(
            "lmax_sum {lmax_sum} exceeds nlat/2 = {}",
            grid.nlat() / 2
        )));
    }
    let lmax = lmax_sum + 1;
    ShtPlan::new(grid.clone(), lmax, lmax.min(grid.nlon() / 2))
}

fn member_coeffs(plan: &ShtPlan, ens: &EnsembleField) -> Result<Vec<SpectralCoeffs>> {
    (0..ens.members()).map(|e| plan.forward(&ens.member(e))).collect()
}

fn check_variant(variant: CrpsVariant, members: usize) -> Result<()> {
    if members == 0 || (variant == CrpsVariant::Fair && members < 2) {
        return Err(Error::InvalidArgument(format!("{members} members is too few for {variant:?} CRPS")));
    }
    Ok(())
}

/// Visits every summed coefficient `(c, ℓ, m)` with `1 <= ℓ <= lmax_sum`.
fn for_each_mode(plan: &ShtPlan, mut f: impl FnMut(usize, usize)) {
    for l in 1..plan.lmax() {
        for m in 0..=l.min(plan.mmax() - 1) {
            f(l, m);
        }
    }
}

/// CRPS of every spectral coefficient, real and imaginary parts scored
/// separately, summed over `1 <= ℓ <= lmax_sum` with `m > 0` counted twice.
pub fn spectral_crps_loss(
    ens: &EnsembleField,
    obs: &SphericalField,
    lmax_sum: usize,
    variant: CrpsVariant,
) -> Result<Vec<f64>> {
    ens.check_obs(obs)?;
    check_variant(variant, ens.members())?;
    let plan = spectral_plan(ens.grid_arc(), lmax_sum)?;
    let members = member_coeffs(&plan, ens)?;
    let truth = plan.forward(obs)?;
    let mut buf = Vec::with_capacity(ens.members());
    Ok((0..ens.channels())
        .map(|c| {
            let mut total = 0.0;
            for_each_mode(&plan, |l, m| {
                let o = truth.get(c, l, m);
                let mut part = |get: fn(Complex64) -> f64| {
                    buf.clear();
                    buf.extend(members.iter().map(|a| get(a.get(c, l, m))));
                    buf.sort_by(f64::total_cmp);
                    crps_sorted(&buf, get(o), variant)
                };
                total += SpectralCoeffs::multiplicity(m) * (part(|z| z.re) + part(|z| z.im));
            });
            total
        })
        .collect())
}

/// `w_Δt` per channel: the reciprocal of the time-mean spatial standard
/// deviation of consecutive differences.
pub fn temporal_weights(samples: &[SphericalField]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("temporal weights need at least two samples".into()));
    }
    for s in &samples[1..] {
        samples[0].check_same_shape(s)?;
    }
    let grid = samples[0].grid();
    let total = grid.total_weight();
    let (w, steps) = (grid.nlon(), samples.len() - 1);
    (0..samples[0].channels())
        .map(|c| {
            let mut acc = 0.0;
            for pair in samples.windows(2) {
                let d: Vec<f64> = pair[1].channel(c).iter().zip(pair[0].channel(c)).map(|(b, a)| b - a).collect();
                let wmean = |f: &dyn Fn(f64) -> f64| {
                    d.chunks(w)
                        .zip(grid.quad_weights())
                        .map(|(ring, q)| q * ring.iter().map(|&v| f(v)).sum::<f64>())
                        .sum::<f64>()
                        / total
                };
                let mean = wmean(&|v| v);
                acc += wmean(&|v| (v - mean) * (v - mean)).sqrt();
            }
            let std = acc / steps as f64;
            if std == 0.0 {
                Err(Error::UndefinedRatio("zero difference variance"))
            } else {
                Ok(1.0 / std)
            }
        })
        .collect()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Subgradient of the pointwise CRPS with respect to each member, with `sign(0) = 0`.
///
/// `Cdf` and `SpreadSkill` are the same function and share one gradient.
pub fn crps_subgradient(values: &[f64], obs: f64, variant: CrpsVariant) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let nf = n as f64;
    let pair_denom = match variant {
        CrpsVariant::Fair if n >= 2 => nf * (nf - 1.0),
        CrpsVariant::Fair => f64::INFINITY,
        _ => nf * nf,
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    values
        .iter()
        .map(|&u| {
            let below = sorted.partition_point(|&v| v < u) as f64;
            let above = (n - sorted.partition_point(|&v| v <= u)) as f64;
            sign(u - obs) / nf - (below - above) / pair_denom
        })
        .collect()
}

/// Gradient of the spatial loss of channel `c` with respect to every member value.
fn add_spatial_gradient(ens: &EnsembleField, obs: &SphericalField, variant: CrpsVariant, scale: &[f64], out: &mut [f64]) {
    let grid = ens.grid();
    let (h, w, n, ch) = (grid.nlat(), grid.nlon(), grid.len(), ens.channels());
    let total = grid.total_weight();
    let members = ens.members();
    let rows = exec::map_indexed(ch * h, |r| {
        let (c, i) = (r / h, r % h);
        let q = grid.quad_weights()[i] / total * scale[c];
        let mut ring = vec![0.0; members * w];
        let mut buf = Vec::with_capacity(members);
        for j in 0..w {
            let p = i * w + j;
            ens.values_at(c, p, &mut buf);
            for (e, g) in crps_subgradient(&buf, obs.channel(c)[p], variant).into_iter().enumerate() {
                ring[e * w + j] = q * g;
            }
        }
        ring
    });
    for (r, ring) in rows.iter().enumerate() {
        let (c, i) = (r / h, r % h);
        for e in 0..members {
            let dst = &mut out[(e * ch + c) * n + i * w..][..w];
            for (d, g) in dst.iter_mut().zip(&ring[e * w..(e + 1) * w]) {
                *d += g;
            }
        }
    }
}

/// Gradient of the spectral loss with respect to every member value:
/// `∂L/∂u(x) = q(x) · isht(G)(x)` with `G` the coefficient subgradients.
fn add_spectral_gradient(
    ens: &EnsembleField,
    obs: &SphericalField,
    lmax_sum: usize,
    variant: CrpsVariant,
    scale: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let plan = spectral_plan(ens.grid_arc(), lmax_sum)?;
    let members = member_coeffs(&plan, ens)?;
    let truth = plan.forward(obs)?;
    let ch = ens.channels();
    let mut grads: Vec<SpectralCoeffs> =
        (0..ens.members()).map(|_| SpectralCoeffs::zeros(plan.lmax(), plan.mmax(), ch)).collect();
    let mut buf = Vec::with_capacity(ens.members());
    for (c, &sc) in scale.iter().enumerate().take(ch) {
        for_each_mode(&plan, |l, m| {
            let o = truth.get(c, l, m);
            buf.clear();
            buf.extend(members.iter().map(|a| a.get(c, l, m).re));
            let gre = crps_subgradient(&buf, o.re, variant);
            buf.clear();
            buf.extend(members.iter().map(|a| a.get(c, l, m).im));
            let gim = crps_subgradient(&buf, o.im, variant);
            for (e, g) in grads.iter_mut().enumerate() {
                g.set(c, l, m, Complex64::new(gre[e], gim[e]) * sc);
            }
        });
    }
    let grid = ens.grid();
    let (w, n) = (grid.nlon(), grid.len());
    for (e, g) in grads.iter().enumerate() {
        let field = plan.inverse(g)?;
        for c in 0..ch {
            let dst = &mut out[(e * ch + c) * n..][..n];
            for ((d, v), p) in dst.iter_mut().zip(field.channel(c)).zip(0..) {
                *d += grid.quad_weights()[p / w] * v;
            }
        }
    }
    Ok(())
}

fn check_rollout(rollout: &[(EnsembleField, SphericalField)]) -> Result<usize> {
    let (e0, _) = rollout.first().ok_or_else(|| Error::InvalidArgument("empty rollout".into()))?;
    for (ens, obs) in rollout {
        ens.check_obs(obs)?;
        if !ens.grid().same_as(e0.grid()) {
            return Err(Error::GridMismatch);
        }
        if ens.channels() != e0.channels() || ens.members() != e0.members() {
            return Err(shape_err(
                format!("{} members x {} channels", e0.members(), e0.channels()),
                format!("{} members x {} channels", ens.members(), ens.channels()),
            ));
        }
    }
    Ok(e0.channels())
}

/// `Σ_n Σ_c w_c w_Δt,c w_n (L_spatial + λ L_spectral)`.
///
/// The spectral term is skipped when `λ = 0`.
pub fn combined_loss(rollout: &[(EnsembleField, SphericalField)], weights: &LossWeights) -> Result<f64> {
    let ch = check_rollout(rollout)?;
    let w_n = weights.validate(ch, rollout.len())?;
    let mut total = 0.0;
    for ((ens, obs), wn) in rollout.iter().zip(&w_n) {
        let spatial = spatial_crps_loss(ens, obs, weights.variant)?;
        let spectral = if weights.lambda_spectral != 0.0 {
            let lmax_sum = weights.lmax_sum.unwrap_or_else(|| default_lmax_sum(ens.grid()));
            spectral_crps_loss(ens, obs, lmax_sum, weights.variant)?
        } else {
            vec![0.0; ch]
        };
        for c in 0..ch {
            total += weights.w_c[c] * weights.w_dt[c] * wn * (spatial[c] + weights.lambda_spectral * spectral[c]);
        }
    }
    Ok(total)
}

/// Subgradient of [`combined_loss`] with respect to every member value of
/// every step, laid out like the ensembles.
pub fn combined_loss_gradient(
    rollout: &[(EnsembleField, SphericalField)],
    weights: &LossWeights,
) -> Result<Vec<EnsembleField>> {
    let ch = check_rollout(rollout)?;
    let w_n = weights.validate(ch, rollout.len())?;
    check_variant(weights.variant, rollout[0].0.members())?;
    rollout
        .iter()
        .zip(&w_n)
        .map(|((ens, obs), wn)| {
            let scale: Vec<f64> = (0..ch).map(|c| weights.w_c[c] * weights.w_dt[c] * wn).collect();
            let mut grad = vec![0.0; ens.data().len()];
            add_spatial_gradient(ens, obs, weights.variant, &scale, &mut grad);
            if weights.lambda_spectral != 0.0 {
                let lmax_sum = weights.lmax_sum.unwrap_or_else(|| default_lmax_sum(ens.grid()));
                let s: Vec<f64> = scale.iter().map(|v| v * weights.lambda_spectral).collect();
                add_spectral_gradient(ens, obs, lmax_sum, weights.variant, &s, &mut grad)?;
            }
            EnsembleField::from_vec(ens.grid_arc().clone(), ens.members(), ch, grad)
        })
        .collect()
}
