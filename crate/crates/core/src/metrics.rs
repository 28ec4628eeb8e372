//! Deterministic and probabilistic verification scores and spectral diagnostics.
//!
//! Spatial averages are quadrature sums divided by the total grid weight,
//! which is exactly `4π` on Gaussian grids.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec;
use crate::field::{EnsembleField, SphericalField};
use crate::grids::GridSpec;
use crate::harmonics::{default_truncation, ShtPlan, SpectralCoeffs};

/// Ensemble CRPS estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CrpsVariant {
    /// Integral of the squared CDF difference, via the sorted-rank sum.
    Cdf,
    /// `E|U − u*| − ½ E|U − U'|` with the biased `1/(2N²)` spread term.
    SpreadSkill,
    /// Spread term scaled by `1/(2N(N−1))`.
    Fair,
}

impl FromStr for CrpsVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cdf" => Ok(Self::Cdf),
            "spread_skill" | "biased" => Ok(Self::SpreadSkill),
            "fair" => Ok(Self::Fair),
            other => Err(Error::InvalidArgument(format!("unknown CRPS variant {other:?}"))),
        }
    }
}

/// Per-ring quadrature weights divided by the total weight, as a flat per-point array.
fn normalised_point_weights(grid: &GridSpec) -> Vec<f64> {
    let total = grid.total_weight();
    grid.quad_weights()
        .iter()
        .flat_map(|&w| std::iter::repeat_n(w / total, grid.nlon()))
        .collect()
}

/// Weighted spatial mean of `f(p)` over all points, summed ring by ring in a fixed order.
fn weighted_mean(grid: &GridSpec, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    let w = grid.nlon();
    let total = grid.total_weight();
    let rings = exec::map_indexed(grid.nlat(), |i| (0..w).map(|j| f(i * w + j)).sum::<f64>() * grid.quad_weights()[i]);
    rings.iter().sum::<f64>() / total
}

fn check_pair(a: &SphericalField, b: &SphericalField) -> Result<()> {
    a.check_same_shape(b)
}

/// `p = 2`: RMSE `sqrt(mean |u − u*|²)`; `p = 1`: MAE `mean |u − u*|`.
pub fn lp_error(pred: &SphericalField, truth: &SphericalField, p: u32) -> Result<Vec<f64>> {
    check_pair(pred, truth)?;
    let g = pred.grid();
    (0..pred.channels())
        .map(|c| {
            let (a, b) = (pred.channel(c), truth.channel(c));
            match p {
                1 => Ok(weighted_mean(g, |i| (a[i] - b[i]).abs())),
                2 => Ok(weighted_mean(g, |i| (a[i] - b[i]).powi(2)).sqrt()),
                _ => Err(Error::InvalidArgument(format!("unsupported norm p={p}"))),
            }
        })
        .collect()
}

pub fn rmse(pred: &SphericalField, truth: &SphericalField) -> Result<Vec<f64>> {
    lp_error(pred, truth, 2)
}

pub fn mae(pred: &SphericalField, truth: &SphericalField) -> Result<Vec<f64>> {
    lp_error(pred, truth, 1)
}

/// Anomaly correlation coefficient against an explicit climatology.
pub fn acc(pred: &SphericalField, truth: &SphericalField, climatology: &SphericalField) -> Result<Vec<f64>> {
    check_pair(pred, truth)?;
    check_pair(pred, climatology)?;
    let g = pred.grid();
    (0..pred.channels())
        .map(|c| {
            let (u, t, k) = (pred.channel(c), truth.channel(c), climatology.channel(c));
            let num = weighted_mean(g, |i| (u[i] - k[i]) * (t[i] - k[i]));
            let vu = weighted_mean(g, |i| (u[i] - k[i]).powi(2));
            let vt = weighted_mean(g, |i| (t[i] - k[i]).powi(2));
            let den = (vu * vt).sqrt();
            if den == 0.0 {
                return Err(Error::UndefinedRatio("anomaly variance is zero"));
            }
            Ok(num / den)
        })
        .collect()
}

/// Ensemble mean and Bessel-corrected ensemble variance.
pub fn ensemble_stats(ens: &EnsembleField) -> Result<(SphericalField, SphericalField)> {
    let n = ens.members();
    if n < 2 {
        return Err(Error::InvalidArgument("ensemble variance needs at least two members".into()));
    }
    let grid = ens.grid_arc().clone();
    let len = ens.channels() * grid.len();
    let data = ens.data();
    let mut mean = vec![0.0; len];
    for e in 0..n {
        mean.iter_mut().zip(&data[e * len..(e + 1) * len]).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; len];
    for e in 0..n {
        var.iter_mut()
            .zip(&data[e * len..(e + 1) * len])
            .zip(&mean)
            .for_each(|((s, v), m)| *s += (v - m).powi(2));
    }
    var.iter_mut().for_each(|s| *s /= (n - 1) as f64);
    Ok((
        SphericalField::from_vec(grid.clone(), ens.channels(), mean)?,
        SphericalField::from_vec(grid, ens.channels(), var)?,
    ))
}

/// CRPS of a pre-sorted ensemble.
pub fn crps_sorted(sorted: &[f64], obs: f64, variant: CrpsVariant) -> f64 {
    let n = sorted.len();
    let nf = n as f64;
    match variant {
        CrpsVariant::Cdf => {
            let rank = sorted.partition_point(|&u| u <= obs);
            let mut s = 0.0;
            for (idx, &u) in sorted.iter().enumerate() {
                let e = (idx + 1) as f64;
                if idx < rank {
                    s += (2.0 * e - 1.0) * (obs - u);
                } else {
                    s += (2.0 * nf + 1.0 - 2.0 * e) * (u - obs);
                }
            }
            s / (nf * nf)
        }
        CrpsVariant::SpreadSkill | CrpsVariant::Fair => {
            let skill = sorted.iter().map(|u| (u - obs).abs()).sum::<f64>() / nf;
            let spread = pairwise_abs_sum(sorted);
            let denom = if variant == CrpsVariant::Fair { 2.0 * nf * (nf - 1.0) } else { 2.0 * nf * nf };
            if n < 2 {
                skill
            } else {
                skill - spread / denom
            }
        }
    }
}

/// `Σ_e Σ_i |u_e − u_i|` of a sorted slice in O(N).
pub fn pairwise_abs_sum(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    2.0 * sorted
        .iter()
        .enumerate()
        .map(|(i, &u)| (2.0 * (i + 1) as f64 - n - 1.0) * u)
        .sum::<f64>()
}

/// Pointwise ensemble CRPS in O(N log N).
pub fn crps_pointwise(values: &[f64], obs: f64, variant: CrpsVariant) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("CRPS needs at least one member".into()));
    }
    if variant == CrpsVariant::Fair && values.len() < 2 {
        return Err(Error::InvalidArgument("fair CRPS needs at least two members".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(crps_sorted(&sorted, obs, variant))
}

/// Weighted spatial mean of the pointwise CRPS, per channel.
pub fn crps_field(ens: &EnsembleField, obs: &SphericalField, variant: CrpsVariant) -> Result<Vec<f64>> {
    ens.check_obs(obs)?;
    if variant == CrpsVariant::Fair && ens.members() < 2 {
        return Err(Error::InvalidArgument("fair CRPS needs at least two members".into()));
    }
    let g = ens.grid();
    Ok((0..ens.channels())
        .map(|c| {
            let o = obs.channel(c);
            weighted_mean(g, |p| {
                let mut v: Vec<f64> = (0..ens.members()).map(|e| ens.value(e, c, p)).collect();
                v.sort_by(f64::total_cmp);
                crps_sorted(&v, o[p], variant)
            })
        })
        .collect())
}

/// Spread, skill and `SSR = sqrt((N+1)/N) · Spread / Skill` per channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpreadSkill {
    pub spread: f64,
    pub skill: f64,
    pub ssr: f64,
}

pub fn spread_skill(ens: &EnsembleField, obs: &SphericalField) -> Result<Vec<SpreadSkill>> {
    ens.check_obs(obs)?;
    let n = ens.members() as f64;
    let (mean, var) = ensemble_stats(ens)?;
    let g = ens.grid();
    (0..ens.channels())
        .map(|c| {
            let (m, v, o) = (mean.channel(c), var.channel(c), obs.channel(c));
            let spread = weighted_mean(g, |p| v[p]).sqrt();
            let skill = weighted_mean(g, |p| (m[p] - o[p]).powi(2)).sqrt();
            if skill == 0.0 {
                return Err(Error::UndefinedRatio("ensemble-mean skill is zero"));
            }
            Ok(SpreadSkill { spread, skill, ssr: ((n + 1.0) / n).sqrt() * spread / skill })
        })
        .collect()
}

pub fn ssr(ens: &EnsembleField, obs: &SphericalField) -> Result<Vec<f64>> {
    Ok(spread_skill(ens, obs)?.into_iter().map(|s| s.ssr).collect())
}

/// Quadrature-weighted counts of the observation's rank among `E` members.
#[derive(Debug, Clone, PartialEq)]
pub struct RankHistogram {
    pub counts: Vec<f64>,
    pub total_weight: f64,
}

impl RankHistogram {
    /// Bin frequencies summing to one.
    pub fn normalized(&self) -> Vec<f64> {
        self.counts.iter().map(|c| c / self.total_weight).collect()
    }
}

/// Rank = number of members strictly below the observation, with ties placed
/// uniformly at random among the equal members using a generator seeded by `seed`.
pub fn rank_histogram(ens: &EnsembleField, obs: &SphericalField, seed: u64) -> Result<Vec<RankHistogram>> {
    ens.check_obs(obs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = ens.grid();
    let weights = normalised_point_weights(g);
    let mut out = Vec::with_capacity(ens.channels());
    let mut buf = Vec::with_capacity(ens.members());
    for c in 0..ens.channels() {
        let mut counts = vec![0.0; ens.members() + 1];
        let o = obs.channel(c);
        for (p, &w) in weights.iter().enumerate() {
            ens.values_at(c, p, &mut buf);
            let below = buf.iter().filter(|&&u| u < o[p]).count();
            let ties = buf.iter().filter(|&&u| u == o[p]).count();
            let rank = if ties == 0 { below } else { below + rng.random_range(0..=ties) };
            counts[rank] += w;
        }
        let total_weight = counts.iter().sum();
        out.push(RankHistogram { counts, total_weight });
    }
    Ok(out)
}

/// `PSD(ℓ) = Σ_{|m|<=ℓ} |û_ℓ^m|²` per channel with the default truncation.
pub fn angular_psd(field: &SphericalField) -> Result<Vec<Vec<f64>>> {
    let (lmax, mmax) = default_truncation(field.grid());
    let coeffs = ShtPlan::new(field.grid_arc().clone(), lmax, mmax)?.forward(field)?;
    Ok(psd_from_coeffs(&coeffs))
}

pub fn psd_from_coeffs(coeffs: &SpectralCoeffs) -> Vec<Vec<f64>> {
    (0..coeffs.channels())
        .map(|c| {
            (0..coeffs.lmax())
                .map(|l| {
                    (0..=l.min(coeffs.mmax() - 1))
                        .map(|m| SpectralCoeffs::multiplicity(m) * coeffs.get(c, l, m).norm_sqr())
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// `2π sin θ |Δφ Σ_j u(θ, φ_j) e^{-imφ_j}|²` for `m = 0..=nlon/2`, per channel.
pub fn zonal_psd(field: &SphericalField, lat_index: usize) -> Result<Vec<Vec<f64>>> {
    let g = field.grid();
    if lat_index >= g.nlat() {
        return Err(Error::InvalidArgument(format!("latitude index {lat_index} out of range 0..{}", g.nlat())));
    }
    let w = g.nlon();
    let fft = FftPlanner::new().plan_fft_forward(w);
    let scale = 2.0 * std::f64::consts::PI * g.colatitudes()[lat_index].sin();
    Ok((0..field.channels())
        .map(|c| {
            let ring = &field.channel(c)[lat_index * w..(lat_index + 1) * w];
            let mut buf: Vec<Complex64> = ring.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fft.process(&mut buf);
            (0..=w / 2).map(|m| scale * (buf[m] * g.dphi()).norm_sqr()).collect()
        })
        .collect())
}
