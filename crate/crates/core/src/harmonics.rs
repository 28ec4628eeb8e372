//! Orthonormal spherical harmonics and the FFT-plus-Legendre transform pair.
//!
//! Harmonics follow `Y_ℓ^m(θ, φ) = P̂_ℓ^m(cos θ) e^{imφ}` with the
//! Condon-Shortley phase folded into `P̂`, so that
//! `∫ Y_ℓ^m conj(Y_ℓ'^m') dμ = δ_ℓℓ' δ_mm'` and `Y_ℓ^{-m} = (-1)^m conj(Y_ℓ^m)`.
//! Coefficients of real signals are stored for `m >= 0` only.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{shape_err, Error, Result};
use crate::exec;
use crate::field::SphericalField;
use crate::grids::{GridKind, GridSpec};

/// Default spectral truncation for a grid: `lmax = nlat`, `mmax = min(lmax, nlon / 2)`.
pub fn default_truncation(grid: &GridSpec) -> (usize, usize) {
    let lmax = grid.nlat();
    (lmax, lmax.min(grid.nlon() / 2))
}

/// Dense triangular coefficient array `[channel, ℓ, m]`, zero for `m > ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoeffs {
    lmax: usize,
    mmax: usize,
    channels: usize,
    data: Vec<Complex64>,
}

impl SpectralCoeffs {
    pub fn zeros(lmax: usize, mmax: usize, channels: usize) -> Self {
        assert!(mmax <= lmax, "mmax must not exceed lmax");
        Self { lmax, mmax, channels, data: vec![Complex64::new(0.0, 0.0); channels * lmax * mmax] }
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn mmax(&self) -> usize {
        self.mmax
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    fn index(&self, c: usize, l: usize, m: usize) -> usize {
        (c * self.lmax + l) * self.mmax + m
    }

    pub fn get(&self, c: usize, l: usize, m: usize) -> Complex64 {
        self.data[self.index(c, l, m)]
    }

    /// Sets `û_ℓ^m`; entries above the diagonal are kept at zero.
    pub fn set(&mut self, c: usize, l: usize, m: usize, v: Complex64) {
        assert!(m <= l, "coefficient ({l},{m}) lies above the diagonal");
        let i = self.index(c, l, m);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Coefficients of one channel, row-major `[ℓ, m]`.
    pub fn channel(&self, c: usize) -> &[Complex64] {
        let n = self.lmax * self.mmax;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [Complex64] {
        let n = self.lmax * self.mmax;
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Multiplicity of order `m` when summing over `|m| <= ℓ` of a real signal.
    pub fn multiplicity(m: usize) -> f64 {
        if m == 0 {
            1.0
        } else {
            2.0
        }
    }

    /// Spectral energy `Σ_ℓ Σ_{|m|<=ℓ} |û_ℓ^m|²` per channel.
    pub fn energy(&self) -> Vec<f64> {
        (0..self.channels)
            .map(|c| {
                let mut e = 0.0;
                for l in 0..self.lmax {
                    for m in 0..=l.min(self.mmax - 1) {
                        e += Self::multiplicity(m) * self.get(c, l, m).norm_sqr();
                    }
                }
                e
            })
            .collect()
    }

    pub fn max_abs_diff(&self, other: &SpectralCoeffs) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Copies into a differently truncated array, dropping or zero-padding modes.
    pub fn truncated(&self, lmax: usize, mmax: usize) -> Self {
        let mut out = Self::zeros(lmax, mmax, self.channels);
        for c in 0..self.channels {
            for l in 0..lmax.min(self.lmax) {
                for m in 0..=l.min(mmax.min(self.mmax).saturating_sub(1)) {
                    if m < mmax && m < self.mmax {
                        out.set(c, l, m, self.get(c, l, m));
                    }
                }
            }
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }
}

/// Values `P̂_ℓ^m(cos θ_i)` laid out `[m, ℓ, i]`, optionally pre-multiplied by
/// the latitude quadrature weight of ring `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreTable {
    lmax: usize,
    mmax: usize,
    nlat: usize,
    weighted: bool,
    values: Vec<f64>,
}

impl LegendreTable {
    pub fn new(lmax: usize, mmax: usize, colatitudes: &[f64]) -> Result<Self> {
        if mmax > lmax {
            return Err(Error::InvalidArgument(format!("mmax {mmax} exceeds lmax {lmax}")));
        }
        let nlat = colatitudes.len();
        let mut values = vec![0.0; mmax * lmax * nlat];
        for (i, &theta) in colatitudes.iter().enumerate() {
            let (s, x) = theta.sin_cos();
            let mut pmm = 1.0 / (4.0 * PI).sqrt();
            for m in 0..mmax {
                if m > 0 {
                    let mf = m as f64;
                    pmm *= -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s;
                }
                let at = |l: usize| (m * lmax + l) * nlat + i;
                values[at(m)] = pmm;
                if m + 1 < lmax {
                    let mut p_prev = pmm;
                    let mut p = (2.0 * m as f64 + 3.0).sqrt() * x * pmm;
                    values[at(m + 1)] = p;
                    for l in m + 2..lmax {
                        let (lf, mf) = (l as f64, m as f64);
                        let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                        let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
                        let next = a * (x * p - b * p_prev);
                        p_prev = p;
                        p = next;
                        values[at(l)] = p;
                    }
                }
            }
        }
        Ok(Self { lmax, mmax, nlat, weighted: false, values })
    }

    /// Table with the latitude weights of `grid` folded in.
    pub fn weighted_for(grid: &GridSpec, lmax: usize, mmax: usize) -> Result<Self> {
        let mut t = Self::new(lmax, mmax, grid.colatitudes())?;
        for chunk in t.values.chunks_mut(t.nlat) {
            for (i, v) in chunk.iter_mut().enumerate() {
                *v *= grid.latitude_weight(i);
            }
        }
        t.weighted = true;
        Ok(t)
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn mmax(&self) -> usize {
        self.mmax
    }

    pub fn nlat(&self) -> usize {
        self.nlat
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    pub fn get(&self, i: usize, l: usize, m: usize) -> f64 {
        self.values[(m * self.lmax + l) * self.nlat + i]
    }

    /// Latitude profile `P̂_ℓ^m(cos θ_·)` for one `(ℓ, m)`.
    pub fn profile(&self, l: usize, m: usize) -> &[f64] {
        let s = (m * self.lmax + l) * self.nlat;
        &self.values[s..s + self.nlat]
    }
}

/// `P̂_ℓ^m(cos θ)` at a single colatitude.
pub fn normalized_legendre(l: usize, m: usize, theta: f64) -> f64 {
    LegendreTable::new(l + 1, m + 1, &[theta]).map(|t| t.get(0, l, m)).unwrap_or(0.0)
}

/// Forward FFT of every ring, truncated to `mmax` orders and scaled by `scale`.
pub(crate) fn ring_fft(
    fft: &dyn Fft<f64>,
    ring: &[f64],
    mmax: usize,
    scale: f64,
    out: &mut [Complex64],
) {
    let mut buf: Vec<Complex64> = ring.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut buf);
    for (m, o) in out.iter_mut().enumerate().take(mmax) {
        *o = buf[m % buf.len()] * scale;
    }
}

/// Real ring synthesis `Re Σ_m c_m G_m e^{imφ_j}` through one inverse FFT.
pub(crate) fn ring_synthesis(ifft: &dyn Fft<f64>, orders: &[Complex64], out: &mut [f64]) {
    let w = out.len();
    let mut spec = vec![Complex64::new(0.0, 0.0); w];
    for (m, &g) in orders.iter().enumerate() {
        if m == 0 {
            spec[0] += Complex64::new(g.re, 0.0);
        } else {
            let k = m % w;
            spec[k] += g;
            spec[(w - k) % w] += g.conj();
        }
    }
    ifft.process(&mut spec);
    for (o, s) in out.iter_mut().zip(&spec) {
        *o = s.re;
    }
}

/// Precomputed forward/inverse transform for one grid and truncation.
pub struct ShtPlan {
    grid: Arc<GridSpec>,
    lmax: usize,
    mmax: usize,
    table: LegendreTable,
    weighted: LegendreTable,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ShtPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShtPlan")
            .field("grid", &(self.grid.kind(), self.grid.nlat(), self.grid.nlon()))
            .field("lmax", &self.lmax)
            .field("mmax", &self.mmax)
            .finish()
    }
}

impl ShtPlan {
    /// Plan usable for synthesis on any grid; analysis additionally needs
    /// [`ShtPlan::check_analysis`] to pass.
    pub fn new(grid: impl Into<Arc<GridSpec>>, lmax: usize, mmax: usize) -> Result<Self> {
        let grid = grid.into();
        if lmax == 0 || mmax == 0 {
            return Err(Error::InvalidArgument("lmax and mmax must be positive".into()));
        }
        let table = LegendreTable::new(lmax, mmax, grid.colatitudes())?;
        let weighted = LegendreTable::weighted_for(&grid, lmax, mmax)?;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(grid.nlon());
        let ifft = planner.plan_fft_inverse(grid.nlon());
        Ok(Self { grid, lmax, mmax, table, weighted, fft, ifft })
    }

    /// Plan with [`default_truncation`].
    pub fn for_grid(grid: impl Into<Arc<GridSpec>>) -> Result<Self> {
        let grid = grid.into();
        let (l, m) = default_truncation(&grid);
        Self::new(grid, l, m)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn mmax(&self) -> usize {
        self.mmax
    }

    pub fn table(&self) -> &LegendreTable {
        &self.table
    }

    pub fn weighted_table(&self) -> &LegendreTable {
        &self.weighted
    }

    pub(crate) fn fft(&self) -> &dyn Fft<f64> {
        self.fft.as_ref()
    }

    /// Analysis is exact only on Gaussian grids with `nlat >= lmax`, `nlon >= 2 mmax`.
    pub fn check_analysis(&self) -> Result<()> {
        if self.grid.kind() != GridKind::Gaussian {
            return Err(Error::NonGaussianGrid);
        }
        if self.grid.nlat() < self.lmax || self.grid.nlon() < 2 * self.mmax {
            return Err(Error::InsufficientResolution(format!(
                "grid {}x{} cannot resolve lmax={} mmax={}",
                self.grid.nlat(),
                self.grid.nlon(),
                self.lmax,
                self.mmax
            )));
        }
        Ok(())
    }

    fn check_field(&self, field: &SphericalField) -> Result<()> {
        if !field.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Longitudinal transform of every ring: `[channel, lat, m]`, scaled by `scale`.
    fn rings_forward(&self, field: &SphericalField, scale: f64) -> Vec<Complex64> {
        let (w, mmax) = (self.grid.nlon(), self.mmax);
        let mut out = vec![Complex64::new(0.0, 0.0); field.channels() * self.grid.nlat() * mmax];
        let data = field.data();
        exec::for_each_chunk_mut(&mut out, mmax, |r, chunk| {
            ring_fft(self.fft.as_ref(), &data[r * w..(r + 1) * w], mmax, scale, chunk);
        });
        out
    }

    /// Legendre contraction of ring spectra against `table`.
    fn contract(&self, rings: &[Complex64], channels: usize, table: &LegendreTable) -> SpectralCoeffs {
        let (h, lmax, mmax) = (self.grid.nlat(), self.lmax, self.mmax);
        let mut coeffs = SpectralCoeffs::zeros(lmax, mmax, channels);
        exec::for_each_chunk_mut(&mut coeffs.data, lmax * mmax, |c, chunk| {
            let rings = &rings[c * h * mmax..(c + 1) * h * mmax];
            for l in 0..lmax {
                for m in 0..=l.min(mmax - 1) {
                    let p = table.profile(l, m);
                    let mut acc = Complex64::new(0.0, 0.0);
                    for i in 0..h {
                        acc += rings[i * mmax + m] * p[i];
                    }
                    chunk[l * mmax + m] = acc;
                }
            }
        });
        coeffs
    }

    /// `û_ℓ^m = ∫ u conj(Y_ℓ^m) dμ` by Gauss-Legendre quadrature.
    pub fn forward(&self, field: &SphericalField) -> Result<SpectralCoeffs> {
        self.check_analysis()?;
        self.check_field(field)?;
        let rings = self.rings_forward(field, self.grid.dphi());
        Ok(self.contract(&rings, field.channels(), &self.weighted))
    }

    /// Synthesis `u = Σ_ℓ Σ_{|m|<=ℓ} û_ℓ^m Y_ℓ^m` on this plan's grid.
    pub fn inverse(&self, coeffs: &SpectralCoeffs) -> Result<SphericalField> {
        if coeffs.lmax() != self.lmax || coeffs.mmax() != self.mmax {
            return Err(shape_err(
                format!("lmax={} mmax={}", self.lmax, self.mmax),
                format!("lmax={} mmax={}", coeffs.lmax(), coeffs.mmax()),
            ));
        }
        let (h, w, lmax, mmax) = (self.grid.nlat(), self.grid.nlon(), self.lmax, self.mmax);
        let mut field = SphericalField::zeros(self.grid.clone(), coeffs.channels());
        exec::for_each_chunk_mut(field.data_mut(), w, |r, ring| {
            let (c, i) = (r / h, r % h);
            let cc = coeffs.channel(c);
            let mut orders = vec![Complex64::new(0.0, 0.0); mmax];
            for (m, g) in orders.iter_mut().enumerate() {
                for l in m..lmax {
                    *g += cc[l * mmax + m] * self.table.get(i, l, m);
                }
            }
            ring_synthesis(self.ifft.as_ref(), &orders, ring);
        });
        Ok(field)
    }

    /// Adjoint of [`ShtPlan::inverse`] under the plain dot product:
    /// `A_ℓ^m = Σ_x g(x) P̂_ℓ^m(cos θ) e^{-imφ}`, so that
    /// `Σ_x g · inverse(a) = Re Σ_ℓm c_m a_ℓ^m conj(A_ℓ^m)`.
    pub fn inverse_adjoint(&self, field: &SphericalField) -> Result<SpectralCoeffs> {
        self.check_field(field)?;
        let rings = self.rings_forward(field, 1.0);
        Ok(self.contract(&rings, field.channels(), &self.table))
    }
}

/// One-shot forward transform.
pub fn sht_forward(field: &SphericalField, lmax: usize, mmax: usize) -> Result<SpectralCoeffs> {
    ShtPlan::new(field.grid_arc().clone(), lmax, mmax)?.forward(field)
}

/// One-shot synthesis onto `grid`.
pub fn sht_inverse(coeffs: &SpectralCoeffs, grid: impl Into<Arc<GridSpec>>) -> Result<SphericalField> {
    ShtPlan::new(grid, coeffs.lmax(), coeffs.mmax())?.inverse(coeffs)
}
