//! Spherical grids and quadrature rules.
//!
//! Two tensor-product samplings are supported. The equiangular grid places
//! `nlat` rings at `θ_i = π i / nlat`, so it contains the North pole row and
//! stops one ring short of the South pole. The Gaussian grid puts `cos θ_i` at
//! the roots of the Legendre polynomial `P_nlat`, which integrates polynomials
//! in `cos θ` of degree up to `2 nlat - 1` exactly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SphericalField;

/// Maximum Newton steps per Gauss-Legendre root.
pub const NEWTON_MAX_ITER: usize = 100;
/// Convergence threshold on the Newton update.
pub const NEWTON_TOL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Equiangular,
    Gaussian,
}

impl GridKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GridKind::Equiangular => "equiangular",
            GridKind::Gaussian => "gaussian",
        }
    }
}

impl std::str::FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equiangular" => Ok(GridKind::Equiangular),
            "gaussian" => Ok(GridKind::Gaussian),
            other => Err(Error::InvalidArgument(format!("unknown grid kind '{other}'"))),
        }
    }
}

/// A tensor-product sampling of the sphere with its quadrature weights.
///
/// `quad_weights[i]` is the weight of every point on ring `i`, i.e. the
/// latitude weight already multiplied by the longitude spacing `2π/nlon`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    kind: GridKind,
    nlat: usize,
    nlon: usize,
    colatitudes: Vec<f64>,
    longitudes: Vec<f64>,
    quad_weights: Vec<f64>,
}

impl GridSpec {
    /// Equiangular grid `θ_i = π i / nlat`, `φ_j = 2π j / nlon` with
    /// trapezoidal weights `2π² sin θ_i / (nlat nlon)`.
    pub fn equiangular(nlat: usize, nlon: usize) -> Result<Self> {
        if nlat < 2 || nlon < 2 {
            return Err(Error::InvalidArgument(format!(
                "equiangular grid needs nlat >= 2 and nlon >= 2, got {nlat}x{nlon}"
            )));
        }
        let colatitudes: Vec<f64> = (0..nlat).map(|i| PI * i as f64 / nlat as f64).collect();
        let scale = 2.0 * PI * PI / (nlat as f64 * nlon as f64);
        let quad_weights = colatitudes.iter().map(|t| scale * t.sin()).collect();
        Ok(Self {
            kind: GridKind::Equiangular,
            nlat,
            nlon,
            colatitudes,
            longitudes: uniform_longitudes(nlon),
            quad_weights,
        })
    }

    /// Gaussian grid with Gauss-Legendre latitudes.
    pub fn gaussian(nlat: usize, nlon: usize) -> Result<Self> {
        if nlat < 1 || nlon < 2 {
            return Err(Error::InvalidArgument(format!(
                "gaussian grid needs nlat >= 1 and nlon >= 2, got {nlat}x{nlon}"
            )));
        }
        let (nodes, weights) = gauss_legendre(nlat)?;
        let dphi = 2.0 * PI / nlon as f64;
        Ok(Self {
            kind: GridKind::Gaussian,
            nlat,
            nlon,
            colatitudes: nodes.iter().map(|x| x.acos()).collect(),
            longitudes: uniform_longitudes(nlon),
            quad_weights: weights.iter().map(|w| w * dphi).collect(),
        })
    }

    pub fn new(kind: GridKind, nlat: usize, nlon: usize) -> Result<Self> {
        match kind {
            GridKind::Equiangular => Self::equiangular(nlat, nlon),
            GridKind::Gaussian => Self::gaussian(nlat, nlon),
        }
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn nlat(&self) -> usize {
        self.nlat
    }

    pub fn nlon(&self) -> usize {
        self.nlon
    }

    /// Number of grid points, `nlat * nlon`.
    pub fn len(&self) -> usize {
        self.nlat * self.nlon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn colatitudes(&self) -> &[f64] {
        &self.colatitudes
    }

    pub fn longitudes(&self) -> &[f64] {
        &self.longitudes
    }

    /// Per-point quadrature weight for every latitude ring.
    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    /// Longitude spacing `2π / nlon`.
    pub fn dphi(&self) -> f64 {
        2.0 * PI / self.nlon as f64
    }

    /// Latitude-only weight of ring `i` (the per-point weight without `Δφ`).
    pub fn latitude_weight(&self, i: usize) -> f64 {
        self.quad_weights[i] / self.dphi()
    }

    /// Sum of all point weights.
    pub fn total_weight(&self) -> f64 {
        self.quad_weights.iter().sum::<f64>() * self.nlon as f64
    }

    /// Whether two specs describe the same sampling.
    pub fn same_as(&self, other: &GridSpec) -> bool {
        self.kind == other.kind && self.nlat == other.nlat && self.nlon == other.nlon
    }

    /// Cartesian unit vector of grid point `(i, j)`.
    pub fn point(&self, i: usize, j: usize) -> [f64; 3] {
        let (st, ct) = self.colatitudes[i].sin_cos();
        let (sp, cp) = self.longitudes[j].sin_cos();
        [st * cp, st * sp, ct]
    }
}

fn uniform_longitudes(nlon: usize) -> Vec<f64> {
    (0..nlon).map(|j| 2.0 * PI * j as f64 / nlon as f64).collect()
}

/// Legendre polynomial `P_n(x)` and its derivative by the three-term recurrence.
pub fn legendre_p(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 2..=n {
        let k = k as f64;
        let next = ((2.0 * k - 1.0) * x * p - (k - 1.0) * p_prev) / k;
        p_prev = p;
        p = next;
    }
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// Gauss-Legendre nodes (descending, i.e. ascending colatitude) and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, dp) = legendre_p(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= NEWTON_TOL {
                converged = true;
                break;
            }
        }
        if !converged || !x.is_finite() {
            return Err(Error::NonConvergence { degree: n, index: i });
        }
        let (_, dp) = legendre_p(n, x);
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    Ok((nodes, weights))
}

/// Quadrature integral `Σ_ij u(x_ij) ω_ij` for every channel.
pub fn integrate(field: &SphericalField) -> Vec<f64> {
    let grid = field.grid();
    (0..field.channels())
        .map(|c| {
            field
                .channel(c)
                .chunks(grid.nlon())
                .zip(grid.quad_weights())
                .map(|(ring, w)| w * ring.iter().sum::<f64>())
                .sum()
        })
        .collect()
}

/// Integral normalised by the total grid weight, i.e. the spatial mean.
pub fn spatial_mean(field: &SphericalField) -> Vec<f64> {
    let total = field.grid().total_weight();
    integrate(field).into_iter().map(|v| v / total).collect()
}
