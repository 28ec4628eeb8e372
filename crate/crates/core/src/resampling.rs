//! Grid-to-grid resampling: bilinear interpolation with pole extension, and
//! spectral truncation through the harmonic transform.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::Result;
use crate::exec;
use crate::field::SphericalField;
use crate::grids::{GridKind, GridSpec};
use crate::harmonics::ShtPlan;

const LONGITUDE_SNAP: f64 = 1e-12;

/// Field samples on the input rings plus any added pole rows, `[c, lat, lon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarExtension {
    pub colatitudes: Vec<f64>,
    pub nlon: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl PolarExtension {
    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[(c * self.colatitudes.len() + i) * self.nlon + j]
    }
}

/// Adds rows at `θ = 0` and/or `θ = π` whose value is the mean of the nearest
/// ring (uniform longitude weights `Δφ = 2π/nlon`).
pub fn extend_to_poles(field: &SphericalField) -> PolarExtension {
    let g = field.grid();
    let (h, w) = (g.nlat(), g.nlon());
    let cols = g.colatitudes();
    let north = cols[0] > 0.0;
    let south = cols[h - 1] < PI;
    let mut colatitudes = Vec::with_capacity(h + 2);
    if north {
        colatitudes.push(0.0);
    }
    colatitudes.extend_from_slice(cols);
    if south {
        colatitudes.push(PI);
    }
    let ring_mean = |ring: &[f64]| ring.iter().map(|v| v * (2.0 * PI / w as f64)).sum::<f64>() / (2.0 * PI);
    let mut data = Vec::with_capacity(field.channels() * colatitudes.len() * w);
    for c in 0..field.channels() {
        let ch = field.channel(c);
        if north {
            data.extend(std::iter::repeat_n(ring_mean(&ch[..w]), w));
        }
        data.extend_from_slice(ch);
        if south {
            data.extend(std::iter::repeat_n(ring_mean(&ch[(h - 1) * w..]), w));
        }
    }
    PolarExtension { colatitudes, nlon: w, channels: field.channels(), data }
}

/// Bracketing index and upper weight of `x` in the ascending `nodes`.
fn bracket(nodes: &[f64], x: f64) -> (usize, f64) {
    let n = nodes.len();
    if n == 1 {
        return (0, 0.0);
    }
    let i = nodes.partition_point(|&c| c <= x).saturating_sub(1).min(n - 2);
    let t = ((x - nodes[i]) / (nodes[i + 1] - nodes[i])).clamp(0.0, 1.0);
    (i, t)
}

/// Bilinear interpolation in `(θ, φ)` onto `out_grid`, with periodic
/// longitudes and pole rows from [`extend_to_poles`].
pub fn bilinear_resample(field: &SphericalField, out_grid: impl Into<Arc<GridSpec>>) -> SphericalField {
    let out_grid = out_grid.into();
    let ext = extend_to_poles(field);
    let w_in = ext.nlon;
    let dphi = 2.0 * PI / w_in as f64;
    let lon: Vec<(usize, usize, f64)> = out_grid
        .longitudes()
        .iter()
        .map(|&p| {
            let mut x = p / dphi;
            if (x - x.round()).abs() < LONGITUDE_SNAP {
                x = x.round();
            }
            let j = x.floor();
            let s = x - j;
            let j = (j as i64).rem_euclid(w_in as i64) as usize;
            (j, (j + 1) % w_in, s)
        })
        .collect();
    let lat: Vec<(usize, f64)> = out_grid.colatitudes().iter().map(|&t| bracket(&ext.colatitudes, t)).collect();
    let (h_out, w_out) = (out_grid.nlat(), out_grid.nlon());
    let mut out = SphericalField::zeros(out_grid, field.channels());
    exec::for_each_chunk_mut(out.data_mut(), w_out, |r, ring| {
        let (c, h) = (r / h_out, r % h_out);
        let (i, t) = lat[h];
        let i1 = (i + 1).min(ext.colatitudes.len() - 1);
        for (v, &(j, j1, s)) in ring.iter_mut().zip(&lon) {
            *v = (1.0 - t) * (1.0 - s) * ext.get(c, i, j)
                + t * (1.0 - s) * ext.get(c, i1, j)
                + (1.0 - t) * s * ext.get(c, i, j1)
                + t * s * ext.get(c, i1, j1);
        }
    });
    out
}

/// Truncated spectral resampling: forward transform at the largest degree
/// both grids represent, then synthesis on `out_grid`. Non-Gaussian input is
/// first bilinearly moved to the Gaussian grid of the same shape.
pub fn spectral_resample(field: &SphericalField, out_grid: impl Into<Arc<GridSpec>>) -> Result<SphericalField> {
    let out_grid = out_grid.into();
    let gaussian;
    let input = if field.grid().kind() == GridKind::Gaussian {
        field
    } else {
        let g = GridSpec::gaussian(field.nlat(), field.nlon())?;
        gaussian = bilinear_resample(field, g);
        &gaussian
    };
    let lmax = input.nlat().min(out_grid.nlat());
    let mmax = lmax.min(input.nlon() / 2).min(out_grid.nlon() / 2).max(1);
    let coeffs = ShtPlan::new(input.grid_arc().clone(), lmax, mmax)?.forward(input)?;
    ShtPlan::new(out_grid, lmax, mmax)?.inverse(&coeffs)
}
