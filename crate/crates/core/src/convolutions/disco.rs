use std::sync::Arc;

use super::basis::{relative_coords, FilterBasis};
use super::MixWeights;
use crate::error::{shape_err, Error, Result};
use crate::exec;
use crate::field::SphericalField;
use crate::grids::GridSpec;

/// Sparse entries of one output latitude row, for the output point at longitude 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscoRow {
    pub h_in: Vec<usize>,
    pub w_in: Vec<usize>,
    /// Basis values `k̃_k(R⁻¹ x_in)`, stored `[k, entry]`.
    pub kernel: Vec<f64>,
    /// `kernel` with the input quadrature weight folded in (the ψ tensor).
    pub psi: Vec<f64>,
}

impl DiscoRow {
    pub fn nnz(&self) -> usize {
        self.h_in.len()
    }
}

/// A discrete-continuous convolution from `in_grid` to `out_grid`.
#[derive(Debug, Clone)]
pub struct DiscoOperator {
    in_grid: Arc<GridSpec>,
    out_grid: Arc<GridSpec>,
    basis: FilterBasis,
    stride: usize,
    rows: Vec<DiscoRow>,
}

impl DiscoOperator {
    /// Evaluates every basis function at all input points inside the cutoff
    /// disk of each output latitude's reference point. The output longitudes
    /// must be a strided subset of the input longitudes.
    pub fn assemble(
        in_grid: impl Into<Arc<GridSpec>>,
        out_grid: impl Into<Arc<GridSpec>>,
        basis: FilterBasis,
    ) -> Result<Self> {
        let (in_grid, out_grid) = (in_grid.into(), out_grid.into());
        let (w_in, w_out) = (in_grid.nlon(), out_grid.nlon());
        if w_out == 0 || w_in % w_out != 0 {
            return Err(Error::InvalidArgument(format!(
                "output nlon {w_out} must divide input nlon {w_in}"
            )));
        }
        let stride = w_in / w_out;
        let cutoff = basis.cutoff();
        let nk = basis.len();
        let rows = exec::map_indexed(out_grid.nlat(), |h| {
            let t_out = out_grid.colatitudes()[h];
            let (mut hs, mut ws, mut vals) = (Vec::new(), Vec::new(), Vec::new());
            for (hi, &t_in) in in_grid.colatitudes().iter().enumerate() {
                if (t_in - t_out).abs() >= cutoff {
                    continue;
                }
                for (wi, &p_in) in in_grid.longitudes().iter().enumerate() {
                    let (t, p) = relative_coords(t_out, 0.0, t_in, p_in);
                    if t >= cutoff {
                        continue;
                    }
                    hs.push(hi);
                    ws.push(wi);
                    vals.extend((0..nk).map(|k| basis.eval(k, t, p)));
                }
            }
            let nnz = hs.len();
            let mut kernel = vec![0.0; nk * nnz];
            for e in 0..nnz {
                for k in 0..nk {
                    kernel[k * nnz + e] = vals[e * nk + k];
                }
            }
            let psi = (0..nk * nnz)
                .map(|i| kernel[i] * in_grid.quad_weights()[hs[i % nnz.max(1)]])
                .collect();
            DiscoRow { h_in: hs, w_in: ws, kernel, psi }
        });
        if let Some(h) = rows.iter().position(|r| r.nnz() == 0) {
            return Err(Error::EmptySupport(h));
        }
        Ok(Self { in_grid, out_grid, basis, stride, rows })
    }

    pub fn in_grid(&self) -> &Arc<GridSpec> {
        &self.in_grid
    }

    pub fn out_grid(&self) -> &Arc<GridSpec> {
        &self.out_grid
    }

    pub fn basis(&self) -> &FilterBasis {
        &self.basis
    }

    pub fn n_basis(&self) -> usize {
        self.basis.len()
    }

    /// Input longitude steps per output longitude step.
    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn rows(&self) -> &[DiscoRow] {
        &self.rows
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(DiscoRow::nnz).sum()
    }

    /// The entries whose input latitude lies in `rows`; other rows may end up empty.
    pub fn restrict_input_rows(&self, rows: std::ops::Range<usize>) -> Self {
        let nk = self.n_basis();
        let rows_out = self
            .rows
            .iter()
            .map(|r| {
                let keep: Vec<usize> = (0..r.nnz()).filter(|&e| rows.contains(&r.h_in[e])).collect();
                let pick = |v: &[f64]| -> Vec<f64> {
                    (0..nk).flat_map(|k| keep.iter().map(move |&e| v[k * r.nnz() + e])).collect()
                };
                DiscoRow {
                    h_in: keep.iter().map(|&e| r.h_in[e]).collect(),
                    w_in: keep.iter().map(|&e| r.w_in[e]).collect(),
                    kernel: pick(&r.kernel),
                    psi: pick(&r.psi),
                }
            })
            .collect();
        Self {
            in_grid: self.in_grid.clone(),
            out_grid: self.out_grid.clone(),
            basis: self.basis.clone(),
            stride: self.stride,
            rows: rows_out,
        }
    }

    /// Partial contraction over the input rows `h_in_start..h_in_start + h_in_len`.
    ///
    /// `data` holds `[channel, h_in_len, nlon_in]`; the result is
    /// `[channel, k, nlat_out, nlon_out]`. Summing partial results over a
    /// tiling of the input rows gives the full contraction.
    pub fn contract_rows(&self, data: &[f64], channels: usize, h_in_start: usize, h_in_len: usize) -> Vec<f64> {
        let (w_in, h_out, w_out, nk) = (self.in_grid.nlon(), self.out_grid.nlat(), self.out_grid.nlon(), self.n_basis());
        assert_eq!(data.len(), channels * h_in_len * w_in, "contract_rows input shape");
        let s = self.stride;
        let blocks = exec::map_indexed(channels * h_out, |r| {
            let (c, h) = (r / h_out, r % h_out);
            let row = &self.rows[h];
            let nnz = row.nnz();
            let mut acc = vec![0.0; nk * w_out];
            let mut vals = vec![0.0; w_out];
            for e in 0..nnz {
                let hi = row.h_in[e];
                if hi < h_in_start || hi >= h_in_start + h_in_len {
                    continue;
                }
                let ring = &data[(c * h_in_len + hi - h_in_start) * w_in..][..w_in];
                let wi = row.w_in[e];
                gather_strided(ring, wi, s, &mut vals);
                for (k, dst) in acc.chunks_exact_mut(w_out).enumerate() {
                    let p = row.psi[k * nnz + e];
                    dst.iter_mut().zip(&vals).for_each(|(a, v)| *a += p * v);
                }
            }
            acc
        });
        let mut out = vec![0.0; channels * nk * h_out * w_out];
        for (r, acc) in blocks.into_iter().enumerate() {
            let (c, h) = (r / h_out, r % h_out);
            for k in 0..nk {
                let dst = ((c * nk + k) * h_out + h) * w_out;
                out[dst..dst + w_out].copy_from_slice(&acc[k * w_out..(k + 1) * w_out]);
            }
        }
        out
    }

    /// `[channel, k, nlat_out, nlon_out]` basis responses of `field`.
    pub fn contract(&self, field: &SphericalField) -> Result<Vec<f64>> {
        if !field.grid().same_as(&self.in_grid) {
            return Err(Error::GridMismatch);
        }
        Ok(self.contract_rows(field.data(), field.channels(), 0, self.in_grid.nlat()))
    }

    /// Channel mixing of contracted responses into an output field.
    pub fn mix(&self, contracted: &[f64], mix: &MixWeights) -> Result<SphericalField> {
        let n = self.out_grid.len();
        let nk = self.n_basis();
        if mix.k() != nk || contracted.len() != mix.c_in() * nk * n {
            return Err(shape_err(
                format!("{} channels x {} basis functions", mix.c_in(), nk),
                format!("{} values, mix k={}", contracted.len(), mix.k()),
            ));
        }
        let mut out = SphericalField::zeros(self.out_grid.clone(), mix.c_out());
        exec::for_each_chunk_mut(out.data_mut(), n, |co, dst| {
            for ci in 0..mix.c_in() {
                for k in 0..nk {
                    let w = mix.get(co, ci, k);
                    if w == 0.0 {
                        continue;
                    }
                    let src = &contracted[(ci * nk + k) * n..][..n];
                    dst.iter_mut().zip(src).for_each(|(d, s)| *d += w * s);
                }
            }
        });
        Ok(out)
    }

    /// `y[c_out] = Σ_{c_in, k} mix[c_out, c_in, k] Σ ψ u[c_in]`.
    pub fn apply(&self, field: &SphericalField, mix: &MixWeights) -> Result<SphericalField> {
        if field.channels() != mix.c_in() {
            return Err(shape_err(format!("{} input channels", mix.c_in()), field.channels()));
        }
        let xc = self.contract(field)?;
        self.mix(&xc, mix)
    }

    /// Same operator as [`DiscoOperator::apply`], evaluated by mixing channels
    /// on the input grid first. Cheaper when `c_out < c_in`.
    pub fn apply_mixed_first(&self, field: &SphericalField, mix: &MixWeights) -> Result<SphericalField> {
        if !field.grid().same_as(&self.in_grid) {
            return Err(Error::GridMismatch);
        }
        let nk = self.n_basis();
        if field.channels() != mix.c_in() || mix.k() != nk {
            return Err(shape_err(
                format!("{} channels, k={}", mix.c_in(), nk),
                format!("{} channels, k={}", field.channels(), mix.k()),
            ));
        }
        let n_in = self.in_grid.len();
        let mut z = vec![0.0; mix.c_out() * nk * n_in];
        exec::for_each_chunk_mut(&mut z, n_in, |r, dst| {
            let (co, k) = (r / nk, r % nk);
            for ci in 0..mix.c_in() {
                let w = mix.get(co, ci, k);
                if w != 0.0 {
                    dst.iter_mut().zip(field.channel(ci)).for_each(|(d, x)| *d += w * x);
                }
            }
        });
        let (w_in, h_out, w_out, s) = (self.in_grid.nlon(), self.out_grid.nlat(), self.out_grid.nlon(), self.stride);
        let mut out = SphericalField::zeros(self.out_grid.clone(), mix.c_out());
        exec::for_each_chunk_mut(out.data_mut(), w_out, |r, acc| {
            let (co, h) = (r / h_out, r % h_out);
            let row = &self.rows[h];
            let nnz = row.nnz();
            let mut vals = vec![0.0; w_out];
            for e in 0..nnz {
                for k in 0..nk {
                    let p = row.psi[k * nnz + e];
                    let ring = &z[((co * nk + k) * self.in_grid.nlat() + row.h_in[e]) * w_in..][..w_in];
                    if s == 1 && w_in == w_out {
                        let start = row.w_in[e];
                        let (head, tail) = acc.split_at_mut(w_out - start);
                        head.iter_mut().zip(&ring[start..]).for_each(|(a, v)| *a += p * v);
                        tail.iter_mut().zip(&ring[..start]).for_each(|(a, v)| *a += p * v);
                    } else {
                        gather_strided(ring, row.w_in[e], s, &mut vals);
                        acc.iter_mut().zip(&vals).for_each(|(a, v)| *a += p * v);
                    }
                }
            }
        });
        Ok(out)
    }

    /// Transposed convolution from `out_grid` back to `in_grid`:
    /// `(T v)(x_in) = Σ_{x_out} K(x_out, x_in) ω(x_out) v(x_out)`.
    ///
    /// This is the adjoint of [`DiscoOperator::apply`] under the
    /// quadrature-weighted inner products of the two grids.
    pub fn transpose_apply(&self, field: &SphericalField, mix: &MixWeights) -> Result<SphericalField> {
        if !field.grid().same_as(&self.out_grid) {
            return Err(Error::GridMismatch);
        }
        if field.channels() != mix.c_out() || mix.k() != self.n_basis() {
            return Err(shape_err(
                format!("{} channels, k={}", mix.c_out(), self.n_basis()),
                format!("{} channels, k={}", field.channels(), mix.k()),
            ));
        }
        let (w_out, w_in, nk) = (self.out_grid.nlon(), self.in_grid.nlon(), self.n_basis());
        let n_out = self.out_grid.len();
        let s = self.stride;
        let v = field.data();
        let mut out = SphericalField::zeros(self.in_grid.clone(), mix.c_in());
        exec::for_each_chunk_mut(out.data_mut(), self.in_grid.len(), |ci, dst| {
            let mut y = vec![0.0; nk * n_out];
            for co in 0..mix.c_out() {
                for k in 0..nk {
                    let m = mix.get(co, ci, k);
                    if m == 0.0 {
                        continue;
                    }
                    let src = &v[co * n_out..(co + 1) * n_out];
                    y[k * n_out..(k + 1) * n_out].iter_mut().zip(src).for_each(|(d, s)| *d += m * s);
                }
            }
            for (h, row) in self.rows.iter().enumerate() {
                let wq = self.out_grid.quad_weights()[h];
                let nnz = row.nnz();
                for e in 0..nnz {
                    let ring = &mut dst[row.h_in[e] * w_in..][..w_in];
                    for w in 0..w_out {
                        let mut acc = 0.0;
                        for k in 0..nk {
                            acc += row.kernel[k * nnz + e] * y[k * n_out + h * w_out + w];
                        }
                        ring[(row.w_in[e] + w * s) % w_in] += wq * acc;
                    }
                }
            }
        });
        Ok(out)
    }
}

/// `out[w] = ring[(start + w·stride) mod len]` without a division per element.
fn gather_strided(ring: &[f64], start: usize, stride: usize, out: &mut [f64]) {
    let n = ring.len();
    if stride == 1 && out.len() == n {
        let (head, tail) = out.split_at_mut(n - start);
        head.copy_from_slice(&ring[start..]);
        tail.copy_from_slice(&ring[..start]);
        return;
    }
    let mut idx = start % n;
    for v in out.iter_mut() {
        *v = ring[idx];
        idx += stride;
        while idx >= n {
            idx -= n;
        }
    }
}
