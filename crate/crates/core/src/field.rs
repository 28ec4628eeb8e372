//! Multi-channel samples on a spherical grid.

use std::sync::Arc;

use crate::error::{shape_err, Error, Result};
use crate::grids::GridSpec;

/// Real samples `[channel, lat, lon]` on a [`GridSpec`], stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalField {
    grid: Arc<GridSpec>,
    channels: usize,
    data: Vec<f64>,
}

impl SphericalField {
    pub fn zeros(grid: impl Into<Arc<GridSpec>>, channels: usize) -> Self {
        let grid = grid.into();
        let n = channels * grid.len();
        Self { grid, channels, data: vec![0.0; n] }
    }

    pub fn from_vec(grid: impl Into<Arc<GridSpec>>, channels: usize, data: Vec<f64>) -> Result<Self> {
        let grid = grid.into();
        let expected = channels * grid.len();
        if data.len() != expected {
            return Err(shape_err(expected, data.len()));
        }
        Ok(Self { grid, channels, data })
    }

    /// Samples `f(channel, θ, φ)` at every grid point.
    pub fn from_fn(
        grid: impl Into<Arc<GridSpec>>,
        channels: usize,
        mut f: impl FnMut(usize, f64, f64) -> f64,
    ) -> Self {
        let grid = grid.into();
        let mut data = Vec::with_capacity(channels * grid.len());
        for c in 0..channels {
            for &t in grid.colatitudes() {
                for &p in grid.longitudes() {
                    data.push(f(c, t, p));
                }
            }
        }
        Self { grid, channels, data }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn nlat(&self) -> usize {
        self.grid.nlat()
    }

    pub fn nlon(&self) -> usize {
        self.grid.nlon()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[(c * self.nlat() + i) * self.nlon() + j]
    }

    pub fn set(&mut self, c: usize, i: usize, j: usize, v: f64) {
        let (h, w) = (self.nlat(), self.nlon());
        self.data[(c * h + i) * w + j] = v;
    }

    /// Copies out the channels in `range` as a new field.
    pub fn select_channels(&self, range: std::ops::Range<usize>) -> Self {
        let n = self.grid.len();
        Self {
            grid: self.grid.clone(),
            channels: range.len(),
            data: self.data[range.start * n..range.end * n].to_vec(),
        }
    }

    /// Stacks the channels of several fields on the same grid.
    pub fn concat(parts: &[&SphericalField]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if !p.grid.same_as(&first.grid) {
                return Err(Error::GridMismatch);
            }
            data.extend_from_slice(&p.data);
            channels += p.channels;
        }
        Ok(Self { grid: first.grid.clone(), channels, data })
    }

    /// Rolls every ring by `k` longitude steps: `out[.., j] = in[.., j - k]`.
    pub fn roll_longitude(&self, k: isize) -> Self {
        let w = self.nlon() as isize;
        let mut out = self.clone();
        for (src, dst) in self.data.chunks(self.nlon()).zip(out.data.chunks_mut(self.nlon())) {
            for (j, v) in dst.iter_mut().enumerate() {
                *v = src[(j as isize - k).rem_euclid(w) as usize];
            }
        }
        out
    }

    pub fn check_same_shape(&self, other: &SphericalField) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        if self.channels != other.channels {
            return Err(shape_err(
                format!("{} channels", self.channels),
                format!("{} channels", other.channels),
            ));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &SphericalField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Ensemble of fields `[member, channel, lat, lon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleField {
    grid: Arc<GridSpec>,
    members: usize,
    channels: usize,
    data: Vec<f64>,
}

impl EnsembleField {
    pub fn from_members(members: &[SphericalField]) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::InvalidArgument("ensemble needs at least one member".into()))?;
        let mut data = Vec::with_capacity(members.len() * first.data.len());
        for m in members {
            first.check_same_shape(m)?;
            data.extend_from_slice(&m.data);
        }
        Ok(Self {
            grid: first.grid.clone(),
            members: members.len(),
            channels: first.channels,
            data,
        })
    }

    pub fn from_vec(
        grid: impl Into<Arc<GridSpec>>,
        members: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        let grid = grid.into();
        if members == 0 {
            return Err(Error::InvalidArgument("ensemble needs at least one member".into()));
        }
        let expected = members * channels * grid.len();
        if data.len() != expected {
            return Err(shape_err(expected, data.len()));
        }
        Ok(Self { grid, members, channels, data })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn member(&self, e: usize) -> SphericalField {
        let n = self.channels * self.grid.len();
        SphericalField {
            grid: self.grid.clone(),
            channels: self.channels,
            data: self.data[e * n..(e + 1) * n].to_vec(),
        }
    }

    /// Value of member `e` at flat point index `p` of channel `c`.
    pub fn value(&self, e: usize, c: usize, p: usize) -> f64 {
        let n = self.grid.len();
        self.data[(e * self.channels + c) * n + p]
    }

    /// Gathers the ensemble values at one point into `buf`.
    pub fn values_at(&self, c: usize, p: usize, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend((0..self.members).map(|e| self.value(e, c, p)));
    }

    /// Checks the observation lives on the same grid with the same channel count.
    pub fn check_obs(&self, obs: &SphericalField) -> Result<()> {
        if !self.grid.same_as(obs.grid()) {
            return Err(Error::GridMismatch);
        }
        if self.channels != obs.channels() {
            return Err(shape_err(
                format!("{} channels", self.channels),
                format!("{} channels", obs.channels()),
            ));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            members: self.members,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}
