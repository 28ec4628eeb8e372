//! In-process simulation of a domain-decomposed rank grid.
//!
//! Ranks are arranged on four orthogonal communicator axes (batch, ensemble,
//! polar, azimuth). Every rank holds a [`RankView`]: its local block of a
//! global tensor plus the extents of every rank's block along each sharded
//! dimension. Ranks only see each other's data through the collectives of
//! [`Simulator`], which routes immutable messages and tallies the traffic.
//!
//! [`dist_sht_forward`], [`dist_disco_apply`] and [`dist_crps`] are the
//! pencil-decomposed transform, convolution and ensemble score built on top.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

mod algorithms;
mod check;
mod router;
mod tensor;
mod view;

pub use algorithms::{dist_crps, dist_disco_apply, dist_sht_forward, psi_shards, PsiShard};
pub use check::{check_against_serial, CheckReport, DistOp};
pub use router::{Collective, Schedule, Simulator, TrafficRecord, TrafficReport};
pub use tensor::{Element, Tensor};
pub use view::{shard, unshard, RankView};

/// Communicator axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    Batch,
    Ensemble,
    Polar,
    Azimuth,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::Batch, Axis::Ensemble, Axis::Polar, Axis::Azimuth];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::Batch => "batch",
            Axis::Ensemble => "ensemble",
            Axis::Polar => "polar",
            Axis::Azimuth => "azimuth",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-rank coordinates `[batch, ensemble, polar, azimuth]`.
pub type Coords = [usize; 4];

/// Orthogonal communicator grid. World rank `((b·nE + e)·nH + h)·nW + w`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGrid {
    sizes: Coords,
    coords: Vec<Coords>,
}

/// Builds the grid of `n_batch × n_ensemble × n_polar × n_azimuth` ranks.
pub fn build_comm_grid(n_batch: usize, n_ensemble: usize, n_polar: usize, n_azimuth: usize) -> Result<CommGrid> {
    CommGrid::new(n_batch, n_ensemble, n_polar, n_azimuth)
}

impl CommGrid {
    pub fn new(n_batch: usize, n_ensemble: usize, n_polar: usize, n_azimuth: usize) -> Result<Self> {
        let sizes = [n_batch, n_ensemble, n_polar, n_azimuth];
        if sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("communicator sizes must be >= 1, got {sizes:?}")));
        }
        let world = sizes.iter().product();
        let coords = (0..world)
            .map(|r| {
                let mut c = [0; 4];
                let mut rest = r;
                for a in (0..4).rev() {
                    c[a] = rest % sizes[a];
                    rest /= sizes[a];
                }
                c
            })
            .collect();
        Ok(Self { sizes, coords })
    }

    pub fn world_size(&self) -> usize {
        self.coords.len()
    }

    pub fn sizes(&self) -> Coords {
        self.sizes
    }

    pub fn size(&self, axis: Axis) -> usize {
        self.sizes[axis.index()]
    }

    pub fn coords(&self, rank: usize) -> Coords {
        self.coords[rank]
    }

    pub fn coord(&self, rank: usize, axis: Axis) -> usize {
        self.coords[rank][axis.index()]
    }

    pub fn rank_of(&self, c: Coords) -> usize {
        c.iter().zip(&self.sizes).fold(0, |r, (&x, &n)| r * n + x)
    }

    /// Members of `rank`'s communicators along `axes`, in ascending world rank.
    pub fn group(&self, rank: usize, axes: &[Axis]) -> Vec<usize> {
        let me = self.coords[rank];
        (0..self.world_size())
            .filter(|&r| {
                let c = self.coords[r];
                (0..4).all(|a| axes.iter().any(|x| x.index() == a) || c[a] == me[a])
            })
            .collect()
    }

    /// Every communicator along `axes`, each listed in ascending world rank.
    pub fn groups(&self, axes: &[Axis]) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.world_size()];
        let mut out = Vec::new();
        for r in 0..self.world_size() {
            if !seen[r] {
                let g = self.group(r, axes);
                g.iter().for_each(|&m| seen[m] = true);
                out.push(g);
            }
        }
        out
    }

    /// Index of the communicator along `axis` that holds `rank`.
    pub fn group_id(&self, rank: usize, axis: Axis) -> usize {
        let mut c = self.coords[rank];
        c[axis.index()] = 0;
        self.groups(&[axis]).iter().position(|g| g.contains(&self.rank_of(c))).unwrap_or(0)
    }
}

impl FromStr for CommGrid {
    type Err = Error;

    /// Parses `HxW` as a polar × azimuth grid with trivial data axes.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("decomposition '{s}' is not of the form HxW"));
        let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let h = h.trim().parse().map_err(|_| bad())?;
        let w = w.trim().parse().map_err(|_| bad())?;
        Self::new(1, 1, h, w)
    }
}

/// Extents of `n` over `p` ranks: `ceil(n/p)` for the first `n mod p`, `floor(n/p)` after.
pub fn split_sizes(n: usize, p: usize) -> Result<Vec<usize>> {
    if p == 0 || n < p {
        return Err(Error::Bookkeeping(format!("cannot split extent {n} over {p} ranks")));
    }
    let (q, r) = (n / p, n % p);
    Ok((0..p).map(|i| q + usize::from(i < r)).collect())
}

/// Start offsets of consecutive blocks.
pub fn split_offsets(sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .scan(0, |acc, &s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect()
}
