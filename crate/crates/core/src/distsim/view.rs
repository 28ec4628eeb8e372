//! Per-rank shards with split-shape bookkeeping.

use super::tensor::{Element, Tensor};
use super::{split_offsets, split_sizes, Axis, CommGrid, Coords};
use crate::error::{Error, Result};

/// One rank's block of a global tensor.
///
/// `split_shapes[d]` lists every rank's extent along dim `d` when that dim is
/// sharded over `sharding[d]`, in communicator order; unsharded dims are held
/// whole.
#[derive(Debug, Clone, PartialEq)]
pub struct RankView<T> {
    rank: usize,
    coords: Coords,
    global_shape: Vec<usize>,
    sharding: Vec<Option<Axis>>,
    split_shapes: Vec<Option<Vec<usize>>>,
    local: Tensor<T>,
}

impl<T: Element> RankView<T> {
    /// Assembles a view and checks its bookkeeping against the local block.
    pub fn new(
        rank: usize,
        coords: Coords,
        global_shape: Vec<usize>,
        sharding: Vec<Option<Axis>>,
        split_shapes: Vec<Option<Vec<usize>>>,
        local: Tensor<T>,
    ) -> Result<Self> {
        let nd = global_shape.len();
        if sharding.len() != nd || split_shapes.len() != nd || local.ndim() != nd {
            return Err(Error::Bookkeeping(format!("rank {rank}: dimension count disagrees")));
        }
        for d in 0..nd {
            let expect = match (&sharding[d], &split_shapes[d]) {
                (None, None) => global_shape[d],
                (Some(a), Some(s)) => {
                    if s.iter().sum::<usize>() != global_shape[d] {
                        return Err(Error::Bookkeeping(format!(
                            "rank {rank}: splits {s:?} of dim {d} do not sum to {}",
                            global_shape[d]
                        )));
                    }
                    *s.get(coords[a.index()]).ok_or_else(|| {
                        Error::Bookkeeping(format!("rank {rank}: no split entry for {a} coordinate"))
                    })?
                }
                _ => return Err(Error::Bookkeeping(format!("rank {rank}: dim {d} sharding without splits"))),
            };
            if local.shape()[d] != expect {
                return Err(Error::Bookkeeping(format!(
                    "rank {rank}: dim {d} holds {} but bookkeeping says {expect}",
                    local.shape()[d]
                )));
            }
        }
        Ok(Self { rank, coords, global_shape, sharding, split_shapes, local })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn coords(&self) -> Coords {
        self.coords
    }

    pub fn coord(&self, axis: Axis) -> usize {
        self.coords[axis.index()]
    }

    pub fn global_shape(&self) -> &[usize] {
        &self.global_shape
    }

    pub fn sharding(&self) -> &[Option<Axis>] {
        &self.sharding
    }

    /// Every rank's extent along `dim`, or `None` if the dim is held whole.
    pub fn split_shapes(&self, dim: usize) -> Option<&[usize]> {
        self.split_shapes[dim].as_deref()
    }

    pub fn local(&self) -> &Tensor<T> {
        &self.local
    }

    pub fn into_local(self) -> Tensor<T> {
        self.local
    }

    /// Global index of this rank's first element along `dim`.
    pub fn offset(&self, dim: usize) -> usize {
        match (&self.sharding[dim], &self.split_shapes[dim]) {
            (Some(a), Some(s)) => s[..self.coords[a.index()]].iter().sum(),
            _ => 0,
        }
    }

    /// Global `start..end` of this rank's block along `dim`.
    pub fn range(&self, dim: usize) -> std::ops::Range<usize> {
        let o = self.offset(dim);
        o..o + self.local.shape()[dim]
    }

    /// Replaces the block and bookkeeping, keeping rank identity.
    pub fn rebuild<U: Element>(
        &self,
        global_shape: Vec<usize>,
        sharding: Vec<Option<Axis>>,
        split_shapes: Vec<Option<Vec<usize>>>,
        local: Tensor<U>,
    ) -> Result<RankView<U>> {
        RankView::new(self.rank, self.coords, global_shape, sharding, split_shapes, local)
    }

    /// Same bookkeeping with a new local block of the same shape.
    pub fn with_local<U: Element>(&self, local: Tensor<U>) -> Result<RankView<U>> {
        self.rebuild(self.global_shape.clone(), self.sharding.clone(), self.split_shapes.clone(), local)
    }
}

/// Splits `global` over `grid`, dim `d` going to axis `assignments[d]`.
pub fn shard<T: Element>(global: &Tensor<T>, assignments: &[Option<Axis>], grid: &CommGrid) -> Result<Vec<RankView<T>>> {
    if assignments.len() != global.ndim() {
        return Err(Error::Bookkeeping(format!(
            "{} axis assignments for a rank-{} tensor",
            assignments.len(),
            global.ndim()
        )));
    }
    for (i, a) in assignments.iter().enumerate() {
        if a.is_some() && assignments[..i].contains(a) {
            return Err(Error::Bookkeeping(format!("axis {} assigned twice", a.unwrap())));
        }
    }
    let splits = assignments
        .iter()
        .zip(global.shape())
        .map(|(a, &n)| a.map(|a| split_sizes(n, grid.size(a))).transpose())
        .collect::<Result<Vec<_>>>()?;
    (0..grid.world_size())
        .map(|r| {
            let coords = grid.coords(r);
            let mut block = global.clone();
            for (d, (a, s)) in assignments.iter().zip(&splits).enumerate() {
                if let (Some(a), Some(s)) = (a, s) {
                    let i = coords[a.index()];
                    block = block.narrow(d, split_offsets(s)[i], s[i])?;
                }
            }
            RankView::new(r, coords, global.shape().to_vec(), assignments.to_vec(), splits.clone(), block)
        })
        .collect()
}

/// Reassembles the global tensor. Replicated blocks must agree bit for bit.
pub fn unshard<T: Element>(views: &[RankView<T>]) -> Result<Tensor<T>> {
    let first = views.first().ok_or_else(|| Error::Bookkeeping("no views to gather".into()))?;
    let shape = first.global_shape.clone();
    let mut out = Tensor::zeros(shape.clone());
    let mut written = vec![false; out.len()];
    let nd = shape.len();
    let mut strides = vec![1; nd];
    for d in (0..nd.saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * shape[d + 1];
    }
    for v in views {
        if v.global_shape != shape || v.sharding != first.sharding || v.split_shapes != first.split_shapes {
            return Err(Error::Bookkeeping(format!("rank {} disagrees on the global layout", v.rank)));
        }
        let offsets: Vec<usize> = (0..nd).map(|d| v.offset(d)).collect();
        let lshape = v.local.shape();
        let mut idx = vec![0usize; nd];
        for &val in v.local.data() {
            let flat: usize = (0..nd).map(|d| (offsets[d] + idx[d]) * strides[d]).sum();
            if written[flat] {
                if out.data()[flat] != val {
                    return Err(Error::Bookkeeping(format!("replica on rank {} diverges", v.rank)));
                }
            } else {
                out.data_mut()[flat] = val;
                written[flat] = true;
            }
            for d in (0..nd).rev() {
                idx[d] += 1;
                if idx[d] < lshape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
    }
    if written.iter().any(|w| !w) {
        return Err(Error::Bookkeeping("views do not cover the global tensor".into()));
    }
    Ok(out)
}
