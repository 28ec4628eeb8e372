//! Message router, collectives and traffic accounting.

use std::fmt;
use std::sync::{Arc, Mutex, PoisonError};

use super::tensor::{Element, Tensor};
use super::view::RankView;
use super::{split_offsets, split_sizes, Axis, CommGrid};
use crate::error::{Error, Result};

/// How rank-local work is scheduled between collectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// One thread visits the ranks in ascending order.
    #[default]
    RoundRobin,
    /// Every rank runs on its own OS thread.
    Threaded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Collective {
    AllToAll,
    AllReduce,
    ReduceScatter,
    AllGather,
    Scatter,
}

impl Collective {
    pub fn name(self) -> &'static str {
        match self {
            Collective::AllToAll => "all_to_all",
            Collective::AllReduce => "all_reduce",
            Collective::ReduceScatter => "reduce_scatter",
            Collective::AllGather => "all_gather",
            Collective::Scatter => "scatter",
        }
    }
}

impl fmt::Display for Collective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Accumulated traffic of one collective kind for one operation and axis set.
/// `bytes` counts payload sent between distinct ranks; `calls` counts
/// collective invocations, not messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficRecord {
    pub operation: String,
    pub axis: String,
    pub collective: Collective,
    pub bytes: u64,
    pub calls: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrafficReport {
    pub records: Vec<TrafficRecord>,
}

impl TrafficReport {
    /// Calls of `collective` made under `operation`, over all axes.
    pub fn calls(&self, operation: &str, collective: Collective) -> u64 {
        self.records
            .iter()
            .filter(|r| r.operation == operation && r.collective == collective)
            .map(|r| r.calls)
            .sum()
    }

    pub fn bytes(&self, operation: &str) -> u64 {
        self.records.iter().filter(|r| r.operation == operation).map(|r| r.bytes).sum()
    }

    /// `operation,axis,collective,bytes,calls` with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("operation,axis,collective,bytes,calls\n");
        for r in &self.records {
            s.push_str(&format!("{},{},{},{},{}\n", r.operation, r.axis, r.collective, r.bytes, r.calls));
        }
        s
    }
}

struct Message<T> {
    src: usize,
    payload: Arc<Tensor<T>>,
}

/// Simulated rank grid with a barrier at every collective.
pub struct Simulator {
    grid: CommGrid,
    schedule: Schedule,
    operation: Mutex<String>,
    traffic: Mutex<TrafficReport>,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(PoisonError::into_inner)
}

fn axes_label(axes: &[Axis]) -> String {
    axes.iter().map(|a| a.name()).collect::<Vec<_>>().join("+")
}

impl Simulator {
    pub fn new(grid: CommGrid, schedule: Schedule) -> Self {
        Self { grid, schedule, operation: Mutex::new("unlabelled".into()), traffic: Mutex::default() }
    }

    pub fn grid(&self) -> &CommGrid {
        &self.grid
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule
    }

    /// Runs `f` with collectives attributed to `label` in the traffic report.
    pub fn with_operation<R>(&self, label: &str, f: impl FnOnce() -> R) -> R {
        let prev = std::mem::replace(&mut *lock(&self.operation), label.to_string());
        let out = f();
        *lock(&self.operation) = prev;
        out
    }

    pub fn traffic(&self) -> TrafficReport {
        lock(&self.traffic).clone()
    }

    pub fn reset_traffic(&self) {
        *lock(&self.traffic) = TrafficReport::default();
    }

    fn record(&self, axes: &[Axis], collective: Collective, bytes: u64) {
        let operation = lock(&self.operation).clone();
        let axis = axes_label(axes);
        let mut t = lock(&self.traffic);
        match t
            .records
            .iter_mut()
            .find(|r| r.operation == operation && r.axis == axis && r.collective == collective)
        {
            Some(r) => {
                r.bytes += bytes;
                r.calls += 1;
            }
            None => t.records.push(TrafficRecord { operation, axis, collective, bytes, calls: 1 }),
        }
    }

    /// Applies `f` to every rank's input under the configured schedule.
    /// Results come back in input order; the first failing rank's error wins.
    pub fn run<S: Send, U: Send>(&self, inputs: Vec<S>, f: impl Fn(S) -> Result<U> + Sync) -> Result<Vec<U>> {
        match self.schedule {
            Schedule::RoundRobin => inputs.into_iter().map(f).collect(),
            Schedule::Threaded => std::thread::scope(|s| {
                let f = &f;
                let handles: Vec<_> = inputs.into_iter().map(|x| s.spawn(move || f(x))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
                    .collect()
            }),
        }
    }

    fn check_views<T: Element>(&self, views: &[RankView<T>]) -> Result<()> {
        if views.len() != self.grid.world_size() {
            return Err(Error::Bookkeeping(format!(
                "{} views for a world of {}",
                views.len(),
                self.grid.world_size()
            )));
        }
        for (r, v) in views.iter().enumerate() {
            if v.rank() != r || v.coords() != self.grid.coords(r) {
                return Err(Error::Bookkeeping(format!("view {r} is not rank {r} of this grid")));
            }
        }
        Ok(())
    }

    /// Every rank posts messages built from its own view; after the barrier
    /// each rank receives its inbox ordered by source rank.
    fn exchange<T: Element>(
        &self,
        views: Vec<RankView<T>>,
        axes: &[Axis],
        collective: Collective,
        post: impl Fn(&RankView<T>) -> Result<Vec<(usize, Tensor<T>)>> + Sync,
        deliver: impl Fn(RankView<T>, Vec<Message<T>>) -> Result<RankView<T>> + Sync,
    ) -> Result<Vec<RankView<T>>> {
        self.check_views(&views)?;
        let mailboxes: Vec<Mutex<Vec<Message<T>>>> = (0..views.len()).map(|_| Mutex::default()).collect();
        let sent = self.run(views.iter().collect(), |v| {
            let mut bytes = 0;
            for (dst, t) in post(v)? {
                if dst != v.rank() {
                    bytes += t.bytes();
                }
                lock(&mailboxes[dst]).push(Message { src: v.rank(), payload: Arc::new(t) });
            }
            Ok(bytes)
        })?;
        self.record(axes, collective, sent.iter().sum());
        let inboxes: Vec<Vec<Message<T>>> = mailboxes
            .into_iter()
            .map(|m| {
                let mut inbox = m.into_inner().unwrap_or_else(PoisonError::into_inner);
                inbox.sort_by_key(|msg| msg.src);
                inbox
            })
            .collect();
        self.run(views.into_iter().zip(inboxes).collect(), |(v, inbox)| deliver(v, inbox))
    }

    fn single_axis<T: Element>(views: &[RankView<T>], dim: usize) -> Result<Axis> {
        views
            .first()
            .and_then(|v| v.sharding().get(dim).copied().flatten())
            .ok_or_else(|| Error::Bookkeeping(format!("dim {dim} is not sharded")))
    }

    fn expect_inbox<T>(&self, v_rank: usize, inbox: &[Message<T>], group: &[usize]) -> Result<()> {
        let srcs: Vec<usize> = inbox.iter().map(|m| m.src).collect();
        if srcs != group {
            return Err(Error::Bookkeeping(format!("rank {v_rank} received from {srcs:?}, expected {group:?}")));
        }
        Ok(())
    }

    /// All-to-all within the communicator that shards `gather_dim`:
    /// `gather_dim` becomes whole and `split_dim` becomes sharded with the
    /// canonical split. Applying it again with the dims swapped undoes it.
    pub fn distributed_transpose<T: Element>(
        &self,
        views: Vec<RankView<T>>,
        split_dim: usize,
        gather_dim: usize,
    ) -> Result<Vec<RankView<T>>> {
        let axis = Self::single_axis(&views, gather_dim)?;
        for v in &views {
            if v.sharding().get(gather_dim) != Some(&Some(axis)) || v.sharding().get(split_dim) != Some(&None) {
                return Err(Error::Bookkeeping(format!(
                    "rank {}: transpose needs dim {gather_dim} sharded over {axis} and dim {split_dim} whole",
                    v.rank()
                )));
            }
        }
        let p = self.grid.size(axis);
        self.exchange(
            views,
            &[axis],
            Collective::AllToAll,
            |v| {
                let group = self.grid.group(v.rank(), &[axis]);
                let s = split_sizes(v.global_shape()[split_dim], p)?;
                let o = split_offsets(&s);
                group
                    .iter()
                    .enumerate()
                    .map(|(j, &dst)| Ok((dst, v.local().narrow(split_dim, o[j], s[j])?)))
                    .collect()
            },
            |v, inbox| {
                let group = self.grid.group(v.rank(), &[axis]);
                self.expect_inbox(v.rank(), &inbox, &group)?;
                let splits = v.split_shapes(gather_dim).map(<[usize]>::to_vec).unwrap_or_default();
                for (j, m) in inbox.iter().enumerate() {
                    if m.payload.shape()[gather_dim] != splits[j] {
                        return Err(Error::Bookkeeping(format!(
                            "rank {}: block from rank {} has extent {} along dim {gather_dim}, bookkeeping says {}",
                            v.rank(),
                            m.src,
                            m.payload.shape()[gather_dim],
                            splits[j]
                        )));
                    }
                }
                let parts: Vec<&Tensor<T>> = inbox.iter().map(|m| m.payload.as_ref()).collect();
                let local = Tensor::concat(&parts, gather_dim)?;
                let mut sharding = v.sharding().to_vec();
                let mut shapes: Vec<Option<Vec<usize>>> =
                    (0..sharding.len()).map(|d| v.split_shapes(d).map(<[usize]>::to_vec)).collect();
                sharding[gather_dim] = None;
                shapes[gather_dim] = None;
                sharding[split_dim] = Some(axis);
                shapes[split_dim] = Some(split_sizes(v.global_shape()[split_dim], p)?);
                v.rebuild(v.global_shape().to_vec(), sharding, shapes, local)
            },
        )
    }

    /// Elementwise sum over the communicators spanned by `axes`, accumulated
    /// in ascending world rank on every member.
    pub fn all_reduce<T: Element>(&self, views: Vec<RankView<T>>, axes: &[Axis]) -> Result<Vec<RankView<T>>> {
        self.exchange(
            views,
            axes,
            Collective::AllReduce,
            |v| Ok(self.grid.group(v.rank(), axes).into_iter().map(|dst| (dst, v.local().clone())).collect()),
            |v, inbox| {
                self.expect_inbox(v.rank(), &inbox, &self.grid.group(v.rank(), axes))?;
                let local = sum_in_order(v.rank(), &inbox)?;
                v.with_local(local)
            },
        )
    }

    /// Sum over `axis` followed by the canonical split of the whole dim `dim`.
    pub fn reduce_scatter<T: Element>(&self, views: Vec<RankView<T>>, axis: Axis, dim: usize) -> Result<Vec<RankView<T>>> {
        if views.iter().any(|v| v.sharding().get(dim) != Some(&None)) {
            return Err(Error::Bookkeeping(format!("reduce_scatter needs dim {dim} whole")));
        }
        let p = self.grid.size(axis);
        self.exchange(
            views,
            &[axis],
            Collective::ReduceScatter,
            |v| {
                let s = split_sizes(v.global_shape()[dim], p)?;
                let o = split_offsets(&s);
                self.grid
                    .group(v.rank(), &[axis])
                    .into_iter()
                    .enumerate()
                    .map(|(j, dst)| Ok((dst, v.local().narrow(dim, o[j], s[j])?)))
                    .collect()
            },
            |v, inbox| {
                self.expect_inbox(v.rank(), &inbox, &self.grid.group(v.rank(), &[axis]))?;
                let local = sum_in_order(v.rank(), &inbox)?;
                let mut sharding = v.sharding().to_vec();
                let mut shapes: Vec<Option<Vec<usize>>> =
                    (0..sharding.len()).map(|d| v.split_shapes(d).map(<[usize]>::to_vec)).collect();
                sharding[dim] = Some(axis);
                shapes[dim] = Some(split_sizes(v.global_shape()[dim], p)?);
                v.rebuild(v.global_shape().to_vec(), sharding, shapes, local)
            },
        )
    }

    /// Makes the sharded dim `dim` whole on every member of its communicator.
    pub fn all_gather<T: Element>(&self, views: Vec<RankView<T>>, dim: usize) -> Result<Vec<RankView<T>>> {
        let axis = Self::single_axis(&views, dim)?;
        self.exchange(
            views,
            &[axis],
            Collective::AllGather,
            |v| Ok(self.grid.group(v.rank(), &[axis]).into_iter().map(|dst| (dst, v.local().clone())).collect()),
            |v, inbox| {
                self.expect_inbox(v.rank(), &inbox, &self.grid.group(v.rank(), &[axis]))?;
                let splits = v.split_shapes(dim).map(<[usize]>::to_vec).unwrap_or_default();
                if inbox.iter().zip(&splits).any(|(m, &s)| m.payload.shape()[dim] != s) {
                    return Err(Error::Bookkeeping(format!("rank {}: gathered blocks disagree with splits", v.rank())));
                }
                let parts: Vec<&Tensor<T>> = inbox.iter().map(|m| m.payload.as_ref()).collect();
                let local = Tensor::concat(&parts, dim)?;
                let mut sharding = v.sharding().to_vec();
                let mut shapes: Vec<Option<Vec<usize>>> =
                    (0..sharding.len()).map(|d| v.split_shapes(d).map(<[usize]>::to_vec)).collect();
                sharding[dim] = None;
                shapes[dim] = None;
                v.rebuild(v.global_shape().to_vec(), sharding, shapes, local)
            },
        )
    }

    /// Each member of an `axis` communicator keeps its canonical block of the
    /// replicated dim `dim`. No data moves.
    pub fn scatter<T: Element>(&self, views: Vec<RankView<T>>, axis: Axis, dim: usize) -> Result<Vec<RankView<T>>> {
        self.check_views(&views)?;
        if views.iter().any(|v| v.sharding().get(dim) != Some(&None)) {
            return Err(Error::Bookkeeping(format!("scatter needs dim {dim} whole")));
        }
        let p = self.grid.size(axis);
        self.record(&[axis], Collective::Scatter, 0);
        self.run(views, |v| {
            let s = split_sizes(v.global_shape()[dim], p)?;
            let j = v.coord(axis);
            let local = v.local().narrow(dim, split_offsets(&s)[j], s[j])?;
            let mut sharding = v.sharding().to_vec();
            let mut shapes: Vec<Option<Vec<usize>>> =
                (0..sharding.len()).map(|d| v.split_shapes(d).map(<[usize]>::to_vec)).collect();
            sharding[dim] = Some(axis);
            shapes[dim] = Some(s);
            v.rebuild(v.global_shape().to_vec(), sharding, shapes, local)
        })
    }
}

fn sum_in_order<T: Element>(rank: usize, inbox: &[Message<T>]) -> Result<Tensor<T>> {
    let mut acc = inbox[0].payload.as_ref().clone();
    for m in &inbox[1..] {
        acc.add_assign(&m.payload).map_err(|_| {
            Error::Bookkeeping(format!("rank {rank}: contribution from rank {} has a different shape", m.src))
        })?;
    }
    Ok(acc)
}
