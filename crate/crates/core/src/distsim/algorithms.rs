//! Domain-decomposed transform, convolution and ensemble score.

use std::ops::Range;

use num_complex::Complex64;

use super::router::Simulator;
use super::tensor::Tensor;
use super::view::RankView;
use super::{split_offsets, split_sizes, Axis, CommGrid};
use crate::convolutions::{DiscoOperator, MixWeights};
use crate::error::{shape_err, Error, Result};
use crate::grids::GridSpec;
use crate::harmonics::{ring_fft, ShtPlan};
use crate::metrics::{crps_sorted, CrpsVariant};

/// Positions of the trailing `[C, H, W]` dims of a rank-`nd` tensor.
fn chw(nd: usize) -> Result<(usize, usize, usize)> {
    if nd < 3 {
        return Err(Error::InvalidArgument(format!("need at least [C, H, W] dims, got {nd}")));
    }
    Ok((nd - 3, nd - 2, nd - 1))
}

/// Checks the trailing dims hold `grid` sharded polar × azimuth with whole channels.
fn check_spatial<T: super::Element>(views: &[RankView<T>], grid: &GridSpec) -> Result<(usize, usize, usize)> {
    let first = views.first().ok_or_else(|| Error::Bookkeeping("no views".into()))?;
    let (c, h, w) = chw(first.global_shape().len())?;
    let gs = first.global_shape();
    if gs[h] != grid.nlat() || gs[w] != grid.nlon() {
        return Err(Error::GridMismatch);
    }
    for v in views {
        let s = v.sharding();
        if s[c].is_some() || s[h] != Some(Axis::Polar) || s[w] != Some(Axis::Azimuth) {
            return Err(Error::Bookkeeping(format!(
                "rank {}: expected [C, H/polar, W/azimuth] layout, found {:?}",
                v.rank(),
                &s[c..]
            )));
        }
    }
    Ok((c, h, w))
}

fn owned_splits<T: super::Element>(v: &RankView<T>) -> Vec<Option<Vec<usize>>> {
    (0..v.global_shape().len()).map(|d| v.split_shapes(d).map(<[usize]>::to_vec)).collect()
}

/// Forward transform of `[.., C, H, W]` data sharded over the polar and
/// azimuth axes. Four all-to-alls move the data through the pencils
/// `[Cloc, Hloc, W] → [C, Hloc, mloc] → [Cloc, H, mloc] → [C, lloc, mloc]`.
/// The result is `[.., C, lmax, mmax]` sharded the same way as the input.
pub fn dist_sht_forward(sim: &Simulator, views: Vec<RankView<f64>>, plan: &ShtPlan) -> Result<Vec<RankView<Complex64>>> {
    plan.check_analysis()?;
    let grid = plan.grid();
    let (c, h, w) = check_spatial(&views, grid)?;
    let (lmax, mmax) = (plan.lmax(), plan.mmax());
    sim.with_operation("dist_sht_forward", || {
        let xt = sim.distributed_transpose(views, c, w)?;
        let dphi = grid.dphi();
        let xf = sim.run(xt, |v| {
            let nlon = grid.nlon();
            let rows = v.local().len() / nlon;
            let mut out = vec![Complex64::new(0.0, 0.0); rows * mmax];
            for (ring, dst) in v.local().data().chunks_exact(nlon).zip(out.chunks_exact_mut(mmax)) {
                ring_fft(plan.fft(), ring, mmax, dphi, dst);
            }
            let mut shape = v.local().shape().to_vec();
            shape[w] = mmax;
            let mut global = v.global_shape().to_vec();
            global[w] = mmax;
            v.rebuild(global, v.sharding().to_vec(), owned_splits(&v), Tensor::new(shape, out)?)
        })?;
        let xt = sim.distributed_transpose(xf, w, c)?;
        let x = sim.distributed_transpose(xt, c, h)?;
        let table = plan.weighted_table();
        let xc = sim.run(x, |v| {
            let nlat = grid.nlat();
            let shape = v.local().shape();
            let mloc = shape[w];
            let m0 = v.offset(w);
            let outer = v.local().len() / (nlat * mloc);
            let src = v.local().data();
            let mut out = vec![Complex64::new(0.0, 0.0); outer * lmax * mloc];
            for o in 0..outer {
                let x = &src[o * nlat * mloc..(o + 1) * nlat * mloc];
                let dst = &mut out[o * lmax * mloc..(o + 1) * lmax * mloc];
                for l in 0..lmax {
                    for j in 0..mloc {
                        let m = m0 + j;
                        if m > l {
                            break;
                        }
                        let p = table.profile(l, m);
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (i, &pi) in p.iter().enumerate() {
                            acc += x[i * mloc + j] * pi;
                        }
                        dst[l * mloc + j] = acc;
                    }
                }
            }
            let mut lshape = shape.to_vec();
            lshape[h] = lmax;
            let mut global = v.global_shape().to_vec();
            global[h] = lmax;
            v.rebuild(global, v.sharding().to_vec(), owned_splits(&v), Tensor::new(lshape, out)?)
        })?;
        sim.distributed_transpose(xc, h, c)
    })
}

/// The entries of a DISCO operator whose input latitudes belong to one polar rank.
#[derive(Debug, Clone)]
pub struct PsiShard {
    pub rows: Range<usize>,
    pub op: DiscoOperator,
}

/// Splits `op` by input latitude, one shard per polar coordinate of `grid`.
pub fn psi_shards(op: &DiscoOperator, grid: &CommGrid) -> Result<Vec<PsiShard>> {
    let s = split_sizes(op.in_grid().nlat(), grid.size(Axis::Polar))?;
    Ok(split_offsets(&s)
        .into_iter()
        .zip(s)
        .map(|(o, n)| PsiShard { rows: o..o + n, op: op.restrict_input_rows(o..o + n) })
        .collect())
}

/// DISCO convolution of `[.., C, H, W]` data sharded over polar × azimuth.
///
/// Channels are transposed against longitudes, every rank contracts its
/// input rows with its ψ shard into all output latitudes, a reduce-scatter
/// over the polar axis completes the latitude sum, and a second transpose
/// restores whole channels before the local channel mix.
pub fn dist_disco_apply(
    sim: &Simulator,
    views: Vec<RankView<f64>>,
    shards: &[PsiShard],
    mix: &MixWeights,
) -> Result<Vec<RankView<f64>>> {
    let first = shards.first().ok_or_else(|| Error::Bookkeeping("no ψ shards".into()))?;
    let (in_grid, out_grid) = (first.op.in_grid().clone(), first.op.out_grid().clone());
    let nk = first.op.n_basis();
    if shards.len() != sim.grid().size(Axis::Polar) {
        return Err(Error::Bookkeeping(format!(
            "{} ψ shards for {} polar ranks",
            shards.len(),
            sim.grid().size(Axis::Polar)
        )));
    }
    let (c, h, w) = check_spatial(&views, &in_grid)?;
    let cin = views[0].global_shape()[c];
    if cin != mix.c_in() || mix.k() != nk {
        return Err(shape_err(format!("{cin} channels, k={nk}"), format!("mix {}x{}x{}", mix.c_out(), mix.c_in(), mix.k())));
    }
    let (h_out, w_out) = (out_grid.nlat(), out_grid.nlon());
    sim.with_operation("dist_disco_apply", || {
        let xt = sim.distributed_transpose(views, c, w)?;
        let xc = sim.run(xt, |v| {
            let shard = &shards[v.coord(Axis::Polar)];
            let rows = v.range(h);
            if rows != shard.rows {
                return Err(Error::Bookkeeping(format!(
                    "rank {} holds input rows {rows:?} but its ψ shard covers {:?}",
                    v.rank(),
                    shard.rows
                )));
            }
            let shape = v.local().shape();
            let cloc = shape[c];
            let block = cloc * rows.len() * in_grid.nlon();
            let outer = v.local().len() / block.max(1);
            let mut out = Vec::with_capacity(outer * cloc * nk * h_out * w_out);
            for o in 0..outer {
                let data = &v.local().data()[o * block..(o + 1) * block];
                out.extend(shard.op.contract_rows(data, cloc, rows.start, rows.len()));
            }
            let lead = &shape[..c];
            let local_shape = [lead, &[cloc, nk, h_out, w_out]].concat();
            let global = [&v.global_shape()[..c], &[cin, nk, h_out, w_out]].concat();
            let mut sharding = v.sharding()[..=c].to_vec();
            sharding.extend([None, None, None]);
            let mut splits = owned_splits(&v)[..=c].to_vec();
            splits.extend([None, None, None]);
            v.rebuild(global, sharding, splits, Tensor::new(local_shape, out)?)
        })?;
        let xr = sim.reduce_scatter(xc, Axis::Polar, c + 2)?;
        let x = sim.distributed_transpose(xr, c + 3, c)?;
        sim.run(x, |v| {
            let shape = v.local().shape();
            let (hl, wl) = (shape[c + 2], shape[c + 3]);
            let n = hl * wl;
            let block = cin * nk * n;
            let outer = v.local().len() / block.max(1);
            let src = v.local().data();
            let mut out = vec![0.0; outer * mix.c_out() * n];
            for o in 0..outer {
                let x = &src[o * block..(o + 1) * block];
                for co in 0..mix.c_out() {
                    let dst = &mut out[(o * mix.c_out() + co) * n..][..n];
                    for ci in 0..cin {
                        for k in 0..nk {
                            let wt = mix.get(co, ci, k);
                            if wt == 0.0 {
                                continue;
                            }
                            let s = &x[(ci * nk + k) * n..][..n];
                            dst.iter_mut().zip(s).for_each(|(d, s)| *d += wt * s);
                        }
                    }
                }
            }
            let local_shape = [&shape[..c], &[mix.c_out(), hl, wl]].concat();
            let global = [&v.global_shape()[..c], &[mix.c_out(), h_out, w_out]].concat();
            let all = owned_splits(&v);
            let mut sharding = v.sharding()[..c].to_vec();
            sharding.extend([None, Some(Axis::Polar), Some(Axis::Azimuth)]);
            let mut splits = all[..c].to_vec();
            splits.extend([None, all[c + 2].clone(), all[c + 3].clone()]);
            v.rebuild(global, sharding, splits, Tensor::new(local_shape, out)?)
        })
    })
}

/// Quadrature-weighted ensemble CRPS of `[.., E, C, H, W]` forecasts against
/// `[.., C, H, W]` observations, both sharded polar × azimuth, with the
/// ensemble dim sharded over the ensemble axis and observations replicated
/// along it.
///
/// Each rank flattens its spatial patch, an ensemble transpose makes all
/// members local while splitting the patch, the observations are scattered
/// the same way, and an all-reduce over ensemble, polar and azimuth sums the
/// local scores. Returns `[.., C]` on every rank.
pub fn dist_crps(
    sim: &Simulator,
    forecast: Vec<RankView<f64>>,
    obs: Vec<RankView<f64>>,
    grid: &GridSpec,
    variant: CrpsVariant,
) -> Result<Vec<RankView<f64>>> {
    let fshape = forecast.first().ok_or_else(|| Error::Bookkeeping("no views".into()))?.global_shape().to_vec();
    if fshape.len() < 4 {
        return Err(Error::InvalidArgument("forecast needs [E, C, H, W] dims".into()));
    }
    let e_dim = fshape.len() - 4;
    let (c, h, w) = check_spatial(&forecast, grid)?;
    check_spatial(&obs, grid)?;
    let members = fshape[e_dim];
    if variant == CrpsVariant::Fair && members < 2 {
        return Err(Error::InvalidArgument("fair CRPS needs at least two members".into()));
    }
    if obs.len() != forecast.len() {
        return Err(Error::Bookkeeping("forecast and observation views differ in count".into()));
    }
    for (f, o) in forecast.iter().zip(&obs) {
        if f.sharding()[e_dim] != Some(Axis::Ensemble) {
            return Err(Error::Bookkeeping(format!(
                "rank {}: ensemble dim is not sharded over the ensemble axis, its size cannot be reconstructed",
                f.rank()
            )));
        }
        let lead_f = [&f.global_shape()[..e_dim], &f.global_shape()[c..]].concat();
        let same_split = |d_f: usize, d_o: usize| f.split_shapes(d_f) == o.split_shapes(d_o) && f.sharding()[d_f] == o.sharding()[d_o];
        if o.rank() != f.rank()
            || o.global_shape() != lead_f.as_slice()
            || !(0..e_dim).all(|d| same_split(d, d))
            || !same_split(h, h - 1)
            || !same_split(w, w - 1)
        {
            return Err(Error::Bookkeeping(format!("rank {}: forecast and observation layouts disagree", f.rank())));
        }
    }
    let patches: Vec<(Range<usize>, Range<usize>)> = forecast.iter().map(|v| (v.range(h), v.range(w))).collect();
    let weights: Vec<f64> = grid.quad_weights().iter().map(|q| q / grid.total_weight()).collect();
    let channels = fshape[c];
    sim.with_operation("dist_crps", || {
        let flatten = |v: RankView<f64>, s_dim: usize| -> Result<RankView<f64>> {
            let shape = v.local().shape().to_vec();
            let sloc = shape[s_dim] * shape[s_dim + 1];
            let mut local_shape = shape[..s_dim].to_vec();
            local_shape.push(sloc);
            let mut global = v.global_shape()[..s_dim].to_vec();
            global.push(sloc);
            let mut sharding = v.sharding()[..s_dim].to_vec();
            sharding.push(None);
            let mut splits = owned_splits(&v)[..s_dim].to_vec();
            splits.push(None);
            let local = v.local().clone().reshape(local_shape)?;
            v.rebuild(global, sharding, splits, local)
        };
        let ff = sim.run(forecast, |v| flatten(v, h))?;
        let ft = sim.distributed_transpose(ff, h, e_dim)?;
        let of = sim.run(obs, |v| flatten(v, h - 1))?;
        let ot = sim.scatter(of, Axis::Ensemble, h - 1)?;
        let sl = sim.run(ft.into_iter().zip(ot).collect(), |(f, o)| {
            let (rows, cols) = &patches[f.rank()];
            let wloc = cols.len();
            let s0 = f.offset(h);
            let fs = f.local().shape();
            let sl = fs[h];
            let outer: usize = fs[..e_dim].iter().product();
            let (fd, od) = (f.local().data(), o.local().data());
            let mut out = vec![0.0; outer * channels];
            let mut vals = vec![0.0; members];
            for b in 0..outer {
                for ch in 0..channels {
                    let mut acc = 0.0;
                    for s in 0..sl {
                        for (e, v) in vals.iter_mut().enumerate() {
                            *v = fd[((b * members + e) * channels + ch) * sl + s];
                        }
                        vals.sort_by(f64::total_cmp);
                        let q = weights[rows.start + (s0 + s) / wloc];
                        acc += q * crps_sorted(&vals, od[(b * channels + ch) * sl + s], variant);
                    }
                    out[b * channels + ch] = acc;
                }
            }
            let mut shape = fs[..e_dim].to_vec();
            shape.push(channels);
            let mut global = f.global_shape()[..e_dim].to_vec();
            global.push(channels);
            let mut sharding = f.sharding()[..e_dim].to_vec();
            sharding.push(None);
            let mut splits = owned_splits(&f)[..e_dim].to_vec();
            splits.push(None);
            f.rebuild(global, sharding, splits, Tensor::new(shape, out)?)
        })?;
        sim.all_reduce(sl, &[Axis::Ensemble, Axis::Polar, Axis::Azimuth])
    })
}
