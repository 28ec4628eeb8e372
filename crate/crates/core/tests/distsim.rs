#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use spherekit::convolutions::{DiscoOperator, FilterBasis, MixWeights};
use spherekit::distsim::{
    build_comm_grid, check_against_serial, dist_crps, dist_disco_apply, dist_sht_forward, psi_shards, shard,
    split_sizes, unshard, Axis, Collective, CommGrid, DistOp, RankView, Schedule, Simulator, Tensor,
};
use spherekit::harmonics::ShtPlan;
use spherekit::metrics::{crps_field, CrpsVariant};
use spherekit::{EnsembleField, Error, GridSpec, SphericalField};

const DECOMPS: [(usize, usize); 7] = [(1, 1), (1, 2), (2, 1), (2, 2), (1, 4), (4, 1), (2, 4)];

fn normal(shape: Vec<usize>, rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.sample(StandardNormal))
}

fn iota(shape: Vec<usize>) -> Tensor<f64> {
    Tensor::from_fn(shape, |i| i as f64)
}

fn sim(nb: usize, ne: usize, nh: usize, nw: usize) -> Simulator {
    Simulator::new(build_comm_grid(nb, ne, nh, nw).unwrap(), Schedule::RoundRobin)
}

const CHW: [Option<Axis>; 3] = [None, Some(Axis::Polar), Some(Axis::Azimuth)];

// ---- communicator grid ----

#[test]
fn comm_grid_two_by_four() {
    let g = build_comm_grid(1, 1, 2, 4).unwrap();
    assert_eq!(g.world_size(), 8);
    let polar = g.groups(&[Axis::Polar]);
    assert_eq!(polar, vec![vec![0, 4], vec![1, 5], vec![2, 6], vec![3, 7]]);
    let azimuth = g.groups(&[Axis::Azimuth]);
    assert_eq!(azimuth, vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]]);
    assert_eq!(g.coords(6), [0, 0, 1, 2]);
}

#[test]
fn comm_grid_single_rank() {
    let g = build_comm_grid(1, 1, 1, 1).unwrap();
    assert_eq!(g.world_size(), 1);
    for a in Axis::ALL {
        assert_eq!(g.groups(&[a]), vec![vec![0]]);
    }
    assert!(build_comm_grid(1, 0, 1, 1).is_err());
}

#[test]
fn comm_grid_axes_are_orthogonal() {
    for (nb, ne, nh, nw) in [(2, 2, 1, 1), (2, 3, 2, 2), (1, 4, 3, 2)] {
        let g = build_comm_grid(nb, ne, nh, nw).unwrap();
        assert_eq!(g.world_size(), nb * ne * nh * nw);
        for a in Axis::ALL {
            let groups = g.groups(&[a]);
            assert_eq!(groups.len(), g.world_size() / g.size(a));
            for r in 0..g.world_size() {
                // exactly one communicator per axis holds r
                assert_eq!(groups.iter().filter(|grp| grp.contains(&r)).count(), 1);
                assert_eq!(groups[g.group_id(r, a)], g.group(r, &[a]));
            }
            for grp in &groups {
                assert_eq!(grp.len(), g.size(a));
                let along: Vec<usize> = grp.iter().map(|&r| g.coord(r, a)).collect();
                assert_eq!(along, (0..g.size(a)).collect::<Vec<_>>());
            }
        }
        for r in 0..g.world_size() {
            let c = g.coords(r);
            assert_eq!(r, ((c[0] * ne + c[1]) * nh + c[2]) * nw + c[3]);
        }
    }
}

// ---- sharding ----

#[test]
fn uneven_and_even_splits() {
    let g = build_comm_grid(1, 1, 1, 4).unwrap();
    let x = iota(vec![10]);
    let views = shard(&x, &[Some(Axis::Azimuth)], &g).unwrap();
    assert_eq!(views[0].split_shapes(0).unwrap(), &[3, 3, 2, 2]);
    let owned: Vec<Vec<f64>> = views.iter().map(|v| v.local().data().to_vec()).collect();
    assert_eq!(owned, vec![vec![0., 1., 2.], vec![3., 4., 5.], vec![6., 7.], vec![8., 9.]]);
    let even = shard(&iota(vec![8]), &[Some(Axis::Azimuth)], &g).unwrap();
    assert_eq!(even[0].split_shapes(0).unwrap(), &[2, 2, 2, 2]);
    assert_eq!(unshard(&views).unwrap(), x);
}

#[test]
fn shard_rejects_extent_below_ranks() {
    let g = build_comm_grid(1, 1, 1, 4).unwrap();
    assert!(matches!(shard(&iota(vec![3]), &[Some(Axis::Azimuth)], &g), Err(Error::Bookkeeping(_))));
    assert!(shard(&iota(vec![4, 4]), &[Some(Axis::Azimuth), Some(Axis::Azimuth)], &g).is_err());
}

#[test]
fn shard_unshard_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = build_comm_grid(2, 3, 2, 4).unwrap();
    let x = normal(vec![3, 5, 2, 7, 9], &mut rng);
    let axes = [Some(Axis::Batch), Some(Axis::Ensemble), None, Some(Axis::Polar), Some(Axis::Azimuth)];
    let views = shard(&x, &axes, &g).unwrap();
    assert_eq!(unshard(&views).unwrap(), x);
}

// ---- transposes ----

/// Direct-index oracle for the block of dim `d` a rank should own.
fn expected_block(x: &Tensor<f64>, dim: usize, start: usize, len: usize) -> Vec<f64> {
    let shape = x.shape();
    let inner: usize = shape[dim + 1..].iter().product();
    let outer: usize = shape[..dim].iter().product();
    let mut out = Vec::new();
    for o in 0..outer {
        for i in start..start + len {
            for k in 0..inner {
                out.push(x.data()[(o * shape[dim] + i) * inner + k]);
            }
        }
    }
    out
}

#[test]
fn transpose_moves_the_split_from_longitude_to_channels() {
    let s = sim(1, 1, 1, 4);
    let x = iota(vec![6, 10]);
    let views = shard(&x, &[None, Some(Axis::Azimuth)], s.grid()).unwrap();
    let t = s.distributed_transpose(views.clone(), 0, 1).unwrap();
    let starts = [0, 2, 4, 5];
    for (r, v) in t.iter().enumerate() {
        assert_eq!(v.split_shapes(0).unwrap(), &[2, 2, 1, 1]);
        assert!(v.split_shapes(1).is_none());
        assert_eq!(v.local().shape(), &[[2, 2, 1, 1][r], 10]);
        assert_eq!(v.local().data(), expected_block(&x, 0, starts[r], [2, 2, 1, 1][r]).as_slice());
    }
    let back = s.distributed_transpose(t, 1, 0).unwrap();
    assert_eq!(back, views);
}

#[test]
fn transpose_on_one_rank_is_a_no_op() {
    let s = sim(1, 1, 1, 1);
    let x = iota(vec![3, 5]);
    let views = shard(&x, &[None, Some(Axis::Azimuth)], s.grid()).unwrap();
    let t = s.distributed_transpose(views, 0, 1).unwrap();
    assert_eq!(t[0].local(), &x);
}

#[test]
fn transpose_roundtrip_exhaustive_small_cases() {
    for p in 1..=3 {
        let s = sim(1, 1, 1, p);
        for c in p..=6 {
            for w in p..=7 {
                let x = iota(vec![c, w]);
                let views = shard(&x, &[None, Some(Axis::Azimuth)], s.grid()).unwrap();
                let t = s.distributed_transpose(views.clone(), 0, 1).unwrap();
                let cs = split_sizes(c, p).unwrap();
                let mut start = 0;
                for (r, v) in t.iter().enumerate() {
                    assert_eq!(v.local().data(), expected_block(&x, 0, start, cs[r]).as_slice());
                    start += cs[r];
                }
                assert_eq!(unshard(&t).unwrap(), x);
                assert_eq!(s.distributed_transpose(t, 1, 0).unwrap(), views);
            }
        }
    }
}

#[test]
fn transpose_detects_inconsistent_bookkeeping() {
    let s = sim(1, 1, 1, 2);
    // rank 0 believes rank 1 holds 3 columns; rank 1 holds 2 and says so
    let views = vec![
        RankView::new(0, [0, 0, 0, 0], vec![2, 5], vec![None, Some(Axis::Azimuth)], vec![None, Some(vec![2, 3])], iota(vec![2, 2]))
            .unwrap(),
        RankView::new(1, [0, 0, 0, 1], vec![2, 5], vec![None, Some(Axis::Azimuth)], vec![None, Some(vec![3, 2])], iota(vec![2, 2]))
            .unwrap(),
    ];
    assert!(matches!(s.distributed_transpose(views, 0, 1), Err(Error::Bookkeeping(_))));
    let whole = shard(&iota(vec![2, 4]), &[None, None], s.grid()).unwrap();
    assert!(matches!(s.distributed_transpose(whole, 0, 1), Err(Error::Bookkeeping(_))));
}

#[test]
fn rank_view_rejects_wrong_local_extent() {
    let r = RankView::new(0, [0, 0, 0, 0], vec![5], vec![Some(Axis::Azimuth)], vec![Some(vec![3, 2])], iota(vec![2]));
    assert!(matches!(r, Err(Error::Bookkeeping(_))));
    let r = RankView::new(0, [0, 0, 0, 0], vec![5], vec![Some(Axis::Azimuth)], vec![Some(vec![3, 3])], iota(vec![3]));
    assert!(matches!(r, Err(Error::Bookkeeping(_))));
}

// ---- reductions ----

#[test]
fn all_reduce_of_one_hot_is_the_global_sum() {
    let s = sim(1, 2, 2, 2);
    let views: Vec<RankView<f64>> = (0..8)
        .map(|r| {
            let local = Tensor::from_fn(vec![8], |i| if i == r { (r + 1) as f64 } else { 0.0 });
            RankView::new(r, s.grid().coords(r), vec![8], vec![None], vec![None], local).unwrap()
        })
        .collect();
    let out = s.all_reduce(views, &[Axis::Ensemble, Axis::Polar, Axis::Azimuth]).unwrap();
    let want: Vec<f64> = (1..=8).map(f64::from).collect();
    for v in &out {
        assert_eq!(v.local().data(), want.as_slice());
    }
}

#[test]
fn reduce_scatter_equals_all_reduce_then_shard_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in 1..=4 {
        let s = sim(1, 1, p, 1);
        let views: Vec<RankView<f64>> = (0..p)
            .map(|r| RankView::new(r, s.grid().coords(r), vec![3, 11], vec![None, None], vec![None, None], normal(vec![3, 11], &mut rng)).unwrap())
            .collect();
        let rs = s.reduce_scatter(views.clone(), Axis::Polar, 1).unwrap();
        let ar = s.all_reduce(views, &[Axis::Polar]).unwrap();
        let sc = s.scatter(ar, Axis::Polar, 1).unwrap();
        assert_eq!(rs, sc);
    }
}

#[test]
fn reductions_reject_diverging_shapes() {
    let s = sim(1, 1, 2, 1);
    let views = vec![
        RankView::new(0, [0, 0, 0, 0], vec![3], vec![None], vec![None], iota(vec![3])).unwrap(),
        RankView::new(1, [0, 0, 1, 0], vec![4], vec![None], vec![None], iota(vec![4])).unwrap(),
    ];
    assert!(matches!(s.all_reduce(views.clone(), &[Axis::Polar]), Err(Error::Bookkeeping(_))));
    assert!(s.reduce_scatter(views, Axis::Polar, 0).is_err());
}

#[test]
fn all_gather_after_shard_is_identity() {
    let s = sim(1, 1, 3, 2);
    let x = iota(vec![2, 7, 5]);
    let views = shard(&x, &CHW, s.grid()).unwrap();
    let g = s.all_gather(views, 1).unwrap();
    let g = s.all_gather(g, 2).unwrap();
    for v in &g {
        assert_eq!(v.local(), &x);
    }
}

// ---- distributed transform ----

fn gather_coeffs(t: &Tensor<Complex64>, sample: usize, channels: usize, lmax: usize, mmax: usize) -> Vec<Complex64> {
    let n = channels * lmax * mmax;
    t.data()[sample * n..(sample + 1) * n].to_vec()
}

fn sht_gap(nh: usize, nw: usize, lmax: usize, mmax: usize, seed: u64) -> (f64, Simulator) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Arc::new(GridSpec::gaussian(16, 32).unwrap());
    let plan = ShtPlan::new(g.clone(), lmax, mmax).unwrap();
    let s = sim(1, 1, nh, nw);
    let channels = 4;
    let x = normal(vec![channels, 16, 32], &mut rng);
    let out = unshard(&dist_sht_forward(&s, shard(&x, &CHW, s.grid()).unwrap(), &plan).unwrap()).unwrap();
    let f = SphericalField::from_vec(g, channels, x.data().to_vec()).unwrap();
    let serial = plan.forward(&f).unwrap();
    let gap = gather_coeffs(&out, 0, channels, lmax, mmax)
        .iter()
        .zip(serial.data())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    (gap, s)
}

#[test]
fn dist_sht_two_by_four_matches_serial() {
    let (gap, s) = sht_gap(2, 4, 16, 16, 5);
    assert!(gap <= 1e-12, "gap {gap}");
    let t = s.traffic();
    assert_eq!(t.calls("dist_sht_forward", Collective::AllToAll), 4);
    assert_eq!(t.records.iter().filter(|r| r.collective != Collective::AllToAll).count(), 0);
}

#[test]
fn dist_sht_single_rank_is_the_serial_path() {
    let (gap, _) = sht_gap(1, 1, 16, 16, 6);
    assert_eq!(gap, 0.0);
}

#[test]
fn dist_sht_with_mode_truncation() {
    // mmax = W/4
    let (gap, _) = sht_gap(2, 4, 16, 8, 7);
    assert!(gap <= 1e-12, "gap {gap}");
}

#[test]
fn dist_sht_rejects_wrong_layout() {
    let g = Arc::new(GridSpec::gaussian(8, 16).unwrap());
    let plan = ShtPlan::for_grid(g).unwrap();
    let s = sim(1, 1, 2, 2);
    let x = iota(vec![2, 8, 16]);
    let views = shard(&x, &[Some(Axis::Polar), None, Some(Axis::Azimuth)], s.grid()).unwrap();
    assert!(matches!(dist_sht_forward(&s, views, &plan), Err(Error::Bookkeeping(_))));
    let wrong = shard(&iota(vec![2, 8, 12]), &CHW, s.grid()).unwrap();
    assert!(matches!(dist_sht_forward(&s, wrong, &plan), Err(Error::GridMismatch)));
}

// ---- distributed DISCO ----

fn disco_gap(nh: usize, nw: usize, gin: GridSpec, gout: GridSpec, seed: u64) -> (f64, Simulator) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (gin, gout) = (Arc::new(gin), Arc::new(gout));
    let op = DiscoOperator::assemble(gin.clone(), gout.clone(), FilterBasis::morlet(3.0 * PI / gout.nlat() as f64, 1)).unwrap();
    let (c_in, c_out) = (4, 3);
    let mix = MixWeights::new(c_out, c_in, op.n_basis(), normal(vec![c_out * c_in * op.n_basis()], &mut rng).into_data()).unwrap();
    let s = sim(1, 1, nh, nw);
    let x = normal(vec![c_in, gin.nlat(), gin.nlon()], &mut rng);
    let shards = psi_shards(&op, s.grid()).unwrap();
    let out = unshard(&dist_disco_apply(&s, shard(&x, &CHW, s.grid()).unwrap(), &shards, &mix).unwrap()).unwrap();
    let f = SphericalField::from_vec(gin, c_in, x.data().to_vec()).unwrap();
    let serial = op.apply(&f, &mix).unwrap();
    let gap = out.data().iter().zip(serial.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    (gap, s)
}

#[test]
fn dist_disco_two_by_two_matches_serial() {
    let (gap, s) = disco_gap(2, 2, GridSpec::equiangular(16, 32).unwrap(), GridSpec::gaussian(16, 32).unwrap(), 8);
    assert!(gap <= 1e-12, "gap {gap}");
    let t = s.traffic();
    assert_eq!(t.calls("dist_disco_apply", Collective::AllToAll), 2);
    assert_eq!(t.calls("dist_disco_apply", Collective::ReduceScatter), 1);
    assert_eq!(t.records.len(), 2);
}

#[test]
fn dist_disco_single_rank() {
    let (gap, _) = disco_gap(1, 1, GridSpec::equiangular(16, 32).unwrap(), GridSpec::gaussian(8, 16).unwrap(), 9);
    assert!(gap <= 1e-12, "gap {gap}");
}

#[test]
fn dist_disco_uneven_latitudes() {
    let (gap, _) = disco_gap(2, 2, GridSpec::equiangular(9, 18).unwrap(), GridSpec::gaussian(9, 18).unwrap(), 10);
    assert!(gap <= 1e-12, "gap {gap}");
}

#[test]
fn dist_disco_checks_shard_coverage() {
    let g = Arc::new(GridSpec::equiangular(8, 16).unwrap());
    let op = DiscoOperator::assemble(g.clone(), g.clone(), FilterBasis::morlet(1.0, 1)).unwrap();
    let s = sim(1, 1, 2, 1);
    let mix = MixWeights::identity(2, op.n_basis());
    let mut shards = psi_shards(&op, s.grid()).unwrap();
    shards.swap(0, 1);
    let views = shard(&iota(vec![2, 8, 16]), &CHW, s.grid()).unwrap();
    assert!(matches!(dist_disco_apply(&s, views, &shards, &mix), Err(Error::Bookkeeping(_))));
}

#[test]
fn psi_shards_partition_the_operator() {
    let g = Arc::new(GridSpec::equiangular(12, 24).unwrap());
    let op = DiscoOperator::assemble(g.clone(), g.clone(), FilterBasis::morlet(0.8, 2)).unwrap();
    let shards = psi_shards(&op, &build_comm_grid(1, 1, 4, 1).unwrap()).unwrap();
    assert_eq!(shards.iter().map(|s| s.op.nnz()).sum::<usize>(), op.nnz());
    for s in &shards {
        assert!(s.op.rows().iter().all(|r| r.h_in.iter().all(|h| s.rows.contains(h))));
    }
}

// ---- distributed CRPS ----

#[allow(clippy::too_many_arguments)]
fn crps_gap(nb: usize, ne: usize, nh: usize, nw: usize, members: usize, g: GridSpec, variant: CrpsVariant, seed: u64) -> (f64, Simulator) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Arc::new(g);
    let (batch, channels) = (nb + 1, 2);
    let s = sim(nb, ne, nh, nw);
    let f = normal(vec![batch, members, channels, g.nlat(), g.nlon()], &mut rng);
    let o = normal(vec![batch, channels, g.nlat(), g.nlon()], &mut rng);
    let fa = [Some(Axis::Batch), Some(Axis::Ensemble), None, Some(Axis::Polar), Some(Axis::Azimuth)];
    let oa = [Some(Axis::Batch), None, Some(Axis::Polar), Some(Axis::Azimuth)];
    let out = dist_crps(&s, shard(&f, &fa, s.grid()).unwrap(), shard(&o, &oa, s.grid()).unwrap(), &g, variant).unwrap();
    let out = unshard(&out).unwrap();
    let (fb, ob) = (members * channels * g.len(), channels * g.len());
    let mut gap: f64 = 0.0;
    for b in 0..batch {
        let ens = EnsembleField::from_vec(g.clone(), members, channels, f.data()[b * fb..(b + 1) * fb].to_vec()).unwrap();
        let obs = SphericalField::from_vec(g.clone(), channels, o.data()[b * ob..(b + 1) * ob].to_vec()).unwrap();
        let serial = crps_field(&ens, &obs, variant).unwrap();
        for c in 0..channels {
            gap = gap.max((out.data()[b * channels + c] - serial[c]).abs());
        }
    }
    (gap, s)
}

#[test]
fn dist_crps_eight_members_over_four_ranks() {
    let (gap, s) = crps_gap(1, 4, 2, 2, 8, GridSpec::equiangular(8, 16).unwrap(), CrpsVariant::Fair, 11);
    assert!(gap <= 1e-12, "gap {gap}");
    let t = s.traffic();
    assert_eq!(t.calls("dist_crps", Collective::AllToAll), 1);
    assert_eq!(t.calls("dist_crps", Collective::Scatter), 1);
    assert_eq!(t.calls("dist_crps", Collective::AllReduce), 1);
}

#[test]
fn dist_crps_without_ensemble_parallelism() {
    for variant in [CrpsVariant::Cdf, CrpsVariant::SpreadSkill, CrpsVariant::Fair] {
        let (gap, _) = crps_gap(1, 1, 1, 1, 5, GridSpec::gaussian(8, 16).unwrap(), variant, 12);
        assert!(gap <= 1e-12, "{variant:?} gap {gap}");
    }
}

#[test]
fn dist_crps_patch_not_divisible_by_ensemble_ranks() {
    // 4x10 over 2x2 gives Sloc = 10, split [3, 3, 2, 2] over four ensemble ranks
    for variant in [CrpsVariant::Cdf, CrpsVariant::Fair] {
        let (gap, _) = crps_gap(1, 4, 2, 2, 6, GridSpec::equiangular(4, 10).unwrap(), variant, 13);
        assert!(gap <= 1e-12, "gap {gap}");
    }
}

#[test]
fn dist_crps_with_batch_parallelism() {
    let (gap, _) = crps_gap(2, 2, 2, 1, 5, GridSpec::equiangular(6, 8).unwrap(), CrpsVariant::SpreadSkill, 14);
    assert!(gap <= 1e-12, "gap {gap}");
}

#[test]
fn dist_crps_needs_a_sharded_ensemble_dim() {
    let s = sim(1, 1, 1, 1);
    let g = GridSpec::equiangular(4, 8).unwrap();
    let f = shard(&iota(vec![3, 1, 4, 8]), &[None, None, Some(Axis::Polar), Some(Axis::Azimuth)], s.grid()).unwrap();
    let o = shard(&iota(vec![1, 4, 8]), &CHW, s.grid()).unwrap();
    assert!(matches!(dist_crps(&s, f, o, &g, CrpsVariant::Cdf), Err(Error::Bookkeeping(_))));
}

// ---- sweep, scheduling, determinism ----

#[test]
fn every_decomposition_matches_serial() {
    for (nh, nw) in DECOMPS {
        for ne in [1, 2, 4] {
            let grid = build_comm_grid(1, ne, nh, nw).unwrap();
            for op in DistOp::ALL {
                let r = check_against_serial(op, grid.clone(), Schedule::RoundRobin, 17).unwrap();
                assert!(r.max_abs_gap <= 1e-12, "{op} ({nh},{nw}) nE={ne}: gap {}", r.max_abs_gap);
            }
        }
    }
}

#[test]
fn threaded_and_round_robin_agree_bitwise() {
    let grid = build_comm_grid(2, 2, 2, 4).unwrap();
    for op in DistOp::ALL {
        let a = check_against_serial(op, grid.clone(), Schedule::RoundRobin, 21).unwrap();
        let b = check_against_serial(op, grid.clone(), Schedule::Threaded, 21).unwrap();
        assert_eq!(a.max_abs_gap.to_bits(), b.max_abs_gap.to_bits(), "{op}");
        assert_eq!(a.traffic, b.traffic, "{op}");
    }
    let g = Arc::new(GridSpec::gaussian(16, 32).unwrap());
    let plan = ShtPlan::for_grid(g).unwrap();
    let x = iota(vec![4, 16, 32]).map(|v| (v * 0.37).sin());
    let run = |schedule| {
        let s = Simulator::new(build_comm_grid(1, 1, 2, 4).unwrap(), schedule);
        unshard(&dist_sht_forward(&s, shard(&x, &CHW, s.grid()).unwrap(), &plan).unwrap()).unwrap()
    };
    assert_eq!(run(Schedule::RoundRobin), run(Schedule::Threaded));
}

#[test]
fn repeated_runs_are_bit_identical() {
    let grid: CommGrid = "2x4".parse().unwrap();
    for op in DistOp::ALL {
        let a = check_against_serial(op, grid.clone(), Schedule::Threaded, 5).unwrap();
        let b = check_against_serial(op, grid.clone(), Schedule::Threaded, 5).unwrap();
        assert_eq!(a.max_abs_gap.to_bits(), b.max_abs_gap.to_bits());
    }
}

#[test]
fn traffic_report_csv() {
    let r = check_against_serial(DistOp::Sht, "2x4".parse().unwrap(), Schedule::RoundRobin, 1).unwrap();
    let csv = r.traffic.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("operation,axis,collective,bytes,calls"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows.iter().map(|r| r[4].parse::<u64>().unwrap()).sum::<u64>(), 4);
    assert!(rows.iter().all(|r| r[0] == "dist_sht_forward" && r[2] == "all_to_all"));
    assert!(rows.iter().any(|r| r[1] == "azimuth" && r[4] == "2"));
    assert!(rows.iter().any(|r| r[1] == "polar" && r[4] == "2"));
    assert!(rows.iter().all(|r| r[3].parse::<u64>().unwrap() > 0));
}

#[test]
fn single_rank_moves_no_bytes() {
    let r = check_against_serial(DistOp::Disco, "1x1".parse().unwrap(), Schedule::RoundRobin, 1).unwrap();
    assert_eq!(r.traffic.bytes("dist_disco_apply"), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transpose_then_inverse_is_identity(
        nh in 1usize..4, nw in 1usize..4, c in 4usize..9, h in 4usize..11, w in 4usize..11,
    ) {
        let s = sim(1, 1, nh, nw);
        let x = iota(vec![c, h, w]);
        let views = shard(&x, &CHW, s.grid()).unwrap();
        let a = s.distributed_transpose(views.clone(), 0, 2).unwrap();
        prop_assert_eq!(unshard(&a).unwrap(), x.clone());
        let b = s.distributed_transpose(a, 2, 0).unwrap();
        let b2 = s.distributed_transpose(b.clone(), 0, 1).unwrap();
        prop_assert_eq!(unshard(&b2).unwrap(), x);
        prop_assert_eq!(b, views);
    }

    #[test]
    fn local_extents_follow_the_split_rule(n in 1usize..40, p in 1usize..9) {
        prop_assume!(n >= p);
        let sizes = split_sizes(n, p).unwrap();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        let max = *sizes.iter().max().unwrap();
        let min = *sizes.iter().min().unwrap();
        prop_assert!(max - min <= 1);
        prop_assert_eq!(sizes.iter().filter(|&&s| s == n.div_ceil(p)).count(), if n % p == 0 { p } else { n % p });
        prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
    }
}
