//! Serial-versus-distributed comparison on seeded random inputs.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::algorithms::{dist_crps, dist_disco_apply, dist_sht_forward, psi_shards};
use super::router::{Schedule, Simulator, TrafficReport};
use super::tensor::Tensor;
use super::view::{shard, unshard};
use super::{Axis, CommGrid};
use crate::convolutions::{DiscoOperator, FilterBasis, MixWeights};
use crate::error::{Error, Result};
use crate::field::{EnsembleField, SphericalField};
use crate::grids::GridSpec;
use crate::harmonics::ShtPlan;
use crate::metrics::{crps_field, CrpsVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistOp {
    Sht,
    Disco,
    Crps,
}

impl DistOp {
    pub const ALL: [DistOp; 3] = [DistOp::Sht, DistOp::Disco, DistOp::Crps];

    pub fn name(self) -> &'static str {
        match self {
            DistOp::Sht => "sht",
            DistOp::Disco => "disco",
            DistOp::Crps => "crps",
        }
    }
}

impl fmt::Display for DistOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sht" => Ok(DistOp::Sht),
            "disco" => Ok(DistOp::Disco),
            "crps" => Ok(DistOp::Crps),
            _ => Err(Error::InvalidArgument(format!("unknown operation '{s}', expected sht, disco or crps"))),
        }
    }
}

/// Outcome of one comparison.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub op: DistOp,
    pub max_abs_gap: f64,
    pub traffic: TrafficReport,
}

fn normal_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| StandardNormal.sample(rng))
}

/// Runs `op` on `grid` and on a single rank and reports the largest gap.
///
/// Problem sizes are fixed and deliberately uneven: a 9×10 Gaussian grid for
/// the transform, a 12×20 equiangular to 9×10 Gaussian convolution, and a
/// 9×10 grid for the fair CRPS. Every data dim carries one more entry than
/// its communicator has ranks along the batch and ensemble axes.
pub fn check_against_serial(op: DistOp, grid: CommGrid, schedule: Schedule, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sim = Simulator::new(grid.clone(), schedule);
    let batch = grid.size(Axis::Batch) + 1;
    let members = grid.size(Axis::Ensemble) + 1;
    let spatial = [Some(Axis::Batch), Some(Axis::Ensemble), None, Some(Axis::Polar), Some(Axis::Azimuth)];
    let gap = match op {
        DistOp::Sht => {
            let g = Arc::new(GridSpec::gaussian(9, 10)?);
            let plan = ShtPlan::new(g.clone(), 9, 5)?;
            let channels = 5;
            let x = normal_tensor(vec![batch, members, channels, 9, 10], &mut rng);
            let out = unshard(&dist_sht_forward(&sim, shard(&x, &spatial, &grid)?, &plan)?)?;
            let mut gap: f64 = 0.0;
            for (s, block) in x.data().chunks(channels * g.len()).enumerate() {
                let f = SphericalField::from_vec(g.clone(), channels, block.to_vec())?;
                let serial = plan.forward(&f)?;
                let n = serial.data().len();
                let dist = &out.data()[s * n..(s + 1) * n];
                gap = dist.iter().zip(serial.data()).map(|(a, b): (&Complex64, _)| (a - b).norm()).fold(gap, f64::max);
            }
            gap
        }
        DistOp::Disco => {
            let gin = Arc::new(GridSpec::equiangular(12, 20)?);
            let gout = Arc::new(GridSpec::gaussian(9, 10)?);
            let op = DiscoOperator::assemble(gin.clone(), gout.clone(), FilterBasis::morlet(3.0 * PI / 9.0, 1))?;
            let (c_in, c_out) = (5, 3);
            let mix = MixWeights::new(
                c_out,
                c_in,
                op.n_basis(),
                normal_tensor(vec![c_out * c_in * op.n_basis()], &mut rng).into_data(),
            )?;
            let x = normal_tensor(vec![batch, members, c_in, 12, 20], &mut rng);
            let shards = psi_shards(&op, &grid)?;
            let out = unshard(&dist_disco_apply(&sim, shard(&x, &spatial, &grid)?, &shards, &mix)?)?;
            let mut gap: f64 = 0.0;
            let n = c_out * gout.len();
            for (s, block) in x.data().chunks(c_in * gin.len()).enumerate() {
                let f = SphericalField::from_vec(gin.clone(), c_in, block.to_vec())?;
                let serial = op.apply(&f, &mix)?;
                let dist = &out.data()[s * n..(s + 1) * n];
                gap = dist.iter().zip(serial.data()).map(|(a, b)| (a - b).abs()).fold(gap, f64::max);
            }
            gap
        }
        DistOp::Crps => {
            let g = Arc::new(GridSpec::equiangular(9, 10)?);
            let channels = 3;
            let members = 2 * grid.size(Axis::Ensemble) + 1;
            let f = normal_tensor(vec![batch, members, channels, 9, 10], &mut rng);
            let o = normal_tensor(vec![batch, channels, 9, 10], &mut rng);
            let obs_axes = [Some(Axis::Batch), None, Some(Axis::Polar), Some(Axis::Azimuth)];
            let out = unshard(&dist_crps(
                &sim,
                shard(&f, &spatial, &grid)?,
                shard(&o, &obs_axes, &grid)?,
                &g,
                CrpsVariant::Fair,
            )?)?;
            let mut gap: f64 = 0.0;
            let block = members * channels * g.len();
            for b in 0..batch {
                let ens = EnsembleField::from_vec(g.clone(), members, channels, f.data()[b * block..(b + 1) * block].to_vec())?;
                let obs = SphericalField::from_vec(g.clone(), channels, o.data()[b * channels * g.len()..(b + 1) * channels * g.len()].to_vec())?;
                let serial = crps_field(&ens, &obs, CrpsVariant::Fair)?;
                let dist = &out.data()[b * channels..(b + 1) * channels];
                gap = dist.iter().zip(&serial).map(|(a, b)| (a - b).abs()).fold(gap, f64::max);
            }
            gap
        }
    };
    Ok(CheckReport { op, max_abs_gap: gap, traffic: sim.traffic() })
}
