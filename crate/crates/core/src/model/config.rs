use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grids::GridSpec;

/// Shape and hyperparameters of a [`super::Model`].
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub in_grid: Arc<GridSpec>,
    pub latent_grid: Arc<GridSpec>,
    pub out_grid: Arc<GridSpec>,
    pub n_levels: usize,
    /// Atmospheric variables per level.
    pub n_atmo_vars: usize,
    pub n_surface: usize,
    pub n_aux: usize,
    pub n_noise: usize,
    /// Latent channels per atmospheric variable, shared across levels.
    pub embed_atmo: usize,
    pub embed_surface: usize,
    /// Latent channels per auxiliary or noise channel.
    pub embed_cond: usize,
    pub n_local_blocks: usize,
    pub n_global_blocks: usize,
    pub mlp_hidden: usize,
    /// Indices into the prognostic output channels.
    pub water_channels: Vec<usize>,
    pub theta_cutoff: f64,
    pub layer_scale_init: f64,
    /// Morlet basis order of every local convolution.
    pub basis_order: i32,
    pub calibration_probes: usize,
    /// Iterations of the closed-loop decoder calibration.
    pub closed_loop_steps: usize,
}

/// Local or global processor block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Local,
    Global,
}

impl ModelConfig {
    /// In/out 33×64 equiangular, latent 16×32 Gaussian, 3 levels × 2
    /// variables, 2 surface, 2 auxiliary and 2 noise channels.
    pub fn desk() -> Self {
        let latent = GridSpec::gaussian(16, 32).expect("static grid");
        Self {
            in_grid: Arc::new(GridSpec::equiangular(33, 64).expect("static grid")),
            out_grid: Arc::new(GridSpec::equiangular(33, 64).expect("static grid")),
            theta_cutoff: 3.0 * PI / latent.nlat() as f64,
            latent_grid: Arc::new(latent),
            n_levels: 3,
            n_atmo_vars: 2,
            n_surface: 2,
            n_aux: 2,
            n_noise: 2,
            embed_atmo: 8,
            embed_surface: 8,
            embed_cond: 4,
            n_local_blocks: 4,
            n_global_blocks: 1,
            mlp_hidden: 32,
            water_channels: vec![1, 3, 5, 7],
            layer_scale_init: 1e-2,
            basis_order: 2,
            calibration_probes: 4,
            closed_loop_steps: 16,
        }
    }

    /// A smaller configuration for long rollouts.
    pub fn toy() -> Self {
        let latent = GridSpec::gaussian(8, 16).expect("static grid");
        Self {
            in_grid: Arc::new(GridSpec::equiangular(17, 32).expect("static grid")),
            out_grid: Arc::new(GridSpec::equiangular(17, 32).expect("static grid")),
            theta_cutoff: 3.0 * PI / latent.nlat() as f64,
            latent_grid: Arc::new(latent),
            n_levels: 1,
            n_atmo_vars: 2,
            n_surface: 1,
            n_aux: 1,
            n_noise: 2,
            embed_atmo: 4,
            embed_surface: 4,
            embed_cond: 2,
            n_local_blocks: 4,
            n_global_blocks: 1,
            mlp_hidden: 16,
            water_channels: vec![1, 2],
            layer_scale_init: 1e-2,
            basis_order: 1,
            calibration_probes: 4,
            closed_loop_steps: 16,
        }
    }

    pub fn atmo_channels(&self) -> usize {
        self.n_levels * self.n_atmo_vars
    }

    /// Atmospheric then surface channels, level-major.
    pub fn prognostic_channels(&self) -> usize {
        self.atmo_channels() + self.n_surface
    }

    pub fn cond_channels(&self) -> usize {
        self.n_aux + self.n_noise
    }

    pub fn latent_atmo_channels(&self) -> usize {
        self.atmo_channels() * self.embed_atmo
    }

    pub fn latent_channels(&self) -> usize {
        self.latent_atmo_channels() + self.n_surface * self.embed_surface
    }

    pub fn latent_cond_channels(&self) -> usize {
        self.cond_channels() * self.embed_cond
    }

    /// Four local blocks before each global block.
    pub fn block_kinds(&self) -> Vec<BlockKind> {
        let per = self.n_local_blocks / self.n_global_blocks.max(1);
        let mut kinds = Vec::with_capacity(self.n_local_blocks + self.n_global_blocks);
        for _ in 0..self.n_global_blocks {
            kinds.extend(std::iter::repeat_n(BlockKind::Local, per));
            kinds.push(BlockKind::Global);
        }
        kinds
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_global_blocks == 0 || self.n_local_blocks != 4 * self.n_global_blocks {
            return bad(format!(
                "need 4 local blocks per global block, got {}:{}",
                self.n_local_blocks, self.n_global_blocks
            ));
        }
        if self.latent_grid.nlat() >= self.in_grid.nlat() || !self.in_grid.nlon().is_multiple_of(self.latent_grid.nlon()) {
            return bad(format!(
                "latent grid {}x{} must be coarser than the input grid {}x{} with a dividing nlon",
                self.latent_grid.nlat(),
                self.latent_grid.nlon(),
                self.in_grid.nlat(),
                self.in_grid.nlon()
            ));
        }
        if self.n_levels * self.n_atmo_vars + self.n_surface == 0 {
            return bad("no prognostic channels".into());
        }
        if self.embed_atmo == 0 || self.embed_surface == 0 || self.embed_cond == 0 || self.mlp_hidden == 0 {
            return bad("embedding and hidden sizes must be positive".into());
        }
        if let Some(&c) = self.water_channels.iter().find(|&&c| c >= self.prognostic_channels()) {
            return bad(format!("water channel {c} out of range"));
        }
        if !(self.theta_cutoff > 0.0 && self.theta_cutoff <= PI) || !self.layer_scale_init.is_finite() {
            return bad("cutoff or layer scale out of range".into());
        }
        if self.calibration_probes == 0 {
            return bad("need at least one calibration probe".into());
        }
        Ok(())
    }
}
