//! Spherical neural operator: grouped DISCO encoders, conditioned
//! processor blocks, bilinear-upsampling decoder and softclamped water
//! channels, with autoregressive rollout.

mod config;
mod layers;

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{BlockKind, ModelConfig};
pub use layers::{gelu, softclamp, uncentered_variance, Block, BlockConv, GroupedConv, Linear};

use crate::convolutions::{DiscoOperator, FilterBasis};
use crate::error::{shape_err, Error, Result};
use crate::field::SphericalField;
use crate::harmonics::ShtPlan;
use crate::io::{read_weights, write_weights, NamedTensor};
use crate::noise::NoiseStream;
use crate::resampling::bilinear_resample;

/// Supplies auxiliary fields for each rollout step.
pub trait AuxProvider {
    fn aux(&mut self, step: usize) -> Result<SphericalField>;
}

/// The same auxiliary field at every step.
#[derive(Debug, Clone)]
pub struct StaticAux(pub SphericalField);

impl AuxProvider for StaticAux {
    fn aux(&mut self, _step: usize) -> Result<SphericalField> {
        Ok(self.0.clone())
    }
}

/// A finite list of auxiliary fields, one per step.
#[derive(Debug, Clone)]
pub struct AuxSequence(pub Vec<SphericalField>);

impl AuxProvider for AuxSequence {
    fn aux(&mut self, step: usize) -> Result<SphericalField> {
        self.0.get(step).cloned().ok_or(Error::ProviderExhausted(step))
    }
}

/// Assembled operators shared by every layer of one model.
#[derive(Debug)]
struct Operators {
    encode: Arc<DiscoOperator>,
    latent: Arc<DiscoOperator>,
    decode: Arc<DiscoOperator>,
    sht: Arc<ShtPlan>,
}

impl Operators {
    fn build(cfg: &ModelConfig) -> Result<Self> {
        let basis = FilterBasis::morlet(cfg.theta_cutoff, cfg.basis_order);
        let lat = cfg.latent_grid.clone();
        let lmax = lat.nlat();
        Ok(Self {
            encode: Arc::new(DiscoOperator::assemble(cfg.in_grid.clone(), lat.clone(), basis.clone())?),
            latent: Arc::new(DiscoOperator::assemble(lat.clone(), lat.clone(), basis.clone())?),
            decode: Arc::new(DiscoOperator::assemble(cfg.out_grid.clone(), cfg.out_grid.clone(), basis)?),
            sht: Arc::new(ShtPlan::new(lat.clone(), lmax, lmax.min(lat.nlon() / 2))?),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    enc_atmo: GroupedConv,
    enc_surface: GroupedConv,
    enc_cond: GroupedConv,
    blocks: Vec<Block>,
    dec_atmo: GroupedConv,
    dec_surface: GroupedConv,
    seed: u64,
}

impl Model {
    /// Seeded initialization: He fan-in MLPs, convolutions rescaled once so
    /// that unit white noise keeps unit uncentered variance, layer scales at
    /// `layer_scale_init`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let ops = Operators::build(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = &config;
        let atmo_sets: Vec<usize> = (0..cfg.atmo_channels()).map(|c| c % cfg.n_atmo_vars).collect();
        let probes = cfg.calibration_probes;

        let mut enc_atmo = GroupedConv::new(ops.encode.clone(), 1, cfg.embed_atmo, atmo_sets.clone(), &mut rng);
        let mut enc_surface =
            GroupedConv::new(ops.encode.clone(), 1, cfg.embed_surface, (0..cfg.n_surface).collect(), &mut rng);
        let mut enc_cond =
            GroupedConv::new(ops.encode.clone(), 1, cfg.embed_cond, (0..cfg.cond_channels()).collect(), &mut rng);
        let mut dec_atmo = GroupedConv::new(ops.decode.clone(), cfg.embed_atmo, 1, atmo_sets, &mut rng);
        let mut dec_surface =
            GroupedConv::new(ops.decode.clone(), cfg.embed_surface, 1, (0..cfg.n_surface).collect(), &mut rng);
        for conv in [&mut enc_atmo, &mut enc_surface, &mut enc_cond, &mut dec_atmo, &mut dec_surface] {
            if conv.c_in() > 0 {
                conv.calibrate(probes, &mut rng)?;
            }
        }

        let (c, cc, hidden) = (cfg.latent_channels(), cfg.latent_cond_channels(), cfg.mlp_hidden);
        let mut blocks = Vec::new();
        for kind in cfg.block_kinds() {
            let mut conv = match kind {
                BlockKind::Local => BlockConv::local(ops.latent.clone(), c, c + cc, &mut rng),
                BlockKind::Global => BlockConv::global(ops.sht.clone(), c, c + cc, &mut rng),
            };
            conv.calibrate(&cfg.latent_grid, probes, &mut rng)?;
            blocks.push(Block {
                conv,
                fc1: Linear::he(hidden, c, &mut rng),
                fc2: Linear::he(c, hidden, &mut rng),
                scale: vec![cfg.layer_scale_init; c],
            });
        }
        let mut model = Self { config, enc_atmo, enc_surface, enc_cond, blocks, dec_atmo, dec_surface, seed };
        if model.config.out_grid.same_as(&model.config.in_grid) {
            model.calibrate_closed_loop(&mut rng)?;
        }
        Ok(model)
    }

    /// Rescales the decoder so that one step keeps the uncentered variance of
    /// its own (smooth) output, found by iterating the map from white noise.
    fn calibrate_closed_loop(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        let cfg = &self.config;
        let grid = cfg.in_grid.clone();
        let aux = layers::white_noise(&grid, cfg.n_aux, rng);
        let z = layers::white_noise(&grid, cfg.n_noise, rng);
        let mut u = layers::white_noise(&grid, cfg.prognostic_channels(), rng);
        for _ in 0..cfg.closed_loop_steps {
            let y = self.decode_raw(&self.process(&u, &aux, &z)?)?;
            let s = (uncentered_variance(&u) / uncentered_variance(&y)).sqrt();
            self.dec_atmo.scale(s);
            self.dec_surface.scale(s);
            let norm = uncentered_variance(&y).sqrt();
            u = y.map(|v| v / norm);
        }
        Ok(())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Block] {
        &mut self.blocks
    }

    fn check_input(&self, field: &SphericalField, channels: usize) -> Result<()> {
        if !field.grid().same_as(&self.config.in_grid) {
            return Err(Error::GridMismatch);
        }
        if field.channels() != channels {
            return Err(shape_err(format!("{channels} channels"), field.channels()));
        }
        Ok(())
    }

    fn grouped(conv: &GroupedConv, x: SphericalField, grid: &Arc<crate::grids::GridSpec>) -> Result<SphericalField> {
        if conv.c_in() == 0 {
            Ok(SphericalField::zeros(grid.clone(), 0))
        } else {
            conv.apply(&x)
        }
    }

    /// Prognostic state on the input grid to the latent state. Each channel is
    /// encoded on its own; atmospheric variables share filters across levels.
    pub fn encode(&self, state: &SphericalField) -> Result<SphericalField> {
        let cfg = &self.config;
        self.check_input(state, cfg.prognostic_channels())?;
        let na = cfg.atmo_channels();
        let atmo = Self::grouped(&self.enc_atmo, state.select_channels(0..na), &cfg.latent_grid)?;
        let surface = Self::grouped(&self.enc_surface, state.select_channels(na..state.channels()), &cfg.latent_grid)?;
        SphericalField::concat(&[&atmo, &surface])
    }

    /// Auxiliary and noise channels on the input grid to latent conditioning.
    pub fn encode_cond(&self, aux: &SphericalField, noise: &SphericalField) -> Result<SphericalField> {
        self.check_input(aux, self.config.n_aux)?;
        self.check_input(noise, self.config.n_noise)?;
        self.enc_cond.apply(&SphericalField::concat(&[aux, noise])?)
    }

    pub fn block_apply(&self, index: usize, latent: &SphericalField, cond: &SphericalField) -> Result<SphericalField> {
        let block = self
            .blocks
            .get(index)
            .ok_or_else(|| Error::InvalidArgument(format!("block {index} out of range")))?;
        block.apply(latent, cond)
    }

    /// Bilinear upsampling, grouped convolution, then softclamp on water channels.
    pub fn decode(&self, latent: &SphericalField) -> Result<SphericalField> {
        let cfg = &self.config;
        if !latent.grid().same_as(&cfg.latent_grid) {
            return Err(Error::GridMismatch);
        }
        if latent.channels() != cfg.latent_channels() {
            return Err(shape_err(format!("{} channels", cfg.latent_channels()), latent.channels()));
        }
        let mut out = self.decode_raw(latent)?;
        for &c in &cfg.water_channels {
            out.channel_mut(c).iter_mut().for_each(|v| *v = softclamp(*v));
        }
        Ok(out)
    }

    fn decode_raw(&self, latent: &SphericalField) -> Result<SphericalField> {
        let cfg = &self.config;
        let up = bilinear_resample(latent, cfg.out_grid.clone());
        let na = cfg.latent_atmo_channels();
        let atmo = Self::grouped(&self.dec_atmo, up.select_channels(0..na), &cfg.out_grid)?;
        let surface = Self::grouped(&self.dec_surface, up.select_channels(na..up.channels()), &cfg.out_grid)?;
        SphericalField::concat(&[&atmo, &surface])
    }

    /// Encoder and processor blocks.
    fn process(&self, u: &SphericalField, aux: &SphericalField, z: &SphericalField) -> Result<SphericalField> {
        let mut x = self.encode(u)?;
        let cond = self.encode_cond(aux, z)?;
        for b in &self.blocks {
            x = b.apply(&x, &cond)?;
        }
        Ok(x)
    }

    /// Uncentered variance after the encoder and after every block.
    pub fn activation_trace(&self, u: &SphericalField, aux: &SphericalField, z: &SphericalField) -> Result<Vec<f64>> {
        let mut x = self.encode(u)?;
        let cond = self.encode_cond(aux, z)?;
        let mut trace = vec![uncentered_variance(&x)];
        for b in &self.blocks {
            x = b.apply(&x, &cond)?;
            trace.push(uncentered_variance(&x));
        }
        Ok(trace)
    }

    /// One step `u_{n+1} = F(u_n, a_n, z_n)`; the full next state, not a tendency.
    pub fn forward(&self, u: &SphericalField, aux: &SphericalField, z: &SphericalField) -> Result<SphericalField> {
        self.decode(&self.process(u, aux, z)?)
    }

    /// `n_steps` autoregressive steps, advancing the noise once per step.
    pub fn rollout(
        &self,
        u0: &SphericalField,
        aux: &mut dyn AuxProvider,
        noise: &mut NoiseStream,
        n_steps: usize,
    ) -> Result<Vec<SphericalField>> {
        if n_steps == 0 {
            return Err(Error::InvalidArgument("rollout needs at least one step".into()));
        }
        if !self.config.out_grid.same_as(&self.config.in_grid) {
            return Err(Error::GridMismatch);
        }
        let mut states = Vec::with_capacity(n_steps);
        let mut u = u0.clone();
        for step in 0..n_steps {
            let a = aux.aux(step)?;
            let z = noise.current()?;
            u = self.forward(&u, &a, &z)?;
            noise.advance()?;
            states.push(u.clone());
        }
        Ok(states)
    }

    fn grouped_tensors(name: &str, conv: &GroupedConv, out: &mut Vec<NamedTensor>) {
        let k = conv.op.n_basis();
        for (s, w) in conv.sets.iter().enumerate() {
            out.push(NamedTensor::new(format!("{name}.{s}"), vec![conv.g_out, conv.g_in, k], w.clone()));
        }
    }

    /// Every parameter as a named tensor.
    pub fn to_tensors(&self) -> Vec<NamedTensor> {
        let mut t = Vec::new();
        Self::grouped_tensors("encoder.atmo", &self.enc_atmo, &mut t);
        Self::grouped_tensors("encoder.surface", &self.enc_surface, &mut t);
        Self::grouped_tensors("encoder.cond", &self.enc_cond, &mut t);
        for (i, b) in self.blocks.iter().enumerate() {
            t.push(NamedTensor::new(format!("blocks.{i}.conv"), b.conv.shape(), b.conv.weights().to_vec()));
            for (name, l) in [("fc1", &b.fc1), ("fc2", &b.fc2)] {
                t.push(NamedTensor::new(format!("blocks.{i}.{name}.weight"), vec![l.c_out, l.c_in], l.weight.clone()));
                t.push(NamedTensor::new(format!("blocks.{i}.{name}.bias"), vec![l.c_out], l.bias.clone()));
            }
            t.push(NamedTensor::new(format!("blocks.{i}.scale"), vec![b.scale.len()], b.scale.clone()));
        }
        Self::grouped_tensors("decoder.atmo", &self.dec_atmo, &mut t);
        Self::grouped_tensors("decoder.surface", &self.dec_surface, &mut t);
        t
    }

    /// Overwrites every parameter from `tensors`, matched by name and shape.
    pub fn load_tensors(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        let expected = self.to_tensors();
        if expected.len() != tensors.len() {
            return Err(shape_err(format!("{} tensors", expected.len()), tensors.len()));
        }
        for (e, t) in expected.iter().zip(tensors) {
            if e.name != t.name || e.shape != t.shape || t.data.len() != e.data.len() {
                return Err(shape_err(format!("{} {:?}", e.name, e.shape), format!("{} {:?}", t.name, t.shape)));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite weight in {}", t.name)));
            }
        }
        let mut it = tensors.iter();
        let mut next = || it.next().expect("length checked").data.clone();
        for conv in [&mut self.enc_atmo, &mut self.enc_surface, &mut self.enc_cond] {
            conv.sets.iter_mut().for_each(|s| *s = next());
        }
        for b in &mut self.blocks {
            b.conv.weights_mut().copy_from_slice(&next());
            b.fc1.weight = next();
            b.fc1.bias = next();
            b.fc2.weight = next();
            b.fc2.bias = next();
            b.scale = next();
        }
        for conv in [&mut self.dec_atmo, &mut self.dec_surface] {
            conv.sets.iter_mut().for_each(|s| *s = next());
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(write_weights(path, &self.to_tensors())?)
    }

    /// Builds the operators for `config` and loads saved weights.
    pub fn load(config: ModelConfig, path: impl AsRef<Path>) -> Result<Self> {
        let tensors = read_weights(path)?;
        let mut model = Self::init(config, 0)?;
        model.load_tensors(&tensors)?;
        Ok(model)
    }
}
