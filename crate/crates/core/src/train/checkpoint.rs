//! Versioned binary checkpoints: model config, parameters, optimizer state,
//! RNG state, and counters. Round-trips are bit-exact, which is what makes
//! resumed training indistinguishable from an uninterrupted run.

use super::TrainError;
use crate::model::{FusionModelParams, FusionNet, ModelConfig, Variant};
use crate::nn::{AdamConfig, AdamState, CyclicLrSchedule, MomentPair};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"RFCP";
const VERSION: u32 = 1;

/// Complete ChaCha stream position; restoring it resumes the exact sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub word_pos: u128,
    pub stream: u64,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            word_pos: rng.get_word_pos(),
            stream: rng.get_stream(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub params: FusionModelParams,
    pub optimizer: AdamState,
    pub rng: RngState,
    pub epoch: u32,
    pub config_hash: [u8; 32],
}

impl Checkpoint {
    pub fn into_net(self) -> FusionNet {
        FusionNet {
            config: self.model_config,
            params: self.params,
        }
    }

    pub fn net(&self) -> FusionNet {
        FusionNet {
            config: self.model_config.clone(),
            params: self.params.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let mut w = Vec::new();
        self.encode(&mut w)?;
        std::fs::write(path, w)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, TrainError> {
        let bytes = std::fs::read(path)?;
        Self::decode(&bytes[..])
    }

    fn encode<W: Write>(&self, w: &mut W) -> Result<(), TrainError> {
        w.write_all(MAGIC)?;
        put_u32(w, VERSION)?;

        let c = &self.model_config;
        put_u32(w, c.obs_width as u32)?;
        put_u32(w, c.backbone_width as u32)?;
        put_u32(w, c.rotatable_width as u32)?;
        put_u32(w, c.blocks as u32)?;
        put_f64(w, c.alpha)?;
        put_u8(w, variant_tag(c.variant))?;
        put_u8(w, c.sequential_block_update as u8)?;

        let mut tensors = Vec::new();
        self.params.visit_tensors(&mut tensors);
        put_u32(w, tensors.len() as u32)?;
        for t in &tensors {
            put_u32(w, t.rows() as u32)?;
            put_u32(w, t.cols() as u32)?;
            for v in t.data() {
                put_f64(w, *v)?;
            }
        }

        let opt = &self.optimizer;
        put_f64(w, opt.config.beta1)?;
        put_f64(w, opt.config.beta2)?;
        put_f64(w, opt.config.epsilon)?;
        put_f64(w, opt.config.weight_decay)?;
        put_f64(w, opt.schedule.base_lr)?;
        put_f64(w, opt.schedule.max_lr)?;
        put_u64(w, opt.schedule.steps_per_cycle as u64)?;
        put_f64(w, opt.schedule.decay)?;
        put_u64(w, opt.step)?;
        put_u32(w, opt.moments.len() as u32)?;
        for m in &opt.moments {
            put_u64(w, m.m.len() as u64)?;
            for v in &m.m {
                put_f64(w, *v)?;
            }
            for v in &m.v {
                put_f64(w, *v)?;
            }
        }

        w.write_all(&self.rng.seed)?;
        w.write_all(&self.rng.word_pos.to_le_bytes())?;
        put_u64(w, self.rng.stream)?;
        put_u32(w, self.epoch)?;
        w.write_all(&self.config_hash)?;
        Ok(())
    }

    fn decode<R: Read>(mut r: R) -> Result<Checkpoint, TrainError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(TrainError::Parse("bad checkpoint magic".into()));
        }
        let version = get_u32(&mut r)?;
        if version != VERSION {
            return Err(TrainError::Parse(format!(
                "unsupported checkpoint version {version}"
            )));
        }

        let obs_width = get_u32(&mut r)? as usize;
        let backbone_width = get_u32(&mut r)? as usize;
        let rotatable_width = get_u32(&mut r)? as usize;
        let blocks = get_u32(&mut r)? as usize;
        let alpha = get_f64(&mut r)?;
        let variant = variant_from_tag(get_u8(&mut r)?)?;
        let sequential_block_update = get_u8(&mut r)? != 0;
        let model_config = ModelConfig {
            obs_width,
            backbone_width,
            rotatable_width,
            blocks,
            alpha,
            variant,
            sequential_block_update,
        };

        // Rebuild the parameter skeleton from the config, then overwrite the
        // tensor contents; shapes double-checked against the stream.
        let mut params = FusionModelParams::init(&model_config, 0)
            .map_err(|e| TrainError::Parse(format!("checkpoint config invalid: {e}")))?;
        let n_tensors = get_u32(&mut r)? as usize;
        {
            let mut tensors = Vec::new();
            params.visit_tensors_mut(&mut tensors);
            if tensors.len() != n_tensors {
                return Err(TrainError::Parse(format!(
                    "checkpoint has {n_tensors} tensors, model expects {}",
                    tensors.len()
                )));
            }
            for t in tensors {
                let rows = get_u32(&mut r)? as usize;
                let cols = get_u32(&mut r)? as usize;
                if (rows, cols) != t.shape() {
                    return Err(TrainError::Parse(format!(
                        "tensor shape {rows}x{cols} does not match expected {:?}",
                        t.shape()
                    )));
                }
                for v in t.data_mut() {
                    *v = get_f64(&mut r)?;
                }
            }
        }

        let config = AdamConfig {
            beta1: get_f64(&mut r)?,
            beta2: get_f64(&mut r)?,
            epsilon: get_f64(&mut r)?,
            weight_decay: get_f64(&mut r)?,
        };
        let schedule = CyclicLrSchedule {
            base_lr: get_f64(&mut r)?,
            max_lr: get_f64(&mut r)?,
            steps_per_cycle: get_u64(&mut r)? as usize,
            decay: get_f64(&mut r)?,
        };
        let step = get_u64(&mut r)?;
        let n_moments = get_u32(&mut r)? as usize;
        let mut moments = Vec::with_capacity(n_moments);
        for _ in 0..n_moments {
            let len = get_u64(&mut r)? as usize;
            let mut m = vec![0.0; len];
            let mut v = vec![0.0; len];
            for x in &mut m {
                *x = get_f64(&mut r)?;
            }
            for x in &mut v {
                *x = get_f64(&mut r)?;
            }
            moments.push(MomentPair { m, v });
        }
        let optimizer = AdamState {
            config,
            schedule,
            step,
            moments,
        };

        let mut seed = [0u8; 32];
        r.read_exact(&mut seed)?;
        let mut word_pos = [0u8; 16];
        r.read_exact(&mut word_pos)?;
        let stream = get_u64(&mut r)?;
        let epoch = get_u32(&mut r)?;
        let mut config_hash = [0u8; 32];
        r.read_exact(&mut config_hash)?;

        Ok(Checkpoint {
            model_config,
            params,
            optimizer,
            rng: RngState {
                seed,
                word_pos: u128::from_le_bytes(word_pos),
                stream,
            },
            epoch,
            config_hash,
        })
    }
}

fn variant_tag(v: Variant) -> u8 {
    match v {
        Variant::Proposed => 0,
        Variant::Concat => 1,
        Variant::MlpEncoding => 2,
        Variant::NoRotation => 3,
        Variant::NoBackbone => 4,
    }
}

fn variant_from_tag(tag: u8) -> Result<Variant, TrainError> {
    Ok(match tag {
        0 => Variant::Proposed,
        1 => Variant::Concat,
        2 => Variant::MlpEncoding,
        3 => Variant::NoRotation,
        4 => Variant::NoBackbone,
        other => return Err(TrainError::Parse(format!("unknown variant tag {other}"))),
    })
}

fn put_u8<W: Write>(w: &mut W, v: u8) -> std::io::Result<()> {
    w.write_all(&[v])
}
fn put_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
fn put_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
fn put_f64<W: Write>(w: &mut W, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
fn get_u8<R: Read>(r: &mut R) -> std::io::Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}
fn get_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
fn get_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
fn get_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
