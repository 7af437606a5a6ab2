//! Checkpoint files.
//!
//! Layout: the 8-byte magic `RTFCKPT\0`, a little-endian `u32` version, a
//! little-endian `u64` header length, a JSON header, then the tensor payloads
//! back to back in header order. Parameters and optimizer moments are `c32`
//! (interleaved little-endian f32 pairs); normalization statistics are `f64`.
//! Tensor names carry a group prefix: `model/`, `best/`, `adam.m/`, `adam.v/`.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamConfig};
use crate::error::{NetError, Result};
use crate::train::{EpochStats, StopReason, TrainConfig, Trainer};
use crate::unet::{UNet, UNetSpec};

pub const MAGIC: &[u8; 8] = b"RTFCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Dtype {
    C32,
    F64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: Dtype,
}

impl TensorEntry {
    fn byte_len(&self) -> usize {
        // one c32 pair and one f64 are both 8 bytes
        8 * self.shape.iter().product::<usize>()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RngState {
    seed: String,
    stream: u64,
    word_pos: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainerMeta {
    config: TrainConfig,
    epoch: usize,
    best_val_bits: u64,
    best_epoch: usize,
    wait: usize,
    history: Vec<EpochStats>,
    stop: Option<StopReason>,
    adam: AdamConfig,
    adam_t: u64,
    rng: RngState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    spec: UNetSpec,
    tensors: Vec<TensorEntry>,
    trainer: Option<TrainerMeta>,
}

#[derive(Default)]
struct Writer {
    entries: Vec<TensorEntry>,
    payload: Vec<u8>,
}

impl Writer {
    fn c32(&mut self, name: String, shape: Vec<usize>, values: &[Complex<f32>]) {
        for z in values {
            self.payload.extend_from_slice(&z.re.to_le_bytes());
            self.payload.extend_from_slice(&z.im.to_le_bytes());
        }
        self.entries.push(TensorEntry { name, shape, dtype: Dtype::C32 });
    }

    fn f64(&mut self, name: String, shape: Vec<usize>, values: impl Iterator<Item = f64>) {
        for v in values {
            self.payload.extend_from_slice(&v.to_le_bytes());
        }
        self.entries.push(TensorEntry { name, shape, dtype: Dtype::F64 });
    }

    fn model(&mut self, group: &str, model: &UNet<f32>) {
        for p in model.params() {
            self.c32(format!("{group}/{}", p.name), p.shape.clone(), &p.value);
        }
        for bn in model.batch_norms() {
            let name = bn_name(&bn.beta.name);
            let c = bn.channels();
            self.f64(
                format!("{group}/{name}.running_mean"),
                vec![c, 2],
                bn.running_mean.iter().flat_map(|z| [z.re, z.im]),
            );
            self.f64(
                format!("{group}/{name}.running_cov"),
                vec![c, 3],
                bn.running_cov.iter().flatten().copied(),
            );
        }
    }
}

fn bn_name(beta: &str) -> &str {
    beta.strip_suffix(".beta").unwrap_or(beta)
}

fn encode(spec: &UNetSpec, w: Writer, trainer: Option<TrainerMeta>) -> Result<Vec<u8>> {
    let header = Header {
        spec: spec.clone(),
        tensors: w.entries,
        trainer,
    };
    let json = serde_json::to_vec(&header).map_err(|e| NetError::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(20 + json.len() + w.payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&w.payload);
    Ok(out)
}

pub fn model_to_bytes(model: &UNet<f32>) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.model("model", model);
    encode(&model.spec, w, None)
}

pub fn trainer_to_bytes(t: &Trainer<f32>) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.model("model", &t.model);
    w.model("best", &t.best);
    if !t.adam.m.is_empty() {
        for (i, p) in t.model.params().iter().enumerate() {
            w.c32(format!("adam.m/{}", p.name), p.shape.clone(), &t.adam.m[i]);
            w.c32(format!("adam.v/{}", p.name), p.shape.clone(), &t.adam.v[i]);
        }
    }
    let seed: String = t.rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
    let meta = TrainerMeta {
        config: t.config.clone(),
        epoch: t.epoch,
        best_val_bits: t.best_val.to_bits(),
        best_epoch: t.best_epoch,
        wait: t.wait,
        history: t.history.clone(),
        stop: t.stop,
        adam: t.adam.config,
        adam_t: t.adam.t,
        rng: RngState {
            seed,
            stream: t.rng.get_stream(),
            word_pos: t.rng.get_word_pos().to_string(),
        },
    };
    encode(&t.model.spec, w, Some(meta))
}

struct Reader<'a> {
    tensors: HashMap<String, (&'a TensorEntry, &'a [u8])>,
}

impl<'a> Reader<'a> {
    fn get(&self, name: &str, shape: &[usize], dtype: Dtype) -> Result<&'a [u8]> {
        let (e, bytes) = self
            .tensors
            .get(name)
            .ok_or_else(|| NetError::Checkpoint(format!("missing tensor {name}")))?;
        if e.shape != shape || e.dtype != dtype {
            return Err(NetError::Checkpoint(format!(
                "tensor {name} is {:?} {:?}, expected {:?} {:?}",
                e.dtype, e.shape, dtype, shape
            )));
        }
        Ok(bytes)
    }

    fn c32(&self, name: &str, shape: &[usize]) -> Result<Vec<Complex<f32>>> {
        let b = self.get(name, shape, Dtype::C32)?;
        Ok(b.chunks_exact(8)
            .map(|c| {
                Complex::new(
                    f32::from_le_bytes(c[..4].try_into().unwrap()),
                    f32::from_le_bytes(c[4..].try_into().unwrap()),
                )
            })
            .collect())
    }

    fn f64(&self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let b = self.get(name, shape, Dtype::F64)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn model(&self, group: &str, spec: &UNetSpec) -> Result<UNet<f32>> {
        let mut model = UNet::new(spec.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
        for p in model.params_mut() {
            p.value = self.c32(&format!("{group}/{}", p.name), &p.shape)?;
        }
        for bn in model.batch_norms_mut() {
            let name = bn_name(&bn.beta.name).to_string();
            let c = bn.channels();
            let mean = self.f64(&format!("{group}/{name}.running_mean"), &[c, 2])?;
            let cov = self.f64(&format!("{group}/{name}.running_cov"), &[c, 3])?;
            bn.running_mean = mean.chunks_exact(2).map(|z| Complex::new(z[0], z[1])).collect();
            bn.running_cov = cov.chunks_exact(3).map(|s| [s[0], s[1], s[2]]).collect();
        }
        Ok(model)
    }
}

fn decode(bytes: &[u8]) -> Result<(Header, &[u8])> {
    let bad = |m: &str| NetError::Checkpoint(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(NetError::Checkpoint(format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[20..];
    if body.len() < len {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..len]).map_err(|e| NetError::Checkpoint(e.to_string()))?;
    header.spec.validate()?;
    Ok((header, &body[len..]))
}

fn with_reader<R>(bytes: &[u8], f: impl FnOnce(&Header, &Reader<'_>) -> Result<R>) -> Result<R> {
    let (header, payload) = decode(bytes)?;
    let mut tensors = HashMap::new();
    let mut offset = 0;
    for e in &header.tensors {
        let end = offset + e.byte_len();
        let data = payload
            .get(offset..end)
            .ok_or_else(|| NetError::Checkpoint(format!("payload truncated at {}", e.name)))?;
        tensors.insert(e.name.clone(), (e, data));
        offset = end;
    }
    if offset != payload.len() {
        return Err(NetError::Checkpoint(format!(
            "{} trailing payload bytes",
            payload.len() - offset
        )));
    }
    f(&header, &Reader { tensors })
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<UNet<f32>> {
    with_reader(bytes, |h, r| r.model("model", &h.spec))
}

pub fn trainer_from_bytes(bytes: &[u8]) -> Result<Trainer<f32>> {
    with_reader(bytes, |h, r| {
        let meta = h
            .trainer
            .as_ref()
            .ok_or_else(|| NetError::Checkpoint("no training state in checkpoint".into()))?;
        let model = r.model("model", &h.spec)?;
        let best = r.model("best", &h.spec)?;
        let mut adam = Adam::new(meta.adam);
        adam.t = meta.adam_t;
        if meta.adam_t > 0 {
            for p in model.params() {
                adam.m.push(r.c32(&format!("adam.m/{}", p.name), &p.shape)?);
                adam.v.push(r.c32(&format!("adam.v/{}", p.name), &p.shape)?);
            }
        }
        let seed_bytes: Vec<u8> = (0..meta.rng.seed.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(meta.rng.seed.get(i..i + 2).unwrap_or("zz"), 16))
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| NetError::Checkpoint("bad rng seed".into()))?;
        let seed: [u8; 32] = seed_bytes
            .try_into()
            .map_err(|_| NetError::Checkpoint("rng seed must be 32 bytes".into()))?;
        let word_pos: u128 = meta
            .rng
            .word_pos
            .parse()
            .map_err(|_| NetError::Checkpoint("bad rng position".into()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(meta.rng.stream);
        rng.set_word_pos(word_pos);
        meta.config.validate()?;
        Ok(Trainer {
            model,
            best,
            adam,
            rng,
            config: meta.config.clone(),
            epoch: meta.epoch,
            best_val: f64::from_bits(meta.best_val_bits),
            best_epoch: meta.best_epoch,
            wait: meta.wait,
            history: meta.history.clone(),
            stop: meta.stop,
        })
    })
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| NetError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| NetError::io(&tmp, e))?;
    f.sync_all().map_err(|e| NetError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| NetError::io(path, e))
}

pub fn save_model(path: &Path, model: &UNet<f32>) -> Result<()> {
    write_atomic(path, &model_to_bytes(model)?)
}

pub fn save_trainer(path: &Path, trainer: &Trainer<f32>) -> Result<()> {
    write_atomic(path, &trainer_to_bytes(trainer)?)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| NetError::io(path, e))
}

/// Loads the network from either kind of checkpoint.
pub fn load_model(path: &Path) -> Result<UNet<f32>> {
    model_from_bytes(&read(path)?)
}

pub fn load_trainer(path: &Path) -> Result<Trainer<f32>> {
    trainer_from_bytes(&read(path)?)
}
