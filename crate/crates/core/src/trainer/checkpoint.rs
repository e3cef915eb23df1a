//! Binary checkpoint format.
//!
//! Little-endian throughout:
//!
//! ```text
//! "MFNF"  u32 version
//! encoding config, train config
//! u64 step, rng (32-byte seed, u64 stream, u128 word position)
//! u32 table count, per table: u64 length, f32 values (entry-major)
//! u32 layer count, per layer: u32 inputs, u32 outputs, u8 bias
//! u64 length, f32 network parameters (layer-major, weights input-major)
//! per table: moments m then v; network moments m then v (u64 length each)
//! u32 CRC32 of everything above
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{AdamConfig, Moments};
use super::{TaskKind, TrainConfig, TrainState};
use crate::encoding::FeatureTableBank;
use crate::error::{Error, Result};
use crate::grid::EncodingConfig;
use crate::renderer::mlp::MlpParameters;
use crate::scene::camera::SceneTransform;
use crate::scene::dataset::Background;

pub const MAGIC: &[u8; 4] = b"MFNF";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usizes(&mut self, v: &[usize]) {
        self.u32(v.len() as u32);
        for &x in v {
            self.u64(x as u64);
        }
    }
    fn f32s(&mut self, v: &[f32]) {
        self.u64(v.len() as u64);
        self.0.reserve(v.len() * 4);
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::CorruptFile("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::CorruptFile("size overflow".into()))
    }
    fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.usize()).collect()
    }
    fn f32s(&mut self, expected: usize) -> Result<Vec<f32>> {
        let n = self.usize()?;
        if n != expected {
            return Err(Error::CorruptFile(format!("array of {n} values where {expected} expected")));
        }
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::CorruptFile("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn write_encoding(w: &mut Writer, e: &EncodingConfig) {
    w.u32(e.levels as u32);
    w.u32(e.tables as u32);
    w.u64(e.table_size);
    w.u32(e.features as u32);
    w.u32(e.min_resolution);
    w.u32(e.max_resolution);
    w.u32(e.dims as u32);
}

fn read_encoding(r: &mut Reader<'_>) -> Result<EncodingConfig> {
    let e = EncodingConfig {
        levels: r.u32()? as usize,
        tables: r.u32()? as usize,
        table_size: r.u64()?,
        features: r.u32()? as usize,
        min_resolution: r.u32()?,
        max_resolution: r.u32()?,
        dims: r.u32()? as usize,
    };
    e.validate().map_err(|err| Error::CorruptFile(format!("stored encoding config: {err}")))?;
    Ok(e)
}

fn write_train(w: &mut Writer, c: &TrainConfig) {
    w.u8(match c.task {
        TaskKind::Rays => 0,
        TaskKind::Image => 1,
    });
    w.u64(c.batch_size as u64);
    w.u64(c.total_steps);
    w.f64(c.lr_init);
    w.f64(c.lr_final);
    w.u64(c.seed);
    w.u64(c.samples_per_ray as u64);
    w.f64(c.adam.beta1);
    w.f64(c.adam.beta2);
    w.f64(c.adam.eps);
    w.u8(match c.background {
        Background::White => 0,
        Background::Black => 1,
    });
    w.f64(c.near);
    w.f64(c.far);
    w.f64(c.transform.scale);
    for o in c.transform.offset {
        w.f64(o);
    }
    w.u32(c.image_size.0);
    w.u32(c.image_size.1);
    w.usizes(&c.density_hidden);
    w.u64(c.feature_dim as u64);
    w.usizes(&c.color_hidden);
    w.u64(c.log_every);
}

fn read_train(r: &mut Reader<'_>) -> Result<TrainConfig> {
    let task = match r.u8()? {
        0 => TaskKind::Rays,
        1 => TaskKind::Image,
        t => return Err(Error::CorruptFile(format!("unknown task tag {t}"))),
    };
    let c = TrainConfig {
        task,
        batch_size: r.usize()?,
        total_steps: r.u64()?,
        lr_init: r.f64()?,
        lr_final: r.f64()?,
        seed: r.u64()?,
        samples_per_ray: r.usize()?,
        adam: AdamConfig {
            beta1: r.f64()?,
            beta2: r.f64()?,
            eps: r.f64()?,
        },
        background: match r.u8()? {
            0 => Background::White,
            1 => Background::Black,
            b => return Err(Error::CorruptFile(format!("unknown background tag {b}"))),
        },
        near: r.f64()?,
        far: r.f64()?,
        transform: SceneTransform {
            scale: r.f64()?,
            offset: [r.f64()?, r.f64()?, r.f64()?],
        },
        image_size: (r.u32()?, r.u32()?),
        density_hidden: r.usizes()?,
        feature_dim: r.usize()?,
        color_hidden: r.usizes()?,
        log_every: r.u64()?,
    };
    c.validate().map_err(|err| Error::CorruptFile(format!("stored train config: {err}")))?;
    Ok(c)
}

pub fn checkpoint_bytes(state: &TrainState<f32>) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    write_encoding(&mut w, &state.encoding);
    write_train(&mut w, &state.config);
    w.u64(state.step);
    w.0.extend_from_slice(&state.rng.get_seed());
    w.u64(state.rng.get_stream());
    w.u128(state.rng.get_word_pos());
    w.u32(state.bank.tables.len() as u32);
    for t in &state.bank.tables {
        w.f32s(t);
    }
    let layers = state.mlp.layers();
    w.u32(layers.len() as u32);
    for l in layers {
        w.u32(l.inputs as u32);
        w.u32(l.outputs as u32);
        w.u8(l.bias as u8);
    }
    w.f32s(&state.mlp.params);
    for m in &state.table_moments {
        w.f32s(&m.m);
        w.f32s(&m.v);
    }
    w.f32s(&state.mlp_moments.m);
    w.f32s(&state.mlp_moments.v);
    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

/// Writes the checkpoint atomically (temporary file, then rename).
pub fn save_checkpoint(state: &TrainState<f32>, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(state);
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<TrainState<f32>> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::CorruptFile("bad magic".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::CorruptFile(format!("unsupported version {version}")));
    }
    if crc32fast::hash(body) != u32::from_le_bytes(trailer.try_into().unwrap()) {
        return Err(Error::CorruptFile("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 8 };
    let encoding = read_encoding(&mut r)?;
    let config = read_train(&mut r)?;
    let step = r.u64()?;
    let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(r.u64()?);
    rng.set_word_pos(r.u128()?);

    let mut bank = FeatureTableBank::<f32>::zeros(&encoding)?;
    let n_tables = r.u32()? as usize;
    if n_tables != bank.tables.len() {
        return Err(Error::CorruptFile(format!("{n_tables} tables stored, config implies {}", bank.tables.len())));
    }
    for t in bank.tables.iter_mut() {
        *t = r.f32s(t.len())?;
    }
    let mlp_config = config.mlp_config(&encoding);
    let n_layers = r.u32()? as usize;
    let mut shapes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        shapes.push((r.u32()? as usize, r.u32()? as usize, r.u8()? != 0));
    }
    let template = MlpParameters::<f32>::zeros(mlp_config.clone())?;
    let expected: Vec<_> = template.layers().iter().map(|l| (l.inputs, l.outputs, l.bias)).collect();
    if shapes != expected {
        return Err(Error::CorruptFile("network layer shapes do not match the stored config".into()));
    }
    let params = r.f32s(template.len())?;
    let mlp = MlpParameters::from_parts(mlp_config, params)?;
    let mut table_moments = Vec::with_capacity(bank.tables.len());
    for t in &bank.tables {
        let m = r.f32s(t.len())?;
        let v = r.f32s(t.len())?;
        table_moments.push(Moments { m, v });
    }
    let mlp_moments = Moments {
        m: r.f32s(mlp.len())?,
        v: r.f32s(mlp.len())?,
    };
    if r.pos != body.len() {
        return Err(Error::CorruptFile("trailing data".into()));
    }
    Ok(TrainState {
        encoding,
        config,
        bank,
        mlp,
        table_moments,
        mlp_moments,
        step,
        rng,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState<f32>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    checkpoint_from_bytes(&std::fs::read(path)?)
}

/// Loads a checkpoint and checks its encoding against `expected`, naming the
/// first field that differs.
pub fn load_checkpoint_expecting(path: &Path, expected: &EncodingConfig) -> Result<TrainState<f32>> {
    let state = load_checkpoint(path)?;
    let e = &state.encoding;
    let fields: [(&'static str, u64, u64); 7] = [
        ("L", e.levels as u64, expected.levels as u64),
        ("N", e.tables as u64, expected.tables as u64),
        ("T", e.table_size, expected.table_size),
        ("F", e.features as u64, expected.features as u64),
        ("N_min", e.min_resolution as u64, expected.min_resolution as u64),
        ("N_max", e.max_resolution as u64, expected.max_resolution as u64),
        ("dims", e.dims as u64, expected.dims as u64),
    ];
    for (field, found, want) in fields {
        if found != want {
            return Err(Error::IncompatibleConfig {
                field,
                found: found.to_string(),
                expected: want.to_string(),
            });
        }
    }
    Ok(state)
}
