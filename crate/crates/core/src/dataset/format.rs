//! Record files and dataset directories.
//!
//! A record file is a 64-byte little-endian header
//!
//! | offset | type      | field                                  |
//! |--------|-----------|----------------------------------------|
//! | 0      | `[u8; 4]` | magic `MDF1`                           |
//! | 4      | `u32` ×3  | W, H, K                                |
//! | 16     | `u64`     | record seed                            |
//! | 24     | `f32` ×4  | Lx, Ly, Lz, T60 (NaN = unknown)        |
//! | 40     | `f32` ×3  | source x, y, z                         |
//! | 52     | `f32`     | measurement plane z̄                    |
//! | 56     | `f32`     | speed of sound (0 = 343 m/s)           |
//! | 60     | `u32`     | reserved, 0                            |
//!
//! followed by `W·H·K` interleaved `(re, im)` `f32` pairs (w outer, h middle,
//! k inner) and `W·H` mask bytes.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{generate_record, record_id, sample_mask, Dataset, GenConfig, MicMask, SampleRecord};
use crate::error::{Error, Result};
use crate::field::FieldGrid;
use crate::modal::{RoomSpec, DEFAULT_SPEED_OF_SOUND};
use crate::seed::rng_from_seed;
use crate::Exec;

pub const MAGIC: &[u8; 4] = b"MDF1";
pub const HEADER_LEN: usize = 64;
pub const FORMAT_VERSION: u32 = 1;
const META_FILE: &str = "meta.json";
const RECORD_EXT: &str = "mdf";
const WRITE_BATCH: usize = 32;

pub fn write_record(record: &SampleRecord) -> Vec<u8> {
    let (w, h, k) = record.field.shape();
    let room = &record.room;
    let mut out = Vec::with_capacity(HEADER_LEN + w * h * (8 * k + 1));
    out.extend_from_slice(MAGIC);
    for v in [w, h, k] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&record.seed.to_le_bytes());
    let floats = [
        room.lx,
        room.ly,
        room.lz,
        room.t60,
        room.source[0],
        room.source[1],
        room.source[2],
        room.z_plane,
        room.speed_of_sound,
    ];
    for v in floats {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.extend_from_slice(&0u32.to_le_bytes());
    debug_assert_eq!(out.len(), HEADER_LEN);
    for z in record.field.data() {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    out.extend_from_slice(record.mask.bytes());
    out
}

pub fn write_record_file(path: &Path, record: &SampleRecord) -> Result<()> {
    fs::write(path, write_record(record)).map_err(|e| Error::io(path, e))
}

struct Header {
    w: usize,
    h: usize,
    k: usize,
    seed: u64,
    room: RoomSpec,
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn le_f32(b: &[u8], at: usize) -> f64 {
    f64::from(f32::from_le_bytes(
        b[at..at + 4].try_into().expect("4 bytes"),
    ))
}

fn parse_header(bytes: &[u8], allow_unknown_t60: bool) -> Result<Header> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
    }
    let (w, h, k) = (
        le_u32(bytes, 4) as usize,
        le_u32(bytes, 8) as usize,
        le_u32(bytes, 12) as usize,
    );
    if w < 2 || h < 2 || k == 0 {
        return Err(Error::Format(format!(
            "invalid dimensions W={w} H={h} K={k}"
        )));
    }
    let seed = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let f: Vec<f64> = (0..9).map(|i| le_f32(bytes, 24 + 4 * i)).collect();
    const NAMES: [&str; 9] = [
        "Lx",
        "Ly",
        "Lz",
        "T60",
        "source x",
        "source y",
        "source z",
        "z plane",
        "speed of sound",
    ];
    for (i, v) in f.iter().enumerate() {
        if !v.is_finite() && !(i == 3 && allow_unknown_t60 && v.is_nan()) {
            return Err(Error::Format(format!(
                "header field {} is not finite ({v})",
                NAMES[i]
            )));
        }
    }
    let room = RoomSpec {
        lx: f[0],
        ly: f[1],
        lz: f[2],
        t60: f[3],
        source: [f[4], f[5], f[6]],
        z_plane: f[7],
        grid_w: w,
        grid_h: h,
        speed_of_sound: if f[8] > 0.0 {
            f[8]
        } else {
            DEFAULT_SPEED_OF_SOUND
        },
    };
    if allow_unknown_t60 {
        room.validate_geometry()?;
    } else {
        room.validate()?;
    }
    Ok(Header {
        w,
        h,
        k,
        seed,
        room,
    })
}

fn parse_body(bytes: &[u8], header: &Header, freqs: &[f64]) -> Result<(FieldGrid, Vec<u8>)> {
    let (w, h, k) = (header.w, header.h, header.k);
    if freqs.len() != k {
        return Err(Error::shape(
            format!("K = {} frequencies", freqs.len()),
            format!("K = {k} in header"),
        ));
    }
    let payload = w * h * k * 8;
    let expected = HEADER_LEN + payload + w * h;
    if bytes.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            found: bytes.len(),
        });
    }
    let body = &bytes[HEADER_LEN..HEADER_LEN + payload];
    let data: Vec<Complex64> = body
        .chunks_exact(8)
        .map(|c| Complex64::new(le_f32(c, 0), le_f32(c, 4)))
        .collect();
    // FieldGrid::from_data names the first non-finite entry.
    let field = FieldGrid::from_data(w, h, freqs.to_vec(), data)?;
    Ok((field, bytes[HEADER_LEN + payload..].to_vec()))
}

/// Parses a simulated record; `freqs` comes from the dataset's `meta.json`.
pub fn read_record(bytes: &[u8], freqs: &[f64]) -> Result<SampleRecord> {
    let header = parse_header(bytes, false)?;
    let (field, mask) = parse_body(bytes, &header, freqs)?;
    let mask = MicMask::from_mask(header.w, header.h, mask)?;
    Ok(SampleRecord {
        room: header.room,
        field,
        mask,
        seed: header.seed,
    })
}

pub fn read_record_file(path: &Path, freqs: &[f64]) -> Result<SampleRecord> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut record = read_record(&bytes, freqs).map_err(|e| with_path(path, e))?;
    record.field.room_id = file_stem(path);
    Ok(record)
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Io { .. } => e,
        other => Error::Other(format!("{}: {other}", path.display())),
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// How the mask of an imported measurement is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskRequest {
    /// Use the mask bytes stored in the file.
    FromFile,
    /// Draw `m` microphones with the given seed.
    Random { m: usize, seed: u64 },
}

/// Interpretation of a measured-grid file: its frequency axis and the mask to apply.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredLayout {
    pub freqs: Vec<f64>,
    pub mask: MaskRequest,
}

/// Reads an externally measured grid stored in the record format. T60 may be
/// NaN (unknown); all field values must be finite.
pub fn import_measured_grid(path: &Path, layout: &MeasuredLayout) -> Result<SampleRecord> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = parse_header(&bytes, true).map_err(|e| with_path(path, e))?;
    let (field, stored_mask) =
        parse_body(&bytes, &header, &layout.freqs).map_err(|e| with_path(path, e))?;
    let (mask, seed) = match layout.mask {
        MaskRequest::FromFile => (
            MicMask::from_mask(header.w, header.h, stored_mask)?,
            header.seed,
        ),
        MaskRequest::Random { m, seed } => (
            sample_mask(&mut rng_from_seed(seed), m, header.w, header.h)?,
            seed,
        ),
    };
    Ok(SampleRecord {
        room: header.room,
        field: field.with_room_id(file_stem(path)),
        mask,
        seed,
    })
}

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub config: GenConfig,
    pub freqs: Vec<f64>,
    pub n_train: usize,
    pub n_validation: usize,
    pub records: Vec<String>,
}

/// Generates `config` straight to `dir`, a batch of rooms at a time.
///
/// Refuses to touch a nonempty directory unless `force` is set.
pub fn write_dataset(
    dir: &Path,
    config: &GenConfig,
    force: bool,
    exec: Exec,
) -> Result<DatasetMeta> {
    config.validate()?;
    prepare_dir(dir, force)?;
    let mut names = Vec::with_capacity(config.n_rooms);
    for start in (0..config.n_rooms).step_by(WRITE_BATCH) {
        let end = (start + WRITE_BATCH).min(config.n_rooms);
        let batch = exec.try_map(end - start, |j| {
            generate_record(config, start + j, Exec::Sequential)
        })?;
        for (j, record) in batch.iter().enumerate() {
            let name = format!("{}.{RECORD_EXT}", record_id(start + j));
            write_record_file(&dir.join(&name), record)?;
            names.push(name);
        }
    }
    let meta = DatasetMeta {
        format_version: FORMAT_VERSION,
        config: config.clone(),
        freqs: config.freqs()?,
        n_train: config.n_train(),
        n_validation: config.n_rooms - config.n_train(),
        records: names,
    };
    let path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(meta)
}

fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let nonempty = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .next()
            .is_some();
        if nonempty && !force {
            return Err(Error::InvalidArgument(format!(
                "{} already exists and is not empty (use --force to overwrite)",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn read_meta(dir: &Path) -> Result<DatasetMeta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: DatasetMeta = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported format version {}",
            path.display(),
            meta.format_version
        )));
    }
    Ok(meta)
}

/// Loads a dataset directory written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let meta = read_meta(dir)?;
    let records = meta
        .records
        .iter()
        .map(|name| read_record_file(&dir.join(name), &meta.freqs))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        config: meta.config,
        freqs: meta.freqs,
        records,
        n_train: meta.n_train,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> GenConfig {
        GenConfig {
            n_rooms: 3,
            k: 4,
            grid_w: 4,
            grid_h: 5,
            mic_choices: vec![3],
            seed: 17,
            ..GenConfig::default()
        }
    }

    #[test]
    fn header_is_sixty_four_bytes() {
        let r = generate_record(&tiny_config(), 0, Exec::Sequential).unwrap();
        let bytes = write_record(&r);
        assert_eq!(bytes.len(), HEADER_LEN + 4 * 5 * 4 * 8 + 20);
        assert_eq!(&bytes[..4], b"MDF1");
        assert_eq!(le_u32(&bytes, 4), 4);
        assert_eq!(le_u32(&bytes, 8), 5);
        assert_eq!(le_u32(&bytes, 12), 4);
    }

    #[test]
    fn record_round_trip_is_exact_after_quantization() {
        let cfg = tiny_config();
        let r = generate_record(&cfg, 1, Exec::Sequential).unwrap();
        let bytes = write_record(&r);
        let back = read_record(&bytes, &cfg.freqs().unwrap()).unwrap();
        assert_eq!(write_record(&back), bytes);
        assert_eq!(back.mask, r.mask);
        assert_eq!(back.seed, r.seed);
        for (a, b) in back.field.data().iter().zip(r.field.data()) {
            assert_eq!(a.re, b.re as f32 as f64);
            assert_eq!(a.im, b.im as f32 as f64);
        }
    }

    #[test]
    fn truncated_payload_is_a_length_error() {
        let cfg = tiny_config();
        let bytes = write_record(&generate_record(&cfg, 0, Exec::Sequential).unwrap());
        let err = read_record(&bytes[..bytes.len() - 9], &cfg.freqs().unwrap()).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { .. }), "{err}");
        assert!(read_record(&bytes[..30], &cfg.freqs().unwrap()).is_err());
    }

    #[test]
    fn nan_in_payload_names_the_index() {
        let cfg = tiny_config();
        let mut bytes = write_record(&generate_record(&cfg, 0, Exec::Sequential).unwrap());
        // (w=2, h=3, k=1), imaginary part
        let at = HEADER_LEN + ((2 * 5 + 3) * 4 + 1) * 8 + 4;
        bytes[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        let err = read_record(&bytes, &cfg.freqs().unwrap()).unwrap_err();
        assert!(
            matches!(err, Error::NonFinite { w: 2, h: 3, k: 1 }),
            "{err}"
        );
    }

    #[test]
    fn measured_import_allows_unknown_t60() {
        let cfg = tiny_config();
        let mut r = generate_record(&cfg, 0, Exec::Sequential).unwrap();
        r.room.t60 = f64::NAN;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("measured.mdf");
        write_record_file(&path, &r).unwrap();
        assert!(read_record_file(&path, &cfg.freqs().unwrap()).is_err());
        let layout = MeasuredLayout {
            freqs: cfg.freqs().unwrap(),
            mask: MaskRequest::Random { m: 7, seed: 3 },
        };
        let imported = import_measured_grid(&path, &layout).unwrap();
        assert!(imported.room.t60.is_nan());
        assert_eq!(imported.mask.m(), 7);
        assert_eq!(imported.field.room_id, "measured");

        let wrong_k = MeasuredLayout {
            freqs: vec![50.0, 60.0],
            mask: MaskRequest::FromFile,
        };
        assert!(import_measured_grid(&path, &wrong_k).is_err());
    }

    #[test]
    fn dataset_directory_round_trip() {
        let cfg = tiny_config();
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("ds");
        let meta = write_dataset(&root, &cfg, false, Exec::Parallel).unwrap();
        assert_eq!(meta.records.len(), 3);
        assert_eq!((meta.n_train, meta.n_validation), (2, 1));
        let ds = read_dataset(&root).unwrap();
        assert_eq!(ds.records.len(), 3);
        assert_eq!(ds.records[2].field.room_id, "room_00002");
        assert!(write_dataset(&root, &cfg, false, Exec::Parallel).is_err());
        write_dataset(&root, &cfg, true, Exec::Sequential).unwrap();
    }
}
