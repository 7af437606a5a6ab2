//! Room sampling, microphone masks, masked network inputs and dataset generation.

mod format;

pub use format::{
    import_measured_grid, read_dataset, read_meta, read_record, read_record_file, write_dataset,
    write_record, write_record_file, DatasetMeta, MaskRequest, MeasuredLayout, FORMAT_VERSION,
    HEADER_LEN, MAGIC,
};

use num_complex::Complex64;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{uniform_band, FieldGrid};
use crate::modal::{
    synthesize_field_with, Damping, RoomSpec, SimOptions, DEFAULT_F_CUTOFF, DEFAULT_GRID,
    DEFAULT_SPEED_OF_SOUND,
};
use crate::seed::{derive_seed, rng_from_seed};
use crate::Exec;

pub const T60_LEVELS: [f64; 7] = [0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6];
pub const MIC_COUNTS: [usize; 5] = [5, 10, 15, 35, 55];
pub const DEFAULT_K: usize = 40;
pub const DEFAULT_BAND: (f64, f64) = (30.0, 300.0);
pub const DEFAULT_SPLIT: f64 = 0.75;

const SOURCE_MARGIN: f64 = 0.1;
const REJECTION_BUDGET: usize = 100_000;

/// Binary observation mask over the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MicMask {
    width: usize,
    height: usize,
    mask: Vec<u8>,
    observed: Vec<(usize, usize)>,
}

impl MicMask {
    /// Builds a mask from observed grid indices (any order, no duplicates).
    pub fn from_observed(width: usize, height: usize, observed: &[(usize, usize)]) -> Result<Self> {
        let mut mask = vec![0u8; width * height];
        for &(w, h) in observed {
            if w >= width || h >= height {
                return Err(Error::InvalidArgument(format!(
                    "microphone ({w}, {h}) outside {width}x{height} grid"
                )));
            }
            let cell = &mut mask[w * height + h];
            if *cell == 1 {
                return Err(Error::InvalidArgument(format!(
                    "duplicate microphone ({w}, {h})"
                )));
            }
            *cell = 1;
        }
        Self::from_mask(width, height, mask)
    }

    /// Builds a mask from `W·H` bytes in grid order; any nonzero byte counts as observed.
    pub fn from_mask(width: usize, height: usize, mask: Vec<u8>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::shape(width * height, mask.len()));
        }
        let mask: Vec<u8> = mask.into_iter().map(|b| u8::from(b != 0)).collect();
        let observed = mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| (i / height, i % height))
            .collect();
        Ok(MicMask {
            width,
            height,
            mask,
            observed,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::from_mask(width, height, vec![1; width * height]).expect("consistent shape")
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::from_mask(width, height, vec![0; width * height]).expect("consistent shape")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of observed points.
    pub fn m(&self) -> usize {
        self.observed.len()
    }

    /// Observed `(w, h)` pairs in grid order.
    pub fn observed(&self) -> &[(usize, usize)] {
        &self.observed
    }

    pub fn bytes(&self) -> &[u8] {
        &self.mask
    }

    #[inline]
    pub fn is_observed(&self, w: usize, h: usize) -> bool {
        self.mask[w * self.height + h] == 1
    }
}

/// One dataset entry: room, ground-truth field and the mask drawn for it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub room: RoomSpec,
    pub field: FieldGrid,
    pub mask: MicMask,
    pub seed: u64,
}

impl SampleRecord {
    pub fn observation(&self) -> Result<Observation<'_>> {
        Observation::new(&self.room, &self.field, &self.mask)
    }

    /// The same room, source, mask and seed re-simulated at another T60.
    pub fn with_t60(&self, t60: f64, opts: &SimOptions) -> Result<SampleRecord> {
        let mut room = self.room.clone();
        room.t60 = t60;
        room.validate()?;
        let field = synthesize_field_with(&room, self.field.freqs(), opts)?
            .with_room_id(self.field.room_id.clone());
        Ok(SampleRecord {
            room,
            field,
            mask: self.mask.clone(),
            seed: self.seed,
        })
    }
}

/// What a reconstruction method is allowed to see: the geometry, the mask and
/// the zero-filled field.
#[derive(Debug, Clone)]
pub struct Observation<'a> {
    pub room: &'a RoomSpec,
    pub mask: &'a MicMask,
    pub masked: FieldGrid,
}

impl<'a> Observation<'a> {
    pub fn new(room: &'a RoomSpec, field: &FieldGrid, mask: &'a MicMask) -> Result<Self> {
        Ok(Observation {
            room,
            mask,
            masked: apply_mask(field, mask)?,
        })
    }
}

/// Parameters of the room distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomSampler {
    pub t60_choices: Vec<f64>,
    pub grid_w: usize,
    pub grid_h: usize,
    pub speed_of_sound: f64,
    pub height_range: (f64, f64),
    pub area_range: (f64, f64),
}

impl Default for RoomSampler {
    fn default() -> Self {
        RoomSampler {
            t60_choices: T60_LEVELS.to_vec(),
            grid_w: DEFAULT_GRID,
            grid_h: DEFAULT_GRID,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
            height_range: (2.3, 3.0),
            area_range: (20.0, 60.0),
        }
    }
}

/// Listening-room proportions: `Lx/Lz ≤ 4.5·Ly/Lz − 4`, `Lx/Lz < 3`, `Ly/Lz < 3`, `Lx ≥ Ly`.
pub fn satisfies_proportions(lx: f64, ly: f64, lz: f64) -> bool {
    let (rx, ry) = (lx / lz, ly / lz);
    lx >= ly && rx <= 4.5 * ry - 4.0 && rx < 3.0 && ry < 3.0
}

pub fn sample_room<R: Rng + ?Sized>(rng: &mut R) -> Result<RoomSpec> {
    sample_room_with(rng, &RoomSampler::default())
}

/// Rejection-samples height, floor area and aspect ratio until the proportion
/// rules hold, then draws T60, the source and sets the plane to `Lz / 2`.
pub fn sample_room_with<R: Rng + ?Sized>(rng: &mut R, sampler: &RoomSampler) -> Result<RoomSpec> {
    if sampler.t60_choices.is_empty() {
        return Err(Error::InvalidArgument("no T60 levels to draw from".into()));
    }
    let (h0, h1) = sampler.height_range;
    let (a0, a1) = sampler.area_range;
    for _ in 0..REJECTION_BUDGET {
        let lz = rng.random_range(h0..=h1);
        let area = rng.random_range(a0..=a1);
        let aspect = rng.random_range(1.0..3.0);
        let lx = (area * aspect).sqrt();
        let ly = area / lx;
        if !satisfies_proportions(lx, ly, lz) {
            continue;
        }
        let t60 = sampler.t60_choices[rng.random_range(0..sampler.t60_choices.len())];
        let source = [lx, ly, lz].map(|l| rng.random_range(SOURCE_MARGIN..=l - SOURCE_MARGIN));
        let mut room = RoomSpec::new(
            [lx, ly, lz],
            t60,
            source,
            lz / 2.0,
            sampler.grid_w,
            sampler.grid_h,
        )?;
        room.speed_of_sound = sampler.speed_of_sound;
        return Ok(room);
    }
    Err(Error::RejectionBudget(REJECTION_BUDGET))
}

/// `m` distinct grid points drawn uniformly without replacement.
pub fn sample_mask<R: Rng + ?Sized>(
    rng: &mut R,
    m: usize,
    width: usize,
    height: usize,
) -> Result<MicMask> {
    let n = width * height;
    if m > n {
        return Err(Error::InvalidArgument(format!(
            "cannot place {m} microphones on a {width}x{height} grid"
        )));
    }
    let mut mask = vec![0u8; n];
    for i in index::sample(rng, n, m) {
        mask[i] = 1;
    }
    MicMask::from_mask(width, height, mask)
}

/// Zero-fills every unobserved grid point.
pub fn apply_mask(field: &FieldGrid, mask: &MicMask) -> Result<FieldGrid> {
    check_mask_shape(field, mask)?;
    let nk = field.n_freqs();
    let mut out = field.clone();
    for (cell, values) in out.data_mut().chunks_mut(nk).enumerate() {
        if mask.bytes()[cell] == 0 {
            values.fill(Complex64::new(0.0, 0.0));
        }
    }
    Ok(out)
}

fn check_mask_shape(field: &FieldGrid, mask: &MicMask) -> Result<()> {
    if (field.width(), field.height()) != (mask.width(), mask.height()) {
        return Err(Error::shape(
            format!("{}x{} mask", field.width(), field.height()),
            format!("{}x{}", mask.width(), mask.height()),
        ));
    }
    Ok(())
}

/// Network input of shape `W × H × 2K`, channel-last with `w` outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedInput {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<Complex64>,
}

impl MaskedInput {
    #[inline]
    pub fn get(&self, w: usize, h: usize, c: usize) -> Complex64 {
        self.data[(w * self.height + h) * self.channels + c]
    }
}

/// Channels `0..K` carry the masked field, channels `K..2K` each carry the mask
/// as `1 + 0j` / `0 + 0j`.
pub fn build_input(field_masked: &FieldGrid, mask: &MicMask) -> Result<MaskedInput> {
    check_mask_shape(field_masked, mask)?;
    let nk = field_masked.n_freqs();
    let channels = 2 * nk;
    let cells = field_masked.width() * field_masked.height();
    let mut data = Vec::with_capacity(cells * channels);
    for (cell, values) in field_masked.data().chunks(nk).enumerate() {
        data.extend_from_slice(values);
        let m = f64::from(mask.bytes()[cell]);
        data.extend(std::iter::repeat_n(Complex64::new(m, 0.0), nk));
    }
    Ok(MaskedInput {
        width: field_masked.width(),
        height: field_masked.height(),
        channels,
        data,
    })
}

/// Dataset generation settings. Everything produced is a pure function of this struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_rooms: usize,
    pub split: f64,
    pub t60_choices: Vec<f64>,
    pub mic_choices: Vec<usize>,
    pub k: usize,
    pub f_lo: f64,
    pub f_hi: f64,
    pub seed: u64,
    pub grid_w: usize,
    pub grid_h: usize,
    pub f_cutoff: f64,
    pub damping: Damping,
    pub speed_of_sound: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_rooms: 5000,
            split: DEFAULT_SPLIT,
            t60_choices: T60_LEVELS.to_vec(),
            mic_choices: MIC_COUNTS.to_vec(),
            k: DEFAULT_K,
            f_lo: DEFAULT_BAND.0,
            f_hi: DEFAULT_BAND.1,
            seed: 0,
            grid_w: DEFAULT_GRID,
            grid_h: DEFAULT_GRID,
            f_cutoff: DEFAULT_F_CUTOFF,
            damping: Damping::default(),
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if self.n_rooms == 0 {
            return bad("n_rooms must be positive");
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return bad("split must lie in (0, 1)");
        }
        if self.t60_choices.is_empty()
            || self
                .t60_choices
                .iter()
                .any(|&t| !(t > 0.0 && t.is_finite()))
        {
            return bad("t60_choices must be a nonempty list of positive values");
        }
        if self.mic_choices.is_empty() {
            return bad("mic_choices must be nonempty");
        }
        if let Some(&m) = self
            .mic_choices
            .iter()
            .find(|&&m| m > self.grid_w * self.grid_h)
        {
            return Err(Error::InvalidArgument(format!(
                "mic count {m} exceeds the {}x{} grid",
                self.grid_w, self.grid_h
            )));
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(self.f_lo > 0.0 && self.f_lo < self.f_hi) {
            return bad("need 0 < f_lo < f_hi");
        }
        if self.f_hi > self.f_cutoff {
            return bad("f_hi must not exceed f_cutoff");
        }
        if self.grid_w < 2 || self.grid_h < 2 {
            return bad("grid must be at least 2x2");
        }
        Ok(())
    }

    pub fn freqs(&self) -> Result<Vec<f64>> {
        uniform_band(self.f_lo, self.f_hi, self.k)
    }

    /// Number of leading records assigned to the training split.
    pub fn n_train(&self) -> usize {
        ((self.n_rooms as f64 * self.split).round() as usize).clamp(1, self.n_rooms.max(2) - 1)
    }

    pub fn sampler(&self) -> RoomSampler {
        RoomSampler {
            t60_choices: self.t60_choices.clone(),
            grid_w: self.grid_w,
            grid_h: self.grid_h,
            speed_of_sound: self.speed_of_sound,
            ..RoomSampler::default()
        }
    }

    pub fn sim_options(&self, exec: Exec) -> SimOptions {
        SimOptions {
            f_cutoff: self.f_cutoff,
            damping: self.damping,
            exec,
            ..SimOptions::default()
        }
    }
}

/// Record `index` of the dataset described by `config`.
///
/// The record's RNG is seeded from `(config.seed, index)` only. Grid points
/// inside one record are evaluated with `exec`.
pub fn generate_record(config: &GenConfig, index: usize, exec: Exec) -> Result<SampleRecord> {
    let freqs = config.freqs()?;
    let seed = derive_seed(config.seed, index as u64);
    let mut rng = rng_from_seed(seed);
    let room = sample_room_with(&mut rng, &config.sampler())?;
    let m = config.mic_choices[rng.random_range(0..config.mic_choices.len())];
    let mask = sample_mask(&mut rng, m, room.grid_w, room.grid_h)?;
    let field = synthesize_field_with(&room, &freqs, &config.sim_options(exec))?
        .with_room_id(record_id(index));
    Ok(SampleRecord {
        room,
        field,
        mask,
        seed,
    })
}

pub fn record_id(index: usize) -> String {
    format!("room_{index:05}")
}

/// An in-memory dataset split by record index.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: GenConfig,
    pub freqs: Vec<f64>,
    pub records: Vec<SampleRecord>,
    pub n_train: usize,
}

impl Dataset {
    pub fn train(&self) -> &[SampleRecord] {
        &self.records[..self.n_train]
    }

    pub fn validation(&self) -> &[SampleRecord] {
        &self.records[self.n_train..]
    }
}

/// Generates every record in memory, rooms in parallel.
pub fn generate_dataset(config: &GenConfig) -> Result<Dataset> {
    generate_dataset_with(config, Exec::default())
}

pub fn generate_dataset_with(config: &GenConfig, exec: Exec) -> Result<Dataset> {
    config.validate()?;
    let records = exec.try_map(config.n_rooms, |i| {
        generate_record(config, i, Exec::Sequential)
    })?;
    Ok(Dataset {
        config: config.clone(),
        freqs: config.freqs()?,
        records,
        n_train: config.n_train(),
    })
}
