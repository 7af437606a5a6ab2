//! Truncated modal summation for rigid-walled shoebox rooms.
//!
//! The transfer function from a source `s` to a receiver `r` is
//!
//! ```text
//! G(r|s, ω) = -1/V Σ_n Ψ_n(r) Ψ_n(s) / ((ω/c)² - (ω_n/c)² - j·d_n(ω))
//! ```
//!
//! with `Ψ_n` the normalized cosine mode shapes and `d_n` the damping term
//! selected by [`Damping`]. All sums use compensated accumulation so the
//! result does not depend on the mode ordering beyond the last ulp or two.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::field::FieldGrid;

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;
pub const DEFAULT_F_CUTOFF: f64 = 400.0;
pub const DEFAULT_MAX_MODES: usize = 500_000;
pub const DEFAULT_GRID: usize = 32;

/// Denominators smaller than this in modulus are reported instead of divided by.
pub const DENOMINATOR_FLOOR: f64 = 1e-300;

/// Shoebox room, source and measurement plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub lx: f64,
    pub ly: f64,
    pub lz: f64,
    /// Reverberation time in seconds. `NaN` marks an unknown value on imported measurements.
    pub t60: f64,
    pub source: [f64; 3],
    pub z_plane: f64,
    pub grid_w: usize,
    pub grid_h: usize,
    pub speed_of_sound: f64,
}

impl RoomSpec {
    pub fn new(
        dims: [f64; 3],
        t60: f64,
        source: [f64; 3],
        z_plane: f64,
        grid_w: usize,
        grid_h: usize,
    ) -> Result<Self> {
        let room = RoomSpec {
            lx: dims[0],
            ly: dims[1],
            lz: dims[2],
            t60,
            source,
            z_plane,
            grid_w,
            grid_h,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
        };
        room.validate()?;
        Ok(room)
    }

    pub fn dims(&self) -> [f64; 3] {
        [self.lx, self.ly, self.lz]
    }

    pub fn volume(&self) -> f64 {
        self.lx * self.ly * self.lz
    }

    /// Geometry checks shared by simulated and measured rooms.
    pub fn validate_geometry(&self) -> Result<()> {
        let dims = self.dims();
        if dims.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidRoom(format!(
                "dimensions must be positive, got {dims:?}"
            )));
        }
        for (axis, (&s, &l)) in self.source.iter().zip(dims.iter()).enumerate() {
            if !(0.0..=l).contains(&s) {
                return Err(Error::InvalidRoom(format!(
                    "source coordinate {axis} = {s} outside [0, {l}]"
                )));
            }
        }
        if !(0.0..=self.lz).contains(&self.z_plane) {
            return Err(Error::InvalidRoom(format!(
                "measurement plane z = {} outside [0, {}]",
                self.z_plane, self.lz
            )));
        }
        if self.grid_w < 2 || self.grid_h < 2 {
            return Err(Error::InvalidRoom(format!(
                "grid must be at least 2x2, got {}x{}",
                self.grid_w, self.grid_h
            )));
        }
        if !(self.speed_of_sound > 0.0 && self.speed_of_sound.is_finite()) {
            return Err(Error::InvalidRoom(format!(
                "speed of sound must be positive, got {}",
                self.speed_of_sound
            )));
        }
        Ok(())
    }

    /// Full validation for simulation; `T60 = +inf` (undamped) is accepted.
    pub fn validate(&self) -> Result<()> {
        self.validate_geometry()?;
        if !(self.t60 > 0.0) {
            return Err(Error::InvalidRoom(format!(
                "T60 must be positive, got {}",
                self.t60
            )));
        }
        Ok(())
    }

    /// Modal decay time: the envelope `e^{-t/τ}` loses 60 dB after T60.
    pub fn decay_time(&self) -> f64 {
        self.t60 / (3.0 * std::f64::consts::LN_10)
    }
}

/// One room mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub index: [u32; 3],
    /// Eigenfrequency in rad/s.
    pub omega: f64,
    /// Decay time in seconds.
    pub tau: f64,
    pub norm: f64,
}

impl Mode {
    pub fn new(index: [u32; 3], room: &RoomSpec) -> Self {
        let norm = index
            .iter()
            .map(|&n| if n == 0 { 1.0 } else { 2.0 })
            .product::<f64>()
            .sqrt();
        Mode {
            index,
            omega: eigen_omega(index, room),
            tau: room.decay_time(),
            norm,
        }
    }

    pub fn frequency_hz(&self) -> f64 {
        self.omega / (2.0 * PI)
    }
}

fn eigen_omega(index: [u32; 3], room: &RoomSpec) -> f64 {
    let [nx, ny, nz] = index.map(f64::from);
    let q = (nx / room.lx).powi(2) + (ny / room.ly).powi(2) + (nz / room.lz).powi(2);
    room.speed_of_sound * PI * q.sqrt()
}

/// Form of the imaginary (damping) part of each modal denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Damping {
    /// `ω / (τ_n c²)`, dimensionally consistent with the wavenumber terms.
    #[default]
    WavenumberScaled,
    /// `ω / τ_n`, without the `1/c²` factor.
    Literal,
}

impl Damping {
    #[inline]
    fn term(self, omega: f64, tau: f64, c: f64) -> f64 {
        match self {
            Damping::WavenumberScaled => omega / tau / (c * c),
            Damping::Literal => omega / tau,
        }
    }
}

impl std::str::FromStr for Damping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wavenumber_scaled" | "scaled" => Ok(Damping::WavenumberScaled),
            "literal" => Ok(Damping::Literal),
            other => Err(Error::InvalidArgument(format!(
                "unknown damping model '{other}'"
            ))),
        }
    }
}

/// Knobs for [`synthesize_field_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub f_cutoff: f64,
    pub max_modes: usize,
    pub damping: Damping,
    pub exec: Exec,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            f_cutoff: DEFAULT_F_CUTOFF,
            max_modes: DEFAULT_MAX_MODES,
            damping: Damping::default(),
            exec: Exec::default(),
        }
    }
}

/// Grid position `(w, h)`: `[w·Lx/(W−1), h·Ly/(H−1), z̄]`.
#[inline]
pub fn grid_point(room: &RoomSpec, w: usize, h: usize) -> [f64; 3] {
    [
        w as f64 * (room.lx / (room.grid_w - 1) as f64),
        h as f64 * (room.ly / (room.grid_h - 1) as f64),
        room.z_plane,
    ]
}

/// All `W·H` grid positions, row-major with `w` outer: entry `w * H + h`.
pub fn grid_coordinates(room: &RoomSpec) -> Vec<[f64; 3]> {
    (0..room.grid_w)
        .flat_map(|w| (0..room.grid_h).map(move |h| grid_point(room, w, h)))
        .collect()
}

/// Every mode with eigenfrequency `≤ f_cutoff`, sorted by eigenfrequency and
/// then lexicographically by index. Always contains `(0, 0, 0)`.
pub fn enumerate_modes(room: &RoomSpec, f_cutoff: f64, max_modes: usize) -> Result<Vec<Mode>> {
    room.validate_geometry()?;
    if !(f_cutoff > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cutoff must be positive, got {f_cutoff}"
        )));
    }
    let omega_max = 2.0 * PI * f_cutoff;
    let c = room.speed_of_sound;
    let bound = |l: f64| -> Result<u32> {
        let n = (2.0 * f_cutoff * l / c).floor() + 1.0;
        if n > u32::MAX as f64 / 2.0 {
            return Err(Error::TooManyModes {
                cap: max_modes,
                f_cutoff,
            });
        }
        Ok(n as u32)
    };
    let (bx, by, bz) = (bound(room.lx)?, bound(room.ly)?, bound(room.lz)?);

    let mut modes = Vec::new();
    for nx in 0..=bx {
        for ny in 0..=by {
            for nz in 0..=bz {
                let index = [nx, ny, nz];
                if eigen_omega(index, room) <= omega_max {
                    if modes.len() == max_modes {
                        return Err(Error::TooManyModes {
                            cap: max_modes,
                            f_cutoff,
                        });
                    }
                    modes.push(Mode::new(index, room));
                }
            }
        }
    }
    modes.sort_by(|a, b| a.omega.total_cmp(&b.omega).then(a.index.cmp(&b.index)));
    Ok(modes)
}

#[inline]
fn axis_factor(n: u32, coord: f64, length: f64) -> f64 {
    (f64::from(n) * PI * coord / length).cos()
}

/// `norm · cos(n_x π x/Lx) · cos(n_y π y/Ly) · cos(n_z π z/Lz)`.
pub fn mode_shape(mode: &Mode, position: [f64; 3], room: &RoomSpec) -> f64 {
    mode.norm
        * axis_factor(mode.index[0], position[0], room.lx)
        * axis_factor(mode.index[1], position[1], room.ly)
        * axis_factor(mode.index[2], position[2], room.lz)
}

/// Neumaier-compensated running sum of complex terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    re: (f64, f64),
    im: (f64, f64),
}

impl CompensatedSum {
    #[inline]
    fn add_part(acc: &mut (f64, f64), x: f64) {
        let t = acc.0 + x;
        if acc.0.abs() >= x.abs() {
            acc.1 += (acc.0 - t) + x;
        } else {
            acc.1 += (x - t) + acc.0;
        }
        acc.0 = t;
    }

    #[inline]
    pub fn add(&mut self, z: Complex64) {
        Self::add_part(&mut self.re, z.re);
        Self::add_part(&mut self.im, z.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.0 + self.re.1, self.im.0 + self.im.1)
    }
}

/// `Ψ_n(s) / denominator_n(ω)` for each mode.
fn source_coefficients(
    room: &RoomSpec,
    source: [f64; 3],
    omega: f64,
    modes: &[Mode],
    damping: Damping,
) -> Result<Vec<Complex64>> {
    let c = room.speed_of_sound;
    let k2 = (omega / c).powi(2);
    modes
        .iter()
        .map(|m| {
            let den = Complex64::new(k2 - (m.omega / c).powi(2), -damping.term(omega, m.tau, c));
            if den.norm() < DENOMINATOR_FLOOR {
                return Err(Error::DegenerateDenominator {
                    index: m.index,
                    omega,
                });
            }
            Ok(mode_shape(m, source, room) * den.inv())
        })
        .collect()
}

/// Transfer function from `room.source` to `receiver` at angular frequency `omega`.
pub fn rtf(room: &RoomSpec, receiver: [f64; 3], omega: f64, modes: &[Mode]) -> Result<Complex64> {
    rtf_with(room, receiver, omega, modes, Damping::default())
}

pub fn rtf_with(
    room: &RoomSpec,
    receiver: [f64; 3],
    omega: f64,
    modes: &[Mode],
    damping: Damping,
) -> Result<Complex64> {
    if modes.is_empty() {
        return Err(Error::InvalidArgument("mode list is empty".into()));
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "omega must be positive, got {omega}"
        )));
    }
    let coeffs = source_coefficients(room, room.source, omega, modes, damping)?;
    let mut acc = CompensatedSum::default();
    for (m, a) in modes.iter().zip(&coeffs) {
        acc.add(mode_shape(m, receiver, room) * a);
    }
    Ok(acc.value() * (-1.0 / room.volume()))
}

/// Room transfer functions at every grid point and frequency (Hz).
pub fn synthesize_field(room: &RoomSpec, freqs: &[f64]) -> Result<FieldGrid> {
    synthesize_field_with(room, freqs, &SimOptions::default())
}

pub fn synthesize_field_with(
    room: &RoomSpec,
    freqs: &[f64],
    opts: &SimOptions,
) -> Result<FieldGrid> {
    room.validate()?;
    if let Some(&f) = freqs.iter().find(|&&f| !(f > 0.0 && f <= opts.f_cutoff)) {
        return Err(Error::InvalidArgument(format!(
            "frequency {f} Hz outside (0, {}] Hz",
            opts.f_cutoff
        )));
    }
    let modes = enumerate_modes(room, opts.f_cutoff, opts.max_modes)?;
    let basis = ModalBasis::new(room, &modes);
    let coeffs: Vec<Vec<Complex64>> = freqs
        .iter()
        .map(|&f| source_coefficients(room, room.source, 2.0 * PI * f, &modes, opts.damping))
        .collect::<Result<_>>()?;

    let (w, h, nk) = (room.grid_w, room.grid_h, freqs.len());
    let scale = -1.0 / room.volume();
    let mut data = vec![Complex64::new(0.0, 0.0); w * h * nk];
    // One chunk per grid row `w`.
    opts.exec.for_each_chunk_mut(&mut data, h * nk, |wi, row| {
        let mut shapes = vec![0.0; modes.len()];
        for hi in 0..h {
            basis.shapes_at(wi, hi, &mut shapes);
            for (k, ck) in coeffs.iter().enumerate() {
                let mut acc = CompensatedSum::default();
                for (s, a) in shapes.iter().zip(ck) {
                    acc.add(*s * a);
                }
                row[hi * nk + k] = acc.value() * scale;
            }
        }
    });
    FieldGrid::from_data(w, h, freqs.to_vec(), data)
}

/// Per-axis cosine tables so grid mode shapes cost three lookups each. The
/// products are formed in the same order as [`mode_shape`], so both paths give
/// bit-identical values.
struct ModalBasis<'a> {
    modes: &'a [Mode],
    cos_x: Vec<Vec<f64>>,
    cos_y: Vec<Vec<f64>>,
    cos_z: Vec<f64>,
}

impl<'a> ModalBasis<'a> {
    fn new(room: &RoomSpec, modes: &'a [Mode]) -> Self {
        let max = |axis: usize| modes.iter().map(|m| m.index[axis]).max().unwrap_or(0);
        let cos_x = (0..=max(0))
            .map(|n| {
                (0..room.grid_w)
                    .map(|w| axis_factor(n, grid_point(room, w, 0)[0], room.lx))
                    .collect()
            })
            .collect();
        let cos_y = (0..=max(1))
            .map(|n| {
                (0..room.grid_h)
                    .map(|h| axis_factor(n, grid_point(room, 0, h)[1], room.ly))
                    .collect()
            })
            .collect();
        let cos_z = (0..=max(2))
            .map(|n| axis_factor(n, room.z_plane, room.lz))
            .collect();
        ModalBasis {
            modes,
            cos_x,
            cos_y,
            cos_z,
        }
    }

    fn shapes_at(&self, w: usize, h: usize, out: &mut [f64]) {
        for (o, m) in out.iter_mut().zip(self.modes) {
            let [nx, ny, nz] = m.index.map(|n| n as usize);
            *o = m.norm * self.cos_x[nx][w] * self.cos_y[ny][h] * self.cos_z[nz];
        }
    }
}
