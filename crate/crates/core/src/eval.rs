//! NMSE metrics, per-room scoring and the T60 / microphone-count sweeps.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dataset::{sample_mask, Observation, SampleRecord};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::field::FieldGrid;
use crate::seed::{derive_seed, rng_from_seed};

/// Floor applied to every dB value so perfect reconstructions stay plottable.
pub const CLAMP_DB: f64 = -300.0;

pub const CSV_HEADER: &str = "method,sweep_key,freq_hz,nmse_complex_db,nmse_abs_db,n_rooms";

/// Anything that maps an observation to a full-grid estimate.
pub trait Reconstructor: Sync {
    fn name(&self) -> &str;
    fn reconstruct(&self, obs: &Observation<'_>) -> Result<FieldGrid>;
}

/// `Σ (|Ĝ| − |G|)²` at frequency `k`.
pub fn abs_error_energy(estimate: &FieldGrid, target: &FieldGrid, k: usize) -> Result<f64> {
    reduce(estimate, target, k, |e, t| (e.norm() - t.norm()).powi(2))
}

/// `Σ |Ĝ − G|²` at frequency `k`.
pub fn complex_error_energy(estimate: &FieldGrid, target: &FieldGrid, k: usize) -> Result<f64> {
    reduce(estimate, target, k, |e, t| (e - t).norm_sqr())
}

fn reduce(
    estimate: &FieldGrid,
    target: &FieldGrid,
    k: usize,
    f: impl Fn(Complex64, Complex64) -> f64,
) -> Result<f64> {
    estimate.same_shape(target)?;
    if k >= target.n_freqs() {
        return Err(Error::InvalidArgument(format!(
            "frequency index {k} out of range for K = {}",
            target.n_freqs()
        )));
    }
    let nk = target.n_freqs();
    Ok(estimate
        .data()
        .iter()
        .zip(target.data())
        .skip(k)
        .step_by(nk)
        .map(|(&e, &t)| f(e, t))
        .sum())
}

fn target_energy(target: &FieldGrid, k: usize) -> f64 {
    target
        .data()
        .iter()
        .skip(k)
        .step_by(target.n_freqs())
        .map(|z| z.norm_sqr())
        .sum()
}

fn to_db(num: f64, den: f64, k: usize) -> Result<f64> {
    if den == 0.0 {
        return Err(Error::ZeroEnergy(k));
    }
    if num == 0.0 {
        return Ok(CLAMP_DB);
    }
    Ok((10.0 * (num / den).log10()).max(CLAMP_DB))
}

/// Magnitude-only NMSE in dB.
pub fn nmse_abs(estimate: &FieldGrid, target: &FieldGrid, k: usize) -> Result<f64> {
    let num = abs_error_energy(estimate, target, k)?;
    to_db(num, target_energy(target, k), k)
}

/// Complex NMSE in dB.
pub fn nmse_complex(estimate: &FieldGrid, target: &FieldGrid, k: usize) -> Result<f64> {
    let num = complex_error_energy(estimate, target, k)?;
    to_db(num, target_energy(target, k), k)
}

pub fn is_clamped(db: f64) -> bool {
    db <= CLAMP_DB
}

/// Per-frequency scores of one reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomScore {
    pub room_id: String,
    pub nmse_complex: Vec<f64>,
    pub nmse_abs: Vec<f64>,
}

impl RoomScore {
    pub fn compute(estimate: &FieldGrid, target: &FieldGrid) -> Result<Self> {
        let k = target.n_freqs();
        Ok(RoomScore {
            room_id: target.room_id.clone(),
            nmse_complex: (0..k)
                .map(|i| nmse_complex(estimate, target, i))
                .collect::<Result<_>>()?,
            nmse_abs: (0..k)
                .map(|i| nmse_abs(estimate, target, i))
                .collect::<Result<_>>()?,
        })
    }

    /// Frequency-averaged complex NMSE in dB.
    pub fn mean_complex(&self) -> f64 {
        mean_db(self.nmse_complex.iter().copied())
    }

    pub fn mean_abs(&self) -> f64 {
        mean_db(self.nmse_abs.iter().copied())
    }
}

/// Mean of dB values, summed in sorted order so any permutation of the inputs
/// gives the same bits.
pub fn mean_db(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// The level a report was computed at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKey {
    T60(f64),
    Mics(usize),
    All,
}

impl fmt::Display for SweepKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepKey::T60(t) => write!(f, "t60={t}"),
            SweepKey::Mics(m) => write!(f, "m={m}"),
            SweepKey::All => f.write_str("all"),
        }
    }
}

impl FromStr for SweepKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("bad sweep key {s:?}"));
        if s == "all" {
            Ok(SweepKey::All)
        } else if let Some(t) = s.strip_prefix("t60=") {
            t.parse().map(SweepKey::T60).map_err(|_| bad())
        } else if let Some(m) = s.strip_prefix("m=") {
            m.parse().map(SweepKey::Mics).map_err(|_| bad())
        } else {
            Err(bad())
        }
    }
}

/// Room-averaged per-frequency metrics at one sweep level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub key: SweepKey,
    pub freqs: Vec<f64>,
    pub nmse_complex: Vec<f64>,
    pub nmse_abs: Vec<f64>,
    pub n_rooms: usize,
    #[serde(default)]
    pub rooms: Vec<RoomScore>,
}

impl MetricReport {
    pub fn aggregate(
        method: &str,
        key: SweepKey,
        freqs: &[f64],
        rooms: Vec<RoomScore>,
    ) -> Result<Self> {
        let k = freqs.len();
        if rooms.is_empty() {
            return Err(Error::InvalidArgument("no rooms to aggregate".into()));
        }
        if let Some(r) = rooms
            .iter()
            .find(|r| r.nmse_complex.len() != k || r.nmse_abs.len() != k)
        {
            return Err(Error::shape(k, r.nmse_complex.len()));
        }
        Ok(MetricReport {
            method: method.to_string(),
            key,
            freqs: freqs.to_vec(),
            nmse_complex: (0..k)
                .map(|i| mean_db(rooms.iter().map(|r| r.nmse_complex[i])))
                .collect(),
            nmse_abs: (0..k)
                .map(|i| mean_db(rooms.iter().map(|r| r.nmse_abs[i])))
                .collect(),
            n_rooms: rooms.len(),
            rooms,
        })
    }

    pub fn mean_complex(&self) -> f64 {
        mean_db(self.nmse_complex.iter().copied())
    }

    pub fn mean_abs(&self) -> f64 {
        mean_db(self.nmse_abs.iter().copied())
    }
}

/// Evaluation records at one reverberation level.
#[derive(Debug, Clone, Copy)]
pub struct EvalSet<'a> {
    pub t60: f64,
    pub records: &'a [SampleRecord],
}

/// Seed of the evaluation mask for one record at `m` microphones.
pub fn eval_mask_seed(sweep_seed: u64, record_seed: u64, m: usize) -> u64 {
    derive_seed(derive_seed(sweep_seed, record_seed), m as u64)
}

/// Scores every record, rooms in parallel. With `m = None` each record keeps
/// its stored mask; otherwise a fresh `m`-point mask is drawn from
/// [`eval_mask_seed`].
pub fn score_records(
    method: &dyn Reconstructor,
    records: &[SampleRecord],
    m: Option<usize>,
    sweep_seed: u64,
    exec: Exec,
) -> Result<Vec<RoomScore>> {
    exec.try_map(records.len(), |i| {
        let rec = &records[i];
        let mask = match m {
            None => rec.mask.clone(),
            Some(m) => {
                let mut rng = rng_from_seed(eval_mask_seed(sweep_seed, rec.seed, m));
                sample_mask(&mut rng, m, rec.field.width(), rec.field.height())?
            }
        };
        let obs = Observation::new(&rec.room, &rec.field, &mask)?;
        let estimate = method.reconstruct(&obs)?;
        RoomScore::compute(&estimate, &rec.field)
    })
}

fn common_freqs(records: &[SampleRecord]) -> Result<Vec<f64>> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty evaluation set".into()))?;
    if let Some(r) = records
        .iter()
        .find(|r| r.field.freqs() != first.field.freqs())
    {
        return Err(Error::shape(
            format!(
                "{} frequencies of {}",
                first.field.n_freqs(),
                first.field.room_id
            ),
            format!("a different grid in {}", r.field.room_id),
        ));
    }
    Ok(first.field.freqs().to_vec())
}

/// One report per requested T60 level with `m` freshly drawn microphones.
pub fn sweep_t60(
    method: &dyn Reconstructor,
    sets: &[EvalSet<'_>],
    levels: &[f64],
    m: usize,
    sweep_seed: u64,
    exec: Exec,
) -> Result<Vec<MetricReport>> {
    levels
        .iter()
        .map(|&t60| {
            let set = sets.iter().find(|s| s.t60 == t60).ok_or_else(|| {
                Error::InvalidArgument(format!("no evaluation set for T60 = {t60} s"))
            })?;
            let freqs = common_freqs(set.records)?;
            let rooms = score_records(method, set.records, Some(m), sweep_seed, exec)?;
            MetricReport::aggregate(method.name(), SweepKey::T60(t60), &freqs, rooms)
        })
        .collect()
}

/// One report per microphone count on the same records.
pub fn sweep_mics(
    method: &dyn Reconstructor,
    records: &[SampleRecord],
    mic_counts: &[usize],
    sweep_seed: u64,
    exec: Exec,
) -> Result<Vec<MetricReport>> {
    let freqs = common_freqs(records)?;
    let cells = records[0].field.width() * records[0].field.height();
    if let Some(&m) = mic_counts.iter().find(|&&m| m == 0 || m > cells) {
        return Err(Error::InvalidArgument(format!(
            "mic count {m} outside 1..={cells}"
        )));
    }
    mic_counts
        .iter()
        .map(|&m| {
            let rooms = score_records(method, records, Some(m), sweep_seed, exec)?;
            MetricReport::aggregate(method.name(), SweepKey::Mics(m), &freqs, rooms)
        })
        .collect()
}

/// Writes `reports` as CSV rows, one per (report, frequency).
pub fn write_csv<W: Write>(mut out: W, reports: &[MetricReport]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in reports {
        for (i, f) in r.freqs.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.method, r.key, f, r.nmse_complex[i], r.nmse_abs[i], r.n_rooms
            )?;
        }
    }
    Ok(())
}

/// Per-room frequency-averaged scores, handy for paired comparisons.
pub fn write_room_csv<W: Write>(mut out: W, reports: &[MetricReport]) -> std::io::Result<()> {
    writeln!(
        out,
        "method,sweep_key,room_id,mean_nmse_complex_db,mean_nmse_abs_db"
    )?;
    for r in reports {
        for room in &r.rooms {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.method,
                r.key,
                room.room_id,
                room.mean_complex(),
                room.mean_abs()
            )?;
        }
    }
    Ok(())
}

/// Parses a file written by [`write_csv`] back into reports (without the
/// per-room scores).
pub fn read_csv<R: BufRead>(input: R) -> Result<Vec<MetricReport>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::Format(e.to_string()))?
        .unwrap_or_default();
    if header.trim() != CSV_HEADER {
        return Err(Error::Format(format!("unexpected CSV header {header:?}")));
    }
    let mut reports: Vec<MetricReport> = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Format(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Format(format!("line {}: bad {what}", n + 2));
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(bad("column count"));
        }
        let key: SweepKey = cols[1].parse()?;
        let num = |i: usize, what: &str| cols[i].parse::<f64>().map_err(|_| bad(what));
        let (f, c, a) = (
            num(2, "freq_hz")?,
            num(3, "nmse_complex_db")?,
            num(4, "nmse_abs_db")?,
        );
        let n_rooms: usize = cols[5].parse().map_err(|_| bad("n_rooms"))?;
        match reports.last_mut() {
            Some(r) if r.method == cols[0] && r.key == key => {
                r.freqs.push(f);
                r.nmse_complex.push(c);
                r.nmse_abs.push(a);
            }
            _ => reports.push(MetricReport {
                method: cols[0].to_string(),
                key,
                freqs: vec![f],
                nmse_complex: vec![c],
                nmse_abs: vec![a],
                n_rooms,
                rooms: Vec::new(),
            }),
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(values: &[(f64, f64)]) -> FieldGrid {
        let data = values.iter().map(|&(r, i)| Complex64::new(r, i)).collect();
        FieldGrid::from_data(2, 2, vec![100.0], data).unwrap()
    }

    fn target() -> FieldGrid {
        grid(&[(1.0, 0.0), (0.0, 2.0), (-1.0, 1.0), (0.5, -0.5)])
    }

    #[test]
    fn identical_fields_hit_the_clamp() {
        let t = target();
        assert_eq!(nmse_complex(&t, &t, 0).unwrap(), CLAMP_DB);
        assert_eq!(nmse_abs(&t, &t, 0).unwrap(), CLAMP_DB);
    }

    #[test]
    fn zero_estimate_is_zero_db() {
        let t = target();
        let z = FieldGrid::zeros(2, 2, vec![100.0]).unwrap();
        assert_eq!(nmse_complex(&z, &t, 0).unwrap(), 0.0);
        assert_eq!(nmse_abs(&z, &t, 0).unwrap(), 0.0);
    }

    #[test]
    fn negated_and_doubled_estimates() {
        let t = target();
        let mut neg = t.clone();
        neg.data_mut().iter_mut().for_each(|z| *z = -*z);
        assert_eq!(nmse_abs(&neg, &t, 0).unwrap(), CLAMP_DB);
        // |−2G|² / |G|² = 4
        assert!((nmse_complex(&neg, &t, 0).unwrap() - 10.0 * 4f64.log10()).abs() < 1e-12);
        let mut dbl = t.clone();
        dbl.data_mut().iter_mut().for_each(|z| *z *= 2.0);
        assert_eq!(nmse_complex(&dbl, &t, 0).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_value() {
        let t = grid(&[(1.0, 0.0), (0.0, 1.0), (0.0, 0.0), (0.0, 0.0)]);
        let e = grid(&[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        // residual energy 1 over target energy 2
        let expect = 10.0 * 0.5f64.log10();
        assert!((nmse_complex(&e, &t, 0).unwrap() - expect).abs() < 1e-15);
        assert!((nmse_abs(&e, &t, 0).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn zero_target_is_an_error() {
        let z = FieldGrid::zeros(2, 2, vec![100.0]).unwrap();
        assert!(matches!(
            nmse_complex(&target(), &z, 0),
            Err(Error::ZeroEnergy(0))
        ));
        assert!(matches!(
            nmse_abs(&target(), &z, 0),
            Err(Error::ZeroEnergy(0))
        ));
    }

    #[test]
    fn shape_and_index_checks() {
        let t = target();
        let other = FieldGrid::zeros(1, 4, vec![100.0]).unwrap();
        assert!(nmse_complex(&other, &t, 0).is_err());
        assert!(nmse_complex(&t, &t, 1).is_err());
    }

    #[test]
    fn mean_db_is_order_free() {
        let a = [0.1, -3.7, 1e-9, -120.25, 44.0];
        let mut b = a;
        b.reverse();
        assert_eq!(mean_db(a).to_bits(), mean_db(b).to_bits());
        assert!(mean_db([]).is_nan());
    }

    #[test]
    fn aggregation_of_identical_rooms_is_idempotent() {
        let room = RoomScore {
            room_id: "a".into(),
            nmse_complex: vec![-3.0, -7.5],
            nmse_abs: vec![-4.0, -9.0],
        };
        let one =
            MetricReport::aggregate("k", SweepKey::All, &[1.0, 2.0], vec![room.clone()]).unwrap();
        let two =
            MetricReport::aggregate("k", SweepKey::All, &[1.0, 2.0], vec![room.clone(), room])
                .unwrap();
        assert_eq!(one.nmse_complex, two.nmse_complex);
        assert_eq!(one.nmse_abs, two.nmse_abs);
        assert_eq!(two.n_rooms, 2);
    }

    #[test]
    fn sweep_keys_round_trip() {
        for key in [SweepKey::T60(0.4), SweepKey::Mics(55), SweepKey::All] {
            assert_eq!(key.to_string().parse::<SweepKey>().unwrap(), key);
        }
        assert!("x=1".parse::<SweepKey>().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let reports = vec![
            MetricReport {
                method: "kernel".into(),
                key: SweepKey::Mics(5),
                freqs: vec![30.0, 36.923076923076925],
                nmse_complex: vec![-1.25, -0.1],
                nmse_abs: vec![-2.5, CLAMP_DB],
                n_rooms: 3,
                rooms: Vec::new(),
            },
            MetricReport {
                method: "kernel".into(),
                key: SweepKey::Mics(55),
                freqs: vec![30.0, 36.923076923076925],
                nmse_complex: vec![-11.0, -9.0],
                nmse_abs: vec![-12.0, -13.0],
                n_rooms: 3,
                rooms: Vec::new(),
            },
        ];
        let mut buf = Vec::new();
        write_csv(&mut buf, &reports).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(read_csv(buf.as_slice()).unwrap(), reports);
    }
}
