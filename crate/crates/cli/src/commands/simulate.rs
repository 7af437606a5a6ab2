use std::fmt::Write as _;

use rtf_core::dataset::{sample_mask, write_record_file, MicMask, SampleRecord};
use rtf_core::field::uniform_band;
use rtf_core::modal::{synthesize_field_with, DEFAULT_F_CUTOFF, DEFAULT_GRID, DEFAULT_SPEED_OF_SOUND};
use rtf_core::seed::rng_from_seed;
use rtf_core::{Exec, RoomSpec, SimOptions};
use rtf_core::dataset::{DEFAULT_BAND, DEFAULT_K};
use serde::Serialize;

use super::{out_dir, parse_damping};
use crate::cli::SimulateArgs;
use crate::config::FlatConfig;
use crate::error::{CliError, Result};
use crate::provenance::{ensure_dir, write_text, Run};
use crate::render::{field_png, FieldView};

const RECORD_FILE: &str = "field.mdf";

#[derive(Serialize)]
struct Resolved {
    room: [f64; 3],
    source: [f64; 3],
    t60: f64,
    freq: f64,
    z_plane: f64,
    grid_w: usize,
    grid_h: usize,
    k: usize,
    f_lo: f64,
    f_hi: f64,
    f_cutoff: f64,
    damping: rtf_core::Damping,
    speed_of_sound: f64,
    mics: usize,
    seed: u64,
}

/// What a reader needs to interpret `field.mdf`.
#[derive(Serialize)]
struct FieldMeta<'a> {
    record: &'a str,
    freqs: &'a [f64],
    room: &'a RoomSpec,
    slice_freq_hz: f64,
}

fn triple(v: Vec<f64>, what: &str) -> Result<[f64; 3]> {
    <[f64; 3]>::try_from(v).map_err(|v| CliError::usage(format!("{what} needs 3 values, got {}", v.len())))
}

pub fn run(args: SimulateArgs) -> Result<()> {
    let started = Run::start("simulate");
    let mut cfg = FlatConfig::load(args.common.config.as_deref())?;
    let out = out_dir(args.common.out, &mut cfg)?;
    let flag_list = |v: Vec<f64>| if v.is_empty() { None } else { Some(v) };
    let room = cfg.take_list("room")?;
    let room = flag_list(args.room)
        .or(room)
        .ok_or_else(|| CliError::usage("room dimensions are required (--room LX LY LZ)"))?;
    let room = triple(room, "--room")?;
    let source = cfg.take_list("source")?;
    let source = flag_list(args.source)
        .or(source)
        .ok_or_else(|| CliError::usage("a source position is required (--source X Y Z)"))?;
    let source = triple(source, "--source")?;
    let damping: String = cfg.pick("damping", args.damping, "wavenumber_scaled".into())?;
    let grid_w = cfg.pick("grid_w", args.grid_w, DEFAULT_GRID)?;
    let grid_h = cfg.pick("grid_h", args.grid_h, DEFAULT_GRID)?;
    let r = Resolved {
        room,
        source,
        t60: cfg.pick("t60", args.t60, 1.0)?,
        freq: cfg.pick("freq", args.freq, 100.0)?,
        z_plane: cfg.pick("z_plane", args.z_plane, room[2] / 2.0)?,
        grid_w,
        grid_h,
        k: cfg.pick("k", args.k, DEFAULT_K)?,
        f_lo: cfg.pick("f_lo", args.f_lo, DEFAULT_BAND.0)?,
        f_hi: cfg.pick("f_hi", args.f_hi, DEFAULT_BAND.1)?,
        f_cutoff: cfg.pick("f_cutoff", args.f_cutoff, DEFAULT_F_CUTOFF)?,
        damping: parse_damping(&damping)?,
        speed_of_sound: cfg.pick("speed_of_sound", args.speed_of_sound, DEFAULT_SPEED_OF_SOUND)?,
        mics: cfg.pick("mics", args.mics, grid_w * grid_h)?,
        seed: cfg.pick("seed", args.seed, 0)?,
    };
    cfg.finish()?;
    if !(r.freq > 0.0 && r.freq.is_finite()) {
        return Err(CliError::usage(format!("--freq must be positive, got {}", r.freq)));
    }
    if r.freq > r.f_cutoff {
        return Err(CliError::usage(format!(
            "--freq {} Hz lies above the modal cutoff {} Hz",
            r.freq, r.f_cutoff
        )));
    }

    let mut spec = RoomSpec::new(r.room, r.t60, r.source, r.z_plane, r.grid_w, r.grid_h)?;
    spec.speed_of_sound = r.speed_of_sound;
    spec.validate()?;
    let opts = SimOptions {
        f_cutoff: r.f_cutoff,
        damping: r.damping,
        exec: Exec::Parallel,
        ..SimOptions::default()
    };
    let freqs = uniform_band(r.f_lo, r.f_hi, r.k)?;
    let field = synthesize_field_with(&spec, &freqs, &opts)?.with_room_id("field");
    let mask = if r.mics == r.grid_w * r.grid_h {
        MicMask::full(r.grid_w, r.grid_h)
    } else {
        sample_mask(&mut rng_from_seed(r.seed), r.mics, r.grid_w, r.grid_h)?
    };
    let slice = synthesize_field_with(&spec, &[r.freq], &opts)?;

    ensure_dir(&out)?;
    let record = SampleRecord {
        room: spec.clone(),
        field,
        mask,
        seed: r.seed,
    };
    write_record_file(&out.join(RECORD_FILE), &record)?;
    let meta = FieldMeta {
        record: RECORD_FILE,
        freqs: &freqs,
        room: &spec,
        slice_freq_hz: r.freq,
    };
    write_text(
        &out.join("field.json"),
        &(serde_json::to_string_pretty(&meta).expect("serializable") + "\n"),
    )?;

    let tag = format!("{}hz", r.freq);
    let mut csv = String::from("w,h,x_m,y_m,re,im,magnitude_db,phase_rad\n");
    for w in 0..r.grid_w {
        for h in 0..r.grid_h {
            let p = rtf_core::modal::grid_point(&spec, w, h);
            let z = slice.get(w, h, 0);
            let _ = writeln!(
                csv,
                "{w},{h},{},{},{:e},{:e},{},{}",
                p[0],
                p[1],
                z.re,
                z.im,
                20.0 * z.norm().log10(),
                z.arg()
            );
        }
    }
    write_text(&out.join(format!("slice_{tag}.csv")), &csv)?;
    field_png(&slice, 0, FieldView::MagnitudeDb, &out.join(format!("magnitude_{tag}.png")))?;
    field_png(&slice, 0, FieldView::Phase, &out.join(format!("phase_{tag}.png")))?;

    println!(
        "simulated {:.2}x{:.2}x{:.2} m room, T60 {} s, {} band frequencies; images at {} Hz in {}",
        r.room[0],
        r.room[1],
        r.room[2],
        r.t60,
        r.k,
        r.freq,
        out.display()
    );
    started.write(&out, Some(r.seed), &serde_json::to_value(&r).expect("serializable"))
}
