use rtf_core::dataset::{write_dataset, GenConfig};
use rtf_core::Exec;

use super::{out_dir, parse_damping};
use crate::cli::GenArgs;
use crate::config::FlatConfig;
use crate::error::Result;
use crate::provenance::Run;

pub fn resolve(args: GenArgs, cfg: &mut FlatConfig) -> Result<GenConfig> {
    let d = GenConfig::default();
    let damping = cfg.pick_opt::<String>("damping", args.damping)?;
    Ok(GenConfig {
        n_rooms: cfg.pick("n_rooms", args.n_rooms, d.n_rooms)?,
        split: cfg.pick("split", args.split, d.split)?,
        t60_choices: cfg.pick_list("t60", args.t60, d.t60_choices)?,
        mic_choices: cfg.pick_list("mics", args.mics, d.mic_choices)?,
        k: cfg.pick("k", args.k, d.k)?,
        f_lo: cfg.pick("f_lo", args.f_lo, d.f_lo)?,
        f_hi: cfg.pick("f_hi", args.f_hi, d.f_hi)?,
        seed: cfg.pick("seed", args.seed, d.seed)?,
        grid_w: cfg.pick("grid_w", args.grid_w, d.grid_w)?,
        grid_h: cfg.pick("grid_h", args.grid_h, d.grid_h)?,
        f_cutoff: cfg.pick("f_cutoff", args.f_cutoff, d.f_cutoff)?,
        damping: damping.as_deref().map(parse_damping).transpose()?.unwrap_or(d.damping),
        speed_of_sound: cfg.pick("speed_of_sound", args.speed_of_sound, d.speed_of_sound)?,
    })
}

pub fn run(mut args: GenArgs) -> Result<()> {
    let started = Run::start("gen-dataset");
    let mut cfg = FlatConfig::load(args.common.config.as_deref())?;
    let out = out_dir(args.common.out.take(), &mut cfg)?;
    let force = args.common.force;
    let dry_run = args.common.dry_run;
    let config = resolve(args, &mut cfg)?;
    cfg.finish()?;
    config.validate()?;
    println!(
        "generating {} rooms ({} train / {} validation), {} T60 levels, {} mic counts, K = {} over {}-{} Hz, {}x{} grid, seed {}",
        config.n_rooms,
        config.n_train(),
        config.n_rooms - config.n_train(),
        config.t60_choices.len(),
        config.mic_choices.len(),
        config.k,
        config.f_lo,
        config.f_hi,
        config.grid_w,
        config.grid_h,
        config.seed
    );
    if dry_run {
        println!("{}", serde_json::to_string_pretty(&config).expect("serializable"));
        return Ok(());
    }
    let meta = write_dataset(&out, &config, force, Exec::Parallel)?;
    println!("wrote {} records and meta.json to {}", meta.records.len(), out.display());
    started.write(&out, Some(config.seed), &serde_json::to_value(&config).expect("serializable"))
}
