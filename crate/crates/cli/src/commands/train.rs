use std::ops::ControlFlow;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rtf_core::dataset::read_dataset;
use rtf_core::seed::derive_seed;
use rtf_core::Exec;
use rtf_cvnn::checkpoint::{load_trainer, save_model, save_trainer};
use rtf_cvnn::data::Samples;
use rtf_cvnn::train::history_csv;
use rtf_cvnn::{NetError, TrainConfig, Trainer, UNet, UNetSpec};
use serde::Serialize;

use super::out_dir;
use crate::cli::TrainArgs;
use crate::config::FlatConfig;
use crate::error::{CliError, Result};
use crate::provenance::{fresh_dir, write_text, Run};

/// Stream separating weight initialization from the trainer's own RNG.
const INIT_STREAM: u64 = 0x1417;

#[derive(Debug, Serialize)]
struct Resolved {
    data: PathBuf,
    train: TrainConfig,
    width_divisor: usize,
    checkpoint_every: usize,
    resume: Option<PathBuf>,
    overfit: bool,
}

#[derive(Serialize)]
struct Summary<'a> {
    stop_reason: String,
    epochs: usize,
    best_epoch: usize,
    best_val_loss: f64,
    first_train_loss: Option<f64>,
    last_train_loss: Option<f64>,
    param_count: usize,
    spec: &'a UNetSpec,
    config: &'a TrainConfig,
}

pub fn run(mut args: TrainArgs) -> Result<()> {
    let started = Run::start("train");
    let mut cfg = FlatConfig::load(args.common.config.as_deref())?;
    let out = out_dir(args.common.out.take(), &mut cfg)?;
    let d = TrainConfig::default();
    let data = cfg
        .pick_opt("data", args.data)?
        .ok_or_else(|| CliError::usage("a dataset directory is required (--data)"))?;
    let max_epochs = cfg.pick_opt("max_epochs", args.max_epochs)?;
    let patience = cfg.pick_opt("patience", args.patience)?;
    let r = Resolved {
        data,
        train: TrainConfig {
            lr: cfg.pick("lr", args.lr, d.lr)?,
            batch: cfg.pick("batch", args.batch, d.batch)?,
            max_epochs: max_epochs.unwrap_or(d.max_epochs),
            // a short run keeps the default rule meaningful
            patience: patience.unwrap_or(d.patience.min(max_epochs.unwrap_or(d.max_epochs))),
            beta1: cfg.pick("beta1", args.beta1, d.beta1)?,
            beta2: cfg.pick("beta2", args.beta2, d.beta2)?,
            eps: cfg.pick("eps", args.eps, d.eps)?,
            seed: cfg.pick("seed", args.seed, d.seed)?,
            resample_masks: cfg.pick("resample_masks", args.resample_masks, d.resample_masks)?,
        },
        width_divisor: cfg.pick("width_divisor", args.width_divisor, 1)?,
        checkpoint_every: cfg.pick("checkpoint_every", args.checkpoint_every, 10)?,
        resume: cfg.pick_opt("resume", args.resume)?,
        overfit: cfg.pick("overfit", args.overfit, false)?,
    };
    cfg.finish()?;
    r.train.validate()?;
    if args.common.dry_run {
        println!("{}", serde_json::to_string_pretty(&r).expect("serializable"));
        return Ok(());
    }

    let dataset = read_dataset(&r.data)?;
    let train_records = dataset.train();
    let val_records = if r.overfit { dataset.train() } else { dataset.validation() };
    let mut train = Samples::<f32>::from_records(train_records)?;
    let val = Samples::<f32>::from_records(val_records)?;

    let mut trainer = match &r.resume {
        Some(path) => {
            let mut t = load_trainer(path)?;
            // only the stopping rule may change on resume
            if let Some(m) = max_epochs {
                t.config.max_epochs = m;
            }
            if let Some(p) = patience {
                t.config.patience = p;
            }
            t.config.validate()?;
            t
        }
        None => {
            let spec = UNetSpec::scaled(dataset.config.k, r.width_divisor);
            spec.validate()?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(r.train.seed, INIT_STREAM));
            Trainer::new(UNet::new(spec, &mut rng)?, r.train.clone())?
        }
    };
    trainer.model.set_exec(Exec::Parallel);
    trainer.best.set_exec(Exec::Parallel);
    fresh_dir(&out, args.common.force || r.resume.is_some())?;

    let c = &trainer.config;
    println!(
        "training {} parameters on {} rooms (validation {}): lr {} batch {} max_epochs {} patience {} seed {} resample_masks {}{}",
        trainer.model.param_count(),
        train.len(),
        val.len(),
        c.lr,
        c.batch,
        c.max_epochs,
        c.patience,
        c.seed,
        c.resample_masks,
        if trainer.epoch > 0 { format!(", resuming after epoch {}", trainer.epoch) } else { String::new() }
    );

    let best_path = out.join("best.ckpt");
    let last_path = out.join("last.ckpt");
    let mut failure: Option<NetError> = None;
    let every = r.checkpoint_every;
    let reason = trainer.run(&mut train, &val, |t, s| {
        println!(
            "epoch {:>5}  train {:.6e}  val {:.6e}{}",
            s.epoch,
            s.train_loss,
            s.val_loss,
            if s.improved { "  *" } else { "" }
        );
        let saved = if s.improved { save_model(&best_path, &t.model) } else { Ok(()) }
            .and_then(|()| if every > 0 && s.epoch % every == 0 { save_trainer(&last_path, t) } else { Ok(()) });
        match saved {
            Ok(()) => ControlFlow::Continue(()),
            Err(e) => {
                failure = Some(e);
                ControlFlow::Break(())
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    save_trainer(&last_path, &trainer)?;
    if trainer.best_epoch > 0 && !best_path.exists() {
        save_model(&best_path, &trainer.best)?;
    }
    write_text(&out.join("history.csv"), &history_csv(&trainer.history))?;
    let summary = Summary {
        stop_reason: reason.to_string(),
        epochs: trainer.epoch,
        best_epoch: trainer.best_epoch,
        best_val_loss: trainer.best_val,
        first_train_loss: trainer.history.first().map(|s| s.train_loss),
        last_train_loss: trainer.history.last().map(|s| s.train_loss),
        param_count: trainer.model.param_count(),
        spec: &trainer.model.spec,
        config: &trainer.config,
    };
    write_text(
        &out.join("summary.json"),
        &(serde_json::to_string_pretty(&summary).expect("serializable") + "\n"),
    )?;
    println!(
        "stopped: {reason} after {} epochs; best validation loss {:.6e} at epoch {}",
        trainer.epoch, trainer.best_val, trainer.best_epoch
    );
    started.write(&out, Some(trainer.config.seed), &serde_json::to_value(&r).expect("serializable"))
}
