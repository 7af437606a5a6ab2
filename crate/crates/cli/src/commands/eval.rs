use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rtf_core::dataset::{read_dataset, Dataset, SampleRecord, MIC_COUNTS, T60_LEVELS};
use rtf_core::eval::{score_records, sweep_mics, sweep_t60, write_csv, write_room_csv, EvalSet, MetricReport, Reconstructor, SweepKey};
use rtf_core::kernel::{KernelRidge, DEFAULT_LAMBDA};
use rtf_core::Exec;
use rtf_cvnn::checkpoint::load_model;
use rtf_cvnn::{CvnnReconstructor, NetError};
use serde::Serialize;

use super::out_dir;
use super::plots::render_reports;
use crate::cli::{CompareArgs, EvalArgs, SweepArgs};
use crate::config::FlatConfig;
use crate::error::{CliError, Result};
use crate::provenance::{ensure_dir, Run};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum SweepKind {
    Mics,
    T60,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum Split {
    Validation,
    Train,
    All,
}

#[derive(Debug, Serialize)]
struct Resolved {
    methods: Vec<String>,
    data: PathBuf,
    checkpoint: Option<PathBuf>,
    sweep: SweepKind,
    mics: Vec<usize>,
    t60: Vec<f64>,
    m: usize,
    lambda: f64,
    split: Split,
    limit: Option<usize>,
    seed: u64,
}

fn resolve(methods: Vec<String>, a: SweepArgs, cfg: &mut FlatConfig) -> Result<Resolved> {
    let sweep = match cfg.pick("sweep", a.sweep, "mics".to_string())?.as_str() {
        "mics" => SweepKind::Mics,
        "t60" => SweepKind::T60,
        "none" => SweepKind::None,
        other => return Err(CliError::usage(format!("unknown sweep `{other}` (mics, t60 or none)"))),
    };
    let split = match cfg.pick("split", a.split, "validation".to_string())?.as_str() {
        "validation" => Split::Validation,
        "train" => Split::Train,
        "all" => Split::All,
        other => return Err(CliError::usage(format!("unknown split `{other}` (validation, train or all)"))),
    };
    let r = Resolved {
        methods,
        data: cfg
            .pick_opt("data", a.data)?
            .ok_or_else(|| CliError::usage("a dataset directory is required (--data)"))?,
        checkpoint: cfg.pick_opt("checkpoint", a.checkpoint)?,
        sweep,
        mics: cfg.pick_list("mics", a.mics, MIC_COUNTS.to_vec())?,
        t60: cfg.pick_list("t60", a.t60, T60_LEVELS.to_vec())?,
        m: cfg.pick("m", a.m, 55)?,
        lambda: cfg.pick("lambda", a.lambda, DEFAULT_LAMBDA)?,
        split,
        limit: cfg.pick_opt("limit", a.limit)?,
        seed: cfg.pick("seed", a.seed, 0)?,
    };
    if r.methods.is_empty() {
        return Err(CliError::usage("no methods requested"));
    }
    if !(r.lambda > 0.0 && r.lambda.is_finite()) {
        return Err(CliError::usage(format!("--lambda must be positive, got {}", r.lambda)));
    }
    if r.limit == Some(0) {
        return Err(CliError::usage("--limit must be at least 1"));
    }
    Ok(r)
}

fn method(name: &str, r: &Resolved, dataset: &Dataset) -> Result<Box<dyn Reconstructor>> {
    match name {
        // rooms already run in parallel
        "kernel" => Ok(Box::new(KernelRidge {
            lambda: r.lambda,
            exec: Exec::Sequential,
        })),
        "cvnn" => {
            let path = r
                .checkpoint
                .as_deref()
                .ok_or_else(|| CliError::usage("the cvnn method needs --checkpoint"))?;
            let mut model = load_model(path)?;
            let k = dataset.config.k;
            if model.spec.in_channels != 2 * k || model.spec.out_channels != k {
                return Err(NetError::Shape(format!(
                    "{} was trained for K = {}, the dataset has K = {k}",
                    path.display(),
                    model.spec.out_channels
                ))
                .into());
            }
            model.set_exec(Exec::Sequential);
            Ok(Box::new(CvnnReconstructor::new(model)))
        }
        other => Err(CliError::usage(format!("unknown method `{other}` (kernel or cvnn)"))),
    }
}

fn select(dataset: &Dataset, split: Split, limit: Option<usize>) -> Result<&[SampleRecord]> {
    let records = match split {
        Split::Validation => dataset.validation(),
        Split::Train => dataset.train(),
        Split::All => &dataset.records[..],
    };
    let n = limit.map_or(records.len(), |l| l.min(records.len()));
    if n == 0 {
        return Err(CliError::usage(format!("the {split:?} split is empty").to_lowercase()));
    }
    Ok(&records[..n])
}

fn evaluate(r: &Resolved) -> Result<Vec<MetricReport>> {
    let dataset = read_dataset(&r.data)?;
    let records = select(&dataset, r.split, r.limit)?;
    let methods = r
        .methods
        .iter()
        .map(|name| method(name, r, &dataset))
        .collect::<Result<Vec<_>>>()?;
    println!(
        "scoring {} on {} rooms, sweep {}",
        r.methods.join(", "),
        records.len(),
        serde_json::to_value(r.sweep).expect("serializable").as_str().unwrap_or_default()
    );
    let mut reports = Vec::new();
    match r.sweep {
        SweepKind::Mics => {
            for m in &methods {
                reports.extend(sweep_mics(m.as_ref(), records, &r.mics, r.seed, Exec::Parallel)?);
            }
        }
        SweepKind::T60 => {
            let opts = dataset.config.sim_options(Exec::Sequential);
            let resimulated = r
                .t60
                .iter()
                .map(|&t60| Exec::Parallel.try_map(records.len(), |i| records[i].with_t60(t60, &opts)))
                .collect::<rtf_core::Result<Vec<_>>>()?;
            let sets: Vec<EvalSet<'_>> = r
                .t60
                .iter()
                .zip(&resimulated)
                .map(|(&t60, records)| EvalSet { t60, records })
                .collect();
            for m in &methods {
                reports.extend(sweep_t60(m.as_ref(), &sets, &r.t60, r.m, r.seed, Exec::Parallel)?);
            }
        }
        SweepKind::None => {
            for m in &methods {
                let rooms = score_records(m.as_ref(), records, None, r.seed, Exec::Parallel)?;
                reports.push(MetricReport::aggregate(m.name(), SweepKey::All, &dataset.freqs, rooms)?);
            }
        }
    }
    for rep in &reports {
        println!(
            "{:<8} {:<10} mean NMSE complex {:>8.3} dB  abs {:>8.3} dB  ({} rooms)",
            rep.method,
            rep.key.to_string(),
            rep.mean_complex(),
            rep.mean_abs(),
            rep.n_rooms
        );
    }
    Ok(reports)
}

fn write_reports(out: &Path, reports: &[MetricReport]) -> Result<()> {
    ensure_dir(out)?;
    for (name, rooms) in [("metrics.csv", false), ("rooms.csv", true)] {
        let path = out.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let written = if rooms { write_room_csv(&mut w, reports) } else { write_csv(&mut w, reports) };
        written
            .and_then(|()| std::io::Write::flush(&mut w))
            .map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

pub fn run_eval(mut args: EvalArgs) -> Result<()> {
    let started = Run::start("eval");
    let mut cfg = FlatConfig::load(args.common.config.as_deref())?;
    let out = out_dir(args.common.out.take(), &mut cfg)?;
    let method = cfg.pick("method", args.method, "kernel".to_string())?;
    let r = resolve(vec![method], args.sweep, &mut cfg)?;
    cfg.finish()?;
    let reports = evaluate(&r)?;
    write_reports(&out, &reports)?;
    started.write(&out, Some(r.seed), &serde_json::to_value(&r).expect("serializable"))
}

pub fn run_compare(mut args: CompareArgs) -> Result<()> {
    let started = Run::start("compare");
    let mut cfg = FlatConfig::load(args.common.config.as_deref())?;
    let out = out_dir(args.common.out.take(), &mut cfg)?;
    let methods = cfg.pick_list("methods", args.methods, vec!["kernel".into(), "cvnn".into()])?;
    let r = resolve(methods, args.sweep, &mut cfg)?;
    cfg.finish()?;
    let reports = evaluate(&r)?;
    write_reports(&out, &reports)?;
    let written = render_reports(&reports, &out)?;
    println!("wrote metrics.csv, rooms.csv and {} plots to {}", written.len(), out.display());
    started.write(&out, Some(r.seed), &serde_json::to_value(&r).expect("serializable"))
}
