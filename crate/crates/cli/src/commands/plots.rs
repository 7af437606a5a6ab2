use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rtf_core::eval::{read_csv, MetricReport, SweepKey};

use crate::cli::PlotsArgs;
use crate::error::{CliError, Result};
use crate::provenance::{ensure_dir, Run};
use crate::render::{line_chart_svg, Panel, Series};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    T60,
    Mics,
    All,
}

impl Kind {
    fn of(key: SweepKey) -> Kind {
        match key {
            SweepKey::T60(_) => Kind::T60,
            SweepKey::Mics(_) => Kind::Mics,
            SweepKey::All => Kind::All,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Kind::T60 => "t60",
            Kind::Mics => "mics",
            Kind::All => "all",
        }
    }

    fn level(key: SweepKey) -> f64 {
        match key {
            SweepKey::T60(t) => t,
            SweepKey::Mics(m) => m as f64,
            SweepKey::All => 0.0,
        }
    }
}

const METRICS: [(&str, &str); 2] = [("complex", "NMSE complex [dB]"), ("abs", "NMSE magnitude [dB]")];

fn values<'a>(r: &'a MetricReport, metric: &str) -> &'a [f64] {
    if metric == "complex" {
        &r.nmse_complex
    } else {
        &r.nmse_abs
    }
}

fn mean(r: &MetricReport, metric: &str) -> f64 {
    if metric == "complex" {
        r.mean_complex()
    } else {
        r.mean_abs()
    }
}

/// Per sweep kind and metric: one panel per sweep level with one curve per
/// method, plus a frequency-averaged chart over the levels. Returns the files written.
pub fn render_reports(reports: &[MetricReport], out: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    let mut methods: Vec<String> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let mut written = Vec::new();
    for kind in [Kind::T60, Kind::Mics, Kind::All] {
        let group: Vec<&MetricReport> = reports.iter().filter(|r| Kind::of(r.key) == kind).collect();
        if group.is_empty() {
            continue;
        }
        let mut keys: Vec<SweepKey> = Vec::new();
        for r in &group {
            if !keys.contains(&r.key) {
                keys.push(r.key);
            }
        }
        for (metric, y_label) in METRICS {
            let panels: Vec<Panel> = keys
                .iter()
                .map(|&key| Panel {
                    title: key.to_string(),
                    x_label: "frequency [Hz]".into(),
                    y_label: y_label.into(),
                    series: group
                        .iter()
                        .filter(|r| r.key == key)
                        .map(|r| Series {
                            label: r.method.clone(),
                            points: r.freqs.iter().copied().zip(values(r, metric).iter().copied()).collect(),
                        })
                        .collect(),
                })
                .collect();
            let path = out.join(format!("{}_{metric}.svg", kind.name()));
            line_chart_svg(&path, &panels, &methods)?;
            written.push(path);

            if kind != Kind::All {
                let summary = Panel {
                    title: format!("frequency-averaged, {} sweep", kind.name()),
                    x_label: if kind == Kind::T60 { "T60 [s]".into() } else { "microphones".into() },
                    y_label: y_label.into(),
                    series: methods
                        .iter()
                        .map(|m| Series {
                            label: m.clone(),
                            points: group
                                .iter()
                                .filter(|r| &r.method == m)
                                .map(|r| (Kind::level(r.key), mean(r, metric)))
                                .collect(),
                        })
                        .filter(|s| !s.points.is_empty())
                        .collect(),
                };
                let path = out.join(format!("{}_{metric}_mean.svg", kind.name()));
                line_chart_svg(&path, &[summary], &methods)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

pub fn run(args: PlotsArgs) -> Result<()> {
    let started = Run::start("plots");
    let mut reports = Vec::new();
    for path in &args.inputs {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let parsed = read_csv(BufReader::new(file)).map_err(|e| match e {
            rtf_core::Error::Format(m) => rtf_core::Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })?;
        reports.extend(parsed);
    }
    if reports.is_empty() {
        return Err(CliError::usage("the input files contain no metric rows"));
    }
    let written = render_reports(&reports, &args.out)?;
    for p in &written {
        println!("{}", p.display());
    }
    let config = serde_json::json!({ "inputs": args.inputs, "out": args.out });
    started.write(&args.out, None, &config)
}
