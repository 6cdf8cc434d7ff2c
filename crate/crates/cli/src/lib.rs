//! Seeded sweep orchestration and table output for the access simulator.
//!
//! A sweep is a grid of (scheme, device count) points, each simulated
//! `runs_per_point` times with seeds `base_seed + run_index`, pooled into
//! one CSV row and joined with the closed-form predictions where the
//! splitting model applies. Runs execute in parallel but results are
//! ordered by (point, run index) before pooling, so the output bytes
//! never depend on scheduling.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use rachsim_core::{
    aggregate, pool, run_scenario, validate_config, RunMetrics, Scheme, SchemeConfig,
    SystemConfig, TreeModel,
};

pub const CSV_HEADER: &str = "scheme,q,n_devices,runs,outage_mean,outage_ci,tx_mean,tx_ci,\
                              delay_ms_mean,delay_ms_ci,traos_mean,traos_ci,dl_fraction,\
                              ul_fraction,analytic_po,analytic_t,analytic_that,analytic_r";

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub sys: SystemConfig,
    pub schemes: Vec<SchemeConfig>,
    pub n_values: Vec<u32>,
    pub runs_per_point: u32,
    pub base_seed: u64,
}

impl SweepSpec {
    fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            bail!("sweep needs at least one scheme");
        }
        if self.n_values.is_empty() {
            bail!("sweep needs at least one device count");
        }
        if !self.n_values.windows(2).all(|w| w[0] < w[1]) {
            bail!("device counts must be strictly ascending");
        }
        if self.runs_per_point == 0 {
            bail!("runs_per_point must be at least 1");
        }
        Ok(())
    }
}

/// Simulated columns of one CSV row; means with 95% half-widths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimColumns {
    pub outage_mean: f64,
    pub outage_ci: f64,
    pub tx_mean: f64,
    pub tx_ci: f64,
    pub delay_ms_mean: f64,
    pub delay_ms_ci: f64,
    pub traos_mean: f64,
    pub traos_ci: f64,
    pub dl_fraction: f64,
    pub ul_fraction: f64,
}

/// Closed-form columns, present only for splitting-scheme points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticColumns {
    pub po: f64,
    pub t: f64,
    /// Logarithmic approximation; absent where its domain ends (tiny N).
    pub t_hat: Option<f64>,
    pub r: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointRow {
    pub scheme_label: &'static str,
    pub q: Option<u16>,
    pub n_devices: u32,
    /// 0 marks an analytic-only row.
    pub runs: u32,
    pub sim: Option<SimColumns>,
    pub analytic: Option<AnalyticColumns>,
}

#[derive(Debug, Default)]
pub struct SweepReport {
    pub rows: Vec<PointRow>,
    /// One entry per point that could not be completed.
    pub failures: Vec<String>,
}

pub fn scheme_label(scheme: Scheme) -> &'static str {
    match scheme {
        Scheme::Baseline => "baseline",
        Scheme::Dynamic => "dynamic",
        Scheme::TreeSplit => "tree",
    }
}

fn analytic_for(sys: &SystemConfig, q: u16, n: u32) -> Option<AnalyticColumns> {
    let model = TreeModel::new(n as u64, sys.n_preambles, q).ok()?;
    Some(AnalyticColumns {
        po: model.outage_prob(sys.max_transmissions).ok()?,
        t: model.expected_transmissions(None),
        t_hat: model.approx_transmissions().ok(),
        r: model.expected_traos(),
    })
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepReport> {
    run_sweep_with_progress(spec, |_, _| {})
}

/// Runs the sweep with a completion callback `(finished_runs, total_runs)`,
/// invoked from worker threads.
pub fn run_sweep_with_progress(
    spec: &SweepSpec,
    progress: impl Fn(usize, usize) + Sync,
) -> Result<SweepReport> {
    spec.validate()?;

    struct Plan {
        cfg: rachsim_core::ValidatedConfig,
        label: &'static str,
        q: Option<u16>,
        n: u32,
    }
    let mut plans = Vec::new();
    for scheme in &spec.schemes {
        let cfg = validate_config(spec.sys, *scheme).map_err(|e| anyhow::anyhow!("{e}"))?;
        for &n in &spec.n_values {
            plans.push(Plan {
                cfg: cfg.clone(),
                label: scheme_label(scheme.scheme),
                q: scheme.split_factor,
                n,
            });
        }
    }

    let runs = spec.runs_per_point as usize;
    let jobs: Vec<(usize, u32)> = (0..plans.len())
        .flat_map(|p| (0..spec.runs_per_point).map(move |r| (p, r)))
        .collect();
    let total = jobs.len();
    let finished = AtomicUsize::new(0);

    let results: Vec<Result<RunMetrics, String>> = jobs
        .par_iter()
        .map(|&(p, r)| {
            let plan = &plans[p];
            let out = run_scenario(&plan.cfg, plan.n, spec.base_seed + r as u64)
                .map(|trace| aggregate(&trace, &plan.cfg.sys))
                .map_err(|e| e.to_string());
            progress(finished.fetch_add(1, Ordering::Relaxed) + 1, total);
            out
        })
        .collect();

    let mut report = SweepReport::default();
    for (p, plan) in plans.iter().enumerate() {
        let chunk = &results[p * runs..(p + 1) * runs];
        let point = match plan.q {
            Some(q) => format!("{} q={} N={}", plan.label, q, plan.n),
            None => format!("{} N={}", plan.label, plan.n),
        };
        let mut metrics = Vec::with_capacity(runs);
        let mut errors = chunk.iter().filter_map(|r| r.as_ref().err());
        if let Some(first) = errors.next() {
            report
                .failures
                .push(format!("{point}: {} ({} runs failed)", first, 1 + errors.count()));
            continue;
        }
        metrics.extend(chunk.iter().map(|r| *r.as_ref().unwrap()));

        let sim = if metrics.len() >= 2 {
            let pooled = match pool(&metrics) {
                Ok(p) => p,
                Err(e) => {
                    report.failures.push(format!("{point}: {e}"));
                    continue;
                }
            };
            SimColumns {
                outage_mean: pooled.outage.mean,
                outage_ci: pooled.outage.ci_half_width,
                tx_mean: pooled.tx.mean,
                tx_ci: pooled.tx.ci_half_width,
                delay_ms_mean: pooled.delay_ms.mean,
                delay_ms_ci: pooled.delay_ms.ci_half_width,
                traos_mean: pooled.traos.mean,
                traos_ci: pooled.traos.ci_half_width,
                dl_fraction: pooled.dl_fraction.mean,
                ul_fraction: pooled.ul_fraction.mean,
            }
        } else {
            let m = &metrics[0];
            SimColumns {
                outage_mean: m.outage_fraction,
                outage_ci: 0.0,
                tx_mean: m.mean_tx,
                tx_ci: 0.0,
                delay_ms_mean: m.mean_delay_ms,
                delay_ms_ci: 0.0,
                traos_mean: m.trao_count as f64,
                traos_ci: 0.0,
                dl_fraction: m.dl_fraction,
                ul_fraction: m.ul_fraction,
            }
        };
        report.rows.push(PointRow {
            scheme_label: plan.label,
            q: plan.q,
            n_devices: plan.n,
            runs: spec.runs_per_point,
            sim: Some(sim),
            analytic: plan.q.and_then(|q| analytic_for(&spec.sys, q, plan.n)),
        });
    }
    Ok(report)
}

/// Closed-form rows only, no simulation: one row per (q, N).
pub fn analytic_table(sys: &SystemConfig, qs: &[u16], n_values: &[u32]) -> Vec<PointRow> {
    let mut rows = Vec::new();
    for &q in qs {
        for &n in n_values {
            rows.push(PointRow {
                scheme_label: "tree",
                q: Some(q),
                n_devices: n,
                runs: 0,
                sim: None,
                analytic: analytic_for(sys, q, n),
            });
        }
    }
    rows
}

pub fn render_csv(rows: &[PointRow]) -> String {
    let mut out = String::with_capacity(64 + rows.len() * 160);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        match row.q {
            Some(q) => write!(out, "{},{}", row.scheme_label, q).unwrap(),
            None => write!(out, "{},", row.scheme_label).unwrap(),
        }
        write!(out, ",{},{}", row.n_devices, row.runs).unwrap();
        match &row.sim {
            Some(s) => write!(
                out,
                ",{},{},{},{},{},{},{},{},{},{}",
                s.outage_mean,
                s.outage_ci,
                s.tx_mean,
                s.tx_ci,
                s.delay_ms_mean,
                s.delay_ms_ci,
                s.traos_mean,
                s.traos_ci,
                s.dl_fraction,
                s.ul_fraction
            )
            .unwrap(),
            None => out.push_str(",,,,,,,,,,"),
        }
        match &row.analytic {
            Some(a) => {
                write!(out, ",{},{}", a.po, a.t).unwrap();
                match a.t_hat {
                    Some(t_hat) => write!(out, ",{t_hat}").unwrap(),
                    None => out.push(','),
                }
                write!(out, ",{}", a.r).unwrap();
            }
            None => out.push_str(",,,,"),
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(rows: &[PointRow], path: &Path) -> Result<()> {
    fs::write(path, render_csv(rows)).with_context(|| format!("writing {}", path.display()))
}

/// Device-count lists: "5000", "1000,2000,4000" or "1000..30000:5000".
pub fn parse_n_spec(text: &str) -> Result<Vec<u32>> {
    let text = text.trim();
    let parse_one = |s: &str| -> Result<u32> {
        s.trim()
            .parse::<u32>()
            .with_context(|| format!("bad device count {s:?}"))
    };
    if let Some((range, step)) = text.split_once(':') {
        let (start, end) = range
            .split_once("..")
            .with_context(|| format!("range {text:?} needs the form start..end:step"))?;
        let (start, end) = (parse_one(start)?, parse_one(end)?);
        let step = parse_one(step)?;
        if step == 0 {
            bail!("range step must be positive");
        }
        if start > end {
            bail!("range start {start} exceeds end {end}");
        }
        return Ok((start..=end).step_by(step as usize).collect());
    }
    text.split(',').map(parse_one).collect()
}

/// Device-count grid the writeup sweeps: 1000 then 5000..30000.
pub fn preset_n_values() -> Vec<u32> {
    vec![1000, 5000, 10000, 15000, 20000, 25000, 30000]
}

/// Canned sweeps behind `--fig`: the scheme mix of each results figure.
///   4 outage, 5 transmissions, 6 delay, 7 splitting rounds, 8 resources.
pub fn figure_preset(fig: u8, sys: SystemConfig) -> Option<SweepSpec> {
    let tree = SchemeConfig::tree_split;
    let schemes = match fig {
        4 => vec![
            SchemeConfig::baseline(),
            SchemeConfig::dynamic(),
            tree(2),
            tree(3),
            tree(6),
        ],
        5 | 6 => vec![SchemeConfig::dynamic(), tree(2), tree(3), tree(6)],
        7 => vec![tree(2), tree(3), tree(6)],
        8 => vec![SchemeConfig::dynamic(), tree(6)],
        _ => return None,
    };
    Some(SweepSpec {
        sys,
        schemes,
        n_values: preset_n_values(),
        runs_per_point: 100,
        base_seed: 1,
    })
}

/// Gnuplot companions to the CSV: one file per metric, one block per curve
/// (blank-line separated, `index`-addressable), analytic overlays as extra
/// columns where the model applies. Returns the files written.
pub fn write_dat_files(prefix: &Path, rows: &[PointRow]) -> io::Result<Vec<PathBuf>> {
    let mut curves: Vec<(&'static str, Option<u16>)> = Vec::new();
    for row in rows {
        if !curves.contains(&(row.scheme_label, row.q)) {
            curves.push((row.scheme_label, row.q));
        }
    }
    let curve_rows = |label: &'static str, q: Option<u16>| {
        rows.iter()
            .filter(move |r| r.scheme_label == label && r.q == q)
    };
    let curve_title = |label: &'static str, q: Option<u16>| match q {
        Some(q) => format!("# {label} q={q}"),
        None => format!("# {label}"),
    };

    // (suffix, line builder); a None line drops the row from that file.
    type LineFn = Box<dyn Fn(&PointRow) -> Option<String>>;
    let files: Vec<(&str, LineFn)> = vec![
        (
            "outage",
            Box::new(|r: &PointRow| {
                let s = r.sim.as_ref()?;
                let mut line = format!("{} {} {}", r.n_devices, s.outage_mean, s.outage_ci);
                if let Some(a) = &r.analytic {
                    write!(line, " {}", a.po).unwrap();
                }
                Some(line)
            }),
        ),
        (
            "transmissions",
            Box::new(|r: &PointRow| {
                let s = r.sim.as_ref()?;
                let mut line = format!("{} {} {}", r.n_devices, s.tx_mean, s.tx_ci);
                if let Some(a) = &r.analytic {
                    write!(line, " {}", a.t).unwrap();
                }
                Some(line)
            }),
        ),
        (
            "delay",
            Box::new(|r: &PointRow| {
                let s = r.sim.as_ref()?;
                Some(format!(
                    "{} {} {}",
                    r.n_devices, s.delay_ms_mean, s.delay_ms_ci
                ))
            }),
        ),
        (
            "traos",
            Box::new(|r: &PointRow| {
                let s = r.sim.as_ref()?;
                let mut line = format!("{} {} {}", r.n_devices, s.traos_mean, s.traos_ci);
                if let Some(a) = &r.analytic {
                    write!(line, " {}", a.r).unwrap();
                }
                Some(line)
            }),
        ),
        (
            "resources",
            Box::new(|r: &PointRow| {
                let s = r.sim.as_ref()?;
                Some(format!(
                    "{} {} {}",
                    r.n_devices, s.dl_fraction, s.ul_fraction
                ))
            }),
        ),
        (
            "analytic",
            Box::new(|r: &PointRow| {
                let a = r.analytic.as_ref()?;
                let t_hat = a.t_hat.map_or("nan".to_string(), |t| t.to_string());
                Some(format!("{} {} {} {t_hat} {}", r.n_devices, a.po, a.t, a.r))
            }),
        ),
    ];

    let stem = prefix
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep".to_string());
    let dir = prefix.parent().unwrap_or(Path::new("."));
    let mut written = Vec::new();
    for (suffix, line_of) in &files {
        let mut body = String::new();
        for &(label, q) in &curves {
            let lines: Vec<String> = curve_rows(label, q).filter_map(line_of).collect();
            if lines.is_empty() {
                continue;
            }
            if !body.is_empty() {
                body.push('\n');
            }
            body.push_str(&curve_title(label, q));
            body.push('\n');
            for line in lines {
                body.push_str(&line);
                body.push('\n');
            }
        }
        if body.is_empty() {
            continue;
        }
        let path = dir.join(format!("{stem}_{suffix}.dat"));
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
