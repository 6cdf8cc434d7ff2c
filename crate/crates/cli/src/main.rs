use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Parser;

use rachsim_cli::{
    analytic_table, figure_preset, parse_n_spec, preset_n_values, render_csv,
    run_sweep_with_progress, write_csv, write_dat_files, PointRow, SweepSpec,
};
use rachsim_core::{parse_config_str, Scheme, SchemeConfig, SystemConfig};

/// Seeded sweeps and closed-form tables for LTE random access under a
/// synchronous activation burst: baseline and dynamic RAO allocation
/// against q-ary tree splitting.
#[derive(Parser, Debug)]
#[command(name = "rachsim", version)]
struct Cli {
    /// Key = value config file; unset keys keep the built-in defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Scheme to sweep; repeat the flag to compare several.
    /// Defaults to the config file's scheme, else tree.
    #[arg(long = "scheme", value_parser = ["baseline", "dynamic", "tree"])]
    schemes: Vec<String>,

    /// Split factor for tree entries (must divide the preamble count).
    #[arg(long)]
    q: Option<u16>,

    /// Device counts: "5000", "1000,2000" or "1000..30000:5000".
    #[arg(long)]
    n: Option<String>,

    /// Simulation repeats per sweep point.
    #[arg(long)]
    runs: Option<u32>,

    /// Base seed; run r of every point uses seed base + r.
    #[arg(long)]
    seed: Option<u64>,

    /// Write the CSV here plus gnuplot .dat companions alongside
    /// (default: CSV to standard output, no .dat files).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Emit the closed-form tables only; no simulation runs.
    #[arg(long)]
    analytic_only: bool,

    /// Preset sweep reproducing one results figure:
    /// 4 outage, 5 transmissions, 6 delay, 7 splitting rounds, 8 resources.
    #[arg(long, value_parser = clap::value_parser!(u8).range(4..=8))]
    fig: Option<u8>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn build_spec(cli: &Cli, sys: SystemConfig, file_scheme: Option<SchemeConfig>) -> Result<SweepSpec> {
    let mut spec = match cli.fig {
        Some(fig) => figure_preset(fig, sys).expect("clap bounds the figure number"),
        None => SweepSpec {
            sys,
            schemes: Vec::new(),
            n_values: preset_n_values(),
            runs_per_point: 100,
            base_seed: 1,
        },
    };

    // A scheme named on the command line reuses the config file's layout
    // settings when the file configures that same scheme.
    let named = |name: &str| -> SchemeConfig {
        let canonical = match name {
            "baseline" => SchemeConfig::baseline(),
            "dynamic" => SchemeConfig::dynamic(),
            _ => SchemeConfig::tree_split(cli.q.unwrap_or(6)),
        };
        match &file_scheme {
            Some(fs) if fs.scheme == canonical.scheme => SchemeConfig {
                split_factor: cli.q.map(Some).unwrap_or(fs.split_factor),
                ..*fs
            },
            _ => canonical,
        }
    };
    if !cli.schemes.is_empty() {
        spec.schemes = cli.schemes.iter().map(|s| named(s)).collect();
    } else if spec.schemes.is_empty() {
        spec.schemes = vec![match &file_scheme {
            Some(fs) => SchemeConfig {
                split_factor: match fs.scheme {
                    Scheme::TreeSplit => cli.q.map(Some).unwrap_or(fs.split_factor),
                    _ => fs.split_factor,
                },
                ..*fs
            },
            None => SchemeConfig::tree_split(cli.q.unwrap_or(6)),
        }];
    }

    if let Some(n) = &cli.n {
        spec.n_values = parse_n_spec(n)?;
    }
    if let Some(runs) = cli.runs {
        spec.runs_per_point = runs;
    }
    if let Some(seed) = cli.seed {
        spec.base_seed = seed;
    }
    Ok(spec)
}

fn emit(rows: &[PointRow], out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            write_csv(rows, path)?;
            let prefix = path.with_extension("");
            let written = write_dat_files(&prefix, rows)
                .with_context(|| format!("writing .dat files next to {}", path.display()))?;
            eprintln!("wrote {}", path.display());
            for p in written {
                eprintln!("wrote {}", p.display());
            }
        }
        None => print!("{}", render_csv(rows)),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let (sys, file_scheme) = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let (sys, scheme) = parse_config_str(&text)?;
            (sys, Some(scheme))
        }
        None => (SystemConfig::default(), None),
    };

    let spec = build_spec(&cli, sys, file_scheme)?;

    if cli.analytic_only {
        let mut qs: Vec<u16> = Vec::new();
        for s in &spec.schemes {
            if let Some(q) = s.split_factor {
                if !qs.contains(&q) {
                    qs.push(q);
                }
            }
        }
        if qs.is_empty() {
            bail!("--analytic-only needs a tree scheme (the model has no baseline form)");
        }
        let rows = analytic_table(&spec.sys, &qs, &spec.n_values);
        emit(&rows, cli.out.as_ref())?;
        return Ok(ExitCode::SUCCESS);
    }

    let started = Instant::now();
    let report = run_sweep_with_progress(&spec, |done, total| {
        let tick = (total / 20).max(1);
        if done % tick == 0 || done == total {
            eprintln!(
                "{done}/{total} runs in {:.1}s",
                started.elapsed().as_secs_f64()
            );
        }
    })?;

    emit(&report.rows, cli.out.as_ref())?;
    for failure in &report.failures {
        eprintln!("failed: {failure}");
    }
    Ok(if report.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
