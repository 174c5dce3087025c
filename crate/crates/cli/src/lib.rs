//! Command-line runner for the Taylor-Green, lid-driven cavity and porous
//! medium benchmarks.

pub mod config;
pub mod run;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use dolb::accelerated::DispatchSet;
use dolb::perfmodel::{bytes_per_cell, max_l, measure_mlups, memory_fraction, peak_glups, MonotonicClock, PerfReport};
use dolb::{Precision, Real};

use config::{resolve, FileConfig, Overrides, RunPlan};

#[derive(Debug, Parser)]
#[command(name = "dolb", version, about = "D3Q19 lattice Boltzmann benchmark runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Runs a case and writes series.csv, perf.csv, manifest.toml and dumps.
    Run {
        #[arg(long, short)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Re-runs the plan recorded in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fails unless the new series.csv equals the recorded one byte for byte.
        #[arg(long)]
        verify: bool,
    },
    /// Prints the dynamics chains the case needs in the kernel's dispatch set.
    ShowModels {
        #[arg(long, short)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// Stores the list as `[dispatch] models` in the configuration file.
        #[arg(long, requires = "config")]
        write: bool,
    },
    /// Measures MLUPS and prints the bandwidth model for the configured device.
    Perf {
        #[arg(long, short)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

pub fn plan_from(config: Option<&Path>, overrides: &Overrides) -> Result<RunPlan> {
    let file = match config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    resolve(&file, overrides)
}

pub fn required_models(plan: &RunPlan) -> Result<Vec<String>> {
    Ok(plan.config.setup()?.required_models())
}

/// Sets `[dispatch] models` in the configuration file, keeping its layout.
pub fn write_models(path: &Path, models: &[String]) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut doc: toml_edit::DocumentMut = text.parse().with_context(|| format!("parsing {}", path.display()))?;
    let list: toml_edit::Array = models.iter().map(String::as_str).collect();
    if !doc.contains_table("dispatch") {
        doc["dispatch"] = toml_edit::table();
    }
    doc["dispatch"]["models"] = toml_edit::value(list);
    fs::write(path, doc.to_string())?;
    Ok(())
}

fn perf_typed<T: Real>(plan: &RunPlan) -> Result<PerfReport> {
    let setup = plan.config.setup()?;
    let dispatch = DispatchSet::new(run::dispatch_names(plan, &setup))?;
    let mut lattice = setup.build_accelerated::<T>(plan.config.block_grid, plan.config.workers)?;
    let device = run::device(&plan.perf)?;
    let peak = device.as_ref().map(|d| (d, plan.config.precision));
    let cells = lattice.num_cells() as u64;
    Ok(measure_mlups(
        cells,
        plan.perf.warmup,
        plan.perf.steps,
        peak,
        &mut MonotonicClock::default(),
        || lattice.collide_and_stream(&dispatch),
    )?)
}

pub fn perf(plan: &RunPlan, out: &mut dyn Write) -> Result<PerfReport> {
    let report = match plan.config.precision {
        Precision::Single => perf_typed::<f32>(plan)?,
        Precision::Double => perf_typed::<f64>(plan)?,
    };
    let p = plan.config.precision;
    writeln!(out, "{}", PerfReport::csv_header())?;
    writeln!(out, "{}", report.csv_row())?;
    if let Some(d) = run::device(&plan.perf)? {
        writeln!(
            out,
            "{}: {} bytes/cell, peak {:.3} GLUPS, L={} uses {:.2}% of memory, largest L {}",
            d.name,
            bytes_per_cell(p),
            peak_glups(&d, p),
            plan.config.l,
            100.0 * memory_fraction(&d, p, plan.config.l as u64),
            max_l(&d, p)
        )?;
    }
    fs::create_dir_all(&plan.out)?;
    fs::write(
        plan.out.join(run::PERF),
        format!("{}\n{}\n", PerfReport::csv_header(), report.csv_row()),
    )?;
    Ok(report)
}

/// Executes a parsed command line, writing human-readable output to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Run { config, overrides } => {
            let plan = plan_from(config.as_deref(), &overrides)?;
            let outcome = run::execute(&plan)?;
            let c = &plan.config;
            writeln!(
                out,
                "{} L={} Re={} Ma={} {} {}: {} steps, {:.2} MLUPS, output in {}",
                c.case,
                c.l,
                c.re,
                c.ma,
                c.collision,
                c.precision,
                plan.total_steps,
                outcome.perf.mlups,
                plan.out.display()
            )?;
            if let Some(d) = outcome.reference_divergence {
                writeln!(out, "reference check: max population difference {d:e}")?;
            }
        }
        Command::Replay {
            manifest,
            out: dir,
            verify,
        } => {
            let outcome = run::replay(&manifest, dir, verify)?;
            writeln!(
                out,
                "replayed {} steps into {}{}",
                outcome.manifest.plan.total_steps,
                outcome.manifest.plan.out.display(),
                if verify { "; series identical" } else { "" }
            )?;
        }
        Command::ShowModels {
            config,
            overrides,
            write,
        } => {
            let plan = plan_from(config.as_deref(), &overrides)?;
            let models = required_models(&plan)?;
            for m in &models {
                writeln!(out, "{m}")?;
            }
            if write {
                let path = config.expect("clap requires --config with --write");
                write_models(&path, &models)?;
                writeln!(out, "wrote {} models to {}", models.len(), path.display())?;
            }
        }
        Command::Perf { config, overrides } => {
            let plan = plan_from(config.as_deref(), &overrides)?;
            perf(&plan, out)?;
        }
    }
    Ok(())
}
