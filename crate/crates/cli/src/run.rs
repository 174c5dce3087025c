//! Executes a [`RunPlan`] and writes its artifacts.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use dolb::accelerated::DispatchSet;
use dolb::cases::{cavity_lines, flow_diagnostics, measure_permeability, CaseKind, CaseSetup};
use dolb::diagnostics::{averaged_profiles, write_profiles_csv, AxisLine, DiagnosticsSeries, SeriesRow, VectorField};
use dolb::multiblock::MultiBlockLattice;
use dolb::perfmodel::{peak_glups, DeviceCatalog, DeviceSpec, PerfReport};
use dolb::reference::ReferenceLattice;
use dolb::{Precision, Real};
use serde::{Deserialize, Serialize};

use crate::config::{PerfSettings, RunPlan};

/// Largest grid the array-of-structures cross-check runs on.
pub const REFERENCE_CHECK_MAX_CELLS: usize = 1 << 18;

pub const MANIFEST: &str = "manifest.toml";
pub const SERIES: &str = "series.csv";
pub const PERF: &str = "perf.csv";
pub const PROFILES: &str = "profiles.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub tag: u32,
    pub chain: String,
}

/// Everything needed to reproduce a run, plus an index of what it wrote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub dispatch: Vec<String>,
    pub files: Vec<String>,
    pub plan: RunPlan,
    pub registry: Vec<RegistryEntry>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub series: DiagnosticsSeries,
    pub perf: PerfReport,
    pub manifest: RunManifest,
    pub reference_divergence: Option<f64>,
}

pub fn device(perf: &PerfSettings) -> Result<Option<DeviceSpec>> {
    let Some(name) = &perf.device else {
        return Ok(None);
    };
    let mut catalog = match &perf.catalog {
        Some(path) => {
            DeviceCatalog::parse(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?
        }
        None => DeviceCatalog::default(),
    };
    if let Some(bw) = perf.host_bandwidth_gbs {
        catalog = catalog.with_host(bw * 1e9, perf.host_capacity_gb.unwrap_or(1.0) * 1e9)?;
    }
    Ok(Some(catalog.get(name)?.clone()))
}

pub fn dispatch_names(plan: &RunPlan, setup: &CaseSetup) -> Vec<String> {
    plan.dispatch.clone().unwrap_or_else(|| setup.required_models())
}

pub fn execute(plan: &RunPlan) -> Result<RunOutcome> {
    match plan.config.precision {
        Precision::Single => execute_typed::<f32>(plan),
        Precision::Double => execute_typed::<f64>(plan),
    }
}

/// Restricts a field to one line so that snapshots stay small.
fn line_field(u: &[[f64; 3]], dims: [usize; 3], line: &AxisLine) -> VectorField {
    let mut d = [1; 3];
    d[line.axis] = dims[line.axis];
    VectorField::from_fn(d, |q| {
        let mut p = line.through;
        p[line.axis] = q[line.axis];
        u[p[0] + dims[0] * (p[1] + dims[1] * p[2])]
    })
}

struct Sampler<'a> {
    plan: &'a RunPlan,
    setup: &'a CaseSetup,
    k0: f64,
    eps0: f64,
}

impl Sampler<'_> {
    fn extra_names(&self, with_reference: bool) -> Vec<String> {
        let mut names: Vec<&str> = match self.plan.config.case {
            CaseKind::Tgv => vec!["k_over_k0", "eps_over_eps0"],
            CaseKind::Cavity => vec![],
            CaseKind::Porous => vec!["k_darcy", "k_fluid", "mean_velocity", "dp"],
        };
        if with_reference {
            names.push("ref_divergence");
        }
        names.into_iter().map(String::from).collect()
    }

    /// `None` while the permeability is still undefined (no pressure drop yet).
    fn row<T: Real>(
        &self,
        lattice: &MultiBlockLattice<T>,
        step: u64,
        divergence: Option<f64>,
    ) -> Result<Option<SeriesRow>> {
        let (k, eps) = flow_diagnostics(lattice)?;
        let mut extra = match self.plan.config.case {
            CaseKind::Tgv => vec![k / self.k0, eps / self.eps0],
            CaseKind::Cavity => vec![],
            CaseKind::Porous => {
                let layout = self.setup.porous.as_ref().context("porous layout missing")?;
                let (rho, u) = lattice.macroscopic();
                match measure_permeability(layout, lattice.dims(), &rho, &u) {
                    Ok(r) => vec![r.darcy, r.fluid, r.mean_velocity, r.dp],
                    Err(dolb::Error::Undefined(_)) => return Ok(None),
                    Err(e) => return Err(e.into()),
                }
            }
        };
        extra.extend(divergence);
        Ok(Some(SeriesRow {
            step,
            time: step as f64 / self.plan.config.tc_steps(),
            k,
            eps,
            extra,
        }))
    }
}

fn write_dump<T: Real>(lattice: &MultiBlockLattice<T>, out: &Path, step: u64, files: &mut Vec<String>) -> Result<()> {
    let name = format!("dump_{step:08}.dolb");
    lattice
        .dump()
        .write_to(BufWriter::new(File::create(out.join(&name))?))?;
    files.push(name);
    Ok(())
}

fn execute_typed<T: Real>(plan: &RunPlan) -> Result<RunOutcome> {
    let cfg = &plan.config;
    let setup = cfg.setup()?;
    let names = dispatch_names(plan, &setup);
    let dispatch = DispatchSet::new(&names)?;
    let mut lattice = setup.build_accelerated::<T>(cfg.block_grid, cfg.workers)?;
    let mut reference: Option<ReferenceLattice<T>> = if plan.reference_check {
        if setup.num_cells() > REFERENCE_CHECK_MAX_CELLS {
            bail!(
                "the reference check is limited to {REFERENCE_CHECK_MAX_CELLS} cells; this grid has {}",
                setup.num_cells()
            );
        }
        Some(setup.build_reference()?)
    } else {
        None
    };
    let divergence = |lattice: &MultiBlockLattice<T>, r: &Option<ReferenceLattice<T>>| -> Result<Option<f64>> {
        r.as_ref()
            .map(|r| r.dump().max_abs_diff(&lattice.dump()))
            .transpose()
            .map_err(Into::into)
    };
    fs::create_dir_all(&plan.out).with_context(|| format!("creating {}", plan.out.display()))?;
    let mut files = Vec::new();

    let (k0, eps0) = flow_diagnostics(&lattice)?;
    let sampler = Sampler {
        plan,
        setup: &setup,
        k0,
        eps0,
    };
    let mut series = DiagnosticsSeries::new(sampler.extra_names(reference.is_some()));
    if let Some(row) = sampler.row(&lattice, 0, divergence(&lattice, &reference)?)? {
        series.push(row)?;
    }
    if plan.dump_every.is_some() {
        write_dump(&lattice, &plan.out, 0, &mut files)?;
    }

    let lines = if cfg.case == CaseKind::Cavity {
        cavity_lines(cfg.l)
    } else {
        Vec::new()
    };
    let profile_every = cfg.tc_steps().round().max(1.0) as u64;
    let mut snapshots: Vec<Vec<VectorField>> = vec![Vec::new(); lines.len()];
    let mut max_divergence: Option<f64> = None;

    let mut stepping = 0.0;
    for step in 1..=plan.total_steps {
        let t = Instant::now();
        lattice.collide_and_stream(&dispatch)?;
        stepping += t.elapsed().as_secs_f64();
        if let Some(r) = reference.as_mut() {
            r.collide_and_stream();
        }
        if step % plan.output_every == 0 || step == plan.total_steps {
            let d = divergence(&lattice, &reference)?;
            if let Some(d) = d {
                max_divergence = Some(max_divergence.map_or(d, |m: f64| m.max(d)));
            }
            if let Some(row) = sampler.row(&lattice, step, d)? {
                series.push(row)?;
            }
        }
        if plan.dump_every.is_some_and(|n| step % n == 0) {
            write_dump(&lattice, &plan.out, step, &mut files)?;
        }
        if !lines.is_empty() && step >= plan.average_from && (step - plan.average_from).is_multiple_of(profile_every) {
            let (_, u) = lattice.macroscopic();
            for (line, store) in lines.iter().zip(&mut snapshots) {
                store.push(line_field(&u, lattice.dims(), line));
            }
        }
    }

    series.write_csv(BufWriter::new(File::create(plan.out.join(SERIES))?))?;
    files.push(SERIES.into());

    if !lines.is_empty() && !snapshots[0].is_empty() {
        let mut rows = Vec::new();
        for (line, store) in lines.iter().zip(&snapshots) {
            let local = AxisLine {
                through: [0; 3],
                ..line.clone()
            };
            rows.extend(averaged_profiles(store, &[local])?);
        }
        write_profiles_csv(&rows, BufWriter::new(File::create(plan.out.join(PROFILES))?))?;
        files.push(PROFILES.into());
    }

    let cells = lattice.num_cells() as u64;
    let mut perf = PerfReport::from_timing(cells, plan.total_steps, stepping);
    if let Some(d) = device(&plan.perf)? {
        perf.fraction_of_peak = Some(perf.mlups / 1e3 / peak_glups(&d, cfg.precision));
    }
    fs::write(
        plan.out.join(PERF),
        format!("{}\n{}\n", PerfReport::csv_header(), perf.csv_row()),
    )?;
    files.push(PERF.into());

    files.push(MANIFEST.into());
    let registry = lattice.registry();
    let manifest = RunManifest {
        dispatch: names,
        files,
        plan: plan.clone(),
        registry: registry
            .chains()
            .iter()
            .enumerate()
            .map(|(tag, chain)| RegistryEntry {
                tag: tag as u32,
                chain: chain.clone(),
            })
            .collect(),
    };
    fs::write(plan.out.join(MANIFEST), toml::to_string(&manifest)?)?;

    Ok(RunOutcome {
        series,
        perf,
        manifest,
        reference_divergence: max_divergence,
    })
}

/// Re-runs the plan of `manifest` into `out` and, if `verify`, checks that
/// the new series is byte-identical to the recorded one.
pub fn replay(manifest_path: &Path, out: Option<PathBuf>, verify: bool) -> Result<RunOutcome> {
    let manifest = RunManifest::load(manifest_path)?;
    let recorded_dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut plan = manifest.plan.clone();
    plan.out = out.unwrap_or_else(|| recorded_dir.join("replay"));
    if plan.out == recorded_dir {
        bail!("replay output must differ from the recorded run directory");
    }
    let outcome = execute(&plan)?;
    if outcome.manifest.registry != manifest.registry {
        bail!("replayed registry differs from the recorded one");
    }
    if verify {
        let recorded = fs::read(recorded_dir.join(SERIES)).context("reading the recorded series")?;
        let replayed = fs::read(plan.out.join(SERIES))?;
        if recorded != replayed {
            bail!("replayed series differs from {}", recorded_dir.join(SERIES).display());
        }
    }
    Ok(outcome)
}
