//! Configuration files, command-line overrides and their resolution into a
//! [`RunPlan`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::Args;
use dolb::cases::{CaseConfig, CaseKind, CollisionKind, Drive, PorousConfig};
use dolb::Precision;
use serde::{Deserialize, Serialize};

/// A duration given either in steps (`500`) or in convective times (`12tc`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTime", into = "String")]
pub enum TimeSpec {
    Steps(u64),
    Convective(f64),
}

impl TimeSpec {
    pub fn steps(self, tc_steps: f64) -> u64 {
        match self {
            TimeSpec::Steps(n) => n,
            TimeSpec::Convective(t) => (t * tc_steps).round() as u64,
        }
    }
}

impl FromStr for TimeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("invalid time '{s}': expected a step count or convective times such as 12tc");
        let text = s.trim().to_ascii_lowercase();
        if let Some(value) = text.strip_suffix("tc") {
            let t: f64 = value.trim().parse().map_err(|_| bad())?;
            if !t.is_finite() || t < 0.0 {
                return Err(bad());
            }
            Ok(TimeSpec::Convective(t))
        } else {
            text.parse().map(TimeSpec::Steps).map_err(|_| bad())
        }
    }
}

impl fmt::Display for TimeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeSpec::Steps(n) => write!(f, "{n}"),
            TimeSpec::Convective(t) => write!(f, "{t}tc"),
        }
    }
}

impl From<TimeSpec> for String {
    fn from(t: TimeSpec) -> Self {
        t.to_string()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTime {
    Steps(u64),
    Text(String),
}

impl TryFrom<RawTime> for TimeSpec {
    type Error = String;

    fn try_from(raw: RawTime) -> Result<Self, Self::Error> {
        match raw {
            RawTime::Steps(n) => Ok(TimeSpec::Steps(n)),
            RawTime::Text(s) => s.parse(),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSection {
    pub kind: Option<CaseKind>,
    #[serde(rename = "L")]
    pub l: Option<usize>,
    #[serde(rename = "Re")]
    pub re: Option<f64>,
    #[serde(rename = "Ma")]
    pub ma: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub collision: Option<CollisionKind>,
    pub smagorinsky: Option<f64>,
    pub lambda: Option<f64>,
    pub omega_bulk_ho: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    pub precision: Option<Precision>,
    pub blocks: Option<[usize; 3]>,
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub tmax: Option<TimeSpec>,
    pub output_every: Option<TimeSpec>,
    pub dump_every: Option<TimeSpec>,
    /// Start of the profile averaging window (cavity).
    pub average_from: Option<TimeSpec>,
    pub out: Option<PathBuf>,
    pub reference_check: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispatchSection {
    pub models: Option<Vec<String>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerfSection {
    pub device: Option<String>,
    pub catalog: Option<PathBuf>,
    pub host_bandwidth_gbs: Option<f64>,
    pub host_capacity_gb: Option<f64>,
    pub warmup: Option<u64>,
    pub steps: Option<u64>,
}

/// Contents of a configuration file; every key is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub case: CaseSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub run: RunSection,
    pub porous: Option<PorousConfig>,
    #[serde(default)]
    pub dispatch: DispatchSection,
    #[serde(default)]
    pub perf: PerfSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn parse_triple(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || format!("expected three comma-separated counts such as 2,2,1, got '{s}'");
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| bad())?;
    }
    Ok(out)
}

/// Flags that take precedence over the configuration file.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    #[arg(long)]
    pub case: Option<CaseKind>,
    /// Resolution in cells (channel length for the plates geometry).
    #[arg(long = "L")]
    pub l: Option<usize>,
    #[arg(long = "Re")]
    pub re: Option<f64>,
    #[arg(long = "Ma")]
    pub ma: Option<f64>,
    #[arg(long)]
    pub collision: Option<CollisionKind>,
    /// Smagorinsky constant; 0 disables the eddy viscosity.
    #[arg(long)]
    pub smagorinsky: Option<f64>,
    /// f32 or f64.
    #[arg(long)]
    pub precision: Option<Precision>,
    /// Block grid, e.g. 2,2,1.
    #[arg(long, value_parser = parse_triple)]
    pub blocks: Option<[usize; 3]>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub drive: Option<Drive>,
    /// `plates` or the path of a raw 8-bit voxel file.
    #[arg(long)]
    pub geometry: Option<String>,
    /// Fluid layers between the plates.
    #[arg(long = "H")]
    pub h: Option<usize>,
    /// Run length: steps or convective times (e.g. 12tc).
    #[arg(long)]
    pub tmax: Option<TimeSpec>,
    /// Diagnostics cadence.
    #[arg(long)]
    pub output_every: Option<TimeSpec>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Field dump cadence.
    #[arg(long)]
    pub dump_every: Option<TimeSpec>,
    #[arg(long)]
    pub perf_device: Option<String>,
    /// Steps the array-of-structures lattice alongside and reports the
    /// largest population difference.
    #[arg(long)]
    pub reference_check: bool,
}

/// Performance-report settings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerfSettings {
    pub device: Option<String>,
    pub catalog: Option<PathBuf>,
    pub host_bandwidth_gbs: Option<f64>,
    pub host_capacity_gb: Option<f64>,
    pub warmup: u64,
    pub steps: u64,
}

/// Fully resolved run: everything needed to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub total_steps: u64,
    pub output_every: u64,
    pub dump_every: Option<u64>,
    pub average_from: u64,
    pub reference_check: bool,
    pub out: PathBuf,
    /// Explicit dispatch set; the case's required models when absent.
    pub dispatch: Option<Vec<String>>,
    pub perf: PerfSettings,
    pub config: CaseConfig,
}

fn default_config(kind: CaseKind) -> CaseConfig {
    match kind {
        CaseKind::Tgv => CaseConfig::tgv(64, 1600.0, 0.2),
        CaseKind::Cavity => CaseConfig::cavity(64, 1000.0, 0.1),
        CaseKind::Porous => CaseConfig::porous_plates(20, 11, Drive::Velocity),
    }
}

/// Applies `file` and then `flags` on top of the defaults of the selected case.
pub fn resolve(file: &FileConfig, flags: &Overrides) -> Result<RunPlan> {
    let Some(kind) = flags.case.or(file.case.kind) else {
        bail!("no case selected; pass --case or set [case] kind (valid: tgv, cavity, porous)");
    };
    let mut c = default_config(kind);
    macro_rules! set {
        ($field:expr, $flag:expr, $file:expr) => {
            if let Some(v) = $flag.clone().or($file.clone()) {
                $field = v;
            }
        };
    }
    set!(c.l, flags.l, file.case.l);
    set!(c.re, flags.re, file.case.re);
    set!(c.ma, flags.ma, file.case.ma);
    set!(c.collision, flags.collision, file.model.collision);
    set!(c.smagorinsky, flags.smagorinsky, file.model.smagorinsky);
    set!(c.lambda, None::<f64>, file.model.lambda);
    set!(c.omega_bulk_ho, None::<f64>, file.model.omega_bulk_ho);
    set!(c.precision, flags.precision, file.numerics.precision);
    set!(c.block_grid, flags.blocks, file.numerics.blocks);
    set!(c.workers, flags.workers, file.numerics.workers);
    if let Some(p) = &file.porous {
        c.porous = p.clone();
    }
    set!(c.porous.drive, flags.drive, None::<Drive>);
    set!(c.porous.geometry, flags.geometry, None::<String>);
    set!(c.porous.height, flags.h, None::<usize>);
    if c.workers == 0 {
        bail!("at least one worker is required");
    }
    c.omega()?;

    let tc = c.tc_steps();
    let tmax = flags.tmax.or(file.run.tmax).unwrap_or(TimeSpec::Convective(c.tmax_tc));
    let every = flags
        .output_every
        .or(file.run.output_every)
        .unwrap_or(TimeSpec::Convective(c.output_every_tc));
    let total_steps = tmax.steps(tc);
    let output_every = every.steps(tc);
    if output_every == 0 {
        bail!("output cadence {every} is shorter than one step");
    }
    let dump_every = match flags.dump_every.or(file.run.dump_every) {
        Some(t) if t.steps(tc) == 0 => bail!("dump cadence {t} is shorter than one step"),
        Some(t) => Some(t.steps(tc)),
        None => None,
    };
    let average_from = file
        .run
        .average_from
        .map_or(total_steps / 2, |t| t.steps(tc))
        .min(total_steps);
    c.tmax_tc = total_steps as f64 / tc;
    c.output_every_tc = output_every as f64 / tc;

    Ok(RunPlan {
        total_steps,
        output_every,
        dump_every,
        average_from,
        reference_check: flags.reference_check || file.run.reference_check.unwrap_or(false),
        out: flags
            .out
            .clone()
            .or(file.run.out.clone())
            .unwrap_or_else(|| "out".into()),
        dispatch: file.dispatch.models.clone(),
        perf: PerfSettings {
            device: flags.perf_device.clone().or(file.perf.device.clone()),
            catalog: file.perf.catalog.clone(),
            host_bandwidth_gbs: file.perf.host_bandwidth_gbs,
            host_capacity_gb: file.perf.host_capacity_gb,
            warmup: file.perf.warmup.unwrap_or(5),
            steps: file.perf.steps.unwrap_or(20),
        },
        config: c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_specs_parse() {
        assert_eq!("12tc".parse(), Ok(TimeSpec::Convective(12.0)));
        assert_eq!("0.25TC".parse(), Ok(TimeSpec::Convective(0.25)));
        assert_eq!("500".parse(), Ok(TimeSpec::Steps(500)));
        assert!("12 s".parse::<TimeSpec>().is_err());
        assert!("-1tc".parse::<TimeSpec>().is_err());
        assert_eq!(TimeSpec::Convective(1.5).steps(10.0), 15);
    }

    #[test]
    fn flags_override_file_keys() {
        let file: FileConfig =
            toml::from_str("[case]\nkind = \"tgv\"\nL = 32\nRe = 100\n[run]\ntmax = \"2tc\"\noutput_every = 10\n")
                .unwrap();
        let flags = Overrides {
            l: Some(16),
            ..Default::default()
        };
        let plan = resolve(&file, &flags).unwrap();
        assert_eq!(plan.config.l, 16);
        assert_eq!(plan.config.re, 100.0);
        assert_eq!(plan.output_every, 10);
        assert_eq!(plan.total_steps, plan.config.steps_for(2.0));
    }

    #[test]
    fn unknown_keys_and_names_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[case]\nsize = 3\n").is_err());
        let err = toml::from_str::<FileConfig>("[model]\ncollision = \"mrt\"\n").unwrap_err();
        assert!(err.to_string().contains("bgk"), "{err}");
        assert!(resolve(&FileConfig::default(), &Overrides::default()).is_err());
    }

    #[test]
    fn block_triples() {
        assert_eq!(parse_triple("2, 2,1"), Ok([2, 2, 1]));
        assert!(parse_triple("2,2").is_err());
    }
}
