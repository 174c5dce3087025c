//! Bandwidth-bound performance model and throughput measurement.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::descriptor::Q;
use crate::{Error, Precision, Result};

/// Bytes of the two flag fields stored per cell.
pub const FLAG_BYTES: u64 = 8 + 4;

/// Memory device characteristics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub name: String,
    /// Bytes per second.
    pub bandwidth: f64,
    /// Bytes.
    pub capacity: f64,
}

impl DeviceSpec {
    pub fn new(name: impl Into<String>, bandwidth: f64, capacity: f64) -> Result<Self> {
        let d = Self {
            name: name.into(),
            bandwidth,
            capacity,
        };
        if !(bandwidth > 0.0 && capacity > 0.0 && bandwidth.is_finite() && capacity.is_finite()) {
            return Err(Error::Config(format!(
                "device '{}' needs positive bandwidth and capacity",
                d.name
            )));
        }
        Ok(d)
    }

    pub fn a100_40gb() -> Self {
        Self {
            name: "A100-SXM4-40GB".into(),
            bandwidth: 1555e9,
            capacity: 40e9,
        }
    }
}

#[derive(Deserialize)]
struct CatalogEntry {
    name: String,
    bandwidth_gbs: f64,
    capacity_gb: f64,
}

#[derive(Deserialize)]
struct CatalogFile {
    #[serde(default)]
    device: Vec<CatalogEntry>,
}

/// Named devices, read from TOML `[[device]]` tables with `name`,
/// `bandwidth_gbs` and `capacity_gb`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceCatalog {
    pub devices: Vec<DeviceSpec>,
}

impl Default for DeviceCatalog {
    fn default() -> Self {
        Self {
            devices: vec![DeviceSpec::a100_40gb()],
        }
    }
}

impl DeviceCatalog {
    pub fn parse(text: &str) -> Result<Self> {
        let file: CatalogFile = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        let devices = file
            .device
            .into_iter()
            .map(|e| DeviceSpec::new(e.name, e.bandwidth_gbs * 1e9, e.capacity_gb * 1e9))
            .collect::<Result<_>>()?;
        Ok(Self { devices })
    }

    /// Adds a `host` entry from a measured bandwidth.
    pub fn with_host(mut self, bandwidth: f64, capacity: f64) -> Result<Self> {
        self.devices.retain(|d| d.name != "host");
        self.devices.push(DeviceSpec::new("host", bandwidth, capacity)?);
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Result<&DeviceSpec> {
        self.devices.iter().find(|d| d.name == name).ok_or_else(|| {
            let names: Vec<&str> = self.devices.iter().map(|d| d.name.as_str()).collect();
            Error::Config(format!("unknown device '{name}'; known: {}", names.join(", ")))
        })
    }
}

/// Bytes moved per cell update with two population copies of `store_bytes`
/// each and the flag fields.
pub fn bytes_per_cell_for(store_bytes: u64) -> u64 {
    2 * Q as u64 * store_bytes + FLAG_BYTES
}

pub fn bytes_per_cell(precision: Precision) -> u64 {
    bytes_per_cell_for(precision.bytes() as u64)
}

/// Upper bound on billions of cell updates per second.
pub fn peak_glups(device: &DeviceSpec, precision: Precision) -> f64 {
    device.bandwidth / bytes_per_cell(precision) as f64 / 1e9
}

/// Fraction of the device memory used by an `l³` lattice.
pub fn memory_fraction(device: &DeviceSpec, precision: Precision, l: u64) -> f64 {
    bytes_per_cell(precision) as f64 * (l as f64).powi(3) / device.capacity
}

/// Largest cubic resolution that fits in memory.
pub fn max_l(device: &DeviceSpec, precision: Precision) -> u64 {
    let mut l = (device.capacity / bytes_per_cell(precision) as f64).cbrt().floor() as u64;
    while l > 0 && memory_fraction(device, precision, l) > 1.0 {
        l -= 1;
    }
    while memory_fraction(device, precision, l + 1) <= 1.0 {
        l += 1;
    }
    l
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingMode {
    Weak,
    Strong,
}

/// Resolution for `workers` workers: the global size keeping the per-worker
/// load fixed (weak) or the per-worker equivalent size of a fixed problem
/// (strong), rounded to the nearest integer.
pub fn scaling_size(l: u64, workers: u64, mode: ScalingMode) -> u64 {
    let w = workers.max(1) as f64;
    let l = l as f64;
    match mode {
        ScalingMode::Weak => (l * w.cbrt()).round() as u64,
        ScalingMode::Strong => (l.powi(3) / w).cbrt().round() as u64,
    }
}

pub fn scaling_sizes(l: u64, max_workers: u64, mode: ScalingMode) -> Vec<u64> {
    (1..=max_workers).map(|w| scaling_size(l, w, mode)).collect()
}

/// Averaged throughput of a timed run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub cells: u64,
    pub steps: u64,
    pub seconds: f64,
    pub mlups: f64,
    pub fraction_of_peak: Option<f64>,
    pub repetitions: Vec<f64>,
}

impl PerfReport {
    pub fn from_timing(cells: u64, steps: u64, seconds: f64) -> Self {
        Self {
            cells,
            steps,
            seconds,
            mlups: mlups(cells, steps, seconds),
            fraction_of_peak: None,
            repetitions: vec![mlups(cells, steps, seconds)],
        }
    }

    pub fn csv_header() -> &'static str {
        "cells,steps,seconds,mlups,fraction_of_peak"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.cells,
            self.steps,
            self.seconds,
            self.mlups,
            self.fraction_of_peak.map(|f| f.to_string()).unwrap_or_default()
        )
    }
}

pub fn mlups(cells: u64, steps: u64, seconds: f64) -> f64 {
    cells as f64 * steps as f64 / seconds / 1e6
}

/// Source of elapsed seconds.
pub trait Clock {
    fn seconds(&mut self) -> f64;
}

#[derive(Debug)]
pub struct MonotonicClock(Instant);

impl Default for MonotonicClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for MonotonicClock {
    fn seconds(&mut self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

pub const REPETITIONS: usize = 3;

/// Runs `warmup` untimed steps, then [`REPETITIONS`] timed runs of `steps`
/// steps each; `mlups` is the mean of the per-repetition rates and `seconds`
/// the matching wall time.
pub fn measure_mlups(
    cells: u64,
    warmup: u64,
    steps: u64,
    peak: Option<(&DeviceSpec, Precision)>,
    clock: &mut dyn Clock,
    mut step: impl FnMut() -> Result<()>,
) -> Result<PerfReport> {
    if steps == 0 {
        return Err(Error::Config("timed steps must be at least 1".into()));
    }
    for _ in 0..warmup {
        step()?;
    }
    let mut rates = Vec::with_capacity(REPETITIONS);
    for _ in 0..REPETITIONS {
        let t0 = clock.seconds();
        for _ in 0..steps {
            step()?;
        }
        let dt = clock.seconds() - t0;
        rates.push(mlups(cells, steps, dt));
    }
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    Ok(PerfReport {
        cells,
        steps,
        seconds: cells as f64 * steps as f64 / mean / 1e6,
        mlups: mean,
        fraction_of_peak: peak.map(|(d, p)| mean / 1e3 / peak_glups(d, p)),
        repetitions: rates,
    })
}
