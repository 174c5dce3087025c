//! Domain reductions and derived fields.
//!
//! Sums use a fixed pairwise tree so results do not depend on the number of
//! threads. Vorticity uses eighth-order centered differences.

use std::io::{Read, Write};

use crate::{Error, Result};

/// Cell-centered 3-vector field, x fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub dims: [usize; 3],
    pub data: Vec<[f64; 3]>,
}

impl VectorField {
    pub fn new(dims: [usize; 3], data: Vec<[f64; 3]>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::Format(format!("{} vectors for extents {dims:?}", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut([usize; 3]) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f([x, y, z]));
                }
            }
        }
        Self { dims, data }
    }

    #[inline]
    pub fn index(&self, p: [usize; 3]) -> usize {
        p[0] + self.dims[0] * (p[1] + self.dims[1] * p[2])
    }

    pub fn get(&self, p: [usize; 3]) -> [f64; 3] {
        self.data[self.index(p)]
    }

    /// Swaps two axes of both the grid and the vector components.
    pub fn transpose(&self, a: usize, b: usize) -> Self {
        let mut dims = self.dims;
        dims.swap(a, b);
        Self::from_fn(dims, |p| {
            let mut q = p;
            q.swap(a, b);
            let mut v = self.get(q);
            v.swap(a, b);
            v
        })
    }
}

const LEAF: usize = 1024;

/// Pairwise sum with a fixed split tree; halves above the leaf size are
/// evaluated in parallel.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    let (x, y) = rayon::join(|| pairwise_sum(a), || pairwise_sum(b));
    x + y
}

fn mean_half_square(v: impl Iterator<Item = [f64; 3]>) -> f64 {
    let sq: Vec<f64> = v.map(|w| 0.5 * (w[0] * w[0] + w[1] * w[1] + w[2] * w[2])).collect();
    if sq.is_empty() {
        return 0.0;
    }
    pairwise_sum(&sq) / sq.len() as f64
}

/// Cell mean of |u|²/2.
pub fn kinetic_energy(u: &VectorField) -> f64 {
    mean_half_square(u.data.iter().copied())
}

/// Cell mean of |ω|²/2, skipping cells within four cells of a non-periodic
/// face.
pub fn enstrophy(omega: &VectorField, periodic: [bool; 3]) -> f64 {
    let d = omega.dims;
    let keep = |p: [usize; 3]| (0..3).all(|a| periodic[a] || (p[a] >= 4 && p[a] + 4 < d[a]));
    let mut kept = Vec::new();
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                if keep([x, y, z]) {
                    kept.push(omega.get([x, y, z]));
                }
            }
        }
    }
    mean_half_square(kept.into_iter())
}

/// Centered first-derivative weights for offsets 1..=4 (antisymmetric).
pub const FD8: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
const FD6: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
const FD4: [f64; 2] = [2.0 / 3.0, -1.0 / 12.0];
const FD2: [f64; 1] = [0.5];

/// Derivative of component `comp` along `axis` at `p`. Near a non-periodic
/// face the widest centered stencil that fits is used, one-sided at the face.
fn derivative(u: &VectorField, periodic: [bool; 3], p: [usize; 3], axis: usize, comp: usize) -> f64 {
    let n = u.dims[axis];
    let at = |off: isize| -> f64 {
        let mut q = p;
        let c = p[axis] as isize + off;
        q[axis] = if periodic[axis] {
            c.rem_euclid(n as isize) as usize
        } else {
            c as usize
        };
        u.get(q)[comp]
    };
    let reach = if periodic[axis] {
        4
    } else {
        p[axis].min(n - 1 - p[axis]).min(4)
    };
    let stencil: &[f64] = match reach {
        4 => &FD8,
        3 => &FD6,
        2 => &FD4,
        1 => &FD2,
        _ => {
            return if p[axis] == 0 { at(1) - at(0) } else { at(0) - at(-1) };
        }
    };
    stencil
        .iter()
        .enumerate()
        .map(|(k, c)| c * (at(k as isize + 1) - at(-(k as isize) - 1)))
        .sum()
}

/// Curl of `u` with unit grid spacing.
pub fn vorticity_fd8(u: &VectorField, periodic: [bool; 3]) -> Result<VectorField> {
    for a in 0..3 {
        if !periodic[a] && u.dims[a] > 1 && u.dims[a] < 9 {
            return Err(Error::Config(format!(
                "axis {a} has {} cells; the eighth-order stencil needs 9 or periodicity",
                u.dims[a]
            )));
        }
    }
    let d = |p, axis, comp| {
        if u.dims[axis] == 1 {
            0.0
        } else {
            derivative(u, periodic, p, axis, comp)
        }
    };
    Ok(VectorField::from_fn(u.dims, |p| {
        [
            d(p, 1, 2) - d(p, 2, 1),
            d(p, 2, 0) - d(p, 0, 2),
            d(p, 0, 1) - d(p, 1, 0),
        ]
    }))
}

/// Permeability in lattice units, `k = ū ν lx / ΔP`.
pub fn permeability(mean_velocity: f64, nu: f64, lx: f64, dp: f64) -> Result<f64> {
    if dp == 0.0 {
        return Err(Error::Undefined("zero pressure drop: permeability is unbounded".into()));
    }
    if !(dp > 0.0) || !(nu > 0.0) || !(lx > 0.0) {
        return Err(Error::Config(format!(
            "permeability needs dP > 0, nu > 0, lx > 0 (got {dp}, {nu}, {lx})"
        )));
    }
    Ok(mean_velocity * nu * lx / dp)
}

/// One millidarcy in square meters.
pub const MILLIDARCY_M2: f64 = 9.869233e-16;

pub fn to_millidarcy(k_lattice: f64, dx: f64) -> f64 {
    k_lattice * dx * dx / MILLIDARCY_M2
}

/// Line of cells along `axis` through `through`, sampling one velocity
/// component. The normalized coordinate of cell `i` is
/// `2 (i - origin) / length - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisLine {
    pub name: String,
    pub axis: usize,
    pub through: [usize; 3],
    pub component: usize,
    pub origin: f64,
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileRow {
    pub line: String,
    pub coordinate: f64,
    pub value: f64,
}

/// Time-averaged profiles along `lines` over equally spaced snapshots.
pub fn averaged_profiles(snapshots: &[VectorField], lines: &[AxisLine]) -> Result<Vec<ProfileRow>> {
    let first = snapshots
        .first()
        .ok_or_else(|| Error::Config("no snapshots to average".into()))?;
    let mut rows = Vec::new();
    for line in lines {
        for i in 0..first.dims[line.axis] {
            let mut p = line.through;
            p[line.axis] = i;
            let samples: Vec<f64> = snapshots.iter().map(|s| s.get(p)[line.component]).collect();
            rows.push(ProfileRow {
                line: line.name.clone(),
                coordinate: 2.0 * (i as f64 - line.origin) / line.length - 1.0,
                value: pairwise_sum(&samples) / samples.len() as f64,
            });
        }
    }
    Ok(rows)
}

pub fn write_profiles_csv<W: Write>(rows: &[ProfileRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["line", "coordinate", "value"]).map_err(csv_err)?;
    for r in rows {
        out.write_record([r.line.clone(), fmt_g17(r.coordinate), fmt_g17(r.value)])
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// `printf("%.17g")` formatting.
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-4..17).contains(&exp) {
        trim(&format!("{x:.*}", (16 - exp) as usize))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesRow {
    pub step: u64,
    /// Time in convective units.
    pub time: f64,
    pub k: f64,
    pub eps: f64,
    pub extra: Vec<f64>,
}

/// Time series of domain diagnostics with optional named extra columns.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiagnosticsSeries {
    pub extra_names: Vec<String>,
    pub rows: Vec<SeriesRow>,
}

impl DiagnosticsSeries {
    pub fn new(extra_names: Vec<String>) -> Self {
        Self {
            extra_names,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: SeriesRow) -> Result<()> {
        if row.extra.len() != self.extra_names.len() {
            return Err(Error::Format(format!(
                "row has {} extra values, series has {} extra columns",
                row.extra.len(),
                self.extra_names.len()
            )));
        }
        if let Some(last) = self.rows.last() {
            if row.step <= last.step {
                return Err(Error::Format(format!("step {} after step {}", row.step, last.step)));
            }
        }
        let finite = [row.time, row.k, row.eps]
            .iter()
            .chain(&row.extra)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Format(format!("non-finite diagnostics at step {}", row.step)));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["step", "t_tc", "k", "eps"].iter().map(|s| s.to_string()).collect();
        h.extend(self.extra_names.iter().cloned());
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header()).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![r.step.to_string(), fmt_g17(r.time), fmt_g17(r.k), fmt_g17(r.eps)];
            rec.extend(r.extra.iter().map(|&v| fmt_g17(v)));
            out.write_record(rec).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(r);
        let header: Vec<String> = input.headers().map_err(csv_err)?.iter().map(String::from).collect();
        if header.len() < 4 || header[..4] != ["step", "t_tc", "k", "eps"] {
            return Err(Error::Format(format!("unexpected series header {header:?}")));
        }
        let mut series = Self::new(header[4..].to_vec());
        for rec in input.records() {
            let rec = rec.map_err(csv_err)?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Format("short row".into()))?
                    .parse::<f64>()
                    .map_err(|e| Error::Format(e.to_string()))
            };
            let step = rec
                .get(0)
                .unwrap_or_default()
                .parse::<u64>()
                .map_err(|e| Error::Format(e.to_string()))?;
            series.push(SeriesRow {
                step,
                time: num(1)?,
                k: num(2)?,
                eps: num(3)?,
                extra: (4..header.len()).map(num).collect::<Result<_>>()?,
            })?;
        }
        Ok(series)
    }
}
