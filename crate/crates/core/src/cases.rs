//! Benchmark setups: Taylor-Green vortex, lid-driven cavity and flow through
//! a voxelized porous medium.
//!
//! A [`CaseSetup`] describes the geometry, the dynamics of every cell and the
//! initial state independently of the container, so the same setup can build
//! both a [`ReferenceLattice`] and a [`MultiBlockLattice`].

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::boundaries::{Normal, Orientation};
use crate::collision::{CollisionParams, MAGIC_LAMBDA};
use crate::descriptor::{equilibrium2, Populations, CS2, VELOCITIES};
use crate::diagnostics::{enstrophy, kinetic_energy, permeability, vorticity_fd8, AxisLine, VectorField};
use crate::dynamics::{DynamicsChain, Link};
use crate::multiblock::MultiBlockLattice;
use crate::reference::ReferenceLattice;
use crate::{Error, Precision, Real, Result};

macro_rules! keyword_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let lower = s.to_ascii_lowercase();
                $name::ALL.iter().copied().find(|v| v.as_str() == lower).ok_or_else(|| {
                    let valid: Vec<&str> = $name::ALL.iter().map(|v| v.as_str()).collect();
                    Error::Config(format!(
                        "unknown {} '{s}'; valid: {}",
                        stringify!($name),
                        valid.join(", ")
                    ))
                })
            }
        }
    };
}

keyword_enum!(CaseKind { Tgv => "tgv", Cavity => "cavity", Porous => "porous" });
keyword_enum!(CollisionKind { Bgk => "bgk", Trt => "trt", Rr => "rr" });
keyword_enum!(Drive { Velocity => "velocity", Pressure => "pressure" });

/// Relaxation rate for kinematic viscosity `nu`.
pub fn omega_from_nu(nu: f64) -> f64 {
    1.0 / (3.0 * nu + 0.5)
}

pub fn nu_from_omega(omega: f64) -> f64 {
    (1.0 / omega - 0.5) / 3.0
}

/// Base collision chain, optionally wrapped by a Smagorinsky closure.
pub fn base_chain(kind: CollisionKind, params: CollisionParams) -> Result<DynamicsChain> {
    let link = match kind {
        CollisionKind::Bgk => Link::Bgk,
        CollisionKind::Trt => Link::Trt,
        CollisionKind::Rr => Link::Rr,
    };
    let mut links = Vec::new();
    if params.smagorinsky_c > 0.0 {
        links.push(Link::Smagorinsky);
    }
    links.push(link);
    DynamicsChain::new(links, params)
}

/// Porous-medium specific settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PorousConfig {
    pub drive: Drive,
    /// `"plates"` or the path of a raw 8-bit voxel file.
    pub geometry: String,
    /// Fluid layers between the plates.
    pub height: usize,
    /// Voxel file extents (defaults to `l` cubed).
    pub dims: Option<[usize; 3]>,
    pub threshold: f64,
    /// Voxel size in meters.
    pub dx: f64,
    pub upstream: usize,
    pub downstream: usize,
    pub tau: f64,
    /// Inlet-outlet density difference for the pressure drive.
    pub pressure_drop: f64,
}

impl Default for PorousConfig {
    fn default() -> Self {
        Self {
            drive: Drive::Velocity,
            geometry: "plates".into(),
            height: 11,
            dims: None,
            threshold: 0.5,
            dx: 5.345e-6,
            upstream: 40,
            downstream: 40,
            tau: 1.0,
            pressure_drop: 1e-3,
        }
    }
}

/// Resolved parameters of one benchmark run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseConfig {
    pub case: CaseKind,
    /// Resolution in cells (plate-channel length for the plates geometry).
    pub l: usize,
    pub re: f64,
    pub ma: f64,
    pub collision: CollisionKind,
    pub smagorinsky: f64,
    pub lambda: f64,
    pub omega_bulk_ho: f64,
    pub precision: Precision,
    pub block_grid: [usize; 3],
    pub workers: usize,
    /// Run length in convective times.
    pub tmax_tc: f64,
    /// Diagnostics cadence in convective times.
    pub output_every_tc: f64,
    pub porous: PorousConfig,
}

impl CaseConfig {
    fn with_case(case: CaseKind, l: usize, re: f64, ma: f64, collision: CollisionKind) -> Self {
        Self {
            case,
            l,
            re,
            ma,
            collision,
            smagorinsky: 0.0,
            lambda: MAGIC_LAMBDA,
            omega_bulk_ho: 1.0,
            precision: Precision::Double,
            block_grid: [1, 1, 1],
            workers: 1,
            tmax_tc: 1.0,
            output_every_tc: 0.1,
            porous: PorousConfig::default(),
        }
    }

    pub fn tgv(l: usize, re: f64, ma: f64) -> Self {
        Self {
            tmax_tc: 20.0,
            ..Self::with_case(CaseKind::Tgv, l, re, ma, CollisionKind::Bgk)
        }
    }

    pub fn cavity(l: usize, re: f64, ma: f64) -> Self {
        Self {
            tmax_tc: 100.0,
            output_every_tc: 1.0,
            ..Self::with_case(CaseKind::Cavity, l, re, ma, CollisionKind::Bgk)
        }
    }

    /// Parallel-plate channel of `height` fluid layers and `length` cells.
    pub fn porous_plates(length: usize, height: usize, drive: Drive) -> Self {
        let mut c = Self::with_case(CaseKind::Porous, length, 0.0, 0.01, CollisionKind::Trt);
        c.porous.height = height;
        c.porous.drive = drive;
        c.tmax_tc = 0.5;
        c.output_every_tc = 0.05;
        c
    }

    /// Lattice velocity scale `cs Ma`.
    pub fn u_lattice(&self) -> f64 {
        CS2.sqrt() * self.ma
    }

    /// Reference length in cells entering the Reynolds number.
    pub fn l_char(&self) -> f64 {
        match self.case {
            CaseKind::Tgv => self.l as f64 / (2.0 * PI),
            CaseKind::Cavity => self.l as f64,
            CaseKind::Porous => self.porous_length() as f64,
        }
    }

    fn porous_length(&self) -> usize {
        let sample = match (self.porous.geometry.as_str(), self.porous.dims) {
            ("plates", _) => self.l,
            (_, Some(d)) => d[0],
            _ => self.l,
        };
        sample + self.porous.upstream + self.porous.downstream
    }

    pub fn nu(&self) -> f64 {
        match self.case {
            CaseKind::Porous => nu_from_omega(1.0 / self.porous.tau),
            _ => self.u_lattice() * self.l_char() / self.re,
        }
    }

    pub fn omega(&self) -> Result<f64> {
        let omega = match self.case {
            CaseKind::Porous => 1.0 / self.porous.tau,
            _ => omega_from_nu(self.nu()),
        };
        if omega > 0.0 && omega < 2.0 {
            Ok(omega)
        } else {
            Err(Error::UnstableOmega(omega))
        }
    }

    /// Steps per convective time.
    pub fn tc_steps(&self) -> f64 {
        self.l_char() / self.u_lattice()
    }

    /// Whole number of steps closest to `tc` convective times.
    pub fn steps_for(&self, tc: f64) -> u64 {
        (tc * self.tc_steps()).round().max(0.0) as u64
    }

    pub fn collision_params(&self) -> Result<CollisionParams> {
        let p = CollisionParams {
            omega: self.omega()?,
            lambda: self.lambda,
            smagorinsky_c: self.smagorinsky,
            omega_bulk_ho: self.omega_bulk_ho,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn base_chain(&self) -> Result<DynamicsChain> {
        base_chain(self.collision, self.collision_params()?)
    }

    /// Same case at resolution `l_new` with Reynolds and Mach numbers held.
    pub fn convective_rescale(&self, l_new: usize) -> Result<Self> {
        if l_new < 8 {
            return Err(Error::Config(format!("resolution {l_new} below the minimum of 8")));
        }
        let c = Self {
            l: l_new,
            ..self.clone()
        };
        c.omega()?;
        Ok(c)
    }

    pub fn setup(&self) -> Result<CaseSetup> {
        match self.case {
            CaseKind::Tgv => init_tgv(self.l, self.ma, self.base_chain()?),
            CaseKind::Cavity => init_cavity(self.l, self.re, self.ma, self.collision, self.collision_params()?),
            CaseKind::Porous => {
                let geometry = self.geometry()?;
                let u_in = self.u_lattice();
                init_porous(
                    &geometry,
                    &PorousOptions {
                        upstream: self.porous.upstream,
                        downstream: self.porous.downstream,
                        drive: self.porous.drive,
                        base: self.base_chain()?,
                        inlet_velocity: u_in,
                        pressure_drop: self.porous.pressure_drop,
                        extend_walls: self.porous.geometry == "plates",
                    },
                )
            }
        }
    }

    pub fn geometry(&self) -> Result<VoxelGeometry> {
        if self.porous.geometry == "plates" {
            Ok(VoxelGeometry::plates(self.l, self.porous.height))
        } else {
            let dims = self.porous.dims.unwrap_or([self.l; 3]);
            load_voxels(
                Path::new(&self.porous.geometry),
                dims,
                self.porous.threshold,
                self.porous.dx,
            )
        }
    }
}

/// Initial macroscopic state.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    Rest,
    TaylorGreen { u0: f64 },
}

/// Location of the porous sample inside the channel.
#[derive(Clone, Debug, PartialEq)]
pub struct PorousLayout {
    pub sample_start: usize,
    pub sample_len: usize,
    pub solid: Vec<bool>,
    pub nu: f64,
    pub drive: Drive,
}

/// Container-independent description of an initialized lattice.
#[derive(Clone, Debug)]
pub struct CaseSetup {
    pub dims: [usize; 3],
    pub periodic: [bool; 3],
    pub palette: Vec<DynamicsChain>,
    /// Palette index of every cell, x fastest.
    pub cell_chain: Vec<u8>,
    pub initial: InitialState,
    pub porous: Option<PorousLayout>,
}

impl CaseSetup {
    fn uniform(dims: [usize; 3], periodic: [bool; 3], bulk: DynamicsChain, initial: InitialState) -> Self {
        Self {
            dims,
            periodic,
            palette: vec![bulk],
            cell_chain: vec![0; dims.iter().product()],
            initial,
            porous: None,
        }
    }

    pub fn num_cells(&self) -> usize {
        self.cell_chain.len()
    }

    #[inline]
    pub fn index(&self, p: [usize; 3]) -> usize {
        p[0] + self.dims[0] * (p[1] + self.dims[1] * p[2])
    }

    fn palette_entry(&mut self, chain: DynamicsChain) -> u8 {
        match self.palette.iter().position(|c| *c == chain) {
            Some(i) => i as u8,
            None => {
                self.palette.push(chain);
                (self.palette.len() - 1) as u8
            }
        }
    }

    fn assign(&mut self, p: [usize; 3], chain: &DynamicsChain) {
        let id = self.palette_entry(chain.clone());
        let i = self.index(p);
        self.cell_chain[i] = id;
    }

    pub fn chain_at(&self, p: [usize; 3]) -> &DynamicsChain {
        &self.palette[self.cell_chain[self.index(p)] as usize]
    }

    /// Density and velocity at `p` at time zero.
    pub fn state_at(&self, p: [usize; 3]) -> (f64, [f64; 3]) {
        match self.initial {
            InitialState::Rest => (1.0, [0.0; 3]),
            InitialState::TaylorGreen { u0 } => tgv_state(self.dims[0], u0, p),
        }
    }

    pub fn populations_at<T: Real>(&self, p: [usize; 3]) -> Populations<T> {
        let (rho, u) = self.state_at(p);
        equilibrium2(rho, u).map(T::of)
    }

    /// Sorted chain strings of the palette entries in use.
    pub fn required_models(&self) -> Vec<String> {
        let mut used = vec![false; self.palette.len()];
        for &c in &self.cell_chain {
            used[c as usize] = true;
        }
        let mut names: Vec<String> = self
            .palette
            .iter()
            .zip(used)
            .filter(|(_, u)| *u)
            .map(|(c, _)| c.chain_string())
            .collect();
        names.sort();
        names.dedup();
        names
    }

    fn for_each_cell(&self, mut f: impl FnMut([usize; 3], usize)) {
        for z in 0..self.dims[2] {
            for y in 0..self.dims[1] {
                for x in 0..self.dims[0] {
                    let p = [x, y, z];
                    f(p, self.index(p));
                }
            }
        }
    }

    pub fn build_reference<T: Real>(&self) -> Result<ReferenceLattice<T>> {
        let mut lattice = ReferenceLattice::new(self.dims, self.periodic, &self.palette[0])?;
        let ids: Vec<usize> = self.palette.iter().map(|c| lattice.ensure_chain(c)).collect();
        self.for_each_cell(|p, i| {
            lattice.set_raw(i, self.populations_at(p), ids[self.cell_chain[i] as usize]);
        });
        Ok(lattice)
    }

    pub fn build_accelerated<T: Real>(&self, block_grid: [usize; 3], workers: usize) -> Result<MultiBlockLattice<T>> {
        let mut lattice =
            MultiBlockLattice::new(self.dims, self.periodic, block_grid, &self.palette[0])?.with_workers(workers)?;
        let instances = self
            .palette
            .iter()
            .map(|c| lattice.register(c).map(|r| r.instance))
            .collect::<Result<Vec<_>>>()?;
        self.for_each_cell(|p, i| {
            lattice.set_cell_instance(p, instances[self.cell_chain[i] as usize]);
            lattice.set_populations(p, &self.populations_at(p));
        });
        Ok(lattice)
    }
}

/// Cell-center coordinate of index `i` on a periodic `[0, 2π)` grid.
pub fn tgv_coordinate(i: usize, l: usize) -> f64 {
    2.0 * PI * (i as f64 + 0.5) / l as f64
}

/// Taylor-Green density (from the pressure field) and velocity at cell `p`.
pub fn tgv_state(l: usize, u0: f64, p: [usize; 3]) -> (f64, [f64; 3]) {
    let [x, y, z] = p.map(|i| tgv_coordinate(i, l));
    let dp = u0 * u0 / 16.0 * ((2.0 * z).cos() + 2.0) * ((2.0 * x).cos() + (2.0 * y).cos());
    let rho = 1.0 + dp / CS2;
    let u = [u0 * x.sin() * y.cos() * z.cos(), -u0 * x.cos() * y.sin() * z.cos(), 0.0];
    (rho, u)
}

/// Periodic Taylor-Green vortex on `l³` cells with `u∞ = cs Ma`.
pub fn init_tgv(l: usize, ma: f64, bulk: DynamicsChain) -> Result<CaseSetup> {
    if l < 8 {
        return Err(Error::Config(format!("Taylor-Green resolution {l} below 8")));
    }
    Ok(CaseSetup::uniform(
        [l; 3],
        [true; 3],
        bulk,
        InitialState::TaylorGreen { u0: CS2.sqrt() * ma },
    ))
}

/// Cubic cavity of `l³` fluid cells enclosed by one layer of wall cells; the
/// top layer (`z = l + 1`) moves with `(cs Ma, 0, 0)`.
pub fn init_cavity(l: usize, re: f64, ma: f64, kind: CollisionKind, params: CollisionParams) -> Result<CaseSetup> {
    if l < 16 {
        return Err(Error::Config(format!("cavity resolution {l} below 16")));
    }
    let u = CS2.sqrt() * ma;
    let omega = omega_from_nu(u * l as f64 / re);
    if !(omega > 0.0 && omega < 2.0) {
        return Err(Error::UnstableOmega(omega));
    }
    init_cavity_with(l, base_chain(kind, CollisionParams { omega, ..params })?, u)
}

/// Cavity with an explicit bulk chain and lid speed.
pub fn init_cavity_with(l: usize, bulk: DynamicsChain, lid_velocity: f64) -> Result<CaseSetup> {
    let n = l + 2;
    let mut setup = CaseSetup::uniform([n; 3], [false; 3], bulk, InitialState::Rest);
    let wall = DynamicsChain::bounce_back();
    let lid = DynamicsChain::moving_bounce_back([lid_velocity, 0.0, 0.0]);
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let p = [x, y, z];
                if p.iter().all(|&c| c >= 1 && c <= l) {
                    continue;
                }
                let on_lid = z == n - 1 && (1..=l).contains(&x) && (1..=l).contains(&y);
                setup.assign(p, if on_lid { &lid } else { &wall });
            }
        }
    }
    Ok(setup)
}

/// Centerline sampling lines of the cavity: `u_x` along z and `u_z` along x,
/// both through the middle of the `y` extent.
pub fn cavity_lines(l: usize) -> Vec<AxisLine> {
    let mid = l / 2;
    vec![
        AxisLine {
            name: "ux_vs_z".into(),
            axis: 2,
            through: [mid, mid, 0],
            component: 0,
            origin: 0.5,
            length: l as f64,
        },
        AxisLine {
            name: "uz_vs_x".into(),
            axis: 0,
            through: [0, mid, mid],
            component: 2,
            origin: 0.5,
            length: l as f64,
        },
    ]
}

/// Binary occupancy grid, `true` = solid, x fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGeometry {
    pub dims: [usize; 3],
    pub solid: Vec<bool>,
    /// Voxel size in meters.
    pub dx: f64,
}

impl VoxelGeometry {
    pub fn new(dims: [usize; 3], solid: Vec<bool>, dx: f64) -> Result<Self> {
        if solid.len() != dims.iter().product::<usize>() {
            return Err(Error::Format(format!("{} voxels for extents {dims:?}", solid.len())));
        }
        Ok(Self { dims, solid, dx })
    }

    /// Two plates at `z = 0` and `z = h + 1` around `h` fluid layers.
    pub fn plates(length: usize, h: usize) -> Self {
        let dims = [length, 1, h + 2];
        let solid = (0..dims.iter().product::<usize>())
            .map(|i| {
                let z = i / length;
                z == 0 || z == h + 1
            })
            .collect();
        Self { dims, solid, dx: 1.0 }
    }

    pub fn porosity(&self) -> f64 {
        let fluid = self.solid.iter().filter(|s| !**s).count();
        fluid as f64 / self.solid.len() as f64
    }

    pub fn is_solid(&self, p: [usize; 3]) -> bool {
        self.solid[p[0] + self.dims[0] * (p[1] + self.dims[1] * p[2])]
    }
}

/// Reads a raw 8-bit occupancy file (x fastest). Values are scaled by 255
/// unless the file only holds 0 and 1; a voxel is solid when its scaled value
/// reaches `threshold`.
pub fn load_voxels(path: &Path, dims: [usize; 3], threshold: f64, dx: f64) -> Result<VoxelGeometry> {
    let bytes = std::fs::read(path)?;
    let expected: usize = dims.iter().product();
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{} holds {} bytes, extents {dims:?} need {expected}",
            path.display(),
            bytes.len()
        )));
    }
    let scale = if bytes.iter().all(|&b| b <= 1) { 1.0 } else { 255.0 };
    let solid = bytes.iter().map(|&b| b as f64 / scale >= threshold).collect();
    let geometry = VoxelGeometry::new(dims, solid, dx)?;
    let phi = geometry.porosity();
    if phi == 0.0 || phi == 1.0 {
        return Err(Error::Config(format!("degenerate medium: porosity {phi}")));
    }
    Ok(geometry)
}

#[derive(Clone, Debug)]
pub struct PorousOptions {
    pub upstream: usize,
    pub downstream: usize,
    pub drive: Drive,
    /// Collision of fluid cells.
    pub base: DynamicsChain,
    pub inlet_velocity: f64,
    /// Inlet density excess for the pressure drive.
    pub pressure_drop: f64,
    /// Continue solid columns of the sample faces through the buffers.
    pub extend_walls: bool,
}

/// Channel `upstream + Lx + downstream` long around the sample, driven along
/// +x, periodic across. Solid cells touching fluid bounce back; buried solid
/// cells carry no dynamics.
pub fn init_porous(geometry: &VoxelGeometry, opts: &PorousOptions) -> Result<CaseSetup> {
    if geometry.porosity() == 0.0 {
        return Err(Error::Config("the medium has no fluid cells".into()));
    }
    let [lx, ly, lz] = geometry.dims;
    let nx = opts.upstream + lx + opts.downstream;
    let dims = [nx, ly, lz];
    let mut solid = vec![false; nx * ly * lz];
    for z in 0..lz {
        for y in 0..ly {
            for x in 0..nx {
                let s = if x < opts.upstream {
                    opts.extend_walls && geometry.is_solid([0, y, z])
                } else if x < opts.upstream + lx {
                    geometry.is_solid([x - opts.upstream, y, z])
                } else {
                    opts.extend_walls && geometry.is_solid([lx - 1, y, z])
                };
                solid[x + nx * (y + ly * z)] = s;
            }
        }
    }

    let nu = nu_from_omega(opts.base.params.omega);
    let x_normal = |o| Normal::new(0, o).expect("axis 0");
    let outlet = opts.base.clone().with_completion(Link::RegularizedPressure {
        normal: x_normal(Orientation::Plus),
        density: 1.0,
    })?;
    let inlet = match opts.drive {
        Drive::Velocity => opts.base.clone().with_completion(Link::RegularizedVelocity {
            normal: x_normal(Orientation::Minus),
            velocity: [opts.inlet_velocity, 0.0, 0.0],
        })?,
        Drive::Pressure => opts.base.clone().with_completion(Link::RegularizedPressure {
            normal: x_normal(Orientation::Minus),
            density: 1.0 + opts.pressure_drop,
        })?,
    };

    let mut setup = CaseSetup::uniform(dims, [false, true, true], opts.base.clone(), InitialState::Rest);
    let no_dynamics = DynamicsChain::no_dynamics();
    let wall = DynamicsChain::bounce_back();
    let is_solid = |x: isize, y: isize, z: isize| -> bool {
        if x < 0 || x >= nx as isize {
            return true;
        }
        let y = y.rem_euclid(ly as isize) as usize;
        let z = z.rem_euclid(lz as isize) as usize;
        solid[x as usize + nx * (y + ly * z)]
    };
    for z in 0..lz {
        for y in 0..ly {
            for x in 0..nx {
                let p = [x, y, z];
                let (xi, yi, zi) = (x as isize, y as isize, z as isize);
                if is_solid(xi, yi, zi) {
                    let touches_fluid = VELOCITIES
                        .iter()
                        .any(|c| !is_solid(xi + c[0] as isize, yi + c[1] as isize, zi + c[2] as isize));
                    setup.assign(p, if touches_fluid { &wall } else { &no_dynamics });
                } else if x == 0 {
                    setup.assign(p, &inlet);
                } else if x == nx - 1 {
                    setup.assign(p, &outlet);
                }
            }
        }
    }
    setup.porous = Some(PorousLayout {
        sample_start: opts.upstream,
        sample_len: lx,
        solid,
        nu,
        drive: opts.drive,
    });
    Ok(setup)
}

/// Mean kinetic energy and enstrophy of the current velocity field.
pub fn flow_diagnostics<T: Real>(lattice: &MultiBlockLattice<T>) -> Result<(f64, f64)> {
    let (_, u) = lattice.macroscopic();
    let field = VectorField::new(lattice.dims(), u)?;
    let omega = vorticity_fd8(&field, lattice.periodic())?;
    Ok((kinetic_energy(&field), enstrophy(&omega, lattice.periodic())))
}

/// Permeability measurement over the sample region.
#[derive(Clone, Debug, PartialEq)]
pub struct PermeabilityReport {
    /// Based on the mean over all sample cells, solids counting as zero.
    pub darcy: f64,
    /// Based on the mean over the sample's fluid cells.
    pub fluid: f64,
    pub mean_velocity: f64,
    pub dp: f64,
    pub lx: f64,
    pub inflow: f64,
    pub outflow: f64,
}

/// Evaluates `k = ū ν lx / ΔP` between the first and last sample slices.
/// `ū` is the mean mass flux `ρ u_x` so that the weakly compressible density
/// variation along the channel does not bias the estimate; `ΔP` is
/// `cs² Δρ` of the slice-averaged fluid densities.
pub fn measure_permeability(
    layout: &PorousLayout,
    dims: [usize; 3],
    rho: &[f64],
    u: &[[f64; 3]],
) -> Result<PermeabilityReport> {
    let [nx, ny, nz] = dims;
    let idx = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
    let slice = |x: usize| -> (f64, f64, usize) {
        let (mut rho_sum, mut flux, mut fluid) = (0.0, 0.0, 0);
        for z in 0..nz {
            for y in 0..ny {
                let i = idx(x, y, z);
                if !layout.solid[i] {
                    rho_sum += rho[i];
                    flux += rho[i] * u[i][0];
                    fluid += 1;
                }
            }
        }
        (rho_sum, flux, fluid)
    };
    let a = layout.sample_start;
    let b = a + layout.sample_len - 1;
    let (rho_a, _, na) = slice(a);
    let (rho_b, _, nb) = slice(b);
    if na == 0 || nb == 0 {
        return Err(Error::Config("sample faces have no fluid cells".into()));
    }
    let dp = CS2 * (rho_a / na as f64 - rho_b / nb as f64);
    let lx = (b - a) as f64;
    let (mut flux, mut fluid, mut cells) = (0.0, 0usize, 0usize);
    for x in a..=b {
        let (_, f, n) = slice(x);
        flux += f;
        fluid += n;
        cells += ny * nz;
    }
    let darcy_u = flux / cells as f64;
    let fluid_u = flux / fluid as f64;
    Ok(PermeabilityReport {
        darcy: permeability(darcy_u, layout.nu, lx, dp)?,
        fluid: permeability(fluid_u, layout.nu, lx, dp)?,
        mean_velocity: darcy_u,
        dp,
        lx,
        inflow: slice(0).1,
        outflow: slice(nx - 1).1,
    })
}

/// Outcome of [`run_to_steady_permeability`].
#[derive(Clone, Debug, PartialEq)]
pub struct SteadyPermeability {
    pub report: PermeabilityReport,
    pub steps: u64,
    pub converged: bool,
}

/// Steps the lattice in chunks of `every` steps until the fluid-based
/// permeability changes by less than `tol` (relative) between chunks, or
/// `max_steps` is reached.
pub fn run_to_steady_permeability<T: Real>(
    lattice: &mut MultiBlockLattice<T>,
    layout: &PorousLayout,
    dispatch: &crate::accelerated::DispatchSet,
    every: u64,
    tol: f64,
    max_steps: u64,
) -> Result<SteadyPermeability> {
    let mut previous: Option<f64> = None;
    let mut steps = 0;
    loop {
        for _ in 0..every {
            lattice.collide_and_stream(dispatch)?;
        }
        steps += every;
        let (rho, u) = lattice.macroscopic();
        let report = measure_permeability(layout, lattice.dims(), &rho, &u)?;
        if !report.fluid.is_finite() {
            return Err(Error::Undefined(format!("permeability diverged after {steps} steps")));
        }
        let converged = previous.is_some_and(|p| ((report.fluid - p) / report.fluid).abs() < tol);
        if converged || steps >= max_steps {
            return Ok(SteadyPermeability {
                report,
                steps,
                converged,
            });
        }
        previous = Some(report.fluid);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tgv_fields_match_formulas() {
        let l = 16;
        let u0 = 0.1;
        for z in 0..l {
            for y in 0..l {
                for x in 0..l {
                    let (_, u) = tgv_state(l, u0, [x, y, z]);
                    assert_eq!(u[2], 0.0);
                }
            }
        }
        // x = π/2, y = z = 0 is not a cell center; check the formula directly.
        let (x, y, z) = (PI / 2.0, 0.0f64, 0.0f64);
        assert!((u0 * x.sin() * y.cos() * z.cos() - u0).abs() < 1e-17);
        assert_eq!(tgv_coordinate(0, 4), PI / 4.0);
    }

    #[test]
    fn tgv_starts_with_analytic_energy_and_zero_momentum() {
        let l = 64;
        let cfg = CaseConfig::tgv(l, 1600.0, 0.2);
        let setup = cfg.setup().unwrap();
        let u0 = cfg.u_lattice();
        let mut sum_u2 = Vec::with_capacity(l * l * l);
        let mut mom = [0.0f64; 3];
        for z in 0..l {
            for y in 0..l {
                for x in 0..l {
                    let (rho, u) = setup.state_at([x, y, z]);
                    sum_u2.push(0.5 * (u[0] * u[0] + u[1] * u[1]));
                    for a in 0..3 {
                        mom[a] += rho * u[a];
                    }
                }
            }
        }
        let k = crate::diagnostics::pairwise_sum(&sum_u2) / (l * l * l) as f64;
        assert!((k / (u0 * u0 / 8.0) - 1.0).abs() < 1e-10);
        assert!(mom.iter().all(|m| m.abs() <= 1e-12 * (l * l * l) as f64));
    }

    #[test]
    fn derived_quantities() {
        let tgv = CaseConfig::tgv(64, 1600.0, 0.2);
        let u = 0.2 / 3f64.sqrt();
        assert!((tgv.nu() - u * 64.0 / (2.0 * PI) / 1600.0).abs() < 1e-18);
        assert!((tgv.tc_steps() - 64.0 / (2.0 * PI * u)).abs() < 1e-12);
        let cav = CaseConfig::cavity(256, 1000.0, 0.1);
        let nu = 0.1 * 3f64.sqrt().recip() * 256.0 / 1000.0;
        assert!((cav.nu() - nu).abs() < 1e-15 * nu);
        assert!((cav.omega().unwrap() - 1.0 / (3.0 * nu + 0.5)).abs() < 1e-15);
        assert!((cav.tc_steps() - 256.0 / (0.1 / 3f64.sqrt())).abs() < 1e-9);
    }

    #[test]
    fn convective_rescaling() {
        let c = CaseConfig::tgv(128, 1600.0, 0.2);
        let d = c.convective_rescale(256).unwrap();
        assert_eq!((d.re, d.ma), (c.re, c.ma));
        assert!((d.nu() / c.nu() - 2.0).abs() < 1e-15);
        assert!((d.tc_steps() / c.tc_steps() - 2.0).abs() < 1e-15);
        assert_eq!(d.convective_rescale(128).unwrap(), c);
        assert!(c.convective_rescale(4).is_err());
        let unstable = CaseConfig::tgv(64, 1600.0, 0.0);
        assert!(matches!(unstable.omega(), Err(Error::UnstableOmega(_))));
        for l in [128, 256, 512] {
            let s = c.convective_rescale(l).unwrap();
            assert!(s.omega().unwrap() < 2.0);
        }
    }

    #[test]
    fn cavity_layout() {
        let setup = CaseConfig::cavity(16, 1000.0, 0.1).setup().unwrap();
        assert_eq!(setup.dims, [18; 3]);
        assert_eq!(setup.chain_at([5, 5, 17]).chain_string(), "MovingBounceBack");
        assert_eq!(setup.chain_at([0, 5, 17]).chain_string(), "BounceBack");
        assert_eq!(setup.chain_at([5, 5, 0]).chain_string(), "BounceBack");
        assert_eq!(setup.chain_at([5, 5, 16]).chain_string(), "COLL_BGK");
        assert_eq!(
            setup.required_models(),
            vec!["BounceBack", "COLL_BGK", "MovingBounceBack"]
        );
        assert!(init_cavity(8, 1000.0, 0.1, CollisionKind::Bgk, CollisionParams::default()).is_err());
    }

    #[test]
    fn plates_layout_and_models() {
        let cfg = CaseConfig::porous_plates(20, 5, Drive::Velocity);
        let setup = cfg.setup().unwrap();
        assert_eq!(setup.dims, [100, 1, 7]);
        assert_eq!(
            setup.required_models(),
            vec![
                "BounceBack",
                "Boundary_RegularizedPressure_0_1|COLL_TRT",
                "Boundary_RegularizedVelocity_0_M1|COLL_TRT",
                "COLL_TRT",
            ]
        );
        let geo = VoxelGeometry::plates(20, 5);
        assert!((geo.porosity() - 5.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn buried_solids_carry_no_dynamics() {
        let mut solid = vec![false; 6 * 6 * 6];
        for z in 1..5 {
            for y in 1..5 {
                for x in 1..5 {
                    solid[x + 6 * (y + 6 * z)] = true;
                }
            }
        }
        let geo = VoxelGeometry::new([6; 3], solid, 1.0).unwrap();
        let setup = init_porous(
            &geo,
            &PorousOptions {
                upstream: 2,
                downstream: 2,
                drive: Drive::Pressure,
                base: DynamicsChain::trt(1.0, MAGIC_LAMBDA).unwrap(),
                inlet_velocity: 0.0,
                pressure_drop: 1e-3,
                extend_walls: false,
            },
        )
        .unwrap();
        assert_eq!(setup.chain_at([4, 2, 2]).chain_string(), "NoDynamics");
        assert_eq!(setup.chain_at([3, 1, 1]).chain_string(), "BounceBack");
        assert_eq!(setup.required_models().len(), 5);
    }

    #[test]
    fn voxel_files_are_validated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rock.raw");
        std::fs::write(&path, [0u8, 255, 255, 0, 0, 0, 0, 200]).unwrap();
        let g = load_voxels(&path, [2, 2, 2], 0.5, 1e-6).unwrap();
        assert_eq!(g.porosity(), 5.0 / 8.0);
        std::fs::write(&path, [0u8, 1, 1, 0, 0, 0, 0, 0]).unwrap();
        assert_eq!(load_voxels(&path, [2, 2, 2], 0.5, 1e-6).unwrap().porosity(), 0.75);
        assert!(load_voxels(&path, [2, 2, 3], 0.5, 1e-6).is_err());
        std::fs::write(&path, [0u8; 8]).unwrap();
        assert!(load_voxels(&path, [2, 2, 2], 0.5, 1e-6).is_err());
    }

    #[test]
    fn names_parse() {
        assert_eq!("TGV".parse::<CaseKind>().unwrap(), CaseKind::Tgv);
        assert_eq!("rr".parse::<CollisionKind>().unwrap(), CollisionKind::Rr);
        let err = "mrt".parse::<CollisionKind>().unwrap_err().to_string();
        assert!(err.contains("bgk, trt, rr"));
    }
}
