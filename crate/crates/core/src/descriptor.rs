//! D3Q19 velocity set, equilibria and moment extraction.
//!
//! Populations are stored in offset form `f̄_i = f_i − w_i` everywhere, so the
//! rest state at unit density is identically zero.
//!
//! Velocity ordering (frozen, it defines the layout of field dumps):
//!
//! | index | c_i          | index | c_i          |
//! |-------|--------------|-------|--------------|
//! | 0     | ( 0, 0, 0)   | 10    | (-1, 1, 0)   |
//! | 1     | ( 1, 0, 0)   | 11    | ( 1, 0, 1)   |
//! | 2     | (-1, 0, 0)   | 12    | (-1, 0,-1)   |
//! | 3     | ( 0, 1, 0)   | 13    | ( 1, 0,-1)   |
//! | 4     | ( 0,-1, 0)   | 14    | (-1, 0, 1)   |
//! | 5     | ( 0, 0, 1)   | 15    | ( 0, 1, 1)   |
//! | 6     | ( 0, 0,-1)   | 16    | ( 0,-1,-1)   |
//! | 7     | ( 1, 1, 0)   | 17    | ( 0, 1,-1)   |
//! | 8     | (-1,-1, 0)   | 18    | ( 0,-1, 1)   |
//! | 9     | ( 1,-1, 0)   |       |              |

use crate::{Error, Real, Result};

/// Number of discrete velocities.
pub const Q: usize = 19;

/// Lattice speed of sound squared.
pub const CS2: f64 = 1.0 / 3.0;

pub const VELOCITIES: [[i32; 3]; Q] = [
    [0, 0, 0],
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
    [1, 1, 0],
    [-1, -1, 0],
    [1, -1, 0],
    [-1, 1, 0],
    [1, 0, 1],
    [-1, 0, -1],
    [1, 0, -1],
    [-1, 0, 1],
    [0, 1, 1],
    [0, -1, -1],
    [0, 1, -1],
    [0, -1, 1],
];

const W0: f64 = 1.0 / 3.0;
const W1: f64 = 1.0 / 18.0;
const W2: f64 = 1.0 / 36.0;

pub const WEIGHTS: [f64; Q] = [
    W0, W1, W1, W1, W1, W1, W1, W2, W2, W2, W2, W2, W2, W2, W2, W2, W2, W2, W2,
];

pub const OPPOSITE: [usize; Q] = [0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15, 18, 17];

/// Populations of one cell, offset form.
pub type Populations<T> = [T; Q];

/// Symmetric rank-2 tensor stored as `[xx, yy, zz, xy, xz, yz]`.
pub type SymTensor<T> = [T; 6];

/// Index pairs of the [`SymTensor`] components.
pub const SYM_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Third-order Hermite components supported by D3Q19, `[xxy, xxz, xyy, yyz, xzz, yzz]`.
pub const THIRD_ORDER: [(usize, usize, usize); 6] = [(0, 0, 1), (0, 0, 2), (0, 1, 1), (1, 1, 2), (0, 2, 2), (1, 2, 2)];

/// Static description of a velocity set.
#[derive(Clone, Copy, Debug)]
pub struct LatticeDescriptor {
    pub q: usize,
    pub velocities: &'static [[i32; 3]],
    pub weights: &'static [f64],
    pub opposite: &'static [usize],
    pub cs2: f64,
}

pub const D3Q19: LatticeDescriptor = LatticeDescriptor {
    q: Q,
    velocities: &VELOCITIES,
    weights: &WEIGHTS,
    opposite: &OPPOSITE,
    cs2: CS2,
};

/// Macroscopic state of a cell together with its populations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellState<T> {
    pub rho: T,
    pub u: [T; 3],
    pub populations: Populations<T>,
}

impl<T: Real> CellState<T> {
    pub fn from_populations(populations: Populations<T>) -> Self {
        let (rho, u) = density_velocity(&populations);
        Self { rho, u, populations }
    }

    pub fn at_equilibrium(rho: T, u: [T; 3]) -> Self {
        Self {
            rho,
            u,
            populations: equilibrium2(rho, u),
        }
    }
}

/// Density, velocity and off-equilibrium stress of a cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments<T> {
    pub rho: T,
    pub u: [T; 3],
    /// `Σ c_i c_i (f_i − f_i^eq2)`.
    pub pi_neq: SymTensor<T>,
}

#[inline(always)]
pub(crate) fn c<T: Real>(i: usize, a: usize) -> T {
    T::of(VELOCITIES[i][a] as f64)
}

#[inline(always)]
pub(crate) fn w<T: Real>(i: usize) -> T {
    T::of(WEIGHTS[i])
}

/// `c_i · u`.
#[inline(always)]
pub(crate) fn dot_c<T: Real>(i: usize, u: [T; 3]) -> T {
    c::<T>(i, 0) * u[0] + c::<T>(i, 1) * u[1] + c::<T>(i, 2) * u[2]
}

/// `Σ_αβ H2_αβ(c_i) a_αβ` with `H2 = c c − cs² I`.
#[inline(always)]
pub(crate) fn hermite2_contract<T: Real>(i: usize, a: &SymTensor<T>) -> T {
    let cs2 = T::of(CS2);
    let two = T::of(2.0);
    let [cx, cy, cz] = [c::<T>(i, 0), c::<T>(i, 1), c::<T>(i, 2)];
    (cx * cx - cs2) * a[0]
        + (cy * cy - cs2) * a[1]
        + (cz * cz - cs2) * a[2]
        + two * (cx * cy * a[3] + cx * cz * a[4] + cy * cz * a[5])
}

/// `Σ H3(c_i) a` over the six third-order components D3Q19 supports, each
/// counted once (the permutation multiplicity is folded into the prefactor).
#[inline(always)]
pub(crate) fn hermite3_contract<T: Real>(i: usize, a: &[T; 6]) -> T {
    let cs2 = T::of(CS2);
    let [cx, cy, cz] = [c::<T>(i, 0), c::<T>(i, 1), c::<T>(i, 2)];
    let hxx = cx * cx - cs2;
    let hyy = cy * cy - cs2;
    let hzz = cz * cz - cs2;
    hxx * cy * a[0] + hxx * cz * a[1] + hyy * cx * a[2] + hyy * cz * a[3] + hzz * cx * a[4] + hzz * cy * a[5]
}

/// Density and velocity of offset-form populations.
#[inline(always)]
pub fn density_velocity<T: Real>(f: &Populations<T>) -> (T, [T; 3]) {
    let mut rho = T::zero();
    let mut j = [T::zero(); 3];
    for i in 0..Q {
        rho += f[i];
        j[0] += c::<T>(i, 0) * f[i];
        j[1] += c::<T>(i, 1) * f[i];
        j[2] += c::<T>(i, 2) * f[i];
    }
    let rho = rho + T::one();
    let inv = T::one() / rho;
    (rho, [j[0] * inv, j[1] * inv, j[2] * inv])
}

/// Second-order weighted equilibrium in offset form.
#[inline(always)]
pub fn equilibrium2<T: Real>(rho: T, u: [T; 3]) -> Populations<T> {
    let usq = T::of(1.5) * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    let drho = rho - T::one();
    let mut f = [T::zero(); Q];
    for (i, fi) in f.iter_mut().enumerate() {
        let cu = T::of(3.0) * dot_c(i, u);
        *fi = w::<T>(i) * drho + w::<T>(i) * rho * (cu + T::of(0.5) * cu * cu - usq);
    }
    f
}

/// Third-order moments `ρ u_α u_β u_γ` in [`THIRD_ORDER`] layout.
#[inline(always)]
pub(crate) fn third_order_equilibrium<T: Real>(rho: T, u: [T; 3]) -> [T; 6] {
    let mut a = [T::zero(); 6];
    for (k, &(x, y, z)) in THIRD_ORDER.iter().enumerate() {
        a[k] = rho * u[x] * u[y] * u[z];
    }
    a
}

/// Equilibrium extended with the third-order Hermite terms D3Q19 supports
/// (`xxy, xxz, xyy, yyz, xzz, yzz`); used by the regularized collision.
#[inline(always)]
pub fn equilibrium4<T: Real>(rho: T, u: [T; 3]) -> Populations<T> {
    let mut f = equilibrium2(rho, u);
    let a3 = third_order_equilibrium(rho, u);
    // 1 / (2 cs^6)
    let pref = T::of(13.5);
    for (i, fi) in f.iter_mut().enumerate() {
        *fi += w::<T>(i) * pref * hermite3_contract(i, &a3);
    }
    f
}

/// `Σ c_i c_i g_i` for a population-like vector `g`.
#[inline(always)]
pub(crate) fn second_moment<T: Real>(g: &Populations<T>) -> SymTensor<T> {
    let mut p = [T::zero(); 6];
    for i in 0..Q {
        let [cx, cy, cz] = [c::<T>(i, 0), c::<T>(i, 1), c::<T>(i, 2)];
        p[0] += cx * cx * g[i];
        p[1] += cy * cy * g[i];
        p[2] += cz * cz * g[i];
        p[3] += cx * cy * g[i];
        p[4] += cx * cz * g[i];
        p[5] += cy * cz * g[i];
    }
    p
}

/// Density, velocity and off-equilibrium stress.
#[inline(always)]
pub fn moments<T: Real>(f: &Populations<T>) -> Moments<T> {
    let (rho, u) = density_velocity(f);
    let feq = equilibrium2(rho, u);
    let mut neq = [T::zero(); Q];
    for i in 0..Q {
        neq[i] = f[i] - feq[i];
    }
    Moments {
        rho,
        u,
        pi_neq: second_moment(&neq),
    }
}

/// [`moments`] that rejects non-positive (or non-finite) densities.
pub fn checked_moments<T: Real>(f: &Populations<T>) -> Result<Moments<T>> {
    let m = moments(f);
    let rho = m.rho.as_f64();
    if rho.is_nan() || rho <= 0.0 {
        return Err(Error::DegenerateCell(rho));
    }
    Ok(m)
}
