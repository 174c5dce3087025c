//! Boundary links: bounce-back, moving-wall bounce-back and regularized
//! velocity/pressure conditions on flat faces.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::descriptor::{dot_c, equilibrium2, hermite2_contract, second_moment, w, Populations, OPPOSITE, Q};
use crate::{Error, Real, Result};

pub const NO_DYNAMICS: &str = "NoDynamics";
pub const BOUNCE_BACK: &str = "BounceBack";
pub const MOVING_BOUNCE_BACK: &str = "MovingBounceBack";
pub const REGULARIZED_VELOCITY: &str = "Boundary_RegularizedVelocity";
pub const REGULARIZED_PRESSURE: &str = "Boundary_RegularizedPressure";

/// Side of the domain a flat boundary sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    /// Lower face; the outward normal points along `-axis`.
    Minus,
    /// Upper face; the outward normal points along `+axis`.
    Plus,
}

impl Orientation {
    pub fn sign(self) -> i32 {
        match self {
            Orientation::Minus => -1,
            Orientation::Plus => 1,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Orientation::Minus => "M1",
            Orientation::Plus => "1",
        }
    }
}

/// Outward normal of a flat boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Normal {
    pub axis: usize,
    pub orientation: Orientation,
}

impl Normal {
    pub fn new(axis: usize, orientation: Orientation) -> Result<Self> {
        if axis > 2 {
            return Err(Error::Config(format!("boundary axis {axis} is not 0, 1 or 2")));
        }
        Ok(Self { axis, orientation })
    }

    /// `"<axis>_<1|M1>"`.
    pub fn suffix(&self) -> String {
        format!("{}_{}", self.axis, self.orientation.tag())
    }

    pub fn parse_suffix(s: &str) -> Option<Self> {
        let (axis, orient) = s.split_once('_')?;
        let axis = axis.parse().ok().filter(|a: &usize| *a < 3)?;
        let orientation = match orient {
            "1" => Orientation::Plus,
            "M1" => Orientation::Minus,
            _ => return None,
        };
        Some(Self { axis, orientation })
    }

    /// `c_i · n` as an integer.
    #[inline(always)]
    pub fn project(&self, i: usize) -> i32 {
        crate::descriptor::VELOCITIES[i][self.axis] * self.orientation.sign()
    }
}

impl fmt::Display for Normal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.suffix())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundaryKind {
    BounceBack,
    MovingBounceBack,
    RegularizedVelocity,
    RegularizedPressure,
    Periodic,
}

/// Boundary condition description used by the case builders.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub kind: BoundaryKind,
    pub normal: Option<Normal>,
    /// Wall or inlet velocity; for pressure kinds `value[0]` is the density.
    pub value: [f64; 3],
}

impl BoundarySpec {
    pub fn validate(&self) -> Result<()> {
        if self.value.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite boundary value {:?}", self.value)));
        }
        match self.kind {
            BoundaryKind::RegularizedVelocity | BoundaryKind::RegularizedPressure if self.normal.is_none() => Err(
                Error::Config("regularized boundaries need an axis-aligned normal".into()),
            ),
            BoundaryKind::RegularizedPressure if self.value[0] <= 0.0 => Err(Error::Config(format!(
                "boundary density {} must be positive",
                self.value[0]
            ))),
            _ => Ok(()),
        }
    }
}

/// Full-way bounce-back: `f_i ← f_opp(i)`.
#[inline(always)]
pub fn bounce_back<T: Real>(f: &mut Populations<T>) {
    let mut i = 1;
    while i < Q {
        f.swap(i, i + 1);
        i += 2;
    }
}

/// Bounce-back with the Ladd momentum correction for a wall moving at `u_w`
/// (reference density 1): `f_i ← f_opp(i) + 2 w_i (c_i·u_w)/cs²`.
#[inline(always)]
pub fn moving_bounce_back<T: Real>(f: &mut Populations<T>, wall_velocity: [T; 3]) {
    bounce_back(f);
    let six = T::of(6.0);
    for (i, fi) in f.iter_mut().enumerate().skip(1) {
        *fi += six * w::<T>(i) * dot_c(i, wall_velocity);
    }
}

/// Density from the known populations for a prescribed velocity,
/// `ρ = (Σ_{c·n=0} f + 2 Σ_{c·n>0} f) / (1 + u·n)` (full populations).
#[inline(always)]
pub fn boundary_density<T: Real>(f: &Populations<T>, normal: Normal, u: [T; 3]) -> T {
    let (tangential, outgoing) = known_sums(f, normal);
    // the weights of the known set sum to exactly one
    let un = u[normal.axis] * T::of(normal.orientation.sign() as f64);
    (T::one() + tangential + T::of(2.0) * outgoing) / (T::one() + un)
}

#[inline(always)]
fn known_sums<T: Real>(f: &Populations<T>, normal: Normal) -> (T, T) {
    let mut tangential = T::zero();
    let mut outgoing = T::zero();
    for (i, &fi) in f.iter().enumerate() {
        match normal.project(i) {
            0 => tangential += fi,
            1 => outgoing += fi,
            _ => {}
        }
    }
    (tangential, outgoing)
}

/// Rebuilds all populations from `(ρ, u)` and the off-equilibrium stress
/// estimated by bouncing back the off-equilibrium parts of the unknown
/// (incoming, `c_i·n < 0`) populations.
#[inline(always)]
fn regularize_from<T: Real>(f: &mut Populations<T>, normal: Normal, rho: T, u: [T; 3]) {
    let feq = equilibrium2(rho, u);
    let mut neq = [T::zero(); Q];
    for i in 0..Q {
        let src = if normal.project(i) < 0 { OPPOSITE[i] } else { i };
        neq[i] = f[src] - feq[src];
    }
    let pi = second_moment(&neq);
    let p2 = T::of(4.5);
    for i in 0..Q {
        f[i] = feq[i] + w::<T>(i) * p2 * hermite2_contract(i, &pi);
    }
}

/// Regularized Dirichlet velocity condition.
#[inline(always)]
pub fn regularized_velocity<T: Real>(f: &mut Populations<T>, normal: Normal, u: [T; 3]) {
    let rho = boundary_density(f, normal, u);
    regularize_from(f, normal, rho, u);
}

/// Regularized Dirichlet density (pressure) condition with zero tangential
/// velocity; the normal velocity follows from the known populations.
#[inline(always)]
pub fn regularized_pressure<T: Real>(f: &mut Populations<T>, normal: Normal, rho: T) {
    let (tangential, outgoing) = known_sums(f, normal);
    let un = (T::one() + tangential + T::of(2.0) * outgoing) / rho - T::one();
    let mut u = [T::zero(); 3];
    u[normal.axis] = un * T::of(normal.orientation.sign() as f64);
    regularize_from(f, normal, rho, u);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{density_velocity, moments, VELOCITIES, WEIGHTS};
    use proptest::prelude::*;

    fn sample(seed: f64) -> Populations<f64> {
        let mut f = equilibrium2(1.01, [0.03, 0.02, -0.01]);
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += 2e-3 * ((i as f64 + 0.5) * seed).sin();
        }
        f
    }

    #[test]
    fn bounce_back_leaves_rest_equilibrium_unchanged() {
        let f0 = equilibrium2(1.05f64, [0.0; 3]);
        let mut f = f0;
        bounce_back(&mut f);
        assert_eq!(f, f0);
    }

    #[test]
    fn bounce_back_reverses_momentum() {
        let f0 = sample(0.77);
        let mut f = f0;
        bounce_back(&mut f);
        for a in 0..3 {
            let before: f64 = (0..Q).map(|i| VELOCITIES[i][a] as f64 * f0[i]).sum();
            let after: f64 = (0..Q).map(|i| VELOCITIES[i][a] as f64 * f[i]).sum();
            assert!((before + after).abs() < 1e-16);
        }
        assert_eq!(f.iter().sum::<f64>(), {
            let mut g = f0;
            bounce_back(&mut g);
            g.iter().sum::<f64>()
        });
    }

    #[test]
    fn moving_bounce_back_correction_per_direction() {
        let cs = (1.0f64 / 3.0).sqrt();
        let uw = [cs * 0.1, 0.0, 0.0];
        let f0 = sample(1.9);
        let mut plain = f0;
        bounce_back(&mut plain);
        let mut moving = f0;
        moving_bounce_back(&mut moving, uw);
        for i in 0..Q {
            let expected = 2.0 * WEIGHTS[i] * VELOCITIES[i][0] as f64 * uw[0] / (1.0 / 3.0);
            assert!((moving[i] - plain[i] - expected).abs() < 1e-17, "i={i}");
        }
        let mut still = f0;
        moving_bounce_back(&mut still, [0.0; 3]);
        assert_eq!(still, plain);
    }

    #[test]
    fn regularized_velocity_at_equilibrium_is_exact() {
        let n = Normal::new(0, Orientation::Minus).unwrap();
        let u = [0.04, 0.0, 0.0];
        let f0 = equilibrium2(1.02f64, u);
        let mut f = f0;
        // scramble the unknown populations
        for i in 0..Q {
            if n.project(i) < 0 {
                f[i] = 0.3;
            }
        }
        regularized_velocity(&mut f, n, u);
        for i in 0..Q {
            assert!((f[i] - f0[i]).abs() < 1e-15, "i={i}");
        }
    }

    #[test]
    fn boundary_density_closed_form() {
        // inlet on the lower x face, known populations have c_x <= 0
        let n = Normal::new(0, Orientation::Minus).unwrap();
        let f = sample(0.41);
        let ux = 0.05;
        let mut s_zero = 0.0;
        let mut s_out = 0.0;
        for i in 0..Q {
            let full = f[i] + WEIGHTS[i];
            match VELOCITIES[i][0] {
                0 => s_zero += full,
                -1 => s_out += full,
                _ => {}
            }
        }
        let expected = (s_zero + 2.0 * s_out) / (1.0 - ux);
        let rho = boundary_density(&f, n, [ux, 0.0, 0.0]);
        assert!((rho - expected).abs() < 1e-15);
    }

    #[test]
    fn regularized_pressure_imposes_density() {
        let n = Normal::new(2, Orientation::Plus).unwrap();
        let mut f = sample(2.3);
        regularized_pressure(&mut f, n, 0.998);
        let (rho, u) = density_velocity(&f);
        assert!((rho - 0.998).abs() < 1e-14);
        assert!(u[0].abs() < 1e-17);
        assert!(u[1].abs() < 1e-17);
    }

    #[test]
    fn normal_suffix_round_trip() {
        for axis in 0..3 {
            for o in [Orientation::Minus, Orientation::Plus] {
                let n = Normal::new(axis, o).unwrap();
                assert_eq!(Normal::parse_suffix(&n.suffix()), Some(n));
            }
        }
        assert_eq!(Normal::new(0, Orientation::Plus).unwrap().suffix(), "0_1");
        assert_eq!(Normal::new(0, Orientation::Minus).unwrap().suffix(), "0_M1");
        assert!(Normal::parse_suffix("3_1").is_none());
        assert!(Normal::new(3, Orientation::Plus).is_err());
    }

    #[test]
    fn spec_validation() {
        let bad = BoundarySpec {
            kind: BoundaryKind::RegularizedVelocity,
            normal: None,
            value: [0.0; 3],
        };
        assert!(bad.validate().is_err());
        let nan = BoundarySpec {
            kind: BoundaryKind::MovingBounceBack,
            normal: None,
            value: [f64::NAN, 0.0, 0.0],
        };
        assert!(nan.validate().is_err());
    }

    proptest! {
        #[test]
        fn bounce_back_is_an_involution(vals in proptest::array::uniform19(-0.1f64..0.1)) {
            let mut f = vals;
            bounce_back(&mut f);
            bounce_back(&mut f);
            prop_assert_eq!(f, vals);
        }

        #[test]
        fn moving_bounce_back_is_linear_in_wall_velocity(
            seed in 0.1f64..5.0, a in -0.05f64..0.05, b in -0.05f64..0.05,
        ) {
            let f0 = sample(seed);
            let run = |u: [f64; 3]| { let mut f = f0; moving_bounce_back(&mut f, u); f };
            let base = run([0.0; 3]);
            let fa = run([a, 0.0, b]);
            let fb = run([2.0 * a, 0.0, 2.0 * b]);
            for i in 0..Q {
                prop_assert!(((fb[i] - base[i]) - 2.0 * (fa[i] - base[i])).abs() < 1e-15);
            }
        }

        #[test]
        fn regularized_output_ignores_unknown_populations(
            seed in 0.1f64..5.0, ux in -0.05f64..0.05, axis in 0usize..3, plus in proptest::bool::ANY,
            junk in proptest::array::uniform19(-0.5f64..0.5),
        ) {
            let n = Normal::new(axis, if plus { Orientation::Plus } else { Orientation::Minus }).unwrap();
            let mut u = [0.0; 3];
            u[axis] = ux;
            let f0 = sample(seed);
            let mut g = f0;
            let mut h = f0;
            for i in 0..Q {
                if n.project(i) < 0 {
                    h[i] = junk[i];
                }
            }
            regularized_velocity(&mut g, n, u);
            regularized_velocity(&mut h, n, u);
            prop_assert_eq!(g, h);
            let mut gp = f0;
            let mut hp = f0;
            for i in 0..Q {
                if n.project(i) < 0 {
                    hp[i] = junk[i];
                }
            }
            regularized_pressure(&mut gp, n, 1.001);
            regularized_pressure(&mut hp, n, 1.001);
            prop_assert_eq!(gp, hp);
        }

        #[test]
        fn regularized_velocity_is_a_projection(seed in 0.1f64..5.0, ux in -0.05f64..0.05) {
            let n = Normal::new(0, Orientation::Minus).unwrap();
            let u = [ux, 0.0, 0.0];
            let mut g = sample(seed);
            regularized_velocity(&mut g, n, u);
            let mut h = g;
            regularized_velocity(&mut h, n, u);
            for i in 0..Q {
                prop_assert!((h[i] - g[i]).abs() < 1e-15);
            }
            let m = moments(&g);
            prop_assert!((m.u[0] - ux).abs() < 1e-15);
        }
    }
}
