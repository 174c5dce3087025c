//! Cell-local collision kernels.
//!
//! Every kernel takes the 19 populations of one cell, already pulled into a
//! local array, and updates them in place. The reference and accelerated
//! lattices call exactly these functions.

use serde::{Deserialize, Serialize};

use crate::descriptor::{
    density_velocity, equilibrium2, hermite2_contract, hermite3_contract, second_moment, third_order_equilibrium, w,
    Populations, SymTensor, Q, THIRD_ORDER,
};
use crate::{Error, Real, Result};

pub const COLL_BGK: &str = "COLL_BGK";
pub const COLL_TRT: &str = "COLL_TRT";
pub const COLL_RR: &str = "COLL_RR";
pub const LES_SMAGORINSKY: &str = "LES_Smagorinsky";

/// Default TRT magic parameter (places straight bounce-back walls half-way).
pub const MAGIC_LAMBDA: f64 = 3.0 / 16.0;

/// Relaxation parameters shared by the base collision models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionParams {
    /// Shear relaxation rate `1/τ`.
    pub omega: f64,
    /// TRT magic parameter Λ.
    pub lambda: f64,
    /// Smagorinsky constant.
    pub smagorinsky_c: f64,
    /// Rate for the bulk and third-order modes of the regularized model.
    pub omega_bulk_ho: f64,
}

impl Default for CollisionParams {
    fn default() -> Self {
        Self {
            omega: 1.0,
            lambda: MAGIC_LAMBDA,
            smagorinsky_c: 0.0,
            omega_bulk_ho: 1.0,
        }
    }
}

impl CollisionParams {
    pub fn with_omega(omega: f64) -> Self {
        Self {
            omega,
            ..Self::default()
        }
    }

    /// Odd-moment rate from `Λ = (1/ω − 1/2)(1/ω⁻ − 1/2)`.
    pub fn omega_minus(&self) -> f64 {
        trt_omega_minus(self.omega, self.lambda)
    }

    /// Λ for which TRT degenerates to a single rate (`ω⁻ = ω`).
    pub fn single_rate_lambda(omega: f64) -> f64 {
        let x = 1.0 / omega - 0.5;
        x * x
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return Err(Error::UnstableOmega(self.omega));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!(
                "TRT lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.smagorinsky_c >= 0.0) || !self.smagorinsky_c.is_finite() {
            return Err(Error::Config(format!(
                "Smagorinsky constant must be non-negative, got {}",
                self.smagorinsky_c
            )));
        }
        if !(self.omega_bulk_ho > 0.0 && self.omega_bulk_ho < 2.0) {
            return Err(Error::UnstableOmega(self.omega_bulk_ho));
        }
        Ok(())
    }
}

#[inline(always)]
pub fn trt_omega_minus<T: Real>(omega: T, lambda: T) -> T {
    let half = T::of(0.5);
    T::one() / (half + lambda / (T::one() / omega - half))
}

/// Single-relaxation-time collision toward the second-order equilibrium.
#[inline(always)]
pub fn bgk<T: Real>(f: &mut Populations<T>, omega: T) {
    let (rho, u) = density_velocity(f);
    let feq = equilibrium2(rho, u);
    for i in 0..Q {
        f[i] -= omega * (f[i] - feq[i]);
    }
}

/// Two-relaxation-time collision: even parts relax with `omega`, odd parts
/// with `omega_minus`.
#[inline(always)]
pub fn trt<T: Real>(f: &mut Populations<T>, omega: T, omega_minus: T) {
    let (rho, u) = density_velocity(f);
    let feq = equilibrium2(rho, u);
    let half = T::of(0.5);
    f[0] -= omega * (f[0] - feq[0]);
    // pairs are stored as (odd, even) neighbours: 1/2, 3/4, ..., 17/18
    let mut i = 1;
    while i < Q {
        let o = i + 1;
        let fp = half * (f[i] + f[o]);
        let fm = half * (f[i] - f[o]);
        let ep = half * (feq[i] + feq[o]);
        let em = half * (feq[i] - feq[o]);
        let even = omega * (fp - ep);
        let odd = omega_minus * (fm - em);
        f[i] = f[i] - even - odd;
        f[o] = f[o] - even + odd;
        i += 2;
    }
}

/// Recursive third-order coefficients `a_αβγ = u_α π_βγ + u_β π_αγ + u_γ π_αβ`.
#[inline(always)]
fn recursive_third_order<T: Real>(u: [T; 3], pi: &SymTensor<T>) -> [T; 6] {
    let p = |a: usize, b: usize| -> T {
        match (a.min(b), a.max(b)) {
            (0, 0) => pi[0],
            (1, 1) => pi[1],
            (2, 2) => pi[2],
            (0, 1) => pi[3],
            (0, 2) => pi[4],
            _ => pi[5],
        }
    };
    let mut a3 = [T::zero(); 6];
    for (k, &(a, b, g)) in THIRD_ORDER.iter().enumerate() {
        a3[k] = u[a] * p(b, g) + u[b] * p(a, g) + u[g] * p(a, b);
    }
    a3
}

/// Regularized relaxation shared by [`rr`] and [`regularize`].
#[inline(always)]
fn regularized_relax<T: Real>(f: &mut Populations<T>, omega: T, omega_bulk_ho: T) {
    let (rho, u) = density_velocity(f);
    let feq = equilibrium2(rho, u);
    let mut neq = [T::zero(); Q];
    for i in 0..Q {
        neq[i] = f[i] - feq[i];
    }
    let pi = second_moment(&neq);
    let keep = T::one() - omega;
    let keep_ho = T::one() - omega_bulk_ho;
    let trace = (pi[0] + pi[1] + pi[2]) / T::of(3.0);
    let post2 = [
        keep * (pi[0] - trace) + keep_ho * trace,
        keep * (pi[1] - trace) + keep_ho * trace,
        keep * (pi[2] - trace) + keep_ho * trace,
        keep * pi[3],
        keep * pi[4],
        keep * pi[5],
    ];
    let a3 = recursive_third_order(u, &pi);
    let a3eq = third_order_equilibrium(rho, u);
    let mut post3 = [T::zero(); 6];
    for k in 0..6 {
        post3[k] = keep_ho * a3[k];
    }
    let p2 = T::of(4.5);
    let p3 = T::of(13.5);
    for i in 0..Q {
        let eq3 = p3 * hermite3_contract(i, &a3eq);
        f[i] = feq[i] + w::<T>(i) * (eq3 + p2 * hermite2_contract(i, &post2) + p3 * hermite3_contract(i, &post3));
    }
}

/// Recursive regularized collision on top of the third-order equilibrium.
///
/// The deviatoric stress relaxes with `omega`; its trace and the recursively
/// reconstructed third-order coefficients relax with `omega_bulk_ho`.
#[inline(always)]
pub fn rr<T: Real>(f: &mut Populations<T>, omega: T, omega_bulk_ho: T) {
    regularized_relax(f, omega, omega_bulk_ho);
}

/// Projects `f` onto `f^eq4 + f^(1)(Π^neq)` without relaxing it.
pub fn regularize<T: Real>(f: &mut Populations<T>) {
    regularized_relax(f, T::zero(), T::zero());
}

/// `sqrt(Π:Π)`.
#[inline(always)]
pub fn stress_norm<T: Real>(pi: &SymTensor<T>) -> T {
    let two = T::of(2.0);
    (pi[0] * pi[0] + pi[1] * pi[1] + pi[2] * pi[2] + two * (pi[3] * pi[3] + pi[4] * pi[4] + pi[5] * pi[5])).sqrt()
}

/// Effective relaxation rate of the Smagorinsky closure,
/// `τ_eff = (τ + sqrt(τ² + 18·√2·C²·|Π^neq|/ρ)) / 2`.
#[inline(always)]
pub fn smagorinsky_omega<T: Real>(f: &Populations<T>, omega: T, smagorinsky_c: T) -> T {
    let (rho, u) = density_velocity(f);
    let feq = equilibrium2(rho, u);
    let mut neq = [T::zero(); Q];
    for i in 0..Q {
        neq[i] = f[i] - feq[i];
    }
    let pi = second_moment(&neq);
    smagorinsky_omega_from_stress(rho, &pi, omega, smagorinsky_c)
}

#[inline(always)]
pub fn smagorinsky_omega_from_stress<T: Real>(rho: T, pi: &SymTensor<T>, omega: T, smagorinsky_c: T) -> T {
    if smagorinsky_c == T::zero() {
        return omega;
    }
    let tau = T::one() / omega;
    // 2·√2 / cs⁴
    let pref = T::of(18.0 * std::f64::consts::SQRT_2);
    let tau_eff =
        T::of(0.5) * (tau + (tau * tau + pref * smagorinsky_c * smagorinsky_c * stress_norm(pi) / rho).sqrt());
    T::one() / tau_eff
}
