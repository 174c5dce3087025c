//! Dynamics chains in their two forms.
//!
//! A [`DynamicsChain`] is the plain-data description of the links attached to
//! a cell (boundary completion, LES closure, base collision). It converts to
//!
//! * a linked list of [`Dynamics`] trait objects for the reference lattice, and
//! * a [`ChainShape`] plus a flat parameter slice for the accelerated lattice.
//!
//! The chain string joins the link identifiers with [`CHAIN_SEPARATOR`]; the
//! accelerated lattice derives its integer tags from it.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::boundaries::{
    bounce_back, moving_bounce_back, regularized_pressure, regularized_velocity, Normal, BOUNCE_BACK,
    MOVING_BOUNCE_BACK, NO_DYNAMICS, REGULARIZED_PRESSURE, REGULARIZED_VELOCITY,
};
use crate::collision::{
    bgk, rr, smagorinsky_omega, trt, trt_omega_minus, CollisionParams, COLL_BGK, COLL_RR, COLL_TRT, LES_SMAGORINSKY,
};
use crate::descriptor::Populations;
use crate::{Error, Real, Result};

pub const CHAIN_SEPARATOR: char = '|';

/// Number of collision parameters stored for every fluid chain instance:
/// `omega, lambda, smagorinsky_c, omega_bulk_ho`.
const COLLISION_SLOTS: usize = 4;

/// One element of a dynamics chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Link {
    NoDynamics,
    BounceBack,
    MovingBounceBack { wall_velocity: [f64; 3] },
    RegularizedVelocity { normal: Normal, velocity: [f64; 3] },
    RegularizedPressure { normal: Normal, density: f64 },
    Smagorinsky,
    Bgk,
    Trt,
    Rr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Terminal,
    Completion,
    Les,
    Base,
}

impl Link {
    pub fn id(&self) -> String {
        match self {
            Link::NoDynamics => NO_DYNAMICS.into(),
            Link::BounceBack => BOUNCE_BACK.into(),
            Link::MovingBounceBack { .. } => MOVING_BOUNCE_BACK.into(),
            Link::RegularizedVelocity { normal, .. } => format!("{REGULARIZED_VELOCITY}_{}", normal.suffix()),
            Link::RegularizedPressure { normal, .. } => format!("{REGULARIZED_PRESSURE}_{}", normal.suffix()),
            Link::Smagorinsky => LES_SMAGORINSKY.into(),
            Link::Bgk => COLL_BGK.into(),
            Link::Trt => COLL_TRT.into(),
            Link::Rr => COLL_RR.into(),
        }
    }

    fn role(&self) -> Role {
        match self {
            Link::NoDynamics | Link::BounceBack | Link::MovingBounceBack { .. } => Role::Terminal,
            Link::RegularizedVelocity { .. } | Link::RegularizedPressure { .. } => Role::Completion,
            Link::Smagorinsky => Role::Les,
            Link::Bgk | Link::Trt | Link::Rr => Role::Base,
        }
    }

    /// Parses a link identifier; boundary values are filled with zeros.
    fn parse_id(id: &str) -> Result<Self> {
        let link = match id {
            NO_DYNAMICS => Link::NoDynamics,
            BOUNCE_BACK => Link::BounceBack,
            MOVING_BOUNCE_BACK => Link::MovingBounceBack {
                wall_velocity: [0.0; 3],
            },
            LES_SMAGORINSKY => Link::Smagorinsky,
            COLL_BGK => Link::Bgk,
            COLL_TRT => Link::Trt,
            COLL_RR => Link::Rr,
            other => {
                let parse_normal = |prefix: &str| {
                    other
                        .strip_prefix(prefix)
                        .and_then(|rest| rest.strip_prefix('_'))
                        .and_then(Normal::parse_suffix)
                };
                if let Some(normal) = parse_normal(REGULARIZED_VELOCITY) {
                    Link::RegularizedVelocity {
                        normal,
                        velocity: [0.0; 3],
                    }
                } else if let Some(normal) = parse_normal(REGULARIZED_PRESSURE) {
                    Link::RegularizedPressure { normal, density: 1.0 }
                } else {
                    return Err(Error::UnknownModel(other.to_string()));
                }
            }
        };
        Ok(link)
    }

    fn value_len(&self) -> usize {
        match self {
            Link::MovingBounceBack { .. } | Link::RegularizedVelocity { .. } => 3,
            Link::RegularizedPressure { .. } => 1,
            _ => 0,
        }
    }
}

/// Every link identifier that can appear in a chain, including all boundary
/// orientations.
pub fn known_link_ids() -> Vec<String> {
    let mut ids: Vec<String> = [
        NO_DYNAMICS,
        BOUNCE_BACK,
        MOVING_BOUNCE_BACK,
        LES_SMAGORINSKY,
        COLL_BGK,
        COLL_TRT,
        COLL_RR,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for prefix in [REGULARIZED_VELOCITY, REGULARIZED_PRESSURE] {
        for axis in 0..3 {
            for o in ["1", "M1"] {
                ids.push(format!("{prefix}_{axis}_{o}"));
            }
        }
    }
    ids
}

/// Ordered composition of links attached to a cell, plus its relaxation
/// parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsChain {
    pub links: Vec<Link>,
    pub params: CollisionParams,
}

impl DynamicsChain {
    /// Validates the link order: a terminal link alone, or
    /// `[completion] [LES] base`.
    pub fn new(links: Vec<Link>, params: CollisionParams) -> Result<Self> {
        let chain = Self { links, params };
        chain.check()?;
        Ok(chain.normalized())
    }

    fn check(&self) -> Result<()> {
        let err = |reason: &str| Error::InvalidChain {
            chain: self.chain_string(),
            reason: reason.to_string(),
        };
        let roles: Vec<Role> = self.links.iter().map(Link::role).collect();
        match roles.as_slice() {
            [Role::Terminal] => Ok(()),
            [.., Role::Base] => {
                let prefix = &roles[..roles.len() - 1];
                let ok = matches!(
                    prefix,
                    [] | [Role::Completion] | [Role::Les] | [Role::Completion, Role::Les]
                );
                if !ok {
                    return Err(err("expected [boundary completion] [LES] base collision"));
                }
                self.params.validate()?;
                for link in &self.links {
                    match link {
                        Link::RegularizedVelocity { velocity, .. } if velocity.iter().any(|v| !v.is_finite()) => {
                            return Err(err("non-finite boundary velocity"))
                        }
                        Link::RegularizedPressure { density, .. } if !(*density > 0.0) => {
                            return Err(err("boundary density must be positive"))
                        }
                        _ => {}
                    }
                }
                Ok(())
            }
            [] => Err(err("empty chain")),
            _ => Err(err("exactly one base collision (or one terminal model) is required")),
        }
    }

    /// Terminal chains carry no relaxation parameters.
    fn normalized(mut self) -> Self {
        if self.is_terminal() {
            self.params = CollisionParams::default();
        }
        self
    }

    fn is_terminal(&self) -> bool {
        matches!(self.links.as_slice(), [l] if l.role() == Role::Terminal)
    }

    pub fn no_dynamics() -> Self {
        Self::new(vec![Link::NoDynamics], CollisionParams::default()).expect("valid")
    }

    pub fn bounce_back() -> Self {
        Self::new(vec![Link::BounceBack], CollisionParams::default()).expect("valid")
    }

    pub fn moving_bounce_back(wall_velocity: [f64; 3]) -> Self {
        Self::new(
            vec![Link::MovingBounceBack { wall_velocity }],
            CollisionParams::default(),
        )
        .expect("valid")
    }

    pub fn bgk(omega: f64) -> Result<Self> {
        Self::new(vec![Link::Bgk], CollisionParams::with_omega(omega))
    }

    pub fn trt(omega: f64, lambda: f64) -> Result<Self> {
        Self::new(
            vec![Link::Trt],
            CollisionParams {
                lambda,
                ..CollisionParams::with_omega(omega)
            },
        )
    }

    pub fn rr(omega: f64, omega_bulk_ho: f64) -> Result<Self> {
        Self::new(
            vec![Link::Rr],
            CollisionParams {
                omega_bulk_ho,
                ..CollisionParams::with_omega(omega)
            },
        )
    }

    /// Inserts the Smagorinsky link in front of the base collision.
    pub fn with_smagorinsky(mut self, c: f64) -> Result<Self> {
        let base = self.links.len().checked_sub(1).ok_or_else(|| Error::InvalidChain {
            chain: String::new(),
            reason: "empty chain".into(),
        })?;
        if !self.links.contains(&Link::Smagorinsky) {
            self.links.insert(base, Link::Smagorinsky);
        }
        self.params.smagorinsky_c = c;
        Self::new(self.links, self.params)
    }

    /// Prepends a regularized boundary completion.
    pub fn with_completion(mut self, link: Link) -> Result<Self> {
        if link.role() != Role::Completion {
            return Err(Error::InvalidChain {
                chain: link.id(),
                reason: "not a boundary-completion link".into(),
            });
        }
        self.links.insert(0, link);
        Self::new(self.links, self.params)
    }

    /// Link identifiers joined by [`CHAIN_SEPARATOR`].
    pub fn chain_string(&self) -> String {
        let ids: Vec<String> = self.links.iter().map(Link::id).collect();
        ids.join(&CHAIN_SEPARATOR.to_string())
    }

    pub fn shape(&self) -> ChainShape {
        ChainShape::parse(&self.chain_string()).expect("validated chain has a shape")
    }

    /// Flat parameter record of this chain instance, laid out as described by
    /// [`ChainShape::param_len`].
    pub fn encode_params(&self) -> Vec<f64> {
        if self.is_terminal() {
            return match &self.links[0] {
                Link::MovingBounceBack { wall_velocity } => wall_velocity.to_vec(),
                _ => Vec::new(),
            };
        }
        let p = &self.params;
        let mut out = vec![p.omega, p.lambda, p.smagorinsky_c, p.omega_bulk_ho];
        for link in &self.links {
            match link {
                Link::RegularizedVelocity { velocity, .. } => out.extend_from_slice(velocity),
                Link::RegularizedPressure { density, .. } => out.push(*density),
                _ => {}
            }
        }
        out
    }

    /// Inverse of (`chain_string`, `encode_params`).
    pub fn decode(chain: &str, params: &[f64]) -> Result<Self> {
        let shape = ChainShape::parse(chain)?;
        if params.len() != shape.param_len() {
            return Err(Error::Format(format!(
                "chain '{chain}' expects {} parameters, got {}",
                shape.param_len(),
                params.len()
            )));
        }
        let mut links = chain
            .split(CHAIN_SEPARATOR)
            .map(Link::parse_id)
            .collect::<Result<Vec<_>>>()?;
        let mut collision = CollisionParams::default();
        let mut cursor = 0;
        if links.len() == 1 && links[0].role() == Role::Terminal {
            if let Link::MovingBounceBack { wall_velocity } = &mut links[0] {
                wall_velocity.copy_from_slice(&params[..3]);
            }
        } else {
            collision = CollisionParams {
                omega: params[0],
                lambda: params[1],
                smagorinsky_c: params[2],
                omega_bulk_ho: params[3],
            };
            cursor = COLLISION_SLOTS;
        }
        for link in &mut links {
            let n = if link.role() == Role::Completion {
                link.value_len()
            } else {
                0
            };
            match link {
                Link::RegularizedVelocity { velocity, .. } => velocity.copy_from_slice(&params[cursor..cursor + 3]),
                Link::RegularizedPressure { density, .. } => *density = params[cursor],
                _ => {}
            }
            cursor += n;
        }
        Self::new(links, collision)
    }

    /// Builds the object-oriented form used by the reference lattice.
    pub fn instantiate<T: Real>(&self) -> Box<dyn Dynamics<T>> {
        let p = &self.params;
        let mut links = self.links.iter().rev();
        let last = links.next().expect("non-empty chain");
        let mut dynamics: Box<dyn Dynamics<T>> = match last {
            Link::NoDynamics => Box::new(NoDynamicsModel),
            Link::BounceBack => Box::new(BounceBackModel),
            Link::MovingBounceBack { wall_velocity } => Box::new(MovingWallModel {
                wall_velocity: wall_velocity.map(T::of),
            }),
            Link::Bgk => Box::new(BgkModel { omega: T::of(p.omega) }),
            Link::Trt => Box::new(TrtModel {
                omega: T::of(p.omega),
                lambda: T::of(p.lambda),
            }),
            Link::Rr => Box::new(RrModel {
                omega: T::of(p.omega),
                omega_bulk_ho: T::of(p.omega_bulk_ho),
            }),
            other => unreachable!("{} cannot terminate a chain", other.id()),
        };
        for link in links {
            dynamics = match link {
                Link::Smagorinsky => Box::new(SmagorinskyModel {
                    c: T::of(p.smagorinsky_c),
                    inner: dynamics,
                }),
                Link::RegularizedVelocity { normal, velocity } => Box::new(RegularizedVelocityModel {
                    normal: *normal,
                    velocity: velocity.map(T::of),
                    raw: *velocity,
                    inner: dynamics,
                }),
                Link::RegularizedPressure { normal, density } => Box::new(RegularizedPressureModel {
                    normal: *normal,
                    density: T::of(*density),
                    raw: *density,
                    inner: dynamics,
                }),
                other => unreachable!("{} cannot wrap another model", other.id()),
            };
        }
        dynamics
    }
}

impl fmt::Display for DynamicsChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.chain_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaseModel {
    Bgk,
    Trt,
    Rr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Completion {
    None,
    Velocity(Normal),
    Pressure(Normal),
}

/// Code path selected by a tag in the accelerated kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChainShape {
    NoDynamics,
    BounceBack,
    MovingBounceBack,
    Fluid {
        completion: Completion,
        les: bool,
        base: BaseModel,
    },
}

impl ChainShape {
    pub fn parse(chain: &str) -> Result<Self> {
        let links = chain
            .split(CHAIN_SEPARATOR)
            .map(Link::parse_id)
            .collect::<Result<Vec<_>>>()?;
        let invalid = |reason: &str| Error::InvalidChain {
            chain: chain.to_string(),
            reason: reason.to_string(),
        };
        match links.as_slice() {
            [Link::NoDynamics] => return Ok(ChainShape::NoDynamics),
            [Link::BounceBack] => return Ok(ChainShape::BounceBack),
            [Link::MovingBounceBack { .. }] => return Ok(ChainShape::MovingBounceBack),
            _ => {}
        }
        let (base, rest) = links.split_last().ok_or_else(|| invalid("empty chain"))?;
        let base = match base {
            Link::Bgk => BaseModel::Bgk,
            Link::Trt => BaseModel::Trt,
            Link::Rr => BaseModel::Rr,
            _ => return Err(invalid("last link must be a base collision")),
        };
        let (completion, les) = match rest {
            [] => (Completion::None, false),
            [Link::Smagorinsky] => (Completion::None, true),
            [c] | [c, Link::Smagorinsky] => {
                let les = rest.len() == 2;
                match c {
                    Link::RegularizedVelocity { normal, .. } => (Completion::Velocity(*normal), les),
                    Link::RegularizedPressure { normal, .. } => (Completion::Pressure(*normal), les),
                    _ => return Err(invalid("expected [boundary completion] [LES] base collision")),
                }
            }
            _ => return Err(invalid("expected [boundary completion] [LES] base collision")),
        };
        Ok(ChainShape::Fluid { completion, les, base })
    }

    /// Length of the parameter record: 0 for plain terminal models, 3 for a
    /// moving wall, otherwise the collision slots plus the completion values.
    pub fn param_len(&self) -> usize {
        match self {
            ChainShape::NoDynamics | ChainShape::BounceBack => 0,
            ChainShape::MovingBounceBack => 3,
            ChainShape::Fluid { completion, .. } => {
                COLLISION_SLOTS
                    + match completion {
                        Completion::None => 0,
                        Completion::Velocity(_) => 3,
                        Completion::Pressure(_) => 1,
                    }
            }
        }
    }

    /// Whether the cell carries a fluid (it has a base collision).
    pub fn is_fluid(&self) -> bool {
        matches!(self, ChainShape::Fluid { .. })
    }

    /// Executes the chain on one cell. `params` starts at the cell's record.
    #[inline(always)]
    pub fn apply<T: Real>(&self, params: &[f64], f: &mut Populations<T>) {
        match *self {
            ChainShape::NoDynamics => {}
            ChainShape::BounceBack => bounce_back(f),
            ChainShape::MovingBounceBack => {
                moving_bounce_back(f, [T::of(params[0]), T::of(params[1]), T::of(params[2])])
            }
            ChainShape::Fluid { completion, les, base } => {
                match completion {
                    Completion::None => {}
                    Completion::Velocity(n) => {
                        regularized_velocity(f, n, [T::of(params[4]), T::of(params[5]), T::of(params[6])])
                    }
                    Completion::Pressure(n) => regularized_pressure(f, n, T::of(params[4])),
                }
                let mut omega = T::of(params[0]);
                if les {
                    omega = smagorinsky_omega(f, omega, T::of(params[2]));
                }
                match base {
                    BaseModel::Bgk => bgk(f, omega),
                    BaseModel::Trt => trt(f, omega, trt_omega_minus(omega, T::of(params[1]))),
                    BaseModel::Rr => rr(f, omega, T::of(params[3])),
                }
            }
        }
    }
}

/// Object-oriented cell dynamics, resolved per cell through dynamic dispatch.
pub trait Dynamics<T: Real>: fmt::Debug {
    fn collide(&self, f: &mut Populations<T>);

    /// Chain string of this model and everything it wraps.
    fn name(&self) -> String;

    /// Conversion policy to the plain-data chain; models without one cannot
    /// be mirrored to the accelerated lattice.
    fn policy(&self) -> Option<DynamicsChain> {
        None
    }

    /// Relaxation rate of the base collision, if any.
    fn omega(&self) -> Option<T> {
        None
    }

    fn collide_with_omega(&self, f: &mut Populations<T>, _omega: T) {
        self.collide(f)
    }
}

fn terminal_policy(link: Link) -> Option<DynamicsChain> {
    DynamicsChain::new(vec![link], CollisionParams::default()).ok()
}

#[derive(Debug)]
struct NoDynamicsModel;

impl<T: Real> Dynamics<T> for NoDynamicsModel {
    fn collide(&self, _f: &mut Populations<T>) {}

    fn name(&self) -> String {
        NO_DYNAMICS.into()
    }

    fn policy(&self) -> Option<DynamicsChain> {
        terminal_policy(Link::NoDynamics)
    }
}

#[derive(Debug)]
struct BounceBackModel;

impl<T: Real> Dynamics<T> for BounceBackModel {
    fn collide(&self, f: &mut Populations<T>) {
        bounce_back(f)
    }

    fn name(&self) -> String {
        BOUNCE_BACK.into()
    }

    fn policy(&self) -> Option<DynamicsChain> {
        terminal_policy(Link::BounceBack)
    }
}

#[derive(Debug)]
struct MovingWallModel<T> {
    wall_velocity: [T; 3],
}

impl<T: Real> Dynamics<T> for MovingWallModel<T> {
    fn collide(&self, f: &mut Populations<T>) {
        moving_bounce_back(f, self.wall_velocity)
    }

    fn name(&self) -> String {
        MOVING_BOUNCE_BACK.into()
    }

    fn policy(&self) -> Option<DynamicsChain> {
        terminal_policy(Link::MovingBounceBack {
            wall_velocity: self.wall_velocity.map(Real::as_f64),
        })
    }
}

#[derive(Debug)]
struct BgkModel<T> {
    omega: T,
}

impl<T: Real> Dynamics<T> for BgkModel<T> {
    fn collide(&self, f: &mut Populations<T>) {
        bgk(f, self.omega)
    }

    fn collide_with_omega(&self, f: &mut Populations<T>, omega: T) {
        bgk(f, omega)
    }

    fn omega(&self) -> Option<T> {
        Some(self.omega)
    }

    fn name(&self) -> String {
        COLL_BGK.into()
    }

    fn policy(&self) -> Option<DynamicsChain> {
        DynamicsChain::bgk(self.omega.as_f64()).ok()
    }
}

#[derive(Debug)]
struct TrtModel<T> {
    omega: T,
    lambda: T,
}

impl<T: Real> Dynamics<T> for TrtModel<T> {
    fn collide(&self, f: &mut Populations<T>) {
        self.collide_with_omega(f, self.omega)
    }

    fn collide_with_omega(&self, f: &mut Populations<T>, omega: T) {
        trt(f, omega, trt_omega_minus(omega, self.lambda))
    }

    fn omega(&self) -> Option<T> {
        Some(self.omega)
    }

    fn name(&self) -> String {
        COLL_TRT.into()
    }

    fn policy(&self) -> Option<DynamicsChain> {
        DynamicsChain::trt(self.omega.as_f64(), self.lambda.as_f64()).ok()
    }
}

#[derive(Debug)]
struct RrModel<T> {
    omega: T,
    omega_bulk_ho: T,
}

impl<T: Real> Dynamics<T> for RrModel<T> {
    fn collide(&self, f: &mut Populations<T>) {
        rr(f, self.omega, self.omega_bulk_ho)
    }

    fn collide_with_omega(&self, f: &mut Populations<T>, omega: T) {
        rr(f, omega, self.omega_bulk_ho)
    }

    fn omega(&self) -> Option<T> {
        Some(self.omega)
    }

    fn name(&self) -> String {
        COLL_RR.into()
    }

    fn policy(&self) -> Option<DynamicsChain> {
        DynamicsChain::rr(self.omega.as_f64(), self.omega_bulk_ho.as_f64()).ok()
    }
}

#[derive(Debug)]
struct SmagorinskyModel<T: Real> {
    c: T,
    inner: Box<dyn Dynamics<T>>,
}

impl<T: Real> Dynamics<T> for SmagorinskyModel<T> {
    fn collide(&self, f: &mut Populations<T>) {
        match self.inner.omega() {
            Some(omega) => {
                let effective = smagorinsky_omega(f, omega, self.c);
                self.inner.collide_with_omega(f, effective);
            }
            None => self.inner.collide(f),
        }
    }

    fn omega(&self) -> Option<T> {
        self.inner.omega()
    }

    fn name(&self) -> String {
        format!("{LES_SMAGORINSKY}{CHAIN_SEPARATOR}{}", self.inner.name())
    }

    fn policy(&self) -> Option<DynamicsChain> {
        self.inner.policy()?.with_smagorinsky(self.c.as_f64()).ok()
    }
}

#[derive(Debug)]
struct RegularizedVelocityModel<T: Real> {
    normal: Normal,
    velocity: [T; 3],
    raw: [f64; 3],
    inner: Box<dyn Dynamics<T>>,
}

impl<T: Real> Dynamics<T> for RegularizedVelocityModel<T> {
    fn collide(&self, f: &mut Populations<T>) {
        regularized_velocity(f, self.normal, self.velocity);
        self.inner.collide(f);
    }

    fn omega(&self) -> Option<T> {
        self.inner.omega()
    }

    fn name(&self) -> String {
        format!(
            "{REGULARIZED_VELOCITY}_{}{CHAIN_SEPARATOR}{}",
            self.normal.suffix(),
            self.inner.name()
        )
    }

    fn policy(&self) -> Option<DynamicsChain> {
        self.inner
            .policy()?
            .with_completion(Link::RegularizedVelocity {
                normal: self.normal,
                velocity: self.raw,
            })
            .ok()
    }
}

#[derive(Debug)]
struct RegularizedPressureModel<T: Real> {
    normal: Normal,
    density: T,
    raw: f64,
    inner: Box<dyn Dynamics<T>>,
}

impl<T: Real> Dynamics<T> for RegularizedPressureModel<T> {
    fn collide(&self, f: &mut Populations<T>) {
        regularized_pressure(f, self.normal, self.density);
        self.inner.collide(f);
    }

    fn omega(&self) -> Option<T> {
        self.inner.omega()
    }

    fn name(&self) -> String {
        format!(
            "{REGULARIZED_PRESSURE}_{}{CHAIN_SEPARATOR}{}",
            self.normal.suffix(),
            self.inner.name()
        )
    }

    fn policy(&self) -> Option<DynamicsChain> {
        self.inner
            .policy()?
            .with_completion(Link::RegularizedPressure {
                normal: self.normal,
                density: self.raw,
            })
            .ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundaries::Orientation;
    use crate::descriptor::{equilibrium2, Q};

    fn inlet() -> Link {
        Link::RegularizedVelocity {
            normal: Normal::new(0, Orientation::Plus).unwrap(),
            velocity: [0.01, 0.0, 0.0],
        }
    }

    fn sample_chains() -> Vec<DynamicsChain> {
        vec![
            DynamicsChain::no_dynamics(),
            DynamicsChain::bounce_back(),
            DynamicsChain::moving_bounce_back([0.05, 0.0, 0.0]),
            DynamicsChain::bgk(1.7).unwrap(),
            DynamicsChain::trt(0.9, 0.25).unwrap(),
            DynamicsChain::rr(1.95, 1.0).unwrap().with_smagorinsky(0.14).unwrap(),
            DynamicsChain::rr(1.9, 1.0)
                .unwrap()
                .with_smagorinsky(0.1)
                .unwrap()
                .with_completion(inlet())
                .unwrap(),
            DynamicsChain::trt(1.0, 3.0 / 16.0)
                .unwrap()
                .with_completion(Link::RegularizedPressure {
                    normal: Normal::new(2, Orientation::Minus).unwrap(),
                    density: 1.001,
                })
                .unwrap(),
        ]
    }

    #[test]
    fn chain_strings_follow_link_order() {
        let chains = sample_chains();
        assert_eq!(chains[5].chain_string(), "LES_Smagorinsky|COLL_RR");
        assert_eq!(
            chains[6].chain_string(),
            "Boundary_RegularizedVelocity_0_1|LES_Smagorinsky|COLL_RR"
        );
        assert_eq!(chains[7].chain_string(), "Boundary_RegularizedPressure_2_M1|COLL_TRT");
    }

    #[test]
    fn encode_decode_round_trip() {
        for chain in sample_chains() {
            let params = chain.encode_params();
            assert_eq!(params.len(), chain.shape().param_len());
            let back = DynamicsChain::decode(&chain.chain_string(), &params).unwrap();
            assert_eq!(back, chain);
        }
    }

    #[test]
    fn policies_round_trip_through_objects() {
        for chain in sample_chains() {
            let obj = chain.instantiate::<f64>();
            assert_eq!(obj.name(), chain.chain_string());
            assert_eq!(obj.policy().as_ref(), Some(&chain));
        }
    }

    #[test]
    fn object_and_shape_paths_agree_bitwise() {
        let mut f0 = equilibrium2(1.01f64, [0.02, -0.01, 0.03]);
        for (i, x) in f0.iter_mut().enumerate() {
            *x += 1e-3 * (i as f64 * 0.31).sin();
        }
        for chain in sample_chains() {
            let mut a = f0;
            chain.instantiate::<f64>().collide(&mut a);
            let mut b = f0;
            chain.shape().apply(&chain.encode_params(), &mut b);
            for i in 0..Q {
                assert_eq!(a[i].to_bits(), b[i].to_bits(), "{chain} i={i}");
            }
        }
    }

    #[test]
    fn malformed_chains_are_rejected() {
        assert!(matches!(
            ChainShape::parse("COLL_FOO"),
            Err(Error::UnknownModel(m)) if m == "COLL_FOO"
        ));
        assert!(ChainShape::parse("COLL_RR|LES_Smagorinsky").is_err());
        assert!(ChainShape::parse("COLL_BGK|COLL_RR").is_err());
        assert!(DynamicsChain::new(vec![Link::Smagorinsky, inlet(), Link::Bgk], CollisionParams::default()).is_err());
        assert!(DynamicsChain::new(vec![Link::BounceBack, Link::Bgk], CollisionParams::default()).is_err());
        assert!(DynamicsChain::new(vec![], CollisionParams::default()).is_err());
        assert!(DynamicsChain::bgk(2.5).is_err());
        assert!(DynamicsChain::bgk(1.0)
            .unwrap()
            .with_completion(Link::Smagorinsky)
            .is_err());
    }

    #[test]
    fn every_known_link_parses() {
        for id in known_link_ids() {
            assert_eq!(Link::parse_id(&id).unwrap().id(), id);
        }
    }

    #[test]
    fn custom_dynamics_has_no_policy() {
        #[derive(Debug)]
        struct Custom;
        impl Dynamics<f64> for Custom {
            fn collide(&self, _f: &mut Populations<f64>) {}
            fn name(&self) -> String {
                "USER_Custom".into()
            }
        }
        assert!(Custom.policy().is_none());
    }
}
