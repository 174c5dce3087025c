//! Array-of-structures lattice with per-cell dynamic dispatch.
//!
//! This container is the correctness oracle for the accelerated lattice: it is
//! single-threaded, keeps each cell's 19 populations together and resolves the
//! collision of every cell through a [`Dynamics`] trait object.

use std::collections::BTreeSet;

use crate::accelerated::FieldDump;
use crate::descriptor::{Populations, Q, VELOCITIES};
use crate::dynamics::{Dynamics, DynamicsChain};
use crate::{Error, Real, Result};

/// Half-open box of cells `lo..hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl Region {
    pub fn new(lo: [usize; 3], hi: [usize; 3]) -> Self {
        Self { lo, hi }
    }

    pub fn whole(dims: [usize; 3]) -> Self {
        Self { lo: [0; 3], hi: dims }
    }

    pub fn cell(x: usize, y: usize, z: usize) -> Self {
        Self {
            lo: [x, y, z],
            hi: [x + 1, y + 1, z + 1],
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| self.hi[a] <= self.lo[a])
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| self.lo[a] <= p[a] && p[a] < self.hi[a])
    }

    /// Cells in x-fastest order.
    pub fn iter(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let empty = self.is_empty();
        let [x0, y0, z0] = self.lo;
        let [x1, y1, z1] = self.hi;
        (z0..if empty { z0 } else { z1 })
            .flat_map(move |z| (y0..y1).flat_map(move |y| (x0..x1).map(move |x| [x, y, z])))
    }
}

#[derive(Clone, Copy, Debug)]
struct Node<T> {
    f: Populations<T>,
    dynamics: usize,
}

#[derive(Debug)]
pub struct ReferenceLattice<T: Real> {
    dims: [usize; 3],
    periodic: [bool; 3],
    cells: Vec<Node<T>>,
    dynamics: Vec<Box<dyn Dynamics<T>>>,
    chains: Vec<Option<DynamicsChain>>,
    scratch: Vec<Populations<T>>,
}

impl<T: Real> ReferenceLattice<T> {
    /// Lattice at rest (zero offset populations) with every cell on `bulk`.
    pub fn new(dims: [usize; 3], periodic: [bool; 3], bulk: &DynamicsChain) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Config(format!("lattice extents must be positive, got {dims:?}")));
        }
        let n = dims.iter().product();
        Ok(Self {
            dims,
            periodic,
            cells: vec![
                Node {
                    f: [T::zero(); Q],
                    dynamics: 0,
                };
                n
            ],
            dynamics: vec![bulk.instantiate()],
            chains: vec![Some(bulk.clone())],
            scratch: Vec::new(),
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn periodic(&self) -> [bool; 3] {
        self.periodic
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn populations(&self, x: usize, y: usize, z: usize) -> &Populations<T> {
        &self.cells[self.index(x, y, z)].f
    }

    pub fn populations_mut(&mut self, x: usize, y: usize, z: usize) -> &mut Populations<T> {
        let i = self.index(x, y, z);
        &mut self.cells[i].f
    }

    /// Populations of the cell with linear index `i` (x-fastest).
    pub fn populations_at(&self, i: usize) -> &Populations<T> {
        &self.cells[i].f
    }

    pub fn dynamics(&self, x: usize, y: usize, z: usize) -> &dyn Dynamics<T> {
        self.dynamics[self.cells[self.index(x, y, z)].dynamics].as_ref()
    }

    /// Plain-data chain of a cell, if its dynamics was built from one.
    pub fn chain(&self, x: usize, y: usize, z: usize) -> Option<&DynamicsChain> {
        self.chains[self.cells[self.index(x, y, z)].dynamics].as_ref()
    }

    /// Assigns `chain` to every cell of `region`; identical chains share one
    /// dynamics object.
    pub fn set_chain(&mut self, region: Region, chain: &DynamicsChain) -> Result<()> {
        self.check_region(region)?;
        let id = self.ensure_chain(chain);
        self.assign(region, id);
        Ok(())
    }

    pub(crate) fn ensure_chain(&mut self, chain: &DynamicsChain) -> usize {
        match self.chains.iter().position(|c| c.as_ref() == Some(chain)) {
            Some(id) => id,
            None => {
                self.dynamics.push(chain.instantiate());
                self.chains.push(Some(chain.clone()));
                self.dynamics.len() - 1
            }
        }
    }

    /// Assigns a user-supplied dynamics object, which may lack a conversion
    /// policy.
    pub fn set_dynamics(&mut self, region: Region, dynamics: Box<dyn Dynamics<T>>) -> Result<()> {
        self.check_region(region)?;
        let chain = dynamics.policy();
        self.dynamics.push(dynamics);
        self.chains.push(chain);
        let id = self.dynamics.len() - 1;
        self.assign(region, id);
        Ok(())
    }

    fn assign(&mut self, region: Region, id: usize) {
        for [x, y, z] in region.iter() {
            let i = self.index(x, y, z);
            self.cells[i].dynamics = id;
        }
    }

    fn check_region(&self, region: Region) -> Result<()> {
        if region.is_empty() || (0..3).all(|a| region.hi[a] <= self.dims[a]) {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                lo: region.lo,
                hi: region.hi,
                dims: self.dims,
            })
        }
    }

    /// Sorted, deduplicated chain strings of the dynamics referenced by cells.
    pub fn required_models(&self) -> Vec<String> {
        let used: BTreeSet<usize> = self.cells.iter().map(|c| c.dynamics).collect();
        let names: BTreeSet<String> = used.into_iter().map(|d| self.dynamics[d].name()).collect();
        names.into_iter().collect()
    }

    /// One time step: every cell pulls its incoming populations, then applies
    /// its dynamics. Pulls across a non-periodic face read zero offset.
    pub fn collide_and_stream(&mut self) {
        let [nx, ny, nz] = self.dims;
        let n = self.cells.len();
        if self.scratch.len() != n {
            self.scratch = vec![[T::zero(); Q]; n];
        }
        let wrap = |p: isize, extent: usize, periodic: bool| -> Option<usize> {
            if (0..extent as isize).contains(&p) {
                Some(p as usize)
            } else if periodic {
                Some(p.rem_euclid(extent as isize) as usize)
            } else {
                None
            }
        };
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let dst = x + nx * (y + ny * z);
                    for (i, c) in VELOCITIES.iter().enumerate() {
                        let sx = wrap(x as isize - c[0] as isize, nx, self.periodic[0]);
                        let sy = wrap(y as isize - c[1] as isize, ny, self.periodic[1]);
                        let sz = wrap(z as isize - c[2] as isize, nz, self.periodic[2]);
                        self.scratch[dst][i] = match (sx, sy, sz) {
                            (Some(sx), Some(sy), Some(sz)) => self.cells[sx + nx * (sy + ny * sz)].f[i],
                            _ => T::zero(),
                        };
                    }
                }
            }
        }
        for (cell, pulled) in self.cells.iter_mut().zip(&self.scratch) {
            cell.f = *pulled;
            self.dynamics[cell.dynamics].collide(&mut cell.f);
        }
    }

    /// Sum of densities over all cells.
    pub fn total_mass(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| 1.0 + c.f.iter().map(|v| v.as_f64()).sum::<f64>())
            .sum()
    }

    /// Populations in structure-of-arrays order.
    pub fn dump(&self) -> FieldDump {
        let n = self.num_cells();
        let mut data = vec![0.0; Q * n];
        for (c, cell) in self.cells.iter().enumerate() {
            for i in 0..Q {
                data[i * n + c] = cell.f[i].as_f64();
            }
        }
        FieldDump {
            dims: self.dims,
            precision: T::PRECISION,
            data,
        }
    }

    pub(crate) fn chain_of_cell(&self, i: usize) -> Result<&DynamicsChain> {
        let d = self.cells[i].dynamics;
        self.chains[d]
            .as_ref()
            .ok_or_else(|| Error::NoPolicy(self.dynamics[d].name()))
    }

    pub(crate) fn dynamics_id(&self, i: usize) -> usize {
        self.cells[i].dynamics
    }

    pub(crate) fn set_raw(&mut self, i: usize, f: Populations<T>, dynamics: usize) {
        self.cells[i] = Node { f, dynamics };
    }
}

/// Sorted, deduplicated chain strings required to step the accelerated mirror
/// of `lattice`.
pub fn show_required_models<T: Real>(lattice: &ReferenceLattice<T>) -> Vec<String> {
    lattice.required_models()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::equilibrium2;

    fn bgk() -> DynamicsChain {
        DynamicsChain::bgk(1.2).unwrap()
    }

    #[test]
    fn uniform_equilibrium_is_stationary() {
        let mut lat = ReferenceLattice::<f64>::new([4, 5, 3], [true; 3], &bgk()).unwrap();
        let feq = equilibrium2(1.02, [0.03, -0.01, 0.02]);
        for [x, y, z] in Region::whole(lat.dims()).iter().collect::<Vec<_>>() {
            *lat.populations_mut(x, y, z) = feq;
        }
        lat.collide_and_stream();
        for i in 0..lat.num_cells() {
            for q in 0..Q {
                assert!((lat.populations_at(i)[q] - feq[q]).abs() < 1e-16);
            }
        }
    }

    #[test]
    fn pulse_translates_along_each_velocity() {
        let mut lat = ReferenceLattice::<f64>::new([5, 5, 5], [true; 3], &DynamicsChain::no_dynamics()).unwrap();
        for q in 0..Q {
            lat.populations_mut(2, 2, 2)[q] = (q + 1) as f64;
        }
        lat.collide_and_stream();
        for (q, c) in VELOCITIES.iter().enumerate() {
            let target = [2 + c[0] as isize, 2 + c[1] as isize, 2 + c[2] as isize].map(|v| v as usize);
            for [x, y, z] in Region::whole([5; 3]).iter() {
                let expect = if [x, y, z] == target { (q + 1) as f64 } else { 0.0 };
                assert_eq!(lat.populations(x, y, z)[q], expect);
            }
        }
    }

    #[test]
    fn pulls_wrap_on_periodic_axes_only() {
        let mut lat =
            ReferenceLattice::<f64>::new([3, 1, 1], [false, true, true], &DynamicsChain::no_dynamics()).unwrap();
        lat.populations_mut(2, 0, 0)[1] = 1.0;
        lat.collide_and_stream();
        assert!(lat.cells.iter().all(|c| c.f[1] == 0.0));
        let mut lat = ReferenceLattice::<f64>::new([3, 1, 1], [true; 3], &DynamicsChain::no_dynamics()).unwrap();
        lat.populations_mut(2, 0, 0)[1] = 1.0;
        lat.collide_and_stream();
        assert_eq!(lat.populations(0, 0, 0)[1], 1.0);
    }

    #[test]
    fn last_assignment_wins() {
        let dims = [4, 4, 4];
        let mut lat = ReferenceLattice::<f64>::new(dims, [true; 3], &bgk()).unwrap();
        let a = Region::new([0, 0, 0], [3, 3, 3]);
        let b = Region::new([1, 1, 1], [4, 4, 2]);
        let trt = DynamicsChain::trt(1.0, 0.25).unwrap();
        lat.set_chain(a, &trt).unwrap();
        lat.set_chain(b, &DynamicsChain::bounce_back()).unwrap();
        for p @ [x, y, z] in Region::whole(dims).iter() {
            let expect = if b.contains(p) {
                "BounceBack"
            } else if a.contains(p) {
                "COLL_TRT"
            } else {
                "COLL_BGK"
            };
            assert_eq!(lat.dynamics(x, y, z).name(), expect);
        }
        lat.set_chain(Region::whole(dims), &bgk()).unwrap();
        assert_eq!(lat.required_models(), vec!["COLL_BGK".to_string()]);
    }

    #[test]
    fn regions_are_checked() {
        let mut lat = ReferenceLattice::<f64>::new([4, 4, 4], [true; 3], &bgk()).unwrap();
        assert!(matches!(
            lat.set_chain(Region::new([0, 0, 0], [5, 1, 1]), &bgk()),
            Err(Error::OutOfRange { .. })
        ));
        lat.set_chain(Region::new([2, 2, 2], [2, 9, 9]), &DynamicsChain::bounce_back())
            .unwrap();
        assert_eq!(lat.required_models(), vec!["COLL_BGK".to_string()]);
        assert!(ReferenceLattice::<f64>::new([0, 4, 4], [true; 3], &bgk()).is_err());
    }

    #[test]
    fn closed_box_conserves_mass() {
        let n = 6;
        let mut lat = ReferenceLattice::<f64>::new([n; 3], [false; 3], &DynamicsChain::bounce_back()).unwrap();
        lat.set_chain(Region::new([1; 3], [n - 1; 3]), &bgk()).unwrap();
        for [x, y, z] in Region::new([1; 3], [n - 1; 3]).iter() {
            let u = [0.01 * x as f64, -0.02 * (y as f64 - 2.0), 0.005 * z as f64];
            *lat.populations_mut(x, y, z) = equilibrium2(1.0 + 0.001 * (x + y) as f64, u);
        }
        let fluid_mass = |lat: &ReferenceLattice<f64>| {
            Region::new([1; 3], [n - 1; 3])
                .iter()
                .map(|[x, y, z]| lat.populations(x, y, z).iter().sum::<f64>() + 1.0)
                .sum::<f64>()
        };
        let solid_offsets = |lat: &ReferenceLattice<f64>| {
            Region::whole([n; 3])
                .iter()
                .filter(|&p| !Region::new([1; 3], [n - 1; 3]).contains(p))
                .map(|[x, y, z]| lat.populations(x, y, z).iter().sum::<f64>())
                .sum::<f64>()
        };
        let m0 = fluid_mass(&lat) + solid_offsets(&lat);
        for _ in 0..200 {
            lat.collide_and_stream();
        }
        let m1 = fluid_mass(&lat) + solid_offsets(&lat);
        assert!(((m1 - m0) / m0).abs() < 1e-13, "{m0} {m1}");
    }
}
