use rayon::prelude::*;

use super::registry::StepKernel;
use crate::descriptor::{Populations, Q, VELOCITIES};
use crate::{Real, Result};

/// One block of the accelerated lattice.
///
/// Populations are stored as 19 contiguous arrays (`f_in`, `f_out`), each
/// covering the block's interior plus a one-cell envelope, x fastest. Tags,
/// parameter indices and global cell indices cover the interior only.
#[derive(Clone, Debug)]
pub struct AcceleratedBlock<T> {
    id: usize,
    origin: [usize; 3],
    interior: [usize; 3],
    dims: [usize; 3],
    f_in: Vec<T>,
    f_out: Vec<T>,
    tags: Vec<u32>,
    param_index: Vec<u32>,
    cell_index: Vec<u64>,
    present: Option<Vec<u32>>,
}

impl<T: Real> AcceleratedBlock<T> {
    /// Block at rest whose cells all carry `tag` and parameter record
    /// `instance`.
    pub fn new(
        id: usize,
        origin: [usize; 3],
        interior: [usize; 3],
        global_dims: [usize; 3],
        tag: u32,
        instance: u32,
    ) -> Self {
        let dims = interior.map(|n| n + 2);
        let n: usize = dims.iter().product();
        let cells: usize = interior.iter().product();
        let mut cell_index = Vec::with_capacity(cells);
        for z in 0..interior[2] {
            for y in 0..interior[1] {
                for x in 0..interior[0] {
                    let g = [origin[0] + x, origin[1] + y, origin[2] + z];
                    cell_index.push((g[0] + global_dims[0] * (g[1] + global_dims[1] * g[2])) as u64);
                }
            }
        }
        Self {
            id,
            origin,
            interior,
            dims,
            f_in: vec![T::zero(); Q * n],
            f_out: vec![T::zero(); Q * n],
            tags: vec![tag; cells],
            param_index: vec![instance; cells],
            cell_index,
            present: None,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn origin(&self) -> [usize; 3] {
        self.origin
    }

    pub fn interior(&self) -> [usize; 3] {
        self.interior
    }

    /// Extents including the envelope.
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Number of cells including the envelope.
    pub fn num_cells(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn num_interior(&self) -> usize {
        self.tags.len()
    }

    /// Linear index of a local cell; interior cells are `1..=n` per axis.
    #[inline]
    pub fn local_index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// Linear index into `tags`/`param_index`/`cell_index` of interior cell
    /// `(x, y, z)`, zero-based.
    #[inline]
    pub fn interior_index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.interior[0] * (y + self.interior[1] * z)
    }

    /// Population array `i` of the current state.
    pub fn section(&self, i: usize) -> &[T] {
        let n = self.num_cells();
        &self.f_in[i * n..(i + 1) * n]
    }

    /// Populations of the local cell with linear index `idx`.
    #[inline]
    pub fn local_populations(&self, idx: usize) -> Populations<T> {
        let n = self.num_cells();
        std::array::from_fn(|i| self.f_in[i * n + idx])
    }

    #[inline]
    pub fn set_local_populations(&mut self, idx: usize, f: &Populations<T>) {
        let n = self.num_cells();
        for (i, v) in f.iter().enumerate() {
            self.f_in[i * n + idx] = *v;
        }
    }

    /// Populations of zero-based interior cell `(x, y, z)`.
    pub fn populations(&self, x: usize, y: usize, z: usize) -> Populations<T> {
        self.local_populations(self.local_index(x + 1, y + 1, z + 1))
    }

    pub fn set_populations(&mut self, x: usize, y: usize, z: usize, f: &Populations<T>) {
        let idx = self.local_index(x + 1, y + 1, z + 1);
        self.set_local_populations(idx, f);
    }

    pub fn tags(&self) -> &[u32] {
        &self.tags
    }

    pub fn param_index(&self) -> &[u32] {
        &self.param_index
    }

    pub fn cell_index(&self) -> &[u64] {
        &self.cell_index
    }

    pub fn set_cell(&mut self, x: usize, y: usize, z: usize, tag: u32, instance: u32) {
        let c = self.interior_index(x, y, z);
        self.tags[c] = tag;
        self.param_index[c] = instance;
        self.present = None;
    }

    /// Rewrites tags after a registry insertion shifted them.
    pub fn apply_remap(&mut self, remap: &[u32]) {
        for t in &mut self.tags {
            *t = remap[*t as usize];
        }
        self.present = None;
    }

    /// Sorted distinct tags of the interior cells.
    pub fn present_tags(&mut self) -> &[u32] {
        if self.present.is_none() {
            let mut seen: Vec<u32> = self.tags.clone();
            seen.sort_unstable();
            seen.dedup();
            self.present = Some(seen);
        }
        self.present.as_deref().expect("computed above")
    }

    /// Copies opposite interior layers into the envelope along periodic axes,
    /// one axis after the other so edges and corners are filled too.
    pub fn fill_periodic_envelope(&mut self, periodic: [bool; 3]) {
        let [nx, ny, nz] = self.dims;
        let n = self.num_cells();
        for axis in 0..3 {
            if !periodic[axis] {
                continue;
            }
            let lo = |a: usize| if a < axis { 0 } else { 1 };
            let hi = |a: usize, len: usize| if a < axis { len } else { len - 1 };
            let extent = self.dims[axis];
            for (dst_layer, src_layer) in [(0, extent - 2), (extent - 1, 1)] {
                for z in lo(2)..hi(2, nz) {
                    for y in lo(1)..hi(1, ny) {
                        for x in lo(0)..hi(0, nx) {
                            if [x, y, z][axis] != 1 {
                                continue;
                            }
                            let mut src = [x, y, z];
                            let mut dst = [x, y, z];
                            src[axis] = src_layer;
                            dst[axis] = dst_layer;
                            let s = self.local_index(src[0], src[1], src[2]);
                            let d = self.local_index(dst[0], dst[1], dst[2]);
                            for i in 0..Q {
                                self.f_in[i * n + d] = self.f_in[i * n + s];
                            }
                        }
                    }
                }
            }
        }
    }

    /// One step of the two-population pull kernel over the interior: gather
    /// from `f_in`, apply the tag's chain, write to `f_out`, swap.
    pub fn collide_and_stream(&mut self, kernel: &StepKernel<'_>) -> Result<()> {
        kernel.check(self.present_tags())?;
        let [nx, ny, nz] = self.dims;
        let [ix, iy, _] = self.interior;
        let plane = nx * ny;
        let n = self.num_cells();
        let shift: [usize; Q] = std::array::from_fn(|i| {
            let c = VELOCITIES[i];
            (c[0] as isize + c[1] as isize * nx as isize + c[2] as isize * plane as isize) as usize
        });

        let mut planes: Vec<Vec<&mut [T]>> = (0..nz).map(|_| Vec::with_capacity(Q)).collect();
        for section in self.f_out.chunks_mut(n) {
            for (z, chunk) in section.chunks_mut(plane).enumerate() {
                planes[z].push(chunk);
            }
        }
        let f_in = &self.f_in;
        let tags = &self.tags;
        let param_index = &self.param_index;
        let registry = kernel.registry;
        let shapes = &kernel.shapes;

        planes
            .into_par_iter()
            .enumerate()
            .skip(1)
            .take(nz - 2)
            .for_each(|(z, mut out)| {
                let inner = nx - 2;
                for y in 1..ny - 1 {
                    let row = nx * (y + ny * z) + 1;
                    let cell_row = ix * ((y - 1) + iy * (z - 1));
                    let src: [&[T]; Q] = std::array::from_fn(|i| {
                        let start = i * n + row.wrapping_sub(shift[i]);
                        &f_in[start..start + inner]
                    });
                    let out_start = row - z * plane;
                    let mut dst: Vec<&mut [T]> = out.iter_mut().map(|o| &mut o[out_start..out_start + inner]).collect();
                    let cell_tags = &tags[cell_row..cell_row + inner];
                    let cell_params = &param_index[cell_row..cell_row + inner];
                    for x in 0..inner {
                        let mut f: Populations<T> = std::array::from_fn(|i| src[i][x]);
                        let shape = shapes[cell_tags[x] as usize].expect("checked before stepping");
                        shape.apply(registry.instance_params(cell_params[x]), &mut f);
                        for (d, v) in dst.iter_mut().zip(f) {
                            d[x] = v;
                        }
                    }
                }
            });
        std::mem::swap(&mut self.f_in, &mut self.f_out);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accelerated::{DispatchSet, DynamicsRegistry};
    use crate::dynamics::DynamicsChain;

    #[test]
    fn soa_sections_are_contiguous_per_direction() {
        let b = AcceleratedBlock::<f64>::new(0, [0; 3], [3, 4, 5], [3, 4, 5], 0, 0);
        let n = b.num_cells();
        assert_eq!(n, 5 * 6 * 7);
        let base = b.f_in.as_ptr() as usize;
        for i in 0..Q {
            let s = b.section(i);
            assert_eq!(s.len(), n);
            assert_eq!(s.as_ptr() as usize, base + i * n * std::mem::size_of::<f64>());
        }
        assert_ne!(b.f_in.as_ptr(), b.f_out.as_ptr());
    }

    #[test]
    fn global_cell_index_is_cartesian() {
        let b = AcceleratedBlock::<f32>::new(0, [2, 0, 1], [2, 2, 2], [4, 2, 3], 0, 0);
        assert_eq!(b.cell_index()[0], (2 + 4 * 2) as u64);
        assert_eq!(b.cell_index()[7], (3 + 4 * (1 + 2 * 2)) as u64);
    }

    #[test]
    fn periodic_envelope_wraps_edges_and_corners() {
        let mut b = AcceleratedBlock::<f64>::new(0, [0; 3], [3, 3, 3], [3, 3, 3], 0, 0);
        for z in 0..3 {
            for y in 0..3 {
                for x in 0..3 {
                    let mut f = [0.0; Q];
                    f[5] = (x + 10 * y + 100 * z) as f64;
                    b.set_populations(x, y, z, &f);
                }
            }
        }
        b.fill_periodic_envelope([true; 3]);
        for z in 0..5 {
            for y in 0..5 {
                for x in 0..5 {
                    let w = |p: usize| (p + 2) % 3;
                    let expect = (w(x) + 10 * w(y) + 100 * w(z)) as f64;
                    assert_eq!(b.local_populations(b.local_index(x, y, z))[5], expect);
                }
            }
        }
    }

    #[test]
    fn missing_chain_stops_the_step_untouched() {
        let mut reg = DynamicsRegistry::new();
        let bgk = reg.register_chain(&DynamicsChain::bgk(1.0).unwrap()).unwrap();
        let bb = reg.register_chain(&DynamicsChain::bounce_back()).unwrap();
        let mut b = AcceleratedBlock::<f64>::new(0, [0; 3], [2, 2, 2], [2, 2, 2], bgk.tag, bgk.instance);
        b.set_cell(1, 1, 1, bb.tag, bb.instance);
        let before = b.f_in.clone();
        let dispatch = DispatchSet::new(["COLL_BGK"]).unwrap();
        let err = b.collide_and_stream(&StepKernel::new(&reg, &dispatch)).unwrap_err();
        assert!(err.to_string().contains("BounceBack"));
        assert_eq!(b.f_in, before);
    }
}
