use std::collections::HashMap;

use crate::multiblock::MultiBlockLattice;
use crate::reference::ReferenceLattice;
use crate::{Real, Result};

/// Copies a reference lattice into a block-decomposed accelerated lattice.
///
/// Every dynamics object must expose a conversion policy; the first one that
/// does not is reported by name.
pub fn mirror_to_accelerated<T: Real>(
    reference: &ReferenceLattice<T>,
    block_grid: [usize; 3],
) -> Result<MultiBlockLattice<T>> {
    let n = reference.num_cells();
    let mut chains = HashMap::new();
    for i in 0..n {
        let d = reference.dynamics_id(i);
        if let std::collections::hash_map::Entry::Vacant(slot) = chains.entry(d) {
            slot.insert(reference.chain_of_cell(i)?.clone());
        }
    }
    let dims = reference.dims();
    let first = &chains[&reference.dynamics_id(0)];
    let mut lattice = MultiBlockLattice::new(dims, reference.periodic(), block_grid, first)?;
    let mut instances = HashMap::new();
    let mut ids: Vec<usize> = chains.keys().copied().collect();
    ids.sort_unstable();
    for d in ids {
        instances.insert(d, lattice.register(&chains[&d])?.instance);
    }
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let i = reference.index(x, y, z);
                lattice.set_cell_instance([x, y, z], instances[&reference.dynamics_id(i)]);
                lattice.set_populations([x, y, z], reference.populations_at(i));
            }
        }
    }
    Ok(lattice)
}

/// Copies an accelerated lattice back into a reference lattice, rebuilding
/// each cell's dynamics from its tag and parameter record.
pub fn mirror_to_reference<T: Real>(lattice: &MultiBlockLattice<T>) -> Result<ReferenceLattice<T>> {
    let dims = lattice.dims();
    let mut reference = ReferenceLattice::new(dims, lattice.periodic(), &lattice.cell_chain([0, 0, 0])?)?;
    let mut ids: HashMap<u32, usize> = HashMap::new();
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let instance = lattice.cell_instance([x, y, z]);
                let id = match ids.get(&instance) {
                    Some(&id) => id,
                    None => {
                        let chain = lattice.registry().instance_chain(instance)?;
                        let id = reference.ensure_chain(&chain);
                        ids.insert(instance, id);
                        id
                    }
                };
                let i = reference.index(x, y, z);
                reference.set_raw(i, lattice.populations([x, y, z]), id);
            }
        }
    }
    Ok(reference)
}
