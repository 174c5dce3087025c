use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockExtent {
    /// Position of the block in the block grid.
    pub grid_pos: [usize; 3],
    pub origin: [usize; 3],
    pub extent: [usize; 3],
}

/// Regular tiling of the domain into blocks, each owned by one worker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPartition {
    pub global_dims: [usize; 3],
    pub block_grid: [usize; 3],
    pub blocks: Vec<BlockExtent>,
    pub worker_of: Vec<usize>,
    pub workers: usize,
}

/// Splits `extent` cells into `parts` runs whose lengths differ by at most
/// one; the longer runs come first. Returns `(start, len)` pairs.
pub fn balanced_split(axis: usize, extent: usize, parts: usize) -> Result<Vec<(usize, usize)>> {
    if parts == 0 || parts > extent {
        return Err(Error::ImpossibleSplit { axis, extent, parts });
    }
    let base = extent / parts;
    let extra = extent % parts;
    let mut start = 0;
    Ok((0..parts)
        .map(|p| {
            let len = base + usize::from(p < extra);
            let run = (start, len);
            start += len;
            run
        })
        .collect())
}

/// Balanced tensor-product decomposition, all blocks on a single worker.
pub fn partition(global_dims: [usize; 3], block_grid: [usize; 3]) -> Result<BlockPartition> {
    let splits = (0..3)
        .map(|a| balanced_split(a, global_dims[a], block_grid[a]))
        .collect::<Result<Vec<_>>>()?;
    let mut blocks = Vec::with_capacity(block_grid.iter().product());
    for gz in 0..block_grid[2] {
        for gy in 0..block_grid[1] {
            for gx in 0..block_grid[0] {
                let runs = [splits[0][gx], splits[1][gy], splits[2][gz]];
                blocks.push(BlockExtent {
                    grid_pos: [gx, gy, gz],
                    origin: runs.map(|r| r.0),
                    extent: runs.map(|r| r.1),
                });
            }
        }
    }
    let n = blocks.len();
    Ok(BlockPartition {
        global_dims,
        block_grid,
        blocks,
        worker_of: vec![0; n],
        workers: 1,
    })
}

impl BlockPartition {
    /// Assigns contiguous runs of blocks to `workers` workers.
    pub fn with_workers(mut self, workers: usize) -> Result<Self> {
        let n = self.blocks.len();
        if workers == 0 || workers > n {
            return Err(Error::Config(format!(
                "{workers} workers requested for {n} blocks; need 1..={n}"
            )));
        }
        self.worker_of = (0..n).map(|b| b * workers / n).collect();
        self.workers = workers;
        Ok(self)
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_at(&self, grid_pos: [usize; 3]) -> usize {
        let g = self.block_grid;
        grid_pos[0] + g[0] * (grid_pos[1] + g[1] * grid_pos[2])
    }

    /// Block containing global cell `p`, and `p` relative to its origin.
    pub fn locate(&self, p: [usize; 3]) -> (usize, [usize; 3]) {
        let grid_pos: [usize; 3] = std::array::from_fn(|a| {
            let g = self.block_grid[a];
            let n = self.global_dims[a];
            let (base, extra) = (n / g, n % g);
            let wide = extra * (base + 1);
            if p[a] < wide {
                p[a] / (base + 1)
            } else {
                extra + (p[a] - wide) / base
            }
        });
        let b = self.block_at(grid_pos);
        let o = self.blocks[b].origin;
        (b, std::array::from_fn(|a| p[a] - o[a]))
    }

    /// Blocks owned by `worker`, in block order.
    pub fn blocks_of(&self, worker: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.blocks.len()).filter(move |&b| self.worker_of[b] == worker)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_examples() {
        assert_eq!(balanced_split(0, 10, 3).unwrap(), vec![(0, 4), (4, 3), (7, 3)]);
        assert_eq!(balanced_split(0, 64, 1).unwrap(), vec![(0, 64)]);
        assert!(matches!(
            balanced_split(1, 3, 4),
            Err(Error::ImpossibleSplit { axis: 1, .. })
        ));
        assert!(balanced_split(0, 3, 0).is_err());
    }

    #[test]
    fn exact_division() {
        let p = partition([64; 3], [2, 2, 1]).unwrap();
        assert_eq!(p.num_blocks(), 4);
        assert!(p.blocks.iter().all(|b| b.extent == [32, 32, 64]));
        let p = p.with_workers(4).unwrap();
        assert_eq!(p.worker_of, vec![0, 1, 2, 3]);
    }

    #[test]
    fn blocks_tile_and_locate_agrees() {
        let dims = [7, 5, 4];
        let p = partition(dims, [3, 2, 4]).unwrap().with_workers(5).unwrap();
        let mut owner = vec![usize::MAX; dims.iter().product()];
        for (b, blk) in p.blocks.iter().enumerate() {
            for z in 0..blk.extent[2] {
                for y in 0..blk.extent[1] {
                    for x in 0..blk.extent[0] {
                        let g = [blk.origin[0] + x, blk.origin[1] + y, blk.origin[2] + z];
                        let i = g[0] + dims[0] * (g[1] + dims[1] * g[2]);
                        assert_eq!(owner[i], usize::MAX);
                        owner[i] = b;
                        assert_eq!(p.locate(g), (b, [x, y, z]));
                    }
                }
            }
        }
        assert!(owner.iter().all(|&b| b != usize::MAX));
        let mut w = p.worker_of.clone();
        w.dedup();
        assert_eq!(w, (0..5).collect::<Vec<_>>());
        assert!(partition(dims, [1, 1, 1]).unwrap().with_workers(2).is_err());
    }
}
