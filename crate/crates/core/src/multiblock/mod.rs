//! Regular block decomposition of the accelerated lattice.
//!
//! Blocks are grouped onto workers; before every step each worker fills its
//! blocks' envelopes through a [`Transport`] in three axis sweeps (x, y, z),
//! so edge and corner envelope cells are carried along without diagonal
//! messages. Periodic wrap-around is expressed as ordinary messages.

mod partition;
mod plan;
mod transport;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

pub use partition::{balanced_split, partition, BlockExtent, BlockPartition};
pub use plan::{
    exclusive_scan, pack_envelope, pack_message, unpack_envelope, unpack_message, ExchangePlan, Message, PackedEnvelope,
};
pub use transport::{decode_frame, encode_frame, in_process_network, InProcessTransport, Transport};

use crate::accelerated::{AcceleratedBlock, DispatchSet, DynamicsRegistry, FieldDump, Registration, StepKernel};
use crate::descriptor::{density_velocity, Populations, Q};
use crate::dynamics::DynamicsChain;
use crate::reference::Region;
use crate::{Error, Real, Result};

const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

fn all_cells(_: [i64; 3]) -> bool {
    true
}

struct Endpoint {
    transport: Box<dyn Transport>,
    early: BTreeMap<u64, Vec<Vec<u8>>>,
}

/// Accelerated lattice split into blocks with one-cell envelopes.
pub struct MultiBlockLattice<T: Real> {
    partition: BlockPartition,
    periodic: [bool; 3],
    registry: DynamicsRegistry,
    blocks: Vec<AcceleratedBlock<T>>,
    plan: ExchangePlan,
    endpoints: Vec<Endpoint>,
    timeout: Duration,
    rounds: u64,
    steps: u64,
}

impl<T: Real> std::fmt::Debug for MultiBlockLattice<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MultiBlockLattice")
            .field("dims", &self.partition.global_dims)
            .field("block_grid", &self.partition.block_grid)
            .field("workers", &self.partition.workers)
            .field("periodic", &self.periodic)
            .field("steps", &self.steps)
            .finish()
    }
}

impl<T: Real> MultiBlockLattice<T> {
    /// Lattice at rest with every cell on `bulk`, on a single worker.
    pub fn new(
        global_dims: [usize; 3],
        periodic: [bool; 3],
        block_grid: [usize; 3],
        bulk: &DynamicsChain,
    ) -> Result<Self> {
        let partition = partition(global_dims, block_grid)?;
        let mut registry = DynamicsRegistry::new();
        let Registration { tag, instance, .. } = registry.register_chain(bulk)?;
        let blocks = partition
            .blocks
            .iter()
            .enumerate()
            .map(|(id, b)| AcceleratedBlock::new(id, b.origin, b.extent, global_dims, tag, instance))
            .collect();
        let plan = ExchangePlan::new(&partition, periodic, T::PRECISION.bytes());
        let mut lattice = Self {
            partition,
            periodic,
            registry,
            blocks,
            plan,
            endpoints: Vec::new(),
            timeout: DEFAULT_TIMEOUT,
            rounds: 0,
            steps: 0,
        };
        lattice.set_transports(in_process_network(1).into_iter().map(boxed).collect())?;
        Ok(lattice)
    }

    /// Spreads the blocks over `workers` threads connected in-process.
    pub fn with_workers(mut self, workers: usize) -> Result<Self> {
        self.partition = self.partition.clone().with_workers(workers)?;
        self.set_transports(in_process_network(workers).into_iter().map(boxed).collect())?;
        Ok(self)
    }

    /// Replaces the transports; one per worker, indexed by rank.
    pub fn set_transports(&mut self, transports: Vec<Box<dyn Transport>>) -> Result<()> {
        if transports.len() != self.partition.workers {
            return Err(Error::Config(format!(
                "{} transports supplied for {} workers",
                transports.len(),
                self.partition.workers
            )));
        }
        self.endpoints = transports
            .into_iter()
            .map(|transport| Endpoint {
                transport,
                early: BTreeMap::new(),
            })
            .collect();
        Ok(())
    }

    /// How long a worker waits for an expected message before declaring it
    /// lost.
    pub fn set_exchange_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    pub fn dims(&self) -> [usize; 3] {
        self.partition.global_dims
    }

    pub fn periodic(&self) -> [bool; 3] {
        self.periodic
    }

    pub fn num_cells(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn plan(&self) -> &ExchangePlan {
        &self.plan
    }

    pub fn registry(&self) -> &DynamicsRegistry {
        &self.registry
    }

    pub fn blocks(&self) -> &[AcceleratedBlock<T>] {
        &self.blocks
    }

    pub fn block_mut(&mut self, b: usize) -> &mut AcceleratedBlock<T> {
        &mut self.blocks[b]
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Registers a chain instance and re-tags existing cells if needed.
    pub fn register(&mut self, chain: &DynamicsChain) -> Result<Registration> {
        let reg = self.registry.register_chain(chain)?;
        if let Some(remap) = &reg.remap {
            for b in &mut self.blocks {
                b.apply_remap(remap);
            }
        }
        Ok(reg)
    }

    pub fn set_chain(&mut self, region: Region, chain: &DynamicsChain) -> Result<()> {
        let dims = self.dims();
        if !region.is_empty() && (0..3).any(|a| region.hi[a] > dims[a]) {
            return Err(Error::OutOfRange {
                lo: region.lo,
                hi: region.hi,
                dims,
            });
        }
        let reg = self.register(chain)?;
        for p in region.iter() {
            self.set_cell_instance(p, reg.instance);
        }
        Ok(())
    }

    pub(crate) fn set_cell_instance(&mut self, p: [usize; 3], instance: u32) {
        let tag = self.registry.instance_tag(instance);
        let (b, [x, y, z]) = self.partition.locate(p);
        self.blocks[b].set_cell(x, y, z, tag, instance);
    }

    pub fn cell_instance(&self, p: [usize; 3]) -> u32 {
        let (b, [x, y, z]) = self.partition.locate(p);
        let blk = &self.blocks[b];
        blk.param_index()[blk.interior_index(x, y, z)]
    }

    pub fn cell_tag(&self, p: [usize; 3]) -> u32 {
        let (b, [x, y, z]) = self.partition.locate(p);
        let blk = &self.blocks[b];
        blk.tags()[blk.interior_index(x, y, z)]
    }

    pub fn cell_chain(&self, p: [usize; 3]) -> Result<DynamicsChain> {
        self.registry.instance_chain(self.cell_instance(p))
    }

    pub fn populations(&self, p: [usize; 3]) -> Populations<T> {
        let (b, [x, y, z]) = self.partition.locate(p);
        self.blocks[b].populations(x, y, z)
    }

    pub fn set_populations(&mut self, p: [usize; 3], f: &Populations<T>) {
        let (b, [x, y, z]) = self.partition.locate(p);
        self.blocks[b].set_populations(x, y, z, f);
    }

    /// Sorted chain strings of every tag present in the lattice.
    pub fn required_models(&mut self) -> Vec<String> {
        let mut tags = BTreeSet::new();
        for b in &mut self.blocks {
            tags.extend(b.present_tags().iter().copied());
        }
        let names: BTreeSet<String> = tags
            .into_iter()
            .map(|t| self.registry.chain_for(t).expect("registered").to_string())
            .collect();
        names.into_iter().collect()
    }

    /// Fills every envelope from neighbor interiors (and periodic images).
    pub fn exchange(&mut self) -> Result<()> {
        self.run_workers(None)
    }

    /// Exchange followed by one collide-and-stream step of every block.
    pub fn collide_and_stream(&mut self, dispatch: &DispatchSet) -> Result<()> {
        {
            let kernel = StepKernel::new(&self.registry, dispatch);
            for b in &mut self.blocks {
                kernel.check(b.present_tags())?;
            }
        }
        self.run_workers(Some(dispatch))?;
        self.steps += 1;
        Ok(())
    }

    fn run_workers(&mut self, dispatch: Option<&DispatchSet>) -> Result<()> {
        let first_round = self.rounds;
        self.rounds += 3;
        let kernel = dispatch.map(|d| StepKernel::new(&self.registry, d));
        let timeout = self.timeout;
        let plan = &self.plan;
        let worker_of = &self.partition.worker_of;

        let mut groups: Vec<(usize, &mut [AcceleratedBlock<T>])> = Vec::new();
        let mut rest: &mut [AcceleratedBlock<T>] = &mut self.blocks;
        let mut first = 0;
        for w in 0..self.partition.workers {
            let count = worker_of.iter().filter(|&&o| o == w).count();
            let (mine, tail) = rest.split_at_mut(count);
            groups.push((first, mine));
            first += count;
            rest = tail;
        }

        let work = |me: usize, first: usize, blocks: &mut [AcceleratedBlock<T>], ep: &mut Endpoint| -> Result<()> {
            let ctx = WorkerContext {
                me,
                first,
                plan,
                worker_of,
                timeout,
            };
            for phase in 0..3 {
                ctx.exchange_phase(blocks, ep, phase, first_round + phase as u64)?;
            }
            if let Some(kernel) = &kernel {
                for b in blocks.iter_mut() {
                    b.collide_and_stream(kernel)?;
                }
            }
            Ok(())
        };

        if groups.len() == 1 {
            let (first, blocks) = groups.pop().expect("one group");
            return work(0, first, blocks, &mut self.endpoints[0]);
        }
        let results: Vec<Result<()>> = std::thread::scope(|s| {
            let handles: Vec<_> = groups
                .into_iter()
                .zip(self.endpoints.iter_mut())
                .enumerate()
                .map(|(me, ((first, blocks), ep))| {
                    let work = &work;
                    s.spawn(move || work(me, first, blocks, ep))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(Error::Protocol("worker panicked".into())))
                })
                .collect()
        });
        results.into_iter().collect()
    }

    /// Global field in structure-of-arrays order.
    pub fn dump(&self) -> FieldDump {
        let dims = self.dims();
        let n = self.num_cells();
        let mut data = vec![0.0; Q * n];
        for blk in &self.blocks {
            let [ex, ey, ez] = blk.interior();
            let o = blk.origin();
            for z in 0..ez {
                for y in 0..ey {
                    for x in 0..ex {
                        let g = (o[0] + x) + dims[0] * ((o[1] + y) + dims[1] * (o[2] + z));
                        let f = blk.populations(x, y, z);
                        for i in 0..Q {
                            data[i * n + g] = f[i].as_f64();
                        }
                    }
                }
            }
        }
        FieldDump {
            dims,
            precision: T::PRECISION,
            data,
        }
    }

    /// Loads populations from a dump of matching extents.
    pub fn load(&mut self, dump: &FieldDump) -> Result<()> {
        let dims = self.dims();
        if dump.dims != dims {
            return Err(Error::Format(format!(
                "dump extents {:?} do not match lattice {:?}",
                dump.dims, dims
            )));
        }
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let f = dump.populations(x + dims[0] * (y + dims[1] * z)).map(T::of);
                    self.set_populations([x, y, z], &f);
                }
            }
        }
        Ok(())
    }

    /// Density and velocity of every cell, x fastest. Cells without a base
    /// collision (walls, `NoDynamics`) report `ρ = 1`, `u = 0`.
    pub fn macroscopic(&self) -> (Vec<f64>, Vec<[f64; 3]>) {
        let dims = self.dims();
        let n = self.num_cells();
        let mut rho = vec![0.0; n];
        let mut u = vec![[0.0; 3]; n];
        for blk in &self.blocks {
            let [ex, ey, ez] = blk.interior();
            let o = blk.origin();
            for z in 0..ez {
                for y in 0..ey {
                    for x in 0..ex {
                        let g = (o[0] + x) + dims[0] * ((o[1] + y) + dims[1] * (o[2] + z));
                        let tag = blk.tags()[blk.interior_index(x, y, z)];
                        if !self.registry.shape(tag).is_some_and(|s| s.is_fluid()) {
                            rho[g] = 1.0;
                            continue;
                        }
                        let (r, v) = density_velocity(&blk.populations(x, y, z));
                        rho[g] = r.as_f64();
                        u[g] = v.map(Real::as_f64);
                    }
                }
            }
        }
        (rho, u)
    }
}

fn boxed(t: InProcessTransport) -> Box<dyn Transport> {
    Box::new(t)
}

struct WorkerContext<'a> {
    me: usize,
    first: usize,
    plan: &'a ExchangePlan,
    worker_of: &'a [usize],
    timeout: Duration,
}

impl WorkerContext<'_> {
    fn exchange_phase<T: Real>(
        &self,
        blocks: &mut [AcceleratedBlock<T>],
        ep: &mut Endpoint,
        phase: usize,
        round: u64,
    ) -> Result<()> {
        let phase_msgs = self.plan.messages.iter().filter(|m| m.phase == phase);
        let mut expected = BTreeSet::new();
        for msg in phase_msgs {
            if self.worker_of[msg.src_block] == self.me {
                let mut payload = Vec::with_capacity(msg.cells() * Q * T::PRECISION.bytes());
                pack_message(&blocks[msg.src_block - self.first], msg, &all_cells, &mut payload);
                let frame = encode_frame(msg.index as u32, &payload);
                ep.transport.send(self.worker_of[msg.dst_block], round, frame)?;
            }
            if self.worker_of[msg.dst_block] == self.me {
                expected.insert(msg.index);
            }
        }
        let mut queued = ep.early.remove(&round).unwrap_or_default().into_iter();
        while !expected.is_empty() {
            let frame = match queued.next() {
                Some(frame) => frame,
                None => match ep.transport.recv(self.timeout)? {
                    None => {
                        return Err(Error::Protocol(format!(
                            "worker {}: {} message(s) lost in round {round} (first: #{})",
                            self.me,
                            expected.len(),
                            expected.first().expect("non-empty")
                        )))
                    }
                    Some((r, frame)) if r == round => frame,
                    Some((r, frame)) if r > round => {
                        ep.early.entry(r).or_default().push(frame);
                        continue;
                    }
                    Some((r, _)) => {
                        return Err(Error::Protocol(format!(
                            "worker {}: stale frame from round {r} during round {round}",
                            self.me
                        )))
                    }
                },
            };
            let (index, payload) = decode_frame(&frame)?;
            let index = index as usize;
            if !expected.remove(&index) {
                return Err(Error::Protocol(format!(
                    "worker {}: unexpected or duplicate message #{index} in round {round}",
                    self.me
                )));
            }
            let msg = &self.plan.messages[index];
            unpack_message(&mut blocks[msg.dst_block - self.first], msg, &all_cells, payload)?;
        }
        if let Some(extra) = queued.next() {
            let index = decode_frame(&extra).map(|(i, _)| i).unwrap_or(u32::MAX);
            return Err(Error::Protocol(format!(
                "worker {}: duplicate message #{index} in round {round}",
                self.me
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tgv_like(lat: &mut MultiBlockLattice<f64>) {
        let d = lat.dims();
        for z in 0..d[2] {
            for y in 0..d[1] {
                for x in 0..d[0] {
                    let f: Populations<f64> =
                        std::array::from_fn(|i| 1e-3 * ((x * 7 + y * 13 + z * 29 + i * 3) % 17) as f64);
                    lat.set_populations([x, y, z], &f);
                }
            }
        }
    }

    #[test]
    fn envelope_matches_neighbor_interior() {
        let dims = [8, 8, 8];
        let mut lat = MultiBlockLattice::<f64>::new(dims, [true; 3], [2, 1, 1], &DynamicsChain::bgk(1.0).unwrap())
            .unwrap()
            .with_workers(2)
            .unwrap();
        tgv_like(&mut lat);
        lat.exchange().unwrap();
        for blk in lat.blocks() {
            let [ex, ey, ez] = blk.interior();
            for z in 0..ez + 2 {
                for y in 0..ey + 2 {
                    for x in 0..ex + 2 {
                        let g = [x, y, z].map(|v| v as i64);
                        let global: [usize; 3] = std::array::from_fn(|a| {
                            (blk.origin()[a] as i64 + g[a] - 1).rem_euclid(dims[a] as i64) as usize
                        });
                        assert_eq!(
                            blk.local_populations(blk.local_index(x, y, z)),
                            lat.populations(global),
                            "block {} local {:?}",
                            blk.id(),
                            [x, y, z]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn single_block_exchange_equals_wraparound_copy() {
        let mut lat =
            MultiBlockLattice::<f64>::new([5, 4, 3], [true; 3], [1, 1, 1], &DynamicsChain::bgk(1.0).unwrap()).unwrap();
        tgv_like(&mut lat);
        let mut copy = lat.blocks()[0].clone();
        copy.fill_periodic_envelope([true; 3]);
        lat.exchange().unwrap();
        for i in 0..Q {
            assert_eq!(lat.blocks()[0].section(i), copy.section(i));
        }
        let before: Vec<Vec<f64>> = (0..Q).map(|i| lat.blocks()[0].section(i).to_vec()).collect();
        lat.exchange().unwrap();
        for i in 0..Q {
            assert_eq!(lat.blocks()[0].section(i), before[i].as_slice());
        }
    }

    #[test]
    fn walls_report_rest_state() {
        let mut lat =
            MultiBlockLattice::<f64>::new([6, 4, 4], [false; 3], [2, 1, 1], &DynamicsChain::bgk(1.0).unwrap()).unwrap();
        tgv_like(&mut lat);
        let wall = Region::new([0, 0, 0], [6, 4, 1]);
        lat.set_chain(wall, &DynamicsChain::moving_bounce_back([0.05, 0.0, 0.0]))
            .unwrap();
        lat.set_chain(Region::new([0, 0, 3], [6, 4, 4]), &DynamicsChain::no_dynamics())
            .unwrap();
        let (rho, u) = lat.macroscopic();
        for z in 0..4 {
            for y in 0..4 {
                for x in 0..6 {
                    let g = x + 6 * (y + 4 * z);
                    let (r, v) = density_velocity(&lat.populations([x, y, z]));
                    if z == 0 || z == 3 {
                        assert_eq!((rho[g], u[g]), (1.0, [0.0; 3]));
                    } else {
                        assert_eq!((rho[g], u[g]), (r, v));
                    }
                }
            }
        }
    }

    #[test]
    fn transport_count_must_match_workers() {
        let mut lat = MultiBlockLattice::<f32>::new([4; 3], [true; 3], [2, 1, 1], &DynamicsChain::bgk(1.0).unwrap())
            .unwrap()
            .with_workers(2)
            .unwrap();
        assert!(lat
            .set_transports(in_process_network(1).into_iter().map(boxed).collect())
            .is_err());
    }
}
