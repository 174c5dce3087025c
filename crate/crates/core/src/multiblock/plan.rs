use super::partition::BlockPartition;
use crate::accelerated::AcceleratedBlock;
use crate::descriptor::Q;
use crate::{Error, Real, Result};

/// Copy of a strip of interior cells of `src_block` into an envelope strip of
/// `dst_block`. Coordinates are block-local and include the envelope
/// (interior cells are `1..=n`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Message {
    pub index: usize,
    /// Axis swept by this message; messages of phase `a` read envelope cells
    /// filled by phases `< a`.
    pub phase: usize,
    pub src_block: usize,
    pub dst_block: usize,
    pub src_lo: [usize; 3],
    pub dst_lo: [usize; 3],
    pub shape: [usize; 3],
    /// Global coordinate of the cell at `src_lo`, possibly outside the domain
    /// when the strip includes envelope cells.
    pub src_global_lo: [i64; 3],
}

impl Message {
    pub fn cells(&self) -> usize {
        self.shape.iter().product()
    }

    /// `(local source, local destination, global source)` per cell, x fastest.
    pub fn cells_iter(&self) -> impl Iterator<Item = ([usize; 3], [usize; 3], [i64; 3])> + '_ {
        let [sx, sy, sz] = self.shape;
        (0..sz).flat_map(move |k| {
            (0..sy).flat_map(move |j| {
                (0..sx).map(move |i| {
                    let d = [i, j, k];
                    (
                        std::array::from_fn(|a| self.src_lo[a] + d[a]),
                        std::array::from_fn(|a| self.dst_lo[a] + d[a]),
                        std::array::from_fn(|a| self.src_global_lo[a] + d[a] as i64),
                    )
                })
            })
        })
    }
}

/// All envelope messages of one exchange, in phase order (x, y, z).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExchangePlan {
    pub messages: Vec<Message>,
    /// Byte offsets of each message in a dense buffer (exclusive prefix sum);
    /// the last entry is the total size.
    pub offsets: Vec<usize>,
    pub value_bytes: usize,
}

impl ExchangePlan {
    pub fn new(partition: &BlockPartition, periodic: [bool; 3], value_bytes: usize) -> Self {
        let mut messages = Vec::new();
        for axis in 0..3 {
            for (dst, blk) in partition.blocks.iter().enumerate() {
                for side in [-1i64, 1] {
                    let g = blk.grid_pos[axis] as i64 + side;
                    let count = partition.block_grid[axis] as i64;
                    let g = if (0..count).contains(&g) {
                        g
                    } else if periodic[axis] {
                        g.rem_euclid(count)
                    } else {
                        continue;
                    };
                    let mut pos = blk.grid_pos;
                    pos[axis] = g as usize;
                    let src = partition.block_at(pos);
                    let nb = &partition.blocks[src];
                    let mut src_lo = [0; 3];
                    let mut dst_lo = [0; 3];
                    let mut shape = [0; 3];
                    for a in 0..3 {
                        if a == axis {
                            shape[a] = 1;
                            (src_lo[a], dst_lo[a]) = if side < 0 {
                                (nb.extent[a], 0)
                            } else {
                                (1, blk.extent[a] + 1)
                            };
                        } else if a < axis {
                            shape[a] = blk.extent[a] + 2;
                        } else {
                            shape[a] = blk.extent[a];
                            src_lo[a] = 1;
                            dst_lo[a] = 1;
                        }
                    }
                    let src_global_lo = std::array::from_fn(|a| nb.origin[a] as i64 + src_lo[a] as i64 - 1);
                    messages.push(Message {
                        index: messages.len(),
                        phase: axis,
                        src_block: src,
                        dst_block: dst,
                        src_lo,
                        dst_lo,
                        shape,
                        src_global_lo,
                    });
                }
            }
        }
        let offsets = exclusive_scan(messages.iter().map(|m| m.cells() * Q * value_bytes));
        Self {
            messages,
            offsets,
            value_bytes,
        }
    }
}

/// `[0, c0, c0 + c1, ...]`, one entry longer than the input.
pub fn exclusive_scan(counts: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mut out = vec![0];
    let mut acc = 0;
    for c in counts {
        acc += c;
        out.push(acc);
    }
    out
}

/// Appends the selected cells of the message's source strip to `out`;
/// returns the number of cells written.
pub fn pack_message<T: Real>(
    block: &AcceleratedBlock<T>,
    msg: &Message,
    predicate: &dyn Fn([i64; 3]) -> bool,
    out: &mut Vec<u8>,
) -> usize {
    let mut count = 0;
    for (s, _, g) in msg.cells_iter() {
        if !predicate(g) {
            continue;
        }
        let f = block.local_populations(block.local_index(s[0], s[1], s[2]));
        for v in f {
            v.put_le(out);
        }
        count += 1;
    }
    count
}

/// Writes a packed strip into the destination envelope.
pub fn unpack_message<T: Real>(
    block: &mut AcceleratedBlock<T>,
    msg: &Message,
    predicate: &dyn Fn([i64; 3]) -> bool,
    payload: &[u8],
) -> Result<()> {
    let width = T::PRECISION.bytes();
    let selected = msg.cells_iter().filter(|&(_, _, g)| predicate(g)).count();
    let expected = selected * Q * width;
    if payload.len() != expected {
        return Err(Error::BufferSize {
            expected,
            actual: payload.len(),
        });
    }
    let mut values = payload.chunks_exact(width);
    for (_, d, g) in msg.cells_iter() {
        if !predicate(g) {
            continue;
        }
        let f: [T; Q] = std::array::from_fn(|_| T::get_le(values.next().expect("size checked")));
        let idx = block.local_index(d[0], d[1], d[2]);
        block.set_local_populations(idx, &f);
    }
    Ok(())
}

/// All messages sourced from one block, packed back to back.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedEnvelope {
    pub messages: Vec<usize>,
    /// Exclusive prefix sum of the per-message byte counts.
    pub offsets: Vec<usize>,
    pub bytes: Vec<u8>,
}

pub fn pack_envelope<T: Real>(
    block: &AcceleratedBlock<T>,
    plan: &ExchangePlan,
    predicate: &dyn Fn([i64; 3]) -> bool,
) -> PackedEnvelope {
    let mut bytes = Vec::new();
    let mut sizes = Vec::new();
    let mut messages = Vec::new();
    for msg in plan.messages.iter().filter(|m| m.src_block == block.id()) {
        let before = bytes.len();
        pack_message(block, msg, predicate, &mut bytes);
        sizes.push(bytes.len() - before);
        messages.push(msg.index);
    }
    PackedEnvelope {
        messages,
        offsets: exclusive_scan(sizes),
        bytes,
    }
}

/// Applies the messages of `packed` addressed to `block`.
pub fn unpack_envelope<T: Real>(
    block: &mut AcceleratedBlock<T>,
    plan: &ExchangePlan,
    packed: &PackedEnvelope,
    predicate: &dyn Fn([i64; 3]) -> bool,
) -> Result<()> {
    let total = *packed.offsets.last().unwrap_or(&0);
    if packed.bytes.len() != total || packed.offsets.len() != packed.messages.len() + 1 {
        return Err(Error::BufferSize {
            expected: total,
            actual: packed.bytes.len(),
        });
    }
    for (k, &m) in packed.messages.iter().enumerate() {
        let msg = plan
            .messages
            .get(m)
            .ok_or_else(|| Error::Protocol(format!("message {m} is not in the plan")))?;
        if msg.dst_block == block.id() {
            unpack_message(
                block,
                msg,
                predicate,
                &packed.bytes[packed.offsets[k]..packed.offsets[k + 1]],
            )?;
        }
    }
    Ok(())
}
