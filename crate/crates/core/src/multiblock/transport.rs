use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use crate::{Error, Result};

/// Reliable point-to-point message passing between workers.
///
/// `round` identifies the exchange a frame belongs to (three rounds per
/// step, one per axis); receivers use it to detect stale or early frames.
pub trait Transport: Send {
    fn rank(&self) -> usize;

    fn send(&mut self, dest: usize, round: u64, frame: Vec<u8>) -> Result<()>;

    /// Next frame addressed to this worker, or `None` after `timeout`.
    fn recv(&mut self, timeout: Duration) -> Result<Option<(u64, Vec<u8>)>>;
}

/// Channel-based transport for workers running as threads of one process.
#[derive(Debug)]
pub struct InProcessTransport {
    rank: usize,
    peers: Vec<Sender<(u64, Vec<u8>)>>,
    inbox: Receiver<(u64, Vec<u8>)>,
}

/// One connected endpoint per worker.
pub fn in_process_network(workers: usize) -> Vec<InProcessTransport> {
    let (senders, receivers): (Vec<_>, Vec<_>) = (0..workers).map(|_| mpsc::channel()).unzip();
    receivers
        .into_iter()
        .enumerate()
        .map(|(rank, inbox)| InProcessTransport {
            rank,
            peers: senders.clone(),
            inbox,
        })
        .collect()
}

impl Transport for InProcessTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn send(&mut self, dest: usize, round: u64, frame: Vec<u8>) -> Result<()> {
        let peer = self
            .peers
            .get(dest)
            .ok_or_else(|| Error::Protocol(format!("no worker {dest}")))?;
        peer.send((round, frame))
            .map_err(|_| Error::Protocol(format!("worker {dest} hung up")))
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<(u64, Vec<u8>)>> {
        match self.inbox.recv_timeout(timeout) {
            Ok(m) => Ok(Some(m)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(Error::Protocol("all peers hung up".into())),
        }
    }
}

const FRAME_HEADER: usize = 12;

/// `[message index: u32 LE][payload length: u64 LE][payload]`.
pub fn encode_frame(index: u32, payload: &[u8]) -> Vec<u8> {
    let mut frame = Vec::with_capacity(FRAME_HEADER + payload.len());
    frame.extend_from_slice(&index.to_le_bytes());
    frame.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    frame.extend_from_slice(payload);
    frame
}

pub fn decode_frame(frame: &[u8]) -> Result<(u32, &[u8])> {
    if frame.len() < FRAME_HEADER {
        return Err(Error::Protocol(format!("truncated frame of {} bytes", frame.len())));
    }
    let index = u32::from_le_bytes(frame[..4].try_into().unwrap());
    let len = u64::from_le_bytes(frame[4..12].try_into().unwrap()) as usize;
    let payload = &frame[FRAME_HEADER..];
    if payload.len() != len {
        return Err(Error::BufferSize {
            expected: len,
            actual: payload.len(),
        });
    }
    Ok((index, payload))
}
