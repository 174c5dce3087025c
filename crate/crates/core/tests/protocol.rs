use std::time::Duration;

use dolb::accelerated::DispatchSet;
use dolb::cases::CaseConfig;
use dolb::multiblock::{decode_frame, encode_frame, in_process_network, MultiBlockLattice, Transport};
use dolb::Error;

#[derive(Clone, Copy, Debug)]
enum Fault {
    Drop,
    Duplicate,
    Stale,
    Truncate,
    Reorder,
}

/// Misbehaves on the first frame sent by rank 0 (from the second step on,
/// for stale rounds).
struct Faulty {
    inner: Box<dyn Transport>,
    fault: Option<Fault>,
    held: Option<(usize, u64, Vec<u8>)>,
}

impl Transport for Faulty {
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    fn send(&mut self, dest: usize, round: u64, frame: Vec<u8>) -> dolb::Result<()> {
        match self.fault.take() {
            Some(Fault::Stale) if round < 3 => {
                self.fault = Some(Fault::Stale);
                self.inner.send(dest, round, frame)
            }
            None => {
                self.inner.send(dest, round, frame)?;
                if let Some((d, r, f)) = self.held.take() {
                    self.inner.send(d, r, f)?;
                }
                Ok(())
            }
            Some(Fault::Drop) => Ok(()),
            Some(Fault::Duplicate) => {
                self.inner.send(dest, round, frame.clone())?;
                self.inner.send(dest, round, frame)
            }
            Some(Fault::Stale) => self.inner.send(dest, round.wrapping_sub(1), frame),
            Some(Fault::Truncate) => {
                let (index, payload) = decode_frame(&frame)?;
                let short = encode_frame(index, &payload[..payload.len() - 8]);
                self.inner.send(dest, round, short)
            }
            Some(Fault::Reorder) => {
                self.held = Some((dest, round, frame));
                Ok(())
            }
        }
    }

    fn recv(&mut self, timeout: Duration) -> dolb::Result<Option<(u64, Vec<u8>)>> {
        self.inner.recv(timeout)
    }
}

fn lattice_with(fault: Option<Fault>) -> (MultiBlockLattice<f64>, DispatchSet) {
    let setup = CaseConfig::tgv(8, 100.0, 0.1).setup().unwrap();
    let dispatch = DispatchSet::new(setup.required_models()).unwrap();
    let mut lattice = setup.build_accelerated::<f64>([2, 1, 1], 2).unwrap();
    let transports: Vec<Box<dyn Transport>> = in_process_network(2)
        .into_iter()
        .map(|t| {
            let rank = t.rank();
            Box::new(Faulty {
                inner: Box::new(t),
                fault: if rank == 0 { fault } else { None },
                held: None,
            }) as Box<dyn Transport>
        })
        .collect();
    lattice.set_transports(transports).unwrap();
    lattice.set_exchange_timeout(Duration::from_millis(200));
    (lattice, dispatch)
}

fn protocol_message(fault: Fault) -> String {
    let (mut lattice, dispatch) = lattice_with(Some(fault));
    for _ in 0..3 {
        match lattice.collide_and_stream(&dispatch) {
            Ok(()) => continue,
            Err(Error::Protocol(msg)) => return msg,
            Err(other) => panic!("{fault:?}: expected a protocol error, got {other:?}"),
        }
    }
    panic!("{fault:?}: fault went unnoticed")
}

#[test]
fn healthy_transport_steps() {
    let (mut lattice, dispatch) = lattice_with(None);
    for _ in 0..3 {
        lattice.collide_and_stream(&dispatch).unwrap();
    }
}

#[test]
fn lost_message_times_out() {
    assert!(protocol_message(Fault::Drop).contains("lost"));
}

#[test]
fn duplicate_message_is_rejected() {
    assert!(protocol_message(Fault::Duplicate).contains("duplicate"));
}

#[test]
fn stale_round_is_rejected() {
    assert!(protocol_message(Fault::Stale).contains("stale"));
}

#[test]
fn truncated_payload_is_a_size_error() {
    let (mut lattice, dispatch) = lattice_with(Some(Fault::Truncate));
    assert!(matches!(
        lattice.collide_and_stream(&dispatch),
        Err(Error::BufferSize { .. })
    ));
}

#[test]
fn reordered_messages_within_a_round_are_accepted() {
    let (mut faulty, dispatch) = lattice_with(Some(Fault::Reorder));
    let (mut healthy, _) = lattice_with(None);
    for _ in 0..2 {
        faulty.collide_and_stream(&dispatch).unwrap();
        healthy.collide_and_stream(&dispatch).unwrap();
    }
    assert_eq!(faulty.dump(), healthy.dump());
}

#[test]
fn transport_count_must_match_workers() {
    let (mut lattice, _) = lattice_with(None);
    let one: Vec<Box<dyn Transport>> = in_process_network(1)
        .into_iter()
        .map(|t| Box::new(t) as Box<dyn Transport>)
        .collect();
    assert!(matches!(lattice.set_transports(one), Err(Error::Config(_))));
}
