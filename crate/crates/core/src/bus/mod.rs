//! Publish/subscribe fabric for sensor streams: bounded per-subscriber
//! queues with blocking backpressure, plus the wire framing, typed payload
//! codecs, session log, and socket transport built on it.

pub mod frame;
pub mod log;
pub mod payload;
pub mod socket;

use std::sync::mpsc::{Receiver, SyncSender};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::sensors::ALL_STREAMS;
use frame::TimestampedRecord;

#[derive(Debug, Error)]
pub enum BusError {
    /// Publish or subscribe after `close`.
    #[error("bus is closed")]
    Closed,
    /// Stream id was never registered on this bus.
    #[error("unknown stream id {0}")]
    UnknownStream(u8),
}

struct Subscription {
    id: u64,
    wants: [bool; 256],
    tx: SyncSender<TimestampedRecord>,
}

struct State {
    subs: Vec<Subscription>,
    closed: bool,
    next_id: u64,
}

/// In-process stream fanout. Every record published reaches each live
/// subscriber of its stream exactly once, in publish order. Queues are
/// bounded: `publish` blocks until the slowest interested subscriber has
/// room, so nothing is ever dropped.
pub struct Bus {
    state: Arc<Mutex<State>>,
    registered: [bool; 256],
    capacity: usize,
}

impl Bus {
    /// Bus over the standard sensor streams.
    pub fn new(capacity: usize) -> Self {
        Bus::with_streams(capacity, &ALL_STREAMS)
    }

    /// Bus over an explicit stream-id set.
    pub fn with_streams(capacity: usize, streams: &[u8]) -> Self {
        let mut registered = [false; 256];
        for &s in streams {
            registered[s as usize] = true;
        }
        Bus {
            state: Arc::new(Mutex::new(State {
                subs: Vec::new(),
                closed: false,
                next_id: 0,
            })),
            registered,
            capacity: capacity.max(1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Registers a subscriber for the given streams and returns its queue.
    /// Records published before this call are not replayed.
    pub fn subscribe(&self, streams: &[u8]) -> Result<Receiver<TimestampedRecord>, BusError> {
        for &s in streams {
            if !self.registered[s as usize] {
                return Err(BusError::UnknownStream(s));
            }
        }
        let mut wants = [false; 256];
        for &s in streams {
            wants[s as usize] = true;
        }
        let (tx, rx) = std::sync::mpsc::sync_channel(self.capacity);
        let mut state = self.state.lock().unwrap();
        if state.closed {
            return Err(BusError::Closed);
        }
        let id = state.next_id;
        state.next_id += 1;
        state.subs.push(Subscription { id, wants, tx });
        Ok(rx)
    }

    /// Delivers one record to every interested subscriber, blocking while any
    /// of their queues is full. Subscribers whose receiver was dropped are
    /// pruned instead of delivered to.
    pub fn publish(&self, record: &TimestampedRecord) -> Result<(), BusError> {
        if !self.registered[record.stream_id as usize] {
            return Err(BusError::UnknownStream(record.stream_id));
        }
        // Senders are cloned out under the lock, then sent to without it so a
        // stalled subscriber blocks only this publisher, not subscribe calls.
        let targets: Vec<(u64, SyncSender<TimestampedRecord>)> = {
            let state = self.state.lock().unwrap();
            if state.closed {
                return Err(BusError::Closed);
            }
            state
                .subs
                .iter()
                .filter(|s| s.wants[record.stream_id as usize])
                .map(|s| (s.id, s.tx.clone()))
                .collect()
        };
        let mut dead = Vec::new();
        for (id, tx) in targets {
            if tx.send(record.clone()).is_err() {
                dead.push(id);
            }
        }
        if !dead.is_empty() {
            let mut state = self.state.lock().unwrap();
            state.subs.retain(|s| !dead.contains(&s.id));
        }
        Ok(())
    }

    /// Stops the bus. Subscribers see end-of-stream after draining whatever
    /// is already queued.
    pub fn close(&self) {
        let mut state = self.state.lock().unwrap();
        state.closed = true;
        state.subs.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::time::Duration;

    fn rec(stream_id: u8, seq: u64) -> TimestampedRecord {
        TimestampedRecord {
            stream_id,
            timestamp_ns: seq,
            payload: seq.to_le_bytes().to_vec(),
        }
    }

    #[test]
    fn fanout_is_exact_and_ordered() {
        let bus = Bus::new(4096);
        let cam = bus.subscribe(&[0]).unwrap();
        let pair = bus.subscribe(&[2, 3]).unwrap();
        let all = bus.subscribe(&crate::sensors::ALL_STREAMS).unwrap();
        let mut published = Vec::new();
        for i in 0..900u64 {
            let r = rec((i % 5) as u8, i);
            bus.publish(&r).unwrap();
            published.push(r);
        }
        bus.close();
        let cam_got: Vec<_> = cam.iter().collect();
        let pair_got: Vec<_> = pair.iter().collect();
        let all_got: Vec<_> = all.iter().collect();
        let expect = |pred: fn(&TimestampedRecord) -> bool| {
            published
                .iter()
                .filter(|r| pred(r))
                .cloned()
                .collect::<Vec<_>>()
        };
        assert_eq!(cam_got, expect(|r| r.stream_id == 0));
        assert_eq!(pair_got, expect(|r| r.stream_id == 2 || r.stream_id == 3));
        assert_eq!(all_got, published);
    }

    #[test]
    fn backpressure_blocks_instead_of_dropping() {
        let bus = Arc::new(Bus::new(2));
        let rx = bus.subscribe(&[0]).unwrap();
        let published = Arc::new(AtomicUsize::new(0));
        let publisher = {
            let bus = Arc::clone(&bus);
            let published = Arc::clone(&published);
            std::thread::spawn(move || {
                for i in 0..10u64 {
                    bus.publish(&rec(0, i)).unwrap();
                    published.fetch_add(1, Ordering::SeqCst);
                }
            })
        };
        // While nobody drains, at most capacity lands in the queue plus one
        // publish parked in send.
        std::thread::sleep(Duration::from_millis(100));
        let stalled_at = published.load(Ordering::SeqCst);
        assert!(
            stalled_at <= bus.capacity() + 1,
            "published {stalled_at} records into a capacity-{} queue",
            bus.capacity()
        );
        let mut got = Vec::new();
        for _ in 0..10 {
            got.push(rx.recv_timeout(Duration::from_secs(5)).unwrap());
        }
        publisher.join().unwrap();
        assert_eq!(
            got.iter().map(|r| r.timestamp_ns).collect::<Vec<_>>(),
            (0..10).collect::<Vec<_>>()
        );
    }

    #[test]
    fn dropped_subscriber_does_not_stall_publishers() {
        let bus = Bus::new(1);
        let rx = bus.subscribe(&[1]).unwrap();
        drop(rx);
        for i in 0..50 {
            bus.publish(&rec(1, i)).unwrap();
        }
    }

    #[test]
    fn close_rejects_further_use_but_keeps_queued_records() {
        let bus = Bus::new(8);
        let rx = bus.subscribe(&[4]).unwrap();
        bus.publish(&rec(4, 7)).unwrap();
        bus.close();
        assert!(matches!(bus.publish(&rec(4, 8)), Err(BusError::Closed)));
        assert!(matches!(bus.subscribe(&[4]), Err(BusError::Closed)));
        let got: Vec<_> = rx.iter().collect();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].timestamp_ns, 7);
    }

    #[test]
    fn unknown_stream_is_rejected() {
        let bus = Bus::new(8);
        assert!(matches!(
            bus.subscribe(&[99]),
            Err(BusError::UnknownStream(99))
        ));
        assert!(matches!(
            bus.publish(&rec(99, 0)),
            Err(BusError::UnknownStream(99))
        ));
        let custom = Bus::with_streams(8, &[99]);
        assert!(custom.subscribe(&[99]).is_ok());
        assert!(custom.publish(&rec(99, 0)).is_ok());
    }
}
