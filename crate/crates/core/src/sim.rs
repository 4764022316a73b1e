//! Event queue and simulation clock.
//!
//! Events are processed in `(time, seq)` order, where `seq` is the insertion
//! ordinal. Equal timestamps therefore resolve by insertion order, which keeps
//! runs reproducible without relying on floating-point tie behavior.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;
use std::io::Write;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::NodeId;

/// Default cap on processed events before a run is declared livelocked.
pub const DEFAULT_EVENT_CAP: u64 = 1_000_000_000;

/// Simulated time in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Panics on negative or non-finite input.
    pub fn from_secs(secs: f64) -> Self {
        assert!(
            secs.is_finite() && secs >= 0.0,
            "simulated time must be finite and non-negative, got {secs}"
        );
        SimTime(secs)
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    pub fn max(self, other: SimTime) -> SimTime {
        if other.0 > self.0 {
            other
        } else {
            self
        }
    }
}

impl Eq for SimTime {}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add<f64> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: f64) -> SimTime {
        SimTime::from_secs(self.0 + rhs)
    }
}

impl Sub for SimTime {
    type Output = f64;
    fn sub(self, rhs: SimTime) -> f64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.0)
    }
}

/// A timestamped occurrence addressed to one node.
#[derive(Clone, Debug)]
pub struct Event<P> {
    pub time: SimTime,
    pub seq: u64,
    pub target: NodeId,
    pub payload: P,
}

/// Payloads name themselves for trace output.
pub trait EventKind {
    fn kind(&self) -> &'static str;
}

/// Heap key: time bits, then insertion order, then the payload slot.
/// Non-negative f64 bit patterns sort like the values they encode.
type Key = Reverse<(u64, u64, u32)>;

/// Min-priority event queue that also owns the simulation clock.
///
/// The heap holds small keys only; payloads sit in a slab so sifting moves
/// 24 bytes per level regardless of payload size.
pub struct EventQueue<P> {
    heap: BinaryHeap<Key>,
    slots: Vec<Option<(NodeId, P)>>,
    free: Vec<u32>,
    now: SimTime,
    next_seq: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            slots: Vec::new(),
            free: Vec::new(),
            now: SimTime::ZERO,
            next_seq: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Schedules `payload` for `target` at absolute time `at` and returns the
    /// assigned sequence number.
    pub fn push(&mut self, at: SimTime, target: NodeId, payload: P) -> Result<u64> {
        if at < self.now || !at.0.is_finite() {
            return Err(Error::ScheduledInPast {
                now: self.now.0,
                at: at.0,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        let slot = match self.free.pop() {
            Some(i) => {
                self.slots[i as usize] = Some((target, payload));
                i
            }
            None => {
                self.slots.push(Some((target, payload)));
                (self.slots.len() - 1) as u32
            }
        };
        // -0.0 would sort above every positive time
        let bits = (at.0 + 0.0).to_bits();
        self.heap.push(Reverse((bits, seq, slot)));
        Ok(seq)
    }

    /// Schedules `payload` `delay` seconds from now.
    pub fn push_after(&mut self, delay: f64, target: NodeId, payload: P) -> Result<u64> {
        let at = self.now.0 + delay;
        if !(delay >= 0.0) || !at.is_finite() {
            return Err(Error::ScheduledInPast {
                now: self.now.0,
                at,
            });
        }
        self.push(SimTime(at), target, payload)
    }

    /// Removes the earliest event and advances the clock to its time.
    pub fn pop(&mut self) -> Option<Event<P>> {
        let Reverse((bits, seq, slot)) = self.heap.pop()?;
        let time = SimTime(f64::from_bits(bits));
        debug_assert!(time >= self.now);
        self.now = time;
        let (target, payload) = self.slots[slot as usize].take().expect("queued slot is filled");
        self.free.push(slot);
        Some(Event {
            time,
            seq,
            target,
            payload,
        })
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap
            .peek()
            .map(|Reverse((bits, _, _))| SimTime(f64::from_bits(*bits)))
    }
}

/// Consumer of events popped by [`run_until_idle`].
pub trait Handler<P> {
    fn handle(&mut self, event: Event<P>, queue: &mut EventQueue<P>) -> Result<()>;
}

#[derive(Clone, Copy, Debug)]
pub struct RunLimits {
    pub max_events: u64,
    /// Events scheduled after this time are left unprocessed.
    pub horizon: Option<f64>,
}

impl Default for RunLimits {
    fn default() -> Self {
        RunLimits {
            max_events: DEFAULT_EVENT_CAP,
            horizon: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub events: u64,
    pub clock: SimTime,
    pub horizon_reached: bool,
}

/// Newline-delimited JSON event trace.
pub struct TraceWriter<'a> {
    out: &'a mut dyn Write,
}

impl<'a> TraceWriter<'a> {
    pub fn new(out: &'a mut dyn Write) -> Self {
        TraceWriter { out }
    }

    fn record(&mut self, time: SimTime, seq: u64, target: NodeId, kind: &str) -> Result<()> {
        let line = serde_json::json!({
            "time": time.secs(),
            "seq": seq,
            "target": target,
            "kind": kind,
        });
        writeln!(self.out, "{line}")?;
        Ok(())
    }
}

/// Pops and dispatches events until the queue drains, the horizon is reached
/// or the event cap trips.
pub fn run_until_idle<P: EventKind, H: Handler<P>>(
    queue: &mut EventQueue<P>,
    handler: &mut H,
    limits: RunLimits,
    mut trace: Option<&mut TraceWriter<'_>>,
) -> Result<RunStats> {
    let mut stats = RunStats {
        clock: queue.now(),
        ..RunStats::default()
    };
    while let Some(next) = queue.peek_time() {
        if let Some(horizon) = limits.horizon {
            if next.secs() > horizon {
                stats.horizon_reached = true;
                break;
            }
        }
        if stats.events >= limits.max_events {
            return Err(Error::EventCapExceeded {
                cap: limits.max_events,
                clock: queue.now().secs(),
            });
        }
        let event = queue.pop().expect("peeked");
        stats.events += 1;
        stats.clock = event.time;
        if let Some(trace) = trace.as_deref_mut() {
            trace.record(event.time, event.seq, event.target, event.payload.kind())?;
        }
        handler.handle(event, queue)?;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[derive(Debug, Clone, Copy, PartialEq)]
    struct Tick(u32);

    impl EventKind for Tick {
        fn kind(&self) -> &'static str {
            "tick"
        }
    }

    #[test]
    fn pops_by_time() {
        let mut q = EventQueue::new();
        q.push(SimTime::from_secs(5.0), 0, Tick(0)).unwrap();
        q.push(SimTime::from_secs(3.0), 0, Tick(1)).unwrap();
        assert_eq!(q.pop().unwrap().time.secs(), 3.0);
        assert_eq!(q.pop().unwrap().time.secs(), 5.0);
        assert!(q.pop().is_none());
    }

    #[test]
    fn equal_times_pop_in_insertion_order() {
        let mut q = EventQueue::new();
        for i in 0..7 {
            q.push(SimTime::from_secs(0.5), 0, Tick(i)).unwrap();
        }
        let a = q.push(SimTime::from_secs(1.0), 0, Tick(7)).unwrap();
        let b = q.push(SimTime::from_secs(1.0), 0, Tick(8)).unwrap();
        assert_eq!((a, b), (7, 8));
        let order: Vec<u64> = std::iter::from_fn(|| q.pop()).map(|e| e.seq).collect();
        assert_eq!(order, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_past_events() {
        let mut q = EventQueue::new();
        q.push(SimTime::from_secs(2.0), 0, Tick(0)).unwrap();
        q.pop();
        let err = q.push(SimTime::from_secs(1.0), 0, Tick(1)).unwrap_err();
        assert!(matches!(err, Error::ScheduledInPast { .. }));
        assert!(q.push_after(-0.1, 0, Tick(1)).is_err());
        assert!(q.push(SimTime::from_secs(2.0), 0, Tick(1)).is_ok());
    }

    #[test]
    fn million_random_events_pop_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let times: Vec<f64> = (0..1_000_000).map(|_| rng.random_range(0.0..1e4)).collect();
        let mut q = EventQueue::new();
        for (i, t) in times.iter().enumerate() {
            q.push(SimTime::from_secs(*t), 0, Tick(i as u32)).unwrap();
        }
        // independent oracle: stable sort on (time, insertion index)
        let mut expected: Vec<(f64, u32)> =
            times.iter().enumerate().map(|(i, t)| (*t, i as u32)).collect();
        expected.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (t, i) in expected {
            let ev = q.pop().unwrap();
            assert_eq!(ev.time.secs(), t);
            assert_eq!(ev.payload, Tick(i));
        }
    }

    struct Chain {
        remaining: u32,
        seen: Vec<f64>,
    }

    impl Handler<Tick> for Chain {
        fn handle(&mut self, event: Event<Tick>, queue: &mut EventQueue<Tick>) -> Result<()> {
            self.seen.push(event.time.secs());
            if self.remaining > 0 {
                self.remaining -= 1;
                queue.push_after(0.25, event.target, Tick(event.payload.0 + 1))?;
            }
            Ok(())
        }
    }

    #[test]
    fn empty_queue_runs_to_zero() {
        let mut q: EventQueue<Tick> = EventQueue::new();
        let mut h = Chain {
            remaining: 0,
            seen: vec![],
        };
        let stats = run_until_idle(&mut q, &mut h, RunLimits::default(), None).unwrap();
        assert_eq!(stats.events, 0);
        assert_eq!(stats.clock, SimTime::ZERO);
    }

    #[test]
    fn clock_ends_at_last_event_and_trace_is_ndjson() {
        let mut q = EventQueue::new();
        q.push(SimTime::ZERO, 3, Tick(0)).unwrap();
        let mut h = Chain {
            remaining: 4,
            seen: vec![],
        };
        let mut buf = Vec::new();
        let mut trace = TraceWriter::new(&mut buf);
        let stats = run_until_idle(&mut q, &mut h, RunLimits::default(), Some(&mut trace)).unwrap();
        assert_eq!(stats.events, 5);
        assert_eq!(stats.clock.secs(), 1.0);
        assert!(h.seen.windows(2).all(|w| w[0] <= w[1]));
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<serde_json::Value> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[4]["time"], 1.0);
        assert_eq!(lines[4]["seq"], 4);
        assert_eq!(lines[4]["target"], 3);
        assert_eq!(lines[4]["kind"], "tick");
    }

    #[test]
    fn event_cap_aborts() {
        let mut q = EventQueue::new();
        q.push(SimTime::ZERO, 0, Tick(0)).unwrap();
        let mut h = Chain {
            remaining: u32::MAX,
            seen: vec![],
        };
        let limits = RunLimits {
            max_events: 100,
            horizon: None,
        };
        let err = run_until_idle(&mut q, &mut h, limits, None).unwrap_err();
        assert!(matches!(err, Error::EventCapExceeded { cap: 100, .. }));
    }

    #[test]
    fn horizon_stops_early() {
        let mut q = EventQueue::new();
        q.push(SimTime::ZERO, 0, Tick(0)).unwrap();
        let mut h = Chain {
            remaining: 100,
            seen: vec![],
        };
        let limits = RunLimits {
            max_events: 1000,
            horizon: Some(1.1),
        };
        let stats = run_until_idle(&mut q, &mut h, limits, None).unwrap();
        assert!(stats.horizon_reached);
        assert_eq!(stats.events, 5);
    }
}
