//! Deterministic discrete-event kernel for two endpoints behind a fixed link.
//!
//! Virtual time is real-valued seconds. Events are dispatched in timestamp
//! order; events with equal timestamps run in the order they were scheduled
//! (FIFO). The link applies the same one-way delay in both directions, so a
//! request/response pair costs exactly one round trip.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

/// A point in virtual time, in seconds since the start of the run.
///
/// Always finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Wraps a number of seconds. Panics on NaN, infinite, or negative input;
    /// timestamps come from configuration and arithmetic we control, so a bad
    /// value is a programming error, not a runtime condition.
    pub fn from_secs(secs: f64) -> SimTime {
        assert!(
            secs.is_finite() && secs >= 0.0,
            "SimTime must be finite and non-negative, got {secs}"
        );
        SimTime(secs)
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    /// This time shifted later by `secs` (must be non-negative).
    pub fn after(self, secs: f64) -> SimTime {
        SimTime::from_secs(self.0 + secs)
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        // Values are validated finite, so total_cmp agrees with numeric order.
        self.0.total_cmp(&other.0)
    }
}

/// One side of the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Endpoint {
    Earth,
    Mars,
}

impl Endpoint {
    pub fn peer(self) -> Endpoint {
        match self {
            Endpoint::Earth => Endpoint::Mars,
            Endpoint::Mars => Endpoint::Earth,
        }
    }
}

/// Propagation delay of the Earth-Mars link.
///
/// The delay is symmetric: the same one-way figure applies in both
/// directions, so `rtt_s() == 2 * one_way_delay_s`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinkConfig {
    pub one_way_delay_s: f64,
}

impl LinkConfig {
    /// Mars near closest approach: 8 minutes round trip.
    pub const MARS_NEAR: LinkConfig = LinkConfig { one_way_delay_s: 240.0 };
    /// Mars near conjunction: 48 minutes round trip.
    pub const MARS_FAR: LinkConfig = LinkConfig { one_way_delay_s: 1440.0 };

    /// Builds a link from a round-trip time in minutes.
    pub fn from_rtt_minutes(rtt_min: f64) -> LinkConfig {
        assert!(
            rtt_min.is_finite() && rtt_min >= 0.0,
            "round-trip minutes must be finite and non-negative, got {rtt_min}"
        );
        LinkConfig { one_way_delay_s: rtt_min * 60.0 / 2.0 }
    }

    pub fn from_rtt_secs(rtt_s: f64) -> LinkConfig {
        assert!(
            rtt_s.is_finite() && rtt_s >= 0.0,
            "round-trip seconds must be finite and non-negative, got {rtt_s}"
        );
        LinkConfig { one_way_delay_s: rtt_s / 2.0 }
    }

    pub fn rtt_s(&self) -> f64 {
        2.0 * self.one_way_delay_s
    }
}

/// A dispatched event: a payload delivered to an endpoint at a virtual time.
#[derive(Debug, Clone)]
pub struct Event<M> {
    pub at: SimTime,
    pub endpoint: Endpoint,
    pub payload: M,
    /// Scheduling sequence number; the FIFO tiebreak for equal timestamps.
    pub seq: u64,
}

/// One line of the dispatch trace: what ran, where, when.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEntry {
    pub seq: u64,
    pub endpoint: Endpoint,
    /// Timestamp in bits, so trace comparison is exact.
    pub at_bits: u64,
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("cannot schedule event at t={at}s: clock already at t={clock}s")]
    Causality { at: f64, clock: f64 },
    #[error("transmit requires distinct endpoints, got {endpoint:?} twice")]
    SameEndpoint { endpoint: Endpoint },
}

struct Queued<M> {
    at: SimTime,
    seq: u64,
    endpoint: Endpoint,
    payload: M,
}

impl<M> PartialEq for Queued<M> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}
impl<M> Eq for Queued<M> {}

impl<M> PartialOrd for Queued<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M> Ord for Queued<M> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the earliest (at, seq).
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// The event queue, clock, and link of one simulation run.
///
/// `M` is the message type delivered to endpoints. The kernel itself knows
/// nothing about payloads; behaviour lives in the handler passed to
/// [`Kernel::run_until`].
pub struct Kernel<M> {
    clock: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Queued<M>>,
    link: LinkConfig,
    trace: Vec<TraceEntry>,
}

impl<M> Kernel<M> {
    pub fn new(link: LinkConfig) -> Kernel<M> {
        Kernel {
            clock: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            link,
            trace: Vec::new(),
        }
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    pub fn link(&self) -> LinkConfig {
        self.link
    }

    /// Enqueues `payload` for delivery to `endpoint` at time `at`.
    ///
    /// Scheduling into the past is a causality error.
    pub fn schedule(&mut self, at: SimTime, endpoint: Endpoint, payload: M) -> Result<(), KernelError> {
        if at < self.clock {
            return Err(KernelError::Causality { at: at.secs(), clock: self.clock.secs() });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Queued { at, seq, endpoint, payload });
        Ok(())
    }

    /// Sends `payload` across the link at time `at`; it arrives at the peer
    /// endpoint after the one-way delay. Returns the arrival time.
    ///
    /// Every transmit enqueues exactly one arrival event.
    pub fn transmit(&mut self, payload: M, from: Endpoint, to: Endpoint, at: SimTime) -> Result<SimTime, KernelError> {
        if from == to {
            return Err(KernelError::SameEndpoint { endpoint: from });
        }
        if at < self.clock {
            return Err(KernelError::Causality { at: at.secs(), clock: self.clock.secs() });
        }
        let arrival = at.after(self.link.one_way_delay_s);
        self.schedule(arrival, to, payload)?;
        Ok(arrival)
    }

    /// Timestamp of the earliest queued event, if any.
    pub fn peek_next_at(&self) -> Option<SimTime> {
        self.queue.peek().map(|q| q.at)
    }

    /// Dispatches every event with `at <= t` in (timestamp, scheduling) order,
    /// invoking `handler` for each; the handler may schedule or transmit more.
    /// Afterwards the clock is exactly `t`. Returns the number of dispatches.
    pub fn run_until<F>(&mut self, t: SimTime, mut handler: F) -> usize
    where
        F: FnMut(&mut Kernel<M>, Event<M>),
    {
        assert!(t >= self.clock, "run_until({}) but clock is {}", t.secs(), self.clock.secs());
        let mut dispatched = 0;
        while let Some(head) = self.queue.peek() {
            if head.at > t {
                break;
            }
            let q = self.queue.pop().expect("peeked event vanished");
            self.clock = q.at;
            self.trace.push(TraceEntry {
                seq: q.seq,
                endpoint: q.endpoint,
                at_bits: q.at.secs().to_bits(),
            });
            handler(self, Event { at: q.at, endpoint: q.endpoint, payload: q.payload, seq: q.seq });
            dispatched += 1;
        }
        self.clock = t;
        dispatched
    }

    /// Every dispatch so far, in order. Two runs of the same inputs produce
    /// identical traces.
    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_into_past_is_causality_error() {
        let mut k: Kernel<u32> = Kernel::new(LinkConfig::MARS_NEAR);
        k.schedule(SimTime::from_secs(10.0), Endpoint::Earth, 1).unwrap();
        k.run_until(SimTime::from_secs(10.0), |_, _| {});
        let err = k.schedule(SimTime::from_secs(5.0), Endpoint::Earth, 2).unwrap_err();
        assert!(matches!(err, KernelError::Causality { .. }));
    }

    #[test]
    fn transmit_arrival_is_one_way_delay_later() {
        let mut k: Kernel<&str> = Kernel::new(LinkConfig { one_way_delay_s: 240.0 });
        let arr = k.transmit("q", Endpoint::Mars, Endpoint::Earth, SimTime::ZERO).unwrap();
        assert_eq!(arr.secs(), 240.0);
        let mut seen = Vec::new();
        k.run_until(SimTime::from_secs(240.0), |_, ev| seen.push((ev.at.secs(), ev.endpoint)));
        assert_eq!(seen, vec![(240.0, Endpoint::Earth)]);
    }

    #[test]
    fn transmit_to_self_is_rejected() {
        let mut k: Kernel<u8> = Kernel::new(LinkConfig::MARS_NEAR);
        let err = k.transmit(0, Endpoint::Mars, Endpoint::Mars, SimTime::ZERO).unwrap_err();
        assert!(matches!(err, KernelError::SameEndpoint { .. }));
    }

    #[test]
    fn run_until_dispatches_only_due_events() {
        let mut k: Kernel<u32> = Kernel::new(LinkConfig::MARS_NEAR);
        for (t, m) in [(1.0, 1), (2.0, 2), (3.0, 3)] {
            k.schedule(SimTime::from_secs(t), Endpoint::Earth, m).unwrap();
        }
        let n = k.run_until(SimTime::from_secs(2.0), |_, _| {});
        assert_eq!(n, 2);
        assert_eq!(k.clock().secs(), 2.0);
        let n = k.run_until(SimTime::from_secs(3.0), |_, _| {});
        assert_eq!(n, 1);
    }

    #[test]
    fn equal_timestamps_dispatch_in_scheduling_order() {
        let mut k: Kernel<u32> = Kernel::new(LinkConfig::MARS_NEAR);
        for m in 0..8 {
            k.schedule(SimTime::from_secs(7.0), Endpoint::Mars, m).unwrap();
        }
        let mut order = Vec::new();
        k.run_until(SimTime::from_secs(7.0), |_, ev| order.push(ev.payload));
        assert_eq!(order, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn clock_is_monotone_and_lands_on_target() {
        let mut k: Kernel<u32> = Kernel::new(LinkConfig::MARS_NEAR);
        k.schedule(SimTime::from_secs(4.5), Endpoint::Earth, 0).unwrap();
        let mut clocks = Vec::new();
        k.run_until(SimTime::from_secs(9.0), |k, _| clocks.push(k.clock().secs()));
        assert_eq!(clocks, vec![4.5]);
        assert_eq!(k.clock().secs(), 9.0);
    }

    /// Ping-pong: a request sent at t=0 over a 480 s one-way link, with each
    /// arrival answered immediately. Arrivals land at 480, 960, 1440, 1920,
    /// and 2400 seconds, so running to t=2400 dispatches five events.
    #[test]
    fn ping_pong_dispatch_count() {
        let mut k: Kernel<()> = Kernel::new(LinkConfig { one_way_delay_s: 480.0 });
        k.transmit((), Endpoint::Mars, Endpoint::Earth, SimTime::ZERO).unwrap();
        let n = k.run_until(SimTime::from_secs(2400.0), |k, ev| {
            let now = ev.at;
            k.transmit((), ev.endpoint, ev.endpoint.peer(), now).unwrap();
        });
        assert_eq!(n, 5);
    }

    #[test]
    fn conservation_each_transmit_yields_one_arrival() {
        let mut k: Kernel<u32> = Kernel::new(LinkConfig::MARS_NEAR);
        let mut sent = 0u32;
        for i in 0..5 {
            k.transmit(i, Endpoint::Earth, Endpoint::Mars, SimTime::from_secs(i as f64)).unwrap();
            sent += 1;
        }
        let mut received = 0u32;
        k.run_until(SimTime::from_secs(1e6), |_, _| received += 1);
        assert_eq!(sent, received);
        assert!(k.peek_next_at().is_none());
    }

    #[test]
    fn symmetric_delay_both_directions() {
        let mut k: Kernel<u8> = Kernel::new(LinkConfig::MARS_FAR);
        let a = k.transmit(0, Endpoint::Earth, Endpoint::Mars, SimTime::ZERO).unwrap();
        let b = k.transmit(1, Endpoint::Mars, Endpoint::Earth, SimTime::ZERO).unwrap();
        assert_eq!(a.secs(), b.secs());
        assert_eq!(a.secs(), 1440.0);
    }

    #[test]
    fn identical_runs_produce_identical_traces() {
        fn run() -> Vec<TraceEntry> {
            let mut k: Kernel<u64> = Kernel::new(LinkConfig::MARS_NEAR);
            for i in 0..20u64 {
                // Mix of equal and distinct timestamps.
                let t = SimTime::from_secs((i / 3) as f64 * 0.1);
                k.schedule(t, if i % 2 == 0 { Endpoint::Earth } else { Endpoint::Mars }, i)
                    .unwrap();
            }
            k.run_until(SimTime::from_secs(10.0), |k, ev| {
                if ev.payload % 5 == 0 {
                    k.transmit(ev.payload + 100, ev.endpoint, ev.endpoint.peer(), ev.at).unwrap();
                }
            });
            k.run_until(SimTime::from_secs(1e4), |_, _| {});
            k.trace().to_vec()
        }
        assert_eq!(run(), run());
    }

    #[test]
    fn rtt_presets() {
        assert_eq!(LinkConfig::MARS_NEAR.rtt_s(), 480.0);
        assert_eq!(LinkConfig::MARS_FAR.rtt_s(), 2880.0);
        assert_eq!(LinkConfig::from_rtt_minutes(8.0).one_way_delay_s, 240.0);
        assert_eq!(LinkConfig::from_rtt_minutes(48.0).one_way_delay_s, 1440.0);
        assert_eq!(LinkConfig::from_rtt_minutes(0.0).rtt_s(), 0.0);
    }
}
