//! Deterministic discrete-event network simulator.
//!
//! Nodes are connected by links with a fixed latency and bandwidth. A message
//! sent at `t` over a link is delivered at `t + latency + size / bandwidth`;
//! there is no contention model. Events are processed in timestamp order with
//! ties broken by insertion order, so a run is fully determined by its
//! topology, seeds and workload.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::NodeId;

pub const DEFAULT_LATENCY: f64 = 0.002;
pub const DEFAULT_BANDWIDTH: f64 = 125_000_000.0;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("a network needs at least one node")]
    NoNodes,
    #[error("no link between {0} and {1}")]
    UnknownLink(NodeId, NodeId),
    #[error("node {0} cannot send to itself")]
    SelfSend(NodeId),
    #[error("invalid link: latency {latency} must be >= 0 and bandwidth {bandwidth} > 0")]
    InvalidLink { latency: f64, bandwidth: f64 },
    #[error("no recorded {0} messages")]
    EmptyClass(MessageClass),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSpec {
    /// Seconds.
    pub latency: f64,
    /// Bytes per second.
    pub bandwidth: f64,
    /// Probability that a message on this link is silently lost.
    pub drop_prob: f64,
}

impl LinkSpec {
    pub fn new(latency: f64, bandwidth: f64) -> Result<Self, NetError> {
        if !(latency >= 0.0 && latency.is_finite() && bandwidth > 0.0) {
            return Err(NetError::InvalidLink { latency, bandwidth });
        }
        Ok(LinkSpec {
            latency,
            bandwidth,
            drop_prob: 0.0,
        })
    }

    pub fn transit_time(&self, bytes: usize) -> f64 {
        self.latency + bytes as f64 / self.bandwidth
    }
}

impl Default for LinkSpec {
    fn default() -> Self {
        LinkSpec::new(DEFAULT_LATENCY, DEFAULT_BANDWIDTH).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageClass {
    /// Carries a solution between nodes.
    Migrant,
    /// Acknowledgement of a migrant.
    Ack,
}

impl MessageClass {
    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for MessageClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MessageClass::Migrant => "migrant",
            MessageClass::Ack => "ack",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Deliver {
        from: NodeId,
        class: MessageClass,
        payload: Vec<u8>,
        sent_at: f64,
    },
    Timer {
        tag: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub seq: u64,
    pub target: NodeId,
    pub kind: EventKind,
}

struct Queued(Event);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // Reversed so the max-heap pops the earliest (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .time
            .total_cmp(&self.0.time)
            .then_with(|| other.0.seq.cmp(&self.0.seq))
    }
}

/// One line of the audit log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub time: f64,
    pub kind: LogKind,
    pub source: NodeId,
    pub target: NodeId,
    pub class: Option<MessageClass>,
    pub size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogKind {
    Send,
    Deliver,
    Drop,
    Timer,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            LogKind::Send => "send",
            LogKind::Deliver => "deliver",
            LogKind::Drop => "drop",
            LogKind::Timer => "timer",
        };
        let class = self
            .class
            .map_or_else(|| "-".to_string(), |c| c.to_string());
        write!(
            f,
            "{:.16e}\t{}\t{}\t{}\t{}\t{}",
            self.time, kind, self.source, self.target, class, self.size
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

/// Mean and sample standard deviation of `samples`.
pub fn mean_sd(samples: &[f64]) -> Option<LatencyStats> {
    if samples.is_empty() {
        return None;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = if samples.len() > 1 {
        (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(LatencyStats {
        mean,
        sd,
        count: samples.len(),
    })
}

pub struct SimNetwork {
    n: usize,
    links: Vec<Option<LinkSpec>>,
    queue: BinaryHeap<Queued>,
    clock: f64,
    seq: u64,
    transits: [Vec<f64>; 2],
    sent: u64,
    delivered: u64,
    dropped: u64,
    fault_rng: ChaCha8Rng,
    log: Option<Vec<LogRecord>>,
    log_timers: bool,
}

impl SimNetwork {
    /// `n` isolated nodes.
    pub fn new(n: usize) -> Result<Self, NetError> {
        if n == 0 {
            return Err(NetError::NoNodes);
        }
        Ok(SimNetwork {
            n,
            links: vec![None; n * n],
            queue: BinaryHeap::new(),
            clock: 0.0,
            seq: 0,
            transits: [Vec::new(), Vec::new()],
            sent: 0,
            delivered: 0,
            dropped: 0,
            fault_rng: ChaCha8Rng::seed_from_u64(0),
            log: None,
            log_timers: false,
        })
    }

    /// Complete graph where every link shares `spec`.
    pub fn build_complete(n: usize, spec: LinkSpec) -> Result<Self, NetError> {
        let mut net = SimNetwork::new(n)?;
        for a in 0..n {
            for b in a + 1..n {
                net.set_link(NodeId(a as u32), NodeId(b as u32), spec)?;
            }
        }
        Ok(net)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    fn slot(&self, a: NodeId, b: NodeId) -> Option<usize> {
        let (a, b) = (a.index(), b.index());
        (a < self.n && b < self.n).then(|| a.min(b) * self.n + a.max(b))
    }

    /// Adds or replaces the undirected link `a`–`b`.
    pub fn set_link(&mut self, a: NodeId, b: NodeId, spec: LinkSpec) -> Result<(), NetError> {
        if a == b {
            return Err(NetError::SelfSend(a));
        }
        LinkSpec::new(spec.latency, spec.bandwidth)?;
        let slot = self.slot(a, b).ok_or(NetError::UnknownLink(a, b))?;
        self.links[slot] = Some(spec);
        Ok(())
    }

    pub fn link(&self, a: NodeId, b: NodeId) -> Option<LinkSpec> {
        self.slot(a, b).and_then(|s| self.links[s])
    }

    /// Number of undirected links.
    pub fn link_count(&self) -> usize {
        self.links.iter().filter(|l| l.is_some()).count()
    }

    pub fn set_fault_seed(&mut self, seed: u64) {
        self.fault_rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Starts recording the audit log. Timer events are only logged when
    /// `with_timers` is set.
    pub fn enable_log(&mut self, with_timers: bool) {
        self.log = Some(Vec::new());
        self.log_timers = with_timers;
    }

    pub fn log(&self) -> Option<&[LogRecord]> {
        self.log.as_deref()
    }

    pub fn write_log<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "time\tkind\tsource\ttarget\tclass\tsize")?;
        for rec in self.log.iter().flatten() {
            writeln!(w, "{rec}")?;
        }
        Ok(())
    }

    pub fn now(&self) -> f64 {
        self.clock
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    pub fn messages_sent(&self) -> u64 {
        self.sent
    }

    pub fn messages_delivered(&self) -> u64 {
        self.delivered
    }

    pub fn messages_dropped(&self) -> u64 {
        self.dropped
    }

    fn push(&mut self, time: f64, target: NodeId, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Queued(Event {
            time,
            seq,
            target,
            kind,
        }));
    }

    fn record(&mut self, rec: LogRecord) {
        if let Some(log) = &mut self.log {
            log.push(rec);
        }
    }

    /// Schedules delivery of `payload` over the `from`–`to` link at the
    /// current clock. Returns the delivery time, or `None` if the fault
    /// injector dropped the message.
    pub fn send(
        &mut self,
        from: NodeId,
        to: NodeId,
        class: MessageClass,
        payload: Vec<u8>,
    ) -> Result<Option<f64>, NetError> {
        if from == to {
            return Err(NetError::SelfSend(from));
        }
        let spec = self.link(from, to).ok_or(NetError::UnknownLink(from, to))?;
        let now = self.clock;
        let size = payload.len();
        self.sent += 1;
        self.record(LogRecord {
            time: now,
            kind: LogKind::Send,
            source: from,
            target: to,
            class: Some(class),
            size,
        });
        if spec.drop_prob > 0.0 && self.fault_rng.random::<f64>() < spec.drop_prob {
            self.dropped += 1;
            self.record(LogRecord {
                time: now,
                kind: LogKind::Drop,
                source: from,
                target: to,
                class: Some(class),
                size,
            });
            return Ok(None);
        }
        let at = now + spec.transit_time(size);
        self.transits[class.index()].push(at - now);
        self.push(
            at,
            to,
            EventKind::Deliver {
                from,
                class,
                payload,
                sent_at: now,
            },
        );
        Ok(Some(at))
    }

    /// Schedules a timer for `node` at absolute time `at` (never before now).
    pub fn schedule_timer(&mut self, node: NodeId, at: f64, tag: u64) {
        let at = at.max(self.clock);
        self.push(at, node, EventKind::Timer { tag });
    }

    /// Pops the earliest event and advances the clock to it.
    pub fn step(&mut self) -> Option<Event> {
        let Queued(ev) = self.queue.pop()?;
        self.clock = ev.time;
        match &ev.kind {
            EventKind::Deliver {
                from,
                class,
                payload,
                ..
            } => {
                self.delivered += 1;
                let rec = LogRecord {
                    time: ev.time,
                    kind: LogKind::Deliver,
                    source: *from,
                    target: ev.target,
                    class: Some(*class),
                    size: payload.len(),
                };
                self.record(rec);
            }
            EventKind::Timer { .. } => {
                if self.log_timers {
                    let rec = LogRecord {
                        time: ev.time,
                        kind: LogKind::Timer,
                        source: ev.target,
                        target: ev.target,
                        class: None,
                        size: 0,
                    };
                    self.record(rec);
                }
            }
        }
        Some(ev)
    }

    /// Transit durations of every non-dropped message of `class`.
    pub fn transits(&self, class: MessageClass) -> &[f64] {
        &self.transits[class.index()]
    }

    pub fn latency_stats(&self, class: MessageClass) -> Result<LatencyStats, NetError> {
        mean_sd(self.transits(class)).ok_or(NetError::EmptyClass(class))
    }
}
