//! Scheduler Agent protocol: periodic contribution pings with a refresh
//! interval that tracks the measured round-trip time, per-peer caching of
//! the newest contribution, and the binary wire codec for both messages.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use rand::seq::IndexedRandom;
use rand::Rng;
use thiserror::Error;

use crate::agent::Blackboard;
use crate::benchmarks::Genome;
use crate::ea::Individual;
use crate::NodeId;

pub const DEFAULT_DELTA_T: f64 = 1.0;
pub const DEFAULT_DELTA_T_MIN: f64 = 0.001;
pub const DEFAULT_DELTA_T_MAX: f64 = 10.0;

const TAG_PING: u8 = 1;
const TAG_PONG: u8 = 2;
pub const PONG_LEN: usize = 13;
const PING_FIXED_LEN: usize = 1 + 8 + 4 + 8 + 2 + 8;

#[derive(Debug, Error, PartialEq)]
pub enum GossipError {
    #[error("contribution solution has not been evaluated")]
    Unevaluated,
    #[error("genome of {0} genes does not fit the 16-bit length field")]
    GenomeTooLong(usize),
    #[error("node {0} cannot cache its own contribution")]
    SelfInsert(NodeId),
}

/// Gossip payload: who sent it, how many evaluations that node had
/// performed, and one of its solutions.
#[derive(Debug, Clone, PartialEq)]
pub struct Contribution {
    address: NodeId,
    num_evaluations: u64,
    solution: Individual,
}

impl Contribution {
    pub fn new(
        address: NodeId,
        num_evaluations: u64,
        solution: Individual,
    ) -> Result<Self, GossipError> {
        if solution.fitness.is_none() {
            return Err(GossipError::Unevaluated);
        }
        if solution.genome.len() > u16::MAX as usize {
            return Err(GossipError::GenomeTooLong(solution.genome.len()));
        }
        Ok(Contribution {
            address,
            num_evaluations,
            solution,
        })
    }

    pub fn address(&self) -> NodeId {
        self.address
    }

    pub fn num_evaluations(&self) -> u64 {
        self.num_evaluations
    }

    pub fn solution(&self) -> &Individual {
        &self.solution
    }

    pub fn fitness(&self) -> f64 {
        self.solution.fitness.expect("contributions are evaluated")
    }

    /// Finite genes and fitness, optionally of the expected length.
    pub fn is_well_formed(&self, expected_dim: Option<usize>) -> bool {
        expected_dim.is_none_or(|d| d == self.solution.genome.len())
            && self.fitness().is_finite()
            && self.solution.genome.genes().iter().all(|g| g.is_finite())
    }
}

/// Newest contribution per peer, keyed by node id.
#[derive(Debug, Clone)]
pub struct Cache {
    owner: NodeId,
    entries: BTreeMap<NodeId, Contribution>,
}

impl Cache {
    pub fn new(owner: NodeId) -> Self {
        Cache {
            owner,
            entries: BTreeMap::new(),
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, node: NodeId) -> Option<&Contribution> {
        self.entries.get(&node)
    }

    /// Entries in ascending node-id order.
    pub fn entries(&self) -> impl Iterator<Item = &Contribution> {
        self.entries.values()
    }

    /// Sets the slot for `c.address()` unless the held entry reports more
    /// evaluations. Returns whether the slot changed.
    pub fn insert(&mut self, c: Contribution) -> Result<bool, GossipError> {
        if c.address == self.owner {
            return Err(GossipError::SelfInsert(self.owner));
        }
        match self.entries.get(&c.address) {
            Some(old) if old.num_evaluations > c.num_evaluations => Ok(false),
            _ => {
                self.entries.insert(c.address, c);
                Ok(true)
            }
        }
    }

    pub fn total_evaluations(&self) -> u64 {
        self.entries.values().map(|c| c.num_evaluations).sum()
    }
}

/// Either of the two protocol messages.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Ping {
        token: u64,
        contribution: Contribution,
    },
    Pong {
        token: u64,
        sender: NodeId,
    },
}

impl Message {
    pub fn token(&self) -> u64 {
        match self {
            Message::Ping { token, .. } | Message::Pong { token, .. } => *token,
        }
    }

    pub fn sender(&self) -> NodeId {
        match self {
            Message::Ping { contribution, .. } => contribution.address,
            Message::Pong { sender, .. } => *sender,
        }
    }

    pub fn encoded_len(&self) -> usize {
        match self {
            Message::Ping { contribution, .. } => {
                PING_FIXED_LEN + 8 * contribution.solution.genome.len()
            }
            Message::Pong { .. } => PONG_LEN,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("message truncated: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("unknown message tag {0}")]
    UnknownTag(u8),
    #[error("declared genome of {declared} bytes exceeds the {remaining} bytes remaining")]
    LengthOverrun { declared: usize, remaining: usize },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
}

/// Little-endian layout: tag u8, token u64, sender u32; pings add
/// evaluations u64, gene count u16, genes f64 each, fitness f64.
pub fn encode_message(m: &Message) -> Vec<u8> {
    let mut out = Vec::with_capacity(m.encoded_len());
    match m {
        Message::Ping {
            token,
            contribution,
        } => {
            out.push(TAG_PING);
            out.extend_from_slice(&token.to_le_bytes());
            out.extend_from_slice(&contribution.address.0.to_le_bytes());
            out.extend_from_slice(&contribution.num_evaluations.to_le_bytes());
            let genes = contribution.solution.genome.genes();
            out.extend_from_slice(&(genes.len() as u16).to_le_bytes());
            for g in genes {
                out.extend_from_slice(&g.to_le_bytes());
            }
            out.extend_from_slice(&contribution.fitness().to_le_bytes());
        }
        Message::Pong { token, sender } => {
            out.push(TAG_PONG);
            out.extend_from_slice(&token.to_le_bytes());
            out.extend_from_slice(&sender.0.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let available = self.buf.len() - self.pos;
        if available < N {
            return Err(DecodeError::Truncated {
                needed: N,
                available,
            });
        }
        let mut out = [0u8; N];
        out.copy_from_slice(&self.buf[self.pos..self.pos + N]);
        self.pos += N;
        Ok(out)
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn decode_message(bytes: &[u8]) -> Result<Message, DecodeError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let [tag] = r.take::<1>()?;
    if tag != TAG_PING && tag != TAG_PONG {
        return Err(DecodeError::UnknownTag(tag));
    }
    let token = u64::from_le_bytes(r.take()?);
    let sender = NodeId(u32::from_le_bytes(r.take()?));
    let msg = if tag == TAG_PONG {
        Message::Pong { token, sender }
    } else {
        let num_evaluations = u64::from_le_bytes(r.take()?);
        let len = u16::from_le_bytes(r.take()?) as usize;
        let declared = 8 * len;
        if declared > r.remaining() {
            return Err(DecodeError::LengthOverrun {
                declared,
                remaining: r.remaining(),
            });
        }
        let mut genes = Vec::with_capacity(len);
        for _ in 0..len {
            genes.push(f64::from_le_bytes(r.take()?));
        }
        let fitness = f64::from_le_bytes(r.take()?);
        Message::Ping {
            token,
            contribution: Contribution {
                address: sender,
                num_evaluations,
                solution: Individual::evaluated(Genome(genes), fitness),
            },
        }
    };
    if r.remaining() > 0 {
        return Err(DecodeError::TrailingBytes(r.remaining()));
    }
    Ok(msg)
}

/// Writes one message with a 4-byte little-endian length prefix.
pub fn write_frame<W: Write>(w: &mut W, m: &Message) -> io::Result<()> {
    let body = encode_message(m);
    w.write_all(&(body.len() as u32).to_le_bytes())?;
    w.write_all(&body)?;
    w.flush()
}

/// Reads one length-prefixed message; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Message>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > PING_FIXED_LEN + 8 * u16::MAX as usize {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "frame too large",
        ));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    decode_message(&body)
        .map(Some)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Per-node scheduler state: the adaptive refresh interval and the pings
/// still waiting for their pong.
#[derive(Debug, Clone)]
pub struct SchedulerState {
    node_id: NodeId,
    delta_t: f64,
    delta_t_min: f64,
    delta_t_max: f64,
    pending: BTreeMap<u64, f64>,
    directory: Vec<NodeId>,
    next_token: u64,
    expected_dim: Option<usize>,
    pub dropped_malformed: u64,
    pub unknown_pongs: u64,
    pub expired_pings: u64,
}

impl SchedulerState {
    pub fn new(node_id: NodeId, directory: Vec<NodeId>) -> Self {
        SchedulerState {
            node_id,
            delta_t: DEFAULT_DELTA_T,
            delta_t_min: DEFAULT_DELTA_T_MIN,
            delta_t_max: DEFAULT_DELTA_T_MAX,
            pending: BTreeMap::new(),
            directory: directory.into_iter().filter(|n| *n != node_id).collect(),
            next_token: 0,
            expected_dim: None,
            dropped_malformed: 0,
            unknown_pongs: 0,
            expired_pings: 0,
        }
    }

    /// Peers of `node_id` in a complete graph over `n` nodes.
    pub fn complete(node_id: NodeId, n: usize) -> Self {
        SchedulerState::new(node_id, (0..n as u32).map(NodeId).collect())
    }

    pub fn with_clamp(mut self, min: f64, max: f64) -> Self {
        assert!(min > 0.0 && min <= max, "invalid refresh clamp");
        self.delta_t_min = min;
        self.delta_t_max = max;
        self.delta_t = self.delta_t.clamp(min, max);
        self
    }

    pub fn with_expected_dim(mut self, dim: usize) -> Self {
        self.expected_dim = Some(dim);
        self
    }

    pub fn node_id(&self) -> NodeId {
        self.node_id
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn directory(&self) -> &[NodeId] {
        &self.directory
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    fn expire_stale(&mut self, now: f64) {
        let horizon = 10.0 * self.delta_t_max;
        let before = self.pending.len();
        self.pending.retain(|_, sent| now - *sent <= horizon);
        self.expired_pings += (before - self.pending.len()) as u64;
    }

    /// Pings a uniformly chosen peer with a uniformly chosen local solution.
    /// Returns the target and message, or `None` without peers or agents.
    pub fn tick<R: Rng + ?Sized>(
        &mut self,
        bb: &Blackboard,
        rng: &mut R,
        now: f64,
    ) -> Option<(NodeId, Message)> {
        self.expire_stale(now);
        let target = *self.directory.choose(rng)?;
        let solution = bb.random_solution(rng)?.clone();
        let contribution =
            Contribution::new(self.node_id, bb.local_evaluations(), solution).ok()?;
        let token = self.next_token;
        self.next_token += 1;
        self.pending.insert(token, now);
        Some((
            target,
            Message::Ping {
                token,
                contribution,
            },
        ))
    }

    /// Caches the contribution and answers with a pong echoing `token`.
    /// Malformed or self-addressed contributions are dropped unanswered.
    pub fn handle_ping(
        &mut self,
        cache: &mut Cache,
        token: u64,
        contribution: Contribution,
        _now: f64,
    ) -> Option<(NodeId, Message)> {
        let from = contribution.address;
        if from == self.node_id || !contribution.is_well_formed(self.expected_dim) {
            self.dropped_malformed += 1;
            return None;
        }
        if cache.insert(contribution).is_err() {
            self.dropped_malformed += 1;
            return None;
        }
        Some((
            from,
            Message::Pong {
                token,
                sender: self.node_id,
            },
        ))
    }

    /// Sets the refresh interval to the clamped round-trip time of the
    /// answered ping. Returns the new interval, or `None` for unknown tokens.
    pub fn handle_pong(&mut self, token: u64, now: f64) -> Option<f64> {
        match self.pending.remove(&token) {
            Some(sent) => {
                self.delta_t = (now - sent).clamp(self.delta_t_min, self.delta_t_max);
                Some(self.delta_t)
            }
            None => {
                self.unknown_pongs += 1;
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::EvolvableAgent;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn contrib(node: u32, evals: u64, f: f64) -> Contribution {
        Contribution::new(
            NodeId(node),
            evals,
            Individual::evaluated(Genome(vec![f, -f]), f),
        )
        .unwrap()
    }

    #[test]
    fn ping_wire_size() {
        let ping = Message::Ping {
            token: 0,
            contribution: Contribution::new(
                NodeId(1),
                0,
                Individual::evaluated(Genome(vec![0.0, 0.0]), -450.0),
            )
            .unwrap(),
        };
        let bytes = encode_message(&ping);
        assert_eq!(bytes.len(), 47);
        assert_eq!(ping.encoded_len(), 47);
        assert_eq!(decode_message(&bytes).unwrap(), ping);
    }

    #[test]
    fn pong_wire_size_and_layout() {
        let pong = Message::Pong {
            token: 0x0102,
            sender: NodeId(7),
        };
        let bytes = encode_message(&pong);
        assert_eq!(bytes.len(), 13);
        assert_eq!(bytes[0], 2);
        assert_eq!(&bytes[1..3], &[0x02, 0x01]);
        assert_eq!(bytes[9], 7);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(
            decode_message(&[]),
            Err(DecodeError::Truncated {
                needed: 1,
                available: 0
            })
        );
        assert_eq!(decode_message(&[9; 13]), Err(DecodeError::UnknownTag(9)));
        let mut ping = encode_message(&Message::Ping {
            token: 1,
            contribution: contrib(1, 2, 3.0),
        });
        // claim 1000 genes
        ping[21] = 0xe8;
        ping[22] = 0x03;
        assert!(matches!(
            decode_message(&ping),
            Err(DecodeError::LengthOverrun { declared: 8000, .. })
        ));
        let mut pong = encode_message(&Message::Pong {
            token: 1,
            sender: NodeId(0),
        });
        pong.push(0);
        assert_eq!(decode_message(&pong), Err(DecodeError::TrailingBytes(1)));
    }

    #[test]
    fn frames_round_trip() {
        let msgs = vec![
            Message::Ping {
                token: 5,
                contribution: contrib(3, 10, 1.5),
            },
            Message::Pong {
                token: 5,
                sender: NodeId(4),
            },
        ];
        let mut buf = Vec::new();
        for m in &msgs {
            write_frame(&mut buf, m).unwrap();
        }
        let mut cursor = std::io::Cursor::new(buf);
        let mut back = Vec::new();
        while let Some(m) = read_frame(&mut cursor).unwrap() {
            back.push(m);
        }
        assert_eq!(back, msgs);
    }

    #[test]
    fn cache_staleness_rules() {
        let mut cache = Cache::new(NodeId(0));
        assert_eq!(cache.insert(contrib(3, 100, 1.0)), Ok(true));
        assert_eq!(cache.insert(contrib(3, 90, 0.5)), Ok(false));
        assert_eq!(cache.get(NodeId(3)).unwrap().num_evaluations(), 100);
        assert_eq!(cache.insert(contrib(3, 150, 2.0)), Ok(true));
        assert_eq!(cache.get(NodeId(3)).unwrap().num_evaluations(), 150);
        assert_eq!(cache.len(), 1);
        assert_eq!(
            cache.insert(contrib(0, 1, 1.0)),
            Err(GossipError::SelfInsert(NodeId(0)))
        );
    }

    #[test]
    fn ping_handler_caches_and_answers() {
        let mut st = SchedulerState::complete(NodeId(0), 4);
        let mut cache = Cache::new(NodeId(0));
        let reply = st.handle_ping(&mut cache, 11, contrib(3, 5, 1.0), 0.0);
        assert_eq!(
            reply,
            Some((
                NodeId(3),
                Message::Pong {
                    token: 11,
                    sender: NodeId(0)
                }
            ))
        );
        st.handle_ping(&mut cache, 12, contrib(3, 9, 0.5), 0.1)
            .unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!(cache.get(NodeId(3)).unwrap().num_evaluations(), 9);

        assert_eq!(
            st.handle_ping(&mut cache, 13, contrib(0, 9, 0.5), 0.2),
            None
        );
        assert_eq!(st.dropped_malformed, 1);
        let bad = Contribution::new(
            NodeId(2),
            1,
            Individual::evaluated(Genome(vec![f64::NAN]), 0.0),
        )
        .unwrap();
        assert_eq!(st.handle_ping(&mut cache, 14, bad, 0.3), None);
        assert_eq!(st.dropped_malformed, 2);
    }

    #[test]
    fn pong_updates_refresh_interval() {
        let mut st = SchedulerState::complete(NodeId(0), 2);
        let mut bb = Blackboard::new(NodeId(0));
        bb.register_agent(EvolvableAgent::new(
            1,
            Individual::evaluated(Genome(vec![0.0]), 1.0),
        ))
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (target, ping) = st.tick(&bb, &mut rng, 0.0).unwrap();
        assert_eq!(target, NodeId(1));
        assert_eq!(st.handle_pong(ping.token(), 0.004), Some(0.004));
        assert_eq!(st.delta_t(), 0.004);
        assert_eq!(st.pending(), 0);

        let (_, ping) = st.tick(&bb, &mut rng, 1.0).unwrap();
        assert_eq!(st.handle_pong(ping.token(), 1.0 + 1e-6), Some(0.001));
        assert_eq!(st.handle_pong(999, 2.0), None);
        assert_eq!(st.unknown_pongs, 1);
    }

    #[test]
    fn lone_node_never_pings() {
        let mut st = SchedulerState::complete(NodeId(0), 1);
        let mut bb = Blackboard::new(NodeId(0));
        bb.register_agent(EvolvableAgent::new(
            0,
            Individual::evaluated(Genome(vec![0.0]), 1.0),
        ))
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in 0..100 {
            assert!(st.tick(&bb, &mut rng, t as f64).is_none());
        }
    }

    #[test]
    fn stale_pings_expire() {
        let mut st = SchedulerState::complete(NodeId(0), 2);
        let mut bb = Blackboard::new(NodeId(0));
        bb.register_agent(EvolvableAgent::new(
            0,
            Individual::evaluated(Genome(vec![0.0]), 1.0),
        ))
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, first) = st.tick(&bb, &mut rng, 0.0).unwrap();
        st.tick(&bb, &mut rng, 200.0).unwrap();
        assert_eq!(st.expired_pings, 1);
        assert_eq!(st.pending(), 1);
        let dt = st.delta_t();
        assert_eq!(st.handle_pong(first.token(), 201.0), None);
        assert_eq!(st.delta_t(), dt);
    }
}
