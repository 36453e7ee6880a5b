use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ir::{InstId, Link, MemAnnotation, Word};

/// Number of waves past the commit frontier whose requests may execute.
/// `Finite(1)` admits only the non-speculative wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Window {
    Finite(u32),
    Infinite,
}

impl Window {
    pub fn admits(self, wave: u32, last_committed: i64) -> bool {
        match self {
            Window::Infinite => true,
            Window::Finite(n) => (wave as i64) <= last_committed + n as i64,
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window::Finite(n) => write!(f, "{n}"),
            Window::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Window {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "infinite" | "∞" => Ok(Window::Infinite),
            t => match t.parse::<u32>() {
                Ok(n) if n >= 1 => Ok(Window::Finite(n)),
                _ => Err(format!("invalid speculation window {s:?} (expected a positive integer or inf)")),
            },
        }
    }
}

impl Serialize for Window {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Window::Finite(n) => s.serialize_u32(*n),
            Window::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Window {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u32),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(n) => Window::from_str(&n.to_string()),
            Raw::Str(s) => Window::from_str(&s),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RequestKind {
    Load,
    StoreAddr,
    StoreData,
    MemNop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryRequest {
    pub kind: RequestKind,
    pub annotation: MemAnnotation,
    pub wave: u32,
    pub exen: u32,
    pub address: Option<u64>,
    pub data: Option<Word>,
    /// Load instruction whose consumers receive the response.
    pub reply_to: Option<InstId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acceptance {
    Accepted,
    RejectedStale,
    /// Buffered until the window reaches the request's wave.
    RejectedWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Load { reply_to: InstId },
    Store { data: Word },
    MemNop,
}

/// A memory operation the StoreBuffer has released for application.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadyOp {
    pub wave: u32,
    pub exen: u32,
    pub annotation: MemAnnotation,
    pub address: u64,
    pub kind: OpKind,
}

#[derive(Debug, Clone, Copy, Default)]
struct Slot {
    ann: Option<MemAnnotation>,
    load: Option<InstId>,
    nop: bool,
    address: Option<u64>,
    data: Option<Word>,
    queued: bool,
}

impl Slot {
    fn complete(&self) -> bool {
        self.nop || (self.load.is_some() && self.address.is_some()) || (self.address.is_some() && self.data.is_some())
    }

    fn op(&self, wave: u32, exen: u32) -> ReadyOp {
        let kind = match (self.nop, self.load) {
            (true, _) => OpKind::MemNop,
            (false, Some(reply_to)) => OpKind::Load { reply_to },
            (false, None) => OpKind::Store { data: self.data.expect("complete store") },
        };
        ReadyOp { wave, exen, annotation: self.ann.expect("annotated"), address: self.address.unwrap_or(0), kind }
    }
}

/// One StoreBuffer operation: an op released for application, or a chain
/// op moved into a partial store queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Apply(ReadyOp),
    Park { wave: u32, exen: u32, c: u32, address: u64 },
}

impl Step {
    pub fn applied(self) -> Option<ReadyOp> {
        match self {
            Step::Apply(op) => Some(op),
            Step::Park { .. } => None,
        }
    }
}

/// Per-wave ordering state.
#[derive(Debug, Clone, Default)]
pub struct WaveState {
    pub f: bool,
    slots: BTreeMap<u32, Slot>,
    /// Applied C values, in application order.
    pub executed: Vec<u32>,
    frontier: Option<MemAnnotation>,
    chain_done: bool,
    queued: usize,
}

impl WaveState {
    /// Whether `next` continues the chain after the last released operation.
    fn follows(&self, next: &MemAnnotation) -> bool {
        match self.frontier {
            None => next.pred == Link::None,
            Some(l) => {
                let succ_ok = match l.succ {
                    Link::Op(s) => s == next.current,
                    Link::Unknown => next.pred == Link::Op(l.current),
                    Link::None => false,
                };
                let pred_ok = match next.pred {
                    Link::Op(p) => p == l.current,
                    Link::Unknown => true,
                    Link::None => false,
                };
                succ_ok && pred_ok
            }
        }
    }

    /// The chain successor if it has arrived.
    fn successor(&self) -> Option<u32> {
        if self.chain_done {
            return None;
        }
        self.slots.iter().find(|(_, s)| !s.queued && s.ann.is_some_and(|a| self.follows(&a))).map(|(&c, _)| c)
    }

    pub fn pending(&self) -> Vec<u32> {
        self.slots.keys().copied().collect()
    }
}

/// Orders and releases memory requests wave by wave.
#[derive(Debug, Clone)]
pub struct StoreBuffer {
    pub last_committed: i64,
    pub last_exen: u32,
    /// Current ExeN as a step function of the wave number.
    exen_floor: BTreeMap<u32, u32>,
    waves: BTreeMap<u32, WaveState>,
    pub window: Window,
    pub decoupled: bool,
    /// Partial store queues: address -> (wave, C) in chain order.
    queues: BTreeMap<u64, VecDeque<(u32, u32)>>,
    drained: BTreeSet<u64>,
}

impl StoreBuffer {
    pub fn new(window: Window, decoupled: bool) -> Self {
        StoreBuffer {
            last_committed: -1,
            last_exen: 0,
            exen_floor: BTreeMap::new(),
            waves: BTreeMap::new(),
            window,
            decoupled,
            queues: BTreeMap::new(),
            drained: BTreeSet::new(),
        }
    }

    pub fn current_exen(&self, wave: u32) -> u32 {
        self.exen_floor.range(..=wave).next_back().map_or(0, |(_, &e)| e)
    }

    pub fn wave(&self, wave: u32) -> Option<&WaveState> {
        self.waves.get(&wave)
    }

    pub fn is_speculative(&self, wave: u32) -> bool {
        wave as i64 > self.last_committed + 1
    }

    pub fn admits(&self, wave: u32) -> bool {
        self.window.admits(wave, self.last_committed)
    }

    /// Waves holding requests that have not committed.
    pub fn open_waves(&self) -> Vec<u32> {
        self.waves.keys().copied().collect()
    }

    pub fn accept_request(&mut self, r: MemoryRequest) -> Acceptance {
        if r.exen != self.current_exen(r.wave) || r.wave as i64 <= self.last_committed {
            return Acceptance::RejectedStale;
        }
        let slot = self.waves.entry(r.wave).or_default().slots.entry(r.annotation.current).or_default();
        slot.ann = Some(r.annotation);
        match r.kind {
            RequestKind::Load => {
                slot.load = r.reply_to;
                slot.address = r.address;
            }
            RequestKind::StoreAddr => slot.address = r.address,
            RequestKind::StoreData => slot.data = r.data,
            RequestKind::MemNop => slot.nop = true,
        }
        if self.admits(r.wave) {
            Acceptance::Accepted
        } else {
            Acceptance::RejectedWindow
        }
    }

    /// Starts a new cycle for the one-drain-per-queue limit.
    pub fn begin_cycle(&mut self) {
        self.drained.clear();
    }

    /// Releases the next operation, oldest admitted wave first: a drained
    /// partial-store-queue head, or the chain successor of some wave. In
    /// decoupled mode a chain operation may instead be parked in a queue,
    /// which also counts as a StoreBuffer operation.
    pub fn next_op(&mut self) -> Option<Step> {
        for (&addr, q) in &self.queues {
            if self.drained.contains(&addr) {
                continue;
            }
            let &(w, c) = q.front().expect("queues are never empty");
            let ws = &self.waves[&w];
            if ws.slots[&c].complete() {
                self.drained.insert(addr);
                return Some(Step::Apply(self.release_queued(addr)));
            }
        }
        let lo = (self.last_committed + 1) as u32;
        let candidates: Vec<(u32, u32)> = self
            .waves
            .range(lo..)
            .take_while(|(&w, _)| self.window.admits(w, self.last_committed))
            .filter_map(|(&w, ws)| ws.successor().map(|c| (w, c)))
            .collect();
        for (w, c) in candidates {
            let slot = self.waves[&w].slots[&c];
            if self.decoupled && !slot.nop {
                if let Some(addr) = slot.address {
                    let store_waiting = slot.load.is_none() && slot.data.is_none();
                    if store_waiting || self.queues.contains_key(&addr) {
                        self.park(w, c, addr);
                        return Some(Step::Park { wave: w, exen: self.current_exen(w), c, address: addr });
                    }
                }
            }
            if slot.complete() {
                return Some(Step::Apply(self.release(w, c)));
            }
        }
        None
    }

    fn advance(&mut self, w: u32, ann: MemAnnotation) {
        let ws = self.waves.get_mut(&w).expect("wave");
        ws.frontier = Some(ann);
        if ann.succ == Link::None {
            ws.chain_done = true;
        }
    }

    fn finish_if_done(&mut self, w: u32) {
        let ws = self.waves.get_mut(&w).expect("wave");
        if ws.chain_done && ws.queued == 0 {
            ws.f = true;
        }
    }

    fn release(&mut self, w: u32, c: u32) -> ReadyOp {
        let exen = self.current_exen(w);
        let ws = self.waves.get_mut(&w).expect("wave");
        let slot = ws.slots.remove(&c).expect("slot");
        ws.executed.push(c);
        let op = slot.op(w, exen);
        self.advance(w, op.annotation);
        self.finish_if_done(w);
        op
    }

    fn park(&mut self, w: u32, c: u32, addr: u64) {
        let ws = self.waves.get_mut(&w).expect("wave");
        let slot = ws.slots.get_mut(&c).expect("slot");
        slot.queued = true;
        ws.queued += 1;
        let ann = slot.ann.expect("annotated");
        self.queues.entry(addr).or_default().push_back((w, c));
        self.advance(w, ann);
    }

    fn release_queued(&mut self, addr: u64) -> ReadyOp {
        let q = self.queues.get_mut(&addr).expect("queue");
        let (w, c) = q.pop_front().expect("head");
        if q.is_empty() {
            self.queues.remove(&addr);
        }
        let exen = self.current_exen(w);
        let ws = self.waves.get_mut(&w).expect("wave");
        let slot = ws.slots.remove(&c).expect("slot");
        ws.executed.push(c);
        ws.queued -= 1;
        let op = slot.op(w, exen);
        self.finish_if_done(w);
        op
    }

    /// Commits every wave at the frontier whose F bit is set, in order.
    pub fn try_commit(&mut self) -> Vec<u32> {
        let mut out = Vec::new();
        loop {
            let next = (self.last_committed + 1) as u32;
            match self.waves.get(&next) {
                Some(ws) if ws.f => {
                    self.waves.remove(&next);
                    self.last_committed = next as i64;
                    out.push(next);
                }
                _ => return out,
            }
        }
    }

    /// Rollback steps 4 and 5: discard requests of waves `>= x` and move
    /// them to a fresh execution number.
    pub fn rollback(&mut self, x: u32) {
        assert!(x as i64 > self.last_committed, "rollback of committed wave {x}");
        self.waves.retain(|&w, _| w < x);
        for q in self.queues.values_mut() {
            q.retain(|&(w, _)| w < x);
        }
        self.queues.retain(|_, q| !q.is_empty());
        self.last_exen += 1;
        self.exen_floor.retain(|&w, _| w < x);
        self.exen_floor.insert(x, self.last_exen);
    }

    /// Whether [`next_op`](Self::next_op) would release or park something
    /// once the per-cycle limits reset.
    pub fn has_ready_work(&self) -> bool {
        let heads = self.queues.values().any(|q| {
            let (w, c) = q[0];
            self.waves[&w].slots[&c].complete()
        });
        let lo = (self.last_committed + 1) as u32;
        heads
            || self
                .waves
                .range(lo..)
                .take_while(|(&w, _)| self.window.admits(w, self.last_committed))
                .any(|(_, ws)| {
                    ws.successor().is_some_and(|c| {
                        let s = &ws.slots[&c];
                        s.complete() || (self.decoupled && !s.nop && s.address.is_some())
                    })
                })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(p: Link, c: u32, s: Link) -> MemAnnotation {
        MemAnnotation::new(p, c, s)
    }

    fn req(kind: RequestKind, a: MemAnnotation, wave: u32, address: Option<u64>, data: Option<Word>) -> MemoryRequest {
        let reply_to = (kind == RequestKind::Load).then_some(0);
        MemoryRequest { kind, annotation: a, wave, exen: 0, address, data, reply_to }
    }

    fn nop(wave: u32, a: MemAnnotation) -> MemoryRequest {
        req(RequestKind::MemNop, a, wave, None, None)
    }

    fn drain(sb: &mut StoreBuffer) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        while let Some(op) = sb.next_op() {
            if let Some(op) = op.applied() {
                out.push((op.wave, op.annotation.current));
            }
        }
        out
    }

    #[test]
    fn stale_requests_are_rejected() {
        let mut sb = StoreBuffer::new(Window::Infinite, false);
        sb.rollback(9);
        sb.rollback(9);
        assert_eq!(sb.current_exen(9), 2);
        let mut r = nop(9, ann(Link::None, 1, Link::None));
        r.exen = 1;
        assert_eq!(sb.accept_request(r), Acceptance::RejectedStale);
        r.exen = 2;
        assert_eq!(sb.accept_request(r), Acceptance::Accepted);
    }

    #[test]
    fn window_boundary() {
        let mut sb = StoreBuffer::new(Window::Finite(3), false);
        sb.last_committed = 4;
        assert_eq!(sb.accept_request(nop(8, ann(Link::None, 1, Link::None))), Acceptance::RejectedWindow);
        assert_eq!(sb.accept_request(nop(7, ann(Link::None, 1, Link::None))), Acceptance::Accepted);
        assert!(Window::Finite(2).admits(12, 10));
        assert!(!Window::Finite(2).admits(13, 10));
        assert!(Window::Infinite.admits(1_000_000, -1));
    }

    #[test]
    fn strict_buffers_later_waves() {
        let mut sb = StoreBuffer::new(Window::Finite(1), false);
        sb.accept_request(nop(1, ann(Link::None, 1, Link::None)));
        assert_eq!(sb.next_op(), None);
        sb.accept_request(nop(0, ann(Link::None, 1, Link::None)));
        assert_eq!(drain(&mut sb), vec![(0, 1)]);
        assert_eq!(sb.try_commit(), vec![0]);
        assert_eq!(drain(&mut sb), vec![(1, 1)]);
        assert_eq!(sb.try_commit(), vec![1]);
    }

    #[test]
    fn wildcard_chain_across_branch() {
        let mut sb = StoreBuffer::new(Window::Finite(1), false);
        sb.accept_request(req(RequestKind::Load, ann(Link::None, 1, Link::Unknown), 0, Some(5), None));
        assert_eq!(drain(&mut sb), vec![(0, 1)]);
        sb.accept_request(nop(0, ann(Link::Unknown, 5, Link::None)));
        assert_eq!(sb.next_op(), None);
        sb.accept_request(req(RequestKind::StoreAddr, ann(Link::Op(1), 3, Link::Op(5)), 0, Some(9), None));
        sb.accept_request(req(RequestKind::StoreData, ann(Link::Op(1), 3, Link::Op(5)), 0, None, Some(2)));
        assert_eq!(drain(&mut sb), vec![(0, 3), (0, 5)]);
        assert!(sb.wave(0).unwrap().f);
    }

    #[test]
    fn missing_predecessor_blocks() {
        let mut sb = StoreBuffer::new(Window::Finite(1), false);
        sb.accept_request(nop(0, ann(Link::None, 1, Link::Op(3))));
        sb.accept_request(nop(0, ann(Link::Op(4), 6, Link::None)));
        assert_eq!(drain(&mut sb), vec![(0, 1)]);
        assert!(!sb.wave(0).unwrap().f);
    }

    #[test]
    fn commit_waits_for_predecessor_and_cascades() {
        let mut sb = StoreBuffer::new(Window::Infinite, false);
        for w in 1..4 {
            sb.accept_request(nop(w, ann(Link::None, 1, Link::None)));
        }
        drain(&mut sb);
        assert!(sb.try_commit().is_empty());
        sb.accept_request(nop(0, ann(Link::None, 1, Link::None)));
        drain(&mut sb);
        assert_eq!(sb.try_commit(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn partial_store_queue_holds_same_address() {
        let mut sb = StoreBuffer::new(Window::Finite(1), true);
        let a = 64;
        sb.accept_request(req(RequestKind::StoreAddr, ann(Link::None, 1, Link::Op(2)), 0, Some(a), None));
        sb.accept_request(req(RequestKind::Load, ann(Link::Op(1), 2, Link::Op(3)), 0, Some(a), None));
        sb.accept_request(req(RequestKind::Load, ann(Link::Op(2), 3, Link::None), 0, Some(a + 1), None));
        // Park the store and the same-address load; the other load proceeds.
        assert!(matches!(sb.next_op(), Some(Step::Park { .. })));
        assert!(matches!(sb.next_op(), Some(Step::Park { .. })));
        assert_eq!(sb.next_op().unwrap().applied().unwrap().annotation.current, 3);
        assert_eq!(sb.next_op(), None);
        assert!(!sb.wave(0).unwrap().f);
        sb.accept_request(req(RequestKind::StoreData, ann(Link::None, 1, Link::Op(2)), 0, None, Some(7)));
        sb.begin_cycle();
        let first = sb.next_op().unwrap().applied().unwrap();
        assert_eq!((first.annotation.current, first.kind), (1, OpKind::Store { data: 7 }));
        assert_eq!(sb.next_op(), None, "one drain per queue per cycle");
        sb.begin_cycle();
        assert_eq!(sb.next_op().unwrap().applied().unwrap().annotation.current, 2);
        assert!(sb.wave(0).unwrap().f);
    }

    #[test]
    fn data_before_address_is_held() {
        let mut sb = StoreBuffer::new(Window::Finite(1), true);
        let a = ann(Link::None, 1, Link::None);
        sb.accept_request(req(RequestKind::StoreData, a, 0, None, Some(3)));
        assert_eq!(sb.next_op(), None);
        sb.accept_request(req(RequestKind::StoreAddr, a, 0, Some(10), None));
        let op = sb.next_op().unwrap().applied().unwrap();
        assert_eq!((op.address, op.kind), (10, OpKind::Store { data: 3 }));
    }

    #[test]
    fn window_parses() {
        assert_eq!("inf".parse::<Window>(), Ok(Window::Infinite));
        assert_eq!("10".parse::<Window>(), Ok(Window::Finite(10)));
        assert!("0".parse::<Window>().is_err());
        assert_eq!(serde_json::to_string(&Window::Infinite).unwrap(), "\"inf\"");
    }
}
