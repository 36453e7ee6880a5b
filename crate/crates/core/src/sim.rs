//! Cycle loop. Each cycle: scheduled deliveries land in matching tables,
//! the StoreBuffer accepts and releases requests (running hazard checks,
//! rollbacks and commits in TWC mode), then every PE fires its oldest ready
//! instruction. Idle stretches are skipped to the next scheduled event.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fabric::{
    evaluate, place_instructions, DeliveryOutcome, FireEffect, MatchingTable, Operand, Placement, PlacementError,
    ReadyGroup, Tag, Topology,
};
use crate::ir::{Dest, InstId, Program, Word};
use crate::memory::{
    Acceptance, MemoryConfig, MemoryModel, MemoryRequest, OpKind, ReadyOp, RequestKind, Step, StoreBuffer, Window,
};
use crate::twc::{Access, Capture, Outcome, Transactions, WaveContextTables};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Strict,
    Decoupled,
    Twc,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Strict => "strict",
            Mode::Decoupled => "decoupled",
            Mode::Twc => "twc",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(Mode::Strict),
            "decoupled" => Ok(Mode::Decoupled),
            "twc" => Ok(Mode::Twc),
            _ => Err(format!("unknown mode {s:?} (expected strict, decoupled or twc)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub mode: Mode,
    /// Speculation window; TWC mode only.
    pub window: Option<Window>,
    pub topology: Topology,
    pub memory: MemoryConfig,
    /// Lines per Wave-Context-Table; unlimited when absent.
    pub wct_capacity: Option<usize>,
    pub store_buffer_input_ports: u32,
    pub store_buffer_output_ports: u32,
    pub max_cycles: u64,
    /// Consecutive cycles without progress before declaring deadlock.
    pub stall_limit: u64,
    pub event_log: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            mode: Mode::Strict,
            window: None,
            topology: Topology::default(),
            memory: MemoryConfig::default(),
            wct_capacity: None,
            store_buffer_input_ports: 4,
            store_buffer_output_ports: 4,
            max_cycles: 50_000_000,
            stall_limit: 100_000,
            event_log: false,
        }
    }
}

impl SimConfig {
    pub fn strict() -> Self {
        SimConfig::default()
    }

    pub fn decoupled() -> Self {
        SimConfig { mode: Mode::Decoupled, ..Default::default() }
    }

    pub fn twc(window: Window) -> Self {
        SimConfig { mode: Mode::Twc, window: Some(window), ..Default::default() }
    }

    fn effective_window(&self) -> Result<Window, SimError> {
        match (self.mode, self.window) {
            (Mode::Twc, Some(w)) => Ok(w),
            (Mode::Twc, None) => Err(SimError::Config("twc mode needs a speculation window".into())),
            (_, Some(_)) => Err(SimError::Config(format!("a speculation window is only valid in twc mode, not {}", self.mode))),
            (_, None) => Ok(Window::Finite(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HazardCounts {
    pub raw: u64,
    pub war: u64,
    pub waw: u64,
}

impl HazardCounts {
    pub fn total(&self) -> u64 {
        self.raw + self.war + self.waw
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total_cycles: u64,
    pub hazards: HazardCounts,
    pub commits: u64,
    pub aborts: u64,
    pub requests_executed: u64,
    pub stale_drops: u64,
    pub firings: u64,
    /// Filled in by the harness against a baseline run.
    pub speedup_pct: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Deliver,
    Drop,
    Fire,
    Load,
    Store,
    MemNop,
    Park,
    Raw,
    War,
    Waw,
    Commit,
    Abort,
}

/// One line of the event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub cycle: u64,
    pub kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pe: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instruction: Option<InstId>,
    pub wave: u32,
    pub exen: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub address: Option<u64>,
    /// Conflicting wave of a hazard record.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub other_wave: Option<u32>,
}

impl EventRecord {
    fn new(cycle: u64, kind: EventKind, wave: u32, exen: u32) -> Self {
        EventRecord { cycle, kind, pe: None, instruction: None, wave, exen, c: None, address: None, other_wave: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("operand delivered twice: {0:?}")]
    DuplicateOperand(Tag),
    #[error("cycle budget of {0} exhausted")]
    CycleBudget(u64),
    #[error("deadlock at cycle {cycle}: non-speculative wave {frontier}, pending chains {pending:?}")]
    Deadlock { cycle: u64, frontier: i64, pending: Vec<(u32, Vec<u32>)> },
}

/// Memory operation as seen by an [`Observer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApplyInfo {
    pub cycle: u64,
    pub wave: u32,
    pub exen: u32,
    pub c: u32,
    pub address: u64,
    pub kind: OpKind,
    /// Loaded value or stored datum.
    pub value: Word,
    pub outcome: Outcome,
}

/// State exposed right after a rollback completes.
pub struct RollbackView<'a> {
    pub cycle: u64,
    pub wave: u32,
    pub store_buffer: &'a StoreBuffer,
    pub transactions: &'a Transactions,
    pub memory: &'a BTreeMap<u64, Word>,
    pub read_sets: &'a WaveContextTables,
}

/// Instrumentation hooks used by tests.
pub trait Observer {
    fn on_apply(&mut self, _info: &ApplyInfo) {}
    fn on_rollback(&mut self, _view: &RollbackView<'_>) {}
    fn on_commit(&mut self, _wave: u32, _cycle: u64) {}
}

struct NoObserver;
impl Observer for NoObserver {}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub metrics: Metrics,
    pub memory: BTreeMap<u64, Word>,
    /// `(wave, value)` from Output instructions of the final executions.
    pub outputs: Vec<(u32, Word)>,
    pub events: Vec<EventRecord>,
}

#[derive(Debug, Clone)]
enum Message {
    Operand(Operand),
    Request(MemoryRequest),
}

/// Source id used for messages sent by the StoreBuffer or injected at start.
const SB_SOURCE: u32 = u32::MAX;

pub struct Simulator<'p> {
    p: &'p Program,
    cfg: SimConfig,
    placement: Placement,
    pes: Vec<MatchingTable>,
    /// Keyed by (cycle, source PE, emission index).
    queue: BTreeMap<(u64, u32, u64), Message>,
    seq: u64,
    arrival: u64,
    cycle: u64,
    sb: StoreBuffer,
    inbox: VecDeque<MemoryRequest>,
    mem: MemoryModel,
    tx: Transactions,
    wct: WaveContextTables,
    outputs: Vec<(u32, u32, Word)>,
    metrics: Metrics,
    events: Vec<EventRecord>,
    deliveries: HashMap<InstId, u32>,
    progress: bool,
    last_activity: u64,
}

impl<'p> Simulator<'p> {
    pub fn new(p: &'p Program, cfg: SimConfig) -> Result<Self, SimError> {
        let window = cfg.effective_window()?;
        let placement = place_instructions(p, &cfg.topology)?;
        let pes = (0..cfg.topology.total_pes()).map(|_| MatchingTable::new(cfg.topology.operand_queue_capacity)).collect();
        let sb = StoreBuffer::new(window, cfg.mode == Mode::Decoupled);
        Ok(Simulator {
            p,
            placement,
            pes,
            queue: BTreeMap::new(),
            seq: 0,
            arrival: 0,
            cycle: 0,
            sb,
            inbox: VecDeque::new(),
            mem: MemoryModel::new(cfg.memory.clone(), p.memory_image.clone()),
            tx: Transactions::default(),
            wct: WaveContextTables::new(cfg.wct_capacity),
            outputs: Vec::new(),
            metrics: Metrics::default(),
            events: Vec::new(),
            deliveries: HashMap::new(),
            progress: false,
            last_activity: 0,
            cfg,
        })
    }

    pub fn run(self) -> Result<SimResult, SimError> {
        self.run_observed(&mut NoObserver)
    }

    pub fn run_observed(mut self, obs: &mut dyn Observer) -> Result<SimResult, SimError> {
        for c in &self.p.entry {
            let o = Operand { tag: Tag::new(0, 0, c.dest.inst, c.dest.port), value: c.value };
            self.schedule(0, SB_SOURCE, Message::Operand(o));
        }
        let mut stalled = 0u64;
        loop {
            if self.cycle > self.cfg.max_cycles {
                return Err(SimError::CycleBudget(self.cfg.max_cycles));
            }
            self.progress = false;
            self.deliver_due()?;
            self.store_buffer_stage(obs);
            self.fire_stage();
            if self.progress {
                self.last_activity = self.cycle;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled > self.cfg.stall_limit {
                    return Err(self.deadlock());
                }
            }
            let busy = self.pes.iter().any(MatchingTable::has_ready) || self.sb.has_ready_work() || !self.inbox.is_empty();
            if busy {
                self.cycle += 1;
            } else if let Some((&(next, _, _), _)) = self.queue.first_key_value() {
                self.cycle = next.max(self.cycle + 1);
            } else {
                break;
            }
        }
        if !self.sb.open_waves().is_empty() {
            return Err(self.deadlock());
        }
        let leftovers: usize = self.pes.iter_mut().map(MatchingTable::drain_partial).sum();
        self.metrics.stale_drops += leftovers as u64;
        self.metrics.total_cycles = self.last_activity + 1;
        let sb = &self.sb;
        let outputs = self.outputs.iter().filter(|(w, e, _)| *e == sb.current_exen(*w)).map(|&(w, _, v)| (w, v)).collect();
        Ok(SimResult { metrics: self.metrics, memory: self.mem.into_contents(), outputs, events: self.events })
    }

    fn deadlock(&self) -> SimError {
        let pending = self
            .sb
            .open_waves()
            .into_iter()
            .take(8)
            .map(|w| (w, self.sb.wave(w).map(|s| s.pending()).unwrap_or_default()))
            .collect();
        SimError::Deadlock { cycle: self.cycle, frontier: self.sb.last_committed + 1, pending }
    }

    fn log(&mut self, r: EventRecord) {
        if self.cfg.event_log {
            self.events.push(r);
        }
    }

    fn schedule(&mut self, at: u64, source: u32, m: Message) {
        self.queue.insert((at, source, self.seq), m);
        self.seq += 1;
    }

    fn send(&mut self, from_pe: u32, dests: &[Dest], wave: u32, exen: u32, value: Word) {
        for d in dests {
            let latency = self.cfg.topology.latency(from_pe, self.placement.pe(d.inst));
            let o = Operand { tag: Tag::new(wave, exen, d.inst, d.port), value };
            self.schedule(self.cycle + latency, from_pe, Message::Operand(o));
        }
    }

    fn deliver_due(&mut self) -> Result<(), SimError> {
        self.deliveries.clear();
        let limit = self.cfg.topology.operand_deliveries_per_instruction_per_cycle;
        while let Some(entry) = self.queue.first_entry() {
            let (at, source, seq) = *entry.key();
            if at > self.cycle {
                break;
            }
            let m = entry.remove();
            match m {
                Message::Request(r) => {
                    self.inbox.push_back(r);
                    self.progress = true;
                }
                Message::Operand(o) => {
                    let dest = o.tag.dest;
                    let n = self.deliveries.entry(dest).or_default();
                    if *n >= limit {
                        self.queue.insert((self.cycle + 1, source, seq), Message::Operand(o));
                        continue;
                    }
                    *n += 1;
                    let pe = self.placement.pe(dest);
                    let arity = self.p.inst(dest).opcode.arity();
                    let outcome = self.pes[pe as usize].deliver(o, arity, self.arrival);
                    self.arrival += 1;
                    let mut rec = EventRecord::new(self.cycle, EventKind::Deliver, o.tag.wave, o.tag.exen);
                    rec.pe = Some(pe);
                    rec.instruction = Some(dest);
                    match outcome {
                        DeliveryOutcome::Accepted => {}
                        DeliveryOutcome::Superseded { erased } => self.metrics.stale_drops += erased as u64,
                        DeliveryOutcome::DroppedStale => {
                            self.metrics.stale_drops += 1;
                            rec.kind = EventKind::Drop;
                        }
                        DeliveryOutcome::Full => {
                            self.queue.insert((self.cycle + 1, source, seq), Message::Operand(o));
                            continue;
                        }
                        DeliveryOutcome::Duplicate => return Err(SimError::DuplicateOperand(o.tag)),
                    }
                    self.progress = true;
                    self.log(rec);
                }
            }
        }
        Ok(())
    }

    fn store_buffer_stage(&mut self, obs: &mut dyn Observer) {
        self.sb.begin_cycle();
        for _ in 0..self.cfg.store_buffer_input_ports {
            let Some(r) = self.inbox.pop_front() else { break };
            if self.sb.accept_request(r) == Acceptance::RejectedStale {
                self.metrics.stale_drops += 1;
                let mut rec = EventRecord::new(self.cycle, EventKind::Drop, r.wave, r.exen);
                rec.c = Some(r.annotation.current);
                self.log(rec);
            }
        }
        let mut used = 0;
        while used < self.cfg.store_buffer_output_ports {
            let Some(next) = self.sb.next_op() else { break };
            used += 1;
            self.progress = true;
            match next {
                Step::Park { wave, exen, c, address } => {
                    let mut rec = EventRecord::new(self.cycle, EventKind::Park, wave, exen);
                    rec.c = Some(c);
                    rec.address = Some(address);
                    self.log(rec);
                }
                Step::Apply(op) => {
                    self.apply(op, obs);
                    self.commit(obs);
                }
            }
        }
        self.commit(obs);
    }

    fn commit(&mut self, obs: &mut dyn Observer) {
        for w in self.sb.try_commit() {
            self.metrics.commits += 1;
            // The next wave is now non-speculative and can never roll back.
            for v in [w, w + 1] {
                self.tx.erase_wave(v);
                self.wct.erase(v);
            }
            let e = self.sb.current_exen(w);
            self.log(EventRecord::new(self.cycle, EventKind::Commit, w, e));
            obs.on_commit(w, self.cycle);
        }
    }

    fn apply(&mut self, op: ReadyOp, obs: &mut dyn Observer) {
        self.metrics.requests_executed += 1;
        let c = op.annotation.current;
        let mut rec = EventRecord::new(self.cycle, EventKind::MemNop, op.wave, op.exen);
        rec.c = Some(c);
        let access = match op.kind {
            OpKind::MemNop => {
                self.log(rec);
                let info = ApplyInfo {
                    cycle: self.cycle,
                    wave: op.wave,
                    exen: op.exen,
                    c,
                    address: 0,
                    kind: op.kind,
                    value: 0,
                    outcome: Outcome::Clean,
                };
                obs.on_apply(&info);
                return;
            }
            OpKind::Load { .. } => Access::Load,
            OpKind::Store { data } => Access::Store(data),
        };
        rec.kind = if access == Access::Load { EventKind::Load } else { EventKind::Store };
        rec.address = Some(op.address);
        let res = loop {
            let spec = self.cfg.mode == Mode::Twc && self.sb.is_speculative(op.wave);
            let res = self.tx.execute(&mut self.mem, op.wave, c, access, op.address, spec);
            match res.outcome {
                Outcome::RawAbort { reader } => {
                    self.metrics.hazards.raw += 1;
                    self.hazard(EventKind::Raw, &op, reader);
                    self.rollback(reader, obs);
                }
                _ => break res,
            }
        };
        match res.outcome {
            Outcome::WawAbsorbed { later } => {
                self.metrics.hazards.waw += 1;
                self.hazard(EventKind::Waw, &op, later);
            }
            Outcome::WarForwarded { later } => {
                self.metrics.hazards.war += 1;
                self.hazard(EventKind::War, &op, later);
            }
            _ => {}
        }
        let latency = if res.touched_memory {
            self.mem.access(op.address, self.cycle).0
        } else {
            self.cfg.memory.l1_latency
        };
        self.log(rec);
        if let OpKind::Load { reply_to } = op.kind {
            let at = self.cycle + latency + self.cfg.topology.store_buffer_latency;
            for d in self.p.inst(reply_to).outputs[0].clone() {
                let o = Operand { tag: Tag::new(op.wave, op.exen, d.inst, d.port), value: res.value };
                self.schedule(at, SB_SOURCE, Message::Operand(o));
            }
        }
        let info = ApplyInfo {
            cycle: self.cycle,
            wave: op.wave,
            exen: op.exen,
            c,
            address: op.address,
            kind: op.kind,
            value: res.value,
            outcome: res.outcome,
        };
        obs.on_apply(&info);
    }

    fn hazard(&mut self, kind: EventKind, op: &ReadyOp, other: u32) {
        let mut rec = EventRecord::new(self.cycle, kind, op.wave, op.exen);
        rec.c = Some(op.annotation.current);
        rec.address = Some(op.address);
        rec.other_wave = Some(other);
        self.log(rec);
    }

    /// The six rollback steps for wave `x`, atomically.
    fn rollback(&mut self, x: u32, obs: &mut dyn Observer) {
        self.metrics.aborts += 1;
        for addr in self.tx.rollback(&mut self.mem, x) {
            self.mem.access(addr, self.cycle);
        }
        self.wct.clear_above(x);
        self.sb.rollback(x);
        self.inbox.retain(|r| r.wave < x);
        let exen = self.sb.last_exen;
        self.log(EventRecord::new(self.cycle, EventKind::Abort, x, exen));
        let at = self.cycle + self.cfg.topology.store_buffer_latency;
        for o in self.wct.resend(x, exen) {
            self.schedule(at, SB_SOURCE, Message::Operand(o));
        }
        let view = RollbackView {
            cycle: self.cycle,
            wave: x,
            store_buffer: &self.sb,
            transactions: &self.tx,
            memory: self.mem.contents(),
            read_sets: &self.wct,
        };
        obs.on_rollback(&view);
    }

    fn fire_stage(&mut self) {
        let fires = self.cfg.topology.fires_per_pe_per_cycle;
        let p = self.p;
        for pe in 0..self.pes.len() {
            for _ in 0..fires {
                let Some(g) = self.pes[pe].pop_ready(|d| p.inst(d).opcode.arity()) else { break };
                if !self.fire(pe as u32, g) {
                    let arity = p.inst(g.dest).opcode.arity();
                    // Keep its place in the firing order.
                    self.pes[pe].push_back(g, arity, 0);
                    break;
                }
            }
        }
    }

    /// Returns false if the firing is blocked (full read-set table).
    fn fire(&mut self, pe: u32, g: ReadyGroup) -> bool {
        let p = self.p;
        let inst = p.inst(g.dest);
        let effect = evaluate(&inst.opcode, &g.inputs[..inst.opcode.arity()]);
        let mut rec = EventRecord::new(self.cycle, EventKind::Fire, g.wave, g.exen);
        rec.pe = Some(pe);
        rec.instruction = Some(g.dest);
        let ann = inst.annotation;
        let request = |kind, address, data| MemoryRequest {
            kind,
            annotation: ann.expect("memory operations are annotated"),
            wave: g.wave,
            exen: g.exen,
            address,
            data,
            reply_to: (kind == RequestKind::Load).then_some(g.dest),
        };
        let mut requests = Vec::new();
        match effect {
            FireEffect::Send { output, value } => self.send(pe, &inst.outputs[output], g.wave, g.exen, value),
            FireEffect::Advance(value) => {
                let next = g.wave + 1;
                let mut exen = g.exen;
                if self.cfg.mode == Mode::Twc {
                    if g.exen != self.sb.current_exen(g.wave) {
                        self.metrics.stale_drops += 1;
                        rec.kind = EventKind::Drop;
                        self.progress = true;
                        self.log(rec);
                        return true;
                    }
                    exen = self.sb.current_exen(next);
                    if self.sb.is_speculative(next) {
                        let dests = &inst.outputs[0];
                        let free = self.wct.capacity.map(|cap| cap.saturating_sub(self.wct.get(next).len()));
                        if free.is_some_and(|f| f < dests.len()) {
                            return false;
                        }
                        for d in dests {
                            let o = Operand { tag: Tag::new(next, exen, d.inst, d.port), value };
                            assert_eq!(self.wct.record(o), Capture::Captured);
                        }
                    }
                }
                self.send(pe, &inst.outputs[0], next, exen, value);
            }
            FireEffect::Load { address } => requests.push(request(RequestKind::Load, Some(address), None)),
            FireEffect::Store { address, data } => {
                requests.push(request(RequestKind::StoreAddr, Some(address), None));
                requests.push(request(RequestKind::StoreData, None, Some(data)));
            }
            FireEffect::StoreAddr { address } => requests.push(request(RequestKind::StoreAddr, Some(address), None)),
            FireEffect::StoreData { data } => requests.push(request(RequestKind::StoreData, None, Some(data))),
            FireEffect::MemNop => requests.push(request(RequestKind::MemNop, None, None)),
            FireEffect::Output(v) => self.outputs.push((g.wave, g.exen, v)),
        }
        let at = self.cycle + self.cfg.topology.store_buffer_latency;
        for r in requests {
            self.schedule(at, pe, Message::Request(r));
        }
        self.metrics.firings += 1;
        self.progress = true;
        self.log(rec);
        true
    }
}

/// Builds and runs a simulator.
pub fn simulate(p: &Program, cfg: &SimConfig) -> Result<SimResult, SimError> {
    Simulator::new(p, cfg.clone())?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::samples::{IF_THEN_ELSE, PARTIAL_STORE_QUEUE};
    use crate::ir::{build_kernel, parse_program, KernelKind, KernelParams};
    use crate::oracle::{compare_memory, interpret};

    fn small(kind: KernelKind) -> Program {
        build_kernel(kind, &KernelParams { matrices: 6, dim: 2, repeat: 2, vector_len: 12 }).unwrap()
    }

    fn all_configs() -> Vec<SimConfig> {
        let mut v = vec![SimConfig::strict(), SimConfig::decoupled()];
        for w in [Window::Finite(1), Window::Finite(2), Window::Finite(5), Window::Infinite] {
            v.push(SimConfig::twc(w));
        }
        v
    }

    #[test]
    fn samples_match_oracle_in_every_mode() {
        for src in [IF_THEN_ELSE, PARTIAL_STORE_QUEUE] {
            let p = parse_program(src).unwrap();
            let expected = interpret(&p).unwrap();
            for cfg in all_configs() {
                let r = simulate(&p, &cfg).unwrap();
                assert!(compare_memory(&r.memory, &expected.memory).is_empty(), "{:?}", cfg.mode);
                let mut outs = r.outputs.clone();
                outs.sort();
                let mut want = expected.outputs.clone();
                want.sort();
                assert_eq!(outs, want);
            }
        }
    }

    #[test]
    fn small_kernels_match_oracle() {
        for kind in KernelKind::ALL {
            let p = small(kind);
            let expected = interpret(&p).unwrap();
            for cfg in all_configs() {
                let r = simulate(&p, &cfg).unwrap_or_else(|e| panic!("{kind:?} {:?} {:?}: {e}", cfg.mode, cfg.window));
                let diff = compare_memory(&r.memory, &expected.memory);
                assert!(diff.is_empty(), "{kind:?} {:?} {:?}: {diff:?}", cfg.mode, cfg.window);
                assert_eq!(r.metrics.commits, expected.waves as u64);
            }
        }
    }

    #[test]
    fn window_one_matches_strict_cycles() {
        for kind in KernelKind::ALL {
            let p = small(kind);
            let strict = simulate(&p, &SimConfig::strict()).unwrap();
            let one = simulate(&p, &SimConfig::twc(Window::Finite(1))).unwrap();
            assert_eq!(strict.metrics.total_cycles, one.metrics.total_cycles, "{kind:?}");
            assert_eq!(one.metrics.hazards.total(), 0);
        }
    }

    #[test]
    fn window_config_is_checked() {
        let p = small(KernelKind::Matrix);
        let cfg = SimConfig { window: Some(Window::Finite(2)), ..SimConfig::strict() };
        assert!(matches!(Simulator::new(&p, cfg), Err(SimError::Config(_))));
        let cfg = SimConfig { mode: Mode::Twc, ..SimConfig::strict() };
        assert!(matches!(Simulator::new(&p, cfg), Err(SimError::Config(_))));
    }
}
