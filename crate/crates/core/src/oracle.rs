//! Sequential reference interpreter.
//!
//! Evaluates the dataflow graph with an untimed worklist and applies memory
//! operations one wave at a time, walking each wave's `<P,C,S>` chain from
//! its `.` entry to its `.` exit. There is no speculation and no notion of
//! execution numbers; the result is the ground truth that every simulator
//! mode must reproduce.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::ir::*;

/// Default instruction budget for [`interpret`].
pub const DEFAULT_BUDGET: u64 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Load,
    Store,
    MemNop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEntry {
    pub wave: u32,
    pub c: u32,
    pub kind: TraceKind,
    /// Zero for MemNop.
    pub address: u64,
    /// Value loaded or stored.
    pub value: Word,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleState {
    pub memory: BTreeMap<u64, Word>,
    pub trace: Vec<TraceEntry>,
    pub outputs: Vec<(u32, Word)>,
    /// Number of waves whose chain completed.
    pub waves: u32,
    pub executed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("instruction budget of {0} exceeded")]
    BudgetExceeded(u64),
    #[error("wave {wave} cannot continue its memory chain; pending C values {pending:?}")]
    Stuck { wave: u32, pending: Vec<u32> },
    #[error("operand delivered twice to {inst}({port}) in wave {wave}")]
    DuplicateOperand { wave: u32, inst: InstId, port: u8 },
}

#[derive(Debug, Clone, Copy, Default)]
struct Access {
    addr: Option<u64>,
    data: Option<Word>,
    load_from: Option<InstId>,
    nop: bool,
}

#[derive(Debug)]
struct Interp<'p> {
    p: &'p Program,
    slots: HashMap<(u32, InstId), [Option<Word>; 3]>,
    ready: VecDeque<(u32, InstId)>,
    /// Memory accesses waiting for the chain, by wave then C.
    pending: BTreeMap<u32, BTreeMap<u32, (MemAnnotation, Access)>>,
    wave: u32,
    last: Option<MemAnnotation>,
    state: OracleState,
}

impl<'p> Interp<'p> {
    fn deliver(&mut self, wave: u32, d: Dest, v: Word) -> Result<(), OracleError> {
        let arity = self.p.inst(d.inst).opcode.arity();
        let slot = self.slots.entry((wave, d.inst)).or_default();
        if slot[d.port as usize].replace(v).is_some() {
            return Err(OracleError::DuplicateOperand { wave, inst: d.inst, port: d.port });
        }
        if slot[..arity].iter().all(Option::is_some) {
            self.ready.push_back((wave, d.inst));
        }
        Ok(())
    }

    fn send(&mut self, wave: u32, dests: &[Dest], v: Word) -> Result<(), OracleError> {
        for &d in dests {
            self.deliver(wave, d, v)?;
        }
        Ok(())
    }

    fn request(&mut self, wave: u32, inst: &Instruction, f: impl FnOnce(&mut Access)) {
        let ann = inst.annotation.expect("validated memory op");
        let entry = self
            .pending
            .entry(wave)
            .or_default()
            .entry(ann.current)
            .or_insert((ann, Access::default()));
        f(&mut entry.1);
    }

    fn fire(&mut self, wave: u32, id: InstId) -> Result<(), OracleError> {
        let ins = self.slots.remove(&(wave, id)).expect("ready slot");
        let inst = self.p.inst(id);
        let x = |i: usize| ins[i].expect("complete");
        match inst.opcode {
            Opcode::Const(v) => self.send(wave, &inst.outputs[0], v)?,
            Opcode::Alu { op, imm } => {
                let b = if op.is_unary() { 0 } else { imm.unwrap_or_else(|| x(1)) };
                self.send(wave, &inst.outputs[0], op.apply(x(0), b))?;
            }
            Opcode::Select => {
                let v = if x(2) != 0 { x(0) } else { x(1) };
                self.send(wave, &inst.outputs[0], v)?;
            }
            Opcode::Steer => {
                let out = if x(1) != 0 { 0 } else { 1 };
                self.send(wave, &inst.outputs[out], x(0))?;
            }
            Opcode::WaveAdvance => self.send(wave + 1, &inst.outputs[0], x(0))?,
            Opcode::Load => self.request(wave, inst, |a| {
                a.addr = Some(x(0) as u64);
                a.load_from = Some(id);
            }),
            Opcode::Store => self.request(wave, inst, |a| {
                a.addr = Some(x(0) as u64);
                a.data = Some(x(1));
            }),
            Opcode::StoreAddr => self.request(wave, inst, |a| a.addr = Some(x(0) as u64)),
            Opcode::StoreData => self.request(wave, inst, |a| a.data = Some(x(0))),
            Opcode::MemNop => self.request(wave, inst, |a| a.nop = true),
            Opcode::Output => self.state.outputs.push((wave, x(0))),
        }
        Ok(())
    }

    /// Whether `next` is the chain successor of the last applied operation.
    fn follows(&self, next: &MemAnnotation) -> bool {
        match self.last {
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

    /// Applies at most one memory operation; returns whether it did.
    fn step_memory(&mut self) -> Result<bool, OracleError> {
        let Some(reqs) = self.pending.get(&self.wave) else { return Ok(false) };
        let found = reqs.iter().find(|(_, (ann, acc))| {
            let complete = acc.nop || acc.load_from.is_some() || (acc.addr.is_some() && acc.data.is_some());
            complete && self.follows(ann)
        });
        let Some((&c, &(ann, acc))) = found else { return Ok(false) };
        self.pending.get_mut(&self.wave).expect("wave").remove(&c);
        let wave = self.wave;
        if acc.nop {
            self.state.trace.push(TraceEntry { wave, c, kind: TraceKind::MemNop, address: 0, value: 0 });
        } else if let Some(load) = acc.load_from {
            let addr = acc.addr.expect("load address");
            let value = self.state.memory.get(&addr).copied().unwrap_or(0);
            self.state.trace.push(TraceEntry { wave, c, kind: TraceKind::Load, address: addr, value });
            let dests = self.p.inst(load).outputs[0].clone();
            self.send(wave, &dests, value)?;
        } else {
            let (addr, value) = (acc.addr.expect("addr"), acc.data.expect("data"));
            self.state.memory.insert(addr, value);
            self.state.trace.push(TraceEntry { wave, c, kind: TraceKind::Store, address: addr, value });
        }
        self.last = Some(ann);
        if ann.succ == Link::None {
            self.pending.remove(&wave);
            self.wave += 1;
            self.state.waves += 1;
            self.last = None;
        }
        Ok(true)
    }
}

pub fn interpret(p: &Program) -> Result<OracleState, OracleError> {
    interpret_with_budget(p, DEFAULT_BUDGET)
}

pub fn interpret_with_budget(p: &Program, budget: u64) -> Result<OracleState, OracleError> {
    let mut it = Interp {
        p,
        slots: HashMap::new(),
        ready: VecDeque::new(),
        pending: BTreeMap::new(),
        wave: 0,
        last: None,
        state: OracleState { memory: p.memory_image.clone(), ..Default::default() },
    };
    for c in &p.entry {
        it.deliver(0, c.dest, c.value)?;
    }
    loop {
        while let Some((wave, id)) = it.ready.pop_front() {
            it.state.executed += 1;
            if it.state.executed > budget {
                return Err(OracleError::BudgetExceeded(budget));
            }
            it.fire(wave, id)?;
        }
        if !it.step_memory()? {
            break;
        }
    }
    if let Some((&wave, reqs)) = it.pending.iter().find(|(_, r)| !r.is_empty()) {
        return Err(OracleError::Stuck { wave, pending: reqs.keys().copied().collect() });
    }
    Ok(it.state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemDiff {
    pub address: u64,
    pub left: Word,
    pub right: Word,
}

/// Differences over the union of both images; absent addresses read as 0.
pub fn compare_memory(a: &BTreeMap<u64, Word>, b: &BTreeMap<u64, Word>) -> Vec<MemDiff> {
    let mut keys: Vec<u64> = a.keys().chain(b.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .filter_map(|address| {
            let left = a.get(&address).copied().unwrap_or(0);
            let right = b.get(&address).copied().unwrap_or(0);
            (left != right).then_some(MemDiff { address, left, right })
        })
        .collect()
}

/// Sorted `addr value` lines.
pub fn dump_memory(image: &BTreeMap<u64, Word>) -> String {
    let mut out = String::new();
    for (addr, value) in image {
        let _ = writeln!(out, "{addr} {value}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::kernels::{init_seed, init_step, init_value, vector_initial, vector_late, MatrixLayout, VectorLayout};
    use crate::ir::samples::{IF_THEN_ELSE, PARTIAL_STORE_QUEUE};

    fn det_ref(m: &[Vec<i64>]) -> i64 {
        if m.len() == 1 {
            return m[0][0];
        }
        (0..m.len())
            .map(|j| {
                let minor: Vec<Vec<i64>> =
                    m[1..].iter().map(|r| r.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, v)| *v).collect()).collect();
                let sign = if j % 2 == 0 { 1 } else { -1 };
                sign * m[0][j] * det_ref(&minor)
            })
            .sum()
    }

    #[test]
    fn one_by_one_determinant() {
        let mut p = build_kernel(KernelKind::Matrix, &KernelParams { matrices: 1, dim: 1, ..Default::default() }).unwrap();
        let l = MatrixLayout { dim: 1 };
        p.memory_image.insert(l.element(0, 0, 0), 5);
        let s = interpret(&p).unwrap();
        assert_eq!(s.memory[&l.det(0)], 5);
        assert_eq!(s.memory[&l.line_sum(0, 0)], 5);
    }

    #[test]
    fn two_by_two_determinants_match_scalar_reference() {
        let params = KernelParams { matrices: 3, dim: 2, ..Default::default() };
        let l = MatrixLayout { dim: 2 };
        let mut p = build_kernel(KernelKind::Matrix, &params).unwrap();
        let mut mats = Vec::new();
        for m in 0..3u32 {
            let vals: Vec<Vec<i64>> = (0..2).map(|r| (0..2).map(|c| (m * 7 + r * 3 + c) as i64 - 4).collect()).collect();
            for r in 0..2 {
                for c in 0..2 {
                    p.memory_image.insert(l.element(m, r, c), vals[r as usize][c as usize]);
                }
            }
            mats.push(vals);
        }
        let s = interpret(&p).unwrap();
        for (m, vals) in mats.iter().enumerate() {
            let m = m as u32;
            assert_eq!(s.memory[&l.det(m)], vals[0][0] * vals[1][1] - vals[0][1] * vals[1][0]);
            assert_eq!(s.memory[&l.line_sum(m, 1)], vals[1][0] + vals[1][1]);
        }
    }

    #[test]
    fn stores_kernel_matches_scalar_reference() {
        let params = KernelParams { matrices: 4, dim: 3, ..Default::default() };
        let l = MatrixLayout { dim: 3 };
        let s = interpret(&build_kernel(KernelKind::MatrixStoresDep, &params).unwrap()).unwrap();
        let mut x = init_seed();
        let mut elems = Vec::new();
        for _ in 0..4 * 9 {
            x = init_step(x);
            elems.push(init_value(x));
        }
        let k = crate::ir::kernels::dep_writer(4);
        let mut carried = 0;
        for m in 0..4u32 {
            let mat: Vec<Vec<i64>> = (0..3).map(|r| (0..3).map(|c| elems[(m * 9 + r * 3 + c) as usize]).collect()).collect();
            assert_eq!(s.memory[&l.element(m, 2, 1)], mat[2][1]);
            let d = det_ref(&mat) + if m as i64 == k + 1 { carried } else { 0 };
            if m as i64 == k {
                carried = d;
            }
            assert_eq!(s.memory[&l.det(m)], d, "matrix {m}");
            assert_eq!(s.memory[&l.line_sum(m, 0)], mat[0].iter().sum::<i64>());
        }
    }

    fn vector_reference(len: u32) -> BTreeMap<u64, Word> {
        let l = VectorLayout { len };
        let mut m: BTreeMap<u64, Word> = (0..len as u64).map(|j| (l.element(j), vector_initial(j))).collect();
        let pick = |c: bool, shared: u64, own: u64| if c { shared } else { own };
        for i in 1..len as u64 {
            let ii = i as i64;
            let get = |m: &BTreeMap<u64, Word>, a: u64| m.get(&a).copied().unwrap_or(0);
            let t = get(&m, l.element(i));
            let p = get(&m, pick(ii == l.raw_writer() + 1, l.raw_cell(), l.private(i, 0)));
            m.insert(pick(i % 2 == 0, l.shared(), l.private(i, 1)), ii);
            m.insert(pick(ii == l.war_reader() + 1, l.war_cell(), l.private(i, 2)), ii);
            m.insert(l.element(i), t + p + ii);
            m.insert(pick(i % 2 == 1, l.shared(), l.private(i, 1)), vector_late(t));
            m.insert(pick(ii == l.raw_writer(), l.raw_cell(), l.private(i, 0)), t);
            let q = get(&m, pick(ii == l.war_reader(), l.war_cell(), l.private(i, 2)));
            m.insert(l.private(i, 3), q + 1);
        }
        m
    }

    #[test]
    fn vector_full_dep_matches_scalar_loop() {
        for len in [2u32, 4, 100] {
            let p = build_kernel(KernelKind::VectorFullDep, &KernelParams { vector_len: len, ..Default::default() }).unwrap();
            let s = interpret(&p).unwrap();
            assert!(compare_memory(&s.memory, &vector_reference(len)).is_empty(), "len {len}");
        }
    }

    #[test]
    fn store_then_load_same_wave() {
        let src = "const 40 -> 0(0)\nwave 0\n0: mov -> 1(0), 2(0), 3(0)\n1: const 7 -> 2(1)\n2: store <.,1,2>\n3: load <1,2,.> -> 4(0)\n4: output\n";
        let s = interpret(&parse_program(src).unwrap()).unwrap();
        assert_eq!(s.trace[0].kind, TraceKind::Store);
        assert_eq!((s.trace[1].kind, s.trace[1].value), (TraceKind::Load, 7));
        assert_eq!(s.outputs, vec![(0, 7)]);
    }

    #[test]
    fn branch_chain_follows_taken_arm() {
        let mut p = parse_program(IF_THEN_ELSE).unwrap();
        let s = interpret(&p).unwrap();
        assert_eq!(s.memory[&101], 3);
        assert_eq!(s.memory[&102], 2);
        p.memory_image.insert(100, 1);
        let s = interpret(&p).unwrap();
        assert_eq!(s.memory[&101], 2);
        let cs: Vec<u32> = s.trace.iter().map(|t| t.c).collect();
        assert_eq!(cs, vec![1, 3, 4]);
    }

    #[test]
    fn partial_store_sample_semantics() {
        let s = interpret(&parse_program(PARTIAL_STORE_QUEUE).unwrap()).unwrap();
        let outs: Vec<Word> = s.outputs.iter().map(|o| o.1).collect();
        assert_eq!(outs.len(), 4);
        assert_eq!(s.memory[&64], 9);
        let loads: Vec<Word> = s.trace.iter().filter(|t| t.kind == TraceKind::Load).map(|t| t.value).collect();
        assert_eq!(loads, vec![7, 9, 9, 9]);
    }

    #[test]
    fn budget_guard() {
        let p = build_kernel(KernelKind::Matrix, &KernelParams::default()).unwrap();
        assert_eq!(interpret_with_budget(&p, 10), Err(OracleError::BudgetExceeded(10)));
    }

    #[test]
    fn compare_and_dump() {
        let a: BTreeMap<u64, Word> = [(1, 2), (3, 0)].into_iter().collect();
        let b: BTreeMap<u64, Word> = [(1, 2)].into_iter().collect();
        assert!(compare_memory(&a, &b).is_empty());
        let c: BTreeMap<u64, Word> = [(1, 5)].into_iter().collect();
        assert_eq!(compare_memory(&a, &c), vec![MemDiff { address: 1, left: 2, right: 5 }]);
        assert_eq!(dump_memory(&a), "1 2\n3 0\n");
    }
}
