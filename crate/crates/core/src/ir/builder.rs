//! Programmatic construction of wave-partitioned dataflow programs.
//!
//! Memory operations are chained in creation order within each block, and a
//! block left without memory operations receives a MemNop when it is closed.

use std::collections::BTreeMap;

use super::types::*;

/// A producer output that can be wired to consumer ports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Value {
    pub inst: InstId,
    pub output: u8,
}

#[derive(Debug, Default)]
struct BlockState {
    /// Chain slots in order; each holds one or two instructions (store halves).
    slots: Vec<Vec<InstId>>,
    /// Some value of the block usable to trigger a MemNop.
    trigger: Option<Value>,
}

#[derive(Debug)]
pub struct ProgramBuilder {
    instructions: Vec<Instruction>,
    entry: Vec<EntryConstant>,
    memory_image: BTreeMap<u64, Word>,
    blocks: BTreeMap<BlockId, BlockState>,
    current: BlockId,
    next_block: BlockId,
}

impl Default for ProgramBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl ProgramBuilder {
    /// Starts with block 0 as the current block.
    pub fn new() -> Self {
        let mut blocks = BTreeMap::new();
        blocks.insert(0, BlockState::default());
        Self {
            instructions: Vec::new(),
            entry: Vec::new(),
            memory_image: BTreeMap::new(),
            blocks,
            current: 0,
            next_block: 1,
        }
    }

    pub fn current_block(&self) -> BlockId {
        self.current
    }

    pub fn new_block(&mut self) -> BlockId {
        let b = self.next_block;
        self.next_block += 1;
        self.blocks.insert(b, BlockState::default());
        self.current = b;
        b
    }

    pub fn set_memory(&mut self, addr: u64, word: Word) {
        self.memory_image.insert(addr, word);
    }

    fn push(&mut self, opcode: Opcode) -> InstId {
        let id = self.instructions.len() as InstId;
        self.instructions.push(Instruction::new(id, opcode, self.current));
        id
    }

    fn value(&mut self, inst: InstId, output: u8) -> Value {
        let v = Value { inst, output };
        let state = self.blocks.get_mut(&self.current).expect("current block exists");
        state.trigger.get_or_insert(v);
        v
    }

    pub fn connect(&mut self, from: Value, to: InstId, port: u8) {
        self.instructions[from.inst as usize].outputs[from.output as usize].push(Dest::new(to, port));
    }

    /// A value injected at wave 0; only valid while building block 0.
    pub fn entry(&mut self, value: Word) -> Value {
        assert_eq!(self.current, 0, "entry values live in block 0");
        let id = self.push(Opcode::Alu { op: AluOp::Mov, imm: None });
        self.entry.push(EntryConstant { value, dest: Dest::new(id, 0) });
        self.value(id, 0)
    }

    pub fn konst(&mut self, imm: Word, trigger: Value) -> Value {
        let id = self.push(Opcode::Const(imm));
        self.connect(trigger, id, 0);
        self.value(id, 0)
    }

    pub fn alu(&mut self, op: AluOp, a: Value, b: Value) -> Value {
        let id = self.push(Opcode::Alu { op, imm: None });
        self.connect(a, id, 0);
        if !op.is_unary() {
            self.connect(b, id, 1);
        }
        self.value(id, 0)
    }

    pub fn alu_imm(&mut self, op: AluOp, a: Value, imm: Word) -> Value {
        let id = self.push(Opcode::Alu { op, imm: Some(imm) });
        self.connect(a, id, 0);
        self.value(id, 0)
    }

    pub fn mov(&mut self, a: Value) -> Value {
        let id = self.push(Opcode::Alu { op: AluOp::Mov, imm: None });
        self.connect(a, id, 0);
        self.value(id, 0)
    }

    pub fn select(&mut self, v1: Value, v2: Value, sel: Value) -> Value {
        let id = self.push(Opcode::Select);
        self.connect(v1, id, 0);
        self.connect(v2, id, 1);
        self.connect(sel, id, 2);
        self.value(id, 0)
    }

    /// Returns `(taken, not_taken)`.
    pub fn steer(&mut self, v: Value, pred: Value) -> (Value, Value) {
        let id = self.push(Opcode::Steer);
        self.connect(v, id, 0);
        self.connect(pred, id, 1);
        (self.value(id, 0), Value { inst: id, output: 1 })
    }

    /// A WaveAdvance in the current block; `v` may come from any block.
    pub fn wave_advance(&mut self, v: Value) -> Value {
        let id = self.wave_advance_unwired();
        self.connect(v, id.inst, 0);
        id
    }

    fn wave_advance_unwired(&mut self) -> Value {
        let id = self.push(Opcode::WaveAdvance);
        self.value(id, 0)
    }

    fn add_slot(&mut self, insts: Vec<InstId>) {
        self.blocks.get_mut(&self.current).expect("current block").slots.push(insts);
    }

    pub fn load(&mut self, addr: Value) -> Value {
        let id = self.push(Opcode::Load);
        self.connect(addr, id, 0);
        self.add_slot(vec![id]);
        self.value(id, 0)
    }

    /// Emits a StoreAddr/StoreData pair occupying one chain slot.
    pub fn store(&mut self, addr: Value, data: Value) {
        let a = self.push(Opcode::StoreAddr);
        self.connect(addr, a, 0);
        let d = self.push(Opcode::StoreData);
        self.connect(data, d, 0);
        self.add_slot(vec![a, d]);
    }

    pub fn memnop(&mut self, trigger: Value) {
        let id = self.push(Opcode::MemNop);
        self.connect(trigger, id, 0);
        self.add_slot(vec![id]);
    }

    pub fn output(&mut self, v: Value) {
        let id = self.push(Opcode::Output);
        self.connect(v, id, 0);
    }

    /// Opens a straight-line block whose inputs are `live` advanced by one wave.
    pub fn block<F>(&mut self, live: &[Value], body: F) -> Vec<Value>
    where
        F: FnOnce(&mut Self, &[Value]) -> Vec<Value>,
    {
        self.close_current();
        self.new_block();
        let inputs: Vec<Value> = live.iter().map(|&v| self.wave_advance(v)).collect();
        let out = body(self, &inputs);
        self.close_current();
        out
    }

    /// A do-while loop occupying one block per iteration. `body` maps the
    /// iteration inputs to `(next_values, continue_predicate)`; the returned
    /// values are the loop's exit values.
    pub fn do_while<F>(&mut self, live: &[Value], body: F) -> Vec<Value>
    where
        F: FnOnce(&mut Self, &[Value]) -> (Vec<Value>, Value),
    {
        self.close_current();
        self.new_block();
        let heads: Vec<Value> = live
            .iter()
            .map(|&v| {
                let head = self.wave_advance_unwired();
                self.connect(v, head.inst, 0);
                head
            })
            .collect();
        let (next, cond) = body(self, &heads);
        assert_eq!(next.len(), heads.len(), "loop must carry every live value");
        let mut exits = Vec::with_capacity(next.len());
        for (n, head) in next.into_iter().zip(heads) {
            let (again, exit) = self.steer(n, cond);
            self.connect(again, head.inst, 0);
            exits.push(exit);
        }
        self.close_current();
        exits
    }

    fn close_current(&mut self) {
        let state = self.blocks.get(&self.current).expect("current block");
        if state.slots.is_empty() {
            let trigger = state.trigger.expect("block has no values to trigger a MemNop");
            self.memnop(trigger);
        }
    }

    /// Closes the current block and assigns sequential `<P,C,S>` chains.
    pub fn finish(mut self) -> Program {
        self.close_current();
        for state in self.blocks.values() {
            let n = state.slots.len() as u32;
            for (i, slot) in state.slots.iter().enumerate() {
                let c = i as u32 + 1;
                let pred = if c == 1 { Link::None } else { Link::Op(c - 1) };
                let succ = if c == n { Link::None } else { Link::Op(c + 1) };
                for &id in slot {
                    self.instructions[id as usize].annotation = Some(MemAnnotation::new(pred, c, succ));
                }
            }
        }
        let blocks = self
            .blocks
            .keys()
            .copied()
            .filter(|b| self.instructions.iter().any(|i| i.block == *b))
            .collect();
        Program {
            instructions: self.instructions,
            entry: self.entry,
            blocks,
            memory_image: self.memory_image,
        }
    }
}
