use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub type InstId = u32;
pub type BlockId = u32;
pub type Word = i64;

/// One side of a wave-ordering key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Link {
    /// `.`: there is no such operation.
    None,
    /// `?`: not known statically (the neighbour sits across a branch or join).
    Unknown,
    Op(u32),
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Link::None => f.write_str("."),
            Link::Unknown => f.write_str("?"),
            Link::Op(c) => write!(f, "{c}"),
        }
    }
}

/// The `<P,C,S>` key that chains the memory operations of a wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemAnnotation {
    pub pred: Link,
    pub current: u32,
    pub succ: Link,
}

impl MemAnnotation {
    pub fn new(pred: Link, current: u32, succ: Link) -> Self {
        Self { pred, current, succ }
    }
}

impl fmt::Display for MemAnnotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{},{}>", self.pred, self.current, self.succ)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AluOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
    Shl,
    /// Logical shift right.
    Shr,
    Eq,
    Ne,
    Lt,
    Le,
    Mov,
}

impl AluOp {
    pub const ALL: [AluOp; 13] = [
        AluOp::Add,
        AluOp::Sub,
        AluOp::Mul,
        AluOp::And,
        AluOp::Or,
        AluOp::Xor,
        AluOp::Shl,
        AluOp::Shr,
        AluOp::Eq,
        AluOp::Ne,
        AluOp::Lt,
        AluOp::Le,
        AluOp::Mov,
    ];

    pub fn is_unary(self) -> bool {
        matches!(self, AluOp::Mov)
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            AluOp::Add => "add",
            AluOp::Sub => "sub",
            AluOp::Mul => "mul",
            AluOp::And => "and",
            AluOp::Or => "or",
            AluOp::Xor => "xor",
            AluOp::Shl => "shl",
            AluOp::Shr => "shr",
            AluOp::Eq => "eq",
            AluOp::Ne => "ne",
            AluOp::Lt => "lt",
            AluOp::Le => "le",
            AluOp::Mov => "mov",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<AluOp> {
        AluOp::ALL.into_iter().find(|op| op.mnemonic() == s)
    }

    /// Wrapping 64-bit semantics; comparisons yield 0/1.
    pub fn apply(self, a: Word, b: Word) -> Word {
        match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::Mul => a.wrapping_mul(b),
            AluOp::And => a & b,
            AluOp::Or => a | b,
            AluOp::Xor => a ^ b,
            AluOp::Shl => a.wrapping_shl((b & 63) as u32),
            AluOp::Shr => ((a as u64) >> (b & 63)) as Word,
            AluOp::Eq => (a == b) as Word,
            AluOp::Ne => (a != b) as Word,
            AluOp::Lt => (a < b) as Word,
            AluOp::Le => (a <= b) as Word,
            AluOp::Mov => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Opcode {
    /// Emits its immediate when triggered.
    Const(Word),
    /// Binary op on ports 0/1, or on port 0 and the immediate when present.
    Alu { op: AluOp, imm: Option<Word> },
    /// Ports: v1, v2, selector. Sends v1 when the selector is true.
    Select,
    /// Ports: value, predicate. Output 0 is the true path, output 1 the false path.
    Steer,
    WaveAdvance,
    Load,
    /// Address on port 0, data on port 1; issues both halves at once.
    Store,
    StoreAddr,
    StoreData,
    MemNop,
    Output,
}

impl Opcode {
    pub fn arity(&self) -> usize {
        match self {
            Opcode::Alu { op, imm } => {
                if op.is_unary() || imm.is_some() {
                    1
                } else {
                    2
                }
            }
            Opcode::Select => 3,
            Opcode::Steer | Opcode::Store => 2,
            _ => 1,
        }
    }

    pub fn output_count(&self) -> usize {
        match self {
            Opcode::Steer => 2,
            Opcode::Store
            | Opcode::StoreAddr
            | Opcode::StoreData
            | Opcode::MemNop
            | Opcode::Output => 0,
            _ => 1,
        }
    }

    pub fn is_memory(&self) -> bool {
        matches!(
            self,
            Opcode::Load | Opcode::Store | Opcode::StoreAddr | Opcode::StoreData | Opcode::MemNop
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dest {
    pub inst: InstId,
    pub port: u8,
}

impl Dest {
    pub fn new(inst: InstId, port: u8) -> Self {
        Self { inst, port }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub id: InstId,
    pub opcode: Opcode,
    /// One destination list per output; Steer has `[taken, not_taken]`.
    pub outputs: Vec<Vec<Dest>>,
    pub annotation: Option<MemAnnotation>,
    pub block: BlockId,
}

impl Instruction {
    pub fn new(id: InstId, opcode: Opcode, block: BlockId) -> Self {
        Self {
            id,
            opcode,
            outputs: vec![Vec::new(); opcode.output_count()],
            annotation: None,
            block,
        }
    }

    pub fn dests(&self) -> impl Iterator<Item = &Dest> {
        self.outputs.iter().flatten()
    }
}

/// An operand injected at wave 0 before the first cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryConstant {
    pub value: Word,
    pub dest: Dest,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Program {
    /// Indexed by instruction id.
    pub instructions: Vec<Instruction>,
    pub entry: Vec<EntryConstant>,
    /// Sorted, deduplicated block ids.
    pub blocks: Vec<BlockId>,
    pub memory_image: BTreeMap<u64, Word>,
}

impl Program {
    pub fn inst(&self, id: InstId) -> &Instruction {
        &self.instructions[id as usize]
    }

    pub fn get(&self, id: InstId) -> Option<&Instruction> {
        self.instructions.get(id as usize)
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn block_members(&self, block: BlockId) -> impl Iterator<Item = &Instruction> {
        self.instructions.iter().filter(move |i| i.block == block)
    }

    pub fn memory_ops(&self) -> impl Iterator<Item = &Instruction> {
        self.instructions.iter().filter(|i| i.opcode.is_memory())
    }
}
