//! Processing-element fabric: operand tags, matching tables with execution
//! number filtering, the Cluster/Domain/PE topology and static placement.

mod matching;
mod topology;

pub use matching::{DeliveryOutcome, ExecutionMap, MatchingTable, ReadyGroup};
pub use topology::{place_instructions, Placement, PlacementError, Topology};

use serde::{Deserialize, Serialize};

use crate::ir::{InstId, Opcode, Word};

/// Token identity. The thread is always 0 in this simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tag {
    pub thread: u32,
    pub wave: u32,
    pub exen: u32,
    pub dest: InstId,
    pub port: u8,
}

impl Tag {
    pub fn new(wave: u32, exen: u32, dest: InstId, port: u8) -> Self {
        Tag { thread: 0, wave, exen, dest, port }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operand {
    pub tag: Tag,
    pub value: Word,
}

/// What a firing produces, before routing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FireEffect {
    /// Send `value` along output `output` (0 except for a not-taken Steer).
    Send { output: usize, value: Word },
    /// WaveAdvance: send `value` to the next wave.
    Advance(Word),
    Load { address: u64 },
    Store { address: u64, data: Word },
    StoreAddr { address: u64 },
    StoreData { data: Word },
    MemNop,
    Output(Word),
}

/// Opcode semantics over a complete operand set.
pub fn evaluate(opcode: &Opcode, inputs: &[Word]) -> FireEffect {
    match *opcode {
        Opcode::Const(v) => FireEffect::Send { output: 0, value: v },
        Opcode::Alu { op, imm } => {
            let b = if op.is_unary() { 0 } else { imm.unwrap_or_else(|| inputs[1]) };
            FireEffect::Send { output: 0, value: op.apply(inputs[0], b) }
        }
        Opcode::Select => {
            let value = if inputs[2] != 0 { inputs[0] } else { inputs[1] };
            FireEffect::Send { output: 0, value }
        }
        Opcode::Steer => FireEffect::Send { output: if inputs[1] != 0 { 0 } else { 1 }, value: inputs[0] },
        Opcode::WaveAdvance => FireEffect::Advance(inputs[0]),
        Opcode::Load => FireEffect::Load { address: inputs[0] as u64 },
        Opcode::Store => FireEffect::Store { address: inputs[0] as u64, data: inputs[1] },
        Opcode::StoreAddr => FireEffect::StoreAddr { address: inputs[0] as u64 },
        Opcode::StoreData => FireEffect::StoreData { data: inputs[0] },
        Opcode::MemNop => FireEffect::MemNop,
        Opcode::Output => FireEffect::Output(inputs[0]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::AluOp;

    #[test]
    fn select_sends_first_value_when_true() {
        assert_eq!(evaluate(&Opcode::Select, &[10, 20, 1]), FireEffect::Send { output: 0, value: 10 });
        assert_eq!(evaluate(&Opcode::Select, &[10, 20, 0]), FireEffect::Send { output: 0, value: 20 });
    }

    #[test]
    fn steer_picks_one_path() {
        assert_eq!(evaluate(&Opcode::Steer, &[5, 1]), FireEffect::Send { output: 0, value: 5 });
        assert_eq!(evaluate(&Opcode::Steer, &[5, 0]), FireEffect::Send { output: 1, value: 5 });
    }

    #[test]
    fn immediates_replace_second_operand() {
        let op = Opcode::Alu { op: AluOp::Sub, imm: Some(3) };
        assert_eq!(evaluate(&op, &[10]), FireEffect::Send { output: 0, value: 7 });
        assert_eq!(evaluate(&Opcode::WaveAdvance, &[99]), FireEffect::Advance(99));
    }
}
