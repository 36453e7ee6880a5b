//! Static checks on wave-ordering annotations and graph shape.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use super::asm::pair_allows;
use super::types::*;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MissingAnnotation { inst: InstId },
    UnexpectedAnnotation { inst: InstId },
    DuplicateC { block: BlockId, c: u32, insts: Vec<InstId> },
    StorePairMismatch { block: BlockId, c: u32, insts: Vec<InstId> },
    NoMemoryOps { block: BlockId },
    FirstNotEntry { block: BlockId, inst: InstId },
    EntryCount { block: BlockId, insts: Vec<InstId> },
    NoExit { block: BlockId },
    DanglingPred { block: BlockId, c: u32, insts: Vec<InstId> },
    DanglingSucc { block: BlockId, c: u32, insts: Vec<InstId> },
    NonIncreasing { block: BlockId, c: u32, insts: Vec<InstId> },
    /// A `?` successor with fewer than two arms: a branch path has no memory operation.
    BrokenBranch { block: BlockId, c: u32, insts: Vec<InstId> },
    /// A `?` predecessor with fewer than two incoming arms.
    BrokenJoin { block: BlockId, c: u32, insts: Vec<InstId> },
    Unreachable { block: BlockId, c: u32, insts: Vec<InstId> },
    BadPort { inst: InstId, dest: Dest },
    UnfedPort { inst: InstId, port: u8 },
    CrossBlockEdge { from: InstId, to: InstId },
    WaveAdvanceEscapes { inst: InstId, to: InstId },
}

impl Violation {
    pub fn instructions(&self) -> Vec<InstId> {
        use Violation::*;
        match self {
            MissingAnnotation { inst } | UnexpectedAnnotation { inst } | FirstNotEntry { inst, .. } => {
                vec![*inst]
            }
            BadPort { inst, .. } | UnfedPort { inst, .. } => vec![*inst],
            CrossBlockEdge { from, to } => vec![*from, *to],
            WaveAdvanceEscapes { inst, to } => vec![*inst, *to],
            DuplicateC { insts, .. }
            | StorePairMismatch { insts, .. }
            | EntryCount { insts, .. }
            | DanglingPred { insts, .. }
            | DanglingSucc { insts, .. }
            | NonIncreasing { insts, .. }
            | BrokenBranch { insts, .. }
            | BrokenJoin { insts, .. }
            | Unreachable { insts, .. } => insts.clone(),
            NoMemoryOps { .. } | NoExit { .. } => Vec::new(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            MissingAnnotation { inst } => write!(f, "memory operation {inst} has no <P,C,S> annotation"),
            UnexpectedAnnotation { inst } => write!(f, "non-memory instruction {inst} carries an annotation"),
            DuplicateC { block, c, insts } => write!(f, "wave {block}: C={c} used by {insts:?}"),
            StorePairMismatch { block, c, insts } => {
                write!(f, "wave {block}: store halves {insts:?} at C={c} disagree")
            }
            NoMemoryOps { block } => write!(f, "wave {block} has no memory operation (insert a MemNop)"),
            FirstNotEntry { block, inst } => {
                write!(f, "wave {block}: first operation must have P='.' (instruction {inst})")
            }
            EntryCount { block, insts } => write!(f, "wave {block}: expected one P='.' operation, found {insts:?}"),
            NoExit { block } => write!(f, "wave {block}: no operation has S='.'"),
            DanglingPred { block, c, .. } => write!(f, "wave {block}: predecessor of C={c} does not chain back"),
            DanglingSucc { block, c, .. } => write!(f, "wave {block}: successor of C={c} does not chain forward"),
            NonIncreasing { block, c, .. } => write!(f, "wave {block}: chain from C={c} does not increase"),
            BrokenBranch { block, c, .. } => write!(
                f,
                "wave {block}: broken chain after C={c}: a branch path has no memory operation (insert a MemNop)"
            ),
            BrokenJoin { block, c, .. } => write!(
                f,
                "wave {block}: broken chain before C={c}: a branch path has no memory operation (insert a MemNop)"
            ),
            Unreachable { block, c, .. } => write!(f, "wave {block}: C={c} is not reachable from the chain entry"),
            BadPort { inst, dest } => write!(f, "instruction {inst} targets missing port {}({})", dest.inst, dest.port),
            UnfedPort { inst, port } => write!(f, "port {inst}({port}) has no producer"),
            CrossBlockEdge { from, to } => {
                write!(f, "edge {from}->{to} enters another wave without a WaveAdvance")
            }
            WaveAdvanceEscapes { inst, to } => write!(f, "WaveAdvance {inst} feeds {to} outside its own wave"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// One chain position: a C value and the instruction(s) holding it.
#[derive(Debug, Clone)]
struct Slot {
    ann: MemAnnotation,
    insts: Vec<InstId>,
}

pub fn validate_program(p: &Program) -> ValidationReport {
    let mut v = Vec::new();
    check_graph(p, &mut v);
    let mut slots: BTreeMap<BlockId, BTreeMap<u32, Slot>> = BTreeMap::new();
    let mut kinds: BTreeMap<(BlockId, u32), Vec<Opcode>> = BTreeMap::new();
    for inst in &p.instructions {
        match (inst.opcode.is_memory(), inst.annotation) {
            (true, None) => v.push(Violation::MissingAnnotation { inst: inst.id }),
            (false, Some(_)) => v.push(Violation::UnexpectedAnnotation { inst: inst.id }),
            (true, Some(ann)) => {
                let seen = kinds.entry((inst.block, ann.current)).or_default();
                let slot = slots.entry(inst.block).or_default().entry(ann.current);
                if !pair_allows(seen, inst.opcode) {
                    let mut insts = match &slot {
                        std::collections::btree_map::Entry::Occupied(o) => o.get().insts.clone(),
                        _ => Vec::new(),
                    };
                    insts.push(inst.id);
                    v.push(Violation::DuplicateC { block: inst.block, c: ann.current, insts });
                    continue;
                }
                seen.push(inst.opcode);
                let s = slot.or_insert_with(|| Slot { ann, insts: Vec::new() });
                if s.ann != ann {
                    v.push(Violation::StorePairMismatch {
                        block: inst.block,
                        c: ann.current,
                        insts: vec![s.insts[0], inst.id],
                    });
                }
                s.insts.push(inst.id);
            }
            (false, None) => {}
        }
    }
    for &block in &p.blocks {
        match slots.get(&block) {
            None => v.push(Violation::NoMemoryOps { block }),
            Some(chain) => check_chain(block, chain, &mut v),
        }
    }
    ValidationReport { violations: v }
}

fn check_graph(p: &Program, v: &mut Vec<Violation>) {
    let mut fed: HashSet<(InstId, u8)> = p.entry.iter().map(|c| (c.dest.inst, c.dest.port)).collect();
    for inst in &p.instructions {
        for d in inst.dests() {
            let Some(target) = p.get(d.inst) else {
                v.push(Violation::BadPort { inst: inst.id, dest: *d });
                continue;
            };
            if d.port as usize >= target.opcode.arity() {
                v.push(Violation::BadPort { inst: inst.id, dest: *d });
                continue;
            }
            fed.insert((d.inst, d.port));
            if inst.opcode == Opcode::WaveAdvance {
                if target.block != inst.block && target.opcode != Opcode::WaveAdvance {
                    v.push(Violation::WaveAdvanceEscapes { inst: inst.id, to: target.id });
                }
            } else if target.block != inst.block && target.opcode != Opcode::WaveAdvance {
                v.push(Violation::CrossBlockEdge { from: inst.id, to: target.id });
            }
        }
    }
    for inst in &p.instructions {
        for port in 0..inst.opcode.arity() as u8 {
            if !fed.contains(&(inst.id, port)) {
                v.push(Violation::UnfedPort { inst: inst.id, port });
            }
        }
    }
}

fn check_chain(block: BlockId, chain: &BTreeMap<u32, Slot>, v: &mut Vec<Violation>) {
    let entries: Vec<&Slot> = chain.values().filter(|s| s.ann.pred == Link::None).collect();
    let (first_c, first) = chain.iter().next().expect("non-empty chain");
    if first.ann.pred != Link::None {
        v.push(Violation::FirstNotEntry { block, inst: first.insts[0] });
    } else if entries.len() != 1 {
        v.push(Violation::EntryCount {
            block,
            insts: entries.iter().map(|s| s.insts[0]).collect(),
        });
    }
    if !chain.values().any(|s| s.ann.succ == Link::None) {
        v.push(Violation::NoExit { block });
    }

    let successors = |s: &Slot| -> Vec<u32> {
        match s.ann.succ {
            Link::Op(n) => vec![n],
            Link::Unknown => chain
                .values()
                .filter(|o| o.ann.pred == Link::Op(s.ann.current))
                .map(|o| o.ann.current)
                .collect(),
            Link::None => Vec::new(),
        }
    };

    for (&c, s) in chain {
        match s.ann.pred {
            Link::Op(p) => {
                let ok = chain
                    .get(&p)
                    .is_some_and(|ps| matches!(ps.ann.succ, Link::Unknown) || ps.ann.succ == Link::Op(c));
                if !ok {
                    v.push(Violation::DanglingPred { block, c, insts: s.insts.clone() });
                }
            }
            Link::Unknown => {
                let arms = chain.values().filter(|o| o.ann.succ == Link::Op(c)).count();
                if arms < 2 {
                    v.push(Violation::BrokenJoin { block, c, insts: s.insts.clone() });
                }
            }
            Link::None => {}
        }
        match s.ann.succ {
            Link::Op(n) => {
                let ok = chain
                    .get(&n)
                    .is_some_and(|ns| matches!(ns.ann.pred, Link::Unknown) || ns.ann.pred == Link::Op(c));
                if !ok {
                    v.push(Violation::DanglingSucc { block, c, insts: s.insts.clone() });
                }
            }
            Link::Unknown => {
                if successors(s).len() < 2 {
                    v.push(Violation::BrokenBranch { block, c, insts: s.insts.clone() });
                }
            }
            Link::None => {}
        }
        if successors(s).iter().any(|&n| n <= c) {
            v.push(Violation::NonIncreasing { block, c, insts: s.insts.clone() });
        }
    }

    if first.ann.pred == Link::None {
        let mut seen = BTreeSet::new();
        let mut stack = vec![*first_c];
        while let Some(c) = stack.pop() {
            if !seen.insert(c) {
                continue;
            }
            if let Some(s) = chain.get(&c) {
                stack.extend(successors(s).into_iter().filter(|n| n > &c));
            }
        }
        for (&c, s) in chain {
            if !seen.contains(&c) {
                v.push(Violation::Unreachable { block, c, insts: s.insts.clone() });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;
    use crate::ir::samples::IF_THEN_ELSE;


    #[test]
    fn if_then_else_is_clean() {
        let p = parse_program(IF_THEN_ELSE).unwrap();
        let report = validate_program(&p);
        assert!(report.is_empty(), "{report}");
    }

    #[test]
    fn deleted_else_store_breaks_chain() {
        let src = IF_THEN_ELSE.replace("13: store <1,3,4>", "13: output");
        let p = parse_program(&src).unwrap();
        let report = validate_program(&p);
        assert!(report.violations.iter().any(|v| matches!(v, Violation::BrokenBranch { c: 1, .. })));
        assert!(report.violations.iter().any(|v| matches!(v, Violation::BrokenJoin { c: 4, .. })));
    }

    #[test]
    fn first_op_needs_dot_pred() {
        let p = parse_program("const 0 -> 0(0)\nwave 0\n0: memnop <5,1,.>\n").unwrap();
        let report = validate_program(&p);
        assert!(report.violations.contains(&Violation::FirstNotEntry { block: 0, inst: 0 }));
        assert!(report.to_string().contains("first operation must have P='.'"));
    }

    #[test]
    fn graph_shape_checks() {
        let src = "const 0 -> 0(0)\nwave 0\n0: mov -> 1(0), 2(0)\n1: memnop <.,1,.>\nwave 1\n2: memnop <.,1,.>\n3: add\n";
        let report = validate_program(&parse_program(src).unwrap());
        assert!(report.violations.contains(&Violation::CrossBlockEdge { from: 0, to: 2 }));
        assert!(report.violations.contains(&Violation::UnfedPort { inst: 3, port: 1 }));
        let empty = parse_program("const 0 -> 0(0)\nwave 0\n0: output\n").unwrap();
        assert_eq!(validate_program(&empty).violations, vec![Violation::NoMemoryOps { block: 0 }]);
    }
}
