//! Line-oriented assembly for dataflow programs.
//!
//! ```text
//! # comment
//! mem 4096 = 5
//! const 0 -> 0(0)
//! wave 0
//! 0: mov -> 1(0), 2(0)
//! 1: add #4 -> 3(0)
//! 2: memnop <.,1,.>
//! 3: steer -> 4(0) ; 5(0)
//! ```
//!
//! Steer lists its taken destinations before the `;` and the not-taken ones
//! after it. Annotations may be written `<P,C,S>` or `[P,C,S]`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use super::types::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("reference to undefined instruction {0}")]
    UndefinedInstruction(InstId),
    #[error("duplicate C value {c} in wave {block}")]
    DuplicateC { block: BlockId, c: u32 },
    #[error("instruction {0} defined twice")]
    DuplicateInstruction(InstId),
    #[error("instruction ids must be dense from 0; {0} is missing")]
    SparseIds(InstId),
    #[error("instruction before any `wave` declaration")]
    NoWave,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Num(i64),
    Sym(char),
    Arrow,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    col: usize,
}

fn lex(line: &str, lineno: usize) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c == '#' && !matches!(out.last(), Some(Token { tok: Tok::Word(_), .. })) {
            // `#` directly after an opcode is an immediate marker, anywhere else a comment
            break;
        }
        if c.is_whitespace() {
            i += 1;
        } else if c == '-' && chars.get(i + 1) == Some(&'>') {
            out.push(Token { tok: Tok::Arrow, col });
            i += 2;
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            i += 1;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let value = parse_int(&text).ok_or_else(|| ParseError {
                line: lineno,
                col,
                kind: ParseErrorKind::Syntax(format!("bad number `{text}`")),
            })?;
            out.push(Token { tok: Tok::Num(value), col });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Word(chars[start..i].iter().collect::<String>().to_ascii_lowercase()),
                col,
            });
        } else if "#<>[],():;=.?".contains(c) {
            out.push(Token { tok: Tok::Sym(c), col });
            i += 1;
        } else {
            return Err(ParseError {
                line: lineno,
                col,
                kind: ParseErrorKind::Syntax(format!("unexpected character `{c}`")),
            });
        }
    }
    Ok(out)
}

fn parse_int(text: &str) -> Option<i64> {
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let magnitude = if let Some(hex) = body.strip_prefix("0x") {
        u64::from_str_radix(hex, 16).ok()? as i64
    } else {
        body.parse::<u64>().ok()? as i64
    };
    Some(if neg { magnitude.wrapping_neg() } else { magnitude })
}

struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
    eol_col: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl Into<String>) -> ParseError {
        let col = self.toks.get(self.pos).map_or(self.eol_col, |t| t.col);
        ParseError { line: self.line, col, kind: ParseErrorKind::Syntax(msg.into()) }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.eol_col, |t| t.col)
    }

    fn next(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos).map(|t| &t.tok);
        self.pos += 1;
        t
    }

    fn sym(&mut self, c: char) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Sym(s)) if *s == c => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected `{c}`"))),
        }
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn num(&mut self) -> Result<i64, ParseError> {
        match self.peek() {
            Some(Tok::Num(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(n)
            }
            _ => Err(self.err("expected a number")),
        }
    }

    fn unsigned(&mut self, what: &str) -> Result<u32, ParseError> {
        let col = self.col();
        let n = self.num()?;
        u32::try_from(n).map_err(|_| ParseError {
            line: self.line,
            col,
            kind: ParseErrorKind::Syntax(format!("{what} out of range: {n}")),
        })
    }

    fn done(&self) -> Result<(), ParseError> {
        if self.pos < self.toks.len() {
            Err(self.err("unexpected trailing input"))
        } else {
            Ok(())
        }
    }
}

struct PendingDest {
    dest: Dest,
    line: usize,
    col: usize,
}

fn parse_link(cur: &mut Cursor) -> Result<Link, ParseError> {
    if cur.eat_sym('.') {
        Ok(Link::None)
    } else if cur.eat_sym('?') {
        Ok(Link::Unknown)
    } else {
        Ok(Link::Op(cur.unsigned("annotation key")?))
    }
}

fn parse_dest(cur: &mut Cursor) -> Result<PendingDest, ParseError> {
    let col = cur.col();
    let inst = cur.unsigned("instruction id")?;
    cur.sym('(')?;
    let port = cur.unsigned("port")?;
    cur.sym(')')?;
    let port = u8::try_from(port).map_err(|_| cur.err("port out of range"))?;
    Ok(PendingDest { dest: Dest::new(inst, port), line: cur.line, col })
}

fn parse_dest_list(cur: &mut Cursor) -> Result<Vec<PendingDest>, ParseError> {
    let mut out = Vec::new();
    while matches!(cur.peek(), Some(Tok::Num(_))) {
        out.push(parse_dest(cur)?);
        if !cur.eat_sym(',') {
            break;
        }
    }
    Ok(out)
}

fn parse_opcode(cur: &mut Cursor) -> Result<Opcode, ParseError> {
    let name = match cur.next() {
        Some(Tok::Word(w)) => w.clone(),
        _ => {
            cur.pos -= 1;
            return Err(cur.err("expected an opcode"));
        }
    };
    let op = match name.as_str() {
        "const" => Opcode::Const(cur.num()?),
        "select" => Opcode::Select,
        "steer" => Opcode::Steer,
        "wa" | "waveadvance" => Opcode::WaveAdvance,
        "load" => Opcode::Load,
        "store" => Opcode::Store,
        "storeaddr" => Opcode::StoreAddr,
        "storedata" => Opcode::StoreData,
        "memnop" => Opcode::MemNop,
        "output" => Opcode::Output,
        other => match AluOp::from_mnemonic(other) {
            Some(op) => {
                let imm = if cur.eat_sym('#') { Some(cur.num()?) } else { None };
                Opcode::Alu { op, imm }
            }
            None => {
                cur.pos -= 1;
                return Err(cur.err(format!("unknown opcode `{other}`")));
            }
        },
    };
    Ok(op)
}

/// Parses assembly text into a program with all references resolved.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut defined: BTreeMap<InstId, (Instruction, usize)> = BTreeMap::new();
    let mut pending: Vec<(InstId, usize, PendingDest)> = Vec::new();
    let mut entry: Vec<(Word, PendingDest)> = Vec::new();
    let mut memory_image = BTreeMap::new();
    let mut blocks = BTreeSet::new();
    let mut current_block: Option<BlockId> = None;
    let mut c_seen: HashMap<(BlockId, u32), Vec<Opcode>> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let toks = lex(raw, lineno)?;
        if toks.is_empty() {
            continue;
        }
        let mut cur = Cursor { toks: &toks, pos: 0, line: lineno, eol_col: raw.len() + 1 };
        match cur.peek() {
            Some(Tok::Word(w)) if w == "wave" => {
                cur.pos += 1;
                let b = cur.unsigned("wave id")?;
                cur.done()?;
                blocks.insert(b);
                current_block = Some(b);
            }
            Some(Tok::Word(w)) if w == "mem" => {
                cur.pos += 1;
                let addr = cur.num()? as u64;
                cur.sym('=')?;
                let word = cur.num()?;
                cur.done()?;
                memory_image.insert(addr, word);
            }
            Some(Tok::Word(w)) if w == "const" => {
                cur.pos += 1;
                let value = cur.num()?;
                if !matches!(cur.next(), Some(Tok::Arrow)) {
                    cur.pos -= 1;
                    return Err(cur.err("expected `->`"));
                }
                let d = parse_dest(&mut cur)?;
                cur.done()?;
                entry.push((value, d));
            }
            Some(Tok::Num(_)) => {
                let id_col = cur.col();
                let id = cur.unsigned("instruction id")?;
                cur.sym(':')?;
                let block = current_block.ok_or(ParseError {
                    line: lineno,
                    col: id_col,
                    kind: ParseErrorKind::NoWave,
                })?;
                let opcode = parse_opcode(&mut cur)?;
                let mut inst = Instruction::new(id, opcode, block);
                if matches!(cur.peek(), Some(Tok::Sym('<' | '['))) {
                    let close = if cur.eat_sym('<') { '>' } else {
                        cur.sym('[')?;
                        ']'
                    };
                    let ann_col = cur.col();
                    let pred = parse_link(&mut cur)?;
                    cur.sym(',')?;
                    let current = cur.unsigned("annotation key")?;
                    cur.sym(',')?;
                    let succ = parse_link(&mut cur)?;
                    cur.sym(close)?;
                    let seen = c_seen.entry((block, current)).or_default();
                    if !pair_allows(seen, opcode) {
                        return Err(ParseError {
                            line: lineno,
                            col: ann_col,
                            kind: ParseErrorKind::DuplicateC { block, c: current },
                        });
                    }
                    seen.push(opcode);
                    inst.annotation = Some(MemAnnotation::new(pred, current, succ));
                }
                if matches!(cur.peek(), Some(Tok::Arrow)) {
                    cur.pos += 1;
                    let lists = if opcode == Opcode::Steer {
                        let taken = parse_dest_list(&mut cur)?;
                        cur.sym(';')?;
                        vec![taken, parse_dest_list(&mut cur)?]
                    } else {
                        vec![parse_dest_list(&mut cur)?]
                    };
                    if opcode.output_count() == 0 && lists.iter().any(|l| !l.is_empty()) {
                        return Err(cur.err("opcode has no outputs"));
                    }
                    for (slot, list) in lists.into_iter().enumerate() {
                        for d in list {
                            pending.push((id, slot, d));
                        }
                    }
                }
                cur.done()?;
                if defined.insert(id, (inst, lineno)).is_some() {
                    return Err(ParseError {
                        line: lineno,
                        col: id_col,
                        kind: ParseErrorKind::DuplicateInstruction(id),
                    });
                }
            }
            _ => return Err(cur.err("expected `wave`, `mem`, `const` or an instruction")),
        }
    }

    for (expected, (&id, (_, line))) in defined.iter().enumerate() {
        if id as usize != expected {
            return Err(ParseError {
                line: *line,
                col: 1,
                kind: ParseErrorKind::SparseIds(expected as InstId),
            });
        }
    }
    let mut instructions: Vec<Instruction> = defined.into_values().map(|(i, _)| i).collect();
    let undefined = |d: &PendingDest| ParseError {
        line: d.line,
        col: d.col,
        kind: ParseErrorKind::UndefinedInstruction(d.dest.inst),
    };
    for (src, slot, d) in pending {
        if d.dest.inst as usize >= instructions.len() {
            return Err(undefined(&d));
        }
        instructions[src as usize].outputs[slot].push(d.dest);
    }
    let mut entry_consts = Vec::with_capacity(entry.len());
    for (value, d) in entry {
        if d.dest.inst as usize >= instructions.len() {
            return Err(undefined(&d));
        }
        entry_consts.push(EntryConstant { value, dest: d.dest });
    }

    Ok(Program {
        instructions,
        entry: entry_consts,
        blocks: blocks.into_iter().collect(),
        memory_image,
    })
}

/// A C value may be shared only by one StoreAddr and one StoreData.
pub(crate) fn pair_allows(seen: &[Opcode], next: Opcode) -> bool {
    match seen {
        [] => true,
        [Opcode::StoreAddr] => next == Opcode::StoreData,
        [Opcode::StoreData] => next == Opcode::StoreAddr,
        _ => false,
    }
}

fn write_dests(out: &mut String, dests: &[Dest]) {
    for (i, d) in dests.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, " {}({})", d.inst, d.port);
    }
}

fn mnemonic(op: &Opcode) -> String {
    match op {
        Opcode::Const(v) => format!("const {v}"),
        Opcode::Alu { op, imm: Some(imm) } => format!("{} #{imm}", op.mnemonic()),
        Opcode::Alu { op, imm: None } => op.mnemonic().to_string(),
        Opcode::Select => "select".into(),
        Opcode::Steer => "steer".into(),
        Opcode::WaveAdvance => "wa".into(),
        Opcode::Load => "load".into(),
        Opcode::Store => "store".into(),
        Opcode::StoreAddr => "storeaddr".into(),
        Opcode::StoreData => "storedata".into(),
        Opcode::MemNop => "memnop".into(),
        Opcode::Output => "output".into(),
    }
}

/// Renders a program in the assembly format accepted by [`parse_program`].
pub fn emit_program(p: &Program) -> String {
    let mut out = String::new();
    for (addr, word) in &p.memory_image {
        let _ = writeln!(out, "mem {addr} = {word}");
    }
    for c in &p.entry {
        let _ = writeln!(out, "const {} -> {}({})", c.value, c.dest.inst, c.dest.port);
    }
    let mut block = None;
    for inst in &p.instructions {
        if block != Some(inst.block) {
            let _ = writeln!(out, "wave {}", inst.block);
            block = Some(inst.block);
        }
        let _ = write!(out, "{}: {}", inst.id, mnemonic(&inst.opcode));
        if let Some(a) = inst.annotation {
            let _ = write!(out, " {a}");
        }
        match inst.opcode {
            Opcode::Steer => {
                out.push_str(" ->");
                write_dests(&mut out, &inst.outputs[0]);
                out.push_str(" ;");
                write_dests(&mut out, &inst.outputs[1]);
            }
            _ if inst.outputs.iter().any(|o| !o.is_empty()) => {
                out.push_str(" ->");
                write_dests(&mut out, &inst.outputs[0]);
            }
            _ => {}
        }
        out.push('\n');
    }
    // blocks without instructions still round-trip
    for b in &p.blocks {
        if !p.instructions.iter().any(|i| i.block == *b) {
            let _ = writeln!(out, "wave {b}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_memnop_wave() {
        let p = parse_program("const 1 -> 0(0)\nwave 0\n0: memnop <.,1,.>\n").unwrap();
        assert_eq!(p.instructions.len(), 1);
        assert_eq!(p.inst(0).opcode, Opcode::MemNop);
        assert_eq!(p.inst(0).annotation, Some(MemAnnotation::new(Link::None, 1, Link::None)));
    }

    #[test]
    fn duplicate_c_is_rejected() {
        let src = "wave 0\n0: mov -> 1(0), 2(0)\n1: store <.,2,.>\n2: store [.,2,.]\n";
        let err = parse_program(src).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::DuplicateC { block: 0, c: 2 });
        assert_eq!(err.line, 4);
    }

    #[test]
    fn store_halves_share_c() {
        let src = "wave 0\n0: mov -> 1(0), 2(0)\n1: storeaddr <.,1,.>\n2: storedata <.,1,.>\n";
        assert!(parse_program(src).is_ok());
    }

    #[test]
    fn undefined_reference_reports_position() {
        let err = parse_program("wave 0\n0: mov -> 7(0)\n").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UndefinedInstruction(7));
        assert_eq!((err.line, err.col), (2, 11));
    }

    #[test]
    fn syntax_errors_carry_columns() {
        let err = parse_program("wave 0\n0: frob\n").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Syntax(_)));
        assert_eq!((err.line, err.col), (2, 4));
        assert!(parse_program("wave x").is_err());
        assert!(parse_program("0: mov").unwrap_err().kind == ParseErrorKind::NoWave);
    }

    #[test]
    fn steer_and_immediates() {
        let src = "# loop\nwave 0\n0: add #-3 -> 1(0) # trailing\n1: steer -> 2(0) ; 2(1)\n2: select\n";
        let p = parse_program(src).unwrap();
        assert_eq!(p.inst(0).opcode, Opcode::Alu { op: AluOp::Add, imm: Some(-3) });
        assert_eq!(p.inst(1).outputs, vec![vec![Dest::new(2, 0)], vec![Dest::new(2, 1)]]);
        assert_eq!(parse_program(&emit_program(&p)).unwrap(), p);
    }
}
