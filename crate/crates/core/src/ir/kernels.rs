//! Generators for the benchmark kernels.
//!
//! The MATRIX family computes, for each matrix, its determinant (cofactor
//! expansion emitted as straight-line code) and the sum of every line. Each
//! loop iteration is one wave. Variants:
//!
//! * `*-STORES*` first run an initialisation loop, one element per wave. The
//!   element values come from a loop-carried xorshift generator, so the data
//!   half of every store arrives strictly after the previous one.
//! * `*-MIN*` repeat the computation loop `repeat` times (outer loop).
//! * `*-DEP` make iteration `n/2 - 1` write a scratch word that iteration
//!   `n/2` reads and folds into its determinant.
//!
//! VECTOR-FULL-DEP walks a vector, updating `v[i]` in place while adjacent
//! iterations collide on side cells: even and odd iterations write a shared
//! cell at opposite ends of their bodies (write-after-write), one pair passes
//! a value through memory late-to-early (read-after-write) and another pair
//! reads a cell late that its successor overwrites early (write-after-read).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::builder::{ProgramBuilder, Value};
use super::types::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KernelKind {
    #[serde(rename = "MATRIX")]
    Matrix,
    #[serde(rename = "MATRIX-DEP")]
    MatrixDep,
    #[serde(rename = "MATRIX-STORES")]
    MatrixStores,
    #[serde(rename = "MATRIX-STORES-DEP")]
    MatrixStoresDep,
    #[serde(rename = "MATRIX-STORES-MIN")]
    MatrixStoresMin,
    #[serde(rename = "MATRIX-STORES-MIN-DEP")]
    MatrixStoresMinDep,
    #[serde(rename = "VECTOR-FULL-DEP")]
    VectorFullDep,
}

impl KernelKind {
    pub const ALL: [KernelKind; 7] = [
        KernelKind::Matrix,
        KernelKind::MatrixDep,
        KernelKind::MatrixStores,
        KernelKind::MatrixStoresDep,
        KernelKind::MatrixStoresMin,
        KernelKind::MatrixStoresMinDep,
        KernelKind::VectorFullDep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Matrix => "MATRIX",
            KernelKind::MatrixDep => "MATRIX-DEP",
            KernelKind::MatrixStores => "MATRIX-STORES",
            KernelKind::MatrixStoresDep => "MATRIX-STORES-DEP",
            KernelKind::MatrixStoresMin => "MATRIX-STORES-MIN",
            KernelKind::MatrixStoresMinDep => "MATRIX-STORES-MIN-DEP",
            KernelKind::VectorFullDep => "VECTOR-FULL-DEP",
        }
    }

    pub fn has_init(self) -> bool {
        matches!(
            self,
            KernelKind::MatrixStores
                | KernelKind::MatrixStoresDep
                | KernelKind::MatrixStoresMin
                | KernelKind::MatrixStoresMinDep
        )
    }

    pub fn repeats(self) -> bool {
        matches!(self, KernelKind::MatrixStoresMin | KernelKind::MatrixStoresMinDep)
    }

    pub fn has_dep(self) -> bool {
        matches!(
            self,
            KernelKind::MatrixDep | KernelKind::MatrixStoresDep | KernelKind::MatrixStoresMinDep
        )
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown kernel `{0}`")]
pub struct UnknownKernel(pub String);

impl FromStr for KernelKind {
    type Err = UnknownKernel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        KernelKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| UnknownKernel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelParams {
    pub matrices: u32,
    pub dim: u32,
    pub repeat: u32,
    pub vector_len: u32,
}

impl Default for KernelParams {
    /// Desk scale.
    fn default() -> Self {
        Self { matrices: 50, dim: 3, repeat: 3, vector_len: 100 }
    }
}

impl KernelParams {
    pub fn full_scale() -> Self {
        Self { matrices: 500, dim: 3, repeat: 10, vector_len: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("invalid kernel parameter: {0}")]
    InvalidParam(String),
}

pub const MATRIX_BASE: u64 = 0x4000;
pub const LINE_SUM_BASE: u64 = 0x8000 + 512;
pub const DET_BASE: u64 = 0xC000 + 768;
pub const SCRATCH_BASE: u64 = 0xF000 + 900;
pub const VECTOR_BASE: u64 = 0x4000;

/// Largest supported matrix dimension (cofactor expansion grows factorially).
pub const MAX_DIM: u32 = 5;

const INIT_SEED: Word = 0x2545_F491_4F6C_DD1D;
const INIT_ROUNDS: usize = 2;
const VECTOR_LATE_CHAIN: u32 = 8;

/// Value of the late shared-cell store of a VECTOR-FULL-DEP iteration that loaded `t`.
pub fn vector_late(t: Word) -> Word {
    t.wrapping_mul(3i64.pow(VECTOR_LATE_CHAIN))
}

/// Address map of the MATRIX family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixLayout {
    pub dim: u32,
}

impl MatrixLayout {
    pub fn element(&self, m: u32, r: u32, c: u32) -> u64 {
        MATRIX_BASE + (m * self.dim * self.dim + r * self.dim + c) as u64
    }

    pub fn line_sum(&self, m: u32, r: u32) -> u64 {
        LINE_SUM_BASE + (m * self.dim + r) as u64
    }

    pub fn det(&self, m: u32) -> u64 {
        DET_BASE + m as u64
    }

    /// Scratch word that iteration `m` stores its determinant to.
    pub fn scratch_store(&self, m: u32, dep_writer: i64) -> u64 {
        if m as i64 == dep_writer {
            SCRATCH_BASE
        } else {
            SCRATCH_BASE + 2 + 2 * m as u64
        }
    }

    /// Word that iteration `m` loads ahead of its determinant; only the
    /// reader's value is used.
    pub fn scratch_load(&self, m: u32, dep_writer: i64) -> u64 {
        if m as i64 == dep_writer + 1 {
            SCRATCH_BASE
        } else {
            self.element(m, 0, 0)
        }
    }
}

/// Iteration index writing the shared scratch word in `*-DEP` kernels.
pub fn dep_writer(matrices: u32) -> i64 {
    matrices as i64 / 2 - 1
}

/// One step of the loop-carried initialisation generator.
pub fn init_step(x: Word) -> Word {
    let mut x = x;
    for _ in 0..INIT_ROUNDS {
        x ^= x.wrapping_shl(13);
        x ^= ((x as u64) >> 7) as Word;
        x ^= x.wrapping_shl(17);
    }
    x
}

/// Matrix element value stored for generator state `x`.
pub fn init_value(x: Word) -> Word {
    (x & 0xff) - 128
}

pub fn init_seed() -> Word {
    INIT_SEED
}

fn check(params: &KernelParams, kind: KernelKind) -> Result<(), KernelError> {
    let bad = |m: &str| Err(KernelError::InvalidParam(m.to_string()));
    if kind == KernelKind::VectorFullDep {
        if params.vector_len < 2 {
            return bad("vector length must be at least 2");
        }
        return Ok(());
    }
    if params.matrices == 0 {
        return bad("matrix count must be positive");
    }
    if params.dim == 0 || params.dim > MAX_DIM {
        return bad(&format!("matrix dimension must be in 1..={MAX_DIM}"));
    }
    if kind.repeats() && params.repeat == 0 {
        return bad("repeat count must be positive");
    }
    Ok(())
}

pub fn build_kernel(kind: KernelKind, params: &KernelParams) -> Result<Program, KernelError> {
    check(params, kind)?;
    let mut b = ProgramBuilder::new();
    let last = if kind == KernelKind::VectorFullDep {
        vector_full_dep(&mut b, params.vector_len)
    } else {
        matrix_family(&mut b, kind, params)
    };
    b.block(&[last], |b, v| {
        b.output(v[0]);
        Vec::new()
    });
    Ok(b.finish())
}

fn matrix_family(b: &mut ProgramBuilder, kind: KernelKind, params: &KernelParams) -> Value {
    let layout = MatrixLayout { dim: params.dim };
    let n = params.matrices as Word;
    let counter = if kind.has_init() {
        let j0 = b.entry(0);
        let x0 = b.entry(INIT_SEED);
        let total = (params.matrices * params.dim * params.dim) as Word;
        let exits = b.do_while(&[j0, x0], |b, v| {
            let (j, x) = (v[0], v[1]);
            let addr = b.alu_imm(AluOp::Add, j, MATRIX_BASE as Word);
            let mut s = x;
            for _ in 0..INIT_ROUNDS {
                let t = b.alu_imm(AluOp::Shl, s, 13);
                s = b.alu(AluOp::Xor, s, t);
                let t = b.alu_imm(AluOp::Shr, s, 7);
                s = b.alu(AluOp::Xor, s, t);
                let t = b.alu_imm(AluOp::Shl, s, 17);
                s = b.alu(AluOp::Xor, s, t);
            }
            let low = b.alu_imm(AluOp::And, s, 0xff);
            let val = b.alu_imm(AluOp::Sub, low, 128);
            b.store(addr, val);
            let next = b.alu_imm(AluOp::Add, j, 1);
            let cond = b.alu_imm(AluOp::Lt, next, total);
            (vec![next, s], cond)
        });
        // Triggered by the generator state so the computation cannot overtake it.
        b.block(&exits[1..], |b, v| vec![b.konst(0, v[0])])[0]
    } else {
        b.entry(0)
    };

    let dep = kind.has_dep().then(|| dep_writer(params.matrices));
    if kind.repeats() {
        let repeat = params.repeat as Word;
        let exits = b.do_while(&[counter], |b, v| {
            let r = v[0];
            let zero = b.konst(0, r);
            let inner = b.do_while(&[zero, r], |b, v| {
                let next = compute_iteration(b, &layout, dep, v[0]);
                let cond = b.alu_imm(AluOp::Lt, next, n);
                (vec![next, v[1]], cond)
            });
            let latch = b.block(&inner[1..], |b, v| {
                let next = b.alu_imm(AluOp::Add, v[0], 1);
                let cond = b.alu_imm(AluOp::Lt, next, repeat);
                vec![next, cond]
            });
            (vec![latch[0]], latch[1])
        });
        exits[0]
    } else {
        let exits = b.do_while(&[counter], |b, v| {
            let next = compute_iteration(b, &layout, dep, v[0]);
            let cond = b.alu_imm(AluOp::Lt, next, n);
            (vec![next], cond)
        });
        exits[0]
    }
}

/// Emits one determinant/line-sum iteration for matrix `i`; returns `i + 1`.
fn compute_iteration(
    b: &mut ProgramBuilder,
    layout: &MatrixLayout,
    dep: Option<i64>,
    i: Value,
) -> Value {
    let dim = layout.dim as Word;
    let scaled = b.alu_imm(AluOp::Mul, i, dim * dim);
    let base = b.alu_imm(AluOp::Add, scaled, MATRIX_BASE as Word);

    // Non-readers load their own first element (warm, cheap) and discard it.
    let scratch_in = dep.map(|k| {
        let is_reader = b.alu_imm(AluOp::Eq, i, k + 1);
        let shared = b.konst(SCRATCH_BASE as Word, i);
        let addr = b.select(shared, base, is_reader);
        let s = b.load(addr);
        let zero = b.konst(0, i);
        b.select(s, zero, is_reader)
    });

    let mut elems = Vec::with_capacity(layout.dim as usize);
    for r in 0..dim {
        let mut row = Vec::with_capacity(layout.dim as usize);
        for c in 0..dim {
            let addr = if r == 0 && c == 0 { base } else { b.alu_imm(AluOp::Add, base, r * dim + c) };
            row.push(b.load(addr));
        }
        elems.push(row);
    }

    let row_base = b.alu_imm(AluOp::Mul, i, dim);
    for (r, row) in elems.iter().enumerate() {
        let sum = row[1..].iter().fold(row[0], |acc, &e| b.alu(AluOp::Add, acc, e));
        let addr = b.alu_imm(AluOp::Add, row_base, LINE_SUM_BASE as Word + r as Word);
        b.store(addr, sum);
    }

    let det = determinant(b, &elems);
    let det = match scratch_in {
        Some(s) => b.alu(AluOp::Add, det, s),
        None => det,
    };
    let det_addr = b.alu_imm(AluOp::Add, i, DET_BASE as Word);
    b.store(det_addr, det);

    if let Some(k) = dep {
        let is_writer = b.alu_imm(AluOp::Eq, i, k);
        let shared = b.konst(SCRATCH_BASE as Word, i);
        let twice = b.alu_imm(AluOp::Mul, i, 2);
        let own = b.alu_imm(AluOp::Add, twice, SCRATCH_BASE as Word + 2);
        let addr = b.select(shared, own, is_writer);
        b.store(addr, det);
    }
    b.alu_imm(AluOp::Add, i, 1)
}

fn determinant(b: &mut ProgramBuilder, m: &[Vec<Value>]) -> Value {
    match m.len() {
        1 => m[0][0],
        2 => {
            let ad = b.alu(AluOp::Mul, m[0][0], m[1][1]);
            let bc = b.alu(AluOp::Mul, m[0][1], m[1][0]);
            b.alu(AluOp::Sub, ad, bc)
        }
        n => {
            let mut acc: Option<Value> = None;
            for j in 0..n {
                let minor: Vec<Vec<Value>> = m[1..]
                    .iter()
                    .map(|row| row.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, v)| *v).collect())
                    .collect();
                let sub = determinant(b, &minor);
                let term = b.alu(AluOp::Mul, m[0][j], sub);
                acc = Some(match acc {
                    None => term,
                    Some(a) if j % 2 == 1 => b.alu(AluOp::Sub, a, term),
                    Some(a) => b.alu(AluOp::Add, a, term),
                });
            }
            acc.expect("n >= 3")
        }
    }
}

/// Initial contents of the VECTOR-FULL-DEP vector.
pub fn vector_initial(j: u64) -> Word {
    3 * j as Word + 1
}

/// Address map of VECTOR-FULL-DEP: the vector, then three shared cells,
/// then four private cells per iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VectorLayout {
    pub len: u32,
}

impl VectorLayout {
    pub fn element(&self, j: u64) -> u64 {
        VECTOR_BASE + j
    }

    /// Written by every iteration: early by even ones, late by odd ones.
    pub fn shared(&self) -> u64 {
        VECTOR_BASE + self.len as u64
    }

    /// Written late by `raw_writer`, read early by the next iteration.
    pub fn raw_cell(&self) -> u64 {
        VECTOR_BASE + self.len as u64 + 1
    }

    /// Read late by `war_reader`, written early by the next iteration.
    pub fn war_cell(&self) -> u64 {
        VECTOR_BASE + self.len as u64 + 2
    }

    pub fn private(&self, i: u64, slot: u64) -> u64 {
        VECTOR_BASE + self.len as u64 + 4 + 4 * i + slot
    }

    pub fn raw_writer(&self) -> i64 {
        dep_writer(self.len)
    }

    pub fn war_reader(&self) -> i64 {
        self.len as i64 / 4
    }
}

fn vector_full_dep(b: &mut ProgramBuilder, len: u32) -> Value {
    let l = VectorLayout { len };
    for j in 0..len as u64 {
        b.set_memory(l.element(j), vector_initial(j));
    }
    let i0 = b.entry(1);
    let exits = b.do_while(&[i0], |b, v| {
        let i = v[0];
        let scaled = b.alu_imm(AluOp::Mul, i, 4);
        let own = b.alu_imm(AluOp::Add, scaled, l.private(0, 0) as Word);
        let own1 = b.alu_imm(AluOp::Add, own, 1);
        let own2 = b.alu_imm(AluOp::Add, own, 2);
        let own3 = b.alu_imm(AluOp::Add, own, 3);
        let odd = b.alu_imm(AluOp::And, i, 1);
        let even = b.alu_imm(AluOp::Eq, odd, 0);
        let shared = |b: &mut ProgramBuilder, addr: u64, own: Value, pred: Value| {
            let c = b.konst(addr as Word, i);
            b.select(c, own, pred)
        };
        let raw_reader = b.alu_imm(AluOp::Eq, i, l.raw_writer() + 1);
        let raw_writer = b.alu_imm(AluOp::Eq, i, l.raw_writer());
        let war_writer = b.alu_imm(AluOp::Eq, i, l.war_reader() + 1);
        let war_reader = b.alu_imm(AluOp::Eq, i, l.war_reader());

        let cur = b.alu_imm(AluOp::Add, i, VECTOR_BASE as Word);
        let t = b.load(cur);
        let a = shared(b, l.raw_cell(), own, raw_reader);
        let p = b.load(a);
        let a = shared(b, l.shared(), own1, even);
        b.store(a, i);
        let a = shared(b, l.war_cell(), own2, war_writer);
        b.store(a, i);
        let tp = b.alu(AluOp::Add, t, p);
        let sum = b.alu(AluOp::Add, tp, i);
        b.store(cur, sum);
        // A dependent chain keeps the odd iterations' shared-cell store well
        // behind the next iteration's early one.
        let mut late = t;
        for _ in 0..VECTOR_LATE_CHAIN {
            late = b.alu_imm(AluOp::Mul, late, 3);
        }
        let a = shared(b, l.shared(), own1, odd);
        b.store(a, late);
        let a = shared(b, l.raw_cell(), own, raw_writer);
        b.store(a, t);
        let a = shared(b, l.war_cell(), own2, war_reader);
        let q = b.load(a);
        let q1 = b.alu_imm(AluOp::Add, q, 1);
        b.store(own3, q1);

        let next = b.alu_imm(AluOp::Add, i, 1);
        let cond = b.alu_imm(AluOp::Lt, next, len as Word);
        (vec![next], cond)
    });
    exits[0]
}
