//! Transactional state for speculative waves: read sets (Wave-Context-
//! Tables), the MemOp-History undo/redo log with its Search Catalog, and
//! hazard detection and resolution between waves.
//!
//! Entries are ordered by `(wave, C)`, which is the sequential order of the
//! operations, independent of the order they were applied in.

use std::collections::{BTreeMap, BTreeSet};

use crate::fabric::Operand;
use crate::ir::Word;
use crate::memory::MemoryModel;

/// Word-addressed storage the history can read and restore.
pub trait Memory {
    fn read(&self, addr: u64) -> Word;
    fn write(&mut self, addr: u64, value: Word);
}

impl Memory for MemoryModel {
    fn read(&self, addr: u64) -> Word {
        MemoryModel::read(self, addr)
    }

    fn write(&mut self, addr: u64, value: Word) {
        MemoryModel::write(self, addr, value)
    }
}

impl Memory for BTreeMap<u64, Word> {
    fn read(&self, addr: u64) -> Word {
        self.get(&addr).copied().unwrap_or(0)
    }

    fn write(&mut self, addr: u64, value: Word) {
        self.insert(addr, value);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capture {
    Captured,
    /// Table full: the Wave-Advance keeps its operand and retries.
    Blocked,
}

/// Read sets of speculative waves.
#[derive(Debug, Clone, Default)]
pub struct WaveContextTables {
    tables: BTreeMap<u32, Vec<Operand>>,
    pub capacity: Option<usize>,
}

impl WaveContextTables {
    pub fn new(capacity: Option<usize>) -> Self {
        WaveContextTables { tables: BTreeMap::new(), capacity }
    }

    pub fn record(&mut self, o: Operand) -> Capture {
        let t = self.tables.entry(o.tag.wave).or_default();
        if self.capacity.is_some_and(|c| t.len() >= c) {
            return Capture::Blocked;
        }
        t.push(o);
        Capture::Captured
    }

    pub fn get(&self, wave: u32) -> &[Operand] {
        self.tables.get(&wave).map_or(&[], Vec::as_slice)
    }

    pub fn erase(&mut self, wave: u32) {
        self.tables.remove(&wave);
    }

    /// Rollback step 3: clears the tables of waves after `x`.
    pub fn clear_above(&mut self, x: u32) {
        self.tables.retain(|&w, _| w <= x);
    }

    /// Rollback step 6: moves wave `x`'s read set to `exen` and returns it.
    pub fn resend(&mut self, x: u32, exen: u32) -> Vec<Operand> {
        let t = self.tables.entry(x).or_default();
        for o in t.iter_mut() {
            o.tag.exen = exen;
        }
        t.clone()
    }

    pub fn waves(&self) -> Vec<u32> {
        self.tables.keys().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryKind {
    Load,
    Store,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemOpHistoryEntry {
    pub wave: u32,
    pub c: u32,
    pub kind: HistoryKind,
    /// Stores: the value the address held sequentially before this store.
    /// Loads: the value read.
    pub backup: Word,
    pub address: u64,
    /// Stores: the datum written.
    pub data: Word,
}

/// Log of memory operations executed by speculative waves.
#[derive(Debug, Clone, Default)]
pub struct MemOpHistory {
    entries: BTreeMap<(u32, u32), MemOpHistoryEntry>,
    by_address: BTreeMap<u64, BTreeSet<(u32, u32)>>,
}

impl MemOpHistory {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, wave: u32, c: u32) -> Option<&MemOpHistoryEntry> {
        self.entries.get(&(wave, c))
    }

    pub fn iter(&self) -> impl Iterator<Item = &MemOpHistoryEntry> {
        self.entries.values()
    }

    fn insert(&mut self, e: MemOpHistoryEntry) {
        let key = (e.wave, e.c);
        assert!(self.entries.insert(key, e).is_none(), "duplicate history entry {key:?}");
        self.by_address.entry(e.address).or_default().insert(key);
    }

    fn remove(&mut self, key: (u32, u32)) -> Option<MemOpHistoryEntry> {
        let e = self.entries.remove(&key)?;
        let set = self.by_address.get_mut(&e.address).expect("indexed");
        set.remove(&key);
        if set.is_empty() {
            self.by_address.remove(&e.address);
        }
        Some(e)
    }

    /// The sequentially first entry at `addr` from a wave after `wave`.
    pub fn first_later(&self, addr: u64, wave: u32) -> Option<&MemOpHistoryEntry> {
        let set = self.by_address.get(&addr)?;
        set.range((wave + 1, 0)..).next().map(|k| &self.entries[k])
    }
}

/// Per-wave index into the history.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchCatalog {
    index: BTreeMap<u32, Vec<u32>>,
}

impl SearchCatalog {
    pub fn lines(&self) -> Vec<(u32, Vec<u32>)> {
        self.index.iter().map(|(&w, cs)| (w, cs.clone())).collect()
    }

    pub fn wave(&self, wave: u32) -> &[u32] {
        self.index.get(&wave).map_or(&[], Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    /// A later wave already read the address; it must be rolled back before
    /// this store can execute.
    RawAbort { reader: u32 },
    /// A later wave already stored to the address; this store only updates
    /// the backup chain.
    WawAbsorbed { later: u32 },
    /// A later wave already stored to the address; the load returns the
    /// value logged as that store's backup.
    WarForwarded { later: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Load,
    Store(Word),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub outcome: Outcome,
    /// Value returned to a load, or datum of a store.
    pub value: Word,
    /// Whether memory was read or written (as opposed to served from or
    /// absorbed into the history).
    pub touched_memory: bool,
}

/// MemOp-History plus Search Catalog, kept in step.
#[derive(Debug, Clone, Default)]
pub struct Transactions {
    pub moh: MemOpHistory,
    pub catalog: SearchCatalog,
}

impl Transactions {
    /// Hazard check for an operation of `wave` on `addr` against later waves.
    pub fn detect(&self, wave: u32, access: Access, addr: u64) -> Outcome {
        match (self.moh.first_later(addr, wave), access) {
            (None, _) => Outcome::Clean,
            (Some(e), Access::Store(_)) if e.kind == HistoryKind::Load => Outcome::RawAbort { reader: e.wave },
            (Some(e), Access::Store(_)) => Outcome::WawAbsorbed { later: e.wave },
            (Some(e), Access::Load) if e.kind == HistoryKind::Store => Outcome::WarForwarded { later: e.wave },
            (Some(_), Access::Load) => Outcome::Clean,
        }
    }

    /// Executes one operation. On `RawAbort` nothing is changed: the caller
    /// rolls back the reader and executes again. `speculative` operations are
    /// logged.
    pub fn execute<M: Memory>(
        &mut self,
        mem: &mut M,
        wave: u32,
        c: u32,
        access: Access,
        addr: u64,
        speculative: bool,
    ) -> Resolution {
        let outcome = self.detect(wave, access, addr);
        let later = self.moh.first_later(addr, wave).map(|e| ((e.wave, e.c), e.backup));
        let (kind, backup, data, value, touched) = match (access, later) {
            (Access::Load, None) => {
                let v = mem.read(addr);
                (HistoryKind::Load, v, 0, v, true)
            }
            (Access::Load, Some((_, b))) => (HistoryKind::Load, b, 0, b, false),
            (Access::Store(d), _) if matches!(outcome, Outcome::RawAbort { .. }) => {
                return Resolution { outcome, value: d, touched_memory: false };
            }
            (Access::Store(d), None) => {
                let old = mem.read(addr);
                mem.write(addr, d);
                (HistoryKind::Store, old, d, d, true)
            }
            (Access::Store(d), Some((key, b))) => {
                self.moh.entries.get_mut(&key).expect("later entry").backup = d;
                (HistoryKind::Store, b, d, d, false)
            }
        };
        if speculative {
            self.moh.insert(MemOpHistoryEntry { wave, c, kind, backup, address: addr, data });
            self.catalog.index.entry(wave).or_default().push(c);
        }
        Resolution { outcome, value, touched_memory: touched }
    }

    /// Commit of a predecessor made `wave` non-speculative: drops its log.
    pub fn erase_wave(&mut self, wave: u32) {
        for c in self.catalog.index.remove(&wave).unwrap_or_default() {
            self.moh.remove((wave, c));
        }
    }

    /// Rollback steps 1 and 2: erases catalog lines and history entries of
    /// waves `>= x`, undoing their stores in reverse sequential order.
    /// Returns the addresses written back.
    pub fn rollback<M: Memory>(&mut self, mem: &mut M, x: u32) -> Vec<u64> {
        let lines = self.catalog.index.split_off(&x);
        let mut keys: Vec<(u32, u32)> = lines.into_iter().flat_map(|(w, cs)| cs.into_iter().map(move |c| (w, c))).collect();
        keys.sort_unstable();
        let mut written = Vec::new();
        for key in keys.into_iter().rev() {
            let e = self.moh.remove(key).expect("catalog mirrors history");
            if e.kind == HistoryKind::Store {
                mem.write(e.address, e.backup);
                written.push(e.address);
            }
        }
        written
    }

    /// Whether any history entry or catalog line belongs to a wave `>= x`.
    pub fn has_entries_from(&self, x: u32) -> bool {
        self.moh.entries.range((x, 0)..).next().is_some() || self.catalog.index.range(x..).next().is_some()
    }

    /// Catalog and history describe the same entries.
    pub fn consistent(&self) -> bool {
        let from_catalog: BTreeSet<(u32, u32)> =
            self.catalog.index.iter().flat_map(|(&w, cs)| cs.iter().map(move |&c| (w, c))).collect();
        let from_moh: BTreeSet<(u32, u32)> = self.moh.entries.keys().copied().collect();
        let indexed: BTreeSet<(u32, u32)> = self.moh.by_address.values().flatten().copied().collect();
        from_catalog == from_moh && indexed == from_moh
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::Tag;

    const A: u64 = 40;

    fn mem(v: Word) -> BTreeMap<u64, Word> {
        [(A, v)].into_iter().collect()
    }

    #[test]
    fn raw_aborts_reader_then_store_executes() {
        let mut m = mem(3);
        let mut t = Transactions::default();
        let r = t.execute(&mut m, 5, 1, Access::Load, A, true);
        assert_eq!(r.value, 3);
        let r = t.execute(&mut m, 3, 1, Access::Store(9), A, true);
        assert_eq!(r.outcome, Outcome::RawAbort { reader: 5 });
        assert_eq!(m[&A], 3);
        t.rollback(&mut m, 5);
        let r = t.execute(&mut m, 3, 1, Access::Store(9), A, true);
        assert_eq!(r.outcome, Outcome::Clean);
        assert_eq!(m[&A], 9);
        assert_eq!(t.moh.get(3, 1).unwrap().backup, 3);
    }

    #[test]
    fn waw_is_absorbed_into_backups() {
        let mut m = mem(3);
        let mut t = Transactions::default();
        t.execute(&mut m, 5, 1, Access::Store(7), A, true);
        let r = t.execute(&mut m, 3, 1, Access::Store(9), A, true);
        assert_eq!(r.outcome, Outcome::WawAbsorbed { later: 5 });
        assert_eq!(m[&A], 7);
        assert_eq!(t.moh.get(3, 1).unwrap().backup, 3);
        assert_eq!(t.moh.get(5, 1).unwrap().backup, 9);
        // Undoing wave 5 exposes wave 3's store; undoing from 3 restores 3.
        let mut m2 = m.clone();
        let mut t2 = t.clone();
        t2.rollback(&mut m2, 5);
        assert_eq!(m2[&A], 9);
        t.rollback(&mut m, 3);
        assert_eq!(m[&A], 3);
        assert!(t.moh.is_empty() && t.consistent());
    }

    #[test]
    fn war_is_served_from_backup() {
        let mut m = mem(3);
        let mut t = Transactions::default();
        t.execute(&mut m, 5, 1, Access::Store(7), A, true);
        let r = t.execute(&mut m, 3, 1, Access::Load, A, true);
        assert_eq!((r.outcome, r.value), (Outcome::WarForwarded { later: 5 }, 3));
        assert_eq!(m[&A], 7);
    }

    #[test]
    fn nonspeculative_operations_are_not_logged() {
        let mut m = mem(1);
        let mut t = Transactions::default();
        t.execute(&mut m, 0, 1, Access::Store(2), A, false);
        assert!(t.moh.is_empty());
        assert_eq!(m[&A], 2);
    }

    #[test]
    fn single_store_undo() {
        let mut m = mem(5);
        let mut t = Transactions::default();
        t.execute(&mut m, 4, 2, Access::Store(7), A, true);
        assert_eq!(t.rollback(&mut m, 4), vec![A]);
        assert_eq!(m[&A], 5);
        assert!(!t.has_entries_from(0));
    }

    #[test]
    fn commit_erases_only_that_wave() {
        let mut m = mem(0);
        let mut t = Transactions::default();
        t.execute(&mut m, 2, 1, Access::Store(1), A, true);
        t.execute(&mut m, 3, 1, Access::Load, A + 1, true);
        t.erase_wave(2);
        assert!(t.moh.get(2, 1).is_none() && t.moh.get(3, 1).is_some());
        assert_eq!(t.catalog.lines(), vec![(3, vec![1])]);
        assert!(t.consistent());
    }

    #[test]
    fn read_sets_capture_block_and_resend() {
        let mut w = WaveContextTables::new(Some(1));
        let o = Operand { tag: Tag::new(6, 0, 3, 0), value: 11 };
        assert_eq!(w.record(o), Capture::Captured);
        assert_eq!(w.record(o), Capture::Blocked);
        w.record(Operand { tag: Tag::new(7, 0, 3, 0), value: 1 });
        w.clear_above(6);
        assert_eq!(w.waves(), vec![6]);
        let again = w.resend(6, 2);
        assert_eq!((again[0].tag.exen, again[0].value), (2, 11));
        assert!(w.resend(9, 2).is_empty());
    }
}
