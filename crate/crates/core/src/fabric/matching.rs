use std::collections::{BTreeMap, HashMap};

use super::Operand;
use crate::ir::{InstId, Word};

/// Per-PE `<Wave, ExeN>` thresholds: from a key wave onward (until the next
/// key) only operands with at least that execution number are accepted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecutionMap {
    pairs: BTreeMap<u32, u32>,
}

impl ExecutionMap {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        ExecutionMap { pairs: pairs.into_iter().collect() }
    }

    pub fn threshold(&self, wave: u32) -> u32 {
        self.pairs.range(..=wave).next_back().map_or(0, |(_, &e)| e)
    }

    /// Records that `(wave, exen)` is live; returns whether the map changed.
    /// Execution numbers never decrease with the wave number, so the new pair
    /// also covers every later key whose threshold it reaches.
    pub fn observe(&mut self, wave: u32, exen: u32) -> bool {
        if exen <= self.threshold(wave) {
            return false;
        }
        let later: Vec<u32> = self.pairs.range(wave + 1..).filter(|(_, &e)| e <= exen).map(|(&w, _)| w).collect();
        for w in later {
            self.pairs.remove(&w);
        }
        self.pairs.insert(wave, exen);
        true
    }

    pub fn pairs(&self) -> Vec<(u32, u32)> {
        self.pairs.iter().map(|(&w, &e)| (w, e)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryOutcome {
    Accepted,
    /// Accepted after erasing `erased` operands of an older execution.
    Superseded { erased: usize },
    /// Filtered by the Execution Map or by a newer execution in the table.
    DroppedStale,
    /// Table at capacity; the sender must retry.
    Full,
    /// Second operand for the same (wave, exen, dest, port).
    Duplicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadyGroup {
    pub wave: u32,
    pub exen: u32,
    pub dest: InstId,
    pub inputs: [Word; 3],
}

#[derive(Debug, Clone)]
struct Partial {
    exen: u32,
    slots: [Option<Word>; 3],
    arrival: u64,
}

/// Operands waiting for their partners, at most one execution per
/// (wave, instruction), plus the complete groups waiting to fire.
#[derive(Debug, Clone)]
pub struct MatchingTable {
    partial: HashMap<(u32, InstId), Partial>,
    ready: BTreeMap<(u32, u32, u64, InstId), [Word; 3]>,
    capacity: usize,
    stored: usize,
    pub map: ExecutionMap,
}

impl MatchingTable {
    pub fn new(capacity: usize) -> Self {
        MatchingTable {
            partial: HashMap::new(),
            ready: BTreeMap::new(),
            capacity,
            stored: 0,
            map: ExecutionMap::default(),
        }
    }

    /// Operands held, complete groups included.
    pub fn len(&self) -> usize {
        self.stored
    }

    pub fn is_empty(&self) -> bool {
        self.stored == 0
    }

    pub fn has_ready(&self) -> bool {
        !self.ready.is_empty()
    }

    /// Delivers `o` to an instruction with `arity` inputs; `arrival` orders
    /// groups for firing.
    pub fn deliver(&mut self, o: Operand, arity: usize, arrival: u64) -> DeliveryOutcome {
        let t = o.tag;
        if t.exen < self.map.threshold(t.wave) {
            return DeliveryOutcome::DroppedStale;
        }
        let key = (t.wave, t.dest);
        let mut erased = 0;
        match self.partial.get(&key) {
            Some(p) if p.exen > t.exen => return DeliveryOutcome::DroppedStale,
            Some(p) if p.exen < t.exen => {
                erased = p.slots.iter().flatten().count();
            }
            Some(p) if p.slots[t.port as usize].is_some() => return DeliveryOutcome::Duplicate,
            _ => {}
        }
        if self.stored - erased >= self.capacity {
            return DeliveryOutcome::Full;
        }
        self.map.observe(t.wave, t.exen);
        if erased > 0 {
            self.partial.remove(&key);
            self.stored -= erased;
        }
        let p = self.partial.entry(key).or_insert(Partial { exen: t.exen, slots: [None; 3], arrival });
        p.slots[t.port as usize] = Some(o.value);
        self.stored += 1;
        if p.slots[..arity].iter().all(Option::is_some) {
            let p = self.partial.remove(&key).expect("present");
            let inputs = p.slots.map(|s| s.unwrap_or(0));
            if self.ready.insert((t.wave, t.exen, p.arrival, t.dest), inputs).is_some() {
                return DeliveryOutcome::Duplicate;
            }
        }
        if erased > 0 {
            DeliveryOutcome::Superseded { erased }
        } else {
            DeliveryOutcome::Accepted
        }
    }

    /// Oldest complete group by (wave, exen, arrival). Complete groups are not
    /// re-filtered: once matched they fire even if a newer execution exists.
    pub fn pop_ready(&mut self, arity_of: impl Fn(InstId) -> usize) -> Option<ReadyGroup> {
        let ((wave, exen, _, dest), inputs) = self.ready.pop_first()?;
        self.stored -= arity_of(dest);
        Some(ReadyGroup { wave, exen, dest, inputs })
    }

    /// Returns a popped group that could not fire this cycle.
    pub fn push_back(&mut self, g: ReadyGroup, arity: usize, arrival: u64) {
        self.stored += arity;
        self.ready.insert((g.wave, g.exen, arrival, g.dest), g.inputs);
    }

    /// Drops incomplete groups (quiescence accounting); returns operands dropped.
    pub fn drain_partial(&mut self) -> usize {
        let n: usize = self.partial.values().map(|p| p.slots.iter().flatten().count()).sum();
        self.partial.clear();
        self.stored -= n;
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::Tag;

    fn op(wave: u32, exen: u32, dest: InstId, port: u8, value: Word) -> Operand {
        Operand { tag: Tag::new(wave, exen, dest, port), value }
    }

    #[test]
    fn map_replaces_later_pair() {
        let mut m = ExecutionMap::from_pairs([(0, 0), (5, 1)]);
        assert_eq!(m.threshold(4), 0);
        assert!(m.observe(3, 1));
        assert_eq!(m.pairs(), vec![(0, 0), (3, 1)]);
        assert!(!m.observe(7, 1));
        assert_eq!(m.threshold(9), 1);
    }

    #[test]
    fn map_filters_older_executions() {
        let mut t = MatchingTable::new(16);
        t.map = ExecutionMap::from_pairs([(2, 1)]);
        assert_eq!(t.deliver(op(3, 0, 4, 0, 1), 2, 0), DeliveryOutcome::DroppedStale);
        assert_eq!(t.deliver(op(1, 0, 4, 0, 1), 2, 1), DeliveryOutcome::Accepted);
    }

    #[test]
    fn checkup_erases_older_operand() {
        let mut t = MatchingTable::new(16);
        assert_eq!(t.deliver(op(7, 0, 12, 0, 5), 2, 0), DeliveryOutcome::Accepted);
        assert_eq!(t.deliver(op(7, 1, 12, 1, 6), 2, 1), DeliveryOutcome::Superseded { erased: 1 });
        assert_eq!(t.len(), 1);
        // The older execution can no longer complete.
        assert_eq!(t.deliver(op(7, 0, 12, 1, 6), 2, 2), DeliveryOutcome::DroppedStale);
        assert!(!t.has_ready());
    }

    #[test]
    fn first_operand_accepted_unconditionally() {
        let mut t = MatchingTable::new(1);
        assert_eq!(t.deliver(op(0, 0, 0, 0, 1), 2, 0), DeliveryOutcome::Accepted);
        assert_eq!(t.deliver(op(0, 0, 1, 0, 1), 2, 1), DeliveryOutcome::Full);
        assert_eq!(t.deliver(op(0, 0, 0, 0, 1), 2, 1), DeliveryOutcome::Duplicate);
    }

    #[test]
    fn complete_groups_of_different_executions_fire_separately() {
        let mut t = MatchingTable::new(16);
        t.deliver(op(4, 0, 3, 0, 10), 2, 0);
        t.deliver(op(4, 0, 3, 1, 1), 2, 1);
        t.deliver(op(4, 1, 3, 0, 11), 2, 2);
        t.deliver(op(4, 1, 3, 1, 0), 2, 3);
        let a = t.pop_ready(|_| 2);
        let b = t.pop_ready(|_| 2);
        let (a, b) = (a.unwrap(), b.unwrap());
        assert_eq!((a.exen, a.inputs[0], a.inputs[1]), (0, 10, 1));
        assert_eq!((b.exen, b.inputs[0], b.inputs[1]), (1, 11, 0));
        assert!(t.is_empty());
    }

    #[test]
    fn oldest_wave_fires_first() {
        let mut t = MatchingTable::new(16);
        t.deliver(op(9, 0, 1, 0, 0), 1, 0);
        t.deliver(op(2, 0, 2, 0, 0), 1, 1);
        assert_eq!(t.pop_ready(|_| 1).unwrap().wave, 2);
    }
}
