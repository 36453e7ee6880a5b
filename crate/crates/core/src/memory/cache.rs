use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ir::Word;

/// Cache geometry and latencies. Addresses are word addresses; a 32-bit L1
/// line holds one word and a 128-bit L2 line holds four.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub l1_lines: u64,
    pub l1_latency: u64,
    pub l2_lines: u64,
    pub l2_ways: u64,
    pub l2_line_words: u64,
    pub l2_latency: u64,
    pub main_latency: u64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            l1_lines: 1024,
            l1_latency: 1,
            l2_lines: 131_072,
            l2_ways: 4,
            l2_line_words: 4,
            l2_latency: 7,
            main_latency: 100,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Line {
    tag: u64,
    /// Cycle at which an in-flight fill completes.
    ready_at: u64,
    last_use: u64,
}

/// Which level served an access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    L1,
    L2,
    Main,
}

/// Flat word contents plus an inclusive L1 (direct-mapped) / L2
/// (set-associative, LRU) hierarchy that only determines latency.
#[derive(Debug, Clone)]
pub struct MemoryModel {
    cfg: MemoryConfig,
    contents: BTreeMap<u64, Word>,
    l1: Vec<Option<Line>>,
    l2: BTreeMap<u64, Vec<Line>>,
}

impl MemoryModel {
    pub fn new(cfg: MemoryConfig, image: BTreeMap<u64, Word>) -> Self {
        let l1 = vec![None; cfg.l1_lines.max(1) as usize];
        MemoryModel { cfg, contents: image, l1, l2: BTreeMap::new() }
    }

    pub fn read(&self, addr: u64) -> Word {
        self.contents.get(&addr).copied().unwrap_or(0)
    }

    pub fn write(&mut self, addr: u64, value: Word) {
        self.contents.insert(addr, value);
    }

    pub fn contents(&self) -> &BTreeMap<u64, Word> {
        &self.contents
    }

    pub fn into_contents(self) -> BTreeMap<u64, Word> {
        self.contents
    }

    fn l2_sets(&self) -> u64 {
        (self.cfg.l2_lines / self.cfg.l2_ways.max(1)).max(1)
    }

    /// Touches `addr` at cycle `now` (write-allocate for stores) and returns
    /// the access latency and serving level.
    pub fn access(&mut self, addr: u64, now: u64) -> (u64, Level) {
        let idx = (addr % self.l1.len() as u64) as usize;
        if let Some(l) = self.l1[idx].filter(|l| l.tag == addr) {
            return (self.cfg.l1_latency.max(l.ready_at.saturating_sub(now)), Level::L1);
        }
        let words = self.cfg.l2_line_words.max(1);
        let line = addr / words;
        let sets = self.l2_sets();
        let ways = self.cfg.l2_ways.max(1) as usize;
        let set = self.l2.entry(line % sets).or_default();
        let (latency, level) = match set.iter_mut().find(|l| l.tag == line) {
            Some(l) => {
                l.last_use = now;
                (self.cfg.l2_latency.max(l.ready_at.saturating_sub(now)), Level::L2)
            }
            None => {
                let latency = self.cfg.main_latency;
                let fresh = Line { tag: line, ready_at: now + latency, last_use: now };
                let mut evicted = None;
                if set.len() < ways {
                    set.push(fresh);
                } else {
                    let victim = set.iter_mut().min_by_key(|l| (l.last_use, l.tag)).expect("non-empty set");
                    evicted = Some(victim.tag);
                    *victim = fresh;
                }
                if let Some(old) = evicted {
                    // Inclusion: drop the evicted line's words from L1.
                    for a in old * words..(old + 1) * words {
                        let i = (a % self.l1.len() as u64) as usize;
                        if self.l1[i].is_some_and(|l| l.tag == a) {
                            self.l1[i] = None;
                        }
                    }
                }
                (latency, Level::Main)
            }
        };
        self.l1[idx] = Some(Line { tag: addr, ready_at: now + latency, last_use: now });
        (latency, level)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> MemoryModel {
        MemoryModel::new(MemoryConfig::default(), BTreeMap::new())
    }

    #[test]
    fn miss_then_hits() {
        let mut m = model();
        assert_eq!(m.access(64, 0), (100, Level::Main));
        assert_eq!(m.access(64, 200), (1, Level::L1));
        // Same 4-word L2 line, different L1 line.
        assert_eq!(m.access(65, 200), (7, Level::L2));
    }

    #[test]
    fn access_during_fill_waits_for_it() {
        let mut m = model();
        m.access(8, 10);
        assert_eq!(m.access(9, 50).0, 60);
        assert_eq!(m.access(8, 105).0, 5);
    }

    #[test]
    fn l1_conflict_falls_back_to_l2() {
        let mut m = model();
        m.access(0, 0);
        m.access(1024, 200);
        assert_eq!(m.access(0, 400), (7, Level::L2));
    }

    #[test]
    fn contents_default_to_zero() {
        let mut m = model();
        assert_eq!(m.read(5), 0);
        m.write(5, 42);
        assert_eq!(m.read(5), 42);
    }
}
