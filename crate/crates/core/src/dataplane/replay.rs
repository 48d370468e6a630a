/// Sliding anti-replay window over 1024 counters, anchored at the highest
/// counter accepted so far.
#[derive(Debug, Clone)]
pub struct ReplayWindow {
    top: Option<u64>,
    bits: [u64; Self::WORDS],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayVerdict {
    Fresh,
    Duplicate,
    TooOld,
}

impl Default for ReplayWindow {
    fn default() -> Self {
        Self::new()
    }
}

impl ReplayWindow {
    pub const SIZE: u64 = 1024;
    const WORDS: usize = (Self::SIZE / 64) as usize;

    pub fn new() -> Self {
        Self {
            top: None,
            bits: [0; Self::WORDS],
        }
    }

    fn slot(counter: u64) -> (usize, u64) {
        let i = counter % Self::SIZE;
        ((i / 64) as usize, 1u64 << (i % 64))
    }

    pub fn check(&self, counter: u64) -> ReplayVerdict {
        let Some(top) = self.top else { return ReplayVerdict::Fresh };
        if counter > top {
            return ReplayVerdict::Fresh;
        }
        if top - counter >= Self::SIZE {
            return ReplayVerdict::TooOld;
        }
        let (w, m) = Self::slot(counter);
        if self.bits[w] & m != 0 {
            ReplayVerdict::Duplicate
        } else {
            ReplayVerdict::Fresh
        }
    }

    /// Checks and records `counter` in one step.
    pub fn accept(&mut self, counter: u64) -> ReplayVerdict {
        let v = self.check(counter);
        if v != ReplayVerdict::Fresh {
            return v;
        }
        match self.top {
            Some(top) if counter <= top => {}
            Some(top) => {
                let shift = counter - top;
                if shift >= Self::SIZE {
                    self.bits = [0; Self::WORDS];
                } else {
                    for c in top + 1..=counter {
                        let (w, m) = Self::slot(c);
                        self.bits[w] &= !m;
                    }
                }
                self.top = Some(counter);
            }
            None => self.top = Some(counter),
        }
        let (w, m) = Self::slot(counter);
        self.bits[w] |= m;
        ReplayVerdict::Fresh
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn duplicates_and_old_counters() {
        let mut w = ReplayWindow::new();
        assert_eq!(w.accept(5), ReplayVerdict::Fresh);
        assert_eq!(w.accept(5), ReplayVerdict::Duplicate);
        assert_eq!(w.accept(3), ReplayVerdict::Fresh);
        assert_eq!(w.accept(2000), ReplayVerdict::Fresh);
        assert_eq!(w.accept(2000 - 1023), ReplayVerdict::Fresh);
        assert_eq!(w.accept(2000 - 1024), ReplayVerdict::TooOld);
        assert_eq!(w.accept(3), ReplayVerdict::TooOld);
    }

    proptest! {
        #[test]
        fn matches_set_model(seq in prop::collection::vec(0u64..3000, 1..400)) {
            let mut w = ReplayWindow::new();
            let mut seen = HashSet::new();
            let mut top: Option<u64> = None;
            for c in seq {
                let expect = match top {
                    Some(t) if c + ReplayWindow::SIZE <= t => ReplayVerdict::TooOld,
                    _ if seen.contains(&c) => ReplayVerdict::Duplicate,
                    _ => ReplayVerdict::Fresh,
                };
                prop_assert_eq!(w.accept(c), expect);
                if expect == ReplayVerdict::Fresh {
                    seen.insert(c);
                    top = Some(top.map_or(c, |t| t.max(c)));
                }
            }
        }
    }
}
