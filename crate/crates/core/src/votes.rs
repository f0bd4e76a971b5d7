//! Top-2 vote bookkeeping shared by consensus, lifting and downsampling.

use serde::{Deserialize, Serialize};

use crate::labelspace::UNLABELED;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vote<W> {
    pub id: u16,
    pub count: W,
}

/// Small per-element tally. Id 0 never accumulates.
#[derive(Debug, Clone, Default)]
pub struct Tally<W> {
    entries: Vec<(u16, W)>,
}

impl<W> Tally<W>
where
    W: Copy + PartialOrd + Default + std::ops::AddAssign,
{
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    #[inline]
    pub fn add(&mut self, id: u16, w: W) {
        if id == UNLABELED {
            return;
        }
        match self.entries.iter_mut().find(|(i, _)| *i == id) {
            Some((_, c)) => *c += w,
            None => self.entries.push((id, w)),
        }
    }

    pub fn total(&self) -> W {
        let mut t = W::default();
        for &(_, w) in &self.entries {
            t += w;
        }
        t
    }

    /// Best and runner-up by count, ties broken by smaller id. Missing
    /// places are `(0, 0)`.
    pub fn top_two(&self) -> (Vote<W>, Vote<W>) {
        let mut best: Option<(u16, W)> = None;
        let mut second: Option<(u16, W)> = None;
        let beats = |a: (u16, W), b: Option<(u16, W)>| match b {
            None => true,
            Some(b) => a.1 > b.1 || (a.1 == b.1 && a.0 < b.0),
        };
        for &e in &self.entries {
            if beats(e, best) {
                second = best;
                best = Some(e);
            } else if beats(e, second) {
                second = Some(e);
            }
        }
        let to_vote = |e: Option<(u16, W)>| {
            e.map(|(id, count)| Vote { id, count }).unwrap_or_default()
        };
        (to_vote(best), to_vote(second))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_by_count_then_id() {
        let mut t = Tally::<u32>::new();
        for id in [5, 3, 5, 3, 9, 0, 0, 0] {
            t.add(id, 1);
        }
        let (a, b) = t.top_two();
        assert_eq!(a, Vote { id: 3, count: 2 });
        assert_eq!(b, Vote { id: 5, count: 2 });
        assert_eq!(t.total(), 5);
    }

    #[test]
    fn empty_is_unlabeled() {
        let t = Tally::<f64>::new();
        assert_eq!(t.top_two(), (Vote::default(), Vote::default()));
    }
}
