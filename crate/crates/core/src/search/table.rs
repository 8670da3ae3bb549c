use super::SearchEntry;

/// The `n` best entries seen so far, kept sorted by `(distance, key)`.
#[derive(Debug, Clone)]
pub struct TopTable {
    n: usize,
    entries: Vec<SearchEntry>,
}

impl TopTable {
    pub fn new(n: usize) -> Self {
        TopTable {
            n,
            entries: Vec::with_capacity(n.min(4096) + 1),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Worst retained distance, once the table is full.
    pub fn worst(&self) -> Option<crate::metric::Distance> {
        (self.entries.len() == self.n)
            .then(|| self.entries.last().map(|e| e.distance))
            .flatten()
    }

    pub fn insert(&mut self, entry: SearchEntry) {
        let pos = self
            .entries
            .partition_point(|e| e.rank_cmp(&entry) == std::cmp::Ordering::Less);
        if pos >= self.n {
            return;
        }
        self.entries.insert(pos, entry);
        self.entries.truncate(self.n);
    }

    pub fn merge(&mut self, other: TopTable) {
        for e in other.entries {
            self.insert(e);
        }
    }

    pub fn entries(&self) -> &[SearchEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<SearchEntry> {
        self.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::SceneKey;
    use crate::metric::Distance;

    fn e(d: f64, ego: u32) -> SearchEntry {
        SearchEntry {
            key: SceneKey::new(1, ego, 1),
            distance: Distance::new(d),
        }
    }

    #[test]
    fn keeps_n_smallest_with_key_tiebreak() {
        let mut t = TopTable::new(3);
        for (d, id) in [(5.0, 1), (1.0, 2), (3.0, 3), (1.0, 0), (9.0, 4)] {
            t.insert(e(d, id));
        }
        let got: Vec<_> = t.entries().iter().map(|x| x.key.ego_id).collect();
        assert_eq!(got, vec![0, 2, 3]);
        assert_eq!(t.worst(), Some(Distance::new(3.0)));
    }

    #[test]
    fn worst_only_when_full() {
        let mut t = TopTable::new(2);
        t.insert(e(1.0, 1));
        assert_eq!(t.worst(), None);
        let mut u = TopTable::new(2);
        u.insert(e(0.5, 2));
        t.merge(u);
        assert_eq!(t.worst(), Some(Distance::new(1.0)));
    }
}
