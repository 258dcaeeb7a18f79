/// A full rendering configuration: the top-level class plus one nuisance
/// choice per level, ordered top (coarsest) to bottom (finest).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderingPath {
    pub class_id: usize,
    pub nuisance_ids: Vec<usize>,
    /// ON/OFF switching states, present only when patch switching is modeled.
    pub switches: Option<Vec<bool>>,
}

impl RenderingPath {
    pub fn new(class_id: usize, nuisance_ids: Vec<usize>) -> Self {
        Self {
            class_id,
            nuisance_ids,
            switches: None,
        }
    }
}

/// Dense enumeration of rendering paths.
///
/// Paths are ordered class-major, then level nuisances lexicographically with
/// the top level most significant; ties broken by lowest index therefore mean
/// lexicographically smallest path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathIndexer {
    class_count: usize,
    level_counts: Vec<usize>, // top level first
}

impl PathIndexer {
    pub fn new(class_count: usize, level_counts: Vec<usize>) -> Self {
        Self {
            class_count,
            level_counts,
        }
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn level_counts(&self) -> &[usize] {
        &self.level_counts
    }

    pub fn nuisance_total(&self) -> u128 {
        self.level_counts
            .iter()
            .fold(1_u128, |acc, n| acc * *n as u128)
    }

    pub fn total(&self) -> u128 {
        self.class_count as u128 * self.nuisance_total()
    }

    /// Decode a flattened nuisance index into per-level choices.
    pub fn unflatten_nuisance(&self, mut g: usize) -> Vec<usize> {
        let mut ids = vec![0; self.level_counts.len()];
        for (slot, count) in ids.iter_mut().zip(self.level_counts.iter()).rev() {
            *slot = g % count;
            g /= count;
        }
        ids
    }

    pub fn flatten_nuisance(&self, ids: &[usize]) -> usize {
        debug_assert_eq!(ids.len(), self.level_counts.len());
        let mut g = 0;
        for (id, count) in ids.iter().zip(self.level_counts.iter()) {
            debug_assert!(id < count);
            g = g * count + id;
        }
        g
    }

    pub fn path(&self, class_id: usize, flat_nuisance: usize) -> RenderingPath {
        RenderingPath::new(class_id, self.unflatten_nuisance(flat_nuisance))
    }

    pub fn flat_index(&self, path: &RenderingPath) -> (usize, usize) {
        (path.class_id, self.flatten_nuisance(&path.nuisance_ids))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_roundtrip() {
        let idx = PathIndexer::new(3, vec![2, 3, 2]);
        assert_eq!(idx.total(), 36);
        for g in 0..12 {
            let ids = idx.unflatten_nuisance(g);
            assert_eq!(idx.flatten_nuisance(&ids), g);
        }
    }

    #[test]
    fn top_level_is_most_significant() {
        let idx = PathIndexer::new(1, vec![2, 3]);
        assert_eq!(idx.unflatten_nuisance(0), vec![0, 0]);
        assert_eq!(idx.unflatten_nuisance(2), vec![0, 2]);
        assert_eq!(idx.unflatten_nuisance(3), vec![1, 0]);
    }
}
