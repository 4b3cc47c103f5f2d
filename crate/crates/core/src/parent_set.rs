use std::fmt;

use smallvec::SmallVec;

/// A canonical (strictly ascending) set of variable ids.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParentSet(SmallVec<[u32; 4]>);

impl ParentSet {
    pub fn empty() -> Self {
        ParentSet(SmallVec::new())
    }

    /// Sorts and deduplicates `ids`.
    pub fn from_ids(ids: impl IntoIterator<Item = usize>) -> Self {
        let mut v: SmallVec<[u32; 4]> = ids.into_iter().map(|i| i as u32).collect();
        v.sort_unstable();
        v.dedup();
        ParentSet(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.0.iter().map(|&i| i as usize)
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.0.binary_search(&(id as u32)).is_ok()
    }

    pub fn with(&self, id: usize) -> Self {
        let mut v = self.0.clone();
        if let Err(pos) = v.binary_search(&(id as u32)) {
            v.insert(pos, id as u32);
        }
        ParentSet(v)
    }

    pub fn without(&self, id: usize) -> Self {
        let mut v = self.0.clone();
        if let Ok(pos) = v.binary_search(&(id as u32)) {
            v.remove(pos);
        }
        ParentSet(v)
    }

    pub fn is_subset_of(&self, other: &ParentSet) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    /// Ordering used to break score ties: smaller sets first, then lexicographic ids.
    pub fn tie_cmp(&self, other: &ParentSet) -> std::cmp::Ordering {
        self.len().cmp(&other.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl fmt::Debug for ParentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.iter()).finish()
    }
}

impl FromIterator<usize> for ParentSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        ParentSet::from_ids(iter)
    }
}
