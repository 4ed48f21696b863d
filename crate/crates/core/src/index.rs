//! Dense customer index: a bijection between customer ids and row numbers.

use std::collections::HashMap;

use crate::data_model::CustomerId;

/// Bijection customer id <-> dense row index, ordered by id so the mapping
/// is deterministic regardless of how the ids were discovered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CustomerIndex {
    ids: Vec<CustomerId>,
    lookup: HashMap<CustomerId, u32>,
}

impl CustomerIndex {
    /// Builds an index over the distinct ids in `ids`, sorted lexicographically.
    pub fn from_ids<I: IntoIterator<Item = CustomerId>>(ids: I) -> Self {
        let mut ids: Vec<CustomerId> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        let lookup = ids
            .iter()
            .enumerate()
            .map(|(row, id)| (id.clone(), row as u32))
            .collect();
        CustomerIndex { ids, lookup }
    }

    pub fn row(&self, id: &CustomerId) -> Option<u32> {
        self.lookup.get(id).copied()
    }

    pub fn contains(&self, id: &CustomerId) -> bool {
        self.lookup.contains_key(id)
    }

    pub fn id(&self, row: u32) -> &CustomerId {
        &self.ids[row as usize]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Ids in row order.
    pub fn ids(&self) -> &[CustomerId] {
        &self.ids
    }
}
