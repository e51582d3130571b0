use std::collections::BTreeSet;

/// `|a ∩ b| / |a ∪ b|`, `None` for two empty sets.
pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> Option<f64> {
    let union = a.union(b).count();
    if union == 0 {
        return None;
    }
    Some(a.intersection(b).count() as f64 / union as f64)
}

pub fn cells(set: &marqoe_core::VisibleSet) -> BTreeSet<usize> {
    set.iter().collect()
}
