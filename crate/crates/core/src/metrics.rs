//! Partition comparison and region statistics.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::partition::{Partition, ABSENT};

fn pairs(n: u64) -> u128 {
    let n = u128::from(n);
    n * n.saturating_sub(1) / 2
}

/// Rand index of two total partitions of the same lattice: the fraction of
/// unordered pixel pairs on which they agree (both together or both apart).
/// Computed exactly from the contingency table; a one-pixel lattice gives 1.
pub fn rand_index(p1: &Partition, p2: &Partition) -> Result<f64> {
    if p1.lattice() != p2.lattice() {
        return Err(Error::Domain(format!(
            "lattices differ: {}x{} vs {}x{}",
            p1.lattice().width(),
            p1.lattice().height(),
            p2.lattice().width(),
            p2.lattice().height()
        )));
    }
    if !p1.is_total() || !p2.is_total() {
        return Err(Error::Domain("rand index needs partitions of the whole lattice".into()));
    }
    let n = p1.labels().len() as u64;
    if n < 2 {
        return Ok(1.0);
    }
    let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
    let mut rows: HashMap<u32, u64> = HashMap::new();
    let mut cols: HashMap<u32, u64> = HashMap::new();
    for (&a, &b) in p1.labels().iter().zip(p2.labels()) {
        debug_assert!(a != ABSENT && b != ABSENT);
        *joint.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let total = pairs(n);
    let both: u128 = joint.values().map(|&c| pairs(c)).sum();
    let same1: u128 = rows.values().map(|&c| pairs(c)).sum();
    let same2: u128 = cols.values().map(|&c| pairs(c)).sum();
    // agreements = total + 2*both - same1 - same2, never negative.
    let agree = total + 2 * both - same1 - same2;
    Ok(agree as f64 / total as f64)
}

/// Block sizes in descending order.
pub fn region_size_histogram(p: &Partition) -> Vec<usize> {
    let mut sizes: Vec<usize> = p.block_sizes().into_values().collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}
