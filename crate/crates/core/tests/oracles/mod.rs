//! Reference implementations used only by the integration tests. Each one
//! follows its textbook definition directly and shares no code with the
//! library.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, VecDeque};

/// Breadth-first flood fill of a row-major mask. `eight` selects
/// 8-adjacency, otherwise 4-adjacency. Returns one label per pixel,
/// `u32::MAX` off the mask, numbered by first pixel in raster order.
pub fn bfs_components(mask: &[bool], w: usize, h: usize, eight: bool) -> Vec<u32> {
    let mut out = vec![u32::MAX; w * h];
    let mut next = 0u32;
    let steps: Vec<(i64, i64)> = if eight {
        vec![(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
    } else {
        vec![(0, -1), (-1, 0), (1, 0), (0, 1)]
    };
    for start in 0..w * h {
        if !mask[start] || out[start] != u32::MAX {
            continue;
        }
        out[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for (dx, dy) in &steps {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask[j] && out[j] == u32::MAX {
                    out[j] = next;
                    queue.push_back(j);
                }
            }
        }
        next += 1;
    }
    out
}

/// Renumbers labels by first occurrence; `u32::MAX` is left alone.
pub fn first_occurrence(labels: &[u32]) -> Vec<u32> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            if l == u32::MAX {
                return l;
            }
            let n = map.len() as u32;
            *map.entry(l).or_insert(n)
        })
        .collect()
}

/// Set-form windowed merge on explicit pixel sets. Windows are squares of
/// the given radii (Chebyshev balls), except that `w0_row`/`psi_row` restrict
/// them to the centre row when set.
pub fn merge_set_form(
    labels: &[u32],
    w: usize,
    x: (usize, usize),
    in_w0: &dyn Fn(i64, i64) -> bool,
    in_psi: &dyn Fn(i64, i64) -> bool,
) -> Vec<u32> {
    let mut blocks: HashMap<u32, BTreeSet<usize>> = HashMap::new();
    for (i, &l) in labels.iter().enumerate() {
        blocks.entry(l).or_default().insert(i);
    }
    let rel = |i: usize| ((i % w) as i64 - x.0 as i64, (i / w) as i64 - x.1 as i64);
    let touches = |b: &BTreeSet<usize>| b.iter().any(|&i| {
        let (dx, dy) = rel(i);
        in_w0(dx, dy)
    });
    let mut m1 = BTreeSet::new();
    for b in blocks.values().filter(|b| touches(b)) {
        for &i in b {
            let (dx, dy) = rel(i);
            if in_psi(dx, dy) {
                m1.insert(i);
            }
        }
    }
    let mut result: Vec<BTreeSet<usize>> = vec![m1.clone()];
    for b in blocks.values() {
        if touches(b) {
            let rest: BTreeSet<usize> = b.difference(&m1).copied().collect();
            if !rest.is_empty() {
                result.push(rest);
            }
        } else {
            result.push(b.clone());
        }
    }
    let mut out = vec![u32::MAX; labels.len()];
    for (k, b) in result.iter().enumerate() {
        for &i in b {
            assert_eq!(out[i], u32::MAX, "blocks overlap");
            out[i] = k as u32;
        }
    }
    assert!(out.iter().all(|&l| l != u32::MAX), "blocks do not cover");
    first_occurrence(&out)
}

/// Pairwise Rand index: fraction of unordered pixel pairs on which the two
/// labelings agree.
pub fn rand_brute(a: &[u32], b: &[u32]) -> f64 {
    let n = a.len();
    let (mut agree, mut total) = (0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            total += 1;
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / total as f64
}
