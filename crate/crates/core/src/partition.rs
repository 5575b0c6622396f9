//! Partitions of a lattice (or of a subset of it) stored as dense label maps.
//!
//! Two families of operations live here:
//!
//! * the connected-component operator `M` and the sequential labelling loop
//!   built on it ([`m_step`], [`connected_components`],
//!   [`components_by_class`]);
//! * the windowed merge used by the segmentation driver ([`merge_step`],
//!   [`merge_step_parallel`]).
//!
//! Pixels outside the partitioned subset carry [`ABSENT`].

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::geometry::{Lattice, Pixel, PixelSet, Window};
use crate::imageio::LabelImage;

/// Label of pixels that do not belong to the partitioned subset.
pub const ABSENT: u32 = u32::MAX;

/// A partition of a pixel subset `S`, one label per lattice pixel.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: LabelImage,
}

impl Partition {
    pub fn from_labels(labels: LabelImage) -> Self {
        Partition { labels }
    }

    /// Wraps raw row-major labels.
    pub fn from_vec(lattice: Lattice, labels: Vec<u32>) -> Result<Self> {
        Ok(Partition { labels: LabelImage::new(lattice, labels)? })
    }

    pub fn lattice(&self) -> Lattice {
        self.labels.lattice()
    }

    pub fn labels(&self) -> &[u32] {
        self.labels.labels()
    }

    pub(crate) fn labels_mut(&mut self) -> &mut [u32] {
        self.labels.labels_mut()
    }

    pub fn label_image(&self) -> &LabelImage {
        &self.labels
    }

    pub fn into_label_image(self) -> LabelImage {
        self.labels
    }

    pub fn label(&self, p: Pixel) -> u32 {
        self.labels.get(p)
    }

    /// True when every pixel of the lattice belongs to the partition.
    pub fn is_total(&self) -> bool {
        !self.labels().contains(&ABSENT)
    }

    /// The partitioned subset `S`.
    pub fn domain(&self) -> PixelSet {
        let mask = self.labels().iter().map(|&l| l != ABSENT).collect();
        PixelSet::from_mask(self.lattice(), mask).expect("mask sized to lattice")
    }

    /// Number of blocks.
    pub fn block_count(&self) -> usize {
        let mut v: Vec<u32> = self.labels().iter().copied().filter(|&l| l != ABSENT).collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    }

    /// Block sizes keyed by label.
    pub fn block_sizes(&self) -> HashMap<u32, usize> {
        let mut sizes = HashMap::new();
        for &l in self.labels() {
            if l != ABSENT {
                *sizes.entry(l).or_insert(0) += 1;
            }
        }
        sizes
    }

    fn max_label(&self) -> Option<u32> {
        self.labels().iter().copied().filter(|&l| l != ABSENT).max()
    }
}

/// Per-pixel class assignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassMap {
    lattice: Lattice,
    classes: Vec<u32>,
}

impl ClassMap {
    pub fn new(lattice: Lattice, classes: Vec<u32>) -> Result<Self> {
        if classes.len() != lattice.len() {
            return domain(format!("expected {} classes, got {}", lattice.len(), classes.len()));
        }
        Ok(ClassMap { lattice, classes })
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn classes(&self) -> &[u32] {
        &self.classes
    }
}

/// Each pixel of `s` in its own block. The label of a pixel is its linear index.
pub fn singletons(s: &PixelSet) -> Partition {
    let labels = s
        .mask()
        .iter()
        .enumerate()
        .map(|(i, &m)| if m { i as u32 } else { ABSENT })
        .collect();
    Partition::from_vec(s.lattice(), labels).expect("sized to lattice")
}

/// Distinct labels found in `(center + w) ∩ lattice`, skipping absent pixels.
#[inline]
fn window_labels(labels: &[u32], lat: &Lattice, center: usize, w: &Window, out: &mut Vec<u32>) {
    out.clear();
    w.for_each_clipped(lat, center, |i| {
        let l = labels[i];
        if l != ABSENT && !out.contains(&l) {
            out.push(l);
        }
    });
}

/// One application of the operator `M`: every block meeting
/// `S ∩ (x + w0)` is fused into a single block; other blocks are untouched.
pub fn m_step(x: Pixel, p: &Partition, w0: &Window) -> Result<Partition> {
    let lat = p.lattice();
    let center = lat.checked_index(x)?;
    let target = p.labels()[center];
    if target == ABSENT {
        return domain(format!("pixel {x} is not in the partitioned set"));
    }
    let mut touched = Vec::new();
    window_labels(p.labels(), &lat, center, w0, &mut touched);
    let mut out = p.clone();
    for l in out.labels_mut() {
        if touched.contains(l) {
            *l = target;
        }
    }
    Ok(out)
}

/// Runs the sequential labelling loop over the pixels of `present`, visiting
/// them in `order` and fusing blocks within `w0`. `linked(a, b)` restricts
/// which present neighbours may join (used for per-class labelling).
///
/// Blocks are tracked as explicit member lists and the smaller list is
/// relabelled on each fusion, which realizes `M` without a global rescan.
fn label_components(
    lat: &Lattice,
    present: &[bool],
    w0: &Window,
    order: impl IntoIterator<Item = usize>,
    linked: impl Fn(usize, usize) -> bool,
) -> Vec<u32> {
    let n = lat.len();
    let mut labels: Vec<u32> = (0..n)
        .map(|i| if present[i] { i as u32 } else { ABSENT })
        .collect();
    let mut members: Vec<Vec<usize>> = (0..n)
        .map(|i| if present[i] { vec![i] } else { Vec::new() })
        .collect();
    let mut touched: Vec<u32> = Vec::new();

    for x in order {
        touched.clear();
        w0.for_each_clipped(lat, x, |y| {
            if present[y] && linked(x, y) {
                let l = labels[y];
                if !touched.contains(&l) {
                    touched.push(l);
                }
            }
        });
        if touched.len() < 2 {
            continue;
        }
        let survivor = *touched
            .iter()
            .max_by_key(|&&l| (members[l as usize].len(), std::cmp::Reverse(l)))
            .expect("non-empty");
        for &l in &touched {
            if l == survivor {
                continue;
            }
            let moved = std::mem::take(&mut members[l as usize]);
            for &i in &moved {
                labels[i] = survivor;
            }
            members[survivor as usize].extend(moved);
        }
    }
    labels
}

/// Connected components of `s` under `w0`-adjacency, computed by visiting
/// the pixels of `s` in `order` and applying `M` at each one. The result is
/// the same for every visiting order.
pub fn connected_components(s: &PixelSet, w0: &Window, order: &[Pixel]) -> Result<Partition> {
    let lat = s.lattice();
    if order.len() != s.len() {
        return domain(format!(
            "order has {} pixels but the set has {}",
            order.len(),
            s.len()
        ));
    }
    let mut seen = vec![false; lat.len()];
    let mut indices = Vec::with_capacity(order.len());
    for &p in order {
        let i = lat.checked_index(p)?;
        if !s.contains_index(i) {
            return domain(format!("order visits {p}, which is not in the set"));
        }
        if std::mem::replace(&mut seen[i], true) {
            return domain(format!("order visits {p} twice"));
        }
        indices.push(i);
    }
    let labels = label_components(&lat, s.mask(), w0, indices, |_, _| true);
    Partition::from_vec(lat, labels)
}

/// Union over classes of the connected components of each class, visiting
/// pixels in raster order.
pub fn components_by_class(cm: &ClassMap, w0: &Window) -> Partition {
    let lat = cm.lattice();
    let present = vec![true; lat.len()];
    let classes = &cm.classes;
    let labels = label_components(&lat, &present, w0, 0..lat.len(), |a, b| classes[a] == classes[b]);
    Partition::from_vec(lat, labels).expect("sized to lattice")
}

/// Label-form windowed merge, in place.
///
/// Every pixel of `(center + psi) ∩ lattice` whose label occurs in
/// `(center + w0) ∩ lattice` receives `fresh` (a new label, or the centre's
/// own label). Pixels of those blocks outside
/// the merge window keep their old labels and so form the residues. Returns
/// the number of relabelled pixels.
#[allow(clippy::too_many_arguments)]
pub(crate) fn merge_in_place(
    labels: &mut [u32],
    lat: &Lattice,
    center: usize,
    w0: &Window,
    psi: &Window,
    fresh: u32,
    workers: usize,
    targets: &mut Vec<u32>,
) -> usize {
    window_labels(labels, lat, center, w0, targets);
    if workers <= 1 {
        let mut changed = 0;
        psi.for_each_clipped(lat, center, |y| {
            let l = &mut labels[y];
            if *l != fresh && targets.contains(l) {
                *l = fresh;
                changed += 1;
            }
        });
        changed
    } else {
        relabel_parallel(labels, lat, center, psi, targets, fresh, workers)
    }
}

/// Tiles the clipped merge window into horizontal bands, one per worker.
fn relabel_parallel(
    labels: &mut [u32],
    lat: &Lattice,
    center: usize,
    psi: &Window,
    targets: &[u32],
    fresh: u32,
    workers: usize,
) -> usize {
    let w = lat.width() as usize;
    let b = psi.clipped_bounds(lat, center);
    let rows = b.row1 - b.row0 + 1;
    let band_rows = rows.div_ceil(workers);
    let (cx, cy) = lat.coords(center);
    let square = psi.is_square();
    let region = &mut labels[b.row0 * w..(b.row1 + 1) * w];

    region
        .par_chunks_mut(band_rows * w)
        .enumerate()
        .map(|(k, band)| {
            let mut changed = 0;
            for (r, row) in band.chunks_mut(w).enumerate() {
                let abs_row = b.row0 + k * band_rows + r;
                let dy = (abs_row as i64 - cy) as i32;
                for (col, l) in row.iter_mut().enumerate().take(b.col1 + 1).skip(b.col0) {
                    if !square && !psi.contains(crate::geometry::Offset::new((col as i64 - cx) as i32, dy)) {
                        continue;
                    }
                    if *l != fresh && targets.contains(l) {
                        *l = fresh;
                        changed += 1;
                    }
                }
            }
            changed
        })
        .sum()
}

fn fresh_label(p: &Partition) -> (Partition, u32) {
    match p.max_label() {
        Some(m) if m < ABSENT - 1 => (p.clone(), m + 1),
        Some(_) => {
            let c = canonicalize(p);
            let next = c.block_count() as u32;
            (c, next)
        }
        None => (p.clone(), 0),
    }
}

/// Label given to the merged block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MergeLabel {
    /// A label unused elsewhere. The centre's own block is cut at the merge
    /// window edge like every other block: the set-form result.
    Fresh,
    /// The centre pixel's label. Its block is never split; only the other
    /// blocks meeting `x + w0` leave residues outside the merge window.
    #[default]
    Center,
}

fn merge_common(
    x: Pixel,
    p: &Partition,
    w0: &Window,
    psi: &Window,
    workers: usize,
    mode: MergeLabel,
) -> Result<Partition> {
    let lat = p.lattice();
    let center = lat.checked_index(x)?;
    if !p.is_total() {
        return domain("merge requires a partition of the whole lattice");
    }
    let (mut out, fresh) = match mode {
        MergeLabel::Fresh => fresh_label(p),
        MergeLabel::Center => (p.clone(), p.labels()[center]),
    };
    let mut targets = Vec::new();
    merge_in_place(out.labels_mut(), &lat, center, w0, psi, fresh, workers, &mut targets);
    Ok(out)
}

/// Windowed merge at `x`.
///
/// The merged block is the union of `R ∩ (x + psi)` over blocks `R` meeting
/// `x + w0`; it gets a label not used elsewhere. Blocks away from `x + w0`
/// are untouched and the remainders `R \ merged` keep their labels, so a
/// block straddling the merge window edge is split.
pub fn merge_step(x: Pixel, p: &Partition, w0: &Window, psi: &Window) -> Result<Partition> {
    merge_common(x, p, w0, psi, 1, MergeLabel::Fresh)
}

/// Windowed merge with an explicit labelling rule. `MergeLabel::Fresh`
/// equals [`merge_step`].
pub fn merge_step_with(
    x: Pixel,
    p: &Partition,
    w0: &Window,
    psi: &Window,
    mode: MergeLabel,
) -> Result<Partition> {
    merge_common(x, p, w0, psi, 1, mode)
}

/// [`merge_step`] with the relabelling pass spread over `workers` bands of
/// rows. The result is identical to the sequential one.
pub fn merge_step_parallel(
    x: Pixel,
    p: &Partition,
    w0: &Window,
    psi: &Window,
    workers: usize,
) -> Result<Partition> {
    if workers == 0 {
        return domain("worker count must be positive");
    }
    merge_common(x, p, w0, psi, workers.max(2), MergeLabel::Fresh)
}

/// Renumbers labels `0, 1, 2, …` by first occurrence in raster order.
/// Absent pixels stay absent.
pub fn canonicalize(p: &Partition) -> Partition {
    let mut map: HashMap<u32, u32> = HashMap::new();
    let labels = p
        .labels()
        .iter()
        .map(|&l| {
            if l == ABSENT {
                return ABSENT;
            }
            let next = map.len() as u32;
            *map.entry(l).or_insert(next)
        })
        .collect();
    Partition::from_vec(p.lattice(), labels).expect("same lattice")
}
