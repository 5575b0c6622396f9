//! Integer-lattice geometry: pixels, windows of offsets, clipping, dilation
//! and the boundary-point predicate.
//!
//! Pixel coordinates are 1-based `(col, row)` pairs. Storage everywhere in the
//! crate is row-major with linear index `(row - 1) * width + (col - 1)`.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{domain, Result};

/// Rectangular pixel lattice of `width` columns and `height` rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Lattice {
    width: u32,
    height: u32,
}

impl Lattice {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return domain(format!("lattice must be non-empty, got {width}x{height}"));
        }
        Ok(Lattice { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.col >= 1 && p.row >= 1 && p.col <= self.width && p.row <= self.height
    }

    /// Row-major linear index of `p`. Panics if `p` is off the lattice.
    pub fn index(&self, p: Pixel) -> usize {
        assert!(self.contains(p), "pixel {p} outside {}x{} lattice", self.width, self.height);
        (p.row as usize - 1) * self.width as usize + (p.col as usize - 1)
    }

    pub fn checked_index(&self, p: Pixel) -> Result<usize> {
        if self.contains(p) {
            Ok(self.index(p))
        } else {
            domain(format!("pixel {p} outside {}x{} lattice", self.width, self.height))
        }
    }

    pub fn pixel(&self, index: usize) -> Pixel {
        let w = self.width as usize;
        Pixel::new((index % w) as u32 + 1, (index / w) as u32 + 1)
    }

    /// All pixels in raster (row-major) order.
    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        (0..self.len()).map(move |i| self.pixel(i))
    }

    /// Zero-based `(col, row)` of a linear index.
    #[inline]
    pub(crate) fn coords(&self, index: usize) -> (i64, i64) {
        let w = self.width as usize;
        ((index % w) as i64, (index / w) as i64)
    }

    /// Linear index of zero-based coordinates, or `None` off the lattice.
    #[inline]
    pub(crate) fn index_of(&self, col: i64, row: i64) -> Option<usize> {
        if col < 0 || row < 0 || col >= self.width as i64 || row >= self.height as i64 {
            None
        } else {
            Some(row as usize * self.width as usize + col as usize)
        }
    }
}

/// A lattice point, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pixel {
    pub col: u32,
    pub row: u32,
}

impl Pixel {
    pub const fn new(col: u32, row: u32) -> Self {
        Pixel { col, row }
    }
}

impl fmt::Display for Pixel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.col, self.row)
    }
}

/// Integer displacement on the lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Offset {
    pub dx: i32,
    pub dy: i32,
}

impl Offset {
    pub const ORIGIN: Offset = Offset { dx: 0, dy: 0 };

    pub const fn new(dx: i32, dy: i32) -> Self {
        Offset { dx, dy }
    }

    pub fn is_origin(&self) -> bool {
        self.dx == 0 && self.dy == 0
    }
}

// Raster order: by row, then column.
impl Ord for Offset {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.dy, self.dx).cmp(&(other.dy, other.dx))
    }
}

impl PartialOrd for Offset {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug)]
enum Shape {
    /// Full square `|dx| <= r, |dy| <= r`, kept symbolic so that the very
    /// large merge windows of late levels cost nothing to build.
    Square(u32),
    /// Sorted, deduplicated offsets.
    Set(Vec<Offset>),
}

/// A finite set of offsets containing the origin.
#[derive(Clone, Debug)]
pub struct Window {
    shape: Shape,
}

impl Window {
    /// Builds a window from arbitrary offsets; duplicates are dropped.
    pub fn from_offsets(offsets: impl IntoIterator<Item = Offset>) -> Result<Self> {
        let set: BTreeSet<Offset> = offsets.into_iter().collect();
        if !set.contains(&Offset::ORIGIN) {
            return domain("window must contain the origin");
        }
        Ok(Self::normalized(set.into_iter().collect()))
    }

    fn normalized(sorted: Vec<Offset>) -> Self {
        let r = sorted
            .iter()
            .map(|o| o.dx.unsigned_abs().max(o.dy.unsigned_abs()))
            .max()
            .unwrap_or(0);
        let side = 2 * r as usize + 1;
        if sorted.len() == side * side {
            Window { shape: Shape::Square(r) }
        } else {
            Window { shape: Shape::Set(sorted) }
        }
    }

    /// Square of side `2r + 1` centred on the origin.
    pub fn square(r: u32) -> Self {
        Window { shape: Shape::Square(r) }
    }

    /// The 3x3 block of offsets around and including the origin.
    pub fn nine() -> Self {
        Self::square(1)
    }

    /// Origin plus the four axis neighbours.
    pub fn five() -> Self {
        Self::from_offsets([
            Offset::new(0, -1),
            Offset::new(-1, 0),
            Offset::ORIGIN,
            Offset::new(1, 0),
            Offset::new(0, 1),
        ])
        .expect("contains origin")
    }

    /// The origin alone.
    pub fn origin() -> Self {
        Self::square(0)
    }

    pub fn len(&self) -> usize {
        match &self.shape {
            Shape::Square(r) => (2 * *r as usize + 1).pow(2),
            Shape::Set(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest `max(|dx|, |dy|)` over the offsets.
    pub fn radius(&self) -> u32 {
        match &self.shape {
            Shape::Square(r) => *r,
            Shape::Set(v) => v
                .iter()
                .map(|o| o.dx.unsigned_abs().max(o.dy.unsigned_abs()))
                .max()
                .unwrap_or(0),
        }
    }

    pub fn is_square(&self) -> bool {
        matches!(self.shape, Shape::Square(_))
    }

    pub fn contains(&self, o: Offset) -> bool {
        match &self.shape {
            Shape::Square(r) => o.dx.unsigned_abs() <= *r && o.dy.unsigned_abs() <= *r,
            Shape::Set(v) => v.binary_search(&o).is_ok(),
        }
    }

    /// Offsets in raster order. Materializes square windows.
    pub fn offsets(&self) -> Vec<Offset> {
        match &self.shape {
            Shape::Square(r) => {
                let r = *r as i32;
                (-r..=r)
                    .flat_map(|dy| (-r..=r).map(move |dx| Offset::new(dx, dy)))
                    .collect()
            }
            Shape::Set(v) => v.clone(),
        }
    }

    /// Offsets other than the origin, in raster order.
    pub fn neighbors(&self) -> Vec<Offset> {
        self.offsets().into_iter().filter(|o| !o.is_origin()).collect()
    }

    pub fn is_subset_of(&self, other: &Window) -> bool {
        match (&self.shape, &other.shape) {
            (Shape::Square(a), Shape::Square(b)) => a <= b,
            (Shape::Square(a), Shape::Set(_)) => {
                // Only a square of at least the same radius can hold it.
                *a <= other.radius() && self.offsets().iter().all(|o| other.contains(*o))
            }
            (Shape::Set(v), _) => v.iter().all(|o| other.contains(*o)),
        }
    }

    /// Minkowski sum `{a + b : a in self, b in other}`.
    pub fn minkowski_sum(&self, other: &Window) -> Window {
        if let (Shape::Square(a), Shape::Square(b)) = (&self.shape, &other.shape) {
            return Window::square(a + b);
        }
        let lhs = self.offsets();
        let rhs = other.offsets();
        let mut out = BTreeSet::new();
        for a in &lhs {
            for b in &rhs {
                out.insert(Offset::new(a.dx + b.dx, a.dy + b.dy));
            }
        }
        Self::normalized(out.into_iter().collect())
    }

    /// `i`-fold dilation: `G^(1) = G`, `G^(k+1) = G (+) G^(k)`.
    pub fn dilate(&self, i: u32) -> Result<Window> {
        if i == 0 {
            return domain("dilation count must be at least 1");
        }
        let mut acc = self.clone();
        for _ in 1..i {
            acc = self.minkowski_sum(&acc);
        }
        Ok(acc)
    }

    /// Visits the linear indices of `(center + self) ∩ lattice`.
    ///
    /// Square windows visit in raster order. Set windows visit in offset
    /// order, which is also raster order.
    #[inline]
    pub(crate) fn for_each_clipped(&self, lat: &Lattice, center: usize, mut f: impl FnMut(usize)) {
        let (cx, cy) = lat.coords(center);
        match &self.shape {
            Shape::Square(r) => {
                let (c0, c1, r0, r1) = self.clipped_rect(lat, cx, cy, *r);
                let w = lat.width() as usize;
                for row in r0..=r1 {
                    let base = row * w;
                    for col in c0..=c1 {
                        f(base + col);
                    }
                }
            }
            Shape::Set(v) => {
                for o in v {
                    if let Some(i) = lat.index_of(cx + o.dx as i64, cy + o.dy as i64) {
                        f(i);
                    }
                }
            }
        }
    }

    /// Zero-based inclusive column and row ranges of a clipped square.
    #[inline]
    fn clipped_rect(&self, lat: &Lattice, cx: i64, cy: i64, r: u32) -> (usize, usize, usize, usize) {
        let r = r as i64;
        let c0 = (cx - r).max(0) as usize;
        let c1 = (cx + r).min(lat.width() as i64 - 1) as usize;
        let r0 = (cy - r).max(0) as usize;
        let r1 = (cy + r).min(lat.height() as i64 - 1) as usize;
        (c0, c1, r0, r1)
    }

    /// Zero-based row range `[first, last]` covered by the clipped window,
    /// and for squares the column range as well.
    pub(crate) fn clipped_bounds(&self, lat: &Lattice, center: usize) -> ClipBounds {
        let (cx, cy) = lat.coords(center);
        let r = self.radius();
        let (c0, c1, r0, r1) = self.clipped_rect(lat, cx, cy, r);
        ClipBounds { col0: c0, col1: c1, row0: r0, row1: r1 }
    }

    /// Number of lattice pixels in the clipped window.
    pub(crate) fn clipped_len(&self, lat: &Lattice, center: usize) -> usize {
        match &self.shape {
            Shape::Square(_) => {
                let b = self.clipped_bounds(lat, center);
                (b.col1 - b.col0 + 1) * (b.row1 - b.row0 + 1)
            }
            Shape::Set(_) => {
                let mut n = 0;
                self.for_each_clipped(lat, center, |_| n += 1);
                n
            }
        }
    }
}

impl PartialEq for Window {
    fn eq(&self, other: &Self) -> bool {
        match (&self.shape, &other.shape) {
            (Shape::Square(a), Shape::Square(b)) => a == b,
            (Shape::Set(a), Shape::Set(b)) => a == b,
            // Both constructors normalize full squares, so the variants differ.
            _ => false,
        }
    }
}

impl Eq for Window {}

/// Bounding rectangle of a clipped window, zero-based and inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ClipBounds {
    pub col0: usize,
    pub col1: usize,
    pub row0: usize,
    pub row1: usize,
}

/// A subset of a lattice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelSet {
    lattice: Lattice,
    members: Vec<bool>,
}

impl PixelSet {
    pub fn empty(lattice: Lattice) -> Self {
        PixelSet { lattice, members: vec![false; lattice.len()] }
    }

    pub fn full(lattice: Lattice) -> Self {
        PixelSet { lattice, members: vec![true; lattice.len()] }
    }

    pub fn from_pixels(lattice: Lattice, pixels: impl IntoIterator<Item = Pixel>) -> Result<Self> {
        let mut set = Self::empty(lattice);
        for p in pixels {
            let i = lattice.checked_index(p)?;
            set.members[i] = true;
        }
        Ok(set)
    }

    /// Row-major membership mask.
    pub fn from_mask(lattice: Lattice, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != lattice.len() {
            return domain(format!("mask has {} entries, lattice has {}", mask.len(), lattice.len()));
        }
        Ok(PixelSet { lattice, members: mask })
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn contains(&self, p: Pixel) -> bool {
        self.lattice.contains(p) && self.members[self.lattice.index(p)]
    }

    pub(crate) fn contains_index(&self, i: usize) -> bool {
        self.members[i]
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|&m| m)
    }

    pub fn mask(&self) -> &[bool] {
        &self.members
    }

    /// Members in raster order.
    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(move |(i, _)| self.lattice.pixel(i))
    }
}

/// `(x + w) ∩ lattice`, in raster order.
pub fn clip(w: &Window, x: Pixel, lat: &Lattice) -> Result<Vec<Pixel>> {
    let center = lat.checked_index(x)?;
    let mut out = Vec::with_capacity(w.len().min(lat.len()));
    w.for_each_clipped(lat, center, |i| out.push(lat.pixel(i)));
    Ok(out)
}

/// Whether `x` is a boundary point of `region`: its clipped `w0` window meets
/// both the region and the rest of the lattice. Off-lattice points never count
/// as lying outside the region.
pub fn boundary_point(x: Pixel, region: &PixelSet, w0: &Window, lat: &Lattice) -> Result<bool> {
    let center = lat.checked_index(x)?;
    if region.lattice() != *lat {
        return domain("region lattice differs from the working lattice");
    }
    let (mut inside, mut outside) = (false, false);
    w0.for_each_clipped(lat, center, |i| {
        if region.contains_index(i) {
            inside = true;
        } else {
            outside = true;
        }
    });
    Ok(inside && outside)
}

/// `G^(i)`, the `i`-fold dilation of `g` by itself.
pub fn dilate(g: &Window, i: u32) -> Result<Window> {
    g.dilate(i)
}

/// Square window of side `2r + 1`.
pub fn square_window(r: u32) -> Window {
    Window::square(r)
}
