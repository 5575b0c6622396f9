//! The sequential segmentation loop.
//!
//! Starting from single-pixel regions, each level visits every pixel in a
//! fixed permutation. A pixel whose `W0` window sees two or more regions has
//! the image in its evaluation window `W_i` tested for homogeneity; on
//! acceptance the regions around it are merged within the merge window
//! `Ψ_i`. The partition after every level is recorded.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Lattice, Pixel, PixelSet, Window};
use crate::imageio::ImageBuffer;
use crate::mrf::{Evaluator, MrfModel, Patch};
use crate::partition::{self, canonicalize, singletons, MergeLabel, Partition};
use crate::pyramid::{centered_patch, PyramidEvaluator};

/// Largest supported level; `Ψ_i` has radius `2^i`.
pub const MAX_LEVEL: u32 = 30;

/// Merge windows with at least this many lattice pixels are relabelled in
/// parallel when more than one worker is configured.
const PARALLEL_MERGE_MIN_PIXELS: usize = 1 << 14;

/// Pixel visiting order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PermutationKind {
    /// Row-major.
    Raster,
    /// Fisher–Yates shuffle (`rand` 0.8 `SliceRandom::shuffle`) driven by
    /// `ChaCha8Rng::seed_from_u64(seed)`.
    Random,
    /// Explicit zero-based row-major pixel indices.
    Explicit(Vec<u32>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EvalMode {
    /// MRF test directly on `W_i`.
    #[default]
    Direct,
    /// Lower `W_i` to `W_1` through the pyramid network first.
    Pyramid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McvConfig {
    pub max_level: u32,
    pub permutation: PermutationKind,
    pub seed: u64,
    /// Adjacency window for boundary tests and merging.
    pub w0: Window,
    /// Structuring element generating the evaluation windows `W_i = g^(i)`.
    pub g: Window,
    /// Overrides `W_1..W_max_level`.
    pub eval_windows: Option<Vec<Window>>,
    /// Overrides `Ψ_1..Ψ_max_level`.
    pub merge_windows: Option<Vec<Window>>,
    pub model: MrfModel,
    /// Label of the merged block. `Center` keeps the visited pixel's label,
    /// so its own region is never cut at the merge window edge.
    pub merge_label: MergeLabel,
    pub eval_mode: EvalMode,
    pub workers: usize,
    /// Draw a fresh random permutation for every level after the first.
    pub reshuffle_per_level: bool,
}

impl Default for McvConfig {
    fn default() -> Self {
        McvConfig {
            max_level: 9,
            permutation: PermutationKind::Random,
            seed: 0,
            w0: Window::nine(),
            g: Window::nine(),
            eval_windows: None,
            merge_windows: None,
            model: MrfModel::new(Window::nine()),
            merge_label: MergeLabel::Center,
            eval_mode: EvalMode::Direct,
            workers: 1,
            reshuffle_per_level: false,
        }
    }
}

impl McvConfig {
    /// `W_i`, 1-based.
    pub fn eval_window(&self, level: u32) -> Window {
        match &self.eval_windows {
            Some(ws) => ws[level as usize - 1].clone(),
            None => self.g.dilate(level).expect("level >= 1"),
        }
    }

    /// `Ψ_i`, 1-based: by default the square of radius `2^i`.
    pub fn merge_window(&self, level: u32) -> Window {
        match &self.merge_windows {
            Some(ws) => ws[level as usize - 1].clone(),
            None => Window::square(1 << level),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.max_level == 0 || self.max_level > MAX_LEVEL {
            return fail(format!("max_level must be in 1..={MAX_LEVEL}, got {}", self.max_level));
        }
        if self.workers == 0 {
            return fail("workers must be positive".into());
        }
        for (name, ws) in [("eval", &self.eval_windows), ("merge", &self.merge_windows)] {
            if let Some(ws) = ws {
                if ws.len() != self.max_level as usize {
                    return fail(format!(
                        "{} {name} windows given for {} levels",
                        ws.len(),
                        self.max_level
                    ));
                }
            }
        }
        if self.eval_mode == EvalMode::Pyramid && self.eval_windows.is_some() {
            return fail("pyramid evaluation requires the dilation windows W_i = g^(i)".into());
        }
        for i in 1..self.max_level {
            if !self.eval_window(i).is_subset_of(&self.eval_window(i + 1)) {
                return fail(format!("evaluation windows not nested at level {i}"));
            }
            if !self.merge_window(i).is_subset_of(&self.merge_window(i + 1)) {
                return fail(format!("merge windows not nested at level {i}"));
            }
        }
        Ok(())
    }
}

/// Counters for one level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LevelStats {
    pub level: u32,
    /// Boundary pixels whose window was tested.
    pub evaluations: usize,
    pub accepted_merges: usize,
    /// Pixels whose label changed during merges.
    pub relabelled: usize,
    /// Regions at the end of the level.
    pub regions: usize,
    /// Whether every region at the start of the level lies inside a single
    /// region at its end.
    pub coarsens_previous: bool,
}

/// Partitions after each level. Entry 0 is the single-pixel partition.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionSequence {
    pub config: McvConfig,
    pub levels: Vec<Partition>,
    pub stats: Vec<LevelStats>,
}

impl PartitionSequence {
    pub fn last(&self) -> &Partition {
        self.levels.last().expect("at least the initial partition")
    }
}

/// Pixel visiting order for a lattice.
pub fn permutation(kind: &PermutationKind, lattice: Lattice, seed: u64) -> Result<Vec<Pixel>> {
    Ok(permutation_indices(kind, lattice, seed)?
        .into_iter()
        .map(|i| lattice.pixel(i))
        .collect())
}

fn permutation_indices(kind: &PermutationKind, lattice: Lattice, seed: u64) -> Result<Vec<usize>> {
    let n = lattice.len();
    match kind {
        PermutationKind::Raster => Ok((0..n).collect()),
        PermutationKind::Random => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            Ok(order)
        }
        PermutationKind::Explicit(indices) => {
            if indices.len() != n {
                return Err(Error::Config(format!(
                    "permutation has {} entries, image has {n} pixels",
                    indices.len()
                )));
            }
            let mut seen = vec![false; n];
            for &i in indices {
                let i = i as usize;
                if i >= n || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Config(format!(
                        "permutation entry {i} is out of range or repeated"
                    )));
                }
            }
            Ok(indices.iter().map(|&i| i as usize).collect())
        }
    }
}

/// Mutable state of a run: the working labels and the next unused label.
struct Engine<'a> {
    img: &'a ImageBuffer,
    lat: Lattice,
    cfg: &'a McvConfig,
    pyramid: Option<PyramidEvaluator>,
    evaluator: Evaluator,
    targets: Vec<u32>,
}

impl<'a> Engine<'a> {
    fn new(img: &'a ImageBuffer, cfg: &'a McvConfig) -> Result<Self> {
        let pyramid = match cfg.eval_mode {
            EvalMode::Direct => None,
            EvalMode::Pyramid => {
                Some(PyramidEvaluator::new(&cfg.g, None, cfg.model.clone(), cfg.max_level)?)
            }
        };
        Ok(Engine {
            img,
            lat: img.lattice(),
            cfg,
            pyramid,
            evaluator: Evaluator::default(),
            targets: Vec::new(),
        })
    }

    fn homogeneous(&mut self, center: usize, level: u32, w: &Window) -> bool {
        match &self.pyramid {
            None => {
                let patch = Patch::from_image(self.img, center, w);
                self.evaluator.evaluate(&patch, &self.cfg.model)
            }
            Some(pe) => {
                let patch = centered_patch(self.img, center, w);
                crate::pyramid::pyramid_evaluate(&patch, level, pe).unwrap_or(false)
            }
        }
    }

    /// Runs one level in place. `labels` must use labels below `next_label`.
    fn level(&mut self, labels: &mut [u32], level: u32, order: &[usize], mut next_label: u32) -> LevelStats {
        let w0 = &self.cfg.w0;
        let wi = self.cfg.eval_window(level);
        let psi = self.cfg.merge_window(level);
        let mut stats = LevelStats {
            level,
            evaluations: 0,
            accepted_merges: 0,
            relabelled: 0,
            regions: 0,
            coarsens_previous: true,
        };
        for &x in order {
            let own = labels[x];
            let mut boundary = false;
            w0.for_each_clipped(&self.lat, x, |y| boundary |= labels[y] != own);
            if !boundary {
                continue;
            }
            stats.evaluations += 1;
            if !self.homogeneous(x, level, &wi) {
                continue;
            }
            let workers = if self.cfg.workers > 1
                && psi.clipped_len(&self.lat, x) >= PARALLEL_MERGE_MIN_PIXELS
            {
                self.cfg.workers
            } else {
                1
            };
            stats.relabelled += partition::merge_in_place(
                labels,
                &self.lat,
                x,
                w0,
                &psi,
                match self.cfg.merge_label {
                    MergeLabel::Fresh => next_label,
                    MergeLabel::Center => own,
                },
                workers,
                &mut self.targets,
            );
            next_label += 1;
            stats.accepted_merges += 1;
        }
        stats
    }
}

fn coarsens(before: &[u32], after: &[u32]) -> bool {
    let mut image: HashMap<u32, u32> = HashMap::new();
    before.iter().zip(after).all(|(a, b)| *image.entry(*a).or_insert(*b) == *b)
}

fn check_image(img: &ImageBuffer) -> Result<()> {
    if img.lattice().len() >= (u32::MAX / 2) as usize {
        return Err(Error::Config("image too large for 32-bit labels".into()));
    }
    Ok(())
}

/// Runs level `level` starting from `p`, visiting pixels in `perm`.
pub fn run_level(
    p: &Partition,
    img: &ImageBuffer,
    level: u32,
    cfg: &McvConfig,
    perm: &[Pixel],
) -> Result<(Partition, LevelStats)> {
    cfg.validate()?;
    check_image(img)?;
    if level == 0 || level > cfg.max_level {
        return Err(Error::Domain(format!("level {level} outside 1..={}", cfg.max_level)));
    }
    let lat = img.lattice();
    if p.lattice() != lat || !p.is_total() {
        return Err(Error::Domain("partition must cover the image lattice".into()));
    }
    let order: Vec<usize> = perm.iter().map(|&x| lat.checked_index(x)).collect::<Result<_>>()?;
    let order = permutation_indices(
        &PermutationKind::Explicit(order.iter().map(|&i| i as u32).collect()),
        lat,
        0,
    )?;
    let start = canonicalize(p);
    let mut labels = start.labels().to_vec();
    let next = start.block_count() as u32;
    let mut engine = Engine::new(img, cfg)?;
    let mut stats = with_pool(cfg.workers, || engine.level(&mut labels, level, &order, next));
    let out = canonicalize(&Partition::from_vec(lat, labels)?);
    stats.regions = out.block_count();
    stats.coarsens_previous = coarsens(start.labels(), out.labels());
    Ok((out, stats))
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers <= 1 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Full multi-level run.
pub fn run_mcv(img: &ImageBuffer, cfg: &McvConfig) -> Result<PartitionSequence> {
    cfg.validate()?;
    check_image(img)?;
    let lat = img.lattice();
    let reshuffle = cfg.reshuffle_per_level && cfg.permutation == PermutationKind::Random;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = if reshuffle {
        // Same draw as the plain random order; later levels continue the stream.
        let mut order: Vec<usize> = (0..lat.len()).collect();
        order.shuffle(&mut rng);
        order
    } else {
        permutation_indices(&cfg.permutation, lat, cfg.seed)?
    };

    let mut current = singletons(&PixelSet::full(lat));
    let mut levels = vec![current.clone()];
    let mut stats = Vec::with_capacity(cfg.max_level as usize);
    let mut engine = Engine::new(img, cfg)?;

    with_pool(cfg.workers, || {
        for level in 1..=cfg.max_level {
            if level > 1 && cfg.reshuffle_per_level {
                order.shuffle(&mut rng);
            }
            let mut labels = current.labels().to_vec();
            let next = current.block_count() as u32;
            let mut s = engine.level(&mut labels, level, &order, next);
            let out = canonicalize(&Partition::from_vec(lat, labels).expect("same lattice"));
            s.regions = out.block_count();
            s.coarsens_previous = coarsens(current.labels(), out.labels());
            stats.push(s);
            levels.push(out.clone());
            current = out;
        }
    });

    Ok(PartitionSequence { config: cfg.clone(), levels, stats })
}
