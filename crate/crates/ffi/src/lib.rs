//! C ABI over the `mcv` segmentation library.
//!
//! Objects are opaque heap handles created by `mcv_*_new`/`mcv_*_load*`
//! functions and released by the matching `mcv_*_free`. Fallible calls
//! return an [`McvStatus`]; on failure [`mcv_last_error`] describes the
//! problem. Panics never cross the boundary.
//!
//! Selector arguments (permutation, metric, …) are plain `uint32_t` values
//! taken from the `MCV_*` constants, so an out-of-range value is reported
//! as an error instead of being undefined behaviour.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mcv::driver::{run_mcv, EvalMode, McvConfig as CoreConfig, PartitionSequence, PermutationKind};
use mcv::geometry::{Lattice, Window};
use mcv::imageio::{load_pnm, ImageBuffer};
use mcv::metrics::rand_index;
use mcv::mrf::{Metric, MrfModel};
use mcv::partition::{canonicalize, components_by_class, ClassMap, MergeLabel, Partition};
use mcv::Error;

pub const MCV_PERMUTATION_RASTER: u32 = 0;
pub const MCV_PERMUTATION_RANDOM: u32 = 1;

pub const MCV_METRIC_EUCLIDEAN: u32 = 0;
pub const MCV_METRIC_PER_BAND_ABS: u32 = 1;

pub const MCV_EVAL_DIRECT: u32 = 0;
pub const MCV_EVAL_PYRAMID: u32 = 1;

pub const MCV_MERGE_LABEL_CENTER: u32 = 0;
pub const MCV_MERGE_LABEL_FRESH: u32 = 1;

/// Result of a fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum McvStatus {
    Ok = 0,
    NullArgument = 1,
    Domain = 2,
    Parse = 3,
    LabelOverflow = 4,
    Capacity = 5,
    Config = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Image handle.
pub struct McvImage(ImageBuffer);

/// Segmentation settings handle.
pub struct McvConfig {
    core: CoreConfig,
}

/// Result of a segmentation: levels `0..=max_level`, level 0 being singletons.
pub struct McvSequence(PartitionSequence);

/// Per-level counters of a segmentation run.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct McvLevelStats {
    pub level: u32,
    pub evaluations: u64,
    pub accepted_merges: u64,
    pub relabelled: u64,
    pub regions: u64,
    pub coarsens_previous: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: McvStatus, msg: impl Into<String>) -> McvStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> McvStatus {
    let status = match &e {
        Error::Domain(_) => McvStatus::Domain,
        Error::Parse { .. } => McvStatus::Parse,
        Error::LabelOverflow { .. } => McvStatus::LabelOverflow,
        Error::Capacity(_) => McvStatus::Capacity,
        Error::Config(_) => McvStatus::Config,
        Error::Io(_) => McvStatus::Io,
    };
    fail(status, e.to_string())
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), McvStatus>) -> McvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => McvStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(McvStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, McvStatus>;
}

impl<T> OrStatus<T> for mcv::Result<T> {
    fn or_status(self) -> Result<T, McvStatus> {
        self.map_err(from_error)
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, McvStatus> {
    p.as_ref().ok_or_else(|| fail(McvStatus::NullArgument, format!("{what} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, McvStatus> {
    p.as_mut().ok_or_else(|| fail(McvStatus::NullArgument, format!("{what} is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], McvStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(McvStatus::NullArgument, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn lattice(width: u32, height: u32) -> Result<Lattice, McvStatus> {
    Lattice::new(width, height).or_status()
}

fn pixel_count(lat: Lattice) -> usize {
    lat.width() as usize * lat.height() as usize
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), McvStatus> {
    let slot = deref_mut(out, "output pointer")?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mcv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mcv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Decodes a PGM or PPM held in memory.
#[no_mangle]
pub unsafe extern "C" fn mcv_image_load_pnm(data: *const u8, len: usize, out: *mut *mut McvImage) -> McvStatus {
    guard(|| {
        let bytes = slice(data, len, "data")?;
        let img = load_pnm(bytes).or_status()?;
        write_out(out, McvImage(img))
    })
}

/// Reads a PGM or PPM file.
#[no_mangle]
pub unsafe extern "C" fn mcv_image_read_pnm(path: *const c_char, out: *mut *mut McvImage) -> McvStatus {
    guard(|| {
        let path = deref(path, "path")?;
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(McvStatus::Domain, "path is not valid UTF-8"))?;
        let bytes = std::fs::read(path).map_err(|e| from_error(e.into()))?;
        let img = load_pnm(&bytes).or_status()?;
        write_out(out, McvImage(img))
    })
}

/// Builds an image from `width * height * bands` interleaved row-major samples.
#[no_mangle]
pub unsafe extern "C" fn mcv_image_new(
    width: u32,
    height: u32,
    bands: u32,
    max_value: u32,
    samples: *const f64,
    out: *mut *mut McvImage,
) -> McvStatus {
    guard(|| {
        let lat = lattice(width, height)?;
        let n = pixel_count(lat)
            .checked_mul(bands as usize)
            .ok_or_else(|| fail(McvStatus::Capacity, "sample count overflows"))?;
        let data = slice(samples, n, "samples")?.to_vec();
        let img = ImageBuffer::new(lat, bands as usize, max_value, data).or_status()?;
        write_out(out, McvImage(img))
    })
}

/// Writes the image dimensions; any output pointer may be NULL.
#[no_mangle]
pub unsafe extern "C" fn mcv_image_shape(
    image: *const McvImage,
    width: *mut u32,
    height: *mut u32,
    bands: *mut u32,
) -> McvStatus {
    guard(|| {
        let img = &deref(image, "image")?.0;
        let lat = img.lattice();
        if let Some(w) = width.as_mut() {
            *w = lat.width();
        }
        if let Some(h) = height.as_mut() {
            *h = lat.height();
        }
        if let Some(b) = bands.as_mut() {
            *b = img.bands() as u32;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mcv_image_free(image: *mut McvImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// New settings holding the library defaults.
#[no_mangle]
pub extern "C" fn mcv_config_new() -> *mut McvConfig {
    Box::into_raw(Box::new(McvConfig { core: CoreConfig::default() }))
}

#[no_mangle]
pub unsafe extern "C" fn mcv_config_free(config: *mut McvConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

unsafe fn with_config(config: *mut McvConfig, f: impl FnOnce(&mut McvConfig) -> Result<(), McvStatus>) -> McvStatus {
    guard(|| f(deref_mut(config, "config")?))
}

fn bad_selector(what: &str, value: u32) -> McvStatus {
    fail(McvStatus::Domain, format!("unknown {what} selector {value}"))
}

#[no_mangle]
pub unsafe extern "C" fn mcv_config_set_max_level(config: *mut McvConfig, max_level: u32) -> McvStatus {
    with_config(config, |c| {
        let mut next = c.core.clone();
        next.max_level = max_level;
        next.validate().or_status()?;
        c.core = next;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mcv_config_set_seed(config: *mut McvConfig, seed: u64) -> McvStatus {
    with_config(config, |c| {
        c.core.seed = seed;
        Ok(())
    })
}

/// `MCV_PERMUTATION_RASTER` or `MCV_PERMUTATION_RANDOM`.
#[no_mangle]
pub unsafe extern "C" fn mcv_config_set_permutation(config: *mut McvConfig, kind: u32) -> McvStatus {
    with_config(config, |c| {
        c.core.permutation = match kind {
            MCV_PERMUTATION_RASTER => PermutationKind::Raster,
            MCV_PERMUTATION_RANDOM => PermutationKind::Random,
            other => return Err(bad_selector("permutation", other)),
        };
        Ok(())
    })
}

/// Visits pixels in the given zero-based row-major order. The array is
/// copied; its length must equal the pixel count of the segmented image.
#[no_mangle]
pub unsafe extern "C" fn mcv_config_set_explicit_permutation(
    config: *mut McvConfig,
    indices: *const u32,
    len: usize,
) -> McvStatus {
    with_config(config, |c| {
        let order = slice(indices, len, "indices")?.to_vec();
        c.core.permutation = PermutationKind::Explicit(order);
        Ok(())
    })
}

/// Per-pixel energy threshold; must be finite and non-negative.
#[no_mangle]
pub unsafe extern "C" fn mcv_config_set_rho(config: *mut McvConfig, rho: f64) -> McvStatus {
    with_config(config, |c| {
        c.core.model = c.core.model.clone().with_rho(rho).or_status()?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mcv_config_set_temperature(config: *mut McvConfig, temperature: f64) -> McvStatus {
    with_config(config, |c| {
        c.core.model = c.core.model.clone().with_temperature(temperature).or_status()?;
        Ok(())
    })
}

/// `MCV_METRIC_EUCLIDEAN` or `MCV_METRIC_PER_BAND_ABS`.
#[no_mangle]
pub unsafe extern "C" fn mcv_config_set_metric(config: *mut McvConfig, metric: u32) -> McvStatus {
    with_config(config, |c| {
        let metric = match metric {
            MCV_METRIC_EUCLIDEAN => Metric::Euclidean,
            MCV_METRIC_PER_BAND_ABS => Metric::PerBandAbs,
            other => return Err(bad_selector("metric", other)),
        };
        c.core.model = c.core.model.clone().with_metric(metric);
        Ok(())
    })
}

/// `MCV_EVAL_DIRECT` or `MCV_EVAL_PYRAMID`.
#[no_mangle]
pub unsafe extern "C" fn mcv_config_set_eval_mode(config: *mut McvConfig, mode: u32) -> McvStatus {
    with_config(config, |c| {
        c.core.eval_mode = match mode {
            MCV_EVAL_DIRECT => EvalMode::Direct,
            MCV_EVAL_PYRAMID => EvalMode::Pyramid,
            other => return Err(bad_selector("evaluation mode", other)),
        };
        Ok(())
    })
}

/// `MCV_MERGE_LABEL_CENTER` or `MCV_MERGE_LABEL_FRESH`.
#[no_mangle]
pub unsafe extern "C" fn mcv_config_set_merge_label(config: *mut McvConfig, label: u32) -> McvStatus {
    with_config(config, |c| {
        c.core.merge_label = match label {
            MCV_MERGE_LABEL_CENTER => MergeLabel::Center,
            MCV_MERGE_LABEL_FRESH => MergeLabel::Fresh,
            other => return Err(bad_selector("merge label", other)),
        };
        Ok(())
    })
}

/// 4 or 8; sets the adjacency window, the evaluation structuring element
/// and the model neighbourhood together.
#[no_mangle]
pub unsafe extern "C" fn mcv_config_set_neighborhood(config: *mut McvConfig, connectivity: u32) -> McvStatus {
    with_config(config, |c| {
        let w = match connectivity {
            4 => Window::five(),
            8 => Window::nine(),
            other => return Err(fail(McvStatus::Domain, format!("neighborhood must be 4 or 8, got {other}"))),
        };
        let m = &c.core.model;
        let model = MrfModel::new(w.clone())
            .with_metric(m.metric())
            .with_temperature(m.temperature())
            .and_then(|n| n.with_rho(m.rho()))
            .or_status()?;
        c.core.model = model;
        c.core.w0 = w.clone();
        c.core.g = w;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mcv_config_set_workers(config: *mut McvConfig, workers: u32) -> McvStatus {
    with_config(config, |c| {
        if workers == 0 {
            return Err(fail(McvStatus::Config, "worker count must be positive"));
        }
        c.core.workers = workers as usize;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mcv_config_set_reshuffle_per_level(config: *mut McvConfig, reshuffle: bool) -> McvStatus {
    with_config(config, |c| {
        c.core.reshuffle_per_level = reshuffle;
        Ok(())
    })
}

/// Segments `image`; `config` may be NULL for the defaults.
#[no_mangle]
pub unsafe extern "C" fn mcv_segment(
    image: *const McvImage,
    config: *const McvConfig,
    out: *mut *mut McvSequence,
) -> McvStatus {
    guard(|| {
        let img = &deref(image, "image")?.0;
        let default;
        let cfg = match config.as_ref() {
            Some(c) => &c.core,
            None => {
                default = CoreConfig::default();
                &default
            }
        };
        let seq = run_mcv(img, cfg).or_status()?;
        write_out(out, McvSequence(seq))
    })
}

/// Number of stored partitions, `max_level + 1`.
#[no_mangle]
pub unsafe extern "C" fn mcv_sequence_level_count(sequence: *const McvSequence) -> usize {
    sequence.as_ref().map_or(0, |s| s.0.levels.len())
}

unsafe fn level<'a>(sequence: *const McvSequence, level: u32) -> Result<&'a Partition, McvStatus> {
    let seq = &deref(sequence, "sequence")?.0;
    seq.levels.get(level as usize).ok_or_else(|| {
        fail(McvStatus::Domain, format!("level {level} out of range 0..{}", seq.levels.len()))
    })
}

/// Copies the row-major labels of `level` into `out`, which must hold at
/// least `width * height` entries. Labels are numbered from 0 in raster
/// order of first occurrence.
#[no_mangle]
pub unsafe extern "C" fn mcv_sequence_labels(
    sequence: *const McvSequence,
    level_index: u32,
    out: *mut u32,
    capacity: usize,
) -> McvStatus {
    guard(|| {
        let labels = canonicalize(level(sequence, level_index)?);
        let labels = labels.labels();
        if capacity < labels.len() {
            return Err(fail(
                McvStatus::BufferTooSmall,
                format!("buffer holds {capacity} labels, {} needed", labels.len()),
            ));
        }
        if out.is_null() {
            return Err(fail(McvStatus::NullArgument, "out is null"));
        }
        ptr::copy_nonoverlapping(labels.as_ptr(), out, labels.len());
        Ok(())
    })
}

/// Counters of `level`, which runs from 1 to `max_level`.
#[no_mangle]
pub unsafe extern "C" fn mcv_sequence_stats(
    sequence: *const McvSequence,
    level_index: u32,
    out: *mut McvLevelStats,
) -> McvStatus {
    guard(|| {
        let seq = &deref(sequence, "sequence")?.0;
        let s = seq
            .stats
            .iter()
            .find(|s| s.level == level_index)
            .ok_or_else(|| fail(McvStatus::Domain, format!("no statistics for level {level_index}")))?;
        *deref_mut(out, "out")? = McvLevelStats {
            level: s.level,
            evaluations: s.evaluations as u64,
            accepted_merges: s.accepted_merges as u64,
            relabelled: s.relabelled as u64,
            regions: s.regions as u64,
            coarsens_previous: s.coarsens_previous,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mcv_sequence_free(sequence: *mut McvSequence) {
    if !sequence.is_null() {
        drop(Box::from_raw(sequence));
    }
}

/// Rand index of two row-major labelings on a `width × height` lattice.
#[no_mangle]
pub unsafe extern "C" fn mcv_rand_index(
    a: *const u32,
    b: *const u32,
    width: u32,
    height: u32,
    out: *mut f64,
) -> McvStatus {
    guard(|| {
        let lat = lattice(width, height)?;
        let n = pixel_count(lat);
        let pa = Partition::from_vec(lat, slice(a, n, "a")?.to_vec()).or_status()?;
        let pb = Partition::from_vec(lat, slice(b, n, "b")?.to_vec()).or_status()?;
        *deref_mut(out, "out")? = rand_index(&pa, &pb).or_status()?;
        Ok(())
    })
}

/// 8-connected components of each class of a row-major class map, written
/// to `out` (`width * height` entries) numbered from 0 in raster order.
#[no_mangle]
pub unsafe extern "C" fn mcv_components(classes: *const u32, width: u32, height: u32, out: *mut u32) -> McvStatus {
    guard(|| {
        let lat = lattice(width, height)?;
        let n = pixel_count(lat);
        let cm = ClassMap::new(lat, slice(classes, n, "classes")?.to_vec()).or_status()?;
        let parts = canonicalize(&components_by_class(&cm, &Window::nine()));
        if out.is_null() {
            return Err(fail(McvStatus::NullArgument, "out is null"));
        }
        ptr::copy_nonoverlapping(parts.labels().as_ptr(), out, n);
        Ok(())
    })
}
