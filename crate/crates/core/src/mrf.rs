//! Autoregressive Gaussian Markov random field image model.
//!
//! The energy of an image `ω` on a region `R` is
//!
//! ```text
//! U(ω) = Σ_{x ∈ R} d(ω(x), Σ_{y ∈ G_x} θ_x(y) ω(y))²
//! ```
//!
//! where `G_x` are the in-region neighbours of `x` and the weights are
//! renormalized over them. A patch is acceptable when its per-pixel energy
//! `U / |R|` does not exceed the threshold `ρ`, which is the same as asking
//! that its Gibbs probability `exp(-U/T) / Z` reach `τ = exp(-ρ|R|/T) / Z`.
//!
//! Besides the evaluator this module carries a brute-force Gibbs table for
//! tiny regions and a Metropolis sampler used to calibrate `ρ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};
use crate::geometry::{Lattice, Offset, Window};
use crate::imageio::ImageBuffer;

/// Distance between a pixel value and its autoregressive prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Metric {
    /// `(Σ_i (v_i - u_i)²)^½`
    #[default]
    Euclidean,
    /// `Σ_i |v_i - u_i|`
    PerBandAbs,
}

impl Metric {
    #[inline]
    fn squared(self, dev: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => dev.iter().map(|d| d * d).sum(),
            Metric::PerBandAbs => {
                let s: f64 = dev.iter().map(|d| d.abs()).sum();
                s * s
            }
        }
    }
}

/// Default per-pixel energy threshold, in squared sample units.
pub const DEFAULT_RHO: f64 = 100.0;

#[derive(Clone, Debug, PartialEq)]
pub struct MrfModel {
    neighborhood: Window,
    neighbors: Vec<Offset>,
    weights: Vec<f64>,
    metric: Metric,
    temperature: f64,
    rho: f64,
}

impl MrfModel {
    /// Uniform weights over the non-origin offsets of `neighborhood`,
    /// Euclidean metric, `T = 1` and the default threshold.
    pub fn new(neighborhood: Window) -> Self {
        let neighbors = neighborhood.neighbors();
        let weights = vec![1.0 / neighbors.len().max(1) as f64; neighbors.len()];
        MrfModel {
            neighborhood,
            neighbors,
            weights,
            metric: Metric::Euclidean,
            temperature: 1.0,
            rho: DEFAULT_RHO,
        }
    }

    /// One non-negative weight per non-origin offset, in raster order.
    /// Weights are normalized to sum to one.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.neighbors.len() {
            return domain(format!(
                "expected {} weights, got {}",
                self.neighbors.len(),
                weights.len()
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return domain("weights must be finite and non-negative");
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return domain("weights must not all be zero");
        }
        self.weights = weights.into_iter().map(|w| w / total).collect();
        Ok(self)
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Result<Self> {
        if !(t.is_finite() && t > 0.0) {
            return domain(format!("temperature must be positive, got {t}"));
        }
        self.temperature = t;
        Ok(self)
    }

    pub fn with_rho(mut self, rho: f64) -> Result<Self> {
        if rho.is_nan() || rho < 0.0 {
            return domain(format!("rho must be non-negative, got {rho}"));
        }
        self.rho = rho;
        Ok(self)
    }

    pub fn neighborhood(&self) -> &Window {
        &self.neighborhood
    }

    /// Non-origin offsets paired with their weights.
    pub fn weighted_neighbors(&self) -> impl Iterator<Item = (Offset, f64)> + '_ {
        self.neighbors.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Squared distance of a deviation vector under the model's metric.
    #[inline]
    pub(crate) fn squared_distance(&self, dev: &[f64]) -> f64 {
        self.metric.squared(dev)
    }

    /// Acceptance test on a total energy over `n` pixels.
    #[inline]
    pub(crate) fn accepts(&self, energy: f64, n: usize) -> bool {
        energy <= self.rho * n as f64
    }
}

/// A region `R` inside a `width x height` box; `mask` is row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl Region {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return domain(format!("mask has {} entries for a {width}x{height} box", mask.len()));
        }
        Ok(Region { width, height, mask })
    }

    /// The full box.
    pub fn rect(width: usize, height: usize) -> Self {
        Region { width, height, mask: vec![true; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// `|R|`.
    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub(crate) fn index_of(&self, col: i64, row: i64) -> Option<usize> {
        if col < 0 || row < 0 || col >= self.width as i64 || row >= self.height as i64 {
            return None;
        }
        let i = row as usize * self.width + col as usize;
        self.mask[i].then_some(i)
    }

    /// Box indices of region members, in raster order.
    pub(crate) fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }
}

/// Image values on a region. Samples are pixel-major over the whole box;
/// values outside the region are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    region: Region,
    bands: usize,
    samples: Vec<f64>,
}

impl Patch {
    pub fn new(region: Region, bands: usize, samples: Vec<f64>) -> Result<Self> {
        if bands == 0 {
            return domain("patch must have at least one band");
        }
        if samples.len() != region.width * region.height * bands {
            return domain(format!(
                "expected {} samples, got {}",
                region.width * region.height * bands,
                samples.len()
            ));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return domain("patch samples must be finite");
        }
        Ok(Patch { region, bands, samples })
    }

    /// Single-band patch covering a full box, from rows of values.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return domain("rows must have equal length");
        }
        let samples = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Patch::new(Region::rect(width, height), 1, samples)
    }

    /// Extracts `ω` on `(center + window) ∩ lattice`. The patch box is the
    /// window's clipped bounding rectangle.
    pub fn from_image(img: &ImageBuffer, center: usize, window: &Window) -> Patch {
        let lat: Lattice = img.lattice();
        let b = window.clipped_bounds(&lat, center);
        let (cx, cy) = lat.coords(center);
        let width = b.col1 - b.col0 + 1;
        let height = b.row1 - b.row0 + 1;
        let bands = img.bands();
        let mut samples = Vec::with_capacity(width * height * bands);
        let mut mask = Vec::with_capacity(width * height);
        let square = window.is_square();
        let lw = lat.width() as usize;
        for row in b.row0..=b.row1 {
            let start = (row * lw + b.col0) * bands;
            samples.extend_from_slice(&img.samples()[start..start + width * bands]);
            for col in b.col0..=b.col1 {
                mask.push(
                    square
                        || window.contains(Offset::new(
                            (col as i64 - cx) as i32,
                            (row as i64 - cy) as i32,
                        )),
                );
            }
        }
        Patch { region: Region { width, height, mask }, bands, samples }
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    #[inline]
    pub fn value(&self, i: usize) -> &[f64] {
        &self.samples[i * self.bands..(i + 1) * self.bands]
    }

    /// Applies `f` to every sample.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Patch {
        Patch {
            region: self.region.clone(),
            bands: self.bands,
            samples: self.samples.iter().map(|&s| f(s)).collect(),
        }
    }
}

fn energy_unchecked(patch: &Patch, model: &MrfModel, dev: &mut Vec<f64>) -> f64 {
    let r = &patch.region;
    let b = patch.bands;
    dev.clear();
    dev.resize(b, 0.0);
    let mut total = 0.0;
    for i in r.members() {
        let (cx, cy) = ((i % r.width) as i64, (i / r.width) as i64);
        let mut weight_sum = 0.0;
        for (o, w) in model.weighted_neighbors() {
            if r.index_of(cx + o.dx as i64, cy + o.dy as i64).is_some() {
                weight_sum += w;
            }
        }
        if weight_sum <= 0.0 {
            continue;
        }
        dev.iter_mut().for_each(|d| *d = 0.0);
        let own = patch.value(i);
        for (o, w) in model.weighted_neighbors() {
            if let Some(j) = r.index_of(cx + o.dx as i64, cy + o.dy as i64) {
                let scale = w / weight_sum;
                for (d, (y, x)) in dev.iter_mut().zip(patch.value(j).iter().zip(own)) {
                    *d += scale * (y - x);
                }
            }
        }
        total += model.squared_distance(dev);
    }
    total
}

/// Autoregressive energy `U(ω)` of a patch. Pixels without in-region
/// neighbours contribute nothing.
pub fn energy(patch: &Patch, model: &MrfModel) -> Result<f64> {
    if patch.region.is_empty() {
        return domain("energy of an empty region");
    }
    Ok(energy_unchecked(patch, model, &mut Vec::new()))
}

/// Homogeneity test: true iff `U(ω) / |R| <= ρ`.
pub fn evaluate(patch: &Patch, model: &MrfModel) -> Result<bool> {
    let u = energy(patch, model)?;
    Ok(model.accepts(u, patch.region.len()))
}

/// Reusable scratch for evaluating many patches.
#[derive(Default)]
pub(crate) struct Evaluator {
    dev: Vec<f64>,
}

impl Evaluator {
    pub(crate) fn evaluate(&mut self, patch: &Patch, model: &MrfModel) -> bool {
        let n = patch.region.len();
        n > 0 && model.accepts(energy_unchecked(patch, model, &mut self.dev), n)
    }
}

/// Largest state space [`gibbs_distribution`] will enumerate.
pub const MAX_GIBBS_STATES: usize = 1 << 20;

/// The Gibbs distribution over every image on a tiny region.
///
/// State `k` assigns value index `(k / |V|^j) % |V|` to the `j`-th region
/// pixel in raster order.
#[derive(Clone, Debug)]
pub struct GibbsTable {
    region_len: usize,
    value_count: usize,
    temperature: f64,
    energies: Vec<f64>,
    probabilities: Vec<f64>,
    /// `-(U - U_min)/T`, kept for threshold comparisons without underflow.
    shifted_log_weights: Vec<f64>,
    min_energy: f64,
    log_weight_sum: f64,
}

impl GibbsTable {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// `ln Z(T)`.
    pub fn log_partition(&self) -> f64 {
        -self.min_energy / self.temperature + self.log_weight_sum
    }

    /// Value indices of state `k`, one per region pixel.
    pub fn state(&self, mut k: usize) -> Vec<usize> {
        (0..self.region_len)
            .map(|_| {
                let v = k % self.value_count;
                k /= self.value_count;
                v
            })
            .collect()
    }

    /// `ln π` of state `k`.
    pub fn log_probability(&self, k: usize) -> f64 {
        self.shifted_log_weights[k] - self.log_weight_sum
    }

    /// `E[U]` under the distribution.
    pub fn mean_energy(&self) -> f64 {
        self.energies.iter().zip(&self.probabilities).map(|(u, p)| u * p).sum()
    }
}

fn check_values(values: &[Vec<f64>]) -> Result<usize> {
    let Some(first) = values.first() else {
        return domain("value set must not be empty");
    };
    let bands = first.len();
    if bands == 0 || values.iter().any(|v| v.len() != bands || v.iter().any(|s| !s.is_finite())) {
        return domain("values must be finite vectors of equal, positive length");
    }
    Ok(bands)
}

fn patch_for_state(region: &Region, bands: usize, values: &[Vec<f64>], state: &[usize]) -> Patch {
    let mut samples = vec![0.0; region.width * region.height * bands];
    for (i, &v) in region.members().zip(state) {
        samples[i * bands..(i + 1) * bands].copy_from_slice(&values[v]);
    }
    Patch { region: region.clone(), bands, samples }
}

/// Enumerates `π(ω) = exp(-U(ω)/T) / Z(T)` over all `ω : R -> V`.
pub fn gibbs_distribution(region: &Region, values: &[Vec<f64>], model: &MrfModel) -> Result<GibbsTable> {
    let bands = check_values(values)?;
    let n = region.len();
    if n == 0 {
        return domain("region must not be empty");
    }
    let states = (values.len() as u128).checked_pow(n as u32).filter(|&s| s <= MAX_GIBBS_STATES as u128);
    let Some(states) = states else {
        return Err(Error::Capacity(format!(
            "|V|^|R| = {}^{} exceeds {MAX_GIBBS_STATES} states",
            values.len(),
            n
        )));
    };
    let states = states as usize;
    let t = model.temperature();

    let mut dev = Vec::new();
    let mut state = vec![0usize; n];
    let mut energies = Vec::with_capacity(states);
    for _ in 0..states {
        let patch = patch_for_state(region, bands, values, &state);
        energies.push(energy_unchecked(&patch, model, &mut dev));
        // Odometer increment, least significant pixel first.
        for digit in state.iter_mut() {
            *digit += 1;
            if *digit < values.len() {
                break;
            }
            *digit = 0;
        }
    }

    let min_energy = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted_log_weights: Vec<f64> = energies.iter().map(|u| -(u - min_energy) / t).collect();
    let weights: Vec<f64> = shifted_log_weights.iter().map(|l| l.exp()).collect();
    let weight_sum: f64 = weights.iter().sum();
    let probabilities = weights.iter().map(|w| w / weight_sum).collect();
    Ok(GibbsTable {
        region_len: n,
        value_count: values.len(),
        temperature: t,
        energies,
        probabilities,
        shifted_log_weights,
        min_energy,
        log_weight_sum: weight_sum.ln(),
    })
}

/// Checks on the enumerated state space that thresholding `π` at
/// `τ = exp(-ρ|R|/T) / Z` accepts exactly the states with `U <= ρ|R|`.
///
/// `π(ω) >= τ` is decided by the sign of `T ln(π(ω)/τ) = ρ|R| - U`, in which
/// `Z` cancels and the sign is exact in floating point. The same ratio
/// taken from the table's normalized log-probabilities must agree with it to
/// within `1e-9`.
pub fn tau_rho_consistency(region: &Region, values: &[Vec<f64>], model: &MrfModel) -> Result<bool> {
    let table = gibbs_distribution(region, values, model)?;
    let rho_total = model.rho() * region.len() as f64;
    let t = table.temperature;
    let log_tau = -(rho_total - table.min_energy) / t - table.log_weight_sum;
    Ok((0..table.len()).all(|k| {
        let u = table.energies[k];
        let scaled = rho_total - u;
        let log_ratio = scaled / t;
        let from_table = table.log_probability(k) - log_tau;
        let by_probability = scaled >= 0.0;
        let by_energy = model.accepts(u, region.len());
        by_probability == by_energy && (from_table - log_ratio).abs() <= 1e-9 * log_ratio.abs().max(1.0)
    }))
}

/// Result of a Metropolis threshold calibration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhoEstimate {
    /// Mean per-pixel energy `U / |R|` along the chain.
    pub rho: f64,
    /// Batch-means standard error of `rho`.
    pub std_error: f64,
    pub acceptance_rate: f64,
}

const CALIBRATION_BATCHES: usize = 20;

/// Estimates `ρ` as the equilibrium mean of `U / |R|` under the Gibbs
/// distribution, sampled with a single-site Metropolis chain.
///
/// The chain starts from a uniformly random state, proposes a uniformly
/// random site and value, and accepts with probability `min(1, exp(-ΔU/T))`.
/// The first `samples / 10` steps are discarded; the next `samples` steps are
/// averaged. The generator is ChaCha8 seeded with `seed`.
pub fn calibrate_rho(
    region: &Region,
    values: &[Vec<f64>],
    model: &MrfModel,
    samples: usize,
    seed: u64,
) -> Result<RhoEstimate> {
    if samples == 0 {
        return domain("sample count must be positive");
    }
    let bands = check_values(values)?;
    let n = region.len();
    if n == 0 {
        return domain("region must not be empty");
    }
    let t = model.temperature();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state: Vec<usize> = (0..n).map(|_| rng.gen_range(0..values.len())).collect();
    let mut patch = patch_for_state(region, bands, values, &state);
    let members: Vec<usize> = region.members().collect();
    let mut dev = Vec::new();
    let mut current = energy_unchecked(&patch, model, &mut dev);

    let burn_in = samples / 10;
    let mut accepted = 0usize;
    let mut trace = Vec::with_capacity(samples);
    for step in 0..burn_in + samples {
        let site = rng.gen_range(0..n);
        let proposal = rng.gen_range(0..values.len());
        let u: f64 = rng.gen();
        if proposal != state[site] {
            let i = members[site];
            patch.samples[i * bands..(i + 1) * bands].copy_from_slice(&values[proposal]);
            let candidate = energy_unchecked(&patch, model, &mut dev);
            let delta = candidate - current;
            if delta <= 0.0 || u < (-delta / t).exp() {
                state[site] = proposal;
                current = candidate;
                accepted += 1;
            } else {
                patch.samples[i * bands..(i + 1) * bands].copy_from_slice(&values[state[site]]);
            }
        } else {
            accepted += 1;
        }
        if step >= burn_in {
            trace.push(current / n as f64);
        }
    }

    let mean = trace.iter().sum::<f64>() / samples as f64;
    let batches = CALIBRATION_BATCHES.min(samples);
    let batch_len = samples / batches;
    let batch_means: Vec<f64> = trace
        .chunks_exact(batch_len)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let std_error = if batches > 1 {
        let bm = batch_means.iter().sum::<f64>() / batches as f64;
        let var = batch_means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
        (var / batches as f64).sqrt()
    } else {
        0.0
    };
    Ok(RhoEstimate {
        rho: mean,
        std_error,
        acceptance_rate: accepted as f64 / (burn_in + samples) as f64,
    })
}

/// The neighbourhood system `G^(2)` with respect to which the
/// autoregressive energy is a proper MRF energy: `G` composed with itself.
pub fn neighborhood_squared(g: &Window) -> Window {
    g.dilate(2).expect("two is a valid dilation count")
}
