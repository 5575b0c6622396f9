//! Multiresolution window pyramid.
//!
//! With `W_i = G^(i)`, an image on `W_{i+1}` is viewed at the next lower
//! resolution on `W_i` by replacing every pixel with the weighted mean of its
//! `G`-neighbourhood. Evaluating a level-`i` patch by lowering it `i - 1`
//! times and then running the MRF test on `W_1` is a fixed feed-forward
//! network; [`PyramidEvaluator`] stores that network's connections.
//!
//! Patches here are *centred*: their box is the square of side `2R + 1`
//! around the window origin, `R` being the window radius, and the mask marks
//! positions inside both the window and the image.

use crate::error::{domain, Result};
use crate::geometry::{Offset, Window};
use crate::imageio::ImageBuffer;
use crate::mrf::{MrfModel, Patch, Region};

/// Centred patch of `img` on `(center + window) ∩ lattice`.
pub fn centered_patch(img: &ImageBuffer, center: usize, window: &Window) -> Patch {
    let lat = img.lattice();
    let r = window.radius() as i64;
    let side = (2 * r + 1) as usize;
    let bands = img.bands();
    let (cx, cy) = lat.coords(center);
    let mut mask = Vec::with_capacity(side * side);
    let mut samples = vec![0.0; side * side * bands];
    for dy in -r..=r {
        for dx in -r..=r {
            let k = mask.len();
            let inside = window.contains(Offset::new(dx as i32, dy as i32));
            let at = if inside { lat.index_of(cx + dx, cy + dy) } else { None };
            if let Some(i) = at {
                samples[k * bands..(k + 1) * bands].copy_from_slice(img.pixel_at(i));
            }
            mask.push(at.is_some());
        }
    }
    Patch::new(Region::new(side, side, mask).expect("square mask"), bands, samples)
        .expect("finite image samples")
}

/// Checks `weights` against `g` and returns them normalized, or uniform
/// weights when `None`.
pub fn structuring_weights(g: &Window, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    let n = g.len();
    match weights {
        None => Ok(vec![1.0 / n as f64; n]),
        Some(w) => {
            if w.len() != n {
                return domain(format!("expected {n} weights, got {}", w.len()));
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return domain("weights must be finite and non-negative");
            }
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return domain("weights must not all be zero");
            }
            Ok(w.iter().map(|v| v / total).collect())
        }
    }
}

fn side_of(p: &Patch) -> Option<i64> {
    let r = p.region();
    (r.width() == r.height() && r.width() % 2 == 1).then_some(r.width() as i64)
}

/// One resolution step: from a centred patch on the finer window to a centred
/// patch on `coarse`.
///
/// Output pixel `x` exists where `x ∈ coarse` and `x` is present in the input.
/// Its value is the mean of the present inputs at `x + o`, `o ∈ g`, weighted
/// by `weights` (aligned with `g.offsets()`) and renormalized over the
/// present ones.
pub fn downsample(fine: &Patch, g: &Window, weights: &[f64], coarse: &Window) -> Result<Patch> {
    let offsets = g.offsets();
    if weights.len() != offsets.len() {
        return domain(format!("expected {} weights, got {}", offsets.len(), weights.len()));
    }
    let Some(fine_side) = side_of(fine) else {
        return domain("input patch is not centred on an odd square box");
    };
    let fine_r = fine_side / 2;
    let r = coarse.radius() as i64;
    if r > fine_r {
        return domain("coarse window is larger than the input patch");
    }
    let side = (2 * r + 1) as usize;
    let bands = fine.bands();
    let fr = fine.region();
    let mut mask = Vec::with_capacity(side * side);
    let mut samples = vec![0.0; side * side * bands];
    let mut acc = vec![0.0; bands];
    for dy in -r..=r {
        for dx in -r..=r {
            let k = mask.len();
            let own = fr.index_of(dx + fine_r, dy + fine_r);
            if own.is_none() || !coarse.contains(Offset::new(dx as i32, dy as i32)) {
                mask.push(false);
                continue;
            }
            let mut weight_sum = 0.0;
            let mut anchor: Option<usize> = None;
            for (o, &w) in offsets.iter().zip(weights) {
                if let Some(j) = fr.index_of(dx + fine_r + o.dx as i64, dy + fine_r + o.dy as i64) {
                    weight_sum += w;
                    anchor.get_or_insert(j);
                }
            }
            let anchor = anchor.expect("own position is present");
            let base = fine.value(anchor);
            acc.iter_mut().for_each(|a| *a = 0.0);
            if weight_sum > 0.0 {
                for (o, &w) in offsets.iter().zip(weights) {
                    if let Some(j) = fr.index_of(dx + fine_r + o.dx as i64, dy + fine_r + o.dy as i64) {
                        let scale = w / weight_sum;
                        for ((a, y), b) in acc.iter_mut().zip(fine.value(j)).zip(base) {
                            *a += scale * (y - b);
                        }
                    }
                }
            }
            for (b, (a, v)) in acc.iter().zip(base).enumerate() {
                samples[k * bands + b] = v + a;
            }
            mask.push(true);
        }
    }
    Patch::new(Region::new(side, side, mask)?, bands, samples)
}

/// A fully connected layer restricted to a fixed fan-in per node.
#[derive(Clone, Debug)]
struct Layer {
    /// Input box side.
    in_side: usize,
    /// Output box side.
    out_side: usize,
    /// Per output node: `None` when outside the output window, otherwise its
    /// own input node and its weighted input connections.
    nodes: Vec<Option<Node>>,
}

#[derive(Clone, Debug)]
struct Node {
    own: usize,
    inputs: Vec<(usize, f64)>,
}

/// The hardwired network that evaluates a level-`i` patch: `i - 1`
/// resolution-lowering layers, an autoregressive deviation layer on `W_1`, a
/// squared-norm layer and a threshold unit.
#[derive(Clone, Debug)]
pub struct PyramidEvaluator {
    windows: Vec<Window>,
    g: Window,
    weights: Vec<f64>,
    model: MrfModel,
    /// `layers[k]` maps level `k + 2` to level `k + 1`.
    layers: Vec<Layer>,
    /// Autoregressive connections on the `W_1` box.
    ar: Vec<Option<Node>>,
    ar_side: usize,
}

impl PyramidEvaluator {
    /// Builds the network for levels `1..=levels` with `W_i = g^(i)`.
    /// `weights` are the downsampling weights over `g.offsets()`; the
    /// threshold unit uses `model`.
    pub fn new(g: &Window, weights: Option<&[f64]>, model: MrfModel, levels: u32) -> Result<Self> {
        if levels == 0 {
            return domain("pyramid needs at least one level");
        }
        let weights = structuring_weights(g, weights)?;
        let windows: Vec<Window> = (1..=levels).map(|i| g.dilate(i)).collect::<Result<_>>()?;
        let offsets = g.offsets();

        let mut layers = Vec::new();
        for k in 1..windows.len() {
            let (fine, coarse) = (&windows[k], &windows[k - 1]);
            let fr = fine.radius() as i64;
            let cr = coarse.radius() as i64;
            let in_side = (2 * fr + 1) as usize;
            let out_side = (2 * cr + 1) as usize;
            let mut nodes = Vec::with_capacity(out_side * out_side);
            for dy in -cr..=cr {
                for dx in -cr..=cr {
                    if !coarse.contains(Offset::new(dx as i32, dy as i32)) {
                        nodes.push(None);
                        continue;
                    }
                    let at = |ox: i64, oy: i64| ((oy + fr) as usize) * in_side + (ox + fr) as usize;
                    let inputs = offsets
                        .iter()
                        .zip(&weights)
                        .map(|(o, &w)| (at(dx + o.dx as i64, dy + o.dy as i64), w))
                        .collect();
                    nodes.push(Some(Node { own: at(dx, dy), inputs }));
                }
            }
            layers.push(Layer { in_side, out_side, nodes });
        }

        let w1 = &windows[0];
        let r1 = w1.radius() as i64;
        let ar_side = (2 * r1 + 1) as usize;
        let mut ar = Vec::with_capacity(ar_side * ar_side);
        for dy in -r1..=r1 {
            for dx in -r1..=r1 {
                if !w1.contains(Offset::new(dx as i32, dy as i32)) {
                    ar.push(None);
                    continue;
                }
                let own = ((dy + r1) as usize) * ar_side + (dx + r1) as usize;
                let inputs = model
                    .weighted_neighbors()
                    .filter_map(|(o, w)| {
                        let (x, y) = (dx + o.dx as i64, dy + o.dy as i64);
                        (x.abs() <= r1 && y.abs() <= r1)
                            .then(|| (((y + r1) as usize) * ar_side + (x + r1) as usize, w))
                    })
                    .collect();
                ar.push(Some(Node { own, inputs }));
            }
        }

        Ok(PyramidEvaluator { windows, g: g.clone(), weights, model, layers, ar, ar_side })
    }

    pub fn levels(&self) -> u32 {
        self.windows.len() as u32
    }

    /// `W_i`, 1-based.
    pub fn window(&self, level: u32) -> &Window {
        &self.windows[level as usize - 1]
    }

    pub fn structuring_element(&self) -> &Window {
        &self.g
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn model(&self) -> &MrfModel {
        &self.model
    }

    /// Runs one resolution-lowering layer.
    fn lower(&self, layer: &Layer, input: &Patch) -> Patch {
        let bands = input.bands();
        let mask_in = input.region().mask();
        let n_out = layer.out_side * layer.out_side;
        let mut mask = vec![false; n_out];
        let mut samples = vec![0.0; n_out * bands];
        let mut acc = vec![0.0; bands];
        for (k, node) in layer.nodes.iter().enumerate() {
            let Some(node) = node else { continue };
            if !mask_in[node.own] {
                continue;
            }
            let mut weight_sum = 0.0;
            let mut anchor = None;
            for &(j, w) in &node.inputs {
                if mask_in[j] {
                    weight_sum += w;
                    anchor.get_or_insert(j);
                }
            }
            let base = input.value(anchor.expect("own node present"));
            acc.iter_mut().for_each(|a| *a = 0.0);
            if weight_sum > 0.0 {
                for &(j, w) in &node.inputs {
                    if mask_in[j] {
                        let scale = w / weight_sum;
                        for ((a, y), b) in acc.iter_mut().zip(input.value(j)).zip(base) {
                            *a += scale * (y - b);
                        }
                    }
                }
            }
            for (b, (a, v)) in acc.iter().zip(base).enumerate() {
                samples[k * bands + b] = v + a;
            }
            mask[k] = true;
        }
        let region = Region::new(layer.out_side, layer.out_side, mask).expect("square mask");
        Patch::new(region, bands, samples).expect("finite samples")
    }

    /// Deviation layer, squared-norm layer and threshold unit on `W_1`.
    /// Returns the energy alongside the decision.
    fn threshold(&self, p: &Patch) -> (f64, bool) {
        let mask = p.region().mask();
        let mut dev = vec![0.0; p.bands()];
        let mut energy = 0.0;
        let mut n = 0usize;
        for node in self.ar.iter().flatten() {
            if !mask[node.own] {
                continue;
            }
            n += 1;
            let weight_sum: f64 = node
                .inputs
                .iter()
                .filter(|(j, _)| mask[*j])
                .fold(0.0, |s, (_, w)| s + w);
            if weight_sum <= 0.0 {
                continue;
            }
            dev.iter_mut().for_each(|d| *d = 0.0);
            let own = p.value(node.own);
            for &(j, w) in &node.inputs {
                if mask[j] {
                    let scale = w / weight_sum;
                    for (d, (y, x)) in dev.iter_mut().zip(p.value(j).iter().zip(own)) {
                        *d += scale * (y - x);
                    }
                }
            }
            energy += self.model.squared_distance(&dev);
        }
        (energy, n > 0 && self.model.accepts(energy, n))
    }

    /// Energy of the `W_1` image the network derives from a level-`level` patch.
    pub fn energy(&self, patch: &Patch, level: u32) -> Result<f64> {
        self.run(patch, level).map(|(u, _)| u)
    }

    fn run(&self, patch: &Patch, level: u32) -> Result<(f64, bool)> {
        if level == 0 || level > self.levels() {
            return domain(format!("level {level} outside 1..={}", self.levels()));
        }
        let expected = 2 * self.window(level).radius() as usize + 1;
        if side_of(patch) != Some(expected as i64) {
            return domain(format!(
                "level {level} expects a centred {expected}x{expected} patch, got {}x{}",
                patch.region().width(),
                patch.region().height()
            ));
        }
        let mut current = patch.clone();
        for k in (0..level as usize - 1).rev() {
            debug_assert_eq!(self.layers[k].in_side, current.region().width());
            current = self.lower(&self.layers[k], &current);
        }
        debug_assert_eq!(current.region().width(), self.ar_side);
        if current.region().is_empty() {
            return domain("patch region is empty");
        }
        Ok(self.threshold(&current))
    }
}

/// Evaluates a centred level-`level` patch through the network.
pub fn pyramid_evaluate(patch: &Patch, level: u32, pe: &PyramidEvaluator) -> Result<bool> {
    pe.run(patch, level).map(|(_, accept)| accept)
}
