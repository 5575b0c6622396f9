//! Sequential region-merging image segmentation.
//!
//! Each pixel starts as its own region. Level by level, pixels on region
//! boundaries have the image around them tested for homogeneity under an
//! autoregressive Gaussian Markov random field; homogeneous neighbourhoods
//! are merged within a window that doubles every level. The result is a
//! sequence of increasingly coarse partitions.
//!
//! Modules, bottom up: [`geometry`] (lattices and windows), [`imageio`]
//! (PNM and label-map codecs), [`partition`] (connected components and the
//! merge step), [`mrf`] (energy, Gibbs tables, threshold calibration),
//! [`pyramid`] (multiresolution evaluation), [`driver`] (the level loop),
//! [`metrics`] and [`cli`].

pub mod cli;
pub mod driver;
pub mod error;
pub mod geometry;
pub mod imageio;
pub mod metrics;
pub mod mrf;
pub mod partition;
pub mod pyramid;

pub use driver::{run_level, run_mcv, EvalMode, LevelStats, McvConfig, PartitionSequence, PermutationKind};
pub use error::{Error, Result};
pub use geometry::{Lattice, Offset, Pixel, PixelSet, Window};
pub use imageio::{ImageBuffer, LabelImage};
pub use metrics::rand_index;
pub use mrf::{Metric, MrfModel, Patch, Region};
pub use partition::{MergeLabel, Partition, ABSENT};
