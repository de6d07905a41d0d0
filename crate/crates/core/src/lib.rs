//! Box-counting fractal features for images, plus the tooling needed to put
//! them to work: similarity measures against recorded network activations
//! (CKA, CCA, rank correlations) and a small feed-forward classifier.
//!
//! The crate is organised by stage:
//!
//! * [`imagio`] loads grayscale images and dataset manifests and turns them
//!   into binary occupancy grids.
//! * [`fractal`] counts occupied boxes and fits the fractal dimension.
//! * [`features`] builds multi-scale ZFrac vectors, Prewitt baselines and the
//!   on-disk feature tables.
//! * [`simlab`] compares feature matrices with layer activations.
//! * [`shallownet`] trains and evaluates the two-hidden-layer classifier.
//! * [`cli`] wires everything into the `zfrac` binary.
//!
//! [`synth`] holds deterministic generators (fractal rasters, textures,
//! planted datasets) used by the tests, examples and benchmarks.

pub mod cli;
pub mod error;
pub mod features;
pub mod fractal;
pub mod imagio;
pub mod shallownet;
pub mod simlab;
pub mod synth;
mod util;

pub use error::{Error, Result};
pub use features::{extract_zfrac, ExtractConfig, FeatureTable, Threshold, WindowSchedule, ZFracVector};
pub use fractal::{box_count, box_count_series, fd_of_grid, fit_fd, BoxCountSeries, FractalEstimate};
pub use imagio::{BinaryGrid, DatasetManifest, GrayImage, Split};
pub use simlab::{ActivationMatrix, FeatureMatrix};
