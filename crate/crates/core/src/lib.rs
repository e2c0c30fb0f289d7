//! Non-neural core of topology-aware adversarial road segmentation.
//!
//! The crate covers three areas:
//!
//! * [`labelgen`]: turning a (prediction, ground truth) pair into the
//!   multi-scale correct/incorrect label pyramid that supervises a patch
//!   discriminator, built on the binary-raster primitives in [`raster`].
//! * [`losses`]: reference BCE, discriminator and generator loss kernels with
//!   analytic gradients.
//! * [`metrics`]: pixel (CCQ) and topology (TLTS, APLS, JUNCT, Holes & Marbles)
//!   road-network evaluation over the geometric graphs in [`graph`].
//!
//! [`io`] holds the on-disk formats and [`cli`] the command-line driver.

pub mod cli;
pub mod error;
pub mod graph;
pub mod io;
pub mod labelgen;
pub mod losses;
pub mod metrics;
pub mod params;
pub mod raster;

pub use error::{Error, Result};
pub use graph::{Point, RoadGraph};
pub use labelgen::{LabelMatrix, LabelPyramid};
pub use losses::OutputPyramid;
pub use raster::{BinaryMask, ProbabilityMap, RealGrid};
