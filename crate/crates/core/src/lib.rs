//! Occlusion-robustness evaluation for image classifiers.
//!
//! The crate covers the whole pipeline: seeded mask generation
//! ([`maskgen`]), occlusion and mixed-sample transforms ([`occlude`]), a small
//! from-scratch CNN with Grad-CAM ([`refmodel`]), the iOcclusion and
//! CutOcclusion metrics ([`metrics`], [`eval`]), file formats ([`dataio`]) and
//! CSV/SVG/PNG output ([`report`], [`samples`]).
//!
//! ```
//! use occlubench::metrics::{i_occlusion, SplitAccuracy};
//!
//! let acc = SplitAccuracy { a_train: 0.9, a_test: 0.7, a_train_i: 0.6, a_test_i: 0.5 };
//! assert!((i_occlusion(&acc).unwrap() - 0.5).abs() < 1e-12);
//! ```

pub mod dataio;
pub mod error;
pub mod eval;
pub mod maskgen;
pub mod metrics;
pub mod occlude;
pub mod refmodel;
pub mod report;
pub mod samples;
pub mod seed;
pub mod types;

pub use error::{Error, Result};
pub use metrics::{MisclassDelta, RobustnessCurve, SeedSummary, SplitAccuracy};
pub use seed::SeedSequence;
pub use types::{Image, LabeledDataset, Mask, SaliencyMap, Shape, Split, SubsetIndex};
pub use dataio::{PredictionLog, PredictionRecord};
pub use maskgen::{FourierMaskParams, MaskBank};
pub use refmodel::{GradCamConfig, TinyCnn, TrainConfig};
