//! Synthetic MIMO radar toolkit for contrastive self-supervised pretraining:
//! scene and tensor simulation, raw-signal augmentations, a small encoder
//! with hand-written gradients, intra- and cross-modal InfoNCE losses, a
//! pretraining loop, and detection and probe metrics.

pub mod augment;
pub mod checkpoint;
pub mod contrastive;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod probe;
pub mod rng;
pub mod simulator;
pub mod tensor;
pub mod trainer;

pub use augment::{AugmentOp, AugmentStep, AugmentationSpec, ViewPair};
pub use checkpoint::Checkpoint;
pub use contrastive::{ContrastiveConfig, EmbeddingBatch, LossGradients, LossTerms, NegativesVariant};
pub use dataset::{Dataset, Frame, Manifest, SceneGenConfig};
pub use encoder::{EncoderConfig, EncoderParams, EncoderShape, VisionOracle};
pub use error::{Error, Result};
pub use eval::{Detection, DetectionReport, GroundTruth};
pub use model::{ArrayGeometry, PolarGrid, RotatedBox, Scatterer, Scene};
pub use probe::{ProbeConfig, ProbeReport};
pub use rng::RngStream;
pub use simulator::SimConfig;
pub use tensor::{Heatmap, VirtualArrayTensor};
pub use trainer::{PretrainOutcome, TrainConfig};
