//! Multi-modal identification of state-sponsored propaganda on social media.
//!
//! The pipeline turns raw post archives into balanced, deduplicated,
//! temporally split corpora, trains small text/image/multi-modal neural
//! classifiers from scratch, and explains their predictions:
//!
//! - [`corpus`]: text standardization, hashtag-importance keyword selection,
//!   perceptual image-hash deduplication, balanced monthly sampling, and
//!   temporal train/validation/continuous/delay splits.
//! - [`textvariants`]: the Original/Tag/Miss/Structure views of a post's text.
//! - [`tokenizer`]: corpus-trained subword vocabulary and `[CLS]`/`[SEP]`/`[PAD]`
//!   sequence encoding with word alignment.
//! - [`numerics`]: a dense f64 tensor library with reverse-mode automatic
//!   differentiation on a tape.
//! - [`model`]: seven visual feature extractors, a transformer text encoder,
//!   and the fused softmax classifier.
//! - [`training`]: batched SGD with validation-F1 early stopping.
//! - [`evaluation`]: classification metrics, ROC/AUC, TPR at zero FPR, and the
//!   cross-organization generalizability harness.
//! - [`explain`]: Grad-CAM heatmaps and attention-based word importance.
//! - [`synthetic`]: deterministic fixture generators so the whole pipeline can
//!   be exercised without any external data.

pub mod corpus;
pub mod evaluation;
pub mod explain;
pub mod gradcheck;
pub mod model;
pub mod numerics;
pub mod raster;
pub mod synthetic;
pub mod textvariants;
pub mod tokenizer;
pub mod training;

mod error;

pub use error::{Error, Result};
