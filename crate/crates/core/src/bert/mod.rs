//! Transformer encoder detector: pre-training, fine-tuning and window scans.

pub mod config;
pub mod model;
pub mod scan;
pub mod train;

pub use config::{ConfigError, TransformerConfig};
pub use model::{Encoded, FastSpec, CHECKPOINT_KIND};
pub use scan::{window_scan, window_starts, ScanReport, WindowScore};
pub use train::{
    confidences, finetune_loss, finetune_step, fit_classifier, make_pieces_and_pairs, pretrain_corpus, mask_for_mlm, mlm_count, pretrain_loss, pretrain_step,
    with_cls, BertError, LabeledSeq, MlmPolicy, MlmSample, NspData, NspPair, PretrainExample, PretrainLoss,
};
