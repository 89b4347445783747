//! Per-unit depth-label classification of plenoptic mosaics.
//!
//! Labels are single depth levels or pairs of levels (two superposed
//! layers). A small convolutional network classifies `p x p`-unit view
//! patches; whole images share one conv pass and only the fully connected
//! head runs per unit.

mod dataset;
mod depthmap;
mod infer;
mod labels;
mod model;
pub mod net;
mod train;

pub use dataset::{generate_training_set, network_input, render_label, Dataset, DatasetManifest};
pub use depthmap::{labels_to_depth_maps, median_depths, DepthMapPair, NO_REFLECTION};
pub use infer::{classify_full_image, classify_sliding_window, shared_window_logits, sliding_window_logits, LabelMap};
pub use labels::{build_label_set, Label, LabelSet, DESK_MIN_GAP, REFERENCE_MIN_GAP};
pub use model::TrainedModel;
pub use net::{net_forward, Mode, NetArch, NetParams};
pub use train::{evaluate, net_train, Evaluation, TrainConfig, TrainOutcome};
