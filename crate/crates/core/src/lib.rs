//! Selective-prediction toolkit: confidence scoring from training-time
//! checkpoint traces, accuracy-coverage evaluation against the
//! perfect-ordering oracle, calibration auditing, the Mirage
//! uncertainty-induction attack, and constructive ReLU network surgery.

pub mod bundle;
pub mod calibration;
pub mod datagen;
pub mod error;
pub mod mirage;
pub mod numfmt;
pub mod region;
pub mod rng;
pub mod scoring;
pub mod seleval;
pub mod surgery;
pub mod trace;
pub mod trainer;

pub use error::{Error, Result};
pub use region::BoxRegion;
pub use rng::DetRng;
pub use trace::{
    argmax, predict_label, softmax_probs, Dataset, Label, LabeledExample, Orientation,
    PredictionTrace, ScoreEntry, ScoreTable, Task,
};
