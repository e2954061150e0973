//! Gaze-assisted attention captioning at desk scale: a small f64 autodiff
//! tensor core, a soft-attention LSTM captioner whose attention energies can
//! be gated by a fixation histogram, a bottom-up saliency baseline, masking
//! and occlusion analysis harnesses, and caption metrics.

pub mod analysis;
pub mod attention;
pub mod captioner;
pub mod data;
pub mod gaze;
pub mod img;
pub mod metrics;
pub mod parallel;
pub mod saliency;
pub mod tensor;
pub mod text;
