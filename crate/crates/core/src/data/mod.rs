//! Dataset plumbing: the flat run configuration, the binary feature-grid
//! file format, the toy feature extractor, the synthetic scene generator and
//! the JSON-lines caption/label formats.

mod extract;
mod feature_file;
mod jsonl;
mod synth;

pub use extract::{toy_extract, TOY_FEATURE_DIM};
pub use feature_file::{read_feature_file, write_feature_file, FeatureFile, FeatureRecord};
pub use jsonl::{
    read_candidates, read_captions, read_fixations, read_labels, write_candidates,
    write_captions, write_labels, CandidateRecord, CaptionRecord, LabelRecord,
};
pub use synth::{synth_generate, Difficulty, SceneShape, SynthDataset, SynthOptions};

use crate::attention::AttentionVariant;
use std::fmt;
use std::str::FromStr;

pub type DataResult<T> = Result<T, DataError>;

#[derive(Debug)]
pub enum DataError {
    Io(std::io::Error),
    UnknownKey { key: String },
    BadValue { key: String, value: String },
    BadLine { path: String, line: usize, message: String },
    Format(String),
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io(e) => write!(f, "io: {e}"),
            Self::UnknownKey { key } => write!(f, "unknown config key '{key}'"),
            Self::BadValue { key, value } => {
                write!(f, "config key '{key}' rejects value '{value}'")
            }
            Self::BadLine {
                path,
                line,
                message,
            } => write!(f, "{path}:{line}: {message}"),
            Self::Format(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for DataError {}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

/// Where the gaze gate of a gaze-gated variant comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GazeSource {
    Fixations,
    Saliency,
}

impl GazeSource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fixations => "fixations",
            Self::Saliency => "saliency",
        }
    }
}

/// Flat run configuration: every semantic knob of the pipeline. Paths stay
/// out on purpose, so artifacts produced under different directories from
/// the same configuration compare byte-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: AttentionVariant,
    pub gaze_source: GazeSource,
    pub seed: u64,
    pub lambda: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub grad_clip: f64,
    pub min_word_freq: usize,
    pub max_len: usize,
    /// Beam width for decoding; 0 means greedy.
    pub beam: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub proj_dim: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub image_size: usize,
    pub n_fix: usize,
    pub p_fix: f64,
    pub difficulty: Difficulty,
    pub refs_per_image: usize,
    pub bms_delta: u32,
    /// Saliency blur sigma in pixels; 0 selects 0.03 * max(h, w).
    pub bms_blur: f64,
    pub occl_window: usize,
    pub occl_stride: usize,
    /// Mask fill: "mean" or "r,g,b".
    pub fill: String,
    pub bleu_smoothing: bool,
    pub wordpr_min_freq: usize,
    pub wordpr_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: AttentionVariant::Split,
            gaze_source: GazeSource::Fixations,
            seed: 1,
            lambda: 1.0,
            lr: 0.005,
            batch_size: 16,
            max_epochs: 20,
            patience: 3,
            grad_clip: 5.0,
            min_word_freq: 2,
            max_len: 20,
            beam: 0,
            embed_dim: 512,
            hidden_dim: 1400,
            proj_dim: 0,
            grid_h: 14,
            grid_w: 14,
            image_size: 64,
            n_fix: 6,
            p_fix: 0.8,
            difficulty: Difficulty::Medium,
            refs_per_image: 3,
            bms_delta: 8,
            bms_blur: 0.0,
            occl_window: 16,
            occl_stride: 8,
            fill: "mean".into(),
            bleu_smoothing: false,
            wordpr_min_freq: 10,
            wordpr_threshold: 0.05,
        }
    }
}

macro_rules! parse_into {
    ($self:ident, $key:ident, $value:ident, $field:ident) => {
        $self.$field = $value.parse().map_err(|_| DataError::BadValue {
            key: $key.to_string(),
            value: $value.to_string(),
        })?
    };
}

impl RunConfig {
    /// Applies one `key=value` setting; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> DataResult<()> {
        let bad = || DataError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        match key {
            "variant" => self.variant = AttentionVariant::from_str(value).map_err(|_| bad())?,
            "gaze_source" => {
                self.gaze_source = match value {
                    "fixations" => GazeSource::Fixations,
                    "saliency" => GazeSource::Saliency,
                    _ => return Err(bad()),
                }
            }
            "seed" => parse_into!(self, key, value, seed),
            "lambda" => parse_into!(self, key, value, lambda),
            "lr" => parse_into!(self, key, value, lr),
            "batch_size" => parse_into!(self, key, value, batch_size),
            "max_epochs" => parse_into!(self, key, value, max_epochs),
            "patience" => parse_into!(self, key, value, patience),
            "grad_clip" => parse_into!(self, key, value, grad_clip),
            "min_word_freq" => parse_into!(self, key, value, min_word_freq),
            "max_len" => parse_into!(self, key, value, max_len),
            "beam" => parse_into!(self, key, value, beam),
            "embed_dim" => parse_into!(self, key, value, embed_dim),
            "hidden_dim" => parse_into!(self, key, value, hidden_dim),
            "proj_dim" => parse_into!(self, key, value, proj_dim),
            "grid_h" => parse_into!(self, key, value, grid_h),
            "grid_w" => parse_into!(self, key, value, grid_w),
            "image_size" => parse_into!(self, key, value, image_size),
            "n_fix" => parse_into!(self, key, value, n_fix),
            "p_fix" => parse_into!(self, key, value, p_fix),
            "difficulty" => self.difficulty = Difficulty::from_str(value).map_err(|_| bad())?,
            "refs_per_image" => parse_into!(self, key, value, refs_per_image),
            "bms_delta" => parse_into!(self, key, value, bms_delta),
            "bms_blur" => parse_into!(self, key, value, bms_blur),
            "occl_window" => parse_into!(self, key, value, occl_window),
            "occl_stride" => parse_into!(self, key, value, occl_stride),
            "fill" => {
                parse_fill(value).ok_or_else(bad)?;
                self.fill = value.to_string();
            }
            "bleu_smoothing" => parse_into!(self, key, value, bleu_smoothing),
            "wordpr_min_freq" => parse_into!(self, key, value, wordpr_min_freq),
            "wordpr_threshold" => parse_into!(self, key, value, wordpr_threshold),
            _ => {
                return Err(DataError::UnknownKey {
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Loads a `key = value` file over the defaults. '#' starts a comment.
    pub fn from_file(path: &std::path::Path) -> DataResult<Self> {
        let mut config = Self::default();
        config.merge_file(path)?;
        Ok(config)
    }

    pub fn merge_file(&mut self, path: &std::path::Path) -> DataResult<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| DataError::BadLine {
                path: path.display().to_string(),
                line: lineno + 1,
                message: "expected key=value".into(),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Canonical single-line echo: `key=value` pairs, keys sorted, embedded
    /// into every emitted artifact.
    pub fn echo(&self) -> String {
        let mut entries = vec![
            format!("batch_size={}", self.batch_size),
            format!("beam={}", self.beam),
            format!("bleu_smoothing={}", self.bleu_smoothing),
            format!("bms_blur={}", self.bms_blur),
            format!("bms_delta={}", self.bms_delta),
            format!("difficulty={}", self.difficulty.as_str()),
            format!("embed_dim={}", self.embed_dim),
            format!("fill={}", self.fill),
            format!("gaze_source={}", self.gaze_source.as_str()),
            format!("grad_clip={}", self.grad_clip),
            format!("grid_h={}", self.grid_h),
            format!("grid_w={}", self.grid_w),
            format!("hidden_dim={}", self.hidden_dim),
            format!("image_size={}", self.image_size),
            format!("lambda={}", self.lambda),
            format!("lr={}", self.lr),
            format!("max_epochs={}", self.max_epochs),
            format!("max_len={}", self.max_len),
            format!("min_word_freq={}", self.min_word_freq),
            format!("n_fix={}", self.n_fix),
            format!("occl_stride={}", self.occl_stride),
            format!("occl_window={}", self.occl_window),
            format!("p_fix={}", self.p_fix),
            format!("patience={}", self.patience),
            format!("proj_dim={}", self.proj_dim),
            format!("refs_per_image={}", self.refs_per_image),
            format!("seed={}", self.seed),
            format!("variant={}", self.variant.as_str()),
            format!("wordpr_min_freq={}", self.wordpr_min_freq),
            format!("wordpr_threshold={}", self.wordpr_threshold),
        ];
        entries.sort();
        entries.join(" ")
    }

    pub fn fill_color(&self) -> Option<[u8; 3]> {
        parse_fill(&self.fill).expect("validated at set time")
    }
}

/// "mean" -> None (dataset mean), "r,g,b" -> Some(color). Outer None on a
/// malformed string.
#[allow(clippy::option_option)]
fn parse_fill(value: &str) -> Option<Option<[u8; 3]>> {
    if value == "mean" {
        return Some(None);
    }
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() != 3 {
        return None;
    }
    let mut rgb = [0u8; 3];
    for (slot, p) in rgb.iter_mut().zip(&parts) {
        *slot = p.trim().parse().ok()?;
    }
    Some(Some(rgb))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_echo_is_sorted_and_stable() {
        let c = RunConfig::default();
        let echo = c.echo();
        let keys: Vec<&str> = echo.split(' ').map(|e| e.split('=').next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(echo.contains("variant=split"));
        assert!(echo.contains("hidden_dim=1400"));
        assert!(echo.contains("grid_h=14"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut c = RunConfig::default();
        assert!(matches!(
            c.set("no_such_key", "1"),
            Err(DataError::UnknownKey { .. })
        ));
        assert!(matches!(
            c.set("lr", "fast"),
            Err(DataError::BadValue { .. })
        ));
    }

    #[test]
    fn config_file_round_trip_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "# experiment\nvariant = machine\nseed = 9\nlambda=0.5 # light reg\n\nfill = 10,20,30\n",
        )
        .unwrap();
        let c = RunConfig::from_file(&path).unwrap();
        assert_eq!(c.variant, AttentionVariant::Machine);
        assert_eq!(c.seed, 9);
        assert_eq!(c.lambda, 0.5);
        assert_eq!(c.fill_color(), Some([10, 20, 30]));
        let d = RunConfig::default();
        assert_eq!(d.fill_color(), None);
    }
}
