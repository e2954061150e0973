//! Measurement harness around a pluggable classifier: accuracy under masks
//! of growing visible area, occlusion-based importance maps, and the mean
//! overlay with rank equalization.

use crate::gaze::{threshold_to_ratio, DenseMap, GazeError, Mask};
use crate::img::RgbImage;
use std::fmt;

pub type AnalysisResult<T> = Result<T, AnalysisError>;

#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisError {
    LengthMismatch {
        what: &'static str,
        images: usize,
        got: usize,
    },
    MissingLabels { index: usize },
    WindowTooLarge {
        window: usize,
        w: usize,
        h: usize,
    },
    BadStride,
    GeometryMismatch,
    EmptyInput,
    Gaze(GazeError),
}

impl fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LengthMismatch { what, images, got } => {
                write!(f, "{images} images but {got} {what}")
            }
            Self::MissingLabels { index } => write!(f, "image {index} has no labels"),
            Self::WindowTooLarge { window, w, h } => {
                write!(f, "occluder window {window} exceeds image {w}x{h}")
            }
            Self::BadStride => write!(f, "stride must be positive"),
            Self::GeometryMismatch => write!(f, "importance maps have mixed geometry"),
            Self::EmptyInput => write!(f, "need at least one input"),
            Self::Gaze(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for AnalysisError {}

impl From<GazeError> for AnalysisError {
    fn from(e: GazeError) -> Self {
        Self::Gaze(e)
    }
}

/// Deterministic scoring function over a fixed category list.
pub trait Classifier: Sync {
    fn categories(&self) -> usize;
    fn score(&self, img: &RgbImage) -> Vec<f64>;
}

/// Ignores pixels entirely; scores are fixed.
pub struct UniformClassifier {
    pub scores: Vec<f64>,
}

impl Classifier for UniformClassifier {
    fn categories(&self) -> usize {
        self.scores.len()
    }

    fn score(&self, _img: &RgbImage) -> Vec<f64> {
        self.scores.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn intersects_window(&self, wx: usize, wy: usize, window: usize) -> bool {
        wx < self.x1 && wx + window > self.x0 && wy < self.y1 && wy + window > self.y0
    }
}

/// Region oracle: reads only the pixels of one rectangle. Category 1 scores
/// the mean brightness of the region scaled to [0,1]; category 0 the
/// complement.
pub struct RegionBrightnessClassifier {
    pub region: Rect,
}

impl RegionBrightnessClassifier {
    fn region_brightness(&self, img: &RgbImage) -> f64 {
        let mut acc = 0.0;
        let mut n = 0usize;
        for y in self.region.y0..self.region.y1.min(img.h) {
            for x in self.region.x0..self.region.x1.min(img.w) {
                let [r, g, b] = img.get(x, y);
                acc += (r as f64 + g as f64 + b as f64) / 3.0;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            acc / (n as f64 * 255.0)
        }
    }
}

impl Classifier for RegionBrightnessClassifier {
    fn categories(&self) -> usize {
        2
    }

    fn score(&self, img: &RgbImage) -> Vec<f64> {
        let bright = self.region_brightness(img);
        vec![1.0 - bright, bright]
    }
}

/// Replaces every pixel outside the mask with the fill color.
pub fn apply_mask(img: &RgbImage, mask: &Mask, fill: [u8; 3]) -> RgbImage {
    let mut out = img.clone();
    for y in 0..img.h {
        for x in 0..img.w {
            if !mask.visible[y * img.w + x] {
                out.set(x, y, fill);
            }
        }
    }
    out
}

/// Categories ranked by score, ties broken by category index.
fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order.truncate(k);
    order
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub ratio: f64,
    pub accuracy: f64,
    pub n_images: usize,
}

/// Mean top-k accuracy when only the top `ratio` fraction of each image's
/// map is visible. k is the per-image label count. Hidden pixels take the
/// fill color; `fill` of None uses the mean color over the evaluated images.
pub fn masked_accuracy_curve(
    images: &[RgbImage],
    maps: &[DenseMap],
    labels: &[Vec<usize>],
    clf: &dyn Classifier,
    ratios: &[f64],
    fill: Option<[u8; 3]>,
) -> AnalysisResult<Vec<CurvePoint>> {
    if images.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    if maps.len() != images.len() {
        return Err(AnalysisError::LengthMismatch {
            what: "maps",
            images: images.len(),
            got: maps.len(),
        });
    }
    if labels.len() != images.len() {
        return Err(AnalysisError::LengthMismatch {
            what: "label sets",
            images: images.len(),
            got: labels.len(),
        });
    }
    if let Some(index) = labels.iter().position(|l| l.is_empty()) {
        return Err(AnalysisError::MissingLabels { index });
    }
    let fill = fill.unwrap_or_else(|| dataset_mean_color(images));
    let mut curve = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        let mut hits = 0usize;
        for ((img, map), gt) in images.iter().zip(maps).zip(labels) {
            let mask = threshold_to_ratio(map, ratio)?;
            let masked = apply_mask(img, &mask, fill);
            let scores = clf.score(&masked);
            let top = top_k(&scores, gt.len());
            if gt.iter().any(|l| top.contains(l)) {
                hits += 1;
            }
        }
        curve.push(CurvePoint {
            ratio,
            accuracy: hits as f64 / images.len() as f64,
            n_images: images.len(),
        });
    }
    Ok(curve)
}

pub fn dataset_mean_color(images: &[RgbImage]) -> [u8; 3] {
    let mut acc = [0.0f64; 3];
    let mut n = 0.0;
    for img in images {
        for p in img.data().chunks_exact(3) {
            for c in 0..3 {
                acc[c] += p[c] as f64;
            }
        }
        n += (img.w * img.h) as f64;
    }
    [
        (acc[0] / n).round() as u8,
        (acc[1] / n).round() as u8,
        (acc[2] / n).round() as u8,
    ]
}

/// Importance of occluder positions for one target label: base score minus
/// the score with a window of fill color at that position.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMap {
    pub grid_w: usize,
    pub grid_h: usize,
    pub window: usize,
    pub stride: usize,
    pub values: Vec<f64>,
}

impl ImportanceMap {
    pub fn position(&self, gx: usize, gy: usize) -> (usize, usize) {
        (gx * self.stride, gy * self.stride)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.grid_h {
            let row: Vec<String> = (0..self.grid_w)
                .map(|c| format!("{}", self.values[r * self.grid_w + c]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn occlusion_importance(
    img: &RgbImage,
    target: usize,
    clf: &dyn Classifier,
    window: usize,
    stride: usize,
    fill: [u8; 3],
) -> AnalysisResult<ImportanceMap> {
    if window == 0 || window > img.w || window > img.h {
        return Err(AnalysisError::WindowTooLarge {
            window,
            w: img.w,
            h: img.h,
        });
    }
    if stride == 0 {
        return Err(AnalysisError::BadStride);
    }
    let base = clf.score(img)[target];
    let grid_w = (img.w - window) / stride + 1;
    let grid_h = (img.h - window) / stride + 1;
    let positions: Vec<(usize, usize)> = (0..grid_h)
        .flat_map(|gy| (0..grid_w).map(move |gx| (gx, gy)))
        .collect();
    let values = crate::parallel::parallel_map(&positions, |_, &(gx, gy)| {
        let mut masked = img.clone();
        for y in gy * stride..gy * stride + window {
            for x in gx * stride..gx * stride + window {
                masked.set(x, y, fill);
            }
        }
        base - clf.score(&masked)[target]
    });
    Ok(ImportanceMap {
        grid_w,
        grid_h,
        window,
        stride,
        values,
    })
}

/// Pointwise mean of several maps plus a rank-equalized render in [0,1].
/// Equal cells share their average rank, so ordering survives the transform.
pub fn mean_importance_overlay(
    maps: &[ImportanceMap],
) -> AnalysisResult<(ImportanceMap, Vec<f64>)> {
    let first = maps.first().ok_or(AnalysisError::EmptyInput)?;
    for m in maps {
        if (m.grid_w, m.grid_h, m.window, m.stride)
            != (first.grid_w, first.grid_h, first.window, first.stride)
        {
            return Err(AnalysisError::GeometryMismatch);
        }
    }
    let n = first.values.len();
    let mut mean = vec![0.0; n];
    for m in maps {
        for (acc, v) in mean.iter_mut().zip(&m.values) {
            *acc += v;
        }
    }
    for v in mean.iter_mut() {
        *v /= maps.len() as f64;
    }
    let render = rank_equalize(&mean);
    Ok((
        ImportanceMap {
            grid_w: first.grid_w,
            grid_h: first.grid_h,
            window: first.window,
            stride: first.stride,
            values: mean,
        },
        render,
    ))
}

/// Average-rank transform to [0,1]; a constant input maps to all 0.5.
pub fn rank_equalize(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n <= 1 {
        return vec![0.5; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0;
        for &idx in &order[i..=j] {
            out[idx] = avg_rank / (n - 1) as f64;
        }
        i = j + 1;
    }
    out
}
