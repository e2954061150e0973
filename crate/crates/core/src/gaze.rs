//! Fixation processing: the per-cell normalized fixation histogram that gates
//! the split attention, plus the dense center/saliency/fixation maps and the
//! visible-area thresholding used by the masking analysis.
//!
//! Histograms are max-normalized, not sum-normalized: the split energy uses
//! g_i and (1 - g_i) as a convex gate, so per-cell values must be able to
//! reach 1 regardless of how many cells the grid has.

use std::fmt;

pub type GazeResult<T> = Result<T, GazeError>;

#[derive(Debug, Clone, PartialEq)]
pub enum GazeError {
    CoordinateOutOfRange { x: f64, y: f64 },
    NonPositiveDuration { value: f64 },
    ValueOutOfRange { index: usize, value: f64 },
    LengthMismatch { expected: usize, got: usize },
    BadGrid { grid_h: usize, grid_w: usize },
    BadRatio { r: f64 },
    Parse(String),
}

impl fmt::Display for GazeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::CoordinateOutOfRange { x, y } => {
                write!(f, "fixation ({x}, {y}) outside normalized [0,1] coordinates")
            }
            Self::NonPositiveDuration { value } => {
                write!(f, "fixation duration {value} must be positive")
            }
            Self::ValueOutOfRange { index, value } => {
                write!(f, "histogram cell {index} holds {value}, outside [0,1]")
            }
            Self::LengthMismatch { expected, got } => {
                write!(f, "expected {expected} cells, got {got}")
            }
            Self::BadGrid { grid_h, grid_w } => {
                write!(f, "grid {grid_h}x{grid_w} must be positive")
            }
            Self::BadRatio { r } => write!(f, "visible-area ratio {r} outside [0,1]"),
            Self::Parse(m) => write!(f, "fixation record: {m}"),
        }
    }
}

impl std::error::Error for GazeError {}

/// One gaze point in normalized [0,1] image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixation {
    pub x: f64,
    pub y: f64,
    pub duration_ms: Option<f64>,
}

/// All fixations recorded for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationRecord {
    pub image_id: String,
    pub fixations: Vec<Fixation>,
}

impl FixationRecord {
    pub fn new(image_id: String, fixations: Vec<Fixation>) -> GazeResult<Self> {
        for fx in &fixations {
            if !(0.0..=1.0).contains(&fx.x) || !(0.0..=1.0).contains(&fx.y) {
                return Err(GazeError::CoordinateOutOfRange { x: fx.x, y: fx.y });
            }
            if let Some(d) = fx.duration_ms {
                if !(d > 0.0) {
                    return Err(GazeError::NonPositiveDuration { value: d });
                }
            }
        }
        Ok(Self {
            image_id,
            fixations,
        })
    }
}

/// Geometry shared between feature extraction and fixation binning. The
/// standard pipeline scales the shortest side to a fixed length and takes a
/// center crop; `Full` bins over the whole image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CropSpec {
    Full {
        image_w: usize,
        image_h: usize,
    },
    ShortSideCenterCrop {
        image_w: usize,
        image_h: usize,
        short_side: usize,
        crop_size: usize,
    },
}

impl CropSpec {
    /// Maps a normalized fixation to fractional coordinates in the cropped
    /// frame, in [0,1) x [0,1). Fixations falling outside the crop drop out.
    fn to_crop_frame(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        match *self {
            CropSpec::Full { .. } => Some((x.min(next_down(1.0)), y.min(next_down(1.0)))),
            CropSpec::ShortSideCenterCrop {
                image_w,
                image_h,
                short_side,
                crop_size,
            } => {
                let (w, h) = (image_w as f64, image_h as f64);
                let scale = short_side as f64 / w.min(h);
                let crop = crop_size as f64;
                let off_x = (w * scale - crop) / 2.0;
                let off_y = (h * scale - crop) / 2.0;
                let u = x * w * scale - off_x;
                let v = y * h * scale - off_y;
                if u < 0.0 || v < 0.0 || u >= crop || v >= crop {
                    None
                } else {
                    Some((u / crop, v / crop))
                }
            }
        }
    }
}

fn next_down(v: f64) -> f64 {
    f64::from_bits(v.to_bits() - 1)
}

/// Per-cell fixation mass on the feature grid, every value in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct GazeHistogram {
    pub grid_h: usize,
    pub grid_w: usize,
    g: Vec<f64>,
}

impl GazeHistogram {
    pub fn new(grid_h: usize, grid_w: usize, g: Vec<f64>) -> GazeResult<Self> {
        if grid_h == 0 || grid_w == 0 {
            return Err(GazeError::BadGrid { grid_h, grid_w });
        }
        if g.len() != grid_h * grid_w {
            return Err(GazeError::LengthMismatch {
                expected: grid_h * grid_w,
                got: g.len(),
            });
        }
        for (i, &v) in g.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(GazeError::ValueOutOfRange { index: i, value: v });
            }
        }
        Ok(Self { grid_h, grid_w, g })
    }

    pub fn zeros(grid_h: usize, grid_w: usize) -> Self {
        Self {
            grid_h,
            grid_w,
            g: vec![0.0; grid_h * grid_w],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.g
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// Mean-pools a dense map onto the grid and max-normalizes, so saliency
    /// maps feed the same attention pathway as fixation histograms.
    pub fn from_dense_map(map: &DenseMap, grid_h: usize, grid_w: usize) -> GazeResult<Self> {
        if grid_h == 0 || grid_w == 0 || grid_h > map.h || grid_w > map.w {
            return Err(GazeError::BadGrid { grid_h, grid_w });
        }
        let mut cells = vec![0.0f64; grid_h * grid_w];
        for gy in 0..grid_h {
            let y0 = gy * map.h / grid_h;
            let y1 = (gy + 1) * map.h / grid_h;
            for gx in 0..grid_w {
                let x0 = gx * map.w / grid_w;
                let x1 = (gx + 1) * map.w / grid_w;
                let mut acc = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        acc += map.data[y * map.w + x];
                    }
                }
                cells[gy * grid_w + gx] = acc / ((y1 - y0) * (x1 - x0)) as f64;
            }
        }
        max_normalize(&mut cells);
        Self::new(grid_h, grid_w, cells)
    }

    /// Comma-separated grid, one row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.grid_h {
            let row: Vec<String> = (0..self.grid_w)
                .map(|c| format!("{}", self.g[r * self.grid_w + c]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HistogramOptions {
    /// Gaussian smoothing radius in cell units, applied before
    /// normalization. None disables smoothing.
    pub smoothing_sigma: Option<f64>,
}

/// Bins fixations into grid cells after applying the feature-extraction crop.
/// Duration-weighted when every fixation carries a duration, count-weighted
/// otherwise. The histogram is divided by its maximum cell, so the peak cell
/// is exactly 1 whenever any fixation survives the crop.
pub fn fixation_histogram(
    rec: &FixationRecord,
    crop: CropSpec,
    grid_h: usize,
    grid_w: usize,
    opts: HistogramOptions,
) -> GazeResult<GazeHistogram> {
    if grid_h == 0 || grid_w == 0 {
        return Err(GazeError::BadGrid { grid_h, grid_w });
    }
    let weighted = !rec.fixations.is_empty() && rec.fixations.iter().all(|f| f.duration_ms.is_some());
    let mut cells = vec![0.0f64; grid_h * grid_w];
    for fx in &rec.fixations {
        let Some((u, v)) = crop.to_crop_frame(fx.x, fx.y) else {
            continue;
        };
        let cx = ((u * grid_w as f64) as usize).min(grid_w - 1);
        let cy = ((v * grid_h as f64) as usize).min(grid_h - 1);
        let w = if weighted { fx.duration_ms.unwrap() } else { 1.0 };
        cells[cy * grid_w + cx] += w;
    }
    if let Some(sigma) = opts.smoothing_sigma {
        if sigma > 0.0 {
            cells = gaussian_blur(grid_w, grid_h, &cells, sigma);
        }
    }
    max_normalize(&mut cells);
    GazeHistogram::new(grid_h, grid_w, cells)
}

fn max_normalize(v: &mut [f64]) {
    let mx = v.iter().cloned().fold(0.0f64, f64::max);
    if mx > 0.0 {
        for x in v.iter_mut() {
            *x /= mx;
        }
    }
}

/// Nonnegative scalar field over image pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMap {
    pub w: usize,
    pub h: usize,
    pub data: Vec<f64>,
}

impl DenseMap {
    pub fn new(w: usize, h: usize, data: Vec<f64>) -> GazeResult<Self> {
        if data.len() != w * h {
            return Err(GazeError::LengthMismatch {
                expected: w * h,
                got: data.len(),
            });
        }
        for (i, &v) in data.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(GazeError::ValueOutOfRange { index: i, value: v });
            }
        }
        Ok(Self { w, h, data })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.h {
            let row: Vec<String> = (0..self.w)
                .map(|c| format!("{}", self.data[r * self.w + c]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Center-prior baseline: pixel value falls off with Euclidean distance from
/// the image center, shifted so the farthest pixel sits at 0.
pub fn center_map(h: usize, w: usize) -> DenseMap {
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let mut data = vec![0.0; w * h];
    let mut max_d = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
            data[y * w + x] = d;
            max_d = max_d.max(d);
        }
    }
    for v in data.iter_mut() {
        *v = max_d - *v;
    }
    DenseMap { w, h, data }
}

/// Binary visibility mask over pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub w: usize,
    pub h: usize,
    pub visible: Vec<bool>,
}

impl Mask {
    pub fn count_visible(&self) -> usize {
        self.visible.iter().filter(|&&b| b).count()
    }
}

/// Exposes the ceil(r * h * w) highest-valued pixels of the map. Ties break
/// by row-major pixel index, so masks for increasing r are nested.
pub fn threshold_to_ratio(map: &DenseMap, r: f64) -> GazeResult<Mask> {
    if !(0.0..=1.0).contains(&r) {
        return Err(GazeError::BadRatio { r });
    }
    let n = map.w * map.h;
    let k = (r * n as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        map.data[b]
            .partial_cmp(&map.data[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut visible = vec![false; n];
    for &i in order.iter().take(k) {
        visible[i] = true;
    }
    Ok(Mask {
        w: map.w,
        h: map.h,
        visible,
    })
}

/// Separable Gaussian blur with a symmetric-pair accumulation order, so a
/// flipped input blurs to the flipped output bit-exactly. Border taps fall
/// away and the kernel renormalizes over what remains.
pub fn gaussian_blur(w: usize, h: usize, data: &[f64], sigma: f64) -> Vec<f64> {
    assert_eq!(data.len(), w * h);
    if sigma <= 0.0 {
        return data.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (0..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();

    let blur_line = |line: &[f64], out: &mut [f64]| {
        let n = line.len() as isize;
        for c in 0..n {
            let mut acc = kernel[0] * line[c as usize];
            let mut wsum = kernel[0];
            for i in 1..=radius {
                let lo = c - i;
                let hi = c + i;
                match (lo >= 0, hi < n) {
                    (true, true) => {
                        acc += kernel[i as usize] * (line[lo as usize] + line[hi as usize]);
                        wsum += 2.0 * kernel[i as usize];
                    }
                    (true, false) => {
                        acc += kernel[i as usize] * line[lo as usize];
                        wsum += kernel[i as usize];
                    }
                    (false, true) => {
                        acc += kernel[i as usize] * line[hi as usize];
                        wsum += kernel[i as usize];
                    }
                    (false, false) => {}
                }
            }
            out[c as usize] = acc / wsum;
        }
    };

    // Horizontal pass
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        blur_line(&data[y * w..(y + 1) * w], &mut tmp[y * w..(y + 1) * w]);
    }
    // Vertical pass
    let mut out = vec![0.0; w * h];
    let mut col = vec![0.0; h];
    let mut colout = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = tmp[y * w + x];
        }
        blur_line(&col, &mut colout);
        for y in 0..h {
            out[y * w + x] = colout[y];
        }
    }
    out
}

/// Parses one JSON-lines fixation object:
/// `{"image_id": "...", "fixations": [[x, y] or [x, y, duration_ms], ...]}`.
pub fn parse_fixation_line(line: &str) -> GazeResult<FixationRecord> {
    let v: serde_json::Value =
        serde_json::from_str(line).map_err(|e| GazeError::Parse(e.to_string()))?;
    let image_id = v
        .get("image_id")
        .and_then(|s| s.as_str())
        .ok_or_else(|| GazeError::Parse("missing image_id".into()))?
        .to_string();
    let arr = v
        .get("fixations")
        .and_then(|a| a.as_array())
        .ok_or_else(|| GazeError::Parse("missing fixations array".into()))?;
    let mut fixations = Vec::with_capacity(arr.len());
    for item in arr {
        let nums = item
            .as_array()
            .ok_or_else(|| GazeError::Parse("fixation must be an array".into()))?;
        if nums.len() != 2 && nums.len() != 3 {
            return Err(GazeError::Parse(format!(
                "fixation needs 2 or 3 numbers, got {}",
                nums.len()
            )));
        }
        let get = |i: usize| -> GazeResult<f64> {
            nums[i]
                .as_f64()
                .ok_or_else(|| GazeError::Parse("fixation entry is not a number".into()))
        };
        fixations.push(Fixation {
            x: get(0)?,
            y: get(1)?,
            duration_ms: if nums.len() == 3 { Some(get(2)?) } else { None },
        });
    }
    FixationRecord::new(image_id, fixations)
}

pub fn fixation_record_to_json(rec: &FixationRecord) -> String {
    let fixations: Vec<serde_json::Value> = rec
        .fixations
        .iter()
        .map(|f| match f.duration_ms {
            Some(d) => serde_json::json!([f.x, f.y, d]),
            None => serde_json::json!([f.x, f.y]),
        })
        .collect();
    serde_json::json!({"image_id": rec.image_id, "fixations": fixations}).to_string()
}
