//! Soft attention over image regions. Energies come in three variants: the
//! plain machine form, a gaze-only form, and the split form that allocates
//! separate weights to fixated and non-fixated regions through the convex
//! gate g_i / (1 - g_i).

use crate::gaze::GazeHistogram;
use crate::tensor::{Tape, TensorError, Var};
use std::fmt;
use std::str::FromStr;

pub type AttentionResult<T> = Result<T, AttentionError>;

#[derive(Debug, Clone, PartialEq)]
pub enum AttentionError {
    Tensor(TensorError),
    /// Gaze-gated variants need a histogram.
    MissingGaze { variant: AttentionVariant },
    NonFiniteFeature { index: usize },
    BadGrid { grid_h: usize, grid_w: usize, len: usize },
    GazeLengthMismatch { regions: usize, gaze: usize },
    UnknownVariant(String),
}

impl fmt::Display for AttentionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Tensor(e) => write!(f, "{e}"),
            Self::MissingGaze { variant } => {
                write!(f, "variant {variant} needs a gaze histogram")
            }
            Self::NonFiniteFeature { index } => {
                write!(f, "feature value at flat index {index} is not finite")
            }
            Self::BadGrid { grid_h, grid_w, len } => write!(
                f,
                "feature grid {grid_h}x{grid_w} inconsistent with {len} values"
            ),
            Self::GazeLengthMismatch { regions, gaze } => {
                write!(f, "{regions} regions but {gaze} gaze cells")
            }
            Self::UnknownVariant(s) => write!(f, "unknown attention variant '{s}'"),
        }
    }
}

impl std::error::Error for AttentionError {}

impl From<TensorError> for AttentionError {
    fn from(e: TensorError) -> Self {
        Self::Tensor(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionVariant {
    Machine,
    GazeOnly,
    Split,
}

impl AttentionVariant {
    pub fn needs_gaze(self) -> bool {
        !matches!(self, Self::Machine)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Machine => "machine",
            Self::GazeOnly => "gaze_only",
            Self::Split => "split",
        }
    }
}

impl fmt::Display for AttentionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttentionVariant {
    type Err = AttentionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "machine" => Ok(Self::Machine),
            "gaze_only" => Ok(Self::GazeOnly),
            "split" => Ok(Self::Split),
            other => Err(AttentionError::UnknownVariant(other.into())),
        }
    }
}

/// The L x D annotation vectors, one D-dimensional feature per image region.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub grid_h: usize,
    pub grid_w: usize,
    pub d: usize,
    values: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(grid_h: usize, grid_w: usize, d: usize, values: Vec<f64>) -> AttentionResult<Self> {
        if grid_h == 0 || grid_w == 0 || d == 0 || values.len() != grid_h * grid_w * d {
            return Err(AttentionError::BadGrid {
                grid_h,
                grid_w,
                len: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(AttentionError::NonFiniteFeature { index });
        }
        Ok(Self {
            grid_h,
            grid_w,
            d,
            values,
        })
    }

    pub fn regions(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn region(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }
}

/// Tape handles for the attention parameters of the active variant.
#[derive(Debug, Clone, Copy)]
pub struct AttentionNodes {
    pub u_a: Var,
    pub u_h: Var,
    pub b_p: Var,
    pub energy: EnergyNodes,
}

#[derive(Debug, Clone, Copy)]
pub enum EnergyNodes {
    Machine { w_att: Var, c_att: Var },
    GazeOnly { w_pos: Var, c_att: Var },
    Split { w_pos: Var, w_neg: Var, c_att: Var },
}

impl EnergyNodes {
    pub fn variant(&self) -> AttentionVariant {
        match self {
            Self::Machine { .. } => AttentionVariant::Machine,
            Self::GazeOnly { .. } => AttentionVariant::GazeOnly,
            Self::Split { .. } => AttentionVariant::Split,
        }
    }
}

/// Gaze gate bound on the tape as constant leaves, shaped L x 1.
#[derive(Debug, Clone, Copy)]
pub struct GazeNodes {
    pub g: Var,
    pub one_minus_g: Var,
}

pub fn bind_gaze(tape: &mut Tape, hist: &GazeHistogram, regions: usize) -> AttentionResult<GazeNodes> {
    if hist.len() != regions {
        return Err(AttentionError::GazeLengthMismatch {
            regions,
            gaze: hist.len(),
        });
    }
    let g = tape.leaf(regions, 1, hist.values())?;
    let complement: Vec<f64> = hist.values().iter().map(|&v| 1.0 - v).collect();
    let one_minus_g = tape.leaf(regions, 1, &complement)?;
    Ok(GazeNodes { g, one_minus_g })
}

/// p_{t,i} = tanh(U_a a_i + U_h h_{t-1} + b_p), batched over all L regions.
pub fn project(
    tape: &mut Tape,
    features: Var,
    h_prev: Var,
    nodes: &AttentionNodes,
) -> AttentionResult<Var> {
    let fa = tape.matmul(features, nodes.u_a)?;
    let fh = tape.matmul(h_prev, nodes.u_h)?;
    let fh_b = tape.add(fh, nodes.b_p)?;
    let pre = tape.add_row(fa, fh_b)?;
    Ok(tape.tanh(pre))
}

/// Attention energies, one scalar per region.
///
/// machine:   e_i = w_att . p_i + c_att
/// gaze_only: e_i = g_i (w_pos . p_i) + c_att
/// split:     e_i = g_i (w_pos . p_i) + (1 - g_i)(w_neg . p_i) + c_att
pub fn energies(
    tape: &mut Tape,
    projected: Var,
    energy: &EnergyNodes,
    gaze: Option<&GazeNodes>,
) -> AttentionResult<Var> {
    match *energy {
        EnergyNodes::Machine { w_att, c_att } => {
            let e = tape.matmul(projected, w_att)?;
            Ok(tape.add_scalar(e, c_att)?)
        }
        EnergyNodes::GazeOnly { w_pos, c_att } => {
            let gz = gaze.ok_or(AttentionError::MissingGaze {
                variant: AttentionVariant::GazeOnly,
            })?;
            let pos = tape.matmul(projected, w_pos)?;
            let gated = tape.mul(gz.g, pos)?;
            Ok(tape.add_scalar(gated, c_att)?)
        }
        EnergyNodes::Split {
            w_pos,
            w_neg,
            c_att,
        } => {
            let gz = gaze.ok_or(AttentionError::MissingGaze {
                variant: AttentionVariant::Split,
            })?;
            let pos = tape.matmul(projected, w_pos)?;
            let neg = tape.matmul(projected, w_neg)?;
            let pos_gated = tape.mul(gz.g, pos)?;
            let neg_gated = tape.mul(gz.one_minus_g, neg)?;
            let sum = tape.add(pos_gated, neg_gated)?;
            Ok(tape.add_scalar(sum, c_att)?)
        }
    }
}

/// alpha_i = exp(e_i) / sum_j exp(e_j)
pub fn attend(tape: &mut Tape, energies: Var) -> AttentionResult<Var> {
    Ok(tape.softmax(energies, 0)?)
}

/// Context vector: the attention-weighted sum of annotation vectors, 1 x D.
pub fn context(tape: &mut Tape, alpha: Var, features: Var) -> AttentionResult<Var> {
    let alpha_row = tape.transpose(alpha);
    Ok(tape.matmul(alpha_row, features)?)
}
