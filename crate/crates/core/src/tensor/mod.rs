//! Dense 64-bit tensors with tape-based reverse-mode differentiation and an
//! Adam optimizer. Shapes are limited to rank 1 and 2; that is all the
//! captioner needs.

mod adam;
mod tape;

pub use adam::{clip_global_norm, AdamState};
pub use tape::{Tape, Var};

use rand::Rng;
use std::fmt;

pub type TensorResult<T> = Result<T, TensorError>;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Operand shapes are incompatible for the named op.
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// Value buffer length does not match the product of the extents.
    DataLength { expected: usize, got: usize },
    /// `backward` requires a scalar loss.
    NotScalar { shape: Vec<usize> },
    /// Tape ops handle rank 1 and 2 only.
    RankUnsupported { op: &'static str, rank: usize },
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        extent: usize,
    },
    /// A tensor may appear at most once as a node in a given tape.
    AlreadyBound,
    /// `grad` was read before `backward` ran.
    GradsNotReady,
    NonFiniteGradient { param: String },
    DuplicateParam { name: String },
    EmptyConcat,
    BadAxis { op: &'static str, axis: usize },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ShapeMismatch { op, left, right } => {
                write!(f, "{op}: incompatible shapes {left:?} and {right:?}")
            }
            Self::DataLength { expected, got } => {
                write!(f, "value buffer holds {got} scalars, shape needs {expected}")
            }
            Self::NotScalar { shape } => {
                write!(f, "loss must be scalar, got shape {shape:?}")
            }
            Self::RankUnsupported { op, rank } => {
                write!(f, "{op}: rank {rank} tensors are not supported")
            }
            Self::IndexOutOfRange { op, index, extent } => {
                write!(f, "{op}: index {index} out of range (extent {extent})")
            }
            Self::AlreadyBound => write!(f, "tensor is already bound to this tape"),
            Self::GradsNotReady => write!(f, "gradients read before backward"),
            Self::NonFiniteGradient { param } => {
                write!(f, "non-finite gradient for parameter '{param}'")
            }
            Self::DuplicateParam { name } => write!(f, "duplicate parameter name '{name}'"),
            Self::EmptyConcat => write!(f, "concat needs at least one input"),
            Self::BadAxis { op, axis } => write!(f, "{op}: axis {axis} out of range"),
        }
    }
}

impl std::error::Error for TensorError {}

/// Identifies the tape a tensor is currently bound to, and where.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapeHandle {
    pub tape: u64,
    pub var: Var,
}

/// Dense row-major tensor of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
    node: Option<TapeHandle>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> TensorResult<Self> {
        let expected: usize = shape.iter().product();
        if shape.iter().any(|&e| e == 0) || values.len() != expected {
            return Err(TensorError::DataLength {
                expected,
                got: values.len(),
            });
        }
        Ok(Self {
            shape,
            values,
            grad: None,
            node: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            values: vec![0.0; n],
            grad: None,
            node: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self::new(vec![1, 1], vec![v]).unwrap()
    }

    /// Uniform init in [-r, r] with r = sqrt(6 / (fan_in + fan_out)).
    pub fn glorot_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let r = (6.0 / (rows + cols) as f64).sqrt();
        let values = (0..rows * cols).map(|_| rng.gen_range(-r..=r)).collect();
        Self::new(vec![rows, cols], values).unwrap()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    /// Rows and columns as seen by the tape: rank-1 tensors bind as a row.
    pub fn dims2(&self) -> TensorResult<(usize, usize)> {
        match self.shape.len() {
            1 => Ok((1, self.shape[0])),
            2 => Ok((self.shape[0], self.shape[1])),
            r => Err(TensorError::RankUnsupported { op: "bind", rank: r }),
        }
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn add_grad(&mut self, g: &[f64]) -> TensorResult<()> {
        if g.len() != self.values.len() {
            return Err(TensorError::DataLength {
                expected: self.values.len(),
                got: g.len(),
            });
        }
        let buf = self.grad.get_or_insert_with(|| vec![0.0; g.len()]);
        for (b, v) in buf.iter_mut().zip(g) {
            *b += v;
        }
        Ok(())
    }

    pub fn node(&self) -> Option<TapeHandle> {
        self.node
    }

    pub(crate) fn set_node(&mut self, h: Option<TapeHandle>) {
        self.node = h;
    }
}

/// Named parameters in a fixed insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> TensorResult<()> {
        if self.entries.iter().any(|(n, _)| n == name) {
            return Err(TensorError::DuplicateParam { name: name.into() });
        }
        self.entries.push((name.into(), tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn zero_grads(&mut self) {
        for (_, t) in self.entries.iter_mut() {
            t.zero_grad();
        }
    }

    pub fn total_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }
}
