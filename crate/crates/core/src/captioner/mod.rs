//! Attention-gated LSTM caption decoder: state initialization from the mean
//! annotation vector, the per-step attention/LSTM/deep-output stack, the
//! teacher-forced sequence loss with its doubly stochastic penalty, training
//! with early stopping on validation BLEU-1, and greedy/beam decoding.

mod checkpoint;
mod decode;
mod train;
mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use decode::{DecodeMode, ModelStepScorer, ScoredCaption, StepOutput, StepScorer};
pub use train::{train, training_log_csv, validation_bleu1, DatasetItem, EpochLog, TrainConfig, TrainOutcome};
pub use vocab::{Vocabulary, END, PAD, START, UNK};

use crate::attention::{
    self, AttentionError, AttentionNodes, AttentionVariant, EnergyNodes, FeatureGrid, GazeNodes,
};
use crate::gaze::GazeHistogram;
use crate::tensor::{ParamSet, Tape, Tensor, TensorError, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::fmt;

pub type CaptionerResult<T> = Result<T, CaptionerError>;

#[derive(Debug, Clone, PartialEq)]
pub enum CaptionerError {
    Tensor(TensorError),
    Attention(AttentionError),
    Vocab(vocab::VocabError),
    EmptyReference,
    MissingEndToken,
    TokenOutOfRange { token: usize, vocab: usize },
    BadMaxLen { max_len: usize },
    BadBeamWidth,
    NonFiniteLoss { epoch: usize, batch: usize },
    EmptySplit { which: &'static str },
    BadConfig(String),
    NotMachineVariant,
}

impl fmt::Display for CaptionerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Tensor(e) => write!(f, "{e}"),
            Self::Attention(e) => write!(f, "{e}"),
            Self::Vocab(e) => write!(f, "{e}"),
            Self::EmptyReference => write!(f, "reference caption is empty"),
            Self::MissingEndToken => write!(f, "reference must end with the end token"),
            Self::TokenOutOfRange { token, vocab } => {
                write!(f, "token id {token} outside vocabulary of {vocab}")
            }
            Self::BadMaxLen { max_len } => write!(f, "max_len {max_len} must be at least 1"),
            Self::BadBeamWidth => write!(f, "beam width must be at least 1"),
            Self::NonFiniteLoss { epoch, batch } => {
                write!(f, "non-finite loss at epoch {epoch}, batch {batch}")
            }
            Self::EmptySplit { which } => write!(f, "{which} split is empty"),
            Self::BadConfig(m) => write!(f, "bad config: {m}"),
            Self::NotMachineVariant => {
                write!(f, "tied-split construction starts from a machine model")
            }
        }
    }
}

impl std::error::Error for CaptionerError {}

impl From<TensorError> for CaptionerError {
    fn from(e: TensorError) -> Self {
        Self::Tensor(e)
    }
}

impl From<AttentionError> for CaptionerError {
    fn from(e: AttentionError) -> Self {
        Self::Attention(e)
    }
}

impl From<vocab::VocabError> for CaptionerError {
    fn from(e: vocab::VocabError) -> Self {
        Self::Vocab(e)
    }
}

/// Model dimensions. The full-scale defaults follow the reference setup
/// (14 x 14 grid of 512-dim features, hidden state 1400); desk-scale runs
/// shrink everything through configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub variant: AttentionVariant,
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Attention projection width; 0 selects the feature dimension.
    pub proj_dim: usize,
}

impl ModelConfig {
    pub fn resolved_proj_dim(&self) -> usize {
        if self.proj_dim == 0 {
            self.feature_dim
        } else {
            self.proj_dim
        }
    }

    fn validate(&self) -> CaptionerResult<()> {
        if self.feature_dim == 0 || self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(CaptionerError::BadConfig(
                "model dimensions must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-step attention weights and context vectors of a decoded or
/// teacher-forced sequence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttentionTrace {
    pub alphas: Vec<Vec<f64>>,
    pub contexts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub nll: f64,
    pub penalty: f64,
}

const GATE_NAMES: [&str; 4] = ["i", "f", "o", "g"];

/// The captioner: configuration, vocabulary and named parameters.
#[derive(Debug, Clone)]
pub struct Captioner {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    params: ParamSet,
}

impl Captioner {
    /// Fresh model with Glorot-uniform weights drawn from a ChaCha stream
    /// seeded by `seed`; biases start at zero except the LSTM forget bias,
    /// which starts at one.
    pub fn init(config: ModelConfig, vocab: Vocabulary, seed: u64) -> CaptionerResult<Self> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (v, d, e, h, p) = (
            vocab.len(),
            config.feature_dim,
            config.embed_dim,
            config.hidden_dim,
            config.resolved_proj_dim(),
        );
        let mut params = ParamSet::new();
        let mut glorot = |params: &mut ParamSet, name: &str, rows: usize, cols: usize| {
            params
                .insert(name, Tensor::glorot_uniform(rows, cols, &mut rng))
                .expect("unique parameter names");
        };
        glorot(&mut params, "embedding", v, e);
        glorot(&mut params, "init_h_w", d, h);
        params.insert("init_h_b", Tensor::zeros(vec![1, h]))?;
        glorot(&mut params, "init_c_w", d, h);
        params.insert("init_c_b", Tensor::zeros(vec![1, h]))?;
        for gate in GATE_NAMES {
            glorot(&mut params, &format!("lstm_w_{gate}"), e + d, h);
            glorot(&mut params, &format!("lstm_u_{gate}"), h, h);
            let bias = if gate == "f" {
                Tensor::new(vec![1, h], vec![1.0; h])?
            } else {
                Tensor::zeros(vec![1, h])
            };
            params.insert(&format!("lstm_b_{gate}"), bias)?;
        }
        glorot(&mut params, "att_u_a", d, p);
        glorot(&mut params, "att_u_h", h, p);
        params.insert("att_b_p", Tensor::zeros(vec![1, p]))?;
        match config.variant {
            AttentionVariant::Machine => glorot(&mut params, "att_w", p, 1),
            AttentionVariant::GazeOnly => glorot(&mut params, "att_w_pos", p, 1),
            AttentionVariant::Split => {
                glorot(&mut params, "att_w_pos", p, 1);
                glorot(&mut params, "att_w_neg", p, 1);
            }
        }
        params.insert("att_c", Tensor::zeros(vec![1, 1]))?;
        glorot(&mut params, "out_w_prev", e, e);
        glorot(&mut params, "out_w_h", h, e);
        glorot(&mut params, "out_w_z", d, e);
        glorot(&mut params, "out_w", e, v);
        Ok(Self {
            config,
            vocab,
            params,
        })
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        vocab: Vocabulary,
        params: ParamSet,
    ) -> Self {
        Self {
            config,
            vocab,
            params,
        }
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Split-variant twin of a machine model: every shared weight is copied
    /// and both split weights are set to the machine attention weight, the
    /// configuration under which the split energy collapses to the machine
    /// energy for any gaze input.
    pub fn to_tied_split(&self) -> CaptionerResult<Captioner> {
        if self.config.variant != AttentionVariant::Machine {
            return Err(CaptionerError::NotMachineVariant);
        }
        let mut params = ParamSet::new();
        for (name, tensor) in self.params.iter() {
            let mut t = tensor.clone();
            t.zero_grad();
            if name == "att_w" {
                params.insert("att_w_pos", t.clone())?;
                params.insert("att_w_neg", t)?;
            } else {
                params.insert(name, t)?;
            }
        }
        let config = ModelConfig {
            variant: AttentionVariant::Split,
            ..self.config
        };
        Ok(Captioner::from_parts(config, self.vocab.clone(), params))
    }

    fn var_of(&self, bound: &BoundModel, name: &str) -> Var {
        let idx = self
            .params
            .iter()
            .position(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("parameter {name} missing"));
        bound.param_vars[idx]
    }

    /// Binds every parameter plus the feature grid (and gaze, for gaze-gated
    /// variants) onto a fresh section of the tape.
    pub(crate) fn bind(
        &mut self,
        tape: &mut Tape,
        features: &FeatureGrid,
        gaze: Option<&GazeHistogram>,
    ) -> CaptionerResult<BoundModel> {
        if features.d != self.config.feature_dim {
            return Err(CaptionerError::BadConfig(format!(
                "feature dim {} does not match model dim {}",
                features.d, self.config.feature_dim
            )));
        }
        let regions = features.regions();
        let mut param_vars = Vec::with_capacity(self.params.len());
        for (_, tensor) in self.params.iter_mut() {
            param_vars.push(tape.bind(tensor)?);
        }
        let features_var = tape.leaf(regions, features.d, features.values())?;
        let mut bound = BoundModel {
            param_vars,
            features: features_var,
            gaze: None,
            regions,
        };
        if self.config.variant.needs_gaze() {
            let hist = gaze.ok_or(AttentionError::MissingGaze {
                variant: self.config.variant,
            })?;
            bound.gaze = Some(attention::bind_gaze(tape, hist, regions)?);
        }
        Ok(bound)
    }

    fn energy_nodes(&self, bound: &BoundModel) -> EnergyNodes {
        let c_att = self.var_of(bound, "att_c");
        match self.config.variant {
            AttentionVariant::Machine => EnergyNodes::Machine {
                w_att: self.var_of(bound, "att_w"),
                c_att,
            },
            AttentionVariant::GazeOnly => EnergyNodes::GazeOnly {
                w_pos: self.var_of(bound, "att_w_pos"),
                c_att,
            },
            AttentionVariant::Split => EnergyNodes::Split {
                w_pos: self.var_of(bound, "att_w_pos"),
                w_neg: self.var_of(bound, "att_w_neg"),
                c_att,
            },
        }
    }

    /// h_0 and c_0 from the mean annotation vector through one-layer tanh
    /// networks.
    pub(crate) fn init_state_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundModel,
    ) -> CaptionerResult<(Var, Var)> {
        let sum = tape.sum_axis(bound.features, 0)?;
        let mean = tape.scale(sum, 1.0 / bound.regions as f64);
        let mut one = |w: &str, b: &str| -> CaptionerResult<Var> {
            let lin = tape.matmul(mean, self.var_of(bound, w))?;
            let pre = tape.add(lin, self.var_of(bound, b))?;
            Ok(tape.tanh(pre))
        };
        let h0 = one("init_h_w", "init_h_b")?;
        let c0 = one("init_c_w", "init_c_b")?;
        Ok((h0, c0))
    }

    /// One decode step on the tape: attention, LSTM gates, deep output.
    pub(crate) fn step_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundModel,
        prev_token: usize,
        h_prev: Var,
        c_prev: Var,
    ) -> CaptionerResult<StepVars> {
        if prev_token >= self.vocab.len() {
            return Err(CaptionerError::TokenOutOfRange {
                token: prev_token,
                vocab: self.vocab.len(),
            });
        }
        let emb = tape.row_lookup(self.var_of(bound, "embedding"), prev_token)?;
        let att_nodes = AttentionNodes {
            u_a: self.var_of(bound, "att_u_a"),
            u_h: self.var_of(bound, "att_u_h"),
            b_p: self.var_of(bound, "att_b_p"),
            energy: self.energy_nodes(bound),
        };
        let projected = attention::project(tape, bound.features, h_prev, &att_nodes)?;
        let e = attention::energies(tape, projected, &att_nodes.energy, bound.gaze.as_ref())?;
        let alpha = attention::attend(tape, e)?;
        let context = attention::context(tape, alpha, bound.features)?;
        let x = tape.concat(&[emb, context], 1)?;

        let mut gate_pre = |gate: &str| -> CaptionerResult<Var> {
            let xw = tape.matmul(x, self.var_of(bound, &format!("lstm_w_{gate}")))?;
            let hu = tape.matmul(h_prev, self.var_of(bound, &format!("lstm_u_{gate}")))?;
            let s = tape.add(xw, hu)?;
            Ok(tape.add(s, self.var_of(bound, &format!("lstm_b_{gate}")))?)
        };
        let pre_i = gate_pre("i")?;
        let pre_f = gate_pre("f")?;
        let pre_o = gate_pre("o")?;
        let pre_g = gate_pre("g")?;
        let gate_i = tape.sigmoid(pre_i);
        let gate_f = tape.sigmoid(pre_f);
        let gate_o = tape.sigmoid(pre_o);
        let candidate = tape.tanh(pre_g);
        let keep = tape.mul(gate_f, c_prev)?;
        let write = tape.mul(gate_i, candidate)?;
        let c_t = tape.add(keep, write)?;
        let c_act = tape.tanh(c_t);
        let h_t = tape.mul(gate_o, c_act)?;

        let from_prev = tape.matmul(emb, self.var_of(bound, "out_w_prev"))?;
        let from_h = tape.matmul(h_t, self.var_of(bound, "out_w_h"))?;
        let from_z = tape.matmul(context, self.var_of(bound, "out_w_z"))?;
        let merged = tape.add(from_prev, from_h)?;
        let merged = tape.add(merged, from_z)?;
        let deep = tape.tanh(merged);
        let logits = tape.matmul(deep, self.var_of(bound, "out_w"))?;
        let probs = tape.softmax(logits, 1)?;
        Ok(StepVars {
            h: h_t,
            c: c_t,
            alpha,
            context,
            probs,
        })
    }

    /// Teacher-forced loss graph over a full reference. The reference must
    /// be non-empty and end with the end token.
    pub(crate) fn loss_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundModel,
        reference: &[usize],
        lambda: f64,
    ) -> CaptionerResult<LossVars> {
        if reference.is_empty() {
            return Err(CaptionerError::EmptyReference);
        }
        if *reference.last().unwrap() != END {
            return Err(CaptionerError::MissingEndToken);
        }
        let (mut h, mut c) = self.init_state_graph(tape, bound)?;
        let mut prev = START;
        let mut nll = tape.leaf_scalar(0.0);
        let mut alpha_acc: Option<Var> = None;
        let mut trace = AttentionTrace::default();
        for &target in reference {
            if target >= self.vocab.len() {
                return Err(CaptionerError::TokenOutOfRange {
                    token: target,
                    vocab: self.vocab.len(),
                });
            }
            let step = self.step_graph(tape, bound, prev, h, c)?;
            let p_target = tape.pick(step.probs, target)?;
            let lp = tape.log(p_target);
            nll = tape.sub(nll, lp)?;
            alpha_acc = Some(match alpha_acc {
                None => step.alpha,
                Some(acc) => tape.add(acc, step.alpha)?,
            });
            trace.alphas.push(tape.value(step.alpha).to_vec());
            trace.contexts.push(tape.value(step.context).to_vec());
            h = step.h;
            c = step.c;
            prev = target;
        }
        let ones = tape.leaf(bound.regions, 1, &vec![1.0; bound.regions])?;
        let shortfall = tape.sub(ones, alpha_acc.expect("at least one step"))?;
        let squared = tape.mul(shortfall, shortfall)?;
        let penalty = tape.sum_all(squared);
        let weighted = tape.scale(penalty, lambda);
        let total = tape.add(nll, weighted)?;
        Ok(LossVars {
            total,
            nll,
            penalty,
            trace,
        })
    }

    /// Loss and attention trace for one example, forward only.
    pub fn sequence_loss(
        &mut self,
        features: &FeatureGrid,
        gaze: Option<&GazeHistogram>,
        reference: &[usize],
        lambda: f64,
    ) -> CaptionerResult<(LossBreakdown, AttentionTrace)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, features, gaze)?;
        let loss = self.loss_graph(&mut tape, &bound, reference, lambda)?;
        Ok((
            LossBreakdown {
                total: tape.value(loss.total)[0],
                nll: tape.value(loss.nll)[0],
                penalty: tape.value(loss.penalty)[0],
            },
            loss.trace,
        ))
    }
}

/// Tape handles for one bound model instance.
pub(crate) struct BoundModel {
    param_vars: Vec<Var>,
    pub features: Var,
    pub gaze: Option<GazeNodes>,
    pub regions: usize,
}

impl BoundModel {
    pub fn param_vars(&self) -> &[Var] {
        &self.param_vars
    }
}

pub(crate) struct StepVars {
    pub h: Var,
    pub c: Var,
    pub alpha: Var,
    pub context: Var,
    pub probs: Var,
}

pub(crate) struct LossVars {
    pub total: Var,
    pub nll: Var,
    pub penalty: Var,
    pub trace: AttentionTrace,
}
