//! Greedy and beam-search decoding over a step scorer. The scorer trait
//! keeps the search generic, so tests can drive it from a hand-built
//! transition table as well as from the live model.

use super::{AttentionTrace, BoundModel, Captioner, CaptionerError, CaptionerResult, END, START};
use crate::attention::FeatureGrid;
use crate::gaze::GazeHistogram;
use crate::tensor::Tape;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Beam(usize),
}

/// Everything one step emits: a full log-probability row plus the attention
/// weights and context vector behind it.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub log_probs: Vec<f64>,
    pub alpha: Vec<f64>,
    pub context: Vec<f64>,
}

pub trait StepScorer {
    type State: Clone;

    fn vocab_size(&self) -> usize;
    fn initial_state(&mut self) -> CaptionerResult<Self::State>;
    fn step(&mut self, state: &Self::State, prev: usize)
        -> CaptionerResult<(StepOutput, Self::State)>;
}

/// A decoded caption: emitted tokens (the end token included when produced),
/// per-token log-probabilities and the attention trace, one entry per token.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCaption {
    pub tokens: Vec<usize>,
    pub token_log_probs: Vec<f64>,
    pub total_log_prob: f64,
    pub trace: AttentionTrace,
}

impl ScoredCaption {
    pub fn is_complete(&self) -> bool {
        self.tokens.last() == Some(&END)
    }
}

pub fn decode_greedy<S: StepScorer>(
    scorer: &mut S,
    max_len: usize,
) -> CaptionerResult<ScoredCaption> {
    if max_len < 1 {
        return Err(CaptionerError::BadMaxLen { max_len });
    }
    let mut state = scorer.initial_state()?;
    let mut prev = START;
    let mut out = ScoredCaption {
        tokens: Vec::new(),
        token_log_probs: Vec::new(),
        total_log_prob: 0.0,
        trace: AttentionTrace::default(),
    };
    for _ in 0..max_len {
        let (step, next_state) = scorer.step(&state, prev)?;
        // Argmax with ties to the lowest token index.
        let mut best = 0usize;
        for (i, &lp) in step.log_probs.iter().enumerate() {
            if lp > step.log_probs[best] {
                best = i;
            }
        }
        out.tokens.push(best);
        out.token_log_probs.push(step.log_probs[best]);
        out.total_log_prob += step.log_probs[best];
        out.trace.alphas.push(step.alpha);
        out.trace.contexts.push(step.context);
        if best == END {
            break;
        }
        prev = best;
        state = next_state;
    }
    Ok(out)
}

struct Beam<S> {
    caption: ScoredCaption,
    state: S,
}

/// Beam search keeping the `width` best partial sequences by total
/// log-probability. Sequences retire when they emit the end token; the
/// returned list holds completed captions ranked by score (max_len-truncated
/// live beams fill in when nothing completed), ties broken by token order.
pub fn decode_beam<S: StepScorer>(
    scorer: &mut S,
    width: usize,
    max_len: usize,
) -> CaptionerResult<Vec<ScoredCaption>> {
    if max_len < 1 {
        return Err(CaptionerError::BadMaxLen { max_len });
    }
    if width < 1 {
        return Err(CaptionerError::BadBeamWidth);
    }
    let initial = scorer.initial_state()?;
    let mut live: Vec<Beam<S::State>> = vec![Beam {
        caption: ScoredCaption {
            tokens: Vec::new(),
            token_log_probs: Vec::new(),
            total_log_prob: 0.0,
            trace: AttentionTrace::default(),
        },
        state: initial,
    }];
    let mut completed: Vec<ScoredCaption> = Vec::new();
    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        let mut candidates: Vec<Beam<S::State>> = Vec::new();
        for beam in &live {
            let prev = *beam.caption.tokens.last().unwrap_or(&START);
            let (step, next_state) = scorer.step(&beam.state, prev)?;
            for (token, &lp) in step.log_probs.iter().enumerate() {
                let mut caption = beam.caption.clone();
                caption.tokens.push(token);
                caption.token_log_probs.push(lp);
                caption.total_log_prob += lp;
                caption.trace.alphas.push(step.alpha.clone());
                caption.trace.contexts.push(step.context.clone());
                candidates.push(Beam {
                    caption,
                    state: next_state.clone(),
                });
            }
        }
        candidates.sort_by(|a, b| {
            b.caption
                .total_log_prob
                .partial_cmp(&a.caption.total_log_prob)
                .unwrap()
                .then_with(|| a.caption.tokens.cmp(&b.caption.tokens))
        });
        candidates.truncate(width);
        live = Vec::new();
        for beam in candidates {
            if beam.caption.tokens.last() == Some(&END) {
                completed.push(beam.caption);
            } else {
                live.push(beam);
            }
        }
    }
    let mut ranked = completed;
    if ranked.is_empty() {
        ranked.extend(live.into_iter().map(|b| b.caption));
    }
    ranked.sort_by(|a, b| {
        b.total_log_prob
            .partial_cmp(&a.total_log_prob)
            .unwrap()
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    ranked.truncate(width);
    Ok(ranked)
}

/// Step scorer backed by the live model: each step binds the parameters on a
/// fresh tape, runs the forward stack and reads values back.
pub struct ModelStepScorer<'a> {
    captioner: &'a mut Captioner,
    features: &'a FeatureGrid,
    gaze: Option<&'a GazeHistogram>,
}

impl<'a> ModelStepScorer<'a> {
    pub fn new(
        captioner: &'a mut Captioner,
        features: &'a FeatureGrid,
        gaze: Option<&'a GazeHistogram>,
    ) -> Self {
        Self {
            captioner,
            features,
            gaze,
        }
    }

    fn bound(&mut self, tape: &mut Tape) -> CaptionerResult<BoundModel> {
        self.captioner.bind(tape, self.features, self.gaze)
    }
}

#[derive(Clone)]
pub struct HiddenState {
    h: Vec<f64>,
    c: Vec<f64>,
}

impl StepScorer for ModelStepScorer<'_> {
    type State = HiddenState;

    fn vocab_size(&self) -> usize {
        self.captioner.vocab.len()
    }

    fn initial_state(&mut self) -> CaptionerResult<HiddenState> {
        let mut tape = Tape::new();
        let bound = self.bound(&mut tape)?;
        let (h0, c0) = self.captioner.init_state_graph(&mut tape, &bound)?;
        Ok(HiddenState {
            h: tape.value(h0).to_vec(),
            c: tape.value(c0).to_vec(),
        })
    }

    fn step(
        &mut self,
        state: &HiddenState,
        prev: usize,
    ) -> CaptionerResult<(StepOutput, HiddenState)> {
        let mut tape = Tape::new();
        let bound = self.bound(&mut tape)?;
        let h_prev = tape.leaf(1, state.h.len(), &state.h)?;
        let c_prev = tape.leaf(1, state.c.len(), &state.c)?;
        let step = self
            .captioner
            .step_graph(&mut tape, &bound, prev, h_prev, c_prev)?;
        let log_probs = tape.value(step.probs).iter().map(|p| p.ln()).collect();
        Ok((
            StepOutput {
                log_probs,
                alpha: tape.value(step.alpha).to_vec(),
                context: tape.value(step.context).to_vec(),
            },
            HiddenState {
                h: tape.value(step.h).to_vec(),
                c: tape.value(step.c).to_vec(),
            },
        ))
    }
}

impl Captioner {
    /// Decodes a caption for one image. Greedy picks the argmax token each
    /// step; beam keeps the k best running sequences.
    pub fn decode(
        &mut self,
        features: &FeatureGrid,
        gaze: Option<&GazeHistogram>,
        mode: DecodeMode,
        max_len: usize,
    ) -> CaptionerResult<ScoredCaption> {
        match mode {
            DecodeMode::Greedy => {
                let mut scorer = ModelStepScorer::new(self, features, gaze);
                decode_greedy(&mut scorer, max_len)
            }
            DecodeMode::Beam(width) => {
                let mut scorer = ModelStepScorer::new(self, features, gaze);
                let ranked = decode_beam(&mut scorer, width, max_len)?;
                Ok(ranked.into_iter().next().expect("beam returns at least one"))
            }
        }
    }

    /// Ranked beam, best first.
    pub fn decode_beam_ranked(
        &mut self,
        features: &FeatureGrid,
        gaze: Option<&GazeHistogram>,
        width: usize,
        max_len: usize,
    ) -> CaptionerResult<Vec<ScoredCaption>> {
        let mut scorer = ModelStepScorer::new(self, features, gaze);
        decode_beam(&mut scorer, width, max_len)
    }
}
