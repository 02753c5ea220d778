//! The three players: a generator that samples token-level rationale masks
//! (optionally conditioned on a classifier's predicted label), a predictor
//! that reads the rationale, and a complement predictor that reads what the
//! rationale leaves out.

mod config;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::MASK_ID;
use crate::error::{Error, Result};
use crate::numkit::{
    affine, affine_backward, encode_backward, encode_sequence_from, init_encoder, sigmoid, softmax,
    softmax_xent,
    EncoderDims, EncoderOutput, Grads, ParamSet, Tensor2,
};

pub use config::{GameConfig, ModelConfig, Sparsity};

pub const SEL_W: &str = "sel.w";
pub const SEL_B: &str = "sel.b";
pub const OUT_W: &str = "out.w";
pub const OUT_B: &str = "out.b";
pub const LABEL_EMB: &str = "label_emb";

/// Lower bound on a selection probability inside the policy log-likelihood.
pub const PROB_FLOOR: f64 = 1e-6;

/// A sampled or inferred binary mask together with the generator's
/// per-token selection probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationaleMask {
    pub z: Vec<u8>,
    pub probs: Vec<f64>,
}

impl RationaleMask {
    pub fn selected(&self) -> usize {
        self.z.iter().map(|&b| b as usize).sum()
    }
}

/// Position-preserving rationale and complement views of one example.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskedViews {
    pub rationale: Vec<usize>,
    pub complement: Vec<usize>,
}

/// `r_i = z_i·x_i` and `r^c_i = (1 − z_i)·x_i`, with masked positions set to
/// the reserved mask token.
pub fn apply_mask(tokens: &[usize], z: &[u8]) -> Result<MaskedViews> {
    if tokens.len() != z.len() {
        return Err(Error::Shape {
            op: "apply_mask",
            left: (tokens.len(), 1),
            right: (z.len(), 1),
        });
    }
    let (rationale, complement) = tokens
        .iter()
        .zip(z)
        .map(|(&t, &b)| if b != 0 { (t, MASK_ID) } else { (MASK_ID, t) })
        .unzip();
    Ok(MaskedViews {
        rationale,
        complement,
    })
}

/// Parameters of all players. The generator group (generator, label
/// embedding, introspection classifier) and the two predictors never share
/// tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct PlayerParams {
    pub generator: ParamSet,
    pub predictor: ParamSet,
    pub complement_predictor: ParamSet,
    pub introspection_classifier: Option<ParamSet>,
    pub num_classes: usize,
}

impl PlayerParams {
    pub fn init(vocab: usize, num_classes: usize, model: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = EncoderDims {
            vocab,
            embed: model.embed_dim,
            hidden: model.hidden_dim,
        };
        let mut generator = init_generator(dims, model.init_scale, &mut rng);
        if model.introspective {
            generator.insert(
                LABEL_EMB,
                Tensor2::uniform(num_classes, dims.hidden, model.init_scale, &mut rng),
            );
        }
        let predictor = init_classifier(dims, num_classes, model.init_scale, &mut rng);
        let complement_predictor = init_classifier(dims, num_classes, model.init_scale, &mut rng);
        let introspection_classifier = model
            .introspective
            .then(|| init_classifier(dims, num_classes, model.init_scale, &mut rng));
        Self {
            generator,
            predictor,
            complement_predictor,
            introspection_classifier,
            num_classes,
        }
    }

    pub fn is_introspective(&self) -> bool {
        self.introspection_classifier.is_some()
    }

    pub fn label_embedding(&self) -> Option<&Tensor2> {
        self.generator
            .contains(LABEL_EMB)
            .then(|| self.generator.value(LABEL_EMB))
    }

    /// Selection probabilities for `tokens`, routing through the
    /// introspection classifier when present. Returns the predicted label
    /// used for conditioning, if any.
    pub fn selection_probs(&self, tokens: &[usize]) -> Result<(Vec<f64>, Option<usize>)> {
        match &self.introspection_classifier {
            Some(cls) => {
                let y_tilde = introspect_label(tokens, cls)?;
                Ok((introspective_probs(tokens, y_tilde, &self.generator)?, Some(y_tilde)))
            }
            None => Ok((generator_probs(tokens, &self.generator)?, None)),
        }
    }

    /// Iterates the named parameter groups in a fixed order.
    pub fn groups(&self) -> Vec<(&'static str, &ParamSet)> {
        let mut g = vec![
            ("generator", &self.generator),
            ("predictor", &self.predictor),
            ("complement_predictor", &self.complement_predictor),
        ];
        if let Some(c) = &self.introspection_classifier {
            g.push(("introspection_classifier", c));
        }
        g
    }
}

pub fn init_generator<R: Rng + ?Sized>(dims: EncoderDims, scale: f64, rng: &mut R) -> ParamSet {
    let mut p = ParamSet::new();
    init_encoder(&mut p, dims, scale, rng);
    p.insert(SEL_W, Tensor2::uniform(1, dims.output_width(), scale, rng));
    p.insert(SEL_B, Tensor2::zeros(1, 1));
    p
}

/// Encoder plus softmax head on the pooled state; the predictor, the
/// complement predictor and the introspection classifier all use this.
pub fn init_classifier<R: Rng + ?Sized>(
    dims: EncoderDims,
    num_classes: usize,
    scale: f64,
    rng: &mut R,
) -> ParamSet {
    let mut p = ParamSet::new();
    init_encoder(&mut p, dims, scale, rng);
    p.insert(OUT_W, Tensor2::uniform(num_classes, dims.output_width(), scale, rng));
    p.insert(OUT_B, Tensor2::zeros(num_classes, 1));
    p
}

/// Forward state of the generator kept for the backward pass.
#[derive(Clone, Debug)]
pub struct GeneratorTrace {
    pub encoded: EncoderOutput,
    pub probs: Vec<f64>,
    pub conditioned_on: Option<usize>,
}

fn label_state(params: &ParamSet, y_tilde: Option<usize>) -> Result<Option<&[f64]>> {
    match y_tilde {
        None => Ok(None),
        Some(y) => {
            let emb = params.value(LABEL_EMB);
            if y >= emb.rows() {
                return Err(Error::Label {
                    label: y,
                    classes: emb.rows(),
                });
            }
            Ok(Some(emb.row(y)))
        }
    }
}

pub fn generator_forward(
    tokens: &[usize],
    params: &ParamSet,
    y_tilde: Option<usize>,
) -> Result<GeneratorTrace> {
    let h0 = label_state(params, y_tilde)?;
    let encoded = encode_sequence_from(tokens, params, h0)?;
    let w = params.value(SEL_W).row(0);
    let b = params.value(SEL_B).get(0, 0);
    let probs = (0..tokens.len())
        .map(|t| {
            let logit: f64 = b + w.iter().zip(encoded.per_token.row(t)).map(|(a, x)| a * x).sum::<f64>();
            sigmoid(logit)
        })
        .collect();
    Ok(GeneratorTrace {
        encoded,
        probs,
        conditioned_on: y_tilde,
    })
}

/// Backward pass of [`generator_forward`] given the loss gradient with
/// respect to each token's selection logit.
pub fn generator_backward(
    tokens: &[usize],
    trace: &GeneratorTrace,
    d_logits: &[f64],
    params: &ParamSet,
    grads: &mut Grads,
) -> Result<()> {
    let h0 = label_state(params, trace.conditioned_on)?;
    let w = params.value(SEL_W);
    let width = w.cols();
    let mut d_per_token = Tensor2::zeros(tokens.len(), width);
    {
        let dw = grads.get_mut(SEL_W);
        for (t, &dl) in d_logits.iter().enumerate() {
            for (g, x) in dw.row_mut(0).iter_mut().zip(trace.encoded.per_token.row(t)) {
                *g += dl * x;
            }
        }
    }
    grads.get_mut(SEL_B).data_mut()[0] += d_logits.iter().sum::<f64>();
    for (t, &dl) in d_logits.iter().enumerate() {
        for (d, a) in d_per_token.row_mut(t).iter_mut().zip(w.row(0)) {
            *d = dl * a;
        }
    }
    let d_h0 = encode_backward(tokens, h0, &trace.encoded, Some(&d_per_token), None, params, grads);
    if let Some(y) = trace.conditioned_on {
        for (g, d) in grads.get_mut(LABEL_EMB).row_mut(y).iter_mut().zip(&d_h0) {
            *g += d;
        }
    }
    Ok(())
}

/// Per-token Bernoulli selection probabilities of the plain generator.
pub fn generator_probs(tokens: &[usize], params: &ParamSet) -> Result<Vec<f64>> {
    Ok(generator_forward(tokens, params, None)?.probs)
}

/// Selection probabilities with the label embedding of `y_tilde` as the
/// initial state of both encoder directions.
pub fn introspective_probs(tokens: &[usize], y_tilde: usize, params: &ParamSet) -> Result<Vec<f64>> {
    if !params.contains(LABEL_EMB) {
        return Err(Error::Config("generator has no label embedding".into()));
    }
    Ok(generator_forward(tokens, params, Some(y_tilde))?.probs)
}

/// Index of the largest entry, ties resolved toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Maximum-likelihood label of the introspection classifier.
pub fn introspect_label(tokens: &[usize], classifier: &ParamSet) -> Result<usize> {
    Ok(argmax(&classifier_logits(tokens, classifier)?.1))
}

/// Forward state of a classifier kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ClassifierTrace {
    pub encoded: EncoderOutput,
    pub logits: Vec<f64>,
}

fn classifier_logits(tokens: &[usize], params: &ParamSet) -> Result<(EncoderOutput, Vec<f64>)> {
    let encoded = encode_sequence_from(tokens, params, None)?;
    let logits = affine(&encoded.pooled, params.value(OUT_W), params.value(OUT_B).data())?;
    Ok((encoded, logits))
}

pub fn classifier_forward(tokens: &[usize], params: &ParamSet) -> Result<ClassifierTrace> {
    let (encoded, logits) = classifier_logits(tokens, params)?;
    Ok(ClassifierTrace { encoded, logits })
}

/// Class distribution of a predictor (or complement predictor) on a view.
pub fn predict(view: &[usize], params: &ParamSet) -> Result<Vec<f64>> {
    Ok(softmax(&classifier_logits(view, params)?.1))
}

/// Cross-entropy of a classifier on `(tokens, label)`; gradients are added
/// to `grads`. Returns the loss and the predicted class.
pub fn classifier_xent_backward(
    tokens: &[usize],
    label: usize,
    params: &ParamSet,
    grads: &mut Grads,
) -> Result<(f64, usize)> {
    let trace = classifier_forward(tokens, params)?;
    let (loss, d_logits) = softmax_xent(&trace.logits, label)?;
    let w = params.value(OUT_W);
    let mut d_pooled = vec![0.0; w.cols()];
    let mut db = vec![0.0; w.rows()];
    affine_backward(
        &trace.encoded.pooled,
        w,
        &d_logits,
        grads.get_mut(OUT_W),
        &mut db,
        Some(&mut d_pooled),
    );
    for (g, d) in grads.get_mut(OUT_B).data_mut().iter_mut().zip(&db) {
        *g += d;
    }
    encode_backward(tokens, None, &trace.encoded, None, Some(&d_pooled), params, grads);
    Ok((loss, argmax(&trace.logits)))
}

/// Cross-entropy loss of a classifier without gradients.
pub fn classifier_xent(tokens: &[usize], label: usize, params: &ParamSet) -> Result<f64> {
    Ok(softmax_xent(&classifier_logits(tokens, params)?.1, label)?.0)
}

/// Draws `z_i ~ Bernoulli((1 − explore)·p_i + explore/2)` independently.
/// The returned mask keeps the unmixed probabilities.
pub fn sample_mask<R: Rng + ?Sized>(probs: &[f64], explore: f64, rng: &mut R) -> RationaleMask {
    let z = probs
        .iter()
        .map(|&p| {
            let mixed = (1.0 - explore) * p + explore * 0.5;
            u8::from(rng.random::<f64>() < mixed)
        })
        .collect();
    RationaleMask {
        z,
        probs: probs.to_vec(),
    }
}

/// Deterministic inference mask: `z_i = 1` iff `p_i > threshold`.
pub fn infer_mask(probs: &[f64], threshold: f64) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p > threshold)).collect()
}

/// `log Bernoulli(z; p)` with `p` clamped to `[PROB_FLOOR, 1 − PROB_FLOOR]`.
pub fn mask_log_likelihood(z: &[u8], probs: &[f64]) -> f64 {
    z.iter()
        .zip(probs)
        .map(|(&b, &p)| {
            let q = if b == 1 { p } else { 1.0 - p };
            q.max(PROB_FLOOR).ln()
        })
        .sum()
}

/// Gradient of [`mask_log_likelihood`] with respect to each selection logit.
/// Zero where the floor is active.
pub fn mask_log_likelihood_grad(z: &[u8], probs: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(probs)
        .map(|(&b, &p)| {
            if b == 1 {
                if p >= PROB_FLOOR { 1.0 - p } else { 0.0 }
            } else if 1.0 - p >= PROB_FLOOR {
                -p
            } else {
                0.0
            }
        })
        .collect()
}

/// Human-study export: every selected word replaced by `*`.
pub fn star_masked<S: AsRef<str>>(words: &[S], z: &[u8]) -> Vec<String> {
    words
        .iter()
        .zip(z)
        .map(|(w, &b)| if b == 1 { "*".to_string() } else { w.as_ref().to_string() })
        .collect()
}

/// One line of the rationale output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationaleRecord {
    pub tokens: Vec<String>,
    pub label: usize,
    pub predicted: usize,
    pub mask: Vec<u8>,
    pub probs: Vec<f64>,
}
