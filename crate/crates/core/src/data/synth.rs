use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, TokenSequence, Vocab};
use crate::error::{Error, Result};

/// Planted-rationale benchmark: `signal_positions` contiguous tokens whose
/// majority class decides the label, surrounded by neutral filler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub num_examples: usize,
    pub len: usize,
    pub vocab_size: usize,
    pub signal_positions: usize,
    pub noise_rate: f64,
}

/// Degeneration toy: one label-determining token somewhere strictly inside
/// the sequence, label-independent filler everywhere else (including the
/// first and last positions).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegenerationSpec {
    pub num_examples: usize,
    pub len: usize,
    pub vocab_size: usize,
}

/// Word-id layout shared by both generators: class-0 words, class-1 words,
/// then neutral filler.
struct Lexicon {
    vocab: Vocab,
    class_words: [Vec<usize>; 2],
    filler: Vec<usize>,
}

impl Lexicon {
    fn new(vocab_size: usize) -> Result<Self> {
        if vocab_size < 5 {
            return Err(Error::Spec(format!(
                "vocab_size must be at least 5 (2 reserved + 2 class words + 1 filler), got {vocab_size}"
            )));
        }
        let avail = vocab_size - 2;
        let per_class = (avail / 4).max(1);
        let mut vocab = Vocab::new();
        let neg = (0..per_class).map(|j| vocab.insert(&format!("neg{j}"))).collect();
        let pos = (0..per_class).map(|j| vocab.insert(&format!("pos{j}"))).collect();
        let filler = (0..avail - 2 * per_class)
            .map(|j| vocab.insert(&format!("f{j}")))
            .collect();
        Ok(Self {
            vocab,
            class_words: [neg, pos],
            filler,
        })
    }

    fn filler<R: Rng>(&self, rng: &mut R) -> usize {
        self.filler[rng.random_range(0..self.filler.len())]
    }

    fn class_word<R: Rng>(&self, class: usize, rng: &mut R) -> usize {
        let words = &self.class_words[class];
        words[rng.random_range(0..words.len())]
    }
}

/// Balanced labels in shuffled order.
fn balanced_labels<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    labels.shuffle(rng);
    labels
}

pub fn gen_planted_dataset(spec: &PlantedSpec, seed: u64) -> Result<Dataset> {
    let k = spec.signal_positions;
    if k == 0 || k > spec.len {
        return Err(Error::Spec(format!(
            "signal_positions must be in 1..={} (sequence length), got {k}",
            spec.len
        )));
    }
    if !(0.0..=1.0).contains(&spec.noise_rate) {
        return Err(Error::Spec(format!(
            "noise_rate must be in [0, 1], got {}",
            spec.noise_rate
        )));
    }
    let lex = Lexicon::new(spec.vocab_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = balanced_labels(spec.num_examples, &mut rng);
    let majority = k / 2 + 1;
    let examples = labels
        .into_iter()
        .map(|y| {
            let offset = rng.random_range(0..=spec.len - k);
            let agree = rng.random_range(majority..=k);
            let mut span: Vec<usize> = (0..k)
                .map(|j| {
                    let class = if j < agree { y } else { 1 - y };
                    lex.class_word(class, &mut rng)
                })
                .collect();
            span.shuffle(&mut rng);
            let mut tokens: Vec<usize> = (0..spec.len).map(|_| lex.filler(&mut rng)).collect();
            tokens[offset..offset + k].copy_from_slice(&span);
            let mut gold = vec![0u8; spec.len];
            gold[offset..offset + k].iter_mut().for_each(|g| *g = 1);
            let label = if rng.random::<f64>() < spec.noise_rate {
                1 - y
            } else {
                y
            };
            TokenSequence::new(tokens, label).with_gold(gold)
        })
        .collect();
    Ok(Dataset {
        examples,
        vocab: lex.vocab,
        num_classes: 2,
    })
}

pub fn gen_degeneration_dataset(spec: &DegenerationSpec, seed: u64) -> Result<Dataset> {
    if spec.len < 3 {
        return Err(Error::Spec(format!(
            "sequence length must be at least 3, got {}",
            spec.len
        )));
    }
    let lex = Lexicon::new(spec.vocab_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = balanced_labels(spec.num_examples, &mut rng);
    let examples = labels
        .into_iter()
        .map(|y| {
            let pos = rng.random_range(1..spec.len - 1);
            let mut tokens: Vec<usize> = (0..spec.len).map(|_| lex.filler(&mut rng)).collect();
            tokens[pos] = lex.class_word(y, &mut rng);
            let mut gold = vec![0u8; spec.len];
            gold[pos] = 1;
            TokenSequence::new(tokens, y).with_gold(gold)
        })
        .collect();
    Ok(Dataset {
        examples,
        vocab: lex.vocab,
        num_classes: 2,
    })
}
