//! Predictive accuracy of the rationale and complement views, token-level
//! agreement with gold masks, and a coarse degeneration verdict.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::objectives::{pieces, selected};
use crate::players::{apply_mask, argmax, infer_mask, predict, GameConfig, PlayerParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Rationale,
    Complement,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub accuracy_c: f64,
    /// `None` when the dataset carries no gold masks.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub mean_selected_fraction: f64,
    pub mean_pieces: f64,
}

/// Micro-averaged token precision and recall. Examples without a gold mask
/// are skipped; an empty selection has precision 0.
pub fn rationale_precision_recall(predicted: &[Vec<u8>], gold: &[Option<Vec<u8>>]) -> Result<(f64, f64)> {
    if predicted.len() != gold.len() {
        return Err(Error::Shape {
            op: "rationale_precision_recall",
            left: (predicted.len(), 1),
            right: (gold.len(), 1),
        });
    }
    let (mut hit, mut sel, mut rel) = (0usize, 0usize, 0usize);
    let mut any_gold = false;
    for (p, g) in predicted.iter().zip(gold) {
        let Some(g) = g else { continue };
        any_gold = true;
        if p.len() != g.len() {
            return Err(Error::Shape {
                op: "rationale_precision_recall",
                left: (p.len(), 1),
                right: (g.len(), 1),
            });
        }
        for (&a, &b) in p.iter().zip(g) {
            hit += usize::from(a == 1 && b == 1);
            sel += usize::from(a == 1);
            rel += usize::from(b == 1);
        }
    }
    if !any_gold {
        return Err(Error::Evaluation("no example carries a gold rationale".into()));
    }
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    Ok((ratio(hit, sel), ratio(hit, rel)))
}

/// Selects the `round(ratio·L)` most probable tokens (ties go to the earlier
/// position).
pub fn topk_mask(probs: &[f64], ratio: f64) -> Vec<u8> {
    let k = ((ratio * probs.len() as f64).round() as usize).min(probs.len());
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut z = vec![0u8; probs.len()];
    for &i in &order[..k] {
        z[i] = 1;
    }
    z
}

/// Per-example inference output.
#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub probs: Vec<f64>,
    pub mask: Vec<u8>,
    pub predicted: usize,
    pub predicted_c: usize,
}

/// How masks are chosen at evaluation time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaskRule {
    /// `probs > threshold`
    Threshold(f64),
    /// Per-example top-k at a fixed highlight ratio.
    Ratio(f64),
}

pub fn infer_example(tokens: &[usize], params: &PlayerParams, rule: MaskRule) -> Result<Inference> {
    let (probs, _) = params.selection_probs(tokens)?;
    let mask = match rule {
        MaskRule::Threshold(t) => infer_mask(&probs, t),
        MaskRule::Ratio(r) => topk_mask(&probs, r),
    };
    let views = apply_mask(tokens, &mask)?;
    let predicted = argmax(&predict(&views.rationale, &params.predictor)?);
    let predicted_c = argmax(&predict(&views.complement, &params.complement_predictor)?);
    Ok(Inference {
        probs,
        mask,
        predicted,
        predicted_c,
    })
}

/// Runs inference over the whole dataset in parallel, in example order.
pub fn infer_dataset(data: &Dataset, params: &PlayerParams, rule: MaskRule) -> Result<Vec<Inference>> {
    data.examples
        .par_iter()
        .map(|ex| infer_example(&ex.tokens, params, rule))
        .collect()
}

pub fn predictive_accuracy(data: &Dataset, params: &PlayerParams, config: &GameConfig, which: View) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let correct: Vec<bool> = match which {
        View::Full => data
            .examples
            .par_iter()
            .map(|ex| Ok(argmax(&predict(&ex.tokens, &params.predictor)?) == ex.label))
            .collect::<Result<_>>()?,
        _ => {
            let inf = infer_dataset(data, params, MaskRule::Threshold(config.threshold))?;
            inf.iter()
                .zip(&data.examples)
                .map(|(i, ex)| {
                    let p = if which == View::Rationale { i.predicted } else { i.predicted_c };
                    p == ex.label
                })
                .collect()
        }
    };
    Ok(correct.iter().filter(|&&c| c).count() as f64 / data.len() as f64)
}

/// Full evaluation with threshold inference (`ratio = None`) or fixed-ratio
/// top-k masks.
pub fn evaluate(data: &Dataset, params: &PlayerParams, config: &GameConfig, ratio: Option<f64>) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let rule = ratio.map_or(MaskRule::Threshold(config.threshold), MaskRule::Ratio);
    let inf = infer_dataset(data, params, rule)?;
    let n = data.len() as f64;
    let mut acc = 0.0;
    let mut acc_c = 0.0;
    let mut frac = 0.0;
    let mut pcs = 0.0;
    for (i, ex) in inf.iter().zip(&data.examples) {
        acc += f64::from(u8::from(i.predicted == ex.label));
        acc_c += f64::from(u8::from(i.predicted_c == ex.label));
        frac += selected(&i.mask) as f64 / ex.len() as f64;
        pcs += pieces(&i.mask) as f64;
    }
    let masks: Vec<Vec<u8>> = inf.into_iter().map(|i| i.mask).collect();
    let gold: Vec<Option<Vec<u8>>> = data.examples.iter().map(|e| e.gold_mask.clone()).collect();
    let (precision, recall) = match rationale_precision_recall(&masks, &gold) {
        Ok((p, r)) => (Some(p), Some(r)),
        Err(Error::Evaluation(_)) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        accuracy: acc / n,
        accuracy_c: acc_c / n,
        precision,
        recall,
        mean_selected_fraction: frac / n,
        mean_pieces: pcs / n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Clean,
    DegenerateRisk,
    ModelUnconverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegenerationReport {
    pub accuracy: f64,
    pub accuracy_c: f64,
    pub gap: f64,
    pub majority_rate: f64,
    pub verdict: Verdict,
}

pub const DEFAULT_SLACK: f64 = 0.1;
const CONVERGED_ACCURACY: f64 = 0.8;

/// Verdict from the two accuracies alone.
pub fn classify_degeneration(accuracy: f64, accuracy_c: f64, majority_rate: f64, slack: f64) -> DegenerationReport {
    let verdict = if accuracy <= CONVERGED_ACCURACY {
        Verdict::ModelUnconverged
    } else if accuracy_c > majority_rate + slack {
        Verdict::DegenerateRisk
    } else {
        Verdict::Clean
    };
    DegenerationReport {
        accuracy,
        accuracy_c,
        gap: accuracy - accuracy_c,
        majority_rate,
        verdict,
    }
}

pub fn degeneration_report(data: &Dataset, params: &PlayerParams, config: &GameConfig, slack: f64) -> Result<DegenerationReport> {
    let r = evaluate(data, params, config, None)?;
    Ok(classify_degeneration(r.accuracy, r.accuracy_c, data.majority_rate(), slack))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::data::{TokenSequence, Vocab};
    use crate::players::{ModelConfig, OUT_B, OUT_W, SEL_B, SEL_W};

    #[test]
    fn precision_recall_examples() {
        let g = vec![Some(vec![0, 1, 1, 0])];
        assert_eq!(rationale_precision_recall(&[vec![0, 1, 1, 0]], &g).unwrap(), (1.0, 1.0));
        assert_eq!(rationale_precision_recall(&[vec![1, 1, 0, 0]], &g).unwrap(), (0.5, 0.5));
        assert_eq!(rationale_precision_recall(&[vec![0, 0, 0, 0]], &g).unwrap(), (0.0, 0.0));
        assert!(matches!(
            rationale_precision_recall(&[vec![1]], &[None]),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn examples_without_gold_are_skipped() {
        let pred = vec![vec![1, 1], vec![1, 0]];
        let gold = vec![None, Some(vec![1, 0])];
        assert_eq!(rationale_precision_recall(&pred, &gold).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn topk_selects_most_probable() {
        assert_eq!(topk_mask(&[0.1, 0.9, 0.5, 0.7], 0.5), vec![0, 1, 0, 1]);
        assert_eq!(topk_mask(&[0.5; 4], 0.25), vec![1, 0, 0, 0]);
        assert_eq!(topk_mask(&[0.3; 20], 0.1).iter().filter(|&&b| b == 1).count(), 2);
    }

    #[test]
    fn verdicts() {
        assert_eq!(classify_degeneration(0.95, 0.5, 0.5, DEFAULT_SLACK).verdict, Verdict::Clean);
        assert_eq!(classify_degeneration(0.95, 0.93, 0.5, DEFAULT_SLACK).verdict, Verdict::DegenerateRisk);
        assert_eq!(classify_degeneration(0.55, 0.93, 0.5, DEFAULT_SLACK).verdict, Verdict::ModelUnconverged);
    }

    fn toy() -> Dataset {
        let ex = |t: Vec<usize>, y| TokenSequence::new(t, y).with_gold(vec![0, 1, 0]);
        Dataset {
            examples: vec![ex(vec![2, 5, 3], 1), ex(vec![3, 5, 2], 1), ex(vec![2, 4, 3], 0), ex(vec![3, 4, 2], 0), ex(vec![2, 4, 2], 0)],
            vocab: Vocab::placeholder(6),
            num_classes: 2,
        }
    }

    #[test]
    fn empty_masks_give_a_constant_prediction() {
        let data = toy();
        let mut p = PlayerParams::init(6, 2, &ModelConfig::default(), 0);
        p.generator.value_mut(SEL_W).fill(0.0);
        p.generator.value_mut(SEL_B).fill(-20.0);
        p.predictor.value_mut(OUT_W).fill(0.0);
        p.predictor.value_mut(OUT_B).data_mut().copy_from_slice(&[1.0, 0.0]);
        let acc = predictive_accuracy(&data, &p, &GameConfig::default(), View::Rationale).unwrap();
        assert_eq!(acc, data.majority_rate());
        let r = evaluate(&data, &p, &GameConfig::default(), None).unwrap();
        assert_eq!((r.mean_selected_fraction, r.mean_pieces), (0.0, 0.0));
        assert_eq!(r.precision, Some(0.0));
    }

    #[test]
    fn accuracy_is_order_invariant() {
        let data = toy();
        let p = PlayerParams::init(6, 2, &ModelConfig { introspective: true, ..ModelConfig::default() }, 3);
        let cfg = GameConfig::default();
        let mut rev = data.clone();
        rev.examples.reverse();
        for v in [View::Rationale, View::Complement, View::Full] {
            assert_eq!(
                predictive_accuracy(&data, &p, &cfg, v).unwrap(),
                predictive_accuracy(&rev, &p, &cfg, v).unwrap()
            );
        }
    }

    proptest! {
        #[test]
        fn precision_recall_swap(pairs in prop::collection::vec(prop::collection::vec((0u8..2, 0u8..2), 1..10), 1..8)) {
            let a: Vec<Vec<u8>> = pairs.iter().map(|v| v.iter().map(|p| p.0).collect()).collect();
            let b: Vec<Vec<u8>> = pairs.iter().map(|v| v.iter().map(|p| p.1).collect()).collect();
            let (p_ab, r_ab) = rationale_precision_recall(&a, &b.iter().cloned().map(Some).collect::<Vec<_>>()).unwrap();
            let (p_ba, r_ba) = rationale_precision_recall(&b, &a.iter().cloned().map(Some).collect::<Vec<_>>()).unwrap();
            prop_assert_eq!(p_ab, r_ba);
            prop_assert_eq!(r_ab, p_ba);
        }

        #[test]
        fn topk_count(probs in prop::collection::vec(0.0f64..1.0, 1..40), ratio in 0.0f64..=1.0) {
            let z = topk_mask(&probs, ratio);
            let k = ((ratio * probs.len() as f64).round() as usize).min(probs.len());
            prop_assert_eq!(z.iter().filter(|&&b| b == 1).count(), k);
        }
    }
}
