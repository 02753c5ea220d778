//! Exact computations on tiny finite tasks: conditional label entropies of
//! masked views, the three rationale conditions, and brute-force search for
//! the global minimizers of the population game objective.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FiniteTask, TokenSequence};
use crate::error::{Error, Result};
use crate::objectives::{pieces, selected, sparsity_loss, transitions};
use crate::players::{apply_mask, GameConfig};

/// Largest number of candidate mask functions [`enumerate_best_masks`]
/// will score.
pub const MAX_CANDIDATES: u128 = 1 << 24;

const SUFFICIENCY_TOL: f64 = 1e-9;
const TIE_TOL: f64 = 1e-12;

/// A mask for every support element, in support order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskFunction {
    pub table: Vec<Vec<u8>>,
}

impl MaskFunction {
    pub fn from_fn(task: &FiniteTask, f: impl Fn(&TokenSequence) -> Vec<u8>) -> Self {
        Self {
            table: task.iter().map(|(ex, _)| f(ex)).collect(),
        }
    }

    /// The same mask on every input.
    pub fn constant(task: &FiniteTask, z: &[u8]) -> Self {
        Self::from_fn(task, |_| z.to_vec())
    }

    fn validate(&self, task: &FiniteTask) -> Result<()> {
        if self.table.len() != task.support.len() {
            return Err(Error::Config(format!(
                "mask function covers {} inputs, task has {}",
                self.table.len(),
                task.support.len()
            )));
        }
        for (z, (ex, _)) in self.table.iter().zip(task.iter()) {
            if z.len() != ex.len() {
                return Err(Error::Shape {
                    op: "mask function entry",
                    left: (ex.len(), 1),
                    right: (z.len(), 1),
                });
            }
        }
        Ok(())
    }

    /// Selects exactly the same positions on every input.
    pub fn is_constant(&self) -> bool {
        self.table.windows(2).all(|w| w[0] == w[1])
    }
}

/// Which stand-in for the two predictor losses the population objective
/// uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveForm {
    /// Exact conditional entropies in bits.
    Entropy,
    /// Expected cross-entropy, in nats, of the Bayes-optimal predictor of
    /// each view (computed per example rather than per view group).
    Xent,
}

fn entropy_bits(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum()
}

/// `H(Y)` of the task in bits.
pub fn label_entropy(task: &FiniteTask) -> f64 {
    let mut counts = vec![0.0; task.num_classes()];
    for (ex, p) in task.iter() {
        counts[ex.label] += p;
    }
    entropy_bits(&counts)
}

/// `H(Y | V)` in bits, where `views[i]` is the view of support element `i`.
/// Elements with equal views are pooled.
pub fn entropy_of_views<V: Eq + std::hash::Hash>(task: &FiniteTask, views: &[V]) -> f64 {
    let classes = task.num_classes();
    let mut groups: HashMap<&V, Vec<f64>> = HashMap::new();
    for ((ex, p), v) in task.iter().zip(views) {
        groups.entry(v).or_insert_with(|| vec![0.0; classes])[ex.label] += p;
    }
    let mut h = 0.0;
    // sum in a fixed order so the result does not depend on hash iteration
    let mut parts: Vec<(f64, f64)> = groups
        .values()
        .map(|c| (c.iter().sum::<f64>(), entropy_bits(c)))
        .collect();
    parts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (mass, ent) in parts {
        h += mass * ent;
    }
    h
}

/// `H(Y | view(X))` in bits by direct summation over the support.
pub fn exact_conditional_entropy(
    task: &FiniteTask,
    view: impl Fn(&TokenSequence) -> Vec<usize>,
) -> f64 {
    let views: Vec<Vec<usize>> = task.iter().map(|(ex, _)| view(ex)).collect();
    entropy_of_views(task, &views)
}

/// Expected `−ln p(y | v)` under the plug-in posterior of each view, i.e.
/// the cross-entropy of a predictor with unlimited capacity.
pub fn bayes_cross_entropy_nats<V: Eq + std::hash::Hash>(task: &FiniteTask, views: &[V]) -> f64 {
    let classes = task.num_classes();
    let mut groups: HashMap<&V, Vec<f64>> = HashMap::new();
    for ((ex, p), v) in task.iter().zip(views) {
        groups.entry(v).or_insert_with(|| vec![0.0; classes])[ex.label] += p;
    }
    task.iter()
        .zip(views)
        .map(|((ex, p), v)| {
            let c = &groups[v];
            let post = c[ex.label] / c.iter().sum::<f64>();
            -p * post.ln()
        })
        .sum()
}

fn mask_views(task: &FiniteTask, mask_fn: &MaskFunction) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    task.iter()
        .zip(&mask_fn.table)
        .map(|((ex, _), z)| {
            let v = apply_mask(&ex.tokens, z).expect("validated lengths");
            (v.rationale, v.complement)
        })
        .unzip()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub sufficient: bool,
    pub comprehensive: bool,
    pub compact: bool,
    pub h_y_given_r: f64,
    pub h_y_given_rc: f64,
    pub h_y_given_x: f64,
    pub max_selected: usize,
    pub max_transitions: usize,
    /// Gap margin `h` (bits) the comprehensiveness check used.
    pub margin_bits: f64,
}

impl ConditionReport {
    pub fn all(&self) -> bool {
        self.sufficient && self.comprehensive && self.compact
    }
}

/// Evaluates sufficiency (`H(Y|R) = H(Y|X)`), comprehensiveness
/// (`H(Y|R^c) ≥ H(Y|R) + h`, with `config.h` read in bits) and compactness
/// (every input selects at most `s` tokens in at most `max_pieces` pieces).
pub fn check_conditions(
    task: &FiniteTask,
    mask_fn: &MaskFunction,
    config: &GameConfig,
) -> Result<ConditionReport> {
    mask_fn.validate(task)?;
    let (rat, comp) = mask_views(task, mask_fn);
    let full: Vec<&[usize]> = task.iter().map(|(ex, _)| ex.tokens.as_slice()).collect();
    let h_y_given_x = entropy_of_views(task, &full);
    let h_y_given_r = entropy_of_views(task, &rat);
    let h_y_given_rc = entropy_of_views(task, &comp);
    let budget = config.sparsity.resolve(task.seq_len());
    let max_selected = mask_fn.table.iter().map(|z| selected(z)).max().unwrap_or(0);
    let max_transitions = mask_fn.table.iter().map(|z| transitions(z)).max().unwrap_or(0);
    let compact = mask_fn
        .table
        .iter()
        .all(|z| selected(z) as f64 <= budget && pieces(z) <= config.max_pieces);
    Ok(ConditionReport {
        sufficient: (h_y_given_r - h_y_given_x).abs() <= SUFFICIENCY_TOL,
        comprehensive: h_y_given_rc >= h_y_given_r + config.h - TIE_TOL,
        compact,
        h_y_given_r,
        h_y_given_rc,
        h_y_given_x,
        max_selected,
        max_transitions,
        margin_bits: config.h,
    })
}

/// Population objective of one mask function, term by term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationObjective {
    pub l_p: f64,
    pub l_c: f64,
    pub l_g: f64,
    /// `E[max{Σz − s, 0}]`
    pub l_s: f64,
    /// `E[max{transitions − 2·max_pieces, 0}]`
    pub l_cont: f64,
    pub total: f64,
}

/// Structural penalties used by the population objective. The continuity
/// term is a hinge on the total transition count against the piece budget,
/// so both terms vanish exactly when the compactness condition holds.
fn structural_terms(z: &[u8], config: &GameConfig) -> (f64, f64) {
    let s = sparsity_loss(z, config.sparsity.resolve(z.len()));
    let cont = (transitions(z) as f64 - 2.0 * config.max_pieces as f64).max(0.0);
    (s, cont)
}

fn compose(l_p: f64, l_c: f64, l_s: f64, l_cont: f64, h: f64, config: &GameConfig) -> PopulationObjective {
    let l_g = (l_p - l_c + h).max(0.0);
    PopulationObjective {
        l_p,
        l_c,
        l_g,
        l_s,
        l_cont,
        total: l_p + config.lambda_g * l_g + config.lambda_s * l_s + config.lambda_cont * l_cont,
    }
}

fn margin_for(form: ObjectiveForm, config: &GameConfig) -> f64 {
    match form {
        ObjectiveForm::Entropy => config.h,
        ObjectiveForm::Xent => config.h * std::f64::consts::LN_2,
    }
}

/// Scores one mask function under the population objective.
pub fn population_objective(
    task: &FiniteTask,
    mask_fn: &MaskFunction,
    config: &GameConfig,
    form: ObjectiveForm,
) -> Result<PopulationObjective> {
    mask_fn.validate(task)?;
    let (rat, comp) = mask_views(task, mask_fn);
    let (l_p, l_c) = match form {
        ObjectiveForm::Entropy => (entropy_of_views(task, &rat), entropy_of_views(task, &comp)),
        ObjectiveForm::Xent => (
            bayes_cross_entropy_nats(task, &rat),
            bayes_cross_entropy_nats(task, &comp),
        ),
    };
    let (mut l_s, mut l_cont) = (0.0, 0.0);
    for ((_, p), z) in task.iter().zip(&mask_fn.table) {
        let (s, c) = structural_terms(z, config);
        l_s += p * s;
        l_cont += p * c;
    }
    Ok(compose(l_p, l_c, l_s, l_cont, margin_for(form, config), config))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Enumeration {
    pub form: ObjectiveForm,
    pub candidates: u64,
    pub best_value: f64,
    pub best_terms: PopulationObjective,
    pub minimizers: Vec<MaskFunction>,
}

/// Scores every mask function on the task and returns all global
/// minimizers (values within 1e−12 of the minimum), in candidate order.
pub fn enumerate_best_masks(
    task: &FiniteTask,
    config: &GameConfig,
    form: ObjectiveForm,
) -> Result<Enumeration> {
    let n = task.support.len();
    let len = task.seq_len();
    let bits = (n * len) as u32;
    let candidates: u128 = if bits >= 127 { u128::MAX } else { 1u128 << bits };
    if candidates > MAX_CANDIDATES {
        return Err(Error::Feasibility {
            candidates,
            limit: MAX_CANDIDATES,
        });
    }
    let per_elem = 1usize << len;

    // Intern every (element, local mask) view so candidates compare ids.
    let mut interner: HashMap<Vec<usize>, u32> = HashMap::new();
    let mut intern = |v: Vec<usize>| {
        let next = interner.len() as u32;
        *interner.entry(v).or_insert(next)
    };
    let mut rat_id = vec![vec![0u32; per_elem]; n];
    let mut comp_id = vec![vec![0u32; per_elem]; n];
    let mut penalties = vec![vec![(0.0, 0.0); per_elem]; n];
    let local_mask = |m: usize| -> Vec<u8> { (0..len).map(|j| ((m >> j) & 1) as u8).collect() };
    for (i, (ex, _)) in task.iter().enumerate() {
        for m in 0..per_elem {
            let z = local_mask(m);
            let v = apply_mask(&ex.tokens, &z)?;
            rat_id[i][m] = intern(v.rationale);
            comp_id[i][m] = intern(v.complement);
            penalties[i][m] = structural_terms(&z, config);
        }
    }
    let probs: Vec<f64> = task.iter().map(|(_, p)| p).collect();
    let labels: Vec<usize> = task.iter().map(|(ex, _)| ex.label).collect();
    let classes = task.num_classes();
    let margin = margin_for(form, config);

    let score = |c: u64| -> PopulationObjective {
        let locals: Vec<usize> = (0..n).map(|i| ((c >> (i * len)) as usize) & (per_elem - 1)).collect();
        let loss_of = |ids: &Vec<Vec<u32>>| -> f64 {
            let keys: Vec<u32> = (0..n).map(|i| ids[i][locals[i]]).collect();
            grouped_loss(&keys, &probs, &labels, classes, form)
        };
        let l_p = loss_of(&rat_id);
        let l_c = loss_of(&comp_id);
        let (mut l_s, mut l_cont) = (0.0, 0.0);
        for i in 0..n {
            let (s, k) = penalties[i][locals[i]];
            l_s += probs[i] * s;
            l_cont += probs[i] * k;
        }
        compose(l_p, l_c, l_s, l_cont, margin, config)
    };

    const CHUNK: u64 = 1 << 12;
    let total = candidates as u64;
    let chunks: Vec<(f64, Vec<(u64, PopulationObjective)>)> = (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|k| {
            let mut best = f64::INFINITY;
            let mut keep: Vec<(u64, PopulationObjective)> = Vec::new();
            for c in k * CHUNK..((k + 1) * CHUNK).min(total) {
                let obj = score(c);
                if obj.total < best - TIE_TOL {
                    best = obj.total;
                    keep.retain(|(_, o)| o.total <= best + TIE_TOL);
                }
                if obj.total <= best + TIE_TOL {
                    keep.push((c, obj));
                }
            }
            (best, keep)
        })
        .collect();
    let best_value = chunks.iter().map(|(b, _)| *b).fold(f64::INFINITY, f64::min);
    let winners: Vec<(u64, PopulationObjective)> = chunks
        .into_iter()
        .flat_map(|(_, keep)| keep)
        .filter(|(_, o)| o.total <= best_value + TIE_TOL)
        .collect();
    let best_terms = winners
        .iter()
        .min_by(|a, b| a.1.total.partial_cmp(&b.1.total).unwrap())
        .map(|(_, o)| *o)
        .expect("at least one candidate");
    let minimizers = winners
        .iter()
        .map(|(c, _)| MaskFunction {
            table: (0..n)
                .map(|i| local_mask(((c >> (i * len)) as usize) & (per_elem - 1)))
                .collect(),
        })
        .collect();
    Ok(Enumeration {
        form,
        candidates: total,
        best_value,
        best_terms,
        minimizers,
    })
}

/// Loss of one candidate's views, identified by interned ids.
fn grouped_loss(keys: &[u32], probs: &[f64], labels: &[usize], classes: usize, form: ObjectiveForm) -> f64 {
    let n = keys.len();
    let mut seen = vec![false; n];
    let mut total = 0.0;
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let mut counts = vec![0.0; classes];
        let mut members = Vec::new();
        for j in i..n {
            if keys[j] == keys[i] {
                seen[j] = true;
                counts[labels[j]] += probs[j];
                members.push(j);
            }
        }
        let mass: f64 = counts.iter().sum();
        match form {
            ObjectiveForm::Entropy => total += mass * entropy_bits(&counts),
            ObjectiveForm::Xent => {
                for j in members {
                    total -= probs[j] * (counts[labels[j]] / mass).ln();
                }
            }
        }
    }
    total
}

/// Mask function of the positional-code rationale: the first token when the
/// label is 1, the last token when it is 0.
pub fn positional_code_mask(task: &FiniteTask) -> MaskFunction {
    MaskFunction::from_fn(task, |ex| {
        let mut z = vec![0u8; ex.len()];
        if ex.label == 1 {
            z[0] = 1;
        } else {
            z[ex.len() - 1] = 1;
        }
        z
    })
}

/// Game configuration for oracle checks on `task`: the gap margin defaults
/// to half the label entropy.
pub fn oracle_config(task: &FiniteTask, base: &GameConfig) -> GameConfig {
    GameConfig {
        h: 0.5 * label_entropy(task),
        ..base.clone()
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::players::Sparsity;

    fn two_bit_task() -> FiniteTask {
        let ex = |a: usize, b: usize| TokenSequence::new(vec![a + 2, b + 2], a);
        FiniteTask::uniform("x uniform on 2 bits, y = first bit", vec![ex(0, 0), ex(0, 1), ex(1, 0), ex(1, 1)])
            .unwrap()
    }

    #[test]
    fn two_bit_entropies() {
        let t = two_bit_task();
        let first = exact_conditional_entropy(&t, |ex| vec![ex.tokens[0]]);
        let second = exact_conditional_entropy(&t, |ex| vec![ex.tokens[1]]);
        let both = exact_conditional_entropy(&t, |ex| ex.tokens.clone());
        let nothing = exact_conditional_entropy(&t, |_| Vec::new());
        assert_eq!(first, 0.0);
        assert!((second - 1.0).abs() < 1e-15);
        assert_eq!(both, 0.0);
        assert!((nothing - 1.0).abs() < 1e-15);
        assert!((label_entropy(&t) - 1.0).abs() < 1e-15);
    }

    fn acceptance_config(task: &FiniteTask) -> GameConfig {
        oracle_config(
            task,
            &GameConfig {
                lambda_g: 1.0,
                lambda_s: 1.0,
                lambda_cont: 1.0,
                sparsity: Sparsity::Count(1.0),
                max_pieces: 1,
                ..GameConfig::default()
            },
        )
    }

    #[test]
    fn positional_code_fails_only_comprehensiveness() {
        let task = FiniteTask::position2();
        let cfg = acceptance_config(&task);
        let r = check_conditions(&task, &positional_code_mask(&task), &cfg).unwrap();
        assert!(r.sufficient && r.compact && !r.comprehensive, "{r:?}");
    }

    #[test]
    fn identity_and_empty_masks() {
        let task = FiniteTask::position2();
        let cfg = acceptance_config(&task);
        let all = check_conditions(&task, &MaskFunction::constant(&task, &[1, 1, 1]), &cfg).unwrap();
        assert!(all.sufficient && !all.compact);
        assert!(all.comprehensive, "H(Y|all-mask) = H(Y) ≥ 0 + h");
        let strict = GameConfig { h: 1.5, ..cfg.clone() };
        let all = check_conditions(&task, &MaskFunction::constant(&task, &[1, 1, 1]), &strict).unwrap();
        assert!(!all.comprehensive);
        let none = check_conditions(&task, &MaskFunction::constant(&task, &[0, 0, 0]), &cfg).unwrap();
        assert!(!none.sufficient);
    }

    #[test]
    fn middle_token_minimizers() {
        let task = FiniteTask::position2();
        let cfg = acceptance_config(&task);
        let middle = MaskFunction::constant(&task, &[0, 1, 0]);
        for form in [ObjectiveForm::Entropy, ObjectiveForm::Xent] {
            let e = enumerate_best_masks(&task, &cfg, form).unwrap();
            assert_eq!(e.candidates, 4096);
            assert!(e.best_value.abs() < 1e-12);
            assert!(e.minimizers.contains(&middle), "{form:?}");
            for m in &e.minimizers {
                assert!(check_conditions(&task, m, &cfg).unwrap().all(), "{m:?}");
            }
        }
    }

    #[test]
    fn one_empty_entry_ties_with_the_middle_mask() {
        // with four inputs, dropping one input's selection keeps its rationale
        // view unique and leaves one ambiguous complement pair, worth 0.5 bits
        let task = FiniteTask::position2();
        let cfg = acceptance_config(&task);
        let mut m = MaskFunction::constant(&task, &[0, 1, 0]);
        m.table[3] = vec![0, 0, 0];
        let r = check_conditions(&task, &m, &cfg).unwrap();
        assert!(r.all(), "{r:?}");
        assert!((r.h_y_given_rc - 0.5).abs() < 1e-12);
        let e = enumerate_best_masks(&task, &cfg, ObjectiveForm::Entropy).unwrap();
        assert!(e.minimizers.contains(&m));
        assert!(e.minimizers.len() > 1);
    }

    #[test]
    fn sufficiency_alone_admits_selecting_everything() {
        let task = FiniteTask::position2();
        let cfg = GameConfig::default().cooperative_only();
        let e = enumerate_best_masks(&task, &cfg, ObjectiveForm::Entropy).unwrap();
        assert!(e.minimizers.contains(&MaskFunction::constant(&task, &[1, 1, 1])));
    }

    #[test]
    fn certified_masks_attain_the_minimum_term_by_term() {
        let task = FiniteTask::position2();
        let cfg = acceptance_config(&task);
        let e = enumerate_best_masks(&task, &cfg, ObjectiveForm::Entropy).unwrap();
        let z = MaskFunction::constant(&task, &[0, 1, 0]);
        let report = check_conditions(&task, &z, &cfg).unwrap();
        assert!(report.all());
        let obj = population_objective(&task, &z, &cfg, ObjectiveForm::Entropy).unwrap();
        assert!((obj.total - e.best_value).abs() < 1e-12);
        assert!((obj.l_p - report.h_y_given_x).abs() < 1e-12);
        assert_eq!(obj.l_g, 0.0);
        assert_eq!((obj.l_s, obj.l_cont), (0.0, 0.0));
    }

    #[test]
    fn xent_form_equals_entropy_in_nats() {
        let task = FiniteTask::position2();
        let z = positional_code_mask(&task);
        let cfg = acceptance_config(&task);
        let a = population_objective(&task, &z, &cfg, ObjectiveForm::Entropy).unwrap();
        let b = population_objective(&task, &z, &cfg, ObjectiveForm::Xent).unwrap();
        assert!((a.l_p * std::f64::consts::LN_2 - b.l_p).abs() < 1e-12);
        assert!((a.l_c * std::f64::consts::LN_2 - b.l_c).abs() < 1e-12);
    }

    #[test]
    fn feasibility_guard() {
        let ex = |y| TokenSequence::new(vec![2; 7], y);
        let task = FiniteTask::uniform("", vec![ex(0), ex(1), ex(0), ex(1)]).unwrap();
        match enumerate_best_masks(&task, &GameConfig::default(), ObjectiveForm::Entropy) {
            Err(Error::Feasibility { candidates, .. }) => assert_eq!(candidates, 1 << 28),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mask_function_shape_is_checked() {
        let task = FiniteTask::position2();
        let bad = MaskFunction { table: vec![vec![1, 0]; 4] };
        assert!(check_conditions(&task, &bad, &GameConfig::default()).is_err());
    }

    fn arb_task() -> impl Strategy<Value = FiniteTask> {
        (2usize..=4).prop_flat_map(|len| {
            prop::collection::vec(
                (prop::collection::vec(2usize..5, len), 0usize..2, 1u32..10),
                2..7,
            )
            .prop_map(|rows| {
                let total: u32 = rows.iter().map(|r| r.2).sum();
                let support = rows
                    .into_iter()
                    .map(|(t, y, w)| (TokenSequence::new(t, y), w as f64 / total as f64))
                    .collect::<Vec<_>>();
                // renormalize away rounding so the constructor accepts it
                let s: f64 = support.iter().map(|(_, p)| p).sum();
                let support = support.into_iter().map(|(e, p)| (e, p / s)).collect();
                FiniteTask::new("random", support).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn more_positions_never_add_uncertainty(
            task in arb_task(),
            seed: u64,
        ) {
            // fixed position subsets; with input-dependent masks the view also
            // encodes the mask, and a superset can merge views
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let len = task.seq_len();
            let small: Vec<u8> = (0..len).map(|_| rng.random_range(0..2u8)).collect();
            let big: Vec<u8> = small.iter().map(|&b| b | rng.random_range(0..2u8)).collect();
            let view = |z: &Vec<u8>| -> Vec<Vec<usize>> {
                task.iter().map(|(ex, _)| apply_mask(&ex.tokens, z).unwrap().rationale).collect()
            };
            let h_small = entropy_of_views(&task, &view(&small));
            let h_big = entropy_of_views(&task, &view(&big));
            prop_assert!(h_big <= h_small + 1e-12);
            let hy = label_entropy(&task);
            prop_assert!(h_small >= -1e-15 && h_small <= hy + 1e-12);
        }

        #[test]
        fn positional_code_is_never_comprehensive(task in arb_task(), h in 0.01f64..1.0) {
            // on deterministic tasks where X decides Y, the positional code is
            // sufficient and compact but leaves the label in the complement
            let mut labels = HashMap::new();
            let consistent = task.iter().all(|(ex, _)| *labels.entry(ex.tokens.clone()).or_insert(ex.label) == ex.label);
            let both = task.iter().any(|(ex, _)| ex.label == 0) && task.iter().any(|(ex, _)| ex.label == 1);
            prop_assume!(consistent && both);
            let cfg = GameConfig { h, sparsity: Sparsity::Count(1.0), max_pieces: 1, ..GameConfig::default() };
            let r = check_conditions(&task, &positional_code_mask(&task), &cfg).unwrap();
            prop_assert!(r.sufficient);
            prop_assert!(r.compact);
            prop_assert!(!r.comprehensive);
        }
    }
}
