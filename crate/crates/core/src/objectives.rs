//! Loss terms of the three-player game and the bounded per-sample reward
//! used for the generator's policy gradient.

use serde::{Deserialize, Serialize};

use crate::players::GameConfig;

/// Per-example (or averaged) loss components and their weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_p: f64,
    pub l_c: f64,
    pub l_g: f64,
    pub l_s: f64,
    pub l_cont: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Component-wise mean; `total` is averaged like the other fields.
    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        if items.is_empty() {
            return LossBreakdown::default();
        }
        let n = items.len() as f64;
        let mut acc = LossBreakdown::default();
        for b in items {
            acc.l_p += b.l_p;
            acc.l_c += b.l_c;
            acc.l_g += b.l_g;
            acc.l_s += b.l_s;
            acc.l_cont += b.l_cont;
            acc.total += b.total;
        }
        LossBreakdown {
            l_p: acc.l_p / n,
            l_c: acc.l_c / n,
            l_g: acc.l_g / n,
            l_s: acc.l_s / n,
            l_cont: acc.l_cont / n,
            total: acc.total / n,
        }
    }
}

/// `max{L_p − L_c + h, 0}`: zero once the complement's loss exceeds the
/// rationale's by at least `h`.
pub fn gap_loss(l_p: f64, l_c: f64, h: f64) -> f64 {
    (l_p - l_c + h).max(0.0)
}

/// `max{Σ z_i − s, 0}` with `s` already resolved to a token count.
pub fn sparsity_loss(z: &[u8], s: f64) -> f64 {
    (selected(z) as f64 - s).max(0.0)
}

/// `Σ_i max{|z_i − z_{i−1}| − c, 0}` for `i = 1..L`, with `z_0 = 0`.
pub fn continuity_loss(z: &[u8], c: f64) -> f64 {
    let mut prev = 0u8;
    let mut total = 0.0;
    for &b in z {
        total += ((b as f64 - prev as f64).abs() - c).max(0.0);
        prev = b;
    }
    total
}

pub fn selected(z: &[u8]) -> usize {
    z.iter().map(|&b| b as usize).sum()
}

/// Number of 0↔1 changes, counting a leading selection against `z_0 = 0`.
pub fn transitions(z: &[u8]) -> usize {
    let mut prev = 0u8;
    let mut n = 0;
    for &b in z {
        n += usize::from(b != prev);
        prev = b;
    }
    n
}

/// Number of maximal runs of selected tokens.
pub fn pieces(z: &[u8]) -> usize {
    let mut prev = 0u8;
    let mut n = 0;
    for &b in z {
        n += usize::from(b == 1 && prev == 0);
        prev = b;
    }
    n
}

/// `L_p + λ_g·L_g + λ_s·L_s + λ_cont·L_cont` for one example with mask `z`
/// and predictor / complement losses `l_p`, `l_c`.
pub fn generator_objective(l_p: f64, l_c: f64, z: &[u8], config: &GameConfig) -> LossBreakdown {
    let l_g = gap_loss(l_p, l_c, config.h);
    let l_s = sparsity_loss(z, config.sparsity.resolve(z.len()));
    let l_cont = continuity_loss(z, config.continuity_c);
    LossBreakdown {
        l_p,
        l_c,
        l_g,
        l_s,
        l_cont,
        total: l_p + config.lambda_g * l_g + config.lambda_s * l_s + config.lambda_cont * l_cont,
    }
}

/// Bounded per-sample reward: 0/1 accuracies stand in for the two
/// cross-entropies and the structural penalties are divided by the sequence
/// length.
///
/// The adversarial term is `max{a_c − h_r, 0}`: a correct complement costs
/// `λ_g` whether or not the predictor is also correct, so the degenerate
/// outcome (both correct) scores 0 rather than 1.
pub fn sample_reward(pred_correct: bool, comp_correct: bool, z: &[u8], config: &GameConfig) -> f64 {
    let a_p = f64::from(u8::from(pred_correct));
    let a_c = f64::from(u8::from(comp_correct));
    let len = z.len().max(1) as f64;
    let gap = (a_c - config.reward_margin).max(0.0);
    let sparsity = sparsity_loss(z, config.sparsity.resolve(z.len())) / len;
    let continuity = continuity_loss(z, config.continuity_c) / len;
    a_p - config.lambda_g * gap - config.lambda_s * sparsity - config.lambda_cont * continuity
}
