use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparsity budget `s`, either an absolute token count or a fraction of the
/// sequence length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sparsity {
    Count(f64),
    Fraction(f64),
}

impl Sparsity {
    /// Budget in tokens for a sequence of length `len`.
    pub fn resolve(&self, len: usize) -> f64 {
        match *self {
            Sparsity::Count(c) => c,
            Sparsity::Fraction(f) => f * len as f64,
        }
    }
}

/// Weights and budgets of the three-player game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    /// Weight of the gap hinge between predictor and complement losses.
    pub lambda_g: f64,
    pub lambda_s: f64,
    pub lambda_cont: f64,
    /// Gap margin on the loss scale (the oracle reads it in bits).
    pub h: f64,
    pub sparsity: Sparsity,
    /// Per-transition allowance in the continuity hinge.
    pub continuity_c: f64,
    /// Maximum number of contiguous pieces for the compactness condition.
    pub max_pieces: usize,
    /// Mixing weight toward a fair coin when sampling masks.
    pub explore: f64,
    /// Inference selects tokens with probability strictly above this.
    pub threshold: f64,
    /// Complement accuracy tolerated by the bounded reward before the
    /// adversarial penalty applies.
    pub reward_margin: f64,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            lambda_g: 1.0,
            lambda_s: 1.0,
            lambda_cont: 1.0,
            h: 0.0,
            sparsity: Sparsity::Fraction(0.15),
            continuity_c: 0.0,
            max_pieces: 1,
            explore: 0.05,
            threshold: 0.5,
            reward_margin: 0.0,
        }
    }
}

impl GameConfig {
    /// The cooperative two-player game: every regularizer switched off.
    pub fn cooperative_only(mut self) -> Self {
        self.lambda_g = 0.0;
        self.lambda_s = 0.0;
        self.lambda_cont = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("lambda_g", self.lambda_g),
            ("lambda_s", self.lambda_s),
            ("lambda_cont", self.lambda_cont),
            ("h", self.h),
            ("continuity_c", self.continuity_c),
            ("reward_margin", self.reward_margin),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be a finite value ≥ 0, got {v}")));
            }
        }
        match self.sparsity {
            Sparsity::Count(c) if !(c >= 0.0) => {
                return Err(Error::Config(format!("sparsity count must be ≥ 0, got {c}")))
            }
            Sparsity::Fraction(f) if !(0.0..=1.0).contains(&f) => {
                return Err(Error::Config(format!("sparsity fraction must be in [0, 1], got {f}")))
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.explore) {
            return Err(Error::Config(format!("explore must be in [0, 1], got {}", self.explore)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold must be in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Architecture of every player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Weights and embeddings start uniform in `(-init_scale, init_scale)`.
    pub init_scale: f64,
    /// Condition the generator on a pretrained classifier's predicted label.
    pub introspective: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            hidden_dim: 32,
            init_scale: 0.1,
            introspective: false,
        }
    }
}
