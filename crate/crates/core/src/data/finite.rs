use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TokenSequence;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedExample {
    #[serde(flatten)]
    pub example: TokenSequence,
    pub prob: f64,
}

/// Explicit joint distribution over fixed-length sequences and labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTask")]
pub struct FiniteTask {
    pub description: String,
    pub support: Vec<WeightedExample>,
}

#[derive(Deserialize)]
struct RawTask {
    #[serde(default)]
    description: String,
    support: Vec<WeightedExample>,
}

impl TryFrom<RawTask> for FiniteTask {
    type Error = Error;

    fn try_from(raw: RawTask) -> Result<Self> {
        FiniteTask::new(
            raw.description,
            raw.support.into_iter().map(|w| (w.example, w.prob)).collect(),
        )
    }
}

impl FiniteTask {
    pub fn new(description: impl Into<String>, support: Vec<(TokenSequence, f64)>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::Config("finite task has an empty support".into()));
        }
        let len = support[0].0.len();
        if len == 0 {
            return Err(Error::EmptyInput);
        }
        let mut total = 0.0;
        for (ex, p) in &support {
            if ex.len() != len {
                return Err(Error::Config(format!(
                    "finite task sequences must share one length ({len}), found {}",
                    ex.len()
                )));
            }
            if !(*p > 0.0) || !p.is_finite() {
                return Err(Error::Config(format!("support probability {p} is not positive")));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "support probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self {
            description: description.into(),
            support: support
                .into_iter()
                .map(|(example, prob)| WeightedExample { example, prob })
                .collect(),
        })
    }

    /// Equiprobable support.
    pub fn uniform(description: impl Into<String>, examples: Vec<TokenSequence>) -> Result<Self> {
        let p = 1.0 / examples.len().max(1) as f64;
        Self::new(description, examples.into_iter().map(|e| (e, p)).collect())
    }

    /// Four equiprobable length-3 sequences: the middle token decides the
    /// label, the outer two are label-independent noise (jointly as well as
    /// individually).
    pub fn position2() -> Self {
        let ex = |t: [usize; 3], y| TokenSequence::new(t.to_vec(), y).with_gold(vec![0, 1, 0]);
        Self::uniform(
            "middle token decides the label; outer tokens are noise",
            vec![
                ex([2, 5, 3], 1),
                ex([3, 5, 2], 1),
                ex([2, 4, 3], 0),
                ex([3, 4, 2], 0),
            ],
        )
        .expect("valid built-in task")
    }

    pub fn seq_len(&self) -> usize {
        self.support[0].example.len()
    }

    pub fn num_classes(&self) -> usize {
        self.support.iter().map(|w| w.example.label + 1).max().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TokenSequence, f64)> {
        self.support.iter().map(|w| (&w.example, w.prob))
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_distribution() {
        let a = TokenSequence::new(vec![2, 3], 0);
        let b = TokenSequence::new(vec![2, 4], 1);
        assert!(FiniteTask::new("", vec![(a.clone(), 0.5), (b.clone(), 0.4)]).is_err());
        assert!(FiniteTask::new("", vec![(a.clone(), 1.0), (b.clone(), 0.0)]).is_err());
        let c = TokenSequence::new(vec![2], 1);
        assert!(FiniteTask::new("", vec![(a.clone(), 0.5), (c, 0.5)]).is_err());
        assert!(FiniteTask::new("", vec![(a, 0.5), (b, 0.5)]).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let task = FiniteTask::position2();
        let text = serde_json::to_string(&task).unwrap();
        let back: FiniteTask = serde_json::from_str(&text).unwrap();
        assert_eq!(task, back);
        let bad = text.replace("0.25", "0.3");
        assert!(serde_json::from_str::<FiniteTask>(&bad).is_err());
    }
}
