//! Training-time masking of dialog components.
//!
//! Each component of the chosen kind is independently replaced by
//! [`MASK_TOKEN`] with probability `rate`. The random stream is seeded from
//! the policy seed and the example's image id, so a given (example, policy)
//! always masks the same components.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, DialogExample};
use crate::dialog::MASK_TOKEN;
use crate::hash;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStrategy {
    None,
    Captions,
    Questions,
    Answers,
    /// Question and answer of the same round together.
    Rounds,
    /// Whitespace tokens across caption, questions and answers.
    Tokens,
}

impl MaskStrategy {
    pub const ALL: [MaskStrategy; 6] =
        [Self::None, Self::Captions, Self::Questions, Self::Answers, Self::Rounds, Self::Tokens];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Captions => "captions",
            Self::Questions => "questions",
            Self::Answers => "answers",
            Self::Rounds => "rounds",
            Self::Tokens => "tokens",
        }
    }
}

impl fmt::Display for MaskStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskStrategy {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| CorpusError::InvalidPolicy(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskingPolicy {
    pub strategy: MaskStrategy,
    pub rate: f64,
    pub seed: u64,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        Self { strategy: MaskStrategy::None, rate: 0.2, seed: 0 }
    }
}

impl MaskingPolicy {
    pub fn new(strategy: MaskStrategy, rate: f64, seed: u64) -> Result<Self, CorpusError> {
        let p = Self { strategy, rate, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(CorpusError::InvalidPolicy(format!("rate {} outside [0, 1]", self.rate)));
        }
        Ok(())
    }
}

fn mask_tokens(text: &str, rng: &mut ChaCha8Rng, rate: f64) -> String {
    text.split_whitespace()
        .map(|t| if rng.random_bool(rate) { MASK_TOKEN } else { t })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn apply_masking(example: &DialogExample, policy: &MaskingPolicy) -> Result<DialogExample, CorpusError> {
    policy.validate()?;
    let mut out = example.clone();
    if policy.strategy == MaskStrategy::None {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hash::seeded(policy.seed, example.image_id.as_bytes()));
    let rate = policy.rate;
    let dialog = &mut out.dialog;
    match policy.strategy {
        MaskStrategy::None => {}
        MaskStrategy::Captions => {
            if rng.random_bool(rate) {
                dialog.caption = MASK_TOKEN.to_owned();
            }
        }
        MaskStrategy::Questions => {
            for r in &mut dialog.rounds {
                if rng.random_bool(rate) {
                    r.question = MASK_TOKEN.to_owned();
                }
            }
        }
        MaskStrategy::Answers => {
            for r in &mut dialog.rounds {
                if rng.random_bool(rate) {
                    r.answer = MASK_TOKEN.to_owned();
                }
            }
        }
        MaskStrategy::Rounds => {
            for r in &mut dialog.rounds {
                if rng.random_bool(rate) {
                    r.question = MASK_TOKEN.to_owned();
                    r.answer = MASK_TOKEN.to_owned();
                }
            }
        }
        MaskStrategy::Tokens => {
            dialog.caption = mask_tokens(&dialog.caption, &mut rng, rate);
            for r in &mut dialog.rounds {
                r.question = mask_tokens(&r.question, &mut rng, rate);
                r.answer = mask_tokens(&r.answer, &mut rng, rate);
            }
        }
    }
    Ok(out)
}
