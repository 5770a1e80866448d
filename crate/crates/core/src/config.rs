//! Run configuration files: one `key = value` per line, `#` starts a
//! comment. Unknown keys, repeated keys and out-of-range values are errors.
//! Keys left out keep each agent's defaults.

use std::path::Path;

use crate::error::{Error, Result};
use crate::guesser::{GuesserConfig, GuesserVariant};
use crate::oracle::OracleConfig;
use crate::questioner::QuestionerConfig;
use crate::training::TrainSchedule;

pub const KEYS: [&str; 15] = [
    "hidden_size",
    "layer_count",
    "alpha",
    "answer_embed_size",
    "word_embed_size",
    "max_turns",
    "max_question_len",
    "seed",
    "learning_rate",
    "epochs",
    "batch_size",
    "patience",
    "freeze_estimator",
    "guesser_variant",
    "per_turn_supervision",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub hidden_size: Option<usize>,
    pub layer_count: Option<usize>,
    pub alpha: Option<f64>,
    pub answer_embed_size: Option<usize>,
    pub word_embed_size: Option<usize>,
    pub max_turns: Option<usize>,
    pub max_question_len: Option<usize>,
    pub seed: Option<u64>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub freeze_estimator: Option<bool>,
    pub guesser_variant: Option<GuesserVariant>,
    pub per_turn_supervision: Option<bool>,
}

fn value_err(line: usize, key: &str, value: &str, why: &str) -> Error {
    Error::Config(format!("line {line}: {key} = {value:?}: {why}"))
}

fn positive(line: usize, key: &str, value: &str) -> Result<usize> {
    match value.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(value_err(line, key, value, "expected a positive integer")),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected key = value")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {line}: unknown key {key:?}")));
            }
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {line}: duplicate key {key:?}")));
            }
            match key {
                "hidden_size" => cfg.hidden_size = Some(positive(line, key, value)?),
                "layer_count" => {
                    cfg.layer_count = Some(value.parse().map_err(|_| {
                        value_err(line, key, value, "expected a non-negative integer")
                    })?)
                }
                "alpha" => match value.parse::<f64>() {
                    Ok(a) if (0.0..=1.0).contains(&a) => cfg.alpha = Some(a),
                    _ => return Err(value_err(line, key, value, "must lie in [0, 1]")),
                },
                "answer_embed_size" => cfg.answer_embed_size = Some(positive(line, key, value)?),
                "word_embed_size" => cfg.word_embed_size = Some(positive(line, key, value)?),
                "max_turns" => cfg.max_turns = Some(positive(line, key, value)?),
                "max_question_len" => cfg.max_question_len = Some(positive(line, key, value)?),
                "seed" => {
                    cfg.seed = Some(value.parse().map_err(|_| {
                        value_err(line, key, value, "expected a non-negative integer")
                    })?)
                }
                "learning_rate" => match value.parse::<f64>() {
                    Ok(lr) if lr > 0.0 && lr.is_finite() => cfg.learning_rate = Some(lr),
                    _ => return Err(value_err(line, key, value, "must be positive")),
                },
                "epochs" => cfg.epochs = Some(positive(line, key, value)?),
                "batch_size" => cfg.batch_size = Some(positive(line, key, value)?),
                "patience" => cfg.patience = Some(positive(line, key, value)?),
                "freeze_estimator" => {
                    cfg.freeze_estimator = Some(
                        value
                            .parse()
                            .map_err(|_| value_err(line, key, value, "expected true or false"))?,
                    )
                }
                "per_turn_supervision" => {
                    cfg.per_turn_supervision = Some(
                        value
                            .parse()
                            .map_err(|_| value_err(line, key, value, "expected true or false"))?,
                    )
                }
                "guesser_variant" => {
                    cfg.guesser_variant = Some(value.parse().map_err(|_| {
                        value_err(
                            line,
                            key,
                            value,
                            "expected post_fusion or pre_concatenation",
                        )
                    })?)
                }
                _ => unreachable!("key list checked above"),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn schedule(&self, s: &mut TrainSchedule, seed: u64) {
        s.seed = seed;
        if let Some(v) = self.learning_rate {
            s.learning_rate = v;
        }
        if let Some(v) = self.epochs {
            s.epochs = v;
        }
        if let Some(v) = self.batch_size {
            s.batch_size = v;
        }
        if let Some(v) = self.patience {
            s.patience = v;
        }
    }

    pub fn oracle(&self, seed: u64) -> OracleConfig {
        let mut c = OracleConfig::default();
        if let Some(v) = self.hidden_size {
            c.hidden_size = v;
        }
        if let Some(v) = self.layer_count {
            c.layer_count = v;
        }
        if let Some(v) = self.max_question_len {
            c.max_question_len = v;
        }
        self.schedule(&mut c.schedule, seed);
        c
    }

    pub fn guesser(&self, seed: u64) -> GuesserConfig {
        let mut c = GuesserConfig::default();
        if let Some(v) = self.hidden_size {
            c.hidden_size = v;
        }
        if let Some(v) = self.layer_count {
            c.layer_count = v;
        }
        if let Some(v) = self.alpha {
            c.alpha = v;
        }
        if let Some(v) = self.answer_embed_size {
            c.answer_embed_size = v;
        }
        if let Some(v) = self.max_question_len {
            c.max_question_len = v;
        }
        if let Some(v) = self.guesser_variant {
            c.variant = v;
        }
        if let Some(v) = self.per_turn_supervision {
            c.per_turn_supervision = v;
        }
        self.schedule(&mut c.schedule, seed);
        c
    }

    pub fn questioner(&self, seed: u64) -> QuestionerConfig {
        let mut c = QuestionerConfig::default();
        if let Some(v) = self.hidden_size {
            c.hidden_size = v;
        }
        if let Some(v) = self.word_embed_size {
            c.word_embed_size = v;
        }
        if let Some(v) = self.max_turns {
            c.max_turns = v;
        }
        if let Some(v) = self.max_question_len {
            c.max_question_len = v;
        }
        if let Some(v) = self.freeze_estimator {
            c.freeze_estimator = v;
        }
        self.schedule(&mut c.schedule, seed);
        c
    }
}
