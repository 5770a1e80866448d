use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::GameRecord;
use crate::error::{Error, Result};
use crate::world::tokenize;

pub const SPECIALS: [&str; 5] = ["[PAD]", "[SOS]", "[EOS]", "[UNK]", "[CLS]"];
pub const DEFAULT_MAX_QUESTION_LEN: usize = 12;

/// Frozen token list; the five specials occupy indices 0-4.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub const PAD: usize = 0;
    pub const SOS: usize = 1;
    pub const EOS: usize = 2;
    pub const UNK: usize = 3;
    pub const CLS: usize = 4;

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens.iter().zip(SPECIALS).any(|(t, s)| t != s) {
            return Err(Error::InvalidData(
                "vocabulary must start with [PAD] [SOS] [EOS] [UNK] [CLS]".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidData(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Question tokens of `games`, filtered by `min_freq`, ordered by
    /// descending frequency then lexicographically.
    pub fn build(games: &[GameRecord], min_freq: usize) -> Self {
        Self::build_with(games, min_freq, &[])
    }

    /// Like [`Vocabulary::build`], then appends any `reserved` token not
    /// already present (in the given order).
    pub fn build_with(games: &[GameRecord], min_freq: usize, reserved: &[&str]) -> Self {
        let min_freq = min_freq.max(1);
        let mut counts: HashMap<String, usize> = HashMap::new();
        for g in games {
            for t in &g.turns {
                for w in tokenize(&t.question) {
                    *counts.entry(w).or_default() += 1;
                }
            }
        }
        let mut counted: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_freq && !SPECIALS.contains(&w.as_str()))
            .collect();
        counted.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(counted.into_iter().map(|(w, _)| w));
        for r in reserved {
            if !tokens.iter().any(|t| t == r) {
                tokens.push(r.to_string());
            }
        }
        Self::from_tokens(tokens).expect("specials are in place")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or("[UNK]", String::as_str)
    }

    /// Word ids of a question, without `[CLS]`.
    pub fn word_ids(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|w| self.id(w)).collect()
    }

    /// `[CLS]` followed by the question's word ids, truncated to `max_len`.
    pub fn encode_question(&self, text: &str, max_len: usize) -> QuestionTokens {
        self.encode_with_suffix(text, None, max_len)
    }

    /// Same as [`Vocabulary::encode_question`] with an extra trailing token.
    pub fn encode_with_suffix(
        &self,
        text: &str,
        suffix: Option<&str>,
        max_len: usize,
    ) -> QuestionTokens {
        let mut ids = Vec::with_capacity(max_len);
        ids.push(Self::CLS);
        ids.extend(self.word_ids(text));
        if let Some(s) = suffix {
            ids.push(self.id(s));
        }
        if ids.len() > max_len {
            log::warn!(
                "question {text:?} has {} tokens, truncating to {max_len}",
                ids.len()
            );
            ids.truncate(max_len.max(1));
        }
        QuestionTokens { ids }
    }

    /// Joins ids back into text.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Vocabulary::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// Token ids with `[CLS]` at position 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionTokens {
    pub ids: Vec<usize>,
}

impl QuestionTokens {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{GameStatus, Turn};
    use crate::world::AnswerClass;

    fn games_with(questions: &[&str]) -> Vec<GameRecord> {
        vec![GameRecord {
            game_id: 0,
            scene_id: 0,
            target_id: 0,
            turns: questions
                .iter()
                .map(|q| Turn::new(*q, AnswerClass::Yes))
                .collect(),
            guess: Some(0),
            status: GameStatus::Success,
            beliefs: None,
        }]
    }

    #[test]
    fn single_question_vocab() {
        let v = Vocabulary::build(&games_with(&["is it red?"]), 1);
        assert_eq!(v.len(), 8);
        assert_eq!(&v.tokens()[..5], &SPECIALS.map(String::from));
        assert_eq!(&v.tokens()[5..], &["is", "it", "red"]);
    }

    #[test]
    fn min_freq_threshold() {
        let v = Vocabulary::build(
            &games_with(&["is it red?", "is it blue?", "is it blue?"]),
            2,
        );
        assert_eq!(v.id("red"), Vocabulary::UNK);
        assert_ne!(v.id("blue"), Vocabulary::UNK);
        // is/it: 3 each, blue: 2
        assert_eq!(&v.tokens()[5..], &["is", "it", "blue"]);
    }

    #[test]
    fn deterministic_and_reserved() {
        let g = games_with(&["is it a dog?", "is it red?"]);
        assert_eq!(Vocabulary::build(&g, 1), Vocabulary::build(&g, 1));
        let v = Vocabulary::build_with(&g, 1, &["yes", "no", "na", "red"]);
        assert_eq!(&v.tokens()[v.len() - 3..], &["yes", "no", "na"]);
    }

    #[test]
    fn encode_prepends_cls_and_truncates() {
        let v = Vocabulary::build(&games_with(&["is it red?"]), 1);
        let q = v.encode_question("is it red?", 12);
        assert_eq!(q.ids[0], Vocabulary::CLS);
        assert_eq!(q.len(), 4);
        let long = v.encode_question(&"is ".repeat(20), 12);
        assert_eq!(long.len(), 12);
        assert!(long.ids.iter().all(|&i| i < v.len()));
    }

    #[test]
    fn serde_round_trip_rebuilds_index() {
        let v = Vocabulary::build(&games_with(&["is it red?"]), 1);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back.id("red"), v.id("red"));
        assert!(serde_json::from_str::<Vocabulary>(r#"["a","b"]"#).is_err());
    }
}
