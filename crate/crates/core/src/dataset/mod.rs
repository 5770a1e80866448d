//! Game logs (one JSON object per line), vocabulary construction and
//! scene-disjoint splits.

mod vocab;

pub use vocab::{QuestionTokens, Vocabulary, DEFAULT_MAX_QUESTION_LEN, SPECIALS};

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::AnswerClass;

/// One question/answer exchange; serialized as `[question, answer]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "(String, AnswerClass)", into = "(String, AnswerClass)")]
pub struct Turn {
    pub question: String,
    pub answer: AnswerClass,
}

impl Turn {
    pub fn new(question: impl Into<String>, answer: AnswerClass) -> Self {
        Turn {
            question: question.into(),
            answer,
        }
    }
}

impl From<(String, AnswerClass)> for Turn {
    fn from((question, answer): (String, AnswerClass)) -> Self {
        Turn { question, answer }
    }
}

impl From<Turn> for (String, AnswerClass) {
    fn from(t: Turn) -> Self {
        (t.question, t.answer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GameStatus {
    Success,
    Failure,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub game_id: u64,
    pub scene_id: u64,
    pub target_id: usize,
    pub turns: Vec<Turn>,
    pub guess: Option<usize>,
    pub status: GameStatus,
    /// Per-turn belief trajectory, when exported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beliefs: Option<Vec<Vec<f64>>>,
}

impl GameRecord {
    pub fn is_success(&self) -> bool {
        self.status == GameStatus::Success
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let complete = self.status != GameStatus::Incomplete;
        if complete && self.turns.is_empty() {
            return Err("completed game without turns".into());
        }
        if complete != self.guess.is_some() {
            return Err("guess must be present exactly when the game is complete".into());
        }
        if complete && (self.status == GameStatus::Success) != (self.guess == Some(self.target_id))
        {
            return Err("status disagrees with guess vs target".into());
        }
        Ok(())
    }
}

/// Reads a game log, validating every record.
pub fn load_games(path: &Path) -> Result<Vec<GameRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_game_line(&line, i + 1)?);
    }
    Ok(out)
}

pub fn parse_game_line(line: &str, line_no: usize) -> Result<GameRecord> {
    let game: GameRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    game.validate().map_err(|message| Error::Schema {
        line: line_no,
        message,
    })?;
    Ok(game)
}

pub fn game_to_line(game: &GameRecord) -> String {
    serde_json::to_string(game).expect("game record serializes")
}

pub fn write_log(games: &[GameRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for g in games {
        writeln!(w, "{}", game_to_line(g)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn append_log(game: &GameRecord, path: &Path) -> Result<()> {
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(file, "{}", game_to_line(game)).map_err(|e| Error::io(path, e))
}

pub fn read_log(path: &Path) -> Result<Vec<GameRecord>> {
    load_games(path)
}

/// Train/valid/test split by scene so no scene appears in two parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<GameRecord>,
    pub valid: Vec<GameRecord>,
    pub test: Vec<GameRecord>,
}

pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.70, 0.15, 0.15);

pub fn split(games: &[GameRecord], ratios: (f64, f64, f64), seed: u64) -> Result<Split> {
    let (a, b, c) = ratios;
    if [a, b, c].iter().any(|r| !(0.0..=1.0).contains(r)) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSpec(format!(
            "split ratios must be in [0,1] and sum to 1, got {ratios:?}"
        )));
    }
    let mut scenes: Vec<u64> = games
        .iter()
        .map(|g| g.scene_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    scenes.shuffle(&mut rng);
    let n = scenes.len();
    let n_train = ((a * n as f64).round() as usize).min(n);
    let n_valid = ((b * n as f64).round() as usize).min(n - n_train);
    let train: BTreeSet<u64> = scenes[..n_train].iter().copied().collect();
    let valid: BTreeSet<u64> = scenes[n_train..n_train + n_valid].iter().copied().collect();
    let mut out = Split {
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
    };
    for g in games {
        if train.contains(&g.scene_id) {
            out.train.push(g.clone());
        } else if valid.contains(&g.scene_id) {
            out.valid.push(g.clone());
        } else {
            out.test.push(g.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn game(id: u64, scene: u64, target: usize, guess: usize) -> GameRecord {
        GameRecord {
            game_id: id,
            scene_id: scene,
            target_id: target,
            turns: vec![Turn::new("is it red?", AnswerClass::Yes)],
            guess: Some(guess),
            status: if guess == target {
                GameStatus::Success
            } else {
                GameStatus::Failure
            },
            beliefs: None,
        }
    }

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn parses_success_line() {
        let f = write_lines(&[
            r#"{"game_id":1,"scene_id":2,"target_id":0,"turns":[["is it a dog?","Yes"],["is it red?","N/A"]],"guess":0,"status":"success"}"#,
        ]);
        let games = load_games(f.path()).unwrap();
        assert_eq!(games.len(), 1);
        assert_eq!(games[0].turns[1].answer, AnswerClass::NA);
        assert!(games[0].is_success());
    }

    #[test]
    fn unknown_answer_is_parse_error() {
        let f = write_lines(&[
            r#"{"game_id":1,"scene_id":2,"target_id":0,"turns":[["is it a dog?","yes"]],"guess":0,"status":"success"}"#,
            r#"{"game_id":2,"scene_id":2,"target_id":0,"turns":[["is it a dog?","maybe"]],"guess":0,"status":"success"}"#,
        ]);
        match load_games(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inconsistent_status_is_schema_error() {
        let f = write_lines(&[
            r#"{"game_id":1,"scene_id":2,"target_id":0,"turns":[["q","yes"]],"guess":1,"status":"success"}"#,
        ]);
        assert!(matches!(
            load_games(f.path()),
            Err(Error::Schema { line: 1, .. })
        ));
        let f = write_lines(&[
            r#"{"game_id":1,"scene_id":2,"target_id":0,"turns":[],"guess":null,"status":"incomplete"}"#,
        ]);
        assert_eq!(load_games(f.path()).unwrap().len(), 1);
        let f = write_lines(&[
            r#"{"game_id":1,"scene_id":2,"target_id":0,"turns":[],"guess":0,"status":"success"}"#,
        ]);
        assert!(matches!(load_games(f.path()), Err(Error::Schema { .. })));
    }

    #[test]
    fn empty_file_is_empty_list() {
        let f = tempfile::NamedTempFile::new().unwrap();
        assert!(load_games(f.path()).unwrap().is_empty());
    }

    #[test]
    fn write_and_read_preserve_beliefs() {
        let mut g = game(1, 1, 0, 0);
        g.beliefs = Some(vec![vec![0.5, 0.5], vec![0.9, 0.1]]);
        let f = tempfile::NamedTempFile::new().unwrap();
        write_log(&[g.clone(), game(2, 1, 1, 0)], f.path()).unwrap();
        let back = read_log(f.path()).unwrap();
        assert_eq!(back[0], g);
        let raw = std::fs::read_to_string(f.path()).unwrap();
        assert!(raw.lines().nth(1).unwrap().find("beliefs").is_none());
    }

    #[test]
    fn empty_log_writes_empty_file() {
        let f = tempfile::NamedTempFile::new().unwrap();
        write_log(&[], f.path()).unwrap();
        assert_eq!(std::fs::metadata(f.path()).unwrap().len(), 0);
    }

    #[test]
    fn split_100_scenes() {
        let games: Vec<_> = (0..100).map(|i| game(i, i, 0, 0)).collect();
        let s = split(&games, DEFAULT_SPLIT, 3).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (70, 15, 15));
        assert_eq!(s, split(&games, DEFAULT_SPLIT, 3).unwrap());
        assert!(split(&games, (0.5, 0.5, 0.5), 3).is_err());
    }

    proptest! {
        #[test]
        fn split_is_scene_disjoint_and_exhaustive(n_games in 1usize..120, n_scenes in 1u64..40, seed in 0u64..1000) {
            let games: Vec<_> = (0..n_games as u64).map(|i| game(i, i % n_scenes, 0, 0)).collect();
            let s = split(&games, DEFAULT_SPLIT, seed).unwrap();
            prop_assert_eq!(s.train.len() + s.valid.len() + s.test.len(), games.len());
            let ids = |v: &[GameRecord]| v.iter().map(|g| g.scene_id).collect::<BTreeSet<_>>();
            let (a, b, c) = (ids(&s.train), ids(&s.valid), ids(&s.test));
            prop_assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
            let total = (a.len() + b.len() + c.len()) as f64;
            prop_assert!((a.len() as f64 - 0.7 * total).abs() <= 1.0);
        }

        #[test]
        fn log_round_trip(ids in prop::collection::vec((0u64..1000, 0usize..8, 0usize..8), 0..20)) {
            let games: Vec<_> = ids.iter().map(|&(id, t, g)| game(id, id / 3, t, g)).collect();
            let f = tempfile::NamedTempFile::new().unwrap();
            write_log(&games, f.path()).unwrap();
            prop_assert_eq!(read_log(f.path()).unwrap(), games);
        }
    }
}
