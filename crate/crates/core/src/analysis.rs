//! Metrics over game logs and the post-hoc experiments: answer corruption,
//! cross-setting confusion tables and the oracle-by-guesser grid.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::GameRecord;
use crate::engine::{self_play, Agents, GameConfig, GuesserAgent, OracleAgent, QuestionerAgent};
use crate::error::{Error, Result};
use crate::numkernel::mix_seed;
use crate::world::{lookup_scene, normalize_question, parse_question, tokenize, AnswerClass};
use crate::world::{QuestionType, Scene, SceneMap};

/// Percentage of games whose final guess is the target.
pub fn success_rate(games: &[GameRecord]) -> Result<f64> {
    if games.is_empty() {
        return Err(Error::EmptyInput("success rate of an empty log".into()));
    }
    let wins = games.iter().filter(|g| g.is_success()).count();
    Ok(100.0 * wins as f64 / games.len() as f64)
}

/// Percentage of games that ask some question twice, compared after
/// lowercasing, trimming and dropping question marks.
pub fn repeated_question_rate(games: &[GameRecord]) -> f64 {
    if games.is_empty() {
        return 0.0;
    }
    let flagged = games
        .iter()
        .filter(|g| {
            let mut seen = BTreeSet::new();
            g.turns
                .iter()
                .any(|t| !seen.insert(normalize_question(&t.question)))
        })
        .count();
    100.0 * flagged as f64 / games.len() as f64
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

/// Sentence BLEU with uniform weights over 1..=max_n, clipped counts and
/// the closest-reference brevity penalty (ties go to the shorter length).
/// Orders longer than the candidate are left out of the geometric mean.
/// No smoothing: a zero precision gives zero.
pub fn sentence_bleu(candidate: &[String], references: &[Vec<String>], max_n: usize) -> f64 {
    if candidate.is_empty() || references.is_empty() || max_n == 0 {
        return 0.0;
    }
    let orders = max_n.min(candidate.len());
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let cand = ngram_counts(candidate, n);
        let total: usize = cand.values().sum();
        let ref_counts: Vec<_> = references.iter().map(|r| ngram_counts(r, n)).collect();
        let clipped: usize = cand
            .iter()
            .map(|(g, &c)| {
                let max_ref = ref_counts
                    .iter()
                    .map(|r| r.get(g).copied().unwrap_or(0))
                    .max()
                    .unwrap_or(0);
                c.min(max_ref)
            })
            .sum();
        if clipped == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let c = candidate.len();
    let r = references
        .iter()
        .map(|x| x.len())
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("non-empty");
    let bp = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    bp * (log_sum / orders as f64).exp()
}

/// Self-BLEU for each n in 2..=max_n: every question scored against all the
/// others, then averaged. Fewer than two questions score 0.
pub fn self_bleu(questions: &[String], max_n: usize) -> Vec<(usize, f64)> {
    let toks: Vec<Vec<String>> = questions.iter().map(|q| tokenize(q)).collect();
    (2..=max_n)
        .map(|n| {
            if toks.len() < 2 {
                return (n, 0.0);
            }
            let total: f64 = (0..toks.len())
                .map(|i| {
                    let refs: Vec<Vec<String>> = toks
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, t)| t.clone())
                        .collect();
                    sentence_bleu(&toks[i], &refs, n)
                })
                .sum();
            (n, total / toks.len() as f64)
        })
        .collect()
}

/// Every question in the logs, in order.
pub fn all_questions(games: &[GameRecord]) -> Vec<String> {
    games
        .iter()
        .flat_map(|g| g.turns.iter().map(|t| t.question.clone()))
        .collect()
}

/// Share of each question type among all asked questions, in percent.
pub fn question_type_distribution(games: &[GameRecord]) -> BTreeMap<QuestionType, f64> {
    let mut counts: BTreeMap<QuestionType, usize> =
        QuestionType::ALL.iter().map(|&t| (t, 0)).collect();
    let mut total = 0;
    for t in games.iter().flat_map(|g| &g.turns) {
        *counts
            .get_mut(&parse_question(&t.question).question_type())
            .expect("all types present") += 1;
        total += 1;
    }
    counts
        .into_iter()
        .map(|(t, c)| {
            let pct = if total == 0 {
                0.0
            } else {
                100.0 * c as f64 / total as f64
            };
            (t, pct)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub ratio: f64,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ratio) {
            return Err(Error::InvalidSpec(format!(
                "corruption ratio {} outside [0, 1]",
                self.ratio
            )));
        }
        Ok(())
    }
}

/// Corrupts exactly `round(ratio * answers)` answers chosen without
/// replacement: Yes and No swap, NA becomes a coin flip between the two.
pub fn corrupt_answers(games: &[GameRecord], spec: &CorruptionSpec) -> Result<Vec<GameRecord>> {
    spec.validate()?;
    let positions: Vec<(usize, usize)> = games
        .iter()
        .enumerate()
        .flat_map(|(g, game)| (0..game.turns.len()).map(move |t| (g, t)))
        .collect();
    let k = (spec.ratio * positions.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut chosen: Vec<usize> = sample(&mut rng, positions.len(), k).into_vec();
    chosen.sort_unstable();
    let mut out = games.to_vec();
    for i in chosen {
        let (g, t) = positions[i];
        let a = &mut out[g].turns[t].answer;
        *a = match *a {
            AnswerClass::NA if rng.gen_bool(0.5) => AnswerClass::Yes,
            AnswerClass::NA => AnswerClass::No,
            other => other.opposite(),
        };
    }
    Ok(out)
}

/// Accuracy of one guesser replaying recorded dialogs, in percent.
pub fn replay_accuracy(
    guesser: &GuesserAgent,
    games: &[GameRecord],
    scenes: &SceneMap,
    seed: u64,
) -> Result<f64> {
    if games.is_empty() {
        return Err(Error::EmptyInput("no games to replay".into()));
    }
    let hits: Vec<bool> = games
        .par_iter()
        .map(|g| {
            let scene = lookup_scene(scenes, g.scene_id)?;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, g.game_id));
            Ok(guesser.replay(g, scene, &mut rng)?.guess == g.target_id)
        })
        .collect::<Result<_>>()?;
    Ok(100.0 * hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub guesser: String,
    pub ratio: f64,
    pub seed: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub guesser: String,
    pub ratio: f64,
    pub mean: f64,
    pub stdev: f64,
}

/// One row per (ratio, seed, guesser), ratios outermost.
pub fn corruption_sweep(
    guessers: &[(String, GuesserAgent)],
    games: &[GameRecord],
    scenes: &SceneMap,
    ratios: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    let cells: Vec<(f64, u64)> = ratios
        .iter()
        .flat_map(|&r| seeds.iter().map(move |&s| (r, s)))
        .collect();
    let rows: Vec<Vec<SweepRow>> = cells
        .par_iter()
        .map(|&(ratio, seed)| {
            let corrupted = corrupt_answers(games, &CorruptionSpec { ratio, seed })?;
            guessers
                .iter()
                .map(|(name, g)| {
                    Ok(SweepRow {
                        guesser: name.clone(),
                        ratio,
                        seed,
                        accuracy: replay_accuracy(g, &corrupted, scenes, seed)?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Mean and sample standard deviation over seeds, one point per
/// (ratio, guesser) in first-seen order.
pub fn sweep_curve(rows: &[SweepRow]) -> Vec<SweepPoint> {
    let mut order: Vec<(String, u64)> = Vec::new();
    let mut groups: HashMap<(String, u64), Vec<f64>> = HashMap::new();
    for r in rows {
        let key = (r.guesser.clone(), r.ratio.to_bits());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r.accuracy);
    }
    order
        .into_iter()
        .map(|key| {
            let v = &groups[&key];
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let stdev = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            SweepPoint {
                guesser: key.0,
                ratio: f64::from_bits(key.1),
                mean,
                stdev,
            }
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| Error::InvalidData(format!("csv: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidData(format!("csv: {e}"))
}

/// Joint correctness of two settings over the same games. `ab` counts games
/// where A succeeded and B failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix2 {
    pub aa: u64,
    pub ab: u64,
    pub ba: u64,
    pub bb: u64,
}

/// Rounds a percentage to one decimal.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

impl ConfusionMatrix2 {
    pub fn from_cells(aa: u64, ab: u64, ba: u64, bb: u64) -> Result<Self> {
        let m = ConfusionMatrix2 { aa, ab, ba, bb };
        if m.total() == 0 {
            return Err(Error::EmptyInput("confusion matrix without games".into()));
        }
        Ok(m)
    }

    pub fn total(&self) -> u64 {
        self.aa + self.ab + self.ba + self.bb
    }

    fn pct(&self, x: u64) -> f64 {
        100.0 * x as f64 / self.total() as f64
    }

    /// A correct, A wrong, in percent.
    pub fn row_marginals(&self) -> (f64, f64) {
        (self.pct(self.aa + self.ab), self.pct(self.ba + self.bb))
    }

    /// B correct, B wrong, in percent.
    pub fn column_marginals(&self) -> (f64, f64) {
        (self.pct(self.aa + self.ba), self.pct(self.ab + self.bb))
    }

    /// Cells plus marginals rounded to one decimal.
    pub fn to_json(&self) -> serde_json::Value {
        let (r0, r1) = self.row_marginals();
        let (c0, c1) = self.column_marginals();
        serde_json::json!({
            "cells": {"aa": self.aa, "ab": self.ab, "ba": self.ba, "bb": self.bb},
            "total": self.total(),
            "row_marginals": [round1(r0), round1(r1)],
            "column_marginals": [round1(c0), round1(c1)],
        })
    }
}

/// Joins two logs on game id. Both must cover the same games with the same
/// scenes and targets.
pub fn confusion_matrix(logs_a: &[GameRecord], logs_b: &[GameRecord]) -> Result<ConfusionMatrix2> {
    let index = |logs: &[GameRecord]| -> Result<BTreeMap<u64, (u64, usize, bool)>> {
        let mut m = BTreeMap::new();
        for g in logs {
            if m.insert(g.game_id, (g.scene_id, g.target_id, g.is_success()))
                .is_some()
            {
                return Err(Error::InvalidData(format!(
                    "duplicate game id {}",
                    g.game_id
                )));
            }
        }
        Ok(m)
    };
    let a = index(logs_a)?;
    let b = index(logs_b)?;
    let mut missing: Vec<String> = Vec::new();
    missing.extend(
        a.keys()
            .filter(|k| !b.contains_key(k))
            .map(|k| format!("{k} (not in B)")),
    );
    missing.extend(
        b.keys()
            .filter(|k| !a.contains_key(k))
            .map(|k| format!("{k} (not in A)")),
    );
    for (id, (sa, ta, _)) in &a {
        if let Some((sb, tb, _)) = b.get(id) {
            if (sa, ta) != (sb, tb) {
                missing.push(format!("{id} (scene or target differs)"));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Join { missing });
    }
    let mut cells = [0u64; 4];
    for (id, (_, _, wa)) in &a {
        let wb = b[id].2;
        cells[match (*wa, wb) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        }] += 1;
    }
    ConfusionMatrix2::from_cells(cells[0], cells[1], cells[2], cells[3])
}

/// Success rates with oracles on rows and guessers on columns. The first
/// entry of each axis is the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub oracles: Vec<String>,
    pub guessers: Vec<String>,
    pub success: Vec<Vec<f64>>,
}

impl AblationGrid {
    pub fn from_table(
        oracles: Vec<String>,
        guessers: Vec<String>,
        success: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if success.len() != oracles.len() || success.iter().any(|r| r.len() != guessers.len()) {
            return Err(Error::InvalidShape("grid does not match its labels".into()));
        }
        Ok(AblationGrid {
            oracles,
            guessers,
            success,
        })
    }

    /// Gain of upgrading both agents beyond the best single upgrade:
    /// `(both - base) - max(oracle only - base, guesser only - base)`.
    pub fn interaction_delta(&self) -> Result<f64> {
        if self.oracles.len() < 2 || self.guessers.len() < 2 {
            return Err(Error::InvalidShape("interaction needs a 2x2 grid".into()));
        }
        let s = &self.success;
        let base = s[0][0];
        Ok((s[1][1] - base) - (s[1][0] - base).max(s[0][1] - base))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["oracle", "guesser", "success_rate"])
            .map_err(csv_err)?;
        for (i, o) in self.oracles.iter().enumerate() {
            for (j, g) in self.guessers.iter().enumerate() {
                w.write_record([o.as_str(), g.as_str(), &self.success[i][j].to_string()])
                    .map_err(csv_err)?;
            }
        }
        w.flush()
            .map_err(|e| Error::InvalidData(format!("csv: {e}")))
    }

    /// Plain-text table for the terminal.
    pub fn render(&self) -> String {
        let width = self
            .oracles
            .iter()
            .map(|o| o.len())
            .max()
            .unwrap_or(0)
            .max(6);
        let mut out = format!("{:width$}", "oracle");
        for g in &self.guessers {
            out.push_str(&format!("  {g:>10}"));
        }
        out.push('\n');
        for (o, row) in self.oracles.iter().zip(&self.success) {
            out.push_str(&format!("{o:width$}"));
            for v in row {
                out.push_str(&format!("  {:>9.1}%", v));
            }
            out.push('\n');
        }
        out
    }
}

/// Self-play for every oracle and guesser pair, on the same scenes, targets
/// and seeds.
pub fn ablation_grid(
    oracles: &[(String, OracleAgent)],
    guessers: &[(String, GuesserAgent)],
    questioner: &QuestionerAgent,
    scenes: &[Scene],
    targets: &[usize],
    config: &GameConfig,
) -> Result<AblationGrid> {
    let mut success = Vec::with_capacity(oracles.len());
    for (_, o) in oracles {
        let mut row = Vec::with_capacity(guessers.len());
        for (_, g) in guessers {
            let agents = Agents::new(o.clone(), g.clone(), questioner.clone())?;
            row.push(success_rate(&self_play(&agents, scenes, targets, config)?)?);
        }
        success.push(row);
    }
    AblationGrid::from_table(
        oracles.iter().map(|o| o.0.clone()).collect(),
        guessers.iter().map(|g| g.0.clone()).collect(),
        success,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{GameStatus, Turn};
    use crate::engine::assign_targets;
    use crate::world::{generate_world, SceneSpec};
    use proptest::prelude::*;

    fn game(id: u64, questions: &[&str], success: bool) -> GameRecord {
        GameRecord {
            game_id: id,
            scene_id: id,
            target_id: 0,
            turns: questions
                .iter()
                .map(|q| Turn::new(*q, AnswerClass::Yes))
                .collect(),
            guess: Some(if success { 0 } else { 1 }),
            status: if success {
                GameStatus::Success
            } else {
                GameStatus::Failure
            },
            beliefs: None,
        }
    }

    fn answers_game(id: u64, answers: &[AnswerClass]) -> GameRecord {
        GameRecord {
            turns: answers
                .iter()
                .map(|&a| Turn::new("is it red?", a))
                .collect(),
            ..game(id, &[], true)
        }
    }

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn success_rate_examples() {
        let games: Vec<_> = (0..1000).map(|i| game(i, &["q"], i < 557)).collect();
        assert!((success_rate(&games).unwrap() - 55.7).abs() < 1e-9);
        assert_eq!(success_rate(&games[..557]).unwrap(), 100.0);
        assert!(matches!(success_rate(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn repeated_questions() {
        let a = game(0, &["is it red?", "is it blue?"], true);
        let b = game(1, &["is it red?", " Is it RED "], true);
        assert_eq!(repeated_question_rate(&[a.clone(), b]), 50.0);
        assert_eq!(repeated_question_rate(std::slice::from_ref(&a)), 0.0);
        let triple = game(2, &["is it a cat?"; 3], true);
        assert_eq!(repeated_question_rate(&[a, triple]), 50.0);
    }

    #[test]
    fn bleu_examples() {
        let q = s(&["is it red", "is it blue"]);
        let b = self_bleu(&q, 2);
        assert_eq!(b.len(), 1);
        assert!((b[0].1 - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(self_bleu(&s(&["is it red"; 4]), 4)
            .iter()
            .all(|&(_, v)| (v - 1.0).abs() < 1e-12));
        assert_eq!(self_bleu(&s(&["is it red"]), 3), vec![(2, 0.0), (3, 0.0)]);
    }

    #[test]
    fn brevity_penalty_uses_closest_shorter_reference() {
        let cand = tokenize("is it red");
        let refs = vec![tokenize("is it"), tokenize("is it red or not")];
        // Lengths 2 and 5 sit at distances 1 and 2 from 3: no penalty.
        assert!(sentence_bleu(&cand, &refs, 1) > 0.99);
        let cand = tokenize("is it");
        let refs = vec![tokenize("is it a"), tokenize("x y z w v")];
        let want = (1.0f64 - 3.0 / 2.0).exp();
        assert!((sentence_bleu(&cand, &refs, 1) - want).abs() < 1e-12);
    }

    #[test]
    fn type_distribution() {
        let g = game(0, &["is it a person?"; 3], true);
        let d = question_type_distribution(&[g]);
        assert_eq!(d[&QuestionType::Object], 100.0);
        let mixed = game(
            1,
            &["is it red?", "is it a cat?", "is it large?", "hello?"],
            true,
        );
        let d = question_type_distribution(&[mixed]);
        assert!((d.values().sum::<f64>() - 100.0).abs() < 1e-9);
        assert_eq!(d[&QuestionType::Other], 25.0);
    }

    #[test]
    fn corruption_identity_totality_and_count() {
        use AnswerClass::*;
        let games = vec![
            answers_game(0, &[Yes, No, NA, Yes]),
            answers_game(1, &[NA, No, No, Yes, Yes, NA]),
        ];
        let same = corrupt_answers(
            &games,
            &CorruptionSpec {
                ratio: 0.0,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(same, games);
        let all = corrupt_answers(
            &games,
            &CorruptionSpec {
                ratio: 1.0,
                seed: 1,
            },
        )
        .unwrap();
        for (g, h) in games.iter().zip(&all) {
            for (t, u) in g.turns.iter().zip(&h.turns) {
                assert_eq!(t.question, u.question);
                match t.answer {
                    NA => assert_ne!(u.answer, NA),
                    a => assert_eq!(u.answer, a.opposite()),
                }
            }
        }
        let part = corrupt_answers(
            &games,
            &CorruptionSpec {
                ratio: 0.3,
                seed: 4,
            },
        )
        .unwrap();
        let changed = games
            .iter()
            .zip(&part)
            .flat_map(|(g, h)| g.turns.iter().zip(&h.turns))
            .filter(|(t, u)| t != u)
            .count();
        assert_eq!(changed, 3);
        assert!(corrupt_answers(
            &games,
            &CorruptionSpec {
                ratio: 1.5,
                seed: 0
            }
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn corruption_changes_exactly_the_rounded_count(
            answers in prop::collection::vec(0usize..3, 1..40),
            ratio in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let a: Vec<AnswerClass> = answers.iter().map(|&i| AnswerClass::from_index(i).unwrap()).collect();
            let games = vec![answers_game(0, &a[..a.len() / 2]), answers_game(1, &a[a.len() / 2..])];
            let out = corrupt_answers(&games, &CorruptionSpec { ratio, seed }).unwrap();
            let changed = games
                .iter()
                .zip(&out)
                .flat_map(|(g, h)| g.turns.iter().zip(&h.turns))
                .filter(|(t, u)| t.answer != u.answer)
                .count();
            prop_assert_eq!(changed, (ratio * a.len() as f64).round() as usize);
        }

        #[test]
        fn self_bleu_bounded_and_monotone_under_duplicates(
            picks in prop::collection::vec(prop::collection::vec(0usize..5, 1..6), 2..6),
            dup in 0usize..6,
        ) {
            let words = ["is", "it", "red", "a", "cat"];
            let qs: Vec<String> = picks
                .iter()
                .map(|p| p.iter().map(|&i| words[i]).collect::<Vec<_>>().join(" "))
                .collect();
            let mut more = qs.clone();
            more.push(qs[dup % qs.len()].clone());
            for ((_, a), (_, b)) in self_bleu(&qs, 4).into_iter().zip(self_bleu(&more, 4)) {
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert!(b >= a - 1e-12);
            }
        }
    }

    #[test]
    fn confusion_fixtures() {
        let t2 = ConfusionMatrix2::from_cells(8391, 1194, 1167, 9243).unwrap();
        let (r0, r1) = t2.row_marginals();
        let (c0, c1) = t2.column_marginals();
        assert_eq!([round1(r0), round1(r1)], [47.9, 52.1]);
        assert_eq!([round1(c0), round1(c1)], [47.8, 52.2]);
        let t3 = ConfusionMatrix2::from_cells(7565, 1993, 3573, 6864).unwrap();
        assert_eq!(
            t3.to_json()["row_marginals"],
            serde_json::json!([47.8, 52.2])
        );
        assert_eq!(
            t3.to_json()["column_marginals"],
            serde_json::json!([55.7, 44.3])
        );
        assert!(ConfusionMatrix2::from_cells(0, 0, 0, 0).is_err());
    }

    #[test]
    fn confusion_join() {
        let a: Vec<_> = (0..10).map(|i| game(i, &["q"], i % 2 == 0)).collect();
        let m = confusion_matrix(&a, &a).unwrap();
        assert_eq!((m.ab, m.ba), (0, 0));
        assert_eq!((m.aa, m.bb), (5, 5));
        let b: Vec<_> = (0..10).map(|i| game(i, &["q"], i < 3)).collect();
        let m = confusion_matrix(&a, &b).unwrap();
        assert_eq!(
            m,
            ConfusionMatrix2 {
                aa: 2,
                ab: 3,
                ba: 1,
                bb: 4
            }
        );
        match confusion_matrix(&a, &b[..8]) {
            Err(Error::Join { missing }) => assert_eq!(missing.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn published_grid_interaction() {
        let g = AblationGrid::from_table(
            s(&["baseline oracle", "strong oracle"]),
            s(&["baseline guesser", "strong guesser"]),
            vec![vec![47.7, 47.8], vec![47.5, 55.7]],
        )
        .unwrap();
        assert!((g.interaction_delta().unwrap() - 7.9).abs() < 1e-9);
        let mut csv = Vec::new();
        g.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
    }

    #[test]
    fn grid_cells_with_equal_wiring_agree() {
        let scenes = generate_world(&SceneSpec::default(), 40, 3).unwrap();
        let targets = assign_targets(&scenes, 3);
        let noisy = OracleAgent::NoisyRule { epsilon: 0.3 };
        let grid = ablation_grid(
            &[("a".into(), noisy.clone()), ("b".into(), noisy)],
            &[
                ("u".into(), GuesserAgent::UniformRandom),
                ("p".into(), GuesserAgent::SpatialPrior),
            ],
            &QuestionerAgent::Scripted,
            &scenes,
            &targets,
            &GameConfig::default(),
        )
        .unwrap();
        assert_eq!(grid.success[0], grid.success[1]);
        assert_eq!(grid.success.len(), 2);
    }

    #[test]
    fn sweep_shape_and_identity_row() {
        let fx = crate::corpus::gold_fixture(60, 5, 2);
        let map = fx.scene_map();
        let guessers = vec![
            ("prior".to_string(), GuesserAgent::SpatialPrior),
            ("uniform".to_string(), GuesserAgent::UniformRandom),
        ];
        let ratios = [0.0, 0.5, 1.0];
        let rows = corruption_sweep(&guessers, &fx.games, &map, &ratios, &[7]).unwrap();
        assert_eq!(rows.len(), ratios.len() * guessers.len());
        assert_eq!(sweep_curve(&rows).len(), ratios.len() * guessers.len());
        let clean = replay_accuracy(&guessers[1].1, &fx.games, &map, 7).unwrap();
        assert_eq!(rows[1].accuracy, clean);
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("guesser,ratio,seed,accuracy\n"));
    }
}
