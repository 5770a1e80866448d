//! Gold corpora: scenes, one scripted dialog per scene, and the shared
//! vocabulary every checkpoint trained on them uses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{GameRecord, Vocabulary};
use crate::error::Result;
use crate::numkernel::mix_seed;
use crate::world::{generate_gold_dialog, generate_world, scene_map, Scene, SceneMap, SceneSpec};

/// Answer tokens appended to every vocabulary so the pre-concatenation
/// guesser can spell answers.
pub const ANSWER_TOKENS: [&str; 3] = ["yes", "no", "na"];

#[derive(Debug, Clone, PartialEq)]
pub struct GoldCorpus {
    pub scenes: Vec<Scene>,
    pub games: Vec<GameRecord>,
    pub vocab: Vocabulary,
}

impl GoldCorpus {
    /// `count` scenes with a uniformly drawn target each and a gold dialog
    /// of at most `max_turns` turns.
    pub fn generate(spec: &SceneSpec, count: usize, max_turns: usize, seed: u64) -> Result<Self> {
        let scenes = generate_world(spec, count, seed)?;
        let games = gold_games(&scenes, max_turns, seed)?;
        let vocab = build_vocab(&games);
        Ok(GoldCorpus {
            scenes,
            games,
            vocab,
        })
    }

    pub fn scene_map(&self) -> SceneMap {
        scene_map(&self.scenes)
    }

    /// Games whose gold dialog ends on the target.
    pub fn successful_games(&self) -> Vec<GameRecord> {
        self.games
            .iter()
            .filter(|g| g.is_success())
            .cloned()
            .collect()
    }
}

pub fn gold_games(scenes: &[Scene], max_turns: usize, seed: u64) -> Result<Vec<GameRecord>> {
    scenes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let game_seed = mix_seed(seed ^ 0x601D, i as u64);
            let target = ChaCha8Rng::seed_from_u64(game_seed).gen_range(0..s.len());
            generate_gold_dialog(s, target, game_seed, max_turns)
        })
        .collect()
}

/// Vocabulary over all question words (min frequency 1) plus the answer tokens.
pub fn build_vocab(games: &[GameRecord]) -> Vocabulary {
    Vocabulary::build_with(games, 1, &ANSWER_TOKENS)
}

#[cfg(test)]
pub(crate) fn gold_fixture(count: usize, max_turns: usize, seed: u64) -> GoldCorpus {
    GoldCorpus::generate(&SceneSpec::default(), count, max_turns, seed).expect("fixture")
}
