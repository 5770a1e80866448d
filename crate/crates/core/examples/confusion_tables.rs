//! Agreement between two systems' games as a 2x2 table, from raw counts
//! and from joined logs.

use gwlab::analysis::{confusion_matrix, round1, ConfusionMatrix2};
use gwlab::corpus::GoldCorpus;
use gwlab::engine::{
    assign_targets, self_play, Agents, GameConfig, GuesserAgent, OracleAgent, QuestionerAgent,
};
use gwlab::guesser::{train_guesser, GuesserConfig};
use gwlab::world::{generate_world, SceneSpec};

fn main() -> gwlab::Result<()> {
    let m = ConfusionMatrix2::from_cells(8391, 1194, 1167, 9243)?;
    let (r0, r1) = m.row_marginals();
    let (c0, c1) = m.column_marginals();
    println!(
        "published cells: rows {:.1}/{:.1}, columns {:.1}/{:.1}",
        round1(r0),
        round1(r1),
        round1(c0),
        round1(c1)
    );

    // An answer-blind guesser would score both logs the same.
    let corpus = GoldCorpus::generate(&SceneSpec::fixed(8), 500, 5, 4)?;
    let map = corpus.scene_map();
    let (train, valid) = corpus.games.split_at(420);
    let (model, _) = train_guesser(train, valid, &map, &corpus.vocab, &GuesserConfig::default())?;

    let scenes = generate_world(&SceneSpec::fixed(8), 500, 21)?;
    let targets = assign_targets(&scenes, 2);
    let cfg = GameConfig::default();
    let play = |oracle| -> gwlab::Result<_> {
        let agents = Agents::new(
            oracle,
            GuesserAgent::Trained(model.clone()),
            QuestionerAgent::Scripted,
        )?;
        self_play(&agents, &scenes, &targets, &cfg)
    };
    let clean = play(OracleAgent::Rule)?;
    let noisy = play(OracleAgent::NoisyRule { epsilon: 0.3 })?;
    let joined = confusion_matrix(&clean, &noisy)?;
    println!(
        "rule vs noisy:0.3\n{}",
        serde_json::to_string_pretty(&joined.to_json()).unwrap()
    );
    Ok(())
}
