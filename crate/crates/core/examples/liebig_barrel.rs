//! Crossing a weak and a strong oracle with a weak and a strong guesser:
//! the better guesser helps more when the oracle is good too.

use gwlab::analysis::ablation_grid;
use gwlab::corpus::GoldCorpus;
use gwlab::engine::{assign_targets, GameConfig, GuesserAgent, OracleAgent, QuestionerAgent};
use gwlab::guesser::{train_guesser, GuesserConfig};
use gwlab::world::{generate_world, SceneSpec};

fn main() -> gwlab::Result<()> {
    let corpus = GoldCorpus::generate(&SceneSpec::fixed(8), 700, 5, 8)?;
    let map = corpus.scene_map();
    let (train, valid) = corpus.games.split_at(600);
    let (model, _) = train_guesser(train, valid, &map, &corpus.vocab, &GuesserConfig::default())?;

    let oracles = vec![
        (
            "noisy:0.3".to_string(),
            OracleAgent::NoisyRule { epsilon: 0.3 },
        ),
        ("rule".to_string(), OracleAgent::Rule),
    ];
    let guessers = vec![
        ("prior".to_string(), GuesserAgent::SpatialPrior),
        ("trained".to_string(), GuesserAgent::Trained(model)),
    ];
    let scenes = generate_world(&SceneSpec::fixed(8), 300, 77)?;
    let targets = assign_targets(&scenes, 0);
    let grid = ablation_grid(
        &oracles,
        &guessers,
        &QuestionerAgent::Scripted,
        &scenes,
        &targets,
        &GameConfig::default(),
    )?;
    println!("{}", grid.render());
    println!("interaction {:+.1} points", grid.interaction_delta()?);
    Ok(())
}
