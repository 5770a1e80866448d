//! Play games between scripted and baseline agents on fresh scenes.

use gwlab::analysis::{question_type_distribution, repeated_question_rate};
use gwlab::engine::{
    assign_targets, self_play, success_percent, Agents, GameConfig, GuesserAgent, OracleAgent,
    QuestionerAgent,
};
use gwlab::world::{generate_world, SceneSpec};

fn main() -> gwlab::Result<()> {
    let scenes = generate_world(&SceneSpec::fixed(8), 400, 11)?;
    let targets = assign_targets(&scenes, 1);
    let cfg = GameConfig::default();

    for (oracle, guesser) in [
        (OracleAgent::Rule, GuesserAgent::SpatialPrior),
        (OracleAgent::Rule, GuesserAgent::UniformRandom),
        (
            OracleAgent::NoisyRule { epsilon: 0.2 },
            GuesserAgent::SpatialPrior,
        ),
    ] {
        let agents = Agents::new(oracle, guesser, QuestionerAgent::Scripted)?;
        let games = self_play(&agents, &scenes, &targets, &cfg)?;
        println!(
            "{:<28} success {:>5.1}%  repeats {:.1}%",
            format!("{} / {}", agents.oracle.label(), agents.guesser.label()),
            success_percent(&games),
            repeated_question_rate(&games)
        );
    }

    let agents = Agents::new(
        OracleAgent::Rule,
        GuesserAgent::SpatialPrior,
        QuestionerAgent::Scripted,
    )?;
    let games = self_play(&agents, &scenes, &targets, &cfg)?;
    for (ty, pct) in question_type_distribution(&games) {
        println!("  {:<9} {pct:.1}%", ty.name());
    }
    Ok(())
}
