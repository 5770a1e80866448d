//! Follow a guesser's belief over the objects turn by turn, and show how
//! the accumulation weight alpha damps each update.

use gwlab::corpus::GoldCorpus;
use gwlab::guesser::{train_guesser, GuesserConfig};
use gwlab::training::TrainSchedule;
use gwlab::world::SceneSpec;

fn main() -> gwlab::Result<()> {
    let corpus = GoldCorpus::generate(&SceneSpec::fixed(5), 400, 5, 3)?;
    let map = corpus.scene_map();
    let (train, valid) = corpus.games.split_at(350);
    let game = &valid[0];
    let scene = &map[&game.scene_id];

    for alpha in [1.0, 0.5] {
        let cfg = GuesserConfig {
            alpha,
            schedule: TrainSchedule {
                epochs: 8,
                ..GuesserConfig::default().schedule
            },
            ..Default::default()
        };
        let (model, _) = train_guesser(train, valid, &map, &corpus.vocab, &cfg)?;
        let out = model.run_dialog(game, scene)?;
        println!(
            "alpha {alpha}: target {}, guess {}",
            game.target_id, out.guess
        );
        for (t, p) in out.beliefs.iter().enumerate() {
            let label = if t == 0 {
                "start".to_string()
            } else {
                format!(
                    "{} {}",
                    game.turns[t - 1].question,
                    game.turns[t - 1].answer
                )
            };
            let shown: Vec<String> = p.iter().map(|v| format!("{v:.2}")).collect();
            println!("  [{}]  {label}", shown.join(" "));
        }
    }
    Ok(())
}
