//! Train a guesser, then a questioner on top of its beliefs, and sample a
//! few questions for an unseen scene. Run with `--release`.

use gwlab::corpus::GoldCorpus;
use gwlab::encoder::object_features;
use gwlab::guesser::{train_guesser, BeliefState, GuesserConfig};
use gwlab::questioner::{train_questioner, QuestionerConfig};
use gwlab::world::{generate_scene, render_scene_text, SceneSpec};

fn main() -> gwlab::Result<()> {
    let corpus = GoldCorpus::generate(&SceneSpec::fixed(8), 800, 5, 5)?;
    let map = corpus.scene_map();
    let (train, valid) = corpus.games.split_at(700);

    let (guesser, _) = train_guesser(train, valid, &map, &corpus.vocab, &GuesserConfig::default())?;
    let (questioner, report) = train_questioner(
        train,
        valid,
        &map,
        &corpus.vocab,
        &guesser,
        &QuestionerConfig::default(),
    )?;
    println!(
        "best epoch {}, validation perplexity {:.2}",
        report.best_epoch,
        questioner.perplexity(valid, &map)?
    );

    let scene = generate_scene(&SceneSpec::fixed(8), 9_999)?;
    println!("{}", render_scene_text(&scene));
    let feats = object_features(&scene);
    let uniform = BeliefState::uniform(scene.len());
    println!("first question: {}", questioner.ask(&feats, &uniform)?.text);
    let mut peaked = vec![0.02; scene.len()];
    peaked[0] = 1.0 - 0.02 * (scene.len() - 1) as f64;
    let belief = BeliefState {
        probabilities: peaked,
        turn_index: 1,
    };
    println!(
        "when sure of object 0: {}",
        questioner.ask(&feats, &belief)?.text
    );
    Ok(())
}
