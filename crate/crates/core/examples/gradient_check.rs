//! Compare analytic and finite-difference gradients for all three agents.

use gwlab::corpus::GoldCorpus;
use gwlab::guesser::{GuesserConfig, GuesserModel};
use gwlab::numkernel::{grad_check, DEFAULT_STEP};
use gwlab::oracle::{OracleConfig, OracleModel};
use gwlab::questioner::{QuestionerConfig, QuestionerModel};
use gwlab::world::{AnswerClass, SceneSpec};

fn main() -> gwlab::Result<()> {
    let fx = GoldCorpus::generate(&SceneSpec::default(), 30, 5, 4)?;
    let game = &fx.games[0];
    let scene = &fx.scenes[game.scene_id as usize];

    let oracle = OracleModel::with_init_bound(
        OracleConfig {
            hidden_size: 4,
            category_embed_size: 3,
            mlp_hidden: 5,
            ..Default::default()
        },
        fx.vocab.clone(),
        0,
        1.0,
    )?;
    let ex = oracle.example(
        scene,
        game.target_id,
        &game.turns[0].question,
        AnswerClass::Yes,
    )?;
    let r = grad_check(
        |p| oracle.loss_and_grad(p, &ex),
        &oracle.params,
        DEFAULT_STEP,
    )?;
    println!(
        "oracle      {:.2e} over {} coordinates",
        r.max_rel_error, r.coordinates
    );

    let small = GuesserConfig {
        hidden_size: 4,
        answer_embed_size: 3,
        head_hidden: 5,
        ..Default::default()
    };
    let guesser = GuesserModel::with_init_bound(small.clone(), fx.vocab.clone(), 0, 1.0)?;
    let ex = guesser.example(game, scene)?;
    let r = grad_check(
        |p| guesser.loss_and_grad(p, &ex),
        &guesser.params,
        DEFAULT_STEP,
    )?;
    println!(
        "guesser     {:.2e} over {} coordinates",
        r.max_rel_error, r.coordinates
    );

    let mut one = game.clone();
    one.turns.truncate(1);
    let questioner = QuestionerModel::with_init_bound(
        QuestionerConfig {
            hidden_size: 4,
            word_embed_size: 3,
            ..Default::default()
        },
        guesser,
        0,
        1.0,
    )?;
    let ex = questioner.example(&one, scene)?;
    let r = grad_check(
        |p| questioner.loss_and_grad(p, &ex),
        &questioner.params,
        DEFAULT_STEP,
    )?;
    println!(
        "questioner  {:.2e} over {} coordinates (worst in {})",
        r.max_rel_error, r.coordinates, r.worst_param
    );
    Ok(())
}
