//! Question diversity of a set of games: self-BLEU, repeats and the
//! question-type mix.

use gwlab::analysis::{
    all_questions, question_type_distribution, repeated_question_rate, self_bleu, success_rate,
};
use gwlab::corpus::GoldCorpus;
use gwlab::world::SceneSpec;

fn main() -> gwlab::Result<()> {
    let corpus = GoldCorpus::generate(&SceneSpec::default(), 200, 5, 12)?;
    let games = &corpus.games;
    println!("success {:.1}%", success_rate(games)?);
    println!("repeated questions {:.1}%", repeated_question_rate(games));
    let questions = all_questions(games);
    for (n, b) in self_bleu(&questions[..200.min(questions.len())], 4) {
        println!("self-BLEU-{n} {b:.3}");
    }
    for (ty, pct) in question_type_distribution(games) {
        println!("  {:<9} {pct:.1}%", ty.name());
    }
    Ok(())
}
