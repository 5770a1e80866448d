//! Train both guesser variants on gold dialogs and compare test accuracy.
//! Run with `--release`.

use gwlab::corpus::GoldCorpus;
use gwlab::guesser::{eval_guesser, train_guesser, GuesserConfig, GuesserVariant};
use gwlab::world::SceneSpec;

fn main() -> gwlab::Result<()> {
    let corpus = GoldCorpus::generate(&SceneSpec::fixed(8), 800, 5, 2)?;
    let map = corpus.scene_map();
    let (train, rest) = corpus.games.split_at(600);
    let (valid, test) = rest.split_at(100);

    for variant in [GuesserVariant::PostFusion, GuesserVariant::PreConcatenation] {
        let cfg = GuesserConfig {
            variant,
            ..Default::default()
        };
        let (model, report) = train_guesser(train, valid, &map, &corpus.vocab, &cfg)?;
        println!(
            "{variant:?}: best epoch {}, test accuracy {:.3}",
            report.best_epoch,
            eval_guesser(&model, test, &map)?
        );
    }
    Ok(())
}
