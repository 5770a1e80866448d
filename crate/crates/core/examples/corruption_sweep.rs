//! Flip a growing share of recorded answers and watch a trained guesser
//! lose accuracy while the answer-blind prior stays flat. Run with
//! `--release`.

use gwlab::analysis::{corruption_sweep, sweep_curve, write_sweep_csv};
use gwlab::corpus::GoldCorpus;
use gwlab::engine::GuesserAgent;
use gwlab::guesser::{train_guesser, GuesserConfig};
use gwlab::world::SceneSpec;

fn main() -> gwlab::Result<()> {
    let corpus = GoldCorpus::generate(&SceneSpec::fixed(8), 900, 5, 6)?;
    let map = corpus.scene_map();
    let (train, rest) = corpus.games.split_at(600);
    let (valid, test) = rest.split_at(100);
    let (model, _) = train_guesser(train, valid, &map, &corpus.vocab, &GuesserConfig::default())?;

    let guessers = vec![
        ("trained".to_string(), GuesserAgent::Trained(model)),
        ("prior".to_string(), GuesserAgent::SpatialPrior),
    ];
    let ratios = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let rows = corruption_sweep(&guessers, test, &map, &ratios, &[0, 1, 2])?;
    for p in sweep_curve(&rows) {
        println!(
            "{:<8} ratio {:.1}  {:>5.1} ± {:.1}",
            p.guesser, p.ratio, p.mean, p.stdev
        );
    }
    write_sweep_csv(&rows, std::io::stdout())?;
    Ok(())
}
