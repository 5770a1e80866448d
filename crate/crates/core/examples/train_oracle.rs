//! Train the answering agent on gold dialogs and report accuracy by
//! question type. Run with `--release`.

use gwlab::corpus::GoldCorpus;
use gwlab::oracle::{eval_oracle, train_oracle, OracleConfig};
use gwlab::world::SceneSpec;

fn main() -> gwlab::Result<()> {
    let corpus = GoldCorpus::generate(&SceneSpec::fixed(8), 800, 5, 1)?;
    let map = corpus.scene_map();
    let (train, rest) = corpus.games.split_at(600);
    let (valid, test) = rest.split_at(100);

    let (model, report) =
        train_oracle(train, valid, &map, &corpus.vocab, &OracleConfig::default())?;
    for e in &report.epochs {
        let acc = e.valid.and_then(|v| v.accuracy).unwrap_or(f64::NAN);
        println!(
            "epoch {:>2}  loss {:.3}  valid {:.3}",
            e.epoch, e.train_loss, acc
        );
    }
    let r = eval_oracle(&model, test, &map)?;
    println!("test accuracy {:.3} over {} questions", r.overall, r.count);
    for (ty, a) in &r.by_type {
        if let Some(acc) = a.accuracy {
            println!("  {ty:<9} {acc:.3} ({})", a.count);
        }
    }
    Ok(())
}
