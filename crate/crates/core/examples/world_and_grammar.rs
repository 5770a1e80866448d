//! Generate a scene, ask every template question about one object and
//! print the rule answers next to a gold teacher dialog.

use gwlab::world::{
    generate_gold_dialog, generate_scene, parse_question, render_scene_text, rule_answer, SceneSpec,
};

fn main() -> gwlab::Result<()> {
    let scene = generate_scene(&SceneSpec::fixed(6), 42)?;
    println!("{}", render_scene_text(&scene));

    let target = 2;
    for q in [
        "is it a cat?",
        "is it red?",
        "is it large?",
        "is it on the left?",
        "is it the dog on the right?",
        "does it fly?",
    ] {
        let sem = parse_question(q);
        println!(
            "{q:<30} {:<9} -> {}",
            sem.question_type().name(),
            rule_answer(&scene, target, &sem)?
        );
    }

    let game = generate_gold_dialog(&scene, target, 7, 5)?;
    println!("\ngold dialog for object {target}:");
    for t in &game.turns {
        println!("  {} {}", t.question, t.answer);
    }
    Ok(())
}
