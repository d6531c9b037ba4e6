//! Position labels, hold vectors and role inference.
//!
//! ```text
//! cargo run --example board_encoding
//! ```

use routegen::board::{parse_position, vector_to_problem, HoldVector};
use routegen::render::render_ascii;
use routegen::{Hold, HoldRole, Problem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a1 = parse_position("A1")?;
    let k18 = parse_position("K18")?;
    println!("A1 -> index {}, K18 -> index {}", a1.index(), k18.index());
    println!("\"L3\" -> {}", parse_position("L3").unwrap_err());

    let route = Problem::new(
        "Ladder",
        Some("6A".into()),
        vec![
            Hold::new(parse_position("E2")?, HoldRole::Start),
            Hold::new(parse_position("F6")?, HoldRole::Mid),
            Hold::new(parse_position("E10")?, HoldRole::Mid),
            Hold::new(parse_position("F14")?, HoldRole::Mid),
            Hold::new(parse_position("E18")?, HoldRole::Finish),
        ],
    )?;
    let v = route.to_vector();
    println!("{} holds set at indices {:?}", v.count(), v.ones().collect::<Vec<_>>());

    // Going back from bits, roles come from rows: top row finishes, the
    // lowest holds below row 7 start.
    let back = vector_to_problem(&v, "Ladder (decoded)")?;
    for h in back.holds() {
        println!("  {} {:?}", h.pos, h.role);
    }
    print!("{}", render_ascii(&back));

    let high = vector_to_problem(&HoldVector::from_indices([8 * 11 + 2, 12 * 11 + 4, 17 * 11 + 5]), "high")?;
    println!("no start inferred when every hold is high: {:?}", high.holds().iter().map(|h| h.role).collect::<Vec<_>>());
    Ok(())
}
