//! Draw a problem from the bundled sample corpus as ASCII and SVG.
//!
//! ```text
//! cargo run --example render_svg -- 4 route.svg
//! ```

use std::path::Path;

use routegen::data::load_corpus;
use routegen::render::{render_ascii, render_svg, RenderStyle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let index: usize = args.next().map_or(Ok(0), |s| s.parse())?;
    let out = args.next().unwrap_or_else(|| "route.svg".into());

    let corpus = load_corpus(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample_corpus.jsonl"))?;
    let problem = corpus.problems.get(index).ok_or("index out of range")?;
    println!("{} ({})", problem.name(), problem.grade().unwrap_or("ungraded"));
    print!("{}", render_ascii(problem));
    std::fs::write(&out, render_svg(problem, &RenderStyle::default()))?;
    println!("wrote {out}");
    Ok(())
}
