//! Sample 50 candidates, filter them through the route rules and show the
//! valid ones. Pass a checkpoint to use it; otherwise a small model is
//! trained on a synthetic corpus first.
//!
//! ```text
//! cargo run --release --example generate_routes -- [model.ckpt]
//! ```

use routegen::checkpoint;
use routegen::data::synth_corpus;
use routegen::generation::{generate_batch, summarize, GenConfig};
use routegen::render::render_ascii;
use routegen::vae::{train, Architecture, TrainConfig, VaeModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = synth_corpus(21, 300);
    let model = match std::env::args().nth(1) {
        Some(path) => checkpoint::load(path)?.0,
        None => {
            let mut model = VaeModel::new(Architecture::default(), 21);
            let mut cfg = TrainConfig { epochs: 100, batch_size: 8, seed: 21, ..Default::default() };
            cfg.adam.learning_rate = 2e-3;
            train(&mut model, &corpus, &cfg)?;
            model
        }
    };

    let candidates = generate_batch(&model, Some(&corpus), &GenConfig { count: 50, seed: 1, ..Default::default() })?;
    let reports: Vec<_> = candidates.iter().map(|c| &c.report).collect();
    println!("{}", serde_json::to_string_pretty(&summarize(&reports))?);

    for c in candidates.iter().filter(|c| c.report.valid).take(3) {
        println!("\n{} ({} holds, expected {:.1})", c.problem.name(), c.problem.len(), c.expected_count);
        print!("{}", render_ascii(&c.problem));
    }
    for c in candidates.iter().filter(|c| !c.report.valid).take(3) {
        println!("{} rejected: {}", c.problem.name(), c.report.failures().join(", "));
    }
    Ok(())
}
