//! Walk the latent space between two training problems.
//!
//! ```text
//! cargo run --release --example latent_interpolation -- 6
//! ```

use routegen::data::synth_corpus;
use routegen::generation::{decode_candidate, KMode, RuleSet};
use routegen::vae::{train, Architecture, TrainConfig, VaeModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps: usize = std::env::args().nth(1).map_or(Ok(6), |s| s.parse())?;
    let steps = steps.max(2);
    let corpus = synth_corpus(5, 32);
    let mut model = VaeModel::new(Architecture::default(), 5);
    let mut cfg = TrainConfig { epochs: 300, batch_size: 4, seed: 5, ..Default::default() };
    cfg.adam.learning_rate = 3e-3;
    train(&mut model, &corpus, &cfg)?;

    let (from, to) = (&corpus.problems[0], &corpus.problems[1]);
    let (a, _) = model.encode(&from.to_vector());
    let (b, _) = model.encode(&to.to_vector());
    let labels = |p: &routegen::Problem| p.holds().iter().map(|h| h.pos.to_string()).collect::<Vec<_>>().join(" ");
    println!("from {}: {}", from.name(), labels(from));
    println!("to   {}: {}", to.name(), labels(to));

    let rules = RuleSet::default();
    for i in 0..steps {
        let t = i as f64 / (steps - 1) as f64;
        let c = decode_candidate(&model, a.lerp(&b, t), format!("t={t:.2}"), KMode::ExpectedCount, &rules, Some(&corpus))?;
        let verdict = if c.report.valid { "valid".to_owned() } else { c.report.failures().join(",") };
        println!("t={t:.2}  {:<50} {verdict}", labels(&c.problem));
    }
    Ok(())
}
