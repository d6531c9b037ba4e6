//! Write a synthetic corpus, read it back and split it into train and test sets.
//!
//! ```text
//! cargo run --example synth_and_split -- 500 0.1
//! ```

use routegen::data::{load_corpus, save_corpus, split_corpus, synth_corpus, SplitSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(Ok(500), |s| s.parse())?;
    let fraction: f64 = args.next().map_or(Ok(0.1), |s| s.parse())?;

    let corpus = synth_corpus(7, n);
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("synth.jsonl");
    save_corpus(&corpus, &path)?;
    let loaded = load_corpus(&path)?;
    assert_eq!(loaded.problems, corpus.problems);
    println!("{} problems, {:.2} holds on average, written to and read from {}", loaded.len(), loaded.mean_hold_count(), path.display());

    let (train, test) = split_corpus(&loaded, SplitSpec::new(fraction, 7)?)?;
    println!("split at {fraction}: {} train / {} test", train.len(), test.len());
    println!("first test problem: {}", serde_json::to_string(&test.problems[0])?);
    Ok(())
}
