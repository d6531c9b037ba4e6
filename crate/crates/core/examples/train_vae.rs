//! Train on a synthetic corpus and save a checkpoint with its loss log.
//!
//! ```text
//! cargo run --release --example train_vae -- 200 model.ckpt
//! ```

use std::fs::File;
use std::path::PathBuf;

use routegen::checkpoint::{self, TrainingMeta};
use routegen::data::{split_corpus, synth_corpus, SplitSpec};
use routegen::vae::{train_with, write_loss_csv, Architecture, TrainConfig, VaeModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(Ok(200), |s| s.parse())?;
    let out = PathBuf::from(args.next().unwrap_or_else(|| "model.ckpt".into()));

    let corpus = synth_corpus(11, 400);
    let (train, test) = split_corpus(&corpus, SplitSpec::new(0.1, 11)?)?;
    let mut model = VaeModel::new(Architecture::default(), 11);
    let cfg = TrainConfig { epochs, batch_size: 32, seed: 11, ..Default::default() };
    let report = train_with(&mut model, &train, &cfg, |epoch, loss| {
        if epoch % 20 == 0 || epoch == 1 {
            println!(
                "epoch {epoch:>4}  total {:>8.3}  binary {:>8.3}  count {:>7.3}  kl {:>6.3}",
                loss.total, loss.binary, loss.count, loss.kl
            );
        }
    })?;

    let test_vectors: Vec<_> = test.iter().map(|p| p.to_vector()).collect();
    let test_loss = model.evaluate(&test_vectors, &cfg.weights, 11);
    println!("held-out loss {:.3} on {} problems", test_loss.total, test.len());

    let meta = TrainingMeta {
        train_config: Some(cfg),
        corpus_source: Some(train.source.clone()),
        final_train_loss: report.history.last().copied(),
        test_loss: Some(test_loss),
    };
    let sidecar = checkpoint::save(&model, &out, &meta)?;
    let log = out.with_extension("loss.csv");
    write_loss_csv(&report.history, File::create(&log)?)?;
    println!("wrote {} (sha256 {}) and {}", out.display(), sidecar.checkpoint_sha256, log.display());
    Ok(())
}
