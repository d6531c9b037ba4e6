//! Compare the hand-written backward pass with central finite differences.
//!
//! ```text
//! cargo run --release --example gradient_check          # small network
//! cargo run --release --example gradient_check -- full  # 198-256-64-16 network
//! ```

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use routegen::board::{HoldVector, NUM_HOLDS};
use routegen::data::synth_corpus;
use routegen::nn::finite_diff_check;
use routegen::vae::{standard_normal_matrix, Architecture, Batch, LossWeights, VaeModel, VaeNet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let arch = if std::env::args().nth(1).as_deref() == Some("full") {
        Architecture::default()
    } else {
        Architecture { input_dim: NUM_HOLDS, hidden: [32, 16], latent_dim: 4 }
    };
    let mut model = VaeModel::new(arch, 1);
    let vectors: Vec<HoldVector> = synth_corpus(1, 4).iter().map(|p| p.to_vector()).collect();
    let batch = Batch::new(&vectors);
    let noise = standard_normal_matrix(&mut ChaCha8Rng::seed_from_u64(1), vectors.len(), arch.latent_dim);
    let w = LossWeights::default();

    let mut grads = vec![0.0; arch.parameter_count()];
    let net = model.net();
    let pass = net.forward(&batch, &noise);
    net.backward(&pass, &batch, &w, 1.0 / vectors.len() as f64, &mut grads)?;

    let start = Instant::now();
    let check = finite_diff_check(
        |p| VaeNet::new(arch, p).expect("sized").mean_loss(&batch, &noise, &w).total,
        model.params_mut(),
        &grads,
        1e-5,
    )?;
    println!(
        "{} parameters checked in {:.1} s; max relative error {:.3e} (parameter {})",
        check.checked,
        start.elapsed().as_secs_f64(),
        check.max_relative_error,
        check.worst_index
    );
    Ok(())
}
