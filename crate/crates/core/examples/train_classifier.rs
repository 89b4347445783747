//! Generates a synthetic desk-scale dataset, trains the depth classifier and
//! reports held-out accuracy.
//!
//! `cargo run --release --example train_classifier -- [patches_per_label] [iters] [batch]`

use std::time::Instant;

use plenosep::depthnet::{evaluate, generate_training_set, net_train, LabelSet, NetArch, TrainConfig};
use plenosep::optics::CameraConfig;
use plenosep::textures::texture_corpus;

fn main() -> plenosep::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let per_label = args.first().copied().unwrap_or(400);
    let iters = args.get(1).copied().unwrap_or(1500);
    let batch = args.get(2).copied().unwrap_or(64);
    let test_per_label = args.get(3).copied().unwrap_or(100);

    let cfg = CameraConfig::desk();
    let labels = LabelSet::desk();
    let start = Instant::now();
    let train = generate_training_set(&texture_corpus(64, (48, 48), 1000), &cfg, &labels, 8, per_label, 1)?;
    let test = generate_training_set(&texture_corpus(16, (48, 48), 9000), &cfg, &labels, 8, test_per_label, 2)?;
    println!("{} training / {} held-out patches in {:.1?}", train.len(), test.len(), start.elapsed());

    let arch = NetArch::desk(train.channels, labels.len());
    let tc = TrainConfig { batch, max_iters: iters, step: iters * 2 / 3, ..Default::default() };
    let start = Instant::now();
    let out = net_train(&train, arch, &tc)?;
    println!("{iters} iterations of batch {batch} in {:.1?}", start.elapsed());

    let train_eval = evaluate(&out.params, &train)?;
    let test_eval = evaluate(&out.params, &test)?;
    println!("training accuracy {:.3}", train_eval.accuracy);
    println!(
        "held-out accuracy {:.3}, adjacent share of errors {:.3}",
        test_eval.accuracy,
        test_eval.adjacent_error_fraction(&labels)
    );
    for (k, row) in test_eval.confusion.rows().into_iter().enumerate() {
        let wrong: Vec<String> = row
            .iter()
            .enumerate()
            .filter(|&(p, &n)| p != k && n > 0)
            .map(|(p, n)| format!("{}x{}", n, labels.get(p)))
            .collect();
        println!("  {:<10} {:>4}/{}  {}", labels.get(k).to_string(), row[k], row.sum(), wrong.join(" "));
    }
    Ok(())
}
