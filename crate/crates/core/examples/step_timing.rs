//! Times training steps for each ablation variant on freshly generated phantoms.
//!
//! Usage: `cargo run --release -p pathbone --example step_timing -- [compact|standard] [steps]`

use std::time::Instant;

use pathbone::synthdata::make_splits;
use pathbone::trainer::{train_step, TrainState, Variant};
use pathbone::{ArchConfig, TrainConfig};

fn main() -> pathbone::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let arch = ArchConfig::preset(args.get(1).map(String::as_str).unwrap_or("compact"))?;
    let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let data = make_splits(16, 1, 64, 0)?;
    let base = TrainConfig {
        arch,
        ..TrainConfig::default()
    };
    for v in Variant::ALL {
        let mut state = TrainState::new(v.apply(&base), 16, 16)?;
        let start = Instant::now();
        for i in 0..steps {
            let idx: Vec<usize> = (0..base.batch_size)
                .map(|k| (i * base.batch_size + k) % 16)
                .collect();
            let xs: Vec<_> = idx.iter().map(|&j| data.train_a[j].clone()).collect();
            let ys: Vec<_> = idx.iter().map(|&j| data.train_b[j].clone()).collect();
            train_step(&mut state, &xs, &ys)?;
        }
        println!(
            "{v:>13}: {:.1} ms/step",
            start.elapsed().as_secs_f64() * 1e3 / steps as f64
        );
    }
    Ok(())
}
