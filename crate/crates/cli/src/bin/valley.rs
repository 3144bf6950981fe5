//! Temporary diagnostic: iterations needed before a 16x16 model predicts
//! any foreground (evaluation stops erroring).

use evico::synthdata::{generate, DatasetSpec};
use evico::trainer::{train, TrainConfig};

fn main() {
    let spec = DatasetSpec {
        count: 10,
        height: 16,
        width: 16,
        blur_sigma: 0.4,
        noise_sigma: 0.25,
        labeled_fraction: 0.5,
        ..DatasetSpec::default()
    };
    let ds = generate(&spec).unwrap();
    for iters in [12usize, 25, 50, 100, 200, 400] {
        let cfg = TrainConfig {
            max_iterations: iters,
            batch_size: 4,
            labeled_per_batch: 2,
            iters_per_epoch: 2,
            eval_every: 0,
            ..TrainConfig::default()
        };
        match train(&cfg, &ds) {
            Ok((_, rec)) => {
                let m = rec.evals.last().unwrap();
                println!("iters {iters}: dice {:.2}", m.dice);
            }
            Err(e) => println!("iters {iters}: ERR {e}"),
        }
    }
}
