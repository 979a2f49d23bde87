//! Paired K=3 vs K=0 runs on synthetic multi-event corpora.
//!
//! `cargo run --release -p tmvm-core --example ambiguity_sweep -- [epochs] [lr] [embed_dim] [batch]`

use std::time::Instant;

use tmvm_core::dataset::{synth_corpus, SynthConfig};
use tmvm_core::diagnostics::{assignment_purity, prototype_diversity};
use tmvm_core::eval::{evaluate, Directions};
use tmvm_core::losses::LossConfig;
use tmvm_core::prototypes::Variant;
use tmvm_core::trainer::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map_or(60, |s| s.parse().unwrap());
    let lr: f64 = args.get(2).map_or(1e-2, |s| s.parse().unwrap());
    let embed_dim: usize = args.get(3).map_or(32, |s| s.parse().unwrap());
    let batch: usize = args.get(4).map_or(16, |s| s.parse().unwrap());
    let start = Instant::now();
    for seed in 0..5u64 {
        let corpus = synth_corpus(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let base = TrainConfig {
            embed_dim,
            batch_size: batch,
            epochs,
            warmup_epochs: epochs / 10,
            peak_lr: lr,
            seed,
            ..TrainConfig::default()
        };
        let mut line = format!("seed {seed}:");
        for (name, cfg) in [
            ("k3a5", TrainConfig { k: 3, ..base.clone() }),
            (
                "k3a0",
                TrainConfig {
                    k: 3,
                    loss: LossConfig {
                        alpha: 0.0,
                        ..LossConfig::default()
                    },
                    ..base.clone()
                },
            ),
            (
                "k0",
                TrainConfig {
                    variant: Variant::Baseline,
                    ..base.clone()
                },
            ),
        ] {
            let out = train(&corpus, &cfg, None).unwrap();
            let r = evaluate(&corpus, &out.params, cfg.variant, Directions::TextToVideo).unwrap();
            line += &format!("  {name} R@1 {:5.1}", r.text_to_video.unwrap().r1);
            if cfg.k == 3 && cfg.variant == Variant::Mask {
                let p = assignment_purity(&corpus, &out.params, cfg.variant).unwrap();
                let d = prototype_diversity(&corpus, &out.params, cfg.variant).unwrap();
                line += &format!(
                    " pur {:.2}/{:.2} cos {:.3} std {:.3}",
                    p.purity,
                    p.pairwise_agreement,
                    d.mean_pairwise_cosine,
                    d.mean_token_mask_std.unwrap()
                );
            }
            let last = out.history.last().unwrap().loss;
            line += &format!(" L {:.3}", last.total);
        }
        println!("{line}");
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
}
