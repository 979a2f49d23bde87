//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion outside `KNOWN_RED` fails.

use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use tmvm::artifacts::{read_checkpoint, write_checkpoint};
use tmvm::corpus_io::{load_corpus, save_corpus};
use tmvm_core::dataset::{synth_corpus, Corpus, SynthConfig};
use tmvm_core::diagnostics::{assignment_purity, prototype_diversity};
use tmvm_core::eval::{evaluate, median_rank, report_from_scores, sum_r, Directions};
use tmvm_core::losses::{contrastive_loss, variance_loss, LossConfig};
use tmvm_core::matching::{base_similarity, tmvm_similarity};
use tmvm_core::numerics::{l2_normalize, LrSchedule, RngStream};
use tmvm_core::prototypes::{embed_text, encode_video, HeadParameters, Variant};
use tmvm_core::trainer::{objective_gradcheck, train, GradCheckShapes, TrainConfig, Trainer};
use tmvm_core::Matrix;

/// Criteria that fail in this implementation, each with a ledger entry.
const KNOWN_RED: &[u32] = &[7];

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn random_matrix(rng: &mut RngStream, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

fn gradient_fidelity() -> Verdict {
    let shapes = GradCheckShapes {
        batch: 4,
        tokens: 9,
        token_dim: 8,
        k: 2,
        embed_dim: 6,
        ..GradCheckShapes::default()
    };
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let c = objective_gradcheck(seed, shapes, Variant::Mask, &LossConfig::default()).unwrap();
        worst = worst.max(c.report.max_rel_err);
    }
    let elapsed = start.elapsed();
    verdict(
        worst < 1e-5 && elapsed < Duration::from_secs(30),
        format!("max rel err {worst:.2e} over 20 seeds in {:.2}s", elapsed.as_secs_f64()),
    )
}

fn loss_identities() -> Verdict {
    let mut worst = 0.0f64;
    for l in [2usize, 4, 16] {
        let v = contrastive_loss(&Matrix::filled(l, l, 0.37), 0.05).unwrap().value;
        worst = worst.max((v - 2.0 * (l as f64).ln()).abs());
    }
    let single = contrastive_loss(&Matrix::filled(1, 1, 0.8), 0.05).unwrap().value.abs();
    let masks: Vec<Matrix> = (0..4).map(|_| Matrix::filled(9, 3, 0.42)).collect();
    let refs: Vec<&Matrix> = masks.iter().collect();
    let var = variance_loss(&refs, &LossConfig::default()).unwrap().value;
    verdict(
        worst <= 1e-9 && single <= 1e-12 && (var - 0.74).abs() <= 1e-9,
        format!("|InfoNCE - 2 ln L| <= {worst:.1e}, L=1 gives {single:.1e}, constant masks give {var}"),
    )
}

/// Rank by full descending sort; tied scores share the best position.
fn oracle_rank(scores: &[f64], positives: &[usize]) -> usize {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let best = positives.iter().map(|&p| scores[p]).fold(f64::NEG_INFINITY, f64::max);
    1 + order.iter().position(|&i| scores[i] == best).unwrap()
}

fn oracle_metrics(ranks: &[usize]) -> [f64; 4] {
    let n = ranks.len() as f64;
    let at = |k: usize| 100.0 * ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    let mut s = ranks.to_vec();
    s.sort();
    let m = s.len();
    let med = if m % 2 == 1 {
        s[m / 2] as f64
    } else {
        (s[m / 2 - 1] + s[m / 2]) as f64 / 2.0
    };
    [at(1), at(5), at(10), med]
}

fn metric_oracle() -> Verdict {
    let mut rng = RngStream::new(2024);
    let mut mismatches = 0;
    let mut multi = 0;
    for case in 0..200 {
        let videos = 1 + rng.below(50);
        let texts = videos + rng.below(51 - videos);
        // Every video gets one text, the rest land anywhere.
        let mut gt: Vec<usize> = (0..videos).collect();
        gt.extend((videos..texts).map(|_| rng.below(videos)));
        rng.shuffle(&mut gt);
        let mut scores = random_matrix(&mut rng, texts, videos);
        if case % 3 == 0 {
            scores = scores.map(|x| (x * 2.0).round() / 2.0);
        }
        let report = report_from_scores(&scores, &gt, Directions::Both).unwrap();
        let t2v: Vec<usize> = (0..texts).map(|t| oracle_rank(scores.row(t), &[gt[t]])).collect();
        let v2t: Vec<usize> = (0..videos)
            .map(|v| {
                let column: Vec<f64> = (0..texts).map(|t| scores[(t, v)]).collect();
                let positives: Vec<usize> = (0..texts).filter(|&t| gt[t] == v).collect();
                if positives.len() > 1 {
                    multi += 1;
                }
                oracle_rank(&column, &positives)
            })
            .collect();
        for (got, ranks) in [
            (report.text_to_video.unwrap(), t2v),
            (report.video_to_text.unwrap(), v2t),
        ] {
            if [got.r1, got.r5, got.r10, got.med_r] != oracle_metrics(&ranks) {
                mismatches += 1;
            }
        }
    }
    let mid = median_rank(&[2, 3]).unwrap();
    verdict(
        mismatches == 0 && mid == 2.5,
        format!("{mismatches} mismatches over 200 matrices ({multi} multi-positive queries); MedR [2,3] = {mid}"),
    )
}

fn sum_r_arithmetic() -> Verdict {
    let six = sum_r(&[36.2, 64.2, 75.7, 34.8, 63.8, 73.7]);
    let three = sum_r(&[36.2, 64.2, 75.7]);
    verdict(
        six == 348.4 && three == 176.1,
        format!("six recalls sum to {six}, three to {three}"),
    )
}

fn max_matching_structure() -> Verdict {
    let mut rng = RngStream::new(77);
    let mut monotone_violations = 0;
    for _ in 0..1000 {
        let d = 1 + rng.below(8);
        let k = 1 + rng.below(6);
        let extra = 1 + rng.below(6);
        let text: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let base = random_matrix(&mut rng, k, d);
        let more = random_matrix(&mut rng, extra, d);
        let mut rows: Vec<&[f64]> = base.row_iter().collect();
        rows.extend(more.row_iter());
        rng.shuffle(&mut rows);
        let superset = Matrix::from_rows(&rows).unwrap();
        if tmvm_similarity(&text, &superset).unwrap().0 < tmvm_similarity(&text, &base).unwrap().0 {
            monotone_violations += 1;
        }
    }

    let mut reduction_violations = 0;
    let mut dominance_violations = 0;
    for seed in 0..200 {
        let mut rng = RngStream::new(seed);
        let (b, d, dt, de) = (1 + rng.below(8), 1 + rng.below(6), 1 + rng.below(6), 1 + rng.below(6));
        let z = random_matrix(&mut rng, b, d);
        let feats: Vec<f64> = (0..dt).map(|_| rng.normal()).collect();

        let p0 = HeadParameters::init(d, dt, de, 0, &mut rng);
        let t0 = embed_text(&feats, &p0).unwrap();
        let video = encode_video(&z, &p0, Variant::Mask).unwrap();
        let direct = {
            let projected = Matrix::from_rows(&[z.row(0)])
                .unwrap()
                .matmul(&p0.vproj_w.value)
                .unwrap();
            l2_normalize(projected.row(0), tmvm_core::numerics::NORM_GUARD)
        };
        let (s, w) = tmvm_similarity(&t0, video.embedded()).unwrap();
        if video.embedded().rows() != 1 || w != 0 || s != base_similarity(&t0, &direct).unwrap() {
            reduction_violations += 1;
        }

        let k = 1 + rng.below(4);
        let pk = HeadParameters::init(d, dt, de, k, &mut rng);
        let tk = embed_text(&feats, &pk).unwrap();
        let full = encode_video(&z, &pk, Variant::Mask).unwrap();
        let class_only = encode_video(&z, &pk, Variant::Baseline).unwrap();
        let cls_score = base_similarity(&tk, class_only.embedded().row(0)).unwrap();
        if tmvm_similarity(&tk, full.embedded()).unwrap().0 < cls_score {
            dominance_violations += 1;
        }
    }
    verdict(
        monotone_violations + reduction_violations + dominance_violations == 0,
        format!(
            "superset violations {monotone_violations}/1000, K=0 mismatches {reduction_violations}/200, \
             below class-token score {dominance_violations}/200"
        ),
    )
}

/// Desk-scale budget shared by every arm of the synthetic experiment.
fn experiment_config(seed: u64) -> TrainConfig {
    TrainConfig {
        k: 3,
        embed_dim: 32,
        batch_size: 16,
        epochs: 50,
        warmup_epochs: 5,
        peak_lr: 1e-2,
        seed,
        ..TrainConfig::default()
    }
}

struct Arms {
    r1_mask: f64,
    r1_base: f64,
    purity: f64,
    std: (f64, f64),
    cosine: (f64, f64),
}

fn run_arms(seed: u64) -> Arms {
    let corpus = synth_corpus(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let with_var = experiment_config(seed);
    let no_var = TrainConfig {
        loss: LossConfig {
            alpha: 0.0,
            ..LossConfig::default()
        },
        ..with_var.clone()
    };
    let baseline = TrainConfig {
        variant: Variant::Baseline,
        ..with_var.clone()
    };
    let fit = |cfg: &TrainConfig| train(&corpus, cfg, None).unwrap().params;
    let r1 = |p: &HeadParameters, v: Variant| {
        evaluate(&corpus, p, v, Directions::TextToVideo)
            .unwrap()
            .text_to_video
            .unwrap()
            .r1
    };
    let a = fit(&with_var);
    let b = fit(&no_var);
    let c = fit(&baseline);
    let da = prototype_diversity(&corpus, &a, Variant::Mask).unwrap();
    let db = prototype_diversity(&corpus, &b, Variant::Mask).unwrap();
    Arms {
        r1_mask: r1(&a, Variant::Mask),
        r1_base: r1(&c, Variant::Baseline),
        purity: assignment_purity(&corpus, &a, Variant::Mask).unwrap().purity,
        std: (da.mean_token_mask_std.unwrap(), db.mean_token_mask_std.unwrap()),
        cosine: (da.mean_pairwise_cosine, db.mean_pairwise_cosine),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn ambiguity_experiment(arms: &[Arms], elapsed: Duration) -> Verdict {
    let gains: Vec<f64> = arms.iter().map(|a| a.r1_mask - a.r1_base).collect();
    let purities: Vec<f64> = arms.iter().map(|a| a.purity).collect();
    let gain = median(gains.clone());
    let min_purity = purities.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(
        gain >= 10.0 && min_purity >= 0.7 && elapsed < Duration::from_secs(300),
        format!(
            "median R@1 gain {gain:.1} points (per seed {}), purity >= {min_purity:.3}, {:.1}s",
            gains.iter().map(|g| format!("{g:.1}")).collect::<Vec<_>>().join(" "),
            elapsed.as_secs_f64()
        ),
    )
}

fn variance_effect(arms: &[Arms]) -> Verdict {
    let std_wins = arms.iter().filter(|a| a.std.0 > a.std.1).count();
    let cos_wins = arms.iter().filter(|a| a.cosine.0 < a.cosine.1).count();
    let both = arms
        .iter()
        .filter(|a| a.std.0 > a.std.1 && a.cosine.0 < a.cosine.1)
        .count();
    verdict(
        both >= 4,
        format!(
            "seeds with both effects {both}/5 (higher mask std {std_wins}/5, lower prototype cosine {cos_wins}/5); cosine a5 vs a0: {}",
            arms.iter()
                .map(|a| format!("{:.3}/{:.3}", a.cosine.0, a.cosine.1))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    )
}

fn schedule_anchors() -> Verdict {
    let s = LrSchedule {
        warmup_epochs: 5,
        peak_lr: 3e-5,
        total_epochs: 50,
        steps_per_epoch: 10,
    };
    let at = |e: f64| s.lr_at(e).unwrap();
    let got = [at(0.0), at(5.0), at(27.5), at(50.0)];
    verdict(
        got == [0.0, 3e-5, 1.5e-5, 0.0],
        format!("lr at epochs 0, 5, 27.5, 50 = {got:?}"),
    )
}

fn small_corpus() -> Corpus {
    synth_corpus(&SynthConfig {
        num_videos: 16,
        seed: 9,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn persistence() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus();
    let cfg = TrainConfig {
        embed_dim: 16,
        batch_size: 4,
        epochs: 6,
        warmup_epochs: 1,
        peak_lr: 1e-2,
        ..TrainConfig::default()
    };
    let mut full = Trainer::new(cfg.clone(), &corpus).unwrap();
    let mut half = Trainer::new(cfg, &corpus).unwrap();
    while !full.is_finished() {
        full.run_epoch(&corpus).unwrap();
    }
    for _ in 0..3 {
        half.run_epoch(&corpus).unwrap();
    }
    let path = dir.path().join("mid.ckpt");
    write_checkpoint(&path, &half.checkpoint()).unwrap();
    let mut resumed = Trainer::resume(read_checkpoint(&path).unwrap(), &corpus).unwrap();
    while !resumed.is_finished() {
        resumed.run_epoch(&corpus).unwrap();
    }
    let resume_ok = resumed.checkpoint() == full.checkpoint();

    let manifest = dir.path().join("corpus/manifest.jsonl");
    let big = synth_corpus(&SynthConfig::default()).unwrap();
    save_corpus(&big, &manifest).unwrap();
    let round_trip_ok = load_corpus(&manifest).unwrap() == big.to_storage_precision();
    verdict(
        resume_ok && round_trip_ok,
        format!("resume identical: {resume_ok}; corpus round trip identical: {round_trip_ok}"),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Verdict)> = vec![
        (1, "gradient fidelity", gradient_fidelity()),
        (2, "loss identities", loss_identities()),
        (3, "metric oracle", metric_oracle()),
        (4, "SumR arithmetic", sum_r_arithmetic()),
        (5, "max-matching structure", max_matching_structure()),
    ];
    let exp_start = Instant::now();
    let arms: Vec<Arms> = thread::scope(|s| {
        let handles: Vec<_> = SEEDS.iter().map(|&seed| s.spawn(move || run_arms(seed))).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let exp_elapsed = exp_start.elapsed();
    results.push((
        6,
        "synthetic ambiguity experiment",
        ambiguity_experiment(&arms, exp_elapsed),
    ));
    results.push((7, "variance-loss effect", variance_effect(&arms)));
    results.push((8, "schedule anchors", schedule_anchors()));
    results.push((9, "determinism and persistence", persistence()));

    let mut unexpected = Vec::new();
    for (id, name, v) in &results {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        let note = match (v.pass, KNOWN_RED.contains(id)) {
            (false, true) => " [known red, see decisions ledger]",
            (true, true) => " [listed as known red but passing]",
            _ => "",
        };
        println!("criterion {id} {tag}: {name}: {}{note}", v.detail);
        if !v.pass && !KNOWN_RED.contains(id) {
            unexpected.push(*id);
        }
    }
    println!("acceptance finished in {:.1}s", start.elapsed().as_secs_f64());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
