//! The operator commands. Each validates its inputs fully, then writes its
//! outputs under `RunConfig::run_dir`, labelled with the command name.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tmvm_core::dataset::{synth_corpus, Corpus};
use tmvm_core::diagnostics::{
    assignment_purity, intra_inter_stats, mask_heatmap, projected_text_matrix, prototype_diversity, raw_text_matrix,
    text_groups, DiversityStats, PurityStats,
};
use tmvm_core::eval::{corpus_similarity, evaluate};
use tmvm_core::numerics::RngStream;
use tmvm_core::prototypes::Variant;
use tmvm_core::trainer::{objective_gradcheck, CheckpointState, GradCheckShapes, Trainer};

use crate::artifacts::{
    append_train_log, read_checkpoint, report_json, report_table, similarity_csv, write_ambiguity, write_checkpoint,
    write_file, write_heatmap, TRAIN_LOG_HEADER,
};
use crate::config::{RunConfig, TextSpace};
use crate::corpus_io::{load_corpus, manifest_in, save_corpus};
use crate::error::{Error, Result};

/// Largest relative error the gradient check accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

/// RNG stream for diagnostics subsampling; training uses streams 0 and 1.
const DIAGNOSTICS_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Train,
    Eval,
    Gradcheck,
    Diagnose,
    Heatmap,
}

/// Where a command wrote its files and what it has to say about them.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub run_dir: PathBuf,
    pub summary: String,
}

pub fn run(command: Command, cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    cfg.validate()?;
    match command {
        Command::Synth => cmd_synth(cfg, out_dir),
        Command::Train => cmd_train(cfg, out_dir),
        Command::Eval => cmd_eval(cfg, out_dir),
        Command::Gradcheck => cmd_gradcheck(cfg, out_dir),
        Command::Diagnose => cmd_diagnose(cfg, out_dir),
        Command::Heatmap => cmd_heatmap(cfg, out_dir),
    }
}

fn obtain_corpus(cfg: &RunConfig) -> Result<Corpus> {
    match &cfg.corpus {
        Some(path) => load_corpus(path),
        None => Ok(synth_corpus(&cfg.synth)?),
    }
}

fn require<'a, T>(value: &'a Option<T>, key: &str, command: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| Error::Config(format!("`{command}` needs `{key}`")))
}

fn load_matching_checkpoint(path: &Path, corpus: &Corpus) -> Result<CheckpointState> {
    let state = read_checkpoint(path)?;
    let d = corpus.dims();
    let p = &state.params;
    if p.token_dim() != d.token_dim || p.text_dim() != d.text_dim {
        return Err(Error::Config(format!(
            "checkpoint {} expects token_dim {} / text_dim {}, corpus has {} / {}",
            path.display(),
            p.token_dim(),
            p.text_dim(),
            d.token_dim,
            d.text_dim
        )));
    }
    Ok(state)
}

fn start_run(cfg: &RunConfig, out_dir: &Path, label: &str) -> Result<PathBuf> {
    let dir = cfg.run_dir(out_dir, label);
    write_file(&dir.join("config.echo"), cfg.echo())?;
    Ok(dir)
}

pub fn cmd_synth(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let corpus = synth_corpus(&cfg.synth)?;
    let dir = start_run(cfg, out_dir, "synth")?;
    let manifest = manifest_in(&dir);
    save_corpus(&corpus, &manifest)?;
    Ok(Outcome {
        summary: format!(
            "{} videos, {} texts -> {}\n",
            corpus.videos().len(),
            corpus.texts().len(),
            manifest.display()
        ),
        run_dir: dir,
    })
}

pub fn cmd_train(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let corpus = obtain_corpus(cfg)?;
    let mut trainer = match &cfg.resume {
        Some(path) => {
            let state = load_matching_checkpoint(path, &corpus)?;
            if state.config != cfg.train {
                return Err(Error::Config(format!(
                    "checkpoint {} was written with a different training config",
                    path.display()
                )));
            }
            Trainer::resume(state, &corpus)?
        }
        None => Trainer::new(cfg.train.clone(), &corpus)?,
    };
    let dir = start_run(cfg, out_dir, "train")?;
    let log = dir.join("train_log.csv");
    write_file(&log, format!("{TRAIN_LOG_HEADER}\n"))?;
    append_train_log(&log, trainer.history())?;
    let every = cfg.train.checkpoint_every;
    while !trainer.is_finished() {
        let before = trainer.history().len();
        trainer.run_epoch(&corpus)?;
        append_train_log(&log, &trainer.history()[before..])?;
        if every > 0 && trainer.epoch() % every == 0 {
            let path = dir
                .join("checkpoints")
                .join(format!("epoch_{:04}.ckpt", trainer.epoch()));
            write_checkpoint(&path, &trainer.checkpoint())?;
        }
    }
    write_checkpoint(&dir.join("checkpoints").join("final.ckpt"), &trainer.checkpoint())?;
    let report = evaluate(&corpus, trainer.params(), cfg.train.variant, cfg.directions)?;
    let table = report_table(&report);
    write_file(&dir.join("report.json"), report_json(&report))?;
    write_file(&dir.join("report.txt"), &table)?;
    Ok(Outcome {
        run_dir: dir,
        summary: table,
    })
}

pub fn cmd_eval(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let path = require(&cfg.checkpoint, "checkpoint", "eval")?;
    let corpus = obtain_corpus(cfg)?;
    let state = load_matching_checkpoint(path, &corpus)?;
    let variant = state.config.variant;
    let report = evaluate(&corpus, &state.params, variant, cfg.directions)?;
    let sim = corpus_similarity(&corpus, &state.params, variant)?;
    let table = report_table(&report);
    let dir = start_run(cfg, out_dir, "eval")?;
    write_file(&dir.join("report.json"), report_json(&report))?;
    write_file(&dir.join("report.txt"), &table)?;
    write_file(&dir.join("similarity.csv"), similarity_csv(&corpus, &sim.scores))?;
    Ok(Outcome {
        run_dir: dir,
        summary: table,
    })
}

pub fn cmd_gradcheck(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let mut csv = String::from("variant,seed,attempts,max_rel_err,worst_index\n");
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for variant in [Variant::Mask, Variant::Part, Variant::Baseline] {
        let shapes = match variant {
            Variant::Baseline => GradCheckShapes {
                k: 0,
                ..GradCheckShapes::default()
            },
            _ => GradCheckShapes::default(),
        };
        for seed in cfg.train.seed..cfg.train.seed + cfg.gradcheck_seeds {
            let c = objective_gradcheck(seed, shapes, variant, &cfg.train.loss)?;
            let r = c.report;
            writeln!(
                csv,
                "{},{seed},{},{},{}",
                variant.name(),
                c.attempts,
                r.max_rel_err,
                r.worst_index
            )
            .unwrap();
            worst = worst.max(r.max_rel_err);
            if r.max_rel_err.is_nan() || r.max_rel_err >= GRADCHECK_TOLERANCE {
                failures.push(format!("{} seed {seed}: {:e}", variant.name(), r.max_rel_err));
            }
        }
    }
    let dir = start_run(cfg, out_dir, "gradcheck")?;
    write_file(&dir.join("gradcheck.csv"), csv)?;
    if !failures.is_empty() {
        return Err(Error::GradCheck(failures.join("; ")));
    }
    Ok(Outcome {
        run_dir: dir,
        summary: format!("max relative error {worst:e} (tolerance {GRADCHECK_TOLERANCE:e})\n"),
    })
}

#[derive(Debug, Serialize)]
struct PrototypeSummary {
    diversity: Option<DiversityStats>,
    purity: Option<PurityStats>,
}

pub fn cmd_diagnose(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let corpus = obtain_corpus(cfg)?;
    let state = cfg
        .checkpoint
        .as_ref()
        .map(|p| load_matching_checkpoint(p, &corpus))
        .transpose()?;
    let vectors = match cfg.text_space {
        TextSpace::Raw => raw_text_matrix(&corpus)?,
        TextSpace::Projected => {
            let state = state
                .as_ref()
                .ok_or_else(|| Error::Config("`text_space = projected` needs `checkpoint`".into()))?;
            projected_text_matrix(&corpus, &state.params)?
        }
    };
    let groups = text_groups(&corpus, &vectors)?;
    let mut rng = RngStream::with_stream(cfg.train.seed, DIAGNOSTICS_STREAM);
    let stats = intra_inter_stats(&groups, cfg.pair_cap, &mut rng)?;
    let prototypes = state.as_ref().map(|s| {
        let variant = s.config.variant;
        PrototypeSummary {
            diversity: prototype_diversity(&corpus, &s.params, variant).ok(),
            purity: assignment_purity(&corpus, &s.params, variant).ok(),
        }
    });
    let dir = start_run(cfg, out_dir, "diagnose")?;
    write_ambiguity(&dir, &corpus, &stats)?;
    if let Some(p) = prototypes {
        let mut json = serde_json::to_string_pretty(&p).expect("summary serializes");
        json.push('\n');
        write_file(&dir.join("prototypes.json"), json)?;
    }
    Ok(Outcome {
        run_dir: dir,
        summary: format!(
            "mean inter-caption similarity {:.4}; {:.1}% of videos have a less similar caption pair\n",
            stats.mean_inter,
            100.0 * stats.fraction_below
        ),
    })
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn cmd_heatmap(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let path = require(&cfg.checkpoint, "checkpoint", "heatmap")?;
    let video_id = require(&cfg.video_id, "video_id", "heatmap")?;
    let corpus = obtain_corpus(cfg)?;
    let state = load_matching_checkpoint(path, &corpus)?;
    if state.config.variant != Variant::Mask || state.params.k() == 0 {
        return Err(Error::Config(format!(
            "heatmaps need a mask-variant checkpoint with K >= 1, got {} with K = {}",
            state.config.variant.name(),
            state.params.k()
        )));
    }
    let v = corpus
        .video_index(video_id)
        .ok_or_else(|| Error::Config(format!("unknown video `{video_id}`")))?;
    let heatmap = mask_heatmap(&corpus.videos()[v].tokens, &state.params)?;
    let dir = start_run(cfg, out_dir, "heatmap")?;
    let stem = format!("heatmap_{}", file_stem(video_id));
    write_heatmap(&dir, &stem, &heatmap)?;
    Ok(Outcome {
        summary: format!(
            "{} x {} mask values -> {stem}.csv\n",
            heatmap.values.rows(),
            heatmap.values.cols()
        ),
        run_dir: dir,
    })
}
