//! Output files: checkpoints, training logs, reports and diagnostics.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a value
//! back gives the exact number that was computed.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use tmvm_core::dataset::Corpus;
use tmvm_core::diagnostics::{AmbiguityStats, MaskHeatmap};
use tmvm_core::eval::{DirectionMetrics, RetrievalReport};
use tmvm_core::trainer::{decode_checkpoint, encode_checkpoint, CheckpointState, StepRecord};
use tmvm_core::Matrix;

use crate::error::{Error, Result};

pub const TRAIN_LOG_HEADER: &str = "step,epoch,lr,contrastive,variance,total";

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(Error::io(parent))?;
    }
    fs::write(path, contents).map_err(Error::io(path))
}

pub fn write_checkpoint(path: &Path, state: &CheckpointState) -> Result<()> {
    write_file(path, encode_checkpoint(state))
}

pub fn read_checkpoint(path: &Path) -> Result<CheckpointState> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    Ok(decode_checkpoint(&bytes)?)
}

pub fn train_log_rows(records: &[StepRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let l = &r.loss;
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.step, r.epoch, r.lr, l.contrastive, l.variance, l.total
        )
        .unwrap();
    }
    s
}

/// Appends step records to a CSV log, writing the header when the file is new.
pub fn append_train_log(path: &Path, records: &[StepRecord]) -> Result<()> {
    let fresh = !path.exists();
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(Error::io(path))?;
    let mut body = String::new();
    if fresh {
        body.push_str(TRAIN_LOG_HEADER);
        body.push('\n');
    }
    body.push_str(&train_log_rows(records));
    f.write_all(body.as_bytes()).map_err(Error::io(path))
}

pub fn report_json(report: &RetrievalReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// Aligned plain-text table: R@1, R@5, R@10, MedR and SumR per direction.
pub fn report_table(report: &RetrievalReport) -> String {
    let mut s = format!(
        "{:<12}{:>8}{:>8}{:>8}{:>8}{:>8}\n",
        "direction", "R@1", "R@5", "R@10", "MedR", "SumR"
    );
    let mut row = |name: &str, m: &DirectionMetrics| {
        let sum = tmvm_core::eval::sum_r(&m.recalls());
        writeln!(
            s,
            "{:<12}{:>8.1}{:>8.1}{:>8.1}{:>8.1}{:>8.1}",
            name, m.r1, m.r5, m.r10, m.med_r, sum
        )
        .unwrap();
    };
    if let Some(m) = &report.text_to_video {
        row("text->video", m);
    }
    if let Some(m) = &report.video_to_text {
        row("video->text", m);
    }
    writeln!(s, "{:<12}{:>40.1}", "total", report.sum_r).unwrap();
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Text x video scores; header of video ids, one row per text id.
pub fn similarity_csv(corpus: &Corpus, scores: &Matrix) -> String {
    let mut s = String::from("text_id");
    for v in corpus.videos() {
        s.push(',');
        s.push_str(&csv_field(&v.id));
    }
    s.push('\n');
    for (t, text) in corpus.texts().iter().enumerate() {
        s.push_str(&csv_field(&text.id));
        for x in scores.row(t) {
            write!(s, ",{x}").unwrap();
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Serialize)]
struct AmbiguitySummary {
    mean_inter: f64,
    fraction_below: f64,
    inter_pairs: u64,
    inter_subsampled: bool,
    videos_with_intra: usize,
}

/// Writes `inter_hist.csv`, `min_intra.csv` and `summary.json` into `dir`.
pub fn write_ambiguity(dir: &Path, corpus: &Corpus, stats: &AmbiguityStats) -> Result<()> {
    let mut hist = String::from("bin_left,bin_right,count\n");
    for b in &stats.inter_hist {
        writeln!(hist, "{},{},{}", b.left, b.right, b.count).unwrap();
    }
    let mut intra = String::from("video_id,value\n");
    for &(v, value) in &stats.min_intra {
        writeln!(intra, "{},{value}", csv_field(&corpus.videos()[v].id)).unwrap();
    }
    let summary = AmbiguitySummary {
        mean_inter: stats.mean_inter,
        fraction_below: stats.fraction_below,
        inter_pairs: stats.inter_pairs,
        inter_subsampled: stats.inter_subsampled,
        videos_with_intra: stats.min_intra.len(),
    };
    write_file(&dir.join("inter_hist.csv"), hist)?;
    write_file(&dir.join("min_intra.csv"), intra)?;
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    write_file(&dir.join("summary.json"), json)
}

fn heatmap_csv(m: &Matrix) -> String {
    let mut s = String::from("prototype");
    for j in 0..m.cols() {
        write!(s, ",token_{j}").unwrap();
    }
    s.push('\n');
    for (k, row) in m.row_iter().enumerate() {
        write!(s, "{k}").unwrap();
        for x in row {
            write!(s, ",{x}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Writes `<stem>.csv` (raw K x B mask values) and `<stem>_normalized.csv`.
pub fn write_heatmap(dir: &Path, stem: &str, heatmap: &MaskHeatmap) -> Result<()> {
    write_file(&dir.join(format!("{stem}.csv")), heatmap_csv(&heatmap.values))?;
    write_file(
        &dir.join(format!("{stem}_normalized.csv")),
        heatmap_csv(&heatmap.normalized),
    )
}

/// Parses a heatmap CSV back into a matrix.
pub fn parse_heatmap_csv(text: &str) -> Result<Matrix> {
    let bad = |m: String| Error::Config(format!("heatmap csv: {m}"));
    let rows = text
        .lines()
        .skip(1)
        .map(|line| {
            line.split(',')
                .skip(1)
                .map(|f| f.parse::<f64>().map_err(|e| bad(format!("`{f}`: {e}"))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Matrix::from_rows(&rows)?)
}
