//! Retrieval metrics: ranks, Recall@K, median rank and SumR in both
//! directions.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::Corpus;
use crate::error::{Error, Result};
use crate::matching::{similarity_matrix, SimilarityMatrix};
use crate::numerics::Matrix;
use crate::prototypes::{embed_texts, encode_video, HeadParameters, Variant};

/// Cutoffs reported for every direction.
pub const RECALL_CUTOFFS: [usize; 3] = [1, 5, 10];

/// Which retrieval directions a report covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directions {
    TextToVideo,
    VideoToText,
    Both,
}

impl Directions {
    fn text_to_video(self) -> bool {
        matches!(self, Directions::TextToVideo | Directions::Both)
    }

    fn video_to_text(self) -> bool {
        matches!(self, Directions::VideoToText | Directions::Both)
    }
}

/// R@1/5/10 (percent) and median rank for one direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionMetrics {
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    pub med_r: f64,
}

impl DirectionMetrics {
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        Ok(DirectionMetrics {
            r1: recall_at_k(ranks, 1)?,
            r5: recall_at_k(ranks, 5)?,
            r10: recall_at_k(ranks, 10)?,
            med_r: median_rank(ranks)?,
        })
    }

    pub fn recalls(&self) -> [f64; 3] {
        [self.r1, self.r5, self.r10]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub directions: Directions,
    pub text_to_video: Option<DirectionMetrics>,
    pub video_to_text: Option<DirectionMetrics>,
    /// Sum of every reported recall value.
    pub sum_r: f64,
}

impl RetrievalReport {
    pub fn new(text_to_video: Option<DirectionMetrics>, video_to_text: Option<DirectionMetrics>) -> Result<Self> {
        let directions = match (&text_to_video, &video_to_text) {
            (Some(_), Some(_)) => Directions::Both,
            (Some(_), None) => Directions::TextToVideo,
            (None, Some(_)) => Directions::VideoToText,
            (None, None) => return Err(Error::Argument("report needs at least one direction".into())),
        };
        let recalls: Vec<f64> = text_to_video
            .iter()
            .chain(&video_to_text)
            .flat_map(|m| m.recalls())
            .collect();
        Ok(RetrievalReport {
            directions,
            text_to_video,
            video_to_text,
            sum_r: sum_r(&recalls),
        })
    }
}

/// Optimistic 1-based rank of the best-scoring ground-truth item: one plus
/// the number of items scoring strictly above it.
pub fn rank_of(scores: &[f64], ground_truth: &[usize]) -> Result<usize> {
    if ground_truth.is_empty() {
        return Err(Error::Argument("rank_of needs at least one ground-truth index".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for &g in ground_truth {
        let s = *scores
            .get(g)
            .ok_or_else(|| Error::Argument(format!("ground-truth index {g} outside gallery of {}", scores.len())))?;
        best = best.max(s);
    }
    Ok(1 + scores.iter().filter(|&&s| s > best).count())
}

/// Percentage of ranks `<= k`.
pub fn recall_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::Argument("recall of an empty rank list".into()));
    }
    let hits = ranks.iter().filter(|&&r| r <= k).count();
    Ok(100.0 * hits as f64 / ranks.len() as f64)
}

/// Median with the midpoint convention for even counts.
pub fn median_rank(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::Argument("median of an empty rank list".into()));
    }
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    })
}

/// Sum of recall percentages, rounded to 1e-9 so that sums of one-decimal
/// table values come out as the nearest double to the decimal result.
pub fn sum_r(recalls: &[f64]) -> f64 {
    let s: f64 = recalls.iter().sum();
    libm::round(s * 1e9) / 1e9
}

/// Metrics from a text x video score matrix. `text_video[i]` is the ground
/// truth of text `i`; video-to-text queries use the best-ranked of the
/// video's texts.
pub fn report_from_scores(scores: &Matrix, text_video: &[usize], directions: Directions) -> Result<RetrievalReport> {
    if scores.rows() != text_video.len() {
        return Err(Error::shape(
            "report_from_scores",
            scores.shape(),
            (text_video.len(), 1),
        ));
    }
    let t2v = if directions.text_to_video() {
        let ranks = (0..scores.rows())
            .map(|i| rank_of(scores.row(i), &[text_video[i]]))
            .collect::<Result<Vec<_>>>()?;
        Some(DirectionMetrics::from_ranks(&ranks)?)
    } else {
        None
    };
    let v2t = if directions.video_to_text() {
        let mut captions = alloc::vec![Vec::new(); scores.cols()];
        for (t, &v) in text_video.iter().enumerate() {
            captions
                .get_mut(v)
                .ok_or_else(|| Error::Argument(format!("text {t} points at video {v} outside the gallery")))?
                .push(t);
        }
        let mut column = Vec::with_capacity(scores.rows());
        let ranks = (0..scores.cols())
            .map(|v| {
                column.clear();
                column.extend((0..scores.rows()).map(|t| scores[(t, v)]));
                rank_of(&column, &captions[v])
            })
            .collect::<Result<Vec<_>>>()?;
        Some(DirectionMetrics::from_ranks(&ranks)?)
    } else {
        None
    };
    RetrievalReport::new(t2v, v2t)
}

/// Full similarity matrix of every corpus text against every corpus video.
pub fn corpus_similarity(corpus: &Corpus, params: &HeadParameters, variant: Variant) -> Result<SimilarityMatrix> {
    let feats: Vec<&[f64]> = corpus.texts().iter().map(|t| t.features.as_slice()).collect();
    let texts = embed_texts(&Matrix::from_rows(&feats)?, params)?;
    let videos = corpus
        .videos()
        .iter()
        .map(|v| encode_video(&v.tokens, params, variant).map(|f| f.embedding.embedded))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Matrix> = videos.iter().collect();
    similarity_matrix(&texts.embedded, &refs)
}

/// Evaluates `params` on `corpus`.
pub fn evaluate(
    corpus: &Corpus,
    params: &HeadParameters,
    variant: Variant,
    directions: Directions,
) -> Result<RetrievalReport> {
    let sim = corpus_similarity(corpus, params, variant)?;
    let gt: Vec<usize> = (0..corpus.texts().len()).map(|t| corpus.video_of_text(t)).collect();
    report_from_scores(&sim.scores, &gt, directions)
}
