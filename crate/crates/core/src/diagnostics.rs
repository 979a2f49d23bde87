//! Caption ambiguity statistics and prototype interpretability measures.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::Corpus;
use crate::error::{Error, Result};
use crate::matching::tmvm_similarity;
use crate::numerics::{cosine, Matrix, RngStream};
use crate::prototypes::{compute_masks, embed_text, encode_video, HeadParameters, Variant};

pub const HIST_BINS: usize = 40;
/// Default cap on sampled inter-video caption pairs.
pub const DEFAULT_PAIR_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub left: f64,
    pub right: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityStats {
    /// Inter-video caption cosine histogram over `[-1, 1]`.
    pub inter_hist: Vec<HistBin>,
    /// `(video index, minimum intra-video caption cosine)` for every video
    /// with at least two captions.
    pub min_intra: Vec<(usize, f64)>,
    pub mean_inter: f64,
    /// Share of `min_intra` entries strictly below `mean_inter`.
    pub fraction_below: f64,
    pub inter_pairs: u64,
    pub inter_subsampled: bool,
}

fn bin_of(x: f64) -> usize {
    let t = (x.clamp(-1.0, 1.0) + 1.0) / 2.0 * HIST_BINS as f64;
    (t as usize).min(HIST_BINS - 1)
}

/// Caption vectors grouped by video, indexed like the corpus videos.
pub fn text_groups<'a>(corpus: &Corpus, vectors: &'a Matrix) -> Result<Vec<Vec<&'a [f64]>>> {
    if vectors.rows() != corpus.texts().len() {
        return Err(Error::shape("text_groups", vectors.shape(), (corpus.texts().len(), 0)));
    }
    Ok((0..corpus.videos().len())
        .map(|v| corpus.captions_of(v).iter().map(|&t| vectors.row(t)).collect())
        .collect())
}

/// Intra- and inter-video caption similarity statistics.
///
/// All inter-video pairs are used when there are at most `pair_cap` of them;
/// otherwise `pair_cap` pairs are drawn uniformly with `rng`.
pub fn intra_inter_stats(groups: &[Vec<&[f64]>], pair_cap: usize, rng: &mut RngStream) -> Result<AmbiguityStats> {
    let min_intra: Vec<(usize, f64)> = groups
        .iter()
        .enumerate()
        .filter(|(_, g)| g.len() >= 2)
        .map(|(v, g)| {
            let mut m = f64::INFINITY;
            for (i, a) in g.iter().enumerate() {
                for b in &g[i + 1..] {
                    m = m.min(cosine(a, b));
                }
            }
            (v, m)
        })
        .collect();
    if min_intra.is_empty() {
        return Err(Error::Argument(
            "intra-video similarity undefined: every video has a single caption".into(),
        ));
    }
    let non_empty = groups.iter().filter(|g| !g.is_empty()).count();
    if non_empty < 2 {
        return Err(Error::Argument(
            "inter-video similarity needs at least two videos".into(),
        ));
    }

    let flat: Vec<(usize, &[f64])> = groups
        .iter()
        .enumerate()
        .flat_map(|(v, g)| g.iter().map(move |t| (v, *t)))
        .collect();
    let sizes: Vec<u128> = groups.iter().map(|g| g.len() as u128).collect();
    let total: u128 = sizes.iter().sum();
    let same: u128 = sizes.iter().map(|s| s * s.saturating_sub(1) / 2).sum();
    let all_pairs = total * (total - 1) / 2 - same;

    let subsampled = all_pairs > pair_cap as u128;
    let mut sims = Vec::new();
    if subsampled {
        sims.reserve(pair_cap);
        while sims.len() < pair_cap {
            let (va, a) = flat[rng.below(flat.len())];
            let (vb, b) = flat[rng.below(flat.len())];
            if va != vb {
                sims.push(cosine(a, b));
            }
        }
    } else {
        for (i, (va, a)) in flat.iter().enumerate() {
            for (vb, b) in &flat[i + 1..] {
                if va != vb {
                    sims.push(cosine(a, b));
                }
            }
        }
    }
    let mut counts = vec![0u64; HIST_BINS];
    for &s in &sims {
        counts[bin_of(s)] += 1;
    }
    let n = sims.len() as u64;
    let sum: f64 = sims.iter().sum();
    let mean_inter = sum / n as f64;
    let below = min_intra.iter().filter(|(_, m)| *m < mean_inter).count();
    let width = 2.0 / HIST_BINS as f64;
    Ok(AmbiguityStats {
        inter_hist: counts
            .iter()
            .enumerate()
            .map(|(i, &count)| HistBin {
                left: -1.0 + i as f64 * width,
                right: -1.0 + (i + 1) as f64 * width,
                count,
            })
            .collect(),
        fraction_below: below as f64 / min_intra.len() as f64,
        min_intra,
        mean_inter,
        inter_pairs: n,
        inter_subsampled: subsampled,
    })
}

/// Raw caption features as an `N x D_t` matrix.
pub fn raw_text_matrix(corpus: &Corpus) -> Result<Matrix> {
    let rows: Vec<&[f64]> = corpus.texts().iter().map(|t| t.features.as_slice()).collect();
    Matrix::from_rows(&rows)
}

/// Caption features projected and normalized by the text head.
pub fn projected_text_matrix(corpus: &Corpus, params: &HeadParameters) -> Result<Matrix> {
    let rows = corpus
        .texts()
        .iter()
        .map(|t| embed_text(&t.features, params))
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityStats {
    /// Mean cosine over pairs of learned (non-class) embedded prototypes.
    pub mean_pairwise_cosine: f64,
    /// Mean over token positions of the population std of mask values pooled
    /// over videos and prototypes. `None` for the part variant.
    pub mean_token_mask_std: Option<f64>,
}

/// Diversity of the learned prototypes, averaged over the corpus.
pub fn prototype_diversity(corpus: &Corpus, params: &HeadParameters, variant: Variant) -> Result<DiversityStats> {
    let k = params.k();
    if k < 2 || variant == Variant::Baseline {
        return Err(Error::Argument(format!("prototype diversity needs K >= 2, got {k}")));
    }
    let mut cos_sum = 0.0;
    let mut cos_n = 0usize;
    let mut masks = Vec::new();
    for v in corpus.videos() {
        let f = encode_video(&v.tokens, params, variant)?;
        let e = f.embedded();
        for a in 0..k {
            for b in a + 1..k {
                cos_sum += cosine(e.row(a), e.row(b));
                cos_n += 1;
            }
        }
        masks.extend(f.masks);
    }
    let mean_token_mask_std = if masks.is_empty() {
        None
    } else {
        let tokens = masks[0].rows();
        let n = (masks.len() * k) as f64;
        let mut acc = 0.0;
        for j in 0..tokens {
            let mean = masks.iter().map(|m| m.row(j).iter().sum::<f64>()).sum::<f64>() / n;
            let var = masks
                .iter()
                .map(|m| m.row(j).iter().map(|x| (x - mean) * (x - mean)).sum::<f64>())
                .sum::<f64>()
                / n;
            acc += libm::sqrt(var);
        }
        Some(acc / tokens as f64)
    };
    Ok(DiversityStats {
        mean_pairwise_cosine: cos_sum / cos_n as f64,
        mean_token_mask_std,
    })
}

/// Agreement between each caption's winning prototype (against its own
/// video) and its latent event label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurityStats {
    /// Cluster purity: per video, captions are grouped by winning prototype
    /// and each group contributes its majority-label count.
    pub purity: f64,
    /// Share of same-video caption pairs for which "same winner" and "same
    /// event" agree.
    pub pairwise_agreement: f64,
    pub captions: usize,
}

pub fn assignment_purity(corpus: &Corpus, params: &HeadParameters, variant: Variant) -> Result<PurityStats> {
    let mut majority_total = 0usize;
    let mut captions = 0usize;
    let (mut agree, mut pairs) = (0usize, 0usize);
    for (v, video) in corpus.videos().iter().enumerate() {
        let f = encode_video(&video.tokens, params, variant)?;
        let mut labelled = Vec::new();
        for &t in corpus.captions_of(v) {
            let text = &corpus.texts()[t];
            let label = text
                .event_label
                .ok_or_else(|| Error::Argument(format!("text `{}` has no event label", text.id)))?;
            let (_, winner) = tmvm_similarity(&embed_text(&text.features, params)?, f.embedded())?;
            labelled.push((winner, label));
        }
        let mut clusters: BTreeMap<usize, BTreeMap<u32, usize>> = BTreeMap::new();
        for &(w, l) in &labelled {
            *clusters.entry(w).or_default().entry(l).or_default() += 1;
        }
        majority_total += clusters
            .values()
            .map(|c| c.values().copied().max().unwrap_or(0))
            .sum::<usize>();
        captions += labelled.len();
        for (i, a) in labelled.iter().enumerate() {
            for b in &labelled[i + 1..] {
                pairs += 1;
                if (a.0 == b.0) == (a.1 == b.1) {
                    agree += 1;
                }
            }
        }
    }
    if captions == 0 {
        return Err(Error::Argument("no captions to score".into()));
    }
    Ok(PurityStats {
        purity: majority_total as f64 / captions as f64,
        pairwise_agreement: if pairs == 0 { 1.0 } else { agree as f64 / pairs as f64 },
        captions,
    })
}

/// Mask values of one video laid out as `K x B` (prototype rows, token
/// columns), plus a copy with each row scaled to a maximum of one.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskHeatmap {
    pub values: Matrix,
    pub normalized: Matrix,
}

pub fn mask_heatmap(tokens: &Matrix, params: &HeadParameters) -> Result<MaskHeatmap> {
    let values = compute_masks(tokens, params)?.transpose();
    let mut normalized = values.clone();
    for i in 0..normalized.rows() {
        let row = normalized.row_mut(i);
        let max = row.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            row.iter_mut().for_each(|x| *x /= max);
        }
    }
    Ok(MaskHeatmap { values, normalized })
}
