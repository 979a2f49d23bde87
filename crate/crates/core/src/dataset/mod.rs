//! Corpus model, synthetic ambiguous-corpus generator and batch sampling.

mod batches;
mod synth;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub use batches::{make_batches, Batch};
pub use synth::{synth_corpus, SynthConfig};

/// One video's token features; row 0 is the class token.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub id: String,
    pub tokens: Matrix,
}

/// A caption's raw feature vector and its ground-truth video.
#[derive(Debug, Clone, PartialEq)]
pub struct TextRecord {
    pub id: String,
    pub video_id: String,
    pub features: Vec<f64>,
    /// Latent event the caption describes (synthetic corpora only).
    pub event_label: Option<u32>,
}

/// Shared shapes: tokens per video, token width, text feature width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDims {
    pub tokens: usize,
    pub token_dim: usize,
    pub text_dim: usize,
}

/// Validated, immutable collection of videos and captions.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    videos: Vec<VideoRecord>,
    texts: Vec<TextRecord>,
    dims: CorpusDims,
    text_video: Vec<usize>,
    captions: Vec<Vec<usize>>,
}

impl Corpus {
    /// Validates and indexes the records.
    ///
    /// Checks: at least one video, unique ids, uniform shapes, finite values,
    /// every text points at a known video and every video has a text.
    pub fn new(videos: Vec<VideoRecord>, texts: Vec<TextRecord>) -> Result<Self> {
        let first = videos
            .first()
            .ok_or_else(|| Error::Corpus("corpus has no videos".into()))?;
        let (tokens, token_dim) = first.tokens.shape();
        if tokens == 0 {
            return Err(Error::Corpus(format!("video `{}` has no tokens", first.id)));
        }
        let mut index = BTreeMap::new();
        for (i, v) in videos.iter().enumerate() {
            if index.insert(v.id.as_str(), i).is_some() {
                return Err(Error::Corpus(format!("duplicate video id `{}`", v.id)));
            }
            if v.tokens.shape() != (tokens, token_dim) {
                let (r, c) = v.tokens.shape();
                return Err(Error::Corpus(format!(
                    "video `{}` is {r}x{c}, expected {tokens}x{token_dim}",
                    v.id
                )));
            }
            if !v.tokens.is_finite() {
                return Err(Error::Corpus(format!("video `{}` has non-finite entries", v.id)));
            }
        }
        let text_dim = texts.first().map_or(0, |t| t.features.len());
        let mut text_ids = BTreeMap::new();
        let mut text_video = Vec::with_capacity(texts.len());
        let mut captions = vec![Vec::new(); videos.len()];
        for (i, t) in texts.iter().enumerate() {
            if text_ids.insert(t.id.as_str(), i).is_some() {
                return Err(Error::Corpus(format!("duplicate text id `{}`", t.id)));
            }
            let v = *index.get(t.video_id.as_str()).ok_or_else(|| Error::DanglingVideo {
                text_id: t.id.clone(),
                video_id: t.video_id.clone(),
            })?;
            if t.features.len() != text_dim {
                return Err(Error::Corpus(format!(
                    "text `{}` has {} features, expected {text_dim}",
                    t.id,
                    t.features.len()
                )));
            }
            if t.features.iter().any(|x| !x.is_finite()) {
                return Err(Error::Corpus(format!("text `{}` has non-finite features", t.id)));
            }
            text_video.push(v);
            captions[v].push(i);
        }
        if let Some(v) = captions.iter().position(|c| c.is_empty()) {
            return Err(Error::Corpus(format!("video `{}` has no text", videos[v].id)));
        }
        Ok(Corpus {
            dims: CorpusDims {
                tokens,
                token_dim,
                text_dim,
            },
            videos,
            texts,
            text_video,
            captions,
        })
    }

    pub fn videos(&self) -> &[VideoRecord] {
        &self.videos
    }

    pub fn texts(&self) -> &[TextRecord] {
        &self.texts
    }

    pub fn dims(&self) -> CorpusDims {
        self.dims
    }

    /// Index of the ground-truth video of text `t`.
    pub fn video_of_text(&self, t: usize) -> usize {
        self.text_video[t]
    }

    /// Text indices belonging to video `v`, in corpus order.
    pub fn captions_of(&self, v: usize) -> &[usize] {
        &self.captions[v]
    }

    pub fn video_index(&self, id: &str) -> Option<usize> {
        self.videos.iter().position(|v| v.id == id)
    }

    /// Copy with every value rounded through `f32`, the on-disk precision.
    pub fn to_storage_precision(&self) -> Corpus {
        let round = |x: &f64| *x as f32 as f64;
        let mut out = self.clone();
        for v in &mut out.videos {
            v.tokens = v.tokens.map(|x| x as f32 as f64);
        }
        for t in &mut out.texts {
            t.features = t.features.iter().map(round).collect();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn video(id: &str, rows: usize, cols: usize) -> VideoRecord {
        VideoRecord {
            id: id.to_string(),
            tokens: Matrix::filled(rows, cols, 0.5),
        }
    }

    fn text(id: &str, video: &str, dim: usize) -> TextRecord {
        TextRecord {
            id: id.to_string(),
            video_id: video.to_string(),
            features: vec![1.0; dim],
            event_label: None,
        }
    }

    #[test]
    fn small_corpus_indexes() {
        let c = Corpus::new(
            vec![video("v0", 5, 8), video("v1", 5, 8)],
            vec![text("t0", "v0", 6), text("t1", "v1", 6), text("t2", "v0", 6)],
        )
        .unwrap();
        assert_eq!(
            c.dims(),
            CorpusDims {
                tokens: 5,
                token_dim: 8,
                text_dim: 6
            }
        );
        assert_eq!(c.captions_of(0), &[0, 2]);
        assert_eq!(c.video_of_text(1), 1);
    }

    #[test]
    fn dangling_reference() {
        let err = Corpus::new(vec![video("v0", 2, 2)], vec![text("t0", "v0", 2), text("t1", "v9", 2)]).unwrap_err();
        assert_eq!(
            err,
            Error::DanglingVideo {
                text_id: "t1".into(),
                video_id: "v9".into()
            }
        );
    }

    #[test]
    fn video_without_text() {
        let err = Corpus::new(vec![video("v0", 2, 2), video("v1", 2, 2)], vec![text("t0", "v0", 2)]).unwrap_err();
        assert!(matches!(err, Error::Corpus(m) if m.contains("v1")));
        assert!(Corpus::new(vec![video("v0", 2, 2)], vec![]).is_err());
    }

    #[test]
    fn shape_and_id_checks() {
        assert!(Corpus::new(vec![video("v0", 2, 2), video("v1", 3, 2)], vec![text("t", "v0", 1)]).is_err());
        assert!(Corpus::new(vec![video("v0", 2, 2), video("v0", 2, 2)], vec![text("t", "v0", 1)]).is_err());
        assert!(Corpus::new(vec![video("v0", 2, 2)], vec![text("t", "v0", 1), text("t", "v0", 1)]).is_err());
        assert!(Corpus::new(vec![video("v0", 2, 2)], vec![text("a", "v0", 1), text("b", "v0", 2)]).is_err());
        assert!(Corpus::new(vec![video("v0", 0, 2)], vec![text("a", "v0", 1)]).is_err());
    }
}
