use alloc::format;
use alloc::vec::Vec;

use super::Corpus;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// `L` distinct videos, each paired with one of its captions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub videos: Vec<usize>,
    pub texts: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }
}

/// One epoch of batches: videos are permuted, chunked into groups of
/// `batch_size` (the remainder is dropped) and each video draws one caption
/// uniformly.
pub fn make_batches(corpus: &Corpus, batch_size: usize, rng: &mut RngStream) -> Result<Vec<Batch>> {
    let m = corpus.videos().len();
    if batch_size == 0 || batch_size > m {
        return Err(Error::Argument(format!(
            "batch_size {batch_size} must be in 1..={m} (number of videos)"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    rng.shuffle(&mut order);
    let batches = order
        .chunks_exact(batch_size)
        .map(|chunk| {
            let texts = chunk
                .iter()
                .map(|&v| {
                    let caps = corpus.captions_of(v);
                    caps[rng.below(caps.len())]
                })
                .collect();
            Batch {
                videos: chunk.to_vec(),
                texts,
            }
        })
        .collect();
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_corpus, SynthConfig};
    use alloc::collections::BTreeSet;

    fn corpus(videos: usize, captions: usize) -> Corpus {
        synth_corpus(&SynthConfig {
            num_videos: videos,
            captions_per_video: captions,
            latent_dim: 4,
            tokens: 4,
            token_dim: 3,
            text_dim: 2,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn counts_and_uniqueness() {
        let c = corpus(10, 2);
        let mut rng = RngStream::new(0);
        let b = make_batches(&c, 4, &mut rng).unwrap();
        assert_eq!(b.len(), 2);
        for batch in &b {
            let set: BTreeSet<_> = batch.videos.iter().collect();
            assert_eq!(set.len(), 4);
            for (&v, &t) in batch.videos.iter().zip(&batch.texts) {
                assert_eq!(c.video_of_text(t), v);
            }
        }
    }

    #[test]
    fn full_batch() {
        let c = corpus(6, 1);
        let b = make_batches(&c, 6, &mut RngStream::new(3)).unwrap();
        assert_eq!(b.len(), 1);
        let set: BTreeSet<_> = b[0].videos.iter().copied().collect();
        assert_eq!(set, (0..6).collect());
    }

    #[test]
    fn oversized_batch_rejected() {
        let c = corpus(3, 1);
        let err = make_batches(&c, 4, &mut RngStream::new(0)).unwrap_err();
        assert!(matches!(err, Error::Argument(m) if m.contains('4') && m.contains('3')));
    }

    #[test]
    fn caption_frequencies_uniform() {
        let c = corpus(8, 3);
        let mut rng = RngStream::new(42);
        let mut counts = [0usize; 3];
        let mut total = 0;
        for _ in 0..100 {
            for batch in make_batches(&c, 8, &mut rng).unwrap() {
                // Pooled by caption slot over all videos: 800 draws.
                for (&v, &t) in batch.videos.iter().zip(&batch.texts) {
                    let k = c.captions_of(v).iter().position(|&x| x == t).unwrap();
                    counts[k] += 1;
                    total += 1;
                }
            }
        }
        for n in counts {
            let f = n as f64 / total as f64;
            assert!((f - 1.0 / 3.0).abs() < 0.05, "{f}");
        }
    }
}
